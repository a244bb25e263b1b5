//! The finite-horizon attack decision process.
//!
//! At each step the attacker picks an [`AttackAction`] (a subset of control
//! bits to invert), the corrupted input drives one network step, and the
//! environment pays a reward that depends on the problem variant:
//!
//! - `P1`: reach the target state at the horizon;
//! - `P2`: additionally pay `r'` for every time step with an attack;
//! - `P3`: additionally pay `r'` per attacked control bit.
//!
//! Only [`StepOutcome`] values cross the environment boundary, so learners
//! stay model-free by construction.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::netlang::NetworkDef;
use crate::pbcn::{bitvec_type, step_sample, InputVec, StateVec};

bitvec_type!(
    /// Attack vector `a(t)`; bit `i-1` set means control `u_i` is inverted.
    AttackAction
);

impl AttackAction {
    /// The no-attack action: every control bit left intact.
    pub fn no_attack(m: usize) -> Self {
        AttackAction::zeros(m)
    }

    pub fn is_no_attack(&self) -> bool {
        self.code() == 0
    }

    /// Number of attacked control bits.
    pub fn hamming_weight(&self) -> u32 {
        self.count_ones()
    }
}

/// Applies an attack to a control vector: bitwise XOR.
///
/// Panics if the lengths differ.
pub fn apply_attack(u: InputVec, a: AttackAction) -> InputVec {
    assert_eq!(u.len(), a.len(), "control/attack length mismatch");
    InputVec::from_bits(u.code() ^ a.code(), u.len())
}

/// The three reward designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    /// Reach the target at the horizon with maximal probability.
    P1,
    /// Reach the target; each attacked time step costs `r'`.
    P2,
    /// Reach the target; each attacked control bit costs `r'`.
    P3,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemKind::P1 => write!(f, "P1"),
            ProblemKind::P2 => write!(f, "P2"),
            ProblemKind::P3 => write!(f, "P3"),
        }
    }
}

impl FromStr for ProblemKind {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        match s.trim().to_ascii_uppercase().as_str() {
            "P1" | "1" => Ok(ProblemKind::P1),
            "P2" | "2" => Ok(ProblemKind::P2),
            "P3" | "3" => Ok(ProblemKind::P3),
            other => Err(SpecError::Invalid {
                message: format!("unknown problem kind {other:?}, expected P1, P2 or P3"),
            }),
        }
    }
}

/// State of the decision process: network state plus the time index.
/// States with `t` equal to the horizon are terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MdpState {
    pub x: StateVec,
    pub t: usize,
}

impl fmt::Display for MdpState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, t={})", self.x, self.t)
    }
}

/// A fully specified attack problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Horizon `T` in steps.
    pub horizon: usize,
    /// Target state the attacker wants at time `T`.
    pub target: StateVec,
    /// Per-attack penalty for `P2`/`P3`; unused by `P1`.
    pub rprime: f64,
    /// Discount rate in `(0, 1]`.
    pub gamma: f64,
    /// Nominal (unattacked) controls `U(0) ... U(T-1)`.
    pub nominal: Vec<InputVec>,
    /// Initial network state `X(0)`.
    pub initial: StateVec,
}

impl ProblemSpec {
    /// Convenience constructor with discount 1 and all-zero nominal controls.
    pub fn new(
        kind: ProblemKind,
        horizon: usize,
        initial: StateVec,
        target: StateVec,
        rprime: f64,
        m: usize,
    ) -> Self {
        ProblemSpec {
            kind,
            horizon,
            target,
            rprime,
            gamma: 1.0,
            nominal: vec![InputVec::zeros(m); horizon],
            initial,
        }
    }

    /// Number of control inputs, taken from the nominal sequence.
    pub fn num_inputs(&self) -> usize {
        self.nominal.first().map_or(0, |u| u.len())
    }

    /// Number of attack actions available at each step.
    pub fn num_actions(&self) -> usize {
        1usize << self.num_inputs()
    }

    /// Checks dimensional consistency against a network plus the parameter
    /// ranges, including the `r'` bound of the problem kind.
    pub fn validate(&self, net: &NetworkDef) -> Result<(), SpecError> {
        let fail = |message: String| Err(SpecError::Invalid { message });
        if self.horizon == 0 {
            return fail("the horizon must be at least 1".into());
        }
        if self.initial.len() != net.n {
            return fail(format!(
                "initial state has {} bits, the network has {} nodes",
                self.initial.len(),
                net.n
            ));
        }
        if self.target.len() != net.n {
            return fail(format!(
                "target state has {} bits, the network has {} nodes",
                self.target.len(),
                net.n
            ));
        }
        if self.nominal.len() != self.horizon {
            return fail(format!(
                "expected {} nominal control rows, found {}",
                self.horizon,
                self.nominal.len()
            ));
        }
        if let Some(u) = self.nominal.iter().find(|u| u.len() != net.m) {
            return fail(format!(
                "nominal control row has {} bits, the network has {} inputs",
                u.len(),
                net.m
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        validate_rprime(self.kind, self.rprime, self.horizon, net.m)?;
        Ok(())
    }

    /// Reward paid on the transition from time `t` to `t + 1`.
    ///
    /// `a` is the attack applied at `t` and `x_next` the sampled state at
    /// `t + 1`. Panics if `t` is not a decision step (`t >= horizon`).
    pub fn reward(&self, t: usize, a: AttackAction, x_next: StateVec) -> f64 {
        assert!(t < self.horizon, "reward queried past the horizon");
        let last = t == self.horizon - 1;
        let hit = x_next == self.target;
        match self.kind {
            ProblemKind::P1 => {
                if last && hit {
                    1.0
                } else {
                    0.0
                }
            }
            ProblemKind::P2 => {
                let clean = a.is_no_attack();
                if !last {
                    if clean {
                        0.0
                    } else {
                        self.rprime
                    }
                } else {
                    match (clean, hit) {
                        (true, true) => 1.0,
                        (false, true) => 1.0 + self.rprime,
                        (true, false) => 0.0,
                        (false, false) => self.rprime,
                    }
                }
            }
            ProblemKind::P3 => {
                let cost = self.rprime * f64::from(a.hamming_weight());
                if last && hit {
                    1.0 + cost
                } else {
                    cost
                }
            }
        }
    }
}

/// Checks the penalty bound for a problem kind: `P2` needs
/// `-1/T < r' < 0`, `P3` needs `-1/(mT) < r' < 0`, `P1` has no constraint.
///
/// These bounds keep every certainly-successful attack sequence strictly
/// ahead of every sequence that can miss the target.
pub fn validate_rprime(
    kind: ProblemKind,
    rprime: f64,
    horizon: usize,
    m: usize,
) -> Result<(), RPrimeViolation> {
    let lower = match kind {
        ProblemKind::P1 => return Ok(()),
        ProblemKind::P2 => -1.0 / horizon as f64,
        ProblemKind::P3 => {
            if m == 0 {
                f64::NEG_INFINITY
            } else {
                -1.0 / (m * horizon) as f64
            }
        }
    };
    if rprime > lower && rprime < 0.0 {
        Ok(())
    } else {
        Err(RPrimeViolation {
            kind,
            rprime,
            lower,
        })
    }
}

/// A rejected `r'` value, with the required open interval and the margin by
/// which the value misses it.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub struct RPrimeViolation {
    pub kind: ProblemKind,
    pub rprime: f64,
    pub lower: f64,
}

impl fmt::Display for RPrimeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let margin = if self.rprime <= self.lower {
            self.lower - self.rprime
        } else {
            self.rprime
        };
        write!(
            f,
            "problem {}: r' must satisfy {} < r' < 0, got {} (outside by {})",
            self.kind, self.lower, self.rprime, margin
        )
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: MdpState,
    pub reward: f64,
    /// True exactly when `next.t` equals the horizon.
    pub done: bool,
}

/// Attempt to advance an episode that already reached the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot step a terminal state (t = {t} is the horizon)")]
pub struct TerminalStep {
    pub t: usize,
}

/// Episodic environment binding a network to a problem instance.
///
/// Instances are stateless between calls; a caller owns the current
/// [`MdpState`] and the random stream, so independent episode streams can
/// run in parallel against shared borrows.
#[derive(Debug, Clone, Copy)]
pub struct AttackEnv<'a> {
    net: &'a NetworkDef,
    spec: &'a ProblemSpec,
}

impl<'a> AttackEnv<'a> {
    /// Validates the pair once and returns the environment.
    pub fn new(net: &'a NetworkDef, spec: &'a ProblemSpec) -> Result<Self, SpecError> {
        spec.validate(net)?;
        Ok(AttackEnv { net, spec })
    }

    pub fn net(&self) -> &'a NetworkDef {
        self.net
    }

    pub fn spec(&self) -> &'a ProblemSpec {
        self.spec
    }

    pub fn num_actions(&self) -> usize {
        1usize << self.net.m
    }

    /// Starts an episode at `(X(0), 0)`.
    pub fn reset(&self) -> MdpState {
        MdpState {
            x: self.spec.initial,
            t: 0,
        }
    }

    /// Applies `a` to the nominal control at `s.t`, samples one network step
    /// and pays the problem reward.
    pub fn step<R: Rng + ?Sized>(
        &self,
        s: MdpState,
        a: AttackAction,
        rng: &mut R,
    ) -> Result<StepOutcome, TerminalStep> {
        if s.t >= self.spec.horizon {
            return Err(TerminalStep { t: s.t });
        }
        let u = apply_attack(self.spec.nominal[s.t], a);
        let x_next = step_sample(self.net, s.x, u, rng);
        let reward = self.spec.reward(s.t, a, x_next);
        let next = MdpState {
            x: x_next,
            t: s.t + 1,
        };
        Ok(StepOutcome {
            next,
            reward,
            done: next.t == self.spec.horizon,
        })
    }
}

/// Errors from problem files and problem validation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpecError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    RPrime(#[from] RPrimeViolation),
    #[error("{message}")]
    Invalid { message: String },
}

/// A parsed problem file, not yet checked against its network.
///
/// The `network` field is the path as written in the file, to be resolved
/// relative to the file's own directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    pub network: String,
    pub kind: ProblemKind,
    pub horizon: usize,
    pub initial: StateVec,
    pub target: StateVec,
    pub rprime: f64,
    pub gamma: f64,
    /// `None` means "all zeros", which needs the network's input count.
    pub nominal: Option<Vec<InputVec>>,
}

impl SpecFile {
    /// Fills defaults against the network and validates everything.
    pub fn resolve(&self, net: &NetworkDef) -> Result<ProblemSpec, SpecError> {
        let nominal = match &self.nominal {
            Some(rows) => rows.clone(),
            None => vec![InputVec::zeros(net.m); self.horizon],
        };
        let spec = ProblemSpec {
            kind: self.kind,
            horizon: self.horizon,
            target: self.target,
            rprime: self.rprime,
            gamma: self.gamma,
            nominal,
            initial: self.initial,
        };
        spec.validate(net)?;
        Ok(spec)
    }
}

/// Parses a problem file.
///
/// ```text
/// network: lac10.net
/// kind: P2
/// T: 5
/// initial: (0, 0, 0, 0, 1, 1, 0, 0, 0, 0)
/// target: (0, 0, 0, 1, 1, 1, 0, 0, 0, 0)
/// rprime: -0.1
/// gamma: 1
/// nominal:
/// 0 0 0
/// 0 0 0
/// 0 0 0
/// 0 0 0
/// 0 0 0
/// ```
///
/// `rprime` defaults to 0 (and is ignored) for `P1`; `gamma` defaults to 1;
/// a missing `nominal:` section means all-zero controls. `#` starts a
/// comment.
pub fn parse_spec_file(text: &str) -> Result<SpecFile, SpecError> {
    let mut network = None;
    let mut kind = None;
    let mut horizon = None;
    let mut initial = None;
    let mut target = None;
    let mut rprime = None;
    let mut gamma = None;
    let mut nominal: Option<Vec<InputVec>> = None;
    let mut in_nominal = false;

    let perr = |line: usize, message: String| SpecError::Parse { line, message };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if in_nominal {
            if line.contains(':') {
                in_nominal = false; // fall through to header handling
            } else {
                let row: InputVec = line
                    .parse()
                    .map_err(|e| perr(line_no, format!("bad nominal control row: {e}")))?;
                nominal.get_or_insert_with(Vec::new).push(row);
                continue;
            }
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| perr(line_no, format!("expected `key: value`, found {line:?}")))?;
        let value = value.trim();
        match key.trim() {
            "network" => network = Some(value.to_string()),
            "kind" | "problem" => {
                kind = Some(value.parse().map_err(|e| perr(line_no, format!("{e}")))?)
            }
            "T" | "horizon" => {
                horizon = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| perr(line_no, format!("bad horizon {value:?}")))?,
                )
            }
            "initial" => {
                initial = Some(
                    value
                        .parse::<StateVec>()
                        .map_err(|e| perr(line_no, format!("bad initial state: {e}")))?,
                )
            }
            "target" => {
                target = Some(
                    value
                        .parse::<StateVec>()
                        .map_err(|e| perr(line_no, format!("bad target state: {e}")))?,
                )
            }
            "rprime" => {
                rprime = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| perr(line_no, format!("bad rprime {value:?}")))?,
                )
            }
            "gamma" => {
                gamma = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| perr(line_no, format!("bad gamma {value:?}")))?,
                )
            }
            "nominal" => {
                if !value.is_empty() {
                    return Err(perr(line_no, "`nominal:` takes its rows on the following lines".into()));
                }
                in_nominal = true;
            }
            other => return Err(perr(line_no, format!("unknown key {other:?}"))),
        }
    }

    let missing = |what: &str| SpecError::Invalid {
        message: format!("problem file is missing `{what}:`"),
    };
    Ok(SpecFile {
        network: network.ok_or_else(|| missing("network"))?,
        kind: kind.ok_or_else(|| missing("kind"))?,
        horizon: horizon.ok_or_else(|| missing("T"))?,
        initial: initial.ok_or_else(|| missing("initial"))?,
        target: target.ok_or_else(|| missing("target"))?,
        rprime: rprime.unwrap_or(0.0),
        gamma: gamma.unwrap_or(1.0),
        nominal,
    })
}

#[cfg(test)]
mod tests;
