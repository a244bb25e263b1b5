//! Model-free tabular Q-learning for the attack environment.
//!
//! Two storage backends share one training loop:
//!
//! - [`train_dense`] allocates the full `2^(n+m) * T` table up front and
//!   refuses to run past a configurable entry budget;
//! - [`train_improved`] keeps a map holding only visited states, and
//!   additionally records the running-mean return of every open-loop action
//!   sequence played during training. After training, the best recorded
//!   sequence competes with the greedy policy for the final answer
//!   ([`select_final_policy`]).
//!
//! With equal seeds the two backends visit identical trajectories and produce
//! identical values on every visited entry; the sparse variant simply never
//! materializes the rest of the table.

use std::collections::HashMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attack_env::{AttackAction, AttackEnv, MdpState, ProblemSpec, SpecError};
use crate::netlang::NetworkDef;
use crate::seeding;

/// Which learner backend to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    /// Full-table learner; memory `2^(n+m) * T` entries.
    Dense,
    /// Sparse learner with visited-sequence return tracking.
    Improved,
}

impl std::str::FromStr for Algo {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, TrainError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dense" => Ok(Algo::Dense),
            "improved" | "sparse" => Ok(Algo::Improved),
            other => Err(TrainError::Config {
                message: format!("unknown algorithm {other:?}, expected `dense` or `improved`"),
            }),
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algo::Dense => write!(f, "dense"),
            Algo::Improved => write!(f, "improved"),
        }
    }
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Step size in `(0, 1]`.
    pub alpha: f64,
    /// Discount rate in `(0, 1]`; training and return accounting use this
    /// value, which defaults to the problem's discount.
    pub gamma: f64,
    /// Exploration rate in `(0, 1)`.
    pub epsilon: f64,
    pub episodes: usize,
    pub seed: u64,
    pub algo: Algo,
    /// Initial best-return sentinel; must be below `-gamma^(T-1)` so any
    /// realizable return beats it.
    pub best_return_init: f64,
    /// Monte Carlo rollouts used when scoring the greedy policy during final
    /// policy selection.
    pub eval_rollouts: usize,
    /// Refuse dense training past this many table entries.
    pub dense_entry_budget: u128,
}

/// Default dense-table budget: `2^28` entries.
pub const DEFAULT_DENSE_ENTRY_BUDGET: u128 = 1 << 28;

impl LearnerConfig {
    /// Defaults for a problem: `alpha` 0.05, `epsilon` 0.05, 10_000 episodes,
    /// the problem's discount, and the sparse backend.
    pub fn for_spec(spec: &ProblemSpec) -> Self {
        LearnerConfig {
            alpha: 0.05,
            gamma: spec.gamma,
            epsilon: 0.05,
            episodes: 10_000,
            seed: 0,
            algo: Algo::Improved,
            best_return_init: default_best_return_init(spec.gamma, spec.horizon),
            eval_rollouts: 10_000,
            dense_entry_budget: DEFAULT_DENSE_ENTRY_BUDGET,
        }
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<(), TrainError> {
        let fail = |message: String| Err(TrainError::Config { message });
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return fail(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        let bound = -self.gamma.powi(spec.horizon.saturating_sub(1) as i32);
        if !(self.best_return_init < bound) {
            return fail(format!(
                "the best-return sentinel must be below -gamma^(T-1) = {bound}, got {}",
                self.best_return_init
            ));
        }
        Ok(())
    }
}

/// The default sentinel `-gamma^(T-1) - 1`, safely below every realizable
/// return.
pub fn default_best_return_init(gamma: f64, horizon: usize) -> f64 {
    -gamma.powi(horizon.saturating_sub(1) as i32) - 1.0
}

/// Training failures.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum TrainError {
    #[error(
        "dense table needs {entries} entries, over the {budget}-entry budget; \
         use the sparse learner (--algo improved)"
    )]
    TableOverBudget { entries: u128, budget: u128 },
    #[error("invalid learner configuration: {message}")]
    Config { message: String },
    #[error(transparent)]
    Spec(#[from] SpecError),
}

// ---------------------------------------------------------------------------
// Value storage

/// Read access to action values, shared by both backends and by exact policy
/// evaluation.
pub trait ActionValues {
    fn num_actions(&self) -> usize;
    /// Action-value row for a state; `None` when the state was never stored.
    fn values(&self, s: &MdpState) -> Option<&[f64]>;
}

/// Dense action-value table over `(state code, t, action code)`.
///
/// Terminal values are implicitly zero: the table only stores decision steps
/// `t < T`, and updates at the last step use zero in place of a next-state
/// maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQ {
    values: Vec<f64>,
    state_bits: usize,
    horizon: usize,
    n_actions: usize,
}

impl DenseQ {
    fn new(state_bits: usize, horizon: usize, n_actions: usize) -> Self {
        let len = (1usize << state_bits) * horizon * n_actions;
        DenseQ {
            values: vec![0.0; len],
            state_bits,
            horizon,
            n_actions,
        }
    }

    fn row_start(&self, s: &MdpState) -> usize {
        debug_assert!(s.t < self.horizon);
        (s.x.code() as usize * self.horizon + s.t) * self.n_actions
    }

    pub fn row(&self, s: &MdpState) -> &[f64] {
        let start = self.row_start(s);
        &self.values[start..start + self.n_actions]
    }

    pub fn value(&self, s: &MdpState, action: usize) -> f64 {
        self.values[self.row_start(s) + action]
    }

    pub fn entries(&self) -> usize {
        self.values.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Extracts the rows holding at least one nonzero value into a sparse
    /// table. Acting greedily on the result (with the no-attack fallback on
    /// missing rows) reproduces greedy behavior on the full table, since
    /// all-zero rows tie-break to the no-attack action anyway.
    pub fn to_sparse_nonzero(&self) -> SparseQ {
        let mut sparse = SparseQ::new(self.n_actions);
        let n_states = self.values.len() / (self.horizon * self.n_actions);
        for code in 0..n_states {
            for t in 0..self.horizon {
                let s = MdpState {
                    x: crate::pbcn::StateVec::from_bits(code as u64, self.state_bits),
                    t,
                };
                let row = self.row(&s);
                if row.iter().any(|v| *v != 0.0) {
                    sparse.ensure_row(&s);
                    for (a, v) in row.iter().enumerate() {
                        sparse.set(&s, a, *v);
                    }
                }
            }
        }
        sparse
    }
}

impl ActionValues for DenseQ {
    fn num_actions(&self) -> usize {
        self.n_actions
    }

    fn values(&self, s: &MdpState) -> Option<&[f64]> {
        (s.t < self.horizon).then(|| self.row(s))
    }
}

/// Sparse action-value table: rows exist only for visited states.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseQ {
    rows: HashMap<MdpState, Vec<f64>>,
    n_actions: usize,
}

impl SparseQ {
    pub fn new(n_actions: usize) -> Self {
        SparseQ {
            rows: HashMap::new(),
            n_actions,
        }
    }

    pub fn row(&self, s: &MdpState) -> Option<&[f64]> {
        self.rows.get(s).map(Vec::as_slice)
    }

    /// Number of stored states.
    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    /// Number of stored action values (states times actions).
    pub fn num_values(&self) -> usize {
        self.rows.len() * self.n_actions
    }

    pub fn states(&self) -> impl Iterator<Item = &MdpState> {
        self.rows.keys()
    }

    fn ensure_row(&mut self, s: &MdpState) {
        if !self.rows.contains_key(s) {
            self.rows.insert(*s, vec![0.0; self.n_actions]);
        }
    }

    fn set(&mut self, s: &MdpState, action: usize, value: f64) {
        self.rows
            .get_mut(s)
            .expect("row created on first visit")[action] = value;
    }
}

impl ActionValues for SparseQ {
    fn num_actions(&self) -> usize {
        self.n_actions
    }

    fn values(&self, s: &MdpState) -> Option<&[f64]> {
        self.row(s)
    }
}

// ---------------------------------------------------------------------------
// Elementary operations

/// Index of the largest value; ties go to the lowest index so learned
/// policies are reproducible.
pub fn greedy_index(row: &[f64]) -> usize {
    debug_assert!(!row.is_empty());
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Greedy action for a length-`2^m` action-value row.
pub fn greedy_action(row: &[f64]) -> AttackAction {
    debug_assert!(row.len().is_power_of_two());
    let m = row.len().trailing_zeros() as usize;
    AttackAction::from_bits(greedy_index(row) as u64, m)
}

/// One temporal-difference update:
/// `q + alpha * (reward + gamma * max_next - q)`.
pub fn ql_update(q_sa: f64, reward: f64, max_next: f64, alpha: f64, gamma: f64) -> f64 {
    q_sa + alpha * (reward + gamma * max_next - q_sa)
}

/// Epsilon-greedy action choice. Draws once for the explore test and, only
/// when exploring, once more for a uniform action over all `n_actions`.
pub(crate) fn epsilon_greedy_index<R, F>(
    rng: &mut R,
    epsilon: f64,
    n_actions: usize,
    greedy: F,
) -> usize
where
    R: Rng + ?Sized,
    F: FnOnce() -> usize,
{
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..n_actions)
    } else {
        greedy()
    }
}

// ---------------------------------------------------------------------------
// Visited-sequence return tracking

/// Running-mean returns of every open-loop action sequence played so far,
/// in first-visit order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VisitedReturns {
    map: IndexMap<Vec<u16>, (u64, f64)>,
}

impl VisitedReturns {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds one episode return into the sequence's running mean.
    pub fn record(&mut self, sequence: &[u16], episode_return: f64) {
        match self.map.get_mut(sequence) {
            Some((n, average)) => {
                *n += 1;
                *average += (episode_return - *average) / *n as f64;
            }
            None => {
                self.map.insert(sequence.to_vec(), (1, episode_return));
            }
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, sequence: &[u16]) -> Option<(u64, f64)> {
        self.map.get(sequence).copied()
    }

    /// `(visit count, average return)` per sequence, in first-visit order.
    pub fn iter(&self) -> impl Iterator<Item = (&[u16], u64, f64)> {
        self.map.iter().map(|(k, (n, avg))| (k.as_slice(), *n, *avg))
    }

    /// Best recorded average, scanning in first-visit order with a strict
    /// comparison, starting from `floor`. Returns `(floor, None)` when no
    /// sequence beats the floor.
    pub fn best(&self, floor: f64) -> (f64, Option<&[u16]>) {
        let mut best_return = floor;
        let mut best_seq = None;
        for (seq, (_, average)) in &self.map {
            if *average > best_return {
                best_return = *average;
                best_seq = Some(seq.as_slice());
            }
        }
        (best_return, best_seq)
    }
}

// ---------------------------------------------------------------------------
// Training

/// One logged transition, for offline audits of the update stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub episode: usize,
    pub t: usize,
    pub state: u64,
    pub action: u16,
    pub reward: f64,
    pub next_state: u64,
}

/// Storage interface used by the shared training loop. Row creation must not
/// consume randomness so both backends replay identical trajectories.
trait QBackend {
    /// Notes a visit, creating the row on first contact where applicable.
    fn touch(&mut self, s: &MdpState);
    fn value(&self, s: &MdpState, action: usize) -> f64;
    fn set(&mut self, s: &MdpState, action: usize, value: f64);
    fn greedy(&self, s: &MdpState) -> usize;
    fn max_value(&self, s: &MdpState) -> f64;
}

impl QBackend for DenseQ {
    fn touch(&mut self, _s: &MdpState) {}

    fn value(&self, s: &MdpState, action: usize) -> f64 {
        DenseQ::value(self, s, action)
    }

    fn set(&mut self, s: &MdpState, action: usize, value: f64) {
        let idx = self.row_start(s) + action;
        self.values[idx] = value;
    }

    fn greedy(&self, s: &MdpState) -> usize {
        greedy_index(self.row(s))
    }

    fn max_value(&self, s: &MdpState) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl QBackend for SparseQ {
    fn touch(&mut self, s: &MdpState) {
        self.ensure_row(s);
    }

    fn value(&self, s: &MdpState, action: usize) -> f64 {
        self.rows.get(s).map_or(0.0, |row| row[action])
    }

    fn set(&mut self, s: &MdpState, action: usize, value: f64) {
        SparseQ::set(self, s, action, value);
    }

    fn greedy(&self, s: &MdpState) -> usize {
        self.row(s).map_or(0, greedy_index)
    }

    fn max_value(&self, s: &MdpState) -> f64 {
        self.row(s)
            .map_or(0.0, |row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Epsilon-greedy episode loop with temporal-difference updates, shared by
/// both backends so that equal seeds give equal update streams.
fn run_training<Q: QBackend>(
    env: &AttackEnv<'_>,
    cfg: &LearnerConfig,
    q: &mut Q,
    mut log: Option<&mut Vec<TransitionRecord>>,
    mut on_episode: impl FnMut(usize, f64, &[u16]),
) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let horizon = env.spec().horizon;
    let n_actions = env.num_actions();
    let n_inputs = env.net().m;
    let mut actions = Vec::with_capacity(horizon);

    for episode in 0..cfg.episodes {
        let mut s = env.reset();
        q.touch(&s);
        let mut episode_return = 0.0;
        let mut discount = 1.0;
        actions.clear();

        for _ in 0..horizon {
            let action_idx =
                epsilon_greedy_index(&mut rng, cfg.epsilon, n_actions, || q.greedy(&s));
            let action = AttackAction::from_bits(action_idx as u64, n_inputs);
            let out = env
                .step(s, action, &mut rng)
                .expect("episode loop stays inside the horizon");
            q.touch(&out.next);
            let max_next = if out.next.t < horizon {
                q.max_value(&out.next)
            } else {
                0.0
            };
            let updated = ql_update(q.value(&s, action_idx), out.reward, max_next, cfg.alpha, cfg.gamma);
            q.set(&s, action_idx, updated);

            if let Some(records) = log.as_deref_mut() {
                records.push(TransitionRecord {
                    episode,
                    t: s.t,
                    state: s.x.code(),
                    action: action_idx as u16,
                    reward: out.reward,
                    next_state: out.next.x.code(),
                });
            }
            episode_return += discount * out.reward;
            discount *= cfg.gamma;
            actions.push(action_idx as u16);
            s = out.next;
        }
        on_episode(episode, episode_return, &actions);
    }
}

/// Result of a dense training run.
#[derive(Debug, Clone)]
pub struct DenseOutcome {
    pub q: DenseQ,
    /// Discounted return of each episode, in order.
    pub episode_returns: Vec<f64>,
}

/// Result of a sparse training run.
#[derive(Debug, Clone)]
pub struct ImprovedOutcome {
    pub q: SparseQ,
    pub visited: VisitedReturns,
    /// Best recorded average return (`best_return_init` if nothing was
    /// recorded).
    pub best_return: f64,
    /// The sequence achieving `best_return`; empty if nothing was recorded.
    pub best_sequence: Vec<AttackAction>,
    pub episode_returns: Vec<f64>,
}

/// Trains the dense learner. Refuses when the table would exceed the entry
/// budget.
pub fn train_dense(
    net: &NetworkDef,
    spec: &ProblemSpec,
    cfg: &LearnerConfig,
) -> Result<DenseOutcome, TrainError> {
    train_dense_logged(net, spec, cfg, None)
}

/// [`train_dense`] with an optional transition log.
pub fn train_dense_logged(
    net: &NetworkDef,
    spec: &ProblemSpec,
    cfg: &LearnerConfig,
    log: Option<&mut Vec<TransitionRecord>>,
) -> Result<DenseOutcome, TrainError> {
    cfg.validate(spec)?;
    let env = AttackEnv::new(net, spec)?;
    let entries = (1u128 << (net.n + net.m)) * spec.horizon as u128;
    if entries > cfg.dense_entry_budget {
        return Err(TrainError::TableOverBudget {
            entries,
            budget: cfg.dense_entry_budget,
        });
    }
    let mut q = DenseQ::new(net.n, spec.horizon, env.num_actions());
    let mut episode_returns = Vec::with_capacity(cfg.episodes);
    run_training(&env, cfg, &mut q, log, |_, ret, _| episode_returns.push(ret));
    Ok(DenseOutcome { q, episode_returns })
}

/// Trains the sparse learner and tracks visited-sequence returns.
pub fn train_improved(
    net: &NetworkDef,
    spec: &ProblemSpec,
    cfg: &LearnerConfig,
) -> Result<ImprovedOutcome, TrainError> {
    train_improved_logged(net, spec, cfg, None)
}

/// [`train_improved`] with an optional transition log.
pub fn train_improved_logged(
    net: &NetworkDef,
    spec: &ProblemSpec,
    cfg: &LearnerConfig,
    log: Option<&mut Vec<TransitionRecord>>,
) -> Result<ImprovedOutcome, TrainError> {
    cfg.validate(spec)?;
    let env = AttackEnv::new(net, spec)?;
    let mut q = SparseQ::new(env.num_actions());
    let mut visited = VisitedReturns::new();
    let mut episode_returns = Vec::with_capacity(cfg.episodes);
    run_training(&env, cfg, &mut q, log, |_, ret, actions| {
        visited.record(actions, ret);
        episode_returns.push(ret);
    });
    let (best_return, best_seq) = visited.best(cfg.best_return_init);
    let best_sequence = best_seq
        .map(|seq| {
            seq.iter()
                .map(|code| AttackAction::from_bits(*code as u64, net.m))
                .collect()
        })
        .unwrap_or_default();
    Ok(ImprovedOutcome {
        q,
        visited,
        best_return,
        best_sequence,
        episode_returns,
    })
}

// ---------------------------------------------------------------------------
// Final policy

/// The policy a training run hands to its caller.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    /// Act greedily on the learned values; unvisited states fall back to the
    /// no-attack action.
    GreedyFromQ(SparseQ),
    /// Replay a fixed action sequence, one action per time step.
    OpenLoop(Vec<AttackAction>),
}

/// A selected policy together with its estimated expected return (the Monte
/// Carlo estimate for greedy policies, the recorded training average for
/// open-loop sequences).
#[derive(Debug, Clone, PartialEq)]
pub struct FinalPolicy {
    pub kind: PolicyKind,
    pub estimated_return: f64,
}

impl FinalPolicy {
    /// The action this policy takes in `s`.
    pub fn action(&self, s: &MdpState) -> AttackAction {
        match &self.kind {
            PolicyKind::GreedyFromQ(q) => match q.values(s) {
                Some(row) => greedy_action(row),
                None => {
                    let m = q.num_actions().trailing_zeros() as usize;
                    log::warn!("greedy policy has no values for {s}; falling back to no-attack");
                    AttackAction::no_attack(m)
                }
            },
            PolicyKind::OpenLoop(seq) => seq[s.t],
        }
    }

    /// Serializes to the textual policy-file form.
    pub fn to_text(&self, state_bits: usize) -> String {
        let mut out = String::new();
        out.push_str("# attack policy\n");
        match &self.kind {
            PolicyKind::OpenLoop(seq) => {
                let m = seq.first().map_or(0, |a| a.len());
                out.push_str("kind: open_loop\n");
                let _ = writeln!(out, "nodes: {state_bits}");
                let _ = writeln!(out, "inputs: {m}");
                let _ = writeln!(out, "T: {}", seq.len());
                let _ = writeln!(out, "estimated_return: {}", self.estimated_return);
                for a in seq {
                    let _ = writeln!(out, "seq: {a}");
                }
            }
            PolicyKind::GreedyFromQ(q) => {
                let m = q.num_actions().trailing_zeros() as usize;
                out.push_str("kind: greedy\n");
                let _ = writeln!(out, "nodes: {state_bits}");
                let _ = writeln!(out, "inputs: {m}");
                let _ = writeln!(out, "estimated_return: {}", self.estimated_return);
                let mut states: Vec<&MdpState> = q.states().collect();
                states.sort_by_key(|s| (s.t, s.x.code()));
                for s in states {
                    let row = q.row(s).expect("stored state has a row");
                    let _ = write!(out, "q: {} {}", s.t, s.x.code());
                    for v in row {
                        let _ = write!(out, " {v}");
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    /// Parses the textual policy-file form.
    pub fn from_text(text: &str) -> Result<Self, PolicyParseError> {
        let perr = |line: usize, message: String| PolicyParseError { line, message };
        let mut kind_tag: Option<String> = None;
        let mut nodes: Option<usize> = None;
        let mut inputs: Option<usize> = None;
        let mut estimated: Option<f64> = None;
        let mut seq: Vec<AttackAction> = Vec::new();
        let mut rows: Vec<(MdpState, Vec<f64>)> = Vec::new();

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
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| perr(line_no, format!("expected `key: value`, found {line:?}")))?;
            let value = value.trim();
            match key.trim() {
                "kind" => kind_tag = Some(value.to_string()),
                "nodes" => {
                    nodes = Some(value.parse().map_err(|_| {
                        perr(line_no, format!("bad node count {value:?}"))
                    })?)
                }
                "inputs" => {
                    inputs = Some(value.parse().map_err(|_| {
                        perr(line_no, format!("bad input count {value:?}"))
                    })?)
                }
                "T" => {} // redundant with the row count
                "estimated_return" => {
                    estimated = Some(value.parse().map_err(|_| {
                        perr(line_no, format!("bad estimated return {value:?}"))
                    })?)
                }
                "seq" => {
                    seq.push(value.parse().map_err(|e| {
                        perr(line_no, format!("bad action row: {e}"))
                    })?)
                }
                "q" => {
                    let mut parts = value.split_whitespace();
                    let t: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| perr(line_no, "bad q row: missing time index".into()))?;
                    let code: u64 = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| perr(line_no, "bad q row: missing state code".into()))?;
                    let values: Vec<f64> = parts
                        .map(|p| p.parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| perr(line_no, "bad q row: malformed value".into()))?;
                    let n = nodes
                        .ok_or_else(|| perr(line_no, "`nodes:` must precede the q rows".into()))?;
                    rows.push((
                        MdpState {
                            x: crate::pbcn::StateVec::from_bits(code, n),
                            t,
                        },
                        values,
                    ));
                }
                other => return Err(perr(line_no, format!("unknown key {other:?}"))),
            }
        }

        let estimated_return = estimated
            .ok_or_else(|| perr(0, "policy file is missing `estimated_return:`".into()))?;
        match kind_tag.as_deref() {
            Some("open_loop") => Ok(FinalPolicy {
                kind: PolicyKind::OpenLoop(seq),
                estimated_return,
            }),
            Some("greedy") => {
                let m =
                    inputs.ok_or_else(|| perr(0, "policy file is missing `inputs:`".into()))?;
                let n_actions = 1usize << m;
                let mut q = SparseQ::new(n_actions);
                for (s, values) in rows {
                    if values.len() != n_actions {
                        return Err(perr(
                            0,
                            format!("q row for {s} has {} values, expected {n_actions}", values.len()),
                        ));
                    }
                    q.ensure_row(&s);
                    for (a, v) in values.iter().enumerate() {
                        q.set(&s, a, *v);
                    }
                }
                Ok(FinalPolicy {
                    kind: PolicyKind::GreedyFromQ(q),
                    estimated_return,
                })
            }
            Some(other) => Err(perr(0, format!("unknown policy kind {other:?}"))),
            None => Err(perr(0, "policy file is missing `kind:`".into())),
        }
    }
}

/// Malformed policy file.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("policy file, line {line}: {message}")]
pub struct PolicyParseError {
    pub line: usize,
    pub message: String,
}

/// Monte Carlo estimate of a policy's expected return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub rollouts: usize,
}

/// Scores a policy by `rollouts` independent episodes. Model-free: only the
/// environment's step interface is used.
pub fn evaluate_policy_mc(
    net: &NetworkDef,
    spec: &ProblemSpec,
    policy: &FinalPolicy,
    rollouts: usize,
    seed: u64,
) -> McEstimate {
    assert!(rollouts >= 1, "at least one rollout is required");
    let env = AttackEnv::new(net, spec).expect("validated problem");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..rollouts {
        let mut s = env.reset();
        let mut ret = 0.0;
        let mut discount = 1.0;
        for _ in 0..spec.horizon {
            let a = policy.action(&s);
            let out = env.step(s, a, &mut rng).expect("inside the horizon");
            ret += discount * out.reward;
            discount *= spec.gamma;
            s = out.next;
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let k = rollouts as f64;
    let mean = sum / k;
    let std_err = if rollouts > 1 {
        let var = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    McEstimate {
        mean,
        std_err,
        rollouts,
    }
}

/// Picks the final policy of a sparse training run: the greedy policy's
/// Monte Carlo estimate competes with the best recorded sequence average,
/// higher estimate wins, ties favor the greedy policy.
pub fn select_final_policy(
    net: &NetworkDef,
    spec: &ProblemSpec,
    cfg: &LearnerConfig,
    outcome: &ImprovedOutcome,
) -> FinalPolicy {
    let greedy = FinalPolicy {
        kind: PolicyKind::GreedyFromQ(outcome.q.clone()),
        estimated_return: 0.0,
    };
    let estimate = evaluate_policy_mc(
        net,
        spec,
        &greedy,
        cfg.eval_rollouts,
        seeding::eval_seed(cfg.seed),
    );
    if outcome.best_sequence.len() == spec.horizon && outcome.best_return > estimate.mean {
        FinalPolicy {
            kind: PolicyKind::OpenLoop(outcome.best_sequence.clone()),
            estimated_return: outcome.best_return,
        }
    } else {
        FinalPolicy {
            kind: greedy.kind,
            estimated_return: estimate.mean,
        }
    }
}

#[cfg(test)]
mod tests;
