//! Exact finite-horizon solver over the reachable state set.
//!
//! This module knows the transition model; it exists to certify learners and
//! experiment results, and nothing in [`crate::qlearn`] depends on it. All
//! set and distribution iteration is order-stable so repeated runs produce
//! bit-identical numbers.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::attack_env::{apply_attack, AttackAction, MdpState, ProblemSpec};
use crate::netlang::NetworkDef;
use crate::pbcn::{transition_distribution, StateVec};
use crate::qlearn::{greedy_index, ActionValues, FinalPolicy, PolicyKind};

/// Default per-layer cap on reachable-set construction.
pub const DEFAULT_LAYER_CAP: usize = 1_000_000;

/// Guard on `m * T` for exhaustive open-loop enumeration (`2^(mT)` rows).
pub const ENUMERATION_GUARD_BITS: usize = 12;

/// Oracle failures.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("reachable layer {t} holds {size} states, over the {cap}-state cap")]
    LayerCapExceeded { t: usize, size: usize, cap: usize },
    #[error(
        "open-loop enumeration needs 2^{bits} sequences, over the 2^{guard} guard"
    )]
    EnumerationGuard { bits: usize, guard: usize },
}

/// States reachable from the initial state at each time `0..=T`, under any
/// attack sequence. Each layer is sorted by state code.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachableLayers {
    pub layers: Vec<Vec<StateVec>>,
}

impl ReachableLayers {
    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }
}

/// Forward breadth-first closure of the attack process.
///
/// Layer `t+1` is the union over layer-`t` states and all `2^m` attack
/// actions of the support of the exact transition distribution.
pub fn reachable_states(
    net: &NetworkDef,
    spec: &ProblemSpec,
    layer_cap: usize,
) -> Result<ReachableLayers, OracleError> {
    let n_actions = 1u64 << net.m;
    let mut layers = vec![vec![spec.initial]];
    for t in 0..spec.horizon {
        let mut next: BTreeSet<StateVec> = BTreeSet::new();
        for s in &layers[t] {
            for code in 0..n_actions {
                let a = AttackAction::from_bits(code, net.m);
                let u = apply_attack(spec.nominal[t], a);
                for (x, _) in transition_distribution(net, *s, u).support {
                    next.insert(x);
                }
            }
            if next.len() > layer_cap {
                return Err(OracleError::LayerCapExceeded {
                    t: t + 1,
                    size: next.len(),
                    cap: layer_cap,
                });
            }
        }
        layers.push(next.into_iter().collect());
    }
    Ok(ReachableLayers { layers })
}

/// Exact optimal action values over the reachable set, from backward
/// induction, together with the layers they were computed on.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    /// `rows[t]` maps a reachable state code at time `t < T` to its exact
    /// action-value row.
    rows: Vec<HashMap<u64, Vec<f64>>>,
    pub layers: ReachableLayers,
    state_bits: usize,
    n_actions: usize,
    root_value: f64,
}

impl ExactSolution {
    /// Exact optimal action values at a reachable non-terminal state.
    pub fn q_row(&self, s: &MdpState) -> Option<&[f64]> {
        self.rows.get(s.t)?.get(&s.x.code()).map(Vec::as_slice)
    }

    /// Exact optimal value of a state; terminal states are worth zero and
    /// unreachable states report zero as well.
    pub fn value(&self, s: &MdpState) -> f64 {
        self.q_row(s)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .unwrap_or(0.0)
    }

    /// The optimum `v*(X(0), 0)`.
    pub fn optimal_value(&self) -> f64 {
        self.root_value
    }

    /// Greedy optimal action at a reachable non-terminal state, lowest code
    /// on ties; no-attack elsewhere.
    pub fn optimal_action(&self, s: &MdpState) -> AttackAction {
        let m = self.n_actions.trailing_zeros() as usize;
        match self.q_row(s) {
            Some(row) => AttackAction::from_bits(greedy_index(row) as u64, m),
            None => AttackAction::no_attack(m),
        }
    }

    /// One open-loop realization of the greedy optimal policy: follow the
    /// greedy action from the initial state, advancing through each step's
    /// most probable successor (lowest code on ties).
    pub fn realization(&self, net: &NetworkDef, spec: &ProblemSpec) -> Vec<AttackAction> {
        let mut actions = Vec::with_capacity(spec.horizon);
        let mut x = spec.initial;
        for t in 0..spec.horizon {
            let a = self.optimal_action(&MdpState { x, t });
            actions.push(a);
            let u = apply_attack(spec.nominal[t], a);
            let dist = transition_distribution(net, x, u);
            let mut best = dist.support[0];
            for cand in &dist.support[1..] {
                if cand.1 > best.1 || (cand.1 == best.1 && cand.0 < best.0) {
                    best = *cand;
                }
            }
            x = best.0;
        }
        actions
    }

    /// Largest absolute one-step optimality residual over all stored
    /// entries; a correctly computed table sits at rounding noise.
    pub fn bellman_residual(&self, net: &NetworkDef, spec: &ProblemSpec) -> f64 {
        let mut worst = 0.0f64;
        for t in 0..spec.horizon {
            for x in &self.layers.layers[t] {
                let s = MdpState { x: *x, t };
                let row = self.q_row(&s).expect("reachable state has a row");
                for (code, stored) in row.iter().enumerate() {
                    let a = AttackAction::from_bits(code as u64, net.m);
                    let backup = self.backup(net, spec, &s, a);
                    worst = worst.max((stored - backup).abs());
                }
            }
        }
        worst
    }

    /// One-step lookahead value of `(s, a)` against the stored next layer.
    fn backup(&self, net: &NetworkDef, spec: &ProblemSpec, s: &MdpState, a: AttackAction) -> f64 {
        let u = apply_attack(spec.nominal[s.t], a);
        let mut q = 0.0;
        for (x_next, p) in transition_distribution(net, s.x, u).support {
            let next = MdpState {
                x: x_next,
                t: s.t + 1,
            };
            let v_next = if next.t < spec.horizon {
                self.value(&next)
            } else {
                0.0
            };
            q += p * (spec.reward(s.t, a, x_next) + spec.gamma * v_next);
        }
        q
    }

    pub fn state_bits(&self) -> usize {
        self.state_bits
    }
}

impl ActionValues for ExactSolution {
    fn num_actions(&self) -> usize {
        self.n_actions
    }

    fn values(&self, s: &MdpState) -> Option<&[f64]> {
        self.q_row(s)
    }
}

/// Solves the attack problem exactly by backward induction over the
/// reachable layers, terminal values zero.
pub fn exact_q(
    net: &NetworkDef,
    spec: &ProblemSpec,
    layer_cap: usize,
) -> Result<ExactSolution, OracleError> {
    let layers = reachable_states(net, spec, layer_cap)?;
    let n_actions = 1usize << net.m;
    let mut rows: Vec<HashMap<u64, Vec<f64>>> = vec![HashMap::new(); spec.horizon];
    // values of layer t+1, populated backwards; terminal layer is all zero
    let mut next_values: HashMap<u64, f64> = HashMap::new();
    for t in (0..spec.horizon).rev() {
        let mut layer_values: HashMap<u64, f64> = HashMap::with_capacity(layers.layers[t].len());
        for x in &layers.layers[t] {
            let mut row = Vec::with_capacity(n_actions);
            for code in 0..n_actions {
                let a = AttackAction::from_bits(code as u64, net.m);
                let u = apply_attack(spec.nominal[t], a);
                let mut q = 0.0;
                for (x_next, p) in transition_distribution(net, *x, u).support {
                    let v_next = if t + 1 < spec.horizon {
                        *next_values.get(&x_next.code()).unwrap_or(&0.0)
                    } else {
                        0.0
                    };
                    q += p * (spec.reward(t, a, x_next) + spec.gamma * v_next);
                }
                row.push(q);
            }
            let v = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            layer_values.insert(x.code(), v);
            rows[t].insert(x.code(), row);
        }
        next_values = layer_values;
    }
    let root_value = *next_values.get(&spec.initial.code()).unwrap_or(&0.0);
    Ok(ExactSolution {
        rows,
        layers,
        state_bits: net.n,
        n_actions,
        root_value,
    })
}

/// Exact expected return and terminal success probability of a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactEval {
    pub expected_return: f64,
    /// Probability that the state at the horizon equals the target.
    pub success_prob: f64,
}

/// Exact forward evaluation under an arbitrary state-feedback rule.
fn propagate(
    net: &NetworkDef,
    spec: &ProblemSpec,
    mut act: impl FnMut(&MdpState) -> AttackAction,
) -> ExactEval {
    let mut dist: BTreeMap<u64, f64> = BTreeMap::new();
    dist.insert(spec.initial.code(), 1.0);
    let mut expected_return = 0.0;
    let mut discount = 1.0;
    for t in 0..spec.horizon {
        let mut next: BTreeMap<u64, f64> = BTreeMap::new();
        for (&code, &p) in &dist {
            let s = MdpState {
                x: StateVec::from_bits(code, net.n),
                t,
            };
            let a = act(&s);
            let u = apply_attack(spec.nominal[t], a);
            for (x_next, q) in transition_distribution(net, s.x, u).support {
                expected_return += p * q * discount * spec.reward(t, a, x_next);
                *next.entry(x_next.code()).or_insert(0.0) += p * q;
            }
        }
        dist = next;
        discount *= spec.gamma;
    }
    ExactEval {
        expected_return,
        success_prob: dist.get(&spec.target.code()).copied().unwrap_or(0.0),
    }
}

/// Exact evaluation of a fixed attack sequence (one action per step).
pub fn evaluate_open_loop_exact(
    net: &NetworkDef,
    spec: &ProblemSpec,
    sequence: &[AttackAction],
) -> ExactEval {
    assert_eq!(
        sequence.len(),
        spec.horizon,
        "open-loop sequence must cover the horizon"
    );
    propagate(net, spec, |s| sequence[s.t])
}

/// Exact evaluation of the greedy policy on an action-value store; states
/// without values fall back to no-attack.
pub fn evaluate_greedy_exact(
    net: &NetworkDef,
    spec: &ProblemSpec,
    q: &impl ActionValues,
) -> ExactEval {
    propagate(net, spec, |s| match q.values(s) {
        Some(row) => AttackAction::from_bits(greedy_index(row) as u64, net.m),
        None => AttackAction::no_attack(net.m),
    })
}

/// Exact evaluation of a selected final policy.
pub fn evaluate_policy_exact(
    net: &NetworkDef,
    spec: &ProblemSpec,
    policy: &FinalPolicy,
) -> ExactEval {
    match &policy.kind {
        PolicyKind::OpenLoop(seq) => evaluate_open_loop_exact(net, spec, seq),
        PolicyKind::GreedyFromQ(q) => evaluate_greedy_exact(net, spec, q),
    }
}

/// One row of the exhaustive open-loop table.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopRow {
    pub sequence: Vec<AttackAction>,
    pub expected_return: f64,
    pub success_prob: f64,
}

/// Exhaustively evaluates all `2^(mT)` open-loop attack sequences.
/// Guarded by [`ENUMERATION_GUARD_BITS`].
pub fn enumerate_open_loop(
    net: &NetworkDef,
    spec: &ProblemSpec,
) -> Result<Vec<OpenLoopRow>, OracleError> {
    let bits = net.m * spec.horizon;
    if bits > ENUMERATION_GUARD_BITS {
        return Err(OracleError::EnumerationGuard {
            bits,
            guard: ENUMERATION_GUARD_BITS,
        });
    }
    let mask = (1u64 << net.m) - 1;
    let mut rows = Vec::with_capacity(1 << bits);
    for packed in 0u64..(1u64 << bits) {
        let sequence: Vec<AttackAction> = (0..spec.horizon)
            .map(|t| AttackAction::from_bits((packed >> (t * net.m)) & mask, net.m))
            .collect();
        let eval = evaluate_open_loop_exact(net, spec, &sequence);
        rows.push(OpenLoopRow {
            sequence,
            expected_return: eval.expected_return,
            success_prob: eval.success_prob,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests;
