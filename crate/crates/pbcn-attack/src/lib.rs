//! Synthesis of optimal false-data-injection attacks on probabilistic Boolean
//! control networks (PBCNs).
//!
//! An attacker intercepts the control inputs of a PBCN and may flip any
//! subset of the control bits at each step, aiming to drive the network into
//! a target state at a fixed horizon. The crate models this as a
//! finite-horizon Markov decision process and provides:
//!
//! - [`netlang`]: a small textual language for defining networks;
//! - [`pbcn`]: sampled and exact network dynamics;
//! - [`attack_env`]: the episodic attack environment with the three reward
//!   designs (reach the target; also minimize attacked time steps; also
//!   minimize attacked control bits);
//! - [`qlearn`]: model-free tabular Q-learning, in a dense variant and a
//!   sparse variant that stores only visited states and tracks the best
//!   action sequence seen during training;
//! - [`oracle`]: an exact backward-induction solver used as ground truth;
//! - [`bench`]: a deterministic experiment harness with CSV/SVG outputs;
//! - [`bundled`]: the two studies shipped with the crate.
//!
//! The `pbcn-attack` binary exposes all of this behind `validate`, `train`,
//! `oracle`, `eval`, `reproduce` and `sweep` subcommands; the `examples/`
//! directory shows the library API one capability at a time.

pub mod attack_env;
pub mod bench;
pub mod bundled;
pub mod cli;
pub mod netlang;
pub mod oracle;
pub mod pbcn;
pub mod qlearn;

pub use attack_env::{
    apply_attack, validate_rprime, AttackAction, AttackEnv, MdpState, ProblemKind, ProblemSpec,
    StepOutcome,
};
pub use netlang::{format_network, parse_network, BoolExpr, NetworkDef, NodeRule};
pub use pbcn::{is_equilibrium, step_sample, transition_distribution, InputVec, StateVec};
