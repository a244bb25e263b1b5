//! The two studies shipped with the crate, plus their hyperparameters.
//!
//! `lac10` is a 10-node, 3-input network whose nominal all-zero control
//! sequence already drives the initial state into the target, which then
//! holds as an equilibrium: the optimal attack is to do nothing and the
//! optimum is 1 for all three problems. `tcr28` is a 28-node, 3-input
//! network whose shipped target state is not reachable from the shipped
//! initial state under any control sequence (seven of its nodes form a
//! feedback cycle that starts all-zero and can never be re-seeded), so the
//! exact optimum is 0 there; the study mainly exercises scale. For a
//! 28-node target that genuinely requires an attack, see
//! [`tcr28_demo_problem`].

use std::str::FromStr;

use crate::attack_env::{ProblemKind, ProblemSpec};
use crate::netlang::{parse_network, NetworkDef};
use crate::pbcn::StateVec;

/// Text of the bundled 10-node network file.
pub const LAC10_NET: &str = include_str!("../data/lac10.net");
/// Text of the bundled 28-node network file.
pub const TCR28_NET: &str = include_str!("../data/tcr28.net");

/// Horizon used by both bundled studies.
pub const BUNDLED_HORIZON: usize = 5;

/// The bundled studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    Lac10,
    Tcr28,
}

impl std::fmt::Display for Example {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Example::Lac10 => write!(f, "lac10"),
            Example::Tcr28 => write!(f, "tcr28"),
        }
    }
}

impl FromStr for Example {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lac10" => Ok(Example::Lac10),
            "tcr28" => Ok(Example::Tcr28),
            other => Err(format!("unknown example {other:?}, expected lac10 or tcr28")),
        }
    }
}

/// Parses the bundled 10-node network.
pub fn lac10() -> NetworkDef {
    parse_network(LAC10_NET).expect("bundled network parses")
}

/// Parses the bundled 28-node network.
pub fn tcr28() -> NetworkDef {
    parse_network(TCR28_NET).expect("bundled network parses")
}

pub fn network(example: Example) -> NetworkDef {
    match example {
        Example::Lac10 => lac10(),
        Example::Tcr28 => tcr28(),
    }
}

fn state(bits: &str) -> StateVec {
    bits.parse().expect("valid bundled state")
}

/// Initial state of a bundled study.
pub fn initial_state(example: Example) -> StateVec {
    match example {
        Example::Lac10 => state("(0, 0, 0, 0, 1, 1, 0, 0, 0, 0)"),
        Example::Tcr28 => state(
            "(0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0)",
        ),
    }
}

/// Target state of a bundled study.
pub fn target_state(example: Example) -> StateVec {
    match example {
        Example::Lac10 => state("(0, 0, 0, 1, 1, 1, 0, 0, 0, 0)"),
        Example::Tcr28 => state(
            "(0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0)",
        ),
    }
}

/// Per-attack penalty of a bundled study (zero, unused, for `P1`).
pub fn bundled_rprime(kind: ProblemKind) -> f64 {
    match kind {
        ProblemKind::P1 => 0.0,
        ProblemKind::P2 => -0.1,
        ProblemKind::P3 => -0.05,
    }
}

/// Step size used by the bundled studies.
pub fn bundled_alpha(example: Example, kind: ProblemKind) -> f64 {
    match (example, kind) {
        (Example::Lac10, ProblemKind::P1 | ProblemKind::P2) => 0.01,
        (Example::Lac10, ProblemKind::P3) => 0.09,
        (Example::Tcr28, _) => 0.05,
    }
}

/// Problem instance of a bundled study: horizon 5, discount 1, all-zero
/// nominal controls.
pub fn bundled_problem(example: Example, kind: ProblemKind) -> ProblemSpec {
    let net = network(example);
    ProblemSpec::new(
        kind,
        BUNDLED_HORIZON,
        initial_state(example),
        target_state(example),
        bundled_rprime(kind),
        net.m,
    )
}

/// A 28-node demonstration instance whose target is reachable with
/// probability one but only under a nontrivial attack (the nominal controls
/// alone never reach it). Useful for exercising the sparse learner at scale
/// with a meaningful optimum.
pub fn tcr28_demo_problem(kind: ProblemKind) -> ProblemSpec {
    let net = tcr28();
    let target = state(
        "(0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0)",
    );
    ProblemSpec::new(
        kind,
        BUNDLED_HORIZON,
        initial_state(Example::Tcr28),
        target,
        bundled_rprime(kind),
        net.m,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack_env::parse_spec_file;

    #[test]
    fn bundled_networks_parse_and_have_expected_shape() {
        let lac = lac10();
        assert_eq!((lac.n, lac.m), (10, 3));
        assert_eq!(lac.rules.iter().filter(|r| !r.is_deterministic()).count(), 1);
        let tcr = tcr28();
        assert_eq!((tcr.n, tcr.m), (28, 3));
        assert_eq!(tcr.rules.iter().filter(|r| !r.is_deterministic()).count(), 1);
    }

    #[test]
    fn bundled_problems_validate() {
        for example in [Example::Lac10, Example::Tcr28] {
            let net = network(example);
            for kind in [ProblemKind::P1, ProblemKind::P2, ProblemKind::P3] {
                bundled_problem(example, kind).validate(&net).unwrap();
            }
        }
        tcr28_demo_problem(ProblemKind::P2)
            .validate(&tcr28())
            .unwrap();
    }

    #[test]
    fn spec_files_match_programmatic_bundles() {
        let cases = [
            ("lac10_p1.spec", Example::Lac10, ProblemKind::P1),
            ("lac10_p2.spec", Example::Lac10, ProblemKind::P2),
            ("lac10_p3.spec", Example::Lac10, ProblemKind::P3),
            ("tcr28_p1.spec", Example::Tcr28, ProblemKind::P1),
            ("tcr28_p2.spec", Example::Tcr28, ProblemKind::P2),
            ("tcr28_p3.spec", Example::Tcr28, ProblemKind::P3),
        ];
        for (file, example, kind) in cases {
            let path = format!("{}/data/{}", env!("CARGO_MANIFEST_DIR"), file);
            let text = std::fs::read_to_string(&path).unwrap();
            let parsed = parse_spec_file(&text).unwrap();
            let resolved = parsed.resolve(&network(example)).unwrap();
            assert_eq!(resolved, bundled_problem(example, kind), "{file}");
        }
        let demo = std::fs::read_to_string(format!(
            "{}/data/tcr28_demo_p1.spec",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap();
        let parsed = parse_spec_file(&demo).unwrap();
        assert_eq!(
            parsed.resolve(&tcr28()).unwrap(),
            tcr28_demo_problem(ProblemKind::P1)
        );
    }
}
