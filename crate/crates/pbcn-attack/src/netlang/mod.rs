//! Textual definition language for probabilistic Boolean control networks.
//!
//! A network file declares `name`, `nodes` and `inputs` headers followed by
//! one update rule per state node. A rule is either deterministic,
//!
//! ```text
//! x1 <- x4 & !x5 & !x6
//! ```
//!
//! or a brace list of weighted alternatives whose probabilities sum to one:
//!
//! ```text
//! x9 <- { 0.6: x2 | (u3 & !u1) ; 0.4: x9 }
//! ```
//!
//! Expressions use `!`, `&`, `|` (in decreasing binding strength), the
//! constants `0`/`1`, state variables `x<k>` and input variables `u<k>`,
//! both 1-based. `#` starts a comment running to end of line.

mod lexer;
mod parser;

use std::fmt;

use thiserror::Error;

use crate::pbcn::{InputVec, StateVec};

pub use parser::parse_network;

/// Tolerance for the per-node probability-sum check.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// Largest supported node or input count; states are packed into a `u64`.
pub const MAX_BITS: usize = 64;

/// Boolean update expression over the state and input variables of a network.
///
/// Variable indices are 1-based, matching the surface syntax.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoolExpr {
    Const(bool),
    /// State variable `x<k>`.
    State(usize),
    /// Input variable `u<k>`.
    Input(usize),
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    /// Evaluates the expression under the given state/input assignment.
    pub fn eval(&self, state: StateVec, input: InputVec) -> bool {
        match self {
            BoolExpr::Const(b) => *b,
            BoolExpr::State(k) => state.bit(*k - 1),
            BoolExpr::Input(k) => input.bit(*k - 1),
            BoolExpr::Not(e) => !e.eval(state, input),
            BoolExpr::And(a, b) => a.eval(state, input) && b.eval(state, input),
            BoolExpr::Or(a, b) => a.eval(state, input) || b.eval(state, input),
        }
    }

    /// Checks that every variable reference is within `n` states / `m` inputs.
    fn check_vars(&self, n: usize, m: usize) -> bool {
        match self {
            BoolExpr::Const(_) => true,
            BoolExpr::State(k) => (1..=n).contains(k),
            BoolExpr::Input(k) => (1..=m).contains(k),
            BoolExpr::Not(e) => e.check_vars(n, m),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => a.check_vars(n, m) && b.check_vars(n, m),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let prec = self.precedence();
        if prec < min_prec {
            write!(f, "(")?;
        }
        match self {
            BoolExpr::Const(b) => write!(f, "{}", u8::from(*b))?,
            BoolExpr::State(k) => write!(f, "x{k}")?,
            BoolExpr::Input(k) => write!(f, "u{k}")?,
            BoolExpr::Not(e) => {
                write!(f, "!")?;
                e.fmt_prec(f, 2)?;
            }
            BoolExpr::And(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " & ")?;
                // strict bound on the right keeps left associativity on re-parse
                b.fmt_prec(f, 2)?;
            }
            BoolExpr::Or(a, b) => {
                a.fmt_prec(f, 0)?;
                write!(f, " | ")?;
                b.fmt_prec(f, 1)?;
            }
        }
        if prec < min_prec {
            write!(f, ")")?;
        }
        Ok(())
    }

    fn precedence(&self) -> u8 {
        match self {
            BoolExpr::Or(..) => 0,
            BoolExpr::And(..) => 1,
            BoolExpr::Not(..) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for BoolExpr {
    /// Canonical text form with minimal parentheses; re-parses to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// One weighted update alternative for a node.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateAlternative {
    pub expr: BoolExpr,
    pub prob: f64,
}

/// The full update rule of one node: a non-empty list of alternatives whose
/// probabilities sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRule {
    pub alternatives: Vec<UpdateAlternative>,
}

impl NodeRule {
    /// Single deterministic alternative with probability one.
    pub fn deterministic(expr: BoolExpr) -> Self {
        NodeRule {
            alternatives: vec![UpdateAlternative { expr, prob: 1.0 }],
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.alternatives.len() == 1
    }
}

/// A parsed and validated network definition.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDef {
    pub name: String,
    /// Number of state nodes (`n >= 1`).
    pub n: usize,
    /// Number of control inputs (`m >= 0`).
    pub m: usize,
    /// Update rules, one per node, in node order.
    pub rules: Vec<NodeRule>,
}

impl NetworkDef {
    /// Builds a definition from parts, running the same validation the parser
    /// applies to files.
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        rules: Vec<NodeRule>,
    ) -> Result<Self, ParseError> {
        let net = NetworkDef {
            name: name.into(),
            n,
            m,
            rules,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<(), ParseError> {
        if self.n < 1 {
            return Err(ParseError::InvalidSize {
                message: "a network needs at least one node".into(),
            });
        }
        if self.n > MAX_BITS || self.m > MAX_BITS {
            return Err(ParseError::InvalidSize {
                message: format!("at most {MAX_BITS} nodes and {MAX_BITS} inputs are supported"),
            });
        }
        if self.rules.len() != self.n {
            return Err(ParseError::InvalidSize {
                message: format!("expected {} rules, found {}", self.n, self.rules.len()),
            });
        }
        for (i, rule) in self.rules.iter().enumerate() {
            let node = i + 1;
            if rule.alternatives.is_empty() {
                return Err(ParseError::InvalidSize {
                    message: format!("node {node} has no alternatives"),
                });
            }
            let mut sum = 0.0;
            for alt in &rule.alternatives {
                if alt.prob < 0.0 || !alt.prob.is_finite() {
                    return Err(ParseError::InvalidProbability {
                        node,
                        prob: alt.prob,
                    });
                }
                if !alt.expr.check_vars(self.n, self.m) {
                    return Err(ParseError::UndeclaredVariable {
                        line: 0,
                        col: 0,
                        name: format!("in the rule for node {node}"),
                    });
                }
                sum += alt.prob;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(ParseError::ProbabilitySum { node, sum });
            }
        }
        Ok(())
    }
}

impl fmt::Display for NetworkDef {
    /// Canonical file form; see [`format_network`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name: {}", self.name)?;
        writeln!(f, "nodes: {}", self.n)?;
        writeln!(f, "inputs: {}", self.m)?;
        writeln!(f)?;
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.is_deterministic() {
                writeln!(f, "x{} <- {}", i + 1, rule.alternatives[0].expr)?;
            } else {
                let alts: Vec<String> = rule
                    .alternatives
                    .iter()
                    .map(|a| format!("{}: {}", a.prob, a.expr))
                    .collect();
                writeln!(f, "x{} <- {{ {} }}", i + 1, alts.join(" ; "))?;
            }
        }
        Ok(())
    }
}

/// Emits the canonical text form of a network. `parse_network` applied to the
/// result reconstructs a structurally identical [`NetworkDef`].
pub fn format_network(net: &NetworkDef) -> String {
    net.to_string()
}

/// Errors produced while parsing or validating a network definition.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("{line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{line}:{col}: undeclared variable {name}")]
    UndeclaredVariable {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("node {node}: alternative probabilities sum to {sum}, expected 1")]
    ProbabilitySum { node: usize, sum: f64 },
    #[error("node {node}: invalid probability {prob}")]
    InvalidProbability { node: usize, prob: f64 },
    #[error("line {line}: duplicate definition of node x{node}")]
    DuplicateNode { node: usize, line: usize },
    #[error("missing definition for node x{node}")]
    MissingNode { node: usize },
    #[error("{message}")]
    InvalidSize { message: String },
}

#[cfg(test)]
mod tests;
