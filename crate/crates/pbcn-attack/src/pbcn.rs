//! Execution of network dynamics: sampled steps, exact one-step transition
//! distributions and equilibrium checks.
//!
//! States and inputs are packed bit vectors with the first variable at the
//! least-significant position, so a `StateVec` doubles as a dense table index
//! through [`StateVec::code`].

use rand::Rng;

use crate::netlang::NetworkDef;

macro_rules! bitvec_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name {
            bits: u64,
            len: u8,
        }

        impl $name {
            /// All-zero vector of the given length.
            pub fn zeros(len: usize) -> Self {
                assert!(len <= 64, "bit vectors are limited to 64 entries");
                Self { bits: 0, len: len as u8 }
            }

            /// Builds from a packed word; bits at positions `>= len` are dropped.
            pub fn from_bits(bits: u64, len: usize) -> Self {
                assert!(len <= 64, "bit vectors are limited to 64 entries");
                let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
                Self { bits: bits & mask, len: len as u8 }
            }

            /// Builds from individual bits, first variable first.
            pub fn from_slice(bits: &[u8]) -> Self {
                let mut v = Self::zeros(bits.len());
                for (i, b) in bits.iter().enumerate() {
                    v.set_bit(i, *b != 0);
                }
                v
            }

            pub fn len(&self) -> usize {
                self.len as usize
            }

            pub fn is_empty(&self) -> bool {
                self.len == 0
            }

            /// Value of variable `i + 1` (0-based position).
            pub fn bit(&self, i: usize) -> bool {
                debug_assert!(i < self.len());
                (self.bits >> i) & 1 == 1
            }

            pub fn set_bit(&mut self, i: usize, value: bool) {
                debug_assert!(i < self.len());
                if value {
                    self.bits |= 1 << i;
                } else {
                    self.bits &= !(1 << i);
                }
            }

            /// Packed integer code; the dense index of this vector.
            pub fn code(&self) -> u64 {
                self.bits
            }

            pub fn count_ones(&self) -> u32 {
                self.bits.count_ones()
            }
        }

        impl ::std::fmt::Display for $name {
            /// Tuple form `(b1, b2, ..., bn)` as used in logs and reports.
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                write!(f, "(")?;
                for i in 0..self.len() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", u8::from(self.bit(i)))?;
                }
                write!(f, ")")
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = $crate::pbcn::BitParseError;

            /// Accepts the tuple form `(0, 1, 0)` and the compact form `010`.
            fn from_str(s: &str) -> Result<Self, $crate::pbcn::BitParseError> {
                let bits = $crate::pbcn::parse_bit_list(s)?;
                Ok(Self::from_slice(&bits))
            }
        }
    };
}

pub(crate) use bitvec_type;

bitvec_type!(
    /// Packed network state `X(t)`; bit `i-1` holds `x_i`.
    StateVec
);
bitvec_type!(
    /// Packed control input `U(t)`; bit `i-1` holds `u_i`.
    InputVec
);

/// Error for the textual bit-vector forms.
#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("{0}")]
pub struct BitParseError(pub String);

/// Shared text-form reader behind the bit-vector `FromStr` impls: accepts the
/// tuple form `(0, 1, 0)`, separated bits `0 1 0`, and the compact form `010`.
pub(crate) fn parse_bit_list(s: &str) -> Result<Vec<u8>, BitParseError> {
    let s = s.trim();
    let inner = if let Some(stripped) = s.strip_prefix('(') {
        stripped
            .strip_suffix(')')
            .ok_or_else(|| BitParseError(format!("unbalanced parentheses in {s:?}")))?
    } else {
        s
    };
    let mut bits = Vec::new();
    if inner.contains(',') || inner.contains(char::is_whitespace) {
        for part in inner.split(|c: char| c == ',' || c.is_whitespace()) {
            match part.trim() {
                "" => continue,
                "0" => bits.push(0),
                "1" => bits.push(1),
                other => return Err(BitParseError(format!("expected 0 or 1, found {other:?}"))),
            }
        }
    } else {
        for c in inner.chars() {
            match c {
                '0' => bits.push(0),
                '1' => bits.push(1),
                other => return Err(BitParseError(format!("expected 0 or 1, found {other:?}"))),
            }
        }
    }
    if bits.is_empty() {
        return Err(BitParseError("empty bit vector".into()));
    }
    if bits.len() > 64 {
        return Err(BitParseError("bit vectors are limited to 64 entries".into()));
    }
    Ok(bits)
}

/// Exact one-step next-state distribution: distinct states with positive
/// probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDist {
    pub support: Vec<(StateVec, f64)>,
}

impl TransitionDist {
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Probability assigned to `state` (zero if outside the support).
    pub fn prob_of(&self, state: StateVec) -> f64 {
        self.support
            .iter()
            .find(|(s, _)| *s == state)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn total(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }
}

// Treat accumulated per-node one-probabilities within this distance of 0 or 1
// as deterministic when building exact distributions.
const DETERMINISTIC_EPS: f64 = 1e-12;

/// Samples one network step under the given input.
///
/// Every probabilistic node (two or more alternatives) consumes exactly one
/// uniform draw, selected by cumulative-probability inversion in rule order;
/// deterministic nodes consume none. Equal seeds therefore give equal
/// trajectories.
pub fn step_sample<R: Rng + ?Sized>(
    net: &NetworkDef,
    state: StateVec,
    input: InputVec,
    rng: &mut R,
) -> StateVec {
    debug_assert_eq!(state.len(), net.n);
    debug_assert_eq!(input.len(), net.m);
    let mut next = StateVec::zeros(net.n);
    for (i, rule) in net.rules.iter().enumerate() {
        let expr = if rule.is_deterministic() {
            &rule.alternatives[0].expr
        } else {
            let draw: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = &rule.alternatives[rule.alternatives.len() - 1].expr;
            for alt in &rule.alternatives {
                acc += alt.prob;
                if draw < acc {
                    chosen = &alt.expr;
                    break;
                }
            }
            chosen
        };
        next.set_bit(i, expr.eval(state, input));
    }
    next
}

/// Exact transition distribution from `state` under `input`.
///
/// Per node, the probability that its next bit is one is the sum of the
/// weights of alternatives evaluating to one; the joint distribution is the
/// independent product over nodes, enumerated only over nodes whose bit is
/// genuinely uncertain. Support size is at most `2^(#uncertain nodes)`.
pub fn transition_distribution(net: &NetworkDef, state: StateVec, input: InputVec) -> TransitionDist {
    debug_assert_eq!(state.len(), net.n);
    debug_assert_eq!(input.len(), net.m);
    let mut base = StateVec::zeros(net.n);
    // (bit position, probability the bit is one)
    let mut uncertain: Vec<(usize, f64)> = Vec::new();
    for (i, rule) in net.rules.iter().enumerate() {
        let mut one_prob = 0.0;
        for alt in &rule.alternatives {
            if alt.expr.eval(state, input) {
                one_prob += alt.prob;
            }
        }
        if one_prob >= 1.0 - DETERMINISTIC_EPS {
            base.set_bit(i, true);
        } else if one_prob > DETERMINISTIC_EPS {
            uncertain.push((i, one_prob));
        }
    }
    let mut support = Vec::with_capacity(1 << uncertain.len());
    for mask in 0u64..(1u64 << uncertain.len()) {
        let mut next = base;
        let mut prob = 1.0;
        for (j, (bit, one_prob)) in uncertain.iter().enumerate() {
            if (mask >> j) & 1 == 1 {
                next.set_bit(*bit, true);
                prob *= one_prob;
            } else {
                prob *= 1.0 - one_prob;
            }
        }
        support.push((next, prob));
    }
    TransitionDist { support }
}

/// True iff the network stays in `state` with probability one under `input`.
pub fn is_equilibrium(net: &NetworkDef, state: StateVec, input: InputVec) -> bool {
    let dist = transition_distribution(net, state, input);
    dist.len() == 1 && dist.support[0].0 == state
}

#[cfg(test)]
mod tests;
