//! Architecture-free reference kernels: brute-force oracles, loopy sum-product
//! and min-sum message passing, and a systematic-scan Gibbs sampler.
//!
//! Every kernel is generic over [`Real`](crate::Real) so the same code runs in
//! `f32` and `f64`. Machine runs are judged against these.

mod bp;
mod exact;
mod gibbs;

pub use bp::{min_sum, sum_product, BpParams, Schedule};
pub use exact::{exact_marginals, map_bruteforce, state_space_size, ENUMERATION_LIMIT};
pub use gibbs::{gibbs_sample, GibbsParams, GibbsResult};

use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::GraphError;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("state space of {size} assignments exceeds the enumeration limit of {limit}")]
    StateSpaceTooLarge { size: u128, limit: u128 },
    #[error("partition sum is zero (contradictory evidence)")]
    ZeroPartition,
    #[error("all-zero message into variable {var} (hard contradiction)")]
    ZeroMessage { var: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Message representation. LINEAR messages sum to one; LOG messages have max zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Linear,
    Log,
}

/// One domain value per variable, indexed by variable id.
pub type Assignment = Vec<usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState<T> {
    pub domain: Domain,
    /// Marginals (LINEAR) or max-marginals (LOG), indexed by variable id.
    pub beliefs: Vec<Vec<T>>,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Real> BeliefState<T> {
    /// Per-variable argmax, ties to the lowest index.
    pub fn argmax(&self) -> Assignment {
        self.beliefs.iter().map(|b| argmax(b)).collect()
    }
}

pub(crate) fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `var_id value_0 value_1 ...` per line.
pub fn format_marginals<T: Real>(marginals: &[Vec<T>]) -> String {
    let mut s = String::new();
    for (v, m) in marginals.iter().enumerate() {
        let _ = write!(s, "{v}");
        for x in m {
            let _ = write!(s, " {x}");
        }
        s.push('\n');
    }
    s
}

/// `var_id value` per line.
pub fn format_assignment(assignment: &[usize]) -> String {
    let mut s = String::new();
    for (v, x) in assignment.iter().enumerate() {
        let _ = writeln!(s, "{v} {x}");
    }
    s
}

/// Largest absolute componentwise difference between two belief sets.
pub fn linf_distance<T: Real>(a: &[Vec<T>], b: &[Vec<T>]) -> T {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (*p - *q).abs()))
        .fold(T::zero(), |m, d| if d > m { d } else { m })
}
