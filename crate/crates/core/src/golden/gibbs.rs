//! Systematic-scan Gibbs sampling over the discrete joint.
//!
//! Randomness comes from ChaCha8 seeded with the caller's 64-bit seed, so a
//! given (graph, seed, burn_in, samples) always produces the same chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Assignment, InferenceError};
use crate::graph::{FactorGraph, Table, SOFT_EPSILON};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GibbsParams {
    pub seed: u64,
    pub burn_in: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsResult<T> {
    /// Frequency of each value over the post-burn-in sweeps.
    pub marginals: Vec<Vec<T>>,
    pub final_state: Assignment,
}

pub fn gibbs_sample<T: Real>(
    graph: &FactorGraph,
    params: &GibbsParams,
) -> Result<GibbsResult<T>, InferenceError> {
    let tables: Vec<(Table, Vec<T>)> = graph
        .tables(SOFT_EPSILON)?
        .into_iter()
        .map(|t| {
            let v = t.values.iter().map(|&x| T::of(x).ln()).collect();
            (t, v)
        })
        .collect();
    let adj = graph.adjacency();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut state: Assignment = graph
        .variables
        .iter()
        .map(|v| v.evidence.unwrap_or(0))
        .collect();
    let mut counts: Vec<Vec<u64>> = graph
        .variables
        .iter()
        .map(|v| vec![0; v.cardinality])
        .collect();
    let mut logp: Vec<T> = Vec::new();

    for sweep in 0..params.burn_in + params.samples {
        for v in 0..state.len() {
            if graph.variables[v].evidence.is_some() {
                continue;
            }
            let card = graph.variables[v].cardinality;
            logp.clear();
            logp.resize(card, T::zero());
            for &f in &adj[v] {
                let (t, vals) = &tables[f];
                let pos = t.position(v).expect("adjacent factor contains variable");
                let stride = t.strides()[pos];
                let row0: usize = t
                    .scope
                    .iter()
                    .zip(t.strides())
                    .map(|(&u, s)| if u == v { 0 } else { state[u] * s })
                    .sum();
                for (a, lp) in logp.iter_mut().enumerate() {
                    *lp += vals[row0 + a * stride];
                }
            }
            if let Some(x) = sample_log(&logp, rng.gen::<f64>()) {
                state[v] = x;
            }
        }
        if sweep >= params.burn_in {
            for (v, &x) in state.iter().enumerate() {
                counts[v][x] += 1;
            }
        }
    }

    let total = T::of(params.samples.max(1) as f64);
    let marginals = counts
        .iter()
        .zip(&state)
        .map(|(c, &x)| {
            if params.samples == 0 {
                (0..c.len())
                    .map(|a| if a == x { T::one() } else { T::zero() })
                    .collect()
            } else {
                c.iter().map(|&k| T::of(k as f64) / total).collect()
            }
        })
        .collect();
    Ok(GibbsResult {
        marginals,
        final_state: state,
    })
}

/// Draws an index with probability proportional to `exp(logp)`; `None` if all weights vanish.
fn sample_log<T: Real>(logp: &[T], u: f64) -> Option<usize> {
    let mx = logp.iter().copied().fold(T::neg_infinity(), T::max);
    if !mx.is_finite() {
        return None;
    }
    let w: Vec<f64> = logp.iter().map(|&l| (l - mx).as_f64().exp()).collect();
    let total: f64 = w.iter().sum();
    let mut target = u * total;
    for (i, &x) in w.iter().enumerate() {
        if target < x {
            return Some(i);
        }
        target -= x;
    }
    w.iter().rposition(|&x| x > 0.0)
}
