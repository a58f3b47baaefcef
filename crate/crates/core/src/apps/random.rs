use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{FactorGraph, FactorKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomGraphParams {
    pub min_vars: usize,
    pub max_vars: usize,
    pub min_card: usize,
    pub max_card: usize,
    /// Largest factor arity.
    pub max_arity: usize,
    /// Probability that each variable also gets a unary factor.
    pub unary_prob: f64,
    /// Probability that a new factor starts a new tree instead of extending the forest.
    pub split_prob: f64,
    /// Table entries are drawn uniformly from this range.
    pub value_range: (f64, f64),
}

impl Default for RandomGraphParams {
    fn default() -> Self {
        RandomGraphParams {
            min_vars: 2,
            max_vars: 12,
            min_card: 2,
            max_card: 4,
            max_arity: 3,
            unary_prob: 0.5,
            split_prob: 0.1,
            value_range: (0.05, 1.0),
        }
    }
}

/// Random factor forest. Each factor joins at most one already-connected
/// variable to fresh ones, so no cycle can form.
pub fn random_acyclic(seed: u64, params: &RandomGraphParams) -> FactorGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(params.min_vars..=params.max_vars);
    let cards: Vec<usize> = (0..n)
        .map(|_| rng.gen_range(params.min_card..=params.max_card))
        .collect();
    let mut g = FactorGraph::with_variables(&cards);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (lo, hi) = params.value_range;
    let table = |g: &FactorGraph, scope: &[usize], rng: &mut ChaCha8Rng| -> Vec<f64> {
        let len: usize = scope.iter().map(|&v| g.variables[v].cardinality).product();
        (0..len).map(|_| rng.gen_range(lo..=hi)).collect()
    };
    let mut placed = vec![order[0]];
    let mut next = 1;
    while next < n {
        let fresh = rng.gen_range(1..params.max_arity.max(2)).min(n - next);
        let mut scope: Vec<usize> = order[next..next + fresh].to_vec();
        next += fresh;
        if !rng.gen_bool(params.split_prob) {
            scope.push(*placed.choose(&mut rng).unwrap());
        }
        placed.extend_from_slice(&scope);
        scope.shuffle(&mut rng);
        let t = table(&g, &scope, &mut rng);
        g.add_factor(scope, FactorKind::Table(t));
    }
    for v in 0..n {
        if rng.gen_bool(params.unary_prob) {
            let t = table(&g, &[v], &mut rng);
            g.add_factor(vec![v], FactorKind::Table(t));
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forests_within_bounds() {
        let p = RandomGraphParams::default();
        for seed in 0..200 {
            let g = random_acyclic(seed, &p);
            assert!(g.is_forest(), "seed {seed}");
            assert!(g.validate().is_empty());
            assert!((2..=12).contains(&g.variables.len()));
            assert!(g.variables.iter().all(|v| (2..=4).contains(&v.cardinality)));
        }
        assert_eq!(random_acyclic(3, &p), random_acyclic(3, &p));
    }
}
