//! Loopy message passing in the linear (sum-product) and log (min-sum) domains.

use super::{argmax, Assignment, BeliefState, Domain, InferenceError};
use crate::graph::{FactorGraph, Table, SOFT_EPSILON};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// All variable-to-factor messages, then all factor-to-variable messages.
    Flooding,
    /// Factors in id order, each refreshing its inputs and outputs in place.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpParams<T> {
    pub schedule: Schedule,
    /// Weight of the previous factor-to-variable message, in `[0, 1)`.
    pub damping: T,
    pub max_iters: usize,
    pub tol: T,
}

impl<T: Real> Default for BpParams<T> {
    fn default() -> Self {
        Self {
            schedule: Schedule::Flooding,
            damping: T::zero(),
            max_iters: 200,
            tol: T::of(1e-6),
        }
    }
}

impl<T: Real> BpParams<T> {
    pub fn flooding(max_iters: usize) -> Self {
        Self {
            max_iters,
            ..Self::default()
        }
    }
}

struct Engine<T> {
    domain: Domain,
    tables: Vec<(Table, Vec<T>)>,
    cards: Vec<usize>,
    /// (factor, position) pairs adjacent to each variable.
    adj: Vec<Vec<(usize, usize)>>,
    evidence: Vec<Vec<T>>,
    v2f: Vec<Vec<Vec<T>>>,
    f2v: Vec<Vec<Vec<T>>>,
}

impl<T: Real> Engine<T> {
    fn new(graph: &FactorGraph, domain: Domain) -> Result<Self, InferenceError> {
        let eps = match domain {
            Domain::Linear => 0.0,
            Domain::Log => SOFT_EPSILON,
        };
        let tables: Vec<(Table, Vec<T>)> = graph
            .tables(eps)?
            .into_iter()
            .map(|t| {
                let v = t
                    .values
                    .iter()
                    .map(|&x| match domain {
                        Domain::Linear => T::of(x),
                        Domain::Log => T::of(x).ln(),
                    })
                    .collect();
                (t, v)
            })
            .collect();
        let cards = graph.cardinalities();
        let mut adj = vec![Vec::new(); cards.len()];
        for (f, (t, _)) in tables.iter().enumerate() {
            for (p, &v) in t.scope.iter().enumerate() {
                adj[v].push((f, p));
            }
        }
        let (one, zero) = match domain {
            Domain::Linear => (T::one(), T::zero()),
            Domain::Log => (T::zero(), T::neg_infinity()),
        };
        let evidence = graph
            .variables
            .iter()
            .map(|v| match v.evidence {
                Some(e) => (0..v.cardinality)
                    .map(|a| if a == e { one } else { zero })
                    .collect(),
                None => vec![one; v.cardinality],
            })
            .collect();
        let init = |c: usize| match domain {
            Domain::Linear => vec![T::one() / T::of(c as f64); c],
            Domain::Log => vec![T::zero(); c],
        };
        let f2v: Vec<Vec<Vec<T>>> = tables
            .iter()
            .map(|(t, _)| t.cards.iter().map(|&c| init(c)).collect())
            .collect();
        let v2f = f2v.clone();
        Ok(Self {
            domain,
            tables,
            cards,
            adj,
            evidence,
            v2f,
            f2v,
        })
    }

    fn combine(&self, acc: &mut [T], m: &[T]) {
        for (a, x) in acc.iter_mut().zip(m) {
            match self.domain {
                Domain::Linear => *a *= *x,
                Domain::Log => *a += *x,
            }
        }
    }

    fn normalize(&self, m: &mut [T], var: usize) -> Result<(), InferenceError> {
        match self.domain {
            Domain::Linear => {
                let s: T = m.iter().copied().sum();
                if !(s > T::zero()) || !s.is_finite() {
                    return Err(InferenceError::ZeroMessage { var });
                }
                m.iter_mut().for_each(|x| *x /= s);
            }
            Domain::Log => {
                let mx = m.iter().copied().fold(T::neg_infinity(), T::max);
                if !mx.is_finite() {
                    return Err(InferenceError::ZeroMessage { var });
                }
                m.iter_mut().for_each(|x| *x -= mx);
            }
        }
        Ok(())
    }

    /// Variable-to-factor message for `(f, pos)` from the current factor messages.
    fn var_to_factor(&self, f: usize, pos: usize) -> Result<Vec<T>, InferenceError> {
        let v = self.tables[f].0.scope[pos];
        let mut m = self.evidence[v].clone();
        for &(g, q) in &self.adj[v] {
            if g != f {
                self.combine(&mut m, &self.f2v[g][q]);
            }
        }
        self.normalize(&mut m, v)?;
        Ok(m)
    }

    fn factor_to_var(&self, f: usize, pos: usize) -> Result<Vec<T>, InferenceError> {
        let (t, vals) = &self.tables[f];
        let card = t.cards[pos];
        let mut out = match self.domain {
            Domain::Linear => vec![T::zero(); card],
            Domain::Log => vec![T::neg_infinity(); card],
        };
        let k = t.arity();
        let mut digits = vec![0usize; k];
        for &val in vals.iter() {
            let mut p = val;
            for j in 0..k {
                if j != pos {
                    let x = self.v2f[f][j][digits[j]];
                    match self.domain {
                        Domain::Linear => p *= x,
                        Domain::Log => p += x,
                    }
                }
            }
            let o = &mut out[digits[pos]];
            match self.domain {
                Domain::Linear => *o += p,
                Domain::Log => *o = o.max(p),
            }
            for j in (0..k).rev() {
                digits[j] += 1;
                if digits[j] < t.cards[j] {
                    break;
                }
                digits[j] = 0;
            }
        }
        self.normalize(&mut out, t.scope[pos])?;
        Ok(out)
    }

    fn damp(
        &self,
        raw: Vec<T>,
        old: &[T],
        lambda: T,
        var: usize,
    ) -> Result<Vec<T>, InferenceError> {
        if lambda == T::zero() {
            return Ok(raw);
        }
        let mut m: Vec<T> = raw
            .iter()
            .zip(old)
            .map(|(&r, &o)| {
                if r == o {
                    r
                } else {
                    (T::one() - lambda) * r + lambda * o
                }
            })
            .collect();
        self.normalize(&mut m, var)?;
        Ok(m)
    }

    fn beliefs(&self) -> Result<Vec<Vec<T>>, InferenceError> {
        (0..self.cards.len())
            .map(|v| {
                let mut b = self.evidence[v].clone();
                for &(f, p) in &self.adj[v] {
                    self.combine(&mut b, &self.f2v[f][p]);
                }
                self.normalize(&mut b, v)?;
                Ok(b)
            })
            .collect()
    }

    fn run(&mut self, params: &BpParams<T>) -> Result<(bool, usize), InferenceError> {
        let mut converged = false;
        let mut iterations = 0;
        while iterations < params.max_iters {
            iterations += 1;
            let mut delta = T::zero();
            match params.schedule {
                Schedule::Flooding => {
                    let mut v2f = self.v2f.clone();
                    for f in 0..self.tables.len() {
                        for p in 0..self.tables[f].0.arity() {
                            let m = self.var_to_factor(f, p)?;
                            delta = delta.max(change(&m, &self.v2f[f][p]));
                            v2f[f][p] = m;
                        }
                    }
                    self.v2f = v2f;
                    let mut f2v = self.f2v.clone();
                    for f in 0..self.tables.len() {
                        for p in 0..self.tables[f].0.arity() {
                            let var = self.tables[f].0.scope[p];
                            let raw = self.factor_to_var(f, p)?;
                            let m = self.damp(raw, &self.f2v[f][p], params.damping, var)?;
                            delta = delta.max(change(&m, &self.f2v[f][p]));
                            f2v[f][p] = m;
                        }
                    }
                    self.f2v = f2v;
                }
                Schedule::Sequential => {
                    for f in 0..self.tables.len() {
                        for p in 0..self.tables[f].0.arity() {
                            let m = self.var_to_factor(f, p)?;
                            delta = delta.max(change(&m, &self.v2f[f][p]));
                            self.v2f[f][p] = m;
                        }
                        for p in 0..self.tables[f].0.arity() {
                            let var = self.tables[f].0.scope[p];
                            let raw = self.factor_to_var(f, p)?;
                            let m = self.damp(raw, &self.f2v[f][p], params.damping, var)?;
                            delta = delta.max(change(&m, &self.f2v[f][p]));
                            self.f2v[f][p] = m;
                        }
                    }
                }
            }
            if delta < params.tol {
                converged = true;
                break;
            }
        }
        Ok((converged, iterations))
    }
}

fn change<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| if x == y { T::zero() } else { (x - y).abs() })
        .fold(T::zero(), T::max)
}

/// Sum-product belief propagation. Builtins expand with hard zero weights.
pub fn sum_product<T: Real>(
    graph: &FactorGraph,
    params: &BpParams<T>,
) -> Result<BeliefState<T>, InferenceError> {
    let mut e = Engine::new(graph, Domain::Linear)?;
    let (converged, iterations) = e.run(params)?;
    Ok(BeliefState {
        domain: Domain::Linear,
        beliefs: e.beliefs()?,
        converged,
        iterations,
    })
}

/// Log-domain max-product. Builtins expand with `e^-20` violation weights.
/// The decoded assignment is the per-variable argmax of the max-marginals.
pub fn min_sum<T: Real>(
    graph: &FactorGraph,
    params: &BpParams<T>,
) -> Result<(BeliefState<T>, Assignment), InferenceError> {
    let mut e = Engine::new(graph, Domain::Log)?;
    let (converged, iterations) = e.run(params)?;
    let beliefs = e.beliefs()?;
    let decoded = beliefs.iter().map(|b| argmax(b)).collect();
    Ok((
        BeliefState {
            domain: Domain::Log,
            beliefs,
            converged,
            iterations,
        },
        decoded,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golden::{exact_marginals, linf_distance, map_bruteforce};
    use crate::graph::FactorKind;

    fn unary() -> FactorGraph {
        let mut g = FactorGraph::with_variables(&[2]);
        g.add_factor(vec![0], FactorKind::Table(vec![0.3, 0.7]));
        g
    }

    #[test]
    fn unary_one_iteration() {
        let b = sum_product::<f64>(&unary(), &BpParams::flooding(1)).unwrap();
        assert!((b.beliefs[0][0] - 0.3).abs() < 1e-12);
        let b = sum_product::<f64>(&unary(), &BpParams::default()).unwrap();
        assert!(b.converged && b.iterations <= 2);
        let (_, a) = min_sum::<f64>(&unary(), &BpParams::default()).unwrap();
        assert_eq!(a, vec![1]);
    }

    fn chain() -> FactorGraph {
        let mut g = FactorGraph::with_variables(&[2, 3, 2]);
        g.add_factor(vec![0], FactorKind::Table(vec![0.2, 0.8]));
        g.add_factor(
            vec![0, 1],
            FactorKind::Table(vec![1.0, 2.0, 0.5, 0.3, 1.0, 4.0]),
        );
        g.add_factor(
            vec![1, 2],
            FactorKind::Table(vec![0.9, 0.1, 0.4, 0.6, 0.2, 0.2]),
        );
        g
    }

    #[test]
    fn chain_is_exact_in_both_schedules() {
        let g = chain();
        let exact = exact_marginals::<f64>(&g).unwrap();
        for schedule in [Schedule::Flooding, Schedule::Sequential] {
            let p = BpParams {
                schedule,
                ..BpParams::default()
            };
            let b = sum_product::<f64>(&g, &p).unwrap();
            assert!(b.converged);
            assert!(linf_distance(&b.beliefs, &exact) < 1e-9);
        }
        let m32 = sum_product::<f32>(&g, &BpParams::default()).unwrap();
        let exact32 = exact_marginals::<f32>(&g).unwrap();
        assert!(linf_distance(&m32.beliefs, &exact32) < 1e-5);
    }

    #[test]
    fn damping_keeps_fixed_point() {
        let g = chain();
        let a = sum_product::<f64>(&g, &BpParams::default()).unwrap();
        let p = BpParams {
            damping: 0.5,
            max_iters: 500,
            ..BpParams::default()
        };
        let b = sum_product::<f64>(&g, &p).unwrap();
        assert!(b.converged);
        assert!(linf_distance(&a.beliefs, &b.beliefs) < 1e-5);
    }

    #[test]
    fn chain_min_sum_matches_map() {
        let g = chain();
        let (_, a) = min_sum::<f64>(&g, &BpParams::default()).unwrap();
        assert_eq!(a, map_bruteforce::<f64>(&g).unwrap());
    }

    #[test]
    fn hard_contradiction_is_an_error() {
        let mut g = FactorGraph::with_variables(&[2, 2]);
        g.add_factor(vec![0, 1], FactorKind::Table(vec![1.0, 0.0, 0.0, 0.0]));
        g.set_evidence(1, 1).unwrap();
        assert!(matches!(
            sum_product::<f64>(&g, &BpParams::default()),
            Err(InferenceError::ZeroMessage { .. })
        ));
    }

    #[test]
    fn evidence_clamps_belief() {
        let mut g = chain();
        g.set_evidence(1, 2).unwrap();
        let b = sum_product::<f64>(&g, &BpParams::default()).unwrap();
        assert_eq!(b.beliefs[1], vec![0.0, 0.0, 1.0]);
        let exact = exact_marginals::<f64>(&g).unwrap();
        assert!(linf_distance(&b.beliefs, &exact) < 1e-9);
    }
}
