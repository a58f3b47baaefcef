use super::{Assignment, InferenceError};
use crate::graph::{FactorGraph, Table, SOFT_EPSILON};
use crate::scalar::Real;

/// Largest joint state space the enumeration oracles accept.
pub const ENUMERATION_LIMIT: u128 = 1 << 24;

/// Product of all cardinalities (saturating).
pub fn state_space_size(graph: &FactorGraph) -> u128 {
    graph
        .variables
        .iter()
        .fold(1u128, |acc, v| acc.saturating_mul(v.cardinality as u128))
}

fn check_bound(graph: &FactorGraph) -> Result<(), InferenceError> {
    let size = state_space_size(graph);
    if size > ENUMERATION_LIMIT {
        return Err(InferenceError::StateSpaceTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Visits every assignment consistent with the evidence, in lexicographic order.
fn for_each_assignment(graph: &FactorGraph, mut visit: impl FnMut(&[usize])) {
    let n = graph.variables.len();
    let mut a: Vec<usize> = graph
        .variables
        .iter()
        .map(|v| v.evidence.unwrap_or(0))
        .collect();
    let free: Vec<usize> = (0..n)
        .filter(|&i| graph.variables[i].evidence.is_none())
        .collect();
    loop {
        visit(&a);
        let mut k = free.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            let v = free[k];
            a[v] += 1;
            if a[v] < graph.variables[v].cardinality {
                break;
            }
            a[v] = 0;
        }
    }
}

/// Exact marginals by enumeration; builtins use hard (zero-weight) violations.
pub fn exact_marginals<T: Real>(graph: &FactorGraph) -> Result<Vec<Vec<T>>, InferenceError> {
    check_bound(graph)?;
    let tables: Vec<Table> = graph.tables(0.0)?;
    let tables: Vec<(Table, Vec<T>)> = tables
        .into_iter()
        .map(|t| {
            let v = t.values.iter().map(|&x| T::of(x)).collect();
            (t, v)
        })
        .collect();
    let mut sums: Vec<Vec<T>> = graph
        .variables
        .iter()
        .map(|v| vec![T::zero(); v.cardinality])
        .collect();
    let mut z = T::zero();
    for_each_assignment(graph, |a| {
        let mut p = T::one();
        for (t, vals) in &tables {
            let row: usize = t
                .scope
                .iter()
                .zip(t.strides())
                .map(|(&v, s)| a[v] * s)
                .sum();
            p *= vals[row];
            if p == T::zero() {
                return;
            }
        }
        z += p;
        for (v, &x) in a.iter().enumerate() {
            sums[v][x] += p;
        }
    });
    if z <= T::zero() {
        return Err(InferenceError::ZeroPartition);
    }
    for m in &mut sums {
        for x in m.iter_mut() {
            *x /= z;
        }
    }
    Ok(sums)
}

/// Maximizer of the product of factors by enumeration; ties go to the
/// lexicographically smallest assignment. Builtins use `e^-20` violations.
pub fn map_bruteforce<T: Real>(graph: &FactorGraph) -> Result<Assignment, InferenceError> {
    check_bound(graph)?;
    let tables = graph.tables(SOFT_EPSILON)?;
    let logs: Vec<(Table, Vec<T>)> = tables
        .into_iter()
        .map(|t| {
            let v = t.values.iter().map(|&x| T::of(x).ln()).collect();
            (t, v)
        })
        .collect();
    let mut best: Option<(T, Assignment)> = None;
    for_each_assignment(graph, |a| {
        let mut s = T::zero();
        for (t, vals) in &logs {
            let row: usize = t
                .scope
                .iter()
                .zip(t.strides())
                .map(|(&v, st)| a[v] * st)
                .sum();
            s += vals[row];
        }
        if s == T::neg_infinity() {
            return;
        }
        if best.as_ref().map_or(true, |(b, _)| s > *b) {
            best = Some((s, a.to_vec()));
        }
    });
    best.map(|b| b.1).ok_or(InferenceError::ZeroPartition)
}
