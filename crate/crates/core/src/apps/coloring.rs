use super::{Benchmark, Oracle};
use crate::graph::{FactorGraph, FactorKind};
use crate::image::Mode;

/// One variable per vertex and a not-equal relation per edge.
pub fn build_coloring(edges: &[(usize, usize)], k: usize) -> Benchmark {
    let n = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    let mut graph = FactorGraph::with_variables(&vec![k; n]);
    for &(a, b) in edges {
        graph.add_factor(vec![a, b], FactorKind::AllDifferent);
    }
    Benchmark {
        name: format!("coloring-{n}v-{}e-k{k}", edges.len()),
        graph,
        oracle: Oracle::ProperColoring(edges.to_vec()),
        oracle_description: "proper-colouring check on every edge".into(),
        mode: Mode::Gibbs,
        tolerance: 0.0,
    }
}

pub fn is_proper_coloring(edges: &[(usize, usize)], colors: &[usize]) -> bool {
    edges.iter().all(|&(a, b)| colors[a] != colors[b])
}

/// Number of proper `k`-colourings of an `n`-vertex graph, by enumeration.
pub fn count_proper_colorings(edges: &[(usize, usize)], n: usize, k: usize) -> u64 {
    let mut colors = vec![0usize; n];
    let mut count = 0;
    loop {
        if is_proper_coloring(edges, &colors) {
            count += 1;
        }
        let mut i = 0;
        loop {
            if i == n {
                return count;
            }
            colors[i] += 1;
            if colors[i] < k {
                break;
            }
            colors[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colouring_counts() {
        let tri = [(0, 1), (1, 2), (0, 2)];
        assert_eq!(count_proper_colorings(&tri, 3, 3), 6);
        assert_eq!(count_proper_colorings(&[(0, 1)], 2, 2), 2);
        let c5: Vec<(usize, usize)> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
        // chromatic polynomial of C5 at 3: (k-1)^5 - (k-1) = 30
        assert_eq!(count_proper_colorings(&c5, 5, 3), 30);
        let b = build_coloring(&tri, 3);
        assert_eq!((b.graph.variables.len(), b.graph.factors.len()), (3, 3));
    }
}
