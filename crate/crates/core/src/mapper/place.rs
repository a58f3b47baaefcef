use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Cluster, MapError};
use crate::graph::FactorGraph;
use crate::image::Coord;
use crate::machine::router::manhattan;

/// Grid coordinate of every cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub rows: usize,
    pub cols: usize,
    pub coords: Vec<Coord>,
}

impl Placement {
    pub fn row_major(clusters: usize, rows: usize, cols: usize) -> Result<Self, MapError> {
        if clusters > rows * cols {
            return Err(MapError::GridTooSmall {
                clusters,
                cells: rows * cols,
            });
        }
        Ok(Placement {
            rows,
            cols,
            coords: (0..clusters).map(|i| (i / cols, i % cols)).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealParams {
    /// Initial temperature is `t0_scale * cost / edges`.
    pub t0_scale: f64,
    pub cooling: f64,
    /// Proposals per epoch are `epoch_scale * clusters`.
    pub epoch_scale: usize,
    pub max_epochs: usize,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams {
            t0_scale: 2.0,
            cooling: 0.95,
            epoch_scale: 100,
            max_epochs: 50,
        }
    }
}

/// Weighted cluster-level edges: `(a, b, number of graph edges between them)`, `a < b`.
pub fn cluster_edges(clusters: &[Cluster], graph: &FactorGraph) -> Vec<(usize, usize, u64)> {
    let mut var_home = vec![0; graph.variables.len()];
    for (i, c) in clusters.iter().enumerate() {
        for &v in &c.vars {
            var_home[v] = i;
        }
    }
    let mut w: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (i, c) in clusters.iter().enumerate() {
        for &f in &c.factors {
            for &v in &graph.factors[f].scope {
                let j = var_home[v];
                if j != i {
                    *w.entry((i.min(j), i.max(j))).or_default() += 1;
                }
            }
        }
    }
    w.into_iter().map(|((a, b), n)| (a, b, n)).collect()
}

/// Total Manhattan length of all inter-cluster edges.
pub fn edge_cost(coords: &[Coord], edges: &[(usize, usize, u64)]) -> u64 {
    edges
        .iter()
        .map(|&(a, b, w)| w * manhattan(coords[a], coords[b]) as u64)
        .sum()
}

pub fn cost(placement: &Placement, clusters: &[Cluster], graph: &FactorGraph) -> u64 {
    edge_cost(&placement.coords, &cluster_edges(clusters, graph))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaceReport {
    pub placement: Placement,
    pub initial_cost: u64,
    pub final_cost: u64,
}

/// Simulated annealing over swaps of grid positions, starting row-major.
/// Returns the best placement seen, so the result never costs more than the start.
pub fn place(
    n: usize,
    edges: &[(usize, usize, u64)],
    rows: usize,
    cols: usize,
    seed: u64,
    params: &AnnealParams,
) -> Result<PlaceReport, MapError> {
    let start = Placement::row_major(n, rows, cols)?;
    let initial_cost = edge_cost(&start.coords, edges);
    if initial_cost == 0 || n < 2 {
        return Ok(PlaceReport {
            placement: start,
            initial_cost,
            final_cost: initial_cost,
        });
    }
    let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    let cells = rows * cols;
    let mut pos: Vec<usize> = (0..n).collect();
    let mut occupant: Vec<Option<usize>> = (0..cells).map(|i| (i < n).then_some(i)).collect();
    let coord = |p: usize| (p / cols, p % cols);
    let local = |pos: &[usize], a: usize, skip: Option<usize>| -> u64 {
        adj[a]
            .iter()
            .filter(|&&(b, _)| Some(b) != skip)
            .map(|&(b, w)| w * manhattan(coord(pos[a]), coord(pos[b])) as u64)
            .sum()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edge_count: u64 = edges.iter().map(|e| e.2).sum();
    let mut temp = params.t0_scale * initial_cost as f64 / edge_count.max(1) as f64;
    let mut current = initial_cost;
    let mut best = (initial_cost, pos.clone());
    for _ in 0..params.max_epochs {
        let mut accepted = 0usize;
        for _ in 0..params.epoch_scale * n {
            let a = rng.gen_range(0..n);
            let q = {
                let r = rng.gen_range(0..cells - 1);
                if r >= pos[a] {
                    r + 1
                } else {
                    r
                }
            };
            let p = pos[a];
            let b = occupant[q];
            let before = local(&pos, a, None) + b.map_or(0, |b| local(&pos, b, Some(a)));
            pos[a] = q;
            if let Some(b) = b {
                pos[b] = p;
            }
            let after = local(&pos, a, None) + b.map_or(0, |b| local(&pos, b, Some(a)));
            let delta = after as i64 - before as i64;
            if delta <= 0 || rng.gen::<f64>() < (-(delta as f64) / temp).exp() {
                accepted += 1;
                occupant[q] = Some(a);
                occupant[p] = b;
                current = (current as i64 + delta) as u64;
                if current < best.0 {
                    best = (current, pos.clone());
                }
            } else {
                pos[a] = p;
                if let Some(b) = b {
                    pos[b] = q;
                }
            }
        }
        if accepted == 0 {
            break;
        }
        temp *= params.cooling;
    }
    let placement = Placement {
        rows,
        cols,
        coords: best.1.iter().map(|&p| coord(p)).collect(),
    };
    Ok(PlaceReport {
        placement,
        initial_cost,
        final_cost: best.0,
    })
}
