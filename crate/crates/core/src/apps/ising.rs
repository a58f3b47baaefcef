use super::{Benchmark, Oracle};
use crate::graph::{FactorGraph, FactorKind};
use crate::image::Mode;

/// Binary chain with coupling `j` on consecutive pairs and field `h` on every site.
pub fn build_ising_chain(n: usize, j: f64, h: f64) -> Benchmark {
    assert!(n >= 2, "an Ising chain needs at least two sites");
    let mut graph = FactorGraph::with_variables(&vec![2; n]);
    for i in 0..n - 1 {
        graph.add_factor(vec![i, i + 1], FactorKind::PairwiseIsing(j));
    }
    if h != 0.0 {
        for i in 0..n {
            graph.add_factor(vec![i], FactorKind::Table(vec![h.exp(), (-h).exp()]));
        }
    }
    Benchmark {
        name: format!("ising-n{n}-j{j}-h{h}"),
        graph,
        oracle: Oracle::Marginals(transfer_matrix_marginals(n, j, h)),
        oracle_description: "transfer-matrix exact marginals".into(),
        mode: Mode::Gibbs,
        tolerance: 0.05,
    }
}

type M2 = [[f64; 2]; 2];

fn mat_mul(a: &M2, b: &M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            for j in 0..2 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn mat_pow(a: &M2, e: usize) -> M2 {
    let mut r = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..e {
        r = mat_mul(&r, a);
    }
    r
}

/// Site marginals from powers of the transfer matrix
/// `T(x, y) = e^{J s_x s_y} e^{h s_y}`, with `s = +1` for value 0.
pub fn transfer_matrix_marginals(n: usize, j: f64, h: f64) -> Vec<Vec<f64>> {
    let s = [1.0, -1.0];
    let field = [h.exp(), (-h).exp()];
    let mut t = [[0.0; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            t[x][y] = (j * s[x] * s[y]).exp() * field[y];
        }
    }
    (0..n)
        .map(|i| {
            let left = mat_pow(&t, i);
            let right = mat_pow(&t, n - 1 - i);
            let w: Vec<f64> = (0..2)
                .map(|a| {
                    let l: f64 = (0..2).map(|x| field[x] * left[x][a]).sum();
                    let r: f64 = right[a].iter().sum();
                    l * r
                })
                .collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|x| x / z).collect()
        })
        .collect()
}
