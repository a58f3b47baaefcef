use super::{Benchmark, Oracle};
use crate::graph::{FactorGraph, FactorKind};
use crate::image::Mode;

/// Parity-check matrix of the (7,4) Hamming code: column `j` is `j + 1` in
/// binary, least significant bit in the first row.
pub const PARITY_CHECK: [[u8; 7]; 3] = [
    [1, 0, 1, 0, 1, 0, 1],
    [0, 1, 1, 0, 0, 1, 1],
    [0, 0, 0, 1, 1, 1, 1],
];

/// All seven non-zero combinations of the rows of [`PARITY_CHECK`]: an
/// overcomplete check matrix for the same code. Loopy sum-product on the
/// three-row matrix cannot correct flips on bits covered by a single check.
pub const REDUNDANT_PARITY_CHECK: [[u8; 7]; 7] = [
    [1, 0, 1, 0, 1, 0, 1],
    [0, 1, 1, 0, 0, 1, 1],
    [1, 1, 0, 0, 1, 1, 0],
    [0, 0, 0, 1, 1, 1, 1],
    [1, 0, 1, 1, 0, 1, 0],
    [0, 1, 1, 1, 1, 0, 0],
    [1, 1, 0, 1, 0, 0, 1],
];

pub fn syndrome(word: &[u8; 7]) -> usize {
    PARITY_CHECK
        .iter()
        .enumerate()
        .map(|(i, row)| (row.iter().zip(word).map(|(h, x)| h * x).sum::<u8>() as usize % 2) << i)
        .sum()
}

/// Nearest codeword: a non-zero syndrome names the flipped position.
pub fn syndrome_decode(received: &[u8; 7]) -> [u8; 7] {
    let mut w = *received;
    let s = syndrome(received);
    if s != 0 {
        w[s - 1] ^= 1;
    }
    w
}

/// All 16 codewords in increasing binary order.
pub fn codewords() -> Vec<[u8; 7]> {
    (0u32..128)
        .map(|x| {
            let mut w = [0u8; 7];
            for (j, b) in w.iter_mut().enumerate() {
                *b = ((x >> (6 - j)) & 1) as u8;
            }
            w
        })
        .filter(|w| syndrome(w) == 0)
        .collect()
}

/// Decoding benchmark for one received word over a channel flipping each bit with probability `p`.
pub fn build_parity_code(received: &[u8; 7], p: f64) -> Benchmark {
    build_parity_code_with(&PARITY_CHECK, received, p)
}

/// Same as [`build_parity_code`] with one PARITY factor per row of `checks`.
pub fn build_parity_code_with(checks: &[[u8; 7]], received: &[u8; 7], p: f64) -> Benchmark {
    let mut graph = FactorGraph::with_variables(&[2; 7]);
    for row in checks {
        let scope: Vec<usize> = (0..7).filter(|&j| row[j] == 1).collect();
        graph.add_factor(scope, FactorKind::Parity);
    }
    for (j, &bit) in received.iter().enumerate() {
        let lik = if bit == 0 {
            vec![1.0 - p, p]
        } else {
            vec![p, 1.0 - p]
        };
        graph.add_factor(vec![j], FactorKind::Table(lik));
    }
    let decoded = syndrome_decode(received);
    let word: String = received.iter().map(|b| char::from(b'0' + b)).collect();
    Benchmark {
        name: format!("hamming-{word}"),
        graph,
        oracle: Oracle::Assignment(decoded.iter().map(|&b| b as usize).collect()),
        oracle_description: "syndrome decoding".into(),
        mode: Mode::SumProd,
        tolerance: 0.0,
    }
}

/// Every codeword with every single-bit error: `(codeword, flipped position, benchmark)`.
pub fn hamming_suite(checks: &[[u8; 7]], p: f64) -> Vec<([u8; 7], usize, Benchmark)> {
    let mut out = Vec::with_capacity(112);
    for cw in codewords() {
        for j in 0..7 {
            let mut r = cw;
            r[j] ^= 1;
            out.push((cw, j, build_parity_code_with(checks, &r, p)));
        }
    }
    out
}
