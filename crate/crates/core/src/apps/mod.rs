//! Demonstration workloads with independent oracles, and the verification driver.

mod coloring;
mod hamming;
mod ising;
mod manifest;
mod random;
mod sudoku;

pub use coloring::{build_coloring, count_proper_colorings, is_proper_coloring};
pub use hamming::{
    build_parity_code, build_parity_code_with, codewords, hamming_suite, syndrome, syndrome_decode,
    PARITY_CHECK, REDUNDANT_PARITY_CHECK,
};
pub use ising::{build_ising_chain, transfer_matrix_marginals};
pub use manifest::{load_manifest, parse_results, write_manifest, Results};
pub use random::{random_acyclic, RandomGraphParams};
pub use sudoku::{build_sudoku, parse_grid, solve_count, Grid};

use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{FactorGraph, GraphError};
use crate::image::Mode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AppError {
    #[error("puzzle has no solution")]
    Contradictory,
    #[error("puzzle solution is not unique")]
    NotUnique,
    #[error("{0}")]
    Invalid(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("results are missing variable {0}")]
    MissingVariable(usize),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Reference answer of a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    Assignment(Vec<usize>),
    Marginals(Vec<Vec<f64>>),
    /// Any assignment where the two ends of every listed edge differ.
    ProperColoring(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub name: String,
    /// The graph, evidence included.
    pub graph: FactorGraph,
    pub oracle: Oracle,
    pub oracle_description: String,
    pub mode: Mode,
    pub tolerance: f64,
}

impl Benchmark {
    pub fn evidence(&self) -> Vec<(usize, usize)> {
        self.graph.evidence()
    }

    pub fn num_variables(&self) -> usize {
        self.graph.variables.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// `(variable, passed, detail)`.
    pub lines: Vec<(usize, bool, String)>,
}

impl Report {
    pub fn passed(&self) -> usize {
        self.lines.iter().filter(|l| l.1).count()
    }

    pub fn all_passed(&self) -> bool {
        self.passed() == self.lines.len()
    }
}

impl std::fmt::Display for Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::new();
        for (v, ok, detail) in &self.lines {
            let _ = writeln!(s, "var {v} {} {detail}", if *ok { "PASS" } else { "FAIL" });
        }
        let _ = writeln!(
            s,
            "RESULT {} {}/{}",
            if self.all_passed() { "PASS" } else { "FAIL" },
            self.passed(),
            self.lines.len()
        );
        f.write_str(&s)
    }
}

/// Compares per-variable results with the benchmark oracle.
pub fn verify(bench: &Benchmark, results: &Results) -> Result<Report, AppError> {
    let n = bench.num_variables();
    let assignment = |results: &Results| -> Result<Vec<usize>, AppError> {
        (0..n)
            .map(|v| results.value(v).ok_or(AppError::MissingVariable(v)))
            .collect()
    };
    let mut lines = Vec::with_capacity(n);
    match &bench.oracle {
        Oracle::Assignment(want) => {
            let got = assignment(results)?;
            for v in 0..n {
                lines.push((
                    v,
                    got[v] == want[v],
                    format!("expected {} got {}", want[v], got[v]),
                ));
            }
        }
        Oracle::Marginals(want) => {
            if matches!(results, Results::Assignment(_)) {
                return Err(AppError::Invalid(
                    "marginal oracle needs marginal results".into(),
                ));
            }
            for v in 0..n {
                let got = results.marginal(v).ok_or(AppError::MissingVariable(v))?;
                if got.len() != want[v].len() {
                    return Err(AppError::Invalid(format!(
                        "variable {v}: {} values given, domain has {}",
                        got.len(),
                        want[v].len()
                    )));
                }
                let d = got
                    .iter()
                    .zip(&want[v])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                lines.push((
                    v,
                    d <= bench.tolerance,
                    format!("linf {d:.3e} tolerance {:.3e}", bench.tolerance),
                ));
            }
        }
        Oracle::ProperColoring(edges) => {
            let got = assignment(results)?;
            for v in 0..n {
                let clash = edges
                    .iter()
                    .find(|&&(a, b)| (a == v || b == v) && got[a] == got[b]);
                let detail = match clash {
                    Some(&(a, b)) => format!("colour {} clashes on edge {a}-{b}", got[v]),
                    None => format!("colour {}", got[v]),
                };
                lines.push((v, clash.is_none(), detail));
            }
        }
    }
    Ok(Report { lines })
}
