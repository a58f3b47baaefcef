//! Compiler from factor graphs to machine images: lowering, clustering,
//! placement and image emission.

mod cluster;
mod emit;
mod lower;
mod place;

pub use cluster::{cluster, Cluster};
pub use emit::{color_variables, emit_image, relation_program, EmitOptions};
pub use lower::{lower, Lowered, MAX_PARITY_ARITY};
pub use place::{cluster_edges, cost, edge_cost, place, AnnealParams, PlaceReport, Placement};

pub use crate::machine::Capacities;

use thiserror::Error;

use crate::graph::{FactorGraph, GraphError, SOFT_EPSILON};
use crate::image::{Coord, MachineImage, Mode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("factor {factor} needs {words} table words after lowering (limit {limit})")]
    TableTooLarge {
        factor: usize,
        words: usize,
        limit: usize,
    },
    #[error("{0}")]
    NodeTooLarge(String),
    #[error("{clusters} clusters do not fit a grid of {cells} cells")]
    GridTooSmall { clusters: usize, cells: usize },
    #[error("cell ({}, {}): {msg}", cell.0, cell.1)]
    Capacity { cell: Coord, msg: String },
    #[error("factor {factor} needs a {len}-op program")]
    ProgramTooLong { factor: usize, len: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileOptions {
    pub rows: usize,
    pub cols: usize,
    pub mode: Mode,
    pub seed: u64,
    pub threshold: Option<i64>,
    pub caps: Capacities,
    pub anneal: AnnealParams,
    pub gibbs_period: Option<u64>,
}

impl CompileOptions {
    pub fn new(rows: usize, cols: usize, mode: Mode) -> Self {
        CompileOptions {
            rows,
            cols,
            mode,
            seed: 0,
            threshold: None,
            caps: Capacities::default(),
            anneal: AnnealParams::default(),
            gibbs_period: None,
        }
    }
}

/// Everything a compile produced, for reporting.
#[derive(Debug, Clone)]
pub struct Mapping {
    pub lowered: Lowered,
    pub clusters: Vec<Cluster>,
    pub placement: Placement,
    pub initial_cost: u64,
    pub final_cost: u64,
    pub image: MachineImage,
}

impl Mapping {
    /// Highest per-cell use of each resource: `(vars, shadows, rels, table words)`.
    pub fn utilization(&self) -> (usize, usize, usize, usize) {
        let mut u = (0, 0, 0, 0);
        for c in &self.image.cells {
            u.0 = u.0.max(c.vars.len());
            u.1 = u.1.max(c.shadows.len());
            u.2 = u.2.max(c.rels.len());
            u.3 = u.3.max(c.table_words());
        }
        u
    }

    /// Multi-line human-readable summary.
    pub fn summary(&self, caps: &Capacities) -> String {
        let u = self.utilization();
        format!(
            "clusters={}\nwires={}\ncost_initial={}\ncost_final={}\nmax_vars={}/{}\nmax_shadows={}/{}\nmax_relations={}/{}\nmax_table_words={}/{}\n",
            self.clusters.len(),
            self.image.wires.len(),
            self.initial_cost,
            self.final_cost,
            u.0,
            caps.vars,
            u.1,
            caps.shadows,
            u.2,
            caps.rels,
            u.3,
            caps.table_words
        )
    }
}

/// Violation weight used when lowering for `mode`.
pub fn lowering_epsilon(mode: Mode) -> f64 {
    match mode {
        Mode::SumProd => 0.0,
        Mode::MinSum | Mode::Gibbs => SOFT_EPSILON,
    }
}

/// Lowers, clusters, places and emits `graph`.
pub fn compile(graph: &FactorGraph, opts: &CompileOptions) -> Result<Mapping, MapError> {
    let issues = graph.validate();
    if !issues.is_empty() {
        return Err(MapError::Graph(GraphError::Invalid(issues)));
    }
    let lowered = lower(graph, lowering_epsilon(opts.mode), opts.caps.table_words)?;
    let clusters = cluster(&lowered.graph, &opts.caps)?;
    let edges = cluster_edges(&clusters, &lowered.graph);
    let report = place(
        clusters.len(),
        &edges,
        opts.rows,
        opts.cols,
        opts.seed,
        &opts.anneal,
    )?;
    let emit = EmitOptions {
        mode: opts.mode,
        seed: opts.seed,
        threshold: opts.threshold,
        caps: opts.caps,
        gibbs_period: opts.gibbs_period,
    };
    let image = emit_image(&report.placement, &clusters, &lowered.graph, &emit)?;
    Ok(Mapping {
        lowered,
        clusters,
        placement: report.placement,
        initial_cost: report.initial_cost,
        final_cost: report.final_cost,
        image,
    })
}
