use std::collections::BTreeMap;

use super::{Cluster, MapError, Placement};
use crate::graph::{FactorGraph, FactorKind};
use crate::image::{
    CellImage, Coord, MachineImage, Mode, RelSlot, ShadowSlot, SlotRef, VarSlot, Wire,
};
use crate::machine::fixed::{quantize, quantize_log_lenient, NumMode};
use crate::machine::microprog::{MicroOp, Operand, MAX_PROGRAM_LEN, OUTPUT_BASE};
use crate::machine::router::manhattan;
use crate::machine::Capacities;

#[derive(Debug, Clone, PartialEq)]
pub struct EmitOptions {
    pub mode: Mode,
    pub seed: u64,
    /// Per-cell change threshold; the mode default when `None`.
    pub threshold: Option<i64>,
    pub caps: Capacities,
    /// GIBBS resampling period; derived from the image when `None`.
    pub gibbs_period: Option<u64>,
}

impl EmitOptions {
    pub fn new(mode: Mode) -> Self {
        EmitOptions {
            mode,
            seed: 0,
            threshold: None,
            caps: Capacities::default(),
            gibbs_period: None,
        }
    }
}

/// Greedy colouring of the variable interaction graph in id order.
pub fn color_variables(graph: &FactorGraph) -> Vec<usize> {
    let n = graph.variables.len();
    let mut nbrs = vec![Vec::new(); n];
    for f in &graph.factors {
        for &a in &f.scope {
            for &b in &f.scope {
                if a != b {
                    nbrs[a].push(b);
                }
            }
        }
    }
    let mut color = vec![usize::MAX; n];
    for v in 0..n {
        let used: Vec<usize> = nbrs[v]
            .iter()
            .map(|&u| color[u])
            .filter(|&c| c != usize::MAX)
            .collect();
        color[v] = (0..)
            .find(|c| !used.contains(c))
            .expect("some colour is free");
    }
    color
}

struct Layout {
    home: Vec<usize>,
    coords: Vec<Coord>,
    /// Per cluster: input shadows `(var)` then return shadows `(var, from cluster)`.
    inputs: Vec<Vec<usize>>,
    returns: Vec<Vec<(usize, usize)>>,
}

impl Layout {
    fn input_slot(&self, c: usize, v: usize) -> usize {
        self.inputs[c]
            .iter()
            .position(|&x| x == v)
            .expect("input shadow exists")
    }

    fn return_slots(&self, c: usize, v: usize) -> Vec<usize> {
        let base = self.inputs[c].len();
        self.returns[c]
            .iter()
            .enumerate()
            .filter(|(_, r)| r.0 == v)
            .map(|(i, _)| base + i)
            .collect()
    }
}

/// Builds the cell programs, tables, shadows and wires for a placed clustering.
pub fn emit_image(
    placement: &Placement,
    clusters: &[Cluster],
    graph: &FactorGraph,
    opts: &EmitOptions,
) -> Result<MachineImage, MapError> {
    let n = graph.variables.len();
    let mut home = vec![usize::MAX; n];
    for (i, c) in clusters.iter().enumerate() {
        for &v in &c.vars {
            home[v] = i;
        }
    }
    if let Some(v) = home.iter().position(|&h| h == usize::MAX) {
        return Err(MapError::Invalid(format!(
            "variable {v} is not assigned to a cluster"
        )));
    }
    let inputs: Vec<Vec<usize>> = clusters
        .iter()
        .map(|c| c.remote_vars(graph).into_iter().collect())
        .collect();
    let mut returns = vec![Vec::new(); clusters.len()];
    for (a, ins) in inputs.iter().enumerate() {
        for &v in ins {
            returns[home[v]].push((v, a));
        }
    }
    for r in &mut returns {
        r.sort_unstable();
    }
    let layout = Layout {
        home,
        coords: placement.coords.clone(),
        inputs,
        returns,
    };

    let num = opts.mode.num_mode();
    let colors = color_variables(graph);
    let threshold = opts.threshold.unwrap_or(opts.mode.default_threshold());
    let mut cells = Vec::with_capacity(clusters.len());
    for (i, c) in clusters.iter().enumerate() {
        let coord = layout.coords[i];
        let cap = |msg: String| MapError::Capacity { cell: coord, msg };
        let nshadows = layout.inputs[i].len() + layout.returns[i].len();
        if c.vars.len() > opts.caps.vars {
            return Err(cap(format!(
                "{} variables (limit {})",
                c.vars.len(),
                opts.caps.vars
            )));
        }
        if c.factors.len() > opts.caps.rels {
            return Err(cap(format!(
                "{} relations (limit {})",
                c.factors.len(),
                opts.caps.rels
            )));
        }
        if nshadows > opts.caps.shadows {
            return Err(cap(format!(
                "{nshadows} shadow slots (limit {})",
                opts.caps.shadows
            )));
        }
        let mut cell = CellImage::new(coord, threshold);
        for (k, &v) in c.vars.iter().enumerate() {
            let var = &graph.variables[v];
            cell.vars.push(VarSlot {
                slot: k,
                var: v,
                card: var.cardinality,
                evidence: var.evidence,
                color: (opts.mode == Mode::Gibbs).then_some(colors[v]),
            });
        }
        for (k, &v) in layout.inputs[i].iter().enumerate() {
            cell.shadows.push(ShadowSlot {
                slot: k,
                var: v,
                src: layout.coords[layout.home[v]],
            });
        }
        for (k, &(v, a)) in layout.returns[i].iter().enumerate() {
            cell.shadows.push(ShadowSlot {
                slot: layout.inputs[i].len() + k,
                var: v,
                src: layout.coords[a],
            });
        }
        let slot_of = |v: usize| -> SlotRef {
            match c.vars.iter().position(|&x| x == v) {
                Some(k) => SlotRef::Var(k),
                None => SlotRef::Shadow(layout.input_slot(i, v)),
            }
        };
        let scopes: Vec<Vec<SlotRef>> = c
            .factors
            .iter()
            .map(|&f| graph.factors[f].scope.iter().map(|&v| slot_of(v)).collect())
            .collect();
        for (r, &f) in c.factors.iter().enumerate() {
            let values = match &graph.factors[f].kind {
                FactorKind::Table(t) => t,
                _ => {
                    return Err(MapError::Invalid(format!(
                        "factor {f} must be lowered before emission"
                    )))
                }
            };
            let table = match num {
                NumMode::Linear => {
                    quantize(values, NumMode::Linear)
                        .map_err(|e| MapError::Invalid(format!("factor {f}: {e}")))?
                        .raw
                }
                NumMode::Log => {
                    quantize_log_lenient(&values.iter().map(|x| x.ln()).collect::<Vec<_>>())
                }
            };
            let program = relation_program(opts.mode, r, &scopes, &|s| match s {
                SlotRef::Var(k) => layout.return_slots(i, c.vars[k]),
                SlotRef::Shadow(_) => Vec::new(),
            });
            if program.len() > MAX_PROGRAM_LEN {
                return Err(MapError::ProgramTooLong {
                    factor: f,
                    len: program.len(),
                });
            }
            cell.rels.push(RelSlot {
                slot: r,
                factor: f,
                scope: scopes[r].clone(),
                table,
                program,
            });
        }
        if cell.table_words() > opts.caps.table_words {
            return Err(cap(format!(
                "{} table words (limit {})",
                cell.table_words(),
                opts.caps.table_words
            )));
        }
        cells.push(cell);
    }

    let mut wires = Vec::new();
    for (a, ins) in layout.inputs.iter().enumerate() {
        for (k, &v) in ins.iter().enumerate() {
            let h = layout.home[v];
            wires.push(Wire {
                var: v,
                src: layout.coords[h],
                dst: layout.coords[a],
                dst_slot: k,
            });
        }
    }
    for (h, rets) in layout.returns.iter().enumerate() {
        for (k, &(v, a)) in rets.iter().enumerate() {
            wires.push(Wire {
                var: v,
                src: layout.coords[a],
                dst: layout.coords[h],
                dst_slot: layout.inputs[h].len() + k,
            });
        }
    }

    if opts.mode == Mode::Gibbs {
        let period = opts
            .gibbs_period
            .unwrap_or_else(|| gibbs_period(&cells, &wires));
        for cell in &mut cells {
            cell.gibbs_period = Some((period, 0));
        }
    }
    cells.sort_by_key(|c| c.coord);
    Ok(MachineImage {
        rows: placement.rows,
        cols: placement.cols,
        mode: opts.mode,
        seed: opts.seed,
        cells,
        wires,
    })
}

/// A resampling period long enough for a value change to reach every
/// neighbour and for the resulting conditionals to return before the next tick.
fn gibbs_period(cells: &[CellImage], wires: &[Wire]) -> u64 {
    let mut out_wires: BTreeMap<Coord, usize> = BTreeMap::new();
    for w in wires {
        *out_wires.entry(w.src).or_default() += 1;
    }
    let cell_cost = cells
        .iter()
        .map(|c| {
            let ops: usize = c.rels.iter().map(|r| r.program.len()).sum();
            let lanes: usize = c.rels.iter().map(|r| r.scope.len()).sum();
            ops + out_wires.get(&c.coord).copied().unwrap_or(0) * (lanes + c.shadows.len() + 2)
        })
        .max()
        .unwrap_or(0) as u64;
    let hops = wires
        .iter()
        .map(|w| manhattan(w.src, w.dst))
        .max()
        .unwrap_or(0) as u64;
    4 * (hops + cell_cost) + 2 * wires.len() as u64 + 8
}

/// Micro-program for relation `r` of a cell whose relation scopes are `scopes`.
///
/// The input at each scope position is the message from its variable: the
/// variable's evidence (or its shadow, when remote) combined with every other
/// local relation output on that variable and, at the variable's home, the
/// messages returned by remote cells.
pub fn relation_program(
    mode: Mode,
    r: usize,
    scopes: &[Vec<SlotRef>],
    returns_of: &dyn Fn(SlotRef) -> Vec<usize>,
) -> Vec<MicroOp> {
    let k = scopes[r].len();
    let out = |i: usize| OUTPUT_BASE + i as u8;
    let mut prog = Vec::new();
    if mode == Mode::Gibbs {
        for i in 0..k {
            prog.push(MicroOp::LoadTableSlice {
                dst: out(i),
                axis: i as u8,
            });
            prog.push(MicroOp::Normalize { dst: out(i) });
        }
        return prog;
    }
    if k > 1 {
        for j in 0..k {
            let slot = scopes[r][j];
            let dst = j as u8;
            let first = match slot {
                SlotRef::Var(v) => Operand::Evidence(v as u8),
                SlotRef::Shadow(s) => Operand::Shadow(s as u8),
            };
            let mut others: Vec<Operand> = Vec::new();
            for (r2, sc) in scopes.iter().enumerate() {
                for (p2, s2) in sc.iter().enumerate() {
                    if *s2 == slot && (r2, p2) != (r, j) {
                        others.push(Operand::Lane {
                            rel: r2 as u8,
                            pos: p2 as u8,
                        });
                    }
                }
            }
            others.extend(
                returns_of(slot)
                    .into_iter()
                    .map(|s| Operand::Shadow(s as u8)),
            );
            prog.push(MicroOp::Copy { dst, src: first });
            for o in others {
                let a = Operand::Reg(dst);
                match mode {
                    Mode::SumProd => {
                        prog.push(MicroOp::Mul { dst, a, b: o });
                        prog.push(MicroOp::Normalize { dst });
                    }
                    _ => prog.push(MicroOp::Add { dst, a, b: o }),
                }
            }
            if mode == Mode::MinSum {
                prog.push(MicroOp::Normalize { dst });
            }
        }
    }
    for i in 0..k {
        let axis = i as u8;
        prog.push(match mode {
            Mode::SumProd => MicroOp::SumReduce { dst: out(i), axis },
            _ => MicroOp::MaxReduce { dst: out(i), axis },
        });
        prog.push(MicroOp::Normalize { dst: out(i) });
    }
    prog
}
