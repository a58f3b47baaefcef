//! Discrete-event simulation of the cell array.
//!
//! Each variable lives in one home cell. A cell that holds relations over a
//! remote variable keeps a shadow copy of the message from the variable's home;
//! the home keeps a shadow of that cell's combined relation outputs in return.
//! Wires carry these messages across the mesh. Cells react to register writes
//! by re-running the affected relation programs and re-sending any outgoing
//! message whose change passes the threshold gate.

mod cell;
pub mod fixed;
pub mod microprog;
pub mod router;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;
use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::image::{Coord, ImageError, MachineImage, Mode, SlotRef};
use cell::{gate, Cell, Channel, ChannelKind, DepRef, Deps, Part, RelState, ShadowState, VarState};
use fixed::{NumMode, FULL_SCALE, LOG_MIN};
use microprog::{check_program, Operand, ProgramError, ProgramShape, MAX_ARITY, MAX_CARDINALITY};
use router::{manhattan, next_port, step, Router};

/// Per-cell resource limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capacities {
    pub vars: usize,
    pub shadows: usize,
    pub rels: usize,
    pub table_words: usize,
}

impl Default for Capacities {
    fn default() -> Self {
        Capacities {
            vars: 4,
            shadows: 16,
            rels: 4,
            table_words: 512,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MachineError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("cell ({}, {}): {msg}", cell.0, cell.1)]
    Capacity { cell: Coord, msg: String },
    #[error("cell ({}, {}): {msg}", cell.0, cell.1)]
    Config { cell: Coord, msg: String },
    #[error("cell ({}, {}) relation {slot}: {source}", cell.0, cell.1)]
    Program {
        cell: Coord,
        slot: usize,
        source: ProgramError,
    },
    #[error("{0}")]
    Layout(String),
    #[error("unknown variable {0}")]
    UnknownVariable(usize),
    #[error("value {value} outside the domain of variable {var} (cardinality {card})")]
    OutOfDomain {
        var: usize,
        value: usize,
        card: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub activations: u64,
    pub packets: u64,
    pub hops: u64,
    pub peak_link_occupancy: u64,
    pub cycles: u64,
    pub energy_proxy: f64,
    pub quiescent: bool,
    /// GIBBS ticks that found work caused by an earlier tick still pending.
    pub late_ticks: Option<u64>,
}

impl fmt::Display for Stats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "activations={}", self.activations)?;
        writeln!(f, "packets={}", self.packets)?;
        writeln!(f, "hops={}", self.hops)?;
        writeln!(f, "peak_link_occupancy={}", self.peak_link_occupancy)?;
        writeln!(f, "cycles={}", self.cycles)?;
        writeln!(f, "energy_proxy={}", self.energy_proxy)?;
        writeln!(f, "quiescent={}", self.quiescent)?;
        if let Some(l) = self.late_ticks {
            writeln!(f, "late_ticks={l}")?;
        }
        Ok(())
    }
}

/// Dequantized per-variable beliefs, indexed by variable id.
#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs {
    pub marginals: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Packet {
    var: usize,
    src: Coord,
    dst: Coord,
    dst_slot: usize,
    payload: Vec<i64>,
    at: Coord,
    epoch: u64,
}

#[derive(Debug, Clone)]
enum EventKind {
    Inject(Packet),
    Arrive(Packet),
    Wake(usize),
    Clamp {
        cell: usize,
        slot: usize,
        value: usize,
    },
    Tick(usize),
}

#[derive(Debug)]
struct Event {
    time: u64,
    node: usize,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, o: &Self) -> bool {
        (self.time, self.node, self.seq) == (o.time, o.node, o.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Event {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.time, self.node, self.seq).cmp(&(o.time, o.node, o.seq))
    }
}

struct Noise {
    lsb: i64,
    rng: ChaCha8Rng,
}

pub struct Machine {
    mode: Mode,
    num: NumMode,
    seed: u64,
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    cell_at: Vec<Option<usize>>,
    homes: Vec<(usize, usize)>,
    router: Router,
    events: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: u64,
    ncolors: usize,
    weights: Vec<u64>,
    activations: u64,
    packets: u64,
    hops: u64,
    late_ticks: u64,
    /// GIBBS epoch of work caused by tick `k` is `k + 1`; the initial flush is epoch 0.
    epoch: u64,
    in_flight: BTreeMap<u64, u64>,
    alpha: f64,
    beta: f64,
    trace: Option<Box<dyn Write + Send>>,
    trace_error: Option<String>,
    noise: Option<Noise>,
}

impl fmt::Debug for Machine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Machine")
            .field("mode", &self.mode)
            .field("grid", &(self.rows, self.cols))
            .field("cells", &self.cells.len())
            .field("now", &self.now)
            .finish()
    }
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

impl Machine {
    pub fn load_image(image: &MachineImage) -> Result<Machine, MachineError> {
        Self::load_image_with(image, &Capacities::default())
    }

    pub fn from_text(text: &str) -> Result<Machine, MachineError> {
        Self::load_image(&text.parse()?)
    }

    pub fn load_image_with(
        image: &MachineImage,
        caps: &Capacities,
    ) -> Result<Machine, MachineError> {
        let (rows, cols) = (image.rows, image.cols);
        if rows == 0 || cols == 0 {
            return Err(MachineError::Layout(
                "grid must have at least one cell".into(),
            ));
        }
        let mode = image.mode;
        let num = mode.num_mode();
        let gibbs = mode == Mode::Gibbs;
        let mut cell_at = vec![None; rows * cols];
        for (i, c) in image.cells.iter().enumerate() {
            let (r, cc) = c.coord;
            if r >= rows || cc >= cols {
                return Err(MachineError::Layout(format!(
                    "cell ({r}, {cc}) outside the {rows}x{cols} grid"
                )));
            }
            if cell_at[r * cols + cc].replace(i).is_some() {
                return Err(MachineError::Layout(format!(
                    "cell ({r}, {cc}) configured twice"
                )));
            }
        }

        // Variable homes and cardinalities.
        let mut home: HashMap<usize, (usize, usize, usize)> = HashMap::new();
        for (i, c) in image.cells.iter().enumerate() {
            let cfg = |msg: String| MachineError::Config { cell: c.coord, msg };
            if c.vars.len() > caps.vars {
                return Err(MachineError::Capacity {
                    cell: c.coord,
                    msg: format!("{} variable slots (limit {})", c.vars.len(), caps.vars),
                });
            }
            if c.shadows.len() > caps.shadows {
                return Err(MachineError::Capacity {
                    cell: c.coord,
                    msg: format!("{} shadow slots (limit {})", c.shadows.len(), caps.shadows),
                });
            }
            if c.rels.len() > caps.rels {
                return Err(MachineError::Capacity {
                    cell: c.coord,
                    msg: format!("{} relation slots (limit {})", c.rels.len(), caps.rels),
                });
            }
            if c.table_words() > caps.table_words {
                return Err(MachineError::Capacity {
                    cell: c.coord,
                    msg: format!(
                        "{} table words (limit {})",
                        c.table_words(),
                        caps.table_words
                    ),
                });
            }
            for (k, v) in c.vars.iter().enumerate() {
                if v.slot != k {
                    return Err(cfg(format!(
                        "variable slots must be numbered densely, found slot {} at position {k}",
                        v.slot
                    )));
                }
                if !(2..=MAX_CARDINALITY).contains(&v.card) {
                    return Err(cfg(format!(
                        "variable {} has unsupported cardinality {}",
                        v.var, v.card
                    )));
                }
                if let Some(e) = v.evidence {
                    if e >= v.card {
                        return Err(cfg(format!(
                            "evidence {e} outside the domain of variable {}",
                            v.var
                        )));
                    }
                }
                if home.insert(v.var, (i, k, v.card)).is_some() {
                    return Err(MachineError::Layout(format!(
                        "variable {} has more than one home slot",
                        v.var
                    )));
                }
            }
            for (k, s) in c.shadows.iter().enumerate() {
                if s.slot != k {
                    return Err(cfg(format!(
                        "shadow slots must be numbered densely, found slot {} at position {k}",
                        s.slot
                    )));
                }
            }
            for (k, r) in c.rels.iter().enumerate() {
                if r.slot != k {
                    return Err(cfg(format!(
                        "relation slots must be numbered densely, found slot {} at position {k}",
                        r.slot
                    )));
                }
            }
            if gibbs && !matches!(c.gibbs_period, Some((p, _)) if p > 0) {
                return Err(cfg("GIBBS cells need a positive GIBBS_PERIOD".into()));
            }
        }
        let nvars = home.len();
        let mut homes = vec![(0, 0); nvars];
        for (&v, &(c, k, _)) in &home {
            if v >= nvars {
                return Err(MachineError::Layout(format!(
                    "variable ids must be dense, found {v} among {nvars}"
                )));
            }
            homes[v] = (c, k);
        }

        // Build cells.
        let mut cells = Vec::with_capacity(image.cells.len());
        for (i, c) in image.cells.iter().enumerate() {
            let cfg = |msg: String| MachineError::Config { cell: c.coord, msg };
            let vars: Vec<VarState> = c
                .vars
                .iter()
                .map(|v| {
                    let reg = match v.evidence {
                        Some(e) => fixed::one_hot(num, v.card, e),
                        None => vec![num.anchor(); v.card],
                    };
                    VarState {
                        var: v.var,
                        card: v.card,
                        evidence: v.evidence,
                        reg,
                        value: v.evidence.unwrap_or(0),
                        color: v.color.unwrap_or(0),
                        counts: vec![0; v.card],
                        lanes: Vec::new(),
                        returns: Vec::new(),
                        deps: Deps::default(),
                    }
                })
                .collect();
            let mut shadows = Vec::with_capacity(c.shadows.len());
            for s in &c.shadows {
                let &(hc, hk, card) = home
                    .get(&s.var)
                    .ok_or_else(|| cfg(format!("shadow of unknown variable {}", s.var)))?;
                let src_idx = cell_at
                    .get(s.src.0 * cols + s.src.1)
                    .copied()
                    .flatten()
                    .filter(|_| s.src.0 < rows && s.src.1 < cols)
                    .ok_or_else(|| {
                        cfg(format!(
                            "shadow of variable {} names an unconfigured source cell",
                            s.var
                        ))
                    })?;
                let home_slot = if hc == i {
                    if src_idx == i {
                        return Err(cfg(format!("variable {} shadows itself", s.var)));
                    }
                    Some(hk)
                } else {
                    if src_idx != hc {
                        return Err(cfg(format!(
                            "shadow of variable {} must be fed by its home cell",
                            s.var
                        )));
                    }
                    None
                };
                let reg = if gibbs && home_slot.is_none() {
                    vec![0]
                } else {
                    vec![num.anchor(); card]
                };
                shadows.push(ShadowState {
                    var: s.var,
                    src: s.src,
                    reg,
                    home_slot,
                    deps: Deps::default(),
                });
            }
            let mut rels = Vec::with_capacity(c.rels.len());
            for r in &c.rels {
                if r.scope.is_empty() || r.scope.len() > MAX_ARITY {
                    return Err(cfg(format!(
                        "relation {} has unsupported arity {}",
                        r.slot,
                        r.scope.len()
                    )));
                }
                let mut cards = Vec::with_capacity(r.scope.len());
                for (p, s) in r.scope.iter().enumerate() {
                    if r.scope[..p].contains(s) {
                        return Err(cfg(format!("relation {} lists slot {s} twice", r.slot)));
                    }
                    let card = match *s {
                        SlotRef::Var(k) => vars.get(k).map(|v| v.card),
                        SlotRef::Shadow(k) => shadows
                            .get(k)
                            .filter(|sh| sh.home_slot.is_none())
                            .map(|sh| home[&sh.var].2),
                    };
                    cards.push(card.ok_or_else(|| {
                        cfg(format!("relation {} references missing slot {s}", r.slot))
                    })?);
                }
                let words: usize = cards.iter().product();
                if r.table.len() != words {
                    return Err(cfg(format!(
                        "relation {} table has {} words, scope needs {words}",
                        r.slot,
                        r.table.len()
                    )));
                }
                let (lo, hi) = match num {
                    NumMode::Linear => (0, FULL_SCALE),
                    NumMode::Log => (LOG_MIN, 0),
                };
                if r.table.iter().any(|&w| w < lo || w > hi) {
                    return Err(cfg(format!(
                        "relation {} table word outside [{lo}, {hi}]",
                        r.slot
                    )));
                }
                let strides = strides(&cards);
                let lanes = cards.iter().map(|&k| vec![num.anchor(); k]).collect();
                rels.push(RelState {
                    factor: r.factor,
                    scope: r.scope.clone(),
                    cards: cards.clone(),
                    strides,
                    table: r.table.clone(),
                    program: r.program.clone(),
                    lanes,
                    committed: vec![false; cards.len()],
                    lane_deps: vec![Deps::default(); cards.len()],
                });
            }
            cells.push(Cell {
                coord: c.coord,
                id: c.coord.0 * cols + c.coord.1,
                threshold: c.threshold,
                gibbs_period: c.gibbs_period,
                vars,
                shadows,
                rels,
                channels: Vec::new(),
                dirty_rels: vec![true; c.rels.len()],
                dirty_chans: Vec::new(),
                wake_pending: false,
                busy_until: 0,
                epoch: Some(0),
            });
        }

        // Program checks and operand dependencies.
        for cell in &mut cells {
            for r in 0..cell.rels.len() {
                let rel = &cell.rels[r];
                let len = |o: Operand| -> Option<usize> {
                    match o {
                        Operand::Reg(_) => None,
                        Operand::Shadow(s) => cell.shadows.get(s as usize).map(|x| x.reg.len()),
                        Operand::Evidence(v) => cell.vars.get(v as usize).map(|x| x.card),
                        Operand::Lane { rel, pos } => cell
                            .rels
                            .get(rel as usize)
                            .and_then(|x| x.cards.get(pos as usize))
                            .copied(),
                    }
                };
                check_program(
                    &rel.program,
                    &ProgramShape {
                        mode: num,
                        cards: &rel.cards,
                        operand_len: &len,
                    },
                )
                .map_err(|source| MachineError::Program {
                    cell: cell.coord,
                    slot: r,
                    source,
                })?;
                let mut reads: Vec<Operand> =
                    rel.program.iter().flat_map(|op| op.reads()).collect();
                if gibbs {
                    reads.extend(rel.scope.iter().map(|s| match *s {
                        SlotRef::Var(k) => Operand::Evidence(k as u8),
                        SlotRef::Shadow(k) => Operand::Shadow(k as u8),
                    }));
                }
                reads.sort();
                reads.dedup();
                for o in reads {
                    let deps = match o {
                        Operand::Reg(_) => continue,
                        Operand::Shadow(s) => &mut cell.shadows[s as usize].deps,
                        Operand::Evidence(v) => &mut cell.vars[v as usize].deps,
                        Operand::Lane { rel, pos } => {
                            &mut cell.rels[rel as usize].lane_deps[pos as usize]
                        }
                    };
                    if !deps.rels.contains(&r) {
                        deps.rels.push(r);
                    }
                }
            }
            for r in 0..cell.rels.len() {
                for p in 0..cell.rels[r].scope.len() {
                    if let SlotRef::Var(k) = cell.rels[r].scope[p] {
                        cell.vars[k].lanes.push((r, p));
                    }
                }
            }
            for s in 0..cell.shadows.len() {
                if let Some(k) = cell.shadows[s].home_slot {
                    cell.vars[k].returns.push(s);
                }
            }
        }

        // Wires become channels at their source cell.
        let mut fed = vec![Vec::<bool>::new(); cells.len()];
        for (i, c) in cells.iter().enumerate() {
            fed[i] = vec![false; c.shadows.len()];
        }
        for w in &image.wires {
            let bad =
                |msg: String| MachineError::Layout(format!("wire for variable {}: {msg}", w.var));
            let at = |x: Coord| -> Option<usize> {
                if x.0 < rows && x.1 < cols {
                    cell_at[x.0 * cols + x.1]
                } else {
                    None
                }
            };
            let s = at(w.src).ok_or_else(|| bad("source cell not configured".into()))?;
            let d = at(w.dst).ok_or_else(|| bad("destination cell not configured".into()))?;
            if s == d {
                return Err(bad("source and destination coincide".into()));
            }
            let dst_shadow = cells[d]
                .shadows
                .get(w.dst_slot)
                .ok_or_else(|| bad("destination shadow slot missing".into()))?;
            if dst_shadow.var != w.var || dst_shadow.src != w.src {
                return Err(bad(
                    "destination shadow holds a different variable or source".into(),
                ));
            }
            if std::mem::replace(&mut fed[d][w.dst_slot], true) {
                return Err(bad("destination shadow fed twice".into()));
            }
            let (hc, hk) = *homes
                .get(w.var)
                .ok_or(MachineError::UnknownVariable(w.var))?;
            let src = &cells[s];
            let (kind, parts) = if hc == s {
                let exclude = src
                    .shadows
                    .iter()
                    .position(|x| x.var == w.var && x.src == w.dst && x.home_slot.is_some());
                let v = &src.vars[hk];
                let mut parts = vec![Part::Evidence(hk)];
                parts.extend(v.lanes.iter().map(|&(r, p)| Part::Lane(r, p)));
                parts.extend(
                    v.returns
                        .iter()
                        .filter(|&&x| Some(x) != exclude)
                        .map(|&x| Part::Shadow(x)),
                );
                (ChannelKind::Extrinsic { slot: hk, exclude }, parts)
            } else {
                let shadow = src
                    .shadows
                    .iter()
                    .position(|x| x.var == w.var && x.home_slot.is_none())
                    .ok_or_else(|| bad("source cell has no relations over this variable".into()))?;
                if w.dst != src.shadows[shadow].src {
                    return Err(bad(
                        "remote messages must return to the variable's home".into()
                    ));
                }
                let mut parts = Vec::new();
                for (r, rel) in src.rels.iter().enumerate() {
                    for (p, sl) in rel.scope.iter().enumerate() {
                        if *sl == SlotRef::Shadow(shadow) {
                            parts.push(Part::Lane(r, p));
                        }
                    }
                }
                (ChannelKind::Aggregate { shadow }, parts)
            };
            let c = cells[s].channels.len();
            let cell = &mut cells[s];
            for &p in &parts {
                let deps = match p {
                    Part::Evidence(k) => &mut cell.vars[k].deps,
                    Part::Lane(r, q) => &mut cell.rels[r].lane_deps[q],
                    Part::Shadow(x) => &mut cell.shadows[x].deps,
                };
                deps.chans.push(c);
            }
            cell.channels.push(Channel {
                var: w.var,
                dst: w.dst,
                dst_slot: w.dst_slot,
                kind,
                parts,
                last_sent: None,
            });
            cell.dirty_chans.push(true);
        }
        for (i, f) in fed.iter().enumerate() {
            if let Some(k) = f.iter().position(|&x| !x) {
                return Err(MachineError::Config {
                    cell: cells[i].coord,
                    msg: format!(
                        "shadow slot {k} (variable {}) has no producer wire",
                        cells[i].shadows[k].var
                    ),
                });
            }
        }
        if gibbs {
            // The value a wire carries from a home cell changes with the value itself.
            for cell in &mut cells {
                for c in 0..cell.channels.len() {
                    if let ChannelKind::Extrinsic { slot, .. } = cell.channels[c].kind {
                        if !cell.vars[slot].deps.chans.contains(&c) {
                            cell.vars[slot].deps.chans.push(c);
                        }
                    }
                }
            }
        }

        let ncolors = cells
            .iter()
            .flat_map(|c| c.vars.iter().map(|v| v.color + 1))
            .max()
            .unwrap_or(1);
        let weights = if gibbs {
            (0..=(-LOG_MIN) as usize)
                .map(|i| ((-(i as f64) / 256.0).exp() * 4_294_967_296.0).round() as u64)
                .collect()
        } else {
            Vec::new()
        };
        let mut m = Machine {
            mode,
            num,
            seed: image.seed,
            rows,
            cols,
            cells,
            cell_at,
            homes,
            router: Router::new(rows, cols),
            events: BinaryHeap::new(),
            seq: 0,
            now: 0,
            ncolors,
            weights,
            activations: 0,
            packets: 0,
            hops: 0,
            late_ticks: 0,
            epoch: 0,
            in_flight: BTreeMap::new(),
            alpha: 1.0,
            beta: 0.1,
            trace: None,
            trace_error: None,
            noise: None,
        };
        for i in 0..m.cells.len() {
            m.cells[i].wake_pending = true;
            let node = m.cells[i].id;
            m.push(0, node, EventKind::Wake(i));
            if let Some((p, phase)) = m.cells[i].gibbs_period {
                m.push(p + phase, node, EventKind::Tick(i));
            }
        }
        Ok(m)
    }

    fn push(&mut self, time: u64, node: usize, kind: EventKind) {
        self.seq += 1;
        self.events.push(Reverse(Event {
            time,
            node,
            seq: self.seq,
            kind,
        }));
    }

    /// Streams the event trace (CSV with a header line) to `w`.
    pub fn set_trace(&mut self, mut w: Box<dyn Write + Send>) {
        if let Err(e) = writeln!(w, "cycle,cell_row,cell_col,event,var_id,detail") {
            self.trace_error = Some(e.to_string());
        }
        self.trace = Some(w);
    }

    /// Flushes and detaches the trace sink.
    pub fn finish_trace(&mut self) -> Result<(), String> {
        if let Some(mut w) = self.trace.take() {
            if let Err(e) = w.flush() {
                self.trace_error.get_or_insert(e.to_string());
            }
        }
        self.trace_error.take().map_or(Ok(()), Err)
    }

    /// Adds uniform noise of up to `lsb` LSBs to every committed relation output.
    pub fn set_noise(&mut self, lsb: i64, seed: u64) {
        self.noise = (lsb > 0).then(|| Noise {
            lsb,
            rng: ChaCha8Rng::seed_from_u64(seed),
        });
    }

    pub fn set_energy_weights(&mut self, alpha: f64, beta: f64) {
        self.alpha = alpha;
        self.beta = beta;
    }

    fn log(&mut self, time: u64, coord: Coord, event: &str, var: usize, detail: i64) {
        if let Some(w) = self.trace.as_mut() {
            if let Err(e) = writeln!(w, "{time},{},{},{event},{var},{detail}", coord.0, coord.1) {
                self.trace_error.get_or_insert(e.to_string());
            }
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn num_variables(&self) -> usize {
        self.homes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Evidence register of a variable.
    pub fn variable_register(&self, var: usize) -> Option<&[i64]> {
        let &(c, k) = self.homes.get(var)?;
        Some(&self.cells[c].vars[k].reg)
    }

    /// Current GIBBS state of every variable.
    pub fn states(&self) -> Vec<usize> {
        self.homes
            .iter()
            .map(|&(c, k)| self.cells[c].vars[k].value)
            .collect()
    }

    /// Per-link packet counts, keyed by node and port letter.
    pub fn link_counts(&self) -> Vec<(Coord, char, u64)> {
        self.router
            .link_counts()
            .into_iter()
            .map(|(c, p, n)| (c, p.letter(), n))
            .collect()
    }

    /// Clamps `var` to `value` at time `at`.
    pub fn inject_evidence(
        &mut self,
        var: usize,
        value: usize,
        at: u64,
    ) -> Result<(), MachineError> {
        let &(c, k) = self
            .homes
            .get(var)
            .ok_or(MachineError::UnknownVariable(var))?;
        let card = self.cells[c].vars[k].card;
        if value >= card {
            return Err(MachineError::OutOfDomain { var, value, card });
        }
        let node = self.cells[c].id;
        self.push(
            at.max(self.now),
            node,
            EventKind::Clamp {
                cell: c,
                slot: k,
                value,
            },
        );
        Ok(())
    }

    pub fn is_quiescent(&self) -> bool {
        self.events.is_empty()
    }

    /// Processes the next event. Returns `false` when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(Reverse(ev)) = self.events.pop() else {
            return false;
        };
        self.now = ev.time;
        let t = ev.time;
        match ev.kind {
            EventKind::Inject(p) => {
                let h = manhattan(p.src, p.dst);
                self.packets += 1;
                self.hops += h as u64;
                self.log(t, p.src, "SEND", p.var, h as i64);
                self.forward(p, t);
            }
            EventKind::Arrive(p) => {
                if p.at == p.dst {
                    self.deliver(p, t);
                } else {
                    self.forward(p, t);
                }
            }
            EventKind::Wake(c) => self.wake(c, t),
            EventKind::Clamp { cell, slot, value } => {
                let num = self.num;
                let v = &mut self.cells[cell].vars[slot];
                v.evidence = Some(value);
                v.reg = fixed::one_hot(num, v.card, value);
                v.value = value;
                let (coord, var) = (self.cells[cell].coord, self.cells[cell].vars[slot].var);
                self.log(t, coord, "CLAMP", var, value as i64);
                let epoch = self.epoch;
                self.cells[cell].mark(DepRef::Var(slot), epoch);
                self.ensure_wake(cell, t);
            }
            EventKind::Tick(c) => self.tick(c, t),
        }
        true
    }

    fn forward(&mut self, mut p: Packet, t: u64) {
        let port = next_port(p.at, p.dst);
        let arrival = self.router.traverse(p.at, port, t);
        p.at = step(p.at, port);
        let node = p.at.0 * self.cols + p.at.1;
        self.push(arrival, node, EventKind::Arrive(p));
    }

    fn deliver(&mut self, p: Packet, t: u64) {
        let c = self.cell_at[p.dst.0 * self.cols + p.dst.1].expect("wires end at configured cells");
        let coord = self.cells[c].coord;
        self.log(t, coord, "DELIVER", p.var, p.dst_slot as i64);
        let cell = &mut self.cells[c];
        cell.shadows[p.dst_slot].reg = p.payload;
        cell.mark(DepRef::Shadow(p.dst_slot), p.epoch);
        if let Some(n) = self.in_flight.get_mut(&p.epoch) {
            *n -= 1;
            if *n == 0 {
                self.in_flight.remove(&p.epoch);
            }
        }
        self.ensure_wake(c, t);
    }

    fn ensure_wake(&mut self, c: usize, t: u64) {
        let cell = &mut self.cells[c];
        if !cell.wake_pending && cell.has_dirty() {
            cell.wake_pending = true;
            let at = t.max(cell.busy_until);
            let node = cell.id;
            self.push(at, node, EventKind::Wake(c));
        }
    }

    fn wake(&mut self, c: usize, t: u64) {
        self.cells[c].wake_pending = false;
        if t < self.cells[c].busy_until {
            self.ensure_wake(c, t);
            return;
        }
        let num = self.num;
        let gibbs = self.mode == Mode::Gibbs;
        let epoch = self.cells[c].epoch.take().unwrap_or(self.epoch);
        let mut cost = 0u64;
        let mut updates = Vec::new();
        for r in 0..self.cells[c].rels.len() {
            if !std::mem::replace(&mut self.cells[c].dirty_rels[r], false) {
                continue;
            }
            let outs = self.cells[c].evaluate(num, r);
            let ops = self.cells[c].rels[r].program.len();
            cost += ops as u64;
            self.activations += 1;
            updates.push((self.cells[c].rels[r].factor, ops));
            for (p, mut out) in outs.into_iter().enumerate() {
                let cell = &self.cells[c];
                let rel = &cell.rels[r];
                let old = rel.committed[p].then_some(rel.lanes[p].as_slice());
                if gate(cell.threshold, gibbs, old, &out) {
                    if let Some(n) = self.noise.as_mut() {
                        for x in out.iter_mut() {
                            *x = (*x + n.rng.gen_range(-n.lsb..=n.lsb))
                                .clamp(num.floor(), num.anchor());
                        }
                        fixed::normalize(num, &mut out);
                    }
                    let cell = &mut self.cells[c];
                    cell.rels[r].lanes[p] = out;
                    cell.rels[r].committed[p] = true;
                    cell.mark(DepRef::Lane(r, p), epoch);
                }
            }
        }
        let mut sends = Vec::new();
        for ch in 0..self.cells[c].channels.len() {
            if !std::mem::replace(&mut self.cells[c].dirty_chans[ch], false) {
                continue;
            }
            let (out, ops) = self.cells[c].channel_output(num, gibbs, ch);
            cost += ops as u64;
            let cell = &mut self.cells[c];
            if gate(
                cell.threshold,
                gibbs,
                cell.channels[ch].last_sent.as_deref(),
                &out,
            ) {
                cell.channels[ch].last_sent = Some(out.clone());
                let chn = &cell.channels[ch];
                sends.push(Packet {
                    var: chn.var,
                    src: cell.coord,
                    dst: chn.dst,
                    dst_slot: chn.dst_slot,
                    payload: out,
                    at: cell.coord,
                    epoch,
                });
            }
        }
        let coord = self.cells[c].coord;
        for (factor, ops) in updates {
            self.log(t, coord, "UPDATE", factor, ops as i64);
        }
        let depart = t + cost;
        let node = self.cells[c].id;
        for p in sends {
            *self.in_flight.entry(p.epoch).or_default() += 1;
            self.push(depart, node, EventKind::Inject(p));
        }
        if !self.cells[c].has_dirty() {
            self.cells[c].epoch = None;
        }
        self.cells[c].busy_until = depart;
        self.ensure_wake(c, depart);
    }

    fn tick(&mut self, c: usize, t: u64) {
        let (period, phase) = self.cells[c]
            .gibbs_period
            .expect("ticks only in GIBBS cells");
        let k = (t - phase) / period - 1;
        // Late when work caused by an earlier tick (or the initial flush) is still pending.
        let stale = self.in_flight.range(..=k).next().is_some()
            || self.cells.iter().any(|x| x.epoch.is_some_and(|e| e <= k));
        if stale {
            self.late_ticks += 1;
        }
        self.epoch = self.epoch.max(k + 1);
        let color = (k % self.ncolors as u64) as usize;
        let coord = self.cells[c].coord;
        for v in 0..self.cells[c].vars.len() {
            let var = &self.cells[c].vars[v];
            if var.evidence.is_some() || var.color != color {
                continue;
            }
            let cond = self.cells[c].conditional(v);
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(var.var as u64);
            rng.set_word_pos(k as u128 * 2);
            let value = self.draw(&cond, rng.next_u64());
            let cell = &mut self.cells[c];
            let var = &mut cell.vars[v];
            var.counts[value] += 1;
            let changed = var.value != value;
            var.value = value;
            let id = var.var;
            if changed {
                cell.mark(DepRef::Var(v), k + 1);
            }
            self.log(t, coord, "SAMPLE", id, value as i64);
        }
        self.ensure_wake(c, t);
        let node = self.cells[c].id;
        self.push(t + period, node, EventKind::Tick(c));
    }

    /// Index drawn with weight `round(2^32 exp(x / 256))` per LOG entry `x`.
    fn draw(&self, cond: &[i64], u: u64) -> usize {
        let w: Vec<u64> = cond
            .iter()
            .map(|&x| self.weights[(-x.clamp(LOG_MIN, 0)) as usize])
            .collect();
        let total: u64 = w.iter().sum();
        let mut target = ((u as u128 * total as u128) >> 64) as u64;
        for (i, &x) in w.iter().enumerate() {
            if target < x {
                return i;
            }
            target -= x;
        }
        w.iter().rposition(|&x| x > 0).unwrap_or(0)
    }

    /// Runs until the event queue drains or the next event lies beyond `max_cycles`.
    pub fn run_until_quiescent(&mut self, max_cycles: u64) -> Stats {
        loop {
            match self.events.peek() {
                None => break,
                Some(Reverse(ev)) if ev.time > max_cycles => {
                    self.now = max_cycles;
                    break;
                }
                _ => {
                    self.step();
                }
            }
        }
        self.stats()
    }

    pub fn stats(&self) -> Stats {
        Stats {
            activations: self.activations,
            packets: self.packets,
            hops: self.hops,
            peak_link_occupancy: self.router.peak_occupancy,
            cycles: self.now,
            energy_proxy: self.alpha * self.activations as f64 + self.beta * self.hops as f64,
            quiescent: self.events.is_empty(),
            late_ticks: (self.mode == Mode::Gibbs).then_some(self.late_ticks),
        }
    }

    pub fn read_beliefs(&self) -> Beliefs {
        let mut marginals = Vec::with_capacity(self.homes.len());
        let mut assignment = Vec::with_capacity(self.homes.len());
        for &(c, k) in &self.homes {
            let cell = &self.cells[c];
            let var = &cell.vars[k];
            if self.mode == Mode::Gibbs {
                let total: u64 = var.counts.iter().sum();
                let m = if var.evidence.is_some() || total == 0 {
                    (0..var.card)
                        .map(|a| if a == var.value { 1.0 } else { 0.0 })
                        .collect()
                } else {
                    var.counts
                        .iter()
                        .map(|&n| n as f64 / total as f64)
                        .collect()
                };
                marginals.push(m);
                assignment.push(var.value);
                continue;
            }
            let b = cell.belief(self.num, k);
            assignment.push(crate::golden::argmax(&b));
            let p: Vec<f64> = match self.num {
                NumMode::Linear => b.iter().map(|&x| x as f64 / FULL_SCALE as f64).collect(),
                NumMode::Log => b.iter().map(|&x| (x as f64 / 256.0).exp()).collect(),
            };
            let z: f64 = p.iter().sum();
            marginals.push(p.iter().map(|x| x / z).collect());
        }
        Beliefs {
            marginals,
            assignment,
        }
    }

    /// Recomputes every relation output and channel and reports any that would
    /// still pass the gate. Empty at a sound quiescent point.
    pub fn check_quiescence(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.mode == Mode::Gibbs {
            return out;
        }
        for cell in &self.cells {
            for (r, rel) in cell.rels.iter().enumerate() {
                for (p, new) in cell.evaluate(self.num, r).iter().enumerate() {
                    let old = rel.committed[p].then_some(rel.lanes[p].as_slice());
                    if gate(cell.threshold, false, old, new) {
                        out.push(format!(
                            "cell ({}, {}) relation {r} position {p}",
                            cell.coord.0, cell.coord.1
                        ));
                    }
                }
            }
            for ch in 0..cell.channels.len() {
                let (new, _) = cell.channel_output(self.num, false, ch);
                if gate(
                    cell.threshold,
                    false,
                    cell.channels[ch].last_sent.as_deref(),
                    &new,
                ) {
                    out.push(format!(
                        "cell ({}, {}) channel for variable {}",
                        cell.coord.0, cell.coord.1, cell.channels[ch].var
                    ));
                }
            }
        }
        out
    }
}
