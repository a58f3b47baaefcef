//! The textual machine image: grid, mode, per-cell slot contents, relation
//! tables and micro-programs, and the inter-cell wiring.
//!
//! ```text
//! FMIMG 1
//! GRID R C
//! MODE SUMPROD|MINSUM|GIBBS
//! SEED n
//! CELL r c
//! THRESH value
//! GIBBS_PERIOD p phase
//! VAR slot var_id card [EVIDENCE value] [COLOR c]
//! SHADOW slot var_id src_r src_c
//! REL slot factor_id nwords
//! SCOPE v0 s1 ...
//! <nwords table integers>
//! PROG k
//! <k micro-op lines>
//! WIRE var_id src_r src_c dst_r dst_c dst_slot
//! ```

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::machine::fixed::NumMode;
use crate::machine::microprog::MicroOp;

pub type Coord = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    SumProd,
    MinSum,
    Gibbs,
}

impl Mode {
    pub fn num_mode(self) -> NumMode {
        match self {
            Mode::SumProd => NumMode::Linear,
            Mode::MinSum | Mode::Gibbs => NumMode::Log,
        }
    }

    /// Default change threshold in LSBs.
    pub fn default_threshold(self) -> i64 {
        match self {
            Mode::SumProd => 256,
            Mode::MinSum | Mode::Gibbs => 16,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::SumProd => "SUMPROD",
            Mode::MinSum => "MINSUM",
            Mode::Gibbs => "GIBBS",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SUMPROD" => Ok(Mode::SumProd),
            "MINSUM" => Ok(Mode::MinSum),
            "GIBBS" => Ok(Mode::Gibbs),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A relation scope entry: a local variable slot or a shadow slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotRef {
    Var(usize),
    Shadow(usize),
}

impl fmt::Display for SlotRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotRef::Var(k) => write!(f, "v{k}"),
            SlotRef::Shadow(k) => write!(f, "s{k}"),
        }
    }
}

impl FromStr for SlotRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| format!("bad slot reference {s:?}"))
        };
        if let Some(t) = s.strip_prefix('v') {
            Ok(SlotRef::Var(num(t)?))
        } else if let Some(t) = s.strip_prefix('s') {
            Ok(SlotRef::Shadow(num(t)?))
        } else {
            Err(format!("bad slot reference {s:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSlot {
    pub slot: usize,
    pub var: usize,
    pub card: usize,
    pub evidence: Option<usize>,
    /// Resampling colour class (GIBBS).
    pub color: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShadowSlot {
    pub slot: usize,
    pub var: usize,
    pub src: Coord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelSlot {
    pub slot: usize,
    pub factor: usize,
    pub scope: Vec<SlotRef>,
    pub table: Vec<i64>,
    pub program: Vec<MicroOp>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellImage {
    pub coord: Coord,
    pub threshold: i64,
    /// `(period, phase)` in cycles (GIBBS).
    pub gibbs_period: Option<(u64, u64)>,
    pub vars: Vec<VarSlot>,
    pub shadows: Vec<ShadowSlot>,
    pub rels: Vec<RelSlot>,
}

impl CellImage {
    pub fn new(coord: Coord, threshold: i64) -> Self {
        CellImage {
            coord,
            threshold,
            gibbs_period: None,
            vars: Vec::new(),
            shadows: Vec::new(),
            rels: Vec::new(),
        }
    }

    pub fn table_words(&self) -> usize {
        self.rels.iter().map(|r| r.table.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Wire {
    pub var: usize,
    pub src: Coord,
    pub dst: Coord,
    pub dst_slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineImage {
    pub rows: usize,
    pub cols: usize,
    pub mode: Mode,
    pub seed: u64,
    pub cells: Vec<CellImage>,
    pub wires: Vec<Wire>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown record {record:?}")]
    UnknownRecord { line: usize, record: String },
    #[error("missing {0} record")]
    Missing(&'static str),
}

impl fmt::Display for MachineImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let _ = writeln!(s, "FMIMG 1");
        let _ = writeln!(s, "GRID {} {}", self.rows, self.cols);
        let _ = writeln!(s, "MODE {}", self.mode);
        let _ = writeln!(s, "SEED {}", self.seed);
        for cell in &self.cells {
            let _ = writeln!(s, "CELL {} {}", cell.coord.0, cell.coord.1);
            let _ = writeln!(s, "THRESH {}", cell.threshold);
            if let Some((p, phase)) = cell.gibbs_period {
                let _ = writeln!(s, "GIBBS_PERIOD {p} {phase}");
            }
            for v in &cell.vars {
                let _ = write!(s, "VAR {} {} {}", v.slot, v.var, v.card);
                if let Some(e) = v.evidence {
                    let _ = write!(s, " EVIDENCE {e}");
                }
                if let Some(c) = v.color {
                    let _ = write!(s, " COLOR {c}");
                }
                s.push('\n');
            }
            for sh in &cell.shadows {
                let _ = writeln!(s, "SHADOW {} {} {} {}", sh.slot, sh.var, sh.src.0, sh.src.1);
            }
            for r in &cell.rels {
                let _ = writeln!(s, "REL {} {} {}", r.slot, r.factor, r.table.len());
                let scope: Vec<String> = r.scope.iter().map(|x| x.to_string()).collect();
                let _ = writeln!(s, "SCOPE {}", scope.join(" "));
                for chunk in r.table.chunks(16) {
                    let words: Vec<String> = chunk.iter().map(|w| w.to_string()).collect();
                    let _ = writeln!(s, "{}", words.join(" "));
                }
                let _ = writeln!(s, "PROG {}", r.program.len());
                for op in &r.program {
                    let _ = writeln!(s, "{op}");
                }
            }
        }
        for w in &self.wires {
            let _ = writeln!(
                s,
                "WIRE {} {} {} {} {} {}",
                w.var, w.src.0, w.src.1, w.dst.0, w.dst.1, w.dst_slot
            );
        }
        f.write_str(&s)
    }
}

struct Lines<'a> {
    lines: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let l = l.split('#').next().unwrap_or("");
                let toks: Vec<&str> = l.split_whitespace().collect();
                (!toks.is_empty()).then_some((i + 1, toks))
            })
            .collect();
        Lines { lines, pos: 0 }
    }

    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        let l = self.lines.get(self.pos).cloned();
        self.pos += 1;
        l
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> ImageError {
    ImageError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn num<T: FromStr>(line: usize, tok: &str) -> Result<T, ImageError> {
    tok.parse()
        .map_err(|_| syntax(line, format!("expected a number, found {tok:?}")))
}

fn fields(line: usize, toks: &[&str], want: usize) -> Result<(), ImageError> {
    if toks.len() != want {
        return Err(syntax(
            line,
            format!(
                "{} takes {} fields, found {}",
                toks[0],
                want - 1,
                toks.len() - 1
            ),
        ));
    }
    Ok(())
}

impl FromStr for MachineImage {
    type Err = ImageError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut lines = Lines::new(text);
        match lines.next() {
            Some((_, t)) if t == ["FMIMG", "1"] => {}
            Some((line, _)) => return Err(syntax(line, "expected header \"FMIMG 1\"")),
            None => return Err(ImageError::Missing("FMIMG")),
        }
        let mut grid = None;
        let mut mode = None;
        let mut seed = 0u64;
        let mut cells: Vec<CellImage> = Vec::new();
        let mut wires = Vec::new();
        while let Some((line, toks)) = lines.next() {
            let cell = |cells: &mut Vec<CellImage>| -> Result<usize, ImageError> {
                if cells.is_empty() {
                    Err(syntax(line, format!("{} outside a CELL block", toks[0])))
                } else {
                    Ok(cells.len() - 1)
                }
            };
            match toks[0] {
                "GRID" => {
                    fields(line, &toks, 3)?;
                    grid = Some((num(line, toks[1])?, num(line, toks[2])?));
                }
                "MODE" => {
                    fields(line, &toks, 2)?;
                    mode = Some(toks[1].parse::<Mode>().map_err(|m| syntax(line, m))?);
                }
                "SEED" => {
                    fields(line, &toks, 2)?;
                    seed = num(line, toks[1])?;
                }
                "CELL" => {
                    fields(line, &toks, 3)?;
                    let m = mode.ok_or(ImageError::Missing("MODE"))?;
                    cells.push(CellImage::new(
                        (num(line, toks[1])?, num(line, toks[2])?),
                        m.default_threshold(),
                    ));
                }
                "THRESH" => {
                    fields(line, &toks, 2)?;
                    let c = cell(&mut cells)?;
                    cells[c].threshold = num(line, toks[1])?;
                }
                "GIBBS_PERIOD" => {
                    fields(line, &toks, 3)?;
                    let c = cell(&mut cells)?;
                    cells[c].gibbs_period = Some((num(line, toks[1])?, num(line, toks[2])?));
                }
                "VAR" => {
                    if toks.len() < 4 {
                        return Err(syntax(line, "VAR takes slot, variable id and cardinality"));
                    }
                    let c = cell(&mut cells)?;
                    let mut v = VarSlot {
                        slot: num(line, toks[1])?,
                        var: num(line, toks[2])?,
                        card: num(line, toks[3])?,
                        evidence: None,
                        color: None,
                    };
                    let mut rest = toks[4..].iter();
                    while let Some(&key) = rest.next() {
                        let val = rest
                            .next()
                            .ok_or_else(|| syntax(line, format!("{key} needs a value")))?;
                        match key {
                            "EVIDENCE" => v.evidence = Some(num(line, val)?),
                            "COLOR" => v.color = Some(num(line, val)?),
                            other => {
                                return Err(syntax(
                                    line,
                                    format!("unknown VAR attribute {other:?}"),
                                ))
                            }
                        }
                    }
                    cells[c].vars.push(v);
                }
                "SHADOW" => {
                    fields(line, &toks, 5)?;
                    let c = cell(&mut cells)?;
                    cells[c].shadows.push(ShadowSlot {
                        slot: num(line, toks[1])?,
                        var: num(line, toks[2])?,
                        src: (num(line, toks[3])?, num(line, toks[4])?),
                    });
                }
                "REL" => {
                    fields(line, &toks, 4)?;
                    let c = cell(&mut cells)?;
                    let (slot, factor, nwords): (usize, usize, usize) = (
                        num(line, toks[1])?,
                        num(line, toks[2])?,
                        num(line, toks[3])?,
                    );
                    let (sl, st) = lines.next().ok_or(ImageError::Missing("SCOPE"))?;
                    if st[0] != "SCOPE" || st.len() < 2 {
                        return Err(syntax(sl, "REL must be followed by a non-empty SCOPE line"));
                    }
                    let scope = st[1..]
                        .iter()
                        .map(|t| t.parse::<SlotRef>().map_err(|m| syntax(sl, m)))
                        .collect::<Result<_, _>>()?;
                    let mut table = Vec::with_capacity(nwords);
                    while table.len() < nwords {
                        let (wl, wt) = lines
                            .next()
                            .ok_or_else(|| syntax(line, "table ends early"))?;
                        for t in wt {
                            if table.len() == nwords {
                                return Err(syntax(wl, "too many table words"));
                            }
                            table.push(num(wl, t)?);
                        }
                    }
                    let (pl, pt) = lines.next().ok_or(ImageError::Missing("PROG"))?;
                    if pt[0] != "PROG" {
                        return Err(syntax(pl, "table must be followed by PROG"));
                    }
                    fields(pl, &pt, 2)?;
                    let k: usize = num(pl, pt[1])?;
                    let mut program = Vec::with_capacity(k);
                    for _ in 0..k {
                        let (ol, ot) = lines
                            .next()
                            .ok_or_else(|| syntax(pl, "program ends early"))?;
                        program.push(
                            ot.join(" ")
                                .parse::<MicroOp>()
                                .map_err(|e| syntax(ol, e.to_string()))?,
                        );
                    }
                    cells[c].rels.push(RelSlot {
                        slot,
                        factor,
                        scope,
                        table,
                        program,
                    });
                }
                "WIRE" => {
                    fields(line, &toks, 7)?;
                    wires.push(Wire {
                        var: num(line, toks[1])?,
                        src: (num(line, toks[2])?, num(line, toks[3])?),
                        dst: (num(line, toks[4])?, num(line, toks[5])?),
                        dst_slot: num(line, toks[6])?,
                    });
                }
                other => {
                    return Err(ImageError::UnknownRecord {
                        line,
                        record: other.to_string(),
                    })
                }
            }
        }
        let (rows, cols) = grid.ok_or(ImageError::Missing("GRID"))?;
        let mode = mode.ok_or(ImageError::Missing("MODE"))?;
        Ok(MachineImage {
            rows,
            cols,
            mode,
            seed,
            cells,
            wires,
        })
    }
}
