//! Relation micro-programs: loop-free sequences over cell-local vector registers.
//!
//! Register conventions: `r0..r{k-1}` hold the variable-to-relation inputs for
//! each scope position, `r16..r{16+k-1}` hold the outgoing messages once the
//! program finishes. Other operands name cell storage: `s<n>` shadow slot `n`,
//! `e<n>` the evidence vector of variable slot `n`, `o<r>.<p>` the last
//! committed output of relation slot `r` at scope position `p`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::fixed::{self, div_round_even, mul_linear, sat_log, NumMode};
use crate::golden::argmax;

pub const NUM_REGS: usize = 32;
pub const OUTPUT_BASE: u8 = 16;
pub const MAX_PROGRAM_LEN: usize = 64;
pub const MAX_CARDINALITY: usize = 16;
pub const MAX_ARITY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operand {
    Reg(u8),
    Shadow(u8),
    Evidence(u8),
    Lane { rel: u8, pos: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MicroOp {
    Copy { dst: u8, src: Operand },
    Mul { dst: u8, a: Operand, b: Operand },
    Add { dst: u8, a: Operand, b: Operand },
    Max { dst: u8, a: Operand, b: Operand },
    Normalize { dst: u8 },
    Wta { dst: u8 },
    SumReduce { dst: u8, axis: u8 },
    MaxReduce { dst: u8, axis: u8 },
    LoadTableSlice { dst: u8, axis: u8 },
}

impl MicroOp {
    pub fn dst(&self) -> u8 {
        match *self {
            MicroOp::Copy { dst, .. }
            | MicroOp::Mul { dst, .. }
            | MicroOp::Add { dst, .. }
            | MicroOp::Max { dst, .. }
            | MicroOp::Normalize { dst }
            | MicroOp::Wta { dst }
            | MicroOp::SumReduce { dst, .. }
            | MicroOp::MaxReduce { dst, .. }
            | MicroOp::LoadTableSlice { dst, .. } => dst,
        }
    }

    /// Operands read by this op, not counting implicit reduction inputs.
    pub fn reads(&self) -> Vec<Operand> {
        match *self {
            MicroOp::Copy { src, .. } => vec![src],
            MicroOp::Mul { a, b, .. } | MicroOp::Add { a, b, .. } | MicroOp::Max { a, b, .. } => {
                vec![a, b]
            }
            MicroOp::Normalize { dst } | MicroOp::Wta { dst } => vec![Operand::Reg(dst)],
            MicroOp::SumReduce { .. }
            | MicroOp::MaxReduce { .. }
            | MicroOp::LoadTableSlice { .. } => vec![],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProgramError {
    #[error("unknown micro-op {0:?}")]
    UnknownOp(String),
    #[error("malformed operand {0:?}")]
    BadOperand(String),
    #[error("wrong operand count for {0}")]
    Arity(String),
    #[error("program has {0} micro-ops (limit {MAX_PROGRAM_LEN})")]
    TooLong(usize),
    #[error("op {index}: {msg}")]
    Misuse { index: usize, msg: String },
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Operand::Reg(r) => write!(f, "r{r}"),
            Operand::Shadow(s) => write!(f, "s{s}"),
            Operand::Evidence(v) => write!(f, "e{v}"),
            Operand::Lane { rel, pos } => write!(f, "o{rel}.{pos}"),
        }
    }
}

impl FromStr for Operand {
    type Err = ProgramError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ProgramError::BadOperand(s.to_string());
        let (head, rest) = s.split_at(s.char_indices().nth(1).map_or(s.len(), |c| c.0));
        let num = |t: &str| t.parse::<u8>().map_err(|_| bad());
        match head {
            "r" => {
                let r = num(rest)?;
                if r as usize >= NUM_REGS {
                    return Err(bad());
                }
                Ok(Operand::Reg(r))
            }
            "s" => Ok(Operand::Shadow(num(rest)?)),
            "e" => Ok(Operand::Evidence(num(rest)?)),
            "o" => {
                let (a, b) = rest.split_once('.').ok_or_else(bad)?;
                Ok(Operand::Lane {
                    rel: num(a)?,
                    pos: num(b)?,
                })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for MicroOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MicroOp::Copy { dst, src } => write!(f, "COPY r{dst} {src}"),
            MicroOp::Mul { dst, a, b } => write!(f, "MUL r{dst} {a} {b}"),
            MicroOp::Add { dst, a, b } => write!(f, "ADD r{dst} {a} {b}"),
            MicroOp::Max { dst, a, b } => write!(f, "MAX r{dst} {a} {b}"),
            MicroOp::Normalize { dst } => write!(f, "NORMALIZE r{dst}"),
            MicroOp::Wta { dst } => write!(f, "WTA r{dst}"),
            MicroOp::SumReduce { dst, axis } => write!(f, "SUM_REDUCE r{dst} {axis}"),
            MicroOp::MaxReduce { dst, axis } => write!(f, "MAX_REDUCE r{dst} {axis}"),
            MicroOp::LoadTableSlice { dst, axis } => write!(f, "LOAD_TABLE_SLICE r{dst} {axis}"),
        }
    }
}

impl FromStr for MicroOp {
    type Err = ProgramError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let Some((&name, args)) = toks.split_first() else {
            return Err(ProgramError::UnknownOp(String::new()));
        };
        let want = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(ProgramError::Arity(name.to_string()))
            }
        };
        let reg = |t: &str| match t.parse::<Operand>()? {
            Operand::Reg(r) => Ok(r),
            _ => Err(ProgramError::BadOperand(t.to_string())),
        };
        let axis = |t: &str| {
            t.parse::<u8>()
                .map_err(|_| ProgramError::BadOperand(t.to_string()))
        };
        let op = match name {
            "COPY" => {
                want(2)?;
                MicroOp::Copy {
                    dst: reg(args[0])?,
                    src: args[1].parse()?,
                }
            }
            "MUL" | "ADD" | "MAX" => {
                want(3)?;
                let (dst, a, b) = (reg(args[0])?, args[1].parse()?, args[2].parse()?);
                match name {
                    "MUL" => MicroOp::Mul { dst, a, b },
                    "ADD" => MicroOp::Add { dst, a, b },
                    _ => MicroOp::Max { dst, a, b },
                }
            }
            "NORMALIZE" => {
                want(1)?;
                MicroOp::Normalize { dst: reg(args[0])? }
            }
            "WTA" => {
                want(1)?;
                MicroOp::Wta { dst: reg(args[0])? }
            }
            "SUM_REDUCE" | "MAX_REDUCE" | "LOAD_TABLE_SLICE" => {
                want(2)?;
                let (dst, axis) = (reg(args[0])?, axis(args[1])?);
                match name {
                    "SUM_REDUCE" => MicroOp::SumReduce { dst, axis },
                    "MAX_REDUCE" => MicroOp::MaxReduce { dst, axis },
                    _ => MicroOp::LoadTableSlice { dst, axis },
                }
            }
            other => return Err(ProgramError::UnknownOp(other.to_string())),
        };
        Ok(op)
    }
}

/// Static facts a program is checked against at configuration time.
pub struct ProgramShape<'a> {
    pub mode: NumMode,
    /// Cardinality of each scope position.
    pub cards: &'a [usize],
    /// Length of a non-register operand, or `None` if it does not exist in the cell.
    pub operand_len: &'a dyn Fn(Operand) -> Option<usize>,
}

/// Verifies register usage, vector lengths, and mode compatibility.
pub fn check_program(prog: &[MicroOp], shape: &ProgramShape<'_>) -> Result<(), ProgramError> {
    if prog.len() > MAX_PROGRAM_LEN {
        return Err(ProgramError::TooLong(prog.len()));
    }
    let k = shape.cards.len();
    if k == 0 || k > MAX_ARITY {
        return Err(ProgramError::Misuse {
            index: 0,
            msg: format!("relation arity {k} unsupported"),
        });
    }
    let mut lens: [Option<usize>; NUM_REGS] = [None; NUM_REGS];
    let mut last_writer: [Option<usize>; NUM_REGS] = [None; NUM_REGS];
    for (index, op) in prog.iter().enumerate() {
        let misuse = |msg: String| ProgramError::Misuse { index, msg };
        let len_of =
            |o: Operand, lens: &[Option<usize>; NUM_REGS]| -> Result<usize, ProgramError> {
                match o {
                    Operand::Reg(r) => {
                        lens[r as usize].ok_or_else(|| misuse(format!("r{r} read before write")))
                    }
                    other => (shape.operand_len)(other)
                        .ok_or_else(|| misuse(format!("{other} does not exist"))),
                }
            };
        let dst = op.dst() as usize;
        if dst >= NUM_REGS {
            return Err(misuse(format!("r{dst} out of range")));
        }
        let new_len = match *op {
            MicroOp::Copy { src, .. } => len_of(src, &lens)?,
            MicroOp::Mul { a, b, .. } | MicroOp::Add { a, b, .. } | MicroOp::Max { a, b, .. } => {
                if matches!(op, MicroOp::Mul { .. }) && shape.mode == NumMode::Log {
                    return Err(misuse("MUL is not available in LOG mode".into()));
                }
                let (la, lb) = (len_of(a, &lens)?, len_of(b, &lens)?);
                if la != lb {
                    return Err(misuse(format!("length mismatch {la} vs {lb}")));
                }
                la
            }
            MicroOp::Normalize { dst } | MicroOp::Wta { dst } => len_of(Operand::Reg(dst), &lens)?,
            MicroOp::SumReduce { axis, .. } | MicroOp::MaxReduce { axis, .. } => {
                if matches!(op, MicroOp::SumReduce { .. }) && shape.mode == NumMode::Log {
                    return Err(misuse("SUM_REDUCE is not available in LOG mode".into()));
                }
                let axis = axis as usize;
                if axis >= k {
                    return Err(misuse(format!("axis {axis} outside arity {k}")));
                }
                for j in (0..k).filter(|&j| j != axis) {
                    match lens[j] {
                        Some(l) if l == shape.cards[j] => {}
                        Some(l) => {
                            return Err(misuse(format!(
                                "input r{j} has length {l}, expected {}",
                                shape.cards[j]
                            )))
                        }
                        None => return Err(misuse(format!("input r{j} read before write"))),
                    }
                }
                shape.cards[axis]
            }
            MicroOp::LoadTableSlice { axis, .. } => {
                let axis = axis as usize;
                if axis >= k {
                    return Err(misuse(format!("axis {axis} outside arity {k}")));
                }
                shape.cards[axis]
            }
        };
        if new_len > MAX_CARDINALITY {
            return Err(misuse(format!(
                "vector length {new_len} exceeds {MAX_CARDINALITY}"
            )));
        }
        lens[dst] = Some(new_len);
        last_writer[dst] = Some(index);
    }
    for (p, &card) in shape.cards.iter().enumerate() {
        let r = OUTPUT_BASE as usize + p;
        match (lens[r], last_writer[r]) {
            (Some(l), Some(w)) if l == card => {
                if !matches!(prog[w], MicroOp::Normalize { .. } | MicroOp::Wta { .. }) {
                    return Err(ProgramError::Misuse {
                        index: w,
                        msg: format!("output r{r} is not normalized"),
                    });
                }
            }
            _ => {
                return Err(ProgramError::Misuse {
                    index: prog.len(),
                    msg: format!("output r{r} for position {p} not produced"),
                })
            }
        }
    }
    Ok(())
}

/// Reads cell storage on behalf of a running program.
pub trait OperandSource {
    fn operand(&self, op: Operand) -> &[i64];
}

/// Table and scope context of the relation being executed.
pub struct RelationContext<'a> {
    pub mode: NumMode,
    pub table: &'a [i64],
    pub cards: &'a [usize],
    pub strides: &'a [usize],
    /// Current domain value of each scope position (used by LOAD_TABLE_SLICE).
    pub values: &'a [usize],
}

/// Runs a checked program and returns the output register of every scope position.
pub fn execute(
    prog: &[MicroOp],
    ctx: &RelationContext<'_>,
    src: &dyn OperandSource,
) -> Vec<Vec<i64>> {
    let mut regs: Vec<Vec<i64>> = vec![Vec::new(); NUM_REGS];
    fn read<'r>(regs: &'r [Vec<i64>], src: &'r dyn OperandSource, o: Operand) -> &'r [i64] {
        match o {
            Operand::Reg(r) => &regs[r as usize],
            other => src.operand(other),
        }
    }
    for op in prog {
        let value: Vec<i64> = match *op {
            MicroOp::Copy { src: s, .. } => read(&regs, src, s).to_vec(),
            MicroOp::Mul { a, b, .. } => read(&regs, src, a)
                .iter()
                .zip(read(&regs, src, b))
                .map(|(&x, &y)| mul_linear(x, y))
                .collect(),
            MicroOp::Add { a, b, .. } => {
                let (a, b) = (read(&regs, src, a), read(&regs, src, b));
                match ctx.mode {
                    NumMode::Linear => a.iter().zip(b).map(|(&x, &y)| x + y).collect(),
                    NumMode::Log => a.iter().zip(b).map(|(&x, &y)| sat_log(x + y)).collect(),
                }
            }
            MicroOp::Max { a, b, .. } => read(&regs, src, a)
                .iter()
                .zip(read(&regs, src, b))
                .map(|(&x, &y)| x.max(y))
                .collect(),
            MicroOp::Normalize { dst } => {
                let mut v = regs[dst as usize].clone();
                fixed::normalize(ctx.mode, &mut v);
                v
            }
            MicroOp::Wta { dst } => {
                let v = &regs[dst as usize];
                fixed::one_hot(ctx.mode, v.len(), argmax(v))
            }
            MicroOp::SumReduce { axis, .. } => reduce(ctx, &regs, axis as usize, false),
            MicroOp::MaxReduce { axis, .. } => reduce(ctx, &regs, axis as usize, true),
            MicroOp::LoadTableSlice { axis, .. } => {
                let axis = axis as usize;
                let base: usize = (0..ctx.cards.len())
                    .filter(|&j| j != axis)
                    .map(|j| ctx.values[j] * ctx.strides[j])
                    .sum();
                (0..ctx.cards[axis])
                    .map(|a| ctx.table[base + a * ctx.strides[axis]])
                    .collect()
            }
        };
        regs[op.dst() as usize] = value;
    }
    (0..ctx.cards.len())
        .map(|p| std::mem::take(&mut regs[OUTPUT_BASE as usize + p]))
        .collect()
}

/// Table-times-inputs marginalized onto `axis`.
///
/// LINEAR row products keep 32 fractional bits; every row takes the same number
/// of multiplies, so the common scale cancels on normalization.
fn reduce(ctx: &RelationContext<'_>, regs: &[Vec<i64>], axis: usize, use_max: bool) -> Vec<i64> {
    let k = ctx.cards.len();
    let mut digits = vec![0usize; k];
    let mut out = match ctx.mode {
        NumMode::Linear => vec![0i64; ctx.cards[axis]],
        NumMode::Log => vec![fixed::LOG_MIN; ctx.cards[axis]],
    };
    for &t in ctx.table {
        let o = &mut out[digits[axis]];
        match ctx.mode {
            NumMode::Linear => {
                let mut p: u128 = (t.max(0) as u128) << 16;
                for j in 0..k {
                    if j != axis {
                        p = div_round_even(p * regs[j][digits[j]].max(0) as u128, 1 << 16);
                    }
                }
                let p = p as i64;
                if use_max {
                    *o = (*o).max(p);
                } else {
                    *o += p;
                }
            }
            NumMode::Log => {
                let mut s = t;
                for j in 0..k {
                    if j != axis {
                        s += regs[j][digits[j]];
                    }
                }
                *o = (*o).max(sat_log(s));
            }
        }
        for j in (0..k).rev() {
            digits[j] += 1;
            if digits[j] < ctx.cards[j] {
                break;
            }
            digits[j] = 0;
        }
    }
    out
}

pub fn format_program(prog: &[MicroOp]) -> String {
    prog.iter()
        .map(|op| op.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}
