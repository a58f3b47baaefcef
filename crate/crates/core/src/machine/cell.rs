//! Per-cell state: variable registers, shadow copies, relation lanes, and the
//! fixed-function channels that assemble outgoing inter-cell messages.

use super::fixed::{self, mul_linear, sat_log, NumMode, FULL_SCALE};
use super::microprog::{self, MicroOp, Operand, OperandSource, RelationContext};
use crate::image::{Coord, SlotRef};

#[derive(Debug, Clone, Default)]
pub(crate) struct Deps {
    pub rels: Vec<usize>,
    pub chans: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct VarState {
    pub var: usize,
    pub card: usize,
    pub evidence: Option<usize>,
    /// Evidence register: uniform, or one-hot when clamped.
    pub reg: Vec<i64>,
    pub value: usize,
    pub color: usize,
    pub counts: Vec<u64>,
    /// `(relation, position)` lanes carrying messages into this variable.
    pub lanes: Vec<(usize, usize)>,
    /// Shadow slots holding aggregated messages from remote cells.
    pub returns: Vec<usize>,
    pub deps: Deps,
}

#[derive(Debug, Clone)]
pub(crate) struct ShadowState {
    pub var: usize,
    pub src: Coord,
    pub reg: Vec<i64>,
    /// Present when the shadow carries a remote cell's messages into a variable homed here.
    pub home_slot: Option<usize>,
    pub deps: Deps,
}

#[derive(Debug, Clone)]
pub(crate) struct RelState {
    pub factor: usize,
    pub scope: Vec<SlotRef>,
    pub cards: Vec<usize>,
    pub strides: Vec<usize>,
    pub table: Vec<i64>,
    pub program: Vec<MicroOp>,
    pub lanes: Vec<Vec<i64>>,
    pub committed: Vec<bool>,
    pub lane_deps: Vec<Deps>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ChannelKind {
    /// From a variable's home: evidence times every incoming message except the
    /// one from the destination cell (GIBBS: the current value).
    Extrinsic { slot: usize, exclude: Option<usize> },
    /// Into a variable's home: the product of this cell's relation outputs on it.
    Aggregate { shadow: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct Channel {
    pub var: usize,
    pub dst: Coord,
    pub dst_slot: usize,
    pub kind: ChannelKind,
    pub parts: Vec<Part>,
    pub last_sent: Option<Vec<i64>>,
}

/// A register feeding a channel or belief combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Part {
    Evidence(usize),
    Lane(usize, usize),
    Shadow(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Cell {
    pub coord: Coord,
    pub id: usize,
    pub threshold: i64,
    pub gibbs_period: Option<(u64, u64)>,
    pub vars: Vec<VarState>,
    pub shadows: Vec<ShadowState>,
    pub rels: Vec<RelState>,
    pub channels: Vec<Channel>,
    pub dirty_rels: Vec<bool>,
    pub dirty_chans: Vec<bool>,
    pub wake_pending: bool,
    pub busy_until: u64,
    /// Oldest GIBBS epoch among the pending dirty work.
    pub epoch: Option<u64>,
}

impl OperandSource for Cell {
    fn operand(&self, op: Operand) -> &[i64] {
        match op {
            Operand::Reg(_) => &[],
            Operand::Shadow(s) => &self.shadows[s as usize].reg,
            Operand::Evidence(v) => &self.vars[v as usize].reg,
            Operand::Lane { rel, pos } => &self.rels[rel as usize].lanes[pos as usize],
        }
    }
}

/// Pointwise product (LINEAR, renormalized after every factor) or saturating
/// sum (LOG) of `parts`, starting from `init` or the uniform vector.
pub(crate) fn combine<'a>(
    mode: NumMode,
    len: usize,
    parts: impl Iterator<Item = &'a [i64]>,
) -> Vec<i64> {
    let mut acc = vec![mode.anchor(); len];
    for p in parts {
        match mode {
            NumMode::Linear => {
                for (a, &x) in acc.iter_mut().zip(p) {
                    *a = mul_linear(*a, x);
                }
                fixed::normalize(mode, &mut acc);
            }
            NumMode::Log => {
                for (a, &x) in acc.iter_mut().zip(p) {
                    *a = sat_log(*a + x);
                }
            }
        }
    }
    fixed::normalize(mode, &mut acc);
    acc
}

impl Cell {
    pub fn part(&self, p: Part) -> &[i64] {
        match p {
            Part::Evidence(v) => &self.vars[v].reg,
            Part::Lane(r, q) => &self.rels[r].lanes[q],
            Part::Shadow(s) => &self.shadows[s].reg,
        }
    }

    /// Runs relation `r` against the current registers without committing.
    pub fn evaluate(&self, mode: NumMode, r: usize) -> Vec<Vec<i64>> {
        let rel = &self.rels[r];
        let values: Vec<usize> = rel
            .scope
            .iter()
            .map(|s| match *s {
                SlotRef::Var(v) => self.vars[v].value,
                SlotRef::Shadow(k) => {
                    self.shadows[k].reg.first().copied().unwrap_or(0).max(0) as usize
                }
            })
            .collect();
        let ctx = RelationContext {
            mode,
            table: &rel.table,
            cards: &rel.cards,
            strides: &rel.strides,
            values: &values,
        };
        microprog::execute(&rel.program, &ctx, self)
    }

    /// Computes the payload of channel `c` and its cost in micro-ops.
    pub fn channel_output(&self, mode: NumMode, gibbs: bool, c: usize) -> (Vec<i64>, usize) {
        let ch = &self.channels[c];
        if gibbs {
            if let ChannelKind::Extrinsic { slot, .. } = ch.kind {
                return (vec![self.vars[slot].value as i64], 1);
            }
            let parts: Vec<&[i64]> = ch.parts.iter().map(|&p| self.part(p)).collect();
            let len = parts.first().map_or(1, |p| p.len());
            return (combine(mode, len, parts.into_iter()), ch.parts.len() + 1);
        }
        let len = match ch.kind {
            ChannelKind::Extrinsic { slot, .. } => self.vars[slot].card,
            ChannelKind::Aggregate { shadow } => self.shadows[shadow].reg.len(),
        };
        let out = combine(mode, len, ch.parts.iter().map(|&p| self.part(p)));
        (out, ch.parts.len() + 1)
    }

    /// Belief register of local variable slot `v`.
    pub fn belief(&self, mode: NumMode, v: usize) -> Vec<i64> {
        let var = &self.vars[v];
        let parts = std::iter::once(var.reg.as_slice())
            .chain(
                var.lanes
                    .iter()
                    .map(|&(r, p)| self.rels[r].lanes[p].as_slice()),
            )
            .chain(var.returns.iter().map(|&s| self.shadows[s].reg.as_slice()));
        combine(mode, var.card, parts)
    }

    /// GIBBS conditional of slot `v` (LOG, max zero); evidence is not included.
    pub fn conditional(&self, v: usize) -> Vec<i64> {
        let var = &self.vars[v];
        let parts = var
            .lanes
            .iter()
            .map(|&(r, p)| self.rels[r].lanes[p].as_slice())
            .chain(var.returns.iter().map(|&s| self.shadows[s].reg.as_slice()));
        combine(NumMode::Log, var.card, parts)
    }

    pub fn mark(&mut self, deps_of: DepRef, epoch: u64) {
        let deps = match deps_of {
            DepRef::Var(v) => &self.vars[v].deps,
            DepRef::Shadow(s) => &self.shadows[s].deps,
            DepRef::Lane(r, p) => &self.rels[r].lane_deps[p],
        };
        if !deps.rels.is_empty() || !deps.chans.is_empty() {
            self.epoch = Some(self.epoch.map_or(epoch, |e| e.min(epoch)));
        }
        for &r in &deps.rels {
            self.dirty_rels[r] = true;
        }
        for &c in &deps.chans {
            self.dirty_chans[c] = true;
        }
    }

    pub fn has_dirty(&self) -> bool {
        self.dirty_rels.iter().any(|&d| d) || self.dirty_chans.iter().any(|&d| d)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum DepRef {
    Var(usize),
    Shadow(usize),
    Lane(usize, usize),
}

/// Whether a new message differs enough from the last sent copy to be sent.
pub(crate) fn gate(threshold: i64, any_change: bool, old: Option<&[i64]>, new: &[i64]) -> bool {
    match old {
        None => true,
        Some(old) if old.len() != new.len() => true,
        Some(old) => {
            let d = fixed::linf_lsb(old, new);
            if any_change {
                d > 0
            } else {
                threshold < FULL_SCALE && d >= threshold
            }
        }
    }
}
