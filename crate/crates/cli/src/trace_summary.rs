//! Offline summary of an event trace: packets per cycle and per-link load.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use factor_machine::image::Coord;
use factor_machine::machine::router::{manhattan, path, step};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub cycle: u64,
    pub cell: Coord,
    pub event: String,
    pub var: usize,
    pub detail: i64,
}

pub fn parse_trace(text: &str) -> Result<Vec<Row>, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "cycle,cell_row,cell_col,event,var_id,detail")) => {}
        _ => return Err("line 1: missing trace header".into()),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || format!("line {}: malformed trace row", i + 1);
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad());
        let event = f[3].to_string();
        if !["SEND", "DELIVER", "UPDATE", "CLAMP", "SAMPLE"].contains(&f[3]) {
            return Err(format!("line {}: unknown event '{}'", i + 1, f[3]));
        }
        rows.push(Row {
            cycle: num(f[0])?,
            cell: (num(f[1])? as usize, num(f[2])? as usize),
            event,
            var: num(f[4])? as usize,
            detail: f[5].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub counts: BTreeMap<String, u64>,
    pub hops: u64,
    pub first_cycle: u64,
    pub last_cycle: u64,
    pub bin_width: u64,
    /// Packets sent in each `bin_width`-cycle window, from cycle 0.
    pub histogram: Vec<u64>,
    pub peak_packets_per_cycle: u64,
    /// Packets carried per directed link, keyed by node and port letter.
    pub links: BTreeMap<(Coord, char), u64>,
    /// SENDs with no matching DELIVER before the trace ends.
    pub in_flight: u64,
    /// DELIVERs with no matching earlier SEND.
    pub unmatched: u64,
}

/// Builds the summary. Each DELIVER is paired with the oldest pending SEND of
/// the same variable whose hop count equals the source-destination distance;
/// the pair's dimension-order route is then charged to every link on it.
pub fn summarize(rows: &[Row], bins: u64) -> Summary {
    let mut s = Summary {
        first_cycle: rows.first().map_or(0, |r| r.cycle),
        ..Summary::default()
    };
    let mut per_cycle: BTreeMap<u64, u64> = BTreeMap::new();
    let mut pending: BTreeMap<usize, VecDeque<(Coord, usize)>> = BTreeMap::new();
    for r in rows {
        *s.counts.entry(r.event.clone()).or_default() += 1;
        s.last_cycle = s.last_cycle.max(r.cycle);
        match r.event.as_str() {
            "SEND" => {
                s.hops += r.detail as u64;
                *per_cycle.entry(r.cycle).or_default() += 1;
                pending
                    .entry(r.var)
                    .or_default()
                    .push_back((r.cell, r.detail as usize));
            }
            "DELIVER" => {
                let queue = pending.entry(r.var).or_default();
                match queue
                    .iter()
                    .position(|&(src, h)| manhattan(src, r.cell) == h)
                {
                    Some(i) => {
                        let (src, _) = queue.remove(i).expect("index from position");
                        let mut at = src;
                        for p in path(src, r.cell) {
                            *s.links.entry((at, p.letter())).or_default() += 1;
                            at = step(at, p);
                        }
                    }
                    None => s.unmatched += 1,
                }
            }
            _ => {}
        }
    }
    s.in_flight = pending.values().map(|q| q.len() as u64).sum();
    s.peak_packets_per_cycle = per_cycle.values().copied().max().unwrap_or(0);
    let bins = bins.max(1);
    s.bin_width = (s.last_cycle + 1).div_ceil(bins).max(1);
    s.histogram = vec![0; (s.last_cycle / s.bin_width + 1) as usize];
    for (c, n) in per_cycle {
        s.histogram[(c / s.bin_width) as usize] += n;
    }
    s
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut out = String::new();
        for e in ["SEND", "DELIVER", "UPDATE", "CLAMP", "SAMPLE"] {
            let _ = writeln!(
                out,
                "{}={}",
                e.to_ascii_lowercase(),
                self.counts.get(e).copied().unwrap_or(0)
            );
        }
        let _ = writeln!(out, "hops={}", self.hops);
        let _ = writeln!(out, "first_cycle={}", self.first_cycle);
        let _ = writeln!(out, "last_cycle={}", self.last_cycle);
        let _ = writeln!(
            out,
            "peak_packets_per_cycle={}",
            self.peak_packets_per_cycle
        );
        let _ = writeln!(out, "in_flight={}", self.in_flight);
        let _ = writeln!(out, "unmatched_deliveries={}", self.unmatched);
        let peak = self.links.values().copied().max().unwrap_or(0);
        let _ = writeln!(out, "peak_link_packets={peak}");
        let _ = writeln!(out, "# packets per cycle: first_cycle last_cycle packets");
        for (i, n) in self.histogram.iter().enumerate() {
            let lo = i as u64 * self.bin_width;
            let _ = writeln!(out, "bin {lo} {} {n}", lo + self.bin_width - 1);
        }
        let _ = writeln!(out, "# per-link occupancy: row col port packets");
        for (((r, c), p), n) in &self.links {
            let _ = writeln!(out, "link {r} {c} {p} {n}");
        }
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRACE: &str = "cycle,cell_row,cell_col,event,var_id,detail\n\
        0,0,0,SEND,3,2\n\
        0,0,0,SEND,3,1\n\
        2,0,1,DELIVER,3,0\n\
        3,1,1,DELIVER,3,1\n\
        4,1,1,UPDATE,0,5\n";

    #[test]
    fn pairs_sends_with_deliveries_by_distance() {
        let rows = parse_trace(TRACE).unwrap();
        let s = summarize(&rows, 5);
        assert_eq!(s.hops, 3);
        assert_eq!(s.in_flight, 0);
        assert_eq!(s.unmatched, 0);
        let links: Vec<_> = s.links.into_iter().collect();
        assert_eq!(links, vec![(((0, 0), 'E'), 2), (((0, 1), 'S'), 1)]);
        assert_eq!(s.histogram, vec![2, 0, 0, 0, 0]);
        assert_eq!(s.peak_packets_per_cycle, 2);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(parse_trace("nope\n").is_err());
        let bad = "cycle,cell_row,cell_col,event,var_id,detail\n1,0,0,HOP,0,0\n";
        assert!(parse_trace(bad).unwrap_err().contains("unknown event"));
    }
}
