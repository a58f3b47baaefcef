//! Dimension-order mesh router: column first, then row.
//!
//! Each directed link, plus the local port of every node, serves one packet per
//! cycle in arrival order. Queues are unbounded; the router only tracks when
//! each link is next free and the deepest backlog seen.

use crate::image::Coord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Port {
    North,
    South,
    East,
    West,
    Local,
}

impl Port {
    fn index(self) -> usize {
        match self {
            Port::North => 0,
            Port::South => 1,
            Port::East => 2,
            Port::West => 3,
            Port::Local => 4,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Port::North => 'N',
            Port::South => 'S',
            Port::East => 'E',
            Port::West => 'W',
            Port::Local => 'L',
        }
    }
}

/// Output port taken at `at` towards `dst`.
pub fn next_port(at: Coord, dst: Coord) -> Port {
    use std::cmp::Ordering::*;
    match (at.1.cmp(&dst.1), at.0.cmp(&dst.0)) {
        (Less, _) => Port::East,
        (Greater, _) => Port::West,
        (Equal, Less) => Port::South,
        (Equal, Greater) => Port::North,
        (Equal, Equal) => Port::Local,
    }
}

pub fn step(at: Coord, port: Port) -> Coord {
    match port {
        Port::North => (at.0 - 1, at.1),
        Port::South => (at.0 + 1, at.1),
        Port::East => (at.0, at.1 + 1),
        Port::West => (at.0, at.1 - 1),
        Port::Local => at,
    }
}

/// The ports traversed from `src` to `dst`; a single `Local` entry when they coincide.
pub fn path(src: Coord, dst: Coord) -> Vec<Port> {
    if src == dst {
        return vec![Port::Local];
    }
    let mut at = src;
    let mut ports = Vec::new();
    while at != dst {
        let p = next_port(at, dst);
        ports.push(p);
        at = step(at, p);
    }
    ports
}

pub fn manhattan(a: Coord, b: Coord) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

#[derive(Debug, Clone)]
pub struct Router {
    pub rows: usize,
    pub cols: usize,
    next_free: Vec<u64>,
    traversals: Vec<u64>,
    pub peak_occupancy: u64,
}

impl Router {
    pub fn new(rows: usize, cols: usize) -> Self {
        Router {
            rows,
            cols,
            next_free: vec![0; rows * cols * 5],
            traversals: vec![0; rows * cols * 5],
            peak_occupancy: 0,
        }
    }

    fn link(&self, at: Coord, port: Port) -> usize {
        (at.0 * self.cols + at.1) * 5 + port.index()
    }

    /// Enqueues a packet on the link leaving `at` through `port` at time `t`.
    /// Returns the time it reaches the far end.
    pub fn traverse(&mut self, at: Coord, port: Port, t: u64) -> u64 {
        let l = self.link(at, port);
        let depart = t.max(self.next_free[l]);
        self.peak_occupancy = self.peak_occupancy.max(depart - t + 1);
        self.next_free[l] = depart + 1;
        self.traversals[l] += 1;
        depart + 1
    }

    /// Packets carried per link, keyed by node and port, for links that carried any.
    pub fn link_counts(&self) -> Vec<(Coord, Port, u64)> {
        let ports = [
            Port::North,
            Port::South,
            Port::East,
            Port::West,
            Port::Local,
        ];
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                for p in ports {
                    let n = self.traversals[self.link((r, c), p)];
                    if n > 0 {
                        out.push(((r, c), p, n));
                    }
                }
            }
        }
        out
    }

    /// Delivery time of a packet injected alone at `t`, walking every hop.
    pub fn deliver_time(&mut self, src: Coord, dst: Coord, t: u64) -> u64 {
        let mut at = src;
        let mut now = t;
        for p in path(src, dst) {
            now = self.traverse(at, p, now);
            at = step(at, p);
        }
        now
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_then_row() {
        use Port::*;
        assert_eq!(path((0, 0), (2, 3)), vec![East, East, East, South, South]);
        assert_eq!(path((2, 3), (0, 0)), vec![West, West, West, North, North]);
        assert_eq!(path((1, 1), (1, 1)), vec![Local]);
        let mut r = Router::new(3, 4);
        assert_eq!(r.deliver_time((0, 0), (2, 3), 0), 5);
        assert_eq!(r.deliver_time((1, 1), (1, 1), 10), 11);
    }

    #[test]
    fn one_packet_per_cycle_per_link() {
        let mut r = Router::new(1, 2);
        assert_eq!(r.traverse((0, 0), Port::East, 4), 5);
        assert_eq!(r.traverse((0, 0), Port::East, 4), 6);
        assert_eq!(r.peak_occupancy, 2);
        assert_eq!(r.traverse((0, 0), Port::East, 9), 10);
        assert_eq!(r.link_counts(), vec![((0, 0), Port::East, 3)]);
    }

    #[test]
    fn hops_equal_manhattan() {
        for src in [(0, 0), (3, 1), (2, 2)] {
            for dst in [(0, 3), (3, 3), (1, 0)] {
                assert_eq!(path(src, dst).len(), manhattan(src, dst));
            }
        }
    }
}
