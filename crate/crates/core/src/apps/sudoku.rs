use super::{AppError, Benchmark, Oracle};
use crate::graph::{FactorGraph, FactorKind};
use crate::image::Mode;

/// Square Sudoku grid with `side = b * b`; cell values are `1..=side`, `None` is blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub side: usize,
    pub cells: Vec<Option<usize>>,
}

impl Grid {
    pub fn box_size(&self) -> usize {
        (self.side as f64).sqrt().round() as usize
    }

    pub fn get(&self, r: usize, c: usize) -> Option<usize> {
        self.cells[r * self.side + c]
    }

    pub fn givens(&self) -> Vec<(usize, usize, usize)> {
        (0..self.cells.len())
            .filter_map(|i| self.cells[i].map(|v| (i / self.side, i % self.side, v)))
            .collect()
    }

    /// Index lists of every row, column and box.
    pub fn units(&self) -> Vec<Vec<usize>> {
        let (s, b) = (self.side, self.box_size());
        let mut units = Vec::with_capacity(3 * s);
        for r in 0..s {
            units.push((0..s).map(|c| r * s + c).collect());
        }
        for c in 0..s {
            units.push((0..s).map(|r| r * s + c).collect());
        }
        for br in 0..b {
            for bc in 0..b {
                units.push(
                    (0..s)
                        .map(|k| (br * b + k / b) * s + bc * b + k % b)
                        .collect(),
                );
            }
        }
        units
    }

    fn allowed(&self, i: usize, v: usize) -> bool {
        self.units()
            .iter()
            .filter(|u| u.contains(&i))
            .all(|u| u.iter().all(|&j| j == i || self.cells[j] != Some(v)))
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in 0..self.side {
            let row: String = (0..self.side)
                .map(|c| {
                    self.get(r, c)
                        .map_or('.', |v| char::from_digit(v as u32, 36).unwrap_or('?'))
                })
                .collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

/// One row per line, `.` or `0` for a blank. Lines starting with `#` are ignored.
pub fn parse_grid(text: &str) -> Result<Grid, AppError> {
    let rows: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let side = rows.len();
    let b = (side as f64).sqrt().round() as usize;
    if side == 0 || b * b != side {
        return Err(AppError::Invalid(format!(
            "grid has {side} rows, need a square number"
        )));
    }
    let mut cells = Vec::with_capacity(side * side);
    for (line, row) in rows {
        let chars: Vec<char> = row.chars().filter(|c| !c.is_whitespace()).collect();
        if chars.len() != side {
            return Err(AppError::Syntax {
                line,
                msg: format!("expected {side} cells, found {}", chars.len()),
            });
        }
        for ch in chars {
            cells.push(match ch {
                '.' | '0' => None,
                _ => match ch.to_digit(36) {
                    Some(d) if (1..=side as u32).contains(&d) => Some(d as usize),
                    _ => {
                        return Err(AppError::Syntax {
                            line,
                            msg: format!("bad cell '{ch}'"),
                        })
                    }
                },
            });
        }
    }
    Ok(Grid { side, cells })
}

/// Counts solutions by backtracking, stopping at `limit`. Returns the count and the first solution.
pub fn solve_count(grid: &Grid, limit: usize) -> (usize, Option<Grid>) {
    fn go(g: &mut Grid, limit: usize, count: &mut usize, first: &mut Option<Grid>) {
        let Some(i) = g.cells.iter().position(Option::is_none) else {
            *count += 1;
            if first.is_none() {
                *first = Some(g.clone());
            }
            return;
        };
        for v in 1..=g.side {
            if *count >= limit {
                return;
            }
            if g.allowed(i, v) {
                g.cells[i] = Some(v);
                go(g, limit, count, first);
                g.cells[i] = None;
            }
        }
    }
    let givens_ok = (0..grid.cells.len()).all(|i| grid.cells[i].is_none_or(|v| grid.allowed(i, v)));
    if !givens_ok {
        return (0, None);
    }
    let (mut count, mut first) = (0, None);
    go(&mut grid.clone(), limit, &mut count, &mut first);
    (count, first)
}

/// Cell `(r, c)` is variable `r * side + c`, holding the digit minus one.
/// Givens are `(row, col, digit)` with digits `1..=side`.
pub fn build_sudoku(side: usize, givens: &[(usize, usize, usize)]) -> Result<Benchmark, AppError> {
    let b = (side as f64).sqrt().round() as usize;
    if side < 1 || b * b != side {
        return Err(AppError::Invalid(format!("side {side} is not a square")));
    }
    let mut grid = Grid {
        side,
        cells: vec![None; side * side],
    };
    for &(r, c, v) in givens {
        if r >= side || c >= side || !(1..=side).contains(&v) {
            return Err(AppError::Invalid(format!(
                "given ({r}, {c}, {v}) outside the grid"
            )));
        }
        if grid.cells[r * side + c].is_some_and(|old| old != v) {
            return Err(AppError::Contradictory);
        }
        grid.cells[r * side + c] = Some(v);
    }
    let solution = match solve_count(&grid, 2) {
        (0, _) => return Err(AppError::Contradictory),
        (1, Some(s)) => s,
        _ => return Err(AppError::NotUnique),
    };
    let mut graph = FactorGraph::with_variables(&vec![side; side * side]);
    for unit in grid.units() {
        graph.add_factor(unit, FactorKind::AllDifferent);
    }
    for (r, c, v) in grid.givens() {
        graph.set_evidence(r * side + c, v - 1)?;
    }
    Ok(Benchmark {
        name: format!("sudoku-{side}x{side}"),
        graph,
        oracle: Oracle::Assignment(solution.cells.iter().map(|v| v.unwrap() - 1).collect()),
        oracle_description: "backtracking solver, unique solution".into(),
        mode: Mode::MinSum,
        tolerance: 0.0,
    })
}
