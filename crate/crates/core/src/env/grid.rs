//! ASCII grid layouts shared by the maze and frozen-lake tasks.
//!
//! One character per cell: `#` wall or boundary, ` ` empty/frozen, `S` start,
//! `E` exit or frisbee, `H` hole. Row 0 is the top line of the file.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Empty,
    Start,
    Goal,
    Hole,
}

impl Cell {
    pub fn is_open(self) -> bool {
        self != Cell::Wall
    }
}

/// `(row, col)` with row 0 at the top.
pub type Pos = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
    Idle,
}

impl Move {
    pub fn apply(self, (r, c): Pos) -> Option<Pos> {
        match self {
            Move::Up => r.checked_sub(1).map(|r| (r, c)),
            Move::Down => Some((r + 1, c)),
            Move::Left => c.checked_sub(1).map(|c| (r, c)),
            Move::Right => Some((r, c + 1)),
            Move::Idle => Some((r, c)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    cells: Vec<Cell>,
    pub start: Pos,
    pub goal: Pos,
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

impl GridSpec {
    /// Parses a layout. Line and column numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .collect();
        let rows: Vec<&str> = {
            let last = rows.iter().rposition(|r| !r.is_empty()).map_or(0, |i| i + 1);
            rows[..last].to_vec()
        };
        if rows.is_empty() {
            return Err(parse_error(1, 1, "empty grid"));
        }
        let width = rows[0].chars().count();
        if width == 0 {
            return Err(parse_error(1, 1, "empty row"));
        }
        let mut cells = Vec::with_capacity(width * rows.len());
        let (mut start, mut goal) = (None, None);
        for (r, row) in rows.iter().enumerate() {
            let n = row.chars().count();
            if n != width {
                return Err(parse_error(
                    r + 1,
                    n.min(width) + 1,
                    format!("row has {n} cells, expected {width}"),
                ));
            }
            for (c, ch) in row.chars().enumerate() {
                let cell = match ch {
                    '#' => Cell::Wall,
                    ' ' => Cell::Empty,
                    'S' => Cell::Start,
                    'E' => Cell::Goal,
                    'H' => Cell::Hole,
                    other => {
                        return Err(parse_error(r + 1, c + 1, format!("unknown cell character {other:?}")))
                    }
                };
                let slot = match cell {
                    Cell::Start => Some((&mut start, "start")),
                    Cell::Goal => Some((&mut goal, "goal")),
                    _ => None,
                };
                if let Some((slot, what)) = slot {
                    if slot.is_some() {
                        return Err(parse_error(r + 1, c + 1, format!("second {what} cell")));
                    }
                    *slot = Some((r, c));
                }
                cells.push(cell);
            }
        }
        let last = rows.len();
        let start = start.ok_or_else(|| parse_error(last, 1, "grid has no start cell 'S'"))?;
        let goal = goal.ok_or_else(|| parse_error(last, 1, "grid has no goal cell 'E'"))?;
        Ok(Self {
            width,
            height: rows.len(),
            cells,
            start,
            goal,
        })
    }

    pub fn cell(&self, (r, c): Pos) -> Option<Cell> {
        (r < self.height && c < self.width).then(|| self.cells[r * self.width + c])
    }

    pub fn is_open(&self, pos: Pos) -> bool {
        self.cell(pos).is_some_and(Cell::is_open)
    }

    /// Non-wall cells in row-major order.
    pub fn open_cells(&self) -> Vec<Pos> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|p| self.is_open(*p))
            .collect()
    }

    /// Moves one cell unless the target is a wall or outside the grid.
    pub fn step(&self, pos: Pos, mv: Move) -> Pos {
        match mv.apply(pos) {
            Some(next) if self.is_open(next) => next,
            _ => pos,
        }
    }

    /// Length of the shortest open path between two cells, if any.
    pub fn path_distances(&self, from: Pos) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.width * self.height];
        if !self.is_open(from) {
            return dist;
        }
        let mut queue = std::collections::VecDeque::new();
        dist[from.0 * self.width + from.1] = Some(0);
        queue.push_back(from);
        while let Some(p) = queue.pop_front() {
            let d = dist[p.0 * self.width + p.1].expect("queued cells have a distance");
            for mv in [Move::Up, Move::Down, Move::Left, Move::Right] {
                let q = self.step(p, mv);
                let slot = &mut dist[q.0 * self.width + q.1];
                if slot.is_none() {
                    *slot = Some(d + 1);
                    queue.push_back(q);
                }
            }
        }
        dist
    }

    pub fn flat(&self, (r, c): Pos) -> usize {
        r * self.width + c
    }
}

pub fn manhattan(a: Pos, b: Pos) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}
