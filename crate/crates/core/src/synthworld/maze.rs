//! Grid mazes in world coordinates.
//!
//! Cell `(r, c)` covers `[c s, (c + 1) s] x [r s, (r + 1) s]` for cell size
//! `s`, so `x` grows with the column and `y` with the row. Everything outside
//! the grid counts as wall.

use crate::error::{Error, Result};
use std::collections::{BinaryHeap, VecDeque};

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct MazeSpec {
    walls: Vec<bool>,
    rows: usize,
    cols: usize,
    cell_size: f64,
    start: Cell,
    goal: Cell,
    goal_tolerance: f64,
}

pub const FOUR_ROOMS: &str = "\
#########
#S..#...#
#.......#
#...#...#
##.###.##
#...#...#
#.......#
#...#..G#
#########
";

pub const CORRIDOR: &str = "\
###########
#S.......G#
###########
";

/// Where a segment first touches a wall cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    /// Fraction of the segment travelled before contact, in `[0, 1]`.
    pub t: f64,
    pub cell: Option<Cell>,
}

impl MazeSpec {
    pub fn parse(text: &str, cell_size: f64, goal_tolerance: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Parameter(format!("cell size must be positive, got {cell_size}")));
        }
        if !(goal_tolerance > 0.0) {
            return Err(Error::Parameter(format!(
                "goal tolerance must be positive, got {goal_tolerance}"
            )));
        }
        let lines: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end())
            .filter(|l| !l.is_empty())
            .collect();
        let rows = lines.len();
        let cols = lines.first().map(|l| l.chars().count()).unwrap_or(0);
        if rows == 0 || cols == 0 {
            return Err(Error::Format("maze text is empty".into()));
        }
        let mut walls = Vec::with_capacity(rows * cols);
        let (mut start, mut goal) = (None, None);
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::Format(format!(
                    "maze row {r} has {} cells, expected {cols}",
                    line.chars().count()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'S' | 'G' => {
                        let slot = if ch == 'S' { &mut start } else { &mut goal };
                        if slot.replace((r, c)).is_some() {
                            return Err(Error::Format(format!("maze has more than one '{ch}'")));
                        }
                        walls.push(false);
                    }
                    other => {
                        return Err(Error::Format(format!(
                            "unexpected maze character '{other}' at row {r}, column {c}"
                        )))
                    }
                }
            }
        }
        let start = start.ok_or_else(|| Error::Format("maze has no start 'S'".into()))?;
        let goal = goal.ok_or_else(|| Error::Format("maze has no goal 'G'".into()))?;
        let maze = Self {
            walls,
            rows,
            cols,
            cell_size,
            start,
            goal,
            goal_tolerance,
        };
        if !maze.reachable(start).contains(&goal) {
            return Err(Error::Validation("goal is not reachable from the start".into()));
        }
        Ok(maze)
    }

    pub fn four_rooms() -> Self {
        Self::parse(FOUR_ROOMS, 1.0, 0.3).expect("built-in maze is valid")
    }

    pub fn corridor() -> Self {
        Self::parse(CORRIDOR, 1.0, 0.3).expect("built-in maze is valid")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(if (r, c) == self.start {
                    'S'
                } else if (r, c) == self.goal {
                    'G'
                } else if self.is_wall(r, c) {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn start_cell(&self) -> Cell {
        self.start
    }

    pub fn goal_cell(&self) -> Cell {
        self.goal
    }

    pub fn goal_tolerance(&self) -> f64 {
        self.goal_tolerance
    }

    pub fn start_position(&self) -> [f64; 2] {
        self.cell_center(self.start)
    }

    pub fn goal_position(&self) -> [f64; 2] {
        self.cell_center(self.goal)
    }

    /// World extent `(width, height)`.
    pub fn bounds(&self) -> (f64, f64) {
        (self.cols as f64 * self.cell_size, self.rows as f64 * self.cell_size)
    }

    pub fn is_wall(&self, r: usize, c: usize) -> bool {
        r >= self.rows || c >= self.cols || self.walls[r * self.cols + c]
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| !self.is_wall(r, c))
            .collect()
    }

    pub fn cell_center(&self, (r, c): Cell) -> [f64; 2] {
        [(c as f64 + 0.5) * self.cell_size, (r as f64 + 0.5) * self.cell_size]
    }

    /// Cell containing the point, or `None` outside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let (c, r) = ((x / self.cell_size) as usize, (y / self.cell_size) as usize);
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some_and(|(r, c)| !self.is_wall(r, c))
    }

    pub fn at_goal(&self, x: f64, y: f64) -> bool {
        let g = self.goal_position();
        ((x - g[0]).powi(2) + (y - g[1]).powi(2)).sqrt() <= self.goal_tolerance
    }

    fn neighbours(&self, (r, c): Cell) -> impl Iterator<Item = Cell> + '_ {
        let cand = [
            (r.wrapping_sub(1), c),
            (r, c + 1),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
        ];
        cand.into_iter().filter(|&(nr, nc)| !self.is_wall(nr, nc))
    }

    /// Free cells 4-connected to `from`.
    pub fn reachable(&self, from: Cell) -> Vec<Cell> {
        if self.is_wall(from.0, from.1) {
            return Vec::new();
        }
        let mut seen = vec![false; self.rows * self.cols];
        let mut queue = VecDeque::from([from]);
        seen[from.0 * self.cols + from.1] = true;
        let mut out = Vec::new();
        while let Some(cell) = queue.pop_front() {
            out.push(cell);
            for n in self.neighbours(cell) {
                let idx = n.0 * self.cols + n.1;
                if !seen[idx] {
                    seen[idx] = true;
                    queue.push_back(n);
                }
            }
        }
        out
    }

    /// Shortest 4-connected cell path, both ends included.
    pub fn astar(&self, from: Cell, to: Cell) -> Result<Vec<Cell>> {
        if self.is_wall(from.0, from.1) || self.is_wall(to.0, to.1) {
            return Err(Error::Parameter("path endpoints must be free cells".into()));
        }
        let idx = |(r, c): Cell| r * self.cols + c;
        let h = |(r, c): Cell| r.abs_diff(to.0) + c.abs_diff(to.1);
        let mut g = vec![usize::MAX; self.rows * self.cols];
        let mut parent = vec![usize::MAX; self.rows * self.cols];
        let mut open = BinaryHeap::new();
        g[idx(from)] = 0;
        // min-heap on (f, h, cell index) through Reverse ordering
        open.push(std::cmp::Reverse((h(from), h(from), idx(from))));
        while let Some(std::cmp::Reverse((f, _, i))) = open.pop() {
            let cell = (i / self.cols, i % self.cols);
            if cell == to {
                let mut path = vec![cell];
                let mut cur = i;
                while cur != idx(from) {
                    cur = parent[cur];
                    path.push((cur / self.cols, cur % self.cols));
                }
                path.reverse();
                return Ok(path);
            }
            if f > g[i] + h(cell) {
                continue;
            }
            for n in self.neighbours(cell) {
                let ni = idx(n);
                let cand = g[i] + 1;
                if cand < g[ni] {
                    g[ni] = cand;
                    parent[ni] = i;
                    open.push(std::cmp::Reverse((cand + h(n), h(n), ni)));
                }
            }
        }
        Err(Error::Validation(format!("no path from {from:?} to {to:?}")))
    }

    /// First contact of the segment `p -> q` with a wall cell or the world
    /// boundary. Touching a wall face counts as contact.
    pub fn first_contact(&self, p: [f64; 2], q: [f64; 2]) -> Option<Contact> {
        let (w, h) = self.bounds();
        let mut best: Option<Contact> = None;
        let mut consider = |t: f64, cell: Option<Cell>| {
            if best.is_none_or(|b| t < b.t) {
                best = Some(Contact { t, cell });
            }
        };
        if !self.is_free_point(p[0], p[1]) {
            return Some(Contact {
                t: 0.0,
                cell: self.cell_of(p[0], p[1]),
            });
        }
        if let Some(t) = leave_box(p, q, [0.0, 0.0], [w, h]) {
            consider(t, None);
        }
        let s = self.cell_size;
        let lo_c = (p[0].min(q[0]) / s).floor().max(0.0) as usize;
        let hi_c = ((p[0].max(q[0]) / s).floor().max(0.0) as usize).min(self.cols - 1);
        let lo_r = (p[1].min(q[1]) / s).floor().max(0.0) as usize;
        let hi_r = ((p[1].max(q[1]) / s).floor().max(0.0) as usize).min(self.rows - 1);
        for r in lo_r.saturating_sub(1)..=(hi_r + 1).min(self.rows - 1) {
            for c in lo_c.saturating_sub(1)..=(hi_c + 1).min(self.cols - 1) {
                if !self.walls[r * self.cols + c] {
                    continue;
                }
                let lo = [c as f64 * s, r as f64 * s];
                let hi = [lo[0] + s, lo[1] + s];
                if let Some(t) = enter_box(p, q, lo, hi) {
                    consider(t, Some((r, c)));
                }
            }
        }
        best
    }

    pub fn segment_hits_wall(&self, p: [f64; 2], q: [f64; 2]) -> bool {
        self.first_contact(p, q).is_some()
    }

    /// True when any consecutive pair of the `(x, y)` path crosses a wall.
    pub fn path_collides(&self, points: &[[f64; 2]]) -> bool {
        match points {
            [] => false,
            [p] => !self.is_free_point(p[0], p[1]),
            _ => points.windows(2).any(|w| self.segment_hits_wall(w[0], w[1])),
        }
    }
}

/// Liang-Barsky clip of `p + t (q - p)`, `t in [0, 1]`, against a closed box.
fn clip(p: [f64; 2], q: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..2 {
        let d = q[k] - p[k];
        if d == 0.0 {
            if p[k] < lo[k] || p[k] > hi[k] {
                return None;
            }
            continue;
        }
        let (mut a, mut b) = ((lo[k] - p[k]) / d, (hi[k] - p[k]) / d);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t0 = t0.max(a);
        t1 = t1.min(b);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

fn enter_box(p: [f64; 2], q: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> Option<f64> {
    clip(p, q, lo, hi).map(|(t0, _)| t0)
}

/// Parameter at which a segment starting inside the box leaves its interior.
fn leave_box(p: [f64; 2], q: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> Option<f64> {
    let inside = |v: [f64; 2]| (0..2).all(|k| v[k] > lo[k] && v[k] < hi[k]);
    if inside(q) {
        return None;
    }
    clip(p, q, lo, hi).map(|(_, t1)| t1)
}
