use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_CELL_METERS: f64 = 10.0;
pub const MAX_WORLD_ATTEMPTS: usize = 1000;
const TEXTURE_WAVES: usize = 3;

/// Grid cell, serialized as `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl From<[usize; 2]> for Cell {
    fn from(v: [usize; 2]) -> Self {
        Cell::new(v[0], v[1])
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.row, c.col]
    }
}

/// Moves plus the stay token. Rows grow downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];
    pub const MOVES: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Stay => (0, 0),
        }
    }

    pub fn opposite(self) -> Action {
        match self {
            Action::Up => Action::Down,
            Action::Down => Action::Up,
            Action::Left => Action::Right,
            Action::Right => Action::Left,
            Action::Stay => Action::Stay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridWorld {
    pub size: usize,
    pub cell_meters: f64,
    pub blocked: BTreeSet<Cell>,
    pub seed: u64,
}

impl GridWorld {
    pub fn open(size: usize, seed: u64) -> Self {
        Self { size, cell_meters: DEFAULT_CELL_METERS, blocked: BTreeSet::new(), seed }
    }

    pub fn cell_count(&self) -> usize {
        self.size * self.size
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.size + c.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.size, index % self.size)
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.size && (col as usize) < self.size
    }

    pub fn is_open(&self, c: Cell) -> bool {
        c.row < self.size && c.col < self.size && !self.blocked.contains(&c)
    }

    pub fn open_cells(&self) -> Vec<Cell> {
        (0..self.cell_count()).map(|i| self.cell_at(i)).filter(|&c| self.is_open(c)).collect()
    }

    /// World position (meters) of a cell centre; x grows with columns.
    pub fn cell_center(&self, c: Cell) -> [f64; 2] {
        [(c.col as f64 + 0.5) * self.cell_meters, (c.row as f64 + 0.5) * self.cell_meters]
    }

    /// Cell containing a world point, if inside the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<Cell> {
        let (c, r) = ((p[0] / self.cell_meters).floor(), (p[1] / self.cell_meters).floor());
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.size && (r as usize) < self.size).then(|| Cell::new(r as usize, c as usize))
    }

    /// Open 4-neighbours in action order.
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = (Action, Cell)> + '_ {
        Action::MOVES.into_iter().filter_map(move |a| step(self, c, a).map(|n| (a, n)))
    }

    /// BFS hop distance from every cell to `target` (`None` if blocked or unreachable).
    pub fn distances_to(&self, target: Cell) -> Vec<Option<u32>> {
        let mut d = vec![None; self.cell_count()];
        if !self.is_open(target) {
            return d;
        }
        d[self.index(target)] = Some(0);
        let mut queue = VecDeque::from([target]);
        while let Some(c) = queue.pop_front() {
            let dc = d[self.index(c)].expect("queued cells have a distance");
            for (_, n) in self.neighbors(c) {
                let i = self.index(n);
                if d[i].is_none() {
                    d[i] = Some(dc + 1);
                    queue.push_back(n);
                }
            }
        }
        d
    }

    pub fn distance(&self, a: Cell, b: Cell) -> Option<u32> {
        self.distances_to(b)[self.index(a)]
    }

    /// Whether the open cells form one 4-connected component.
    pub fn is_connected(&self) -> bool {
        let open = self.open_cells();
        match open.first() {
            None => true,
            Some(&c) => self.distances_to(c).iter().filter(|d| d.is_some()).count() == open.len(),
        }
    }

    /// Per-cell texture in `[0, 1]`: a sum of three seeded plane waves with
    /// wavelengths of 6 to 16 cells, so nearby cells look alike.
    pub fn texture(&self, c: Cell) -> f64 {
        let mut r = rng::stream(self.seed, "texture");
        let (x, y) = (c.col as f64 + 0.5, c.row as f64 + 0.5);
        let mut sum = 0.0;
        for _ in 0..TEXTURE_WAVES {
            let wavelength = r.random_range(6.0..16.0);
            let dir = r.random_range(0.0..std::f64::consts::TAU);
            let phase = r.random_range(0.0..std::f64::consts::TAU);
            sum += (std::f64::consts::TAU * (x * dir.cos() + y * dir.sin()) / wavelength + phase).sin();
        }
        0.5 + 0.5 * sum / TEXTURE_WAVES as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Parameter("world size must be positive".into()));
        }
        if !(self.cell_meters > 0.0 && self.cell_meters.is_finite()) {
            return Err(Error::Parameter("cellMeters must be positive".into()));
        }
        if let Some(c) = self.blocked.iter().find(|c| c.row >= self.size || c.col >= self.size) {
            return Err(Error::Parameter(format!("blocked cell {c:?} outside the grid")));
        }
        if self.open_cells().is_empty() || !self.is_connected() {
            return Err(Error::Data("open cells are not a single connected component".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let w: GridWorld = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// One move; `None` is the invalid outcome (off-grid or blocked).
pub fn step(world: &GridWorld, cell: Cell, action: Action) -> Option<Cell> {
    let (dr, dc) = action.delta();
    let (r, c) = (cell.row as i64 + dr, cell.col as i64 + dc);
    if !world.in_bounds(r, c) {
        return None;
    }
    let next = Cell::new(r as usize, c as usize);
    world.is_open(next).then_some(next)
}

/// Places `floor(density * size^2)` blocked cells uniformly, resampling until
/// the open cells are connected.
pub fn generate_world(size: usize, block_density: f64, seed: u64) -> Result<GridWorld> {
    if size == 0 {
        return Err(Error::Parameter("world size must be positive".into()));
    }
    if !(0.0..0.5).contains(&block_density) {
        return Err(Error::Parameter(format!("blockDensity must be in [0, 0.5), got {block_density}")));
    }
    let n = size * size;
    let count = (block_density * n as f64).floor() as usize;
    let mut r = rng::stream(seed, "world");
    for _ in 0..MAX_WORLD_ATTEMPTS {
        let mut w = GridWorld::open(size, seed);
        w.blocked = sample(&mut r, n, count).iter().map(|i| w.cell_at(i)).collect();
        if w.is_connected() {
            return Ok(w);
        }
    }
    Err(Error::Generation(format!("no connected {size}x{size} world at density {block_density} after {MAX_WORLD_ATTEMPTS} attempts")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flood_fill_count(w: &GridWorld) -> usize {
        let open = w.open_cells();
        let mut seen = vec![open[0]];
        let mut stack = vec![open[0]];
        while let Some(c) = stack.pop() {
            for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (r, cc) = (c.row as i64 + dr, c.col as i64 + dc);
                if r < 0 || cc < 0 || r >= w.size as i64 || cc >= w.size as i64 {
                    continue;
                }
                let n = Cell::new(r as usize, cc as usize);
                if !w.blocked.contains(&n) && !seen.contains(&n) {
                    seen.push(n);
                    stack.push(n);
                }
            }
        }
        seen.len()
    }

    #[test]
    fn generation_examples() {
        assert!(generate_world(8, 0.0, 3).unwrap().blocked.is_empty());
        assert_eq!(generate_world(8, 0.2, 3).unwrap(), generate_world(8, 0.2, 3).unwrap());
        for seed in 0..20 {
            let w = generate_world(8, 0.3, seed).unwrap();
            assert_eq!(w.blocked.len(), 19);
            assert_eq!(flood_fill_count(&w), 64 - 19);
        }
        assert!(generate_world(8, 0.5, 0).is_err());
    }

    #[test]
    fn step_examples_and_inverse() {
        let mut w = GridWorld::open(5, 0);
        w.blocked.insert(Cell::new(2, 3));
        let c = Cell::new(2, 2);
        assert_eq!(step(&w, c, Action::Up), Some(Cell::new(1, 2)));
        assert_eq!(step(&w, c, Action::Right), None);
        assert_eq!(step(&w, Cell::new(0, 0), Action::Left), None);
        for cell in w.open_cells() {
            for a in Action::MOVES {
                if let Some(n) = step(&w, cell, a) {
                    assert_eq!(step(&w, n, a.opposite()), Some(cell));
                }
            }
        }
    }

    #[test]
    fn world_json_round_trip() {
        let w = generate_world(6, 0.2, 9).unwrap();
        let text = serde_json::to_string(&w).unwrap();
        assert!(text.contains("\"cellMeters\"") && text.contains("\"blocked\":[["));
        assert_eq!(serde_json::from_str::<GridWorld>(&text).unwrap(), w);
    }
}
