use crate::crossview::Embedding;
use crate::error::{Error, Result};
use crate::nav::{Action, Cell, EmbeddingTable, EpisodeSpec, GridWorld};
use crate::reward::ProgressMap;

/// Per-episode conditioning: progress maps for each subgoal and the next
/// waypoint on a shortest path from any cell.
///
/// On the unit 4-connected grid a shortest-path replan from the current cell
/// is a descent of the BFS field, so replanning is a table lookup.
#[derive(Debug, Clone)]
pub struct Guidance {
    pub subgoals: Vec<Cell>,
    pub progress: Vec<ProgressMap>,
}

impl Guidance {
    pub fn new(world: &GridWorld, subgoals: Vec<Cell>) -> Result<Self> {
        let progress = subgoals.iter().map(|&s| ProgressMap::new(world, s)).collect::<Result<_>>()?;
        Ok(Self { subgoals, progress })
    }

    pub fn for_episode(world: &GridWorld, ep: &EpisodeSpec) -> Result<Self> {
        Self::new(world, ep.subgoals().collect())
    }

    /// Adjacent cell on a shortest path towards subgoal `k` (first in action
    /// order on ties); the subgoal itself once there.
    pub fn next_waypoint(&self, world: &GridWorld, cell: Cell, k: usize) -> Result<Cell> {
        let pm = self.progress.get(k).ok_or_else(|| Error::Lookup(format!("subgoal {k}")))?;
        let d = pm.get(world, cell).ok_or(Error::NoPath { start: world.index(cell), goal: world.index(pm.subgoal) })?;
        if d == 0 {
            return Ok(cell);
        }
        world
            .neighbors(cell)
            .find(|&(_, n)| pm.get(world, n) == Some(d - 1))
            .map(|(_, n)| n)
            .ok_or_else(|| Error::Data("progress map has no descent".into()))
    }

    /// Moves that do not increase the distance to subgoal `k`.
    pub fn plausible_moves(&self, world: &GridWorld, cell: Cell, k: usize) -> Vec<Action> {
        let pm = &self.progress[k];
        let Some(d) = pm.get(world, cell) else { return Vec::new() };
        world.neighbors(cell).filter(|&(_, n)| pm.get(world, n).is_some_and(|dn| dn <= d)).map(|(a, _)| a).collect()
    }

    pub fn cond<'t>(&self, world: &GridWorld, table: &'t EmbeddingTable, cell: Cell, k: usize) -> Result<&'t Embedding> {
        table.satellite(world, self.next_waypoint(world, cell, k)?)
    }
}
