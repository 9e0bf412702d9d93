use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::world::{Cell, GridWorld};
use crate::error::{Error, Result};
use crate::rng;

pub const MAX_STEPS_FACTOR: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeSpec {
    pub start: Cell,
    pub stops: Vec<Cell>,
    pub goal: Cell,
    pub max_steps: usize,
}

impl EpisodeSpec {
    /// Stops followed by the goal.
    pub fn subgoals(&self) -> impl Iterator<Item = Cell> + '_ {
        self.stops.iter().copied().chain(std::iter::once(self.goal))
    }

    pub fn validate(&self, world: &GridWorld) -> Result<()> {
        if !(1..=3).contains(&self.stops.len()) {
            return Err(Error::Parameter(format!("{} stops, expected 1 to 3", self.stops.len())));
        }
        let cells: Vec<Cell> = std::iter::once(self.start).chain(self.subgoals()).collect();
        if let Some(c) = cells.iter().find(|c| !world.is_open(**c)) {
            return Err(Error::Parameter(format!("episode cell {c:?} is not traversable")));
        }
        for (i, a) in cells.iter().enumerate() {
            if cells[i + 1..].contains(a) {
                return Err(Error::Parameter(format!("episode cell {a:?} repeats")));
            }
        }
        Ok(())
    }
}

/// BFS hop length of the route start -> stops -> goal.
pub fn route_length(world: &GridWorld, start: Cell, subgoals: &[Cell]) -> Option<usize> {
    let mut at = start;
    let mut total = 0usize;
    for &s in subgoals {
        total += world.distance(at, s)? as usize;
        at = s;
    }
    Some(total)
}

/// `count` episodes with distinct uniformly drawn cells; episode `i` uses its
/// own stream so subsets can be regenerated independently.
pub fn sample_episodes(world: &GridWorld, count: usize, stop_count: usize, seed: u64) -> Result<Vec<EpisodeSpec>> {
    if !(1..=3).contains(&stop_count) {
        return Err(Error::Parameter(format!("stopCount must be 1 to 3, got {stop_count}")));
    }
    let open = world.open_cells();
    let need = stop_count + 2;
    if open.len() < need {
        return Err(Error::Generation(format!("{} open cells, episodes need {need}", open.len())));
    }
    (0..count)
        .map(|i| {
            let mut r = rng::indexed_stream(seed, "episodes", i as u64);
            let picks: Vec<Cell> = sample(&mut r, open.len(), need).iter().map(|k| open[k]).collect();
            let (start, goal) = (picks[0], picks[need - 1]);
            let stops = picks[1..need - 1].to_vec();
            let mut route = stops.clone();
            route.push(goal);
            let len = route_length(world, start, &route)
                .ok_or_else(|| Error::Generation("episode cells are disconnected".into()))?;
            Ok(EpisodeSpec { start, stops, goal, max_steps: MAX_STEPS_FACTOR * len })
        })
        .collect()
}

pub fn save_episodes(path: &Path, episodes: &[EpisodeSpec]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(episodes)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_episodes(path: &Path) -> Result<Vec<EpisodeSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}
