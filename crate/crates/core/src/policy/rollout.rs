use rand::distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use super::guidance::Guidance;
use super::params::{log_softmax, policy_forward, softmax, PolicyParams, ACTIONS};
use crate::error::Result;
use crate::nav::{step, Action, Cell, EmbeddingTable, EpisodeSpec, GridWorld};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Stochastic,
    /// Argmax, lowest action index on ties.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RolloutStep {
    pub state: Cell,
    pub action_logits: [f64; ACTIONS],
    pub sampled_action: Action,
    /// `None` is the invalid outcome.
    pub next_state: Option<Cell>,
    pub log_prob: f64,
    pub subgoal_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Rollout {
    pub steps: Vec<RolloutStep>,
    /// Start plus every valid next state.
    pub visited: Vec<Cell>,
    pub subgoals_reached: usize,
    pub invalid: bool,
    /// All stops visited in order, then the goal.
    pub completed: bool,
}

pub fn choose_action(logits: &[f64; ACTIONS], sampling: Sampling, rng: &mut Rng) -> Action {
    let i = match sampling {
        Sampling::Greedy => (0..ACTIONS).fold(0, |b, i| if logits[i] > logits[b] { i } else { b }),
        Sampling::Stochastic => {
            let p = softmax(logits);
            WeightedIndex::new(p).map(|w| w.sample(rng)).unwrap_or(0)
        }
    };
    Action::from_index(i).expect("index below ACTIONS")
}

/// Last `window` entries of a cell sequence as state-table indices.
pub fn history_indices(world: &GridWorld, cells: &[Cell], window: usize) -> Vec<usize> {
    cells[cells.len().saturating_sub(window.max(1))..].iter().map(|&c| world.index(c)).collect()
}

/// Autoregressive rollout through the episode's subgoals. Each step is
/// conditioned on the satellite embedding of the next waypoint; an invalid
/// move ends the rollout.
#[allow(clippy::too_many_arguments)]
pub fn sample_rollout(
    world: &GridWorld,
    episode: &EpisodeSpec,
    guidance: &Guidance,
    table: &EmbeddingTable,
    params: &PolicyParams,
    rng: &mut Rng,
    horizon: usize,
    history: usize,
    sampling: Sampling,
) -> Result<Rollout> {
    let mut visited = vec![episode.start];
    let mut k = 0;
    let mut steps = Vec::new();
    let mut invalid = false;
    let n_sub = guidance.subgoals.len();
    while k < n_sub && guidance.subgoals[k] == *visited.last().expect("non-empty") {
        k += 1;
    }
    while k < n_sub && steps.len() < horizon {
        let cur = *visited.last().expect("non-empty");
        let cond = guidance.cond(world, table, cur, k)?;
        let logits = policy_forward(&history_indices(world, &visited, history), cond.as_slice(), params)?;
        let action = choose_action(&logits, sampling, rng);
        let next = step(world, cur, action);
        steps.push(RolloutStep {
            state: cur,
            action_logits: logits,
            sampled_action: action,
            next_state: next,
            log_prob: log_softmax(&logits)[action.index()],
            subgoal_index: k,
        });
        let Some(next) = next else {
            invalid = true;
            break;
        };
        visited.push(next);
        while k < n_sub && guidance.subgoals[k] == next {
            k += 1;
        }
    }
    Ok(Rollout { steps, visited, subgoals_reached: k, invalid, completed: k == n_sub && !invalid })
}
