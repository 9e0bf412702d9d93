//! Supervised initialization on plausible continuations of random walks.

use rand::seq::index::sample;
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use super::guidance::Guidance;
use super::params::{log_softmax, policy_backward, policy_forward_traced, softmax, PolicyParams, ACTIONS};
use super::rollout::history_indices;
use crate::error::{Error, Result};
use crate::nav::{step, Action, EmbeddingTable, GridWorld};
use crate::rng;

pub const DEFAULT_K: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct VpftSample {
    /// State-table indices, oldest first.
    pub history: Vec<usize>,
    pub cond: Vec<f64>,
    pub target: Action,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VpftCorpus {
    pub samples: Vec<VpftSample>,
    /// States with no valid move.
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct VpftConfig {
    pub walks: usize,
    pub walk_length: usize,
    pub k: usize,
    /// Fill the plausible set with further valid moves up to `k`.
    pub pad_plausible: bool,
    pub history: usize,
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
}

impl Default for VpftConfig {
    fn default() -> Self {
        Self {
            walks: 500,
            walk_length: 32,
            k: DEFAULT_K,
            pad_plausible: false,
            history: super::params::DEFAULT_HISTORY,
            steps: 6000,
            batch: 64,
            learning_rate: 0.5,
        }
    }
}

/// Plausible continuations of `cell` toward subgoal `k`: moves that do not
/// increase the BFS distance, capped at `k_max`, optionally padded with the
/// remaining valid moves.
pub fn plausible_set(world: &GridWorld, g: &Guidance, cell: crate::nav::Cell, k: usize, k_max: usize, pad: bool) -> Vec<Action> {
    let mut set = g.plausible_moves(world, cell, k);
    if pad {
        for (a, _) in world.neighbors(cell) {
            if !set.contains(&a) {
                set.push(a);
            }
        }
    }
    set.truncate(k_max);
    set
}

/// Corpus from seeded uniform random walks; each walk heads for a random
/// subgoal (redrawn on arrival) that sets the conditioning and plausible set.
pub fn vpft_build(world: &GridWorld, table: &EmbeddingTable, cfg: &VpftConfig, seed: u64) -> Result<VpftCorpus> {
    if cfg.k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    let open = world.open_cells();
    if open.len() < 2 {
        return Err(Error::Generation("VPFT walks need two open cells".into()));
    }
    let mut corpus = VpftCorpus::default();
    for w in 0..cfg.walks {
        let mut r = rng::indexed_stream(seed, "vpft-walk", w as u64);
        let pick = sample(&mut r, open.len(), 2);
        let mut cells = vec![open[pick.index(0)]];
        let mut g = Guidance::new(world, vec![open[pick.index(1)]])?;
        for _ in 0..cfg.walk_length {
            let cur = *cells.last().expect("non-empty");
            if cur == g.subgoals[0] {
                let next_goal = *open.iter().filter(|&&c| c != cur).collect::<Vec<_>>().choose(&mut r).expect("two open cells");
                g = Guidance::new(world, vec![*next_goal])?;
            }
            let plaus = plausible_set(world, &g, cur, 0, cfg.k, cfg.pad_plausible);
            let valid: Vec<Action> = world.neighbors(cur).map(|(a, _)| a).collect();
            if plaus.is_empty() || valid.is_empty() {
                corpus.skipped += 1;
                break;
            }
            corpus.samples.push(VpftSample {
                history: history_indices(world, &cells, cfg.history),
                cond: g.cond(world, table, cur, 0)?.as_slice().to_vec(),
                target: *plaus.choose(&mut r).expect("non-empty"),
            });
            let a = *valid.choose(&mut r).expect("non-empty");
            cells.push(step(world, cur, a).expect("valid move"));
        }
    }
    Ok(corpus)
}

/// Mean negative log-likelihood of the targets and its gradient.
pub fn vpft_loss(samples: &[VpftSample], params: &PolicyParams) -> Result<(f64, PolicyParams)> {
    if samples.is_empty() {
        return Err(Error::Parameter("empty VPFT corpus".into()));
    }
    let n = samples.len() as f64;
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    for s in samples {
        let (logits, trace) = policy_forward_traced(&s.history, &s.cond, params)?;
        let t = s.target.index();
        loss -= log_softmax(&logits)[t];
        let p = softmax(&logits);
        let d: [f64; ACTIONS] = std::array::from_fn(|i| (p[i] - if i == t { 1.0 } else { 0.0 }) / n);
        policy_backward(params, &trace, &d, &mut grad);
    }
    Ok((loss / n, grad))
}

/// Minibatch SGD on the corpus; returns the per-step losses.
pub fn vpft_train(params: &mut PolicyParams, corpus: &VpftCorpus, cfg: &VpftConfig, seed: u64) -> Result<Vec<f64>> {
    if corpus.samples.is_empty() {
        return Err(Error::Parameter("empty VPFT corpus".into()));
    }
    let mut r = rng::stream(seed, "vpft-batches");
    let b = cfg.batch.clamp(1, corpus.samples.len());
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let batch: Vec<VpftSample> =
            sample(&mut r, corpus.samples.len(), b).iter().map(|i| corpus.samples[i].clone()).collect();
        let (loss, grad) = vpft_loss(&batch, params)?;
        params.add_scaled(&grad, -cfg.learning_rate);
        params.validate().map_err(|_| Error::Divergence("non-finite policy after VPFT step".into()))?;
        losses.push(loss);
    }
    Ok(losses)
}
