//! Episode execution and evaluation shared by the CLI and the tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::{self, GrpoConfig, UpdateRecord};
use crate::canvas::TopoGraph;
use crate::metrics::{densify, trajectory_similarity};
use crate::nav::{
    generate_world, Action, route_length, sample_episodes, Cell, EmbeddingTable, EpisodeSpec, GridWorld, ViewEncoder,
    DEFAULT_VIEW_DIM,
};
use crate::policy::{
    sample_rollout, vpft_build, vpft_train, Guidance, PolicyParams, Rollout, Sampling, VpftConfig, DEFAULT_HIDDEN,
};
use crate::planner::{astar, downsample_edges, PlanQuery, WaypointPath};
use crate::reward::TraceRow;
use crate::rng;

pub const SUCCESS_RADIUS: f64 = 5.0;
pub const DEFAULT_DENSIFY: f64 = 1.0;

/// BFS shortest route start -> stops -> goal as a cell sequence.
pub fn reference_route(world: &GridWorld, ep: &EpisodeSpec) -> Result<Vec<Cell>> {
    let g = Guidance::for_episode(world, ep)?;
    let mut cells = vec![ep.start];
    for k in 0..g.subgoals.len() {
        while *cells.last().expect("non-empty") != g.subgoals[k] {
            let next = g.next_waypoint(world, *cells.last().expect("non-empty"), k)?;
            cells.push(next);
        }
    }
    Ok(cells)
}

pub fn centers(world: &GridWorld, cells: &[Cell]) -> Vec<[f64; 2]> {
    cells.iter().map(|&c| world.cell_center(c)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeOutcome {
    pub success: bool,
    pub invalid: bool,
    pub steps: usize,
    pub subgoals_reached: usize,
    pub trajectory_similarity: f64,
    pub final_distance: f64,
}

/// Success: every stop visited in order, final point within the radius of
/// the goal, and no invalid move.
pub fn score_rollout(world: &GridWorld, ep: &EpisodeSpec, rollout: &Rollout, densify_step: f64) -> Result<EpisodeOutcome> {
    let generated = centers(world, &rollout.visited);
    let reference = centers(world, &reference_route(world, ep)?);
    let ts = if densify_step > 0.0 {
        trajectory_similarity(&densify(&generated, densify_step)?, &densify(&reference, densify_step)?)?
    } else {
        trajectory_similarity(&generated, &reference)?
    };
    let last = *generated.last().expect("rollout starts somewhere");
    let goal = world.cell_center(ep.goal);
    let final_distance = (last[0] - goal[0]).hypot(last[1] - goal[1]);
    Ok(EpisodeOutcome {
        success: rollout.completed && !rollout.invalid && final_distance <= SUCCESS_RADIUS,
        invalid: rollout.invalid,
        steps: rollout.steps.len(),
        subgoals_reached: rollout.subgoals_reached,
        trajectory_similarity: ts,
        final_distance,
    })
}

pub fn run_episode(
    world: &GridWorld,
    ep: &EpisodeSpec,
    table: &EmbeddingTable,
    params: &PolicyParams,
    history: usize,
    sampling: Sampling,
    seed: u64,
) -> Result<Rollout> {
    let g = Guidance::for_episode(world, ep)?;
    let mut r = rng::stream(seed, "rollout");
    sample_rollout(world, ep, &g, table, params, &mut r, ep.max_steps, history, sampling)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanningReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub ts_mean: f64,
    pub ts_std: f64,
    pub invalid_rate: f64,
}

pub fn summarize(outcomes: &[EpisodeOutcome]) -> PlanningReport {
    let n = outcomes.len().max(1) as f64;
    let ts_mean = outcomes.iter().map(|o| o.trajectory_similarity).sum::<f64>() / n;
    let ts_var = outcomes.iter().map(|o| (o.trajectory_similarity - ts_mean).powi(2)).sum::<f64>() / n;
    PlanningReport {
        episodes: outcomes.len(),
        success_rate: outcomes.iter().filter(|o| o.success).count() as f64 / n,
        ts_mean,
        ts_std: ts_var.sqrt(),
        invalid_rate: outcomes.iter().filter(|o| o.invalid).count() as f64 / n,
    }
}

/// Evaluates every episode; stochastic rollouts use the per-episode stream
/// `(seed, "eval", index)`, so results do not depend on `threads`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    world: &GridWorld,
    episodes: &[EpisodeSpec],
    table: &EmbeddingTable,
    params: &PolicyParams,
    history: usize,
    sampling: Sampling,
    seed: u64,
    threads: usize,
) -> Result<Vec<EpisodeOutcome>> {
    par_map(episodes, threads, |i, ep| {
        let g = Guidance::for_episode(world, ep)?;
        let mut r = rng::indexed_stream(seed, "eval", i as u64);
        let roll = sample_rollout(world, ep, &g, table, params, &mut r, ep.max_steps, history, sampling)?;
        score_rollout(world, ep, &roll, DEFAULT_DENSIFY)
    })
    .into_iter()
    .collect()
}

/// Order-preserving map over contiguous chunks on up to `threads` workers.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| s.spawn(move || part.iter().enumerate().map(|(j, t)| f(c * chunk + j, t)).collect::<Vec<R>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

pub fn optimal_steps(world: &GridWorld, ep: &EpisodeSpec) -> Option<usize> {
    route_length(world, ep.start, &ep.subgoals().collect::<Vec<_>>())
}

/// Full planning setup: world, training episodes, VPFT warm start and GRPO.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct PlanTrainConfig {
    pub world_size: usize,
    pub block_density: f64,
    pub view_dim: usize,
    pub hidden: usize,
    /// Training episodes per stop count.
    pub train_episodes: usize,
    pub max_stops: usize,
    pub vpft: VpftConfig,
    pub grpo: GrpoConfig,
}

impl Default for PlanTrainConfig {
    fn default() -> Self {
        Self {
            world_size: 8,
            block_density: 0.2,
            view_dim: DEFAULT_VIEW_DIM,
            hidden: DEFAULT_HIDDEN,
            train_episodes: 1000,
            max_stops: 3,
            vpft: VpftConfig::default(),
            grpo: GrpoConfig::default(),
        }
    }
}

pub struct Planner {
    pub world: GridWorld,
    pub table: EmbeddingTable,
    pub vpft_params: PolicyParams,
    pub vpft_losses: Vec<f64>,
    pub params: PolicyParams,
    pub records: Vec<UpdateRecord>,
    pub trace: Vec<TraceRow>,
}

/// The world, the frozen view encoder and the training episodes all derive
/// from `seed`; evaluation episodes should use [`eval_episodes`].
pub fn train_planner(cfg: &PlanTrainConfig, seed: u64) -> Result<Planner> {
    if cfg.max_stops == 0 {
        return Err(Error::Parameter("maxStops must be positive".into()));
    }
    let world = generate_world(cfg.world_size, cfg.block_density, seed)?;
    let mut train = Vec::new();
    for stops in 1..=cfg.max_stops {
        train.extend(sample_episodes(&world, cfg.train_episodes, stops, rng::derive_indexed_seed(seed, "train-episodes", stops as u64))?);
    }
    train_planner_on(world, &train, cfg, seed)
}

/// VPFT then GRPO on a given world and training episodes.
pub fn train_planner_on(world: GridWorld, train: &[EpisodeSpec], cfg: &PlanTrainConfig, seed: u64) -> Result<Planner> {
    let table = EmbeddingTable::build(&world, &ViewEncoder::new(cfg.view_dim, seed)?)?;
    let corpus = vpft_build(&world, &table, &cfg.vpft, seed)?;
    let mut init = PolicyParams::random(world.cell_count(), cfg.view_dim, cfg.hidden, &mut rng::stream(seed, "policy"));
    let vpft_losses = vpft_train(&mut init, &corpus, &cfg.vpft, seed)?;
    let gc = GrpoConfig { history: cfg.vpft.history, seed, ..cfg.grpo };
    let out = grpo::train(&world, train, &init, &table, &gc)?;
    Ok(Planner { world, table, vpft_params: init, vpft_losses, params: out.params, records: out.records, trace: out.trace })
}

/// Held-out evaluation episodes with `stops` intermediate stops.
pub fn eval_episodes(world: &GridWorld, count: usize, stops: usize, seed: u64) -> Result<Vec<EpisodeSpec>> {
    sample_episodes(world, count, stops, rng::derive_indexed_seed(seed, "eval-episodes", stops as u64))
}

/// Stochastic evaluation on `count` held-out episodes per stop count.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_stops(
    world: &GridWorld,
    table: &EmbeddingTable,
    params: &PolicyParams,
    history: usize,
    count: usize,
    max_stops: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<PlanningReport>> {
    (1..=max_stops)
        .map(|stops| {
            let eps = eval_episodes(world, count, stops, seed)?;
            let out = evaluate_policy(world, &eps, table, params, history, Sampling::Stochastic, seed, threads)?;
            Ok(summarize(&out))
        })
        .collect()
}

/// Open cells as nodes at their centres, 4-neighbour links as straight edges.
/// Returns the graph and the node id of every cell index.
pub fn grid_graph(world: &GridWorld) -> Result<(TopoGraph, Vec<Option<usize>>)> {
    let mut node_of = vec![None; world.cell_count()];
    let mut nodes = Vec::new();
    for c in world.open_cells() {
        node_of[world.index(c)] = Some(nodes.len());
        nodes.push(world.cell_center(c));
    }
    let mut edges = Vec::new();
    for c in world.open_cells() {
        for (a, n) in world.neighbors(c) {
            if matches!(a, Action::Down | Action::Right) {
                let (i, j) = (node_of[world.index(c)].expect("open"), node_of[world.index(n)].expect("open"));
                edges.push((i, j, vec![nodes[i], nodes[j]]));
            }
        }
    }
    Ok((TopoGraph::from_parts(nodes, edges)?, node_of))
}

/// A* route from `start` through `subgoals` on the grid graph.
pub fn grid_route(world: &GridWorld, start: Cell, subgoals: &[Cell], interval: f64) -> Result<WaypointPath> {
    let (graph, node_of) = grid_graph(world)?;
    let node = |c: Cell| {
        node_of.get(world.index(c)).copied().flatten().ok_or_else(|| Error::Lookup(format!("cell {c:?} is not traversable")))
    };
    let mut route = WaypointPath { nodes: vec![node(start)?], edges: vec![], waypoints: vec![], total_cost: 0.0 };
    for &g in subgoals {
        let leg = astar(&graph, &PlanQuery::new(*route.nodes.last().expect("non-empty"), node(g)?))?;
        route.nodes.extend(&leg.nodes[1..]);
        route.edges.extend(leg.edges);
        route.total_cost += leg.total_cost;
    }
    route.waypoints = downsample_edges(&graph, route.nodes[0], &route.edges, interval)?;
    Ok(route)
}
