use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use geoplan_core::canvas::io::{read_raster, write_graph};
use geoplan_core::canvas::{build_prototypes, extract_canvas_with, PatchEncoder, PrototypeConfig, PrototypeSet};
use geoplan_core::checkpoint;
use geoplan_core::crossview::{
    build_index, evaluate_recall, init_model, retrieve, synthetic_views, train_alignment, IndexEntry, RetrievalIndex,
    ALIGN_CHECKPOINT_KIND,
};
use geoplan_core::metrics::{
    average_precision, grid_visual_consistency, hit_rate, success_rate, top_one_percent_recall, topk_recall,
    trajectory_similarity, RankedResult, TrajectoryPair,
};
use geoplan_core::nav::{
    load_episodes, sample_episodes, save_episodes, step, Action, Cell, EmbeddingTable, EpisodeSpec, GridWorld,
    ViewEncoder,
};
use geoplan_core::pipeline::{
    evaluate_stops, grid_route, reference_route, run_episode, score_rollout, train_planner_on,
    EpisodeOutcome, PlanningReport,
};
use geoplan_core::planner::{plan as plan_path, PlanQuery};
use geoplan_core::policy::{Guidance, PolicyParams, Rollout, RolloutStep, ACTIONS, POLICY_CHECKPOINT_KIND};
use geoplan_core::reward::{parse_transition, r_geo, r_prog, write_trace_csv, TransitionClass};
use geoplan_core::rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::{EpisodeArgs, EvaluateArgs, ExtractArgs, GenWorldArgs, PlanArgs, TrainAlignArgs, TrainPlanArgs};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub fn extract(cfg: &ExperimentConfig, a: &ExtractArgs) -> Result<()> {
    let seed = cfg.seed()?;
    let tile = read_raster(&a.raster)?;
    let c = &cfg.canvas;
    let encoder = PatchEncoder::new(c.patch_size, tile.channels, c.dim, seed)?;
    let protos = match &a.protos {
        Some(p) => {
            let set: PrototypeSet = read_json(p)?;
            set.validate()?;
            set
        }
        None => build_prototypes(
            &encoder,
            &PrototypeConfig { samples_per_template: c.samples_per_template, seed, ..PrototypeConfig::default() },
        )?,
    };
    let products = extract_canvas_with(&tile, &encoder, &protos, c.max_spur)?;
    let out = cfg.output(&a.out);
    ensure_parent(&out)?;
    write_graph(&out, &products.graph)?;
    println!("nodes {} edges {}", products.graph.nodes.len(), products.graph.edges.len());
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct AlignMetrics {
    seed: u64,
    steps: usize,
    train_pairs: usize,
    test_pairs: usize,
    denominator: geoplan_core::crossview::Denominator,
    /// Absent for zero-step runs.
    final_loss: Option<f64>,
    top1: f64,
    top5: f64,
    top10: f64,
}

pub fn train_align(cfg: &ExperimentConfig, a: &TrainAlignArgs) -> Result<()> {
    let seed = cfg.seed()?;
    let s = &cfg.align;
    if !(0.0..1.0).contains(&s.holdout) {
        bail!("holdout must be in [0, 1), got {}", s.holdout);
    }
    let pairs = synthetic_views(&s.views, seed)?;
    let test_n = ((pairs.len() as f64 * s.holdout).round() as usize).clamp(1, pairs.len().max(1));
    if pairs.len() < 2 {
        bail!("need at least two view pairs");
    }
    let (train, test) = pairs.split_at(pairs.len() - test_n);
    let mut model = init_model(s.views.tokens, s.views.token_len, &s.model, seed);
    let report = train_alignment(&mut model, train, &s.model, seed)?;
    let recall = evaluate_recall(&model, test)?;
    let dir = cfg.output(&a.out);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    checkpoint::save(&dir.join("align.bin"), ALIGN_CHECKPOINT_KIND, seed, &model)?;
    build_index(&model, test)?.save(&dir.join("index.json"))?;
    let metrics = AlignMetrics {
        seed,
        steps: s.model.steps,
        train_pairs: train.len(),
        test_pairs: test.len(),
        denominator: s.model.denominator,
        final_loss: report.losses.last().copied(),
        top1: recall.top1,
        top5: recall.top5,
        top10: recall.top10,
    };
    write_json(&dir.join("metrics.json"), &metrics)?;
    println!("top1 {:.4} top5 {:.4} top10 {:.4}", recall.top1, recall.top5, recall.top10);
    Ok(())
}

pub fn gen_world(cfg: &ExperimentConfig, a: &GenWorldArgs) -> Result<()> {
    let seed = cfg.seed()?;
    let world = geoplan_core::nav::generate_world(cfg.plan.world_size, cfg.plan.block_density, seed)?;
    let out = cfg.output(&a.out);
    ensure_parent(&out)?;
    world.save(&out)?;
    if let Some(path) = &a.episodes {
        let mut eps = Vec::new();
        for stops in 1..=a.stops {
            eps.extend(sample_episodes(&world, a.count, stops, rng::derive_indexed_seed(seed, "episodes", stops as u64))?);
        }
        let path = cfg.output(path);
        ensure_parent(&path)?;
        save_episodes(&path, &eps)?;
        println!("world {}x{} blocked {} episodes {}", world.size, world.size, world.blocked.len(), eps.len());
    } else {
        println!("world {}x{} blocked {}", world.size, world.size, world.blocked.len());
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct StopReport {
    stops: usize,
    #[serde(flatten)]
    report: PlanningReport,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TrainPlanReport {
    seed: u64,
    training_episodes: usize,
    vpft_steps: usize,
    vpft_first_loss: Option<f64>,
    vpft_last_loss: Option<f64>,
    grpo_updates: usize,
    /// Mean group reward over the first and last tenth of the updates.
    reward_first: Option<f64>,
    reward_last: Option<f64>,
    final_kl: Option<f64>,
    evaluation: Vec<StopReport>,
}

fn tenth_mean(xs: &[f64], last: bool) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let n = (xs.len() / 10).max(1);
    let part = if last { &xs[xs.len() - n..] } else { &xs[..n] };
    Some(part.iter().sum::<f64>() / n as f64)
}

pub fn train_plan(cfg: &ExperimentConfig, a: &TrainPlanArgs, threads: usize) -> Result<()> {
    let seed = cfg.seed()?;
    let world = GridWorld::load(&a.world)?;
    let episodes = load_episodes(&a.episodes)?;
    for (i, ep) in episodes.iter().enumerate() {
        ep.validate(&world).with_context(|| format!("episode {i}"))?;
    }
    let planner = train_planner_on(world, &episodes, &cfg.plan, seed)?;
    let out = cfg.output(&a.out);
    ensure_parent(&out)?;
    checkpoint::save(&out, POLICY_CHECKPOINT_KIND, seed, &planner.params)?;
    if let Some(path) = &a.telemetry {
        let path = cfg.output(path);
        ensure_parent(&path)?;
        let mut csv = String::from("update,meanRTotal,objective,kl,clippedFraction\n");
        for r in &planner.records {
            writeln!(csv, "{},{},{},{},{}", r.update, r.mean_r_total, r.objective, r.kl, r.clipped_fraction)?;
        }
        std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.trace {
        let path = cfg.output(path);
        ensure_parent(&path)?;
        write_trace_csv(&path, &planner.trace)?;
    }
    let evaluation = if a.eval_episodes > 0 {
        let reports = evaluate_stops(
            &planner.world,
            &planner.table,
            &planner.params,
            cfg.plan.vpft.history,
            a.eval_episodes,
            cfg.plan.max_stops,
            seed,
            threads,
        )?;
        reports.into_iter().enumerate().map(|(i, report)| StopReport { stops: i + 1, report }).collect()
    } else {
        Vec::new()
    };
    let rewards: Vec<f64> = planner.records.iter().map(|r| r.mean_r_total).collect();
    let report = TrainPlanReport {
        seed,
        training_episodes: episodes.len(),
        vpft_steps: planner.vpft_losses.len(),
        vpft_first_loss: planner.vpft_losses.first().copied(),
        vpft_last_loss: planner.vpft_losses.last().copied(),
        grpo_updates: planner.records.len(),
        reward_first: tenth_mean(&rewards, false),
        reward_last: tenth_mean(&rewards, true),
        final_kl: planner.records.last().map(|r| r.kl),
        evaluation,
    };
    for e in &report.evaluation {
        println!("{}-stop SR {:.3} TS {:.2} m", e.stops, e.report.success_rate, e.report.ts_mean);
    }
    if let Some(path) = &a.report {
        write_json(&cfg.output(path), &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PlanOutput {
    nodes: Vec<usize>,
    edges: Vec<usize>,
    waypoints: Vec<[f64; 2]>,
    cost: f64,
}

pub fn plan(cfg: &ExperimentConfig, a: &PlanArgs) -> Result<()> {
    let graph = geoplan_core::canvas::io::read_graph(&a.graph)?;
    let p = &cfg.planner;
    let mut q = PlanQuery::new(a.start, a.goal).with_weights(p.alpha, p.beta);
    q.disabled_edges = a.disable_edges.iter().copied().collect::<HashSet<_>>();
    let path = plan_path(&graph, &q, p.interval)?;
    println!("cost {:.3} nodes {} waypoints {}", path.total_cost, path.nodes.len(), path.waypoints.len());
    write_json(
        &cfg.output(&a.out),
        &PlanOutput { nodes: path.nodes, edges: path.edges, waypoints: path.waypoints, cost: path.total_cost },
    )
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Localization {
    true_cell: Cell,
    localized_cell: Cell,
    correct: bool,
    score: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RoutePlan {
    cost: f64,
    waypoints: Vec<[f64; 2]>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct StepRecord {
    t: usize,
    state: Cell,
    action: Action,
    next_state: Option<Cell>,
    class: TransitionClass,
    r_prog: f64,
    r_geo: f64,
    r_total: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeRecord {
    pub index: usize,
    pub episode: EpisodeSpec,
    pub policy: String,
    pub localization: Option<serde_json::Value>,
    pub plan: Option<serde_json::Value>,
    pub steps: Vec<serde_json::Value>,
    pub visited: Vec<Cell>,
    /// Shortest route from the true start through every stop.
    pub reference: Vec<Cell>,
    pub outcome: Option<EpisodeOutcome>,
    pub failure: Option<String>,
}

fn failure_record(a: &EpisodeArgs, episode: EpisodeSpec, reason: String) -> EpisodeRecord {
    EpisodeRecord {
        index: a.index,
        visited: vec![episode.start],
        episode,
        policy: a.policy.clone(),
        localization: None,
        plan: None,
        steps: Vec::new(),
        reference: Vec::new(),
        outcome: None,
        failure: Some(reason),
    }
}

/// Shortest-path moves towards each stop in turn.
fn oracle_rollout(world: &GridWorld, ep: &EpisodeSpec, g: &Guidance) -> Result<Rollout> {
    let mut visited = vec![ep.start];
    let mut steps = Vec::new();
    let mut k = 0;
    while k < g.subgoals.len() && steps.len() < ep.max_steps {
        let cur = *visited.last().expect("non-empty");
        if cur == g.subgoals[k] {
            k += 1;
            continue;
        }
        let next = g.next_waypoint(world, cur, k)?;
        let action = world.neighbors(cur).find(|&(_, n)| n == next).map(|(a, _)| a).expect("waypoint is adjacent");
        steps.push(RolloutStep {
            state: cur,
            action_logits: [0.0; ACTIONS],
            sampled_action: action,
            next_state: step(world, cur, action),
            log_prob: 0.0,
            subgoal_index: k,
        });
        visited.push(next);
    }
    while k < g.subgoals.len() && *visited.last().expect("non-empty") == g.subgoals[k] {
        k += 1;
    }
    Ok(Rollout { steps, visited, subgoals_reached: k, invalid: false, completed: k == g.subgoals.len() })
}

pub fn episode(cfg: &ExperimentConfig, a: &EpisodeArgs) -> Result<()> {
    let seed = cfg.seed()?;
    let world = GridWorld::load(&a.world)?;
    let episodes = load_episodes(&a.episode)?;
    let Some(ep) = episodes.get(a.index).cloned() else {
        bail!("{}: no episode {} (file has {})", a.episode.display(), a.index, episodes.len());
    };
    let out = cfg.output(&a.out);
    if let Err(e) = ep.validate(&world) {
        println!("failure: {e}");
        return write_json(&out, &failure_record(a, ep, e.to_string()));
    }
    let (params, table) = if a.policy == "oracle" {
        (None, EmbeddingTable::build(&world, &ViewEncoder::new(cfg.plan.view_dim, seed)?)?)
    } else {
        let (p, ckpt_seed): (PolicyParams, u64) = checkpoint::load(Path::new(&a.policy), POLICY_CHECKPOINT_KIND)?;
        if p.cells() != world.cell_count() {
            bail!("policy covers {} cells, world has {}", p.cells(), world.cell_count());
        }
        let table = EmbeddingTable::build(&world, &ViewEncoder::new(p.cond_dim(), ckpt_seed)?)?;
        (Some(p), table)
    };

    // localization: ground view at the start against every satellite tile
    let entries = world
        .open_cells()
        .into_iter()
        .map(|c| {
            let [x, y] = world.cell_center(c);
            Ok(IndexEntry { tile_id: world.index(c) as u64, x, y, embedding: table.satellite(&world, c)?.clone() })
        })
        .collect::<geoplan_core::Result<Vec<_>>>()?;
    let index = RetrievalIndex::new(entries)?;
    let ranking = retrieve(table.ground(&world, ep.start)?, &index, 1)?;
    let localized = world.cell_at(ranking.tile_ids[0] as usize);
    let localization =
        Localization { true_cell: ep.start, localized_cell: localized, correct: localized == ep.start, score: ranking.scores[0] };

    let subgoals: Vec<Cell> = ep.subgoals().collect();
    let route = grid_route(&world, localized, &subgoals, cfg.planner.interval)?;
    let plan = RoutePlan { cost: route.total_cost, waypoints: route.waypoints };

    let guidance = Guidance::for_episode(&world, &ep)?;
    let rollout = match &params {
        None => oracle_rollout(&world, &ep, &guidance)?,
        Some(p) => run_episode(&world, &ep, &table, p, cfg.plan.vpft.history, a.sampling, seed)?,
    };
    let beta = cfg.plan.grpo.beta_geo;
    let mut steps = Vec::with_capacity(rollout.steps.len());
    for (t, s) in rollout.steps.iter().enumerate() {
        let class = parse_transition(&world, s.state, s.next_state, &guidance.progress[s.subgoal_index]);
        let seen = s.next_state.unwrap_or(s.state);
        let geo = r_geo(table.ground(&world, seen)?, guidance.cond(&world, &table, s.state, s.subgoal_index)?)?;
        let rec = StepRecord {
            t,
            state: s.state,
            action: s.sampled_action,
            next_state: s.next_state,
            class,
            r_prog: r_prog(class),
            r_geo: geo,
            r_total: r_prog(class) + beta * geo,
        };
        steps.push(serde_json::to_value(rec)?);
    }
    let outcome = score_rollout(&world, &ep, &rollout, cfg.metrics.densify)?;
    println!(
        "success {} steps {} ts {:.2} m localized {}",
        outcome.success,
        outcome.steps,
        outcome.trajectory_similarity,
        if localization.correct { "correctly" } else { "incorrectly" }
    );
    let record = EpisodeRecord {
        index: a.index,
        reference: reference_route(&world, &ep)?,
        episode: ep,
        policy: a.policy.clone(),
        localization: Some(serde_json::to_value(localization)?),
        plan: Some(serde_json::to_value(plan)?),
        steps,
        visited: rollout.visited,
        outcome: Some(outcome),
        failure: None,
    };
    write_json(&out, &record)
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RetrievalRuns {
    candidates: usize,
    results: Vec<RankedResult>,
    /// Top-1 footprint overlap per query id.
    #[serde(default)]
    overlaps: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RunsFile {
    #[serde(default)]
    retrieval: Option<RetrievalRuns>,
    #[serde(default)]
    trajectories: Vec<Vec<Cell>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PredFile {
    Runs(RunsFile),
    Episodes(Vec<EpisodeRecord>),
}

#[derive(Deserialize)]
struct RefsFile {
    trajectories: Vec<Vec<Cell>>,
    goals: Vec<Cell>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RefFile {
    Refs(RefsFile),
    Episodes(Vec<EpisodeRecord>),
}

#[derive(Serialize, Default)]
struct EvalReport {
    queries: usize,
    episodes: usize,
    top1: Option<f64>,
    top5: Option<f64>,
    top10: Option<f64>,
    top1pct: Option<f64>,
    ap: Option<f64>,
    #[serde(rename = "hitRate")]
    hit_rate: Option<f64>,
    ts_mean: Option<f64>,
    ts_std: Option<f64>,
    sr: Option<f64>,
    vcs_mean: Option<f64>,
    vcs_std: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

pub fn evaluate(cfg: &ExperimentConfig, a: &EvaluateArgs) -> Result<()> {
    let seed = cfg.seed()?;
    let world = GridWorld::load(&a.world)?;
    let m = &cfg.metrics;
    let (retrieval, generated) = match read_json::<PredFile>(&a.pred)? {
        PredFile::Runs(r) => (r.retrieval, r.trajectories),
        PredFile::Episodes(e) => (None, e.into_iter().map(|r| r.visited).collect()),
    };
    let (references, goals) = match read_json::<RefFile>(&a.reference)? {
        RefFile::Refs(r) => (r.trajectories, r.goals),
        RefFile::Episodes(e) => e.into_iter().map(|r| (r.reference, r.episode.goal)).unzip(),
    };
    let mut report = EvalReport::default();
    if let Some(r) = &retrieval {
        report.queries = r.results.len();
        report.top1 = Some(topk_recall(&r.results, 1)?);
        report.top5 = Some(topk_recall(&r.results, 5)?);
        report.top10 = Some(topk_recall(&r.results, 10)?);
        report.top1pct = Some(top_one_percent_recall(&r.results, r.candidates)?);
        report.ap = Some(average_precision(&r.results).mean_ap);
        if !r.overlaps.is_empty() {
            let overlaps = r
                .overlaps
                .iter()
                .map(|(k, v)| Ok((k.parse::<u64>().with_context(|| format!("overlap key `{k}` is not a query id"))?, *v)))
                .collect::<Result<HashMap<u64, f64>>>()?;
            report.hit_rate = Some(hit_rate(&r.results, &overlaps, m.hit_threshold)?);
        }
    }
    if !generated.is_empty() {
        if generated.len() != references.len() || generated.len() != goals.len() {
            bail!("{} predicted trajectories but {} references and {} goals", generated.len(), references.len(), goals.len());
        }
        if let Some(i) = generated.iter().chain(&references).position(|t| t.is_empty()) {
            bail!("trajectory {i} is empty");
        }
        let centers = |cells: &[Cell]| cells.iter().map(|&c| world.cell_center(c)).collect::<Vec<_>>();
        let densify = |pts: Vec<[f64; 2]>| -> Result<Vec<[f64; 2]>> {
            Ok(if m.densify > 0.0 { geoplan_core::metrics::densify(&pts, m.densify)? } else { pts })
        };
        let table = EmbeddingTable::build(&world, &ViewEncoder::new(cfg.plan.view_dim, seed)?)?;
        let mut ts = Vec::new();
        let mut vcs = Vec::new();
        let mut pairs = Vec::new();
        for ((g, r), goal) in generated.iter().zip(&references).zip(&goals) {
            ts.push(trajectory_similarity(&densify(centers(g))?, &densify(centers(r))?)?);
            if g.iter().all(|&c| world.is_open(c)) {
                vcs.push(grid_visual_consistency(&world, &table, g, m.vcs_waypoints)?);
            }
            pairs.push(TrajectoryPair { generated: centers(g), reference: centers(r), goal: world.cell_center(*goal) });
        }
        let (tm, tsd) = mean_std(&ts);
        report.episodes = pairs.len();
        report.ts_mean = Some(tm);
        report.ts_std = Some(tsd);
        report.sr = Some(success_rate(&pairs, m.success_radius, &world)?);
        if !vcs.is_empty() {
            let (vm, vsd) = mean_std(&vcs);
            report.vcs_mean = Some(vm);
            report.vcs_std = Some(vsd);
        }
    }
    write_json(&cfg.output(&a.report), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

