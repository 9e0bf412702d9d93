//! Group-relative policy optimization with a clipped surrogate and an exact
//! KL anchor to a reference policy.
//!
//! Each update takes one state, samples a group of single-step candidates
//! from the current policy, scores them with the geo-consistent reward and
//! ascends the objective once. States come from stochastic rollouts of the
//! current policy on randomly chosen training episodes.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nav::{step, Action, Cell, EmbeddingTable, EpisodeSpec, GridWorld};
use crate::policy::{
    log_softmax, policy_backward, policy_forward, policy_forward_traced, sample_rollout, softmax, Guidance, PolicyParams,
    Sampling, ACTIONS,
};
use crate::reward::{parse_transition, r_geo, RewardBundle, TraceRow};
use crate::rng;

pub const DIVERGENCE_LOGIT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip: f64,
    pub kl_weight: f64,
    pub beta_geo: f64,
    pub learning_rate: f64,
    pub updates: usize,
    pub history: usize,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 16,
            clip: 0.2,
            kl_weight: 0.01,
            beta_geo: crate::reward::DEFAULT_BETA_GEO,
            learning_rate: 0.01,
            updates: 50_000,
            history: crate::policy::DEFAULT_HISTORY,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::Parameter("group size must be at least 2".into()));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::Parameter(format!("clip must be in (0, 1), got {}", self.clip)));
        }
        if !(self.kl_weight >= 0.0) || !(self.learning_rate >= 0.0) || !(self.beta_geo >= 0.0) {
            return Err(Error::Parameter("kl weight, learning rate and beta must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UpdateRecord {
    pub update: usize,
    pub mean_r_total: f64,
    pub objective: f64,
    pub kl: f64,
    pub clipped_fraction: f64,
}

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite {what}")))
    }
}

fn check_group(old: &[f64], new: &[f64], adv: &[f64]) -> Result<()> {
    if old.len() != new.len() || old.len() != adv.len() || old.is_empty() {
        return Err(Error::Dimension("log-prob and advantage arrays must share a non-zero length".into()));
    }
    check_finite(old, "old log-prob")?;
    check_finite(new, "new log-prob")?;
    check_finite(adv, "advantage")
}

/// `(1/G) sum_k min(rho_k A_k, clip(rho_k, 1-eps, 1+eps) A_k) - gamma * kl`.
pub fn grpo_objective(old: &[f64], new: &[f64], adv: &[f64], kl: f64, cfg: &GrpoConfig) -> Result<f64> {
    check_group(old, new, adv)?;
    let g = old.len() as f64;
    let surrogate: f64 = old
        .iter()
        .zip(new)
        .zip(adv)
        .map(|((o, n), a)| {
            let rho = (n - o).exp();
            (rho * a).min(rho.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a)
        })
        .sum();
    Ok(surrogate / g - cfg.kl_weight * kl)
}

/// Gradient of the surrogate part w.r.t. each new log-prob; zero where the
/// clipped branch is the active minimum.
pub fn grpo_objective_grad(old: &[f64], new: &[f64], adv: &[f64], cfg: &GrpoConfig) -> Result<Vec<f64>> {
    check_group(old, new, adv)?;
    let g = old.len() as f64;
    Ok(old
        .iter()
        .zip(new)
        .zip(adv)
        .map(|((o, n), &a)| {
            let rho = (n - o).exp();
            if is_clipped(rho, a, cfg.clip) { 0.0 } else { rho * a / g }
        })
        .collect())
}

/// Whether the clipped branch strictly wins the minimum.
pub fn is_clipped(rho: f64, adv: f64, clip: f64) -> bool {
    (adv > 0.0 && rho > 1.0 + clip) || (adv < 0.0 && rho < 1.0 - clip)
}

/// `KL(p || q)` of two categorical distributions given as logits.
pub fn categorical_kl(p_logits: &[f64; ACTIONS], q_logits: &[f64; ACTIONS]) -> f64 {
    let (lp, lq) = (log_softmax(p_logits), log_softmax(q_logits));
    lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum::<f64>().max(0.0)
}

/// `d KL(p || q) / d p_logits = p * (log p - log q - KL)`.
pub fn categorical_kl_grad(p_logits: &[f64; ACTIONS], q_logits: &[f64; ACTIONS]) -> [f64; ACTIONS] {
    let (lp, lq) = (log_softmax(p_logits), log_softmax(q_logits));
    let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
    std::array::from_fn(|i| lp[i].exp() * (lp[i] - lq[i] - kl))
}

/// A policy input: history of state-table indices and conditioning vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub history: Vec<usize>,
    pub cond: Vec<f64>,
}

/// Mean exact KL between the two policies over the given states.
pub fn kl_estimate(params: &PolicyParams, reference: &PolicyParams, states: &[PolicyState]) -> Result<f64> {
    if states.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for s in states {
        let p = policy_forward(&s.history, &s.cond, params)?;
        let q = policy_forward(&s.history, &s.cond, reference)?;
        sum += categorical_kl(&p, &q);
    }
    Ok(sum / states.len() as f64)
}

/// Everything one group update needs about a state.
#[derive(Debug, Clone)]
pub struct GroupState<'a> {
    pub cell: Cell,
    pub input: PolicyState,
    pub subgoal: usize,
    pub guidance: &'a Guidance,
}

#[derive(Debug, Clone)]
pub struct GroupOutcome {
    pub record: UpdateRecord,
    pub bundle: RewardBundle,
    pub actions: Vec<Action>,
}

/// Samples a candidate group at `state`, scores it and applies one ascent
/// step to `params`.
pub fn group_update(
    world: &GridWorld,
    table: &EmbeddingTable,
    params: &mut PolicyParams,
    reference: &PolicyParams,
    state: &GroupState<'_>,
    cfg: &GrpoConfig,
    update: usize,
    rng: &mut rng::Rng,
) -> Result<GroupOutcome> {
    let PolicyState { history, cond } = &state.input;
    let (logits, trace) = policy_forward_traced(history, cond, params)?;
    let mean_abs = logits.iter().map(|v| v.abs()).sum::<f64>() / ACTIONS as f64;
    if !(mean_abs <= DIVERGENCE_LOGIT) {
        return Err(Error::Divergence(format!("mean |logit| {mean_abs:.1} at update {update}")));
    }
    let old_lp = log_softmax(&logits);
    let dist = WeightedIndex::new(softmax(&logits)).map_err(|e| Error::Numeric(e.to_string()))?;
    let actions: Vec<Action> =
        (0..cfg.group_size).map(|_| Action::from_index(dist.sample(rng)).expect("index below ACTIONS")).collect();

    let progress = &state.guidance.progress[state.subgoal];
    let z_next = state.guidance.cond(world, table, state.cell, state.subgoal)?;
    let mut terms = Vec::with_capacity(actions.len());
    for &a in &actions {
        let to = step(world, state.cell, a);
        let class = parse_transition(world, state.cell, to, progress);
        let seen = to.unwrap_or(state.cell);
        terms.push((class, r_geo(table.ground(world, seen)?, z_next)?));
    }
    let bundle = RewardBundle::score(&terms, cfg.beta_geo)?;
    let adv = bundle.advantages();

    // the new policy equals the old one at update time, so rho = 1
    let old: Vec<f64> = actions.iter().map(|a| old_lp[a.index()]).collect();
    let new = old.clone();
    let q_logits = policy_forward(history, cond, reference)?;
    let kl = categorical_kl(&logits, &q_logits);
    let objective = grpo_objective(&old, &new, &adv, kl, cfg)?;
    let d_new = grpo_objective_grad(&old, &new, &adv, cfg)?;
    let p = softmax(&logits);
    let kl_grad = categorical_kl_grad(&logits, &q_logits);
    // ascent direction w.r.t. logits; descent form for the backward pass
    let mut d_logits = [0.0; ACTIONS];
    for (a, w) in actions.iter().zip(&d_new) {
        for i in 0..ACTIONS {
            d_logits[i] -= w * (if i == a.index() { 1.0 } else { 0.0 } - p[i]);
        }
    }
    for i in 0..ACTIONS {
        d_logits[i] += cfg.kl_weight * kl_grad[i];
    }
    if cfg.learning_rate > 0.0 {
        let mut grad = params.zeros_like();
        policy_backward(params, &trace, &d_logits, &mut grad);
        params.add_scaled(&grad, -cfg.learning_rate);
    }
    let clipped = old.iter().zip(&new).zip(&adv).filter(|((o, n), a)| is_clipped((*n - *o).exp(), **a, cfg.clip)).count();
    Ok(GroupOutcome {
        record: UpdateRecord {
            update,
            mean_r_total: bundle.mean_total(),
            objective,
            kl,
            clipped_fraction: clipped as f64 / actions.len() as f64,
        },
        bundle,
        actions,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: PolicyParams,
    pub records: Vec<UpdateRecord>,
    pub trace: Vec<TraceRow>,
}

/// GRPO stage starting from `init`, which also serves as the fixed reference.
pub fn train(
    world: &GridWorld,
    episodes: &[EpisodeSpec],
    init: &PolicyParams,
    table: &EmbeddingTable,
    cfg: &GrpoConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if episodes.is_empty() {
        return Err(Error::Parameter("GRPO needs training episodes".into()));
    }
    let guidance: Vec<Guidance> = episodes.iter().map(|e| Guidance::for_episode(world, e)).collect::<Result<_>>()?;
    let reference = init.clone();
    let mut params = init.clone();
    let mut records = Vec::with_capacity(cfg.updates);
    let mut trace = Vec::new();
    let mut pick = rng::stream(cfg.seed, "grpo");
    let mut groups = rng::stream(cfg.seed, "grpo-groups");
    let mut pass = 0u64;
    while records.len() < cfg.updates {
        let e = pick.random_range(0..episodes.len());
        let ep = &episodes[e];
        let g = &guidance[e];
        let mut roll_rng = rng::indexed_stream(cfg.seed, "grpo-rollout", pass);
        pass += 1;
        let roll = sample_rollout(world, ep, g, table, &params, &mut roll_rng, ep.max_steps, cfg.history, Sampling::Stochastic)?;
        for (t, s) in roll.steps.iter().enumerate() {
            if records.len() >= cfg.updates {
                break;
            }
            let hist = crate::policy::history_indices(world, &roll.visited[..=t], cfg.history);
            let cond = g.cond(world, table, s.state, s.subgoal_index)?.as_slice().to_vec();
            let state = GroupState { cell: s.state, input: PolicyState { history: hist, cond }, subgoal: s.subgoal_index, guidance: g };
            let out = group_update(world, table, &mut params, &reference, &state, cfg, records.len(), &mut groups)?;
            if trace.len() < TRACE_LIMIT {
                for (k, c) in out.bundle.candidates.iter().enumerate() {
                    trace.push(TraceRow { episode: e, step: t, k, reward: c.clone() });
                }
            }
            records.push(out.record);
        }
    }
    Ok(TrainOutput { params, records, trace })
}

/// Reward-trace rows kept from the start of training.
pub const TRACE_LIMIT: usize = 16 * 1000;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_examples() {
        let cfg = GrpoConfig::default();
        let lp = [-1.0, -2.0, -0.5];
        let a = [0.5, -1.0, 2.0];
        let o = grpo_objective(&lp, &lp, &a, 0.3, &cfg).unwrap();
        assert!((o - ((0.5 - 1.0 + 2.0) / 3.0 - 0.01 * 0.3)).abs() < 1e-15);
        assert!((grpo_objective(&lp, &[-0.2, -3.0, -0.1], &[0.0; 3], 0.3, &cfg).unwrap() + 0.003).abs() < 1e-15);
        assert!(matches!(grpo_objective(&[f64::NAN], &[0.0], &[1.0], 0.0, &cfg), Err(Error::Numeric(_))));
    }

    #[test]
    fn kl_cases() {
        let z = [0.0; ACTIONS];
        assert_eq!(categorical_kl(&z, &z), 0.0);
        let sat = [200.0, 0.0, 0.0, 0.0, 0.0];
        assert!((categorical_kl(&sat, &z) - 5f64.ln()).abs() < 1e-9);
    }
}
