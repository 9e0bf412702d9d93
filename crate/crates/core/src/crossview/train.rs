//! Synthetic paired views and SGD alignment of two MixModules.

use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::embedding::Embedding;
use super::infonce::{info_nce, Denominator, DEFAULT_TEMPERATURE};
use super::mix::{mix_backward, mix_forward, mix_forward_traced, MixConfig, MixModuleParams};
use super::retrieval::{rank_of, IndexEntry, RetrievalIndex};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// A ground/satellite view of one location, as token blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub ground: Vec<Vec<f64>>,
    pub satellite: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SyntheticViewConfig {
    pub pairs: usize,
    pub tokens: usize,
    pub token_len: usize,
    pub latent_dim: usize,
    pub noise: f64,
}

impl Default for SyntheticViewConfig {
    fn default() -> Self {
        Self { pairs: 1000, tokens: 4, token_len: 8, latent_dim: 16, noise: 0.1 }
    }
}

fn gaussian_vec(len: usize, rng: &mut Rng) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Each location has a latent vector; each view is a fixed view-specific
/// random linear map of it plus independent Gaussian noise.
pub fn synthetic_views(cfg: &SyntheticViewConfig, seed: u64) -> Result<Vec<ViewPair>> {
    if cfg.tokens == 0 || cfg.token_len == 0 || cfg.latent_dim == 0 {
        return Err(Error::Parameter("synthetic views need positive sizes".into()));
    }
    let flat = cfg.tokens * cfg.token_len;
    let mut maps_rng = rng::stream(seed, "view-maps");
    let scale = 1.0 / (cfg.latent_dim as f64).sqrt();
    let mut view_map = || -> Vec<Vec<f64>> {
        (0..flat).map(|_| gaussian_vec(cfg.latent_dim, &mut maps_rng).into_iter().map(|v| v * scale).collect()).collect()
    };
    let (mg, ms) = (view_map(), view_map());
    let mut data_rng = rng::stream(seed, "view-data");
    let render = |m: &[Vec<f64>], z: &[f64], rng: &mut Rng| -> Vec<Vec<f64>> {
        let v: Vec<f64> = m
            .iter()
            .map(|row| {
                let e: f64 = StandardNormal.sample(rng);
                row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + cfg.noise * e
            })
            .collect();
        v.chunks(cfg.token_len).map(<[f64]>::to_vec).collect()
    };
    Ok((0..cfg.pairs)
        .map(|_| {
            let z = gaussian_vec(cfg.latent_dim, &mut data_rng);
            let ground = render(&mg, &z, &mut data_rng);
            let satellite = render(&ms, &z, &mut data_rng);
            ViewPair { ground, satellite }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AlignConfig {
    pub out_dim: usize,
    pub stages: usize,
    /// Hidden width; 0 means four times the token length.
    pub hidden: usize,
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub denominator: Denominator,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            out_dim: 32,
            stages: 2,
            hidden: 0,
            steps: 2000,
            batch: 64,
            learning_rate: 0.05,
            temperature: DEFAULT_TEMPERATURE,
            denominator: Denominator::CrossModal,
        }
    }
}

/// Ground and satellite encoders trained jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignModel {
    pub ground: MixModuleParams,
    pub satellite: MixModuleParams,
}

impl crate::checkpoint::TensorSet for AlignModel {
    fn tensors(&self) -> Vec<crate::checkpoint::NamedTensor> {
        let tag = |prefix: &str, p: &MixModuleParams| {
            p.tensors().into_iter().map(|mut t| {
                t.name = format!("{prefix}.{}", t.name);
                t
            }).collect::<Vec<_>>()
        };
        let mut out = tag("ground", &self.ground);
        out.extend(tag("satellite", &self.satellite));
        out
    }

    fn from_tensors(tensors: &[crate::checkpoint::NamedTensor]) -> Result<Self> {
        let part = |prefix: &str| -> Result<MixModuleParams> {
            let p = format!("{prefix}.");
            let ts: Vec<_> = tensors
                .iter()
                .filter_map(|t| t.name.strip_prefix(&p).map(|n| crate::checkpoint::NamedTensor { name: n.to_string(), ..t.clone() }))
                .collect();
            MixModuleParams::from_tensors(&ts)
        };
        Ok(Self { ground: part("ground")?, satellite: part("satellite")? })
    }
}

impl AlignModel {
    pub fn embed_ground(&self, tokens: &[Vec<f64>]) -> Result<Embedding> {
        mix_forward(tokens, &self.ground)
    }

    pub fn embed_satellite(&self, tokens: &[Vec<f64>]) -> Result<Embedding> {
        mix_forward(tokens, &self.satellite)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AlignReport {
    pub losses: Vec<f64>,
    pub final_loss: f64,
}

pub fn init_model(tokens: usize, token_len: usize, cfg: &AlignConfig, seed: u64) -> AlignModel {
    let hidden = if cfg.hidden == 0 { 4 * token_len } else { cfg.hidden };
    let mc = MixConfig { tokens, token_len, stages: cfg.stages, hidden, out_dim: cfg.out_dim };
    let mut rng = rng::stream(seed, "align-init");
    let ground = MixModuleParams::random(mc, &mut rng);
    let satellite = MixModuleParams::random(mc, &mut rng);
    AlignModel { ground, satellite }
}

/// One SGD step on the given pairs; returns the batch loss before the update.
pub fn sgd_step(model: &mut AlignModel, pairs: &[&ViewPair], cfg: &AlignConfig) -> Result<f64> {
    let mut gz = Vec::with_capacity(pairs.len());
    let mut sz = Vec::with_capacity(pairs.len());
    let mut gt = Vec::with_capacity(pairs.len());
    let mut st = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (e, t) = mix_forward_traced(&p.ground, &model.ground)?;
        gz.push(e);
        gt.push(t);
        let (e, t) = mix_forward_traced(&p.satellite, &model.satellite)?;
        sz.push(e);
        st.push(t);
    }
    let (loss, grad) = info_nce(&gz, &sz, cfg.temperature, cfg.denominator)?;
    let mut dg = model.ground.zeros_like();
    let mut ds = model.satellite.zeros_like();
    for i in 0..pairs.len() {
        mix_backward(&model.ground, &gt[i], &grad.ground[i], &mut dg);
        mix_backward(&model.satellite, &st[i], &grad.satellite[i], &mut ds);
    }
    model.ground.add_scaled(&dg, -cfg.learning_rate);
    model.satellite.add_scaled(&ds, -cfg.learning_rate);
    model.ground.validate().map_err(|_| Error::Divergence("non-finite ground encoder".into()))?;
    model.satellite.validate().map_err(|_| Error::Divergence("non-finite satellite encoder".into()))?;
    Ok(loss)
}

/// Minibatch SGD over `train`; batches are drawn without replacement per step.
pub fn train_alignment(model: &mut AlignModel, train: &[ViewPair], cfg: &AlignConfig, seed: u64) -> Result<AlignReport> {
    if train.is_empty() || cfg.batch == 0 {
        return Err(Error::Parameter("alignment training needs data and a positive batch".into()));
    }
    let mut rng = rng::stream(seed, "align-batches");
    let b = cfg.batch.min(train.len());
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let idx = sample(&mut rng, train.len(), b);
        let batch: Vec<&ViewPair> = idx.iter().map(|i| &train[i]).collect();
        losses.push(sgd_step(model, &batch, cfg)?);
    }
    let final_loss = losses.last().copied().unwrap_or(f64::NAN);
    Ok(AlignReport { losses, final_loss })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecallReport {
    pub queries: usize,
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
}

/// Satellite index over `pairs` (tileId = position in the slice).
pub fn build_index(model: &AlignModel, pairs: &[ViewPair]) -> Result<RetrievalIndex> {
    let entries = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(IndexEntry { tile_id: i as u64, x: i as f64, y: 0.0, embedding: model.embed_satellite(&p.satellite)? })
        })
        .collect::<Result<Vec<_>>>()?;
    RetrievalIndex::new(entries)
}

/// Ground-to-satellite recall where query `i` should retrieve tile `i`.
pub fn evaluate_recall(model: &AlignModel, pairs: &[ViewPair]) -> Result<RecallReport> {
    let index = build_index(model, pairs)?;
    let mut hits = [0usize; 3];
    for (i, p) in pairs.iter().enumerate() {
        let r = rank_of(&model.embed_ground(&p.ground)?, &index, i as u64)?;
        for (h, k) in hits.iter_mut().zip([1, 5, 10]) {
            if r < k {
                *h += 1;
            }
        }
    }
    let n = pairs.len().max(1) as f64;
    Ok(RecallReport { queries: pairs.len(), top1: hits[0] as f64 / n, top5: hits[1] as f64 / n, top10: hits[2] as f64 / n })
}
