//! Canonical road prototypes and the dense similarity map.

use serde::{Deserialize, Serialize};

use super::encoder::PatchEncoder;
use super::raster::{FeatureMap, Grid};
use super::render::{self, RoadStyle, Template};
use crate::error::{Error, Result};
use crate::rng;

const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub prototypes: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl PrototypeSet {
    /// Normalizes every vector; fails on empty sets, ragged dims or zero vectors.
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Parameter("prototype set must not be empty".into()));
        }
        if labels.len() != vectors.len() {
            return Err(Error::Dimension("one label per prototype required".into()));
        }
        let dim = vectors[0].len();
        let mut prototypes = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.len() != dim {
                return Err(Error::Dimension(format!("prototype dims {} and {dim} differ", v.len())));
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::DegenerateEmbedding("prototype has zero norm".into()));
            }
            prototypes.push(v.into_iter().map(|x| x / n).collect());
        }
        Ok(Self { prototypes, labels })
    }

    pub fn dim(&self) -> usize {
        self.prototypes[0].len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.prototypes.is_empty() || self.labels.len() != self.prototypes.len() {
            return Err(Error::Parameter("prototype set must be non-empty and labelled".into()));
        }
        for p in &self.prototypes {
            let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if p.len() != self.dim() || (n - 1.0).abs() > UNIT_TOL {
                return Err(Error::Parameter("prototypes must be unit-norm with equal dims".into()));
            }
        }
        Ok(())
    }
}

/// Support-set recipe for [`build_prototypes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeConfig {
    /// Rendered samples per template (random rotation and sub-patch jitter).
    pub samples_per_template: usize,
    /// Road width in patches.
    pub road_width_patches: f64,
    /// Minimum road coverage for a patch to count as a road sample.
    pub min_coverage: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        Self { samples_per_template: 8, road_width_patches: 1.5, min_coverage: 0.5, noise: 0.05, seed: 0 }
    }
}

/// One prototype per template: the normalized mean of encoded road patches
/// drawn from procedurally rendered support tiles.
pub fn build_prototypes(encoder: &PatchEncoder, cfg: &PrototypeConfig) -> Result<PrototypeSet> {
    if encoder.channels != 1 {
        return Err(Error::Parameter("road templates are single-channel".into()));
    }
    let p = encoder.patch_size;
    let size = 5 * p;
    let road_width = cfg.road_width_patches * p as f64;
    let style = RoadStyle { noise: cfg.noise, ..RoadStyle::default() };
    let mut rng = rng::stream(cfg.seed, "prototypes");
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for template in Template::ALL {
        let mut sum = vec![0.0; encoder.dim];
        let mut used = 0usize;
        for sample in 0..cfg.samples_per_template.max(1) {
            let segs = template.segments(size, sample as u32, render::jitter(&mut rng, p as f64 / 2.0));
            let tile = render::render_roads(size, size, &segs, road_width, style, Some(&mut rng));
            let clean = render::render_roads(size, size, &segs, road_width, RoadStyle { noise: 0.0, ..style }, None);
            for tr in 0..5 {
                for tc in 0..5 {
                    let cover = encoder
                        .extract_patch(&clean, tc, tr)
                        .iter()
                        .filter(|v| **v == style.road)
                        .count() as f64
                        / (p * p) as f64;
                    if cover >= cfg.min_coverage {
                        let tok = encoder.encode_patch(&encoder.extract_patch(&tile, tc, tr));
                        sum.iter_mut().zip(&tok).for_each(|(s, t)| *s += t);
                        used += 1;
                    }
                }
            }
        }
        if used == 0 {
            return Err(Error::Degenerate(format!("template {} produced no road patches", template.label())));
        }
        vectors.push(sum);
        labels.push(template.label().to_string());
    }
    PrototypeSet::new(vectors, labels)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Per-token maximum cosine similarity over the prototypes.
pub fn similarity_map(fm: &FeatureMap, protos: &PrototypeSet) -> Result<Grid> {
    if fm.dim != protos.dim() {
        return Err(Error::Dimension(format!(
            "feature dim {} != prototype dim {}",
            fm.dim,
            protos.dim()
        )));
    }
    let values = fm
        .tokens()
        .map(|t| {
            protos
                .prototypes
                .iter()
                .map(|p| cosine(t, p))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Grid::new(fm.grid_width, fm.grid_height, values)
}
