//! MixModule: residual token MLPs followed by a linear projection and
//! L2-normalization.
//!
//! Every stage applies `x <- W2 relu(W1 x) + x` to each token (weights shared
//! across tokens within a stage); stages run in sequence. The final tokens are
//! flattened row by row and projected to the output dimension.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::embedding::Embedding;
use crate::checkpoint::{NamedTensor, TensorSet};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MixStage {
    /// `hidden x token_len`
    pub w1: DMatrix<f64>,
    /// `token_len x hidden`
    pub w2: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixModuleParams {
    pub tokens: usize,
    pub token_len: usize,
    pub stages: Vec<MixStage>,
    /// `out_dim x (tokens * token_len)`
    pub projection: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixConfig {
    pub tokens: usize,
    pub token_len: usize,
    pub stages: usize,
    pub hidden: usize,
    pub out_dim: usize,
}

impl MixConfig {
    /// Two stages, hidden width four times the token length.
    pub fn with_defaults(tokens: usize, token_len: usize, out_dim: usize) -> Self {
        Self { tokens, token_len, stages: 2, hidden: 4 * token_len, out_dim }
    }
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}

impl MixModuleParams {
    pub fn random(cfg: MixConfig, rng: &mut Rng) -> Self {
        let n = cfg.token_len;
        let stages = (0..cfg.stages)
            .map(|_| MixStage {
                w1: gaussian(cfg.hidden, n, (2.0 / n as f64).sqrt(), rng),
                w2: gaussian(n, cfg.hidden, 0.1 / (cfg.hidden as f64).sqrt(), rng),
            })
            .collect();
        let flat = cfg.tokens * n;
        let projection = gaussian(cfg.out_dim, flat, 1.0 / (flat as f64).sqrt(), rng);
        Self { tokens: cfg.tokens, token_len: n, stages, projection }
    }

    pub fn out_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tokens: self.tokens,
            token_len: self.token_len,
            stages: self
                .stages
                .iter()
                .map(|s| MixStage { w1: DMatrix::zeros(s.w1.nrows(), s.w1.ncols()), w2: DMatrix::zeros(s.w2.nrows(), s.w2.ncols()) })
                .collect(),
            projection: DMatrix::zeros(self.projection.nrows(), self.projection.ncols()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.token_len;
        for (i, s) in self.stages.iter().enumerate() {
            if s.w1.ncols() != n || s.w2.nrows() != n || s.w2.ncols() != s.w1.nrows() {
                return Err(Error::Dimension(format!("stage {i} shapes do not form a residual block")));
            }
        }
        if self.projection.ncols() != self.tokens * n {
            return Err(Error::Dimension("projection width != tokens * token_len".into()));
        }
        let finite = self.stages.iter().all(|s| s.w1.iter().chain(s.w2.iter()).all(|v| v.is_finite()))
            && self.projection.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric("non-finite MixModule parameter".into()));
        }
        Ok(())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (s, o) in self.stages.iter_mut().zip(&other.stages) {
            s.w1 += &o.w1 * scale;
            s.w2 += &o.w2 * scale;
        }
        self.projection += &other.projection * scale;
    }
}

impl TensorSet for MixModuleParams {
    fn tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            out.push(NamedTensor::from_matrix(format!("stage{i}.w1"), &s.w1));
            out.push(NamedTensor::from_matrix(format!("stage{i}.w2"), &s.w2));
        }
        out.push(NamedTensor::from_matrix("projection", &self.projection));
        out
    }

    fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let (proj, rest) = tensors
            .split_last()
            .filter(|(p, _)| p.name == "projection")
            .ok_or_else(|| Error::Data("MixModule checkpoint lacks a projection".into()))?;
        if rest.len() % 2 != 0 {
            return Err(Error::Data("MixModule stages need w1 and w2".into()));
        }
        let stages: Vec<MixStage> =
            rest.chunks(2).map(|c| MixStage { w1: c[0].to_matrix(), w2: c[1].to_matrix() }).collect();
        let token_len = stages.first().map(|s| s.w1.ncols()).unwrap_or(proj.cols);
        let params = Self { tokens: proj.cols / token_len.max(1), token_len, stages, projection: proj.to_matrix() };
        params.validate()?;
        Ok(params)
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MixTrace {
    /// Tokens entering each stage (and the final tokens at the end).
    inputs: Vec<Vec<DVector<f64>>>,
    /// Pre-activation `W1 x` per stage and token.
    pre: Vec<Vec<DVector<f64>>>,
    /// Unnormalized projection output.
    raw: DVector<f64>,
}

fn check_tokens(tokens: &[Vec<f64>], params: &MixModuleParams) -> Result<()> {
    if tokens.len() != params.tokens || tokens.iter().any(|t| t.len() != params.token_len) {
        return Err(Error::Dimension(format!(
            "expected {} tokens of length {}, got {} tokens",
            params.tokens,
            params.token_len,
            tokens.len()
        )));
    }
    Ok(())
}

/// Forward pass returning the embedding and the trace for backprop.
pub fn mix_forward_traced(tokens: &[Vec<f64>], params: &MixModuleParams) -> Result<(Embedding, MixTrace)> {
    check_tokens(tokens, params)?;
    params.validate()?;
    let mut x: Vec<DVector<f64>> = tokens.iter().map(|t| DVector::from_column_slice(t)).collect();
    let mut inputs = Vec::with_capacity(params.stages.len() + 1);
    let mut pre = Vec::with_capacity(params.stages.len());
    for stage in &params.stages {
        let u: Vec<DVector<f64>> = x.iter().map(|xi| &stage.w1 * xi).collect();
        let next: Vec<DVector<f64>> =
            x.iter().zip(&u).map(|(xi, ui)| &stage.w2 * ui.map(|v| v.max(0.0)) + xi).collect();
        inputs.push(std::mem::replace(&mut x, next));
        pre.push(u);
    }
    let flat = DVector::from_iterator(params.tokens * params.token_len, x.iter().flat_map(|t| t.iter().copied()));
    inputs.push(x);
    let raw = &params.projection * flat;
    let emb = Embedding::normalize(raw.as_slice().to_vec())?;
    Ok((emb, MixTrace { inputs, pre, raw }))
}

pub fn mix_forward(tokens: &[Vec<f64>], params: &MixModuleParams) -> Result<Embedding> {
    mix_forward_traced(tokens, params).map(|(e, _)| e)
}

/// Accumulates into `grads` the parameter gradient given `d_out`, the
/// gradient of the loss w.r.t. the normalized embedding.
pub fn mix_backward(params: &MixModuleParams, trace: &MixTrace, d_out: &[f64], grads: &mut MixModuleParams) {
    let n = trace.raw.norm();
    let z = &trace.raw / n;
    let g = DVector::from_column_slice(d_out);
    let d_raw = (&g - &z * z.dot(&g)) / n;

    let last = trace.inputs.last().expect("trace has final tokens");
    let flat = DVector::from_iterator(params.tokens * params.token_len, last.iter().flat_map(|t| t.iter().copied()));
    grads.projection += &d_raw * flat.transpose();
    let d_flat = params.projection.transpose() * &d_raw;
    let mut d_x: Vec<DVector<f64>> = (0..params.tokens)
        .map(|i| d_flat.rows(i * params.token_len, params.token_len).into_owned())
        .collect();

    for (s, stage) in params.stages.iter().enumerate().rev() {
        let xs = &trace.inputs[s];
        let us = &trace.pre[s];
        let gs = &mut grads.stages[s];
        for ((dx, x), u) in d_x.iter_mut().zip(xs).zip(us) {
            let a = u.map(|v| v.max(0.0));
            gs.w2 += &*dx * a.transpose();
            let da = stage.w2.transpose() * &*dx;
            let du = da.zip_map(u, |d, ui| if ui > 0.0 { d } else { 0.0 });
            gs.w1 += &du * x.transpose();
            *dx += stage.w1.transpose() * du;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random_tokens(t: usize, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..t).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn zero_w1_and_identity_projection_is_identity() {
        let mut rng = rng::from_seed(1);
        let mut p = MixModuleParams::random(MixConfig::with_defaults(1, 4, 4), &mut rng);
        for s in &mut p.stages {
            s.w1.fill(0.0);
        }
        p.projection = DMatrix::identity(4, 4);
        let x = vec![vec![0.5, -0.5, 0.5, 0.5]];
        assert_eq!(mix_forward(&x, &p).unwrap().as_slice(), x[0].as_slice());
    }

    #[test]
    fn output_is_unit_norm() {
        let mut rng = rng::from_seed(2);
        let p = MixModuleParams::random(MixConfig::with_defaults(3, 5, 7), &mut rng);
        let e = mix_forward(&random_tokens(3, 5, &mut rng), &p).unwrap();
        assert!((super::super::embedding::norm(e.as_slice()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_stepwise_recomputation() {
        let mut rng = rng::from_seed(3);
        let p = MixModuleParams::random(MixConfig { tokens: 3, token_len: 4, stages: 2, hidden: 6, out_dim: 5 }, &mut rng);
        let x = random_tokens(3, 4, &mut rng);
        // oracle: plain loops over the residual update, flatten, project, normalize
        let mut toks = x.clone();
        for st in &p.stages {
            for tok in toks.iter_mut() {
                let mut hidden = vec![0.0; 6];
                for (h, hv) in hidden.iter_mut().enumerate() {
                    *hv = (0..4).map(|j| st.w1[(h, j)] * tok[j]).sum::<f64>().max(0.0);
                }
                let old = tok.clone();
                for j in 0..4 {
                    tok[j] = old[j] + (0..6).map(|h| st.w2[(j, h)] * hidden[h]).sum::<f64>();
                }
            }
        }
        let flat: Vec<f64> = toks.concat();
        let mut out: Vec<f64> = (0..5).map(|d| (0..12).map(|k| p.projection[(d, k)] * flat[k]).sum()).collect();
        let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.iter_mut().for_each(|v| *v /= n);
        let got = mix_forward(&x, &p).unwrap();
        for (a, b) in got.as_slice().iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = rng::from_seed(4);
        let p = MixModuleParams::random(MixConfig::with_defaults(2, 3, 4), &mut rng);
        assert!(matches!(mix_forward(&random_tokens(3, 3, &mut rng), &p), Err(Error::Dimension(_))));
        let mut z = p.clone();
        z.projection.fill(0.0);
        assert!(matches!(mix_forward(&random_tokens(2, 3, &mut rng), &z), Err(Error::DegenerateEmbedding(_))));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng::from_seed(5);
        let p = MixModuleParams::random(MixConfig { tokens: 2, token_len: 3, stages: 2, hidden: 5, out_dim: 4 }, &mut rng);
        let x = random_tokens(2, 3, &mut rng);
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |p: &MixModuleParams| -> f64 {
            let e = mix_forward(&x, p).unwrap();
            e.as_slice().iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (_, trace) = mix_forward_traced(&x, &p).unwrap();
        let mut grads = p.zeros_like();
        mix_backward(&p, &trace, &w, &mut grads);
        let h = 1e-6;
        let check = |get: &dyn Fn(&mut MixModuleParams) -> &mut f64, analytic: f64| {
            let (mut plus, mut minus) = (p.clone(), p.clone());
            *get(&mut plus) += h;
            *get(&mut minus) -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - analytic).abs() <= 1e-6 * (1.0 + fd.abs()), "fd {fd} vs {analytic}");
        };
        for s in 0..2 {
            for (r, c) in [(0, 0), (2, 1), (4, 2)] {
                check(&|q: &mut MixModuleParams| &mut q.stages[s].w1[(r, c)], grads.stages[s].w1[(r, c)]);
            }
            for (r, c) in [(0, 0), (1, 3), (2, 4)] {
                check(&|q: &mut MixModuleParams| &mut q.stages[s].w2[(r, c)], grads.stages[s].w2[(r, c)]);
            }
        }
        for (r, c) in [(0, 0), (3, 5), (1, 2)] {
            check(&|q: &mut MixModuleParams| &mut q.projection[(r, c)], grads.projection[(r, c)]);
        }
    }
}
