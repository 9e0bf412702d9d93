//! Recurrent conditional next-action policy.
//!
//! Over a short state history `c_1..c_T` with conditioning vector `z`:
//! `h_t = relu(M h_{t-1} + S[c_t] + P z)`, `h_0 = 0`, logits `= O h_T`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::checkpoint::{NamedTensor, TensorSet};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const ACTIONS: usize = 5;
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_HISTORY: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    /// `cells x hidden`, one row per cell index.
    pub state_embed: DMatrix<f64>,
    /// `hidden x cond_dim`
    pub cond_proj: DMatrix<f64>,
    /// `ACTIONS x hidden`
    pub output_head: DMatrix<f64>,
    /// `hidden x hidden`
    pub history_mix: DMatrix<f64>,
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}

impl PolicyParams {
    pub fn zeros(cells: usize, cond_dim: usize, hidden: usize) -> Self {
        Self {
            state_embed: DMatrix::zeros(cells, hidden),
            cond_proj: DMatrix::zeros(hidden, cond_dim),
            output_head: DMatrix::zeros(ACTIONS, hidden),
            history_mix: DMatrix::zeros(hidden, hidden),
        }
    }

    /// Small random init; logits start close to uniform.
    pub fn random(cells: usize, cond_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            state_embed: gaussian(cells, hidden, 0.5, rng),
            cond_proj: gaussian(hidden, cond_dim, 1.0, rng),
            output_head: gaussian(ACTIONS, hidden, 0.01, rng),
            history_mix: gaussian(hidden, hidden, 0.1 / (hidden as f64).sqrt(), rng),
        }
    }

    pub fn cells(&self) -> usize {
        self.state_embed.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.state_embed.ncols()
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_proj.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.cells(), self.cond_dim(), self.hidden())
    }

    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        self.state_embed += &other.state_embed * scale;
        self.cond_proj += &other.cond_proj * scale;
        self.output_head += &other.output_head * scale;
        self.history_mix += &other.history_mix * scale;
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.cond_proj.nrows() != h || self.output_head.shape() != (ACTIONS, h) || self.history_mix.shape() != (h, h) {
            return Err(Error::Dimension("policy parameter shapes are inconsistent".into()));
        }
        let finite = [&self.state_embed, &self.cond_proj, &self.output_head, &self.history_mix]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Numeric("non-finite policy parameter".into()));
        }
        Ok(())
    }
}

impl TensorSet for PolicyParams {
    fn tensors(&self) -> Vec<NamedTensor> {
        vec![
            NamedTensor::from_matrix("stateEmbed", &self.state_embed),
            NamedTensor::from_matrix("condProj", &self.cond_proj),
            NamedTensor::from_matrix("outputHead", &self.output_head),
            NamedTensor::from_matrix("historyMix", &self.history_mix),
        ]
    }

    fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let get = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .map(NamedTensor::to_matrix)
                .ok_or_else(|| Error::Data(format!("policy checkpoint lacks `{name}`")))
        };
        let p = Self {
            state_embed: get("stateEmbed")?,
            cond_proj: get("condProj")?,
            output_head: get("outputHead")?,
            history_mix: get("historyMix")?,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone)]
pub struct PolicyTrace {
    history: Vec<usize>,
    cond: DVector<f64>,
    /// Pre-activations `a_t`.
    pre: Vec<DVector<f64>>,
    /// Hidden states `h_0..h_T`.
    hidden: Vec<DVector<f64>>,
}

pub fn policy_forward_traced(history: &[usize], cond: &[f64], params: &PolicyParams) -> Result<([f64; ACTIONS], PolicyTrace)> {
    if history.is_empty() {
        return Err(Error::Parameter("policy history is empty".into()));
    }
    if let Some(c) = history.iter().find(|&&c| c >= params.cells()) {
        return Err(Error::Lookup(format!("cell index {c} outside the state table")));
    }
    if cond.len() != params.cond_dim() {
        return Err(Error::Dimension(format!("conditioning has {} dims, policy expects {}", cond.len(), params.cond_dim())));
    }
    let z = DVector::from_column_slice(cond);
    let pz = &params.cond_proj * &z;
    let mut hidden = vec![DVector::zeros(params.hidden())];
    let mut pre = Vec::with_capacity(history.len());
    for &c in history {
        let prev = hidden.last().expect("h_0 exists");
        let a = &params.history_mix * prev + params.state_embed.row(c).transpose() + &pz;
        hidden.push(a.map(|v| v.max(0.0)));
        pre.push(a);
    }
    let out = &params.output_head * hidden.last().expect("h_T exists");
    let mut logits = [0.0; ACTIONS];
    logits.copy_from_slice(out.as_slice());
    Ok((logits, PolicyTrace { history: history.to_vec(), cond: z, pre, hidden }))
}

/// Action logits (up, down, left, right, stay) for a cell-index history.
pub fn policy_forward(history: &[usize], cond: &[f64], params: &PolicyParams) -> Result<[f64; ACTIONS]> {
    policy_forward_traced(history, cond, params).map(|(l, _)| l)
}

/// Accumulates `d loss / d params` into `grads` given `d loss / d logits`.
pub fn policy_backward(params: &PolicyParams, trace: &PolicyTrace, d_logits: &[f64; ACTIONS], grads: &mut PolicyParams) {
    let dl = DVector::from_column_slice(d_logits);
    let h_t = trace.hidden.last().expect("h_T exists");
    grads.output_head += &dl * h_t.transpose();
    let mut dh = params.output_head.transpose() * dl;
    for t in (0..trace.history.len()).rev() {
        let da = dh.zip_map(&trace.pre[t], |d, a| if a > 0.0 { d } else { 0.0 });
        let mut row = grads.state_embed.row_mut(trace.history[t]);
        row += da.transpose();
        grads.cond_proj += &da * trace.cond.transpose();
        grads.history_mix += &da * trace.hidden[t].transpose();
        dh = params.history_mix.transpose() * da;
    }
}

pub fn softmax(logits: &[f64; ACTIONS]) -> [f64; ACTIONS] {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut p = logits.map(|l| (l - m).exp());
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

pub fn log_softmax(logits: &[f64; ACTIONS]) -> [f64; ACTIONS] {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.map(|l| l - lse)
}
