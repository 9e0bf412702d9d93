//! Symmetric InfoNCE over a batch of positive cross-view pairs.
//!
//! Similarities are cosines, so the loss and gradient are defined for
//! vectors of any nonzero norm; for unit inputs the gradient is tangential.

use super::embedding::{cosine, dot, norm, Embedding};
use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.07;

/// Denominator used by the satellite-to-ground direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Denominator {
    /// `sim(z_s^i, z_g^j)`
    #[default]
    CrossModal,
    /// `sim(z_s^i, z_s^j)`, with the positive `sim(z_s^i, z_g^i)` in the numerator.
    SatelliteOnly,
}

#[derive(Debug, Clone)]
pub struct AlignBatch {
    pub ground: Vec<Embedding>,
    pub satellite: Vec<Embedding>,
    pub temperature: f64,
}

impl AlignBatch {
    pub fn new(ground: Vec<Embedding>, satellite: Vec<Embedding>, temperature: f64) -> Result<Self> {
        let b = Self { ground, satellite, temperature };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        check_inputs(&self.ground, &self.satellite, self.temperature)
    }

    pub fn len(&self) -> usize {
        self.ground.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ground.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignGrad {
    pub ground: Vec<Vec<f64>>,
    pub satellite: Vec<Vec<f64>>,
}

fn check_inputs<V: AsRef<[f64]>>(g: &[V], s: &[V], tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Parameter(format!("temperature must be positive, got {tau}")));
    }
    if g.len() != s.len() {
        return Err(Error::Dimension(format!("{} ground vs {} satellite embeddings", g.len(), s.len())));
    }
    if g.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let d = g[0].as_ref().len();
    if g.iter().chain(s).any(|v| v.as_ref().len() != d) {
        return Err(Error::Dimension("embeddings differ in dimension".into()));
    }
    Ok(())
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        self.as_slice()
    }
}

fn sim_matrix<V: AsRef<[f64]>>(a: &[V], b: &[V]) -> Result<Vec<Vec<f64>>> {
    a.iter().map(|x| b.iter().map(|y| cosine(x.as_ref(), y.as_ref())).collect()).collect()
}

/// Row softmax of `m / tau`, plus each row's log-sum-exp.
fn softmax_rows(m: &[Vec<f64>], tau: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    m.iter()
        .map(|row| {
            let mx = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v / tau));
            let sum: f64 = row.iter().map(|v| (v / tau - mx).exp()).sum();
            let p = row.iter().map(|v| (v / tau - mx).exp() / sum).collect();
            (p, mx + sum.ln())
        })
        .unzip()
}

/// `d cos(u, v) / du`
fn cosine_grad_wrt_first(u: &[f64], v: &[f64]) -> Vec<f64> {
    let (nu, nv) = (norm(u), norm(v));
    let c = dot(u, v) / (nu * nv);
    u.iter().zip(v).map(|(a, b)| (b / nv - c * a / nu) / nu).collect()
}

fn add_scaled(acc: &mut [f64], g: &[f64], s: f64) {
    acc.iter_mut().zip(g).for_each(|(a, b)| *a += s * b);
}

/// Loss and gradient for raw vectors; see [`info_nce_loss`].
pub fn info_nce<V: AsRef<[f64]>>(
    ground: &[V],
    satellite: &[V],
    tau: f64,
    denom: Denominator,
) -> Result<(f64, AlignGrad)> {
    check_inputs(ground, satellite, tau)?;
    let n = ground.len();
    let d = ground[0].as_ref().len();
    let s = sim_matrix(ground, satellite)?;
    let w = 1.0 / (2.0 * n as f64);
    // dL/dS[i][j] where S[i][j] = sim(g_i, s_j)
    let mut d_s = vec![vec![0.0; n]; n];

    let (p, lse) = softmax_rows(&s, tau);
    let mut loss = 0.0;
    for i in 0..n {
        loss += lse[i] - s[i][i] / tau;
        for j in 0..n {
            d_s[i][j] += w * (p[i][j] - if i == j { 1.0 } else { 0.0 }) / tau;
        }
    }

    let mut d_u = None;
    match denom {
        Denominator::CrossModal => {
            let st: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| s[j][i]).collect()).collect();
            let (q, lse2) = softmax_rows(&st, tau);
            for i in 0..n {
                loss += lse2[i] - s[i][i] / tau;
                for j in 0..n {
                    d_s[j][i] += w * (q[i][j] - if i == j { 1.0 } else { 0.0 }) / tau;
                }
            }
        }
        Denominator::SatelliteOnly => {
            let u = sim_matrix(satellite, satellite)?;
            let (r, lse2) = softmax_rows(&u, tau);
            let mut du = vec![vec![0.0; n]; n];
            for i in 0..n {
                loss += lse2[i] - s[i][i] / tau;
                d_s[i][i] -= w / tau;
                for j in 0..n {
                    du[i][j] = w * r[i][j] / tau;
                }
            }
            d_u = Some(du);
        }
    }
    loss *= w;

    let mut gg = vec![vec![0.0; d]; n];
    let mut gs = vec![vec![0.0; d]; n];
    for i in 0..n {
        let gi = ground[i].as_ref();
        for j in 0..n {
            let sj = satellite[j].as_ref();
            let c = d_s[i][j];
            if c != 0.0 {
                add_scaled(&mut gg[i], &cosine_grad_wrt_first(gi, sj), c);
                add_scaled(&mut gs[j], &cosine_grad_wrt_first(sj, gi), c);
            }
        }
    }
    if let Some(du) = d_u {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue; // cos(s, s) is constant
                }
                let (si, sj) = (satellite[i].as_ref(), satellite[j].as_ref());
                add_scaled(&mut gs[i], &cosine_grad_wrt_first(si, sj), du[i][j]);
                add_scaled(&mut gs[j], &cosine_grad_wrt_first(sj, si), du[i][j]);
            }
        }
    }
    Ok((loss.max(0.0), AlignGrad { ground: gg, satellite: gs }))
}

pub fn info_nce_loss(batch: &AlignBatch) -> Result<f64> {
    info_nce_loss_with(batch, Denominator::CrossModal)
}

pub fn info_nce_loss_with(batch: &AlignBatch, denom: Denominator) -> Result<f64> {
    info_nce(&batch.ground, &batch.satellite, batch.temperature, denom).map(|(l, _)| l)
}

pub fn info_nce_grad(batch: &AlignBatch) -> Result<AlignGrad> {
    info_nce_grad_with(batch, Denominator::CrossModal)
}

pub fn info_nce_grad_with(batch: &AlignBatch, denom: Denominator) -> Result<AlignGrad> {
    info_nce(&batch.ground, &batch.satellite, batch.temperature, denom).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn unit(v: Vec<f64>) -> Embedding {
        Embedding::normalize(v).unwrap()
    }

    fn random_vecs(n: usize, d: usize, rng: &mut crate::rng::Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    /// Direct transcription with nested loops and no shared helpers.
    fn naive(g: &[Vec<f64>], s: &[Vec<f64>], tau: f64, denom: Denominator) -> f64 {
        let cs = |a: &[f64], b: &[f64]| {
            let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let aa: f64 = a.iter().map(|x| x * x).sum();
            let bb: f64 = b.iter().map(|x| x * x).sum();
            ab / (aa.sqrt() * bb.sqrt())
        };
        let n = g.len();
        let mut total = 0.0;
        for i in 0..n {
            let num = (cs(&g[i], &s[i]) / tau).exp();
            let den: f64 = (0..n).map(|j| (cs(&g[i], &s[j]) / tau).exp()).sum();
            total -= (num / den).ln();
            let den2: f64 = match denom {
                Denominator::CrossModal => (0..n).map(|j| (cs(&s[i], &g[j]) / tau).exp()).sum(),
                Denominator::SatelliteOnly => (0..n).map(|j| (cs(&s[i], &s[j]) / tau).exp()).sum(),
            };
            total -= (num / den2).ln();
        }
        total / (2.0 * n as f64)
    }

    #[test]
    fn single_pair_is_zero_with_zero_gradient() {
        let b = AlignBatch::new(vec![unit(vec![1.0, 2.0])], vec![unit(vec![-3.0, 1.0])], 0.07).unwrap();
        assert_eq!(info_nce_loss(&b).unwrap(), 0.0);
        let g = info_nce_grad(&b).unwrap();
        assert!(g.ground[0].iter().chain(&g.satellite[0]).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn orthogonal_pairs_closed_form() {
        let e = [unit(vec![1.0, 0.0]), unit(vec![0.0, 1.0])];
        let tau: f64 = 0.07;
        let b = AlignBatch::new(e.to_vec(), e.to_vec(), tau).unwrap();
        let expected = -((1.0 / tau).exp() / ((1.0 / tau).exp() + 1.0)).ln();
        assert!((info_nce_loss(&b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = rng::from_seed(11);
        for denom in [Denominator::CrossModal, Denominator::SatelliteOnly] {
            for _ in 0..5 {
                let g = random_vecs(8, 6, &mut rng);
                let s = random_vecs(8, 6, &mut rng);
                let (l, _) = info_nce(&g, &s, 0.07, denom).unwrap();
                let oracle = naive(&g, &s, 0.07, denom);
                assert!((l - oracle).abs() < 1e-10, "{l} vs {oracle}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng::from_seed(12);
        let h = 1e-5;
        for denom in [Denominator::CrossModal, Denominator::SatelliteOnly] {
            for _ in 0..5 {
                let g: Vec<Vec<f64>> =
                    random_vecs(4, 5, &mut rng).into_iter().map(|v| unit(v).into_inner()).collect();
                let s: Vec<Vec<f64>> =
                    random_vecs(4, 5, &mut rng).into_iter().map(|v| unit(v).into_inner()).collect();
                let tau = 0.5;
                let (_, grad) = info_nce(&g, &s, tau, denom).unwrap();
                for side in 0..2 {
                    for i in 0..4 {
                        for k in 0..5 {
                            let perturb = |delta: f64| {
                                let (mut g2, mut s2) = (g.clone(), s.clone());
                                if side == 0 { g2[i][k] += delta } else { s2[i][k] += delta }
                                naive(&g2, &s2, tau, denom)
                            };
                            let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
                            let an = if side == 0 { grad.ground[i][k] } else { grad.satellite[i][k] };
                            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                            assert!(err < 1e-4, "{denom:?} side {side} [{i}][{k}]: fd {fd} vs {an}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn temperature_change_recomputes() {
        let mut rng = rng::from_seed(13);
        let g = random_vecs(4, 3, &mut rng);
        let s = random_vecs(4, 3, &mut rng);
        let (_, a) = info_nce(&g, &s, 0.14, Denominator::CrossModal).unwrap();
        let h = 1e-5;
        let mut g2 = g.clone();
        g2[1][2] += h;
        let mut g3 = g.clone();
        g3[1][2] -= h;
        let fd = (naive(&g2, &s, 0.14, Denominator::CrossModal) - naive(&g3, &s, 0.14, Denominator::CrossModal)) / (2.0 * h);
        assert!((fd - a.ground[1][2]).abs() < 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn bad_temperature_and_counts() {
        let e = vec![unit(vec![1.0, 0.0])];
        assert!(matches!(AlignBatch::new(e.clone(), e.clone(), 0.0), Err(Error::Parameter(_))));
        assert!(matches!(AlignBatch::new(e.clone(), vec![], 0.07), Err(Error::Dimension(_))));
    }
}
