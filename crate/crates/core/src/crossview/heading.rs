use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::embedding::Embedding;
use crate::error::{Error, Result};

pub const DEFAULT_RING_BINS: usize = 36;
const TIE_EPS: f64 = 1e-12;

/// Planar pose; `theta` is kept in `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU { 0.0 } else { t }
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }
}

/// Ring rotated by `shift` bins: `out[r] = ring[(r - shift) mod R]`, so
/// `rotate(g, s)[r + s] = g[r]`.
pub fn rotate<T: Clone>(ring: &[T], shift: usize) -> Vec<T> {
    let n = ring.len();
    (0..n).map(|r| ring[(r + n - shift % n) % n].clone()).collect()
}

/// Per-shift mean cosine between the ground ring and the shifted satellite ring.
pub fn ring_correlation(ground: &[Embedding], sat: &[Embedding]) -> Result<Vec<f64>> {
    if ground.len() != sat.len() {
        return Err(Error::Dimension(format!("ring lengths {} and {}", ground.len(), sat.len())));
    }
    let r = ground.len();
    if r < 4 {
        return Err(Error::Parameter(format!("ring needs at least 4 bins, got {r}")));
    }
    (0..r)
        .map(|shift| {
            let mut acc = 0.0;
            for (i, g) in ground.iter().enumerate() {
                acc += g.cosine(&sat[(i + shift) % r])?;
            }
            Ok(acc / r as f64)
        })
        .collect()
}

/// Heading maximizing the rotational cross-correlation; ties go to the
/// smallest shift.
pub fn refine_heading(ground: &[Embedding], sat: &[Embedding]) -> Result<f64> {
    let corr = ring_correlation(ground, sat)?;
    let mut best = 0;
    for (s, &c) in corr.iter().enumerate().skip(1) {
        if c > corr[best] + TIE_EPS {
            best = s;
        }
    }
    Ok(TAU * best as f64 / corr.len() as f64)
}
