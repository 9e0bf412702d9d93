//! Per-tile adaptive thresholding by two-class variance maximization.

use super::raster::{Grid, PathMask};
use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 256;

/// Histogram bin of `v` on `[min, max]`.
fn bin_of(v: f64, min: f64, range: f64) -> usize {
    (((v - min) / range) * HISTOGRAM_BINS as f64).floor().clamp(0.0, (HISTOGRAM_BINS - 1) as f64) as usize
}

/// Best split bin `k`: bins `0..=k` form the low class. Ties go to the lowest `k`.
fn best_split(values: &[f64], min: f64, range: f64) -> usize {
    let mut count = [0usize; HISTOGRAM_BINS];
    let mut sum = [0f64; HISTOGRAM_BINS];
    for &v in values {
        let b = bin_of(v, min, range);
        count[b] += 1;
        sum[b] += v;
    }
    let total = values.len() as f64;
    let total_sum: f64 = sum.iter().sum();
    let (mut n0, mut s0) = (0usize, 0.0);
    let (mut best_k, mut best_var) = (0, f64::NEG_INFINITY);
    for k in 0..HISTOGRAM_BINS - 1 {
        n0 += count[k];
        s0 += sum[k];
        let n1 = values.len() - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let (w0, w1) = (n0 as f64 / total, n1 as f64 / total);
        let (m0, m1) = (s0 / n0 as f64, (total_sum - s0) / n1 as f64);
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_k = k;
        }
    }
    best_k
}

/// Binarizes a similarity grid. Constant grids produce an all-zero mask.
pub fn adaptive_threshold(sim: &Grid) -> Result<PathMask> {
    if sim.values.is_empty() {
        return Err(Error::Parameter("cannot threshold an empty grid".into()));
    }
    let min = sim.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sim.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut mask = PathMask::empty(sim.width, sim.height);
    let range = max - min;
    if !(range > 0.0) {
        return Ok(mask);
    }
    let k = best_split(&sim.values, min, range);
    for (bit, &v) in mask.bits.iter_mut().zip(&sim.values) {
        *bit = bin_of(v, min, range) > k;
    }
    Ok(mask)
}

/// Threshold value equivalent to the chosen split, `None` for constant grids.
pub fn otsu_threshold(sim: &Grid) -> Option<f64> {
    let min = sim.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sim.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if sim.values.is_empty() || !(range > 0.0) {
        return None;
    }
    let k = best_split(&sim.values, min, range);
    Some(min + (k + 1) as f64 * range / HISTOGRAM_BINS as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive oracle: try every split between sorted distinct values and
    /// keep the one with maximal between-class variance.
    fn oracle_mask(values: &[f64]) -> Vec<bool> {
        let mut distinct: Vec<f64> = values.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mut best = (f64::NEG_INFINITY, f64::INFINITY);
        for w in distinct.windows(2) {
            let t = w[1];
            let (lo, hi): (Vec<f64>, Vec<f64>) = values.iter().partition(|v| **v < t);
            let n = values.len() as f64;
            let m = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
            let var = (lo.len() as f64 / n) * (hi.len() as f64 / n) * (m(&lo) - m(&hi)).powi(2);
            if var > best.0 {
                best = (var, t);
            }
        }
        values.iter().map(|v| *v >= best.1).collect()
    }

    #[test]
    fn bimodal_grid_selects_high_mode() {
        let values: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 0.1 } else { 0.9 }).collect();
        let mask = adaptive_threshold(&Grid::new(4, 4, values.clone()).unwrap()).unwrap();
        assert_eq!(mask.bits, oracle_mask(&values));
        assert_eq!(mask.count(), 8);
        assert!(mask.bits.iter().zip(&values).all(|(b, v)| *b == (*v == 0.9)));
    }

    #[test]
    fn constant_grid_is_empty() {
        let mask = adaptive_threshold(&Grid::new(3, 3, vec![0.4; 9]).unwrap()).unwrap();
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn single_outlier_is_selected() {
        let mut values = vec![0.05; 25];
        values[12] = 0.95;
        let mask = adaptive_threshold(&Grid::new(5, 5, values.clone()).unwrap()).unwrap();
        assert_eq!(mask.bits, oracle_mask(&values));
        assert_eq!(mask.count(), 1);
        assert!(mask.bits[12]);
    }

    #[test]
    fn empty_grid_is_error() {
        assert!(adaptive_threshold(&Grid::new(0, 0, vec![]).unwrap()).is_err());
    }

    #[test]
    fn threshold_value_agrees_with_mask() {
        let values = vec![0.1, 0.2, 0.25, 0.7, 0.8, 0.85, 0.3, 0.75, 0.9];
        let g = Grid::new(3, 3, values.clone()).unwrap();
        let t = otsu_threshold(&g).unwrap();
        let mask = adaptive_threshold(&g).unwrap();
        assert!(mask.bits.iter().zip(&values).all(|(b, v)| *b == (*v >= t)));
    }
}
