//! Frozen patch encoder.
//!
//! Each `patch x patch` block of a tile is flattened (channels interleaved),
//! centred around mid-grey and pushed through a seeded Gaussian projection,
//! then L2-normalized. Centring makes bright and dark patches point in
//! opposite directions, which is what the prototype matcher relies on.

use rand_distr::{Distribution, StandardNormal};

use super::raster::{FeatureMap, RasterTile};
use crate::error::{Error, Result};
use crate::rng;

/// Token norms below this are left as zero vectors instead of normalized.
pub const ZERO_TOKEN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchEncoder {
    pub patch_size: usize,
    pub channels: usize,
    pub dim: usize,
    pub seed: u64,
    /// Row-major `dim x input_len`.
    projection: Vec<f64>,
}

impl PatchEncoder {
    pub fn new(patch_size: usize, channels: usize, dim: usize, seed: u64) -> Result<Self> {
        if patch_size == 0 || channels == 0 || dim == 0 {
            return Err(Error::Parameter(format!(
                "encoder needs positive patch size, channels and dim (got {patch_size}, {channels}, {dim})"
            )));
        }
        let input_len = patch_size * patch_size * channels;
        let scale = 1.0 / (input_len as f64).sqrt();
        let mut rng = rng::stream(seed, "patch-encoder");
        let projection = (0..dim * input_len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Ok(Self { patch_size, channels, dim, seed, projection })
    }

    pub fn input_len(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    /// Projects one flattened patch (values in `[0, 1]`) and normalizes it.
    pub fn encode_patch(&self, patch: &[f64]) -> Vec<f64> {
        debug_assert_eq!(patch.len(), self.input_len());
        let mut out: Vec<f64> = self
            .projection
            .chunks_exact(patch.len())
            .map(|row| row.iter().zip(patch).map(|(w, x)| w * (x - 0.5)).sum())
            .collect();
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > ZERO_TOKEN_EPS {
            out.iter_mut().for_each(|v| *v /= norm);
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    /// Flattened intensities of the patch whose top-left token is `(tc, tr)`.
    pub fn extract_patch(&self, tile: &RasterTile, tc: usize, tr: usize) -> Vec<f64> {
        let p = self.patch_size;
        let mut patch = Vec::with_capacity(self.input_len());
        for r in tr * p..(tr + 1) * p {
            let start = (r * tile.width + tc * p) * tile.channels;
            patch.extend_from_slice(&tile.data[start..start + p * tile.channels]);
        }
        patch
    }

    pub fn encode(&self, tile: &RasterTile) -> Result<FeatureMap> {
        let p = self.patch_size;
        if tile.channels != self.channels {
            return Err(Error::Dimension(format!(
                "encoder expects {} channels, tile has {}",
                self.channels, tile.channels
            )));
        }
        if tile.width % p != 0 || tile.height % p != 0 {
            return Err(Error::Dimension(format!(
                "patch size {p} does not divide tile {}x{}",
                tile.width, tile.height
            )));
        }
        let (gw, gh) = (tile.width / p, tile.height / p);
        let mut data = Vec::with_capacity(gw * gh * self.dim);
        for tr in 0..gh {
            for tc in 0..gw {
                data.extend(self.encode_patch(&self.extract_patch(tile, tc, tr)));
            }
        }
        Ok(FeatureMap { grid_width: gw, grid_height: gh, dim: self.dim, data })
    }
}

/// Encodes a tile with a freshly built encoder for `(patch_size, dim, seed)`.
pub fn encode_tile(tile: &RasterTile, patch_size: usize, dim: usize, seed: u64) -> Result<FeatureMap> {
    PatchEncoder::new(patch_size, tile.channels, dim, seed)?.encode(tile)
}
