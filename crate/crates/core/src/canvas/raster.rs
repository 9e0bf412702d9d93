use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-channel raster tile with row-major interleaved intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterTile {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    /// World coordinates (meters) of pixel (0, 0).
    pub origin: [f64; 2],
    /// Meters per pixel.
    pub resolution: f64,
}

impl RasterTile {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        origin: [f64; 2],
        resolution: f64,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Parameter("raster needs at least one channel".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::Dimension(format!(
                "raster data has {} values, expected {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Parameter(format!("resolution must be positive, got {resolution}")));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { width, height, channels, data, origin, resolution })
    }

    /// All-zero tile.
    pub fn blank(width: usize, height: usize, channels: usize, origin: [f64; 2], resolution: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
            origin,
            resolution,
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, channel: usize, value: f64) {
        self.data[(row * self.width + col) * self.channels + channel] = value;
    }

    /// World position of a pixel.
    pub fn pixel_to_world(&self, col: f64, row: f64) -> [f64; 2] {
        [self.origin[0] + col * self.resolution, self.origin[1] + row * self.resolution]
    }

    /// Fractional pixel coordinates of a world point.
    pub fn world_to_pixel(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.origin[0]) / self.resolution, (p[1] - self.origin[1]) / self.resolution]
    }
}

/// Per-token descriptors on a `grid_width x grid_height` token grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub grid_width: usize,
    pub grid_height: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn token(&self, col: usize, row: usize) -> &[f64] {
        let start = (row * self.grid_width + col) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Row-major scalar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "grid has {} values, expected {}x{}",
                values.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Binary mask on a token grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PathMask {
    pub grid_width: usize,
    pub grid_height: usize,
    pub bits: Vec<bool>,
}

impl PathMask {
    pub fn empty(grid_width: usize, grid_height: usize) -> Self {
        Self { grid_width, grid_height, bits: vec![false; grid_width * grid_height] }
    }

    /// Parses rows of `#`/`1` (set) and `.`/`0` (unset) characters.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut mask = Self::empty(width, height);
        for (r, line) in rows.iter().enumerate() {
            assert_eq!(line.len(), width, "ragged mask row {r}");
            for (c, ch) in line.chars().enumerate() {
                mask.set(c, r, matches!(ch, '#' | '1'));
            }
        }
        mask
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.grid_width + col]
    }

    /// Out-of-bounds reads are background.
    #[inline]
    pub fn get_signed(&self, col: i64, row: i64) -> bool {
        col >= 0
            && row >= 0
            && (col as usize) < self.grid_width
            && (row as usize) < self.grid_height
            && self.get(col as usize, row as usize)
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.bits[row * self.grid_width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Number of set 8-neighbours of a pixel.
    pub fn neighbor_count(&self, col: usize, row: usize) -> usize {
        NEIGHBORS_8
            .iter()
            .filter(|(dc, dr)| self.get_signed(col as i64 + dc, row as i64 + dr))
            .count()
    }

    /// Number of 8-connected foreground components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.bits.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(idx) = stack.pop() {
                let (c, r) = ((idx % self.grid_width) as i64, (idx / self.grid_width) as i64);
                for (dc, dr) in NEIGHBORS_8 {
                    let (nc, nr) = (c + dc, r + dr);
                    if self.get_signed(nc, nr) {
                        let n = nr as usize * self.grid_width + nc as usize;
                        if !seen[n] {
                            seen[n] = true;
                            stack.push(n);
                        }
                    }
                }
            }
        }
        count
    }

    /// Top-left corners of all 2x2 all-set blocks.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.grid_height.saturating_sub(1) {
            for c in 0..self.grid_width.saturating_sub(1) {
                if self.get(c, r) && self.get(c + 1, r) && self.get(c, r + 1) && self.get(c + 1, r + 1) {
                    out.push((c, r));
                }
            }
        }
        out
    }

    pub fn find_block(&self) -> Option<(usize, usize)> {
        self.blocks().into_iter().next()
    }
}

impl std::fmt::Display for PathMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in 0..self.grid_height {
            for c in 0..self.grid_width {
                f.write_str(if self.get(c, r) { "#" } else { "." })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// 8-neighbour offsets `(dcol, drow)` in clockwise order starting north.
pub const NEIGHBORS_8: [(i64, i64); 8] =
    [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];
