//! Procedural road rasters.
//!
//! Roads are drawn as capsules (all pixels within half the road width of a
//! centre segment). Used to build the prototype support set and as ground
//! truth scenes with known topology.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::raster::RasterTile;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

fn dist_to_segment(p: [f64; 2], s: &Segment) -> f64 {
    let (dx, dy) = (s.b[0] - s.a[0], s.b[1] - s.a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - s.a[0]) * dx + (p[1] - s.a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (s.a[0] + t * dx, s.a[1] + t * dy);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

/// Road appearance used when rasterizing a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadStyle {
    pub road: f64,
    pub background: f64,
    /// Standard deviation of additive Gaussian noise (clamped to `[0, 1]`).
    pub noise: f64,
}

impl Default for RoadStyle {
    fn default() -> Self {
        Self { road: 0.9, background: 0.1, noise: 0.0 }
    }
}

/// Single-channel raster of the given road segments, in pixel coordinates.
pub fn render_roads(
    width: usize,
    height: usize,
    segments: &[Segment],
    road_width: f64,
    style: RoadStyle,
    rng: Option<&mut Rng>,
) -> RasterTile {
    let mut tile = RasterTile::blank(width, height, 1, [0.0, 0.0], 1.0);
    let half = road_width / 2.0;
    for r in 0..height {
        for c in 0..width {
            let p = [c as f64, r as f64];
            let on_road = segments.iter().any(|s| dist_to_segment(p, s) <= half);
            tile.set(c, r, 0, if on_road { style.road } else { style.background });
        }
    }
    if let Some(rng) = rng {
        if style.noise > 0.0 {
            let normal = Normal::new(0.0, style.noise).expect("noise std is finite");
            for v in tile.data.iter_mut() {
                *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
            }
        }
    }
    tile
}

/// Shapes of the prototype support templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    Straight,
    Corner,
    TJunction,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::Straight, Template::Corner, Template::TJunction];

    pub fn label(self) -> &'static str {
        match self {
            Template::Straight => "straight-segment",
            Template::Corner => "corner",
            Template::TJunction => "junction",
        }
    }

    /// Centre segments of the template on a `size x size` canvas, rotated by
    /// `quarter_turns` and with its centre shifted by `jitter` pixels.
    pub fn segments(self, size: usize, quarter_turns: u32, jitter: [f64; 2]) -> Vec<Segment> {
        let m = (size as f64 - 1.0) / 2.0;
        let (cx, cy) = (m + jitter[0], m + jitter[1]);
        let far = size as f64 * 2.0;
        let arms: &[[f64; 2]] = match self {
            Template::Straight => &[[1.0, 0.0], [-1.0, 0.0]],
            Template::Corner => &[[1.0, 0.0], [0.0, 1.0]],
            Template::TJunction => &[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]],
        };
        arms.iter()
            .map(|d| {
                let mut d = *d;
                for _ in 0..quarter_turns % 4 {
                    d = [-d[1], d[0]];
                }
                Segment { a: [cx, cy], b: [cx + d[0] * far, cy + d[1] * far] }
            })
            .collect()
    }
}

/// Uniform jitter in `[-max, max]` on both axes.
pub fn jitter(rng: &mut Rng, max: f64) -> [f64; 2] {
    if max <= 0.0 {
        return [0.0, 0.0];
    }
    [rng.random_range(-max..=max), rng.random_range(-max..=max)]
}


/// Expected topology of a generated scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneTopology {
    pub nodes: usize,
    pub edges: usize,
    pub components: usize,
}

/// A procedurally drawn road raster with its ground-truth topology.
#[derive(Debug, Clone)]
pub struct RoadScene {
    pub kind: &'static str,
    pub segments: Vec<Segment>,
    pub road_width: f64,
    pub topology: SceneTopology,
    pub tile: RasterTile,
}

/// Draws one of a handful of road layouts (straight, bend, tee, crossing,
/// two parallel roads) with random placement inside a `size x size` canvas.
pub fn random_scene(rng: &mut Rng, size: usize, road_width: f64, style: RoadStyle) -> RoadScene {
    let s = size as f64;
    let margin = road_width * 1.5;
    let lo = margin;
    let hi = s - 1.0 - margin;
    let mid = |rng: &mut Rng| rng.random_range(s * 0.35..s * 0.65);
    let flip = rng.random_bool(0.5);
    let orient = |p: [f64; 2]| if flip { [p[1], p[0]] } else { p };
    let seg = |a: [f64; 2], b: [f64; 2]| Segment { a: orient(a), b: orient(b) };
    let (kind, segments, topology) = match rng.random_range(0..5) {
        0 => {
            let y = mid(rng);
            ("straight", vec![seg([lo, y], [hi, y])], SceneTopology { nodes: 2, edges: 1, components: 1 })
        }
        1 => {
            let (x, y) = (mid(rng), mid(rng));
            let down = rng.random_bool(0.5);
            let end = if down { hi } else { lo };
            ("bend", vec![seg([lo, y], [x, y]), seg([x, y], [x, end])], SceneTopology { nodes: 2, edges: 1, components: 1 })
        }
        2 => {
            let (x, y) = (mid(rng), mid(rng));
            let end = if rng.random_bool(0.5) { hi } else { lo };
            (
                "tee",
                vec![seg([lo, y], [hi, y]), seg([x, y], [x, end])],
                SceneTopology { nodes: 4, edges: 3, components: 1 },
            )
        }
        3 => {
            let (x, y) = (mid(rng), mid(rng));
            (
                "crossing",
                vec![seg([lo, y], [hi, y]), seg([x, lo], [x, hi])],
                SceneTopology { nodes: 5, edges: 4, components: 1 },
            )
        }
        _ => {
            let gap = road_width * 3.0;
            let y0 = rng.random_range(lo..(hi - gap));
            let y1 = rng.random_range((y0 + gap)..=hi);
            (
                "parallel",
                vec![seg([lo, y0], [hi, y0]), seg([lo, y1], [hi, y1])],
                SceneTopology { nodes: 4, edges: 2, components: 2 },
            )
        }
    };
    let tile = render_roads(size, size, &segments, road_width, style, Some(rng));
    RoadScene { kind, segments, road_width, topology, tile }
}
