//! Local views of grid cells and their embeddings.
//!
//! A view covers the 3x3 neighbourhood of a cell at two pixels per cell with
//! two channels: traversability (open 1, blocked or off-grid 0, agent 0.5)
//! and the per-cell texture. Ground observations carry the agent marker;
//! satellite views of the same cell do not.

use serde::{Deserialize, Serialize};

use super::world::{Cell, GridWorld};
use crate::canvas::{PatchEncoder, RasterTile};
use crate::crossview::Embedding;
use crate::error::{Error, Result};

pub const VIEW_RADIUS: usize = 1;
pub const PIXELS_PER_CELL: usize = 2;
pub const VIEW_CHANNELS: usize = 2;
pub const DEFAULT_VIEW_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateObservation {
    pub cell: Cell,
    pub local_view: RasterTile,
    pub embedding: Embedding,
}

pub fn render_view(world: &GridWorld, cell: Cell, with_agent: bool) -> RasterTile {
    let span = 2 * VIEW_RADIUS + 1;
    let px = span * PIXELS_PER_CELL;
    let m = world.cell_meters / PIXELS_PER_CELL as f64;
    let origin = [
        (cell.col as f64 - VIEW_RADIUS as f64) * world.cell_meters + m / 2.0,
        (cell.row as f64 - VIEW_RADIUS as f64) * world.cell_meters + m / 2.0,
    ];
    let mut tile = RasterTile::blank(px, px, VIEW_CHANNELS, origin, m);
    for dr in 0..span {
        for dc in 0..span {
            let (r, c) = (cell.row as i64 + dr as i64 - VIEW_RADIUS as i64, cell.col as i64 + dc as i64 - VIEW_RADIUS as i64);
            let (trav, tex) = if world.in_bounds(r, c) {
                let n = Cell::new(r as usize, c as usize);
                let t = world.texture(n);
                if !world.is_open(n) {
                    (0.0, t)
                } else if with_agent && n == cell {
                    (0.5, t)
                } else {
                    (1.0, t)
                }
            } else {
                (0.0, 0.0)
            };
            for y in 0..PIXELS_PER_CELL {
                for x in 0..PIXELS_PER_CELL {
                    let (pc, pr) = (dc * PIXELS_PER_CELL + x, dr * PIXELS_PER_CELL + y);
                    tile.set(pc, pr, 0, trav);
                    tile.set(pc, pr, 1, tex);
                }
            }
        }
    }
    tile
}

/// Frozen encoder mapping whole views to unit embeddings.
#[derive(Debug, Clone)]
pub struct ViewEncoder {
    encoder: PatchEncoder,
}

impl ViewEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        let side = (2 * VIEW_RADIUS + 1) * PIXELS_PER_CELL;
        Ok(Self { encoder: PatchEncoder::new(side, VIEW_CHANNELS, dim, seed)? })
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim
    }

    pub fn encode_view(&self, view: &RasterTile) -> Result<Embedding> {
        Embedding::normalize(self.encoder.encode_patch(&self.encoder.extract_patch(view, 0, 0)))
    }

    /// Ground observation with the agent at `cell`.
    pub fn observe(&self, world: &GridWorld, cell: Cell) -> Result<StateObservation> {
        if !world.is_open(cell) {
            return Err(Error::Parameter(format!("cannot observe blocked cell {cell:?}")));
        }
        let local_view = render_view(world, cell, true);
        let embedding = self.encode_view(&local_view)?;
        Ok(StateObservation { cell, local_view, embedding })
    }

    /// Satellite-patch embedding of `cell` (no agent marker).
    pub fn satellite(&self, world: &GridWorld, cell: Cell) -> Result<Embedding> {
        self.encode_view(&render_view(world, cell, false))
    }
}

/// `observe` with a throwaway encoder built from `encoder_seed`.
pub fn observe(world: &GridWorld, cell: Cell, encoder_seed: u64) -> Result<StateObservation> {
    ViewEncoder::new(DEFAULT_VIEW_DIM, encoder_seed)?.observe(world, cell)
}

/// Precomputed ground and satellite embeddings for every open cell.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub ground: Vec<Option<Embedding>>,
    pub satellite: Vec<Option<Embedding>>,
}

impl EmbeddingTable {
    pub fn build(world: &GridWorld, encoder: &ViewEncoder) -> Result<Self> {
        let mut ground = vec![None; world.cell_count()];
        let mut satellite = vec![None; world.cell_count()];
        for c in world.open_cells() {
            let i = world.index(c);
            ground[i] = Some(encoder.observe(world, c)?.embedding);
            satellite[i] = Some(encoder.satellite(world, c)?);
        }
        Ok(Self { ground, satellite })
    }

    pub fn ground(&self, world: &GridWorld, c: Cell) -> Result<&Embedding> {
        self.ground.get(world.index(c)).and_then(Option::as_ref).ok_or_else(|| Error::Lookup(format!("cell {c:?}")))
    }

    pub fn satellite(&self, world: &GridWorld, c: Cell) -> Result<&Embedding> {
        self.satellite.get(world.index(c)).and_then(Option::as_ref).ok_or_else(|| Error::Lookup(format!("cell {c:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_neighbourhood_same_embedding() {
        // texture is per cell, so two cells only look alike in a texture-free world
        let w = GridWorld::open(5, 1);
        let enc = ViewEncoder::new(16, 3).unwrap();
        let a = enc.observe(&w, Cell::new(2, 2)).unwrap();
        assert_eq!(a, enc.observe(&w, Cell::new(2, 2)).unwrap());
        let n = crate::crossview::norm(a.embedding.as_slice());
        assert!((n - 1.0).abs() < 1e-12);
        let mut v = render_view(&w, Cell::new(1, 1), true);
        let mut u = render_view(&w, Cell::new(2, 2), true);
        for t in [&mut v, &mut u] {
            for r in 0..6 {
                for c in 0..6 {
                    t.set(c, r, 1, 0.3);
                }
            }
        }
        assert_eq!(enc.encode_view(&v).unwrap(), enc.encode_view(&u).unwrap());
    }

    #[test]
    fn open_vs_walled_differ_and_blocked_rejected() {
        let mut w = GridWorld::open(5, 1);
        let enc = ViewEncoder::new(16, 3).unwrap();
        let open = enc.observe(&w, Cell::new(2, 2)).unwrap().embedding;
        for c in [(1, 1), (1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2), (3, 3)] {
            w.blocked.insert(Cell::new(c.0, c.1));
        }
        let walled = enc.observe(&w, Cell::new(2, 2)).unwrap().embedding;
        assert!(open.cosine(&walled).unwrap() < 0.99);
        assert!(matches!(enc.observe(&w, Cell::new(1, 1)), Err(Error::Parameter(_))));
    }

    #[test]
    fn view_layout() {
        let mut w = GridWorld::open(4, 0);
        w.blocked.insert(Cell::new(0, 1));
        let v = render_view(&w, Cell::new(0, 0), true);
        assert_eq!(v.get(0, 0, 0), 0.0); // off-grid
        assert_eq!(v.get(2, 2, 0), 0.5); // agent
        assert_eq!(v.get(4, 2, 0), 0.0); // blocked east neighbour
        assert_eq!(v.get(3, 5, 0), 1.0); // open south
        assert_eq!(v.get(2, 2, 1), w.texture(Cell::new(0, 0)));
        assert_eq!(render_view(&w, Cell::new(0, 0), false).get(2, 2, 0), 1.0);
    }
}
