//! Raster canvas to navigable graph: patch encoding, prototype similarity,
//! adaptive thresholding, thinning and graph tracing.

pub mod curvature;
pub mod encoder;
pub mod graph;
pub mod io;
pub mod prototypes;
pub mod raster;
pub mod render;
pub mod skeleton;
pub mod threshold;

pub use curvature::{estimate_curvature, polyline_length};
pub use encoder::{encode_tile, PatchEncoder};
pub use graph::{extract_graph, GraphEdge, GraphNode, TopoGraph};
pub use prototypes::{build_prototypes, similarity_map, PrototypeConfig, PrototypeSet};
pub use raster::{FeatureMap, Grid, PathMask, RasterTile};
pub use skeleton::{prune_spurs, skeletonize};
pub use threshold::adaptive_threshold;

use crate::error::Result;

/// Intermediate products of [`extract_canvas`].
#[derive(Debug, Clone)]
pub struct CanvasProducts {
    pub similarity: Grid,
    pub mask: PathMask,
    pub skeleton: PathMask,
    pub graph: TopoGraph,
}

/// Default maximal length (in skeleton cells) of pruned terminal spurs.
pub const DEFAULT_SPUR_LENGTH: usize = 2;

/// Runs encode, similarity, threshold, thinning, spur pruning and tracing on
/// one tile.
pub fn extract_canvas(tile: &RasterTile, encoder: &PatchEncoder, protos: &PrototypeSet) -> Result<CanvasProducts> {
    extract_canvas_with(tile, encoder, protos, DEFAULT_SPUR_LENGTH)
}

pub fn extract_canvas_with(
    tile: &RasterTile,
    encoder: &PatchEncoder,
    protos: &PrototypeSet,
    max_spur: usize,
) -> Result<CanvasProducts> {
    let fm = encoder.encode(tile)?;
    let similarity = similarity_map(&fm, protos)?;
    let mask = adaptive_threshold(&similarity)?;
    let skeleton = prune_spurs(&skeletonize(&mask), max_spur);
    let graph = extract_graph(&skeleton, tile)?;
    Ok(CanvasProducts { similarity, mask, skeleton, graph })
}
