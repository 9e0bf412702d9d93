//! Raster input (binary PGM/PPM plus a text sidecar) and graph JSON output.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

use super::graph::{GraphEdge, GraphNode, TopoGraph};
use super::raster::RasterTile;
use crate::error::{Error, Result};

/// Sidecar path for a raster: the raster path with `.hdr` appended.
pub fn sidecar_path(raster: &Path) -> PathBuf {
    let mut s = raster.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Parses `origin_x origin_y resolution`; blank lines and `#` comments are skipped.
pub fn parse_sidecar(text: &str, path: &Path) -> Result<([f64; 2], f64)> {
    let mut found = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if found.is_some() {
            return Err(Error::format(path, format!("line {}: unexpected extra content", lineno + 1)));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::format(
                path,
                format!("line {}: expected `origin_x origin_y resolution`, found {} fields", lineno + 1, fields.len()),
            ));
        }
        let mut vals = [0.0; 3];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::format(path, format!("line {}: `{f}` is not a finite number", lineno + 1)))?;
        }
        if vals[2] <= 0.0 {
            return Err(Error::format(path, format!("line {}: resolution must be positive", lineno + 1)));
        }
        found = Some(([vals[0], vals[1]], vals[2]));
    }
    found.ok_or_else(|| Error::format(path, "line 1: missing `origin_x origin_y resolution` header"))
}

/// Reads a P5/P6 raster and its sidecar header.
pub fn read_raster(path: &Path) -> Result<RasterTile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header_path = sidecar_path(path);
    let header = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let (origin, resolution) = parse_sidecar(&header, &header_path)?;
    if !(bytes.starts_with(b"P5") || bytes.starts_with(b"P6")) {
        return Err(Error::format(path, "not a binary PGM (P5) or PPM (P6) file"));
    }
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (channels, width, height, data): (usize, usize, usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(g) => (1, g.width() as usize, g.height() as usize, g.into_raw().iter().map(|v| *v as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(g) => (1, g.width() as usize, g.height() as usize, g.into_raw().iter().map(|v| *v as f64 / 65535.0).collect()),
        DynamicImage::ImageRgb8(g) => (3, g.width() as usize, g.height() as usize, g.into_raw().iter().map(|v| *v as f64 / 255.0).collect()),
        DynamicImage::ImageRgb16(g) => (3, g.width() as usize, g.height() as usize, g.into_raw().iter().map(|v| *v as f64 / 65535.0).collect()),
        other => return Err(Error::format(path, format!("unsupported pixel layout {:?}", other.color()))),
    };
    RasterTile::new(width, height, channels, data, origin, resolution)
}

/// Writes a 1- or 3-channel tile as 8-bit P5/P6 plus its sidecar.
pub fn write_raster(path: &Path, tile: &RasterTile) -> Result<()> {
    let (subtype, color) = match tile.channels {
        1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
        3 => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
        c => return Err(Error::Parameter(format!("cannot write a {c}-channel raster as PNM"))),
    };
    let bytes: Vec<u8> = tile.data.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(&bytes, tile.width as u32, tile.height as u32, color)
        .map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let header = format!("{} {} {}\n", tile.origin[0], tile.origin[1], tile.resolution);
    let hp = sidecar_path(path);
    fs::write(&hp, header).map_err(|e| Error::io(&hp, e))
}

/// Rounds to 6 decimal places (micrometers).
pub fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
}

pub fn graph_to_json(graph: &TopoGraph) -> Result<String> {
    let doc = GraphDoc {
        nodes: graph
            .nodes
            .iter()
            .map(|n| GraphNode { id: n.id, x: round6(n.x), y: round6(n.y) })
            .collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| GraphEdge {
                id: e.id,
                a: e.a,
                b: e.b,
                polyline: e.polyline.iter().map(|p| [round6(p[0]), round6(p[1])]).collect(),
                length: round6(e.length),
                curvature: round6(e.curvature),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn write_graph(path: &Path, graph: &TopoGraph) -> Result<()> {
    fs::write(path, graph_to_json(graph)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_graph(path: &Path) -> Result<TopoGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: GraphDoc = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(TopoGraph { nodes: doc.nodes, edges: doc.edges })
}
