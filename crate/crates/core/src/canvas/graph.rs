//! Raster-to-graph tracing.
//!
//! Junction pixels (three or more skeleton neighbours) that touch each other
//! are merged into a single node placed at the member closest to the cluster
//! centroid. End pixels (one neighbour) and isolated pixels are nodes of their
//! own. Edges are the maximal chains of two-neighbour pixels between nodes;
//! closed loops without any node are anchored at their lowest pixel index.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::curvature::{estimate_curvature, polyline_length};
use super::raster::{PathMask, RasterTile, NEIGHBORS_8};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

impl GraphNode {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub id: usize,
    pub a: usize,
    pub b: usize,
    pub polyline: Vec<[f64; 2]>,
    pub length: f64,
    pub curvature: f64,
}

/// Navigable topological map: junction/end nodes joined by traced polylines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopoGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl TopoGraph {
    /// Builds a graph from nodes and polylines, filling in lengths and
    /// curvatures. Polylines must start and end at their endpoint nodes.
    pub fn from_parts(nodes: Vec<[f64; 2]>, edges: Vec<(usize, usize, Vec<[f64; 2]>)>) -> Result<Self> {
        let nodes: Vec<GraphNode> =
            nodes.into_iter().enumerate().map(|(id, p)| GraphNode { id, x: p[0], y: p[1] }).collect();
        let mut out = TopoGraph { nodes, edges: Vec::with_capacity(edges.len()) };
        for (a, b, polyline) in edges {
            out.push_edge(a, b, polyline)?;
        }
        Ok(out)
    }

    pub(crate) fn push_edge(&mut self, a: usize, b: usize, polyline: Vec<[f64; 2]>) -> Result<usize> {
        if a >= self.nodes.len() || b >= self.nodes.len() {
            return Err(Error::Lookup(format!("edge endpoint {a} or {b} is not a node")));
        }
        let length = polyline_length(&polyline);
        let curvature = estimate_curvature(&polyline)?;
        let id = self.edges.len();
        self.edges.push(GraphEdge { id, a, b, polyline, length, curvature });
        Ok(id)
    }

    pub fn node(&self, id: usize) -> Result<&GraphNode> {
        self.nodes.get(id).filter(|n| n.id == id).or_else(|| self.nodes.iter().find(|n| n.id == id))
            .ok_or_else(|| Error::Lookup(format!("node {id}")))
    }

    /// Incident edge count per node id (self-loops count twice).
    pub fn degrees(&self) -> BTreeMap<usize, usize> {
        let mut deg: BTreeMap<usize, usize> = self.nodes.iter().map(|n| (n.id, 0)).collect();
        for e in &self.edges {
            *deg.entry(e.a).or_default() += 1;
            *deg.entry(e.b).or_default() += 1;
        }
        deg
    }

    /// Connected components, counting isolated nodes.
    pub fn component_count(&self) -> usize {
        let index: BTreeMap<usize, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, index[&e.a]), find(&mut parent, index[&e.b]));
            parent[a] = b;
        }
        (0..self.nodes.len()).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// Checks the structural invariants of the graph.
    pub fn validate(&self, tolerance: f64) -> Result<()> {
        let ids: HashSet<usize> = self.nodes.iter().map(|n| n.id).collect();
        if ids.len() != self.nodes.len() {
            return Err(Error::Data("duplicate node ids".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.edges {
            let (a, b) = (self.node(e.a)?, self.node(e.b)?);
            let (first, last) = match (e.polyline.first(), e.polyline.last()) {
                (Some(f), Some(l)) => (*f, *l),
                _ => return Err(Error::Data(format!("edge {} has an empty polyline", e.id))),
            };
            let near = |p: [f64; 2], n: &GraphNode| (p[0] - n.x).hypot(p[1] - n.y) <= tolerance;
            if !near(first, a) || !near(last, b) {
                return Err(Error::Data(format!("edge {} polyline does not meet its nodes", e.id)));
            }
            if !(e.length > 0.0) || e.curvature < 0.0 {
                return Err(Error::Data(format!("edge {} has invalid length or curvature", e.id)));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(Error::Data(format!("duplicate edge between {} and {}", e.a, e.b)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Background,
    Chain,
    Node(usize),
}

struct Tracer<'a> {
    mask: &'a PathMask,
    roles: Vec<Role>,
    cell_size: f64,
    offset: f64,
    origin: [f64; 2],
    graph: TopoGraph,
    /// Pixel of each node used as its geometric anchor.
    anchors: Vec<usize>,
    visited_steps: HashSet<(usize, usize)>,
    visited_chain: Vec<bool>,
    pairs: HashSet<(usize, usize)>,
}

impl Tracer<'_> {
    fn world(&self, idx: usize) -> [f64; 2] {
        let (c, r) = (idx % self.mask.grid_width, idx / self.mask.grid_width);
        [
            self.origin[0] + c as f64 * self.cell_size + self.offset,
            self.origin[1] + r as f64 * self.cell_size + self.offset,
        ]
    }

    fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let w = self.mask.grid_width;
        let (c, r) = ((idx % w) as i64, (idx / w) as i64);
        NEIGHBORS_8.iter().filter_map(move |(dc, dr)| {
            let (nc, nr) = (c + dc, r + dr);
            self.mask.get_signed(nc, nr).then(|| nr as usize * w + nc as usize)
        })
    }

    fn add_node(&mut self, anchor: usize) -> usize {
        let id = self.graph.nodes.len();
        let p = self.world(anchor);
        self.graph.nodes.push(GraphNode { id, x: p[0], y: p[1] });
        self.anchors.push(anchor);
        id
    }

    /// Walks from node pixel `start` through neighbour `first`.
    fn trace(&mut self, start: usize, first: usize) -> Result<()> {
        if self.visited_steps.contains(&(start, first)) {
            return Ok(());
        }
        let Role::Node(from) = self.roles[start] else { unreachable!("trace starts on a node") };
        if self.roles[first] == Role::Node(from) {
            return Ok(());
        }
        self.visited_steps.insert((start, first));
        let mut chain = Vec::new();
        let (mut prev, mut cur) = (start, first);
        let to = loop {
            match self.roles[cur] {
                Role::Node(n) => {
                    self.visited_steps.insert((cur, prev));
                    break n;
                }
                Role::Chain => {
                    self.visited_chain[cur] = true;
                    chain.push(cur);
                    let next = self
                        .neighbors(cur)
                        .find(|&n| n != prev)
                        .ok_or_else(|| Error::Precondition("dangling chain pixel".into()))?;
                    prev = cur;
                    cur = next;
                }
                Role::Background => unreachable!("neighbours are foreground"),
            }
        };
        self.emit(from, to, chain)
    }

    fn emit(&mut self, from: usize, to: usize, chain: Vec<usize>) -> Result<()> {
        let key = (from.min(to), from.max(to));
        if self.pairs.contains(&key) && chain.is_empty() {
            // direct link already represented by the existing edge
            return Ok(());
        }
        if self.pairs.contains(&key) {
            // a parallel chain between the same nodes: split it in the middle
            let mid = chain.len() / 2;
            let m = self.add_node(chain[mid]);
            self.roles[chain[mid]] = Role::Node(m);
            self.emit(from, m, chain[..mid].to_vec())?;
            return self.emit(m, to, chain[mid + 1..].to_vec());
        }
        self.pairs.insert(key);
        let mut polyline = Vec::with_capacity(chain.len() + 2);
        polyline.push(self.graph.nodes[from].position());
        polyline.extend(chain.iter().map(|&i| self.world(i)));
        polyline.push(self.graph.nodes[to].position());
        self.graph.push_edge(from, to, polyline)?;
        Ok(())
    }
}

/// Traces a width-1 skeleton into a [`TopoGraph`] in the tile's world frame.
///
/// The skeleton grid may be coarser than the tile (one cell per encoder
/// patch); cell centres are mapped to world meters.
pub fn extract_graph(skeleton: &PathMask, tile: &RasterTile) -> Result<TopoGraph> {
    if let Some((c, r)) = skeleton.find_block() {
        return Err(Error::Precondition(format!("skeleton has a 2x2 block at ({c}, {r})")));
    }
    let (w, h) = (skeleton.grid_width, skeleton.grid_height);
    if w == 0 || h == 0 {
        return Ok(TopoGraph::default());
    }
    if tile.width % w != 0 || tile.height % h != 0 || tile.width / w != tile.height / h {
        return Err(Error::Dimension(format!(
            "skeleton {w}x{h} is not a uniform subsampling of tile {}x{}",
            tile.width, tile.height
        )));
    }
    let patch = (tile.width / w) as f64;
    let mut tracer = Tracer {
        mask: skeleton,
        roles: vec![Role::Background; w * h],
        cell_size: patch * tile.resolution,
        offset: (patch - 1.0) / 2.0 * tile.resolution,
        origin: tile.origin,
        graph: TopoGraph::default(),
        anchors: Vec::new(),
        visited_steps: HashSet::new(),
        visited_chain: vec![false; w * h],
        pairs: HashSet::new(),
    };

    let degree: Vec<usize> = (0..w * h)
        .map(|i| if skeleton.bits[i] { skeleton.neighbor_count(i % w, i / w) } else { 0 })
        .collect();
    for i in 0..w * h {
        if skeleton.bits[i] {
            tracer.roles[i] = Role::Chain;
        }
    }

    // Nodes in raster order of their first pixel.
    for i in 0..w * h {
        if !skeleton.bits[i] || tracer.roles[i] != Role::Chain {
            continue;
        }
        match degree[i] {
            0 | 1 => {
                let id = tracer.add_node(i);
                tracer.roles[i] = Role::Node(id);
            }
            d if d >= 3 => {
                let mut cluster = vec![i];
                let mut k = 0;
                let mut members: HashSet<usize> = HashSet::from([i]);
                while k < cluster.len() {
                    let cur = cluster[k];
                    k += 1;
                    for n in tracer.neighbors(cur).collect::<Vec<_>>() {
                        if degree[n] >= 3 && members.insert(n) {
                            cluster.push(n);
                        }
                    }
                }
                cluster.sort_unstable();
                let centroid = cluster.iter().fold([0.0, 0.0], |acc, &p| {
                    [acc[0] + (p % w) as f64, acc[1] + (p / w) as f64]
                });
                let centroid = [centroid[0] / cluster.len() as f64, centroid[1] / cluster.len() as f64];
                let anchor = *cluster
                    .iter()
                    .min_by(|&&a, &&b| {
                        let d = |p: usize| ((p % w) as f64 - centroid[0]).hypot((p / w) as f64 - centroid[1]);
                        d(a).total_cmp(&d(b)).then(a.cmp(&b))
                    })
                    .expect("cluster is non-empty");
                let id = tracer.add_node(anchor);
                for p in cluster {
                    tracer.roles[p] = Role::Node(id);
                }
            }
            _ => {}
        }
    }

    let node_pixels: Vec<usize> = (0..w * h).filter(|&i| matches!(tracer.roles[i], Role::Node(_))).collect();
    for p in node_pixels {
        for n in tracer.neighbors(p).collect::<Vec<_>>() {
            tracer.trace(p, n)?;
        }
    }

    // Closed loops made only of chain pixels.
    for i in 0..w * h {
        if tracer.roles[i] == Role::Chain && !tracer.visited_chain[i] {
            let id = tracer.add_node(i);
            tracer.roles[i] = Role::Node(id);
            for n in tracer.neighbors(i).collect::<Vec<_>>() {
                tracer.trace(i, n)?;
            }
        }
    }
    Ok(tracer.graph)
}
