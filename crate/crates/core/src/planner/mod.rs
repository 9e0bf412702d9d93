//! Curvature-aware A* over the road graph, arc-length waypoint sampling and
//! canvas cropping around waypoints.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use ordered_float::OrderedFloat;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::canvas::{RasterTile, TopoGraph};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_INTERVAL: f64 = 7.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanQuery {
    pub start_node: usize,
    pub goal_node: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Edge ids treated as closed for this query.
    #[serde(default)]
    pub disabled_edges: HashSet<usize>,
}

impl PlanQuery {
    pub fn new(start_node: usize, goal_node: usize) -> Self {
        Self { start_node, goal_node, alpha: DEFAULT_ALPHA, beta: DEFAULT_BETA, disabled_edges: HashSet::new() }
    }

    pub fn with_weights(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WaypointPath {
    pub nodes: Vec<usize>,
    /// Edge taken between consecutive nodes.
    pub edges: Vec<usize>,
    pub waypoints: Vec<[f64; 2]>,
    pub total_cost: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Node positions and adjacency lists, keyed by dense index.
pub struct GraphIndex<'g> {
    graph: &'g TopoGraph,
    index: HashMap<usize, usize>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl<'g> GraphIndex<'g> {
    pub fn new(graph: &'g TopoGraph) -> Result<Self> {
        let mut index = HashMap::with_capacity(graph.nodes.len());
        for (i, n) in graph.nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(Error::Data(format!("duplicate node id {}", n.id)));
            }
        }
        let mut adj = vec![Vec::new(); graph.nodes.len()];
        for (k, e) in graph.edges.iter().enumerate() {
            let (a, b) = match (index.get(&e.a), index.get(&e.b)) {
                (Some(&a), Some(&b)) => (a, b),
                _ => return Err(Error::Lookup(format!("edge {} references a missing node", e.id))),
            };
            if a == b {
                continue;
            }
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        Ok(Self { graph, index, adj })
    }

    fn slot(&self, id: usize) -> Result<usize> {
        self.index.get(&id).copied().ok_or_else(|| Error::Lookup(format!("node {id}")))
    }

    fn pos(&self, slot: usize) -> [f64; 2] {
        self.graph.nodes[slot].position()
    }

    fn edge_cost(&self, k: usize, alpha: f64, beta: f64) -> f64 {
        let e = &self.graph.edges[k];
        let (a, b) = (self.index[&e.a], self.index[&e.b]);
        alpha * dist(self.pos(a), self.pos(b)) + beta * e.curvature
    }

    /// A* search; see [`astar`].
    pub fn astar(&self, q: &PlanQuery) -> Result<WaypointPath> {
        if !(q.alpha >= 0.0 && q.beta >= 0.0 && q.alpha.is_finite() && q.beta.is_finite()) {
            return Err(Error::Parameter(format!("weights must be non-negative, got alpha={} beta={}", q.alpha, q.beta)));
        }
        let (s, g) = (self.slot(q.start_node)?, self.slot(q.goal_node)?);
        let goal = self.pos(g);
        let h = |v: usize| q.alpha * dist(self.pos(v), goal);
        let n = self.graph.nodes.len();
        let mut best = vec![f64::INFINITY; n];
        let mut came: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        best[s] = 0.0;
        heap.push(Reverse((OrderedFloat(h(s)), self.graph.nodes[s].id, s, OrderedFloat(0.0))));
        while let Some(Reverse((_, _, v, OrderedFloat(gv)))) = heap.pop() {
            if gv > best[v] {
                continue;
            }
            if v == g {
                break;
            }
            for &(w, k) in &self.adj[v] {
                if q.disabled_edges.contains(&self.graph.edges[k].id) {
                    continue;
                }
                let cand = gv + self.edge_cost(k, q.alpha, q.beta);
                let better = cand < best[w]
                    || (cand == best[w] && came[w].is_some_and(|(pv, pk)| (v, k) < (pv, pk)) && w != s);
                if better {
                    best[w] = cand;
                    came[w] = Some((v, k));
                    heap.push(Reverse((OrderedFloat(cand + h(w)), self.graph.nodes[w].id, w, OrderedFloat(cand))));
                }
            }
        }
        if best[g].is_infinite() {
            return Err(Error::NoPath { start: q.start_node, goal: q.goal_node });
        }
        let mut slots = vec![g];
        let mut edges = Vec::new();
        while let Some((p, k)) = came[*slots.last().expect("non-empty")] {
            if *slots.last().expect("non-empty") == s {
                break;
            }
            slots.push(p);
            edges.push(self.graph.edges[k].id);
        }
        slots.reverse();
        edges.reverse();
        let start_pos = self.pos(s);
        Ok(WaypointPath {
            nodes: slots.iter().map(|&i| self.graph.nodes[i].id).collect(),
            edges,
            waypoints: vec![start_pos],
            total_cost: best[g],
        })
    }
}

/// Minimum-cost node path with edge cost `alpha * |v_i - v_j| + beta * kappa_ij`
/// and heuristic `alpha * |v - goal|`. Queue ties go to the lower node id.
/// Only nodes and cost are filled in; `waypoints` holds the start position.
pub fn astar(graph: &TopoGraph, q: &PlanQuery) -> Result<WaypointPath> {
    GraphIndex::new(graph)?.astar(q)
}

/// A* followed by waypoint sampling along the chosen edges.
pub fn plan(graph: &TopoGraph, q: &PlanQuery, interval: f64) -> Result<WaypointPath> {
    let mut path = astar(graph, q)?;
    path.waypoints = downsample_edges(graph, path.nodes[0], &path.edges, interval)?;
    Ok(path)
}

fn edge_by_id(graph: &TopoGraph, id: usize) -> Result<&crate::canvas::GraphEdge> {
    graph
        .edges
        .get(id)
        .filter(|e| e.id == id)
        .or_else(|| graph.edges.iter().find(|e| e.id == id))
        .ok_or_else(|| Error::Lookup(format!("edge {id}")))
}

/// Concatenated polyline of the edge sequence starting at `start`, with each
/// edge oriented in travel direction.
pub fn path_polyline(graph: &TopoGraph, start: usize, edges: &[usize]) -> Result<Vec<[f64; 2]>> {
    let mut pts = vec![graph.node(start)?.position()];
    let mut at = start;
    for &id in edges {
        let e = edge_by_id(graph, id)?;
        let forward = if e.a == at {
            true
        } else if e.b == at {
            false
        } else {
            return Err(Error::Precondition(format!("edge {id} does not leave node {at}")));
        };
        let mut poly = e.polyline.clone();
        if !forward {
            poly.reverse();
        }
        at = if forward { e.b } else { e.a };
        pts.extend(poly.into_iter().skip(1));
        *pts.last_mut().expect("non-empty") = graph.node(at)?.position();
    }
    Ok(pts)
}

/// Points every `interval` meters of arc length, plus the final endpoint.
pub fn sample_polyline(poly: &[[f64; 2]], interval: f64) -> Result<Vec<[f64; 2]>> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::Parameter(format!("interval must be positive, got {interval}")));
    }
    let Some(&first) = poly.first() else {
        return Err(Error::Parameter("empty polyline".into()));
    };
    let total: f64 = poly.windows(2).map(|w| dist(w[0], w[1])).sum();
    let mut out = vec![first];
    if total == 0.0 {
        return Ok(out);
    }
    let stop = total - 1e-9 * total.max(1.0);
    let mut k = 1usize;
    let mut walked = 0.0;
    for w in poly.windows(2) {
        let len = dist(w[0], w[1]);
        loop {
            let s = k as f64 * interval;
            if s >= stop || s > walked + len {
                break;
            }
            let t = (s - walked) / len;
            out.push([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]);
            k += 1;
        }
        walked += len;
    }
    out.push(*poly.last().expect("non-empty"));
    Ok(out)
}

/// Waypoints along an explicit edge sequence.
pub fn downsample_edges(graph: &TopoGraph, start: usize, edges: &[usize], interval: f64) -> Result<Vec<[f64; 2]>> {
    sample_polyline(&path_polyline(graph, start, edges)?, interval)
}

/// Waypoints along a node path. Between consecutive nodes the shortest
/// connecting edge is used (lowest id on ties).
pub fn downsample(nodes: &[usize], graph: &TopoGraph, interval: f64) -> Result<Vec<[f64; 2]>> {
    if nodes.is_empty() {
        return Err(Error::Parameter("empty node path".into()));
    }
    let mut edges = Vec::with_capacity(nodes.len().saturating_sub(1));
    for w in nodes.windows(2) {
        let e = graph
            .edges
            .iter()
            .filter(|e| (e.a == w[0] && e.b == w[1]) || (e.a == w[1] && e.b == w[0]))
            .min_by(|x, y| x.length.total_cmp(&y.length).then(x.id.cmp(&y.id)))
            .ok_or_else(|| Error::Precondition(format!("nodes {} and {} are not adjacent", w[0], w[1])))?;
        edges.push(e.id);
    }
    downsample_edges(graph, nodes[0], &edges, interval)
}

/// `size x size` crop centred on a world point; outside pixels are zero.
pub fn crop_patch(canvas: &RasterTile, center: [f64; 2], size: usize) -> Result<RasterTile> {
    if size == 0 {
        return Err(Error::Parameter("crop size must be positive".into()));
    }
    if !(center[0].is_finite() && center[1].is_finite()) {
        return Err(Error::Parameter("crop center must be finite".into()));
    }
    let [px, py] = canvas.world_to_pixel(center);
    let half = (size as f64 - 1.0) / 2.0;
    let col0 = (px - half + 0.5).floor() as i64;
    let row0 = (py - half + 0.5).floor() as i64;
    let origin = canvas.pixel_to_world(col0 as f64, row0 as f64);
    let mut out = RasterTile::blank(size, size, canvas.channels, origin, canvas.resolution);
    for r in 0..size {
        let sr = row0 + r as i64;
        if sr < 0 || sr >= canvas.height as i64 {
            continue;
        }
        for c in 0..size {
            let sc = col0 + c as i64;
            if sc < 0 || sc >= canvas.width as i64 {
                continue;
            }
            for ch in 0..canvas.channels {
                out.set(c, r, ch, canvas.get(sc as usize, sr as usize, ch));
            }
        }
    }
    Ok(out)
}

/// Connected random road graph: nodes uniform in a `extent x extent` square,
/// a random spanning tree plus `extra_edges` chords, each edge bent through a
/// jittered midpoint so curvatures vary.
pub fn random_graph(nodes: usize, extra_edges: usize, extent: f64, rng: &mut Rng) -> Result<TopoGraph> {
    if nodes == 0 {
        return Err(Error::Parameter("random graph needs nodes".into()));
    }
    let pos: Vec<[f64; 2]> = (0..nodes).map(|_| [rng.random_range(0.0..extent), rng.random_range(0.0..extent)]).collect();
    let mut pairs = HashSet::new();
    for v in 1..nodes {
        pairs.insert((rng.random_range(0..v), v));
    }
    let max_pairs = nodes * (nodes - 1) / 2;
    let target = (pairs.len() + extra_edges).min(max_pairs);
    while pairs.len() < target {
        let (a, b) = (rng.random_range(0..nodes), rng.random_range(0..nodes));
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let mut pairs: Vec<_> = pairs.into_iter().collect();
    pairs.sort_unstable();
    let mut edges = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let (pa, pb) = (pos[a], pos[b]);
        let bend = rng.random_range(-0.3..0.3);
        let mid = [
            (pa[0] + pb[0]) / 2.0 - bend * (pb[1] - pa[1]),
            (pa[1] + pb[1]) / 2.0 + bend * (pb[0] - pa[0]),
        ];
        edges.push((a, b, vec![pa, mid, pb]));
    }
    TopoGraph::from_parts(pos, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn dijkstra(graph: &TopoGraph, q: &PlanQuery) -> Option<f64> {
        let n = graph.nodes.len();
        let mut d = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        d[q.start_node] = 0.0;
        loop {
            let mut u = None;
            for v in 0..n {
                if !done[v] && d[v].is_finite() && u.is_none_or(|x: usize| d[v] < d[x]) {
                    u = Some(v);
                }
            }
            let u = u?;
            if u == q.goal_node {
                return Some(d[u]);
            }
            done[u] = true;
            for e in &graph.edges {
                if q.disabled_edges.contains(&e.id) || e.a == e.b {
                    continue;
                }
                let other = if e.a == u { e.b } else if e.b == u { e.a } else { continue };
                let p = |i: usize| graph.nodes[i].position();
                let c = q.alpha * dist(p(e.a), p(e.b)) + q.beta * e.curvature;
                if d[u] + c < d[other] {
                    d[other] = d[u] + c;
                }
            }
        }
    }

    fn chain() -> TopoGraph {
        TopoGraph::from_parts(
            vec![[0.0, 0.0], [3.0, 4.0], [3.0, 10.0]],
            vec![(0, 1, vec![[0.0, 0.0], [3.0, 4.0]]), (1, 2, vec![[3.0, 4.0], [3.0, 10.0]])],
        )
        .unwrap()
    }

    #[test]
    fn straight_chain_is_euclidean() {
        let p = astar(&chain(), &PlanQuery::new(0, 2).with_weights(1.0, 0.0)).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2]);
        assert_eq!(p.total_cost, 11.0);
        let p = astar(&chain(), &PlanQuery::new(1, 1)).unwrap();
        assert_eq!((p.nodes, p.total_cost), (vec![1], 0.0));
    }

    #[test]
    fn matches_dijkstra_on_random_graphs() {
        let mut r = rng::from_seed(41);
        for _ in 0..100 {
            let n = r.random_range(2..=50);
            let g = random_graph(n, r.random_range(0..2 * n), 100.0, &mut r).unwrap();
            let q = PlanQuery::new(r.random_range(0..n), r.random_range(0..n));
            let p = astar(&g, &q).unwrap();
            assert_eq!(Some(p.total_cost), dijkstra(&g, &q));
            for (w, e) in p.nodes.windows(2).zip(&p.edges) {
                let e = &g.edges[*e];
                assert!((e.a == w[0] && e.b == w[1]) || (e.a == w[1] && e.b == w[0]));
            }
        }
    }

    #[test]
    fn cost_monotone_in_beta_and_errors() {
        let mut r = rng::from_seed(42);
        let g = random_graph(30, 40, 100.0, &mut r).unwrap();
        let mut last = 0.0;
        for beta in [0.0, 0.5, 1.0, 5.0, 50.0] {
            let c = astar(&g, &PlanQuery::new(0, 29).with_weights(1.0, beta)).unwrap().total_cost;
            assert!(c >= last);
            last = c;
        }
        assert!(matches!(astar(&g, &PlanQuery::new(0, 99)), Err(Error::Lookup(_))));
        let mut q = PlanQuery::new(0, 2);
        q.disabled_edges.insert(1);
        assert!(matches!(astar(&chain(), &q), Err(Error::NoPath { start: 0, goal: 2 })));
    }

    #[test]
    fn downsample_straight_and_long_interval() {
        let g = TopoGraph::from_parts(vec![[0.0, 0.0], [10.0, 0.0]], vec![(0, 1, vec![[0.0, 0.0], [10.0, 0.0]])]).unwrap();
        assert_eq!(downsample(&[0, 1], &g, 5.0).unwrap(), vec![[0.0, 0.0], [5.0, 0.0], [10.0, 0.0]]);
        assert_eq!(downsample(&[1, 0], &g, 50.0).unwrap(), vec![[10.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(downsample(&[0, 1], &g, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn downsample_l_shape_matches_arc_length_oracle() {
        let g = TopoGraph::from_parts(
            vec![[0.0, 0.0], [4.0, 0.0], [4.0, 7.0]],
            vec![(0, 1, vec![[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]]), (2, 1, vec![[4.0, 7.0], [4.0, 0.0]])],
        )
        .unwrap();
        let w = downsample(&[0, 1, 2], &g, 3.0).unwrap();
        // arc length s maps to (s, 0) for s <= 4, else (4, s - 4)
        let oracle = |s: f64| if s <= 4.0 { [s, 0.0] } else { [4.0, s - 4.0] };
        let expected = [0.0, 3.0, 6.0, 9.0, 11.0].map(oracle);
        assert_eq!(w.len(), expected.len());
        for (a, b) in w.iter().zip(&expected) {
            assert!(dist(*a, *b) < 1e-9);
        }
    }

    #[test]
    fn crop_examples() {
        let mut t = RasterTile::blank(4, 4, 1, [10.0, 20.0], 2.0);
        for r in 0..4 {
            for c in 0..4 {
                t.set(c, r, 0, (r * 4 + c) as f64 / 16.0);
            }
        }
        let center = t.pixel_to_world(1.5, 1.5);
        assert_eq!(crop_patch(&t, center, 4).unwrap(), t);
        let one = crop_patch(&t, t.pixel_to_world(2.0, 3.0), 1).unwrap();
        assert_eq!(one.data, vec![t.get(2, 3, 0)]);
        assert_eq!(one.origin, t.pixel_to_world(2.0, 3.0));
        let corner = crop_patch(&t, t.pixel_to_world(0.0, 0.0), 5).unwrap();
        for r in 0..5i64 {
            for c in 0..5i64 {
                let (sc, sr) = (c - 2, r - 2);
                let expect = if sc >= 0 && sr >= 0 { t.get(sc as usize, sr as usize, 0) } else { 0.0 };
                assert_eq!(corner.get(c as usize, r as usize, 0), expect);
            }
        }
        assert!(crop_patch(&t, [f64::NAN, 0.0], 2).is_err());
    }
}
