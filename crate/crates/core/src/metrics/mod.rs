//! Retrieval and planning metrics.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::crossview::Embedding;
use crate::error::{Error, Result};
use crate::nav::{Cell, EmbeddingTable, GridWorld};

pub const DEFAULT_HIT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_VCS_WAYPOINTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RankedResult {
    pub query_id: u64,
    pub ranked_ids: Vec<u64>,
    /// Relevant candidates; retrieval benchmarks usually have exactly one.
    pub truth_ids: Vec<u64>,
}

impl RankedResult {
    pub fn single(query_id: u64, ranked_ids: Vec<u64>, truth_id: u64) -> Self {
        Self { query_id, ranked_ids, truth_ids: vec![truth_id] }
    }
}

/// Fraction of queries with a relevant id among the first `k` ranked ids.
pub fn topk_recall(results: &[RankedResult], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    if results.is_empty() {
        return Err(Error::Parameter("no retrieval results".into()));
    }
    let hits = results
        .iter()
        .filter(|r| r.ranked_ids.iter().take(k).any(|id| r.truth_ids.contains(id)))
        .count();
    Ok(hits as f64 / results.len() as f64)
}

/// Recall at `k = ceil(0.01 * candidates)`.
pub fn top_one_percent_recall(results: &[RankedResult], candidates: usize) -> Result<f64> {
    topk_recall(results, (candidates as f64 * 0.01).ceil().max(1.0) as usize)
}

/// Step-interpolated area under the precision-recall curve for one query.
pub fn query_average_precision(ranked: &[u64], relevant: &HashSet<u64>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let total = relevant.len() as f64;
    let mut found = 0usize;
    let mut ap = 0.0;
    for (i, id) in ranked.iter().enumerate() {
        if relevant.contains(id) {
            found += 1;
            // recall rises by 1/|relevant| exactly here
            ap += (found as f64 / (i + 1) as f64) / total;
        }
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApReport {
    pub mean_ap: f64,
    pub evaluated: usize,
    pub excluded: usize,
}

/// Mean AP over queries with at least one relevant id.
pub fn average_precision(results: &[RankedResult]) -> ApReport {
    let mut sum = 0.0;
    let mut evaluated = 0;
    for r in results {
        let rel: HashSet<u64> = r.truth_ids.iter().copied().collect();
        if let Some(ap) = query_average_precision(&r.ranked_ids, &rel) {
            sum += ap;
            evaluated += 1;
        }
    }
    ApReport {
        mean_ap: if evaluated > 0 { sum / evaluated as f64 } else { 0.0 },
        evaluated,
        excluded: results.len() - evaluated,
    }
}

/// Axis-aligned world rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Footprint {
    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]).max(0.0) * (self.max[1] - self.min[1]).max(0.0)
    }
}

/// Share of the ground footprint covered by the tile footprint.
pub fn overlap_fraction(ground: &Footprint, tile: &Footprint) -> f64 {
    let a = ground.area();
    if a <= 0.0 {
        return 0.0;
    }
    let w = (ground.max[0].min(tile.max[0]) - ground.min[0].max(tile.min[0])).max(0.0);
    let h = (ground.max[1].min(tile.max[1]) - ground.min[1].max(tile.min[1])).max(0.0);
    w * h / a
}

/// Fraction of queries whose top-1 overlap reaches `threshold`.
pub fn hit_rate(results: &[RankedResult], overlaps: &HashMap<u64, f64>, threshold: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Parameter("no retrieval results".into()));
    }
    let mut hits = 0;
    for r in results {
        let o = overlaps.get(&r.query_id).ok_or_else(|| Error::Data(format!("no overlap score for query {}", r.query_id)))?;
        if *o >= threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn directed_hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| dist(*p, *q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two point sets.
pub fn trajectory_similarity(generated: &[[f64; 2]], reference: &[[f64; 2]]) -> Result<f64> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::Parameter("trajectories must be non-empty".into()));
    }
    Ok(directed_hausdorff(generated, reference).max(directed_hausdorff(reference, generated)))
}

/// Inserts evenly spaced points so no gap along the polyline exceeds `step`.
pub fn densify(points: &[[f64; 2]], step: f64) -> Result<Vec<[f64; 2]>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Parameter(format!("densify step must be positive, got {step}")));
    }
    let mut out: Vec<[f64; 2]> = points.first().copied().into_iter().collect();
    for w in points.windows(2) {
        let n = (dist(w[0], w[1]) / step).ceil().max(1.0) as usize;
        for i in 1..=n {
            let t = i as f64 / n as f64;
            out.push([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPair {
    pub generated: Vec<[f64; 2]>,
    pub reference: Vec<[f64; 2]>,
    pub goal: [f64; 2],
}

/// Traversability of world points.
pub trait RoadMask {
    fn on_road(&self, p: [f64; 2]) -> bool;
}

impl RoadMask for GridWorld {
    fn on_road(&self, p: [f64; 2]) -> bool {
        self.cell_of(p).is_some_and(|c| self.is_open(c))
    }
}

pub fn episode_success(pair: &TrajectoryPair, radius: f64, mask: &impl RoadMask) -> bool {
    let Some(&last) = pair.generated.last() else { return false };
    dist(last, pair.goal) <= radius && pair.generated.iter().all(|&p| mask.on_road(p))
}

/// Fraction of episodes ending within `radius` of the goal with every point on the road.
pub fn success_rate(pairs: &[TrajectoryPair], radius: f64, mask: &impl RoadMask) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Parameter("no episodes".into()));
    }
    Ok(pairs.iter().filter(|p| episode_success(p, radius, mask)).count() as f64 / pairs.len() as f64)
}

/// `min(m, len)` evenly spaced indices, always ending at the last point.
pub fn waypoint_indices(len: usize, m: usize) -> Vec<usize> {
    let n = m.min(len);
    (0..n).map(|k| (k + 1) * len / n - 1).collect()
}

/// Mean cosine between ground and satellite embeddings at evenly spaced waypoints.
pub fn visual_consistency<T>(
    trajectory: &[T],
    m: usize,
    ground: impl Fn(&T) -> Result<Embedding>,
    satellite: impl Fn(&T) -> Result<Embedding>,
) -> Result<f64> {
    if trajectory.is_empty() || m == 0 {
        return Err(Error::Parameter("visual consistency needs at least one waypoint".into()));
    }
    let idx = waypoint_indices(trajectory.len(), m);
    let mut sum = 0.0;
    for &i in &idx {
        sum += ground(&trajectory[i])?.cosine(&satellite(&trajectory[i])?)?;
    }
    Ok(sum / idx.len() as f64)
}

/// Grid-world VCS from precomputed ground/satellite tables.
pub fn grid_visual_consistency(world: &GridWorld, table: &EmbeddingTable, cells: &[Cell], m: usize) -> Result<f64> {
    visual_consistency(cells, m, |c| table.ground(world, *c).cloned(), |c| table.satellite(world, *c).cloned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_examples() {
        let r = vec![RankedResult::single(0, vec![4, 9, 7, 1], 7)];
        assert_eq!(topk_recall(&r, 1).unwrap(), 0.0);
        assert_eq!(topk_recall(&r, 5).unwrap(), 1.0);
        assert!(topk_recall(&[], 1).is_err());
        assert_eq!(top_one_percent_recall(&r, 250).unwrap(), 1.0); // k = 3
        assert_eq!(top_one_percent_recall(&r, 200).unwrap(), 0.0); // k = 2
    }

    #[test]
    fn ap_examples() {
        let ap = |ranked: Vec<u64>, rel: Vec<u64>| average_precision(&[RankedResult { query_id: 0, ranked_ids: ranked, truth_ids: rel }]);
        assert_eq!(ap(vec![1, 2, 3], vec![1]).mean_ap, 1.0);
        assert_eq!(ap(vec![2, 1, 3], vec![1]).mean_ap, 0.5);
        assert!((ap(vec![1, 2, 3], vec![1, 3]).mean_ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        let r = ap(vec![1, 2], vec![]);
        assert_eq!((r.evaluated, r.excluded), (0, 1));
    }

    #[test]
    fn hit_rate_examples() {
        let r = vec![RankedResult::single(1, vec![1], 1), RankedResult::single(2, vec![2], 2)];
        let o: HashMap<u64, f64> = [(1, 0.6), (2, 0.4)].into();
        assert_eq!(hit_rate(&r, &o, 0.5).unwrap(), 0.5);
        assert!(matches!(hit_rate(&r, &[(1, 0.6)].into(), 0.5), Err(Error::Data(_))));
        let g = Footprint { min: [0.0, 0.0], max: [2.0, 2.0] };
        assert_eq!(overlap_fraction(&g, &Footprint { min: [1.0, 1.0], max: [5.0, 5.0] }), 0.25);
    }

    #[test]
    fn ts_examples() {
        let a = vec![[0.0, 0.0], [1.0, 2.0], [5.0, 5.0]];
        assert_eq!(trajectory_similarity(&a, &a).unwrap(), 0.0);
        let b: Vec<[f64; 2]> = a.iter().map(|p| [p[0] + 3.0, p[1] + 4.0]).collect();
        assert_eq!(trajectory_similarity(&a, &b).unwrap(), 5.0);
        let d = densify(&[[0.0, 0.0], [2.5, 0.0]], 1.0).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d[3], [2.5, 0.0]);
    }

    #[test]
    fn success_examples() {
        let mut w = GridWorld::open(3, 0);
        w.blocked.insert(Cell::new(1, 1));
        let goal = w.cell_center(Cell::new(0, 2));
        let pair = |pts: Vec<[f64; 2]>| TrajectoryPair { generated: pts, reference: vec![goal], goal };
        assert!(episode_success(&pair(vec![[5.0, 5.0], [15.0, 5.0], goal]), 5.0, &w));
        assert!(!episode_success(&pair(vec![[5.0, 5.0], [goal[0], goal[1] + 6.0]]), 5.0, &w));
        assert!(!episode_success(&pair(vec![[5.0, 5.0], [15.0, 15.0], goal]), 5.0, &w));
    }

    #[test]
    fn waypoint_spacing() {
        assert_eq!(waypoint_indices(4, 16), vec![0, 1, 2, 3]);
        assert_eq!(waypoint_indices(32, 16), (0..16).map(|k| 2 * k + 1).collect::<Vec<_>>());
        assert_eq!(*waypoint_indices(50, 16).last().unwrap(), 49);
    }
}
