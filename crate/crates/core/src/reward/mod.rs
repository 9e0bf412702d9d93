//! Geo-consistent rewards: transition classes from a BFS progress map, the
//! progress and geometric-alignment terms, and group-relative advantages.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crossview::Embedding;
use crate::error::{Error, Result};
use crate::nav::{Cell, GridWorld};

pub const ALPHA_OPTIMAL: f64 = 1.0;
pub const ALPHA_NON_OPTIMAL: f64 = 0.0;
pub const ALPHA_INVALID: f64 = -5.0;
pub const DEFAULT_BETA_GEO: f64 = 0.5;
pub const STD_EPS: f64 = 1e-12;

/// BFS hop distance of every cell to the current subgoal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressMap {
    pub subgoal: Cell,
    pub distances: Vec<Option<u32>>,
}

impl ProgressMap {
    pub fn new(world: &GridWorld, subgoal: Cell) -> Result<Self> {
        if !world.is_open(subgoal) {
            return Err(Error::Parameter(format!("subgoal {subgoal:?} is not traversable")));
        }
        Ok(Self { subgoal, distances: world.distances_to(subgoal) })
    }

    pub fn get(&self, world: &GridWorld, c: Cell) -> Option<u32> {
        if c.row >= world.size || c.col >= world.size {
            return None;
        }
        self.distances[world.index(c)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionClass {
    Optimal,
    NonOptimal,
    Invalid,
}

impl TransitionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TransitionClass::Optimal => "optimal",
            TransitionClass::NonOptimal => "non-optimal",
            TransitionClass::Invalid => "invalid",
        }
    }
}

/// Invalid unless `to` is `from` itself or an open 4-neighbour; Optimal when
/// the progress distance drops by exactly one.
pub fn parse_transition(world: &GridWorld, from: Cell, to: Option<Cell>, progress: &ProgressMap) -> TransitionClass {
    let Some(to) = to else { return TransitionClass::Invalid };
    if !world.is_open(to) || from.manhattan(to) > 1 {
        return TransitionClass::Invalid;
    }
    match (progress.get(world, from), progress.get(world, to)) {
        (Some(df), Some(dt)) if dt + 1 == df => TransitionClass::Optimal,
        _ => TransitionClass::NonOptimal,
    }
}

pub fn r_prog(class: TransitionClass) -> f64 {
    match class {
        TransitionClass::Optimal => ALPHA_OPTIMAL,
        TransitionClass::NonOptimal => ALPHA_NON_OPTIMAL,
        TransitionClass::Invalid => ALPHA_INVALID,
    }
}

/// Cosine between the ground embedding of the predicted state and the next
/// waypoint's satellite embedding.
pub fn r_geo(predicted: &Embedding, z_next: &Embedding) -> Result<f64> {
    predicted.cosine(z_next)
}

/// `(r - mean) / std` with population std; an (almost) constant group
/// gets all-zero advantages.
pub fn group_advantage(r_totals: &[f64]) -> Result<Vec<f64>> {
    if r_totals.len() < 2 {
        return Err(Error::Parameter(format!("group needs at least 2 rewards, got {}", r_totals.len())));
    }
    let n = r_totals.len() as f64;
    let mean = r_totals.iter().sum::<f64>() / n;
    let std = (r_totals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(std >= STD_EPS) {
        return Ok(vec![0.0; r_totals.len()]);
    }
    Ok(r_totals.iter().map(|r| (r - mean) / std).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CandidateReward {
    pub class: TransitionClass,
    pub r_prog: f64,
    pub r_geo: f64,
    pub r_total: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBundle {
    pub candidates: Vec<CandidateReward>,
}

impl RewardBundle {
    /// Combines per-candidate terms and normalizes within the group.
    pub fn score(terms: &[(TransitionClass, f64)], beta: f64) -> Result<Self> {
        let totals: Vec<f64> = terms.iter().map(|&(c, g)| r_prog(c) + beta * g).collect();
        let adv = group_advantage(&totals)?;
        Ok(Self {
            candidates: terms
                .iter()
                .zip(totals.iter().zip(adv))
                .map(|(&(class, r_geo), (&r_total, advantage))| CandidateReward {
                    class,
                    r_prog: r_prog(class),
                    r_geo,
                    r_total,
                    advantage,
                })
                .collect(),
        })
    }

    pub fn advantages(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.advantage).collect()
    }

    pub fn mean_total(&self) -> f64 {
        self.candidates.iter().map(|c| c.r_total).sum::<f64>() / self.candidates.len().max(1) as f64
    }
}

/// One reward-trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode: usize,
    pub step: usize,
    pub k: usize,
    pub reward: CandidateReward,
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "episode,step,k,class,rProg,rGeo,rTotal,advantage").expect("write to Vec");
    for r in rows {
        let c = &r.reward;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.episode,
            r.step,
            r.k,
            c.class.as_str(),
            c.r_prog,
            c.r_geo,
            c.r_total,
            c.advantage
        )
        .expect("write to Vec");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nav::{generate_world, step, Action};
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn transition_classes() {
        // 5x5 world with a wall segment; subgoal at (0, 4)
        let mut w = GridWorld::open(5, 0);
        for r in 1..4 {
            w.blocked.insert(Cell::new(r, 2));
        }
        let pm = ProgressMap::new(&w, Cell::new(0, 4)).unwrap();
        let from = Cell::new(2, 1);
        assert_eq!(parse_transition(&w, from, step(&w, from, Action::Up), &pm), TransitionClass::Optimal);
        assert_eq!(parse_transition(&w, from, step(&w, from, Action::Right), &pm), TransitionClass::Invalid);
        assert_eq!(parse_transition(&w, from, step(&w, from, Action::Down), &pm), TransitionClass::NonOptimal);
        // hand BFS: D(2,1)=5 via (1,1),(0,1),(0,2),(0,3),(0,4); D(2,0)=6
        assert_eq!(pm.get(&w, from), Some(5));
        assert_eq!(pm.get(&w, Cell::new(2, 0)), Some(6));
        assert_eq!(parse_transition(&w, from, Some(from), &pm), TransitionClass::NonOptimal);
        assert_eq!(parse_transition(&w, from, Some(Cell::new(0, 1)), &pm), TransitionClass::Invalid);
    }

    #[test]
    fn progress_triangle_property() {
        for seed in 0..10 {
            let w = generate_world(8, 0.3, seed).unwrap();
            let open = w.open_cells();
            let pm = ProgressMap::new(&w, open[seed as usize % open.len()]).unwrap();
            assert_eq!(pm.get(&w, pm.subgoal), Some(0));
            for &c in &open {
                for (_, n) in w.neighbors(c) {
                    let (a, b) = (pm.get(&w, c).unwrap(), pm.get(&w, n).unwrap());
                    assert!(a.abs_diff(b) <= 1);
                }
            }
        }
    }

    #[test]
    fn r_prog_values() {
        assert_eq!(r_prog(TransitionClass::Optimal), 1.0);
        assert_eq!(r_prog(TransitionClass::NonOptimal), 0.0);
        assert_eq!(r_prog(TransitionClass::Invalid), -5.0);
    }

    #[test]
    fn r_geo_cases() {
        let mut r = rng::from_seed(51);
        let a = Embedding::normalize((0..8).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let neg = Embedding::normalize(a.as_slice().iter().map(|v| -v).collect()).unwrap();
        assert!((r_geo(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((r_geo(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        let b = Embedding::normalize((0..8).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let dot: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
        assert!((r_geo(&a, &b).unwrap() - dot).abs() < 1e-12);
    }

    #[test]
    fn advantage_cases() {
        assert_eq!(group_advantage(&[2.0; 5]).unwrap(), vec![0.0; 5]);
        assert_eq!(group_advantage(&[1.0, -1.0]).unwrap(), vec![1.0, -1.0]);
        assert!(group_advantage(&[1.0]).is_err());
        let mut r = rng::from_seed(52);
        let x: Vec<f64> = (0..16).map(|_| r.random_range(-5.0..2.0)).collect();
        let a = group_advantage(&x).unwrap();
        let mean = a.iter().sum::<f64>() / 16.0;
        let std = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0).sqrt();
        assert!(mean.abs() < 1e-9 && (std - 1.0).abs() < 1e-9);
        let shifted: Vec<f64> = x.iter().map(|v| 3.0 * v + 7.0).collect();
        for (p, q) in a.iter().zip(group_advantage(&shifted).unwrap()) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn bundle_totals_and_csv() {
        let b = RewardBundle::score(&[(TransitionClass::Optimal, 1.0), (TransitionClass::Invalid, 0.2)], 0.5).unwrap();
        assert_eq!(b.candidates[0].r_total, 1.5);
        assert!((b.candidates[1].r_total + 4.9).abs() < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows: Vec<TraceRow> =
            b.candidates.iter().enumerate().map(|(k, c)| TraceRow { episode: 0, step: 3, k, reward: c.clone() }).collect();
        write_trace_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("episode,step,k,class,rProg,rGeo,rTotal,advantage\n0,3,0,optimal,1,1,1.5,1\n"));
    }
}
