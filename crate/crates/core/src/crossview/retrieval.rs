use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embedding::{Embedding, UNIT_TOLERANCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    #[serde(rename = "tileId")]
    pub tile_id: u64,
    pub x: f64,
    pub y: f64,
    pub embedding: Embedding,
}

/// Immutable set of satellite tile embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub tile_ids: Vec<u64>,
    pub scores: Vec<f64>,
    /// `k` exceeded the index size and was clamped.
    pub clamped: bool,
}

impl RetrievalIndex {
    pub fn new(entries: Vec<IndexEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        let dim = entries.first().map(|e| e.embedding.dim());
        for e in &entries {
            if !seen.insert(e.tile_id) {
                return Err(Error::Parameter(format!("duplicate tileId {}", e.tile_id)));
            }
            if Some(e.embedding.dim()) != dim {
                return Err(Error::Dimension("index embeddings differ in dimension".into()));
            }
            let n = super::embedding::norm(e.embedding.as_slice());
            if (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::Parameter(format!("tile {} embedding has norm {n}", e.tile_id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, tile_id: u64) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.tile_id == tile_id)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<IndexEntry> = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        Self::new(entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.entries)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Top-k tiles by descending cosine, ties by ascending tileId.
pub fn retrieve(query: &Embedding, index: &RetrievalIndex, k: usize) -> Result<Ranking> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    if index.is_empty() {
        return Err(Error::Parameter("empty retrieval index".into()));
    }
    let mut scored = index
        .entries
        .iter()
        .map(|e| Ok((query.cosine(&e.embedding)?, e.tile_id)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let clamped = k > scored.len();
    scored.truncate(k);
    Ok(Ranking { tile_ids: scored.iter().map(|s| s.1).collect(), scores: scored.iter().map(|s| s.0).collect(), clamped })
}

/// Rank (0-based) of `target` among all tiles, using the same ordering as [`retrieve`].
pub fn rank_of(query: &Embedding, index: &RetrievalIndex, target: u64) -> Result<usize> {
    let t = index.get(target).ok_or_else(|| Error::Lookup(format!("tile {target}")))?;
    let ts = query.cosine(&t.embedding)?;
    let mut rank = 0;
    for e in &index.entries {
        let s = query.cosine(&e.embedding)?;
        if s.total_cmp(&ts) == Ordering::Greater || (s.total_cmp(&ts) == Ordering::Equal && e.tile_id < target) {
            rank += 1;
        }
    }
    Ok(rank)
}
