//! Exact cosine top-k index over every vector in the store.
//!
//! Norms are cached at upsert time; a search is one pass with a bounded
//! min-heap, so results are exact and deterministic (ties go to the smaller
//! key).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::embed::{check_dim, Vector};
use crate::error::Result;
use crate::ids::{LogicId, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "layer", content = "id", rename_all = "snake_case")]
pub enum IndexKey {
    Episodic(NodeId),
    Semantic(NodeId),
    LogicGoal(LogicId),
    LogicStep(LogicId),
}

#[derive(Clone, Debug)]
struct Entry {
    vector: Vector,
    norm: f64,
}

#[derive(Clone, Debug)]
pub struct VectorIndex {
    dim: usize,
    entries: BTreeMap<IndexKey, Entry>,
}

#[derive(PartialEq)]
struct Ranked(f64, IndexKey);

impl Eq for Ranked {}

impl Ord for Ranked {
    // "Greater" means better: higher score, then smaller key.
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        VectorIndex { dim, entries: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts `vector` under `key`, replacing any earlier vector.
    pub fn upsert(&mut self, key: IndexKey, vector: Vector) -> Result<()> {
        check_dim(self.dim, vector.dim())?;
        let norm = vector.norm();
        self.entries.insert(key, Entry { vector, norm });
        Ok(())
    }

    pub fn remove(&mut self, key: &IndexKey) -> bool {
        self.entries.remove(key).is_some()
    }

    pub fn get(&self, key: &IndexKey) -> Option<&Vector> {
        self.entries.get(key).map(|e| &e.vector)
    }

    fn score(q: &[f64], q_norm: f64, e: &Entry) -> f64 {
        if q_norm == 0.0 || e.norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = q.iter().zip(e.vector.as_slice()).map(|(a, b)| a * b).sum();
        dot / (q_norm * e.norm)
    }

    /// Cosine of `q` against one entry.
    pub fn similarity(&self, q: &Vector, key: &IndexKey) -> Result<Option<f64>> {
        check_dim(self.dim, q.dim())?;
        Ok(self.entries.get(key).map(|e| Self::score(q.as_slice(), q.norm(), e)))
    }

    /// Exact top-`k` by cosine, best first.
    pub fn search(&self, q: &Vector, k: usize) -> Result<Vec<(IndexKey, f64)>> {
        self.search_filtered(q, k, |_| true)
    }

    pub fn search_filtered<F>(&self, q: &Vector, k: usize, keep: F) -> Result<Vec<(IndexKey, f64)>>
    where
        F: Fn(&IndexKey) -> bool,
    {
        check_dim(self.dim, q.dim())?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let qs = q.as_slice();
        let qn = q.norm();
        // Min-heap of the best k seen so far (Reverse ordering via negation of Ord).
        let mut heap: BinaryHeap<std::cmp::Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
        for (key, e) in &self.entries {
            if !keep(key) {
                continue;
            }
            let r = Ranked(Self::score(qs, qn, e), *key);
            if heap.len() < k {
                heap.push(std::cmp::Reverse(r));
            } else if let Some(worst) = heap.peek() {
                if r > worst.0 {
                    heap.pop();
                    heap.push(std::cmp::Reverse(r));
                }
            }
        }
        let mut out: Vec<Ranked> = heap.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        Ok(out.into_iter().map(|Ranked(s, k)| (k, s)).collect())
    }

    /// Cosine against every entry, in key order.
    pub fn scores(&self, q: &Vector) -> Result<Vec<(IndexKey, f64)>> {
        check_dim(self.dim, q.dim())?;
        let qs = q.as_slice();
        let qn = q.norm();
        Ok(self.entries.iter().map(|(k, e)| (*k, Self::score(qs, qn, e))).collect())
    }
}
