//! The in-memory store, its snapshot format, and the global invariant sweep.
//!
//! A store on disk is a directory holding one `snapshot.json` and, while a
//! writer is active, a `LOCK` file. The snapshot is compact JSON whose first
//! field is the format version. Floats are written in shortest round-trip
//! decimal form, so every vector reloads bit-identically.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::distill::LogicNode;
use crate::embed::{Embedder, HashEmbedder};
use crate::error::{MemoryError, Result};
use crate::ids::{AnchorId, IdCounters, LogicId, NodeId, ObservationId};
use crate::index::{IndexKey, VectorIndex};
use crate::ingest::{EntityAnchor, EpisodicNode, SemanticNode};
use crate::maintain::CandidatePool;

pub const SNAPSHOT_VERSION: u32 = 1;
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const LOCK_FILE: &str = "LOCK";

/// Episodic nodes produced by one ingested observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationEntry {
    pub video: String,
    pub t: f64,
    pub episodic: Vec<NodeId>,
}

pub struct MemoryStore {
    pub(crate) config: Config,
    pub(crate) embedder: Arc<dyn Embedder>,
    pub(crate) anchors: BTreeMap<AnchorId, EntityAnchor>,
    pub(crate) episodic: BTreeMap<NodeId, EpisodicNode>,
    pub(crate) semantic: BTreeMap<NodeId, SemanticNode>,
    pub(crate) logic: BTreeMap<LogicId, LogicNode>,
    pub(crate) observations: BTreeMap<ObservationId, ObservationEntry>,
    pub(crate) pool: CandidatePool,
    pub(crate) counters: IdCounters,
    pub(crate) percepts_ingested: u64,
    pub(crate) last_time: BTreeMap<String, f64>,
    pub(crate) index: VectorIndex,
    reads: AtomicU64,
}

impl Clone for MemoryStore {
    fn clone(&self) -> Self {
        MemoryStore {
            config: self.config.clone(),
            embedder: Arc::clone(&self.embedder),
            anchors: self.anchors.clone(),
            episodic: self.episodic.clone(),
            semantic: self.semantic.clone(),
            logic: self.logic.clone(),
            observations: self.observations.clone(),
            pool: self.pool.clone(),
            counters: self.counters.clone(),
            percepts_ingested: self.percepts_ingested,
            last_time: self.last_time.clone(),
            index: self.index.clone(),
            reads: AtomicU64::new(self.reads.load(Ordering::Relaxed)),
        }
    }
}

impl std::fmt::Debug for MemoryStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemoryStore").field("stats", &self.stats()).finish()
    }
}

/// Layer sizes and totals reported by `stats`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreStats {
    pub anchors: usize,
    pub episodic: usize,
    pub semantic: usize,
    pub logic: usize,
    pub observations: usize,
    pub dag_nodes: usize,
    pub dag_edges: usize,
    pub transition_total: f64,
    pub logic_to_epi_edges: usize,
    pub logic_to_sem_edges: usize,
    pub epi_sem_edges: usize,
    pub pool: usize,
}

/// Cross-layer edge lists; episodic-semantic links go through shared anchors.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossLayerEdges {
    pub logic_to_epi: Vec<(LogicId, NodeId)>,
    pub logic_to_sem: Vec<(LogicId, NodeId)>,
    pub epi_sem: Vec<(NodeId, NodeId)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub version: u32,
    pub config: Config,
    pub counters: IdCounters,
    pub percepts_ingested: u64,
    pub anchors: Vec<EntityAnchor>,
    pub episodic: Vec<EpisodicNode>,
    pub semantic: Vec<SemanticNode>,
    pub logic: Vec<LogicNode>,
    pub observations: BTreeMap<ObservationId, ObservationEntry>,
    pub pool: CandidatePool,
    pub edges: CrossLayerEdges,
}

impl MemoryStore {
    pub fn new(config: Config) -> Result<Self> {
        let embedder = Arc::new(HashEmbedder::new(config.dim.max(1)));
        Self::with_embedder(config, embedder)
    }

    pub fn with_embedder(config: Config, embedder: Arc<dyn Embedder>) -> Result<Self> {
        config.validate()?;
        if embedder.dim() != config.dim {
            return Err(MemoryError::DimensionMismatch { expected: config.dim, found: embedder.dim() });
        }
        Ok(MemoryStore {
            index: VectorIndex::new(config.dim),
            pool: CandidatePool::default(),
            config,
            embedder,
            anchors: BTreeMap::new(),
            episodic: BTreeMap::new(),
            semantic: BTreeMap::new(),
            logic: BTreeMap::new(),
            observations: BTreeMap::new(),
            counters: IdCounters::new(),
            percepts_ingested: 0,
            last_time: BTreeMap::new(),
            reads: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Replaces tunable parameters; the dimension must not change.
    pub fn set_config(&mut self, config: Config) -> Result<()> {
        config.validate()?;
        if config.dim != self.config.dim {
            return Err(MemoryError::Config(format!(
                "dim is fixed at {} for this store, config asks for {}",
                self.config.dim, config.dim
            )));
        }
        self.config = config;
        Ok(())
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn anchors(&self) -> impl Iterator<Item = &EntityAnchor> {
        self.anchors.values()
    }

    pub fn anchor(&self, id: AnchorId) -> Option<&EntityAnchor> {
        self.anchors.get(&id)
    }

    /// Anchor by id (`a3` or `3`) or by label.
    pub fn find_anchor(&self, name: &str) -> Option<AnchorId> {
        let lower = name.trim().trim_start_matches('@').to_lowercase();
        if let Ok(n) = lower.trim_start_matches('a').parse::<u64>() {
            if self.anchors.contains_key(&AnchorId(n)) {
                return Some(AnchorId(n));
            }
        }
        self.anchors.values().find(|a| a.label == lower).map(|a| a.id)
    }

    pub fn episodic_nodes(&self) -> impl Iterator<Item = &EpisodicNode> {
        self.episodic.values()
    }

    pub fn episodic_node(&self, id: NodeId) -> Option<&EpisodicNode> {
        self.episodic.get(&id)
    }

    pub fn semantic_nodes(&self) -> impl Iterator<Item = &SemanticNode> {
        self.semantic.values()
    }

    pub fn semantic_node(&self, id: NodeId) -> Option<&SemanticNode> {
        self.semantic.get(&id)
    }

    pub fn logic_nodes(&self) -> impl Iterator<Item = &LogicNode> {
        self.logic.values()
    }

    pub fn logic_node(&self, id: LogicId) -> Option<&LogicNode> {
        self.logic.get(&id)
    }

    pub fn observation(&self, id: ObservationId) -> Option<&ObservationEntry> {
        self.observations.get(&id)
    }

    pub fn pool(&self) -> &CandidatePool {
        &self.pool
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn percepts_ingested(&self) -> u64 {
        self.percepts_ingested
    }

    /// Number of top-level read queries served so far.
    pub fn read_count(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn reset_read_count(&self) {
        self.reads.store(0, Ordering::Relaxed);
    }

    pub(crate) fn count_read(&self) {
        self.reads.fetch_add(1, Ordering::Relaxed);
    }

    pub fn index_upsert(&mut self, key: IndexKey, vector: crate::embed::Vector) -> Result<()> {
        self.index.upsert(key, vector)
    }

    pub fn index_search(&self, q: &crate::embed::Vector, k: usize) -> Result<Vec<(IndexKey, f64)>> {
        self.index.search(q, k)
    }

    pub(crate) fn upsert_logic_index(&mut self, id: LogicId) -> Result<()> {
        let node = self.logic.get(&id).ok_or(MemoryError::UnknownLogic(id))?;
        let (g, s) = (node.i_goal.clone(), node.i_step.clone());
        self.index.upsert(IndexKey::LogicGoal(id), g)?;
        self.index.upsert(IndexKey::LogicStep(id), s)
    }

    pub(crate) fn remove_logic(&mut self, id: LogicId) -> Option<LogicNode> {
        self.index.remove(&IndexKey::LogicGoal(id));
        self.index.remove(&IndexKey::LogicStep(id));
        self.logic.remove(&id)
    }

    pub fn cross_layer_edges(&self) -> CrossLayerEdges {
        let mut by_anchor_sem: BTreeMap<AnchorId, Vec<NodeId>> = BTreeMap::new();
        for s in self.semantic.values() {
            for a in &s.anchors {
                by_anchor_sem.entry(*a).or_default().push(s.id);
            }
        }
        let mut epi_sem = BTreeSet::new();
        for e in self.episodic.values() {
            for a in &e.anchors {
                for s in by_anchor_sem.get(a).into_iter().flatten() {
                    epi_sem.insert((e.id, *s));
                }
            }
        }
        let mut logic_to_epi = Vec::new();
        let mut logic_to_sem = BTreeSet::new();
        for l in self.logic.values() {
            logic_to_epi.extend(l.episodic_links.iter().map(|e| (l.id, *e)));
            for a in &l.anchors {
                for s in by_anchor_sem.get(a).into_iter().flatten() {
                    logic_to_sem.insert((l.id, *s));
                }
            }
        }
        CrossLayerEdges {
            logic_to_epi,
            logic_to_sem: logic_to_sem.into_iter().collect(),
            epi_sem: epi_sem.into_iter().collect(),
        }
    }

    pub fn stats(&self) -> StoreStats {
        let edges = self.cross_layer_edges();
        StoreStats {
            anchors: self.anchors.len(),
            episodic: self.episodic.len(),
            semantic: self.semantic.len(),
            logic: self.logic.len(),
            observations: self.observations.len(),
            dag_nodes: self.logic.values().map(|l| l.dag.node_count()).sum(),
            dag_edges: self.logic.values().map(|l| l.dag.edge_count()).sum(),
            transition_total: self.logic.values().map(|l| l.dag.total_count()).sum(),
            logic_to_epi_edges: edges.logic_to_epi.len(),
            logic_to_sem_edges: edges.logic_to_sem.len(),
            epi_sem_edges: edges.epi_sem.len(),
            pool: self.pool.len(),
        }
    }

    pub fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_VERSION,
            config: self.config.clone(),
            counters: self.counters.clone(),
            percepts_ingested: self.percepts_ingested,
            anchors: self.anchors.values().cloned().collect(),
            episodic: self.episodic.values().cloned().collect(),
            semantic: self.semantic.values().cloned().collect(),
            logic: self.logic.values().cloned().collect(),
            observations: self.observations.clone(),
            pool: self.pool.clone(),
            edges: self.cross_layer_edges(),
        }
    }

    pub fn from_snapshot(snap: Snapshot) -> Result<Self> {
        let corrupt = |m: String| MemoryError::CorruptSnapshot(m);
        if snap.version != SNAPSHOT_VERSION {
            return Err(corrupt(format!("unsupported snapshot version {}", snap.version)));
        }
        snap.config.validate().map_err(|e| corrupt(e.to_string()))?;
        let mut store = MemoryStore::new(snap.config)?;
        store.counters = snap.counters;
        store.percepts_ingested = snap.percepts_ingested;
        for a in snap.anchors {
            if store.anchors.insert(a.id, a).is_some() {
                return Err(corrupt("duplicate anchor id".into()));
            }
        }
        for e in snap.episodic {
            store.index.upsert(IndexKey::Episodic(e.id), e.v_e.clone()).map_err(|x| corrupt(x.to_string()))?;
            if store.episodic.insert(e.id, e).is_some() {
                return Err(corrupt("duplicate episodic id".into()));
            }
        }
        for s in snap.semantic {
            store.index.upsert(IndexKey::Semantic(s.id), s.v_s.clone()).map_err(|x| corrupt(x.to_string()))?;
            if store.episodic.contains_key(&s.id) || store.semantic.insert(s.id, s).is_some() {
                return Err(corrupt("duplicate semantic id".into()));
            }
        }
        for l in snap.logic {
            let id = l.id;
            if store.logic.insert(id, l).is_some() {
                return Err(corrupt("duplicate logic id".into()));
            }
            store.upsert_logic_index(id).map_err(|x| corrupt(x.to_string()))?;
        }
        store.observations = snap.observations;
        for o in store.observations.values() {
            let t = store.last_time.entry(o.video.clone()).or_insert(o.t);
            if o.t > *t {
                *t = o.t;
            }
        }
        store.pool = snap.pool;
        let problems = store.check();
        if let Some(first) = problems.first() {
            return Err(corrupt(first.clone()));
        }
        if store.cross_layer_edges() != snap.edges {
            return Err(corrupt("cross-layer edge lists do not match the layers".into()));
        }
        Ok(store)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(&self.to_snapshot()).expect("snapshot serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snap: Snapshot =
            serde_json::from_str(text).map_err(|e| MemoryError::CorruptSnapshot(e.to_string()))?;
        Self::from_snapshot(snap)
    }

    /// Writes `dir/snapshot.json` atomically (temp file + rename).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, self.to_json())?;
        fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(SNAPSHOT_FILE))?;
        Self::from_json(&text)
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(SNAPSHOT_FILE).is_file()
    }

    /// Global invariant sweep. Returns human-readable problems; empty when the
    /// store is consistent.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.config.dim;
        if let Err(e) = self.config.validate() {
            out.push(e.to_string());
        }
        let c = &self.counters;
        let mut anchor_total = 0u64;
        for a in self.anchors.values() {
            if a.id.0 >= c.next_anchor {
                out.push(format!("anchor {} is beyond the id counter", a.id));
            }
            if a.centroid_face.is_none() && a.centroid_voice.is_none() {
                out.push(format!("anchor {} has no centroid", a.id));
            }
            for v in a.centroid_face.iter().chain(a.centroid_voice.iter()) {
                if v.dim() != d {
                    out.push(format!("anchor {} centroid has dimension {}", a.id, v.dim()));
                }
            }
            if a.face_count + a.voice_count != a.count {
                out.push(format!("anchor {} counts disagree", a.id));
            }
            anchor_total += a.count;
        }
        if anchor_total != self.percepts_ingested {
            out.push(format!(
                "anchor counts sum to {anchor_total} but {} percepts were ingested",
                self.percepts_ingested
            ));
        }
        for e in self.episodic.values() {
            if e.id.0 >= c.next_node {
                out.push(format!("episodic {} is beyond the id counter", e.id));
            }
            if e.v_e.dim() != d || e.v_e != self.embedder.embed(&e.d) {
                out.push(format!("episodic {} vector is not embed(d)", e.id));
            }
            for a in &e.anchors {
                if !self.anchors.contains_key(a) {
                    out.push(format!("episodic {} references missing anchor {a}", e.id));
                }
            }
            match self.observations.get(&e.observation) {
                Some(o) if o.episodic.contains(&e.id) => {}
                _ => out.push(format!("episodic {} is not listed under observation {}", e.id, e.observation)),
            }
        }
        for o in self.observations.values() {
            for n in &o.episodic {
                if !self.episodic.contains_key(n) {
                    out.push(format!("observation lists missing episodic node {n}"));
                }
            }
        }
        for s in self.semantic.values() {
            if s.id.0 >= c.next_node {
                out.push(format!("semantic {} is beyond the id counter", s.id));
            }
            if s.weight < 1 {
                out.push(format!("semantic {} has non-positive weight {}", s.id, s.weight));
            }
            if s.v_s.dim() != d || s.v_s != self.embedder.embed(&s.attrs) {
                out.push(format!("semantic {} vector is not embed(attrs)", s.id));
            }
            for a in &s.anchors {
                if !self.anchors.contains_key(a) {
                    out.push(format!("semantic {} references missing anchor {a}", s.id));
                }
            }
        }
        for l in self.logic.values() {
            if l.id.0 >= c.next_logic {
                out.push(format!("logic {} is beyond the id counter", l.id));
            }
            if l.i_goal.dim() != d || l.i_step.dim() != d {
                out.push(format!("logic {} index vectors have the wrong dimension", l.id));
            }
            if l.episodic_links.is_empty() {
                out.push(format!("logic {} has no episodic links", l.id));
            }
            let mut anchors = BTreeSet::new();
            for e in &l.episodic_links {
                match self.episodic.get(e) {
                    Some(n) => anchors.extend(n.anchors.iter().copied()),
                    None => out.push(format!("logic {} links missing episodic node {e}", l.id)),
                }
            }
            if anchors != l.anchors {
                out.push(format!("logic {} anchor set is not the union over its evidence", l.id));
            }
            for v in l.dag.check_valid() {
                out.push(format!("logic {}: {v}", l.id));
            }
            for v in 0..l.dag.node_count() {
                let outs: Vec<_> = l.dag.out_edges(v).map(|(t, _)| t).collect();
                if outs.is_empty() {
                    continue;
                }
                let total: f64 = outs.iter().filter_map(|&t| l.dag.transition_prob(v, t).ok()).sum();
                if (total - 1.0).abs() > 1e-9 {
                    out.push(format!("logic {}: out-probabilities of {} sum to {total}", l.id, l.dag.label(v)));
                }
            }
        }
        for p in &self.pool.entries {
            if !self.observations.contains_key(&p.observation) {
                out.push(format!("pool entry references unknown observation {}", p.observation));
            }
            if p.vector.dim() != d {
                out.push(format!("pool entry {} has the wrong dimension", p.observation));
            }
        }
        let expected_index = self.episodic.len() + self.semantic.len() + 2 * self.logic.len();
        if self.index.len() != expected_index {
            out.push(format!("index holds {} vectors, layers hold {expected_index}", self.index.len()));
        }
        out
    }
}

/// Advisory single-writer lock on a store directory, released on drop.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(dir: &Path) -> Result<StoreLock> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(StoreLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(MemoryError::Locked(dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
