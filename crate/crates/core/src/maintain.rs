//! Incremental maintenance: gating, EMA refinement of index vectors,
//! transition counting, DAG expansion, and the candidate pool.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dag::{Attrs, DagIx, EdgeStats, ProceduralDag, GOAL, START};
use crate::distill::{ActionSequence, ArrowGoalNamer, LogicNode, SupportVerifier};
use crate::embed::{check_dim, cosine, Vector};
use crate::error::{MemoryError, Result};
use crate::ids::{LogicId, NodeId, ObservationId};
use crate::ingest::ObservationRecord;
use crate::store::MemoryStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub observation: ObservationId,
    pub vector: Vector,
    pub actions: Vec<String>,
}

/// Observations that matched no LogicNode above the gate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub entries: Vec<PoolEntry>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Expansion {
    Node { label: String },
    Edge { from: String, to: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolEvent {
    pub pooled: bool,
    pub pool_size: usize,
    pub distilled: Vec<LogicId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub observation: ObservationId,
    pub matched: Option<LogicId>,
    pub similarity: Option<f64>,
    pub updated: bool,
    pub incremented: Vec<(String, String)>,
    pub expansions: Vec<Expansion>,
    pub rejected_cycle: Vec<(String, String)>,
    pub pool: PoolEvent,
}

/// `i <- beta * i + (1 - beta) * o` on both index vectors, without renormalizing.
pub fn ema_update(node: &mut LogicNode, o_vec: &Vector, beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(MemoryError::InvalidInput(format!("beta = {beta} is outside [0, 1]")));
    }
    check_dim(node.i_goal.dim(), o_vec.dim())?;
    check_dim(node.i_step.dim(), o_vec.dim())?;
    node.i_goal.blend_toward(o_vec, beta)?;
    node.i_step.blend_toward(o_vec, beta)?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq)]
struct SequenceOutcome {
    incremented: Vec<(String, String)>,
    expansions: Vec<Expansion>,
    rejected_cycle: Vec<(String, String)>,
}

/// Ties steps added by an expansion to START / GOAL with zero-count edges
/// when they have no predecessor / successor, so every step stays on a
/// START-GOAL path.
fn scaffold(dag: &mut ProceduralDag, created: &[DagIx]) {
    for &ix in created {
        if dag.in_degree(ix) == 0 {
            dag.set_edge(START, ix, EdgeStats::new(0.0, 1.0));
        }
        if dag.out_edges(ix).next().is_none() {
            dag.set_edge(ix, GOAL, EdgeStats::new(0.0, 1.0));
        }
    }
}

/// Applies one record's consecutive action pairs to `dag`: an existing edge
/// is incremented; otherwise missing steps (with the description attrs) and
/// the edge (count 1, gamma 1) are inserted, unless the edge would close a
/// cycle.
fn apply_sequence(dag: &mut ProceduralDag, steps: &[(String, Attrs)]) -> SequenceOutcome {
    let mut out = SequenceOutcome::default();
    let mut created = Vec::new();
    for w in steps.windows(2) {
        let ((from, fa), (to, ta)) = (&w[0], &w[1]);
        let pair = (from.clone(), to.clone());
        let a = dag.find_step(from);
        let b = dag.find_step(to);
        if let (Some(a), Some(b)) = (a, b) {
            if dag.edge(a, b).is_some() {
                dag.observe_transition(a, b);
                out.incremented.push(pair);
                continue;
            }
            if a == b || dag.would_create_cycle(a, b) {
                out.rejected_cycle.push(pair);
                continue;
            }
        }
        if a.is_none() && from == to {
            out.rejected_cycle.push(pair);
            continue;
        }
        let mut ensure = |dag: &mut ProceduralDag, ix: Option<DagIx>, label: &str, attrs: &Attrs| {
            ix.unwrap_or_else(|| {
                out.expansions.push(Expansion::Node { label: label.to_string() });
                let ix = dag.add_step(label, attrs.clone());
                created.push(ix);
                ix
            })
        };
        let a = ensure(dag, a, from, fa);
        let b = ensure(dag, b, to, ta);
        dag.set_edge(a, b, EdgeStats::new(1.0, 1.0));
        out.expansions.push(Expansion::Edge { from: pair.0, to: pair.1 });
    }
    scaffold(dag, &created);
    out
}

impl MemoryStore {
    /// Best LogicNode by `max(cos(o, i_goal), cos(o, i_step))`; ties go to the
    /// lowest id.
    pub fn match_logic(&self, o_vec: &Vector) -> Result<Option<(LogicId, f64)>> {
        let mut best: Option<(LogicId, f64)> = None;
        for (id, n) in &self.logic {
            let s = cosine(o_vec, &n.i_goal)?.max(cosine(o_vec, &n.i_step)?);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((*id, s));
            }
        }
        Ok(best)
    }

    fn record_actions(&self, episodic: &[NodeId]) -> Vec<(NodeId, String)> {
        episodic
            .iter()
            .filter_map(|id| {
                let e = self.episodic.get(id)?;
                Some((*id, e.action.clone()?))
            })
            .collect()
    }

    fn record_steps(&self, episodic: &[NodeId]) -> Vec<(String, Attrs)> {
        self.record_actions(episodic)
            .into_iter()
            .map(|(id, a)| (a, self.episodic[&id].attrs.clone()))
            .collect()
    }

    /// Phase-3 update for an already-ingested record.
    pub fn apply_observation(&mut self, rec: &ObservationRecord) -> Result<UpdateReport> {
        let entry = self.observations.get(&rec.id).ok_or(MemoryError::NotIngested(rec.id))?.clone();
        let o_vec = self.embedder.embed(&rec.joined_text());
        let actions = self.record_actions(&entry.episodic);
        let steps = self.record_steps(&entry.episodic);
        let mut report = UpdateReport { observation: rec.id, ..Default::default() };

        let matched = self.match_logic(&o_vec)?;
        if let Some((id, sim)) = matched {
            report.matched = Some(id);
            report.similarity = Some(sim);
        }
        match matched {
            Some((id, sim)) if sim > self.config.delta_gate => {
                let beta = self.config.beta_ema;
                let node = self.logic.get_mut(&id).expect("matched node exists");
                ema_update(node, &o_vec, beta)?;
                let SequenceOutcome { incremented, expansions, rejected_cycle } =
                    apply_sequence(&mut node.dag, &steps);
                report.incremented = incremented;
                report.expansions = expansions;
                report.rejected_cycle = rejected_cycle;
                for (nid, action) in &actions {
                    let e = &self.episodic[nid];
                    if let Some(ix) = node.dag.find_step(action) {
                        if let Some(n) = node.dag.node_mut(ix) {
                            n.record_outcome(e.outcome.is_success());
                        }
                    }
                }
                for nid in &entry.episodic {
                    if node.episodic_links.insert(*nid) {
                        node.anchors.extend(self.episodic[nid].anchors.iter().copied());
                    }
                }
                node.dag.ensure_valid()?;
                report.updated = true;
                self.upsert_logic_index(id)?;
            }
            _ => {
                self.pool.entries.push(PoolEntry {
                    observation: rec.id,
                    vector: o_vec,
                    actions: actions.into_iter().map(|(_, a)| a).collect(),
                });
                report.pool.pooled = true;
                if self.pool.len() >= self.config.pool_trigger {
                    report.pool.distilled = self.distill_pool()?;
                }
                report.pool.pool_size = self.pool.len();
            }
        }
        Ok(report)
    }

    /// Distillation cycle over pooled observations, one sequence per entry.
    /// The pool is cleared afterwards.
    pub fn distill_pool(&mut self) -> Result<Vec<LogicId>> {
        self.require_default_components()?;
        let seqs: Vec<ActionSequence> = self
            .pool
            .entries
            .iter()
            .filter_map(|p| {
                let entry = self.observations.get(&p.observation)?;
                let acts = self.record_actions(&entry.episodic);
                Some(ActionSequence {
                    video: format!("{}#{}", entry.video, p.observation),
                    actions: acts.iter().map(|(_, a)| a.clone()).collect(),
                    nodes: acts.iter().map(|(n, _)| *n).collect(),
                })
            })
            .collect();
        let created = self.distill_sequences(&seqs, &SupportVerifier, &ArrowGoalNamer)?;
        self.pool.entries.clear();
        Ok(created)
    }

    /// Ingests `rec` if it is new, then applies it.
    pub fn observe(&mut self, rec: &ObservationRecord) -> Result<UpdateReport> {
        if !self.observations.contains_key(&rec.id) {
            self.ingest_observation(rec)?;
        }
        self.apply_observation(rec)
    }
}

/// Streams `records` through [`MemoryStore::observe`] on a copy of `store`,
/// then rebuilds each touched DAG from its starting state in one batch: a
/// structural pass replays expansions record by record in arrival order, and
/// a counting pass adds every accepted pair occurrence. Returns whether edge
/// sets, counts and cycle rejections agree. Index vectors are not compared.
pub fn rebuild_vs_incremental_check(store: &MemoryStore, records: &[ObservationRecord]) -> Result<bool> {
    let mut live = store.clone();
    let mut base: BTreeMap<LogicId, ProceduralDag> =
        live.logic.iter().map(|(id, n)| (*id, n.dag.clone())).collect();
    let mut routed: BTreeMap<LogicId, Vec<Vec<(String, Attrs)>>> = BTreeMap::new();
    let mut rejected_live: BTreeMap<LogicId, Vec<(String, String)>> = BTreeMap::new();

    for rec in records {
        let report = live.observe(rec)?;
        for id in &report.pool.distilled {
            base.insert(*id, live.logic[id].dag.clone());
        }
        if !report.updated {
            continue;
        }
        let id = report.matched.expect("updated implies matched");
        let steps = live.record_steps(&live.observations[&rec.id].episodic);
        routed.entry(id).or_default().push(steps);
        rejected_live.entry(id).or_default().extend(report.rejected_cycle);
    }

    for (id, batches) in &routed {
        let Some(start) = base.get(id) else {
            return Ok(false);
        };
        let mut batch = start.clone();
        let mut accepted: Vec<(DagIx, DagIx)> = Vec::new();
        let mut rejected = Vec::new();
        // Structural pass: missing nodes and edges get zero counts.
        for steps in batches {
            let mut created = Vec::new();
            for w in steps.windows(2) {
                let ((from, fa), (to, ta)) = (&w[0], &w[1]);
                let a = batch.find_step(from);
                let b = batch.find_step(to);
                if let (Some(a), Some(b)) = (a, b) {
                    if batch.edge(a, b).is_some() {
                        accepted.push((a, b));
                        continue;
                    }
                    if a == b || batch.would_create_cycle(a, b) {
                        rejected.push((from.clone(), to.clone()));
                        continue;
                    }
                }
                if a.is_none() && from == to {
                    rejected.push((from.clone(), to.clone()));
                    continue;
                }
                let a = a.unwrap_or_else(|| {
                    let ix = batch.add_step(from.clone(), fa.clone());
                    created.push(ix);
                    ix
                });
                let b = b.unwrap_or_else(|| {
                    let ix = batch.add_step(to.clone(), ta.clone());
                    created.push(ix);
                    ix
                });
                batch.set_edge(a, b, EdgeStats::new(0.0, 1.0));
                accepted.push((a, b));
            }
            scaffold(&mut batch, &created);
        }
        // Counting pass.
        for (a, b) in accepted {
            batch.edge_mut(a, b).expect("edge created above").count += 1.0;
        }
        let inc = &live.logic[id].dag;
        let edges_inc: Vec<_> = inc.edges().map(|((f, t), e)| (inc.label(f), inc.label(t), *e)).collect();
        let edges_bat: Vec<_> = batch.edges().map(|((f, t), e)| (batch.label(f), batch.label(t), *e)).collect();
        if edges_inc != edges_bat {
            return Ok(false);
        }
        if rejected_live.get(id).cloned().unwrap_or_default() != rejected {
            return Ok(false);
        }
    }
    Ok(true)
}
