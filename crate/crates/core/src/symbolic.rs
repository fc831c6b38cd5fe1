//! Deterministic query functions over the logic layer.

use serde::{Deserialize, Serialize};

use crate::dag::{satisfies, Constraint, DagIx, ProceduralDag, GOAL, START};
use crate::embed::cosine;
use crate::error::{MemoryError, Result};
use crate::ids::{AnchorId, LogicId};
use crate::ingest::EpisodicNode;
use crate::store::MemoryStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcedureEvidence {
    pub logic: LogicId,
    pub similarity: f64,
    pub goal: String,
    pub dag: ProceduralDag,
    /// Linked episodic nodes by timestamp, then id.
    pub evidence: Vec<EpisodicNode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub steps: Vec<String>,
    /// DAG indices of the steps (START and GOAL excluded).
    pub nodes: Vec<DagIx>,
    pub probability: f64,
    /// Beta posterior mean of each step's success.
    pub success: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSequence {
    pub logic: LogicId,
    pub similarity: f64,
    pub goal: String,
    pub paths: Vec<PathReport>,
}

/// Enumerates START -> GOAL paths whose every step satisfies `c`, by
/// depth-first search with children in ascending label order. Sorted by
/// descending probability, then step labels.
pub fn enumerate_paths(dag: &ProceduralDag, c: &Constraint, max_paths: usize, max_len: usize) -> Result<Vec<PathReport>> {
    dag.ensure_valid()?;
    let mut children: Vec<Vec<DagIx>> = vec![Vec::new(); dag.node_count()];
    for (v, kids) in children.iter_mut().enumerate() {
        kids.extend(dag.out_edges(v).map(|(t, _)| t));
        kids.sort_by(|&a, &b| dag.label(a).cmp(dag.label(b)).then(a.cmp(&b)));
    }
    let mut out = Vec::new();
    let mut stack = Vec::new();
    dfs(dag, c, &children, START, 1.0, &mut stack, &mut out, max_paths, max_len)?;
    out.sort_by(|a, b| b.probability.total_cmp(&a.probability).then_with(|| a.steps.cmp(&b.steps)));
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    dag: &ProceduralDag,
    c: &Constraint,
    children: &[Vec<DagIx>],
    v: DagIx,
    prob: f64,
    stack: &mut Vec<DagIx>,
    out: &mut Vec<PathReport>,
    max_paths: usize,
    max_len: usize,
) -> Result<()> {
    for &t in &children[v] {
        let p = prob * dag.transition_prob(v, t)?;
        if t == GOAL {
            if out.len() == max_paths {
                return Err(MemoryError::PathExplosion(format!("more than {max_paths} paths")));
            }
            let steps = stack.iter().map(|&i| dag.label(i).to_string()).collect();
            let success = stack.iter().map(|&i| dag.success_rate(i)).collect::<Result<_>>()?;
            out.push(PathReport { steps, nodes: stack.clone(), probability: p, success });
            continue;
        }
        if !satisfies(&dag.nodes()[t].attrs, c) {
            continue;
        }
        if stack.len() == max_len {
            return Err(MemoryError::PathExplosion(format!("a path is longer than {max_len} steps")));
        }
        stack.push(t);
        dfs(dag, c, children, t, p, stack, out, max_paths, max_len)?;
        stack.pop();
    }
    Ok(())
}

/// Expected number of transitions from `from` until GOAL is reached, with
/// GOAL absorbing and `transition_prob` as the chain.
pub fn expected_steps_to_goal(dag: &ProceduralDag, from: DagIx) -> Result<f64> {
    dag.ensure_valid()?;
    if from >= dag.node_count() {
        return Err(MemoryError::InvalidInput(format!("node #{from} is out of range")));
    }
    let order = dag.topological_order().expect("valid DAG is acyclic");
    let mut e = vec![0.0; dag.node_count()];
    for &v in order.iter().rev() {
        if v == GOAL {
            continue;
        }
        let mut acc = 1.0;
        for (t, _) in dag.out_edges(v) {
            acc += dag.transition_prob(v, t)? * e[t];
        }
        e[v] = acc;
    }
    Ok(e[from])
}

impl MemoryStore {
    /// LogicNode whose goal vector is closest to `goal` (lowest id on ties).
    pub(crate) fn resolve_goal(&self, goal: &str) -> Result<(LogicId, f64)> {
        let q = self.embedder.embed(goal);
        let mut best: Option<(LogicId, f64)> = None;
        for (id, n) in &self.logic {
            let s = cosine(&q, &n.i_goal)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((*id, s));
            }
        }
        match best {
            Some((id, s)) if s >= self.config.theta_retrieve => Ok((id, s)),
            _ => Err(MemoryError::NoMatch),
        }
    }

    pub(crate) fn evidence_of(&self, id: LogicId) -> Vec<EpisodicNode> {
        let mut ev: Vec<EpisodicNode> = self.logic[&id]
            .episodic_links
            .iter()
            .filter_map(|e| self.episodic.get(e).cloned())
            .collect();
        ev.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.id.cmp(&b.id)));
        ev
    }

    pub fn get_procedure_with_evidence(&self, goal: &str) -> Result<ProcedureEvidence> {
        self.count_read();
        let (id, similarity) = self.resolve_goal(goal)?;
        let node = &self.logic[&id];
        Ok(ProcedureEvidence {
            logic: id,
            similarity,
            goal: node.c.clone(),
            dag: node.dag.clone(),
            evidence: self.evidence_of(id),
        })
    }

    pub fn query_step_sequence(&self, goal: &str, c: &Constraint) -> Result<StepSequence> {
        self.count_read();
        let (id, similarity) = self.resolve_goal(goal)?;
        self.step_sequence_of(id, similarity, c)
    }

    pub(crate) fn step_sequence_of(&self, id: LogicId, similarity: f64, c: &Constraint) -> Result<StepSequence> {
        let node = self.logic.get(&id).ok_or(MemoryError::UnknownLogic(id))?;
        let paths = enumerate_paths(&node.dag, c, self.config.max_paths, self.config.max_path_len)?;
        Ok(StepSequence { logic: id, similarity, goal: node.c.clone(), paths })
    }

    /// LogicNodes with at least one linked episode involving `person`.
    pub fn aggregate_character_behaviors(&self, person: AnchorId) -> Result<Vec<LogicId>> {
        self.count_read();
        self.behaviors_of(person)
    }

    pub(crate) fn behaviors_of(&self, person: AnchorId) -> Result<Vec<LogicId>> {
        if !self.anchors.contains_key(&person) {
            return Err(MemoryError::UnknownAnchor(person));
        }
        Ok(self
            .logic
            .values()
            .filter(|l| {
                l.episodic_links
                    .iter()
                    .any(|e| self.episodic.get(e).is_some_and(|n| n.anchors.contains(&person)))
            })
            .map(|l| l.id)
            .collect())
    }

    /// Expected steps to GOAL from the step labelled `from` in the procedure
    /// resolved from `goal`. `START` and `GOAL` are accepted as labels.
    pub fn expected_steps(&self, goal: &str, from: &str) -> Result<(LogicId, f64)> {
        self.count_read();
        let (id, _) = self.resolve_goal(goal)?;
        let dag = &self.logic[&id].dag;
        let ix = match from {
            "START" => START,
            "GOAL" => GOAL,
            label => dag.find_step(label).ok_or_else(|| MemoryError::UnknownStep(label.to_string()))?,
        };
        Ok((id, expected_steps_to_goal(dag, ix)?))
    }
}
