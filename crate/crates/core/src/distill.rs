//! Logic distillation: action sequences, sequential pattern mining,
//! verification, and LogicNode construction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dag::{Attrs, DagNode, ProceduralDag};
use crate::embed::Vector;
use crate::error::{MemoryError, Result};
use crate::ids::{AnchorId, LogicId, NodeId};
use crate::ingest::EpisodicNode;
use crate::store::MemoryStore;

/// Timestamp-ordered actions of one source, with the episodic node behind
/// each action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSequence {
    pub video: String,
    pub actions: Vec<String>,
    pub nodes: Vec<NodeId>,
}

impl ActionSequence {
    pub fn from_actions(video: &str, actions: &[&str]) -> Self {
        ActionSequence {
            video: video.to_string(),
            actions: actions.iter().map(|a| a.to_string()).collect(),
            nodes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub steps: Vec<String>,
    pub support: f64,
    pub supporting_videos: BTreeSet<String>,
    /// Indices into the mined sequence list.
    pub supporting_sequences: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicNode {
    pub id: LogicId,
    pub c: String,
    pub i_goal: Vector,
    pub i_step: Vector,
    pub dag: ProceduralDag,
    pub episodic_links: BTreeSet<NodeId>,
    pub anchors: BTreeSet<AnchorId>,
    pub score: f64,
    /// Step lists this node was built from; used to skip re-distillation.
    pub patterns: Vec<Vec<String>>,
}

pub trait Verifier {
    fn verify(&self, pattern: &Pattern, related: &[&EpisodicNode]) -> f64;
}

pub trait GoalNamer {
    fn name_goal(&self, steps: &[String]) -> String;
}

/// Scores a pattern by its support; patterns shorter than two steps score 0.
pub fn verify_default(pattern: &Pattern, _related: &[&EpisodicNode]) -> f64 {
    if pattern.steps.len() < 2 {
        0.0
    } else {
        pattern.support
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SupportVerifier;

impl Verifier for SupportVerifier {
    fn verify(&self, pattern: &Pattern, related: &[&EpisodicNode]) -> f64 {
        verify_default(pattern, related)
    }
}

/// `procedure: a → b → c`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ArrowGoalNamer;

impl GoalNamer for ArrowGoalNamer {
    fn name_goal(&self, steps: &[String]) -> String {
        format!("procedure: {}", steps.join(" → "))
    }
}

/// Whether `needle` occurs in `hay` as a (possibly non-contiguous) subsequence.
pub fn is_subsequence<T: PartialEq>(needle: &[T], hay: &[T]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == x))
}

/// Leftmost embedding positions of `needle` in `hay`.
fn leftmost_match(needle: &[String], hay: &[String]) -> Option<Vec<usize>> {
    let mut pos = Vec::with_capacity(needle.len());
    let mut from = 0;
    for step in needle {
        let off = hay[from..].iter().position(|a| a == step)?;
        pos.push(from + off);
        from += off + 1;
    }
    Some(pos)
}

fn meets_support(count: usize, total: usize, sigma: f64) -> bool {
    total > 0 && count as f64 / total as f64 >= sigma
}

/// All sequential patterns of length >= 2 with support >= `sigma`, by
/// descending support and then lexicographic steps.
///
/// PrefixSpan over pseudo-projected databases: each projection entry is a
/// (sequence, suffix start) pair, and every sequence contributes at most once
/// per frequent item.
pub fn prefixspan(sequences: &[ActionSequence], sigma: f64) -> Vec<Pattern> {
    let total = sequences.len();
    let mut out = Vec::new();
    if total == 0 {
        return out;
    }
    let initial: Vec<(usize, usize)> = (0..total).map(|i| (i, 0)).collect();
    let mut prefix = Vec::new();
    mine(sequences, sigma, &initial, &mut prefix, &mut out);
    out.sort_by(|a, b| b.support.total_cmp(&a.support).then_with(|| a.steps.cmp(&b.steps)));
    out
}

fn mine(
    seqs: &[ActionSequence],
    sigma: f64,
    projected: &[(usize, usize)],
    prefix: &mut Vec<String>,
    out: &mut Vec<Pattern>,
) {
    // item -> projected entries for prefix + item
    let mut next: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
    for &(s, start) in projected {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for (off, item) in seqs[s].actions[start..].iter().enumerate() {
            if seen.insert(item.as_str()) {
                next.entry(item.as_str()).or_default().push((s, start + off + 1));
            }
        }
    }
    for (item, proj) in next {
        if !meets_support(proj.len(), seqs.len(), sigma) {
            continue;
        }
        prefix.push(item.to_string());
        if prefix.len() >= 2 {
            out.push(Pattern {
                steps: prefix.clone(),
                support: proj.len() as f64 / seqs.len() as f64,
                supporting_videos: proj.iter().map(|&(s, _)| seqs[s].video.clone()).collect(),
                supporting_sequences: proj.iter().map(|&(s, _)| s).collect(),
            });
        }
        mine(seqs, sigma, &proj, prefix, out);
        prefix.pop();
    }
}

impl MemoryStore {
    /// One sequence per source, ordered by (timestamp, node id). Nodes without
    /// an extractable action are skipped.
    pub fn extract_action_sequences(&self) -> Vec<ActionSequence> {
        let mut by_video: BTreeMap<&str, Vec<&EpisodicNode>> = BTreeMap::new();
        for e in self.episodic.values() {
            if e.action.is_some() {
                by_video.entry(e.video.as_str()).or_default().push(e);
            }
        }
        by_video
            .into_iter()
            .map(|(video, mut nodes)| {
                nodes.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.id.cmp(&b.id)));
                ActionSequence {
                    video: video.to_string(),
                    actions: nodes.iter().map(|n| n.action.clone().unwrap_or_default()).collect(),
                    nodes: nodes.iter().map(|n| n.id).collect(),
                }
            })
            .collect()
    }

    /// Runs a distillation cycle over all episodic memory with the configured
    /// verifier and goal namer. External components must go through
    /// [`MemoryStore::distill_with`].
    pub fn distill(&mut self) -> Result<Vec<LogicId>> {
        self.require_default_components()?;
        let seqs = self.extract_action_sequences();
        self.distill_sequences(&seqs, &SupportVerifier, &ArrowGoalNamer)
    }

    pub fn distill_with(&mut self, verifier: &dyn Verifier, namer: &dyn GoalNamer) -> Result<Vec<LogicId>> {
        let seqs = self.extract_action_sequences();
        self.distill_sequences(&seqs, verifier, namer)
    }

    pub(crate) fn require_default_components(&self) -> Result<()> {
        if self.config.verifier != "default" || self.config.goal_namer != "default" {
            return Err(MemoryError::Config(
                "an external verifier/goal namer is configured but none is registered".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn distill_sequences(
        &mut self,
        seqs: &[ActionSequence],
        verifier: &dyn Verifier,
        namer: &dyn GoalNamer,
    ) -> Result<Vec<LogicId>> {
        let candidates = prefixspan(seqs, self.config.sigma_support);
        let mut verified: Vec<(Pattern, f64)> = Vec::new();
        for p in candidates {
            let related: Vec<&EpisodicNode> = self
                .episodic
                .values()
                .filter(|e| e.action.as_ref().is_some_and(|a| p.steps.contains(a)))
                .collect();
            let score = verifier.verify(&p, &related);
            if score > self.config.tau_verify {
                verified.push((p, score));
            }
        }

        // A pattern is absorbed by a longer verified pattern that contains it
        // at the same support.
        let absorbed: Vec<bool> = verified
            .iter()
            .map(|(p, _)| {
                verified.iter().any(|(q, _)| {
                    q.steps.len() > p.steps.len() && q.support >= p.support && is_subsequence(&p.steps, &q.steps)
                })
            })
            .collect();

        let mut created = Vec::new();
        for ((p, score), absorbed) in verified.into_iter().zip(absorbed) {
            if absorbed {
                continue;
            }
            let known = self
                .logic
                .values()
                .flat_map(|l| l.patterns.iter())
                .any(|known| is_subsequence(&p.steps, known));
            if known {
                continue;
            }
            created.push(self.build_logic_node(seqs, &p, score, namer)?);
        }
        Ok(created)
    }

    fn build_logic_node(
        &mut self,
        seqs: &[ActionSequence],
        p: &Pattern,
        score: f64,
        namer: &dyn GoalNamer,
    ) -> Result<LogicId> {
        let mut steps: Vec<DagNode> = p.steps.iter().map(|s| DagNode::step(s.clone(), Attrs::new())).collect();
        let mut links = BTreeSet::new();
        for &si in &p.supporting_sequences {
            let seq = &seqs[si];
            let Some(pos) = leftmost_match(&p.steps, &seq.actions) else {
                continue;
            };
            for (step, &at) in steps.iter_mut().zip(&pos) {
                let Some(&nid) = seq.nodes.get(at) else {
                    continue;
                };
                let Some(e) = self.episodic.get(&nid) else {
                    continue;
                };
                links.insert(nid);
                for (k, v) in &e.attrs {
                    step.attrs.entry(k.clone()).or_insert_with(|| v.clone());
                }
                step.record_outcome(e.outcome.is_success());
            }
        }
        if links.is_empty() {
            return Err(MemoryError::InvalidInput(format!(
                "pattern {:?} has no supporting episodic nodes",
                p.steps
            )));
        }
        let dag = ProceduralDag::single_path(steps, p.supporting_sequences.len() as f64);
        dag.ensure_valid()?;

        let c = namer.name_goal(&p.steps);
        let i_goal = self.embedder.embed(&c);
        let step_vecs: Vec<Vector> = p.steps.iter().map(|s| self.embedder.embed(s)).collect();
        let i_step = Vector::mean(&step_vecs)?
            .unwrap_or_else(|| Vector::zeros(self.config.dim))
            .normalized();
        let anchors = links
            .iter()
            .filter_map(|n| self.episodic.get(n))
            .flat_map(|e| e.anchors.iter().copied())
            .collect();

        let id = self.counters.logic();
        self.logic.insert(
            id,
            LogicNode {
                id,
                c,
                i_goal,
                i_step,
                dag,
                episodic_links: links,
                anchors,
                score,
                patterns: vec![p.steps.clone()],
            },
        );
        self.upsert_logic_index(id)?;
        Ok(id)
    }
}
