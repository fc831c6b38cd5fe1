//! Hybrid retrieval: query classification, cross-layer scoring with the
//! dual logic index, and per-type re-ranking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{Layer, QueryType};
use crate::dag::{satisfies, Constraint};
use crate::embed::{cosine, tokenize, Vector};
use crate::error::{MemoryError, Result};
use crate::ids::{AnchorId, LogicId, NodeId};
use crate::index::IndexKey;
use crate::distill::LogicNode;
use crate::store::MemoryStore;
use crate::symbolic::PathReport;

pub const CONSTRAINT_CUES: &[&str] =
    &["without", "only", "avoid", "must", "cannot", "unless", "broken", "unavailable", "instead"];
pub const CHARACTER_CUES: &[&str] = &["personality", "what kind of person", "usually", "habit", "tends to"];

/// Episodic evidence items attached to every answer context.
const EVIDENCE_ITEMS: usize = 3;

/// Second-tier classifier consulted only for texts the cue rules leave factual.
pub trait QueryClassifier {
    fn classify(&self, text: &str) -> Option<QueryType>;
}

fn contains_phrase(tokens: &[String], cue: &str) -> bool {
    let cue: Vec<String> = tokenize(cue);
    !cue.is_empty() && tokens.windows(cue.len()).any(|w| w == cue.as_slice())
}

pub fn classify(text: &str, classifier: Option<&dyn QueryClassifier>) -> QueryType {
    let tokens = tokenize(text);
    if CONSTRAINT_CUES.iter().any(|c| contains_phrase(&tokens, c)) {
        return QueryType::Constraint;
    }
    if CHARACTER_CUES.iter().any(|c| contains_phrase(&tokens, c)) {
        return QueryType::Character;
    }
    classifier.and_then(|c| c.classify(text)).unwrap_or(QueryType::Factual)
}

/// `alpha * cos(q, i_goal) + (1 - alpha) * cos(q, i_step)`.
pub fn score_logic(q_vec: &Vector, node: &LogicNode, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(MemoryError::InvalidInput(format!("alpha = {alpha} is outside [0, 1]")));
    }
    Ok(alpha * cosine(q_vec, &node.i_goal)? + (1.0 - alpha) * cosine(q_vec, &node.i_step)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub q_vec: Vector,
    pub qtype: QueryType,
    pub constraint: Option<Constraint>,
    pub person: Option<String>,
}

impl Query {
    /// Builds a query. With no explicit type, a constraint forces the
    /// constraint type and the cue rules decide otherwise.
    pub fn new(
        store: &MemoryStore,
        text: &str,
        qtype: Option<QueryType>,
        constraint: Option<Constraint>,
        person: Option<String>,
    ) -> Result<Query> {
        let qtype = match (qtype, &constraint) {
            (Some(t), Some(_)) if t != QueryType::Constraint => {
                return Err(MemoryError::InvalidInput(format!("a constraint cannot be attached to a {t} query")));
            }
            (Some(t), _) => t,
            (None, Some(_)) => QueryType::Constraint,
            (None, None) => classify(text, None),
        };
        Ok(Query { text: text.to_string(), q_vec: store.embedder().embed(text), qtype, constraint, person })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "layer", content = "id", rename_all = "lowercase")]
pub enum NodeRef {
    Episodic(NodeId),
    Semantic(NodeId),
    Logic(LogicId),
}

impl NodeRef {
    pub fn layer(self) -> Layer {
        match self {
            NodeRef::Episodic(_) => Layer::Episodic,
            NodeRef::Semantic(_) => Layer::Semantic,
            NodeRef::Logic(_) => Layer::Logic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub node: NodeRef,
    pub score_init: f64,
    pub score_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub id: NodeId,
    pub video: String,
    pub t: f64,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcedureContext {
    pub logic: LogicId,
    pub goal: String,
    /// Paths whose every step satisfies the constraint.
    pub paths: Vec<PathReport>,
    /// Step labels excluded by the constraint.
    pub blocked: Vec<String>,
    pub evidence: Vec<Evidence>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterContext {
    pub person: AnchorId,
    pub label: String,
    pub procedures: Vec<(LogicId, String)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerContext {
    pub evidence: Vec<Evidence>,
    pub procedure: Option<ProcedureContext>,
    pub character: Option<CharacterContext>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub qtype: QueryType,
    pub ranked: Vec<Ranked>,
    pub answer_context: AnswerContext,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RetrieveOptions {
    /// Leave the logic layer out entirely (episodic/semantic only).
    pub no_logic: bool,
}

/// Result of the episodic-only multi-hop baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineAnswer {
    pub calls: u64,
    pub steps: Vec<Evidence>,
}

fn evidence_item(store: &MemoryStore, id: NodeId) -> Option<Evidence> {
    store.episodic_node(id).map(|e| Evidence { id, video: e.video.clone(), t: e.t, text: e.d.clone() })
}

impl MemoryStore {
    pub fn retrieve(&self, q: &Query, k: usize) -> Result<RetrievalResult> {
        self.retrieve_with(q, k, RetrieveOptions::default())
    }

    pub fn retrieve_with(&self, q: &Query, k: usize, opts: RetrieveOptions) -> Result<RetrievalResult> {
        self.count_read();
        self.retrieve_inner(q, k, opts)
    }

    /// Stage I (thresholded similarity) and Stage II (layer weights), over
    /// every candidate.
    fn rank_all(&self, q: &Query, opts: RetrieveOptions) -> Result<Vec<Ranked>> {
        let alpha = self.config.alpha;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(MemoryError::InvalidInput(format!("alpha = {alpha} is outside [0, 1]")));
        }
        let weights = *self.config.layer_weights.for_type(q.qtype);
        let mut logic_parts: BTreeMap<LogicId, (f64, f64)> = BTreeMap::new();
        let mut out = Vec::new();
        for (key, s) in self.index.scores(&q.q_vec)? {
            let node = match key {
                IndexKey::Episodic(id) => NodeRef::Episodic(id),
                IndexKey::Semantic(id) => NodeRef::Semantic(id),
                IndexKey::LogicGoal(id) => {
                    logic_parts.entry(id).or_default().0 = s;
                    continue;
                }
                IndexKey::LogicStep(id) => {
                    logic_parts.entry(id).or_default().1 = s;
                    continue;
                }
            };
            out.push((node, s));
        }
        if !opts.no_logic {
            for (id, (g, st)) in logic_parts {
                out.push((NodeRef::Logic(id), alpha * g + (1.0 - alpha) * st));
            }
        }
        let mut ranked: Vec<Ranked> = out
            .into_iter()
            .filter(|(_, s)| *s > self.config.theta_retrieve)
            .map(|(node, s)| Ranked { node, score_init: s, score_final: s * weights.get(node.layer()) })
            .collect();
        ranked.sort_by(|a, b| b.score_final.total_cmp(&a.score_final).then(a.node.cmp(&b.node)));
        Ok(ranked)
    }

    fn retrieve_inner(&self, q: &Query, k: usize, opts: RetrieveOptions) -> Result<RetrievalResult> {
        let all = self.rank_all(q, opts)?;
        let mut ctx = AnswerContext {
            evidence: all
                .iter()
                .filter_map(|r| match r.node {
                    NodeRef::Episodic(id) => evidence_item(self, id),
                    _ => None,
                })
                .take(EVIDENCE_ITEMS)
                .collect(),
            ..Default::default()
        };
        let top_logic = all.iter().find_map(|r| match r.node {
            NodeRef::Logic(id) => Some(id),
            _ => None,
        });
        match q.qtype {
            QueryType::Constraint => {
                if let Some(id) = top_logic {
                    ctx.procedure = Some(self.procedure_context(id, q.constraint.as_ref())?);
                }
            }
            QueryType::Character => {
                if let Some(person) = self.person_of(q)? {
                    let procedures = if opts.no_logic {
                        Vec::new()
                    } else {
                        self.behaviors_of(person)?.into_iter().map(|l| (l, self.logic[&l].c.clone())).collect()
                    };
                    ctx.character = Some(CharacterContext {
                        person,
                        label: self.anchors[&person].label.clone(),
                        procedures,
                    });
                }
            }
            QueryType::Factual => {}
        }
        let mut ranked = all;
        ranked.truncate(k);
        Ok(RetrievalResult { qtype: q.qtype, ranked, answer_context: ctx })
    }

    fn procedure_context(&self, id: LogicId, c: Option<&Constraint>) -> Result<ProcedureContext> {
        let empty = Constraint::default();
        let c = c.unwrap_or(&empty);
        let seq = self.step_sequence_of(id, 1.0, c)?;
        let dag = &self.logic[&id].dag;
        let blocked = dag
            .step_indices()
            .filter(|&i| !satisfies(&dag.nodes()[i].attrs, c))
            .map(|i| dag.label(i).to_string())
            .collect();
        let evidence = self
            .evidence_of(id)
            .into_iter()
            .filter(|e| e.action.as_ref().is_some_and(|a| seq.paths.iter().any(|p| p.steps.contains(a))))
            .map(|e| Evidence { id: e.id, video: e.video, t: e.t, text: e.d })
            .collect();
        Ok(ProcedureContext { logic: id, goal: seq.goal, paths: seq.paths, blocked, evidence })
    }

    /// Explicit person, else the first query token naming an anchor.
    fn person_of(&self, q: &Query) -> Result<Option<AnchorId>> {
        if let Some(p) = &q.person {
            return self
                .find_anchor(p)
                .map(Some)
                .ok_or_else(|| MemoryError::UnknownPerson(p.clone()));
        }
        Ok(tokenize(&q.text).iter().find_map(|t| self.anchors.values().find(|a| &a.label == t).map(|a| a.id)))
    }

    /// Reconstructs a procedure with episodic-only retrieval: find the best
    /// matching episode, then hop backward and forward through the same
    /// source, one retrieval per hop, until no new neighbour turns up.
    pub fn baseline_procedure(&self, question: &str) -> Result<BaselineAnswer> {
        let start = self.read_count();
        let opts = RetrieveOptions { no_logic: true };
        let k = self.index.len().max(1);
        let q = Query::new(self, question, Some(QueryType::Factual), None, None)?;
        let first = self.retrieve_with(&q, k, opts)?;
        let Some(seed) = first.ranked.iter().find_map(|r| match r.node {
            NodeRef::Episodic(id) => Some(id),
            _ => None,
        }) else {
            return Ok(BaselineAnswer { calls: self.read_count() - start, steps: Vec::new() });
        };
        let mut chain = vec![seed];
        for forward in [false, true] {
            let mut cur = seed;
            loop {
                let here = &self.episodic[&cur];
                let q = Query::new(self, &here.d, Some(QueryType::Factual), None, None)?;
                let res = self.retrieve_with(&q, k, opts)?;
                let next = res.ranked.iter().find_map(|r| match r.node {
                    NodeRef::Episodic(id) if !chain.contains(&id) => {
                        let e = &self.episodic[&id];
                        let later = (e.t, e.id) > (here.t, here.id);
                        (e.video == here.video && later == forward).then_some(id)
                    }
                    _ => None,
                });
                match next {
                    Some(id) => {
                        chain.push(id);
                        cur = id;
                    }
                    None => break,
                }
            }
        }
        chain.sort_by(|a, b| {
            let (x, y) = (&self.episodic[a], &self.episodic[b]);
            x.t.total_cmp(&y.t).then(a.cmp(b))
        });
        Ok(BaselineAnswer {
            calls: self.read_count() - start,
            steps: chain.into_iter().filter_map(|id| evidence_item(self, id)).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::dag::{ConstraintOp, Predicate};
    use crate::ids::IdCounters;
    use crate::ingest::{Description, ObservationRecord};

    #[test]
    fn classification_examples() {
        assert_eq!(classify("When did Jack chop the fruit?", None), QueryType::Factual);
        assert_eq!(classify("What should Jack do if the bowl is broken?", None), QueryType::Constraint);
        assert_eq!(classify("What kind of person is Tom?", None), QueryType::Character);
        assert_eq!(classify("Does Tom usually cook without a pan?", None), QueryType::Constraint);
        assert_eq!(classify("The mustard is yellow", None), QueryType::Factual);
    }

    struct Always(QueryType);
    impl QueryClassifier for Always {
        fn classify(&self, _: &str) -> Option<QueryType> {
            Some(self.0)
        }
    }

    #[test]
    fn external_classifier_only_overrides_factual() {
        let c = Always(QueryType::Character);
        assert_eq!(classify("When did Jack eat?", Some(&c)), QueryType::Character);
        assert_eq!(classify("Cook without a pan", Some(&c)), QueryType::Constraint);
    }

    fn node(goal: Vector, step: Vector) -> LogicNode {
        LogicNode {
            id: IdCounters::new().logic(),
            c: String::new(),
            i_goal: goal,
            i_step: step,
            dag: Default::default(),
            episodic_links: Default::default(),
            anchors: Default::default(),
            score: 1.0,
            patterns: vec![],
        }
    }

    #[test]
    fn score_logic_arithmetic() {
        let n = node(Vector::basis(2, 0), Vector::basis(2, 1));
        assert!((score_logic(&Vector::basis(2, 0), &n, 0.3).unwrap() - 0.3).abs() < 1e-15);
        assert!((score_logic(&Vector::basis(2, 1), &n, 0.3).unwrap() - 0.7).abs() < 1e-15);
        assert!(score_logic(&Vector::basis(3, 1), &n, 0.3).is_err());
    }

    #[test]
    fn empty_store_retrieves_nothing() {
        let s = MemoryStore::new(Config::default()).unwrap();
        let q = Query::new(&s, "anything", None, None, None).unwrap();
        let r = s.retrieve(&q, 5).unwrap();
        assert!(r.ranked.is_empty());
        assert_eq!(r.answer_context, AnswerContext::default());
    }

    fn two_vector_store() -> MemoryStore {
        // One episodic node and one logic node, both at exact cosine 0.5
        // from the basis query.
        let mut s = MemoryStore::new(Config { dim: 4, ..Config::default() }).unwrap();
        s.ingest_observation(&ObservationRecord::new(1, "v", 0.0).describe(Description::new("x"))).unwrap();
        let id = s.episodic_nodes().next().unwrap().id;
        let half = Vector::new(vec![0.5, 0.75f64.sqrt(), 0.0, 0.0]);
        s.episodic.get_mut(&id).unwrap().v_e = half.clone();
        s.index.upsert(IndexKey::Episodic(id), half.clone()).unwrap();
        let lid = s.counters.logic();
        let mut l = node(half.clone(), half);
        l.id = lid;
        l.episodic_links.insert(id);
        s.logic.insert(lid, l);
        s.upsert_logic_index(lid).unwrap();
        for n in s.semantic.keys().copied().collect::<Vec<_>>() {
            s.index.remove(&IndexKey::Semantic(n));
        }
        s.semantic.clear();
        s
    }

    #[test]
    fn stage_two_weights() {
        let s = two_vector_store();
        let mut q = Query::new(&s, "x", Some(QueryType::Factual), None, None).unwrap();
        q.q_vec = Vector::basis(4, 0);
        let r = s.retrieve(&q, 5).unwrap();
        assert_eq!(r.ranked[0].node.layer(), Layer::Episodic);
        assert!((r.ranked[0].score_final - 0.5).abs() < 1e-12);
        assert!((r.ranked[1].score_final - 0.3).abs() < 1e-12);

        q.qtype = QueryType::Constraint;
        let r = s.retrieve(&q, 5).unwrap();
        assert_eq!(r.ranked[0].node.layer(), Layer::Logic);
        assert!((r.ranked[0].score_final - 0.75).abs() < 1e-12);
        assert!(r.answer_context.procedure.is_some());

        let r = s.retrieve_with(&q, 5, RetrieveOptions { no_logic: true }).unwrap();
        assert!(r.ranked.iter().all(|x| x.node.layer() != Layer::Logic));
        assert!(r.answer_context.procedure.is_none());
    }

    #[test]
    fn constraint_type_rules() {
        let s = MemoryStore::new(Config::default()).unwrap();
        let c = Constraint::new(vec![Predicate::new("tool", ConstraintOp::Neq, "bowl")]);
        let q = Query::new(&s, "how to make salad", None, Some(c.clone()), None).unwrap();
        assert_eq!(q.qtype, QueryType::Constraint);
        assert!(Query::new(&s, "x", Some(QueryType::Factual), Some(c), None).is_err());
    }

    #[test]
    fn k_truncates_and_ties_break_by_layer_then_id() {
        let mut s = MemoryStore::new(Config { dim: 64, ..Config::default() }).unwrap();
        for i in 0..4 {
            s.ingest_observation(&ObservationRecord::new(i + 1, "v", i as f64).describe(Description::new("same words")))
                .unwrap();
        }
        let q = Query::new(&s, "same words", None, None, None).unwrap();
        let r = s.retrieve(&q, 3).unwrap();
        assert_eq!(r.ranked.len(), 3);
        let ids: Vec<NodeRef> = r.ranked.iter().map(|x| x.node).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }
}
