//! Observation processing: entity anchors, episodic nodes, and semantic
//! consolidation with reinforcement and weakening.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dag::Attrs;
use crate::embed::{check_dim, cosine, tokenize, Vector};
use crate::error::{MemoryError, Result};
use crate::ids::{AnchorId, NodeId, ObservationId};
use crate::index::IndexKey;
use crate::store::{MemoryStore, ObservationEntry};

/// Version accepted in the optional `version` field of observation records.
pub const RECORD_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerceptKind {
    Face,
    Voice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Percept {
    pub kind: PerceptKind,
    pub vector: Vector,
    pub hint: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    #[default]
    Success,
    Failure,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }
}

/// An atomic event narrative. In JSON either a bare string or
/// `{"text": ..., "attrs": {...}, "outcome": "success"|"failure"}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Description {
    pub text: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: Attrs,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
}

impl Description {
    pub fn new(text: impl Into<String>) -> Self {
        Description { text: text.into(), attrs: Attrs::new(), outcome: None }
    }

    pub fn with_attr(mut self, k: &str, v: &str) -> Self {
        self.attrs.insert(k.to_string(), v.to_string());
        self
    }

    pub fn with_outcome(mut self, o: Outcome) -> Self {
        self.outcome = Some(o);
        self
    }
}

impl<'de> Deserialize<'de> for Description {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Full {
            text: String,
            #[serde(default)]
            attrs: Attrs,
            #[serde(default)]
            outcome: Option<Outcome>,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Full(Full),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Text(text) => Description::new(text),
            Repr::Full(f) => Description { text: f.text, attrs: f.attrs, outcome: f.outcome },
        })
    }
}

/// A high-level conclusion; `{"type": ..., "text": ...}` or a `[type, text]` pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Conclusion {
    #[serde(rename = "type")]
    pub kind: String,
    pub text: String,
}

impl Conclusion {
    pub fn new(kind: impl Into<String>, text: impl Into<String>) -> Self {
        Conclusion { kind: kind.into(), text: text.into() }
    }
}

impl<'de> Deserialize<'de> for Conclusion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Obj {
            #[serde(rename = "type")]
            kind: String,
            text: String,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Pair(String, String),
            Obj(Obj),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Pair(kind, text) => Conclusion { kind, text },
            Repr::Obj(o) => Conclusion { kind: o.kind, text: o.text },
        })
    }
}

fn default_version() -> u32 {
    RECORD_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    #[serde(default = "default_version")]
    pub version: u32,
    pub id: ObservationId,
    pub video: String,
    pub t: f64,
    #[serde(default)]
    pub descriptions: Vec<Description>,
    #[serde(default)]
    pub conclusions: Vec<Conclusion>,
    #[serde(default)]
    pub percepts: Vec<Percept>,
}

impl ObservationRecord {
    pub fn new(id: u64, video: impl Into<String>, t: f64) -> Self {
        ObservationRecord {
            version: RECORD_VERSION,
            id: ObservationId(id),
            video: video.into(),
            t,
            descriptions: Vec::new(),
            conclusions: Vec::new(),
            percepts: Vec::new(),
        }
    }

    pub fn describe(mut self, d: Description) -> Self {
        self.descriptions.push(d);
        self
    }

    pub fn conclude(mut self, kind: &str, text: &str) -> Self {
        self.conclusions.push(Conclusion::new(kind, text));
        self
    }

    pub fn perceive(mut self, kind: PerceptKind, vector: Vector, hint: &str) -> Self {
        self.percepts.push(Percept { kind, vector, hint: hint.to_string() });
        self
    }

    /// All descriptions joined by single spaces.
    pub fn joined_text(&self) -> String {
        self.descriptions.iter().map(|d| d.text.as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// Parses line-delimited JSON records; blank lines are skipped.
pub fn parse_records(text: &str) -> Result<Vec<ObservationRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ObservationRecord = serde_json::from_str(line)
            .map_err(|e| MemoryError::MalformedRecord { line: i + 1, message: e.to_string() })?;
        if rec.version != RECORD_VERSION {
            return Err(MemoryError::MalformedRecord {
                line: i + 1,
                message: format!("unsupported record version {}", rec.version),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityAnchor {
    pub id: AnchorId,
    pub label: String,
    pub centroid_face: Option<Vector>,
    pub centroid_voice: Option<Vector>,
    pub face_count: u64,
    pub voice_count: u64,
    pub count: u64,
}

impl EntityAnchor {
    pub fn centroid(&self, kind: PerceptKind) -> Option<&Vector> {
        match kind {
            PerceptKind::Face => self.centroid_face.as_ref(),
            PerceptKind::Voice => self.centroid_voice.as_ref(),
        }
    }

    fn assign(&mut self, kind: PerceptKind, v: &Vector) -> Result<()> {
        let (slot, n) = match kind {
            PerceptKind::Face => (&mut self.centroid_face, &mut self.face_count),
            PerceptKind::Voice => (&mut self.centroid_voice, &mut self.voice_count),
        };
        *n += 1;
        match slot {
            None => *slot = Some(v.clone()),
            Some(c) => {
                // Running mean: c += (v - c) / n.
                c.blend_toward(v, 1.0 - 1.0 / *n as f64)?;
            }
        }
        self.count += 1;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodicNode {
    pub id: NodeId,
    pub observation: ObservationId,
    pub t: f64,
    pub d: String,
    pub v_e: Vector,
    pub video: String,
    pub anchors: BTreeSet<AnchorId>,
    pub action: Option<String>,
    pub outcome: Outcome,
    pub attrs: Attrs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticNode {
    pub id: NodeId,
    #[serde(rename = "type")]
    pub kind: String,
    pub attrs: String,
    pub v_s: Vector,
    pub anchors: BTreeSet<AnchorId>,
    pub weight: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticEventKind {
    Created,
    Reinforced,
    Weakened,
    Pruned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticEvent {
    pub kind: SemanticEventKind,
    pub node: NodeId,
    pub weight: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub observation: ObservationId,
    pub episodic: Vec<NodeId>,
    pub semantic: Vec<SemanticEvent>,
    pub anchors: Vec<AnchorId>,
}

/// `@mention` hints in `text`, lowercased, in order of appearance.
pub fn mentions(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find('@') {
        let after = &rest[pos + 1..];
        let end = after
            .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '-'))
            .unwrap_or(after.len());
        let hint = after[..end].trim_end_matches('-').to_lowercase();
        if !hint.is_empty() {
            out.push(hint);
        }
        rest = &after[end..];
    }
    out
}

fn strip_mentions(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '@' {
            while chars.peek().is_some_and(|&n| n.is_alphanumeric() || n == '_' || n == '-') {
                chars.next();
            }
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out
}

const NOUN_SKIP: &[&str] = &[
    "a", "an", "the", "some", "his", "her", "their", "its", "my", "your", "our", "this", "that",
    "these", "those", "up", "of", "to", "into", "onto", "with", "in", "on", "out", "all",
];

/// Whether `token` is an inflected form of `verb` (chops, chopped, chopping,
/// serves, served, serving, fries, fried...).
pub fn inflects(token: &str, verb: &str) -> bool {
    if token == verb {
        return true;
    }
    let Some(suffix) = token.strip_prefix(verb) else {
        if let Some(stem) = verb.strip_suffix('e') {
            if let Some(rest) = token.strip_prefix(stem) {
                return rest == "ing";
            }
        }
        if let Some(stem) = verb.strip_suffix('y') {
            if let Some(rest) = token.strip_prefix(stem) {
                return rest == "ies" || rest == "ied";
            }
        }
        return false;
    };
    if matches!(suffix, "s" | "es" | "ed" | "d" | "ing") {
        return true;
    }
    let last = verb.chars().last().unwrap_or(' ');
    let mut doubled = String::new();
    doubled.push(last);
    suffix.strip_prefix(&doubled).is_some_and(|r| r == "ed" || r == "ing")
}

/// Rule-lexicon action label: the first token inflecting a lexicon verb,
/// joined with the next content token (`chop_fruit`). Falls back to the whole
/// normalized description; `None` when it has no tokens.
pub fn extract_action(text: &str, verbs: &[String]) -> Option<String> {
    let tokens = tokenize(&strip_mentions(text));
    if tokens.is_empty() {
        return None;
    }
    for (i, tok) in tokens.iter().enumerate() {
        if let Some(verb) = verbs.iter().find(|v| inflects(tok, v)) {
            let noun = tokens[i + 1..].iter().find(|t| !NOUN_SKIP.contains(&t.as_str()));
            return Some(match noun {
                Some(n) => format!("{verb}_{n}"),
                None => verb.clone(),
            });
        }
    }
    Some(tokens.join("_"))
}

impl MemoryStore {
    /// Assigns a percept to its nearest same-kind anchor or seeds a new one.
    pub fn resolve_anchor(&mut self, percept: &Percept) -> Result<AnchorId> {
        check_dim(self.config.dim, percept.vector.dim())?;
        let mut best: Option<(AnchorId, f64)> = None;
        for (id, a) in &self.anchors {
            if let Some(c) = a.centroid(percept.kind) {
                let s = cosine(c, &percept.vector)?;
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((*id, s));
                }
            }
        }
        self.percepts_ingested += 1;
        if let Some((id, s)) = best {
            if s >= self.config.tau_anchor {
                let anchor = self.anchors.get_mut(&id).expect("anchor exists");
                anchor.assign(percept.kind, &percept.vector)?;
                return Ok(id);
            }
        }
        let id = self.counters.anchor();
        let mut anchor = EntityAnchor {
            id,
            label: percept.hint.to_lowercase(),
            centroid_face: None,
            centroid_voice: None,
            face_count: 0,
            voice_count: 0,
            count: 0,
        };
        anchor.assign(percept.kind, &percept.vector)?;
        self.anchors.insert(id, anchor);
        Ok(id)
    }

    fn anchors_labelled(&self, hint: &str) -> BTreeSet<AnchorId> {
        self.anchors.values().filter(|a| a.label == hint).map(|a| a.id).collect()
    }

    /// Validates everything that could fail so the mutation phase cannot.
    fn prevalidate(&self, rec: &ObservationRecord) -> Result<()> {
        if rec.version != RECORD_VERSION {
            return Err(MemoryError::InvalidInput(format!("unsupported record version {}", rec.version)));
        }
        if self.observations.contains_key(&rec.id) {
            return Err(MemoryError::DuplicateObservation(rec.id));
        }
        if !rec.t.is_finite() {
            return Err(MemoryError::InvalidInput(format!("observation {} has a non-finite timestamp", rec.id)));
        }
        for p in &rec.percepts {
            check_dim(self.config.dim, p.vector.dim())?;
            if p.vector.as_slice().iter().any(|x| !x.is_finite()) {
                return Err(MemoryError::InvalidInput("percept vector has non-finite components".into()));
            }
        }
        if let Some(last) = self.last_time.get(&rec.video) {
            if rec.t < *last {
                return Err(MemoryError::InvalidInput(format!(
                    "timestamp {} precedes {} in source `{}`",
                    rec.t, last, rec.video
                )));
            }
        }
        let hints: BTreeSet<String> = rec.percepts.iter().map(|p| p.hint.to_lowercase()).collect();
        let texts = rec
            .descriptions
            .iter()
            .map(|d| d.text.as_str())
            .chain(rec.conclusions.iter().map(|c| c.text.as_str()));
        for text in texts {
            for m in mentions(text) {
                if !hints.contains(&m) && self.anchors_labelled(&m).is_empty() {
                    return Err(MemoryError::DanglingMention(m));
                }
            }
        }
        Ok(())
    }

    /// Phase-1 processing of one record. All-or-nothing: on error the store is
    /// untouched.
    pub fn ingest_observation(&mut self, rec: &ObservationRecord) -> Result<IngestReport> {
        self.prevalidate(rec)?;

        let mut by_hint: BTreeMap<String, BTreeSet<AnchorId>> = BTreeMap::new();
        let mut resolved = Vec::new();
        for p in &rec.percepts {
            let id = self.resolve_anchor(p)?;
            by_hint.entry(p.hint.to_lowercase()).or_default().insert(id);
            resolved.push(id);
        }
        let record_anchors: BTreeSet<AnchorId> = resolved.iter().copied().collect();
        let resolve_mentions = |store: &MemoryStore, text: &str| -> BTreeSet<AnchorId> {
            let mut set = BTreeSet::new();
            for m in mentions(text) {
                match by_hint.get(&m) {
                    Some(ids) => set.extend(ids.iter().copied()),
                    None => set.extend(store.anchors_labelled(&m)),
                }
            }
            set
        };

        let mut episodic = Vec::new();
        for d in &rec.descriptions {
            let id = self.counters.node();
            let anchors = resolve_mentions(self, &d.text);
            let node = EpisodicNode {
                id,
                observation: rec.id,
                t: rec.t,
                d: d.text.clone(),
                v_e: self.embedder.embed(&d.text),
                video: rec.video.clone(),
                anchors,
                action: extract_action(&d.text, &self.config.action_verbs),
                outcome: d.outcome.unwrap_or_default(),
                attrs: d.attrs.clone(),
            };
            self.index.upsert(IndexKey::Episodic(id), node.v_e.clone())?;
            self.episodic.insert(id, node);
            episodic.push(id);
        }

        let mut semantic = Vec::new();
        for c in &rec.conclusions {
            let mut anchors = resolve_mentions(self, &c.text);
            if anchors.is_empty() {
                anchors = record_anchors.clone();
            }
            semantic.extend(self.consolidate_semantic(&c.kind, &c.text, &anchors)?);
        }

        self.observations.insert(
            rec.id,
            ObservationEntry { video: rec.video.clone(), t: rec.t, episodic: episodic.clone() },
        );
        self.last_time.insert(rec.video.clone(), rec.t);
        Ok(IngestReport { observation: rec.id, episodic, semantic, anchors: resolved })
    }

    /// Reinforce / weaken / create for one incoming conclusion.
    ///
    /// Candidates are semantic nodes whose anchor set contains `anchors`; a
    /// conclusion with no anchors only competes with anchor-less nodes.
    pub fn consolidate_semantic(
        &mut self,
        kind: &str,
        text: &str,
        anchors: &BTreeSet<AnchorId>,
    ) -> Result<Vec<SemanticEvent>> {
        let v = self.embedder.embed(text);
        let mut best: Option<(NodeId, f64)> = None;
        let mut worst: Option<(NodeId, f64)> = None;
        for (id, s) in &self.semantic {
            let candidate = if anchors.is_empty() {
                s.anchors.is_empty()
            } else {
                anchors.is_subset(&s.anchors)
            };
            if !candidate {
                continue;
            }
            let sim = cosine(&v, &s.v_s)?;
            // Strict comparisons keep the lowest NodeId on ties (map iterates in id order).
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((*id, sim));
            }
            if worst.is_none_or(|(_, w)| sim < w) {
                worst = Some((*id, sim));
            }
        }

        let mut events = Vec::new();
        if let Some((id, sim)) = best {
            if sim > self.config.tau_pos {
                let node = self.semantic.get_mut(&id).expect("candidate exists");
                node.weight += 1;
                events.push(SemanticEvent { kind: SemanticEventKind::Reinforced, node: id, weight: node.weight });
                return Ok(events);
            }
        }
        if let Some((id, sim)) = worst {
            if sim < self.config.tau_neg {
                let node = self.semantic.get_mut(&id).expect("candidate exists");
                node.weight -= 1;
                let w = node.weight;
                events.push(SemanticEvent { kind: SemanticEventKind::Weakened, node: id, weight: w });
                if w <= 0 {
                    self.semantic.remove(&id);
                    self.index.remove(&IndexKey::Semantic(id));
                    events.push(SemanticEvent { kind: SemanticEventKind::Pruned, node: id, weight: w });
                }
            }
        }
        let id = self.counters.node();
        self.index.upsert(IndexKey::Semantic(id), v.clone())?;
        self.semantic.insert(
            id,
            SemanticNode { id, kind: kind.to_string(), attrs: text.to_string(), v_s: v, anchors: anchors.clone(), weight: 1 },
        );
        events.push(SemanticEvent { kind: SemanticEventKind::Created, node: id, weight: 1 });
        Ok(events)
    }
}
