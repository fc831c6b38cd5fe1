//! Procedural DAGs: START/GOAL-bounded step graphs carrying per-node
//! Beta success statistics and per-edge Dirichlet transition counts.
//!
//! Transition probabilities use the Dirichlet posterior mean
//! `(gamma_ij + N_ij) / sum_k (gamma_ik + N_ik)`. With every gamma at zero this
//! is plain frequency estimation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MemoryError, Result};

pub type Attrs = BTreeMap<String, String>;

/// Index of a node inside one DAG.
pub type DagIx = usize;

pub const START: DagIx = 0;
pub const GOAL: DagIx = 1;
pub const START_LABEL: &str = "START";
pub const GOAL_LABEL: &str = "GOAL";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Start,
    Goal,
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagNode {
    pub kind: NodeKind,
    pub label: String,
    pub attrs: Attrs,
    pub success_alpha: f64,
    pub success_beta: f64,
}

impl DagNode {
    fn terminal(kind: NodeKind, label: &str) -> Self {
        DagNode {
            kind,
            label: label.to_string(),
            attrs: Attrs::new(),
            success_alpha: 1.0,
            success_beta: 1.0,
        }
    }

    pub fn step(label: impl Into<String>, attrs: Attrs) -> Self {
        DagNode {
            kind: NodeKind::Step,
            label: label.into(),
            attrs,
            success_alpha: 1.0,
            success_beta: 1.0,
        }
    }

    pub fn is_step(&self) -> bool {
        self.kind == NodeKind::Step
    }

    pub fn record_outcome(&mut self, success: bool) {
        if success {
            self.success_alpha += 1.0;
        } else {
            self.success_beta += 1.0;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeStats {
    pub count: f64,
    pub gamma: f64,
}

impl EdgeStats {
    pub fn new(count: f64, gamma: f64) -> Self {
        EdgeStats { count, gamma }
    }
}

impl Default for EdgeStats {
    fn default() -> Self {
        EdgeStats { count: 0.0, gamma: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EdgeRecord {
    from: DagIx,
    to: DagIx,
    count: f64,
    gamma: f64,
}

mod edge_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        edges: &BTreeMap<(DagIx, DagIx), EdgeStats>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let list: Vec<EdgeRecord> = edges
            .iter()
            .map(|(&(from, to), e)| EdgeRecord { from, to, count: e.count, gamma: e.gamma })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BTreeMap<(DagIx, DagIx), EdgeStats>, D::Error> {
        let list = Vec::<EdgeRecord>::deserialize(d)?;
        let mut map = BTreeMap::new();
        for e in list {
            if map.insert((e.from, e.to), EdgeStats::new(e.count, e.gamma)).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate edge {} -> {}", e.from, e.to)));
            }
        }
        Ok(map)
    }
}

/// Rule violations reported by [`ProceduralDag::check_valid`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    MissingTerminals,
    Cycle { nodes: Vec<String> },
    StartHasIncoming { from: String },
    GoalHasOutgoing { to: String },
    DanglingEdge { from: DagIx, to: DagIx },
    UnreachableFromStart { node: String },
    UnreachableGoal { node: String },
    BadStatistics { at: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingTerminals => write!(f, "START/GOAL must be nodes 0 and 1"),
            Violation::Cycle { nodes } => write!(f, "cycle through {}", nodes.join(", ")),
            Violation::StartHasIncoming { from } => write!(f, "START has incoming edge from {from}"),
            Violation::GoalHasOutgoing { to } => write!(f, "GOAL has outgoing edge to {to}"),
            Violation::DanglingEdge { from, to } => write!(f, "edge {from} -> {to} has a missing endpoint"),
            Violation::UnreachableFromStart { node } => write!(f, "{node} is unreachable from START"),
            Violation::UnreachableGoal { node } => write!(f, "GOAL is unreachable from {node}"),
            Violation::BadStatistics { at } => write!(f, "invalid statistics at {at}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProceduralDag {
    nodes: Vec<DagNode>,
    #[serde(with = "edge_list")]
    edges: BTreeMap<(DagIx, DagIx), EdgeStats>,
}

impl Default for ProceduralDag {
    fn default() -> Self {
        Self::new()
    }
}

impl ProceduralDag {
    /// START and GOAL only, no edges.
    pub fn new() -> Self {
        ProceduralDag {
            nodes: vec![
                DagNode::terminal(NodeKind::Start, START_LABEL),
                DagNode::terminal(NodeKind::Goal, GOAL_LABEL),
            ],
            edges: BTreeMap::new(),
        }
    }

    /// START -> steps... -> GOAL, every edge carrying `count` and gamma 1.
    pub fn single_path(steps: Vec<DagNode>, count: f64) -> Self {
        let mut dag = ProceduralDag::new();
        let mut prev = START;
        for node in steps {
            let ix = dag.push_node(node);
            dag.edges.insert((prev, ix), EdgeStats::new(count, 1.0));
            prev = ix;
        }
        dag.edges.insert((prev, GOAL), EdgeStats::new(count, 1.0));
        dag
    }

    pub fn push_node(&mut self, node: DagNode) -> DagIx {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn add_step(&mut self, label: impl Into<String>, attrs: Attrs) -> DagIx {
        self.push_node(DagNode::step(label, attrs))
    }

    /// Inserts or overwrites an edge without any validity check.
    pub fn set_edge(&mut self, from: DagIx, to: DagIx, stats: EdgeStats) {
        self.edges.insert((from, to), stats);
    }

    pub fn nodes(&self) -> &[DagNode] {
        &self.nodes
    }

    pub fn node(&self, ix: DagIx) -> Option<&DagNode> {
        self.nodes.get(ix)
    }

    pub fn node_mut(&mut self, ix: DagIx) -> Option<&mut DagNode> {
        self.nodes.get_mut(ix)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn step_indices(&self) -> impl Iterator<Item = DagIx> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_step())
    }

    pub fn label(&self, ix: DagIx) -> &str {
        self.nodes.get(ix).map(|n| n.label.as_str()).unwrap_or("?")
    }

    /// Lowest-index step node with this label.
    pub fn find_step(&self, label: &str) -> Option<DagIx> {
        self.step_indices().find(|&i| self.nodes[i].label == label)
    }

    pub fn edges(&self) -> impl Iterator<Item = ((DagIx, DagIx), &EdgeStats)> + '_ {
        self.edges.iter().map(|(&k, v)| (k, v))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, from: DagIx, to: DagIx) -> Option<&EdgeStats> {
        self.edges.get(&(from, to))
    }

    pub fn edge_mut(&mut self, from: DagIx, to: DagIx) -> Option<&mut EdgeStats> {
        self.edges.get_mut(&(from, to))
    }

    pub fn out_edges(&self, from: DagIx) -> impl Iterator<Item = (DagIx, &EdgeStats)> + '_ {
        self.edges
            .range((from, 0)..=(from, DagIx::MAX))
            .map(|(&(_, to), e)| (to, e))
    }

    pub fn in_degree(&self, to: DagIx) -> usize {
        self.edges.keys().filter(|&&(_, t)| t == to).count()
    }

    pub fn total_count(&self) -> f64 {
        self.edges.values().map(|e| e.count).sum()
    }

    /// Whether `to` is reachable from `from` along directed edges.
    pub fn reaches(&self, from: DagIx, to: DagIx) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if v >= seen.len() || seen[v] {
                continue;
            }
            seen[v] = true;
            stack.extend(self.out_edges(v).map(|(t, _)| t));
        }
        false
    }

    /// Adding `from -> to` closes a cycle iff `from` is reachable from `to`.
    pub fn would_create_cycle(&self, from: DagIx, to: DagIx) -> bool {
        self.reaches(to, from)
    }

    /// Kahn's algorithm with a min-index queue; `None` when cyclic.
    pub fn topological_order(&self) -> Option<Vec<DagIx>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for &(f, t) in self.edges.keys() {
            if f < n && t < n {
                indeg[t] += 1;
            }
        }
        let mut ready: BTreeSet<DagIx> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for (t, _) in self.out_edges(v) {
                if t < n {
                    indeg[t] -= 1;
                    if indeg[t] == 0 {
                        ready.insert(t);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn transition_prob(&self, from: DagIx, to: DagIx) -> Result<f64> {
        let edge = self.edge(from, to).ok_or_else(|| MemoryError::MissingEdge {
            from: self.label(from).to_string(),
            to: self.label(to).to_string(),
        })?;
        let mut total = 0.0;
        let mut degree = 0usize;
        for (_, e) in self.out_edges(from) {
            total += e.gamma + e.count;
            degree += 1;
        }
        if total > 0.0 {
            Ok((edge.gamma + edge.count) / total)
        } else {
            // Frequency mode with no observations yet.
            Ok(1.0 / degree as f64)
        }
    }

    /// Records one observed transition, creating the edge (gamma 1) if absent.
    pub fn observe_transition(&mut self, from: DagIx, to: DagIx) {
        self.edges.entry((from, to)).or_default().count += 1.0;
    }

    pub fn success_rate(&self, ix: DagIx) -> Result<f64> {
        match self.nodes.get(ix) {
            Some(n) if n.is_step() => Ok(n.success_alpha / (n.success_alpha + n.success_beta)),
            Some(n) => Err(MemoryError::NotAStepNode(n.label.clone())),
            None => Err(MemoryError::NotAStepNode(format!("#{ix}"))),
        }
    }

    /// Every rule violation; empty when the DAG is valid.
    pub fn check_valid(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.nodes.len();
        if n < 2 || self.nodes[START].kind != NodeKind::Start || self.nodes[GOAL].kind != NodeKind::Goal {
            out.push(Violation::MissingTerminals);
            return out;
        }
        if self.nodes[2..].iter().any(|x| !x.is_step()) {
            out.push(Violation::MissingTerminals);
        }
        for (&(f, t), e) in &self.edges {
            if f >= n || t >= n {
                out.push(Violation::DanglingEdge { from: f, to: t });
                continue;
            }
            if t == START {
                out.push(Violation::StartHasIncoming { from: self.label(f).to_string() });
            }
            if f == GOAL {
                out.push(Violation::GoalHasOutgoing { to: self.label(t).to_string() });
            }
            if !(e.count.is_finite() && e.count >= 0.0 && e.gamma.is_finite() && e.gamma >= 0.0) {
                out.push(Violation::BadStatistics {
                    at: format!("{} -> {}", self.label(f), self.label(t)),
                });
            }
        }
        for node in &self.nodes {
            if !(node.success_alpha >= 1.0 && node.success_beta >= 1.0)
                || !node.success_alpha.is_finite()
                || !node.success_beta.is_finite()
            {
                out.push(Violation::BadStatistics { at: node.label.clone() });
            }
        }
        if self.topological_order().is_none() {
            out.push(Violation::Cycle { nodes: self.cyclic_nodes() });
        }
        let fwd = self.reachable_from(START, false);
        let bwd = self.reachable_from(GOAL, true);
        for i in self.step_indices() {
            if !fwd[i] {
                out.push(Violation::UnreachableFromStart { node: self.nodes[i].label.clone() });
            }
            if !bwd[i] {
                out.push(Violation::UnreachableGoal { node: self.nodes[i].label.clone() });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.check_valid().is_empty()
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.check_valid();
        if v.is_empty() {
            Ok(())
        } else {
            Err(MemoryError::InvalidDag(v))
        }
    }

    fn reachable_from(&self, root: DagIx, reverse: bool) -> Vec<bool> {
        let n = self.nodes.len();
        let mut adj: Vec<Vec<DagIx>> = vec![Vec::new(); n];
        for &(f, t) in self.edges.keys() {
            if f < n && t < n {
                if reverse {
                    adj[t].push(f);
                } else {
                    adj[f].push(t);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            stack.extend(adj[v].iter().copied());
        }
        seen
    }

    /// Nodes left over after peeling all zero in-degree nodes (cycle members
    /// and their descendants), by label.
    fn cyclic_nodes(&self) -> Vec<String> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for &(f, t) in self.edges.keys() {
            if f < n && t < n {
                indeg[t] += 1;
            }
        }
        let mut removed = vec![false; n];
        let mut stack: Vec<DagIx> = (0..n).filter(|&i| indeg[i] == 0).collect();
        while let Some(v) = stack.pop() {
            removed[v] = true;
            for (t, _) in self.out_edges(v) {
                if t < n {
                    indeg[t] -= 1;
                    if indeg[t] == 0 {
                        stack.push(t);
                    }
                }
            }
        }
        (0..n).filter(|&i| !removed[i]).map(|i| self.nodes[i].label.clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintOp {
    Eq,
    Neq,
    Has,
    NotHas,
    Leq,
    Geq,
    In,
    NotIn,
}

impl ConstraintOp {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "eq" => ConstraintOp::Eq,
            "neq" => ConstraintOp::Neq,
            "has" => ConstraintOp::Has,
            "not_has" => ConstraintOp::NotHas,
            "leq" => ConstraintOp::Leq,
            "geq" => ConstraintOp::Geq,
            "in" => ConstraintOp::In,
            "not_in" => ConstraintOp::NotIn,
            _ => return None,
        })
    }

    fn is_negative(self) -> bool {
        matches!(self, ConstraintOp::Neq | ConstraintOp::NotHas | ConstraintOp::NotIn)
    }
}

/// One `key op value` test against a node's attributes.
///
/// `has`/`not_has` treat the attribute value as a comma-separated set and test
/// membership of `value`; the value `*` tests only for presence of the key.
/// `in`/`not_in` take a `|`-separated list of admissible values. `leq`/`geq`
/// compare numerically and fail on non-numeric operands.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Predicate {
    pub key: String,
    pub op: ConstraintOp,
    pub value: String,
}

impl Predicate {
    pub fn new(key: impl Into<String>, op: ConstraintOp, value: impl Into<String>) -> Self {
        Predicate { key: key.into(), op, value: value.into() }
    }

    /// Parses `key=op:value`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || MemoryError::InvalidInput(format!("constraint `{s}` is not of the form key=op:value"));
        let (key, rest) = s.split_once('=').ok_or_else(bad)?;
        let (op, value) = rest.split_once(':').ok_or_else(bad)?;
        let op = ConstraintOp::parse(op.trim())
            .ok_or_else(|| MemoryError::InvalidInput(format!("unknown constraint operator `{op}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(bad());
        }
        Ok(Predicate::new(key, op, value.trim()))
    }

    pub fn holds(&self, attrs: &Attrs) -> bool {
        let Some(actual) = attrs.get(&self.key) else {
            return self.op.is_negative();
        };
        let has = || self.value == "*" || actual.split(',').any(|x| x.trim() == self.value);
        let listed = || self.value.split('|').any(|x| x.trim() == actual);
        let num = || Some((actual.trim().parse::<f64>().ok()?, self.value.trim().parse::<f64>().ok()?));
        match self.op {
            ConstraintOp::Eq => actual == &self.value,
            ConstraintOp::Neq => actual != &self.value,
            ConstraintOp::Has => has(),
            ConstraintOp::NotHas => !has(),
            ConstraintOp::Leq => num().is_some_and(|(a, b)| a <= b),
            ConstraintOp::Geq => num().is_some_and(|(a, b)| a >= b),
            ConstraintOp::In => listed(),
            ConstraintOp::NotIn => !listed(),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = serde_json::to_value(self.op).ok();
        let op = op.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
        write!(f, "{}={}:{}", self.key, op, self.value)
    }
}

/// Conjunction of predicates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub predicates: Vec<Predicate>,
}

impl Constraint {
    pub fn new(predicates: Vec<Predicate>) -> Self {
        Constraint { predicates }
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }
}

pub fn satisfies(attrs: &Attrs, c: &Constraint) -> bool {
    c.predicates.iter().all(|p| p.holds(attrs))
}
