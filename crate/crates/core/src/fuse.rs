//! Knowledge fusion: align two procedure DAGs, union their edges, and pool
//! their Bayesian statistics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dag::{DagIx, DagNode, EdgeStats, ProceduralDag, GOAL, START};
use crate::embed::{cosine, Embedder, Vector};
use crate::error::{MemoryError, Result};
use crate::ids::LogicId;
use crate::store::MemoryStore;

const TIGHT_EPS: f64 = 1e-9;

/// Minimum-cost assignment on a square matrix (O(n^3) shortest augmenting
/// paths with potentials). Among optimal assignments the lexicographically
/// smallest row -> column vector is returned.
pub fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is the virtual root.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    let mut col_to_row = vec![0usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
        col_to_row[j - 1] = p[j] - 1;
    }

    // Every perfect matching on tight edges is optimal; walk rows in order and
    // move each to its smallest tight column that still admits a perfect
    // matching of the remaining rows.
    let scale = cost.iter().flatten().fold(1.0f64, |m, c| m.max(c.abs()));
    let tight = |i: usize, j: usize| (cost[i][j] - u[i + 1] - v[j + 1]).abs() <= TIGHT_EPS * scale;
    let mut fixed = vec![false; n];
    for i in 0..n {
        for j in 0..row_to_col[i] {
            if !tight(i, j) || fixed[col_to_row[j]] {
                continue;
            }
            let r = col_to_row[j];
            let free = row_to_col[i];
            let mut seen = vec![false; n];
            seen[j] = true;
            if let Some(path) = alternating_path(r, free, n, &tight, &fixed, i, &col_to_row, &mut seen) {
                // path: (row, new column) pairs.
                for (row, col) in path {
                    row_to_col[row] = col;
                    col_to_row[col] = row;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
        fixed[i] = true;
    }
    row_to_col
}

#[allow(clippy::too_many_arguments)]
fn alternating_path(
    row: usize,
    target: usize,
    n: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    fixed: &[bool],
    pinned: usize,
    col_to_row: &[usize],
    seen: &mut [bool],
) -> Option<Vec<(usize, usize)>> {
    for col in 0..n {
        if seen[col] || !tight(row, col) {
            continue;
        }
        seen[col] = true;
        if col == target {
            return Some(vec![(row, col)]);
        }
        let next = col_to_row[col];
        if fixed[next] || next == pinned {
            continue;
        }
        if let Some(mut rest) = alternating_path(next, target, n, tight, fixed, pinned, col_to_row, seen) {
            rest.push((row, col));
            return Some(rest);
        }
    }
    None
}

/// Maximum-total-weight matching on a rectangular matrix; `result[i]` is the
/// column matched to row `i`, if any.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, |r| r.len());
    let n = rows.max(cols);
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i < rows && j < cols { -weights[i][j] } else { 0.0 }).collect())
        .collect();
    let assign = hungarian_min(&cost);
    (0..rows).map(|i| (assign[i] < cols).then_some(assign[i])).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub left: DagIx,
    pub right: DagIx,
    pub left_label: String,
    pub right_label: String,
    pub similarity: f64,
}

/// Step-node alignment; START and GOAL always align to each other and are
/// not listed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub pairs: Vec<AlignedPair>,
    pub unmatched1: Vec<DagIx>,
    pub unmatched2: Vec<DagIx>,
}

impl Alignment {
    pub fn partner_of_right(&self, right: DagIx) -> Option<DagIx> {
        self.pairs.iter().find(|p| p.right == right).map(|p| p.left)
    }
}

fn sorted_steps(g: &ProceduralDag) -> Vec<DagIx> {
    let mut s: Vec<DagIx> = g.step_indices().collect();
    s.sort_by(|&a, &b| g.label(a).cmp(g.label(b)).then(a.cmp(&b)));
    s
}

pub fn align_nodes(g1: &ProceduralDag, g2: &ProceduralDag, embedder: &dyn Embedder, tau_align: f64) -> Result<Alignment> {
    let rows = sorted_steps(g1);
    let cols = sorted_steps(g2);
    let e1: Vec<Vector> = rows.iter().map(|&i| embedder.embed(g1.label(i))).collect();
    let e2: Vec<Vector> = cols.iter().map(|&j| embedder.embed(g2.label(j))).collect();
    let mut sims = vec![vec![0.0; cols.len()]; rows.len()];
    for (i, a) in e1.iter().enumerate() {
        for (j, b) in e2.iter().enumerate() {
            sims[i][j] = cosine(a, b)?;
        }
    }
    let matching = max_weight_matching(&sims);
    let mut out = Alignment::default();
    let mut used2 = BTreeSet::new();
    for (i, m) in matching.iter().enumerate() {
        match m {
            Some(j) if sims[i][*j] >= tau_align => {
                used2.insert(cols[*j]);
                out.pairs.push(AlignedPair {
                    left: rows[i],
                    right: cols[*j],
                    left_label: g1.label(rows[i]).to_string(),
                    right_label: g2.label(cols[*j]).to_string(),
                    similarity: sims[i][*j],
                });
            }
            _ => out.unmatched1.push(rows[i]),
        }
    }
    out.unmatched1.sort_unstable();
    out.unmatched2 = g2.step_indices().filter(|j| !used2.contains(j)).collect();
    out.pairs.sort_by_key(|p| p.left);
    Ok(out)
}

/// Beta pooling of two posteriors that both started from Beta(1, 1).
pub fn pool_beta(a1: (f64, f64), a2: (f64, f64)) -> Result<(f64, f64)> {
    for (alpha, beta) in [a1, a2] {
        if !(alpha >= 1.0 && beta >= 1.0) {
            return Err(MemoryError::InvalidPrior { alpha, beta });
        }
    }
    Ok((a1.0 + a2.0 - 1.0, a1.1 + a2.1 - 1.0))
}

/// Dirichlet pseudo-count pooling with prior gamma 1.
pub fn pool_gamma(g1: f64, g2: f64) -> Result<f64> {
    if !(g1 >= 1.0 && g2 >= 1.0) {
        return Err(MemoryError::InvalidInput(format!("cannot pool gammas {g1} and {g2} below the unit prior")));
    }
    Ok(g1 + g2 - 1.0)
}

/// Fuses two DAGs once aligned. Node order: START, GOAL, the steps of `g1`,
/// then the unmatched steps of `g2`. Merged nodes keep `g1`'s label.
pub fn fuse_aligned(g1: &ProceduralDag, g2: &ProceduralDag, al: &Alignment) -> Result<ProceduralDag> {
    g1.ensure_valid()?;
    g2.ensure_valid()?;
    let mut out = ProceduralDag::new();
    let mut map1 = vec![usize::MAX; g1.node_count()];
    let mut map2 = vec![usize::MAX; g2.node_count()];
    for t in [START, GOAL] {
        map1[t] = t;
        map2[t] = t;
    }
    for i in g1.step_indices() {
        map1[i] = out.push_node(g1.nodes()[i].clone());
    }
    for p in &al.pairs {
        let (n1, n2) = (&g1.nodes()[p.left], &g2.nodes()[p.right]);
        let (alpha, beta) = pool_beta((n1.success_alpha, n1.success_beta), (n2.success_alpha, n2.success_beta))?;
        let merged = out.node_mut(map1[p.left]).expect("mapped node");
        for (k, v) in &n2.attrs {
            merged.attrs.entry(k.clone()).or_insert_with(|| v.clone());
        }
        merged.success_alpha = alpha;
        merged.success_beta = beta;
        map2[p.right] = map1[p.left];
    }
    for &j in &al.unmatched2 {
        let node: DagNode = g2.nodes()[j].clone();
        map2[j] = out.push_node(node);
    }
    if map2.contains(&usize::MAX) {
        return Err(MemoryError::InvalidInput("alignment does not cover every node of the second DAG".into()));
    }
    for ((f, t), e) in g1.edges() {
        out.set_edge(map1[f], map1[t], *e);
    }
    for ((f, t), e) in g2.edges() {
        let key = (map2[f], map2[t]);
        let stats = match out.edge(key.0, key.1) {
            Some(prev) => EdgeStats::new(prev.count + e.count, pool_gamma(prev.gamma, e.gamma)?),
            None => *e,
        };
        out.set_edge(key.0, key.1, stats);
    }
    if out.topological_order().is_none() {
        return Err(MemoryError::FusionCycle);
    }
    out.ensure_valid()?;
    Ok(out)
}

pub fn fuse(g1: &ProceduralDag, g2: &ProceduralDag, embedder: &dyn Embedder, tau_align: f64) -> Result<ProceduralDag> {
    let al = align_nodes(g1, g2, embedder, tau_align)?;
    fuse_aligned(g1, g2, &al)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuseReport {
    pub kept: LogicId,
    pub removed: LogicId,
    pub pairs: Vec<AlignedPair>,
    pub unmatched1: Vec<String>,
    pub unmatched2: Vec<String>,
    pub edges_before: (usize, usize),
    pub edges_after: usize,
    pub count_before: (f64, f64),
    pub count_after: f64,
}

impl MemoryStore {
    /// Replaces LogicNodes `a` and `b` by one node (keeping `a`'s id). On
    /// error the store is unchanged.
    pub fn fuse_logic(&mut self, a: LogicId, b: LogicId) -> Result<FuseReport> {
        if a == b {
            return Err(MemoryError::InvalidInput(format!("cannot fuse {a} with itself")));
        }
        let n1 = self.logic.get(&a).ok_or(MemoryError::UnknownLogic(a))?;
        let n2 = self.logic.get(&b).ok_or(MemoryError::UnknownLogic(b))?;
        let al = align_nodes(&n1.dag, &n2.dag, self.embedder.as_ref(), self.config.tau_align)?;
        let dag = fuse_aligned(&n1.dag, &n2.dag, &al)?;
        let i_goal = Vector::mean([&n1.i_goal, &n2.i_goal])?.expect("two vectors");
        let i_step = Vector::mean([&n1.i_step, &n2.i_step])?.expect("two vectors");
        let report = FuseReport {
            kept: a,
            removed: b,
            unmatched1: al.unmatched1.iter().map(|&i| n1.dag.label(i).to_string()).collect(),
            unmatched2: al.unmatched2.iter().map(|&j| n2.dag.label(j).to_string()).collect(),
            pairs: al.pairs,
            edges_before: (n1.dag.edge_count(), n2.dag.edge_count()),
            edges_after: dag.edge_count(),
            count_before: (n1.dag.total_count(), n2.dag.total_count()),
            count_after: dag.total_count(),
        };
        let other = self.remove_logic(b).expect("checked above");
        let node = self.logic.get_mut(&a).expect("checked above");
        node.dag = dag;
        node.i_goal = i_goal;
        node.i_step = i_step;
        node.episodic_links.extend(other.episodic_links);
        node.anchors.extend(other.anchors);
        node.score = node.score.max(other.score);
        for p in other.patterns {
            if !node.patterns.contains(&p) {
                node.patterns.push(p);
            }
        }
        self.upsert_logic_index(a)?;
        Ok(report)
    }

    /// Fuses every pair whose goal vectors have cosine >= tau_align, lowest
    /// id pair first, until no such pair remains. Pairs whose union would be
    /// cyclic are skipped.
    pub fn fuse_auto(&mut self) -> Result<Vec<FuseReport>> {
        let mut reports = Vec::new();
        let mut failed: BTreeSet<(LogicId, LogicId)> = BTreeSet::new();
        'outer: loop {
            let ids: Vec<LogicId> = self.logic.keys().copied().collect();
            for (x, &a) in ids.iter().enumerate() {
                for &b in &ids[x + 1..] {
                    if failed.contains(&(a, b)) {
                        continue;
                    }
                    let sim = cosine(&self.logic[&a].i_goal, &self.logic[&b].i_goal)?;
                    if sim < self.config.tau_align {
                        continue;
                    }
                    match self.fuse_logic(a, b) {
                        Ok(r) => {
                            reports.push(r);
                            continue 'outer;
                        }
                        Err(MemoryError::FusionCycle) => {
                            failed.insert((a, b));
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            return Ok(reports);
        }
    }
}

/// Every START -> GOAL path as a label list.
pub fn label_paths(g: &ProceduralDag) -> BTreeSet<Vec<String>> {
    fn walk(g: &ProceduralDag, v: DagIx, cur: &mut Vec<String>, out: &mut BTreeSet<Vec<String>>) {
        if v == GOAL {
            out.insert(cur.clone());
            return;
        }
        for (t, _) in g.out_edges(v) {
            if t != GOAL {
                cur.push(g.label(t).to_string());
            }
            walk(g, t, cur, out);
            if t != GOAL {
                cur.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(g, START, &mut Vec::new(), &mut out);
    out
}
