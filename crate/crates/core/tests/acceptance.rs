//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use procmem::dag::{satisfies, DagIx};
use procmem::distill::is_subsequence;
use procmem::fuse::{fuse, label_paths, pool_beta};
use procmem::index::{IndexKey, VectorIndex};
use procmem::retrieve::NodeRef;
use procmem::{
    ema_update, enumerate_paths, prefixspan, rebuild_vs_incremental_check, ActionSequence, Config, Constraint,
    DagNode, Description, EdgeStats, HashEmbedder, Layer, LogicId, LogicNode, MemoryStore, NodeId,
    ObservationRecord, ProceduralDag, Query, QueryType, Vector, GOAL, START,
};
use rand::seq::SliceRandom;
use rand::Rng;

// Tolerances and budgets.
const DETERMINISM_STORES: u64 = 20;
const DETERMINISM_REPEATS: usize = 100;
const DETERMINISM_BUDGET: Duration = Duration::from_secs(30);
const POSTERIOR_CHAINS: u64 = 5;
const POSTERIOR_SAMPLES: usize = 10_000;
const POSTERIOR_EARLY: usize = 100;
const POSTERIOR_TOL: f64 = 0.02;
const POSTERIOR_BUDGET: Duration = Duration::from_secs(10);
const FUSION_SPLITS: u64 = 100;
const FUSION_PAIRS: u64 = 50;
const FUSION_BUDGET: Duration = Duration::from_secs(10);
const MINING_CORPORA: u64 = 200;
const MINING_BUDGET: Duration = Duration::from_secs(30);
const PATH_DAGS: u64 = 200;
const PATH_PROB_TOL: f64 = 1e-9;
const PATH_BUDGET: Duration = Duration::from_secs(10);
const EMA_UPDATES: usize = 50;
const EMA_TOL: f64 = 1e-9;
const STREAM_SEQUENCES: u64 = 50;
const INDEX_VECTORS: usize = 10_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, budget: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < budget, format!("took {took:?}, budget {budget:?}"))?;
    Ok(took)
}

// 1. Symbolic operations are byte-identical across repeats and a save/load.
fn symbolic_outputs(s: &MemoryStore, seed: u64) -> Vec<String> {
    let mut r = rng(seed);
    let mut goals: Vec<String> = s.logic_nodes().map(|l| l.c.clone()).collect();
    goals.push("make something".into());
    let mut out = Vec::new();
    for goal in &goals {
        let c = random_constraint(&mut r);
        out.push(format!("{:?}", s.get_procedure_with_evidence(goal).map(|p| serde_json::to_string(&p).unwrap())));
        out.push(format!("{:?}", s.query_step_sequence(goal, &c).map(|p| serde_json::to_string(&p).unwrap())));
        out.push(format!("{:?}", s.expected_steps(goal, "START")));
    }
    for a in s.anchors() {
        out.push(format!("{:?}", s.aggregate_character_behaviors(a.id)));
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut ops = 0;
    for seed in 0..DETERMINISM_STORES {
        let s = random_store(1000 + seed);
        let reference = symbolic_outputs(&s, seed);
        for _ in 0..DETERMINISM_REPEATS {
            ensure(symbolic_outputs(&s, seed) == reference, format!("store {seed} changed between repeats"))?;
        }
        let path = dir.path().join(format!("s{seed}"));
        s.save(&path).map_err(|e| e.to_string())?;
        let loaded = MemoryStore::load(&path).map_err(|e| e.to_string())?;
        ensure(symbolic_outputs(&loaded, seed) == reference, format!("store {seed} changed across save/load"))?;
        ensure(loaded.to_json() == s.to_json(), format!("store {seed} snapshot not reproduced"))?;
        ops += reference.len();
    }
    let took = within(start, DETERMINISM_BUDGET)?;
    Ok(format!("{DETERMINISM_STORES} stores, {ops} ops x {DETERMINISM_REPEATS} + reload identical in {took:.2?}"))
}

// 2. Dirichlet posterior means converge to the generating probabilities.
fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut improved = 0;
    let mut worst = 0.0f64;
    for chain in 0..POSTERIOR_CHAINS {
        let mut r = rng(2000 + chain);
        let truth = random_dag(&mut r, 6, &["a", "b", "c", "d", "e", "f"], 0.45);
        let mut p_star: Vec<((DagIx, DagIx), f64)> = Vec::new();
        let mut learner = truth.clone();
        for ((f, t), _) in truth.edges() {
            learner.set_edge(f, t, EdgeStats::new(0.0, 1.0));
        }
        // Ground truth: random weights normalised per source node.
        let sources: BTreeSet<DagIx> = truth.edges().map(|((f, _), _)| f).collect();
        let mut targets = Vec::new();
        for &v in &sources {
            let outs: Vec<DagIx> = truth.out_edges(v).map(|(t, _)| t).collect();
            let w: Vec<f64> = outs.iter().map(|_| r.gen_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            for (t, x) in outs.iter().zip(&w) {
                p_star.push(((v, *t), x / total));
            }
            targets.push((v, outs, w.iter().map(|x| x / total).collect::<Vec<_>>()));
        }
        let err = |g: &ProceduralDag| -> f64 {
            p_star.iter().map(|((f, t), p)| (g.transition_prob(*f, *t).unwrap() - p).abs()).fold(0.0, f64::max)
        };
        let mut err_early = f64::NAN;
        for n in 1..=POSTERIOR_SAMPLES {
            for (v, outs, probs) in &targets {
                let u: f64 = r.gen();
                let mut acc = 0.0;
                let mut pick = *outs.last().unwrap();
                for (t, p) in outs.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        pick = *t;
                        break;
                    }
                }
                learner.observe_transition(*v, pick);
            }
            if n == POSTERIOR_EARLY {
                err_early = err(&learner);
            }
        }
        let err_final = err(&learner);
        worst = worst.max(err_final);
        ensure(err_final < POSTERIOR_TOL, format!("chain {chain}: max error {err_final:.4} >= {POSTERIOR_TOL}"))?;
        if err_final < err_early {
            improved += 1;
        }
    }
    ensure(improved >= 4, format!("error shrank in only {improved}/{POSTERIOR_CHAINS} chains"))?;
    let took = within(start, POSTERIOR_BUDGET)?;
    Ok(format!(
        "max |P-P*| = {worst:.4} < {POSTERIOR_TOL} after {POSTERIOR_SAMPLES} draws/state; shrank in {improved}/{POSTERIOR_CHAINS}; {took:.2?}"
    ))
}

// 3. Beta pooling equals the single-batch posterior; fused label paths equal
// the union of the inputs' label paths.
fn variant_of(r: &mut rand_chacha::ChaCha8Rng, base: &[String], vocab: &[&str]) -> Vec<String> {
    let mut v = base.to_vec();
    let fresh: Vec<String> = vocab.iter().map(|s| s.to_string()).filter(|x| !base.contains(x)).collect();
    match r.gen_range(0..3) {
        0 => {
            // Substitute one contiguous block.
            let i = r.gen_range(0..v.len());
            let j = r.gen_range(i..v.len().min(i + 2));
            let n = r.gen_range(1..3);
            let block: Vec<String> = fresh.choose_multiple(r, n).cloned().collect();
            v.splice(i..=j, block);
        }
        1 => {
            let i = r.gen_range(0..=v.len());
            let n = r.gen_range(1..3);
            let block: Vec<String> = fresh.choose_multiple(r, n).cloned().collect();
            v.splice(i..i, block);
        }
        _ => {
            if v.len() > 1 {
                let i = r.gen_range(0..v.len());
                let j = r.gen_range(i..v.len().min(i + 2)).min(v.len() - 1);
                if j - i + 1 < v.len() {
                    v.drain(i..=j);
                }
            }
        }
    }
    v
}

fn chain_dag(labels: &[String], r: &mut rand_chacha::ChaCha8Rng) -> ProceduralDag {
    let mut g = ProceduralDag::single_path(
        labels.iter().map(|l| DagNode::step(l.clone(), Default::default())).collect(),
        r.gen_range(1..5) as f64,
    );
    for ix in 2..g.node_count() {
        for _ in 0..r.gen_range(0..4) {
            let ok = r.gen_bool(0.7);
            g.node_mut(ix).unwrap().record_outcome(ok);
        }
    }
    g
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    for split in 0..FUSION_SPLITS {
        let mut r = rng(3000 + split);
        let trials: Vec<bool> = (0..r.gen_range(0..40)).map(|_| r.gen_bool(0.6)).collect();
        let cut = r.gen_range(0..=trials.len());
        let mut whole = DagNode::step("x", Default::default());
        let mut left = whole.clone();
        let mut right = whole.clone();
        for (i, &t) in trials.iter().enumerate() {
            whole.record_outcome(t);
            if i < cut { left.record_outcome(t) } else { right.record_outcome(t) }
        }
        let pooled = pool_beta((left.success_alpha, left.success_beta), (right.success_alpha, right.success_beta))
            .map_err(|e| e.to_string())?;
        ensure(pooled == (whole.success_alpha, whole.success_beta), format!("split {split}: {pooled:?}"))?;
    }
    let e = HashEmbedder::new(512);
    let vocab = ["wash", "peel", "chop", "mix", "stir", "bake", "cool", "slice", "plate", "serve", "pour", "whisk"];
    let (mut recombining, mut general_incl) = (0, 0);
    for pair in 0..FUSION_PAIRS {
        let mut r = rng(3500 + pair);
        let n = r.gen_range(2..6);
        let base: Vec<String> = vocab.choose_multiple(&mut r, n).map(|s| s.to_string()).collect();
        let other = variant_of(&mut r, &base, &vocab);
        let (g1, g2) = (chain_dag(&base, &mut r), chain_dag(&other, &mut r));
        let f12 = fuse(&g1, &g2, &e, 0.8).map_err(|x| format!("pair {pair}: {x}"))?;
        let f21 = fuse(&g2, &g1, &e, 0.8).map_err(|x| format!("pair {pair}: {x}"))?;
        let union: BTreeSet<Vec<String>> = label_paths(&g1).union(&label_paths(&g2)).cloned().collect();
        ensure(label_paths(&f12) == union, format!("pair {pair}: fused paths {:?} != {union:?}", label_paths(&f12)))?;
        ensure(label_paths(&f21) == union, format!("pair {pair}: reversed fusion differs"))?;
        ensure(f12.total_count() == g1.total_count() + g2.total_count(), format!("pair {pair}: counts not conserved"))?;
        ensure(f12.is_valid(), format!("pair {pair}: invalid fusion"))?;
        let stats = |g: &ProceduralDag| -> BTreeSet<(String, u64, u64)> {
            g.step_indices()
                .map(|i| {
                    let n = g.node(i).unwrap();
                    (n.label.clone(), n.success_alpha as u64, n.success_beta as u64)
                })
                .collect()
        };
        ensure(stats(&f12) == stats(&f21), format!("pair {pair}: pooled statistics depend on order"))?;

        // Unrestricted pair of chains over the same vocabulary: inclusion only.
        let m = r.gen_range(2..6);
        let free: Vec<String> = vocab.choose_multiple(&mut r, m).map(|s| s.to_string()).collect();
        let g3 = chain_dag(&free, &mut r);
        if let Ok(f) = fuse(&g1, &g3, &e, 0.8) {
            let (paths, want) = (label_paths(&f), label_paths(&g1).union(&label_paths(&g3)).cloned().collect::<BTreeSet<_>>());
            ensure(want.is_subset(&paths), format!("pair {pair}: fusion lost an input path"))?;
            general_incl += 1;
            if paths != want {
                recombining += 1;
            }
        }
    }
    let took = within(start, FUSION_BUDGET)?;
    Ok(format!(
        "{FUSION_SPLITS} splits exact; {FUSION_PAIRS} variant pairs path-set equal; unrestricted pairs: {general_incl} inclusion-checked, {recombining} add recombined paths; {took:.2?}"
    ))
}

// 4. PrefixSpan against exhaustive subsequence enumeration.
fn brute_patterns(seqs: &[ActionSequence], sigma: f64) -> Vec<(Vec<String>, Vec<usize>)> {
    let mut all: BTreeSet<Vec<String>> = BTreeSet::new();
    for s in seqs {
        let n = s.actions.len();
        for mask in 1u32..(1 << n) {
            if mask.count_ones() >= 2 {
                all.insert((0..n).filter(|i| mask & (1 << i) != 0).map(|i| s.actions[i].clone()).collect());
            }
        }
    }
    let mut out: Vec<(Vec<String>, Vec<usize>)> = all
        .into_iter()
        .map(|p| {
            let sup: Vec<usize> = (0..seqs.len()).filter(|&i| is_subsequence(&p, &seqs[i].actions)).collect();
            (p, sup)
        })
        .filter(|(_, sup)| sup.len() as f64 / seqs.len() as f64 >= sigma)
        .collect();
    out.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
    out
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let alphabet = ["a", "b", "c", "d", "e"];
    let mut patterns = 0;
    for corpus in 0..MINING_CORPORA {
        let mut r = rng(4000 + corpus);
        let seqs: Vec<ActionSequence> = (0..r.gen_range(1..=6))
            .map(|i| {
                let len = r.gen_range(0..=6);
                let acts: Vec<&str> = (0..len).map(|_| *alphabet.choose(&mut r).unwrap()).collect();
                ActionSequence::from_actions(&format!("v{i}"), &acts)
            })
            .collect();
        let sigma = *[0.1, 0.3, 0.5, 0.75, 1.0].choose(&mut r).unwrap();
        let got: Vec<(Vec<String>, Vec<usize>)> =
            prefixspan(&seqs, sigma).into_iter().map(|p| (p.steps, p.supporting_sequences)).collect();
        let want = brute_patterns(&seqs, sigma);
        ensure(got == want, format!("corpus {corpus} (sigma {sigma}): {} mined vs {} expected", got.len(), want.len()))?;
        patterns += want.len();
    }
    let took = within(start, MINING_BUDGET)?;
    Ok(format!("{MINING_CORPORA} corpora, {patterns} patterns identical to enumeration; {took:.2?}"))
}

// 5. Constrained path enumeration against subset enumeration.
fn oracle_prob(g: &ProceduralDag, f: DagIx, t: DagIx) -> f64 {
    let outs: Vec<&EdgeStats> = g.out_edges(f).map(|(_, e)| e).collect();
    let total: f64 = outs.iter().map(|e| e.gamma + e.count).sum();
    let e = g.edge(f, t).unwrap();
    if total > 0.0 { (e.gamma + e.count) / total } else { 1.0 / outs.len() as f64 }
}

fn oracle_paths(g: &ProceduralDag, c: &Constraint) -> Vec<(Vec<DagIx>, f64)> {
    // On a DAG whose step indices are a topological order, a path is fixed by
    // its node set.
    let steps: Vec<DagIx> = g.step_indices().collect();
    let mut out = Vec::new();
    for mask in 0u32..(1 << steps.len()) {
        let chosen: Vec<DagIx> = (0..steps.len()).filter(|i| mask & (1 << i) != 0).map(|i| steps[i]).collect();
        if !chosen.iter().all(|&v| satisfies(&g.node(v).unwrap().attrs, c)) {
            continue;
        }
        let full: Vec<DagIx> = std::iter::once(START).chain(chosen.iter().copied()).chain(std::iter::once(GOAL)).collect();
        if full.windows(2).all(|w| g.edge(w[0], w[1]).is_some()) {
            let p = full.windows(2).map(|w| oracle_prob(g, w[0], w[1])).product();
            out.push((chosen, p));
        }
    }
    out
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut paths = 0;
    let mut worst_sum = 0.0f64;
    for d in 0..PATH_DAGS {
        let mut r = rng(5000 + d);
        let g = random_dag(&mut r, 8, &["a", "b", "c", "d"], 0.4);
        let c = random_constraint(&mut r);
        let got = enumerate_paths(&g, &c, 10_000, 64).map_err(|e| e.to_string())?;
        let mut got_set: Vec<(Vec<DagIx>, f64)> = got.iter().map(|p| (p.nodes.clone(), p.probability)).collect();
        let mut want = oracle_paths(&g, &c);
        got_set.sort_by(|a, b| a.0.cmp(&b.0));
        want.sort_by(|a, b| a.0.cmp(&b.0));
        ensure(got_set.len() == want.len(), format!("dag {d}: {} paths vs {} expected", got_set.len(), want.len()))?;
        for ((gn, gp), (wn, wp)) in got_set.iter().zip(&want) {
            ensure(gn == wn && (gp - wp).abs() <= 1e-12, format!("dag {d}: path {gn:?} p={gp} vs {wn:?} p={wp}"))?;
        }
        ensure(
            got.windows(2).all(|w| w[0].probability > w[1].probability
                || (w[0].probability == w[1].probability && w[0].steps <= w[1].steps)),
            format!("dag {d}: output not sorted"),
        )?;
        let all = enumerate_paths(&g, &Constraint::default(), 10_000, 64).map_err(|e| e.to_string())?;
        let sum: f64 = all.iter().map(|p| p.probability).sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        ensure((sum - 1.0).abs() <= PATH_PROB_TOL, format!("dag {d}: probabilities sum to {sum}"))?;
        paths += got.len();
    }
    let took = within(start, PATH_BUDGET)?;
    Ok(format!("{PATH_DAGS} DAGs, {paths} constrained paths match; max |sum-1| = {worst_sum:.1e}; {took:.2?}"))
}

// 6. EMA closed form.
fn criterion_6() -> Outcome {
    let mut r = rng(6000);
    let dim = 16;
    let rand_vec = |r: &mut rand_chacha::ChaCha8Rng| Vector::new((0..dim).map(|_| r.gen_range(-1.0..1.0)).collect());
    let beta: f64 = r.gen_range(0.5..0.99);
    let i0 = rand_vec(&mut r);
    let os: Vec<Vector> = (0..EMA_UPDATES).map(|_| rand_vec(&mut r)).collect();
    let mut node = LogicNode {
        id: LogicId(1),
        c: String::new(),
        i_goal: i0.clone(),
        i_step: i0.clone(),
        dag: ProceduralDag::new(),
        episodic_links: Default::default(),
        anchors: Default::default(),
        score: 1.0,
        patterns: Vec::new(),
    };
    for o in &os {
        ema_update(&mut node, o, beta).map_err(|e| e.to_string())?;
    }
    let t = EMA_UPDATES as i32;
    let mut worst = 0.0f64;
    for j in 0..dim {
        let mut expect = beta.powi(t) * i0.as_slice()[j];
        for (k, o) in os.iter().enumerate() {
            expect += (1.0 - beta) * beta.powi(t - (k as i32 + 1)) * o.as_slice()[j];
        }
        worst = worst.max((node.i_goal.as_slice()[j] - expect).abs());
        worst = worst.max((node.i_step.as_slice()[j] - expect).abs());
    }
    ensure(worst <= EMA_TOL, format!("max deviation {worst:e}"))?;
    Ok(format!("{EMA_UPDATES} updates, beta {beta:.3}: max deviation {worst:.1e} <= {EMA_TOL:e}"))
}

// 7. Streaming updates equal batch recomputation.
fn criterion_7() -> Outcome {
    let steps = ["chop fruit", "mix fruit", "serve salad", "stir fruit", "peel fruit", "wash fruit"];
    let base = salad_store();
    let (mut rejected, mut updated, mut pooled) = (0, 0, 0);
    for case in 0..STREAM_SEQUENCES {
        let mut r = rng(7000 + case);
        let records: Vec<ObservationRecord> = (0..r.gen_range(3..12))
            .map(|i| {
                let n = r.gen_range(2..5);
                let mut rec = ObservationRecord::new(1000 + i, format!("stream{i}"), 0.0);
                for _ in 0..n {
                    rec = rec.describe(Description::new(format!("@jack {}", steps.choose(&mut r).unwrap())));
                }
                rec
            })
            .collect();
        ensure(
            rebuild_vs_incremental_check(&base, &records).map_err(|e| e.to_string())?,
            format!("sequence {case}: incremental and batch counts differ"),
        )?;
        let mut live = base.clone();
        for rec in &records {
            let rep = live.observe(rec).map_err(|e| e.to_string())?;
            rejected += rep.rejected_cycle.len();
            updated += rep.updated as usize;
            pooled += rep.pool.pooled as usize;
        }
        ensure(live.check().is_empty(), format!("sequence {case}: {:?}", live.check()))?;
    }
    ensure(rejected > 0, "no sequence exercised a cycle rejection")?;
    Ok(format!(
        "{STREAM_SEQUENCES} sequences equal; {updated} gated updates, {pooled} pooled, {rejected} cycle rejections"
    ))
}

// 8. Retrieval contract.
fn criterion_8() -> Outcome {
    let mut boundary = 0;
    for seed in 0..20u64 {
        let mut s = random_store(8000 + seed);
        let logic: Vec<LogicNode> = s.logic_nodes().cloned().collect();
        if logic.is_empty() {
            continue;
        }
        let mut r = rng(8100 + seed);
        let texts: Vec<String> = s.episodic_nodes().map(|e| e.d.clone()).collect();
        for _ in 0..10 {
            let text = texts.choose(&mut r).unwrap().clone();
            for alpha in [0.0, 1.0] {
                let mut cfg = s.config().clone();
                cfg.alpha = alpha;
                s.set_config(cfg).map_err(|e| e.to_string())?;
                let q = Query::new(&s, &text, Some(QueryType::Character), None, None).map_err(|e| e.to_string())?;
                let res = s.retrieve(&q, usize::MAX).map_err(|e| e.to_string())?;
                let single = |l: &LogicNode| procmem::cosine(&q.q_vec, if alpha == 1.0 { &l.i_goal } else { &l.i_step }).unwrap();
                let mut best: Option<(LogicId, f64)> = None;
                for l in &logic {
                    let v = single(l);
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some((l.id, v));
                    }
                }
                let (best_id, best_v) = best.unwrap();
                let top = res.ranked.iter().find_map(|x| match x.node {
                    NodeRef::Logic(id) => Some(id),
                    _ => None,
                });
                if best_v > s.config().theta_retrieve {
                    ensure(top == Some(best_id), format!("alpha {alpha}: top logic {top:?}, single-term argmax {best_id}"))?;
                    boundary += 1;
                } else {
                    ensure(top.is_none(), "logic node above threshold with sub-threshold score")?;
                }
                // Within-layer order follows score_init.
                for layer in [Layer::Episodic, Layer::Semantic, Layer::Logic] {
                    let seq: Vec<(f64, NodeRef)> =
                        res.ranked.iter().filter(|x| x.node.layer() == layer).map(|x| (x.score_init, x.node)).collect();
                    ensure(
                        seq.windows(2).all(|w| w[0].0 > w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1)),
                        format!("{layer:?} order differs from score_init order"),
                    )?;
                }
            }
        }
    }
    ensure(boundary > 0, "no boundary case had a logic node above threshold")?;

    let mut r = rng(8500);
    let dim = 32;
    let mut idx = VectorIndex::new(dim);
    let mut vecs = Vec::new();
    for i in 0..INDEX_VECTORS {
        let v = Vector::new((0..dim).map(|_| r.gen_range(-1.0..1.0)).collect());
        idx.upsert(IndexKey::Episodic(NodeId(i as u64)), v.clone()).map_err(|e| e.to_string())?;
        vecs.push(v);
    }
    for _ in 0..20 {
        let q = Vector::new((0..dim).map(|_| r.gen_range(-1.0..1.0)).collect());
        let got = idx.search(&q, 10).map_err(|e| e.to_string())?;
        let mut all: Vec<(f64, usize)> =
            vecs.iter().enumerate().map(|(i, v)| (procmem::cosine(&q, v).unwrap(), i)).collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (g, w) in got.iter().zip(&all[..10]) {
            ensure(g.0 == IndexKey::Episodic(NodeId(w.1 as u64)) && (g.1 - w.0).abs() < 1e-12, "index top-k differs from scan")?;
        }
    }
    Ok(format!(
        "{boundary} alpha-boundary argmax checks; within-layer order preserved; top-10 of {INDEX_VECTORS} vectors equals scan"
    ))
}

// 9. Fruit-salad scenario with a committed golden report.
fn criterion_9() -> Outcome {
    let mut s = MemoryStore::new(Config::default()).map_err(|e| e.to_string())?;
    for rec in fixture_records("fruit_salad.jsonl") {
        s.ingest_observation(&rec).map_err(|e| e.to_string())?;
    }
    let created = s.distill().map_err(|e| e.to_string())?;
    ensure(created.len() == 1 && s.logic_nodes().count() == 1, format!("distill produced {} nodes", created.len()))?;
    let plain = s.query_step_sequence(SALAD_GOAL, &Constraint::default()).map_err(|e| e.to_string())?;
    ensure(plain.paths.iter().any(|p| p.steps.contains(&"mix_fruit".to_string())), "no unconstrained path uses mix")?;
    for rec in fixture_records("fruit_salad_update.jsonl") {
        let rep = s.observe(&rec).map_err(|e| e.to_string())?;
        ensure(rep.updated, "update record did not pass the gate")?;
    }
    let q = Query::new(&s, CONSTRAINT_QUESTION, None, Some(no_bowl()), None).map_err(|e| e.to_string())?;
    let res = s.retrieve(&q, 5).map_err(|e| e.to_string())?;
    let proc = res.answer_context.procedure.as_ref().ok_or("constraint query has no procedure context")?;
    ensure(!proc.paths.iter().any(|p| p.steps.contains(&"mix_fruit".to_string())), "a constrained path uses mix")?;
    ensure(!proc.paths.is_empty(), "no surviving alternative")?;
    ensure(proc.blocked == ["mix_fruit"], format!("blocked steps {:?}", proc.blocked))?;
    ensure(!proc.evidence.is_empty(), "no evidence for the alternative")?;
    let fq = Query::new(&s, FACTUAL_QUESTION, None, None, None).map_err(|e| e.to_string())?;
    let fres = s.retrieve(&fq, 5).map_err(|e| e.to_string())?;
    let top = fres.ranked.first().ok_or("factual query returned nothing")?;
    let chop = match top.node {
        NodeRef::Episodic(id) => s.episodic_node(id).and_then(|e| e.action.clone()),
        _ => None,
    };
    ensure(chop.as_deref() == Some("chop_fruit"), format!("top factual hit is {:?}", top.node))?;

    let report = salad_report();
    let golden_path = fixture("fruit_salad.golden.json");
    if std::env::var_os("PROCMEM_BLESS").is_some() {
        std::fs::write(&golden_path, &report).map_err(|e| e.to_string())?;
    }
    let golden = std::fs::read_to_string(&golden_path).map_err(|e| format!("golden file: {e}"))?;
    ensure(report == golden, "report differs from the golden file")?;
    Ok(format!(
        "1 LogicNode; constrained: {} path(s) avoid mix ({}); factual top hit chop_fruit; golden matches",
        proc.paths.len(),
        proc.paths[0].steps.join(" -> ")
    ))
}

// 10. Store touches: one symbolic call versus episodic-only multi-hop.
fn criterion_10() -> Outcome {
    let mut s = salad_store();
    for rec in fixture_records("fruit_salad_update.jsonl") {
        s.observe(&rec).map_err(|e| e.to_string())?;
    }
    s.reset_read_count();
    let seq = s.query_step_sequence(SALAD_GOAL, &Constraint::default()).map_err(|e| e.to_string())?;
    let symbolic = s.read_count();
    ensure(symbolic == 1, format!("symbolic path touched the store {symbolic} times"))?;
    s.reset_read_count();
    let base = s.baseline_procedure(SALAD_GOAL).map_err(|e| e.to_string())?;
    ensure(base.calls == s.read_count(), "baseline call count disagrees with the store counter")?;
    ensure(base.calls >= 3, format!("baseline used only {} calls", base.calls))?;
    Ok(format!(
        "symbolic: 1 call, {} paths; episodic-only baseline: {} calls for {} steps",
        seq.paths.len(),
        base.calls,
        base.steps.len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("determinism", criterion_1),
        ("posterior consistency", criterion_2),
        ("fusion exactness", criterion_3),
        ("pattern-mining oracle", criterion_4),
        ("path-query oracle", criterion_5),
        ("EMA closed form", criterion_6),
        ("incremental = batch", criterion_7),
        ("retrieval ranking contract", criterion_8),
        ("end-to-end fixture", criterion_9),
        ("store-touch count", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
