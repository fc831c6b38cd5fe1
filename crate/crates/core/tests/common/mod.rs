#![allow(dead_code)]

use std::path::PathBuf;

use procmem::dag::{Attrs, ConstraintOp, EdgeStats};
use procmem::ingest::parse_records;
use procmem::{
    Config, Constraint, Description, MemoryStore, ObservationRecord, Outcome, PerceptKind, Predicate, ProceduralDag,
    Query, Vector, GOAL, START,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_records(name: &str) -> Vec<ObservationRecord> {
    parse_records(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

pub const SALAD_GOAL: &str = "procedure: chop_fruit → mix_fruit → serve_salad";
pub const CONSTRAINT_QUESTION: &str = "How can Jack make the fruit salad if the bowl is broken?";
pub const FACTUAL_QUESTION: &str = "When did Jack chop the fruit?";

/// Fruit-salad corpus ingested and distilled.
pub fn salad_store() -> MemoryStore {
    let mut s = MemoryStore::new(Config::default()).unwrap();
    for r in fixture_records("fruit_salad.jsonl") {
        s.ingest_observation(&r).unwrap();
    }
    s.distill().unwrap();
    s
}

pub fn no_bowl() -> Constraint {
    Constraint::new(vec![Predicate::new("tool", ConstraintOp::Neq, "bowl")])
}

/// The full fixture scenario as one JSON document.
pub fn salad_report() -> String {
    let mut s = MemoryStore::new(Config::default()).unwrap();
    for r in fixture_records("fruit_salad.jsonl") {
        s.ingest_observation(&r).unwrap();
    }
    let created = s.distill().unwrap();
    let before = s.query_step_sequence(SALAD_GOAL, &Constraint::default()).unwrap();
    let updates: Vec<_> =
        fixture_records("fruit_salad_update.jsonl").iter().map(|r| s.observe(r).unwrap()).collect();
    let after = s.query_step_sequence(SALAD_GOAL, &Constraint::default()).unwrap();
    let cq = Query::new(&s, CONSTRAINT_QUESTION, None, Some(no_bowl()), None).unwrap();
    let fq = Query::new(&s, FACTUAL_QUESTION, None, None, None).unwrap();
    let doc = json!({
        "version": 1,
        "created": created,
        "paths_before_update": before.paths,
        "updates": updates,
        "paths_after_update": after.paths,
        "constraint_query": s.retrieve(&cq, 5).unwrap(),
        "factual_query": s.retrieve(&fq, 5).unwrap(),
        "stats": s.stats(),
    });
    let mut out = serde_json::to_string_pretty(&doc).unwrap();
    out.push('\n');
    out
}

const TEMPLATES: &[&[&str]] = &[
    &["chop fruit", "mix fruit", "serve salad"],
    &["wash dishes", "dry dishes", "stack plates"],
    &["boil water", "pour tea", "serve tea"],
    &["open box", "install drill", "close box"],
];
const EXTRA_STEPS: &[&str] = &["rinse cup", "wipe table", "peel fruit"];
const PEOPLE: &[&str] = &["jack", "tom", "mary"];
const TOOLS: &[&str] = &["bowl", "pot", "knife", "tray"];

pub fn test_verbs() -> Vec<String> {
    [
        "chop", "mix", "serve", "wash", "dry", "stack", "boil", "pour", "open", "install", "close", "rinse", "wipe",
        "peel", "stir",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// A randomized store: several sources replaying noisy variants of a few
/// procedures, with people, attributes, outcomes and conclusions.
pub fn random_store(seed: u64) -> MemoryStore {
    let mut r = rng(seed);
    let cfg = Config { dim: 128, action_verbs: test_verbs(), ..Config::default() };
    let mut s = MemoryStore::new(cfg).unwrap();
    let mut introduced = [false; 3];
    let mut id = 1u64;
    let sources = r.gen_range(3..7);
    for v in 0..sources {
        let template = TEMPLATES[r.gen_range(0..TEMPLATES.len())];
        let mut steps: Vec<&str> = template.to_vec();
        if r.gen_bool(0.3) {
            let at = r.gen_range(0..=steps.len());
            steps.insert(at, EXTRA_STEPS.choose(&mut r).unwrap());
        }
        if r.gen_bool(0.2) {
            steps.remove(r.gen_range(0..steps.len()));
        }
        let who = r.gen_range(0..PEOPLE.len());
        let mut t = 0.0;
        for step in steps {
            let mut rec = ObservationRecord::new(id, format!("src{v}"), t);
            if !introduced[who] {
                rec = rec.perceive(PerceptKind::Face, Vector::basis(128, who * 10), PEOPLE[who]);
                introduced[who] = true;
            }
            let mut d = Description::new(format!("@{} {step}", PEOPLE[who]));
            if r.gen_bool(0.5) {
                d = d.with_attr("tool", TOOLS.choose(&mut r).unwrap());
            }
            if r.gen_bool(0.2) {
                d = d.with_outcome(Outcome::Failure);
            }
            rec = rec.describe(d);
            if r.gen_bool(0.15) {
                rec = rec.conclude("habit", &format!("@{} likes to {step}", PEOPLE[who]));
            }
            s.ingest_observation(&rec).unwrap();
            id += 1;
            t += r.gen_range(1.0..10.0);
        }
    }
    s.distill().unwrap();
    s
}

/// Random DAG on at most `max_steps` steps. Step `i` sits at topological
/// position `i - 1`; every step gets a predecessor and a successor.
pub fn random_dag(r: &mut ChaCha8Rng, max_steps: usize, labels: &[&str], edge_p: f64) -> ProceduralDag {
    let k = r.gen_range(1..=max_steps);
    let mut g = ProceduralDag::new();
    for _ in 0..k {
        let mut attrs = Attrs::new();
        if r.gen_bool(0.6) {
            attrs.insert("tool".into(), TOOLS.choose(r).unwrap().to_string());
        }
        if r.gen_bool(0.4) {
            attrs.insert("room".into(), ["kitchen", "garden"].choose(r).unwrap().to_string());
        }
        g.add_step(labels.choose(r).unwrap().to_string(), attrs);
    }
    // Positions: START 0, steps 1..=k, GOAL k+1.
    let order: Vec<usize> = std::iter::once(START).chain(2..2 + k).chain(std::iter::once(GOAL)).collect();
    let stats = |r: &mut ChaCha8Rng| EdgeStats::new(r.gen_range(0..6) as f64, r.gen_range(0..2) as f64);
    for a in 0..order.len() {
        for b in a + 1..order.len() {
            if (a, b) != (0, order.len() - 1) && r.gen_bool(edge_p) {
                let st = stats(r);
                g.set_edge(order[a], order[b], st);
            }
        }
    }
    for (pos, &v) in order.iter().enumerate().skip(1).take(k) {
        if g.in_degree(v) == 0 {
            let from = order[r.gen_range(0..pos)];
            let st = stats(r);
            g.set_edge(from, v, st);
        }
        if g.out_edges(v).next().is_none() {
            let to = order[r.gen_range(pos + 1..order.len())];
            let st = stats(r);
            g.set_edge(v, to, st);
        }
    }
    assert!(g.is_valid(), "{:?}", g.check_valid());
    g
}

pub fn random_constraint(r: &mut ChaCha8Rng) -> Constraint {
    let n = r.gen_range(0..3);
    let preds = (0..n)
        .map(|_| {
            let key = ["tool", "room"].choose(r).unwrap();
            let op = [ConstraintOp::Eq, ConstraintOp::Neq, ConstraintOp::Has, ConstraintOp::NotHas, ConstraintOp::In, ConstraintOp::NotIn]
                .choose(r)
                .copied()
                .unwrap();
            let value = match op {
                ConstraintOp::In | ConstraintOp::NotIn => "bowl|kitchen|pot".to_string(),
                _ => ["bowl", "pot", "kitchen", "garden", "*"].choose(r).unwrap().to_string(),
            };
            Predicate::new(*key, op, value)
        })
        .collect();
    Constraint::new(preds)
}
