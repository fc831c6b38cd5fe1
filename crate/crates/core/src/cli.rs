//! Command-line front end. Every command prints one JSON document whose
//! first field is `"version": 1`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, QueryType};
use crate::dag::{Constraint, Predicate};
use crate::error::{MemoryError, Result};
use crate::ids::LogicId;
use crate::ingest::parse_records;
use crate::retrieve::{Query, RetrieveOptions};
use crate::store::{MemoryStore, StoreLock};

pub const OUTPUT_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "procmem", version, about = "Three-layer procedural memory store")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, default_value = ".procmem")]
    store: PathBuf,
    /// Config file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest JSONL observation records.
    Ingest { file: PathBuf },
    /// Mine recurring action patterns into LogicNodes.
    Distill,
    /// Ingest (if new) and apply records to the logic layer.
    Update { file: PathBuf },
    /// Fuse two LogicNodes, or every pair above the alignment threshold.
    Fuse {
        #[arg(long = "node", num_args = 1)]
        nodes: Vec<String>,
        #[arg(long, conflicts_with = "nodes")]
        auto: bool,
    },
    /// Ranked retrieval across all layers.
    Query {
        #[arg(long)]
        text: String,
        #[arg(long = "type", default_value = "auto")]
        qtype: String,
        #[arg(long = "where")]
        predicates: Vec<String>,
        #[arg(long)]
        person: Option<String>,
        #[arg(short = 'k', default_value_t = 10)]
        k: usize,
        #[arg(long)]
        no_logic: bool,
    },
    /// Paths of the procedure closest to a goal, optionally constrained.
    Proc {
        #[arg(long)]
        goal: String,
        #[arg(long = "where")]
        predicates: Vec<String>,
        /// Answer with episodic-only multi-hop retrieval instead.
        #[arg(long)]
        no_logic: bool,
    },
    /// Procedures involving a person.
    Character {
        #[arg(long)]
        person: String,
    },
    /// Expected steps to GOAL from a step.
    Expect {
        #[arg(long)]
        goal: String,
        #[arg(long)]
        from: String,
    },
    /// Layer sizes and totals.
    Stats,
    /// Global invariant sweep.
    Check,
}

#[derive(Serialize)]
struct Output<'a> {
    version: u32,
    command: &'a str,
    #[serde(flatten)]
    body: Value,
}

enum Failure {
    Usage(String),
    Data(MemoryError),
}

impl From<MemoryError> for Failure {
    fn from(e: MemoryError) -> Self {
        match e {
            MemoryError::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other),
        }
    }
}

/// Runs the CLI with process stdout/stderr; returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match execute(&cli) {
        Ok((name, body)) => {
            let doc = Output { version: OUTPUT_VERSION, command: name, body };
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("output serializes"));
            0
        }
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn load_config(path: Option<&Path>) -> std::result::Result<Option<Config>, Failure> {
    match path {
        None => Ok(None),
        Some(p) => Config::load(p).map(Some).map_err(|e| match e {
            MemoryError::Io(_) => Failure::Usage(format!("cannot read config {}: {e}", p.display())),
            other => Failure::Usage(other.to_string()),
        }),
    }
}

fn open_store(cli: &Cli) -> std::result::Result<MemoryStore, Failure> {
    let config = load_config(cli.config.as_deref())?;
    if MemoryStore::exists(&cli.store) {
        let mut s = MemoryStore::load(&cli.store)?;
        if let Some(c) = config {
            s.set_config(c)?;
        }
        Ok(s)
    } else {
        Ok(MemoryStore::new(config.unwrap_or_default())?)
    }
}

fn parse_constraint(preds: &[String]) -> std::result::Result<Option<Constraint>, Failure> {
    if preds.is_empty() {
        return Ok(None);
    }
    let ps = preds
        .iter()
        .map(|p| Predicate::parse(p))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(Some(Constraint::new(ps)))
}

fn parse_logic_id(s: &str) -> std::result::Result<LogicId, Failure> {
    s.trim_start_matches('L')
        .parse::<u64>()
        .map(LogicId)
        .map_err(|_| Failure::Usage(format!("`{s}` is not a LogicNode id")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("value serializes")
}

fn execute(cli: &Cli) -> std::result::Result<(&'static str, Value), Failure> {
    match &cli.command {
        Command::Ingest { file } => write_command(cli, "ingest", |s| {
            let recs = parse_records(&std::fs::read_to_string(file)?)?;
            let reports = recs.iter().map(|r| s.ingest_observation(r)).collect::<Result<Vec<_>>>()?;
            Ok(json!({ "ingested": reports.len(), "reports": reports }))
        }),
        Command::Distill => write_command(cli, "distill", |s| {
            let ids = s.distill()?;
            let created: Vec<Value> = ids
                .iter()
                .map(|id| {
                    let n = s.logic_node(*id).expect("just created");
                    json!({ "id": id, "goal": n.c, "steps": n.dag.step_indices().map(|i| n.dag.label(i)).collect::<Vec<_>>(), "score": n.score })
                })
                .collect();
            Ok(json!({ "created": created }))
        }),
        Command::Update { file } => write_command(cli, "update", |s| {
            let recs = parse_records(&std::fs::read_to_string(file)?)?;
            let reports = recs.iter().map(|r| s.observe(r)).collect::<Result<Vec<_>>>()?;
            Ok(json!({ "reports": reports }))
        }),
        Command::Fuse { nodes, auto } => {
            let pair = match (nodes.as_slice(), auto) {
                ([a, b], false) => Some((parse_logic_id(a)?, parse_logic_id(b)?)),
                ([], true) => None,
                _ => return Err(Failure::Usage("give exactly two --node ids, or --auto".into())),
            };
            write_command(cli, "fuse", |s| {
                let reports = match pair {
                    Some((a, b)) => vec![s.fuse_logic(a, b)?],
                    None => s.fuse_auto()?,
                };
                Ok(json!({ "fused": reports }))
            })
        }
        Command::Query { text, qtype, predicates, person, k, no_logic } => {
            let qtype = match qtype.as_str() {
                "auto" => None,
                t => Some(t.parse::<QueryType>()?),
            };
            let constraint = parse_constraint(predicates)?;
            if *k == 0 {
                return Err(Failure::Usage("-k must be positive".into()));
            }
            let s = open_store(cli)?;
            let q = Query::new(&s, text, qtype, constraint, person.clone()).map_err(|e| match e {
                MemoryError::InvalidInput(m) => Failure::Usage(m),
                other => Failure::Data(other),
            })?;
            let r = s.retrieve_with(&q, *k, RetrieveOptions { no_logic: *no_logic })?;
            Ok(("query", to_value(&r)))
        }
        Command::Proc { goal, predicates, no_logic } => {
            let constraint = parse_constraint(predicates)?.unwrap_or_default();
            let s = open_store(cli)?;
            s.reset_read_count();
            if *no_logic {
                let b = s.baseline_procedure(goal)?;
                return Ok(("proc", json!({ "mode": "episodic-only", "store_reads": b.calls, "steps": b.steps })));
            }
            let seq = s.query_step_sequence(goal, &constraint)?;
            let reads = s.read_count();
            let ev = s.get_procedure_with_evidence(goal)?;
            Ok((
                "proc",
                json!({
                    "mode": "symbolic",
                    "store_reads": reads,
                    "logic": seq.logic,
                    "goal": seq.goal,
                    "similarity": seq.similarity,
                    "paths": seq.paths,
                    "evidence": ev.evidence.iter().map(|e| json!({"id": e.id, "video": e.video, "t": e.t, "text": e.d})).collect::<Vec<_>>(),
                }),
            ))
        }
        Command::Character { person } => {
            let s = open_store(cli)?;
            let id = s.find_anchor(person).ok_or_else(|| MemoryError::UnknownPerson(person.clone()))?;
            let ids = s.aggregate_character_behaviors(id)?;
            let procs: Vec<Value> = ids
                .iter()
                .map(|l| json!({ "id": l, "goal": s.logic_node(*l).expect("listed").c }))
                .collect();
            Ok(("character", json!({ "person": id, "label": s.anchor(id).expect("found").label, "procedures": procs })))
        }
        Command::Expect { goal, from } => {
            let s = open_store(cli)?;
            let (id, e) = s.expected_steps(goal, from)?;
            Ok(("expect", json!({ "logic": id, "from": from, "expected_steps": e })))
        }
        Command::Stats => {
            let s = open_store(cli)?;
            Ok(("stats", to_value(&s.stats())))
        }
        Command::Check => {
            let s = open_store(cli)?;
            let problems = s.check();
            if let Some(first) = problems.first() {
                return Err(Failure::Data(MemoryError::CorruptSnapshot(format!(
                    "{} problem(s); first: {first}",
                    problems.len()
                ))));
            }
            Ok(("check", json!({ "ok": true, "stats": s.stats() })))
        }
    }
}

/// Runs `f` on the store under the writer lock and saves only on success.
fn write_command<F>(cli: &Cli, name: &'static str, f: F) -> std::result::Result<(&'static str, Value), Failure>
where
    F: FnOnce(&mut MemoryStore) -> Result<Value>,
{
    let _lock = StoreLock::acquire(&cli.store)?;
    let mut s = open_store(cli)?;
    let body = f(&mut s)?;
    s.save(&cli.store)?;
    Ok((name, body))
}
