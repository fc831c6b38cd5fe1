//! A three-layer memory engine for long-horizon agents.
//!
//! Observation records are consolidated into episodic events, semantic
//! facts and entity anchors. Recurring action patterns are distilled into
//! LogicNodes: a procedural DAG with Bayesian transition and success
//! statistics, plus goal- and step-level index vectors. Queries are answered
//! by thresholded cross-layer retrieval and by deterministic functions over
//! the DAGs.
//!
//! ```
//! use procmem::{Config, Description, MemoryStore, ObservationRecord};
//!
//! let mut store = MemoryStore::new(Config::default()).unwrap();
//! let mut id = 1;
//! for video in ["v1", "v2"] {
//!     for (t, text) in ["chop the fruit", "mix the fruit", "serve the salad"].iter().enumerate() {
//!         let rec = ObservationRecord::new(id, video, t as f64).describe(Description::new(*text));
//!         store.ingest_observation(&rec).unwrap();
//!         id += 1;
//!     }
//! }
//! let created = store.distill().unwrap();
//! assert_eq!(created.len(), 1);
//! let goal = store.logic_node(created[0]).unwrap().c.clone();
//! let seq = store.query_step_sequence(&goal, &Default::default()).unwrap();
//! assert_eq!(seq.paths[0].steps, ["chop_fruit", "mix_fruit", "serve_salad"]);
//! ```

pub mod cli;
pub mod config;
pub mod dag;
pub mod distill;
pub mod embed;
pub mod error;
pub mod fuse;
pub mod ids;
pub mod index;
pub mod ingest;
pub mod maintain;
pub mod retrieve;
pub mod store;
pub mod symbolic;

pub use config::{Config, Layer, QueryType};
pub use dag::{Attrs, Constraint, ConstraintOp, DagNode, EdgeStats, Predicate, ProceduralDag, GOAL, START};
pub use distill::{prefixspan, ActionSequence, LogicNode, Pattern};
pub use embed::{cosine, Embedder, HashEmbedder, Vector};
pub use error::{MemoryError, Result};
pub use ids::{AnchorId, LogicId, NodeId, ObservationId};
pub use ingest::{Conclusion, Description, ObservationRecord, Outcome, Percept, PerceptKind};
pub use maintain::{ema_update, rebuild_vs_incremental_check, UpdateReport};
pub use retrieve::{classify, score_logic, Query, RetrievalResult, RetrieveOptions};
pub use store::MemoryStore;
pub use symbolic::{enumerate_paths, expected_steps_to_goal, PathReport};
