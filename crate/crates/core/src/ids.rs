//! Opaque identifiers. Every id is a monotonic integer allocated by the store.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident, $prefix:literal) => {
        $(#[$doc])*
        #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// Episodic and semantic nodes share one id space.
    NodeId,
    "n"
);
id_type!(AnchorId, "a");
id_type!(LogicId, "L");
id_type!(
    /// Supplied by the observation source, not allocated by the store.
    ObservationId,
    "o"
);

/// Next-id counters, persisted with the snapshot.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdCounters {
    pub next_node: u64,
    pub next_anchor: u64,
    pub next_logic: u64,
}

impl IdCounters {
    pub fn new() -> Self {
        IdCounters {
            next_node: 1,
            next_anchor: 1,
            next_logic: 1,
        }
    }

    pub fn node(&mut self) -> NodeId {
        let id = NodeId(self.next_node);
        self.next_node += 1;
        id
    }

    pub fn anchor(&mut self) -> AnchorId {
        let id = AnchorId(self.next_anchor);
        self.next_anchor += 1;
        id
    }

    pub fn logic(&mut self) -> LogicId {
        let id = LogicId(self.next_logic);
        self.next_logic += 1;
        id
    }
}
