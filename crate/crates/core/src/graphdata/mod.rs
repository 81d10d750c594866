//! Graph containers, TU-format ingestion, contextual subgraphs and k-shot
//! task sampling.

mod graph;
mod subgraph;
mod synthetic;
mod task;
mod tu;

pub use graph::{Graph, GraphBatch, GraphCollection};
pub use subgraph::{bfs_distances, contextual_subgraph, hop_neighborhood, Subgraph};
pub use synthetic::{synthetic_collection, SyntheticConfig};
pub use task::{instances_by_class, sample_kshot_task, FewShotTask, InstanceId, TaskLevel};
pub use tu::{parse_tu_dataset, write_tu_dataset};

/// Default hop radius of contextual subgraphs.
pub const DEFAULT_DELTA: usize = 1;
