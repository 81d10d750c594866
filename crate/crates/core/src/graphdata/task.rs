use std::fmt;

use rand::seq::index;

use super::GraphCollection;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskLevel {
    Node,
    Graph,
}

impl fmt::Display for TaskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskLevel::Node => "node",
            TaskLevel::Graph => "graph",
        })
    }
}

impl std::str::FromStr for TaskLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node" => Ok(TaskLevel::Node),
            "graph" => Ok(TaskLevel::Graph),
            _ => Err(Error::Config(format!("unknown task level {s:?} (node|graph)"))),
        }
    }
}

/// A classification instance: a node of some graph, or a whole graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InstanceId {
    Node { graph: usize, node: usize },
    Graph(usize),
}

impl InstanceId {
    pub fn graph(self) -> usize {
        match self {
            InstanceId::Node { graph, .. } | InstanceId::Graph(graph) => graph,
        }
    }
}

/// A k-shot episode: `k` labelled support instances per class plus a
/// disjoint query set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FewShotTask {
    pub level: TaskLevel,
    pub classes: Vec<usize>,
    pub k: usize,
    pub support: Vec<(InstanceId, usize)>,
    pub query: Vec<(InstanceId, usize)>,
}

/// Labelled instances of the collection at `level`, grouped by class.
pub fn instances_by_class(c: &GraphCollection, level: TaskLevel) -> Result<Vec<Vec<InstanceId>>> {
    match level {
        TaskLevel::Node => {
            let count = c
                .node_class_count()
                .ok_or_else(|| Error::Task(format!("{} has no node labels", c.name)))?;
            let mut by_class = vec![Vec::new(); count];
            for (gi, g) in c.graphs().iter().enumerate() {
                for (v, &l) in g.node_labels().unwrap_or(&[]).iter().enumerate() {
                    by_class[l].push(InstanceId::Node { graph: gi, node: v });
                }
            }
            Ok(by_class)
        }
        TaskLevel::Graph => {
            let count = c
                .graph_class_count()
                .ok_or_else(|| Error::Task(format!("{} has no graph labels", c.name)))?;
            let mut by_class = vec![Vec::new(); count];
            for (gi, g) in c.graphs().iter().enumerate() {
                if let Some(l) = g.graph_label() {
                    by_class[l].push(InstanceId::Graph(gi));
                }
            }
            Ok(by_class)
        }
    }
}

/// Samples a k-shot task over every class at `level`.
///
/// Per class, `k + q` instances are drawn uniformly without replacement
/// where `q = min(query_per_class, available - k)`; the first `k` form the
/// support set. A class needs at least `k + 1` instances. Node-level tasks
/// pool nodes from all graphs of the collection.
pub fn sample_kshot_task(
    c: &GraphCollection,
    level: TaskLevel,
    k: usize,
    query_per_class: usize,
    seed: u64,
) -> Result<FewShotTask> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let by_class = instances_by_class(c, level)?;
    let mut rng = rng::from_seed(seed);
    let mut task = FewShotTask {
        level,
        classes: (0..by_class.len()).collect(),
        k,
        support: Vec::with_capacity(k * by_class.len()),
        query: Vec::new(),
    };
    let required = k + usize::from(query_per_class > 0);
    for (class, pool) in by_class.iter().enumerate() {
        if pool.len() < required {
            return Err(Error::Sampling {
                class,
                available: pool.len(),
                required,
            });
        }
        let q = query_per_class.min(pool.len() - k);
        let picked = index::sample(&mut rng, pool.len(), k + q);
        for (n, i) in picked.iter().enumerate() {
            let entry = (pool[i], class);
            if n < k {
                task.support.push(entry);
            } else {
                task.query.push(entry);
            }
        }
    }
    Ok(task)
}
