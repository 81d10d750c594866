use std::collections::VecDeque;

use super::Graph;
use crate::error::{Error, Result};

/// A node subset of a parent graph together with its induced edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subgraph {
    /// Sorted, non-empty.
    pub nodes: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl Subgraph {
    /// Induced subgraph on `nodes` (deduplicated and sorted here).
    pub fn induced(g: &Graph, mut nodes: Vec<usize>) -> Result<Self> {
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            return Err(Error::Graph("subgraph must contain at least one node".into()));
        }
        if let Some(&last) = nodes.last() {
            if last >= g.num_nodes() {
                return Err(Error::Index {
                    what: "graph nodes",
                    index: last,
                    len: g.num_nodes(),
                });
            }
        }
        let edges = g
            .edges()
            .iter()
            .copied()
            .filter(|(u, v)| nodes.binary_search(u).is_ok() && nodes.binary_search(v).is_ok())
            .collect();
        Ok(Subgraph { nodes, edges })
    }

    /// The maximum subgraph: the graph itself.
    pub fn whole(g: &Graph) -> Self {
        Subgraph {
            nodes: (0..g.num_nodes()).collect(),
            edges: g.edges().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Hop distance from `source` to every node, `None` when unreachable or
/// farther than `max_hops`.
pub fn bfs_distances(g: &Graph, source: usize, max_hops: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.num_nodes()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap_or(0);
        if d == max_hops {
            continue;
        }
        for &w in g.neighbors(u) {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Nodes within `delta` hops of `v`, sorted.
pub fn hop_neighborhood(g: &Graph, v: usize, delta: usize) -> Result<Vec<usize>> {
    if v >= g.num_nodes() {
        return Err(Error::Index {
            what: "graph nodes",
            index: v,
            len: g.num_nodes(),
        });
    }
    Ok(bfs_distances(g, v, delta)
        .iter()
        .enumerate()
        .filter_map(|(u, d)| d.map(|_| u))
        .collect())
}

/// The contextual subgraph of `v`: every node within `delta` hops and the
/// edges among them.
pub fn contextual_subgraph(g: &Graph, v: usize, delta: usize) -> Result<Subgraph> {
    Subgraph::induced(g, hop_neighborhood(g, v, delta)?)
}
