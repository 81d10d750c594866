use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensorgrad::{Adjacency, Tensor};

/// Undirected, unweighted graph with dense node features.
///
/// Edges are stored once as `(u, v)` with `u < v`; neighbor queries are
/// symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    edges: Vec<(usize, usize)>,
    adjacency: Arc<Adjacency>,
    features: Tensor,
    node_labels: Option<Vec<usize>>,
    graph_label: Option<usize>,
}

impl Graph {
    /// Builds a graph. Edges may be given in either direction and repeated;
    /// self-loops and out-of-range endpoints are rejected.
    pub fn new(
        features: Tensor,
        edges: impl IntoIterator<Item = (usize, usize)>,
        node_labels: Option<Vec<usize>>,
        graph_label: Option<usize>,
    ) -> Result<Self> {
        let n = features.rows();
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!("edge ({u}, {v}) outside {n} nodes")));
            }
            if u == v {
                return Err(Error::Graph(format!("self-loop on node {u}")));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();
        if let Some(labels) = &node_labels {
            if labels.len() != n {
                return Err(Error::Graph(format!(
                    "{} node labels for {n} nodes",
                    labels.len()
                )));
            }
        }
        let mut lists = vec![Vec::new(); n];
        for &(u, v) in &canon {
            lists[u].push(v);
            lists[v].push(u);
        }
        for l in &mut lists {
            l.sort_unstable();
        }
        Ok(Graph {
            edges: canon,
            adjacency: Arc::new(Adjacency::from_lists(&lists)),
            features,
            node_labels,
            graph_label,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn adjacency(&self) -> &Arc<Adjacency> {
        &self.adjacency
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.adjacency.neighbors(v)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes() && self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn node_labels(&self) -> Option<&[usize]> {
        self.node_labels.as_deref()
    }

    pub fn graph_label(&self) -> Option<usize> {
        self.graph_label
    }

    /// Same topology and labels, different features.
    pub fn with_features(&self, features: Tensor) -> Result<Graph> {
        if features.shape() != self.features.shape() {
            return Err(Error::shape(
                "with_features",
                format!("{:?} vs {:?}", features.shape(), self.features.shape()),
            ));
        }
        Ok(Graph {
            features,
            ..self.clone()
        })
    }

    /// Subgraph induced by `nodes` (any order, no duplicates), renumbered in
    /// the given order.
    pub fn induced(&self, nodes: &[usize]) -> Result<Graph> {
        let mut position = vec![usize::MAX; self.num_nodes()];
        for (new, &old) in nodes.iter().enumerate() {
            if old >= self.num_nodes() {
                return Err(Error::Index {
                    what: "graph nodes",
                    index: old,
                    len: self.num_nodes(),
                });
            }
            position[old] = new;
        }
        let rows: Vec<&[f64]> = nodes.iter().map(|&v| self.features.row(v)).collect();
        let features = Tensor::new(
            nodes.len(),
            self.feature_dim(),
            rows.concat(),
        )?;
        let edges = self
            .edges
            .iter()
            .filter(|(u, v)| position[*u] != usize::MAX && position[*v] != usize::MAX)
            .map(|&(u, v)| (position[u], position[v]));
        let labels = self
            .node_labels
            .as_ref()
            .map(|l| nodes.iter().map(|&v| l[v]).collect());
        Graph::new(features, edges, labels, self.graph_label)
    }
}

/// An ordered set of graphs sharing one feature width.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphCollection {
    pub name: String,
    graphs: Vec<Graph>,
    feature_dim: usize,
    node_class_count: Option<usize>,
    graph_class_count: Option<usize>,
}

fn class_count<'a>(labels: impl Iterator<Item = &'a usize>, what: &str) -> Result<Option<usize>> {
    let distinct: BTreeSet<usize> = labels.copied().collect();
    if distinct.is_empty() {
        return Ok(None);
    }
    let count = distinct.len();
    if distinct.iter().next_back() != Some(&(count - 1)) {
        return Err(Error::Graph(format!(
            "{what} labels are not contiguous from 0: {distinct:?}"
        )));
    }
    Ok(Some(count))
}

impl GraphCollection {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>) -> Result<Self> {
        let feature_dim = graphs.first().map_or(0, Graph::feature_dim);
        if let Some(i) = graphs.iter().position(|g| g.feature_dim() != feature_dim) {
            return Err(Error::Graph(format!(
                "graph {i} has feature width {}, expected {feature_dim}",
                graphs[i].feature_dim()
            )));
        }
        let with_node_labels = graphs.iter().filter(|g| g.node_labels.is_some()).count();
        if with_node_labels != 0 && with_node_labels != graphs.len() {
            return Err(Error::Graph("node labels present on only some graphs".into()));
        }
        let with_graph_labels = graphs.iter().filter(|g| g.graph_label.is_some()).count();
        if with_graph_labels != 0 && with_graph_labels != graphs.len() {
            return Err(Error::Graph("graph labels present on only some graphs".into()));
        }
        let node_class_count = class_count(
            graphs.iter().flat_map(|g| g.node_labels().unwrap_or(&[])),
            "node",
        )?;
        let graph_class_count = class_count(
            graphs.iter().filter_map(|g| g.graph_label.as_ref()),
            "graph",
        )?;
        Ok(GraphCollection {
            name: name.into(),
            graphs,
            feature_dim,
            node_class_count,
            graph_class_count,
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn graph(&self, i: usize) -> Result<&Graph> {
        self.graphs.get(i).ok_or(Error::Index {
            what: "collection",
            index: i,
            len: self.graphs.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn node_class_count(&self) -> Option<usize> {
        self.node_class_count
    }

    pub fn graph_class_count(&self) -> Option<usize> {
        self.graph_class_count
    }

    pub fn total_nodes(&self) -> usize {
        self.graphs.iter().map(Graph::num_nodes).sum()
    }

    pub fn mean_nodes(&self) -> f64 {
        self.total_nodes() as f64 / self.graphs.len().max(1) as f64
    }

    pub fn mean_edges(&self) -> f64 {
        self.graphs.iter().map(Graph::num_edges).sum::<usize>() as f64
            / self.graphs.len().max(1) as f64
    }
}

/// Disjoint union of several graphs, laid out as one block-diagonal graph so
/// a single encoder pass covers all of them.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub features: Tensor,
    pub adjacency: Arc<Adjacency>,
    offsets: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[&Graph]) -> Result<Self> {
        let width = graphs.first().map_or(0, |g| g.feature_dim());
        let mut offsets = Vec::with_capacity(graphs.len() + 1);
        let mut data = Vec::new();
        let mut rows = 0;
        offsets.push(0);
        for g in graphs {
            if g.feature_dim() != width {
                return Err(Error::shape(
                    "graph_batch",
                    format!("feature width {} vs {width}", g.feature_dim()),
                ));
            }
            data.extend_from_slice(g.features().data());
            rows += g.num_nodes();
            offsets.push(rows);
        }
        Ok(GraphBatch {
            features: Tensor::new(rows, width, data)?,
            adjacency: Arc::new(Adjacency::disjoint_union(
                graphs.iter().map(|g| g.adjacency().as_ref()),
            )),
            offsets,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Row of node `v` of member graph `g`.
    pub fn row(&self, g: usize, v: usize) -> usize {
        self.offsets[g] + v
    }

    /// Rows occupied by member graph `g`.
    pub fn rows_of(&self, g: usize) -> std::ops::Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path(n: usize) -> Graph {
        Graph::new(
            Tensor::ones(n, 1),
            (0..n.saturating_sub(1)).map(|i| (i, i + 1)),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn edges_are_canonical_and_deduplicated() {
        let g = Graph::new(Tensor::ones(3, 1), [(1, 0), (0, 1), (2, 1)], None, None).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(g.has_edge(1, 0) && g.has_edge(0, 1));
        assert!(!g.has_edge(0, 2));
        assert_eq!(g.neighbors(1), &[0, 2]);
    }

    #[test]
    fn rejects_self_loops_and_bad_endpoints() {
        assert!(Graph::new(Tensor::ones(2, 1), [(0, 0)], None, None).is_err());
        assert!(Graph::new(Tensor::ones(2, 1), [(0, 2)], None, None).is_err());
        assert!(Graph::new(Tensor::ones(2, 1), [], Some(vec![0]), None).is_err());
    }

    #[test]
    fn induced_subgraph_keeps_inner_edges() {
        let g = path(5);
        let s = g.induced(&[3, 1, 2]).unwrap();
        assert_eq!(s.num_nodes(), 3);
        // 3->0, 1->1, 2->2: edges (1,2) and (2,3) become (1,2) and (0,2)
        assert_eq!(s.edges(), &[(0, 2), (1, 2)]);
    }

    #[test]
    fn collection_checks_widths_and_labels() {
        let a = Graph::new(Tensor::ones(2, 1), [(0, 1)], Some(vec![0, 1]), Some(0)).unwrap();
        let b = Graph::new(Tensor::ones(1, 2), [], Some(vec![0]), Some(1)).unwrap();
        assert!(GraphCollection::new("x", vec![a.clone(), b]).is_err());
        let c = Graph::new(Tensor::ones(1, 1), [], Some(vec![2]), Some(1)).unwrap();
        let ok = GraphCollection::new("x", vec![a.clone(), c]).unwrap();
        assert_eq!(ok.node_class_count(), Some(3));
        assert_eq!(ok.graph_class_count(), Some(2));
        let gap = Graph::new(Tensor::ones(1, 1), [], Some(vec![5]), Some(1)).unwrap();
        assert!(GraphCollection::new("x", vec![a, gap]).is_err());
    }

    #[test]
    fn batch_offsets_rows() {
        let (a, b) = (path(2), path(3));
        let batch = GraphBatch::new(&[&a, &b]).unwrap();
        assert_eq!(batch.num_nodes(), 5);
        assert_eq!(batch.row(1, 0), 2);
        assert_eq!(batch.rows_of(1), 2..5);
        assert_eq!(batch.adjacency.neighbors(3), &[2, 4]);
    }
}
