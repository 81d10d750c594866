//! Small seeded planted-class datasets for demos and tests.
//!
//! Graph `g` with class `y` draws each node's class from a distribution
//! skewed towards `y mod node_classes`. Features are a one-hot of the node
//! class, swapped for a random class with probability `noise`. Edges form a
//! random spanning tree plus extra edges that prefer same-class endpoints.

use rand::Rng as _;

use super::{Graph, GraphCollection};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensorgrad::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub num_graphs: usize,
    pub graph_classes: usize,
    pub node_classes: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Probability that a node's feature names a random class.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_graphs: 60,
            graph_classes: 3,
            node_classes: 3,
            min_nodes: 8,
            max_nodes: 16,
            noise: 0.2,
        }
    }
}

pub fn synthetic_collection(name: &str, cfg: &SyntheticConfig, seed: u64) -> Result<GraphCollection> {
    if cfg.graph_classes == 0 || cfg.node_classes == 0 || cfg.min_nodes < 2 || cfg.max_nodes < cfg.min_nodes {
        return Err(Error::Config(format!("invalid synthetic config {cfg:?}")));
    }
    let mut r = rng::from_seed(seed);
    let mut graphs = Vec::with_capacity(cfg.num_graphs);
    for g in 0..cfg.num_graphs {
        let y = g % cfg.graph_classes;
        let n = r.gen_range(cfg.min_nodes..=cfg.max_nodes);
        let labels: Vec<usize> = (0..n)
            .map(|_| {
                if r.gen_bool(0.6) {
                    y % cfg.node_classes
                } else {
                    r.gen_range(0..cfg.node_classes)
                }
            })
            .collect();
        let mut x = Tensor::zeros(n, cfg.node_classes);
        for (v, &c) in labels.iter().enumerate() {
            let shown = if r.gen_bool(cfg.noise) { r.gen_range(0..cfg.node_classes) } else { c };
            x.row_mut(v)[shown] = 1.0;
        }
        let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (r.gen_range(0..v), v)).collect();
        for u in 0..n {
            for v in u + 1..n {
                let p = if labels[u] == labels[v] { 0.25 } else { 0.03 };
                if r.gen_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        graphs.push(Graph::new(x, edges, Some(labels), Some(y))?);
    }
    GraphCollection::new(name, graphs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_replay() {
        let cfg = SyntheticConfig::default();
        let a = synthetic_collection("S", &cfg, 4).unwrap();
        assert_eq!(a.len(), 60);
        assert_eq!(a.graph_class_count(), Some(3));
        assert_eq!(a.feature_dim(), 3);
        assert!(a.graphs().iter().all(|g| (8..=16).contains(&g.num_nodes())));
        assert_eq!(a.graphs(), synthetic_collection("S", &cfg, 4).unwrap().graphs());
        assert_ne!(a.graphs(), synthetic_collection("S", &cfg, 5).unwrap().graphs());
    }
}
