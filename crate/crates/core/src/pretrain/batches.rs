//! Builders that materialize targets, positives and negatives for the
//! contrastive objectives.
//!
//! Every builder returns a [`ContrastiveSet`]: a list of view graphs, a list
//! of instances (node sets within a view, embedded by sum readout) and the
//! batches indexing into those instances.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use super::loss::ContrastiveBatch;
use crate::encoder::ReadoutPlan;
use crate::error::{Error, Result};
use crate::graphdata::{hop_neighborhood, Graph, GraphBatch, GraphCollection};
use crate::rng::{self, Rng};

/// A node set of one view graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub view: usize,
    pub nodes: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct ContrastiveSet {
    pub views: Vec<Graph>,
    pub instances: Vec<Instance>,
    pub batches: Vec<ContrastiveBatch>,
    /// Targets dropped because no valid positive or negative existed.
    pub skipped: usize,
}

impl ContrastiveSet {
    fn push_view(&mut self, g: Graph) -> usize {
        self.views.push(g);
        self.views.len() - 1
    }

    fn push_instance(&mut self, view: usize, nodes: Vec<usize>) -> usize {
        self.instances.push(Instance { view, nodes });
        self.instances.len() - 1
    }

    fn push_whole(&mut self, view: usize) -> usize {
        let n = self.views[view].num_nodes();
        self.push_instance(view, (0..n).collect())
    }

    /// All views laid out as one block-diagonal graph.
    pub fn graph_batch(&self) -> Result<GraphBatch> {
        GraphBatch::new(&self.views.iter().collect::<Vec<_>>())
    }

    /// Readout plan producing one row per instance, in instance order.
    pub fn readout_plan(&self, batch: &GraphBatch) -> ReadoutPlan {
        ReadoutPlan::new(self.instances.iter().map(|inst| {
            inst.nodes
                .iter()
                .map(|&v| batch.row(inst.view, v))
                .collect::<Vec<_>>()
        }))
    }

    fn finish(self) -> Result<Self> {
        if self.batches.is_empty() {
            return Err(Error::Batch("no contrastive batch could be built".into()));
        }
        Ok(self)
    }
}

fn graph_rng(seed: u64, g: usize) -> Rng {
    rng::from_seed(rng::child_seed(seed, g as u64))
}

/// Copy of `g` with its feature rows shuffled; topology untouched.
pub fn corrupt_features(g: &Graph, rng: &mut Rng) -> Result<Graph> {
    let mut order: Vec<usize> = (0..g.num_nodes()).collect();
    order.shuffle(rng);
    let x = g.features();
    let data = order.iter().flat_map(|&v| x.row(v).iter().copied()).collect();
    g.with_features(crate::tensorgrad::Tensor::new(x.rows(), x.cols(), data)?)
}

/// Removes `floor(ratio * n)` uniformly chosen nodes, always keeping one.
pub fn drop_nodes(g: &Graph, ratio: f64, rng: &mut Rng) -> Result<Graph> {
    let n = g.num_nodes();
    let drop = ((ratio * n as f64).floor() as usize).min(n.saturating_sub(1));
    if drop == 0 {
        return Ok(g.clone());
    }
    let mut keep = index::sample(rng, n, n - drop).into_vec();
    keep.sort_unstable();
    g.induced(&keep)
}

/// Removes `floor(ratio * |E|)` uniformly chosen edges and adds as many new
/// random non-edges (fewer when the graph is nearly complete).
pub fn perturb_edges(g: &Graph, ratio: f64, rng: &mut Rng) -> Result<Graph> {
    let n = g.num_nodes();
    let m = (ratio * g.num_edges() as f64).floor() as usize;
    if m == 0 {
        return Ok(g.clone());
    }
    let removed: BTreeSet<usize> = index::sample(rng, g.num_edges(), m).into_iter().collect();
    let mut edges: BTreeSet<(usize, usize)> = g
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, &e)| e)
        .collect();
    let mut added = 0;
    let mut attempts = 0;
    while added < m && attempts < 100 * m {
        attempts += 1;
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let e = (u.min(v), u.max(v));
        if u != v && !g.has_edge(u, v) && edges.insert(e) {
            added += 1;
        }
    }
    Graph::new(g.features().clone(), edges, g.node_labels().map(<[usize]>::to_vec), g.graph_label())
}

/// Per graph: target is the whole-graph readout, positives are its node
/// embeddings, negatives the node embeddings of a feature-shuffled copy.
pub fn make_dgi_batches(c: &GraphCollection, seed: u64) -> Result<ContrastiveSet> {
    let mut set = ContrastiveSet::default();
    for (gi, g) in c.graphs().iter().enumerate() {
        let corrupted = corrupt_features(g, &mut graph_rng(seed, gi))?;
        let real = set.push_view(g.clone());
        let fake = set.push_view(corrupted);
        let target = set.push_whole(real);
        let positives = (0..g.num_nodes()).map(|v| set.push_instance(real, vec![v])).collect();
        let negatives = (0..g.num_nodes()).map(|v| set.push_instance(fake, vec![v])).collect();
        set.batches.push(ContrastiveBatch { target, positives, negatives });
    }
    set.finish()
}

/// Per graph: target is the whole-graph readout, positives its nodes,
/// negatives `negatives` nodes drawn from other graphs (graph uniformly,
/// then node uniformly).
pub fn make_infograph_batches(c: &GraphCollection, negatives: usize, seed: u64) -> Result<ContrastiveSet> {
    if c.len() < 2 {
        return Err(Error::Config(format!(
            "{} has {} graph(s); negatives need a second graph",
            c.name,
            c.len()
        )));
    }
    if negatives == 0 {
        return Err(Error::Config("negatives per target must be positive".into()));
    }
    let mut set = ContrastiveSet::default();
    for g in c.graphs() {
        set.push_view(g.clone());
    }
    let mut node_ids: Vec<Vec<usize>> = Vec::with_capacity(c.len());
    for (gi, g) in c.graphs().iter().enumerate() {
        node_ids.push((0..g.num_nodes()).map(|v| set.push_instance(gi, vec![v])).collect());
    }
    for gi in 0..c.len() {
        let mut rng = graph_rng(seed, gi);
        let target = set.push_whole(gi);
        let negs = (0..negatives)
            .map(|_| {
                let mut other = rng.gen_range(0..c.len() - 1);
                if other >= gi {
                    other += 1;
                }
                *node_ids[other].choose(&mut rng).expect("graphs have nodes")
            })
            .collect();
        set.batches.push(ContrastiveBatch {
            target,
            positives: node_ids[gi].clone(),
            negatives: negs,
        });
    }
    set.finish()
}

/// Per graph: target is a node-dropped view, positive an edge-perturbed
/// view, negatives the edge-perturbed views of up to `negatives` other
/// graphs.
pub fn make_graphcl_batches(c: &GraphCollection, ratio: f64, negatives: usize, seed: u64) -> Result<ContrastiveSet> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Config(format!("augmentation ratio must be in [0, 1), got {ratio}")));
    }
    if c.len() < 2 {
        return Err(Error::Config(format!("{} needs at least two graphs for negatives", c.name)));
    }
    if negatives == 0 {
        return Err(Error::Config("negatives per target must be positive".into()));
    }
    let mut set = ContrastiveSet::default();
    let mut views_i = Vec::with_capacity(c.len());
    let mut views_j = Vec::with_capacity(c.len());
    for (gi, g) in c.graphs().iter().enumerate() {
        let mut rng = graph_rng(seed, gi);
        let gi_view = drop_nodes(g, ratio, &mut rng)?;
        let gj_view = perturb_edges(g, ratio, &mut rng)?;
        let vi = set.push_view(gi_view);
        let vj = set.push_view(gj_view);
        views_i.push(set.push_whole(vi));
        views_j.push(set.push_whole(vj));
    }
    let others = c.len() - 1;
    for gi in 0..c.len() {
        let mut rng = rng::from_seed(rng::child_seed(rng::stream_seed(seed, "negatives"), gi as u64));
        let negs = index::sample(&mut rng, others, negatives.min(others))
            .into_iter()
            .map(|o| views_j[if o >= gi { o + 1 } else { o }])
            .collect();
        set.batches.push(ContrastiveBatch {
            target: views_i[gi],
            positives: vec![views_j[gi]],
            negatives: negs,
        });
    }
    set.finish()
}

/// Random-walk sampling parameters for the GCC-style objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GccParams {
    /// Egonet radius of targets and positives.
    pub r: usize,
    /// Egonet radius of negatives.
    pub r_prime: usize,
    /// Nodes visited per walk, start included.
    pub walk_len: usize,
    pub negatives: usize,
    /// Anchor nodes per graph; `None` uses every node.
    pub anchors_per_graph: Option<usize>,
}

impl Default for GccParams {
    fn default() -> Self {
        GccParams {
            r: 1,
            r_prime: 2,
            walk_len: 8,
            negatives: 4,
            anchors_per_graph: Some(8),
        }
    }
}

/// Distinct nodes visited by a simple random walk of `len` nodes from `start`
/// that never leaves `allowed` (sorted).
pub fn random_walk_nodes(g: &Graph, start: usize, allowed: &[usize], len: usize, rng: &mut Rng) -> Vec<usize> {
    let mut visited = BTreeSet::from([start]);
    let mut current = start;
    for _ in 1..len {
        let options: Vec<usize> = g
            .neighbors(current)
            .iter()
            .copied()
            .filter(|u| allowed.binary_search(u).is_ok())
            .collect();
        let Some(&next) = options.choose(rng) else { break };
        visited.insert(next);
        current = next;
    }
    visited.into_iter().collect()
}

/// Per anchor node: target and a distinct positive are walk-induced
/// subgraphs of its `r`-egonet, negatives come from its `r'`-egonet. Every
/// subgraph is encoded as a standalone graph.
pub fn make_gcc_batches(c: &GraphCollection, params: GccParams, seed: u64) -> Result<ContrastiveSet> {
    if params.r == params.r_prime {
        return Err(Error::Config(format!("egonet radii must differ, both are {}", params.r)));
    }
    if params.walk_len == 0 || params.negatives == 0 {
        return Err(Error::Config("walk length and negatives must be positive".into()));
    }
    const POSITIVE_RETRIES: usize = 8;
    let mut set = ContrastiveSet::default();
    for (gi, g) in c.graphs().iter().enumerate() {
        let mut rng = graph_rng(seed, gi);
        let n = g.num_nodes();
        let mut anchors = match params.anchors_per_graph {
            Some(a) if a < n => index::sample(&mut rng, n, a).into_vec(),
            _ => (0..n).collect(),
        };
        anchors.sort_unstable();
        for v in anchors {
            let ego = hop_neighborhood(g, v, params.r)?;
            if ego.len() < 2 {
                set.skipped += 1;
                continue;
            }
            let target = random_walk_nodes(g, v, &ego, params.walk_len, &mut rng);
            let positive = (0..POSITIVE_RETRIES)
                .map(|_| random_walk_nodes(g, v, &ego, params.walk_len, &mut rng))
                .find(|p| *p != target);
            let Some(positive) = positive else {
                set.skipped += 1;
                continue;
            };
            let wide = hop_neighborhood(g, v, params.r_prime)?;
            let negatives: Vec<Vec<usize>> = (0..params.negatives)
                .map(|_| random_walk_nodes(g, v, &wide, params.walk_len, &mut rng))
                .collect();
            let mut add = |nodes: &[usize]| -> Result<usize> {
                let view = set.push_view(g.induced(nodes)?);
                Ok(set.push_whole(view))
            };
            let target = add(&target)?;
            let positives = vec![add(&positive)?];
            let negatives = negatives.iter().map(|nodes| add(nodes)).collect::<Result<_>>()?;
            set.batches.push(ContrastiveBatch { target, positives, negatives });
        }
    }
    set.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::bfs_distances;
    use crate::tensorgrad::Tensor;

    fn path(n: usize) -> Graph {
        let x = Tensor::new(n, 2, (0..2 * n).map(|i| i as f64).collect()).unwrap();
        Graph::new(x, (0..n - 1).map(|i| (i, i + 1)), None, None).unwrap()
    }

    fn collection(graphs: Vec<Graph>) -> GraphCollection {
        GraphCollection::new("t", graphs).unwrap()
    }

    #[test]
    fn dgi_counts_and_single_node_identity() {
        let single = Graph::new(Tensor::ones(1, 2), [], None, None).unwrap();
        let set = make_dgi_batches(&collection(vec![path(3), single]), 0).unwrap();
        assert_eq!(set.batches[0].positives.len(), 3);
        assert_eq!(set.batches[0].negatives.len(), 3);
        // 1-node graph: the corrupted view equals the original
        assert_eq!(set.views[2], set.views[3]);
    }

    #[test]
    fn dgi_corruption_is_a_row_permutation_and_replayable() {
        let c = collection(vec![path(6)]);
        let a = make_dgi_batches(&c, 4).unwrap();
        let b = make_dgi_batches(&c, 4).unwrap();
        assert_eq!(a.views, b.views);
        let mut orig: Vec<Vec<u64>> = (0..6).map(|v| a.views[0].features().row(v).iter().map(|x| x.to_bits()).collect()).collect();
        let mut shuf: Vec<Vec<u64>> = (0..6).map(|v| a.views[1].features().row(v).iter().map(|x| x.to_bits()).collect()).collect();
        orig.sort();
        shuf.sort();
        assert_eq!(orig, shuf);
        assert_eq!(a.views[0].edges(), a.views[1].edges());
    }

    #[test]
    fn infograph_counts_and_negatives_from_other_graphs() {
        let c = collection(vec![path(4), path(2), path(3)]);
        let set = make_infograph_batches(&c, 5, 1).unwrap();
        for (gi, b) in set.batches.iter().enumerate() {
            assert_eq!(b.positives.len(), c.graphs()[gi].num_nodes());
            assert_eq!(b.negatives.len(), 5);
            assert!(b.negatives.iter().all(|&i| set.instances[i].view != gi));
        }
        assert_eq!(make_infograph_batches(&c, 5, 1).unwrap().batches, set.batches);
        assert!(matches!(
            make_infograph_batches(&collection(vec![path(3)]), 5, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn node_dropping_removes_floor_of_ratio() {
        let g = path(10);
        let dropped = drop_nodes(&g, 0.2, &mut rng::from_seed(0)).unwrap();
        assert_eq!(dropped.num_nodes(), 8);
        let tiny = drop_nodes(&path(2), 0.9, &mut rng::from_seed(0)).unwrap();
        assert_eq!(tiny.num_nodes(), 1);
    }

    #[test]
    fn edge_perturbation_keeps_edge_count() {
        let g = path(10);
        let p = perturb_edges(&g, 0.4, &mut rng::from_seed(3)).unwrap();
        assert_eq!(p.num_edges(), g.num_edges());
        assert_ne!(p.edges(), g.edges());
    }

    #[test]
    fn graphcl_zero_ratio_views_are_identical() {
        let c = collection(vec![path(5), path(4)]);
        let set = make_graphcl_batches(&c, 0.0, 8, 2).unwrap();
        let b = &set.batches[0];
        let (t, p) = (&set.instances[b.target], &set.instances[b.positives[0]]);
        assert_eq!(set.views[t.view], set.views[p.view]);
        assert_eq!(b.negatives.len(), 1);
        assert_eq!(make_graphcl_batches(&c, 0.2, 8, 2).unwrap().views, make_graphcl_batches(&c, 0.2, 8, 2).unwrap().views);
    }

    #[test]
    fn walk_of_length_one_is_singleton() {
        let g = path(5);
        let nodes = random_walk_nodes(&g, 2, &[1, 2, 3], 1, &mut rng::from_seed(0));
        assert_eq!(nodes, vec![2]);
    }

    #[test]
    fn gcc_respects_egonet_radii() {
        let g = path(7);
        let c = collection(vec![g.clone()]);
        let params = GccParams { anchors_per_graph: None, ..GccParams::default() };
        let set = make_gcc_batches(&c, params, 5).unwrap();
        assert!(!set.batches.is_empty());
        // feature row i of the path holds (2i, 2i + 1), which recovers parent ids
        let parent_nodes = |inst: usize| -> Vec<usize> {
            let view = &set.views[set.instances[inst].view];
            (0..view.num_nodes()).map(|v| (view.features().get(v, 0) / 2.0) as usize).collect()
        };
        let within = |nodes: &[usize], center: usize, radius: usize| {
            let d = bfs_distances(&g, center, radius);
            nodes.iter().all(|&u| d[u].is_some())
        };
        let mut saw_wider = false;
        for b in &set.batches {
            let (t, p) = (parent_nodes(b.target), parent_nodes(b.positives[0]));
            assert_ne!(t, p);
            // target and positive together span three path nodes, so the
            // anchor is the unique node whose 1-ball covers both
            let center = (0..7).find(|&v| within(&t, v, 1) && within(&p, v, 1)).unwrap();
            for &n in &b.negatives {
                let nodes = parent_nodes(n);
                assert!(within(&nodes, center, 2));
                saw_wider |= !within(&nodes, center, 1);
            }
        }
        assert!(saw_wider);
        assert!(make_gcc_batches(&c, GccParams { r_prime: 1, ..params }, 5).is_err());
    }
}
