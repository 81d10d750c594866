use rand::seq::SliceRandom;

use crate::graphdata::{Graph, GraphCollection};
use crate::rng;

/// `(v, a)` is an edge of graph `graph` and `(v, b)` is not.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub graph: usize,
    pub v: usize,
    pub a: usize,
    pub b: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
    /// Graphs without any usable anchor (no edge, or no non-edge).
    pub skipped_graphs: usize,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

fn anchors(g: &Graph) -> Vec<usize> {
    let n = g.num_nodes();
    (0..n).filter(|&v| g.degree(v) > 0 && g.degree(v) + 1 < n).collect()
}

/// Draws `per_graph` triplets from every graph that has both an edge and a
/// non-adjacent pair; `a` is uniform over the anchor's neighbors and `b`
/// uniform over its non-neighbors.
pub fn sample_triplets(c: &GraphCollection, per_graph: usize, seed: u64) -> TripletSet {
    let mut set = TripletSet::default();
    for (gi, g) in c.graphs().iter().enumerate() {
        let candidates = anchors(g);
        if candidates.is_empty() {
            set.skipped_graphs += 1;
            continue;
        }
        let mut rng = rng::from_seed(rng::child_seed(seed, gi as u64));
        for _ in 0..per_graph {
            let v = *candidates.choose(&mut rng).expect("non-empty");
            let a = *g.neighbors(v).choose(&mut rng).expect("anchor has a neighbor");
            let non_neighbors: Vec<usize> = (0..g.num_nodes()).filter(|&u| u != v && !g.has_edge(v, u)).collect();
            let b = *non_neighbors.choose(&mut rng).expect("anchor has a non-neighbor");
            set.triplets.push(Triplet { graph: gi, v, a, b });
        }
    }
    if set.skipped_graphs > 0 {
        log::warn!(
            "{}: skipped {} graph(s) without a non-adjacent pair",
            c.name,
            set.skipped_graphs
        );
    }
    set
}
