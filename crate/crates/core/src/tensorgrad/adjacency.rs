/// Compressed neighbor lists (CSR) used by the neighbor-sum primitive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Adjacency {
    /// Builds from per-row neighbor lists. Lists are stored as given.
    pub fn from_lists(lists: &[Vec<usize>]) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for l in lists {
            targets.extend_from_slice(l);
            offsets.push(targets.len());
        }
        Adjacency { offsets, targets }
    }

    pub fn empty(rows: usize) -> Self {
        Adjacency {
            offsets: vec![0; rows + 1],
            targets: Vec::new(),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_entries(&self) -> usize {
        self.targets.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn max_target(&self) -> Option<usize> {
        self.targets.iter().copied().max()
    }

    /// Block-diagonal union; row and target indices of part `p` are shifted
    /// by the total row count of parts `0..p`.
    pub fn disjoint_union<'a>(parts: impl IntoIterator<Item = &'a Adjacency>) -> Self {
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        let mut shift = 0;
        for part in parts {
            for i in 0..part.num_rows() {
                targets.extend(part.neighbors(i).iter().map(|&t| t + shift));
                offsets.push(targets.len());
            }
            shift += part.num_rows();
        }
        Adjacency { offsets, targets }
    }
}
