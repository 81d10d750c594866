//! Reader for the plain-text TU graph benchmark format.
//!
//! For a dataset `NAME` the directory holds:
//!
//! | file | content | required |
//! |------|---------|----------|
//! | `NAME_A.txt` | `i, j` edge rows, 1-based global node ids | yes |
//! | `NAME_graph_indicator.txt` | 1-based graph id of each node | yes |
//! | `NAME_graph_labels.txt` | integer label of each graph | yes |
//! | `NAME_node_labels.txt` | integer label of each node | no |
//! | `NAME_node_attributes.txt` | comma-separated floats per node | no |
//!
//! Edges usually appear in both directions and are stored once. Labels are
//! remapped to `0..count` in ascending order of the original values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Graph, GraphCollection};
use crate::error::{Error, Result};
use crate::tensorgrad::Tensor;

struct TextFile {
    name: String,
    /// `(1-based line number, trimmed content)` of non-blank lines.
    lines: Vec<(usize, String)>,
}

impl TextFile {
    fn read(dir: &Path, name: String) -> Result<Self> {
        let path = dir.join(&name);
        let text = fs::read_to_string(&path).map_err(|source| Error::Ingestion { path, source })?;
        Ok(Self::from_text(name, &text))
    }

    fn read_optional(dir: &Path, name: String) -> Result<Option<Self>> {
        if dir.join(&name).exists() {
            Self::read(dir, name).map(Some)
        } else {
            Ok(None)
        }
    }

    fn from_text(name: String, text: &str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim().to_string()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        TextFile { name, lines }
    }

    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Integrity {
            file: self.name.clone(),
            line,
            message: message.into(),
        }
    }

    /// Requires exactly `expected` records.
    fn expect_rows(&self, expected: usize, what: &str) -> Result<()> {
        if self.lines.len() > expected {
            let (line, _) = self.lines[expected];
            return Err(self.error(line, format!("unexpected extra row, only {expected} {what}")));
        }
        if self.lines.len() < expected {
            let line = self.lines.last().map_or(1, |(l, _)| l + 1);
            return Err(self.error(
                line,
                format!("{} rows but {expected} {what}", self.lines.len()),
            ));
        }
        Ok(())
    }

    fn integers(&self) -> Result<Vec<i64>> {
        self.lines
            .iter()
            .map(|(line, s)| {
                s.parse::<i64>()
                    .map_err(|_| self.error(*line, format!("expected an integer, got {s:?}")))
            })
            .collect()
    }
}

/// Maps arbitrary integer labels to `0..count` by ascending value.
fn remap_labels(raw: &[i64]) -> Vec<usize> {
    let index: BTreeMap<i64, usize> = {
        let mut distinct: Vec<i64> = raw.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        distinct.into_iter().enumerate().map(|(i, v)| (v, i)).collect()
    };
    raw.iter().map(|v| index[v]).collect()
}

pub fn parse_tu_dataset(dir: impl AsRef<Path>, name: &str) -> Result<GraphCollection> {
    let dir = dir.as_ref();
    let edges = TextFile::read(dir, format!("{name}_A.txt"))?;
    let indicator = TextFile::read(dir, format!("{name}_graph_indicator.txt"))?;
    let graph_labels = TextFile::read(dir, format!("{name}_graph_labels.txt"))?;
    let node_labels = TextFile::read_optional(dir, format!("{name}_node_labels.txt"))?;
    let attributes = TextFile::read_optional(dir, format!("{name}_node_attributes.txt"))?;

    // Graph membership and local numbering.
    let graph_of = indicator.integers()?;
    let num_nodes = graph_of.len();
    let num_graphs = graph_labels.lines.len();
    let mut local = Vec::with_capacity(num_nodes);
    let mut sizes = vec![0usize; num_graphs];
    for (k, &gid) in graph_of.iter().enumerate() {
        if gid < 1 || gid as usize > num_graphs {
            let line = indicator.lines[k].0;
            return Err(indicator.error(
                line,
                format!("graph id {gid} outside 1..={num_graphs} (graph label rows)"),
            ));
        }
        let g = gid as usize - 1;
        local.push(sizes[g]);
        sizes[g] += 1;
    }
    let graph_of: Vec<usize> = graph_of.iter().map(|&g| g as usize - 1).collect();

    let labels = remap_labels(&graph_labels.integers()?);

    let node_label_ids = match &node_labels {
        Some(f) => {
            f.expect_rows(num_nodes, "nodes in the graph indicator")?;
            Some(remap_labels(&f.integers()?))
        }
        None => None,
    };

    // Features: attributes, else one-hot node labels, else constant 1.
    let features: Vec<Vec<f64>> = if let Some(f) = &attributes {
        f.expect_rows(num_nodes, "nodes in the graph indicator")?;
        let mut rows = Vec::with_capacity(num_nodes);
        let mut width = None;
        for (line, s) in &f.lines {
            let row: Vec<f64> = s
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| f.error(*line, format!("bad float {:?}", t.trim())))
                })
                .collect::<Result<_>>()?;
            if let Some(w) = width {
                if row.len() != w {
                    return Err(f.error(*line, format!("{} attributes, expected {w}", row.len())));
                }
            }
            width = Some(row.len());
            rows.push(row);
        }
        rows
    } else if let Some(ids) = &node_label_ids {
        let width = ids.iter().max().map_or(0, |m| m + 1);
        ids.iter()
            .map(|&c| {
                let mut r = vec![0.0; width];
                r[c] = 1.0;
                r
            })
            .collect()
    } else {
        vec![vec![1.0]; num_nodes]
    };
    let width = features.first().map_or(1, Vec::len);

    let mut graph_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (line, s) in &edges.lines {
        let mut parts = s.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(edges.error(*line, format!("expected \"i, j\", got {s:?}")));
        };
        let parse = |t: &str| -> Result<usize> {
            match t.parse::<usize>() {
                Ok(i) if (1..=num_nodes).contains(&i) => Ok(i - 1),
                _ => Err(edges.error(*line, format!("node id {t:?} outside 1..={num_nodes}"))),
            }
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if graph_of[u] != graph_of[v] {
            return Err(edges.error(
                *line,
                format!(
                    "edge joins graphs {} and {}",
                    graph_of[u] + 1,
                    graph_of[v] + 1
                ),
            ));
        }
        if u != v {
            graph_edges[graph_of[u]].push((local[u], local[v]));
        }
    }

    let mut per_graph_features: Vec<Vec<f64>> = sizes.iter().map(|&s| Vec::with_capacity(s * width)).collect();
    let mut per_graph_labels: Vec<Vec<usize>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    for k in 0..num_nodes {
        per_graph_features[graph_of[k]].extend_from_slice(&features[k]);
        if let Some(ids) = &node_label_ids {
            per_graph_labels[graph_of[k]].push(ids[k]);
        }
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for (g, ((feats, edges_g), node_lab)) in per_graph_features
        .into_iter()
        .zip(graph_edges)
        .zip(per_graph_labels)
        .enumerate()
    {
        let x = Tensor::new(sizes[g], width, feats)?;
        let nl = node_label_ids.as_ref().map(|_| node_lab);
        graphs.push(Graph::new(x, edges_g, nl, Some(labels[g]))?);
    }
    GraphCollection::new(name, graphs)
}

/// Writes `c` in the TU layout under `dir` so that [`parse_tu_dataset`]
/// reads it back unchanged. Features go to `NAME_node_attributes.txt`; node
/// labels are written when every graph has them. Graphs without a label get
/// label 0.
pub fn write_tu_dataset(c: &GraphCollection, dir: impl AsRef<Path>, name: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let (mut a, mut indicator, mut graph_labels, mut node_labels, mut attributes) =
        (String::new(), String::new(), String::new(), String::new(), String::new());
    let with_node_labels = c.graphs().iter().all(|g| g.node_labels().is_some());
    let mut offset = 0;
    for (gi, g) in c.graphs().iter().enumerate() {
        for &(u, v) in g.edges() {
            let (u, v) = (u + offset + 1, v + offset + 1);
            a.push_str(&format!("{u}, {v}\n{v}, {u}\n"));
        }
        for v in 0..g.num_nodes() {
            indicator.push_str(&format!("{}\n", gi + 1));
            let row: Vec<String> = g.features().row(v).iter().map(f64::to_string).collect();
            attributes.push_str(&row.join(", "));
            attributes.push('\n');
        }
        if let (true, Some(labels)) = (with_node_labels, g.node_labels()) {
            for l in labels {
                node_labels.push_str(&format!("{l}\n"));
            }
        }
        graph_labels.push_str(&format!("{}\n", g.graph_label().unwrap_or(0)));
        offset += g.num_nodes();
    }
    fs::write(dir.join(format!("{name}_A.txt")), a)?;
    fs::write(dir.join(format!("{name}_graph_indicator.txt")), indicator)?;
    fs::write(dir.join(format!("{name}_graph_labels.txt")), graph_labels)?;
    fs::write(dir.join(format!("{name}_node_attributes.txt")), attributes)?;
    if with_node_labels {
        fs::write(dir.join(format!("{name}_node_labels.txt")), node_labels)?;
    }
    Ok(())
}
