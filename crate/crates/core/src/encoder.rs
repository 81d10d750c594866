//! GIN-0 message-passing encoder, subgraph readout and prompted variants.
//!
//! Each layer computes `H^l = relu(relu((H^{l-1} + A H^{l-1}) W1 + b1) W2 + b2)`
//! with `H^0 = X`. A layer prompt `p` replaces `H^l` by `p ⊙ H^l` (row-wise)
//! before layer `l + 1` consumes it; at `l = L` the output itself is scaled.
//!
//! All forward passes go through the [`Tape`], so the plain functions and the
//! training paths share one operation order.
//!
//! # Checkpoint layout
//!
//! Little-endian binary:
//!
//! ```text
//! b"GPCK"  u32 version (=1)  u32 layers  u32 input_dim  u32 hidden_dim
//! per layer: W1 [in x hidden], b1 [hidden], W2 [hidden x hidden], b2 [hidden]
//! ```
//!
//! every matrix row-major as `f64`.

use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graphdata::{Graph, GraphBatch, Subgraph};
use crate::rng::Rng;
use crate::tensorgrad::{Adjacency, Tape, Tensor, Var};

pub const DEFAULT_LAYERS: usize = 3;
pub const DEFAULT_HIDDEN: usize = 32;

const MAGIC: &[u8; 4] = b"GPCK";
const VERSION: u32 = 1;

/// Weights of one GIN layer's two-layer perceptron.
#[derive(Clone, Debug, PartialEq)]
pub struct GinLayer {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<GinLayer>,
    input_dim: usize,
    hidden_dim: usize,
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect();
    Tensor::new(rows, cols, data).expect("sized by construction")
}

impl EncoderParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, num_layers: usize, rng: &mut Rng) -> Result<Self> {
        if num_layers == 0 || hidden_dim == 0 || input_dim == 0 {
            return Err(Error::Config(format!(
                "encoder needs positive dims, got layers={num_layers} input={input_dim} hidden={hidden_dim}"
            )));
        }
        let layers = (0..num_layers)
            .map(|l| {
                let fan_in = if l == 0 { input_dim } else { hidden_dim };
                GinLayer {
                    w1: glorot(fan_in, hidden_dim, rng),
                    b1: Tensor::zeros(1, hidden_dim),
                    w2: glorot(hidden_dim, hidden_dim, rng),
                    b2: Tensor::zeros(1, hidden_dim),
                }
            })
            .collect();
        Ok(EncoderParams {
            layers,
            input_dim,
            hidden_dim,
        })
    }

    /// Assembles parameters from explicit layers, validating every width.
    pub fn from_layers(layers: Vec<GinLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("encoder needs at least one layer".into()))?;
        let (input_dim, hidden_dim) = (first.w1.rows(), first.w1.cols());
        for (l, layer) in layers.iter().enumerate() {
            let fan_in = if l == 0 { input_dim } else { hidden_dim };
            let ok = layer.w1.shape() == [fan_in, hidden_dim]
                && layer.b1.shape() == [1, hidden_dim]
                && layer.w2.shape() == [hidden_dim, hidden_dim]
                && layer.b2.shape() == [1, hidden_dim];
            if !ok {
                return Err(Error::shape("encoder_params", format!("layer {} widths", l + 1)));
            }
            if [&layer.w1, &layer.b1, &layer.w2, &layer.b2].iter().any(|t| !t.is_finite()) {
                return Err(Error::Numeric {
                    op: format!("encoder layer {}", l + 1),
                });
            }
        }
        Ok(EncoderParams {
            layers,
            input_dim,
            hidden_dim,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// Width of `H^l`: the feature width at `l = 0`, hidden width otherwise.
    pub fn layer_width(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }

    /// All tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.w1, &l.b1, &l.w2, &l.b2])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w1, &mut l.b1, &mut l.w2, &mut l.b2])
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.num_scalars());
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            self.num_layers() as u32,
            self.input_dim as u32,
            self.hidden_dim as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in self.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(bad("missing GPCK header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        if word(0) != VERSION as usize {
            return Err(bad(&format!("unsupported version {}", word(0))));
        }
        let (num_layers, input_dim, hidden_dim) = (word(1), word(2), word(3));
        let mut floats = bytes[20..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |rows: usize, cols: usize| -> Result<Tensor> {
            let data: Vec<f64> = floats.by_ref().take(rows * cols).collect();
            if data.len() != rows * cols {
                return Err(bad("truncated weights"));
            }
            Tensor::new(rows, cols, data)
        };
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let fan_in = if l == 0 { input_dim } else { hidden_dim };
            layers.push(GinLayer {
                w1: take(fan_in, hidden_dim)?,
                b1: take(1, hidden_dim)?,
                w2: take(hidden_dim, hidden_dim)?,
                b2: take(1, hidden_dim)?,
            });
        }
        let expected = 20 + 8 * layers
            .iter()
            .map(|l| l.w1.len() + l.b1.len() + l.w2.len() + l.b2.len())
            .sum::<usize>();
        if bytes.len() != expected {
            return Err(bad("trailing bytes after weights"));
        }
        Self::from_layers(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Places the weights on `tape`, trainable or frozen.
    pub fn to_tape(&self, tape: &mut Tape, trainable: bool) -> EncoderVars {
        let mut leaf = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        EncoderVars {
            layers: self
                .layers
                .iter()
                .map(|l| [leaf(&l.w1), leaf(&l.b1), leaf(&l.w2), leaf(&l.b2)])
                .collect(),
        }
    }
}

/// Tape handles of the encoder weights, in checkpoint order per layer.
#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub layers: Vec<[Var; 4]>,
}

impl EncoderVars {
    pub fn all(&self) -> Vec<Var> {
        self.layers.iter().flatten().copied().collect()
    }
}

/// A prompt applied to the output of one layer (`0` = input features).
#[derive(Clone, Copy, Debug)]
pub struct LayerPrompt {
    pub layer: usize,
    pub prompt: Var,
}

/// Runs the encoder on `tape` and returns `[H^0, ..., H^L]`, with the
/// optional prompt already applied to its layer.
pub fn forward_layers(
    tape: &mut Tape,
    features: Var,
    adjacency: &Arc<Adjacency>,
    enc: &EncoderVars,
    prompt: Option<LayerPrompt>,
) -> Result<Vec<Var>> {
    let num_layers = enc.layers.len();
    if let Some(p) = prompt {
        if p.layer > num_layers {
            return Err(Error::Index {
                what: "encoder layers",
                index: p.layer,
                len: num_layers + 1,
            });
        }
    }
    let apply = |tape: &mut Tape, h: Var, l: usize| -> Result<Var> {
        match prompt {
            Some(p) if p.layer == l => tape.mul_row(h, p.prompt),
            _ => Ok(h),
        }
    };
    let mut h = apply(tape, features, 0)?;
    let mut out = Vec::with_capacity(num_layers + 1);
    out.push(h);
    for (l, [w1, b1, w2, b2]) in enc.layers.iter().enumerate() {
        let agg = tape.neighbor_sum(h, Arc::clone(adjacency))?;
        let combined = tape.add(h, agg)?;
        let z = tape.matmul(combined, *w1)?;
        let z = tape.add_row(z, *b1)?;
        let z = tape.relu(z)?;
        let z = tape.matmul(z, *w2)?;
        let z = tape.add_row(z, *b2)?;
        let z = tape.relu(z)?;
        h = apply(tape, z, l + 1)?;
        out.push(h);
    }
    Ok(out)
}

/// Final-layer output of one forward pass.
pub fn forward(
    tape: &mut Tape,
    features: Var,
    adjacency: &Arc<Adjacency>,
    enc: &EncoderVars,
    prompt: Option<LayerPrompt>,
) -> Result<Var> {
    let layers = forward_layers(tape, features, adjacency, enc, prompt)?;
    Ok(*layers.last().expect("at least the input layer"))
}

/// `sum_l w[l] * H_{p^l}`: one prompted pass per layer, then a weighted sum.
pub fn forward_fused(
    tape: &mut Tape,
    features: Var,
    adjacency: &Arc<Adjacency>,
    enc: &EncoderVars,
    prompts: &[Var],
    weights: Var,
) -> Result<Var> {
    if prompts.len() != enc.layers.len() + 1 {
        return Err(Error::shape(
            "fused_prompt_embeddings",
            format!("{} prompts for {} layers", prompts.len(), enc.layers.len()),
        ));
    }
    let outputs = prompts
        .iter()
        .enumerate()
        .map(|(layer, &prompt)| forward(tape, features, adjacency, enc, Some(LayerPrompt { layer, prompt })))
        .collect::<Result<Vec<_>>>()?;
    tape.weighted_sum(&outputs, weights)
}

/// Gather/segment plan summing the rows of several node sets.
#[derive(Clone, Debug)]
pub struct ReadoutPlan {
    members: Arc<[usize]>,
    groups: Arc<[usize]>,
    count: usize,
}

impl ReadoutPlan {
    pub fn new<I, S>(sets: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[usize]>,
    {
        let mut members = Vec::new();
        let mut groups = Vec::new();
        let mut count = 0;
        for set in sets {
            members.extend_from_slice(set.as_ref());
            groups.extend(std::iter::repeat(count).take(set.as_ref().len()));
            count += 1;
        }
        ReadoutPlan {
            members: members.into(),
            groups: groups.into(),
            count,
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Sum pooling: one output row per node set.
    pub fn apply(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let rows = tape.gather_rows(h, Arc::clone(&self.members))?;
        tape.segment_sum(rows, Arc::clone(&self.groups), self.count)
    }
}

/// Node embeddings of one layer of an encoded graph.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub layer: usize,
    pub values: Tensor,
}

impl EmbeddingMatrix {
    pub fn num_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn width(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, v: usize) -> &[f64] {
        self.values.row(v)
    }
}

fn check_input(g: &Graph, p: &EncoderParams) -> Result<()> {
    if g.feature_dim() != p.input_dim() {
        return Err(Error::shape(
            "encode",
            format!("feature width {} vs encoder input {}", g.feature_dim(), p.input_dim()),
        ));
    }
    Ok(())
}

fn plain_pass(
    g: &Graph,
    p: &EncoderParams,
    build: impl FnOnce(&mut Tape, Var, &EncoderVars) -> Result<Vec<Var>>,
) -> Result<Vec<Tensor>> {
    check_input(g, p)?;
    let mut tape = Tape::new();
    let x = tape.constant(g.features().clone());
    let enc = p.to_tape(&mut tape, false);
    let outs = build(&mut tape, x, &enc)?;
    Ok(outs.into_iter().map(|v| tape.value(v).clone()).collect())
}

/// `H^0..H^L` of an unprompted pass.
pub fn encode_layers(g: &Graph, p: &EncoderParams) -> Result<Vec<EmbeddingMatrix>> {
    let outs = plain_pass(g, p, |tape, x, enc| forward_layers(tape, x, g.adjacency(), enc, None))?;
    Ok(outs
        .into_iter()
        .enumerate()
        .map(|(layer, values)| EmbeddingMatrix { layer, values })
        .collect())
}

/// Final node embeddings `H^L`.
pub fn encode(g: &Graph, p: &EncoderParams) -> Result<EmbeddingMatrix> {
    Ok(encode_layers(g, p)?.pop().expect("input layer always present"))
}

/// Encodes a batch of graphs in one pass; rows follow the batch layout.
pub fn encode_batch(batch: &GraphBatch, p: &EncoderParams) -> Result<Tensor> {
    if batch.features.cols() != p.input_dim() {
        return Err(Error::shape(
            "encode",
            format!("feature width {} vs encoder input {}", batch.features.cols(), p.input_dim()),
        ));
    }
    let mut tape = Tape::new();
    let x = tape.constant(batch.features.clone());
    let enc = p.to_tape(&mut tape, false);
    let h = forward(&mut tape, x, &batch.adjacency, &enc, None)?;
    Ok(tape.value(h).clone())
}

fn check_prompt_width(op: &'static str, prompt: &[f64], width: usize) -> Result<()> {
    if prompt.len() != width {
        return Err(Error::shape(op, format!("prompt width {} vs {width}", prompt.len())));
    }
    Ok(())
}

/// Encoder output with layer `l`'s embeddings replaced by `prompt ⊙ H^l`.
pub fn encode_with_layer_prompt(
    g: &Graph,
    p: &EncoderParams,
    prompt: &[f64],
    layer: usize,
) -> Result<EmbeddingMatrix> {
    if layer > p.num_layers() {
        return Err(Error::Index {
            what: "encoder layers",
            index: layer,
            len: p.num_layers() + 1,
        });
    }
    check_prompt_width("encode_with_layer_prompt", prompt, p.layer_width(layer))?;
    let mut outs = plain_pass(g, p, |tape, x, enc| {
        let pv = tape.constant(Tensor::row_vector(prompt.to_vec()));
        let h = forward(tape, x, g.adjacency(), enc, Some(LayerPrompt { layer, prompt: pv }))?;
        Ok(vec![h])
    })?;
    Ok(EmbeddingMatrix {
        layer: p.num_layers(),
        values: outs.remove(0),
    })
}

/// Weighted fusion of the `L + 1` single-layer prompted passes.
pub fn fused_prompt_embeddings(
    g: &Graph,
    p: &EncoderParams,
    prompts: &[Vec<f64>],
    weights: &[f64],
) -> Result<EmbeddingMatrix> {
    if prompts.len() != p.num_layers() + 1 || weights.len() != prompts.len() {
        return Err(Error::shape(
            "fused_prompt_embeddings",
            format!(
                "{} prompts and {} weights for {} layers",
                prompts.len(),
                weights.len(),
                p.num_layers()
            ),
        ));
    }
    for (l, pr) in prompts.iter().enumerate() {
        check_prompt_width("fused_prompt_embeddings", pr, p.layer_width(l))?;
    }
    let mut outs = plain_pass(g, p, |tape, x, enc| {
        let pvars: Vec<Var> = prompts
            .iter()
            .map(|pr| tape.constant(Tensor::row_vector(pr.clone())))
            .collect();
        let w = tape.constant(Tensor::row_vector(weights.to_vec()));
        Ok(vec![forward_fused(tape, x, g.adjacency(), enc, &pvars, w)?])
    })?;
    Ok(EmbeddingMatrix {
        layer: p.num_layers(),
        values: outs.remove(0),
    })
}

fn check_rows(h: &EmbeddingMatrix, s: &Subgraph) -> Result<()> {
    if let Some(&bad) = s.nodes.iter().find(|&&v| v >= h.num_rows()) {
        return Err(Error::Index {
            what: "embedding rows",
            index: bad,
            len: h.num_rows(),
        });
    }
    Ok(())
}

/// Sum pooling of the subgraph's node embeddings.
pub fn readout(h: &EmbeddingMatrix, s: &Subgraph) -> Result<Vec<f64>> {
    check_rows(h, s)?;
    let mut out = vec![0.0; h.width()];
    for &v in &s.nodes {
        for (o, x) in out.iter_mut().zip(h.row(v)) {
            *o += x;
        }
    }
    Ok(out)
}

/// Feature-weighted sum pooling: `sum_v prompt ⊙ h_v`.
pub fn prompted_readout(h: &EmbeddingMatrix, s: &Subgraph, prompt: &[f64]) -> Result<Vec<f64>> {
    check_rows(h, s)?;
    check_prompt_width("prompted_readout", prompt, h.width())?;
    let mut out = vec![0.0; h.width()];
    for &v in &s.nodes {
        for ((o, x), p) in out.iter_mut().zip(h.row(v)).zip(prompt) {
            *o += p * x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn star() -> Graph {
        let x = Tensor::from_rows(&[[1.0, 0.5], [0.2, -1.0], [0.0, 2.0], [-0.7, 0.3]]).unwrap();
        Graph::new(x, [(0, 1), (0, 2), (0, 3)], None, None).unwrap()
    }

    fn relu(v: f64) -> f64 {
        v.max(0.0)
    }

    /// Scalar re-implementation of one GIN-0 layer for a single node.
    fn gin_node(h: &[Vec<f64>], nbrs: &[usize], v: usize, layer: &GinLayer) -> Vec<f64> {
        let d_in = h[v].len();
        let agg: Vec<f64> = (0..d_in)
            .map(|j| h[v][j] + nbrs.iter().map(|&u| h[u][j]).sum::<f64>())
            .collect();
        let hid = layer.w1.cols();
        let z: Vec<f64> = (0..hid)
            .map(|k| relu((0..d_in).map(|j| agg[j] * layer.w1.get(j, k)).sum::<f64>() + layer.b1.get(0, k)))
            .collect();
        (0..hid)
            .map(|k| relu((0..hid).map(|j| z[j] * layer.w2.get(j, k)).sum::<f64>() + layer.b2.get(0, k)))
            .collect()
    }

    fn scalar_encode(g: &Graph, p: &EncoderParams) -> Vec<Vec<f64>> {
        let mut h: Vec<Vec<f64>> = (0..g.num_nodes()).map(|v| g.features().row(v).to_vec()).collect();
        for layer in &p.layers {
            h = (0..g.num_nodes())
                .map(|v| gin_node(&h, g.neighbors(v), v, layer))
                .collect();
        }
        h
    }

    #[test]
    fn star_center_matches_scalar_oracle() {
        let g = star();
        let p = EncoderParams::init(2, 4, 2, &mut rng::from_seed(0)).unwrap();
        let h = encode(&g, &p).unwrap();
        let oracle = scalar_encode(&g, &p);
        for (a, b) in h.row(0).iter().zip(&oracle[0]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn isolated_zero_node_stays_zero() {
        let g = Graph::new(Tensor::zeros(1, 3), [], None, None).unwrap();
        let p = EncoderParams::init(3, 5, 3, &mut rng::from_seed(1)).unwrap();
        assert_eq!(encode(&g, &p).unwrap().values, Tensor::zeros(1, 5));
    }

    #[test]
    fn identical_isolated_nodes_embed_identically() {
        let g = Graph::new(Tensor::from_rows(&[[0.3, 0.9], [0.3, 0.9]]).unwrap(), [], None, None).unwrap();
        let p = EncoderParams::init(2, 4, 3, &mut rng::from_seed(2)).unwrap();
        let h = encode(&g, &p).unwrap();
        assert_eq!(h.row(0), h.row(1));
    }

    #[test]
    fn width_mismatch_is_a_shape_error() {
        let p = EncoderParams::init(3, 4, 1, &mut rng::from_seed(0)).unwrap();
        assert!(matches!(encode(&star(), &p), Err(Error::Shape { .. })));
        let p = EncoderParams::init(2, 4, 1, &mut rng::from_seed(0)).unwrap();
        assert!(encode_with_layer_prompt(&star(), &p, &[1.0; 4], 0).is_err());
        assert!(encode_with_layer_prompt(&star(), &p, &[1.0; 4], 2).is_err());
    }

    #[test]
    fn readout_sums_rows() {
        let h = EmbeddingMatrix {
            layer: 1,
            values: Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [9.0, 9.0]]).unwrap(),
        };
        let pair = Subgraph { nodes: vec![0, 1], edges: vec![] };
        assert_eq!(readout(&h, &pair).unwrap(), vec![4.0, 6.0]);
        let single = Subgraph { nodes: vec![2], edges: vec![] };
        assert_eq!(readout(&h, &single).unwrap(), vec![9.0, 9.0]);
        assert_eq!(prompted_readout(&h, &pair, &[1.0, 1.0]).unwrap(), vec![4.0, 6.0]);
        assert_eq!(prompted_readout(&h, &pair, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let out_of_range = Subgraph { nodes: vec![3], edges: vec![] };
        assert!(readout(&h, &out_of_range).is_err());
        assert!(prompted_readout(&h, &pair, &[1.0]).is_err());
    }

    #[test]
    fn prompted_readout_distributes_over_sum() {
        let g = star();
        let p = EncoderParams::init(2, 6, 2, &mut rng::from_seed(5)).unwrap();
        let h = encode(&g, &p).unwrap();
        let s = Subgraph::whole(&g);
        let prompt = [0.3, -1.2, 2.5, 0.0, 0.7, 1.1];
        let direct = prompted_readout(&h, &s, &prompt).unwrap();
        let factored: Vec<f64> = readout(&h, &s).unwrap().iter().zip(&prompt).map(|(r, p)| r * p).collect();
        for (a, b) in direct.iter().zip(&factored) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ones_layer_prompt_is_bitwise_identity() {
        let g = star();
        let p = EncoderParams::init(2, 4, 3, &mut rng::from_seed(3)).unwrap();
        let plain = encode(&g, &p).unwrap().values;
        for l in 0..=3 {
            let ones = vec![1.0; p.layer_width(l)];
            let prompted = encode_with_layer_prompt(&g, &p, &ones, l).unwrap().values;
            assert!(prompted.bitwise_eq(&plain), "layer {l}");
        }
    }

    #[test]
    fn last_layer_prompt_scales_output() {
        let g = star();
        let p = EncoderParams::init(2, 4, 2, &mut rng::from_seed(4)).unwrap();
        let prompt = [0.5, -2.0, 3.0, 0.25];
        let plain = encode(&g, &p).unwrap();
        let prompted = encode_with_layer_prompt(&g, &p, &prompt, 2).unwrap();
        for v in 0..g.num_nodes() {
            for j in 0..4 {
                assert_eq!(prompted.row(v)[j], plain.row(v)[j] * prompt[j]);
            }
        }
    }

    #[test]
    fn input_prompt_without_edges_scales_features() {
        let x = Tensor::from_rows(&[[1.0, -0.5], [0.25, 2.0]]).unwrap();
        let g = Graph::new(x.clone(), [], None, None).unwrap();
        let p = EncoderParams::init(2, 3, 1, &mut rng::from_seed(6)).unwrap();
        let prompt = [2.0, -1.5];
        let out = encode_with_layer_prompt(&g, &p, &prompt, 0).unwrap();
        // no neighbors: H^1 = relu(relu((p ⊙ x) W1 + b1) W2 + b2)
        let layer = &p.layers[0];
        for v in 0..2 {
            let scaled: Vec<f64> = x.row(v).iter().zip(&prompt).map(|(a, b)| a * b).collect();
            let z: Vec<f64> = (0..3)
                .map(|k| relu(scaled[0] * layer.w1.get(0, k) + scaled[1] * layer.w1.get(1, k)))
                .collect();
            for k in 0..3 {
                let expect = relu((0..3).map(|j| z[j] * layer.w2.get(j, k)).sum::<f64>());
                assert!((out.row(v)[k] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fused_selector_and_convex_identities() {
        let g = star();
        let p = EncoderParams::init(2, 4, 2, &mut rng::from_seed(8)).unwrap();
        let prompts = vec![vec![0.9, 1.3], vec![0.2, 1.0, -0.4, 2.0], vec![1.5, 0.5, 0.5, 1.0]];
        for l in 0..3 {
            let mut w = vec![0.0; 3];
            w[l] = 1.0;
            let fused = fused_prompt_embeddings(&g, &p, &prompts, &w).unwrap();
            let single = encode_with_layer_prompt(&g, &p, &prompts[l], l).unwrap();
            assert!(fused.values.bitwise_eq(&single.values), "layer {l}");
        }
        let ones: Vec<Vec<f64>> = (0..3).map(|l| vec![1.0; p.layer_width(l)]).collect();
        let fused = fused_prompt_embeddings(&g, &p, &ones, &[0.2, 0.3, 0.5]).unwrap();
        assert!(fused.values.max_abs_diff(&encode(&g, &p).unwrap().values) < 1e-10);
    }

    #[test]
    fn fused_matches_brute_force_on_path() {
        let x = Tensor::from_rows(&[[0.4, 1.0], [-0.3, 0.8], [1.2, -0.6]]).unwrap();
        let g = Graph::new(x, [(0, 1), (1, 2)], None, None).unwrap();
        let p = EncoderParams::init(2, 3, 1, &mut rng::from_seed(9)).unwrap();
        let prompts = vec![vec![0.7, -1.1], vec![1.4, 0.2, -0.9]];
        let w = [0.35, -1.25];
        let fused = fused_prompt_embeddings(&g, &p, &prompts, &w).unwrap();

        // independent forward: pass 0 scales inputs, pass 1 scales outputs
        let scaled_x: Vec<Vec<f64>> = (0..3)
            .map(|v| g.features().row(v).iter().zip(&prompts[0]).map(|(a, b)| a * b).collect())
            .collect();
        let h0: Vec<Vec<f64>> = (0..3).map(|v| gin_node(&scaled_x, g.neighbors(v), v, &p.layers[0])).collect();
        let raw: Vec<Vec<f64>> = (0..3).map(|v| g.features().row(v).to_vec()).collect();
        let h1: Vec<Vec<f64>> = (0..3)
            .map(|v| {
                gin_node(&raw, g.neighbors(v), v, &p.layers[0])
                    .iter()
                    .zip(&prompts[1])
                    .map(|(a, b)| a * b)
                    .collect()
            })
            .collect();
        for v in 0..3 {
            for k in 0..3 {
                let expect = w[0] * h0[v][k] + w[1] * h1[v][k];
                assert!((fused.row(v)[k] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let p = EncoderParams::init(5, 7, 3, &mut rng::from_seed(11)).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), 20 + 8 * p.num_scalars());
        assert_eq!(EncoderParams::from_bytes(&bytes).unwrap(), p);
        assert!(EncoderParams::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(EncoderParams::from_bytes(&bad).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.gpck");
        p.save(&path).unwrap();
        assert_eq!(EncoderParams::load(&path).unwrap(), p);
    }
}
