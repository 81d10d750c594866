//! Registry of named numerical checks: gradient checks for every primitive
//! and loss, prompt identities, closed-form losses and brute-force oracles.
//!
//! Checks report failures as values; a panicking check is caught and
//! reported under its name.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use rand::Rng as _;

use crate::encoder::{self, EncoderParams, ReadoutPlan};
use crate::error::Result;
use crate::graphdata::{contextual_subgraph, Graph, Subgraph};
use crate::pretrain::{generalized_contrastive_loss, generalized_contrastive_loss_on_tape, link_pred_loss, link_pred_loss_on_tape, ContrastiveBatch};
use crate::prompt::{classify, cosine, prompt_loss, PrototypeSet};
use crate::rng::{self, Rng};
use crate::tensorgrad::{finite_diff_report, Adjacency, AdamConfig, AdamState, CustomOp, Tape, Tensor, Var};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

type CheckFn = Box<dyn Fn() -> std::result::Result<(), String> + Send + Sync>;

#[derive(Default)]
pub struct SelfCheck {
    checks: Vec<(String, CheckFn)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelfCheckReport {
    pub passed: Vec<String>,
    /// `(check name, reason)`.
    pub failures: Vec<(String, String)>,
}

impl SelfCheckReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(!self.ok())
    }
}

fn random_tensor(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect()).expect("sized")
}

/// Random connected graph on `n` nodes: a random spanning tree plus extra
/// edges with probability `p`.
pub fn random_graph(rng: &mut Rng, n: usize, feature_dim: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(random_tensor(rng, n, feature_dim, -1.0, 1.0), edges, None, None).expect("valid by construction")
}

/// `sum(expr ⊙ C)` with a random constant `C`, so every output entry
/// carries a distinct weight into the scalar root.
fn weighted_total(tape: &mut Tape, x: Var, rng: &mut Rng) -> Result<Var> {
    let [r, c] = tape.shape(x);
    let weights = tape.constant(random_tensor(rng, r, c, 0.5, 1.5));
    let prod = tape.mul(x, weights)?;
    tape.sum(prod)
}

/// Builds a random expression of depth `depth` over `rows x cols` leaves.
pub fn random_expression(tape: &mut Tape, rng: &mut Rng, depth: usize, rows: usize, cols: usize) -> Result<Var> {
    if depth == 0 {
        return Ok(tape.param(random_tensor(rng, rows, cols, -1.0, 1.0)));
    }
    let sub = |tape: &mut Tape, rng: &mut Rng| random_expression(tape, rng, depth - 1, rows, cols);
    match rng.gen_range(0..12) {
        0 => {
            let (a, b) = (sub(tape, rng)?, sub(tape, rng)?);
            tape.add(a, b)
        }
        1 => {
            let (a, b) = (sub(tape, rng)?, sub(tape, rng)?);
            tape.sub(a, b)
        }
        2 => {
            let (a, b) = (sub(tape, rng)?, sub(tape, rng)?);
            tape.mul(a, b)
        }
        3 => {
            let a = sub(tape, rng)?;
            let row = tape.param(random_tensor(rng, 1, cols, -1.0, 1.0));
            tape.mul_row(a, row)
        }
        4 => {
            let a = sub(tape, rng)?;
            let row = tape.param(random_tensor(rng, 1, cols, -1.0, 1.0));
            tape.add_row(a, row)
        }
        5 => {
            let a = sub(tape, rng)?;
            tape.relu(a)
        }
        6 => {
            let a = sub(tape, rng)?;
            let w = tape.param(random_tensor(rng, cols, cols, -0.5, 0.5));
            tape.matmul(a, w)
        }
        7 => {
            let a = sub(tape, rng)?;
            let damped = tape.scale(a, 0.3)?;
            tape.exp(damped)
        }
        8 => {
            // ln(e^a + 1) stays well defined for any a
            let a = sub(tape, rng)?;
            let e = tape.exp(a)?;
            let one = tape.constant(Tensor::ones(rows, cols));
            let shifted = tape.add(e, one)?;
            tape.ln(shifted)
        }
        9 => {
            let a = sub(tape, rng)?;
            let lists: Vec<Vec<usize>> = (0..rows)
                .map(|i| (0..rows).filter(|&j| j != i && rng.gen_bool(0.4)).collect())
                .collect();
            tape.neighbor_sum(a, Arc::new(Adjacency::from_lists(&lists)))
        }
        10 => {
            let (a, b) = (sub(tape, rng)?, sub(tape, rng)?);
            let w = tape.param(random_tensor(rng, 1, 2, -1.0, 1.0));
            tape.weighted_sum(&[a, b], w)
        }
        _ => {
            // gather then segment-sum back to the original row count
            let a = sub(tape, rng)?;
            let idx: Vec<usize> = (0..2 * rows).map(|_| rng.gen_range(0..rows)).collect();
            let groups: Vec<usize> = (0..2 * rows).map(|i| i % rows).collect();
            let g = tape.gather_rows(a, Arc::from(idx))?;
            tape.segment_sum(g, Arc::from(groups), rows)
        }
    }
}

fn add_bias(m: &Tensor, b: &Tensor) -> Vec<f64> {
    m.data()
        .chunks(b.cols())
        .flat_map(|r| r.iter().zip(b.data()).map(|(x, y)| x + y))
        .collect()
}

/// Smallest `|z|` over every ReLU input of the encoder on `g`.
fn relu_margin(g: &Graph, params: &EncoderParams) -> Result<f64> {
    let inputs = encoder::encode_layers(g, params)?;
    let mut margin = f64::INFINITY;
    for (layer, h) in params.layers.iter().zip(&inputs) {
        let mut combined = h.values.clone();
        for v in 0..g.num_nodes() {
            for &u in g.neighbors(v) {
                for (c, x) in combined.row_mut(v).iter_mut().zip(h.values.row(u)) {
                    *c += x;
                }
            }
        }
        let z1 = add_bias(&combined.matmul(&layer.w1)?, &layer.b1);
        let a1 = Tensor::new(combined.rows(), layer.b1.cols(), z1.iter().map(|z| z.max(0.0)).collect())?;
        let z2 = add_bias(&a1.matmul(&layer.w2)?, &layer.b2);
        margin = z1.iter().chain(&z2).fold(margin, |m, z| m.min(z.abs()));
    }
    Ok(margin)
}

/// Link-prediction loss through a trainable encoder on a random tree.
///
/// Sparse graphs keep the 1-hop subgraphs of a triplet apart; on dense ones
/// they often coincide, cosines saturate at 1 and many true gradients fall
/// below the finite-difference noise floor.
///
/// Finite differences are only meaningful away from ReLU kinks, so biases
/// are randomised and the point is redrawn until every pre-activation is at
/// least `1e-3` from zero.
pub fn link_pred_expression(tape: &mut Tape, rng: &mut Rng, nodes: usize, layers: usize, hidden: usize) -> Result<Var> {
    let g = random_graph(rng, nodes, 3, 0.0);
    let params = loop {
        let mut params = EncoderParams::init(3, hidden, layers, rng)?;
        for (i, t) in params.tensors_mut().into_iter().enumerate() {
            if i % 2 == 1 {
                let [r, c] = t.shape();
                *t = random_tensor(rng, r, c, -0.5, 0.5);
            }
        }
        if relu_margin(&g, &params)? >= 1e-3 {
            break params;
        }
    };
    let x = tape.constant(g.features().clone());
    let enc = params.to_tape(tape, true);
    let h = encoder::forward(tape, x, g.adjacency(), &enc, None)?;
    let mut sets = [Vec::new(), Vec::new(), Vec::new()];
    for v in 0..nodes {
        let non: Vec<usize> = (0..nodes).filter(|&u| u != v && !g.has_edge(u, v)).collect();
        if non.is_empty() {
            continue;
        }
        let a = g.neighbors(v)[rng.gen_range(0..g.degree(v))];
        let b = non[rng.gen_range(0..non.len())];
        for (set, node) in sets.iter_mut().zip([v, a, b]) {
            set.push(contextual_subgraph(&g, node, 1)?.nodes);
        }
    }
    let [pv, pa, pb] = sets.map(ReadoutPlan::new);
    let sv = pv.apply(tape, h)?;
    let sa = pa.apply(tape, h)?;
    let sb = pb.apply(tape, h)?;
    link_pred_loss_on_tape(tape, sv, sa, sb, 0.5)
}

fn gradcheck(tape: &Tape, root: Var, step: f64, tol: f64) -> std::result::Result<(), String> {
    let report = finite_diff_report(tape, root, step).map_err(|e| e.to_string())?;
    if report.scalars_checked == 0 {
        return Err("no trainable scalar reached the root".into());
    }
    if report.max_rel_error < tol {
        Ok(())
    } else {
        Err(format!(
            "max relative error {:.3e} at scalar {} of tape leaf {} (tolerance {tol:e})",
            report.max_rel_error,
            report.worst_index,
            report.worst_leaf.map_or(0, |l| l.index())
        ))
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

type Builder = fn(&mut Tape, &mut Rng) -> Result<Var>;

fn unary(f: fn(&mut Tape, Var) -> Result<Var>, lo: f64, hi: f64) -> impl Fn(&mut Tape, &mut Rng) -> Result<Var> {
    move |tape, rng| {
        let x = tape.param(random_tensor(rng, 3, 4, lo, hi));
        let y = f(tape, x)?;
        weighted_total(tape, y, rng)
    }
}

fn binary(f: fn(&mut Tape, Var, Var) -> Result<Var>, b_rows: usize, b_cols: usize) -> impl Fn(&mut Tape, &mut Rng) -> Result<Var> {
    move |tape, rng| {
        let a = tape.param(random_tensor(rng, 3, 4, -1.0, 1.0));
        let b = tape.param(random_tensor(rng, b_rows, b_cols, -1.0, 1.0));
        let y = f(tape, a, b)?;
        weighted_total(tape, y, rng)
    }
}

impl SelfCheck {
    pub fn empty() -> Self {
        SelfCheck::default()
    }

    pub fn len(&self) -> usize {
        self.checks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.checks.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn register(&mut self, name: impl Into<String>, check: impl Fn() -> std::result::Result<(), String> + Send + Sync + 'static) {
        self.checks.push((name.into(), Box::new(check)));
    }

    /// Gradient check of the scalar built by `build` from a fixed seed.
    pub fn register_gradcheck(
        &mut self,
        name: &str,
        step: f64,
        tol: f64,
        build: impl Fn(&mut Tape, &mut Rng) -> Result<Var> + Send + Sync + 'static,
    ) {
        let seed = rng::stream_seed(0, name);
        self.register(format!("gradcheck {name}"), move || {
            let mut tape = Tape::new();
            let root = build(&mut tape, &mut rng::from_seed(seed)).map_err(|e| e.to_string())?;
            gradcheck(&tape, root, step, tol)
        });
    }

    /// Gradient check of a user-supplied primitive applied to a
    /// `rows x cols` input.
    pub fn register_custom_op(&mut self, op: Arc<dyn CustomOp>, rows: usize, cols: usize) {
        let name = op.name().to_string();
        self.register_gradcheck(&name, DEFAULT_STEP, DEFAULT_TOLERANCE, move |tape, rng| {
            let x = tape.param(random_tensor(rng, rows, cols, -1.0, 1.0));
            let y = tape.custom(&[x], Arc::clone(&op))?;
            weighted_total(tape, y, rng)
        });
    }

    /// Gradient checks of every primitive and every loss.
    pub fn gradient_suite(step: f64, tol: f64) -> Self {
        let mut s = SelfCheck::empty();
        s.add_gradient_checks(step, tol);
        s
    }

    fn add_gradient_checks(&mut self, step: f64, tol: f64) {
        let primitives: Vec<(&str, Box<dyn Fn(&mut Tape, &mut Rng) -> Result<Var> + Send + Sync>)> = vec![
            ("matmul", Box::new(binary(Tape::matmul, 4, 2))),
            ("add", Box::new(binary(Tape::add, 3, 4))),
            ("sub", Box::new(binary(Tape::sub, 3, 4))),
            ("mul", Box::new(binary(Tape::mul, 3, 4))),
            ("add_row", Box::new(binary(Tape::add_row, 1, 4))),
            ("mul_row", Box::new(binary(Tape::mul_row, 1, 4))),
            ("relu", Box::new(unary(Tape::relu, -1.0, 1.0))),
            ("scale", Box::new(unary(|t, x| t.scale(x, -1.7), -1.0, 1.0))),
            ("div_scalar", Box::new(unary(|t, x| t.div_scalar(x, 0.4), -1.0, 1.0))),
            ("exp", Box::new(unary(Tape::exp, -1.0, 1.0))),
            ("ln", Box::new(unary(Tape::ln, 0.5, 2.0))),
            ("sum", Box::new(unary(Tape::sum, -1.0, 1.0))),
            ("mean", Box::new(unary(Tape::mean, -1.0, 1.0))),
            ("row_norm", Box::new(unary(Tape::row_norm, -1.0, 1.0))),
            ("cosine_rows", Box::new(binary(Tape::cosine_rows, 3, 4))),
            (
                "gather_rows",
                Box::new(unary(|t, x| t.gather_rows(x, Arc::from(vec![2, 0, 2, 1])), -1.0, 1.0)),
            ),
            (
                "segment_sum",
                Box::new(unary(|t, x| t.segment_sum(x, Arc::from(vec![1, 0, 1]), 2), -1.0, 1.0)),
            ),
            (
                "neighbor_sum",
                Box::new(unary(
                    |t, x| t.neighbor_sum(x, Arc::new(Adjacency::from_lists(&[vec![1, 2], vec![0], vec![0]]))),
                    -1.0,
                    1.0,
                )),
            ),
            (
                "weighted_sum",
                Box::new(|t: &mut Tape, rng: &mut Rng| {
                    let mats: Vec<Var> = (0..3).map(|_| t.param(random_tensor(rng, 3, 4, -1.0, 1.0))).collect();
                    let w = t.param(random_tensor(rng, 1, 3, -1.0, 1.0));
                    let y = t.weighted_sum(&mats, w)?;
                    weighted_total(t, y, rng)
                }),
            ),
        ];
        for (name, build) in primitives {
            self.register_gradcheck(name, step, tol, build);
        }
        let composed: [(&str, Builder); 4] = [
            ("link_pred_loss through a 2-layer encoder", |t, r| link_pred_expression(t, r, 6, 2, 8)),
            ("generalized_contrastive_loss", |t, r| {
                let emb = t.param(random_tensor(r, 5, 4, -1.0, 1.0));
                let batches = [
                    ContrastiveBatch { target: 0, positives: vec![1, 2], negatives: vec![3, 4] },
                    ContrastiveBatch { target: 4, positives: vec![3], negatives: vec![0, 1, 2] },
                ];
                generalized_contrastive_loss_on_tape(t, emb, &batches, 0.5)
            }),
            ("cosine_rows over temperature", |t, r| {
                let u = t.param(random_tensor(r, 1, 4, -1.0, 1.0));
                let v = t.param(random_tensor(r, 1, 4, -1.0, 1.0));
                let c = t.cosine_rows(u, v)?;
                let s = t.scale(c, 1.0 / 0.5)?;
                t.sum(s)
            }),
            ("random composed expressions", |t, r| {
                let depth = r.gen_range(1..=4);
                let (rows, cols) = (r.gen_range(1..=8), r.gen_range(1..=8));
                let e = random_expression(t, r, depth, rows, cols)?;
                weighted_total(t, e, r)
            }),
        ];
        for (name, build) in composed {
            self.register_gradcheck(name, step, tol, build);
        }
    }

    fn add_identity_checks(&mut self) {
        self.register("identity: all-ones layer prompts reproduce encode bitwise", || {
            let mut r = rng::from_seed(11);
            let g = random_graph(&mut r, 7, 3, 0.3);
            let p = EncoderParams::init(3, 5, 3, &mut r).map_err(|e| e.to_string())?;
            let plain = encoder::encode(&g, &p).map_err(|e| e.to_string())?.values;
            for l in 0..=p.num_layers() {
                let out = encoder::encode_with_layer_prompt(&g, &p, &vec![1.0; p.layer_width(l)], l)
                    .map_err(|e| e.to_string())?;
                ensure(out.values.bitwise_eq(&plain), || format!("layer {l} differs"))?;
            }
            Ok(())
        });
        self.register("identity: convex fusion of all-ones prompts reproduces encode", || {
            let mut r = rng::from_seed(12);
            let g = random_graph(&mut r, 6, 2, 0.4);
            let p = EncoderParams::init(2, 4, 2, &mut r).map_err(|e| e.to_string())?;
            let ones: Vec<Vec<f64>> = (0..=2).map(|l| vec![1.0; p.layer_width(l)]).collect();
            let fused = encoder::fused_prompt_embeddings(&g, &p, &ones, &[0.5, 0.25, 0.25]).map_err(|e| e.to_string())?;
            let plain = encoder::encode(&g, &p).map_err(|e| e.to_string())?;
            let diff = fused.values.max_abs_diff(&plain.values);
            ensure(diff < 1e-10, || format!("max difference {diff:e}"))
        });
        self.register("identity: all-ones readout prompt equals plain readout", || {
            let mut r = rng::from_seed(13);
            let g = random_graph(&mut r, 6, 2, 0.4);
            let p = EncoderParams::init(2, 4, 2, &mut r).map_err(|e| e.to_string())?;
            let h = encoder::encode(&g, &p).map_err(|e| e.to_string())?;
            let s = Subgraph::whole(&g);
            let a = encoder::readout(&h, &s).map_err(|e| e.to_string())?;
            let b = encoder::prompted_readout(&h, &s, &[1.0; 4]).map_err(|e| e.to_string())?;
            ensure(a == b, || format!("{a:?} vs {b:?}"))
        });
    }

    fn add_oracle_checks(&mut self) {
        self.register("closed form: equal-similarity triplet loss is ln 2", || {
            let v = Tensor::from_rows(&[[0.3, -0.8, 1.1]]).map_err(|e| e.to_string())?;
            let loss = link_pred_loss(&v, &v, &v, 0.5).map_err(|e| e.to_string())?;
            ensure((loss - std::f64::consts::LN_2).abs() < 1e-12, || format!("got {loss}"))
        });
        self.register("closed form: contrastive loss with equal sets is 0", || {
            let emb = random_tensor(&mut rng::from_seed(14), 4, 3, -1.0, 1.0);
            let b = [ContrastiveBatch { target: 0, positives: vec![1, 2, 3], negatives: vec![1, 2, 3] }];
            let loss = generalized_contrastive_loss(&emb, &b, 0.5).map_err(|e| e.to_string())?;
            ensure(loss.abs() < 1e-12, || format!("got {loss}"))
        });
        self.register("closed form: uniform prompt loss is |S| ln |Y|", || {
            let reps = random_tensor(&mut rng::from_seed(15), 6, 3, -1.0, 1.0);
            let protos = PrototypeSet { values: Tensor::filled(3, 3, 0.7) };
            let loss = prompt_loss(&reps, &[0, 1, 2, 0, 1, 2], &protos, 0.5).map_err(|e| e.to_string())?;
            let want = 6.0 * 3f64.ln();
            ensure((loss - want).abs() < 1e-9, || format!("got {loss}, want {want}"))
        });
        self.register("oracle: nearest-prototype classification", || {
            let mut r = rng::from_seed(16);
            for case in 0..100 {
                let classes = r.gen_range(1..6);
                let protos = PrototypeSet { values: random_tensor(&mut r, classes, 4, -1.0, 1.0) };
                let x: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
                let sims: Vec<f64> = (0..classes).map(|c| cosine(&x, protos.values.row(c))).collect();
                let best = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let want = sims.iter().position(|&s| s == best).unwrap_or(0);
                let got = classify(&x, &protos);
                ensure(got == want, || format!("case {case}: {got} vs {want}"))?;
            }
            Ok(())
        });
        self.register("oracle: contextual subgraph of a path", || {
            let g = Graph::new(Tensor::ones(5, 1), [(0, 1), (1, 2), (2, 3), (3, 4)], None, None).map_err(|e| e.to_string())?;
            let s = contextual_subgraph(&g, 2, 1).map_err(|e| e.to_string())?;
            ensure(s.nodes == [1, 2, 3] && s.edges == [(1, 2), (2, 3)], || format!("{s:?}"))
        });
        self.register("oracle: two Adam steps", || {
            let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
            let mut p = Tensor::scalar(0.0);
            let mut state = AdamState::new(cfg, [&p]);
            let g = Tensor::scalar(1.0);
            let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.0f64);
            for t in 1..=2 {
                state.step(&mut [&mut p], &[&g]).map_err(|e| e.to_string())?;
                m = 0.9 * m + 0.1;
                v = 0.999 * v + 0.001;
                let mh = m / (1.0 - 0.9f64.powi(t));
                let vh = v / (1.0 - 0.999f64.powi(t));
                x -= 0.1 * mh / (vh.sqrt() + 1e-8);
            }
            let got = p.to_scalar().map_err(|e| e.to_string())?;
            ensure((got - x).abs() < 1e-12, || format!("{got} vs {x}"))
        });
    }

    /// Gradient, identity and oracle suites.
    pub fn standard() -> Self {
        let mut s = SelfCheck::gradient_suite(DEFAULT_STEP, DEFAULT_TOLERANCE);
        s.add_identity_checks();
        s.add_oracle_checks();
        s
    }

    pub fn run(&self) -> SelfCheckReport {
        let mut report = SelfCheckReport::default();
        if self.checks.is_empty() {
            report.failures.push(("registry".into(), "no checks registered".into()));
            return report;
        }
        for (name, check) in &self.checks {
            let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into());
                Err(format!("panicked: {msg}"))
            });
            match outcome {
                Ok(()) => report.passed.push(name.clone()),
                Err(reason) => report.failures.push((name.clone(), reason)),
            }
        }
        report
    }
}

/// `x^2` with a deliberately wrong backward (`x` instead of `2x`); used to
/// confirm the gradient suite catches broken primitives.
#[derive(Debug)]
pub struct FaultySquare;

impl CustomOp for FaultySquare {
    fn name(&self) -> &str {
        "faulty_square"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(inputs[0].map(|x| x * x))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![grad.zip_map(inputs[0], |g, x| g * x)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_suite_passes() {
        let report = SelfCheck::standard().run();
        assert!(report.ok(), "{:?}", report.failures);
        assert!(report.passed.len() > 25);
    }

    #[test]
    fn empty_registry_fails() {
        let report = SelfCheck::empty().run();
        assert!(!report.ok());
        assert_eq!(report.exit_code(), 1);
    }

    #[test]
    fn wrong_gradient_is_named() {
        let mut s = SelfCheck::empty();
        s.register_custom_op(Arc::new(FaultySquare), 2, 3);
        let report = s.run();
        assert_eq!(report.failures.len(), 1);
        assert!(report.failures[0].0.contains("faulty_square"));
    }

    #[test]
    fn panicking_check_is_reported() {
        let mut s = SelfCheck::empty();
        s.register("boom", || panic!("exploded"));
        let report = s.run();
        assert_eq!(report.failures, vec![("boom".to_string(), "panicked: exploded".to_string())]);
    }
}
