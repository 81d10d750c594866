//! Prompt tuning on a frozen encoder: prototypes, nearest-prototype
//! classification and the three prompt modes.
//!
//! * `single`: one feature-reweighting row applied to every node embedding
//!   before the readout.
//! * `layerwise`: one row per encoder layer (input layer included), each
//!   giving a prompted forward pass, fused by learnable scalar weights.
//! * `linear`: a square matrix applied to the node embeddings (ablation).
//!
//! Tuning recomputes class prototypes from the support set at every step
//! and only ever updates prompt parameters.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::encoder::{self, EncoderParams, EncoderVars, ReadoutPlan};
use crate::error::{Error, Result};
use crate::graphdata::{contextual_subgraph, FewShotTask, GraphBatch, GraphCollection, InstanceId, DEFAULT_DELTA};
use crate::tensorgrad::{AdamConfig, AdamState, Tape, Tensor, Var, COSINE_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PromptMode {
    Single,
    Layerwise,
    Linear,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [PromptMode::Single, PromptMode::Layerwise, PromptMode::Linear];

    pub fn name(self) -> &'static str {
        match self {
            PromptMode::Single => "single",
            PromptMode::Layerwise => "layerwise",
            PromptMode::Linear => "linear",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown prompt mode {s:?} (single|layerwise|linear)")))
    }
}

/// Learnable prompt parameters of one mode.
#[derive(Clone, Debug, PartialEq)]
pub enum PromptState {
    Single { prompt: Vec<f64> },
    Layerwise { prompts: Vec<Vec<f64>>, weights: Vec<f64> },
    Linear { matrix: Tensor },
}

impl PromptState {
    /// Identity initialization: all-ones prompts, uniform `1/(L+1)` fusion
    /// weights, identity matrix.
    pub fn init(mode: PromptMode, params: &EncoderParams) -> Self {
        let h = params.hidden_dim();
        match mode {
            PromptMode::Single => PromptState::Single { prompt: vec![1.0; h] },
            PromptMode::Layerwise => {
                let layers = params.num_layers() + 1;
                PromptState::Layerwise {
                    prompts: (0..layers).map(|l| vec![1.0; params.layer_width(l)]).collect(),
                    weights: vec![1.0 / layers as f64; layers],
                }
            }
            PromptMode::Linear => PromptState::Linear {
                matrix: Tensor::identity(h),
            },
        }
    }

    pub fn mode(&self) -> PromptMode {
        match self {
            PromptState::Single { .. } => PromptMode::Single,
            PromptState::Layerwise { .. } => PromptMode::Layerwise,
            PromptState::Linear { .. } => PromptMode::Linear,
        }
    }

    /// Trainable tensors in a fixed order: the prompt; or `p^0..p^L` then the
    /// weights; or the matrix.
    pub fn tensors(&self) -> Vec<Tensor> {
        match self {
            PromptState::Single { prompt } => vec![Tensor::row_vector(prompt.clone())],
            PromptState::Layerwise { prompts, weights } => prompts
                .iter()
                .map(|p| Tensor::row_vector(p.clone()))
                .chain([Tensor::row_vector(weights.clone())])
                .collect(),
            PromptState::Linear { matrix } => vec![matrix.clone()],
        }
    }

    fn set_tensors(&mut self, tensors: &[Tensor]) {
        match self {
            PromptState::Single { prompt } => prompt.copy_from_slice(tensors[0].data()),
            PromptState::Layerwise { prompts, weights } => {
                for (p, t) in prompts.iter_mut().zip(tensors) {
                    p.copy_from_slice(t.data());
                }
                weights.copy_from_slice(tensors[tensors.len() - 1].data());
            }
            PromptState::Linear { matrix } => *matrix = tensors[0].clone(),
        }
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.tensors().iter().map(Tensor::len).sum()
    }

    fn check(&self, params: &EncoderParams) -> Result<()> {
        let h = params.hidden_dim();
        let ok = match self {
            PromptState::Single { prompt } => prompt.len() == h,
            PromptState::Layerwise { prompts, weights } => {
                prompts.len() == params.num_layers() + 1
                    && weights.len() == prompts.len()
                    && prompts.iter().enumerate().all(|(l, p)| p.len() == params.layer_width(l))
            }
            PromptState::Linear { matrix } => matrix.shape() == [h, h],
        };
        if ok {
            Ok(())
        } else {
            Err(Error::shape("prompt_state", format!("{} prompt does not fit the encoder", self.mode())))
        }
    }

    fn to_tape(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.tensors()
            .into_iter()
            .map(|t| if trainable { tape.param(t) } else { tape.constant(t) })
            .collect()
    }
}

/// The frozen encoder's view of a set of instances: the graphs they live
/// in, one readout plan row per instance, and, where the mode allows, the
/// cached final-layer node embeddings.
pub struct InstanceContext {
    batch: GraphBatch,
    plan: ReadoutPlan,
    cached: Option<Tensor>,
}

impl InstanceContext {
    pub fn new(
        c: &GraphCollection,
        instances: &[InstanceId],
        params: &EncoderParams,
        mode: PromptMode,
        delta: usize,
    ) -> Result<Self> {
        let mut graph_ids: Vec<usize> = instances.iter().map(|i| i.graph()).collect();
        graph_ids.sort_unstable();
        graph_ids.dedup();
        let graphs = graph_ids.iter().map(|&g| c.graph(g)).collect::<Result<Vec<_>>>()?;
        let batch = GraphBatch::new(&graphs)?;
        let slot = |g: usize| graph_ids.binary_search(&g).expect("graph collected above");
        let sets = instances
            .iter()
            .map(|&inst| -> Result<Vec<usize>> {
                let b = slot(inst.graph());
                Ok(match inst {
                    InstanceId::Node { graph, node } => contextual_subgraph(c.graph(graph)?, node, delta)?
                        .nodes
                        .iter()
                        .map(|&v| batch.row(b, v))
                        .collect(),
                    InstanceId::Graph(_) => batch.rows_of(b).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cached = match mode {
            PromptMode::Layerwise => None,
            PromptMode::Single | PromptMode::Linear => Some(encoder::encode_batch(&batch, params)?),
        };
        Ok(InstanceContext {
            batch,
            plan: ReadoutPlan::new(sets),
            cached,
        })
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plan.is_empty()
    }

    fn final_layer(&self, tape: &mut Tape, params: &EncoderParams) -> Result<Var> {
        match &self.cached {
            Some(h) => Ok(tape.constant(h.clone())),
            None => {
                let x = tape.constant(self.batch.features.clone());
                let enc = params.to_tape(tape, false);
                encoder::forward(tape, x, &self.batch.adjacency, &enc, None)
            }
        }
    }

    /// One representation row per instance under the prompt variables `vars`
    /// (laid out as [`PromptState::tensors`]).
    fn representations(&self, tape: &mut Tape, params: &EncoderParams, mode: PromptMode, vars: &[Var]) -> Result<Var> {
        let nodes = match mode {
            PromptMode::Single => {
                let h = self.final_layer(tape, params)?;
                tape.mul_row(h, vars[0])?
            }
            PromptMode::Linear => {
                let h = self.final_layer(tape, params)?;
                tape.matmul(h, vars[0])?
            }
            PromptMode::Layerwise => {
                let x = tape.constant(self.batch.features.clone());
                let enc: EncoderVars = params.to_tape(tape, false);
                let (prompts, weights) = vars.split_at(vars.len() - 1);
                encoder::forward_fused(tape, x, &self.batch.adjacency, &enc, prompts, weights[0])?
            }
        };
        self.plan.apply(tape, nodes)
    }

    /// Plain representation rows under `state`.
    pub fn evaluate(&self, params: &EncoderParams, state: &PromptState) -> Result<Tensor> {
        state.check(params)?;
        let mut tape = Tape::new();
        let vars = state.to_tape(&mut tape, false);
        let reps = self.representations(&mut tape, params, state.mode(), &vars)?;
        Ok(tape.value(reps).clone())
    }
}

/// Representation of a single instance of `task`'s collection.
pub fn task_representation(
    c: &GraphCollection,
    instance: InstanceId,
    params: &EncoderParams,
    state: &PromptState,
    delta: usize,
) -> Result<Vec<f64>> {
    let ctx = InstanceContext::new(c, &[instance], params, state.mode(), delta)?;
    Ok(ctx.evaluate(params, state)?.into_data())
}

/// Mean representation per class, one row per class.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSet {
    pub values: Tensor,
}

impl PrototypeSet {
    pub fn num_classes(&self) -> usize {
        self.values.rows()
    }
}

fn class_groups(labels: &[usize], num_classes: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; num_classes];
    for &y in labels {
        if y >= num_classes {
            return Err(Error::Task(format!("label {y} outside {num_classes} classes")));
        }
        counts[y] += 1;
    }
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Task(format!("class {missing} has no support instance")));
    }
    Ok(counts)
}

fn prototypes_on_tape(tape: &mut Tape, reps: Var, labels: &[usize], num_classes: usize) -> Result<Var> {
    let counts = class_groups(labels, num_classes)?;
    let sums = tape.segment_sum(reps, Arc::from(labels), num_classes)?;
    let inv = Tensor::new(num_classes, 1, counts.iter().map(|&n| 1.0 / n as f64).collect())?;
    let width = tape.shape(reps)[1];
    let inv = tape.constant(inv.matmul(&Tensor::ones(1, width))?);
    tape.mul(sums, inv)
}

/// Prototype of class `c` = mean of the support rows labelled `c`.
pub fn compute_prototypes(reps: &Tensor, labels: &[usize], num_classes: usize) -> Result<PrototypeSet> {
    if reps.rows() != labels.len() {
        return Err(Error::shape("compute_prototypes", format!("{} rows for {} labels", reps.rows(), labels.len())));
    }
    let mut tape = Tape::new();
    let r = tape.constant(reps.clone());
    let p = prototypes_on_tape(&mut tape, r, labels, num_classes)?;
    Ok(PrototypeSet {
        values: tape.value(p).clone(),
    })
}

/// Cosine similarity with the same norm guard as the tape primitive.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    dot(a, b) / ((dot(a, a).sqrt() + COSINE_EPS) * (dot(b, b).sqrt() + COSINE_EPS))
}

fn unit(x: &[f64]) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| v / norm).collect()
}

/// Class of the most similar prototype; ties go to the lowest class index.
///
/// Similarity is the dot product of unit vectors rather than [`cosine`]: the
/// norm guard there favours longer prototypes among parallel ones, which
/// breaks scale invariance of the argmax and the tie rule.
pub fn classify(rep: &[f64], protos: &PrototypeSet) -> usize {
    let u = unit(rep);
    let mut best = (0, f64::NEG_INFINITY);
    for c in 0..protos.num_classes() {
        let s: f64 = unit(protos.values.row(c)).iter().zip(&u).map(|(a, b)| a * b).sum();
        if s > best.1 {
            best = (c, s);
        }
    }
    best.0
}

/// `-sum_i ln softmax_c(sim(s_i, proto_c) / tau)[y_i]`.
fn prompt_loss_on_tape(tape: &mut Tape, reps: Var, labels: &[usize], protos: Var, tau: f64) -> Result<Var> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let n = tape.shape(reps)[0];
    let classes = tape.shape(protos)[0];
    if labels.len() != n {
        return Err(Error::shape("prompt_loss", format!("{n} rows for {} labels", labels.len())));
    }
    let rows: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat(i).take(classes)).collect();
    let cols: Vec<usize> = (0..n).flat_map(|_| 0..classes).collect();
    let correct: Vec<usize> = labels.iter().enumerate().map(|(i, &y)| i * classes + y).collect();
    let r = tape.gather_rows(reps, Arc::from(rows.clone()))?;
    let p = tape.gather_rows(protos, Arc::from(cols))?;
    let sims = tape.cosine_rows(r, p)?;
    let logits = tape.scale(sims, 1.0 / tau)?;
    let e = tape.exp(logits)?;
    let denom = tape.segment_sum(e, Arc::from(rows), n)?;
    let log_denom = tape.ln(denom)?;
    let total_log_denom = tape.sum(log_denom)?;
    let picked = tape.gather_rows(logits, Arc::from(correct))?;
    let total_picked = tape.sum(picked)?;
    tape.sub(total_log_denom, total_picked)
}

pub fn prompt_loss(reps: &Tensor, labels: &[usize], protos: &PrototypeSet, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let r = tape.constant(reps.clone());
    let p = tape.constant(protos.values.clone());
    let loss = prompt_loss_on_tape(&mut tape, r, labels, p, tau)?;
    tape.value(loss).to_scalar()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneConfig {
    pub mode: PromptMode,
    pub tau: f64,
    pub adam: AdamConfig,
    pub max_steps: usize,
    /// Minimum loss improvement that counts as progress.
    pub tolerance: f64,
    /// Consecutive steps without progress before stopping.
    pub patience: usize,
    pub delta: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            mode: PromptMode::Single,
            tau: 0.5,
            adam: AdamConfig::with_lr(0.01),
            max_steps: 200,
            tolerance: 1e-5,
            patience: 10,
            delta: DEFAULT_DELTA,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub state: PromptState,
    /// Optimizer updates applied.
    pub steps: usize,
    /// Loss of the initial prompts, then after each update.
    pub losses: Vec<f64>,
}

impl TuneOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        self.losses[self.losses.len() - 1]
    }
}

/// Support-set prompt objective for one task.
struct SupportObjective<'a> {
    ctx: InstanceContext,
    labels: Vec<usize>,
    num_classes: usize,
    params: &'a EncoderParams,
    tau: f64,
}

impl SupportObjective<'_> {
    fn loss(&self, tape: &mut Tape, mode: PromptMode, vars: &[Var]) -> Result<Var> {
        let reps = self.ctx.representations(tape, self.params, mode, vars)?;
        let protos = prototypes_on_tape(tape, reps, &self.labels, self.num_classes)?;
        prompt_loss_on_tape(tape, reps, &self.labels, protos, self.tau)
    }
}

fn numeric_abort(step: usize, state: &PromptState, cause: Error) -> Error {
    match cause {
        Error::Numeric { op } => Error::Numeric {
            op: format!("prompt tuning step {step} ({op}); state {state:?}"),
        },
        other => other,
    }
}

/// Tunes a fresh prompt on the task's support set with the encoder frozen.
///
/// Stops after `max_steps` updates or once the loss has improved by less
/// than `tolerance` for `patience` consecutive steps.
pub fn tune_prompt(
    task: &FewShotTask,
    c: &GraphCollection,
    params: &EncoderParams,
    cfg: &TuneConfig,
) -> Result<TuneOutcome> {
    let state = PromptState::init(cfg.mode, params);
    let support: Vec<InstanceId> = task.support.iter().map(|(i, _)| *i).collect();
    let objective = SupportObjective {
        ctx: InstanceContext::new(c, &support, params, cfg.mode, cfg.delta)?,
        labels: task.support.iter().map(|(_, y)| *y).collect(),
        num_classes: task.classes.len(),
        params,
        tau: cfg.tau,
    };
    tune_with(&objective, state, cfg, &mut |_| true)
}

/// Optimization loop; `trainable(i)` selects which state tensors are updated.
fn tune_with(
    objective: &SupportObjective<'_>,
    mut state: PromptState,
    cfg: &TuneConfig,
    trainable: &mut dyn FnMut(usize) -> bool,
) -> Result<TuneOutcome> {
    let mode = state.mode();
    let mut tensors = state.tensors();
    let mask: Vec<bool> = (0..tensors.len()).map(&mut *trainable).collect();
    let mut adam = AdamState::new(cfg.adam, tensors.iter().zip(&mask).filter(|(_, &m)| m).map(|(t, _)| t));
    let mut losses = Vec::new();
    let mut stalled = 0;
    let mut steps = 0;
    loop {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors
            .iter()
            .zip(&mask)
            .map(|(t, &m)| if m { tape.param(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        let loss = objective
            .loss(&mut tape, mode, &vars)
            .map_err(|e| numeric_abort(steps, &state, e))?;
        let value = tape.value(loss).to_scalar()?;
        if let Some(&prev) = losses.last() {
            stalled = if prev - value < cfg.tolerance { stalled + 1 } else { 0 };
        }
        losses.push(value);
        if steps >= cfg.max_steps || stalled >= cfg.patience {
            break;
        }
        let grads = tape.gradients(loss).map_err(|e| numeric_abort(steps, &state, e))?;
        let grads: Vec<Tensor> = vars
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(tape.shape(v)[0], tape.shape(v)[1]))
            })
            .collect();
        let mut params: Vec<&mut Tensor> = tensors.iter_mut().zip(&mask).filter(|(_, &m)| m).map(|(t, _)| t).collect();
        adam.step(&mut params, &grads.iter().collect::<Vec<_>>())?;
        state.set_tensors(&tensors);
        steps += 1;
    }
    Ok(TuneOutcome { state, steps, losses })
}

/// Query accuracy of nearest-prototype classification, with prototypes
/// taken from the support set under the same prompt.
pub fn evaluate_task(
    task: &FewShotTask,
    c: &GraphCollection,
    params: &EncoderParams,
    state: &PromptState,
    delta: usize,
) -> Result<f64> {
    if task.query.is_empty() {
        return Err(Error::Task("query set is empty".into()));
    }
    let support: Vec<InstanceId> = task.support.iter().map(|(i, _)| *i).collect();
    let labels: Vec<usize> = task.support.iter().map(|(_, y)| *y).collect();
    let reps = InstanceContext::new(c, &support, params, state.mode(), delta)?.evaluate(params, state)?;
    let protos = compute_prototypes(&reps, &labels, task.classes.len())?;
    let query: Vec<InstanceId> = task.query.iter().map(|(i, _)| *i).collect();
    let qreps = InstanceContext::new(c, &query, params, state.mode(), delta)?.evaluate(params, state)?;
    let predicted: Vec<usize> = (0..qreps.rows()).map(|i| classify(qreps.row(i), &protos)).collect();
    Ok(accuracy(&predicted, &task.query.iter().map(|(_, y)| *y).collect::<Vec<_>>()))
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}
