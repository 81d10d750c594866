//! Self-supervised pre-training of the encoder.
//!
//! Link prediction compares contextual-subgraph embeddings of triplets
//! `(v, a, b)`; the contrastive kinds (DGI, InfoGraph, GraphCL, GCC) share
//! one generalized loss and differ only in how targets, positives and
//! negatives are materialized. Batches and triplets are sampled once from
//! the seed and reused every epoch, with full-batch Adam updates.

mod batches;
mod loss;
mod triplets;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

pub use batches::{
    corrupt_features, drop_nodes, make_dgi_batches, make_gcc_batches, make_graphcl_batches,
    make_infograph_batches, perturb_edges, random_walk_nodes, ContrastiveSet, GccParams, Instance,
};
pub use loss::{
    generalized_contrastive_loss, generalized_contrastive_loss_on_tape, link_pred_loss,
    link_pred_loss_on_tape, ContrastiveBatch,
};
pub use triplets::{sample_triplets, Triplet, TripletSet};

use crate::encoder::{self, EncoderParams, EncoderVars, ReadoutPlan};
use crate::error::{Error, Result};
use crate::graphdata::{contextual_subgraph, GraphBatch, GraphCollection, DEFAULT_DELTA};
use crate::rng;
use crate::tensorgrad::{AdamConfig, AdamState, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PretrainKind {
    LinkPred,
    Dgi,
    InfoGraph,
    GraphCl,
    Gcc,
}

impl PretrainKind {
    pub const ALL: [PretrainKind; 5] = [
        PretrainKind::LinkPred,
        PretrainKind::Dgi,
        PretrainKind::InfoGraph,
        PretrainKind::GraphCl,
        PretrainKind::Gcc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PretrainKind::LinkPred => "link_pred",
            PretrainKind::Dgi => "dgi",
            PretrainKind::InfoGraph => "infograph",
            PretrainKind::GraphCl => "graphcl",
            PretrainKind::Gcc => "gcc",
        }
    }
}

impl fmt::Display for PretrainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PretrainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pretrain kind {s:?} (link_pred|dgi|infograph|graphcl|gcc)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub kind: PretrainKind,
    pub tau: f64,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub num_layers: usize,
    pub hidden_dim: usize,
    /// Hop radius of the contextual subgraphs used by link prediction.
    pub delta: usize,
    pub triplets_per_graph: usize,
    pub negatives_per_target: usize,
    pub aug_ratio: f64,
    pub gcc: GccParams,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            kind: PretrainKind::LinkPred,
            tau: 0.5,
            epochs: 100,
            adam: AdamConfig::default(),
            num_layers: encoder::DEFAULT_LAYERS,
            hidden_dim: encoder::DEFAULT_HIDDEN,
            delta: DEFAULT_DELTA,
            triplets_per_graph: 32,
            negatives_per_target: 32,
            aug_ratio: 0.2,
            gcc: GccParams::default(),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.adam.lr.is_finite() && self.adam.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.adam.lr));
        }
        if self.gcc.r == self.gcc.r_prime {
            return bad(format!("gcc radii must differ, both are {}", self.gcc.r));
        }
        if !(0.0..1.0).contains(&self.aug_ratio) {
            return bad(format!("augmentation ratio must be in [0, 1), got {}", self.aug_ratio));
        }
        if self.num_layers == 0 || self.hidden_dim == 0 {
            return bad("encoder layers and hidden width must be positive".into());
        }
        if self.triplets_per_graph == 0 || self.negatives_per_target == 0 {
            return bad("triplets per graph and negatives per target must be positive".into());
        }
        Ok(())
    }
}

/// Loss over a fixed sample, rebuilt on a fresh tape every step.
enum Objective {
    LinkPred {
        batch: GraphBatch,
        v: ReadoutPlan,
        a: ReadoutPlan,
        b: ReadoutPlan,
    },
    Contrastive {
        batch: GraphBatch,
        plan: ReadoutPlan,
        batches: Vec<ContrastiveBatch>,
    },
}

impl Objective {
    fn build(c: &GraphCollection, cfg: &PretrainConfig) -> Result<Self> {
        let seed = rng::stream_seed(cfg.seed, rng::AUGMENT);
        let set = match cfg.kind {
            PretrainKind::LinkPred => return Self::link_pred(c, cfg),
            PretrainKind::Dgi => make_dgi_batches(c, seed)?,
            PretrainKind::InfoGraph => make_infograph_batches(c, cfg.negatives_per_target, seed)?,
            PretrainKind::GraphCl => make_graphcl_batches(c, cfg.aug_ratio, cfg.negatives_per_target, seed)?,
            PretrainKind::Gcc => make_gcc_batches(c, cfg.gcc, seed)?,
        };
        if set.skipped > 0 {
            log::warn!("{}: {} target(s) skipped while building {} batches", c.name, set.skipped, cfg.kind);
        }
        let batch = set.graph_batch()?;
        let plan = set.readout_plan(&batch);
        Ok(Objective::Contrastive {
            batch,
            plan,
            batches: set.batches,
        })
    }

    fn link_pred(c: &GraphCollection, cfg: &PretrainConfig) -> Result<Self> {
        let triplets = sample_triplets(c, cfg.triplets_per_graph, rng::stream_seed(cfg.seed, rng::TRIPLETS));
        if triplets.is_empty() {
            return Err(Error::Batch(format!("{}: no graph yields a link-prediction triplet", c.name)));
        }
        let batch = GraphBatch::new(&c.graphs().iter().collect::<Vec<_>>())?;
        let mut cache = std::collections::HashMap::new();
        let mut context = |g: usize, v: usize| -> Result<Vec<usize>> {
            if let Some(rows) = cache.get(&(g, v)) {
                return Ok(Vec::clone(rows));
            }
            let s = contextual_subgraph(&c.graphs()[g], v, cfg.delta)?;
            let rows: Vec<usize> = s.nodes.iter().map(|&u| batch.row(g, u)).collect();
            cache.insert((g, v), rows.clone());
            Ok(rows)
        };
        let mut sets = [Vec::new(), Vec::new(), Vec::new()];
        for t in &triplets.triplets {
            sets[0].push(context(t.graph, t.v)?);
            sets[1].push(context(t.graph, t.a)?);
            sets[2].push(context(t.graph, t.b)?);
        }
        let [v, a, b] = sets.map(ReadoutPlan::new);
        Ok(Objective::LinkPred { batch, v, a, b })
    }

    fn loss(&self, tape: &mut Tape, enc: &EncoderVars, tau: f64) -> Result<Var> {
        match self {
            Objective::LinkPred { batch, v, a, b } => {
                let x = tape.constant(batch.features.clone());
                let h = encoder::forward(tape, x, &batch.adjacency, enc, None)?;
                let s_v = v.apply(tape, h)?;
                let s_a = a.apply(tape, h)?;
                let s_b = b.apply(tape, h)?;
                link_pred_loss_on_tape(tape, s_v, s_a, s_b, tau)
            }
            Objective::Contrastive { batch, plan, batches } => {
                let x = tape.constant(batch.features.clone());
                let h = encoder::forward(tape, x, &batch.adjacency, enc, None)?;
                let emb = plan.apply(tape, h)?;
                generalized_contrastive_loss_on_tape(tape, emb, batches, tau)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub params: EncoderParams,
    /// `(epoch, loss)` with epoch 0 the loss before any update and epoch `e`
    /// the loss after `e` updates.
    pub curve: Vec<(usize, f64)>,
}

impl PretrainOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.curve[0].1
    }

    pub fn final_loss(&self) -> f64 {
        self.curve[self.curve.len() - 1].1
    }

    pub fn write_curve(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "epoch,loss")?;
        for (e, l) in &self.curve {
            writeln!(w, "{e},{l}")?;
        }
        Ok(())
    }

    pub fn save_curve(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_curve(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

fn numeric_abort(epoch: usize, last: Option<f64>, cause: Error) -> Error {
    match cause {
        Error::Numeric { op } => Error::Numeric {
            op: format!(
                "pretraining epoch {epoch} ({op}; last finite loss {})",
                last.map_or("none".to_string(), |l| l.to_string())
            ),
        },
        other => other,
    }
}

/// Initializes an encoder from the `init` stream and trains it for
/// `cfg.epochs` full-batch Adam steps on the selected objective.
pub fn pretrain(c: &GraphCollection, cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let mut params = EncoderParams::init(
        c.feature_dim(),
        cfg.hidden_dim,
        cfg.num_layers,
        &mut rng::substream(cfg.seed, rng::INIT),
    )?;
    let objective = Objective::build(c, cfg)?;
    let mut adam = AdamState::new(cfg.adam, params.tensors().into_iter());
    let mut curve = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let mut tape = Tape::new();
        let enc = params.to_tape(&mut tape, true);
        let last = curve.last().map(|&(_, l)| l);
        let loss = objective
            .loss(&mut tape, &enc, cfg.tau)
            .map_err(|e| numeric_abort(epoch, last, e))?;
        let value = tape.value(loss).to_scalar()?;
        curve.push((epoch, value));
        log::debug!("{} epoch {epoch}: loss {value}", cfg.kind);
        if epoch == cfg.epochs {
            break;
        }
        let grads = tape.gradients(loss).map_err(|e| numeric_abort(epoch, Some(value), e))?;
        let grads: Vec<_> = enc
            .all()
            .into_iter()
            .map(|v| grads.get(v).cloned().unwrap_or_else(|| crate::tensorgrad::Tensor::zeros(tape.shape(v)[0], tape.shape(v)[1])))
            .collect();
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric {
                op: format!("pretraining epoch {epoch} gradient (loss {value})"),
            });
        }
        let mut tensors = params.tensors_mut();
        adam.step(&mut tensors, &grads.iter().collect::<Vec<_>>())?;
    }
    Ok(PretrainOutcome { params, curve })
}
