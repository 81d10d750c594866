//! Triplet and generalized contrastive losses over cosine similarities.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensorgrad::{Tape, Tensor, Var};

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("temperature must be positive, got {tau}")))
    }
}

/// Triplet loss `-sum ln[e^{sim(v,a)/tau} / (e^{sim(v,a)/tau} + e^{sim(v,b)/tau})]`.
///
/// Row `i` of `s_v`, `s_a`, `s_b` holds the embeddings of triplet `i`.
pub fn link_pred_loss_on_tape(tape: &mut Tape, s_v: Var, s_a: Var, s_b: Var, tau: f64) -> Result<Var> {
    check_tau(tau)?;
    let pos = tape.cosine_rows(s_v, s_a)?;
    let neg = tape.cosine_rows(s_v, s_b)?;
    let pos = tape.scale(pos, 1.0 / tau)?;
    let neg = tape.scale(neg, 1.0 / tau)?;
    let e_pos = tape.exp(pos)?;
    let e_neg = tape.exp(neg)?;
    let denom = tape.add(e_pos, e_neg)?;
    let log_denom = tape.ln(denom)?;
    let per_triplet = tape.sub(log_denom, pos)?;
    tape.sum(per_triplet)
}

pub fn link_pred_loss(s_v: &Tensor, s_a: &Tensor, s_b: &Tensor, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let (v, a, b) = (
        tape.constant(s_v.clone()),
        tape.constant(s_a.clone()),
        tape.constant(s_b.clone()),
    );
    let loss = link_pred_loss_on_tape(&mut tape, v, a, b, tau)?;
    tape.value(loss).to_scalar()
}

/// Target, positives and negatives of one contrastive term, as row indices
/// into an embedding matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContrastiveBatch {
    pub target: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl ContrastiveBatch {
    pub fn validate(&self, rows: usize) -> Result<()> {
        if self.positives.is_empty() || self.negatives.is_empty() {
            return Err(Error::Batch(format!(
                "target {} has {} positives and {} negatives",
                self.target,
                self.positives.len(),
                self.negatives.len()
            )));
        }
        let all = std::iter::once(&self.target).chain(&self.positives).chain(&self.negatives);
        if let Some(&bad) = all.into_iter().find(|&&i| i >= rows) {
            return Err(Error::Index {
                what: "contrastive embeddings",
                index: bad,
                len: rows,
            });
        }
        Ok(())
    }
}

/// `sum over batches of ln(sum_i e^{sim(s_i, s_o)/tau})` for the selected members.
fn log_sum_exp_sims(
    tape: &mut Tape,
    emb: Var,
    batches: &[ContrastiveBatch],
    members: impl Fn(&ContrastiveBatch) -> &[usize],
    tau: f64,
) -> Result<Var> {
    let mut targets = Vec::new();
    let mut others = Vec::new();
    let mut groups = Vec::new();
    for (o, b) in batches.iter().enumerate() {
        for &m in members(b) {
            targets.push(b.target);
            others.push(m);
            groups.push(o);
        }
    }
    let t = tape.gather_rows(emb, Arc::from(targets))?;
    let m = tape.gather_rows(emb, Arc::from(others))?;
    let sims = tape.cosine_rows(m, t)?;
    let logits = tape.scale(sims, 1.0 / tau)?;
    let e = tape.exp(logits)?;
    let sums = tape.segment_sum(e, Arc::from(groups), batches.len())?;
    let logs = tape.ln(sums)?;
    tape.sum(logs)
}

/// `-sum_o ln[sum_{a in Pos} e^{sim(s_a,s_o)/tau} / sum_{b in Neg} e^{sim(s_b,s_o)/tau}]`.
///
/// The denominator runs over negatives only, so the loss can be negative.
pub fn generalized_contrastive_loss_on_tape(
    tape: &mut Tape,
    emb: Var,
    batches: &[ContrastiveBatch],
    tau: f64,
) -> Result<Var> {
    check_tau(tau)?;
    if batches.is_empty() {
        return Err(Error::Batch("no contrastive batches".into()));
    }
    let rows = tape.shape(emb)[0];
    for b in batches {
        b.validate(rows)?;
    }
    let pos = log_sum_exp_sims(tape, emb, batches, |b| &b.positives, tau)?;
    let neg = log_sum_exp_sims(tape, emb, batches, |b| &b.negatives, tau)?;
    tape.sub(neg, pos)
}

pub fn generalized_contrastive_loss(emb: &Tensor, batches: &[ContrastiveBatch], tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let e = tape.constant(emb.clone());
    let loss = generalized_contrastive_loss_on_tape(&mut tape, e, batches, tau)?;
    tape.value(loss).to_scalar()
}
