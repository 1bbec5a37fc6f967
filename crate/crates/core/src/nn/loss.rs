//! Objectives and their gradients with respect to head outputs.

use super::{backward, forward_train, Gradients, NetworkParams, NnError, Outputs, Real};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossCoefs {
    pub value: f64,
    pub entropy: f64,
}

impl Default for LossCoefs {
    fn default() -> Self {
        LossCoefs { value: 0.5, entropy: 0.1 }
    }
}

/// One A2C update's worth of samples.
#[derive(Clone, Copy, Debug)]
pub struct A2cBatch<'a> {
    /// `n` observations, flat.
    pub observations: &'a [f32],
    pub actions: &'a [usize],
    /// n-step returns.
    pub returns: &'a [f32],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct A2cStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

pub fn softmax_rows<T: Real>(logits: &[T], width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(width) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&z| (z - m).exp()));
        let total: T = out[start..].iter().copied().sum();
        out[start..].iter_mut().for_each(|p| *p = *p / total);
    }
    out
}

pub fn log_softmax_rows<T: Real>(logits: &[T], width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(width) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<T>().ln();
        out.extend(row.iter().map(|&z| z - lse));
    }
    out
}

fn check_batch<T: Real>(outputs: &Outputs<T>, batch: &A2cBatch<'_>) -> Result<(), NnError> {
    let n = outputs.batch;
    if batch.actions.len() != n || batch.returns.len() != n || outputs.values.is_none() {
        return Err(NnError::Shape(format!(
            "a2c batch of {n} with {} actions, {} returns",
            batch.actions.len(),
            batch.returns.len()
        )));
    }
    if let Some(&a) = batch.actions.iter().find(|&&a| a >= outputs.logit_count) {
        return Err(NnError::Shape(format!("action index {a} out of range")));
    }
    Ok(())
}

/// Loss value from head outputs. `advantages`, when given, replaces `R - V` in the
/// policy term; this is how the stop-gradient on the advantage is reproduced when
/// the objective is probed by finite differences.
pub fn a2c_objective<T: Real>(outputs: &Outputs<T>, batch: &A2cBatch<'_>, coefs: &LossCoefs, advantages: Option<&[f64]>) -> Result<A2cStats, NnError> {
    check_batch(outputs, batch)?;
    let n = outputs.batch;
    let width = outputs.logit_count;
    let values = outputs.values.as_ref().expect("checked");
    let logp = log_softmax_rows(&outputs.logits, width);
    let (mut pl, mut vl, mut ent) = (0f64, 0f64, 0f64);
    for i in 0..n {
        let row = &logp[i * width..(i + 1) * width];
        let r = batch.returns[i] as f64;
        let v = values[i].to_f64_lossless();
        let adv = advantages.map_or(r - v, |a| a[i]);
        pl -= row[batch.actions[i]].to_f64_lossless() * adv;
        vl += (r - v) * (r - v);
        ent -= row.iter().map(|&lp| lp.to_f64_lossless().exp() * lp.to_f64_lossless()).sum::<f64>();
    }
    let nf = n as f64;
    let stats = A2cStats {
        policy_loss: pl / nf,
        value_loss: vl / nf,
        entropy: ent / nf,
        loss: pl / nf + coefs.value * vl / nf - coefs.entropy * ent / nf,
    };
    if !stats.loss.is_finite() {
        return Err(NnError::NonFinite {
            what: "a2c loss",
            detail: format!("{stats:?}"),
        });
    }
    Ok(stats)
}

/// `policy_loss + c_v * value_loss - c_e * entropy` and its parameter gradients,
/// with the advantage `R - V` held constant.
pub fn a2c_loss<T: Real>(params: &NetworkParams<T>, batch: &A2cBatch<'_>, coefs: &LossCoefs) -> Result<(A2cStats, Gradients<T>), NnError> {
    let (outputs, cache) = forward_train(params, batch.observations)?;
    let stats = a2c_objective(&outputs, batch, coefs, None)?;
    let n = outputs.batch;
    let width = outputs.logit_count;
    let values = outputs.values.as_ref().expect("checked");
    let logp = log_softmax_rows(&outputs.logits, width);
    let inv_n = T::one() / T::from_f64_lossy(n as f64);
    let ce = T::from_f64_lossy(coefs.entropy);
    let cv = T::from_f64_lossy(coefs.value);
    let two = T::from_f64_lossy(2.0);

    let mut grad_logits = vec![T::zero(); n * width];
    let mut grad_values = vec![T::zero(); n];
    for i in 0..n {
        let row = &logp[i * width..(i + 1) * width];
        let r = T::from_f32(batch.returns[i]);
        let adv = r - values[i];
        let h: T = -row.iter().map(|&lp| lp.exp() * lp).sum::<T>();
        for j in 0..width {
            let p = row[j].exp();
            let onehot = if j == batch.actions[i] { T::one() } else { T::zero() };
            grad_logits[i * width + j] = (-adv * (onehot - p) + ce * p * (row[j] + h)) * inv_n;
        }
        grad_values[i] = cv * two * (values[i] - r) * inv_n;
    }
    let grads = backward(params, &cache, &grad_logits, Some(&grad_values))?;
    if !grads.is_finite() {
        return Err(NnError::NonFinite {
            what: "a2c gradients",
            detail: format!("loss {:?}", stats),
        });
    }
    Ok((stats, grads))
}

/// Mean cross-entropy of a classifier head, its gradients, and the batch accuracy.
pub fn cross_entropy_loss<T: Real>(params: &NetworkParams<T>, observations: &[f32], labels: &[usize]) -> Result<(f64, f64, Gradients<T>), NnError> {
    let (outputs, cache) = forward_train(params, observations)?;
    let n = outputs.batch;
    let width = outputs.logit_count;
    if labels.len() != n || labels.iter().any(|&l| l >= width) {
        return Err(NnError::Shape("labels do not match batch".into()));
    }
    let logp = log_softmax_rows(&outputs.logits, width);
    let inv_n = T::one() / T::from_f64_lossy(n as f64);
    let mut loss = 0f64;
    let mut correct = 0usize;
    let mut grad = vec![T::zero(); n * width];
    for i in 0..n {
        let row = &logp[i * width..(i + 1) * width];
        loss -= row[labels[i]].to_f64_lossless();
        if argmax(row) == labels[i] {
            correct += 1;
        }
        for j in 0..width {
            let onehot = if j == labels[i] { T::one() } else { T::zero() };
            grad[i * width + j] = (row[j].exp() - onehot) * inv_n;
        }
    }
    let loss = loss / n as f64;
    if !loss.is_finite() {
        return Err(NnError::NonFinite {
            what: "cross-entropy",
            detail: format!("batch of {n}"),
        });
    }
    let grads = backward(params, &cache, &grad, None)?;
    Ok((loss, correct as f64 / n as f64, grads))
}

/// Index of the largest entry; the first one wins ties.
pub(crate) fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
