//! Frame-level blank-separated loss over `[T x K]` encoder logits, used as
//! the auxiliary regularizer in joint training.
//!
//! This is an independent implementation over the classic expanded label
//! chain (blank, y1, blank, y2, ..., blank); it is *not* routed through the
//! graph loss, so the two can cross-check each other: on a lattice whose
//! rows do not depend on the decoder state, this loss and the graph loss on
//! the CTC-like topology agree to full precision.

use super::{LossError, LossOutput};
use crate::numerics::{log_add, log_softmax_rows, LOG_ZERO};
use crate::topology::LabelSequence;

/// Loss and gradient over `[T x K]` encoder logits.
pub type CtcLossOutput = LossOutput;

pub fn ctc_loss(
    logits: &[f64],
    num_frames: usize,
    vocab_size: usize,
    blank_id: usize,
    labels: &LabelSequence,
) -> Result<CtcLossOutput, LossError> {
    if num_frames == 0 {
        return Err(crate::numerics::NumericsError::NoFrames.into());
    }
    if vocab_size < 2 {
        return Err(crate::numerics::NumericsError::VocabTooSmall { vocab_size }.into());
    }
    if blank_id >= vocab_size {
        return Err(crate::numerics::NumericsError::BlankOutOfRange { blank_id, vocab_size }.into());
    }
    let expected = num_frames * vocab_size;
    if logits.len() != expected {
        return Err(crate::numerics::NumericsError::ShapeMismatch { expected, got: logits.len() }.into());
    }
    for (position, &label) in labels.labels().iter().enumerate() {
        if label >= vocab_size || label == blank_id {
            return Err(LossError::LabelIncompatible { label, position });
        }
    }

    let lp = log_softmax_rows(logits, vocab_size)?;
    let lp_at = |t: usize, k: usize| lp[t * vocab_size + k];

    // Expanded chain: blank, y1, blank, y2, ..., blank.
    let y = labels.labels();
    let u_len = y.len();
    let chain_len = 2 * u_len + 1;
    let chain: Vec<usize> =
        (0..chain_len).map(|s| if s % 2 == 1 { y[s / 2] } else { blank_id }).collect();
    let at = |t: usize, s: usize| t * chain_len + s;

    let mut alpha = vec![LOG_ZERO; num_frames * chain_len];
    alpha[at(0, 0)] = lp_at(0, blank_id);
    if u_len > 0 {
        alpha[at(0, 1)] = lp_at(0, chain[1]);
    }
    for t in 1..num_frames {
        for s in 0..chain_len {
            let mut acc = alpha[at(t - 1, s)];
            if s >= 1 {
                acc = log_add(acc, alpha[at(t - 1, s - 1)]);
            }
            if s >= 2 && chain[s] != blank_id && chain[s] != chain[s - 2] {
                acc = log_add(acc, alpha[at(t - 1, s - 2)]);
            }
            alpha[at(t, s)] = acc + lp_at(t, chain[s]);
        }
    }

    let mut ln_p = alpha[at(num_frames - 1, chain_len - 1)];
    if chain_len >= 2 {
        ln_p = log_add(ln_p, alpha[at(num_frames - 1, chain_len - 2)]);
    }
    let size = logits.len();
    if ln_p == LOG_ZERO {
        return Ok(LossOutput::empty(size));
    }

    // Backward: mass of completing from state s after frame t, excluding
    // the observation at frame t itself (alpha already carries it).
    let mut beta = vec![LOG_ZERO; num_frames * chain_len];
    beta[at(num_frames - 1, chain_len - 1)] = 0.0;
    if chain_len >= 2 {
        beta[at(num_frames - 1, chain_len - 2)] = 0.0;
    }
    for t in (0..num_frames - 1).rev() {
        for s in 0..chain_len {
            let mut acc = beta[at(t + 1, s)] + lp_at(t + 1, chain[s]);
            if s + 1 < chain_len {
                acc = log_add(acc, beta[at(t + 1, s + 1)] + lp_at(t + 1, chain[s + 1]));
            }
            if s + 2 < chain_len && chain[s + 2] != blank_id && chain[s + 2] != chain[s] {
                acc = log_add(acc, beta[at(t + 1, s + 2)] + lp_at(t + 1, chain[s + 2]));
            }
            beta[at(t, s)] = acc;
        }
    }

    // Per-frame occupancy sums to one: each path consumes exactly one
    // observation per frame.
    let mut gamma = vec![0.0; size];
    for t in 0..num_frames {
        for s in 0..chain_len {
            let post = alpha[at(t, s)] + beta[at(t, s)] - ln_p;
            if post != LOG_ZERO {
                gamma[t * vocab_size + chain[s]] += post.exp();
            }
        }
    }
    let mut grad = vec![0.0; size];
    for t in 0..num_frames {
        let mass: f64 = gamma[t * vocab_size..(t + 1) * vocab_size].iter().sum();
        for k in 0..vocab_size {
            grad[t * vocab_size + k] = lp_at(t, k).exp() * mass - gamma[t * vocab_size + k];
        }
    }

    Ok(LossOutput { loss: -ln_p, grad_logits: grad, posterior: gamma, empty_alignment: false })
}
