//! Add-one-smoothed n-gram language model over the non-blank vocabulary,
//! used for shallow fusion during beam search.

use std::collections::HashMap;
use thiserror::Error;

/// Sentinel for positions before the start of a sequence.
const BOS: usize = usize::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum LmError {
    #[error("n-gram order {order} outside [1, 3]")]
    OrderOutOfRange { order: usize },
    #[error("corpus label {label} is invalid (blank or outside the vocabulary)")]
    BadLabel { label: usize },
}

/// Maximum-likelihood n-gram with add-one smoothing; unseen contexts fall
/// back to the uniform distribution.
#[derive(Debug, Clone)]
pub struct NgramLm {
    order: usize,
    vocab_size: usize,
    blank_id: usize,
    /// context (length `order - 1`, BOS-padded) -> per-label counts.
    counts: HashMap<Vec<usize>, (HashMap<usize, usize>, usize)>,
    uniform_lp: f64,
}

/// Train on label-id sequences drawn from the decode vocabulary.
/// An empty corpus yields the uniform model.
pub fn train_ngram_lm(
    corpus: &[Vec<usize>],
    order: usize,
    vocab_size: usize,
    blank_id: usize,
) -> Result<NgramLm, LmError> {
    if !(1..=3).contains(&order) {
        return Err(LmError::OrderOutOfRange { order });
    }
    let mut counts: HashMap<Vec<usize>, (HashMap<usize, usize>, usize)> = HashMap::new();
    for sequence in corpus {
        for (i, &label) in sequence.iter().enumerate() {
            if label >= vocab_size || label == blank_id {
                return Err(LmError::BadLabel { label });
            }
            let context = context_of(&sequence[..i], order);
            let slot = counts.entry(context).or_default();
            *slot.0.entry(label).or_insert(0) += 1;
            slot.1 += 1;
        }
    }
    let non_blank = (vocab_size - 1) as f64;
    Ok(NgramLm { order, vocab_size, blank_id, counts, uniform_lp: -(non_blank.ln()) })
}

fn context_of(prefix: &[usize], order: usize) -> Vec<usize> {
    let n = order - 1;
    let mut ctx = Vec::with_capacity(n);
    for i in 0..n {
        let back = n - i;
        ctx.push(if prefix.len() >= back { prefix[prefix.len() - back] } else { BOS });
    }
    ctx
}

impl NgramLm {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Log-probability of `next_label` following `prefix`. Normalized per
    /// context over the non-blank vocabulary.
    pub fn score(&self, prefix: &[usize], next_label: usize) -> f64 {
        debug_assert!(next_label < self.vocab_size && next_label != self.blank_id);
        let context = context_of(prefix, self.order);
        match self.counts.get(&context) {
            Some((per_label, total)) => {
                let c = per_label.get(&next_label).copied().unwrap_or(0) as f64;
                let v = (self.vocab_size - 1) as f64;
                ((c + 1.0) / (*total as f64 + v)).ln()
            }
            None => self.uniform_lp,
        }
    }

    /// Total log-probability of a whole sequence.
    pub fn sequence_score(&self, sequence: &[usize]) -> f64 {
        (0..sequence.len()).map(|i| self.score(&sequence[..i], sequence[i])).sum()
    }
}
