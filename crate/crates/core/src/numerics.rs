//! Log-domain arithmetic and the dense joiner lattice shared by every loss
//! and oracle in this crate.
//!
//! All probability mass is carried as natural-log values in `f64`. Exact-zero
//! probability is `f64::NEG_INFINITY`, never a large negative sentinel, so
//! `log_add` has a genuine identity element.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Log-domain representation of an exact zero probability.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// Tolerance for "this row is a normalized distribution" checks.
pub const ROW_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("non-finite logit at flat index {index}")]
    NonFiniteLogit { index: usize },
    #[error("logit buffer has {got} values, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("frame count must be at least 1")]
    NoFrames,
    #[error("vocabulary size {vocab_size} is too small (need blank plus at least one label)")]
    VocabTooSmall { vocab_size: usize },
    #[error("blank id {blank_id} is outside the vocabulary of size {vocab_size}")]
    BlankOutOfRange { blank_id: usize, vocab_size: usize },
    #[error("lattice needs at least one decoder-state row")]
    NoRows,
    #[error("log-probability {value} is positive")]
    PositiveLogProb { value: f64 },
    #[error("log-probability is NaN")]
    NanLogProb,
}

/// A natural-log probability: a value in `[-inf, 0]`, never NaN.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    /// Probability one.
    pub const ONE: LogProb = LogProb(0.0);
    /// Probability zero (`-inf`).
    pub const ZERO: LogProb = LogProb(LOG_ZERO);

    pub fn new(value: f64) -> Result<Self, NumericsError> {
        if value.is_nan() {
            return Err(NumericsError::NanLogProb);
        }
        if value > 0.0 {
            return Err(NumericsError::PositiveLogProb { value });
        }
        Ok(LogProb(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == LOG_ZERO
    }

    /// `ln(e^self + e^other)`; commutative, with [`LogProb::ZERO`] as identity.
    pub fn log_add(self, other: LogProb) -> LogProb {
        LogProb(log_add(self.0, other.0))
    }
}

/// Stable `ln(e^a + e^b)` via the max-shift trick.
///
/// `-inf` is the identity element; two `-inf` inputs stay `-inf` instead of
/// producing NaN.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Log-sum over an iterator, `-inf` for an empty one.
pub fn log_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().fold(LOG_ZERO, log_add)
}

/// Shift every row of `logits` (rows of width `width`) by its logsumexp so
/// each output row is a normalized log-distribution.
pub fn log_softmax_rows(logits: &[f64], width: usize) -> Result<Vec<f64>, NumericsError> {
    assert!(width > 0, "row width must be positive");
    assert_eq!(logits.len() % width, 0, "buffer is not a whole number of rows");
    if let Some(index) = logits.iter().position(|v| !v.is_finite()) {
        return Err(NumericsError::NonFiniteLogit { index });
    }
    let mut out = vec![0.0; logits.len()];
    for (row_in, row_out) in logits.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
        let max = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row_in.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (o, v) in row_out.iter_mut().zip(row_in) {
            *o = v - lse;
        }
    }
    Ok(out)
}

/// Dense `[T x (U+1) x K]` joiner output: pre-softmax logits plus the derived
/// per-(t,u) log-softmax rows. The sole input to every loss and oracle.
///
/// `num_rows` is one more than the reference label count, one row per decoder
/// state; decoders may use lattices with more rows than the reference needs.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinerLattice {
    num_frames: usize,
    num_rows: usize,
    vocab_size: usize,
    blank_id: usize,
    logits: Vec<f64>,
    logprobs: Vec<f64>,
}

impl JoinerLattice {
    /// Build a lattice from raw pre-softmax logits, row-major with `t`
    /// slowest and `k` fastest. The log-probability tensor is recomputed
    /// here and nowhere else, so it is always a pure function of the logits.
    pub fn from_logits(
        num_frames: usize,
        num_rows: usize,
        vocab_size: usize,
        blank_id: usize,
        logits: Vec<f64>,
    ) -> Result<Self, NumericsError> {
        if num_frames == 0 {
            return Err(NumericsError::NoFrames);
        }
        if num_rows == 0 {
            return Err(NumericsError::NoRows);
        }
        if vocab_size < 2 {
            return Err(NumericsError::VocabTooSmall { vocab_size });
        }
        if blank_id >= vocab_size {
            return Err(NumericsError::BlankOutOfRange { blank_id, vocab_size });
        }
        let expected = num_frames * num_rows * vocab_size;
        if logits.len() != expected {
            return Err(NumericsError::ShapeMismatch { expected, got: logits.len() });
        }
        let logprobs = log_softmax_rows(&logits, vocab_size)?;
        Ok(Self { num_frames, num_rows, vocab_size, blank_id, logits, logprobs })
    }

    /// All-equal logits, so every row is the uniform distribution `1/K`.
    pub fn uniform(num_frames: usize, num_rows: usize, vocab_size: usize, blank_id: usize) -> Self {
        let logits = vec![0.0; num_frames * num_rows * vocab_size];
        Self::from_logits(num_frames, num_rows, vocab_size, blank_id, logits)
            .expect("uniform lattice dimensions were already validated by the caller")
    }

    /// Standard-normal logits from a seeded generator; identical across runs.
    pub fn random_normal(
        num_frames: usize,
        num_rows: usize,
        vocab_size: usize,
        blank_id: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = num_frames * num_rows * vocab_size;
        let logits: Vec<f64> = (0..n)
            .map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal))
            .collect();
        Self::from_logits(num_frames, num_rows, vocab_size, blank_id, logits)
            .expect("random lattice dimensions were already validated by the caller")
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    /// Number of decoder-state rows (`U + 1` for a reference of `U` labels).
    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn blank_id(&self) -> usize {
        self.blank_id
    }

    #[inline]
    pub fn idx(&self, t: usize, u: usize, k: usize) -> usize {
        debug_assert!(t < self.num_frames && u < self.num_rows && k < self.vocab_size);
        (t * self.num_rows + u) * self.vocab_size + k
    }

    /// Log observation probability of label `k` at point `(t, u)`.
    #[inline]
    pub fn lp(&self, t: usize, u: usize, k: usize) -> f64 {
        self.logprobs[self.idx(t, u, k)]
    }

    #[inline]
    pub fn logit(&self, t: usize, u: usize, k: usize) -> f64 {
        self.logits[self.idx(t, u, k)]
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn logprob_row(&self, t: usize, u: usize) -> &[f64] {
        let start = self.idx(t, u, 0);
        &self.logprobs[start..start + self.vocab_size]
    }

    /// Copy of this lattice with one logit nudged by `delta`; the
    /// log-probability rows are recomputed from scratch. Used by the
    /// finite-difference oracle.
    pub fn with_perturbed_logit(&self, t: usize, u: usize, k: usize, delta: f64) -> Self {
        let mut logits = self.logits.clone();
        logits[self.idx(t, u, k)] += delta;
        Self::from_logits(self.num_frames, self.num_rows, self.vocab_size, self.blank_id, logits)
            .expect("perturbing a valid lattice keeps it valid")
    }
}
