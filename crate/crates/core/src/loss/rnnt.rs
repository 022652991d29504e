//! Square-lattice transducer loss and its alignment-restricted band variant.
//!
//! The lattice point `(t, u)` (1-based frames) means `u` labels have been
//! consumed after `t` frames. Blank moves right in time, a label moves up
//! without consuming a frame, and every complete path closes with the blank
//! at `(T, U)`. The band variant zeroes the label transition outside a
//! window around a reference alignment; blanks are never restricted.

use super::{check_labels_against_lattice, LossError, LossOutput};
use crate::loss::gtct::occupancy_to_grad;
use crate::numerics::{log_add, log_sum, JoinerLattice, LOG_ZERO};
use crate::topology::LabelSequence;

pub fn rnnt_loss(lat: &JoinerLattice, labels: &LabelSequence) -> Result<LossOutput, LossError> {
    transducer_loss(lat, labels, |_, _| true)
}

/// Band-restricted variant: label `u` (1-based) may only be emitted at
/// 1-based frames within `[alignment[u-1] - left_buffer, alignment[u-1] +
/// right_buffer]`. An all-covering band reproduces [`rnnt_loss`] exactly.
///
/// Anchors normally lie in `[1, T]`; an anchor whose band falls entirely
/// beyond the last frame empties the alignment set and yields the flagged
/// `+inf` rather than an error.
pub fn ar_rnnt_loss(
    lat: &JoinerLattice,
    labels: &LabelSequence,
    alignment: &[usize],
    left_buffer: usize,
    right_buffer: usize,
) -> Result<LossOutput, LossError> {
    check_alignment(alignment, labels.len())?;
    let band = |t: usize, u: usize| {
        let anchor = alignment[u - 1];
        t >= anchor.saturating_sub(left_buffer) && t <= anchor + right_buffer
    };
    transducer_loss(lat, labels, band)
}

fn check_alignment(alignment: &[usize], num_labels: usize) -> Result<(), LossError> {
    if alignment.len() != num_labels {
        return Err(LossError::AlignmentLength { expected: num_labels, got: alignment.len() });
    }
    for (position, &frame) in alignment.iter().enumerate() {
        if frame < 1 {
            return Err(LossError::AlignmentOutOfRange { position });
        }
        if position > 0 && frame < alignment[position - 1] {
            return Err(LossError::AlignmentNotSorted { position });
        }
    }
    Ok(())
}

/// Shared forward/backward core. `label_allowed(t, u)` gates the emission of
/// the `u`-th label (1-based) at 1-based frame `t`.
fn transducer_loss<F>(
    lat: &JoinerLattice,
    labels: &LabelSequence,
    label_allowed: F,
) -> Result<LossOutput, LossError>
where
    F: Fn(usize, usize) -> bool,
{
    check_labels_against_lattice(labels, lat)?;
    let t_len = lat.num_frames();
    let u_len = labels.len();
    if u_len + 1 > lat.num_rows() {
        return Err(LossError::LatticeTooSmall { rows: lat.num_rows(), needed: u_len + 1 });
    }
    let y = labels.labels();
    let blank = lat.blank_id();
    let width = u_len + 1;
    let at = |t: usize, u: usize| t * width + u;

    // Forward pass; row t = 0 stays log-zero, mass starts at (1, 0).
    let mut alpha = vec![LOG_ZERO; (t_len + 1) * width];
    alpha[at(1, 0)] = 0.0;
    for t in 1..=t_len {
        for u in 0..=u_len {
            if t == 1 && u == 0 {
                continue;
            }
            let mut acc = LOG_ZERO;
            if t > 1 {
                acc = alpha[at(t - 1, u)] + lat.lp(t - 2, u, blank);
            }
            if u > 0 && label_allowed(t, u) {
                acc = log_add(acc, alpha[at(t, u - 1)] + lat.lp(t - 1, u - 1, y[u - 1]));
            }
            alpha[at(t, u)] = acc;
        }
    }
    let ln_p = alpha[at(t_len, u_len)] + lat.lp(t_len - 1, u_len, blank);
    let size = lat.logits().len();
    if ln_p == LOG_ZERO {
        return Ok(LossOutput::empty(size));
    }

    // Backward pass, mirrored.
    let mut beta = vec![LOG_ZERO; (t_len + 1) * width];
    beta[at(t_len, u_len)] = lat.lp(t_len - 1, u_len, blank);
    for t in (1..=t_len).rev() {
        for u in (0..=u_len).rev() {
            if t == t_len && u == u_len {
                continue;
            }
            let mut acc = LOG_ZERO;
            if t < t_len {
                acc = beta[at(t + 1, u)] + lat.lp(t - 1, u, blank);
            }
            if u < u_len && label_allowed(t, u + 1) {
                acc = log_add(acc, beta[at(t, u + 1)] + lat.lp(t - 1, u, y[u]));
            }
            beta[at(t, u)] = acc;
        }
    }

    // Occupancies: blank transitions advance time, label transitions climb.
    let mut gamma = vec![0.0; size];
    for t in 1..=t_len {
        for u in 0..=u_len {
            let a = alpha[at(t, u)];
            if a == LOG_ZERO {
                continue;
            }
            let beta_after_blank = if t < t_len {
                beta[at(t + 1, u)]
            } else if u == u_len {
                0.0
            } else {
                LOG_ZERO
            };
            let blank_post = a + lat.lp(t - 1, u, blank) + beta_after_blank - ln_p;
            if blank_post != LOG_ZERO {
                gamma[lat.idx(t - 1, u, blank)] += blank_post.exp();
            }
            if u < u_len && label_allowed(t, u + 1) {
                let label_post = a + lat.lp(t - 1, u, y[u]) + beta[at(t, u + 1)] - ln_p;
                if label_post != LOG_ZERO {
                    gamma[lat.idx(t - 1, u, y[u])] += label_post.exp();
                }
            }
        }
    }

    let grad_logits = occupancy_to_grad(lat, &gamma);
    Ok(LossOutput { loss: -ln_p, grad_logits, posterior: gamma, empty_alignment: false })
}

/// Cross-check of the forward/backward recursions: every anti-diagonal
/// `t + u = n` cuts each alignment exactly once, so the log-sum of
/// `alpha(t,u) + beta(t,u)` along any anti-diagonal equals `ln p`. Returns
/// the largest absolute deviation from `ln p` over all anti-diagonals.
pub fn rnnt_antidiagonal_deviation(
    lat: &JoinerLattice,
    labels: &LabelSequence,
) -> Result<f64, LossError> {
    check_labels_against_lattice(labels, lat)?;
    let t_len = lat.num_frames();
    let u_len = labels.len();
    if u_len + 1 > lat.num_rows() {
        return Err(LossError::LatticeTooSmall { rows: lat.num_rows(), needed: u_len + 1 });
    }
    let y = labels.labels();
    let blank = lat.blank_id();
    let width = u_len + 1;
    let at = |t: usize, u: usize| t * width + u;

    let mut alpha = vec![LOG_ZERO; (t_len + 1) * width];
    alpha[at(1, 0)] = 0.0;
    for t in 1..=t_len {
        for u in 0..=u_len {
            if t == 1 && u == 0 {
                continue;
            }
            let mut acc = LOG_ZERO;
            if t > 1 {
                acc = alpha[at(t - 1, u)] + lat.lp(t - 2, u, blank);
            }
            if u > 0 {
                acc = log_add(acc, alpha[at(t, u - 1)] + lat.lp(t - 1, u - 1, y[u - 1]));
            }
            alpha[at(t, u)] = acc;
        }
    }
    let mut beta = vec![LOG_ZERO; (t_len + 1) * width];
    beta[at(t_len, u_len)] = lat.lp(t_len - 1, u_len, blank);
    for t in (1..=t_len).rev() {
        for u in (0..=u_len).rev() {
            if t == t_len && u == u_len {
                continue;
            }
            let mut acc = LOG_ZERO;
            if t < t_len {
                acc = beta[at(t + 1, u)] + lat.lp(t - 1, u, blank);
            }
            if u < u_len {
                acc = log_add(acc, beta[at(t, u + 1)] + lat.lp(t - 1, u, y[u]));
            }
            beta[at(t, u)] = acc;
        }
    }

    let ln_p = alpha[at(t_len, u_len)] + lat.lp(t_len - 1, u_len, blank);
    let mut max_dev: f64 = 0.0;
    for n in 1..=(t_len + u_len) {
        let diag = log_sum((1..=t_len).filter_map(|t| {
            let u = n.checked_sub(t)?;
            (u <= u_len).then(|| alpha[at(t, u)] + beta[at(t, u)])
        }));
        max_dev = max_dev.max((diag - ln_p).abs());
    }
    Ok(max_dev)
}
