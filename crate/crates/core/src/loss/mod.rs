//! Full-sum transducer losses with analytic gradients: the graph-topology
//! loss over arbitrary monotonic alignment graphs, the square-lattice
//! transducer loss, its alignment-restricted band variant, and the auxiliary
//! frame-level blank-separated loss used for joint training.
//!
//! Every loss returns the negative log-probability of the reference together
//! with the gradient with respect to the pre-softmax joiner logits and the
//! label occupancy tensor the gradient is built from. Empty alignment sets
//! yield `+inf` with a flag instead of an error, so training loops can skip
//! or clamp.

mod ctc;
mod gtct;
mod rnnt;

pub use ctc::{ctc_loss, CtcLossOutput};
pub use gtct::{
    gtct_backward, gtct_edge_posterior_totals, gtct_forward, gtct_loss, AlphaTable, BetaTable,
};
pub use rnnt::{ar_rnnt_loss, rnnt_antidiagonal_deviation, rnnt_loss};

use crate::numerics::NumericsError;
use crate::topology::GraphError;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("lattice has {rows} decoder-state rows but the loss needs {needed}")]
    LatticeTooSmall { rows: usize, needed: usize },
    #[error("graph vocabulary {graph} does not match lattice vocabulary {lattice}")]
    VocabMismatch { graph: usize, lattice: usize },
    #[error("graph blank id {graph} does not match lattice blank id {lattice}")]
    BlankMismatch { graph: usize, lattice: usize },
    #[error("label {label} at position {position} is invalid for this lattice")]
    LabelIncompatible { label: usize, position: usize },
    #[error("alignment has {got} entries, expected one per label ({expected})")]
    AlignmentLength { expected: usize, got: usize },
    #[error("alignment frame at position {position} must be at least 1 (frames are 1-based)")]
    AlignmentOutOfRange { position: usize },
    #[error("alignment decreases at position {position}")]
    AlignmentNotSorted { position: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Loss value, gradient and occupancy for one `[T x rows x K]` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Negative log-probability of the reference; `+inf` when no alignment
    /// exists.
    pub loss: f64,
    /// Gradient of the loss with respect to the pre-softmax logits, same
    /// shape and layout as the lattice logits. All zeros when flagged.
    pub grad_logits: Vec<f64>,
    /// Occupancy tensor: posterior mass of emitting label `k` from decoder
    /// state `u` at frame `t`.
    pub posterior: Vec<f64>,
    /// Set when the alignment set is empty and the loss is `+inf`.
    pub empty_alignment: bool,
}

impl LossOutput {
    pub(crate) fn empty(size: usize) -> Self {
        Self {
            loss: f64::INFINITY,
            grad_logits: vec![0.0; size],
            posterior: vec![0.0; size],
            empty_alignment: true,
        }
    }
}

pub(crate) fn check_labels_against_lattice(
    labels: &crate::topology::LabelSequence,
    lat: &crate::numerics::JoinerLattice,
) -> Result<(), LossError> {
    for (position, &label) in labels.labels().iter().enumerate() {
        if label >= lat.vocab_size() || label == lat.blank_id() {
            return Err(LossError::LabelIncompatible { label, position });
        }
    }
    Ok(())
}

pub(crate) fn check_compat(
    g: &crate::topology::AlignmentGraph,
    lat: &crate::numerics::JoinerLattice,
) -> Result<(), LossError> {
    if g.vocab_size() != lat.vocab_size() {
        return Err(LossError::VocabMismatch { graph: g.vocab_size(), lattice: lat.vocab_size() });
    }
    if g.blank_id() != lat.blank_id() {
        return Err(LossError::BlankMismatch { graph: g.blank_id(), lattice: lat.blank_id() });
    }
    let max_state = g.edges().iter().map(|e| e.decoder_state).max().unwrap_or(0);
    if max_state >= lat.num_rows() {
        return Err(LossError::LatticeTooSmall { rows: lat.num_rows(), needed: max_state + 1 });
    }
    Ok(())
}
