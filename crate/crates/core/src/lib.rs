//! Transducer losses over explicit alignment-graph topologies, the classic
//! square-lattice transducer loss, exact brute-force oracles, time-synchronous
//! beam search, and a small trainable transducer for desk-scale experiments.

pub mod decode;
pub mod loss;
pub mod numerics;
pub mod oracle;
pub mod topology;

pub use decode::{
    beam_search_monotonic, beam_search_rnnt, greedy_rnnt, train_ngram_lm, DecodeConfig,
    DecodeResult, Hypothesis, LatticeScorer, ModelScorer, NgramLm,
};
pub use loss::{
    ar_rnnt_loss, ctc_loss, gtct_loss, rnnt_loss, CtcLossOutput, LossError, LossOutput,
};
pub use numerics::{JoinerLattice, LogProb, NumericsError};
pub use topology::{
    build_ctct_graph, build_monornnt_graph, validate_graph, AlignmentGraph, Edge, GraphError,
    LabelSequence, MonotonicTopology,
};
