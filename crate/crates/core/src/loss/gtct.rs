//! Forward-backward loss over an explicit alignment graph.
//!
//! The forward table `alpha(t, g)` holds the summed probability of every
//! length-`t` prefix ending at node `g`; because each emitting edge consumes
//! exactly one time step, `alpha(t, ·)` depends only on `alpha(t-1, ·)`.
//! Mass originates at the non-emitting start node only, and the end column
//! is populated at `t = T` through the epsilon edges.

use super::{check_compat, LossError, LossOutput};
use crate::numerics::{log_add, log_sum, JoinerLattice, LOG_ZERO};
use crate::topology::{AlignmentGraph, START_NODE};

/// Forward table over `[0..=T] x nodes`; `alpha(T, end)` is the total
/// log-probability of the graph.
#[derive(Debug, Clone)]
pub struct AlphaTable {
    values: Vec<f64>,
    num_nodes: usize,
    t_len: usize,
}

impl AlphaTable {
    pub fn get(&self, t: usize, node: usize) -> f64 {
        self.values[t * self.num_nodes + node]
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    /// `ln p` of the whole graph: the end-node entry after `T` steps.
    pub fn log_prob(&self) -> f64 {
        self.get(self.t_len, self.num_nodes - 1)
    }
}

/// Backward table over `[0..=T] x nodes`; `beta(0, start)` mirrors
/// `alpha(T, end)`.
#[derive(Debug, Clone)]
pub struct BetaTable {
    values: Vec<f64>,
    num_nodes: usize,
    t_len: usize,
}

impl BetaTable {
    pub fn get(&self, t: usize, node: usize) -> f64 {
        self.values[t * self.num_nodes + node]
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn log_prob(&self) -> f64 {
        self.get(0, START_NODE)
    }
}

pub fn gtct_forward(g: &AlignmentGraph, lat: &JoinerLattice) -> Result<AlphaTable, LossError> {
    check_compat(g, lat)?;
    let n = g.num_nodes();
    let end = g.end_node();
    let t_len = lat.num_frames();
    let mut values = vec![LOG_ZERO; (t_len + 1) * n];
    values[START_NODE] = 0.0;

    for t in 1..=t_len {
        let (prev, cur) = values.split_at_mut(t * n);
        let prev = &prev[(t - 1) * n..];
        let cur = &mut cur[..n];
        for e in g.edges() {
            if e.to == end || !g.is_emitting(e.to) {
                continue;
            }
            if prev[e.from] == LOG_ZERO {
                continue;
            }
            let label = g.emit_label(e.to).expect("emitting node carries a label");
            let step = prev[e.from] + lat.lp(t - 1, e.decoder_state, label);
            cur[e.to] = log_add(cur[e.to], step);
        }
    }

    let final_mass = log_sum(g.in_edges(end).map(|e| values[t_len * n + e.from]));
    values[t_len * n + end] = final_mass;
    Ok(AlphaTable { values, num_nodes: n, t_len })
}

pub fn gtct_backward(g: &AlignmentGraph, lat: &JoinerLattice) -> Result<BetaTable, LossError> {
    check_compat(g, lat)?;
    let n = g.num_nodes();
    let end = g.end_node();
    let t_len = lat.num_frames();
    let mut values = vec![LOG_ZERO; (t_len + 1) * n];

    values[t_len * n + end] = 0.0;
    for e in g.in_edges(end) {
        values[t_len * n + e.from] = 0.0;
    }

    for t in (0..t_len).rev() {
        let (cur, next) = values.split_at_mut((t + 1) * n);
        let cur = &mut cur[t * n..];
        let next = &next[..n];
        for e in g.edges() {
            if e.to == end || !g.is_emitting(e.to) {
                continue;
            }
            if next[e.to] == LOG_ZERO {
                continue;
            }
            let label = g.emit_label(e.to).expect("emitting node carries a label");
            let step = lat.lp(t, e.decoder_state, label) + next[e.to];
            cur[e.from] = log_add(cur[e.from], step);
        }
    }

    Ok(BetaTable { values, num_nodes: n, t_len })
}

/// Loss, gradient and occupancy via edge posteriors: the posterior of
/// traversing edge `(g, g')` at step `t` is
/// `exp(alpha(t-1, g) + ln v + beta(t, g') - ln p)`; per-row gradients follow
/// the softmax structure `v * Gamma - gamma`.
pub fn gtct_loss(g: &AlignmentGraph, lat: &JoinerLattice) -> Result<LossOutput, LossError> {
    let alpha = gtct_forward(g, lat)?;
    let ln_p = alpha.log_prob();
    let size = lat.logits().len();
    if ln_p == LOG_ZERO {
        return Ok(LossOutput::empty(size));
    }
    let beta = gtct_backward(g, lat)?;
    let end = g.end_node();
    let t_len = lat.num_frames();

    let mut gamma = vec![0.0; size];
    for t in 1..=t_len {
        for e in g.edges() {
            if e.to == end || !g.is_emitting(e.to) {
                continue;
            }
            let label = g.emit_label(e.to).expect("emitting node carries a label");
            let log_post = alpha.get(t - 1, e.from)
                + lat.lp(t - 1, e.decoder_state, label)
                + beta.get(t, e.to)
                - ln_p;
            if log_post != LOG_ZERO {
                gamma[lat.idx(t - 1, e.decoder_state, label)] += log_post.exp();
            }
        }
    }

    let grad_logits = occupancy_to_grad(lat, &gamma);
    Ok(LossOutput { loss: -ln_p, grad_logits, posterior: gamma, empty_alignment: false })
}

/// The per-step identity used as a numerical cross-check: summing
/// `alpha(t-1, g) * v * beta(t, g')` over every emitting edge reproduces
/// `ln p` at every `t`. Returns the log-domain total for each step.
pub fn gtct_edge_posterior_totals(
    g: &AlignmentGraph,
    lat: &JoinerLattice,
) -> Result<Vec<f64>, LossError> {
    let alpha = gtct_forward(g, lat)?;
    let beta = gtct_backward(g, lat)?;
    let end = g.end_node();
    let t_len = lat.num_frames();
    let mut totals = Vec::with_capacity(t_len);
    for t in 1..=t_len {
        let total = log_sum(g.edges().iter().filter_map(|e| {
            if e.to == end || !g.is_emitting(e.to) {
                return None;
            }
            let label = g.emit_label(e.to).expect("emitting node carries a label");
            Some(alpha.get(t - 1, e.from) + lat.lp(t - 1, e.decoder_state, label) + beta.get(t, e.to))
        }));
        totals.push(total);
    }
    Ok(totals)
}

/// `grad(t,u,k) = v(t,u,k) * Gamma(t,u) - gamma(t,u,k)` for every row.
pub(crate) fn occupancy_to_grad(lat: &JoinerLattice, gamma: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; gamma.len()];
    let k_len = lat.vocab_size();
    for t in 0..lat.num_frames() {
        for u in 0..lat.num_rows() {
            let base = lat.idx(t, u, 0);
            let row_mass: f64 = gamma[base..base + k_len].iter().sum();
            if row_mass == 0.0 {
                continue;
            }
            for k in 0..k_len {
                grad[base + k] = lat.lp(t, u, k).exp() * row_mass - gamma[base + k];
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_force_loss, finite_diff_grad};
    use crate::topology::{build_ctct_graph, build_monornnt_graph, LabelSequence};

    fn seq(labels: &[usize], k: usize) -> LabelSequence {
        LabelSequence::new(labels.to_vec(), 0, k).unwrap()
    }

    #[test]
    fn uniform_forward_matches_path_counts() {
        let lat = JoinerLattice::uniform(2, 2, 2, 0);
        let ctct = build_ctct_graph(&seq(&[1], 2), 0, 2).unwrap();
        let alpha = gtct_forward(&ctct, &lat).unwrap();
        assert!((alpha.log_prob() - 0.75f64.ln()).abs() < 1e-12);

        let mono = build_monornnt_graph(&seq(&[1], 2), 0, 2).unwrap();
        let alpha = gtct_forward(&mono, &lat).unwrap();
        assert!((alpha.log_prob() - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_reference_is_the_all_blank_product() {
        let lat = JoinerLattice::random_normal(4, 1, 3, 0, 3);
        let g = build_ctct_graph(&LabelSequence::empty(), 0, 3).unwrap();
        let expected: f64 = (0..4).map(|t| lat.lp(t, 0, 0)).sum();
        let alpha = gtct_forward(&g, &lat).unwrap();
        assert!((alpha.log_prob() - expected).abs() < 1e-12);
        let beta = gtct_backward(&g, &lat).unwrap();
        assert!((beta.log_prob() - expected).abs() < 1e-12);
    }

    #[test]
    fn forward_backward_symmetry() {
        let lat = JoinerLattice::random_normal(5, 3, 4, 0, 17);
        for g in [
            build_ctct_graph(&seq(&[1, 2], 4), 0, 4).unwrap(),
            build_monornnt_graph(&seq(&[1, 2], 4), 0, 4).unwrap(),
        ] {
            let alpha = gtct_forward(&g, &lat).unwrap();
            let beta = gtct_backward(&g, &lat).unwrap();
            assert!((alpha.log_prob() - beta.log_prob()).abs() < 1e-12);
        }
    }

    #[test]
    fn minimum_length_instance_has_a_unique_path() {
        // T equal to the minimum path length leaves exactly one alignment.
        let lat = JoinerLattice::random_normal(2, 3, 4, 0, 5);
        let g = build_monornnt_graph(&seq(&[1, 2], 4), 0, 4).unwrap();
        let beta = gtct_backward(&g, &lat).unwrap();
        let expected = lat.lp(0, 0, 1) + lat.lp(1, 1, 2);
        assert!((beta.log_prob() - expected).abs() < 1e-12);
    }

    #[test]
    fn uniform_ctct_loss_closed_form() {
        let lat = JoinerLattice::uniform(2, 2, 2, 0);
        let g = build_ctct_graph(&seq(&[1], 2), 0, 2).unwrap();
        let out = gtct_loss(&g, &lat).unwrap();
        assert!((out.loss - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!(!out.empty_alignment);
    }

    #[test]
    fn saturated_lattice_has_near_zero_loss_and_gradient() {
        // One-hot logits along the unique monotonic path.
        let g = build_monornnt_graph(&seq(&[1, 2], 3), 0, 3).unwrap();
        let base = JoinerLattice::uniform(2, 3, 3, 0);
        let mut logits = vec![0.0; 2 * 3 * 3];
        logits[base.idx(0, 0, 1)] = 40.0;
        logits[base.idx(1, 1, 2)] = 40.0;
        let lat = JoinerLattice::from_logits(2, 3, 3, 0, logits).unwrap();
        let out = gtct_loss(&g, &lat).unwrap();
        assert!(out.loss < 1e-12);
        assert!(out.grad_logits.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn too_few_frames_flags_empty_alignment() {
        let lat = JoinerLattice::uniform(2, 3, 3, 0);
        let g = build_ctct_graph(&seq(&[1, 1], 3), 0, 3).unwrap();
        let out = gtct_loss(&g, &lat).unwrap();
        assert!(out.loss.is_infinite());
        assert!(out.empty_alignment);
        assert!(out.grad_logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_matches_brute_force_and_finite_differences() {
        let lat = JoinerLattice::random_normal(4, 3, 3, 0, 29);
        for g in [
            build_ctct_graph(&seq(&[1, 2], 3), 0, 3).unwrap(),
            build_monornnt_graph(&seq(&[2, 1], 3), 0, 3).unwrap(),
        ] {
            let out = gtct_loss(&g, &lat).unwrap();
            let brute = brute_force_loss(&g, &lat).unwrap();
            assert!((out.loss - brute).abs() < 1e-12);

            let fd = finite_diff_grad(|l| gtct_loss(&g, l).unwrap().loss, &lat, 1e-5).unwrap();
            for (a, n) in out.grad_logits.iter().zip(&fd) {
                let rel = (a - n).abs() / (a.abs() + n.abs()).max(1e-3);
                assert!(rel < 1e-6, "analytic {a} vs numeric {n}");
            }
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero_and_step_mass_is_one() {
        let lat = JoinerLattice::random_normal(5, 4, 4, 1, 31);
        let g = build_ctct_graph(&LabelSequence::new(vec![0, 2, 3], 1, 4).unwrap(), 1, 4).unwrap();
        let out = gtct_loss(&g, &lat).unwrap();
        for t in 0..5 {
            let mut step_mass = 0.0;
            for u in 0..4 {
                let base = lat.idx(t, u, 0);
                let row: f64 = out.grad_logits[base..base + 4].iter().sum();
                assert!(row.abs() < 1e-9);
                step_mass += out.posterior[base..base + 4].iter().sum::<f64>();
            }
            assert!((step_mass - 1.0).abs() < 1e-9, "step {t} mass {step_mass}");
        }
    }

    #[test]
    fn edge_posterior_totals_constant_over_time() {
        let lat = JoinerLattice::random_normal(6, 3, 3, 0, 41);
        let g = build_ctct_graph(&seq(&[1, 2], 3), 0, 3).unwrap();
        let alpha = gtct_forward(&g, &lat).unwrap();
        let totals = gtct_edge_posterior_totals(&g, &lat).unwrap();
        assert_eq!(totals.len(), 6);
        for total in totals {
            assert!((total - alpha.log_prob()).abs() < 1e-10);
        }
    }

    #[test]
    fn incompatible_lattice_is_rejected() {
        let g = build_ctct_graph(&seq(&[1, 2], 3), 0, 3).unwrap();
        let lat = JoinerLattice::uniform(3, 1, 3, 0);
        assert!(matches!(
            gtct_loss(&g, &lat),
            Err(LossError::LatticeTooSmall { rows: 1, needed: 3 })
        ));
        let lat = JoinerLattice::uniform(3, 3, 4, 0);
        assert!(matches!(gtct_loss(&g, &lat), Err(LossError::VocabMismatch { .. })));
        let lat = JoinerLattice::uniform(3, 3, 3, 2);
        assert!(matches!(gtct_loss(&g, &lat), Err(LossError::BlankMismatch { .. })));
    }
}
