//! Exact brute-force references used by the test suites: exhaustive path
//! enumeration, enumeration-backed losses, finite-difference gradients, and
//! an exhaustive decoder for tiny instances.
//!
//! Everything here is deliberately independent of the dynamic-programming
//! implementations it cross-checks. Guards fail loudly; an oracle must never
//! silently approximate.

use crate::numerics::{log_sum, JoinerLattice, LOG_ZERO};
use crate::topology::{AlignmentGraph, LabelSequence, MonotonicTopology, START_NODE};
use thiserror::Error;

/// Hard ceiling on enumerated time steps.
pub const MAX_ENUM_STEPS: usize = 8;
/// Hard ceiling on enumerated paths.
pub const MAX_ENUM_PATHS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("enumeration guard exceeded: {t_steps} time steps, maximum is {max}")]
    TooManySteps { t_steps: usize, max: usize },
    #[error("enumeration guard exceeded: more than {max} paths")]
    TooManyPaths { max: usize },
    #[error("finite-difference epsilon {eps} outside [1e-7, 1e-3]")]
    EpsilonOutOfRange { eps: f64 },
    #[error("exhaustive decode guard exceeded: T={t_steps} (max 4), K={vocab_size} (max 3), max_u={max_u}")]
    DecodeGuard { t_steps: usize, vocab_size: usize, max_u: usize },
    #[error("lattice has {rows} rows but decoder state {needed} is required")]
    LatticeTooSmall { rows: usize, needed: usize },
}

/// One alignment: the node sequence start, T emitting nodes, end, plus its
/// log-probability under a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPath {
    pub nodes: Vec<usize>,
    pub logprob: f64,
}

/// Depth-first expansion of every start-to-end path with exactly `t_steps`
/// emitting steps, scoring each by the product of its edge observations.
pub fn enumerate_alignments(
    g: &AlignmentGraph,
    lat: &JoinerLattice,
    t_steps: usize,
) -> Result<Vec<AlignmentPath>, OracleError> {
    if t_steps > MAX_ENUM_STEPS {
        return Err(OracleError::TooManySteps { t_steps, max: MAX_ENUM_STEPS });
    }
    check_lattice_rows(g, lat)?;
    let end = g.end_node();
    let mut paths = Vec::new();
    let mut trail = vec![START_NODE];

    fn recurse(
        g: &AlignmentGraph,
        lat: &JoinerLattice,
        t_steps: usize,
        end: usize,
        trail: &mut Vec<usize>,
        acc: f64,
        paths: &mut Vec<AlignmentPath>,
    ) -> Result<(), OracleError> {
        let depth = trail.len() - 1; // emitting steps taken so far
        let here = *trail.last().expect("trail always holds the start node");
        if depth == t_steps {
            if g.out_edges(here).any(|e| e.to == end) {
                if paths.len() >= MAX_ENUM_PATHS {
                    return Err(OracleError::TooManyPaths { max: MAX_ENUM_PATHS });
                }
                let mut nodes = trail.clone();
                nodes.push(end);
                paths.push(AlignmentPath { nodes, logprob: acc });
            }
            return Ok(());
        }
        for e in g.out_edges(here) {
            if e.to == end || !g.is_emitting(e.to) {
                continue;
            }
            let label = g.emit_label(e.to).expect("emitting node carries a label");
            let step = lat.lp(depth, e.decoder_state, label);
            trail.push(e.to);
            let res = recurse(g, lat, t_steps, end, trail, acc + step, paths);
            trail.pop();
            res?;
        }
        Ok(())
    }

    recurse(g, lat, t_steps, end, &mut trail, 0.0, &mut paths)?;
    Ok(paths)
}

/// Apply the blank-removal map to a path: every entry into a non-blank node
/// from a *different* node emits that node's label; self-loop revisits and
/// blank nodes emit nothing.
pub fn collapse_alignment(path: &AlignmentPath, g: &AlignmentGraph) -> Vec<usize> {
    let blank = g.blank_id();
    let mut out = Vec::new();
    for pair in path.nodes.windows(2) {
        let (prev, node) = (pair[0], pair[1]);
        if node == prev {
            continue;
        }
        if let Some(label) = g.emit_label(node) {
            if label != blank {
                out.push(label);
            }
        }
    }
    out
}

/// Negative log of the summed probability of every enumerated alignment;
/// `+inf` when the alignment set is empty.
pub fn brute_force_loss(g: &AlignmentGraph, lat: &JoinerLattice) -> Result<f64, OracleError> {
    let paths = enumerate_alignments(g, lat, lat.num_frames())?;
    Ok(-log_sum(paths.iter().map(|p| p.logprob)))
}

/// Enumeration-backed loss for the square transducer lattice: every
/// interleaving of `T` blank steps and `U` label emissions, closed by the
/// final blank. `band` optionally restricts when label `u+1` may be emitted
/// (1-based frame inclusive range per label), matching the
/// alignment-restricted variant.
pub fn brute_force_rnnt_loss(
    lat: &JoinerLattice,
    labels: &LabelSequence,
    band: Option<&[(usize, usize)]>,
) -> Result<f64, OracleError> {
    let t_len = lat.num_frames();
    let u_len = labels.len();
    if t_len > MAX_ENUM_STEPS {
        return Err(OracleError::TooManySteps { t_steps: t_len, max: MAX_ENUM_STEPS });
    }
    if u_len + 1 > lat.num_rows() {
        return Err(OracleError::LatticeTooSmall { rows: lat.num_rows(), needed: u_len });
    }
    let blank = lat.blank_id();
    let y = labels.labels();
    let mut total = LOG_ZERO;

    // Walk the (t, u) grid: blank advances t, a label advances u without
    // consuming a frame. Every complete path ends with the blank at (T, U).
    fn recurse(
        lat: &JoinerLattice,
        y: &[usize],
        band: Option<&[(usize, usize)]>,
        blank: usize,
        t: usize, // 1-based frame
        u: usize,
        acc: f64,
        total: &mut f64,
    ) {
        let t_len = lat.num_frames();
        if t == t_len && u == y.len() {
            *total = crate::numerics::log_add(*total, acc + lat.lp(t - 1, u, blank));
            return;
        }
        if t < t_len {
            recurse(lat, y, band, blank, t + 1, u, acc + lat.lp(t - 1, u, blank), total);
        }
        if u < y.len() {
            let allowed = band.map_or(true, |b| {
                let (lo, hi) = b[u];
                t >= lo && t <= hi
            });
            if allowed {
                recurse(lat, y, band, blank, t, u + 1, acc + lat.lp(t - 1, u, y[u]), total);
            }
        }
    }

    recurse(lat, y, band, blank, 1, 0, 0.0, &mut total);
    Ok(-total)
}

/// Central finite differences of `loss_fn` with respect to every logit.
pub fn finite_diff_grad<F>(loss_fn: F, lat: &JoinerLattice, eps: f64) -> Result<Vec<f64>, OracleError>
where
    F: Fn(&JoinerLattice) -> f64,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(OracleError::EpsilonOutOfRange { eps });
    }
    let mut grad = vec![0.0; lat.logits().len()];
    for t in 0..lat.num_frames() {
        for u in 0..lat.num_rows() {
            for k in 0..lat.vocab_size() {
                let plus = loss_fn(&lat.with_perturbed_logit(t, u, k, eps));
                let minus = loss_fn(&lat.with_perturbed_logit(t, u, k, -eps));
                grad[lat.idx(t, u, k)] = (plus - minus) / (2.0 * eps);
            }
        }
    }
    Ok(grad)
}

/// Score every label sequence of length at most `max_u` by its enumerated
/// full-sum probability and return the best, with ties broken toward higher
/// score, then shorter sequence, then lexicographic order.
pub fn exhaustive_decode(
    lat: &JoinerLattice,
    topology: MonotonicTopology,
    max_u: usize,
) -> Result<(Vec<usize>, f64), OracleError> {
    let t_len = lat.num_frames();
    let k_len = lat.vocab_size();
    if t_len > 4 || k_len > 3 || max_u > t_len {
        return Err(OracleError::DecodeGuard { t_steps: t_len, vocab_size: k_len, max_u });
    }
    let blank = lat.blank_id();
    let alphabet: Vec<usize> = (0..k_len).filter(|&k| k != blank).collect();

    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(candidate) = stack.pop() {
        let labels = LabelSequence::new(candidate.clone(), blank, k_len)
            .expect("candidates are drawn from the non-blank alphabet");
        let graph = topology
            .build_graph(&labels, blank, k_len)
            .expect("valid label sequences always build");
        if lat.num_rows() >= candidate.len() + 1 {
            let score = -brute_force_loss(&graph, lat)?;
            let better = match &best {
                None => true,
                Some((cur, cur_score)) => {
                    score > *cur_score + 1e-12
                        || ((score - cur_score).abs() <= 1e-12
                            && (candidate.len() < cur.len()
                                || (candidate.len() == cur.len() && candidate < *cur)))
                }
            };
            if better {
                best = Some((candidate.clone(), score));
            }
        }
        if candidate.len() < max_u {
            // Push in reverse so lexicographically smaller sequences pop first.
            for &k in alphabet.iter().rev() {
                let mut next = candidate.clone();
                next.push(k);
                stack.push(next);
            }
        }
    }
    Ok(best.expect("the empty sequence is always scored"))
}

fn check_lattice_rows(g: &AlignmentGraph, lat: &JoinerLattice) -> Result<(), OracleError> {
    let needed = g.edges().iter().map(|e| e.decoder_state).max().unwrap_or(0);
    if needed >= lat.num_rows() {
        return Err(OracleError::LatticeTooSmall { rows: lat.num_rows(), needed });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_ctct_graph, build_monornnt_graph};

    fn seq(labels: &[usize], k: usize) -> LabelSequence {
        LabelSequence::new(labels.to_vec(), 0, k).unwrap()
    }

    #[test]
    fn enumerates_three_ctct_paths() {
        let g = build_ctct_graph(&seq(&[1], 2), 0, 2).unwrap();
        let lat = JoinerLattice::uniform(2, 2, 2, 0);
        let paths = enumerate_alignments(&g, &lat, 2).unwrap();
        assert_eq!(paths.len(), 3);
        for p in &paths {
            assert!((p.logprob - 0.25f64.ln()).abs() < 1e-12);
            assert_eq!(collapse_alignment(p, &g), vec![1]);
        }
    }

    #[test]
    fn enumerates_two_monornnt_paths() {
        let g = build_monornnt_graph(&seq(&[1], 2), 0, 2).unwrap();
        let lat = JoinerLattice::uniform(2, 2, 2, 0);
        let paths = enumerate_alignments(&g, &lat, 2).unwrap();
        assert_eq!(paths.len(), 2);
    }

    #[test]
    fn too_short_t_yields_no_paths() {
        let g = build_ctct_graph(&seq(&[1, 1], 3), 0, 3).unwrap();
        let lat = JoinerLattice::uniform(2, 3, 3, 0);
        // min_path_len is 3 for a repeated label.
        assert!(enumerate_alignments(&g, &lat, 2).unwrap().is_empty());
        let inf = brute_force_loss(&g, &lat).unwrap();
        assert!(inf.is_infinite() && inf > 0.0);
    }

    #[test]
    fn step_guard_fails_loudly() {
        let g = build_ctct_graph(&seq(&[1], 2), 0, 2).unwrap();
        let lat = JoinerLattice::uniform(2, 2, 2, 0);
        assert_eq!(
            enumerate_alignments(&g, &lat, 9),
            Err(OracleError::TooManySteps { t_steps: 9, max: MAX_ENUM_STEPS })
        );
    }

    #[test]
    fn collapse_recovers_reference_on_every_path() {
        for labels in [vec![1], vec![1, 2], vec![1, 1], vec![2, 1, 2]] {
            let y = seq(&labels, 3);
            let g = build_ctct_graph(&y, 0, 3).unwrap();
            let lat = JoinerLattice::uniform(5, labels.len() + 1, 3, 0);
            for p in enumerate_alignments(&g, &lat, 5).unwrap() {
                assert_eq!(collapse_alignment(&p, &g), labels, "path {:?}", p.nodes);
            }
            let g = build_monornnt_graph(&y, 0, 3).unwrap();
            for p in enumerate_alignments(&g, &lat, 5).unwrap() {
                assert_eq!(collapse_alignment(&p, &g), labels, "path {:?}", p.nodes);
            }
        }
    }

    #[test]
    fn all_blank_path_collapses_to_empty() {
        let g = build_ctct_graph(&LabelSequence::empty(), 0, 2).unwrap();
        let lat = JoinerLattice::uniform(3, 1, 2, 0);
        let paths = enumerate_alignments(&g, &lat, 3).unwrap();
        assert_eq!(paths.len(), 1);
        assert!(collapse_alignment(&paths[0], &g).is_empty());
    }

    #[test]
    fn brute_force_uniform_closed_form() {
        let g = build_ctct_graph(&seq(&[1], 2), 0, 2).unwrap();
        let lat = JoinerLattice::uniform(2, 2, 2, 0);
        // Three paths of probability 1/4 each.
        let loss = brute_force_loss(&g, &lat).unwrap();
        assert!((loss - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn brute_force_rnnt_uniform_closed_form() {
        let lat = JoinerLattice::uniform(2, 2, 2, 0);
        let loss = brute_force_rnnt_loss(&lat, &seq(&[1], 2), None).unwrap();
        // Two interleavings, each 1/8 including the closing blank.
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn band_subset_never_beats_full_sum() {
        let lat = JoinerLattice::random_normal(4, 3, 3, 0, 11);
        let labels = seq(&[1, 2], 3);
        let full = brute_force_rnnt_loss(&lat, &labels, None).unwrap();
        let banded = brute_force_rnnt_loss(&lat, &labels, Some(&[(1, 2), (2, 3)])).unwrap();
        assert!(banded >= full - 1e-12);
    }

    #[test]
    fn finite_diff_constant_function_is_zero() {
        let lat = JoinerLattice::uniform(2, 2, 2, 0);
        let grad = finite_diff_grad(|_| 1.25, &lat, 1e-5).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn finite_diff_epsilon_guard() {
        let lat = JoinerLattice::uniform(1, 1, 2, 0);
        assert!(matches!(
            finite_diff_grad(|_| 0.0, &lat, 1e-2),
            Err(OracleError::EpsilonOutOfRange { .. })
        ));
    }

    #[test]
    fn exhaustive_decode_one_hot_recovers_label() {
        // Spell label 1 at frame 0, blanks afterwards.
        let mut logits = vec![0.0; 2 * 3 * 2];
        let lat0 = JoinerLattice::uniform(2, 3, 2, 0);
        logits[lat0.idx(0, 0, 1)] = 8.0;
        logits[lat0.idx(1, 1, 0)] = 8.0;
        let lat = JoinerLattice::from_logits(2, 3, 2, 0, logits).unwrap();
        let (best, _) = exhaustive_decode(&lat, MonotonicTopology::CtcT, 2).unwrap();
        assert_eq!(best, vec![1]);
    }

    #[test]
    fn exhaustive_decode_uniform_is_decided_by_alignment_count() {
        // Under a uniform lattice the winner is the sequence with the most
        // alignments. At T=1 every sequence has exactly one alignment and
        // the tie-break prefers the shorter, so the empty sequence wins.
        let lat = JoinerLattice::uniform(1, 2, 3, 0);
        let (best, score) = exhaustive_decode(&lat, MonotonicTopology::MonoRnnT, 1).unwrap();
        assert!(best.is_empty());
        assert!((score - (1.0f64 / 3.0).ln()).abs() < 1e-12);

        // At T=3 a single label has three alignments against one for the
        // all-blank path, and the label tie resolves lexicographically.
        let lat = JoinerLattice::uniform(3, 4, 3, 0);
        let (best, score) = exhaustive_decode(&lat, MonotonicTopology::MonoRnnT, 3).unwrap();
        assert_eq!(best, vec![1]);
        assert!((score - (3.0f64 / 27.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_decode_guard() {
        let lat = JoinerLattice::uniform(5, 2, 2, 0);
        assert!(matches!(
            exhaustive_decode(&lat, MonotonicTopology::CtcT, 1),
            Err(OracleError::DecodeGuard { .. })
        ));
    }

    #[test]
    fn collapse_probability_mass_at_most_one() {
        // Paths partition by their collapsed sequence, so summing full-sum
        // probabilities over all sequences can never exceed one.
        let lat = JoinerLattice::random_normal(3, 4, 3, 0, 23);
        for topo in [MonotonicTopology::CtcT, MonotonicTopology::MonoRnnT] {
            let mut total = 0.0;
            let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
            while let Some(c) = stack.pop() {
                let labels = seq(&c, 3);
                let g = topo.build_graph(&labels, 0, 3).unwrap();
                total += (-brute_force_loss(&g, &lat).unwrap()).exp();
                if c.len() < 3 {
                    for k in [1, 2] {
                        let mut n = c.clone();
                        n.push(k);
                        stack.push(n);
                    }
                }
            }
            assert!(total <= 1.0 + 1e-9, "{topo:?} mass {total}");
        }
    }
}
