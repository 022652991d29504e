//! Time-synchronous beam search for the monotonic topologies and the
//! square-lattice transducer, with optional shallow-fusion language-model
//! scoring.
//!
//! The monotonic decoders consume exactly one score vector per hypothesis
//! per time step and therefore terminate after `T` steps with at most `T`
//! emitted labels. The square-lattice decoder may emit several labels before
//! taking a blank; when its per-step emission limit is lifted, a safety cap
//! of `10 * T` total emissions converts a runaway expansion into a
//! reportable abort instead of an endless loop.

pub mod lm;

pub use lm::{train_ngram_lm, LmError, NgramLm};

use crate::numerics::{log_add, JoinerLattice, LogProb, LOG_ZERO};
use crate::topology::MonotonicTopology;
use std::collections::HashMap;

/// Multiplier for the runaway safety cap on total emissions.
pub const RUNAWAY_CAP_FACTOR: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub beam_size: usize,
    /// Shallow-fusion interpolation weight; ignored when no LM is supplied
    /// and skipped entirely at zero so a weightless run is bit-identical to
    /// a no-LM run.
    pub lm_weight: f64,
    /// Square-lattice decoding only: labels allowed per time step before a
    /// blank must be taken. `None` lifts the limit and arms the runaway cap.
    pub max_emits_per_step: Option<usize>,
    pub length_reward: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { beam_size: 10, lm_weight: 0.3, max_emits_per_step: Some(5), length_reward: 0.0 }
    }
}

/// Scoring surface for decoding: the log-distribution over the vocabulary
/// given the frame index and the label prefix emitted so far.
pub trait ModelScorer {
    fn vocab_size(&self) -> usize;
    fn blank_id(&self) -> usize;
    fn score(&self, t: usize, prefix: &[usize]) -> Vec<f64>;
}

/// Lattice-backed scorer: row `u = |prefix|`, prefix content ignored. A
/// prefix longer than the lattice provides rows for scores as "blank with
/// certainty", so the decoder cannot wander past the lattice.
pub struct LatticeScorer<'a> {
    lat: &'a JoinerLattice,
}

impl<'a> LatticeScorer<'a> {
    pub fn new(lat: &'a JoinerLattice) -> Self {
        Self { lat }
    }
}

impl ModelScorer for LatticeScorer<'_> {
    fn vocab_size(&self) -> usize {
        self.lat.vocab_size()
    }

    fn blank_id(&self) -> usize {
        self.lat.blank_id()
    }

    fn score(&self, t: usize, prefix: &[usize]) -> Vec<f64> {
        let u = prefix.len();
        if u < self.lat.num_rows() {
            self.lat.logprob_row(t, u).to_vec()
        } else {
            let mut row = vec![LOG_ZERO; self.lat.vocab_size()];
            row[self.lat.blank_id()] = 0.0;
            row
        }
    }
}

/// Constant scorer where every label beats the blank by `margin` nats;
/// the adversarial input for the runaway-hallucination probe.
pub struct AdversarialScorer {
    vocab_size: usize,
    blank_id: usize,
    blank_lp: f64,
    label_lp: f64,
}

impl AdversarialScorer {
    pub fn new(vocab_size: usize, blank_id: usize, margin: f64) -> Self {
        assert!(vocab_size >= 2 && blank_id < vocab_size);
        assert!(margin > 0.0, "labels must beat the blank");
        // Normalize logits (0 for blank, margin for each label).
        let z = log_add(0.0, margin + ((vocab_size - 1) as f64).ln());
        Self { vocab_size, blank_id, blank_lp: -z, label_lp: margin - z }
    }
}

impl ModelScorer for AdversarialScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn blank_id(&self) -> usize {
        self.blank_id
    }

    fn score(&self, _t: usize, _prefix: &[usize]) -> Vec<f64> {
        (0..self.vocab_size)
            .map(|k| if k == self.blank_id { self.blank_lp } else { self.label_lp })
            .collect()
    }
}

/// One beam-search hypothesis. `am_score` is the transducer score of the
/// prefix merged over all surviving alignments.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub prefix: Vec<usize>,
    pub am_score: LogProb,
    pub lm_score: LogProb,
    /// Frame of the most recent non-blank emission.
    pub last_emit_t: Option<usize>,
    /// Score vectors consumed along this hypothesis's history.
    pub scores_consumed: usize,
}

impl Hypothesis {
    /// Decoder-state index: the number of labels consumed so far.
    pub fn decoder_state(&self) -> usize {
        self.prefix.len()
    }

    pub fn combined_score(&self, cfg: &DecodeConfig) -> f64 {
        self.am_score.value()
            + cfg.lm_weight * self.lm_score.value()
            + cfg.length_reward * self.prefix.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Hypotheses sorted by combined score, best first.
    pub nbest: Vec<Hypothesis>,
    /// Set when the runaway cap aborted the utterance.
    pub runaway: bool,
}

impl DecodeResult {
    pub fn best(&self) -> &Hypothesis {
        &self.nbest[0]
    }
}

/// Internal beam entry: log mass split by whether the alignment currently
/// ends in a blank-state or a label-state. The CTC-like topology needs the
/// split to honor the repeated-label rule; the strictly monotonic topology
/// keeps everything in the blank component.
#[derive(Debug, Clone)]
struct Entry {
    mass_blank: f64,
    mass_label: f64,
    lm_score: f64,
    last_emit_t: Option<usize>,
    consumed: usize,
}

impl Entry {
    fn total(&self) -> f64 {
        log_add(self.mass_blank, self.mass_label)
    }
}

fn merge_max(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Rank prefixes deterministically: higher combined score, then shorter
/// prefix, then lexicographic order.
fn rank(
    entries: HashMap<Vec<usize>, Entry>,
    cfg: &DecodeConfig,
) -> Vec<(Vec<usize>, Entry)> {
    let mut items: Vec<(Vec<usize>, Entry)> = entries.into_iter().collect();
    items.sort_by(|(pa, ea), (pb, eb)| {
        let sa = ea.total() + cfg.lm_weight * ea.lm_score + cfg.length_reward * pa.len() as f64;
        let sb = eb.total() + cfg.lm_weight * eb.lm_score + cfg.length_reward * pb.len() as f64;
        sb.partial_cmp(&sa)
            .expect("scores are never NaN")
            .then_with(|| pa.len().cmp(&pb.len()))
            .then_with(|| pa.cmp(pb))
    });
    items
}

fn to_result(items: Vec<(Vec<usize>, Entry)>, runaway: bool) -> DecodeResult {
    let nbest = items
        .into_iter()
        .map(|(prefix, e)| Hypothesis {
            prefix,
            am_score: LogProb::new(e.total().min(0.0)).expect("merged mass is a probability"),
            lm_score: LogProb::new(e.lm_score.min(0.0)).expect("lm scores are log-probabilities"),
            last_emit_t: e.last_emit_t,
            scores_consumed: e.consumed,
        })
        .collect();
    DecodeResult { nbest, runaway }
}

/// Time-synchronous beam search for the monotonic topologies. Every
/// hypothesis consumes exactly one score vector per time step; it either
/// stays on its prefix (blank, or a repeated label under the CTC-like
/// rules) or extends by one label.
pub fn beam_search_monotonic(
    scorer: &dyn ModelScorer,
    topology: MonotonicTopology,
    t_steps: usize,
    cfg: &DecodeConfig,
    lm: Option<&NgramLm>,
) -> DecodeResult {
    assert!(t_steps >= 1, "need at least one time step");
    assert!(cfg.beam_size >= 1, "beam must hold at least one hypothesis");
    let blank = scorer.blank_id();
    let vocab = scorer.vocab_size();
    let fuse = lm.filter(|_| cfg.lm_weight != 0.0);

    let mut beam: HashMap<Vec<usize>, Entry> = HashMap::new();
    beam.insert(
        Vec::new(),
        Entry { mass_blank: 0.0, mass_label: LOG_ZERO, lm_score: 0.0, last_emit_t: None, consumed: 0 },
    );

    for t in 0..t_steps {
        let mut next: HashMap<Vec<usize>, Entry> = HashMap::new();
        for (prefix, entry) in &beam {
            let scores = scorer.score(t, prefix);
            debug_assert_eq!(scores.len(), vocab);
            let consumed = entry.consumed + 1;
            let total = entry.total();

            // Blank: both components settle into the blank state.
            {
                let e = next.entry(prefix.clone()).or_insert_with(|| Entry {
                    mass_blank: LOG_ZERO,
                    mass_label: LOG_ZERO,
                    lm_score: entry.lm_score,
                    last_emit_t: entry.last_emit_t,
                    consumed,
                });
                e.mass_blank = log_add(e.mass_blank, total + scores[blank]);
                e.last_emit_t = merge_max(e.last_emit_t, entry.last_emit_t);
                e.consumed = consumed;
            }

            // Repeated label: CTC-like self-loop on the label node.
            if topology == MonotonicTopology::CtcT {
                if let Some(&last) = prefix.last() {
                    if entry.mass_label != LOG_ZERO {
                        let e = next.entry(prefix.clone()).or_insert_with(|| Entry {
                            mass_blank: LOG_ZERO,
                            mass_label: LOG_ZERO,
                            lm_score: entry.lm_score,
                            last_emit_t: entry.last_emit_t,
                            consumed,
                        });
                        e.mass_label = log_add(e.mass_label, entry.mass_label + scores[last]);
                        e.last_emit_t = merge_max(e.last_emit_t, entry.last_emit_t);
                        e.consumed = consumed;
                    }
                }
            }

            // Extend by one new label.
            for k in 0..vocab {
                if k == blank {
                    continue;
                }
                let mass = match topology {
                    // After a repeat-capable label state, re-entering the
                    // same label is the self-loop above, not an extension.
                    MonotonicTopology::CtcT if prefix.last() == Some(&k) => entry.mass_blank,
                    _ => total,
                };
                if mass == LOG_ZERO {
                    continue;
                }
                let mut new_prefix = Vec::with_capacity(prefix.len() + 1);
                new_prefix.extend_from_slice(prefix);
                new_prefix.push(k);
                let lm_inc = fuse.map_or(0.0, |m| m.score(prefix, k));
                let e = next.entry(new_prefix).or_insert_with(|| Entry {
                    mass_blank: LOG_ZERO,
                    mass_label: LOG_ZERO,
                    lm_score: entry.lm_score + lm_inc,
                    last_emit_t: Some(t),
                    consumed,
                });
                e.mass_label = log_add(e.mass_label, mass + scores[k]);
                e.last_emit_t = merge_max(e.last_emit_t, Some(t));
                e.consumed = consumed;
            }
        }

        let mut ranked = rank(next, cfg);
        ranked.truncate(cfg.beam_size);
        beam = ranked.into_iter().collect();
    }

    to_result(rank(beam, cfg), false)
}

/// Time-synchronous beam search for the square-lattice transducer: at each
/// frame hypotheses may emit several labels (an inner expansion loop) before
/// taking the blank that advances time. With the per-step limit lifted, a
/// hypothesis exceeding `10 * T` total emissions aborts the utterance with
/// the runaway flag raised.
pub fn beam_search_rnnt(
    scorer: &dyn ModelScorer,
    t_steps: usize,
    cfg: &DecodeConfig,
    lm: Option<&NgramLm>,
) -> DecodeResult {
    assert!(t_steps >= 1, "need at least one time step");
    assert!(cfg.beam_size >= 1, "beam must hold at least one hypothesis");
    let blank = scorer.blank_id();
    let vocab = scorer.vocab_size();
    let fuse = lm.filter(|_| cfg.lm_weight != 0.0);
    let emission_cap = RUNAWAY_CAP_FACTOR * t_steps;

    // prefix -> (am mass, lm score, last emit frame, consumed)
    let mut beam: HashMap<Vec<usize>, Entry> = HashMap::new();
    beam.insert(
        Vec::new(),
        Entry { mass_blank: 0.0, mass_label: LOG_ZERO, lm_score: 0.0, last_emit_t: None, consumed: 0 },
    );

    for t in 0..t_steps {
        let mut finished: HashMap<Vec<usize>, Entry> = HashMap::new();
        let mut agenda = rank(beam, cfg);
        agenda.truncate(cfg.beam_size);
        let mut emits_this_step = 0usize;

        while !agenda.is_empty() {
            let mut extensions: HashMap<Vec<usize>, Entry> = HashMap::new();
            let mut runaway_hit = false;
            for (prefix, entry) in &agenda {
                let scores = scorer.score(t, prefix);
                debug_assert_eq!(scores.len(), vocab);
                let consumed = entry.consumed + 1;
                let total = entry.total();

                // Blank closes this frame for the hypothesis.
                let e = finished.entry(prefix.clone()).or_insert_with(|| Entry {
                    mass_blank: LOG_ZERO,
                    mass_label: LOG_ZERO,
                    lm_score: entry.lm_score,
                    last_emit_t: entry.last_emit_t,
                    consumed,
                });
                e.mass_blank = log_add(e.mass_blank, total + scores[blank]);
                e.last_emit_t = merge_max(e.last_emit_t, entry.last_emit_t);
                e.consumed = e.consumed.max(consumed);

                let may_emit = cfg.max_emits_per_step.map_or(true, |m| emits_this_step < m);
                if !may_emit {
                    continue;
                }
                if cfg.max_emits_per_step.is_none() && prefix.len() + 1 > emission_cap {
                    runaway_hit = true;
                    continue;
                }
                for k in 0..vocab {
                    if k == blank {
                        continue;
                    }
                    let mut new_prefix = Vec::with_capacity(prefix.len() + 1);
                    new_prefix.extend_from_slice(prefix);
                    new_prefix.push(k);
                    let lm_inc = fuse.map_or(0.0, |m| m.score(prefix, k));
                    let e = extensions.entry(new_prefix).or_insert_with(|| Entry {
                        mass_blank: LOG_ZERO,
                        mass_label: LOG_ZERO,
                        lm_score: entry.lm_score + lm_inc,
                        last_emit_t: Some(t),
                        consumed,
                    });
                    e.mass_blank = log_add(e.mass_blank, total + scores[k]);
                    e.last_emit_t = merge_max(e.last_emit_t, Some(t));
                    e.consumed = e.consumed.max(consumed);
                }
            }
            if runaway_hit {
                // Runaway: abort the utterance instead of looping.
                for (p, e) in agenda {
                    merge_entry(&mut finished, p, e);
                }
                return to_result(rank(finished, cfg), true);
            }
            emits_this_step += 1;

            // Keep expanding only candidates that could still displace the
            // kept frame-final pool; scores only decay as labels accumulate.
            let mut ranked = rank(extensions, cfg);
            ranked.truncate(cfg.beam_size);
            if finished.len() >= cfg.beam_size {
                let kept = rank(finished.clone(), cfg);
                let floor = kept[cfg.beam_size - 1].1.total()
                    + cfg.lm_weight * kept[cfg.beam_size - 1].1.lm_score
                    + cfg.length_reward * kept[cfg.beam_size - 1].0.len() as f64;
                let reward_slack = if cfg.length_reward > 0.0 {
                    cfg.length_reward * emission_cap as f64
                } else {
                    0.0
                };
                ranked.retain(|(p, e)| {
                    e.total() + cfg.lm_weight * e.lm_score + cfg.length_reward * p.len() as f64
                        + reward_slack
                        > floor
                });
            }
            agenda = ranked;
        }

        let mut ranked = rank(finished, cfg);
        ranked.truncate(cfg.beam_size);
        beam = ranked.into_iter().collect();
    }

    to_result(rank(beam, cfg), false)
}

fn merge_entry(map: &mut HashMap<Vec<usize>, Entry>, prefix: Vec<usize>, entry: Entry) {
    match map.entry(prefix) {
        std::collections::hash_map::Entry::Occupied(mut o) => {
            let e = o.get_mut();
            e.mass_blank = log_add(e.mass_blank, entry.mass_blank);
            e.mass_label = log_add(e.mass_label, entry.mass_label);
            e.last_emit_t = merge_max(e.last_emit_t, entry.last_emit_t);
            e.consumed = e.consumed.max(entry.consumed);
        }
        std::collections::hash_map::Entry::Vacant(v) => {
            v.insert(entry);
        }
    }
}

/// Greedy square-lattice decoding: argmax per step, staying on the frame
/// after each label emission. `max_emits_per_step == None` arms the
/// `10 * T` runaway cap; reaching it aborts with the flag raised.
pub fn greedy_rnnt(
    scorer: &dyn ModelScorer,
    t_steps: usize,
    max_emits_per_step: Option<usize>,
) -> DecodeResult {
    assert!(t_steps >= 1);
    let blank = scorer.blank_id();
    let cap = RUNAWAY_CAP_FACTOR * t_steps;

    let mut prefix: Vec<usize> = Vec::new();
    let mut am = 0.0;
    let mut consumed = 0usize;
    let mut last_emit_t = None;
    let mut runaway = false;

    let mut t = 0;
    let mut emits_this_step = 0usize;
    while t < t_steps {
        let scores = scorer.score(t, &prefix);
        consumed += 1;
        let force_blank = max_emits_per_step.map_or(false, |m| emits_this_step >= m);
        let best = if force_blank {
            blank
        } else {
            (0..scores.len())
                .max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("scores are not NaN"))
                .expect("vocabulary is non-empty")
        };
        am += scores[best];
        if best == blank {
            t += 1;
            emits_this_step = 0;
        } else {
            prefix.push(best);
            last_emit_t = Some(t);
            emits_this_step += 1;
            if max_emits_per_step.is_none() && prefix.len() >= cap {
                runaway = true;
                break;
            }
        }
    }

    DecodeResult {
        nbest: vec![Hypothesis {
            prefix,
            am_score: LogProb::new(am.min(0.0)).expect("sum of log-probabilities"),
            lm_score: LogProb::ONE,
            last_emit_t,
            scores_consumed: consumed,
        }],
        runaway,
    }
}

/// Outcome of decoding one topology under the adversarial scorer.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ProbeOutcome {
    pub topology: String,
    pub emissions: usize,
    pub score_vectors_consumed: usize,
    pub runaway: bool,
}

/// Run the runaway-hallucination probe: a scorer that always prefers labels
/// over blank drives uncapped square-lattice greedy decoding into the
/// `10 * T` cap, while the monotonic decoders consume exactly one score per
/// step and stop at `T` emissions. Fully deterministic.
pub fn hallucination_probe(t_steps: usize, vocab_size: usize, margin: f64) -> Vec<ProbeOutcome> {
    let scorer = AdversarialScorer::new(vocab_size, 0, margin);
    let mut outcomes = Vec::new();

    let rnnt = greedy_rnnt(&scorer, t_steps, None);
    outcomes.push(ProbeOutcome {
        topology: "rnnt-uncapped".into(),
        emissions: rnnt.best().prefix.len(),
        score_vectors_consumed: rnnt.best().scores_consumed,
        runaway: rnnt.runaway,
    });

    let cfg = DecodeConfig { beam_size: 1, lm_weight: 0.0, ..Default::default() };
    for topo in [MonotonicTopology::CtcT, MonotonicTopology::MonoRnnT] {
        let out = beam_search_monotonic(&scorer, topo, t_steps, &cfg, None);
        outcomes.push(ProbeOutcome {
            topology: topo.name().into(),
            emissions: out.best().prefix.len(),
            score_vectors_consumed: out.best().scores_consumed,
            runaway: out.runaway,
        });
    }
    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::gtct_loss;
    use crate::oracle::exhaustive_decode;
    use crate::topology::LabelSequence;

    fn one_hot_lattice(spell: &[(usize, usize)], t_len: usize, rows: usize, k: usize) -> JoinerLattice {
        // spell: (frame, label); blanks everywhere else along the diagonal.
        let base = JoinerLattice::uniform(t_len, rows, k, 0);
        let mut logits = vec![0.0; t_len * rows * k];
        let mut u = 0;
        let spell_map: HashMap<usize, usize> = spell.iter().cloned().collect();
        for t in 0..t_len {
            if let Some(&label) = spell_map.get(&t) {
                logits[base.idx(t, u, label)] = 30.0;
                u += 1;
            } else {
                for row in 0..rows {
                    logits[base.idx(t, row, 0)] = 30.0;
                }
            }
        }
        JoinerLattice::from_logits(t_len, rows, k, 0, logits).unwrap()
    }

    #[test]
    fn one_hot_lattice_decodes_to_its_spelling() {
        let lat = one_hot_lattice(&[(1, 1), (3, 2)], 4, 5, 3);
        let scorer = LatticeScorer::new(&lat);
        let cfg = DecodeConfig { beam_size: 4, lm_weight: 0.0, ..Default::default() };
        for topo in [MonotonicTopology::CtcT, MonotonicTopology::MonoRnnT] {
            let out = beam_search_monotonic(&scorer, topo, 4, &cfg, None);
            assert_eq!(out.best().prefix, vec![1, 2], "{topo:?}");
            assert_eq!(out.best().scores_consumed, 4);
        }
        let out = beam_search_rnnt(&scorer, 4, &cfg, None);
        assert_eq!(out.best().prefix, vec![1, 2]);
        let out = greedy_rnnt(&scorer, 4, Some(3));
        assert_eq!(out.best().prefix, vec![1, 2]);
    }

    #[test]
    fn monotonic_consumes_exactly_one_score_per_step() {
        let lat = JoinerLattice::random_normal(6, 7, 4, 0, 97);
        let scorer = LatticeScorer::new(&lat);
        let cfg = DecodeConfig { beam_size: 3, lm_weight: 0.0, ..Default::default() };
        for topo in [MonotonicTopology::CtcT, MonotonicTopology::MonoRnnT] {
            let out = beam_search_monotonic(&scorer, topo, 6, &cfg, None);
            for hyp in &out.nbest {
                assert_eq!(hyp.scores_consumed, 6);
                assert!(hyp.prefix.len() <= 6);
            }
        }
    }

    #[test]
    fn merged_am_score_equals_loss_module_full_sum() {
        // With a beam wide enough to avoid pruning, the best hypothesis's
        // merged score must equal the graph full-sum of its prefix.
        let lat = JoinerLattice::random_normal(4, 5, 3, 0, 41);
        let scorer = LatticeScorer::new(&lat);
        let cfg = DecodeConfig { beam_size: 400, lm_weight: 0.0, ..Default::default() };
        for topo in [MonotonicTopology::CtcT, MonotonicTopology::MonoRnnT] {
            let out = beam_search_monotonic(&scorer, topo, 4, &cfg, None);
            let best = out.best();
            let labels = LabelSequence::new(best.prefix.clone(), 0, 3).unwrap();
            let graph = topo.build_graph(&labels, 0, 3).unwrap();
            let loss = gtct_loss(&graph, &lat).unwrap();
            assert!(
                (best.am_score.value() + loss.loss).abs() < 1e-6,
                "{topo:?}: beam {} vs loss {}",
                best.am_score.value(),
                -loss.loss
            );
        }
    }

    #[test]
    fn beam_agrees_with_exhaustive_oracle_on_tiny_instances() {
        let mut agree = 0;
        let total = 40;
        for seed in 0..total {
            let lat = JoinerLattice::random_normal(3, 4, 3, 0, 1000 + seed);
            let scorer = LatticeScorer::new(&lat);
            let topo = if seed % 2 == 0 { MonotonicTopology::CtcT } else { MonotonicTopology::MonoRnnT };
            let cfg = DecodeConfig { beam_size: 10, lm_weight: 0.0, ..Default::default() };
            let beam = beam_search_monotonic(&scorer, topo, 3, &cfg, None);
            let (oracle, _) = exhaustive_decode(&lat, topo, 3).unwrap();
            if beam.best().prefix == oracle {
                agree += 1;
            }
        }
        assert!(agree * 10 >= total * 9, "agreement {agree}/{total}");
    }

    #[test]
    fn widening_the_beam_never_hurts_the_best_score() {
        for seed in [3, 7, 11] {
            let lat = JoinerLattice::random_normal(5, 6, 4, 0, seed);
            let scorer = LatticeScorer::new(&lat);
            let mut prev = f64::NEG_INFINITY;
            for beam_size in [1, 2, 4, 8, 16] {
                let cfg = DecodeConfig { beam_size, lm_weight: 0.0, ..Default::default() };
                let out = beam_search_monotonic(&scorer, MonotonicTopology::CtcT, 5, &cfg, None);
                let score = out.best().combined_score(&cfg);
                assert!(score >= prev - 1e-12, "beam {beam_size}: {score} < {prev}");
                prev = score;
            }
        }
    }

    #[test]
    fn decoding_is_deterministic() {
        let lat = JoinerLattice::random_normal(5, 6, 4, 0, 8);
        let scorer = LatticeScorer::new(&lat);
        let cfg = DecodeConfig { beam_size: 5, lm_weight: 0.0, ..Default::default() };
        let a = beam_search_monotonic(&scorer, MonotonicTopology::CtcT, 5, &cfg, None);
        let b = beam_search_monotonic(&scorer, MonotonicTopology::CtcT, 5, &cfg, None);
        assert_eq!(a, b);
        let a = beam_search_rnnt(&scorer, 5, &cfg, None);
        let b = beam_search_rnnt(&scorer, 5, &cfg, None);
        assert_eq!(a, b);
    }

    #[test]
    fn adversarial_scorer_triggers_runaway_only_when_uncapped() {
        let scorer = AdversarialScorer::new(3, 0, 1.0);
        let t_steps = 4;

        let uncapped = greedy_rnnt(&scorer, t_steps, None);
        assert!(uncapped.runaway);
        assert_eq!(uncapped.best().prefix.len(), RUNAWAY_CAP_FACTOR * t_steps);

        let capped = greedy_rnnt(&scorer, t_steps, Some(2));
        assert!(!capped.runaway);
        assert_eq!(capped.best().prefix.len(), 2 * t_steps);

        let cfg = DecodeConfig { beam_size: 2, lm_weight: 0.0, max_emits_per_step: None, ..Default::default() };
        let beam = beam_search_rnnt(&scorer, t_steps, &cfg, None);
        assert!(beam.runaway);
    }

    #[test]
    fn adversarial_scorer_cannot_overrun_monotonic_decoders() {
        let scorer = AdversarialScorer::new(3, 0, 1.0);
        let cfg = DecodeConfig { beam_size: 2, lm_weight: 0.0, ..Default::default() };
        for topo in [MonotonicTopology::CtcT, MonotonicTopology::MonoRnnT] {
            let out = beam_search_monotonic(&scorer, topo, 4, &cfg, None);
            assert!(!out.runaway);
            assert_eq!(out.best().prefix.len(), 4);
            assert_eq!(out.best().scores_consumed, 4);
        }
    }

    #[test]
    fn probe_outcomes_are_deterministic_and_shaped() {
        let a = hallucination_probe(5, 3, 1.0);
        let b = hallucination_probe(5, 3, 1.0);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(a[0].runaway);
        assert!(!a[1].runaway && a[1].emissions <= 5);
        assert!(!a[2].runaway && a[2].emissions <= 5);
    }
}
