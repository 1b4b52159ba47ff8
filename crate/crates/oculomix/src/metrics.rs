//! Evaluation metrics: AUROC, average precision, and Harrell's concordance
//! index.
//!
//! One convention everywhere: higher score means higher risk. AUROC uses
//! average ranks, so tied pos/neg pairs earn 0.5, matching pair counting.
//! Average precision ranks by descending score with stable tie-breaking on
//! input order. The concordance index deems a pair comparable when the
//! earlier time belongs to an observed event and strictly precedes the
//! other time; tied scores again earn 0.5.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric needs both classes present")]
    DegenerateLabels,
    #[error("no comparable pairs under censoring")]
    NoComparablePairs,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("event_time at index {0} must be positive")]
    NonPositiveEventTime(usize),
}

/// One evaluated sample: a risk score plus the outcome fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredOutcome {
    /// Positive-class logit or probability; higher = higher risk.
    pub score: f64,
    /// Binary outcome, 0 or 1.
    pub label: u8,
    /// Time to event or censoring; positive.
    pub event_time: f64,
    pub event_observed: bool,
}

fn check_scores(outcomes: &[ScoredOutcome]) -> Result<(), MetricsError> {
    for (i, o) in outcomes.iter().enumerate() {
        if !o.score.is_finite() {
            return Err(MetricsError::NonFiniteScore(i));
        }
        if !o.event_time.is_finite() || o.event_time <= 0.0 {
            return Err(MetricsError::NonPositiveEventTime(i));
        }
    }
    Ok(())
}

/// Area under the ROC curve via the Mann-Whitney statistic with average
/// ranks, so ties contribute 0.5.
pub fn auroc(outcomes: &[ScoredOutcome]) -> Result<f64, MetricsError> {
    check_scores(outcomes)?;
    let n = outcomes.len();
    let n_pos = outcomes.iter().filter(|o| o.label == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::DegenerateLabels);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| outcomes[a].score.partial_cmp(&outcomes[b].score).unwrap());

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && outcomes[order[j + 1]].score == outcomes[order[i]].score {
            j += 1;
        }
        // 1-based average rank of the tie group.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if outcomes[k].label == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision: the mean, over positives, of precision at that
/// positive's rank when samples are sorted by descending score. Ties break
/// by stable input order.
pub fn auprc(outcomes: &[ScoredOutcome]) -> Result<f64, MetricsError> {
    check_scores(outcomes)?;
    let n_pos = outcomes.iter().filter(|o| o.label == 1).count();
    if n_pos == 0 {
        return Err(MetricsError::DegenerateLabels);
    }

    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| outcomes[b].score.partial_cmp(&outcomes[a].score).unwrap());

    let mut true_positives = 0usize;
    let mut sum = 0.0;
    for (rank0, &k) in order.iter().enumerate() {
        if outcomes[k].label == 1 {
            true_positives += 1;
            sum += true_positives as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// 1-based Fenwick tree over score ranks.
struct Fenwick {
    tree: Vec<usize>,
}

impl Fenwick {
    fn new(size: usize) -> Self {
        Fenwick {
            tree: vec![0; size + 1],
        }
    }

    fn add(&mut self, mut pos: usize) {
        while pos < self.tree.len() {
            self.tree[pos] += 1;
            pos += pos & pos.wrapping_neg();
        }
    }

    /// Count of inserted ranks `<= pos`; `pos == 0` returns 0.
    fn prefix(&self, mut pos: usize) -> usize {
        let mut sum = 0;
        while pos > 0 {
            sum += self.tree[pos];
            pos -= pos & pos.wrapping_neg();
        }
        sum
    }
}

/// Harrell's concordance index. A pair `(i, j)` is comparable when
/// `event_time_i < event_time_j` and sample `i`'s event was observed; it is
/// concordant when `score_i > score_j`, with 0.5 credit for score ties.
///
/// Computed in `O(n log n)` by sweeping event times in descending order and
/// counting score ranks in a Fenwick tree; the test suites compare this
/// against a quadratic pair scan.
pub fn c_index(outcomes: &[ScoredOutcome]) -> Result<f64, MetricsError> {
    check_scores(outcomes)?;

    let mut unique_scores: Vec<f64> = outcomes.iter().map(|o| o.score).collect();
    unique_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    unique_scores.dedup();
    let rank_of = |score: f64| -> usize {
        unique_scores
            .binary_search_by(|probe| probe.partial_cmp(&score).unwrap())
            .expect("score present by construction")
            + 1
    };

    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| {
        outcomes[b]
            .event_time
            .partial_cmp(&outcomes[a].event_time)
            .unwrap()
    });

    let mut fenwick = Fenwick::new(unique_scores.len());
    let mut inserted = 0usize;
    let mut comparable = 0usize;
    let mut concordant = 0.0f64;

    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len()
            && outcomes[order[j + 1]].event_time == outcomes[order[i]].event_time
        {
            j += 1;
        }
        // Everything in the tree has strictly later event time than this
        // group; same-time pairs never compare.
        for &k in &order[i..=j] {
            if outcomes[k].event_observed {
                let rank = rank_of(outcomes[k].score);
                let below = fenwick.prefix(rank - 1);
                let tied = fenwick.prefix(rank) - below;
                comparable += inserted;
                concordant += below as f64 + 0.5 * tied as f64;
            }
        }
        for &k in &order[i..=j] {
            fenwick.add(rank_of(outcomes[k].score));
            inserted += 1;
        }
        i = j + 1;
    }

    if comparable == 0 {
        return Err(MetricsError::NoComparablePairs);
    }
    Ok(concordant / comparable as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Brute-force pair counting: the independent AUROC oracle.
    fn auroc_oracle(outcomes: &[ScoredOutcome]) -> f64 {
        let mut credit = 0.0;
        let mut pairs = 0usize;
        for pos in outcomes.iter().filter(|o| o.label == 1) {
            for neg in outcomes.iter().filter(|o| o.label == 0) {
                pairs += 1;
                if pos.score > neg.score {
                    credit += 1.0;
                } else if pos.score == neg.score {
                    credit += 0.5;
                }
            }
        }
        credit / pairs as f64
    }

    /// Exhaustive average precision: precision at each positive's rank is
    /// recomputed by rescanning the ordered prefix.
    fn auprc_oracle(outcomes: &[ScoredOutcome]) -> f64 {
        let mut order: Vec<usize> = (0..outcomes.len()).collect();
        order.sort_by(|&a, &b| outcomes[b].score.partial_cmp(&outcomes[a].score).unwrap());
        let positives: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(_, &k)| outcomes[k].label == 1)
            .map(|(rank0, _)| rank0)
            .collect();
        let mut sum = 0.0;
        for &rank0 in &positives {
            let hits = order[..=rank0]
                .iter()
                .filter(|&&k| outcomes[k].label == 1)
                .count();
            sum += hits as f64 / (rank0 + 1) as f64;
        }
        sum / positives.len() as f64
    }

    /// Quadratic pair scan: the independent concordance oracle.
    fn c_index_oracle(outcomes: &[ScoredOutcome]) -> Option<f64> {
        let mut credit = 0.0;
        let mut comparable = 0usize;
        for i in outcomes {
            if !i.event_observed {
                continue;
            }
            for j in outcomes {
                if i.event_time < j.event_time {
                    comparable += 1;
                    if i.score > j.score {
                        credit += 1.0;
                    } else if i.score == j.score {
                        credit += 0.5;
                    }
                }
            }
        }
        (comparable > 0).then(|| credit / comparable as f64)
    }

    fn classified(scores: &[f64], labels: &[u8]) -> Vec<ScoredOutcome> {
        scores
            .iter()
            .zip(labels)
            .map(|(&score, &label)| ScoredOutcome {
                score,
                label,
                event_time: 1.0,
                event_observed: true,
            })
            .collect()
    }

    fn random_instance(rng: &mut impl Rng, max_n: usize) -> Vec<ScoredOutcome> {
        let n = rng.random_range(2..=max_n);
        (0..n)
            .map(|_| ScoredOutcome {
                // Coarse grid so ties actually happen.
                score: f64::from(rng.random_range(0..20)) / 10.0,
                label: u8::from(rng.random_bool(0.4)),
                event_time: f64::from(rng.random_range(1..15)),
                event_observed: rng.random_bool(0.7),
            })
            .collect()
    }

    #[test]
    fn auroc_perfect_and_tied() {
        let perfect = classified(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]);
        assert_eq!(auroc(&perfect).unwrap(), 1.0);
        let tied = classified(&[0.5, 0.5, 0.5, 0.5], &[0, 1, 0, 1]);
        assert_eq!(auroc(&tied).unwrap(), 0.5);
    }

    #[test]
    fn auroc_frozen_pair_count() {
        // Positives {0.35, 0.8} vs negatives {0.1, 0.4}: 3 of 4 pairs win.
        let outcomes = classified(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]);
        assert_eq!(auroc(&outcomes).unwrap(), 0.75);
        assert_eq!(auroc_oracle(&outcomes), 0.75);
    }

    #[test]
    fn auroc_degenerate_labels_rejected() {
        let single = classified(&[0.1, 0.2], &[1, 1]);
        assert_eq!(auroc(&single), Err(MetricsError::DegenerateLabels));
    }

    #[test]
    fn auprc_trivials() {
        let perfect = classified(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]);
        assert_eq!(auprc(&perfect).unwrap(), 1.0);
        // Single positive ranked last among n = 5.
        let last = classified(&[0.9, 0.8, 0.7, 0.6, 0.1], &[0, 0, 0, 0, 1]);
        assert_eq!(auprc(&last).unwrap(), 1.0 / 5.0);
    }

    #[test]
    fn auprc_handles_ties_within_tie_perturbation_bounds() {
        // Two tied scores across classes: the stable value must sit between
        // the best-case and worst-case tie resolutions.
        let outcomes = classified(&[0.5, 0.5, 0.3], &[1, 0, 1]);
        let stable = auprc(&outcomes).unwrap();
        let best = auprc(&classified(&[0.5001, 0.5, 0.3], &[1, 0, 1])).unwrap();
        let worst = auprc(&classified(&[0.4999, 0.5, 0.3], &[1, 0, 1])).unwrap();
        assert!(stable <= best && stable >= worst);
        assert_eq!(stable, best); // input order puts the positive first
    }

    #[test]
    fn c_index_trivials() {
        // Scores inverse-ordered with event times, all observed.
        let outcomes: Vec<ScoredOutcome> = (0..6)
            .map(|i| ScoredOutcome {
                score: -(i as f64),
                label: 0,
                event_time: (i + 1) as f64,
                event_observed: true,
            })
            .collect();
        assert_eq!(c_index(&outcomes).unwrap(), 1.0);

        let tied: Vec<ScoredOutcome> = (0..6)
            .map(|i| ScoredOutcome {
                score: 0.5,
                label: 0,
                event_time: (i + 1) as f64,
                event_observed: true,
            })
            .collect();
        assert_eq!(c_index(&tied).unwrap(), 0.5);
    }

    #[test]
    fn c_index_no_comparable_pairs() {
        let censored: Vec<ScoredOutcome> = (0..4)
            .map(|i| ScoredOutcome {
                score: i as f64,
                label: 0,
                event_time: (i + 1) as f64,
                event_observed: false,
            })
            .collect();
        assert_eq!(c_index(&censored), Err(MetricsError::NoComparablePairs));
    }

    #[test]
    fn c_index_matches_oracle_with_censoring() {
        let mut rng = crate::stream::rng_for(5, &[]);
        let outcomes = random_instance(&mut rng, 10);
        match (c_index(&outcomes), c_index_oracle(&outcomes)) {
            (Ok(fast), Some(slow)) => assert!((fast - slow).abs() <= 1e-12),
            (Err(MetricsError::NoComparablePairs), None) => {}
            (fast, slow) => panic!("disagreement: {fast:?} vs {slow:?}"),
        }
    }

    #[test]
    fn all_three_match_oracles_on_random_instances() {
        let mut rng = crate::stream::rng_for(6, &[]);
        let mut checked = 0;
        while checked < 200 {
            let outcomes = random_instance(&mut rng, 50);
            if let Ok(fast) = auroc(&outcomes) {
                assert!((fast - auroc_oracle(&outcomes)).abs() <= 1e-12);
            }
            if let Ok(fast) = auprc(&outcomes) {
                assert!((fast - auprc_oracle(&outcomes)).abs() <= 1e-12);
            }
            match (c_index(&outcomes), c_index_oracle(&outcomes)) {
                (Ok(fast), Some(slow)) => assert!((fast - slow).abs() <= 1e-12),
                (Err(MetricsError::NoComparablePairs), None) => {}
                (fast, slow) => panic!("disagreement: {fast:?} vs {slow:?}"),
            }
            checked += 1;
        }
    }

    #[test]
    fn rank_metrics_invariant_under_monotone_transforms() {
        let mut rng = crate::stream::rng_for(7, &[]);
        for _ in 0..50 {
            let outcomes = random_instance(&mut rng, 30);
            let transformed = |f: &dyn Fn(f64) -> f64| -> Vec<ScoredOutcome> {
                outcomes
                    .iter()
                    .map(|o| ScoredOutcome {
                        score: f(o.score),
                        ..*o
                    })
                    .collect()
            };
            let exp = transformed(&|s| s.exp());
            let affine = transformed(&|s| 3.0 * s + 11.0);
            if let Ok(base) = auroc(&outcomes) {
                assert!((auroc(&exp).unwrap() - base).abs() <= 1e-12);
                assert!((auroc(&affine).unwrap() - base).abs() <= 1e-12);
            }
            if let Ok(base) = c_index(&outcomes) {
                assert!((c_index(&exp).unwrap() - base).abs() <= 1e-12);
                assert!((c_index(&affine).unwrap() - base).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn auroc_reduces_to_c_index_on_binary_survival() {
        // event_time = 2 - label with all events observed makes comparable
        // pairs exactly the pos/neg pairs.
        let mut rng = crate::stream::rng_for(8, &[]);
        for _ in 0..50 {
            let outcomes: Vec<ScoredOutcome> = random_instance(&mut rng, 30)
                .into_iter()
                .map(|o| ScoredOutcome {
                    event_time: 2.0 - f64::from(o.label),
                    event_observed: true,
                    ..o
                })
                .collect();
            if let Ok(roc) = auroc(&outcomes) {
                assert!((roc - c_index(&outcomes).unwrap()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn negating_scores_complements_auroc() {
        let mut rng = crate::stream::rng_for(9, &[]);
        for _ in 0..50 {
            // Distinct scores so no ties interfere.
            let n = rng.random_range(4..30);
            let outcomes: Vec<ScoredOutcome> = (0..n)
                .map(|i| ScoredOutcome {
                    score: i as f64 + rng.random_range(0.0..0.5),
                    label: u8::from(rng.random_bool(0.5)),
                    event_time: 1.0,
                    event_observed: true,
                })
                .collect();
            let negated: Vec<ScoredOutcome> = outcomes
                .iter()
                .map(|o| ScoredOutcome {
                    score: -o.score,
                    ..*o
                })
                .collect();
            if let Ok(base) = auroc(&outcomes) {
                assert!((auroc(&negated).unwrap() - (1.0 - base)).abs() <= 1e-12);
            }
        }
    }
}
