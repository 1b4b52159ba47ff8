//! Training objectives with analytic gradients.
//!
//! The supervised term is label-smoothed cross-entropy over a two-way
//! softmax head. Cross-exam mixtures are supervised in one of two ways:
//!
//! - **ranking**: a hinge on the scalar logit difference,
//!   `max(0, m - (l_later - l_earlier))`, pushing the prediction for the
//!   later-leaning mixture above the earlier one by a margin; or
//! - **direct label**: cross-entropy against the area-weighted blend of the
//!   two source labels (the ablation baseline).
//!
//! The scalar logit is `l = logit[1] - logit[0]`, the unique
//! translation-invariant scalar consistent with the softmax probabilities.
//! All gradients are exact and are checked against central finite
//! differences in the test suites.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msda::{MixedSample, Supervision};
use crate::sampler::TemporalOrder;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("target {0} outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error("smoothing {0} outside [0, 1)")]
    InvalidSmoothing(f64),
    #[error("margin {0} is negative")]
    NegativeMargin(f64),
    #[error("anchor {index} has a cross-exam term but no cross prediction")]
    DanglingAnchor { index: usize },
    #[error("anchor {index} has a cross prediction but no cross-exam term")]
    StrayPrediction { index: usize },
    #[error("terms/predictions lengths differ: {terms} vs {primary} vs {cross}")]
    LengthMismatch {
        terms: usize,
        primary: usize,
        cross: usize,
    },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("supervision variant not usable here: {0}")]
    UnsupportedSupervision(&'static str),
}

fn default_margin() -> f64 {
    0.1
}
fn default_smoothing() -> f64 {
    0.1
}

/// Margin of the pairwise ranking hinge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingLossConfig {
    #[serde(default = "default_margin")]
    pub margin: f64,
}

impl Default for RankingLossConfig {
    fn default() -> Self {
        RankingLossConfig {
            margin: default_margin(),
        }
    }
}

impl RankingLossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.margin < 0.0 {
            return Err(LossError::NegativeMargin(self.margin));
        }
        Ok(())
    }
}

/// Label smoothing of the supervised cross-entropy term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisedLossConfig {
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
}

impl Default for SupervisedLossConfig {
    fn default() -> Self {
        SupervisedLossConfig {
            smoothing: default_smoothing(),
        }
    }
}

impl SupervisedLossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(LossError::InvalidSmoothing(self.smoothing));
        }
        Ok(())
    }
}

/// Scalar logit convention for the two-way head: positive minus negative
/// class logit. Invariant under adding a constant to both components.
pub fn scalar_logit(logits: [f64; 2]) -> f64 {
    logits[1] - logits[0]
}

/// Label-smoothed two-class cross-entropy with its gradient.
///
/// The positive-class target becomes `t' = target * (1 - eps) + eps / 2`;
/// the loss is `-(t' ln p1 + (1 - t') ln p0)` with `p = softmax(logits)`,
/// and the gradient is `(p0 - (1 - t'), p1 - t')`.
pub fn cross_entropy_smoothed(
    logits: [f64; 2],
    target: f64,
    smoothing: f64,
) -> Result<(f64, [f64; 2]), LossError> {
    if !logits[0].is_finite() || !logits[1].is_finite() || !target.is_finite() {
        return Err(LossError::NonFiniteInput);
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(LossError::TargetOutOfRange(target));
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(LossError::InvalidSmoothing(smoothing));
    }
    let t = target * (1.0 - smoothing) + smoothing / 2.0;
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    let (p0, p1) = (e0 / z, e1 / z);
    let (ln_p0, ln_p1) = (logits[0] - m - z.ln(), logits[1] - m - z.ln());
    let loss = -(t * ln_p1 + (1.0 - t) * ln_p0);
    Ok((loss, [p0 - (1.0 - t), p1 - t]))
}

/// Pairwise ranking hinge on scalar logits.
///
/// `order` is the sign of `t2 - t1`: `PartnerLater` (+1) means the second
/// logit belongs to the later exam, so the hinge is
/// `max(0, margin - (l_t2 - l_t1))`; `PartnerEarlier` mirrors it. Returns
/// the loss and `(d/dl_t1, d/dl_t2)`, taking the subgradient 0 at the kink.
pub fn ranking_loss(
    l_t1: f64,
    l_t2: f64,
    order: TemporalOrder,
    margin: f64,
) -> Result<(f64, (f64, f64)), LossError> {
    if !l_t1.is_finite() || !l_t2.is_finite() {
        return Err(LossError::NonFiniteInput);
    }
    if margin < 0.0 {
        return Err(LossError::NegativeMargin(margin));
    }
    let gap = match order {
        TemporalOrder::PartnerLater => l_t2 - l_t1,
        TemporalOrder::PartnerEarlier => l_t1 - l_t2,
    };
    let raw = margin - gap;
    if raw > 0.0 {
        let (d1, d2) = match order {
            TemporalOrder::PartnerLater => (1.0, -1.0),
            TemporalOrder::PartnerEarlier => (-1.0, 1.0),
        };
        Ok((raw, (d1, d2)))
    } else {
        Ok((0.0, (0.0, 0.0)))
    }
}

/// Cross-exam constituent of an anchor group: the temporal relation plus
/// everything the direct-label ablation needs to blend the source labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossTerm {
    pub order: TemporalOrder,
    pub lambda_adjusted: f64,
    pub anchor_label: u8,
    pub partner_label: u8,
}

impl CrossTerm {
    /// The blended label `lambda_adjusted * y_anchor + (1 - lambda_adjusted) * y_partner`.
    pub fn mixed_label(&self) -> f64 {
        self.lambda_adjusted * f64::from(self.anchor_label)
            + (1.0 - self.lambda_adjusted) * f64::from(self.partner_label)
    }
}

/// One anchor's contribution to the batch: the supervised target of its
/// same-time sample and, optionally, a cross-exam term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorTerm {
    /// Target in [0, 1]: the hard exam label or a blended soft label.
    pub target: f64,
    pub cross: Option<CrossTerm>,
}

impl AnchorTerm {
    /// Builds a term from augmented samples: `primary` must carry hard or
    /// soft supervision, `cross` (when present) a ranking reference.
    pub fn from_samples(
        primary: &MixedSample,
        cross: Option<&MixedSample>,
    ) -> Result<Self, LossError> {
        let target = match primary.supervision {
            Supervision::Hard { label } => f64::from(label),
            Supervision::Soft { y_mix } => y_mix,
            Supervision::RankingRef { .. } => {
                return Err(LossError::UnsupportedSupervision(
                    "primary sample cannot be a cross-exam mixture",
                ))
            }
        };
        let cross = match cross {
            None => None,
            Some(sample) => match sample.supervision {
                Supervision::RankingRef {
                    order,
                    anchor_label,
                    partner_label,
                    ..
                } => Some(CrossTerm {
                    order,
                    lambda_adjusted: sample.coeff.lambda_adjusted,
                    anchor_label,
                    partner_label,
                }),
                _ => {
                    return Err(LossError::UnsupportedSupervision(
                        "cross sample must be a cross-exam mixture",
                    ))
                }
            },
        };
        Ok(AnchorTerm { target, cross })
    }
}

/// Loss value plus gradients in the layout of the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub total: f64,
    pub primary_grads: Vec<[f64; 2]>,
    pub cross_grads: Vec<Option<[f64; 2]>>,
}

fn check_batch(
    terms: &[AnchorTerm],
    primary_logits: &[[f64; 2]],
    cross_logits: &[Option<[f64; 2]>],
) -> Result<usize, LossError> {
    if terms.len() != primary_logits.len() || terms.len() != cross_logits.len() {
        return Err(LossError::LengthMismatch {
            terms: terms.len(),
            primary: primary_logits.len(),
            cross: cross_logits.len(),
        });
    }
    if terms.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let mut n_cross = 0usize;
    for (index, (term, logits)) in terms.iter().zip(cross_logits).enumerate() {
        match (term.cross.is_some(), logits.is_some()) {
            (true, false) => return Err(LossError::DanglingAnchor { index }),
            (false, true) => return Err(LossError::StrayPrediction { index }),
            (true, true) => n_cross += 1,
            (false, false) => {}
        }
    }
    Ok(n_cross)
}

/// Combined objective: mean supervised cross-entropy over anchors plus the
/// mean ranking hinge between each anchor's prediction and its cross-exam
/// mixture's prediction. Anchors without a cross term contribute only the
/// supervised part.
pub fn oculomix_objective(
    terms: &[AnchorTerm],
    primary_logits: &[[f64; 2]],
    cross_logits: &[Option<[f64; 2]>],
    ranking: &RankingLossConfig,
    sup: &SupervisedLossConfig,
) -> Result<Objective, LossError> {
    ranking.validate()?;
    sup.validate()?;
    let n_cross = check_batch(terms, primary_logits, cross_logits)?;
    let n = terms.len() as f64;

    let mut total = 0.0;
    let mut primary_grads = vec![[0.0; 2]; terms.len()];
    let mut cross_grads = vec![None; terms.len()];

    for (k, term) in terms.iter().enumerate() {
        let (ce, ce_grad) = cross_entropy_smoothed(primary_logits[k], term.target, sup.smoothing)?;
        total += ce / n;
        primary_grads[k][0] += ce_grad[0] / n;
        primary_grads[k][1] += ce_grad[1] / n;

        if let Some(cross) = &term.cross {
            let mix_logits = cross_logits[k].expect("checked by check_batch");
            let (loss, (d_anchor, d_mix)) = ranking_loss(
                scalar_logit(primary_logits[k]),
                scalar_logit(mix_logits),
                cross.order,
                ranking.margin,
            )?;
            let c = n_cross as f64;
            total += loss / c;
            // Chain through l = logit[1] - logit[0].
            primary_grads[k][0] -= d_anchor / c;
            primary_grads[k][1] += d_anchor / c;
            cross_grads[k] = Some([-d_mix / c, d_mix / c]);
        }
    }

    Ok(Objective {
        total,
        primary_grads,
        cross_grads,
    })
}

/// Ablation objective: the ranking hinge is replaced by supervised
/// cross-entropy against the blended label of the two source exams.
pub fn direct_label_objective(
    terms: &[AnchorTerm],
    primary_logits: &[[f64; 2]],
    cross_logits: &[Option<[f64; 2]>],
    sup: &SupervisedLossConfig,
) -> Result<Objective, LossError> {
    sup.validate()?;
    let n_cross = check_batch(terms, primary_logits, cross_logits)?;
    let n = terms.len() as f64;

    let mut total = 0.0;
    let mut primary_grads = vec![[0.0; 2]; terms.len()];
    let mut cross_grads = vec![None; terms.len()];

    for (k, term) in terms.iter().enumerate() {
        let (ce, ce_grad) = cross_entropy_smoothed(primary_logits[k], term.target, sup.smoothing)?;
        total += ce / n;
        primary_grads[k][0] += ce_grad[0] / n;
        primary_grads[k][1] += ce_grad[1] / n;

        if let Some(cross) = &term.cross {
            let mix_logits = cross_logits[k].expect("checked by check_batch");
            let (ce_mix, g) =
                cross_entropy_smoothed(mix_logits, cross.mixed_label(), sup.smoothing)?;
            let c = n_cross as f64;
            total += ce_mix / c;
            cross_grads[k] = Some([g[0] / c, g[1] / c]);
        }
    }

    Ok(Objective {
        total,
        primary_grads,
        cross_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const FD_STEP: f64 = 1e-5;

    #[test]
    fn ce_uniform_softmax_is_ln_two() {
        let (loss, _) = cross_entropy_smoothed([0.0, 0.0], 1.0, 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn ce_gradient_closed_form_at_zero_logits() {
        for target in [0.0, 0.3, 1.0] {
            let (_, grad) = cross_entropy_smoothed([0.0, 0.0], target, 0.0).unwrap();
            assert!((grad[0] - (0.5 - (1.0 - target))).abs() < 1e-15);
            assert!((grad[1] - (0.5 - target)).abs() < 1e-15);
        }
    }

    #[test]
    fn ce_zero_smoothing_equals_plain_ce() {
        let logits = [0.37, -1.2];
        let target = 1.0;
        let (smoothed, _) = cross_entropy_smoothed(logits, target, 0.0).unwrap();
        let p1 = 1.0 / (1.0 + (logits[0] - logits[1]).exp());
        assert!((smoothed + p1.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_rejects_bad_inputs() {
        assert_eq!(
            cross_entropy_smoothed([f64::NAN, 0.0], 1.0, 0.0),
            Err(LossError::NonFiniteInput)
        );
        assert_eq!(
            cross_entropy_smoothed([0.0, 0.0], 1.5, 0.0),
            Err(LossError::TargetOutOfRange(1.5))
        );
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let mut rng = crate::stream::rng_for(1, &[]);
        for _ in 0..100 {
            let logits = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let target = rng.random_range(0.0..=1.0);
            let eps = rng.random_range(0.0..0.5);
            let (_, grad) = cross_entropy_smoothed(logits, target, eps).unwrap();
            for j in 0..2 {
                let mut hi = logits;
                let mut lo = logits;
                hi[j] += FD_STEP;
                lo[j] -= FD_STEP;
                let (lh, _) = cross_entropy_smoothed(hi, target, eps).unwrap();
                let (ll, _) = cross_entropy_smoothed(lo, target, eps).unwrap();
                let fd = (lh - ll) / (2.0 * FD_STEP);
                let rel = (grad[j] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-6, "component {j}: analytic {} vs fd {fd}", grad[j]);
            }
        }
    }

    #[test]
    fn ranking_worked_examples() {
        // Margin satisfied: later logit already exceeds earlier by > m.
        let (loss, _) = ranking_loss(0.5, 0.9, TemporalOrder::PartnerLater, 0.1).unwrap();
        assert_eq!(loss, 0.0);
        // Symmetric tie pays the margin either way.
        for order in [TemporalOrder::PartnerLater, TemporalOrder::PartnerEarlier] {
            let (loss, _) = ranking_loss(0.7, 0.7, order, 0.1).unwrap();
            assert_eq!(loss, 0.1);
        }
        // Inverted ordering: max(0, 0.1 - (0.5 - 0.9)) = 0.5.
        let (loss, (d1, d2)) = ranking_loss(0.9, 0.5, TemporalOrder::PartnerLater, 0.1).unwrap();
        assert_eq!(loss, 0.5);
        assert_eq!((d1, d2), (1.0, -1.0));
    }

    #[test]
    fn ranking_is_antisymmetric_and_non_negative() {
        let mut rng = crate::stream::rng_for(2, &[]);
        for _ in 0..10_000 {
            let a = rng.random_range(-2.0..2.0);
            let b = rng.random_range(-2.0..2.0);
            let m = rng.random_range(0.0..0.5);
            let (fwd, _) = ranking_loss(a, b, TemporalOrder::PartnerLater, m).unwrap();
            let (rev, _) = ranking_loss(b, a, TemporalOrder::PartnerEarlier, m).unwrap();
            assert_eq!(fwd, rev);
            assert!(fwd >= 0.0);
            // Zero whenever the ordered gap clears the margin.
            if b - a >= m {
                assert_eq!(fwd, 0.0);
            }
        }
    }

    fn tiny_batch() -> (Vec<AnchorTerm>, Vec<[f64; 2]>, Vec<Option<[f64; 2]>>) {
        let terms = vec![
            AnchorTerm {
                target: 1.0,
                cross: Some(CrossTerm {
                    order: TemporalOrder::PartnerLater,
                    lambda_adjusted: 0.25,
                    anchor_label: 0,
                    partner_label: 1,
                }),
            },
            AnchorTerm {
                target: 0.4,
                cross: None,
            },
            AnchorTerm {
                target: 0.0,
                cross: Some(CrossTerm {
                    order: TemporalOrder::PartnerEarlier,
                    lambda_adjusted: 0.8,
                    anchor_label: 1,
                    partner_label: 1,
                }),
            },
        ];
        let primary = vec![[0.2, 0.7], [-0.5, 0.1], [0.9, -0.3]];
        let cross = vec![Some([0.1, 0.4]), None, Some([-0.2, 0.6])];
        (terms, primary, cross)
    }

    #[test]
    fn objective_without_cross_terms_is_mean_ce() {
        let terms = vec![
            AnchorTerm {
                target: 1.0,
                cross: None,
            },
            AnchorTerm {
                target: 0.0,
                cross: None,
            },
        ];
        let primary = vec![[0.3, -0.4], [1.2, 0.8]];
        let cross = vec![None, None];
        let sup = SupervisedLossConfig { smoothing: 0.1 };
        let obj = oculomix_objective(
            &terms,
            &primary,
            &cross,
            &RankingLossConfig::default(),
            &sup,
        )
        .unwrap();
        let expected: f64 = terms
            .iter()
            .zip(&primary)
            .map(|(t, &l)| cross_entropy_smoothed(l, t.target, 0.1).unwrap().0)
            .sum::<f64>()
            / 2.0;
        assert!((obj.total - expected).abs() < 1e-15);
        assert!(obj.cross_grads.iter().all(Option::is_none));
    }

    #[test]
    fn objective_well_ordered_pair_has_zero_ranking_term() {
        let terms = vec![AnchorTerm {
            target: 0.0,
            cross: Some(CrossTerm {
                order: TemporalOrder::PartnerLater,
                lambda_adjusted: 0.5,
                anchor_label: 0,
                partner_label: 1,
            }),
        }];
        // Mix logit exceeds anchor logit by 1.0 > margin.
        let primary = vec![[0.0, 0.0]];
        let cross = vec![Some([0.0, 1.0])];
        let sup = SupervisedLossConfig { smoothing: 0.0 };
        let obj = oculomix_objective(
            &terms,
            &primary,
            &cross,
            &RankingLossConfig { margin: 0.1 },
            &sup,
        )
        .unwrap();
        let (ce, _) = cross_entropy_smoothed(primary[0], 0.0, 0.0).unwrap();
        assert!((obj.total - ce).abs() < 1e-15);
        assert_eq!(obj.cross_grads[0], Some([0.0, 0.0]));
    }

    #[test]
    fn dangling_anchor_detected() {
        let (terms, primary, mut cross) = tiny_batch();
        cross[0] = None;
        let res = oculomix_objective(
            &terms,
            &primary,
            &cross,
            &RankingLossConfig::default(),
            &SupervisedLossConfig::default(),
        );
        assert_eq!(res.unwrap_err(), LossError::DanglingAnchor { index: 0 });
    }

    #[test]
    fn direct_label_blends_match_formula() {
        let same = CrossTerm {
            order: TemporalOrder::PartnerLater,
            lambda_adjusted: 0.9,
            anchor_label: 1,
            partner_label: 1,
        };
        assert_eq!(same.mixed_label(), 1.0);
        let mixed = CrossTerm {
            order: TemporalOrder::PartnerLater,
            lambda_adjusted: 0.25,
            anchor_label: 0,
            partner_label: 1,
        };
        assert_eq!(mixed.mixed_label(), 0.75);
    }

    #[test]
    fn oculomix_gradients_match_finite_differences() {
        let (terms, primary, cross) = tiny_batch();
        let ranking = RankingLossConfig { margin: 0.1 };
        let sup = SupervisedLossConfig { smoothing: 0.1 };
        let obj = oculomix_objective(&terms, &primary, &cross, &ranking, &sup).unwrap();

        let eval = |primary: &Vec<[f64; 2]>, cross: &Vec<Option<[f64; 2]>>| {
            oculomix_objective(terms.as_slice(), primary, cross, &ranking, &sup)
                .unwrap()
                .total
        };
        for k in 0..terms.len() {
            for j in 0..2 {
                let mut hi = primary.clone();
                let mut lo = primary.clone();
                hi[k][j] += FD_STEP;
                lo[k][j] -= FD_STEP;
                let fd = (eval(&hi, &cross) - eval(&lo, &cross)) / (2.0 * FD_STEP);
                let rel = (obj.primary_grads[k][j] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-5, "primary {k},{j}");
                if let Some(g) = obj.cross_grads[k] {
                    let mut hi = cross.clone();
                    let mut lo = cross.clone();
                    hi[k].as_mut().unwrap()[j] += FD_STEP;
                    lo[k].as_mut().unwrap()[j] -= FD_STEP;
                    let fd = (eval(&primary, &hi) - eval(&primary, &lo)) / (2.0 * FD_STEP);
                    let rel = (g[j] - fd).abs() / fd.abs().max(1e-8);
                    assert!(rel < 1e-5, "cross {k},{j}");
                }
            }
        }
    }

    #[test]
    fn direct_label_gradients_match_finite_differences() {
        let (terms, primary, cross) = tiny_batch();
        let sup = SupervisedLossConfig { smoothing: 0.1 };
        let obj = direct_label_objective(&terms, &primary, &cross, &sup).unwrap();

        let eval = |primary: &Vec<[f64; 2]>, cross: &Vec<Option<[f64; 2]>>| {
            direct_label_objective(terms.as_slice(), primary, cross, &sup)
                .unwrap()
                .total
        };
        for k in 0..terms.len() {
            for j in 0..2 {
                let mut hi = primary.clone();
                let mut lo = primary.clone();
                hi[k][j] += FD_STEP;
                lo[k][j] -= FD_STEP;
                let fd = (eval(&hi, &cross) - eval(&lo, &cross)) / (2.0 * FD_STEP);
                let rel = (obj.primary_grads[k][j] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-5, "primary {k},{j}");
                if let Some(g) = obj.cross_grads[k] {
                    let mut hi = cross.clone();
                    let mut lo = cross.clone();
                    hi[k].as_mut().unwrap()[j] += FD_STEP;
                    lo[k].as_mut().unwrap()[j] -= FD_STEP;
                    let fd = (eval(&primary, &hi) - eval(&primary, &lo)) / (2.0 * FD_STEP);
                    let rel = (g[j] - fd).abs() / fd.abs().max(1e-8);
                    assert!(rel < 1e-5, "cross {k},{j}");
                }
            }
        }
    }

    #[test]
    fn ranking_term_is_translation_invariant() {
        // Inputs on a dyadic grid so shifting the logits is itself exact;
        // the loss must then be bit-identical because only the difference
        // enters.
        let mut rng = crate::stream::rng_for(3, &[]);
        let grid = |rng: &mut rand::rngs::StdRng| {
            f64::from(rng.random_range(-(1 << 20)..(1 << 20))) / f64::from(1 << 10)
        };
        for _ in 0..10_000 {
            let anchor = [grid(&mut rng), grid(&mut rng)];
            let mix = [grid(&mut rng), grid(&mut rng)];
            let shift = grid(&mut rng);
            let order = if rng.random_bool(0.5) {
                TemporalOrder::PartnerLater
            } else {
                TemporalOrder::PartnerEarlier
            };
            let (base, _) =
                ranking_loss(scalar_logit(anchor), scalar_logit(mix), order, 0.1).unwrap();
            let shifted_anchor = [anchor[0] + shift, anchor[1] + shift];
            let shifted_mix = [mix[0] + shift, mix[1] + shift];
            let (shifted, _) = ranking_loss(
                scalar_logit(shifted_anchor),
                scalar_logit(shifted_mix),
                order,
                0.1,
            )
            .unwrap();
            assert_eq!(base, shifted);
        }
    }
}
