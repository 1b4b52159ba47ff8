//! CutMix and MixUp kernels with exact coefficient bookkeeping, and the
//! per-pair supervision dispatch.
//!
//! Both kernels draw their coefficient from Beta(alpha, alpha). CutMix
//! recomputes the coefficient from the realized pasted area after the box
//! is clipped to the grid, so `lambda_adjusted` always equals
//! `1 - pasted_pixels / total_pixels` exactly.
//!
//! Supervision is a pure function of the pair kind: same-exam pairs keep
//! their shared hard label, cross-patient pairs get the area-weighted soft
//! label, and cross-exam pairs carry a ranking reference (anchor exam plus
//! temporal order) instead of a blended label.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::CohortIndex;
use crate::image::Image;
use crate::sampler::{MixPair, PairKind, TemporalOrder};

#[derive(Debug, Error, PartialEq)]
pub enum MsdaError {
    #[error("alpha must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("switch_prob {0} outside [0, 1]")]
    InvalidSwitchProb(f64),
}

/// Which mixing kernel(s) to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugMode {
    None,
    Mixup,
    Cutmix,
    CutmixPlusMixup,
}

impl AugMode {
    pub fn short_name(&self) -> &'static str {
        match self {
            AugMode::None => "no_aug",
            AugMode::Mixup => "mixup",
            AugMode::Cutmix => "cutmix",
            AugMode::CutmixPlusMixup => "cutmix_plus_mixup",
        }
    }
}

fn default_alpha_mixup() -> f64 {
    0.8
}
fn default_alpha_cutmix() -> f64 {
    1.0
}
fn default_switch_prob() -> f64 {
    0.5
}
fn default_mode() -> AugMode {
    AugMode::CutmixPlusMixup
}

/// Augmentation mode and coefficient-distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugConfig {
    #[serde(default = "default_mode")]
    pub mode: AugMode,
    #[serde(default = "default_alpha_mixup")]
    pub alpha_mixup: f64,
    #[serde(default = "default_alpha_cutmix")]
    pub alpha_cutmix: f64,
    /// Probability of choosing CutMix over MixUp in the combined mode.
    #[serde(default = "default_switch_prob")]
    pub switch_prob: f64,
}

impl Default for AugConfig {
    fn default() -> Self {
        AugConfig {
            mode: default_mode(),
            alpha_mixup: default_alpha_mixup(),
            alpha_cutmix: default_alpha_cutmix(),
            switch_prob: default_switch_prob(),
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<(), MsdaError> {
        if self.alpha_mixup <= 0.0 {
            return Err(MsdaError::NonPositiveAlpha(self.alpha_mixup));
        }
        if self.alpha_cutmix <= 0.0 {
            return Err(MsdaError::NonPositiveAlpha(self.alpha_cutmix));
        }
        if !(0.0..=1.0).contains(&self.switch_prob) {
            return Err(MsdaError::InvalidSwitchProb(self.switch_prob));
        }
        Ok(())
    }
}

/// The drawn coefficient and its area-corrected value. They coincide for
/// MixUp; for CutMix the adjusted value reflects the clipped box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixCoefficient {
    pub lambda: f64,
    pub lambda_adjusted: f64,
}

/// Supervision attached to a mixed sample, selected by pair kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Supervision {
    /// Shared exam label; only valid when both sources carry it.
    Hard { label: u8 },
    /// Area-weighted blend `lambda_adjusted * y_anchor + (1 - lambda_adjusted) * y_partner`.
    Soft { y_mix: f64 },
    /// Cross-exam mixture: supervised relative to the anchor exam's own
    /// prediction through the temporal order. Source labels ride along for
    /// the direct-label ablation.
    RankingRef {
        /// Position of the anchor's exam in the index.
        anchor_exam: usize,
        order: TemporalOrder,
        anchor_label: u8,
        partner_label: u8,
    },
}

/// An augmented sample ready for the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSample {
    pub pixels: Image,
    pub supervision: Supervision,
    pub coeff: MixCoefficient,
}

/// Draws `lambda ~ Beta(alpha, alpha)`.
pub fn sample_lambda(alpha: f64, rng: &mut impl Rng) -> Result<f64, MsdaError> {
    if alpha <= 0.0 {
        return Err(MsdaError::NonPositiveAlpha(alpha));
    }
    let beta = Beta::new(alpha, alpha).expect("alpha validated");
    Ok(beta.sample(rng))
}

fn check_shapes(a: &Image, b: &Image) -> Result<(), MsdaError> {
    if a.shape() != b.shape() {
        return Err(MsdaError::ShapeMismatch {
            a: a.shape(),
            b: b.shape(),
        });
    }
    Ok(())
}

/// Elementwise convex blend `lambda * x_a + (1 - lambda) * x_b`. The
/// adjusted coefficient equals `lambda`.
pub fn mixup(x_a: &Image, x_b: &Image, lambda: f64) -> Result<Image, MsdaError> {
    check_shapes(x_a, x_b)?;
    debug_assert!((0.0..=1.0).contains(&lambda));
    let data: Vec<f64> = x_a
        .pixels()
        .iter()
        .zip(x_b.pixels())
        .map(|(&a, &b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    Ok(Image::new(x_a.height(), x_a.width(), data).expect("convex blend stays in range"))
}

/// CutMix with the paste box centered at `(center_row, center_col)`.
/// Box sides are `floor(sqrt(1 - lambda) * side)`, clipped to the grid;
/// the returned coefficient is recomputed from the realized area.
pub fn cutmix_at(
    x_a: &Image,
    x_b: &Image,
    lambda: f64,
    center_row: usize,
    center_col: usize,
) -> Result<(Image, f64), MsdaError> {
    check_shapes(x_a, x_b)?;
    debug_assert!((0.0..=1.0).contains(&lambda));
    let (height, width) = x_a.shape();
    let ratio = (1.0 - lambda).sqrt();
    let box_h = (ratio * height as f64).floor() as i64;
    let box_w = (ratio * width as f64).floor() as i64;

    let row0 = (center_row as i64 - box_h / 2).clamp(0, height as i64);
    let row1 = (center_row as i64 - box_h / 2 + box_h).clamp(0, height as i64);
    let col0 = (center_col as i64 - box_w / 2).clamp(0, width as i64);
    let col1 = (center_col as i64 - box_w / 2 + box_w).clamp(0, width as i64);
    let (row0, row1, col0, col1) = (row0 as usize, row1 as usize, col0 as usize, col1 as usize);

    let mut data = x_a.pixels().to_vec();
    for r in row0..row1 {
        let start = r * width;
        data[start + col0..start + col1].copy_from_slice(&x_b.pixels()[start + col0..start + col1]);
    }
    let pasted = (row1 - row0) * (col1 - col0);
    let lambda_adjusted = 1.0 - pasted as f64 / (height * width) as f64;
    let image = Image::new(height, width, data).expect("pixels copied from valid grids");
    Ok((image, lambda_adjusted))
}

/// CutMix with a uniformly drawn box center.
pub fn cutmix(
    x_a: &Image,
    x_b: &Image,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<(Image, f64), MsdaError> {
    check_shapes(x_a, x_b)?;
    let center_row = rng.random_range(0..x_a.height());
    let center_col = rng.random_range(0..x_a.width());
    cutmix_at(x_a, x_b, lambda, center_row, center_col)
}

/// Applies the configured augmentation to a sampled pair and attaches the
/// supervision dictated by its kind. `AugMode::None` and degenerate pairs
/// pass the anchor through unchanged under its hard label.
pub fn apply_msda(
    pair: &MixPair,
    index: &CohortIndex,
    config: &AugConfig,
    rng: &mut impl Rng,
) -> Result<MixedSample, MsdaError> {
    config.validate()?;
    let anchor = index.image(pair.anchor);
    let anchor_exam = index.exam_of_image(pair.anchor);
    let anchor_label = index.exam(anchor_exam).label;

    if config.mode == AugMode::None || pair.is_degenerate() {
        return Ok(MixedSample {
            pixels: anchor.pixels.clone(),
            supervision: Supervision::Hard { label: anchor_label },
            coeff: MixCoefficient {
                lambda: 1.0,
                lambda_adjusted: 1.0,
            },
        });
    }

    let partner = index.image(pair.partner);
    let partner_label = index.exam(index.exam_of_image(pair.partner)).label;

    let use_cutmix = match config.mode {
        AugMode::Cutmix => true,
        AugMode::Mixup => false,
        AugMode::CutmixPlusMixup => rng.random_bool(config.switch_prob),
        AugMode::None => unreachable!("handled above"),
    };
    let (pixels, coeff) = if use_cutmix {
        let lambda = sample_lambda(config.alpha_cutmix, rng)?;
        let (pixels, lambda_adjusted) = cutmix(&anchor.pixels, &partner.pixels, lambda, rng)?;
        (
            pixels,
            MixCoefficient {
                lambda,
                lambda_adjusted,
            },
        )
    } else {
        let lambda = sample_lambda(config.alpha_mixup, rng)?;
        (
            mixup(&anchor.pixels, &partner.pixels, lambda)?,
            MixCoefficient {
                lambda,
                lambda_adjusted: lambda,
            },
        )
    };

    let supervision = match pair.pair_kind {
        PairKind::SameExam => {
            debug_assert_eq!(anchor_label, partner_label, "labels attach to exams");
            Supervision::Hard { label: anchor_label }
        }
        PairKind::CrossPatient => Supervision::Soft {
            y_mix: coeff.lambda_adjusted * f64::from(anchor_label)
                + (1.0 - coeff.lambda_adjusted) * f64::from(partner_label),
        },
        PairKind::CrossExam => Supervision::RankingRef {
            anchor_exam,
            order: pair.temporal_order.expect("cross-exam pairs carry an order"),
            anchor_label,
            partner_label,
        },
    };

    Ok(MixedSample {
        pixels,
        supervision,
        coeff,
    })
}
