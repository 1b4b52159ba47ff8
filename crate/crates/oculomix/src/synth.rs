//! Synthetic longitudinal cohorts with two priors built in by construction:
//! images of one exam share a single latent state and label, and each
//! patient's latent morbidity is non-decreasing over time.
//!
//! Every patient owns a scalar morbidity trajectory `z(t) = base + rate * t`
//! and a fixed low-frequency nuisance texture. An image is the nuisance
//! pattern plus a disease blob of amplitude `sigmoid(z)` on a fixed central
//! disc region, plus Gaussian pixel noise. Because the disease signal is
//! localized, a CutMix box sometimes pastes it and sometimes does not, so
//! cross-patient mixing visibly corrupts the label/content relationship
//! while within-hierarchy mixing does not.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{build_index, CohortError, CohortIndex, Exam, ImageRecord, Laterality, View};
use crate::image::Image;
use crate::stream::{self, tag};

/// Follow-up horizon in months; later events are censored here.
pub const CENSOR_HORIZON_MONTHS: u32 = 120;

/// Bounds (inclusive) of the gap between consecutive exams, in months.
const EXAM_GAP_MONTHS: (u32, u32) = (6, 18);

/// Images per exam when an exam has more than one.
const MULTI_IMAGE_RANGE: (usize, usize) = (2, 4);

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("cohort is empty")]
    EmptyCohort,
    #[error(transparent)]
    Cohort(#[from] CohortError),
}

fn default_n_patients() -> usize {
    1000
}
fn default_p_multi_exam() -> f64 {
    0.365
}
fn default_p_multi_image() -> f64 {
    0.4446
}
fn default_max_exams() -> u32 {
    4
}
fn default_image_size() -> (usize, usize) {
    (32, 32)
}
fn default_base_range() -> (f64, f64) {
    (-2.0, 1.0)
}
fn default_rate_range() -> (f64, f64) {
    (0.0, 0.03)
}
fn default_label_threshold() -> f64 {
    0.0
}
fn default_label_noise() -> f64 {
    0.5
}
fn default_nuisance_strength() -> f64 {
    0.25
}
fn default_pixel_noise_sd() -> f64 {
    0.05
}

/// Generator parameters. The multi-exam and multi-image probabilities
/// default to the hierarchy marginals of a large longitudinal ophthalmic
/// cohort (36.50% of patients with two or more exams, 44.46% of exams with
/// two or more images).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default = "default_n_patients")]
    pub n_patients: usize,
    /// Probability that a patient has two or more exams.
    #[serde(default = "default_p_multi_exam")]
    pub p_multi_exam: f64,
    /// Probability that an exam has two or more images.
    #[serde(default = "default_p_multi_image")]
    pub p_multi_image: f64,
    #[serde(default = "default_max_exams")]
    pub max_exams_per_patient: u32,
    /// (height, width) of every generated image.
    #[serde(default = "default_image_size")]
    pub image_size: (usize, usize),
    /// Uniform range for a patient's baseline morbidity.
    #[serde(default = "default_base_range")]
    pub morbidity_base_range: (f64, f64),
    /// Uniform range for the per-month morbidity increase; non-negative.
    #[serde(default = "default_rate_range")]
    pub morbidity_rate_range: (f64, f64),
    /// Threshold the latent state must cross for a positive outcome.
    #[serde(default = "default_label_threshold")]
    pub label_threshold: f64,
    /// Scale of the logistic noise added to the latent state when drawing
    /// labels. Zero makes labels a deterministic threshold.
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
    /// Amplitude of the per-patient nuisance texture.
    #[serde(default = "default_nuisance_strength")]
    pub nuisance_strength: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    #[serde(default = "default_pixel_noise_sd")]
    pub pixel_noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |msg: &str| Err(SynthError::InvalidConfig(msg.to_string()));
        if self.n_patients == 0 {
            return err("n_patients must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_multi_exam) || !(0.0..=1.0).contains(&self.p_multi_image) {
            return err("probabilities must lie in [0, 1]");
        }
        if self.max_exams_per_patient < 2 {
            return err("max_exams_per_patient must be at least 2");
        }
        if self.image_size.0 < 8 || self.image_size.1 < 8 {
            return err("image_size must be at least 8x8");
        }
        if self.morbidity_base_range.0 > self.morbidity_base_range.1 {
            return err("morbidity_base_range is inverted");
        }
        if self.morbidity_rate_range.0 > self.morbidity_rate_range.1
            || self.morbidity_rate_range.0 < 0.0
        {
            return err("morbidity_rate_range must be a non-negative interval");
        }
        if self.label_noise < 0.0 || self.nuisance_strength < 0.0 || self.pixel_noise_sd < 0.0 {
            return err("noise scales must be non-negative");
        }
        Ok(())
    }
}

/// Per-patient latent state. `z(t) = base + rate * t` is non-decreasing
/// because `rate` is non-negative.
#[derive(Debug, Clone, Copy)]
pub struct LatentState {
    pub base: f64,
    pub rate: f64,
    /// Seed of the patient's nuisance texture. The low 16 bits encode the
    /// normalized baseline morbidity, so the rendered texture carries the
    /// patient's attribute signal the way age and comorbidity mark a real
    /// retina; the high bits randomize the distractor components.
    pub nuisance_seed: u64,
}

impl LatentState {
    pub fn z(&self, time_point: u32) -> f64 {
        self.base + self.rate * f64::from(time_point)
    }
}

/// Packs a texture seed from random bits and the normalized baseline
/// morbidity (clamped to [0, 1]).
pub fn nuisance_seed(random_bits: u32, base_norm: f64) -> u64 {
    let quantized = (base_norm.clamp(0.0, 1.0) * f64::from(u16::MAX)).round() as u64;
    (u64::from(random_bits) << 32) | quantized
}

fn decode_base_norm(seed: u64) -> f64 {
    (seed & 0xffff) as f64 / f64::from(u16::MAX)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The fixed central region carrying the disease signal: a disc of radius
/// `min(H, W) / 4` around the grid center.
pub fn disc_mask(height: usize, width: usize) -> Vec<bool> {
    let ch = (height as f64 - 1.0) / 2.0;
    let cw = (width as f64 - 1.0) / 2.0;
    let radius = height.min(width) as f64 / 4.0;
    let mut mask = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let dr = r as f64 - ch;
            let dc = c as f64 - cw;
            mask.push(dr * dr + dc * dc <= radius * radius);
        }
    }
    mask
}

/// Mean intensity over the central disc region.
pub fn disc_mean(image: &Image) -> f64 {
    let mask = disc_mask(image.height(), image.width());
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&px, &inside) in image.pixels().iter().zip(&mask) {
        if inside {
            sum += px;
            count += 1;
        }
    }
    sum / count as f64
}

/// Patient-specific texture, fixed via `nuisance_seed` and normalized to
/// [0, 1]. Two parts:
///
/// - an **attribute lobe**: a bright Gaussian blob on a ring around the
///   central disc whose angular position encodes the patient's baseline
///   morbidity. Reading it takes a nonlinear position decode, so it behaves
///   like the clinical attributes the hierarchy is meant to preserve:
///   within-patient mixing keeps the lobe where it belongs, cross-patient
///   mixing produces attribute chimeras;
/// - two low-frequency cosine distractors from the random seed bits. Only
///   these shift with the capture view (the disc view samples them offset
///   by an eighth of the width), so images of one exam differ in texture
///   framing but agree on the attribute lobe.
fn nuisance_field(latent: &LatentState, height: usize, width: usize, view: View) -> Vec<f64> {
    use rand::SeedableRng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(latent.nuisance_seed);
    let components: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.random_range(1..=2) as f64,
                rng.random_range(1..=2) as f64,
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let col_shift = match view {
        View::Macula => 0.0,
        View::Disc => width as f64 / 8.0,
    };

    // Three-quarter arc so the lowest and highest baselines do not land on
    // the same spot.
    let angle = decode_base_norm(latent.nuisance_seed) * 1.5 * std::f64::consts::PI;
    let ring_radius = 0.375 * height.min(width) as f64;
    let sigma = height.min(width) as f64 / 8.0;
    let center_r = (height as f64 - 1.0) / 2.0 + ring_radius * angle.sin();
    let center_c = (width as f64 - 1.0) / 2.0 + ring_radius * angle.cos();

    let mut field = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let u = r as f64 / height as f64;
            let v = (c as f64 + col_shift) / width as f64;
            let mut texture = 0.0;
            for &(fu, fv, phase) in &components {
                texture += (std::f64::consts::TAU * (fu * u + fv * v) + phase).cos();
            }
            let dr = r as f64 - center_r;
            let dc = c as f64 - center_c;
            let lobe = (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp();
            field.push(0.55 * lobe + 0.45 * (2.0 + texture) / 4.0);
        }
    }
    field
}

/// Renders one image: nuisance texture + disease disc of amplitude
/// `sigmoid(z)` + Gaussian noise, clamped to [0, 1]. With zero noise the
/// output is a pure function of (latent, z, view, size).
pub fn render_image(
    latent: &LatentState,
    z: f64,
    view: View,
    height: usize,
    width: usize,
    nuisance_strength: f64,
    pixel_noise_sd: f64,
    rng: &mut impl Rng,
) -> Image {
    let field = nuisance_field(latent, height, width, view);
    let mask = disc_mask(height, width);
    let amplitude = sigmoid(z);
    let noise = if pixel_noise_sd > 0.0 {
        Some(Normal::new(0.0, pixel_noise_sd).expect("validated sd"))
    } else {
        None
    };
    let mut data = Vec::with_capacity(height * width);
    for i in 0..height * width {
        let mut v = nuisance_strength * field[i];
        if mask[i] {
            v += amplitude;
        }
        if let Some(n) = &noise {
            v += n.sample(rng);
        }
        data.push(v);
    }
    Image::from_clamped(height, width, data).expect("size validated by config")
}

/// First month at which the noiseless trajectory reaches the threshold,
/// or None if it never does.
fn crossing_month(latent: &LatentState, threshold: f64) -> Option<u32> {
    if latent.base >= threshold {
        return Some(0);
    }
    if latent.rate <= 0.0 {
        return None;
    }
    let t = ((threshold - latent.base) / latent.rate).ceil();
    if t <= f64::from(u32::MAX) {
        Some(t as u32)
    } else {
        None
    }
}

/// Time-to-event fields for an exam at `time_point`, applying the fixed
/// censoring horizon. The returned event_time is always at least 1.
fn event_fields(crossing: Option<u32>, time_point: u32) -> (u32, bool) {
    match crossing {
        Some(cross) => {
            let remaining = (i64::from(cross) - i64::from(time_point)).max(1) as u32;
            if remaining > CENSOR_HORIZON_MONTHS {
                (CENSOR_HORIZON_MONTHS, false)
            } else {
                (remaining, true)
            }
        }
        None => (CENSOR_HORIZON_MONTHS, false),
    }
}

const VIEW_CYCLE: [(View, Laterality); 4] = [
    (View::Macula, Laterality::Left),
    (View::Disc, Laterality::Left),
    (View::Macula, Laterality::Right),
    (View::Disc, Laterality::Right),
];

/// Generates a cohort in which both hierarchy priors hold by construction.
/// Fully deterministic given the config (including its seed): each patient
/// draws from an independent stream derived from `(seed, patient ordinal)`.
pub fn generate_cohort(config: &SynthConfig) -> Result<CohortIndex, SynthError> {
    config.validate()?;
    let (height, width) = config.image_size;
    let mut exams = Vec::new();
    let mut records = Vec::new();

    for p in 0..config.n_patients {
        let mut rng = stream::rng_for(config.seed, &[tag::PATIENT, p as u64]);
        let patient_id = format!("p{p:05}");

        let base = rng.random_range(config.morbidity_base_range.0..=config.morbidity_base_range.1);
        let rate = rng.random_range(config.morbidity_rate_range.0..=config.morbidity_rate_range.1);
        let (lo, hi) = config.morbidity_base_range;
        let base_norm = if hi > lo { (base - lo) / (hi - lo) } else { 0.5 };
        let latent = LatentState {
            base,
            rate,
            nuisance_seed: nuisance_seed(rng.random(), base_norm),
        };
        let crossing = crossing_month(&latent, config.label_threshold);

        let n_exams = if rng.random_bool(config.p_multi_exam) {
            rng.random_range(2..=config.max_exams_per_patient)
        } else {
            1
        };

        let mut time_point = 0u32;
        for e in 0..n_exams {
            if e > 0 {
                time_point += rng.random_range(EXAM_GAP_MONTHS.0..=EXAM_GAP_MONTHS.1);
            }
            let exam_id = format!("{patient_id}_e{e}");
            let z = latent.z(time_point);

            // Logistic noise via inverse CDF; scale zero degrades to the
            // deterministic threshold rule.
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            let noise = config.label_noise * (u / (1.0 - u)).ln();
            let label = u8::from(z + noise > config.label_threshold);

            let (event_time, event_observed) = event_fields(crossing, time_point);
            exams.push(Exam {
                exam_id: exam_id.clone(),
                patient_id: patient_id.clone(),
                time_point,
                label,
                event_time,
                event_observed,
            });

            let n_images = if rng.random_bool(config.p_multi_image) {
                rng.random_range(MULTI_IMAGE_RANGE.0..=MULTI_IMAGE_RANGE.1)
            } else {
                1
            };
            for i in 0..n_images {
                let (view, laterality) = VIEW_CYCLE[i % VIEW_CYCLE.len()];
                records.push(ImageRecord {
                    image_id: format!("{exam_id}_i{i}"),
                    exam_id: exam_id.clone(),
                    patient_id: patient_id.clone(),
                    view,
                    laterality,
                    pixels: render_image(
                        &latent,
                        z,
                        view,
                        height,
                        width,
                        config.nuisance_strength,
                        config.pixel_noise_sd,
                        &mut rng,
                    ),
                });
            }
        }
    }

    Ok(build_index(records, exams)?)
}

/// Aggregate description of a cohort.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CohortSummary {
    pub n_patients: usize,
    pub n_exams: usize,
    pub n_images: usize,
    /// Fraction of patients with two or more exams.
    pub multi_exam_fraction: f64,
    /// Fraction of exams with two or more images.
    pub multi_image_fraction: f64,
    /// Fraction of exams with a positive label.
    pub label_prevalence: f64,
}

pub fn cohort_summary(index: &CohortIndex) -> Result<CohortSummary, SynthError> {
    if index.is_empty() {
        return Err(SynthError::EmptyCohort);
    }
    let multi_exam = (0..index.n_patients())
        .filter(|&p| index.exams_of_patient(p).len() >= 2)
        .count();
    let multi_image = (0..index.n_exams())
        .filter(|&e| index.images_of_exam(e).len() >= 2)
        .count();
    let positive = index.exams().iter().filter(|e| e.label == 1).count();
    Ok(CohortSummary {
        n_patients: index.n_patients(),
        n_exams: index.n_exams(),
        n_images: index.n_images(),
        multi_exam_fraction: multi_exam as f64 / index.n_patients() as f64,
        multi_image_fraction: multi_image as f64 / index.n_exams() as f64,
        label_prevalence: positive as f64 / index.n_exams() as f64,
    })
}
