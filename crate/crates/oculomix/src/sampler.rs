//! Pairing strategies for mixed-sample augmentation.
//!
//! Three strategies with increasingly tight hierarchy constraints:
//!
//! - [`SamplingStrategy::ImageLevel`]: the conventional baseline; the
//!   partner is any other image, regardless of patient or exam.
//! - [`SamplingStrategy::ExamLevel`]: the partner comes from the anchor's
//!   own exam, so both images share every clinical attribute and the label.
//! - [`SamplingStrategy::PatientExamLevel`]: with probability `p_cross` the
//!   partner comes from a different exam of the same patient (carrying a
//!   temporal order instead of a blended label); otherwise exam-level.
//!
//! Anchors are always drawn uniformly over images; the partner is drawn
//! under the strategy's constraint. [`verify_pairs`] is the independent
//! constraint checker used by the test suites.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::CohortIndex;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("cannot sample from an empty cohort")]
    EmptyIndex,
    #[error("p_cross {0} outside [0, 1]")]
    InvalidPCross(f64),
}

fn default_p_cross() -> f64 {
    0.5
}

/// How mix partners are constrained relative to the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Unconstrained pairing over all images.
    ImageLevel,
    /// Partner restricted to the anchor's exam.
    ExamLevel,
    /// Partner from a different exam of the same patient with probability
    /// `p_cross`, exam-level otherwise.
    PatientExamLevel {
        #[serde(default = "default_p_cross")]
        p_cross: f64,
    },
}

impl SamplingStrategy {
    /// Patient+Exam pairing with the default cross-exam probability.
    pub fn patient_exam() -> Self {
        SamplingStrategy::PatientExamLevel {
            p_cross: default_p_cross(),
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if let SamplingStrategy::PatientExamLevel { p_cross } = self {
            if !(0.0..=1.0).contains(p_cross) {
                return Err(SamplerError::InvalidPCross(*p_cross));
            }
        }
        Ok(())
    }

    /// Short name used in output tables and directory names.
    pub fn short_name(&self) -> &'static str {
        match self {
            SamplingStrategy::PatientExamLevel { .. } => "patient_exam",
            SamplingStrategy::ExamLevel => "exam",
            SamplingStrategy::ImageLevel => "image",
        }
    }
}

/// Hierarchy relation between the two images of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    SameExam,
    CrossExam,
    CrossPatient,
}

/// Sign of `t_partner - t_anchor` for a cross-exam pair. Never zero: exams
/// of one patient have pairwise distinct time points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalOrder {
    /// The partner exam is later than the anchor exam (+1).
    PartnerLater,
    /// The partner exam is earlier than the anchor exam (-1).
    PartnerEarlier,
}

impl TemporalOrder {
    pub fn sign(self) -> f64 {
        match self {
            TemporalOrder::PartnerLater => 1.0,
            TemporalOrder::PartnerEarlier => -1.0,
        }
    }

    pub fn from_times(t_anchor: u32, t_partner: u32) -> Option<Self> {
        use std::cmp::Ordering;
        match t_partner.cmp(&t_anchor) {
            Ordering::Greater => Some(TemporalOrder::PartnerLater),
            Ordering::Less => Some(TemporalOrder::PartnerEarlier),
            Ordering::Equal => None,
        }
    }
}

/// A sampled anchor/partner pair. Positions refer to the image order of the
/// index the pair was drawn from. `temporal_order` is present exactly for
/// cross-exam pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixPair {
    pub anchor: usize,
    pub partner: usize,
    pub pair_kind: PairKind,
    pub temporal_order: Option<TemporalOrder>,
}

impl MixPair {
    /// A pair mixing the anchor with itself; used when a singleton exam
    /// leaves no other partner. Mixing is then the identity.
    pub fn degenerate(anchor: usize) -> Self {
        MixPair {
            anchor,
            partner: anchor,
            pair_kind: PairKind::SameExam,
            temporal_order: None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.anchor == self.partner
    }
}

/// Classifies a pair of image positions from their hierarchy ids.
fn classify(index: &CohortIndex, anchor: usize, partner: usize) -> (PairKind, Option<TemporalOrder>) {
    let (ea, ep) = (index.exam_of_image(anchor), index.exam_of_image(partner));
    if ea == ep {
        return (PairKind::SameExam, None);
    }
    if index.image(anchor).patient_id == index.image(partner).patient_id {
        let order =
            TemporalOrder::from_times(index.exam(ea).time_point, index.exam(ep).time_point)
                .expect("exam time points of one patient are distinct");
        return (PairKind::CrossExam, Some(order));
    }
    (PairKind::CrossPatient, None)
}

/// Uniform partner from the anchor's exam, excluding the anchor itself;
/// falls back to the anchor when the exam has a single image.
pub fn same_exam_partner(index: &CohortIndex, anchor: usize, rng: &mut impl Rng) -> usize {
    let exam = index.exam_of_image(anchor);
    let images = index.images_of_exam(exam);
    if images.len() == 1 {
        return anchor;
    }
    let own = images.iter().position(|&i| i == anchor).expect("anchor in its exam");
    let mut pick = rng.random_range(0..images.len() - 1);
    if pick >= own {
        pick += 1;
    }
    images[pick]
}

fn sample_pair(
    index: &CohortIndex,
    strategy: &SamplingStrategy,
    rng: &mut impl Rng,
) -> MixPair {
    let n_images = index.n_images();
    let anchor = rng.random_range(0..n_images);
    match strategy {
        SamplingStrategy::ImageLevel => {
            if n_images == 1 {
                return MixPair::degenerate(anchor);
            }
            let mut partner = rng.random_range(0..n_images - 1);
            if partner >= anchor {
                partner += 1;
            }
            let (pair_kind, temporal_order) = classify(index, anchor, partner);
            MixPair {
                anchor,
                partner,
                pair_kind,
                temporal_order,
            }
        }
        SamplingStrategy::ExamLevel => {
            let partner = same_exam_partner(index, anchor, rng);
            MixPair {
                anchor,
                partner,
                pair_kind: PairKind::SameExam,
                temporal_order: None,
            }
        }
        SamplingStrategy::PatientExamLevel { p_cross } => {
            let patient = index.patient_of_image(anchor);
            let exams = index.exams_of_patient(patient);
            let cross = exams.len() >= 2 && rng.random_bool(*p_cross);
            if !cross {
                let partner = same_exam_partner(index, anchor, rng);
                return MixPair {
                    anchor,
                    partner,
                    pair_kind: PairKind::SameExam,
                    temporal_order: None,
                };
            }
            // Uniform over the OTHER exams first, then over that exam's
            // images, so image-rich exams are not over-weighted.
            let anchor_exam = index.exam_of_image(anchor);
            let own = exams.iter().position(|&e| e == anchor_exam).expect("exam of anchor");
            let mut pick = rng.random_range(0..exams.len() - 1);
            if pick >= own {
                pick += 1;
            }
            let partner_exam = exams[pick];
            let images = index.images_of_exam(partner_exam);
            let partner = images[rng.random_range(0..images.len())];
            let order = TemporalOrder::from_times(
                index.exam(anchor_exam).time_point,
                index.exam(partner_exam).time_point,
            )
            .expect("distinct time points");
            MixPair {
                anchor,
                partner,
                pair_kind: PairKind::CrossExam,
                temporal_order: Some(order),
            }
        }
    }
}

/// Draws `batch_size` constraint-respecting pairs. Deterministic given the
/// rng state; callers derive per-batch streams from `(seed, batch ordinal)`.
pub fn sample_batch(
    index: &CohortIndex,
    strategy: &SamplingStrategy,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<Vec<MixPair>, SamplerError> {
    strategy.validate()?;
    if index.n_images() == 0 {
        return Err(SamplerError::EmptyIndex);
    }
    Ok((0..batch_size)
        .map(|_| sample_pair(index, strategy, rng))
        .collect())
}

/// Counts pairs violating the strategy's constraint set: the recorded kind
/// must match the ids, the temporal order must be present exactly for
/// cross-exam pairs and carry the right sign, and the kind itself must be
/// admissible under the strategy.
pub fn verify_pairs(
    pairs: &[MixPair],
    index: &CohortIndex,
    strategy: &SamplingStrategy,
) -> usize {
    pairs
        .iter()
        .filter(|pair| !pair_is_valid(pair, index, strategy))
        .count()
}

fn pair_is_valid(pair: &MixPair, index: &CohortIndex, strategy: &SamplingStrategy) -> bool {
    if pair.anchor >= index.n_images() || pair.partner >= index.n_images() {
        return false;
    }
    let (kind, order) = classify(index, pair.anchor, pair.partner);
    if pair.pair_kind != kind || pair.temporal_order != order {
        return false;
    }
    match strategy {
        SamplingStrategy::ImageLevel => true,
        SamplingStrategy::ExamLevel => kind == PairKind::SameExam,
        SamplingStrategy::PatientExamLevel { .. } => kind != PairKind::CrossPatient,
    }
}
