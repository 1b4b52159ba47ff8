//! Hierarchy-constrained mixed-sample data augmentation for longitudinal
//! imaging cohorts.
//!
//! Longitudinal ophthalmic datasets have a three-level structure: patients
//! undergo exams at different time points, and each exam produces several
//! images that share one clinical context and outcome label. Conventional
//! CutMix/MixUp pairs arbitrary images and blends their labels, which
//! perturbs patient-specific attributes. This crate constrains the mixing
//! space to that hierarchy instead:
//!
//! - **exam-level** pairing mixes images of the same exam, so the hard label
//!   stays valid;
//! - **patient-level** pairing mixes images from different exams of one
//!   patient and supervises the mixture through its temporal order with a
//!   margin ranking loss, rather than through an ambiguous blended label.
//!
//! The crate ships everything needed to study the effect at desk scale:
//! a synthetic longitudinal cohort generator ([`synth`]), the pairing
//! strategies ([`sampler`]), the mixing kernels ([`msda`]), the training
//! objectives with analytic gradients ([`losses`]), a small differentiable
//! classifier ([`predictor`]), evaluation metrics ([`metrics`]), and a
//! config-driven experiment harness ([`harness`]).

pub mod cohort;
pub mod harness;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod msda;
pub mod predictor;
pub mod sampler;
pub mod stream;
pub mod synth;

pub use cohort::{CohortIndex, Exam, ImageRecord, Laterality, Patient, View};
pub use image::Image;
pub use sampler::{MixPair, PairKind, SamplingStrategy, TemporalOrder};
