//! The patient -> exam -> image hierarchy and its integrity-checked index.
//!
//! A cohort is a set of patients; each patient has one or more exams at
//! strictly increasing time points (months since baseline); each exam has
//! one or more images. Labels and outcome fields attach to exams, never to
//! individual images. [`CohortIndex`] owns the records, validates every
//! cross-reference at construction, and is immutable afterwards, so shared
//! read access is safe.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Image, ImageError};
use crate::stream::{self, tag};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("image {image_id} references unknown exam {exam_id}")]
    DanglingReference { image_id: String, exam_id: String },
    #[error("patient {patient_id} has two exams at time point {time_point}")]
    DuplicateTimePoint { patient_id: String, time_point: u32 },
    #[error("exam {exam_id} has non-positive event_time")]
    NonPositiveEventTime { exam_id: String },
    #[error("split ratios {0:?} do not sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("cohort has {0} patients; splitting requires at least 3")]
    TooFewPatients(usize),
    #[error("invalid image: {0}")]
    Image(#[from] ImageError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed cohort file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

/// Capture view of a retinal image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Macula,
    Disc,
}

/// Which eye the image was captured from. Metadata only; it does not
/// participate in any pairing constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laterality {
    Left,
    Right,
}

/// One image with its position in the hierarchy and its pixel grid.
#[derive(Debug, Clone)]
pub struct ImageRecord {
    pub image_id: String,
    pub exam_id: String,
    pub patient_id: String,
    pub view: View,
    pub laterality: Laterality,
    pub pixels: Image,
}

/// One patient visit at a single time point. Carries the binary five-year
/// outcome label plus the time-to-event fields used for concordance
/// evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exam {
    pub exam_id: String,
    pub patient_id: String,
    /// Months since the patient's baseline visit.
    pub time_point: u32,
    /// Binary outcome, 0 or 1.
    pub label: u8,
    /// Months from this exam to the event or to censoring; always positive.
    pub event_time: u32,
    pub event_observed: bool,
}

/// A patient and their exams, ordered ascending by time point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patient {
    pub patient_id: String,
    pub exams: Vec<String>,
}

/// The validated cohort: records plus position lookups and the
/// patient->exam->image mappings. Construction via [`build_index`] is the
/// only way to obtain one, so every instance satisfies the hierarchy
/// invariants.
#[derive(Debug, Clone)]
pub struct CohortIndex {
    patients: Vec<Patient>,
    exams: Vec<Exam>,
    images: Vec<ImageRecord>,
    patient_pos: HashMap<String, usize>,
    exam_pos: HashMap<String, usize>,
    image_pos: HashMap<String, usize>,
    /// patient position -> exam positions, ordered by time point.
    exams_of_patient: Vec<Vec<usize>>,
    /// exam position -> image positions, ordered by image id.
    images_of_exam: Vec<Vec<usize>>,
}

impl CohortIndex {
    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn n_exams(&self) -> usize {
        self.exams.len()
    }

    pub fn n_images(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    /// Patients sorted by id.
    pub fn patients(&self) -> &[Patient] {
        &self.patients
    }

    /// Exams sorted by id.
    pub fn exams(&self) -> &[Exam] {
        &self.exams
    }

    /// Images sorted by id.
    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn patient(&self, pos: usize) -> &Patient {
        &self.patients[pos]
    }

    pub fn exam(&self, pos: usize) -> &Exam {
        &self.exams[pos]
    }

    pub fn image(&self, pos: usize) -> &ImageRecord {
        &self.images[pos]
    }

    pub fn patient_position(&self, patient_id: &str) -> Option<usize> {
        self.patient_pos.get(patient_id).copied()
    }

    pub fn exam_position(&self, exam_id: &str) -> Option<usize> {
        self.exam_pos.get(exam_id).copied()
    }

    pub fn image_position(&self, image_id: &str) -> Option<usize> {
        self.image_pos.get(image_id).copied()
    }

    /// Exam positions of a patient, ordered ascending by time point.
    pub fn exams_of_patient(&self, patient_pos: usize) -> &[usize] {
        &self.exams_of_patient[patient_pos]
    }

    /// Image positions of an exam.
    pub fn images_of_exam(&self, exam_pos: usize) -> &[usize] {
        &self.images_of_exam[exam_pos]
    }

    /// The exam an image belongs to, as a position.
    pub fn exam_of_image(&self, image_pos: usize) -> usize {
        self.exam_pos[&self.images[image_pos].exam_id]
    }

    /// The patient an image belongs to, as a position.
    pub fn patient_of_image(&self, image_pos: usize) -> usize {
        self.patient_pos[&self.images[image_pos].patient_id]
    }
}

/// Builds a validated index from image records and exams. Patients are
/// derived from the exams; they are not supplied separately.
pub fn build_index(records: Vec<ImageRecord>, exams: Vec<Exam>) -> Result<CohortIndex, CohortError> {
    let mut exams = exams;
    exams.sort_by(|a, b| a.exam_id.cmp(&b.exam_id));
    let mut exam_pos = HashMap::with_capacity(exams.len());
    for (pos, exam) in exams.iter().enumerate() {
        if exam.event_time == 0 {
            return Err(CohortError::NonPositiveEventTime {
                exam_id: exam.exam_id.clone(),
            });
        }
        if exam_pos.insert(exam.exam_id.clone(), pos).is_some() {
            return Err(CohortError::DuplicateId(exam.exam_id.clone()));
        }
    }

    let mut records = records;
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut image_pos = HashMap::with_capacity(records.len());
    for (pos, record) in records.iter().enumerate() {
        if image_pos.insert(record.image_id.clone(), pos).is_some() {
            return Err(CohortError::DuplicateId(record.image_id.clone()));
        }
        let exam = match exam_pos.get(&record.exam_id) {
            Some(&e) => &exams[e],
            None => {
                return Err(CohortError::DanglingReference {
                    image_id: record.image_id.clone(),
                    exam_id: record.exam_id.clone(),
                })
            }
        };
        if exam.patient_id != record.patient_id {
            return Err(CohortError::DanglingReference {
                image_id: record.image_id.clone(),
                exam_id: record.exam_id.clone(),
            });
        }
    }

    // Group exams per patient in a BTreeMap so patients come out sorted by id.
    let mut by_patient: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (pos, exam) in exams.iter().enumerate() {
        by_patient.entry(exam.patient_id.clone()).or_default().push(pos);
    }
    let mut patients = Vec::with_capacity(by_patient.len());
    let mut exams_of_patient = Vec::with_capacity(by_patient.len());
    let mut patient_pos = HashMap::with_capacity(by_patient.len());
    for (patient_id, mut exam_positions) in by_patient {
        exam_positions.sort_by_key(|&e| exams[e].time_point);
        for pair in exam_positions.windows(2) {
            if exams[pair[0]].time_point == exams[pair[1]].time_point {
                return Err(CohortError::DuplicateTimePoint {
                    patient_id,
                    time_point: exams[pair[0]].time_point,
                });
            }
        }
        patient_pos.insert(patient_id.clone(), patients.len());
        patients.push(Patient {
            patient_id,
            exams: exam_positions.iter().map(|&e| exams[e].exam_id.clone()).collect(),
        });
        exams_of_patient.push(exam_positions);
    }

    let mut images_of_exam = vec![Vec::new(); exams.len()];
    for (pos, record) in records.iter().enumerate() {
        images_of_exam[exam_pos[&record.exam_id]].push(pos);
    }

    Ok(CohortIndex {
        patients,
        exams,
        images: records,
        patient_pos,
        exam_pos,
        image_pos,
        exams_of_patient,
        images_of_exam,
    })
}

/// Partitions a cohort into patient-disjoint train/validation/test indexes.
///
/// Patients are shuffled with a stream derived from `seed`, split counts come
/// from the per-split floors of `ratios`, and leftover patients go to the
/// earliest split. The assignment depends only on the sorted patient ids and
/// the seed.
pub fn split_cohort(
    index: &CohortIndex,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(CohortIndex, CohortIndex, CohortIndex), CohortError> {
    if ratios.iter().any(|&r| r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CohortError::InvalidRatios(ratios));
    }
    let n = index.n_patients();
    if n < 3 {
        return Err(CohortError::TooFewPatients(n));
    }

    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, &mut stream::rng_for(seed, &[tag::SPLIT]));

    let mut counts = [
        (ratios[0] * n as f64).floor() as usize,
        (ratios[1] * n as f64).floor() as usize,
        (ratios[2] * n as f64).floor() as usize,
    ];
    counts[0] += n - counts.iter().sum::<usize>();

    let train: Vec<usize> = order[..counts[0]].to_vec();
    let val: Vec<usize> = order[counts[0]..counts[0] + counts[1]].to_vec();
    let test: Vec<usize> = order[counts[0] + counts[1]..].to_vec();

    Ok((
        subset(index, &train)?,
        subset(index, &val)?,
        subset(index, &test)?,
    ))
}

/// Fisher-Yates with draws from the given stream.
fn shuffle(items: &mut [usize], rng: &mut impl rand::Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

fn subset(index: &CohortIndex, patient_positions: &[usize]) -> Result<CohortIndex, CohortError> {
    let mut exams = Vec::new();
    let mut records = Vec::new();
    for &p in patient_positions {
        for &e in index.exams_of_patient(p) {
            exams.push(index.exam(e).clone());
            for &i in index.images_of_exam(e) {
                records.push(index.image(i).clone());
            }
        }
    }
    build_index(records, exams)
}

// ---------------------------------------------------------------------------
// On-disk format: one JSON file with "patients", "exams", "images" arrays and
// a sidecar binary of little-endian f64 pixel values in row-major order. The
// sidecar sits next to the JSON with the ".pixels" extension.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CohortFile {
    patients: Vec<PatientEntry>,
    exams: Vec<ExamEntry>,
    images: Vec<ImageEntry>,
}

#[derive(Serialize, Deserialize)]
struct PatientEntry {
    patient_id: String,
    exams: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ExamEntry {
    exam_id: String,
    patient_id: String,
    time_point: u32,
    label: u8,
    event_time: u32,
    event_observed: bool,
}

#[derive(Serialize, Deserialize)]
struct ImageEntry {
    image_id: String,
    exam_id: String,
    patient_id: String,
    view: View,
    laterality: Laterality,
    height: usize,
    width: usize,
    /// Byte offset of this image's grid in the pixel sidecar.
    pixel_offset: u64,
}

/// Sidecar path convention: same stem as the JSON, extension `.pixels`.
pub fn sidecar_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("pixels")
}

/// Writes `<path>` (JSON) and its `.pixels` sidecar. Output bytes are a
/// deterministic function of the index contents.
pub fn save_cohort(index: &CohortIndex, json_path: &Path) -> Result<(), CohortError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CohortError::Io { path, source }
    };

    let mut blob: Vec<u8> = Vec::new();
    let mut entries = Vec::with_capacity(index.n_images());
    for record in index.images() {
        let offset = blob.len() as u64;
        for &v in record.pixels.pixels() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(ImageEntry {
            image_id: record.image_id.clone(),
            exam_id: record.exam_id.clone(),
            patient_id: record.patient_id.clone(),
            view: record.view,
            laterality: record.laterality,
            height: record.pixels.height(),
            width: record.pixels.width(),
            pixel_offset: offset,
        });
    }

    let file = CohortFile {
        patients: index
            .patients()
            .iter()
            .map(|p| PatientEntry {
                patient_id: p.patient_id.clone(),
                exams: p.exams.clone(),
            })
            .collect(),
        exams: index
            .exams()
            .iter()
            .map(|e| ExamEntry {
                exam_id: e.exam_id.clone(),
                patient_id: e.patient_id.clone(),
                time_point: e.time_point,
                label: e.label,
                event_time: e.event_time,
                event_observed: e.event_observed,
            })
            .collect(),
        images: entries,
    };

    let json = serde_json::to_vec_pretty(&file).expect("cohort serialization cannot fail");
    if let Some(parent) = json_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err(json_path))?;
        }
    }
    let mut f = std::fs::File::create(json_path).map_err(io_err(json_path))?;
    f.write_all(&json).map_err(io_err(json_path))?;

    let sidecar = sidecar_path(json_path);
    let mut f = std::fs::File::create(&sidecar).map_err(io_err(&sidecar))?;
    f.write_all(&blob).map_err(io_err(&sidecar))?;
    Ok(())
}

/// Loads a cohort written by [`save_cohort`], re-validating every invariant
/// through [`build_index`].
pub fn load_cohort(json_path: &Path) -> Result<CohortIndex, CohortError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CohortError::Io { path, source }
    };
    let malformed = |reason: &str| CohortError::Malformed {
        path: json_path.to_path_buf(),
        reason: reason.to_string(),
    };

    let json = std::fs::read(json_path).map_err(io_err(json_path))?;
    let file: CohortFile = serde_json::from_slice(&json)
        .map_err(|e| malformed(&format!("invalid JSON: {e}")))?;

    let sidecar = sidecar_path(json_path);
    let mut blob = Vec::new();
    std::fs::File::open(&sidecar)
        .and_then(|mut f| f.read_to_end(&mut blob))
        .map_err(io_err(&sidecar))?;

    let mut records = Vec::with_capacity(file.images.len());
    for entry in file.images {
        let n = entry.height * entry.width;
        let start = entry.pixel_offset as usize;
        let end = start + n * 8;
        if end > blob.len() {
            return Err(malformed(&format!(
                "image {} pixel range {start}..{end} exceeds sidecar length {}",
                entry.image_id,
                blob.len()
            )));
        }
        let data: Vec<f64> = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(ImageRecord {
            image_id: entry.image_id,
            exam_id: entry.exam_id,
            patient_id: entry.patient_id,
            view: entry.view,
            laterality: entry.laterality,
            pixels: Image::new(entry.height, entry.width, data)?,
        });
    }

    let exams = file
        .exams
        .into_iter()
        .map(|e| Exam {
            exam_id: e.exam_id,
            patient_id: e.patient_id,
            time_point: e.time_point,
            label: e.label,
            event_time: e.event_time,
            event_observed: e.event_observed,
        })
        .collect();

    build_index(records, exams)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// A small cohort described as patients -> exams (time points) -> image
    /// counts. Pixel grids are flat 8x8 fills so hierarchy tests stay cheap.
    pub fn cohort_from_shape(shape: &[Vec<(u32, usize)>]) -> CohortIndex {
        let mut exams = Vec::new();
        let mut records = Vec::new();
        for (p, patient_exams) in shape.iter().enumerate() {
            let patient_id = format!("p{p:03}");
            for (e, &(time_point, n_images)) in patient_exams.iter().enumerate() {
                let exam_id = format!("{patient_id}_e{e}");
                exams.push(Exam {
                    exam_id: exam_id.clone(),
                    patient_id: patient_id.clone(),
                    time_point,
                    label: (p % 2) as u8,
                    event_time: 12 + time_point,
                    event_observed: p % 3 != 0,
                });
                for i in 0..n_images {
                    records.push(ImageRecord {
                        image_id: format!("{exam_id}_i{i}"),
                        exam_id: exam_id.clone(),
                        patient_id: patient_id.clone(),
                        view: if i % 2 == 0 { View::Macula } else { View::Disc },
                        laterality: if i / 2 % 2 == 0 {
                            Laterality::Left
                        } else {
                            Laterality::Right
                        },
                        pixels: Image::filled(8, 8, (p as f64 * 0.1).min(1.0)).unwrap(),
                    });
                }
            }
        }
        build_index(records, exams).unwrap()
    }
}
