//! Config-driven experiment runner: cohort -> split -> train -> evaluate,
//! plus multi-cell sweeps with mean +/- sd comparison tables.
//!
//! A run is fully described by an [`ExperimentConfig`]; identical configs
//! (including the seed) produce byte-identical `metrics.csv` and
//! `summary.json`. Every stochastic stream is derived from the experiment
//! seed and an ordinal, so sweep cells can execute concurrently without
//! changing any result.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{load_cohort, split_cohort, CohortError, CohortIndex};
use crate::losses::{
    direct_label_objective, oculomix_objective, scalar_logit, AnchorTerm, LossError,
    RankingLossConfig, SupervisedLossConfig,
};
use crate::metrics::{auprc, auroc, c_index, MetricsError, ScoredOutcome};
use crate::msda::{apply_msda, AugConfig, AugMode, MixedSample, MsdaError};
use crate::predictor::{
    backward, forward, load_checkpoint, save_checkpoint, train_step, AdamState, Grads, LrSchedule,
    Params, PredictorConfig, PredictorError, TrainConfig,
};
use crate::sampler::{
    sample_batch, same_exam_partner, MixPair, PairKind, SamplerError, SamplingStrategy,
};
use crate::stream::{self, tag};
use crate::synth::{generate_cohort, SynthConfig, SynthError};

/// Environment variable that overrides the config seed when set.
pub const SEED_ENV_VAR: &str = "OCULOMIX_SEED";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Msda(#[from] MsdaError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where the cohort comes from: a saved cohort file or an inline generator
/// config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortSource {
    Path(PathBuf),
    Synth(SynthConfig),
}

/// Supervision of cross-exam mixtures: temporal-order ranking or direct
/// cross-entropy against the blended label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisionMode {
    Ranking,
    DirectLabel,
}

impl SupervisionMode {
    pub fn short_name(&self) -> &'static str {
        match self {
            SupervisionMode::Ranking => "ranking",
            SupervisionMode::DirectLabel => "direct_label",
        }
    }
}

fn default_ratios() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

/// Patient-disjoint split fractions for train/validation/test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: default_ratios(),
        }
    }
}

/// A fully seeded experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub cohort: CohortSource,
    pub strategy: SamplingStrategy,
    #[serde(default)]
    pub aug: AugConfig,
    #[serde(default = "default_supervision")]
    pub supervision: SupervisionMode,
    #[serde(default)]
    pub ranking: RankingLossConfig,
    #[serde(default)]
    pub sup: SupervisedLossConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn default_supervision() -> SupervisionMode {
    SupervisionMode::Ranking
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.strategy
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.aug
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.ranking
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.sup
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.predictor
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        if let CohortSource::Synth(synth) = &self.cohort {
            synth
                .validate()
                .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        }
        if self.supervision == SupervisionMode::DirectLabel
            && !matches!(self.strategy, SamplingStrategy::PatientExamLevel { .. })
        {
            return Err(HarnessError::InvalidConfig(
                "direct_label supervision is only meaningful with the patient_exam strategy"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Applies the `OCULOMIX_SEED` override when the variable is set.
    pub fn with_env_seed(mut self) -> Result<Self, HarnessError> {
        if let Ok(raw) = std::env::var(SEED_ENV_VAR) {
            let seed = raw.parse::<u64>().map_err(|_| {
                HarnessError::InvalidConfig(format!("{SEED_ENV_VAR}={raw} is not a valid u64"))
            })?;
            self.seed = seed;
        }
        Ok(self)
    }
}

/// FNV-1a hash of the canonical JSON form; any config change changes it.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in json.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// One validation row of the per-epoch log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auroc: f64,
    pub val_auprc: f64,
    pub learning_rate: f64,
}

/// Final test metrics of a run. `wall_seconds` is informational only and is
/// excluded from `summary.json` so identical seeds reproduce identical
/// bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub test_auroc: f64,
    pub test_auprc: f64,
    pub test_c_index: f64,
    #[serde(skip)]
    pub wall_seconds: f64,
    pub config_hash: String,
}

/// Per-epoch rows plus the final summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub epochs: Vec<EpochRow>,
    pub summary: RunSummary,
}

/// Checkpoint header written next to the parameter blob: the experiment
/// config (which contains the split spec), the final step, and the seed all
/// streams derive from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub experiment: ExperimentConfig,
    pub step: usize,
    pub rng_seed: u64,
}

fn resolve_cohort(config: &ExperimentConfig) -> Result<CohortIndex, HarnessError> {
    match &config.cohort {
        CohortSource::Path(path) => Ok(load_cohort(path)?),
        CohortSource::Synth(synth) => Ok(generate_cohort(synth)?),
    }
}

/// Scores every image of a split under the scalar-logit convention.
fn score_split(params: &Params, index: &CohortIndex) -> Result<Vec<ScoredOutcome>, HarnessError> {
    let mut outcomes = Vec::with_capacity(index.n_images());
    for (i, record) in index.images().iter().enumerate() {
        let (logits, _) = forward(params, &record.pixels)?;
        let exam = index.exam(index.exam_of_image(i));
        outcomes.push(ScoredOutcome {
            score: scalar_logit(logits),
            label: exam.label,
            event_time: f64::from(exam.event_time),
            event_observed: exam.event_observed,
        });
    }
    Ok(outcomes)
}

/// An anchor's samples for one step: the same-time sample and, for
/// cross-exam pairs, the cross-time mixture that ranks against it.
struct AnchorGroup {
    primary: MixedSample,
    cross: Option<MixedSample>,
}

/// Builds the per-anchor groups for a batch of pairs. Cross-exam pairs also
/// get a same-exam companion so the anchor has its own prediction for the
/// ranking (or direct-label) term.
fn build_groups(
    index: &CohortIndex,
    pairs: &[MixPair],
    aug: &AugConfig,
    rng: &mut impl rand::Rng,
) -> Result<Vec<AnchorGroup>, HarnessError> {
    let mut groups = Vec::with_capacity(pairs.len());
    for pair in pairs {
        if pair.pair_kind == PairKind::CrossExam {
            let cross = apply_msda(pair, index, aug, rng)?;
            let companion = MixPair {
                anchor: pair.anchor,
                partner: same_exam_partner(index, pair.anchor, rng),
                pair_kind: PairKind::SameExam,
                temporal_order: None,
            };
            let primary = apply_msda(&companion, index, aug, rng)?;
            groups.push(AnchorGroup {
                primary,
                cross: Some(cross),
            });
        } else {
            groups.push(AnchorGroup {
                primary: apply_msda(pair, index, aug, rng)?,
                cross: None,
            });
        }
    }
    Ok(groups)
}

/// Trains under the configured strategy and writes `metrics.csv`,
/// `summary.json`, and `checkpoint.bin` into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsLog, HarnessError> {
    let started = Instant::now();
    let config = config.clone().with_env_seed()?;
    config.validate()?;
    let hash = config_hash(&config);

    let index = resolve_cohort(&config)?;
    let (train_idx, val_idx, test_idx) = split_cohort(&index, config.split.ratios, config.seed)?;

    // The weight-init stream mixes the experiment seed with the predictor's
    // own seed so sweep seeds vary the init too.
    let mut predictor_cfg = config.predictor;
    predictor_cfg.seed = stream::derive(config.seed, &[tag::INIT, config.predictor.seed]);
    let mut params = Params::init(predictor_cfg)?;
    let mut opt = AdamState::zeros(&params);
    let mut grads = Grads::zeros(&params);

    let steps_per_epoch = train_idx.n_images().div_ceil(config.train.batch_size).max(1);
    let schedule = LrSchedule::from_config(&config.train, steps_per_epoch);

    let mut rows = Vec::with_capacity(config.train.epochs);
    for epoch in 1..=config.train.epochs {
        let mut loss_sum = 0.0;
        let mut last_lr = 0.0;
        for step_in_epoch in 0..steps_per_epoch {
            let step = (epoch - 1) * steps_per_epoch + step_in_epoch;
            let mut rng = stream::rng_for(config.seed, &[tag::BATCH, step as u64]);
            let pairs = sample_batch(
                &train_idx,
                &config.strategy,
                config.train.batch_size,
                &mut rng,
            )?;
            let groups = build_groups(&train_idx, &pairs, &config.aug, &mut rng)?;

            let mut terms = Vec::with_capacity(groups.len());
            let mut primary_logits = Vec::with_capacity(groups.len());
            let mut primary_caches = Vec::with_capacity(groups.len());
            let mut cross_logits = Vec::with_capacity(groups.len());
            let mut cross_caches = Vec::with_capacity(groups.len());
            for group in &groups {
                terms.push(AnchorTerm::from_samples(
                    &group.primary,
                    group.cross.as_ref(),
                )?);
                let (logits, cache) = forward(&params, &group.primary.pixels)?;
                primary_logits.push(logits);
                primary_caches.push(cache);
                match &group.cross {
                    Some(sample) => {
                        let (logits, cache) = forward(&params, &sample.pixels)?;
                        cross_logits.push(Some(logits));
                        cross_caches.push(Some(cache));
                    }
                    None => {
                        cross_logits.push(None);
                        cross_caches.push(None);
                    }
                }
            }

            let objective = match config.supervision {
                SupervisionMode::Ranking => oculomix_objective(
                    &terms,
                    &primary_logits,
                    &cross_logits,
                    &config.ranking,
                    &config.sup,
                )?,
                SupervisionMode::DirectLabel => {
                    direct_label_objective(&terms, &primary_logits, &cross_logits, &config.sup)?
                }
            };

            grads.reset();
            for k in 0..groups.len() {
                backward(&params, &primary_caches[k], objective.primary_grads[k], &mut grads)?;
                if let (Some(cache), Some(grad)) = (&cross_caches[k], objective.cross_grads[k]) {
                    backward(&params, cache, grad, &mut grads)?;
                }
            }
            last_lr = train_step(&mut params, &mut opt, &grads, step, &config.train, &schedule)?;
            loss_sum += objective.total;
        }

        let val = score_split(&params, &val_idx)?;
        rows.push(EpochRow {
            epoch,
            train_loss: loss_sum / steps_per_epoch as f64,
            val_auroc: auroc(&val)?,
            val_auprc: auprc(&val)?,
            learning_rate: last_lr,
        });
    }

    let test = score_split(&params, &test_idx)?;
    let summary = RunSummary {
        test_auroc: auroc(&test)?,
        test_auprc: auprc(&test)?,
        test_c_index: c_index(&test)?,
        wall_seconds: started.elapsed().as_secs_f64(),
        config_hash: hash,
    };
    let log = MetricsLog {
        epochs: rows,
        summary,
    };

    write_outputs(&config, &log, &params)?;
    Ok(log)
}

fn write_outputs(
    config: &ExperimentConfig,
    log: &MetricsLog,
    params: &Params,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;

    let csv_path = config.output_dir.join("metrics.csv");
    let mut csv = String::from("epoch,train_loss,val_auroc,val_auprc,learning_rate\n");
    for row in &log.epochs {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epoch, row.train_loss, row.val_auroc, row.val_auprc, row.learning_rate
        ));
    }
    std::fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;

    let summary_path = config.output_dir.join("summary.json");
    let mut summary = serde_json::to_vec_pretty(&log.summary).expect("summary serializes");
    summary.push(b'\n');
    std::fs::write(&summary_path, summary).map_err(io_err(&summary_path))?;

    let header = CheckpointHeader {
        experiment: config.clone(),
        step: log.epochs.len(),
        rng_seed: config.seed,
    };
    save_checkpoint(&config.output_dir.join("checkpoint.bin"), &header, params)?;
    Ok(())
}

/// Which part of a cohort to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

impl std::str::FromStr for SplitChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitChoice::Train),
            "val" => Ok(SplitChoice::Val),
            "test" => Ok(SplitChoice::Test),
            "all" => Ok(SplitChoice::All),
            other => Err(format!("unknown split {other:?} (train|val|test|all)")),
        }
    }
}

/// Metrics of a standalone evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub auprc: f64,
    pub c_index: f64,
    pub n_images: usize,
    pub config_hash: String,
}

/// Evaluates a checkpoint on a cohort file. The checkpoint header carries
/// the experiment config, so the split is re-derived exactly as during
/// training; `SplitChoice::All` scores the whole cohort instead.
pub fn evaluate(
    checkpoint_path: &Path,
    cohort_path: &Path,
    split: SplitChoice,
) -> Result<EvalReport, HarnessError> {
    let (header, params): (CheckpointHeader, Params) = load_checkpoint(checkpoint_path)?;
    let index = load_cohort(cohort_path)?;
    let scored = match split {
        SplitChoice::All => score_split(&params, &index)?,
        choice => {
            let (train, val, test) =
                split_cohort(&index, header.experiment.split.ratios, header.experiment.seed)?;
            let part = match choice {
                SplitChoice::Train => train,
                SplitChoice::Val => val,
                SplitChoice::Test => test,
                SplitChoice::All => unreachable!(),
            };
            score_split(&params, &part)?
        }
    };
    Ok(EvalReport {
        auroc: auroc(&scored)?,
        auprc: auprc(&scored)?,
        c_index: c_index(&scored)?,
        n_images: scored.len(),
        config_hash: config_hash(&header.experiment),
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// A grid of experiment cells over strategies, augmentation modes,
/// supervision modes, and seeds, sharing one base config. Direct-label
/// cells are only built for the patient+exam strategy; the combination is
/// undefined elsewhere.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub strategies: Vec<SamplingStrategy>,
    pub aug_modes: Vec<AugMode>,
    pub supervisions: Vec<SupervisionMode>,
    pub seeds: Vec<u64>,
}

/// One executed sweep cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub strategy: SamplingStrategy,
    pub aug_mode: AugMode,
    pub supervision: SupervisionMode,
    pub seed: u64,
    pub log: MetricsLog,
}

/// A finished sweep: every cell, in deterministic cell order.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub cells: Vec<CellResult>,
}

fn cell_name(
    strategy: &SamplingStrategy,
    aug: AugMode,
    sup: SupervisionMode,
    seed: u64,
) -> String {
    format!(
        "{}_{}_{}_s{seed}",
        strategy.short_name(),
        aug.short_name(),
        sup.short_name()
    )
}

fn cell_config(
    spec: &SweepSpec,
    out_dir: &Path,
    strategy: &SamplingStrategy,
    aug: AugMode,
    sup: SupervisionMode,
    seed: u64,
) -> ExperimentConfig {
    let mut config = spec.base.clone();
    config.strategy = *strategy;
    config.aug.mode = aug;
    config.supervision = sup;
    config.seed = seed;
    if let CohortSource::Synth(synth) = &mut config.cohort {
        // Same seed => same cohort across strategies, so comparisons pair up;
        // different seeds draw fresh cohorts.
        synth.seed = seed;
    }
    config.output_dir = out_dir.join(cell_name(strategy, aug, sup, seed));
    config
}

/// Runs every cell of the sweep (cells execute concurrently; each one is
/// internally deterministic) and writes `table.csv`, `table.txt`, and
/// `cells.csv` under `out_dir`.
pub fn compare(spec: &SweepSpec, out_dir: &Path) -> Result<CompareReport, HarnessError> {
    let mut cell_specs = Vec::new();
    for strategy in &spec.strategies {
        for &aug in &spec.aug_modes {
            for &sup in &spec.supervisions {
                if sup == SupervisionMode::DirectLabel
                    && !matches!(strategy, SamplingStrategy::PatientExamLevel { .. })
                {
                    continue;
                }
                for &seed in &spec.seeds {
                    cell_specs.push((*strategy, aug, sup, seed));
                }
            }
        }
    }

    let configs: Vec<ExperimentConfig> = cell_specs
        .iter()
        .map(|(strategy, aug, sup, seed)| cell_config(spec, out_dir, strategy, *aug, *sup, *seed))
        .collect();
    for config in &configs {
        config.validate()?;
    }

    // Cells are independent (each derives its own streams and owns its
    // output directory), so workers pull indices from a shared counter.
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(configs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<(usize, Result<MetricsLog, HarnessError>)> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    scope.spawn(|| {
                        let mut local = Vec::new();
                        loop {
                            let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                            if i >= configs.len() {
                                break;
                            }
                            local.push((i, run_experiment(&configs[i])));
                        }
                        local
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        });
    results.sort_by_key(|(i, _)| *i);

    let mut cells = Vec::with_capacity(cell_specs.len());
    for ((strategy, aug, sup, seed), (_, log)) in cell_specs.into_iter().zip(results) {
        cells.push(CellResult {
            strategy,
            aug_mode: aug,
            supervision: sup,
            seed,
            log: log?,
        });
    }

    let report = CompareReport { cells };
    write_tables(&report, out_dir)?;
    Ok(report)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Canonical presentation order: patient+exam first, image-level last.
fn strategy_rank(strategy: &SamplingStrategy) -> usize {
    match strategy {
        SamplingStrategy::PatientExamLevel { .. } => 0,
        SamplingStrategy::ExamLevel => 1,
        SamplingStrategy::ImageLevel => 2,
    }
}

fn aug_rank(mode: AugMode) -> usize {
    match mode {
        AugMode::None => 0,
        AugMode::Mixup => 1,
        AugMode::Cutmix => 2,
        AugMode::CutmixPlusMixup => 3,
    }
}

struct TableCell {
    strategy: SamplingStrategy,
    aug_mode: AugMode,
    supervision: SupervisionMode,
    metric: &'static str,
    mean: f64,
    sd: f64,
    n_seeds: usize,
}

fn aggregate(report: &CompareReport) -> Vec<TableCell> {
    let mut keys: Vec<(SamplingStrategy, AugMode, SupervisionMode)> = Vec::new();
    for cell in &report.cells {
        let key = (cell.strategy, cell.aug_mode, cell.supervision);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.sort_by_key(|(strategy, aug, sup)| {
        (
            strategy_rank(strategy),
            aug_rank(*aug),
            sup.short_name().to_string(),
        )
    });

    let mut rows = Vec::new();
    for (strategy, aug, sup) in keys {
        let group: Vec<&CellResult> = report
            .cells
            .iter()
            .filter(|c| (c.strategy, c.aug_mode, c.supervision) == (strategy, aug, sup))
            .collect();
        for (metric, pick) in [
            (
                "test_auroc",
                (|s: &RunSummary| s.test_auroc) as fn(&RunSummary) -> f64,
            ),
            ("test_auprc", |s: &RunSummary| s.test_auprc),
            ("test_c_index", |s: &RunSummary| s.test_c_index),
        ] {
            let values: Vec<f64> = group.iter().map(|c| pick(&c.log.summary)).collect();
            let (mean, sd) = mean_sd(&values);
            rows.push(TableCell {
                strategy,
                aug_mode: aug,
                supervision: sup,
                metric,
                mean,
                sd,
                n_seeds: values.len(),
            });
        }
    }
    rows
}

fn write_tables(report: &CompareReport, out_dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let rows = aggregate(report);

    let csv_path = out_dir.join("table.csv");
    let mut csv = String::from("strategy,aug_mode,supervision,metric,mean,sd,n_seeds\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.strategy.short_name(),
            row.aug_mode.short_name(),
            row.supervision.short_name(),
            row.metric,
            row.mean,
            row.sd,
            row.n_seeds
        ));
    }
    std::fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;

    // Per-cell values so table entries can be traced back to runs.
    let cells_path = out_dir.join("cells.csv");
    let mut cells = String::from(
        "strategy,aug_mode,supervision,seed,test_auroc,test_auprc,test_c_index,config_hash\n",
    );
    for cell in &report.cells {
        cells.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            cell.strategy.short_name(),
            cell.aug_mode.short_name(),
            cell.supervision.short_name(),
            cell.seed,
            cell.log.summary.test_auroc,
            cell.log.summary.test_auprc,
            cell.log.summary.test_c_index,
            cell.log.summary.config_hash
        ));
    }
    std::fs::write(&cells_path, cells).map_err(io_err(&cells_path))?;

    let txt_path = out_dir.join("table.txt");
    let mut txt = String::new();
    let aug_modes: Vec<AugMode> = {
        let mut seen = Vec::new();
        for row in &rows {
            if !seen.contains(&row.aug_mode) {
                seen.push(row.aug_mode);
            }
        }
        seen.sort_by_key(|&m| aug_rank(m));
        seen
    };
    for metric in ["test_auroc", "test_auprc", "test_c_index"] {
        let mut block = format!("{metric} (mean +/- sd over seeds)\n");
        block.push_str(&format!("{:<14}", "strategy"));
        for &aug in &aug_modes {
            block.push_str(&format!("{:>22}", aug.short_name()));
        }
        block.push('\n');
        let mut any = false;
        let mut strategies: Vec<SamplingStrategy> = Vec::new();
        for row in &rows {
            if row.supervision == SupervisionMode::Ranking && !strategies.contains(&row.strategy) {
                strategies.push(row.strategy);
            }
        }
        strategies.sort_by_key(strategy_rank);
        for strategy in &strategies {
            block.push_str(&format!("{:<14}", strategy.short_name()));
            for &aug in &aug_modes {
                let cell = rows.iter().find(|r| {
                    r.metric == metric
                        && r.strategy == *strategy
                        && r.aug_mode == aug
                        && r.supervision == SupervisionMode::Ranking
                });
                match cell {
                    Some(c) => {
                        block.push_str(&format!("{:>22}", format!("{:.4} +/- {:.4}", c.mean, c.sd)));
                        any = true;
                    }
                    None => block.push_str(&format!("{:>22}", "-")),
                }
            }
            block.push('\n');
        }
        if any {
            txt.push_str(&block);
            txt.push('\n');
        }
    }

    // Relative vs direct supervision block, when the sweep requested both.
    let has_direct = rows
        .iter()
        .any(|r| r.supervision == SupervisionMode::DirectLabel);
    if has_direct {
        txt.push_str("supervision comparison under patient_exam (mean +/- sd over seeds)\n");
        txt.push_str(&format!(
            "{:<14}{:>22}{:>22}\n",
            "supervision", "test_auroc", "test_auprc"
        ));
        for sup in [SupervisionMode::Ranking, SupervisionMode::DirectLabel] {
            let pick = |metric: &str| {
                rows.iter().find(|r| {
                    r.metric == metric
                        && matches!(r.strategy, SamplingStrategy::PatientExamLevel { .. })
                        && r.supervision == sup
                })
            };
            if let (Some(roc), Some(prc)) = (pick("test_auroc"), pick("test_auprc")) {
                txt.push_str(&format!(
                    "{:<14}{:>22}{:>22}\n",
                    sup.short_name(),
                    format!("{:.4} +/- {:.4}", roc.mean, roc.sd),
                    format!("{:.4} +/- {:.4}", prc.mean, prc.sd)
                ));
            }
        }
    }

    let mut file = std::fs::File::create(&txt_path).map_err(io_err(&txt_path))?;
    file.write_all(txt.as_bytes()).map_err(io_err(&txt_path))?;
    Ok(())
}

/// The synthetic benchmark used by the comparison experiments: about 1,000
/// training and 300 test patients under the default split, a noisy label
/// regime, and a short fixed budget.
///
/// At desk scale the strategy effects live in how training converges within
/// the budget, not in an asymptotic gap: exam-level pairing converges
/// fastest on undiluted hard labels, image-level pairing drags behind on
/// blended supervision, and the ranking term keeps improving the
/// patient+exam model after the others flatten. The slow learning rate and
/// the 12-epoch budget hold that window open; the elevated label noise puts
/// the operating point near the regime the comparison is about.
pub fn benchmark_config(out_dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        cohort: CohortSource::Synth(SynthConfig {
            n_patients: 1667,
            label_noise: 1.2,
            nuisance_strength: 0.45,
            pixel_noise_sd: 0.15,
            ..SynthConfig::default()
        }),
        strategy: SamplingStrategy::patient_exam(),
        aug: AugConfig::default(),
        supervision: SupervisionMode::Ranking,
        ranking: RankingLossConfig::default(),
        sup: SupervisedLossConfig::default(),
        predictor: PredictorConfig {
            embed_dim: 96,
            hidden_dim: 192,
            ..PredictorConfig::default()
        },
        train: TrainConfig {
            epochs: 12,
            warmup_epochs: 2,
            learning_rate: 5e-5,
            ..TrainConfig::default()
        },
        split: SplitSpec::default(),
        seed: 0,
        output_dir: out_dir.to_path_buf(),
    }
}

/// The full benchmark sweep: the three strategies under ranking supervision
/// plus the direct-label ablation (patient+exam only), five seeds each.
pub fn benchmark_sweep(out_dir: &Path) -> SweepSpec {
    SweepSpec {
        base: benchmark_config(out_dir),
        strategies: vec![
            SamplingStrategy::patient_exam(),
            SamplingStrategy::ExamLevel,
            SamplingStrategy::ImageLevel,
        ],
        aug_modes: vec![AugMode::CutmixPlusMixup],
        supervisions: vec![SupervisionMode::Ranking, SupervisionMode::DirectLabel],
        seeds: vec![11, 12, 13, 14, 15],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_config(dir: &Path, n_patients: usize, epochs: usize, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            cohort: CohortSource::Synth(SynthConfig {
                n_patients,
                image_size: (16, 16),
                seed,
                ..SynthConfig::default()
            }),
            strategy: SamplingStrategy::patient_exam(),
            aug: AugConfig::default(),
            supervision: SupervisionMode::Ranking,
            ranking: RankingLossConfig::default(),
            sup: SupervisedLossConfig::default(),
            predictor: PredictorConfig {
                image_size: (16, 16),
                embed_dim: 8,
                hidden_dim: 8,
                ..PredictorConfig::default()
            },
            train: TrainConfig {
                epochs,
                batch_size: 16,
                warmup_epochs: 1,
                ..TrainConfig::default()
            },
            split: SplitSpec::default(),
            seed,
            output_dir: dir.to_path_buf(),
        }
    }

    fn temp_dir(label: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "oculomix_harness_{label}_{}",
            std::process::id()
        ));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn smoke_run_produces_outputs() {
        let dir = temp_dir("smoke");
        let config = smoke_config(&dir.join("run"), 40, 1, 5);
        let log = run_experiment(&config).unwrap();
        assert_eq!(log.epochs.len(), 1);
        let csv = std::fs::read_to_string(dir.join("run/metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("epoch,train_loss,val_auroc,val_auprc,learning_rate"));
        assert!(dir.join("run/summary.json").exists());
        assert!(dir.join("run/checkpoint.bin").exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn runs_are_byte_identical() {
        let dir = temp_dir("determinism");
        let config = smoke_config(&dir.join("run"), 40, 2, 9);
        run_experiment(&config).unwrap();
        let first: Vec<Vec<u8>> = ["metrics.csv", "summary.json", "checkpoint.bin"]
            .iter()
            .map(|f| std::fs::read(dir.join("run").join(f)).unwrap())
            .collect();
        run_experiment(&config).unwrap();
        for (file, bytes) in ["metrics.csv", "summary.json", "checkpoint.bin"]
            .iter()
            .zip(first)
        {
            assert_eq!(
                std::fs::read(dir.join("run").join(file)).unwrap(),
                bytes,
                "{file} differs between runs"
            );
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn metrics_rows_cover_epochs_and_stay_in_range() {
        let dir = temp_dir("rows");
        let config = smoke_config(&dir.join("run"), 40, 3, 13);
        let log = run_experiment(&config).unwrap();
        assert_eq!(log.epochs.len(), 3);
        for (i, row) in log.epochs.iter().enumerate() {
            assert_eq!(row.epoch, i + 1);
            assert!((0.0..=1.0).contains(&row.val_auroc));
            assert!((0.0..=1.0).contains(&row.val_auprc));
            assert!(row.train_loss.is_finite() && row.train_loss >= 0.0);
            assert!(row.learning_rate >= 0.0);
        }
        assert!((0.0..=1.0).contains(&log.summary.test_auroc));
        assert!((0.0..=1.0).contains(&log.summary.test_c_index));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn config_hash_changes_with_any_field() {
        let dir = temp_dir("hash");
        let base = smoke_config(&dir, 40, 1, 5);
        let base_hash = config_hash(&base);
        let mut changed = base.clone();
        changed.seed = 6;
        assert_ne!(config_hash(&changed), base_hash);
        let mut changed = base.clone();
        changed.ranking.margin = 0.2;
        assert_ne!(config_hash(&changed), base_hash);
        let mut changed = base.clone();
        changed.strategy = SamplingStrategy::ExamLevel;
        changed.supervision = SupervisionMode::Ranking;
        assert_ne!(config_hash(&changed), base_hash);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn direct_label_requires_patient_exam() {
        let dir = temp_dir("direct");
        let mut config = smoke_config(&dir, 40, 1, 5);
        config.strategy = SamplingStrategy::ImageLevel;
        config.supervision = SupervisionMode::DirectLabel;
        assert!(matches!(
            config.validate(),
            Err(HarnessError::InvalidConfig(_))
        ));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn evaluate_reproduces_training_summary() {
        let dir = temp_dir("evaluate");
        // Train against a saved cohort file so evaluate sees identical data.
        let synth = SynthConfig {
            n_patients: 40,
            image_size: (16, 16),
            seed: 21,
            ..SynthConfig::default()
        };
        let index = generate_cohort(&synth).unwrap();
        let cohort_path = dir.join("cohort.json");
        crate::cohort::save_cohort(&index, &cohort_path).unwrap();

        let mut config = smoke_config(&dir.join("run"), 40, 2, 21);
        config.cohort = CohortSource::Path(cohort_path.clone());
        let log = run_experiment(&config).unwrap();

        let report = evaluate(
            &dir.join("run/checkpoint.bin"),
            &cohort_path,
            SplitChoice::Test,
        )
        .unwrap();
        assert_eq!(report.auroc, log.summary.test_auroc);
        assert_eq!(report.auprc, log.summary.test_auprc);
        assert_eq!(report.c_index, log.summary.test_c_index);

        // A different generated cohort still evaluates to finite metrics.
        let external = SynthConfig {
            seed: 77,
            morbidity_base_range: (-1.6, 1.2),
            ..synth
        };
        let external_path = dir.join("external.json");
        crate::cohort::save_cohort(&generate_cohort(&external).unwrap(), &external_path).unwrap();
        let external_report = evaluate(
            &dir.join("run/checkpoint.bin"),
            &external_path,
            SplitChoice::All,
        )
        .unwrap();
        assert!(external_report.c_index.is_finite());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn null_model_scores_near_chance() {
        // Random-weight checkpoints on a balanced cohort: AUROC within
        // [0.4, 0.6] for each of 5 seeds. Labels are near-fair coin flips
        // (huge label noise), otherwise a random projection could pick up
        // the disease signal by accident and tilt the AUROC.
        let synth = SynthConfig {
            n_patients: 300,
            image_size: (16, 16),
            label_noise: 1e6,
            seed: 31,
            ..SynthConfig::default()
        };
        let index = generate_cohort(&synth).unwrap();
        for seed in 0..5u64 {
            let params = Params::init(PredictorConfig {
                image_size: (16, 16),
                embed_dim: 8,
                hidden_dim: 8,
                seed,
                ..PredictorConfig::default()
            })
            .unwrap();
            let scored = score_split(&params, &index).unwrap();
            let value = auroc(&scored).unwrap();
            assert!(
                (0.4..=0.6).contains(&value),
                "seed {seed} gave AUROC {value}"
            );
        }
    }

    #[test]
    fn sweep_bookkeeping_three_strategies_three_seeds() {
        let dir = temp_dir("sweep");
        let spec = SweepSpec {
            base: smoke_config(&dir, 40, 1, 0),
            strategies: vec![
                SamplingStrategy::patient_exam(),
                SamplingStrategy::ExamLevel,
                SamplingStrategy::ImageLevel,
            ],
            aug_modes: vec![AugMode::CutmixPlusMixup],
            supervisions: vec![SupervisionMode::Ranking],
            seeds: vec![1, 2, 3],
        };
        let report = compare(&spec, &dir).unwrap();
        assert_eq!(report.cells.len(), 9);

        let table = std::fs::read_to_string(dir.join("table.csv")).unwrap();
        let auroc_rows: Vec<&str> = table
            .lines()
            .filter(|l| l.contains(",test_auroc,"))
            .collect();
        assert_eq!(auroc_rows.len(), 3);
        // Canonical row order: patient_exam, exam, image.
        assert!(auroc_rows[0].starts_with("patient_exam,"));
        assert!(auroc_rows[1].starts_with("exam,"));
        assert!(auroc_rows[2].starts_with("image,"));
        for row in auroc_rows {
            assert!(row.ends_with(",3"), "sd over 3 seeds expected: {row}");
        }
        assert!(dir.join("table.txt").exists());
        assert!(dir.join("cells.csv").exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn single_cell_sweep_equals_run_summary() {
        let dir = temp_dir("single_cell");
        let spec = SweepSpec {
            base: smoke_config(&dir, 40, 1, 0),
            strategies: vec![SamplingStrategy::patient_exam()],
            aug_modes: vec![AugMode::Mixup],
            supervisions: vec![SupervisionMode::Ranking],
            seeds: vec![4],
        };
        let report = compare(&spec, &dir).unwrap();
        assert_eq!(report.cells.len(), 1);
        let cell = &report.cells[0];
        let direct = run_experiment(&cell_config(
            &spec,
            &dir,
            &spec.strategies[0],
            AugMode::Mixup,
            SupervisionMode::Ranking,
            4,
        ))
        .unwrap();
        assert_eq!(direct.summary.test_auroc, cell.log.summary.test_auroc);
        let table = std::fs::read_to_string(dir.join("table.csv")).unwrap();
        let row = table
            .lines()
            .find(|l| l.contains(",test_auroc,"))
            .unwrap();
        let mean: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(mean, cell.log.summary.test_auroc);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn split_choice_parses() {
        assert_eq!("test".parse::<SplitChoice>(), Ok(SplitChoice::Test));
        assert_eq!("all".parse::<SplitChoice>(), Ok(SplitChoice::All));
        assert!("bogus".parse::<SplitChoice>().is_err());
    }

    #[test]
    fn env_seed_overrides_config() {
        // Serialized through a mutex-free single test: set, use, and restore.
        let dir = temp_dir("env_seed");
        let config = smoke_config(&dir, 40, 1, 5);
        std::env::set_var(SEED_ENV_VAR, "123");
        let overridden = config.clone().with_env_seed().unwrap();
        std::env::remove_var(SEED_ENV_VAR);
        assert_eq!(overridden.seed, 123);
        let untouched = config.clone().with_env_seed().unwrap();
        assert_eq!(untouched.seed, 5);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
