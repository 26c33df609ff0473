//! Subcommand drivers: corpus synthesis, feature extraction, training,
//! threshold tuning, evaluation and single-file classification.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{decode_wav, load_manifest, AudioError, DatasetManifest, Label, ManifestEntry, Split};
use crate::config::{ConfigError, PipelineConfig};
use crate::features::{channel_mean_subtract, read_features, write_features, FeatureConfig, FeatureError, FeatureExtractor, FeatureMatrix, FeatureMode, GroupKey};
use crate::inference::{build_result, InferenceError, InferenceModuleSpec};
use crate::metrics::{evaluate, frame_accuracy, posterior_dump, tune_threshold, EvalReport, MetricsError, OperatingPoint, ScoredUtterance};
use crate::neural::{load_model, save_model, train, ArchConfig, EpochRecord, ModelFile, NeuralError, Normalization, PosteriorTrajectory};
use crate::synth::{generate_corpus, CorpusManifests, SynthError};

/// Extension of per-utterance feature files.
pub const FEATURE_EXT: &str = "wdft";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    InvalidInput(String),
    #[error("model and features disagree: {0}")]
    SnapshotMismatch(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("{0}")]
    Usage(String),
    #[error("{failed} of {total} utterances could not be processed")]
    PartialFailure { failed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// Process exit status: 2 config, 3 IO or data, 4 numeric, 5 usage.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::InvalidInput(_) | PipelineError::SnapshotMismatch(_) => 2,
            PipelineError::Synth(SynthError::InvalidSpec(_)) => 2,
            PipelineError::Feature(FeatureError::InvalidConfig(_)) => 2,
            PipelineError::Neural(NeuralError::NonFiniteLoss { .. }) => 4,
            PipelineError::Neural(NeuralError::InvalidTrainConfig(_) | NeuralError::InvalidArchitecture(_)) => 2,
            PipelineError::Inference(InferenceError::BadSpec(_)) => 2,
            PipelineError::Metrics(MetricsError::InvalidTarget(_)) => 2,
            PipelineError::Usage(_) => 5,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Runs `f` on a rayon pool of `workers` threads (0 = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a {workers}-thread pool ({e}); using the global pool");
            f()
        }
    }
}

/// Guesses the split from a manifest file name (`train`, `cv`, `test`).
pub fn split_from_path(path: &Path) -> Split {
    match path.file_stem().and_then(|s| s.to_str()) {
        Some(s) if s.starts_with("train") => Split::Train,
        Some(s) if s.starts_with("cv") => Split::CrossValidation,
        _ => Split::Test,
    }
}

pub fn open_manifest(path: &Path) -> Result<DatasetManifest> {
    Ok(load_manifest(path, split_from_path(path))?)
}

pub fn feature_path(features_dir: &Path, utterance_id: &str) -> PathBuf {
    features_dir.join(format!("{utterance_id}.{FEATURE_EXT}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitCount {
    pub split: &'static str,
    pub whisper: usize,
    pub normal: usize,
    pub speakers: usize,
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub manifests: CorpusManifests,
    pub counts: Vec<SplitCount>,
}

pub fn cmd_synth(cfg: &PipelineConfig, out_dir: &Path) -> Result<SynthSummary> {
    cfg.validate()?;
    let manifests = with_workers(cfg.workers, || generate_corpus(&cfg.synth, out_dir))?;
    let mut counts = Vec::new();
    for split in [Split::Train, Split::CrossValidation, Split::Test] {
        let m = load_manifest(manifests.path(split), split)?;
        counts.push(SplitCount {
            split: split.as_str(),
            whisper: m.count(Label::Whisper),
            normal: m.count(Label::Normal),
            speakers: m.speakers().len(),
        });
    }
    Ok(SynthSummary { manifests, counts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub written: usize,
    pub dim: usize,
    /// Utterance id and reason for every utterance that was skipped.
    pub failed: Vec<(String, String)>,
}

/// Extracts features for every manifest entry, applies channel mean
/// subtraction per (speaker, device) group and writes one feature file per
/// utterance. Failing utterances are reported and skipped.
pub fn cmd_extract(cfg: &PipelineConfig, manifest: &Path, mode: FeatureMode, out_dir: &Path) -> Result<ExtractSummary> {
    cfg.validate()?;
    let manifest = open_manifest(manifest)?;
    fs::create_dir_all(out_dir)?;
    let extractor = FeatureExtractor::new(&cfg.features, crate::audio::SAMPLE_RATE)?;
    let results: Vec<std::result::Result<FeatureMatrix, String>> = with_workers(cfg.workers, || {
        manifest
            .entries
            .par_iter()
            .map(|e| {
                let u = manifest.load_utterance(e).map_err(|err| err.to_string())?;
                extractor.extract(&u, mode).map_err(|err| err.to_string())
            })
            .collect()
    });
    let mut mats = Vec::new();
    let mut keys = Vec::new();
    let mut failed = Vec::new();
    for (e, r) in manifest.entries.iter().zip(results) {
        match r {
            Ok(m) => {
                mats.push(m);
                keys.push(GroupKey::new(&e.speaker_id, &e.device_id));
            }
            Err(reason) => {
                log::error!("skipping {}: {reason}", e.utterance_id);
                failed.push((e.utterance_id.clone(), reason));
            }
        }
    }
    channel_mean_subtract(&mut mats, &keys)?;
    for m in &mats {
        write_features(&feature_path(out_dir, &m.utterance_id), m)?;
    }
    Ok(ExtractSummary {
        written: mats.len(),
        dim: cfg.features.layout(mode).dim(),
        failed,
    })
}

/// Loads the feature file of every manifest entry together with its label.
pub fn load_labeled_features(manifest: &DatasetManifest, features_dir: &Path) -> Result<Vec<(FeatureMatrix, Label)>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let path = feature_path(features_dir, &e.utterance_id);
            let m = read_features(&path, &e.utterance_id)?;
            Ok((m, e.label))
        })
        .collect()
}

/// Feature settings a model was trained with, stored in its file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub feature_mode: FeatureMode,
    pub features: FeatureConfig,
    pub model: ArchConfig,
    pub train: crate::neural::TrainConfig,
}

impl ModelSnapshot {
    pub fn parse(model: &ModelFile) -> Result<Self> {
        serde_json::from_str(&model.config_snapshot)
            .map_err(|e| PipelineError::SnapshotMismatch(format!("unreadable config snapshot in model: {e}")))
    }
}

fn check_layouts(model: &ModelFile, data: &[(FeatureMatrix, Label)]) -> Result<()> {
    for (m, _) in data {
        if m.layout != model.layout {
            return Err(PipelineError::SnapshotMismatch(format!(
                "{} has layout {} but the model expects {}",
                m.utterance_id, m.layout, model.layout
            )));
        }
    }
    Ok(())
}

/// The model's feature settings must equal the current configuration's.
pub fn check_snapshot(cfg: &PipelineConfig, model: &ModelFile) -> Result<()> {
    let snap = ModelSnapshot::parse(model)?;
    if snap.features != cfg.features || snap.feature_mode != cfg.feature_mode {
        return Err(PipelineError::SnapshotMismatch(
            "the model was trained with different feature settings than this configuration".into(),
        ));
    }
    Ok(())
}

pub const LOSS_CSV_HEADER: &str = "epoch,learning_rate,train_loss,cv_loss,cv_frame_accuracy";

pub fn loss_curve_csv(curve: &[EpochRecord]) -> String {
    let mut s = format!("{LOSS_CSV_HEADER}\n");
    for r in curve {
        writeln!(s, "{},{},{},{},{}", r.epoch, r.learning_rate, r.train_loss, r.cv_loss, r.cv_frame_accuracy).unwrap();
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub model: ModelFile,
    pub curve: Vec<EpochRecord>,
}

/// Trains `arch` on the train manifest's features, tracking cv accuracy,
/// and writes the model file (plus the loss curve when `loss_csv` is set).
pub fn cmd_train(
    cfg: &PipelineConfig,
    arch: &ArchConfig,
    features_dir: &Path,
    train_manifest: &Path,
    cv_manifest: &Path,
    out_model: &Path,
    loss_csv: Option<&Path>,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let layout = cfg.features.layout(cfg.feature_mode);
    let mut train_set = load_labeled_features(&open_manifest(train_manifest)?, features_dir)?;
    let mut cv_set = load_labeled_features(&open_manifest(cv_manifest)?, features_dir)?;
    if train_set.is_empty() || cv_set.is_empty() {
        return Err(PipelineError::InvalidInput("train and cv manifests must both list utterances".into()));
    }
    for (m, _) in train_set.iter().chain(&cv_set) {
        if m.layout != layout {
            return Err(PipelineError::SnapshotMismatch(format!(
                "{} has layout {} but feature_mode {} expects {layout}",
                m.utterance_id, m.layout, cfg.feature_mode
            )));
        }
    }
    let norm = Normalization::fit(&train_set.iter().map(|(m, _)| m).collect::<Vec<_>>())?;
    for (m, _) in train_set.iter_mut().chain(cv_set.iter_mut()) {
        norm.apply(m)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let model = arch.build(layout.dim(), &mut rng)?;
    let outcome = with_workers(cfg.workers, || train(model, &train_set, &cv_set, &cfg.train))?;
    let snapshot = ModelSnapshot {
        feature_mode: cfg.feature_mode,
        features: cfg.features.clone(),
        model: arch.clone(),
        train: cfg.train.clone(),
    };
    let file = ModelFile::new(outcome.model, layout, norm, serde_json::to_string(&snapshot)?)?;
    if let Some(dir) = out_model.parent() {
        fs::create_dir_all(dir)?;
    }
    save_model(out_model, &file)?;
    if let Some(p) = loss_csv {
        fs::write(p, loss_curve_csv(&outcome.curve))?;
    }
    Ok(TrainSummary {
        model: file,
        curve: outcome.curve,
    })
}

/// Per-frame posteriors of `model` on every utterance of `data`.
pub fn score_posteriors(model: &ModelFile, data: &[(FeatureMatrix, Label)]) -> Result<Vec<(PosteriorTrajectory, Label)>> {
    check_layouts(model, data)?;
    data.par_iter()
        .map(|(m, label)| {
            let mut x = m.clone();
            model.normalization.apply(&mut x)?;
            Ok((model.model.posteriors(&x)?, *label))
        })
        .collect()
}

pub fn utterance_scores(trajs: &[(PosteriorTrajectory, Label)], module: InferenceModuleSpec) -> Result<Vec<ScoredUtterance>> {
    trajs
        .iter()
        .map(|(t, label)| {
            Ok(ScoredUtterance {
                utterance_id: t.utterance_id.clone(),
                label: *label,
                score: build_result(t, module)?.score,
            })
        })
        .collect()
}

/// Tunes the model's threshold on a negatives-only manifest and stores the
/// operating point in the model file.
pub fn cmd_tune(
    cfg: &PipelineConfig,
    model_path: &Path,
    negatives: &Path,
    features_dir: &Path,
    target_fpr: f64,
    module: InferenceModuleSpec,
) -> Result<OperatingPoint> {
    cfg.validate()?;
    let manifest = open_manifest(negatives)?;
    if let Some(e) = manifest.entries.iter().find(|e| e.label == Label::Whisper) {
        return Err(PipelineError::InvalidInput(format!(
            "tuning manifest {} must hold only normal utterances, but {} is labelled whisper",
            negatives.display(),
            e.utterance_id
        )));
    }
    let mut model = load_model(model_path)?;
    check_snapshot(cfg, &model)?;
    let data = load_labeled_features(&manifest, features_dir)?;
    let trajs = with_workers(cfg.workers, || score_posteriors(&model, &data))?;
    let scores: Vec<f64> = utterance_scores(&trajs, module)?.iter().map(|s| s.score).collect();
    let tuned_on = negatives.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let op = tune_threshold(&scores, target_fpr, &tuned_on, &module.to_string())?;
    model.operating_point = Some(op.clone());
    save_model(model_path, &model)?;
    Ok(op)
}

/// Where evaluation thresholds come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSource {
    /// The operating point stored in the model file, for every module.
    Model,
    Fixed(f64),
    /// Tune each module separately on the negatives of the evaluated set at
    /// the given target FPR.
    TuneOnNegatives(f64),
}

#[derive(Debug, Clone)]
pub struct EvalRequest {
    pub models: Vec<PathBuf>,
    pub manifests: Vec<PathBuf>,
    pub features_dir: PathBuf,
    pub modules: Vec<InferenceModuleSpec>,
    pub threshold: ThresholdSource,
    /// Directory for per-utterance posterior CSVs, one subdirectory per
    /// model.
    pub dump_dir: Option<PathBuf>,
}

/// One cell of the comparison grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub model: String,
    pub module: String,
    pub frame_accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub fpr: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub threshold: f64,
    pub achieved_fpr_on_tuning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    /// One report per (model, module), models outermost.
    pub reports: Vec<(String, EvalReport)>,
}

impl EvalOutcome {
    pub fn grid(&self) -> Vec<GridRow> {
        self.reports
            .iter()
            .map(|(model, r)| GridRow {
                model: model.clone(),
                module: r.module.clone(),
                frame_accuracy: r.frame_accuracy,
                recall: r.recall,
                fpr: r.fpr,
                f1: r.f1,
                accuracy: r.accuracy,
                threshold: r.operating_point.threshold,
                achieved_fpr_on_tuning: r.operating_point.achieved_fpr,
            })
            .collect()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{:.4}", x)).unwrap_or_else(|| "-".into())
}

/// Fixed-width text rendering of a comparison grid.
pub fn render_grid(rows: &[GridRow]) -> String {
    let mut s = format!(
        "{:<24} {:<28} {:>9} {:>8} {:>8} {:>8} {:>10}\n",
        "model", "module", "frame_acc", "recall", "fpr", "f1", "threshold"
    );
    for r in rows {
        writeln!(
            s,
            "{:<24} {:<28} {:>9} {:>8} {:>8} {:>8} {:>10.6}",
            r.model,
            r.module,
            fmt_opt(r.frame_accuracy),
            fmt_opt(r.recall),
            fmt_opt(r.fpr),
            fmt_opt(r.f1),
            r.threshold
        )
        .unwrap();
    }
    s
}

fn model_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Scores every manifest with every model and applies each inference
/// module at the requested thresholds. Frame accuracy pools all manifests.
pub fn cmd_eval(cfg: &PipelineConfig, req: &EvalRequest) -> Result<EvalOutcome> {
    cfg.validate()?;
    if req.models.is_empty() || req.manifests.is_empty() || req.modules.is_empty() {
        return Err(PipelineError::Usage("eval needs at least one model, manifest and inference module".into()));
    }
    let mut data = Vec::new();
    for m in &req.manifests {
        data.extend(load_labeled_features(&open_manifest(m)?, &req.features_dir)?);
    }
    let mut reports = Vec::new();
    for path in &req.models {
        let model = load_model(path)?;
        check_snapshot(cfg, &model)?;
        let name = model_name(path);
        let trajs = with_workers(cfg.workers, || score_posteriors(&model, &data))?;
        let frame_acc = frame_accuracy(&trajs).ok();
        if let Some(dir) = &req.dump_dir {
            let dir = dir.join(&name);
            fs::create_dir_all(&dir)?;
            for (t, _) in &trajs {
                posterior_dump(t, &dir.join(format!("{}.csv", t.utterance_id)))?;
            }
        }
        for &module in &req.modules {
            let scores = utterance_scores(&trajs, module)?;
            let op = match req.threshold {
                ThresholdSource::Model => model.operating_point.clone().ok_or_else(|| {
                    PipelineError::Usage(format!("{} has no tuned threshold; run tune or pass a threshold", path.display()))
                })?,
                ThresholdSource::Fixed(t) => {
                    // No tuning happened; record the FPR this threshold gives
                    // on the evaluated negatives as both target and result.
                    let neg: Vec<f64> = scores.iter().filter(|s| s.label == Label::Normal).map(|s| s.score).collect();
                    let fpr = if neg.is_empty() {
                        0.0
                    } else {
                        neg.iter().filter(|&&s| crate::metrics::is_whisper_verdict(s, t)).count() as f64 / neg.len() as f64
                    };
                    OperatingPoint {
                        threshold: t,
                        target_fpr: fpr,
                        achieved_fpr: fpr,
                        tuned_on: "fixed".into(),
                        module: module.to_string(),
                    }
                }
                ThresholdSource::TuneOnNegatives(target) => {
                    let neg: Vec<f64> = scores.iter().filter(|s| s.label == Label::Normal).map(|s| s.score).collect();
                    tune_threshold(&neg, target, "evaluated negatives", &module.to_string())?
                }
            };
            let mut report = evaluate(&scores, &op);
            report.module = module.to_string();
            report.frame_accuracy = frame_acc;
            reports.push((name.clone(), report));
        }
    }
    Ok(EvalOutcome { reports })
}

#[derive(Debug, Clone, Default)]
pub struct ClassifyOptions {
    pub threshold: Option<f64>,
    pub module: Option<InferenceModuleSpec>,
    /// Manifest supplying the other utterances of this file's (speaker,
    /// device) group for channel mean subtraction.
    pub cms_manifest: Option<PathBuf>,
    pub speaker_id: Option<String>,
    pub device_id: Option<String>,
    pub dump_posteriors: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResult {
    pub utterance_id: String,
    pub label: Label,
    pub score: f64,
    pub threshold: f64,
    pub module: String,
    pub frames: usize,
}

/// Runs the full pipeline on one WAV file with the feature settings stored
/// in the model. Without a CMS manifest the file forms its own group.
pub fn cmd_classify(model_path: &Path, wav: &Path, opts: &ClassifyOptions) -> Result<ClassifyResult> {
    let model = load_model(model_path)?;
    let threshold = match (opts.threshold, &model.operating_point) {
        (Some(t), _) => t,
        (None, Some(op)) => op.threshold,
        (None, None) => {
            return Err(PipelineError::Usage(format!(
                "{} has no tuned threshold; run tune or pass --threshold",
                model_path.display()
            )))
        }
    };
    let module = match (opts.module, &model.operating_point) {
        (Some(m), _) => m,
        (None, Some(op)) => op.module.parse()?,
        (None, None) => InferenceModuleSpec::mean(),
    };
    let snap = ModelSnapshot::parse(&model)?;
    let extractor = FeatureExtractor::new(&snap.features, crate::audio::SAMPLE_RATE)?;
    let u = decode_wav(wav)?;
    let target = extractor.extract(&u, snap.feature_mode)?;

    let mut group = vec![target];
    if let Some(manifest_path) = &opts.cms_manifest {
        let manifest = open_manifest(manifest_path)?;
        let listed: Option<&ManifestEntry> = manifest.entries.iter().find(|e| e.utterance_id == u.utterance_id);
        let speaker = opts.speaker_id.clone().or_else(|| listed.map(|e| e.speaker_id.clone()));
        let device = opts.device_id.clone().or_else(|| listed.map(|e| e.device_id.clone())).unwrap_or_default();
        let speaker = speaker.ok_or_else(|| {
            PipelineError::Usage(format!(
                "{} is not listed in {}; pass the speaker id for channel mean subtraction",
                u.utterance_id,
                manifest_path.display()
            ))
        })?;
        let members: Vec<&ManifestEntry> = manifest
            .entries
            .iter()
            .filter(|e| e.speaker_id == speaker && e.device_id == device && e.utterance_id != u.utterance_id)
            .collect();
        let others = members
            .par_iter()
            .map(|e| Ok(extractor.extract(&manifest.load_utterance(e)?, snap.feature_mode)?))
            .collect::<Result<Vec<_>>>()?;
        group.extend(others);
    } else {
        log::info!("no CMS manifest given; {} is mean-normalized on its own", u.utterance_id);
    }
    let keys = vec![GroupKey::new("", ""); group.len()];
    channel_mean_subtract(&mut group, &keys)?;
    let mut x = group.swap_remove(0);
    if x.layout != model.layout {
        return Err(PipelineError::SnapshotMismatch(format!(
            "extracted layout {} differs from model layout {}",
            x.layout, model.layout
        )));
    }
    model.normalization.apply(&mut x)?;
    let traj = model.model.posteriors(&x)?;
    if let Some(p) = &opts.dump_posteriors {
        posterior_dump(&traj, p)?;
    }
    let score = build_result(&traj, module)?;
    Ok(ClassifyResult {
        utterance_id: u.utterance_id,
        label: if crate::metrics::is_whisper_verdict(score.score, threshold) {
            Label::Whisper
        } else {
            Label::Normal
        },
        score: score.score,
        threshold,
        module: module.to_string(),
        frames: traj.len(),
    })
}
