//! `whisperdet`: whisper vs. normal speech detection from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use whisperdet::config::PipelineConfig;
use whisperdet::features::FeatureMode;
use whisperdet::inference::InferenceModuleSpec;
use whisperdet::neural::ArchConfig;
use whisperdet::pipeline::{self, ClassifyOptions, EvalRequest, PipelineError, ThresholdSource};

#[derive(Parser, Debug)]
#[command(name = "whisperdet", version, about = "Whisper vs. normal phonation detection")]
struct Cli {
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for extraction and scoring (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Feature set: `lfbe` (64 dims) or `lfbe+eng` (70 dims).
    #[arg(long, global = true)]
    mode: Option<FeatureMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic corpus (WAV files plus train/cv/test manifests).
    Synth(SynthArgs),
    /// Extract per-utterance feature files with channel mean subtraction.
    Extract(ExtractArgs),
    /// Train an MLP or LSTM frame classifier.
    Train(TrainArgs),
    /// Tune the decision threshold to a target FPR on normal-only data.
    Tune(TuneArgs),
    /// Evaluate models on labelled manifests.
    Eval(EvalArgs),
    /// Classify a single WAV file.
    Classify(ClassifyArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory [default: paths.corpus_dir].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory [default: paths.features_dir].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKind {
    Mlp,
    Lstm,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Architecture [default: model.kind].
    #[arg(long, value_enum)]
    model_kind: Option<ModelKind>,
    /// Feature directory [default: paths.features_dir].
    #[arg(long)]
    features: Option<PathBuf>,
    /// [default: <paths.corpus_dir>/train.jsonl]
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    /// [default: <paths.corpus_dir>/cv.jsonl]
    #[arg(long)]
    cv_manifest: Option<PathBuf>,
    /// Model file to write [default: <paths.models_dir>/model.wdmd].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch loss curve CSV.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[arg(long)]
    model: PathBuf,
    /// Manifest of normal-only utterances.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    /// [default: eval.target_fpr]
    #[arg(long)]
    target_fpr: Option<f64>,
    /// Inference module [default: eval.inference].
    #[arg(long)]
    inference: Option<InferenceModuleSpec>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Model file; repeat to compare models.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Labelled manifest; repeat to pool test sets.
    #[arg(long = "manifest", required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Inference module; repeat for several [default: eval.inference].
    #[arg(long = "inference")]
    inference: Vec<InferenceModuleSpec>,
    /// Emit a comparison grid over all models and modules (eval.compare_modules
    /// unless --inference is given).
    #[arg(long)]
    compare: bool,
    /// Use this threshold instead of the model's operating point.
    #[arg(long, conflicts_with = "tune_on_negatives")]
    threshold: Option<f64>,
    /// Tune each module's threshold on the evaluated negatives at this FPR.
    #[arg(long, value_name = "TARGET_FPR")]
    tune_on_negatives: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for per-utterance posterior CSVs.
    #[arg(long)]
    dump_posteriors: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    wav: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    inference: Option<InferenceModuleSpec>,
    /// Manifest holding the other utterances of this speaker and device,
    /// used for channel mean subtraction.
    #[arg(long)]
    cms_manifest: Option<PathBuf>,
    #[arg(long, requires = "cms_manifest")]
    speaker: Option<String>,
    #[arg(long, requires = "cms_manifest")]
    device: Option<String>,
    /// Write the per-frame posteriors as CSV.
    #[arg(long)]
    dump_posteriors: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(m) = cli.mode {
        cfg.feature_mode = m;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text + "\n")?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = load_config(&cli)?;
    let features_dir = |o: &Option<PathBuf>, cfg: &PipelineConfig| o.clone().unwrap_or_else(|| cfg.paths.features_dir.clone());
    match cli.command {
        Command::Synth(a) => {
            if let Some(n) = a.n_per_class {
                cfg.synth.n_per_class = n;
            }
            if let Some(s) = a.seed {
                cfg.synth.seed = s;
            }
            let out = a.out.unwrap_or_else(|| cfg.paths.corpus_dir.clone());
            let summary = pipeline::cmd_synth(&cfg, &out)?;
            for c in &summary.counts {
                println!("{:<5} whisper {:>5}  normal {:>5}  speakers {:>4}", c.split, c.whisper, c.normal, c.speakers);
            }
        }
        Command::Extract(a) => {
            let out = features_dir(&a.out, &cfg);
            let summary = pipeline::cmd_extract(&cfg, &a.manifest, cfg.feature_mode, &out)?;
            println!("wrote {} feature files of dim {} to {}", summary.written, summary.dim, out.display());
            if !summary.failed.is_empty() {
                return Err(PipelineError::PartialFailure {
                    failed: summary.failed.len(),
                    total: summary.failed.len() + summary.written,
                });
            }
        }
        Command::Train(a) => {
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            if let Some(lr) = a.learning_rate {
                cfg.train.learning_rate = lr;
            }
            if let Some(s) = a.seed {
                cfg.train.seed = s;
            }
            let arch = match (a.model_kind, &cfg.model) {
                (None, arch) => arch.clone(),
                (Some(ModelKind::Mlp), arch @ ArchConfig::Mlp { .. }) | (Some(ModelKind::Lstm), arch @ ArchConfig::Lstm { .. }) => arch.clone(),
                (Some(ModelKind::Mlp), _) => ArchConfig::default_mlp(),
                (Some(ModelKind::Lstm), _) => ArchConfig::default(),
            };
            let corpus = cfg.paths.corpus_dir.clone();
            let train = a.train_manifest.unwrap_or_else(|| corpus.join("train.jsonl"));
            let cv = a.cv_manifest.unwrap_or_else(|| corpus.join("cv.jsonl"));
            let out = a.out.unwrap_or_else(|| cfg.paths.models_dir.join("model.wdmd"));
            let summary = pipeline::cmd_train(&cfg, &arch, &features_dir(&a.features, &cfg), &train, &cv, &out, a.loss_csv.as_deref())?;
            for r in &summary.curve {
                println!(
                    "epoch {:>3}  lr {:.5}  train loss {:.5}  cv loss {:.5}  cv frame acc {:.4}",
                    r.epoch, r.learning_rate, r.train_loss, r.cv_loss, r.cv_frame_accuracy
                );
            }
            println!("model written to {}", out.display());
        }
        Command::Tune(a) => {
            let target = a.target_fpr.unwrap_or(cfg.eval.target_fpr);
            let module = a.inference.unwrap_or(cfg.eval.inference);
            let op = pipeline::cmd_tune(&cfg, &a.model, &a.manifest, &features_dir(&a.features, &cfg), target, module)?;
            print_json(&op, None)?;
        }
        Command::Eval(a) => {
            let modules = match (a.inference.is_empty(), a.compare) {
                (false, _) => a.inference.clone(),
                (true, true) => cfg.eval.compare_modules.clone(),
                (true, false) => vec![cfg.eval.inference],
            };
            let threshold = match (a.threshold, a.tune_on_negatives) {
                (Some(t), _) => ThresholdSource::Fixed(t),
                (None, Some(target)) => ThresholdSource::TuneOnNegatives(target),
                (None, None) => ThresholdSource::Model,
            };
            let req = EvalRequest {
                models: a.models.clone(),
                manifests: a.manifests.clone(),
                features_dir: features_dir(&a.features, &cfg),
                modules,
                threshold,
                dump_dir: a.dump_posteriors.clone(),
            };
            let outcome = pipeline::cmd_eval(&cfg, &req)?;
            if a.compare || outcome.reports.len() > 1 {
                let grid = outcome.grid();
                eprint!("{}", pipeline::render_grid(&grid));
                print_json(&grid, a.report.as_deref())?;
            } else {
                print_json(&outcome.reports[0].1, a.report.as_deref())?;
            }
        }
        Command::Classify(a) => {
            let opts = ClassifyOptions {
                threshold: a.threshold,
                module: a.inference,
                cms_manifest: a.cms_manifest,
                speaker_id: a.speaker,
                device_id: a.device,
                dump_posteriors: a.dump_posteriors,
            };
            let r = pipeline::cmd_classify(&a.model, &a.wav, &opts)?;
            let line = serde_json::json!({ "label": r.label, "score": r.score, "threshold": r.threshold });
            println!("{line}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("WHISPERDET_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 5 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
