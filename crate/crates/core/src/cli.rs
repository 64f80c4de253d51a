//! Command-line front end: `synth`, `train-breath`, `detect`, `evaluate`, `fetch`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::annotations::write_annotations;
use crate::audio_io::{fetch_manifest_sources, load_wav, synthesize_corpus, write_corpus, Manifest};
use crate::breath_stats::{compute_stats, stats_csv, BreathStats};
use crate::classifiers::ClassifierKind;
use crate::error::{Error, Result};
use crate::eval::{
    detect_corpus_stats, evaluate_classifier, model_digest, news_corpus_items, outlet_disjoint_split,
    podcast_corpus_items, test1_contiguous_kfold, test2_leave_one_podcast, test3_leave_one_speaker,
    train_final_detector, CorpusIndex, CorpusKind, ExperimentConfig, ExperimentReport, NewsCorpusSpec,
    PodcastCorpusSpec,
};
use crate::features::extract_features;
use crate::metrics::scores_csv;
use crate::nn::{load_model, predict_file, write_model_with_meta};
use crate::plots::{box_plot_svg, scatter_svg};
use crate::postprocess::slices_to_intervals_within;

#[derive(Debug, Parser)]
#[command(name = "breathline", version, about = "Breath-based deepfake speech detection")]
pub struct Cli {
    /// More log output (-v info, -vv debug); BREATHLINE_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic corpus: WAVs, breath annotations and a manifest.
    Synth(SynthArgs),
    /// Train the breath detector on an annotated corpus.
    TrainBreath(TrainArgs),
    /// Detect breaths and compute breath statistics per file.
    Detect(DetectArgs),
    /// Run a generalization test or the end-to-end real/fake evaluation.
    Evaluate(EvaluateArgs),
    /// Download manifest entries whose source is a URL.
    Fetch(FetchArgs),
}

/// Settings shared by commands that extract features or train.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub window_ms: Option<f64>,
    #[arg(long)]
    pub hop_ms: Option<f64>,
    #[arg(long)]
    pub n_mels: Option<usize>,
    /// Breath probability threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub min_breath_ms: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
}

impl CommonArgs {
    /// Base config plus overrides, with dependent settings kept consistent.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.window_ms {
            cfg.features.window_ms = v;
        }
        if let Some(v) = self.hop_ms {
            cfg.features.hop_ms = v;
        }
        if let Some(v) = self.n_mels {
            cfg.features.n_mels = v;
        }
        if let Some(v) = self.threshold {
            cfg.detection.binarize_threshold = v;
        }
        if let Some(v) = self.min_breath_ms {
            cfg.detection.min_breath_ms = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        cfg.arch.n_features = cfg.features.num_features();
        cfg.detection.step_ms = cfg.arch.frames_per_step() as f64 * cfg.features.hop_ms;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorpusChoice {
    News,
    Podcast,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "news")]
    pub kind: CorpusChoice,
    /// Human-read (breathing) items, news kind.
    #[arg(long, default_value_t = 20)]
    pub real: usize,
    /// TTS-style (breathless) items, news kind.
    #[arg(long, default_value_t = 20)]
    pub fake: usize,
    /// Outlets per class, news kind.
    #[arg(long, default_value_t = 2)]
    pub outlets: usize,
    #[arg(long, default_value_t = 8)]
    pub podcasts: usize,
    #[arg(long, default_value_t = 4)]
    pub speakers: usize,
    #[arg(long)]
    pub duration_ms: Option<u64>,
    #[arg(long, default_value_t = 8.0)]
    pub bpm_min: f64,
    #[arg(long, default_value_t = 14.0)]
    pub bpm_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Breath-annotated corpus.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, conflicts_with = "files")]
    pub manifest: Option<PathBuf>,
    /// WAV files, as an alternative to --manifest.
    #[arg(required_unless_present = "manifest")]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Test1,
    Test2,
    Test3,
    Pipeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierChoice {
    Threshold,
    Svc,
    Tree,
}

impl From<ClassifierChoice> for ClassifierKind {
    fn from(c: ClassifierChoice) -> Self {
        match c {
            ClassifierChoice::Threshold => ClassifierKind::Threshold,
            ClassifierChoice::Svc => ClassifierKind::Svc,
            ClassifierChoice::Tree => ClassifierKind::Tree,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    /// Podcast corpus for test1-3; labelled real/fake corpus for pipeline.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Trained detector for pipeline; otherwise one is trained on --podcast-manifest.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub podcast_manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "svc")]
    pub classifier: ClassifierChoice,
    /// Test 1 repetitions.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 2 for configuration problems, 1 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Validation(_) => 2,
        _ => 1,
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("BREATHLINE_LOG", default))
        .format_timestamp(None)
        .try_init();
}

fn dispatch(cmd: &Command) -> Result<()> {
    let started = Instant::now();
    let (out, what) = match cmd {
        Command::Synth(a) => (cmd_synth(a)?, "synth"),
        Command::TrainBreath(a) => (cmd_train_breath(a)?, "train-breath"),
        Command::Detect(a) => (cmd_detect(a)?, "detect"),
        Command::Evaluate(a) => (cmd_evaluate(a)?, "evaluate"),
        Command::Fetch(a) => (cmd_fetch(a)?, "fetch"),
    };
    // wall-clock data lives only in this sidecar so artifacts stay reproducible
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let log = format!(
        "command={what}\nfinished_unix={now}\nelapsed_s={:.3}\n",
        started.elapsed().as_secs_f64()
    );
    write_file(&out.join("run.log"), &log)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(Error::at(path))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::at(dir))
}

/// Leading comment line for CSV/TSV outputs.
fn provenance(cfg: &ExperimentConfig) -> String {
    format!(
        "# breathline {} config_digest={} seed={}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.digest(),
        cfg.seed
    )
}

pub fn cmd_synth(a: &SynthArgs) -> Result<PathBuf> {
    let items = match a.kind {
        CorpusChoice::News => news_corpus_items(&NewsCorpusSpec {
            real: a.real,
            fake: a.fake,
            real_outlets: a.outlets,
            fake_outlets: a.outlets,
            duration_ms: a.duration_ms.unwrap_or(30_000),
            bpm_range: (a.bpm_min, a.bpm_max),
            seed: a.seed,
        })?,
        CorpusChoice::Podcast => podcast_corpus_items(&PodcastCorpusSpec {
            podcasts: a.podcasts,
            speakers: a.speakers,
            duration_ms: a.duration_ms.unwrap_or(40_000),
            seed: a.seed,
        })?,
    };
    let corpus = synthesize_corpus(&items)?;
    let manifest = write_corpus(&a.out, &corpus)?;
    let spec = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "seed": a.seed,
        "items": items,
    });
    write_file(&a.out.join("synthesis.json"), &serde_json::to_string_pretty(&spec)?)?;
    println!("{}", manifest.display());
    Ok(a.out.clone())
}

pub fn cmd_train_breath(a: &TrainArgs) -> Result<PathBuf> {
    let cfg = a.common.resolve()?;
    ensure_dir(&a.out)?;
    let manifest = Manifest::load(&a.manifest)?;
    let corpus = CorpusIndex::from_manifest(
        &manifest,
        CorpusKind::Podcast,
        &cfg.features,
        cfg.arch.frames_per_step(),
        cfg.workers,
    )?;
    let (model, report) = train_final_detector(&corpus, &cfg)?;
    let meta = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_digest": cfg.digest(),
        "corpus_digest": corpus.digest(),
        "seed": cfg.seed,
        "features": cfg.features,
    });
    let bytes = write_model_with_meta(&model, &meta)?;
    let model_path = a.out.join("model.bin");
    std::fs::write(&model_path, bytes).map_err(Error::at(&model_path))?;
    let summary = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_digest": cfg.digest(),
        "corpus_digest": corpus.digest(),
        "seed": cfg.seed,
        "model_digest": model_digest(&model)?,
        "report": report,
    });
    write_file(&a.out.join("train_report.json"), &serde_json::to_string_pretty(&summary)?)?;
    let mut loss = provenance(&cfg);
    loss.push_str("epoch,train_loss\n");
    for (e, l) in report.train_loss.iter().enumerate() {
        writeln!(loss, "{e},{l}").unwrap();
    }
    write_file(&a.out.join("train_loss.csv"), &loss)?;
    write_file(&a.out.join("config.toml"), &cfg.to_toml())?;
    println!("{}", model_path.display());
    Ok(a.out.clone())
}

struct DetectInput {
    id: String,
    label: String,
    path: PathBuf,
}

pub fn cmd_detect(a: &DetectArgs) -> Result<PathBuf> {
    let cfg = a.common.resolve()?;
    let model = load_model(&a.model)?;
    if model.arch.n_features != cfg.features.num_features() {
        return Err(Error::Config(format!(
            "model expects {} features; the feature settings give {}",
            model.arch.n_features,
            cfg.features.num_features()
        )));
    }
    ensure_dir(&a.out)?;
    let mut inputs: Vec<DetectInput> = match &a.manifest {
        Some(m) => {
            let manifest = Manifest::load(m)?;
            manifest
                .entries
                .iter()
                .map(|e| DetectInput {
                    id: e.id.clone(),
                    label: e.label.to_string(),
                    path: manifest.resolve(&e.source),
                })
                .collect()
        }
        None => a
            .files
            .iter()
            .map(|p| DetectInput {
                id: p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()),
                label: "unlabeled".into(),
                path: p.clone(),
            })
            .collect(),
    };
    inputs.sort_by(|x, y| x.id.cmp(&y.id));
    if let Some(w) = inputs.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::Input(format!("two inputs share the id `{}`", w[0].id)));
    }

    let results = crate::eval::par_map(inputs.len(), cfg.workers, |i| {
        let inp = &inputs[i];
        let run = || -> Result<BreathStats> {
            let audio = load_wav(&inp.path)?.to_canonical();
            let features = extract_features(&audio, &cfg.features)?;
            let probs: Vec<f64> = predict_file(&model, &features)?.into_iter().map(f64::from).collect();
            let breaths = slices_to_intervals_within(&probs, &cfg.detection, audio.duration_ms());
            write_annotations(a.out.join(format!("{}.breath.tsv", inp.id)), &breaths)?;
            compute_stats(&breaths, audio.duration_ms())
        };
        Ok(run())
    })?;

    let mut ok = Vec::new();
    let mut errors = provenance(&cfg);
    errors.push_str("id,error\n");
    let mut failed = 0;
    for (inp, r) in inputs.iter().zip(results) {
        match r {
            Ok(s) => ok.push((inp.id.as_str(), inp.label.as_str(), s)),
            Err(e) => {
                log::error!("{}: {e}", inp.id);
                writeln!(errors, "{},\"{}\"", inp.id, e.to_string().replace('"', "'")).unwrap();
                failed += 1;
            }
        }
    }
    let mut csv = provenance(&cfg);
    csv.push_str(&stats_csv(ok.iter().map(|(i, l, s)| (*i, *l, s)))?);
    write_file(&a.out.join("stats.csv"), &csv)?;
    if failed > 0 {
        write_file(&a.out.join("errors.csv"), &errors)?;
        return Err(Error::Input(format!(
            "{failed} of {} inputs failed; see errors.csv",
            inputs.len()
        )));
    }
    Ok(a.out.clone())
}

fn write_experiment(out: &Path, cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<()> {
    let name = &report.experiment;
    write_file(&out.join(format!("{name}.json")), &report.to_json())?;
    let mut csv = provenance(cfg);
    csv.push_str("fold,held_out,auprc\n");
    for f in &report.folds {
        writeln!(csv, "{},\"{}\",{}", f.fold, f.held_out.join(" "), f.auprc).unwrap();
    }
    write_file(&out.join(format!("{name}_auprc.csv")), &csv)?;
    let svg = box_plot_svg(&format!("{name} validation AUPRC"), "AUPRC", &[(name.clone(), report.values())]);
    write_file(&out.join(format!("{name}_auprc.svg")), &svg)
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<PathBuf> {
    let mut cfg = a.common.resolve()?;
    if let Some(n) = a.iterations {
        cfg.iterations = n;
        cfg.validate()?;
    }
    ensure_dir(&a.out)?;
    write_file(&a.out.join("config.toml"), &cfg.to_toml())?;
    let fps = cfg.arch.frames_per_step();
    let manifest = Manifest::load(&a.manifest)?;
    match a.experiment {
        Experiment::Test1 | Experiment::Test2 | Experiment::Test3 => {
            let corpus = CorpusIndex::from_manifest(&manifest, CorpusKind::Podcast, &cfg.features, fps, cfg.workers)?;
            let report = match a.experiment {
                Experiment::Test1 => test1_contiguous_kfold(&corpus, &cfg)?,
                Experiment::Test2 => test2_leave_one_podcast(&corpus, &cfg)?,
                _ => test3_leave_one_speaker(&corpus, &cfg)?,
            };
            write_experiment(&a.out, &cfg, &report)?;
            println!("{} mean AUPRC {:.4} ± {:.4}", report.experiment, report.mean_auprc, report.std_auprc);
        }
        Experiment::Pipeline => {
            let detector = match (&a.model, &a.podcast_manifest) {
                (Some(m), _) => load_model(m)?,
                (None, Some(p)) => {
                    let podcasts = Manifest::load(p)?;
                    let corpus =
                        CorpusIndex::from_manifest(&podcasts, CorpusKind::Podcast, &cfg.features, fps, cfg.workers)?;
                    train_final_detector(&corpus, &cfg)?.0
                }
                (None, None) => {
                    return Err(Error::Config(
                        "pipeline evaluation needs --model or --podcast-manifest".into(),
                    ))
                }
            };
            let corpus = CorpusIndex::from_manifest(&manifest, CorpusKind::News, &cfg.features, fps, cfg.workers)?;
            let split = outlet_disjoint_split(&corpus, cfg.seed)?;
            let stats = detect_corpus_stats(&detector, &corpus, &cfg)?;
            let kind = ClassifierKind::from(a.classifier);
            let report = evaluate_classifier(&stats, &corpus, &split, kind, &model_digest(&detector)?, &cfg)?;

            write_file(&a.out.join(format!("pipeline_{kind}.json")), &report.to_json())?;
            let mut scores = provenance(&cfg);
            scores.push_str(&scores_csv(&report.scores)?);
            write_file(&a.out.join(format!("scores_{kind}.csv")), &scores)?;
            let mut csv = provenance(&cfg);
            csv.push_str(&stats_csv(stats.iter().map(|s| (s.id.as_str(), label_str(s.label.is_real()), &s.stats)))?);
            write_file(&a.out.join("stats.csv"), &csv)?;
            let points: Vec<(f64, f64, bool)> = stats
                .iter()
                .map(|s| (s.stats.avg_breaths_per_minute, s.stats.avg_breath_duration_ms, s.label.is_real()))
                .collect();
            let svg = scatter_svg("Breath statistics by class", "breaths per minute", "mean breath ms", &points);
            write_file(&a.out.join("stats_scatter.svg"), &svg)?;
            let r = &report.report;
            println!(
                "{kind}: AUPRC {} EER {} accuracy {:.4} (outlet overlap {})",
                r.auprc.map_or("n/a".into(), |v| format!("{v:.4}")),
                r.eer.map_or("n/a".into(), |v| format!("{v:.4}")),
                r.point.accuracy,
                report.outlet_overlap
            );
        }
    }
    Ok(a.out.clone())
}

fn label_str(real: bool) -> &'static str {
    if real {
        "real"
    } else {
        "fake"
    }
}

pub fn cmd_fetch(a: &FetchArgs) -> Result<PathBuf> {
    let manifest = Manifest::load(&a.manifest)?;
    ensure_dir(&a.out)?;
    let records = fetch_manifest_sources(&manifest, &a.out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let mut log = format!("# breathline {}\n", env!("CARGO_PKG_VERSION"));
    log.push_str(&String::from_utf8_lossy(&bytes));
    write_file(&a.out.join("fetch_log.csv"), &log)?;
    let failed = records.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        return Err(Error::Input(format!("{failed} of {} downloads failed", records.len())));
    }
    Ok(a.out.clone())
}
