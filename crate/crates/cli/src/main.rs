use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use voxbench::benchmark::{prepare, with_resolved_audio, run_benchmark, run_cell, score_dataset, thread_pool, CellStatus, RunSummary};
use voxbench::config::{CellKey, DatasetConfig, RunConfig};
use voxbench::dataset::{compare_datasets, stratified_split, write_manifest, Label, LabeledDataset};
use voxbench::evaluation::{evaluate, BootstrapConfig};
use voxbench::extract::{audio_path, compute_raw, mfcc_spec};
use voxbench::features::{write_feature_table, FeatureSet, FeatureTable};
use voxbench::report::render_report;
use voxbench::stats::fairness_battery;
use voxbench::synth::{write_synthetic_dataset, SynthConfig};
use voxbench::timing::{inputs_for, time_bundle, TimingReport};
use voxbench::{load_bundle, Algorithm, Error, InputVariant};

/// `println!` that tolerates a closed stdout (e.g. piping into `head`).
macro_rules! emit {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "voxbench", version, about = "Benign vs malignant voice classification benchmark")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for relative audio paths.
    #[arg(long, global = true)]
    audio_root: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

/// Dataset files given on the command line instead of through `--config`.
#[derive(Args, Clone, Default)]
struct DatasetArgs {
    /// Manifest CSV.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Label map file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Symptom schema file.
    #[arg(long)]
    symptoms: Option<PathBuf>,
    /// Embedding file (`id,dim=<D>` format).
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

impl DatasetArgs {
    /// Command-line files override the configured training dataset.
    fn resolve(&self, cfg: &RunConfig) -> anyhow::Result<DatasetConfig> {
        let mut d = cfg.dataset.clone();
        if let Some(m) = &self.manifest {
            d = DatasetConfig {
                manifest: m.clone(),
                ..Default::default()
            };
        }
        if self.labels.is_some() {
            d.label_map = self.labels.clone();
        }
        if self.symptoms.is_some() {
            d.symptoms = self.symptoms.clone();
        }
        if self.embeddings.is_some() {
            d.embeddings = self.embeddings.clone();
        }
        if d.manifest.as_os_str().is_empty() {
            return Err(Error::Config("no manifest: pass --manifest or set [dataset] in --config".into()).into());
        }
        Ok(d)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (audio, manifest, labels, embeddings).
    Synth {
        #[arg(long, default_value_t = 600)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        prevalence: f64,
        /// Recording length in seconds.
        #[arg(long, default_value_t = 3.0)]
        duration: f64,
        #[arg(long)]
        no_symptoms: bool,
        #[arg(long, default_value = "synthetic")]
        name: String,
    },
    /// Stratified train/test split of a manifest.
    Split {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Compute one feature set for every row of a manifest.
    Extract {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        feature_set: FeatureSet,
        /// MFCC length in frames; derive it from the training manifest when omitted.
        #[arg(long)]
        mfcc_frames: Option<usize>,
    },
    /// Tune and fit one cell of the model matrix.
    Train {
        #[arg(long)]
        feature_set: FeatureSet,
        #[arg(long)]
        variant: InputVariant,
        #[arg(long)]
        algorithm: Algorithm,
    },
    /// Score a manifest with a saved bundle and report metrics with CIs.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        data: DatasetArgs,
    },
    /// Sex/age versus correctness tests for a bundle on a manifest.
    Fairness {
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        data: DatasetArgs,
    },
    /// Per-file inference latency of one bundle or every bundle of a run.
    Timing {
        /// Bundle files; omit to time every bundle under `--run`.
        #[arg(long)]
        bundle: Vec<PathBuf>,
        #[arg(long)]
        run: Option<PathBuf>,
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Time only the first N rows of the manifest.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Demographic and duration comparison of two datasets.
    CompareDatasets {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        labels_a: Option<PathBuf>,
        #[arg(long)]
        labels_b: Option<PathBuf>,
    },
    /// Run the full model matrix.
    Benchmark {
        /// Feature selector fitted inside every fold (`fold`) or once (`global`).
        #[arg(long)]
        select_scope: Option<voxbench::model_selection::SelectScope>,
    },
    /// Render `report.md` for a finished run.
    Report {
        /// Run directory (defaults to `--out`).
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

fn load_config(g: &Global) -> anyhow::Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(r) = &g.audio_root {
        cfg.audio_root = Some(r.clone());
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_dataset(path: &Path, ds: &LabeledDataset) -> anyhow::Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_manifest(ds, f)?;
    Ok(())
}

/// Exit code for a finished command.
enum Outcome {
    Ok,
    Partial,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Synth {
            n,
            prevalence,
            duration,
            no_symptoms,
            name,
        } => {
            let sc = SynthConfig {
                n,
                prevalence,
                duration,
                symptoms: !no_symptoms,
                seed: cfg.seed,
                name,
                ..Default::default()
            };
            let paths = write_synthetic_dataset(&cfg.out, &sc)?;
            emit!("{}", serde_json::to_string_pretty(&serde_json::json!({
                "manifest": paths.manifest,
                "label_map": paths.label_map,
                "symptoms": paths.symptom_schema,
                "embeddings": paths.embeddings,
                "audio_root": paths.audio_root,
            }))?);
        }
        Command::Split { data, test_fraction } => {
            let d = data.resolve(&cfg)?;
            let ds = d.load()?;
            let frac = test_fraction.unwrap_or(cfg.test_fraction);
            let root = d.sources(cfg.audio_root.as_deref())?.audio_root;
            let (train, test) = stratified_split(&with_resolved_audio(&ds, &root), frac, cfg.seed)?;
            std::fs::create_dir_all(&cfg.out)?;
            write_dataset(&cfg.out.join("train.csv"), &train)?;
            write_dataset(&cfg.out.join("test.csv"), &test)?;
            for (name, part) in [("train", &train), ("test", &test)] {
                emit!(
                    "{name}: {} rows, {} malignant, {} benign",
                    part.len(),
                    part.count(Label::Malignant),
                    part.count(Label::Benign)
                );
            }
        }
        Command::Extract {
            data,
            feature_set,
            mfcc_frames,
        } => {
            let d = data.resolve(&cfg)?;
            let ds = d.load()?;
            let sources = d.sources(cfg.audio_root.as_deref())?;
            let raw = compute_raw(&ds, &sources, &[feature_set], &cfg.mfcc)?;
            let target = match (feature_set, mfcc_frames) {
                (FeatureSet::Mfcc, None) => {
                    warn!("MFCC length derived from this manifest; pass --mfcc-frames for non-training data");
                    mfcc_spec(&raw, &cfg.mfcc)?.map(|s| s.target_frames)
                }
                (_, t) => t,
            };
            let table = FeatureTable::new(ds.records.iter().map(|r| r.id.clone()).collect(), raw.matrix(feature_set, target)?)?;
            std::fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join(format!("{}.{}.csv", ds.name, feature_set));
            let f = std::fs::File::create(&path)?;
            write_feature_table(f, &table)?;
            emit!("{}", path.display());
        }
        Command::Train {
            feature_set,
            variant,
            algorithm,
        } => {
            cfg.feature_sets = vec![feature_set];
            cfg.variants = vec![variant];
            cfg.algorithms = vec![algorithm];
            cfg.validate()?;
            let key = CellKey {
                feature_set,
                variant,
                algorithm,
            };
            std::fs::create_dir_all(cfg.out.join("cells"))?;
            let outcome = thread_pool(cfg.jobs)?.install(|| -> anyhow::Result<_> {
                let data = prepare(&cfg)?;
                Ok(run_cell(key, &data, &cfg))
            })?;
            emit!("{}", serde_json::to_string_pretty(&outcome)?);
            if outcome.status == CellStatus::Failed {
                return Ok(Outcome::Partial);
            }
        }
        Command::Evaluate { bundle, data } => {
            let b = load_bundle(&bundle)?;
            let d = data.resolve(&cfg)?;
            let ds = d.load()?;
            let scores = score_dataset(&b, &ds, &d.sources(cfg.audio_root.as_deref())?)?;
            let report = evaluate(
                &ds.labels(),
                &scores,
                &BootstrapConfig {
                    n_resamples: cfg.bootstrap_resamples,
                    seed: cfg.seed,
                    ..Default::default()
                },
            )?;
            write_json(&cfg.out.join(format!("{}.{}.evaluation.json", b.cell_id, ds.name)), &report)?;
            emit!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Fairness { bundle, data } => {
            let b = load_bundle(&bundle)?;
            let d = data.resolve(&cfg)?;
            let ds = d.load()?;
            let scores = score_dataset(&b, &ds, &d.sources(cfg.audio_root.as_deref())?)?;
            let predicted: Vec<Label> = scores.iter().map(|&s| voxbench::classifiers::label_of(s)).collect();
            let report = fairness_battery(&ds.records, &predicted)?;
            write_json(&cfg.out.join(format!("{}.{}.fairness.json", b.cell_id, ds.name)), &report)?;
            emit!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Timing {
            bundle,
            run,
            data,
            repeats,
            limit,
        } => {
            let mut bundles = bundle;
            if let Some(r) = &run {
                let summary = RunSummary::load(r)?;
                bundles.extend(
                    summary
                        .cells
                        .iter()
                        .filter(|c| c.status == CellStatus::Ok)
                        .map(|c| voxbench::benchmark::bundle_path(r, &c.key)),
                );
            }
            if bundles.is_empty() {
                bail!(Error::Config("timing needs --bundle or --run".into()));
            }
            let d = data.resolve(&cfg)?;
            let mut ds = d.load()?;
            if let Some(n) = limit {
                ds.records.truncate(n);
            }
            let sources = d.sources(cfg.audio_root.as_deref())?;
            let inputs = inputs_for(&ds.records, &sources.audio_root, sources.embeddings.as_ref());
            let dir = cfg.out.join("timing");
            std::fs::create_dir_all(&dir)?;
            let mut failed = false;
            for path in &bundles {
                let b = load_bundle(path)?;
                let report = time_bundle(&b, &inputs, repeats)?;
                std::fs::write(dir.join(format!("{}.csv", b.cell_id)), report.to_csv())?;
                write_json(&dir.join(format!("{}.json", b.cell_id)), &report)?;
                failed |= !report.failures.is_empty();
                if let Some(s) = report.summary.get(&voxbench::timing::Stage::EndToEnd) {
                    emit!("{}: end-to-end median {:.4} s, p95 {:.4} s", b.cell_id, s.median, s.p95);
                }
            }
            if failed {
                return Ok(Outcome::Partial);
            }
        }
        Command::CompareDatasets { a, b, labels_a, labels_b } => {
            let load = |m: &PathBuf, l: &Option<PathBuf>| -> anyhow::Result<(LabeledDataset, Option<Vec<f64>>)> {
                let d = DatasetConfig {
                    manifest: m.clone(),
                    label_map: l.clone(),
                    ..Default::default()
                };
                let ds = d.load()?;
                let root = d.sources(cfg.audio_root.as_deref())?.audio_root;
                let durations: Option<Vec<f64>> = ds
                    .records
                    .iter()
                    .map(|r| voxbench::audio::wav_duration(&audio_path(&root, r)).ok())
                    .collect();
                if durations.is_none() {
                    warn!("{}: some recordings are unreadable; duration test skipped", ds.name);
                }
                Ok((ds, durations))
            };
            let (da, dura) = load(&a, &labels_a)?;
            let (db, durb) = load(&b, &labels_b)?;
            let report = compare_datasets(&da, &db, dura.as_deref(), durb.as_deref());
            write_json(&cfg.out.join(format!("compare.{}.{}.json", da.name, db.name)), &report)?;
            emit!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Benchmark { select_scope } => {
            if cli.global.config.is_none() {
                bail!(Error::Config("benchmark needs --config".into()));
            }
            if let Some(s) = select_scope {
                cfg.select_scope = s;
            }
            let summary = run_benchmark(&cfg)?;
            let failed = summary.n_failed();
            info!("{} cells, {failed} failed; results in {}", summary.cells.len(), cfg.out.display());
            std::fs::write(cfg.out.join("report.md"), render_report(&summary, &[]))?;
            if failed > 0 {
                return Ok(Outcome::Partial);
            }
        }
        Command::Report { run } => {
            let dir = run.unwrap_or_else(|| cfg.out.clone());
            let summary = RunSummary::load(&dir)?;
            let mut timings: Vec<TimingReport> = Vec::new();
            if let Ok(entries) = std::fs::read_dir(dir.join("timing")) {
                let mut paths: Vec<PathBuf> = entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
                paths.sort();
                for p in paths {
                    timings.push(serde_json::from_str(&std::fs::read_to_string(&p)?)?);
                }
            }
            let path = dir.join("report.md");
            std::fs::write(&path, render_report(&summary, &timings))?;
            emit!("{}", path.display());
        }
    }
    Ok(Outcome::Ok)
}

fn is_config_error(e: &anyhow::Error) -> bool {
    matches!(e.downcast_ref::<Error>(), Some(Error::Config(_)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
