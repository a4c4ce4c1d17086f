//! Implementation of the `specloc` command line tool.
//!
//! Every command is first resolved into an [`Invocation`]: the command name
//! plus every setting it will use, with config files already loaded. The
//! invocation goes into the run manifest, which is how `replay` reruns a
//! command without the original config files.

mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use specloc::augment::{
    build_augmented, freegan_generate, pointgan_generate, pseudo_label, train_freegan,
    train_pointgan, GanConfig, GanKind, Selection,
};
use specloc::datamodel::{read_dataset, write_dataset, Coordinate, Dataset, Origin};
use specloc::eval::{
    normalized_std, rmse, run_experiment, summarize, write_results_csv, ExperimentConfig,
    TrainingProfile,
};
use specloc::locmodel::{
    hyper_search, train_localizer, train_weak_model_with, LocConfig, TrainedLocalizer,
};
use specloc::seed::derive_seed;
use specloc::simenv::WorldConfig;

pub use manifest::{file_digest, FileDigest, RunManifest, StageTiming};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "specloc", version, about = "Simulated spectral/RSSI localization with GAN augmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config file for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum number of concurrent runs.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GanArg {
    Pointgan,
    Freegan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentArg {
    Exp1,
    Exp2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Wifimix,
    Robust,
    RobustCluttered,
    Localizer,
    Weak,
    Gan,
    Exp1,
    Exp2,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a world (default: Spectral-WiFiMix) and write one CSV per modality.
    Gen,
    /// Train a localizer on a dataset CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Train the fixed-width pseudo-labeling model instead.
        #[arg(long, conflicts_with = "search")]
        weak: bool,
        /// Random-search this many configurations first.
        #[arg(long)]
        search: Option<usize>,
    },
    /// Train a GAN on real samples and write synthetic samples.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        method: GanArg,
        #[arg(long, default_value_t = 100)]
        per_point: usize,
        /// Number of FreeGAN samples.
        #[arg(long, default_value_t = 50_000)]
        n: usize,
        /// Keep only the k samples the discriminator rates most realistic.
        #[arg(long)]
        top_k: Option<usize>,
        /// Pseudo-labeling model; trained on `data` when absent.
        #[arg(long)]
        weak_model: Option<PathBuf>,
    },
    /// Score a saved localizer on a dataset CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Normalized STD of the samples at every coordinate.
    Stability {
        #[arg(long)]
        data: PathBuf,
    },
    /// Run a full multi-seed experiment.
    Experiment {
        #[arg(value_enum)]
        which: ExperimentArg,
        /// Training budget: full, quick or smoke. Ignored with --config.
        #[arg(long, default_value = "full")]
        profile: String,
    },
    /// Rerun the command recorded in a manifest and compare outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Print a default config as JSON.
    Defaults {
        #[arg(value_enum)]
        preset: Preset,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(specloc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(specloc::Error::Divergence { .. }) => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<specloc::Error> for CliError {
    fn from(e: specloc::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// A fully resolved command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Invocation {
    Gen {
        world: WorldConfig,
        seed: u64,
    },
    Train {
        data: PathBuf,
        config: LocConfig,
        weak: bool,
        search_trials: Option<usize>,
        seed: u64,
    },
    Augment {
        data: PathBuf,
        kind: GanKind,
        gan: GanConfig,
        per_point: usize,
        n: usize,
        selection: Selection,
        weak_config: LocConfig,
        weak_model: Option<PathBuf>,
        seed: u64,
    },
    Eval {
        model: PathBuf,
        data: PathBuf,
    },
    Stability {
        data: PathBuf,
    },
    Experiment {
        config: ExperimentConfig,
        jobs: usize,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Gen { .. } => "gen",
            Invocation::Train { .. } => "train",
            Invocation::Augment { .. } => "augment",
            Invocation::Eval { .. } => "eval",
            Invocation::Stability { .. } => "stability",
            Invocation::Experiment { .. } => "experiment",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Invocation::Gen { seed, .. }
            | Invocation::Train { seed, .. }
            | Invocation::Augment { seed, .. } => Some(*seed),
            Invocation::Experiment { config, .. } => Some(config.master_seed),
            Invocation::Eval { .. } | Invocation::Stability { .. } => None,
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Invocation::Gen { .. } | Invocation::Experiment { .. } => vec![],
            Invocation::Train { data, .. } | Invocation::Stability { data } => vec![data.clone()],
            Invocation::Augment { data, weak_model, .. } => {
                std::iter::once(data.clone()).chain(weak_model.clone()).collect()
            }
            Invocation::Eval { model, data } => vec![model.clone(), data.clone()],
        }
    }
}

/// Reads a JSON config, reporting the offending field path and line.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|m| CliError::Usage(format!("{}: {m}", path.display())))
}

pub fn parse_config<T: DeserializeOwned>(text: &str) -> std::result::Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        format!(
            "line {} column {}: field `{}`: {}",
            inner.line(),
            inner.column(),
            e.path(),
            inner
        )
    })
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    fs::canonicalize(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
}

/// Turns parsed arguments into an invocation.
pub fn resolve(cli: &Cli) -> CliResult<Invocation> {
    let seed = cli.seed.unwrap_or(0);
    let config = cli.config.as_deref();
    Ok(match &cli.command {
        Command::Gen => Invocation::Gen {
            world: match config {
                Some(p) => load_config(p)?,
                None => WorldConfig::spectral_wifimix(),
            },
            seed,
        },
        Command::Train { data, weak, search } => Invocation::Train {
            data: absolute(data)?,
            config: match (config, weak) {
                (Some(p), _) => load_config(p)?,
                (None, true) => LocConfig::weak(),
                (None, false) => LocConfig::default(),
            },
            weak: *weak,
            search_trials: *search,
            seed,
        },
        Command::Augment { data, method, per_point, n, top_k, weak_model } => Invocation::Augment {
            data: absolute(data)?,
            kind: match method {
                GanArg::Pointgan => GanKind::PointGan,
                GanArg::Freegan => GanKind::FreeGan,
            },
            gan: match config {
                Some(p) => load_config(p)?,
                None => GanConfig::default(),
            },
            per_point: *per_point,
            n: *n,
            selection: top_k.map_or(Selection::All, Selection::TopK),
            weak_config: LocConfig::weak(),
            weak_model: weak_model.as_deref().map(absolute).transpose()?,
            seed,
        },
        Command::Eval { model, data } => Invocation::Eval {
            model: absolute(model)?,
            data: absolute(data)?,
        },
        Command::Stability { data } => Invocation::Stability { data: absolute(data)? },
        Command::Experiment { which, profile } => {
            let mut cfg: ExperimentConfig = match config {
                Some(p) => load_config(p)?,
                None => {
                    let profile = TrainingProfile::by_name(profile)
                        .map_err(|e| CliError::Usage(e.to_string()))?;
                    match which {
                        ExperimentArg::Exp1 => ExperimentConfig::experiment1(profile),
                        ExperimentArg::Exp2 => ExperimentConfig::experiment2(profile),
                    }
                }
            };
            if let Some(s) = cli.seed {
                cfg.master_seed = s;
            }
            Invocation::Experiment { config: cfg, jobs: cli.jobs }
        }
        Command::Replay { .. } | Command::Defaults { .. } => {
            return Err(CliError::Usage("command has no invocation".into()))
        }
    })
}

pub fn default_config(preset: Preset) -> serde_json::Value {
    let v = match preset {
        Preset::Wifimix => serde_json::to_value(WorldConfig::spectral_wifimix()),
        Preset::Robust => serde_json::to_value(WorldConfig::spectral_robust()),
        Preset::RobustCluttered => {
            serde_json::to_value(WorldConfig::spectral_robust().with_clutter(0, 8))
        }
        Preset::Localizer => serde_json::to_value(LocConfig::default()),
        Preset::Weak => serde_json::to_value(LocConfig::weak()),
        Preset::Gan => serde_json::to_value(GanConfig::default()),
        Preset::Exp1 => serde_json::to_value(ExperimentConfig::experiment1(TrainingProfile::full())),
        Preset::Exp2 => serde_json::to_value(ExperimentConfig::experiment2(TrainingProfile::full())),
    };
    v.expect("default configs serialize")
}

/// Runs a parsed command line. Returns the manifest of the
/// run, if the command writes one.
pub fn run(cli: &Cli) -> CliResult<Option<RunManifest>> {
    match &cli.command {
        Command::Defaults { preset } => {
            println!("{}", serde_json::to_string_pretty(&default_config(*preset)).expect("json"));
            Ok(None)
        }
        Command::Replay { manifest } => replay(manifest, &cli.out).map(Some),
        _ => {
            let inv = resolve(cli)?;
            execute(&inv, &cli.out).map(Some)
        }
    }
}

/// Reruns a recorded invocation into `out` and fails unless every output
/// matches the recorded digest.
pub fn replay(manifest_path: &Path, out: &Path) -> CliResult<RunManifest> {
    let old: RunManifest = load_config(manifest_path)?;
    for input in &old.inputs {
        let now = file_digest(&input.path)?;
        if now.sha256 != input.sha256 {
            return Err(CliError::Usage(format!(
                "input {} changed since the recorded run",
                input.path.display()
            )));
        }
    }
    let new = execute(&old.invocation, out)?;
    let recorded: BTreeMap<_, _> = old.outputs.iter().map(|d| (&d.path, &d.sha256)).collect();
    let fresh: BTreeMap<_, _> = new.outputs.iter().map(|d| (&d.path, &d.sha256)).collect();
    if recorded != fresh {
        let differing: Vec<String> = recorded
            .keys()
            .chain(fresh.keys())
            .filter(|k| recorded.get(*k) != fresh.get(*k))
            .map(|k| k.display().to_string())
            .collect();
        return Err(CliError::Usage(format!("replay outputs differ: {}", differing.join(", "))));
    }
    Ok(new)
}

struct Stages {
    timings: Vec<StageTiming>,
    outputs: Vec<PathBuf>,
}

impl Stages {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let t = Instant::now();
        let v = f()?;
        self.timings.push(StageTiming { stage: stage.into(), seconds: t.elapsed().as_secs_f64() });
        Ok(v)
    }

    fn write(&mut self, out: &Path, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<()> {
        fs::write(out.join(name), bytes)?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, out: &Path, name: &str, v: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(v).map_err(specloc::Error::from)?;
        self.write(out, name, text + "\n")
    }

    fn write_dataset(&mut self, out: &Path, name: &str, d: &Dataset) -> CliResult<()> {
        write_dataset(d, out.join(name))?;
        self.outputs.push(name.into());
        Ok(())
    }
}

fn predictions_csv(preds: &[Coordinate]) -> String {
    let mut s = String::from("x_pred,y_pred\n");
    for p in preds {
        s.push_str(&format!("{},{}\n", p.x, p.y));
    }
    s
}

#[derive(Serialize)]
struct TrainReport {
    identity_hash: String,
    config: LocConfig,
    weak: bool,
    search: Option<specloc::locmodel::SearchOutcome>,
    final_loss: Option<f64>,
    optimizer_steps: u64,
    training_rmse_m: f64,
    n_samples: usize,
}

#[derive(Serialize)]
struct AugmentReport {
    kind: GanKind,
    rows: usize,
    final_d_loss: Option<f64>,
    final_g_loss: Option<f64>,
    mean_score: Option<f64>,
    labeler: Option<String>,
    out_of_extent_fraction: Option<f64>,
}

#[derive(Serialize)]
struct EvalReport {
    model_identity: String,
    rmse_m: f64,
    n_samples: usize,
    n_coordinates: usize,
    out_of_extent_fraction: f64,
}

#[derive(Serialize)]
struct StabilitySummary {
    coordinates: usize,
    mean_normalized_std: f64,
    max_normalized_std: f64,
}

/// Executes an invocation, writing its outputs and `manifest.json` to `out`.
pub fn execute(inv: &Invocation, out: &Path) -> CliResult<RunManifest> {
    fs::create_dir_all(out)?;
    let mut st = Stages { timings: Vec::new(), outputs: Vec::new() };
    match inv {
        Invocation::Gen { world, seed } => {
            world.validate()?;
            let data_seed = derive_seed(*seed, "world/data", 0);
            for &m in &world.modalities {
                let d = st.time(&format!("generate/{m}"), || Ok(world.generate(m, data_seed)?))?;
                st.write_dataset(out, &format!("{m}.csv"), &d)?;
            }
        }
        Invocation::Train { data, config, weak, search_trials, seed } => {
            let d = read_dataset(data)?;
            let search = match search_trials {
                Some(t) => Some(st.time("search", || Ok(hyper_search(&d, *t, config, *seed)?))?),
                None => None,
            };
            let cfg = search.as_ref().map_or(*config, |s| s.best);
            let model = st.time("train", || {
                Ok(if *weak { train_weak_model_with(&d, &cfg, *seed)? } else { train_localizer(&d, &cfg, *seed)? })
            })?;
            let preds = model.predict_dataset(&d)?;
            let truths: Vec<_> = d.samples().iter().map(|s| s.location).collect();
            let report = TrainReport {
                identity_hash: model.identity_hash(),
                config: cfg,
                weak: *weak,
                search,
                final_loss: model.loss_curve.last().map(|p| p.1),
                optimizer_steps: model.optimizer_steps,
                training_rmse_m: rmse(&preds, &truths)?,
                n_samples: d.len(),
            };
            st.write(out, "model.json", model.to_json()?)?;
            st.write(out, "predictions.csv", predictions_csv(&preds))?;
            st.write_json(out, "train_report.json", &report)?;
        }
        Invocation::Augment { data, kind, gan, per_point, n, selection, weak_config, weak_model, seed } => {
            let d = read_dataset(data)?;
            let mut report = AugmentReport {
                kind: *kind,
                rows: 0,
                final_d_loss: None,
                final_g_loss: None,
                mean_score: None,
                labeler: None,
                out_of_extent_fraction: None,
            };
            let (bundle, trace) = st.time("gan", || {
                Ok(match kind {
                    GanKind::PointGan => train_pointgan(&d, gan, *seed)?,
                    GanKind::FreeGan => train_freegan(&d, gan, *seed)?,
                })
            })?;
            report.final_d_loss = trace.d_loss.last().copied();
            report.final_g_loss = trace.g_loss.last().copied();
            let batch = match kind {
                GanKind::PointGan => st.time("generate", || {
                    Ok(pointgan_generate(&bundle, &d.unique_locations(), *per_point, *seed)?)
                })?,
                GanKind::FreeGan => {
                    let wlm = match weak_model {
                        Some(p) => TrainedLocalizer::load(p)?,
                        None => {
                            let m = st.time("weak_model", || Ok(train_weak_model_with(&d, weak_config, *seed)?))?;
                            st.write(out, "weak_model.json", m.to_json()?)?;
                            m
                        }
                    };
                    let raw = st.time("generate", || Ok(freegan_generate(&bundle, *n, *seed)?))?;
                    st.time("pseudo_label", || Ok(pseudo_label(&wlm, &raw, d.extent())?))?
                }
            };
            report.labeler = batch.labeler.clone();
            report.out_of_extent_fraction = batch.out_of_extent_fraction;
            let augmented = build_augmented(&d, std::slice::from_ref(&batch), *selection)?;
            let synthetic = Dataset::new(
                d.modality(),
                d.extent(),
                augmented.samples().iter().filter(|s| s.origin != Origin::Real).copied().collect(),
            )?;
            report.rows = synthetic.len();
            if let Some(s) = &batch.scores {
                if !s.is_empty() {
                    report.mean_score = Some(s.iter().sum::<f64>() / s.len() as f64);
                }
            }
            st.write(out, "bundle.json", bundle.to_json()?)?;
            st.write_dataset(out, "synthetic.csv", &synthetic)?;
            st.write_dataset(out, "augmented.csv", &augmented)?;
            st.write_json(out, "augment_report.json", &report)?;
        }
        Invocation::Eval { model, data } => {
            let m = TrainedLocalizer::load(model)?;
            let d = read_dataset(data)?;
            let preds = st.time("predict", || Ok(m.predict_dataset(&d)?))?;
            let truths: Vec<_> = d.samples().iter().map(|s| s.location).collect();
            let outside = preds.iter().filter(|p| !d.extent().contains(p)).count();
            let report = EvalReport {
                model_identity: m.identity_hash(),
                rmse_m: rmse(&preds, &truths)?,
                n_samples: d.len(),
                n_coordinates: d.unique_locations().len(),
                out_of_extent_fraction: outside as f64 / preds.len().max(1) as f64,
            };
            st.write(out, "predictions.csv", predictions_csv(&preds))?;
            st.write_json(out, "eval_report.json", &report)?;
        }
        Invocation::Stability { data } => {
            let d = read_dataset(data)?;
            let mut groups: Vec<(Coordinate, Vec<&[f64]>)> = Vec::new();
            let mut index = BTreeMap::new();
            for s in d.samples() {
                let k = *index.entry(s.location.key()).or_insert_with(|| {
                    groups.push((s.location, Vec::new()));
                    groups.len() - 1
                });
                groups[k].1.push(s.fingerprint.values());
            }
            let mut csv = String::from("x,y,n_samples,normalized_std,zero_mean_channels\n");
            let mut values = Vec::with_capacity(groups.len());
            for (c, samples) in &groups {
                let ns = normalized_std(samples)?;
                values.push(ns.value);
                csv.push_str(&format!("{},{},{},{},{}\n", c.x, c.y, samples.len(), ns.value, ns.zero_mean_channels.len()));
            }
            let summary = StabilitySummary {
                coordinates: groups.len(),
                mean_normalized_std: values.iter().sum::<f64>() / values.len().max(1) as f64,
                max_normalized_std: values.iter().copied().fold(0.0, f64::max),
            };
            st.write(out, "stability.csv", csv)?;
            st.write_json(out, "stability_summary.json", &summary)?;
        }
        Invocation::Experiment { config, jobs } => {
            let output = st.time("experiment", || Ok(run_experiment(config, *jobs)?))?;
            let mut csv = Vec::new();
            write_results_csv(&output.results, &mut csv)?;
            st.write(out, "results.csv", csv)?;
            st.write_json(out, "summary.json", &summarize(&output)?)?;
        }
    }
    let manifest = RunManifest::new(inv, st.timings, out, &st.outputs)?;
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(specloc::Error::from)? + "\n",
    )?;
    Ok(manifest)
}
