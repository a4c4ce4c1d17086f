//! Multi-seed experiment harness.
//!
//! A run is keyed by (environment, modality, x, method, seed). Runs are
//! independent, so they execute on a rayon pool and are merged back in key
//! order; output files do not depend on `jobs`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rmse, QuartileSummary};
use crate::augment::{
    build_augmented, freegan_generate, pointgan_generate, pseudo_label, train_freegan,
    train_pointgan, GanConfig, Selection,
};
use crate::datamodel::{coordinate_split, Dataset, Modality};
use crate::error::{contract, ensure, Error, Result};
use crate::locmodel::{hyper_search, train_localizer, train_weak_model_with, LocConfig};
use crate::seed::derive_seed;
use crate::simenv::WorldConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "mlp+pointgan")]
    MlpPointGan,
    #[serde(rename = "mlp+freegan")]
    MlpFreeGan,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mlp, Method::MlpPointGan, Method::MlpFreeGan];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mlp => "mlp",
            Method::MlpPointGan => "mlp+pointgan",
            Method::MlpFreeGan => "mlp+freegan",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| contract(format!("unknown method `{s}`")))
    }
}

/// How the strong localizer's hyperparameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LocalizerPlan {
    /// Random search once per modality, reused by every run.
    Search { trials: usize, base: LocConfig },
    Fixed { config: LocConfig },
}

/// Training budgets for every stage of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProfile {
    pub name: String,
    pub localizer: LocalizerPlan,
    pub weak: LocConfig,
    pub gan: GanConfig,
    pub per_point: usize,
    pub n_free: usize,
    pub selection: Selection,
}

impl TrainingProfile {
    /// Table defaults: 3-trial search, 5000 GAN epochs, 100 per point,
    /// 50000 FreeGAN samples.
    pub fn full() -> Self {
        Self {
            name: "full".into(),
            localizer: LocalizerPlan::Search { trials: 3, base: LocConfig::default() },
            weak: LocConfig::weak(),
            gan: GanConfig::default(),
            per_point: 100,
            n_free: 50_000,
            selection: Selection::All,
        }
    }

    /// Desk-scale budget: a fixed narrow localizer on mini-batches and short
    /// GAN training.
    pub fn quick() -> Self {
        Self {
            name: "quick".into(),
            localizer: LocalizerPlan::Fixed {
                config: LocConfig { hidden_size: 64, batch_size: 128, ..LocConfig::default() },
            },
            weak: LocConfig::weak(),
            gan: GanConfig { epochs: 300, batch_size: 32, learning_rate: 5e-4, ..GanConfig::default() },
            per_point: 100,
            n_free: 5000,
            selection: Selection::All,
        }
    }

    /// Plumbing check only; every stage runs a handful of steps.
    pub fn smoke() -> Self {
        let tiny = LocConfig { hidden_size: 16, n_hidden: 2, epochs: 3, ..LocConfig::default() };
        Self {
            name: "smoke".into(),
            localizer: LocalizerPlan::Fixed { config: tiny },
            weak: LocConfig { hidden_size: 16, ..tiny },
            gan: GanConfig { epochs: 2, noise_dim: 4, ..GanConfig::default() },
            per_point: 100,
            n_free: 500,
            selection: Selection::All,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "quick" => Ok(Self::quick()),
            "smoke" => Ok(Self::smoke()),
            other => Err(contract(format!("unknown training profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub name: String,
    pub world: WorldConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub environments: Vec<Environment>,
    pub modalities: Vec<Modality>,
    pub train_sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub profile: TrainingProfile,
}

impl ExperimentConfig {
    /// Spectral-WiFiMix world, both modalities, seeds 0..19. Training sizes
    /// are 50%, 60% and 70% of the 64 reference points.
    pub fn experiment1(profile: TrainingProfile) -> Self {
        Self {
            id: "exp1".into(),
            environments: vec![Environment {
                name: "default".into(),
                world: WorldConfig::spectral_wifimix(),
            }],
            modalities: vec![Modality::Spectral, Modality::Rssi],
            train_sizes: vec![32, 38, 45],
            methods: Method::ALL.to_vec(),
            seeds: (0..20).collect(),
            master_seed: 0,
            profile,
        }
    }

    /// SpectralRobust room clean and with 8 occluders, 85 of 121 points for
    /// training, seeds 0..19.
    pub fn experiment2(profile: TrainingProfile) -> Self {
        let clean = WorldConfig::spectral_robust();
        Self {
            id: "exp2".into(),
            environments: vec![
                Environment { name: "clean".into(), world: clean.clone() },
                Environment { name: "cluttered".into(), world: clean.with_clutter(0, 8) },
            ],
            modalities: vec![Modality::Spectral],
            train_sizes: vec![85],
            methods: Method::ALL.to_vec(),
            seeds: (0..20).collect(),
            master_seed: 0,
            profile,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.environments.is_empty(), "experiment needs an environment");
        ensure!(!self.modalities.is_empty(), "experiment needs a modality");
        ensure!(!self.train_sizes.is_empty(), "experiment needs a training size");
        ensure!(!self.methods.is_empty(), "experiment needs a method");
        ensure!(!self.seeds.is_empty(), "experiment needs a seed");
        let mut names = HashSet::new();
        for env in &self.environments {
            ensure!(names.insert(&env.name), "duplicate environment `{}`", env.name);
            env.world.validate()?;
            for m in &self.modalities {
                ensure!(
                    env.world.modalities.contains(m),
                    "environment `{}` does not provide {m}",
                    env.name
                );
            }
            let n = env.world.grid()?.len();
            for &x in &self.train_sizes {
                ensure!(
                    (2..n).contains(&x),
                    "training size {x} must leave test points in a {n}-point grid"
                );
            }
        }
        match self.profile.localizer {
            LocalizerPlan::Search { trials, base } => {
                ensure!(trials > 0, "search needs at least one trial");
                base.validate()?;
            }
            LocalizerPlan::Fixed { config } => config.validate()?,
        }
        self.profile.weak.validate()?;
        self.profile.gan.validate()
    }

    pub fn run_count(&self) -> usize {
        self.environments.len()
            * self.modalities.len()
            * self.train_sizes.len()
            * self.methods.len()
            * self.seeds.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub experiment: String,
    pub environment: String,
    pub modality: Modality,
    pub method: Method,
    pub n_train_coords: usize,
    pub seed: u64,
    pub rmse_m: Option<f64>,
    pub n_train_samples: usize,
    pub out_of_extent_fraction: Option<f64>,
    pub error: Option<String>,
    pub train_seconds: f64,
}

/// The localizer configuration each modality used, and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenLocalizer {
    pub modality: Modality,
    pub config: LocConfig,
    pub searched: bool,
    pub validation_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub localizers: Vec<ChosenLocalizer>,
    pub results: Vec<RunResult>,
}

/// Experiment 1 under the given profile and master seed.
pub fn run_experiment1(profile: TrainingProfile, master_seed: u64, jobs: usize) -> Result<ExperimentOutput> {
    run_experiment(&ExperimentConfig { master_seed, ..ExperimentConfig::experiment1(profile) }, jobs)
}

/// Experiment 2 under the given profile and master seed.
pub fn run_experiment2(profile: TrainingProfile, master_seed: u64, jobs: usize) -> Result<ExperimentOutput> {
    run_experiment(&ExperimentConfig { master_seed, ..ExperimentConfig::experiment2(profile) }, jobs)
}

struct Job {
    env: usize,
    modality: usize,
    x: usize,
    method: Method,
    seed: u64,
}

pub fn split_seed(master: u64, x: usize, seed: u64) -> u64 {
    derive_seed(master, &format!("split/{x}"), seed)
}

pub fn run_seed(master: u64, x: usize, seed: u64) -> u64 {
    derive_seed(master, &format!("run/{x}"), seed)
}

/// Runs every (environment, modality, x, method, seed) combination. Stage
/// failures are stored in the affected result; only configuration errors
/// abort the whole experiment.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| contract(format!("cannot build worker pool: {e}")))?;

    let data_seed = derive_seed(cfg.master_seed, "world/data", 0);
    let data: Vec<Vec<Dataset>> = cfg
        .environments
        .iter()
        .map(|env| {
            cfg.modalities
                .iter()
                .map(|&m| env.world.generate(m, data_seed))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let localizers = choose_localizers(cfg, &data[0], &pool)?;

    let mut plan = Vec::with_capacity(cfg.run_count());
    for env in 0..cfg.environments.len() {
        for modality in 0..cfg.modalities.len() {
            for &x in &cfg.train_sizes {
                for &method in &cfg.methods {
                    for &seed in &cfg.seeds {
                        plan.push(Job { env, modality, x, method, seed });
                    }
                }
            }
        }
    }
    let results = pool.install(|| {
        plan.par_iter()
            .map(|job| {
                let data = &data[job.env][job.modality];
                let loc = localizers[job.modality].config;
                run_one(cfg, job, data, &loc)
            })
            .collect()
    });
    Ok(ExperimentOutput { config: cfg.clone(), localizers, results })
}

fn choose_localizers(
    cfg: &ExperimentConfig,
    data: &[Dataset],
    pool: &rayon::ThreadPool,
) -> Result<Vec<ChosenLocalizer>> {
    match cfg.profile.localizer {
        LocalizerPlan::Fixed { config } => Ok(cfg
            .modalities
            .iter()
            .map(|&modality| ChosenLocalizer { modality, config, searched: false, validation_rmse: None })
            .collect()),
        LocalizerPlan::Search { trials, base } => {
            // The search sees only the training side of the first seed's
            // split at the smallest x.
            let x = *cfg.train_sizes.iter().min().expect("validated non-empty");
            let grid = cfg.environments[0].world.grid()?;
            let (train_pts, _) = coordinate_split(&grid, x, split_seed(cfg.master_seed, x, cfg.seeds[0]))?;
            pool.install(|| {
                cfg.modalities
                    .par_iter()
                    .zip(data)
                    .map(|(&modality, d)| {
                        let (train, _) = d.partition_by_locations(&train_pts);
                        let seed = derive_seed(cfg.master_seed, &format!("search/{modality}"), 0);
                        let outcome = hyper_search(&train, trials, &base, seed)?;
                        Ok(ChosenLocalizer {
                            modality,
                            config: outcome.best,
                            searched: true,
                            validation_rmse: outcome.trials[outcome.best_trial].validation_rmse,
                        })
                    })
                    .collect()
            })
        }
    }
}

fn run_one(cfg: &ExperimentConfig, job: &Job, data: &Dataset, loc: &LocConfig) -> RunResult {
    let start = Instant::now();
    let mut result = RunResult {
        experiment: cfg.id.clone(),
        environment: cfg.environments[job.env].name.clone(),
        modality: cfg.modalities[job.modality],
        method: job.method,
        n_train_coords: job.x,
        seed: job.seed,
        rmse_m: None,
        n_train_samples: 0,
        out_of_extent_fraction: None,
        error: None,
        train_seconds: 0.0,
    };
    let world = &cfg.environments[job.env].world;
    let outcome = (|| -> Result<(f64, usize, Option<f64>)> {
        let (train_pts, _) = coordinate_split(&world.grid()?, job.x, split_seed(cfg.master_seed, job.x, job.seed))?;
        let (train, test) = data.partition_by_locations(&train_pts);
        let seed = run_seed(cfg.master_seed, job.x, job.seed);
        let p = &cfg.profile;
        let (augmented, ooe) = match job.method {
            Method::Mlp => (train.clone(), None),
            Method::MlpPointGan => {
                let (bundle, _) = train_pointgan(&train, &p.gan, seed)?;
                let batch = pointgan_generate(&bundle, &train_pts, p.per_point, seed)?;
                (build_augmented(&train, &[batch], p.selection)?, None)
            }
            Method::MlpFreeGan => {
                let (bundle, _) = train_freegan(&train, &p.gan, seed)?;
                let wlm = train_weak_model_with(&train, &p.weak, seed)?;
                let batch = pseudo_label(&wlm, &freegan_generate(&bundle, p.n_free, seed)?, data.extent())?;
                let ooe = batch.out_of_extent_fraction;
                (build_augmented(&train, &[batch], p.selection)?, ooe)
            }
        };
        check_isolation(&augmented, &test)?;
        let model = train_localizer(&augmented, loc, seed)?;
        let truths: Vec<_> = test.samples().iter().map(|s| s.location).collect();
        let score = rmse(&model.predict_dataset(&test)?, &truths)?;
        Ok((score, augmented.len(), ooe))
    })();
    match outcome {
        Ok((score, n, ooe)) => {
            result.rmse_m = Some(score);
            result.n_train_samples = n;
            result.out_of_extent_fraction = ooe;
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result.train_seconds = start.elapsed().as_secs_f64();
    result
}

/// Fails if any test fingerprint, bit for bit, is part of the training input.
pub fn check_isolation(train: &Dataset, test: &Dataset) -> Result<()> {
    let held_out: HashSet<Vec<u64>> = test.samples().iter().map(|s| s.fingerprint.bits()).collect();
    let test_locs: HashSet<_> = test.samples().iter().map(|s| s.location.key()).collect();
    for s in train.samples() {
        ensure!(
            !held_out.contains(&s.fingerprint.bits()),
            "a test fingerprint leaked into the training input"
        );
        ensure!(
            s.origin != crate::datamodel::Origin::Real || !test_locs.contains(&s.location.key()),
            "a real sample from a test coordinate leaked into the training input"
        );
    }
    Ok(())
}

/// One CSV row per run, in run order. Timings are left out so that equal
/// seeds give byte-identical files.
pub fn write_results_csv<W: Write>(results: &[RunResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record([
        "experiment",
        "modality",
        "method",
        "x",
        "seed",
        "rmse_m",
        "environment",
        "n_train_samples",
        "out_of_extent_fraction",
        "error",
    ])
    .map_err(io)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in results {
        w.write_record([
            r.experiment.clone(),
            r.modality.to_string(),
            r.method.to_string(),
            r.n_train_coords.to_string(),
            r.seed.to_string(),
            opt(r.rmse_m),
            r.environment.clone(),
            r.n_train_samples.to_string(),
            opt(r.out_of_extent_fraction),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub experiment: String,
    pub environment: String,
    pub modality: Modality,
    pub method: Method,
    pub x: usize,
    pub runs: usize,
    pub failures: usize,
    pub rmse: Option<QuartileSummary>,
}

/// Per method and modality: the second environment minus the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentDelta {
    pub modality: Modality,
    pub method: Method,
    pub x: usize,
    pub baseline: String,
    pub compared: String,
    pub mean_delta: f64,
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub profile: String,
    pub master_seed: u64,
    pub localizers: Vec<ChosenLocalizer>,
    pub cells: Vec<CellSummary>,
    pub deltas: Vec<EnvironmentDelta>,
}

type CellKey = (String, Modality, Method, usize);

pub fn summarize(output: &ExperimentOutput) -> Result<ExperimentSummary> {
    let mut groups: BTreeMap<(usize, usize, usize, Method), Vec<&RunResult>> = BTreeMap::new();
    let cfg = &output.config;
    let pos = |v: &[String], s: &String| v.iter().position(|x| x == s);
    let env_names: Vec<String> = cfg.environments.iter().map(|e| e.name.clone()).collect();
    for r in &output.results {
        let e = pos(&env_names, &r.environment).ok_or_else(|| contract("result from unknown environment"))?;
        let m = cfg.modalities.iter().position(|&m| m == r.modality).ok_or_else(|| contract("result for unknown modality"))?;
        groups.entry((e, m, r.n_train_coords, r.method)).or_default().push(r);
    }
    let mut cells = Vec::new();
    let mut by_key: BTreeMap<CellKey, QuartileSummary> = BTreeMap::new();
    for ((e, m, x, method), runs) in &groups {
        let scores: Vec<f64> = runs.iter().filter_map(|r| r.rmse_m).collect();
        let rmse = if scores.is_empty() { None } else { Some(QuartileSummary::from_values(&scores)?) };
        if let Some(q) = rmse {
            by_key.insert((env_names[*e].clone(), cfg.modalities[*m], *method, *x), q);
        }
        cells.push(CellSummary {
            experiment: cfg.id.clone(),
            environment: env_names[*e].clone(),
            modality: cfg.modalities[*m],
            method: *method,
            x: *x,
            runs: runs.len(),
            failures: runs.len() - scores.len(),
            rmse,
        });
    }
    let mut deltas = Vec::new();
    if let [base, rest @ ..] = env_names.as_slice() {
        for other in rest {
            for &modality in &cfg.modalities {
                for &x in &cfg.train_sizes {
                    for &method in &cfg.methods {
                        let a = by_key.get(&(base.clone(), modality, method, x));
                        let b = by_key.get(&(other.clone(), modality, method, x));
                        if let (Some(a), Some(b)) = (a, b) {
                            deltas.push(EnvironmentDelta {
                                modality,
                                method,
                                x,
                                baseline: base.clone(),
                                compared: other.clone(),
                                mean_delta: b.mean - a.mean,
                                min_delta: b.min - a.min,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(ExperimentSummary {
        experiment: cfg.id.clone(),
        profile: cfg.profile.name.clone(),
        master_seed: cfg.master_seed,
        localizers: output.localizers.clone(),
        cells,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(id: &str) -> ExperimentConfig {
        let mut cfg = match id {
            "exp1" => ExperimentConfig::experiment1(TrainingProfile::smoke()),
            _ => ExperimentConfig::experiment2(TrainingProfile::smoke()),
        };
        cfg.seeds = vec![0, 1];
        cfg
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("gan".parse::<Method>().is_err());
    }

    #[test]
    fn full_protocol_counts() {
        assert_eq!(ExperimentConfig::experiment1(TrainingProfile::full()).run_count(), 360);
        assert_eq!(ExperimentConfig::experiment2(TrainingProfile::full()).run_count(), 120);
    }

    #[test]
    fn results_follow_key_order_and_isolation_holds() {
        let cfg = ExperimentConfig { train_sizes: vec![32], ..tiny("exp1") };
        let out = run_experiment(&cfg, 2).unwrap();
        assert_eq!(out.results.len(), 2 * 3 * 2);
        assert!(out.results.iter().all(|r| r.error.is_none() && r.rmse_m.unwrap() >= 0.0));
        let keys: Vec<_> = out.results.iter().map(|r| (r.modality, r.method, r.seed)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let pg = out.results.iter().find(|r| r.method == Method::MlpPointGan).unwrap();
        assert_eq!(pg.n_train_samples, 32 * 32 + 32 * 100);
        let fg = out.results.iter().find(|r| r.method == Method::MlpFreeGan).unwrap();
        assert_eq!(fg.n_train_samples, 32 * 32 + 500);
        assert!(fg.out_of_extent_fraction.is_some());
        let summary = summarize(&out).unwrap();
        assert_eq!(summary.cells.len(), 6);
        assert!(summary.cells.iter().all(|c| c.rmse.unwrap().is_ordered()));
    }

    #[test]
    fn csv_is_independent_of_job_count() {
        let cfg = ExperimentConfig {
            train_sizes: vec![60],
            modalities: vec![Modality::Rssi],
            ..tiny("exp1")
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_results_csv(&run_experiment(&cfg, 1).unwrap().results, &mut a).unwrap();
        write_results_csv(&run_experiment(&cfg, 3).unwrap().results, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("experiment,modality,method,x,seed,rmse_m,"));
        assert_eq!(text.lines().count(), 1 + 3 * 2);
    }

    #[test]
    fn clutter_off_reproduces_the_clean_environment() {
        let mut cfg = tiny("exp2");
        cfg.environments[1].world = WorldConfig::spectral_robust().with_clutter(0, 0);
        let out = run_experiment(&cfg, 1).unwrap();
        let (clean, off): (Vec<_>, Vec<_>) = out.results.iter().partition(|r| r.environment == "clean");
        assert_eq!(clean.len(), 6);
        for (a, b) in clean.iter().zip(&off) {
            assert_eq!((a.method, a.seed), (b.method, b.seed));
            assert_eq!(a.rmse_m.unwrap().to_bits(), b.rmse_m.unwrap().to_bits());
        }
        let summary = summarize(&out).unwrap();
        assert_eq!(summary.deltas.len(), 3);
        assert!(summary.deltas.iter().all(|d| d.mean_delta == 0.0 && d.min_delta == 0.0));
    }

    #[test]
    fn leaked_test_samples_are_caught() {
        let world = WorldConfig::spectral_robust();
        let data = world.generate(Modality::Spectral, 0).unwrap();
        let (tr, _) = coordinate_split(&world.grid().unwrap(), 85, 0).unwrap();
        let (train, test) = data.partition_by_locations(&tr);
        check_isolation(&train, &test).unwrap();
        let mut leaky = train.clone();
        leaky.extend([test.samples()[0]]).unwrap();
        assert!(check_isolation(&leaky, &test).is_err());
    }

    #[test]
    fn stage_failures_are_recorded_per_run() {
        let mut cfg = ExperimentConfig { train_sizes: vec![50], modalities: vec![Modality::Rssi], ..tiny("exp1") };
        cfg.profile.localizer = LocalizerPlan::Fixed {
            config: LocConfig { learning_rate: 1e300, epochs: 3, hidden_size: 16, ..LocConfig::default() },
        };
        let out = run_experiment(&cfg, 1).unwrap();
        assert_eq!(out.results.len(), 6);
        assert!(out.results.iter().all(|r| r.rmse_m.is_none() && r.error.as_deref().unwrap().contains("diverged")));
        let summary = summarize(&out).unwrap();
        assert!(summary.cells.iter().all(|c| c.failures == 2 && c.rmse.is_none()));
    }
}
