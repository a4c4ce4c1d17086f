use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use specloc::augment::{
    freegan_generate, pointgan_generate, pseudo_label, train_freegan, train_pointgan, GanBundle,
    GanConfig, GanKind,
};
use specloc::datamodel::{
    coordinate_split, read_dataset, write_dataset, Coordinate, Dataset, Fingerprint, Modality,
};
use specloc::eval::{
    estimate_cost, run_experiment as run_exp, summarize, write_results_csv, CostModel, CostQuery,
    ExperimentConfig, TrainingProfile,
};
use specloc::locmodel::{train_localizer, train_weak_model_with, LocConfig, TrainedLocalizer};
use specloc::simenv::WorldConfig;

pyo3::create_exception!(specloc_py, DivergenceError, PyRuntimeError);

fn to_py(e: specloc::Error) -> PyErr {
    match e {
        specloc::Error::Divergence { .. } => DivergenceError::new_err(e.to_string()),
        specloc::Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for specloc::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn json_config<T: serde::de::DeserializeOwned>(text: Option<&str>, default: T) -> PyResult<T> {
    match text {
        Some(t) => serde_json::from_str(t).map_err(|e| PyValueError::new_err(e.to_string())),
        None => Ok(default),
    }
}

fn world(name: &str) -> PyResult<WorldConfig> {
    match name {
        "wifimix" => Ok(WorldConfig::spectral_wifimix()),
        "robust" => Ok(WorldConfig::spectral_robust()),
        "robust_cluttered" => Ok(WorldConfig::spectral_robust().with_clutter(0, 8)),
        json if json.trim_start().starts_with('{') => json_config(Some(json), WorldConfig::spectral_wifimix()),
        other => Err(PyValueError::new_err(format!("unknown world `{other}`"))),
    }
}

fn coords(points: Vec<(f64, f64)>) -> Vec<Coordinate> {
    points.into_iter().map(|(x, y)| Coordinate::new(x, y)).collect()
}

fn pairs(points: &[Coordinate]) -> Vec<(f64, f64)> {
    points.iter().map(|c| (c.x, c.y)).collect()
}

/// Labeled fingerprints of one modality.
#[pyclass(name = "Dataset", module = "specloc_py", from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Simulates a world: "wifimix", "robust", "robust_cluttered", or a
    /// world config as JSON.
    #[staticmethod]
    #[pyo3(signature = (world_name = "wifimix", modality = "spectral", seed = 0))]
    fn simulate(world_name: &str, modality: &str, seed: u64) -> PyResult<Self> {
        let m: Modality = modality.parse().py()?;
        Ok(Self { inner: world(world_name)?.generate(m, seed).py()? })
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        Ok(Self { inner: read_dataset(path).py()? })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        write_dataset(&self.inner, path).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn modality(&self) -> &'static str {
        self.inner.modality().as_str()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.samples().iter().map(|s| s.fingerprint.values().to_vec()).collect()
    }

    fn locations(&self) -> Vec<(f64, f64)> {
        self.inner.samples().iter().map(|s| (s.location.x, s.location.y)).collect()
    }

    fn origins(&self) -> Vec<&'static str> {
        self.inner.samples().iter().map(|s| s.origin.as_str()).collect()
    }

    fn unique_locations(&self) -> Vec<(f64, f64)> {
        pairs(&self.inner.unique_locations())
    }

    /// Coordinate-level split: `n_train` whole reference points go to the
    /// first dataset, the rest to the second.
    fn split(&self, n_train: usize, seed: u64) -> PyResult<(Self, Self)> {
        let (train_pts, _) = coordinate_split(&self.inner.unique_locations(), n_train, seed).py()?;
        let (a, b) = self.inner.partition_by_locations(&train_pts);
        Ok((Self { inner: a }, Self { inner: b }))
    }

    fn __repr__(&self) -> String {
        format!("Dataset({}, {} samples)", self.inner.modality(), self.inner.len())
    }
}

/// A trained localization MLP.
#[pyclass(name = "Localizer", module = "specloc_py")]
struct PyLocalizer {
    inner: TrainedLocalizer,
}

#[pymethods]
impl PyLocalizer {
    /// Trains on `data`. `config` is a localizer config as JSON; `weak`
    /// selects the fixed-width pseudo-labeling model.
    #[staticmethod]
    #[pyo3(signature = (data, config = None, seed = 0, weak = false))]
    fn train(py: Python<'_>, data: &PyDataset, config: Option<&str>, seed: u64, weak: bool) -> PyResult<Self> {
        let default = if weak { LocConfig::weak() } else { LocConfig::default() };
        let cfg = json_config(config, default)?;
        let d = &data.inner;
        let inner = py
            .detach(|| if weak { train_weak_model_with(d, &cfg, seed) } else { train_localizer(d, &cfg, seed) })
            .py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: TrainedLocalizer::from_json(text).py()? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: TrainedLocalizer::load(path).py()? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    fn predict(&self, fingerprints: Vec<Vec<f64>>) -> PyResult<Vec<(f64, f64)>> {
        let fps = fingerprints
            .iter()
            .map(|v| Fingerprint::from_values(self.inner.modality, v))
            .collect::<specloc::Result<Vec<_>>>()
            .py()?;
        Ok(pairs(&self.inner.predict_many(&fps).py()?))
    }

    fn predict_dataset(&self, data: &PyDataset) -> PyResult<Vec<(f64, f64)>> {
        Ok(pairs(&self.inner.predict_dataset(&data.inner).py()?))
    }

    fn rmse(&self, data: &PyDataset) -> PyResult<f64> {
        let preds = self.inner.predict_dataset(&data.inner).py()?;
        let truths: Vec<_> = data.inner.samples().iter().map(|s| s.location).collect();
        specloc::eval::rmse(&preds, &truths).py()
    }

    fn identity_hash(&self) -> String {
        self.inner.identity_hash()
    }

    #[getter]
    fn loss_curve(&self) -> Vec<(usize, f64)> {
        self.inner.loss_curve.clone()
    }

    #[getter]
    fn config(&self) -> String {
        serde_json::to_string(&self.inner.config).expect("config serializes")
    }
}

/// A trained PointGAN or FreeGAN.
#[pyclass(name = "GanBundle", module = "specloc_py")]
struct PyGanBundle {
    inner: GanBundle,
}

#[pymethods]
impl PyGanBundle {
    #[staticmethod]
    #[pyo3(signature = (data, kind = "pointgan", config = None, seed = 0))]
    fn train(py: Python<'_>, data: &PyDataset, kind: &str, config: Option<&str>, seed: u64) -> PyResult<Self> {
        let cfg = json_config(config, GanConfig::default())?;
        let d = &data.inner;
        let (inner, _) = match kind {
            "pointgan" => py.detach(|| train_pointgan(d, &cfg, seed)),
            "freegan" => py.detach(|| train_freegan(d, &cfg, seed)),
            other => return Err(PyValueError::new_err(format!("unknown gan kind `{other}`"))),
        }
        .py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: GanBundle::from_json(text).py()? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.as_str()
    }

    /// PointGAN: `per_point` labeled samples for each point.
    #[pyo3(signature = (points, per_point = 100, seed = 0))]
    fn generate_at(&self, points: Vec<(f64, f64)>, per_point: usize, seed: u64) -> PyResult<PyDataset> {
        let batch = pointgan_generate(&self.inner, &coords(points), per_point, seed).py()?;
        Ok(PyDataset { inner: batch.to_dataset(self.inner.extent).py()? })
    }

    /// FreeGAN: `n` samples pseudo-labeled by `weak`. Returns the dataset
    /// and the fraction of labels outside the room.
    #[pyo3(signature = (weak, n = 50_000, seed = 0))]
    fn generate_labeled(&self, weak: &PyLocalizer, n: usize, seed: u64) -> PyResult<(PyDataset, f64)> {
        let raw = freegan_generate(&self.inner, n, seed).py()?;
        let batch = pseudo_label(&weak.inner, &raw, self.inner.extent).py()?;
        let ooe = batch.out_of_extent_fraction.unwrap_or(0.0);
        Ok((PyDataset { inner: batch.to_dataset(self.inner.extent).py()? }, ooe))
    }
}

#[pyfunction]
fn rmse(preds: Vec<(f64, f64)>, truths: Vec<(f64, f64)>) -> PyResult<f64> {
    specloc::eval::rmse(&coords(preds), &coords(truths)).py()
}

#[pyfunction]
fn normalized_std(samples: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(specloc::eval::normalized_std(&samples).py()?.value)
}

/// Multiply-accumulate count for `query` (mlp_fwd, mlp_epoch, gan_iter,
/// gan_epoch, wlm_label, total, infer).
#[pyfunction]
#[pyo3(signature = (query, d=None, hidden=None, layers=None, batch=None, epochs_mlp=None, epochs_gan=None, noise_dim=None, n=None, n_aug=None, n_free=None, gan="pointgan"))]
#[allow(clippy::too_many_arguments)]
fn estimate_cost_py(
    query: &str,
    d: Option<u64>,
    hidden: Option<u64>,
    layers: Option<u64>,
    batch: Option<u64>,
    epochs_mlp: Option<u64>,
    epochs_gan: Option<u64>,
    noise_dim: Option<u64>,
    n: Option<u64>,
    n_aug: Option<u64>,
    n_free: Option<u64>,
    gan: &str,
) -> PyResult<u64> {
    let q: CostQuery = serde_json::from_value(serde_json::Value::String(query.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown cost query `{query}`")))?;
    let gan: GanKind = serde_json::from_value(serde_json::Value::String(gan.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown gan kind `{gan}`")))?;
    let model = CostModel { d, hidden, layers, batch, epochs_mlp, epochs_gan, noise_dim, n, n_aug, n_free, gan, ..CostModel::default() };
    estimate_cost(&model, q).py()
}

/// Runs experiment "exp1" or "exp2" (or a full config given as JSON) and
/// returns the results CSV text and the summary JSON text.
#[pyfunction]
#[pyo3(signature = (which = "exp1", profile = "smoke", seed = 0, jobs = 1, config = None))]
fn run_experiment(
    py: Python<'_>,
    which: &str,
    profile: &str,
    seed: u64,
    jobs: usize,
    config: Option<&str>,
) -> PyResult<(String, String)> {
    let mut cfg = match config {
        Some(t) => json_config::<ExperimentConfig>(Some(t), ExperimentConfig::experiment1(TrainingProfile::smoke()))?,
        None => {
            let p = TrainingProfile::by_name(profile).py()?;
            match which {
                "exp1" => ExperimentConfig::experiment1(p),
                "exp2" => ExperimentConfig::experiment2(p),
                other => return Err(PyValueError::new_err(format!("unknown experiment `{other}`"))),
            }
        }
    };
    cfg.master_seed = seed;
    let out = py.detach(|| run_exp(&cfg, jobs)).py()?;
    let mut csv = Vec::new();
    write_results_csv(&out.results, &mut csv).py()?;
    let summary = summarize(&out).py()?;
    Ok((
        String::from_utf8(csv).expect("csv is utf-8"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    ))
}

#[pymodule]
fn specloc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyLocalizer>()?;
    m.add_class::<PyGanBundle>()?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_std, m)?)?;
    m.add("estimate_cost", wrap_pyfunction!(estimate_cost_py, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    Ok(())
}
