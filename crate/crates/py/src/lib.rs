//! Python module `pybreathline`: audio, features, breath detection,
//! statistics, classifiers and metrics.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use breathline::annotations::{BreathIntervalSet, Interval};
use breathline::audio_io::{self, AudioBuffer, SynthesisConfig};
use breathline::breath_stats::{self, BreathStats};
use breathline::classifiers::{self, Class, SvcConfig, SvcModel, TreeConfig, TreeModel};
use breathline::features::{self, FeatureConfig};
use breathline::nn::{self, ArchConfig, BreathDetector};
use breathline::postprocess::{self, DetectionConfig};
use breathline::{metrics, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Path { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Intervals = Vec<(f64, f64)>;

fn to_set(intervals: &Intervals, total_ms: f64) -> PyResult<BreathIntervalSet> {
    BreathIntervalSet::new(intervals.iter().map(|&(s, e)| Interval::new(s, e)).collect(), total_ms).map_err(py_err)
}

fn from_set(set: &BreathIntervalSet) -> Intervals {
    set.intervals().iter().map(|iv| (iv.start_ms, iv.end_ms)).collect()
}

fn stats_of(v: (f64, f64, f64)) -> BreathStats {
    BreathStats::new(v.0, v.1, v.2)
}

fn feature_config(window_ms: f64, hop_ms: f64, n_mels: usize) -> FeatureConfig {
    FeatureConfig {
        window_ms,
        hop_ms,
        n_mels,
        ..FeatureConfig::default()
    }
}

/// Mono audio with samples in [-1, 1].
#[pyclass(name = "AudioBuffer", module = "pybreathline", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAudioBuffer {
    inner: AudioBuffer,
}

#[pymethods]
impl PyAudioBuffer {
    #[new]
    fn new(samples: Vec<f32>, sample_rate: u32) -> PyResult<Self> {
        Ok(Self {
            inner: AudioBuffer::new(samples, sample_rate).map_err(py_err)?,
        })
    }

    /// Reads a PCM16 or float32 WAV, downmixing stereo.
    #[staticmethod]
    fn from_wav(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: audio_io::load_wav(path).map_err(py_err)?,
        })
    }

    fn to_wav(&self, path: &str) -> PyResult<()> {
        audio_io::write_wav(path, &self.inner, audio_io::WavEncoding::Pcm16).map_err(py_err)
    }

    fn resample(&self, rate: u32) -> Self {
        Self {
            inner: audio_io::resample(&self.inner, rate),
        }
    }

    #[getter]
    fn samples(&self) -> Vec<f32> {
        self.inner.samples().to_vec()
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.sample_rate()
    }

    #[getter]
    fn duration_ms(&self) -> f64 {
        self.inner.duration_ms()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "AudioBuffer({} samples @ {} Hz)",
            self.inner.len(),
            self.inner.sample_rate()
        )
    }
}

/// Synthetic speech-like audio with breath bursts; returns (audio, intervals_ms).
#[pyfunction]
#[pyo3(signature = (breaths_per_minute=11.0, duration_ms=60_000, seed=0))]
fn synthesize(breaths_per_minute: f64, duration_ms: u64, seed: u64) -> PyResult<(PyAudioBuffer, Intervals)> {
    let cfg = SynthesisConfig {
        breaths_per_minute,
        duration_ms,
        rng_seed: seed,
        ..SynthesisConfig::default()
    };
    let (audio, set) = audio_io::synthesize(&cfg).map_err(py_err)?;
    Ok((PyAudioBuffer { inner: audio }, from_set(&set)))
}

/// Per-frame rows of 128 mel-dB values, ZCR and RMSE-dB.
#[pyfunction]
#[pyo3(signature = (audio, window_ms=20.0, hop_ms=2.5, n_mels=128))]
fn extract_features(audio: &PyAudioBuffer, window_ms: f64, hop_ms: f64, n_mels: usize) -> PyResult<Vec<Vec<f32>>> {
    let fm = features::extract_features(&audio.inner, &feature_config(window_ms, hop_ms, n_mels)).map_err(py_err)?;
    Ok((0..fm.num_frames()).map(|t| fm.row(t).to_vec()).collect())
}

/// Binarizes per-step probabilities into breath intervals in ms.
#[pyfunction]
#[pyo3(signature = (probabilities, threshold=0.5, step_ms=50.0, min_breath_ms=150.0))]
fn slices_to_intervals(probabilities: Vec<f64>, threshold: f64, step_ms: f64, min_breath_ms: f64) -> PyResult<Intervals> {
    let cfg = DetectionConfig {
        binarize_threshold: threshold,
        step_ms,
        min_breath_ms,
    };
    cfg.validate().map_err(py_err)?;
    Ok(from_set(&postprocess::slices_to_intervals(&probabilities, &cfg)))
}

/// (breaths per minute, mean duration ms, mean spacing ms).
#[pyfunction]
fn compute_stats(intervals: Intervals, total_duration_ms: f64) -> PyResult<(f64, f64, f64)> {
    let set = to_set(&intervals, total_duration_ms)?;
    let s = breath_stats::compute_stats(&set, total_duration_ms).map_err(py_err)?;
    Ok((s.avg_breaths_per_minute, s.avg_breath_duration_ms, s.avg_spacing_ms))
}

#[pyfunction]
fn threshold_classify(stats: (f64, f64, f64)) -> String {
    classifiers::threshold_classify(&stats_of(stats)).to_string()
}

fn labeled(rows: &[(f64, f64, f64)], real: &[bool]) -> PyResult<Vec<classifiers::LabeledSample>> {
    if rows.len() != real.len() {
        return Err(PyValueError::new_err("rows and labels differ in length"));
    }
    Ok(rows
        .iter()
        .zip(real)
        .enumerate()
        .map(|(i, (r, &y))| classifiers::LabeledSample::new(i.to_string(), stats_of(*r), Class::from_real(y)))
        .collect())
}

/// Polynomial-kernel SVC over breath statistics; labels are True for real.
#[pyclass(name = "Svc", module = "pybreathline", frozen)]
struct PySvc {
    inner: SvcModel,
}

#[pymethods]
impl PySvc {
    #[staticmethod]
    #[pyo3(signature = (rows, real, c=1.0, coef0=1.0, gamma=None))]
    fn train(rows: Vec<(f64, f64, f64)>, real: Vec<bool>, c: f64, coef0: f64, gamma: Option<f64>) -> PyResult<Self> {
        let cfg = SvcConfig {
            c,
            coef0,
            gamma,
            ..SvcConfig::default()
        };
        Ok(Self {
            inner: SvcModel::train(&labeled(&rows, &real)?, &cfg).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: SvcModel::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    fn score(&self, stats: (f64, f64, f64)) -> f64 {
        self.inner.score(&stats_of(stats))
    }

    fn classify(&self, stats: (f64, f64, f64)) -> String {
        self.inner.classify(&stats_of(stats)).to_string()
    }

    #[getter]
    fn dual_objective(&self) -> f64 {
        self.inner.dual_objective
    }

    #[getter]
    fn kkt_residual(&self) -> f64 {
        self.inner.kkt_residual
    }
}

/// Depth-limited Gini decision tree over breath statistics.
#[pyclass(name = "Tree", module = "pybreathline", frozen)]
struct PyTree {
    inner: TreeModel,
}

#[pymethods]
impl PyTree {
    #[staticmethod]
    #[pyo3(signature = (rows, real, max_depth=3))]
    fn train(rows: Vec<(f64, f64, f64)>, real: Vec<bool>, max_depth: usize) -> PyResult<Self> {
        Ok(Self {
            inner: TreeModel::train(&labeled(&rows, &real)?, &TreeConfig { max_depth }).map_err(py_err)?,
        })
    }

    fn score(&self, stats: (f64, f64, f64)) -> f64 {
        self.inner.score(&stats_of(stats))
    }

    fn classify(&self, stats: (f64, f64, f64)) -> String {
        self.inner.classify(&stats_of(stats)).to_string()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

/// The framewise breath detector.
#[pyclass(name = "BreathDetector", module = "pybreathline", frozen)]
struct PyBreathDetector {
    inner: BreathDetector<f32>,
}

#[pymethods]
impl PyBreathDetector {
    /// Untrained model with the default architecture.
    #[new]
    #[pyo3(signature = (seed=0))]
    fn new(seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: BreathDetector::new(ArchConfig::default(), seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: nn::load_model(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        nn::save_model(&self.inner, path).map_err(py_err)
    }

    /// Breath probability per 50 ms step.
    fn predict(&self, audio: &PyAudioBuffer) -> PyResult<Vec<f32>> {
        let fm = features::extract_features(&audio.inner.clone().to_canonical(), &FeatureConfig::default())
            .map_err(py_err)?;
        nn::predict_file(&self.inner, &fm).map_err(py_err)
    }

    /// Breath intervals in ms after thresholding and the minimum-duration filter.
    #[pyo3(signature = (audio, threshold=0.5, min_breath_ms=150.0))]
    fn detect(&self, audio: &PyAudioBuffer, threshold: f64, min_breath_ms: f64) -> PyResult<Intervals> {
        let det = DetectionConfig {
            binarize_threshold: threshold,
            min_breath_ms,
            ..DetectionConfig::default()
        };
        let canonical = audio.inner.clone().to_canonical();
        let set = postprocess::detect_breaths(&self.inner, &canonical, &FeatureConfig::default(), &det)
            .map_err(py_err)?;
        Ok(from_set(&set))
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.params().iter().map(|(_, p)| p.len()).sum()
    }
}

#[pyfunction]
fn auprc(scores: Vec<f64>, truths: Vec<bool>) -> PyResult<f64> {
    metrics::auprc(&scores, &truths).map_err(py_err)
}

#[pyfunction]
fn eer(scores: Vec<f64>, truths: Vec<bool>) -> PyResult<f64> {
    metrics::eer(&scores, &truths).map_err(py_err)
}

/// Accuracy, F1, precision, recall, confusion counts and undefined flags.
#[pyfunction]
fn point_metrics<'py>(py: Python<'py>, predictions: Vec<bool>, truths: Vec<bool>) -> PyResult<Bound<'py, PyDict>> {
    let m = metrics::point_metrics(&predictions, &truths).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("accuracy", m.accuracy)?;
    d.set_item("f1", m.f1)?;
    d.set_item("precision", m.precision)?;
    d.set_item("recall", m.recall)?;
    d.set_item("tp", m.tp)?;
    d.set_item("fp", m.fp)?;
    d.set_item("tn", m.tn)?;
    d.set_item("fn", m.fn_)?;
    d.set_item("precision_undefined", m.precision_undefined)?;
    d.set_item("recall_undefined", m.recall_undefined)?;
    Ok(d)
}

#[pymodule]
fn pybreathline(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyAudioBuffer>()?;
    m.add_class::<PySvc>()?;
    m.add_class::<PyTree>()?;
    m.add_class::<PyBreathDetector>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(slices_to_intervals, m)?)?;
    m.add_function(wrap_pyfunction!(compute_stats, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_classify, m)?)?;
    m.add_function(wrap_pyfunction!(auprc, m)?)?;
    m.add_function(wrap_pyfunction!(eer, m)?)?;
    m.add_function(wrap_pyfunction!(point_metrics, m)?)?;
    Ok(())
}
