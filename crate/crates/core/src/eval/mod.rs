//! Experiment orchestration: the three detector generalization tests, the
//! outlet-disjoint split and the end-to-end real/fake evaluation.

mod corpus;
mod experiments;
mod pipeline;
mod splits;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifiers::{SvcConfig, TreeConfig};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::nn::{ArchConfig, TrainConfig};
use crate::postprocess::DetectionConfig;

pub use corpus::{
    news_corpus_items, podcast_corpus_items, CorpusIndex, CorpusItem, CorpusKind, NewsCorpusSpec, PodcastCorpusSpec,
};
pub use experiments::{
    fit_detector, model_digest, test1_contiguous_kfold, test2_leave_one_podcast, test3_leave_one_speaker,
    train_final_detector, ExperimentReport, FoldResult,
};
pub use pipeline::{detect_corpus_stats, evaluate_classifier, run_pipeline_eval, PipelineReport, SampleStats};
pub use splits::{outlet_disjoint_split, SplitPlan, SplitStrategy};

/// Everything an experiment depends on besides the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Test 1 repetitions.
    pub iterations: usize,
    /// Threads for folds and per-file work; results never depend on it.
    pub workers: usize,
    pub features: FeatureConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub detection: DetectionConfig,
    pub svc: SvcConfig,
    pub tree: TreeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: 100,
            workers: 1,
            features: FeatureConfig::default(),
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            detection: DetectionConfig::default(),
            svc: SvcConfig::default(),
            tree: TreeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&std::fs::read_to_string(path).map_err(Error::at(path))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate(crate::audio_io::CANONICAL_RATE)?;
        self.arch.validate()?;
        self.detection.validate()?;
        self.svc.validate()?;
        if self.arch.n_features != self.features.num_features() {
            return Err(Error::Config(format!(
                "model expects {} features but extraction yields {}",
                self.arch.n_features,
                self.features.num_features()
            )));
        }
        let step_ms = self.arch.frames_per_step() as f64 * self.features.hop_ms;
        if (step_ms - self.detection.step_ms).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "model steps span {step_ms} ms but detection.step_ms is {}",
                self.detection.step_ms
            )));
        }
        if self.iterations == 0 || self.workers == 0 || self.train.epochs == 0 {
            return Err(Error::Config("iterations, workers and epochs must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    crate::audio_io::hex(&Sha256::digest(bytes))
}

/// Maps `f` over `0..n` on up to `workers` threads; output order is by index.
pub(crate) fn par_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every index ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_toml_round_trip_and_digest() {
        let cfg = ExperimentConfig {
            seed: 9,
            iterations: 3,
            ..Default::default()
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        assert_ne!(ExperimentConfig::default().digest(), cfg.digest());
        let partial = ExperimentConfig::from_toml("seed = 4\n[train]\nepochs = 7\n").unwrap();
        assert_eq!((partial.seed, partial.train.epochs, partial.train.batch_size), (4, 7, 32));
        assert!(ExperimentConfig::from_toml("[features]\nn_mels = 64\n").is_err());
    }

    #[test]
    fn par_map_keeps_order() {
        let v = par_map(20, 4, |i| Ok(i * i)).unwrap();
        assert_eq!(v, (0..20).map(|i| i * i).collect::<Vec<_>>());
        let e = par_map(5, 3, |i| if i == 3 { Err(Error::Input("x".into())) } else { Ok(i) });
        assert!(e.is_err());
    }
}
