use std::collections::BTreeMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{par_map, sha256_hex, CorpusIndex, ExperimentConfig};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::metrics::auprc;
use crate::nn::{make_chunks, predict_file, train, write_model, BreathDetector, Chunk, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    /// Held-out items; Test 1 lists `id[start_frame..end_frame]` blocks.
    pub held_out: Vec<String>,
    pub auprc: f64,
    pub validation_steps: usize,
    pub positive_steps: usize,
    pub seed: u64,
    /// SHA-256 of the fold's trained model file.
    pub model_digest: String,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub tool_version: String,
    pub config_digest: String,
    pub corpus_digest: String,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub mean_auprc: f64,
    /// Population standard deviation over folds.
    pub std_auprc: f64,
}

impl ExperimentReport {
    fn new(experiment: &str, corpus: &CorpusIndex, cfg: &ExperimentConfig, folds: Vec<FoldResult>) -> Self {
        let n = folds.len() as f64;
        let mean = folds.iter().map(|f| f.auprc).sum::<f64>() / n;
        let var = folds.iter().map(|f| (f.auprc - mean).powi(2)).sum::<f64>() / n;
        Self {
            experiment: experiment.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: cfg.digest(),
            corpus_digest: corpus.digest(),
            seed: cfg.seed,
            folds,
            mean_auprc: mean,
            std_auprc: var.sqrt(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.auprc).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn model_digest(model: &BreathDetector<f32>) -> Result<String> {
    Ok(sha256_hex(&write_model(model)?))
}

/// Fresh model from `seed`, trained on `chunks` without early stopping.
pub fn fit_detector(chunks: &[Chunk], cfg: &ExperimentConfig, seed: u64) -> Result<(BreathDetector<f32>, TrainReport)> {
    let mut model = BreathDetector::new(cfg.arch.clone(), seed)?;
    let tc = TrainConfig {
        rng_seed: seed,
        ..cfg.train.clone()
    };
    let report = train(&mut model, chunks, None, &tc)?;
    Ok((model, report))
}

/// The final detector: every chunk of every item, seeded with `cfg.seed`.
pub fn train_final_detector(corpus: &CorpusIndex, cfg: &ExperimentConfig) -> Result<(BreathDetector<f32>, TrainReport)> {
    let mut chunks = Vec::new();
    for it in &corpus.items {
        chunks.extend(segment_chunks(&it.features, it.require_steps()?, 0..it.features.num_frames(), cfg));
    }
    fit_detector(&chunks, cfg, cfg.seed)
}

/// Chunks of a step-aligned frame range.
fn segment_chunks(fm: &FeatureMatrix, steps: &[bool], frames: Range<usize>, cfg: &ExperimentConfig) -> Vec<Chunk> {
    if frames.is_empty() {
        return Vec::new();
    }
    let fps = cfg.arch.frames_per_step();
    let first_step = frames.start / fps;
    let last_step = frames.end.div_ceil(fps).min(steps.len());
    make_chunks(&fm.slice(frames), Some(&steps[first_step..last_step]), cfg.arch.chunk_frames, fps)
}

struct Validation {
    probs: Vec<f64>,
    truth: Vec<bool>,
}

impl Validation {
    fn push(&mut self, model: &BreathDetector<f32>, fm: &FeatureMatrix, truth: &[bool]) -> Result<()> {
        let p = predict_file(model, fm)?;
        if p.len() != truth.len() {
            return Err(Error::Shape {
                expected: vec![truth.len()],
                actual: vec![p.len()],
            });
        }
        self.probs.extend(p.into_iter().map(f64::from));
        self.truth.extend_from_slice(truth);
        Ok(())
    }
}

fn finish_fold(
    fold: usize,
    held_out: Vec<String>,
    seed: u64,
    model: &BreathDetector<f32>,
    report: &TrainReport,
    v: Validation,
) -> Result<FoldResult> {
    let value = auprc(&v.probs, &v.truth)?;
    log::info!("fold {fold}: AUPRC {value:.4} on {} steps", v.truth.len());
    Ok(FoldResult {
        fold,
        held_out,
        auprc: value,
        validation_steps: v.truth.len(),
        positive_steps: v.truth.iter().filter(|&&b| b).count(),
        seed,
        model_digest: model_digest(model)?,
        final_train_loss: report.train_loss.last().copied().unwrap_or(f64::NAN),
    })
}

/// Held-out step block per item: `(start_step, len_steps)`, of length
/// `floor(steps / x)` for `x` items, placed uniformly.
pub(crate) fn kfold_blocks(step_counts: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    let x = step_counts.len();
    step_counts
        .iter()
        .map(|&s| {
            let len = s / x;
            if len == 0 {
                return Err(Error::Config(format!(
                    "validation block of 1/{x} is shorter than one step for a {s}-step podcast"
                )));
            }
            Ok((rng.random_range(0..=s - len), len))
        })
        .collect()
}

/// Test 1: per iteration, hold out one contiguous block of `1/x` of each of
/// the `x` podcasts, train from scratch on the rest, and score the blocks.
pub fn test1_contiguous_kfold(corpus: &CorpusIndex, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("Test 1 needs at least one podcast".into()));
    }
    let fps = cfg.arch.frames_per_step();
    let steps: Vec<&[bool]> = corpus.items.iter().map(|i| i.require_steps()).collect::<Result<_>>()?;
    let counts: Vec<usize> = steps.iter().map(|s| s.len()).collect();
    // validate block geometry before any training
    kfold_blocks(&counts, &mut ChaCha8Rng::seed_from_u64(0))?;

    let folds = par_map(cfg.iterations, cfg.workers, |it| {
        let seed = cfg.seed ^ it as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let blocks = kfold_blocks(&counts, &mut rng)?;
        let mut chunks = Vec::new();
        let mut held_out = Vec::new();
        let mut ranges = Vec::new();
        for ((item, st), &(start, len)) in corpus.items.iter().zip(&steps).zip(&blocks) {
            let n = item.features.num_frames();
            let (a, b) = (start * fps, ((start + len) * fps).min(n));
            chunks.extend(segment_chunks(&item.features, st, 0..a, cfg));
            chunks.extend(segment_chunks(&item.features, st, b..n, cfg));
            held_out.push(format!("{}[{a}..{b}]", item.id));
            ranges.push((a..b, start..start + len));
        }
        let (model, report) = fit_detector(&chunks, cfg, seed)?;
        let mut v = Validation { probs: Vec::new(), truth: Vec::new() };
        for ((item, st), (frames, step_range)) in corpus.items.iter().zip(&steps).zip(ranges) {
            v.push(&model, &item.features.slice(frames), &st[step_range])?;
        }
        finish_fold(it, held_out, seed, &model, &report, v)
    })?;
    Ok(ExperimentReport::new("test1", corpus, cfg, folds))
}

fn leave_group_out(
    name: &str,
    corpus: &CorpusIndex,
    groups: Vec<(String, Vec<usize>)>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    let steps: Vec<&[bool]> = corpus.items.iter().map(|i| i.require_steps()).collect::<Result<_>>()?;
    let folds = par_map(groups.len(), cfg.workers, |k| {
        let (_, members) = &groups[k];
        let seed = cfg.seed ^ k as u64;
        let mut chunks = Vec::new();
        for (i, item) in corpus.items.iter().enumerate() {
            if !members.contains(&i) {
                chunks.extend(segment_chunks(&item.features, steps[i], 0..item.features.num_frames(), cfg));
            }
        }
        let (model, report) = fit_detector(&chunks, cfg, seed)?;
        let mut v = Validation { probs: Vec::new(), truth: Vec::new() };
        for &i in members {
            v.push(&model, &corpus.items[i].features, steps[i])?;
        }
        let held_out = members.iter().map(|&i| corpus.items[i].id.clone()).collect();
        finish_fold(k, held_out, seed, &model, &report, v)
    })?;
    Ok(ExperimentReport::new(name, corpus, cfg, folds))
}

/// Test 2: each podcast held out in turn.
pub fn test2_leave_one_podcast(corpus: &CorpusIndex, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if corpus.len() < 2 {
        return Err(Error::Config(format!("Test 2 needs at least 2 podcasts, found {}", corpus.len())));
    }
    let groups = corpus.items.iter().enumerate().map(|(i, it)| (it.id.clone(), vec![i])).collect();
    leave_group_out("test2", corpus, groups, cfg)
}

/// Test 3: all podcasts of each speaker held out in turn, speakers in sorted order.
pub fn test3_leave_one_speaker(corpus: &CorpusIndex, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut by_speaker: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, it) in corpus.items.iter().enumerate() {
        let s = it
            .speaker_id
            .clone()
            .ok_or_else(|| Error::Input(format!("podcast `{}` lacks a speaker id", it.id)))?;
        by_speaker.entry(s).or_default().push(i);
    }
    if by_speaker.len() < 2 {
        return Err(Error::Config(format!(
            "Test 3 needs at least 2 speakers, found {}",
            by_speaker.len()
        )));
    }
    leave_group_out("test3", corpus, by_speaker.into_iter().collect(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_are_a_tenth_and_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let counts = vec![1200; 10];
        for _ in 0..50 {
            for &(start, len) in &kfold_blocks(&counts, &mut rng).unwrap() {
                assert_eq!(len, 120);
                assert!(start + len <= 1200);
            }
        }
        assert!(matches!(kfold_blocks(&[3, 400, 400, 400], &mut rng), Err(Error::Config(_))));
    }
}
