use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::model::{bce_loss, BreathDetector};
use super::Tensor;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            adam: AdamConfig::default(),
            epochs: 50,
            patience: 5,
            rng_seed: 0,
        }
    }
}

/// One model-sized slice of a file: up to `chunk_frames` raw feature rows and
/// the step labels for the whole chunk (steps past the data are negative).
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub features: Vec<f32>,
    pub valid_frames: usize,
    pub labels: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept, when validating.
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
}

/// Splits a feature matrix into consecutive chunks of `chunk_frames`.
pub fn make_chunks(
    features: &FeatureMatrix,
    step_labels: Option<&[bool]>,
    chunk_frames: usize,
    frames_per_step: usize,
) -> Vec<Chunk> {
    let f = features.num_features();
    let steps_per_chunk = chunk_frames / frames_per_step;
    (0..features.num_frames())
        .step_by(chunk_frames)
        .enumerate()
        .map(|(ci, start)| {
            let end = (start + chunk_frames).min(features.num_frames());
            let labels = (0..steps_per_chunk)
                .map(|s| {
                    let step = ci * steps_per_chunk + s;
                    match step_labels.and_then(|l| l.get(step)) {
                        Some(true) if s * frames_per_step < end - start => 1.0,
                        _ => 0.0,
                    }
                })
                .collect();
            Chunk {
                features: features.as_slice()[start * f..end * f].to_vec(),
                valid_frames: end - start,
                labels,
            }
        })
        .collect()
}

/// Stacks chunks into `[B, chunk_frames, F]`, padding short chunks with the
/// model's input mean (zero after standardization).
pub fn assemble_batch(model: &BreathDetector<f32>, chunks: &[&Chunk]) -> Tensor<f32> {
    let (t, f) = (model.arch.chunk_frames, model.arch.n_features);
    let mut data = Vec::with_capacity(chunks.len() * t * f);
    for c in chunks {
        data.extend_from_slice(&c.features);
        for _ in c.valid_frames..t {
            data.extend_from_slice(&model.input_mean);
        }
    }
    Tensor {
        shape: vec![chunks.len(), t, f],
        data,
    }
}

/// Per-feature mean and standard deviation over every valid frame.
fn fit_input_scaler(model: &mut BreathDetector<f32>, chunks: &[Chunk]) {
    let f = model.arch.n_features;
    let mut sum = vec![0.0f64; f];
    let mut sq = vec![0.0f64; f];
    let mut n = 0usize;
    for c in chunks {
        for row in c.features.chunks_exact(f) {
            for i in 0..f {
                let v = row[i] as f64;
                sum[i] += v;
                sq[i] += v * v;
            }
            n += 1;
        }
    }
    if n == 0 {
        return;
    }
    for i in 0..f {
        let mean = sum[i] / n as f64;
        let var = (sq[i] / n as f64 - mean * mean).max(0.0);
        model.input_mean[i] = mean as f32;
        model.input_std[i] = if var.sqrt() > 1e-6 { var.sqrt() as f32 } else { 1.0 };
    }
}

fn mean_loss(model: &BreathDetector<f32>, chunks: &[Chunk], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in chunks.chunks(batch_size) {
        let refs: Vec<&Chunk> = batch.iter().collect();
        let probs = model.forward_inference(&assemble_batch(model, &refs))?;
        let p: Vec<f64> = probs.data.iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = batch.iter().flat_map(|c| c.labels.iter().map(|&v| v as f64)).collect();
        total += bce_loss(&p, &y) * p.len() as f64;
        count += p.len();
    }
    Ok(total / count.max(1) as f64)
}

/// Minibatch Adam on binary cross-entropy. With a validation set, stops after
/// `patience` epochs without improvement and restores the best parameters.
pub fn train(
    model: &mut BreathDetector<f32>,
    train_set: &[Chunk],
    valid_set: Option<&[Chunk]>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    if config.batch_size == 0 || !(config.adam.lr > 0.0) {
        return Err(Error::Config("batch_size must be >= 1 and lr > 0".into()));
    }
    let steps = model.arch.output_steps();
    if let Some(bad) = train_set
        .iter()
        .chain(valid_set.unwrap_or_default())
        .find(|c| c.labels.len() != steps || c.valid_frames > model.arch.chunk_frames)
    {
        return Err(Error::Shape {
            expected: vec![model.arch.chunk_frames, steps],
            actual: vec![bad.valid_frames, bad.labels.len()],
        });
    }
    fit_input_scaler(model, train_set);

    let shapes: Vec<usize> = model.params().iter().map(|(_, p)| p.len()).collect();
    let mut adam = Adam::new(config.adam, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        train_loss: Vec::new(),
        valid_loss: Vec::new(),
        best_epoch: None,
        epochs_run: 0,
    };
    let mut best: Option<(f64, BreathDetector<f32>)> = None;
    let mut stale = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&Chunk> = idx.iter().map(|&i| &train_set[i]).collect();
            let x = assemble_batch(model, &batch);
            let y: Vec<f32> = batch.iter().flat_map(|c| c.labels.iter().copied()).collect();
            let cache = model.forward_train(&x, &mut rng)?;
            let (loss, grads) = model.backward(&cache, &y)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            adam.step(model.params_mut(), &grads);
            model.update_running_stats(&cache);
            epoch_loss += loss * batch.len() as f64;
        }
        report.train_loss.push(epoch_loss / train_set.len() as f64);
        report.epochs_run = epoch + 1;

        if let Some(valid) = valid_set.filter(|v| !v.is_empty()) {
            let vl = mean_loss(model, valid, config.batch_size)?;
            report.valid_loss.push(vl);
            log::debug!("epoch {epoch}: train {:.5} valid {vl:.5}", report.train_loss[epoch]);
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, model.clone()));
                report.best_epoch = Some(epoch);
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        } else {
            log::debug!("epoch {epoch}: train {:.5}", report.train_loss[epoch]);
        }
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(report)
}

/// Runs a whole file through the model in consecutive chunks; the last chunk
/// is padded and its padding-only steps dropped, giving `ceil(frames / 20)`
/// probabilities for the default geometry.
pub fn predict_file(model: &BreathDetector<f32>, features: &FeatureMatrix) -> Result<Vec<f32>> {
    let arch = &model.arch;
    if features.num_features() != arch.n_features {
        return Err(Error::Shape {
            expected: vec![features.num_frames(), arch.n_features],
            actual: vec![features.num_frames(), features.num_features()],
        });
    }
    let fps = arch.frames_per_step();
    let chunks = make_chunks(features, None, arch.chunk_frames, fps);
    let mut out = Vec::with_capacity(features.num_frames().div_ceil(fps));
    for group in chunks.chunks(32) {
        let refs: Vec<&Chunk> = group.iter().collect();
        let probs = model.forward_inference(&assemble_batch(model, &refs))?;
        let steps = probs.shape[1];
        for (c, row) in group.iter().zip(probs.data.chunks_exact(steps)) {
            out.extend_from_slice(&row[..c.valid_frames.div_ceil(fps).min(steps)]);
        }
    }
    Ok(out)
}
