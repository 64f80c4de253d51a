//! Per-step probabilities to breath intervals, with the minimum-duration filter.

use serde::{Deserialize, Serialize};

use crate::annotations::{BreathIntervalSet, Interval};
use crate::audio_io::AudioBuffer;
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureConfig};
use crate::nn::{predict_file, BreathDetector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Probabilities at or above this are breath steps.
    pub binarize_threshold: f64,
    pub step_ms: f64,
    /// Detected breaths shorter than this are discarded.
    pub min_breath_ms: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            binarize_threshold: 0.5,
            step_ms: 50.0,
            min_breath_ms: 150.0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::Config("binarize_threshold must lie in (0, 1)".into()));
        }
        if !(self.step_ms > 0.0 && self.min_breath_ms >= 0.0) {
            return Err(Error::Config("step_ms must be positive and min_breath_ms >= 0".into()));
        }
        Ok(())
    }
}

/// Maximal runs of steps at or above threshold, as `[i*step, (i+k)*step)`.
/// Runs shorter than `min_breath_ms` are dropped.
pub fn slices_to_intervals(probabilities: &[f64], config: &DetectionConfig) -> BreathIntervalSet {
    let total = probabilities.len() as f64 * config.step_ms;
    slices_to_intervals_within(probabilities, config, total)
}

/// As [`slices_to_intervals`], clipping the final run to `total_duration_ms`
/// before the duration filter.
pub fn slices_to_intervals_within(
    probabilities: &[f64],
    config: &DetectionConfig,
    total_duration_ms: f64,
) -> BreathIntervalSet {
    let mut intervals = Vec::new();
    let mut run_start: Option<usize> = None;
    let positive = |p: f64| p >= config.binarize_threshold;
    for i in 0..=probabilities.len() {
        let on = probabilities.get(i).is_some_and(|&p| positive(p));
        match (on, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                let start = s as f64 * config.step_ms;
                let end = (i as f64 * config.step_ms).min(total_duration_ms);
                if end > start && end - start >= config.min_breath_ms {
                    intervals.push(Interval::new(start, end));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    BreathIntervalSet::new(intervals, total_duration_ms)
        .expect("runs are disjoint, ordered and non-touching")
}

/// Features, framewise model inference and post-processing for one file.
pub fn detect_breaths(
    model: &BreathDetector<f32>,
    audio: &AudioBuffer,
    feature_config: &FeatureConfig,
    detection: &DetectionConfig,
) -> Result<BreathIntervalSet> {
    detection.validate()?;
    let step_ms = model.arch.frames_per_step() as f64 * feature_config.hop_ms;
    if (step_ms - detection.step_ms).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "model steps span {step_ms} ms but detection step_ms is {}",
            detection.step_ms
        )));
    }
    let features = extract_features(audio, feature_config)?;
    let probs: Vec<f64> = predict_file(model, &features)?.into_iter().map(f64::from).collect();
    Ok(slices_to_intervals_within(&probs, detection, audio.duration_ms()))
}
