//! Breath interval sets, Audacity-style label files, and the majority rules
//! that turn intervals into frame and output-step labels.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;

/// Half-open time span `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_ms: f64,
    pub end_ms: f64,
}

impl Interval {
    pub fn new(start_ms: f64, end_ms: f64) -> Self {
        Self { start_ms, end_ms }
    }

    pub fn duration_ms(&self) -> f64 {
        self.end_ms - self.start_ms
    }

    pub fn overlap_ms(&self, other: &Interval) -> f64 {
        (self.end_ms.min(other.end_ms) - self.start_ms.max(other.start_ms)).max(0.0)
    }
}

/// Sorted, non-overlapping breath intervals within `[0, total_duration_ms]`.
/// Touching intervals are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreathIntervalSet {
    intervals: Vec<Interval>,
    total_duration_ms: f64,
}

impl BreathIntervalSet {
    pub fn empty(total_duration_ms: f64) -> Self {
        Self {
            intervals: Vec::new(),
            total_duration_ms,
        }
    }

    /// Validates, sorts and merges. Overlaps and reversed spans are errors.
    pub fn new(intervals: Vec<Interval>, total_duration_ms: f64) -> Result<Self> {
        let tagged = intervals
            .into_iter()
            .enumerate()
            .map(|(i, iv)| (format!("interval {}", i + 1), iv))
            .collect();
        Self::from_tagged(tagged, total_duration_ms)
    }

    fn from_tagged(mut tagged: Vec<(String, Interval)>, total_duration_ms: f64) -> Result<Self> {
        if !(total_duration_ms.is_finite() && total_duration_ms >= 0.0) {
            return Err(Error::Input(format!(
                "total duration {total_duration_ms} ms is invalid"
            )));
        }
        let mut problems = Vec::new();
        for (tag, iv) in &tagged {
            if !(iv.start_ms.is_finite() && iv.end_ms.is_finite()) || iv.start_ms >= iv.end_ms {
                problems.push(format!(
                    "{tag}: reversed or empty interval ({}, {})",
                    iv.start_ms, iv.end_ms
                ));
            } else if iv.start_ms < 0.0 || iv.end_ms > total_duration_ms {
                problems.push(format!(
                    "{tag}: ({}, {}) outside [0, {total_duration_ms}]",
                    iv.start_ms, iv.end_ms
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        tagged.sort_by(|a, b| a.1.start_ms.total_cmp(&b.1.start_ms));
        for pair in tagged.windows(2) {
            if pair[1].1.start_ms < pair[0].1.end_ms {
                problems.push(format!("{} overlaps {}", pair[1].0, pair[0].0));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let mut merged: Vec<Interval> = Vec::with_capacity(tagged.len());
        for (_, iv) in tagged {
            match merged.last_mut() {
                Some(last) if last.end_ms == iv.start_ms => last.end_ms = iv.end_ms,
                _ => merged.push(iv),
            }
        }
        Ok(Self {
            intervals: merged,
            total_duration_ms,
        })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total_duration_ms(&self) -> f64 {
        self.total_duration_ms
    }

    /// Total overlap between `window` and the union of intervals.
    pub fn coverage_ms(&self, window: &Interval) -> f64 {
        let first = self
            .intervals
            .partition_point(|iv| iv.end_ms <= window.start_ms);
        self.intervals[first..]
            .iter()
            .take_while(|iv| iv.start_ms < window.end_ms)
            .map(|iv| iv.overlap_ms(window))
            .sum()
    }

    /// Renders the Audacity label-track form: `start_s<TAB>end_s<TAB>breath`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for iv in &self.intervals {
            writeln!(
                out,
                "{:.6}\t{:.6}\tbreath",
                iv.start_ms / 1000.0,
                iv.end_ms / 1000.0
            )
            .unwrap();
        }
        out
    }
}

/// Parses an Audacity label track. Only rows labelled `breath` (any case) are
/// kept; lines starting with `#` are comments.
pub fn parse_annotations(text: &str, total_duration_ms: f64) -> Result<BreathIntervalSet> {
    let mut tagged = Vec::new();
    let mut problems = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            problems.push(format!("line {}: expected start<TAB>end<TAB>label", n + 1));
            continue;
        }
        let label = fields.get(2).map(|s| s.trim()).unwrap_or("");
        if !label.eq_ignore_ascii_case("breath") {
            continue;
        }
        let parse = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
        match (parse(fields[0]), parse(fields[1])) {
            (Some(s), Some(e)) => tagged.push((
                format!("line {}", n + 1),
                Interval::new(seconds_to_ms(s), seconds_to_ms(e)),
            )),
            _ => problems.push(format!("line {}: unparseable times", n + 1)),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    BreathIntervalSet::from_tagged(tagged, total_duration_ms)
}

/// Microsecond rounding keeps decimal second values exact in milliseconds.
fn seconds_to_ms(s: f64) -> f64 {
    (s * 1e6).round() / 1e3
}

pub fn load_annotations(path: impl AsRef<Path>, total_duration_ms: f64) -> Result<BreathIntervalSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(Error::at(path))?;
    parse_annotations(&text, total_duration_ms)
}

pub fn write_annotations(path: impl AsRef<Path>, set: &BreathIntervalSet) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, set.to_tsv()).map_err(Error::at(path))
}

/// Per-frame breath labels aligned with a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabels {
    pub labels: Vec<bool>,
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl FrameLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> FrameLabels {
        FrameLabels {
            labels: self.labels[range].to_vec(),
            ..*self
        }
    }
}

/// A frame is a breath iff more than half of its window is covered by breath.
pub fn frames_from_intervals(
    intervals: &BreathIntervalSet,
    config: &FeatureConfig,
    num_frames: usize,
) -> FrameLabels {
    let half = config.window_ms / 2.0;
    let labels = (0..num_frames)
        .map(|t| {
            let start = t as f64 * config.hop_ms;
            let window = Interval::new(start, start + config.window_ms);
            intervals.coverage_ms(&window) > half
        })
        .collect();
    FrameLabels {
        labels,
        window_ms: config.window_ms,
        hop_ms: config.hop_ms,
    }
}

/// Collapses frames into output steps by strict majority. A trailing partial
/// step counts its missing frames as negative.
pub fn steps_from_frames(frames: &FrameLabels, frames_per_step: usize) -> Vec<bool> {
    assert!(frames_per_step > 0);
    frames
        .labels
        .chunks(frames_per_step)
        .map(|c| 2 * c.iter().filter(|&&b| b).count() > frames_per_step)
        .collect()
}
