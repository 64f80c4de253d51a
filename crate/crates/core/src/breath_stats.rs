//! Sample-level breath statistics: rate, mean duration and mean gap.

use serde::{Deserialize, Serialize};

use crate::annotations::BreathIntervalSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BreathStats {
    pub avg_breaths_per_minute: f64,
    pub avg_breath_duration_ms: f64,
    /// Mean gap from one breath's end to the next breath's start.
    pub avg_spacing_ms: f64,
}

impl BreathStats {
    pub fn new(bpm: f64, duration_ms: f64, spacing_ms: f64) -> Self {
        Self {
            avg_breaths_per_minute: bpm,
            avg_breath_duration_ms: duration_ms,
            avg_spacing_ms: spacing_ms,
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [
            self.avg_breaths_per_minute,
            self.avg_breath_duration_ms,
            self.avg_spacing_ms,
        ]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// No breaths gives all zeros; a single breath gives zero spacing.
pub fn compute_stats(intervals: &BreathIntervalSet, total_duration_ms: f64) -> Result<BreathStats> {
    if !(total_duration_ms > 0.0 && total_duration_ms.is_finite()) {
        return Err(Error::Input(format!(
            "total duration must be positive, got {total_duration_ms} ms"
        )));
    }
    let ivs = intervals.intervals();
    if ivs.is_empty() {
        return Ok(BreathStats::default());
    }
    let n = ivs.len() as f64;
    let bpm = n / (total_duration_ms / 60_000.0);
    let duration = ivs.iter().map(|iv| iv.duration_ms()).sum::<f64>() / n;
    let spacing = if ivs.len() < 2 {
        0.0
    } else {
        ivs.windows(2).map(|w| w[1].start_ms - w[0].end_ms).sum::<f64>() / (n - 1.0)
    };
    Ok(BreathStats::new(bpm, duration, spacing))
}

/// `id,label,bpm,avg_duration_ms,avg_spacing_ms` rows with a header.
pub fn stats_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, &'a BreathStats)>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "label", "bpm", "avg_duration_ms", "avg_spacing_ms"])?;
    for (id, label, s) in rows {
        w.write_record([
            id.to_string(),
            label.to_string(),
            s.avg_breaths_per_minute.to_string(),
            s.avg_breath_duration_ms.to_string(),
            s.avg_spacing_ms.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}
