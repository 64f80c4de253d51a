//! Ranking metrics (AUPRC, EER), point metrics and report serialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_scored(scores: &[f64], truths: &[bool], name: &str) -> Result<(usize, usize)> {
    if scores.len() != truths.len() {
        return Err(Error::Input(format!(
            "{name}: {} scores but {} truths",
            scores.len(),
            truths.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Input(format!("{name}: score {s} is not a number")));
    }
    let pos = truths.iter().filter(|&&t| t).count();
    let neg = truths.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "{name} needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

/// Cumulative (tp, fp) after each group of equal scores, descending.
fn operating_points(scores: &[f64], truths: &[bool]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, &i) in order.iter().enumerate() {
        if truths[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_group {
            points.push((tp, fp));
        }
    }
    points
}

/// Step-wise area under the precision-recall curve; ties enter together.
pub fn auprc(scores: &[f64], truths: &[bool]) -> Result<f64> {
    let (pos, _) = check_scored(scores, truths, "AUPRC")?;
    let mut weighted = 0.0;
    let mut prev_tp = 0;
    for (tp, fp) in operating_points(scores, truths) {
        weighted += (tp - prev_tp) as f64 * (tp as f64 / (tp + fp) as f64);
        prev_tp = tp;
    }
    Ok(weighted / pos as f64)
}

/// Equal error rate with positives accepted at score >= threshold. The sweep
/// starts at an infinite threshold (nothing accepted) and interpolates
/// linearly between adjacent operating points.
pub fn eer(scores: &[f64], truths: &[bool]) -> Result<f64> {
    let (pos, neg) = check_scored(scores, truths, "EER")?;
    let rates = |tp: usize, fp: usize| (fp as f64 / neg as f64, (pos - tp) as f64 / pos as f64);
    let (mut far0, mut frr0) = rates(0, 0);
    for (tp, fp) in operating_points(scores, truths) {
        let (far, frr) = rates(tp, fp);
        let d0 = frr0 - far0;
        let d = frr - far;
        if d == 0.0 {
            return Ok(far);
        }
        if d < 0.0 {
            let t = d0 / (d0 - d);
            return Ok(far0 + t * (far - far0));
        }
        far0 = far;
        frr0 = frr;
    }
    unreachable!("the sweep ends with everything accepted, where FAR = 1 and FRR = 0")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Set when TP + FP = 0 and precision is reported as 0.
    pub precision_undefined: bool,
    /// Set when TP + FN = 0 and recall is reported as 0.
    pub recall_undefined: bool,
}

impl PointMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Result<Self> {
        let n = tp + fp + tn + fn_;
        if n == 0 {
            return Err(Error::Input("point metrics need at least one prediction".into()));
        }
        let ratio = |a: usize, b: usize| if b == 0 { (0.0, true) } else { (a as f64 / b as f64, false) };
        let (precision, precision_undefined) = ratio(tp, tp + fp);
        let (recall, recall_undefined) = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Ok(Self {
            accuracy: (tp + tn) as f64 / n as f64,
            f1,
            precision,
            recall,
            tp,
            fp,
            tn,
            fn_,
            precision_undefined,
            recall_undefined,
        })
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn point_metrics(predictions: &[bool], truths: &[bool]) -> Result<PointMetrics> {
    if predictions.len() != truths.len() {
        return Err(Error::Input(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    PointMetrics::from_counts(tp, fp, tn, fn_)
}

/// One scored item for the raw scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub id: String,
    pub score: f64,
    pub truth: bool,
}

/// `id,score,truth` with truth written as 1/0.
pub fn scores_csv(items: &[ScoredItem]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "score", "truth"])?;
    for it in items {
        w.write_record([it.id.clone(), it.score.to_string(), u8::from(it.truth).to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub dataset_id: String,
    pub model_id: String,
    pub config_digest: String,
    pub seed: u64,
    /// What counts as positive: "breath" or "real".
    pub positive_class: String,
    pub n: usize,
    /// Absent when the evaluated set holds only one class.
    pub auprc: Option<f64>,
    pub eer: Option<f64>,
    #[serde(flatten)]
    pub point: PointMetrics,
}

impl EvalReport {
    /// Scores feed AUPRC/EER; predictions feed the point metrics.
    pub fn compute(
        items: &[ScoredItem],
        predictions: &[bool],
        positive_class: &str,
        dataset_id: &str,
        model_id: &str,
        config_digest: &str,
        seed: u64,
    ) -> Result<Self> {
        let scores: Vec<f64> = items.iter().map(|i| i.score).collect();
        let truths: Vec<bool> = items.iter().map(|i| i.truth).collect();
        let defined = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            dataset_id: dataset_id.to_string(),
            model_id: model_id.to_string(),
            config_digest: config_digest.to_string(),
            seed,
            positive_class: positive_class.to_string(),
            n: items.len(),
            auprc: defined(auprc(&scores, &truths))?,
            eer: defined(eer(&scores, &truths))?,
            point: point_metrics(predictions, &truths)?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
