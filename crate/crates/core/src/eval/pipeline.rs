use serde::{Deserialize, Serialize};

use super::experiments::model_digest;
use super::{par_map, CorpusIndex, ExperimentConfig, SplitPlan};
use crate::annotations::BreathIntervalSet;
use crate::audio_io::Label;
use crate::breath_stats::{compute_stats, BreathStats};
use crate::classifiers::{Class, Classifier, ClassifierKind, LabeledSample};
use crate::error::{Error, Result};
use crate::metrics::{EvalReport, ScoredItem};
use crate::nn::{predict_file, BreathDetector};
use crate::postprocess::slices_to_intervals_within;

/// Detector output and breath statistics for one labelled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub id: String,
    pub label: Class,
    pub outlet: String,
    pub stats: BreathStats,
    pub breaths: BreathIntervalSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub classifier: ClassifierKind,
    pub split: SplitPlan,
    pub train_outlets: Vec<String>,
    pub test_outlets: Vec<String>,
    pub outlet_overlap: usize,
    pub detector_digest: String,
    pub report: EvalReport,
    #[serde(skip)]
    pub scores: Vec<ScoredItem>,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Breath detection and statistics for every real/fake item.
pub fn detect_corpus_stats(
    detector: &BreathDetector<f32>,
    corpus: &CorpusIndex,
    cfg: &ExperimentConfig,
) -> Result<Vec<SampleStats>> {
    par_map(corpus.len(), cfg.workers, |i| {
        let it = &corpus.items[i];
        let label = match it.label {
            Label::Real => Class::Real,
            Label::Fake => Class::Fake,
            Label::Unlabeled => return Err(Error::Input(format!("sample `{}` is unlabeled", it.id))),
        };
        let probs: Vec<f64> = predict_file(detector, &it.features)?.into_iter().map(f64::from).collect();
        let breaths = slices_to_intervals_within(&probs, &cfg.detection, it.duration_ms);
        let stats = compute_stats(&breaths, it.duration_ms)?;
        Ok(SampleStats {
            id: it.id.clone(),
            label,
            outlet: it.outlet.clone(),
            stats,
            breaths,
        })
    })
}

/// Trains `kind` on the split's training side and scores its test side.
pub fn evaluate_classifier(
    stats: &[SampleStats],
    corpus: &CorpusIndex,
    split: &SplitPlan,
    kind: ClassifierKind,
    detector_digest: &str,
    cfg: &ExperimentConfig,
) -> Result<PipelineReport> {
    if split.id_overlap() > 0 {
        return Err(Error::Config("split places a sample on both sides".into()));
    }
    let find = |id: &String| {
        stats
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| Error::Input(format!("no statistics for sample `{id}`")))
    };
    let train: Vec<LabeledSample> = split
        .train
        .iter()
        .map(|id| find(id).map(|s| LabeledSample::new(&s.id, s.stats, s.label)))
        .collect::<Result<_>>()?;
    let test: Vec<&SampleStats> = split.test.iter().map(find).collect::<Result<_>>()?;
    if test.is_empty() {
        return Err(Error::Config("empty test side".into()));
    }
    let classifier = Classifier::train(kind, &train, &cfg.svc, &cfg.tree)?;
    let scores: Vec<ScoredItem> = test
        .iter()
        .map(|s| ScoredItem {
            id: s.id.clone(),
            score: classifier.score(&s.stats),
            truth: s.label.is_real(),
        })
        .collect();
    let predictions: Vec<bool> = test.iter().map(|s| classifier.classify(&s.stats).is_real()).collect();
    let report = EvalReport::compute(
        &scores,
        &predictions,
        "real",
        &corpus.digest(),
        &format!("{kind}+{}", &detector_digest[..16.min(detector_digest.len())]),
        &cfg.digest(),
        cfg.seed,
    )?;
    let (train_outlets, test_outlets) = split.outlets(corpus);
    Ok(PipelineReport {
        classifier: kind,
        split: split.clone(),
        outlet_overlap: split.outlet_overlap(corpus),
        train_outlets,
        test_outlets,
        detector_digest: detector_digest.to_string(),
        report,
        scores,
    })
}

/// Detection, statistics, classifier training on `split.train` and scoring of `split.test`.
pub fn run_pipeline_eval(
    detector: &BreathDetector<f32>,
    corpus: &CorpusIndex,
    split: &SplitPlan,
    kind: ClassifierKind,
    cfg: &ExperimentConfig,
) -> Result<PipelineReport> {
    let stats = detect_corpus_stats(detector, corpus, cfg)?;
    evaluate_classifier(&stats, corpus, split, kind, &model_digest(detector)?, cfg)
}
