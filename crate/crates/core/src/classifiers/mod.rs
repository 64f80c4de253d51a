//! Sample-level real/fake classifiers over breath statistics.

mod svc;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::breath_stats::BreathStats;
use crate::error::{Error, Result};

pub use svc::{dual_objective, polynomial_kernel, solve_dual, Scaler, SvcConfig, SvcModel, SvcSolution};
pub use tree::{gini, TreeConfig, TreeModel, TreeNode};

/// Real speech is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Real,
    Fake,
}

impl Class {
    pub fn is_real(self) -> bool {
        self == Class::Real
    }

    pub fn from_real(real: bool) -> Self {
        if real {
            Class::Real
        } else {
            Class::Fake
        }
    }

    /// +1 for real, -1 for fake.
    pub fn sign(self) -> f64 {
        if self.is_real() {
            1.0
        } else {
            -1.0
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.is_real() { "real" } else { "fake" })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: String,
    pub stats: BreathStats,
    pub label: Class,
}

impl LabeledSample {
    pub fn new(id: impl Into<String>, stats: BreathStats, label: Class) -> Self {
        Self {
            id: id.into(),
            stats,
            label,
        }
    }
}

pub(crate) fn check_samples(samples: &[LabeledSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Training("no training samples".into()));
    }
    if let Some(s) = samples.iter().find(|s| !s.stats.is_finite()) {
        return Err(Error::Input(format!("sample {} has non-finite stats", s.id)));
    }
    Ok(())
}

/// Real iff every statistic is strictly positive.
pub fn threshold_classify(stats: &BreathStats) -> Class {
    Class::from_real(stats.to_array().iter().all(|&v| v > 0.0))
}

/// 1 for real, 0 for fake.
pub fn threshold_score(stats: &BreathStats) -> f64 {
    if threshold_classify(stats).is_real() {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Threshold,
    Svc,
    Tree,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Threshold => "threshold",
            ClassifierKind::Svc => "svc",
            ClassifierKind::Tree => "tree",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(ClassifierKind::Threshold),
            "svc" => Ok(ClassifierKind::Svc),
            "tree" => Ok(ClassifierKind::Tree),
            other => Err(Error::Config(format!(
                "unknown classifier {other:?}; expected threshold, svc or tree"
            ))),
        }
    }
}

/// A fitted classifier of any kind. Scores are oriented so higher means more real.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Threshold,
    Svc(SvcModel),
    Tree(TreeModel),
}

impl Classifier {
    /// Thresholding needs no training and ignores `samples`.
    pub fn train(kind: ClassifierKind, samples: &[LabeledSample], svc: &SvcConfig, tree: &TreeConfig) -> Result<Self> {
        Ok(match kind {
            ClassifierKind::Threshold => Classifier::Threshold,
            ClassifierKind::Svc => Classifier::Svc(SvcModel::train(samples, svc)?),
            ClassifierKind::Tree => Classifier::Tree(TreeModel::train(samples, tree)?),
        })
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Classifier::Threshold => ClassifierKind::Threshold,
            Classifier::Svc(_) => ClassifierKind::Svc,
            Classifier::Tree(_) => ClassifierKind::Tree,
        }
    }

    pub fn score(&self, stats: &BreathStats) -> f64 {
        match self {
            Classifier::Threshold => threshold_score(stats),
            Classifier::Svc(m) => m.score(stats),
            Classifier::Tree(m) => m.score(stats),
        }
    }

    pub fn classify(&self, stats: &BreathStats) -> Class {
        match self {
            Classifier::Threshold => threshold_classify(stats),
            Classifier::Svc(m) => m.classify(stats),
            Classifier::Tree(m) => m.classify(stats),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn thresholding() {
        assert_eq!(threshold_classify(&BreathStats::new(12.0, 400.0, 3000.0)), Class::Real);
        assert_eq!(threshold_classify(&BreathStats::new(0.0, 0.0, 0.0)), Class::Fake);
        assert_eq!(threshold_classify(&BreathStats::new(5.0, 300.0, 0.0)), Class::Fake);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("svc".parse::<ClassifierKind>().unwrap(), ClassifierKind::Svc);
        assert!("forest".parse::<ClassifierKind>().is_err());
        assert_eq!(ClassifierKind::Tree.to_string(), "tree");
    }

    proptest! {
        #[test]
        fn threshold_scale_invariant(v in prop::array::uniform3(prop_oneof![Just(0.0), 0.1f64..1e4]), k in 1e-3f64..1e3) {
            let a = BreathStats::from_array(v);
            let b = BreathStats::from_array([v[0] * k, v[1] * k, v[2] * k]);
            prop_assert_eq!(threshold_classify(&a), threshold_classify(&b));
        }
    }
}
