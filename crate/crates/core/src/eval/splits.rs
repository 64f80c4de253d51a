use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusIndex;
use crate::audio_io::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStrategy {
    ContiguousKfold,
    LeaveOnePodcast,
    LeaveOneSpeaker,
    OutletDisjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub strategy: SplitStrategy,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub iteration: usize,
    pub rng_seed: u64,
}

impl SplitPlan {
    /// Ids present on both sides; always empty for plans built here.
    pub fn id_overlap(&self) -> usize {
        let train: BTreeSet<&String> = self.train.iter().collect();
        self.test.iter().filter(|id| train.contains(id)).count()
    }

    /// Outlets contributing to both sides.
    pub fn outlet_overlap(&self, corpus: &CorpusIndex) -> usize {
        let outlets = |ids: &[String]| -> BTreeSet<String> {
            ids.iter().filter_map(|id| corpus.get(id)).map(|i| i.outlet.clone()).collect()
        };
        outlets(&self.train).intersection(&outlets(&self.test)).count()
    }

    pub fn outlets(&self, corpus: &CorpusIndex) -> (Vec<String>, Vec<String>) {
        let outlets = |ids: &[String]| -> Vec<String> {
            let s: BTreeSet<String> = ids.iter().filter_map(|id| corpus.get(id)).map(|i| i.outlet.clone()).collect();
            s.into_iter().collect()
        };
        (outlets(&self.train), outlets(&self.test))
    }
}

/// Assigns whole outlets to train or test. Outlets are grouped by majority
/// label, shuffled with `seed`, and dealt alternately so each side gets half
/// of each group (train takes the extra one).
pub fn outlet_disjoint_split(corpus: &CorpusIndex, seed: u64) -> Result<SplitPlan> {
    let mut by_outlet: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for it in &corpus.items {
        let e = by_outlet.entry(it.outlet.as_str()).or_default();
        match it.label {
            Label::Real => e.0 += 1,
            Label::Fake => e.1 += 1,
            Label::Unlabeled => {
                return Err(Error::Input(format!("sample `{}` is unlabeled", it.id)));
            }
        }
    }
    if by_outlet.len() < 2 {
        return Err(Error::Config(format!(
            "outlet-disjoint split needs at least 2 outlets, found {}",
            by_outlet.len()
        )));
    }
    let mut real_outlets: Vec<&str> = by_outlet.iter().filter(|(_, c)| c.0 >= c.1).map(|(o, _)| *o).collect();
    let mut fake_outlets: Vec<&str> = by_outlet.iter().filter(|(_, c)| c.0 < c.1).map(|(o, _)| *o).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    real_outlets.shuffle(&mut rng);
    fake_outlets.shuffle(&mut rng);

    let mut train_outlets = BTreeSet::new();
    for group in [&real_outlets, &fake_outlets] {
        for (k, o) in group.iter().enumerate() {
            if k % 2 == 0 {
                train_outlets.insert(*o);
            }
        }
    }
    // a single-group corpus would otherwise leave the test side empty
    if train_outlets.len() == by_outlet.len() {
        let last = real_outlets.iter().chain(&fake_outlets).rev().find(|o| train_outlets.contains(*o));
        if let Some(o) = last.copied() {
            train_outlets.remove(o);
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = corpus.items.iter().partition(|i| train_outlets.contains(i.outlet.as_str()));
    let has_both = |side: &[&super::CorpusItem]| {
        side.iter().any(|i| i.label == Label::Real) && side.iter().any(|i| i.label == Label::Fake)
    };
    if !has_both(&train) {
        return Err(Error::Config(
            "outlet-disjoint split leaves the training side without both classes".into(),
        ));
    }
    if !has_both(&test) {
        log::warn!("outlet-disjoint test side holds a single class");
    }
    Ok(SplitPlan {
        strategy: SplitStrategy::OutletDisjoint,
        train: train.iter().map(|i| i.id.clone()).collect(),
        test: test.iter().map(|i| i.id.clone()).collect(),
        iteration: 0,
        rng_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::AudioBuffer;
    use crate::eval::{CorpusItem, CorpusKind};
    use crate::features::FeatureConfig;

    fn corpus(spec: &[(&str, Label)]) -> CorpusIndex {
        let audio = AudioBuffer::silence(800, 16_000);
        let base = CorpusItem::from_audio("x", &audio, None, &FeatureConfig::default(), 20).unwrap();
        let items = spec
            .iter()
            .enumerate()
            .map(|(k, (outlet, label))| CorpusItem {
                id: format!("s{k}"),
                outlet: outlet.to_string(),
                label: *label,
                ..base.clone()
            })
            .collect();
        CorpusIndex::new(CorpusKind::News, items).unwrap()
    }

    fn four_outlets() -> CorpusIndex {
        let mut spec = Vec::new();
        for o in ["tts-a", "tts-b"] {
            spec.extend([(o, Label::Fake); 3]);
        }
        for o in ["human-a", "human-b"] {
            spec.extend([(o, Label::Real); 3]);
        }
        corpus(&spec)
    }

    #[test]
    fn one_outlet_of_each_kind_per_side() {
        let c = four_outlets();
        for seed in 0..10 {
            let plan = outlet_disjoint_split(&c, seed).unwrap();
            let (tr, te) = plan.outlets(&c);
            assert_eq!((tr.len(), te.len()), (2, 2));
            assert_eq!(plan.outlet_overlap(&c), 0);
            assert_eq!(plan.id_overlap(), 0);
            assert_eq!(plan.train.len() + plan.test.len(), c.len());
            for side in [&tr, &te] {
                assert_eq!(side.iter().filter(|o| o.starts_with("tts")).count(), 1);
            }
            assert_eq!(plan, outlet_disjoint_split(&c, seed).unwrap());
        }
    }

    #[test]
    fn infeasible_splits() {
        let one = corpus(&[("a", Label::Real), ("a", Label::Fake)]);
        assert!(matches!(outlet_disjoint_split(&one, 0), Err(Error::Config(_))));
        let two = corpus(&[("a", Label::Real), ("b", Label::Fake)]);
        assert!(matches!(outlet_disjoint_split(&two, 0), Err(Error::Config(_))));
    }
}
