use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::par_map;
use crate::annotations::{frames_from_intervals, load_annotations, steps_from_frames, BreathIntervalSet};
use crate::audio_io::{hex, load_wav, AudioBuffer, Label, Manifest, SynthItem, SynthesisConfig, SyntheticCorpus};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureConfig, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    /// Breath-annotated recordings with speaker ids.
    Podcast,
    /// Whole-sample real/fake labels with outlets.
    News,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub id: String,
    pub speaker_id: Option<String>,
    pub outlet: String,
    pub label: Label,
    pub duration_ms: f64,
    pub features: FeatureMatrix,
    /// Per-step breath labels, when annotated.
    pub step_labels: Option<Vec<bool>>,
}

impl CorpusItem {
    /// Features and step labels for one recording.
    pub fn from_audio(
        id: &str,
        audio: &AudioBuffer,
        annotations: Option<&BreathIntervalSet>,
        features: &FeatureConfig,
        frames_per_step: usize,
    ) -> Result<Self> {
        let fm = extract_features(audio, features)?;
        let step_labels = annotations.map(|a| {
            let frames = frames_from_intervals(a, features, fm.num_frames());
            steps_from_frames(&frames, frames_per_step)
        });
        Ok(Self {
            id: id.to_string(),
            speaker_id: None,
            outlet: String::new(),
            label: Label::Unlabeled,
            duration_ms: audio.duration_ms(),
            features: fm,
            step_labels,
        })
    }

    pub fn require_steps(&self) -> Result<&[bool]> {
        self.step_labels
            .as_deref()
            .ok_or_else(|| Error::Input(format!("sample `{}` has no breath annotations", self.id)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    pub kind: CorpusKind,
    pub items: Vec<CorpusItem>,
}

impl CorpusIndex {
    pub fn new(kind: CorpusKind, items: Vec<CorpusItem>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for it in &items {
            if !seen.insert(&it.id) {
                return Err(Error::Input(format!("duplicate corpus id `{}`", it.id)));
            }
            match kind {
                CorpusKind::Podcast if it.speaker_id.is_none() => {
                    return Err(Error::Input(format!("podcast `{}` lacks a speaker id", it.id)))
                }
                CorpusKind::News if it.outlet.is_empty() => {
                    return Err(Error::Input(format!("news sample `{}` lacks an outlet", it.id)))
                }
                _ => {}
            }
        }
        Ok(Self { kind, items })
    }

    /// Loads, resamples and featurizes every manifest entry. Podcast corpora
    /// need annotations for every entry.
    pub fn from_manifest(
        manifest: &Manifest,
        kind: CorpusKind,
        features: &FeatureConfig,
        frames_per_step: usize,
        workers: usize,
    ) -> Result<Self> {
        let items = par_map(manifest.entries.len(), workers, |i| {
            let e = &manifest.entries[i];
            if e.is_url() {
                return Err(Error::Input(format!(
                    "sample `{}` points at a URL; fetch it first",
                    e.id
                )));
            }
            let audio = load_wav(manifest.resolve(&e.source))?.to_canonical();
            let ann = match &e.annotation_path {
                Some(p) => Some(load_annotations(manifest.resolve(p), audio.duration_ms())?),
                None if kind == CorpusKind::Podcast => {
                    return Err(Error::Input(format!("sample `{}` has no breath annotations", e.id)))
                }
                None => None,
            };
            let mut item = CorpusItem::from_audio(&e.id, &audio, ann.as_ref(), features, frames_per_step)?;
            item.speaker_id = e.speaker_id.clone();
            item.outlet = e.outlet.clone();
            item.label = e.label;
            Ok(item)
        })?;
        Self::new(kind, items)
    }

    pub fn from_synthetic(
        corpus: &SyntheticCorpus,
        kind: CorpusKind,
        features: &FeatureConfig,
        frames_per_step: usize,
        workers: usize,
    ) -> Result<Self> {
        let items = par_map(corpus.audio.len(), workers, |i| {
            let e = &corpus.manifest.entries[i];
            let mut item =
                CorpusItem::from_audio(&e.id, &corpus.audio[i], Some(&corpus.annotations[i]), features, frames_per_step)?;
            item.speaker_id = e.speaker_id.clone();
            item.outlet = e.outlet.clone();
            item.label = e.label;
            Ok(item)
        })?;
        Self::new(kind, items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusItem> {
        self.items.iter().find(|i| i.id == id)
    }

    /// SHA-256 over ids, metadata, features and labels in item order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for it in &self.items {
            h.update(it.id.as_bytes());
            h.update([0]);
            h.update(it.speaker_id.as_deref().unwrap_or("").as_bytes());
            h.update([0]);
            h.update(it.outlet.as_bytes());
            h.update([0]);
            h.update(it.label.to_string().as_bytes());
            h.update((it.features.num_frames() as u64).to_le_bytes());
            for v in it.features.as_slice() {
                h.update(v.to_le_bytes());
            }
            if let Some(s) = &it.step_labels {
                h.update(s.iter().map(|&b| u8::from(b)).collect::<Vec<_>>());
            }
        }
        hex(&h.finalize())
    }
}

/// Shape of the synthetic podcast corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PodcastCorpusSpec {
    pub podcasts: usize,
    pub speakers: usize,
    pub duration_ms: u64,
    pub seed: u64,
}

impl Default for PodcastCorpusSpec {
    fn default() -> Self {
        Self {
            podcasts: 8,
            speakers: 4,
            duration_ms: 40_000,
            seed: 0,
        }
    }
}

/// Voice and breath character shared by a speaker's recordings.
struct Timbre {
    pitch_hz: f64,
    band_hz: (f64, f64),
    breath_db: f64,
    speech_db: f64,
}

fn draw_timbre(rng: &mut ChaCha8Rng) -> Timbre {
    Timbre {
        pitch_hz: rng.random_range(95.0..220.0),
        band_hz: (rng.random_range(150.0..700.0), rng.random_range(1400.0..3600.0)),
        breath_db: rng.random_range(-38.0..-30.0),
        speech_db: rng.random_range(-23.0..-17.0),
    }
}

/// Per-recording channel: microphone colouring of the breath band, the
/// breath-to-speech level, and the recording's own non-breath artifacts.
struct Channel {
    band_shift_hz: (f64, f64),
    breath_offset_db: f64,
    artifact_band_hz: Option<(f64, f64)>,
    artifact_level_db: f64,
}

fn draw_channel(rng: &mut ChaCha8Rng, spread: f64, artifacts: bool) -> Channel {
    let band_shift_hz = (rng.random_range(-100.0..100.0) * spread, rng.random_range(-500.0..500.0) * spread);
    let breath_offset_db = rng.random_range(-3.0..3.0) * spread;
    let lo = rng.random_range(150.0..3000.0);
    let width = rng.random_range(600.0..2500.0);
    Channel {
        band_shift_hz,
        breath_offset_db,
        artifact_band_hz: artifacts.then_some((lo, lo + width)),
        artifact_level_db: rng.random_range(-44.0..-34.0),
    }
}

fn voiced(t: &Timbre, ch: &Channel, duration_ms: u64, bpm: f64, rng: &mut ChaCha8Rng) -> SynthesisConfig {
    SynthesisConfig {
        duration_ms,
        breaths_per_minute: bpm,
        speech_level_db: t.speech_db,
        breath_level_db: t.breath_db + ch.breath_offset_db,
        breath_band_hz: (t.band_hz.0 + ch.band_shift_hz.0, t.band_hz.1 + ch.band_shift_hz.1),
        speech_pitch_hz: t.pitch_hz,
        pauses_per_minute: rng.random_range(2.0..6.0),
        noise_floor_db: rng.random_range(-70.0..-60.0),
        artifact_band_hz: ch.artifact_band_hz,
        artifact_level_db: ch.artifact_level_db,
        rng_seed: rng.random(),
        ..Default::default()
    }
}

/// Podcasts dealt round-robin to speakers, each speaker with its own timbre.
pub fn podcast_corpus_items(spec: &PodcastCorpusSpec) -> Result<Vec<SynthItem>> {
    if spec.speakers == 0 || spec.podcasts < spec.speakers {
        return Err(Error::Config(format!(
            "{} podcasts cannot cover {} speakers",
            spec.podcasts, spec.speakers
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let timbres: Vec<Timbre> = (0..spec.speakers).map(|_| draw_timbre(&mut rng)).collect();
    Ok((0..spec.podcasts)
        .map(|p| {
            let s = p % spec.speakers;
            let bpm = rng.random_range(8.0..14.0);
            let ch = draw_channel(&mut rng, 1.0, true);
            let mut config = voiced(&timbres[s], &ch, spec.duration_ms, bpm, &mut rng);
            config.pauses_per_minute = rng.random_range(4.0..9.0);
            SynthItem {
                id: format!("podcast{p:02}"),
                label: Label::Real,
                speaker_id: Some(format!("speaker{s}")),
                outlet: format!("show{p:02}"),
                config,
            }
        })
        .collect())
}

/// Shape of the synthetic news corpus: human-read outlets breathe, TTS outlets do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewsCorpusSpec {
    pub real: usize,
    pub fake: usize,
    pub real_outlets: usize,
    pub fake_outlets: usize,
    pub duration_ms: u64,
    pub bpm_range: (f64, f64),
    pub seed: u64,
}

impl Default for NewsCorpusSpec {
    fn default() -> Self {
        Self {
            real: 40,
            fake: 40,
            real_outlets: 2,
            fake_outlets: 2,
            duration_ms: 30_000,
            bpm_range: (8.0, 14.0),
            seed: 0,
        }
    }
}

/// Items cycle through outlets; each outlet reads with one narrator voice.
pub fn news_corpus_items(spec: &NewsCorpusSpec) -> Result<Vec<SynthItem>> {
    if (spec.real > 0 && spec.real_outlets == 0) || (spec.fake > 0 && spec.fake_outlets == 0) {
        return Err(Error::Config("every labelled class needs at least one outlet".into()));
    }
    let (lo, hi) = spec.bpm_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::Config(format!("bpm range ({lo}, {hi}) invalid")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let real_voices: Vec<Timbre> = (0..spec.real_outlets).map(|_| draw_timbre(&mut rng)).collect();
    let fake_voices: Vec<Timbre> = (0..spec.fake_outlets).map(|_| draw_timbre(&mut rng)).collect();
    let mut items = Vec::with_capacity(spec.real + spec.fake);
    for i in 0..spec.real {
        let o = i % spec.real_outlets;
        let bpm = if lo == hi { lo } else { rng.random_range(lo..hi) };
        let ch = draw_channel(&mut rng, 0.5, false);
        items.push(SynthItem {
            id: format!("real{i:03}"),
            label: Label::Real,
            speaker_id: Some(format!("human{o}")),
            outlet: format!("human-outlet{o}"),
            config: voiced(&real_voices[o], &ch, spec.duration_ms, bpm, &mut rng),
        });
    }
    for i in 0..spec.fake {
        let o = i % spec.fake_outlets;
        let ch = draw_channel(&mut rng, 0.5, false);
        let mut config = voiced(&fake_voices[o], &ch, spec.duration_ms, 0.0, &mut rng);
        // synthetic voices still pause between sentences, silently
        config.pauses_per_minute = rng.random_range(6.0..12.0);
        items.push(SynthItem {
            id: format!("fake{i:03}"),
            label: Label::Fake,
            speaker_id: Some(format!("tts{o}")),
            outlet: format!("tts-outlet{o}"),
            config,
        });
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn podcast_items_cover_speakers() {
        let items = podcast_corpus_items(&PodcastCorpusSpec::default()).unwrap();
        assert_eq!(items.len(), 8);
        let speakers: BTreeSet<_> = items.iter().map(|i| i.speaker_id.clone().unwrap()).collect();
        assert_eq!(speakers.len(), 4);
        assert!(items.iter().all(|i| (8.0..14.0).contains(&i.config.breaths_per_minute)));
        assert_eq!(items, podcast_corpus_items(&PodcastCorpusSpec::default()).unwrap());
        assert!(podcast_corpus_items(&PodcastCorpusSpec { podcasts: 2, ..Default::default() }).is_err());
    }

    #[test]
    fn news_items_are_labelled_by_outlet() {
        let items = news_corpus_items(&NewsCorpusSpec::default()).unwrap();
        assert_eq!(items.len(), 80);
        for it in &items {
            let fake = it.outlet.starts_with("tts");
            assert_eq!(it.label == Label::Fake, fake);
            assert_eq!(it.config.breaths_per_minute == 0.0, fake);
        }
    }

    #[test]
    fn podcast_kind_needs_speakers() {
        let audio = AudioBuffer::silence(1600, 16_000);
        let item = CorpusItem::from_audio("a", &audio, None, &FeatureConfig::default(), 20).unwrap();
        assert!(CorpusIndex::new(CorpusKind::Podcast, vec![item.clone()]).is_err());
        assert!(item.require_steps().is_err());
        let idx = CorpusIndex::new(CorpusKind::Synthetic, vec![item.clone()]).unwrap();
        assert!(CorpusIndex::new(CorpusKind::Synthetic, vec![item.clone(), item]).is_err());
        assert_eq!(idx.digest().len(), 64);
    }
}
