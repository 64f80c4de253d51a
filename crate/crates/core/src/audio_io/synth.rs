//! Seeded synthetic speech with band-limited noise bursts standing in for
//! breaths. "Real"-style configs insert bursts at a breaths-per-minute rate;
//! "fake"-style configs (`breaths_per_minute = 0`) leave pauses silent, or
//! fill them with non-breath artifact bursts when an artifact band is set.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::manifest::{Label, Manifest, ManifestEntry};
use super::wav::{write_wav, WavEncoding};
use super::{AudioBuffer, CANONICAL_RATE};
use crate::annotations::{write_annotations, BreathIntervalSet, Interval};
use crate::error::{Error, Result};

const FADE_MS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub duration_ms: u64,
    pub breaths_per_minute: f64,
    /// Inclusive range each breath duration is drawn from.
    pub breath_duration_ms: (u64, u64),
    /// RMS level of voiced speech, dBFS.
    pub speech_level_db: f64,
    /// RMS level of breath bursts, dBFS.
    pub breath_level_db: f64,
    pub breath_band_hz: (f64, f64),
    /// Mean fundamental of the speech proxy.
    pub speech_pitch_hz: f64,
    /// Breathless pauses per minute, in addition to breath pauses.
    pub pauses_per_minute: f64,
    pub noise_floor_db: f64,
    /// Band of non-breath noise bursts (clicks, rustle) placed in breathless
    /// pauses; `None` leaves those pauses silent.
    pub artifact_band_hz: Option<(f64, f64)>,
    /// RMS level of artifact bursts, dBFS.
    pub artifact_level_db: f64,
    /// Share of breathless pauses that receive an artifact burst.
    pub artifact_fraction: f64,
    pub sample_rate: u32,
    pub rng_seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            duration_ms: 60_000,
            breaths_per_minute: 11.0,
            breath_duration_ms: (250, 600),
            speech_level_db: -20.0,
            breath_level_db: -34.0,
            breath_band_hz: (300.0, 2000.0),
            speech_pitch_hz: 140.0,
            pauses_per_minute: 4.0,
            noise_floor_db: -65.0,
            artifact_band_hz: None,
            artifact_level_db: -34.0,
            artifact_fraction: 0.5,
            sample_rate: CANONICAL_RATE,
            rng_seed: 0,
        }
    }
}

impl SynthesisConfig {
    /// Number of breaths the config asks for.
    pub fn breath_count(&self) -> usize {
        (self.breaths_per_minute * self.duration_ms as f64 / 60_000.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.breath_duration_ms;
        if !(self.breaths_per_minute.is_finite() && self.breaths_per_minute >= 0.0) {
            return Err(Error::Config("breaths_per_minute must be finite and >= 0".into()));
        }
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("breath duration range ({lo}, {hi}) invalid")));
        }
        if self.duration_ms == 0 || self.sample_rate == 0 {
            return Err(Error::Config("duration and sample rate must be positive".into()));
        }
        let (blo, bhi) = self.breath_band_hz;
        if !(blo >= 0.0 && blo < bhi && bhi <= self.sample_rate as f64 / 2.0) {
            return Err(Error::Config(format!("breath band {blo}..{bhi} Hz invalid")));
        }
        if let Some((alo, ahi)) = self.artifact_band_hz {
            if !(alo >= 0.0 && alo < ahi && ahi <= self.sample_rate as f64 / 2.0) {
                return Err(Error::Config(format!("artifact band {alo}..{ahi} Hz invalid")));
            }
        }
        if !(0.0..=1.0).contains(&self.artifact_fraction) {
            return Err(Error::Config("artifact_fraction must lie in [0, 1]".into()));
        }
        if !(self.pauses_per_minute.is_finite() && self.pauses_per_minute >= 0.0) {
            return Err(Error::Config("pauses_per_minute must be finite and >= 0".into()));
        }
        let needed = self.breath_count() as u64 * hi;
        if needed > self.duration_ms {
            return Err(Error::Config(format!(
                "{} breaths of up to {hi} ms need {needed} ms but only {} ms available",
                self.breath_count(),
                self.duration_ms
            )));
        }
        Ok(())
    }
}

fn db_to_amp(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Unit-RMS Gaussian noise restricted to `[lo, hi]` Hz.
fn bandpassed_noise(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, rate: u32) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = gaussian(rng, n)
        .into_iter()
        .map(|v| Complex::new(v, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * rate as f64 / n as f64;
        if f < lo || f > hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        out.into_iter().map(|v| v / rms).collect()
    } else {
        out
    }
}

struct Pause {
    span: (usize, usize),
    event: Interval,
    breath: bool,
}

fn ms_to_samples(ms: f64, rate: u32) -> usize {
    (ms * rate as f64 / 1000.0).round() as usize
}

/// Places breaths and breathless pauses in equal slots across the timeline.
fn layout(config: &SynthesisConfig, rng: &mut ChaCha8Rng) -> Vec<Pause> {
    let n_breaths = config.breath_count();
    let (lo, hi) = config.breath_duration_ms;
    let minutes = config.duration_ms as f64 / 60_000.0;
    let mut n_silent = (config.pauses_per_minute * minutes).round() as usize;
    // breathless pauses are decorative: shed them before becoming infeasible
    while n_silent > 0 && (n_breaths + n_silent) as u64 * hi > config.duration_ms {
        n_silent -= 1;
    }
    let n_events = n_breaths + n_silent;
    if n_events == 0 {
        return Vec::new();
    }
    let mut is_breath: Vec<bool> = (0..n_events).map(|i| i < n_breaths).collect();
    is_breath.shuffle(rng);
    let slot = config.duration_ms as f64 / n_events as f64;
    let rate = config.sample_rate;
    is_breath
        .into_iter()
        .enumerate()
        .map(|(i, breath)| {
            let slot_start = (i as f64 * slot).ceil();
            let slot_end = ((i + 1) as f64 * slot).floor();
            let dur = rng.random_range(lo..=hi) as f64;
            let room = (slot_end - slot_start - dur - 1.0).max(0.0);
            let start = slot_start + rng.random_range(0.0..=room).floor();
            let end = start + dur;
            let pad_before = rng.random_range(40.0..120.0);
            let pad_after = rng.random_range(40.0..120.0);
            let span = (
                ms_to_samples((start - pad_before).max(slot_start), rate),
                ms_to_samples((end + pad_after).min(slot_end), rate),
            );
            Pause {
                span,
                event: Interval::new(start, end),
                breath,
            }
        })
        .collect()
}

fn voiced_syllable(out: &mut [f64], config: &SynthesisConfig, rng: &mut ChaCha8Rng) {
    let rate = config.sample_rate as f64;
    let n = out.len();
    let f_start = config.speech_pitch_hz * rng.random_range(0.85..1.15);
    let f_end = f_start * rng.random_range(0.9..1.1);
    let f1 = rng.random_range(300.0..900.0);
    let f2 = rng.random_range(900.0..2500.0);
    let max_harmonic = ((4000.0 / f_start.max(f_end)).floor() as usize).max(1);
    let gains: Vec<f64> = (1..=max_harmonic)
        .map(|k| {
            let f = k as f64 * f_start;
            (1.0 + 3.0 * (-((f - f1) / 150.0).powi(2)).exp() + 2.0 * (-((f - f2) / 250.0).powi(2)).exp())
                / k as f64
        })
        .collect();
    let mut phase = 0.0f64;
    for (i, o) in out.iter_mut().enumerate() {
        let u = i as f64 / n as f64;
        let f0 = f_start + (f_end - f_start) * u;
        phase += 2.0 * PI * f0 / rate;
        let env = (PI * u).sin();
        let v: f64 = gains
            .iter()
            .enumerate()
            .map(|(k, g)| g * ((k + 1) as f64 * phase).sin())
            .sum();
        *o = v * env;
    }
    normalize(out, db_to_amp(config.speech_level_db) * rng.random_range(0.7..1.3));
}

fn fricative(out: &mut [f64], config: &SynthesisConfig, rng: &mut ChaCha8Rng) {
    let n = out.len();
    let noise = bandpassed_noise(rng, n, 3000.0, 7000.0_f64.min(config.sample_rate as f64 / 2.0 - 1.0), config.sample_rate);
    for (i, (o, v)) in out.iter_mut().zip(noise).enumerate() {
        *o = v * (PI * i as f64 / n as f64).sin();
    }
    normalize(out, db_to_amp(config.speech_level_db - 6.0));
}

fn normalize(x: &mut [f64], target_rms: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        let g = target_rms / rms;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn fill_speech(out: &mut [f64], config: &SynthesisConfig, rng: &mut ChaCha8Rng) {
    let rate = config.sample_rate;
    let mut t = 0;
    while t < out.len() {
        if rng.random_bool(0.3) {
            t += ms_to_samples(rng.random_range(10.0..40.0), rate);
            continue;
        }
        let len = ms_to_samples(rng.random_range(120.0..280.0), rate).min(out.len() - t);
        let seg = &mut out[t..t + len];
        if len >= 16 {
            if rng.random_bool(0.8) {
                voiced_syllable(seg, config, rng);
            } else {
                fricative(seg, config, rng);
            }
        }
        t += len;
    }
}

/// Renders one file and its exact breath annotations.
pub fn synthesize(config: &SynthesisConfig) -> Result<(AudioBuffer, BreathIntervalSet)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let rate = config.sample_rate;
    let n = ms_to_samples(config.duration_ms as f64, rate);
    let pauses = layout(config, &mut rng);

    let mut signal = vec![0.0f64; n];
    let mut cursor = 0;
    for p in pauses.iter().map(|p| p.span).chain(std::iter::once((n, n))) {
        if p.0 > cursor {
            fill_speech(&mut signal[cursor..p.0], config, &mut rng);
        }
        cursor = cursor.max(p.1);
    }

    let fade = ms_to_samples(FADE_MS, rate);
    let burst = |signal: &mut [f64], iv: &Interval, band: (f64, f64), level_db: f64, rng: &mut ChaCha8Rng| {
        let s = ms_to_samples(iv.start_ms, rate);
        let e = ms_to_samples(iv.end_ms, rate).min(n);
        let noise = bandpassed_noise(rng, e - s, band.0, band.1, rate);
        let (len, level) = (noise.len(), db_to_amp(level_db));
        for (i, v) in noise.into_iter().enumerate() {
            let ramp = ((i.min(len - 1 - i)) as f64 / fade as f64).min(1.0);
            signal[s + i] += v * level * ramp;
        }
    };
    let mut intervals = Vec::new();
    for p in pauses.iter().filter(|p| p.breath) {
        burst(&mut signal, &p.event, config.breath_band_hz, config.breath_level_db, &mut rng);
        intervals.push(p.event);
    }
    if let Some(band) = config.artifact_band_hz {
        for p in pauses.iter().filter(|p| !p.breath) {
            if !rng.random_bool(config.artifact_fraction) {
                continue;
            }
            burst(&mut signal, &p.event, band, config.artifact_level_db, &mut rng);
        }
    }

    let floor = db_to_amp(config.noise_floor_db);
    for (v, g) in signal.iter_mut().zip(gaussian(&mut rng, n)) {
        *v += floor * g;
    }
    let samples = signal.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect();
    let audio = AudioBuffer::new(samples, rate)?;
    let set = BreathIntervalSet::new(intervals, config.duration_ms as f64)?;
    Ok((audio, set))
}

/// One synthetic file with its corpus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthItem {
    pub id: String,
    pub label: Label,
    pub speaker_id: Option<String>,
    pub outlet: String,
    pub config: SynthesisConfig,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub audio: Vec<AudioBuffer>,
    pub annotations: Vec<BreathIntervalSet>,
    pub manifest: Manifest,
}

/// Renders every item; the manifest references `<id>.wav` and `<id>.breath.tsv`.
pub fn synthesize_corpus(items: &[SynthItem]) -> Result<SyntheticCorpus> {
    let mut audio = Vec::with_capacity(items.len());
    let mut annotations = Vec::with_capacity(items.len());
    let mut entries = Vec::with_capacity(items.len());
    for item in items {
        let (a, s) = synthesize(&item.config)
            .map_err(|e| Error::Config(format!("item `{}`: {e}", item.id)))?;
        entries.push(ManifestEntry {
            id: item.id.clone(),
            source: format!("{}.wav", item.id),
            label: item.label,
            speaker_id: item.speaker_id.clone(),
            outlet: item.outlet.clone(),
            duration_ms: Some(item.config.duration_ms as f64),
            annotation_path: Some(format!("{}.breath.tsv", item.id)),
        });
        audio.push(a);
        annotations.push(s);
    }
    Ok(SyntheticCorpus {
        audio,
        annotations,
        manifest: Manifest::new(entries)?,
    })
}

/// Writes WAVs (PCM16), annotation TSVs and `manifest.csv` into `dir`.
pub fn write_corpus(dir: impl AsRef<Path>, corpus: &SyntheticCorpus) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(Error::at(dir))?;
    for ((entry, audio), ann) in corpus
        .manifest
        .entries
        .iter()
        .zip(&corpus.audio)
        .zip(&corpus.annotations)
    {
        write_wav(dir.join(&entry.source), audio, WavEncoding::Pcm16)?;
        if let Some(p) = &entry.annotation_path {
            write_annotations(dir.join(p), ann)?;
        }
    }
    let path = dir.join("manifest.csv");
    corpus.manifest.save(&path)?;
    Ok(path)
}
