//! Framewise features: 128 mel-dB bands, zero-crossing rate and RMS energy in dB.
//!
//! Frame `t` covers samples `[t*hop, t*hop + window)`; frames running past the
//! end of the buffer are zero-padded, so the frame count is
//! `floor(duration_ms / hop_ms)`.
//!
//! Mel scale (Slaney): linear below 1 kHz at 200/3 Hz per mel, logarithmic
//! above with step `ln(6.4) / 27` per mel.
//!
//! | constant | value |
//! |---|---|
//! | linear slope | 200/3 Hz per mel |
//! | log break | 1000 Hz = 15 mel |
//! | log step | ln(6.4)/27 |

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::AudioBuffer;
use crate::container;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    /// `None` selects the next power of two at or above the window length.
    pub fft_size: Option<usize>,
    pub mel_fmin: f64,
    /// `None` means Nyquist.
    pub mel_fmax: Option<f64>,
    pub db_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_ms: 20.0,
            hop_ms: 2.5,
            n_mels: 128,
            fft_size: None,
            mel_fmin: 0.0,
            mel_fmax: None,
            db_floor: -100.0,
        }
    }
}

impl FeatureConfig {
    pub fn num_features(&self) -> usize {
        self.n_mels + 2
    }

    pub fn window_samples(&self, rate: u32) -> usize {
        (self.window_ms * rate as f64 / 1000.0).round() as usize
    }

    fn hop_us(&self) -> u128 {
        (self.hop_ms * 1000.0).round() as u128
    }

    /// Start sample of frame `t`.
    pub fn frame_start(&self, t: usize, rate: u32) -> usize {
        (t as u128 * self.hop_us() * rate as u128 / 1_000_000) as usize
    }

    /// `floor(duration_ms / hop_ms)` in exact integer arithmetic.
    pub fn num_frames(&self, num_samples: usize, rate: u32) -> usize {
        (num_samples as u128 * 1_000_000 / (rate as u128 * self.hop_us())) as usize
    }

    pub fn fft_len(&self, rate: u32) -> usize {
        self.fft_size
            .unwrap_or_else(|| self.window_samples(rate).next_power_of_two())
    }

    pub fn fmax(&self, rate: u32) -> f64 {
        self.mel_fmax.unwrap_or(rate as f64 / 2.0)
    }

    pub fn validate(&self, rate: u32) -> Result<()> {
        if !(self.hop_ms > 0.0 && self.window_ms > self.hop_ms) {
            return Err(Error::Config(format!(
                "need window_ms > hop_ms > 0 (got {} / {})",
                self.window_ms, self.hop_ms
            )));
        }
        if self.hop_us() == 0 || self.window_samples(rate) < 2 {
            return Err(Error::Config("window or hop shorter than a sample".into()));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be at least 1".into()));
        }
        let win = self.window_samples(rate);
        if self.fft_len(rate) < win {
            return Err(Error::Config(format!(
                "fft_size {} smaller than window ({win} samples)",
                self.fft_len(rate)
            )));
        }
        let fmax = self.fmax(rate);
        if !(self.mel_fmin >= 0.0 && self.mel_fmin < fmax && fmax <= rate as f64 / 2.0) {
            return Err(Error::Config(format!(
                "mel range {}..{fmax} Hz invalid at {rate} Hz",
                self.mel_fmin
            )));
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if hz >= MIN_LOG_HZ {
        min_log_mel + (hz / MIN_LOG_HZ).ln() / logstep
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if mel >= min_log_mel {
        MIN_LOG_HZ * (logstep * (mel - min_log_mel)).exp()
    } else {
        F_SP * mel
    }
}

/// Band edges in Hz: `n_mels + 2` points evenly spaced in mel.
pub fn mel_band_edges(n_mels: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Peak-normalized triangular filters over FFT bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// (first bin, weights) per band.
    bands: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fft_len: usize, rate: u32, fmin: f64, fmax: f64) -> Self {
        let edges = mel_band_edges(n_mels, fmin, fmax);
        let n_bins = fft_len / 2 + 1;
        let bin_hz = rate as f64 / fft_len as f64;
        let bands = (0..n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let up = (f - lo) / (mid - lo);
                        let down = (hi - f) / (hi - mid);
                        (k, up.min(down).max(0.0))
                    })
                    .filter(|&(_, w)| w > 0.0)
                    .collect();
                match weights.first() {
                    Some(&(first, _)) => (first, weights.iter().map(|&(_, w)| w).collect()),
                    None => (0, Vec::new()),
                }
            })
            .collect();
        Self { bands }
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, (first, w)) in out.iter_mut().zip(&self.bands) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
        }
    }

    pub fn weights(&self, band: usize, n_bins: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_bins];
        let (first, w) = &self.bands[band];
        v[*first..*first + w.len()].copy_from_slice(w);
        v
    }
}

/// Samples of frame `t`, zero-padded to a full window.
fn frame<'a>(samples: &[f32], start: usize, win: usize, scratch: &'a mut Vec<f64>) -> &'a [f64] {
    scratch.clear();
    scratch.extend(
        (start..start + win).map(|i| samples.get(i).copied().unwrap_or(0.0) as f64),
    );
    scratch
}

fn frame_starts<'a>(buffer: &AudioBuffer, config: &'a FeatureConfig) -> impl Iterator<Item = usize> + 'a {
    let rate = buffer.sample_rate();
    let n = config.num_frames(buffer.len(), rate);
    (0..n).map(move |t| config.frame_start(t, rate))
}

fn zcr_frame(x: &[f64]) -> f64 {
    let crossings = x
        .windows(2)
        .filter(|p| (p[0] >= 0.0) != (p[1] >= 0.0))
        .count();
    crossings as f64 / (x.len() - 1) as f64
}

fn rms_db(x: &[f64], floor: f64) -> f64 {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    amplitude_db(rms, floor)
}

fn amplitude_db(a: f64, floor: f64) -> f64 {
    if a <= 0.0 {
        floor
    } else {
        (20.0 * a.log10()).max(floor)
    }
}

fn power_db(p: f64, floor: f64) -> f64 {
    if p <= 0.0 {
        floor
    } else {
        (10.0 * p.log10()).max(floor)
    }
}

fn check_input(buffer: &AudioBuffer, config: &FeatureConfig) -> Result<()> {
    if buffer.is_empty() {
        return Err(Error::Input("empty audio buffer".into()));
    }
    config.validate(buffer.sample_rate())
}

/// Per-frame zero-crossing rate; `sign(0) = +1`.
pub fn zcr(buffer: &AudioBuffer, config: &FeatureConfig) -> Result<Vec<f64>> {
    check_input(buffer, config)?;
    let win = config.window_samples(buffer.sample_rate());
    let mut scratch = Vec::with_capacity(win);
    Ok(frame_starts(buffer, config)
        .map(|s| zcr_frame(frame(buffer.samples(), s, win, &mut scratch)))
        .collect())
}

/// Per-frame RMS in dB, floored at `db_floor`.
pub fn rmse_db(buffer: &AudioBuffer, config: &FeatureConfig) -> Result<Vec<f64>> {
    check_input(buffer, config)?;
    let win = config.window_samples(buffer.sample_rate());
    let mut scratch = Vec::with_capacity(win);
    Ok(frame_starts(buffer, config)
        .map(|s| rms_db(frame(buffer.samples(), s, win, &mut scratch), config.db_floor))
        .collect())
}

struct SpectralFrontEnd {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    fft_len: usize,
    bank: MelFilterbank,
    spectrum: Vec<Complex<f64>>,
    power: Vec<f64>,
}

impl SpectralFrontEnd {
    fn new(config: &FeatureConfig, rate: u32) -> Self {
        let win = config.window_samples(rate);
        let fft_len = config.fft_len(rate);
        Self {
            fft: FftPlanner::new().plan_fft_forward(fft_len),
            window: hann(win),
            fft_len,
            bank: MelFilterbank::new(config.n_mels, fft_len, rate, config.mel_fmin, config.fmax(rate)),
            spectrum: vec![Complex::default(); fft_len],
            power: vec![0.0; fft_len / 2 + 1],
        }
    }

    fn mel_db(&mut self, x: &[f64], floor: f64, out: &mut [f64]) {
        for (i, c) in self.spectrum.iter_mut().enumerate() {
            *c = Complex::new(x.get(i).map_or(0.0, |v| v * self.window[i]), 0.0);
        }
        self.fft.process(&mut self.spectrum);
        for (p, c) in self.power.iter_mut().zip(&self.spectrum) {
            *p = c.norm_sqr();
        }
        debug_assert_eq!(self.power.len(), self.fft_len / 2 + 1);
        self.bank.apply(&self.power, out);
        for v in out.iter_mut() {
            *v = power_db(*v, floor);
        }
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Per-frame mel power spectrum in dB (`n_mels` values per frame).
pub fn mel_spectrogram_db(buffer: &AudioBuffer, config: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    check_input(buffer, config)?;
    let rate = buffer.sample_rate();
    let win = config.window_samples(rate);
    let mut front = SpectralFrontEnd::new(config, rate);
    let mut scratch = Vec::with_capacity(win);
    Ok(frame_starts(buffer, config)
        .map(|s| {
            let mut out = vec![0.0; config.n_mels];
            front.mel_db(frame(buffer.samples(), s, win, &mut scratch), config.db_floor, &mut out);
            out
        })
        .collect())
}

/// Row-major `num_frames x (n_mels + 2)` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f32>,
    num_frames: usize,
    pub config: FeatureConfig,
    pub source_duration_ms: f64,
}

impl FeatureMatrix {
    pub fn from_rows(
        data: Vec<f32>,
        num_frames: usize,
        config: FeatureConfig,
        source_duration_ms: f64,
    ) -> Result<Self> {
        if data.len() != num_frames * config.num_features() {
            return Err(Error::Shape {
                expected: vec![num_frames, config.num_features()],
                actual: vec![data.len()],
            });
        }
        Ok(Self {
            data,
            num_frames,
            config,
            source_duration_ms,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_features(&self) -> usize {
        self.config.num_features()
    }

    pub fn row(&self, t: usize) -> &[f32] {
        let c = self.num_features();
        &self.data[t * c..(t + 1) * c]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn zcr_column(&self) -> usize {
        self.config.n_mels
    }

    pub fn rmse_column(&self) -> usize {
        self.config.n_mels + 1
    }

    /// Copies frames `range` into a new matrix.
    pub fn slice(&self, range: std::ops::Range<usize>) -> FeatureMatrix {
        let c = self.num_features();
        FeatureMatrix {
            data: self.data[range.start * c..range.end * c].to_vec(),
            num_frames: range.len(),
            config: self.config.clone(),
            source_duration_ms: range.len() as f64 * self.config.hop_ms,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = serde_json::json!({
            "rows": self.num_frames,
            "cols": self.num_features(),
            "dtype": "f32",
            "config": self.config,
            "source_duration_ms": self.source_duration_ms,
        });
        container::write_f32(path, &header, &self.data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (header, payload) = container::read_f32(path)?;
        let rows = header["rows"]
            .as_u64()
            .ok_or_else(|| Error::Format("feature header missing rows".into()))? as usize;
        let config: FeatureConfig = serde_json::from_value(header["config"].clone())?;
        let duration = header["source_duration_ms"].as_f64().unwrap_or(rows as f64 * config.hop_ms);
        if header["cols"].as_u64() != Some(config.num_features() as u64) {
            return Err(Error::Format("feature header cols disagree with config".into()));
        }
        Self::from_rows(payload, rows, config, duration)
            .map_err(|e| Error::Format(format!("feature payload: {e}")))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let cols: Vec<String> = (0..self.config.n_mels)
            .map(|m| format!("mel_{m}"))
            .chain(["zcr".to_string(), "rmse_db".to_string()])
            .collect();
        out.push_str(&cols.join(","));
        out.push('\n');
        for t in 0..self.num_frames {
            let row: Vec<String> = self.row(t).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Mel-dB, ZCR and RMSE-dB per frame, concatenated into `n_mels + 2` columns.
pub fn extract_features(buffer: &AudioBuffer, config: &FeatureConfig) -> Result<FeatureMatrix> {
    check_input(buffer, config)?;
    let rate = buffer.sample_rate();
    let win = config.window_samples(rate);
    if buffer.len() < win {
        return Err(Error::Input(format!(
            "audio of {} samples is shorter than one {win}-sample window",
            buffer.len()
        )));
    }
    let n = config.num_frames(buffer.len(), rate);
    let cols = config.num_features();
    let mut front = SpectralFrontEnd::new(config, rate);
    let mut scratch = Vec::with_capacity(win);
    let mut mel = vec![0.0; config.n_mels];
    let mut data = Vec::with_capacity(n * cols);
    for t in 0..n {
        let x = frame(buffer.samples(), config.frame_start(t, rate), win, &mut scratch);
        front.mel_db(x, config.db_floor, &mut mel);
        data.extend(mel.iter().map(|&v| v as f32));
        data.push(zcr_frame(x) as f32);
        data.push(rms_db(x, config.db_floor) as f32);
    }
    FeatureMatrix::from_rows(data, n, config.clone(), buffer.duration_ms())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn buf(samples: Vec<f32>) -> AudioBuffer {
        AudioBuffer::new(samples, 16000).unwrap()
    }

    fn sine(freq: f64, amp: f64, len: usize) -> AudioBuffer {
        buf((0..len)
            .map(|i| (amp * (2.0 * PI * freq * i as f64 / 16000.0).sin()) as f32)
            .collect())
    }

    fn cfg() -> FeatureConfig {
        FeatureConfig::default()
    }

    #[test]
    fn zcr_constant_and_alternating() {
        let z = zcr(&buf(vec![0.5; 4000]), &cfg()).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let alt = buf((0..4000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect());
        let z = zcr(&alt, &cfg()).unwrap();
        // frames whose window lies fully inside the buffer
        let full = (4000 - 320) / 40 + 1;
        assert!(z[..full].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zcr_100hz_sine_matches_direct_count() {
        let b = sine(100.0, 1.0, 1600);
        let z = zcr(&b, &cfg()).unwrap();
        // frame 1 spans samples 40..360: zero crossings at 80, 160, 240, 320
        let x: Vec<f32> = b.samples()[40..360].to_vec();
        let direct = x.windows(2).filter(|p| (p[0] >= 0.0) != (p[1] >= 0.0)).count();
        assert_eq!(direct, 4);
        assert!((z[1] - 4.0 / 319.0).abs() < 1e-12);
        assert!((z[1] - 0.01254).abs() < 1e-5);
    }

    #[test]
    fn rmse_reference_values() {
        let r = rmse_db(&buf(vec![1.0; 1600]), &cfg()).unwrap();
        assert_eq!(r[0], 0.0);
        let r = rmse_db(&buf(vec![0.0; 1600]), &cfg()).unwrap();
        assert!(r.iter().all(|&v| v == -100.0));
        // 100 Hz at 16 kHz: a 20 ms window holds exactly two periods
        let r = rmse_db(&sine(100.0, 1.0, 1600), &cfg()).unwrap();
        assert!((r[0] + 3.0103).abs() < 1e-4, "{}", r[0]);
    }

    #[test]
    fn mel_all_zero_is_floor() {
        let m = mel_spectrogram_db(&buf(vec![0.0; 1600]), &cfg()).unwrap();
        assert!(m.iter().flatten().all(|&v| v == -100.0));
    }

    #[test]
    fn mel_440_peaks_at_nearest_center() {
        let m = mel_spectrogram_db(&sine(440.0, 1.0, 3200), &cfg()).unwrap();
        let edges = mel_band_edges(128, 0.0, 8000.0);
        let nearest = (0..128)
            .min_by(|&a, &b| (edges[a + 1] - 440.0).abs().total_cmp(&(edges[b + 1] - 440.0).abs()))
            .unwrap();
        let row = &m[10];
        let argmax = (0..128).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(argmax, nearest);
    }

    #[test]
    fn mel_white_noise_tracks_bandwidth() {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let c = FeatureConfig {
            n_mels: 16,
            ..cfg()
        };
        let samples: Vec<f32> = (0..40 * 1000)
            .map(|_| (0.1 * rng.sample::<f64, _>(StandardNormal)) as f32)
            .collect();
        let m = mel_spectrogram_db(&buf(samples), &c).unwrap();
        assert_eq!(m.len(), 1000);
        let mut mean_power = vec![0.0; 16];
        for row in &m {
            for (acc, db) in mean_power.iter_mut().zip(row) {
                *acc += 10f64.powf(db / 10.0) / m.len() as f64;
            }
        }
        let fft_len = c.fft_len(16000);
        let bank = MelFilterbank::new(16, fft_len, 16000, 0.0, 8000.0);
        let widths: Vec<f64> = (0..16)
            .map(|b| bank.weights(b, fft_len / 2 + 1).iter().sum())
            .collect();
        // energy per unit filter weight is flat for white noise
        let ratios: Vec<f64> = mean_power.iter().zip(&widths).map(|(p, w)| p / w).collect();
        let mean = ratios.iter().sum::<f64>() / 16.0;
        for r in &ratios {
            assert!((r / mean - 1.0).abs() < 0.1, "{ratios:?}");
        }
        // equal-width bands in the linear region tie; clearly wider bands hold more energy
        for a in 0..16 {
            for b in 0..16 {
                if widths[b] > 1.2 * widths[a] {
                    assert!(mean_power[b] > mean_power[a], "bands {a} {b}");
                }
            }
        }
    }

    #[test]
    fn paper_frame_counts() {
        let five_s = FeatureConfig {
            window_ms: 50.0,
            hop_ms: 5.0,
            ..cfg()
        };
        assert_eq!(five_s.num_frames(80_000, 16000), 1000);
        let fm = extract_features(&buf(vec![0.0; 32_000]), &cfg()).unwrap();
        assert_eq!(fm.num_frames(), 800);
        assert_eq!(fm.num_features(), 130);
    }

    #[test]
    fn zero_signal_features() {
        let fm = extract_features(&buf(vec![0.0; 8000]), &cfg()).unwrap();
        for t in 0..fm.num_frames() {
            let r = fm.row(t);
            assert!(r[..128].iter().all(|&v| v == -100.0));
            assert_eq!(r[128], 0.0);
            assert_eq!(r[129], -100.0);
        }
    }

    #[test]
    fn config_errors() {
        let c = FeatureConfig {
            fft_size: Some(256),
            ..cfg()
        };
        assert!(matches!(mel_spectrogram_db(&buf(vec![0.0; 800]), &c), Err(Error::Config(_))));
        let c = FeatureConfig {
            hop_ms: 30.0,
            ..cfg()
        };
        assert!(matches!(zcr(&buf(vec![0.0; 800]), &c), Err(Error::Config(_))));
        assert!(matches!(extract_features(&buf(vec![0.0; 100]), &cfg()), Err(Error::Input(_))));
        assert!(matches!(zcr(&buf(vec![]), &cfg()), Err(Error::Input(_))));
    }

    #[test]
    fn time_shift_by_hops_shifts_rows() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let base: Vec<f32> = (0..6000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let k = 7;
        let mut shifted = vec![0.0f32; k * 40];
        shifted.extend_from_slice(&base);
        let a = extract_features(&buf(base), &cfg()).unwrap();
        let b = extract_features(&buf(shifted), &cfg()).unwrap();
        // skip frames touching the zero-padded tail of `a`
        for t in 0..a.num_frames() - 8 {
            assert_eq!(a.row(t), b.row(t + k));
        }
    }

    #[test]
    fn scaling_by_ten_adds_twenty_db() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f32> = (0..4000).map(|_| rng.random_range(-0.05..0.05)).collect();
        let y: Vec<f32> = x.iter().map(|v| v * 10.0).collect();
        let a = extract_features(&buf(x), &cfg()).unwrap();
        let b = extract_features(&buf(y), &cfg()).unwrap();
        for t in 0..a.num_frames() {
            let (ra, rb) = (a.row(t), b.row(t));
            for m in 0..128 {
                if ra[m] > -80.0 {
                    assert!((rb[m] - ra[m] - 20.0).abs() < 1e-3, "band {m}");
                }
            }
            assert_eq!(ra[128], rb[128]);
            if ra[129] > -80.0 {
                assert!((rb[129] - ra[129] - 20.0).abs() < 1e-3);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn frame_count_formula(ms in 100u64..120_000) {
            let n = (ms * 16) as usize;
            prop_assert_eq!(cfg().num_frames(n, 16000), (ms as f64 / 2.5).floor() as usize);
        }

        #[test]
        fn outputs_finite_and_floored(samples in prop::collection::vec(-1.0f32..=1.0, 320..1200)) {
            let fm = extract_features(&buf(samples), &cfg()).unwrap();
            for t in 0..fm.num_frames() {
                let r = fm.row(t);
                prop_assert!(r.iter().all(|v| v.is_finite()));
                prop_assert!(r[..128].iter().all(|&v| v >= -100.0));
                prop_assert!((0.0..=1.0).contains(&r[128]));
                prop_assert!(r[129] >= -100.0);
            }
        }
    }
}
