use std::f64::consts::PI;

use super::AudioBuffer;

/// Zero crossings of the sinc kernel on each side of the output instant.
const HALF_ZEROS: f64 = 32.0;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(u: f64) -> f64 {
    // u in [-1, 1]
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let phase = PI * (u + 1.0);
    0.42 - 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos()
}

/// Band-limited resampling with a Blackman-windowed sinc kernel.
///
/// Output length is `ceil(len * target / source)`. When downsampling the
/// kernel cutoff drops to the target Nyquist frequency.
pub fn resample(buffer: &AudioBuffer, target_rate: u32) -> AudioBuffer {
    assert!(target_rate > 0, "target rate must be positive");
    let source_rate = buffer.sample_rate();
    if source_rate == target_rate {
        return buffer.clone();
    }
    let input = buffer.samples();
    let out_len = ((input.len() as u64 * target_rate as u64 + source_rate as u64 - 1)
        / source_rate as u64) as usize;
    let step = source_rate as f64 / target_rate as f64;
    let cutoff = (target_rate as f64 / source_rate as f64).min(1.0);
    let half_width = HALF_ZEROS / cutoff;

    let out = (0..out_len)
        .map(|n| {
            let t = n as f64 * step;
            let lo = (t - half_width).ceil().max(0.0) as usize;
            let hi = ((t + half_width).floor() as usize).min(input.len().saturating_sub(1));
            let mut acc = 0.0f64;
            for (k, &x) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let d = t - k as f64;
                acc += x as f64 * cutoff * sinc(cutoff * d) * blackman(d / half_width);
            }
            (acc as f32).clamp(-1.0, 1.0)
        })
        .collect();
    AudioBuffer::new(out, target_rate).expect("finite resampler output")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, len: usize, amp: f64) -> AudioBuffer {
        let s = (0..len)
            .map(|i| (amp * (2.0 * PI * freq * i as f64 / rate as f64).sin()) as f32)
            .collect();
        AudioBuffer::new(s, rate).unwrap()
    }

    /// Index of the largest-magnitude bin of a direct O(n^2) DFT.
    fn peak_bin(x: &[f32]) -> usize {
        let n = x.len();
        (1..n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0f64, 0.0f64);
                for (i, &v) in x.iter().enumerate() {
                    let ph = -2.0 * PI * (k * i % n) as f64 / n as f64;
                    re += v as f64 * ph.cos();
                    im += v as f64 * ph.sin();
                }
                (k, re * re + im * im)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    }

    #[test]
    fn identity_rate() {
        let b = tone(440.0, 16000, 1000, 0.5);
        assert_eq!(resample(&b, 16000), b);
    }

    #[test]
    fn tone_keeps_peak_frequency() {
        // 0.25 s windows: 4 Hz bins, 200 Hz is bin 50.
        let b = tone(200.0, 48000, 12000, 0.8);
        let r = resample(&b, 16000);
        assert_eq!(r.len(), 4000);
        assert_eq!(peak_bin(r.samples()), 50);
    }

    #[test]
    fn upsampled_length_contract() {
        let b = tone(100.0, 8000, 8000, 0.5);
        let r = resample(&b, 16000);
        assert!((r.len() as i64 - 16000).abs() <= 1);
    }

    #[test]
    fn duration_within_one_output_period() {
        for (len, from, to) in [(1001, 44100, 16000), (777, 22050, 48000), (5, 16000, 8000)] {
            let b = AudioBuffer::silence(len, from);
            let r = resample(&b, to);
            assert!((r.duration_ms() - b.duration_ms()).abs() <= 1000.0 / to as f64);
        }
    }

    #[test]
    fn downsampling_preserves_amplitude_in_band() {
        let b = tone(300.0, 48000, 48000, 0.5);
        let r = resample(&b, 16000);
        let mid = &r.samples()[2000..14000];
        let rms = (mid.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / mid.len() as f64).sqrt();
        assert!((rms - 0.5 / 2f64.sqrt()).abs() < 0.005, "rms {rms}");
    }
}
