//! Audio ingestion: WAV codec, resampling, the synthetic breath corpus and
//! dataset manifests for corpora that cannot be redistributed.

mod fetch;
mod manifest;
mod resample;
mod synth;
mod wav;

pub use fetch::{fetch_manifest_sources, FetchRecord};
pub(crate) use fetch::hex;
pub use manifest::{Label, Manifest, ManifestEntry};
pub use resample::resample;
pub use synth::{synthesize, synthesize_corpus, write_corpus, SynthItem, SynthesisConfig, SyntheticCorpus};
pub use wav::{load_wav, read_wav, write_wav, WavEncoding};

use crate::error::{Error, Result};

/// Sample rate everything is converted to on ingest.
pub const CANONICAL_RATE: u32 = 16_000;

/// Mono audio in `[-1, 1]` at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Wraps samples, rejecting non-finite values and clamping to `[-1, 1]`.
    pub fn new(mut samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Input(format!("non-finite sample at index {i}")));
        }
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> f64 {
        1000.0 * self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Duration as the exact fraction `(numerator, denominator)` in milliseconds.
    pub fn duration_ms_ratio(&self) -> (u64, u64) {
        let num = 1000 * self.samples.len() as u64;
        let den = self.sample_rate as u64;
        let g = gcd(num, den);
        (num / g, den / g)
    }

    /// Resamples to [`CANONICAL_RATE`] unless already there.
    pub fn to_canonical(self) -> Self {
        if self.sample_rate == CANONICAL_RATE {
            self
        } else {
            resample(&self, CANONICAL_RATE)
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}
