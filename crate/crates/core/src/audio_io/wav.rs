use std::io::Write;
use std::path::Path;

use super::AudioBuffer;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Reads a RIFF/WAVE file into a mono buffer at its native rate.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(Error::at(path))?;
    read_wav(&bytes)
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Decodes WAV bytes. PCM16 is scaled by 1/32768, so -32768 maps to -1.0.
pub fn read_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE header".into()));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "chunk `{}` overruns file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Format("fmt chunk shorter than 16 bytes".into()));
                }
                let mut tag = u16_at(body, 0);
                if tag == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err(Error::Format("truncated WAVE_FORMAT_EXTENSIBLE".into()));
                    }
                    tag = u16_at(body, 24);
                }
                fmt = Some((tag, u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_end + (size & 1);
    }
    let (tag, channels, rate, bits) =
        fmt.ok_or_else(|| Error::Format("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("no data chunk".into()))?;
    if rate == 0 {
        return Err(Error::Format("sample rate is zero".into()));
    }
    if !(1..=2).contains(&channels) {
        return Err(Error::Unsupported(format!("{channels} channels")));
    }
    let decoded: Vec<f32> = match (tag, bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        (FORMAT_PCM, b) => return Err(Error::Unsupported(format!("PCM {b}-bit"))),
        (FORMAT_FLOAT, b) => return Err(Error::Unsupported(format!("IEEE float {b}-bit"))),
        (t, b) => {
            return Err(Error::Unsupported(format!(
                "format tag {t:#06x} ({b}-bit)"
            )))
        }
    };
    let samples = if channels == 2 {
        decoded
            .chunks_exact(2)
            .map(|c| (c[0] + c[1]) * 0.5)
            .collect()
    } else {
        decoded
    };
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Format("non-finite float sample".into()));
    }
    AudioBuffer::new(samples, rate)
}

/// Writes a mono WAV file.
pub fn write_wav(path: impl AsRef<Path>, buffer: &AudioBuffer, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(buffer, encoding);
    let mut f = std::fs::File::create(path).map_err(Error::at(path))?;
    f.write_all(&bytes).map_err(Error::at(path))?;
    Ok(())
}

pub(crate) fn encode_wav(buffer: &AudioBuffer, encoding: WavEncoding) -> Vec<u8> {
    let (tag, bits) = match encoding {
        WavEncoding::Pcm16 => (FORMAT_PCM, 16u16),
        WavEncoding::Float32 => (FORMAT_FLOAT, 32u16),
    };
    let block_align = bits / 8;
    let data_len = buffer.len() * block_align as usize;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buffer.sample_rate().to_le_bytes());
    out.extend_from_slice(&(buffer.sample_rate() * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in buffer.samples() {
        match encoding {
            WavEncoding::Pcm16 => {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            WavEncoding::Float32 => out.extend_from_slice(&s.to_le_bytes()),
        }
    }
    if data_len % 2 == 1 {
        out.push(0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(tag: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data.len()) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * (channels * bits / 8) as u32).to_le_bytes());
        out.extend_from_slice(&(channels * bits / 8).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn zero_second_file() {
        let b = read_wav(&header(1, 1, 16000, 16, &vec![0u8; 32000])).unwrap();
        assert_eq!(b.len(), 16000);
        assert_eq!(b.sample_rate(), 16000);
        assert!(b.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn four_sample_fixture_scaling() {
        // -32768, 16384, 32767, -1
        let data = [0x00, 0x80, 0x00, 0x40, 0xFF, 0x7F, 0xFF, 0xFF];
        let b = read_wav(&header(1, 1, 8000, 16, &data)).unwrap();
        assert_eq!(b.samples(), &[-1.0, 0.5, 32767.0 / 32768.0, -1.0 / 32768.0]);
    }

    #[test]
    fn stereo_is_averaged() {
        let mut data = Vec::new();
        for _ in 0..10 {
            data.extend_from_slice(&0.5f32.to_le_bytes());
            data.extend_from_slice(&(-0.5f32).to_le_bytes());
        }
        let b = read_wav(&header(3, 2, 16000, 32, &data)).unwrap();
        assert_eq!(b.len(), 10);
        assert!(b.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn unsupported_encoding_is_named() {
        let err = read_wav(&header(1, 1, 16000, 24, &[0u8; 6])).unwrap_err();
        assert!(matches!(&err, Error::Unsupported(m) if m.contains("24-bit")), "{err}");
        let err = read_wav(&header(6, 1, 8000, 8, &[0u8; 6])).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(read_wav(b"RIFX0000WAVE"), Err(Error::Format(_))));
        let mut bytes = header(1, 1, 16000, 16, &[0u8; 4]);
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(read_wav(&bytes), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn float_round_trip_is_lossless(samples in prop::collection::vec(-1.0f32..=1.0, 1..400)) {
            let buf = AudioBuffer::new(samples, 22050).unwrap();
            let back = read_wav(&encode_wav(&buf, WavEncoding::Float32)).unwrap();
            prop_assert_eq!(back, buf);
        }

        #[test]
        fn pcm16_round_trip_within_one_lsb(samples in prop::collection::vec(-1.0f32..=1.0, 1..400)) {
            let buf = AudioBuffer::new(samples, 16000).unwrap();
            let back = read_wav(&encode_wav(&buf, WavEncoding::Pcm16)).unwrap();
            for (a, b) in buf.samples().iter().zip(back.samples()) {
                prop_assert!((a - b).abs() <= 1.0 / 32768.0);
            }
        }
    }
}
