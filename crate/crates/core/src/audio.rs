//! PCM16 mono WAV I/O, low-pass filtering, and fixed-length framing.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AudioError {
    #[error("not a RIFF/WAVE file")]
    BadMagic,
    #[error("unsupported WAV encoding (format tag {format}, {bits} bits per sample); need PCM 16-bit")]
    UnsupportedEncoding { format: u16, bits: u16 },
    #[error("unsupported channel count {0}; need mono")]
    UnsupportedChannels(u16),
    #[error("WAV file truncated: {0}")]
    Truncated(&'static str),
    #[error("WAV file has no {0} chunk")]
    MissingChunk(&'static str),
    #[error("sample rate must be positive")]
    BadSampleRate,
    #[error("audio clip is empty")]
    Empty,
    #[error("cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz")]
    CutoffAboveNyquist { cutoff_hz: f64, nyquist: f64 },
    #[error("filter order must be 1 or 2, got {0}")]
    BadOrder(u8),
    #[error("target length must be positive")]
    BadTargetLength,
}

pub type Result<T, E = AudioError> = std::result::Result<T, E>;

/// Sample rate the vocal network expects.
pub const FRAME_RATE: u32 = 16_000;
/// Samples per network input (~1.02 s at 16 kHz).
pub const FRAME_LEN: usize = 16_384;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl AudioClip {
    pub fn new(sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(AudioError::BadSampleRate);
        }
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        Ok(Self {
            sample_rate,
            samples: samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
        })
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|v| v * v).sum::<f64>() / xs.len() as f64).sqrt()
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a RIFF/WAVE PCM16 mono file. Samples are `int16 / 32768`.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::BadMagic);
    }
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(AudioError::Truncated("fmt chunk"));
                }
                format = Some((
                    le_u16(bytes, body),
                    le_u16(bytes, body + 2),
                    le_u32(bytes, body + 4),
                    le_u16(bytes, body + 14),
                ));
            }
            b"data" => {
                let (tag, channels, rate, bits) = format.ok_or(AudioError::MissingChunk("fmt"))?;
                if tag != 1 || bits != 16 {
                    return Err(AudioError::UnsupportedEncoding { format: tag, bits });
                }
                if channels != 1 {
                    return Err(AudioError::UnsupportedChannels(channels));
                }
                if rate == 0 {
                    return Err(AudioError::BadSampleRate);
                }
                let end = body.checked_add(size).ok_or(AudioError::Truncated("data chunk"))?;
                if end > bytes.len() || !size.is_multiple_of(2) {
                    return Err(AudioError::Truncated("data chunk"));
                }
                let samples: Vec<f64> = bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
                    .collect();
                return AudioClip::new(rate, samples);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body.saturating_add(size).saturating_add(size & 1);
    }
    if format.is_none() {
        Err(AudioError::MissingChunk("fmt"))
    } else {
        Err(AudioError::MissingChunk("data"))
    }
}

/// Encodes a clip as a canonical 44-byte-header PCM16 mono WAV.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = (clip.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in &clip.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    pub order: u8,
}

impl Default for FilterSpec {
    /// Telephone speech band, second-order Butterworth.
    fn default() -> Self {
        Self {
            cutoff_hz: 3400.0,
            order: 2,
        }
    }
}

/// Direct-form coefficients, normalized so `a[0] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl FilterSpec {
    pub fn design(&self, sample_rate: u32) -> Result<Biquad> {
        let fs = f64::from(sample_rate);
        let nyquist = fs / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(AudioError::CutoffAboveNyquist {
                cutoff_hz: self.cutoff_hz,
                nyquist,
            });
        }
        match self.order {
            1 => {
                let alpha = 1.0 - (-2.0 * PI * self.cutoff_hz / fs).exp();
                Ok(Biquad {
                    b: [alpha, 0.0, 0.0],
                    a: [1.0, alpha - 1.0, 0.0],
                })
            }
            2 => {
                // bilinear-transformed Butterworth, Q = 1/√2
                let w0 = 2.0 * PI * self.cutoff_hz / fs;
                let (sin, cos) = w0.sin_cos();
                let alpha = sin / std::f64::consts::SQRT_2;
                let a0 = 1.0 + alpha;
                let b1 = (1.0 - cos) / a0;
                Ok(Biquad {
                    b: [b1 / 2.0, b1, b1 / 2.0],
                    a: [1.0, -2.0 * cos / a0, (1.0 - alpha) / a0],
                })
            }
            other => Err(AudioError::BadOrder(other)),
        }
    }
}

impl Biquad {
    /// Transposed direct form II over a whole signal, zero initial state.
    pub fn run(&self, xs: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let (mut s1, mut s2) = (0.0, 0.0);
        xs.iter()
            .map(|&x| {
                let y = b0 * x + s1;
                s1 = b1 * x - a1 * y + s2;
                s2 = b2 * x - a2 * y;
                y
            })
            .collect()
    }
}

pub fn low_pass(clip: &AudioClip, spec: &FilterSpec) -> Result<AudioClip> {
    let filter = spec.design(clip.sample_rate)?;
    AudioClip::new(clip.sample_rate, filter.run(&clip.samples))
}

/// Linear-interpolation resampling to `rate`.
pub fn resample(clip: &AudioClip, rate: u32) -> Result<AudioClip> {
    if rate == 0 {
        return Err(AudioError::BadSampleRate);
    }
    if clip.sample_rate == rate {
        return Ok(clip.clone());
    }
    let ratio = f64::from(clip.sample_rate) / f64::from(rate);
    let n = ((clip.samples.len() as f64) / ratio).round().max(1.0) as usize;
    let last = clip.samples.len() - 1;
    let samples = (0..n)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = pos - lo as f64;
            clip.samples[lo] * (1.0 - frac) + clip.samples[hi] * frac
        })
        .collect();
    AudioClip::new(rate, samples)
}

/// Resamples to 16 kHz, center-crops or center-pads with zeros to
/// `target_len`, and scales to unit peak unless the frame is silent.
/// Returns a `[1, target_len]` tensor.
pub fn frame_features(clip: &AudioClip, target_len: usize) -> Result<Tensor> {
    if target_len == 0 {
        return Err(AudioError::BadTargetLength);
    }
    if clip.samples.is_empty() {
        return Err(AudioError::Empty);
    }
    let clip = resample(clip, FRAME_RATE)?;
    let src = &clip.samples;
    let mut frame = vec![0.0; target_len];
    if src.len() >= target_len {
        let start = (src.len() - target_len) / 2;
        frame.copy_from_slice(&src[start..start + target_len]);
    } else {
        let offset = (target_len - src.len()) / 2;
        frame[offset..offset + src.len()].copy_from_slice(src);
    }
    let peak = frame.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        frame.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(Tensor::new(vec![1, target_len], frame).expect("frame length is positive"))
}
