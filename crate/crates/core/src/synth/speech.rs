//! Syllabic harmonic "speech". Clear clips gate syllables with short linear
//! ramps; slurred clips smear the same gates over much longer ramps and let
//! pitch and formant weights drift.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::gauss;
use crate::audio::{AudioClip, FRAME_LEN, FRAME_RATE};

const CLEAR_RAMP_MS: f64 = 40.0;
const HARMONICS: usize = 8;

/// Length in milliseconds of the syllable edge ramp.
fn ramp_ms(rng: &mut ChaCha8Rng, slurred: bool, difficulty: f64) -> f64 {
    if slurred {
        CLEAR_RAMP_MS + (1.0 - difficulty) * rng.random_range(110.0..260.0)
    } else {
        CLEAR_RAMP_MS
    }
}

/// Centered moving average; turns a 0/1 gate into linear ramps of `width`.
fn box_smooth(xs: &[f64], width: usize) -> Vec<f64> {
    let width = width.max(1);
    let half = width / 2;
    let mut prefix = Vec::with_capacity(xs.len() + 1);
    prefix.push(0.0);
    for x in xs {
        prefix.push(prefix.last().unwrap() + x);
    }
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + width - half).min(xs.len());
            (prefix[hi] - prefix[lo]) / width as f64
        })
        .collect()
}

pub fn speech_clip(rng: &mut ChaCha8Rng, slurred: bool, difficulty: f64) -> AudioClip {
    let fs = f64::from(FRAME_RATE);
    let n = FRAME_LEN;
    let ms = |v: f64| (v * fs / 1000.0) as usize;

    let mut gate = vec![0.0; n];
    let mut t = ms(rng.random_range(30.0..120.0));
    while t < n {
        let on = ms(rng.random_range(120.0..250.0));
        gate[t..(t + on).min(n)].iter_mut().for_each(|g| *g = 1.0);
        t += on + ms(rng.random_range(60.0..150.0));
    }
    let envelope = box_smooth(&gate, ms(ramp_ms(rng, slurred, difficulty)));

    let f0 = rng.random_range(100.0..220.0);
    let weights: Vec<f64> = (1..=HARMONICS).map(|k| rng.random_range(0.6..1.0) / k as f64).collect();
    let drift = if slurred {
        0.04 * (1.0 - 0.5 * difficulty)
    } else {
        0.005
    };
    let drift_hz = rng.random_range(0.5..2.0);
    let drift_phase = rng.random_range(0.0..2.0 * PI);
    let formant_hz = rng.random_range(0.3..1.2);
    let formant_depth = if slurred { 0.5 } else { 0.1 };
    let noise = 0.02 + 0.1 * difficulty;

    let mut phase = 0.0;
    let mut samples = Vec::with_capacity(n);
    for (i, env) in envelope.iter().enumerate() {
        let time = i as f64 / fs;
        let pitch = f0 * (1.0 + drift * (2.0 * PI * drift_hz * time + drift_phase).sin());
        phase += 2.0 * PI * pitch / fs;
        let tilt = formant_depth * (2.0 * PI * formant_hz * time).sin();
        let mut v = 0.0;
        for (k, w) in weights.iter().enumerate() {
            let shaped = w * (1.0 + tilt * (k as f64 / HARMONICS as f64 - 0.5));
            v += shaped * ((k + 1) as f64 * phase).sin();
        }
        samples.push(env * v);
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    let samples = samples
        .iter()
        .map(|v| 0.8 * v / peak + gauss(rng, 0.0, noise))
        .collect();
    AudioClip::new(FRAME_RATE, samples).expect("non-empty clip")
}

/// Largest frame-to-frame rise or fall of the 20 ms RMS envelope, relative to
/// the envelope's peak. Short ramps give large steps.
pub fn envelope_sharpness(clip: &AudioClip) -> f64 {
    let frame = (clip.sample_rate / 50) as usize;
    let env: Vec<f64> = clip.samples.chunks_exact(frame).map(crate::audio::rms).collect();
    let peak = env.iter().cloned().fold(0.0, f64::max).max(1e-12);
    env.windows(2).map(|w| (w[1] - w[0]).abs() / peak).fold(0.0, f64::max)
}
