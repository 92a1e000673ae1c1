//! Seeded generators for labeled corpora in every modality.
//!
//! Each item draws from its own ChaCha stream keyed by (class, index), so a
//! corpus is a pure function of its [`CorpusSpec`] and items do not depend
//! on how many siblings were generated.

mod corpus;
mod fundus;
mod speech;

pub use corpus::{
    read_face, read_fusion, read_retina, read_vascular, read_vocal, resolve_manifest, write_corpus, CorpusError,
    Manifest, ManifestItem,
};
pub use fundus::{bright_blob_count, fundus_image};
pub use speech::{envelope_sharpness, speech_clip};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::face::{mean_shape, LandmarkSet};
use crate::fusion::FusionInput;
use crate::image::Image;
use crate::vitals::VitalsSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Vocal,
    Retina,
    Face,
    Vascular,
    Fusion,
}

impl Kind {
    pub const ALL: [Kind; 5] = [Kind::Vocal, Kind::Retina, Kind::Face, Kind::Vascular, Kind::Fusion];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Vocal => "vocal",
            Kind::Retina => "retina",
            Kind::Face => "face",
            Kind::Vascular => "vascular",
            Kind::Fusion => "fusion",
        }
    }

    /// Class directory names, negative first.
    pub fn classes(self) -> [&'static str; 2] {
        match self {
            Kind::Vocal => ["clear", "slurred"],
            Kind::Retina => ["normal", "retinopathy"],
            Kind::Face => ["normal", "paralysis"],
            Kind::Vascular => ["normal", "stroke_risk"],
            Kind::Fusion => ["negative", "positive"],
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Kind::Vocal => "wav",
            Kind::Retina => "pgm",
            Kind::Face => "pts",
            Kind::Vascular => "csv",
            Kind::Fusion => "json",
        }
    }

    /// Default (train, validation) item counts across both classes.
    pub fn default_split(self) -> (usize, usize) {
        match self {
            Kind::Vocal => (100, 50),
            Kind::Retina => (150, 50),
            Kind::Face => (150, 50),
            Kind::Vascular => (400, 300),
            Kind::Fusion => (300, 200),
        }
    }
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpecError {
    #[error("n_per_class must be at least 1")]
    EmptyClass,
    #[error("difficulty {0} is outside [0, 1]")]
    BadDifficulty(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub kind: Kind,
    pub n_per_class: usize,
    /// Class overlap: 0 is cleanly separable, 1 nearly indistinguishable.
    pub difficulty: f64,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn new(kind: Kind, n_per_class: usize, difficulty: f64, seed: u64) -> Result<Self, SpecError> {
        if n_per_class == 0 {
            return Err(SpecError::EmptyClass);
        }
        if !(0.0..=1.0).contains(&difficulty) {
            return Err(SpecError::BadDifficulty(difficulty));
        }
        Ok(Self {
            kind,
            n_per_class,
            difficulty,
            seed,
        })
    }

    /// RNG for one item. Streams never collide across (class, index).
    pub fn item_rng(&self, positive: bool, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((positive as u64) << 40) | index as u64);
        rng
    }

    fn generate<T>(&self, mut make: impl FnMut(&mut ChaCha8Rng, bool) -> T) -> Vec<(T, bool)> {
        let mut out = Vec::with_capacity(2 * self.n_per_class);
        for positive in [false, true] {
            for i in 0..self.n_per_class {
                let mut rng = self.item_rng(positive, i);
                out.push((make(&mut rng, positive), positive));
            }
        }
        out
    }
}

pub(crate) fn gauss(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("finite sd").sample(rng)
}

/// Clear (negative) and slurred (positive) speech clips.
pub fn gen_vocal(spec: &CorpusSpec) -> Vec<(AudioClip, bool)> {
    spec.generate(|rng, slurred| speech_clip(rng, slurred, spec.difficulty))
}

/// Normal (negative) and retinopathy (positive) 128×128 fundus images.
pub fn gen_retina(spec: &CorpusSpec) -> Vec<(Image, bool)> {
    spec.generate(|rng, sick| fundus_image(rng, sick, spec.difficulty))
}

/// Cheek and mouth-corner landmarks on the drooping side.
pub fn droop_indices(left: bool) -> [usize; 9] {
    if left {
        [1, 2, 3, 4, 5, 6, 48, 59, 60]
    } else {
        [10, 11, 12, 13, 14, 15, 54, 55, 64]
    }
}

/// Moves one side's cheek and mouth corner down by `delta` normalized units.
pub fn droop(lm: &LandmarkSet, left: bool, delta: f64) -> LandmarkSet {
    let mut pts = lm.points().to_vec();
    for i in droop_indices(left) {
        pts[i][1] += delta;
    }
    LandmarkSet::new(pts).expect("68 points")
}

/// Droop used for the paralysis class at a given difficulty.
pub fn droop_delta(difficulty: f64) -> f64 {
    0.3 - 0.25 * difficulty
}

/// Per-coordinate jitter applied to every synthetic face.
pub fn face_jitter(difficulty: f64) -> f64 {
    0.01 + 0.02 * difficulty
}

/// One face in normalized units (before the random similarity transform).
pub fn normalized_face(rng: &mut ChaCha8Rng, paralysis: bool, difficulty: f64) -> LandmarkSet {
    let sd = face_jitter(difficulty);
    let pts = mean_shape()
        .points()
        .iter()
        .map(|[x, y]| [x + gauss(rng, 0.0, sd), y + gauss(rng, 0.0, sd)])
        .collect();
    let lm = LandmarkSet::new(pts).expect("68 points");
    let left = rng.random::<bool>();
    if paralysis {
        droop(&lm, left, droop_delta(difficulty))
    } else {
        lm
    }
}

/// Normal (negative) and paralysis (positive) landmark sets in pixel units.
pub fn gen_face(spec: &CorpusSpec) -> Vec<(LandmarkSet, bool)> {
    spec.generate(|rng, paralysis| {
        let lm = normalized_face(rng, paralysis, spec.difficulty);
        let scale = rng.random_range(80.0..200.0);
        let offset = [rng.random_range(150.0..350.0), rng.random_range(150.0..350.0)];
        lm.transformed(scale, offset)
    })
}

pub const NORMAL_VITALS: [f64; 4] = [118.0, 76.0, 72.0, 98.0];
pub const RISK_VITALS: [f64; 4] = [185.0, 105.0, 110.0, 90.0];
const VITALS_SD: [f64; 4] = [8.0, 6.0, 6.0, 1.0];
pub const STREAM_LEN: usize = 24;
pub const STREAM_T0_MS: i64 = 1_700_000_000_000;

/// Means of the stroke-risk class once its onset ramp completes.
pub fn risk_means(difficulty: f64) -> [f64; 4] {
    let k = 1.0 - 0.6 * difficulty;
    std::array::from_fn(|i| NORMAL_VITALS[i] + k * (RISK_VITALS[i] - NORMAL_VITALS[i]))
}

fn vital_sample(rng: &mut ChaCha8Rng, t: i64, means: [f64; 4], spread: f64) -> VitalsSample {
    let v: [f64; 4] = std::array::from_fn(|i| gauss(rng, means[i], VITALS_SD[i] * spread));
    let round = |x: f64| (x * 10.0).round() / 10.0;
    let systolic = round(v[0].clamp(60.0, 290.0));
    VitalsSample {
        timestamp_ms: t,
        systolic,
        diastolic: round(v[1].clamp(30.0, systolic - 10.0)),
        heart_rate: round(v[2].clamp(30.0, 240.0)),
        spo2: round(v[3].clamp(60.0, 100.0)),
    }
}

/// A stream of `len` one-second samples. Risk streams switch on at a random
/// onset and ramp to the risk means over three samples.
pub fn vitals_stream(rng: &mut ChaCha8Rng, risk: bool, difficulty: f64, len: usize) -> Vec<VitalsSample> {
    let spread = 1.0 + difficulty;
    let target = risk_means(difficulty);
    let onset = rng.random_range(len / 6..=len / 2);
    (0..len)
        .map(|i| {
            let w = if risk && i >= onset {
                ((i - onset + 1) as f64 / 3.0).min(1.0)
            } else {
                0.0
            };
            let means = std::array::from_fn(|k| NORMAL_VITALS[k] + w * (target[k] - NORMAL_VITALS[k]));
            vital_sample(rng, STREAM_T0_MS + 1000 * i as i64, means, spread)
        })
        .collect()
}

/// Normal (negative) and stroke-risk (positive) vitals streams.
pub fn gen_vitals(spec: &CorpusSpec) -> Vec<(Vec<VitalsSample>, bool)> {
    spec.generate(|rng, risk| vitals_stream(rng, risk, spec.difficulty, STREAM_LEN))
}

/// One confidence: `0.48·Beta` inside the class's own half, replaced by a
/// uniform draw with probability `difficulty / 2`. A replaced value lands on
/// the wrong side half the time, so a single confidence is right with
/// probability `1 − difficulty / 4`, in line with the detectors it stands for.
fn fusion_value(rng: &mut ChaCha8Rng, positive: bool, difficulty: f64) -> f64 {
    if rng.random::<f64>() < difficulty / 2.0 {
        return rng.random::<f64>();
    }
    let b = Beta::new(2.0, 5.0).expect("valid beta").sample(rng);
    if positive {
        1.0 - 0.48 * b
    } else {
        0.48 * b
    }
}

/// Negative and positive fusion rows with all four confidences present.
pub fn gen_fusion(spec: &CorpusSpec) -> Vec<(FusionInput, bool)> {
    spec.generate(|rng, positive| {
        let v: [f64; 4] = std::array::from_fn(|_| fusion_value(rng, positive, spec.difficulty));
        FusionInput::complete(v[0], v[1], v[2], v[3])
    })
}
