//! Tiered multimodal stroke-screening engine.
//!
//! Tier 1 watches a vitals stream against fixed thresholds. Once it alerts,
//! tier 2 scores a voice recording and a facial landmark set, tier 3 scores a
//! retinal image, and a non-negative linear SVM fuses the four per-modality
//! confidences into a percent risk.

pub mod audio;
pub mod detect;
pub mod face;
pub mod fusion;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod retina;
pub mod service;
pub mod ssmd;
pub mod svm;
pub mod synth;
pub mod tensor;
pub mod vitals;
pub mod vocal;

use serde::{Deserialize, Serialize};

/// Calibrated probability from one detector, always within [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Confidence(f64);

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("confidence {0} is outside [0, 1]")]
pub struct ConfidenceOutOfRange(pub f64);

impl Confidence {
    pub fn new(value: f64) -> Result<Self, ConfidenceOutOfRange> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(ConfidenceOutOfRange(value))
        }
    }

    /// Clamps into [0, 1]; NaN maps to 0.5.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            Self(0.5)
        } else {
            Self(value.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Confidence {
    type Error = ConfidenceOutOfRange;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Confidence> for f64 {
    fn from(c: Confidence) -> f64 {
        c.0
    }
}
