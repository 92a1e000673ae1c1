//! Tier-3 late fusion: a non-negative linear SVM over the four per-modality
//! confidences, yielding a percent risk.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::svm::{svm_train_calibrated, SvmError, SvmModel, SvmTrainConfig};
use crate::Confidence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Vocal,
    Vascular,
    Retina,
    Face,
}

impl Modality {
    /// Coordinate order of the fusion feature vector.
    pub const ORDER: [Modality; 4] = [Modality::Vocal, Modality::Vascular, Modality::Retina, Modality::Face];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Vocal => "vocal",
            Modality::Vascular => "vascular",
            Modality::Retina => "retina",
            Modality::Face => "face",
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FusionError {
    #[error("no modality confidences present")]
    NoModalities,
    #[error("vascular confidence is required")]
    MissingVascular,
    #[error("training row {0} lacks a modality")]
    IncompleteRow(usize),
    #[error("fusion model expects 4 inputs, has {0}")]
    WrongDimension(usize),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionInput {
    pub vocal: Option<Confidence>,
    pub vascular: Option<Confidence>,
    pub retina: Option<Confidence>,
    pub face: Option<Confidence>,
}

impl FusionInput {
    pub fn complete(vocal: f64, vascular: f64, retina: f64, face: f64) -> Self {
        let c = |v| Some(Confidence::clamped(v));
        Self {
            vocal: c(vocal),
            vascular: c(vascular),
            retina: c(retina),
            face: c(face),
        }
    }

    pub fn get(&self, m: Modality) -> Option<Confidence> {
        match m {
            Modality::Vocal => self.vocal,
            Modality::Vascular => self.vascular,
            Modality::Retina => self.retina,
            Modality::Face => self.face,
        }
    }

    pub fn set(&mut self, m: Modality, c: Option<Confidence>) {
        match m {
            Modality::Vocal => self.vocal = c,
            Modality::Vascular => self.vascular = c,
            Modality::Retina => self.retina = c,
            Modality::Face => self.face = c,
        }
    }

    fn values(&self) -> [Option<f64>; 4] {
        Modality::ORDER.map(|m| self.get(m).map(Confidence::value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub at_risk: bool,
    pub risk_percent: f64,
    /// `w_i · standardized(x_i)` in [`Modality::ORDER`]; imputed entries are 0.
    pub contributions: Vec<f64>,
    /// Modalities that were absent and imputed at the training mean.
    pub imputed: Vec<Modality>,
    pub model_version: String,
}

/// Short content hash identifying a fusion model.
pub fn model_version(svm: &SvmModel) -> String {
    let digest = Sha256::digest(svm.to_file().to_bytes());
    hex::encode(&digest[..8])
}

pub fn fuse(svm: &SvmModel, input: &FusionInput) -> Result<Diagnosis, FusionError> {
    if svm.dim() != 4 {
        return Err(FusionError::WrongDimension(svm.dim()));
    }
    let values = input.values();
    if values.iter().all(Option::is_none) {
        return Err(FusionError::NoModalities);
    }
    if input.vascular.is_none() {
        return Err(FusionError::MissingVascular);
    }
    let mut imputed = Vec::new();
    let x: Vec<f64> = values
        .iter()
        .zip(Modality::ORDER)
        .zip(&svm.feature_means)
        .map(|((v, m), mean)| {
            v.unwrap_or_else(|| {
                imputed.push(m);
                *mean
            })
        })
        .collect();
    let risk_percent = 100.0 * svm.probability(&x)?;
    Ok(Diagnosis {
        at_risk: risk_percent >= 50.0,
        risk_percent,
        contributions: svm.contributions(&x)?,
        imputed,
        model_version: model_version(svm),
    })
}

/// Trains with non-negative weights (forced on) and calibrates on the
/// training margins. Every row must carry all four confidences.
pub fn fusion_train(rows: &[(FusionInput, bool)], cfg: &SvmTrainConfig) -> Result<SvmModel, FusionError> {
    let points = rows
        .iter()
        .enumerate()
        .map(|(i, (input, label))| {
            let v = input.values();
            if v.iter().any(Option::is_none) {
                return Err(FusionError::IncompleteRow(i));
            }
            Ok((v.map(|v| v.unwrap_or_default()).to_vec(), if *label { 1 } else { -1 }))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = SvmTrainConfig {
        nonnegative_weights: true,
        ..*cfg
    };
    Ok(svm_train_calibrated(&points, &cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_rows() -> Vec<(FusionInput, bool)> {
        let mut rows = Vec::new();
        for i in 0..20 {
            let t = i as f64 / 19.0;
            rows.push((FusionInput::complete(0.1 * t, 0.2 * t, 0.5, 0.15 * t), false));
            rows.push((
                FusionInput::complete(0.7 + 0.3 * t, 0.6 + 0.3 * t, 0.5, 0.9 - 0.2 * t),
                true,
            ));
        }
        rows
    }

    #[test]
    fn extremes_and_consistency() {
        let svm = fusion_train(&toy_rows(), &SvmTrainConfig::default()).unwrap();
        assert!(svm.weights.iter().all(|&w| w >= 0.0));
        let lo = fuse(&svm, &FusionInput::complete(0.0, 0.0, 0.0, 0.0)).unwrap();
        let hi = fuse(&svm, &FusionInput::complete(1.0, 1.0, 1.0, 1.0)).unwrap();
        assert!(!lo.at_risk && lo.risk_percent < 50.0);
        assert!(hi.at_risk && hi.risk_percent > 50.0);
        // the retina column is constant in training, so it cannot discriminate
        assert_eq!(hi.contributions[2], 0.0);
        assert_eq!(hi.model_version, lo.model_version);
        assert_eq!(hi.model_version.len(), 16);
    }

    #[test]
    fn missing_modality_is_imputed_neutrally() {
        let svm = fusion_train(&toy_rows(), &SvmTrainConfig::default()).unwrap();
        let mut input = FusionInput::complete(0.9, 0.8, 0.7, 0.9);
        input.retina = None;
        input.vocal = None;
        let d = fuse(&svm, &input).unwrap();
        assert_eq!(d.imputed, vec![Modality::Vocal, Modality::Retina]);
        assert_eq!(d.contributions[0], 0.0);
        assert_eq!(d.contributions[2], 0.0);
    }

    #[test]
    fn errors() {
        let svm = fusion_train(&toy_rows(), &SvmTrainConfig::default()).unwrap();
        assert_eq!(fuse(&svm, &FusionInput::default()), Err(FusionError::NoModalities));
        let mut input = FusionInput::complete(0.5, 0.5, 0.5, 0.5);
        input.vascular = None;
        assert_eq!(fuse(&svm, &input), Err(FusionError::MissingVascular));
        let mut rows = toy_rows();
        rows[3].0.face = None;
        assert_eq!(
            fusion_train(&rows, &SvmTrainConfig::default()),
            Err(FusionError::IncompleteRow(3))
        );
        let one_class: Vec<_> = toy_rows().into_iter().filter(|r| r.1).collect();
        assert!(matches!(
            fusion_train(&one_class, &SvmTrainConfig::default()),
            Err(FusionError::Svm(_))
        ));
    }

    #[test]
    fn diagnosis_serializes_with_snake_case_modalities() {
        let svm = fusion_train(&toy_rows(), &SvmTrainConfig::default()).unwrap();
        let mut input = FusionInput::complete(0.9, 0.8, 0.7, 0.9);
        input.retina = None;
        let json = serde_json::to_value(fuse(&svm, &input).unwrap()).unwrap();
        assert_eq!(json["imputed"], serde_json::json!(["retina"]));
        assert_eq!(json["contributions"].as_array().unwrap().len(), 4);
    }
}
