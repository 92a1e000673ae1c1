//! Training recipes, model files, and scoring for every modality.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{decode_wav, AudioClip, AudioError};
use crate::face::{face_features, paralysis_confidence, parse_landmarks, FaceError, LandmarkSet};
use crate::fusion::{fuse, fusion_train, FusionError, FusionInput};
use crate::image::{decode_image, Image, ImageError};
use crate::metrics::{evaluate_classifier, ConfusionMatrix, MetricsError};
use crate::nn::{train, Model, NnError, TrainConfig, TrainReport};
use crate::retina::{retina_confidence, RetinaArch, RetinaError};
use crate::ssmd::{ModelFile, SsmdError};
use crate::svm::{svm_train_calibrated, SvmError, SvmModel, SvmTrainConfig};
use crate::synth::{self, CorpusError, CorpusSpec, Kind};
use crate::vitals::{vascular_confidence, VitalsError, VitalsSample};
use crate::vocal::{vocal_confidence, vocal_input, VocalArch, VocalError};
use crate::Confidence;

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("{kind} model: {source}")]
    File { kind: Kind, source: SsmdError },
    #[error("{0} model file does not hold a network")]
    NotNetwork(Kind),
    #[error("vascular stream {0} is empty")]
    EmptyStream(usize),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Vocal(#[from] VocalError),
    #[error(transparent)]
    Retina(#[from] RetinaError),
    #[error(transparent)]
    Face(#[from] FaceError),
    #[error(transparent)]
    Vitals(#[from] VitalsError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T, E = DetectError> = std::result::Result<T, E>;

/// Hyperparameters for one modality. Networks use `net`; SVMs use `svm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub net: TrainConfig,
    pub svm: SvmTrainConfig,
    /// Seed for network weight initialization.
    pub init_seed: u64,
}

impl Recipe {
    pub fn for_kind(kind: Kind) -> Self {
        let net = match kind {
            Kind::Vocal => TrainConfig {
                learning_rate: 0.02,
                epochs: 30,
                batch_size: 4,
                seed: 11,
                clip_norm: Some(1.0),
                cosine_decay: true,
            },
            Kind::Retina => TrainConfig {
                learning_rate: 0.06,
                epochs: 30,
                batch_size: 4,
                seed: 11,
                clip_norm: Some(1.0),
                cosine_decay: true,
            },
            _ => TrainConfig::default(),
        };
        Self {
            net,
            svm: SvmTrainConfig {
                seed: 7,
                nonnegative_weights: matches!(kind, Kind::Vascular | Kind::Fusion),
                ..Default::default()
            },
            init_seed: 3,
        }
    }
}

/// A trained model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Trained {
    Network(Model),
    Svm(SvmModel),
}

impl Trained {
    pub fn to_file(&self) -> ModelFile {
        match self {
            Trained::Network(m) => m.to_file(),
            Trained::Svm(s) => s.to_file(),
        }
    }

    pub fn save(&self, kind: Kind, path: &Path) -> Result<()> {
        self.to_file()
            .write(path)
            .map_err(|source| DetectError::File { kind, source })
    }

    pub fn load(kind: Kind, path: &Path) -> Result<Self> {
        let file = ModelFile::read(path).map_err(|source| DetectError::File { kind, source })?;
        Self::from_file(kind, &file)
    }

    pub fn from_file(kind: Kind, file: &ModelFile) -> Result<Self> {
        Ok(match kind {
            Kind::Vocal | Kind::Retina => Trained::Network(Model::from_file(file)?),
            _ => Trained::Svm(SvmModel::from_file(file)?),
        })
    }
}

/// Conventional file name inside a models directory.
pub fn model_path(dir: &Path, kind: Kind) -> PathBuf {
    dir.join(format!("{}.ssmd", kind.name()))
}

fn label_index(positive: bool) -> usize {
    positive as usize
}

pub fn train_vocal(items: &[(AudioClip, bool)], recipe: &Recipe) -> Result<(Model, TrainReport)> {
    let arch = VocalArch::default();
    let data = items
        .iter()
        .map(|(clip, y)| Ok((vocal_input(clip, arch.input_len)?, label_index(*y))))
        .collect::<Result<Vec<_>>>()?;
    let mut model = arch.build(recipe.init_seed)?;
    let report = train(&mut model, &data, &recipe.net)?;
    Ok((model, report))
}

pub fn train_retina(items: &[(Image, bool)], recipe: &Recipe) -> Result<(Model, TrainReport)> {
    let arch = RetinaArch::default();
    let data = items
        .iter()
        .map(|(img, y)| Ok((crate::image::preprocess(img)?, label_index(*y))))
        .collect::<Result<Vec<_>>>()?;
    let mut model = arch.build(recipe.init_seed)?;
    let report = train(&mut model, &data, &recipe.net)?;
    Ok((model, report))
}

fn sign(positive: bool) -> i8 {
    if positive {
        1
    } else {
        -1
    }
}

pub fn train_face(items: &[(LandmarkSet, bool)], recipe: &Recipe) -> Result<SvmModel> {
    let points = items
        .iter()
        .map(|(lm, y)| Ok((face_features(lm)?.to_vector(), sign(*y))))
        .collect::<Result<Vec<_>>>()?;
    Ok(svm_train_calibrated(&points, &recipe.svm)?)
}

/// The data point of a stream is its latest sample.
pub fn stream_point(stream: &[VitalsSample], index: usize) -> Result<&VitalsSample> {
    stream.last().ok_or(DetectError::EmptyStream(index))
}

/// Trains on the final sample of each stream, with non-negative weights.
pub fn train_vascular(streams: &[(Vec<VitalsSample>, bool)], recipe: &Recipe) -> Result<SvmModel> {
    let points = streams
        .iter()
        .enumerate()
        .map(|(i, (s, y))| Ok((stream_point(s, i)?.features(), sign(*y))))
        .collect::<Result<Vec<_>>>()?;
    let cfg = SvmTrainConfig {
        nonnegative_weights: true,
        ..recipe.svm
    };
    Ok(svm_train_calibrated(&points, &cfg)?)
}

/// Reads the corpus for `kind` under `dir` and trains its model.
pub fn train_from_corpus(kind: Kind, dir: &Path, recipe: &Recipe) -> Result<Trained> {
    Ok(match kind {
        Kind::Vocal => Trained::Network(train_vocal(&synth::read_vocal(dir)?, recipe)?.0),
        Kind::Retina => Trained::Network(train_retina(&synth::read_retina(dir)?, recipe)?.0),
        Kind::Face => Trained::Svm(train_face(&synth::read_face(dir)?, recipe)?),
        Kind::Vascular => Trained::Svm(train_vascular(&synth::read_vascular(dir)?, recipe)?),
        Kind::Fusion => Trained::Svm(fusion_train(&synth::read_fusion(dir)?, &recipe.svm)?),
    })
}

fn network(kind: Kind, model: &Trained) -> Result<&Model> {
    match model {
        Trained::Network(m) => Ok(m),
        Trained::Svm(_) => Err(DetectError::NotNetwork(kind)),
    }
}

fn svm(model: &Trained) -> Result<&SvmModel> {
    match model {
        Trained::Svm(s) => Ok(s),
        Trained::Network(_) => Err(DetectError::Svm(SvmError::BadRecord("w"))),
    }
}

/// Positive-class probability and label for every corpus item.
pub fn score_corpus(kind: Kind, model: &Trained, dir: &Path) -> Result<Vec<(f64, bool)>> {
    let scored: Vec<(Confidence, bool)> = match kind {
        Kind::Vocal => {
            let m = network(kind, model)?;
            synth::read_vocal(dir)?
                .iter()
                .map(|(c, y)| Ok((vocal_confidence(m, c)?, *y)))
                .collect::<Result<_>>()?
        }
        Kind::Retina => {
            let m = network(kind, model)?;
            synth::read_retina(dir)?
                .iter()
                .map(|(img, y)| Ok((retina_confidence(m, img)?, *y)))
                .collect::<Result<_>>()?
        }
        Kind::Face => {
            let s = svm(model)?;
            synth::read_face(dir)?
                .iter()
                .map(|(lm, y)| Ok((paralysis_confidence(s, lm)?, *y)))
                .collect::<Result<_>>()?
        }
        Kind::Vascular => {
            let s = svm(model)?;
            synth::read_vascular(dir)?
                .iter()
                .enumerate()
                .map(|(i, (st, y))| Ok((vascular_confidence(s, stream_point(st, i)?)?, *y)))
                .collect::<Result<_>>()?
        }
        Kind::Fusion => {
            let s = svm(model)?;
            synth::read_fusion(dir)?
                .iter()
                .map(|(row, y)| {
                    let d = fuse(s, row)?;
                    Ok((Confidence::clamped(d.risk_percent / 100.0), *y))
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(scored.into_iter().map(|(c, y)| (c.value(), y)).collect())
}

/// Confusion matrix at the 0.5 decision threshold.
pub fn confusion(scores: &[(f64, bool)]) -> Result<ConfusionMatrix> {
    let predictions: Vec<bool> = scores.iter().map(|(p, _)| *p >= 0.5).collect();
    let labels: Vec<bool> = scores.iter().map(|(_, y)| *y).collect();
    Ok(evaluate_classifier(&predictions, &labels)?)
}

/// Every trained model the service needs.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub vocal: Model,
    pub retina: Model,
    pub face: SvmModel,
    pub vascular: SvmModel,
    pub fusion: SvmModel,
}

impl ModelSet {
    /// Loads `<kind>.ssmd` for all five kinds from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let net = |kind| match Trained::load(kind, &model_path(dir, kind))? {
            Trained::Network(m) => Ok(m),
            Trained::Svm(_) => Err(DetectError::NotNetwork(kind)),
        };
        let lin = |kind| match Trained::load(kind, &model_path(dir, kind))? {
            Trained::Svm(s) => Ok(s),
            Trained::Network(_) => Err(DetectError::Svm(SvmError::BadRecord("w"))),
        };
        Ok(Self {
            vocal: net(Kind::Vocal)?,
            retina: net(Kind::Retina)?,
            face: lin(Kind::Face)?,
            vascular: lin(Kind::Vascular)?,
            fusion: lin(Kind::Fusion)?,
        })
    }

    /// Writes `<kind>.ssmd` for all five kinds into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let io = |source| DetectError::File {
            kind: Kind::Fusion,
            source: SsmdError::Io(source),
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let items = [
            (Kind::Vocal, Trained::Network(self.vocal.clone())),
            (Kind::Retina, Trained::Network(self.retina.clone())),
            (Kind::Face, Trained::Svm(self.face.clone())),
            (Kind::Vascular, Trained::Svm(self.vascular.clone())),
            (Kind::Fusion, Trained::Svm(self.fusion.clone())),
        ];
        for (kind, model) in items {
            model.save(kind, &model_path(dir, kind))?;
        }
        Ok(())
    }

    /// Fast models for exercising plumbing: SVMs fitted on small synthetic
    /// corpora, networks freshly initialized and untrained.
    pub fn smoke(seed: u64) -> Result<Self> {
        let spec = |kind| CorpusSpec::new(kind, 20, 0.3, seed).expect("valid spec");
        let recipe = |kind| Recipe::for_kind(kind);
        Ok(Self {
            vocal: VocalArch::default().build(seed)?,
            retina: RetinaArch::default().build(seed)?,
            face: train_face(&synth::gen_face(&spec(Kind::Face)), &recipe(Kind::Face))?,
            vascular: train_vascular(&synth::gen_vitals(&spec(Kind::Vascular)), &recipe(Kind::Vascular))?,
            fusion: fusion_train(&synth::gen_fusion(&spec(Kind::Fusion)), &recipe(Kind::Fusion).svm)?,
        })
    }

    pub fn voice_from_wav(&self, bytes: &[u8]) -> Result<Confidence> {
        Ok(vocal_confidence(&self.vocal, &decode_wav(bytes)?)?)
    }

    pub fn retina_from_image(&self, bytes: &[u8]) -> Result<Confidence> {
        Ok(retina_confidence(&self.retina, &decode_image(bytes)?)?)
    }

    pub fn face_from_pts(&self, bytes: &[u8]) -> Result<Confidence> {
        Ok(paralysis_confidence(&self.face, &parse_landmarks(bytes)?)?)
    }

    pub fn vascular(&self, sample: &VitalsSample) -> Result<Confidence> {
        Ok(vascular_confidence(&self.vascular, sample)?)
    }

    pub fn fuse(&self, input: &FusionInput) -> Result<crate::fusion::Diagnosis> {
        Ok(fuse(&self.fusion, input)?)
    }
}
