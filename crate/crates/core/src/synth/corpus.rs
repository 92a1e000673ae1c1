//! On-disk corpora: `ROOT/<kind>/<class>/<index>.<ext>` plus
//! `ROOT/<kind>/manifest.json` listing every item with its label.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{gen_face, gen_fusion, gen_retina, gen_vitals, gen_vocal, CorpusSpec, Kind};
use crate::audio::{decode_wav, encode_wav, AudioClip};
use crate::face::{parse_landmarks, LandmarkSet};
use crate::fusion::FusionInput;
use crate::image::{decode_image, encode_pgm, Image};
use crate::vitals::{read_vitals_csv, write_vitals_csv, VitalsSample};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no {kind} manifest under {dir}")]
    NoManifest { kind: Kind, dir: PathBuf },
    #[error("manifest {path} describes a {found} corpus, expected {expected}")]
    WrongKind { path: PathBuf, found: Kind, expected: Kind },
    #[error("{path}: {message}")]
    Item { path: PathBuf, message: String },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    /// Relative to the manifest's directory.
    pub path: String,
    pub class: String,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: Kind,
    pub n_per_class: usize,
    pub difficulty: f64,
    pub seed: u64,
    pub items: Vec<ManifestItem>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn item_err(path: &Path, e: impl std::fmt::Display) -> CorpusError {
    CorpusError::Item {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn encode_items<T>(kind: Kind, items: Vec<(T, bool)>, enc: impl Fn(&T) -> Vec<u8>) -> Vec<(ManifestItem, Vec<u8>)> {
    let mut counters = [0usize; 2];
    items
        .into_iter()
        .map(|(item, label)| {
            let class = kind.classes()[label as usize];
            let idx = counters[label as usize];
            counters[label as usize] += 1;
            let entry = ManifestItem {
                path: format!("{class}/{idx:04}.{}", kind.extension()),
                class: class.to_string(),
                label,
            };
            (entry, enc(&item))
        })
        .collect()
}

/// Generates the corpus described by `spec` under `root/<kind>/` and returns
/// its manifest.
pub fn write_corpus(root: &Path, spec: &CorpusSpec) -> Result<Manifest> {
    let kind = spec.kind;
    let files = match kind {
        Kind::Vocal => encode_items(kind, gen_vocal(spec), encode_wav),
        Kind::Retina => encode_items(kind, gen_retina(spec), encode_pgm),
        Kind::Face => encode_items(kind, gen_face(spec), |lm| lm.to_pts().into_bytes()),
        Kind::Vascular => encode_items(kind, gen_vitals(spec), |s| {
            let mut buf = Vec::new();
            write_vitals_csv(&mut buf, s).expect("in-memory csv");
            buf
        }),
        Kind::Fusion => encode_items(kind, gen_fusion(spec), |row| {
            serde_json::to_vec_pretty(row).expect("serializable row")
        }),
    };
    let dir = root.join(kind.name());
    for class in kind.classes() {
        let d = dir.join(class);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let mut items = Vec::with_capacity(files.len());
    for (entry, bytes) in files {
        let path = dir.join(&entry.path);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        items.push(entry);
    }
    let manifest = Manifest {
        kind,
        n_per_class: spec.n_per_class,
        difficulty: spec.difficulty,
        seed: spec.seed,
        items,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Finds the manifest for `kind` at `dir/manifest.json` or
/// `dir/<kind>/manifest.json`.
pub fn resolve_manifest(dir: &Path, kind: Kind) -> Result<(PathBuf, Manifest)> {
    for base in [dir.to_path_buf(), dir.join(kind.name())] {
        let path = base.join("manifest.json");
        if !path.is_file() {
            continue;
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let manifest: Manifest = serde_json::from_slice(&bytes)?;
        if manifest.kind != kind {
            if base == dir {
                continue;
            }
            return Err(CorpusError::WrongKind {
                path,
                found: manifest.kind,
                expected: kind,
            });
        }
        return Ok((base, manifest));
    }
    Err(CorpusError::NoManifest {
        kind,
        dir: dir.to_path_buf(),
    })
}

fn read_items<T, E: std::fmt::Display>(
    dir: &Path,
    kind: Kind,
    decode: impl Fn(&[u8]) -> std::result::Result<T, E>,
) -> Result<Vec<(T, bool)>> {
    let (base, manifest) = resolve_manifest(dir, kind)?;
    manifest
        .items
        .iter()
        .map(|item| {
            let path = base.join(&item.path);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let value = decode(&bytes).map_err(|e| item_err(&path, e))?;
            Ok((value, item.label))
        })
        .collect()
}

pub fn read_vocal(dir: &Path) -> Result<Vec<(AudioClip, bool)>> {
    read_items(dir, Kind::Vocal, decode_wav)
}

pub fn read_retina(dir: &Path) -> Result<Vec<(Image, bool)>> {
    read_items(dir, Kind::Retina, decode_image)
}

pub fn read_face(dir: &Path) -> Result<Vec<(LandmarkSet, bool)>> {
    read_items(dir, Kind::Face, parse_landmarks)
}

pub fn read_vascular(dir: &Path) -> Result<Vec<(Vec<VitalsSample>, bool)>> {
    read_items(dir, Kind::Vascular, |b: &[u8]| read_vitals_csv(b))
}

pub fn read_fusion(dir: &Path) -> Result<Vec<(FusionInput, bool)>> {
    read_items(dir, Kind::Fusion, |b: &[u8]| serde_json::from_slice::<FusionInput>(b))
}
