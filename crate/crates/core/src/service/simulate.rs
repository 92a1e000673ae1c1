//! A scripted patient: streams synthetic vitals to a running server and, once
//! it alerts, uploads voice, face and retina captures taken from a corpus.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::{CaptureOutcome, IngestOutcome};
use super::http::ErrorBody;
use super::session::{CaptureKind, SessionView, State};
use crate::fusion::Diagnosis;
use crate::synth::{resolve_manifest, vitals_stream, CorpusError, Kind};
use crate::vitals::Alert;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Normal,
    Stroke,
}

#[derive(Debug, thiserror::Error)]
pub enum SimulateError {
    #[error("rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("request to {url} failed: {source}")]
    Http { url: String, source: reqwest::Error },
    #[error("{url} answered {status}: {message}")]
    Status { url: String, status: u16, message: String },
    #[error("no {class} item #{index} in the {kind} corpus under {dir}")]
    NoCapture {
        kind: Kind,
        class: &'static str,
        index: usize,
        dir: PathBuf,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

type Result<T, E = SimulateError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub scenario: Scenario,
    /// Vitals samples per second.
    pub rate_hz: f64,
    /// Server base URL, e.g. `http://127.0.0.1:8080`.
    pub target: String,
    /// Corpus root (as written by `gen`) to draw captures from.
    pub captures: Option<PathBuf>,
    /// Which item of the matching class to upload.
    pub capture_index: usize,
    pub samples: usize,
    pub seed: u64,
}

impl SimulateConfig {
    pub fn new(scenario: Scenario, target: impl Into<String>) -> Self {
        Self {
            scenario,
            rate_hz: 1.0,
            target: target.into(),
            captures: None,
            capture_index: 0,
            samples: 60,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutcome {
    pub session_id: String,
    pub samples_sent: usize,
    pub alert: Option<Alert>,
    pub captures: Vec<CaptureOutcome>,
    pub final_state: State,
    pub diagnosis: Option<Diagnosis>,
}

struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    async fn send<T: serde::de::DeserializeOwned>(&self, req: reqwest::RequestBuilder, url: String) -> Result<T> {
        let http_err = |source| SimulateError::Http {
            url: url.clone(),
            source,
        };
        let resp = req.send().await.map_err(http_err)?;
        let status = resp.status();
        if !status.is_success() {
            let message = match resp.json::<ErrorBody>().await {
                Ok(b) => b.message,
                Err(e) => e.to_string(),
            };
            return Err(SimulateError::Status {
                url,
                status: status.as_u16(),
                message,
            });
        }
        resp.json().await.map_err(http_err)
    }

    async fn post<T: serde::de::DeserializeOwned>(&self, path: &str, body: Option<(Vec<u8>, &str)>) -> Result<T> {
        let url = format!("{}{path}", self.base);
        let mut req = self.http.post(&url);
        if let Some((bytes, ctype)) = body {
            req = req.header(reqwest::header::CONTENT_TYPE, ctype).body(bytes);
        }
        self.send(req, url).await
    }

    async fn get<T: serde::de::DeserializeOwned>(&self, path: &str) -> Result<T> {
        let url = format!("{}{path}", self.base);
        self.send(self.http.get(&url), url).await
    }
}

fn capture_kind(kind: CaptureKind) -> Kind {
    match kind {
        CaptureKind::Voice => Kind::Vocal,
        CaptureKind::Face => Kind::Face,
        CaptureKind::Retina => Kind::Retina,
    }
}

/// Bytes of the `index`-th corpus item of the requested class.
pub fn pick_capture(root: &Path, kind: CaptureKind, positive: bool, index: usize) -> Result<Vec<u8>> {
    let corpus = capture_kind(kind);
    let (base, manifest) = resolve_manifest(root, corpus)?;
    let item = manifest
        .items
        .iter()
        .filter(|i| i.label == positive)
        .nth(index)
        .ok_or(SimulateError::NoCapture {
            kind: corpus,
            class: corpus.classes()[positive as usize],
            index,
            dir: root.to_path_buf(),
        })?;
    let path = base.join(&item.path);
    std::fs::read(&path).map_err(|source| SimulateError::Io { path, source })
}

/// Runs one scripted session against `cfg.target`.
pub async fn simulate(cfg: &SimulateConfig) -> Result<SimulationOutcome> {
    if !(cfg.rate_hz > 0.0 && cfg.rate_hz.is_finite()) {
        return Err(SimulateError::BadRate(cfg.rate_hz));
    }
    let client = Client {
        http: reqwest::Client::new(),
        base: cfg.target.trim_end_matches('/').to_string(),
    };
    let session: SessionView = client.post("/v1/sessions", None).await?;
    let id = session.session_id;
    let stroke = cfg.scenario == Scenario::Stroke;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stream = vitals_stream(&mut rng, stroke, 0.0, cfg.samples);
    let period = Duration::from_secs_f64(1.0 / cfg.rate_hz);

    let mut sent = 0;
    let mut state = State::Monitoring;
    for sample in &stream {
        let body = serde_json::to_vec(sample).expect("serializable sample");
        let out: IngestOutcome = client
            .post(&format!("/v1/sessions/{id}/vitals"), Some((body, "application/json")))
            .await?;
        sent += 1;
        state = out.state;
        if state != State::Monitoring {
            break;
        }
        tokio::time::sleep(period).await;
    }

    let mut captures = Vec::new();
    if state == State::Alert {
        if let Some(root) = &cfg.captures {
            for kind in CaptureKind::ALL {
                let bytes = pick_capture(root, kind, stroke, cfg.capture_index)?;
                let ctype = match kind {
                    CaptureKind::Voice => "audio/wav",
                    CaptureKind::Face => "text/plain",
                    CaptureKind::Retina => "image/x-portable-graymap",
                };
                let out: CaptureOutcome = client
                    .post(
                        &format!("/v1/sessions/{id}/capture/{}", kind.name()),
                        Some((bytes, ctype)),
                    )
                    .await?;
                captures.push(out);
            }
        }
    }

    let view: SessionView = client.get(&format!("/v1/sessions/{id}")).await?;
    let diagnosis = if view.state == State::Diagnosed {
        Some(client.get(&format!("/v1/sessions/{id}/diagnosis")).await?)
    } else {
        None
    };
    Ok(SimulationOutcome {
        session_id: id,
        samples_sent: sent,
        alert: view.alert,
        captures,
        final_state: view.state,
        diagnosis,
    })
}
