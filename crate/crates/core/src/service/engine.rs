//! Session orchestration: owns the sessions, runs detectors on captures and
//! writes every accepted event to the store before applying it.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use super::session::{alert_reason, CaptureKind, Event, EventRecord, Session, SessionError, SessionView, State};
use super::store::{Store, StoreError, StoredRecord};
use crate::detect::{DetectError, ModelSet};
use crate::fusion::{Diagnosis, Modality};
use crate::vitals::{StreamEvaluator, ThresholdPolicy, VitalsSample};
use crate::Confidence;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    /// The uploaded bytes could not be decoded for their modality.
    #[error("{modality} capture rejected: {message}")]
    Decode { modality: &'static str, message: String },
    #[error("sample {index}: {message}")]
    BadSample { index: usize, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("detector failed: {0}")]
    Detector(#[from] DetectError),
}

type Result<T, E = EngineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureOutcome {
    pub modality: CaptureKind,
    pub digest: String,
    pub confidence: Confidence,
    pub state: State,
    /// Present when this capture completed the session.
    pub diagnosis: Option<Diagnosis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub state: State,
    pub accepted: usize,
    /// Alert and confidence records produced by this batch.
    pub events: Vec<EventRecord>,
}

struct Slot {
    session: Mutex<Session>,
    /// Sequence number of the newest record, for long-polling readers.
    latest: watch::Sender<u64>,
}

impl Slot {
    fn new(session: Session) -> Arc<Self> {
        let (latest, _) = watch::channel(session.next_sequence() - 1);
        Arc::new(Self {
            session: Mutex::new(session),
            latest,
        })
    }

    fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub struct Engine {
    models: ModelSet,
    policy: ThresholdPolicy,
    store: Mutex<Store>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
}

pub fn now_ms() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

impl Engine {
    /// Opens the store under `store_dir` and restores every session in it.
    pub fn open(models: ModelSet, store_dir: &Path, policy: ThresholdPolicy) -> Result<Self> {
        StreamEvaluator::new(policy).map_err(|e| SessionError::Invalid(e.to_string()))?;
        let (store, recovery) = Store::open(store_dir)?;
        let sessions = recovery
            .sessions
            .into_iter()
            .map(|(id, s)| (id, Slot::new(s)))
            .collect();
        Ok(Self {
            models,
            policy,
            store: Mutex::new(store),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    fn store(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| EngineError::NotFound(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    /// Checks, persists, then applies one event.
    fn commit(&self, session: &mut Session, event: Event) -> Result<(EventRecord, Option<crate::vitals::Alert>)> {
        session.check(&event)?;
        let record = EventRecord {
            sequence: session.next_sequence(),
            timestamp_ms: now_ms(),
            event,
        };
        self.store().append(&StoredRecord {
            session_id: session.id().to_string(),
            record: record.clone(),
        })?;
        let fired = session.apply(record.clone())?;
        Ok((record, fired))
    }

    fn publish(slot: &Slot, session: &Session) {
        slot.latest.send_replace(session.next_sequence() - 1);
    }

    pub fn create_session(&self) -> Result<SessionView> {
        let id = uuid::Uuid::new_v4().to_string();
        let session = Session::open(id.clone(), self.policy, now_ms())?;
        self.store().append(&StoredRecord {
            session_id: id.clone(),
            record: session.events()[0].clone(),
        })?;
        let view = session.view();
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, Slot::new(session));
        Ok(view)
    }

    pub fn view(&self, id: &str) -> Result<SessionView> {
        Ok(self.slot(id)?.lock().view())
    }

    pub fn state(&self, id: &str) -> Result<State> {
        Ok(self.slot(id)?.lock().state())
    }

    pub fn events_after(&self, id: &str, since: Option<u64>) -> Result<Vec<EventRecord>> {
        Ok(self.slot(id)?.lock().events_after(since).to_vec())
    }

    /// Receiver that changes whenever the session gains a record.
    pub fn subscribe(&self, id: &str) -> Result<watch::Receiver<u64>> {
        Ok(self.slot(id)?.latest.subscribe())
    }

    /// Ingests a batch of samples. The whole batch is validated first, so
    /// a bad sample leaves the session untouched.
    pub fn ingest_vitals(&self, id: &str, samples: &[VitalsSample]) -> Result<IngestOutcome> {
        let slot = self.slot(id)?;
        let mut session = slot.lock();
        let mut probe = session.evaluator().clone();
        for (index, s) in samples.iter().enumerate() {
            probe.push(s).map_err(|e| EngineError::BadSample {
                index,
                message: e.to_string(),
            })?;
        }
        let mut events = Vec::new();
        for s in samples {
            let (_, fired) = self.commit(&mut session, Event::Vitals { sample: *s })?;
            if let Some(alert) = fired {
                let reason = alert_reason(&alert, &self.policy, s);
                let (rec, _) = self.commit(&mut session, Event::Alert { alert, reason })?;
                events.push(rec);
                let confidence = self.models.vascular(s)?;
                let (rec, _) = self.commit(
                    &mut session,
                    Event::Confidence {
                        modality: Modality::Vascular,
                        confidence,
                    },
                )?;
                events.push(rec);
            }
        }
        Self::publish(&slot, &session);
        Ok(IngestOutcome {
            state: session.state(),
            accepted: samples.len(),
            events,
        })
    }

    fn score(&self, kind: CaptureKind, bytes: &[u8]) -> Result<Confidence> {
        let scored = match kind {
            CaptureKind::Voice => self.models.voice_from_wav(bytes),
            CaptureKind::Face => self.models.face_from_pts(bytes),
            CaptureKind::Retina => self.models.retina_from_image(bytes),
        };
        scored.map_err(|e| match e {
            DetectError::Audio(_)
            | DetectError::Image(_)
            | DetectError::Face(_)
            | DetectError::Vocal(_)
            | DetectError::Retina(_) => EngineError::Decode {
                modality: kind.name(),
                message: e.to_string(),
            },
            other => EngineError::Detector(other),
        })
    }

    /// Stores a capture, scores it and advances the tiers. A retina capture
    /// in TIER3_PENDING also produces the diagnosis.
    pub fn submit_capture(&self, id: &str, kind: CaptureKind, bytes: &[u8]) -> Result<CaptureOutcome> {
        let slot = self.slot(id)?;
        let mut session = slot.lock();
        let placeholder = Event::Capture {
            modality: kind,
            digest: String::new(),
            bytes: bytes.len(),
        };
        session.check(&placeholder)?;
        let confidence = self.score(kind, bytes)?;
        let digest = self.store().put_blob(bytes)?;
        let capture = Event::Capture {
            modality: kind,
            digest: digest.clone(),
            bytes: bytes.len(),
        };
        let result = (|| -> Result<Option<Diagnosis>> {
            self.commit(&mut session, capture)?;
            self.commit(
                &mut session,
                Event::Confidence {
                    modality: kind.modality(),
                    confidence,
                },
            )?;
            let diagnosis = if kind == CaptureKind::Retina {
                Some(self.diagnose_locked(&mut session)?)
            } else {
                None
            };
            Ok(diagnosis)
        })();
        Self::publish(&slot, &session);
        Ok(CaptureOutcome {
            modality: kind,
            digest,
            confidence,
            state: session.state(),
            diagnosis: result?,
        })
    }

    fn diagnose_locked(&self, session: &mut Session) -> Result<Diagnosis> {
        if let Some(d) = session.diagnosis() {
            return Ok(d.clone());
        }
        session.check(&Event::Diagnosis {
            diagnosis: placeholder_diagnosis(),
        })?;
        let diagnosis = self.models.fuse(session.confidences())?;
        self.commit(
            session,
            Event::Diagnosis {
                diagnosis: diagnosis.clone(),
            },
        )?;
        Ok(diagnosis)
    }

    /// Fuses whatever confidences are present (retina imputed if absent).
    /// Calling it again returns the recorded diagnosis.
    pub fn diagnose(&self, id: &str) -> Result<Diagnosis> {
        let slot = self.slot(id)?;
        let mut session = slot.lock();
        let d = self.diagnose_locked(&mut session);
        Self::publish(&slot, &session);
        d
    }

    pub fn diagnosis(&self, id: &str) -> Result<Option<Diagnosis>> {
        Ok(self.slot(id)?.lock().diagnosis().cloned())
    }

    /// Dismisses an alert that has no captures yet.
    pub fn clear(&self, id: &str) -> Result<SessionView> {
        let slot = self.slot(id)?;
        let mut session = slot.lock();
        self.commit(&mut session, Event::Clear)?;
        Self::publish(&slot, &session);
        Ok(session.view())
    }

    pub fn blob(&self, digest: &str) -> Result<Vec<u8>> {
        Ok(self.store().get_blob(digest)?)
    }
}

fn placeholder_diagnosis() -> Diagnosis {
    Diagnosis {
        at_risk: false,
        risk_percent: 0.0,
        contributions: Vec::new(),
        imputed: Vec::new(),
        model_version: String::new(),
    }
}
