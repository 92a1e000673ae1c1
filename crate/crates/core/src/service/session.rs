//! The per-session state machine. A session is a pure fold over its event
//! log: [`Session::apply`] validates one record and updates the state, so
//! replaying a stored log reproduces the live session exactly.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::fusion::{Diagnosis, FusionInput, Modality};
use crate::vitals::{Alert, StreamEvaluator, ThresholdPolicy, VitalsSample};
use crate::Confidence;

/// How many recent samples a session keeps for display.
pub const VITALS_WINDOW: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum State {
    Monitoring,
    Alert,
    Tier2Pending,
    Tier3Pending,
    Diagnosed,
}

/// Media a patient uploads after an alert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureKind {
    Voice,
    Face,
    Retina,
}

impl CaptureKind {
    pub const ALL: [CaptureKind; 3] = [CaptureKind::Voice, CaptureKind::Face, CaptureKind::Retina];

    pub fn modality(self) -> Modality {
        match self {
            CaptureKind::Voice => Modality::Vocal,
            CaptureKind::Face => Modality::Face,
            CaptureKind::Retina => Modality::Retina,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CaptureKind::Voice => "voice",
            CaptureKind::Face => "face",
            CaptureKind::Retina => "retina",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// First record of every session.
    Opened {
        policy: ThresholdPolicy,
    },
    Vitals {
        sample: VitalsSample,
    },
    Alert {
        alert: Alert,
        reason: String,
    },
    Capture {
        modality: CaptureKind,
        digest: String,
        bytes: usize,
    },
    Confidence {
        modality: Modality,
        confidence: Confidence,
    },
    Diagnosis {
        diagnosis: Diagnosis,
    },
    /// Operator dismissed a false alarm.
    Clear,
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Opened { .. } => "opened",
            Event::Vitals { .. } => "vitals",
            Event::Alert { .. } => "alert",
            Event::Capture { .. } => "capture",
            Event::Confidence { .. } => "confidence",
            Event::Diagnosis { .. } => "diagnosis",
            Event::Clear => "clear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub sequence: u64,
    /// Wall-clock milliseconds when the record was appended.
    pub timestamp_ms: i64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SessionError {
    /// The request is well-formed but not allowed in the current state.
    #[error("{0}")]
    Conflict(String),
    /// The event payload itself is unacceptable.
    #[error("{0}")]
    Invalid(String),
    #[error("expected sequence {expected}, got {found}")]
    Sequence { expected: u64, found: u64 },
    #[error("a log must start with an opened record")]
    NotOpened,
}

type Result<T, E = SessionError> = std::result::Result<T, E>;

fn conflict(msg: impl Into<String>) -> SessionError {
    SessionError::Conflict(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    id: String,
    state: State,
    evaluator: StreamEvaluator,
    window: VecDeque<VitalsSample>,
    alert: Option<Alert>,
    captures: BTreeMap<CaptureKind, String>,
    confidences: FusionInput,
    diagnosis: Option<Diagnosis>,
    events: Vec<EventRecord>,
}

/// Serializable snapshot returned by the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub state: State,
    pub alert: Option<Alert>,
    pub captures: BTreeMap<CaptureKind, String>,
    pub confidences: FusionInput,
    pub vitals_window: Vec<VitalsSample>,
    pub diagnosis: Option<Diagnosis>,
    pub events: Vec<EventRecord>,
}

impl Session {
    /// A new session whose log holds only the `opened` record.
    pub fn open(id: impl Into<String>, policy: ThresholdPolicy, timestamp_ms: i64) -> Result<Self> {
        let evaluator = StreamEvaluator::new(policy).map_err(|e| SessionError::Invalid(e.to_string()))?;
        let mut s = Self {
            id: id.into(),
            state: State::Monitoring,
            evaluator,
            window: VecDeque::new(),
            alert: None,
            captures: BTreeMap::new(),
            confidences: FusionInput::default(),
            diagnosis: None,
            events: Vec::new(),
        };
        s.events.push(EventRecord {
            sequence: 0,
            timestamp_ms,
            event: Event::Opened { policy },
        });
        Ok(s)
    }

    /// Rebuilds a session from its full log.
    pub fn replay(id: impl Into<String>, records: &[EventRecord]) -> Result<Self> {
        let (first, rest) = records.split_first().ok_or(SessionError::NotOpened)?;
        let Event::Opened { policy } = first.event else {
            return Err(SessionError::NotOpened);
        };
        if first.sequence != 0 {
            return Err(SessionError::Sequence {
                expected: 0,
                found: first.sequence,
            });
        }
        let mut s = Self::open(id, policy, first.timestamp_ms)?;
        for r in rest {
            s.apply(r.clone())?;
        }
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> State {
        self.state
    }

    pub fn alert(&self) -> Option<Alert> {
        self.alert
    }

    pub fn confidences(&self) -> &FusionInput {
        &self.confidences
    }

    pub fn diagnosis(&self) -> Option<&Diagnosis> {
        self.diagnosis.as_ref()
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn next_sequence(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn latest_vitals(&self) -> Option<&VitalsSample> {
        self.window.back()
    }

    pub fn evaluator(&self) -> &StreamEvaluator {
        &self.evaluator
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            state: self.state,
            alert: self.alert,
            captures: self.captures.clone(),
            confidences: self.confidences,
            vitals_window: self.window.iter().copied().collect(),
            diagnosis: self.diagnosis.clone(),
            events: self.events.clone(),
        }
    }

    /// Records after `since` (exclusive).
    pub fn events_after(&self, since: Option<u64>) -> &[EventRecord] {
        let start = since.map_or(0, |s| (s + 1).min(self.events.len() as u64) as usize);
        &self.events[start..]
    }

    fn tier2_done(&self) -> bool {
        self.confidences.vocal.is_some() && self.confidences.face.is_some()
    }

    /// Whether `event` may be appended now. Never mutates.
    pub fn check(&self, event: &Event) -> Result<()> {
        use State::*;
        match event {
            Event::Opened { .. } => Err(conflict("session is already open")),
            Event::Vitals { sample } => self
                .evaluator
                .admit(sample)
                .map_err(|e| SessionError::Invalid(e.to_string())),
            Event::Alert { alert, .. } => {
                if self.state != Monitoring {
                    return Err(conflict("an alert is already active"));
                }
                if self.evaluator.fired() != Some(*alert) {
                    return Err(SessionError::Invalid("alert does not match the vitals stream".into()));
                }
                Ok(())
            }
            Event::Capture { modality, .. } => self.check_capture(*modality),
            Event::Confidence { modality, .. } => match modality {
                Modality::Vascular => match self.state {
                    Monitoring => Err(conflict("no active alert")),
                    Diagnosed => Err(conflict("session is already diagnosed")),
                    _ => Ok(()),
                },
                m => {
                    let kind = CaptureKind::ALL
                        .into_iter()
                        .find(|k| k.modality() == *m)
                        .expect("media modality");
                    self.check_capture(kind)?;
                    if !self.captures.contains_key(&kind) {
                        return Err(conflict(format!("no {} capture recorded", kind.name())));
                    }
                    Ok(())
                }
            },
            Event::Diagnosis { .. } => {
                if self.state != Tier3Pending {
                    return Err(conflict(match self.state {
                        Monitoring => "no active alert",
                        Alert | Tier2Pending => "diagnosis needs both voice and face captures",
                        _ => "session is already diagnosed",
                    }));
                }
                if self.confidences.vascular.is_none() {
                    return Err(conflict("no vascular confidence recorded"));
                }
                Ok(())
            }
            Event::Clear => match self.state {
                Alert => Ok(()),
                Monitoring => Err(conflict("no active alert")),
                _ => Err(conflict("only an alert with no captures can be cleared")),
            },
        }
    }

    fn check_capture(&self, kind: CaptureKind) -> Result<()> {
        use State::*;
        match (self.state, kind) {
            (Monitoring, _) => Err(conflict("no active alert")),
            (Diagnosed, _) => Err(conflict("session is already diagnosed")),
            (Alert | Tier2Pending, CaptureKind::Voice | CaptureKind::Face) => Ok(()),
            (Alert | Tier2Pending, CaptureKind::Retina) => {
                Err(conflict("retina capture comes after both voice and face captures"))
            }
            (Tier3Pending, CaptureKind::Retina) => Ok(()),
            (Tier3Pending, _) => Err(conflict(format!(
                "{} already scored; the next capture is retina",
                kind.name()
            ))),
        }
    }

    /// Validates and applies one record. For vitals records, returns the alert
    /// the sample completes, if any; the caller appends it as its own record.
    pub fn apply(&mut self, record: EventRecord) -> Result<Option<Alert>> {
        let expected = self.next_sequence();
        if record.sequence != expected {
            return Err(SessionError::Sequence {
                expected,
                found: record.sequence,
            });
        }
        self.check(&record.event)?;
        let mut fired = None;
        match &record.event {
            Event::Opened { .. } => unreachable!("rejected by check"),
            Event::Vitals { sample } => {
                let alert = self.evaluator.push(sample).expect("admitted by check");
                if self.state == State::Monitoring {
                    fired = alert;
                }
                if self.window.len() == VITALS_WINDOW {
                    self.window.pop_front();
                }
                self.window.push_back(*sample);
            }
            Event::Alert { alert, .. } => {
                self.alert = Some(*alert);
                self.state = State::Alert;
            }
            Event::Capture { modality, digest, .. } => {
                self.captures.insert(*modality, digest.clone());
            }
            Event::Confidence { modality, confidence } => {
                self.confidences.set(*modality, Some(*confidence));
                if matches!(modality, Modality::Vocal | Modality::Face) {
                    self.state = if self.tier2_done() {
                        State::Tier3Pending
                    } else {
                        State::Tier2Pending
                    };
                }
            }
            Event::Diagnosis { diagnosis } => {
                self.diagnosis = Some(diagnosis.clone());
                self.state = State::Diagnosed;
            }
            Event::Clear => {
                self.state = State::Monitoring;
                self.alert = None;
                self.captures.clear();
                self.confidences = FusionInput::default();
                self.evaluator.rearm();
            }
        }
        self.events.push(record);
        Ok(fired)
    }

    /// Applies `event` as the next record, stamped with `timestamp_ms`.
    pub fn append(&mut self, event: Event, timestamp_ms: i64) -> Result<(EventRecord, Option<Alert>)> {
        let record = EventRecord {
            sequence: self.next_sequence(),
            timestamp_ms,
            event,
        };
        let fired = self.apply(record.clone())?;
        Ok((record, fired))
    }
}

/// Human-readable reason attached to an alert event.
pub fn alert_reason(alert: &Alert, policy: &ThresholdPolicy, sample: &VitalsSample) -> String {
    use crate::vitals::Criterion;
    let (value, op, limit) = match alert.criterion {
        Criterion::Systolic => (sample.systolic, ">=", policy.systolic_alert),
        Criterion::HeartRate => (sample.heart_rate, ">=", policy.heart_rate_alert),
        Criterion::Spo2 => (sample.spo2, "<=", policy.spo2_alert),
    };
    format!(
        "{} {value:.0} {op} {limit:.0} for {} consecutive samples",
        alert.criterion.name(),
        policy.consecutive_required
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vitals::Criterion;

    fn sample(t: i64, systolic: f64) -> VitalsSample {
        VitalsSample {
            timestamp_ms: t,
            systolic,
            diastolic: 80.0,
            heart_rate: 70.0,
            spo2: 98.0,
        }
    }

    fn open() -> Session {
        Session::open("s", ThresholdPolicy::default(), 0).unwrap()
    }

    fn feed(s: &mut Session, t: i64, systolic: f64) -> Option<Alert> {
        let (_, fired) = s
            .append(
                Event::Vitals {
                    sample: sample(t, systolic),
                },
                t,
            )
            .unwrap();
        if let Some(alert) = fired {
            s.append(
                Event::Alert {
                    alert,
                    reason: String::new(),
                },
                t,
            )
            .unwrap();
        }
        fired
    }

    fn alerted() -> Session {
        let mut s = open();
        for t in 1..=3 {
            feed(&mut s, t, 185.0);
        }
        assert_eq!(s.state(), State::Alert);
        s
    }

    fn conf(v: f64) -> Confidence {
        Confidence::new(v).unwrap()
    }

    fn capture_and_score(s: &mut Session, kind: CaptureKind, v: f64) -> Result<()> {
        s.append(
            Event::Capture {
                modality: kind,
                digest: kind.name().into(),
                bytes: 1,
            },
            9,
        )?;
        s.append(
            Event::Confidence {
                modality: kind.modality(),
                confidence: conf(v),
            },
            9,
        )?;
        Ok(())
    }

    #[test]
    fn normal_samples_keep_monitoring() {
        let mut s = open();
        for t in 1..10 {
            assert!(feed(&mut s, t, 120.0).is_none());
        }
        assert_eq!(s.state(), State::Monitoring);
    }

    #[test]
    fn third_systolic_185_alerts() {
        let mut s = open();
        assert!(feed(&mut s, 1, 185.0).is_none());
        assert!(feed(&mut s, 2, 185.0).is_none());
        let alert = feed(&mut s, 3, 185.0).unwrap();
        assert_eq!(alert.criterion, Criterion::Systolic);
        assert_eq!(s.state(), State::Alert);
    }

    #[test]
    fn invalid_sample_leaves_state_unchanged() {
        let mut s = open();
        feed(&mut s, 5, 120.0);
        let before = s.clone();
        let bad = s.append(
            Event::Vitals {
                sample: sample(5, 120.0),
            },
            6,
        );
        assert!(matches!(bad, Err(SessionError::Invalid(_))));
        let bad = s.append(
            Event::Vitals {
                sample: sample(7, -1.0),
            },
            6,
        );
        assert!(matches!(bad, Err(SessionError::Invalid(_))));
        assert_eq!(s, before);
    }

    #[test]
    fn capture_in_monitoring_is_a_conflict() {
        let mut s = open();
        let err = capture_and_score(&mut s, CaptureKind::Voice, 0.5).unwrap_err();
        assert_eq!(err, SessionError::Conflict("no active alert".into()));
    }

    #[test]
    fn voice_and_face_reach_tier3() {
        let mut s = alerted();
        capture_and_score(&mut s, CaptureKind::Voice, 0.8).unwrap();
        assert_eq!(s.state(), State::Tier2Pending);
        capture_and_score(&mut s, CaptureKind::Face, 0.7).unwrap();
        assert_eq!(s.state(), State::Tier3Pending);
        let kinds: Vec<_> = s.events().iter().filter(|r| r.event.kind() == "confidence").collect();
        assert_eq!(kinds.len(), 2);
    }

    #[test]
    fn retina_before_tier2_is_rejected() {
        let mut s = alerted();
        let err = capture_and_score(&mut s, CaptureKind::Retina, 0.5).unwrap_err();
        assert!(matches!(err, SessionError::Conflict(_)));
    }

    #[test]
    fn diagnosis_requires_tier3_and_vascular() {
        let d = Diagnosis {
            at_risk: true,
            risk_percent: 80.0,
            contributions: vec![0.0; 4],
            imputed: vec![],
            model_version: "x".into(),
        };
        let mut s = alerted();
        let ev = Event::Diagnosis { diagnosis: d.clone() };
        assert!(s.check(&ev).is_err());
        capture_and_score(&mut s, CaptureKind::Voice, 0.8).unwrap();
        capture_and_score(&mut s, CaptureKind::Face, 0.7).unwrap();
        assert!(s.check(&ev).is_err(), "vascular missing");
        s.append(
            Event::Confidence {
                modality: Modality::Vascular,
                confidence: conf(0.9),
            },
            9,
        )
        .unwrap();
        s.append(ev, 9).unwrap();
        assert_eq!(s.state(), State::Diagnosed);
        assert_eq!(s.diagnosis(), Some(&d));
    }

    #[test]
    fn clear_rearms() {
        let mut s = alerted();
        s.append(Event::Clear, 4).unwrap();
        assert_eq!(s.state(), State::Monitoring);
        assert!(feed(&mut s, 10, 185.0).is_none());
        assert!(feed(&mut s, 11, 185.0).is_none());
        assert!(feed(&mut s, 12, 185.0).is_some());
        assert!(s.append(Event::Clear, 4).is_ok());
        assert!(s.append(Event::Clear, 4).is_err());
    }

    #[test]
    fn forged_alert_is_rejected() {
        let mut s = open();
        let alert = Alert {
            index: 0,
            criterion: Criterion::Spo2,
            timestamp_ms: 1,
        };
        assert!(s
            .append(
                Event::Alert {
                    alert,
                    reason: String::new()
                },
                1
            )
            .is_err());
    }

    #[test]
    fn replay_reproduces_state_and_rejects_gaps() {
        let mut s = alerted();
        capture_and_score(&mut s, CaptureKind::Voice, 0.8).unwrap();
        let again = Session::replay("s", s.events()).unwrap();
        assert_eq!(again, s);
        let mut gap = s.events().to_vec();
        gap.remove(2);
        assert!(matches!(
            Session::replay("s", &gap),
            Err(SessionError::Sequence { expected: 2, found: 3 })
        ));
        assert_eq!(Session::replay("s", &[]), Err(SessionError::NotOpened));
    }

    #[test]
    fn records_serialize_with_kind_tag() {
        let s = alerted();
        let json = serde_json::to_value(&s.events()[4]).unwrap();
        assert_eq!(json["kind"], "alert");
        assert_eq!(json["sequence"], 4);
        let back: EventRecord = serde_json::from_value(json).unwrap();
        assert_eq!(&back, &s.events()[4]);
    }

    #[test]
    fn events_after_is_exclusive() {
        let s = alerted();
        assert_eq!(s.events_after(None).len(), s.events().len());
        assert_eq!(s.events_after(Some(0))[0].sequence, 1);
        assert!(s.events_after(Some(99)).is_empty());
    }
}
