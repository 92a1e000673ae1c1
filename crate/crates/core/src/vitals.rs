//! Tier-1 vitals: sample invariants, debounced threshold alerting, CSV replay,
//! and the vascular SVM score.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::svm::{SvmError, SvmModel};
use crate::Confidence;

#[derive(Debug, thiserror::Error)]
pub enum VitalsError {
    #[error("sample {index}: {reason}")]
    Invalid { index: usize, reason: String },
    #[error("bad threshold policy: {0}")]
    BadPolicy(&'static str),
    #[error("vitals csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

pub type Result<T, E = VitalsError> = std::result::Result<T, E>;

/// One reading. Field names double as the CSV header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitalsSample {
    pub timestamp_ms: i64,
    pub systolic: f64,
    pub diastolic: f64,
    pub heart_rate: f64,
    pub spo2: f64,
}

impl VitalsSample {
    /// Checks the physiological ranges. Does not look at timestamps.
    pub fn check(&self) -> std::result::Result<(), String> {
        let in_range = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo && v <= hi;
        if !in_range(self.systolic, 40.0, 300.0) {
            return Err(format!("systolic {} outside [40, 300]", self.systolic));
        }
        if !(in_range(self.diastolic, 20.0, 300.0) && self.diastolic < self.systolic) {
            return Err(format!(
                "diastolic {} must be ≥ 20 and below systolic {}",
                self.diastolic, self.systolic
            ));
        }
        if !in_range(self.heart_rate, 20.0, 250.0) {
            return Err(format!("heart rate {} outside [20, 250]", self.heart_rate));
        }
        if !in_range(self.spo2, 50.0, 100.0) {
            return Err(format!("spo2 {} outside [50, 100]", self.spo2));
        }
        Ok(())
    }

    /// SVM features oriented so that every coordinate grows with risk.
    pub fn features(&self) -> Vec<f64> {
        vec![self.systolic, self.diastolic, self.heart_rate, 100.0 - self.spo2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Systolic,
    HeartRate,
    Spo2,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Systolic, Criterion::HeartRate, Criterion::Spo2];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Systolic => "systolic",
            Criterion::HeartRate => "heart_rate",
            Criterion::Spo2 => "spo2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub systolic_alert: f64,
    pub heart_rate_alert: f64,
    pub spo2_alert: f64,
    pub consecutive_required: usize,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            systolic_alert: 180.0,
            heart_rate_alert: 100.0,
            spo2_alert: 92.0,
            consecutive_required: 3,
        }
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.systolic_alert > 0.0 && self.heart_rate_alert > 0.0 && self.spo2_alert > 0.0) {
            return Err(VitalsError::BadPolicy("thresholds must be positive"));
        }
        if self.consecutive_required == 0 {
            return Err(VitalsError::BadPolicy("consecutive_required must be at least 1"));
        }
        Ok(())
    }

    /// Whether a single sample meets `criterion`.
    pub fn exceeds(&self, s: &VitalsSample, criterion: Criterion) -> bool {
        match criterion {
            Criterion::Systolic => s.systolic >= self.systolic_alert,
            Criterion::HeartRate => s.heart_rate >= self.heart_rate_alert,
            Criterion::Spo2 => s.spo2 <= self.spo2_alert,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    /// Position of the sample that completed the run.
    pub index: usize,
    pub criterion: Criterion,
    pub timestamp_ms: i64,
}

/// Incremental evaluator. Feed samples one at a time; the first completed run
/// of `consecutive_required` exceedances produces an [`Alert`]. When several
/// criteria complete on the same sample, systolic wins over heart rate, which
/// wins over SpO2.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamEvaluator {
    policy: ThresholdPolicy,
    runs: [usize; 3],
    seen: usize,
    last_ts: Option<i64>,
    fired: Option<Alert>,
}

impl StreamEvaluator {
    pub fn new(policy: ThresholdPolicy) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            policy,
            runs: [0; 3],
            seen: 0,
            last_ts: None,
            fired: None,
        })
    }

    pub fn policy(&self) -> &ThresholdPolicy {
        &self.policy
    }

    pub fn fired(&self) -> Option<Alert> {
        self.fired
    }

    /// Number of samples accepted so far.
    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Validates a sample against the invariants without consuming it.
    pub fn admit(&self, s: &VitalsSample) -> Result<()> {
        let invalid = |reason: String| VitalsError::Invalid {
            index: self.seen,
            reason,
        };
        s.check().map_err(invalid)?;
        if let Some(prev) = self.last_ts {
            if s.timestamp_ms <= prev {
                return Err(invalid(format!("timestamp {} does not follow {prev}", s.timestamp_ms)));
            }
        }
        Ok(())
    }

    /// Consumes a sample. Returns the alert only on the sample that fires it.
    pub fn push(&mut self, s: &VitalsSample) -> Result<Option<Alert>> {
        self.admit(s)?;
        let index = self.seen;
        self.seen += 1;
        self.last_ts = Some(s.timestamp_ms);
        for (run, criterion) in self.runs.iter_mut().zip(Criterion::ALL) {
            *run = if self.policy.exceeds(s, criterion) { *run + 1 } else { 0 };
        }
        if self.fired.is_some() {
            return Ok(None);
        }
        let hit = Criterion::ALL
            .iter()
            .zip(self.runs)
            .find(|(_, run)| *run >= self.policy.consecutive_required)
            .map(|(c, _)| *c);
        Ok(hit.map(|criterion| {
            let alert = Alert {
                index,
                criterion,
                timestamp_ms: s.timestamp_ms,
            };
            self.fired = Some(alert);
            alert
        }))
    }

    /// Forgets any fired alert and the current runs, keeping the timestamp
    /// ordering. Used when an operator clears a false alarm.
    pub fn rearm(&mut self) {
        self.runs = [0; 3];
        self.fired = None;
    }
}

/// Batch evaluation over a whole stream.
pub fn evaluate_stream(policy: &ThresholdPolicy, samples: &[VitalsSample]) -> Result<Option<Alert>> {
    let mut ev = StreamEvaluator::new(*policy)?;
    for s in samples {
        if let Some(alert) = ev.push(s)? {
            return Ok(Some(alert));
        }
    }
    Ok(None)
}

pub fn read_vitals_csv(reader: impl Read) -> Result<Vec<VitalsSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (index, row) in rdr.deserialize::<VitalsSample>().enumerate() {
        let s = row?;
        s.check().map_err(|reason| VitalsError::Invalid { index, reason })?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_vitals_csv(writer: impl Write, samples: &[VitalsSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Calibrated probability that a reading belongs to the stroke-risk class.
pub fn vascular_confidence(svm: &SvmModel, sample: &VitalsSample) -> Result<Confidence> {
    sample
        .check()
        .map_err(|reason| VitalsError::Invalid { index: 0, reason })?;
    Ok(Confidence::clamped(svm.probability(&sample.features())?))
}
