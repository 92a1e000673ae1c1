//! Independent oracles and random generators shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokescreen::audio::{low_pass, AudioClip, FilterSpec};
use strokescreen::face::{LandmarkSet, MIRROR, N_POINTS};
use strokescreen::fusion::{Diagnosis, Modality};
use strokescreen::nn::{grad_check, LayerSpec, Model};
use strokescreen::service::session::{CaptureKind, Event, EventRecord, Session, State};
use strokescreen::service::store::{decode_log, encode_record, StoredRecord};
use strokescreen::svm::{svm_train, SvmTrainConfig};
use strokescreen::tensor::Tensor;
use strokescreen::vitals::{Criterion, ThresholdPolicy, VitalsSample};
use strokescreen::Confidence;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- SVM ---------------------------------------------------------------

pub const LAMBDA: f64 = 0.01;

/// Grid over w ∈ [−3, 3]², b ∈ [−3, 3] with step 0.05, objective evaluated
/// on points standardized here (independently of the trainer).
pub fn grid_optimum(points: &[(Vec<f64>, i8)]) -> (f64, [f64; 2], f64) {
    let z = standardize2(points);
    let n = points.len() as f64;
    let steps: Vec<f64> = (0..=120).map(|i| -3.0 + 0.05 * i as f64).collect();
    let mut best = (f64::INFINITY, [0.0; 2], 0.0);
    for &w0 in &steps {
        for &w1 in &steps {
            let reg = 0.5 * LAMBDA * (w0 * w0 + w1 * w1);
            for &b in &steps {
                let mut hinge = 0.0;
                for (zi, yi) in &z {
                    hinge += (1.0 - yi * (w0 * zi[0] + w1 * zi[1] + b)).max(0.0);
                }
                let obj = reg + hinge / n;
                if obj < best.0 {
                    best = (obj, [w0, w1], b);
                }
            }
        }
    }
    best
}

fn standardize2(points: &[(Vec<f64>, i8)]) -> Vec<([f64; 2], f64)> {
    let n = points.len() as f64;
    let mu = [0, 1].map(|d| points.iter().map(|(x, _)| x[d]).sum::<f64>() / n);
    let sd = [0, 1].map(|d| {
        let v = (points.iter().map(|(x, _)| (x[d] - mu[d]).powi(2)).sum::<f64>() / n).sqrt();
        if v > 1e-12 {
            v
        } else {
            1.0
        }
    });
    points
        .iter()
        .map(|(x, y)| ([(x[0] - mu[0]) / sd[0], (x[1] - mu[1]) / sd[1]], f64::from(*y)))
        .collect()
}

/// Regularized hinge objective of the trained model and its margins.
pub fn trained_objective(points: &[(Vec<f64>, i8)], cfg: &SvmTrainConfig) -> (f64, Vec<f64>) {
    let model = svm_train(points, cfg).unwrap();
    let n = points.len() as f64;
    let mut hinge = 0.0;
    let mut margins = Vec::new();
    for (x, y) in points {
        let m = model.decision(x).unwrap();
        hinge += (1.0 - f64::from(*y) * m).max(0.0);
        margins.push(m);
    }
    let reg = 0.5 * LAMBDA * model.weights.iter().map(|w| w * w).sum::<f64>();
    (reg + hinge / n, margins)
}

/// Six 2-D points labelled by a random line, with a gap around it.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, i8)> {
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let normal = [angle.cos(), angle.sin()];
    let offset: f64 = rng.random_range(-0.5..0.5);
    let mut pts = Vec::new();
    while pts.len() < 6 {
        let x = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let s = normal[0] * x[0] + normal[1] * x[1] - offset;
        let label: i8 = if s > 0.0 { 1 } else { -1 };
        let have = pts.iter().filter(|(_, y)| *y == label).count();
        if s.abs() > 0.6 && have < 3 {
            pts.push((x, label));
        }
    }
    pts
}

/// Trains on one instance and compares with the grid optimum. Returns the
/// objective ratio, or an error naming the first disagreement.
pub fn svm_case(pts: &[(Vec<f64>, i8)], seed: u64) -> Result<f64, String> {
    let (grid, w, b) = grid_optimum(pts);
    let cfg = SvmTrainConfig {
        seed,
        ..Default::default()
    };
    let (obj, margins) = trained_objective(pts, &cfg);
    if obj > grid * 1.05 {
        return Err(format!("objective {obj} exceeds grid {grid} by more than 5%"));
    }
    let z = standardize2(pts);
    for (i, ((zi, _), m)) in z.iter().zip(&margins).enumerate() {
        let g = w[0] * zi[0] + w[1] * zi[1] + b;
        if g.signum() != m.signum() {
            return Err(format!("point {i}: grid sign {g} vs trained {m}"));
        }
    }
    Ok(obj / grid)
}

// ---- filter ------------------------------------------------------------

/// |H(e^{jω})| from the analog prototype, not from the biquad coefficients.
/// Order 2 is the bilinear-transformed Butterworth with prewarped cutoff,
/// |H|² = 1 / (1 + Ω⁴) with Ω = tan(ω/2) / tan(ω_c/2). Order 1 is the
/// exponential-smoothing pole p = e^{−ω_c}, |H| = (1 − p) / |1 − p·e^{−jω}|.
pub fn analytic_gain(order: u8, cutoff_hz: f64, fs: f64, f: f64) -> f64 {
    let w = 2.0 * PI * f / fs;
    let wc = 2.0 * PI * cutoff_hz / fs;
    match order {
        1 => {
            let p = (-wc).exp();
            (1.0 - p) / (1.0 - 2.0 * p * w.cos() + p * p).sqrt()
        }
        2 => {
            let omega = (w / 2.0).tan() / (wc / 2.0).tan();
            1.0 / (1.0 + omega.powi(4)).sqrt()
        }
        _ => unreachable!("orders 1 and 2 only"),
    }
}

/// RMS gain of `low_pass` on a unit sine, measured after transients settle.
pub fn measured_gain(order: u8, cutoff_hz: f64, fs: u32, f: f64) -> f64 {
    let n = fs as usize;
    let x: Vec<f64> = (0..n)
        .map(|i| (2.0 * PI * f * i as f64 / f64::from(fs)).sin())
        .collect();
    let clip = AudioClip::new(fs, x.clone()).unwrap();
    let y = low_pass(&clip, &FilterSpec { cutoff_hz, order }).unwrap().samples;
    let tail = n / 2;
    let rms = |v: &[f64]| (v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64).sqrt();
    rms(&y[tail..]) / rms(&x[tail..])
}

// ---- vitals ------------------------------------------------------------

/// A stream mixing normal and alarming readings with runs of each.
pub fn random_stream(rng: &mut ChaCha8Rng, len: usize) -> Vec<VitalsSample> {
    let mut t = rng.random_range(0..1_000_000i64);
    let mut mode = 0u8;
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < 0.3 {
                mode = if rng.random::<f64>() < 0.6 {
                    0
                } else {
                    rng.random_range(1..4)
                };
            }
            t += rng.random_range(1..5000);
            let mut s = VitalsSample {
                timestamp_ms: t,
                systolic: rng.random_range(100.0..175.0),
                diastolic: rng.random_range(60.0..95.0),
                heart_rate: rng.random_range(55.0..95.0),
                spo2: rng.random_range(93.0..100.0),
            };
            match mode {
                1 => s.systolic = rng.random_range(178.0..200.0),
                2 => s.heart_rate = rng.random_range(98.0..130.0),
                3 => s.spo2 = rng.random_range(85.0..93.0),
                _ => {}
            }
            s
        })
        .collect()
}

/// Direct definition: the first index where some criterion has held on the
/// last `k` samples, ties broken systolic, heart rate, SpO2.
pub fn brute_force_alert(policy: &ThresholdPolicy, samples: &[VitalsSample]) -> Option<(usize, Criterion)> {
    let k = policy.consecutive_required;
    let meets = |s: &VitalsSample, c: Criterion| match c {
        Criterion::Systolic => s.systolic >= policy.systolic_alert,
        Criterion::HeartRate => s.heart_rate >= policy.heart_rate_alert,
        Criterion::Spo2 => s.spo2 <= policy.spo2_alert,
    };
    for i in (k - 1)..samples.len() {
        for c in [Criterion::Systolic, Criterion::HeartRate, Criterion::Spo2] {
            if samples[i + 1 - k..=i].iter().all(|s| meets(s, c)) {
                return Some((i, c));
            }
        }
    }
    None
}

// ---- sessions ----------------------------------------------------------

pub fn allowed_step(from: State, to: State) -> bool {
    use State::*;
    from == to
        || matches!(
            (from, to),
            (Monitoring, Alert)
                | (Alert, Tier2Pending)
                | (Alert, Monitoring)
                | (Tier2Pending, Tier3Pending)
                | (Tier3Pending, Diagnosed)
        )
}

/// In a diagnosed session, the last alert precedes voice and face
/// confidences, which precede the diagnosis.
pub fn tiers_in_order(s: &Session) -> bool {
    let ev = s.events();
    let pos = |pred: &dyn Fn(&Event) -> bool| ev.iter().rposition(|r| pred(&r.event));
    let Some(diag) = pos(&|e| matches!(e, Event::Diagnosis { .. })) else {
        return s.state() != State::Diagnosed;
    };
    let Some(alert) = pos(&|e| matches!(e, Event::Alert { .. })) else {
        return false;
    };
    let conf = |m: Modality| {
        ev[alert..diag]
            .iter()
            .any(|r| matches!(r.event, Event::Confidence { modality, .. } if modality == m))
    };
    conf(Modality::Vocal) && conf(Modality::Face)
}

fn dummy_diagnosis() -> Diagnosis {
    Diagnosis {
        at_risk: true,
        risk_percent: 75.0,
        contributions: vec![0.1; 4],
        imputed: vec![],
        model_version: "test".into(),
    }
}

/// Drives a session with random attempted events; rejected attempts are
/// dropped. Returns the final session and every intermediate snapshot
/// (`snapshots[k]` is the state after `k + 1` records), and whether every
/// applied step was a legal transition.
pub fn random_session(rng: &mut ChaCha8Rng, attempts: usize) -> (Session, Vec<Session>, bool) {
    let mut s = Session::open("r", ThresholdPolicy::default(), 0).unwrap();
    let mut snapshots = vec![s.clone()];
    let mut legal = true;
    let mut t = 0i64;
    let step = |s: &mut Session, ev: Event, snapshots: &mut Vec<Session>, legal: &mut bool| {
        let before = s.state();
        let r = s.append(ev, 0);
        if let Ok((_, fired)) = &r {
            *legal &= allowed_step(before, s.state());
            snapshots.push(s.clone());
            return *fired;
        }
        None
    };
    for _ in 0..attempts {
        let roll: f64 = rng.random();
        let conf = Confidence::new(rng.random::<f64>()).unwrap();
        if roll < 0.45 {
            t += if rng.random::<f64>() < 0.05 {
                0
            } else {
                rng.random_range(1..100)
            };
            let sample = VitalsSample {
                timestamp_ms: t,
                systolic: if rng.random::<f64>() < 0.6 { 185.0 } else { 120.0 },
                diastolic: 80.0,
                heart_rate: 70.0,
                spo2: 97.0,
            };
            if let Some(alert) = step(&mut s, Event::Vitals { sample }, &mut snapshots, &mut legal) {
                step(
                    &mut s,
                    Event::Alert {
                        alert,
                        reason: "x".into(),
                    },
                    &mut snapshots,
                    &mut legal,
                );
                if rng.random::<f64>() < 0.8 {
                    let ev = Event::Confidence {
                        modality: Modality::Vascular,
                        confidence: conf,
                    };
                    step(&mut s, ev, &mut snapshots, &mut legal);
                }
            }
        } else if roll < 0.75 {
            let kind = CaptureKind::ALL[rng.random_range(0..3)];
            if rng.random::<f64>() < 0.8 {
                let ev = Event::Capture {
                    modality: kind,
                    digest: format!("{:064x}", rng.random::<u64>()),
                    bytes: 1,
                };
                step(&mut s, ev, &mut snapshots, &mut legal);
            }
            let ev = Event::Confidence {
                modality: kind.modality(),
                confidence: conf,
            };
            step(&mut s, ev, &mut snapshots, &mut legal);
        } else if roll < 0.85 {
            let ev = Event::Diagnosis {
                diagnosis: dummy_diagnosis(),
            };
            step(&mut s, ev, &mut snapshots, &mut legal);
        } else if roll < 0.93 {
            step(&mut s, Event::Clear, &mut snapshots, &mut legal);
        } else {
            let ev = Event::Confidence {
                modality: Modality::Vascular,
                confidence: conf,
            };
            step(&mut s, ev, &mut snapshots, &mut legal);
        }
    }
    (s, snapshots, legal)
}

/// For every prefix of the session's log, writes the prefix (plus a torn
/// partial copy of the next record, when there is one), recovers it, and
/// compares with the live snapshot. Returns the first failing prefix.
pub fn recovery_mismatch(s: &Session, snapshots: &[Session]) -> Option<usize> {
    let encoded: Vec<Vec<u8>> = s
        .events()
        .iter()
        .map(|r| {
            encode_record(&StoredRecord {
                session_id: s.id().into(),
                record: r.clone(),
            })
            .unwrap()
        })
        .collect();
    let mut log = Vec::new();
    for (k, rec) in encoded.iter().enumerate() {
        log.extend_from_slice(rec);
        let mut torn = log.clone();
        if let Some(next) = encoded.get(k + 1) {
            torn.extend_from_slice(&next[..next.len() / 2]);
        }
        let (records, valid) = decode_log(&torn);
        if valid != log.len() {
            return Some(k);
        }
        let recs: Vec<EventRecord> = records.into_iter().map(|r| r.record).collect();
        match Session::replay(s.id(), &recs) {
            Ok(replayed) if replayed == snapshots[k] => {}
            _ => return Some(k),
        }
    }
    None
}

// ---- faces -------------------------------------------------------------

/// A random face exactly mirror-symmetric about the vertical line x = 0.
/// Left-side points get positive x, so the eyes are always apart.
pub fn symmetric_face(rng: &mut ChaCha8Rng) -> LandmarkSet {
    let mut pts = vec![[0.0; 2]; N_POINTS];
    for i in 0..N_POINTS {
        let j = MIRROR[i];
        if j < i {
            continue;
        }
        let y = rng.random_range(-1.0..1.0);
        if i == j {
            pts[i] = [0.0, y];
        } else {
            let x = rng.random_range(0.05..1.0);
            pts[i] = [x, y];
            pts[j] = [-x, y];
        }
    }
    LandmarkSet::new(pts).unwrap()
}

pub fn similarity(rng: &mut ChaCha8Rng) -> (f64, [f64; 2]) {
    (
        rng.random_range(0.1..10.0),
        [rng.random_range(-1000.0..1000.0), rng.random_range(-1000.0..1000.0)],
    )
}

// ---- gradients ---------------------------------------------------------

pub const GRAD_TOL: f64 = 1e-4;

pub fn random_input(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Largest relative error of analytic against central-difference gradients.
pub fn grad_error(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> f64 {
    let model = Model::new(input_shape.to_vec(), layers, seed).unwrap();
    assert!(model.param_count() <= 2000, "{} parameters", model.param_count());
    let report = grad_check(&model, &random_input(input_shape, seed + 100));
    assert!(report.checked == model.param_count() || model.param_count() == 0);
    report.max_rel_error
}

/// Four conv1d/relu/pool stages, an Elman cell and a dense head: the vocal
/// stack with channel counts shrunk to stay under 2k parameters.
pub fn reduced_vocal_stack() -> (Vec<usize>, Vec<LayerSpec>) {
    let mut layers = Vec::new();
    let mut in_ch = 1;
    for ch in [2, 3, 3, 4] {
        layers.push(LayerSpec::conv1d(in_ch, ch, 3));
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::avgpool1d(2));
        in_ch = ch;
    }
    layers.push(LayerSpec::recurrent(4, 4));
    layers.push(LayerSpec::dense(4, 2));
    // 96 → 94 → 47 → 45 → 22 → 20 → 10 → 8 → 4 steps
    (vec![1, 96], layers)
}

/// conv/relu/pool twice, dense/relu, dense: the retina stack on 16×16 input.
pub fn reduced_retina_stack() -> (Vec<usize>, Vec<LayerSpec>) {
    let layers = vec![
        LayerSpec::conv2d(1, 2, 3),
        LayerSpec::Relu,
        LayerSpec::avgpool2d(2),
        LayerSpec::conv2d(2, 3, 3),
        LayerSpec::Relu,
        LayerSpec::avgpool2d(2),
        LayerSpec::dense(12, 8),
        LayerSpec::Relu,
        LayerSpec::dense(8, 2),
    ];
    // 16 → 14 → 7 → 5 → 2; 3·2·2 = 12
    (vec![1, 16, 16], layers)
}

/// One small network per layer kind, then both reduced stacks.
pub fn gradient_cases() -> Vec<(&'static str, Vec<usize>, Vec<LayerSpec>)> {
    let strided = LayerSpec::Conv1d {
        in_channels: 1,
        out_channels: 2,
        kernel: 3,
        stride: 2,
    };
    let act = |a: LayerSpec| vec![LayerSpec::dense(4, 6), a, LayerSpec::dense(6, 2)];
    let (vs, vl) = reduced_vocal_stack();
    let (rs, rl) = reduced_retina_stack();
    vec![
        ("dense", vec![5], vec![LayerSpec::dense(5, 3)]),
        (
            "conv1d",
            vec![2, 12],
            vec![LayerSpec::conv1d(2, 3, 4), LayerSpec::dense(27, 2)],
        ),
        ("conv1d_strided", vec![1, 11], vec![strided, LayerSpec::dense(10, 2)]),
        (
            "conv2d",
            vec![2, 6, 7],
            vec![LayerSpec::conv2d(2, 3, 3), LayerSpec::dense(60, 2)],
        ),
        (
            "avgpool1d",
            vec![2, 12],
            vec![LayerSpec::avgpool1d(3), LayerSpec::dense(8, 2)],
        ),
        (
            "avgpool2d",
            vec![2, 6, 6],
            vec![LayerSpec::avgpool2d(2), LayerSpec::dense(18, 2)],
        ),
        (
            "recurrent",
            vec![3, 9],
            vec![LayerSpec::recurrent(3, 5), LayerSpec::dense(5, 2)],
        ),
        ("relu", vec![4], act(LayerSpec::Relu)),
        ("sigmoid", vec![4], act(LayerSpec::Sigmoid)),
        ("softmax", vec![4], act(LayerSpec::Softmax)),
        ("vocal_stack", vs, vl),
        ("retina_stack", rs, rl),
    ]
}
