use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use strokescreen::audio::encode_wav;
use strokescreen::detect::ModelSet;
use strokescreen::fusion::FusionInput;
use strokescreen::image::encode_pgm;
use strokescreen::synth::{gen_face, gen_retina, gen_vocal, CorpusSpec, Kind};
use strokescreen::vitals::VitalsSample;
use strokescreen_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ss_last_error()) }.to_str().unwrap().to_string()
}

struct Fixture {
    _dir: tempfile::TempDir,
    models: ModelSet,
    engine: *mut SsEngine,
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe { ss_engine_free(self.engine) };
    }
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let models = ModelSet::smoke(5).unwrap();
    models.save(dir.path()).unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut engine = ptr::null_mut();
    let status = unsafe { ss_engine_open(path.as_ptr(), &mut engine) };
    assert_eq!(status, SsStatus::Ok, "{}", last_error());
    assert!(!engine.is_null());
    Fixture {
        _dir: dir,
        models,
        engine,
    }
}

#[test]
fn open_reports_missing_directory() {
    let path = CString::new("/nonexistent/models").unwrap();
    let mut engine = ptr::NonNull::<SsEngine>::dangling().as_ptr();
    let status = unsafe { ss_engine_open(path.as_ptr(), &mut engine) };
    assert_eq!(status, SsStatus::Io);
    assert!(engine.is_null());
    assert!(last_error().contains("vocal"), "{}", last_error());
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = 0.0;
    let status = unsafe { ss_voice_confidence(ptr::null(), ptr::null(), 0, &mut out) };
    assert_eq!(status, SsStatus::NullArgument);
    assert_eq!(last_error(), "engine is null");
    let status = unsafe { ss_engine_open(ptr::null(), ptr::null_mut()) };
    assert_eq!(status, SsStatus::NullArgument);
    unsafe { ss_engine_free(ptr::null_mut()) };
}

#[test]
fn detector_scores_match_the_library() {
    let f = fixture();
    let spec = |k| CorpusSpec::new(k, 1, 0.3, 9).unwrap();
    let wav = encode_wav(&gen_vocal(&spec(Kind::Vocal))[1].0);
    let pgm = encode_pgm(&gen_retina(&spec(Kind::Retina))[1].0);
    let pts = gen_face(&spec(Kind::Face))[1].0.to_pts().into_bytes();

    let mut out = -1.0;
    unsafe {
        assert_eq!(
            ss_voice_confidence(f.engine, wav.as_ptr(), wav.len(), &mut out),
            SsStatus::Ok
        );
        assert_eq!(out, f.models.voice_from_wav(&wav).unwrap().value());
        assert_eq!(
            ss_retina_confidence(f.engine, pgm.as_ptr(), pgm.len(), &mut out),
            SsStatus::Ok
        );
        assert_eq!(out, f.models.retina_from_image(&pgm).unwrap().value());
        assert_eq!(
            ss_face_confidence(f.engine, pts.as_ptr(), pts.len(), &mut out),
            SsStatus::Ok
        );
        assert_eq!(out, f.models.face_from_pts(&pts).unwrap().value());
    }
    assert_eq!(last_error(), "");
}

#[test]
fn undecodable_bytes_report_decode() {
    let f = fixture();
    let junk = b"not audio";
    let mut out = 0.0;
    let status = unsafe { ss_voice_confidence(f.engine, junk.as_ptr(), junk.len(), &mut out) };
    assert_eq!(status, SsStatus::Decode);
    assert!(!last_error().is_empty());
    let status = unsafe { ss_retina_confidence(f.engine, junk.as_ptr(), junk.len(), &mut out) };
    assert_eq!(status, SsStatus::Decode);
}

#[test]
fn vascular_and_fusion() {
    let f = fixture();
    let v = SsVitals {
        timestamp_ms: 0,
        systolic: 190.0,
        diastolic: 110.0,
        heart_rate: 115.0,
        spo2: 89.0,
    };
    let mut c = 0.0;
    assert_eq!(unsafe { ss_vascular_confidence(f.engine, &v, &mut c) }, SsStatus::Ok);
    let sample = VitalsSample {
        timestamp_ms: 0,
        systolic: 190.0,
        diastolic: 110.0,
        heart_rate: 115.0,
        spo2: 89.0,
    };
    assert_eq!(c, f.models.vascular(&sample).unwrap().value());
    let bad = SsVitals { spo2: 140.0, ..v };
    assert_eq!(
        unsafe { ss_vascular_confidence(f.engine, &bad, &mut c) },
        SsStatus::InvalidArgument
    );

    let input = SsFusionInput {
        vocal: 0.9,
        vascular: 0.8,
        retina: f64::NAN,
        face: 0.7,
    };
    let mut d = SsDiagnosis::default();
    assert_eq!(unsafe { ss_fuse(f.engine, &input, &mut d) }, SsStatus::Ok);
    let mut expected_in = FusionInput::complete(0.9, 0.8, 0.0, 0.7);
    expected_in.retina = None;
    let expected = f.models.fuse(&expected_in).unwrap();
    assert_eq!(d.risk_percent, expected.risk_percent);
    assert_eq!(d.at_risk, expected.at_risk);
    assert_eq!(d.contributions.to_vec(), expected.contributions);
    assert_eq!(d.imputed_mask, 0b0100);

    let no_vascular = SsFusionInput {
        vascular: f64::NAN,
        ..input
    };
    assert_eq!(unsafe { ss_fuse(f.engine, &no_vascular, &mut d) }, SsStatus::Model);
    let out_of_range = SsFusionInput { vocal: 1.5, ..input };
    assert_eq!(
        unsafe { ss_fuse(f.engine, &out_of_range, &mut d) },
        SsStatus::InvalidArgument
    );
}

#[test]
fn metrics() {
    let mut m = SsMetrics::default();
    assert_eq!(unsafe { ss_compute_metrics(3, 1, 2, 4, &mut m) }, SsStatus::Ok);
    assert_eq!(m.precision, 0.75);
    assert_eq!(m.sensitivity, 0.6);
    assert!((m.f_beta - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(m.accuracy, 0.7);
    assert_eq!(unsafe { ss_compute_metrics(0, 0, 0, 5, &mut m) }, SsStatus::Ok);
    assert!(m.precision.is_nan() && m.sensitivity.is_nan() && m.f_beta.is_nan());
    assert_eq!(
        unsafe { ss_compute_metrics(0, 0, 0, 0, &mut m) },
        SsStatus::InvalidArgument
    );
    assert!((ss_f_score(0.951, 0.869) - 0.908).abs() < 5e-4);
    assert_eq!(ss_f_score(0.0, 0.5), 0.0);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(ss_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/strokescreen.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "ss_engine_open",
        "ss_engine_free",
        "ss_voice_confidence",
        "ss_face_confidence",
        "ss_retina_confidence",
        "ss_vascular_confidence",
        "ss_fuse",
        "ss_compute_metrics",
        "ss_f_score",
        "ss_last_error",
        "ss_version",
        "typedef struct SsEngine SsEngine",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(probe) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(probe.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"strokescreen.h\"\nint main(void) { SsMetrics m; return ss_compute_metrics(1, 0, 0, 1, &m); }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
