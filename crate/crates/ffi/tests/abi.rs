use std::ffi::{CStr, CString};
use std::ptr;

use angcn_ffi::*;

fn last_error() -> String {
    let p = angcn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(s: &std::path::Path) -> CString {
    CString::new(s.to_str().unwrap()).unwrap()
}

fn synthetic(n: usize, seed: u64) -> *mut AngcnBundle {
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { angcn_bundle_synthetic(n, seed, &mut b) }, AngcnStatus::Ok);
    assert!(!b.is_null());
    b
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(angcn_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn bundle_save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let b = synthetic(40, 2);
    assert_eq!(unsafe { angcn_bundle_len(b) }, 40);
    let cols = unsafe { angcn_bundle_feature_count(b) };
    assert!(cols > 0);
    let path = cstr(dir.path());
    assert_eq!(unsafe { angcn_bundle_save(b, path.as_ptr()) }, AngcnStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { angcn_bundle_load(path.as_ptr(), &mut loaded) }, AngcnStatus::Ok);
    assert_eq!(unsafe { angcn_bundle_len(loaded) }, 40);
    assert_eq!(unsafe { angcn_bundle_feature_count(loaded) }, cols);
    unsafe {
        angcn_bundle_free(b);
        angcn_bundle_free(loaded);
    }
}

#[test]
fn null_arguments_are_reported() {
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { angcn_bundle_load(ptr::null(), &mut b) }, AngcnStatus::NullPointer);
    assert!(last_error().contains("path"));
    assert!(b.is_null());
    assert_eq!(unsafe { angcn_bundle_len(ptr::null()) }, 0);
    unsafe { angcn_bundle_free(ptr::null_mut()) };
    unsafe { angcn_checkpoint_free(ptr::null_mut()) };
    assert_eq!(unsafe { angcn_gradcheck(0, ptr::null_mut()) }, AngcnStatus::NullPointer);
}

#[test]
fn missing_directory_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(&dir.path().join("absent"));
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { angcn_bundle_load(path.as_ptr(), &mut b) }, AngcnStatus::Io);
    assert!(!last_error().is_empty());
}

#[test]
fn invalid_utf8_path() {
    let bytes = CString::new(vec![0xff, 0xfe]).unwrap();
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { angcn_bundle_load(bytes.as_ptr(), &mut b) }, AngcnStatus::InvalidUtf8);
}

#[test]
fn evaluate_scores_matches_library() {
    let scores = [0.9, 0.2, 0.7, 0.4, 0.6, 0.1];
    let labels = [1u8, 0, 1, 1, 0, 0];
    let mut out = AngcnReport::default();
    let st = unsafe { angcn_evaluate_scores(scores.as_ptr(), labels.as_ptr(), 6, &mut out) };
    assert_eq!(st, AngcnStatus::Ok);
    let lib = angcn::metrics::evaluate(&scores, &[1, 0, 1, 1, 0, 0]).unwrap();
    assert_eq!(out.accuracy, lib.accuracy);
    assert_eq!(out.auc, lib.auc);
    assert_eq!(out.mcc, lib.mcc);
    assert!((out.auc - 8.0 / 9.0).abs() < 1e-12);
}

#[test]
fn evaluate_scores_rejects_bad_labels() {
    let scores = [0.5, 0.5];
    let labels = [0u8, 2];
    let mut out = AngcnReport::default();
    let st = unsafe { angcn_evaluate_scores(scores.as_ptr(), labels.as_ptr(), 2, &mut out) };
    assert_eq!(st, AngcnStatus::InvalidInput);
}

#[test]
fn gradcheck_is_accurate() {
    let mut err = f64::NAN;
    assert_eq!(unsafe { angcn_gradcheck(3, &mut err) }, AngcnStatus::Ok);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn cross_validate_with_json_config() {
    let b = synthetic(48, 4);
    let cfg = CString::new(r#"{"folds":3,"max_epochs":15,"hidden_dim":8,"layers":3,"seed":9}"#).unwrap();
    let mut first = AngcnReport::default();
    let mut second = AngcnReport::default();
    assert_eq!(unsafe { angcn_cross_validate(b, cfg.as_ptr(), &mut first) }, AngcnStatus::Ok);
    assert_eq!(unsafe { angcn_cross_validate(b, cfg.as_ptr(), &mut second) }, AngcnStatus::Ok);
    assert_eq!(first, second);
    assert!((0.0..=1.0).contains(&first.accuracy));

    let bad = CString::new(r#"{"folds":3,"no_such_field":1}"#).unwrap();
    assert_eq!(unsafe { angcn_cross_validate(b, bad.as_ptr(), &mut first) }, AngcnStatus::Parse);
    assert!(last_error().contains("no_such_field"));
    unsafe { angcn_bundle_free(b) };
}

#[test]
fn checkpoint_evaluation_matches_training_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("run");
    let argv = |args: &[&str]| {
        std::iter::once("angcn".to_string())
            .chain(args.iter().map(|s| s.to_string()))
            .map(std::ffi::OsString::from)
            .collect::<Vec<_>>()
    };
    let d = data.to_str().unwrap();
    let o = out.to_str().unwrap();
    assert_eq!(angcn::cli::run(argv(&["synth", "--out", d, "--n-subjects", "40", "--seed", "1"])), 0);
    assert_eq!(
        angcn::cli::run(argv(&[
            "train", "--data", d, "--out", o, "--folds", "2", "--epochs", "10", "--hidden", "8", "--layers", "2",
        ])),
        0
    );
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();

    let mut bundle = ptr::null_mut();
    assert_eq!(unsafe { angcn_bundle_load(cstr(&data).as_ptr(), &mut bundle) }, AngcnStatus::Ok);
    let mut ck = ptr::null_mut();
    let ck_path = cstr(&out.join("checkpoints").join("fold-01.json"));
    assert_eq!(unsafe { angcn_checkpoint_load(ck_path.as_ptr(), &mut ck) }, AngcnStatus::Ok);
    let mut report = AngcnReport::default();
    assert_eq!(unsafe { angcn_checkpoint_evaluate(ck, bundle, &mut report) }, AngcnStatus::Ok);
    assert_eq!(report.accuracy, metrics["folds"][1]["accuracy"].as_f64().unwrap());
    assert_eq!(report.auc, metrics["folds"][1]["auc"].as_f64().unwrap());

    let mut other = ptr::null_mut();
    assert_eq!(unsafe { angcn_bundle_synthetic(40, 99, &mut other) }, AngcnStatus::Ok);
    assert_ne!(unsafe { angcn_checkpoint_evaluate(ck, other, &mut report) }, AngcnStatus::Ok);
    unsafe {
        angcn_checkpoint_free(ck);
        angcn_bundle_free(bundle);
        angcn_bundle_free(other);
    }
}
