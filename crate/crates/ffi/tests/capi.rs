//! Exercises the C ABI from Rust: handle lifecycle, prediction parity with
//! the library call, and every error path.

use std::ffi::{CStr, CString};

use archpred::archspace::{sample, SearchSpaceConfig};
use archpred::predictor::{
    build_training_samples, predict, train, PredictorConfig, PredictorModel, TrainingConfig,
};
use archpred::store::{generate_synthetic_corpus, DatasetMeta, DatasetRegistry};

use archpred_ffi::{
    archpred_last_error, archpred_model_free, archpred_model_load, archpred_predict_json,
    archpred_version, ArchPredModel, ArchPredStatus,
};

fn trained_model_file(dir: &std::path::Path) -> (std::path::PathBuf, PredictorModel) {
    let metas = vec![
        DatasetMeta { id: "a".into(), name: "a".into(), dcn: 0.2, num_classes: 10 },
        DatasetMeta { id: "b".into(), name: "b".into(), dcn: 0.6, num_classes: 10 },
    ];
    let records = generate_synthetic_corpus(
        &metas,
        10,
        &SearchSpaceConfig::default(),
        31,
        "1970-01-01T00:00:00Z",
    )
    .unwrap();
    let registry = DatasetRegistry::new(metas).unwrap();
    let samples = build_training_samples(&records, &registry).unwrap();
    let tcfg = TrainingConfig { epochs: 2, seed: 1, ..TrainingConfig::default() };
    let model = train(&samples, &tcfg, &PredictorConfig::default()).unwrap();
    let path = dir.join("model.json");
    model.save(&path).unwrap();
    (path, model)
}

fn last_error_text() -> String {
    let ptr = archpred_last_error();
    assert!(!ptr.is_null());
    unsafe { CStr::from_ptr(ptr) }.to_str().unwrap().to_string()
}

#[test]
fn version_is_a_valid_string() {
    let version = unsafe { CStr::from_ptr(archpred_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn load_predict_free_round_trip_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, model) = trained_model_file(dir.path());

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut ArchPredModel = std::ptr::null_mut();
    let status = unsafe { archpred_model_load(c_path.as_ptr(), &mut handle) };
    assert_eq!(status, ArchPredStatus::Ok);
    assert!(!handle.is_null());

    let space = SearchSpaceConfig::default();
    for seed in 0..10u64 {
        let arch = sample(&space, 10, seed).unwrap();
        let json = CString::new(arch.to_json()).unwrap();
        let mut accuracy = f64::NAN;
        let status = unsafe {
            archpred_predict_json(handle, json.as_ptr(), 0.4, 10, &mut accuracy)
        };
        assert_eq!(status, ArchPredStatus::Ok);
        assert_eq!(accuracy, predict(&arch, 0.4, 10, &model).unwrap());
    }

    unsafe { archpred_model_free(handle) };
}

#[test]
fn missing_file_reports_io_error() {
    let mut handle: *mut ArchPredModel = std::ptr::null_mut();
    let c_path = CString::new("/nonexistent/model.json").unwrap();
    let status = unsafe { archpred_model_load(c_path.as_ptr(), &mut handle) };
    assert_eq!(status, ArchPredStatus::Io);
    assert!(handle.is_null());
    assert!(last_error_text().contains("/nonexistent/model.json"));
}

#[test]
fn corrupt_model_reports_parse_or_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{not json").unwrap();
    let mut handle: *mut ArchPredModel = std::ptr::null_mut();
    let c_path = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { archpred_model_load(c_path.as_ptr(), &mut handle) },
        ArchPredStatus::Parse
    );
}

#[test]
fn null_and_range_arguments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = trained_model_file(dir.path());
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut ArchPredModel = std::ptr::null_mut();
    assert_eq!(
        unsafe { archpred_model_load(std::ptr::null(), &mut handle) },
        ArchPredStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { archpred_model_load(c_path.as_ptr(), std::ptr::null_mut()) },
        ArchPredStatus::InvalidArgument
    );

    unsafe { archpred_model_load(c_path.as_ptr(), &mut handle) };
    let arch = sample(&SearchSpaceConfig::default(), 10, 0).unwrap();
    let json = CString::new(arch.to_json()).unwrap();
    let mut accuracy = 0.0;
    assert_eq!(
        unsafe { archpred_predict_json(handle, json.as_ptr(), 1.5, 10, &mut accuracy) },
        ArchPredStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { archpred_predict_json(handle, json.as_ptr(), 0.4, 1, &mut accuracy) },
        ArchPredStatus::InvalidArgument
    );
    assert_eq!(
        unsafe {
            archpred_predict_json(std::ptr::null(), json.as_ptr(), 0.4, 10, &mut accuracy)
        },
        ArchPredStatus::InvalidArgument
    );
    unsafe { archpred_model_free(handle) };
}

#[test]
fn invalid_architecture_json_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = trained_model_file(dir.path());
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut ArchPredModel = std::ptr::null_mut();
    unsafe { archpred_model_load(c_path.as_ptr(), &mut handle) };

    let mut accuracy = 0.0;
    let bad_json = CString::new("{\"v\":1,\"layers\":[{\"kind\":\"warp\"}]}").unwrap();
    assert_eq!(
        unsafe { archpred_predict_json(handle, bad_json.as_ptr(), 0.4, 10, &mut accuracy) },
        ArchPredStatus::Parse
    );

    // Well-formed JSON, invalid architecture (empty backbone).
    let empty = CString::new("{\"v\":1,\"layers\":[]}").unwrap();
    assert_eq!(
        unsafe { archpred_predict_json(handle, empty.as_ptr(), 0.4, 10, &mut accuracy) },
        ArchPredStatus::InvalidArchitecture
    );
    assert!(last_error_text().contains("no layers"));

    unsafe { archpred_model_free(handle) };
    unsafe { archpred_model_free(std::ptr::null_mut()) };
}
