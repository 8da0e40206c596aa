use std::ffi::{CStr, CString};
use std::ptr;

use fbc_ffi::*;

fn last_error() -> String {
    let p = fbc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn generated(scenario: u32, seed: u64) -> *mut FbcDataset {
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { fbc_dataset_generate(scenario, seed, &mut ds) },
        FbcStatus::Ok
    );
    assert!(!ds.is_null());
    ds
}

fn short(episodes: u64) -> FbcHyperparams {
    FbcHyperparams {
        episodes,
        ..fbc_hyperparams_default()
    }
}

fn train(ds: *const FbcDataset, hp: &FbcHyperparams, schedule: u32) -> (FbcStatus, *mut FbcRun) {
    let mut run = ptr::null_mut();
    let status = unsafe { fbc_train(ds, hp, schedule, 0, &mut run) };
    (status, run)
}

fn metrics(run: *const FbcRun) -> Vec<FbcEpisodeMetrics> {
    let mut n = 0;
    assert_eq!(unsafe { fbc_run_episode_count(run, &mut n) }, FbcStatus::Ok);
    (0..n)
        .map(|i| {
            let mut m = std::mem::MaybeUninit::uninit();
            assert_eq!(
                unsafe { fbc_run_metrics(run, i, m.as_mut_ptr()) },
                FbcStatus::Ok
            );
            unsafe { m.assume_init() }
        })
        .collect()
}

fn params(run: *const FbcRun) -> Vec<f64> {
    let mut n = 0;
    assert_eq!(unsafe { fbc_run_param_count(run, &mut n) }, FbcStatus::Ok);
    let mut buf = vec![0.0; n];
    assert_eq!(
        unsafe { fbc_run_params(run, buf.as_mut_ptr(), n) },
        FbcStatus::Ok
    );
    buf
}

#[test]
fn defaults_match_core() {
    let hp = fbc_hyperparams_default();
    assert_eq!(hp.lambda_adv, 0.5);
    assert_eq!(hp.gamma, 0.1);
    let v = unsafe { CStr::from_ptr(fbc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn cyclic_training_reports_every_episode() {
    let ds = generated(FBC_SCENARIO_SHIFT_GAUSS, 0);
    let (status, run) = train(ds, &short(4), FBC_SCHEDULE_CYCLIC);
    assert_eq!(status, FbcStatus::Ok);
    let m = metrics(run);
    assert_eq!(m.len(), 4);
    for (i, e) in m.iter().enumerate() {
        assert_eq!(e.episode, i as u64);
        assert!(e.target_loss.is_finite());
        assert!((0.0..=1.0).contains(&e.target_accuracy));
        assert!(e.pseudo_label_count >= 0);
        assert!(e.proxy_a_distance.is_nan());
    }
    let (_, again) = train(ds, &short(4), FBC_SCHEDULE_CYCLIC);
    assert_eq!(params(run), params(again));
    unsafe {
        fbc_run_free(run);
        fbc_run_free(again);
        fbc_dataset_free(ds);
    }
}

#[test]
fn source_only_marks_absent_fields() {
    let ds = generated(FBC_SCENARIO_FOG, 1);
    let (status, run) = train(ds, &short(2), FBC_SCHEDULE_SOURCE_ONLY);
    assert_eq!(status, FbcStatus::Ok);
    let last = *metrics(run).last().unwrap();
    assert!(last.target_loss.is_nan());
    assert_eq!(last.pseudo_label_count, -1);
    assert!(last.target_accuracy.is_finite());
    unsafe {
        fbc_run_free(run);
        fbc_dataset_free(ds);
    }
}

#[test]
fn saved_dataset_round_trips_through_load() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generated(FBC_SCENARIO_FOG, 5);
    assert_eq!(
        unsafe { fbc_dataset_save(ds, cstr(dir.path()).as_ptr()) },
        FbcStatus::Ok
    );
    let mut loaded = ptr::null_mut();
    let status = unsafe {
        fbc_dataset_load(
            cstr(&dir.path().join("source.csv")).as_ptr(),
            cstr(&dir.path().join("target.csv")).as_ptr(),
            cstr(&dir.path().join("hidden_labels.csv")).as_ptr(),
            3,
            &mut loaded,
        )
    };
    assert_eq!(status, FbcStatus::Ok, "{}", last_error());
    let (mut a, mut b) = ((0, 0), (0, 0));
    unsafe {
        fbc_dataset_counts(ds, &mut a.0, &mut a.1);
        fbc_dataset_counts(loaded, &mut b.0, &mut b.1);
    }
    assert_eq!(a, b);
    let (_, r1) = train(ds, &short(2), FBC_SCHEDULE_JOINT);
    let (_, r2) = train(loaded, &short(2), FBC_SCHEDULE_JOINT);
    let bits = |r| format!("{:?}", metrics(r));
    assert_eq!(bits(r1), bits(r2));
    assert_eq!(params(r1), params(r2));

    let m = dir.path().join("m.jsonl");
    let p = dir.path().join("p.csv");
    unsafe {
        assert_eq!(fbc_run_write_metrics(r1, cstr(&m).as_ptr()), FbcStatus::Ok);
        assert_eq!(fbc_run_save_params(r1, cstr(&p).as_ptr()), FbcStatus::Ok);
    }
    assert_eq!(std::fs::read_to_string(m).unwrap().lines().count(), 2);
    assert!(std::fs::read_to_string(p)
        .unwrap()
        .starts_with("segment,index,value"));
    unsafe {
        fbc_run_free(r1);
        fbc_run_free(r2);
        fbc_dataset_free(ds);
        fbc_dataset_free(loaded);
    }
}

#[test]
fn invalid_arguments_set_status_and_message() {
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { fbc_dataset_generate(7, 0, &mut ds) },
        FbcStatus::InvalidArgument
    );
    assert!(last_error().contains("scenario"));
    assert!(ds.is_null());

    assert_eq!(
        unsafe { fbc_dataset_generate(0, 0, ptr::null_mut()) },
        FbcStatus::NullPointer
    );
    assert!(last_error().contains("out"));

    let ds = generated(FBC_SCENARIO_SHIFT_GAUSS, 0);
    let (status, run) = train(ds, &short(1), 9);
    assert_eq!(status, FbcStatus::InvalidArgument);
    assert!(run.is_null());

    let bad = FbcHyperparams {
        alpha: -1.0,
        ..short(1)
    };
    assert_eq!(train(ds, &bad, FBC_SCHEDULE_CYCLIC).0, FbcStatus::Config);
    assert!(last_error().contains("alpha"));

    let (_, run) = train(ds, &short(1), FBC_SCHEDULE_CYCLIC);
    let mut buf = [0.0; 3];
    assert_eq!(
        unsafe { fbc_run_params(run, buf.as_mut_ptr(), 3) },
        FbcStatus::InvalidArgument
    );
    let mut m = std::mem::MaybeUninit::uninit();
    assert_eq!(
        unsafe { fbc_run_metrics(run, 1, m.as_mut_ptr()) },
        FbcStatus::InvalidArgument
    );
    unsafe {
        fbc_run_free(run);
        fbc_dataset_free(ds);
        fbc_dataset_free(ptr::null_mut());
        fbc_run_free(ptr::null_mut());
    }
}

#[test]
fn load_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let missing = cstr(&dir.path().join("absent.csv"));
    let mut ds = ptr::null_mut();
    let status =
        unsafe { fbc_dataset_load(missing.as_ptr(), missing.as_ptr(), ptr::null(), 3, &mut ds) };
    assert_eq!(status, FbcStatus::Io);
    assert!(last_error().contains("absent.csv"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "domain,scene_id,instance_id,label,f0\nsource,0,0,x,1.0\n",
    )
    .unwrap();
    let status = unsafe {
        fbc_dataset_load(
            cstr(&bad).as_ptr(),
            cstr(&bad).as_ptr(),
            ptr::null(),
            3,
            &mut ds,
        )
    };
    assert_eq!(status, FbcStatus::Parse);
    assert!(last_error().contains("bad.csv:2"), "{}", last_error());
}

#[test]
fn verify_passes_and_detects_grl_fault() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("v.json");
    assert_eq!(
        unsafe { fbc_verify(false, cstr(&report).as_ptr()) },
        FbcStatus::Ok
    );
    assert!(std::fs::read_to_string(&report)
        .unwrap()
        .contains("\"passed\": true"));
    assert_eq!(
        unsafe { fbc_verify(true, ptr::null()) },
        FbcStatus::VerifyFailed
    );
    assert!(last_error().contains("grl_extractor_negation"));
}
