//! C ABI over `fbc-core`.
//!
//! Every fallible function returns an [`FbcStatus`]. On failure the message
//! is available from [`fbc_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use fbc_core::eval::{HiddenLabelEvaluator, TargetEvaluator};
use fbc_core::models::ModelShape;
use fbc_core::numeric::ParamVector;
use fbc_core::objectives::Hyperparams;
use fbc_core::synthdata::{
    generate, load_hidden_labels, load_source, load_target, save_hidden_labels, save_source,
    save_target, HiddenLabels, Scenario, ScenarioSpec, SourceScene, TargetScene,
};
use fbc_core::trainer::{
    run, save_params, write_metrics_jsonl, EpisodeMetrics, Schedule, TrainConfig,
};
use fbc_core::verify::{run_suite, VerifyOptions};
use fbc_core::Error;

pub const FBC_SCENARIO_SHIFT_GAUSS: u32 = 0;
pub const FBC_SCENARIO_FOG: u32 = 1;

pub const FBC_SCHEDULE_CYCLIC: u32 = 0;
pub const FBC_SCHEDULE_JOINT: u32 = 1;
pub const FBC_SCHEDULE_SOURCE_ONLY: u32 = 2;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FbcStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad enum value, non-UTF-8 string or wrong buffer length.
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    Io = 5,
    /// Shape, label or layout inconsistency in the data.
    Data = 6,
    /// Training hit a non-finite loss or parameter.
    Numeric = 7,
    /// The verification suite ran and at least one check failed.
    VerifyFailed = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FbcHyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda_adv: f64,
    pub episodes: u64,
    pub tau: f64,
}

/// One episode of training metrics. Absent optional values are NaN, or -1
/// for `pseudo_label_count`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FbcEpisodeMetrics {
    pub episode: u64,
    pub source_loss: f64,
    pub target_loss: f64,
    pub grad_inner_product: f64,
    pub source_entropy: f64,
    pub target_entropy: f64,
    pub target_accuracy: f64,
    pub pseudo_label_count: i64,
    pub proxy_a_distance: f64,
}

/// Source scenes, target scenes and optionally the target's hidden labels.
pub struct FbcDataset {
    source: Vec<SourceScene>,
    target: Vec<TargetScene>,
    hidden: Option<HiddenLabels>,
    categories: usize,
}

/// Metrics and final parameters of a training run.
pub struct FbcRun {
    metrics: Vec<EpisodeMetrics>,
    params: ParamVector,
}

struct Failure {
    status: FbcStatus,
    message: String,
}

impl Failure {
    fn new(status: FbcStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NonFiniteLoss { .. } | Error::NonFiniteParams | Error::DegenerateDirection => {
                FbcStatus::Numeric
            }
            Error::Config { .. } => FbcStatus::Config,
            Error::Parse { .. } => FbcStatus::Parse,
            Error::Io { .. } => FbcStatus::Io,
            Error::Shape(_) | Error::Label { .. } | Error::LayoutMismatch | Error::Data(_) => {
                FbcStatus::Data
            }
        };
        Failure::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FbcStatus {
    let failure = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return FbcStatus::Ok,
        Ok(Err(f)) => f,
        Err(panic) => {
            let what = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Failure::new(FbcStatus::Panic, format!("panic: {what}"))
        }
    };
    set_last_error(failure.message);
    failure.status
}

fn non_null<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass either null or a pointer obtained from this library
    // or a live caller-owned value.
    unsafe { ptr.as_ref() }
        .ok_or_else(|| Failure::new(FbcStatus::NullPointer, format!("`{name}` is null")))
}

fn out_ptr<T>(ptr: *mut T, name: &str) -> Result<&'static mut T, Failure> {
    // SAFETY: as for `non_null`; the caller owns the output slot.
    unsafe { ptr.as_mut() }
        .ok_or_else(|| Failure::new(FbcStatus::NullPointer, format!("`{name}` is null")))
}

fn path_arg(ptr: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(Failure::new(
            FbcStatus::NullPointer,
            format!("`{name}` is null"),
        ));
    }
    // SAFETY: non-null and documented to be a nul-terminated string.
    let s = unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| Failure::new(FbcStatus::InvalidArgument, format!("`{name}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn optional_path(ptr: *const c_char, name: &str) -> Result<Option<PathBuf>, Failure> {
    if ptr.is_null() {
        Ok(None)
    } else {
        path_arg(ptr, name).map(Some)
    }
}

fn nan_if_none(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Message of the most recent failed call on this thread, or null. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fbc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn fbc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default hyperparameters.
#[no_mangle]
pub extern "C" fn fbc_hyperparams_default() -> FbcHyperparams {
    let hp = Hyperparams::default();
    FbcHyperparams {
        alpha: hp.alpha,
        beta: hp.beta,
        gamma: hp.gamma,
        lambda_adv: hp.lambda_adv,
        episodes: hp.episodes as u64,
        tau: hp.tau,
    }
}

/// Generates the preset dataset of a scenario (`FBC_SCENARIO_*`).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn fbc_dataset_generate(
    scenario: u32,
    seed: u64,
    out: *mut *mut FbcDataset,
) -> FbcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let scenario = match scenario {
            FBC_SCENARIO_SHIFT_GAUSS => Scenario::ShiftGauss,
            FBC_SCENARIO_FOG => Scenario::Fog,
            other => {
                return Err(Failure::new(
                    FbcStatus::InvalidArgument,
                    format!("unknown scenario {other}"),
                ))
            }
        };
        let spec = ScenarioSpec::preset(scenario, seed);
        let data = generate(&spec)?;
        *out = Box::into_raw(Box::new(FbcDataset {
            source: data.source,
            target: data.target,
            hidden: Some(data.hidden),
            categories: spec.categories,
        }));
        Ok(())
    })
}

/// Loads a dataset from CSV files. `hidden_labels_path` may be null.
///
/// # Safety
/// Paths must be null or nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fbc_dataset_load(
    source_path: *const c_char,
    target_path: *const c_char,
    hidden_labels_path: *const c_char,
    categories: usize,
    out: *mut *mut FbcDataset,
) -> FbcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if categories == 0 {
            return Err(Failure::new(
                FbcStatus::InvalidArgument,
                "`categories` must be at least 1",
            ));
        }
        let source = load_source(path_arg(source_path, "source_path")?)?;
        let target = load_target(path_arg(target_path, "target_path")?)?;
        let hidden = optional_path(hidden_labels_path, "hidden_labels_path")?
            .map(load_hidden_labels)
            .transpose()?;
        *out = Box::into_raw(Box::new(FbcDataset {
            source,
            target,
            hidden,
            categories,
        }));
        Ok(())
    })
}

/// Writes `source.csv`, `target.csv` and, when present, `hidden_labels.csv`
/// into an existing directory.
///
/// # Safety
/// `dataset` must be a live handle; `dir` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fbc_dataset_save(
    dataset: *const FbcDataset,
    dir: *const c_char,
) -> FbcStatus {
    guard(|| {
        let ds = non_null(dataset, "dataset")?;
        let dir = path_arg(dir, "dir")?;
        save_source(dir.join("source.csv"), &ds.source)?;
        save_target(dir.join("target.csv"), &ds.target)?;
        if let Some(h) = &ds.hidden {
            save_hidden_labels(dir.join("hidden_labels.csv"), h)?;
        }
        Ok(())
    })
}

/// Scene counts of a dataset; either output may be null.
///
/// # Safety
/// `dataset` must be a live handle; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn fbc_dataset_counts(
    dataset: *const FbcDataset,
    source_scenes: *mut usize,
    target_scenes: *mut usize,
) -> FbcStatus {
    guard(|| {
        let ds = non_null(dataset, "dataset")?;
        if let Some(s) = source_scenes.as_mut() {
            *s = ds.source.len();
        }
        if let Some(t) = target_scenes.as_mut() {
            *t = ds.target.len();
        }
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fbc_dataset_free(dataset: *mut FbcDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Trains on a dataset with a schedule (`FBC_SCHEDULE_*`). When the dataset
/// carries hidden labels, target accuracy is recorded per episode.
///
/// On a numeric failure the function returns `Numeric` and still stores a
/// run handle holding the completed episodes and last finite parameters.
///
/// # Safety
/// `dataset` and `hp` must be valid pointers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fbc_train(
    dataset: *const FbcDataset,
    hp: *const FbcHyperparams,
    schedule: u32,
    seed: u64,
    out: *mut *mut FbcRun,
) -> FbcStatus {
    guard(|| {
        let ds = non_null(dataset, "dataset")?;
        let raw = non_null(hp, "hp")?;
        let out = out_ptr(out, "out")?;
        let schedule = match schedule {
            FBC_SCHEDULE_CYCLIC => Schedule::Cyclic,
            FBC_SCHEDULE_JOINT => Schedule::Joint,
            FBC_SCHEDULE_SOURCE_ONLY => Schedule::SourceOnly,
            other => {
                return Err(Failure::new(
                    FbcStatus::InvalidArgument,
                    format!("unknown schedule {other}"),
                ))
            }
        };
        let episodes = usize::try_from(raw.episodes).map_err(|_| {
            Failure::new(
                FbcStatus::InvalidArgument,
                "`episodes` does not fit in size_t",
            )
        })?;
        let hp = Hyperparams {
            alpha: raw.alpha,
            beta: raw.beta,
            gamma: raw.gamma,
            lambda_adv: raw.lambda_adv,
            episodes,
            tau: raw.tau,
        };
        hp.validate()?;
        let shape = ModelShape {
            d_in: ds.source.first().map_or(0, |s| s.features.cols()),
            categories: ds.categories,
            ..ModelShape::default()
        };
        let evaluator = ds
            .hidden
            .clone()
            .map(|h| HiddenLabelEvaluator::new(ds.target.clone(), h))
            .transpose()?;
        let cfg = TrainConfig {
            shape,
            ..TrainConfig::new(hp, schedule, seed)
        };
        let outcome = run(
            &cfg,
            &ds.source,
            &ds.target,
            evaluator.as_ref().map(|e| e as &dyn TargetEvaluator),
        )?;
        *out = Box::into_raw(Box::new(FbcRun {
            metrics: outcome.metrics,
            params: outcome.params,
        }));
        match outcome.failure {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    })
}

/// Number of completed episodes.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fbc_run_episode_count(run: *const FbcRun, count: *mut usize) -> FbcStatus {
    guard(|| {
        *out_ptr(count, "count")? = non_null(run, "run")?.metrics.len();
        Ok(())
    })
}

/// Metrics of episode `index`.
///
/// # Safety
/// `run` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fbc_run_metrics(
    run: *const FbcRun,
    index: usize,
    out: *mut FbcEpisodeMetrics,
) -> FbcStatus {
    guard(|| {
        let r = non_null(run, "run")?;
        let out = out_ptr(out, "out")?;
        let m = r.metrics.get(index).ok_or_else(|| {
            Failure::new(
                FbcStatus::InvalidArgument,
                format!(
                    "episode {index} out of range ({} recorded)",
                    r.metrics.len()
                ),
            )
        })?;
        *out = FbcEpisodeMetrics {
            episode: m.episode as u64,
            source_loss: m.source_loss,
            target_loss: nan_if_none(m.target_loss),
            grad_inner_product: m.grad_inner_product,
            source_entropy: m.source_entropy,
            target_entropy: m.target_entropy,
            target_accuracy: nan_if_none(m.target_accuracy),
            pseudo_label_count: m.pseudo_label_count.map_or(-1, |c| c as i64),
            proxy_a_distance: nan_if_none(m.proxy_a_distance),
        };
        Ok(())
    })
}

/// Number of model parameters.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fbc_run_param_count(run: *const FbcRun, count: *mut usize) -> FbcStatus {
    guard(|| {
        *out_ptr(count, "count")? = non_null(run, "run")?.params.len();
        Ok(())
    })
}

/// Copies the final parameters into `buffer`, whose length must equal the
/// parameter count.
///
/// # Safety
/// `buffer` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fbc_run_params(
    run: *const FbcRun,
    buffer: *mut f64,
    len: usize,
) -> FbcStatus {
    guard(|| {
        let r = non_null(run, "run")?;
        if buffer.is_null() {
            return Err(Failure::new(FbcStatus::NullPointer, "`buffer` is null"));
        }
        let values = r.params.values();
        if len != values.len() {
            return Err(Failure::new(
                FbcStatus::InvalidArgument,
                format!("buffer holds {len} values, model has {}", values.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buffer, len).copy_from_slice(values);
        Ok(())
    })
}

/// Writes the metrics as JSON lines.
///
/// # Safety
/// `run` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fbc_run_write_metrics(
    run: *const FbcRun,
    path: *const c_char,
) -> FbcStatus {
    guard(|| {
        let r = non_null(run, "run")?;
        let path = path_arg(path, "path")?;
        let io = |e| Failure::from(Error::io(&path, e));
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        write_metrics_jsonl(&mut w, &r.metrics).map_err(io)?;
        w.flush().map_err(io)
    })
}

/// Writes the final parameters as `segment,index,value` CSV.
///
/// # Safety
/// `run` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fbc_run_save_params(run: *const FbcRun, path: *const c_char) -> FbcStatus {
    guard(|| {
        let r = non_null(run, "run")?;
        save_params(path_arg(path, "path")?, &r.params)?;
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fbc_run_free(run: *mut FbcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Runs the numerical verification suite. Returns `VerifyFailed` when a
/// check fails. `report_path` may be null; otherwise the JSON report is
/// written there.
///
/// # Safety
/// `report_path` must be null or a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fbc_verify(perturb_grl: bool, report_path: *const c_char) -> FbcStatus {
    guard(|| {
        let path = optional_path(report_path, "report_path")?;
        let report = run_suite(VerifyOptions { perturb_grl });
        if let Some(p) = path {
            std::fs::write(&p, report.to_json()).map_err(|e| Failure::from(Error::io(&p, e)))?;
        }
        if report.passed {
            Ok(())
        } else {
            let failed: Vec<&str> = report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            Err(Failure::new(
                FbcStatus::VerifyFailed,
                format!(
                    "{} of {} checks failed: {}",
                    report.failed,
                    report.total,
                    failed.join(", ")
                ),
            ))
        }
    })
}
