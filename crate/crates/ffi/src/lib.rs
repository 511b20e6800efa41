//! C ABI for the fedmobile simulator.
//!
//! Objects cross the boundary as opaque handles (`FmConfig`, `FmResults`,
//! `FmModel`) that the caller releases with the matching `*_free` function.
//! Every fallible call returns an [`FmStatus`]; on failure the message is
//! available from [`fm_last_error`] on the same thread. Panics are caught and
//! reported as `FM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use libc::{c_char, size_t};

use fedmobile::experiment::{run_seeds, write_results, ExperimentConfig, ResultRow, Split};
use fedmobile::fl::fedavg_aggregate;
use fedmobile::metrics::{confusion, pr_auc, precision_recall_f1};
use fedmobile::nn::{forward, xavier_init, ArchitectureSpec, DenseMatrix, ModelInput, ModelKind, ModelParams};
use fedmobile::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    Numeric = 5,
    Io = 6,
    Runtime = 7,
    OutOfRange = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FmSplit {
    Train = 0,
    Val = 1,
    Test = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FmModelKind {
    Mlp = 0,
    Gcn = 1,
}

/// One row of the results table. Algorithm and model names are available
/// through [`fm_results_algorithm`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FmResultRow {
    pub seed: u64,
    pub round: u64,
    pub split: FmSplit,
    pub f1: f64,
    pub pr_auc: f64,
    pub ce: f64,
    pub cr: f64,
    pub kd: f64,
    pub reg: f64,
}

pub struct FmConfig(ExperimentConfig);

pub struct FmResults {
    rows: Vec<ResultRow>,
    models: Vec<(u64, ModelParams)>,
}

pub struct FmModel(ModelParams);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(e: &Error) -> FmStatus {
    match e {
        Error::Parse { .. } => FmStatus::Parse,
        Error::Config(_) => FmStatus::Config,
        Error::Numeric(_) => FmStatus::Numeric,
        Error::Io { .. } => FmStatus::Io,
        Error::Input(_) | Error::Dimension(_) | Error::DegenerateInput(_) | Error::UndefinedMetric(_) => {
            FmStatus::InvalidArgument
        }
        Error::Seed { source, .. } => status_of(source),
        Error::State(_) | Error::Aggregation(_) | Error::Round { .. } => FmStatus::Runtime,
    }
}

struct Failure(FmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and last-error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FmStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            FmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: size_t, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(FmStatus::Runtime, "string contains a NUL byte".into()))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn fm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a config with built-in defaults.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_config_default(out: *mut *mut FmConfig) -> FmStatus {
    guard(|| {
        *out_arg(out, "out")? = Box::into_raw(Box::new(FmConfig(ExperimentConfig::default())));
        Ok(())
    })
}

/// Parses `key = value` config text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_config_parse(text: *const c_char, out: *mut *mut FmConfig) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = ExperimentConfig::parse(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(FmConfig(cfg)));
        Ok(())
    })
}

/// Sets one key and revalidates the config.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn fm_config_set(cfg: *mut FmConfig, key: *const c_char, value: *const c_char) -> FmStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let setting = format!("{}={}", str_arg(key, "key")?, str_arg(value, "value")?);
        cfg.0.apply_overrides(&[setting])?;
        Ok(())
    })
}

/// Current value of `key` as a new string; free with [`fm_string_free`].
///
/// # Safety
/// `cfg` must be a live handle, `key` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_config_get(cfg: *const FmConfig, key: *const c_char, out: *mut *mut c_char) -> FmStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let out = out_arg(out, "out")?;
        *out = into_c_string(cfg.0.get(str_arg(key, "key")?)?)?;
        Ok(())
    })
}

/// Whole config in `key = value` form; free with [`fm_string_free`].
///
/// # Safety
/// `cfg` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_config_serialize(cfg: *const FmConfig, out: *mut *mut c_char) -> FmStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        *out_arg(out, "out")? = into_c_string(cfg.0.serialize())?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_config_free(cfg: *mut FmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured experiment over all its seeds.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_run_experiment(cfg: *const FmConfig, out: *mut *mut FmResults) -> FmStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let out = out_arg(out, "out")?;
        let runs = run_seeds(&cfg.0)?;
        let rows = runs.iter().flat_map(|r| r.rows.iter().cloned()).collect();
        let models = runs.into_iter().map(|r| (r.seed, r.model)).collect();
        *out = Box::into_raw(Box::new(FmResults { rows, models }));
        Ok(())
    })
}

/// # Safety
/// `res` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_results_len(res: *const FmResults, out: *mut size_t) -> FmStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(res, "res")?.rows.len();
        Ok(())
    })
}

/// # Safety
/// `res` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_results_get(res: *const FmResults, index: size_t, out: *mut FmResultRow) -> FmStatus {
    guard(|| {
        let res = handle(res, "res")?;
        let out = out_arg(out, "out")?;
        let r = res.rows.get(index).ok_or_else(|| {
            Failure(
                FmStatus::OutOfRange,
                format!("row {index} out of range ({} rows)", res.rows.len()),
            )
        })?;
        *out = FmResultRow {
            seed: r.seed,
            round: r.round as u64,
            split: match r.split {
                Split::Train => FmSplit::Train,
                Split::Val => FmSplit::Val,
                Split::Test => FmSplit::Test,
            },
            f1: r.f1,
            pr_auc: r.pr_auc,
            ce: r.ce,
            cr: r.cr,
            kd: r.kd,
            reg: r.reg,
        };
        Ok(())
    })
}

/// Algorithm and model names of row `index` as `"algorithm,model"`; free
/// with [`fm_string_free`].
///
/// # Safety
/// `res` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_results_algorithm(res: *const FmResults, index: size_t, out: *mut *mut c_char) -> FmStatus {
    guard(|| {
        let res = handle(res, "res")?;
        let out = out_arg(out, "out")?;
        let r = res
            .rows
            .get(index)
            .ok_or_else(|| Failure(FmStatus::OutOfRange, format!("row {index} out of range")))?;
        *out = into_c_string(format!("{},{}", r.algorithm.name(), r.model.name()))?;
        Ok(())
    })
}

/// Writes results, summary and curve files into `dir`.
///
/// # Safety
/// `res` must be a live handle and `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fm_results_write(res: *const FmResults, dir: *const c_char) -> FmStatus {
    guard(|| {
        let res = handle(res, "res")?;
        write_results(&res.rows, Path::new(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// Copy of the final model of the `index`-th seed run.
///
/// # Safety
/// `res` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_results_model(res: *const FmResults, index: size_t, out: *mut *mut FmModel) -> FmStatus {
    guard(|| {
        let res = handle(res, "res")?;
        let out = out_arg(out, "out")?;
        let (_, m) = res
            .models
            .get(index)
            .ok_or_else(|| Failure(FmStatus::OutOfRange, format!("seed run {index} out of range")))?;
        *out = Box::into_raw(Box::new(FmModel(m.clone())));
        Ok(())
    })
}

/// # Safety
/// `res` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_results_free(res: *mut FmResults) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// F1 of binary predictions against binary labels.
///
/// # Safety
/// `predicted` and `labels` must each hold `len` elements; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_f1(predicted: *const u32, labels: *const u32, len: size_t, out: *mut f64) -> FmStatus {
    guard(|| {
        let p: Vec<usize> = slice_arg(predicted, len, "predicted")?.iter().map(|&v| v as usize).collect();
        let y: Vec<usize> = slice_arg(labels, len, "labels")?.iter().map(|&v| v as usize).collect();
        let out = out_arg(out, "out")?;
        *out = precision_recall_f1(&confusion(&p, &y)?).2;
        Ok(())
    })
}

/// Average precision of positive-class scores.
///
/// # Safety
/// `scores` and `labels` must each hold `len` elements; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_pr_auc(scores: *const f64, labels: *const u32, len: size_t, out: *mut f64) -> FmStatus {
    guard(|| {
        let s = slice_arg(scores, len, "scores")?;
        let y: Vec<usize> = slice_arg(labels, len, "labels")?.iter().map(|&v| v as usize).collect();
        let out = out_arg(out, "out")?;
        *out = pr_auc(s, &y)?;
        Ok(())
    })
}

/// Xavier-initialized two-class model with the given hidden widths.
///
/// # Safety
/// `hidden` must hold `num_hidden` elements (may be null when zero); `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_model_init(
    kind: FmModelKind,
    input_dim: size_t,
    hidden: *const size_t,
    num_hidden: size_t,
    seed: u64,
    out: *mut *mut FmModel,
) -> FmStatus {
    guard(|| {
        let hidden = slice_arg(hidden, num_hidden, "hidden")?;
        let out = out_arg(out, "out")?;
        let kind = match kind {
            FmModelKind::Mlp => ModelKind::Mlp,
            FmModelKind::Gcn => ModelKind::Gcn,
        };
        let spec = ArchitectureSpec::new(kind, input_dim).with_hidden(hidden);
        *out = Box::into_raw(Box::new(FmModel(xavier_init(&spec, seed)?)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_model_num_params(model: *const FmModel, out: *mut size_t) -> FmStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(model, "model")?.0.num_params();
        Ok(())
    })
}

/// Logits of a dense model for a row-major `rows × cols` feature matrix,
/// written row-major into `logits` (capacity `capacity`). `written` receives
/// the number of values; `FM_STATUS_BUFFER_TOO_SMALL` reports the size needed.
///
/// # Safety
/// `features` must hold `rows * cols` values, `logits` `capacity` values;
/// `model` must be live and `written` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_model_forward(
    model: *const FmModel,
    features: *const f64,
    rows: size_t,
    cols: size_t,
    logits: *mut f64,
    capacity: size_t,
    written: *mut size_t,
) -> FmStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let written = out_arg(written, "written")?;
        let values = slice_arg(features, rows * cols, "features")?;
        let x = DenseMatrix::from_vec(rows, cols, values.to_vec())?;
        let trace = forward(&model.0, &ModelInput::Features(x))?;
        let out = trace.logits().values();
        *written = out.len();
        if out.len() > capacity {
            return Err(Failure(
                FmStatus::BufferTooSmall,
                format!("need {} logits, buffer holds {capacity}", out.len()),
            ));
        }
        if !out.is_empty() {
            if logits.is_null() {
                return Err(null("logits"));
            }
            ptr::copy_nonoverlapping(out.as_ptr(), logits, out.len());
        }
        Ok(())
    })
}

/// JSON encoding of the model; free with [`fm_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_model_to_json(model: *const FmModel, out: *mut *mut c_char) -> FmStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let out = out_arg(out, "out")?;
        let json = serde_json::to_string(&model.0)
            .map_err(|e| Failure(FmStatus::Runtime, format!("model serialization: {e}")))?;
        *out = into_c_string(json)?;
        Ok(())
    })
}

/// Parses a model written by [`fm_model_to_json`] or the CLI.
///
/// # Safety
/// `json` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_model_from_json(json: *const c_char, out: *mut *mut FmModel) -> FmStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let out = out_arg(out, "out")?;
        let raw: ModelParams = serde_json::from_str(text)
            .map_err(|e| Failure(FmStatus::Parse, format!("model JSON: {e}")))?;
        let checked = ModelParams::from_layers(raw.spec().clone(), raw.layers().to_vec())?;
        *out = Box::into_raw(Box::new(FmModel(checked)));
        Ok(())
    })
}

/// FedAvg of `count` models weighted by `sizes`.
///
/// # Safety
/// `models` must hold `count` live handles and `sizes` `count` values; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_fedavg(
    models: *const *const FmModel,
    sizes: *const size_t,
    count: size_t,
    out: *mut *mut FmModel,
) -> FmStatus {
    guard(|| {
        let handles = slice_arg(models, count, "models")?;
        let sizes = slice_arg(sizes, count, "sizes")?;
        let out = out_arg(out, "out")?;
        let weights = handles
            .iter()
            .map(|&h| handle(h, "model").map(|m| m.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        *out = Box::into_raw(Box::new(FmModel(fedavg_aggregate(&weights, sizes)?)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_model_free(model: *mut FmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
