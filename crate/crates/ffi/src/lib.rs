//! C interface to the gp-rvm library.
//!
//! Objects are opaque handles created by `*_new`-style functions and
//! released with the matching `*_free`. Every fallible call returns a
//! `GpRvmStatus`; on failure `gp_rvm_last_error` describes the problem
//! for the calling thread. Strings returned through `char **` outputs are
//! owned by the caller and released with `gp_rvm_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gp_rvm::bench::{benchmark, Dataset};
use gp_rvm::cli::report::ModelReport;
use gp_rvm::expr::{evaluate, parse, Inputs};
use gp_rvm::kaizen::{self, KaizenConfig, StopRule};
use gp_rvm::rvm::{sequential_fit, DesignMatrix, FeatureId, RvmConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpRvmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    EvalError = 4,
    FitError = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpRvmMode {
    /// Generation budget with an adjusted-R² stop.
    Keijzer = 0,
    /// Node-evaluation budget with a maximum-error success check.
    Nguyen = 1,
}

/// Settings for `gp_rvm_run`. Obtain defaults from
/// `gp_rvm_run_options_default`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpRvmRunOptions {
    pub mode: GpRvmMode,
    pub max_generations: u64,
    pub fitness_stop: f64,
    pub max_node_evals: u64,
    pub abs_error: f64,
}

/// Training inputs and target.
pub struct GpRvmDataset {
    inner: Dataset,
}

/// A fitted weighted-sum model.
pub struct GpRvmModel {
    report: ModelReport,
    fitness: f64,
    success: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(GpRvmStatus, String);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GpRvmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GpRvmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            GpRvmStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(GpRvmStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn invalid(msg: impl ToString) -> Failure {
    Failure(GpRvmStatus::InvalidArgument, msg.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn rows_to_inputs(points: *const f64, n: usize, dims: usize) -> Result<Inputs, Failure> {
    if dims == 0 {
        return Err(invalid("dims must be at least 1"));
    }
    let len = n
        .checked_mul(dims)
        .ok_or_else(|| invalid("n * dims overflows"))?;
    let flat = slice_arg(points, len, "points")?;
    let columns = (0..dims)
        .map(|d| (0..n).map(|r| flat[r * dims + d]).collect())
        .collect();
    Inputs::from_columns(columns).map_err(invalid)
}

fn string_out(s: &str, out: *mut *mut c_char) -> Result<(), Failure> {
    non_null(out, "out")?;
    let c = CString::new(s).map_err(invalid)?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gp_rvm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn gp_rvm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a dataset from `n` row-major points of `dims` inputs each.
///
/// # Safety
/// `inputs` must point to `n * dims` doubles, `target` to `n` doubles and
/// `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_dataset_new(
    inputs: *const f64,
    target: *const f64,
    n: usize,
    dims: usize,
    out: *mut *mut GpRvmDataset,
) -> GpRvmStatus {
    guard(|| {
        non_null(out, "out")?;
        let x = rows_to_inputs(inputs, n, dims)?;
        let t = slice_arg(target, n, "target")?.to_vec();
        if t.iter().any(|v| !v.is_finite()) {
            return Err(invalid("target contains non-finite values"));
        }
        *out = Box::into_raw(Box::new(GpRvmDataset {
            inner: Dataset::new(t, x),
        }));
        Ok(())
    })
}

/// Samples the training and test sets of a named benchmark. `test` may be
/// null.
///
/// # Safety
/// `name` must be a NUL-terminated string; `train` and `test` (when not
/// null) must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_benchmark_dataset(
    name: *const c_char,
    seed: u64,
    train: *mut *mut GpRvmDataset,
    test: *mut *mut GpRvmDataset,
) -> GpRvmStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        non_null(train, "train")?;
        let spec = benchmark(name).map_err(invalid)?;
        let (tr, te) = spec.datasets(seed).map_err(invalid)?;
        *train = Box::into_raw(Box::new(GpRvmDataset { inner: tr }));
        if !test.is_null() {
            *test = Box::into_raw(Box::new(GpRvmDataset { inner: te }));
        }
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_dataset_len(dataset: *const GpRvmDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `dataset` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_dataset_free(dataset: *mut GpRvmDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub extern "C" fn gp_rvm_run_options_default(mode: GpRvmMode) -> GpRvmRunOptions {
    let (max_generations, fitness_stop, max_node_evals, abs_error) =
        match (KaizenConfig::keijzer().stop, KaizenConfig::nguyen(1).stop) {
            (
                StopRule::Generations {
                    max_generations,
                    fitness_stop,
                },
                StopRule::NodeBudget {
                    max_node_evals,
                    abs_error,
                },
            ) => (
                max_generations as u64,
                fitness_stop,
                max_node_evals,
                abs_error,
            ),
            _ => unreachable!("default stop rules"),
        };
    GpRvmRunOptions {
        mode,
        max_generations,
        fitness_stop,
        max_node_evals,
        abs_error,
    }
}

/// Runs one trial on `dataset` and returns the final model.
///
/// # Safety
/// `dataset` must be a live handle, `options` null or valid, and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_run(
    dataset: *const GpRvmDataset,
    options: *const GpRvmRunOptions,
    seed: u64,
    out: *mut *mut GpRvmModel,
) -> GpRvmStatus {
    guard(|| {
        non_null(dataset, "dataset")?;
        non_null(out, "out")?;
        let data = &(*dataset).inner;
        let dims = data.inputs.dims();
        let opts = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| gp_rvm_run_options_default(GpRvmMode::Keijzer));
        let mut cfg = match opts.mode {
            GpRvmMode::Keijzer => KaizenConfig::keijzer(),
            GpRvmMode::Nguyen => KaizenConfig::nguyen(dims),
        };
        if dims > 1 && opts.mode == GpRvmMode::Keijzer {
            return Err(invalid("keijzer mode supports one input"));
        }
        cfg.stop = match opts.mode {
            GpRvmMode::Keijzer => StopRule::Generations {
                max_generations: opts.max_generations as usize,
                fitness_stop: opts.fitness_stop,
            },
            GpRvmMode::Nguyen => StopRule::NodeBudget {
                max_node_evals: opts.max_node_evals,
                abs_error: opts.abs_error,
            },
        };
        cfg.validate().map_err(invalid)?;
        let outcome = kaizen::run(&cfg, data, seed)
            .map_err(|e| Failure(GpRvmStatus::FitError, e.to_string()))?;
        *out = Box::into_raw(Box::new(GpRvmModel {
            report: ModelReport::from_standard(&outcome.standard, dims),
            fitness: outcome.standard.fitness,
            success: outcome.success,
        }));
        Ok(())
    })
}

/// Loads a model saved as JSON (the `model` object of a run report).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_model_from_json(
    json: *const c_char,
    out: *mut *mut GpRvmModel,
) -> GpRvmStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        non_null(out, "out")?;
        let report: ModelReport = serde_json::from_str(text)
            .map_err(|e| Failure(GpRvmStatus::ParseError, e.to_string()))?;
        report
            .parsed()
            .map_err(|e| Failure(GpRvmStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(GpRvmModel {
            report,
            fitness: f64::NAN,
            success: false,
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_model_to_json(
    model: *const GpRvmModel,
    out: *mut *mut c_char,
) -> GpRvmStatus {
    guard(|| {
        non_null(model, "model")?;
        let json = serde_json::to_string(&(*model).report).map_err(invalid)?;
        string_out(&json, out)
    })
}

/// The model as a prefix expression string.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_model_expression(
    model: *const GpRvmModel,
    out: *mut *mut c_char,
) -> GpRvmStatus {
    guard(|| {
        non_null(model, "model")?;
        string_out(&(*model).report.expression, out)
    })
}

/// Training adjusted R² of a model produced by `gp_rvm_run`; NaN for
/// loaded models.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_model_fitness(model: *const GpRvmModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.fitness)
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_model_success(model: *const GpRvmModel) -> bool {
    model.as_ref().is_some_and(|m| m.success)
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_model_dims(model: *const GpRvmModel) -> usize {
    model.as_ref().map_or(0, |m| m.report.dims)
}

/// Evaluates the model at `n` row-major points; `dims` must match the
/// model.
///
/// # Safety
/// `model` must be a live handle, `points` must hold `n * dims` doubles and
/// `out` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_model_predict(
    model: *const GpRvmModel,
    points: *const f64,
    n: usize,
    dims: usize,
    out: *mut f64,
) -> GpRvmStatus {
    guard(|| {
        non_null(model, "model")?;
        let m = &(*model).report;
        if dims != m.dims {
            return Err(invalid(format!(
                "model takes {} input(s), got {dims}",
                m.dims
            )));
        }
        let expr = m
            .parsed()
            .map_err(|e| Failure(GpRvmStatus::ParseError, e.to_string()))?;
        predict_rows(|p| expr.eval_point(p), points, n, dims, out)
    })
}

unsafe fn predict_rows(
    f: impl Fn(&[f64]) -> f64,
    points: *const f64,
    n: usize,
    dims: usize,
    out: *mut f64,
) -> Result<(), Failure> {
    if n == 0 {
        return Ok(());
    }
    non_null(out, "out")?;
    let len = n
        .checked_mul(dims)
        .ok_or_else(|| invalid("n * dims overflows"))?;
    let flat = slice_arg(points, len, "points")?;
    let dst = std::slice::from_raw_parts_mut(out, n);
    for (r, y) in dst.iter_mut().enumerate() {
        *y = f(&flat[r * dims..(r + 1) * dims]);
    }
    Ok(())
}

/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_model_free(model: *mut GpRvmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parses a prefix expression and evaluates it column-wise at `n` row-major
/// points. Non-finite results are an error.
///
/// # Safety
/// `expr` must be a NUL-terminated string, `points` must hold `n * dims`
/// doubles and `out` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_expr_eval(
    expr: *const c_char,
    points: *const f64,
    n: usize,
    dims: usize,
    out: *mut f64,
) -> GpRvmStatus {
    guard(|| {
        let text = str_arg(expr, "expr")?;
        let e = parse(text).map_err(|e| Failure(GpRvmStatus::ParseError, e.to_string()))?;
        if n == 0 {
            return Ok(());
        }
        non_null(out, "out")?;
        let inputs = rows_to_inputs(points, n, dims)?;
        let y =
            evaluate(&e, &inputs).map_err(|e| Failure(GpRvmStatus::EvalError, e.to_string()))?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&y);
        Ok(())
    })
}

/// Sequential sparse Bayesian fit of `target` on `k` column-major basis
/// columns of length `n`. Writes the final weight of each column to
/// `weights` (0 for pruned columns) and, when not null, the log marginal
/// likelihood to `log_ml`.
///
/// # Safety
/// `columns` must hold `n * k` doubles, `target` `n`, and `weights` room
/// for `k`.
#[no_mangle]
pub unsafe extern "C" fn gp_rvm_rvm_fit(
    columns: *const f64,
    n: usize,
    k: usize,
    target: *const f64,
    weights: *mut f64,
    log_ml: *mut f64,
) -> GpRvmStatus {
    guard(|| {
        let len = n.checked_mul(k).ok_or_else(|| invalid("n * k overflows"))?;
        let flat = slice_arg(columns, len, "columns")?;
        let t = slice_arg(target, n, "target")?;
        if k > 0 {
            non_null(weights, "weights")?;
        }
        let design = DesignMatrix::from_columns(
            n,
            (0..k).map(|j| (FeatureId(j as u64), flat[j * n..(j + 1) * n].to_vec())),
        )
        .map_err(invalid)?;
        let fit = sequential_fit(&design, t, &RvmConfig::default())
            .map_err(|e| Failure(GpRvmStatus::FitError, e.to_string()))?;
        let model = fit.final_model();
        let dst = std::slice::from_raw_parts_mut(weights, k);
        for (j, w) in dst.iter_mut().enumerate() {
            *w = model.weight(FeatureId(j as u64)).unwrap_or(0.0);
        }
        if !log_ml.is_null() {
            *log_ml = model.log_ml;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(gp_rvm_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, GpRvmStatus::Panic);
        let msg = unsafe { CStr::from_ptr(gp_rvm_last_error()) };
        assert!(msg.to_str().unwrap().contains("boom"));
        assert_eq!(guard(|| Ok(())), GpRvmStatus::Ok);
        assert_eq!(
            unsafe { CStr::from_ptr(gp_rvm_last_error()) }.to_bytes(),
            b""
        );
    }

    #[test]
    fn null_out_pointer_rejected() {
        let s = unsafe { gp_rvm_dataset_new(ptr::null(), ptr::null(), 0, 1, ptr::null_mut()) };
        assert_eq!(s, GpRvmStatus::NullPointer);
    }
}
