//! C ABI over the advtune library.
//!
//! Every fallible function returns an [`AdvStatus`]. On failure a message is
//! stored per thread and can be read with [`adv_last_error_message`].
//! Priors are opaque [`AdvPrior`] handles released with [`adv_prior_free`];
//! strings returned by the library are released with [`adv_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use advtune::config::ExperimentConfig;
use advtune::kde::{weighted_kde, WeightedSample};
use advtune::priors::{bayes_update, table_kl, uniform_prior, JointPrior, ParameterSpace};
use advtune::seed::rng_for;
use advtune::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvStatus {
    ADV_OK = 0,
    ADV_NULL_POINTER = 1,
    ADV_INVALID_UTF8 = 2,
    ADV_DEGENERATE_TABLE = 3,
    ADV_RETRY_EXHAUSTED = 4,
    ADV_DIMENSION_MISMATCH = 5,
    ADV_LENGTH_MISMATCH = 6,
    ADV_NON_FINITE_LOSS = 7,
    ADV_BINNING_MISMATCH = 8,
    ADV_EMPTY_DATASET = 9,
    ADV_INVALID_ARGUMENT = 10,
    ADV_CONFIG_ERROR = 11,
    ADV_FORMAT_ERROR = 12,
    ADV_IO_ERROR = 13,
    ADV_JSON_ERROR = 14,
    ADV_PANIC = 15,
}

/// Opaque prior-table handle.
pub struct AdvPrior {
    inner: JointPrior,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> AdvStatus {
    match err {
        Error::DegenerateTable { .. } => AdvStatus::ADV_DEGENERATE_TABLE,
        Error::RetryExhausted { .. } => AdvStatus::ADV_RETRY_EXHAUSTED,
        Error::DimensionMismatch { .. } => AdvStatus::ADV_DIMENSION_MISMATCH,
        Error::LengthMismatch { .. } => AdvStatus::ADV_LENGTH_MISMATCH,
        Error::NonFiniteLoss { .. } => AdvStatus::ADV_NON_FINITE_LOSS,
        Error::BinningMismatch { .. } => AdvStatus::ADV_BINNING_MISMATCH,
        Error::EmptyDataset => AdvStatus::ADV_EMPTY_DATASET,
        Error::InvalidArgument(_) => AdvStatus::ADV_INVALID_ARGUMENT,
        Error::Config(_) => AdvStatus::ADV_CONFIG_ERROR,
        Error::Format { .. } => AdvStatus::ADV_FORMAT_ERROR,
        Error::Io { .. } => AdvStatus::ADV_IO_ERROR,
        Error::Json(_) => AdvStatus::ADV_JSON_ERROR,
    }
}

enum Failure {
    Status(AdvStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null() -> Failure {
    Failure::Status(AdvStatus::ADV_NULL_POINTER, "null pointer argument".into())
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AdvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdvStatus::ADV_OK,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            AdvStatus::ADV_PANIC
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure::Status(AdvStatus::ADV_INVALID_UTF8, "string is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn prior_arg<'a>(p: *const AdvPrior) -> Result<&'a JointPrior, Failure> {
    p.as_ref().map(|h| &h.inner).ok_or_else(null)
}

unsafe fn put_prior(out: *mut *mut AdvPrior, prior: JointPrior) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(AdvPrior { inner: prior }));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    let c = CString::new(s).map_err(|_| Failure::Status(AdvStatus::ADV_INVALID_ARGUMENT, "string contains nul".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn adv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn adv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Uniform prior over the scene parameters with `bins` bins per dimension.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adv_prior_uniform(bins: usize, out: *mut *mut AdvPrior) -> AdvStatus {
    guard(|| {
        if bins < 2 {
            return Err(Error::InvalidArgument(format!("bins must be at least 2, got {bins}")).into());
        }
        put_prior(out, uniform_prior(&ParameterSpace::scene(bins)))
    })
}

/// Parses a prior from its JSON form.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adv_prior_from_json(json: *const c_char, out: *mut *mut AdvPrior) -> AdvStatus {
    guard(|| {
        let prior = JointPrior::from_json(str_arg(json)?)?;
        put_prior(out, prior)
    })
}

/// Serializes a prior to JSON. Free the result with [`adv_string_free`].
///
/// # Safety
/// `prior` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adv_prior_to_json(prior: *const AdvPrior, out: *mut *mut c_char) -> AdvStatus {
    guard(|| {
        let json = prior_arg(prior)?.to_json()?;
        put_string(out, json)
    })
}

/// Releases a prior. NULL is ignored.
///
/// # Safety
/// `prior` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn adv_prior_free(prior: *mut AdvPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

/// Number of dimensions of the prior.
///
/// # Safety
/// `prior` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adv_prior_dims(prior: *const AdvPrior, out: *mut usize) -> AdvStatus {
    guard(|| {
        let p = prior_arg(prior)?;
        *out.as_mut().ok_or_else(null)? = p.tables.len();
        Ok(())
    })
}

/// Copies table `dim` into `buf`, which must hold exactly the table's bins.
///
/// # Safety
/// `prior` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn adv_prior_table(prior: *const AdvPrior, dim: usize, buf: *mut f64, len: usize) -> AdvStatus {
    guard(|| {
        let p = prior_arg(prior)?;
        let table = p
            .tables
            .get(dim)
            .ok_or_else(|| Error::InvalidArgument(format!("dimension {dim} out of range")))?;
        if table.values.len() != len {
            return Err(Error::DimensionMismatch {
                expected: table.values.len(),
                actual: len,
            }
            .into());
        }
        if buf.is_null() {
            return Err(null());
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&table.values);
        Ok(())
    })
}

/// Draws one parameter vector, deterministically from `seed`, into `out`
/// (length must equal the number of dimensions).
///
/// # Safety
/// `prior` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn adv_prior_sample(prior: *const AdvPrior, seed: u64, out: *mut f64, len: usize) -> AdvStatus {
    guard(|| {
        let p = prior_arg(prior)?;
        if len != p.tables.len() {
            return Err(Error::DimensionMismatch {
                expected: p.tables.len(),
                actual: len,
            }
            .into());
        }
        if out.is_null() {
            return Err(null());
        }
        let theta = p.sample_vector(&mut rng_for(seed, 0, 0));
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&theta);
        Ok(())
    })
}

/// Multiplies each table by its likelihood and max-normalizes. `likelihood`
/// holds every dimension's bins back to back.
///
/// # Safety
/// `prior` must be a live handle, `likelihood` valid for `len` reads and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adv_prior_bayes_update(
    prior: *const AdvPrior,
    likelihood: *const f64,
    len: usize,
    out: *mut *mut AdvPrior,
) -> AdvStatus {
    guard(|| {
        let p = prior_arg(prior)?;
        let flat = slice_arg(likelihood, len)?;
        let total: usize = p.tables.iter().map(|t| t.values.len()).sum();
        if len != total {
            return Err(Error::DimensionMismatch { expected: total, actual: len }.into());
        }
        let mut rest = flat;
        let tables: Vec<Vec<f64>> = p
            .tables
            .iter()
            .map(|t| {
                let (head, tail) = rest.split_at(t.values.len());
                rest = tail;
                head.to_vec()
            })
            .collect();
        put_prior(out, bayes_update(p, &tables)?)
    })
}

/// Weighted Gaussian KDE `sum_i w_i K_h(g - x_i)` evaluated at each grid point.
///
/// # Safety
/// `values` and `weights` must be valid for `n` reads, `grid` for
/// `grid_len` reads and `out` for `grid_len` writes.
#[no_mangle]
pub unsafe extern "C" fn adv_weighted_kde(
    values: *const f64,
    weights: *const f64,
    n: usize,
    bandwidth: f64,
    grid: *const f64,
    grid_len: usize,
    out: *mut f64,
) -> AdvStatus {
    guard(|| {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")).into());
        }
        let samples: Vec<WeightedSample> = slice_arg(values, n)?
            .iter()
            .zip(slice_arg(weights, n)?)
            .map(|(v, w)| WeightedSample {
                theta_value: *v,
                weight: *w,
            })
            .collect();
        let g = slice_arg(grid, grid_len)?;
        if grid_len > 0 && out.is_null() {
            return Err(null());
        }
        let table = weighted_kde(&samples, bandwidth, g);
        if grid_len > 0 {
            std::slice::from_raw_parts_mut(out, grid_len).copy_from_slice(&table);
        }
        Ok(())
    })
}

/// Smoothed `KL(p || q)` of two nonnegative tables of equal length.
///
/// # Safety
/// `p` and `q` must be valid for `len` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adv_table_kl(p: *const f64, q: *const f64, len: usize, out: *mut f64) -> AdvStatus {
    guard(|| {
        let (p, q) = (slice_arg(p, len)?, slice_arg(q, len)?);
        if p.iter().chain(q).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("tables must be finite and nonnegative".into()).into());
        }
        *out.as_mut().ok_or_else(null)? = table_kl(p, q);
        Ok(())
    })
}

/// Runs the tuning loop from an experiment config document and returns
/// `{"config": ..., "report": ...}` as JSON. Relative dataset paths resolve
/// against the working directory. Free the result with [`adv_string_free`].
///
/// # Safety
/// `config_json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adv_tune_json(config_json: *const c_char, out: *mut *mut c_char) -> AdvStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(str_arg(config_json)?)?;
        let target = cfg.build_target(Path::new(""))?;
        let report = advtune::tuning::run(&cfg.tuning_config(), &target)?;
        let doc = serde_json::json!({ "config": cfg, "report": report });
        put_string(out, serde_json::to_string_pretty(&doc).map_err(Error::from)?)
    })
}
