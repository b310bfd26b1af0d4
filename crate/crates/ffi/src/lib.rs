//! C ABI for the beamsweep library.
//!
//! Every fallible function returns a [`BsStatus`]. On failure a message is
//! stored per thread and can be read with [`bs_last_error`]. Objects cross
//! the boundary as opaque handles that the caller releases with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use beamsweep::beam::dirichlet_kernel;
use beamsweep::config::{Config, Method};
use beamsweep::detection::{ca_cfar, CfarConfig};
use beamsweep::eval::{evaluate, report_json, Pipeline};
use beamsweep::geometry::naf_resolution;
use beamsweep::omp::{omp, sparse_spectrum};
use beamsweep::sampling::{dft_interpolate, minimal_naf_grid, spline_interpolate, AngularSweep, SweepValues};
use beamsweep::Error;

/// Result codes shared by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidConfig = 3,
    ContractViolation = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Reconstruction methods selectable through the C API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsMethod {
    Oversampled = 0,
    Dft = 1,
    Spline = 2,
    Omp = 3,
}

impl From<BsMethod> for Method {
    fn from(m: BsMethod) -> Self {
        match m {
            BsMethod::Oversampled => Method::Oversampled,
            BsMethod::Dft => Method::Dft,
            BsMethod::Spline => Method::Spline,
            BsMethod::Omp => Method::Omp,
        }
    }
}

/// Opaque configuration handle.
pub struct BsConfig {
    inner: Config,
}

/// Opaque pipeline handle: grids, dictionary and detector built from a config.
pub struct BsPipeline {
    inner: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> BsStatus {
    match err {
        Error::Config(_) | Error::Toml(_) => BsStatus::InvalidConfig,
        Error::Input(_) | Error::Json(_) => BsStatus::InvalidInput,
        Error::Contract(_) => BsStatus::ContractViolation,
        Error::Io(_) => BsStatus::Io,
        Error::Context { source, .. } => status_of(source),
    }
}

enum Failure {
    Status(BsStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(BsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BsStatus::Ok,
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
            BsStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(data, len))
}

/// Copies `values` into a caller buffer, always reporting the needed length.
unsafe fn output<T: Copy>(values: &[T], out: *mut T, capacity: usize, out_len: *mut usize) -> Result<(), Failure> {
    if out_len.is_null() {
        return Err(null("out_len"));
    }
    *out_len = values.len();
    if values.len() > capacity {
        return Err(Failure::Status(
            BsStatus::BufferTooSmall,
            format!("need {} elements, buffer holds {capacity}", values.len()),
        ));
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn bs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default configuration. Never null.
#[no_mangle]
pub extern "C" fn bs_config_default() -> *mut BsConfig {
    Box::into_raw(Box::new(BsConfig {
        inner: Config::default(),
    }))
}

/// Parses a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_config_from_toml(toml: *const c_char, out: *mut *mut BsConfig) -> BsStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|_| Failure::Status(BsStatus::InvalidInput, "config is not UTF-8".into()))?;
        let inner = Config::from_toml_str(text)?;
        *out = Box::into_raw(Box::new(BsConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bs_config_free(config: *mut BsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Overrides the master seed, the number of seeds per scenario and the SNR.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_config_set_run(
    config: *mut BsConfig,
    master_seed: u64,
    n_seeds: usize,
    snr_db: f64,
) -> BsStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        let mut next = cfg.inner.clone();
        next.eval.master_seed = master_seed;
        next.eval.n_seeds = n_seeds;
        next.scene.snr_db = snr_db;
        next.validate()?;
        cfg.inner = next;
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_naf_resolution(n_elements: usize, out: *mut f64) -> BsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = naf_resolution(n_elements)?;
        Ok(())
    })
}

/// Minimal beam grid for `n_elements` per array within `|naf| <= naf_limit`.
///
/// # Safety
/// `out` must hold `capacity` doubles; `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bs_minimal_grid(
    n_elements: usize,
    naf_limit: f64,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> BsStatus {
    guard(|| {
        let grid: Vec<f64> = minimal_naf_grid(n_elements, naf_limit)?.iter().map(|n| n.0).collect();
        output(&grid, out, capacity, out_len)
    })
}

/// Normalized Dirichlet kernel of the given order.
#[no_mangle]
pub extern "C" fn bs_dirichlet_kernel(lag: f64, order: usize) -> f64 {
    dirichlet_kernel(lag, order)
}

/// Cell-averaging CFAR over `n` power cells; writes 0/1 flags to `mask`.
///
/// # Safety
/// `profile` and `mask` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn bs_ca_cfar(
    profile: *const f64,
    n: usize,
    p_fa: f64,
    n_training: usize,
    n_guard: usize,
    mask: *mut u8,
) -> BsStatus {
    guard(|| {
        let profile = input(profile, n, "profile")?;
        let cfg = CfarConfig {
            p_fa,
            n_training,
            n_guard,
        };
        let flags: Vec<u8> = ca_cfar(profile, &cfg)?.into_iter().map(u8::from).collect();
        let mut written = 0;
        output(&flags, mask, n, &mut written)
    })
}

/// Builds the processing pipeline for a configuration.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_pipeline_new(config: *const BsConfig, out: *mut *mut BsPipeline) -> BsStatus {
    guard(|| {
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Pipeline::new(&cfg.inner)?;
        *out = Box::into_raw(Box::new(BsPipeline { inner }));
        Ok(())
    })
}

/// # Safety
/// `pipeline` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bs_pipeline_free(pipeline: *mut BsPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Minimal or oversampled beam grid of a pipeline.
///
/// # Safety
/// `pipeline` must be live; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_pipeline_grid(
    pipeline: *const BsPipeline,
    oversampled: bool,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> BsStatus {
    guard(|| {
        let p = &pipeline.as_ref().ok_or_else(|| null("pipeline"))?.inner;
        let plan = if oversampled { &p.oversampled } else { &p.minimal };
        let grid: Vec<f64> = plan.beam_grid.iter().map(|n| n.0).collect();
        output(&grid, out, capacity, out_len)
    })
}

/// Reconstructs one range row of beam magnitudes taken on the minimal grid.
///
/// For DFT and spline the output is the magnitude on the oversampled grid;
/// for OMP it is the sparse coefficient spectrum over the candidate grid.
///
/// # Safety
/// `magnitudes` must hold `n` doubles and `out` `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruct_row(
    pipeline: *const BsPipeline,
    method: BsMethod,
    magnitudes: *const f64,
    n: usize,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> BsStatus {
    guard(|| {
        let p = &pipeline.as_ref().ok_or_else(|| null("pipeline"))?.inner;
        let values = input(magnitudes, n, "magnitudes")?.to_vec();
        let target = &p.oversampled.beam_grid;
        let dense = match Method::from(method) {
            Method::Dft => {
                let sweep = AngularSweep::new(p.minimal.clone(), SweepValues::Magnitude(values))?;
                dft_interpolate(&sweep, target)?.magnitudes()
            }
            Method::Spline => {
                let sweep = AngularSweep::new(p.minimal.clone(), SweepValues::Magnitude(values))?;
                spline_interpolate(&sweep, target)?
            }
            Method::Omp => {
                let est = omp(&values, &p.dictionary, &p.omp)?;
                sparse_spectrum(&est, p.dictionary.n_atoms())
            }
            Method::Oversampled => {
                return Err(Failure::Status(
                    BsStatus::InvalidInput,
                    "the oversampled method does not reconstruct".into(),
                ))
            }
        };
        output(&dense, out, capacity, out_len)
    })
}

/// Runs OMP against the pipeline dictionary. Writes candidate-grid indices and
/// coefficients in selection order.
///
/// # Safety
/// `y` must hold `n` doubles; `support` and `coefficients` `capacity` elements each.
#[no_mangle]
pub unsafe extern "C" fn bs_omp(
    pipeline: *const BsPipeline,
    y: *const f64,
    n: usize,
    support: *mut usize,
    coefficients: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> BsStatus {
    guard(|| {
        let p = &pipeline.as_ref().ok_or_else(|| null("pipeline"))?.inner;
        let y = input(y, n, "y")?;
        let est = omp(y, &p.dictionary, &p.omp)?;
        output(&est.support, support, capacity, out_len)?;
        output(&est.coefficients, coefficients, capacity, out_len)
    })
}

/// Runs the full Monte Carlo evaluation and returns the JSON report. Release
/// the string with [`bs_string_free`].
///
/// # Safety
/// `config` must be live and `json_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_evaluate_json(config: *const BsConfig, json_out: *mut *mut c_char) -> BsStatus {
    guard(|| {
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        if json_out.is_null() {
            return Err(null("json_out"));
        }
        let json = report_json(&evaluate(&cfg.inner)?.report)?;
        let c = CString::new(json).map_err(|_| Failure::Status(BsStatus::ContractViolation, "NUL in report".into()))?;
        *json_out = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
