//! C ABI for the feedback probe. Callers hold opaque handles created and
//! destroyed here, every fallible call returns a status code, and a
//! human-readable message for the most recent failure is kept per thread.
//!
//! The generated header lands in `include/feedback_probe.h`.

use feedback_probe::basis::BasisSpec;
use feedback_probe::bootstrap::{bootstrap_feedback, BootstrapError};
use feedback_probe::config::sha256_hex;
use feedback_probe::config::EstimatorVariant;
use feedback_probe::estimator::{
    EstimatorError, FitConfig, ObservationSet, SplitMode, TwoStageFit,
};
use feedback_probe::logfile::read_log;
use feedback_probe::noise::NoiseSpec;
use feedback_probe::report::{render_report, two_stage_report, FitReport, ReportMeta};
use feedback_probe::simulator::{generate_scenario, ScenarioSpec, SimulatorError};
use serde::Deserialize;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result of every fallible call. Values above OK mirror the CLI's exit
/// codes: invalid input 2, bad data 3, numerical failure 4.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericError = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: FpStatus, message: impl Into<String>) -> FpStatus {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(message).expect("NUL stripped");
    });
    status
}

fn classify_estimator(e: &EstimatorError) -> FpStatus {
    match e {
        EstimatorError::NoiseMismatch { .. } => FpStatus::DataError,
        _ => FpStatus::NumericError,
    }
}

// Unwinding across the C boundary is undefined; trap panics here.
fn guarded(body: impl FnOnce() -> FpStatus) -> FpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(FpStatus::Panic, "internal panic; handle state unchanged"),
    }
}

/// Deployment records: prior predictions, injected noise, observed next
/// predictions. Opaque; create with `fp_observations_new` or
/// `fp_observations_from_log`, release with `fp_observations_free`.
pub struct FpObservations {
    observations: ObservationSet,
    periods: u32,
}

/// A fitted feedback curve plus its report. Opaque; create with
/// `fp_fit`, release with `fp_fit_free`.
pub struct FpFit {
    fit: TwoStageFit,
    bootstrap_se: Option<Vec<f64>>,
    report: FitReport,
}

/// What `fp_fit` needs beyond the observations, as JSON.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FitSpec {
    noise: NoiseSpec,
    mu_basis: BasisSpec,
    f_basis: BasisSpec,
    /// Fit the trend on the first half and the curve on the second.
    #[serde(default)]
    split: bool,
    /// When set, add resampled pointwise band widths to the fit.
    #[serde(default)]
    bootstrap_replicates: Option<usize>,
    /// Seed for the resampling; defaults to 0.
    #[serde(default)]
    seed: Option<u64>,
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on the calling thread. The
/// pointer stays valid until the next failing call on the same thread;
/// never free it.
#[no_mangle]
pub extern "C" fn fp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, FpStatus> {
    if ptr.is_null() {
        return Err(fail(FpStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(FpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Build an observation handle from three arrays of length `len`.
/// Copies the data; the caller keeps ownership of the inputs.
///
/// # Safety
/// `prior`, `noise`, and `next` must point to `len` readable doubles;
/// `out` must be a valid location to store the new handle.
#[no_mangle]
pub unsafe extern "C" fn fp_observations_new(
    prior: *const f64,
    noise: *const f64,
    next: *const f64,
    len: usize,
    out: *mut *mut FpObservations,
) -> FpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(FpStatus::NullArgument, "out is NULL");
        }
        *out = std::ptr::null_mut();
        for (name, ptr) in [("prior", prior), ("noise", noise), ("next", next)] {
            if ptr.is_null() {
                return fail(FpStatus::NullArgument, format!("{name} is NULL"));
            }
        }
        if len == 0 {
            return fail(FpStatus::InvalidArgument, "len is 0");
        }
        let build = ObservationSet::new(
            std::slice::from_raw_parts(prior, len).to_vec(),
            std::slice::from_raw_parts(noise, len).to_vec(),
            std::slice::from_raw_parts(next, len).to_vec(),
        );
        match build {
            Ok(observations) => {
                *out = Box::into_raw(Box::new(FpObservations {
                    observations,
                    periods: 1,
                }));
                FpStatus::Ok
            }
            Err(e) => fail(FpStatus::DataError, e.to_string()),
        }
    })
}

/// Read an observation log file (the CLI's CSV format) into a handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fp_observations_from_log(
    path: *const c_char,
    out: *mut *mut FpObservations,
) -> FpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(FpStatus::NullArgument, "out is NULL");
        }
        *out = std::ptr::null_mut();
        let path = match read_str(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match read_log(Path::new(path)) {
            Ok(log) => {
                let periods = log.max_period();
                *out = Box::into_raw(Box::new(FpObservations {
                    observations: log.observations,
                    periods,
                }));
                FpStatus::Ok
            }
            Err(e) => fail(FpStatus::DataError, e.to_string()),
        }
    })
}

/// Rows in the handle; 0 for NULL.
///
/// # Safety
/// `obs` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn fp_observations_len(obs: *const FpObservations) -> usize {
    if obs.is_null() {
        return 0;
    }
    (*obs).observations.len()
}

/// Release an observation handle. NULL is a no-op.
///
/// # Safety
/// `obs` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fp_observations_free(obs: *mut FpObservations) {
    if !obs.is_null() {
        drop(Box::from_raw(obs));
    }
}

/// Simulate a scenario (JSON spec) into a fresh observation handle.
///
/// # Safety
/// `scenario_json` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fp_simulate_json(
    scenario_json: *const c_char,
    out: *mut *mut FpObservations,
) -> FpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(FpStatus::NullArgument, "out is NULL");
        }
        *out = std::ptr::null_mut();
        let text = match read_str(scenario_json, "scenario_json") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let spec: ScenarioSpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(FpStatus::InvalidArgument, e.to_string()),
        };
        match generate_scenario(&spec) {
            Ok(sim) => {
                let periods = sim.period.last().copied().unwrap_or(1);
                *out = Box::into_raw(Box::new(FpObservations {
                    observations: sim.observations,
                    periods,
                }));
                FpStatus::Ok
            }
            Err(SimulatorError::InvalidSpec { context }) => {
                fail(FpStatus::InvalidArgument, context)
            }
            Err(e) => fail(FpStatus::NumericError, e.to_string()),
        }
    })
}

/// Fit the two-stage feedback estimator. `spec_json` carries the noise
/// declaration, both bases, and optional split / bootstrap settings.
///
/// # Safety
/// `obs` must be a live handle, `spec_json` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fp_fit(
    obs: *const FpObservations,
    spec_json: *const c_char,
    out: *mut *mut FpFit,
) -> FpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(FpStatus::NullArgument, "out is NULL");
        }
        *out = std::ptr::null_mut();
        if obs.is_null() {
            return fail(FpStatus::NullArgument, "obs is NULL");
        }
        let text = match read_str(spec_json, "spec_json") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let spec: FitSpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(FpStatus::InvalidArgument, e.to_string()),
        };
        if let Err(e) = spec.noise.validate() {
            return fail(FpStatus::InvalidArgument, format!("noise: {e}"));
        }
        if let Err(e) = spec.mu_basis.validate() {
            return fail(FpStatus::InvalidArgument, format!("mu_basis: {e}"));
        }
        if !spec.mu_basis.include_intercept {
            return fail(
                FpStatus::InvalidArgument,
                "mu_basis: the trend basis must include an intercept",
            );
        }
        if let Err(e) = spec.f_basis.validate_feedback_role() {
            return fail(FpStatus::InvalidArgument, format!("f_basis: {e}"));
        }

        let handle = &*obs;
        let mode = if spec.split {
            SplitMode::Split
        } else {
            SplitMode::Shared
        };
        let config = FitConfig::new(
            spec.mu_basis.clone(),
            spec.f_basis.clone(),
            spec.noise,
        )
        .with_mode(mode);
        let fit = match config.fit(&handle.observations) {
            Ok(f) => f,
            Err(e) => return fail(classify_estimator(&e), e.to_string()),
        };
        let seed = spec.seed.unwrap_or(0);
        let bands = match spec.bootstrap_replicates {
            None => None,
            Some(b) => match bootstrap_feedback(&handle.observations, &config, b, seed) {
                Ok(bands) => Some(bands),
                Err(BootstrapError::Estimator(e)) => {
                    return fail(classify_estimator(&e), e.to_string())
                }
                Err(e @ BootstrapError::TooFewReplicates(_)) => {
                    return fail(FpStatus::InvalidArgument, e.to_string())
                }
                Err(e) => return fail(FpStatus::NumericError, e.to_string()),
            },
        };
        let sha = sha256_hex(text.as_bytes());
        let meta = ReportMeta {
            seed,
            config_sha256: &sha,
            estimator: if spec.split {
                EstimatorVariant::TwoStageSplit
            } else {
                EstimatorVariant::TwoStage
            },
            n_observations: handle.observations.len(),
            periods: handle.periods,
            noise: &spec.noise,
        };
        let report = two_stage_report(meta, &fit, bands.as_ref());
        *out = Box::into_raw(Box::new(FpFit {
            fit,
            bootstrap_se: bands.map(|b| b.pointwise_se),
            report,
        }));
        FpStatus::Ok
    })
}

/// Number of grid points in the fitted curve; 0 for NULL.
///
/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_fit_grid_len(fit: *const FpFit) -> usize {
    if fit.is_null() {
        return 0;
    }
    (*fit).fit.feedback.pointwise_se.len()
}

/// Copy the curve into caller buffers of length `len` (which must equal
/// `fp_fit_grid_len`): grid locations, centered estimates, pointwise
/// standard errors. Any output pointer may be NULL to skip that column.
///
/// # Safety
/// Non-NULL output pointers must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fp_fit_curve(
    fit: *const FpFit,
    grid: *mut f64,
    estimate: *mut f64,
    pointwise_se: *mut f64,
    len: usize,
) -> FpStatus {
    guarded(|| {
        if fit.is_null() {
            return fail(FpStatus::NullArgument, "fit is NULL");
        }
        let handle = &*fit;
        let n = handle.fit.feedback.pointwise_se.len();
        if len != n {
            return fail(
                FpStatus::InvalidArgument,
                format!("len is {len}, curve has {n} points"),
            );
        }
        if !grid.is_null() {
            let points = handle.fit.feedback.grid_points();
            std::slice::from_raw_parts_mut(grid, len).copy_from_slice(&points);
        }
        if !estimate.is_null() {
            std::slice::from_raw_parts_mut(estimate, len)
                .copy_from_slice(handle.fit.feedback.evaluation.values());
        }
        if !pointwise_se.is_null() {
            std::slice::from_raw_parts_mut(pointwise_se, len)
                .copy_from_slice(&handle.fit.feedback.pointwise_se);
        }
        FpStatus::Ok
    })
}

/// Copy bootstrap band widths into a buffer of length `len`. Fails with
/// InvalidArgument when the fit was run without bootstrap replicates.
///
/// # Safety
/// `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fp_fit_bootstrap_se(
    fit: *const FpFit,
    out: *mut f64,
    len: usize,
) -> FpStatus {
    guarded(|| {
        if fit.is_null() || out.is_null() {
            return fail(FpStatus::NullArgument, "fit or out is NULL");
        }
        let handle = &*fit;
        let Some(bands) = &handle.bootstrap_se else {
            return fail(
                FpStatus::InvalidArgument,
                "fit has no bootstrap bands; set bootstrap_replicates",
            );
        };
        if len != bands.len() {
            return fail(
                FpStatus::InvalidArgument,
                format!("len is {len}, bands have {} points", bands.len()),
            );
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(bands);
        FpStatus::Ok
    })
}

/// Render the fit's JSON report into a fresh string. Release it with
/// `fp_string_free`.
///
/// # Safety
/// `fit` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fp_fit_report_json(fit: *const FpFit, out: *mut *mut c_char) -> FpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(FpStatus::NullArgument, "out is NULL");
        }
        *out = std::ptr::null_mut();
        if fit.is_null() {
            return fail(FpStatus::NullArgument, "fit is NULL");
        }
        let text = render_report(&(*fit).report);
        match CString::new(text) {
            Ok(s) => {
                *out = s.into_raw();
                FpStatus::Ok
            }
            Err(_) => fail(FpStatus::NumericError, "report contained a NUL byte"),
        }
    })
}

/// Release a fit handle. NULL is a no-op.
///
/// # Safety
/// `fit` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fp_fit_free(fit: *mut FpFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Release a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a string from `fp_fit_report_json` not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn fp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
