//! C ABI for the simulator.
//!
//! Every function returns a [`PfStatus`]; on failure the message is available
//! from [`pf_last_error`] on the same thread. Objects are opaque handles
//! created by `*_new`/`*_compute`/`*_from_*` functions and released with the
//! matching `*_free`. Array results are copied into caller-owned buffers.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pulsefocus::cli::config::RunConfig;
use pulsefocus::cli::presets::preset;
use pulsefocus::fitkit::{fit_with, initial_guess, FitOptions, ModelSpec};
use pulsefocus::spectra::{ensemble_spectrum, Spectrum};
use pulsefocus::units::{ns_to_s, GAUSSIAN_FWHM_PER_SIGMA};
use pulsefocus::{calibrate_pulse_amplitude, Error};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or a value outside its domain.
    InvalidArgument = 1,
    /// Configuration rejected.
    Config = 2,
    /// Simulation or linear algebra failed.
    Numerical = 3,
    /// Fit finished without converging; outputs are still written.
    FitNotConverged = 4,
    /// Caller buffer shorter than the result.
    BufferTooSmall = 5,
    /// Internal panic caught at the boundary.
    Panic = 6,
}

/// Curves of a computed spectrum.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfSpectrumColumn {
    /// Detuning from the pulse carrier, Hz.
    Frequency = 0,
    P1 = 1,
    P2 = 2,
    Q = 3,
    QStderr = 4,
}

/// Opaque run configuration.
pub struct PfConfig(RunConfig);

/// Opaque computed spectrum.
pub struct PfSpectrum(Spectrum);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> PfStatus {
    match e {
        Error::Config(_) | Error::Data(_) | Error::Io(_) => PfStatus::Config,
        Error::InvalidParameter(_) | Error::Layout { .. } => PfStatus::InvalidArgument,
        Error::FitFailed { .. } => PfStatus::FitNotConverged,
        Error::Numerical { .. } | Error::Coverage { .. } => PfStatus::Numerical,
    }
}

/// Run `f`, recording any error or panic for [`pf_last_error`].
fn guard(f: impl FnOnce() -> Result<PfStatus, (PfStatus, String)>) -> PfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            PfStatus::Panic
        }
    }
}

fn lib<T>(r: pulsefocus::Result<T>) -> Result<T, (PfStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn arg_err(msg: &str) -> (PfStatus, String) {
    (PfStatus::InvalidArgument, msg.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PfStatus, String)> {
    if p.is_null() {
        return Err(arg_err(&format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| arg_err(&format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (PfStatus, String)> {
    if p.is_null() {
        return Err(arg_err(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn pf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a TOML run configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_config_from_toml(toml: *const c_char, out: *mut *mut PfConfig) -> PfStatus {
    guard(|| {
        if out.is_null() {
            return Err(arg_err("out is null"));
        }
        let c = lib(RunConfig::from_toml(str_arg(toml, "toml")?))?;
        lib(c.resolve())?;
        *out = Box::into_raw(Box::new(PfConfig(c)));
        Ok(PfStatus::Ok)
    })
}

/// Built-in configuration by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_config_from_preset(name: *const c_char, out: *mut *mut PfConfig) -> PfStatus {
    guard(|| {
        if out.is_null() {
            return Err(arg_err("out is null"));
        }
        let c = lib(preset(str_arg(name, "name")?))?;
        *out = Box::into_raw(Box::new(PfConfig(c)));
        Ok(PfStatus::Ok)
    })
}

/// Override the ensemble: `sampling` 0 Monte-Carlo, 1 Gauss–Hermite,
/// 2 uniform; `size` realizations, order or nodes.
///
/// # Safety
/// `config` must come from a `pf_config_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn pf_config_set_ensemble(
    config: *mut PfConfig,
    sampling: c_int,
    size: usize,
    seed: u64,
) -> PfStatus {
    use pulsefocus::cli::config::SamplingKind;
    guard(|| {
        let c = config.as_mut().ok_or_else(|| arg_err("config is null"))?;
        let kind = match sampling {
            0 => SamplingKind::MonteCarlo,
            1 => SamplingKind::GaussHermite,
            2 => SamplingKind::Uniform,
            _ => return Err(arg_err("sampling must be 0, 1 or 2")),
        };
        let mut next = c.0.clone();
        next.ensemble.sampling = kind;
        next.ensemble.size = size;
        next.ensemble.seed = seed;
        lib(next.resolve())?;
        c.0 = next;
        Ok(PfStatus::Ok)
    })
}

/// Override the frequency grid: `points` samples over center ± half_span (MHz).
///
/// # Safety
/// `config` must come from a `pf_config_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn pf_config_set_frequencies(
    config: *mut PfConfig,
    center_mhz: f64,
    half_span_mhz: f64,
    points: usize,
) -> PfStatus {
    guard(|| {
        let c = config.as_mut().ok_or_else(|| arg_err("config is null"))?;
        let mut next = c.0.clone();
        next.frequencies.center_mhz = center_mhz;
        next.frequencies.half_span_mhz = Some(half_span_mhz);
        next.frequencies.points = points;
        lib(next.resolve())?;
        c.0 = next;
        Ok(PfStatus::Ok)
    })
}

/// Serialize to TOML. Release the string with [`pf_string_free`].
///
/// # Safety
/// `config` must come from a `pf_config_*` constructor and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn pf_config_to_toml(config: *const PfConfig, out: *mut *mut c_char) -> PfStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| arg_err("config is null"))?;
        if out.is_null() {
            return Err(arg_err("out is null"));
        }
        let text = lib(c.0.to_toml())?;
        *out = CString::new(text).map_err(|_| arg_err("config contains NUL"))?.into_raw();
        Ok(PfStatus::Ok)
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn pf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `config` must come from a `pf_config_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn pf_config_free(config: *mut PfConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Compute the normalized ensemble spectrum of `config`.
///
/// # Safety
/// `config` must come from a `pf_config_*` constructor and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn pf_spectrum_compute(config: *const PfConfig, out: *mut *mut PfSpectrum) -> PfStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| arg_err("config is null"))?;
        if out.is_null() {
            return Err(arg_err("out is null"));
        }
        let r = lib(c.0.resolve())?;
        let s = lib(ensemble_spectrum(&r.model, &r.seq, &r.params, &r.grid, &r.freqs_hz))?;
        *out = Box::into_raw(Box::new(PfSpectrum(s)));
        Ok(PfStatus::Ok)
    })
}

/// Number of frequencies, 0 for a null handle.
///
/// # Safety
/// `spectrum` must come from [`pf_spectrum_compute`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pf_spectrum_len(spectrum: *const PfSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.0.len())
}

/// Copy one column (a [`PfSpectrumColumn`] value) into `buf` (capacity `len`).
///
/// # Safety
/// `spectrum` must come from [`pf_spectrum_compute`]; `buf` must hold `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn pf_spectrum_copy(
    spectrum: *const PfSpectrum,
    column: c_int,
    buf: *mut f64,
    len: usize,
) -> PfStatus {
    guard(|| {
        let s = &spectrum.as_ref().ok_or_else(|| arg_err("spectrum is null"))?.0;
        if buf.is_null() {
            return Err(arg_err("buf is null"));
        }
        let src = match column {
            c if c == PfSpectrumColumn::Frequency as c_int => &s.frequencies,
            c if c == PfSpectrumColumn::P1 as c_int => &s.p1,
            c if c == PfSpectrumColumn::P2 as c_int => &s.p2,
            c if c == PfSpectrumColumn::Q as c_int => &s.q,
            c if c == PfSpectrumColumn::QStderr as c_int => &s.stderr,
            _ => return Err(arg_err("unknown spectrum column")),
        };
        if len < src.len() {
            return Err((PfStatus::BufferTooSmall, format!("buffer holds {len}, need {}", src.len())));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
        Ok(PfStatus::Ok)
    })
}

/// # Safety
/// `spectrum` must come from [`pf_spectrum_compute`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pf_spectrum_free(spectrum: *mut PfSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Peak Rabi frequency (rad/s) giving a Gaussian pulse of `fwhm_ns`,
/// truncated at ±3σ, the area `angle_pi`·π.
///
/// # Safety
/// `omega_out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_calibrate_pulse(fwhm_ns: f64, angle_pi: f64, omega_out: *mut f64) -> PfStatus {
    guard(|| {
        if omega_out.is_null() {
            return Err(arg_err("omega_out is null"));
        }
        let fwhm = ns_to_s(fwhm_ns);
        let support = pulsefocus::pulse::DEFAULT_SUPPORT_SIGMAS * fwhm / GAUSSIAN_FWHM_PER_SIGMA;
        *omega_out = lib(calibrate_pulse_amplitude(fwhm, angle_pi * std::f64::consts::PI, support))?;
        Ok(PfStatus::Ok)
    })
}

/// Least-squares fit of a named model (`lorentzian_sum(n)`, `pseudo_voigt`,
/// `gaussian`, `exponential`, `bi_exponential`) to `n` samples.
///
/// `weights` and `init` may be null; a null `init` estimates the start from
/// the data. Fitted parameters go to `params_out` (capacity `params_len`),
/// their count to `n_params_out`. Returns `FitNotConverged` with the outputs
/// filled when the optimizer stops early.
///
/// # Safety
/// `x`, `y` and a non-null `weights` must hold `n` doubles, a non-null
/// `init` and `params_out` their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pf_fit(
    model: *const c_char,
    x: *const f64,
    y: *const f64,
    weights: *const f64,
    n: usize,
    init: *const f64,
    init_len: usize,
    params_out: *mut f64,
    params_len: usize,
    n_params_out: *mut usize,
) -> PfStatus {
    guard(|| {
        let spec: ModelSpec = lib(str_arg(model, "model")?.parse())?;
        let x = slice_arg(x, n, "x")?;
        let y = slice_arg(y, n, "y")?;
        let w = if weights.is_null() { None } else { Some(slice_arg(weights, n, "weights")?) };
        let init = if init.is_null() {
            lib(initial_guess(&spec, x, y, None, 0.0))?
        } else {
            slice_arg(init, init_len, "init")?.to_vec()
        };
        let k = spec.n_params();
        if params_out.is_null() || params_len < k {
            return Err((PfStatus::BufferTooSmall, format!("params_out must hold {k} values")));
        }
        let r = lib(fit_with(&spec, x, y, w, &init, &FitOptions::default()))?;
        ptr::copy_nonoverlapping(r.params.as_ptr(), params_out, k);
        if let Some(n_out) = n_params_out.as_mut() {
            *n_out = k;
        }
        if r.converged {
            Ok(PfStatus::Ok)
        } else {
            Err((PfStatus::FitNotConverged, r.message))
        }
    })
}
