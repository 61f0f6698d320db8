//! C ABI over the `ntnsync` estimator.
//!
//! Every call returns an [`NtnStatus`]; on failure the message of the last
//! error on the calling thread is available from [`ntn_last_error`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ntnsync::channel::{apply_impairments, ChannelKind, ImpairmentConfig, TdlCProfile};
use ntnsync::estimator::{estimate, DopplerMap, EstimatorConfig, SignHypothesis};
use ntnsync::waveform::{build_schedule, gen_preamble, Format, PreambleConfig};
use ntnsync::{Error, IqBuffer};
use num_complex::Complex64;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    BufferTooSmall = 3,
    PreambleNotFound = 4,
    EstimationFailed = 5,
    Internal = 6,
    Panic = 7,
}

/// Preamble format selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtnFormat {
    Format0 = 0,
    Format1 = 1,
}

/// Propagation channel selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtnChannel {
    Awgn = 0,
    TdlC = 1,
}

/// Impairments applied by [`ntn_simulate`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NtnImpairments {
    pub toa_us: f64,
    pub cfo_hz: f64,
    pub doppler_rate_hz_per_s: f64,
    /// Ignored when `noiseless` is non-zero.
    pub snr_db: f64,
    pub noiseless: u8,
    pub channel: NtnChannel,
    pub seed: u64,
}

/// Output of [`ntn_estimate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NtnEstimate {
    pub coarse_toa_us: f64,
    pub fine_toa_us: f64,
    pub cfo_hz: f64,
    pub t_ph_samples: f64,
    pub first_wrap_index: f64,
    /// `+1` or `-1`, the sign of the injected offset that was kept.
    pub sign_hypothesis: i32,
    pub n_candidates: u32,
    pub chosen: u32,
}

/// Opaque estimator state: waveform, estimator settings and Doppler map.
pub struct NtnEstimator {
    preamble: PreambleConfig,
    estimator: EstimatorConfig,
    map: DopplerMap,
    replica: IqBuffer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NtnStatus {
    match e {
        Error::InvalidConfig(_) | Error::Json(_) | Error::DelayOutOfRange { .. } => NtnStatus::InvalidConfig,
        Error::PreambleNotFound => NtnStatus::PreambleNotFound,
        Error::EstimationFailed(_) | Error::Degenerate(_) => NtnStatus::EstimationFailed,
        _ => NtnStatus::Internal,
    }
}

fn guard<F: FnOnce() -> Result<(), NtnStatus>>(f: F) -> NtnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NtnStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside ntnsync".into());
            NtnStatus::Panic
        }
    }
}

fn fail(e: Error) -> NtnStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> NtnStatus {
    set_error(format!("{what} is null"));
    NtnStatus::NullPointer
}

fn build(preamble: PreambleConfig, estimator: EstimatorConfig, map: DopplerMap) -> Result<NtnEstimator, Error> {
    preamble.validate()?;
    estimator.validate()?;
    map.validate()?;
    let replica = gen_preamble(&preamble, &build_schedule(&preamble))?;
    Ok(NtnEstimator { preamble, estimator, map, replica })
}

/// Copies `x` as interleaved I/Q into `out`, reporting the sample count in `len`.
///
/// # Safety
/// `out` must be valid for `2 * cap` doubles.
unsafe fn write_iq(x: &IqBuffer, out: *mut f64, cap: usize, len: *mut usize) -> Result<(), NtnStatus> {
    *len = x.len();
    if cap < x.len() {
        set_error(format!("buffer holds {cap} samples, need {}", x.len()));
        return Err(NtnStatus::BufferTooSmall);
    }
    let dst = std::slice::from_raw_parts_mut(out, 2 * x.len());
    for (d, s) in dst.chunks_exact_mut(2).zip(&x.samples) {
        d[0] = s.re;
        d[1] = s.im;
    }
    Ok(())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ntn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ntn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates an estimator with default settings for the given format and repetition count.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn ntn_estimator_new(format: NtnFormat, n_rep: u32, out: *mut *mut NtnEstimator) -> NtnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let format = match format {
            NtnFormat::Format0 => Format::Format0,
            NtnFormat::Format1 => Format::Format1,
        };
        let h = build(PreambleConfig::new(format, n_rep as usize), EstimatorConfig::default(), DopplerMap::default())
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(h));
        Ok(())
    })
}

/// Creates an estimator from JSON with optional `preamble`, `estimator` and `doppler_map` objects.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ntn_estimator_from_json(json: *const c_char, out: *mut *mut NtnEstimator) -> NtnStatus {
    #[derive(serde::Deserialize, Default)]
    #[serde(default, deny_unknown_fields)]
    struct Doc {
        preamble: PreambleConfig,
        estimator: EstimatorConfig,
        doppler_map: DopplerMap,
    }
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| {
            set_error(format!("config is not UTF-8: {e}"));
            NtnStatus::InvalidConfig
        })?;
        let doc: Doc = serde_json::from_str(text).map_err(|e| fail(e.into()))?;
        let h = build(doc.preamble, doc.estimator, doc.doppler_map).map_err(fail)?;
        *out = Box::into_raw(Box::new(h));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `h` must come from a constructor of this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ntn_estimator_free(h: *mut NtnEstimator) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of complex samples in the transmitted preamble.
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ntn_preamble_len(h: *const NtnEstimator) -> usize {
    h.as_ref().map_or(0, |h| h.replica.len())
}

/// Number of complex samples produced by [`ntn_simulate`].
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ntn_received_len(h: *const NtnEstimator) -> usize {
    h.as_ref().map_or(0, |h| {
        h.replica.len() + h.preamble.us_to_samples(h.estimator.d_max_us).ceil() as usize
    })
}

/// Writes the transmitted preamble as interleaved I/Q.
///
/// # Safety
/// `out` must hold `2 * cap` doubles and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ntn_generate(h: *const NtnEstimator, out: *mut f64, cap: usize, len: *mut usize) -> NtnStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        if out.is_null() || len.is_null() {
            return Err(null("output"));
        }
        write_iq(&h.replica, out, cap, len)
    })
}

/// Passes the preamble through the impairment chain and writes the received samples.
///
/// The buffer starts at the first transmitted sample and holds
/// [`ntn_received_len`] samples.
///
/// # Safety
/// `imp` must be valid, `out` must hold `2 * cap` doubles and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ntn_simulate(
    h: *const NtnEstimator,
    imp: *const NtnImpairments,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> NtnStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let imp = imp.as_ref().ok_or_else(|| null("impairments"))?;
        if out.is_null() || len.is_null() {
            return Err(null("output"));
        }
        let cfg = ImpairmentConfig {
            toa_samples: h.preamble.us_to_samples(imp.toa_us),
            cfo_hz: imp.cfo_hz,
            doppler_rate_hz_per_s: imp.doppler_rate_hz_per_s,
            snr_db: (imp.noiseless == 0).then_some(imp.snr_db),
            channel: match imp.channel {
                NtnChannel::Awgn => ChannelKind::Awgn,
                NtnChannel::TdlC => ChannelKind::TdlC,
            },
            seed: imp.seed,
            max_toa_samples: h.preamble.us_to_samples(h.estimator.d_max_us).ceil(),
            sample_rate: h.preamble.sample_rate,
            ..Default::default()
        };
        let profile = TdlCProfile::default();
        let profile = (cfg.channel == ChannelKind::TdlC).then_some(&profile);
        let rx = apply_impairments(&h.replica, &cfg, profile).map_err(fail)?;
        write_iq(&rx, out, cap, len)
    })
}

/// Estimates ToA and CFO from `n` interleaved I/Q samples starting at the first transmitted sample.
///
/// # Safety
/// `iq` must hold `2 * n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ntn_estimate(
    h: *const NtnEstimator,
    iq: *const f64,
    n: usize,
    measured_rate_hz_per_s: f64,
    out: *mut NtnEstimate,
) -> NtnStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        if iq.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let src = std::slice::from_raw_parts(iq, 2 * n);
        let samples = src.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let rx = IqBuffer::new(samples, h.preamble.n_start);
        let e = estimate(&rx, &h.preamble, &h.map, measured_rate_hz_per_s, &h.estimator).map_err(fail)?;
        *out = NtnEstimate {
            coarse_toa_us: e.coarse_toa_us,
            fine_toa_us: e.fine_toa_us,
            cfo_hz: e.cfo_hz,
            t_ph_samples: e.t_ph_samples,
            first_wrap_index: e.first_wrap_index,
            sign_hypothesis: match e.sign_hypothesis {
                SignHypothesis::Pos => 1,
                SignHypothesis::Neg => -1,
            },
            n_candidates: e.candidates.len() as u32,
            chosen: e.chosen as u32,
        };
        Ok(())
    })
}
