//! C ABI over the `moiso` simulator.
//!
//! Every function returns a [`MoisoStatus`]; results go through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`moiso_last_error`]. Handles are opaque and must be released with the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use moiso::device::{self, CalibrationTargets, IsolatorConfig, PortPair};
use moiso::experiments::{self, Channel, Event, TimestampStream};
use moiso::quantum::{self, BiphotonState, IndistinguishabilityParams, SpectralGrid};
use moiso::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoisoStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Structure = 3,
    Calibration = 4,
    Fit = 5,
    Format = 6,
    State = 7,
    Size = 8,
    UndefinedRatio = 9,
    Config = 10,
    Io = 11,
    /// A Rust panic was caught at the boundary.
    Internal = 12,
}

impl From<&Error> for MoisoStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => Self::Domain,
            Error::Structure(_) => Self::Structure,
            Error::Calibration { .. } => Self::Calibration,
            Error::Fit { .. } => Self::Fit,
            Error::Format { .. } => Self::Format,
            Error::State(_) => Self::State,
            Error::Size(_) => Self::Size,
            Error::UndefinedRatio(_) => Self::UndefinedRatio,
            Error::Config(_) | Error::Json(_) => Self::Config,
            Error::Io(_) => Self::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(MoisoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MoisoStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> MoisoStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            MoisoStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("panic inside moiso");
            MoisoStatus::Internal
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn input<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

/// Message of the last failed call on this thread; empty after success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn moiso_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Opaque isolator configuration.
pub struct MoisoDevice {
    config: IsolatorConfig,
}

/// Opaque biphoton state.
pub struct MoisoState {
    state: BiphotonState,
}

/// Classical targets for calibration. An infinite peak isolation is allowed.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MoisoTargets {
    pub peak_isolation_db: f64,
    pub peak_wavelength_nm: f64,
    pub insertion_loss_db: f64,
    pub bandwidth_10db_nm: f64,
    pub reference_wavelength_nm: f64,
    pub isolation_at_reference_db: f64,
    pub insertion_loss_at_reference_db: f64,
}

impl From<MoisoTargets> for CalibrationTargets {
    fn from(t: MoisoTargets) -> Self {
        CalibrationTargets {
            peak_isolation_db: t.peak_isolation_db,
            peak_wavelength_nm: t.peak_wavelength_nm,
            insertion_loss_db: t.insertion_loss_db,
            bandwidth_10db_nm: t.bandwidth_10db_nm,
            reference_wavelength_nm: t.reference_wavelength_nm,
            isolation_at_reference_db: t.isolation_at_reference_db,
            insertion_loss_at_reference_db: t.insertion_loss_at_reference_db,
        }
    }
}

/// Counts from [`moiso_count_coincidences`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct MoisoCoincidences {
    pub raw_coincidences: u64,
    pub accidentals: f64,
    pub net: f64,
    pub sigma: f64,
    pub singles_i: u64,
    pub singles_ii: u64,
}

/// The measured device characteristics used by default.
#[no_mangle]
pub extern "C" fn moiso_targets_default() -> MoisoTargets {
    let t = CalibrationTargets::default();
    MoisoTargets {
        peak_isolation_db: t.peak_isolation_db,
        peak_wavelength_nm: t.peak_wavelength_nm,
        insertion_loss_db: t.insertion_loss_db,
        bandwidth_10db_nm: t.bandwidth_10db_nm,
        reference_wavelength_nm: t.reference_wavelength_nm,
        isolation_at_reference_db: t.isolation_at_reference_db,
        insertion_loss_at_reference_db: t.insertion_loss_at_reference_db,
    }
}

fn boxed_device(config: IsolatorConfig, device: *mut *mut MoisoDevice) -> Result<(), Failure> {
    let slot = unsafe { out(device, "device")? };
    *slot = Box::into_raw(Box::new(MoisoDevice { config }));
    Ok(())
}

/// Uncalibrated default device.
///
/// # Safety
/// `device` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn moiso_device_default(device: *mut *mut MoisoDevice) -> MoisoStatus {
    guard(|| boxed_device(IsolatorConfig::default(), device))
}

/// Fits the device model to `targets`.
///
/// # Safety
/// `targets` must be readable and `device` writable.
#[no_mangle]
pub unsafe extern "C" fn moiso_device_calibrate(
    targets: *const MoisoTargets,
    device: *mut *mut MoisoDevice,
) -> MoisoStatus {
    guard(|| {
        let t: CalibrationTargets = (*input(targets, "targets")?).into();
        let cal = device::calibrate(&t)?;
        boxed_device(cal.config, device)
    })
}

/// Device from a JSON object with the configuration fields; missing fields
/// take their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `device` writable.
#[no_mangle]
pub unsafe extern "C" fn moiso_device_from_json(json: *const c_char, device: *mut *mut MoisoDevice) -> MoisoStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Failure(MoisoStatus::Config, e.to_string()))?;
        let config: IsolatorConfig = serde_json::from_str(text).map_err(Error::from)?;
        config.validate()?;
        boxed_device(config, device)
    })
}

/// # Safety
/// `device` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn moiso_device_free(device: *mut MoisoDevice) {
    if !device.is_null() {
        drop(Box::from_raw(device));
    }
}

/// Power transmission from port `input` to port `output` (1-4).
///
/// # Safety
/// `device` must be a live handle and `power` writable.
#[no_mangle]
pub unsafe extern "C" fn moiso_pair_power(
    device: *const MoisoDevice,
    wavelength_nm: f64,
    m: f64,
    input_port: u8,
    output_port: u8,
    power: *mut f64,
) -> MoisoStatus {
    guard(|| {
        let d = input(device, "device")?;
        let pair = PortPair::new(input_port, output_port)?;
        *out(power, "power")? = device::pair_power(&d.config, wavelength_nm, m, pair)?;
        Ok(())
    })
}

/// Forward over backward transmission in dB for the pair `input → output`.
///
/// # Safety
/// `device` must be a live handle and `isolation_db` writable.
#[no_mangle]
pub unsafe extern "C" fn moiso_isolation_db(
    device: *const MoisoDevice,
    wavelength_nm: f64,
    m: f64,
    input_port: u8,
    output_port: u8,
    isolation_db: *mut f64,
) -> MoisoStatus {
    guard(|| {
        let d = input(device, "device")?;
        let pair = PortPair::new(input_port, output_port)?;
        *out(isolation_db, "isolation_db")? = device::isolation_ratio_db(&d.config, wavelength_nm, m, pair)?;
        Ok(())
    })
}

/// Forward and backward transmission in dB at `n` wavelengths.
///
/// # Safety
/// `wavelengths_nm`, `forward_db` and `backward_db` must each hold `n`
/// elements.
#[no_mangle]
pub unsafe extern "C" fn moiso_spectrum(
    device: *const MoisoDevice,
    wavelengths_nm: *const f64,
    n: usize,
    m: f64,
    input_port: u8,
    output_port: u8,
    forward_db: *mut f64,
    backward_db: *mut f64,
) -> MoisoStatus {
    guard(|| {
        let d = input(device, "device")?;
        let grid = slice(wavelengths_nm, n, "wavelengths_nm")?;
        let fwd = slice_mut(forward_db, n, "forward_db")?;
        let bwd = slice_mut(backward_db, n, "backward_db")?;
        let pair = PortPair::new(input_port, output_port)?;
        let points = device::transmission_spectrum(&d.config, grid, m, pair)?;
        for (i, p) in points.iter().enumerate() {
            fwd[i] = p.forward_db;
            bwd[i] = p.backward_db;
        }
        Ok(())
    })
}

/// Gaussian frequency-anticorrelated pair state on a grid of `n_bins`
/// centred on `center_nm` spanning `±half_width_ghz`.
///
/// # Safety
/// `state` must be writable.
#[no_mangle]
pub unsafe extern "C" fn moiso_state_spdc(
    center_nm: f64,
    half_width_ghz: f64,
    n_bins: usize,
    bandwidth_fwhm_ghz: f64,
    state: *mut *mut MoisoState,
) -> MoisoStatus {
    guard(|| {
        let slot = out(state, "state")?;
        let grid = SpectralGrid::around_wavelength(center_nm, half_width_ghz, n_bins)?;
        let s = quantum::spdc_state(&grid, bandwidth_fwhm_ghz)?;
        *slot = Box::into_raw(Box::new(MoisoState { state: s }));
        Ok(())
    })
}

/// # Safety
/// `state` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn moiso_state_free(state: *mut MoisoState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Replaces the state by its post-selected image after the signal photon
/// crosses the device from `input` to `output`; writes the survival
/// probability.
///
/// # Safety
/// Handles must be live and `survival` writable.
#[no_mangle]
pub unsafe extern "C" fn moiso_state_through_device(
    state: *mut MoisoState,
    device: *const MoisoDevice,
    m: f64,
    input_port: u8,
    output_port: u8,
    survival: *mut f64,
) -> MoisoStatus {
    guard(|| {
        let s = out(state, "state")?;
        let d = input(device, "device")?;
        let path = quantum::SignalPath::Isolator {
            config: d.config,
            m,
            pair: PortPair::new(input_port, output_port)?,
        };
        let (next, p) = quantum::apply_device_to_signal(&s.state, &path)?;
        *out(survival, "survival")? = p;
        s.state = next;
        Ok(())
    })
}

/// Coincidence probability behind a 50/50 splitter with the signal delayed.
///
/// # Safety
/// `state` must be live and `probability` writable.
#[no_mangle]
pub unsafe extern "C" fn moiso_hom_probability(
    state: *const MoisoState,
    mode_overlap: f64,
    delay_ps: f64,
    probability: *mut f64,
) -> MoisoStatus {
    guard(|| {
        let s = input(state, "state")?;
        let indist = IndistinguishabilityParams::new(mode_overlap)?;
        *out(probability, "probability")? = quantum::hom_coincidence_probability(&s.state, &indist, delay_ps);
        Ok(())
    })
}

/// `(c_max − c_min) / c_max`.
///
/// # Safety
/// `visibility` must be writable.
#[no_mangle]
pub unsafe extern "C" fn moiso_visibility(c_max: f64, c_min: f64, visibility: *mut f64) -> MoisoStatus {
    guard(|| {
        *out(visibility, "visibility")? = experiments::visibility(c_max, c_min)?;
        Ok(())
    })
}

/// Coincidences in a two-channel stream given as parallel arrays.
/// `channels[i]` is 1 or 2; times must be non-decreasing per channel.
///
/// # Safety
/// `channels` and `times_ps` must hold `n` elements; `result` writable.
#[no_mangle]
pub unsafe extern "C" fn moiso_count_coincidences(
    channels: *const u8,
    times_ps: *const u64,
    n: usize,
    window_ps: f64,
    accidental_offset_ps: f64,
    result: *mut MoisoCoincidences,
) -> MoisoStatus {
    guard(|| {
        let ch = slice(channels, n, "channels")?;
        let ts = slice(times_ps, n, "times_ps")?;
        let res = out(result, "result")?;
        let events = ch
            .iter()
            .zip(ts)
            .enumerate()
            .map(|(i, (&c, &t))| {
                let channel = match c {
                    1 => Channel::I,
                    2 => Channel::II,
                    other => {
                        return Err(Error::Format {
                            line: i + 1,
                            message: format!("channel {other} is not 1 or 2"),
                        })
                    }
                };
                Ok(Event { channel, time_ps: t })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let stream = TimestampStream::new(events)?;
        let rec = experiments::count_coincidences_with(&stream, window_ps, accidental_offset_ps)?;
        *res = MoisoCoincidences {
            raw_coincidences: rec.raw_coincidences,
            accidentals: rec.accidentals,
            net: rec.net,
            sigma: rec.sigma,
            singles_i: rec.singles_i,
            singles_ii: rec.singles_ii,
        };
        Ok(())
    })
}
