//! Four-port Mach–Zehnder magneto-optical isolator.
//!
//! Two waveguide modes run through the interferometer: upper (mode 0) and
//! lower (mode 1). Ports sit at the mode ends:
//!
//! ```text
//!   port 1 ── upper ──┐          ┌── upper ── port 4
//!                    coupler ═ arms ═ coupler
//!   port 3 ── lower ──┘          └── lower ── port 2
//! ```
//!
//! Forward light enters on the left (ports 1, 3), backward light on the
//! right (ports 2, 4). At saturation the forward interferometer phase is 0
//! (full cross-over: 1→2, 3→4) and the backward phase is π (bar: 2→3,
//! 4→1), which is the circulator 1→2→3→4→1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use crate::error::{domain, structure, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::magneto::{nrps_phase, MoFilmParams};
use crate::optics::{
    cascade, make_attenuator, make_coupler, make_phase_shifter, parallel, CMatrix, Direction, DirectionalElement,
    PortBasis,
};

pub const BAND_MIN_NM: f64 = 1500.0;
pub const BAND_MAX_NM: f64 = 1600.0;
/// Powers below this are reported as this floor in dB conversions.
pub const POWER_FLOOR: f64 = 1e-30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsolatorConfig {
    pub coupler_ratio: f64,
    pub reciprocal_phase_at_center_rad: f64,
    pub center_wavelength_nm: f64,
    /// Physical arm length difference; sets the spectral period.
    pub arm_path_imbalance_um: f64,
    pub group_index: f64,
    /// Loss common to both arms (propagation plus coupler excess loss).
    pub base_loss_db: f64,
    /// Extra loss in the lower arm. Limits the backward null and so the
    /// peak isolation.
    pub arm_loss_imbalance_db: f64,
    pub film: MoFilmParams,
}

impl Default for IsolatorConfig {
    fn default() -> Self {
        Self {
            coupler_ratio: 0.5,
            reciprocal_phase_at_center_rad: FRAC_PI_2,
            center_wavelength_nm: 1544.0,
            arm_path_imbalance_um: 18.0,
            group_index: 2.0,
            base_loss_db: 2.0,
            arm_loss_imbalance_db: 0.0,
            film: MoFilmParams::default(),
        }
    }
}

impl IsolatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.coupler_ratio) {
            return Err(domain("coupler_ratio must lie in [0, 1]"));
        }
        if !(self.base_loss_db >= 0.0 && self.base_loss_db.is_finite()) {
            return Err(domain("base_loss_db must be finite and >= 0"));
        }
        if !(self.arm_loss_imbalance_db >= 0.0 && self.arm_loss_imbalance_db.is_finite()) {
            return Err(domain("arm_loss_imbalance_db must be finite and >= 0"));
        }
        if !(self.group_index > 0.0 && self.group_index.is_finite()) {
            return Err(domain("group_index must be positive"));
        }
        if !self.arm_path_imbalance_um.is_finite() || !self.reciprocal_phase_at_center_rad.is_finite() {
            return Err(domain("arm phase parameters must be finite"));
        }
        if !(BAND_MIN_NM..=BAND_MAX_NM).contains(&self.center_wavelength_nm) {
            return Err(domain("center wavelength outside the 1500-1600 nm band"));
        }
        self.film.validate()
    }

    /// Reciprocal arm phase difference at `wavelength_nm`.
    pub fn reciprocal_phase(&self, wavelength_nm: f64) -> f64 {
        let opd_nm = self.group_index * self.arm_path_imbalance_um * 1e3;
        self.reciprocal_phase_at_center_rad
            + 2.0 * PI * opd_nm * (1.0 / wavelength_nm - 1.0 / self.center_wavelength_nm)
    }
}

/// Device port, numbered 1 to 4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Port(u8);

impl Port {
    pub fn new(n: u8) -> Result<Self> {
        if (1..=4).contains(&n) {
            Ok(Self(n))
        } else {
            Err(structure(format!("port {n} does not exist (ports are 1-4)")))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    fn is_left(self) -> bool {
        matches!(self.0, 1 | 3)
    }

    fn mode(self) -> usize {
        match self.0 {
            1 | 4 => 0,
            _ => 1,
        }
    }
}

impl TryFrom<u8> for Port {
    type Error = Error;
    fn try_from(n: u8) -> Result<Self> {
        Port::new(n)
    }
}

impl From<Port> for u8 {
    fn from(p: Port) -> u8 {
        p.0
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered (input, output) ports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortPair {
    pub input: Port,
    pub output: Port,
}

impl PortPair {
    pub fn new(input: u8, output: u8) -> Result<Self> {
        Ok(Self {
            input: Port::new(input)?,
            output: Port::new(output)?,
        })
    }

    pub fn reversed(self) -> Self {
        Self {
            input: self.output,
            output: self.input,
        }
    }

    /// Propagation direction, or `None` when both ports share a side.
    pub fn direction(self) -> Option<Direction> {
        match (self.input.is_left(), self.output.is_left()) {
            (true, false) => Some(Direction::Forward),
            (false, true) => Some(Direction::Backward),
            _ => None,
        }
    }
}

impl fmt::Display for PortPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.input, self.output)
    }
}

fn check_inputs(wavelength_nm: f64, m: f64) -> Result<()> {
    if !(BAND_MIN_NM..=BAND_MAX_NM).contains(&wavelength_nm) {
        return Err(domain(format!(
            "wavelength {wavelength_nm} nm outside the {BAND_MIN_NM}-{BAND_MAX_NM} nm band"
        )));
    }
    if !(m.abs() <= 1.0) {
        return Err(domain(format!("magnetization {m} outside [-1, 1]")));
    }
    Ok(())
}

/// Two-mode interferometer element at one wavelength and magnetization:
/// coupler, then both arms, then coupler, then the common loss.
pub fn device_matrix(config: &IsolatorConfig, wavelength_nm: f64, m: f64) -> Result<DirectionalElement> {
    check_inputs(wavelength_nm, m)?;
    let couple = make_coupler(config.coupler_ratio)?;
    let theta_f = nrps_phase(&config.film, m, Direction::Forward);
    let theta_b = nrps_phase(&config.film, m, Direction::Backward);
    let rec = config.reciprocal_phase(wavelength_nm);

    // Films on the two arms are magnetized in opposite senses (push-pull).
    let upper = cascade(&[
        make_phase_shifter(rec, rec)?,
        make_phase_shifter(-0.5 * theta_f, -0.5 * theta_b)?,
    ])?;
    let lower = cascade(&[
        make_phase_shifter(0.5 * theta_f, 0.5 * theta_b)?,
        make_attenuator(config.arm_loss_imbalance_db)?,
    ])?;
    let arms = parallel(&[upper, lower])?;
    let loss = parallel(&[
        make_attenuator(config.base_loss_db)?,
        make_attenuator(config.base_loss_db)?,
    ])?;
    cascade(&[couple.clone(), arms, couple, loss])?.with_basis(PortBasis::new(["upper", "lower"])?)
}

/// Complex amplitude from `pair.input` to `pair.output`. Same-side pairs
/// carry no amplitude (reflections are not modeled).
pub fn port_amplitude(element: &DirectionalElement, pair: PortPair) -> Complex64 {
    match pair.direction() {
        Some(dir) => element.matrix(dir)[(pair.output.mode(), pair.input.mode())],
        None => Complex64::new(0.0, 0.0),
    }
}

/// Full 4×4 scattering matrix, `S[out−1][in−1]`.
pub fn scattering_matrix(config: &IsolatorConfig, wavelength_nm: f64, m: f64) -> Result<CMatrix> {
    let el = device_matrix(config, wavelength_nm, m)?;
    let mut s = CMatrix::zeros(4, 4);
    for i in 1..=4u8 {
        for o in 1..=4u8 {
            let pair = PortPair::new(i, o)?;
            s[(o as usize - 1, i as usize - 1)] = port_amplitude(&el, pair);
        }
    }
    Ok(s)
}

pub fn pair_power(config: &IsolatorConfig, wavelength_nm: f64, m: f64, pair: PortPair) -> Result<f64> {
    let el = device_matrix(config, wavelength_nm, m)?;
    Ok(port_amplitude(&el, pair).norm_sqr())
}

pub fn to_db(power: f64) -> f64 {
    10.0 * power.max(POWER_FLOOR).log10()
}

/// Interferometer power closed form, for cross-checking the matrix product:
/// `¼·|a₁e^{iφ₁} ± a₂e^{iφ₂}|²` times the common loss.
pub fn analytic_pair_power(config: &IsolatorConfig, wavelength_nm: f64, m: f64, pair: PortPair) -> Option<f64> {
    let dir = pair.direction()?;
    let theta = nrps_phase(&config.film, m, dir);
    let dphi = config.reciprocal_phase(wavelength_nm) - theta;
    let a2 = 10f64.powf(-config.arm_loss_imbalance_db / 20.0);
    let r = config.coupler_ratio;
    let (t, k) = ((1.0 - r).sqrt(), r.sqrt());
    let base = 10f64.powf(-config.base_loss_db / 10.0);
    let e1 = Complex64::from_polar(1.0, dphi);
    let cross = pair.input.mode() != pair.output.mode();
    let amp = if cross {
        t * k * (e1 + a2)
    } else if pair.input.mode() == 0 {
        t * t * e1 - k * k * a2
    } else {
        t * t * a2 - k * k * e1
    };
    Some(amp.norm_sqr() * base)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub wavelength_nm: f64,
    pub forward_db: f64,
    pub backward_db: f64,
    pub isolation_db: f64,
}

/// `λ_min + i·step` for `i = 0..` while `≤ λ_max` (with a tiny slack).
pub fn wavelength_grid(min_nm: f64, max_nm: f64, step_nm: f64) -> Result<Vec<f64>> {
    if !(min_nm < max_nm) {
        return Err(domain(format!(
            "wavelength range {min_nm}..{max_nm} is empty or inverted"
        )));
    }
    if !(step_nm > 0.0 && step_nm.is_finite()) {
        return Err(domain("wavelength step must be positive"));
    }
    let n = ((max_nm - min_nm) / step_nm + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| min_nm + i as f64 * step_nm).collect())
}

/// Forward (`pair`) and backward (`pair` reversed) spectra in dB.
pub fn transmission_spectrum(
    config: &IsolatorConfig,
    wavelengths_nm: &[f64],
    m: f64,
    pair: PortPair,
) -> Result<Vec<SpectrumPoint>> {
    if wavelengths_nm.is_empty() {
        return Err(domain("empty wavelength grid"));
    }
    if pair.direction().is_none() {
        return Err(structure(format!("ports {pair} are on the same side of the device")));
    }
    wavelengths_nm
        .iter()
        .map(|&w| {
            let el = device_matrix(config, w, m)?;
            let f = to_db(port_amplitude(&el, pair).norm_sqr());
            let b = to_db(port_amplitude(&el, pair.reversed()).norm_sqr());
            Ok(SpectrumPoint {
                wavelength_nm: w,
                forward_db: f,
                backward_db: b,
                isolation_db: f - b,
            })
        })
        .collect()
}

pub fn isolation_ratio_db(config: &IsolatorConfig, wavelength_nm: f64, m: f64, pair: PortPair) -> Result<f64> {
    let el = device_matrix(config, wavelength_nm, m)?;
    Ok(to_db(port_amplitude(&el, pair).norm_sqr()) - to_db(port_amplitude(&el, pair.reversed()).norm_sqr()))
}

/// Wavelength of maximum isolation: coarse scan then golden section.
pub fn peak_isolation_wavelength(config: &IsolatorConfig, m: f64, pair: PortPair) -> Result<(f64, f64)> {
    let iso = |w: f64| isolation_ratio_db(config, w, m, pair);
    let step = 0.25;
    let grid = wavelength_grid(BAND_MIN_NM, BAND_MAX_NM, step)?;
    let mut best = (grid[0], iso(grid[0])?);
    for &w in &grid[1..] {
        let v = iso(w)?;
        if v > best.1 {
            best = (w, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(BAND_MIN_NM), (best.0 + step).min(BAND_MAX_NM));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (iso(c)?, iso(d)?);
    while b - a > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = iso(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = iso(d)?;
        }
    }
    let w = 0.5 * (a + b);
    let v = iso(w)?;
    Ok(if v >= best.1 { (w, v) } else { best })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub width_nm: f64,
    pub lower_nm: f64,
    pub upper_nm: f64,
    pub peak_nm: f64,
    pub peak_isolation_db: f64,
    /// False when isolation never reaches the threshold; width is then 0.
    pub reached: bool,
}

/// Width of the contiguous band around the isolation peak where isolation
/// is at least `threshold_db`. Edges are bisected to `resolution_nm`.
pub fn isolation_bandwidth(
    config: &IsolatorConfig,
    m: f64,
    pair: PortPair,
    threshold_db: f64,
    resolution_nm: f64,
) -> Result<Bandwidth> {
    let (peak, peak_iso) = peak_isolation_wavelength(config, m, pair)?;
    if peak_iso < threshold_db {
        return Ok(Bandwidth {
            width_nm: 0.0,
            lower_nm: peak,
            upper_nm: peak,
            peak_nm: peak,
            peak_isolation_db: peak_iso,
            reached: false,
        });
    }
    let above = |w: f64| -> Result<bool> { Ok(isolation_ratio_db(config, w, m, pair)? >= threshold_db) };
    let edge = |sign: f64| -> Result<f64> {
        let coarse = 0.05;
        let mut inside = peak;
        loop {
            let next = inside + sign * coarse;
            if !(BAND_MIN_NM..=BAND_MAX_NM).contains(&next) {
                return Ok(if sign > 0.0 { BAND_MAX_NM } else { BAND_MIN_NM });
            }
            if !above(next)? {
                let mut outside = next;
                while (outside - inside).abs() > resolution_nm {
                    let mid = 0.5 * (inside + outside);
                    if above(mid)? {
                        inside = mid;
                    } else {
                        outside = mid;
                    }
                }
                return Ok(0.5 * (inside + outside));
            }
            inside = next;
        }
    };
    let lower = edge(-1.0)?;
    let upper = edge(1.0)?;
    Ok(Bandwidth {
        width_nm: upper - lower,
        lower_nm: lower,
        upper_nm: upper,
        peak_nm: peak,
        peak_isolation_db: peak_iso,
        reached: true,
    })
}

/// 10 dB isolation bandwidth at 0.01 nm resolution or better.
pub fn bandwidth_10db(config: &IsolatorConfig, m: f64, pair: PortPair) -> Result<Bandwidth> {
    isolation_bandwidth(config, m, pair, 10.0, 1e-6)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationTargets {
    pub peak_isolation_db: f64,
    pub peak_wavelength_nm: f64,
    pub insertion_loss_db: f64,
    pub bandwidth_10db_nm: f64,
    pub reference_wavelength_nm: f64,
    pub isolation_at_reference_db: f64,
    pub insertion_loss_at_reference_db: f64,
}

impl Default for CalibrationTargets {
    /// The measured classical characteristics of the fabricated device.
    fn default() -> Self {
        Self {
            peak_isolation_db: 25.0,
            peak_wavelength_nm: 1544.0,
            insertion_loss_db: 2.3,
            bandwidth_10db_nm: 13.0,
            reference_wavelength_nm: 1550.0,
            isolation_at_reference_db: 11.0,
            insertion_loss_at_reference_db: 3.0,
        }
    }
}

impl CalibrationTargets {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.peak_isolation_db,
            self.peak_wavelength_nm,
            self.insertion_loss_db,
            self.bandwidth_10db_nm,
            self.reference_wavelength_nm,
            self.isolation_at_reference_db,
            self.insertion_loss_at_reference_db,
        ];
        if vals.iter().any(|v| !(*v > 0.0) || v.is_nan()) {
            return Err(domain("all calibration targets must be positive"));
        }
        if vals.iter().enumerate().any(|(i, v)| i != 0 && !v.is_finite()) {
            return Err(domain("only the peak isolation target may be infinite"));
        }
        for w in [self.peak_wavelength_nm, self.reference_wavelength_nm] {
            if !(BAND_MIN_NM..=BAND_MAX_NM).contains(&w) {
                return Err(domain(format!("target wavelength {w} nm outside the band")));
            }
        }
        if self.isolation_at_reference_db > self.peak_isolation_db {
            return Err(domain("reference isolation exceeds peak isolation"));
        }
        Ok(())
    }
}

/// Acceptance tolerances for each calibration target, in target units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTolerances {
    pub peak_isolation_db: f64,
    pub peak_wavelength_nm: f64,
    pub insertion_loss_db: f64,
    pub bandwidth_10db_nm: f64,
    pub isolation_at_reference_db: f64,
    pub insertion_loss_at_reference_db: f64,
}

impl Default for CalibrationTolerances {
    fn default() -> Self {
        Self {
            peak_isolation_db: 1.0,
            peak_wavelength_nm: 0.5,
            insertion_loss_db: 0.2,
            bandwidth_10db_nm: 1.0,
            isolation_at_reference_db: 1.0,
            insertion_loss_at_reference_db: 0.3,
        }
    }
}

/// Classical figures of a device at saturation for one port pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceMetrics {
    pub peak_isolation_db: f64,
    pub peak_wavelength_nm: f64,
    pub insertion_loss_db: f64,
    pub bandwidth_10db_nm: f64,
    pub isolation_at_reference_db: f64,
    pub insertion_loss_at_reference_db: f64,
}

pub fn measure(config: &IsolatorConfig, pair: PortPair, reference_wavelength_nm: f64) -> Result<DeviceMetrics> {
    let bw = bandwidth_10db(config, 1.0, pair)?;
    let il = |w: f64| -> Result<f64> { Ok(-to_db(pair_power(config, w, 1.0, pair)?)) };
    Ok(DeviceMetrics {
        peak_isolation_db: bw.peak_isolation_db,
        peak_wavelength_nm: bw.peak_nm,
        insertion_loss_db: il(bw.peak_nm)?,
        bandwidth_10db_nm: bw.width_nm,
        isolation_at_reference_db: isolation_ratio_db(config, reference_wavelength_nm, 1.0, pair)?,
        insertion_loss_at_reference_db: il(reference_wavelength_nm)?,
    })
}

impl DeviceMetrics {
    /// Targets that this device would have produced.
    pub fn as_targets(&self, reference_wavelength_nm: f64) -> CalibrationTargets {
        CalibrationTargets {
            peak_isolation_db: self.peak_isolation_db,
            peak_wavelength_nm: self.peak_wavelength_nm,
            insertion_loss_db: self.insertion_loss_db,
            bandwidth_10db_nm: self.bandwidth_10db_nm,
            reference_wavelength_nm,
            isolation_at_reference_db: self.isolation_at_reference_db,
            insertion_loss_at_reference_db: self.insertion_loss_at_reference_db,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Calibration {
    pub config: IsolatorConfig,
    pub metrics: DeviceMetrics,
    pub targets: CalibrationTargets,
    /// `(metric − target) / tolerance`, in the order of [`RESIDUAL_NAMES`].
    /// The peak-isolation entry is 0 when that target is infinite.
    pub scaled_residuals: Vec<f64>,
    pub cost: f64,
    pub starts_tried: usize,
}

pub const RESIDUAL_NAMES: [&str; 6] = [
    "peak_isolation_db",
    "peak_wavelength_nm",
    "insertion_loss_db",
    "bandwidth_10db_nm",
    "isolation_at_reference_db",
    "insertion_loss_at_reference_db",
];

/// Port pair on which classical spectra are calibrated.
pub fn calibration_pair() -> PortPair {
    PortPair {
        input: Port(1),
        output: Port(2),
    }
}

fn config_from_params(template: &IsolatorConfig, p: &[f64]) -> IsolatorConfig {
    let mut c = *template;
    c.arm_path_imbalance_um = p[0];
    c.base_loss_db = p[1];
    c.film.nrps_saturated_rad = p[2];
    c.arm_loss_imbalance_db = p[3];
    c
}

fn scaled_residuals(m: &DeviceMetrics, t: &CalibrationTargets, tol: &CalibrationTolerances) -> Vec<f64> {
    let peak = if t.peak_isolation_db.is_finite() {
        (m.peak_isolation_db - t.peak_isolation_db) / tol.peak_isolation_db
    } else {
        0.0
    };
    vec![
        peak,
        (m.peak_wavelength_nm - t.peak_wavelength_nm) / tol.peak_wavelength_nm,
        (m.insertion_loss_db - t.insertion_loss_db) / tol.insertion_loss_db,
        (m.bandwidth_10db_nm - t.bandwidth_10db_nm) / tol.bandwidth_10db_nm,
        (m.isolation_at_reference_db - t.isolation_at_reference_db) / tol.isolation_at_reference_db,
        (m.insertion_loss_at_reference_db - t.insertion_loss_at_reference_db) / tol.insertion_loss_at_reference_db,
    ]
}

/// Starting point from the balanced-interferometer closed forms.
fn analytic_start(t: &CalibrationTargets, template: &IsolatorConfig) -> [f64; 4] {
    let (ratio, imbalance_db) = if t.peak_isolation_db.is_finite() {
        let q = 10f64.powf(t.peak_isolation_db / 20.0);
        let a2 = (q - 1.0) / (q + 1.0);
        (a2, -20.0 * a2.log10())
    } else {
        (1.0, 0.0)
    };
    let peak_tx = 0.25 * (1.0 + ratio).powi(2);
    let base = (t.insertion_loss_db + 10.0 * peak_tx.log10()).max(0.0);
    // Balanced MZI: isolation = cot²(δ/2); δ reaches the threshold phase at
    // half the bandwidth.
    let delta10 = 2.0 * (1.0 / 10f64.sqrt()).atan();
    let half = 0.5 * t.bandwidth_10db_nm;
    let opd_nm = delta10 * t.peak_wavelength_nm.powi(2) / (2.0 * PI * half);
    let dl_um = opd_nm / template.group_index / 1e3;
    [dl_um, base, FRAC_PI_2, imbalance_db]
}

/// Fits path imbalance, common loss, saturated NRPS and arm loss imbalance
/// to the targets. Deterministic: a fixed 3×3 multi-start grid around the
/// closed-form start, best cost wins.
pub fn calibrate(targets: &CalibrationTargets) -> Result<Calibration> {
    calibrate_with(targets, &CalibrationTolerances::default(), &IsolatorConfig::default())
}

pub fn calibrate_with(
    targets: &CalibrationTargets,
    tol: &CalibrationTolerances,
    template: &IsolatorConfig,
) -> Result<Calibration> {
    targets.validate()?;
    let mut template = *template;
    template.center_wavelength_nm = targets.peak_wavelength_nm;
    template.validate()?;
    let pair = calibration_pair();
    let fix_imbalance = !targets.peak_isolation_db.is_finite();

    let residual_fn = |p: &[f64]| -> Option<Vec<f64>> {
        let cfg = config_from_params(&template, p);
        let m = measure(&cfg, pair, targets.reference_wavelength_nm).ok()?;
        Some(scaled_residuals(&m, targets, tol))
    };

    let start = analytic_start(targets, &template);
    let lower = [1e-3, 0.0, 0.0, 0.0];
    let upper_imb = if fix_imbalance { 0.0 } else { 20.0 };
    let upper = [1e4, 60.0, PI, upper_imb];
    let opts = LmOptions {
        max_iterations: 200,
        xtol: 1e-12,
        ..Default::default()
    };

    let mut best: Option<crate::fit::LmResult> = None;
    let mut tried = 0;
    for dl_scale in [1.0, 0.85, 1.15] {
        for nrps_shift in [0.0, -0.1, 0.1] {
            let mut p0 = start;
            p0[0] *= dl_scale;
            p0[2] += nrps_shift;
            if fix_imbalance {
                p0[3] = 0.0;
            }
            tried += 1;
            if let Some(res) = levenberg_marquardt(residual_fn, &p0, &lower, &upper, &opts) {
                if best.as_ref().is_none_or(|b| res.cost < b.cost) {
                    best = Some(res);
                }
            }
        }
    }
    let best = best.ok_or_else(|| Error::Calibration {
        message: "no start produced a finite residual".into(),
        residuals: vec![],
    })?;
    let config = config_from_params(&template, &best.params);
    let metrics = measure(&config, pair, targets.reference_wavelength_nm)?;
    let scaled = scaled_residuals(&metrics, targets, tol);
    if scaled.iter().any(|r| r.abs() > 1.0) {
        return Err(Error::Calibration {
            message: "fitted device misses at least one target tolerance".into(),
            residuals: scaled,
        });
    }
    Ok(Calibration {
        config,
        metrics,
        targets: *targets,
        scaled_residuals: scaled,
        cost: best.cost,
        starts_tried: tried,
    })
}
