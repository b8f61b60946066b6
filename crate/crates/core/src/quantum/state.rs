use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::device::{device_matrix, port_amplitude, IsolatorConfig, PortPair};
use crate::error::{domain, Result};
use crate::optics::CMatrix;

/// Speed of light in nm·THz.
pub const SPEED_OF_LIGHT_NM_THZ: f64 = 299_792.458;

/// Symmetric grid of angular-frequency detunings around a carrier.
///
/// Detunings are in rad/ps so that `Ω·τ` with `τ` in ps is a phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralGrid {
    pub center_frequency_thz: f64,
    /// Half the span, rad/ps.
    pub half_width_rad_per_ps: f64,
    pub n_bins: usize,
}

impl SpectralGrid {
    pub fn new(center_frequency_thz: f64, half_width_rad_per_ps: f64, n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(domain("spectral grid needs at least 2 bins"));
        }
        if !(half_width_rad_per_ps > 0.0 && half_width_rad_per_ps.is_finite()) {
            return Err(domain("spectral half width must be positive"));
        }
        if !(center_frequency_thz > 0.0 && center_frequency_thz.is_finite()) {
            return Err(domain("center frequency must be positive"));
        }
        Ok(Self {
            center_frequency_thz,
            half_width_rad_per_ps,
            n_bins,
        })
    }

    /// Grid centred on `wavelength_nm` spanning `±half_width_ghz`.
    pub fn around_wavelength(wavelength_nm: f64, half_width_ghz: f64, n_bins: usize) -> Result<Self> {
        Self::new(
            SPEED_OF_LIGHT_NM_THZ / wavelength_nm,
            2.0 * PI * half_width_ghz * 1e-3,
            n_bins,
        )
    }

    /// 64 bins at 1550 nm spanning ±300 GHz, three source bandwidths.
    pub fn default_for_source() -> Self {
        Self::around_wavelength(1550.0, 300.0, 64).expect("valid default grid")
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width_rad_per_ps / (self.n_bins - 1) as f64
    }

    pub fn detuning(&self, bin: usize) -> f64 {
        -self.half_width_rad_per_ps + self.spacing() * bin as f64
    }

    pub fn detunings(&self) -> Vec<f64> {
        (0..self.n_bins).map(|j| self.detuning(j)).collect()
    }

    pub fn frequency_thz(&self, bin: usize) -> f64 {
        self.center_frequency_thz + self.detuning(bin) / (2.0 * PI)
    }

    pub fn wavelength_nm(&self, bin: usize) -> f64 {
        SPEED_OF_LIGHT_NM_THZ / self.frequency_thz(bin)
    }

    pub fn center_wavelength_nm(&self) -> f64 {
        SPEED_OF_LIGHT_NM_THZ / self.center_frequency_thz
    }
}

/// Discretized joint spectral amplitude, rows = signal bins, columns =
/// idler bins.
#[derive(Clone, Debug)]
pub struct BiphotonState {
    grid: SpectralGrid,
    jsa: CMatrix,
    /// Width parameter of the two-photon dip law `1 − exp(−τ²Δw²)`,
    /// rad/ps. For a Gaussian marginal power spectrum of standard
    /// deviation σ this is `√2·σ`.
    delta_w: f64,
}

impl BiphotonState {
    /// Normalizes `jsa`, which must be nonzero and finite.
    pub fn from_jsa(grid: SpectralGrid, jsa: CMatrix, delta_w: f64) -> Result<Self> {
        let n = grid.n_bins;
        if jsa.nrows() != n || jsa.ncols() != n {
            return Err(domain(format!("JSA must be {n}x{n}")));
        }
        let norm: f64 = jsa.iter().map(|z| z.norm_sqr()).sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(domain("JSA must be finite and nonzero"));
        }
        Ok(Self {
            grid,
            jsa: jsa / Complex64::new(norm.sqrt(), 0.0),
            delta_w,
        })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn jsa(&self) -> &CMatrix {
        &self.jsa
    }

    pub fn delta_w(&self) -> f64 {
        self.delta_w
    }

    pub fn norm_squared(&self) -> f64 {
        self.jsa.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Signal marginal power spectrum.
    pub fn signal_marginal(&self) -> Vec<f64> {
        (0..self.grid.n_bins)
            .map(|j| self.jsa.row(j).iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }

    /// Largest `|f(j,k) − f(k,j)|`.
    pub fn exchange_asymmetry(&self) -> f64 {
        (&self.jsa - self.jsa.transpose())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Frequency-anticorrelated SPDC pair from a continuous-wave pump: the JSA
/// lives on the anti-diagonal `Ω_s + Ω_i = 0`, with a Gaussian marginal of
/// the given power-spectrum FWHM (ordinary frequency).
pub fn spdc_state(grid: &SpectralGrid, bandwidth_fwhm_ghz: f64) -> Result<BiphotonState> {
    if !(bandwidth_fwhm_ghz > 0.0 && bandwidth_fwhm_ghz.is_finite()) {
        return Err(domain("source bandwidth must be positive"));
    }
    let fwhm = 2.0 * PI * bandwidth_fwhm_ghz * 1e-3;
    let bins_across = fwhm / grid.spacing();
    if bins_across < 4.0 {
        return Err(domain(format!(
            "grid resolution error: {bins_across:.2} bins across the FWHM, need at least 4"
        )));
    }
    let sigma = fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let n = grid.n_bins;
    let mut jsa = CMatrix::zeros(n, n);
    for j in 0..n {
        let w = grid.detuning(j);
        jsa[(j, n - 1 - j)] = Complex64::new((-w * w / (4.0 * sigma * sigma)).exp(), 0.0);
    }
    BiphotonState::from_jsa(*grid, jsa, 2f64.sqrt() * sigma)
}

/// Full width at half maximum of a sampled curve, by linear interpolation
/// of the two outermost half-maximum crossings.
pub fn sampled_fwhm(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (imax, &ymax) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let half = 0.5 * ymax;
    let cross = |i0: usize, i1: usize| {
        let t = (half - ys[i0]) / (ys[i1] - ys[i0]);
        xs[i0] + t * (xs[i1] - xs[i0])
    };
    let left = (1..=imax).rev().find(|&i| ys[i - 1] < half).map(|i| cross(i - 1, i))?;
    let right = (imax..ys.len() - 1)
        .find(|&i| ys[i + 1] < half)
        .map(|i| cross(i, i + 1))?;
    Some(right - left)
}

/// What the signal photon passes through before the beam splitter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SignalPath {
    /// Straight connection.
    Direct,
    /// Flat-loss waveguide.
    Waveguide { loss_db: f64 },
    /// The isolator at magnetization `m` along `pair`.
    Isolator {
        config: IsolatorConfig,
        m: f64,
        pair: PortPair,
    },
}

impl SignalPath {
    /// Complex amplitude transmission at each signal bin.
    pub fn amplitudes(&self, grid: &SpectralGrid) -> Result<Vec<Complex64>> {
        let n = grid.n_bins;
        match *self {
            SignalPath::Direct => Ok(vec![Complex64::new(1.0, 0.0); n]),
            SignalPath::Waveguide { loss_db } => {
                if !(loss_db >= 0.0) {
                    return Err(domain("waveguide loss must be >= 0"));
                }
                Ok(vec![Complex64::new(10f64.powf(-loss_db / 20.0), 0.0); n])
            }
            SignalPath::Isolator { config, m, pair } => (0..n)
                .map(|j| {
                    let el = device_matrix(&config, grid.wavelength_nm(j), m)?;
                    Ok(port_amplitude(&el, pair))
                })
                .collect(),
        }
    }
}

/// Multiplies each signal slice by the path amplitude. Returns the state
/// renormalized on transmission and the survival probability. When nothing
/// survives the input state is returned with survival 0.
pub fn apply_signal_filter(state: &BiphotonState, amplitudes: &[Complex64]) -> Result<(BiphotonState, f64)> {
    let n = state.grid.n_bins;
    if amplitudes.len() != n {
        return Err(domain(format!("filter has {} bins, state has {n}", amplitudes.len())));
    }
    let mut jsa = state.jsa.clone();
    for (j, &t) in amplitudes.iter().enumerate() {
        jsa.row_mut(j).iter_mut().for_each(|z| *z *= t);
    }
    let survival: f64 = jsa.iter().map(|z| z.norm_sqr()).sum();
    if survival <= 0.0 {
        return Ok((state.clone(), 0.0));
    }
    let out = BiphotonState::from_jsa(state.grid, jsa, state.delta_w)?;
    Ok((out, survival))
}

pub fn apply_device_to_signal(state: &BiphotonState, path: &SignalPath) -> Result<(BiphotonState, f64)> {
    let amps = path.amplitudes(&state.grid)?;
    apply_signal_filter(state, &amps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::calibrate;
    use crate::device::CalibrationTargets;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_grid_is_symmetric() {
        let g = SpectralGrid::default_for_source();
        assert_eq!(g.n_bins, 64);
        for j in 0..32 {
            assert_abs_diff_eq!(g.detuning(j), -g.detuning(63 - j), epsilon = 1e-15);
        }
        assert_abs_diff_eq!(g.center_wavelength_nm(), 1550.0, epsilon = 1e-9);
        assert!(SpectralGrid::new(193.0, 1.0, 1).is_err());
    }

    #[test]
    fn marginal_fwhm_matches_bandwidth() {
        let g = SpectralGrid::default_for_source();
        let s = spdc_state(&g, 100.0).unwrap();
        assert_abs_diff_eq!(s.norm_squared(), 1.0, epsilon = 1e-12);
        let ghz: Vec<f64> = g.detunings().iter().map(|w| w / (2.0 * PI) * 1e3).collect();
        let fwhm = sampled_fwhm(&ghz, &s.signal_marginal()).unwrap();
        assert!((fwhm - 100.0).abs() <= 2.0, "{fwhm}");
    }

    #[test]
    fn jsa_is_anticorrelated() {
        let g = SpectralGrid::default_for_source();
        let s = spdc_state(&g, 100.0).unwrap();
        let w = g.detunings();
        let (mut ms, mut mi, mut mss, mut mii, mut msi) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..g.n_bins {
            for k in 0..g.n_bins {
                let p = s.jsa()[(j, k)].norm_sqr();
                ms += p * w[j];
                mi += p * w[k];
                mss += p * w[j] * w[j];
                mii += p * w[k] * w[k];
                msi += p * w[j] * w[k];
            }
        }
        let r = (msi - ms * mi) / ((mss - ms * ms) * (mii - mi * mi)).sqrt();
        assert!(r < -0.9, "{r}");
    }

    #[test]
    fn unresolvable_bandwidth_rejected() {
        let g = SpectralGrid::around_wavelength(1550.0, 300.0, 8).unwrap();
        assert!(spdc_state(&g, 100.0).is_err());
    }

    #[test]
    fn direct_and_flat_paths() {
        let g = SpectralGrid::default_for_source();
        let s = spdc_state(&g, 100.0).unwrap();
        let (out, surv) = apply_device_to_signal(&s, &SignalPath::Direct).unwrap();
        assert_abs_diff_eq!(surv, 1.0, epsilon = 1e-12);
        assert!((out.jsa() - s.jsa()).iter().all(|z| z.norm() < 1e-15));
        let (out, surv) = apply_device_to_signal(&s, &SignalPath::Waveguide { loss_db: 3.0 }).unwrap();
        assert_abs_diff_eq!(surv, 10f64.powf(-0.3), epsilon = 1e-12);
        assert!((out.jsa() - s.jsa()).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn isolator_survival_ratio_near_reference_isolation() {
        let cal = calibrate(&CalibrationTargets::default()).unwrap();
        let g = SpectralGrid::default_for_source();
        let s = spdc_state(&g, 100.0).unwrap();
        let fwd = SignalPath::Isolator {
            config: cal.config,
            m: 1.0,
            pair: PortPair::new(1, 2).unwrap(),
        };
        let bwd = SignalPath::Isolator {
            config: cal.config,
            m: 1.0,
            pair: PortPair::new(2, 1).unwrap(),
        };
        let (_, pf) = apply_device_to_signal(&s, &fwd).unwrap();
        let (_, pb) = apply_device_to_signal(&s, &bwd).unwrap();
        let ratio_db = 10.0 * (pf / pb).log10();
        assert!((ratio_db - 11.0).abs() <= 1.0, "{ratio_db}");
    }
}
