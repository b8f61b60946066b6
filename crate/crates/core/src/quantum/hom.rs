use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use super::state::BiphotonState;
use crate::error::{domain, structure, Result};
use crate::optics::{half_coupler_matrix, CMatrix, Direction, DirectionalElement, PortBasis};

/// Phase convention of a 50/50 splitter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitterConvention {
    /// `a† → (c† + d†)/√2`, `b† → (c† − d†)/√2`.
    #[default]
    RealSigned,
    /// `(1/√2)·[[1, i], [i, 1]]`, as for integrated couplers.
    Symmetric,
}

/// Fiber beam splitter; columns are inputs (a, b), rows outputs (c, d).
pub fn fbs_transform() -> DirectionalElement {
    fbs_transform_with(SplitterConvention::RealSigned)
}

pub fn fbs_transform_with(convention: SplitterConvention) -> DirectionalElement {
    let m = match convention {
        SplitterConvention::RealSigned => {
            let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
            CMatrix::from_row_slice(2, 2, &[h, h, h, -h])
        }
        SplitterConvention::Symmetric => half_coupler_matrix(),
    };
    DirectionalElement::reciprocal(PortBasis::new(["a|c", "b|d"]).expect("labels"), m)
        .expect("50/50 splitter is unitary")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndistinguishabilityParams {
    /// `|⟨χ_s|χ_i⟩|²` of the non-spectral degrees of freedom.
    pub mode_overlap: f64,
}

impl IndistinguishabilityParams {
    pub fn new(mode_overlap: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mode_overlap) {
            return Err(domain(format!("mode overlap {mode_overlap} outside [0, 1]")));
        }
        Ok(Self { mode_overlap })
    }

    pub fn identical() -> Self {
        Self { mode_overlap: 1.0 }
    }
}

/// Exchange overlap `Σ f(j,k)·conj f(k,j)·e^{i(Ω_j−Ω_k)τ}`; real by
/// symmetry of the sum under `j ↔ k`.
pub fn exchange_overlap(state: &BiphotonState, delay_ps: f64) -> f64 {
    let f = state.jsa();
    let w = state.grid().detunings();
    let n = w.len();
    let phase: Vec<Complex64> = w.iter().map(|&x| Complex64::from_polar(1.0, x * delay_ps)).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        for k in 0..n {
            let a = f[(j, k)];
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            acc += a * f[(k, j)].conj() * phase[j] * phase[k].conj();
        }
    }
    acc.re / state.norm_squared()
}

/// Delay at the bottom of the dip and the exchange overlap there. A
/// dispersive signal path moves the dip away from zero delay.
pub fn dip_center(state: &BiphotonState) -> (f64, f64) {
    let reach = 3.0 / state.delta_w().max(1e-9);
    // Stay inside half a revival period of the discrete grid.
    let reach = reach.min(0.5 * std::f64::consts::PI / state.grid().spacing());
    let steps = 240;
    let step = 2.0 * reach / steps as f64;
    let coarse = (0..=steps)
        .map(|i| -reach + i as f64 * step)
        .max_by(|&a, &b| exchange_overlap(state, a).total_cmp(&exchange_overlap(state, b)))
        .unwrap_or(0.0);
    let (mut lo, mut hi) = (coarse - step, coarse + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (exchange_overlap(state, x1), exchange_overlap(state, x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = exchange_overlap(state, x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = exchange_overlap(state, x1);
        }
    }
    let tau = 0.5 * (lo + hi);
    (tau, exchange_overlap(state, tau))
}

/// Coincidence probability behind the beam splitter with the signal
/// delayed by `delay_ps`: `½·(1 − overlap·exchange(τ))`.
pub fn hom_coincidence_probability(state: &BiphotonState, indist: &IndistinguishabilityParams, delay_ps: f64) -> f64 {
    let p = 0.5 * (1.0 - indist.mode_overlap * exchange_overlap(state, delay_ps));
    p.clamp(0.0, 1.0)
}

/// Closed-form Gaussian dip `½·(1 − e^{−τ²Δw²})` scaled by the overlap.
pub fn gaussian_dip(delta_w: f64, mode_overlap: f64, delay_ps: f64) -> f64 {
    0.5 * (1.0 - mode_overlap * (-(delay_ps * delta_w).powi(2)).exp())
}

pub fn hom_scan(
    state: &BiphotonState,
    indist: &IndistinguishabilityParams,
    delays_ps: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if delays_ps.is_empty() {
        return Err(domain("HOM scan needs at least one delay"));
    }
    Ok(delays_ps
        .par_iter()
        .map(|&d| (d, hom_coincidence_probability(state, indist, d)))
        .collect())
}

/// One stage of a frequency-preserving linear circuit on spatial ports.
#[derive(Clone, Debug)]
pub enum CircuitStage {
    /// Frequency-independent element, forward matrix.
    Element(DirectionalElement),
    /// Free-space delay on one port, phase `e^{iΩτ}`.
    Delay { port: usize, delay_ps: f64 },
    /// Per-bin complex transmission on one port.
    Filter { port: usize, amplitudes: Vec<Complex64> },
}

#[derive(Clone, Debug)]
pub struct SpectralCircuit {
    ports: usize,
    stages: Vec<CircuitStage>,
}

impl SpectralCircuit {
    pub fn new(ports: usize, stages: Vec<CircuitStage>) -> Result<Self> {
        if ports == 0 {
            return Err(structure("circuit needs at least one port"));
        }
        for (i, s) in stages.iter().enumerate() {
            match s {
                CircuitStage::Element(e) if e.port_count() != ports => {
                    return Err(structure(format!(
                        "stage {i} has {} ports, circuit has {ports}",
                        e.port_count()
                    )))
                }
                CircuitStage::Delay { port, .. } | CircuitStage::Filter { port, .. } if *port >= ports => {
                    return Err(structure(format!("stage {i} acts on missing port {port}")))
                }
                _ => {}
            }
        }
        Ok(Self { ports, stages })
    }

    /// Delay on port a followed by the beam splitter.
    pub fn hom(delay_ps: f64) -> Self {
        Self {
            ports: 2,
            stages: vec![
                CircuitStage::Delay { port: 0, delay_ps },
                CircuitStage::Element(fbs_transform()),
            ],
        }
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn stages(&self) -> &[CircuitStage] {
        &self.stages
    }

    /// Single-photon transfer matrix at spectral bin `bin` with detuning
    /// `detuning` (rad/ps). Missing filter bins are an error.
    pub fn matrix_at(&self, bin: usize, detuning: f64) -> Result<CMatrix> {
        let mut u = CMatrix::identity(self.ports, self.ports);
        for s in &self.stages {
            match s {
                CircuitStage::Element(e) => u = e.matrix(Direction::Forward) * u,
                CircuitStage::Delay { port, delay_ps } => {
                    let ph = Complex64::from_polar(1.0, detuning * delay_ps);
                    u.row_mut(*port).iter_mut().for_each(|z| *z *= ph);
                }
                CircuitStage::Filter { port, amplitudes } => {
                    let t = *amplitudes
                        .get(bin)
                        .ok_or_else(|| structure(format!("filter has no entry for bin {bin}")))?;
                    u.row_mut(*port).iter_mut().for_each(|z| *z *= t);
                }
            }
        }
        Ok(u)
    }
}

/// Where the photons enter and which two output ports are in coincidence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TwoPhotonSetup {
    pub signal_port: usize,
    pub idler_port: usize,
    pub detector_c: usize,
    pub detector_d: usize,
}

impl TwoPhotonSetup {
    pub fn hom() -> Self {
        Self {
            signal_port: 0,
            idler_port: 1,
            detector_c: 0,
            detector_d: 1,
        }
    }

    pub(crate) fn validate(&self, ports: usize) -> Result<()> {
        let all = [self.signal_port, self.idler_port, self.detector_c, self.detector_d];
        if all.iter().any(|&p| p >= ports) {
            return Err(structure(format!("setup references a port beyond {ports}")));
        }
        if self.signal_port == self.idler_port {
            return Err(structure("signal and idler must enter different ports"));
        }
        if self.detector_c == self.detector_d {
            return Err(structure("coincidence detectors must be distinct ports"));
        }
        Ok(())
    }
}

/// Coincidence probability between two output ports from the two-term
/// amplitude `f(j,k)·U_cs(j)·U_di(k) + f(k,j)·U_ds(k)·U_ci(j)` summed over
/// bins, with the exchange term weighted by the mode overlap.
pub fn two_photon_coincidence(
    state: &BiphotonState,
    circuit: &SpectralCircuit,
    setup: TwoPhotonSetup,
    indist: &IndistinguishabilityParams,
) -> Result<f64> {
    setup.validate(circuit.ports())?;
    let grid = state.grid();
    let n = grid.n_bins;
    let us: Vec<CMatrix> = (0..n)
        .map(|j| circuit.matrix_at(j, grid.detuning(j)))
        .collect::<Result<_>>()?;
    let f = state.jsa();
    let TwoPhotonSetup {
        signal_port: s,
        idler_port: i,
        detector_c: c,
        detector_d: d,
    } = setup;
    let mut p = 0.0;
    for j in 0..n {
        for k in 0..n {
            let direct = f[(j, k)] * us[j][(c, s)] * us[k][(d, i)];
            let exchanged = f[(k, j)] * us[k][(d, s)] * us[j][(c, i)];
            p += direct.norm_sqr() + exchanged.norm_sqr() + 2.0 * indist.mode_overlap * (direct * exchanged.conj()).re;
        }
    }
    Ok(p / state.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::super::state::{spdc_state, SpectralGrid};
    use super::*;
    use crate::optics::unitarity_defect;
    use approx::assert_abs_diff_eq;

    fn source() -> BiphotonState {
        spdc_state(&SpectralGrid::default_for_source(), 100.0).unwrap()
    }

    #[test]
    fn fbs_is_unitary_and_signed() {
        let fbs = fbs_transform();
        assert!(unitarity_defect(fbs.forward()) < 1e-15);
        assert!(fbs.is_reciprocal());
        assert_abs_diff_eq!(fbs.forward()[(1, 1)].re, -FRAC_1_SQRT_2, epsilon = 1e-16);
        let sym = fbs_transform_with(SplitterConvention::Symmetric);
        assert!(unitarity_defect(sym.forward()) < 1e-15);
    }

    #[test]
    fn perfect_bunching_at_zero_delay() {
        let s = source();
        let p = hom_coincidence_probability(&s, &IndistinguishabilityParams::identical(), 0.0);
        assert!(p <= 1e-12, "{p}");
    }

    #[test]
    fn dip_center_follows_a_signal_delay() {
        let s = source();
        let (tau, v) = dip_center(&s);
        assert!(tau.abs() < 1e-6 && (v - 1.0).abs() < 1e-12, "{tau} {v}");
        let shift: Vec<Complex64> = s
            .grid()
            .detunings()
            .iter()
            .map(|&w| Complex64::from_polar(1.0, 0.7 * w))
            .collect();
        let (moved, _) = super::super::state::apply_signal_filter(&s, &shift).unwrap();
        let (tau, v) = dip_center(&moved);
        assert_abs_diff_eq!(tau.abs(), 0.7, epsilon = 1e-6);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-9);
        let p = hom_coincidence_probability(&moved, &IndistinguishabilityParams::identical(), tau);
        assert!(p < 1e-9);
    }

    #[test]
    fn distinguishable_limit() {
        let s = source();
        // revivals of the discrete grid recur every π/ΔΩ ≈ 52 ps
        let p = hom_coincidence_probability(&s, &IndistinguishabilityParams::identical(), 25.0);
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn one_over_delta_w_point() {
        let s = source();
        let tau = 1.0 / s.delta_w();
        let p = hom_coincidence_probability(&s, &IndistinguishabilityParams::identical(), tau);
        let closed = 0.5 * (1.0 - (-1f64).exp());
        assert_abs_diff_eq!(closed, 0.3161, epsilon = 1e-4);
        assert_abs_diff_eq!(p, closed, epsilon = 1e-6);
    }

    #[test]
    fn scan_is_even_and_visibility_tracks_overlap() {
        let s = source();
        let delays: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.5).collect();
        let ind = IndistinguishabilityParams::new(0.9561).unwrap();
        let scan = hom_scan(&s, &ind, &delays).unwrap();
        for i in 0..delays.len() {
            assert_abs_diff_eq!(scan[i].1, scan[delays.len() - 1 - i].1, epsilon = 1e-12);
        }
        let cmin = scan.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let cmax = scan.iter().map(|p| p.1).fold(0.0, f64::max);
        assert_abs_diff_eq!((cmax - cmin) / cmax, 0.9561, epsilon = 1e-6);
        assert!(hom_scan(&s, &ind, &[]).is_err());
    }

    #[test]
    fn dip_width_scales_inversely_with_bandwidth() {
        let g = SpectralGrid::around_wavelength(1550.0, 600.0, 128).unwrap();
        let ind = IndistinguishabilityParams::identical();
        let fwhm_of = |bw: f64| {
            let s = spdc_state(&g, bw).unwrap();
            let f = |t: f64| 0.5 - hom_coincidence_probability(&s, &ind, t);
            // half depth of the dip, bisected on the positive side
            let (mut lo, mut hi) = (0.0, 50.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.25 {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            (2.0 * lo, s.delta_w())
        };
        let (t1, w1) = fwhm_of(100.0);
        let (t2, w2) = fwhm_of(200.0);
        assert!(t2 < t1);
        assert!(((t1 * w1) / (t2 * w2) - 1.0).abs() < 0.05);
    }

    #[test]
    fn general_path_matches_hom_formula() {
        let g = SpectralGrid::around_wavelength(1550.0, 100.0, 16).unwrap();
        let s = spdc_state(&g, 100.0).unwrap();
        let ind = IndistinguishabilityParams::new(0.8).unwrap();
        for tau in [-3.0, 0.0, 0.7, 2.5] {
            let fast = hom_coincidence_probability(&s, &ind, tau);
            let general = two_photon_coincidence(&s, &SpectralCircuit::hom(tau), TwoPhotonSetup::hom(), &ind).unwrap();
            assert_abs_diff_eq!(fast, general, epsilon = 1e-12);
        }
    }

    #[test]
    fn setup_validation() {
        let s = source();
        let c = SpectralCircuit::hom(0.0);
        let bad = TwoPhotonSetup {
            detector_d: 0,
            ..TwoPhotonSetup::hom()
        };
        assert!(two_photon_coincidence(&s, &c, bad, &IndistinguishabilityParams::identical()).is_err());
        assert!(SpectralCircuit::new(2, vec![CircuitStage::Delay { port: 3, delay_ps: 1.0 }]).is_err());
    }
}
