//! Brute-force two-photon Fock-space evaluation.
//!
//! The state is kept as a polynomial in creation operators over modes
//! `(port, bin, internal)`, where `internal ∈ {0, 1}` carries the
//! non-spectral degree of freedom. Each circuit stage is applied by
//! substituting `a†_x → Σ_y U_yx a†_y` into every monomial and collecting
//! terms; outcome probabilities are read off the resulting Fock amplitudes.
//! No closed-form interference expression is used.

use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;

use super::hom::{CircuitStage, IndistinguishabilityParams, SpectralCircuit, TwoPhotonSetup};
use super::state::BiphotonState;
use crate::error::{Error, Result};
use crate::optics::Direction;

pub const MAX_PORTS: usize = 4;
pub const MAX_BINS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Mode {
    pub port: usize,
    pub bin: usize,
    pub internal: usize,
}

type Poly = BTreeMap<(Mode, Mode), Complex64>;

fn ordered(a: Mode, b: Mode) -> (Mode, Mode) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn add(poly: &mut Poly, a: Mode, b: Mode, c: Complex64) {
    if c == Complex64::new(0.0, 0.0) {
        return;
    }
    *poly.entry(ordered(a, b)).or_insert(Complex64::new(0.0, 0.0)) += c;
}

/// Single-photon image of mode `x` under one stage: list of `(y, U_yx)`.
fn image(stage: &CircuitStage, x: Mode, detuning: f64, ports: usize) -> Vec<(Mode, Complex64)> {
    match stage {
        CircuitStage::Element(e) => {
            let u = e.matrix(Direction::Forward);
            (0..ports)
                .map(|p| (Mode { port: p, ..x }, u[(p, x.port)]))
                .filter(|(_, c)| *c != Complex64::new(0.0, 0.0))
                .collect()
        }
        CircuitStage::Delay { port, delay_ps } => {
            let c = if x.port == *port {
                Complex64::from_polar(1.0, detuning * delay_ps)
            } else {
                Complex64::new(1.0, 0.0)
            };
            vec![(x, c)]
        }
        CircuitStage::Filter { port, amplitudes } => {
            let c = if x.port == *port {
                amplitudes[x.bin]
            } else {
                Complex64::new(1.0, 0.0)
            };
            vec![(x, c)]
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleOutcome {
    pub first: Mode,
    pub second: Mode,
    /// Fock-basis amplitude (with the `√2` of doubly occupied modes).
    pub amplitude_re: f64,
    pub amplitude_im: f64,
    pub probability: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    /// Probability of one photon at detector c and one at detector d.
    pub coincidence: f64,
    /// Probability of both photons in the same output port.
    pub bunching: f64,
    /// Sum over every two-photon outcome (1 for lossless circuits).
    pub total: f64,
    pub outcomes: Vec<OracleOutcome>,
}

impl OracleResult {
    /// Probability of one photon in each of two ports (or both in one).
    pub fn port_probability(&self, port_a: usize, port_b: usize) -> f64 {
        self.outcomes
            .iter()
            .filter(|o| {
                (o.first.port == port_a && o.second.port == port_b)
                    || (o.first.port == port_b && o.second.port == port_a)
            })
            .map(|o| o.probability)
            .sum()
    }
}

pub fn oracle_two_photon(
    state: &BiphotonState,
    circuit: &SpectralCircuit,
    setup: TwoPhotonSetup,
    indist: &IndistinguishabilityParams,
) -> Result<OracleResult> {
    let ports = circuit.ports();
    let grid = state.grid();
    let bins = grid.n_bins;
    if ports > MAX_PORTS || bins > MAX_BINS {
        return Err(Error::Size(format!(
            "oracle limited to {MAX_PORTS} ports and {MAX_BINS} bins, got {ports} and {bins}"
        )));
    }
    setup.validate(ports)?;
    for s in circuit.stages() {
        if let CircuitStage::Filter { amplitudes, .. } = s {
            if amplitudes.len() < bins {
                return Err(Error::Structure("filter shorter than the spectral grid".into()));
            }
        }
    }

    // Idler internal state √V|0⟩ + √(1−V)|1⟩; signal in |0⟩.
    let v = indist.mode_overlap;
    let idler_internal = [(0usize, v.sqrt()), (1usize, (1.0 - v).sqrt())];
    let f = state.jsa();
    let mut poly = Poly::new();
    for j in 0..bins {
        for k in 0..bins {
            let amp = f[(j, k)];
            for &(int, w) in &idler_internal {
                let sig = Mode {
                    port: setup.signal_port,
                    bin: j,
                    internal: 0,
                };
                let idl = Mode {
                    port: setup.idler_port,
                    bin: k,
                    internal: int,
                };
                add(&mut poly, sig, idl, amp * w);
            }
        }
    }

    for stage in circuit.stages() {
        let mut next = Poly::new();
        for (&(a, b), &c) in &poly {
            let ia = image(stage, a, grid.detuning(a.bin), ports);
            let ib = image(stage, b, grid.detuning(b.bin), ports);
            for &(ya, ca) in &ia {
                for &(yb, cb) in &ib {
                    add(&mut next, ya, yb, c * ca * cb);
                }
            }
        }
        poly = next;
    }

    let norm = state.norm_squared();
    let mut outcomes = Vec::with_capacity(poly.len());
    let (mut coincidence, mut bunching, mut total) = (0.0, 0.0, 0.0);
    for (&(a, b), &c) in &poly {
        let amp = if a == b { c * 2f64.sqrt() } else { c };
        let p = amp.norm_sqr() / norm;
        total += p;
        let hit = (a.port == setup.detector_c && b.port == setup.detector_d)
            || (a.port == setup.detector_d && b.port == setup.detector_c);
        if hit {
            coincidence += p;
        }
        if a.port == b.port {
            bunching += p;
        }
        outcomes.push(OracleOutcome {
            first: a,
            second: b,
            amplitude_re: amp.re,
            amplitude_im: amp.im,
            probability: p,
        });
    }
    Ok(OracleResult {
        coincidence,
        bunching,
        total,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::super::hom::{fbs_transform, hom_coincidence_probability};
    use super::super::state::{spdc_state, SpectralGrid};
    use super::*;
    use crate::optics::CMatrix;
    use approx::assert_abs_diff_eq;

    fn single_bin_state() -> BiphotonState {
        let g = SpectralGrid::new(193.4, 1.0, 2).unwrap();
        let mut jsa = CMatrix::zeros(2, 2);
        jsa[(0, 0)] = Complex64::new(1.0, 0.0);
        BiphotonState::from_jsa(g, jsa, 1.0).unwrap()
    }

    #[test]
    fn identical_photons_never_coincide() {
        let s = single_bin_state();
        let c = SpectralCircuit::new(2, vec![CircuitStage::Element(fbs_transform())]).unwrap();
        let r = oracle_two_photon(&s, &c, TwoPhotonSetup::hom(), &IndistinguishabilityParams::identical()).unwrap();
        assert!(r.coincidence < 1e-15);
        assert_abs_diff_eq!(r.bunching, 1.0, epsilon = 1e-15);
        // ½(c†² − d†²)|0⟩: each doubly occupied output has amplitude ±1/√2
        for o in &r.outcomes {
            if o.first == o.second {
                assert_abs_diff_eq!(o.probability, 0.5, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn distinguishable_photons_split_half_the_time() {
        let s = single_bin_state();
        let c = SpectralCircuit::new(2, vec![CircuitStage::Element(fbs_transform())]).unwrap();
        let r = oracle_two_photon(
            &s,
            &c,
            TwoPhotonSetup::hom(),
            &IndistinguishabilityParams::new(0.0).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(r.coincidence, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.total, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn matches_fast_hom_on_eight_bins() {
        let g = SpectralGrid::around_wavelength(1550.0, 60.0, 8).unwrap();
        let s = spdc_state(&g, 100.0).unwrap();
        let ind = IndistinguishabilityParams::new(0.93).unwrap();
        for tau in [-4.0, -1.0, 0.0, 0.3, 2.0] {
            let r = oracle_two_photon(&s, &SpectralCircuit::hom(tau), TwoPhotonSetup::hom(), &ind).unwrap();
            let fast = hom_coincidence_probability(&s, &ind, tau);
            assert_abs_diff_eq!(r.coincidence, fast, epsilon = 1e-9);
            assert_abs_diff_eq!(r.coincidence + r.bunching, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn size_limits() {
        let g = SpectralGrid::around_wavelength(1550.0, 300.0, 32).unwrap();
        let s = spdc_state(&g, 100.0).unwrap();
        let e = oracle_two_photon(
            &s,
            &SpectralCircuit::hom(0.0),
            TwoPhotonSetup::hom(),
            &IndistinguishabilityParams::identical(),
        );
        assert!(matches!(e, Err(Error::Size(_))));
    }
}
