//! Magnet field, film magnetization with hysteresis, and the resulting
//! non-reciprocal phase shift.
//!
//! The hysteresis model is a play-type rule between two saturating tanh
//! branches. For a field increasing to `B`, `m ← max(m, m_asc(B))`; for a
//! field decreasing to `B`, `m ← min(m, m_desc(B))`. The branches meet at
//! `±saturation_field_gs`, and `m_desc(0) = remanence_ratio`. Whenever the
//! state lies between the branches it stays there, so minor loops are
//! closed and the state never leaves `[-1, 1]`.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{domain, Result};
use crate::optics::Direction;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldModelParams {
    /// Field at zero distance, gauss.
    pub b_saturating_gs: f64,
    pub decay_length_mm: f64,
    /// Fields weaker than this leave the film untouched.
    pub far_threshold_gs: f64,
}

impl Default for FieldModelParams {
    fn default() -> Self {
        Self {
            b_saturating_gs: 1000.0,
            decay_length_mm: 3.0,
            far_threshold_gs: 5.0,
        }
    }
}

impl FieldModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_saturating_gs > 0.0 && self.b_saturating_gs.is_finite()) {
            return Err(domain("b_saturating_gs must be positive"));
        }
        if !(self.decay_length_mm > 0.0 && self.decay_length_mm.is_finite()) {
            return Err(domain("decay_length_mm must be positive"));
        }
        if !(self.far_threshold_gs >= 0.0) {
            return Err(domain("far_threshold_gs must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }
}

/// Dipole-like falloff `B(d) = B0 / (1 + d/L)³`, signed by polarity.
pub fn field_at_distance(params: &FieldModelParams, distance_mm: f64, polarity: Polarity) -> Result<f64> {
    if !(distance_mm >= 0.0) || !distance_mm.is_finite() {
        return Err(domain(format!("distance {distance_mm} mm must be finite and >= 0")));
    }
    let falloff = (1.0 + distance_mm / params.decay_length_mm).powi(3);
    Ok(polarity.sign() * params.b_saturating_gs / falloff)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HysteresisParams {
    pub saturation_field_gs: f64,
    pub remanence_ratio: f64,
    pub sharpness: f64,
}

impl Default for HysteresisParams {
    fn default() -> Self {
        Self {
            saturation_field_gs: 1000.0,
            remanence_ratio: 0.6,
            sharpness: 3.0,
        }
    }
}

impl HysteresisParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.saturation_field_gs > 0.0 && self.saturation_field_gs.is_finite()) {
            return Err(domain("saturation_field_gs must be positive"));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(domain("sharpness must be positive"));
        }
        if !(0.0..1.0).contains(&self.remanence_ratio) {
            return Err(domain("remanence_ratio must lie in [0, 1)"));
        }
        // m_desc(0) can reach at most tanh(sharpness).
        if self.remanence_ratio >= self.sharpness.tanh() {
            return Err(domain(format!(
                "remanence_ratio {} unreachable with sharpness {} (max {:.6})",
                self.remanence_ratio,
                self.sharpness,
                self.sharpness.tanh()
            )));
        }
        Ok(())
    }

    /// Precomputes the coercive offset of the branch functions.
    pub fn branches(&self) -> Result<Branches> {
        self.validate()?;
        let k = self.sharpness;
        let r = self.remanence_ratio;
        let desc0 = |c: f64| raw_desc(k, c, 0.0);
        // desc0 is increasing in c, from 0 at c = 0 towards tanh(k).
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while desc0(hi) < r {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if desc0(mid) < r {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        Ok(Branches {
            sharpness: k,
            offset: 0.5 * (lo + hi),
            saturation_field_gs: self.saturation_field_gs,
        })
    }
}

fn raw_desc(k: f64, c: f64, x: f64) -> f64 {
    let g = |x: f64| (k * (x + c)).tanh();
    let span = g(1.0) - g(-1.0);
    if span <= 0.0 {
        return x;
    }
    -1.0 + 2.0 * (g(x) - g(-1.0)) / span
}

/// Major-loop branch functions for fixed [`HysteresisParams`].
#[derive(Clone, Copy, Debug)]
pub struct Branches {
    sharpness: f64,
    offset: f64,
    saturation_field_gs: f64,
}

impl Branches {
    fn reduced(&self, field_gs: f64) -> f64 {
        (field_gs / self.saturation_field_gs).clamp(-1.0, 1.0)
    }

    /// Descending branch (field decreasing from positive saturation).
    pub fn descending(&self, field_gs: f64) -> f64 {
        let x = self.reduced(field_gs);
        if x >= 1.0 {
            return 1.0;
        }
        if x <= -1.0 {
            return -1.0;
        }
        raw_desc(self.sharpness, self.offset, x).clamp(-1.0, 1.0)
    }

    /// Ascending branch, the point reflection of the descending one.
    pub fn ascending(&self, field_gs: f64) -> f64 {
        -self.descending(-field_gs)
    }

    /// Coercive offset in reduced field units.
    pub fn offset(&self) -> f64 {
        self.offset
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Virgin,
    Ascending,
    Descending,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationState {
    pub m: f64,
    pub last_field_gs: f64,
    pub branch: Branch,
}

impl MagnetizationState {
    pub fn virgin() -> Self {
        Self {
            m: 0.0,
            last_field_gs: 0.0,
            branch: Branch::Virgin,
        }
    }

    /// Fresh state at zero field with magnetization `m`.
    pub fn with_m(m: f64) -> Result<Self> {
        initialize_magnetization(&Self::virgin(), m)
    }
}

pub fn apply_field(state: &MagnetizationState, branches: &Branches, field_gs: f64) -> MagnetizationState {
    let field = if field_gs.is_finite() {
        field_gs
    } else {
        field_gs.signum() * f64::MAX
    };
    if field >= branches.saturation_field_gs || field <= -branches.saturation_field_gs {
        let branch = if field > 0.0 {
            Branch::Ascending
        } else {
            Branch::Descending
        };
        return MagnetizationState {
            m: field.signum(),
            last_field_gs: field,
            branch,
        };
    }
    let (m, branch) = if field > state.last_field_gs {
        (state.m.max(branches.ascending(field)), Branch::Ascending)
    } else if field < state.last_field_gs {
        (state.m.min(branches.descending(field)), Branch::Descending)
    } else {
        (state.m, state.branch)
    };
    MagnetizationState {
        m: m.clamp(-1.0, 1.0),
        last_field_gs: field,
        branch,
    }
}

/// Resets the film to `target_m` on the virgin branch. The field memory is
/// kept so the next update continues from the current magnet position.
pub fn initialize_magnetization(state: &MagnetizationState, target_m: f64) -> Result<MagnetizationState> {
    if !(target_m.abs() <= 1.0) {
        return Err(domain(format!("target magnetization {target_m} outside [-1, 1]")));
    }
    Ok(MagnetizationState {
        m: target_m,
        last_field_gs: state.last_field_gs,
        branch: Branch::Virgin,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoFilmParams {
    pub faraday_yig_deg_per_cm: f64,
    pub faraday_ceyig_deg_per_cm: f64,
    pub nrps_length_um: f64,
    /// Interferometer phase contributed by the films at |m| = 1. A fitted
    /// device parameter; the Faraday constants above are metadata only.
    pub nrps_saturated_rad: f64,
}

impl Default for MoFilmParams {
    fn default() -> Self {
        Self {
            faraday_yig_deg_per_cm: 500.0,
            faraday_ceyig_deg_per_cm: -5900.0,
            nrps_length_um: 670.0,
            nrps_saturated_rad: FRAC_PI_2,
        }
    }
}

impl MoFilmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nrps_length_um > 0.0 && self.nrps_length_um.is_finite()) {
            return Err(domain("nrps_length_um must be positive"));
        }
        if !self.nrps_saturated_rad.is_finite() {
            return Err(domain("nrps_saturated_rad must be finite"));
        }
        Ok(())
    }
}

/// `+m·φ_sat` forward, `−m·φ_sat` backward. `|m| ≤ 1` is a precondition.
pub fn nrps_phase(film: &MoFilmParams, m: f64, direction: Direction) -> f64 {
    debug_assert!(m.abs() <= 1.0, "magnetization {m} outside [-1, 1]");
    match direction {
        Direction::Forward => m * film.nrps_saturated_rad,
        Direction::Backward => -(m * film.nrps_saturated_rad),
    }
}

/// Field seen by the film at a signed sweep position.
pub fn effective_field(params: &FieldModelParams, position_mm: f64, polarity: Polarity) -> Result<f64> {
    if !position_mm.is_finite() {
        return Err(domain(format!("sweep position {position_mm} is not finite")));
    }
    let b = field_at_distance(params, position_mm.abs(), polarity)?;
    Ok(if b.abs() < params.far_threshold_gs { 0.0 } else { b })
}

/// Magnetization timeline for a signed position list (negative while the
/// magnet approaches, positive while it retreats).
pub fn sweep_trajectory(
    field_model: &FieldModelParams,
    hyst: &HysteresisParams,
    polarity: Polarity,
    initial: MagnetizationState,
    positions_mm: &[f64],
) -> Result<Vec<MagnetizationState>> {
    field_model.validate()?;
    let branches = hyst.branches()?;
    let mut state = initial;
    positions_mm
        .iter()
        .map(|&p| {
            let b = effective_field(field_model, p, polarity)?;
            state = apply_field(&state, &branches, b);
            Ok(state)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn branches() -> Branches {
        HysteresisParams::default().branches().unwrap()
    }

    #[test]
    fn field_endpoints() {
        let p = FieldModelParams::default();
        assert_abs_diff_eq!(field_at_distance(&p, 0.0, Polarity::Positive).unwrap(), 1000.0);
        assert_abs_diff_eq!(field_at_distance(&p, 0.0, Polarity::Negative).unwrap(), -1000.0);
        let far = field_at_distance(&p, 26.0, Polarity::Positive).unwrap();
        assert!(far < p.far_threshold_gs);
        assert!(far < 0.01 * p.b_saturating_gs);
        assert!(field_at_distance(&p, -1.0, Polarity::Positive).is_err());
        let mut last = f64::INFINITY;
        for i in 0..100 {
            let b = field_at_distance(&p, i as f64 * 0.3, Polarity::Positive).unwrap();
            assert!(b < last);
            last = b;
        }
    }

    #[test]
    fn saturation_and_remanence() {
        let br = branches();
        let r = HysteresisParams::default().remanence_ratio;
        let s = apply_field(&MagnetizationState::virgin(), &br, 1000.0);
        assert_eq!(s.m, 1.0);
        let s = apply_field(&s, &br, 0.0);
        assert_abs_diff_eq!(s.m, r, epsilon = 1e-12);
        let s = apply_field(&s, &br, -1000.0);
        assert_eq!(s.m, -1.0);
        let s = apply_field(&s, &br, 0.0);
        assert_abs_diff_eq!(s.m, -r, epsilon = 1e-12);
    }

    /// ∮ m dB over the major loop by trapezoid rule on a fine grid.
    fn loop_area(params: &HysteresisParams) -> f64 {
        let br = params.branches().unwrap();
        let n = 20_000;
        let bs = params.saturation_field_gs;
        let mut area = 0.0;
        for i in 0..n {
            let b0 = -bs + 2.0 * bs * i as f64 / n as f64;
            let b1 = -bs + 2.0 * bs * (i + 1) as f64 / n as f64;
            let gap = |b: f64| br.descending(b) - br.ascending(b);
            area += 0.5 * (gap(b0) + gap(b1)) * (b1 - b0);
        }
        area
    }

    #[test]
    fn loop_area_positive_with_remanence() {
        assert!(loop_area(&HysteresisParams::default()) > 100.0);
        let anhysteretic = HysteresisParams {
            remanence_ratio: 0.0,
            ..Default::default()
        };
        assert!(loop_area(&anhysteretic).abs() < 1e-9);
    }

    #[test]
    fn initialize_resets_to_virgin_curve() {
        let br = branches();
        let fields = [10.0, 200.0, 500.0, 300.0, -100.0, 800.0];
        let run = |mut s: MagnetizationState| {
            fields
                .iter()
                .map(|&b| {
                    s = apply_field(&s, &br, b);
                    s.m
                })
                .collect::<Vec<_>>()
        };
        let fresh = run(MagnetizationState::with_m(-0.6).unwrap());
        let mut used = MagnetizationState::virgin();
        for b in [1000.0, -400.0, 2.0, 0.0] {
            used = apply_field(&used, &br, b);
        }
        let reset = initialize_magnetization(&used, -0.6).unwrap();
        assert_eq!(reset.branch, Branch::Virgin);
        let again = run(reset);
        for (a, b) in fresh.iter().zip(&again) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_eq!(initialize_magnetization(&used, 0.0).unwrap().m, 0.0);
        assert!(initialize_magnetization(&used, 1.2).is_err());
    }

    #[test]
    fn nrps_sign_conventions() {
        let film = MoFilmParams::default();
        assert_eq!(nrps_phase(&film, 0.0, Direction::Forward), 0.0);
        assert_eq!(nrps_phase(&film, 0.0, Direction::Backward), 0.0);
        assert_eq!(nrps_phase(&film, 1.0, Direction::Forward), film.nrps_saturated_rad);
        assert_eq!(nrps_phase(&film, 1.0, Direction::Backward), -film.nrps_saturated_rad);
        assert_abs_diff_eq!(
            nrps_phase(&film, 0.5, Direction::Forward),
            0.5 * film.nrps_saturated_rad,
            epsilon = 1e-15
        );
    }

    #[test]
    fn sweep_shape() {
        let fm = FieldModelParams::default();
        let hp = HysteresisParams::default();
        let init = MagnetizationState::with_m(-0.6).unwrap();
        let steady = sweep_trajectory(&fm, &hp, Polarity::Positive, init, &[-26.0; 5]).unwrap();
        assert!(steady.iter().all(|s| s.m == -0.6));

        let approach: Vec<f64> = (0..=13).map(|i| -26.0 + 2.0 * i as f64).collect();
        let retreat: Vec<f64> = (1..=13).map(|i| 2.0 * i as f64).collect();
        let positions: Vec<f64> = approach.iter().chain(&retreat).cloned().collect();
        let traj = sweep_trajectory(&fm, &hp, Polarity::Positive, init, &positions).unwrap();
        assert_eq!(traj[13].m, 1.0);
        assert_abs_diff_eq!(traj.last().unwrap().m, hp.remanence_ratio, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        let p = HysteresisParams {
            remanence_ratio: 1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = HysteresisParams {
            remanence_ratio: 0.99,
            sharpness: 1.0,
            ..Default::default()
        };
        assert!(p.branches().is_err());
        assert!(FieldModelParams {
            decay_length_mm: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
