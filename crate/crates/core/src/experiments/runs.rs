//! Simulated magnet-sweep and HOM experiments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::analysis::{fit_dip, ratio_db, CurvePoint, DipShape, Estimate};
use super::timestamps::{count_coincidences_with, simulate_stream, CoincidenceRecord, StreamParams};
use crate::device::{pair_power, IsolatorConfig, PortPair};
use crate::error::{domain, Error, Result};
use crate::magneto::{
    initialize_magnetization, sweep_trajectory, FieldModelParams, HysteresisParams, MagnetizationState, Polarity,
};
use crate::optics::Direction;
use crate::quantum::{
    apply_device_to_signal, dip_center, hom_scan, poisson_draw, rng_for, spdc_state, BiphotonState, DetectorModel,
    IndistinguishabilityParams, SignalPath, SpectralGrid, DEFAULT_SEED,
};

/// Which device ports the signal photon uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// Port 1 to port 2.
    A,
    /// Port 2 to port 1.
    #[serde(rename = "A'", alias = "A_prime", alias = "A′")]
    APrime,
    /// Port 3 to port 4.
    B,
    /// Port 4 to port 3.
    #[serde(rename = "B'", alias = "B_prime", alias = "B′")]
    BPrime,
    /// Straight waveguide next to the device, untouched by the magnet.
    #[serde(rename = "reference_waveguide")]
    ReferenceWaveguide,
}

impl Case {
    pub fn pair(self) -> Option<PortPair> {
        let (i, o) = match self {
            Case::A => (1, 2),
            Case::APrime => (2, 1),
            Case::B => (3, 4),
            Case::BPrime => (4, 3),
            Case::ReferenceWaveguide => return None,
        };
        Some(PortPair::new(i, o).expect("valid device ports"))
    }

    pub fn direction(self) -> Option<Direction> {
        self.pair().and_then(PortPair::direction)
    }

    pub fn label(self) -> &'static str {
        match self {
            Case::A => "A",
            Case::APrime => "A'",
            Case::B => "B",
            Case::BPrime => "B'",
            Case::ReferenceWaveguide => "reference_waveguide",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhotonPairSource {
    /// Detected-pair generation rate before any loss.
    pub pair_rate_hz: f64,
    pub center_wavelength_nm: f64,
    pub bandwidth_fwhm_ghz: f64,
    pub grid_half_width_ghz: f64,
    pub n_bins: usize,
}

impl Default for PhotonPairSource {
    fn default() -> Self {
        Self {
            pair_rate_hz: 5e4,
            center_wavelength_nm: 1550.0,
            bandwidth_fwhm_ghz: 100.0,
            grid_half_width_ghz: 300.0,
            n_bins: 64,
        }
    }
}

impl PhotonPairSource {
    pub fn validate(&self) -> Result<()> {
        if !(self.pair_rate_hz >= 0.0 && self.pair_rate_hz.is_finite()) {
            return Err(domain("pair_rate_hz must be finite and >= 0"));
        }
        self.state().map(|_| ())
    }

    pub fn grid(&self) -> Result<SpectralGrid> {
        SpectralGrid::around_wavelength(self.center_wavelength_nm, self.grid_half_width_ghz, self.n_bins)
    }

    pub fn state(&self) -> Result<BiphotonState> {
        spdc_state(&self.grid()?, self.bandwidth_fwhm_ghz)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct MagnetConfig {
    pub field: FieldModelParams,
    pub hysteresis: HysteresisParams,
    pub polarity: Polarity,
}

impl MagnetConfig {
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        self.hysteresis.validate()
    }
}

/// Approach from 26 mm to contact, then retreat to 26 mm, in 2 mm steps.
pub fn default_trajectory() -> Vec<f64> {
    (-13..=13).map(|i| 2.0 * i as f64).collect()
}

fn default_initial_m() -> Option<f64> {
    Some(-0.6)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub case: Case,
    /// Signed magnet positions in mm: negative while approaching, positive
    /// while retreating.
    pub magnet_trajectory: Vec<f64>,
    pub source: PhotonPairSource,
    pub detector: DetectorModel,
    pub seed: u64,
    /// Film magnetization before the sweep. `None` is an uninitialized
    /// film and the sweep refuses to run.
    #[serde(default = "default_initial_m")]
    pub initial_m: Option<f64>,
    /// Samples taken after re-initializing the film at the last position.
    pub reset_points: usize,
    /// Extra non-reciprocal loss of the blocked direction at saturation,
    /// beyond what the interferometer model predicts. Scales with |m|.
    pub excess_isolation_db: f64,
    /// Fiber-to-chip loss common to every case.
    pub edge_loss_db: f64,
    pub accidental_offset_ps: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            case: Case::BPrime,
            magnet_trajectory: default_trajectory(),
            source: PhotonPairSource::default(),
            detector: DetectorModel::default(),
            seed: DEFAULT_SEED,
            initial_m: default_initial_m(),
            reset_points: 3,
            excess_isolation_db: 1.33,
            edge_loss_db: 0.0,
            accidental_offset_ps: super::timestamps::DEFAULT_ACCIDENTAL_OFFSET_PS,
        }
    }
}

impl ScenarioConfig {
    pub fn with_case(&self, case: Case) -> Self {
        Self { case, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.detector.validate()?;
        if let Some(m) = self.initial_m {
            if !(m.abs() <= 1.0) {
                return Err(domain(format!("initial_m = {m} outside [-1, 1]")));
            }
        }
        if self.magnet_trajectory.iter().any(|x| !x.is_finite()) {
            return Err(domain("magnet trajectory positions must be finite"));
        }
        if !(self.excess_isolation_db >= 0.0 && self.excess_isolation_db.is_finite()) {
            return Err(domain("excess_isolation_db must be finite and >= 0"));
        }
        if !(self.edge_loss_db >= 0.0 && self.edge_loss_db.is_finite()) {
            return Err(domain("edge_loss_db must be finite and >= 0"));
        }
        if !(self.accidental_offset_ps > self.detector.coincidence_window_ps) {
            return Err(domain("accidental offset must exceed the coincidence window"));
        }
        Ok(())
    }
}

fn db_to_power(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Extra-loss factor: the direction the film blocks loses
/// `excess_db·|m|` on top of the interferometer response.
pub fn excess_factor(direction: Direction, m: f64, excess_db: f64) -> f64 {
    let blocked = match direction {
        Direction::Forward => m < 0.0,
        Direction::Backward => m > 0.0,
    };
    if blocked {
        db_to_power(excess_db * m.abs())
    } else {
        1.0
    }
}

/// Power transmission of the signal path at one wavelength.
pub fn signal_transmission(
    scenario: &ScenarioConfig,
    config: &IsolatorConfig,
    m: f64,
    wavelength_nm: f64,
) -> Result<f64> {
    let edge = db_to_power(scenario.edge_loss_db);
    match (scenario.case.pair(), scenario.case.direction()) {
        (Some(pair), Some(dir)) => {
            let t = pair_power(config, wavelength_nm, m, pair)?;
            Ok(t * excess_factor(dir, m, scenario.excess_isolation_db) * edge)
        }
        _ => Ok(db_to_power(config.base_loss_db) * edge),
    }
}

/// Noise-free net coincidences for a transmission `t`.
pub fn expected_net(scenario: &ScenarioConfig, t: f64) -> f64 {
    let d = &scenario.detector;
    scenario.source.pair_rate_hz * d.efficiency * d.efficiency * t * d.integration_time_s
}

/// Ground-truth `10·log10(T_fwd/T_bwd)` of two scenarios at magnetization `m`.
pub fn model_isolation_db(
    forward: &ScenarioConfig,
    backward: &ScenarioConfig,
    config: &IsolatorConfig,
    m: f64,
) -> Result<f64> {
    let tf = signal_transmission(forward, config, m, forward.source.center_wavelength_nm)?;
    let tb = signal_transmission(backward, config, m, backward.source.center_wavelength_nm)?;
    Ok(10.0 * (tf / tb).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Approach,
    Retreat,
    Reset,
    Scan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointDetail {
    pub segment: Segment,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub magnetization: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probability: Option<f64>,
    pub transmission: f64,
    /// Noise-free net counts.
    pub expected: f64,
    pub raw: f64,
    pub accidentals: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub experiment: String,
    pub case: Case,
    pub seed: u64,
    pub pair_rate_hz: f64,
    pub wavelength_nm: f64,
    pub integration_time_s: f64,
    pub coincidence_window_ps: f64,
    pub excess_isolation_db: f64,
}

impl ScenarioSummary {
    fn of(experiment: &str, s: &ScenarioConfig) -> Self {
        Self {
            experiment: experiment.into(),
            case: s.case,
            seed: s.seed,
            pair_rate_hz: s.source.pair_rate_hz,
            wavelength_nm: s.source.center_wavelength_nm,
            integration_time_s: s.detector.integration_time_s,
            coincidence_window_ps: s.detector.coincidence_window_ps,
            excess_isolation_db: s.excess_isolation_db,
        }
    }
}

/// Output of one simulated experiment. `points` runs parallel to `curve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: ScenarioSummary,
    pub curve: Vec<CurvePoint>,
    pub derived: BTreeMap<String, Estimate>,
    pub points: Vec<PointDetail>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("x,net,sigma\n");
        for p in &self.curve {
            s.push_str(&format!("{},{},{}\n", p.x, p.net, p.sigma));
        }
        s
    }

    /// Index of the first point closest to `x`.
    pub fn index_near(&self, x: f64) -> Option<usize> {
        (0..self.curve.len()).min_by(|&i, &j| (self.curve[i].x - x).abs().total_cmp(&(self.curve[j].x - x).abs()))
    }

    fn estimate_at(&self, i: usize) -> Estimate {
        Estimate::new(self.curve[i].net, self.curve[i].sigma)
    }

    pub fn indices_of(&self, segment: Segment) -> Vec<usize> {
        (0..self.points.len())
            .filter(|&i| self.points[i].segment == segment)
            .collect()
    }
}

/// Counts the film state and position at every sweep sample.
fn sweep_states(scenario: &ScenarioConfig, magnet: &MagnetConfig) -> Result<Vec<(f64, MagnetizationState, Segment)>> {
    let m0 = scenario
        .initial_m
        .ok_or_else(|| Error::State("film magnetization was never initialized".into()))?;
    let traj = &scenario.magnet_trajectory;
    if traj.is_empty() {
        return Err(domain("magnet sweep needs a non-empty trajectory"));
    }
    let start = MagnetizationState::with_m(m0)?;
    let states = sweep_trajectory(&magnet.field, &magnet.hysteresis, magnet.polarity, start, traj)?;
    let mut out: Vec<(f64, MagnetizationState, Segment)> = traj
        .iter()
        .zip(&states)
        .map(|(&x, &s)| (x, s, if x <= 0.0 { Segment::Approach } else { Segment::Retreat }))
        .collect();
    if scenario.reset_points > 0 {
        let last = *states.last().expect("non-empty");
        let x_last = *traj.last().expect("non-empty");
        let reset = initialize_magnetization(&last, m0)?;
        let held = vec![x_last; scenario.reset_points];
        let after = sweep_trajectory(&magnet.field, &magnet.hysteresis, magnet.polarity, reset, &held)?;
        out.extend(after.into_iter().map(|s| (x_last, s, Segment::Reset)));
    }
    Ok(out)
}

fn simulate_point(scenario: &ScenarioConfig, t: f64, stream: u64) -> Result<CoincidenceRecord> {
    let d = &scenario.detector;
    let params = StreamParams {
        pair_rate_hz: scenario.source.pair_rate_hz,
        idler_detection: d.efficiency,
        signal_detection: d.efficiency * t,
        dark_rate_hz: d.dark_rate_hz,
        duration_s: d.integration_time_s,
    };
    let s = simulate_stream(&params, &mut rng_for(scenario.seed, stream))?;
    count_coincidences_with(&s, d.coincidence_window_ps, scenario.accidental_offset_ps)
}

/// Coincidence counts along a magnet trajectory, from simulated timestamp
/// streams, ending with the gray-zone re-initialization samples.
pub fn run_magnet_sweep(
    scenario: &ScenarioConfig,
    config: &IsolatorConfig,
    magnet: &MagnetConfig,
) -> Result<RunReport> {
    scenario.validate()?;
    config.validate()?;
    magnet.validate()?;
    let samples = sweep_states(scenario, magnet)?;
    let lambda = scenario.source.center_wavelength_nm;
    let rows: Vec<(CurvePoint, PointDetail)> = samples
        .par_iter()
        .enumerate()
        .map(|(i, &(x, st, segment))| {
            let t = signal_transmission(scenario, config, st.m, lambda)?;
            let rec = simulate_point(scenario, t, i as u64)?;
            Ok((
                CurvePoint {
                    x,
                    net: rec.net,
                    sigma: rec.sigma,
                },
                PointDetail {
                    segment,
                    magnetization: Some(st.m),
                    probability: None,
                    transmission: t,
                    expected: expected_net(scenario, t),
                    raw: rec.raw_coincidences as f64,
                    accidentals: rec.accidentals,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let (curve, points): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut report = RunReport {
        scenario: ScenarioSummary::of("magnet_sweep", scenario),
        curve,
        derived: BTreeMap::new(),
        points,
    };

    let sat = report.index_near(0.0).expect("non-empty");
    let sat_est = report.estimate_at(sat);
    report.derived.insert("net_initial".into(), report.estimate_at(0));
    report.derived.insert("net_at_contact".into(), sat_est);
    report.derived.insert(
        "expected_at_contact".into(),
        Estimate::new(report.points[sat].expected, report.points[sat].expected.sqrt()),
    );
    let reset = report.indices_of(Segment::Reset);
    if !reset.is_empty() {
        let n = reset.len() as f64;
        let mean = reset.iter().map(|&i| report.curve[i].net).sum::<f64>() / n;
        let var = reset.iter().map(|&i| report.curve[i].sigma.powi(2)).sum::<f64>() / (n * n);
        report
            .derived
            .insert("net_after_reset".into(), Estimate::new(mean, var.sqrt()));
    }
    if let Ok(c) = ratio_db(report.estimate_at(0), sat_est) {
        report.derived.insert("initial_over_contact_db".into(), c);
    }
    Ok(report)
}

/// Single-photon isolation from a forward and a backward sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationEstimate {
    /// Forward versus backward counts, both at magnet contact.
    pub contact_forward_over_backward_db: Estimate,
    /// Backward counts before the sweep versus at contact.
    pub backward_initial_over_contact_db: Estimate,
}

pub fn isolation_from_counts(forward: &RunReport, backward: &RunReport) -> Result<IsolationEstimate> {
    if forward.scenario.integration_time_s != backward.scenario.integration_time_s
        || forward.scenario.coincidence_window_ps != backward.scenario.coincidence_window_ps
    {
        return Err(domain("reports were taken with different integration settings"));
    }
    let pick = |r: &RunReport| {
        r.index_near(0.0)
            .map(|i| r.estimate_at(i))
            .ok_or_else(|| Error::UndefinedRatio("empty report".into()))
    };
    let f0 = pick(forward)?;
    let b0 = pick(backward)?;
    let contact = ratio_db(f0, b0)?;
    let initial = ratio_db(backward.estimate_at(0), b0)?;
    Ok(IsolationEstimate {
        contact_forward_over_backward_db: contact,
        backward_initial_over_contact_db: initial,
    })
}

/// Delays from `start` to `stop` inclusive in steps of `step`.
pub fn delay_grid(start_ps: f64, stop_ps: f64, step_ps: f64) -> Result<Vec<f64>> {
    if !(step_ps > 0.0) || !(stop_ps > start_ps) || !start_ps.is_finite() || !stop_ps.is_finite() {
        return Err(domain("delay grid needs start < stop and a positive step"));
    }
    let n = ((stop_ps - start_ps) / step_ps + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start_ps + i as f64 * step_ps).collect())
}

fn signal_path(scenario: &ScenarioConfig, config: &IsolatorConfig, m: f64) -> SignalPath {
    match scenario.case.pair() {
        Some(pair) => SignalPath::Isolator {
            config: *config,
            m,
            pair,
        },
        None => SignalPath::Waveguide {
            loss_db: config.base_loss_db,
        },
    }
}

/// State after the signal passes the scenario's path at saturation, and
/// the surviving fraction including edge and excess losses.
pub fn transmitted_state(scenario: &ScenarioConfig, config: &IsolatorConfig) -> Result<(BiphotonState, f64)> {
    let state = scenario.source.state()?;
    let (out, survival) = apply_device_to_signal(&state, &signal_path(scenario, config, 1.0))?;
    let extra = match scenario.case.direction() {
        Some(dir) => excess_factor(dir, 1.0, scenario.excess_isolation_db),
        None => 1.0,
    };
    Ok((out, survival * extra * db_to_power(scenario.edge_loss_db)))
}

/// Mode overlap at which the transmitted state shows visibility `target`.
pub fn mode_overlap_for_visibility(scenario: &ScenarioConfig, config: &IsolatorConfig, target: f64) -> Result<f64> {
    let (state, _) = transmitted_state(scenario, config)?;
    let (_, spectral) = dip_center(&state);
    let v = target / spectral;
    if !(0.0..=1.0).contains(&v) {
        return Err(domain(format!(
            "visibility {target} unreachable (spectral limit {spectral})"
        )));
    }
    Ok(v)
}

/// HOM scan with the signal photon sent through the scenario's path at
/// saturation. Counts are Poisson draws unless `noiseless`, in which case
/// the curve holds expectations with their Poisson sigmas.
pub fn run_hom(
    scenario: &ScenarioConfig,
    config: &IsolatorConfig,
    delays_ps: &[f64],
    mode_overlap: f64,
    noiseless: bool,
) -> Result<RunReport> {
    scenario.validate()?;
    config.validate()?;
    let indist = IndistinguishabilityParams::new(mode_overlap)?;
    let (state, survival) = transmitted_state(scenario, config)?;
    let scan = hom_scan(&state, &indist, delays_ps)?;
    let dip = dip_center(&state);
    let per_pair = expected_net(scenario, survival);
    let rows: Vec<(CurvePoint, PointDetail)> = scan
        .par_iter()
        .enumerate()
        .map(|(i, &(x, p))| {
            let mean = per_pair * p;
            let raw = if noiseless {
                mean
            } else {
                poisson_draw(mean, &mut rng_for(scenario.seed, i as u64))? as f64
            };
            Ok((
                CurvePoint {
                    x,
                    net: raw,
                    sigma: raw.sqrt(),
                },
                PointDetail {
                    segment: Segment::Scan,
                    magnetization: Some(1.0),
                    probability: Some(p),
                    transmission: survival,
                    expected: mean,
                    raw,
                    accidentals: 0.0,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let (curve, points): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut derived = BTreeMap::new();
    derived.insert("visibility_model".into(), Estimate::exact(mode_overlap * dip.1));
    derived.insert("dip_center_model_ps".into(), Estimate::exact(dip.0));
    derived.insert("survival".into(), Estimate::exact(survival));
    derived.insert("mode_overlap".into(), Estimate::exact(mode_overlap));
    for shape in [DipShape::Gaussian, DipShape::Lorentz] {
        let fit = fit_dip(&curve, shape)?;
        let tag = match shape {
            DipShape::Gaussian => "gaussian",
            DipShape::Lorentz => "lorentz",
        };
        derived.insert(format!("visibility_{tag}"), fit.visibility());
        derived.insert(format!("center_ps_{tag}"), fit.center());
        derived.insert(format!("width_ps_{tag}"), fit.width());
        derived.insert(format!("floor_{tag}"), fit.floor());
        derived.insert(format!("amplitude_{tag}"), fit.amplitude());
        derived.insert(
            format!("reduced_chi2_{tag}"),
            Estimate::exact(fit.chi_squared / fit.degrees_of_freedom.max(1) as f64),
        );
    }
    Ok(RunReport {
        scenario: ScenarioSummary::of("hom", scenario),
        curve,
        derived,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{calibrate, CalibrationTargets};
    use std::sync::OnceLock;

    fn device() -> IsolatorConfig {
        static CFG: OnceLock<IsolatorConfig> = OnceLock::new();
        *CFG.get_or_init(|| calibrate(&CalibrationTargets::default()).unwrap().config)
    }

    fn quick() -> ScenarioConfig {
        ScenarioConfig {
            detector: DetectorModel {
                integration_time_s: 1.0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn cases_map_to_ports() {
        assert_eq!(Case::A.pair().unwrap(), PortPair::new(1, 2).unwrap());
        assert_eq!(Case::APrime.pair().unwrap(), PortPair::new(2, 1).unwrap());
        assert_eq!(Case::B.pair().unwrap(), PortPair::new(3, 4).unwrap());
        assert_eq!(Case::BPrime.pair().unwrap(), PortPair::new(4, 3).unwrap());
        assert_eq!(Case::B.direction(), Some(Direction::Forward));
        assert_eq!(Case::BPrime.direction(), Some(Direction::Backward));
        assert!(Case::ReferenceWaveguide.pair().is_none());
    }

    #[test]
    fn uninitialized_film_is_a_state_error() {
        let s = ScenarioConfig {
            initial_m: None,
            ..quick()
        };
        let e = run_magnet_sweep(&s, &device(), &MagnetConfig::default()).unwrap_err();
        assert!(matches!(e, Error::State(_)));
    }

    #[test]
    fn sweep_shape() {
        let cfg = device();
        let mag = MagnetConfig::default();
        let bp = run_magnet_sweep(&quick(), &cfg, &mag).unwrap();
        let b = run_magnet_sweep(&quick().with_case(Case::B), &cfg, &mag).unwrap();
        let n = quick().magnet_trajectory.len();
        let argmin = (0..n)
            .min_by(|&i, &j| bp.curve[i].net.total_cmp(&bp.curve[j].net))
            .unwrap();
        assert_eq!(bp.curve[argmin].x, 0.0);
        // Along the approach the pass direction rises monotonically to contact.
        let approach = b.indices_of(Segment::Approach);
        let contact = b.index_near(0.0).unwrap();
        assert!(approach
            .iter()
            .all(|&i| b.points[i].expected <= b.points[contact].expected));
        let reset = bp.indices_of(Segment::Reset);
        assert_eq!(bp.points[reset[0]].expected, bp.points[0].expected);
    }

    #[test]
    fn same_seed_same_report() {
        let cfg = device();
        let a = run_magnet_sweep(&quick(), &cfg, &MagnetConfig::default()).unwrap();
        let b = run_magnet_sweep(&quick(), &cfg, &MagnetConfig::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn noiseless_hom_recovers_visibility() {
        let s = ScenarioConfig {
            case: Case::ReferenceWaveguide,
            ..quick()
        };
        let delays = delay_grid(-12.0, 12.0, 0.5).unwrap();
        let r = run_hom(&s, &device(), &delays, 0.9561, true).unwrap();
        let v = r.derived["visibility_gaussian"].value;
        assert!((v - 0.9561).abs() < 1e-6, "{v}");
    }

    #[test]
    fn isolation_needs_positive_counts() {
        let cfg = device();
        let mut r = run_magnet_sweep(&quick(), &cfg, &MagnetConfig::default()).unwrap();
        let i = r.index_near(0.0).unwrap();
        r.curve[i].net = 0.0;
        let e = isolation_from_counts(&r.clone(), &r).unwrap_err();
        assert!(matches!(e, Error::UndefinedRatio(_)));
    }

    #[test]
    fn delay_grid_is_inclusive() {
        let d = delay_grid(-1.0, 1.0, 0.5).unwrap();
        assert_eq!(d, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(delay_grid(1.0, -1.0, 0.5).is_err());
    }
}
