//! Dip fitting, visibility, and count-ratio isolation.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_10;

use crate::error::{domain, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};

/// A value with its one-standard-deviation uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }

    /// Distance to `other` in units of this estimate's sigma.
    pub fn z_score(&self, other: f64) -> f64 {
        (self.value - other).abs() / self.sigma
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub net: f64,
    pub sigma: f64,
}

/// `(c_max − c_min) / c_max`.
pub fn visibility(c_max: f64, c_min: f64) -> Result<f64> {
    if !(c_max > 0.0 && c_max.is_finite()) {
        return Err(domain(format!("c_max = {c_max} must be positive")));
    }
    if !(c_min >= 0.0) {
        return Err(domain(format!("c_min = {c_min} must be >= 0")));
    }
    if c_min > c_max {
        return Err(domain(format!("c_min = {c_min} exceeds c_max = {c_max}")));
    }
    Ok((c_max - c_min) / c_max)
}

const DB_PER_LN: f64 = 10.0 / LN_10;

/// `10·log10(forward/backward)` with Poisson sigmas combined in quadrature.
pub fn ratio_db(forward: Estimate, backward: Estimate) -> Result<Estimate> {
    if !(forward.value > 0.0) || !(backward.value > 0.0) {
        return Err(Error::UndefinedRatio(format!(
            "net counts must be positive, got {} and {}",
            forward.value, backward.value
        )));
    }
    let rel = ((forward.sigma / forward.value).powi(2) + (backward.sigma / backward.value).powi(2)).sqrt();
    Ok(Estimate::new(
        10.0 * (forward.value / backward.value).log10(),
        DB_PER_LN * rel,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DipShape {
    Gaussian,
    Lorentz,
}

impl DipShape {
    /// Unit-height profile at reduced coordinate `u = (x − center)/width`.
    pub fn profile(self, u: f64) -> f64 {
        match self {
            DipShape::Gaussian => (-u * u).exp(),
            DipShape::Lorentz => 1.0 / (1.0 + u * u),
        }
    }
}

/// `floor + amplitude·(1 − g((x − center)/width))`: the baseline far from the
/// dip is `floor + amplitude` and the minimum is `floor`.
pub fn dip_model(shape: DipShape, p: &DipParams, x: f64) -> f64 {
    p.floor + p.amplitude * (1.0 - shape.profile((x - p.center) / p.width))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipParams {
    pub center: f64,
    pub width: f64,
    pub floor: f64,
    pub amplitude: f64,
}

impl DipParams {
    fn to_vec(self) -> [f64; 4] {
        [self.center, self.width, self.floor, self.amplitude]
    }

    fn from_slice(p: &[f64]) -> Self {
        Self {
            center: p[0],
            width: p[1],
            floor: p[2],
            amplitude: p[3],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DipFit {
    pub shape: DipShape,
    pub params: DipParams,
    /// Row-major 4×4 in the order center, width, floor, amplitude.
    pub covariance: Vec<[f64; 4]>,
    pub chi_squared: f64,
    pub degrees_of_freedom: usize,
    pub iterations: usize,
    pub starts_tried: usize,
}

impl DipFit {
    fn sigma(&self, k: usize) -> f64 {
        self.covariance[k][k].max(0.0).sqrt()
    }

    pub fn center(&self) -> Estimate {
        Estimate::new(self.params.center, self.sigma(0))
    }

    pub fn width(&self) -> Estimate {
        Estimate::new(self.params.width, self.sigma(1))
    }

    pub fn floor(&self) -> Estimate {
        Estimate::new(self.params.floor, self.sigma(2))
    }

    pub fn amplitude(&self) -> Estimate {
        Estimate::new(self.params.amplitude, self.sigma(3))
    }

    /// `(baseline − floor)/baseline = amplitude/(floor + amplitude)`, with
    /// the uncertainty propagated through the floor/amplitude covariance.
    pub fn visibility(&self) -> Estimate {
        let (f, a) = (self.params.floor, self.params.amplitude);
        let b = f + a;
        let v = a / b;
        let dv_df = -a / (b * b);
        let dv_da = f / (b * b);
        let c = &self.covariance;
        let var = dv_df * dv_df * c[2][2] + dv_da * dv_da * c[3][3] + 2.0 * dv_df * dv_da * c[2][3];
        Estimate::new(v, var.max(0.0).sqrt())
    }
}

/// Zero-count points still carry about one count of uncertainty.
fn effective_sigma(s: f64) -> f64 {
    s.max(1.0)
}

/// Weighted least-squares dip fit from a small grid of starts.
pub fn fit_dip(curve: &[CurvePoint], shape: DipShape) -> Result<DipFit> {
    if curve.len() < 5 {
        return Err(domain(format!("dip fit needs at least 5 points, got {}", curve.len())));
    }
    if curve
        .iter()
        .any(|p| !p.x.is_finite() || !p.net.is_finite() || !(p.sigma >= 0.0))
    {
        return Err(domain("curve points must be finite with sigma >= 0"));
    }
    let mut pts = curve.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    let imin = (0..pts.len())
        .min_by(|&i, &j| pts[i].net.total_cmp(&pts[j].net))
        .expect("non-empty");
    if imin == 0 || imin == pts.len() - 1 {
        return Err(domain("dip minimum lies at the edge of the scan"));
    }
    let x0 = pts[0].x;
    let span = pts[pts.len() - 1].x - x0;
    let step = span / (pts.len() - 1) as f64;
    let y_min = pts[imin].net;
    let y_max = pts.iter().map(|p| p.net).fold(f64::NEG_INFINITY, f64::max);
    // Baseline guess from the outer quarter of the scan on each side.
    let edge = (pts.len() / 4).max(1);
    let outer: Vec<f64> = pts[..edge]
        .iter()
        .chain(&pts[pts.len() - edge..])
        .map(|p| p.net)
        .collect();
    let baseline = outer.iter().sum::<f64>() / outer.len() as f64;
    let amp0 = (baseline.max(y_max * 0.5) - y_min).max(1e-12 * y_max.abs().max(1.0));

    let residuals = |p: &[f64]| -> Option<Vec<f64>> {
        let dp = DipParams::from_slice(p);
        if !(dp.width > 0.0) {
            return None;
        }
        Some(
            pts.iter()
                .map(|q| (dip_model(shape, &dp, q.x) - q.net) / effective_sigma(q.sigma))
                .collect(),
        )
    };
    let lower = [x0 - span, span * 1e-6, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let upper = [x0 + 2.0 * span, span * 10.0, f64::INFINITY, f64::INFINITY];
    let opts = LmOptions {
        max_iterations: 2000,
        ..LmOptions::default()
    };

    let xc = pts[imin].x;
    let mut best: Option<crate::fit::LmResult> = None;
    let mut best_any = f64::INFINITY;
    let mut starts = 0;
    for dc in [-1.0, 0.0, 1.0] {
        for wf in [0.05, 0.15, 0.4] {
            starts += 1;
            let init = DipParams {
                center: xc + dc * step,
                width: (wf * span).max(step),
                floor: y_min,
                amplitude: amp0,
            };
            let Some(res) = levenberg_marquardt(residuals, &init.to_vec(), &lower, &upper, &opts) else {
                continue;
            };
            best_any = best_any.min(res.cost);
            if res.converged && best.as_ref().is_none_or(|b| res.cost < b.cost) {
                best = Some(res);
            }
        }
    }
    let res = best.ok_or_else(|| Error::Fit {
        message: format!("{shape:?} dip fit did not converge from {starts} starts"),
        best_residual: best_any.sqrt(),
    })?;
    let cov = res.covariance.as_ref().ok_or_else(|| Error::Fit {
        message: "singular normal matrix at the optimum".into(),
        best_residual: res.cost.sqrt(),
    })?;
    let covariance = (0..4)
        .map(|i| [cov[(i, 0)], cov[(i, 1)], cov[(i, 2)], cov[(i, 3)]])
        .collect();
    let mut params = DipParams::from_slice(&res.params);
    params.width = params.width.abs();
    Ok(DipFit {
        shape,
        params,
        covariance,
        chi_squared: res.cost,
        degrees_of_freedom: pts.len() - 4,
        iterations: res.iterations,
        starts_tried: starts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synth(shape: DipShape, p: DipParams, n: usize) -> Vec<CurvePoint> {
        (0..n)
            .map(|i| {
                let x = -20.0 + 40.0 * i as f64 / (n - 1) as f64;
                let y = dip_model(shape, &p, x);
                CurvePoint {
                    x,
                    net: y,
                    sigma: y.sqrt(),
                }
            })
            .collect()
    }

    const TRUE: DipParams = DipParams {
        center: 0.7,
        width: 3.1,
        floor: 1200.0,
        amplitude: 8800.0,
    };

    #[test]
    fn visibility_edges() {
        assert_eq!(visibility(1000.0, 0.0).unwrap(), 1.0);
        assert_eq!(visibility(1000.0, 1000.0).unwrap(), 0.0);
        assert_relative_eq!(visibility(10000.0, 884.0).unwrap(), 0.9116, max_relative = 1e-15);
        assert!(visibility(10.0, 11.0).is_err());
        assert!(visibility(0.0, 0.0).is_err());
    }

    #[test]
    fn ratio_examples() {
        let r = ratio_db(Estimate::new(1e4, 100.0), Estimate::new(1e2, 10.0)).unwrap();
        assert_relative_eq!(r.value, 20.0, max_relative = 1e-12);
        assert!((r.sigma - 0.44).abs() < 0.005, "{}", r.sigma);
        let r = ratio_db(Estimate::new(17.10, 0.0), Estimate::new(1.0, 0.0)).unwrap();
        assert!((r.value - 12.33).abs() < 0.005);
        assert_eq!(
            ratio_db(Estimate::new(5.0, 1.0), Estimate::new(5.0, 1.0))
                .unwrap()
                .value,
            0.0
        );
        assert!(matches!(
            ratio_db(Estimate::new(5.0, 1.0), Estimate::new(0.0, 1.0)),
            Err(Error::UndefinedRatio(_))
        ));
    }

    #[test]
    fn recovers_exact_parameters() {
        for shape in [DipShape::Gaussian, DipShape::Lorentz] {
            let f = fit_dip(&synth(shape, TRUE, 61), shape).unwrap();
            for (got, want) in f.params.to_vec().iter().zip(TRUE.to_vec()) {
                assert_relative_eq!(*got, want, max_relative = 1e-6);
            }
            assert_relative_eq!(f.visibility().value, 0.88, max_relative = 1e-6);
        }
    }

    #[test]
    fn symmetric_data_centers_on_axis() {
        let p = DipParams { center: 0.0, ..TRUE };
        let f = fit_dip(&synth(DipShape::Gaussian, p, 41), DipShape::Gaussian).unwrap();
        assert!(f.params.center.abs() < 1e-8);
    }

    #[test]
    fn wrong_shape_fits_worse() {
        let data = synth(DipShape::Lorentz, TRUE, 61);
        let good = fit_dip(&data, DipShape::Lorentz).unwrap();
        let bad = fit_dip(&data, DipShape::Gaussian).unwrap();
        assert!(bad.chi_squared > good.chi_squared + 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_dip(&synth(DipShape::Gaussian, TRUE, 4), DipShape::Gaussian).is_err());
        let edge: Vec<CurvePoint> = (0..8)
            .map(|i| CurvePoint {
                x: i as f64,
                net: i as f64,
                sigma: 1.0,
            })
            .collect();
        assert!(fit_dip(&edge, DipShape::Gaussian).is_err());
    }
}
