//! Complex linear-optics algebra.
//!
//! A [`DirectionalElement`] carries one transfer matrix per propagation
//! direction. The forward matrix maps left-side mode amplitudes to the
//! right side; the backward matrix maps right-side amplitudes to the left.
//! Both matrices are indexed by the same mode basis, so an element is
//! reciprocal exactly when `backward == forwardᵀ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{domain, structure, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Tolerance used for unitarity, passivity and reciprocity checks.
pub const MATRIX_TOL: f64 = 1e-12;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

/// Ordered, unique mode labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PortBasis {
    labels: Vec<String>,
}

impl PortBasis {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(structure("port basis must have at least one port"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(structure(format!("duplicate port label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// Basis labelled "1".."n".
    pub fn numbered(n: usize) -> Self {
        assert!(n > 0, "port basis must have at least one port");
        Self {
            labels: (1..=n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

fn check_finite(m: &CMatrix, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(domain(format!("{what} contains a non-finite entry")))
    }
}

/// Max absolute entry of `S†S − I`.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let g = m.adjoint() * m;
    let n = g.nrows();
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            let target = if r == c {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            worst = worst.max((g[(r, c)] - target).norm());
        }
    }
    worst
}

pub fn max_singular_value(m: &CMatrix) -> f64 {
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Two-direction scattering element over a fixed mode basis.
#[derive(Clone, Debug)]
pub struct DirectionalElement {
    basis: PortBasis,
    forward: CMatrix,
    backward: CMatrix,
    lossless: bool,
}

impl DirectionalElement {
    /// Validates shapes, finiteness and passivity. The lossless flag is set
    /// when both directions are unitary within [`MATRIX_TOL`].
    pub fn new(basis: PortBasis, forward: CMatrix, backward: CMatrix) -> Result<Self> {
        let n = basis.count();
        for (m, what) in [(&forward, "forward matrix"), (&backward, "backward matrix")] {
            if m.nrows() != n || m.ncols() != n {
                return Err(structure(format!(
                    "{what} is {}x{} but basis has {n} ports",
                    m.nrows(),
                    m.ncols()
                )));
            }
            check_finite(m, what)?;
            let smax = max_singular_value(m);
            if smax > 1.0 + MATRIX_TOL {
                return Err(domain(format!(
                    "{what} has singular value {smax} > 1 (gain is not modeled)"
                )));
            }
        }
        let lossless = unitarity_defect(&forward) <= MATRIX_TOL && unitarity_defect(&backward) <= MATRIX_TOL;
        Ok(Self {
            basis,
            forward,
            backward,
            lossless,
        })
    }

    /// Element whose backward matrix is the transpose of `forward`.
    pub fn reciprocal(basis: PortBasis, forward: CMatrix) -> Result<Self> {
        let backward = forward.transpose();
        Self::new(basis, forward, backward)
    }

    pub fn identity(basis: PortBasis) -> Self {
        let n = basis.count();
        Self {
            basis,
            forward: CMatrix::identity(n, n),
            backward: CMatrix::identity(n, n),
            lossless: true,
        }
    }

    pub fn basis(&self) -> &PortBasis {
        &self.basis
    }

    pub fn port_count(&self) -> usize {
        self.basis.count()
    }

    pub fn forward(&self) -> &CMatrix {
        &self.forward
    }

    pub fn backward(&self) -> &CMatrix {
        &self.backward
    }

    pub fn matrix(&self, direction: Direction) -> &CMatrix {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    pub fn is_lossless(&self) -> bool {
        self.lossless
    }

    pub fn is_reciprocal(&self) -> bool {
        reciprocity_defect(self) <= MATRIX_TOL
    }

    /// Same element with a relabelled basis of equal size.
    pub fn with_basis(mut self, basis: PortBasis) -> Result<Self> {
        if basis.count() != self.basis.count() {
            return Err(structure(format!(
                "cannot relabel {}-port element with {}-port basis",
                self.basis.count(),
                basis.count()
            )));
        }
        self.basis = basis;
        Ok(self)
    }
}

/// Directional coupler with cross-coupled power fraction `power_ratio`.
///
/// Convention: the cross path carries a factor `+i` relative to the bar
/// path, `[[t, iκ], [iκ, t]]` with `t = √(1−r)`, `κ = √r`.
pub fn make_coupler(power_ratio: f64) -> Result<DirectionalElement> {
    if !(0.0..=1.0).contains(&power_ratio) {
        return Err(domain(format!("coupler power ratio {power_ratio} outside [0, 1]")));
    }
    let t = Complex64::new((1.0 - power_ratio).sqrt(), 0.0);
    let k = I * power_ratio.sqrt();
    let m = CMatrix::from_row_slice(2, 2, &[t, k, k, t]);
    Ok(DirectionalElement {
        basis: PortBasis::numbered(2),
        forward: m.clone(),
        backward: m,
        lossless: true,
    })
}

/// One-mode phase shifter with independent phases per direction.
pub fn make_phase_shifter(phase_forward: f64, phase_backward: f64) -> Result<DirectionalElement> {
    if !phase_forward.is_finite() || !phase_backward.is_finite() {
        return Err(domain("phase shifter phases must be finite"));
    }
    Ok(DirectionalElement {
        basis: PortBasis::numbered(1),
        forward: CMatrix::from_element(1, 1, Complex64::from_polar(1.0, phase_forward)),
        backward: CMatrix::from_element(1, 1, Complex64::from_polar(1.0, phase_backward)),
        lossless: true,
    })
}

/// One-mode attenuator, equal loss both ways.
pub fn make_attenuator(loss_db: f64) -> Result<DirectionalElement> {
    make_directional_attenuator(loss_db, loss_db)
}

/// One-mode attenuator with a separate loss per direction. Unequal losses
/// give a non-reciprocal element.
pub fn make_directional_attenuator(loss_forward_db: f64, loss_backward_db: f64) -> Result<DirectionalElement> {
    for l in [loss_forward_db, loss_backward_db] {
        if !l.is_finite() || l < 0.0 {
            return Err(domain(format!("attenuator loss {l} dB must be finite and >= 0")));
        }
    }
    let amp = |db: f64| Complex64::new(10f64.powf(-db / 20.0), 0.0);
    Ok(DirectionalElement {
        basis: PortBasis::numbered(1),
        forward: CMatrix::from_element(1, 1, amp(loss_forward_db)),
        backward: CMatrix::from_element(1, 1, amp(loss_backward_db)),
        lossless: loss_forward_db == 0.0 && loss_backward_db == 0.0,
    })
}

/// Direct sum of elements acting on disjoint modes (block diagonal).
pub fn parallel(elements: &[DirectionalElement]) -> Result<DirectionalElement> {
    if elements.is_empty() {
        return Err(structure("parallel composition of zero elements"));
    }
    let n: usize = elements.iter().map(|e| e.port_count()).sum();
    let mut fwd = CMatrix::zeros(n, n);
    let mut bwd = CMatrix::zeros(n, n);
    let mut offset = 0;
    for e in elements {
        let k = e.port_count();
        fwd.view_mut((offset, offset), (k, k)).copy_from(&e.forward);
        bwd.view_mut((offset, offset), (k, k)).copy_from(&e.backward);
        offset += k;
    }
    Ok(DirectionalElement {
        basis: PortBasis::numbered(n),
        forward: fwd,
        backward: bwd,
        lossless: elements.iter().all(|e| e.lossless),
    })
}

/// Chains elements in propagation order (first element is met first by
/// forward light). Forward: `S_n ⋯ S_1`. Backward: `B_1 ⋯ B_n`.
pub fn cascade(elements: &[DirectionalElement]) -> Result<DirectionalElement> {
    let first = elements.first().ok_or_else(|| structure("cascade of zero elements"))?;
    for (i, pair) in elements.windows(2).enumerate() {
        if pair[0].port_count() != pair[1].port_count() {
            return Err(structure(format!(
                "cascade dimension mismatch between element {i} ({} ports) and element {} ({} ports)",
                pair[0].port_count(),
                i + 1,
                pair[1].port_count()
            )));
        }
    }
    let mut fwd = first.forward.clone();
    let mut bwd = first.backward.clone();
    for e in &elements[1..] {
        fwd = &e.forward * fwd;
        bwd *= &e.backward;
    }
    Ok(DirectionalElement {
        basis: first.basis.clone(),
        forward: fwd,
        backward: bwd,
        lossless: elements.iter().all(|e| e.lossless),
    })
}

/// Max absolute entry of `backward − forwardᵀ`.
pub fn reciprocity_defect(element: &DirectionalElement) -> f64 {
    let d = &element.backward - element.forward.transpose();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Mode amplitudes on a basis.
#[derive(Clone, Debug)]
pub struct FieldVector {
    basis: PortBasis,
    amplitudes: CVector,
}

impl FieldVector {
    pub fn new(basis: PortBasis, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != basis.count() {
            return Err(structure(format!(
                "field has {} amplitudes but basis has {} ports",
                amplitudes.len(),
                basis.count()
            )));
        }
        if !amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(domain("field amplitude is not finite"));
        }
        Ok(Self { basis, amplitudes })
    }

    /// Unit amplitude in mode `index`.
    pub fn single(basis: PortBasis, index: usize) -> Result<Self> {
        let n = basis.count();
        if index >= n {
            return Err(structure(format!("port index {index} out of range for {n} ports")));
        }
        let mut a = CVector::zeros(n);
        a[index] = Complex64::new(1.0, 0.0);
        Self::new(basis, a)
    }

    pub fn basis(&self) -> &PortBasis {
        &self.basis
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn power(&self, index: usize) -> f64 {
        self.amplitudes[index].norm_sqr()
    }
}

pub fn transmit(element: &DirectionalElement, input: &FieldVector, direction: Direction) -> Result<FieldVector> {
    if input.basis.count() != element.basis.count() {
        return Err(structure(format!(
            "field basis has {} ports, element has {}",
            input.basis.count(),
            element.basis.count()
        )));
    }
    let out = element.matrix(direction) * &input.amplitudes;
    Ok(FieldVector {
        basis: element.basis.clone(),
        amplitudes: out,
    })
}

/// The 50/50 coupler matrix `(1/√2)·[[1, i], [i, 1]]`.
pub(crate) fn half_coupler_matrix() -> CMatrix {
    let a = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let b = I * FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[a, b, b, a])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn half_coupler_matches_standard_matrix() {
        let cpl = make_coupler(0.5).unwrap();
        assert!(max_diff(cpl.forward(), &half_coupler_matrix()) < 1e-15);
        assert!(unitarity_defect(cpl.forward()) < 1e-15);
        assert!(cpl.is_lossless());
        assert_eq!(reciprocity_defect(&cpl), 0.0);
    }

    #[test]
    fn zero_ratio_coupler_is_identity() {
        let cpl = make_coupler(0.0).unwrap();
        assert!(max_diff(cpl.forward(), &CMatrix::identity(2, 2)) < 1e-15);
    }

    #[test]
    fn coupler_rejects_out_of_range() {
        assert!(make_coupler(-0.1).is_err());
        assert!(make_coupler(1.5).is_err());
    }

    #[test]
    fn coupler_cross_power_equals_ratio() {
        for r in [0.0, 0.1, 0.3, 0.5, 0.9, 1.0] {
            let cpl = make_coupler(r).unwrap();
            assert_abs_diff_eq!(cpl.forward()[(1, 0)].norm_sqr(), r, epsilon = 1e-15);
        }
    }

    #[test]
    fn phase_shifter_reciprocity() {
        let id = make_phase_shifter(0.0, 0.0).unwrap();
        assert!(max_diff(id.forward(), &CMatrix::identity(1, 1)) < 1e-15);

        let nr = make_phase_shifter(PI / 2.0, -PI / 2.0).unwrap();
        assert!(!nr.is_reciprocal());
        assert_abs_diff_eq!(reciprocity_defect(&nr), 2.0, epsilon = 1e-15);

        let r = make_phase_shifter(0.3, 0.3).unwrap();
        assert!(reciprocity_defect(&r) <= 1e-15);
        assert!(make_phase_shifter(f64::NAN, 0.0).is_err());
        assert!(make_phase_shifter(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn attenuator_values() {
        let a0 = make_attenuator(0.0).unwrap();
        assert!(a0.is_lossless());
        let a3 = make_attenuator(3.0).unwrap();
        assert!(!a3.is_lossless());
        assert_abs_diff_eq!(a3.forward()[(0, 0)].norm_sqr(), 10f64.powf(-0.3), epsilon = 1e-15);
        assert_abs_diff_eq!(a3.forward()[(0, 0)].norm_sqr(), 0.501, epsilon = 1e-3);
        let a23 = make_attenuator(2.3).unwrap();
        assert_abs_diff_eq!(a23.backward()[(0, 0)].norm_sqr(), 0.589, epsilon = 1e-3);
        assert!(make_attenuator(-1.0).is_err());
    }

    #[test]
    fn cascade_identity_and_double_coupler() {
        let x = make_coupler(0.3).unwrap();
        let id = DirectionalElement::identity(PortBasis::numbered(2));
        let y = cascade(&[id, x.clone()]).unwrap();
        assert!(max_diff(y.forward(), x.forward()) < 1e-15);

        let h = make_coupler(0.5).unwrap();
        let full = cascade(&[h.clone(), h]).unwrap();
        assert_abs_diff_eq!(full.forward()[(0, 0)].norm_sqr(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(full.forward()[(1, 0)].norm_sqr(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cascade_reports_mismatched_pair() {
        let a = make_coupler(0.5).unwrap();
        let b = make_phase_shifter(0.1, 0.1).unwrap();
        let err = cascade(&[a.clone(), a, b]).unwrap_err().to_string();
        assert!(err.contains("element 1") && err.contains("element 2"), "{err}");
    }

    #[test]
    fn transmit_half_coupler() {
        let h = make_coupler(0.5).unwrap();
        let input = FieldVector::single(PortBasis::numbered(2), 0).unwrap();
        let out = transmit(&h, &input, Direction::Forward).unwrap();
        assert_abs_diff_eq!(out.amplitudes()[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(out.amplitudes()[1].im, FRAC_1_SQRT_2, epsilon = 1e-15);
        let wrong = FieldVector::single(PortBasis::numbered(3), 0).unwrap();
        assert!(transmit(&h, &wrong, Direction::Forward).is_err());
    }

    #[test]
    fn element_rejects_gain_and_nan() {
        let b = PortBasis::numbered(1);
        let gain = CMatrix::from_element(1, 1, c(1.1, 0.0));
        assert!(DirectionalElement::reciprocal(b.clone(), gain).is_err());
        let nan = CMatrix::from_element(1, 1, c(f64::NAN, 0.0));
        assert!(DirectionalElement::reciprocal(b, nan).is_err());
    }

    #[test]
    fn port_basis_rejects_duplicates() {
        assert!(PortBasis::new(["1", "2", "1"]).is_err());
        let b = PortBasis::new(["1", "2", "3", "4"]).unwrap();
        assert_eq!(b.count(), 4);
        assert_eq!(b.index_of("3"), Some(2));
    }

    #[test]
    fn parallel_is_block_diagonal() {
        let a = make_phase_shifter(0.2, 0.4).unwrap();
        let b = make_attenuator(1.0).unwrap();
        let p = parallel(&[a, b]).unwrap();
        assert_eq!(p.port_count(), 2);
        assert_eq!(p.forward()[(0, 1)], c(0.0, 0.0));
        assert!(!p.is_lossless());
        assert!(!p.is_reciprocal());
    }
}
