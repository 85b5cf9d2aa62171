//! Small dense complex helpers shared by the rate, program and driver code.
//!
//! Everything here works on `nalgebra` dynamic matrices of `Complex64`. The
//! matrices involved are tiny (a few tens of rows at most) so clarity wins
//! over allocation tricks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative asymmetry above which [`hermitize`] logs a warning.
pub const ASYMMETRY_WARN: f64 = 1e-8;

/// Shared tolerance constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Equality checks between two routes to the same quantity.
    pub equality: f64,
    /// Constraint satisfaction of reported designs.
    pub feasibility: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            equality: 1e-9,
            feasibility: 1e-6,
        }
    }
}

/// Real inner product `Re tr(A^H B)`.
pub fn inner(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn trace_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// `x^H A x` for Hermitian `A`.
pub fn quad_form(a: &CMat, x: &CVec) -> f64 {
    (x.adjoint() * a * x)[(0, 0)].re
}

/// Largest absolute entry of `A - A^H`, relative to the largest entry of `A`.
pub fn asymmetry(a: &CMat) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let diff = (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    diff / scale
}

/// Hermitian part `(A + A^H) / 2`, warning when the input was noticeably
/// non-Hermitian.
pub fn hermitize(a: &CMat) -> CMat {
    let asym = asymmetry(a);
    if asym > ASYMMETRY_WARN {
        log::warn!("symmetrizing matrix with relative asymmetry {asym:.3e}");
    }
    (a + a.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Ties keep the solver's original column order.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(a: &CMat) -> Self {
        let n = a.nrows();
        if n == 0 {
            return Self {
                values: Vec::new(),
                vectors: CMat::zeros(0, 0),
            };
        }
        let sym = (a + a.adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        // stable sort keeps the lowest column index first among equal values
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { values, vectors }
    }

    pub fn vector(&self, i: usize) -> CVec {
        self.vectors.column(i).into_owned()
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    HermitianEigen::new(a).min()
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped).
pub fn project_psd(a: &CMat) -> CMat {
    project_psd_floor(a, 0.0)
}

/// PSD projection that also drops eigenvalues at or below `floor`.
pub fn project_psd_floor(a: &CMat, floor: f64) -> CMat {
    let n = a.nrows();
    let eig = HermitianEigen::new(a);
    let mut out = CMat::zeros(n, n);
    for (i, &lam) in eig.values.iter().enumerate() {
        if lam > floor.max(0.0) {
            let u = eig.vector(i);
            out += outer(&u).scale(lam);
        }
    }
    (&out + out.adjoint()).scale(0.5)
}

/// Symmetric real matrix eigenvalues, ascending.
pub fn real_symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigen_sorted_descending() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 2.0), c(0.0, -2.0), c(1.0, 0.0)]);
        let eig = HermitianEigen::new(&a);
        assert!((eig.values[0] - 3.0).abs() < 1e-12);
        assert!((eig.values[1] + 1.0).abs() < 1e-12);
        let u = eig.vector(0);
        let au = &a * &u;
        assert!((au - u.scale(3.0)).norm() < 1e-12);
    }

    #[test]
    fn psd_projection_clips_negative_part() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 2.0), c(0.0, -2.0), c(1.0, 0.0)]);
        let p = project_psd(&a);
        let eig = HermitianEigen::new(&p);
        assert!((eig.values[0] - 3.0).abs() < 1e-12);
        assert!(eig.values[1].abs() < 1e-12);
    }

    #[test]
    fn inner_matches_trace() {
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)]);
        let b = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, -0.2), c(0.5, 0.2), c(4.0, 0.0)]);
        let tr = (&a * &b).trace();
        assert!((inner(&a, &b) - tr.re).abs() < 1e-14);
        assert!(tr.im.abs() < 1e-14);
    }

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(-80.0) - 1e-11).abs() < 1e-25);
        assert!((db_to_linear(3.0) - 1.995_262_314_968_879_5).abs() < 1e-12);
    }
}
