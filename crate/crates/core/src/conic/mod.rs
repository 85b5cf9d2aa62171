//! Solver-agnostic conic programs over real scalars and Hermitian matrices.
//!
//! Every variable is laid out on a flat real coordinate vector. A scalar
//! takes one coordinate; an `n x n` Hermitian matrix takes `n^2`: the `n`
//! diagonal entries first, then `(Re X_ij, Im X_ij)` for `i < j` in row-major
//! order. All expressions are affine in these coordinates and real-valued.
//!
//! Three cone families are supported: the nonnegative orthant (through affine
//! inequalities), the exponential cone `{(x, y, z) : y exp(x / y) <= z, y > 0}`
//! and the PSD cone on Hermitian affine expressions, which backends lower
//! through [`hermitian_embedding`].

mod backend;
mod text;

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub use backend::{solve, solve_with, ClarabelBackend, ConicBackend, SolveOptions, SolveStatus, SolverResult};
pub use text::parse_program;

use crate::error::{Error, Result};
use crate::linalg::CMat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScalarVar {
    pub id: usize,
    pub coord: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HermVar {
    pub id: usize,
    pub offset: usize,
    pub dim: usize,
}

impl HermVar {
    /// Coordinate of `Re X_ij` (`i <= j`).
    pub fn re_coord(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j < self.dim);
        if i == j {
            self.offset + i
        } else {
            self.offset + self.dim + 2 * pair_index(self.dim, i, j)
        }
    }

    /// Coordinate of `Im X_ij` (`i < j`).
    pub fn im_coord(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.dim);
        self.offset + self.dim + 2 * pair_index(self.dim, i, j) + 1
    }

    pub fn coords(&self) -> usize {
        self.dim * self.dim
    }
}

// position of (i, j), i < j, in the row-major strict upper triangle
fn pair_index(n: usize, i: usize, j: usize) -> usize {
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Real affine expression `constant + sum coef * x[coord]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: BTreeMap<usize, f64>,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn var(v: ScalarVar) -> Self {
        let mut e = Self::zero();
        e.add_coord(v.coord, 1.0);
        e
    }

    pub fn add_coord(&mut self, coord: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            *self.terms.entry(coord).or_insert(0.0) += coef;
        }
        self
    }

    pub fn add_const(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_var(&mut self, v: ScalarVar, coef: f64) -> &mut Self {
        self.add_coord(v.coord, coef)
    }

    /// Adds `coef * <C, X>` with `<C, X> = Re tr(C^H X)`; `C` is taken as Hermitian.
    pub fn add_inner(&mut self, x: HermVar, c: &CMat, coef: f64) -> &mut Self {
        debug_assert_eq!(c.shape(), (x.dim, x.dim));
        for i in 0..x.dim {
            self.add_coord(x.re_coord(i, i), coef * c[(i, i)].re);
            for j in (i + 1)..x.dim {
                // C_ij and C_ji = conj(C_ij) both contribute
                let cij = (c[(i, j)] + c[(j, i)].conj()) * 0.5;
                self.add_coord(x.re_coord(i, j), 2.0 * coef * cij.re);
                self.add_coord(x.im_coord(i, j), 2.0 * coef * cij.im);
            }
        }
        self
    }

    pub fn add_trace(&mut self, x: HermVar, coef: f64) -> &mut Self {
        for i in 0..x.dim {
            self.add_coord(x.re_coord(i, i), coef);
        }
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, coef: f64) -> &mut Self {
        self.constant += coef * other.constant;
        for (&c, &v) in &other.terms {
            self.add_coord(c, coef * v);
        }
        self
    }

    pub fn scaled(&self, coef: f64) -> Self {
        let mut e = Self::zero();
        e.add_expr(self, coef);
        e
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(&c, &v)| v * x[c]).sum::<f64>()
    }

    fn max_coord(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }
}

/// Hermitian affine expression: upper-triangle entries `(re, im)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HermExpr {
    pub dim: usize,
    entries: Vec<(LinExpr, LinExpr)>,
}

impl HermExpr {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![(LinExpr::zero(), LinExpr::zero()); dim * (dim + 1) / 2],
        }
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j);
        i * self.dim + j - i * (i + 1) / 2
    }

    pub fn from_var(x: HermVar) -> Self {
        let mut e = Self::zeros(x.dim);
        for i in 0..x.dim {
            for j in i..x.dim {
                let s = e.slot(i, j);
                e.entries[s].0.add_coord(x.re_coord(i, j), 1.0);
                if i < j {
                    e.entries[s].1.add_coord(x.im_coord(i, j), 1.0);
                }
            }
        }
        e
    }

    /// Constant Hermitian matrix (upper triangle is read).
    pub fn from_matrix(c: &CMat) -> Result<Self> {
        if c.nrows() != c.ncols() {
            return Err(Error::Dimension {
                context: "Hermitian expression",
                expected: c.nrows(),
                got: c.ncols(),
            });
        }
        let mut e = Self::zeros(c.nrows());
        for i in 0..e.dim {
            for j in i..e.dim {
                let s = e.slot(i, j);
                e.entries[s].0.constant = c[(i, j)].re;
                e.entries[s].1.constant = if i < j { c[(i, j)].im } else { 0.0 };
            }
        }
        Ok(e)
    }

    pub fn add(&mut self, other: &HermExpr, coef: f64) -> Result<&mut Self> {
        if other.dim != self.dim {
            return Err(Error::Dimension {
                context: "Hermitian expression sum",
                expected: self.dim,
                got: other.dim,
            });
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.0.add_expr(&b.0, coef);
            a.1.add_expr(&b.1, coef);
        }
        Ok(self)
    }

    pub fn re(&self, i: usize, j: usize) -> &LinExpr {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        &self.entries[self.slot(a, b)].0
    }

    /// `Im H_ij` for any `(i, j)`; `None` on the diagonal.
    pub fn im(&self, i: usize, j: usize) -> Option<LinExpr> {
        if i == j {
            return None;
        }
        if i < j {
            Some(self.entries[self.slot(i, j)].1.clone())
        } else {
            Some(self.entries[self.slot(j, i)].1.scaled(-1.0))
        }
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        CMat::from_fn(self.dim, self.dim, |i, j| {
            let re = self.re(i, j).eval(x);
            let im = self.im(i, j).map(|e| e.eval(x)).unwrap_or(0.0);
            Complex64::new(re, im)
        })
    }

    fn exprs(&self) -> impl Iterator<Item = &LinExpr> {
        self.entries.iter().flat_map(|(a, b)| [a, b])
    }
}

/// Real symmetric affine expression, upper triangle stored column-major
/// (the layout of scaled-svec PSD cones).
#[derive(Debug, Clone, PartialEq)]
pub struct SymExpr {
    pub dim: usize,
    pub upper: Vec<LinExpr>,
}

impl SymExpr {
    pub fn entry(&self, i: usize, j: usize) -> &LinExpr {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        &self.upper[c * (c + 1) / 2 + r]
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j).eval(x))
    }
}

/// `[[Re H, -Im H], [Im H, Re H]]`. `H` is PSD iff the embedding is, and the
/// embedding's spectrum is that of `H` with every eigenvalue doubled in
/// multiplicity.
pub fn hermitian_embedding(h: &HermExpr) -> SymExpr {
    let n = h.dim;
    let dim = 2 * n;
    let mut upper = Vec::with_capacity(dim * (dim + 1) / 2);
    for c in 0..dim {
        for r in 0..=c {
            let e = match (r < n, c < n) {
                (true, true) => h.re(r, c).clone(),
                (false, false) => h.re(r - n, c - n).clone(),
                // top-right block: -Im H[r, c - n]
                (true, false) => h.im(r, c - n).map(|e| e.scaled(-1.0)).unwrap_or_default(),
                (false, true) => unreachable!("r <= c"),
            };
            upper.push(e);
        }
    }
    SymExpr { dim, upper }
}

/// Numeric version of [`hermitian_embedding`] for a dense matrix.
pub fn embed_matrix(h: &CMat) -> Result<DMatrix<f64>> {
    if h.nrows() != h.ncols() {
        return Err(Error::Dimension {
            context: "Hermitian embedding",
            expected: h.nrows(),
            got: h.ncols(),
        });
    }
    let n = h.nrows();
    Ok(DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

/// `expr (sense) 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub label: String,
    pub expr: LinExpr,
    pub sense: Sense,
}

/// `(x, y, z)` in the exponential cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpConeConstraint {
    pub label: String,
    pub x: LinExpr,
    pub y: LinExpr,
    pub z: LinExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdConstraint {
    pub label: String,
    pub expr: HermExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub sense: ObjectiveSense,
    pub expr: LinExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub(crate) scalars: Vec<(String, ScalarVar)>,
    pub(crate) hermitians: Vec<(String, HermVar)>,
    pub(crate) n_coords: usize,
    pub affine: Vec<AffineConstraint>,
    pub exp_cones: Vec<ExpConeConstraint>,
    pub psd: Vec<PsdConstraint>,
    pub objective: Objective,
}

impl Default for ConicProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        Self {
            scalars: Vec::new(),
            hermitians: Vec::new(),
            n_coords: 0,
            affine: Vec::new(),
            exp_cones: Vec::new(),
            psd: Vec::new(),
            objective: Objective {
                sense: ObjectiveSense::Minimize,
                expr: LinExpr::zero(),
            },
        }
    }

    pub fn scalar(&mut self, name: impl Into<String>) -> ScalarVar {
        let v = ScalarVar {
            id: self.scalars.len() + self.hermitians.len(),
            coord: self.n_coords,
        };
        self.n_coords += 1;
        self.scalars.push((name.into(), v));
        v
    }

    pub fn hermitian(&mut self, name: impl Into<String>, dim: usize) -> HermVar {
        let v = HermVar {
            id: self.scalars.len() + self.hermitians.len(),
            offset: self.n_coords,
            dim,
        };
        self.n_coords += dim * dim;
        self.hermitians.push((name.into(), v));
        v
    }

    pub fn num_coords(&self) -> usize {
        self.n_coords
    }

    pub fn scalar_vars(&self) -> &[(String, ScalarVar)] {
        &self.scalars
    }

    pub fn hermitian_vars(&self) -> &[(String, HermVar)] {
        &self.hermitians
    }

    pub fn constrain(&mut self, label: impl Into<String>, expr: LinExpr, sense: Sense) {
        self.affine.push(AffineConstraint {
            label: label.into(),
            expr,
            sense,
        });
    }

    /// `lhs >= rhs`.
    pub fn constrain_ge(&mut self, label: impl Into<String>, lhs: &LinExpr, rhs: &LinExpr) {
        let mut e = lhs.clone();
        e.add_expr(rhs, -1.0);
        self.constrain(label, e, Sense::Ge);
    }

    pub fn exp_cone(&mut self, label: impl Into<String>, x: LinExpr, y: LinExpr, z: LinExpr) {
        self.exp_cones.push(ExpConeConstraint {
            label: label.into(),
            x,
            y,
            z,
        });
    }

    pub fn psd(&mut self, label: impl Into<String>, expr: HermExpr) {
        self.psd.push(PsdConstraint {
            label: label.into(),
            expr,
        });
    }

    pub fn psd_var(&mut self, x: HermVar) {
        let label = self
            .hermitians
            .iter()
            .find(|(_, v)| *v == x)
            .map(|(n, _)| format!("{n}_psd"))
            .unwrap_or_else(|| "psd".into());
        self.psd(label, HermExpr::from_var(x));
    }

    pub fn set_objective(&mut self, sense: ObjectiveSense, expr: LinExpr) {
        self.objective = Objective { sense, expr };
    }

    /// Checks that every expression refers to declared coordinates.
    pub fn validate(&self) -> Result<()> {
        let check = |e: &LinExpr, what: &str| -> Result<()> {
            match e.max_coord() {
                Some(c) if c >= self.n_coords => Err(Error::Build(format!(
                    "{what} references coordinate {c} but only {} are declared",
                    self.n_coords
                ))),
                _ => Ok(()),
            }
        };
        check(&self.objective.expr, "objective")?;
        for c in &self.affine {
            check(&c.expr, &c.label)?;
        }
        for c in &self.exp_cones {
            for e in [&c.x, &c.y, &c.z] {
                check(e, &c.label)?;
            }
        }
        for c in &self.psd {
            for e in c.expr.exprs() {
                check(e, &c.label)?;
            }
        }
        Ok(())
    }

    /// Violation of every constraint at `x`, by label: affine slack, the
    /// exponential-cone gap in log form, and the most negative eigenvalue of
    /// each PSD block.
    pub fn violations(&self, x: &[f64]) -> Vec<(&str, f64)> {
        let mut out = Vec::with_capacity(self.affine.len() + self.exp_cones.len() + self.psd.len());
        for c in &self.affine {
            let v = c.expr.eval(x);
            let viol = match c.sense {
                Sense::Ge => -v,
                Sense::Le => v,
                Sense::Eq => v.abs(),
            };
            out.push((c.label.as_str(), viol.max(0.0)));
        }
        for c in &self.exp_cones {
            out.push((c.label.as_str(), exp_cone_violation(c.x.eval(x), c.y.eval(x), c.z.eval(x))));
        }
        for c in &self.psd {
            let m = c.expr.eval(x);
            out.push((c.label.as_str(), (-crate::linalg::min_eigenvalue(&m)).max(0.0)));
        }
        out
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.violations(x).into_iter().map(|(_, v)| v).fold(0.0, f64::max)
    }

    /// Debug dump in the line-oriented text format read by [`parse_program`].
    pub fn to_text(&self) -> String {
        text::write_program(self)
    }
}

fn exp_cone_violation(x: f64, y: f64, z: f64) -> f64 {
    if y > 0.0 && z > 0.0 {
        (x - y * (z / y).ln()).max(0.0)
    } else if y.abs() <= 1e-300 {
        // closure: x <= 0, z >= 0
        x.max(0.0).max(-z)
    } else {
        (-y).max(0.0).max(-z).max(x.max(0.0))
    }
}

/// Appends `t <= log2(a)` as `(t ln 2, 1, a)` in the exponential cone.
pub fn add_log2_lower_bound(prog: &mut ConicProgram, label: impl Into<String>, a: &LinExpr, t: &LinExpr) {
    prog.exp_cone(label, t.scaled(LN_2), LinExpr::constant(1.0), a.clone());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{real_symmetric_eigenvalues, HermitianEigen};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hermitian_coordinates_round_trip() {
        let mut p = ConicProgram::new();
        let _t = p.scalar("t");
        let x = p.hermitian("X", 3);
        let m = CMat::from_row_slice(
            3,
            3,
            &[c(1.0, 0.0), c(2.0, 0.5), c(-1.0, 1.0), c(2.0, -0.5), c(3.0, 0.0), c(0.2, -0.3), c(-1.0, -1.0), c(0.2, 0.3), c(4.0, 0.0)],
        );
        let mut xv = vec![0.0; p.num_coords()];
        for i in 0..3 {
            xv[x.re_coord(i, i)] = m[(i, i)].re;
            for j in (i + 1)..3 {
                xv[x.re_coord(i, j)] = m[(i, j)].re;
                xv[x.im_coord(i, j)] = m[(i, j)].im;
            }
        }
        let back = HermExpr::from_var(x).eval(&xv);
        assert!((back - &m).norm() < 1e-15);

        // <C, X> through the expression equals Re tr(C^H X)
        let cm = CMat::from_row_slice(3, 3, &[c(0.5, 0.0), c(1.0, 1.0), c(0.0, 2.0), c(1.0, -1.0), c(-2.0, 0.0), c(0.3, 0.0), c(0.0, -2.0), c(0.3, 0.0), c(1.0, 0.0)]);
        let mut e = LinExpr::zero();
        e.add_inner(x, &cm, 1.0);
        assert!((e.eval(&xv) - crate::linalg::inner(&cm, &m)).abs() < 1e-12);
    }

    #[test]
    fn identity_embeds_to_identity() {
        let e = embed_matrix(&CMat::identity(2, 2)).unwrap();
        assert_eq!(e, DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn embedding_of_imaginary_offdiagonal() {
        let h = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)]);
        let eig = real_symmetric_eigenvalues(&embed_matrix(&h).unwrap());
        let expected = [-1.0, -1.0, 1.0, 1.0];
        for (a, b) in eig.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn symbolic_embedding_matches_numeric() {
        let mut p = ConicProgram::new();
        let x = p.hermitian("X", 3);
        let xv: Vec<f64> = (0..p.num_coords()).map(|i| (i as f64 * 0.37).sin()).collect();
        let h = HermExpr::from_var(x);
        let sym = hermitian_embedding(&h).eval(&xv);
        let num = embed_matrix(&h.eval(&xv)).unwrap();
        assert!((sym - num).norm() < 1e-15);
        let hm = h.eval(&xv);
        let lo = real_symmetric_eigenvalues(&embed_matrix(&hm).unwrap())[0];
        assert!((lo - HermitianEigen::new(&hm).min()).abs() < 1e-10);
    }

    #[test]
    fn non_square_rejected() {
        assert!(embed_matrix(&CMat::zeros(2, 3)).is_err());
        assert!(HermExpr::from_matrix(&CMat::zeros(3, 2)).is_err());
    }

    #[test]
    fn validate_catches_foreign_coordinates() {
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        let mut e = LinExpr::var(t);
        e.add_coord(5, 1.0);
        p.constrain("bad", e, Sense::Ge);
        assert!(p.validate().is_err());
    }
}
