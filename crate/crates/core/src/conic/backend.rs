use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, ExponentialConeT, IPSolver, NonnegativeConeT, PSDTriangleConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{hermitian_embedding, ConicProgram, HermVar, LinExpr, ObjectiveSense, ScalarVar, Sense};
use crate::error::{Error, Result};
use crate::linalg::CMat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Requested accuracy. Duality-gap tolerances are set to `tol * 1e-2`
    /// and feasibility to `tol * 1e-3`, so residuals land well inside `tol`.
    pub tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 200,
            verbose: false,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub status: SolveStatus,
    /// Objective in the program's own sense, constant included.
    pub objective: f64,
    /// Flat coordinate vector.
    pub x: Vec<f64>,
    pub values: BTreeMap<String, f64>,
    pub matrices: BTreeMap<String, CMat>,
    /// Largest constraint violation recomputed from `x`.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: u32,
    pub solve_time: f64,
}

impl SolverResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn scalar(&self, v: ScalarVar) -> f64 {
        self.x[v.coord]
    }

    pub fn matrix(&self, v: HermVar) -> CMat {
        let n = v.dim;
        CMat::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(self.x[v.re_coord(i, i)], 0.0)
            } else if i < j {
                Complex64::new(self.x[v.re_coord(i, j)], self.x[v.im_coord(i, j)])
            } else {
                Complex64::new(self.x[v.re_coord(j, i)], -self.x[v.im_coord(j, i)])
            }
        })
    }

    pub fn eval(&self, e: &LinExpr) -> f64 {
        e.eval(&self.x)
    }
}

pub trait ConicBackend {
    fn name(&self) -> &'static str;
    fn solve(&self, prog: &ConicProgram, opts: &SolveOptions) -> Result<SolverResult>;
}

/// Interior-point backend on Clarabel. Single-threaded so repeated solves
/// are bit-for-bit reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

struct Assembly {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl Assembly {
    // appends the row s = scale * e(x), i.e. A = -scale * a, b = scale * c
    fn push(&mut self, e: &LinExpr, scale: f64) {
        let r = self.b.len();
        for (&c, &v) in &e.terms {
            let val = -scale * v;
            if val != 0.0 {
                self.rows.push(r);
                self.cols.push(c);
                self.vals.push(val);
            }
        }
        self.b.push(scale * e.constant);
    }
}

fn assemble(prog: &ConicProgram) -> Assembly {
    let mut asm = Assembly {
        rows: Vec::new(),
        cols: Vec::new(),
        vals: Vec::new(),
        b: Vec::new(),
        cones: Vec::new(),
    };
    let eqs: Vec<_> = prog.affine.iter().filter(|c| c.sense == Sense::Eq).collect();
    if !eqs.is_empty() {
        for c in &eqs {
            asm.push(&c.expr, 1.0);
        }
        asm.cones.push(ZeroConeT(eqs.len()));
    }
    let ineqs: Vec<_> = prog.affine.iter().filter(|c| c.sense != Sense::Eq).collect();
    if !ineqs.is_empty() {
        for c in &ineqs {
            asm.push(&c.expr, if c.sense == Sense::Ge { 1.0 } else { -1.0 });
        }
        asm.cones.push(NonnegativeConeT(ineqs.len()));
    }
    for c in &prog.exp_cones {
        asm.push(&c.x, 1.0);
        asm.push(&c.y, 1.0);
        asm.push(&c.z, 1.0);
        asm.cones.push(ExponentialConeT());
    }
    for c in &prog.psd {
        let sym = hermitian_embedding(&c.expr);
        for col in 0..sym.dim {
            for row in 0..=col {
                let scale = if row == col { 1.0 } else { SQRT_2 };
                asm.push(sym.entry(row, col), scale);
            }
        }
        asm.cones.push(PSDTriangleConeT(sym.dim));
    }
    asm
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, prog: &ConicProgram, opts: &SolveOptions) -> Result<SolverResult> {
        prog.validate()?;
        if !(opts.tol > 0.0) {
            return Err(Error::Config(format!("solver tolerance must be positive, got {}", opts.tol)));
        }
        let n = prog.num_coords();
        let asm = assemble(prog);
        let m = asm.b.len();
        let a = CscMatrix::new_from_triplets(m, n, asm.rows, asm.cols, asm.vals);
        let p = CscMatrix::zeros((n, n));
        let sign = match prog.objective.sense {
            ObjectiveSense::Minimize => 1.0,
            ObjectiveSense::Maximize => -1.0,
        };
        // unit-scale objective; a large penalty weight otherwise stalls the iterations
        let q_max = prog.objective.expr.terms.values().fold(0.0f64, |a, v| a.max(v.abs()));
        let q_scale = if q_max > 0.0 { 1.0 / q_max } else { 1.0 };
        let mut q = vec![0.0; n];
        for (&c, &v) in &prog.objective.expr.terms {
            q[c] = sign * v * q_scale;
        }
        let gap = (opts.tol * 1e-2).max(1e-12);
        let settings = DefaultSettings {
            tol_gap_abs: gap,
            tol_gap_rel: gap,
            tol_feas: (opts.tol * 1e-3).max(1e-12),
            max_iter: opts.max_iter,
            verbose: opts.verbose,
            max_threads: 1,
            // supernodal factorization: the PSD blocks make the KKT system dense
            direct_solve_method: "faer".into(),
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &asm.b, &asm.cones, settings)
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            _ => SolveStatus::NumericalLimit,
        };
        let x = if sol.x.iter().all(|v| v.is_finite()) { sol.x.clone() } else { vec![f64::NAN; n] };
        let objective = prog.objective.expr.eval(&x);
        let values = prog.scalar_vars().iter().map(|(name, v)| (name.clone(), x[v.coord])).collect();
        let mut result = SolverResult {
            status,
            objective,
            x,
            values,
            matrices: BTreeMap::new(),
            primal_residual: 0.0,
            dual_residual: sol.r_dual,
            iterations: sol.iterations,
            solve_time: sol.solve_time,
        };
        result.matrices = prog.hermitian_vars().iter().map(|(name, v)| (name.clone(), result.matrix(*v))).collect();
        result.primal_residual = if result.x.iter().all(|v| v.is_finite()) { prog.max_violation(&result.x) } else { f64::INFINITY };
        Ok(result)
    }
}

pub fn solve_with(backend: &dyn ConicBackend, prog: &ConicProgram, opts: &SolveOptions) -> Result<SolverResult> {
    backend.solve(prog, opts)
}

/// Solves with the default backend at accuracy `tol`.
pub fn solve(prog: &ConicProgram, tol: f64) -> Result<SolverResult> {
    ClarabelBackend.solve(prog, &SolveOptions::with_tol(tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{add_log2_lower_bound, parse_program, HermExpr};
    use crate::linalg::{min_eigenvalue, CMat};

    #[test]
    fn trace_minimum_over_shifted_psd_cone() {
        let mut p = ConicProgram::new();
        let x = p.hermitian("X", 3);
        let mut shifted = HermExpr::from_var(x);
        shifted.add(&HermExpr::from_matrix(&CMat::identity(3, 3)).unwrap(), -1.0).unwrap();
        p.psd("shift", shifted);
        let mut tr = LinExpr::zero();
        tr.add_trace(x, 1.0);
        p.set_objective(ObjectiveSense::Minimize, tr);
        let r = solve(&p, 1e-8).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-6, "{}", r.objective);
        assert!(r.primal_residual < 1e-7);
        assert!((r.matrices["X"].clone() - CMat::identity(3, 3)).norm() < 1e-5);
    }

    #[test]
    fn log2_epigraph_reaches_three() {
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        let a = p.scalar("a");
        add_log2_lower_bound(&mut p, "log", &LinExpr::var(a), &LinExpr::var(t));
        let mut cap = LinExpr::constant(8.0);
        cap.add_var(a, -1.0);
        p.constrain("cap", cap, Sense::Ge);
        let mut floor = LinExpr::var(a);
        floor.add_const(-1.0);
        p.constrain("floor", floor, Sense::Ge);
        p.set_objective(ObjectiveSense::Maximize, LinExpr::var(t));
        let r = solve(&p, 1e-8).unwrap();
        assert!(r.is_optimal());
        assert!((r.values["t"] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn log2_of_fixed_arguments() {
        for (a, want) in [(2.0, 1.0), (1.0, 0.0), (10.0, 10f64.log2())] {
            let mut p = ConicProgram::new();
            let t = p.scalar("t");
            add_log2_lower_bound(&mut p, "log", &LinExpr::constant(a), &LinExpr::var(t));
            p.set_objective(ObjectiveSense::Maximize, LinExpr::var(t));
            let r = solve(&p, 1e-8).unwrap();
            assert!(r.is_optimal());
            assert!((r.objective - want).abs() < 1e-6, "a = {a}: {}", r.objective);
        }
    }

    // min |x1| + |x2| s.t. x1 + 2 x2 = 4, x1 - x2 <= 1: vertices enumerated by hand
    #[test]
    fn l1_lp_hits_vertex() {
        let mut p = ConicProgram::new();
        let x1 = p.scalar("x1");
        let x2 = p.scalar("x2");
        let s1 = p.scalar("s1");
        let s2 = p.scalar("s2");
        for (x, s) in [(x1, s1), (x2, s2)] {
            let mut up = LinExpr::var(s);
            up.add_var(x, -1.0);
            p.constrain("abs+", up, Sense::Ge);
            let mut dn = LinExpr::var(s);
            dn.add_var(x, 1.0);
            p.constrain("abs-", dn, Sense::Ge);
        }
        let mut eq = LinExpr::constant(-4.0);
        eq.add_var(x1, 1.0).add_var(x2, 2.0);
        p.constrain("eq", eq, Sense::Eq);
        let mut le = LinExpr::constant(-1.0);
        le.add_var(x1, 1.0).add_var(x2, -1.0);
        p.constrain("le", le, Sense::Le);
        let mut obj = LinExpr::var(s1);
        obj.add_var(s2, 1.0);
        p.set_objective(ObjectiveSense::Minimize, obj);
        // on x1 + 2 x2 = 4 the l1 norm is minimized at (0, 2), value 2
        let r = solve(&p, 1e-10).unwrap();
        assert!(r.is_optimal());
        assert!((r.objective - 2.0).abs() < 1e-8);
        assert!(r.values["x1"].abs() < 1e-8 && (r.values["x2"] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn infeasible_and_unbounded_are_reported() {
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        let mut a = LinExpr::var(t);
        a.add_const(-1.0);
        p.constrain("ge1", a, Sense::Ge);
        let mut b = LinExpr::var(t);
        b.add_const(1.0);
        p.constrain("le-1", b, Sense::Le);
        assert_eq!(solve(&p, 1e-6).unwrap().status, SolveStatus::Infeasible);

        let mut q = ConicProgram::new();
        let t = q.scalar("t");
        q.set_objective(ObjectiveSense::Maximize, LinExpr::var(t));
        assert_eq!(solve(&q, 1e-6).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn complex_psd_constraint_is_respected() {
        // max Re X_01 + Im X_01 over X psd with unit diagonal: optimum sqrt(2)
        let mut p = ConicProgram::new();
        let x = p.hermitian("X", 2);
        p.psd_var(x);
        for i in 0..2 {
            let mut d = LinExpr::constant(-1.0);
            d.add_coord(x.re_coord(i, i), 1.0);
            p.constrain(format!("diag{i}"), d, Sense::Eq);
        }
        let mut obj = LinExpr::zero();
        obj.add_coord(x.re_coord(0, 1), 1.0).add_coord(x.im_coord(0, 1), 1.0);
        p.set_objective(ObjectiveSense::Maximize, obj);
        let r = solve(&p, 1e-8).unwrap();
        assert!(r.is_optimal());
        assert!((r.objective - SQRT_2).abs() < 1e-6);
        assert!(min_eigenvalue(&r.matrix(x)) > -1e-7);
    }

    #[test]
    fn round_trip_preserves_solution() {
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        let x = p.hermitian("X", 2);
        p.psd_var(x);
        let mut pw = LinExpr::constant(1.0);
        pw.add_trace(x, -1.0);
        p.constrain("power", pw, Sense::Ge);
        let c = CMat::from_row_slice(2, 2, &[Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.5), Complex64::new(0.5, -0.5), Complex64::new(1.0, 0.0)]);
        let mut a = LinExpr::constant(1.0);
        a.add_inner(x, &c, 1.0);
        add_log2_lower_bound(&mut p, "rate", &a, &LinExpr::var(t));
        p.set_objective(ObjectiveSense::Maximize, LinExpr::var(t));
        let r1 = solve(&p, 1e-6).unwrap();
        let r2 = solve(&parse_program(&p.to_text()).unwrap(), 1e-6).unwrap();
        assert_eq!(r1.status, r2.status);
        assert!((r1.objective - r2.objective).abs() < 1e-9);
        // log2(1 + lambda_max(C))
        let lam = crate::linalg::HermitianEigen::new(&c).max();
        assert!((r1.objective - (1.0 + lam).log2()).abs() < 1e-5);
        assert!(r1.primal_residual <= 1e-5);
    }

    #[test]
    fn repeated_solves_are_identical() {
        let mut p = ConicProgram::new();
        let x = p.hermitian("X", 3);
        p.psd_var(x);
        let mut pw = LinExpr::constant(2.0);
        pw.add_trace(x, -1.0);
        p.constrain("power", pw, Sense::Ge);
        let c = CMat::from_fn(3, 3, |i, j| Complex64::new((i + j) as f64, i as f64 - j as f64));
        let mut obj = LinExpr::zero();
        obj.add_inner(x, &c, 1.0);
        p.set_objective(ObjectiveSense::Maximize, obj);
        let a = solve(&p, 1e-6).unwrap();
        let b = solve(&p, 1e-6).unwrap();
        assert_eq!(a.x, b.x);
    }
}

