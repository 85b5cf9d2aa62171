//! The two convex programs of the alternating loop and the helpers that map
//! their lifted solutions back to vectors.
//!
//! Both programs keep the concave side of every secrecy constraint exact
//! through exponential cones and replace the three terms that appear with a
//! negative sign by their first-order upper bounds, so each program is a
//! conservative inner approximation of the true constraint set around the
//! previous iterate.

mod reflection;
mod taylor;
mod transmit;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use reflection::{build_v_subproblem, penalty_value, ReflectionProgram};
pub use taylor::{taylor_of_log_term, Block, MatrixSlot, TaylorExpansion};
pub use transmit::{build_w_subproblem, TransmitOptions, TransmitProgram};

use crate::linalg::{trace_re, CMat, CVec, HermitianEigen};

/// Relative gap between the top two eigenvalues below which extraction logs
/// a degeneracy warning.
const DEGENERACY_GAP: f64 = 1e-9;

/// Penalty weight and the linearization point of the spectral norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyState {
    /// `f64::INFINITY` switches the penalty off.
    pub rho: f64,
    pub lambda_max_vec: CVec,
    pub spectral_norm: f64,
    /// `||V||_* - ||V||_2` at the reference matrix.
    pub residual: f64,
}

impl PenaltyState {
    pub fn at(v_ref: &CMat, rho: f64) -> Self {
        let eig = HermitianEigen::new(v_ref);
        let spectral_norm = eig.max();
        let nuclear: f64 = eig.values.iter().map(|x| x.abs()).sum();
        let mut lambda_max_vec = if v_ref.nrows() > 0 { eig.vector(0) } else { CVec::zeros(0) };
        let norm = lambda_max_vec.norm();
        if norm > 0.0 {
            lambda_max_vec.unscale_mut(norm);
        }
        Self {
            rho,
            lambda_max_vec,
            spectral_norm,
            residual: nuclear - spectral_norm,
        }
    }

    /// `1 / (2 rho)`.
    pub fn weight(&self) -> f64 {
        if self.rho.is_infinite() {
            0.0
        } else {
            0.5 / self.rho
        }
    }
}

/// Principal component `sqrt(lambda_1) u_1` of a PSD matrix and the share of
/// its trace outside that component.
pub fn extract_rank_one(x: &CMat, tol: f64) -> (CVec, f64) {
    let n = x.nrows();
    let tr = trace_re(x);
    if !(tr > 0.0) {
        return (CVec::zeros(n), 0.0);
    }
    let eig = HermitianEigen::new(x);
    let l1 = eig.max().max(0.0);
    if n > 1 && (eig.values[0] - eig.values[1]).abs() <= DEGENERACY_GAP * l1.max(f64::MIN_POSITIVE) {
        log::warn!("top eigenvalue of a {n}x{n} matrix is degenerate; taking the first eigenvector");
    }
    let ratio = ((tr - l1) / tr).max(0.0);
    if ratio > tol {
        log::debug!("rank-one residual {ratio:.3e} exceeds {tol:.1e}");
    }
    (eig.vector(0).scale(l1.sqrt()), ratio)
}

/// Unit-modulus projection of the first `N` entries after rotating the
/// global phase so the last entry is real and positive.
pub fn project_unit_modulus(v_raw: &CVec) -> CVec {
    let n = v_raw.len();
    if n == 0 {
        return v_raw.clone();
    }
    let last = v_raw[n - 1];
    let rot = if last.norm() > 0.0 { last.conj() / last.norm() } else { Complex64::new(1.0, 0.0) };
    CVec::from_fn(n, |i, _| {
        if i == n - 1 {
            return Complex64::new(1.0, 0.0);
        }
        let z = v_raw[i] * rot;
        if z.norm() > 0.0 {
            z / z.norm()
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{assemble_channels, ChannelRealization, FadingConfig, Receiver, SystemGeometry};
    use crate::conic::{solve, LinExpr, Sense};
    use crate::linalg::{dbm_to_watts, outer, HermitianEigen};
    use crate::rates::{drop_insecure_streams, tighten_rates, transmit_pairing, LiftedPoint, StreamLayout, TransmitDesign};
    use std::f64::consts::{FRAC_PI_4, TAU};

    fn geometry(k: usize, n: usize) -> SystemGeometry {
        SystemGeometry {
            ap_pos: [0.0, 0.0],
            irs_pos: [50.0, 0.0],
            eve_pos: [45.0, 0.0],
            lu_pos: vec![[0.0, 20.0], [50.0, 5.0]][..k].to_vec(),
            antennas: 2,
            elements: n,
        }
    }

    fn instance(k: usize, n: usize, seed: u64) -> ChannelRealization {
        assemble_channels(&geometry(k, n), &FadingConfig { seed, ..Default::default() }).unwrap()
    }

    // equal power on every stream, MRT directions, small AN, tightened rates
    fn start(ch: &ChannelRealization, p: f64, layout: &StreamLayout) -> LiftedPoint {
        let m = ch.antennas();
        let mut d = TransmitDesign::zeros(m, ch.elements(), ch.users());
        let share = 0.9 * p / layout.active_streams() as f64;
        let dir = |rx| {
            let h = crate::channels::effective_row(ch.stacked(rx), &d.v).unwrap().conjugate();
            let n = h.norm();
            h.unscale(n)
        };
        if layout.common {
            d.w_c = dir(Receiver::User(0)).scale(share.sqrt());
        }
        for k in 0..ch.users() {
            if layout.private[k] {
                d.w[k] = dir(Receiver::User(k)).scale(share.sqrt());
            }
        }
        d.z = CMat::identity(m, m).scale(0.05 * p / m as f64);
        let mut point = LiftedPoint::from_design(&d);
        drop_insecure_streams(&mut point, ch, 0.0);
        tighten_rates(&mut point, ch, layout, 1e-9);
        point
    }

    #[test]
    fn rank_one_extraction_examples() {
        let x = CVec::from_vec(vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.3)]);
        let (v, r) = extract_rank_one(&outer(&x), 1e-6);
        assert!(r < 1e-12);
        // equal up to a global phase
        let phase = (v.adjoint() * &x)[(0, 0)];
        assert!((v.scale(1.0) * (phase / phase.norm()) - &x).norm() < 1e-10);
        let (_, r) = extract_rank_one(&CMat::identity(2, 2), 1e-6);
        assert!((r - 0.5).abs() < 1e-12);
        let (v, r) = extract_rank_one(&CMat::zeros(3, 3), 1e-6);
        assert_eq!(r, 0.0);
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn unit_modulus_projection_examples() {
        let raw = CVec::from_vec(vec![Complex64::from_polar(2.0, FRAC_PI_4), Complex64::new(3.0, 0.0)]);
        let v = project_unit_modulus(&raw);
        assert!((v[0] - Complex64::from_polar(1.0, FRAC_PI_4)).norm() < 1e-15);
        assert_eq!(v[1], Complex64::new(1.0, 0.0));
        assert_eq!(project_unit_modulus(&v), v);
        let mut rng = crate::channels::stream_rng(5, 0);
        use rand::Rng;
        let raw = CVec::from_fn(6, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let v = project_unit_modulus(&raw);
        assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert_eq!(v[5], Complex64::new(1.0, 0.0));
        let zeros = project_unit_modulus(&CVec::zeros(3));
        assert!(zeros.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn zero_budget_gives_zero_rate() {
        let ch = instance(2, 4, 1);
        let layout = StreamLayout::rsma(2);
        let prev = LiftedPoint::from_design(&TransmitDesign::zeros(2, 4, 2));
        let prog = build_w_subproblem(&ch, &prev.v, &prev, 0.0, &layout, TransmitOptions::default()).unwrap();
        let res = solve(&prog.program, 1e-6).unwrap();
        assert!(res.is_optimal());
        let next = prog.extract(&res, &prev);
        assert!(next.t.abs() < 1e-6);
        assert!(next.total_power().abs() < 1e-9);
    }

    #[test]
    fn single_user_without_eve_reaches_mrt_rate() {
        let ch = instance(1, 4, 2).with_silent_eve();
        let p = dbm_to_watts(20.0);
        let layout = StreamLayout::rsma(1);
        let prev = start(&ch, p, &layout);
        let opts = TransmitOptions { force_zero_noise: true };
        let prog = build_w_subproblem(&ch, &prev.v, &prev, p, &layout, opts).unwrap();
        let res = solve(&prog.program, 1e-6).unwrap();
        assert!(res.is_optimal());
        let a = transmit_pairing(&ch, Receiver::User(0), &prev.v);
        let want = (1.0 + p * HermitianEigen::new(&a).max() / ch.sigma2[0]).log2();
        assert!((res.objective - want).abs() < 1e-4, "{} vs {want}", res.objective);
    }

    #[test]
    fn previous_iterate_is_feasible_for_both_programs() {
        let p = dbm_to_watts(20.0);
        for seed in 0..3 {
            let ch = instance(2, 4, 10 + seed);
            for layout in [StreamLayout::rsma(2), StreamLayout::mulp(2), StreamLayout::noma(2, 0)] {
                let prev = start(&ch, p, &layout);
                let w = build_w_subproblem(&ch, &prev.v, &prev, p, &layout, TransmitOptions::default()).unwrap();
                let x = w.coordinates(&prev);
                let viol = w.program.max_violation(&x);
                assert!(viol <= 1e-8, "transmit {layout:?}: {:?}", w.program.violations(&x));
                let pen = PenaltyState::at(&prev.v, 5e-4);
                let r = build_v_subproblem(&ch, &prev, &pen, &layout).unwrap();
                let viol = r.program.max_violation(&r.coordinates(&prev));
                assert!(viol <= 1e-8, "reflection {layout:?}: {viol}");
            }
        }
    }

    #[test]
    fn transmit_step_never_loses_objective() {
        let p = dbm_to_watts(20.0);
        let ch = instance(2, 4, 21);
        let layout = StreamLayout::rsma(2);
        let prev = start(&ch, p, &layout);
        let w = build_w_subproblem(&ch, &prev.v, &prev, p, &layout, TransmitOptions::default()).unwrap();
        let res = solve(&w.program, 1e-6).unwrap();
        assert!(res.is_optimal());
        assert!(res.objective >= prev.t - 1e-6);
        // the linearized constraints are conservative, so the achieved point
        // supports at least the program's rates
        let mut next = w.extract(&res, &prev);
        let t_prog = next.t;
        tighten_rates(&mut next, &ch, &layout, 0.0);
        assert!(next.t >= t_prog - 1e-5);
    }

    #[test]
    fn restricted_grid_supports_sca_objective() {
        let p = dbm_to_watts(20.0);
        let ch = instance(2, 4, 7);
        let layout = StreamLayout::rsma(2);
        let prev = start(&ch, p, &layout);
        let w = build_w_subproblem(&ch, &prev.v, &prev, p, &layout, TransmitOptions::default()).unwrap();
        let res = solve(&w.program, 1e-6).unwrap();
        let sol = w.extract(&res, &prev);
        // scale the common and private covariances independently; (1, 1) is the SCA solution
        let mut best = f64::NEG_INFINITY;
        for i in 0..=40 {
            for j in 0..=40 {
                let (a, b) = (i as f64 / 40.0, j as f64 / 40.0);
                let mut q = sol.clone();
                q.w_common = sol.w_common.scale(a);
                q.w_private = sol.w_private.iter().map(|m| m.scale(b)).collect();
                tighten_rates(&mut q, &ch, &layout, 0.0);
                best = best.max(q.t);
            }
        }
        assert!(best >= res.objective - 1e-3, "grid {best} vs sca {}", res.objective);
    }

    #[test]
    fn penalty_vanishes_at_rank_one_reference() {
        let v = CVec::from_fn(5, |i, _| Complex64::from_polar(1.0, 0.3 * i as f64));
        let vr = outer(&v);
        let pen = PenaltyState::at(&vr, 5e-4);
        assert!(penalty_value(&vr, &pen, &vr).abs() < 1e-12);
        assert!(pen.residual.abs() < 1e-12);
        assert!((pen.lambda_max_vec.norm() - 1.0).abs() < 1e-12);
        // and is non-negative elsewhere on the unit-diagonal PSD set
        let other = outer(&CVec::from_fn(5, |i, _| Complex64::from_polar(1.0, -0.7 * i as f64)));
        assert!(penalty_value(&other, &pen, &vr) > 0.0);
    }

    fn pin_reflection(prog: &mut crate::conic::ConicProgram, v: &CMat) {
        let var = prog.hermitian_vars()[0].1;
        for i in 0..var.dim {
            for j in (i + 1)..var.dim {
                let mut re = LinExpr::constant(-v[(i, j)].re);
                re.add_coord(var.re_coord(i, j), 1.0);
                prog.constrain("pin_re", re, Sense::Eq);
                let mut im = LinExpr::constant(-v[(i, j)].im);
                im.add_coord(var.im_coord(i, j), 1.0);
                prog.constrain("pin_im", im, Sense::Eq);
            }
        }
    }

    #[test]
    fn unpenalized_single_element_matches_phase_grid() {
        let p = dbm_to_watts(20.0);
        let ch = instance(2, 1, 3);
        let layout = StreamLayout::rsma(2);
        let prev = start(&ch, p, &layout);
        let pen = PenaltyState::at(&prev.v, f64::INFINITY);
        let r = build_v_subproblem(&ch, &prev, &pen, &layout).unwrap();
        let relaxed = solve(&r.program, 1e-7).unwrap();
        assert!(relaxed.is_optimal());
        let mut best = f64::INFINITY;
        for i in 0..360 {
            let v = CVec::from_vec(vec![Complex64::from_polar(1.0, TAU * i as f64 / 360.0), Complex64::new(1.0, 0.0)]);
            let mut pinned = r.program.clone();
            pin_reflection(&mut pinned, &outer(&v));
            let res = solve(&pinned, 1e-7).unwrap();
            if res.is_optimal() {
                best = best.min(res.objective);
            }
        }
        assert!((relaxed.objective - best).abs() < 1e-3, "relaxed {} vs grid {best}", relaxed.objective);
    }

    #[test]
    fn zero_rates_give_bounded_residual() {
        let p = dbm_to_watts(20.0);
        let ch = instance(2, 4, 5);
        let layout = StreamLayout::rsma(2);
        let mut prev = start(&ch, p, &layout);
        prev.r_c = vec![0.0; 2];
        prev.r_p = vec![0.0; 2];
        prev.t = 0.0;
        let pen = PenaltyState::at(&prev.v, 5e-4);
        let r = build_v_subproblem(&ch, &prev, &pen, &layout).unwrap();
        let res = solve(&r.program, 1e-6).unwrap();
        assert!(res.is_optimal());
        let next = r.extract(&res, &prev);
        let h_norm = (0..2)
            .map(|k| ch.stacked(Receiver::User(k)).norm_squared())
            .fold(0.0, f64::max);
        let bound = (1.0 + p * h_norm * (ch.elements() + 1) as f64 / ch.sigma2[0]).log2();
        assert!(next.t.is_finite() && next.t <= bound);
    }
}
