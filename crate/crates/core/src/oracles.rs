//! Independent reference computations: closed-form conic programs, the
//! embedding eigenvalue check, finite-difference and dominance checks of the
//! Taylor bounds, and an exhaustive grid for the single-antenna,
//! single-element, single-user case. Shared by the `check` suite, the
//! examples and the tests.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channels::{effective_row, stream_rng, ChannelRealization, Receiver};
use crate::conic::{add_log2_lower_bound, embed_matrix, solve, ConicProgram, HermExpr, LinExpr, ObjectiveSense, Sense};
use crate::error::{Error, Result};
use crate::linalg::{inner, log2_1p, outer, real_symmetric_eigenvalues, trace_re, CMat, CVec, HermitianEigen};
use crate::rates::{eval_log_term, LiftedPoint, LogTerm};
use crate::subproblems::{taylor_of_log_term, Block, MatrixSlot};

/// Random PSD matrix with the given trace.
pub fn random_psd(n: usize, trace: f64, rng: &mut ChaCha8Rng) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let m = &a * a.adjoint();
    m.scale(trace / trace_re(&m))
}

pub fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0));
    (&a + a.adjoint()).scale(0.5)
}

/// Random lifted point inside the power ball with a unit-diagonal, mostly
/// rank-one reflection matrix. Rates and `t` are left at zero.
pub fn random_lifted_point(ch: &ChannelRealization, p_max: f64, rng: &mut ChaCha8Rng) -> LiftedPoint {
    let m = ch.antennas();
    let n1 = ch.elements() + 1;
    let share = rng.random::<f64>();
    let phases = CVec::from_fn(n1, |i, _| {
        if i + 1 == n1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
        }
    });
    let mut v = outer(&phases).scale(0.9) + CMat::identity(n1, n1).scale(0.1);
    for i in 0..n1 {
        v[(i, i)] = Complex64::new(1.0, 0.0);
    }
    LiftedPoint {
        w_common: random_psd(m, p_max * share * 0.5, rng),
        w_private: (0..ch.users()).map(|_| random_psd(m, p_max * (1.0 - share) * 0.4, rng)).collect(),
        z: random_psd(m, p_max * 0.1, rng),
        v,
        r_c: vec![0.0; ch.users()],
        r_p: vec![0.0; ch.users()],
        t: 0.0,
    }
}

/// Absolute errors of the three hand-solved programs: `min tr X` over
/// `X >= I` (3x3, value 3), `max t` with `t <= log2 a`, `1 <= a <= 8` (value
/// 3), and the l1 LP with vertex `(0, 2)` (value 2, error includes the
/// distance to the vertex).
pub fn conic_examples() -> Result<[f64; 3]> {
    let mut p = ConicProgram::new();
    let x = p.hermitian("X", 3);
    let mut shifted = HermExpr::from_var(x);
    shifted.add(&HermExpr::from_matrix(&CMat::identity(3, 3))?, -1.0)?;
    p.psd("shift", shifted);
    let mut tr = LinExpr::zero();
    tr.add_trace(x, 1.0);
    p.set_objective(ObjectiveSense::Minimize, tr);
    let trace_err = (solve(&p, 1e-8)?.objective - 3.0).abs();

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
    let log_err = (solve(&p, 1e-8)?.values["t"] - 3.0).abs();

    // min |x1| + |x2| s.t. x1 + 2 x2 = 4, x1 - x2 <= 1
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
    let r = solve(&p, 1e-10)?;
    let lp_err = (r.objective - 2.0).abs().max(r.values["x1"].abs()).max((r.values["x2"] - 2.0).abs());
    Ok([trace_err, log_err, lp_err])
}

/// Worst eigenvalue mismatch between random Hermitian matrices and their
/// real embeddings (each eigenvalue appears twice). Also fails loudly if
/// the PSD status of a shifted copy differs.
pub fn embedding_invariance(samples: usize, seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, 0x3e3);
    let mut worst = 0.0f64;
    for i in 0..samples {
        let n = 2 + i % 5;
        let h = random_hermitian(n, &mut rng);
        let eig = HermitianEigen::new(&h);
        let mut doubled: Vec<f64> = eig.values.iter().flat_map(|&l| [l, l]).collect();
        doubled.sort_by(f64::total_cmp);
        let emb = real_symmetric_eigenvalues(&embed_matrix(&h)?);
        for (a, b) in emb.iter().zip(&doubled) {
            worst = worst.max((a - b).abs());
        }
        // shifting by the smallest eigenvalue lands on the PSD boundary
        let shift = eig.min() - 1e-3;
        let psd = &h - CMat::identity(n, n).scale(shift);
        if real_symmetric_eigenvalues(&embed_matrix(&psd)?)[0] < 0.0 {
            return Err(Error::Domain(format!("embedding of a PSD matrix is indefinite (sample {i})")));
        }
    }
    Ok(worst)
}

fn set_slot(point: &mut LiftedPoint, slot: MatrixSlot, m: CMat) {
    match slot {
        MatrixSlot::Common => point.w_common = m,
        MatrixSlot::Private(k) => point.w_private[k] = m,
        MatrixSlot::Noise => point.z = m,
        MatrixSlot::Reflection => point.v = m,
    }
}

/// Largest relative error between every Taylor gradient at `point` and a
/// central finite difference (step `1e-6`) along a random Hermitian
/// direction. Relative to `max(|analytic|, 1e-3)`.
pub fn max_gradient_error(ch: &ChannelRealization, point: &LiftedPoint, p_max: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    const H: f64 = 1e-6;
    let mut worst = 0.0f64;
    for term in LogTerm::ALL {
        for k in 0..ch.users() {
            for block in [Block::Transmit, Block::Reflection] {
                let e = taylor_of_log_term(term, point, ch, k, block)?;
                for (slot, g) in &e.gradients {
                    let n = g.nrows();
                    let scale = trace_re(slot.get(point)).max(p_max * 0.1).max(1e-3);
                    let dir = random_psd(n, scale, rng) - random_psd(n, scale, rng);
                    let mut plus = point.clone();
                    set_slot(&mut plus, *slot, slot.get(point) + dir.scale(H));
                    let mut minus = point.clone();
                    set_slot(&mut minus, *slot, slot.get(point) - dir.scale(H));
                    let fd = (eval_log_term(term, &plus, ch, k) - eval_log_term(term, &minus, ch, k)) / (2.0 * H);
                    let an = inner(g, &dir);
                    worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceCheck {
    /// Largest `g(X) - bound(X)` over the samples, floored at zero.
    pub violation: f64,
    /// Largest `|bound(base) - g(base)|`.
    pub base_gap: f64,
}

/// Samples `samples` points per expansion of every linearized term (both
/// blocks, all users) around `base` and compares bound and term. Only the
/// expanded block moves; new transmit points stay inside the power ball.
pub fn taylor_dominance(ch: &ChannelRealization, base: &LiftedPoint, p_max: f64, samples: usize, rng: &mut ChaCha8Rng) -> Result<DominanceCheck> {
    let mut out = DominanceCheck { violation: 0.0, base_gap: 0.0 };
    for term in [LogTerm::GPrivate, LogTerm::FEve, LogTerm::GCommon] {
        for k in 0..ch.users() {
            for block in [Block::Transmit, Block::Reflection] {
                let e = taylor_of_log_term(term, base, ch, k, block)?;
                out.base_gap = out.base_gap.max((e.upper_bound(base) - eval_log_term(term, base, ch, k)).abs());
                for _ in 0..samples {
                    let fresh = random_lifted_point(ch, p_max, rng);
                    let test = match block {
                        Block::Transmit => LiftedPoint { v: base.v.clone(), ..fresh },
                        Block::Reflection => LiftedPoint { v: fresh.v, ..base.clone() },
                    };
                    out.violation = out.violation.max(eval_log_term(term, &test, ch, k) - e.upper_bound(&test));
                }
            }
        }
    }
    Ok(out)
}

/// Best design found by [`grid_optimum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptimum {
    pub min_sr: f64,
    pub phase: f64,
    pub power_common: f64,
    pub power_private: f64,
    pub power_an: f64,
}

struct Gains {
    user: f64,
    eve: f64,
    sigma_u: f64,
    sigma_e: f64,
}

impl Gains {
    fn at(ch: &ChannelRealization, phase: f64) -> Result<Self> {
        let v = CVec::from_vec(vec![Complex64::from_polar(1.0, phase), Complex64::new(1.0, 0.0)]);
        let gain = |rx| -> Result<f64> { Ok(effective_row(ch.stacked(rx), &v)?[0].norm_sqr()) };
        Ok(Self {
            user: gain(Receiver::User(0))?,
            eve: gain(Receiver::Eve)?,
            sigma_u: ch.noise(Receiver::User(0)),
            sigma_e: ch.noise(Receiver::Eve),
        })
    }

    // secrecy rate of the single user; a common stream Eve decodes better
    // than the user makes the design infeasible
    fn secrecy(&self, pc: f64, pp: f64, pz: f64) -> f64 {
        let (gu, ge) = (self.user, self.eve);
        let r_c = log2_1p(pc * gu / ((pp + pz) * gu + self.sigma_u));
        let r_ce = log2_1p(pc * ge / ((pp + pz) * ge + self.sigma_e));
        let r_p = log2_1p(pp * gu / (pz * gu + self.sigma_u));
        let r_pe = log2_1p(pp * ge / ((pc + pz) * ge + self.sigma_e));
        if r_c < r_ce {
            return f64::NEG_INFINITY;
        }
        (r_c - r_ce) + (r_p - r_pe).max(0.0)
    }
}

/// Exhaustive search for `M = 1, N = 1, K = 1`: `phases` reflection phases
/// times a `levels x levels` grid of (private, AN) power fractions at full
/// power with the rest on the common stream, then a local pattern search
/// over phase, the three powers and a total-power scale. Designs whose
/// common stream leaks more to Eve than it delivers are skipped.
pub fn grid_optimum(ch: &ChannelRealization, p_max: f64, phases: usize, levels: usize) -> Result<GridOptimum> {
    if ch.antennas() != 1 || ch.elements() != 1 || ch.users() != 1 {
        return Err(Error::Unsupported(format!(
            "grid oracle needs M = N = K = 1, got M = {}, N = {}, K = {}",
            ch.antennas(),
            ch.elements(),
            ch.users()
        )));
    }
    if phases == 0 || levels < 2 {
        return Err(Error::Config("grid oracle needs at least one phase and two power levels".into()));
    }
    let mut best = GridOptimum {
        min_sr: f64::NEG_INFINITY,
        phase: 0.0,
        power_common: 0.0,
        power_private: 0.0,
        power_an: 0.0,
    };
    let step = 1.0 / (levels - 1) as f64;
    for i in 0..phases {
        let phase = std::f64::consts::TAU * i as f64 / phases as f64;
        let g = Gains::at(ch, phase)?;
        for a in 0..levels {
            for b in 0..(levels - a) {
                let pp = a as f64 * step * p_max;
                let pz = b as f64 * step * p_max;
                let pc = (p_max - pp - pz).max(0.0);
                let sr = g.secrecy(pc, pp, pz);
                if sr > best.min_sr {
                    best = GridOptimum {
                        min_sr: sr,
                        phase,
                        power_common: pc,
                        power_private: pp,
                        power_an: pz,
                    };
                }
            }
        }
    }
    refine(ch, p_max, best, std::f64::consts::TAU / phases as f64, step)
}

// Coordinate pattern search from the best grid cell; the step halves when
// no move improves.
fn refine(ch: &ChannelRealization, p_max: f64, start: GridOptimum, phase_step: f64, power_step: f64) -> Result<GridOptimum> {
    let eval = |x: &[f64; 4]| -> Result<f64> {
        // x = (phase, private, an, scale); fractions clamped to the simplex
        let pp = x[1].clamp(0.0, 1.0);
        let pz = x[2].clamp(0.0, 1.0 - pp);
        let s = x[3].clamp(0.0, 1.0) * p_max;
        Ok(Gains::at(ch, x[0])?.secrecy(s * (1.0 - pp - pz), s * pp, s * pz))
    };
    let mut x = [start.phase, start.power_private / p_max, start.power_an / p_max, 1.0];
    let mut fx = eval(&x)?.max(start.min_sr);
    let mut steps = [phase_step, power_step, power_step, power_step];
    for _ in 0..60 {
        let mut moved = false;
        for d in 0..4 {
            for sign in [1.0, -1.0] {
                let mut y = x;
                y[d] += sign * steps[d];
                if d > 0 && !(0.0..=1.0).contains(&y[d]) {
                    continue;
                }
                if y[1] + y[2] > 1.0 {
                    continue;
                }
                let fy = eval(&y)?;
                if fy > fx {
                    x = y;
                    fx = fy;
                    moved = true;
                }
            }
        }
        if !moved {
            for s in &mut steps {
                *s *= 0.5;
            }
        }
    }
    let s = x[3] * p_max;
    Ok(GridOptimum {
        min_sr: fx,
        phase: x[0].rem_euclid(std::f64::consts::TAU),
        power_common: s * (1.0 - x[1] - x[2]),
        power_private: s * x[1],
        power_an: s * x[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{assemble_channels, FadingConfig, SystemGeometry};
    use crate::linalg::dbm_to_watts;
    use crate::rates::{rate_report, TransmitDesign};

    fn tiny(seed: u64) -> ChannelRealization {
        let geo = SystemGeometry {
            ap_pos: [0.0, 0.0],
            irs_pos: [50.0, 0.0],
            eve_pos: [45.0, 0.0],
            lu_pos: vec![[50.0, 5.0]],
            antennas: 1,
            elements: 1,
        };
        assemble_channels(&geo, &FadingConfig { seed, ..Default::default() }).unwrap()
    }

    #[test]
    fn conic_examples_are_exact() {
        let errs = conic_examples().unwrap();
        assert!(errs.iter().all(|e| *e < 1e-6), "{errs:?}");
    }

    #[test]
    fn embedding_keeps_eigenvalues() {
        assert!(embedding_invariance(100, 1).unwrap() < 1e-10);
    }

    #[test]
    fn grid_value_matches_rate_report() {
        let ch = tiny(2);
        let p = dbm_to_watts(20.0);
        let opt = grid_optimum(&ch, p, 90, 30).unwrap();
        let mut d = TransmitDesign::zeros(1, 1, 1);
        d.w_c[0] = Complex64::new(opt.power_common.sqrt(), 0.0);
        d.w[0][0] = Complex64::new(opt.power_private.sqrt(), 0.0);
        d.z[(0, 0)] = Complex64::new(opt.power_an, 0.0);
        d.v[0] = Complex64::from_polar(1.0, opt.phase);
        let rep = rate_report(&d, &ch).unwrap();
        let expect = rep.common_secrecy_budget() + rep.private_secrecy()[0];
        assert!((opt.min_sr - expect).abs() < 1e-9, "{} vs {expect}", opt.min_sr);
        assert!(opt.power_common + opt.power_private + opt.power_an <= p * (1.0 + 1e-12));
    }

    #[test]
    fn finer_grid_is_no_worse() {
        let ch = tiny(3);
        let p = dbm_to_watts(20.0);
        let coarse = grid_optimum(&ch, p, 36, 10).unwrap();
        let fine = grid_optimum(&ch, p, 720, 100).unwrap();
        assert!(fine.min_sr >= coarse.min_sr - 1e-6, "{} vs {}", fine.min_sr, coarse.min_sr);
    }

    #[test]
    fn grid_rejects_larger_instances() {
        let geo = SystemGeometry {
            ap_pos: [0.0, 0.0],
            irs_pos: [50.0, 0.0],
            eve_pos: [45.0, 0.0],
            lu_pos: vec![[50.0, 5.0]],
            antennas: 2,
            elements: 1,
        };
        let ch = assemble_channels(&geo, &FadingConfig::default()).unwrap();
        assert!(matches!(grid_optimum(&ch, 0.1, 10, 10), Err(Error::Unsupported(_))));
    }
}
