use crate::channels::ChannelRealization;
use crate::conic::{add_log2_lower_bound, ConicProgram, HermVar, LinExpr, ObjectiveSense, ScalarVar, Sense, SolverResult};
use crate::error::{Error, Result};
use crate::linalg::{hermitize, inner, outer, CMat};
use crate::rates::{reflection_pairing, stream_sum, LiftedPoint, LogTerm, StreamLayout};

use super::taylor::{taylor_of_log_term, Block, MatrixSlot};
use super::transmit::fill_auxiliaries;
use super::PenaltyState;

/// Penalized reflection program with residual rate variables.
#[derive(Debug, Clone)]
pub struct ReflectionProgram {
    pub program: ConicProgram,
    v: HermVar,
    dt: ScalarVar,
    dr_c: Vec<ScalarVar>,
    dr_p: Vec<ScalarVar>,
    aux: Vec<ScalarVar>,
}

impl ReflectionProgram {
    /// Next lifted point: new `V`, residuals folded into the rate variables.
    pub fn extract(&self, res: &SolverResult, fixed: &LiftedPoint) -> LiftedPoint {
        let mut next = fixed.clone();
        next.v = hermitize(&res.matrix(self.v));
        for k in 0..next.users() {
            next.r_c[k] += res.scalar(self.dr_c[k]).max(0.0);
            next.r_p[k] += res.scalar(self.dr_p[k]).max(0.0);
        }
        next.t += res.scalar(self.dt);
        next
    }

    /// Coordinates of `fixed` itself with zero residuals.
    pub fn coordinates(&self, fixed: &LiftedPoint) -> Vec<f64> {
        let mut x = vec![0.0; self.program.num_coords()];
        let v = self.v;
        for i in 0..v.dim {
            x[v.re_coord(i, i)] = fixed.v[(i, i)].re;
            for j in (i + 1)..v.dim {
                x[v.re_coord(i, j)] = fixed.v[(i, j)].re;
                x[v.im_coord(i, j)] = fixed.v[(i, j)].im;
            }
        }
        for u in &self.aux {
            x[u.coord] = f64::NAN;
        }
        fill_auxiliaries(&self.program, &mut x);
        x
    }
}

/// `tr V - ||V_ref||_2 - lambda^H (V - V_ref) lambda`.
pub fn penalty_value(v: &CMat, penalty: &PenaltyState, v_ref: &CMat) -> f64 {
    let l = outer(&penalty.lambda_max_vec);
    crate::linalg::trace_re(v) - penalty.spectral_norm - inner(&l, v) + inner(&l, v_ref)
}

/// Builds the penalized program for the reflection matrix at the fixed
/// precoders, noise covariance and rates of `fixed`, linearized at `fixed.v`.
pub fn build_v_subproblem(
    ch: &ChannelRealization,
    fixed: &LiftedPoint,
    penalty: &PenaltyState,
    layout: &StreamLayout,
) -> Result<ReflectionProgram> {
    let k_users = ch.users();
    let n1 = ch.elements() + 1;
    if fixed.v.shape() != (n1, n1) {
        return Err(Error::Dimension {
            context: "reflection matrix",
            expected: n1,
            got: fixed.v.nrows(),
        });
    }
    if penalty.lambda_max_vec.len() != n1 {
        return Err(Error::Dimension {
            context: "penalty eigenvector",
            expected: n1,
            got: penalty.lambda_max_vec.len(),
        });
    }
    if layout.users() != k_users || fixed.users() != k_users {
        return Err(Error::Dimension {
            context: "users in reflection program",
            expected: k_users,
            got: layout.users().min(fixed.users()),
        });
    }
    let mut prog = ConicProgram::new();
    let v = prog.hermitian("V", n1);
    let dt = prog.scalar("dt");
    let dr_c: Vec<ScalarVar> = (0..k_users).map(|k| prog.scalar(format!("drc{k}"))).collect();
    let dr_p: Vec<ScalarVar> = (0..k_users).map(|k| prog.scalar(format!("drp{k}"))).collect();
    let mut aux = Vec::new();

    prog.psd_var(v);
    for i in 0..n1 {
        let mut d = LinExpr::constant(-1.0);
        d.add_coord(v.re_coord(i, i), 1.0);
        prog.constrain(format!("unit_diag{i}"), d, Sense::Eq);
    }
    for k in 0..k_users {
        let c_on = layout.common && layout.common_share[k];
        prog.constrain(format!("drc{k}_nonneg"), LinExpr::var(dr_c[k]), if c_on { Sense::Ge } else { Sense::Eq });
        prog.constrain(format!("drp{k}_nonneg"), LinExpr::var(dr_p[k]), if layout.private[k] { Sense::Ge } else { Sense::Eq });
        let mut sum = LinExpr::constant(fixed.r_c[k] + fixed.r_p[k] - fixed.t);
        sum.add_var(dr_c[k], 1.0).add_var(dr_p[k], 1.0).add_var(dt, -1.0);
        prog.constrain(format!("minrate{k}"), sum, Sense::Ge);
    }

    let linearized = |term: LogTerm, k: usize| -> Result<LinExpr> {
        let e = taylor_of_log_term(term, fixed, ch, k, Block::Reflection)?;
        let mut out = LinExpr::constant(e.offset());
        out.add_inner(v, &e.gradients[&MatrixSlot::Reflection], 1.0);
        Ok(out)
    };
    let mut exact = |prog: &mut ConicProgram, term: LogTerm, k: usize, name: String| -> LinExpr {
        let set = term.streams(k, k_users);
        let sigma2 = ch.noise(set.receiver);
        let b = hermitize(&reflection_pairing(ch, set.receiver, &stream_sum(fixed, &set)));
        let mut arg = LinExpr::constant(1.0);
        arg.add_inner(v, &b, 1.0 / sigma2);
        let u = prog.scalar(name.clone());
        aux.push(u);
        let mut shifted = LinExpr::var(u);
        shifted.add_const(-sigma2.log2());
        add_log2_lower_bound(prog, name, &arg, &shifted);
        LinExpr::var(u)
    };

    let fe = linearized(LogTerm::FEve, 0)?;
    for k in (0..k_users).filter(|&k| layout.private[k]) {
        let mut c = exact(&mut prog, LogTerm::FPrivate, k, format!("u_fp{k}"));
        let u_gpe = exact(&mut prog, LogTerm::GEvePrivate, k, format!("u_gpe{k}"));
        c.add_expr(&linearized(LogTerm::GPrivate, k)?, -1.0)
            .add_expr(&u_gpe, 1.0)
            .add_expr(&fe, -1.0)
            .add_var(dr_p[k], -1.0)
            .add_const(-fixed.r_p[k]);
        prog.constrain(format!("private_secrecy{k}"), c, Sense::Ge);
    }
    if layout.common {
        let u_gce = exact(&mut prog, LogTerm::GEveCommon, 0, "u_gce".into());
        for k in 0..k_users {
            let mut c = exact(&mut prog, LogTerm::FCommon, k, format!("u_fc{k}"));
            c.add_expr(&linearized(LogTerm::GCommon, k)?, -1.0).add_expr(&u_gce, 1.0).add_expr(&fe, -1.0);
            for i in 0..k_users {
                c.add_var(dr_c[i], -1.0).add_const(-fixed.r_c[i]);
            }
            prog.constrain(format!("common_secrecy{k}"), c, Sense::Ge);
        }
    }

    let mut obj = LinExpr::constant(-fixed.t);
    obj.add_var(dt, -1.0);
    let weight = penalty.weight();
    if weight > 0.0 {
        let l = outer(&penalty.lambda_max_vec);
        obj.add_trace(v, weight);
        obj.add_inner(v, &l, -weight);
        obj.add_const(weight * (inner(&l, &fixed.v) - penalty.spectral_norm));
    }
    prog.set_objective(ObjectiveSense::Minimize, obj);
    prog.validate()?;
    Ok(ReflectionProgram {
        program: prog,
        v,
        dt,
        dr_c,
        dr_p,
        aux,
    })
}
