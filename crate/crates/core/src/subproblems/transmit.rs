use crate::channels::ChannelRealization;
use crate::conic::{add_log2_lower_bound, ConicProgram, HermVar, LinExpr, ObjectiveSense, ScalarVar, Sense, SolverResult};
use crate::error::{Error, Result};
use crate::linalg::{hermitize, CMat, ZERO};
use crate::rates::{transmit_pairing, LiftedPoint, LogTerm, StreamLayout};

use super::taylor::{taylor_of_log_term, Block, MatrixSlot, TaylorExpansion};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransmitOptions {
    /// Drop the artificial-noise covariance from the program.
    pub force_zero_noise: bool,
}

/// Precoder / AN / rate-allocation program with the handles needed to read
/// its solution back. Matrix variables are scaled by `1 / p_max`.
#[derive(Debug, Clone)]
pub struct TransmitProgram {
    pub program: ConicProgram,
    scale: f64,
    antennas: usize,
    w_common: Option<HermVar>,
    w_private: Vec<Option<HermVar>>,
    z: Option<HermVar>,
    r_c: Vec<ScalarVar>,
    r_p: Vec<ScalarVar>,
    t: ScalarVar,
    aux: Vec<ScalarVar>,
}

impl TransmitProgram {
    fn read(&self, res: &SolverResult, var: Option<HermVar>) -> CMat {
        match var {
            Some(v) => hermitize(&res.matrix(v)).scale(self.scale),
            None => CMat::zeros(self.antennas, self.antennas),
        }
    }

    /// Builds the next lifted point from a solution; `V` is carried over from `prev`.
    pub fn extract(&self, res: &SolverResult, prev: &LiftedPoint) -> LiftedPoint {
        LiftedPoint {
            w_common: self.read(res, self.w_common),
            w_private: self.w_private.iter().map(|v| self.read(res, *v)).collect(),
            z: self.read(res, self.z),
            v: prev.v.clone(),
            r_c: self.r_c.iter().map(|v| res.scalar(*v)).collect(),
            r_p: self.r_p.iter().map(|v| res.scalar(*v)).collect(),
            t: res.scalar(self.t),
        }
    }

    /// Coordinates of `point` in this program, for feasibility checks.
    pub fn coordinates(&self, point: &LiftedPoint) -> Vec<f64> {
        let mut x = vec![0.0; self.program.num_coords()];
        let mut put = |var: Option<HermVar>, m: &CMat| {
            if let Some(v) = var {
                let m = m.unscale(self.scale);
                for i in 0..v.dim {
                    x[v.re_coord(i, i)] = m[(i, i)].re;
                    for j in (i + 1)..v.dim {
                        x[v.re_coord(i, j)] = m[(i, j)].re;
                        x[v.im_coord(i, j)] = m[(i, j)].im;
                    }
                }
            }
        };
        put(self.w_common, &point.w_common);
        for (v, m) in self.w_private.iter().zip(&point.w_private) {
            put(*v, m);
        }
        put(self.z, &point.z);
        for (v, r) in self.r_c.iter().zip(&point.r_c) {
            x[v.coord] = *r;
        }
        for (v, r) in self.r_p.iter().zip(&point.r_p) {
            x[v.coord] = *r;
        }
        x[self.t.coord] = point.t;
        for v in &self.aux {
            x[v.coord] = f64::NAN;
        }
        fill_auxiliaries(&self.program, &mut x);
        x
    }
}

// sets each auxiliary marked NaN to the largest value its exponential cone allows
pub(crate) fn fill_auxiliaries(prog: &ConicProgram, x: &mut [f64]) {
    for c in &prog.exp_cones {
        if let Some((&coord, &coef)) = c.x.terms.iter().find(|(coord, _)| x[**coord].is_nan()) {
            let mut rest = c.x.clone();
            rest.terms.remove(&coord);
            let z = c.z.eval(x);
            x[coord] = (z.ln() - rest.eval(x)) / coef;
        }
    }
}

struct Handles<'a> {
    ch: &'a ChannelRealization,
    scale: f64,
    w_common: Option<HermVar>,
    w_private: &'a [Option<HermVar>],
    z: Option<HermVar>,
}

impl Handles<'_> {
    fn var(&self, slot: MatrixSlot) -> Option<HermVar> {
        match slot {
            MatrixSlot::Common => self.w_common,
            MatrixSlot::Private(k) => self.w_private[k],
            MatrixSlot::Noise => self.z,
            MatrixSlot::Reflection => None,
        }
    }

    /// Affine form of a Taylor upper bound in the program variables.
    fn linearized(&self, e: &TaylorExpansion) -> LinExpr {
        let mut out = LinExpr::constant(e.offset());
        for (slot, g) in &e.gradients {
            if let Some(v) = self.var(*slot) {
                out.add_inner(v, g, self.scale);
            }
        }
        out
    }

    /// Adds `u <= log2(sigma^2 + sum <A, X>)` and returns `u`.
    fn exact(&self, prog: &mut ConicProgram, aux: &mut Vec<ScalarVar>, term: LogTerm, k: usize, v: &CMat, name: String) -> LinExpr {
        let set = term.streams(k, self.ch.users());
        let sigma2 = self.ch.noise(set.receiver);
        let a = hermitize(&transmit_pairing(self.ch, set.receiver, v));
        let coef = self.scale / sigma2;
        let mut arg = LinExpr::constant(1.0);
        let mut slots = vec![MatrixSlot::Noise];
        if set.common {
            slots.push(MatrixSlot::Common);
        }
        slots.extend(set.private.iter().map(|&i| MatrixSlot::Private(i)));
        for s in slots {
            if let Some(x) = self.var(s) {
                arg.add_inner(x, &a, coef);
            }
        }
        let u = prog.scalar(name.clone());
        aux.push(u);
        let mut shifted = LinExpr::var(u);
        shifted.add_const(-sigma2.log2());
        add_log2_lower_bound(prog, name, &arg, &shifted);
        LinExpr::var(u)
    }
}

/// Builds the convex program for the precoders, AN covariance and rate
/// allocation at fixed reflection matrix `v`, linearized around `prev`.
pub fn build_w_subproblem(
    ch: &ChannelRealization,
    v: &CMat,
    prev: &LiftedPoint,
    p_max: f64,
    layout: &StreamLayout,
    opts: TransmitOptions,
) -> Result<TransmitProgram> {
    let k_users = ch.users();
    let m = ch.antennas();
    if layout.users() != k_users || prev.users() != k_users {
        return Err(Error::Dimension {
            context: "users in transmit program",
            expected: k_users,
            got: layout.users().min(prev.users()),
        });
    }
    if v.shape() != (ch.elements() + 1, ch.elements() + 1) {
        return Err(Error::Dimension {
            context: "reflection matrix",
            expected: ch.elements() + 1,
            got: v.nrows(),
        });
    }
    if !(p_max >= 0.0 && p_max.is_finite()) {
        return Err(Error::Config(format!("power budget must be finite and non-negative, got {p_max}")));
    }
    let scale = if p_max > 0.0 { p_max } else { 1.0 };
    let mut prog = ConicProgram::new();
    let w_common = layout.common.then(|| prog.hermitian("Wc", m));
    let w_private: Vec<Option<HermVar>> = (0..k_users)
        .map(|k| layout.private[k].then(|| prog.hermitian(format!("W{k}"), m)))
        .collect();
    let z = (!opts.force_zero_noise).then(|| prog.hermitian("Z", m));
    let r_c: Vec<ScalarVar> = (0..k_users).map(|k| prog.scalar(format!("rc{k}"))).collect();
    let r_p: Vec<ScalarVar> = (0..k_users).map(|k| prog.scalar(format!("rp{k}"))).collect();
    let t = prog.scalar("t");

    // expand at prev restricted to the blocks this program keeps
    let mut at = prev.clone();
    at.v = v.clone();
    if w_common.is_none() {
        at.w_common.fill(ZERO);
    }
    for (w, var) in at.w_private.iter_mut().zip(&w_private) {
        if var.is_none() {
            w.fill(ZERO);
        }
    }
    if z.is_none() {
        at.z.fill(ZERO);
    }
    let h = Handles {
        ch,
        scale,
        w_common,
        w_private: &w_private,
        z,
    };

    for var in w_common.iter().chain(w_private.iter().flatten()).chain(z.iter()) {
        prog.psd_var(*var);
    }
    let mut power = LinExpr::constant(p_max / scale);
    for var in w_common.iter().chain(w_private.iter().flatten()).chain(z.iter()) {
        power.add_trace(*var, -1.0);
    }
    prog.constrain("power", power, Sense::Ge);

    for k in 0..k_users {
        prog.constrain(format!("rc{k}_nonneg"), LinExpr::var(r_c[k]), if layout.common_share[k] && layout.common { Sense::Ge } else { Sense::Eq });
        prog.constrain(format!("rp{k}_nonneg"), LinExpr::var(r_p[k]), if layout.private[k] { Sense::Ge } else { Sense::Eq });
        let mut sum = LinExpr::var(r_c[k]);
        sum.add_var(r_p[k], 1.0).add_var(t, -1.0);
        prog.constrain(format!("minrate{k}"), sum, Sense::Ge);
    }

    let mut aux = Vec::new();
    let fe = h.linearized(&taylor_of_log_term(LogTerm::FEve, &at, ch, 0, Block::Transmit)?);
    for k in (0..k_users).filter(|&k| layout.private[k]) {
        let u_fp = h.exact(&mut prog, &mut aux, LogTerm::FPrivate, k, v, format!("u_fp{k}"));
        let u_gpe = h.exact(&mut prog, &mut aux, LogTerm::GEvePrivate, k, v, format!("u_gpe{k}"));
        let gp = h.linearized(&taylor_of_log_term(LogTerm::GPrivate, &at, ch, k, Block::Transmit)?);
        let mut c = u_fp;
        c.add_expr(&gp, -1.0).add_expr(&u_gpe, 1.0).add_expr(&fe, -1.0).add_var(r_p[k], -1.0);
        prog.constrain(format!("private_secrecy{k}"), c, Sense::Ge);
    }
    if layout.common {
        let u_gce = h.exact(&mut prog, &mut aux, LogTerm::GEveCommon, 0, v, "u_gce".into());
        for k in 0..k_users {
            let u_fc = h.exact(&mut prog, &mut aux, LogTerm::FCommon, k, v, format!("u_fc{k}"));
            let gc = h.linearized(&taylor_of_log_term(LogTerm::GCommon, &at, ch, k, Block::Transmit)?);
            let mut c = u_fc;
            c.add_expr(&gc, -1.0).add_expr(&u_gce, 1.0).add_expr(&fe, -1.0);
            for r in &r_c {
                c.add_var(*r, -1.0);
            }
            prog.constrain(format!("common_secrecy{k}"), c, Sense::Ge);
        }
    }
    prog.set_objective(ObjectiveSense::Maximize, LinExpr::var(t));
    prog.validate()?;
    Ok(TransmitProgram {
        program: prog,
        scale,
        antennas: m,
        w_common,
        w_private,
        z,
        r_c,
        r_p,
        t,
        aux,
    })
}
