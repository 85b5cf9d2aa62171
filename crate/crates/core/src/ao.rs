//! Alternating optimization between the transmit block and the reflection
//! block, with a feasible initialization, best-so-far bookkeeping and
//! extraction of a vector design.

use std::f64::consts::TAU;
use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{effective_row, stream_rng, ChannelRealization, Receiver};
use crate::conic::{solve_with, ClarabelBackend, ConicBackend, ConicProgram, SolveOptions, SolveStatus, SolverResult};
use crate::error::{Error, Result};
use crate::linalg::{hermitize, project_psd, project_psd_floor, trace_re, CMat, CVec, ONE};
use crate::rates::{
    allocate_common_rate, drop_insecure_streams, rate_report, tighten_rates, LiftedPoint, RateReport, StreamLayout, TransmitDesign,
};
use crate::subproblems::{
    build_v_subproblem, build_w_subproblem, extract_rank_one, project_unit_modulus, PenaltyState, TransmitOptions,
};

/// Back-off applied to every rate variable after tightening, so the next
/// linearized program starts strictly inside its constraints.
pub const RATE_MARGIN: f64 = 1e-8;

/// Residual ratio of `V` above which the run is retried once with `rho / 10`.
pub const RANK_RETRY_THRESHOLD: f64 = 1e-3;

/// Covariances carrying less than this fraction of the budget count as
/// switched off: their rank residual is round-off and is not reported.
pub const NEGLIGIBLE_POWER: f64 = 1e-5;

/// Eigenvalues of a transmit covariance below this fraction of the budget
/// are solver round-off and are removed after every step.
pub const EIGEN_FLOOR: f64 = 1e-7;

/// Stream RNG id used by the random-phase initialization.
const INIT_STREAM: u64 = 900;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// IRS phases co-phased toward the weakest user, MRT precoders.
    MrtEqualPower,
    /// i.i.d. uniform phases, MRT precoders.
    RandomPhase,
    /// All-ones reflection vector, MRT precoders.
    IdentityPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AOConfig {
    /// Transmit power budget in watts.
    pub p_max: f64,
    pub rho: f64,
    pub eps_converge: f64,
    pub eps_solver: f64,
    pub max_outer_iters: usize,
    pub init_strategy: InitStrategy,
    pub seed: u64,
    /// Retry once with `rho / 10` if `V` is not rank one at convergence.
    pub rho_retry: bool,
    /// Log every built program in text form at trace level.
    pub dump_programs: bool,
}

impl Default for AOConfig {
    fn default() -> Self {
        Self {
            p_max: crate::linalg::dbm_to_watts(20.0),
            rho: 5e-4,
            eps_converge: 1e-4,
            eps_solver: 1e-4,
            max_outer_iters: 50,
            init_strategy: InitStrategy::MrtEqualPower,
            seed: 1,
            rho_retry: true,
            dump_programs: false,
        }
    }
}

impl AOConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_max >= 0.0 && self.p_max.is_finite()) {
            return Err(Error::Config(format!("p_max must be finite and non-negative, got {}", self.p_max)));
        }
        if !(self.rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.eps_converge > 0.0 && self.eps_solver > 0.0) {
            return Err(Error::Config("convergence and solver tolerances must be positive".into()));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::Config("max_outer_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub status: SolveStatus,
    pub solver_iterations: u32,
    pub wall_time: f64,
    /// Program objective as returned by the solver, when finite.
    pub program_objective: Option<f64>,
    /// Max-min rate of the candidate after exact tightening; `None` when the solve gave no usable point.
    pub candidate_objective: Option<f64>,
    pub accepted: bool,
    pub primal_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Lifted max-min objective after this iteration.
    pub objective: f64,
    pub rho: f64,
    /// `(tr V - lambda_max) / tr V`.
    pub v_residual_ratio: f64,
    /// Largest `(tr W - lambda_max) / tr W` over streams above the negligible power.
    pub w_residual_ratio: f64,
    pub w_step: Option<StepRecord>,
    pub v_step: Option<StepRecord>,
    /// Largest violation of power, PSD and unit-diagonal constraints.
    pub feasibility_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    /// A subproblem failed; the best point found so far is returned.
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AOTrace {
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    pub rho_retried: bool,
}

impl AOTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    /// Outer iterations run, not counting the initialization record.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Copy with wall times zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        for r in &mut t.records {
            for s in [&mut r.w_step, &mut r.v_step].into_iter().flatten() {
                s.wall_time = 0.0;
            }
        }
        t
    }

    /// One JSON object per iteration.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|e| Error::io("<trace>", e))?;
        }
        Ok(())
    }

    /// Largest drop between consecutive objectives (zero if nondecreasing).
    pub fn max_decrease(&self) -> f64 {
        self.records.windows(2).map(|w| w[0].objective - w[1].objective).fold(0.0, f64::max)
    }
}

/// `(t_r - t_{r-1}) / max(1, |t_{r-1}|) < eps` on the last two objectives.
pub fn convergence_check(objectives: &[f64], eps_converge: f64) -> bool {
    match objectives {
        [.., prev, last] => (last - prev) / prev.abs().max(1.0) < eps_converge,
        _ => false,
    }
}

/// Result of one alternating-optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AOSolution {
    pub design: TransmitDesign,
    pub lifted: LiftedPoint,
    pub trace: AOTrace,
    /// Rates of `design` with its common shares.
    pub report: RateReport,
    pub layout: StreamLayout,
}

impl AOSolution {
    pub fn min_secrecy_rate(&self) -> f64 {
        self.report.min_sr
    }

    pub fn lifted_objective(&self) -> f64 {
        self.lifted.t
    }
}

/// User with the weakest effective channel under reflection vector `v`
/// (ties go to the lower index).
pub fn weakest_user(ch: &ChannelRealization, v: &CVec) -> usize {
    let mut best = (0, f64::INFINITY);
    for k in 0..ch.users() {
        let g = effective_row(ch.stacked(Receiver::User(k)), v).map(|r| r.norm()).unwrap_or(0.0);
        if g < best.1 {
            best = (k, g);
        }
    }
    best.0
}

fn initial_reflection(ch: &ChannelRealization, strategy: InitStrategy, seed: u64) -> CVec {
    let n = ch.elements();
    let ones = CVec::from_element(n + 1, ONE);
    match strategy {
        InitStrategy::IdentityPhase => ones,
        InitStrategy::RandomPhase => {
            let mut rng = stream_rng(seed, INIT_STREAM);
            CVec::from_fn(n + 1, |i, _| if i == n { ONE } else { Complex64::from_polar(1.0, rng.random::<f64>() * TAU) })
        }
        InitStrategy::MrtEqualPower => {
            // add every reflected path in phase with the direct path of the weakest user
            let k = weakest_user(ch, &ones);
            let h = ch.stacked(Receiver::User(k));
            let hd = h.row(n).transpose();
            let w0 = if hd.norm() > 0.0 { hd.conjugate().unscale(hd.norm()) } else { CVec::from_element(ch.antennas(), ONE) };
            let c = h * w0;
            project_unit_modulus(&c)
        }
    }
}

/// Feasible starting point: MRT precoders with equal power over the active
/// streams, a small isotropic AN covariance, streams with negative secrecy
/// margin switched off and rates set to their achieved values.
pub fn initialize(ch: &ChannelRealization, config: &AOConfig, layout: &StreamLayout) -> LiftedPoint {
    let m = ch.antennas();
    let v = initial_reflection(ch, config.init_strategy, config.seed);
    let mut d = TransmitDesign::zeros(m, ch.elements(), ch.users());
    d.v = v;
    let p = config.p_max;
    d.z = CMat::identity(m, m).scale(0.05 * p / m as f64);
    let streams = layout.active_streams().max(1) as f64;
    let share = (p - trace_re(&d.z)).max(0.0) / streams;
    let mrt = |k: usize| {
        let row = effective_row(ch.stacked(Receiver::User(k)), &d.v).unwrap_or_else(|_| CVec::zeros(m));
        let norm = row.norm();
        if norm > 0.0 {
            row.conjugate().scale(share.sqrt() / norm)
        } else {
            CVec::from_element(m, ONE).scale((share / m as f64).sqrt())
        }
    };
    if layout.common {
        d.w_c = mrt(weakest_user(ch, &d.v));
    }
    for k in 0..ch.users() {
        if layout.private[k] {
            d.w[k] = mrt(k);
        }
    }
    let mut point = LiftedPoint::from_design(&d);
    let dropped = drop_insecure_streams(&mut point, ch, 0.0);
    if !dropped.is_empty() {
        log::debug!("initialization switched off insecure streams {dropped:?}");
    }
    tighten_rates(&mut point, ch, layout, RATE_MARGIN);
    point
}

/// Vector design for `point`: principal components of the covariances,
/// unit-modulus projection of the principal component of `V`, and
/// water-filled common shares.
pub fn extract_design(point: &LiftedPoint, ch: &ChannelRealization, layout: &StreamLayout) -> Result<(TransmitDesign, RateReport)> {
    let tol = RANK_RETRY_THRESHOLD;
    let (w_c, _) = extract_rank_one(&point.w_common, tol);
    let w = point.w_private.iter().map(|x| extract_rank_one(x, tol).0).collect();
    let (v_raw, _) = extract_rank_one(&point.v, tol);
    let v = if v_raw.norm() > 0.0 { project_unit_modulus(&v_raw) } else { CVec::from_element(point.v.nrows(), ONE) };
    let mut design = TransmitDesign {
        w_c,
        w,
        z: point.z.clone(),
        v,
        r_c_sec: vec![0.0; ch.users()],
    };
    let base = rate_report(&design, ch)?;
    let budget = if layout.common { base.common_secrecy_budget() } else { 0.0 };
    design.r_c_sec = allocate_common_rate(&base.private_secrecy(), budget, &layout.common_share);
    let report = rate_report(&design, ch)?;
    Ok((design, report))
}

fn residual_ratio(x: &CMat) -> f64 {
    extract_rank_one(x, f64::INFINITY).1
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn max_w_residual(point: &LiftedPoint, p_max: f64) -> f64 {
    std::iter::once(&point.w_common)
        .chain(point.w_private.iter())
        .filter(|w| trace_re(w) > NEGLIGIBLE_POWER * p_max)
        .map(residual_ratio)
        .fold(0.0, f64::max)
}

// PSD projection of every block, power rescaled into the budget, unit diagonal on V
fn clean(point: &mut LiftedPoint, p_max: f64) {
    let floor = EIGEN_FLOOR * p_max;
    point.w_common = project_psd_floor(&hermitize(&point.w_common), floor);
    for w in &mut point.w_private {
        *w = project_psd_floor(&hermitize(w), floor);
    }
    point.z = project_psd_floor(&hermitize(&point.z), floor);
    let total = point.total_power();
    if total > p_max && total > 0.0 {
        let s = p_max / total;
        point.w_common.scale_mut(s);
        for w in &mut point.w_private {
            w.scale_mut(s);
        }
        point.z.scale_mut(s);
    }
    let v = project_psd(&hermitize(&point.v));
    let d: Vec<f64> = (0..v.nrows()).map(|i| v[(i, i)].re.max(1e-300).sqrt()).collect();
    point.v = CMat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] / (d[i] * d[j]));
}

fn feasibility_residual(point: &LiftedPoint, p_max: f64) -> f64 {
    let mut worst = (point.total_power() - p_max).max(0.0);
    for x in std::iter::once(&point.w_common).chain(point.w_private.iter()).chain([&point.z, &point.v]) {
        worst = worst.max(-crate::linalg::min_eigenvalue(x));
    }
    for i in 0..point.v.nrows() {
        worst = worst.max((point.v[(i, i)].re - 1.0).abs());
    }
    worst
}

struct Runner<'a> {
    ch: &'a ChannelRealization,
    config: &'a AOConfig,
    layout: &'a StreamLayout,
    backend: &'a dyn ConicBackend,
    opts: SolveOptions,
}

enum StepOutcome {
    Solved(LiftedPoint, StepRecord),
    Failed(StepRecord),
}

impl Runner<'_> {
    fn run_program(&self, prog: &ConicProgram, what: &str) -> Result<(SolverResult, f64)> {
        if self.config.dump_programs {
            log::trace!("{what} program:\n{}", prog.to_text());
        }
        let start = Instant::now();
        let res = solve_with(self.backend, prog, &self.opts)?;
        Ok((res, start.elapsed().as_secs_f64()))
    }

    fn finish_step(&self, res: &SolverResult, wall_time: f64, cand: Option<LiftedPoint>, current: &LiftedPoint, prog: &ConicProgram, what: &str) -> StepOutcome {
        let usable = matches!(res.status, SolveStatus::Optimal | SolveStatus::NumericalLimit) && res.x.iter().all(|x| x.is_finite());
        let mut record = StepRecord {
            status: res.status,
            solver_iterations: res.iterations,
            wall_time,
            program_objective: finite(res.objective),
            candidate_objective: None,
            accepted: false,
            primal_residual: finite(res.primal_residual),
        };
        let Some(mut cand) = cand.filter(|_| usable) else {
            log::warn!("{what} step returned {:?}; keeping the best point so far", res.status);
            log::debug!("{what} program:\n{}", prog.to_text());
            return StepOutcome::Failed(record);
        };
        if res.status != SolveStatus::Optimal {
            log::debug!("{what} step hit a numerical limit; using its point after exact re-evaluation");
        }
        clean(&mut cand, self.config.p_max);
        // tiny negative margins from solver round-off are fine; real ones are not
        drop_insecure_streams(&mut cand, self.ch, 1e-6);
        tighten_rates(&mut cand, self.ch, self.layout, RATE_MARGIN);
        record.candidate_objective = Some(cand.t);
        record.accepted = cand.t >= current.t;
        if record.accepted {
            StepOutcome::Solved(cand, record)
        } else {
            StepOutcome::Failed(record)
        }
    }

    fn transmit_step(&self, point: &LiftedPoint) -> Result<StepOutcome> {
        let prog = build_w_subproblem(self.ch, &point.v, point, self.config.p_max, self.layout, TransmitOptions::default())?;
        let (res, wall) = self.run_program(&prog.program, "transmit")?;
        let cand = res.x.iter().all(|x| x.is_finite()).then(|| prog.extract(&res, point));
        Ok(self.finish_step(&res, wall, cand, point, &prog.program, "transmit"))
    }

    fn reflection_step(&self, point: &LiftedPoint, rho: f64) -> Result<StepOutcome> {
        let penalty = PenaltyState::at(&point.v, rho);
        let prog = build_v_subproblem(self.ch, point, &penalty, self.layout)?;
        let (res, wall) = self.run_program(&prog.program, "reflection")?;
        let cand = res.x.iter().all(|x| x.is_finite()).then(|| prog.extract(&res, point));
        Ok(self.finish_step(&res, wall, cand, point, &prog.program, "reflection"))
    }

    fn record(&self, iteration: usize, point: &LiftedPoint, rho: f64, w_step: Option<StepRecord>, v_step: Option<StepRecord>) -> IterationRecord {
        IterationRecord {
            iteration,
            objective: point.t,
            rho,
            v_residual_ratio: residual_ratio(&point.v),
            w_residual_ratio: max_w_residual(point, self.config.p_max),
            w_step,
            v_step,
            feasibility_residual: feasibility_residual(point, self.config.p_max),
        }
    }
}

/// Max-min secrecy design for the rate-splitting layout.
pub fn ao_solve(ch: &ChannelRealization, config: &AOConfig) -> Result<AOSolution> {
    ao_solve_layout(ch, config, &StreamLayout::rsma(ch.users()))
}

/// Alternating optimization for an arbitrary stream layout. The reflection
/// step is skipped when the realization has no IRS elements.
pub fn ao_solve_layout(ch: &ChannelRealization, config: &AOConfig, layout: &StreamLayout) -> Result<AOSolution> {
    ao_solve_with(&ClarabelBackend, ch, config, layout)
}

pub fn ao_solve_with(backend: &dyn ConicBackend, ch: &ChannelRealization, config: &AOConfig, layout: &StreamLayout) -> Result<AOSolution> {
    config.validate()?;
    check_layout(ch, layout)?;
    let start = initialize(ch, config, layout);
    run_from(backend, ch, config, layout, start)
}

/// Alternating optimization from a caller-supplied starting point, e.g. the
/// start or the solution of a restricted scheme. Streams the layout does
/// not transmit are switched off in `start`, and its rates are re-derived.
pub fn ao_solve_from(ch: &ChannelRealization, config: &AOConfig, layout: &StreamLayout, start: &LiftedPoint) -> Result<AOSolution> {
    config.validate()?;
    check_layout(ch, layout)?;
    let m = ch.antennas();
    let n1 = ch.elements() + 1;
    let dims_ok = start.users() == ch.users()
        && start.w_common.shape() == (m, m)
        && start.z.shape() == (m, m)
        && start.w_private.iter().all(|w| w.shape() == (m, m))
        && start.v.shape() == (n1, n1);
    if !dims_ok {
        return Err(Error::Dimension {
            context: "starting point",
            expected: n1,
            got: start.v.nrows(),
        });
    }
    let mut point = start.clone();
    if !layout.common {
        point.w_common.fill(crate::linalg::ZERO);
    }
    for (w, on) in point.w_private.iter_mut().zip(&layout.private) {
        if !on {
            w.fill(crate::linalg::ZERO);
        }
    }
    clean(&mut point, config.p_max);
    drop_insecure_streams(&mut point, ch, 0.0);
    tighten_rates(&mut point, ch, layout, RATE_MARGIN);
    run_from(&ClarabelBackend, ch, config, layout, point)
}

fn check_layout(ch: &ChannelRealization, layout: &StreamLayout) -> Result<()> {
    if layout.users() != ch.users() {
        return Err(Error::Dimension {
            context: "stream layout users",
            expected: ch.users(),
            got: layout.users(),
        });
    }
    Ok(())
}

fn run_from(backend: &dyn ConicBackend, ch: &ChannelRealization, config: &AOConfig, layout: &StreamLayout, start: LiftedPoint) -> Result<AOSolution> {
    let runner = Runner {
        ch,
        config,
        layout,
        backend,
        opts: SolveOptions::with_tol(config.eps_solver),
    };
    let mut point = start;
    let mut rho = config.rho;
    let mut trace = AOTrace {
        records: vec![runner.record(0, &point, rho, None, None)],
        status: RunStatus::MaxIterations,
        rho_retried: false,
    };

    if config.p_max == 0.0 {
        trace.status = RunStatus::Converged;
    } else {
        let has_irs = ch.elements() > 0;
        let mut iteration = 0;
        let mut failed = false;
        let mut budget = config.max_outer_iters;
        while iteration < budget {
            iteration += 1;
            let w = match runner.transmit_step(&point)? {
                StepOutcome::Solved(next, rec) => {
                    point = next;
                    rec
                }
                StepOutcome::Failed(rec) => {
                    failed |= rec.status != SolveStatus::Optimal && rec.status != SolveStatus::NumericalLimit;
                    rec
                }
            };
            let v = if has_irs {
                Some(match runner.reflection_step(&point, rho)? {
                    StepOutcome::Solved(next, rec) => {
                        point = next;
                        rec
                    }
                    StepOutcome::Failed(rec) => {
                        failed |= rec.status != SolveStatus::Optimal && rec.status != SolveStatus::NumericalLimit;
                        rec
                    }
                })
            } else {
                None
            };
            trace.records.push(runner.record(iteration, &point, rho, Some(w), v));
            if failed {
                trace.status = RunStatus::SolverFailure;
                break;
            }
            if convergence_check(&trace.objectives(), config.eps_converge) {
                let v_ratio = residual_ratio(&point.v);
                if has_irs && config.rho_retry && !trace.rho_retried && v_ratio > RANK_RETRY_THRESHOLD {
                    rho /= 10.0;
                    trace.rho_retried = true;
                    budget = iteration + config.max_outer_iters;
                    log::info!("V residual ratio {v_ratio:.2e} at convergence; retrying with rho = {rho:e}");
                    continue;
                }
                trace.status = RunStatus::Converged;
                break;
            }
        }
    }

    let (design, report) = extract_design(&point, ch, layout)?;
    Ok(AOSolution {
        design,
        lifted: point,
        trace,
        report,
        layout: layout.clone(),
    })
}
