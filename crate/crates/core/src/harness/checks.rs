use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ao::{ao_solve, AOConfig, AOSolution};
use crate::channels::{assemble_channels, stream_rng, ChannelRealization, FadingConfig, SystemGeometry};
use crate::error::{Error, Result};
use crate::linalg::dbm_to_watts;
use crate::oracles;
use crate::rates::validate_design;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seed: u64,
    /// Seeded instances per randomized check.
    pub instances: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { seed: 0, instances: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Comparison {
    fn symbol(self) -> &'static str {
        match self {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
        }
    }

    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtMost => value <= threshold,
            Comparison::AtLeast => value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, value: f64, comparison: Comparison, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            // NaN never passes
            passed: comparison.holds(value, threshold),
            value,
            comparison,
            threshold,
            detail,
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            comparison: Comparison::AtMost,
            threshold: 0.0,
            detail: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub options: CheckOptions,
    pub outcomes: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }

    /// Table with a fixed column order and no timing, so identical seeds give
    /// identical bytes.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["check", "passed", "value", "comparison", "threshold", "detail"])?;
        for o in &self.outcomes {
            w.write_record([
                o.name.clone(),
                o.passed.to_string(),
                format!("{:e}", o.value),
                o.comparison.symbol().to_string(),
                format!("{:e}", o.threshold),
                o.detail.clone(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Domain(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Domain(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for o in &self.outcomes {
            let _ = writeln!(
                s,
                "{} {:<22} {:>12.4e} {} {:<9.3e} {}",
                if o.passed { "PASS" } else { "FAIL" },
                o.name,
                o.value,
                o.comparison.symbol(),
                o.threshold,
                o.detail
            );
        }
        s
    }
}

fn small_instance(seed: u64, users: usize, antennas: usize, elements: usize) -> Result<ChannelRealization> {
    let lu = [[0.0, 20.0], [50.0, 5.0]];
    let geo = SystemGeometry {
        ap_pos: [0.0, 0.0],
        irs_pos: [50.0, 0.0],
        eve_pos: [45.0, 0.0],
        lu_pos: lu[..users].to_vec(),
        antennas,
        elements,
    };
    assemble_channels(&geo, &FadingConfig { seed, ..Default::default() })
}

fn push(out: &mut Vec<CheckOutcome>, name: &str, r: Result<CheckOutcome>) {
    out.push(r.unwrap_or_else(|e| CheckOutcome::failed(name, &e)));
}

/// Runs the invariant and oracle suite on small seeded instances: conic
/// closed forms, embedding invariance, Taylor gradients and dominance, AO
/// monotonicity, rank, extraction, feasibility and accounting on
/// `M = 2, K = 2, N = 4`, and the grid band on `M = N = K = 1`.
///
/// Individual check failures are recorded in the report, not returned.
pub fn check_suite(opts: &CheckOptions) -> Result<CheckReport> {
    if opts.instances == 0 {
        return Err(Error::Config("check suite needs at least one instance".into()));
    }
    let seeds: Vec<u64> = (0..opts.instances as u64).map(|i| opts.seed + i).collect();
    let p_max = dbm_to_watts(20.0);
    let mut out = Vec::new();

    push(
        &mut out,
        "conic_examples",
        oracles::conic_examples().map(|e| {
            let worst = e.iter().copied().fold(0.0, f64::max);
            CheckOutcome::new("conic_examples", worst, Comparison::AtMost, 1e-6, format!("errors {:.1e} {:.1e} {:.1e}", e[0], e[1], e[2]))
        }),
    );
    push(
        &mut out,
        "embedding_invariance",
        oracles::embedding_invariance(100, opts.seed).map(|v| CheckOutcome::new("embedding_invariance", v, Comparison::AtMost, 1e-10, "100 random matrices".into())),
    );

    let taylor = || -> Result<(f64, oracles::DominanceCheck)> {
        let mut grad = 0.0f64;
        let mut dom = oracles::DominanceCheck { violation: 0.0, base_gap: 0.0 };
        for &s in &seeds {
            let ch = small_instance(s, 2, 2, 4)?;
            let mut rng = stream_rng(s, 0x7a1);
            let point = oracles::random_lifted_point(&ch, p_max, &mut rng);
            grad = grad.max(oracles::max_gradient_error(&ch, &point, p_max, &mut rng)?);
            let d = oracles::taylor_dominance(&ch, &point, p_max, 100, &mut rng)?;
            dom.violation = dom.violation.max(d.violation);
            dom.base_gap = dom.base_gap.max(d.base_gap);
        }
        Ok((grad, dom))
    };
    match taylor() {
        Ok((grad, dom)) => {
            let n = seeds.len();
            out.push(CheckOutcome::new("taylor_gradients", grad, Comparison::AtMost, 1e-5, format!("{n} points, relative to max(|g|, 1e-3)")));
            out.push(CheckOutcome::new("taylor_dominance", dom.violation, Comparison::AtMost, 1e-9, format!("{n} bases x 100 samples per expansion")));
            out.push(CheckOutcome::new("taylor_base_gap", dom.base_gap, Comparison::AtMost, 1e-10, "bound minus term at the base".into()));
        }
        Err(e) => {
            for name in ["taylor_gradients", "taylor_dominance", "taylor_base_gap"] {
                out.push(CheckOutcome::failed(name, &e));
            }
        }
    }

    let config = AOConfig { p_max, ..Default::default() };
    let runs: Result<Vec<(ChannelRealization, AOSolution)>> = seeds
        .iter()
        .map(|&s| {
            let ch = small_instance(s, 2, 2, 4)?;
            let sol = ao_solve(&ch, &AOConfig { seed: s, ..config.clone() })?;
            Ok((ch, sol))
        })
        .collect();
    match runs {
        Ok(runs) => ao_checks(&mut out, &runs, &config)?,
        Err(e) => {
            for name in AO_CHECKS {
                out.push(CheckOutcome::failed(name, &e));
            }
        }
    }

    let grid = || -> Result<(f64, f64, usize)> {
        let mut above = f64::NEG_INFINITY;
        let mut ratio = f64::INFINITY;
        let mut positive = 0;
        for &s in &seeds {
            let ch = small_instance(s, 1, 1, 1)?;
            let sol = ao_solve(&ch, &AOConfig { seed: s, ..config.clone() })?;
            let opt = oracles::grid_optimum(&ch, p_max, 720, 100)?;
            above = above.max(sol.min_secrecy_rate() - opt.min_sr);
            if opt.min_sr > 0.0 {
                positive += 1;
                ratio = ratio.min(sol.min_secrecy_rate() / opt.min_sr);
            }
        }
        Ok((above, ratio, positive))
    };
    match grid() {
        Ok((above, ratio, positive)) => {
            let n = seeds.len();
            out.push(CheckOutcome::new("grid_upper", above, Comparison::AtMost, 1e-3, format!("AO minus grid optimum, M = N = K = 1, {n} seeds")));
            out.push(CheckOutcome::new("grid_band", ratio, Comparison::AtLeast, 0.95, format!("AO over grid optimum, {positive} of {n} seeds with a positive optimum")));
        }
        Err(e) => {
            out.push(CheckOutcome::failed("grid_upper", &e));
            out.push(CheckOutcome::failed("grid_band", &e));
        }
    }

    Ok(CheckReport { options: *opts, outcomes: out })
}

const AO_CHECKS: [&str; 6] = ["ao_monotone", "ao_convergence", "ao_rank", "extraction_gap", "design_feasibility", "sr_accounting"];

fn ao_checks(out: &mut Vec<CheckOutcome>, runs: &[(ChannelRealization, AOSolution)], config: &AOConfig) -> Result<()> {
    let n = runs.len();
    let mut decrease = 0.0f64;
    let mut converged = 0;
    let mut rank = 0.0f64;
    let mut gap = f64::NEG_INFINITY;
    let mut infeasible = 0.0f64;
    let mut accounting = 0.0f64;
    for (ch, sol) in runs {
        for w in sol.trace.records.windows(2) {
            decrease = decrease.max((w[0].objective - w[1].objective) / w[0].objective.abs().max(1.0));
        }
        if sol.trace.converged() {
            converged += 1;
            if let Some(last) = sol.trace.final_record() {
                rank = rank.max(last.v_residual_ratio).max(last.w_residual_ratio);
            }
        }
        gap = gap.max(sol.lifted_objective() - sol.min_secrecy_rate());
        infeasible = infeasible.max(validate_design(&sol.design, ch, config.p_max)?.max_violation());
        let rep = &sol.report;
        let private = rep.private_secrecy();
        for k in 0..ch.users() {
            accounting = accounting.max((rep.sr_k[k] - sol.design.r_c_sec[k] - private[k]).abs());
        }
        let budget = rep.common_secrecy_budget();
        accounting = accounting.max(sol.design.r_c_sec.iter().sum::<f64>() - budget.max(0.0));
    }
    let eps = config.eps_converge;
    out.push(CheckOutcome::new("ao_monotone", decrease, Comparison::AtMost, 10.0 * eps, format!("{n} runs, relative drop per iteration")));
    out.push(CheckOutcome::new(
        "ao_convergence",
        converged as f64 / n as f64,
        Comparison::AtLeast,
        1.0,
        format!("{converged} of {n} within {} iterations", config.max_outer_iters),
    ));
    out.push(CheckOutcome::new("ao_rank", rank, Comparison::AtMost, 1e-3, "largest V or W residual ratio at convergence".into()));
    out.push(CheckOutcome::new("extraction_gap", gap, Comparison::AtMost, 0.05, "lifted objective minus vector-form min SR".into()));
    out.push(CheckOutcome::new("design_feasibility", infeasible, Comparison::AtMost, 1e-6, "largest constraint violation".into()));
    out.push(CheckOutcome::new("sr_accounting", accounting, Comparison::AtMost, 1e-6, "per-user sr decomposition and common budget".into()));
    Ok(())
}
