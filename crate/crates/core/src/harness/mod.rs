//! Monte Carlo experiments: scenario files, parameter sweeps, resumable
//! runs, aggregation and tidy-table export.
//!
//! A run is a grid of cells `(scheme, sweep point, realization)`. Channels for
//! realization `i` are drawn with seed `fading.seed + i`, independently of
//! every other cell, so cells can run in any order and in parallel. When an
//! output directory is given each finished cell is appended to
//! `records.jsonl` immediately and a rerun with the same configuration skips
//! the cells already present.

mod checks;
mod export;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{AOConfig, AOSolution, RunStatus};
use crate::baselines::{solve_scheme, SchemeId};
use crate::channels::{assemble_channels, ChannelRealization, FadingConfig, SystemGeometry};
use crate::error::{Error, Result};
use crate::linalg::dbm_to_watts;

pub use checks::{check_suite, CheckOptions, CheckOutcome, CheckReport};
pub use export::{export, read_result_json, ExportFormat, ExportOptions};

/// Swept parameter and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    PmaxDbm(Vec<f64>),
    NElements(Vec<usize>),
    KUsers(Vec<usize>),
}

impl Sweep {
    pub fn variable(&self) -> &'static str {
        match self {
            Sweep::PmaxDbm(_) => "pmax_dbm",
            Sweep::NElements(_) => "n_elements",
            Sweep::KUsers(_) => "k_users",
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Sweep::PmaxDbm(v) => v.clone(),
            Sweep::NElements(v) | Sweep::KUsers(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::PmaxDbm(v) => v.len(),
            Sweep::NElements(v) | Sweep::KUsers(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything needed to reproduce an experiment. Every field has a default,
/// so a scenario file only needs the entries it changes.
///
/// `geometry.lu_pos` is a pool of user positions; a run with `k` users takes
/// the first `k`. `ao.p_max` is ignored: the budget comes from `pmax_dbm` or
/// the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub geometry: SystemGeometry,
    pub fading: FadingConfig,
    pub k_users: usize,
    pub pmax_dbm: f64,
    pub schemes: Vec<SchemeId>,
    /// `None` runs the single point given by the other fields.
    pub sweep: Option<Sweep>,
    pub realizations: usize,
    pub ao: AOConfig,
    pub output_path: Option<PathBuf>,
}

/// User positions of the bundled scenario: two users for the power and
/// element sweeps, four more for the user-count sweep.
pub const DEFAULT_LU_POSITIONS: [[f64; 2]; 6] = [[0.0, 20.0], [50.0, 5.0], [0.0, -20.0], [50.0, -5.0], [55.0, 0.0], [-20.0, 0.0]];

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            geometry: SystemGeometry {
                ap_pos: [0.0, 0.0],
                irs_pos: [50.0, 0.0],
                eve_pos: [45.0, 0.0],
                lu_pos: DEFAULT_LU_POSITIONS.to_vec(),
                antennas: 2,
                elements: 8,
            },
            fading: FadingConfig::default(),
            k_users: 2,
            pmax_dbm: 25.0,
            schemes: vec![SchemeId::Rsma],
            sweep: None,
            realizations: 20,
            ao: AOConfig::default(),
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        if !self.pmax_dbm.is_finite() {
            return Err(Error::Config(format!("pmax_dbm must be finite, got {}", self.pmax_dbm)));
        }
        self.fading.validate()?;
        let mut ao = self.ao.clone();
        ao.p_max = 1.0;
        ao.validate()?;
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() {
                return Err(Error::Config(format!("sweep over {} has no values", sweep.variable())));
            }
            if let Sweep::PmaxDbm(v) = sweep {
                if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                    return Err(Error::Config(format!("non-finite sweep power {bad}")));
                }
            }
        }
        for point in 0..self.points() {
            self.point_geometry(point)?.validate()?;
        }
        Ok(())
    }

    pub fn points(&self) -> usize {
        self.sweep.as_ref().map_or(1, Sweep::len)
    }

    pub fn sweep_variable(&self) -> &'static str {
        self.sweep.as_ref().map_or("none", Sweep::variable)
    }

    pub fn sweep_value(&self, point: usize) -> f64 {
        self.sweep.as_ref().map_or(0.0, |s| s.values()[point])
    }

    pub fn point_pmax_dbm(&self, point: usize) -> f64 {
        match &self.sweep {
            Some(Sweep::PmaxDbm(v)) => v[point],
            _ => self.pmax_dbm,
        }
    }

    pub fn point_geometry(&self, point: usize) -> Result<SystemGeometry> {
        let mut geo = self.geometry.clone();
        let k = match &self.sweep {
            Some(Sweep::KUsers(v)) => v[point],
            _ => self.k_users,
        };
        if let Some(Sweep::NElements(v)) = &self.sweep {
            geo.elements = v[point];
        }
        if k == 0 || k > geo.lu_pos.len() {
            return Err(Error::Config(format!("{k} users requested but the geometry lists {} positions", geo.lu_pos.len())));
        }
        geo.lu_pos.truncate(k);
        Ok(geo)
    }

    /// Seed of realization `r`: base seed plus index.
    pub fn realization_seed(&self, r: usize) -> u64 {
        self.fading.seed.wrapping_add(r as u64)
    }

    pub fn channels(&self, point: usize, realization: usize) -> Result<ChannelRealization> {
        let geo = self.point_geometry(point)?;
        let fading = FadingConfig {
            seed: self.realization_seed(realization),
            ..self.fading.clone()
        };
        assemble_channels(&geo, &fading)
    }

    pub fn ao_config(&self, point: usize, realization: usize) -> AOConfig {
        AOConfig {
            p_max: dbm_to_watts(self.point_pmax_dbm(point)),
            seed: self.ao.seed.wrapping_add(realization as u64),
            ..self.ao.clone()
        }
    }

    /// The configuration with output location and realization count cleared:
    /// two runs can share a journal iff their fingerprints match.
    fn fingerprint(&self) -> Self {
        Self {
            output_path: None,
            realizations: 0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Converged,
    MaxIterations,
    SolverFailure,
    /// The scheme could not run at all (see `error`).
    Error,
}

impl From<RunStatus> for CellStatus {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Converged => CellStatus::Converged,
            RunStatus::MaxIterations => CellStatus::MaxIterations,
            RunStatus::SolverFailure => CellStatus::SolverFailure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user: usize,
    pub sr: f64,
    pub common_share: f64,
    pub private_sr: f64,
    pub r_p: f64,
    pub r_pe: f64,
    pub r_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub min_sr: f64,
    pub lifted_t: f64,
    pub power_common: f64,
    pub power_private: f64,
    pub power_an: f64,
    /// Decodable common rate `min_k R_c,k`.
    pub r_c: f64,
    pub r_c_e: f64,
    pub common_share_sum: f64,
    pub iterations: usize,
    pub v_residual: f64,
    pub w_residual: f64,
    pub wall_time: f64,
    pub users: Vec<UserRecord>,
}

impl RunMetrics {
    pub fn from_solution(sol: &AOSolution, wall_time: f64) -> Self {
        let rep = &sol.report;
        let d = &sol.design;
        let last = sol.trace.final_record();
        let private = rep.private_secrecy();
        Self {
            min_sr: rep.min_sr,
            lifted_t: sol.lifted.t,
            power_common: d.power_common(),
            power_private: d.power_private(),
            power_an: d.power_noise(),
            r_c: rep.r_c_cap,
            r_c_e: rep.r_c_e,
            common_share_sum: d.r_c_sec.iter().sum(),
            iterations: sol.trace.iterations(),
            v_residual: last.map_or(0.0, |r| r.v_residual_ratio),
            w_residual: last.map_or(0.0, |r| r.w_residual_ratio),
            wall_time,
            users: (0..d.users())
                .map(|k| UserRecord {
                    user: k,
                    sr: rep.sr_k[k],
                    common_share: d.r_c_sec[k],
                    private_sr: private[k],
                    r_p: rep.r_p_k[k],
                    r_pe: rep.r_pe_k[k],
                    r_c: rep.r_c_k[k],
                })
                .collect(),
        }
    }

    pub fn total_power(&self) -> f64 {
        self.power_common + self.power_private + self.power_an
    }
}

/// One `(scheme, point, realization)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scheme: SchemeId,
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub point: usize,
    pub realization: usize,
    pub seed: u64,
    pub p_max: f64,
    pub status: CellStatus,
    pub error: Option<String>,
    pub metrics: Option<RunMetrics>,
}

impl RunRecord {
    fn key(&self) -> (SchemeId, usize, usize) {
        (self.scheme, self.point, self.realization)
    }

    pub fn min_sr(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.min_sr)
    }
}

/// Mean and sample deviation of the min secrecy rate at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: SchemeId,
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub runs: usize,
    pub failed: usize,
    pub mean_min_sr: f64,
    pub std_min_sr: f64,
    pub mean_power_common: f64,
    pub mean_power_private: f64,
    pub mean_power_an: f64,
    pub mean_common_share: f64,
    pub mean_private_sr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResult {
    pub fn from_records(config: ExperimentConfig, mut records: Vec<RunRecord>) -> Self {
        let order = |s: SchemeId| config.schemes.iter().position(|x| *x == s).unwrap_or(usize::MAX);
        records.sort_by_key(|r| (order(r.scheme), r.point, r.realization));
        let summary = summarize(&config, &records);
        Self { config, records, summary }
    }

    pub fn records_for(&self, scheme: SchemeId, point: usize) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(move |r| r.scheme == scheme && r.point == point)
    }

    pub fn summary_for(&self, scheme: SchemeId, point: usize) -> Option<&SummaryRow> {
        let value = self.config.sweep_value(point);
        self.summary.iter().find(|s| s.scheme == scheme && s.sweep_value == value)
    }

    pub fn failed_cells(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| r.metrics.is_none())
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn summarize(config: &ExperimentConfig, records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &scheme in &config.schemes {
        for point in 0..config.points() {
            let cell: Vec<&RunRecord> = records.iter().filter(|r| r.scheme == scheme && r.point == point).collect();
            if cell.is_empty() {
                continue;
            }
            let ok: Vec<&RunMetrics> = cell.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let col = |f: &dyn Fn(&RunMetrics) -> f64| mean(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
            let srs: Vec<f64> = ok.iter().map(|m| m.min_sr).collect();
            rows.push(SummaryRow {
                scheme,
                sweep_variable: config.sweep_variable().into(),
                sweep_value: config.sweep_value(point),
                runs: cell.len(),
                failed: cell.len() - ok.len(),
                mean_min_sr: mean(&srs),
                std_min_sr: sample_std(&srs),
                mean_power_common: col(&|m| m.power_common),
                mean_power_private: col(&|m| m.power_private),
                mean_power_an: col(&|m| m.power_an),
                mean_common_share: col(&|m| m.common_share_sum / m.users.len().max(1) as f64),
                mean_private_sr: col(&|m| m.users.iter().map(|u| u.private_sr).sum::<f64>() / m.users.len().max(1) as f64),
            });
        }
    }
    rows
}

/// Runs one cell; scheme errors become `Error` records instead of aborting.
pub fn run_cell(config: &ExperimentConfig, scheme: SchemeId, point: usize, realization: usize) -> RunRecord {
    let ao = config.ao_config(point, realization);
    let mut record = RunRecord {
        scheme,
        sweep_variable: config.sweep_variable().into(),
        sweep_value: config.sweep_value(point),
        point,
        realization,
        seed: config.realization_seed(realization),
        p_max: ao.p_max,
        status: CellStatus::Error,
        error: None,
        metrics: None,
    };
    let start = Instant::now();
    let outcome = config.channels(point, realization).and_then(|ch| solve_scheme(scheme, &ch, &ao));
    match outcome {
        Ok(sol) => {
            record.status = sol.trace.status.into();
            record.metrics = Some(RunMetrics::from_solution(&sol, start.elapsed().as_secs_f64()));
        }
        Err(e) => {
            log::warn!("{scheme} point {point} realization {realization} failed: {e}");
            record.error = Some(e.to_string());
        }
    }
    record
}

const JOURNAL: &str = "records.jsonl";

#[derive(Serialize, Deserialize)]
struct JournalHeader {
    fingerprint: ExperimentConfig,
}

// loads finished cells from an existing journal, refusing a different configuration
fn read_journal(path: &Path, config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let Some(first) = lines.next() else {
        return Ok(Vec::new());
    };
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: JournalHeader = serde_json::from_str(&first).map_err(|e| Error::Config(format!("{}: bad journal header: {e}", path.display())))?;
    if header.fingerprint != config.fingerprint() {
        return Err(Error::Config(format!(
            "{} was written by a different configuration; remove it or choose another output directory",
            path.display()
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RunRecord>(&line) {
            Ok(r) => records.push(r),
            // a run killed mid-write leaves a truncated last line
            Err(e) => log::warn!("{}: skipping unreadable line {}: {e}", path.display(), i + 2),
        }
    }
    Ok(records)
}

/// Runs every cell in memory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_in(config, None)
}

/// Runs every cell not already journaled in `out_dir` (if given), appending
/// each finished cell to the journal as soon as it completes.
pub fn run_experiment_in(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentResult> {
    config.validate()?;
    let mut done: BTreeMap<(SchemeId, usize, usize), RunRecord> = BTreeMap::new();
    let mut journal = None;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(JOURNAL);
        let fresh = !path.exists() || fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        if !fresh {
            for r in read_journal(&path, config)? {
                if r.realization < config.realizations && config.schemes.contains(&r.scheme) {
                    done.insert(r.key(), r);
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        if fresh {
            let header = serde_json::to_string(&JournalHeader { fingerprint: config.fingerprint() })?;
            writeln!(file, "{header}").map_err(|e| Error::io(&path, e))?;
        }
        journal = Some((Mutex::new(file), path));
    }

    let mut cells = Vec::new();
    for &scheme in &config.schemes {
        for point in 0..config.points() {
            for r in 0..config.realizations {
                if !done.contains_key(&(scheme, point, r)) {
                    cells.push((scheme, point, r));
                }
            }
        }
    }
    log::info!("{} cells to run, {} already done", cells.len(), done.len());

    let fresh: Vec<RunRecord> = cells
        .par_iter()
        .map(|&(scheme, point, r)| -> Result<RunRecord> {
            let record = run_cell(config, scheme, point, r);
            if let Some((file, path)) = &journal {
                let line = serde_json::to_string(&record)?;
                let mut f = file.lock().expect("journal lock");
                writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| Error::io(path, e))?;
            }
            Ok(record)
        })
        .collect::<Result<_>>()?;

    let records = done.into_values().chain(fresh).collect();
    Ok(ExperimentResult::from_records(config.clone(), records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            geometry: SystemGeometry {
                elements: 2,
                ..ExperimentConfig::default().geometry
            },
            realizations: 1,
            ao: AOConfig {
                max_outer_iters: 5,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn default_config_round_trips_and_validates() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        // every field is optional
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), cfg);
        assert!(ExperimentConfig::from_json(r#"{"realisations": 3}"#).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            ExperimentConfig { realizations: 0, ..Default::default() },
            ExperimentConfig { schemes: vec![], ..Default::default() },
            ExperimentConfig {
                sweep: Some(Sweep::KUsers(vec![2, 7])),
                ..Default::default()
            },
            ExperimentConfig {
                sweep: Some(Sweep::PmaxDbm(vec![])),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn sweep_points_set_the_right_parameter() {
        let cfg = ExperimentConfig {
            sweep: Some(Sweep::KUsers(vec![1, 3])),
            ..Default::default()
        };
        assert_eq!(cfg.point_geometry(1).unwrap().lu_pos, DEFAULT_LU_POSITIONS[..3].to_vec());
        let cfg = ExperimentConfig {
            sweep: Some(Sweep::NElements(vec![0, 16])),
            ..Default::default()
        };
        assert_eq!(cfg.point_geometry(1).unwrap().elements, 16);
        assert_eq!(cfg.point_geometry(0).unwrap().users(), 2);
        let cfg = ExperimentConfig {
            sweep: Some(Sweep::PmaxDbm(vec![10.0, 30.0])),
            ..Default::default()
        };
        assert!((cfg.ao_config(1, 0).p_max - 1.0).abs() < 1e-15);
        assert_eq!(cfg.realization_seed(3), cfg.fading.seed + 3);
    }

    #[test]
    fn single_cell_gives_one_record() {
        let res = run_experiment(&tiny()).unwrap();
        assert_eq!(res.records.len(), 1);
        assert_eq!(res.summary.len(), 1);
        assert_eq!(res.summary[0].runs, 1);
    }

    #[test]
    fn failing_scheme_is_recorded_not_fatal() {
        let cfg = ExperimentConfig {
            k_users: 3,
            schemes: vec![SchemeId::Noma2, SchemeId::MulpNoIrs],
            ..tiny()
        };
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.records.len(), 2);
        assert_eq!(res.failed_cells().count(), 1);
        let bad = res.failed_cells().next().unwrap();
        assert_eq!(bad.status, CellStatus::Error);
        assert!(bad.error.as_ref().unwrap().contains("two users"));
        assert_eq!(res.summary[0].failed, 1);
    }

    #[test]
    fn seeds_are_isolated_per_realization() {
        let cfg = ExperimentConfig { realizations: 2, ..tiny() };
        let both = run_experiment(&cfg).unwrap();
        let second = run_cell(&cfg, SchemeId::Rsma, 0, 1);
        assert_eq!(both.records[1].min_sr(), second.min_sr());
    }

    #[test]
    fn resume_skips_finished_cells_and_checks_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { realizations: 2, ..tiny() };
        let one = ExperimentConfig { realizations: 1, ..cfg.clone() };
        run_experiment_in(&one, Some(dir.path())).unwrap();
        let resumed = run_experiment_in(&cfg, Some(dir.path())).unwrap();
        let fresh = run_experiment(&cfg).unwrap();
        assert_eq!(resumed.summary, fresh.summary);
        let lines = fs::read_to_string(dir.path().join(JOURNAL)).unwrap().lines().count();
        assert_eq!(lines, 3);
        // nothing left to do: the journal does not grow
        run_experiment_in(&cfg, Some(dir.path())).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join(JOURNAL)).unwrap().lines().count(), 3);

        let other = ExperimentConfig { pmax_dbm: 10.0, ..cfg };
        assert!(matches!(run_experiment_in(&other, Some(dir.path())), Err(Error::Config(_))));
    }
}
