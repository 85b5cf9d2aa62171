use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use secure_rsma::ao::AOSolution;
use secure_rsma::baselines::{solve_scheme, SchemeId};
use secure_rsma::harness::{check_suite, export, run_experiment_in, CheckOptions, ExperimentConfig, ExportFormat, ExportOptions};
use secure_rsma::{Error, Result};

/// Max-min secrecy-rate beamforming for IRS-aided rate-splitting downlinks.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one channel realization and print its rates and trace.
    Solve(Common),
    /// Run a scenario file over its sweep and realizations.
    Sweep(Common),
    /// Run the invariant and oracle suite on small seeded instances.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON); defaults to the built-in scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scheme(s), comma separated: rsma, mulp, noma2, rsma_no_irs, mulp_no_irs, noma2_no_irs.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<SchemeId>,
    /// Base channel seed (solve, sweep) or first check seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Realizations per sweep point, or seeded instances per check.
    #[arg(long)]
    realizations: Option<usize>,
    /// Trace file (solve), result directory (sweep) or CSV report (check).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = match &cli.command {
        Command::Solve(c) | Command::Sweep(c) | Command::Check(c) => c.verbose,
    };
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match cli.command {
        Command::Solve(c) => solve(c),
        Command::Sweep(c) => sweep(c),
        Command::Check(c) => check(c),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if !c.scheme.is_empty() {
        cfg.schemes = c.scheme.clone();
    }
    if let Some(s) = c.seed {
        cfg.fading.seed = s;
    }
    if let Some(r) = c.realizations {
        cfg.realizations = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn solve(c: Common) -> Result<ExitCode> {
    let cfg = load(&c)?;
    if c.scheme.len() > 1 {
        return Err(Error::Config("solve takes a single --scheme".into()));
    }
    let scheme = cfg.schemes[0];
    let ch = cfg.channels(0, 0)?;
    let sol = solve_scheme(scheme, &ch, &cfg.ao_config(0, 0))?;
    if let Some(path) = &c.out {
        let f = File::create(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        sol.trace.write_json_lines(BufWriter::new(f))?;
    }
    match c.format.unwrap_or(Format::Text) {
        Format::Json => {
            let out = serde_json::json!({
                "scheme": scheme,
                "seed": cfg.fading.seed,
                "p_max": cfg.ao_config(0, 0).p_max,
                "status": sol.trace.status,
                "report": sol.report,
                "r_c_sec": sol.design.r_c_sec,
                "lifted_objective": sol.lifted_objective(),
                "trace": sol.trace.without_timing().records,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Format::Text => print_solution(scheme, cfg.fading.seed, &sol),
        Format::Csv => return Err(Error::Config("solve prints text or json".into())),
    }
    Ok(ExitCode::SUCCESS)
}

fn print_solution(scheme: SchemeId, seed: u64, sol: &AOSolution) {
    let rep = &sol.report;
    let d = &sol.design;
    println!("scheme {scheme}, seed {seed}: {:?} after {} iterations", sol.trace.status, sol.trace.iterations());
    println!("min secrecy rate {:.6} bps/Hz (lifted {:.6})", rep.min_sr, sol.lifted_objective());
    println!("power  common {:.4e}  private {:.4e}  AN {:.4e}  W", d.power_common(), d.power_private(), d.power_noise());
    println!("common R_c {:.4}  R_c,e {:.4}", rep.r_c_cap, rep.r_c_e);
    println!("user   R_c,k    R_p,k    R_pe,k   r_c_sec  sr");
    for k in 0..rep.sr_k.len() {
        println!("{k:<6} {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:.4}", rep.r_c_k[k], rep.r_p_k[k], rep.r_pe_k[k], d.r_c_sec[k], rep.sr_k[k]);
    }
    println!("iter   objective    V residual   W residual");
    for r in &sol.trace.records {
        println!("{:<6} {:<12.6} {:<12.3e} {:.3e}", r.iteration, r.objective, r.v_residual_ratio, r.w_residual_ratio);
    }
}

fn sweep(c: Common) -> Result<ExitCode> {
    if c.config.is_none() {
        return Err(Error::Config("sweep needs --config <scenario.json>".into()));
    }
    let cfg = load(&c)?;
    let dir = c.out.clone().or_else(|| cfg.output_path.clone());
    let result = run_experiment_in(&cfg, dir.as_deref())?;
    let format = match c.format {
        None | Some(Format::Csv) => ExportFormat::Csv,
        Some(Format::Json) => ExportFormat::Json,
        Some(Format::Text) => return Err(Error::Config("sweep exports csv or json".into())),
    };
    if let Some(dir) = &dir {
        for p in export(&result, dir, format, ExportOptions::default())? {
            println!("wrote {}", p.display());
        }
    }
    println!("scheme        {:<10} runs  failed  mean_min_sr  std", cfg.sweep_variable());
    for s in &result.summary {
        println!("{:<13} {:<10} {:<5} {:<7} {:<12.4} {:.4}", s.scheme.as_str(), s.sweep_value, s.runs, s.failed, s.mean_min_sr, s.std_min_sr);
    }
    Ok(ExitCode::SUCCESS)
}

fn check(c: Common) -> Result<ExitCode> {
    if c.config.is_some() || !c.scheme.is_empty() {
        log::warn!("check runs fixed small instances; --config and --scheme are ignored");
    }
    let defaults = CheckOptions::default();
    let opts = CheckOptions {
        seed: c.seed.unwrap_or(defaults.seed),
        instances: c.realizations.unwrap_or(defaults.instances),
    };
    let report = check_suite(&opts)?;
    if let Some(path) = &c.out {
        report.write_csv(path)?;
    }
    match c.format.unwrap_or(Format::Text) {
        Format::Text => print!("{}", report.to_text()),
        Format::Csv => print!("{}", report.to_csv()?),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
