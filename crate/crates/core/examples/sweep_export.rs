//! Runs a small power sweep through the Monte Carlo harness, writes CSV and
//! JSON results and reads the JSON back.
//!
//! cargo run --release --example sweep_export -- [out_dir]

use std::path::PathBuf;

use secure_rsma::ao::AOConfig;
use secure_rsma::baselines::SchemeId;
use secure_rsma::harness::{export, read_result_json, run_experiment_in, ExperimentConfig, ExportFormat, ExportOptions, Sweep};

fn main() -> secure_rsma::Result<()> {
    env_logger::init();
    let out: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("secure-rsma-sweep"));
    let mut cfg = ExperimentConfig {
        schemes: vec![SchemeId::Rsma, SchemeId::Mulp, SchemeId::RsmaNoIrs],
        sweep: Some(Sweep::PmaxDbm(vec![10.0, 20.0, 30.0])),
        realizations: 3,
        ao: AOConfig {
            max_outer_iters: 20,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.geometry.elements = 4;

    // finished cells are journaled in `out`, so a second run only reloads them
    let result = run_experiment_in(&cfg, Some(&out))?;
    for p in export(&result, &out, ExportFormat::Csv, ExportOptions::default())? {
        println!("wrote {}", p.display());
    }
    let json = export(&result, &out, ExportFormat::Json, ExportOptions { include_timing: false })?;
    let back = read_result_json(&json[0])?;
    println!("{} records, {} failed, json round trip rows {}", result.records.len(), result.failed_cells().count(), back.records.len());

    println!("{:<13} {:>6} {:>10} {:>8} {:>10}", "scheme", "P_dBm", "mean SR", "std", "AN share");
    for s in &result.summary {
        let total = s.mean_power_common + s.mean_power_private + s.mean_power_an;
        let an = if total > 0.0 { s.mean_power_an / total } else { 0.0 };
        println!("{:<13} {:>6} {:>10.4} {:>8.4} {:>10.3}", s.scheme.as_str(), s.sweep_value, s.mean_min_sr, s.std_min_sr, an);
    }
    Ok(())
}
