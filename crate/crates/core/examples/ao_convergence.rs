//! Runs the alternating optimization on a few seeded two-user instances and
//! prints the per-iteration objective and rank residuals.
//!
//! cargo run --release --example ao_convergence -- [seeds] [elements]

use secure_rsma::ao::{ao_solve, AOConfig};
use secure_rsma::channels::{assemble_channels, FadingConfig, SystemGeometry};
use secure_rsma::linalg::dbm_to_watts;

fn main() -> secure_rsma::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let elements: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let geo = SystemGeometry {
        ap_pos: [0.0, 0.0],
        irs_pos: [50.0, 0.0],
        eve_pos: [45.0, 0.0],
        lu_pos: vec![[0.0, 20.0], [50.0, 5.0]],
        antennas: 2,
        elements,
    };
    let cfg = AOConfig {
        p_max: dbm_to_watts(20.0),
        ..Default::default()
    };
    for seed in 0..seeds {
        let ch = assemble_channels(&geo, &FadingConfig { seed, ..Default::default() })?;
        let start = std::time::Instant::now();
        let sol = ao_solve(&ch, &cfg)?;
        println!(
            "seed {seed}: status {:?}, {} iterations, lifted t {:.4}, reported min SR {:.4}, {:.1}s",
            sol.trace.status,
            sol.trace.iterations(),
            sol.lifted_objective(),
            sol.min_secrecy_rate(),
            start.elapsed().as_secs_f64()
        );
        for r in &sol.trace.records {
            let status = |s: &Option<secure_rsma::ao::StepRecord>| s.as_ref().map(|s| format!("{:?}{}", s.status, if s.accepted { "" } else { "(rejected)" })).unwrap_or_default();
            println!(
                "  it {:>2}  t {:.6}  V res {:.2e}  W res {:.2e}  {} {}",
                r.iteration,
                r.objective,
                r.v_residual_ratio,
                r.w_residual_ratio,
                status(&r.w_step),
                status(&r.v_step)
            );
        }
    }
    Ok(())
}
