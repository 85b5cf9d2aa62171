//! Compares the alternating optimization with a brute-force search on the
//! single-antenna, single-element, single-user instance.
//!
//! cargo run --release --example grid_oracle -- [seeds]

use secure_rsma::ao::{ao_solve, AOConfig};
use secure_rsma::channels::{assemble_channels, FadingConfig, SystemGeometry};
use secure_rsma::linalg::dbm_to_watts;
use secure_rsma::oracles::grid_optimum;

fn main() -> secure_rsma::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let geo = SystemGeometry {
        ap_pos: [0.0, 0.0],
        irs_pos: [50.0, 0.0],
        eve_pos: [45.0, 0.0],
        lu_pos: vec![[0.0, 20.0]],
        antennas: 1,
        elements: 1,
    };
    let cfg = AOConfig {
        p_max: dbm_to_watts(20.0),
        ..Default::default()
    };
    println!("seed  grid SR   AO SR     ratio  phase   common private AN");
    for seed in 0..seeds {
        let ch = assemble_channels(&geo, &FadingConfig { seed, ..Default::default() })?;
        let grid = grid_optimum(&ch, cfg.p_max, 360, 20)?;
        let ao = ao_solve(&ch, &cfg)?.min_secrecy_rate();
        let ratio = if grid.min_sr > 0.0 { ao / grid.min_sr } else { f64::NAN };
        let p = |x: f64| x / cfg.p_max;
        println!(
            "{seed:<5} {:<9.5} {:<9.5} {:<6.3} {:<7.3} {:<6.2} {:<7.2} {:.2}",
            grid.min_sr,
            ao,
            ratio,
            grid.phase,
            p(grid.power_common),
            p(grid.power_private),
            p(grid.power_an)
        );
    }
    Ok(())
}
