//! Solves every scheme on the same seeded channels and prints the min
//! secrecy rate of each, plus the RSMA runs warm-started from each sub-scheme.
//!
//! cargo run --release --example scheme_comparison -- [seeds] [elements]

use secure_rsma::ao::AOConfig;
use secure_rsma::baselines::{solve_rsma_matched, solve_scheme, SchemeId};
use secure_rsma::channels::{assemble_channels, FadingConfig, SystemGeometry};
use secure_rsma::linalg::dbm_to_watts;

const SCHEMES: [SchemeId; 6] = [
    SchemeId::Rsma,
    SchemeId::Mulp,
    SchemeId::Noma2,
    SchemeId::RsmaNoIrs,
    SchemeId::MulpNoIrs,
    SchemeId::Noma2NoIrs,
];

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
    print!("seed");
    for s in SCHEMES {
        print!(" {:>13}", s.as_str());
    }
    println!(" {:>13} {:>13}", "rsma|mulp", "rsma|noma2");
    for seed in 0..seeds {
        let ch = assemble_channels(&geo, &FadingConfig { seed, ..Default::default() })?;
        print!("{seed:<4}");
        for s in SCHEMES {
            print!(" {:>13.4}", solve_scheme(s, &ch, &cfg)?.min_secrecy_rate());
        }
        // RSMA contains both baselines, so starting it where they start can only help
        for sub in [SchemeId::Mulp, SchemeId::Noma2] {
            print!(" {:>13.4}", solve_rsma_matched(sub, &ch, &cfg)?.min_secrecy_rate());
        }
        println!();
    }
    Ok(())
}
