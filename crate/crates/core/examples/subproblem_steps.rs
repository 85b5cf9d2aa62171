//! One transmit step and one reflection step by hand, starting from the
//! standard initialization, to show what each convex program returns.
//!
//! cargo run --release --example subproblem_steps -- [seed]

use secure_rsma::ao::{initialize, AOConfig};
use secure_rsma::channels::{assemble_channels, FadingConfig, SystemGeometry};
use secure_rsma::conic::solve;
use secure_rsma::linalg::dbm_to_watts;
use secure_rsma::rates::{tighten_rates, StreamLayout};
use secure_rsma::subproblems::{build_v_subproblem, build_w_subproblem, extract_rank_one, PenaltyState, TransmitOptions};

fn main() -> secure_rsma::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let geo = SystemGeometry {
        ap_pos: [0.0, 0.0],
        irs_pos: [50.0, 0.0],
        eve_pos: [45.0, 0.0],
        lu_pos: vec![[0.0, 20.0], [50.0, 5.0]],
        antennas: 2,
        elements: 4,
    };
    let ch = assemble_channels(&geo, &FadingConfig { seed, ..Default::default() })?;
    let cfg = AOConfig {
        p_max: dbm_to_watts(20.0),
        ..Default::default()
    };
    let layout = StreamLayout::rsma(2);
    let start = initialize(&ch, &cfg, &layout);
    println!("start: t = {:.4}, r_c = {:.3?}, r_p = {:.3?}", start.t, start.r_c, start.r_p);

    let w_prog = build_w_subproblem(&ch, &start.v, &start, cfg.p_max, &layout, TransmitOptions::default())?;
    println!(
        "transmit program: {} coordinates, {} affine rows, {} exp cones, {} PSD blocks",
        w_prog.program.num_coords(),
        w_prog.program.affine.len(),
        w_prog.program.exp_cones.len(),
        w_prog.program.psd.len()
    );
    let res = solve(&w_prog.program, cfg.eps_solver)?;
    let mut after_w = w_prog.extract(&res, &start);
    println!("  {:?}, program t = {:.4}", res.status, res.objective);
    tighten_rates(&mut after_w, &ch, &layout, 1e-8);
    println!("  exact rates at the new covariances give t = {:.4}", after_w.t);
    for (name, w) in std::iter::once(("common", &after_w.w_common)).chain(after_w.w_private.iter().map(|w| ("private", w))) {
        let (_, residual) = extract_rank_one(w, 1e-9);
        println!("  {name:<8} power {:.3e}, rank-one residual {:.1e}", secure_rsma::linalg::trace_re(w), residual);
    }

    let penalty = PenaltyState::at(&after_w.v, cfg.rho);
    let v_prog = build_v_subproblem(&ch, &after_w, &penalty, &layout)?;
    let res = solve(&v_prog.program, cfg.eps_solver)?;
    let mut after_v = v_prog.extract(&res, &after_w);
    tighten_rates(&mut after_v, &ch, &layout, 1e-8);
    let (_, residual) = extract_rank_one(&after_v.v, 1e-9);
    println!("reflection program: {:?}, t = {:.4}, V rank-one residual {:.1e}", res.status, after_v.t, residual);
    Ok(())
}
