//! Evaluates a hand-built design: SINRs, rates, secrecy rates and the
//! constraint check, with and without artificial noise.
//!
//! cargo run --release --example rates

use num_complex::Complex64;
use secure_rsma::channels::{assemble_channels, effective_row, FadingConfig, Receiver, SystemGeometry};
use secure_rsma::linalg::{dbm_to_watts, CMat, CVec};
use secure_rsma::rates::{allocate_common_rate, rate_report, validate_design, TransmitDesign};

fn main() -> secure_rsma::Result<()> {
    let geo = SystemGeometry {
        ap_pos: [0.0, 0.0],
        irs_pos: [50.0, 0.0],
        eve_pos: [45.0, 0.0],
        lu_pos: vec![[0.0, 20.0], [50.0, 5.0]],
        antennas: 2,
        elements: 4,
    };
    let ch = assemble_channels(&geo, &FadingConfig::default())?;
    let p = dbm_to_watts(20.0);
    let v = CVec::from_element(5, Complex64::new(1.0, 0.0));

    // matched filters on the effective channels, power split 40/25/25/10
    let mrt = |rx, power: f64| -> secure_rsma::Result<CVec> {
        let row = effective_row(ch.stacked(rx), &v)?;
        let w = row.conjugate();
        Ok(w.unscale(w.norm()).scale(power.sqrt()))
    };
    for an_share in [0.0, 0.1] {
        let spare = 0.1 - an_share;
        let mut design = TransmitDesign {
            w_c: mrt(Receiver::User(0), (0.4 + spare) * p)?,
            w: vec![mrt(Receiver::User(0), 0.25 * p)?, mrt(Receiver::User(1), 0.25 * p)?],
            z: CMat::identity(2, 2).scale(an_share * p / 2.0),
            v: v.clone(),
            r_c_sec: vec![0.0; 2],
        };
        let report = rate_report(&design, &ch)?;
        // split the common secrecy budget to lift the weaker user first
        design.r_c_sec = allocate_common_rate(&report.private_secrecy(), report.common_secrecy_budget().max(0.0), &[true, true]);
        let report = rate_report(&design, &ch)?;
        println!("AN share {an_share:.1}: R_c {:.3}, R_c,e {:.3}", report.r_c_cap, report.r_c_e);
        for k in 0..2 {
            println!(
                "  user {k}: R_p {:.3}  R_pe {:.3}  common share {:.3}  secrecy rate {:.3}",
                report.r_p_k[k], report.r_pe_k[k], design.r_c_sec[k], report.sr_k[k]
            );
        }
        let check = validate_design(&design, &ch, p)?;
        println!("  min SR {:.3}, feasible: {}", report.min_sr, check.is_feasible(1e-9));
        for c in &check.checks {
            println!("    {:<22} slack {:+.3e}", c.name, c.slack);
        }
    }
    Ok(())
}
