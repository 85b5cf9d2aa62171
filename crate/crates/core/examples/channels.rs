//! Draws one seeded channel realization and shows how the reflection phases
//! move the effective channel gains of the users and of Eve.
//!
//! cargo run --release --example channels -- [seed] [elements]

use secure_rsma::channels::{assemble_channels, effective_row, FadingConfig, Receiver, SystemGeometry};
use secure_rsma::linalg::CVec;
use num_complex::Complex64;

fn main() -> secure_rsma::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let elements: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let geo = SystemGeometry {
        ap_pos: [0.0, 0.0],
        irs_pos: [50.0, 0.0],
        eve_pos: [45.0, 0.0],
        lu_pos: vec![[0.0, 20.0], [50.0, 5.0]],
        antennas: 2,
        elements,
    };
    let ch = assemble_channels(&geo, &FadingConfig { seed, ..Default::default() })?;
    println!("M = {}, N = {}, K = {}, noise {:.1e} W", ch.antennas(), ch.elements(), ch.users(), ch.sigma2[0]);

    let receivers: Vec<(String, Receiver)> = (0..ch.users())
        .map(|k| (format!("user {k}"), Receiver::User(k)))
        .chain(std::iter::once(("eve".to_string(), Receiver::Eve)))
        .collect();
    for (name, rx) in &receivers {
        let h = ch.stacked(*rx);
        let direct = h.row(h.nrows() - 1).norm_squared();
        let cascaded = if h.nrows() > 1 { h.rows(0, h.nrows() - 1).norm_squared() } else { 0.0 };
        println!("{name:<7} direct gain {direct:.3e}  cascaded gain {cascaded:.3e}");
    }

    // all-ones phases, then phases aligned to user 1's strongest antenna path
    let ones = CVec::from_element(elements + 1, Complex64::new(1.0, 0.0));
    let h1 = ch.stacked(Receiver::User(1));
    let mut aligned = ones.clone();
    for n in 0..elements {
        let target = h1[(elements, 0)].arg() - h1[(n, 0)].arg();
        aligned[n] = Complex64::from_polar(1.0, -target);
    }
    for (label, v) in [("all-ones", &ones), ("aligned to user 1", &aligned)] {
        print!("{label:<18}");
        for (name, rx) in &receivers {
            let row = effective_row(ch.stacked(*rx), v)?;
            print!("  {name} {:.3e}", row.norm_squared());
        }
        println!();
    }
    Ok(())
}
