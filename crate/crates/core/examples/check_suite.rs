//! Runs the invariant and oracle checks on seeded small instances and
//! prints the report.
//!
//! cargo run --release --example check_suite -- [seed] [instances]

use secure_rsma::harness::{check_suite, CheckOptions};

fn main() -> secure_rsma::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let opts = CheckOptions {
        seed: args.next().and_then(|s| s.parse().ok()).unwrap_or(0),
        instances: args.next().and_then(|s| s.parse().ok()).unwrap_or(3),
    };
    let report = check_suite(&opts)?;
    print!("{}", report.to_text());
    for f in report.failures() {
        eprintln!("failed: {} ({})", f.name, f.detail);
    }
    Ok(())
}
