//! Builds a small conic program by hand, solves it with the interior-point
//! backend and round-trips it through the text format.
//!
//! The program picks a 2x2 complex covariance X with unit trace that
//! maximizes log2(1 + <A, X>) for a fixed Hermitian A, so the answer is
//! log2(1 + lambda_max(A)).
//!
//! cargo run --release --example conic_program

use num_complex::Complex64;
use secure_rsma::conic::{add_log2_lower_bound, parse_program, solve, ConicProgram, LinExpr, ObjectiveSense, Sense};
use secure_rsma::linalg::{CMat, HermitianEigen};

fn main() -> secure_rsma::Result<()> {
    let a = CMat::from_row_slice(2, 2, &[Complex64::new(2.0, 0.0), Complex64::new(0.5, 1.0), Complex64::new(0.5, -1.0), Complex64::new(1.0, 0.0)]);
    let mut prog = ConicProgram::new();
    let x = prog.hermitian("X", 2);
    let t = prog.scalar("t");
    prog.psd_var(x);
    let mut unit = LinExpr::constant(-1.0);
    unit.add_trace(x, 1.0);
    prog.constrain("unit_trace", unit, Sense::Eq);
    let mut arg = LinExpr::constant(1.0);
    arg.add_inner(x, &a, 1.0);
    add_log2_lower_bound(&mut prog, "rate", &arg, &LinExpr::var(t));
    prog.set_objective(ObjectiveSense::Maximize, LinExpr::var(t));

    let res = solve(&prog, 1e-8)?;
    let want = (1.0 + HermitianEigen::new(&a).max()).log2();
    println!("status {:?} after {} iterations", res.status, res.iterations);
    println!("t = {:.9}, closed form {:.9}", res.values["t"], want);
    println!("X =\n{:.4}", res.matrix(x));

    let text = prog.to_text();
    println!("program text ({} lines):\n{}", text.lines().count(), text);
    let back = parse_program(&text)?;
    let again = solve(&back, 1e-8)?;
    println!("re-parsed program solves to {:.9}", again.objective);
    Ok(())
}
