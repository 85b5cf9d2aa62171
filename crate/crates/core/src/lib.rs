//! Max-min secrecy-rate beamforming for rate-splitting multiple access with
//! an intelligent reflecting surface and one eavesdropper.
//!
//! The crate is organized bottom-up:
//!
//! * [`channels`] draws geometry-based channel realizations.
//! * [`rates`] evaluates SINRs, rates and secrecy rates of a design.
//! * [`conic`] is a small conic-program IR with an interior-point backend.
//! * [`subproblems`] builds the two convex programs of the alternating loop.
//! * [`ao`] runs the alternating optimization.
//! * [`baselines`] covers the comparison schemes.
//! * [`harness`] runs Monte Carlo experiments and exports tables.
//! * [`oracles`] holds independent reference computations used by checks.

use openblas_src as _;

pub mod ao;
pub mod baselines;
pub mod channels;
pub mod conic;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod oracles;
pub mod rates;
pub mod subproblems;

pub use error::{Error, Result};
