//! Scenario geometry, large-scale path loss, small-scale fading and the
//! stacked effective channels `H_j = [diag(h_{r,j}^H) G; h_{d,j}^H]`.
//!
//! Arrays at the AP and the IRS are modelled as half-wavelength uniform linear
//! arrays laid along the y axis, so the line-of-sight steering phase of
//! element `n` toward a node at offset `(dx, dy)` is `pi * n * dy / d`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{db_to_linear, dbm_to_watts, CMat, CVec};

pub type Point = [f64; 2];

/// Node positions and array sizes. `elements == 0` is the no-IRS system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemGeometry {
    pub ap_pos: Point,
    pub irs_pos: Point,
    pub eve_pos: Point,
    pub lu_pos: Vec<Point>,
    /// AP antenna count `M`.
    pub antennas: usize,
    /// IRS element count `N`.
    pub elements: usize,
}

impl SystemGeometry {
    pub fn users(&self) -> usize {
        self.lu_pos.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 {
            return Err(Error::Config("at least one AP antenna is required".into()));
        }
        if self.lu_pos.is_empty() {
            return Err(Error::Config("at least one legitimate user is required".into()));
        }
        let all = [self.ap_pos, self.irs_pos, self.eve_pos]
            .into_iter()
            .chain(self.lu_pos.iter().copied());
        for p in all {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::Config(format!("non-finite node position {p:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FadingConfig {
    pub pl0_db: f64,
    pub alpha_direct: f64,
    pub alpha_cascaded: f64,
    pub rician_k_db: f64,
    /// Receiver noise power, identical for every user and Eve.
    pub noise_dbm: f64,
    pub seed: u64,
}

impl Default for FadingConfig {
    fn default() -> Self {
        Self {
            pl0_db: -30.0,
            alpha_direct: 3.5,
            alpha_cascaded: 2.2,
            rician_k_db: 3.0,
            noise_dbm: -80.0,
            seed: 1,
        }
    }
}

impl FadingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_direct > 0.0 && self.alpha_cascaded > 0.0) {
            return Err(Error::Config("path-loss exponents must be positive".into()));
        }
        if !self.pl0_db.is_finite() || !self.noise_dbm.is_finite() {
            return Err(Error::Config("reference path loss and noise must be finite".into()));
        }
        Ok(())
    }
}

/// A receiver of the downlink: one of the legitimate users or the eavesdropper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Receiver {
    User(usize),
    Eve,
}

/// One channel draw. Per-receiver vectors (`q`, `h`, `sigma2`) hold the `K`
/// users first and Eve last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// AP to IRS, `N x M`.
    pub g: CMat,
    /// AP to user `k`, length `M`.
    pub h_d: Vec<CVec>,
    /// AP to Eve.
    pub h_de: CVec,
    /// IRS to user `k`, length `N`.
    pub h_r: Vec<CVec>,
    /// IRS to Eve.
    pub h_re: CVec,
    /// Cascaded channels `diag(h_{r,j}^H) G`.
    pub q: Vec<CMat>,
    /// Stacked `(N + 1) x M` channels.
    pub h: Vec<CMat>,
    /// Noise variance per receiver (W).
    pub sigma2: Vec<f64>,
}

impl ChannelRealization {
    /// Assembles the cascaded and stacked channels from the individual links.
    pub fn from_links(
        g: CMat,
        h_d: Vec<CVec>,
        h_de: CVec,
        h_r: Vec<CVec>,
        h_re: CVec,
        sigma2: Vec<f64>,
    ) -> Result<Self> {
        let (n, m) = g.shape();
        let k = h_d.len();
        if h_r.len() != k {
            return Err(Error::Dimension {
                context: "IRS-user links",
                expected: k,
                got: h_r.len(),
            });
        }
        if sigma2.len() != k + 1 {
            return Err(Error::Dimension {
                context: "noise variances",
                expected: k + 1,
                got: sigma2.len(),
            });
        }
        if let Some(s) = sigma2.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Domain(format!("noise variance must be positive, got {s}")));
        }
        for d in h_d.iter().chain(std::iter::once(&h_de)) {
            if d.len() != m {
                return Err(Error::Dimension {
                    context: "direct link",
                    expected: m,
                    got: d.len(),
                });
            }
        }
        for r in h_r.iter().chain(std::iter::once(&h_re)) {
            if r.len() != n {
                return Err(Error::Dimension {
                    context: "IRS-receiver link",
                    expected: n,
                    got: r.len(),
                });
            }
        }

        let mut q = Vec::with_capacity(k + 1);
        let mut h = Vec::with_capacity(k + 1);
        let receivers = h_r.iter().zip(h_d.iter()).chain(std::iter::once((&h_re, &h_de)));
        for (hr, hd) in receivers {
            let qj = cascaded(&g, hr);
            let mut hj = CMat::zeros(n + 1, m);
            hj.rows_mut(0, n).copy_from(&qj);
            for c in 0..m {
                hj[(n, c)] = hd[c].conj();
            }
            q.push(qj);
            h.push(hj);
        }
        Ok(Self {
            g,
            h_d,
            h_de,
            h_r,
            h_re,
            q,
            h,
            sigma2,
        })
    }

    pub fn antennas(&self) -> usize {
        self.g.ncols()
    }

    pub fn elements(&self) -> usize {
        self.g.nrows()
    }

    pub fn users(&self) -> usize {
        self.h_d.len()
    }

    pub fn index(&self, rx: Receiver) -> usize {
        match rx {
            Receiver::User(k) => k,
            Receiver::Eve => self.users(),
        }
    }

    pub fn stacked(&self, rx: Receiver) -> &CMat {
        &self.h[self.index(rx)]
    }

    pub fn noise(&self, rx: Receiver) -> f64 {
        self.sigma2[self.index(rx)]
    }

    /// The same draw with the IRS removed: every `H_j` becomes its direct row.
    pub fn without_irs(&self) -> Self {
        let m = self.antennas();
        Self::from_links(
            CMat::zeros(0, m),
            self.h_d.clone(),
            self.h_de.clone(),
            vec![CVec::zeros(0); self.users()],
            CVec::zeros(0),
            self.sigma2.clone(),
        )
        .expect("truncating a valid realization stays valid")
    }

    /// Replaces Eve's links with zeros (used to isolate point-to-point cases).
    pub fn with_silent_eve(&self) -> Self {
        Self::from_links(
            self.g.clone(),
            self.h_d.clone(),
            CVec::zeros(self.antennas()),
            self.h_r.clone(),
            CVec::zeros(self.elements()),
            self.sigma2.clone(),
        )
        .expect("zeroing links keeps dimensions")
    }
}

fn cascaded(g: &CMat, hr: &CVec) -> CMat {
    let mut q = g.clone();
    for (n, mut row) in q.row_iter_mut().enumerate() {
        row *= hr[n].conj();
    }
    q
}

/// `10^(pl0_db/10) * d^(-exponent)`.
pub fn pathloss_linear(distance_m: f64, exponent: f64, pl0_db: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {distance_m}")));
    }
    if !(exponent > 0.0) {
        return Err(Error::Domain(format!("path-loss exponent must be positive, got {exponent}")));
    }
    Ok(db_to_linear(pl0_db) * distance_m.powf(-exponent))
}

/// Independent RNG stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Unit-variance circularly-symmetric complex Gaussian.
fn unit_cn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rayleigh-faded vector with per-entry variance `gain`.
pub fn sample_direct<R: Rng + ?Sized>(dim: usize, gain: f64, rng: &mut R) -> CVec {
    let amp = gain.max(0.0).sqrt();
    CVec::from_fn(dim, |_, _| unit_cn(rng) * amp)
}

/// Sine of the angle (from array broadside) at which `from` sees `to`.
pub fn steering_sine(from: Point, to: Point) -> f64 {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let d = dx.hypot(dy);
    if d == 0.0 {
        0.0
    } else {
        dy / d
    }
}

/// Half-wavelength ULA response for `len` elements.
pub fn steering_vector(len: usize, sine: f64) -> CVec {
    CVec::from_fn(len, |n, _| Complex64::from_polar(1.0, std::f64::consts::PI * n as f64 * sine))
}

/// Departure/arrival geometry of a Rician link. Rows of the link matrix see
/// the link under `row_sine`, columns under `col_sine`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkAngles {
    pub row_sine: f64,
    pub col_sine: f64,
}

impl LinkAngles {
    pub fn los(&self, rows: usize, cols: usize) -> CMat {
        let a = steering_vector(rows, self.row_sine);
        let b = steering_vector(cols, self.col_sine);
        &a * b.adjoint()
    }
}

/// Rician-faded `rows x cols` matrix with mean power `gain` per entry.
/// NLoS entries are drawn row-major so that the first rows of a larger draw
/// coincide with a smaller one from the same stream.
pub fn sample_cascaded_link<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    gain: f64,
    rician_k_db: f64,
    angles: LinkAngles,
    rng: &mut R,
) -> CMat {
    let kappa = db_to_linear(rician_k_db);
    let (los_w, nlos_w) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    };
    let amp = gain.max(0.0).sqrt();
    let los = angles.los(rows, cols);
    let mut out = CMat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let nlos = if nlos_w > 0.0 { unit_cn(rng) } else { Complex64::new(0.0, 0.0) };
            out[(r, c)] = (los[(r, c)] * los_w + nlos * nlos_w) * amp;
        }
    }
    out
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

// stream ids for the individual links of one realization
const STREAM_G: u64 = 1;
const STREAM_DIRECT_EVE: u64 = 2;
const STREAM_IRS_EVE: u64 = 3;
const STREAM_DIRECT_USER: u64 = 100;
const STREAM_IRS_USER: u64 = 200;

/// Draws one realization. Each link uses its own RNG stream derived from
/// `fading.seed`, so realizations with fewer IRS elements are prefixes of
/// realizations with more.
pub fn assemble_channels(geometry: &SystemGeometry, fading: &FadingConfig) -> Result<ChannelRealization> {
    geometry.validate()?;
    fading.validate()?;
    let m = geometry.antennas;
    let n = geometry.elements;
    let k = geometry.users();
    let seed = fading.seed;

    let g = if n > 0 {
        let gain = pathloss_linear(distance(geometry.ap_pos, geometry.irs_pos), fading.alpha_cascaded, fading.pl0_db)?;
        let angles = LinkAngles {
            row_sine: steering_sine(geometry.irs_pos, geometry.ap_pos),
            col_sine: steering_sine(geometry.ap_pos, geometry.irs_pos),
        };
        sample_cascaded_link(n, m, gain, fading.rician_k_db, angles, &mut stream_rng(seed, STREAM_G))
    } else {
        CMat::zeros(0, m)
    };

    let direct = |pos: Point, stream: u64| -> Result<CVec> {
        let gain = pathloss_linear(distance(geometry.ap_pos, pos), fading.alpha_direct, fading.pl0_db)?;
        Ok(sample_direct(m, gain, &mut stream_rng(seed, stream)))
    };
    let reflected = |pos: Point, stream: u64| -> Result<CVec> {
        if n == 0 {
            return Ok(CVec::zeros(0));
        }
        let gain = pathloss_linear(distance(geometry.irs_pos, pos), fading.alpha_cascaded, fading.pl0_db)?;
        let angles = LinkAngles {
            row_sine: steering_sine(geometry.irs_pos, pos),
            col_sine: 0.0,
        };
        let link = sample_cascaded_link(n, 1, gain, fading.rician_k_db, angles, &mut stream_rng(seed, stream));
        Ok(link.column(0).into_owned())
    };

    let mut h_d = Vec::with_capacity(k);
    let mut h_r = Vec::with_capacity(k);
    for (i, &pos) in geometry.lu_pos.iter().enumerate() {
        h_d.push(direct(pos, STREAM_DIRECT_USER + i as u64)?);
        h_r.push(reflected(pos, STREAM_IRS_USER + i as u64)?);
    }
    let h_de = direct(geometry.eve_pos, STREAM_DIRECT_EVE)?;
    let h_re = reflected(geometry.eve_pos, STREAM_IRS_EVE)?;
    let sigma2 = vec![dbm_to_watts(fading.noise_dbm); k + 1];
    ChannelRealization::from_links(g, h_d, h_de, h_r, h_re, sigma2)
}

/// Effective row `v^H H_j`, returned as the vector of its entries.
pub fn effective_row(h_j: &CMat, v: &CVec) -> Result<CVec> {
    if v.len() != h_j.nrows() {
        return Err(Error::Dimension {
            context: "reflection vector",
            expected: h_j.nrows(),
            got: v.len(),
        });
    }
    Ok(h_j.transpose() * v.conjugate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CMat, CVec};

    fn geometry(n: usize) -> SystemGeometry {
        SystemGeometry {
            ap_pos: [0.0, 0.0],
            irs_pos: [50.0, 0.0],
            eve_pos: [45.0, 0.0],
            lu_pos: vec![[0.0, 20.0], [50.0, 5.0]],
            antennas: 2,
            elements: n,
        }
    }

    #[test]
    fn pathloss_examples() {
        assert!((pathloss_linear(1.0, 2.2, -30.0).unwrap() - 1e-3).abs() < 1e-18);
        assert_eq!(pathloss_linear(1.0, 3.5, 0.0).unwrap(), 1.0);
        // 1e-3 * 50^-2.2 evaluated independently
        let expected = 1e-3 * (-2.2 * 50f64.ln()).exp();
        let got = pathloss_linear(50.0, 2.2, -30.0).unwrap();
        assert!((got - expected).abs() / expected < 1e-12);
        // quoted to four figures (truncated)
        assert!((got - 1.828e-7).abs() < 5e-10);
    }

    #[test]
    fn pathloss_rejects_non_positive_distance() {
        assert!(matches!(pathloss_linear(0.0, 2.0, -30.0), Err(Error::Domain(_))));
        assert!(matches!(pathloss_linear(-3.0, 2.0, -30.0), Err(Error::Domain(_))));
    }

    #[test]
    fn direct_zero_gain_is_zero() {
        let v = sample_direct(4, 0.0, &mut stream_rng(3, 0));
        assert!(v.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn direct_is_deterministic() {
        let a = sample_direct(2, 1.0, &mut stream_rng(9, 4));
        let b = sample_direct(2, 1.0, &mut stream_rng(9, 4));
        assert_eq!(a, b);
    }

    #[test]
    fn direct_variance_matches_gain() {
        let mut rng = stream_rng(11, 0);
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            acc += sample_direct(2, 1.0, &mut rng).norm_squared();
        }
        let var = acc / (2.0 * draws as f64);
        assert!((0.99..=1.01).contains(&var), "variance {var}");
    }

    #[test]
    fn pure_los_limit() {
        let angles = LinkAngles { row_sine: 0.3, col_sine: -0.5 };
        let out = sample_cascaded_link(3, 2, 4.0, f64::INFINITY, angles, &mut stream_rng(1, 1));
        let expected = angles.los(3, 2).scale(2.0);
        assert!((out - expected).norm() < 1e-15);
    }

    #[test]
    fn rayleigh_limit_matches_direct_draws() {
        let angles = LinkAngles { row_sine: 0.3, col_sine: -0.5 };
        let link = sample_cascaded_link(3, 2, 2.0, f64::NEG_INFINITY, angles, &mut stream_rng(5, 7));
        let flat = sample_direct(6, 2.0, &mut stream_rng(5, 7));
        for r in 0..3 {
            for c in 0..2 {
                assert_eq!(link[(r, c)], flat[r * 2 + c]);
            }
        }
    }

    #[test]
    fn rician_power_is_normalized() {
        let angles = LinkAngles { row_sine: 0.2, col_sine: 0.7 };
        let mut rng = stream_rng(21, 0);
        let draws = 10_000;
        let (rows, cols, gain) = (4, 2, 3.0);
        let mut acc = 0.0;
        for _ in 0..draws {
            acc += sample_cascaded_link(rows, cols, gain, 3.0, angles, &mut rng).norm_squared();
        }
        let ratio = acc / (draws as f64 * (rows * cols) as f64 * gain);
        assert!((0.99..=1.01).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn no_irs_geometry_gives_direct_rows() {
        let ch = assemble_channels(&geometry(0), &FadingConfig::default()).unwrap();
        for k in 0..2 {
            let h = ch.stacked(Receiver::User(k));
            assert_eq!(h.shape(), (1, 2));
            for c in 0..2 {
                assert_eq!(h[(0, c)], ch.h_d[k][c].conj());
            }
        }
    }

    #[test]
    fn cascaded_rows_are_scaled_g_rows() {
        let ch = assemble_channels(&geometry(4), &FadingConfig::default()).unwrap();
        for j in 0..3 {
            let hr = if j < 2 { &ch.h_r[j] } else { &ch.h_re };
            for n in 0..4 {
                for m in 0..2 {
                    let expected = hr[n].conj() * ch.g[(n, m)];
                    assert!((ch.q[j][(n, m)] - expected).norm() <= 1e-12 * expected.norm().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn realization_is_deterministic() {
        let a = assemble_channels(&geometry(8), &FadingConfig::default()).unwrap();
        let b = assemble_channels(&geometry(8), &FadingConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fewer_elements_is_prefix() {
        let small = assemble_channels(&geometry(4), &FadingConfig::default()).unwrap();
        let large = assemble_channels(&geometry(16), &FadingConfig::default()).unwrap();
        assert_eq!(small.g, large.g.rows(0, 4).into_owned());
        assert_eq!(small.h_r[1], large.h_r[1].rows(0, 4).into_owned());
        assert_eq!(small.h_d, large.h_d);
    }

    #[test]
    fn muted_reflection_returns_direct_row() {
        let ch = assemble_channels(&geometry(3), &FadingConfig::default()).unwrap();
        let mut v = CVec::zeros(4);
        v[3] = Complex64::new(1.0, 0.0);
        let row = effective_row(ch.stacked(Receiver::User(0)), &v).unwrap();
        for c in 0..2 {
            assert_eq!(row[c], ch.h_d[0][c].conj());
        }
    }

    #[test]
    fn single_element_matches_two_term_expansion() {
        let ch = assemble_channels(&geometry(1), &FadingConfig::default()).unwrap();
        let theta: f64 = 0.7;
        let v = CVec::from_vec(vec![Complex64::from_polar(1.0, theta), Complex64::new(1.0, 0.0)]);
        let row = effective_row(ch.stacked(Receiver::User(1)), &v).unwrap();
        // h_d^H + e^{-j theta} conj(h_r) g
        for c in 0..2 {
            let expected = ch.h_d[1][c].conj() + Complex64::from_polar(1.0, -theta) * ch.h_r[1][0].conj() * ch.g[(0, c)];
            assert!((row[c] - expected).norm() <= 1e-12 * expected.norm());
        }
    }

    #[test]
    fn effective_row_rejects_bad_length() {
        let h = CMat::zeros(3, 2);
        assert!(effective_row(&h, &CVec::zeros(2)).is_err());
    }
}
