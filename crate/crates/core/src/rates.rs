//! Closed-form SINRs, achievable rates and secrecy rates, in both the vector
//! form `(w, v)` and the lifted trace form `(W, V)`.

use serde::{Deserialize, Serialize};

use crate::channels::{effective_row, ChannelRealization, Receiver};
use crate::error::{Error, Result};
use crate::linalg::{hermitize, inner, log2_1p, min_eigenvalue, outer, trace_re, CMat, CVec, ONE};

/// Vector-form solution of the max-min secrecy problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitDesign {
    pub w_c: CVec,
    pub w: Vec<CVec>,
    /// Artificial-noise covariance (W).
    pub z: CMat,
    /// Reflection vector `[u; 1]`.
    pub v: CVec,
    /// Secrecy common-rate share per user (bps/Hz).
    pub r_c_sec: Vec<f64>,
}

impl TransmitDesign {
    pub fn zeros(antennas: usize, elements: usize, users: usize) -> Self {
        Self {
            w_c: CVec::zeros(antennas),
            w: vec![CVec::zeros(antennas); users],
            z: CMat::zeros(antennas, antennas),
            v: CVec::from_element(elements + 1, ONE),
            r_c_sec: vec![0.0; users],
        }
    }

    pub fn users(&self) -> usize {
        self.w.len()
    }

    pub fn power_common(&self) -> f64 {
        self.w_c.norm_squared()
    }

    pub fn power_private(&self) -> f64 {
        self.w.iter().map(|w| w.norm_squared()).sum()
    }

    pub fn power_noise(&self) -> f64 {
        trace_re(&self.z)
    }

    pub fn total_power(&self) -> f64 {
        self.power_common() + self.power_private() + self.power_noise()
    }

    fn check_dims(&self, ch: &ChannelRealization) -> Result<()> {
        let m = ch.antennas();
        if self.w.len() != ch.users() {
            return Err(Error::Dimension {
                context: "private precoders",
                expected: ch.users(),
                got: self.w.len(),
            });
        }
        if self.r_c_sec.len() != ch.users() {
            return Err(Error::Dimension {
                context: "secrecy common-rate shares",
                expected: ch.users(),
                got: self.r_c_sec.len(),
            });
        }
        for w in std::iter::once(&self.w_c).chain(self.w.iter()) {
            if w.len() != m {
                return Err(Error::Dimension {
                    context: "precoder",
                    expected: m,
                    got: w.len(),
                });
            }
        }
        if self.z.shape() != (m, m) {
            return Err(Error::Dimension {
                context: "artificial-noise covariance",
                expected: m,
                got: self.z.nrows(),
            });
        }
        if self.v.len() != ch.elements() + 1 {
            return Err(Error::Dimension {
                context: "reflection vector",
                expected: ch.elements() + 1,
                got: self.v.len(),
            });
        }
        Ok(())
    }
}

/// Received powers of every stream at one receiver for a vector design.
struct ReceivedPowers {
    common: f64,
    private: Vec<f64>,
    noise_an: f64,
    sigma2: f64,
}

fn received(design: &TransmitDesign, ch: &ChannelRealization, rx: Receiver) -> Result<ReceivedPowers> {
    design.check_dims(ch)?;
    let row = effective_row(ch.stacked(rx), &design.v)?;
    // v^H H_j w = sum_m row[m] w[m]
    let gain = |w: &CVec| row.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<num_complex::Complex64>().norm_sqr();
    // E|row x|^2 for x ~ CN(0, Z) is row^T Z conj(row)
    let noise_an = (row.transpose() * &design.z * row.conjugate())[(0, 0)].re.max(0.0);
    Ok(ReceivedPowers {
        common: gain(&design.w_c),
        private: design.w.iter().map(gain).collect(),
        noise_an,
        sigma2: ch.noise(rx),
    })
}

/// SINR of the common stream at receiver `rx` (users or Eve).
pub fn sinr_common(design: &TransmitDesign, ch: &ChannelRealization, rx: Receiver) -> Result<f64> {
    let p = received(design, ch, rx)?;
    let interference: f64 = p.private.iter().sum();
    Ok(p.common / (interference + p.noise_an + p.sigma2))
}

/// SINR of private stream `k` at user `k` after the common stream is removed.
pub fn sinr_private(design: &TransmitDesign, ch: &ChannelRealization, k: usize) -> Result<f64> {
    let p = received(design, ch, Receiver::User(k))?;
    let interference: f64 = p.private.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, x)| x).sum();
    Ok(p.private[k] / (interference + p.noise_an + p.sigma2))
}

/// SINR of private stream `k` at Eve, with the common stream acting as noise.
pub fn sinr_eve_private(design: &TransmitDesign, ch: &ChannelRealization, k: usize) -> Result<f64> {
    let p = received(design, ch, Receiver::Eve)?;
    let interference: f64 = p.private.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, x)| x).sum();
    Ok(p.private[k] / (p.common + interference + p.noise_an + p.sigma2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Common-stream rate at each user.
    pub r_c_k: Vec<f64>,
    /// Common-stream rate at Eve.
    pub r_c_e: f64,
    pub r_p_k: Vec<f64>,
    /// Eve's rate on each private stream.
    pub r_pe_k: Vec<f64>,
    /// Decodable common rate `min_k r_c_k`.
    pub r_c_cap: f64,
    pub sr_k: Vec<f64>,
    pub min_sr: f64,
}

impl RateReport {
    /// Secrecy rate carried by the private stream of each user, `[R_p - R_pe]^+`.
    pub fn private_secrecy(&self) -> Vec<f64> {
        self.r_p_k.iter().zip(&self.r_pe_k).map(|(p, e)| (p - e).max(0.0)).collect()
    }

    /// `R_c - R_{c,e}`: the budget available to the secrecy common-rate shares.
    pub fn common_secrecy_budget(&self) -> f64 {
        self.r_c_cap - self.r_c_e
    }
}

pub fn rate_report(design: &TransmitDesign, ch: &ChannelRealization) -> Result<RateReport> {
    let k_users = ch.users();
    let mut r_c_k = Vec::with_capacity(k_users);
    let mut r_p_k = Vec::with_capacity(k_users);
    let mut r_pe_k = Vec::with_capacity(k_users);
    for k in 0..k_users {
        r_c_k.push(log2_1p(sinr_common(design, ch, Receiver::User(k))?));
        r_p_k.push(log2_1p(sinr_private(design, ch, k)?));
        r_pe_k.push(log2_1p(sinr_eve_private(design, ch, k)?));
    }
    let r_c_e = log2_1p(sinr_common(design, ch, Receiver::Eve)?);
    let r_c_cap = r_c_k.iter().copied().fold(f64::INFINITY, f64::min);
    let sr_k: Vec<f64> = (0..k_users)
        .map(|k| design.r_c_sec[k] + (r_p_k[k] - r_pe_k[k]).max(0.0))
        .collect();
    let min_sr = sr_k.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RateReport {
        r_c_k,
        r_c_e,
        r_p_k,
        r_pe_k,
        r_c_cap,
        sr_k,
        min_sr,
    })
}

/// Max-min split of a common secrecy budget on top of per-user private
/// secrecy rates. Users with `shareable[k] == false` receive nothing.
pub fn allocate_common_rate(private: &[f64], budget: f64, shareable: &[bool]) -> Vec<f64> {
    let mut shares = vec![0.0; private.len()];
    if !(budget > 0.0) {
        return shares;
    }
    let mut idx: Vec<usize> = (0..private.len()).filter(|&k| shareable[k]).collect();
    if idx.is_empty() {
        return shares;
    }
    idx.sort_by(|&a, &b| private[a].total_cmp(&private[b]).then(a.cmp(&b)));
    // raise the water level over the lowest users until the budget runs out
    let mut level = private[idx[0]];
    let mut used = 0.0;
    let mut count = 1;
    while count < idx.len() {
        let next = private[idx[count]];
        let need = (next - level) * count as f64;
        if used + need >= budget {
            break;
        }
        used += need;
        level = next;
        count += 1;
    }
    level += (budget - used) / count as f64;
    for &k in &idx[..count] {
        shares[k] = (level - private[k]).max(0.0);
    }
    let total: f64 = shares.iter().sum();
    if total > budget {
        let s = budget / total;
        shares.iter_mut().for_each(|x| *x *= s);
    }
    shares
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    /// Non-negative when satisfied; `-slack` is the violation otherwise.
    pub slack: f64,
}

impl ConstraintCheck {
    pub fn violation(&self) -> f64 {
        (-self.slack).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub checks: Vec<ConstraintCheck>,
    /// `R_c - R_{c,e}`; should be strictly positive whenever `w_c != 0`.
    pub strict_common_gap: f64,
}

impl FeasibilityReport {
    pub fn max_violation(&self) -> f64 {
        self.checks.iter().map(ConstraintCheck::violation).fold(0.0, f64::max)
    }

    pub fn violations(&self, tol: f64) -> Vec<&ConstraintCheck> {
        self.checks.iter().filter(|c| c.violation() > tol).collect()
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.violations(tol).is_empty()
    }

    pub fn slack(&self, name: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.slack)
    }
}

/// Checks every constraint of the original problem and reports the slack of each.
pub fn validate_design(design: &TransmitDesign, ch: &ChannelRealization, p_max: f64) -> Result<FeasibilityReport> {
    let report = rate_report(design, ch)?;
    let n = ch.elements();
    let mut checks = Vec::new();
    checks.push(ConstraintCheck {
        name: "power".into(),
        slack: p_max - design.total_power(),
    });
    let modulus_err = design.v.iter().take(n).map(|x| (x.norm() - 1.0).abs()).fold(0.0, f64::max);
    checks.push(ConstraintCheck {
        name: "unit_modulus".into(),
        slack: -modulus_err,
    });
    checks.push(ConstraintCheck {
        name: "reference_entry".into(),
        slack: -(design.v[n] - ONE).norm(),
    });
    let z = hermitize(&design.z);
    checks.push(ConstraintCheck {
        name: "noise_psd".into(),
        slack: min_eigenvalue(&z) + 1e-9 * trace_re(&z).abs(),
    });
    checks.push(ConstraintCheck {
        name: "common_share_nonneg".into(),
        slack: design.r_c_sec.iter().copied().fold(f64::INFINITY, f64::min),
    });
    let budget = report.common_secrecy_budget();
    checks.push(ConstraintCheck {
        name: "common_budget".into(),
        slack: budget - design.r_c_sec.iter().sum::<f64>(),
    });
    if design.w_c.norm_squared() > 0.0 && budget <= 0.0 {
        log::debug!("common stream active but R_c - R_c,e = {budget:.3e} is not strictly positive");
    }
    Ok(FeasibilityReport {
        checks,
        strict_common_gap: budget,
    })
}

/// Matrix-form iterate of the lifted problem. Precoder matrices are in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedPoint {
    pub w_common: CMat,
    pub w_private: Vec<CMat>,
    pub z: CMat,
    pub v: CMat,
    pub r_c: Vec<f64>,
    pub r_p: Vec<f64>,
    pub t: f64,
}

impl LiftedPoint {
    /// Lifts a vector design: `W_l = w_l w_l^H`, `V = v v^H`. Rate variables
    /// are left at zero.
    pub fn from_design(design: &TransmitDesign) -> Self {
        let k = design.users();
        Self {
            w_common: outer(&design.w_c),
            w_private: design.w.iter().map(outer).collect(),
            z: design.z.clone(),
            v: outer(&design.v),
            r_c: vec![0.0; k],
            r_p: vec![0.0; k],
            t: 0.0,
        }
    }

    pub fn users(&self) -> usize {
        self.w_private.len()
    }

    /// Matrix for stream `l`, with `None` standing for the common stream.
    pub fn stream(&self, l: Option<usize>) -> &CMat {
        match l {
            None => &self.w_common,
            Some(k) => &self.w_private[k],
        }
    }

    pub fn total_power(&self) -> f64 {
        trace_re(&self.w_common) + self.w_private.iter().map(trace_re).sum::<f64>() + trace_re(&self.z)
    }
}

/// The seven log-trace functions of the lifted problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LogTerm {
    /// `f_{p,k}`: user `k`, all private streams plus AN.
    FPrivate,
    /// `g_{p,k}`: user `k`, private streams other than `k` plus AN.
    GPrivate,
    /// `f_e`: Eve, every stream plus AN.
    FEve,
    /// `g_{p,e->k}`: Eve, every stream but private `k`, plus AN.
    GEvePrivate,
    /// `f_{c,k}`: user `k`, every stream plus AN.
    FCommon,
    /// `g_{c,k}`: user `k`, private streams plus AN.
    GCommon,
    /// `g_{c,e}`: Eve, private streams plus AN.
    GEveCommon,
}

/// Which stream covariances enter the argument of a log term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamSet {
    pub receiver: Receiver,
    pub common: bool,
    pub private: Vec<usize>,
}

impl LogTerm {
    pub const ALL: [LogTerm; 7] = [
        LogTerm::FPrivate,
        LogTerm::GPrivate,
        LogTerm::FEve,
        LogTerm::GEvePrivate,
        LogTerm::FCommon,
        LogTerm::GCommon,
        LogTerm::GEveCommon,
    ];

    pub fn streams(self, k: usize, users: usize) -> StreamSet {
        let all: Vec<usize> = (0..users).collect();
        let others: Vec<usize> = (0..users).filter(|&i| i != k).collect();
        let (receiver, common, private) = match self {
            LogTerm::FPrivate => (Receiver::User(k), false, all),
            LogTerm::GPrivate => (Receiver::User(k), false, others),
            LogTerm::FEve => (Receiver::Eve, true, all),
            LogTerm::GEvePrivate => (Receiver::Eve, true, others),
            LogTerm::FCommon => (Receiver::User(k), true, all),
            LogTerm::GCommon => (Receiver::User(k), false, all),
            LogTerm::GEveCommon => (Receiver::Eve, false, all),
        };
        StreamSet {
            receiver,
            common,
            private,
        }
    }
}

/// `H_j^H V H_j`: pairs with the transmit covariances.
pub fn transmit_pairing(ch: &ChannelRealization, rx: Receiver, v: &CMat) -> CMat {
    let h = ch.stacked(rx);
    h.adjoint() * v * h
}

/// `H_j S H_j^H`: pairs with the reflection matrix.
pub fn reflection_pairing(ch: &ChannelRealization, rx: Receiver, s: &CMat) -> CMat {
    let h = ch.stacked(rx);
    h * s * h.adjoint()
}

/// Sum of the stream covariances that enter `set`, plus AN.
pub fn stream_sum(point: &LiftedPoint, set: &StreamSet) -> CMat {
    let mut s = point.z.clone();
    if set.common {
        s += &point.w_common;
    }
    for &i in &set.private {
        s += &point.w_private[i];
    }
    s
}

/// Argument of the log term divided by the receiver noise, i.e. `1 + SINR-like sum`.
pub fn log_argument_normalized(term: LogTerm, point: &LiftedPoint, ch: &ChannelRealization, k: usize) -> f64 {
    let set = term.streams(k, ch.users());
    let s = stream_sum(point, &set);
    let a = transmit_pairing(ch, set.receiver, &point.v);
    1.0 + inner(&a, &s) / ch.noise(set.receiver)
}

/// `log2(sum_i tr(H_j^H V H_j W_i) + tr(H_j^H V H_j Z) + sigma_j^2)`.
pub fn eval_log_term(term: LogTerm, point: &LiftedPoint, ch: &ChannelRealization, k: usize) -> f64 {
    let rx = term.streams(k, ch.users()).receiver;
    let arg = log_argument_normalized(term, point, ch, k);
    assert!(arg > 0.0 && arg.is_finite(), "log argument {arg} of {term:?} is not positive");
    ch.noise(rx).log2() + arg.log2()
}

/// Which streams a scheme transmits and who may receive common secrecy rate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamLayout {
    pub common: bool,
    pub private: Vec<bool>,
    pub common_share: Vec<bool>,
}

impl StreamLayout {
    pub fn rsma(users: usize) -> Self {
        Self {
            common: true,
            private: vec![true; users],
            common_share: vec![true; users],
        }
    }

    /// Private streams only.
    pub fn mulp(users: usize) -> Self {
        Self {
            common: false,
            private: vec![true; users],
            common_share: vec![false; users],
        }
    }

    /// Two-user NOMA as restricted rate splitting: the weak user's message
    /// travels entirely on the common stream.
    pub fn noma(users: usize, weak: usize) -> Self {
        let mut private = vec![true; users];
        private[weak] = false;
        let mut common_share = vec![false; users];
        common_share[weak] = true;
        Self {
            common: true,
            private,
            common_share,
        }
    }

    pub fn users(&self) -> usize {
        self.private.len()
    }

    pub fn active_streams(&self) -> usize {
        self.common as usize + self.private.iter().filter(|p| **p).count()
    }
}

/// Exact secrecy margins of a lifted point.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMargins {
    /// `(f_pk - g_pk) - (f_e - g_pe,k)` per user.
    pub private: Vec<f64>,
    /// `min_k (f_ck - g_ck) - (f_e - g_ce)`.
    pub common: f64,
}

pub fn lifted_margins(point: &LiftedPoint, ch: &ChannelRealization) -> LiftedMargins {
    let k_users = ch.users();
    let lg = |term, k| log_argument_normalized(term, point, ch, k).log2();
    let f_e = lg(LogTerm::FEve, 0);
    let g_ce = lg(LogTerm::GEveCommon, 0);
    let private = (0..k_users)
        .map(|k| (lg(LogTerm::FPrivate, k) - lg(LogTerm::GPrivate, k)) - (f_e - lg(LogTerm::GEvePrivate, k)))
        .collect();
    let common = (0..k_users)
        .map(|k| (lg(LogTerm::FCommon, k) - lg(LogTerm::GCommon, k)) - (f_e - g_ce))
        .fold(f64::INFINITY, f64::min);
    LiftedMargins { private, common }
}

/// Resets the rate variables of `point` to the best feasible max-min values
/// for its matrices, backed off by `margin`.
pub fn tighten_rates(point: &mut LiftedPoint, ch: &ChannelRealization, layout: &StreamLayout, margin: f64) {
    let m = lifted_margins(point, ch);
    let k_users = ch.users();
    for k in 0..k_users {
        point.r_p[k] = if layout.private[k] { (m.private[k] - margin).max(0.0) } else { 0.0 };
    }
    let budget = if layout.common { m.common - margin } else { 0.0 };
    point.r_c = allocate_common_rate(&point.r_p, budget, &layout.common_share);
    point.t = (0..k_users)
        .map(|k| point.r_c[k] + point.r_p[k])
        .fold(f64::INFINITY, f64::min);
}

/// Switches off, one at a time and worst first, every transmitted stream
/// whose exact secrecy margin is negative, until the remaining streams all
/// have non-negative margins. Returns the streams switched off (`None` is
/// the common stream).
pub fn drop_insecure_streams(point: &mut LiftedPoint, ch: &ChannelRealization, tol: f64) -> Vec<Option<usize>> {
    let mut dropped = Vec::new();
    loop {
        let m = lifted_margins(point, ch);
        let mut worst: Option<(Option<usize>, f64)> = None;
        let mut consider = |stream: Option<usize>, margin: f64, on: bool| {
            if on && margin < -tol && worst.is_none_or(|(_, w)| margin < w) {
                worst = Some((stream, margin));
            }
        };
        consider(None, m.common, trace_re(&point.w_common) > 0.0);
        for (k, &margin) in m.private.iter().enumerate() {
            consider(Some(k), margin, trace_re(&point.w_private[k]) > 0.0);
        }
        match worst {
            Some((None, _)) => point.w_common.fill(crate::linalg::ZERO),
            Some((Some(k), _)) => point.w_private[k].fill(crate::linalg::ZERO),
            None => return dropped,
        }
        dropped.push(worst.map(|(s, _)| s).unwrap_or(None));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{assemble_channels, FadingConfig, SystemGeometry};
    use crate::linalg::dbm_to_watts;
    use num_complex::Complex64;
    use rand::Rng;

    fn instance(n: usize, k: usize) -> ChannelRealization {
        let geo = SystemGeometry {
            ap_pos: [0.0, 0.0],
            irs_pos: [50.0, 0.0],
            eve_pos: [45.0, 0.0],
            lu_pos: vec![[0.0, 20.0], [50.0, 5.0], [0.0, -20.0]][..k].to_vec(),
            antennas: 2,
            elements: n,
        };
        assemble_channels(&geo, &FadingConfig { seed: 17, ..Default::default() }).unwrap()
    }

    fn random_design(ch: &ChannelRealization, p: f64, seed: u64) -> TransmitDesign {
        let mut rng = crate::channels::stream_rng(seed, 0);
        let m = ch.antennas();
        let mut cv = |len: usize, scale: f64| {
            CVec::from_fn(len, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale)
        };
        let w_c = cv(m, p.sqrt());
        let w = (0..ch.users()).map(|_| cv(m, p.sqrt())).collect();
        let a = CMat::from_fn(m, m, |i, j| Complex64::new(0.3 + 0.1 * i as f64, -0.1 + 0.2 * j as f64));
        let z = (&a * a.adjoint()).scale(p * 0.1);
        let raw = cv(ch.elements() + 1, 1.0);
        let mut v = raw.map(|x| x / x.norm());
        let last = v[ch.elements()];
        v = v.map(|x| x * last.conj());
        TransmitDesign {
            w_c,
            w,
            z,
            v,
            r_c_sec: vec![0.0; ch.users()],
        }
    }

    #[test]
    fn zero_common_power_gives_zero_sinr() {
        let ch = instance(4, 2);
        let mut d = random_design(&ch, 0.1, 1);
        d.w_c = CVec::zeros(2);
        for rx in [Receiver::User(0), Receiver::User(1), Receiver::Eve] {
            assert_eq!(sinr_common(&d, &ch, rx).unwrap(), 0.0);
        }
    }

    #[test]
    fn unit_snr_single_antenna() {
        // one antenna, no IRS, |h w|^2 = sigma^2
        let ch = ChannelRealization::from_links(
            CMat::zeros(0, 1),
            vec![CVec::from_element(1, Complex64::new(2.0, 0.0))],
            CVec::from_element(1, Complex64::new(0.0, 0.0)),
            vec![CVec::zeros(0)],
            CVec::zeros(0),
            vec![4.0, 1.0],
        )
        .unwrap();
        let mut d = TransmitDesign::zeros(1, 0, 1);
        d.w_c[0] = Complex64::new(1.0, 0.0);
        assert!((sinr_common(&d, &ch, Receiver::User(0)).unwrap() - 1.0).abs() < 1e-15);
        // every rate is one bit when each SINR is one
        d.w_c[0] = Complex64::new(0.0, 0.0);
        d.w[0][0] = Complex64::new(1.0, 0.0);
        let r = rate_report(&d, &ch).unwrap();
        assert!((r.r_p_k[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn private_sinr_reduces_to_snr_for_one_user() {
        let ch = instance(3, 1);
        let mut d = random_design(&ch, 0.1, 2);
        d.z = CMat::zeros(2, 2);
        let row = effective_row(ch.stacked(Receiver::User(0)), &d.v).unwrap();
        let g = row.iter().zip(d.w[0].iter()).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr();
        let expected = g / ch.sigma2[0];
        let got = sinr_private(&d, &ch, 0).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
        assert_eq!(sinr_private(&TransmitDesign { w: vec![CVec::zeros(2)], ..d.clone() }, &ch, 0).unwrap(), 0.0);
    }

    #[test]
    fn eve_private_sinr_cases() {
        let ch = instance(3, 1);
        let mut d = random_design(&ch, 0.1, 3);
        d.w[0] = CVec::zeros(2);
        assert_eq!(sinr_eve_private(&d, &ch, 0).unwrap(), 0.0);
        let mut d = random_design(&ch, 0.1, 3);
        d.z = CMat::zeros(2, 2);
        d.w_c = CVec::zeros(2);
        let row = effective_row(ch.stacked(Receiver::Eve), &d.v).unwrap();
        let g = row.iter().zip(d.w[0].iter()).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr();
        let got = sinr_eve_private(&d, &ch, 0).unwrap();
        assert!((got - g / ch.sigma2[1]).abs() <= 1e-12 * got);
    }

    #[test]
    fn an_power_matches_sampled_noise() {
        // a rank-one AN covariance z z^H leaks exactly |row z|^2
        let ch = instance(3, 1);
        let mut d = TransmitDesign::zeros(2, 3, 1);
        let z = CVec::from_vec(vec![Complex64::new(0.3, 0.4), Complex64::new(-0.2, 0.7)]);
        d.z = crate::linalg::outer(&z);
        d.w[0] = CVec::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let row = effective_row(ch.stacked(Receiver::User(0)), &d.v).unwrap();
        let leak = row.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr();
        let g = row[0].norm_sqr();
        let expected = g / (leak + ch.sigma2[0]);
        let got = sinr_private(&d, &ch, 0).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn zero_precoders_report_only_shares() {
        let ch = instance(4, 2);
        let mut d = TransmitDesign::zeros(2, 4, 2);
        d.r_c_sec = vec![0.25, 0.5];
        let r = rate_report(&d, &ch).unwrap();
        assert!(r.r_c_k.iter().chain(&r.r_p_k).chain(&r.r_pe_k).all(|x| *x == 0.0));
        assert_eq!(r.sr_k, vec![0.25, 0.5]);
        assert_eq!(r.min_sr, 0.25);
    }

    #[test]
    fn log_terms_match_vector_rates_at_rank_one_points() {
        let ch = instance(4, 2);
        let d = random_design(&ch, dbm_to_watts(20.0), 5);
        let lifted = LiftedPoint::from_design(&d);
        let r = rate_report(&d, &ch).unwrap();
        for k in 0..2 {
            let fp = eval_log_term(LogTerm::FPrivate, &lifted, &ch, k);
            let gp = eval_log_term(LogTerm::GPrivate, &lifted, &ch, k);
            assert!((fp - gp - r.r_p_k[k]).abs() < 1e-10);
            let fc = eval_log_term(LogTerm::FCommon, &lifted, &ch, k);
            let gc = eval_log_term(LogTerm::GCommon, &lifted, &ch, k);
            assert!((fc - gc - r.r_c_k[k]).abs() < 1e-10);
            let fe = eval_log_term(LogTerm::FEve, &lifted, &ch, k);
            let gpe = eval_log_term(LogTerm::GEvePrivate, &lifted, &ch, k);
            assert!((fe - gpe - r.r_pe_k[k]).abs() < 1e-10);
        }
        let fe = eval_log_term(LogTerm::FEve, &lifted, &ch, 0);
        let gce = eval_log_term(LogTerm::GEveCommon, &lifted, &ch, 0);
        assert!((fe - gce - r.r_c_e).abs() < 1e-10);
    }

    #[test]
    fn log_terms_at_zero_point_equal_log_noise() {
        let ch = instance(2, 2);
        let point = LiftedPoint::from_design(&TransmitDesign::zeros(2, 2, 2));
        for term in LogTerm::ALL {
            let v = eval_log_term(term, &point, &ch, 1);
            assert!((v - ch.sigma2[0].log2()).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_reports_power_slack() {
        let ch = instance(2, 2);
        let zero = TransmitDesign::zeros(2, 2, 2);
        let rep = validate_design(&zero, &ch, 0.5).unwrap();
        assert!(rep.is_feasible(1e-12));
        assert_eq!(rep.slack("power"), Some(0.5));

        let mut d = zero.clone();
        d.w_c[0] = Complex64::new(1.0, 0.0);
        let rep = validate_design(&d, &ch, 0.5).unwrap();
        let bad = rep.violations(1e-9);
        assert!(bad.iter().any(|c| c.name == "power" && (c.violation() - 0.5).abs() < 1e-15));
    }

    #[test]
    fn validation_flags_non_unit_modulus() {
        let ch = instance(2, 1);
        let mut d = TransmitDesign::zeros(2, 2, 1);
        d.v[0] = Complex64::new(0.5, 0.0);
        let rep = validate_design(&d, &ch, 1.0).unwrap();
        assert!(rep.violations(1e-9).iter().any(|c| c.name == "unit_modulus"));
    }

    #[test]
    fn water_filling_levels_users() {
        let shares = allocate_common_rate(&[1.0, 0.2, 0.5], 0.6, &[true; 3]);
        // level 0.65: 0.45 + 0.15
        assert!((shares[1] - 0.45).abs() < 1e-12);
        assert!((shares[2] - 0.15).abs() < 1e-12);
        assert_eq!(shares[0], 0.0);
        let restricted = allocate_common_rate(&[1.0, 0.2], 0.6, &[true, false]);
        assert_eq!(restricted, vec![0.6, 0.0]);
        assert_eq!(allocate_common_rate(&[0.0, 0.0], -1.0, &[true, true]), vec![0.0, 0.0]);
    }

    #[test]
    fn dropping_insecure_streams_restores_margins() {
        for seed in 0..10 {
            let ch = instance(4, 2);
            let d = random_design(&ch, dbm_to_watts(20.0), seed);
            let mut point = LiftedPoint::from_design(&d);
            drop_insecure_streams(&mut point, &ch, 0.0);
            let m = lifted_margins(&point, &ch);
            assert!(m.common >= -1e-12);
            assert!(m.private.iter().all(|x| *x >= -1e-12));
        }
    }
}
