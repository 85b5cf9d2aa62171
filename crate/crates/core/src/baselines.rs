//! Comparison schemes. Every scheme runs the same alternating optimization
//! with a restricted stream layout; the no-IRS variants run it on the direct
//! links only.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ao::{ao_solve_from, ao_solve_layout, initialize, AOConfig, AOSolution, InitStrategy};
use crate::channels::ChannelRealization;
use crate::error::{Error, Result};
use crate::rates::StreamLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Rsma,
    Mulp,
    Noma2,
    RsmaNoIrs,
    MulpNoIrs,
    Noma2NoIrs,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::Rsma,
        SchemeId::Mulp,
        SchemeId::Noma2,
        SchemeId::RsmaNoIrs,
        SchemeId::MulpNoIrs,
        SchemeId::Noma2NoIrs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Rsma => "rsma",
            SchemeId::Mulp => "mulp",
            SchemeId::Noma2 => "noma2",
            SchemeId::RsmaNoIrs => "rsma_no_irs",
            SchemeId::MulpNoIrs => "mulp_no_irs",
            SchemeId::Noma2NoIrs => "noma2_no_irs",
        }
    }

    pub fn uses_irs(self) -> bool {
        matches!(self, SchemeId::Rsma | SchemeId::Mulp | SchemeId::Noma2)
    }

    /// The same stream layout with the IRS present.
    pub fn with_irs(self) -> SchemeId {
        match self {
            SchemeId::RsmaNoIrs => SchemeId::Rsma,
            SchemeId::MulpNoIrs => SchemeId::Mulp,
            SchemeId::Noma2NoIrs => SchemeId::Noma2,
            s => s,
        }
    }

    pub fn without_irs(self) -> SchemeId {
        match self {
            SchemeId::Rsma => SchemeId::RsmaNoIrs,
            SchemeId::Mulp => SchemeId::MulpNoIrs,
            SchemeId::Noma2 => SchemeId::Noma2NoIrs,
            s => s,
        }
    }

    pub fn requires_two_users(self) -> bool {
        matches!(self, SchemeId::Noma2 | SchemeId::Noma2NoIrs)
    }

    /// Stream layout of the scheme on `ch`.
    pub fn layout(self, ch: &ChannelRealization) -> Result<StreamLayout> {
        let k = ch.users();
        match self.with_irs() {
            SchemeId::Rsma => Ok(StreamLayout::rsma(k)),
            SchemeId::Mulp => Ok(StreamLayout::mulp(k)),
            _ => {
                if k != 2 {
                    return Err(Error::Unsupported(format!("{self} needs exactly two users, got {k}")));
                }
                Ok(StreamLayout::noma(k, noma_weak_user(ch)))
            }
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}` (expected one of rsma, mulp, noma2, rsma_no_irs, mulp_no_irs, noma2_no_irs)")))
    }
}

/// User with the smaller direct-channel norm; ties go to the lower index.
pub fn noma_weak_user(ch: &ChannelRealization) -> usize {
    let mut weak = 0;
    for k in 1..ch.users() {
        if ch.h_d[k].norm() < ch.h_d[weak].norm() {
            weak = k;
        }
    }
    weak
}

pub fn solve_rsma(ch: &ChannelRealization, config: &AOConfig) -> Result<AOSolution> {
    ao_solve_layout(ch, config, &StreamLayout::rsma(ch.users()))
}

/// Private streams only: no common precoder and no common rate.
pub fn solve_mulp(ch: &ChannelRealization, config: &AOConfig) -> Result<AOSolution> {
    ao_solve_layout(ch, config, &StreamLayout::mulp(ch.users()))
}

/// Two-user NOMA: the weak user's message rides the common stream, which
/// the strong user decodes and cancels before its private stream.
pub fn solve_noma2(ch: &ChannelRealization, config: &AOConfig) -> Result<AOSolution> {
    let layout = SchemeId::Noma2.layout(ch)?;
    ao_solve_layout(ch, config, &layout)
}

/// Runs the IRS-aided counterpart of `scheme` on the direct links only.
pub fn solve_no_irs(scheme: SchemeId, ch: &ChannelRealization, config: &AOConfig) -> Result<AOSolution> {
    solve_scheme(scheme.with_irs(), &ch.without_irs(), config)
}

pub fn solve_scheme(scheme: SchemeId, ch: &ChannelRealization, config: &AOConfig) -> Result<AOSolution> {
    match scheme {
        SchemeId::Rsma => solve_rsma(ch, config),
        SchemeId::Mulp => solve_mulp(ch, config),
        SchemeId::Noma2 => solve_noma2(ch, config),
        s => solve_no_irs(s, ch, config),
    }
}

fn better(a: AOSolution, b: AOSolution) -> AOSolution {
    // ties keep the first run
    if b.min_secrecy_rate() > a.min_secrecy_rate() {
        b
    } else {
        a
    }
}

/// RSMA for a paired comparison against the restricted scheme `sub`: the
/// usual run plus a run started from `sub`'s own initial point, keeping the
/// better of the two. The alternating optimization is local, so this is how
/// the richer layout gets to see the start the restricted one had.
pub fn solve_rsma_matched(sub: SchemeId, ch: &ChannelRealization, config: &AOConfig) -> Result<AOSolution> {
    let plain = solve_rsma(ch, config)?;
    if sub.with_irs() == SchemeId::Rsma || config.p_max == 0.0 {
        return Ok(plain);
    }
    Ok(better(plain, solve_rsma_from_start_of(sub, ch, config)?))
}

/// RSMA started from the initial point `sub` would use. The second half of
/// [`solve_rsma_matched`], for callers that already hold the plain run.
pub fn solve_rsma_from_start_of(sub: SchemeId, ch: &ChannelRealization, config: &AOConfig) -> Result<AOSolution> {
    let start = initialize(ch, config, &sub.with_irs().layout(ch)?);
    ao_solve_from(ch, config, &StreamLayout::rsma(ch.users()), &start)
}

/// IRS-aided `scheme` for a paired comparison against its no-IRS variant:
/// the configured start plus the identity-phase start, keeping the better.
pub fn solve_with_irs_matched(scheme: SchemeId, ch: &ChannelRealization, config: &AOConfig) -> Result<AOSolution> {
    let scheme = scheme.with_irs();
    let plain = solve_scheme(scheme, ch, config)?;
    if config.init_strategy == InitStrategy::IdentityPhase {
        return Ok(plain);
    }
    let identity = AOConfig {
        init_strategy: InitStrategy::IdentityPhase,
        ..config.clone()
    };
    Ok(better(plain, solve_scheme(scheme, ch, &identity)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{assemble_channels, FadingConfig, SystemGeometry};
    use crate::linalg::dbm_to_watts;

    fn instance(users: usize, elements: usize, seed: u64) -> ChannelRealization {
        let lu = vec![[0.0, 20.0], [50.0, 5.0], [0.0, -20.0]];
        let geo = SystemGeometry {
            ap_pos: [0.0, 0.0],
            irs_pos: [50.0, 0.0],
            eve_pos: [45.0, 0.0],
            lu_pos: lu[..users].to_vec(),
            antennas: 2,
            elements,
        };
        assemble_channels(&geo, &FadingConfig { seed, ..Default::default() }).unwrap()
    }

    fn config() -> AOConfig {
        AOConfig {
            p_max: dbm_to_watts(20.0),
            ..Default::default()
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in SchemeId::ALL {
            assert_eq!(s.as_str().parse::<SchemeId>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
            assert_eq!(s.with_irs().without_irs(), s.without_irs());
        }
        assert!("noma".parse::<SchemeId>().is_err());
    }

    #[test]
    fn single_user_mulp_equals_rsma_without_common() {
        let ch = instance(1, 4, 1);
        let cfg = config();
        let no_common = StreamLayout {
            common: false,
            private: vec![true],
            common_share: vec![true],
        };
        let a = solve_mulp(&ch, &cfg).unwrap();
        let b = ao_solve_layout(&ch, &cfg, &no_common).unwrap();
        assert!((a.min_secrecy_rate() - b.min_secrecy_rate()).abs() < 1e-4);
    }

    #[test]
    fn rsma_dominates_mulp_on_seeded_instance() {
        let ch = instance(2, 4, 2);
        let cfg = config();
        let r = solve_rsma(&ch, &cfg).unwrap();
        let m = solve_mulp(&ch, &cfg).unwrap();
        assert!(r.min_secrecy_rate() >= m.min_secrecy_rate() - 1e-3, "{} vs {}", r.min_secrecy_rate(), m.min_secrecy_rate());
        assert_eq!(m.design.w_c.norm(), 0.0);
        assert!(m.design.r_c_sec.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn zero_budget_gives_zero_for_every_scheme() {
        let ch = instance(2, 4, 3);
        let cfg = AOConfig { p_max: 0.0, ..Default::default() };
        for s in SchemeId::ALL {
            assert_eq!(solve_scheme(s, &ch, &cfg).unwrap().min_secrecy_rate(), 0.0, "{s}");
        }
    }

    #[test]
    fn noma_needs_two_users() {
        let cfg = config();
        for k in [1, 3] {
            let ch = instance(k, 2, 4);
            assert!(matches!(solve_noma2(&ch, &cfg), Err(Error::Unsupported(_))));
            assert!(matches!(solve_scheme(SchemeId::Noma2NoIrs, &ch, &cfg), Err(Error::Unsupported(_))));
        }
    }

    #[test]
    fn noma_weak_user_has_no_private_stream() {
        let ch = instance(2, 4, 5);
        let sol = solve_noma2(&ch, &config()).unwrap();
        let weak = noma_weak_user(&ch);
        assert_eq!(sol.design.w[weak].norm(), 0.0);
        assert_eq!(sol.design.r_c_sec[1 - weak], 0.0);
        let r = solve_rsma(&ch, &config()).unwrap();
        assert!(r.min_secrecy_rate() >= sol.min_secrecy_rate() - 1e-3, "{} vs {}", r.min_secrecy_rate(), sol.min_secrecy_rate());
    }

    #[test]
    fn noma_on_identical_users_is_no_better_than_rsma() {
        let base = instance(2, 4, 6);
        let ch = ChannelRealization::from_links(
            base.g.clone(),
            vec![base.h_d[0].clone(), base.h_d[0].clone()],
            base.h_de.clone(),
            vec![base.h_r[0].clone(), base.h_r[0].clone()],
            base.h_re.clone(),
            base.sigma2.clone(),
        )
        .unwrap();
        let cfg = config();
        assert_eq!(noma_weak_user(&ch), 0);
        let n = solve_noma2(&ch, &cfg).unwrap();
        // the NOMA design is an RSMA design; continuing from it must not lose
        let r = ao_solve_from(&ch, &cfg, &StreamLayout::rsma(2), &n.lifted).unwrap();
        assert!(n.min_secrecy_rate() <= r.min_secrecy_rate() + 1e-3, "{} vs {}", n.min_secrecy_rate(), r.min_secrecy_rate());
        assert!(n.lifted_objective() <= r.lifted_objective() + 1e-9);
    }

    #[test]
    fn no_irs_on_direct_only_channels_is_the_same_run() {
        let ch = instance(2, 0, 7);
        let cfg = config();
        let a = solve_scheme(SchemeId::Rsma, &ch, &cfg).unwrap();
        let b = solve_scheme(SchemeId::RsmaNoIrs, &ch, &cfg).unwrap();
        assert_eq!(a.design, b.design);
        assert_eq!(a.trace.without_timing(), b.trace.without_timing());
    }

    #[test]
    fn irs_does_not_hurt_on_seeded_instance() {
        let ch = instance(2, 16, 8);
        let cfg = config();
        let with = solve_with_irs_matched(SchemeId::Rsma, &ch, &cfg).unwrap();
        let without = solve_no_irs(SchemeId::Rsma, &ch, &cfg).unwrap();
        assert_eq!(without.design.v.len(), 1);
        assert!(with.min_secrecy_rate() >= without.min_secrecy_rate() - 1e-3, "{} vs {}", with.min_secrecy_rate(), without.min_secrecy_rate());
    }
}
