use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channels::ChannelRealization;
use crate::error::{Error, Result};
use crate::linalg::{hermitize, inner, CMat};
use crate::rates::{log_argument_normalized, reflection_pairing, stream_sum, transmit_pairing, LiftedPoint, LogTerm};

/// Which block of the lifted point a linearization is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    /// Stream covariances and artificial noise, `V` fixed.
    Transmit,
    /// Reflection matrix `V`, stream covariances fixed.
    Reflection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatrixSlot {
    Common,
    Private(usize),
    Noise,
    Reflection,
}

impl MatrixSlot {
    pub fn get(self, point: &LiftedPoint) -> &CMat {
        match self {
            MatrixSlot::Common => &point.w_common,
            MatrixSlot::Private(k) => &point.w_private[k],
            MatrixSlot::Noise => &point.z,
            MatrixSlot::Reflection => &point.v,
        }
    }
}

/// First-order expansion of one log term; an upper bound because the term
/// is concave.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorExpansion {
    pub term: LogTerm,
    pub user: usize,
    pub block: Block,
    pub base_value: f64,
    pub gradients: BTreeMap<MatrixSlot, CMat>,
    /// Matrices of the expansion point, keyed like `gradients`.
    pub base: BTreeMap<MatrixSlot, CMat>,
}

impl TaylorExpansion {
    /// `base_value + sum <grad, X - X_base>` at the matrices of `point`.
    pub fn upper_bound(&self, point: &LiftedPoint) -> f64 {
        self.base_value
            + self
                .gradients
                .iter()
                .map(|(slot, g)| inner(g, slot.get(point)) - inner(g, &self.base[slot]))
                .sum::<f64>()
    }

    /// `base_value - sum <grad, X_base>`: the constant of the affine bound.
    pub fn offset(&self) -> f64 {
        self.base_value - self.gradients.iter().map(|(slot, g)| inner(g, &self.base[slot])).sum::<f64>()
    }
}

/// Linearizes `term` for user `k` at `point` with respect to `block`.
pub fn taylor_of_log_term(term: LogTerm, point: &LiftedPoint, ch: &ChannelRealization, k: usize, block: Block) -> Result<TaylorExpansion> {
    let set = term.streams(k, ch.users());
    let sigma2 = ch.noise(set.receiver);
    let arg_norm = log_argument_normalized(term, point, ch, k);
    if !(arg_norm > 0.0 && arg_norm.is_finite()) {
        return Err(Error::Build(format!(
            "log argument of {term:?} (user {k}) is {arg_norm:e} times the noise power at the expansion point"
        )));
    }
    let arg = sigma2 * arg_norm;
    let base_value = sigma2.log2() + arg_norm.log2();
    let mut gradients = BTreeMap::new();
    let mut base = BTreeMap::new();
    match block {
        Block::Transmit => {
            let a = hermitize(&transmit_pairing(ch, set.receiver, &point.v));
            let g = a.unscale(LN_2 * arg);
            let mut slots = vec![MatrixSlot::Noise];
            if set.common {
                slots.push(MatrixSlot::Common);
            }
            slots.extend(set.private.iter().map(|&i| MatrixSlot::Private(i)));
            for s in slots {
                gradients.insert(s, g.clone());
                base.insert(s, s.get(point).clone());
            }
        }
        Block::Reflection => {
            let s = stream_sum(point, &set);
            let b = hermitize(&reflection_pairing(ch, set.receiver, &s));
            gradients.insert(MatrixSlot::Reflection, b.unscale(LN_2 * arg));
            base.insert(MatrixSlot::Reflection, point.v.clone());
        }
    }
    Ok(TaylorExpansion {
        term,
        user: k,
        block,
        base_value,
        gradients,
        base,
    })
}
