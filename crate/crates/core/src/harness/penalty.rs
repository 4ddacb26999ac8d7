//! OSNR at a target BER by log-linear interpolation.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub osnr_db: f64,
    /// False when BER does not decrease monotonically along the curve.
    pub monotone: bool,
}

/// Interpolates `log10(BER)` linearly in OSNR (dB) between the first pair of
/// consecutive points that brackets `target`. The curve must be ordered by
/// increasing OSNR with strictly positive BER values.
pub fn find_osnr_at_ber(curve: &[(f64, f64)], target: f64) -> Result<Crossing> {
    if !(target > 0.0) {
        return Err(Error::invalid("target_ber", "must be positive"));
    }
    if curve.iter().any(|&(o, b)| !(b > 0.0) || !o.is_finite()) {
        return Err(Error::invalid("curve", "BER values must be positive and OSNR finite"));
    }
    if curve.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::invalid("curve", "OSNR must be strictly increasing"));
    }
    let monotone = curve.windows(2).all(|w| w[1].1 <= w[0].1);
    if let [(o, b)] = curve {
        if *b == target {
            return Ok(Crossing { osnr_db: *o, monotone });
        }
    }
    let t = target.log10();
    for w in curve.windows(2) {
        let ((o0, b0), (o1, b1)) = (w[0], w[1]);
        if !(b0.min(b1) <= target && target <= b0.max(b1)) {
            continue;
        }
        let osnr_db = if b0 == target {
            o0
        } else if b1 == target {
            o1
        } else {
            let (l0, l1) = (b0.log10(), b1.log10());
            o0 + (t - l0) / (l1 - l0) * (o1 - o0)
        };
        return Ok(Crossing { osnr_db, monotone });
    }
    Err(Error::NotBracketed { target })
}

/// Which way to extend an OSNR grid that does not bracket the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extend {
    Up,
    Down,
}

pub fn extension_direction(curve: &[(f64, f64)], target: f64) -> Extend {
    if curve.iter().all(|&(_, b)| b > target) {
        Extend::Up
    } else {
        Extend::Down
    }
}
