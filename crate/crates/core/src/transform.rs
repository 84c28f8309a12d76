//! Value transformations mapping accumulated costs in `[0, inf]` onto `[0, 1]`.
//!
//! The harmonic map `H(v) = v / (1 + v)` keeps forbidden regions (infinite cost) at the
//! finite pin `1` and, unlike the exponential (Kruzkov) map `1 - exp(-v)`, does not lose all
//! resolution once costs grow past a few tens of units. Two exact identities make it usable
//! inside a dynamic-programming recursion:
//!
//! * shift: `H(x1 + x2)` can be written with `H(x1)` and `x2` only ([`harmonic_shift`]);
//! * convex combination: `H(a vT + (1 - a) vE)` can be written with `H(vT)` and `H(vE)`
//!   only ([`harmonic_convex`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A transformed value in `[0, 1]`: `0` at the goal, `1` on forbidden regions.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TransformedValue(f64);

impl TransformedValue {
    pub const GOAL: TransformedValue = TransformedValue(0.0);
    pub const FORBIDDEN: TransformedValue = TransformedValue(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(TransformedValue(value))
        } else {
            Err(Error::Domain(format!(
                "transformed value {value} outside [0, 1]"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TransformedValue {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        TransformedValue::new(value)
    }
}

impl From<TransformedValue> for f64 {
    fn from(v: TransformedValue) -> f64 {
        v.0
    }
}

/// Which value transformation a solver runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Harmonic,
    Kruzkov,
}

impl TransformKind {
    pub fn forward(self, v: f64) -> Result<TransformedValue> {
        match self {
            TransformKind::Harmonic => harmonic(v),
            TransformKind::Kruzkov => kruzkov(v),
        }
    }

    pub fn inverse(self, h: TransformedValue) -> f64 {
        match self {
            TransformKind::Harmonic => harmonic_inverse(h),
            TransformKind::Kruzkov => kruzkov_inverse(h),
        }
    }

    /// One dynamic-programming step in transformed coordinates: the transform of
    /// `g + inverse(successor)`.
    #[inline]
    pub(crate) fn step(self, successor: f64, g: f64) -> f64 {
        match self {
            TransformKind::Harmonic => shift_raw(successor, g),
            TransformKind::Kruzkov => {
                if successor >= 1.0 {
                    1.0
                } else {
                    (1.0 - (-g).exp() * (1.0 - successor)).clamp(0.0, 1.0)
                }
            }
        }
    }
}

fn check_cost(v: f64) -> Result<()> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "cost {v} must be nonnegative (or +inf)"
        )))
    }
}

/// `H(v) = v / (1 + v)`, with `H(+inf) = 1`.
pub fn harmonic(v: f64) -> Result<TransformedValue> {
    check_cost(v)?;
    if v.is_infinite() {
        return Ok(TransformedValue::FORBIDDEN);
    }
    Ok(TransformedValue((v / (1.0 + v)).min(1.0)))
}

/// `v = h / (1 - h)`; `h = 1` maps to `+inf`.
pub fn harmonic_inverse(h: TransformedValue) -> f64 {
    let h = h.get();
    if h >= 1.0 {
        f64::INFINITY
    } else {
        h / (1.0 - h)
    }
}

/// `H(inverse(h1) + x2)` evaluated without leaving transformed coordinates.
pub fn harmonic_shift(h1: TransformedValue, x2: f64) -> Result<TransformedValue> {
    check_cost(x2)?;
    Ok(TransformedValue(shift_raw(h1.get(), x2)))
}

#[inline]
pub(crate) fn shift_raw(h1: f64, x2: f64) -> f64 {
    if h1 >= 1.0 || x2.is_infinite() {
        return 1.0;
    }
    let slack = (1.0 - h1) * x2;
    ((h1 + slack) / (1.0 + slack)).clamp(0.0, 1.0)
}

/// `H(alpha * inverse(t) + (1 - alpha) * inverse(e))` evaluated in transformed coordinates.
///
/// When both inputs are `1` the closed form is `0/0`; the forbidden limit `1` is returned so
/// that obstacles stay absorbing for every weight.
pub fn harmonic_convex(
    t: TransformedValue,
    e: TransformedValue,
    alpha: f64,
) -> Result<TransformedValue> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("weight {alpha} outside [0, 1]")));
    }
    Ok(TransformedValue(convex_raw(t.get(), e.get(), alpha)))
}

#[inline]
pub(crate) fn convex_raw(t: f64, e: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        return t;
    }
    if alpha == 0.0 {
        return e;
    }
    // Written as sums of non-negative terms so that values at 1 cancel exactly.
    let den = alpha * (1.0 - e) + (1.0 - alpha) * (1.0 - t);
    if den <= 0.0 {
        return 1.0;
    }
    let num = alpha * t * (1.0 - e) + (1.0 - alpha) * e * (1.0 - t);
    (num / den).clamp(0.0, 1.0)
}

/// `1 - exp(-v)`.
pub fn kruzkov(v: f64) -> Result<TransformedValue> {
    check_cost(v)?;
    Ok(TransformedValue((-(-v).exp_m1()).clamp(0.0, 1.0)))
}

/// `-ln(1 - h)`; infinite once `1 - h` rounds to zero.
pub fn kruzkov_inverse(h: TransformedValue) -> f64 {
    -(-h.get()).ln_1p()
}
