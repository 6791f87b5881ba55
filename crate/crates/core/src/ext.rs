//! Nonnegative extended reals `[0, +∞]`.
//!
//! Values are stored as `f64` with `f64::INFINITY` as the `+∞` sentinel. NaN and
//! negative values are rejected at construction, so the type has a total order.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A value in `[0, +∞]`. Addition saturates at `+∞`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal(0.0);
    pub const ONE: ExtReal = ExtReal(1.0);
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);

    /// Wraps `value` if it is a nonnegative real or `+∞`.
    pub fn new(value: f64) -> Option<Self> {
        if value >= 0.0 {
            // also normalizes -0.0
            Some(ExtReal(value + 0.0))
        } else {
            None
        }
    }

    /// Like [`ExtReal::new`] but clamps tiny negative round-off to zero.
    ///
    /// Panics on NaN or values below `-1e-9`.
    pub(crate) fn clamped(value: f64) -> Self {
        assert!(value >= -1e-9, "negative extended real {value}");
        ExtReal(value.max(0.0))
    }

    pub fn finite(value: f64) -> Option<Self> {
        if value.is_finite() {
            Self::new(value)
        } else {
            None
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    #[inline]
    pub fn is_infinite(self) -> bool {
        !self.0.is_finite()
    }

    /// Multiplication by a nonnegative real with the convention `0 · ∞ = 0`.
    #[inline]
    pub fn scale(self, factor: f64) -> Self {
        debug_assert!(factor >= 0.0);
        if factor == 0.0 {
            ExtReal::ZERO
        } else {
            ExtReal(self.0 * factor)
        }
    }

    /// `self - other` when the result stays in `[0, ∞)`; `∞ - x = ∞` for finite `x`.
    ///
    /// Returns `None` if `other` is infinite or exceeds `self`.
    pub fn checked_sub(self, other: ExtReal) -> Option<ExtReal> {
        if other.is_infinite() {
            return None;
        }
        let d = self.0 - other.0;
        if d >= 0.0 {
            Some(ExtReal(d))
        } else {
            None
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    #[inline]
    fn add(self, rhs: ExtReal) -> ExtReal {
        ExtReal(self.0 + rhs.0)
    }
}

impl Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::ZERO, |acc, x| acc + x)
    }
}

impl From<u32> for ExtReal {
    fn from(v: u32) -> Self {
        ExtReal(f64::from(v))
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            fmt::Display::fmt(&self.0, f)
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ExtVisitor;

        impl Visitor<'_> for ExtVisitor {
            type Value = ExtReal;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a nonnegative number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExtReal, E> {
                ExtReal::finite(v)
                    .ok_or_else(|| E::custom(format!("cost {v} is negative or not finite")))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExtReal, E> {
                Ok(ExtReal(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExtReal, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<ExtReal, E> {
                if v == "inf" {
                    Ok(ExtReal::INFINITY)
                } else {
                    Err(E::custom(format!("expected \"inf\", found {v:?}")))
                }
            }
        }

        deserializer.deserialize_any(ExtVisitor)
    }
}
