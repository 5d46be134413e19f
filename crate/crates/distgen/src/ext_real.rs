//! Extended real line `ℝ ∪ {−∞, +∞}`.
//!
//! Integration limits produced by the monotone maps live on the extended
//! line. Only the operations the construction actually needs are defined:
//! total ordering, min/max, and a small set of checked arithmetic helpers
//! used by expression evaluation. Indeterminate forms (`∞ − ∞`, `0 · ∞`)
//! are reported as errors instead of silently becoming NaN.

use std::cmp::Ordering;
use std::fmt;

/// A point of `ℝ ∪ {−∞, +∞}`. Finite payloads are never NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

/// Indeterminate extended-real arithmetic (`∞ − ∞`, `0 · ∞`, …).
#[derive(Debug, Clone, PartialEq)]
pub struct IndeterminateForm(pub String);

impl fmt::Display for IndeterminateForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "indeterminate extended-real form: {}", self.0)
    }
}

impl std::error::Error for IndeterminateForm {}

impl ExtReal {
    /// Wraps a float, mapping IEEE infinities onto the explicit variants.
    /// NaN is not representable and panics; callers validate upstream.
    pub fn from_f64(x: f64) -> ExtReal {
        assert!(!x.is_nan(), "NaN is not an extended real");
        if x == f64::INFINITY {
            ExtReal::PosInf
        } else if x == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(x)
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Collapses to f64, using IEEE infinities for the endpoints.
    pub fn as_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(x) => x,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// Checked addition. `+∞ + −∞` is indeterminate.
    pub fn checked_add(self, other: ExtReal) -> Result<ExtReal, IndeterminateForm> {
        use ExtReal::*;
        match (self, other) {
            (Finite(a), Finite(b)) => Ok(ExtReal::from_f64(a + b)),
            (PosInf, NegInf) | (NegInf, PosInf) => {
                Err(IndeterminateForm("(+inf) + (-inf)".into()))
            }
            (PosInf, _) | (_, PosInf) => Ok(PosInf),
            (NegInf, _) | (_, NegInf) => Ok(NegInf),
        }
    }

    /// Checked multiplication. `0 · ∞` is indeterminate.
    pub fn checked_mul(self, other: ExtReal) -> Result<ExtReal, IndeterminateForm> {
        use ExtReal::*;
        match (self, other) {
            (Finite(a), Finite(b)) => Ok(ExtReal::from_f64(a * b)),
            (Finite(a), inf) | (inf, Finite(a)) => {
                if a == 0.0 {
                    Err(IndeterminateForm("0 * inf".into()))
                } else if (a > 0.0) == matches!(inf, PosInf) {
                    Ok(PosInf)
                } else {
                    Ok(NegInf)
                }
            }
            (PosInf, PosInf) | (NegInf, NegInf) => Ok(PosInf),
            _ => Ok(NegInf),
        }
    }

    /// `|self − other| ≤ tol` for finite pairs; infinities compare equal
    /// only to the same infinity.
    pub fn approx_eq(self, other: ExtReal, tol: f64) -> bool {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs() <= tol,
            (a, b) => a == b,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &ExtReal) -> Option<Ordering> {
        use ExtReal::*;
        Some(match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (PosInf, _) | (_, NegInf) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.partial_cmp(b)?,
        })
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> ExtReal {
        ExtReal::from_f64(x)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => write!(f, "-inf"),
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::PosInf => write!(f, "inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_total() {
        assert!(ExtReal::NegInf < ExtReal::Finite(-1e308));
        assert!(ExtReal::Finite(1e308) < ExtReal::PosInf);
        assert!(ExtReal::NegInf < ExtReal::PosInf);
        assert!(ExtReal::Finite(0.0) < ExtReal::Finite(1.0));
    }

    #[test]
    fn indeterminate_forms_are_errors() {
        assert!(ExtReal::PosInf.checked_add(ExtReal::NegInf).is_err());
        assert!(ExtReal::Finite(0.0).checked_mul(ExtReal::PosInf).is_err());
        assert_eq!(
            ExtReal::Finite(2.0).checked_mul(ExtReal::PosInf),
            Ok(ExtReal::PosInf)
        );
    }

    #[test]
    fn from_f64_maps_ieee_infinities() {
        assert_eq!(ExtReal::from_f64(f64::INFINITY), ExtReal::PosInf);
        assert_eq!(ExtReal::from_f64(f64::NEG_INFINITY), ExtReal::NegInf);
        assert_eq!(ExtReal::from_f64(1.5), ExtReal::Finite(1.5));
    }
}
