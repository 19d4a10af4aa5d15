//! Exact rational suboptimality factors and the integer scale they induce.
//!
//! A factor `w = p/q` maps every cost `c` to `q·c` and every weighted cost
//! `w·c` to `p·c`, so all bound checks are integer comparisons.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Plain (unscaled) path cost or distance.
pub type Cost = u64;

/// A value in units of `1/q`, where `q` is the factor's denominator.
pub type Scaled = i64;

/// Largest denominator accepted when converting decimal literals.
pub const MAX_DENOMINATOR: u64 = 1000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightError {
    #[error("suboptimality must be at least 1, got {0}")]
    BelowOne(String),
    #[error("cannot parse suboptimality {0:?}")]
    Syntax(String),
    #[error("{0:?} has no rational form with denominator <= {MAX_DENOMINATOR}")]
    TooFine(String),
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Suboptimality factor `w >= 1` stored in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SuboptFactor {
    num: u32,
    den: u32,
}

impl SuboptFactor {
    pub const ONE: SuboptFactor = SuboptFactor { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self, WeightError> {
        if den == 0 {
            return Err(WeightError::Syntax(format!("{num}/{den}")));
        }
        if num < den {
            return Err(WeightError::BelowOne(format!("{num}/{den}")));
        }
        let g = gcd(num as u64, den as u64) as u32;
        Ok(Self { num: num / g, den: den / g })
    }

    pub fn integer(w: u32) -> Self {
        Self::new(w.max(1), 1).expect("integer factor")
    }

    pub fn numerator(self) -> u32 {
        self.num
    }

    pub fn denominator(self) -> u32 {
        self.den
    }

    /// `c` in scaled units.
    #[inline]
    pub fn scale(self, c: Cost) -> Scaled {
        c as Scaled * self.den as Scaled
    }

    /// `w·c` in scaled units.
    #[inline]
    pub fn weigh(self, c: Cost) -> Scaled {
        c as Scaled * self.num as Scaled
    }

    /// Reporting only; never used in comparisons.
    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for SuboptFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for SuboptFactor {
    type Err = WeightError;

    /// Accepts `p/q`, integers, and finite decimals such as `1.5`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        let syntax = || WeightError::Syntax(s.to_string());
        if let Some((p, q)) = text.split_once('/') {
            let p: u64 = p.trim().parse().map_err(|_| syntax())?;
            let q: u64 = q.trim().parse().map_err(|_| syntax())?;
            if q == 0 {
                return Err(syntax());
            }
            let g = gcd(p, q);
            let (p, q) = (p / g, q / g);
            if q > MAX_DENOMINATOR {
                return Err(WeightError::TooFine(s.to_string()));
            }
            return to_factor(p, q, s);
        }
        let (int, frac) = text.split_once('.').unwrap_or((text, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(syntax());
        }
        if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(syntax());
        }
        let frac = frac.trim_end_matches('0');
        if frac.len() > 18 {
            return Err(WeightError::TooFine(s.to_string()));
        }
        let q = 10u64.pow(frac.len() as u32);
        let int_part: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| syntax())? };
        let frac_part: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| syntax())? };
        let p = int_part.checked_mul(q).and_then(|v| v.checked_add(frac_part)).ok_or_else(syntax)?;
        let g = gcd(p, q);
        let (p, q) = (p / g, q / g);
        if q > MAX_DENOMINATOR {
            return Err(WeightError::TooFine(s.to_string()));
        }
        to_factor(p, q, s)
    }
}

fn to_factor(p: u64, q: u64, original: &str) -> Result<SuboptFactor, WeightError> {
    if p < q {
        return Err(WeightError::BelowOne(original.to_string()));
    }
    let p = u32::try_from(p).map_err(|_| WeightError::Syntax(original.to_string()))?;
    SuboptFactor::new(p, q as u32)
}
