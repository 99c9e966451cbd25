//! Probability arithmetic shared by the exact (rational) and floating paths.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Exact probabilities.
pub type Exact = BigRational;

pub trait Prob:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + AddAssign
    + Send
    + Sync
    + 'static
{
    fn ratio(num: u64, den: u64) -> Self;
    fn as_f64(&self) -> f64;

    fn recip_of(den: u64) -> Self {
        Self::ratio(1, den)
    }
}

impl Prob for f64 {
    fn ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn as_f64(&self) -> f64 {
        *self
    }
}

impl Prob for BigRational {
    fn ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn as_f64(&self) -> f64 {
        // Large numerators and denominators overflow a direct conversion.
        if let Some(v) = ToPrimitive::to_f64(self) {
            if v.is_finite() && (v != 0.0 || self.is_zero()) {
                return v;
            }
        }
        let (n, d) = (self.numer(), self.denom());
        let shift = n.bits() as i64 - d.bits() as i64;
        let scaled = if shift > 0 {
            BigRational::new(n.clone(), d.clone() << (shift as usize))
        } else {
            BigRational::new(n.clone() << ((-shift) as usize), d.clone())
        };
        ToPrimitive::to_f64(&scaled).unwrap_or(0.0) * 2f64.powi(shift as i32)
    }
}

/// Raises `p` to a non-negative integer power by squaring.
pub fn pow<P: Prob>(p: &P, mut e: u64) -> P {
    let mut base = p.clone();
    let mut acc = P::one();
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base.clone();
        }
        base = base.clone() * base;
        e >>= 1;
    }
    acc
}
