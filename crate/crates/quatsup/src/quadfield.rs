//! Exact arithmetic in the real quadratic field Q(sqrt(a)).
//!
//! Values are stored as pairs u + v*sqrt(a) of exact rationals. For
//! square-free a > 1 this is a field and sign determination is exact;
//! for a = 1 the pair degenerates to u + v, which the sign logic also
//! handles (sqrt(1) = 1).

use std::cmp::Ordering;

use num::{BigInt, BigRational, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::mp::Ctx;

/// u + v * sqrt(a) with exact rational u, v.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadExt {
    pub a: i64,
    pub u: BigRational,
    pub v: BigRational,
}

impl QuadExt {
    pub fn new(a: i64, u: BigRational, v: BigRational) -> Self {
        QuadExt { a, u, v }
    }

    pub fn from_rational(a: i64, u: BigRational) -> Self {
        QuadExt::new(a, u, BigRational::zero())
    }

    pub fn zero(a: i64) -> Self {
        QuadExt::from_rational(a, BigRational::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.u.is_zero() && self.v.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.v.is_zero()
    }

    pub fn add(&self, o: &Self) -> Self {
        QuadExt::new(self.a, &self.u + &o.u, &self.v + &o.v)
    }

    pub fn sub(&self, o: &Self) -> Self {
        QuadExt::new(self.a, &self.u - &o.u, &self.v - &o.v)
    }

    pub fn neg(&self) -> Self {
        QuadExt::new(self.a, -self.u.clone(), -self.v.clone())
    }

    pub fn mul(&self, o: &Self) -> Self {
        debug_assert_eq!(self.a, o.a);
        let a = BigRational::from_integer(BigInt::from(self.a));
        QuadExt::new(
            self.a,
            &self.u * &o.u + &a * (&self.v * &o.v),
            &self.u * &o.v + &self.v * &o.u,
        )
    }

    pub fn scale(&self, s: &BigRational) -> Self {
        QuadExt::new(self.a, &self.u * s, &self.v * s)
    }

    /// Galois conjugate u - v*sqrt(a).
    pub fn galois_conj(&self) -> Self {
        QuadExt::new(self.a, self.u.clone(), -self.v.clone())
    }

    /// Field norm u^2 - a v^2 (a rational).
    pub fn field_norm(&self) -> BigRational {
        let a = BigRational::from_integer(BigInt::from(self.a));
        &self.u * &self.u - a * (&self.v * &self.v)
    }

    pub fn inverse(&self) -> Option<Self> {
        let n = self.field_norm();
        if n.is_zero() {
            return None;
        }
        Some(self.galois_conj().scale(&n.recip()))
    }

    /// Exact sign of u + v*sqrt(a) as a real number (sqrt(a) > 0).
    pub fn sign(&self) -> Ordering {
        let us = if self.u.is_zero() {
            Ordering::Equal
        } else if self.u.is_positive() {
            Ordering::Greater
        } else {
            Ordering::Less
        };
        let vs = if self.v.is_zero() {
            Ordering::Equal
        } else if self.v.is_positive() {
            Ordering::Greater
        } else {
            Ordering::Less
        };
        match (us, vs) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (Ordering::Greater, Ordering::Greater) => Ordering::Greater,
            (Ordering::Less, Ordering::Less) => Ordering::Less,
            // Opposite signs: compare u^2 with a v^2; sign follows the larger.
            (us, _) => {
                let a = BigRational::from_integer(BigInt::from(self.a));
                let lhs = &self.u * &self.u;
                let rhs = a * (&self.v * &self.v);
                match lhs.cmp(&rhs) {
                    Ordering::Equal => Ordering::Equal, // only possible when a is a square
                    Ordering::Greater => us,
                    Ordering::Less => us.reverse(),
                }
            }
        }
    }

    pub fn is_positive(&self) -> bool {
        self.sign() == Ordering::Greater
    }

    /// Exact comparison with another value of the same field.
    pub fn cmp_exact(&self, o: &Self) -> Ordering {
        self.sub(o).sign()
    }

    /// Exact comparison against a rational.
    pub fn cmp_rational(&self, r: &BigRational) -> Ordering {
        self.sub(&QuadExt::from_rational(self.a, r.clone())).sign()
    }

    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.u) + rational_to_f64(&self.v) * (self.a as f64).sqrt()
    }

    pub fn to_float(&self, ctx: &Ctx) -> rug::Float {
        let sqrt_a = ctx.float_from_i64(self.a).sqrt();
        ctx.float_from_rational(&self.u) + ctx.float_from_rational(&self.v) * sqrt_a
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    // Good enough for screening; exact paths never rely on this.
    let num = r.numer();
    let den = r.denom();
    match (num.to_string().parse::<f64>(), den.to_string().parse::<f64>()) {
        (Ok(n), Ok(d)) => n / d,
        _ => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::One;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn exact_sign_of_mixed_terms() {
        // 2 - sqrt(3) > 0, 3 - 2 sqrt(3) < 0, 2 sqrt(3) - 3 > 0
        let x = QuadExt::new(3, q(2, 1), q(-1, 1));
        assert_eq!(x.sign(), Ordering::Greater);
        let y = QuadExt::new(3, q(3, 1), q(-2, 1));
        assert_eq!(y.sign(), Ordering::Less);
        let z = QuadExt::new(3, q(-3, 1), q(2, 1));
        assert_eq!(z.sign(), Ordering::Greater);
        assert_eq!(QuadExt::zero(3).sign(), Ordering::Equal);
    }

    #[test]
    fn field_ops() {
        let x = QuadExt::new(3, q(1, 2), q(1, 3));
        let inv = x.inverse().unwrap();
        let prod = x.mul(&inv);
        assert!(prod.u.is_one() && prod.v.is_zero());
        // (u + v s)(u - v s) = norm
        let n = x.mul(&x.galois_conj());
        assert_eq!(n.u, x.field_norm());
        assert!(n.v.is_zero());
    }

    #[test]
    fn f64_screen_agrees() {
        let x = QuadExt::new(3, q(7, 5), q(-2, 9));
        let expect = 1.4 - (2.0 / 9.0) * 3f64.sqrt();
        assert!((x.to_f64() - expect).abs() < 1e-12);
    }
}
