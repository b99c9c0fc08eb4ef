//! Exact arithmetic in the rational quaternion algebra (a,b/Q).
//!
//! Elements are written over the basis {1, w, W, wW} with the relations
//! w^2 = a, W^2 = b and wW = -Ww. All coordinates are exact rationals;
//! nothing in this module rounds.

use std::fmt;

use num::{BigInt, BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters (a, b) of the algebra. Both must be square-free, a > 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlgebraParams {
    pub a: i64,
    pub b: i64,
}

pub(crate) fn is_square_free(n: i64) -> bool {
    let mut m = n.unsigned_abs();
    if m == 0 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= m {
        if m % d == 0 {
            m /= d;
            if m % d == 0 {
                return false;
            }
        }
        d += 1;
    }
    true
}

impl AlgebraParams {
    /// Validates square-freeness and positivity of `a`.
    pub fn new(a: i64, b: i64) -> Result<Self> {
        if a <= 0 {
            return Err(Error::UnsupportedAlgebra(format!(
                "a = {a} must be positive (sqrt(a) real)"
            )));
        }
        if !is_square_free(a) || !is_square_free(b) {
            return Err(Error::Parameter(format!(
                "(a, b) = ({a}, {b}) must both be square-free and nonzero"
            )));
        }
        Ok(AlgebraParams { a, b })
    }
}

/// Exact element x0 + x1*w + x2*W + x3*wW of the algebra.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RationalQuaternion {
    pub algebra: AlgebraParams,
    pub coords: [BigRational; 4],
}

fn br(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl RationalQuaternion {
    pub fn new(algebra: AlgebraParams, coords: [BigRational; 4]) -> Self {
        RationalQuaternion { algebra, coords }
    }

    pub fn from_i64(algebra: AlgebraParams, coords: [i64; 4]) -> Self {
        RationalQuaternion::new(algebra, coords.map(br))
    }

    /// Coordinates given as (numerator, denominator) pairs.
    pub fn from_ratios(algebra: AlgebraParams, coords: [(i64, i64); 4]) -> Self {
        RationalQuaternion::new(
            algebra,
            coords.map(|(n, d)| BigRational::new(BigInt::from(n), BigInt::from(d))),
        )
    }

    pub fn zero(algebra: AlgebraParams) -> Self {
        Self::from_i64(algebra, [0, 0, 0, 0])
    }

    pub fn one(algebra: AlgebraParams) -> Self {
        Self::from_i64(algebra, [1, 0, 0, 0])
    }

    /// The basis element w (so w^2 = a).
    pub fn omega(algebra: AlgebraParams) -> Self {
        Self::from_i64(algebra, [0, 1, 0, 0])
    }

    /// The basis element W (so W^2 = b).
    pub fn omega_cap(algebra: AlgebraParams) -> Self {
        Self::from_i64(algebra, [0, 0, 1, 0])
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(Zero::is_zero)
    }

    fn check_same_algebra(&self, other: &Self) -> Result<()> {
        if self.algebra != other.algebra {
            return Err(Error::AlgebraMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.algebra.a, self.algebra.b, other.algebra.a, other.algebra.b
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_algebra(other)?;
        let mut coords = self.coords.clone();
        for (c, o) in coords.iter_mut().zip(&other.coords) {
            *c += o;
        }
        Ok(RationalQuaternion::new(self.algebra, coords))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_algebra(other)?;
        let mut coords = self.coords.clone();
        for (c, o) in coords.iter_mut().zip(&other.coords) {
            *c -= o;
        }
        Ok(RationalQuaternion::new(self.algebra, coords))
    }

    pub fn scale(&self, s: &BigRational) -> Self {
        RationalQuaternion::new(self.algebra, self.coords.clone().map(|c| c * s))
    }

    /// Bilinear product under w^2 = a, W^2 = b, wW = -Ww.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check_same_algebra(other)?;
        let a = &br(self.algebra.a);
        let b = &br(self.algebra.b);
        let ab = &(a * b);
        let [x0, x1, x2, x3] = &self.coords;
        let [y0, y1, y2, y3] = &other.coords;
        let z0 = x0 * y0 + a * (x1 * y1) + b * (x2 * y2) - ab * (x3 * y3);
        let z1 = x0 * y1 + x1 * y0 - b * (x2 * y3) + b * (x3 * y2);
        let z2 = x0 * y2 + x2 * y0 + a * (x1 * y3) - a * (x3 * y1);
        let z3 = x0 * y3 + x3 * y0 + x1 * y2 - x2 * y1;
        Ok(RationalQuaternion::new(self.algebra, [z0, z1, z2, z3]))
    }

    /// Conjugate: flips the sign of the three non-scalar coordinates.
    pub fn conjugate(&self) -> Self {
        let [x0, x1, x2, x3] = self.coords.clone();
        RationalQuaternion::new(self.algebra, [x0, -x1, -x2, -x3])
    }

    /// Reduced trace T(q) = q + conj(q) = 2*x0.
    pub fn reduced_trace(&self) -> BigRational {
        &self.coords[0] + &self.coords[0]
    }

    /// Reduced norm N(q) = q * conj(q) = x0^2 - a*x1^2 - b*x2^2 + a*b*x3^2.
    pub fn reduced_norm(&self) -> BigRational {
        let a = br(self.algebra.a);
        let b = br(self.algebra.b);
        let [x0, x1, x2, x3] = &self.coords;
        x0 * x0 - &a * (x1 * x1) - &b * (x2 * x2) + &a * &b * (x3 * x3)
    }

    /// Inverse conj(q)/N(q); `None` for q = 0 (and N never vanishes on
    /// nonzero elements of a division algebra).
    pub fn inverse(&self) -> Option<Self> {
        let n = self.reduced_norm();
        if n.is_zero() {
            return None;
        }
        Some(self.conjugate().scale(&n.recip()))
    }

    /// True when every coordinate is an integer.
    pub fn is_integral(&self) -> bool {
        self.coords.iter().all(|c| c.denom().is_one())
    }

    /// Lexicographic comparison on exact coordinates; the canonical order
    /// used everywhere a reproducible element order is required.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        for (c, o) in self.coords.iter().zip(&other.coords) {
            let ord = c.cmp(o);
            if ord != std::cmp::Ordering::Equal {
                return ord;
            }
        }
        std::cmp::Ordering::Equal
    }

    pub fn neg(&self) -> Self {
        RationalQuaternion::new(self.algebra, self.coords.clone().map(|c| -c))
    }
}

impl fmt::Display for RationalQuaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = ["", "*w", "*W", "*wW"];
        let mut first = true;
        for (c, name) in self.coords.iter().zip(names) {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " {} ", if c.is_negative() { "-" } else { "+" })?;
                write!(f, "{}{}", c.abs(), name)?;
            } else {
                write!(f, "{c}{name}")?;
                first = false;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn alg() -> AlgebraParams {
        AlgebraParams::new(3, -1).unwrap()
    }

    fn rand_quat(rng: &mut ChaCha12Rng, algebra: AlgebraParams) -> RationalQuaternion {
        let coords = std::array::from_fn(|_| {
            BigRational::new(
                BigInt::from(rng.gen_range(-30i64..=30)),
                BigInt::from(rng.gen_range(1i64..=7)),
            )
        });
        RationalQuaternion::new(algebra, coords)
    }

    #[test]
    fn defining_relations() {
        let a = alg();
        let w = RationalQuaternion::omega(a);
        let cap = RationalQuaternion::omega_cap(a);
        // w * W = wW
        assert_eq!(
            w.multiply(&cap).unwrap(),
            RationalQuaternion::from_i64(a, [0, 0, 0, 1])
        );
        // W * w = -wW
        assert_eq!(
            cap.multiply(&w).unwrap(),
            RationalQuaternion::from_i64(a, [0, 0, 0, -1])
        );
        // w^2 = a = 3
        assert_eq!(
            w.multiply(&w).unwrap(),
            RationalQuaternion::from_i64(a, [3, 0, 0, 0])
        );
        // W^2 = b = -1
        assert_eq!(
            cap.multiply(&cap).unwrap(),
            RationalQuaternion::from_i64(a, [-1, 0, 0, 0])
        );
    }

    #[test]
    fn conjugate_trace_norm_basics() {
        let a = alg();
        let q = RationalQuaternion::from_i64(a, [1, 1, 0, 0]);
        assert_eq!(q.conjugate(), RationalQuaternion::from_i64(a, [1, -1, 0, 0]));
        assert_eq!(q.reduced_trace(), br(2));
        // N(1 + w) = 1 - a = -2, cross-checked against q * conj(q).
        assert_eq!(q.reduced_norm(), br(-2));
        let qqbar = q.multiply(&q.conjugate()).unwrap();
        assert_eq!(qqbar, RationalQuaternion::from_i64(a, [-2, 0, 0, 0]));
        // N(W) = -b = 1, same cross-check.
        let cap = RationalQuaternion::omega_cap(a);
        assert_eq!(cap.reduced_norm(), br(1));
        let ccbar = cap.multiply(&cap.conjugate()).unwrap();
        assert_eq!(ccbar, RationalQuaternion::one(a));
    }

    #[test]
    fn norm_is_multiplicative_and_conj_an_antiinvolution() {
        let a = alg();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = rand_quat(&mut rng, a);
            let q = rand_quat(&mut rng, a);
            let pq = p.multiply(&q).unwrap();
            assert_eq!(pq.reduced_norm(), p.reduced_norm() * q.reduced_norm());
            // conj(pq) = conj(q) conj(p)
            assert_eq!(
                pq.conjugate(),
                q.conjugate().multiply(&p.conjugate()).unwrap()
            );
            assert_eq!(p.conjugate().conjugate(), p);
            // N(q) = q * conj(q) as a scalar
            let n = p.multiply(&p.conjugate()).unwrap();
            assert_eq!(n.coords[0], p.reduced_norm());
            assert!(n.coords[1..].iter().all(Zero::is_zero));
            // T(q) = 2 x0
            assert_eq!(p.reduced_trace(), &p.coords[0] + &p.coords[0]);
        }
    }

    #[test]
    fn multiplication_is_associative() {
        let a = alg();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = rand_quat(&mut rng, a);
            let q = rand_quat(&mut rng, a);
            let r = rand_quat(&mut rng, a);
            let left = p.multiply(&q).unwrap().multiply(&r).unwrap();
            let right = p.multiply(&q.multiply(&r).unwrap()).unwrap();
            assert_eq!(left, right);
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let a = alg();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..50 {
            let p = rand_quat(&mut rng, a);
            if p.is_zero() {
                continue;
            }
            let inv = p.inverse().unwrap();
            assert_eq!(p.multiply(&inv).unwrap(), RationalQuaternion::one(a));
        }
    }

    #[test]
    fn mismatched_algebras_rejected() {
        let p = RationalQuaternion::one(alg());
        let q = RationalQuaternion::one(AlgebraParams::new(2, 3).unwrap());
        assert!(matches!(p.multiply(&q), Err(Error::AlgebraMismatch(_))));
    }

    #[test]
    fn algebra_params_validation() {
        assert!(AlgebraParams::new(4, 3).is_err()); // 4 not square-free
        assert!(AlgebraParams::new(3, 12).is_err()); // 12 not square-free
        assert!(AlgebraParams::new(-3, 1).is_err()); // a must be positive
        assert!(AlgebraParams::new(3, 0).is_err()); // b nonzero
        assert!(AlgebraParams::new(1, 1).is_ok()); // allowed, but a split algebra
    }
}
