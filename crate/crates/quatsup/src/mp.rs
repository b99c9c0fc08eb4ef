//! Multiprecision plumbing: a precision context around `rug::Float`, a
//! small complex type (MPC is not linked; two floats are all we need),
//! and compensated accumulation for long kernel sums.

use num::BigRational;
use rug::float::Round;
use rug::ops::{DivAssignRound, MulAssignRound};
use rug::Float;

/// Precision context. Every multiprecision value produced through the
/// context carries `prec` bits of mantissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ctx {
    pub prec: u32,
}

impl Ctx {
    pub fn new(prec: u32) -> Self {
        // MPFR wants at least 2 bits; below 32 the kernel tolerances are
        // meaningless anyway.
        Ctx { prec: prec.max(32) }
    }

    pub fn float(&self, x: f64) -> Float {
        Float::with_val(self.prec, x)
    }

    pub fn float_from_i64(&self, x: i64) -> Float {
        Float::with_val(self.prec, x)
    }

    pub fn float_from_rational(&self, r: &BigRational) -> Float {
        let num = Float::with_val(
            self.prec,
            Float::parse(r.numer().to_string()).expect("integer parse"),
        );
        let den = Float::with_val(
            self.prec,
            Float::parse(r.denom().to_string()).expect("integer parse"),
        );
        num / den
    }

    pub fn zero(&self) -> Float {
        Float::with_val(self.prec, 0)
    }

    pub fn pi(&self) -> Float {
        Float::with_val(self.prec, rug::float::Constant::Pi)
    }

    pub fn complex(&self, re: f64, im: f64) -> MpComplex {
        MpComplex {
            re: self.float(re),
            im: self.float(im),
        }
    }

    pub fn complex_zero(&self) -> MpComplex {
        MpComplex {
            re: self.zero(),
            im: self.zero(),
        }
    }
}

/// Complex number over `rug::Float`.
#[derive(Debug, Clone)]
pub struct MpComplex {
    pub re: Float,
    pub im: Float,
}

impl MpComplex {
    pub fn new(re: Float, im: Float) -> Self {
        MpComplex { re, im }
    }

    pub fn add(&self, o: &Self) -> Self {
        MpComplex::new(
            Float::with_val(self.re.prec(), &self.re + &o.re),
            Float::with_val(self.im.prec(), &self.im + &o.im),
        )
    }

    pub fn sub(&self, o: &Self) -> Self {
        MpComplex::new(
            Float::with_val(self.re.prec(), &self.re - &o.re),
            Float::with_val(self.im.prec(), &self.im - &o.im),
        )
    }

    pub fn mul(&self, o: &Self) -> Self {
        let p = self.re.prec();
        let re = Float::with_val(p, &self.re * &o.re) - Float::with_val(p, &self.im * &o.im);
        let im = Float::with_val(p, &self.re * &o.im) + Float::with_val(p, &self.im * &o.re);
        MpComplex::new(re, im)
    }

    pub fn conj(&self) -> Self {
        MpComplex::new(self.re.clone(), -self.im.clone())
    }

    pub fn neg(&self) -> Self {
        MpComplex::new(-self.re.clone(), -self.im.clone())
    }

    pub fn norm_sqr(&self) -> Float {
        let p = self.re.prec();
        Float::with_val(p, &self.re * &self.re) + Float::with_val(p, &self.im * &self.im)
    }

    pub fn abs(&self) -> Float {
        self.norm_sqr().sqrt()
    }

    pub fn div(&self, o: &Self) -> Self {
        let d = o.norm_sqr();
        let num = self.mul(&o.conj());
        let p = self.re.prec();
        let mut re = num.re;
        re.div_assign_round(&d, Round::Nearest);
        let mut im = num.im;
        im.div_assign_round(&d, Round::Nearest);
        let _ = p;
        MpComplex::new(re, im)
    }

    pub fn scale(&self, s: &Float) -> Self {
        let mut re = self.re.clone();
        re.mul_assign_round(s, Round::Nearest);
        let mut im = self.im.clone();
        im.mul_assign_round(s, Round::Nearest);
        MpComplex::new(re, im)
    }

    /// Principal argument via atan2.
    pub fn arg(&self) -> Float {
        self.im.clone().atan2(&self.re)
    }

    /// Natural log of |z|.
    pub fn ln_abs(&self) -> Float {
        let half = Float::with_val(self.re.prec(), 0.5);
        self.norm_sqr().ln() * half
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }
}

/// exp(L) * (cos phi + i sin phi): rebuild a complex number from
/// log-magnitude / phase form.
pub fn complex_from_log_polar(log_mag: &Float, phase: &Float) -> MpComplex {
    let mag = log_mag.clone().exp();
    let (sin, cos) = phase.clone().sin_cos(Float::new(phase.prec()));
    MpComplex::new(
        Float::with_val(mag.prec(), &cos * &mag),
        Float::with_val(mag.prec(), &sin * &mag),
    )
}

/// Neumaier-compensated accumulator over `rug::Float`. Long kernel sums
/// stay well inside the working precision even when term magnitudes vary
/// by many orders.
#[derive(Debug, Clone)]
pub struct CompensatedSum {
    s: Float,
    c: Float,
}

impl CompensatedSum {
    pub fn new(prec: u32) -> Self {
        CompensatedSum {
            s: Float::with_val(prec, 0),
            c: Float::with_val(prec, 0),
        }
    }

    pub fn add(&mut self, x: &Float) {
        let p = self.s.prec();
        let t = Float::with_val(p, &self.s + x);
        let correction = if self.s.clone().abs() >= x.clone().abs() {
            Float::with_val(p, &self.s - &t) + x
        } else {
            Float::with_val(p, x - &t) + &self.s
        };
        self.c += correction;
        self.s = t;
    }

    pub fn value(&self) -> Float {
        Float::with_val(self.s.prec(), &self.s + &self.c)
    }
}

/// Complex compensated accumulator.
#[derive(Debug, Clone)]
pub struct CompensatedComplexSum {
    re: CompensatedSum,
    im: CompensatedSum,
}

impl CompensatedComplexSum {
    pub fn new(prec: u32) -> Self {
        CompensatedComplexSum {
            re: CompensatedSum::new(prec),
            im: CompensatedSum::new(prec),
        }
    }

    pub fn add(&mut self, z: &MpComplex) {
        self.re.add(&z.re);
        self.im.add(&z.im);
    }

    pub fn value(&self) -> MpComplex {
        MpComplex::new(self.re.value(), self.im.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_division() {
        let ctx = Ctx::new(128);
        let z = ctx.complex(1.0, 2.0);
        let w = ctx.complex(3.0, -1.0);
        let q = z.div(&w);
        let back = q.mul(&w);
        assert!((back.re.to_f64() - 1.0).abs() < 1e-30);
        assert!((back.im.to_f64() - 2.0).abs() < 1e-30);
    }

    #[test]
    fn log_polar_roundtrip() {
        let ctx = Ctx::new(128);
        let z = ctx.complex(-0.7, 0.4);
        let l = z.ln_abs();
        let p = z.arg();
        let back = complex_from_log_polar(&l, &p);
        assert!((back.re.to_f64() - -0.7).abs() < 1e-30);
        assert!((back.im.to_f64() - 0.4).abs() < 1e-30);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        // At 64 bits, adding 1e30 and many 1.0s naively loses the units.
        let mut acc = CompensatedSum::new(64);
        let ctx = Ctx::new(64);
        acc.add(&ctx.float(1e30));
        for _ in 0..1000 {
            acc.add(&ctx.float(1.0));
        }
        acc.add(&ctx.float(-1e30));
        let v = acc.value().to_f64();
        assert!((v - 1000.0).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn rational_conversion() {
        let ctx = Ctx::new(128);
        let r = BigRational::new(num::BigInt::from(1), num::BigInt::from(3));
        let f = ctx.float_from_rational(&r);
        assert!((f.to_f64() - 1.0 / 3.0).abs() < 1e-16);
    }
}
