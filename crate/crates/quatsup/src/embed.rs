//! The splitting embedding of (a,b/Q) into 2x2 matrices over Q(sqrt(a)),
//! and its evaluation over multiprecision reals.
//!
//! For q = x0 + x1 w + (x2 + x3 w) W the image is
//!
//! ```text
//!   [ xi          eta      ]         xi  = x0 + x1 sqrt(a)
//!   [ b conj(eta) conj(xi) ]         eta = x2 + x3 sqrt(a)
//! ```
//!
//! with exact determinant equal to the reduced norm. Of the two
//! diagonal arrangements only this one is multiplicative (the other is
//! its anti-homomorphic twin); the generator products w*W = wW and
//! W*w = -wW pin it down.

use num::{BigInt, BigRational};
use rug::Float;

use crate::error::{Error, Result};
use crate::mp::Ctx;
use crate::quadfield::QuadExt;
use crate::quat::RationalQuaternion;

/// Exact 2x2 matrix over Q(sqrt(a)), row major: [m00, m01, m10, m11].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMatrix {
    pub a: i64,
    pub entries: [QuadExt; 4],
}

impl SplitMatrix {
    pub fn det(&self) -> QuadExt {
        self.entries[0]
            .mul(&self.entries[3])
            .sub(&self.entries[1].mul(&self.entries[2]))
    }

    pub fn mul(&self, o: &Self) -> Self {
        let e = &self.entries;
        let f = &o.entries;
        SplitMatrix {
            a: self.a,
            entries: [
                e[0].mul(&f[0]).add(&e[1].mul(&f[2])),
                e[0].mul(&f[1]).add(&e[1].mul(&f[3])),
                e[2].mul(&f[0]).add(&e[3].mul(&f[2])),
                e[2].mul(&f[1]).add(&e[3].mul(&f[3])),
            ],
        }
    }

    /// Frobenius square norm: sum of squares of the four (real) entries,
    /// exact in Q(sqrt(a)).
    pub fn frobenius_sq(&self) -> QuadExt {
        let mut acc = QuadExt::zero(self.a);
        for e in &self.entries {
            acc = acc.add(&e.mul(e));
        }
        acc
    }

    pub fn to_f64(&self) -> [f64; 4] {
        [
            self.entries[0].to_f64(),
            self.entries[1].to_f64(),
            self.entries[2].to_f64(),
            self.entries[3].to_f64(),
        ]
    }
}

/// Embed into M2(Q(sqrt(a))). Requires a > 0 so that sqrt(a) is real;
/// `AlgebraParams::new` already enforces this, but guard anyway for
/// callers constructing params by hand.
pub fn embed_split(q: &RationalQuaternion) -> Result<SplitMatrix> {
    let a = q.algebra.a;
    if a <= 0 {
        return Err(Error::UnsupportedAlgebra(format!(
            "embedding needs a > 0, got a = {a}"
        )));
    }
    let b = BigRational::from_integer(BigInt::from(q.algebra.b));
    let [x0, x1, x2, x3] = q.coords.clone();
    let xi = QuadExt::new(a, x0, x1);
    let eta = QuadExt::new(a, x2, x3);
    Ok(SplitMatrix {
        a,
        entries: [
            xi.clone(),
            eta.clone(),
            eta.galois_conj().scale(&b),
            xi.galois_conj(),
        ],
    })
}

/// 2x2 real matrix at a chosen precision, carrying the exact determinant
/// it is supposed to approximate.
#[derive(Debug, Clone)]
pub struct RealMoebius {
    pub entries: [Float; 4],
    pub exact_det: BigRational,
    pub precision: u32,
}

impl RealMoebius {
    /// |numeric det - exact det|, for the determinant-consistency check.
    pub fn det_residual(&self, ctx: &Ctx) -> Float {
        let e = &self.entries;
        let p = self.precision;
        let det = Float::with_val(p, &e[0] * &e[3]) - Float::with_val(p, &e[1] * &e[2]);
        (det - ctx.float_from_rational(&self.exact_det)).abs()
    }

    /// Matrix norm (a^2 + b^2 + c^2 + d^2)^(1/2).
    pub fn norm(&self) -> Float {
        let p = self.precision;
        let mut acc = Float::with_val(p, 0);
        for e in &self.entries {
            acc += Float::with_val(p, e * e);
        }
        acc.sqrt()
    }
}

/// Evaluate the split embedding over the reals at `prec` bits.
pub fn embed_real(q: &RationalQuaternion, prec: u32) -> Result<RealMoebius> {
    let ctx = Ctx::new(prec);
    let split = embed_split(q)?;
    let entries = [
        split.entries[0].to_float(&ctx),
        split.entries[1].to_float(&ctx),
        split.entries[2].to_float(&ctx),
        split.entries[3].to_float(&ctx),
    ];
    Ok(RealMoebius {
        entries,
        exact_det: q.reduced_norm(),
        precision: ctx.prec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quat::AlgebraParams;
    use num::Zero;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn alg() -> AlgebraParams {
        AlgebraParams::new(3, -1).unwrap()
    }

    fn qr(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn embed_basis_elements() {
        let a = alg();
        // W -> [[0,1],[-1,0]] with det 1
        let cap = RationalQuaternion::omega_cap(a);
        let m = embed_split(&cap).unwrap();
        assert!(m.entries[0].is_zero());
        assert_eq!(m.entries[1], QuadExt::from_rational(3, qr(1, 1)));
        assert_eq!(m.entries[2], QuadExt::from_rational(3, qr(-1, 1)));
        assert!(m.entries[3].is_zero());
        assert_eq!(m.det(), QuadExt::from_rational(3, qr(1, 1)));

        // w -> diag(sqrt3, -sqrt3) with det -3 = N(w)
        let w = RationalQuaternion::omega(a);
        let mw = embed_split(&w).unwrap();
        assert_eq!(mw.entries[0], QuadExt::new(3, qr(0, 1), qr(1, 1)));
        assert!(mw.entries[1].is_zero());
        assert!(mw.entries[2].is_zero());
        assert_eq!(mw.entries[3], QuadExt::new(3, qr(0, 1), qr(-1, 1)));
        let det = mw.det();
        assert_eq!(det, QuadExt::from_rational(3, qr(-3, 1)));
        assert_eq!(det.u, w.reduced_norm());
    }

    fn rand_quat(rng: &mut ChaCha12Rng) -> RationalQuaternion {
        let coords = std::array::from_fn(|_| {
            BigRational::new(
                BigInt::from(rng.gen_range(-50i64..=50)),
                BigInt::from(rng.gen_range(1i64..=9)),
            )
        });
        RationalQuaternion::new(alg(), coords)
    }

    #[test]
    fn det_equals_reduced_norm_randomized() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let q = rand_quat(&mut rng);
            let det = embed_split(&q).unwrap().det();
            assert!(det.v.is_zero(), "determinant must be rational");
            assert_eq!(det.u, q.reduced_norm());
        }
    }

    #[test]
    fn embedding_is_a_ring_homomorphism() {
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        for _ in 0..200 {
            let p = rand_quat(&mut rng);
            let q = rand_quat(&mut rng);
            let lhs = embed_split(&p.multiply(&q).unwrap()).unwrap();
            let rhs = embed_split(&p).unwrap().mul(&embed_split(&q).unwrap());
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn real_embedding_tracks_split_embedding() {
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let prec = 128u32;
        let ctx = Ctx::new(prec);
        let tol = 2f64.powi(-(prec as i32) + 4);
        for _ in 0..50 {
            let q = rand_quat(&mut rng);
            let split = embed_split(&q).unwrap();
            let real = embed_real(&q, prec).unwrap();
            for (r, s) in real.entries.iter().zip(&split.entries) {
                let diff = (r.clone() - s.to_float(&ctx)).abs();
                assert!(diff.to_f64() < tol);
            }
            // det residual within 2^(-prec/2)
            let res = real.det_residual(&ctx).to_f64();
            assert!(res < 2f64.powi(-(prec as i32) / 2));
        }
    }

    #[test]
    fn nonpositive_a_rejected() {
        let bad = RationalQuaternion::from_i64(AlgebraParams { a: -3, b: 2 }, [1, 0, 0, 0]);
        assert!(matches!(
            embed_split(&bad),
            Err(Error::UnsupportedAlgebra(_))
        ));
    }
}
