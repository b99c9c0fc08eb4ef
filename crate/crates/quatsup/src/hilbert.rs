//! Hilbert symbols, ramification and the division test.
//!
//! The symbol is computed by the classical local formulas (Legendre
//! symbols at odd p, the epsilon/omega characters at 2, signs at the
//! archimedean place). Tests cross-check against an exhaustive search
//! for primitive solutions of z^2 = a x^2 + b y^2 modulo p^j, which is
//! what the symbol means.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::{is_square_free, AlgebraParams};

/// A place of Q: a finite prime or the archimedean place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Place {
    Finite(u64),
    Infinity,
}

impl std::fmt::Display for Place {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Place::Finite(p) => write!(f, "{p}"),
            Place::Infinity => write!(f, "oo"),
        }
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Legendre symbol (u/p) for odd prime p and u not divisible by p,
/// by Euler's criterion.
fn legendre(u: i64, p: u64) -> i32 {
    let p_i = p as i64;
    let mut base = u.rem_euclid(p_i) as u64;
    debug_assert!(base != 0);
    let mut exp = (p - 1) / 2;
    let mut acc = 1u64;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % p;
        }
        base = base * base % p;
        exp >>= 1;
    }
    if acc == 1 {
        1
    } else {
        -1
    }
}

/// Split x = p^alpha * u with p not dividing u.
fn split_valuation(x: i64, p: u64) -> (u32, i64) {
    let mut alpha = 0;
    let mut u = x;
    let p_i = p as i64;
    while u % p_i == 0 {
        u /= p_i;
        alpha += 1;
    }
    (alpha, u)
}

/// Hilbert symbol (a, b)_v in {+1, -1}.
pub fn hilbert_symbol(a: i64, b: i64, place: Place) -> Result<i32> {
    if a == 0 || b == 0 || !is_square_free(a) || !is_square_free(b) {
        return Err(Error::Parameter(format!(
            "hilbert symbol needs square-free nonzero arguments, got ({a}, {b})"
        )));
    }
    match place {
        Place::Infinity => Ok(if a < 0 && b < 0 { -1 } else { 1 }),
        Place::Finite(2) => {
            let (alpha, u) = split_valuation(a, 2);
            let (beta, v) = split_valuation(b, 2);
            let eps = |x: i64| ((x - 1) / 2).rem_euclid(2) as u32;
            let omega = |x: i64| ((x * x - 1) / 8).rem_euclid(2) as u32;
            let e = eps(u) * eps(v) + alpha * omega(v) + beta * omega(u);
            Ok(if e % 2 == 0 { 1 } else { -1 })
        }
        Place::Finite(p) => {
            if !is_prime(p) {
                return Err(Error::Parameter(format!("{p} is not prime")));
            }
            let (alpha, u) = split_valuation(a, p);
            let (beta, v) = split_valuation(b, p);
            let mut s = 1i32;
            if alpha % 2 == 1 && beta % 2 == 1 && (p - 1) / 2 % 2 == 1 {
                s = -s;
            }
            if beta % 2 == 1 {
                s *= legendre(u, p);
            }
            if alpha % 2 == 1 {
                s *= legendre(v, p);
            }
            Ok(s)
        }
    }
}

/// Oracle used in tests: does z^2 = a x^2 + b y^2 have a primitive
/// solution modulo p^j (some coordinate a unit)? j is large enough for
/// Hensel lifting with square-free a, b, so this decides the local
/// isotropy of the ternary form.
pub fn solvable_mod_prime_power(a: i64, b: i64, p: u64) -> bool {
    let j = if p == 2 { 5 } else { 3 };
    let m = p.pow(j) as i64;
    // squares[w] = 1 if w = z^2 mod m for some z, bit 2 if z can be a unit
    let mut squares = vec![0u8; m as usize];
    for z in 0..m {
        let w = (z * z).rem_euclid(m) as usize;
        squares[w] |= 1;
        if z.rem_euclid(p as i64) != 0 {
            squares[w] |= 2;
        }
    }
    for x in 0..m {
        for y in 0..m {
            let w = (a * x % m * x % m + b * y % m * y % m).rem_euclid(m) as usize;
            let x_unit = x.rem_euclid(p as i64) != 0;
            let y_unit = y.rem_euclid(p as i64) != 0;
            if (x_unit || y_unit) && squares[w] & 1 != 0 {
                return true;
            }
            if !x_unit && !y_unit && squares[w] & 2 != 0 {
                return true;
            }
        }
    }
    false
}

/// Candidate finite places where (a,b) can ramify: 2 and the primes
/// dividing a or b.
pub fn candidate_primes(a: i64, b: i64) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    out.insert(2);
    for x in [a, b] {
        let mut m = x.unsigned_abs();
        let mut d = 2u64;
        while d * d <= m {
            if m % d == 0 {
                out.insert(d);
                while m % d == 0 {
                    m /= d;
                }
            }
            d += 1;
        }
        if m > 1 {
            out.insert(m);
        }
    }
    out
}

/// Finite primes at which the algebra ramifies.
pub fn ramified_primes(algebra: AlgebraParams) -> Result<BTreeSet<u64>> {
    let mut out = BTreeSet::new();
    for p in candidate_primes(algebra.a, algebra.b) {
        if hilbert_symbol(algebra.a, algebra.b, Place::Finite(p))? == -1 {
            out.insert(p);
        }
    }
    Ok(out)
}

/// Ramification report for an algebra.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivisionReport {
    pub algebra: AlgebraParams,
    pub ramified: BTreeSet<u64>,
    pub ramified_at_infinity: bool,
    pub is_division: bool,
    /// Split at the archimedean place; required for the cocompact setting.
    pub indefinite: bool,
}

/// Division test: the algebra is division over Q exactly when some place
/// ramifies. With a > 0 the archimedean place always splits, so only the
/// finite set matters here.
pub fn is_division(algebra: AlgebraParams) -> Result<DivisionReport> {
    let ramified = ramified_primes(algebra)?;
    let at_inf = hilbert_symbol(algebra.a, algebra.b, Place::Infinity)? == -1;
    Ok(DivisionReport {
        algebra,
        is_division: !ramified.is_empty() || at_inf,
        ramified_at_infinity: at_inf,
        indefinite: !at_inf,
        ramified,
    })
}
