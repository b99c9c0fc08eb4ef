//! Orders in the quaternion algebra: certification, invariants, and the
//! integer-coordinate machinery used by the lattice enumerator.
//!
//! A `QuaternionOrder` keeps everything precomputed in its own basis:
//! structure constants, the integral norm/trace forms, conjugation, and
//! the majorant Gram matrix (the Frobenius square norm of the split
//! embedding, exact over Q(sqrt(a))).

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::embed::embed_split;
use crate::error::{Error, Result};
use crate::hilbert::ramified_primes;
use crate::quadfield::QuadExt;
use crate::quat::{AlgebraParams, RationalQuaternion};

/// Positive-definite quadratic form Q+(c) = ||phi(sum c_i e_i)||_F^2 in
/// order coordinates, stored exactly. The entries live in Q(sqrt(a));
/// they are plain rationals whenever the sqrt(a)-part cancels (as it
/// does for b = +-1).
#[derive(Debug, Clone)]
pub struct MajorantForm {
    pub entries: [[QuadExt; 4]; 4],
    approx: [[f64; 4]; 4],
}

impl MajorantForm {
    fn from_basis(basis_split: &[crate::embed::SplitMatrix; 4]) -> Self {
        let a = basis_split[0].a;
        let mut entries: [[QuadExt; 4]; 4] =
            std::array::from_fn(|_| std::array::from_fn(|_| QuadExt::zero(a)));
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = QuadExt::zero(a);
                for e in 0..4 {
                    acc = acc.add(&basis_split[i].entries[e].mul(&basis_split[j].entries[e]));
                }
                entries[i][j] = acc;
            }
        }
        let approx = std::array::from_fn(|i| std::array::from_fn(|j| entries[i][j].to_f64()));
        MajorantForm { entries, approx }
    }

    pub fn approx(&self) -> &[[f64; 4]; 4] {
        &self.approx
    }

    /// True when every entry is a plain rational.
    pub fn is_rational(&self) -> bool {
        self.entries
            .iter()
            .flatten()
            .all(|e| e.is_rational())
    }

    /// Exact positive-definiteness via leading principal minors.
    pub fn is_positive_definite(&self) -> bool {
        for k in 1..=4 {
            if !minor_det(&self.entries, k).is_positive() {
                return false;
            }
        }
        true
    }

    /// Exact evaluation at integer coordinates.
    pub fn evaluate_exact(&self, c: &[i64; 4]) -> QuadExt {
        let a = self.entries[0][0].a;
        let mut acc = QuadExt::zero(a);
        for i in 0..4 {
            for j in 0..4 {
                let w = BigRational::from_integer(BigInt::from(c[i] as i128 * c[j] as i128));
                acc = acc.add(&self.entries[i][j].scale(&w));
            }
        }
        acc
    }

    pub fn evaluate_f64(&self, c: &[i64; 4]) -> f64 {
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                acc += self.approx[i][j] * c[i] as f64 * c[j] as f64;
            }
        }
        acc
    }
}

/// Determinant of the leading k x k block, exact in Q(sqrt(a)).
fn minor_det(m: &[[QuadExt; 4]; 4], k: usize) -> QuadExt {
    let a = m[0][0].a;
    // Bareiss-free straightforward expansion; k <= 4 so cost is trivial.
    match k {
        1 => m[0][0].clone(),
        _ => {
            let mut acc = QuadExt::zero(a);
            // Lazy cofactor expansion over first row of the k x k block.
            for (j, sign) in (0..k).zip([1i64, -1, 1, -1]) {
                let sub = submatrix(m, k, 0, j);
                let term = m[0][j].mul(&det_k(&sub, k - 1));
                acc = if sign > 0 { acc.add(&term) } else { acc.sub(&term) };
            }
            acc
        }
    }
}

fn submatrix(m: &[[QuadExt; 4]; 4], k: usize, row: usize, col: usize) -> [[QuadExt; 4]; 4] {
    let a = m[0][0].a;
    let mut out: [[QuadExt; 4]; 4] =
        std::array::from_fn(|_| std::array::from_fn(|_| QuadExt::zero(a)));
    let mut r_out = 0;
    for r in 0..k {
        if r == row {
            continue;
        }
        let mut c_out = 0;
        for c in 0..k {
            if c == col {
                continue;
            }
            out[r_out][c_out] = m[r][c].clone();
            c_out += 1;
        }
        r_out += 1;
    }
    out
}

fn det_k(m: &[[QuadExt; 4]; 4], k: usize) -> QuadExt {
    let a = m[0][0].a;
    match k {
        0 => QuadExt::from_rational(a, BigRational::one()),
        1 => m[0][0].clone(),
        _ => {
            let mut acc = QuadExt::zero(a);
            for (j, sign) in (0..k).zip([1i64, -1, 1, -1]) {
                let sub = submatrix(m, k, 0, j);
                let term = m[0][j].mul(&det_k(&sub, k - 1));
                acc = if sign > 0 { acc.add(&term) } else { acc.sub(&term) };
            }
            acc
        }
    }
}

/// A certified order: rank-4 lattice containing 1, closed under
/// multiplication, with integral traces and norms.
#[derive(Debug, Clone)]
pub struct QuaternionOrder {
    pub algebra: AlgebraParams,
    pub basis: [RationalQuaternion; 4],
    /// Integer structure constants: e_i e_j = sum_k sc[i][j][k] e_k.
    pub structure_constants: [[[i64; 4]; 4]; 4],
    /// conj(e_i) = sum_k conj_coords[i][k] e_k (integer).
    pub conj_coords: [[i64; 4]; 4],
    /// Coordinates of 1 in the basis.
    pub one_coords: [i64; 4],
    /// N(e_i), integer.
    pub norm_diag: [i64; 4],
    /// T(e_i conj(e_j)), the full symmetric trace pairing, integer.
    pub trace_pairing: [[i64; 4]; 4],
    /// T(e_i), integer.
    pub traces: [i64; 4],
    pub majorant: MajorantForm,
    pub reduced_discriminant: u64,
    /// disc equals the product of the finite ramified primes.
    pub maximal_candidate: bool,
    /// Hecke bad modulus; defaults to the reduced discriminant and can be
    /// overridden from configuration.
    pub bad_modulus_q: u64,
    /// Basis matrix inverse, for expressing arbitrary elements.
    inv_basis: [[BigRational; 4]; 4],
}

fn rational_is_i64(r: &BigRational) -> Option<i64> {
    if r.denom().is_one() {
        r.numer().to_i64()
    } else {
        None
    }
}

/// Solve the 4x4 system basis^T x = target by Gauss-Jordan, returning the
/// inverse matrix of the basis coordinate matrix (columns = basis coords).
fn invert4(cols: &[[BigRational; 4]; 4]) -> Option<[[BigRational; 4]; 4]> {
    // aug = [M | I] with M[r][c] = cols[c][r]
    let mut aug: Vec<Vec<BigRational>> = (0..4)
        .map(|r| {
            let mut row: Vec<BigRational> = (0..4).map(|c| cols[c][r].clone()).collect();
            for k in 0..4 {
                row.push(if k == r {
                    BigRational::one()
                } else {
                    BigRational::zero()
                });
            }
            row
        })
        .collect();
    for col in 0..4 {
        let pivot_row = (col..4).find(|&r| !aug[r][col].is_zero())?;
        aug.swap(col, pivot_row);
        let pivot = aug[col][col].clone();
        for x in aug[col].iter_mut() {
            *x /= &pivot;
        }
        for r in 0..4 {
            if r != col && !aug[r][col].is_zero() {
                let f = aug[r][col].clone();
                for c in 0..8 {
                    let sub = &aug[col][c] * &f;
                    aug[r][c] -= sub;
                }
            }
        }
    }
    let mut inv: [[BigRational; 4]; 4] =
        std::array::from_fn(|_| std::array::from_fn(|_| BigRational::zero()));
    for r in 0..4 {
        for c in 0..4 {
            inv[r][c] = aug[r][4 + c].clone();
        }
    }
    Some(inv)
}

/// Verify the order axioms for a basis and build the certified order.
pub fn verify_order(
    algebra: AlgebraParams,
    basis: [RationalQuaternion; 4],
) -> Result<QuaternionOrder> {
    for q in &basis {
        if q.algebra != algebra {
            return Err(Error::AlgebraMismatch(
                "basis element belongs to a different algebra".into(),
            ));
        }
    }
    let cols: [[BigRational; 4]; 4] = std::array::from_fn(|i| basis[i].coords.clone());
    let inv = invert4(&cols).ok_or_else(|| {
        Error::Rank("basis coordinate matrix is singular (rank < 4)".to_string())
    })?;

    let express = |q: &RationalQuaternion| -> [BigRational; 4] {
        std::array::from_fn(|k| {
            (0..4)
                .map(|r| &inv[k][r] * &q.coords[r])
                .fold(BigRational::zero(), |acc, x| acc + x)
        })
    };
    let express_integral = |q: &RationalQuaternion| -> std::result::Result<[i64; 4], String> {
        let coords = express(q);
        let mut out = [0i64; 4];
        for (k, c) in coords.iter().enumerate() {
            match rational_is_i64(c) {
                Some(v) => out[k] = v,
                None => return Err(c.to_string()),
            }
        }
        Ok(out)
    };

    // contains 1
    let one_coords = express_integral(&RationalQuaternion::one(algebra)).map_err(|c| {
        Error::OrderAxiom(format!(
            "1 is not an integral combination of the basis (coordinate {c})"
        ))
    })?;

    // closure: all 16 products integral in the basis
    let mut structure_constants = [[[0i64; 4]; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let prod = basis[i].multiply(&basis[j])?;
            match express_integral(&prod) {
                Ok(c) => structure_constants[i][j] = c,
                Err(coordinate) => {
                    return Err(Error::Closure { i, j, coordinate });
                }
            }
        }
    }

    // integral traces and norms
    let mut traces = [0i64; 4];
    let mut norm_diag = [0i64; 4];
    for (k, e) in basis.iter().enumerate() {
        traces[k] = rational_is_i64(&e.reduced_trace()).ok_or_else(|| {
            Error::OrderAxiom(format!("basis element {k} has non-integral reduced trace"))
        })?;
        norm_diag[k] = rational_is_i64(&e.reduced_norm()).ok_or_else(|| {
            Error::OrderAxiom(format!("basis element {k} has non-integral reduced norm"))
        })?;
    }

    // conjugation in basis coordinates
    let mut conj_coords = [[0i64; 4]; 4];
    for i in 0..4 {
        conj_coords[i] = express_integral(&basis[i].conjugate()).map_err(|c| {
            Error::OrderAxiom(format!(
                "conjugate of basis element {i} leaves the lattice (coordinate {c})"
            ))
        })?;
    }

    // trace pairing T(e_i conj(e_j)) and the reduced discriminant
    let mut trace_pairing = [[0i64; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let p = basis[i].multiply(&basis[j].conjugate())?;
            trace_pairing[i][j] = rational_is_i64(&p.reduced_trace()).ok_or_else(|| {
                Error::OrderAxiom(format!("trace pairing ({i},{j}) is non-integral"))
            })?;
        }
    }
    let det = det4_i64(&trace_pairing);
    let abs_det = det.unsigned_abs();
    let disc = integer_sqrt_exact(abs_det).ok_or_else(|| {
        Error::OrderAxiom(format!(
            "|det trace pairing| = {abs_det} is not a perfect square"
        ))
    })?;

    let ram = ramified_primes(algebra)?;
    let ram_product: u64 = ram.iter().product();
    let maximal_candidate = disc == ram_product;

    let basis_split = [
        embed_split(&basis[0])?,
        embed_split(&basis[1])?,
        embed_split(&basis[2])?,
        embed_split(&basis[3])?,
    ];
    let majorant = MajorantForm::from_basis(&basis_split);
    if !majorant.is_positive_definite() {
        return Err(Error::OrderAxiom(
            "majorant form is not positive definite (is the algebra split?)".into(),
        ));
    }

    Ok(QuaternionOrder {
        algebra,
        basis,
        structure_constants,
        conj_coords,
        one_coords,
        norm_diag,
        trace_pairing,
        traces,
        majorant,
        reduced_discriminant: disc,
        maximal_candidate,
        bad_modulus_q: disc,
        inv_basis: inv,
    })
}

fn det4_i64(m: &[[i64; 4]; 4]) -> i128 {
    let m: [[i128; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| m[i][j] as i128));
    let det3 = |a: [[i128; 3]; 3]| -> i128 {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let mut acc = 0i128;
    for j in 0..4 {
        let mut sub = [[0i128; 3]; 3];
        for r in 1..4 {
            let mut cc = 0;
            for c in 0..4 {
                if c == j {
                    continue;
                }
                sub[r - 1][cc] = m[r][c];
                cc += 1;
            }
        }
        let term = m[0][j] * det3(sub);
        acc += if j % 2 == 0 { term } else { -term };
    }
    acc
}

fn integer_sqrt_exact(n: u128) -> Option<u64> {
    let r = (n as f64).sqrt() as u128;
    for cand in r.saturating_sub(2)..=r + 2 {
        if cand * cand == n {
            return Some(cand as u64);
        }
    }
    None
}

impl QuaternionOrder {
    pub fn with_bad_modulus(mut self, q: u64) -> Self {
        self.bad_modulus_q = q;
        self
    }

    /// Standard disc-6 example over (3,-1): basis {1, w, W, (1+w+W+wW)/2}.
    pub fn maximal_order_3_m1() -> Result<QuaternionOrder> {
        let algebra = AlgebraParams::new(3, -1)?;
        let basis = [
            RationalQuaternion::one(algebra),
            RationalQuaternion::omega(algebra),
            RationalQuaternion::omega_cap(algebra),
            RationalQuaternion::from_ratios(algebra, [(1, 2), (1, 2), (1, 2), (1, 2)]),
        ];
        verify_order(algebra, basis)
    }

    /// The standard basis {1, w, W, wW} as an order.
    pub fn standard_order(algebra: AlgebraParams) -> Result<QuaternionOrder> {
        let basis = [
            RationalQuaternion::one(algebra),
            RationalQuaternion::omega(algebra),
            RationalQuaternion::omega_cap(algebra),
            RationalQuaternion::from_i64(algebra, [0, 0, 0, 1]),
        ];
        verify_order(algebra, basis)
    }

    /// Element from integer order coordinates.
    pub fn element(&self, c: &[i64; 4]) -> RationalQuaternion {
        let mut acc = RationalQuaternion::zero(self.algebra);
        for (ci, e) in c.iter().zip(&self.basis) {
            let term = e.scale(&BigRational::from_integer(BigInt::from(*ci)));
            acc = acc.add(&term).expect("same algebra");
        }
        acc
    }

    /// Order coordinates of an arbitrary element, when integral.
    pub fn integral_coords(&self, q: &RationalQuaternion) -> Option<[i64; 4]> {
        let mut out = [0i64; 4];
        for k in 0..4 {
            let c = (0..4)
                .map(|r| &self.inv_basis[k][r] * &q.coords[r])
                .fold(BigRational::zero(), |acc, x| acc + x);
            out[k] = rational_is_i64(&c)?;
        }
        Some(out)
    }

    /// Product in order coordinates via the structure constants.
    pub fn mul_coords(&self, x: &[i64; 4], y: &[i64; 4]) -> [i64; 4] {
        let mut out = [0i128; 4];
        for i in 0..4 {
            if x[i] == 0 {
                continue;
            }
            for j in 0..4 {
                if y[j] == 0 {
                    continue;
                }
                let f = x[i] as i128 * y[j] as i128;
                for k in 0..4 {
                    out[k] += f * self.structure_constants[i][j][k] as i128;
                }
            }
        }
        out.map(|v| i64::try_from(v).expect("coordinate overflow"))
    }

    /// Conjugate in order coordinates.
    pub fn conj_of_coords(&self, x: &[i64; 4]) -> [i64; 4] {
        let mut out = [0i128; 4];
        for i in 0..4 {
            if x[i] == 0 {
                continue;
            }
            for k in 0..4 {
                out[k] += x[i] as i128 * self.conj_coords[i][k] as i128;
            }
        }
        out.map(|v| i64::try_from(v).expect("coordinate overflow"))
    }

    /// Reduced norm in order coordinates (exact, integer).
    pub fn norm_of_coords(&self, c: &[i64; 4]) -> i128 {
        let mut acc = 0i128;
        for i in 0..4 {
            acc += self.norm_diag[i] as i128 * (c[i] as i128) * (c[i] as i128);
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                acc += self.trace_pairing[i][j] as i128 * (c[i] as i128) * (c[j] as i128);
            }
        }
        acc
    }

    pub fn trace_of_coords(&self, c: &[i64; 4]) -> i128 {
        (0..4).map(|i| self.traces[i] as i128 * c[i] as i128).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alg() -> AlgebraParams {
        AlgebraParams::new(3, -1).unwrap()
    }

    #[test]
    fn standard_basis_is_an_order_with_disc_12() {
        let order = QuaternionOrder::standard_order(alg()).unwrap();
        assert_eq!(order.reduced_discriminant, 12);
        assert!(!order.maximal_candidate);
        assert_eq!(order.one_coords, [1, 0, 0, 0]);
        // w * W = wW in the standard basis
        assert_eq!(order.structure_constants[1][2], [0, 0, 0, 1]);
        assert_eq!(order.structure_constants[2][1], [0, 0, 0, -1]);
    }

    #[test]
    fn half_element_basis_is_maximal_candidate_with_disc_6() {
        let order = QuaternionOrder::maximal_order_3_m1().unwrap();
        assert_eq!(order.reduced_discriminant, 6);
        assert!(order.maximal_candidate);
        // e4^2 = 1 + e4 (trace 1, norm -1)
        assert_eq!(order.structure_constants[3][3], [1, 0, 0, 1]);
        assert_eq!(order.norm_diag[3], -1);
        assert_eq!(order.traces[3], 1);
    }

    #[test]
    fn closure_violation_reports_offending_pair() {
        let algebra = alg();
        let basis = [
            RationalQuaternion::one(algebra),
            RationalQuaternion::from_ratios(algebra, [(0, 1), (1, 2), (0, 1), (0, 1)]),
            RationalQuaternion::omega_cap(algebra),
            RationalQuaternion::from_i64(algebra, [0, 0, 0, 1]),
        ];
        match verify_order(algebra, basis) {
            Err(Error::Closure { i, j, coordinate }) => {
                assert_eq!((i, j), (1, 1)); // (w/2)^2 = 3/4
                assert_eq!(coordinate, "3/4");
            }
            other => panic!("expected closure error, got {other:?}"),
        }
    }

    #[test]
    fn rank_violation_detected() {
        let algebra = alg();
        let basis = [
            RationalQuaternion::one(algebra),
            RationalQuaternion::omega(algebra),
            RationalQuaternion::omega(algebra),
            RationalQuaternion::from_i64(algebra, [0, 0, 0, 1]),
        ];
        assert!(matches!(verify_order(algebra, basis), Err(Error::Rank(_))));
    }

    #[test]
    fn discriminant_scales_with_index() {
        let algebra = alg();
        // the standard order has index 2 in the maximal one
        let maximal = QuaternionOrder::maximal_order_3_m1().unwrap();
        let std = QuaternionOrder::standard_order(algebra).unwrap();
        assert_eq!(std.reduced_discriminant, 2 * maximal.reduced_discriminant);
        // {1, 2w, 2W, 2wW} is a closed sublattice of index 8
        let basis = [
            RationalQuaternion::one(algebra),
            RationalQuaternion::from_i64(algebra, [0, 2, 0, 0]),
            RationalQuaternion::from_i64(algebra, [0, 0, 2, 0]),
            RationalQuaternion::from_i64(algebra, [0, 0, 0, 2]),
        ];
        let sub = verify_order(algebra, basis).unwrap();
        assert_eq!(sub.reduced_discriminant, 8 * std.reduced_discriminant);
    }

    #[test]
    fn majorant_matches_embedding_norm() {
        let order = QuaternionOrder::maximal_order_3_m1().unwrap();
        assert!(order.majorant.is_positive_definite());
        // b = -1 so the Gram matrix is rational here
        assert!(order.majorant.is_rational());
        for c in [[1, 0, 0, 0], [0, 1, 0, 0], [2, -1, 3, 1], [-1, 2, 0, 5]] {
            let q = order.element(&c);
            let frob = embed_split(&q).unwrap().frobenius_sq();
            let viamaj = order.majorant.evaluate_exact(&c);
            assert_eq!(frob.u, viamaj.u);
            assert_eq!(frob.v, viamaj.v);
        }
    }

    #[test]
    fn coordinate_arithmetic_matches_rational_arithmetic() {
        let order = QuaternionOrder::maximal_order_3_m1().unwrap();
        let xs = [[1i64, -2, 0, 3], [0, 1, 1, 1], [5, 0, -2, 1]];
        for x in &xs {
            for y in &xs {
                let qa = order.element(x);
                let qb = order.element(y);
                let prod = qa.multiply(&qb).unwrap();
                assert_eq!(order.element(&order.mul_coords(x, y)), prod);
            }
            let q = order.element(x);
            assert_eq!(order.element(&order.conj_of_coords(x)), q.conjugate());
            assert_eq!(
                BigRational::from_integer(BigInt::from(order.norm_of_coords(x))),
                q.reduced_norm()
            );
            assert_eq!(
                BigRational::from_integer(BigInt::from(order.trace_of_coords(x))),
                q.reduced_trace()
            );
            assert_eq!(order.integral_coords(&q), Some(*x));
        }
    }
}
