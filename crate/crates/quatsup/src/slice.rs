//! Enumeration of the norm-n slices R(n) inside a majorant ball, and
//! their decomposition into left unit cosets R(1)\R(n).
//!
//! The enumerator is a Fincke-Pohst walk over the order-coordinate
//! lattice under the positive-definite majorant form. The innermost
//! coordinate is not scanned: the norm condition N = n is a quadratic
//! equation there and is solved exactly over the integers, after which
//! candidates pass an exact majorant membership check. Bounds are
//! computed in f64 with a small inflation so no exact member is missed;
//! false positives are removed by the exact filter.

use num::{BigRational, FromPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::order::QuaternionOrder;
use crate::quadfield::QuadExt;
use crate::quat::{AlgebraParams, RationalQuaternion};

/// Relative inflation applied to f64 search bounds. Exactness of the
/// final filter makes over-coverage harmless.
const BOUND_INFLATE: f64 = 1.0 + 1e-9;
const BOUND_SLACK: f64 = 1e-7;

/// Doubling policy for the coset decomposition.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CosetPolicy {
    /// Consecutive doublings with an unchanged coset count required
    /// before the decomposition is declared stable.
    pub stable_rounds: u32,
    pub max_rounds: u32,
    /// Starting squared radius; default grows linearly with n.
    pub initial_radius_sq: Option<f64>,
    /// Refusal threshold for the estimated lattice-point count.
    pub point_budget: u64,
}

impl Default for CosetPolicy {
    fn default() -> Self {
        CosetPolicy {
            stable_rounds: 2,
            max_rounds: 16,
            initial_radius_sq: None,
            point_budget: 2_000_000_000,
        }
    }
}

/// One enumerated element: integer order coordinates plus the exact
/// quaternion they denote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceElement {
    pub coords: [i64; 4],
    pub quat: RationalQuaternion,
}

/// A left R(1)-orbit: indices into the slice's element list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coset {
    pub representative: usize,
    pub members: Vec<usize>,
}

/// Enumerated finite subset of R(n) with optional coset structure.
#[derive(Debug, Clone, PartialEq)]
pub struct NormSlice {
    pub algebra: AlgebraParams,
    pub n: i64,
    pub majorant_radius_t: f64,
    pub elements: Vec<SliceElement>,
    pub cosets: Option<Vec<Coset>>,
    pub stabilized: bool,
    /// (radius T, coset count) per doubling round.
    pub doubling_history: Vec<(f64, usize)>,
}

impl NormSlice {
    pub fn coset_count(&self) -> Option<usize> {
        self.cosets.as_ref().map(|c| c.len())
    }

    pub fn representatives(&self) -> Vec<&SliceElement> {
        match &self.cosets {
            Some(cs) => cs.iter().map(|c| &self.elements[c.representative]).collect(),
            None => Vec::new(),
        }
    }
}

fn ldl_decompose(g: &[[f64; 4]; 4]) -> Option<([f64; 4], [[f64; 4]; 4])> {
    let mut d = [0.0f64; 4];
    let mut l = [[0.0f64; 4]; 4];
    for i in 0..4 {
        l[i][i] = 1.0;
    }
    for j in 0..4 {
        let mut dj = g[j][j];
        for k in 0..j {
            dj -= l[j][k] * l[j][k] * d[k];
        }
        if dj <= 0.0 {
            return None;
        }
        d[j] = dj;
        for i in (j + 1)..4 {
            let mut v = g[i][j];
            for k in 0..j {
                v -= l[i][k] * l[j][k] * d[k];
            }
            l[i][j] = v / dj;
        }
    }
    Some((d, l))
}

fn isqrt_i128(n: i128) -> Option<i128> {
    if n < 0 {
        return None;
    }
    let mut r = (n as f64).sqrt() as i128;
    while r > 0 && r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    if r * r == n {
        Some(r)
    } else {
        None
    }
}

/// Exact membership test Q+(c) <= t2 for boundary candidates.
fn majorant_within_exact(order: &QuaternionOrder, c: &[i64; 4], t2: &BigRational) -> bool {
    let q = order.majorant.evaluate_exact(c);
    q.cmp_rational(t2) != std::cmp::Ordering::Greater
}

struct NormEquation {
    /// N(c) = a4 c0^2 + (sum_j lin[j] c_j) c0 + rest(c1..c3)
    a4: i64,
    lin: [i64; 3],
}

impl NormEquation {
    fn new(order: &QuaternionOrder) -> Self {
        NormEquation {
            a4: order.norm_diag[0],
            lin: [
                order.trace_pairing[0][1],
                order.trace_pairing[0][2],
                order.trace_pairing[0][3],
            ],
        }
    }

    /// Integer roots c0 of N(c0, c1, c2, c3) = n.
    fn solve(&self, order: &QuaternionOrder, c123: &[i64; 3], n: i64, out: &mut Vec<i64>) {
        out.clear();
        let rest = order.norm_of_coords(&[0, c123[0], c123[1], c123[2]]);
        let b: i128 = (0..3).map(|j| self.lin[j] as i128 * c123[j] as i128).sum();
        let a = self.a4 as i128;
        let c = rest - n as i128;
        if a != 0 {
            let disc = b * b - 4 * a * c;
            if let Some(s) = isqrt_i128(disc) {
                for num in [-b + s, -b - s] {
                    if num % (2 * a) == 0 {
                        let root = num / (2 * a);
                        if let Ok(v) = i64::try_from(root) {
                            if !out.contains(&v) {
                                out.push(v);
                            }
                        }
                    }
                }
            }
        } else if b != 0 {
            if (-c) % b == 0 {
                if let Ok(v) = i64::try_from(-c / b) {
                    out.push(v);
                }
            }
        }
        // a = b = 0 with c = 0 would make every c0 a solution; that needs a
        // totally isotropic direction, which the positive-definite majorant
        // certified away at order construction for division algebras. Split
        // algebras can reach it; treat as "no roots" beyond the scanned box.
    }
}

/// Estimated enumeration work: the walk scans the three outer
/// coordinates over their projected ellipsoid and solves the norm
/// equation at the innermost level, so the node count is the volume of
/// a 3-dimensional ellipsoid.
pub fn point_estimate(order: &QuaternionOrder, t2: f64) -> u64 {
    let g = order.majorant.approx();
    let det3 = match ldl_decompose(g) {
        Some((d, _)) => d[1] * d[2] * d[3],
        None => return u64::MAX,
    };
    let vol = 4.0 / 3.0 * std::f64::consts::PI * t2.powf(1.5) / det3.sqrt();
    if vol.is_finite() && vol >= 0.0 {
        vol as u64
    } else {
        u64::MAX
    }
}

/// Enumerate { c : N(c) = n, Q+(c) <= T^2 }, canonically sorted.
pub fn enumerate_norm(order: &QuaternionOrder, n: i64, t: f64) -> Result<NormSlice> {
    enumerate_norm_with_budget(order, n, t, 2_000_000_000)
}

pub fn enumerate_norm_with_budget(
    order: &QuaternionOrder,
    n: i64,
    t: f64,
    point_budget: u64,
) -> Result<NormSlice> {
    if n < 1 {
        return Err(Error::Parameter(format!("norm must be >= 1, got {n}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Parameter(format!("radius must be positive, got {t}")));
    }
    let estimated = point_estimate(order, t * t);
    if estimated > point_budget {
        return Err(Error::Resource {
            estimated,
            budget: point_budget,
        });
    }

    let g = order.majorant.approx();
    let (d, l) = ldl_decompose(g).ok_or_else(|| {
        Error::OrderAxiom("majorant form is numerically not positive definite".into())
    })?;
    let t2 = t * t;
    let bound = t2 * BOUND_INFLATE + BOUND_SLACK;
    let t2_exact = BigRational::from_f64(t2)
        .ok_or_else(|| Error::Parameter("radius is not finite".into()))?;

    // Level 3 ranges: d3 * c3^2 <= bound.
    let w3 = (bound / d[3]).sqrt();
    let c3_lo = (-w3 - BOUND_SLACK).floor() as i64;
    let c3_hi = (w3 + BOUND_SLACK).ceil() as i64;

    let eq = NormEquation::new(order);
    let coords_lists: Vec<Vec<[i64; 4]>> = (c3_lo..=c3_hi)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&c3| {
            let mut found = Vec::new();
            let mut roots = Vec::new();
            let u3 = c3 as f64;
            let q3 = d[3] * u3 * u3;
            if q3 > bound {
                return found;
            }
            // Level 2: d2 * (c2 + l32 c3)^2 <= bound - q3
            let rem2 = bound - q3;
            let ctr2 = -l[3][2] * c3 as f64;
            let w2 = (rem2 / d[2]).sqrt();
            let c2_lo = (ctr2 - w2 - BOUND_SLACK).floor() as i64;
            let c2_hi = (ctr2 + w2 + BOUND_SLACK).ceil() as i64;
            for c2 in c2_lo..=c2_hi {
                let u2 = c2 as f64 - ctr2;
                let q2 = q3 + d[2] * u2 * u2;
                if q2 > bound {
                    continue;
                }
                // Level 1
                let rem1 = bound - q2;
                let ctr1 = -(l[2][1] * c2 as f64 + l[3][1] * c3 as f64);
                let w1 = (rem1 / d[1]).sqrt();
                let c1_lo = (ctr1 - w1 - BOUND_SLACK).floor() as i64;
                let c1_hi = (ctr1 + w1 + BOUND_SLACK).ceil() as i64;
                for c1 in c1_lo..=c1_hi {
                    let u1 = c1 as f64 - ctr1;
                    let q1 = q2 + d[1] * u1 * u1;
                    if q1 > bound {
                        continue;
                    }
                    // Level 0: exact norm roots instead of a scan.
                    eq.solve(order, &[c1, c2, c3], n, &mut roots);
                    for &c0 in &roots {
                        let c = [c0, c1, c2, c3];
                        debug_assert_eq!(order.norm_of_coords(&c), n as i128);
                        let q = order.majorant.evaluate_f64(&c);
                        if q <= t2 * (1.0 - 1e-7) - BOUND_SLACK {
                            found.push(c);
                        } else if q <= t2 * (1.0 + 1e-7) + BOUND_SLACK
                            && majorant_within_exact(order, &c, &t2_exact)
                        {
                            found.push(c);
                        }
                    }
                }
            }
            found
        })
        .collect();

    let mut elements: Vec<SliceElement> = coords_lists
        .into_iter()
        .flatten()
        .map(|coords| SliceElement {
            quat: order.element(&coords),
            coords,
        })
        .collect();
    elements.sort_by(|x, y| x.quat.lex_cmp(&y.quat));

    Ok(NormSlice {
        algebra: order.algebra,
        n,
        majorant_radius_t: t,
        elements,
        cosets: None,
        stabilized: false,
        doubling_history: Vec::new(),
    })
}

/// Left unit equivalence: g1 ~ g2 iff g1 * conj(g2) / n lies in the order
/// and has reduced norm 1. Exact rational route; the coset decomposition
/// itself uses the integer-coordinate route below.
pub fn is_left_unit_equivalent(
    order: &QuaternionOrder,
    g1: &RationalQuaternion,
    g2: &RationalQuaternion,
) -> Result<bool> {
    let n1 = g1.reduced_norm();
    let n2 = g2.reduced_norm();
    if n1 != n2 {
        return Err(Error::Parameter(format!(
            "norms differ: N(g1) = {n1}, N(g2) = {n2}"
        )));
    }
    if n1.is_zero() {
        return Err(Error::Parameter("norm must be nonzero".into()));
    }
    let u = g1.multiply(&g2.conjugate())?.scale(&n1.recip());
    match order.integral_coords(&u) {
        Some(c) => Ok(order.norm_of_coords(&c) == 1),
        None => Ok(false),
    }
}

/// Integer-coordinate form of the same test.
pub fn equivalent_coords(order: &QuaternionOrder, c1: &[i64; 4], c2: &[i64; 4], n: i64) -> bool {
    let prod = order.mul_coords(c1, &order.conj_of_coords(c2));
    let mut u = [0i64; 4];
    for k in 0..4 {
        if prod[k] % n != 0 {
            return false;
        }
        u[k] = prod[k] / n;
    }
    order.norm_of_coords(&u) == 1
}

fn decompose_into_cosets(order: &QuaternionOrder, slice: &NormSlice) -> Vec<Coset> {
    // Process in minimal-majorant order so the first member of each orbit
    // is automatically the minimal representative (ties: canonical order,
    // which the stable sort preserves).
    let mut keyed: Vec<(usize, QuadExt)> = slice
        .elements
        .iter()
        .enumerate()
        .map(|(i, e)| (i, order.majorant.evaluate_exact(&e.coords)))
        .collect();
    keyed.sort_by(|(i, qa), (j, qb)| qa.cmp_exact(qb).then(i.cmp(j)));

    let mut cosets: Vec<Coset> = Vec::new();
    for (idx, _) in keyed {
        let c = &slice.elements[idx].coords;
        let mut placed = false;
        for coset in cosets.iter_mut() {
            let rep = &slice.elements[coset.representative].coords;
            if equivalent_coords(order, c, rep, slice.n) {
                coset.members.push(idx);
                placed = true;
                break;
            }
        }
        if !placed {
            cosets.push(Coset {
                representative: idx,
                members: vec![idx],
            });
        }
    }
    for coset in cosets.iter_mut() {
        coset.members.sort_unstable();
    }
    cosets.sort_by(|a, b| {
        slice.elements[a.representative]
            .quat
            .lex_cmp(&slice.elements[b.representative].quat)
    });
    cosets
}

/// Enumerate R(n) with growing radius until the left-coset count is
/// stable across `policy.stable_rounds` consecutive doublings.
pub fn unit_cosets(order: &QuaternionOrder, n: i64, policy: &CosetPolicy) -> Result<NormSlice> {
    if n < 1 {
        return Err(Error::Parameter(format!("norm must be >= 1, got {n}")));
    }
    let mut t2 = policy
        .initial_radius_sq
        .unwrap_or_else(|| (32.0 * n as f64).max(64.0));
    let mut history: Vec<(f64, usize)> = Vec::new();
    let mut streak = 0u32;
    let mut last: Option<NormSlice> = None;

    for _round in 0..policy.max_rounds {
        let t = t2.sqrt();
        let mut slice = enumerate_norm_with_budget(order, n, t, policy.point_budget)?;
        let cosets = decompose_into_cosets(order, &slice);
        let count = cosets.len();
        slice.cosets = Some(cosets);
        if let Some((_, prev_count)) = history.last() {
            if *prev_count == count {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        history.push((t, count));
        slice.doubling_history = history.clone();
        if streak >= policy.stable_rounds {
            slice.stabilized = true;
            return Ok(slice);
        }
        last = Some(slice);
        t2 *= 4.0; // T doubles
    }

    let mut partial = last.expect("max_rounds >= 1");
    partial.stabilized = false;
    partial.doubling_history = history.clone();
    Err(Error::CosetStabilization {
        rounds: policy.max_rounds,
        history,
        partial: Box::new(partial),
    })
}

// ---------------------------------------------------------------------------
// JSON interchange: exact numerator/denominator pairs, bit-exact round trip.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RationalPair {
    num: String,
    den: String,
}

impl From<&BigRational> for RationalPair {
    fn from(r: &BigRational) -> Self {
        RationalPair {
            num: r.numer().to_string(),
            den: r.denom().to_string(),
        }
    }
}

impl RationalPair {
    fn to_rational(&self) -> Option<BigRational> {
        let num = self.num.parse().ok()?;
        let den = self.den.parse().ok()?;
        Some(BigRational::new(num, den))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SliceElementJson {
    order_coords: [i64; 4],
    coords: Vec<RationalPair>,
}

/// Serialized form of a `NormSlice`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormSliceJson {
    algebra: AlgebraParams,
    n: i64,
    majorant_radius_t: f64,
    elements: Vec<SliceElementJson>,
    cosets: Option<Vec<Coset>>,
    stabilized: bool,
    doubling_history: Vec<(f64, usize)>,
}

pub fn slice_to_json(slice: &NormSlice) -> NormSliceJson {
    NormSliceJson {
        algebra: slice.algebra,
        n: slice.n,
        majorant_radius_t: slice.majorant_radius_t,
        elements: slice
            .elements
            .iter()
            .map(|e| SliceElementJson {
                order_coords: e.coords,
                coords: e.quat.coords.iter().map(RationalPair::from).collect(),
            })
            .collect(),
        cosets: slice.cosets.clone(),
        stabilized: slice.stabilized,
        doubling_history: slice.doubling_history.clone(),
    }
}

pub fn slice_from_json(json: &NormSliceJson) -> Result<NormSlice> {
    let mut elements = Vec::with_capacity(json.elements.len());
    for e in &json.elements {
        if e.coords.len() != 4 {
            return Err(Error::Parameter("element must have 4 coordinates".into()));
        }
        let coords: Vec<BigRational> = e
            .coords
            .iter()
            .map(|p| {
                p.to_rational()
                    .ok_or_else(|| Error::Parameter(format!("bad rational {}/{}", p.num, p.den)))
            })
            .collect::<Result<_>>()?;
        elements.push(SliceElement {
            coords: e.order_coords,
            quat: RationalQuaternion::new(
                json.algebra,
                std::array::from_fn(|i| coords[i].clone()),
            ),
        });
    }
    Ok(NormSlice {
        algebra: json.algebra,
        n: json.n,
        majorant_radius_t: json.majorant_radius_t,
        elements,
        cosets: json.cosets.clone(),
        stabilized: json.stabilized,
        doubling_history: json.doubling_history.clone(),
    })
}
