//! The near-identity counting laboratory: stabilizer quadratic forms,
//! the K_z circle, Iwasawa diagnostics at i, distances of lattice
//! elements to K_z, and the count/envelope experiments.
//!
//! Sample points are exact rationals so the form identities hold
//! bit-exactly; everything metric runs through multiprecision floats
//! with f64 reporting.

use num::{BigInt, BigRational, One, Signed, Zero};
use rayon::prelude::*;
use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::UpperHalfPoint;
use crate::mp::{Ctx, MpComplex};
use crate::order::QuaternionOrder;
use crate::quadfield::rational_to_f64;
use crate::quat::RationalQuaternion;
use crate::slice::enumerate_norm_with_budget;

/// Exact sample point x + iy, y > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub x: BigRational,
    pub y: BigRational,
}

impl SamplePoint {
    pub fn new(x: BigRational, y: BigRational) -> Result<Self> {
        if !y.is_positive() {
            return Err(Error::Parameter("Im z must be positive".into()));
        }
        Ok(SamplePoint { x, y })
    }

    pub fn from_f64(x: f64, y: f64) -> Result<Self> {
        let xr = BigRational::from_float(x)
            .ok_or_else(|| Error::Parameter(format!("x = {x} not finite")))?;
        let yr = BigRational::from_float(y)
            .ok_or_else(|| Error::Parameter(format!("y = {y} not finite")))?;
        SamplePoint::new(xr, yr)
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (rational_to_f64(&self.x), rational_to_f64(&self.y))
    }

    pub fn to_upper_half(&self, ctx: &Ctx) -> UpperHalfPoint {
        UpperHalfPoint::from_rationals(ctx, &self.x, &self.y).expect("y > 0 by construction")
    }
}

/// The binary quadratic form [alpha, beta, gamma] attached to z: the
/// coefficients solve alpha z^2 + beta z + gamma = 0 and satisfy
/// beta^2 - 4 alpha gamma = -1 exactly.
#[derive(Debug, Clone)]
pub struct StabilizerForm {
    pub alpha: BigRational,
    pub beta: BigRational,
    pub gamma_c: BigRational,
    pub z: SamplePoint,
}

impl StabilizerForm {
    pub fn new(z: &SamplePoint) -> Self {
        let two = BigRational::from_integer(BigInt::from(2));
        let alpha = (&two * &z.y).recip();
        let beta = -(&z.x / &z.y);
        let gamma_c = &z.x * &z.x / (&two * &z.y) + &z.y / &two;
        StabilizerForm {
            alpha,
            beta,
            gamma_c,
            z: z.clone(),
        }
    }

    /// beta^2 - 4 alpha gamma, exactly.
    pub fn discriminant(&self) -> BigRational {
        let four = BigRational::from_integer(BigInt::from(4));
        &self.beta * &self.beta - four * (&self.alpha * &self.gamma_c)
    }

    pub fn to_f64(&self) -> (f64, f64, f64) {
        (
            rational_to_f64(&self.alpha),
            rational_to_f64(&self.beta),
            rational_to_f64(&self.gamma_c),
        )
    }
}

/// The K_z matrix for parameters on the circle t^2 + u^2 = 4.
pub fn k_z_matrix(form: &StabilizerForm, t: f64, u: f64, prec: u32) -> Result<[Float; 4]> {
    if (t * t + u * u - 4.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "(t, u) must satisfy t^2 + u^2 = 4, got {}",
            t * t + u * u
        )));
    }
    let ctx = Ctx::new(prec);
    let alpha = ctx.float_from_rational(&form.alpha);
    let beta = ctx.float_from_rational(&form.beta);
    let gamma = ctx.float_from_rational(&form.gamma_c);
    let tf = ctx.float(t);
    let uf = ctx.float(u);
    let half = ctx.float(0.5);
    Ok([
        Float::with_val(prec, &tf - Float::with_val(prec, &beta * &uf)) * &half,
        -(gamma * &uf),
        alpha * &uf,
        Float::with_val(prec, &tf + Float::with_val(prec, &beta * &uf)) * &half,
    ])
}

/// Moebius action of a 2x2 real matrix on z, multiprecision.
pub fn moebius_apply(m: &[Float; 4], z: &UpperHalfPoint) -> MpComplex {
    let p = m[0].prec();
    let zc = z.to_complex();
    let num = MpComplex::new(
        Float::with_val(p, &m[0] * &zc.re) + &m[1],
        Float::with_val(p, &m[0] * &zc.im),
    );
    let den = MpComplex::new(
        Float::with_val(p, &m[2] * &zc.re) + &m[3],
        Float::with_val(p, &m[2] * &zc.im),
    );
    num.div(&den)
}

/// N-A-K factors of a determinant-one matrix at the base point i.
#[derive(Debug, Clone)]
pub struct IwasawaFactors {
    pub alpha_p: Float,
    pub beta_p: Float,
    pub rotation: [Float; 4],
}

pub fn iwasawa_at_i(g: &[Float; 4]) -> Result<IwasawaFactors> {
    let p = g[0].prec();
    let det = Float::with_val(p, &g[0] * &g[3]) - Float::with_val(p, &g[1] * &g[2]);
    if (det.to_f64() - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "Iwasawa factorization needs det = 1, got {}",
            det.to_f64()
        )));
    }
    // g.i = (b + a i)/(d + c i)
    let num = MpComplex::new(g[1].clone(), g[0].clone());
    let den = MpComplex::new(g[3].clone(), g[2].clone());
    let w = num.div(&den);
    let beta_p = w.im.clone().sqrt();
    let alpha_p = w.re.clone();
    // k = a^{-1} n^{-1} g
    let inv_beta = Float::with_val(p, 1) / &beta_p;
    let n_inv_g = [
        Float::with_val(p, &g[0] - Float::with_val(p, &alpha_p * &g[2])),
        Float::with_val(p, &g[1] - Float::with_val(p, &alpha_p * &g[3])),
        g[2].clone(),
        g[3].clone(),
    ];
    let rotation = [
        Float::with_val(p, &n_inv_g[0] * &inv_beta),
        Float::with_val(p, &n_inv_g[1] * &inv_beta),
        Float::with_val(p, &n_inv_g[2] * &beta_p),
        Float::with_val(p, &n_inv_g[3] * &beta_p),
    ];
    Ok(IwasawaFactors {
        alpha_p,
        beta_p,
        rotation,
    })
}

/// Reassemble n * a * k from the factors.
pub fn iwasawa_reconstruct(f: &IwasawaFactors) -> [Float; 4] {
    let p = f.alpha_p.prec();
    let inv_beta = Float::with_val(p, 1) / &f.beta_p;
    // n a = [[beta', alpha'/beta'],[0, 1/beta']]
    let na = [
        f.beta_p.clone(),
        Float::with_val(p, &f.alpha_p * &inv_beta),
        Float::with_val(p, 0),
        inv_beta,
    ];
    [
        Float::with_val(p, &na[0] * &f.rotation[0]) + Float::with_val(p, &na[1] * &f.rotation[2]),
        Float::with_val(p, &na[0] * &f.rotation[1]) + Float::with_val(p, &na[1] * &f.rotation[3]),
        Float::with_val(p, &na[2] * &f.rotation[0]) + Float::with_val(p, &na[3] * &f.rotation[2]),
        Float::with_val(p, &na[2] * &f.rotation[1]) + Float::with_val(p, &na[3] * &f.rotation[3]),
    ]
}

/// Distance of gamma / sqrt(n) to the circle K_z, with the minimizing
/// circle parameters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KzDistance {
    pub distance: f64,
    pub t: f64,
    pub u: f64,
}

/// Closed-form-seeded minimization over the circle: the squared distance
/// is c0 + c1 cos(th) + c2 sin(th) + c3 cos(2 th), scanned coarsely and
/// refined by golden section.
pub fn distance_to_kz(
    gamma: &RationalQuaternion,
    n: i64,
    form: &StabilizerForm,
) -> Result<KzDistance> {
    if n < 1 {
        return Err(Error::Parameter("n must be >= 1".into()));
    }
    let split = crate::embed::embed_split(gamma)?;
    let e = split.to_f64();
    let sqrt_n = (n as f64).sqrt();
    let x: [f64; 4] = [e[0] / sqrt_n, e[1] / sqrt_n, e[2] / sqrt_n, e[3] / sqrt_n];
    let (alpha, beta, gamma_c) = form.to_f64();
    // k_z(t,u) = t*P + u*Q
    let p_mat = [0.5, 0.0, 0.0, 0.5];
    let q_mat = [-beta / 2.0, -gamma_c, alpha, beta / 2.0];
    let dot = |a: &[f64; 4], b: &[f64; 4]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let xx = dot(&x, &x);
    let xp = dot(&x, &p_mat);
    let xq = dot(&x, &q_mat);
    let pp = dot(&p_mat, &p_mat); // = 1/2
    let qq = dot(&q_mat, &q_mat);
    let f = |th: f64| -> f64 {
        let t = 2.0 * th.cos();
        let u = 2.0 * th.sin();
        xx - 2.0 * (t * xp + u * xq) + t * t * pp + u * u * qq
    };
    let mut best_th = 0.0;
    let mut best = f64::INFINITY;
    let scan = 720;
    for i in 0..scan {
        let th = i as f64 / scan as f64 * std::f64::consts::TAU;
        let v = f(th);
        if v < best {
            best = v;
            best_th = th;
        }
    }
    // golden-section refine on the bracketing interval
    let gr = (f64::sqrt(5.0) - 1.0) / 2.0;
    let mut a = best_th - std::f64::consts::TAU / scan as f64;
    let mut b = best_th + std::f64::consts::TAU / scan as f64;
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    for _ in 0..200 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - gr * (b - a);
        d = a + gr * (b - a);
        if (b - a).abs() < 1e-16 {
            break;
        }
    }
    let th = (a + b) / 2.0;
    let dist_sq = f(th).max(0.0);
    Ok(KzDistance {
        distance: dist_sq.sqrt(),
        t: 2.0 * th.cos(),
        u: 2.0 * th.sin(),
    })
}

/// Residuals of the four coordinate constraints at the optimal circle
/// parameters. The trace constraint compares 2 x0 / sqrt(n) with t; the
/// off-diagonal pair gives the x2/x3 constraints; the diagonal
/// difference gives x1 (with the sign of the multiplicative embedding,
/// whose top-left entry is xi, not its conjugate).
pub fn coordinate_constraints(
    gamma: &RationalQuaternion,
    n: i64,
    form: &StabilizerForm,
) -> Result<[f64; 4]> {
    let kz = distance_to_kz(gamma, n, form)?;
    let (alpha, beta, gamma_c) = form.to_f64();
    let a = gamma.algebra.a as f64;
    let b = gamma.algebra.b as f64;
    let sqrt_a = a.sqrt();
    let sqrt_n = (n as f64).sqrt();
    let xs: Vec<f64> = gamma.coords.iter().map(rational_to_f64).collect();
    Ok([
        (2.0 * xs[0] / sqrt_n - kz.t).abs(),
        (2.0 * xs[1] * sqrt_a / sqrt_n + beta * kz.u).abs(),
        (2.0 * xs[2] / sqrt_n + (gamma_c - alpha / b) * kz.u).abs(),
        (2.0 * xs[3] * sqrt_a / sqrt_n + (gamma_c + alpha / b) * kz.u).abs(),
    ])
}

/// Hyperbolic distance between two points of the upper half plane.
pub fn hyperbolic_distance(z1: (f64, f64), z2: (f64, f64)) -> f64 {
    let dx = z1.0 - z2.0;
    let dy = z1.1 - z2.1;
    let arg = 1.0 + (dx * dx + dy * dy) / (2.0 * z1.1 * z2.1);
    arg.acosh()
}

/// One counting record.
#[derive(Debug, Clone, Serialize)]
pub struct CountRecord {
    pub n: i64,
    pub delta: f64,
    pub x: f64,
    pub y: f64,
    pub count: u64,
    pub envelope: f64,
    pub ratio: f64,
    /// Certified enumeration radius used.
    pub radius_t: f64,
    /// max over counted gamma of distance_to_kz / sqrt(delta)
    pub max_dist_over_sqrt_delta: f64,
    /// Which of |gamma_c +- alpha/b| carries the uniform lower bound
    /// 1/sqrt|b| (sign of b decides).
    pub branch: &'static str,
    /// max hyperbolic displacement among counted gamma (diagnostic).
    pub max_hyperbolic_displacement: f64,
    #[serde(skip)]
    pub counted: Vec<RationalQuaternion>,
}

pub fn envelope(n: i64, delta: f64, eps: f64) -> f64 {
    (n as f64).powf(eps) * (n as f64 * delta.powf(0.25) + 1.0)
}

/// Certified enumeration radius: every gamma in R(n) with
/// |gamma z - z| <= delta satisfies Q+(gamma) <= T^2 for this T.
/// Derivation: u^2 = n y / Im(gamma z) <= n y/(y - delta), and all four
/// matrix entries are bounded by u times geometry of z.
fn certified_radius_sq(n: i64, x: f64, y: f64, delta: f64) -> Result<f64> {
    if delta >= y {
        return Err(Error::Parameter(format!(
            "delta = {delta} must be smaller than Im z = {y} for a certified radius"
        )));
    }
    let z_abs = (x * x + y * y).sqrt();
    let u_sq = n as f64 * y / (y - delta);
    let t2 = u_sq * (1.0 + (z_abs + delta) * (z_abs + delta)) * (1.0 / (y * y) + (1.0 + z_abs / y).powi(2));
    Ok(t2 * 1.05)
}

/// Count { gamma in R(n) : |gamma z - z| <= delta }.
pub fn count_near(
    order: &QuaternionOrder,
    n: i64,
    z: &SamplePoint,
    delta: f64,
    eps: f64,
    prec: u32,
) -> Result<CountRecord> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    let (x, y) = z.to_f64();
    let t2 = certified_radius_sq(n, x, y, delta)?;
    let slice = enumerate_norm_with_budget(order, n, t2.sqrt(), 2_000_000_000)?;
    let ctx = Ctx::new(prec);
    let zp = z.to_upper_half(&ctx);
    let zc = zp.to_complex();
    let delta_f = ctx.float(delta);

    let mut counted = Vec::new();
    let mut max_hyp: f64 = 0.0;
    for e in &slice.elements {
        let split = crate::embed::embed_split(&e.quat)?;
        let m: [Float; 4] = std::array::from_fn(|i| split.entries[i].to_float(&ctx));
        let gz = moebius_apply(&m, &zp);
        let disp = gz.sub(&zc).abs();
        if disp <= delta_f {
            max_hyp = max_hyp.max(hyperbolic_distance(
                (x, y),
                (gz.re.to_f64(), gz.im.to_f64()),
            ));
            counted.push(e.quat.clone());
        }
    }

    let form = StabilizerForm::new(z);
    let mut max_dist = 0.0f64;
    for g in &counted {
        let kz = distance_to_kz(g, n, &form)?;
        max_dist = max_dist.max(kz.distance);
    }
    let env = envelope(n, delta, eps);
    let count = counted.len() as u64;
    Ok(CountRecord {
        n,
        delta,
        x,
        y,
        count,
        envelope: env,
        ratio: count as f64 / env,
        radius_t: t2.sqrt(),
        max_dist_over_sqrt_delta: max_dist / delta.sqrt(),
        branch: if order.algebra.b > 0 {
            "gamma_plus_alpha_over_b"
        } else {
            "gamma_minus_alpha_over_b"
        },
        max_hyperbolic_displacement: max_hyp,
        counted,
    })
}

/// Full grid experiment.
#[derive(Debug, Clone, Serialize)]
pub struct CountingTable {
    pub eps: f64,
    pub records: Vec<CountRecord>,
    pub sup_ratio: f64,
    /// One global constant: max over all counted gamma of
    /// distance_to_kz / sqrt(delta).
    pub max_dist_over_sqrt_delta: f64,
    /// Fitted growth exponents of ln(1 + max_z count) in ln n, one per
    /// delta, in the order of `deltas`.
    pub growth_exponents: Vec<(f64, f64)>,
}

pub fn counting_experiment(
    order: &QuaternionOrder,
    n_max: i64,
    deltas: &[f64],
    z_samples: &[SamplePoint],
    eps: f64,
    prec: u32,
) -> Result<CountingTable> {
    let mut cells = Vec::new();
    for n in 1..=n_max {
        for &delta in deltas {
            for z in z_samples {
                cells.push((n, delta, z.clone()));
            }
        }
    }
    let records: Result<Vec<CountRecord>> = cells
        .par_iter()
        .map(|(n, delta, z)| count_near(order, *n, z, *delta, eps, prec))
        .collect();
    let records = records?;

    let sup_ratio = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let max_dist = records
        .iter()
        .map(|r| r.max_dist_over_sqrt_delta)
        .fold(0.0, f64::max);

    // growth exponent per delta: least-squares slope of
    // ln(1 + max_z count) against ln n
    let mut growth = Vec::new();
    for &delta in deltas {
        let mut pts = Vec::new();
        for n in 1..=n_max {
            let mx = records
                .iter()
                .filter(|r| r.n == n && r.delta == delta)
                .map(|r| r.count)
                .max()
                .unwrap_or(0);
            pts.push(((n as f64).ln(), (1.0 + mx as f64).ln()));
        }
        growth.push((delta, least_squares_slope(&pts)));
    }

    Ok(CountingTable {
        eps,
        records,
        sup_ratio,
        max_dist_over_sqrt_delta: max_dist,
        growth_exponents: growth,
    })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return 0.0;
    }
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        0.0
    } else {
        (n * sxy - sx * sy) / denom
    }
}

/// CSV export with the column layout of the counting interface.
pub fn counting_table_to_csv(table: &CountingTable) -> String {
    let mut out =
        String::from("n,delta,x,y,count,envelope,ratio,max_dist_over_sqrt_delta,branch\n");
    for r in &table.records {
        out.push_str(&format!(
            "{},{:.6e},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{}\n",
            r.n, r.delta, r.x, r.y, r.count, r.envelope, r.ratio, r.max_dist_over_sqrt_delta, r.branch
        ));
    }
    out
}

/// Exact count of integer solutions of q r^2 + p s^2 = m. For p = 0 the
/// count is restricted to s = 0 (otherwise it would be infinite).
pub fn representation_count(q: i64, p: i64, m: i64) -> Result<u64> {
    if q < 1 || p < 0 || m < 0 {
        return Err(Error::Parameter(format!(
            "need q >= 1, p >= 0, m >= 0; got ({q}, {p}, {m})"
        )));
    }
    let mut count = 0u64;
    let r_max = ((m / q) as f64).sqrt() as i64 + 1;
    for r in -r_max..=r_max {
        let rem = m - q * r * r;
        if rem < 0 {
            continue;
        }
        if p == 0 {
            if rem == 0 {
                count += 1; // (r, 0)
            }
            continue;
        }
        if rem % p != 0 {
            continue;
        }
        let s_sq = rem / p;
        let s = (s_sq as f64).sqrt().round() as i64;
        for cand in [s - 1, s, s + 1] {
            if cand >= 0 && cand * cand == s_sq {
                count += if cand == 0 { 1 } else { 2 };
                break;
            }
        }
    }
    Ok(count)
}
