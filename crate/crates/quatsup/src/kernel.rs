//! Weighted point-pair kernels over the enumerated slices: the diagonal
//! and off-diagonal kernel sums, their absolute-value majorants, the
//! coset/Hecke consistency residual, and the convexity diagnostic.
//!
//! Individual terms are evaluated in log-magnitude/phase form so that
//! weights of several hundred neither underflow nor lose phase, and the
//! accumulation is compensated. Truncation is radius-doubling with a
//! stability criterion; a cheap f64 prefilter decides which terms are
//! worth multiprecision evaluation. The prefilter threshold sits many
//! orders below the stability tolerance, so skipped mass is invisible
//! at the reported accuracy.

use num::complex::Complex64;
use num::BigRational;
use rug::ops::Pow;
use rug::Float;
use serde::Serialize;
use serde_json::json;

use crate::embed::embed_split;
use crate::error::{Error, Result};
use crate::mp::{complex_from_log_polar, CompensatedComplexSum, CompensatedSum, Ctx, MpComplex};
use crate::order::QuaternionOrder;
use crate::quat::RationalQuaternion;
use crate::slice::{enumerate_norm_with_budget, unit_cosets, CosetPolicy, NormSlice};

/// Point z = x + iy in the upper half plane, arbitrary precision.
#[derive(Debug, Clone)]
pub struct UpperHalfPoint {
    pub x: Float,
    pub y: Float,
}

impl UpperHalfPoint {
    pub fn new(ctx: &Ctx, x: f64, y: f64) -> Result<Self> {
        if !(y > 0.0) {
            return Err(Error::Parameter(format!("Im z must be positive, got {y}")));
        }
        Ok(UpperHalfPoint {
            x: ctx.float(x),
            y: ctx.float(y),
        })
    }

    pub fn from_rationals(ctx: &Ctx, x: &BigRational, y: &BigRational) -> Result<Self> {
        let yf = ctx.float_from_rational(y);
        if yf <= 0 {
            return Err(Error::Parameter("Im z must be positive".into()));
        }
        Ok(UpperHalfPoint {
            x: ctx.float_from_rational(x),
            y: yf,
        })
    }

    pub fn from_floats(x: Float, y: Float) -> Result<Self> {
        if y <= 0 {
            return Err(Error::Parameter("Im z must be positive".into()));
        }
        Ok(UpperHalfPoint { x, y })
    }

    pub fn to_complex(&self) -> MpComplex {
        MpComplex::new(self.x.clone(), self.y.clone())
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.x.to_f64(), self.y.to_f64())
    }
}

/// Truncation policy for kernel sums.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TruncPolicy {
    /// Relative stability tolerance between doubling rounds.
    pub tol: f64,
    pub stable_rounds: u32,
    pub max_rounds: u32,
    pub initial_radius_sq: Option<f64>,
    pub point_budget: u64,
}

impl Default for TruncPolicy {
    fn default() -> Self {
        TruncPolicy {
            tol: 1e-12,
            stable_rounds: 2,
            max_rounds: 18,
            initial_radius_sq: None,
            point_budget: 2_000_000_000,
        }
    }
}

/// Per-element ledger record.
#[derive(Debug, Clone)]
pub struct LedgerEntry {
    pub quat: RationalQuaternion,
    /// |h_gamma(z)| (diagonal) or the analogous two-point factor magnitude.
    pub h_abs: f64,
    pub log10_term_magnitude: f64,
    pub phase: f64,
    /// Euclidean |gamma z - z| (diagonal) resp. |gamma w - w|.
    pub displacement: f64,
    /// Invariant displacement |gamma z - z| / (2 sqrt(Im z Im gamma z)),
    /// i.e. sinh of half the hyperbolic displacement. The sharp term
    /// bound |h| <= n^{-1/2} (1 + rho^2)^{-1/2} is an identity in this
    /// variable; the Euclidean variant fails on real group elements.
    pub normalized_displacement: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DoublingRecord {
    pub radius_t: f64,
    pub value_re: f64,
    pub value_im: f64,
    pub terms_evaluated: usize,
    pub change: f64,
}

/// Tail diagnostic from the outermost enumeration shell: bottom rows of
/// distinct elements are distinct, so |h| <= 2/(u + n/u) with
/// u = |c conj(z) + d| bounds what the next shells can contribute.
#[derive(Debug, Clone, Serialize)]
pub struct TailDiagnostic {
    pub shell_min_u: f64,
    pub shell_h_bound: f64,
    pub shell_term_bound_log10: f64,
    pub last_change: f64,
}

/// Result of a kernel evaluation.
#[derive(Debug, Clone)]
pub struct KernelEvaluation {
    pub n: i64,
    pub k: u32,
    pub precision: u32,
    pub z: (f64, f64),
    pub w: Option<(f64, f64)>,
    /// y^k h^n_k(z,z) on the diagonal; h^n_k(z,w) off the diagonal.
    pub value: MpComplex,
    /// Sum of absolute term values (the Godement majorant of the sum).
    pub majorant: Float,
    pub terms_used: usize,
    pub skipped_terms: usize,
    pub radius_t: f64,
    pub doubling_history: Vec<DoublingRecord>,
    pub stabilized: bool,
    pub max_term_magnitude: f64,
    /// Number of terms at the unit-circle ceiling |h| ~ n^(-1/2); on the
    /// diagonal at n = 1 this is the stabilizer order of z (elliptic
    /// detection).
    pub stabilizer_count: usize,
    pub tail: TailDiagnostic,
    pub ledger: Option<Vec<LedgerEntry>>,
}

fn validate_weight(k: u32) -> Result<()> {
    if k < 4 || k % 2 != 0 {
        return Err(Error::Parameter(format!(
            "weight must be even and >= 4, got {k}"
        )));
    }
    Ok(())
}

/// Moebius action of a real 2x2 matrix on a complex point.
fn moebius_mp(m: &[Float; 4], z: &MpComplex) -> MpComplex {
    let p = z.re.prec();
    let num = MpComplex::new(
        Float::with_val(p, &m[0] * &z.re) + &m[1],
        Float::with_val(p, &m[0] * &z.im),
    );
    let den = MpComplex::new(
        Float::with_val(p, &m[2] * &z.re) + &m[3],
        Float::with_val(p, &m[2] * &z.im),
    );
    num.div(&den)
}

fn moebius_f64(m: &[f64; 4], z: Complex64) -> Complex64 {
    (m[0] * z + m[1]) / (m[2] * z + m[3])
}

/// h_gamma(z) = y / ((z - gamma conj(z))/2i * (c conj(z) + d)) for a
/// matrix of determinant n > 0, in multiprecision.
pub fn h_gamma(z: &UpperHalfPoint, gamma: &RationalQuaternion, n: i64, prec: u32) -> Result<MpComplex> {
    let det = gamma.reduced_norm();
    if det <= BigRational::from_integer(0.into()) {
        return Err(Error::Parameter(format!(
            "determinant must be positive, got {det}"
        )));
    }
    if det != BigRational::from_integer(n.into()) {
        return Err(Error::Parameter(format!(
            "element has norm {det}, expected {n}"
        )));
    }
    let ctx = Ctx::new(prec);
    let split = embed_split(gamma)?;
    let m: [Float; 4] = std::array::from_fn(|i| split.entries[i].to_float(&ctx));
    Ok(h_gamma_from_entries(&m, z))
}

fn h_gamma_from_entries(m: &[Float; 4], z: &UpperHalfPoint) -> MpComplex {
    let p = z.x.prec();
    let zc = z.to_complex();
    let zbar = zc.conj();
    let j = MpComplex::new(
        Float::with_val(p, &m[2] * &zbar.re) + &m[3],
        Float::with_val(p, &m[2] * &zbar.im),
    );
    let gzbar = MpComplex::new(
        Float::with_val(p, &m[0] * &zbar.re) + &m[1],
        Float::with_val(p, &m[0] * &zbar.im),
    )
    .div(&j);
    // (z - gzbar)/2i = (u_im/2) - i (u_re/2)
    let u = zc.sub(&gzbar);
    let half = Float::with_val(p, 0.5);
    let q = MpComplex::new(
        Float::with_val(p, &u.im * &half),
        -Float::with_val(p, &u.re * &half),
    );
    let den = q.mul(&j);
    MpComplex::new(z.y.clone(), Float::with_val(p, 0)).div(&den)
}

/// What a single term contributes, in log-polar pieces.
struct TermParts {
    log_mag: Float,
    phase: Float,
    h_abs: f64,
    displacement: f64,
    normalized_displacement: f64,
    u_abs: f64,
}

fn displacements(base: &UpperHalfPoint, moved: &MpComplex) -> (f64, f64) {
    let disp = moved.sub(&base.to_complex()).abs().to_f64();
    let prod = base.y.to_f64() * moved.im.to_f64();
    let norm = if prod > 0.0 {
        disp / (2.0 * prod.sqrt())
    } else {
        f64::INFINITY
    };
    (disp, norm)
}

enum Summand<'a> {
    /// y^k h^n_k(z,z): terms n^{k/2} h_gamma(z)^k.
    Diagonal { z: &'a UpperHalfPoint },
    /// h^n_k(z,w): terms n^{k/2} (c conj(w)+d)^{-k} ((z-gamma conj(w))/2i)^{-k}.
    OffDiagonal {
        z: &'a UpperHalfPoint,
        w: &'a UpperHalfPoint,
    },
}

impl<'a> Summand<'a> {
    fn base_point(&self) -> &UpperHalfPoint {
        match self {
            Summand::Diagonal { z } => z,
            Summand::OffDiagonal { w, .. } => w,
        }
    }

    /// f64 estimate of k*ln|h-factor| + (k/2) ln n, plus u = |c conj(base)+d|.
    fn log_mag_f64(&self, m: &[f64; 4], k: u32, n: i64) -> (f64, f64) {
        match self {
            Summand::Diagonal { z } => {
                let (x, y) = z.to_f64();
                let zb = Complex64::new(x, -y);
                let j = m[2] * zb + m[3];
                let gz = (m[0] * zb + m[1]) / j;
                let u = Complex64::new(x, y) - gz;
                let q = Complex64::new(u.im / 2.0, -u.re / 2.0);
                let h = y / (q * j).norm();
                (
                    k as f64 * h.ln() + k as f64 / 2.0 * (n as f64).ln(),
                    j.norm(),
                )
            }
            Summand::OffDiagonal { z, w } => {
                let (zx, zy) = z.to_f64();
                let (wx, wy) = w.to_f64();
                let wb = Complex64::new(wx, -wy);
                let j = m[2] * wb + m[3];
                let gw = (m[0] * wb + m[1]) / j;
                let u = Complex64::new(zx, zy) - gw;
                let q = Complex64::new(u.im / 2.0, -u.re / 2.0);
                let l = k as f64 / 2.0 * (n as f64).ln()
                    - k as f64 * (j.norm().ln() + q.norm().ln());
                (l, j.norm())
            }
        }
    }

    fn term_parts(&self, ctx: &Ctx, m: &[Float; 4], k: u32, n: i64) -> TermParts {
        let kf = ctx.float_from_i64(k as i64);
        let half_k_ln_n = {
            let ln_n = ctx.float_from_i64(n).ln();
            Float::with_val(ctx.prec, &kf * &ln_n) / 2u32
        };
        match self {
            Summand::Diagonal { z } => {
                let h = h_gamma_from_entries(m, z);
                let ln_h = h.ln_abs();
                let arg_h = h.arg();
                let log_mag = Float::with_val(ctx.prec, &kf * &ln_h) + &half_k_ln_n;
                let phase = reduce_phase(Float::with_val(ctx.prec, &kf * &arg_h), ctx);
                let gz = moebius_mp(m, &z.to_complex());
                let (disp, norm_disp) = displacements(z, &gz);
                let zbar = z.to_complex().conj();
                let u_abs = MpComplex::new(
                    Float::with_val(ctx.prec, &m[2] * &zbar.re) + &m[3],
                    Float::with_val(ctx.prec, &m[2] * &zbar.im),
                )
                .abs()
                .to_f64();
                TermParts {
                    log_mag,
                    phase,
                    h_abs: h.abs().to_f64(),
                    displacement: disp,
                    normalized_displacement: norm_disp,
                    u_abs,
                }
            }
            Summand::OffDiagonal { z, w } => {
                let p = ctx.prec;
                let wbar = w.to_complex().conj();
                let j = MpComplex::new(
                    Float::with_val(p, &m[2] * &wbar.re) + &m[3],
                    Float::with_val(p, &m[2] * &wbar.im),
                );
                let gw = MpComplex::new(
                    Float::with_val(p, &m[0] * &wbar.re) + &m[1],
                    Float::with_val(p, &m[0] * &wbar.im),
                )
                .div(&j);
                let u = z.to_complex().sub(&gw);
                let half = Float::with_val(p, 0.5);
                let q = MpComplex::new(
                    Float::with_val(p, &u.im * &half),
                    -Float::with_val(p, &u.re * &half),
                );
                let ln_j = j.ln_abs();
                let ln_q = q.ln_abs();
                let log_mag =
                    half_k_ln_n - Float::with_val(p, &kf * &ln_j) - Float::with_val(p, &kf * &ln_q);
                let phase_raw =
                    -(Float::with_val(p, &kf * &j.arg()) + Float::with_val(p, &kf * &q.arg()));
                let phase = reduce_phase(phase_raw, ctx);
                // "h-like" factor magnitude for ledger bounds: sqrt(Im z Im w)
                // scaled two-point factor; on the diagonal it reduces to |h|.
                let hij = {
                    let num = Float::with_val(p, &z.y * &w.y).sqrt();
                    let den = q.abs() * j.abs();
                    (num / den).to_f64()
                };
                let gwp = moebius_mp(m, &w.to_complex());
                let (disp, norm_disp) = displacements(w, &gwp);
                TermParts {
                    log_mag,
                    phase,
                    h_abs: hij,
                    displacement: disp,
                    normalized_displacement: norm_disp,
                    u_abs: j.abs().to_f64(),
                }
            }
        }
    }
}

fn reduce_phase(phi: Float, ctx: &Ctx) -> Float {
    let two_pi = ctx.pi() * 2u32;
    let turns = Float::with_val(ctx.prec, &phi / &two_pi).round();
    phi - turns * two_pi
}

struct EvalRequest<'a> {
    order: &'a QuaternionOrder,
    n: i64,
    k: u32,
    summand: Summand<'a>,
    policy: TruncPolicy,
    prec: u32,
    want_ledger: bool,
}

fn evaluate(req: EvalRequest<'_>) -> Result<KernelEvaluation> {
    validate_weight(req.k)?;
    if req.n < 1 {
        return Err(Error::Parameter(format!("n must be >= 1, got {}", req.n)));
    }
    let ctx = Ctx::new(req.prec);
    let order = req.order;

    // f64 and multiprecision embeddings of the order basis; element
    // entries are integer combinations of these.
    let mut basis_f64 = [[0.0f64; 4]; 4];
    let mut basis_mp: Vec<[Float; 4]> = Vec::with_capacity(4);
    for i in 0..4 {
        let split = embed_split(&order.basis[i])?;
        basis_f64[i] = split.to_f64();
        basis_mp.push(std::array::from_fn(|e| split.entries[e].to_float(&ctx)));
    }
    let entries_f64 = |c: &[i64; 4]| -> [f64; 4] {
        std::array::from_fn(|e| (0..4).map(|i| c[i] as f64 * basis_f64[i][e]).sum())
    };
    let entries_mp = |c: &[i64; 4]| -> [Float; 4] {
        std::array::from_fn(|e| {
            let mut acc = ctx.zero();
            for i in 0..4 {
                if c[i] != 0 {
                    acc += Float::with_val(ctx.prec, &basis_mp[i][e] * c[i]);
                }
            }
            acc
        })
    };

    let mut t2 = req
        .policy
        .initial_radius_sq
        .unwrap_or_else(|| (32.0 * req.n as f64).max(64.0));
    let mut history: Vec<DoublingRecord> = Vec::new();
    let mut prev_value: Option<MpComplex> = None;
    let mut streak = 0u32;
    let mut result: Option<KernelEvaluation> = None;

    for _round in 0..req.policy.max_rounds {
        let t = t2.sqrt();
        let slice = enumerate_norm_with_budget(order, req.n, t, req.policy.point_budget)?;

        // Pass 1: f64 screen.
        let screens: Vec<(f64, f64)> = slice
            .elements
            .iter()
            .map(|e| req.summand.log_mag_f64(&entries_f64(&e.coords), req.k, req.n))
            .collect();
        let max_lmag = screens
            .iter()
            .map(|(l, _)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        let scale_l = match &prev_value {
            Some(v) => {
                let va = v.abs().to_f64();
                if va > 0.0 {
                    va.ln().min(max_lmag)
                } else {
                    max_lmag
                }
            }
            None => max_lmag,
        };
        let ln_floor = scale_l + req.policy.tol.ln() - 16.0;

        // Pass 2: multiprecision evaluation in canonical element order.
        let mut sum = CompensatedComplexSum::new(ctx.prec);
        let mut majorant = CompensatedSum::new(ctx.prec);
        let mut ledger: Vec<LedgerEntry> = Vec::new();
        let mut terms_used = 0usize;
        let mut skipped = 0usize;
        let mut max_term = f64::NEG_INFINITY;
        let mut stab_count = 0usize;
        let sqrt_n = (req.n as f64).sqrt();
        let mut shell_min_u = f64::INFINITY;
        let prev_t = history.last().map(|r| r.radius_t).unwrap_or(0.0);

        for (e, (lmag, _u)) in slice.elements.iter().zip(&screens) {
            if *lmag < ln_floor {
                skipped += 1;
                continue;
            }
            let m = entries_mp(&e.coords);
            let parts = req.summand.term_parts(&ctx, &m, req.k, req.n);
            let term = complex_from_log_polar(&parts.log_mag, &parts.phase);
            sum.add(&term);
            majorant.add(&term.abs());
            terms_used += 1;
            let tm = parts.log_mag.to_f64();
            if tm > max_term {
                max_term = tm;
            }
            if parts.h_abs * sqrt_n >= 1.0 - 1e-9 {
                stab_count += 1;
            }
            // outermost-shell bookkeeping for the tail diagnostic
            if order.majorant.evaluate_f64(&e.coords) > prev_t * prev_t {
                shell_min_u = shell_min_u.min(parts.u_abs);
            }
            if req.want_ledger {
                ledger.push(LedgerEntry {
                    quat: e.quat.clone(),
                    h_abs: parts.h_abs,
                    log10_term_magnitude: tm / std::f64::consts::LN_10,
                    phase: parts.phase.to_f64(),
                    displacement: parts.displacement,
                });
            }
        }

        let value = sum.value();
        let change = match &prev_value {
            Some(p) => value.sub(p).abs().to_f64(),
            None => f64::INFINITY,
        };
        let value_abs = value.abs().to_f64();
        history.push(DoublingRecord {
            radius_t: t,
            value_re: value.re.to_f64(),
            value_im: value.im.to_f64(),
            terms_evaluated: terms_used,
            change,
        });
        let stable_now = change <= req.policy.tol * (1.0 + value_abs);
        if stable_now {
            streak += 1;
        } else {
            streak = 0;
        }

        let shell_h_bound = if shell_min_u.is_finite() && shell_min_u > 0.0 {
            2.0 / (shell_min_u + req.n as f64 / shell_min_u)
        } else {
            f64::NAN
        };
        let eval = KernelEvaluation {
            n: req.n,
            k: req.k,
            precision: ctx.prec,
            z: match &req.summand {
                Summand::Diagonal { z } => z.to_f64(),
                Summand::OffDiagonal { z, .. } => z.to_f64(),
            },
            w: match &req.summand {
                Summand::Diagonal { .. } => None,
                Summand::OffDiagonal { w, .. } => Some(w.to_f64()),
            },
            value: value.clone(),
            majorant: majorant.value(),
            terms_used,
            skipped_terms: skipped,
            radius_t: t,
            doubling_history: history.clone(),
            stabilized: streak >= req.policy.stable_rounds,
            max_term_magnitude: if max_term.is_finite() { max_term.exp() } else { 0.0 },
            stabilizer_count: stab_count,
            tail: TailDiagnostic {
                shell_min_u,
                shell_h_bound,
                shell_term_bound_log10: if shell_h_bound.is_finite() && shell_h_bound > 0.0 {
                    (req.k as f64 * shell_h_bound.ln()
                        + req.k as f64 / 2.0 * (req.n as f64).ln())
                        / std::f64::consts::LN_10
                } else {
                    f64::NAN
                },
                last_change: change,
            },
            ledger: if req.want_ledger { Some(ledger) } else { None },
        };

        if eval.stabilized {
            return Ok(eval);
        }
        result = Some(eval);
        prev_value = Some(value);
        t2 *= 4.0;
    }

    let partial = result.expect("max_rounds >= 1");
    Err(Error::KernelStabilization {
        rounds: req.policy.max_rounds,
        last_change: partial.tail.last_change,
        partial: Box::new(partial),
    })
}

/// y^k h^n_k(z, z), stabilized.
pub fn kernel_diag(
    order: &QuaternionOrder,
    n: i64,
    k: u32,
    z: &UpperHalfPoint,
    policy: &TruncPolicy,
    prec: u32,
    want_ledger: bool,
) -> Result<KernelEvaluation> {
    evaluate(EvalRequest {
        order,
        n,
        k,
        summand: Summand::Diagonal { z },
        policy: *policy,
        prec,
        want_ledger,
    })
}

/// h^n_k(z, w), stabilized.
pub fn kernel_offdiag(
    order: &QuaternionOrder,
    n: i64,
    k: u32,
    z: &UpperHalfPoint,
    w: &UpperHalfPoint,
    policy: &TruncPolicy,
    prec: u32,
    want_ledger: bool,
) -> Result<KernelEvaluation> {
    evaluate(EvalRequest {
        order,
        n,
        k,
        summand: Summand::OffDiagonal { z, w },
        policy: *policy,
        prec,
        want_ledger,
    })
}

/// Godement-style normalized majorant: (k-1) * Im(w)^{k/2} * sum |terms|
/// of the weight-k unit kernel at (z, w).
#[derive(Debug, Clone, Serialize)]
pub struct GodementReport {
    pub k: u32,
    pub ratio: f64,
    pub majorant: f64,
    pub kernel_abs: f64,
}

pub fn godement_ratio(
    order: &QuaternionOrder,
    k: u32,
    z: &UpperHalfPoint,
    w: &UpperHalfPoint,
    policy: &TruncPolicy,
    prec: u32,
) -> Result<GodementReport> {
    let eval = kernel_offdiag(order, 1, k, z, w, policy, prec, false)?;
    let ctx = Ctx::new(prec);
    let scale = w.y.clone().pow(k / 2) * ctx.float_from_i64(k as i64 - 1);
    let ratio = (Float::with_val(ctx.prec, &eval.majorant * &scale)).to_f64();
    Ok(GodementReport {
        k,
        ratio,
        majorant: eval.majorant.to_f64(),
        kernel_abs: eval.value.abs().to_f64(),
    })
}

/// Residual of the coset form of the kernel transform: compares the
/// norm-n kernel sum against the unit-kernel sum pushed through the
/// coset representatives. Near zero exactly when the coset partition is
/// a genuine partition.
#[derive(Debug, Clone, Serialize)]
pub struct HeckeResidualReport {
    pub n: i64,
    pub k: u32,
    pub residual: f64,
    pub residual_dropped_coset: f64,
    pub coset_count: usize,
    pub lhs_abs: f64,
    pub rhs_abs: f64,
}

pub fn hecke_identity_residual(
    order: &QuaternionOrder,
    n: i64,
    k: u32,
    z: &UpperHalfPoint,
    w: &UpperHalfPoint,
    policy: &TruncPolicy,
    coset_policy: &CosetPolicy,
    prec: u32,
) -> Result<HeckeResidualReport> {
    validate_weight(k)?;
    let ctx = Ctx::new(prec);
    let cosets = unit_cosets(order, n, coset_policy)?;
    let reps: Vec<RationalQuaternion> = cosets
        .representatives()
        .iter()
        .map(|e| e.quat.clone())
        .collect();

    // lhs = n^{k/2-1} h^n_k(z,w)
    let lhs_eval = kernel_offdiag(order, n, k, z, w, policy, prec, false)?;
    let n_f = ctx.float_from_i64(n);
    let scale_lhs = n_f.clone().pow(k / 2 - 1);
    let lhs = lhs_eval.value.scale(&scale_lhs);

    // rhs = n^{k/2-1} sum_i n^{k/2} (c_i conj(w) + d_i)^{-k} h_k(z, gamma_i w)
    let mut terms: Vec<MpComplex> = Vec::with_capacity(reps.len());
    for rep in &reps {
        let split = embed_split(rep)?;
        let m: [Float; 4] = std::array::from_fn(|i| split.entries[i].to_float(&ctx));
        let wbar = w.to_complex().conj();
        let j = MpComplex::new(
            Float::with_val(ctx.prec, &m[2] * &wbar.re) + &m[3],
            Float::with_val(ctx.prec, &m[2] * &wbar.im),
        );
        let gw = moebius_mp(&m, &w.to_complex());
        let gw_pt = UpperHalfPoint::from_floats(gw.re.clone(), gw.im.clone())?;
        let h1 = kernel_offdiag(order, 1, k, z, &gw_pt, policy, prec, false)?;
        // n^{k/2} j^{-k}
        let kf = ctx.float_from_i64(k as i64);
        let log_mag = Float::with_val(ctx.prec, &n_f.clone().ln() * &kf) / 2u32
            - Float::with_val(ctx.prec, &j.ln_abs() * &kf);
        let phase = reduce_phase(-Float::with_val(ctx.prec, &j.arg() * &kf), &ctx);
        let factor = complex_from_log_polar(&log_mag, &phase);
        terms.push(factor.mul(&h1.value));
    }
    let mut rhs_sum = CompensatedComplexSum::new(ctx.prec);
    for t in &terms {
        rhs_sum.add(t);
    }
    let rhs = rhs_sum.value().scale(&scale_lhs);

    // negative control: drop the last coset
    let mut dropped_sum = CompensatedComplexSum::new(ctx.prec);
    for t in terms.iter().take(terms.len().saturating_sub(1)) {
        dropped_sum.add(t);
    }
    let rhs_dropped = dropped_sum.value().scale(&scale_lhs);

    let lhs_abs = lhs.abs().to_f64();
    let rhs_abs = rhs.abs().to_f64();
    let denom = 1.0 + lhs_abs.max(rhs_abs);
    let residual = lhs.sub(&rhs).abs().to_f64() / denom;
    let residual_dropped = lhs.sub(&rhs_dropped).abs().to_f64() / denom;

    Ok(HeckeResidualReport {
        n,
        k,
        residual,
        residual_dropped_coset: residual_dropped,
        coset_count: reps.len(),
        lhs_abs,
        rhs_abs,
    })
}

/// Convexity diagnostic at one grid point.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexityPoint {
    pub x: f64,
    pub y: f64,
    /// ((k-1)/2) y^k h_k(z,z), from the direct kernel sum.
    pub kernel_quantity: f64,
    /// ((k-1)/2) (stab + rho^{k-4} sum' |h|^4): the split-term bound.
    pub split_bound: f64,
    pub stabilizer_count: usize,
    pub max_nonstab_h: f64,
    pub imag_part: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub k: u32,
    pub points: Vec<ConvexityPoint>,
    pub sup_kernel_quantity: f64,
    pub sup_split_bound: f64,
    pub sup_kernel_over_k: f64,
    pub sup_split_over_k: f64,
}

/// Evaluate the convexity quantities over a z-grid. Requires k >= 8 so
/// the fourth-power comparison sum is a strictly lighter weight.
pub fn convexity_bound(
    order: &QuaternionOrder,
    k: u32,
    grid: &[(f64, f64)],
    policy: &TruncPolicy,
    prec: u32,
) -> Result<ConvexityReport> {
    validate_weight(k)?;
    if k < 8 {
        return Err(Error::Parameter(format!(
            "convexity diagnostic needs k >= 8, got {k}"
        )));
    }
    let ctx = Ctx::new(prec);
    let mut points = Vec::with_capacity(grid.len());
    let mut sup_b = f64::NEG_INFINITY;
    let mut sup_a = f64::NEG_INFINITY;
    // |h|^4 sums decay slowly; loosen its tolerance, the factor rho^{k-4}
    // dominates the accuracy of the split bound anyway.
    let four_policy = TruncPolicy {
        tol: (policy.tol * 1e3).min(1e-6),
        ..*policy
    };
    for &(x, y) in grid {
        let z = UpperHalfPoint::new(&ctx, x, y)?;
        let eval_k = kernel_diag(order, 1, k, &z, policy, prec, false)?;
        let eval_4 = kernel_diag(order, 1, 4, &z, &four_policy, prec, true)?;
        let ledger4 = eval_4.ledger.as_ref().expect("requested ledger");
        let stab = eval_4.stabilizer_count as f64;
        let mut sum4_nonstab = 0.0f64;
        let mut rho = 0.0f64;
        for entry in ledger4 {
            if entry.h_abs >= 1.0 - 1e-9 {
                continue;
            }
            sum4_nonstab += entry.h_abs.powi(4);
            rho = rho.max(entry.h_abs);
        }
        let half_km1 = (k as f64 - 1.0) / 2.0;
        let b = half_km1 * eval_k.value.re.to_f64();
        let a = half_km1 * (stab + rho.powi(k as i32 - 4) * sum4_nonstab);
        sup_b = sup_b.max(b);
        sup_a = sup_a.max(a);
        points.push(ConvexityPoint {
            x,
            y,
            kernel_quantity: b,
            split_bound: a,
            stabilizer_count: eval_4.stabilizer_count,
            max_nonstab_h: rho,
            imag_part: eval_k.value.im.to_f64(),
        });
    }
    Ok(ConvexityReport {
        k,
        points,
        sup_kernel_quantity: sup_b,
        sup_split_bound: sup_a,
        sup_kernel_over_k: sup_b / k as f64,
        sup_split_over_k: sup_a / k as f64,
    })
}

// ---------------------------------------------------------------------------
// Exports: CSV ledger and JSON evaluation report.
// ---------------------------------------------------------------------------

fn rational_str(r: &BigRational) -> String {
    if r.denom() == &num::BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// CSV with columns (x0,x1,x2,x3,h_abs,log10_term_magnitude,phase).
pub fn ledger_to_csv(eval: &KernelEvaluation) -> String {
    let mut out = String::from("x0,x1,x2,x3,h_abs,log10_term_magnitude,phase\n");
    if let Some(ledger) = &eval.ledger {
        for e in ledger {
            out.push_str(&format!(
                "{},{},{},{},{:.12e},{:.12e},{:.12e}\n",
                rational_str(&e.quat.coords[0]),
                rational_str(&e.quat.coords[1]),
                rational_str(&e.quat.coords[2]),
                rational_str(&e.quat.coords[3]),
                e.h_abs,
                e.log10_term_magnitude,
                e.phase
            ));
        }
    }
    out
}

fn float_str(f: &Float, digits: usize) -> String {
    format!("{:.*e}", digits, f)
}

/// JSON report for one evaluation, decimals carried at the working
/// precision.
pub fn evaluation_to_json(eval: &KernelEvaluation) -> serde_json::Value {
    let digits = (eval.precision as f64 * 0.30103) as usize;
    json!({
        "n": eval.n,
        "k": eval.k,
        "precision_bits": eval.precision,
        "z": { "x": eval.z.0, "y": eval.z.1 },
        "w": eval.w.map(|(x, y)| json!({ "x": x, "y": y })),
        "value": {
            "re": float_str(&eval.value.re, digits),
            "im": float_str(&eval.value.im, digits),
        },
        "majorant": float_str(&eval.majorant, digits),
        "terms_used": eval.terms_used,
        "skipped_terms": eval.skipped_terms,
        "radius_t": eval.radius_t,
        "stabilized": eval.stabilized,
        "stabilizer_count": eval.stabilizer_count,
        "max_term_magnitude": eval.max_term_magnitude,
        "doubling_history": eval.doubling_history,
        "tail_diagnostic": eval.tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quat::AlgebraParams;

    fn disc6() -> QuaternionOrder {
        QuaternionOrder::maximal_order_3_m1().unwrap()
    }

    fn ctx() -> Ctx {
        Ctx::new(128)
    }

    #[test]
    fn h_gamma_identity_elements() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.31, 1.17).unwrap();
        let one = RationalQuaternion::one(order.algebra);
        let h = h_gamma(&z, &one, 1, 128).unwrap();
        assert!((h.re.to_f64() - 1.0).abs() < 1e-30);
        assert!(h.im.to_f64().abs() < 1e-30);
        let minus = one.neg();
        let hm = h_gamma(&z, &minus, 1, 128).unwrap();
        assert!((hm.re.to_f64() + 1.0).abs() < 1e-30);
    }

    #[test]
    fn h_gamma_rotation_at_i() {
        // W = [[0,1],[-1,0]] at z = i gives -i.
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.0, 1.0).unwrap();
        let cap = RationalQuaternion::omega_cap(order.algebra);
        let h = h_gamma(&z, &cap, 1, 128).unwrap();
        assert!(h.re.to_f64().abs() < 1e-30);
        assert!((h.im.to_f64() + 1.0).abs() < 1e-30);
    }

    #[test]
    fn h_gamma_rejects_nonpositive_determinant() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.0, 1.0).unwrap();
        let w = RationalQuaternion::omega(order.algebra); // norm -3
        assert!(matches!(
            h_gamma(&z, &w, -3, 128),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn weight_validation() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.1, 1.0).unwrap();
        let policy = TruncPolicy::default();
        assert!(kernel_diag(&order, 1, 7, &z, &policy, 96, false).is_err());
        assert!(kernel_diag(&order, 1, 2, &z, &policy, 96, false).is_err());
    }

    #[test]
    fn diagonal_limit_generic_point() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.31, 1.17).unwrap();
        let policy = TruncPolicy::default();
        let mut gaps = Vec::new();
        for k in [20u32, 40, 80] {
            let eval = kernel_diag(&order, 1, k, &z, &policy, 128, false).unwrap();
            assert!(eval.stabilized);
            assert!(eval.value.im.to_f64().abs() < 1e-9);
            gaps.push((eval.value.re.to_f64() - 2.0).abs());
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gaps {gaps:?}");
        assert!(gaps[2] < 0.05);
    }

    #[test]
    fn diagonal_limit_elliptic_point() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.0, 1.0).unwrap();
        let policy = TruncPolicy::default();
        let eval = kernel_diag(&order, 1, 40, &z, &policy, 128, false).unwrap();
        // stabilizer of i is {+-1, +-W}: value near 4 for 4 | k
        assert!((eval.value.re.to_f64() - 4.0).abs() < 0.05);
        assert_eq!(eval.stabilizer_count, 4);
    }

    #[test]
    fn offdiagonal_reduces_to_diagonal() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.2, 1.1).unwrap();
        let policy = TruncPolicy::default();
        let k = 20u32;
        let diag = kernel_diag(&order, 1, k, &z, &policy, 128, false).unwrap();
        let off = kernel_offdiag(&order, 1, k, &z, &z, &policy, 128, false).unwrap();
        let yk = c.float(1.1).pow(k);
        let scaled = off.value.scale(&yk);
        let diff = scaled.sub(&diag.value).abs().to_f64();
        assert!(diff < 1e-9, "difference {diff}");
    }

    #[test]
    fn offdiagonal_conjugate_symmetry() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.13, 0.97).unwrap();
        let w = UpperHalfPoint::new(&c, -0.21, 1.29).unwrap();
        let policy = TruncPolicy::default();
        let k = 16u32;
        let zw = kernel_offdiag(&order, 2, k, &z, &w, &policy, 128, false).unwrap();
        let wz = kernel_offdiag(&order, 2, k, &w, &z, &policy, 128, false).unwrap();
        let diff = zw.value.sub(&wz.value.conj()).abs().to_f64();
        let scale = 1.0 + zw.value.abs().to_f64();
        assert!(diff / scale < 1e-9, "asymmetry {diff}");
    }

    #[test]
    fn majorant_dominates_value() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.13, 0.97).unwrap();
        let w = UpperHalfPoint::new(&c, -0.21, 1.29).unwrap();
        let policy = TruncPolicy::default();
        let eval = kernel_offdiag(&order, 3, 12, &z, &w, &policy, 128, false).unwrap();
        assert!(eval.value.abs().to_f64() <= eval.majorant.to_f64() * (1.0 + 1e-12));
    }

    #[test]
    fn ledger_term_bounds() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.31, 1.17).unwrap();
        let policy = TruncPolicy::default();
        for n in [1i64, 2, 5] {
            let eval = kernel_diag(&order, n, 12, &z, &policy, 128, true).unwrap();
            let bound = 1.0 / (n as f64).sqrt();
            for entry in eval.ledger.as_ref().unwrap() {
                assert!(
                    entry.h_abs <= bound * (1.0 + 1e-12),
                    "n={n}: |h| = {} > {bound}",
                    entry.h_abs
                );
                for delta in [0.5, 0.1, 0.01] {
                    if entry.displacement > delta {
                        let cap = (1.0 + delta * delta).powf(-0.5);
                        assert!(entry.h_abs <= cap * (1.0 + 1e-9));
                    }
                }
            }
        }
    }

    #[test]
    fn stabilization_failure_carries_partial_evaluation() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.31, 1.17).unwrap();
        let policy = TruncPolicy {
            max_rounds: 1,
            stable_rounds: 3,
            ..TruncPolicy::default()
        };
        match kernel_diag(&order, 1, 20, &z, &policy, 96, false) {
            Err(Error::KernelStabilization { rounds, partial, .. }) => {
                assert_eq!(rounds, 1);
                assert!(!partial.stabilized);
                assert_eq!(partial.doubling_history.len(), 1);
            }
            other => panic!("expected stabilization error, got {other:?}"),
        }
    }

    #[test]
    fn hecke_residual_cases() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.11, 1.03).unwrap();
        let w = UpperHalfPoint::new(&c, 0.07, 0.93).unwrap();
        let policy = TruncPolicy {
            tol: 1e-13,
            ..TruncPolicy::default()
        };
        let cpolicy = CosetPolicy::default();
        // n = 1: both sides are literally the same stabilized sum
        let r1 =
            hecke_identity_residual(&order, 1, 12, &z, &w, &policy, &cpolicy, 128).unwrap();
        assert_eq!(r1.coset_count, 1);
        assert!(r1.residual < 1e-25, "n=1 residual {}", r1.residual);
        // n = 2 with one coset; dropping it is the negative control
        let r2 =
            hecke_identity_residual(&order, 2, 12, &z, &w, &policy, &cpolicy, 128).unwrap();
        assert!(r2.residual < 1e-10, "n=2 residual {}", r2.residual);
        assert!(r2.residual_dropped_coset > 1e-3);
        // n = 5 has six cosets
        let r5 =
            hecke_identity_residual(&order, 5, 12, &z, &w, &policy, &cpolicy, 128).unwrap();
        assert_eq!(r5.coset_count, 6);
        assert!(r5.residual < 1e-10, "n=5 residual {}", r5.residual);
        assert!(r5.residual_dropped_coset > 1e-3);
    }

    #[test]
    fn godement_ratio_bounded_and_decaying() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.1, 1.0).unwrap();
        let policy = TruncPolicy::default();
        let mut ratios = Vec::new();
        for k in (10..=30).step_by(4) {
            let w = UpperHalfPoint::new(&c, -0.2, 1.2).unwrap();
            let r = godement_ratio(&order, k, &z, &w, &policy, 96).unwrap();
            assert!(r.ratio.is_finite() && r.ratio > 0.0);
            ratios.push(r.ratio);
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(max < 1e4, "ratios {ratios:?}");
        // decay in Im(w): ratio stays bounded as Im(w) grows
        for yw in [1.0, 2.0, 4.0, 8.0] {
            let w = UpperHalfPoint::new(&c, 0.0, yw).unwrap();
            let r = godement_ratio(&order, 12, &z, &w, &policy, 96).unwrap();
            assert!(r.ratio < 1e4);
        }
    }

    #[test]
    fn convexity_report_on_small_grid() {
        let order = disc6();
        let policy = TruncPolicy::default();
        let grid = [(0.0, 1.05), (0.25, 1.2), (-0.3, 0.95)];
        let rep = convexity_bound(&order, 20, &grid, &policy, 96).unwrap();
        for p in &rep.points {
            assert!(p.kernel_quantity >= -1e-9, "positivity at {:?}", (p.x, p.y));
            assert!(p.imag_part.abs() < 1e-9);
            // the split bound dominates the kernel quantity
            assert!(p.split_bound >= p.kernel_quantity - 1e-6);
        }
        assert!(rep.sup_kernel_over_k > 0.5 && rep.sup_kernel_over_k < 50.0);
    }

    #[test]
    fn csv_and_json_exports() {
        let order = disc6();
        let c = ctx();
        let z = UpperHalfPoint::new(&c, 0.31, 1.17).unwrap();
        let eval = kernel_diag(&order, 1, 12, &z, &TruncPolicy::default(), 96, true).unwrap();
        let csv = ledger_to_csv(&eval);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "x0,x1,x2,x3,h_abs,log10_term_magnitude,phase"
        );
        assert!(lines.count() >= 2);
        let j = evaluation_to_json(&eval);
        assert_eq!(j["n"], 1);
        assert!(j["value"]["re"].as_str().unwrap().contains('e'));
        assert_eq!(j["stabilized"], true);
    }
}
