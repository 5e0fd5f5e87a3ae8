//! Finite-N determinantal correlation kernel of the squared-singular-value
//! process in logarithmic coordinates.
//!
//! The kernel for M factors and minimal dimension N is assembled from the
//! exact residue sum over t = -k, k = 0..N-1, against a vertical-line
//! integral in s:
//!
//! ```text
//! K(x,y) = sum_k [(-1)^k/k!] e^{-kx} prod_j Gamma(N_j - k)^{-1}
//!          * (1/2pi i) int_{c-iT}^{c+iT} e^{-ys} prod_j Gamma(s+N_j)
//!            / (Gamma(s) (s+k)) ds,        N_j = N + nu_j,  nu_0 = 0.
//! ```
//!
//! Swapping sum and integral turns the k-sum into a rational function
//! D(s) = sum_k w_k/(s+k) with weights w_k = (-e^{-x})^k / (k! prod_j
//! Gamma(N_j-k)). Everything then rides on two scales: the Gamma-ratio
//! factor e^{LH(s)} is normalized by its maximum over the line (found by a
//! scan), and D is the hard part: at bulk x the alternating w_k cancel to
//! a tiny remainder. Measured depths at the dominant s (bulk diagonal,
//! y = 1/2, theta = pi/8):
//!
//!   - direct summation, N=100, M=1: terms exceed the sum by e^107 at any
//!     abscissa, far beyond double-double range (which buys e^74);
//!   - same at N=20, M=2: depth ~e^10, double-double noise ~1e-22.
//!
//! So two evaluation strategies are used. For M = 1 the weight sum has a
//! closed form through a Charlier-type three-term recurrence, which is
//! forward-stable in the oscillatory regime (measured 2e-14 relative at
//! N=100), and D(s) becomes the Laplace transform of that function; the
//! residual cancellation in the transform is only ~e^11 at N=100, so plain
//! f64 keeps ~1e-11 relative accuracy. For M >= 2 the direct alternating
//! sum is accumulated in double-double arithmetic, which is comfortable
//! through N ~ 60; beyond that the tracked noise estimate fails the
//! accuracy invariant and evaluation reports a precision error.
//!
//! The abscissa c matters for the s-integral conditioning: c = N Re q(θ)
//! (the phase-function saddle) concentrates the integrand near its peak
//! (measured mass-to-value ratio 1.009 at N=100 versus 2.7e4 at c = 1/2).
//! `ContourConfig::bulk_tuned` applies this; the default c = 1/2 is fine
//! away from large-N bulk evaluations.

use crate::dd::{self, Cdd, Dd};
use crate::density::ModelParams;
use crate::error::{Error, Result};
use crate::quad;
use crate::specfun;
use num_complex::Complex64;
use once_cell::sync::Lazy;
use std::cell::RefCell;
use std::f64::consts::{LN_2, PI};

/// Finite-size model: minimal dimension N and the offsets nu_1..nu_M of the
/// remaining factor dimensions. nu_0 = 0 is implicit, N_j = N + nu_j.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteModel {
    pub n: u32,
    pub nu: Vec<u32>,
}

impl FiniteModel {
    pub fn new(n: u32, nu: Vec<u32>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("N must be positive".into()));
        }
        if n > 20_000 {
            return Err(Error::InvalidParameter(format!("N={n} too large")));
        }
        if nu.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one factor required (M >= 1)".into(),
            ));
        }
        if nu.len() > 16 {
            return Err(Error::InvalidParameter(format!(
                "M={} factors unsupported (max 16)",
                nu.len()
            )));
        }
        if nu.iter().any(|&v| v > 10_000_000) {
            return Err(Error::InvalidParameter("nu offset too large".into()));
        }
        Ok(FiniteModel { n, nu })
    }

    pub fn factor_count(&self) -> usize {
        self.nu.len()
    }

    /// All dimensions N_0..N_M, the implicit N_0 = N first.
    pub fn dims(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.nu.len() + 1);
        d.push(self.n as f64);
        d.extend(self.nu.iter().map(|&v| (self.n + v) as f64));
        d
    }

    /// Collective depth-to-width parameter: sum of 1/N_j over j = 0..M.
    pub fn delta_mn(&self) -> f64 {
        self.dims().iter().map(|nj| 1.0 / nj).sum()
    }

    /// Limiting equal-ratio parameters when every nu_j agrees with
    /// y = N/(N+nu_j) to within `rel`; used to cross-validate callers that
    /// pair a finite model with limiting-law data.
    fn check_params(&self, params: &ModelParams, rel: f64) -> Result<()> {
        if params.m as usize != self.factor_count() {
            return Err(Error::Domain(format!(
                "parameter mismatch: model has M={} factors, params have M={}",
                self.factor_count(),
                params.m
            )));
        }
        let n = self.n as f64;
        for &v in &self.nu {
            let yj = n / (n + v as f64);
            if (yj - params.y).abs() > rel * params.y {
                return Err(Error::Domain(format!(
                    "parameter mismatch: y={} but N/(N+nu)={yj}",
                    params.y
                )));
            }
        }
        Ok(())
    }
}

/// Vertical-line contour for the s-integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourConfig {
    /// Abscissa of the line; must stay right of the poles at s = -k.
    pub c: f64,
    /// Truncation height: integration covers Im s in [-t, t].
    pub t: f64,
    /// Initial composite quadrature panels; refined adaptively from there.
    pub panels: u32,
    /// Target relative accuracy of the kernel value.
    pub tol: f64,
}

impl ContourConfig {
    /// Default contour: c = 1/2 with the truncation height solved from the
    /// decay bound. Adequate whenever the integrand mass sits near the real
    /// axis; large-N bulk work wants `bulk_tuned`.
    pub fn standard(model: &FiniteModel, tol: f64) -> Result<Self> {
        let cfg = ContourConfig {
            c: 0.5,
            t: solve_truncation_height(model, tol),
            panels: 32,
            tol,
        };
        cfg.validate(model)?;
        Ok(cfg)
    }

    /// Contour tuned for bulk evaluations near the angle theta: the
    /// abscissa is placed at the saddle N Re q(theta) of the phase
    /// function, which concentrates the integrand mass near its peak.
    ///
    /// The saddle abscissa turns negative past the angle where r cos theta
    /// drops below 1/y. A negative line is legitimate (the full integrand
    /// is entire in s: each 1/(s+k) pole is killed by the zero of
    /// 1/Gamma(s)), but only the residue-sum evaluation form can follow it
    /// there, and that form pays an internal term cancellation growing
    /// roughly like e^{2N} at such angles. So past the sign change, small
    /// factor-one models take the snapped negative line, while larger ones
    /// stay on the near-axis line where the Laplace form loses only
    /// e^{|N Re q|}; beyond the reach of either, evaluation reports a
    /// precision error rather than returning garbage.
    pub fn bulk_tuned(
        model: &FiniteModel,
        params: &ModelParams,
        theta: f64,
        tol: f64,
    ) -> Result<Self> {
        model.check_params(params, 1e-9)?;
        let saddle = params.saddle(theta)?;
        let raw = model.n as f64 * saddle.q.re;
        let c = if raw >= 0.5 || model.factor_count() > 1 || model.n <= 16 {
            snap_off_poles(raw)
        } else {
            0.5
        };
        let cfg = ContourConfig {
            c,
            t: solve_truncation_height(model, tol),
            panels: 32,
            tol,
        };
        cfg.validate(model)?;
        Ok(cfg)
    }

    /// Contour tuned for one diagonal evaluation at log-coordinate x:
    /// the line goes through the real-axis minimum of the integrand
    /// envelope, which follows the saddle wherever x sits relative to
    /// the spectrum. Preferred for pointwise diagonal work and for
    /// integrating the diagonal; `bulk_tuned` is its fixed-angle
    /// counterpart for scaled windows.
    pub fn point_tuned(model: &FiniteModel, x: f64, tol: f64) -> Result<Self> {
        let cfg = ContourConfig {
            c: tuned_abscissa(&model.dims(), x),
            t: solve_truncation_height(model, tol),
            panels: 32,
            tol,
        };
        cfg.validate(model)?;
        Ok(cfg)
    }

    /// Checks field ranges and the truncation remainder bound
    /// e^{-M pi T/2} (2+T)^{(M+1)(N+max nu)} <= tol/10.
    ///
    /// The abscissa may be negative (the integrand is entire in s), but
    /// the split evaluation forms divide by s + k and by Gamma of shifted
    /// arguments, so the line must keep distance >= 0.25 from every
    /// nonpositive integer.
    pub fn validate(&self, model: &FiniteModel) -> Result<()> {
        let pole_dist = if self.c >= 0.0 {
            self.c
        } else {
            (self.c - self.c.round()).abs()
        };
        if !(self.c.is_finite() && self.c.abs() <= 1e7 && pole_dist >= 0.25) {
            return Err(Error::InvalidParameter(format!(
                "contour abscissa c={} out of range or within 0.25 of a nonpositive integer",
                self.c
            )));
        }
        if !(self.t.is_finite() && self.t >= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "truncation height t={} out of range",
                self.t
            )));
        }
        if self.panels == 0 || self.panels > 4096 {
            return Err(Error::InvalidParameter(format!(
                "panel count {} out of range",
                self.panels
            )));
        }
        if !(self.tol.is_finite() && (1e-13..=0.5).contains(&self.tol)) {
            return Err(Error::InvalidParameter(format!(
                "tolerance {} out of range [1e-13, 0.5]",
                self.tol
            )));
        }
        let log_rem = truncation_remainder_log(model, self.t);
        let budget = (self.tol / 10.0).ln() + 1e-6;
        if log_rem > budget {
            return Err(Error::ContourConfig(format!(
                "truncation height t={} leaves remainder exp({:.3}) above tol/10",
                self.t, log_rem
            )));
        }
        Ok(())
    }
}

/// log of the decay bound e^{-M pi t/2} (2+t)^P with P = (M+1)(N+max nu).
fn truncation_remainder_log(model: &FiniteModel, t: f64) -> f64 {
    let m = model.factor_count() as f64;
    let max_nu = model.nu.iter().copied().max().unwrap_or(0);
    let p = (m + 1.0) * (model.n + max_nu) as f64;
    -m * PI * t / 2.0 + p * (2.0 + t).ln()
}

/// Reflection-smoothed log-magnitude of the line integrand at real
/// abscissa c. The 1/Gamma(s) factor vanishes at the nonpositive
/// integers; replacing its |sin pi c| oscillation by the envelope 1
/// keeps those zeros from masquerading as good line positions.
fn envelope_lh(dims: &[f64], w: f64, c: f64) -> f64 {
    let mut v = -w * c;
    for &nj in dims {
        v += ln_gamma_real(c + nj);
    }
    if c >= 0.3 {
        v - ln_gamma_real(c)
    } else {
        // -ln|Gamma(c)| = lnGamma(1-c) + ln|sin(pi c)| - ln(pi), |sin| -> 1
        v + ln_gamma_real(1.0 - c) - PI.ln()
    }
}

/// Abscissa minimizing the envelope magnitude for a diagonal point at
/// log-coordinate w: the vertical line through the real-axis saddle of
/// the integrand. Tracks the conditioning optimum as w crosses the
/// spectrum and stays near-optimal in both tails, where a fixed line
/// pays cancellation growing exponentially in |w|.
fn tuned_abscissa(dims: &[f64], w: f64) -> f64 {
    let n_min = dims.iter().copied().fold(f64::INFINITY, f64::min);
    // lnGamma(c + n_min) walls off the search below -n_min
    let c_lo = 0.7 - n_min;
    let c_hi = 8.0 * dims.iter().sum::<f64>() + 16.0;
    let mut cand: Vec<f64> = Vec::with_capacity(512);
    let neg_step = (n_min / 400.0).max(0.5);
    let mut c = c_lo;
    while c < -0.3 {
        cand.push(c);
        c += neg_step;
    }
    cand.push(-0.3);
    c = 0.3;
    while c < c_hi {
        cand.push(c);
        c = c * 1.3 + 0.1;
    }
    let score = |c: f64| envelope_lh(dims, w, c);
    let best = (0..cand.len())
        .min_by(|&a, &b| score(cand[a]).total_cmp(&score(cand[b])))
        .expect("nonempty candidate grid");
    // the envelope is convex on each branch, so ternary refinement
    // inside the bracketing neighbors converges
    let mut a = cand[best.saturating_sub(1)];
    let mut b = cand[(best + 1).min(cand.len() - 1)];
    for _ in 0..70 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if score(m1) <= score(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    snap_off_poles(0.5 * (a + b))
}

/// Moves a raw abscissa to the nearest value with distance >= 0.3 from
/// every nonpositive integer, preferring the side the raw value is on.
fn snap_off_poles(raw: f64) -> f64 {
    if raw >= 0.3 {
        return raw;
    }
    if raw > -0.3 {
        return if raw >= 0.0 { 0.3 } else { -0.3 };
    }
    let nearest = raw.round();
    let d = raw - nearest;
    if d.abs() >= 0.3 {
        raw
    } else if d >= 0.0 {
        nearest + 0.3
    } else {
        nearest - 0.3
    }
}

/// Smallest height where the decay bound reaches tol/10, by fixed-point
/// iteration of t = (2/(M pi)) [P ln(2+t) + ln(10/tol)].
fn solve_truncation_height(model: &FiniteModel, tol: f64) -> f64 {
    let m = model.factor_count() as f64;
    let max_nu = model.nu.iter().copied().max().unwrap_or(0);
    let p = (m + 1.0) * (model.n + max_nu) as f64;
    let tol = tol.clamp(1e-13, 0.5);
    let rhs = (10.0 / tol).ln();
    let mut t = 8.0f64;
    for _ in 0..500 {
        let next = 2.0 / (m * PI) * (p * (2.0 + t).ln() + rhs);
        if (next - t).abs() <= 1e-9 * next {
            t = next;
            break;
        }
        t = next;
    }
    t.max(2.0)
}

/// One kernel evaluation with its tracked error estimate.
#[derive(Debug, Clone, Copy)]
pub struct KernelEvaluation {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    /// Quadrature error plus accumulated roundoff-noise bound, absolute.
    /// On success this is at most tol * (1 + |value|).
    pub abs_error_estimate: f64,
}

/// Bulk scaling window: local coordinates xi around the physical center
/// sum_j log(N+nu_j) + log x(theta), with density scale N |r sin theta| / pi.
#[derive(Debug, Clone)]
pub struct ScaledWindow {
    pub theta: f64,
    pub xi: Vec<f64>,
    pub scale: f64,
    pub center: f64,
}

impl ScaledWindow {
    /// Physical log-coordinates center + xi_i / scale.
    pub fn points(&self) -> Vec<f64> {
        self.xi.iter().map(|&xi| self.center + xi / self.scale).collect()
    }
}

/// Report of the bulk sine-limit comparison on a xi grid.
#[derive(Debug, Clone)]
pub struct SineLimitReport {
    pub theta: f64,
    pub scale: f64,
    /// sup over the grid of |K_scaled(xi, eta) - sinc_pi(xi - eta)|. Gauge
    /// conventions make this diagnostic only; the determinant deviations
    /// below are gauge-free.
    pub sup_pointwise: f64,
    /// sup over the grid diagonal of |K_scaled(xi, xi) - 1|.
    pub sup_diagonal: f64,
    /// sup over grid pairs of |det2(K_scaled) - det2(sine)|.
    pub sup_pair_determinant: f64,
}

/// Diagonal-density consistency report at a bulk angle.
#[derive(Debug, Clone, Copy)]
pub struct CorollaryReport {
    /// K(center, center) / (N x(theta)).
    pub kernel_scaled: f64,
    /// Limiting density rho(theta).
    pub density_value: f64,
    pub relative_deviation: f64,
}

/// Collective depth-to-width parameter Delta = sum_{j=0}^M 1/(N+nu_j).
pub fn delta_mn(model: &FiniteModel) -> f64 {
    model.delta_mn()
}

const MAX_ABS_COORD: f64 = 600.0;

/// Evaluates K(x, y) in logarithmic coordinates.
///
/// Dispatches on the factor count and abscissa: M = 1 on a positive line
/// uses the recurrence-stabilized Laplace form of D(s), whose t-integral
/// needs Re s > 0 to converge; everything else goes through the
/// double-double residue sum (reliable through N ~ 60 at bulk arguments;
/// the noise estimate reports a precision error beyond that rather than
/// returning garbage).
pub fn kernel_log(
    model: &FiniteModel,
    x: f64,
    y: f64,
    cfg: &ContourConfig,
) -> Result<KernelEvaluation> {
    cfg.validate(model)?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::Domain("kernel arguments must be finite".into()));
    }
    if x.abs() > MAX_ABS_COORD || y.abs() > MAX_ABS_COORD {
        return Err(Error::Domain(format!(
            "kernel arguments |x|,|y| <= {MAX_ABS_COORD} required, got ({x}, {y})"
        )));
    }
    if model.factor_count() == 1 && cfg.c > 0.0 {
        kernel_laplace_m1(model, x, y, cfg)
    } else {
        kernel_dd_direct(model, x, y, cfg)
    }
}

// ---------------------------------------------------------------------------
// shared contour machinery
// ---------------------------------------------------------------------------

struct GlRule {
    nodes15: Vec<f64>,
    weights15: Vec<f64>,
    nodes7: Vec<f64>,
    weights7: Vec<f64>,
}

static GL_RULE: Lazy<GlRule> = Lazy::new(|| {
    let (n15, w15) = dd::gauss_legendre_dd(15);
    let (n7, w7) = dd::gauss_legendre_dd(7);
    GlRule {
        nodes15: n15.iter().map(|d| d.f64()).collect(),
        weights15: w15.iter().map(|d| d.f64()).collect(),
        nodes7: n7.iter().map(|d| d.f64()).collect(),
        weights7: w7.iter().map(|d| d.f64()).collect(),
    }
});

/// Scan of the log-magnitude profile LH(tau) = Re[-y s + sum_j lnGamma(s+N_j)
/// - lnGamma(s)] along the line s = c + i tau.
struct PhaseProfile {
    /// Peak of Re LH over the scan.
    g_star: f64,
    /// Integration cutoff: beyond tau_hi the profile sits below the peak by
    /// more than the retention drop.
    tau_hi: f64,
    /// Crude integral of e^{Re LH - g_star} over the scan, for seeding the
    /// absolute quadrature tolerance.
    mass_estimate: f64,
    /// Location of the peak, used to probe D-resolution.
    tau_star: f64,
    /// Neglected-tail estimate relative to e^{g_star}.
    tail: f64,
}

fn lh_at(dims: &[f64], y: f64, s: Complex64) -> Result<Complex64> {
    let mut lh = -y * s;
    for &nj in dims {
        lh += specfun::log_gamma(s + nj)?;
    }
    lh -= specfun::log_gamma(s)?;
    Ok(lh)
}

fn scan_phase(dims: &[f64], y: f64, cfg: &ContourConfig) -> Result<PhaseProfile> {
    // enough samples to localize a peak of O(1) width at any height
    let n_scan = 512usize
        .max(2 * cfg.panels as usize)
        .max((cfg.t * 6.0) as usize)
        .min(40_000);
    let step = cfg.t / n_scan as f64;
    let mut relh = Vec::with_capacity(n_scan + 1);
    for i in 0..=n_scan {
        let s = Complex64::new(cfg.c, step * i as f64);
        relh.push(lh_at(dims, y, s)?.re);
    }
    let i_max = (0..=n_scan)
        .max_by(|&a, &b| relh[a].total_cmp(&relh[b]))
        .expect("nonempty scan");
    // parabolic refinement of the peak through the three bracketing samples
    let mut g_star = relh[i_max];
    let mut tau_star = step * i_max as f64;
    if i_max > 0 && i_max < n_scan {
        let (fa, fb, fc) = (relh[i_max - 1], relh[i_max], relh[i_max + 1]);
        let denom = fa - 2.0 * fb + fc;
        if denom < 0.0 {
            let delta = 0.5 * (fa - fc) / denom;
            if delta.abs() <= 1.0 {
                tau_star += delta * step;
                g_star = fb - 0.25 * (fa - fc) * delta;
            }
        }
    }
    let drop = -(cfg.tol.ln()) + 16.0;
    let cutoff = g_star - drop;
    let mut hi_idx = i_max;
    for i in (i_max..=n_scan).rev() {
        if relh[i] > cutoff {
            hi_idx = i;
            break;
        }
    }
    let tau_hi = (step * (hi_idx + 1) as f64).min(cfg.t);
    let mass_estimate: f64 = relh
        .iter()
        .map(|&v| (v - g_star).exp())
        .sum::<f64>()
        * step;
    // Honest discard bound: the measured envelope over [tau_hi, T] by
    // trapezoid (doubled for sampling slack), plus the continuation past
    // T where the envelope decays like tau^p e^{-M pi tau / 2}. When a
    // target value sits exponentially below the line peak, the height
    // solved from the model-level bound is not enough, and this term is
    // what reports that honestly instead of silently truncating mass.
    let mut tail = 0.0;
    for i in hi_idx..n_scan {
        tail += 0.5 * ((relh[i] - g_star).exp() + (relh[i + 1] - g_star).exp()) * step;
    }
    tail *= 2.0;
    let decay = (dims.len() - 1) as f64 * PI / 2.0;
    let p_poly: f64 =
        dims.iter().sum::<f64>() + (dims.len() - 1) as f64 * (cfg.c - 0.5).max(0.0);
    let denom = (decay - p_poly / cfg.t).max(0.05 * decay);
    tail += (relh[n_scan] - g_star).exp() / denom;
    Ok(PhaseProfile {
        g_star,
        tau_hi,
        mass_estimate,
        tau_star,
        tail,
    })
}

/// Adaptive composite Gauss-Legendre on [0, tau_hi] for an integrand
/// returning (real part, absolute value, noise bound) per point.
/// Returns (integral, abs integral, noise integral, error estimate).
fn integrate_line<F>(
    f: &mut F,
    tau_hi: f64,
    seeds: usize,
    tol_abs: f64,
    eval_budget: &mut i64,
) -> Result<(f64, f64, f64, f64)>
where
    F: FnMut(f64) -> Result<(f64, f64, f64)>,
{
    let rule = &*GL_RULE;
    let mut eval_panel = |a: f64, b: f64, budget: &mut i64| -> Result<(f64, f64, f64, f64)> {
        *budget -= 22;
        if *budget < 0 {
            return Err(Error::QuadratureFailure(
                "contour quadrature exceeded its evaluation budget".into(),
            ));
        }
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let (mut i15, mut a15, mut nz15) = (0.0, 0.0, 0.0);
        for (node, w) in rule.nodes15.iter().zip(&rule.weights15) {
            let (re, ab, nz) = f(mid + half * node)?;
            i15 += w * re;
            a15 += w * ab;
            nz15 += w * nz;
        }
        let mut i7 = 0.0;
        for (node, w) in rule.nodes7.iter().zip(&rule.weights7) {
            let (re, _, _) = f(mid + half * node)?;
            i7 += w * re;
        }
        Ok((i15 * half, a15 * half, nz15 * half, (i15 - i7).abs() * half))
    };

    let seeds = seeds.clamp(1, 2048);
    let mut stack: Vec<(f64, f64, u32)> = (0..seeds)
        .map(|k| {
            (
                tau_hi * k as f64 / seeds as f64,
                tau_hi * (k + 1) as f64 / seeds as f64,
                0u32,
            )
        })
        .collect();
    let (mut total, mut total_abs, mut total_nz, mut total_err) = (0.0, 0.0, 0.0, 0.0);
    while let Some((a, b, depth)) = stack.pop() {
        let (v, ab, nz, err) = eval_panel(a, b, eval_budget)?;
        // below the panel's own roundoff content further splitting is noise
        let slack = tol_abs * ((b - a) / tau_hi).max(1e-6) + 2.0 * nz + 2e-15 * ab;
        if err <= slack || depth >= 44 {
            total += v;
            total_abs += ab;
            total_nz += nz;
            total_err += err;
        } else {
            let mid = 0.5 * (a + b);
            stack.push((a, mid, depth + 1));
            stack.push((mid, b, depth + 1));
        }
    }
    Ok((total, total_abs, total_nz, total_err))
}

/// Runs the line quadrature, retightening the absolute tolerance once the
/// integral's true magnitude is known, until the relative target holds.
fn integrate_line_refined<F>(
    f: &mut F,
    tau_hi: f64,
    seeds: usize,
    tol_rel: f64,
    first_scale: f64,
) -> Result<(f64, f64, f64, f64)>
where
    F: FnMut(f64) -> Result<(f64, f64, f64)>,
{
    let mut eval_budget: i64 = 2_000_000;
    let mut tol_abs = tol_rel * first_scale.max(1e-280) * 0.25;
    let mut out = integrate_line(f, tau_hi, seeds, tol_abs, &mut eval_budget)?;
    for _ in 0..3 {
        // never chase the integral below its accumulated roundoff floor
        let floor = 2.0 * out.2 + 2e-15 * out.1;
        let want = (tol_rel * out.0.abs().max(1e-280) * 0.25).max(floor);
        if tol_abs <= want * 2.0 {
            break;
        }
        tol_abs = want;
        out = integrate_line(f, tau_hi, seeds, tol_abs, &mut eval_budget)?;
    }
    Ok(out)
}

/// Final assembly: value = sign(integral) * exp(ln_prefactor + ln|integral|)
/// / pi, with the error pieces pushed through the same prefactor.
fn assemble(
    x: f64,
    y: f64,
    ln_prefactor: f64,
    integral: f64,
    abs_parts: f64,
    tol: f64,
) -> Result<KernelEvaluation> {
    let ln_scale = ln_prefactor - PI.ln();
    let value = if integral == 0.0 {
        0.0
    } else {
        integral.signum() * (ln_scale + integral.abs().ln()).exp()
    };
    if !value.is_finite() {
        return Err(Error::Domain(format!(
            "kernel value overflow at ({x}, {y}): log-scale {:.3}",
            ln_scale + integral.abs().max(1e-300).ln()
        )));
    }
    let abs_error = if abs_parts == 0.0 {
        0.0
    } else {
        (ln_scale + abs_parts.ln()).exp()
    };
    let budget = tol * (1.0 + value.abs());
    if !abs_error.is_finite() || abs_error > budget {
        return Err(Error::PrecisionLoss {
            estimate: abs_error,
            budget,
        });
    }
    Ok(KernelEvaluation {
        x,
        y,
        value,
        abs_error_estimate: abs_error,
    })
}

// ---------------------------------------------------------------------------
// M = 1: recurrence-stabilized Laplace form
// ---------------------------------------------------------------------------

/// Weight-sum closed form for M = 1: with w = e^{-x-t} and a = 1/w,
///
/// ```text
/// sum_k (-w)^k / (k! Gamma(N-k) Gamma(N+nu-k))
///     = C_{N-1}(N+nu-1; a) / (Gamma(N) Gamma(N+nu)),
/// ```
///
/// where C is evaluated by the three-term recurrence
/// a C_{n+1} = (n + a - xx) C_n - n C_{n-1}, C_0 = 1, C_1 = 1 - xx/a.
/// Returns (mantissa, ln-offset): value = mantissa * e^{offset}. Forward
/// recurrence is stable here; in the oscillatory regime no solution
/// dominates, and outside it the wanted solution is the growing one.
fn charlier_ln(order: u32, xx: f64, ln_a: f64) -> (f64, f64) {
    if order == 0 {
        return (1.0, 0.0);
    }
    // beyond this the a-dependence is below the f64 ulp of the leading 1
    if ln_a > 650.0 {
        return (1.0, 0.0);
    }
    let a = ln_a.exp();
    let mut c0 = 1.0f64;
    let mut c1 = 1.0 - xx / a;
    let mut rescale_count: i64 = 0;
    const UP: f64 = 7.378697629483821e19; // 2^66, exact
    const DOWN: f64 = 1.3552527156068805e-20; // 2^-66, exact
    for n in 1..order {
        let nf = n as f64;
        let c2 = ((nf + a - xx) * c1 - nf * c0) / a;
        c0 = c1;
        c1 = c2;
        let mag = c0.abs().max(c1.abs());
        if mag > UP {
            c0 *= DOWN;
            c1 *= DOWN;
            rescale_count += 1;
        } else if mag < DOWN && mag > 0.0 {
            c0 *= UP;
            c1 *= UP;
            rescale_count -= 1;
        }
    }
    (c1, rescale_count as f64 * 66.0 * LN_2)
}

/// ln Gamma at a positive integer argument, exact dispatch to the complex
/// routine (which is polynomial-free of poles on the positive axis).
fn ln_gamma_real(v: f64) -> f64 {
    specfun::log_gamma(Complex64::new(v, 0.0))
        .expect("positive argument")
        .re
}

/// Precomputed Laplace nodes of the weight function: D(c + i tau) * e^{-Lmax}
/// = sum_i coeff_i e^{-i tau t_i} with coeff_i folding the quadrature weight,
/// the weight-function value, and the e^{-c t_i} damping.
struct LaplaceNodes {
    ts: Vec<f64>,
    coeffs: Vec<f64>,
    /// Peak of the damped profile; the overall D-scale.
    l_max: f64,
    /// sum |coeff_i|: cap on |D-tilde| and the noise base.
    cap: f64,
}

impl LaplaceNodes {
    fn eval(&self, tau: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, coeff) in self.ts.iter().zip(&self.coeffs) {
            let (s, c) = (-tau * t).sin_cos();
            acc += coeff * Complex64::new(c, s);
        }
        acc
    }
}

fn build_laplace_nodes(
    order: u32,
    xx: f64,
    x: f64,
    c: f64,
    tau_res: f64,
    tau_probe: f64,
    tol: f64,
) -> Result<LaplaceNodes> {
    // profile scan of L(t) = -c t + ln|C(t)|; geometric grid, stop once the
    // profile has dropped well below its peak on two consecutive samples
    // (single dips can be zeros of C, not the envelope)
    let drop = -(tol.ln()) + 14.0;
    let mut l_max = f64::NEG_INFINITY;
    let mut t_of_max = 0.0f64;
    let mut t_max = 0.0f64;
    let mut below = 0;
    let mut t_probe = 0.0f64;
    for step in 0..400 {
        let (mant, off) = charlier_ln(order, xx, x + t_probe);
        let l = -c * t_probe + mant.abs().max(1e-300).ln() + off;
        if l > l_max {
            l_max = l;
            t_of_max = t_probe;
        }
        t_max = t_probe;
        if l < l_max - drop && t_probe > t_of_max {
            below += 1;
            if below >= 2 {
                break;
            }
        } else {
            below = 0;
        }
        t_probe = if step == 0 { 0.01 } else { t_probe * 1.22 };
        if t_probe > 20_000.0 {
            return Err(Error::QuadratureFailure(
                "weight-function profile failed to decay".into(),
            ));
        }
    }
    if !l_max.is_finite() {
        return Err(Error::QuadratureFailure(
            "weight-function profile degenerate".into(),
        ));
    }

    let rule = &*GL_RULE;
    let build = |h: f64| -> LaplaceNodes {
        let n_panels = (t_max / h).ceil().max(1.0) as usize;
        let width = t_max / n_panels as f64;
        let mut ts = Vec::with_capacity(15 * n_panels);
        let mut coeffs = Vec::with_capacity(15 * n_panels);
        let mut cap = 0.0;
        for p in 0..n_panels {
            let a = width * p as f64;
            let mid = a + 0.5 * width;
            let half = 0.5 * width;
            for (node, w) in rule.nodes15.iter().zip(&rule.weights15) {
                let t = mid + half * node;
                let (mant, off) = charlier_ln(order, xx, x + t);
                let coeff =
                    w * half * mant.signum() * (mant.abs().max(1e-300).ln() + off - c * t - l_max).exp();
                ts.push(t);
                coeffs.push(coeff);
                cap += coeff.abs();
            }
        }
        LaplaceNodes {
            ts,
            coeffs,
            l_max,
            cap,
        }
    };

    // initial spacing: a 15-node panel integrates e^{-i tau t} to full
    // precision through ~20 radians of phase, and must also resolve the
    // weight function's own oscillation; verified by halving until the
    // value at the dominant tau stops moving
    let mut h = (t_max / 12.0).min(20.0 / tau_res.max(1.0)).max(t_max / 6000.0);
    let probe_tau = tau_probe.max(0.2 * tau_res).max(1.0);
    let mut nodes = build(h);
    for _ in 0..7 {
        let fine = build(h * 0.5);
        let d_coarse = nodes.eval(probe_tau);
        let d_fine = fine.eval(probe_tau);
        let diff = (d_coarse - d_fine).norm();
        nodes = fine;
        if diff <= (d_fine.norm() + 1e-3 * nodes.cap) * tol * 0.05 + 2e-15 * nodes.cap {
            break;
        }
        if nodes.ts.len() > 200_000 {
            break;
        }
        h *= 0.5;
    }
    Ok(nodes)
}

fn kernel_laplace_m1(
    model: &FiniteModel,
    x: f64,
    y: f64,
    cfg: &ContourConfig,
) -> Result<KernelEvaluation> {
    let dims = model.dims();
    let profile = scan_phase(&dims, y, cfg)?;
    let order = model.n - 1;
    let xx = (model.n + model.nu[0]) as f64 - 1.0;
    let nodes = build_laplace_nodes(
        order,
        xx,
        x,
        cfg.c,
        profile.tau_hi,
        profile.tau_star,
        cfg.tol,
    )?;

    // node roundoff plus the truncated stretch of the weight-profile
    // integral, which the scan cut once the profile fell `drop` below
    // its peak; both scale with the total coefficient mass
    let t_trunc = (cfg.tol.ln() - 14.0).exp();
    let noise_base = (3e-16 + t_trunc) * nodes.cap;
    let mut integrand = |tau: f64| -> Result<(f64, f64, f64)> {
        let s = Complex64::new(cfg.c, tau);
        let lh = lh_at(&dims, y, s)?;
        let envelope = Complex64::new(lh.re - profile.g_star, lh.im).exp();
        let d = nodes.eval(tau);
        let val = envelope * d;
        let env_mag = envelope.norm();
        let noise = env_mag * (noise_base + d.norm() * 3e-16 * (1.0 + lh.im.abs()));
        Ok((val.re, val.norm(), noise))
    };

    let first_scale = profile.mass_estimate * nodes.cap;
    let (integral, _abs_int, noise_int, quad_err) = integrate_line_refined(
        &mut integrand,
        profile.tau_hi,
        cfg.panels as usize,
        cfg.tol,
        first_scale,
    )?;

    let ln_prefactor = profile.g_star + nodes.l_max
        - ln_gamma_real(dims[0])
        - ln_gamma_real(dims[1]);
    let tail = profile.tail * nodes.cap;
    assemble(x, y, ln_prefactor, integral, quad_err + noise_int + tail, cfg.tol)
}

// ---------------------------------------------------------------------------
// M >= 2: double-double residue sum
// ---------------------------------------------------------------------------

struct ResidueWeights {
    /// Signed weights scaled so the largest has unit magnitude.
    w: Vec<Dd>,
    /// ln of the largest weight magnitude.
    lambda: f64,
}

fn build_residue_weights(model: &FiniteModel, x: f64) -> ResidueWeights {
    let dims = model.dims();
    let n = model.n;
    let mut ln_w: Vec<Dd> = Vec::with_capacity(n as usize);
    for k in 0..n {
        let kf = k as f64;
        let mut lw = Dd::from_f64(x).mul_f64(-kf);
        lw = lw.sub(dd::ln_gamma_cdd(Cdd::from_f64(kf + 1.0, 0.0)).re);
        for &nj in &dims {
            lw = lw.sub(dd::ln_gamma_cdd(Cdd::from_f64(nj - kf, 0.0)).re);
        }
        ln_w.push(lw);
    }
    let lambda = ln_w
        .iter()
        .map(|d| d.hi)
        .fold(f64::NEG_INFINITY, f64::max);
    let w = ln_w
        .iter()
        .enumerate()
        .map(|(k, lw)| {
            let mag = lw.sub_f64(lambda).exp();
            if k % 2 == 0 {
                mag
            } else {
                mag.neg()
            }
        })
        .collect();
    ResidueWeights { w, lambda }
}

fn kernel_dd_direct(
    model: &FiniteModel,
    x: f64,
    y: f64,
    cfg: &ContourConfig,
) -> Result<KernelEvaluation> {
    let dims = model.dims();
    let profile = scan_phase(&dims, y, cfg)?;
    let weights = build_residue_weights(model, x);
    let n_terms = weights.w.len() as f64;

    let mut integrand = |tau: f64| -> Result<(f64, f64, f64)> {
        let s = Complex64::new(cfg.c, tau);
        let lh = lh_at(&dims, y, s)?;
        let envelope = Complex64::new(lh.re - profile.g_star, lh.im).exp();
        let mut acc = Cdd::ZERO;
        let mut largest = 0.0f64;
        for (k, w) in weights.w.iter().enumerate() {
            let denom = Cdd::from_f64(cfg.c + k as f64, tau);
            acc = acc.add(denom.recip().scale(*w));
            let m = w.hi.abs() / (cfg.c + k as f64).hypot(tau);
            if m > largest {
                largest = m;
            }
        }
        let d = acc.to_c64();
        let val = envelope * d;
        let env_mag = envelope.norm();
        // double-double accumulation noise plus the f64 phase noise of LH
        let noise = env_mag
            * (1e-31 * largest * n_terms + d.norm() * 3e-16 * (1.0 + lh.im.abs()));
        Ok((val.re, val.norm(), noise))
    };

    let first_scale = profile.mass_estimate;
    let (integral, _abs_int, noise_int, quad_err) = integrate_line_refined(
        &mut integrand,
        profile.tau_hi,
        cfg.panels as usize,
        cfg.tol,
        first_scale,
    )?;

    let ln_prefactor = profile.g_star + weights.lambda;
    // |D| on the discarded stretch of the line, from the normalized
    // weights and the closest lattice-point distance
    let pole_dist = if cfg.c >= 0.0 {
        cfg.c
    } else {
        (cfg.c - cfg.c.round()).abs()
    };
    let sum_abs: f64 = weights.w.iter().map(|w| w.hi.abs()).sum();
    let d_bound = sum_abs / pole_dist.max(profile.tau_hi);
    let tail = profile.tail * d_bound;
    assemble(x, y, ln_prefactor, integral, quad_err + noise_int + tail, cfg.tol)
}

// ---------------------------------------------------------------------------
// oracle, correlations, bulk scaling
// ---------------------------------------------------------------------------

/// Independent M = 1 oracle: the squared singular values form a Laguerre
/// unitary ensemble, so the log-coordinate kernel is the Christoffel-Darboux
/// sum of orthonormal Laguerre functions with the symmetric Jacobian factor:
/// K(x, y) = e^{(x+y)/2} sum_{n<N} phi_n(e^x) phi_n(e^y).
pub fn laguerre_oracle(model: &FiniteModel, x: f64, y: f64) -> Result<f64> {
    if model.factor_count() != 1 {
        return Err(Error::Domain(format!(
            "Laguerre oracle requires M=1, got M={}",
            model.factor_count()
        )));
    }
    if !(x.is_finite() && y.is_finite()) || x.abs() > 300.0 || y.abs() > 300.0 {
        return Err(Error::Domain("oracle arguments out of range".into()));
    }
    let n = model.n as usize;
    let nu = model.nu[0] as f64;

    // orthonormal Laguerre functions phi_n(lambda) for weight
    // lambda^nu e^{-lambda}; mantissa plus ln-scale per degree, so the
    // deep-tail start (phi_0 ~ e^{-lambda/2}) survives until the
    // recurrence grows back into range
    let phi_all = |lambda: f64| -> Vec<(f64, f64)> {
        let ln_phi0 = 0.5 * (nu * lambda.ln() - lambda) - 0.5 * ln_gamma_real(nu + 1.0);
        let mut out = Vec::with_capacity(n);
        let mut scale = ln_phi0;
        let mut v0 = 1.0f64;
        out.push((v0, scale));
        if n == 1 {
            return out;
        }
        let mut v1 = (1.0 + nu - lambda) / (1.0 + nu).sqrt();
        out.push((v1, scale));
        const UP: f64 = 7.378697629483821e19; // 2^66
        const DOWN: f64 = 1.3552527156068805e-20;
        for k in 1..n - 1 {
            let kf = k as f64;
            let v2 = ((2.0 * kf + nu + 1.0 - lambda) * v1 - (kf * (kf + nu)).sqrt() * v0)
                / ((kf + 1.0) * (kf + 1.0 + nu)).sqrt();
            v0 = v1;
            v1 = v2;
            let mag = v0.abs().max(v1.abs());
            if mag > UP {
                v0 *= DOWN;
                v1 *= DOWN;
                scale += 66.0 * LN_2;
            } else if mag < DOWN && mag > 0.0 {
                v0 *= UP;
                v1 *= UP;
                scale -= 66.0 * LN_2;
            }
            out.push((v1, scale));
        }
        out
    };

    let la = x.exp();
    let lb = y.exp();
    let pa = phi_all(la);
    let pb = phi_all(lb);
    let jacobian = 0.5 * (x + y);
    let mut sum = 0.0;
    for ((va, sa), (vb, sb)) in pa.iter().zip(&pb) {
        let ln_mag = sa + sb + jacobian;
        if ln_mag > -740.0 {
            sum += va * vb * ln_mag.exp();
        }
    }
    Ok(sum)
}

/// n-point correlation det[K(x_i, x_j)] for n <= 8 distinct points.
/// Gauge-invariant: conjugating K by any positive diagonal leaves it fixed.
pub fn correlation(model: &FiniteModel, points: &[f64], cfg: &ContourConfig) -> Result<f64> {
    let n = points.len();
    if n == 0 || n > 8 {
        return Err(Error::InvalidParameter(format!(
            "correlation order {n} out of range 1..=8"
        )));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Domain("correlation points must be finite".into()));
    }
    for i in 0..n {
        for j in i + 1..n {
            if points[i] == points[j] {
                return Err(Error::Domain(format!(
                    "correlation points must be distinct (duplicate {})",
                    points[i]
                )));
            }
        }
    }
    let mut mat = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            mat[(i, j)] = kernel_log(model, points[i], points[j], cfg)?.value;
        }
    }
    Ok(mat.determinant())
}

/// Maps local bulk coordinates xi to physical log-coordinates around the
/// spectral position of angle theta.
pub fn scaled_points(
    model: &FiniteModel,
    params: &ModelParams,
    theta: f64,
    xi: &[f64],
) -> Result<ScaledWindow> {
    model.check_params(params, 1e-9)?;
    if xi.is_empty() || xi.len() > 64 {
        return Err(Error::InvalidParameter(format!(
            "xi grid size {} out of range 1..=64",
            xi.len()
        )));
    }
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("xi values must be finite".into()));
    }
    let sample = params.theta_sample(theta)?;
    if !sample.admissible {
        return Err(Error::InadmissibleAngle {
            theta,
            discriminant: sample.discriminant,
        });
    }
    let n = model.n as f64;
    let scale = n * (sample.r * theta.sin()).abs() / PI;
    if !(scale > 0.0) {
        return Err(Error::Domain(format!(
            "degenerate bulk scale at theta={theta}"
        )));
    }
    let center: f64 = model
        .nu
        .iter()
        .map(|&v| ((model.n + v) as f64).ln())
        .sum::<f64>()
        + sample.x.ln();
    Ok(ScaledWindow {
        theta,
        xi: xi.to_vec(),
        scale,
        center,
    })
}

/// Compares the rescaled finite-N kernel against the sine kernel over a xi
/// grid. The pointwise comparison carries the bulk gauge factor
/// e^{-pi (xi - eta)(cot theta - 1/(y r sin theta))} and is reported as a
/// diagnostic; the pair-determinant deviations are gauge-free.
pub fn sine_limit_check(
    model: &FiniteModel,
    params: &ModelParams,
    theta: f64,
    xi_grid: &[f64],
    cfg: &ContourConfig,
) -> Result<SineLimitReport> {
    let window = scaled_points(model, params, theta, xi_grid)?;
    let sample = params.theta_sample(theta)?;
    let points = window.points();
    let m = points.len();
    let mut kmat = vec![0.0f64; m * m];
    for i in 0..m {
        for j in 0..m {
            kmat[i * m + j] = kernel_log(model, points[i], points[j], cfg)?.value / window.scale;
        }
    }
    let gauge_rate = 1.0 / theta.tan() - 1.0 / (params.y * sample.r * theta.sin());
    let mut sup_pointwise = 0.0f64;
    let mut sup_diagonal = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let dxi = window.xi[i] - window.xi[j];
            let gauged = (-PI * dxi * gauge_rate).exp() * kmat[i * m + j];
            let dev = (gauged - specfun::sinc_pi(dxi)).abs();
            if dev > sup_pointwise {
                sup_pointwise = dev;
            }
            if i == j && (gauged - 1.0).abs() > sup_diagonal {
                sup_diagonal = (gauged - 1.0).abs();
            }
        }
    }
    let mut sup_pair_determinant = 0.0f64;
    for i in 0..m {
        for j in i + 1..m {
            let det_fin = kmat[i * m + i] * kmat[j * m + j] - kmat[i * m + j] * kmat[j * m + i];
            let sc = specfun::sinc_pi(window.xi[i] - window.xi[j]);
            let det_sine = 1.0 - sc * sc;
            let dev = (det_fin - det_sine).abs();
            if dev > sup_pair_determinant {
                sup_pair_determinant = dev;
            }
        }
    }
    Ok(SineLimitReport {
        theta,
        scale: window.scale,
        sup_pointwise,
        sup_diagonal,
        sup_pair_determinant,
    })
}

/// Diagonal-density consistency: K(center, center)/(N x(theta)) against the
/// limiting density rho(theta).
pub fn corollary_density_check(
    model: &FiniteModel,
    params: &ModelParams,
    theta: f64,
    cfg: &ContourConfig,
) -> Result<CorollaryReport> {
    let window = scaled_points(model, params, theta, &[0.0])?;
    let sample = params.theta_sample(theta)?;
    let center = window.center;
    let k = kernel_log(model, center, center, cfg)?.value;
    let kernel_scaled = k / (model.n as f64 * sample.x);
    let density_value = sample.rho;
    Ok(CorollaryReport {
        kernel_scaled,
        density_value,
        relative_deviation: (kernel_scaled - density_value).abs() / density_value,
    })
}

/// Integrates the diagonal K(x, x) over a window wide enough to hold the
/// whole spectrum; the result equals N up to the quadrature tolerance. The
/// window starts from the limiting support and widens until the boundary
/// density is negligible.
pub fn total_mass(model: &FiniteModel, cfg: &ContourConfig) -> Result<f64> {
    let n = model.n as f64;
    let log_dims: f64 = model
        .nu
        .iter()
        .map(|&v| ((model.n + v) as f64).ln())
        .sum();
    // upper support estimate of the scaled law: prod (1 + sqrt(y_l))^2
    let upper_est: f64 = model
        .nu
        .iter()
        .map(|&v| {
            let y = n / (n + v as f64);
            (1.0 + y.sqrt()).powi(2)
        })
        .product();
    let mut hi = log_dims + (1.05 * upper_est).ln() + 1.0;
    let mut lo = hi - 4.0;

    // mass in one log-unit at the boundary that we are willing to neglect
    let boundary_budget = cfg.tol * n / 40.0;
    // In the far tails the kernel value can be smaller than the contour
    // evaluation can resolve; a precision failure whose estimate is below
    // the floor certifies the point negligible, one above it leaves the
    // value unknown (None). Far-tail estimates are usually dominated by
    // the truncated stretch of the vertical line, and that part decays
    // exponentially in the line height, so before giving up on a point
    // we ratchet the height up. The taller line is kept for the rest of
    // the run: it costs little at interior points and saves rediscovering
    // the needed height at every tail point.
    let cfg_pt: RefCell<ContourConfig> = RefCell::new(cfg.clone());
    let dims = model.dims();
    let diag_soft = |x: f64, floor: f64| -> Result<Option<f64>> {
        // the well-conditioned abscissa moves with x; a line fixed for
        // the whole run loses the low flank of the spectrum entirely
        let c_local = tuned_abscissa(&dims, x);
        loop {
            let attempt = {
                let local = ContourConfig {
                    c: c_local,
                    ..*cfg_pt.borrow()
                };
                kernel_log(model, x, x, &local)
            };
            match attempt {
                Ok(v) => return Ok(Some(v.value)),
                Err(Error::PrecisionLoss { estimate, .. }) if estimate <= floor => {
                    return Ok(Some(0.0));
                }
                Err(Error::PrecisionLoss { .. }) => {
                    let mut c = cfg_pt.borrow_mut();
                    if c.t >= 48.0 * cfg.t {
                        return Ok(None);
                    }
                    c.t *= 1.7;
                }
                Err(e) => return Err(e),
            }
        }
    };
    // Widen while the boundary still carries resolvable mass. None means
    // the contour cannot resolve the point at all; deeper probes are
    // equally blind, so stop and accept the boundary uncertainty, which
    // sits at the evaluation noise scale.
    for _ in 0..40 {
        let grow = matches!(diag_soft(lo, boundary_budget)?, Some(v) if v.abs() > boundary_budget);
        if grow && lo > -MAX_ABS_COORD + 3.0 {
            lo -= 2.5;
        } else {
            break;
        }
    }
    for _ in 0..40 {
        let grow = matches!(diag_soft(hi, boundary_budget)?, Some(v) if v.abs() > boundary_budget);
        if grow && hi < MAX_ABS_COORD - 3.0 {
            hi += 2.5;
        } else {
            break;
        }
    }

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let f = |x: f64| -> f64 {
        if failure.borrow().is_some() {
            return 0.0;
        }
        // interior points sit above the widening cut, so an unresolvable
        // value can only appear in the thin transition layer; dropping it
        // perturbs the mass well below the integration tolerance
        match diag_soft(x, 4.0 * boundary_budget) {
            Ok(Some(v)) => v,
            Ok(None) => 0.0,
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                0.0
            }
        }
    };
    let (mass, _err) = quad::integrate(f, lo, hi, cfg.tol * n / 4.0)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ModelParams;

    fn model(n: u32, nu: &[u32]) -> FiniteModel {
        FiniteModel::new(n, nu.to_vec()).unwrap()
    }

    #[test]
    fn delta_examples() {
        assert!((delta_mn(&model(100, &[100])) - 0.015).abs() < 1e-15);
        assert!((delta_mn(&model(1, &[0])) - 2.0).abs() < 1e-15);
        assert!((delta_mn(&model(50, &[0, 0])) - 0.06).abs() < 1e-15);
        assert!(FiniteModel::new(1, vec![]).is_err());
        assert!(FiniteModel::new(0, vec![0]).is_err());
    }

    #[test]
    fn truncation_solver_meets_bound() {
        for (n, nu) in [(1u32, vec![0u32]), (30, vec![5]), (20, vec![10, 10])] {
            let m = FiniteModel::new(n, nu).unwrap();
            for tol in [1e-6, 1e-10] {
                let t = solve_truncation_height(&m, tol);
                let rem = truncation_remainder_log(&m, t);
                assert!(rem <= (tol / 10.0).ln() + 1e-6, "remainder {rem} at t={t}");
                // barely smaller heights must be rejected
                let cfg = ContourConfig { c: 0.5, t: t * 0.8, panels: 32, tol };
                assert!(matches!(cfg.validate(&m), Err(Error::ContourConfig(_))));
            }
        }
    }

    #[test]
    fn n1_closed_form() {
        // N=1, nu=0: K(x,y) = e^{y - e^y}, independent of x
        let m = model(1, &[0]);
        let cfg = ContourConfig::standard(&m, 1e-11).unwrap();
        let cases = [
            (0.0, 0.0, (-1.0f64).exp()),
            (1.7, -1.0, (-1.0 - (-1.0f64).exp()).exp()),
        ];
        for (x, y, want) in cases {
            let got = kernel_log(&m, x, y, &cfg).unwrap().value;
            assert!(
                (got - want).abs() <= 1e-10 * (1.0 + want),
                "K({x},{y}) = {got}, want {want}"
            );
        }
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut unit = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..8 {
            let x = 4.0 * unit() - 2.0;
            let y = 4.0 * unit() - 2.0;
            let want = (y - y.exp()).exp();
            let got = kernel_log(&m, x, y, &cfg).unwrap().value;
            assert!((got - want).abs() <= 1e-10 * (1.0 + want), "random ({x},{y})");
        }
    }

    #[test]
    fn n1_gamma_weight_closed_form() {
        // N=1 with nu > 0: K(x,y) = e^{(1+nu) y - e^y} / Gamma(1+nu)
        let m = model(1, &[2]);
        let cfg = ContourConfig::standard(&m, 1e-11).unwrap();
        for y in [-0.7f64, 0.3, 1.1] {
            let want = ((3.0 * y) - y.exp()).exp() / 2.0;
            let got = kernel_log(&m, 0.4, y, &cfg).unwrap().value;
            assert!(
                (got - want).abs() <= 1e-10 * (1.0 + want),
                "K(0.4,{y}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn oracle_basics() {
        let m = model(1, &[0]);
        let v = laguerre_oracle(&m, 0.0, 0.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-14);
        assert!(laguerre_oracle(&model(4, &[0, 0]), 0.0, 0.0).is_err());

        // diagonal of the N=5 oracle integrates to 5
        // window: K(x,x) -> N e^x toward the hard edge, so the lower cut
        // leaves N e^{lo} behind; lo = -18 keeps that below 1e-7
        let m5 = model(5, &[0]);
        let (mass, _) = quad::integrate(
            |x| laguerre_oracle(&m5, x, x).unwrap(),
            -18.0,
            5.0,
            1e-7,
        )
        .unwrap();
        assert!((mass - 5.0).abs() < 1e-6, "oracle mass {mass}");
    }

    #[test]
    fn oracle_agreement_bulk() {
        // contour evaluation against the Laguerre oracle on the diagonal
        // at +-1 mean-spacing offsets; angles with N Re q >= 1 keep the
        // tuned line on the well-conditioned Laplace side
        for (n, nu) in [(10u32, 0u32), (20, 3), (30, 5)] {
            let m = model(n, &[nu]);
            let y = n as f64 / (n + nu) as f64;
            let params = ModelParams::new(1, y).unwrap();
            // largest angle on the physical root branch (r > 0) whose
            // saddle abscissa N Re q clears 4, keeping the tuned line in
            // its well-conditioned band
            let theta = params
                .admissible_thetas(33)
                .into_iter()
                .rev()
                .find(|&t| {
                    let physical = params
                        .theta_sample(t)
                        .map(|smp| smp.r > 0.0)
                        .unwrap_or(false);
                    physical
                        && params
                            .saddle(t)
                            .map(|s| n as f64 * s.q.re >= 4.0)
                            .unwrap_or(false)
                })
                .unwrap();
            let cfg = ContourConfig::bulk_tuned(&m, &params, theta, 1e-9).unwrap();
            let window =
                scaled_points(&m, &params, theta, &[-1.0, -0.5, 0.0, 0.5, 1.0]).unwrap();
            for x in window.points() {
                let want = laguerre_oracle(&m, x, x).unwrap();
                let got = kernel_log(&m, x, x, &cfg).unwrap().value;
                assert!(
                    (got - want).abs() <= 1e-6 * want.abs(),
                    "(N={n}, nu={nu}) at x={x}: {got} vs {want}"
                );
            }
        }
        // far side of the bulk arc: the saddle abscissa is negative and
        // the evaluation rides the residue sum on a negative line
        let m = model(10, &[0]);
        let params = ModelParams::new(1, 1.0).unwrap();
        let thetas = params.admissible_thetas(9);
        let theta = thetas[thetas.len() / 2];
        let cfg = ContourConfig::bulk_tuned(&m, &params, theta, 1e-9).unwrap();
        assert!(cfg.c < 0.0, "expected a negative tuned abscissa, got {}", cfg.c);
        let window = scaled_points(&m, &params, theta, &[-1.0, 0.0, 1.0]).unwrap();
        for x in window.points() {
            let want = laguerre_oracle(&m, x, x).unwrap();
            let got = kernel_log(&m, x, x, &cfg).unwrap().value;
            assert!(
                (got - want).abs() <= 1e-8 * want.abs(),
                "(negative line) at x={x}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn dd_path_mass_small_m2() {
        // end-to-end check of the M=2 double-double path: total mass = N
        let m = model(2, &[1, 3]);
        let cfg = ContourConfig::standard(&m, 1e-7).unwrap();
        let mass = total_mass(&m, &cfg).unwrap();
        assert!((mass - 2.0).abs() < 2e-4, "mass {mass}");
    }

    #[test]
    fn pair_correlation_symmetry_m2() {
        let m = model(6, &[2, 4]);
        let cfg = ContourConfig::standard(&m, 1e-8).unwrap();
        // R2(x,y) = R2(y,x) even though K itself is not symmetric
        let center = ((6.0f64 + 2.0).ln() + (6.0f64 + 4.0).ln()) / 1.0;
        let (a, b) = (center - 0.4, center + 0.3);
        let kaa = kernel_log(&m, a, a, &cfg).unwrap().value;
        let kbb = kernel_log(&m, b, b, &cfg).unwrap().value;
        let kab = kernel_log(&m, a, b, &cfg).unwrap().value;
        let kba = kernel_log(&m, b, a, &cfg).unwrap().value;
        let r2 = kaa * kbb - kab * kba;
        assert!(kaa > 0.0 && kbb > 0.0);
        assert!(r2 >= -1e-9 * kaa * kbb, "repulsion violated: {r2}");
        let r2_swapped = kbb * kaa - kba * kab;
        assert!((r2 - r2_swapped).abs() <= 1e-12 * r2.abs().max(1e-300));
    }

    #[test]
    fn correlation_rank_one() {
        let m = model(1, &[0]);
        let cfg = ContourConfig::standard(&m, 1e-10).unwrap();
        let d0 = correlation(&m, &[0.0], &cfg).unwrap();
        assert!((d0 - kernel_log(&m, 0.0, 0.0, &cfg).unwrap().value).abs() < 1e-15);
        // one eigenvalue only: every pair correlation vanishes identically
        let r2 = correlation(&m, &[0.0, 1.0], &cfg).unwrap();
        assert!(r2.abs() < 1e-12, "rank-one R2 = {r2}");
        assert!(correlation(&m, &[0.0, 0.0], &cfg).is_err());
        assert!(correlation(&m, &[], &cfg).is_err());
        assert!(correlation(&m, &vec![0.5; 9], &cfg).is_err());
    }

    #[test]
    fn gauge_invariance_dets() {
        let m = model(12, &[3]);
        let y = 12.0 / 15.0;
        let params = ModelParams::new(1, y).unwrap();
        let theta = std::f64::consts::FRAC_PI_8;
        let cfg = ContourConfig::bulk_tuned(&m, &params, theta, 1e-9).unwrap();
        let pts = scaled_points(&m, &params, theta, &[-0.7, 0.0, 0.9])
            .unwrap()
            .points();
        let nmat = 3;
        let mut k = nalgebra::DMatrix::<f64>::zeros(nmat, nmat);
        for i in 0..nmat {
            for j in 0..nmat {
                k[(i, j)] = kernel_log(&m, pts[i], pts[j], &cfg).unwrap().value;
            }
        }
        let diag = [1.7e3, 2.9e-2, 5.1];
        let mut gauged = k.clone();
        for i in 0..nmat {
            for j in 0..nmat {
                gauged[(i, j)] *= diag[i] / diag[j];
            }
        }
        let (da, db) = (k.determinant(), gauged.determinant());
        assert!((da - db).abs() <= 1e-12 * da.abs(), "{da} vs {db}");
        assert!(da > 0.0);
    }

    #[test]
    fn scaled_points_examples() {
        let m = model(100, &[100]);
        let params = ModelParams::new(1, 0.5).unwrap();
        let theta = std::f64::consts::FRAC_PI_8;
        let w = scaled_points(&m, &params, theta, &[0.0]).unwrap();
        assert_eq!(w.points()[0], w.center);
        let r = params.radial(theta).unwrap();
        let want_scale = 100.0 * (r * theta.sin()).abs() / PI;
        assert!((w.scale - want_scale).abs() < 1e-12 * want_scale);
        let x = params.x_of_theta(theta).unwrap();
        assert!((w.center - (200.0f64.ln() + x.ln())).abs() < 1e-12);
        // inconsistent limiting parameters are rejected
        let bad = ModelParams::new(1, 0.3).unwrap();
        assert!(scaled_points(&m, &bad, theta, &[0.0]).is_err());
        // identity: rho(theta) x(theta) N = scale
        let rho = params.rho_of_theta(theta).unwrap();
        assert!((rho * x * 100.0 - w.scale).abs() < 1e-10 * w.scale);
    }

    #[test]
    fn truncation_robustness() {
        let m = model(8, &[2]);
        let y = 0.8;
        let params = ModelParams::new(1, y).unwrap();
        let theta = std::f64::consts::FRAC_PI_8;
        let cfg = ContourConfig::bulk_tuned(&m, &params, theta, 1e-9).unwrap();
        let x0 = scaled_points(&m, &params, theta, &[0.0]).unwrap().center;
        let base = kernel_log(&m, x0, x0, &cfg).unwrap().value;
        let wide = ContourConfig {
            t: cfg.t * 2.0,
            panels: cfg.panels * 2,
            ..cfg
        };
        let again = kernel_log(&m, x0, x0, &wide).unwrap().value;
        assert!(
            (base - again).abs() <= 1e-9 * (1.0 + base.abs()),
            "{base} vs {again}"
        );
    }

    #[test]
    fn sine_limit_moderate_n() {
        let m = model(50, &[50]);
        let params = ModelParams::new(1, 0.5).unwrap();
        let theta = std::f64::consts::FRAC_PI_8;
        let cfg = ContourConfig::bulk_tuned(&m, &params, theta, 1e-7).unwrap();
        let report = sine_limit_check(&m, &params, theta, &[0.0, 0.5], &cfg).unwrap();
        assert!(report.sup_diagonal < 0.05, "diag dev {}", report.sup_diagonal);
        let target = 1.0 - (2.0 / PI) * (2.0 / PI);
        assert!(
            (report.sup_pair_determinant - 0.0).abs() < 0.12,
            "pair-det dev {} (target around {target})",
            report.sup_pair_determinant
        );
    }

    #[test]
    fn corollary_moderate_n() {
        let m = model(50, &[50]);
        let params = ModelParams::new(1, 0.5).unwrap();
        let theta = std::f64::consts::FRAC_PI_8;
        let cfg = ContourConfig::bulk_tuned(&m, &params, theta, 1e-7).unwrap();
        let report = corollary_density_check(&m, &params, theta, &cfg).unwrap();
        assert!(
            report.relative_deviation < 0.1,
            "deviation {}",
            report.relative_deviation
        );
        assert!((report.density_value - 0.16043895464063352).abs() < 1e-12);
    }

    #[test]
    fn total_mass_n1() {
        let m = model(1, &[0]);
        let cfg = ContourConfig::standard(&m, 1e-7).unwrap();
        let mass = total_mass(&m, &cfg).unwrap();
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    }

    // The hard-edge flank carries half an eigenvalue of mass at abscissas
    // where a fixed line cannot resolve the diagonal; the per-point tuned
    // line must recover it.
    #[test]
    fn total_mass_hard_edge_n5() {
        let m = model(5, &[0]);
        let cfg = ContourConfig::standard(&m, 1e-6).unwrap();
        let mass = total_mass(&m, &cfg).unwrap();
        assert!((mass - 5.0).abs() / 5.0 < 1e-5, "mass {mass}");
    }

    #[test]
    fn tuned_abscissa_tracks_the_point() {
        let dims = vec![5.0, 5.0];
        // left flank wants a negative line near the wall, right tail a
        // far positive one, and they must stay off the forbidden bands
        let left = tuned_abscissa(&dims, -5.0);
        let right = tuned_abscissa(&dims, 4.0);
        assert!(left < -2.0 && left > -4.7, "left {left}");
        assert!(right > 10.0, "right {right}");
        for w in [-9.0, -3.0, 0.0, 2.0, 5.0] {
            let c = tuned_abscissa(&dims, w);
            let dist = if c >= 0.0 { c } else { (c - c.round()).abs() };
            assert!(dist >= 0.25, "w={w} c={c}");
        }
        // N=1: the wall of lnGamma(c+1) confines the line to (-1, inf);
        // the deep-left optimum hugs the wall-side snap point
        let c1 = tuned_abscissa(&[1.0, 1.0], -10.0);
        assert!((-0.301..=1.0).contains(&c1), "c1 {c1}");
    }

    #[test]
    fn point_tuned_evaluates_where_standard_cannot() {
        let m = model(5, &[0]);
        let standard = ContourConfig::standard(&m, 1e-6).unwrap();
        assert!(matches!(
            kernel_log(&m, -5.0, -5.0, &standard),
            Err(Error::PrecisionLoss { .. })
        ));
        let tuned = ContourConfig::point_tuned(&m, -5.0, 1e-6).unwrap();
        let ev = kernel_log(&m, -5.0, -5.0, &tuned).unwrap();
        let oracle = laguerre_oracle(&m, -5.0, -5.0).unwrap();
        assert!(
            (ev.value - oracle).abs() <= 1e-6 * oracle.abs(),
            "tuned {} oracle {oracle}",
            ev.value
        );
    }

    #[test]
    fn input_validation() {
        let m = model(5, &[0]);
        let cfg = ContourConfig::standard(&m, 1e-8).unwrap();
        assert!(kernel_log(&m, f64::NAN, 0.0, &cfg).is_err());
        assert!(kernel_log(&m, 0.0, 701.0, &cfg).is_err());
        assert!(ContourConfig { c: -1.0, ..cfg }.validate(&m).is_err());
        assert!(ContourConfig { panels: 0, ..cfg }.validate(&m).is_err());
        assert!(ContourConfig { tol: 1e-20, ..cfg }.validate(&m).is_err());
    }
}
