//! Limiting spectral density for products of M independent rectangular
//! complex Ginibre factors with a common rectangularity ratio y: the
//! trigonometric parametrization (r(θ), x(θ), ρ(θ)), closed-form spectral
//! edges, direct density evaluation through the resolvent polynomial, CDF
//! and moments, and the saddle-point data used to validate the bulk
//! scaling analysis.
//!
//! Two coexisting descriptions of the same curve:
//!   * the parametrization: W = r(θ)e^{iθ} with r a root of a quadratic
//!     whose coefficients are trigonometric in θ;
//!   * the resolvent polynomial in W at real spectral argument x, whose
//!     physical upper-half-plane root carries the density.
//!
//! The physical branch is one continuous arc in the closed upper half
//! plane, from the real point r(0) at x = x_+ to the real point |r(π)| at
//! x = x_−. Its argument ψ rises from 0 to the first tangency angle θ_1
//! (the first zero of the radial discriminant) and falls back to 0; the
//! radius follows the + root of the quadratic on the rising part and the
//! − root on the falling part, the branches exchanging at the tangency.
//! In the signed convention used here the falling part is written with
//! negative r at angles near π: r(θ) = −r_−(π−θ) on [π−θ_1, π). At y = 1
//! the rising component alone already covers the support down to the hard
//! edge at x = 0, and the mirror component repeats it with flipped sign.
//!
//! For M ≥ 3 the resolvent polynomial carries additional non-real root
//! pairs over the same x-range, and the discriminant admits further
//! spurious sign windows in the middle of (0, π) whose points parametrize
//! those pairs. Because the polynomial is linear in x, a root value W can
//! belong to only one x, so a spurious root can never share the argument
//! range (0, θ_1] with the physical arc: picking the upper-half-plane root
//! with arg W ≤ θ_1 is an exact branch selector. Angles outside the two
//! genuine curve components are rejected as inadmissible even where the
//! discriminant is nonnegative.

use crate::error::{Error, Result};
use crate::quad;
use crate::roots;
use num_complex::Complex64;
use once_cell::sync::Lazy;
use std::collections::HashMap;
use std::sync::RwLock;

/// Equal-ratio limiting model: M factors, common ratio y = lim N/N_l.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub m: u32,
    pub y: f64,
}

/// One evaluated point of the θ-parametrization.
#[derive(Debug, Clone, Copy)]
pub struct ThetaSample {
    pub theta: f64,
    pub discriminant: f64,
    /// Signed radial value; negative on the component near θ = π.
    pub r: f64,
    pub x: f64,
    /// Density in the x variable, nonnegative by convention.
    pub rho: f64,
    /// True when θ lies on the physical curve. A nonnegative discriminant
    /// is necessary but not sufficient: spurious discriminant windows in
    /// the middle of (0, π) parametrize non-physical root pairs.
    pub admissible: bool,
}

/// Closed-form support endpoints of the limiting law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSupport {
    pub x_minus: f64,
    pub x_plus: f64,
}

/// Physical upper-half-plane root of the resolvent polynomial at spectral
/// argument z, with the reconstructed Stieltjes value and the defect of
/// the defining equation.
#[derive(Debug, Clone, Copy)]
pub struct ResolventRoot {
    pub z: f64,
    pub w: Complex64,
    pub g: Complex64,
    pub residual: f64,
    /// Set when z lies within 1e-9 of a spectral edge, where the conjugate
    /// root pair nearly collides and accuracy degrades to square-root order.
    pub edge_proximal: bool,
}

/// Saddle-point data of the phase function at q(θ) = r(θ)e^{iθ} − 1/y.
#[derive(Debug, Clone, Copy)]
pub struct SaddleData {
    pub theta: f64,
    pub q: Complex64,
    pub g_value: Complex64,
    pub g_prime: Complex64,
    pub g_double_prime: Complex64,
}

/// π − fl(π) to double precision; equals sin(fl(π)).
const PI_RESIDUAL: f64 = 1.2246467991473532e-16;

/// sin(kθ) with full relative accuracy over all of (0, π): past π/2 the
/// sine is taken at the reflected angle, so arguments near multiples of π
/// never lose precision to argument rounding.
fn sin_k(k: u32, theta: f64) -> f64 {
    if theta <= std::f64::consts::FRAC_PI_2 {
        (k as f64 * theta).sin()
    } else {
        let phi = (std::f64::consts::PI - theta) + PI_RESIDUAL;
        let s = (k as f64 * phi).sin();
        if k % 2 == 1 {
            s
        } else {
            -s
        }
    }
}

/// cos(kθ), reflected like sin_k.
fn cos_k(k: u32, theta: f64) -> f64 {
    if theta <= std::f64::consts::FRAC_PI_2 {
        (k as f64 * theta).cos()
    } else {
        let phi = (std::f64::consts::PI - theta) + PI_RESIDUAL;
        let c = (k as f64 * phi).cos();
        if k % 2 == 1 {
            -c
        } else {
            c
        }
    }
}

/// sin(kθ)/(kθ); equals 1 at k = 0.
fn sinc_k(k: u32, theta: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let t = k as f64 * theta;
    if t < 1e-4 {
        let t2 = t * t;
        1.0 - t2 / 6.0 + t2 * t2 / 120.0
    } else {
        sin_k(k, theta) / t
    }
}

/// First tangency angles, keyed by (M, bits of y). The scan behind the
/// value costs a couple of milliseconds, too much for the per-evaluation
/// hot paths that need it.
static TANGENCY: Lazy<RwLock<HashMap<(u32, u64), f64>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

impl ModelParams {
    pub fn new(m: u32, y: f64) -> Result<Self> {
        if m == 0 || m > 12 {
            return Err(Error::InvalidParameter(format!(
                "factor count must be in 1..=12, got {m}"
            )));
        }
        if !(y > 0.0 && y <= 1.0) || !y.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ratio must lie in (0, 1], got {y}"
            )));
        }
        Ok(ModelParams { m, y })
    }

    fn check_theta(theta: f64) -> Result<()> {
        if !(theta > 0.0 && theta < std::f64::consts::PI) {
            return Err(Error::Domain(format!(
                "angle must lie in the open interval (0, pi), got {theta}"
            )));
        }
        Ok(())
    }

    /// Discriminant of the radial quadratic, literal trigonometric form.
    /// Negative values mark angles off the curve; nonnegative values do
    /// not guarantee membership (see the module comment).
    pub fn discriminant(&self, theta: f64) -> Result<f64> {
        Self::check_theta(theta)?;
        let m = self.m;
        let iy = 1.0 / self.y;
        let s1 = sin_k(m - 1, theta);
        let s2 = sin_k(m + 1, theta);
        Ok((iy - 1.0).powi(2) * s1 * s1
            + iy * iy * s2 * s2
            + (1.0 - self.y) * iy * iy * (cos_k(2 * m, theta) + cos_k(2, theta) - 2.0))
    }

    /// Coefficients of the radial quadratic a r^2 + b r + c = 0 with the
    /// common factor θ removed through sinc, so they stay meaningful down
    /// to θ = 0. The discriminant b^2 − 4ac equals y^2 Δ(θ)/θ^2.
    fn reduced_quadratic(&self, theta: f64) -> (f64, f64, f64) {
        let m = self.m as f64;
        let y = self.y;
        let a = y * m * sinc_k(self.m, theta);
        let b = (y - 1.0) * (m - 1.0) * sinc_k(self.m - 1, theta)
            - (m + 1.0) * sinc_k(self.m + 1, theta);
        let c = (1.0 / y - 1.0) * m * sinc_k(self.m, theta);
        (a, b, c)
    }

    /// Discriminant of the reduced quadratic with a rounding-noise clamp,
    /// so that exact tangency points (true discriminant zero) do not flip
    /// negative through cancellation.
    fn reduced_discriminant(&self, theta: f64) -> f64 {
        let (a, b, c) = self.reduced_quadratic(theta);
        let d = b * b - 4.0 * a * c;
        let noise = 32.0 * f64::EPSILON * (b * b + (4.0 * a * c).abs());
        if d < 0.0 && d > -noise {
            0.0
        } else {
            d
        }
    }

    /// + root of the reduced quadratic, evaluated without cancellation.
    /// Caller guarantees d = reduced_discriminant(theta) ≥ 0.
    fn quad_root_plus(&self, theta: f64, d: f64) -> f64 {
        let (a, b, c) = self.reduced_quadratic(theta);
        let sq = d.sqrt();
        if b > 0.0 {
            c / (-0.5 * (b + sq))
        } else if a != 0.0 {
            (0.5 * (sq - b)) / a
        } else {
            -c / b
        }
    }

    /// − root of the reduced quadratic, evaluated without cancellation.
    fn quad_root_minus(&self, theta: f64, d: f64) -> f64 {
        let (a, b, c) = self.reduced_quadratic(theta);
        let sq = d.sqrt();
        if b <= 0.0 {
            2.0 * c / (sq - b)
        } else {
            (-0.5 * (b + sq)) / a
        }
    }

    /// Largest angle of the rising curve component: the first zero of the
    /// radial discriminant for y < 1, where the + and − roots exchange;
    /// π/(M+1) for y = 1, where x(θ) reaches the hard edge at zero.
    pub fn first_tangency(&self) -> f64 {
        if self.y == 1.0 {
            return std::f64::consts::PI / (self.m + 1) as f64;
        }
        let key = (self.m, self.y.to_bits());
        if let Some(&t) = TANGENCY.read().unwrap().get(&key) {
            return t;
        }
        let t = self.scan_tangency();
        TANGENCY.write().unwrap().insert(key, t);
        t
    }

    fn scan_tangency(&self) -> f64 {
        const N: usize = 16384;
        let step = std::f64::consts::PI / N as f64;
        let mut prev_t = step;
        let mut prev_d = self.reduced_discriminant(prev_t);
        for i in 2..N {
            let t = i as f64 * step;
            let d = self.reduced_discriminant(t);
            if prev_d >= 0.0 && d < 0.0 {
                return self.bisect_tangency(prev_t, t);
            }
            prev_t = t;
            prev_d = d;
        }
        // no crossing resolved by the scan: the inadmissible gap is
        // narrower than a cell (y extremely close to 1), so pin down the
        // discriminant minimum near the square-case tangency instead
        let center = std::f64::consts::PI / (self.m + 1) as f64;
        let mut lo = center - 2.0 * step;
        let mut hi = center + 2.0 * step;
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if self.reduced_discriminant(m1) < self.reduced_discriminant(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let tmin = 0.5 * (lo + hi);
        if self.reduced_discriminant(tmin) < 0.0 {
            self.bisect_tangency(center - 2.0 * step, tmin)
        } else {
            tmin
        }
    }

    fn bisect_tangency(&self, mut pos: f64, mut neg: f64) -> f64 {
        for _ in 0..100 {
            let mid = 0.5 * (pos + neg);
            if mid == pos || mid == neg {
                break;
            }
            if self.reduced_discriminant(mid) >= 0.0 {
                pos = mid;
            } else {
                neg = mid;
            }
        }
        pos
    }

    /// The two genuine curve components: the rising piece adjacent to
    /// θ = 0 and the falling piece adjacent to θ = π, as open-ended
    /// (lo, hi) pairs. Everything between them is off the curve.
    pub fn curve_components(&self) -> [(f64, f64); 2] {
        let t1 = self.first_tangency();
        [(0.0, t1), (std::f64::consts::PI - t1, std::f64::consts::PI)]
    }

    fn on_curve(&self, theta: f64) -> bool {
        if !(theta > 0.0 && theta < std::f64::consts::PI) {
            return false;
        }
        let t1 = self.first_tangency();
        let tol = 1e-9;
        theta <= t1 + tol || theta >= std::f64::consts::PI - t1 - tol
    }

    fn radial_inner(&self, theta: f64) -> Option<f64> {
        if !self.on_curve(theta) {
            return None;
        }
        if self.y == 1.0 {
            // the quadratic degenerates (one root pinned at 0); the curve
            // value is the sine ratio, negative past the mirror point
            let num = (self.m + 1) as f64 * sinc_k(self.m + 1, theta);
            let den = self.m as f64 * sinc_k(self.m, theta);
            return Some(num / den);
        }
        let t1 = self.first_tangency();
        if theta <= t1 + 1e-9 {
            let d = self.reduced_discriminant(theta).max(0.0);
            Some(self.quad_root_plus(theta, d))
        } else {
            // falling part: the − root at the mirror angle, negated
            let phi = (std::f64::consts::PI - theta) + PI_RESIDUAL;
            let d = self.reduced_discriminant(phi).max(0.0);
            Some(-self.quad_root_minus(phi, d))
        }
    }

    /// Signed radial value r(θ) of the physical curve: the + quadratic
    /// root on the rising component, minus the − root of the mirror angle
    /// on the falling component. Errors off the curve.
    pub fn radial(&self, theta: f64) -> Result<f64> {
        Self::check_theta(theta)?;
        self.radial_inner(theta)
            .ok_or_else(|| Error::InadmissibleAngle {
                theta,
                discriminant: self.discriminant(theta).unwrap_or(f64::NAN),
            })
    }

    /// Closed-form limits of the curve radius at θ = 0 and θ = π.
    pub fn endpoints_r(&self) -> (f64, f64) {
        let m = self.m as f64;
        let e = 1.0 / self.y - 1.0;
        let s = ((m + 1.0) * (m + 1.0) + 4.0 * m * e).sqrt();
        let r0 = (m + 1.0 + 2.0 * m * e + s) / (2.0 * m);
        let rpi = (-(m + 1.0) - 2.0 * m * e + s) / (2.0 * m);
        (r0, rpi)
    }

    /// x(θ): the spectral coordinate the angle θ parametrizes.
    pub fn x_of_theta(&self, theta: f64) -> Result<f64> {
        let r = self.radial(theta)?;
        Ok(self.x_from_r(theta, r))
    }

    fn x_from_r(&self, theta: f64, r: f64) -> f64 {
        let m = self.m as f64;
        let y = self.y;
        // [r sin((M+1)θ) + (1 − 1/y) sin(Mθ)] / sin θ in sinc form, uniform
        // at both ends of the angle range
        let bracket = (m + 1.0) * r * sinc_k(self.m + 1, theta)
            + (1.0 - 1.0 / y) * m * sinc_k(self.m, theta);
        y.powi(self.m as i32) * r.powi(self.m as i32 - 1) * bracket / sinc_k(1, theta)
    }

    /// Density in x at the parametrized point, nonnegative convention:
    /// |r sinθ| / (π x). On the falling component the raw expression would
    /// come out negative; the absolute value agrees with Stieltjes
    /// inversion.
    pub fn rho_of_theta(&self, theta: f64) -> Result<f64> {
        let r = self.radial(theta)?;
        let x = self.x_from_r(theta, r);
        if x == 0.0 {
            return Err(Error::Domain(format!(
                "density undefined where x(theta) vanishes, theta = {theta}"
            )));
        }
        Ok((r * sin_k(1, theta) / (std::f64::consts::PI * x)).abs())
    }

    /// Full parametrization record at θ; valued fields are NaN off the
    /// physical curve.
    pub fn theta_sample(&self, theta: f64) -> Result<ThetaSample> {
        let disc = self.discriminant(theta)?;
        match self.radial_inner(theta) {
            Some(r) => {
                let x = self.x_from_r(theta, r);
                let rho = if x == 0.0 {
                    f64::NAN
                } else {
                    (r * sin_k(1, theta) / (std::f64::consts::PI * x)).abs()
                };
                Ok(ThetaSample {
                    theta,
                    discriminant: disc,
                    r,
                    x,
                    rho,
                    admissible: true,
                })
            }
            None => Ok(ThetaSample {
                theta,
                discriminant: disc,
                r: f64::NAN,
                x: f64::NAN,
                rho: f64::NAN,
                admissible: false,
            }),
        }
    }

    /// Closed-form spectral edges.
    pub fn support(&self) -> SpectralSupport {
        let m = self.m as f64;
        let e = 1.0 / self.y - 1.0;
        let s = ((m + 1.0) * (m + 1.0) + 4.0 * m * e).sqrt();
        let scale = self.y.powi(self.m as i32 + 1)
            / (2f64.powi(self.m as i32 + 1) * m.powi(self.m as i32));
        let plus =
            scale * (m + 1.0 + 2.0 * e + s) * (m + 1.0 + 2.0 * m * e + s).powi(self.m as i32);
        let minus = if self.y == 1.0 {
            0.0
        } else {
            scale * (m + 1.0 + 2.0 * e - s) * (m + 1.0 + 2.0 * m * e - s).powi(self.m as i32)
        };
        SpectralSupport {
            x_minus: minus,
            x_plus: plus,
        }
    }

    /// Coefficients of the resolvent polynomial in W at spectral argument z:
    /// y^M W^{M+1} + y^M (1 − 1/y) W^M − z W + z/y.
    fn w_poly(&self, z: f64) -> Vec<Complex64> {
        let deg = self.m as usize + 1;
        let ym = self.y.powi(self.m as i32);
        let mut c = vec![Complex64::new(0.0, 0.0); deg + 1];
        c[deg] = Complex64::new(ym, 0.0);
        c[deg - 1] = Complex64::new(ym * (1.0 - 1.0 / self.y), 0.0);
        c[1] += Complex64::new(-z, 0.0);
        c[0] += Complex64::new(z / self.y, 0.0);
        c
    }

    /// Defect of the resolvent equation at (W, z).
    pub fn resolvent_residual(&self, w: Complex64, z: f64) -> f64 {
        let ym = self.y.powi(self.m as i32);
        let lhs = ym * (w + 1.0 - 1.0 / self.y) * w.powu(self.m) - (w - 1.0 / self.y) * z;
        lhs.norm()
    }

    /// Physical upper-half-plane root of the resolvent polynomial at real
    /// z inside the open support. For M ≥ 3 the polynomial carries further
    /// upper-half-plane roots; the physical one is the root with
    /// arg W ≤ θ_1, an exact selector because the polynomial is linear in
    /// z (a root value belongs to exactly one z, so a spurious root cannot
    /// reproduce a curve point).
    pub fn resolvent_root(&self, z: f64) -> Result<ResolventRoot> {
        let sup = self.support();
        if !(z > sup.x_minus && z < sup.x_plus) {
            return Err(Error::Domain(format!(
                "spectral argument {z} outside the open support ({}, {})",
                sup.x_minus, sup.x_plus
            )));
        }
        let all = roots::all_roots(&self.w_poly(z))?;
        let t1 = self.first_tangency();
        let mut genuine: Vec<Complex64> = all
            .iter()
            .copied()
            .filter(|w| w.im > 1e-10 * (1.0 + w.norm()) && w.arg() <= t1 + 1e-9)
            .collect();
        genuine.sort_by(|p, q| p.arg().total_cmp(&q.arg()));
        let Some(&w) = genuine.first() else {
            return Err(Error::BranchTracking(format!(
                "no physical upper-half-plane resolvent root at z = {z}"
            )));
        };
        let residual = self.resolvent_residual(w, z);
        if residual > 1e-10 * (1.0 + z.abs()) {
            return Err(Error::BranchTracking(format!(
                "resolvent residual {residual:.3e} too large at z = {z}"
            )));
        }
        let edge_dist = (z - sup.x_minus).min(sup.x_plus - z);
        Ok(ResolventRoot {
            z,
            w,
            g: (w + 1.0 - 1.0 / self.y) / z,
            residual,
            edge_proximal: edge_dist < 1e-9,
        })
    }

    /// Density at x by the resolvent-root ground truth; zero off support.
    pub fn density_at(&self, x: f64) -> Result<f64> {
        let sup = self.support();
        if x <= sup.x_minus || x >= sup.x_plus {
            return Ok(0.0);
        }
        let root = self.resolvent_root(x)?;
        Ok(root.w.im / (std::f64::consts::PI * x))
    }

    /// n angles spread over the two curve components, proportionally to
    /// length, inset from the component boundaries.
    pub fn admissible_thetas(&self, n: usize) -> Vec<f64> {
        let comps = self.curve_components();
        let total: f64 = comps.iter().map(|(s, e)| e - s).sum();
        if total <= 0.0 || n == 0 {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(n);
        let mut assigned = 0usize;
        for (i, (s, e)) in comps.iter().enumerate() {
            let len = e - s;
            let share = if i + 1 == comps.len() {
                n - assigned
            } else {
                (((len / total) * n as f64).round() as usize).min(n - assigned)
            };
            let inset = 1e-3 * len;
            for j in 0..share {
                out.push(s + inset + (len - 2.0 * inset) * (j as f64 + 0.5) / share.max(1) as f64);
            }
            assigned += share;
            if assigned >= n {
                break;
            }
        }
        out
    }

    /// The angle parametrizing a given spectral coordinate, seeded from the
    /// argument ψ of the physical resolvent root and polished by bisection
    /// within its curve component. The rising component takes θ = ψ, the
    /// falling one θ = π − ψ; when both reproduce x (the component
    /// junction, or the mirrored cover at y = 1) the smaller angle wins.
    pub fn theta_of_x(&self, x0: f64) -> Result<f64> {
        let sup = self.support();
        if !(x0 > sup.x_minus && x0 < sup.x_plus) {
            return Err(Error::Domain(format!(
                "spectral argument {x0} outside the open support ({}, {})",
                sup.x_minus, sup.x_plus
            )));
        }
        let root = self.resolvent_root(x0)?;
        let psi = root.w.arg();
        let [c1, c2] = self.curve_components();
        let x_tol = 1e-12 * (1.0 + x0);
        let candidates = [(psi, c1), (std::f64::consts::PI - psi, c2)];
        for (cand, (lo, hi)) in candidates {
            let lo = lo.max(1e-12);
            let hi = hi.min(std::f64::consts::PI - 1e-12);
            let seed = cand.clamp(lo, hi);
            let Ok(x_seed) = self.x_of_theta(seed) else {
                continue;
            };
            if (x_seed - x0).abs() > 1e-5 * (1.0 + x0) {
                continue;
            }
            let theta = self.polish_theta(seed, x0, lo, hi);
            if let Ok(x_fin) = self.x_of_theta(theta) {
                if (x_fin - x0).abs() <= x_tol {
                    return Ok(theta);
                }
            }
        }
        Err(Error::BranchTracking(format!(
            "could not locate a parametrization angle for x = {x0}"
        )))
    }

    /// Monotone bisection of x(θ) − x0 inside a curve component; x(θ) is
    /// decreasing on each component.
    fn polish_theta(&self, seed: f64, x0: f64, lo: f64, hi: f64) -> f64 {
        let eval = |t: f64| self.x_of_theta(t).unwrap_or(f64::NAN) - x0;
        let tol = 1e-13 * (1.0 + x0);
        let f_seed = eval(seed);
        if f_seed.abs() <= tol || f_seed.is_nan() {
            return seed;
        }
        // expand a bracket around the seed; decreasing x means the sign of
        // x(t) − x0 goes from + on the left to − on the right
        let mut a = seed;
        let mut b = seed;
        let mut fa = f_seed;
        let mut fb = f_seed;
        let mut h = 1e-9 * (hi - lo);
        while fa < 0.0 && a > lo {
            a = (a - h).max(lo);
            fa = eval(a);
            h *= 4.0;
        }
        h = 1e-9 * (hi - lo);
        while fb > 0.0 && b < hi {
            b = (b + h).min(hi);
            fb = eval(b);
            h *= 4.0;
        }
        if !(fa >= 0.0) || !(fb <= 0.0) {
            return seed;
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid == a || mid == b {
                break;
            }
            let fm = eval(mid);
            if fm.abs() <= tol {
                return mid;
            }
            if fm > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// ∫ f(x) ρ(x) dx over the support, with substitutions that remove the
    /// edge behavior: x = x_− + u^2 (soft left edge), x = u^{M+1} (hard
    /// left edge at y = 1), x = x_+ − u^2 (right edge).
    pub fn integrate_against<F: Fn(f64) -> f64>(&self, f: F, tol: f64) -> Result<(f64, f64)> {
        let sup = self.support();
        let mid = 0.5 * (sup.x_minus + sup.x_plus);
        let dens = |x: f64| self.density_at(x).unwrap_or(f64::NAN);
        let (left, el) = if self.y == 1.0 {
            let p = self.m as i32 + 1;
            let u_hi = mid.powf(1.0 / p as f64);
            quad::integrate(
                |u| {
                    let x = u.powi(p);
                    f(x) * dens(x) * (p as f64) * u.powi(p - 1)
                },
                0.0,
                u_hi,
                0.5 * tol,
            )?
        } else {
            let u_hi = (mid - sup.x_minus).sqrt();
            quad::integrate(
                |u| {
                    let x = sup.x_minus + u * u;
                    f(x) * dens(x) * 2.0 * u
                },
                0.0,
                u_hi,
                0.5 * tol,
            )?
        };
        let u_hi = (sup.x_plus - mid).sqrt();
        let (right, er) = quad::integrate(
            |u| {
                let x = sup.x_plus - u * u;
                f(x) * dens(x) * 2.0 * u
            },
            0.0,
            u_hi,
            0.5 * tol,
        )?;
        Ok((left + right, el + er))
    }

    /// Distribution function ∫_{x_−}^{x} ρ, clamped to the support.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let sup = self.support();
        if x <= sup.x_minus {
            return Ok(0.0);
        }
        let xc = x.min(sup.x_plus);
        let mid = 0.5 * (sup.x_minus + sup.x_plus);
        let dens = |t: f64| self.density_at(t).unwrap_or(f64::NAN);
        let tol = 1e-10;
        let stop = xc.min(mid);
        let mut acc;
        if self.y == 1.0 {
            let p = self.m as i32 + 1;
            let u_hi = stop.powf(1.0 / p as f64);
            let (v, _) = quad::integrate(
                |u| {
                    let t = u.powi(p);
                    dens(t) * (p as f64) * u.powi(p - 1)
                },
                0.0,
                u_hi,
                tol,
            )?;
            acc = v;
        } else {
            let u_hi = (stop - sup.x_minus).sqrt();
            let (v, _) = quad::integrate(
                |u| {
                    let t = sup.x_minus + u * u;
                    dens(t) * 2.0 * u
                },
                0.0,
                u_hi,
                tol,
            )?;
            acc = v;
        }
        if xc > mid {
            let u_lo = (sup.x_plus - xc).sqrt();
            let u_hi = (sup.x_plus - mid).sqrt();
            let (v, _) = quad::integrate(
                |u| {
                    let t = sup.x_plus - u * u;
                    dens(t) * 2.0 * u
                },
                u_lo,
                u_hi,
                tol,
            )?;
            acc += v;
        }
        Ok(acc)
    }

    /// k-th moment of the limiting law by quadrature.
    pub fn moment(&self, k: u32) -> Result<f64> {
        if k > 12 {
            return Err(Error::InvalidParameter(format!(
                "moment order must be at most 12, got {k}"
            )));
        }
        let (v, _) = self.integrate_against(|x| x.powi(k as i32), 1e-10)?;
        Ok(v)
    }

    /// Saddle-point data at the parametrized point q(θ) = r(θ)e^{iθ} − 1/y.
    /// The stationarity defect g_prime is the principal log of the combined
    /// product (q+1)(q+1/y)^M y^M / (q x(θ)), which equals 1 exactly on the
    /// curve; evaluating the product before taking one log avoids spurious
    /// 2πi offsets from summing per-factor principal logs.
    pub fn saddle(&self, theta: f64) -> Result<SaddleData> {
        let r = self.radial(theta)?;
        let x = self.x_from_r(theta, r);
        if !(x > 0.0) {
            return Err(Error::InadmissibleAngle {
                theta,
                discriminant: self.discriminant(theta)?,
            });
        }
        let m = self.m as f64;
        let yi = 1.0 / self.y;
        let q = Complex64::from_polar(
            r.abs(),
            if r >= 0.0 {
                theta
            } else {
                theta - std::f64::consts::PI
            },
        ) - yi;
        let one = Complex64::new(1.0, 0.0);
        let g_value = (q + one) * ((q + one).ln() - 1.0) + m * (q + yi) * ((q + yi).ln() - 1.0)
            - q * (q.ln() - 1.0)
            + m * q * self.y.ln()
            - q * x.ln();
        let product = (q + one) * (q + yi).powu(self.m) * self.y.powi(self.m as i32) / (q * x);
        let g_prime = product.ln();
        let g_double_prime = one / (q + one) + m / (q + yi) - one / q;
        Ok(SaddleData {
            theta,
            q,
            g_value,
            g_prime,
            g_double_prime,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mp(m: u32, y: f64) -> ModelParams {
        ModelParams::new(m, y).unwrap()
    }

    /// Closed-form M=1 oracle: the sample-covariance law with aspect y.
    fn mp_density(y: f64, x: f64) -> f64 {
        let lo = (1.0 - y.sqrt()).powi(2);
        let hi = (1.0 + y.sqrt()).powi(2);
        if x <= lo || x >= hi {
            return 0.0;
        }
        ((hi - x) * (x - lo)).sqrt() / (2.0 * PI * y * x)
    }

    #[test]
    fn discriminant_matches_hand_values() {
        assert!((mp(1, 1.0).discriminant(PI / 4.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((mp(1, 0.5).discriminant(PI / 2.0).unwrap() + 8.0).abs() < 1e-12);
        assert!(mp(1, 0.5).discriminant(PI / 4.0).unwrap().abs() < 1e-12);
        assert!(mp(1, 0.5).discriminant(0.0).is_err());
        assert!(mp(1, 0.5).discriminant(PI).is_err());
    }

    #[test]
    fn reflected_trig_is_accurate_near_pi() {
        // frozen multiprecision values of sin(kθ), cos(kθ) at the exact
        // double θ = fl(fl(π) − 1e-9); the true distance to π is
        // 1.0000002052050509e-9, not 1e-9, because the subtraction rounds.
        // naive f64 evaluation of sin(kθ) loses ~7 digits here whenever
        // the product kθ itself rounds
        let theta = PI - 1e-9;
        let cases = [
            (1u32, 1.000000205205050913659e-9),
            (4, -4.000000820820203644636e-9),
            (5, 5.000001026025254548295e-9),
        ];
        for (k, want) in cases {
            let got = sin_k(k, theta);
            assert!(
                ((got - want) / want).abs() < 1e-14,
                "sin({k}θ): got {got:e}, want {want:e}"
            );
        }
        assert!((cos_k(2, theta) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn radial_matches_hand_values() {
        // square case reduces to a sine ratio
        assert!((mp(1, 1.0).radial(PI / 3.0).unwrap() - 1.0).abs() < 1e-14);
        // tangency point of the rectangular case
        assert!((mp(1, 0.5).radial(PI / 4.0).unwrap() - 2f64.sqrt()).abs() < 1e-7);
        // near the left endpoint of the angle range
        assert!((mp(2, 1.0).radial(1e-9).unwrap() - 1.5).abs() < 1e-9);
        // inadmissible middle window errors with the discriminant attached
        match mp(1, 0.5).radial(PI / 2.0) {
            Err(Error::InadmissibleAngle { discriminant, .. }) => {
                assert!((discriminant + 8.0).abs() < 1e-12)
            }
            other => panic!("expected inadmissible angle, got {other:?}"),
        }
    }

    #[test]
    fn first_tangency_reference_values() {
        assert!((mp(1, 0.5).first_tangency() - PI / 4.0).abs() < 1e-12);
        assert!((mp(2, 0.5).first_tangency() - 0.54802840762031274).abs() < 1e-12);
        assert!((mp(3, 0.75).first_tangency() - 0.56782937292864397).abs() < 1e-12);
        assert!((mp(2, 1.0).first_tangency() - PI / 3.0).abs() < 1e-15);
        // the junction point of (3, 0.75) sits at exactly x = 1/16 with
        // radius 2/3
        let p = mp(3, 0.75);
        let t1 = p.first_tangency();
        assert!((p.radial(t1).unwrap() - 2.0 / 3.0).abs() < 1e-7);
        assert!((p.x_of_theta(t1).unwrap() - 0.0625).abs() < 1e-7);
    }

    #[test]
    fn spurious_discriminant_windows_are_off_curve() {
        // (3, 0.75) has a positive-discriminant window in the middle of
        // (0, π) that parametrizes a non-physical root pair; the curve API
        // must reject it
        let p = mp(3, 0.75);
        let theta = 2.167;
        assert!(p.discriminant(theta).unwrap() > 0.0);
        assert!(matches!(
            p.radial(theta),
            Err(Error::InadmissibleAngle { .. })
        ));
        let s = p.theta_sample(theta).unwrap();
        assert!(!s.admissible && s.discriminant > 0.0 && s.r.is_nan());
        // square case with three factors has the same phenomenon
        let p = mp(3, 1.0);
        assert!(matches!(
            p.radial(0.9),
            Err(Error::InadmissibleAngle { .. })
        ));
    }

    #[test]
    fn resolvent_root_selects_physical_pair() {
        // at (3, 0.75), x = 1 the polynomial has two upper-half-plane
        // roots; the physical one has the smaller argument
        let p = mp(3, 0.75);
        let root = p.resolvent_root(1.0).unwrap();
        let want = Complex64::new(1.0449740966839856, 0.5352432303532068);
        assert!((root.w - want).norm() < 1e-9, "got {}", root.w);
        // density from the spurious pair would be several times larger
        let rho = p.density_at(1.0).unwrap();
        assert!((rho - want.im / PI).abs() < 1e-10);
    }

    #[test]
    fn endpoint_radial_values() {
        let (r0, rpi) = mp(1, 1.0).endpoints_r();
        assert!((r0 - 2.0).abs() < 1e-14 && rpi.abs() < 1e-14);
        let (r0, rpi) = mp(1, 0.5).endpoints_r();
        assert!((r0 - (2.0 + 2f64.sqrt())).abs() < 1e-13);
        assert!((rpi - (-2.0 + 2f64.sqrt())).abs() < 1e-13);
        let (r0, rpi) = mp(2, 1.0).endpoints_r();
        assert!((r0 - 1.5).abs() < 1e-14 && rpi.abs() < 1e-14);
        for (m, y) in [(1, 0.5), (2, 0.75), (3, 0.6), (4, 1.0), (2, 0.5), (4, 0.3)] {
            let p = mp(m, y);
            let (r0, rpi) = p.endpoints_r();
            assert!(
                (p.radial(1e-8).unwrap() - r0).abs() < 1e-7,
                "r(0) mismatch at M={m}, y={y}"
            );
            if y < 1.0 {
                // the falling component ends at the closed-form r(π), and
                // the two ends are tied by r(π) = −(1/y − 1)/(y r(0))
                assert!(
                    (p.radial(PI - 1e-8).unwrap() - rpi).abs() < 1e-7,
                    "r(pi) mismatch at M={m}, y={y}"
                );
                let tie = -(1.0 / y - 1.0) / (y * r0);
                assert!((rpi - tie).abs() < 1e-12, "endpoint tie at M={m}, y={y}");
            } else {
                // square case: the radius vanishes at the hard edge, which
                // sits at the inner component end, and the mirror component
                // repeats the rising one with the sign flipped
                assert_eq!(rpi, 0.0);
                let t1 = p.first_tangency();
                assert!(p.radial(t1 - 1e-8).unwrap().abs() < 1e-6);
                assert!((p.radial(PI - 1e-8).unwrap() + r0).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn x_and_rho_match_hand_values() {
        // square M=1: x = 4cos^2(theta), rho = tan(theta)/(2 pi)
        let p = mp(1, 1.0);
        assert!((p.x_of_theta(PI / 4.0).unwrap() - 2.0).abs() < 1e-13);
        assert!((p.rho_of_theta(PI / 4.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-14);
        let want = (PI / 6.0).tan() / (2.0 * PI);
        assert!((p.rho_of_theta(PI / 6.0).unwrap() - want).abs() < 1e-14);
        // rectangular tangency point carries x = 1/2
        assert!((mp(1, 0.5).x_of_theta(PI / 4.0).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn support_edges_closed_forms() {
        // M=1 equals the sample-covariance edges (1 ± sqrt y)^2
        for y in [0.25, 0.5, 1.0] {
            let s = mp(1, y).support();
            assert!(
                (s.x_minus - (1.0 - y.sqrt()).powi(2)).abs() < 1e-12,
                "y={y}"
            );
            assert!(
                (s.x_plus - (1.0 + y.sqrt()).powi(2)).abs() < 1e-12,
                "y={y}"
            );
        }
        // square case: (M+1)^{M+1}/M^M with hard edge at zero
        for m in 1..=5u32 {
            let s = mp(m, 1.0).support();
            let want = ((m + 1) as f64).powi(m as i32 + 1) / (m as f64).powi(m as i32);
            assert_eq!(s.x_minus, 0.0);
            assert!((s.x_plus - want).abs() < 1e-11 * want, "M={m}");
        }
        // bound chain for rectangular cases
        for m in 1..=4u32 {
            for y in [0.2, 0.5, 0.9] {
                let s = mp(m, y).support();
                let cap = ((m + 1) as f64).powi(m as i32 + 1) / (m as f64).powi(m as i32);
                assert!(
                    0.0 < s.x_minus && s.x_minus < 1.0 && 1.0 < s.x_plus && s.x_plus < cap,
                    "bounds fail at M={m}, y={y}: {s:?}"
                );
            }
        }
    }

    #[test]
    fn edge_consistency_with_parametrization() {
        for (m, y) in [(1, 0.5), (2, 0.5), (3, 0.75), (2, 0.25), (4, 0.3)] {
            let p = mp(m, y);
            let s = p.support();
            let x0 = p.x_of_theta(1e-7).unwrap();
            let xpi = p.x_of_theta(PI - 1e-7).unwrap();
            assert!(
                (x0 - s.x_plus).abs() < 1e-8 * (1.0 + s.x_plus),
                "right edge M={m} y={y}: {x0} vs {}",
                s.x_plus
            );
            assert!(
                (xpi - s.x_minus).abs() < 1e-8 * (1.0 + s.x_plus),
                "left edge M={m} y={y}: {xpi} vs {}",
                s.x_minus
            );
        }
    }

    #[test]
    fn density_matches_marchenko_pastur() {
        for y in [0.25, 0.5, 0.75, 1.0] {
            let p = mp(1, y);
            let s = p.support();
            for i in 1..=40 {
                let x = s.x_minus + 1e-3 + (s.x_plus - s.x_minus - 2e-3) * i as f64 / 41.0;
                let got = p.density_at(x).unwrap();
                let want = mp_density(y, x);
                assert!(
                    (got - want).abs() < 1e-10,
                    "MP mismatch at y={y}, x={x}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn density_explicit_rectangular_point() {
        // quadratic root W = 1 + i at x = 1/2 gives rho = 2/pi
        let got = mp(1, 0.5).density_at(0.5).unwrap();
        assert!((got - 2.0 / PI).abs() < 1e-13, "got {got}");
        let root = mp(1, 0.5).resolvent_root(0.5).unwrap();
        assert!((root.w - Complex64::new(1.0, 1.0)).norm() < 1e-12);
        assert!(root.residual <= 1e-10 * 1.5);
        assert!(!root.edge_proximal);
    }

    #[test]
    fn density_vanishes_off_support_and_at_soft_edge() {
        let p = mp(2, 1.0);
        assert_eq!(p.density_at(27.0 / 4.0).unwrap(), 0.0);
        assert_eq!(p.density_at(10.0).unwrap(), 0.0);
        assert_eq!(p.density_at(-1.0).unwrap(), 0.0);
        // just inside the soft edge the density is tiny but positive
        let eps = p.density_at(27.0 / 4.0 - 1e-6).unwrap();
        assert!(eps > 0.0 && eps < 1e-2);
    }

    #[test]
    fn parametrization_cross_validates_against_root_solve() {
        for (m, y) in [
            (1, 0.5),
            (2, 0.5),
            (3, 0.75),
            (2, 1.0),
            (1, 1.0),
            (4, 0.3),
            (3, 1.0),
        ] {
            let p = mp(m, y);
            let mut checked = 0;
            for t in p.admissible_thetas(200) {
                let x = p.x_of_theta(t).unwrap();
                let sup = p.support();
                if x <= sup.x_minus + 1e-9 || x >= sup.x_plus - 1e-9 {
                    continue;
                }
                let direct = p.density_at(x).unwrap();
                let param = p.rho_of_theta(t).unwrap();
                assert!(
                    (direct - param).abs() <= 1e-9 * (1.0 + param),
                    "cross-validation fail at M={m}, y={y}, theta={t}: {direct} vs {param}"
                );
                checked += 1;
            }
            assert!(
                checked > 150,
                "only {checked} usable angles at M={m}, y={y}"
            );
        }
    }

    #[test]
    fn identity_rho_x_equals_scaled_radial_sine() {
        for (m, y) in [(1, 0.5), (2, 0.5), (3, 0.75), (2, 1.0)] {
            let p = mp(m, y);
            for t in p.admissible_thetas(200) {
                let s = p.theta_sample(t).unwrap();
                assert!(s.admissible);
                let lhs = s.rho * s.x;
                let rhs = (s.r * t.sin()).abs() / PI;
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()),
                    "identity fail at M={m}, y={y}, theta={t}"
                );
            }
        }
    }

    #[test]
    fn curve_components_are_two_edge_pieces() {
        let comps = mp(1, 0.5).curve_components();
        assert!((comps[0].1 - PI / 4.0).abs() < 1e-12);
        assert!((comps[1].0 - 3.0 * PI / 4.0).abs() < 1e-12);
        // radial signs on the two components
        assert!(mp(1, 0.5).radial(0.3).unwrap() > 0.0);
        assert!(mp(1, 0.5).radial(3.0).unwrap() < 0.0);
        // falling component of the square case mirrors the rising one
        let p = mp(2, 1.0);
        let (a, b) = (
            p.theta_sample(0.4).unwrap(),
            p.theta_sample(PI - 0.4).unwrap(),
        );
        assert!(a.admissible && b.admissible);
        assert!((a.x - b.x).abs() < 1e-12 && (a.r + b.r).abs() < 1e-12);
    }

    #[test]
    fn theta_inversion_round_trip() {
        for (m, y) in [(1, 0.5), (2, 0.5), (3, 0.75), (2, 1.0)] {
            let p = mp(m, y);
            for t in p.admissible_thetas(60) {
                let x = p.x_of_theta(t).unwrap();
                let sup = p.support();
                if x <= sup.x_minus + 1e-9 || x >= sup.x_plus - 1e-9 {
                    continue;
                }
                let back = p.theta_of_x(x).unwrap();
                let x_back = p.x_of_theta(back).unwrap();
                assert!(
                    (x_back - x).abs() <= 1e-12 * (1.0 + x),
                    "inversion defect at M={m}, y={y}, theta={t}"
                );
                // for rectangular ratios each x is covered once, so the
                // angle itself comes back; the square case is mirrored
                // two-to-one and pins only x
                if y < 1.0 {
                    assert!((back - t).abs() < 1e-9, "theta mismatch {back} vs {t}");
                }
            }
        }
    }

    #[test]
    fn theta_inversion_hand_values() {
        assert!((mp(1, 1.0).theta_of_x(2.0).unwrap() - PI / 4.0).abs() < 1e-12);
        // the junction between components prefers the rising angle
        assert!((mp(1, 0.5).theta_of_x(0.5).unwrap() - PI / 4.0).abs() < 1e-6);
        let p = mp(1, 0.5);
        let near_edge = p.theta_of_x(p.support().x_plus - 1e-9).unwrap();
        assert!(near_edge > 0.0 && near_edge < 1e-3);
        assert!(p.theta_of_x(20.0).is_err());
    }

    #[test]
    fn normalization_across_parameter_grid() {
        for m in [1u32, 2, 3] {
            for y in [0.25, 0.5, 0.75, 1.0] {
                let total = mp(m, y).moment(0).unwrap();
                assert!(
                    (total - 1.0).abs() <= 1e-8,
                    "normalization fail at M={m}, y={y}: {total}"
                );
            }
        }
    }

    #[test]
    fn cdf_endpoints_and_monotonicity() {
        let p = mp(2, 0.5);
        let s = p.support();
        assert_eq!(p.cdf(s.x_minus - 0.5).unwrap(), 0.0);
        assert!((p.cdf(s.x_plus).unwrap() - 1.0).abs() < 1e-8);
        assert!((p.cdf(s.x_plus + 5.0).unwrap() - 1.0).abs() < 1e-8);
        let mut prev = 0.0;
        for i in 0..=20 {
            let x = s.x_minus + (s.x_plus - s.x_minus) * i as f64 / 20.0;
            let c = p.cdf(x).unwrap();
            assert!(c >= prev - 1e-12, "cdf not monotone at {x}");
            prev = c;
        }
        // square-case hard edge
        assert!((mp(1, 1.0).cdf(4.0).unwrap() - 1.0).abs() < 1e-8);
        assert!((mp(3, 1.0).cdf(1e9).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn moments_match_closed_forms() {
        // mean is always 1, second moment 1 + M y
        for (m, y) in [(1, 0.5), (2, 0.5), (3, 0.75), (2, 1.0)] {
            let p = mp(m, y);
            assert!(
                (p.moment(1).unwrap() - 1.0).abs() < 1e-8,
                "m1 at M={m} y={y}"
            );
            let want = 1.0 + m as f64 * y;
            assert!(
                (p.moment(2).unwrap() - want).abs() < 1e-7,
                "m2 at M={m} y={y}"
            );
        }
        // Fuss-Catalan values for two square factors: C(3k,k)/(2k+1)
        let p = mp(2, 1.0);
        for (k, want) in [(2u32, 3.0), (3, 12.0), (4, 55.0)] {
            let got = p.moment(k).unwrap();
            assert!((got - want).abs() < 1e-6 * want, "k={k}: {got} vs {want}");
        }
        assert!(p.moment(13).is_err());
    }

    #[test]
    fn saddle_stationarity_and_hand_values() {
        // square M=1 at theta = pi/4: q = sqrt2 e^{i pi/4} - 1 = i
        let sd = mp(1, 1.0).saddle(PI / 4.0).unwrap();
        assert!((sd.q - Complex64::new(0.0, 1.0)).norm() < 1e-13);
        assert!(sd.g_prime.norm() <= 1e-12);
        // positive curvature at the rectangular reference angle
        let sd = mp(1, 0.5).saddle(PI / 8.0).unwrap();
        assert!(sd.g_double_prime.re > 0.0);
        // stationarity across the acceptance parameter sets
        for (m, y) in [(1, 0.5), (2, 0.5), (3, 0.75)] {
            let p = mp(m, y);
            for t in p.admissible_thetas(100) {
                let sd = p.saddle(t).unwrap();
                assert!(
                    sd.g_prime.norm() <= 1e-10,
                    "stationarity fail at M={m}, y={y}, theta={t}: {}",
                    sd.g_prime.norm()
                );
            }
        }
    }

    #[test]
    fn reference_angle_values_for_scaled_kernels() {
        // the bulk reference configuration of the finite-size checks
        let p = mp(1, 0.5);
        let r = p.radial(PI / 8.0).unwrap();
        let x = p.x_of_theta(PI / 8.0).unwrap();
        let rho = p.rho_of_theta(PI / 8.0).unwrap();
        assert!((r - 3.0369661800252946).abs() < 1e-12, "r = {r}");
        assert!((x - 2.3057908946543575).abs() < 1e-12, "x = {x}");
        assert!((rho - 0.16043895464063352).abs() < 1e-12, "rho = {rho}");
        // saddle abscissa is positive here, which the kernel contour uses
        let sd = p.saddle(PI / 8.0).unwrap();
        assert!((sd.q.re - 0.80579089465435753).abs() < 1e-12);
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::new(0, 0.5).is_err());
        assert!(ModelParams::new(13, 0.5).is_err());
        assert!(ModelParams::new(1, 0.0).is_err());
        assert!(ModelParams::new(1, 1.0 + 1e-12).is_err());
        assert!(ModelParams::new(1, f64::NAN).is_err());
        assert!(ModelParams::new(1, 1.0).is_ok());
    }
}
