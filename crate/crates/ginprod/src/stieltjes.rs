//! Resolvent of the limiting law for factors with distinct aspect ratios
//! y_l: branch-tracked solution G(z) of the algebraic equation
//!
//! ```text
//! 1 − zG + G · Π_l (1 − y_l + z y_l G) = 0,
//! ```
//!
//! density by Stieltjes inversion with fixed ε-extrapolation, and a formal
//! power-series moment oracle.
//!
//! Sign convention: the equation normalizes G ~ +1/z at infinity, which is
//! the transform ∫ dμ(t)/(z − t); its imaginary part is negative in the
//! upper half plane (sign(Im G) = −sign(Im z)), and the density is
//! recovered as |Im G(x + i0)|/π. The physical branch is the one analytic
//! continuation of the 1/z asymptote, found by homotopy from a base point
//! far above the support; local Im-sign filtering is not used because
//! several roots can share a half plane at one z.

use crate::error::{Error, Result};
use crate::quad;
use crate::roots;
use num_complex::Complex64;

/// Limiting model with per-factor ratios y_l = lim N/N_l.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralParams {
    pub ratios: Vec<f64>,
}

/// One branch-tracked resolvent value.
#[derive(Debug, Clone, Copy)]
pub struct StieltjesValue {
    pub z: Complex64,
    pub g: Complex64,
    /// |1 − zG + G·Π_l(1 − y_l + z y_l G)|, bounded by 1e-10·(1+|z|)^{M+1}.
    pub residual: f64,
}

/// ε-steps of the inversion extrapolation; fixed so density values are
/// reproducible. The three-point Richardson combination below removes the
/// ε and ε² terms of Im G(x + iε) exactly.
pub const INVERSION_EPS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];

impl GeneralParams {
    pub fn new(ratios: Vec<f64>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::InvalidParameter(
                "ratio list must be nonempty".into(),
            ));
        }
        if ratios.len() > 12 {
            return Err(Error::InvalidParameter(format!(
                "at most 12 factors supported, got {}",
                ratios.len()
            )));
        }
        for &y in &ratios {
            if !(y > 0.0 && y <= 1.0) || !y.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "every ratio must lie in (0, 1], got {y}"
                )));
            }
        }
        Ok(GeneralParams { ratios })
    }

    pub fn factor_count(&self) -> usize {
        self.ratios.len()
    }

    /// Upper bound on the support: the product of the per-factor
    /// sample-covariance norms Π_l (1 + √y_l)². Not tight for M ≥ 2.
    pub fn upper_support_estimate(&self) -> f64 {
        self.ratios
            .iter()
            .map(|y| (1.0 + y.sqrt()).powi(2))
            .product()
    }

    /// Exact left-hand side 1 − zG + G·Π_l(1 − y_l + z y_l G).
    pub fn resolvent_residual(&self, z: Complex64, g: Complex64) -> Complex64 {
        let mut prod = Complex64::new(1.0, 0.0);
        for &y in &self.ratios {
            prod *= 1.0 - y + z * y * g;
        }
        1.0 - z * g + g * prod
    }

    /// Coefficients (ascending) of the degree-(M+1) polynomial in G whose
    /// roots are the resolvent branches at z, expanded exactly from the
    /// product by convolution with the linear factors (1 − y_l) + (z y_l)G.
    fn g_poly(&self, z: Complex64) -> Vec<Complex64> {
        let m = self.ratios.len();
        let mut prod = vec![Complex64::new(0.0, 0.0); m + 1];
        prod[0] = Complex64::new(1.0, 0.0);
        let mut deg = 0;
        for &y in &self.ratios {
            let a0 = Complex64::new(1.0 - y, 0.0);
            let a1 = z * y;
            for j in (0..=deg).rev() {
                let p = prod[j];
                prod[j + 1] += p * a1;
                prod[j] = p * a0;
            }
            deg += 1;
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); m + 2];
        coeffs[0] = Complex64::new(1.0, 0.0);
        coeffs[1] = prod[0] - z;
        for j in 1..=m {
            coeffs[j + 1] = prod[j];
        }
        coeffs
    }

    fn residual_budget(&self, z: Complex64) -> f64 {
        1e-10 * (1.0 + z.norm()).powi(self.ratios.len() as i32 + 1)
    }

    /// Branch-tracked resolvent at z with Im z ≠ 0. All M+1 roots are
    /// computed at a base point of radius r₀ = 10(1 + support bound),
    /// where the physical branch is the root nearest 1/z₀: the non-physical
    /// roots scale as |z₀|^(-(M-1)/(M)+...) there, a factor ≥ r₀^(1/M)
    /// larger in magnitude, while the physical root is within O(1/r₀²) of
    /// the seed. The branch is then continued to z. Targets inside radius
    /// r₀ take a straight path from i·sign(Im z)·r₀ that never crosses the
    /// real axis; targets beyond r₀ take the ray through z itself, with the
    /// radius growing geometrically so no step changes |z| by more than
    /// 25% (a straight path would leap several decades of |z| in one step
    /// and can land nearer a non-physical root than the physical one).
    /// A step is accepted only when the nearest root at the new point is
    /// unambiguous (closer than 0.45× the second-nearest); near a root
    /// collision the step is halved, and persistent failure reports a
    /// branch-tracking error. The residual check at the end guards the
    /// root solve, not the branch choice: every non-physical branch is an
    /// exact root too, so branch correctness rests on the tracking.
    pub fn solve_g(&self, z: Complex64) -> Result<StieltjesValue> {
        if z.im == 0.0 || !z.is_finite() {
            return Err(Error::Domain(format!(
                "resolvent requires Im z != 0, got z = {z}"
            )));
        }
        let r0 = 10.0 * (1.0 + self.upper_support_estimate());
        let outward = z.norm() > r0;
        let z0 = if outward {
            Complex64::from_polar(r0, z.arg())
        } else {
            Complex64::new(0.0, r0 * z.im.signum())
        };
        let seed = 1.0 / z0;
        let base = roots::all_roots(&self.g_poly(z0))?;
        let mut g = *base
            .iter()
            .min_by(|p, q| (*p - seed).norm().total_cmp(&(*q - seed).norm()))
            .expect("degree >= 2 polynomial has roots");
        if (g - seed).norm() > 2.0 / r0 {
            return Err(Error::BranchTracking(format!(
                "asymptotic branch not found at base point {z0}"
            )));
        }

        let log_ratio = (z.norm() / r0).ln();
        let h_cap = if outward {
            (0.25f64.ln_1p() / log_ratio).min(1.0 / 32.0)
        } else {
            1.0 / 32.0
        };
        let path = |s: f64| -> Complex64 {
            if s >= 1.0 {
                z
            } else if outward {
                Complex64::from_polar(r0 * (log_ratio * s).exp(), z.arg())
            } else {
                z0 + s * (z - z0)
            }
        };
        let mut s = 0.0f64;
        let mut h = h_cap;
        while s < 1.0 {
            let s_next = (s + h).min(1.0);
            let all = roots::all_roots(&self.g_poly(path(s_next)))?;
            let mut d1 = f64::INFINITY;
            let mut d2 = f64::INFINITY;
            let mut nearest = g;
            for &w in &all {
                let d = (w - g).norm();
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                    nearest = w;
                } else if d < d2 {
                    d2 = d;
                }
            }
            if d1 <= 0.45 * d2 {
                g = nearest;
                s = s_next;
                h = (h * 1.4).min(h_cap);
            } else {
                h *= 0.5;
                if h < 1e-10 {
                    return Err(Error::BranchTracking(format!(
                        "root collision on the continuation path near s = {s} for z = {z}"
                    )));
                }
            }
        }

        let residual = self.resolvent_residual(z, g).norm();
        if residual > self.residual_budget(z) {
            return Err(Error::BranchTracking(format!(
                "tracked branch residual {residual:.3e} exceeds budget at z = {z}"
            )));
        }
        Ok(StieltjesValue { z, g, residual })
    }

    /// Density at x > 0 by Stieltjes inversion: Richardson extrapolation
    /// of |Im G(x + iε)|/π over the fixed ε-steps, eliminating the ε and
    /// ε² terms. Nonnegative; ≈ 0 off the support.
    pub fn density_from_inversion(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!(
                "inversion point must be positive, got {x}"
            )));
        }
        let mut f = [0.0f64; 3];
        for (i, &eps) in INVERSION_EPS.iter().enumerate() {
            f[i] = self.solve_g(Complex64::new(x, eps))?.g.im.abs();
        }
        let extrapolated = f[0] / 3.0 - 2.0 * f[1] + (8.0 / 3.0) * f[2];
        Ok((extrapolated / std::f64::consts::PI).max(0.0))
    }

    /// Moments m_0..m_K of the limiting law by order-by-order matching of
    /// the formal series G = Σ m_k z^{−k−1} in the defining equation: with
    /// A(u) = Σ m_k u^k (u = 1/z) the equation reads
    /// 1 − A + u·A·Π_l(1 − y_l + y_l A) = 0, so m_0 = 1 and
    /// m_n = [u^{n−1}] A·Π_l(1 − y_l + y_l A), a closed recursion.
    pub fn moments_series(&self, k_max: u32) -> Result<Vec<f64>> {
        if k_max > 12 {
            return Err(Error::InvalidParameter(format!(
                "moment order must be at most 12, got {k_max}"
            )));
        }
        let kk = k_max as usize;
        let mut m = Vec::with_capacity(kk + 1);
        m.push(1.0f64);
        for n in 1..=kk {
            // B = A·Π(1−y_l+y_l A) truncated to u^{n−1}, using m_0..m_{n−1}
            let len = n;
            let mut b = vec![0.0f64; len];
            b[..m.len().min(len)].copy_from_slice(&m[..m.len().min(len)]);
            for &y in &self.ratios {
                // multiply by (1−y) + y·A, truncated
                let mut next = vec![0.0f64; len];
                for j in 0..len {
                    next[j] += b[j] * (1.0 - y);
                    for (i, &mi) in m.iter().enumerate().take(len - j) {
                        next[j + i] += b[j] * y * mi;
                    }
                }
                b = next;
            }
            m.push(b[n - 1]);
        }
        Ok(m)
    }

    /// k-th moment of the inversion-defined measure, computed as the
    /// contour integral (1/π)∫₀^π Re(z^{k+1} G(z)) dφ over the half circle
    /// z = R e^{iφ} enclosing the support (the lower half follows from
    /// G(conj z) = conj G(z)). Mathematically identical to the interval
    /// quadrature of the inverted density but free of the ε-extrapolation
    /// bias that dominates near the spectral edges.
    pub fn moment_contour(&self, k: u32) -> Result<f64> {
        if k > 12 {
            return Err(Error::InvalidParameter(format!(
                "moment order must be at most 12, got {k}"
            )));
        }
        let radius = 1.0 + 1.05 * self.upper_support_estimate();
        let tol = 1e-13 * radius.powi(k as i32 + 1);
        let mut failure: Option<Error> = None;
        let (value, _) = quad::integrate(
            |phi| {
                let z = Complex64::from_polar(radius, phi);
                match self.solve_g(z) {
                    Ok(v) => (z.powu(k + 1) * v.g).re,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            0.0,
            std::f64::consts::PI,
            tol,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(value / std::f64::consts::PI)
    }

    /// Numerically detected support: the outermost interval on which the
    /// inverted density exceeds 1e-6, located on an n-point grid and
    /// refined by bisection. Detection quality is limited by the ε-smearing
    /// of the inversion (edges land within a few 1e-2 of the truth); no
    /// exact-edge claim is made for distinct ratios.
    pub fn detected_support(&self, n: usize) -> Result<(f64, f64)> {
        if n < 8 {
            return Err(Error::InvalidParameter(format!(
                "support scan needs at least 8 grid points, got {n}"
            )));
        }
        const THRESHOLD: f64 = 1e-6;
        let hi = 1.02 * self.upper_support_estimate();
        let grid: Vec<f64> = (0..n)
            .map(|i| hi * (i as f64 + 0.5) / n as f64)
            .collect();
        let mut first = None;
        let mut last = None;
        for (i, &x) in grid.iter().enumerate() {
            if self.density_from_inversion(x)? > THRESHOLD {
                if first.is_none() {
                    first = Some(i);
                }
                last = Some(i);
            }
        }
        let (Some(i0), Some(i1)) = (first, last) else {
            return Err(Error::Domain(
                "no support detected on the scan grid; increase the grid size".into(),
            ));
        };
        let step = hi / n as f64;
        let refine = |mut below: f64, mut above: f64| -> Result<f64> {
            // density crosses the threshold between below (≤) and above (>)
            for _ in 0..40 {
                let mid = 0.5 * (below + above);
                if self.density_from_inversion(mid)? > THRESHOLD {
                    above = mid;
                } else {
                    below = mid;
                }
            }
            Ok(0.5 * (below + above))
        };
        let left = if i0 == 0 {
            (grid[0] - step).max(1e-12)
        } else {
            refine(grid[i0] - step, grid[i0])?
        };
        let right = refine(grid[i1] + step, grid[i1])?;
        Ok((left, right))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ModelParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn gp(ratios: &[f64]) -> GeneralParams {
        GeneralParams::new(ratios.to_vec()).unwrap()
    }

    #[test]
    fn residual_trivial_and_closed_form() {
        let p = gp(&[0.5, 0.25]);
        let lhs = p.resolvent_residual(Complex64::new(3.0, 1.0), Complex64::new(0.0, 0.0));
        assert!((lhs - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        // square M=1 boundary values G = 1/2 − i·sqrt(4x−x²)/(2x) solve the
        // equation at real x inside (0, 4)
        let p = gp(&[1.0]);
        for x in [0.5f64, 1.0, 2.0, 3.0, 3.9] {
            let g = Complex64::new(0.5, -(4.0 * x - x * x).sqrt() / (2.0 * x));
            let res = p.resolvent_residual(Complex64::new(x, 0.0), g).norm();
            assert!(res <= 1e-12, "x={x}: residual {res:e}");
        }
    }

    #[test]
    fn far_field_asymptote() {
        for ratios in [&[1.0][..], &[0.5, 0.5][..], &[0.25, 0.5, 0.75][..]] {
            let p = gp(ratios);
            for arg in [0.3, 1.2, 2.8, -0.7, -2.2] {
                let z = Complex64::from_polar(1e6, arg);
                let v = p.solve_g(z).unwrap();
                assert!(
                    (v.g - 1.0 / z).norm() <= 10.0 / (1e6 * 1e6),
                    "far field fail at {ratios:?}, z={z}"
                );
                assert!(v.residual <= 1e-10 * (1.0 + z.norm()).powi(ratios.len() as i32 + 1));
            }
        }
    }

    #[test]
    fn herglotz_sign_and_conjugate_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = rng.random_range(1..=4);
            let ratios: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..=1.0)).collect();
            let p = GeneralParams::new(ratios).unwrap();
            let z = Complex64::new(
                rng.random_range(-5.0..15.0),
                rng.random_range(1e-3..10.0),
            );
            let v = p.solve_g(z).unwrap();
            assert!(
                v.g.im < 0.0,
                "transform of a positive measure must have Im G < 0 in the upper half plane, got {} at {z}",
                v.g
            );
            let vc = p.solve_g(z.conj()).unwrap();
            assert!(
                (vc.g - v.g.conj()).norm() <= 1e-12 * (1.0 + v.g.norm()),
                "conjugate symmetry fail at {z}"
            );
        }
    }

    #[test]
    fn mp_inversion_values() {
        let p = gp(&[1.0]);
        // literal boundary probe
        let v = p.solve_g(Complex64::new(2.0, 1e-6)).unwrap();
        assert!((v.g.im.abs() / PI - 1.0 / (2.0 * PI)).abs() < 1e-4);
        // extrapolated inversion against the closed form on a grid
        for x in [0.25, 0.5, 1.0, 2.0, 3.0, 3.5] {
            let got = p.density_from_inversion(x).unwrap();
            let want = (4.0 * x - x * x).sqrt() / (2.0 * PI * x);
            assert!((got - want).abs() < 1e-9, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn equal_ratio_reduction_matches_density_module() {
        for (m, y) in [(2u32, 0.5f64), (3, 0.75)] {
            let gp_params = GeneralParams::new(vec![y; m as usize]).unwrap();
            let dp = ModelParams::new(m, y).unwrap();
            let s = dp.support();
            for i in 1..=25 {
                let x = s.x_minus + (s.x_plus - s.x_minus) * i as f64 / 26.0;
                let inv = gp_params.density_from_inversion(x).unwrap();
                let direct = dp.density_at(x).unwrap();
                assert!(
                    (inv - direct).abs() <= 1e-6,
                    "reduction fail at M={m}, y={y}, x={x}: {inv} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn off_support_inversion_vanishes() {
        for ratios in [&[1.0][..], &[0.5, 0.5][..], &[0.25, 0.5, 0.75][..]] {
            let p = gp(ratios);
            let x = 10.0 * p.upper_support_estimate();
            assert!(p.density_from_inversion(x).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn moment_series_closed_forms() {
        for ratios in [&[0.3][..], &[0.5, 0.5][..], &[0.25, 0.5, 0.75][..]] {
            let p = gp(ratios);
            let m = p.moments_series(2).unwrap();
            assert!((m[0] - 1.0).abs() < 1e-15);
            assert!((m[1] - 1.0).abs() < 1e-15);
            let want = 1.0 + ratios.iter().sum::<f64>();
            assert!((m[2] - want).abs() < 1e-13, "{ratios:?}");
        }
        // three square factors: 1/(3k+1)·C(4k, k) gives 1, 1, 4, 22, 140
        let m = gp(&[1.0, 1.0, 1.0]).moments_series(4).unwrap();
        for (k, want) in [(0usize, 1.0), (1, 1.0), (2, 4.0), (3, 22.0), (4, 140.0)] {
            assert!((m[k] - want).abs() < 1e-11 * want, "k={k}: {} vs {want}", m[k]);
        }
        // two square factors: 1/(2k+1)·C(3k, k) gives 1, 1, 3, 12, 55
        let m = gp(&[1.0, 1.0]).moments_series(4).unwrap();
        for (k, want) in [(2usize, 3.0), (3, 12.0), (4, 55.0)] {
            assert!((m[k] - want).abs() < 1e-11 * want, "k={k}");
        }
        assert!(gp(&[0.5]).moments_series(13).is_err());
    }

    #[test]
    fn contour_moments_match_series() {
        for ratios in [&[1.0][..], &[0.5, 0.5][..], &[0.25, 0.5, 0.75][..]] {
            let p = gp(ratios);
            let series = p.moments_series(6).unwrap();
            for k in 0..=6u32 {
                let got = p.moment_contour(k).unwrap();
                let want = series[k as usize];
                assert!(
                    (got - want).abs() <= 1e-5 * (1.0 + want.abs()),
                    "moment consistency fail at {ratios:?}, k={k}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn moments_match_equal_y_quadrature() {
        // the two independent moment routes agree: quadrature over the
        // equal-ratio density versus the series recursion
        for (m, y) in [(1u32, 0.5f64), (2, 0.5), (2, 1.0)] {
            let series = GeneralParams::new(vec![y; m as usize])
                .unwrap()
                .moments_series(6)
                .unwrap();
            let dp = ModelParams::new(m, y).unwrap();
            for k in 0..=6u32 {
                let quadrature = dp.moment(k).unwrap();
                assert!(
                    (quadrature - series[k as usize]).abs()
                        <= 1e-5 * (1.0 + series[k as usize].abs()),
                    "route mismatch at M={m}, y={y}, k={k}"
                );
            }
        }
    }

    #[test]
    fn permutation_invariance() {
        let z = Complex64::new(1.3, 0.7);
        let a = gp(&[0.25, 0.5, 0.75]).solve_g(z).unwrap().g;
        for perm in [&[0.5, 0.75, 0.25][..], &[0.75, 0.25, 0.5][..]] {
            let b = gp(perm).solve_g(z).unwrap().g;
            assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn detected_support_brackets_equal_y_edges() {
        let p = gp(&[0.5, 0.5]);
        let s = ModelParams::new(2, 0.5).unwrap().support();
        let (lo, hi) = p.detected_support(256).unwrap();
        assert!(
            (lo - s.x_minus).abs() < 0.05 && (hi - s.x_plus).abs() < 0.05,
            "detected ({lo}, {hi}) vs true ({}, {})",
            s.x_minus,
            s.x_plus
        );
    }

    #[test]
    fn parameter_and_domain_validation() {
        assert!(GeneralParams::new(vec![]).is_err());
        assert!(GeneralParams::new(vec![0.0]).is_err());
        assert!(GeneralParams::new(vec![1.1]).is_err());
        assert!(GeneralParams::new(vec![f64::NAN]).is_err());
        assert!(GeneralParams::new(vec![0.5; 13]).is_err());
        let p = gp(&[0.5]);
        assert!(p.solve_g(Complex64::new(2.0, 0.0)).is_err());
        assert!(p.density_from_inversion(0.0).is_err());
        assert!(p.density_from_inversion(-1.0).is_err());
        assert!(p.detected_support(4).is_err());
    }
}

