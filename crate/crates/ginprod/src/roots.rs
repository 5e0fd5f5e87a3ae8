//! Simultaneous root finding for complex polynomials of small degree.
//!
//! The spectral-curve and resolvent equations reduce to polynomials of
//! degree M + 1 (M is the number of factors, rarely above 6). All roots are
//! needed at once so the physical branch can be selected afterwards;
//! Aberth's method converges to the full root set simultaneously and does
//! not lose conjugate pairs the way deflation can.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Evaluate p and p' by Horner's rule. `coeffs[k]` multiplies z^k.
fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Running bound on the evaluation error of Horner's rule, used as the
/// "cannot do better" stopping criterion.
fn horner_error_bound(coeffs: &[Complex64], z: Complex64) -> f64 {
    let az = z.norm();
    let mut bound = 0.0;
    for &c in coeffs.iter().rev() {
        bound = bound * az + c.norm();
    }
    bound * f64::EPSILON * 2.0 * coeffs.len() as f64
}

fn quadratic_roots(c0: Complex64, c1: Complex64, c2: Complex64) -> Vec<Complex64> {
    // c2 z^2 + c1 z + c0, stable pairing: z1 = q / c2, z2 = c0 / q
    let disc = (c1 * c1 - 4.0 * c2 * c0).sqrt();
    // pick the sign that avoids cancellation in c1 +/- disc
    let s = if (c1.conj() * disc).re >= 0.0 { disc } else { -disc };
    let q = -0.5 * (c1 + s);
    if q.norm() == 0.0 {
        return vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
    }
    vec![q / c2, c0 / q]
}

/// All complex roots of sum_k coeffs[k] z^k, leading coefficient nonzero
/// after trailing-zero trimming. Exact zero roots from vanishing low-order
/// coefficients are returned as exact zeros.
pub fn all_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut hi = coeffs.len();
    while hi > 0 && coeffs[hi - 1].norm() == 0.0 {
        hi -= 1;
    }
    if hi == 0 {
        return Err(Error::InvalidParameter(
            "zero polynomial has no defined root set".into(),
        ));
    }
    let mut lo = 0;
    while coeffs[lo].norm() == 0.0 {
        lo += 1;
    }
    let mut zero_roots = vec![Complex64::new(0.0, 0.0); lo];
    let c = &coeffs[lo..hi];
    let n = c.len() - 1;
    if n == 0 {
        return Ok(zero_roots);
    }
    if n == 1 {
        zero_roots.push(-c[0] / c[1]);
        return Ok(zero_roots);
    }
    if n == 2 {
        zero_roots.extend(quadratic_roots(c[0], c[1], c[2]));
        return Ok(zero_roots);
    }

    // Cauchy-style radius: 1 + max |c_k / c_n|
    let lead = c[n].norm();
    let radius = 1.0 + c[..n].iter().map(|x| x.norm() / lead).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            // asymmetric phase offset breaks root symmetries
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.6931;
            Complex64::from_polar(radius * (0.5 + 0.3 * (k as f64 / n as f64)), th)
        })
        .collect();

    let mut converged = vec![false; n];
    for _iter in 0..200 {
        let mut all_done = true;
        for i in 0..n {
            if converged[i] {
                continue;
            }
            let (p, dp) = horner(c, z[i]);
            if p.norm() <= horner_error_bound(c, z[i]) {
                converged[i] = true;
                continue;
            }
            let newton = if dp.norm() > 0.0 { p / dp } else { p };
            let mut repulsion = Complex64::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    let d = z[i] - z[j];
                    if d.norm() > 1e-300 {
                        repulsion += 1.0 / d;
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - newton * repulsion;
            let step = if denom.norm() > 1e-12 {
                newton / denom
            } else {
                newton
            };
            z[i] -= step;
            if step.norm() <= 1e-14 * (1.0 + z[i].norm()) {
                converged[i] = true;
            } else {
                all_done = false;
            }
        }
        if all_done {
            break;
        }
    }
    if converged.iter().any(|&c| !c) {
        return Err(Error::BranchTracking(
            "root iteration did not converge for every root".into(),
        ));
    }

    // Newton polish sharpens simple roots to full precision
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(c, *zi);
            if dp.norm() == 0.0 || p.norm() <= horner_error_bound(c, *zi) {
                break;
            }
            *zi -= p / dp;
        }
    }
    zero_roots.extend(z);
    Ok(zero_roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn expand(roots: &[Complex64]) -> Vec<Complex64> {
        let mut coeffs = vec![c(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![c(0.0, 0.0); coeffs.len() + 1];
            for (k, &ck) in coeffs.iter().enumerate() {
                next[k + 1] += ck;
                next[k] -= ck * r;
            }
            coeffs = next;
        }
        coeffs
    }

    /// Greedy closest-pair matching; returns the largest match distance.
    fn match_roots(got: &[Complex64], want: &[Complex64]) -> f64 {
        assert_eq!(got.len(), want.len());
        let mut used = vec![false; got.len()];
        let mut worst: f64 = 0.0;
        for &w in want {
            let (best, dist) = got
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .map(|(i, g)| (i, (g - w).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            used[best] = true;
            worst = worst.max(dist);
        }
        worst
    }

    #[test]
    fn integer_roots_recovered() {
        let want: Vec<Complex64> = (1..=5).map(|k| c(k as f64, 0.0)).collect();
        let got = all_roots(&expand(&want)).unwrap();
        assert!(match_roots(&got, &want) < 1e-10);
    }

    #[test]
    fn conjugate_pair_and_real_root() {
        let want = vec![c(1.0, 2.0), c(1.0, -2.0), c(-3.0, 0.0)];
        let got = all_roots(&expand(&want)).unwrap();
        assert!(match_roots(&got, &want) < 1e-12);
    }

    #[test]
    fn quadratic_avoids_cancellation() {
        // z^2 - 1e8 z + 1: roots ~1e8 and ~1e-8
        let got = all_roots(&[c(1.0, 0.0), c(-1e8, 0.0), c(1.0, 0.0)]).unwrap();
        let small = got.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        assert!(
            (small - 1e-8).abs() < 1e-20,
            "small root lost to cancellation: {small}"
        );
    }

    #[test]
    fn double_root_cluster() {
        let want = vec![c(1.0, 0.0), c(1.0, 0.0), c(-2.0, 0.0)];
        let got = all_roots(&expand(&want)).unwrap();
        // double roots are only sqrt(eps)-determined individually
        assert!(match_roots(&got, &want) < 1e-6);
        let mean: Complex64 = got
            .iter()
            .filter(|z| (**z - c(1.0, 0.0)).norm() < 0.5)
            .sum::<Complex64>()
            / 2.0;
        // the pair mean cancels most of the sqrt(eps) splitting error
        assert!((mean - c(1.0, 0.0)).norm() < 1e-7, "cluster mean {mean}");
    }

    #[test]
    fn vanishing_low_order_coefficients_give_exact_zero_roots() {
        // z^2 (z - 4)
        let got = all_roots(&[c(0.0, 0.0), c(0.0, 0.0), c(-4.0, 0.0), c(1.0, 0.0)]).unwrap();
        let zeros = got.iter().filter(|z| z.norm() == 0.0).count();
        assert_eq!(zeros, 2);
        assert!(got.iter().any(|z| (z - c(4.0, 0.0)).norm() < 1e-13));
    }

    #[test]
    fn zero_polynomial_rejected() {
        assert!(all_roots(&[c(0.0, 0.0); 3]).is_err());
    }

    proptest! {
        #[test]
        fn random_separated_roots_recovered(
            seeds in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 3..=7)
        ) {
            // push roots apart to keep the problem well conditioned
            let mut roots: Vec<Complex64> = Vec::new();
            for (re, im) in seeds {
                let cand = c(re, im);
                if roots.iter().all(|r| (r - cand).norm() > 0.35) {
                    roots.push(cand);
                }
            }
            prop_assume!(roots.len() >= 3);
            let got = all_roots(&expand(&roots)).unwrap();
            prop_assert!(match_roots(&got, &roots) < 1e-8);
        }

        #[test]
        fn roots_satisfy_polynomial(
            coeffs in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 4..=8)
        ) {
            let cs: Vec<Complex64> = coeffs.iter().map(|&(r, i)| c(r, i)).collect();
            prop_assume!(cs.last().unwrap().norm() > 0.05);
            prop_assume!(cs[0].norm() > 0.05);
            if let Ok(roots) = all_roots(&cs) {
                for z in roots {
                    let (p, _) = horner(&cs, z);
                    let scale: f64 = cs.iter().map(|x| x.norm()).sum::<f64>()
                        * (1.0 + z.norm()).powi(cs.len() as i32 - 1);
                    prop_assert!(p.norm() < 1e-9 * scale, "residual {} at {}", p.norm(), z);
                }
            }
        }
    }
}
