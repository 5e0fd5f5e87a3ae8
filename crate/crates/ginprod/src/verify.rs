//! Acceptance criteria, runnable as named suites from the CLI and one by
//! one from the integration tests.
//!
//! Every criterion is self-contained: it builds its own models, states its
//! tolerance, measures its own wall time, and enforces its runtime budget.
//! Failures never panic; they come back as a failed result whose detail
//! names the first offending quantity.

use crate::density::ModelParams;
use crate::error::Result;
use crate::kernel::{
    corollary_density_check, kernel_log, laguerre_oracle, scaled_points, sine_limit_check,
    total_mass, ContourConfig, FiniteModel,
};
use crate::montecarlo::{ks_distance, sample_ensemble, EnsembleConfig};
use crate::stieltjes::GeneralParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_8, PI};
use std::time::Instant;

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    /// Worst measured quantity vs its bound, or the first error.
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    /// One fixed-format status line.
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {:<28} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

/// Test hook: corrupts the named criterion's tolerance to force a failure,
/// proving the harness does not pass vacuously. Set GINPROD_VERIFY_BREAK
/// to a criterion id.
fn corruption(id: u32) -> f64 {
    match std::env::var("GINPROD_VERIFY_BREAK") {
        Ok(s) if s.parse() == Ok(id) => 1e-6,
        _ => 1.0,
    }
}

struct Runner {
    id: u32,
    name: &'static str,
    start: Instant,
    budget: f64,
}

impl Runner {
    fn new(id: u32, name: &'static str, budget_seconds: f64) -> Self {
        Runner {
            id,
            name,
            start: Instant::now(),
            budget: budget_seconds,
        }
    }

    /// Wraps the criterion body. `body` returns the worst-case detail
    /// string on success; any error or a prior `fail` marks the criterion
    /// failed. Exceeding the runtime budget fails even if the math passed.
    fn finish(self, body: Result<std::result::Result<String, String>>) -> CriterionResult {
        let seconds = self.start.elapsed().as_secs_f64();
        let (passed, detail) = match body {
            Ok(Ok(d)) => (true, d),
            Ok(Err(d)) => (false, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let (passed, detail) = if passed && seconds > self.budget {
            (
                false,
                format!("{detail}; runtime {seconds:.1}s exceeds {}s", self.budget),
            )
        } else {
            (passed, detail)
        };
        CriterionResult {
            id: self.id,
            name: self.name,
            passed,
            detail,
            seconds,
        }
    }
}

/// Tracks the largest deviation seen and renders `worst/bound`.
struct Worst {
    value: f64,
    at: String,
    bound: f64,
}

impl Worst {
    fn new(bound: f64) -> Self {
        Worst {
            value: 0.0,
            at: String::new(),
            bound,
        }
    }

    fn note(&mut self, dev: f64, at: impl Fn() -> String) {
        if dev > self.value || self.at.is_empty() {
            self.value = dev;
            self.at = at();
        }
    }

    fn conclude(self) -> std::result::Result<String, String> {
        let msg = format!(
            "worst {:.3e} vs bound {:.1e} at {}",
            self.value, self.bound, self.at
        );
        if self.value <= self.bound {
            Ok(msg)
        } else {
            Err(msg)
        }
    }
}

/// Edges against the closed M=1 law.
pub fn criterion_1() -> CriterionResult {
    let r = Runner::new(1, "edges, one-factor oracle", 1.0);
    let tol = 1e-12 * corruption(1);
    let body = (|| -> Result<_> {
        let mut w = Worst::new(tol);
        for y in [0.25f64, 0.5, 1.0] {
            let sup = ModelParams::new(1, y)?.support();
            let lo = (1.0 - y.sqrt()).powi(2);
            let hi = (1.0 + y.sqrt()).powi(2);
            w.note((sup.x_minus - lo).abs(), || format!("x_minus(y={y})"));
            w.note((sup.x_plus - hi).abs(), || format!("x_plus(y={y})"));
        }
        Ok(w.conclude())
    })();
    r.finish(body)
}

/// Square-case edges (M+1)^{M+1}/M^M and a hard edge at zero.
pub fn criterion_2() -> CriterionResult {
    let r = Runner::new(2, "edges, square factors", 1.0);
    let tol = 1e-12 * corruption(2);
    let body = (|| -> Result<_> {
        let mut w = Worst::new(tol);
        for m in 1u32..=5 {
            let sup = ModelParams::new(m, 1.0)?.support();
            let mf = m as f64;
            let hi = (mf + 1.0).powi(m as i32 + 1) / mf.powi(m as i32);
            w.note(sup.x_minus.abs(), || format!("x_minus(M={m})"));
            w.note((sup.x_plus - hi).abs(), || format!("x_plus(M={m})"));
        }
        Ok(w.conclude())
    })();
    r.finish(body)
}

const GRID: [(u32, f64); 12] = [
    (1, 0.25),
    (1, 0.5),
    (1, 0.75),
    (1, 1.0),
    (2, 0.25),
    (2, 0.5),
    (2, 0.75),
    (2, 1.0),
    (3, 0.25),
    (3, 0.5),
    (3, 0.75),
    (3, 1.0),
];

/// Unit mass of the limiting density.
pub fn criterion_3() -> CriterionResult {
    let r = Runner::new(3, "density normalization", 30.0);
    let tol = 1e-8 * corruption(3);
    let body = (|| -> Result<_> {
        let mut w = Worst::new(tol);
        for (m, y) in GRID {
            let params = ModelParams::new(m, y)?;
            let (mass, _) = params.integrate_against(|_| 1.0, 1e-9)?;
            w.note((mass - 1.0).abs(), || format!("(M={m}, y={y})"));
        }
        Ok(w.conclude())
    })();
    r.finish(body)
}

/// rho(theta) x(theta) = |r sin theta| / pi along the curve.
pub fn criterion_4() -> CriterionResult {
    let r = Runner::new(4, "parametrization identity", 5.0);
    let tol = 1e-12 * corruption(4);
    let body = (|| -> Result<_> {
        let mut w = Worst::new(tol);
        for (m, y) in GRID {
            let params = ModelParams::new(m, y)?;
            for t in params.admissible_thetas(200) {
                let s = params.theta_sample(t)?;
                let dev = (s.rho * s.x - (s.r * t.sin()).abs() / PI).abs();
                w.note(dev, || format!("(M={m}, y={y}, theta={t:.4})"));
            }
        }
        Ok(w.conclude())
    })();
    r.finish(body)
}

/// Quadrature moments against the series recursion; Fuss-Catalan at y=1.
pub fn criterion_5() -> CriterionResult {
    let r = Runner::new(5, "moment oracles", 30.0);
    let tol = 1e-5 * corruption(5);
    let body = (|| -> Result<_> {
        let mut w = Worst::new(tol);
        for (m, y) in GRID {
            let params = ModelParams::new(m, y)?;
            let series = GeneralParams::new(vec![y; m as usize])?.moments_series(6)?;
            for k in 0..=6u32 {
                let quad = params.moment(k)?;
                let dev = (quad - series[k as usize]).abs() / series[k as usize].max(1.0);
                w.note(dev, || format!("m_{k}(M={m}, y={y})"));
            }
        }
        // Fuss-Catalan spot values, absolute
        let params = ModelParams::new(2, 1.0)?;
        for (k, want) in [(1u32, 1.0f64), (2, 3.0), (3, 12.0), (4, 55.0)] {
            let dev = (params.moment(k)? - want).abs() / 10.0;
            w.note(dev, || format!("Fuss-Catalan m_{k} (x10 scale)"));
        }
        Ok(w.conclude())
    })();
    r.finish(body)
}

/// Stieltjes inversion against the parametrized density.
pub fn criterion_6() -> CriterionResult {
    let r = Runner::new(6, "inversion cross-check", 60.0);
    let tol = 1e-6 * corruption(6);
    let body = (|| -> Result<_> {
        let mut w = Worst::new(tol);
        for (m, y) in [(2u32, 0.5f64), (3, 0.75)] {
            let params = ModelParams::new(m, y)?;
            let gen = GeneralParams::new(vec![y; m as usize])?;
            let sup = params.support();
            let span = sup.x_plus - sup.x_minus;
            for i in 0..50 {
                // 2% inset: the epsilon extrapolation is only trusted
                // away from the edge scaling regions
                let x = sup.x_minus + span * (0.02 + 0.96 * (i as f64 + 0.5) / 50.0);
                let dev = (gen.density_from_inversion(x)? - params.density_at(x)?).abs();
                w.note(dev, || format!("x={x:.4} (M={m}, y={y})"));
            }
        }
        Ok(w.conclude())
    })();
    r.finish(body)
}

/// Saddle stationarity defect along the curve.
pub fn criterion_7() -> CriterionResult {
    let r = Runner::new(7, "saddle stationarity", 5.0);
    let tol = 1e-10 * corruption(7);
    let body = (|| -> Result<_> {
        let mut w = Worst::new(tol);
        for (m, y) in [(1u32, 0.5f64), (2, 0.5), (3, 0.75)] {
            let params = ModelParams::new(m, y)?;
            for t in params.admissible_thetas(100) {
                let defect = params.saddle(t)?.g_prime.norm();
                w.note(defect, || format!("theta={t:.4} (M={m}, y={y})"));
            }
        }
        Ok(w.conclude())
    })();
    r.finish(body)
}

/// Smallest case in closed form: K(x, x) = e^{x - e^x}.
pub fn criterion_8() -> CriterionResult {
    let r = Runner::new(8, "kernel closed form N=1", 5.0);
    let tol = 1e-10 * corruption(8);
    let body = (|| -> Result<_> {
        let m = FiniteModel::new(1, vec![0])?;
        let base = ContourConfig::standard(&m, 1e-11)?;
        // extra line height pushes the truncated-tail estimate far below
        // the budget at the left end of the range
        let cfg = ContourConfig {
            t: base.t * 1.75,
            ..base
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0x8e1f);
        let mut w = Worst::new(tol);
        for _ in 0..20 {
            let x: f64 = -4.5 + 7.5 * rng.random::<f64>();
            let got = kernel_log(&m, x, x, &cfg)?.value;
            let want = (x - x.exp()).exp();
            w.note((got - want).abs(), || format!("x={x:.4}"));
        }
        Ok(w.conclude())
    })();
    r.finish(body)
}

/// Largest angle on the physical branch whose saddle abscissa keeps the
/// tuned line well conditioned.
fn bulk_theta(params: &ModelParams, n: u32) -> Option<f64> {
    params.admissible_thetas(33).into_iter().rev().find(|&t| {
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
}

/// Contour kernel against the classical-polynomial oracle on the diagonal.
pub fn criterion_9(fast: bool) -> CriterionResult {
    let r = Runner::new(9, "kernel vs recurrence oracle", 120.0);
    let tol = 1e-6 * corruption(9);
    let body = (|| -> Result<_> {
        let cases: &[(u32, u32)] = if fast {
            &[(10, 0), (20, 3)]
        } else {
            &[(10, 0), (20, 3), (30, 5)]
        };
        let mut w = Worst::new(tol);
        for &(n, nu) in cases {
            let m = FiniteModel::new(n, vec![nu])?;
            let y = n as f64 / (n + nu) as f64;
            let params = ModelParams::new(1, y)?;
            let theta = match bulk_theta(&params, n) {
                Some(t) => t,
                None => return Ok(Err(format!("no well-conditioned bulk angle for N={n}"))),
            };
            let cfg = ContourConfig::bulk_tuned(&m, &params, theta, 1e-9)?;
            let window = scaled_points(&m, &params, theta, &[-1.0, -0.5, 0.0, 0.5, 1.0])?;
            for x in window.points() {
                let want = laguerre_oracle(&m, x, x)?;
                let got = kernel_log(&m, x, x, &cfg)?.value;
                w.note((got - want).abs() / want.abs(), || {
                    format!("(N={n}, nu={nu}) x={x:.4}")
                });
            }
        }
        Ok(w.conclude())
    })();
    r.finish(body)
}

/// The diagonal integrates to the matrix size.
pub fn criterion_10(fast: bool) -> CriterionResult {
    let r = Runner::new(10, "kernel total mass", 300.0);
    let tol = 1e-4 * corruption(10);
    let body = (|| -> Result<_> {
        let cases: &[(u32, &[u32])] = if fast {
            &[(5, &[0])]
        } else {
            &[(5, &[0]), (20, &[10, 10])]
        };
        let mut w = Worst::new(tol);
        for &(n, nu) in cases {
            let m = FiniteModel::new(n, nu.to_vec())?;
            let cfg = ContourConfig::standard(&m, 1e-6)?;
            let mass = total_mass(&m, &cfg)?;
            w.note((mass - n as f64).abs() / n as f64, || {
                format!("N={n}, nu={nu:?}, mass={mass:.8}")
            });
        }
        Ok(w.conclude())
    })();
    r.finish(body)
}

fn corollary_sequence(fast: bool) -> &'static [u32] {
    if fast {
        &[25, 50]
    } else {
        &[25, 50, 100]
    }
}

/// Scaled diagonal against the limiting density, improving with N.
pub fn criterion_11(fast: bool) -> CriterionResult {
    let r = Runner::new(11, "diagonal density corollary", 600.0);
    let tol = 0.1 * corruption(11);
    let body = (|| -> Result<_> {
        let params = ModelParams::new(1, 0.5)?;
        let theta = FRAC_PI_8;
        let mut devs = Vec::new();
        for &n in corollary_sequence(fast) {
            let m = FiniteModel::new(n, vec![n])?;
            let cfg = ContourConfig::bulk_tuned(&m, &params, theta, 1e-8)?;
            let rep = corollary_density_check(&m, &params, theta, &cfg)?;
            devs.push((n, rep.relative_deviation));
        }
        let (n_last, final_dev) = *devs.last().unwrap();
        let monotone = devs.windows(2).all(|w| w[1].1 < w[0].1);
        let msg = format!(
            "deviations {:?}, final {final_dev:.3e} vs {tol:.1e}",
            devs.iter()
                .map(|(n, d)| format!("N={n}:{d:.3e}"))
                .collect::<Vec<_>>()
        );
        if final_dev <= tol && monotone {
            Ok(Ok(msg))
        } else if !monotone {
            Ok(Err(format!("{msg}; deviation not strictly decreasing")))
        } else {
            Ok(Err(format!("{msg}; N={n_last} deviation above bound")))
        }
    })();
    r.finish(body)
}

/// Bulk pair determinant against the sine kernel, improving with N.
pub fn criterion_12(fast: bool) -> CriterionResult {
    let r = Runner::new(12, "sine-kernel universality", 900.0);
    let tol = 0.05 * corruption(12);
    let body = (|| -> Result<_> {
        let params = ModelParams::new(1, 0.5)?;
        let theta = FRAC_PI_8;
        let mut devs = Vec::new();
        for &n in corollary_sequence(fast) {
            let m = FiniteModel::new(n, vec![n])?;
            let cfg = ContourConfig::bulk_tuned(&m, &params, theta, 1e-8)?;
            let rep = sine_limit_check(&m, &params, theta, &[0.0, 0.5], &cfg)?;
            devs.push((n, rep.sup_pair_determinant));
        }
        let (n_last, final_dev) = *devs.last().unwrap();
        let monotone = devs.windows(2).all(|w| w[1].1 < w[0].1);
        let msg = format!(
            "det2 deviations {:?}, final {final_dev:.3e} vs {tol:.1e}",
            devs.iter()
                .map(|(n, d)| format!("N={n}:{d:.3e}"))
                .collect::<Vec<_>>()
        );
        if final_dev <= tol && monotone {
            Ok(Ok(msg))
        } else if !monotone {
            Ok(Err(format!("{msg}; deviation not decreasing")))
        } else {
            Ok(Err(format!("{msg}; N={n_last} deviation above bound")))
        }
    })();
    r.finish(body)
}

/// Pooled sample distribution against the limiting law, with a mismatched
/// negative control.
pub fn criterion_13(fast: bool) -> CriterionResult {
    let r = Runner::new(13, "Monte Carlo global law", 300.0);
    let tol = 0.03 * corruption(13);
    let body = (|| -> Result<_> {
        let (n, trials) = if fast { (128, 12) } else { (256, 20) };
        let config = EnsembleConfig::new(n, vec![n, n], trials, 0x5eed)?;
        let results = sample_ensemble(&config)?;
        let params = config.implied_params()?;
        let ks = ks_distance(&results, &params)?;
        let control = ks_distance(&results, &ModelParams::new(2, 1.0)?)?;
        if ks <= tol && control >= 0.1 {
            Ok(Ok(format!("KS {ks:.4} vs {tol}; control {control:.3} >= 0.1")))
        } else {
            Ok(Err(format!("KS {ks:.4} vs {tol}; control {control:.3}")))
        }
    })();
    r.finish(body)
}

/// Bitwise reproducibility of the sample CSV across runs and thread counts.
pub fn criterion_14() -> CriterionResult {
    let r = Runner::new(14, "sampling reproducibility", 60.0);
    let body = (|| -> Result<_> {
        let config = EnsembleConfig::new(32, vec![16], 8, 99)?;
        let a = crate::cli::format_samples_csv(&sample_ensemble(&config)?);
        let b = crate::cli::format_samples_csv(&sample_ensemble(&config)?);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| crate::error::Error::Config(e.to_string()))?
            .install(|| sample_ensemble(&config))?;
        let c = crate::cli::format_samples_csv(&single);
        // corruption hook: a perturbed seed must change the bytes
        let corrupted = corruption(14) != 1.0;
        let d = if corrupted {
            let other = EnsembleConfig::new(32, vec![16], 8, 100)?;
            crate::cli::format_samples_csv(&sample_ensemble(&other)?)
        } else {
            a.clone()
        };
        if a == b && a == c && a == d {
            Ok(Ok(format!("{} identical bytes across 3 runs", a.len())))
        } else if a != b {
            Ok(Err("repeat run differs".into()))
        } else if a != c {
            Ok(Err("single-thread run differs".into()))
        } else {
            Ok(Err("seed perturbation detected (hook)".into()))
        }
    })();
    r.finish(body)
}

/// Criterion ids in a named suite.
pub fn suite_ids(name: &str) -> Result<Vec<u32>> {
    Ok(match name {
        "edges" => vec![1, 2],
        "density" => vec![3, 4, 5],
        "stieltjes" => vec![6],
        "saddle" => vec![7],
        "kernel" => vec![8, 9, 10],
        "universality" => vec![11, 12],
        "montecarlo" => vec![13, 14],
        "all" => (1..=14).collect(),
        other => {
            return Err(crate::error::Error::InvalidParameter(format!(
                "unknown suite '{other}' (expected edges, density, stieltjes, saddle, \
                 kernel, universality, montecarlo, or all)"
            )))
        }
    })
}

pub fn run_criterion(id: u32, fast: bool) -> Result<CriterionResult> {
    Ok(match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(),
        8 => criterion_8(),
        9 => criterion_9(fast),
        10 => criterion_10(fast),
        11 => criterion_11(fast),
        12 => criterion_12(fast),
        13 => criterion_13(fast),
        14 => criterion_14(),
        other => {
            return Err(crate::error::Error::InvalidParameter(format!(
                "criterion id {other} out of range 1..=14"
            )))
        }
    })
}

/// Runs a suite, printing one status line per criterion via `sink`.
pub fn run_suite(
    name: &str,
    fast: bool,
    mut sink: impl FnMut(&CriterionResult),
) -> Result<Vec<CriterionResult>> {
    let mut out = Vec::new();
    for id in suite_ids(name)? {
        let res = run_criterion(id, fast)?;
        sink(&res);
        out.push(res);
    }
    Ok(out)
}
