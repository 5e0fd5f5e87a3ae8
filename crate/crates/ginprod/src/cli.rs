//! Command-line surface. Every command is deterministic given its flags
//! (seed included), CSV output uses '.' decimals, 17 significant digits
//! and LF line endings, and exit codes are scriptable: 0 success,
//! 2 validation, 3 numerical failure, 4 acceptance failure.

use crate::density::ModelParams;
use crate::error::{Error, Result};
use crate::kernel::{
    corollary_density_check, kernel_log, sine_limit_check, total_mass, ContourConfig, FiniteModel,
};
use crate::montecarlo::{
    empirical_cdf, ks_distance, moment_check, sample_ensemble, EnsembleConfig, SampleResult,
};
use crate::stieltjes::GeneralParams;
use crate::verify;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use std::f64::consts::FRAC_PI_8;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "ginprod",
    version,
    about = "Spectral statistics for products of rectangular complex Ginibre matrices",
    after_help = "Units: angles in radians, kernel coordinates on the logarithmic scale \
                  ln(squared singular value), densities per unit of the scaled spectral \
                  variable x (squared singular values divided by the product of the large \
                  dimensions). Seeds and dimensions are dimensionless integers."
)]
struct Cli {
    /// JSON run-configuration file; command-line flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker thread cap (fallback: GINPROD_THREADS, then all cores);
    /// results are identical for every value
    #[arg(long, global = true, value_name = "COUNT")]
    threads: Option<usize>,

    /// Output file (default: stdout)
    #[arg(long, short = 'o', global = true, value_name = "PATH")]
    output: Option<PathBuf>,

    /// Output format
    #[arg(long, global = true, value_name = "FMT")]
    format: Option<OutputFormat>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectral edges of the limiting law (scaled x variable)
    Edges(EdgesArgs),
    /// Limiting density on a grid of the scaled x variable
    Density(DensityArgs),
    /// Density for general dimension ratios via resolvent root-solving
    Stieltjes(StieltjesArgs),
    /// Monte Carlo squared singular values of a finite product ensemble
    Sample(SampleArgs),
    /// Finite-size correlation kernel reports
    Kernel(KernelArgs),
    /// Acceptance criteria suites
    Verify(VerifyArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum KernelMode {
    /// Rows of K(x, x) on a grid in the log coordinate
    Diagonal,
    /// Bulk-scaled kernel against the sine kernel
    SineCheck,
    /// Scaled diagonal against the limiting density
    Corollary,
    /// Integral of the diagonal, which must equal N
    Mass,
}

#[derive(Args, Debug)]
struct EdgesArgs {
    /// Number of factors M (dimensionless)
    #[arg(long = "M", visible_alias = "factors", value_name = "COUNT")]
    m: Option<u32>,
    /// Limiting dimension ratio y = N/N_l in (0, 1]
    #[arg(long = "y", visible_alias = "ratio", value_name = "RATIO")]
    y: Option<f64>,
}

#[derive(Args, Debug)]
struct DensityArgs {
    /// Number of factors M (dimensionless)
    #[arg(long = "M", visible_alias = "factors", value_name = "COUNT")]
    m: Option<u32>,
    /// Limiting dimension ratio y = N/N_l in (0, 1]
    #[arg(long = "y", visible_alias = "ratio", value_name = "RATIO")]
    y: Option<f64>,
    /// Left end of the x grid (default: lower spectral edge)
    #[arg(long, value_name = "X", allow_hyphen_values = true)]
    x_min: Option<f64>,
    /// Right end of the x grid (default: upper spectral edge)
    #[arg(long, value_name = "X", allow_hyphen_values = true)]
    x_max: Option<f64>,
    /// Number of grid points (endpoints included)
    #[arg(long, value_name = "COUNT")]
    points: Option<usize>,
}

#[derive(Args, Debug)]
struct StieltjesArgs {
    /// Dimension ratios y_1,...,y_M in (0, 1], comma separated; order
    /// does not affect the output
    #[arg(long, value_delimiter = ',', value_name = "Y1,Y2,...")]
    ratios: Option<Vec<f64>>,
    /// Left end of the x grid (default: detected support)
    #[arg(long, value_name = "X", allow_hyphen_values = true)]
    x_min: Option<f64>,
    /// Right end of the x grid (default: detected support)
    #[arg(long, value_name = "X", allow_hyphen_values = true)]
    x_max: Option<f64>,
    /// Number of grid points (endpoints included)
    #[arg(long, value_name = "COUNT")]
    points: Option<usize>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Smallest matrix dimension N
    #[arg(long = "N", visible_alias = "size", value_name = "DIM")]
    n: Option<u32>,
    /// Offsets nu_j = N_j - N, comma separated, one per factor
    #[arg(long, value_delimiter = ',', value_name = "NU1,NU2,...")]
    nu: Option<Vec<u32>>,
    /// Independent product samples to draw
    #[arg(long, value_name = "COUNT")]
    trials: Option<u32>,
    /// Random seed; identical seeds give byte-identical output at any
    /// thread count
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Number of factors M, used with --y to derive offsets when --nu
    /// is not given
    #[arg(long = "M", visible_alias = "factors", value_name = "COUNT")]
    m: Option<u32>,
    /// Dimension ratio used for the theoretical comparison (default:
    /// implied by N and nu)
    #[arg(long = "y", visible_alias = "ratio", value_name = "RATIO")]
    y: Option<f64>,
    /// Also write the JSON statistics report to this file
    #[arg(long, value_name = "PATH")]
    stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct KernelArgs {
    /// Smallest matrix dimension N
    #[arg(long = "N", visible_alias = "size", value_name = "DIM")]
    n: Option<u32>,
    /// Offsets nu_j = N_j - N, comma separated, one per factor
    #[arg(long, value_delimiter = ',', value_name = "NU1,NU2,...")]
    nu: Option<Vec<u32>>,
    /// Report kind
    #[arg(long, value_name = "MODE")]
    mode: Option<KernelMode>,
    /// Bulk angle in radians, admissible for the implied limit law
    /// (sine-check and corollary modes; default pi/8)
    #[arg(long, value_name = "RADIANS", allow_hyphen_values = true)]
    theta: Option<f64>,
    /// Relative accuracy target for the contour evaluation
    #[arg(long, value_name = "TOL")]
    tol: Option<f64>,
    /// Left end of the diagonal grid in the log coordinate
    /// (default: detected support)
    #[arg(long, value_name = "LOGX", allow_hyphen_values = true)]
    x_min: Option<f64>,
    /// Right end of the diagonal grid in the log coordinate
    #[arg(long, value_name = "LOGX", allow_hyphen_values = true)]
    x_max: Option<f64>,
    /// Number of diagonal grid points (endpoints included)
    #[arg(long, value_name = "COUNT")]
    points: Option<usize>,
    /// Bulk-scaled offsets for sine-check mode, comma separated
    #[arg(long, value_delimiter = ',', value_name = "XI1,XI2,...", allow_hyphen_values = true)]
    xi: Option<Vec<f64>>,
    /// Dimension ratio of the comparison law (default: implied by N
    /// and nu, which then must all be equal)
    #[arg(long = "y", visible_alias = "ratio", value_name = "RATIO")]
    y: Option<f64>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suite name: edges, density, stieltjes, saddle, kernel,
    /// universality, montecarlo, or all
    #[arg(value_name = "SUITE")]
    suite: Option<String>,
    /// Reduced configurations for the long-running criteria; passes are
    /// reported as reduced, not certified
    #[arg(long)]
    fast: bool,
}

/// Flat run configuration mirroring the command flags. Unknown fields are
/// rejected; command-line flags override file values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    #[serde(rename = "M")]
    m: Option<u32>,
    y: Option<f64>,
    #[serde(rename = "N")]
    n: Option<u32>,
    nu: Option<Vec<u32>>,
    trials: Option<u32>,
    seed: Option<u64>,
    ratios: Option<Vec<f64>>,
    theta: Option<f64>,
    tol: Option<f64>,
    x_min: Option<f64>,
    x_max: Option<f64>,
    points: Option<usize>,
    xi: Option<Vec<f64>>,
    mode: Option<String>,
    suite: Option<String>,
    fast: Option<bool>,
    format: Option<String>,
    output_path: Option<PathBuf>,
    threads: Option<usize>,
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_enum<T: ValueEnum>(s: &str, what: &str) -> Result<T> {
    T::from_str(s, false).map_err(|_| Error::Config(format!("invalid {what} '{s}'")))
}

fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| Error::InvalidParameter(format!("missing required parameter {name}")))
}

/// 17 significant digits, '.' decimal separator.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("points must be positive".into()));
    }
    if n > 1 && !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "grid needs x_max > x_min, got [{lo}, {hi}]"
        )));
    }
    Ok((0..n)
        .map(|i| {
            if n == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect())
}

/// Pooled sample rows, ascending, fixed header. Byte-identical for
/// identical seeds at any thread count.
pub fn format_samples_csv(results: &[SampleResult]) -> String {
    let mut pairs: Vec<(f64, f64)> = results
        .iter()
        .flat_map(|r| r.values.iter().copied().zip(r.log_values.iter().copied()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = String::with_capacity(16 + 52 * pairs.len());
    out.push_str("value,log_value\n");
    for (v, l) in pairs {
        out.push_str(&num(v));
        out.push(',');
        out.push_str(&num(l));
        out.push('\n');
    }
    out
}

fn cmd_edges(a: EdgesArgs, file: &RunConfig, format: OutputFormat) -> Result<String> {
    let m = require(a.m, file.m, "--M")?;
    let y = require(a.y, file.y, "--y")?;
    let sup = ModelParams::new(m, y)?.support();
    Ok(match format {
        OutputFormat::Csv => format!(
            "x_minus,x_plus\n{},{}\n",
            num(sup.x_minus),
            num(sup.x_plus)
        ),
        OutputFormat::Json => {
            let v = serde_json::json!({
                "M": m, "y": y, "x_minus": sup.x_minus, "x_plus": sup.x_plus,
            });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("static json"))
        }
    })
}

fn cmd_density(a: DensityArgs, file: &RunConfig, format: OutputFormat) -> Result<String> {
    let m = require(a.m, file.m, "--M")?;
    let y = require(a.y, file.y, "--y")?;
    let params = ModelParams::new(m, y)?;
    let sup = params.support();
    let lo = a.x_min.or(file.x_min).unwrap_or(sup.x_minus);
    let hi = a.x_max.or(file.x_max).unwrap_or(sup.x_plus);
    let n = a.points.or(file.points).unwrap_or(201);
    let span = sup.x_plus - sup.x_minus;
    let mut rows = Vec::with_capacity(n);
    for x in linspace(lo, hi, n)? {
        let interior = x > sup.x_minus + 1e-12 * span && x < sup.x_plus - 1e-12 * span;
        if interior {
            let rho = params.density_at(x)?;
            let theta = params.theta_of_x(x)?;
            rows.push((x, rho, theta, true));
        } else {
            rows.push((x, 0.0, f64::NAN, false));
        }
    }
    Ok(match format {
        OutputFormat::Csv => {
            let mut out = String::from("x,rho,theta,admissible\n");
            for (x, rho, theta, adm) in rows {
                out.push_str(&format!("{},{},{},{adm}\n", num(x), num(rho), num(theta)));
            }
            out
        }
        OutputFormat::Json => {
            let v = serde_json::json!({
                "M": m, "y": y,
                "rows": rows.iter().map(|(x, rho, theta, adm)| serde_json::json!({
                    "x": x, "rho": rho,
                    "theta": if theta.is_nan() { None } else { Some(*theta) },
                    "admissible": adm,
                })).collect::<Vec<_>>(),
            });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("static json"))
        }
    })
}

fn cmd_stieltjes(a: StieltjesArgs, file: &RunConfig, format: OutputFormat) -> Result<String> {
    let mut ratios = require(a.ratios, file.ratios.clone(), "--ratios")?;
    // sorted once: permuted inputs print identical bytes
    ratios.sort_by(f64::total_cmp);
    let gen = GeneralParams::new(ratios.clone())?;
    let (det_lo, det_hi) = gen.detected_support(512)?;
    let lo = a.x_min.or(file.x_min).unwrap_or(det_lo);
    let hi = a.x_max.or(file.x_max).unwrap_or(det_hi);
    let n = a.points.or(file.points).unwrap_or(201);
    let eps = crate::stieltjes::INVERSION_EPS[crate::stieltjes::INVERSION_EPS.len() - 1];
    let mut rows = Vec::with_capacity(n);
    for x in linspace(lo, hi, n)? {
        let density = gen.density_from_inversion(x)?;
        let residual = gen.solve_g(num_complex::Complex64::new(x, eps))?.residual;
        rows.push((x, density, residual));
    }
    Ok(match format {
        OutputFormat::Csv => {
            let mut out = String::from("x,density,residual\n");
            for (x, d, r) in rows {
                out.push_str(&format!("{},{},{}\n", num(x), num(d), num(r)));
            }
            out
        }
        OutputFormat::Json => {
            let v = serde_json::json!({
                "ratios": ratios,
                "rows": rows.iter().map(|(x, d, r)| serde_json::json!({
                    "x": x, "density": d, "residual": r,
                })).collect::<Vec<_>>(),
            });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("static json"))
        }
    })
}

/// Offsets from the target ratio when only (M, y) are given:
/// y = N/(N + nu) up to rounding.
fn derived_offsets(n: u32, m: u32, y: f64) -> Result<Vec<u32>> {
    if !(y > 0.0 && y <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ratio must lie in (0, 1], got {y}"
        )));
    }
    let nu = (n as f64 * (1.0 - y) / y).round();
    if !(0.0..=100_000.0).contains(&nu) {
        return Err(Error::InvalidParameter(format!(
            "derived offset {nu} out of range for N = {n}, y = {y}"
        )));
    }
    Ok(vec![nu as u32; m as usize])
}

fn sample_plan(a: &SampleArgs, file: &RunConfig) -> Result<EnsembleConfig> {
    let n = require(a.n, file.n, "--N")?;
    let trials = a.trials.or(file.trials).unwrap_or(20);
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let nu = match a.nu.clone().or(file.nu.clone()) {
        Some(nu) => {
            if let Some(m) = a.m.or(file.m) {
                if m as usize != nu.len() {
                    return Err(Error::InvalidParameter(format!(
                        "--M {m} contradicts {} offsets in --nu",
                        nu.len()
                    )));
                }
            }
            nu
        }
        None => {
            let m = require(a.m, file.m, "--nu or --M")?;
            let y = require(a.y, file.y, "--nu or --y")?;
            derived_offsets(n, m, y)?
        }
    };
    EnsembleConfig::new(n, nu, trials, seed)
}

fn sample_stats_json(
    config: &EnsembleConfig,
    results: &[SampleResult],
    law: &ModelParams,
) -> Result<String> {
    let ks = ks_distance(results, law)?;
    let pooled = empirical_cdf(results)?.pooled_count();
    let moments = (1..=4u32)
        .map(|k| moment_check(results, law, k))
        .collect::<Result<Vec<_>>>()?;
    let v = serde_json::json!({
        "seed": config.seed,
        "N": config.n,
        "nu": config.nu,
        "trials": config.trials,
        "pooled_count": pooled,
        "law": { "M": law.m, "y": law.y },
        "ks": ks,
        "moments": moments.iter().map(|r| serde_json::json!({
            "k": r.k, "sample": r.sample, "theory": r.theory,
            "std_error": r.std_error, "z_score": r.z_score,
        })).collect::<Vec<_>>(),
    });
    Ok(format!(
        "{}\n",
        serde_json::to_string_pretty(&v).expect("static json")
    ))
}

fn cmd_sample(a: SampleArgs, file: &RunConfig, format: OutputFormat) -> Result<String> {
    let config = sample_plan(&a, file)?;
    let law = match a.y.or(file.y) {
        Some(y) => ModelParams::new(config.nu.len() as u32, y)?,
        None => config.implied_params()?,
    };
    let results = sample_ensemble(&config)?;
    if let Some(path) = &a.stats {
        std::fs::write(path, sample_stats_json(&config, &results, &law)?)?;
    }
    Ok(match format {
        OutputFormat::Csv => format_samples_csv(&results),
        OutputFormat::Json => sample_stats_json(&config, &results, &law)?,
    })
}

/// Comparison law for the kernel reports. Offsets must share one ratio
/// unless --y picks it explicitly.
fn implied_law(n: u32, nu: &[u32], y_flag: Option<f64>) -> Result<ModelParams> {
    let y = match y_flag {
        Some(y) => y,
        None => {
            let v0 = nu[0];
            if nu.iter().any(|&v| v != v0) {
                return Err(Error::InvalidParameter(
                    "offsets imply different ratios; pass --y explicitly".into(),
                ));
            }
            n as f64 / (n + v0) as f64
        }
    };
    ModelParams::new(nu.len() as u32, y)
}

/// Default diagonal grid: the detected support of the limit law, mapped
/// to the log coordinate and shifted by the dimension product, with a
/// 2% inset on each side.
fn diagonal_grid_defaults(model: &FiniteModel, n: u32, nu: &[u32]) -> Result<(f64, f64)> {
    let ratios: Vec<f64> = nu.iter().map(|&v| n as f64 / (n + v) as f64).collect();
    let (lo, hi) = GeneralParams::new(ratios)?.detected_support(512)?;
    let shift: f64 = model.dims().iter().map(|d| d.ln()).sum();
    let (a, b) = (lo.ln() + shift, hi.ln() + shift);
    let inset = 0.02 * (b - a);
    Ok((a + inset, b - inset))
}

fn metric_rows(format: OutputFormat, mode: &str, rows: &[(&str, f64)]) -> String {
    match format {
        OutputFormat::Csv => {
            let mut out = String::from("metric,value\n");
            for (k, v) in rows {
                out.push_str(&format!("{k},{}\n", num(*v)));
            }
            out
        }
        OutputFormat::Json => {
            let mut map = serde_json::Map::new();
            map.insert("mode".into(), serde_json::json!(mode));
            for (k, v) in rows {
                map.insert((*k).into(), serde_json::json!(v));
            }
            format!(
                "{}\n",
                serde_json::to_string_pretty(&serde_json::Value::Object(map))
                    .expect("static json")
            )
        }
    }
}

fn cmd_kernel(a: KernelArgs, file: &RunConfig, format: OutputFormat) -> Result<String> {
    let n = require(a.n, file.n, "--N")?;
    let nu = require(a.nu.clone(), file.nu.clone(), "--nu")?;
    let mode = match (&a.mode, &file.mode) {
        (Some(m), _) => *m,
        (None, Some(s)) => parse_enum(s, "kernel mode")?,
        (None, None) => KernelMode::Diagonal,
    };
    let model = FiniteModel::new(n, nu.clone())?;
    let theta = a.theta.or(file.theta).unwrap_or(FRAC_PI_8);
    match mode {
        KernelMode::Diagonal => {
            let tol = a.tol.or(file.tol).unwrap_or(1e-8);
            let (def_lo, def_hi) = match (a.x_min.or(file.x_min), a.x_max.or(file.x_max)) {
                (Some(lo), Some(hi)) => (lo, hi),
                (lo, hi) => {
                    let (dl, dh) = diagonal_grid_defaults(&model, n, &nu)?;
                    (lo.unwrap_or(dl), hi.unwrap_or(dh))
                }
            };
            let pts = a.points.or(file.points).unwrap_or(21);
            let mut rows = Vec::with_capacity(pts);
            for x in linspace(def_lo, def_hi, pts)? {
                let cfg = ContourConfig::point_tuned(&model, x, tol)?;
                let ev = kernel_log(&model, x, x, &cfg)?;
                rows.push((x, ev.value, ev.abs_error_estimate));
            }
            Ok(match format {
                OutputFormat::Csv => {
                    let mut out = String::from("x,kernel,error_estimate\n");
                    for (x, k, e) in rows {
                        out.push_str(&format!("{},{},{}\n", num(x), num(k), num(e)));
                    }
                    out
                }
                OutputFormat::Json => {
                    let v = serde_json::json!({
                        "mode": "diagonal", "N": n, "nu": nu,
                        "rows": rows.iter().map(|(x, k, e)| serde_json::json!({
                            "x": x, "kernel": k, "error_estimate": e,
                        })).collect::<Vec<_>>(),
                    });
                    format!("{}\n", serde_json::to_string_pretty(&v).expect("static json"))
                }
            })
        }
        KernelMode::SineCheck => {
            let tol = a.tol.or(file.tol).unwrap_or(1e-8);
            let law = implied_law(n, &nu, a.y.or(file.y))?;
            let cfg = ContourConfig::bulk_tuned(&model, &law, theta, tol)?;
            let xi = a.xi.clone().or(file.xi.clone()).unwrap_or(vec![0.0, 0.5]);
            let rep = sine_limit_check(&model, &law, theta, &xi, &cfg)?;
            Ok(metric_rows(
                format,
                "sine-check",
                &[
                    ("theta", rep.theta),
                    ("scale", rep.scale),
                    ("sup_pointwise", rep.sup_pointwise),
                    ("sup_diagonal", rep.sup_diagonal),
                    ("sup_pair_determinant", rep.sup_pair_determinant),
                ],
            ))
        }
        KernelMode::Corollary => {
            let tol = a.tol.or(file.tol).unwrap_or(1e-8);
            let law = implied_law(n, &nu, a.y.or(file.y))?;
            let cfg = ContourConfig::bulk_tuned(&model, &law, theta, tol)?;
            let rep = corollary_density_check(&model, &law, theta, &cfg)?;
            Ok(metric_rows(
                format,
                "corollary",
                &[
                    ("theta", theta),
                    ("kernel_scaled", rep.kernel_scaled),
                    ("density_value", rep.density_value),
                    ("relative_deviation", rep.relative_deviation),
                ],
            ))
        }
        KernelMode::Mass => {
            let tol = a.tol.or(file.tol).unwrap_or(1e-6);
            let cfg = ContourConfig::standard(&model, tol)?;
            let mass = total_mass(&model, &cfg)?;
            Ok(metric_rows(
                format,
                "mass",
                &[
                    ("N", n as f64),
                    ("mass", mass),
                    ("relative_deviation", (mass - n as f64).abs() / n as f64),
                ],
            ))
        }
    }
}

fn cmd_verify(a: VerifyArgs, file: &RunConfig) -> Result<ExitCode> {
    let suite = a
        .suite
        .or_else(|| file.suite.clone())
        .unwrap_or_else(|| "all".into());
    let fast = a.fast || file.fast.unwrap_or(false);
    let results = verify::run_suite(&suite, fast, |r| println!("{}", r.line()))?;
    let passed = results.iter().filter(|r| r.passed).count();
    let mode = if fast { " (fast: reduced configurations)" } else { "" };
    println!(
        "{passed}/{} criteria passed in suite '{suite}'{mode}",
        results.len()
    );
    Ok(if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    })
}

fn exit_class(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_)
        | Error::Domain(_)
        | Error::InadmissibleAngle { .. }
        | Error::Config(_) => 2,
        _ => 3,
    }
}

fn init_threads(explicit: Option<usize>) {
    let n = explicit.or_else(|| {
        std::env::var("GINPROD_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = n.filter(|&n| n > 0) {
        // Err only if a pool already exists, which keeps determinism anyway
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    init_threads(cli.threads.or(file.threads));
    let format = match (cli.format, &file.format) {
        (Some(f), _) => f,
        (None, Some(s)) => parse_enum(s, "format")?,
        (None, None) => OutputFormat::Csv,
    };
    let output = cli.output.clone().or_else(|| file.output_path.clone());
    let body = match cli.command {
        Command::Edges(a) => cmd_edges(a, &file, format)?,
        Command::Density(a) => cmd_density(a, &file, format)?,
        Command::Stieltjes(a) => cmd_stieltjes(a, &file, format)?,
        Command::Sample(a) => cmd_sample(a, &file, format)?,
        Command::Kernel(a) => cmd_kernel(a, &file, format)?,
        Command::Verify(a) => return cmd_verify(a, &file),
    };
    match output {
        Some(path) => std::fs::write(path, body)?,
        None => print!("{body}"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_class(&e))
        }
    }
}
