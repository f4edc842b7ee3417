use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Value};

use deformation_kernel::borel::{
    borel_transform, default_pade_degrees, domain_contains, laplace_sum, pade_continuation, summation_direction,
    BorelDomain,
};
use deformation_kernel::deformation::{
    domain_of_validity, full_kernel_with_report, small_time_coefficients, CoefficientSeries, Estimator, McConfig,
    Method,
};
use deformation_kernel::kernels::{p_free_rotated, p_harm_rotated, HarmonicParams};
use deformation_kernel::oracle::{run_experiment, Experiment, ExperimentConfig};
use deformation_kernel::potential::{case_classification, CaseClassification, PotentialMeasure};
use deformation_kernel::surface::{Angle, ComplexVector, SurfaceTime};
use deformation_kernel::Error;

const SCHEMA: u32 = 1;
const EXIT_FAILURE: u8 = 1;
const EXIT_DOMAIN: u8 = 2;
const EXIT_TRUNCATION: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "dkernel", version, about = "Heat and Schrödinger kernels on complex time")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Seed for Monte Carlo streams.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a kernel p(t, x, y).
    Kernel(KernelArgs),
    /// Small-time Taylor coefficients of p^conj.
    Series(SeriesArgs),
    /// Borel transform and Laplace resummation of a coefficient file.
    Borel(BorelArgs),
    /// Domain of validity and summation direction of a potential.
    Domains(DomainsArgs),
    /// Run an oracle experiment.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExactKernel {
    Free,
    Harm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Conditional,
    Full,
}

#[derive(Args, Debug)]
struct KernelArgs {
    /// Closed-form kernel instead of the deformation series.
    #[arg(long, value_enum, conflicts_with = "potential")]
    exact: Option<ExactKernel>,
    /// Potential measure (JSON).
    #[arg(long, required_unless_present = "exact")]
    potential: Option<PathBuf>,
    /// Dimension for closed-form kernels.
    #[arg(long, default_value_t = 1)]
    nu: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lambda: f64,
    /// Rotation angle ε; overrides the one in the potential file.
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    /// Surface time "r,theta".
    #[arg(long, allow_hyphen_values = true)]
    t: String,
    /// Point x, components ';'-separated, each "re" or "re,im".
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    #[arg(long, allow_hyphen_values = true)]
    y: String,
    #[arg(long, default_value_t = 10)]
    order: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    method: MethodArg,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Conditional)]
    estimator: EstimatorArg,
    /// Contour angle β.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
}

#[derive(Args, Debug)]
struct SeriesArgs {
    #[arg(long)]
    potential: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    #[arg(long, allow_hyphen_values = true)]
    y: String,
    #[arg(long, default_value_t = 10)]
    order: usize,
}

#[derive(Args, Debug)]
struct BorelArgs {
    /// Coefficient file written by `series`.
    input: PathBuf,
    /// Complex time "re,im".
    #[arg(long, allow_hyphen_values = true)]
    t: String,
    /// Direction of the Laplace ray; defaults to the argument of t.
    #[arg(long, allow_hyphen_values = true)]
    direction: Option<String>,
    /// Half-width of the strip checked for poles.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Padé degrees "L M".
    #[arg(long, num_args = 2, value_names = ["L", "M"], conflicts_with = "no_pade")]
    pade: Option<Vec<usize>>,
    /// Sum the truncated Borel polynomial directly.
    #[arg(long)]
    no_pade: bool,
}

#[derive(Args, Debug)]
struct DomainsArgs {
    #[arg(long)]
    potential: PathBuf,
    /// Contour angle β for analytic densities.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    /// Surface time "r,theta" to test for membership.
    #[arg(long, allow_hyphen_values = true)]
    t: Option<String>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    experiment: String,
    #[arg(long)]
    samples: Option<usize>,
}

/// A computed result in both output formats.
struct Output {
    json: Value,
    csv: String,
}

/// Failure that still produced output, e.g. a verification that did not pass.
struct Failure {
    output: Option<Output>,
    error: CliError,
}

#[derive(Debug)]
struct CliError {
    kind: String,
    message: String,
    code: u8,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { kind: "usage".into(), message: message.into(), code: EXIT_USAGE }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::Divergence(_) | Error::Pole { .. } | Error::Inadmissible(_) => EXIT_DOMAIN,
            Error::Truncation(_) => EXIT_TRUNCATION,
            Error::InvalidInput(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        CliError { kind: e.kind().into(), message: e.to_string(), code }
    }
}

impl From<CliError> for Failure {
    fn from(error: CliError) -> Self {
        Failure { output: None, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        CliError::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let summary: Vec<&str> = message
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with("For more information"))
                .collect();
            return report(&CliError::usage(summary.join(" ").trim_start_matches("error: ")));
        }
    };
    if let Err(e) = configure_threads() {
        return report(&e);
    }
    let result = match &cli.command {
        Command::Kernel(a) => kernel(a, cli.seed),
        Command::Series(a) => series(a).map_err(Failure::from),
        Command::Borel(a) => borel(a).map_err(Failure::from),
        Command::Domains(a) => domains(a).map_err(Failure::from),
        Command::Verify(a) => verify(a, cli.seed),
    };
    let (output, error) = match result {
        Ok(o) => (Some(o), None),
        Err(f) => (f.output, Some(f.error)),
    };
    if let Some(o) = output {
        if let Err(e) = emit(&o, cli.format, cli.out.as_deref()) {
            return report(&e);
        }
    }
    match error {
        None => ExitCode::SUCCESS,
        Some(e) => report(&e),
    }
}

fn report(e: &CliError) -> ExitCode {
    let line = json!({ "error": e.kind, "message": e.message.replace('\n', " ") });
    eprintln!("{line}");
    ExitCode::from(e.code)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("DEFORMATION_KERNEL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("DEFORMATION_KERNEL_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError { kind: "threads".into(), message: e.to_string(), code: EXIT_FAILURE })
}

fn emit(o: &Output, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let text = match format {
        Format::Json => format!("{}\n", o.json),
        Format::Csv => o.csv.clone(),
    };
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => std::fs::write(path, text).map_err(|e| CliError {
            kind: "io".into(),
            message: format!("cannot write {}: {e}", path.display()),
            code: EXIT_FAILURE,
        }),
    }
}

fn kernel(a: &KernelArgs, seed: u64) -> Result<Output, Failure> {
    let t = parse_surface_time(&a.t)?;
    let x = parse_vector(&a.x)?;
    let y = parse_vector(&a.y)?;
    let epsilon = a.epsilon.as_deref().map(parse_angle).transpose()?.map(|e| e.value());
    let beta = a.beta.as_deref().map(parse_angle).transpose()?;
    if let Some(kind) = a.exact {
        let epsilon = epsilon.unwrap_or(0.0);
        let value = match kind {
            ExactKernel::Free => p_free_rotated(t, &x, &y, a.nu, epsilon)?,
            ExactKernel::Harm => p_harm_rotated(t, &x, &y, &HarmonicParams::new(a.lambda, a.nu)?, epsilon)?,
        };
        return Ok(Output {
            json: json!({ "schema": SCHEMA, "t": t, "value": [value.re, value.im] }),
            csv: format!("re,im\n{},{}\n", value.re, value.im),
        });
    }
    let path = a.potential.as_deref().ok_or_else(|| CliError::usage("--potential or --exact is required"))?;
    let mut m = load_potential(path)?;
    if let Some(e) = epsilon {
        m = m.with_epsilon(e)?;
    }
    let method = match a.method {
        MethodArg::Exact => Method::Exact,
        MethodArg::Mc => {
            let estimator = match a.estimator {
                EstimatorArg::Conditional => Estimator::Conditional,
                EstimatorArg::Full => Estimator::Full,
            };
            Method::MonteCarlo(McConfig::new(a.samples, seed).with_estimator(estimator))
        }
    };
    let (value, truncation) = full_kernel_with_report(&m, a.lambda, t, &x, &y, a.order, &method, beta)?;
    let output = Output {
        json: json!({ "schema": SCHEMA, "t": t, "value": [value.re, value.im], "report": truncation }),
        csv: format!(
            "re,im,order_used,last_term_norm,converged\n{},{},{},{},{}\n",
            value.re, value.im, truncation.order_used, truncation.last_term_norm, truncation.converged
        ),
    };
    if truncation.converged {
        Ok(output)
    } else {
        Err(Failure {
            output: Some(output),
            error: Error::Truncation(format!(
                "series not converged at order {}: |v_N| = {:e}",
                truncation.order_used, truncation.last_term_norm
            ))
            .into(),
        })
    }
}

fn series(a: &SeriesArgs) -> Result<Output, CliError> {
    let m = load_potential(&a.potential)?;
    let x = parse_vector(&a.x)?;
    let y = parse_vector(&a.y)?;
    let s = small_time_coefficients(&m, &x, &y, a.order)?;
    let mut json = serde_json::to_value(&s).map_err(|e| CliError::usage(e.to_string()))?;
    json["schema"] = json!(SCHEMA);
    let mut csv = String::from("r,re,im\n");
    for (r, c) in s.coefficients.iter().enumerate() {
        let _ = writeln!(csv, "{r},{},{}", c.re, c.im);
    }
    Ok(Output { json, csv })
}

fn borel(a: &BorelArgs) -> Result<Output, CliError> {
    let raw = read_file(&a.input)?;
    let s: CoefficientSeries =
        serde_json::from_str(&raw).map_err(|e| CliError::usage(format!("{}: {e}", a.input.display())))?;
    let t = parse_complex(&a.t)?;
    if t.norm() == 0.0 {
        return Err(CliError::usage("--t must be nonzero"));
    }
    let direction = match &a.direction {
        Some(d) => parse_angle(d)?.value(),
        None => t.arg(),
    };
    let damped = (Complex64::from_polar(1.0, direction) / t).re > 0.0;
    let (sum, pade_json, poles_ok) = if a.no_pade {
        (laplace_sum(&borel_transform(&s), t, direction)?, Value::Null, true)
    } else {
        let degrees = match &a.pade {
            Some(v) => (v[0], v[1]),
            None => default_pade_degrees(s.coefficients.len()),
        };
        let pade = pade_continuation(&s, degrees)?;
        let strip = BorelDomain::strip(a.kappa, direction)?;
        let poles_ok = !pade.poles.iter().any(|&p| domain_contains(&strip, p));
        let poles: Vec<[f64; 2]> = pade.poles.iter().map(|p| [p.re, p.im]).collect();
        let info = json!({ "degrees": [pade.degrees.0, pade.degrees.1], "poles": poles });
        (laplace_sum(&pade, t, direction)?, info, poles_ok)
    };
    let domain_ok = damped && poles_ok;
    Ok(Output {
        json: json!({
            "schema": SCHEMA,
            "t": [t.re, t.im],
            "direction": direction,
            "borel_sum": [sum.re, sum.im],
            "domain_ok": domain_ok,
            "pade": pade_json,
        }),
        csv: format!("t_re,t_im,sum_re,sum_im,domain_ok\n{},{},{},{},{}\n", t.re, t.im, sum.re, sum.im, domain_ok),
    })
}

fn domains(a: &DomainsArgs) -> Result<Output, CliError> {
    let m = load_potential(&a.potential)?;
    let beta = a.beta.as_deref().map(parse_angle).transpose()?;
    let sector = domain_of_validity(&m, beta)?;
    let (case, validity) = match case_classification(&m)? {
        CaseClassification::Case1 { .. } => ("Case 1", format!("{} (Case 1)", sector.half_angle())),
        CaseClassification::Case2 { .. } => ("Case 2", "< π (Case 2)".to_string()),
        CaseClassification::Both { .. } => ("Case 1 and 2", "< π (Case 2)".to_string()),
    };
    let direction = summation_direction(m.epsilon());
    let mut json = json!({
        "schema": SCHEMA,
        "case": case,
        "validity_half_angle": validity,
        "sector": {
            "half_angle": sector.half_angle().to_string(),
            "half_angle_radians": sector.half_angle().value(),
            "rotation": sector.rotation().to_string(),
            "rotation_radians": sector.rotation().value(),
        },
        "borel_direction": direction,
    });
    let mut csv = format!(
        "key,value\ncase,{case}\nvalidity_half_angle,{validity}\nhalf_angle,{}\nrotation,{}\nborel_direction,{direction}\n",
        sector.half_angle().value(),
        sector.rotation().value()
    );
    if let Some(t) = &a.t {
        let t = parse_surface_time(t)?;
        let inside = sector.contains_arg_closed(t.theta(), 1e-12);
        json["contains"] = json!(inside);
        let _ = writeln!(csv, "contains,{inside}");
    }
    Ok(Output { json, csv })
}

fn verify(a: &VerifyArgs, seed: u64) -> Result<Output, Failure> {
    let experiment: Experiment = a.experiment.parse().map_err(|_| {
        let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        CliError::usage(format!("unknown experiment {:?}; expected one of {}", a.experiment, names.join(", ")))
    })?;
    let mut config = ExperimentConfig { seed, ..ExperimentConfig::default() };
    if let Some(n) = a.samples {
        config.samples = n;
    }
    let r = run_experiment(experiment, &config)?;
    let mut json = serde_json::to_value(&r).map_err(|e| CliError::usage(e.to_string()))?;
    json["schema"] = json!(SCHEMA);
    let output = Output {
        json,
        csv: format!(
            "experiment,max_rel_error,tolerance,pass\n{},{},{},{}\n",
            r.experiment, r.max_rel_error, r.tolerance, r.pass
        ),
    };
    if r.pass {
        Ok(output)
    } else {
        Err(Failure {
            output: Some(output),
            error: CliError {
                kind: "verification".into(),
                message: format!("{}: error {:e} exceeds {:e}", r.experiment, r.max_rel_error, r.tolerance),
                code: EXIT_FAILURE,
            },
        })
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError { kind: "io".into(), message: format!("cannot read {}: {e}", path.display()), code: EXIT_FAILURE })
}

fn load_potential(path: &Path) -> Result<PotentialMeasure, CliError> {
    let raw = read_file(path)?;
    serde_json::from_str(&raw).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn parse_f64(s: &str) -> Result<f64, CliError> {
    let v: f64 = s.trim().parse().map_err(|_| CliError::usage(format!("not a number: {s:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::usage(format!("not a finite number: {s:?}")))
    }
}

/// "re" or "re,im".
fn parse_complex(s: &str) -> Result<Complex64, CliError> {
    match s.split_once(',') {
        Some((re, im)) => Ok(Complex64::new(parse_f64(re)?, parse_f64(im)?)),
        None => Ok(Complex64::new(parse_f64(s)?, 0.0)),
    }
}

fn parse_vector(s: &str) -> Result<ComplexVector, CliError> {
    let components = s.split(';').map(parse_complex).collect::<Result<Vec<_>, _>>()?;
    Ok(ComplexVector::new(components)?)
}

/// Radians, or a multiple of π such as "pi/2", "-3pi/4", "3*π/4".
fn parse_angle(s: &str) -> Result<Angle, CliError> {
    let s = s.trim();
    let Some((coeff, rest)) = s.split_once("pi").or_else(|| s.split_once('π')) else {
        return Ok(Angle::radians(parse_f64(s)?));
    };
    let bad = || CliError::usage(format!("cannot read angle {s:?}"));
    let coeff = coeff.trim().trim_end_matches('*').trim();
    let num: i64 = match coeff {
        "" | "+" => 1,
        "-" => -1,
        c => c.parse().map_err(|_| bad())?,
    };
    let den: i64 = match rest.trim() {
        "" => 1,
        r => r.strip_prefix('/').ok_or_else(bad)?.trim().parse().map_err(|_| bad())?,
    };
    if den <= 0 {
        return Err(bad());
    }
    Ok(Angle::pi_frac(num, den))
}

/// "r,theta" with θ in radians or as a multiple of π.
fn parse_surface_time(s: &str) -> Result<SurfaceTime, CliError> {
    let (r, theta) = s
        .split_once(',')
        .ok_or_else(|| CliError::usage(format!("surface time must be \"r,theta\", got {s:?}")))?;
    Ok(SurfaceTime::new(parse_f64(r)?, parse_angle(theta)?.value())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles() {
        assert_eq!(parse_angle("pi/2").unwrap().value(), std::f64::consts::FRAC_PI_2);
        assert_eq!(parse_angle("-3pi/4").unwrap().to_string(), "-3π/4");
        assert_eq!(parse_angle("3*π/4").unwrap().to_string(), "3π/4");
        assert_eq!(parse_angle("π").unwrap().to_string(), "π");
        assert_eq!(parse_angle("0.25").unwrap().value(), 0.25);
        assert!(parse_angle("pi/0").is_err());
        assert!(parse_angle("xpi").is_err());
    }

    #[test]
    fn vectors() {
        let v = parse_vector("1;0.5,-2").unwrap();
        assert_eq!(v.components(), &[Complex64::new(1.0, 0.0), Complex64::new(0.5, -2.0)]);
        assert!(parse_vector("1;;2").is_err());
    }

    #[test]
    fn surface_times() {
        let t = parse_surface_time("2,pi/2").unwrap();
        assert_eq!((t.r(), t.theta()), (2.0, std::f64::consts::FRAC_PI_2));
        assert!(parse_surface_time("2").is_err());
    }
}
