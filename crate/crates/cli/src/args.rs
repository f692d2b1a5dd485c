//! Command-line grammar. Domain checks that clap cannot express (He > 0,
//! |rho| < 1, ...) live in the value parsers so they surface as usage errors.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cloudsre::{ACoeff, BCoeff, Definition, Form};

const EXIT_CODES: &str = "\
Exit codes:
  0  success; every diagnostic check passed
  1  a diagnostic check failed
  2  usage, domain or I/O error
  3  numeric anomaly (divergence guard at |X| > 1e12, non-summable series)";

#[derive(Debug, Parser)]
#[command(
    name = "cloudsre",
    version,
    about = "Simulate the p-order cloud model and the recursion X_t = A_t|X_{t-1}| + B_t",
    after_help = EXIT_CODES
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Master seed of the noise stream
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output format; diagnostics and series only support json
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for ensemble diagnostics (default: available parallelism)
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw cloud drops.
    ///
    /// x_1 = R_N(En_p, He), x_i = R_N(En_{p-i+1}, |x_{i-1}|) for i = 2..p;
    /// equivalently x_i = En_{p-i+1} + |x_{i-1}| eps_i with x_0 = He.
    #[command(after_help = EXIT_CODES)]
    Generate(GenerateArgs),
    /// Run the linear or abs-form recursion forward.
    ///
    /// linear: X_t = A_t X_{t-1} + B_t;  abs: X_t = A_t |X_{t-1}| + B_t.
    #[command(after_help = EXIT_CODES)]
    Simulate(SimulateArgs),
    /// Sum the backward series of the linear recursion.
    ///
    /// X_n = sum_{k>=0} (A_{n-1} ... A_{n-k}) B_{n-k-1}, truncated once the
    /// coefficient product drops below --tol.
    #[command(after_help = EXIT_CODES)]
    Series(SeriesArgs),
    /// Estimate the Lyapunov exponent E[log|A|] for A = scale * eps.
    ///
    /// Closed form: E[log|scale * eps|] = ln(scale) - (gamma + ln 2)/2.
    /// The check passes when the estimate is within 4 standard errors of it.
    #[command(after_help = EXIT_CODES)]
    Lyapunov(LyapunovArgs),
    /// Couple two abs-form runs on one coefficient path.
    ///
    /// Checks |X_t - X'_t| <= |A_t| |X_{t-1} - X'_{t-1}| at every step.
    #[command(after_help = EXIT_CODES)]
    Couple(CoupleArgs),
    /// KS test of X_{burn-in} against X_{burn-in + lag} across replicas.
    ///
    /// Stationarity is expected when E[log|A|] < 0 and E[log+ |B|] < inf.
    /// Each lag passes when its p-value is at least 0.01.
    #[command(after_help = EXIT_CODES)]
    Stationarity(StationarityArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// En_1,...,En_p, expectation first
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    pub en: EnList,
    /// Hyper-entropy He > 0
    #[arg(long, value_parser = parse_positive)]
    pub he: f64,
    /// Number of drops
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Generator: 1 = nested sampler calls, 2 = explicit recursion
    #[arg(long = "def", value_parser = parse_definition, default_value = "1")]
    pub definition: Definition,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub form: FormArg,
    /// const:<v> | gauss:<scale>
    #[arg(long, value_parser = parse_a, allow_hyphen_values = true)]
    pub a: ACoeff,
    /// const:<v> | gauss:<m>,<s> | ar1:<m>,<rho>,<s>
    #[arg(long, value_parser = parse_b, allow_hyphen_values = true)]
    pub b: BCoeff,
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite, allow_hyphen_values = true)]
    pub x0: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Linear,
    Abs,
}

impl From<FormArg> for Form {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Linear => Form::Linear,
            FormArg::Abs => Form::Abs,
        }
    }
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    #[arg(long, value_parser = parse_a, allow_hyphen_values = true)]
    pub a: ACoeff,
    #[arg(long, value_parser = parse_b, allow_hyphen_values = true)]
    pub b: BCoeff,
    /// Maximum number of series terms
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub kmax: u64,
    /// Stop once |A_{n-1} ... A_{n-k}| < tol
    #[arg(long, default_value_t = 1e-12, value_parser = parse_positive)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct LyapunovArgs {
    /// A = scale * eps
    #[arg(long, value_parser = parse_positive)]
    pub scale: f64,
    /// At least 1000
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct CoupleArgs {
    /// A = scale * eps
    #[arg(long, value_parser = parse_positive)]
    pub scale: f64,
    /// const:<v> | gauss:<m>,<s> | ar1:<m>,<rho>,<s>
    #[arg(long, value_parser = parse_b, allow_hyphen_values = true, default_value = "const:1")]
    pub b: BCoeff,
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite, allow_hyphen_values = true)]
    pub x0: f64,
    #[arg(long = "x0-alt", default_value_t = 100.0, value_parser = parse_finite, allow_hyphen_values = true)]
    pub x0_alt: f64,
    /// At least 10
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct StationarityArgs {
    /// A = scale * eps
    #[arg(long, value_parser = parse_positive)]
    pub scale: f64,
    /// const:<v> | gauss:<m>,<s> | ar1:<m>,<rho>,<s>
    #[arg(long, value_parser = parse_b, allow_hyphen_values = true, default_value = "const:1")]
    pub b: BCoeff,
    #[arg(long = "burn-in", default_value_t = cloudsre::diagnostics::DEFAULT_BURN_IN)]
    pub burn_in: usize,
    /// Positive lags, comma-separated
    #[arg(long, value_parser = parse_lags, default_value = "50,100,200")]
    pub lags: Lags,
    /// At least 50
    #[arg(long, default_value_t = 500)]
    pub replicas: usize,
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite, allow_hyphen_values = true)]
    pub x0: f64,
}

// Newtypes so clap treats each list as one value rather than a repeated flag.

#[derive(Debug, Clone, PartialEq)]
pub struct EnList(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lags(pub Vec<usize>);

fn parse_finite(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v = parse_finite(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn parse_nonnegative(s: &str) -> Result<f64, String> {
    let v = parse_finite(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be nonnegative, got {v}"))
    }
}

fn parse_list(s: &str) -> Result<EnList, String> {
    s.split(',').map(parse_finite).collect::<Result<_, _>>().map(EnList)
}

fn parse_lags(s: &str) -> Result<Lags, String> {
    let lags = s
        .split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("`{t}` is not a positive lag")),
            Ok(l) => Ok(l),
        })
        .collect::<Result<_, _>>()?;
    Ok(Lags(lags))
}

fn parse_definition(s: &str) -> Result<Definition, String> {
    match s {
        "1" => Ok(Definition::Def1),
        "2" => Ok(Definition::Def2),
        _ => Err(format!("`{s}` is not 1 or 2")),
    }
}

fn split_spec(s: &str) -> Result<(&str, Vec<&str>), String> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| format!("`{s}` should look like kind:value[,value...]"))?;
    Ok((kind, rest.split(',').collect()))
}

fn arity<'a>(kind: &str, args: &'a [&'a str], n: usize) -> Result<&'a [&'a str], String> {
    if args.len() == n {
        Ok(args)
    } else {
        Err(format!("{kind} takes {n} value(s), got {}", args.len()))
    }
}

pub fn parse_a(s: &str) -> Result<ACoeff, String> {
    let (kind, args) = split_spec(s)?;
    match kind {
        "const" => Ok(ACoeff::Const {
            value: parse_finite(arity(kind, &args, 1)?[0])?,
        }),
        "gauss" => Ok(ACoeff::Gaussian {
            scale: parse_nonnegative(arity(kind, &args, 1)?[0])?,
        }),
        _ => Err(format!("unknown A kind `{kind}` (const, gauss)")),
    }
}

pub fn parse_b(s: &str) -> Result<BCoeff, String> {
    let (kind, args) = split_spec(s)?;
    match kind {
        "const" => Ok(BCoeff::Const {
            value: parse_finite(arity(kind, &args, 1)?[0])?,
        }),
        "gauss" => {
            let v = arity(kind, &args, 2)?;
            Ok(BCoeff::Gaussian {
                mean: parse_finite(v[0])?,
                sd: parse_nonnegative(v[1])?,
            })
        }
        "ar1" => {
            let v = arity(kind, &args, 3)?;
            let rho = parse_finite(v[1])?;
            if rho.abs() >= 1.0 {
                return Err(format!("AR(1) needs |rho| < 1, got {rho}"));
            }
            Ok(BCoeff::Ar1 {
                mean: parse_finite(v[0])?,
                rho,
                sd: parse_nonnegative(v[2])?,
            })
        }
        _ => Err(format!("unknown B kind `{kind}` (const, gauss, ar1)")),
    }
}
