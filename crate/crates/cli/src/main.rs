//! `polset`: batch front end for the polarisation-set toolkit.
//!
//! Exit codes: 0 on success, 1 on a computation error or a failed verification,
//! 2 on invalid input.

mod commands;
mod config;
mod output;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polset_core::verify::DEFAULT_SEED;
use thiserror::Error;

use commands::{FibreVariant, Format, Pair, SymbolKind};
use config::{Body, ConfigError, RunConfig, Tolerances};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "polset", version, about = "Bicharacteristics, parallel propagators and polarisation fibres")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; defaults to Minkowski 4D with the scalar wave operator.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    tol_null: Option<f64>,
    #[arg(long, global = true)]
    tol_pos: Option<f64>,
    #[arg(long, global = true)]
    tol_cov: Option<f64>,
    #[arg(long, global = true)]
    lambda_max: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct PointArgs {
    /// Base point, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    x: Option<Vec<f64>>,
    /// Covector at the base point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    k: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct PairArgs {
    #[command(flatten)]
    here: PointArgs,
    /// Second base point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    xp: Option<Vec<f64>>,
    /// Covector at the second point, unsigned.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    kp: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WhichArg {
    Principal,
    Refined,
    Subprincipal,
    Compose,
    Dual,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    #[value(name = "EP")]
    Ep,
    #[value(name = "EP+")]
    EpPlus,
    #[value(name = "EP-")]
    EpMinus,
    #[value(name = "proca")]
    Proca,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a bicharacteristic strip; CSV rows of lambda, x, k, q.
    Geodesic {
        #[command(flatten)]
        point: PointArgs,
        /// Affine range `lo,hi` containing 0.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1, default_value = "0,10")]
        lambda_range: Vec<f64>,
    },
    /// Decide whether (x, k; x', -k') lies in the relation.
    Relate(PairArgs),
    /// Parallel propagator of the operator's connection along the witness.
    Transport(PairArgs),
    /// Symbol coefficient tables of the configured operator.
    Symbol {
        #[arg(value_enum)]
        which: WhichArg,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Polarisation fibre at a pair of phase points.
    Polfibre {
        #[arg(value_enum)]
        variant: VariantArg,
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Proca chain at a relation point; defaults to a related Minkowski pair.
    ProcaDemo(PairArgs),
    /// Run the verification suite; exits 1 if any check fails.
    Verify,
}

fn required<'a>(v: &'a Option<Vec<f64>>, flag: &str) -> Result<&'a [f64], CliError> {
    v.as_deref().ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

fn pair(a: &PairArgs) -> Result<Pair<'_>, CliError> {
    Ok(Pair {
        x: required(&a.here.x, "x")?,
        k: required(&a.here.k, "k")?,
        xp: required(&a.xp, "xp")?,
        kp: required(&a.kp, "kp")?,
    })
}

fn load(path: &Option<PathBuf>) -> Result<Option<RunConfig>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(Some(RunConfig::from_str(&text)?))
}

fn run(cli: &Cli) -> Result<(String, bool), CliError> {
    let c = &cli.common;
    let overrides = Tolerances { tol_null: c.tol_null, tol_pos: c.tol_pos, tol_cov: c.tol_cov, lambda_max: c.lambda_max };
    for (flag, v) in [("tol-null", c.tol_null), ("tol-pos", c.tol_pos), ("tol-cov", c.tol_cov), ("lambda-max", c.lambda_max)] {
        if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
            return Err(CliError::Usage(format!("--{flag} must be a positive number")));
        }
    }
    let loaded = load(&c.config)?;
    let format = match (&cli.command, c.format) {
        (Command::Geodesic { .. }, None) | (_, Some(FormatArg::Csv)) => Format::Csv,
        _ => Format::Json,
    };
    if format == Format::Csv && !matches!(cli.command, Command::Geodesic { .. }) {
        return Err(CliError::Usage("--format csv is only available for geodesic".into()));
    }
    if let Command::Verify = cli.command {
        let setup = loaded.as_ref().map(|cfg| cfg.setup(overrides)).transpose()?;
        let seed = c.seed.or(loaded.as_ref().and_then(|cfg| cfg.seed)).unwrap_or(DEFAULT_SEED);
        return Ok(commands::verify(setup.as_ref(), seed));
    }
    let cfg = match (loaded, &cli.command) {
        (Some(cfg), _) => cfg,
        (None, Command::ProcaDemo(_)) => RunConfig { body: Body::Proca { mass: 1.0 }, ..RunConfig::builtin() },
        (None, _) => RunConfig::builtin(),
    };
    let s = cfg.setup(overrides)?;
    let text = match &cli.command {
        Command::Geodesic { point, lambda_range } => {
            let [lo, hi] = lambda_range[..] else {
                return Err(CliError::Usage("--lambda-range takes two values".into()));
            };
            commands::geodesic(&s, required(&point.x, "x")?, required(&point.k, "k")?, (lo, hi), format)?
        }
        Command::Relate(a) => commands::relate(&s, &pair(a)?)?,
        Command::Transport(a) => commands::transport(&s, &pair(a)?)?,
        Command::Symbol { which, point } => {
            let which = match which {
                WhichArg::Principal => SymbolKind::Principal,
                WhichArg::Refined => SymbolKind::Refined,
                WhichArg::Subprincipal => SymbolKind::Subprincipal,
                WhichArg::Compose => SymbolKind::Compose,
                WhichArg::Dual => SymbolKind::Dual,
            };
            let at = match (&point.x, &point.k) {
                (Some(x), Some(k)) => Some((x.as_slice(), k.as_slice())),
                (None, None) => None,
                _ => return Err(CliError::Usage("give both --x and --k, or neither".into())),
            };
            commands::symbol(&s, which, at)?
        }
        Command::Polfibre { variant, pair: a } => {
            let variant = match variant {
                VariantArg::Ep => FibreVariant::Ep,
                VariantArg::EpPlus => FibreVariant::EpPlus,
                VariantArg::EpMinus => FibreVariant::EpMinus,
                VariantArg::Proca => FibreVariant::Proca,
            };
            commands::polfibre(&s, &pair(a)?, variant)?
        }
        Command::ProcaDemo(a) => {
            let n = s.spacetime.dim();
            let origin = vec![0.0; n];
            let mut k = vec![0.0; n];
            k[0] = 1.0;
            k[n - 1] = 1.0;
            let mut x = vec![0.0; n];
            x[0] = -2.0;
            x[n - 1] = 2.0;
            let p = Pair {
                x: a.here.x.as_deref().unwrap_or(&x),
                k: a.here.k.as_deref().unwrap_or(&k),
                xp: a.xp.as_deref().unwrap_or(&origin),
                kp: a.kp.as_deref().unwrap_or(&k),
            };
            commands::proca_demo(&s, &p)?
        }
        Command::Verify => unreachable!(),
    };
    Ok((text, true))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (text, passed) = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("polset: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let written = match &cli.common.out {
        Some(path) => fs::write(path, &text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("polset: {}", CliError::Io(e));
        return ExitCode::from(1);
    }
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
