use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use exact_selective::conditioning::ModelKind;
use exact_selective::inference::Method;
use exact_selective::numerics::QuadratureSpec;
use exact_selective::study::SimConfig;
use exact_selective_cli::config::{self, resolve_randomization, AnalysisConfig, DEFAULT_SEED};
use exact_selective_cli::{
    emit, rows_to_csv, run_infer, run_select, run_simulate, run_validate, to_json,
};

/// Exact selective inference after randomized LASSO selection.
///
/// Results depend on the seed through the randomization; rerunning with the
/// same seed and inputs reproduces every output byte for byte.
#[derive(Parser)]
#[command(name = "exsel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized LASSO and report the selected features.
    Select(DataArgs),
    /// Select, then report confidence intervals for the selected coefficients.
    Infer(InferArgs),
    /// Run a Monte-Carlo study; writes summary.json and replicates.csv.
    Simulate(StudyArgs),
    /// Check uniformity of a pivot at the true targets (KS test).
    Validate(ValidateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// TOML file with an [analysis] table; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV with a header row; every column except the response is a feature.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Name of the response column.
    #[arg(long)]
    response: Option<String>,
    /// LASSO penalty (default: σ̂·√(2 log p)·mean column norm).
    #[arg(long)]
    lambda: Option<f64>,
    /// Fraction of a matching data split used for selection (default 0.8).
    #[arg(long, conflicts_with = "tau2")]
    rho: Option<f64>,
    /// Randomization scale τ² of Ω = τ²XᵀX.
    #[arg(long)]
    tau2: Option<f64>,
    /// Ridge term of the randomized LASSO.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Known noise standard deviation (default: plug-in estimate).
    #[arg(long)]
    sigma: Option<f64>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Center features and response.
    #[arg(long)]
    center: bool,
    /// Scale features to unit standard deviation.
    #[arg(long)]
    scale: bool,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Methods to run, comma separated: exact, polyhedral, split, uv.
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    /// Target of inference: selected or full.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Miscoverage level of the two-sided intervals.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    quad_points: Option<usize>,
    /// Quadrature half-width in conditional standard deviations.
    #[arg(long)]
    quad_width: Option<f64>,
}

#[derive(Args)]
struct StudyArgs {
    /// TOML file with a [simulation] table; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    quad_points: Option<usize>,
    #[arg(long)]
    quad_width: Option<f64>,
    /// Output directory (simulate) or file (validate; default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// Evaluate the pivot this many standard errors away from the truth.
    #[arg(long, default_value_t = 0.0)]
    shift: f64,
}

fn analysis_config(args: &DataArgs, infer: Option<&InferArgs>) -> Result<AnalysisConfig> {
    let file = config::load(args.config.as_deref())?.analysis;
    let Some(input) = args.input.clone().or(file.input) else {
        bail!("no input file: pass --input or set `input` in the config");
    };
    let default_quad = QuadratureSpec::default();
    let methods = match infer {
        Some(i) if !i.method.is_empty() => i.method.clone(),
        _ => file.methods.unwrap_or_else(|| vec![Method::Exact]),
    };
    let (rho, tau2) = if args.rho.is_some() || args.tau2.is_some() {
        (args.rho, args.tau2)
    } else {
        (file.rho, file.tau2)
    };
    Ok(AnalysisConfig {
        input,
        response: args
            .response
            .clone()
            .or(file.response)
            .unwrap_or_else(|| "y".into()),
        methods,
        model: infer
            .and_then(|i| i.model)
            .or(file.model)
            .unwrap_or(ModelKind::Selected),
        alpha: infer.and_then(|i| i.alpha).or(file.alpha).unwrap_or(0.1),
        lambda: args.lambda.or(file.lambda),
        randomization: resolve_randomization(rho, tau2)?,
        epsilon: args.epsilon.or(file.epsilon),
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        sigma: args.sigma.or(file.sigma),
        quad: QuadratureSpec {
            n_points: infer
                .and_then(|i| i.quad_points)
                .or(file.quad_points)
                .unwrap_or(default_quad.n_points),
            half_width_sigmas: infer
                .and_then(|i| i.quad_width)
                .or(file.quad_width)
                .unwrap_or(default_quad.half_width_sigmas),
        },
        center: args.center || file.center.unwrap_or(false),
        scale: args.scale || file.scale.unwrap_or(false),
    })
}

fn sim_config(args: &StudyArgs) -> Result<SimConfig> {
    let mut c = config::load(args.config.as_deref())?
        .simulation
        .unwrap_or_default();
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.reps {
        c.n_reps = v;
    }
    if !args.method.is_empty() {
        c.methods = args.method.clone();
    }
    if let Some(v) = args.model {
        c.model = v;
    }
    if let Some(v) = args.alpha {
        c.alpha = v;
    }
    if let Some(v) = args.rho {
        c.rho = v;
    }
    if let Some(v) = args.quad_points {
        c.quad_points = v;
    }
    if let Some(v) = args.quad_width {
        c.quad_width = v;
    }
    c.validate()?;
    Ok(c)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Select(args) => {
            let cfg = analysis_config(&args, None)?;
            emit(args.out.as_deref(), &to_json(&run_select(&cfg)?)?)
        }
        Command::Infer(args) => {
            let cfg = analysis_config(&args.data, Some(&args))?;
            let report = run_infer(&cfg)?;
            let out = args.data.out.as_deref();
            let csv =
                out.is_some_and(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")));
            let bytes = if csv {
                rows_to_csv(report.rows())?
            } else {
                to_json(&report)?
            };
            emit(out, &bytes)
        }
        Command::Simulate(args) => {
            let cfg = sim_config(&args)?;
            let dir = args
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("study-output"));
            let summary = run_simulate(&cfg, &dir)?;
            for m in &summary.methods {
                eprintln!(
                    "{:<10} coverage {:.3} ± {:.3}  length {:.3}  failed reps {}",
                    m.method.as_str(),
                    m.coverage.mean,
                    m.coverage.se,
                    m.length.mean,
                    m.failed_replicates
                );
            }
            eprintln!("wrote {}", dir.display());
            Ok(())
        }
        Command::Validate(args) => {
            let cfg = sim_config(&args.study)?;
            let method = match cfg.methods.as_slice() {
                [m] => *m,
                _ if args.study.method.is_empty() => Method::Exact,
                _ => bail!("validate takes a single --method (exact or polyhedral)"),
            };
            let report = run_validate(&cfg, method, args.shift)?;
            emit(args.study.out.as_deref(), &to_json(&report)?)
        }
    }
}
