//! Command-line surface: fit, margins, iptw, grid and plot.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical
//! non-convergence (including a failed canonical-geometry check in
//! `grid`). No other codes are used.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use canonlink::effects::{
    coefficient_risk_difference, iptw_risk_difference, standardized_risk_difference, EffectMethod,
    MarginalEffect,
};
use canonlink::explorer::{
    ba_points_to_csv, bland_altman, parse_records_csv, pattern_checks, records_to_csv, run_grid,
    GridSpec,
};
use canonlink::glm::{fit_glm, FitResult, ModelSpec};
use canonlink::link::Link;
use canonlink::output::ResultDocument;
use canonlink::plot::{render_bland_altman_svg, PANEL_ORDER};
use canonlink::CellTable;

#[derive(Parser)]
#[command(
    name = "canonlink",
    about = "Binomial GLM engine for randomized-trial covariate adjustment",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a binomial GLM and print the result as JSON.
    Fit(ModelArgs),
    /// Estimate the marginal risk difference from a fitted model.
    Margins(MarginsArgs),
    /// Estimate the marginal risk difference by inverse probability of
    /// treatment weighting.
    Iptw {
        /// Cell CSV file (`x,z,events,trials`).
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the systematic grid and write records, Bland-Altman
    /// coordinates and the pattern report.
    Grid {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the three-panel Bland-Altman SVG from a records CSV.
    Plot {
        /// Records CSV produced by `grid`.
        #[arg(long)]
        records: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Cell CSV file (`x,z,events,trials`).
    #[arg(long)]
    data: PathBuf,
    /// Link function: logit|probit|identity|log|cloglog.
    #[arg(long)]
    link: String,
    #[command(flatten)]
    adjustment: Adjustment,
}

/// Exactly one of `--adjusted` / `--unadjusted` must be given.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct Adjustment {
    /// Adjust for the covariate x.
    #[arg(long)]
    adjusted: bool,
    /// Model treatment only.
    #[arg(long)]
    unadjusted: bool,
}

#[derive(Args)]
struct MarginsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Estimation method: standardization|coefficient.
    #[arg(long, default_value = "standardization")]
    method: String,
}

/// Failures mapped onto the documented exit codes.
enum CliError {
    /// Usage or input problem: exit 1.
    Input(String),
    /// Numerical non-convergence: exit 2, after any diagnostics printed.
    NonConvergence(String),
}

impl CliError {
    fn input(e: impl std::fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Margins(args) => cmd_margins(&args),
        Command::Iptw { data } => cmd_iptw(&data),
        Command::Grid { out } => cmd_grid(&out),
        Command::Plot { records, out } => cmd_plot(&records, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::NonConvergence(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn load_table(path: &Path) -> Result<CellTable, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    canonlink::parse_cell_csv(&text).map_err(CliError::input)
}

fn parse_model(args: &ModelArgs) -> Result<ModelSpec, CliError> {
    let link = Link::from_str(&args.link).map_err(CliError::input)?;
    Ok(ModelSpec {
        link,
        adjusted: args.adjustment.adjusted,
    })
}

/// Runs the fit. Hard solver errors (rank deficiency) are input problems;
/// non-convergence comes back inside the result and is handled per
/// command.
fn run_fit(spec: ModelSpec, table: &CellTable) -> Result<FitResult, CliError> {
    fit_glm(spec, table).map_err(CliError::input)
}

fn cmd_fit(args: &ModelArgs) -> CliResult {
    let spec = parse_model(args)?;
    let table = load_table(&args.data)?;
    let fit = run_fit(spec, &table)?;
    println!("{}", ResultDocument::from_fit(&fit).to_json());
    if fit.converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "fit did not converge after {} iterations (score norm {:e})",
            fit.iterations, fit.final_score_norm
        )))
    }
}

/// Three decimals, half-to-even, with negative zero normalized away.
fn round3(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn human_summary(effect: &MarginalEffect, spec: Option<ModelSpec>) -> String {
    let context = match spec {
        Some(spec) => format!(
            "{}, {}, {}",
            effect.method,
            spec.link,
            if spec.adjusted {
                "adjusted"
            } else {
                "unadjusted"
            }
        ),
        None => effect.method.to_string(),
    };
    format!(
        "risk difference ({context}): {} (SE {})",
        round3(effect.estimate),
        round3(effect.std_error)
    )
}

fn cmd_margins(args: &MarginsArgs) -> CliResult {
    let method = match args.method.as_str() {
        "standardization" => EffectMethod::Standardization,
        "coefficient" => EffectMethod::Coefficient,
        other => {
            return Err(CliError::Input(format!(
                "unknown method `{other}`: expected standardization|coefficient"
            )))
        }
    };
    let spec = parse_model(&args.model)?;
    if method == EffectMethod::Coefficient && spec.link != Link::Identity {
        return Err(CliError::Input(format!(
            "coefficient risk difference requires the identity link, got {}",
            spec.link
        )));
    }
    let table = load_table(&args.model.data)?;
    let fit = run_fit(spec, &table)?;
    if !fit.converged {
        println!("{}", ResultDocument::from_fit(&fit).to_json());
        return Err(CliError::NonConvergence(format!(
            "fit did not converge after {} iterations; no marginal effect derived",
            fit.iterations
        )));
    }
    let effect = match method {
        EffectMethod::Standardization => standardized_risk_difference(&fit, spec, &table),
        EffectMethod::Coefficient => coefficient_risk_difference(&fit, spec),
        EffectMethod::Iptw => unreachable!("not a margins method"),
    }
    .map_err(CliError::input)?;
    println!(
        "{}",
        ResultDocument::from_fit_with_effect(&fit, &effect).to_json()
    );
    eprintln!("{}", human_summary(&effect, Some(spec)));
    Ok(())
}

fn cmd_iptw(data: &Path) -> CliResult {
    let table = load_table(data)?;
    let effect = iptw_risk_difference(&table).map_err(CliError::input)?;
    println!("{}", ResultDocument::from_effect(&effect).to_json());
    eprintln!("{}", human_summary(&effect, None));
    Ok(())
}

/// Optional cap on grid parallelism from the environment.
fn grid_thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("CANONLINK_THREADS") {
        Ok(raw) => match raw.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Input(format!(
                "CANONLINK_THREADS must be a positive integer, got `{raw}`"
            ))),
        },
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Input(format!("CANONLINK_THREADS: {e}"))),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn cmd_grid(out: &Path) -> CliResult {
    let spec = GridSpec::default();
    let records = match grid_thread_cap()? {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
            pool.install(|| run_grid(&spec))
        }
        None => run_grid(&spec),
    }
    .map_err(CliError::input)?;

    fs::create_dir_all(out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;
    write_file(out, "records.csv", &records_to_csv(&records))?;
    for link in PANEL_ORDER {
        write_file(
            out,
            &format!("ba_{link}.csv"),
            &ba_points_to_csv(&bland_altman(&records, link)),
        )?;
    }
    let report = pattern_checks(&records);
    write_file(out, "pattern_report.json", &report.to_json())?;

    if report.passes() {
        Ok(())
    } else {
        Err(CliError::NonConvergence(
            "canonical-link extremeness check failed; see pattern_report.json".to_string(),
        ))
    }
}

fn cmd_plot(records: &Path, out: &Path) -> CliResult {
    let text = fs::read_to_string(records)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", records.display())))?;
    let records = parse_records_csv(&text).map_err(CliError::input)?;
    let svg = render_bland_altman_svg(&records).map_err(CliError::input)?;
    fs::write(out, svg).map_err(|e| CliError::Input(format!("cannot write {}: {e}", out.display())))
}
