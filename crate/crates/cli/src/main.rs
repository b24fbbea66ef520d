use std::process::ExitCode;

use clap::{Parser, Subcommand};

use plnma_cli::analysis::{analyse, FitArgs, Format};
use plnma_cli::error::{CliError, CliResult};
use plnma_cli::report::{csv_string, FitReportDocument, ReportRow};
use plnma_cli::simulate::{cmd_simulate, SimulateArgs};

/// Penalized-likelihood network meta-analysis of binary outcomes.
#[derive(Debug, Parser)]
#[command(name = "plnma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a network and report every treatment against the reference
    Fit {
        #[command(flatten)]
        args: FitArgs,
        /// Emit every pairwise contrast instead of only those against the reference
        #[arg(long)]
        league: bool,
    },
    /// Run a Monte Carlo scenario and write estimates.csv and summary.json
    Simulate(SimulateArgs),
    /// Report a single contrast `t2` versus `t1`
    Contrast {
        #[command(flatten)]
        args: FitArgs,
        /// Pair `t1,t2`
        #[arg(long)]
        pair: String,
    },
}

fn emit(doc: &FitReportDocument, rows: &[ReportRow], format: Format) -> CliResult<String> {
    Ok(match format {
        Format::Table => doc.render_table(rows),
        Format::Csv => csv_string(rows)?,
        Format::Json => doc.to_json() + "\n",
    })
}

fn cmd_fit(args: &FitArgs, league: bool) -> CliResult<String> {
    let a = analyse(args)?;
    let table = a.league()?;
    let doc = FitReportDocument::build(&a, &table.rows);
    let rows = if league { &doc.league } else { &doc.estimates };
    emit(&doc, rows, args.format)
}

fn cmd_contrast(args: &FitArgs, pair: &str) -> CliResult<String> {
    let (t1, t2) = pair
        .split_once(',')
        .map(|(a, b)| (a.trim(), b.trim()))
        .ok_or_else(|| CliError::config(format!("--pair expects t1,t2, got `{pair}`")))?;
    let a = analyse(args)?;
    let row = ReportRow::from_contrast(a.method.as_str(), &a.contrast(t1, t2)?);
    let doc = FitReportDocument::with_rows(&a, vec![row.clone()], Vec::new());
    emit(&doc, &[row], args.format)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit { args, league } => cmd_fit(args, *league),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Contrast { args, pair } => cmd_contrast(args, pair),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
