use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use plnma::simulation::{run_scenario, Method, Metrics, ScenarioConfig, SimReport};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::report::SCHEMA_VERSION;

pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario TOML file
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario grid row (1-32)
    #[arg(long)]
    pub preset: Option<usize>,
    /// Overrides the scenario's replication count
    #[arg(long)]
    pub reps: Option<usize>,
    /// Overrides the scenario's seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of pl-wald,pl-profile,pl-phi,mle,iv-common,iv-random
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    schema_version: u32,
    #[serde(flatten)]
    report: &'a SimReport,
}

pub fn load_config(args: &SimulateArgs) -> CliResult<ScenarioConfig> {
    let mut cfg = match (&args.scenario, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            ScenarioConfig::from_toml(&text)?
        }
        (None, Some(row)) => ScenarioConfig::preset(row, 1, 1000)?,
        (None, None) => return Err(CliError::config("need --scenario or --preset")),
    };
    if let Some(reps) = args.reps {
        cfg.reps = reps;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_methods(names: &[String]) -> CliResult<Vec<Method>> {
    if names.is_empty() {
        return Ok(Method::ALL.to_vec());
    }
    names
        .iter()
        .map(|s| s.trim().parse::<Method>().map_err(CliError::from))
        .collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => v.to_string(),
        _ => String::new(),
    }
}

fn metric_fields(m: Option<&Metrics>) -> [String; 5] {
    [
        fmt_opt(m.map(|m| m.mean_bias)),
        fmt_opt(m.map(|m| m.coverage)),
        fmt_opt(m.map(|m| m.mse)),
        fmt_opt(m.map(|m| m.mean_ci_length)),
        fmt_opt(m.map(|m| m.mc_se_bias)),
    ]
}

pub fn estimates_csv(report: &SimReport) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "method",
        "estimand",
        "truth",
        "successes",
        "convergence_failures",
        "mean_bias",
        "coverage",
        "mse",
        "mean_ci_length",
        "mc_se_bias",
    ];
    let io = |e: csv::Error| CliError::config(e.to_string());
    w.write_record(header).map_err(io)?;
    for m in &report.methods {
        let mut rows: Vec<(String, String, Option<&Metrics>)> = m
            .per_estimand
            .iter()
            .map(|e| (e.estimand.clone(), e.truth.to_string(), e.metrics.as_ref()))
            .collect();
        rows.push(("all".into(), String::new(), m.aggregate.as_ref()));
        for (estimand, truth, metrics) in rows {
            let mut rec = vec![
                m.method.as_str().to_string(),
                estimand,
                truth,
                m.successes.to_string(),
                m.convergence_failures.to_string(),
            ];
            rec.extend(metric_fields(metrics));
            w.write_record(&rec).map_err(io)?;
        }
    }
    let buf = w
        .into_inner()
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

pub fn summary_json(report: &SimReport) -> String {
    let doc = SummaryDocument {
        schema_version: SCHEMA_VERSION,
        report,
    };
    serde_json::to_string_pretty(&doc).expect("summary serializes")
}

fn overview(report: &SimReport) -> String {
    let mut out = String::new();
    let p = &report.zero_study_profile;
    let _ = writeln!(
        out,
        "{}: {} reps, all-zero studies per rep min/q1/median/q3/max = {}/{}/{}/{}/{}",
        report.scenario.name, report.scenario.reps, p.min, p.q1, p.median, p.q3, p.max
    );
    let _ = writeln!(
        out,
        "{:<11} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "method", "failures", "bias", "coverage", "mse", "ci_len", "mc_se"
    );
    for m in &report.methods {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        let a = m.aggregate.as_ref();
        let _ = writeln!(
            out,
            "{:<11} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9}",
            m.method.as_str(),
            m.convergence_failures,
            f(a.map(|a| a.mean_bias)),
            f(a.map(|a| a.coverage)),
            f(a.map(|a| a.mse)),
            f(a.map(|a| a.mean_ci_length)),
            f(a.map(|a| a.mc_se_bias)),
        );
    }
    out
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<String> {
    let cfg = load_config(args)?;
    let methods = parse_methods(&args.methods)?;
    let report = run_scenario(&cfg, &methods)?;
    let csv = estimates_csv(&report)?;
    let json = summary_json(&report);
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::config(format!("{}: {e}", args.out.display())))?;
    write_file(&args.out.join(ESTIMATES_FILE), &csv)?;
    write_file(&args.out.join(SUMMARY_FILE), &json)?;
    Ok(overview(&report))
}
