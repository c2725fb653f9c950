//! `opmean`: run verification campaigns, falsify statements, replay traces.
//!
//! Exit codes: 0 when every evaluated check holds, 1 on a counted violation
//! (or a falsifier hit), 2 on usage or configuration errors, 3 when no
//! requested hypothesis was feasible.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use opmean::campaign::{self, CampaignConfig, CSV_HEADER};
use opmean::checks::{self, CheckName, Expectation, FalsifyConfig, FalsifyOutcome, Trace};
use opmean::hypgen::{ParamRange, ParamSampler};
use opmean::opmeans::mean_bundle;
use opmean::posmaps::MapDescriptor;
use opmean::scalar_means::{chain_scan, ScanMode, SCALAR_TOL};
use opmean::SymMatrix;
use serde_json::json;

#[derive(Parser)]
#[command(name = "opmean", version, about = "Refined AM-GM inequalities for positive definite matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification campaign over the named checks (`all` selects every check).
    Check {
        #[arg(required = true)]
        names: Vec<String>,
        #[command(flatten)]
        campaign: CampaignArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Include every per-trial report in JSON output.
        #[arg(long)]
        instances: bool,
    },
    /// Search for a counterexample to one check; `--trials` is the budget.
    Falsify {
        name: String,
        #[command(flatten)]
        campaign: CampaignArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Scan the scalar chain over a range of ratios.
    ScalarScan {
        #[arg(long, default_value_t = 1e-8)]
        lo: f64,
        #[arg(long, default_value_t = 1e8)]
        hi: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// grid, log-grid or adaptive.
        #[arg(long, default_value = "log-grid")]
        mode: String,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Regenerate and re-evaluate a trial from its trace string.
    Replay {
        trace: String,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// List the available checks.
    List {
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Compute the operator means of two matrices given in matrix text files.
    Means {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args)]
struct CampaignArgs {
    /// Matrix dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,3,5")]
    dim: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override every check's violation tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Fixed value or `lo:hi` range.
    #[arg(long)]
    m: Option<String>,
    #[arg(long = "m-prime")]
    m_prime: Option<String>,
    #[arg(long = "M")]
    big_m: Option<String>,
    /// Map descriptor, repeatable: identity, pinching:1,2|3, pinching:diag, compression:k=2, mixture:j=3.
    #[arg(long)]
    map: Vec<String>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Count documented-discrepancy violations toward the exit status.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

fn parse_range(flag: &str, v: &Option<String>) -> Result<Option<ParamRange>, Usage> {
    v.as_deref()
        .map(|s| s.parse::<ParamRange>().map_err(|e| Usage(format!("--{flag}: {e}"))))
        .transpose()
}

fn parse_check(name: &str) -> Result<CheckName, Usage> {
    name.parse().map_err(|_| {
        let known: Vec<&str> = CheckName::ALL.iter().map(|c| c.as_str()).collect();
        Usage(format!("unknown check `{name}`; known checks: {}", known.join(", ")))
    })
}

impl CampaignArgs {
    fn sampler(&self) -> Result<ParamSampler, Usage> {
        Ok(ParamSampler {
            m: parse_range("m", &self.m)?,
            m_prime: parse_range("m-prime", &self.m_prime)?,
            big_m: parse_range("M", &self.big_m)?,
        })
    }

    fn maps(&self) -> Result<Vec<MapDescriptor>, Usage> {
        self.map.iter().map(|s| s.parse().map_err(Usage::from)).collect()
    }

    fn config(&self, checks: Vec<CheckName>) -> Result<CampaignConfig, Usage> {
        let mut cfg = CampaignConfig::new(checks, self.dim.clone(), self.trials, self.seed);
        cfg.tol = self.tol;
        cfg.sampler = self.sampler()?;
        cfg.maps = self.maps()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(output: &OutputArgs, body: &str) -> Result<(), Usage> {
    match &output.out {
        Some(path) => write_file(path, body),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(body.as_bytes()).and_then(|_| stdout.flush()).map_err(Usage::from)
        }
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), Usage> {
    fs::write(path, body).map_err(|e| Usage(format!("cannot write {}: {e}", path.display())))
}

fn to_json(v: &impl serde::Serialize) -> Result<String, Usage> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn run_check(names: &[String], args: &CampaignArgs, output: &OutputArgs, instances: bool) -> Result<u8, Usage> {
    let mut checks = vec![];
    for name in names {
        if name == "all" {
            checks.extend(CheckName::ALL);
        } else {
            checks.push(parse_check(name)?);
        }
    }
    let mut cfg = args.config(checks)?;
    cfg.record_instances = instances;
    let (report, runs) = campaign::run(&cfg)?;
    let body = match output.format {
        Format::Csv => {
            let mut s = format!("{CSV_HEADER}\n");
            for r in &runs {
                s.push_str(&campaign::csv_rows(&r.traces, &r.reports));
            }
            s
        }
        Format::Json | Format::Text => {
            let ts = (!output.no_timestamp).then(|| chrono::Utc::now().to_rfc3339());
            let mut s = report.to_json(ts.as_deref())?;
            s.push('\n');
            s
        }
    };
    emit(output, &body)?;
    for s in &report.summaries {
        let tag = match s.expectation {
            Expectation::Holds => "",
            Expectation::DocumentedDiscrepancy => " [documented-discrepancy]",
        };
        eprintln!(
            "{}: {} trials, {} evaluated, {} violations{tag}",
            s.check, s.trials, s.evaluated, s.violations
        );
        for t in s.violation_traces.iter().take(3) {
            eprintln!("  replay: {t}");
        }
    }
    Ok(campaign::exit_code(&report, output.strict) as u8)
}

fn run_falsify(name: &str, args: &CampaignArgs, output: &OutputArgs) -> Result<u8, Usage> {
    let check = parse_check(name)?;
    if args.trials == 0 {
        return Err(Usage("--trials must be at least 1".into()));
    }
    let n = *args.dim.first().ok_or_else(|| Usage("--dim is empty".into()))?;
    let mut cfg = FalsifyConfig::new(check, args.trials, n, args.seed);
    cfg.sampler = args.sampler()?;
    let maps = args.maps()?;
    if !maps.is_empty() {
        cfg.maps = maps;
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    let outcome = checks::falsify(&cfg)?;
    emit(output, &to_json(&outcome)?)?;
    Ok(match &outcome {
        FalsifyOutcome::Counterexample { trial, trace, .. } => {
            eprintln!("{check}: counterexample at trial {trial}\n  replay: {trace}");
            1
        }
        FalsifyOutcome::Exhausted { trials, .. } => {
            eprintln!("{check}: no counterexample in {trials} trials");
            0
        }
    })
}

fn run_scan(lo: f64, hi: f64, samples: usize, mode: &str, tol: Option<f64>, output: &OutputArgs) -> Result<u8, Usage> {
    let mode: ScanMode = mode.parse()?;
    let report = chain_scan(lo, hi, samples, mode)?;
    let body = match output.format {
        Format::Csv => {
            let mut s = String::from("link,min_relative_slack,argmin_x\n");
            for l in &report.links {
                s.push_str(&format!("{},{:?},{:?}\n", l.link, l.min_relative_slack, l.argmin_x));
            }
            s
        }
        _ => to_json(&report)?,
    };
    emit(output, &body)?;
    Ok(if report.holds(tol.unwrap_or(SCALAR_TOL)) { 0 } else { 1 })
}

fn run_replay(trace: &str, tol: Option<f64>, output: &OutputArgs) -> Result<u8, Usage> {
    let trace: Trace = trace.parse()?;
    let report = checks::evaluate(&trace, tol.unwrap_or_else(|| trace.check.default_tol()))?;
    emit(output, &to_json(&report)?)?;
    let counts = trace.check.expectation() == Expectation::Holds || output.strict;
    Ok(if report.violated && counts { 1 } else { 0 })
}

fn run_list(format: Option<Format>) -> Result<u8, Usage> {
    let body = if format == Some(Format::Json) {
        let rows: Vec<_> = CheckName::ALL
            .iter()
            .map(|c| {
                json!({
                    "name": c.as_str(),
                    "expectation": c.expectation(),
                    "hypothesis": c.hypothesis().map(|(k, _)| k.as_str()),
                    "strengthened": c.hypothesis().is_some_and(|(_, s)| s),
                    "needs_map": c.needs_map(),
                    "description": c.description(),
                })
            })
            .collect();
        to_json(&rows)?
    } else {
        let mut s = String::new();
        for c in CheckName::ALL {
            let tag = if c.expectation() == Expectation::DocumentedDiscrepancy { " (documented-discrepancy)" } else { "" };
            s.push_str(&format!("{:<20} {}{tag}\n", c.as_str(), c.description()));
        }
        s
    };
    print!("{body}");
    Ok(0)
}

fn read_matrix(path: &Path) -> Result<SymMatrix, Usage> {
    let text = fs::read_to_string(path).map_err(|e| Usage(format!("cannot read {}: {e}", path.display())))?;
    SymMatrix::parse_text(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn run_means(a: &Path, b: &Path, output: &OutputArgs) -> Result<u8, Usage> {
    let bundle = mean_bundle(&read_matrix(a)?, &read_matrix(b)?)?;
    let body = match output.format {
        Format::Json => to_json(&bundle)?,
        _ => {
            let mut s = String::new();
            for (name, m) in [("geo", &bundle.geo), ("mid", &bundle.mid), ("upper", &bundle.upper), ("am", &bundle.am)] {
                s.push_str(&format!("# {name}\n{}", m.to_text()));
            }
            s
        }
    };
    emit(output, &body)?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check { names, campaign, output, instances } => run_check(names, campaign, output, *instances),
        Command::Falsify { name, campaign, output } => run_falsify(name, campaign, output),
        Command::ScalarScan { lo, hi, samples, mode, tol, output } => run_scan(*lo, *hi, *samples, mode, *tol, output),
        Command::Replay { trace, tol, output } => run_replay(trace, *tol, output),
        Command::List { format } => run_list(*format),
        Command::Means { a, b, output } => run_means(a, b, output),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
