use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pibgen::analysis::{run_analysis, Report};
use pibgen::bounds::AssumptionTag;
use pibgen::config::{AnalysisConfig, FrameworkChoice, OutputFormat};
use pibgen::frame::{load_frame, load_two_files, StudyFrame};
use pibgen::oracle::{verify_closed_form, VerifyOptions};
use pibgen::render::{self, Section};
use pibgen::stratify::write_stratum_summary_csv;
use pibgen::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pibgen",
    version,
    about = "Partially identified bounds on population average treatment effects"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full report: bounds, strata, point estimates, ledger.
    Analyze(Opts),
    /// Fit the selection model and report coefficients and balance.
    Propensity(Opts),
    /// Propensity strata summary.
    Strata(Opts),
    /// Resolved and candidate λ values.
    Lambda(Opts),
    /// Whole-frame and per-stratum bounds.
    Bounds(Opts),
    /// Naive, IPW and subclassification point estimates.
    Points(Opts),
    /// Check closed-form bounds against brute-force enumeration on a small frame.
    Verify(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Md,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameworkArg {
    Full,
    Reduced,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum AssumptionArg {
    Worst,
    Bsv,
    Mtr,
}

#[derive(Args)]
struct Opts {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Combined population CSV with a sample indicator column.
    #[arg(long, conflicts_with_all = ["sample", "population"])]
    data: Option<PathBuf>,
    /// Sample CSV (two-file mode).
    #[arg(long, requires = "population")]
    sample: Option<PathBuf>,
    /// Population CSV (two-file mode).
    #[arg(long, requires = "sample")]
    population: Option<PathBuf>,
    /// Column names, when they differ from id, in_sample, treatment, outcome.
    #[arg(long)]
    id_col: Option<String>,
    #[arg(long)]
    outcome_col: Option<String>,
    #[arg(long)]
    treatment_col: Option<String>,
    #[arg(long)]
    sample_col: Option<String>,
    /// Outcome support as `lo,hi`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    support: Option<Vec<f64>>,
    /// Covariates for the selection model, comma separated.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Number of propensity strata (default 5).
    #[arg(long)]
    strata: Option<usize>,
    /// Assumed P(W=0 | Z=0).
    #[arg(long)]
    pw0z0: Option<f64>,
    /// λ value or rule (repeatable): 0.3, asmd:max:a,b, sd:pooled:2.
    #[arg(long = "lambda")]
    lambdas: Vec<String>,
    /// Identification framework; default both when population outcomes exist.
    #[arg(long, value_enum)]
    framework: Option<FrameworkArg>,
    /// Repeatable.
    #[arg(long = "assumption", value_enum)]
    assumptions: Vec<AssumptionArg>,
    /// Bootstrap seed.
    #[arg(long, env = "PIBGEN_SEED")]
    seed: Option<u64>,
    /// Bootstrap replicates.
    #[arg(long)]
    reps: Option<usize>,
    /// Output format (default json).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Merge non-viable strata into a neighbour.
    #[arg(long)]
    merge_strata: bool,
    /// Add the population-weighted pooled stratum interval.
    #[arg(long)]
    pooled: bool,
    /// Write output here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl Opts {
    fn to_config(&self) -> Result<AnalysisConfig> {
        let base = match &self.config {
            Some(path) => AnalysisConfig::from_json(
                &fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?,
            )?,
            None => AnalysisConfig::default(),
        };
        let mut columns = base.columns.clone();
        if self.id_col.is_some()
            || self.outcome_col.is_some()
            || self.treatment_col.is_some()
            || self.sample_col.is_some()
        {
            let mut c = columns.unwrap_or_default();
            if let Some(v) = &self.id_col {
                c.id = v.clone();
            }
            if let Some(v) = &self.outcome_col {
                c.outcome = v.clone();
            }
            if let Some(v) = &self.treatment_col {
                c.treatment = v.clone();
            }
            if let Some(v) = &self.sample_col {
                c.sample = v.clone();
            }
            columns = Some(c);
        }
        let top = AnalysisConfig {
            data: self.data.clone(),
            sample: self.sample.clone(),
            population: self.population.clone(),
            columns,
            support: match self.support.as_deref() {
                None => None,
                Some(&[lo, hi]) => Some([lo, hi]),
                Some(other) => {
                    return Err(Error::Config(format!(
                        "--support takes `lo,hi`, got {} values",
                        other.len()
                    )))
                }
            },
            covariates: self.covariates.clone(),
            strata: self.strata,
            pw0z0: self.pw0z0,
            lambdas: (!self.lambdas.is_empty()).then(|| self.lambdas.clone()),
            framework: self.framework.map(|f| match f {
                FrameworkArg::Full => FrameworkChoice::Full,
                FrameworkArg::Reduced => FrameworkChoice::Reduced,
                FrameworkArg::Both => FrameworkChoice::Both,
            }),
            assumptions: (!self.assumptions.is_empty()).then(|| {
                self.assumptions
                    .iter()
                    .map(|a| match a {
                        AssumptionArg::Worst => AssumptionTag::WorstCase,
                        AssumptionArg::Bsv => AssumptionTag::Bsv,
                        AssumptionArg::Mtr => AssumptionTag::Mtr,
                    })
                    .collect()
            }),
            seed: self.seed,
            reps: self.reps,
            format: self.format.map(|f| match f {
                FormatArg::Json => OutputFormat::Json,
                FormatArg::Csv => OutputFormat::Csv,
                FormatArg::Md => OutputFormat::Md,
            }),
            merge_strata: self.merge_strata.then_some(true),
            pooled: self.pooled.then_some(true),
            bsv: None,
            propensity: None,
        };
        Ok(base.overlay(top))
    }
}

fn open(path: &PathBuf) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

fn load(config: &AnalysisConfig) -> Result<StudyFrame> {
    let support = config.outcome_support()?;
    let mapping = config.column_mapping();
    match (&config.data, &config.sample, &config.population) {
        (Some(data), _, _) => load_frame(open(data)?, &mapping, support),
        (None, Some(s), Some(p)) => load_two_files(open(s)?, open(p)?, &mapping, support),
        _ => Err(Error::Config(
            "no input: pass --data or --sample with --population".into(),
        )),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn csv_blocks(report: &Report, blocks: &[&str]) -> Result<String> {
    let full = render::to_csv(report)?;
    let mut lines = full.lines();
    let mut out = String::new();
    if let Some(header) = lines.next() {
        out.push_str(header);
        out.push('\n');
    }
    for line in lines.filter(|l| blocks.iter().any(|b| l.split(',').next() == Some(*b))) {
        out.push_str(line);
        out.push('\n');
    }
    Ok(out)
}

fn view(
    report: &Report,
    sections: &[Section],
    format: OutputFormat,
    json_value: serde_json::Value,
    csv: Option<String>,
) -> Result<String> {
    match format {
        OutputFormat::Json => to_json(&json_value),
        OutputFormat::Md => Ok(render::to_markdown_sections(report, sections)),
        OutputFormat::Csv => match csv {
            Some(c) => Ok(c),
            None => render::to_csv(report),
        },
    }
}

enum Outcome {
    Ok(String),
    Mismatch(String),
}

fn run(command: &Command) -> Result<(Outcome, Option<PathBuf>)> {
    let opts = match command {
        Command::Analyze(o)
        | Command::Propensity(o)
        | Command::Strata(o)
        | Command::Lambda(o)
        | Command::Bounds(o)
        | Command::Points(o)
        | Command::Verify(o) => o,
    };
    let config = opts.to_config()?;
    let format = config.format.unwrap_or_default();
    let frame = load(&config)?;

    if let Command::Verify(_) = command {
        let mut options = VerifyOptions::default();
        if let Some(list) = &config.lambdas {
            options.lambdas = list
                .iter()
                .map(|s| match s.parse::<f64>() {
                    Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
                    _ => Err(Error::BadLambdaExpr {
                        expr: s.clone(),
                        reason: "verify takes non-negative numeric values".into(),
                    }),
                })
                .collect::<Result<_>>()?;
        }
        let report = verify_closed_form(&frame, &options)?;
        let mut text = to_json(&report)?;
        if format == OutputFormat::Md {
            text = verify_markdown(&report);
        }
        let outcome = if report.passed {
            Outcome::Ok(text)
        } else {
            Outcome::Mismatch(text)
        };
        return Ok((outcome, opts.out.clone()));
    }

    let settings = config.resolve(&frame)?;
    let report = run_analysis(&frame, &settings)?;
    let head = |extra: serde_json::Value| {
        let mut v = json!({ "tool": report.tool, "seed": report.seed, "data": report.data });
        if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
            obj.extend(more);
        }
        v
    };
    let text = match command {
        Command::Analyze(_) => match format {
            OutputFormat::Json => render::to_json(&report)?,
            OutputFormat::Md => render::to_markdown(&report),
            OutputFormat::Csv => render::to_csv(&report)?,
        },
        Command::Propensity(_) => {
            let mut csv = String::from("covariate,coefficient\n");
            csv.push_str(&format!("(intercept),{}\n", report.propensity.model.intercept));
            for (name, b) in &report.propensity.model.coefficients {
                csv.push_str(&format!("{name},{b}\n"));
            }
            view(
                &report,
                &[Section::Propensity, Section::Balance],
                format,
                head(json!({ "propensity": report.propensity, "balance": report.balance })),
                Some(csv),
            )?
        }
        Command::Strata(_) => {
            let mut buf = Vec::new();
            write_stratum_summary_csv(&report.table2.summary, &mut buf)?;
            let t2 = &report.table2;
            view(
                &report,
                &[Section::Table2],
                format,
                head(json!({ "k": t2.k, "breakpoints": t2.breakpoints, "summary": t2.summary, "merges": t2.merges })),
                Some(String::from_utf8_lossy(&buf).into_owned()),
            )?
        }
        Command::Lambda(_) => {
            let mut csv = String::from("rule,value,selected\n");
            for l in &report.lambdas {
                csv.push_str(&format!("{},{},1\n", l.rule, l.value));
            }
            for r in &report.lambda_report {
                let v = r.value.map(|v| v.to_string()).unwrap_or_default();
                csv.push_str(&format!("{},{v},0\n", r.rule));
            }
            view(
                &report,
                &[Section::Lambda],
                format,
                head(json!({ "lambdas": report.lambdas, "candidates": report.lambda_report })),
                Some(csv),
            )?
        }
        Command::Bounds(_) => view(
            &report,
            &[Section::Header, Section::Table1, Section::Table2, Section::Ledger],
            format,
            head(
                json!({ "design": report.design, "rates": report.rates, "table1": report.table1, "table2": report.table2, "ledger": report.ledger }),
            ),
            Some(csv_blocks(&report, &["table1", "table2"])?),
        )?,
        Command::Points(_) => view(
            &report,
            &[Section::Table3],
            format,
            head(json!({ "table3": report.table3 })),
            Some(csv_blocks(&report, &["table3"])?),
        )?,
        Command::Verify(_) => unreachable!("handled above"),
    };
    Ok((Outcome::Ok(text), opts.out.clone()))
}

fn verify_markdown(report: &pibgen::oracle::VerifyReport) -> String {
    let mut s = format!("# Verification: {}\n\n", if report.passed { "PASS" } else { "FAIL" });
    s.push_str("| Check | λ | Closed form | Oracle | Result |\n|---|---|---|---|---|\n");
    for c in &report.checks {
        s.push_str(&format!(
            "| {:?} | {} | [{}, {}] | [{}, {}] | {} |\n",
            c.check,
            c.lambda.map(|l| l.to_string()).unwrap_or_default(),
            c.closed_form.lo,
            c.closed_form.hi,
            c.oracle.lo,
            c.oracle.hi,
            if c.passed { "pass" } else { "FAIL" }
        ));
    }
    if let Some(cx) = &report.counterexample {
        s.push_str(&format!("\nCounterexample for {:?}:\n\n```\n", cx.check));
        s.push_str(&serde_json::to_string_pretty(&cx.units).unwrap_or_default());
        s.push_str("\n```\n");
    }
    s
}

fn emit(text: &str, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = run(&cli.command).and_then(|(outcome, out)| match outcome {
        Outcome::Ok(text) => emit(&text, out).map(|_| 0u8),
        Outcome::Mismatch(text) => emit(&text, out).map(|_| 1u8),
    });
    match result {
        Ok(code) => {
            if code == 1 {
                eprintln!("pibgen: verification failed; see counterexample");
            }
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("pibgen: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
