use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use cf_ssm::config::{parse_config, ConfigFile, Overrides};
use cf_ssm::records::{parse_summary, trace_file_name, write_summary, write_trace};
use cf_ssm::report::render_table;
use cf_ssm::verify::{run_suite, Property};
use cf_ssm::{monte_carlo, Error, MethodId, ScenarioName, SummaryRow};
use clap::{Args, Parser, Subcommand};

const DEFAULT_SEED: u64 = 42;
const SEED_ENV: &str = "CF_SSM_SEED";

#[derive(Parser)]
#[command(name = "cf-ssm", version, about = "Cognitive-flexibility filtering benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo benchmark of one scenario.
    Run(RunArgs),
    /// Merge summary.csv files under a directory into one table.
    Report(ReportArgs),
    /// Run the property suite.
    Verify(VerifyArgs),
}

#[derive(Args, Default)]
struct ScenarioFlags {
    /// TOML file with defaults for any flag below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (falls back to $CF_SSM_SEED, then 42).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Hysteresis margin.
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Score window length.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    process_var: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    observation_var: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    initial_var: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// exp4_1, exp4_2, exp4_3 or exp4_4.
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated method labels, e.g. `cf,fixed-nl,imm`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    parallelism: Option<usize>,
    #[command(flatten)]
    flags: ScenarioFlags,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory searched recursively for summary.csv.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Restrict to the named properties (repeatable).
    #[arg(long)]
    property: Vec<String>,
    #[command(flatten)]
    flags: ScenarioFlags,
}

/// Marks an error as a usage error (exit status 2).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    Usage(e.to_string()).into()
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::InvalidParameter(_)
                | Error::UnknownScenario(_)
                | Error::UnknownMethod(_)
                | Error::Parse(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

/// Flags over config file over environment over the built-in seed.
fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> anyhow::Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

impl ScenarioFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            runs: self.runs,
            particles: self.particles,
            horizon: self.horizon,
            delta: self.delta,
            window: self.window,
            process_var: self.process_var,
            observation_var: self.observation_var,
            initial_var: self.initial_var,
        }
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let file = load_config(args.flags.config.as_deref())?;
    let name: ScenarioName = args
        .scenario
        .or(file.scenario.clone())
        .ok_or_else(|| usage("no scenario given (use --scenario or a config file)"))?
        .parse()?;
    let overrides = file.overrides().layered(&args.flags.overrides());
    let sc = overrides.scenario(name)?;
    let seed = resolve_seed(args.flags.seed, file.seed)?;
    let methods = match args.methods.or(file.methods.clone()) {
        Some(labels) => labels
            .iter()
            .map(|l| MethodId::parse(l.trim(), &sc))
            .collect::<Result<Vec<_>, _>>()?,
        None => MethodId::defaults(&sc),
    };
    let out = args
        .out
        .or(file.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let parallelism = args
        .parallelism
        .or(file.parallelism)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if parallelism == 0 {
        bail!(usage("parallelism must be at least 1"));
    }

    eprintln!(
        "{name}: {} runs x {} methods, N_p = {}, T = {}, seed {seed}",
        sc.runs,
        methods.len(),
        sc.particles,
        sc.horizon
    );
    let result = monte_carlo(&sc, &methods, sc.runs, seed, parallelism)?;

    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let summary_path = out.join("summary.csv");
    let f = fs::File::create(&summary_path)
        .with_context(|| format!("cannot write {}", summary_path.display()))?;
    write_summary(std::io::BufWriter::new(f), &result.summary.rows)?;
    for r in &result.results {
        let path = out.join(trace_file_name(&r.method.label(&sc), r));
        let f = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        write_trace(std::io::BufWriter::new(f), &r.trace)?;
    }
    print!("{}", render_table(&result.summary.rows));
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let mut paths: Vec<PathBuf> = walkdir::WalkDir::new(&args.out)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.file_name() == "summary.csv")
        .map(|e| e.into_path())
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no summary.csv under {}", args.out.display());
    }
    let mut rows: Vec<SummaryRow> = Vec::new();
    for p in &paths {
        let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
        let parsed = parse_summary(&text)
            .map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
        for row in parsed {
            if rows.iter().any(|r| r.experiment == row.experiment && r.method == row.method) {
                eprintln!(
                    "skipping duplicate ({}, {}) in {}",
                    row.experiment,
                    row.method,
                    p.display()
                );
            } else {
                rows.push(row);
            }
        }
    }
    print!("{}", render_table(&rows));
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<bool> {
    let file = load_config(args.flags.config.as_deref())?;
    let overrides = file.overrides().layered(&args.flags.overrides());
    for name in ScenarioName::ALL {
        overrides.scenario(name)?;
    }
    let seed = resolve_seed(args.flags.seed, file.seed)?;
    let properties = if args.property.is_empty() {
        Property::ALL.to_vec()
    } else {
        args.property
            .iter()
            .map(|p| p.parse::<Property>())
            .collect::<Result<Vec<_>, _>>()?
    };
    let reports = run_suite(&properties, seed, &overrides);
    for r in &reports {
        println!("{r}");
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a).map(|()| true),
        Command::Report(a) => cmd_report(a).map(|()| true),
        Command::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
