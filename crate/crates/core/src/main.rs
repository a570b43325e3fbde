use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use casecal::align::align_calls;
use casecal::grpo::{train, Strategy};
use casecal::io::generate::{default_schema_pool, default_suite, generate_cases, GenerateSpec};
use casecal::io::numbers::{fmt_num, round_json};
use casecal::io::{load_cases, write_cases, Config, Engine};
use casecal::model::{parse_tool_calls, ExecutionCase, SchemaSet, ToolCall};
use casecal::profiling::{partition, verify, Profiler, StubJudge, DEFAULT_PARTITION_THRESHOLD};
use casecal::shaping::{composite_reward_with, RewardContext};
use casecal::{Error, Result};

#[derive(Parser)]
#[command(name = "casecal", version, about = "Case-calibrated rewards for tool-calling policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every case's recorded response against its reference calls.
    Score {
        #[arg(long)]
        cases: PathBuf,
        /// Write the per-case breakdown as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training step used for the length baseline; defaults to the end of warm-up.
        #[arg(long)]
        step: Option<u64>,
    },
    /// Fill in case profiles with the verifier and the rubric judge.
    Profile {
        #[arg(long)]
        cases: PathBuf,
        /// Output case file; defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the alignment between reference and predicted calls.
    Match {
        /// Reference calls: a JSON array or a file holding one.
        #[arg(long, requires = "preds", conflicts_with = "cases")]
        refs: Option<String>,
        /// Predicted calls: a JSON array or a file holding one.
        #[arg(long, requires = "refs")]
        preds: Option<String>,
        /// Align each case's recorded calls with its references instead.
        #[arg(long, required_unless_present = "refs")]
        cases: Option<PathBuf>,
    },
    /// Train the simulated policy and report calibration metrics.
    Simulate {
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Profiled case file; defaults to the built-in synthetic suite.
        #[arg(long)]
        cases: Option<PathBuf>,
        /// Write per-step metrics as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scoring service.
    Serve {
        #[arg(long, value_enum, default_value_t = Transport::Stdio)]
        transport: Transport,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Default tool schemas (JSON array) for requests that carry none.
        #[arg(long)]
        schemas: Option<PathBuf>,
        /// Case file to derive length budgets from.
        #[arg(long)]
        cases: Option<PathBuf>,
    },
    /// Write a synthetic case base.
    Generate {
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Share of cases with hardness at most 0.5.
        #[arg(long, default_value_t = 0.7)]
        easy_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tool schemas (JSON array) to draw from; defaults to a built-in pool.
        #[arg(long)]
        schemas: Option<PathBuf>,
        /// Output case file; defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Transport {
    Stdio,
    Tcp,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    path.map_or_else(|| Ok(Config::default()), Config::load)
}

fn load_schemas(path: &Path) -> Result<SchemaSet> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Loads a case file, reporting skipped lines on stderr.
fn read_case_file(path: &Path) -> Result<Vec<ExecutionCase>> {
    let report = load_cases(path)?;
    for s in &report.skipped {
        eprintln!("{}:{}: skipped: {}", path.display(), s.line, s.reason);
    }
    Ok(report.cases)
}

/// Profiles the cases that have no profile yet.
fn ensure_profiles(cases: &mut [ExecutionCase], cfg: &Config) -> Result<()> {
    let profiler = Profiler {
        judge: StubJudge,
        bands: cfg.band_thresholds.clone(),
    };
    for case in cases.iter_mut().filter(|c| c.profile.is_none()) {
        case.profile = Some(profiler.profile(case)?);
    }
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn calls_arg(arg: &str) -> Result<Vec<ToolCall>> {
    if arg.trim_start().starts_with('[') {
        parse_tool_calls(arg)
    } else {
        parse_tool_calls(&fs::read_to_string(arg)?)
    }
}

const SCORE_COLUMNS: [&str; 20] = [
    "id",
    "r_name",
    "r_key",
    "r_type",
    "r_constraint",
    "r_value",
    "r_exact",
    "r_tool",
    "r_a",
    "L",
    "L_emp",
    "rho",
    "lambda",
    "alpha",
    "r_think",
    "r_format",
    "r_total",
    "verified",
    "hardness",
    "band",
];

fn score(cases: &Path, out: Option<&Path>, config: Option<&Path>, step: Option<u64>) -> Result<()> {
    let cfg = load_config(config)?;
    let mut cases = read_case_file(cases)?;
    ensure_profiles(&mut cases, &cfg)?;
    let shaping = cfg.shaping_for(&cases)?;
    let step = step.unwrap_or(shaping.t_warmup);

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut sums = vec![0.0; SCORE_COLUMNS.len()];
    for case in &cases {
        let profile = case.require_profile()?;
        let ctx = RewardContext {
            reference_calls: &case.reference_calls,
            schemas: &case.schemas,
            hardness: profile.hardness,
            band: profile.band,
            step,
        };
        let b = composite_reward_with(&case.trajectory, &ctx, &shaping, cfg.train.reward)?;
        let verified = verify(&case.trajectory, &case.reference_calls, &case.schemas);
        let v = b.vector;
        let values = [
            v.r_name,
            v.r_key,
            v.r_type,
            v.r_constraint,
            v.r_value,
            v.r_exact,
            b.r_tool,
            b.r_a,
            b.length,
            b.l_emp,
            b.rho,
            b.lambda,
            b.alpha,
            b.r_think,
            b.r_format,
            b.r_total,
            if verified { 1.0 } else { 0.0 },
            profile.hardness,
        ];
        for (s, x) in sums[1..].iter_mut().zip(values) {
            *s += x;
        }
        let mut row = vec![case.id.clone()];
        row.extend(values.iter().take(16).map(|&x| fmt_num(x)));
        row.push(verified.to_string());
        row.push(fmt_num(profile.hardness));
        row.push(profile.band.to_string());
        rows.push(row);
    }

    if let Some(path) = out {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{}", SCORE_COLUMNS.join(","))?;
        for row in &rows {
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
    }

    let shown = [0, 7, 14, 15, 16, 17];
    let widths: Vec<usize> = shown
        .iter()
        .map(|&c| rows.iter().map(|r| r[c].len()).chain([SCORE_COLUMNS[c].len()]).max().unwrap_or(0))
        .collect();
    let mut stdout = io::stdout().lock();
    let line = |cells: Vec<&str>| -> String {
        let mut out = format!("{:<w$}", cells[0], w = widths[0]);
        for (cell, w) in cells[1..].iter().zip(&widths[1..]) {
            out.push_str(&format!("  {cell:>w$}"));
        }
        out
    };
    writeln!(stdout, "{}", line(shown.iter().map(|&c| SCORE_COLUMNS[c]).collect()))?;
    for row in &rows {
        writeln!(stdout, "{}", line(shown.iter().map(|&c| row[c].as_str()).collect()))?;
    }
    let n = cases.len().max(1) as f64;
    writeln!(stdout, "\n{} cases; means:", cases.len())?;
    for (name, total) in SCORE_COLUMNS.iter().zip(&sums).skip(1).take(18) {
        writeln!(stdout, "  {name:<12} {}", fmt_num(total / n))?;
    }
    Ok(())
}

fn profile(cases: &Path, out: Option<&Path>, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let mut cases = read_case_file(cases)?;
    for case in cases.iter_mut() {
        case.profile = None;
    }
    ensure_profiles(&mut cases, &cfg)?;
    write_cases(output(out)?, &cases)?;
    let mut counts = vec![0usize; cfg.band_thresholds.band_count()];
    for case in &cases {
        counts[case.require_profile()?.band] += 1;
    }
    let (easy, hard) = partition(&cases, DEFAULT_PARTITION_THRESHOLD)?;
    eprintln!(
        "profiled {} cases; per band {:?}; easy {} / hard {}",
        cases.len(),
        counts,
        easy.len(),
        hard.len()
    );
    Ok(())
}

fn print_alignment(w: &mut impl Write, refs: &[ToolCall], preds: &[ToolCall]) -> Result<()> {
    let a = align_calls(refs, preds);
    let pairs: Vec<String> = a.pairs.iter().map(|(i, j)| format!("({i},{j})")).collect();
    writeln!(w, "pairs: {}", pairs.join(" "))?;
    writeln!(w, "total_weight: {}", fmt_num(a.total_weight))?;
    writeln!(w, "unmatched_refs: {:?}", a.unmatched_refs)?;
    writeln!(w, "unmatched_preds: {:?}", a.unmatched_preds)?;
    Ok(())
}

fn match_calls(refs: Option<&str>, preds: Option<&str>, cases: Option<&Path>) -> Result<()> {
    let mut stdout = io::stdout().lock();
    if let (Some(r), Some(p)) = (refs, preds) {
        return print_alignment(&mut stdout, &calls_arg(r)?, &calls_arg(p)?);
    }
    if let Some(path) = cases {
        for case in read_case_file(path)? {
            writeln!(stdout, "{}", case.id)?;
            print_alignment(&mut stdout, &case.reference_calls, &case.trajectory.calls)?;
        }
    }
    Ok(())
}

fn simulate(
    strategy: Option<Strategy>,
    steps: Option<u64>,
    seed: Option<u64>,
    config: Option<&Path>,
    cases: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = strategy {
        cfg.train.strategy = s;
    }
    if let Some(n) = steps {
        cfg.train.steps = n;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let mut cases = match cases {
        Some(p) => read_case_file(p)?,
        None => default_suite(cfg.train.seed)?,
    };
    ensure_profiles(&mut cases, &cfg)?;
    let shaping = cfg.shaping_for(&cases)?;
    let report = train(&cases, &shaping, &cfg.train)?;
    if let Some(path) = out {
        fs::write(path, report.to_csv())?;
    }
    let (var_first, var_last) = report.variance_endpoints(20).unwrap_or((0.0, 0.0));
    let mut summary = json!({
        "strategy": cfg.train.strategy,
        "steps": cfg.train.steps,
        "seed": cfg.train.seed,
        "cases": cases.len(),
        "budgets": shaping.bands,
        "initial": report.initial,
        "final": report.final_metrics,
        "advantage_variance": { "first": var_first, "last": var_last },
    });
    round_json(&mut summary);
    writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn serve(
    transport: Transport,
    port: u16,
    config: Option<&Path>,
    schemas: Option<&Path>,
    cases: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let shaping = match cases {
        Some(p) => {
            let mut cases = read_case_file(p)?;
            ensure_profiles(&mut cases, &cfg)?;
            cfg.shaping_for(&cases)?
        }
        None => cfg.shaping_or_fallback()?,
    };
    let engine = Engine {
        schemas: match schemas {
            Some(p) => load_schemas(p)?,
            None => SchemaSet::new(default_schema_pool())?,
        },
        shaping,
        bands: cfg.band_thresholds.clone(),
        options: cfg.train.reward,
    };
    match transport {
        Transport::Stdio => {
            engine.serve_stream(io::stdin().lock(), io::stdout().lock())?;
            Ok(())
        }
        Transport::Tcp => {
            let listener = TcpListener::bind(("127.0.0.1", port))?;
            eprintln!("listening on {}", listener.local_addr()?);
            Arc::new(engine).serve_tcp(listener)
        }
    }
}

fn generate(count: usize, easy_fraction: f64, seed: u64, schemas: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let mut spec = GenerateSpec::new(count, easy_fraction, seed);
    if let Some(p) = schemas {
        spec.schema_pool = load_schemas(p)?.to_vec();
    }
    write_cases(output(out)?, &generate_cases(&spec)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score {
            cases,
            out,
            config,
            step,
        } => score(&cases, out.as_deref(), config.as_deref(), step),
        Command::Profile { cases, out, config } => profile(&cases, out.as_deref(), config.as_deref()),
        Command::Match { refs, preds, cases } => match_calls(refs.as_deref(), preds.as_deref(), cases.as_deref()),
        Command::Simulate {
            strategy,
            steps,
            seed,
            config,
            cases,
            out,
        } => simulate(strategy, steps, seed, config.as_deref(), cases.as_deref(), out.as_deref()),
        Command::Serve {
            transport,
            port,
            config,
            schemas,
            cases,
        } => serve(transport, port, config.as_deref(), schemas.as_deref(), cases.as_deref()),
        Command::Generate {
            count,
            easy_fraction,
            seed,
            schemas,
            out,
        } => generate(count, easy_fraction, seed, schemas.as_deref(), out.as_deref()),
    }
}

/// A closed stdout (e.g. piping into `head`) is not an error.
fn is_broken_pipe(e: &Error) -> bool {
    let kind = match e {
        Error::Io(e) => Some(e.kind()),
        Error::Json(e) => e.io_error_kind(),
        _ => None,
    };
    kind == Some(io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
