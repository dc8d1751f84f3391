//! Command-line front end.
//!
//! Exit codes: 0 clean, 1 leak detected, 2 input or usage error,
//! 3 oracle counterexample.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analyses::{build_report, render_states, render_text, AnalysisReport};
use crate::config::{RegionMode, Strategy};
use crate::domain::CacheConfig;
use crate::fixpoint::{analyze, EngineConfig, FixpointResult};
use crate::ir::{parse_program, unroll, Program};
use crate::oracle::{
    check_program, simulate, CheckPlan, CheckSummary, Counterexample, Flavor,
    RUN_BUDGET,
};
use crate::speculation::SpecConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_LEAK: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_COUNTEREXAMPLE: i32 = 3;

pub const DEFAULT_LINES: u32 = 512;
pub const DEFAULT_DEPTH_HIT: u32 = 20;
pub const DEFAULT_DEPTH_MISS: u32 = 200;

#[derive(Parser, Debug)]
#[command(name = "specache", version, about = "Must-hit LRU cache analysis under speculative execution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Analyze one program and report per-access verdicts and leaks.
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Print per-block abstract states in bucket notation.
        #[arg(long)]
        dump_states: bool,
    },
    /// Exhaustively check the analysis against concrete executions.
    OracleCheck {
        input: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
        #[command(flatten)]
        oracle: OracleOpts,
        /// Write the counterexample (if any) as JSON here.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Replay a counterexample and print the concrete trace.
    Replay {
        input: PathBuf,
        /// Counterexample JSON written by `oracle-check --emit`.
        #[arg(long)]
        counterexample: PathBuf,
    },
    /// Analyze and oracle-check every `.cfgir` file in a directory.
    Corpus {
        dir: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
        #[command(flatten)]
        oracle: OracleOpts,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Skip the oracle.
        #[arg(long)]
        no_oracle: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

/// Flags layered over the file's `config` line, which is layered over
/// the built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct AnalysisOpts {
    #[arg(long, env = "SPECACHE_LINES")]
    pub lines: Option<u32>,
    #[arg(long, env = "SPECACHE_DEPTH_HIT")]
    pub depth_hit: Option<u32>,
    #[arg(long, env = "SPECACHE_DEPTH_MISS")]
    pub depth_miss: Option<u32>,
    /// `jit` or `rollback`.
    #[arg(long, env = "SPECACHE_STRATEGY")]
    pub strategy: Option<Strategy>,
    /// `on` or `off`.
    #[arg(long, env = "SPECACHE_SHADOW", value_parser = parse_switch)]
    pub shadow: Option<bool>,
    /// `havoc` or `rotating`.
    #[arg(long, env = "SPECACHE_REGION_MODE")]
    pub region_mode: Option<RegionMode>,
    /// Per-branch speculative slots: `on` or `off`.
    #[arg(long, env = "SPECACHE_COLORS", value_parser = parse_switch)]
    pub colors: Option<bool>,
    /// Non-speculative analysis only.
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Args, Debug, Clone)]
pub struct OracleOpts {
    /// Maximum concrete runs per enumeration.
    #[arg(long, default_value_t = RUN_BUDGET, env = "SPECACHE_ORACLE_BUDGET")]
    pub budget: u64,
    /// Maximum entries into one block per run.
    #[arg(long, default_value_t = 3)]
    pub visit_cap: u32,
    /// Always grant the miss-depth window.
    #[arg(long)]
    pub strict: bool,
}

fn parse_switch(s: &str) -> Result<bool, String> {
    crate::config::parse_switch(s)
}

/// Fully resolved analysis settings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resolved {
    pub engine: EngineConfig,
    pub depth_hit: u32,
    pub depth_miss: u32,
}

pub fn resolve(program: &Program, opts: &AnalysisOpts) -> Result<Resolved> {
    let fc = &program.config;
    let lines = opts.lines.or(fc.lines).unwrap_or(DEFAULT_LINES);
    if lines == 0 {
        bail!("--lines must be at least 1");
    }
    let depth_hit = opts.depth_hit.or(fc.depth_hit).unwrap_or(DEFAULT_DEPTH_HIT);
    let depth_miss = opts.depth_miss.or(fc.depth_miss).unwrap_or(DEFAULT_DEPTH_MISS);
    let strategy = opts.strategy.or(fc.strategy).unwrap_or(Strategy::JustInTime);
    let shadow = opts.shadow.or(fc.shadow).unwrap_or(true);
    let region_mode = opts.region_mode.or(fc.region_mode).unwrap_or(RegionMode::Havoc);
    let colors = opts.colors.or(fc.colors).unwrap_or(true);
    let cache = CacheConfig::new(lines, shadow);
    // Zero-depth speculation is the baseline analysis.
    let engine = if opts.baseline || (depth_hit == 0 && depth_miss == 0) {
        EngineConfig::baseline(cache)
    } else {
        let mut spec = SpecConfig::new(depth_hit, depth_miss, strategy);
        spec.colors_enabled = colors;
        EngineConfig::speculative(cache, spec)
    };
    Ok(Resolved {
        engine: engine.with_region_mode(region_mode),
        depth_hit,
        depth_miss,
    })
}

/// Reads, parses and applies unroll hints.
pub fn load(path: &Path) -> Result<Program> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let p = parse_program(&text).with_context(|| format!("parsing {}", path.display()))?;
    if p.unroll_hints.is_empty() {
        return Ok(p);
    }
    unroll(&p).with_context(|| format!("unrolling {}", path.display()))
}

pub fn run_analysis(program: &Program, r: &Resolved) -> Result<(FixpointResult, AnalysisReport)> {
    let result = analyze(program, &r.engine)?;
    let report = build_report(&result, program);
    Ok((result, report))
}

/// Oracle plan covering exactly the resolved configuration.
pub fn plan_for(r: &Resolved, o: &OracleOpts) -> CheckPlan {
    let e = &r.engine;
    let mut plan = CheckPlan::exhaustive(e.cache.num_lines, r.depth_hit, r.depth_miss);
    plan.shadows = vec![e.cache.shadow];
    plan.region_modes = vec![e.region_mode];
    plan.strict = o.strict;
    plan.block_visit_cap = o.visit_cap;
    plan.budget = o.budget;
    match e.spec {
        Some(s) => {
            plan.strategies = vec![s.strategy];
            plan.colors = vec![s.colors_enabled];
            plan.baseline = false;
        }
        None => {
            plan.strategies.clear();
            plan.baseline = true;
        }
    }
    plan
}

fn describe(s: &CheckSummary) -> String {
    let mut out = format!("{} configuration(s), {} concrete runs", s.configurations, s.runs);
    if s.truncated_runs > 0 {
        let _ = write!(out, ", {} cut at the block visit cap", s.truncated_runs);
    }
    if s.budget_exhausted {
        out.push_str(", run budget exhausted (partial coverage)");
    }
    out
}

fn cmd_analyze(input: &Path, opts: &AnalysisOpts, format: Format, dump: bool) -> Result<i32> {
    let program = load(input)?;
    let r = resolve(&program, opts)?;
    let (result, report) = run_analysis(&program, &r)?;
    match format {
        Format::Json => println!("{}", report.to_json()),
        Format::Text => print!("{}", render_text(&report)),
    }
    if dump {
        print!("{}", render_states(&result, &program));
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if report.has_leak() { EXIT_LEAK } else { EXIT_OK })
}

fn report_counterexample(c: &Counterexample, emit: Option<&Path>) -> Result<()> {
    eprintln!("counterexample [{}] at {}: {}", c.label, c.site, c.violation);
    eprintln!("choices: {:?}", c.choices);
    if let Some(path) = emit {
        let json = serde_json::to_string_pretty(c)?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_oracle(input: &Path, opts: &AnalysisOpts, o: &OracleOpts, emit: Option<&Path>) -> Result<i32> {
    let program = load(input)?;
    let r = resolve(&program, opts)?;
    let summary = check_program(&program, &plan_for(&r, o))?;
    println!("{}", describe(&summary));
    match &summary.counterexample {
        Some(c) => {
            report_counterexample(c, emit)?;
            Ok(EXIT_COUNTEREXAMPLE)
        }
        None => {
            println!("no violation");
            Ok(EXIT_OK)
        }
    }
}

fn cmd_replay(input: &Path, cex_path: &Path) -> Result<i32> {
    let program = load(input)?;
    let text = std::fs::read_to_string(cex_path).with_context(|| format!("reading {}", cex_path.display()))?;
    let c: Counterexample = serde_json::from_str(&text).context("parsing counterexample")?;
    let run = simulate(&program, &c.choices, c.params)?;
    println!("violation [{}] at {}: {}", c.label, c.site, c.violation);
    for b in &run.branches {
        let dir = |x: u32| if x == 0 { "then" } else { "else" };
        let mut line = format!("branch {}: {}", b.block, dir(b.outcome));
        if let Some(p) = b.prediction {
            let _ = write!(line, ", predicted {}", dir(p));
        }
        if let Some(k) = b.rollback {
            let _ = write!(line, ", squashed after {k} of {}", b.entitlement);
        }
        println!("{line}");
    }
    for t in &run.trace {
        let tag = match t.flavor {
            Flavor::Normal => "   ",
            Flavor::Speculative => "(s)",
        };
        println!(
            "{tag} {:<16} {:<12} {}",
            program.site_label(t.site),
            program.var_name(t.var),
            if t.hit { "hit" } else { "miss" }
        );
    }
    if run.truncated {
        println!("(run cut at the block visit cap)");
    }
    Ok(EXIT_OK)
}

/// One row of the corpus table.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct CorpusRow {
    pub name: String,
    pub miss: usize,
    pub spec_miss: usize,
    pub iterations: u64,
    pub leak: bool,
    /// `None` when the oracle was skipped.
    pub oracle: Option<String>,
    #[serde(skip)]
    pub counterexample: Option<Counterexample>,
    #[serde(skip)]
    pub report: Option<AnalysisReport>,
}

pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfgir"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn run_corpus(dir: &Path, opts: &AnalysisOpts, oracle: Option<&OracleOpts>) -> Result<Vec<CorpusRow>> {
    let mut rows = Vec::new();
    for path in corpus_files(dir)? {
        let program = load(&path)?;
        let r = resolve(&program, opts)?;
        let (_, report) = run_analysis(&program, &r)?;
        let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let (oracle_note, cex) = match oracle {
            None => (None, None),
            Some(o) => {
                let s = check_program(&program, &plan_for(&r, o))?;
                let note = if s.counterexample.is_some() {
                    "VIOLATION".to_string()
                } else if s.budget_exhausted {
                    "ok (partial)".to_string()
                } else {
                    "ok".to_string()
                };
                (Some(note), s.counterexample)
            }
        };
        rows.push(CorpusRow {
            name,
            miss: report.miss_count,
            spec_miss: report.spec_miss_count,
            iterations: report.iterations,
            leak: report.has_leak(),
            oracle: oracle_note,
            counterexample: cex,
            report: Some(report),
        });
    }
    Ok(rows)
}

pub fn render_corpus(rows: &[CorpusRow]) -> String {
    let w = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<w$}  {:>6}  {:>7}  {:>10}  {:<5}  {}\n", "Name", "#Miss", "#SpMiss", "#Iteration", "Leak", "Oracle");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<w$}  {:>6}  {:>7}  {:>10}  {:<5}  {}",
            r.name,
            r.miss,
            r.spec_miss,
            r.iterations,
            if r.leak { "yes" } else { "no" },
            r.oracle.as_deref().unwrap_or("-")
        );
    }
    out
}

fn cmd_corpus(dir: &Path, opts: &AnalysisOpts, o: Option<&OracleOpts>, format: Format) -> Result<i32> {
    let rows = run_corpus(dir, opts, o)?;
    match format {
        Format::Text => print!("{}", render_corpus(&rows)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
    }
    for r in &rows {
        if let Some(c) = &r.counterexample {
            eprint!("{}: ", r.name);
            report_counterexample(c, None)?;
        }
    }
    // Leaks are expected in a corpus; only soundness failures gate.
    Ok(if rows.iter().any(|r| r.counterexample.is_some()) {
        EXIT_COUNTEREXAMPLE
    } else {
        EXIT_OK
    })
}

pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Analyze {
            input,
            opts,
            format,
            dump_states,
        } => cmd_analyze(&input, &opts, format, dump_states),
        Command::OracleCheck {
            input,
            opts,
            oracle,
            emit,
        } => cmd_oracle(&input, &opts, &oracle, emit.as_deref()),
        Command::Replay { input, counterexample } => cmd_replay(&input, &counterexample),
        Command::Corpus {
            dir,
            opts,
            oracle,
            format,
            no_oracle,
        } => cmd_corpus(&dir, &opts, (!no_oracle).then_some(&oracle), format),
    }
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}
