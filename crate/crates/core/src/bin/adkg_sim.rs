//! Experiment runner: executes configured protocol scenarios across seed
//! ranges, writes per-seed metrics and optional traces, and aggregates
//! summaries and scaling fits. Exits 0 only when every property check
//! passed; configuration problems exit 2.

use adkg_sim::scenario::{Scenario, ScenarioConfig};
use adkg_sim::simnet::RunLog;
use adkg_sim::stats::{log_log_slope, Summary};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "adkg-sim",
    version,
    about = "Simulated distributed key generation workbench"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a reference configuration with every default spelled out.
    Init {
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one scenario across a seed range and summarize the results.
    Run {
        /// Scenario description in TOML.
        #[arg(long)]
        config: PathBuf,
        /// Half-open seed range `A..B`, or a single seed `A`.
        #[arg(long, default_value = "0..10", value_parser = parse_seed_range)]
        seeds: SeedRange,
        /// Directory for per-seed metrics, traces, and the summary.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record the full delivery schedule of every run.
        #[arg(long, default_value = "off", value_parser = parse_switch, action = clap::ArgAction::Set)]
        trace: bool,
        /// Worker threads; defaults to the machine's parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Sweep committee sizes and fit the word-complexity growth exponent.
    Scaling {
        /// One of `rb`, `vrb`, `gather`, `pe`, `nwh`, `adkg`.
        #[arg(long)]
        protocol: String,
        /// Comma-separated committee sizes, e.g. `4,7,10,13`.
        #[arg(long = "n-list", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        /// Half-open seed range `A..B`, or a single seed `A`.
        #[arg(long, default_value = "0..20", value_parser = parse_seed_range)]
        seeds: SeedRange,
        /// Destination for the fit report; stdout always gets a copy.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the machine's parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug)]
struct SeedRange {
    start: u64,
    end: u64,
}

impl SeedRange {
    fn iter(self) -> impl Iterator<Item = u64> {
        self.start..self.end
    }

    fn len(self) -> usize {
        (self.end - self.start) as usize
    }
}

impl std::fmt::Display for SeedRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

fn parse_seed_range(s: &str) -> Result<SeedRange, String> {
    let (start, end) = match s.split_once("..") {
        Some((a, b)) => (
            a.parse::<u64>().map_err(|e| format!("bad start: {e}"))?,
            b.parse::<u64>().map_err(|e| format!("bad end: {e}"))?,
        ),
        None => {
            let a = s.parse::<u64>().map_err(|e| format!("bad seed: {e}"))?;
            (a, a + 1)
        }
    };
    if end <= start {
        return Err(format!("empty seed range {start}..{end}"));
    }
    Ok(SeedRange { start, end })
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected `on` or `off`, got `{other}`")),
    }
}

/// One seed's result as written to disk: metrics, the semantic event log,
/// and the verdicts of every property check.
#[derive(Serialize)]
struct SeedReport<'a> {
    metrics: &'a adkg_sim::simnet::RunMetrics,
    events: &'a [adkg_sim::simnet::EventRec],
    check: &'a adkg_sim::checks::RunCheck,
}

fn main() {
    match real_main() {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn real_main() -> Result<i32> {
    match Cli::parse().cmd {
        Cmd::Init { out } => cmd_init(out.as_deref()),
        Cmd::Run {
            config,
            seeds,
            out,
            trace,
            jobs,
        } => cmd_run(&config, seeds, out.as_deref(), trace, jobs),
        Cmd::Scaling {
            protocol,
            n_list,
            seeds,
            out,
            jobs,
        } => cmd_scaling(&protocol, &n_list, seeds, out.as_deref(), jobs),
    }
}

fn cmd_init(out: Option<&Path>) -> Result<i32> {
    let text = ScenarioConfig::reference().to_toml();
    match out {
        Some(path) => {
            fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(0)
}

/// Runs every seed of `scenario`, in parallel when `jobs > 1`, returning
/// results in seed order. Each seed is fully deterministic on its own, so
/// the artifacts do not depend on the thread count.
fn run_seeds(
    scenario: &Scenario,
    seeds: SeedRange,
    trace: bool,
    jobs: Option<usize>,
) -> Vec<(u64, RunLog, adkg_sim::checks::RunCheck)> {
    let jobs = jobs
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|p| p.get())
                .unwrap_or(1)
        })
        .clamp(1, seeds.len().max(1));
    let mut results: Vec<(u64, RunLog, adkg_sim::checks::RunCheck)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|worker| {
                let scenario = scenario.clone();
                scope.spawn(move || {
                    let mut own = Vec::new();
                    for (i, seed) in seeds.iter().enumerate() {
                        if i % jobs == worker {
                            let (log, check) = scenario.run(seed, trace);
                            own.push((seed, log, check));
                        }
                    }
                    own
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    results.sort_by_key(|(seed, _, _)| *seed);
    results
}

fn cmd_run(
    config: &Path,
    seeds: SeedRange,
    out: Option<&Path>,
    trace: bool,
    jobs: Option<usize>,
) -> Result<i32> {
    let text =
        fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg = ScenarioConfig::from_toml(&text)?;
    let scenario = cfg.resolve()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let results = run_seeds(&scenario, seeds, trace, jobs);
    let mut pairs = Vec::with_capacity(results.len());
    for (seed, log, check) in &results {
        let report = SeedReport {
            metrics: &log.metrics,
            events: &log.events,
            check,
        };
        match out {
            Some(dir) => {
                let path = dir.join(format!("run-{seed:06}.json"));
                fs::write(&path, serde_json::to_vec_pretty(&report)?)
                    .with_context(|| format!("writing {}", path.display()))?;
                if trace {
                    let path = dir.join(format!("trace-{seed:06}.ndjson"));
                    let mut file = fs::File::create(&path)
                        .with_context(|| format!("writing {}", path.display()))?;
                    for rec in &log.trace {
                        serde_json::to_writer(&mut file, rec)?;
                        file.write_all(b"\n")?;
                    }
                }
            }
            None => println!("{}", serde_json::to_string(&report)?),
        }
        pairs.push((log.metrics.clone(), check_clone(check)));
    }
    let summary = Summary::from_runs(&pairs);
    let rollup = serde_json::json!({
        "config": cfg,
        "seeds": seeds.to_string(),
        "summary": summary,
    });
    println!("{}", serde_json::to_string_pretty(&rollup)?);
    if let Some(dir) = out {
        fs::write(
            dir.join("summary.json"),
            serde_json::to_vec_pretty(&rollup)?,
        )?;
    }
    if summary.violations > 0 {
        eprintln!(
            "{} violation(s) across {} run(s)",
            summary.violations, summary.runs_with_violations
        );
        return Ok(1);
    }
    Ok(0)
}

// RunCheck intentionally has no Clone; rebuilding it here keeps the
// library type austere.
fn check_clone(c: &adkg_sim::checks::RunCheck) -> adkg_sim::checks::RunCheck {
    adkg_sim::checks::RunCheck {
        violations: c.violations.clone(),
        decided_view: c.decided_view,
        unanimous: c.unanimous,
        honest_value: c.honest_value,
    }
}

fn cmd_scaling(
    protocol: &str,
    n_list: &[usize],
    seeds: SeedRange,
    out: Option<&Path>,
    jobs: Option<usize>,
) -> Result<i32> {
    if n_list.is_empty() {
        bail!("--n-list needs at least one committee size");
    }
    let mut per_n = Vec::new();
    let mut points = Vec::new();
    let mut violations = 0usize;
    for &n in n_list {
        let cfg = ScenarioConfig {
            protocol: protocol.to_string(),
            n,
            ..scaling_base()
        };
        let scenario = cfg.resolve()?;
        let results = run_seeds(&scenario, seeds, false, jobs);
        let words: Vec<f64> = results
            .iter()
            .map(|(_, log, _)| log.metrics.words_total as f64)
            .collect();
        violations += results
            .iter()
            .map(|(_, _, c)| c.violations.len())
            .sum::<usize>();
        let mean = words.iter().sum::<f64>() / words.len().max(1) as f64;
        for w in &words {
            points.push((n as f64, *w));
        }
        per_n.push(serde_json::json!({
            "n": n,
            "runs": results.len(),
            "words_mean": mean,
        }));
    }
    let slope = log_log_slope(&points)?;
    let report = serde_json::json!({
        "protocol": protocol,
        "seeds": seeds.to_string(),
        "per_n": per_n,
        "slope": slope,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(path) = out {
        fs::write(path, serde_json::to_vec_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if violations > 0 {
        eprintln!("{violations} violation(s) during the sweep");
        return Ok(1);
    }
    Ok(0)
}

/// Honest uniform-network baseline used for complexity sweeps.
fn scaling_base() -> ScenarioConfig {
    ScenarioConfig {
        protocol: String::new(),
        n: 0,
        f: None,
        lambda: None,
        budget: None,
        session: None,
        dealer: None,
        msg_words: Some(8),
        inputs: None,
        adversary: None,
        corrupt: None,
        scheduler: None,
        scheduler_target: None,
        scheduler_weight: None,
    }
}
