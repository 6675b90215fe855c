use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use diskapprox::config::RunConfig;
use diskapprox::diskgrid::build_scheme;
use diskapprox::io;
use diskapprox::run::{approximate, check_artifacts, round_trip_difference};
use diskapprox::verify::{CriterionReport, Suite, VerifyOptions};

#[derive(Parser)]
#[command(name = "diskapprox", version, about = "Approximate subharmonic functions in the disk by log|f|")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "DISKAPPROX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the approximant and write all artifacts.
    Approximate(Common),
    /// Check artifacts of a run, or run the full acceptance suite without --config.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma separated criterion numbers (suite mode only).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u32>,
    },
    /// Print the annular scheme as CSV.
    Scheme {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "config")]
        q: Option<f64>,
        #[arg(long, conflicts_with = "config")]
        depth: Option<usize>,
    },
    /// Print the summary of a finished run.
    Report(Common),
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let Some(path) = &self.config else { bail!("--config PATH is required") };
        let mut cfg = RunConfig::load(path)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.out.clone());
        Ok((cfg, out))
    }
}

fn print_reports(reports: &[CriterionReport]) -> bool {
    for r in reports {
        println!("{}", r.line());
        for i in &r.info {
            println!("    {i}");
        }
    }
    reports.iter().all(|r| r.passed())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Approximate(c) => {
            let (cfg, out) = c.load()?;
            let s = approximate(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            Ok(true)
        }
        Command::Verify { common, criteria } => {
            if common.config.is_none() {
                let opts = VerifyOptions { seed: common.seed.unwrap_or(VerifyOptions::default().seed), criteria };
                let suite = Suite::new(opts);
                println!("seed {}", suite.options.seed);
                return Ok(print_reports(&suite.run_all()));
            }
            let (cfg, out) = common.load()?;
            if !out.join(io::ATOMS_CSV).exists() {
                approximate(&cfg, &out)?;
            }
            Ok(print_reports(&check_artifacts(&cfg, &out)?))
        }
        Command::Scheme { common, q, depth } => {
            let (q, depth, out) = if common.config.is_some() {
                let (cfg, out) = common.load()?;
                (cfg.q, cfg.depth, Some(out))
            } else {
                (q.unwrap_or(0.99), depth.unwrap_or(100), common.out.clone())
            };
            let scheme = build_scheme(q, depth)?;
            let text = io::scheme_csv(&scheme)?;
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
                std::fs::write(dir.join(io::SCHEME_CSV), &text)?;
            }
            print!("{text}");
            Ok(true)
        }
        Command::Report(c) => {
            let (cfg, out) = c.load()?;
            let summary = read_summary(&out)?;
            print!("{summary}");
            let d = round_trip_difference(&cfg, &out)?;
            println!("round_trip_max_difference = {d:e}");
            Ok(true)
        }
    }
}

fn read_summary(out: &Path) -> Result<String> {
    let path = out.join(io::SUMMARY_JSON);
    std::fs::read_to_string(&path).with_context(|| format!("{}: run `diskapprox approximate` first", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
