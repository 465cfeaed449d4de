use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use apstream_core::engine::Scheme;
use apstream_core::oracle::check_many;
use apstream_core::scenario::{
    format_summary, run_scenario, summarize, sweep, write_csv, write_json, RunMetrics,
    ScenarioConfig,
};
use apstream_core::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "apstream",
    version,
    about = "Network-assisted DASH streaming simulator for a cache-enabled WiFi AP"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured scheme for all replications.
    Run(Common),
    /// Run the scenario for each value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// n_clients, backhaul_mbps, mu_c, gamma or n_videos.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Compare the CPH solver with exhaustive search on random instances.
    OracleCheck {
        #[arg(long, default_value_t = 500)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML scenario file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Repeatable; overrides the configured scheme list.
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    /// Number of clients N.
    #[arg(long)]
    clients: Option<usize>,
    /// Catalog size V.
    #[arg(long)]
    videos: Option<usize>,
    /// Backhaul capacity in Mbps.
    #[arg(long)]
    backhaul_mbps: Option<f64>,
    /// Tolerated quality-level offset.
    #[arg(long)]
    gamma: Option<usize>,
    /// Weight of cache-served bitrate in the utility.
    #[arg(long)]
    mu_c: Option<f64>,
    /// Replications per scheme.
    #[arg(long)]
    reps: Option<u32>,
    /// Base seed; replication r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
    /// One row per (scheme, replication).
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Per-scheme means with 95% confidence intervals.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if !self.schemes.is_empty() {
            cfg.schemes = self
                .schemes
                .iter()
                .map(|s| s.parse::<Scheme>())
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = self.clients {
            cfg.n_clients = v;
        }
        if let Some(v) = self.videos {
            cfg.n_videos = v;
        }
        if let Some(v) = self.backhaul_mbps {
            cfg.backhaul_mbps = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.mu_c {
            cfg.mu_c = v;
        }
        if let Some(v) = self.reps {
            cfg.replications = v;
        }
        if let Some(v) = self.seed {
            cfg.base_seed = v;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn emit(&self, rows: &[RunMetrics]) -> Result<ExitCode> {
        let summary = summarize(rows);
        if let Some(p) = &self.out_csv {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            write_csv(rows, BufWriter::new(f))?;
        }
        if let Some(p) = &self.out_json {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            write_json(&summary, BufWriter::new(f))?;
        }
        print!("{}", format_summary(&summary));
        let violations: u64 = rows.iter().map(|r| r.invariant_violations).sum();
        if violations > 0 {
            eprintln!("invariant violations: {violations}");
            return Ok(ExitCode::from(EXIT_INVARIANT));
        }
        Ok(ExitCode::SUCCESS)
    }
}

fn oracle_check(instances: usize, seed: u64) -> Result<ExitCode> {
    let bad = check_many(instances, seed)?;
    for (i, c) in &bad {
        eprintln!(
            "instance {i}: cph utility {} cost {} vs exhaustive utility {} cost {}",
            c.cph_utility, c.cph_cost, c.oracle_utility, c.oracle_cost
        );
    }
    println!("{instances} instances, {} mismatches", bad.len());
    Ok(if bad.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVARIANT)
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.scenario()?;
            let rows = run_scenario(&cfg)?;
            common.emit(&rows)
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let cfg = common.scenario()?;
            let rows = sweep(&cfg, &param, &values)?;
            common.emit(&rows)
        }
        Command::OracleCheck { instances, seed } => oracle_check(instances, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = matches!(
                e.downcast_ref::<Error>(),
                Some(
                    Error::Config(_)
                        | Error::Parse { .. }
                        | Error::Validation(_)
                        | Error::UnknownParameter { .. }
                )
            );
            ExitCode::from(if config { EXIT_CONFIG } else { 1 })
        }
    }
}
