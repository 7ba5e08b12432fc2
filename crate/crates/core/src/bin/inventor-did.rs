use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inventor_did::pipeline::{self, parse_windows, RunConfig};
use inventor_did::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "inventor-did", version, about = "Matched difference-in-differences on patent data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one option; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    patents: Option<PathBuf>,
    #[arg(long, global = true)]
    deals: Option<PathBuf>,
    #[arg(long, global = true)]
    alias_review: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    firm_threshold: Option<f64>,
    #[arg(long, global = true)]
    inventor_threshold: Option<f64>,
    /// After-window lengths for the robustness tables, e.g. `3,4,5,6`.
    #[arg(long, global = true)]
    windows: Option<String>,
    /// Number of placebo permutations.
    #[arg(long, global = true)]
    placebo: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Validate inputs and store normalised copies.
    Ingest,
    /// Cohorts, firm and inventor matching, balance.
    Match,
    /// Two-period panel of matched pairs.
    Panel,
    /// Regression tables, placebo and predictions.
    Estimate,
    /// Relocation distances.
    Geo,
    /// Synthetic corpus plus recovery check.
    Simulate,
    /// Every stage, simulating first when no inputs are given.
    All,
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(p) = &cli.out {
        cfg.output_dir = p.clone();
    }
    if let Some(p) = &cli.patents {
        cfg.patents = Some(p.clone());
    }
    if let Some(p) = &cli.deals {
        cfg.deals = Some(p.clone());
    }
    if let Some(p) = &cli.alias_review {
        cfg.alias_review = Some(p.clone());
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(t) = cli.firm_threshold {
        cfg.firm_threshold = t;
    }
    if let Some(t) = cli.inventor_threshold {
        cfg.inventor_threshold = t;
    }
    if let Some(w) = &cli.windows {
        cfg.windows = parse_windows(w)?;
    }
    if let Some(n) = cli.placebo {
        cfg.placebo_n = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn recovery_verdict(report: &inventor_did::synth::RecoveryReport) -> Result<()> {
    print!("{}", report.render());
    if report.passed() {
        Ok(())
    } else {
        Err(Error::numerical("synthetic effects were not recovered").in_stage("simulate"))
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    match cli.command {
        Command::Ingest => {
            let s = pipeline::cmd_ingest(&cfg)?;
            println!("ingested {} patents, {} deals", s.patents, s.deals);
        }
        Command::Match => {
            let s = pipeline::cmd_match(&cfg)?;
            println!("{} cohorts, {} pairs, {} cohorts dropped", s.cohorts, s.pairs, s.dropped_cohorts.len());
        }
        Command::Panel => {
            let p = pipeline::cmd_panel(&cfg)?;
            println!("{} pairs, {} rows", p.pairs(), p.rows.len());
        }
        Command::Estimate => {
            pipeline::cmd_estimate(&cfg)?;
            println!("tables written to {}", cfg.output_dir.join("estimate").display());
        }
        Command::Geo => {
            let t = pipeline::cmd_geo(&cfg)?;
            println!("{} relocation records", t.records.len());
        }
        Command::Simulate => recovery_verdict(&pipeline::cmd_simulate(&cfg)?)?,
        Command::All => {
            if let Some(r) = pipeline::cmd_all(&cfg)? {
                recovery_verdict(&r)?;
            }
            println!("outputs under {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
