use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mars_bench::config::ExperimentConfig;
use mars_bench::export::{load_records, summarize, write_record};
use mars_bench::harness::{rescore, run_experiment, union_reference_hv};

#[derive(Parser)]
#[command(name = "mars-bench", version, about = "Robust multi-objective BO benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and write its CSV and JSON record.
    Run(RunArgs),
    /// Re-score every run in a directory against the grid plus all evaluated designs.
    Evaluate {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 200)]
        grid: usize,
    },
    /// Mean and twice the standard error of final log regret per problem and method.
    Summarize {
        #[arg(long)]
        runs: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML file with any configuration key; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_xi: Option<usize>,
    #[arg(long)]
    n_mc: Option<usize>,
    #[arg(long)]
    n_xi_eval: Option<usize>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other configuration key, as `key=value` in TOML syntax.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn into_config(self) -> anyhow::Result<ExperimentConfig> {
        let mut table: toml::Table = match &self.config {
            Some(p) => std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?
                .parse()?,
            None => toml::Table::new(),
        };
        let mut put = |k: &str, v: toml::Value| {
            table.insert(k.to_string(), v);
        };
        let int = |v: u64| toml::Value::Integer(v as i64);
        if let Some(v) = self.problem {
            put("problem", v.into());
        }
        if let Some(v) = self.method {
            put("method", v.into());
        }
        if let Some(v) = self.alpha {
            put("alpha", v.into());
        }
        for (k, v) in [
            ("n-xi", self.n_xi),
            ("n-mc", self.n_mc),
            ("n-xi-eval", self.n_xi_eval),
            ("n-init", self.n_init),
            ("iters", self.iters),
            ("batch", self.batch),
            ("grid", self.grid),
        ] {
            if let Some(v) = v {
                put(k, int(v as u64));
            }
        }
        if let Some(v) = self.seed {
            put("seed", int(v));
        }
        if self.timing {
            put("timing", true.into());
        }
        if let Some(v) = self.out {
            put("out", v.display().to_string().into());
        }
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {kv}");
            };
            let value: toml::Table = format!("v = {v}")
                .parse()
                .or_else(|_| format!("v = \"{v}\"").parse())
                .with_context(|| format!("parsing value of {k}"))?;
            put(k.trim(), value["v"].clone());
        }
        Ok(toml::Value::Table(table).try_into()?)
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let record = run_experiment(&cfg)?;
            let path = write_record(&record, &cfg.out)?;
            println!(
                "{} final hv {:.6e} log10 regret {:.4} -> {}",
                cfg.trial_stem(),
                record.final_hv(),
                record.final_log_regret(),
                path.display()
            );
        }
        Command::Evaluate { runs, problem, grid } => {
            let mut records: Vec<_> = load_records(&runs)?
                .into_iter()
                .filter(|r| r.config.problem == problem)
                .collect();
            if records.is_empty() {
                bail!("no runs for {problem} in {}", runs.display());
            }
            let true_hv = union_reference_hv(&records, grid)?;
            for r in &mut records {
                rescore(r, true_hv);
                write_record(r, &runs)?;
            }
            println!("{problem}: reference hv {true_hv:.16e} over {} runs", records.len());
        }
        Command::Summarize { runs } => {
            let summary = summarize(&load_records(&runs)?)?;
            std::fs::write(runs.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            println!(
                "{:<14} {:<11} {:>3} {:>12} {:>10}",
                "problem", "method", "n", "log_regret", "2se"
            );
            for g in summary {
                println!(
                    "{:<14} {:<11} {:>3} {:>12.4} {:>10.4}",
                    g.problem, g.method, g.n, g.mean_final_log_regret, g.two_se
                );
            }
        }
    }
    Ok(())
}
