use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use smdp_synth::experiment::{build_product, run_experiment, self_check, write_files, ExperimentConfig, Oracle};

/// Overrides the configured output directory; `--out` overrides this.
const OUT_ENV: &str = "SMDP_SYNTH_OUT";

#[derive(Parser)]
#[command(name = "smdp-synth", version, about = "Learning-based bounded synthesis for SMDPs under LTL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn, plan, and write the artifact bundle.
    Run(Common),
    /// Exact winning region and reachability only.
    Oracle(Common),
    /// Built-in self-test; exits nonzero on any failure.
    Check,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; the desk preset when omitted.
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Start from the 5×5, K = 20 preset instead of the desk one.
    #[arg(long, conflicts_with = "config")]
    paper_scale: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None if self.paper_scale => ExperimentConfig::paper_scale(),
            None => ExperimentConfig::desk(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(reps) = self.reps {
            cfg.repetitions = reps;
        }
        if let Some(dir) = std::env::var_os(OUT_ENV) {
            cfg.output_dir = dir.into();
        }
        if let Some(dir) = &self.out {
            cfg.output_dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report(written: &[PathBuf], dir: &Path) {
    println!("wrote {} files to {}", written.len(), dir.display());
    for path in written {
        println!("  {}", path.display());
    }
}

fn run(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let result = run_experiment(&cfg)?;
    let a = &result.summary.aggregate;
    println!(
        "{}: {} product states, {} repetitions, {} converged",
        cfg.name, result.summary.product_states, a.repetitions, a.converged
    );
    if let Some(exact) = a.exact_matches {
        println!("exact winning region recovered in {exact}/{} runs", a.repetitions);
    }
    if let Some(ind) = a.mean_ind_final {
        println!("mean final Ind: {ind:.4}");
    }
    let written = result.write_artifacts(&cfg.output_dir)?;
    report(&written, &cfg.output_dir);
    Ok(())
}

fn oracle(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let prod = build_product(&cfg)?;
    let o = Oracle::compute(&prod, cfg.risk, cfg.gamma_r, cfg.vi_tolerance)?;
    println!(
        "{}: {} product states, |W| = {}, |W_p| = {}",
        cfg.name,
        prod.num_states(),
        o.region.num_states(),
        o.region.num_pairs()
    );
    println!("max reach probability from the initial state: {:.6}", o.max_reach[prod.initial()]);
    let doc = serde_json::to_string_pretty(&o.to_json(&prod))? + "\n";
    let written = write_files(&cfg.output_dir, &[("oracle.json", doc)])?;
    report(&written, &cfg.output_dir);
    Ok(())
}

fn check() -> bool {
    let outcomes = self_check();
    for c in &outcomes {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    outcomes.iter().all(|c| c.passed)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(c) => run(c)?,
        Command::Oracle(c) => oracle(c)?,
        Command::Check => {
            if !check() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
