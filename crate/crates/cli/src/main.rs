use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use lerwlab_core::harness::{run, ExperimentConfig, EXPERIMENTS};

/// Run a lerwlab experiment and write results.csv, summary.json and
/// manifest.json.
#[derive(Parser, Debug)]
#[command(name = "lerwlab", version, about)]
struct Args {
    /// Experiment id, or `list` to print the available ids.
    experiment: String,
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra key=value overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the resolved config and exit.
    #[arg(long)]
    dry_run: bool,
}

fn build_config(args: &Args) -> Result<ExperimentConfig, String> {
    let mut text = format!("experiment = {}\n", args.experiment);
    if let Some(path) = &args.config {
        let body = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        text.push_str(&body);
    }
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| e.to_string())?;
    for kv in &args.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| e.to_string())?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replicas {
        cfg.replicas = r;
        cfg.extra.remove("replicas_by_n");
        cfg.extra.remove("replicas_last");
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.experiment == "list" {
        for id in EXPERIMENTS {
            println!("{id}");
        }
        return ExitCode::SUCCESS;
    }
    let cfg = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if args.dry_run {
        print!("{}", cfg.to_text());
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let rec = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    for c in &rec.checks {
        println!("{}", c.line());
    }
    for f in &rec.fits {
        println!("fit {}: slope {:.4} (95% CI [{:.4}, {:.4}])", f.name, f.slope, f.ci_lo, f.ci_hi);
    }
    for (k, v) in &rec.scalars {
        println!("{k} = {v:.6}");
    }
    if let Some(dir) = &cfg.out {
        if let Err(e) = rec.write(dir) {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
        println!("wrote {}", dir.display());
    }
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    ExitCode::SUCCESS
}
