use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use coagsens::cli::{parse_config, run_experiment};

/// Run a coagulation sensitivity experiment described by a config file.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Path to a `key = value` experiment config.
    #[arg(long)]
    config: PathBuf,

    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    output: Option<PathBuf>,

    /// Base seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (overrides `threads`).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("{}: {e}", args.config.display()))
        .and_then(|text| parse_config(&text).map_err(|e| e.to_string()))
        .and_then(|mut config| {
            if let Some(dir) = args.output {
                config.output_dir = dir;
            }
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            if let Some(t) = args.threads {
                if t == 0 {
                    return Err("threads: must be at least 1".to_string());
                }
                config.threads = Some(t);
            }
            run_experiment(&config).map_err(|e| e.to_string())
        });
    match result {
        Ok(report) => {
            let mut line = format!("wrote {} run(s) to {}", report.n_runs, report.output_dir.display());
            if let Some(d) = report.d_var {
                line.push_str(&format!(", d_var = {d:.6e}"));
            }
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
