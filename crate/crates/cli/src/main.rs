use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdvisc::par::Exec;
use sdvisc::runner::{self, compute_metrics, RunError, Series};

#[derive(Parser)]
#[command(name = "sdvisc", version, about = "Wind-farm virtual synchronous condenser co-simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write series.csv, events.ndjson and metrics.json.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// `key=value`, dotted keys as in the config file.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        fail_on_divergence: bool,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run once per value of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Run the sweep on one thread.
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        fail_on_divergence: bool,
    },
    /// Recompute metrics from an emitted CSV.
    Metrics { csv: PathBuf },
}

fn read(p: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(p).map_err(|e| RunError::Io(format!("{}: {e}", p.display())))
}

fn with_seed(mut o: Vec<String>, seed: Option<u64>) -> Vec<String> {
    if let Some(s) = seed {
        o.push(format!("seed={s}"));
    }
    o
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode, RunError> {
    match cli.cmd {
        Cmd::Run {
            config,
            out,
            seed,
            overrides,
            fail_on_divergence,
        } => {
            let sc = runner::load_scenario(&read(&config)?, &with_seed(overrides, seed))?;
            let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&sc.name));
            let r = runner::run(&sc)?;
            r.write(&dir)?;
            println!("{}", r.metrics.to_json());
            if let Some((t, why)) = &r.diverged {
                eprintln!("diverged at t = {t:.4} s: {why}");
                if fail_on_divergence {
                    return Ok(ExitCode::from(2));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Validate { config, overrides } => {
            let sc = runner::load_scenario(&read(&config)?, &overrides)?;
            println!(
                "{}: {} turbines, {} events, controller period {} s",
                sc.name,
                sc.n(),
                sc.events.len(),
                runner::fmt9(sc.ts_s)
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sweep {
            config,
            param,
            values,
            out,
            overrides,
            sequential,
            fail_on_divergence,
        } => {
            let text = read(&config)?;
            let sc = runner::load_scenario(&text, &overrides)?;
            let root = out.unwrap_or_else(|| PathBuf::from("out").join(format!("{}-sweep", sc.name)));
            let exec = if sequential { Exec::Sequential } else { Exec::Auto };
            let mut any_diverged = false;
            for r in runner::sweep(&text, &overrides, &param, &values, exec) {
                let r_out = r.result?;
                r_out.write(&root.join(format!("{param}={}", r.value)))?;
                any_diverged |= r_out.diverged.is_some();
                println!(
                    "{param}={}\tfreq_nadir={}\tv_pcc_min={}\tdiverged={}",
                    r.value,
                    runner::fmt9(r_out.metrics.freq_nadir),
                    runner::fmt9(r_out.metrics.v_pcc_min),
                    r_out.metrics.diverged
                );
            }
            Ok(if any_diverged && fail_on_divergence { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Cmd::Metrics { csv } => {
            let s = Series::from_csv(&read(&csv)?).map_err(RunError::Parse)?;
            println!("{}", compute_metrics(&s)?.to_json());
            Ok(ExitCode::SUCCESS)
        }
    }
}
