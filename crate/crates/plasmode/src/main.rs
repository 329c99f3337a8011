use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plasmode::cli::{exit_code, parse_config, resolve_threads, run, RunOptions};

#[derive(Parser)]
#[command(name = "plasmode", version, about = "Plasmonic quasi-normal modes of 2D Drude nanoparticles")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the scenario described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; falls back to PLASMODE_THREADS.
        #[arg(long)]
        threads: Option<usize>,
        /// Newton-polish the corrected resonances on the full log condition.
        #[arg(long)]
        polish_roots: bool,
        /// Simpson synthesis instead of the uniform Riemann sum.
        #[arg(long)]
        high_order_ift: bool,
    },
}

fn main() -> ExitCode {
    let Cmd::Run { config, out, threads, polish_roots, high_order_ift } = Args::parse().cmd;
    let result = (|| {
        let env = std::env::var("PLASMODE_THREADS").ok();
        if let Some(k) = resolve_threads(threads, env.as_deref())? {
            // ignore a pool that already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
        let cfg = parse_config(&config)?;
        run(&cfg, &RunOptions { out_dir: out, polish_roots, high_order_ift })
    })();
    match result {
        Ok(m) => {
            for (stage, secs) in &m.stages {
                eprintln!("{stage}: {secs:.2} s");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("plasmode: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
