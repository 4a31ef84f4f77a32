use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tcsdp::bench::{run_batch, summarize, write_results, NoiseLevel, ScenarioConfig};
use tcsdp::robots::ProblemKind;

#[derive(Parser)]
#[command(name = "bench", about = "Synthetic PnP, hand-eye and dual-arm calibration benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Kind {
    Pnp,
    Handeye,
    Dualcal,
}

#[derive(Subcommand)]
enum Command {
    /// Run one batch of seeds and write results.csv, summary.csv and results.json.
    Run {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 6)]
        m: usize,
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, value_enum, default_value_t = NoiseLevel::None)]
        noise: NoiseLevel,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        gamma_c: Option<f64>,
        #[arg(long)]
        gamma_w: Option<f64>,
        /// Scheduling and channel iteration limits, `SCHED,CHANNEL`.
        #[arg(long, value_delimiter = ',')]
        limits: Option<Vec<usize>>,
        #[arg(long)]
        repeat: Option<usize>,
        /// Step bound as a multiple of each group trace; 0 disables it.
        #[arg(long)]
        trust_region: Option<f64>,
        /// Hold every trace group inside the channel band, not only the sum.
        #[arg(long)]
        channel_per_group: bool,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Write per-iteration progress to `progress/<kind>-<seed>.ndjson`.
        #[arg(long)]
        progress: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Command::Run {
        kind,
        m,
        n,
        noise,
        seeds,
        first_seed,
        out,
        gamma,
        gamma_c,
        gamma_w,
        limits,
        repeat,
        trust_region,
        channel_per_group,
        parallel,
        progress,
    } = Cli::parse().command;
    if limits.as_ref().is_some_and(|l| l.len() != 2) {
        eprintln!("--limits expects two values, SCHED,CHANNEL");
        return ExitCode::FAILURE;
    }
    let kind = match kind {
        Kind::Pnp => ProblemKind::Pnp,
        Kind::Handeye => ProblemKind::HandEye,
        Kind::Dualcal => ProblemKind::DualCal,
    };
    let configs: Vec<ScenarioConfig> = (first_seed..first_seed + seeds)
        .map(|seed| {
            let mut cfg = ScenarioConfig::new(kind, m, n, noise, seed);
            if let Some(g) = gamma {
                cfg.refine.gamma = g;
            }
            if let Some(g) = gamma_c {
                cfg.refine.gamma_c = g;
            }
            if let Some(g) = gamma_w {
                cfg.gamma_w = g;
            }
            if let Some(l) = &limits {
                cfg.refine.scheduling_limit = l[0];
                cfg.refine.channel_limit = l[1];
            }
            if let Some(t) = trust_region {
                cfg.refine.trust_region = (t > 0.0).then_some(t);
            }
            cfg.refine.channel_per_group |= channel_per_group;
            if let Some(r) = repeat {
                cfg.refine.max_repeats = r;
            }
            cfg
        })
        .collect();
    if let Some(c) = configs.first() {
        if let Err(e) = c.refine.validate() {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    }
    let progress_dir = progress.then(|| out.join("progress"));
    let result = run_batch(&configs, parallel, progress_dir.as_deref()).and_then(|reports| {
        write_results(&out, &reports)?;
        Ok(reports)
    });
    match result {
        Ok(reports) => {
            for s in summarize(&reports) {
                println!(
                    "{:?} m={} n={} noise={}: R {:?} t {:?} EG {:.2e} DG {:.2e} cost {:.2e} {}/{}",
                    s.kind,
                    s.m,
                    s.n,
                    s.noise.name(),
                    s.rotation_errors,
                    s.translation_errors,
                    s.eigen_gap,
                    s.duality_gap,
                    s.cost,
                    s.successes,
                    s.total
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
