//! `silfd`: generate demonstrations, train, sweep and evaluate on Chain.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use silfd::algo::Variant;
use silfd::demos::mix;
use silfd::runner::{self, Resolved, RunnerError, SweepSpec, EXIT_OK};

#[derive(Parser)]
#[command(name = "silfd", version, about = "Self-imitation learning from demonstrations on Chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write 1 optimal + K adversarial demonstrations as JSONL.
    GenDemos {
        #[arg(long = "n-adversarial", value_name = "K")]
        n_adversarial: usize,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[arg(long, default_value_t = silfd::chain::DEFAULT_SIZE)]
        grid_size: usize,
    },
    /// Train one run.
    Train {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Demonstration JSONL file.
        #[arg(long, value_name = "PATH")]
        demos: Option<PathBuf>,
        /// Adversarial demo count, paired with one optimal demo.
        #[arg(long = "n-adversarial", value_name = "K", conflicts_with = "demos")]
        n_adversarial: Option<usize>,
        /// Run directory [default: $SILFD_OUT_DIR/<variant>-seed<S>].
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run every (setting, seed) pair and write summary.csv.
    Sweep {
        #[command(flatten)]
        common: ConfigArgs,
        /// Adversarial demo counts, comma separated.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        settings: Vec<usize>,
        /// Number of seeds, run as 0..N.
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        /// Sweep directory [default: $SILFD_OUT_DIR/sweep-<variant>].
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Concurrent runs; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Evaluate an actor checkpoint.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = silfd::chain::DEFAULT_SIZE)]
        grid_size: usize,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    variant: Option<String>,
    /// TOML config file; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Any config key, e.g. --set total_transitions=200000. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, toml::Value)>, RunnerError> {
        let mut out = Vec::new();
        for s in &self.set {
            out.push(runner::parse_override(s)?);
        }
        if let Some(v) = &self.variant {
            let v: Variant = v.parse()?;
            out.push(("variant".into(), toml::Value::String(v.name().into())));
        }
        Ok(out)
    }
}

fn run(cli: Cli) -> Result<i32, RunnerError> {
    match cli.command {
        Command::GenDemos { n_adversarial, out, grid_size } => {
            let set = mix(1, n_adversarial, grid_size)?;
            set.save(&out)?;
            println!("wrote {} episodes to {}", set.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::Train {
            common,
            seed,
            demos,
            n_adversarial,
            out,
        } => {
            let mut o = common.overrides()?;
            if let Some(s) = seed {
                o.push(("seed".into(), toml::Value::Integer(s as i64)));
            }
            if let Some(p) = demos {
                o.push(("demos_path".into(), toml::Value::String(p.to_string_lossy().into_owned())));
            }
            if let Some(k) = n_adversarial {
                o.push(("demo_adversarial".into(), toml::Value::Integer(k as i64)));
            }
            let resolved = runner::resolve_config(common.config.as_deref(), &o)?;
            let dir = out.unwrap_or_else(|| runner::default_train_dir(resolved.config.variant, resolved.config.seed));
            let rep = runner::run_training(&resolved, &dir)?;
            println!("final eval mean return {:.4}", rep.final_eval);
            println!("run directory {}", rep.dir.display());
            Ok(EXIT_OK)
        }
        Command::Sweep {
            common,
            settings,
            seeds,
            out,
            jobs,
        } => {
            let base: Resolved = runner::resolve_sweep_base(common.config.as_deref(), &common.overrides()?)?;
            let out = out.unwrap_or_else(|| runner::out_root().join(format!("sweep-{}", base.config.variant)));
            let spec = SweepSpec {
                settings,
                seeds,
                base,
                out,
                jobs,
            };
            let rep = runner::run_sweep(&spec)?;
            println!("{:>8} {:>6} {:>9} {:>10} {:>10} {:>10}", "setting", "seeds", "failures", "mean", "min", "max");
            for r in &rep.summary {
                println!(
                    "{:>8} {:>6} {:>9} {:>10.3} {:>10.3} {:>10.3}",
                    r.setting, r.seeds, r.failures, r.mean, r.min, r.max
                );
            }
            for r in rep.runs.iter().filter(|r| r.result.is_err()) {
                eprintln!("k{} seed{}: {}", r.setting, r.seed, r.result.as_ref().unwrap_err());
            }
            println!("summary {}", spec.out.join("summary.csv").display());
            Ok(rep.exit_code())
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            grid_size,
        } => {
            let s = runner::eval_checkpoint(&checkpoint, grid_size, episodes as usize, seed)?;
            println!("mean {:.4} min {:.4} max {:.4} episodes {}", s.mean, s.min, s.max, s.returns.len());
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
