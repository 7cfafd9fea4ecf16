use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ssrlab::harness::{
    ablate, collect_heatmaps, dump_ablation_csv, dump_heatmaps, parse_list, run_experiment,
    summary_table, threads_from_env, write_bundle, ExperimentConfig, HarnessError,
};
use ssrlab::selfcheck;

#[derive(Parser)]
#[command(
    name = "ssrlab",
    version,
    about = "Streaming state regularization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write results.csv / summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Sweep the SSR window size and write ablation.csv.
    AblateWindow {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "2,4,8,16,32,64")]
        sizes: String,
        /// Overrides run.trials.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Dump SSR affinity grids (trial 0) at the given frames.
    AffinityDump {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        frames: String,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Compare the library against brute-force oracles.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::parse(&text)
}

fn out_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> Result<PathBuf, HarnessError> {
    let dir = flag.unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&dir).map_err(|source| HarnessError::Io {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

fn run(cmd: Command) -> Result<bool, HarnessError> {
    match cmd {
        Command::Simulate { config, output_dir } => {
            let cfg = load(&config)?;
            let bundle = run_experiment(&cfg, threads_from_env()?)?;
            let dir = out_dir(&cfg, output_dir)?;
            for p in write_bundle(&bundle, &dir)? {
                eprintln!("wrote {}", p.display());
            }
            print!("{}", summary_table(&bundle));
        }
        Command::AblateWindow {
            config,
            sizes,
            trials,
            output_dir,
        } => {
            let mut cfg = load(&config)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            let sizes: Vec<usize> = parse_list("sizes", &sizes)?;
            let rows = ablate(&cfg, &sizes, threads_from_env()?)?;
            let path = out_dir(&cfg, output_dir)?.join("ablation.csv");
            dump_ablation_csv(&rows, &path)?;
            eprintln!("wrote {}", path.display());
            println!("{:>6} {:>14} {:>10}", "k", "improvement", "std");
            for r in &rows {
                println!(
                    "{:>6} {:>14.6} {:>10.6}",
                    r.k, r.mean_improvement_ratio, r.std
                );
            }
        }
        Command::AffinityDump {
            config,
            frames,
            output_dir,
        } => {
            let cfg = load(&config)?;
            let frames: Vec<usize> = parse_list("frames", &frames)?;
            let maps = collect_heatmaps(&cfg, &frames)?;
            for p in dump_heatmaps(&maps, &out_dir(&cfg, output_dir)?)? {
                println!("{}", p.display());
            }
        }
        Command::Selfcheck { seed } => {
            let report = selfcheck::run(seed).map_err(|source| HarnessError::Numeric {
                method: "selfcheck".into(),
                trial: None,
                frame: None,
                source,
            })?;
            print!("{report}");
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
