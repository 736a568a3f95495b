use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use liquid_rank::io::{parse_scenario, RunBundle};
use liquid_rank::market::run_scenario;
use liquid_rank::sweep::{
    parse_seeds, read_summary, render_table, write_summary, Grid, Preset, SweepSpec, SUMMARY_FILE,
};

/// Scenario used by `--config demo` when no file of that name exists.
const DEMO_CONFIG: &str = "\
# 100 agents over 90 days, consumers choosing suppliers by weighted reputation
n_agents=100
days=90
good_value_ratio=20
usage_mode=explicit-weighted
seed=1
";

#[derive(Parser)]
#[command(name = "liquid-rank", version, about = "Weighted liquid rank reputation and marketplace scam simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Small,
    Medium,
    Large,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Small => Preset::Small,
            PresetArg::Medium => Preset::Medium,
            PresetArg::Large => Preset::Large,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Fig1,
    Fig2,
}

impl From<GridArg> for Grid {
    fn from(g: GridArg) -> Self {
        match g {
            GridArg::Fig1 => Grid::Fig1,
            GridArg::Fig2 => Grid::Fig2,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its config, ratings, states and report.
    Simulate {
        /// Scenario file, or `demo` for the built-in scenario.
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's agent count and days.
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Run a named grid over several seeds and write summary.csv.
    Sweep {
        #[arg(long, value_enum)]
        grid: GridArg,
        #[arg(long, value_enum, default_value = "medium")]
        preset: PresetArg,
        /// `1..10`, `1,4,9` or a mix.
        #[arg(long, default_value = "1..10")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a stored sweep as an aligned table.
    Report {
        /// Sweep output directory or summary file.
        path: PathBuf,
    },
}

fn load_config(name: Option<&str>) -> Result<liquid_rank::ScenarioConfig> {
    let text = match name {
        None => return Ok(liquid_rank::ScenarioConfig::default()),
        Some("demo") if !Path::new("demo").exists() => DEMO_CONFIG.to_owned(),
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?,
    };
    let origin = name.unwrap_or_default();
    parse_scenario(&text).with_context(|| format!("config {origin}"))
}

fn summary_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(SUMMARY_FILE)
    } else {
        path.to_owned()
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            out,
            seed,
            preset,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = preset {
                Preset::from(p).apply(&mut cfg);
            }
            let outcome = run_scenario(&cfg)?;
            let bundle = RunBundle {
                config: cfg,
                log: outcome.log,
                states: outcome.states,
                report: outcome.report,
            };
            bundle
                .write(&out)
                .with_context(|| format!("writing bundle to {}", out.display()))?;
            print!("{}", liquid_rank::io::write_report(&bundle.report));
        }
        Command::Sweep {
            grid,
            preset,
            seeds,
            out,
        } => {
            let seeds = parse_seeds(&seeds)?;
            let spec = SweepSpec::new(grid.into(), preset.into(), seeds);
            eprintln!("{}", spec.describe());
            let sweep = spec.run_with_env_workers()?;
            std::fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            let path = out.join(SUMMARY_FILE);
            let mut buf = Vec::new();
            write_summary(&sweep, &mut buf)?;
            std::fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
            print!("{}", render_table(&sweep));
        }
        Command::Report { path } => {
            let path = summary_path(&path);
            if !path.exists() {
                bail!("{} does not exist", path.display());
            }
            let file =
                std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let sweep = read_summary(std::io::BufReader::new(file))
                .with_context(|| format!("reading {}", path.display()))?;
            print!("{}", render_table(&sweep));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
