//! `polystokes`: batch driver. Exit status 0 on success, 2 when an assertion
//! fails, 1 on any error.

mod data;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use polystokes::config::RunConfig;
use serde_json::json;

use crate::data::Setup;
use crate::run::Outcome;

#[derive(Parser)]
#[command(name = "polystokes", version, about = "Stokes resolvent and evolution solvers on polygons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run twice and fail unless both runs produce byte-identical outputs.
    #[arg(long, global = true)]
    seedless: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Corner exponents and weight windows.
    Corners,
    /// Generate the mesh and write it as POLYSTOKES-MESH v1.
    Mesh,
    /// One resolvent solve with its weighted norm report.
    Resolvent,
    /// Estimate sweep over a list of s.
    Sweep,
    /// Time evolution by Laplace inversion and/or implicit Euler.
    Evolve,
    /// The acceptance suite.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Corners => "corners",
            Self::Mesh => "mesh",
            Self::Resolvent => "resolvent",
            Self::Sweep => "sweep",
            Self::Evolve => "evolve",
            Self::Verify => "verify",
        }
    }

    fn execute(self, setup: &Setup) -> polystokes::Result<Outcome> {
        match self {
            Self::Corners => run::corners(setup),
            Self::Mesh => run::mesh(setup),
            Self::Resolvent => run::resolvent(setup),
            Self::Sweep => run::sweep(setup),
            Self::Evolve => run::evolve(setup),
            Self::Verify => run::verify(setup),
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Ok(true) when every assertion held.
fn main_inner(cli: Cli) -> anyhow::Result<bool> {
    let started = chrono::Utc::now();
    let clock = Instant::now();
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")?;
    }
    let Some(config_path) = cli.config.as_deref() else { bail!("--config <path> is required") };
    let mut config = RunConfig::read(config_path)?;
    let out_dir = match &cli.out {
        Some(d) => d.clone(),
        None => config_path.parent().unwrap_or(Path::new(".")).join(&config.output),
    };
    config.output = out_dir.display().to_string();
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let setup = Setup::new(config, base)?;

    let mut outcome = cli.command.execute(&setup)?;
    if cli.seedless {
        let again = cli.command.execute(&setup)?;
        let names = |o: &Outcome| o.artifacts.iter().map(|a| a.0.clone()).collect::<Vec<_>>();
        if names(&again) != names(&outcome) {
            outcome.failures.push("repeated run produced a different set of outputs".into());
        }
        for ((name, a), (_, b)) in outcome.artifacts.iter().zip(&again.artifacts) {
            if a != b {
                outcome.failures.push(format!("{name} differs between two identical runs"));
            }
        }
    }

    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_file(&out_dir, "resolved_config.toml", setup.config.to_toml()?.as_bytes())?;
    for (name, contents) in &outcome.artifacts {
        write_file(&out_dir, name, contents)?;
    }
    let meta = json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "started": started.to_rfc3339(),
        "runtime_s": clock.elapsed().as_secs_f64(),
        "workers": rayon::current_num_threads(),
        "seedless": cli.seedless,
        "details": outcome.metadata,
    });
    write_file(&out_dir, "metadata.json", format!("{}\n", serde_json::to_string_pretty(&meta)?).as_bytes())?;

    for l in &outcome.lines {
        println!("{l}");
    }
    for f in &outcome.failures {
        eprintln!("assertion failed: {f}");
    }
    Ok(outcome.failures.is_empty())
}

fn main() -> ExitCode {
    // usage errors are errors (1); 2 is reserved for failed assertions
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match main_inner(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
