use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use artic::harness::{self, LoadedConfig};
use artic::{ArticError, Result};

#[derive(Parser)]
#[command(name = "artic", version, about = "Articulated object pose estimation from point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the scene and run the configured method(s) over every seed.
    Run(Common),
    /// Compare PMPNBP against dense grid BP on a 1-DOF prismatic chain.
    Validate(Common),
    /// Print the forward-kinematics part poses of the scene's joint configuration.
    Fk(Common),
    /// Write the synthetic observation and its ground-truth poses.
    Render(Common),
    /// Print the ADD between the pose files named in the config's `add` section.
    Add(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set inference.particles=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (a file for `fk`); defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to `ARTIC_THREADS`, then to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("ARTIC_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ArticError::Config(format!("ARTIC_THREADS must be a positive integer, got `{v}`"))),
        _ => Ok(None),
    }
}

fn setup(c: &Common) -> Result<LoadedConfig> {
    if let Some(n) = thread_count(c.threads)? {
        if n == 0 {
            return Err(ArticError::Config("thread count must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ArticError::Config(format!("cannot start thread pool: {e}")))?;
    }
    harness::load_config(&c.config, &c.set)
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(c) => {
            let lc = setup(&c)?;
            let dir = harness::cmd_run(&lc, c.out.as_deref())?;
            println!("results written to {}", dir.display());
        }
        Command::Validate(c) => {
            let lc = setup(&c)?;
            let report = harness::cmd_validate(&lc, c.out.as_deref())?;
            for g in &report.gaps {
                println!(
                    "run {} {}: grid {:.4} pmpnbp {:.4} gap {:.4} (tol {:.4}) {}",
                    g.run_id,
                    g.node,
                    g.grid_mean,
                    g.pmpnbp_mean,
                    g.gap,
                    g.tolerance,
                    if g.within { "ok" } else { "FAIL" }
                );
            }
            if report.boundary_warning() {
                println!("warning: a grid is too coarse or narrow; the unary peaks at a boundary bin");
            }
            println!(
                "{} of {} runs within tolerance (need {}): {}",
                report.passing_runs,
                report.runs,
                report.min_passing,
                if report.passed() { "PASS" } else { "FAIL" }
            );
            if !report.passed() {
                return Ok(harness::EXIT_FAILURE);
            }
        }
        Command::Fk(c) => {
            let lc = setup(&c)?;
            let json = harness::cmd_fk(&lc)?;
            match c.out {
                Some(p) => harness::write_atomic(Path::new(&p), &json)?,
                None => print!("{json}"),
            }
        }
        Command::Render(c) => {
            let lc = setup(&c)?;
            let dir = harness::cmd_render(&lc, c.out.as_deref())?;
            println!("scene written to {}", dir.display());
        }
        Command::Add(c) => {
            let lc = setup(&c)?;
            print!("{}", harness::cmd_add(&lc)?);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            harness::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
