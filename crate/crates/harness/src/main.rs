use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swarmplay::digest::canonical_json;
use swarmplay::trace::{parse_trace, validate_trace, ReplayMode};
use swarmplay::world::{generate_world, load_world, save_world, GenerationError, ProcgenParams};
use swarmplay_harness::{
    emit_tables, gateway_for, replay, run_experiment, snapshot, HarnessError, RunManifest,
    TableFormat,
};

#[derive(Parser)]
#[command(name = "swarmplay", version, about = "Run and report swarm game-play experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every condition in a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a grid world.
    GenWorld {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        #[arg(long, default_value_t = 0.25)]
        wall_density: f64,
        #[arg(long, default_value_t = 1)]
        keys: u32,
        #[arg(long, default_value_t = 4)]
        min_goal_distance: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a trace against a world and report divergences.
    ValidateTrace {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        world: PathBuf,
    },
    /// Rebuild the report from a run log.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Print the report tables for a run log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "table")]
        format: TableFormat,
    },
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run { manifest, out } => {
            let m = RunManifest::load(&manifest)?;
            let base = manifest
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default();
            std::fs::create_dir_all(&out)
                .map_err(|e| HarnessError::Runtime(format!("{}: {e}", out.display())))?;
            let gateway = gateway_for(&m, &base)?;
            write(
                &out.join("manifest.json"),
                &canonical_json(&snapshot(&m)).expect("manifest serializes"),
            )?;
            let (_, report) = run_experiment(&m, &base, &out.join("run_log.jsonl"), gateway.as_ref())?;
            write(&out.join("report.json"), &report.to_canonical())?;
            let tables = emit_tables(&report, TableFormat::Table);
            write(&out.join("tables.txt"), &tables)?;
            print!("{tables}");
            Ok(())
        }
        Command::GenWorld {
            seed,
            width,
            height,
            wall_density,
            keys,
            min_goal_distance,
            out,
        } => {
            let params = ProcgenParams {
                seed,
                grid_width: width,
                grid_height: height,
                wall_density,
                n_keys: keys,
                min_goal_distance,
            };
            let spec = generate_world(&params).map_err(|e| match e {
                GenerationError::InvalidParams(m) => HarnessError::Config(m),
                other => HarnessError::Runtime(other.to_string()),
            })?;
            write(&out, &save_world(&spec))?;
            println!("{}", spec.world_id);
            Ok(())
        }
        Command::ValidateTrace { trace, world } => {
            let spec = load_world(&read(&world)?)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", world.display())))?;
            let t = parse_trace(&read(&trace)?)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", trace.display())))?;
            let report = validate_trace(&t, &spec, ReplayMode::Lenient)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            print!("{}", canonical_json(&report).expect("report serializes"));
            if report.divergences.is_empty() && report.goal_reached {
                Ok(())
            } else {
                Err(HarnessError::Runtime(format!(
                    "{} divergence(s), goal reached: {}",
                    report.divergences.len(),
                    report.goal_reached
                )))
            }
        }
        Command::Replay { log } => {
            print!("{}", replay(&log)?.to_canonical());
            Ok(())
        }
        Command::Report { log, format } => {
            print!("{}", emit_tables(&replay(&log)?, format));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return ExitCode::from(if is_help { 0 } else { 1 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("swarmplay: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
