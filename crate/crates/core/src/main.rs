use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use conetomo::cli::{cmd_check, cmd_demo, cmd_project, cmd_reconstruct, DEMOS};
use conetomo::config::RunConfig;
use conetomo::par;

/// Exit codes: 0 pass, 1 consistency failure, 2 usage or configuration error.
#[derive(Parser)]
#[command(name = "conetomo", version, about = "Conical Radon / Compton range checks and reconstruction")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Multiplies every report threshold.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
    /// Worker threads; 0 or absent uses all cores.
    #[arg(long, global = true, env = "CONETOMO_THREADS")]
    threads: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward model to containers.
    Project,
    /// Range-condition report for the containers in the output directory.
    Check,
    /// Reconstruction from the containers in the output directory.
    Reconstruct,
    /// Scripted end-to-end run.
    Demo {
        /// One of convex-crt, planar-compton, corruption-sweep.
        name: String,
    },
}

fn load(cli: &Cli) -> Result<(RunConfig, PathBuf), String> {
    let path = cli.config.as_ref().ok_or("--config is required for this command")?;
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = RunConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out));
    Ok((cfg, out))
}

fn run(cli: &Cli) -> Result<bool, String> {
    par::init_threads(cli.threads.filter(|&t| t > 0));
    let fail = |e: conetomo::Error| e.to_string();
    match &cli.command {
        Command::Project => {
            let (cfg, out) = load(cli)?;
            for p in cmd_project(&cfg, &out).map_err(fail)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Command::Check => {
            let (cfg, out) = load(cli)?;
            let rep = cmd_check(&cfg, &out, cli.tol_scale).map_err(fail)?;
            print!("{}", rep.table());
            for e in rep.failing() {
                eprintln!("failed: {} (residual {:.3e} > {:.3e})", e.name, e.residual, e.threshold);
            }
            Ok(rep.pass())
        }
        Command::Reconstruct => {
            let (cfg, out) = load(cli)?;
            let m = cmd_reconstruct(&cfg, &out).map_err(fail)?;
            println!("{}", serde_json::to_string_pretty(&m).map_err(|e| e.to_string())?);
            Ok(true)
        }
        Command::Demo { name } => {
            if !DEMOS.contains(&name.as_str()) {
                return Err(format!("unknown demo `{name}`; known: {}", DEMOS.join(", ")));
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join(name));
            let (pass, text) = cmd_demo(name, &out, cli.tol_scale).map_err(fail)?;
            print!("{text}");
            Ok(pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
