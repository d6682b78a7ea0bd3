use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tokio::net::TcpListener;

use speared_core::dsl::{parse_program, serialize_program, validate_program};
use speared_core::sim::{
    load_scene, run_program, RunOptions, RunStatus, Scene, SimEvent, Simulator,
};
use speared_core::vendor::{parse_vendor, translate_to_vendor, DOBOT_SCRIPT, GCODE_LIKE};
use speared_core::{ArmProfile, Program};
use speared_service::{serve, Hub, ServerConfig, Stepping, DEFAULT_PORT, PORT_ENV};

/// Exit code for unreadable or unparsable inputs.
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "speared",
    version,
    about = "Headless robot-arm programming workbench"
)]
struct Cli {
    /// Arm profile JSON (defaults to the built-in desktop arm).
    #[arg(long, global = true)]
    profile: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve the message protocol over TCP.
    Serve(ServeArgs),
    /// Execute a program headlessly and emit an execution report.
    Run(RunArgs),
    /// Print static diagnostics for a program.
    Validate(ValidateArgs),
    /// Convert a program to or from a vendor dialect.
    Translate(TranslateArgs),
}

#[derive(Args)]
struct ServeArgs {
    /// Scene JSON; an empty scene when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT,
          value_parser = clap::value_parser!(u16).range(1..))]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Step the simulator to rest after every call with this dt (seconds)
    /// instead of running in real time.
    #[arg(long, value_name = "DT")]
    lockstep: Option<f64>,
}

#[derive(Args)]
struct ProgramInput {
    /// Program file: `.rbt` DSL text, `.json` interchange, `.dobot` or `.gco` vendor text.
    #[arg(long)]
    program: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    input: ProgramInput,
    /// Dialect of the program file when it is vendor text.
    #[arg(long)]
    dialect: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Fixed step in seconds.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Write the report JSON to this path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the report JSON to stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: ProgramInput,
    /// Dialect of the program file when it is vendor text.
    #[arg(long)]
    dialect: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TranslateArgs {
    #[command(flatten)]
    input: ProgramInput,
    /// Output dialect; omit to convert vendor text back to DSL.
    #[arg(long)]
    dialect: Option<String>,
    #[arg(long)]
    json: bool,
}

/// Failure that maps to a specific exit code.
struct Exit(u8, String);

fn input_error(e: impl std::fmt::Display) -> Exit {
    Exit(EXIT_INPUT, e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let profile = match load_profile(cli.profile.as_deref()) {
        Ok(p) => p,
        Err(Exit(code, msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Cmd::Serve(args) => cmd_serve(args, profile),
        Cmd::Run(args) => cmd_run(args, &profile),
        Cmd::Validate(args) => cmd_validate(args, &profile),
        Cmd::Translate(args) => cmd_translate(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn read(path: &Path) -> Result<String, Exit> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_profile(path: Option<&Path>) -> Result<ArmProfile, Exit> {
    match path {
        None => Ok(ArmProfile::default()),
        Some(p) => ArmProfile::from_json(&read(p)?)
            .map_err(|e| input_error(format!("{}: {e}", p.display()))),
    }
}

fn load_scene_file(path: &Path) -> Result<Scene, Exit> {
    load_scene(&read(path)?).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

/// Vendor dialect implied by a file extension.
fn dialect_of(path: &Path) -> Option<&'static str> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("dobot") => Some(DOBOT_SCRIPT),
        Some("gco") | Some("gcode") => Some(GCODE_LIKE),
        _ => None,
    }
}

/// Loads a program, returning it with the vendor dialect it was written in.
fn load_program(path: &Path, dialect: Option<&str>) -> Result<(Program, Option<String>), Exit> {
    let text = read(path)?;
    let at = |e: &dyn std::fmt::Display| input_error(format!("{}: {e}", path.display()));
    if let Some(d) = dialect.or(dialect_of(path)) {
        let program = parse_vendor(&text, d).map_err(|e| at(&e))?;
        return Ok((program, Some(d.to_string())));
    }
    let program = if path.extension().is_some_and(|e| e == "json") {
        Program::from_json(&text).map_err(|e| at(&e))?
    } else {
        parse_program(&text).map_err(|e| at(&e))?
    };
    Ok((program, None))
}

fn cmd_serve(args: ServeArgs, profile: ArmProfile) -> Result<u8, Exit> {
    let scene = match &args.scene {
        Some(p) => load_scene_file(p)?,
        None => Scene::default(),
    };
    let stepping = match args.lockstep {
        Some(dt) if dt.is_finite() && dt > 0.0 => Stepping::Lockstep { dt },
        Some(dt) => return Err(input_error(format!("invalid lockstep dt {dt}"))),
        None => Stepping::Realtime,
    };
    let hub = Hub::new(Simulator::new(profile, scene), stepping);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Exit(1, e.to_string()))?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = TcpListener::bind(&addr)
            .await
            .map_err(|e| Exit(1, format!("cannot bind {addr}: {e}")))?;
        log::info!(
            "listening on {}",
            listener.local_addr().map_err(|e| Exit(1, e.to_string()))?
        );
        tokio::select! {
            served = serve(listener, hub, ServerConfig::default()) => {
                served.map_err(|e| Exit(1, e.to_string()))?;
            }
            _ = tokio::signal::ctrl_c() => log::info!("shutting down"),
        }
        Ok(0)
    })
}

fn cmd_run(args: RunArgs, profile: &ArmProfile) -> Result<u8, Exit> {
    let scene = load_scene_file(&args.scene)?;
    let (program, _) = load_program(&args.input.program, args.dialect.as_deref())?;
    let options = RunOptions {
        dt: args.dt,
        speed_factor: args.speed,
        ..RunOptions::default()
    };
    let report = run_program(profile, &scene, &program, options).map_err(input_error)?;
    let json = report.to_json_pretty();
    if let Some(path) = &args.report {
        fs::write(path, format!("{json}\n"))
            .map_err(|e| Exit(1, format!("{}: {e}", path.display())))?;
    }
    if args.json {
        println!("{json}");
    } else {
        let status = serde_json::to_value(report.status).expect("status serializes");
        let clock = report
            .completion_clock()
            .unwrap_or(report.final_state.clock);
        println!(
            "{}: {} after {clock:.3} s ({} events)",
            report.program,
            status.as_str().unwrap_or_default(),
            report.events.len()
        );
        for d in &report.diagnostics {
            println!("{d}");
        }
        for e in &report.events {
            if let SimEvent::Collision {
                object_id,
                command_index,
                tip_pose,
            } = &e.event
            {
                println!(
                    "collision with {object_id} during command {command_index} at ({:.3}, {:.3}, {:.3})",
                    tip_pose.x, tip_pose.y, tip_pose.z
                );
            }
        }
    }
    if report.status == RunStatus::ValidationFailed && args.json {
        for d in &report.diagnostics {
            eprintln!("{d}");
        }
    }
    Ok(report.status.exit_code() as u8)
}

fn cmd_validate(args: ValidateArgs, profile: &ArmProfile) -> Result<u8, Exit> {
    let (program, _) = load_program(&args.input.program, args.dialect.as_deref())?;
    let diagnostics = validate_program(&program, profile);
    if args.json {
        println!(
            "{}",
            serde_json::to_string(&diagnostics).expect("diagnostics serialize")
        );
    } else {
        for d in &diagnostics {
            println!("{d}");
        }
    }
    Ok(u8::from(speared_core::dsl::has_errors(&diagnostics)))
}

fn cmd_translate(args: TranslateArgs) -> Result<u8, Exit> {
    let (program, source) = load_program(&args.input.program, None)?;
    let text = match (&args.dialect, &source) {
        (Some(d), _) => translate_to_vendor(&program, d).map_err(input_error)?,
        (None, Some(_)) => serialize_program(&program),
        (None, None) => return Err(input_error("--dialect is required for DSL input")),
    };
    if args.json {
        let out = serde_json::json!({ "dialect": args.dialect, "text": text });
        println!("{out}");
    } else {
        println!("{text}");
    }
    Ok(0)
}
