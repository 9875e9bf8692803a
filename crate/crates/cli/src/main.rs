//! Batch front end for the splat renderer. Every subcommand echoes its
//! resolved configuration as one JSON line on stdout before any work, and
//! exit codes follow a fixed contract: 0 success, 1 runtime error, 2 bad
//! usage or malformed input, 3 validation-threshold failure.

mod fit_cmd;
mod mesh_cmd;
mod render_cmd;
mod validate_cmd;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "gsrast",
    version,
    about = "Render, validate, fit and mesh Gaussian-splat scenes"
)]
struct Cli {
    /// Seed for every randomized component (validation sampling, random init).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize color, depth, normal and opacity maps for every camera.
    Render(render_cmd::RenderArgs),
    /// Check geometric and gradient invariants; exits 3 on threshold failure.
    Validate(validate_cmd::ValidateArgs),
    /// Optimize a splat scene against target images.
    Fit(fit_cmd::FitArgs),
    /// Fuse median depth maps into a TSDF and extract a triangle mesh.
    Mesh(mesh_cmd::MeshArgs),
}

/// Global knobs shared by all subcommands.
pub struct Ctx {
    pub seed: u64,
    pub threads: usize,
}

/// Prints the single-line JSON config echo.
fn echo(mut config: serde_json::Value, ctx: &Ctx) {
    let obj = config.as_object_mut().expect("config echo is an object");
    obj.insert("seed".into(), ctx.seed.into());
    obj.insert("threads".into(), ctx.threads.into());
    println!("{config}");
}

fn exit_code_for(e: &gsrast::Error) -> u8 {
    use gsrast::Error as E;
    match e {
        E::Format(_) | E::InvalidArgument(_) | E::Data { .. } | E::InvalidPrimitive(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be ≥ 1");
            return ExitCode::from(2);
        }
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    // Ignore a double-init error so tests can call commands in-process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    let ctx = Ctx { seed: cli.seed, threads };

    let result = match &cli.command {
        Command::Render(args) => render_cmd::run(args, &ctx),
        Command::Validate(args) => validate_cmd::run(args, &ctx),
        Command::Fit(args) => fit_cmd::run(args, &ctx),
        Command::Mesh(args) => mesh_cmd::run(args, &ctx),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
