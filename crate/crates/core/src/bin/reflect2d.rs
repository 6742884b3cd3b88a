use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reflect2d::config::{ConfigFile, ExperimentKind};
use reflect2d::experiments::{emit_plotdata, run_config, ExperimentConfig, FormChoice, Overrides};

#[derive(Parser)]
#[command(name = "reflect2d", version, about = "Method of reflections for 2D Laplace problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Direct solve of the configured problem; field values on the probe cloud.
    Solve(RunArgs),
    /// Reflection forms on the configured problem against the direct solution.
    Reflect(RunArgs),
    /// Error curves for three disks on a triangle, one CSV per side length.
    TriangleConvergence(RunArgs),
    /// Disk + C-shape configuration on which no form converges.
    DivergenceCase(RunArgs),
    /// Contraction factors versus object distance, exterior Neumann problem.
    DistanceSweep(RunArgs),
    /// Alternating and averaged projections on random subspaces.
    ProjectionDemo(RunArgs),
    /// Gnuplot data and script for a CSV written by another command.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    form: Option<FormChoice>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Treat non-convergence as success and convergence as failure.
    #[arg(long)]
    expect_divergence: bool,
}

fn run(kind: ExperimentKind, args: RunArgs) -> reflect2d::Result<i32> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let overrides = Overrides {
        max_cycles: args.cycles,
        tol: args.tol,
        seed: args.seed,
        form: args.form,
        expect_divergence: args.expect_divergence,
    };
    let cfg = ExperimentConfig::new(Some(kind), file, overrides)?;
    let out = run_config(&cfg, &args.out)?;
    for l in &out.lines {
        println!("{l}");
    }
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(out.exit_code(args.expect_divergence))
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => run(ExperimentKind::Solve, a),
        Command::Reflect(a) => run(ExperimentKind::Reflect, a),
        Command::TriangleConvergence(a) => run(ExperimentKind::TriangleConvergence, a),
        Command::DivergenceCase(a) => run(ExperimentKind::DivergenceCase, a),
        Command::DistanceSweep(a) => run(ExperimentKind::DistanceSweep, a),
        Command::ProjectionDemo(a) => run(ExperimentKind::ProjectionDemo, a),
        Command::Plot { csv, out } => emit_plotdata(&csv, out.as_deref()).map(|(dat, gp, plot)| {
            if let Some(s) = plot.slopes {
                println!("log-log slopes (seq, par, avg): {:.4} {:.4} {:.4}", s[0], s[1], s[2]);
            }
            println!("wrote {}\nwrote {}", dat.display(), gp.display());
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
