use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tsd_cli::{cmd_mesh_info, cmd_optimize, cmd_verify, ExitStatus, RunConfig};
use tsd_core::verify::Method;

#[derive(Parser)]
#[command(name = "tsd", version, about = "Topological-shape derivative verification and level-set optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fd,
    Cs,
    Hd,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Fd => Method::Fd,
            MethodArg::Cs => Method::Cs,
            MethodArg::Hd => Method::Hd,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Mesh subdivisions per side.
    #[arg(long)]
    mesh_level: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Compare the analytic derivative with FD, CS and HD differentiation.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Restrict to one or more methods.
        #[arg(long, value_enum)]
        method: Vec<MethodArg>,
    },
    /// Run the level-set optimization.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Print mesh node, element and Dirichlet node counts.
    MeshInfo {
        #[arg(long, default_value_t = 8)]
        mesh_level: usize,
    },
    /// Print the effective configuration as JSON.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<RunConfig, tsd_cli::ConfigError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.output {
        cfg.output = o.clone();
    }
    if let Some(n) = common.mesh_level {
        cfg.mesh_level = Some(n);
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads(n: usize) {
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, methods) = match &cli.command {
        Command::MeshInfo { mesh_level } => {
            if *mesh_level == 0 {
                eprintln!("error: mesh level must be at least 1");
                return ExitCode::from(ExitStatus::InvalidConfig as u8);
            }
            return finish(cmd_mesh_info(*mesh_level));
        }
        Command::Verify { common, method } => (common, method.clone()),
        Command::Optimize { common } | Command::Config { common } => (common, Vec::new()),
    };
    let mut cfg = match load(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(ExitStatus::InvalidConfig as u8);
        }
    };
    if !methods.is_empty() {
        cfg.verification.methods = methods.into_iter().map(Method::from).collect();
    }
    init_threads(cfg.threads);
    match cli.command {
        Command::Verify { .. } => finish(cmd_verify(&cfg)),
        Command::Optimize { .. } => finish(cmd_optimize(&cfg)),
        Command::Config { .. } => {
            println!("{}", cfg.to_json());
            ExitCode::SUCCESS
        }
        Command::MeshInfo { .. } => unreachable!(),
    }
}

fn finish(r: anyhow::Result<ExitStatus>) -> ExitCode {
    match r {
        Ok(s) => ExitCode::from(s as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ExitStatus::SolverFailure as u8)
        }
    }
}
