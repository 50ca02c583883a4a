use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use magedge::config::{Command, RunConfig};
use magedge::io::write_versioned_json;
use serde::Serialize;

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "magedge",
    version,
    about = "Spectral edges of lattice operators under magnetic fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Eigensolver seed; overrides `solver.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Fluxes, phases and cocycle defects on configured triangles.
    Flux,
    /// Full spectra over the eps grid, plus gap tables.
    Butterfly,
    /// Edge sweeps over the eps grid.
    Sweep,
    /// Power and power-log fits of edge shifts.
    Fit,
    /// Edge sweeps checked against the configured bound.
    Verify,
    /// Mollifier and regularized-kernel checks.
    Harness,
}

impl Cmd {
    fn command(self) -> Command {
        match self {
            Cmd::Flux => Command::Flux,
            Cmd::Butterfly => Command::Butterfly,
            Cmd::Sweep => Command::Sweep,
            Cmd::Fit => Command::Fit,
            Cmd::Verify => Command::Verify,
            Cmd::Harness => Command::Harness,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Cmd::Flux => "flux",
            Cmd::Butterfly => "butterfly",
            Cmd::Sweep => "sweep",
            Cmd::Fit => "fit",
            Cmd::Verify => "verify",
            Cmd::Harness => "harness",
        }
    }
}

const EXIT_USAGE: u8 = 1;
const EXIT_CERTIFICATE: u8 = 2;

pub struct Ctx {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub out: PathBuf,
    pub quiet: bool,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

impl Ctx {
    pub fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    pub fn timed<T>(&mut self, name: impl Into<String>, f: impl FnOnce(&Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.stages.push(Stage {
            name: name.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub struct Outcome {
    pub passed: bool,
    pub outputs: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_path: String,
    config: &'a RunConfig,
    versions: Versions,
    workers: usize,
    dense_cap: usize,
    outputs: &'a [String],
    passed: bool,
    timings: Timings<'a>,
}

#[derive(Serialize)]
struct Versions {
    magedge: &'static str,
    schema: u32,
}

#[derive(Serialize)]
struct Timings<'a> {
    total_seconds: f64,
    stages: &'a [Stage],
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let started = Instant::now();

    let Some(config_path) = cli.config.clone() else {
        return usage_error("--config is required");
    };
    let text = match std::fs::read_to_string(&config_path) {
        Ok(t) => t,
        Err(e) => return usage_error(format!("cannot read {}: {e}", config_path.display())),
    };
    let mut config = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => return usage_error(format!("invalid config {}: {e}", config_path.display())),
    };
    if let Some(seed) = cli.seed {
        config.solver.seed = seed;
    }
    if let Ok(cap) = std::env::var("MAGEDGE_DENSE_CAP") {
        match cap.trim().parse::<usize>() {
            Ok(c) => config.solver.dense_cap = c,
            Err(_) => {
                return usage_error(format!(
                    "MAGEDGE_DENSE_CAP must be a non-negative integer, got {cap:?}"
                ))
            }
        }
    }
    if let Err(e) = config.validate(cli.command.command()) {
        return usage_error(format!("invalid config {}: {e}", config_path.display()));
    }
    let base_dir = config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let out = match (&cli.out, &config.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_absolute() => o.clone(),
        (None, Some(o)) => base_dir.join(o),
        (None, None) => return usage_error("no output directory: pass --out or set output_dir"),
    };
    if let Err(e) = std::fs::create_dir_all(&out) {
        return usage_error(format!("cannot create {}: {e}", out.display()));
    }
    let workers = match cli.workers {
        Some(0) => return usage_error("--workers must be positive"),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => return usage_error(format!("cannot start worker pool: {e}")),
    };

    let mut ctx = Ctx {
        config,
        base_dir,
        out,
        quiet: cli.quiet,
        stages: Vec::new(),
    };
    let result = pool.install(|| match cli.command {
        Cmd::Flux => commands::flux(&mut ctx),
        Cmd::Butterfly => commands::butterfly(&mut ctx),
        Cmd::Sweep => commands::sweep(&mut ctx),
        Cmd::Fit => commands::fit(&mut ctx),
        Cmd::Verify => commands::verify(&mut ctx),
        Cmd::Harness => commands::harness(&mut ctx),
    });
    let (passed, outputs, failure) = match result {
        Ok(o) => (o.passed, o.outputs, None),
        Err(e) => (false, Vec::new(), Some(e)),
    };

    let manifest = Manifest {
        command: cli.command.name(),
        config_path: config_path.display().to_string(),
        config: &ctx.config,
        versions: Versions {
            magedge: env!("CARGO_PKG_VERSION"),
            schema: magedge::SCHEMA_VERSION,
        },
        workers,
        dense_cap: ctx.config.solver.dense_cap,
        outputs: &outputs,
        passed,
        timings: Timings {
            total_seconds: started.elapsed().as_secs_f64(),
            stages: &ctx.stages,
        },
    };
    if let Err(e) = write_versioned_json(&ctx.path("manifest.json"), &manifest) {
        return usage_error(format!("cannot write manifest: {e}"));
    }

    if let Some(e) = failure {
        return usage_error(e);
    }
    if passed {
        ctx.log(format!("{}: all checks passed", cli.command.name()));
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "{}: certificate failure, see {}",
            cli.command.name(),
            ctx.out.display()
        );
        ExitCode::from(EXIT_CERTIFICATE)
    }
}
