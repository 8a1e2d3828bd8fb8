//! Command-line experiments: eigenbases, Galerkin trajectories, convergence
//! sweeps and periodic fixed points, each written as CSV with a manifest.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use bidomain_core::Execution;
use clap::{Args, Parser, Subcommand};

use config::{HarnessConfig, ModelKind};
use error::HarnessError;
use output::RunDir;

/// Environment variable holding the default configuration path.
pub const CONFIG_ENV: &str = "BIDOMAIN_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "bidomain", version, about = "Spectral Galerkin experiments for the torso-coupled bidomain model")]
pub struct Cli {
    /// TOML configuration; built-in defaults when neither this nor the
    /// environment variable is set.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenpairs of the discrete bidomain operator.
    Eigen {
        /// Highest mode index.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Mesh-level forms (heart a-form, heart mass, stiffness) as triplets.
    ExportForms,
    /// Galerkin trajectory at one level.
    Ivp {
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        t1: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Cauchy gaps and rate bounds across truncation levels.
    Converge {
        /// Comma-separated levels below the reference.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[arg(long)]
        reference: Option<usize>,
        #[arg(long)]
        t1: Option<f64>,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Picard iteration for the time-periodic solution.
    Periodic {
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Invariance, contraction and premise conditions for the periodic map,
    /// plus a seeded empirical Lipschitz probe.
    CheckConditions {
        #[arg(long)]
        m: Option<usize>,
        #[command(flatten)]
        model: ModelArg,
    },
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Ionic model (overrides `ionic.model`).
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eigen { .. } => "eigen",
            Command::ExportForms => "export-forms",
            Command::Ivp { .. } => "ivp",
            Command::Converge { .. } => "converge",
            Command::Periodic { .. } => "periodic",
            Command::CheckConditions { .. } => "check-conditions",
        }
    }
}

/// Resolve the configuration: file (flag or environment), then command-line
/// overrides, then validation.
pub fn resolve_config(cli: &Cli) -> Result<HarnessConfig, HarnessError> {
    let mut config = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => HarnessConfig::default(),
    };
    if let Some(dir) = &cli.out {
        config.output.dir = dir.clone();
    }
    let set_model = |config: &mut HarnessConfig, arg: &ModelArg| {
        if let Some(kind) = arg.model {
            config.ionic.model = kind;
        }
    };
    match &cli.command {
        Command::Eigen { m } => {
            if let Some(m) = m {
                config.spectral.m = *m;
            }
        }
        Command::ExportForms => {}
        Command::Ivp { m, t1, dt, model } => {
            set_model(&mut config, model);
            if let Some(m) = m {
                config.spectral.m = *m;
            }
            if let Some(t1) = t1 {
                config.time.t1 = *t1;
            }
            if let Some(dt) = dt {
                config.time.dt = *dt;
            }
        }
        Command::Converge {
            levels,
            reference,
            t1,
            model,
        } => {
            set_model(&mut config, model);
            if let Some(levels) = levels {
                config.spectral.levels = levels.clone();
            }
            if let Some(n) = reference {
                config.spectral.reference = *n;
            }
            if let Some(t1) = t1 {
                config.time.t1 = *t1;
                config.time.certified_horizon = false;
            }
        }
        Command::Periodic { m, tol, max_iter, model } => {
            set_model(&mut config, model);
            if let Some(m) = m {
                config.spectral.m = *m;
            }
            if let Some(tol) = tol {
                config.tolerances.fixed_point = *tol;
            }
            if let Some(k) = max_iter {
                config.tolerances.max_iter = *k;
            }
        }
        Command::CheckConditions { m, model } => {
            set_model(&mut config, model);
            if let Some(m) = m {
                config.spectral.m = *m;
            }
        }
    }
    config
        .validate()
        .map_err(|issue| HarnessError::Config(format!("{}.{} {}", issue.section, issue.key, issue.message)))?;
    Ok(config)
}

/// Parse arguments, run the subcommand, write the manifest and return the
/// exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let config = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let mut run = match RunDir::create(&config.output.dir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let result = run::dispatch(&cli.command, &config, exec, &mut run);
    let (code, summary) = match result {
        Ok(outcome) => {
            if let Some(msg) = &outcome.failure {
                eprintln!("error: {msg}");
            }
            (if outcome.failure.is_some() { 1 } else { 0 }, outcome.summary)
        }
        Err(e) => {
            eprintln!("error: {e}");
            (e.exit_code(), serde_json::json!({ "error": e.to_string() }))
        }
    };
    let wall = clock.elapsed().as_secs_f64();
    if let Err(e) = output::write_manifest(&run, cli.command.name(), &config, code, started, wall, &summary) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    code
}
