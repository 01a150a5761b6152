//! `neuroquansa <kind> --config <path> [--seed S] [--jobs K] [--out DIR]`
//!
//! Exit status: 0 on success, 1 on a runtime failure (partial results and the
//! manifest are still written), 2 when the configuration violates the schema.

mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use neuroquansa::config::{BackendKind, ExperimentConfig, ExperimentKind, Violation};

#[derive(Debug, Parser)]
#[command(name = "neuroquansa", version, about = "Spiking-network variational ground states of the transverse-field Ising chain")]
pub struct Cli {
    /// train | sample | calibrate | phase-sweep | size-sweep | resolution | pseudo-update | stability | diag
    pub kind: ExperimentKind,

    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Worker threads for parallel loops.
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Output directory (default `results/<kind>`).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// snn | gibbs | exact
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<BackendKind>,

    /// Chain as `N=8,J=1,h=1` (any subset).
    #[arg(long)]
    pub spec: Option<String>,

    /// Number of spins.
    #[arg(long = "N")]
    pub n_spins: Option<usize>,

    /// Coupling J.
    #[arg(long = "J")]
    pub coupling: Option<f64>,

    /// Transverse field in units of J.
    #[arg(long = "h-over-J", alias = "field")]
    pub field: Option<f64>,

    #[arg(long)]
    pub n_hidden: Option<usize>,

    #[arg(long)]
    pub iterations: Option<usize>,

    /// Samples per iteration (train) or in total (sample).
    #[arg(long)]
    pub samples: Option<usize>,

    /// Initial bias offset Δb in hardware units.
    #[arg(long, allow_hyphen_values = true)]
    pub bias_offset: Option<f64>,

    /// Fields for phase-sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub fields: Option<Vec<f64>>,

    /// Chain lengths for size-sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,

    /// Phase-sweep: exact observables only.
    #[arg(long)]
    pub no_train: bool,

    /// Continue training from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,

    /// Rewrite the checkpoint every this many iterations.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,

    /// Per-run weight and bias drift (abstract units).
    #[arg(long)]
    pub drift_sigma: Option<f64>,

    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    match s {
        "snn" => Ok(BackendKind::Snn),
        "gibbs" => Ok(BackendKind::Gibbs),
        "exact" => Ok(BackendKind::Exact),
        _ => Err(format!("unknown backend `{s}` (snn, gibbs, exact)")),
    }
}

pub enum Failure {
    Schema(Vec<Violation>),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn apply_overrides(cli: &Cli, config: &mut ExperimentConfig) -> Result<(), Vec<Violation>> {
    if let Some(spec) = &cli.spec {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let bad = || vec![Violation::new("--spec", format!("cannot read `{part}`; expected N=..,J=..,h=.."))];
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            match key.trim() {
                "N" => config.system.n_spins = value.trim().parse().map_err(|_| bad())?,
                "J" => config.system.coupling = value.trim().parse().map_err(|_| bad())?,
                "h" => config.system.field = value.trim().parse().map_err(|_| bad())?,
                "Nh" => config.system.n_hidden = Some(value.trim().parse().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
    }
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    if let Some(b) = cli.backend {
        config.backend = b;
    }
    if let Some(n) = cli.n_spins {
        config.system.n_spins = n;
    }
    if let Some(j) = cli.coupling {
        config.system.coupling = j;
    }
    if let Some(h) = cli.field {
        config.system.field = h;
    }
    if let Some(nh) = cli.n_hidden {
        config.system.n_hidden = Some(nh);
    }
    if let Some(it) = cli.iterations {
        config.training.iterations = it;
    }
    if let Some(s) = cli.samples {
        config.training.samples_per_iteration = s;
        config.sample.n_samples = s;
    }
    if let Some(db) = cli.bias_offset {
        config.training.bias_init_offset = db;
    }
    if let Some(f) = &cli.fields {
        config.phase_sweep.fields = f.clone();
    }
    if let Some(s) = &cli.sizes {
        config.size_sweep.sizes = s.clone();
    }
    if cli.no_train {
        config.phase_sweep.train = false;
    }
    if let Some(sigma) = cli.drift_sigma {
        config.hardware.drift_sigma = sigma;
        config.hardware.bias_jitter = sigma;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|v| Failure::Schema(vec![v]))?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(cli, &mut config).map_err(Failure::Schema)?;
    if cli.print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let mut violations = config.validate(cli.kind);
    if cli.checkpoint_every == Some(0) {
        violations.push(Violation::new("--checkpoint-every", "must be positive"));
    }
    if cli.jobs == Some(0) {
        violations.push(Violation::new("--jobs", "must be positive"));
    }
    if !violations.is_empty() {
        return Err(Failure::Schema(violations));
    }
    configure_threads(cli.jobs)?;
    run::run(cli, config)
}

#[cfg(feature = "parallel")]
fn configure_threads(jobs: Option<usize>) -> anyhow::Result<()> {
    if let Some(k) = jobs {
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(jobs: Option<usize>) -> anyhow::Result<()> {
    if jobs.is_some_and(|k| k > 1) {
        log::warn!("built without the `parallel` feature; --jobs is ignored");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Schema(violations)) => {
            for v in &violations {
                eprintln!("config error: {v}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
