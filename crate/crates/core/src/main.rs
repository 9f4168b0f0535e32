use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pdex::datasets::{self, read_dataset, write_dataset, write_samples_csv, GridDataset};
use pdex::experiment::{self, Equation, ExperimentConfig, GeneratorSpec};
use pdex::{verify, Error, Result};

/// Environment variable that fixes the worker thread count.
const THREADS_VAR: &str = "PDEX_THREADS";

#[derive(Parser)]
#[command(name = "pdex", version, about = "Discover PDEs from noisy spatiotemporal samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a benchmark equation and write a dataset file.
    Generate(GenerateArgs),
    /// Add Gaussian noise to a dataset.
    Corrupt(CorruptArgs),
    /// Draw distinct grid samples and write them as `t,x,u` CSV.
    Subsample(SubsampleArgs),
    /// Train both networks, extract the library and rank candidate equations.
    Discover(DiscoverArgs),
    /// Write the plot CSVs of a finished run.
    ExportPlots(ExportArgs),
    /// Run the built-in self-check suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// heat, burgers or kdv.
    equation: String,
    /// Initial condition: sine, gaussian-sine (heat), gaussian (Burgers).
    #[arg(long)]
    ic: Option<String>,
    /// Diffusivity (heat) or viscosity (Burgers).
    #[arg(long, visible_aliases = ["alpha", "nu"])]
    coefficient: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    nt: Option<usize>,
    /// Largest internal time step of the spectral integrator.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Noise std as a fraction of the data std.
    #[arg(long)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SubsampleArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct DiscoverArgs {
    /// Experiment configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration name.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory for run artifacts.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    adam_epochs: Option<usize>,
    #[arg(long)]
    lbfgs_epochs: Option<usize>,
    /// Also write the normalized library matrix as `system.csv`.
    #[arg(long)]
    dump_system: bool,
}

#[derive(Args)]
struct ExportArgs {
    /// Directory of a finished discovery run.
    #[arg(long)]
    run: PathBuf,
    /// Destination (defaults to `<run>/plots`).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run only this suite.
    #[arg(long)]
    suite: Option<u8>,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let spec = GeneratorSpec {
        equation: a.equation.parse::<Equation>()?,
        ic: a.ic,
        coefficient: a.coefficient,
        nx: a.nx,
        nt: a.nt,
        dt: a.dt,
    };
    let ds = spec.generate()?;
    write_dataset(&ds, &a.out)?;
    eprintln!("wrote {} ({} x {})", a.out.display(), ds.t.len(), ds.x.len());
    Ok(())
}

fn corrupt(a: CorruptArgs) -> Result<()> {
    let ds: GridDataset = read_dataset(&a.input)?;
    let noisy = datasets::inject_noise(&ds, a.noise, a.seed)?;
    write_dataset(&noisy, &a.out)
}

fn subsample(a: SubsampleArgs) -> Result<()> {
    let ds = read_dataset(&a.input)?;
    let samples = datasets::subsample(&ds, a.n, a.seed)?;
    write_samples_csv(&samples, &a.out)
}

fn discover(a: DiscoverArgs) -> Result<()> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
    };
    if let Some(out) = a.out {
        cfg.output_dir = Some(out);
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(e) = a.adam_epochs {
        cfg.train.adam_epochs = e;
    }
    if let Some(e) = a.lbfgs_epochs {
        cfg.train.lbfgs_epochs = e;
    }
    cfg.dump_system |= a.dump_system;
    let run = experiment::discover(&cfg)?;
    print!("{}", run.report.to_text());
    Ok(())
}

fn export_plots(a: ExportArgs) -> Result<()> {
    let out = a.out.unwrap_or_else(|| a.run.join("plots"));
    for path in experiment::export_plots(&a.run, &out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

/// Returns whether every selected suite passed.
fn run_verify(a: VerifyArgs) -> Result<bool> {
    let ids: Vec<u8> = match a.suite {
        Some(id) => vec![id],
        None => verify::SUITES.to_vec(),
    };
    let mut all = true;
    for id in ids {
        let r = verify::run_suite(id)?;
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("[{status}] suite {} {}: {} ({:.1}s)", r.id, r.name, r.detail, r.seconds);
        all &= r.passed;
    }
    Ok(all)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Generate(a) => generate(a).map(|()| true),
        Command::Corrupt(a) => corrupt(a).map(|()| true),
        Command::Subsample(a) => subsample(a).map(|()| true),
        Command::Discover(a) => discover(a).map(|()| true),
        Command::ExportPlots(a) => export_plots(a).map(|()| true),
        Command::Verify(a) => run_verify(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
