use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use stablekern::estimator::FitOptions;
use stablekern::io::{format_float, read_band_csv, read_dataset_csv, write_matrix_csv};
use stablekern::simulation::{run_monte_carlo, ExperimentConfig};
use stablekern::spectral::{low_frequency_mass, psd, stationary_part, stationary_part_converged, Psd};
use stablekern::{
    build_inverse, build_kernel, fit_hyperparameters, inverse_cholesky, maxent_completion, BandSpec,
    Error, KernelSpec,
};

const THREADS_ENV: &str = "STABLEKERN_THREADS";

#[derive(Parser, Debug)]
#[command(name = "stablekern", version, about = "Kernel-based impulse response estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a kernel matrix, its inverse, its inverse Cholesky factor or its log-determinant.
    Kernel(KernelCmd),
    /// Complete the kernel's bands by maximum entropy and compare with the kernel.
    MaxentVerify(MaxentCmd),
    /// Tune the hyperparameters on a dataset and print the estimate as JSON.
    Fit(FitCmd),
    /// Run a Monte Carlo study.
    Mc(McCmd),
    /// Dump the power spectral density of the kernel's stationary part.
    Psd(PsdCmd),
}

/// Kernel hyperparameters. `--family` accepts a tag (`TCd`) or a label
/// carrying the order (`TC2`).
#[derive(Args, Debug, Clone)]
struct SpecArgs {
    #[arg(long)]
    family: String,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
}

#[derive(Args, Debug)]
struct KernelCmd {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    #[arg(long, group = "what")]
    inverse: bool,
    /// Lower-triangular factor `L` with `L Lᵀ = K⁻¹`.
    #[arg(long, group = "what")]
    cholesky: bool,
    #[arg(long, group = "what")]
    logdet: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MaxentCmd {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    tol: f64,
    /// Band data as `t,s,value` CSV instead of the kernel's own bands.
    #[arg(long)]
    bands: Option<PathBuf>,
    /// Adds `delta` to band entry `(t, s)`, 1-based, e.g. `1,3,0.1`.
    #[arg(long, value_parser = perturbation, allow_hyphen_values = true)]
    perturb: Vec<(usize, usize, f64)>,
}

#[derive(Args, Debug)]
struct FitCmd {
    /// CSV with columns `t,u,y`.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
    /// Impulse response length.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    /// Noise variance, or `estimate` for an FIR least-squares estimate.
    #[arg(long, default_value = "estimate", value_parser = sigma2_arg)]
    sigma2: Sigma2,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
enum Sigma2 {
    Estimate,
    Known(f64),
}

#[derive(Args, Debug)]
struct McCmd {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2), required_unless_present = "config")]
    study: Option<u8>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    runs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated estimator labels, e.g. `TC,DC,TC2,SS`.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// JSON experiment configuration; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads, default all cores. `STABLEKERN_THREADS` takes precedence.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Write measured fit times instead of zeros in the `seconds` column.
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PsdCmd {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 501, value_parser = clap::value_parser!(u64).range(2..))]
    grid: u64,
    /// Scale the spectrum to a maximum of one.
    #[arg(long)]
    normalize: bool,
    /// Kernel dimension used to read off the stationary part; by default it
    /// grows until the tail has decayed.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    dim: Option<u64>,
    /// Sweep the order over these values and print the spectral mass of each.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<u32>>,
    /// Band edge for the mass summary: `[0, c]` for low-pass kernels,
    /// `[π - c, π]` for the alternating ones.
    #[arg(long, default_value_t = PI / 4.0, value_parser = positive)]
    cutoff: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn sigma2_arg(s: &str) -> Result<Sigma2, String> {
    if s == "estimate" {
        Ok(Sigma2::Estimate)
    } else {
        positive(s).map(Sigma2::Known)
    }
}

fn perturbation(s: &str) -> Result<(usize, usize, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [t, s, d] = parts.as_slice() else {
        return Err("expected t,s,delta".into());
    };
    let index = |v: &str| match v.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(i),
        _ => Err(format!("`{v}` is not a 1-based index")),
    };
    let delta = d.parse::<f64>().map_err(|e| format!("`{d}`: {e}"))?;
    Ok((index(t)?, index(s)?, delta))
}

/// Failure of a command, mapped to the process exit status.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

impl SpecArgs {
    fn key_values(&self, fill: bool) -> String {
        let mut s = format!("family={}", self.family);
        let mut push = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                s.push_str(&format!(" {key}={v}"));
            }
        };
        // Fitting only needs the family; the placeholders are never used.
        let or_fill = |v: Option<f64>| v.or(fill.then_some(0.5)).map(|v| v.to_string());
        push("beta", or_fill(self.beta));
        push("alpha", or_fill(self.alpha));
        push("gamma", or_fill(self.gamma));
        push("delta", self.delta.map(|d| d.to_string()));
        s
    }

    fn parse(&self, fill: bool) -> Result<KernelSpec, Failure> {
        let spec: KernelSpec = self.key_values(fill).parse()?;
        spec.validate()?;
        Ok(spec)
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_kernel(cmd: &KernelCmd) -> CmdResult {
    let spec = cmd.spec.parse(false)?;
    let dim = cmd.dim as usize;
    let mut out = output(cmd.out.as_deref())?;
    if cmd.logdet {
        writeln!(out, "{}", format_float(inverse_cholesky(&spec, dim)?.logdet_k()))?;
    } else if cmd.cholesky {
        write_matrix_csv(&mut out, &inverse_cholesky(&spec, dim)?.to_dense())?;
    } else if cmd.inverse {
        write_matrix_csv(&mut out, build_inverse(&spec, dim)?.matrix())?;
    } else {
        write_matrix_csv(&mut out, build_kernel(&spec, dim)?.matrix())?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_maxent(cmd: &MaxentCmd) -> CmdResult {
    let spec = cmd.spec.parse(false)?;
    let dim = cmd.dim as usize;
    let width = spec
        .bandwidth()
        .ok_or_else(|| Failure::Runtime(format!("{} has no banded inverse", spec.label())))?;
    let kernel = build_kernel(&spec, dim)?.into_inner();
    let mut bands = match &cmd.bands {
        Some(path) => read_band_csv(open(path)?, Some(dim))?,
        None => BandSpec::from_matrix(&kernel, width)?,
    };
    for &(t, s, delta) in &cmd.perturb {
        let v = bands
            .get(t - 1, s - 1)
            .ok_or_else(|| Failure::Usage(format!("entry ({t}, {s}) lies outside the band")))?;
        bands.set(t - 1, s - 1, v + delta)?;
    }
    let done = maxent_completion(&bands)?;
    let deviation = (&done.matrix - &kernel).amax();
    println!("max_deviation={}", format_float(deviation));
    println!("entropy={}", format_float(done.entropy));
    if deviation < cmd.tol {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "completion deviates from the kernel by {} (tolerance {})",
            format_float(deviation),
            format_float(cmd.tol)
        )))
    }
}

fn cmd_fit(cmd: &FitCmd) -> CmdResult {
    let template = cmd.spec.parse(true)?;
    let data = read_dataset_csv(open(&cmd.data)?)?;
    let opts = FitOptions {
        sigma2: match cmd.sigma2 {
            Sigma2::Known(s) => Some(s),
            Sigma2::Estimate => None,
        },
        ..Default::default()
    };
    let result = fit_hyperparameters(&data, &template, cmd.dim as usize, &opts)?;
    let mut out = output(cmd.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &result).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn thread_count(flag: Option<u64>) -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(flag.map(|n| n as usize)),
    }
}

fn cmd_mc(cmd: &McCmd) -> CmdResult {
    let mut config = match &cmd.config {
        Some(path) => serde_json::from_reader(open(path)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => ExperimentConfig::new(cmd.study.unwrap_or(1)),
    };
    if let Some(study) = cmd.study {
        config.study = study;
    }
    if let Some(runs) = cmd.runs {
        config.runs = runs as usize;
    }
    if let Some(seed) = cmd.seed {
        config.seed = seed;
    }
    if let Some(labels) = &cmd.estimators {
        config.estimators = labels.iter().map(|l| l.trim().to_string()).collect();
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cmd.threads)? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::Runtime(e.to_string()))?;
    let result = pool.install(|| run_monte_carlo(&config))?;

    for r in result.records.iter().filter(|r| r.error.is_some()) {
        warn!("run {} {}: {}", r.run, r.estimator, r.error.as_deref().unwrap_or_default());
    }
    let mut out = output(cmd.out.as_deref())?;
    result.write_csv(&mut out, cmd.timings)?;
    out.flush()?;
    drop(out);

    // The summary goes to stderr when the table occupies stdout.
    let mut summary: Box<dyn Write> =
        if cmd.out.is_some() { Box::new(io::stdout()) } else { Box::new(io::stderr()) };
    writeln!(summary, "estimator,median_airf,failures")?;
    for (name, median, failures) in result.summary() {
        let median = median.map_or_else(|| "NaN".to_string(), format_float);
        writeln!(summary, "{name},{median},{failures}")?;
    }
    if result.failures() == result.records.len() {
        return Err(Failure::Runtime("every fit failed".into()));
    }
    Ok(())
}

fn spectrum(spec: &KernelSpec, cmd: &PsdCmd) -> Result<Psd, Failure> {
    let w = match cmd.dim {
        Some(dim) => stationary_part(spec, dim as usize)?,
        None => stationary_part_converged(spec)?,
    };
    Ok(psd(&w, cmd.grid as usize, cmd.normalize)?)
}

/// Spectral mass in the band the kernel favors.
fn band_mass(spec: &KernelSpec, p: &Psd, cutoff: f64) -> f64 {
    if spec.is_alternating() {
        1.0 - low_frequency_mass(p, PI - cutoff)
    } else {
        low_frequency_mass(p, cutoff)
    }
}

fn cmd_psd(cmd: &PsdCmd) -> CmdResult {
    let mut args = cmd.spec.clone();
    if let Some(first) = cmd.deltas.as_ref().and_then(|d| d.first()) {
        args.delta = args.delta.or(Some(*first));
    }
    let base = args.parse(false)?;
    let Some(deltas) = &cmd.deltas else {
        let p = spectrum(&base, cmd)?;
        let mut out = output(cmd.out.as_deref())?;
        p.write_csv(&mut out)?;
        out.flush()?;
        return Ok(());
    };
    if !base.family.uses_delta() {
        return Err(Failure::Usage(format!("--deltas needs an order-carrying family, got {}", base.family)));
    }
    let mut out = output(cmd.out.as_deref())?;
    writeln!(out, "delta,theta,phi")?;
    let mut masses = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let spec = KernelSpec { delta, ..base };
        spec.validate()?;
        let p = spectrum(&spec, cmd)?;
        for (t, v) in p.theta.iter().zip(&p.phi) {
            writeln!(out, "{delta},{},{}", format_float(*t), format_float(*v))?;
        }
        masses.push((delta, band_mass(&spec, &p, cmd.cutoff)));
    }
    out.flush()?;
    drop(out);

    let increasing = masses.windows(2).all(|w| w[1].1 > w[0].1);
    let band = if base.is_alternating() { "high" } else { "low" };
    let list: Vec<String> = masses.iter().map(|(d, m)| format!("{d}:{}", format_float(*m))).collect();
    let line = format!("{band}-frequency mass {} increasing={increasing}", list.join(" "));
    if cmd.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let outcome = match &cli.command {
        Command::Kernel(c) => cmd_kernel(c),
        Command::MaxentVerify(c) => cmd_maxent(c),
        Command::Fit(c) => cmd_fit(c),
        Command::Mc(c) => cmd_mc(c),
        Command::Psd(c) => cmd_psd(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
