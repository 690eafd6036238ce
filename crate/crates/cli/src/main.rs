use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod config;
mod output;
mod scenarios;

use config::{Drive, FloatList, Format, Method, Model, Outcome, SizeList};

#[derive(Parser)]
#[command(name = "qms", version, about = "Quantum metasurface simulator", propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reflection and transmission of a finite array.
    Scatter(ScatterArgs),
    /// Conditional EIT reflection coefficient over parameter grids.
    EitScan(EitScanArgs),
    /// Cat-state fidelity against array size.
    FidelitySize(FidelitySizeArgs),
    /// Cat-state fidelity against the fraction of missing atoms.
    FidelityDefects(FidelityDefectsArgs),
    /// Reflectivity against transverse wavevector for a modulated array.
    ModeSpectrum(ModeSpectrumArgs),
    /// Photonic graph-state generation with the stabilizer simulator.
    Protocol(ProtocolArgs),
}

#[derive(Args, Serialize)]
struct Common {
    /// JSON file with parameters; flags given on the command line win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Data file; `-` or absent writes to standard output.
    #[arg(short, long)]
    output: Option<String>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads; falls back to QMS_THREADS, then to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Manifest path; defaults to the output path with `.manifest.json`.
    #[arg(long)]
    manifest: Option<String>,
    /// Validate and print the resolved configuration without computing.
    #[arg(long)]
    #[serde(skip)]
    dry_run: bool,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ScatterArgs {
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Lattice spacing in λ.
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long, value_enum)]
    drive: Option<Drive>,
    /// Gaussian waist in λ.
    #[arg(long)]
    waist: Option<f64>,
    /// Detunings in γ; the collective resonance when omitted.
    #[arg(long, allow_hyphen_values = true)]
    detuning: Option<FloatList>,
    #[arg(long)]
    defect_fraction: Option<f64>,
    /// Mean photon number |α|² of the probe.
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct EitScanArgs {
    /// Probe detuning δ in γ.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<FloatList>,
    /// Cooperative shift Δ in γ.
    #[arg(long, allow_hyphen_values = true)]
    shift: Option<f64>,
    /// Cooperative decay correction Γ in γ.
    #[arg(long, allow_hyphen_values = true)]
    decay: Option<f64>,
    /// Two-photon detuning δ_r in γ.
    #[arg(long, allow_hyphen_values = true)]
    deltar: Option<FloatList>,
    /// Rydberg dephasing γ_r in γ.
    #[arg(long)]
    gamma_r: Option<f64>,
    /// Control Rabi frequency Ω_p in γ.
    #[arg(long)]
    omega_p: Option<f64>,
    /// Ancilla-induced Rydberg shift V in γ.
    #[arg(long = "V", allow_hyphen_values = true)]
    #[serde(rename = "V")]
    v: Option<FloatList>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct FidelitySizeArgs {
    /// Square array sides in atoms, e.g. 5:23:2.
    #[arg(long)]
    sizes: Option<SizeList>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    waist: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct FidelityDefectsArgs {
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    waist: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    /// Missing-atom fractions, e.g. 0,0.02,0.05,0.1.
    #[arg(long)]
    fractions: Option<FloatList>,
    /// Target standard error of each mean.
    #[arg(long)]
    stderr_tol: Option<f64>,
    #[arg(long)]
    min_real: Option<usize>,
    #[arg(long)]
    max_real: Option<usize>,
    /// Realizations between convergence checks.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ModeSpectrumArgs {
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    spacing: Option<f64>,
    /// Modulation wavevector K_a in k₀ (0 for a uniform array).
    #[arg(long, allow_hyphen_values = true)]
    ka: Option<f64>,
    /// Grid half-width in k₀.
    #[arg(long)]
    kmax: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long, allow_hyphen_values = true)]
    detuning: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ProtocolArgs {
    /// ghz, cluster1d, tree, tree-fig2b, or a full form such as ghz(6).
    #[arg(long)]
    preset: Option<String>,
    /// Photon count for ghz and cluster1d.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    branching: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// JSON step list to run instead of a preset.
    #[arg(long)]
    script: Option<String>,
    /// Forced metasurface measurement outcome.
    #[arg(long, value_enum)]
    outcome: Option<Outcome>,
    /// Check the stabilizers of the result and print a summary.
    #[arg(long)]
    verify: bool,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

/// A failure with its exit code: 2 for invalid input, 3 for numerical or
/// convergence failures, 1 for I/O.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: 2, message: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError { code: 1, message: msg.into() }
    }
}

impl From<qms_core::Error> for CliError {
    fn from(e: qms_core::Error) -> Self {
        use qms_core::Error::*;
        let code = match e {
            InvalidArgument(_) | Validation { .. } => 2,
            Numerical { .. } | Convergence { .. } | Singularity(_) => 3,
        };
        CliError { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("ERR 2: {first}");
            eprintln!("{}", text.lines().skip(1).collect::<Vec<_>>().join("\n").trim());
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERR {}: {}", e.code, e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    use scenarios::Scenario;
    match cmd {
        Command::Scatter(a) => scenarios::execute(Scenario::Scatter, &a.common, &a),
        Command::EitScan(a) => scenarios::execute(Scenario::EitScan, &a.common, &a),
        Command::FidelitySize(a) => scenarios::execute(Scenario::FidelitySize, &a.common, &a),
        Command::FidelityDefects(a) => scenarios::execute(Scenario::FidelityDefects, &a.common, &a),
        Command::ModeSpectrum(a) => scenarios::execute(Scenario::ModeSpectrum, &a.common, &a),
        Command::Protocol(a) => scenarios::execute(Scenario::Protocol, &a.common, &a),
    }
}
