use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use landauer_core::expharness::{
    self, fit_reservoir_gap, render_report, run_cnot_sweep, run_partial_swap_sweep,
    ExperimentConfig, ProcessKind, ReportFormat, SweepPoint,
};
use landauer_core::heatstats::{
    char_fn_interferometric, invert_to_distribution, write_distribution_csv, write_trace_csv,
    InterferometerOptions, Mode, TimeGrid,
};
use landauer_core::nmrsim::{self, NoiseSpec};
use landauer_core::qstate::{DensityOperator, QubitRegister};
use landauer_core::thermo::{LandauerProcess, ThermalReservoirSpec};
use landauer_core::SYSTEM;

/// Landauer-erasure experiments on a simulated three-spin NMR register.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the reservoir gap to a (frequency, Γ) table.
    FitGap {
        /// CSV with columns `beta_inv_hz,gamma`; defaults to the built-in CNOT table.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CNOT sweep over reservoir temperatures.
    SweepCnot(SweepArgs),
    /// Partial-swap sweep over angles at one temperature.
    SweepSwap(SweepArgs),
    /// Dump Θ(t) for one configuration as `t,re,im`.
    Trace(PointArgs),
    /// Dump the reconstructed P(Q) for one configuration as `q,p`.
    Distribution(PointArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Enable T2* phase damping.
    #[arg(long)]
    noise: bool,
    /// Molecule parameters for pulse mode and noise.
    #[arg(long)]
    molecule: Option<PathBuf>,
    /// Reservoir gap in rad/s.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Temperatures (βħ)^-1 in Hz, comma separated.
    #[arg(long, value_delimiter = ',')]
    temps: Option<Vec<f64>>,
    /// Partial-swap angles in radians, comma separated.
    #[arg(long, value_delimiter = ',')]
    phis: Option<Vec<f64>>,
    /// Temperature of the partial-swap sweep in Hz.
    #[arg(long)]
    swap_temp: Option<f64>,
    #[arg(long, value_parser = parse_format)]
    format: Option<ReportFormat>,
}

#[derive(Args)]
struct PointArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "cnot", value_parser = parse_process)]
    process: ProcessKind,
    /// Temperature (βħ)^-1 in Hz.
    #[arg(long, default_value_t = 123.0)]
    temp: f64,
    /// Partial-swap angle in radians.
    #[arg(long)]
    phi: Option<f64>,
    /// Samples over one gap period.
    #[arg(long)]
    samples: Option<usize>,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: landauer_core::Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<ReportFormat, String> {
    s.parse().map_err(|e: landauer_core::Error| e.to_string())
}

fn parse_process(s: &str) -> std::result::Result<ProcessKind, String> {
    s.parse().map_err(|e: landauer_core::Error| e.to_string())
}

fn base_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = common.mode {
        cfg.mode = m;
    }
    if common.noise {
        cfg.noise = true;
    }
    if let Some(m) = &common.molecule {
        cfg.molecule = Some(m.clone());
    }
    if let Some(g) = common.gap {
        cfg.gap = Some(g);
    }
    if let Some(o) = &common.out {
        cfg.output = Some(o.clone());
    }
    Ok(cfg)
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fit_gap(table: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let rows = match table {
        None => expharness::table_gamma_rows(),
        Some(p) => {
            let mut r = csv::Reader::from_path(p).with_context(|| format!("reading {}", p.display()))?;
            r.deserialize::<(f64, f64)>()
                .collect::<std::result::Result<Vec<_>, _>>()
                .with_context(|| format!("parsing {}", p.display()))?
        }
    };
    let fit = fit_reservoir_gap(&rows)?;
    eprintln!(
        "gap = {:.6} rad/s ({:.4} Hz), max residual {:.2}%, per-row gaps within {:.2}% of the fit",
        fit.gap,
        fit.gap_hz(),
        100.0 * fit.max_residual(),
        100.0 * fit.max_gap_deviation()
    );
    write_or_print(&(serde_json::to_string_pretty(&fit)? + "\n"), out)?;
    if !fit.is_consistent() {
        bail!("rows {:?} deviate by more than 2% from the fitted gap", fit.flagged);
    }
    Ok(())
}

fn sweep(args: &SweepArgs, kind: ProcessKind) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    cfg.process = kind;
    if let Some(t) = &args.temps {
        cfg.temperatures_hz = t.clone();
        cfg.alphas.clear();
    }
    if let Some(p) = &args.phis {
        cfg.phis = p.clone();
    }
    if let Some(t) = args.swap_temp {
        cfg.swap_beta_inv_hz = t;
    }
    let format = args
        .format
        .or(cfg.format)
        .or_else(|| cfg.output.as_deref().and_then(ReportFormat::from_path))
        .unwrap_or(ReportFormat::Csv);
    let rows = match kind {
        ProcessKind::Cnot => run_cnot_sweep(&cfg)?,
        ProcessKind::PartialSwap => run_partial_swap_sweep(&cfg)?,
    };
    let text = render_report(&rows, format)?;
    write_or_print(&text, cfg.output.as_deref())
}

struct Prepared {
    process: LandauerProcess,
    reservoir: ThermalReservoirSpec,
    grid: TimeGrid,
    opts: InterferometerOptions,
    noise: Option<NoiseSpec>,
}

fn prepare(args: &PointArgs) -> Result<(Prepared, ExperimentConfig)> {
    let cfg = base_config(&args.common)?;
    cfg.validate()?;
    let reservoir = ThermalReservoirSpec::from_beta_inv_hz(cfg.resolved_gap(), args.temp)?;
    let point = match args.process {
        ProcessKind::Cnot => SweepPoint::cnot(reservoir),
        ProcessKind::PartialSwap => {
            let phi = args.phi.context("--phi is required for the partial swap")?;
            SweepPoint::partial_swap(reservoir, phi)
        }
    };
    let rho_s = DensityOperator::maximally_mixed(QubitRegister::single(SYSTEM));
    let process = LandauerProcess::new(reservoir, rho_s, point.ideal_unitary()?)?;
    let mut opts = match cfg.mode {
        Mode::Ideal => InterferometerOptions::ideal(),
        Mode::Pulse => {
            let spec = cfg.molecule_spec()?;
            let gate = point.gate_target(&spec)?;
            InterferometerOptions::pulse(spec, gate)
        }
    };
    let noise = if cfg.noise {
        Some(NoiseSpec::from_molecule(&cfg.molecule_spec()?))
    } else {
        None
    };
    if let Some(n) = &noise {
        opts = opts.with_noise(n.clone());
    }
    let grid = TimeGrid::one_period(reservoir.gap(), args.samples.unwrap_or(cfg.grid_samples))?;
    Ok((
        Prepared {
            process,
            reservoir,
            grid,
            opts,
            noise,
        },
        cfg,
    ))
}

fn require_out(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.output.clone().context("--out is required")
}

fn dump_trace(args: &PointArgs) -> Result<()> {
    let (p, cfg) = prepare(args)?;
    let out = require_out(&cfg)?;
    let trace = char_fn_interferometric(&p.process, p.grid, &p.opts)?;
    let trace = match &p.noise {
        Some(n) => nmrsim::decay_correction(&trace, n)?,
        None => trace,
    };
    write_trace_csv(&trace, &out)?;
    Ok(())
}

fn dump_distribution(args: &PointArgs) -> Result<()> {
    let (p, cfg) = prepare(args)?;
    let out = require_out(&cfg)?;
    let trace = char_fn_interferometric(&p.process, p.grid, &p.opts)?;
    let trace = match &p.noise {
        Some(n) => nmrsim::decay_correction(&trace, n)?,
        None => trace,
    };
    let dist = invert_to_distribution(&trace, &p.reservoir)?;
    if let Some(leak) = dist.leakage() {
        eprintln!("warning: grid leaks spectral weight (estimate {leak:.3e})");
    }
    if dist.unreliable_samples() > 0 {
        eprintln!("warning: {} samples were below the decay floor", dist.unreliable_samples());
    }
    write_distribution_csv(&dist, &out)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::FitGap { table, out } => fit_gap(table.as_deref(), out.as_deref()),
        Command::SweepCnot(a) => sweep(a, ProcessKind::Cnot),
        Command::SweepSwap(a) => sweep(a, ProcessKind::PartialSwap),
        Command::Trace(a) => dump_trace(a),
        Command::Distribution(a) => dump_distribution(a),
    }
}
