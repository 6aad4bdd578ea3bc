//! Temperature and partial-swap sweeps, the reservoir-gap fit, and reports.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gates;
use crate::heatstats::{
    char_fn_interferometric, invert_to_distribution, HeatDistribution, InterferometerOptions, Mode,
    TimeGrid,
};
use crate::nmrsim::{self, GateTarget, MoleculeSpec, NoiseSpec};
use crate::qstate::{partial_trace, DensityOperator, QubitRegister, UnitaryOperator};
use crate::thermo::{
    von_neumann_entropy, LandauerProcess, LandauerReport, ThermalReservoirSpec,
};
use crate::{RESERVOIR, SYSTEM};

/// Tolerance on the identities checked for every emitted row.
pub const ROW_IDENTITY_TOL: f64 = 1e-10;
/// Largest relative Γ residual accepted for a consistent gap fit.
pub const GAP_FIT_TOL: f64 = 0.02;

/// One row of the CNOT temperature sweep measured on the NMR register:
/// `(βħ)^{-1}` in Hz, entropy production, `β⟨Q⟩` and the predicted `Γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub beta_inv_hz: f64,
    pub sigma_exp: f64,
    pub beta_q_exp: f64,
    pub gamma: f64,
}

const fn row(beta_inv_hz: f64, sigma_exp: f64, beta_q_exp: f64, gamma: f64) -> TableRow {
    TableRow {
        beta_inv_hz,
        sigma_exp,
        beta_q_exp,
        gamma,
    }
}

/// Measured CNOT sweep.
pub const CNOT_TABLE: [TableRow; 13] = [
    row(123.0, 3.2, 3.3, 3.3),
    row(185.0, 2.1, 2.1, 2.1),
    row(227.0, 1.64, 1.66, 1.67),
    row(274.0, 1.30, 1.32, 1.32),
    row(324.0, 1.03, 1.04, 1.05),
    row(383.0, 0.80, 0.82, 0.82),
    row(458.0, 0.61, 0.62, 0.63),
    row(550.0, 0.45, 0.45, 0.46),
    row(678.0, 0.31, 0.31, 0.32),
    row(862.0, 0.20, 0.20, 0.20),
    row(1168.0, 0.113, 0.114, 0.114),
    row(1775.0, 0.050, 0.052, 0.051),
    row(3573.0, 0.0128, 0.0171, 0.0126),
];

/// `(f, Γ)` pairs of [`CNOT_TABLE`].
pub fn table_gamma_rows() -> Vec<(f64, f64)> {
    CNOT_TABLE.iter().map(|r| (r.beta_inv_hz, r.gamma)).collect()
}

/// Reservoir gap in rad/s from [`fit_reservoir_gap`] on [`CNOT_TABLE`]
/// (`≈ 2π × 128.2 Hz`). Other molecules need their own value.
pub const DEFAULT_GAP: f64 = 805.556_778_702;

/// Partial-swap angles as printed for the experiment. `3π/2` lies outside
/// `[0, π]` and is most likely meant to be `2π/3`.
pub const PRINTED_PHIS: [f64; 6] = [PI / 6.0, PI / 3.0, PI / 2.0, 3.0 * PI / 2.0, 5.0 * PI / 6.0, PI];

/// Printed angles plus `2π/3`.
pub fn default_phis() -> Vec<f64> {
    let mut v = PRINTED_PHIS.to_vec();
    v.push(2.0 * PI / 3.0);
    v
}

/// Temperature of the partial-swap sweep, in Hz.
pub const DEFAULT_SWAP_BETA_INV_HZ: f64 = 550.0;

/// `β⟨Q⟩ = (x/2) tanh(x/2)` for CNOT with a maximally mixed system.
pub fn gamma_cnot(x: f64) -> f64 {
    if x.is_infinite() {
        return f64::INFINITY;
    }
    0.5 * x * (0.5 * x).tanh()
}

/// `β⟨Q⟩ = sin²(φ/2) (x/2) tanh(x/2)` for the partial swap with `ρ_S = 1/2`.
pub fn gamma_swap(x: f64, phi: f64) -> f64 {
    (0.5 * phi).sin().powi(2) * gamma_cnot(x)
}

/// Solves `(x/2) tanh(x/2) = Γ` for `x ≥ 0`.
pub fn invert_gamma(gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Fit(format!("Γ must be positive, got {gamma}")));
    }
    // g is increasing with g(2Γ + 2) > Γ; safeguarded Newton inside the bracket
    let (mut lo, mut hi) = (0.0f64, 2.0 * gamma + 2.0);
    let mut x = (4.0 * gamma).sqrt().min(hi);
    for _ in 0..200 {
        let g = gamma_cnot(x) - gamma;
        if g == 0.0 {
            return Ok(x);
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - g / gamma_derivative(x);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-15 * x {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Fit(format!("could not invert Γ = {gamma}")))
}

fn gamma_derivative(x: f64) -> f64 {
    let t = (0.5 * x).tanh();
    0.5 * t + 0.25 * x * (1.0 - t * t)
}

/// Result of fitting `Γ = (x/2) tanh(x/2)`, `x = ΔE/f`, to a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFit {
    /// Fitted gap in rad/s.
    pub gap: f64,
    /// Gap obtained by inverting each row on its own.
    pub per_row_gaps: Vec<f64>,
    /// `Γ_fit/Γ_row − 1` per row.
    pub residuals: Vec<f64>,
    pub rows_used: usize,
    /// Rows whose residual exceeds [`GAP_FIT_TOL`].
    pub flagged: Vec<usize>,
    pub iterations: usize,
}

impl GapFit {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Largest `|gap_i/gap − 1|` over rows.
    pub fn max_gap_deviation(&self) -> f64 {
        self.per_row_gaps
            .iter()
            .fold(0.0, |m, g| m.max((g / self.gap - 1.0).abs()))
    }

    /// `max/min − 1` over the per-row gaps.
    pub fn pairwise_spread(&self) -> f64 {
        let max = self.per_row_gaps.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.per_row_gaps.iter().cloned().fold(f64::MAX, f64::min);
        max / min - 1.0
    }

    pub fn is_consistent(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn gap_hz(&self) -> f64 {
        self.gap / (2.0 * PI)
    }
}

/// Least-squares fit of the gap on relative residuals `g(ΔE/f_i)/Γ_i − 1`.
///
/// A single row is inverted exactly.
pub fn fit_reservoir_gap(rows: &[(f64, f64)]) -> Result<GapFit> {
    if rows.is_empty() {
        return Err(Error::Fit("no rows to fit".into()));
    }
    for &(f, g) in rows {
        if !(f.is_finite() && f > 0.0 && g.is_finite() && g > 0.0) {
            return Err(Error::Fit(format!("row ({f}, {g}) needs positive finite values")));
        }
    }
    let per_row_gaps = rows
        .iter()
        .map(|&(f, g)| Ok(f * invert_gamma(g)?))
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = per_row_gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let mut gap = sorted[sorted.len() / 2];
    let residual = |gap: f64| -> Vec<f64> { rows.iter().map(|&(f, g)| gamma_cnot(gap / f) / g - 1.0).collect() };
    let mut iterations = 0;
    let mut converged = false;
    for k in 0..200 {
        iterations = k + 1;
        let r = residual(gap);
        let jac: Vec<f64> = rows.iter().map(|&(f, g)| gamma_derivative(gap / f) / (f * g)).collect();
        let jtj: f64 = jac.iter().map(|j| j * j).sum();
        let jtr: f64 = jac.iter().zip(&r).map(|(j, r)| j * r).sum();
        if jtj <= 0.0 {
            return Err(Error::Fit("degenerate Jacobian".into()));
        }
        let mut step = -jtr / jtj;
        while gap + step <= 0.0 {
            step *= 0.5;
        }
        gap += step;
        if step.abs() <= 1e-14 * gap {
            converged = true;
            break;
        }
    }
    let residuals = residual(gap);
    if !converged {
        return Err(Error::Fit(format!(
            "no convergence after {iterations} iterations; gap = {gap}, residuals = {residuals:?}"
        )));
    }
    let flagged = residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() > GAP_FIT_TOL)
        .map(|(i, _)| i)
        .collect();
    Ok(GapFit {
        gap,
        per_row_gaps,
        residuals,
        rows_used: rows.len(),
        flagged,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Cnot,
    PartialSwap,
}

impl ProcessKind {
    pub fn name(self) -> &'static str {
        match self {
            ProcessKind::Cnot => "cnot",
            ProcessKind::PartialSwap => "partial_swap",
        }
    }
}

impl std::str::FromStr for ProcessKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "cnot" => Ok(ProcessKind::Cnot),
            "partial_swap" | "swap" => Ok(ProcessKind::PartialSwap),
            other => Err(Error::Config(format!("unknown process `{other}` (cnot|partial_swap)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown format `{other}` (csv|json)"))),
        }
    }
}

impl ReportFormat {
    /// Format implied by a file extension, if any.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(ReportFormat::Csv),
            "json" => Some(ReportFormat::Json),
            _ => None,
        }
    }
}

/// Sweep settings, usually read from a TOML file.
///
/// ```toml
/// process = "cnot"            # or "partial_swap"
/// temperatures_hz = [123.0, 550.0]
/// # alphas = [0.5, 1.0]       # alternative to temperatures_hz, radians
/// phis = [1.5707963267948966]
/// swap_beta_inv_hz = 550.0
/// gap = 805.5                 # rad/s; omit for the built-in fit value
/// mode = "ideal"              # or "pulse"
/// noise = false
/// molecule = "molecule.toml"  # pulse mode; omit for placeholders
/// grid_samples = 8
/// output = "report.csv"
/// format = "csv"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub process: ProcessKind,
    /// `(βħ)^{-1}` in Hz.
    pub temperatures_hz: Vec<f64>,
    /// Reservoir preparation angles; used instead of `temperatures_hz` when nonempty.
    pub alphas: Vec<f64>,
    pub phis: Vec<f64>,
    pub swap_beta_inv_hz: f64,
    pub gap: Option<f64>,
    pub mode: Mode,
    pub noise: bool,
    pub molecule: Option<PathBuf>,
    pub grid_samples: usize,
    pub output: Option<PathBuf>,
    pub format: Option<ReportFormat>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            process: ProcessKind::Cnot,
            temperatures_hz: CNOT_TABLE.iter().map(|r| r.beta_inv_hz).collect(),
            alphas: Vec::new(),
            phis: default_phis(),
            swap_beta_inv_hz: DEFAULT_SWAP_BETA_INV_HZ,
            gap: None,
            mode: Mode::Ideal,
            noise: false,
            molecule: None,
            grid_samples: 8,
            output: None,
            format: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| Error::Format {
            path: path.to_owned(),
            detail: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.molecule, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.temperatures_hz.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::Config(format!("temperature {t} Hz must be positive")));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= PI / 2.0)) {
            return Err(Error::Config(format!("alpha {a} outside (0, pi/2]")));
        }
        if let Some(p) = self.phis.iter().find(|p| !p.is_finite()) {
            return Err(Error::Config(format!("phi {p} is not finite")));
        }
        if !(self.swap_beta_inv_hz > 0.0) {
            return Err(Error::Config("swap_beta_inv_hz must be positive".into()));
        }
        if let Some(g) = self.gap {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Config(format!("gap {g} must be positive")));
            }
        }
        if self.grid_samples < 3 {
            return Err(Error::Config("grid_samples must be at least 3".into()));
        }
        if let Some(m) = &self.molecule {
            if !m.is_file() {
                return Err(Error::Config(format!("molecule file {} is not readable", m.display())));
            }
        }
        Ok(())
    }

    pub fn resolved_gap(&self) -> f64 {
        self.gap.unwrap_or(DEFAULT_GAP)
    }

    pub fn molecule_spec(&self) -> Result<MoleculeSpec> {
        match &self.molecule {
            Some(p) => MoleculeSpec::load(p),
            None => Ok(MoleculeSpec::placeholder()),
        }
    }

    /// Reservoirs of the CNOT sweep, from `alphas` if given.
    pub fn reservoirs(&self) -> Result<Vec<ThermalReservoirSpec>> {
        let gap = self.resolved_gap();
        if self.alphas.is_empty() {
            self.temperatures_hz
                .iter()
                .map(|&f| ThermalReservoirSpec::from_beta_inv_hz(gap, f))
                .collect()
        } else {
            self.alphas
                .iter()
                .map(|&a| ThermalReservoirSpec::from_alpha(gap, a))
                .collect()
        }
    }
}

/// One line of a sweep report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub process: ProcessKind,
    pub beta_inv_hz: f64,
    pub phi: Option<f64>,
    pub delta_s: f64,
    pub beta_q: f64,
    pub sigma: f64,
    pub mutual_info: f64,
    pub rel_entropy: f64,
    pub gamma_theory: f64,
    pub p_neg_heat: f64,
    /// `β⟨Q⟩` from the reconstructed heat distribution.
    pub beta_q_heat: f64,
    pub mode: Mode,
    pub noise: bool,
    pub note: String,
}

pub const REPORT_COLUMNS: [&str; 14] = [
    "process",
    "beta_inv_hz",
    "phi",
    "delta_s",
    "beta_q",
    "sigma",
    "mutual_info",
    "rel_entropy",
    "gamma_theory",
    "p_neg_heat",
    "beta_q_heat",
    "mode",
    "noise",
    "note",
];

impl ReportRow {
    pub fn report(&self) -> LandauerReport {
        LandauerReport {
            delta_s: self.delta_s,
            beta_q: self.beta_q,
            sigma: self.sigma,
            mutual_info: self.mutual_info,
            rel_entropy: self.rel_entropy,
        }
    }

    /// `Σ = β⟨Q⟩ − ΔS`, `Σ = I + D` and `Σ ≥ 0`, all within `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        self.report().check(tol)
    }

    /// Largest difference on the thermodynamic columns.
    pub fn max_thermo_difference(&self, other: &ReportRow) -> f64 {
        let a = self.thermo_columns();
        let b = other.thermo_columns();
        a.iter().zip(&b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    fn thermo_columns(&self) -> [f64; 6] {
        [
            self.delta_s,
            self.beta_q,
            self.sigma,
            self.mutual_info,
            self.rel_entropy,
            self.p_neg_heat,
        ]
    }
}

/// Process, gate target and reservoir for one sweep point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub kind: ProcessKind,
    pub reservoir: ThermalReservoirSpec,
    pub phi: Option<f64>,
}

impl SweepPoint {
    pub fn cnot(reservoir: ThermalReservoirSpec) -> Self {
        Self {
            kind: ProcessKind::Cnot,
            reservoir,
            phi: None,
        }
    }

    pub fn partial_swap(reservoir: ThermalReservoirSpec, phi: f64) -> Self {
        Self {
            kind: ProcessKind::PartialSwap,
            reservoir,
            phi: Some(phi),
        }
    }

    pub fn ideal_unitary(&self) -> Result<UnitaryOperator> {
        match (self.kind, self.phi) {
            (ProcessKind::Cnot, _) => Ok(gates::cnot_process()),
            (ProcessKind::PartialSwap, Some(phi)) => gates::partial_swap_process(phi),
            (ProcessKind::PartialSwap, None) => Err(Error::Config("partial swap needs phi".into())),
        }
    }

    pub fn gate_target(&self, molecule: &MoleculeSpec) -> Result<GateTarget> {
        Ok(match (self.kind, self.phi) {
            (ProcessKind::Cnot, _) => GateTarget::Cnot,
            (ProcessKind::PartialSwap, Some(phi)) => {
                let j = molecule.coupling_hz(RESERVOIR, SYSTEM)?;
                if j == 0.0 {
                    return Err(Error::Compilation("coupling J_RS is zero".into()));
                }
                GateTarget::PartialSwap {
                    tau: gates::PartialSwapAngle::new(phi)?.duration(j),
                }
            }
            (ProcessKind::PartialSwap, None) => return Err(Error::Config("partial swap needs phi".into())),
        })
    }

    pub fn gamma_theory(&self) -> f64 {
        let x = self.reservoir.x();
        match self.phi {
            Some(phi) => gamma_swap(x, phi),
            None => gamma_cnot(x),
        }
    }

    fn note(&self) -> String {
        match self.phi {
            Some(phi) if (phi - 1.5 * PI).abs() < 1e-12 => {
                "phi = 3pi/2 as printed; outside [0, pi], likely meant 2pi/3".into()
            }
            Some(phi) if (phi - 2.0 * PI / 3.0).abs() < 1e-12 => {
                "phi = 2pi/3 added as the probable intended angle".into()
            }
            Some(phi) if !(0.0..=PI).contains(&phi) => "phi outside [0, pi]: extrapolation".into(),
            _ => String::new(),
        }
    }
}

fn with_temperature(beta_inv_hz: f64) -> impl FnOnce(Error) -> Error {
    move |e| Error::Sweep {
        beta_inv_hz,
        source: Box::new(e),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Identity(msg()))
    }
}

/// Runs the full pipeline at one point: state preparation, the process
/// (ideal or compiled), Landauer analysis and heat statistics.
pub fn run_point(config: &ExperimentConfig, point: &SweepPoint) -> Result<ReportRow> {
    let f = point.reservoir.beta_inv_hz();
    run_point_inner(config, point).map_err(with_temperature(f))
}

fn run_point_inner(config: &ExperimentConfig, point: &SweepPoint) -> Result<ReportRow> {
    let rho_s = DensityOperator::maximally_mixed(QubitRegister::single(SYSTEM));
    let ideal = point.ideal_unitary()?;
    let (unitary, opts, molecule) = match config.mode {
        Mode::Ideal => (ideal.clone(), InterferometerOptions::ideal(), None),
        Mode::Pulse => {
            let spec = config.molecule_spec()?;
            let gate = point.gate_target(&spec)?;
            let program = nmrsim::z_compensation(&nmrsim::compile_pulse_program(gate, &spec)?, &spec)?;
            let u = program.unitary(&spec)?.restrict_to(&[RESERVOIR, SYSTEM])?;
            let d = u.process_distance(&ideal)?;
            ensure(d < 1e-6, || format!("compiled {gate:?} is {d:e} from the ideal gate"))?;
            (u, InterferometerOptions::pulse(spec.clone(), gate), Some(spec))
        }
    };
    let noise = if config.noise {
        let spec = match molecule {
            Some(s) => s,
            None => config.molecule_spec()?,
        };
        Some(NoiseSpec::from_molecule(&spec))
    } else {
        None
    };
    let opts = match &noise {
        Some(n) => opts.with_noise(n.clone()),
        None => opts,
    };

    let process = LandauerProcess::new(point.reservoir, rho_s, unitary)?;
    let report = process.analyze()?;
    report.check(ROW_IDENTITY_TOL)?;

    let grid = TimeGrid::one_period(point.reservoir.gap(), config.grid_samples)?;
    let trace = char_fn_interferometric(&process, grid, &opts)?;
    let trace = match &noise {
        Some(n) => nmrsim::decay_correction(&trace, n)?,
        None => trace,
    };
    let dist: HeatDistribution = invert_to_distribution(&trace, &point.reservoir)?;
    let beta = point.reservoir.beta();
    let beta_q_heat = beta * dist.mean();
    if noise.is_none() {
        ensure((beta_q_heat - report.beta_q).abs() < 1e-8, || {
            format!("heat moment {beta_q_heat} disagrees with the trace formula {}", report.beta_q)
        })?;
    }

    let gamma_theory = point.gamma_theory();
    ensure((gamma_theory - report.beta_q).abs() < 1e-8, || {
        format!("beta Q = {} but closed form gives {gamma_theory}", report.beta_q)
    })?;
    match (point.kind, point.phi) {
        (ProcessKind::Cnot, _) => {
            ensure(report.delta_s.abs() < 1e-12, || format!("CNOT changed the system entropy by {}", report.delta_s))?;
        }
        (ProcessKind::PartialSwap, Some(phi)) if (phi - PI).abs() < 1e-15 => {
            let rho_s_after = partial_trace(&process.final_state(), &[SYSTEM])?;
            let rho_r = point.reservoir.state();
            let d = (rho_s_after.matrix() - rho_r.matrix()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
            ensure(d < 1e-12, || format!("full swap left the system {d:e} from the reservoir state"))?;
            let closed = std::f64::consts::LN_2 - von_neumann_entropy(&rho_r);
            ensure((report.delta_s - closed).abs() < 1e-12, || {
                format!("full swap ΔS = {} but log 2 − S(ρ_R) = {closed}", report.delta_s)
            })?;
        }
        _ => {}
    }
    let mut note = point.note();
    if dist.has_warnings() {
        if !note.is_empty() {
            note.push_str("; ");
        }
        let _ = write!(
            note,
            "reconstruction warnings (leakage {:?}, {} unreliable samples)",
            dist.leakage(),
            dist.unreliable_samples()
        );
    }

    Ok(ReportRow {
        process: point.kind,
        beta_inv_hz: point.reservoir.beta_inv_hz(),
        phi: point.phi,
        delta_s: report.delta_s,
        beta_q: report.beta_q,
        sigma: report.sigma,
        mutual_info: report.mutual_info,
        rel_entropy: report.rel_entropy,
        gamma_theory,
        p_neg_heat: dist.p_negative(),
        beta_q_heat,
        mode: config.mode,
        noise: config.noise,
        note,
    })
}

/// CNOT at every configured temperature, points evaluated in parallel.
pub fn run_cnot_sweep(config: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    config.validate()?;
    let points: Vec<SweepPoint> = config.reservoirs()?.into_iter().map(SweepPoint::cnot).collect();
    points.par_iter().map(|p| run_point(config, p)).collect()
}

/// Partial swap at every configured angle, at `swap_beta_inv_hz`.
pub fn run_partial_swap_sweep(config: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    config.validate()?;
    if config.phis.is_empty() {
        return Err(Error::Config("partial-swap sweep needs at least one phi".into()));
    }
    let reservoir = ThermalReservoirSpec::from_beta_inv_hz(config.resolved_gap(), config.swap_beta_inv_hz)?;
    let points: Vec<SweepPoint> = config
        .phis
        .iter()
        .map(|&phi| SweepPoint::partial_swap(reservoir, phi))
        .collect();
    points.par_iter().map(|p| run_point(config, p)).collect()
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    match config.process {
        ProcessKind::Cnot => run_cnot_sweep(config),
        ProcessKind::PartialSwap => run_partial_swap_sweep(config),
    }
}

/// Float at 12 significant digits; non-finite values as `inf`, `-inf`, `NaN`.
fn fmt_float(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.is_finite() {
        let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
        if (1e-5..1e15).contains(&rounded.abs()) {
            format!("{rounded}")
        } else {
            format!("{rounded:e}")
        }
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn parse_float(s: &str) -> std::result::Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"))
}

fn json_float(v: f64) -> Value {
    if v.is_finite() {
        let rounded: f64 = fmt_float(v).parse().expect("own format parses");
        serde_json::Number::from_f64(rounded).map(Value::Number).expect("finite")
    } else {
        Value::String(fmt_float(v))
    }
}

fn json_to_float(v: &Value) -> std::result::Result<f64, String> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| format!("{n} is not a float")),
        Value::String(s) => parse_float(s),
        other => Err(format!("expected a number, found {other}")),
    }
}

impl ReportRow {
    fn fields(&self) -> [String; 14] {
        [
            self.process.name().into(),
            fmt_float(self.beta_inv_hz),
            self.phi.map(fmt_float).unwrap_or_default(),
            fmt_float(self.delta_s),
            fmt_float(self.beta_q),
            fmt_float(self.sigma),
            fmt_float(self.mutual_info),
            fmt_float(self.rel_entropy),
            fmt_float(self.gamma_theory),
            fmt_float(self.p_neg_heat),
            fmt_float(self.beta_q_heat),
            self.mode.to_string(),
            self.noise.to_string(),
            self.note.clone(),
        ]
    }

    fn from_fields(f: &[String]) -> std::result::Result<Self, String> {
        if f.len() != REPORT_COLUMNS.len() {
            return Err(format!("expected {} columns, found {}", REPORT_COLUMNS.len(), f.len()));
        }
        let num = |i: usize| parse_float(&f[i]);
        Ok(Self {
            process: f[0].parse().map_err(|e: Error| e.to_string())?,
            beta_inv_hz: num(1)?,
            phi: if f[2].trim().is_empty() { None } else { Some(num(2)?) },
            delta_s: num(3)?,
            beta_q: num(4)?,
            sigma: num(5)?,
            mutual_info: num(6)?,
            rel_entropy: num(7)?,
            gamma_theory: num(8)?,
            p_neg_heat: num(9)?,
            beta_q_heat: num(10)?,
            mode: f[11].parse().map_err(|e: Error| e.to_string())?,
            noise: f[12].trim().parse().map_err(|e| format!("noise flag: {e}"))?,
            note: f[13].clone(),
        })
    }

    fn to_json(&self) -> Value {
        let mut m = serde_json::Map::new();
        let floats = |v: f64| json_float(v);
        m.insert("process".into(), Value::String(self.process.name().into()));
        m.insert("beta_inv_hz".into(), floats(self.beta_inv_hz));
        m.insert("phi".into(), self.phi.map(floats).unwrap_or(Value::Null));
        m.insert("delta_s".into(), floats(self.delta_s));
        m.insert("beta_q".into(), floats(self.beta_q));
        m.insert("sigma".into(), floats(self.sigma));
        m.insert("mutual_info".into(), floats(self.mutual_info));
        m.insert("rel_entropy".into(), floats(self.rel_entropy));
        m.insert("gamma_theory".into(), floats(self.gamma_theory));
        m.insert("p_neg_heat".into(), floats(self.p_neg_heat));
        m.insert("beta_q_heat".into(), floats(self.beta_q_heat));
        m.insert("mode".into(), Value::String(self.mode.to_string()));
        m.insert("noise".into(), Value::Bool(self.noise));
        m.insert("note".into(), Value::String(self.note.clone()));
        Value::Object(m)
    }

    fn from_json(v: &Value) -> std::result::Result<Self, String> {
        let obj = v.as_object().ok_or("row is not an object")?;
        let get = |k: &str| obj.get(k).ok_or_else(|| format!("missing `{k}`"));
        let num = |k: &str| json_to_float(get(k)?);
        let text = |k: &str| -> std::result::Result<String, String> {
            get(k)?.as_str().map(str::to_owned).ok_or_else(|| format!("`{k}` is not a string"))
        };
        Ok(Self {
            process: text("process")?.parse().map_err(|e: Error| e.to_string())?,
            beta_inv_hz: num("beta_inv_hz")?,
            phi: match get("phi")? {
                Value::Null => None,
                other => Some(json_to_float(other)?),
            },
            delta_s: num("delta_s")?,
            beta_q: num("beta_q")?,
            sigma: num("sigma")?,
            mutual_info: num("mutual_info")?,
            rel_entropy: num("rel_entropy")?,
            gamma_theory: num("gamma_theory")?,
            p_neg_heat: num("p_neg_heat")?,
            beta_q_heat: num("beta_q_heat")?,
            mode: text("mode")?.parse().map_err(|e: Error| e.to_string())?,
            noise: get("noise")?.as_bool().ok_or("`noise` is not a bool")?,
            note: text("note")?,
        })
    }
}

/// Serializes rows; every row is checked against the Landauer identities first.
pub fn render_report(rows: &[ReportRow], format: ReportFormat) -> Result<String> {
    for (i, r) in rows.iter().enumerate() {
        r.check(ROW_IDENTITY_TOL)
            .map_err(|e| Error::Identity(format!("row {i} ({} at {} Hz): {e}", r.process.name(), r.beta_inv_hz)))?;
    }
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(REPORT_COLUMNS).map_err(|e| Error::Validation(e.to_string()))?;
            for r in rows {
                w.write_record(r.fields()).map_err(|e| Error::Validation(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
        }
        ReportFormat::Json => {
            let arr = Value::Array(rows.iter().map(ReportRow::to_json).collect());
            let mut s = serde_json::to_string_pretty(&arr).expect("json values serialize");
            s.push('\n');
            Ok(s)
        }
    }
}

pub fn emit_report(rows: &[ReportRow], format: ReportFormat, path: &Path) -> Result<()> {
    let text = render_report(rows, format)?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn parse_report(text: &str, format: ReportFormat) -> std::result::Result<Vec<ReportRow>, String> {
    match format {
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            let header: Vec<String> = r.headers().map_err(|e| e.to_string())?.iter().map(str::to_owned).collect();
            if header != REPORT_COLUMNS {
                return Err(format!("unexpected header {header:?}"));
            }
            r.records()
                .map(|rec| {
                    let rec = rec.map_err(|e| e.to_string())?;
                    let f: Vec<String> = rec.iter().map(str::to_owned).collect();
                    ReportRow::from_fields(&f)
                })
                .collect()
        }
        ReportFormat::Json => {
            let v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
            v.as_array()
                .ok_or("report is not an array")?
                .iter()
                .map(ReportRow::from_json)
                .collect()
        }
    }
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_report(&text, format).map_err(|detail| Error::Format {
        path: path.to_owned(),
        detail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gamma_inversion() {
        for x in [1e-3, 0.5, 2.0, 6.577, 30.0] {
            assert_abs_diff_eq!(invert_gamma(gamma_cnot(x)).unwrap(), x, epsilon = 1e-12 * x.max(1.0));
        }
        assert!(invert_gamma(0.0).is_err());
    }

    #[test]
    fn default_gap_is_the_table_fit() {
        let fit = fit_reservoir_gap(&table_gamma_rows()).unwrap();
        assert_abs_diff_eq!(fit.gap, DEFAULT_GAP, epsilon = 1e-6);
        assert!(fit.is_consistent(), "{:?}", fit.residuals);
        assert!((fit.gap_hz() - 128.2).abs() < 0.1);
    }

    #[test]
    fn two_row_fit_is_near_129_hz() {
        let fit = fit_reservoir_gap(&[(123.0, 3.3), (1775.0, 0.051)]).unwrap();
        assert!((fit.gap - 810.0).abs() < 10.0, "{}", fit.gap);
        assert!(fit.is_consistent());
        assert!(fit.max_gap_deviation() < 0.02);
    }

    #[test]
    fn single_synthetic_row_is_recovered() {
        let gap = 2.0 * PI * 131.0;
        let f = 400.0;
        let fit = fit_reservoir_gap(&[(f, gamma_cnot(gap / f))]).unwrap();
        assert_abs_diff_eq!(fit.gap, gap, epsilon = 1e-10 * gap);
    }

    #[test]
    fn inconsistent_rows_are_flagged() {
        let rows: Vec<(f64, f64)> = [(200.0, 800.0), (300.0, 800.0), (250.0, 1200.0), (400.0, 1200.0)]
            .iter()
            .map(|&(f, g)| (f, gamma_cnot(g / f)))
            .collect();
        let fit = fit_reservoir_gap(&rows).unwrap();
        assert!(!fit.is_consistent());
        assert!(fit.max_residual() > 0.1);
        assert!(fit_reservoir_gap(&[]).is_err());
    }

    fn quick_config() -> ExperimentConfig {
        ExperimentConfig {
            temperatures_hz: vec![123.0, 550.0, 1775.0],
            phis: vec![0.0, PI / 2.0, PI],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn cnot_rows_reproduce_the_table() {
        let rows = run_cnot_sweep(&quick_config()).unwrap();
        assert_eq!(rows.len(), 3);
        for (r, gamma) in rows.iter().zip([3.3, 0.46, 0.051]) {
            assert!((r.beta_q / gamma - 1.0).abs() < 0.02, "{} vs {gamma}", r.beta_q);
        }
        for r in &rows {
            assert!(r.delta_s.abs() < 1e-12);
            assert!((r.gamma_theory - r.beta_q).abs() < 1e-8);
            assert!(r.p_neg_heat > 0.0);
        }
    }

    #[test]
    fn infinite_temperature_row_is_zero() {
        let cfg = ExperimentConfig {
            temperatures_hz: vec![f64::INFINITY],
            ..ExperimentConfig::default()
        };
        let r = &run_cnot_sweep(&cfg).unwrap()[0];
        for v in [r.delta_s, r.beta_q, r.sigma, r.mutual_info, r.rel_entropy, r.gamma_theory] {
            assert_eq!(v, 0.0);
        }
        assert_abs_diff_eq!(r.p_neg_heat, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn swap_rows() {
        let rows = run_partial_swap_sweep(&quick_config()).unwrap();
        let zero = &rows[0];
        for v in [zero.delta_s, zero.beta_q, zero.sigma, zero.mutual_info, zero.rel_entropy] {
            assert!(v.abs() < 1e-14);
        }
        assert!(rows[1].sigma > 1e-6);
        let x = rows[2].gamma_theory;
        assert!(x > 0.0);
        let empty = ExperimentConfig {
            phis: vec![],
            ..quick_config()
        };
        assert!(run_partial_swap_sweep(&empty).is_err());
    }

    #[test]
    fn printed_angle_is_flagged() {
        let cfg = ExperimentConfig {
            phis: default_phis(),
            ..ExperimentConfig::default()
        };
        let rows = run_partial_swap_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 7);
        let odd = rows.iter().find(|r| (r.phi.unwrap() - 1.5 * PI).abs() < 1e-12).unwrap();
        assert!(odd.note.contains("3pi/2"));
    }

    #[test]
    fn pulse_rows_match_ideal_rows() {
        let ideal = quick_config();
        let pulse = ExperimentConfig {
            mode: Mode::Pulse,
            ..ideal.clone()
        };
        for (a, b) in run_cnot_sweep(&ideal).unwrap().iter().zip(run_cnot_sweep(&pulse).unwrap()) {
            assert!(a.max_thermo_difference(&b) < 1e-5);
        }
        for (a, b) in run_partial_swap_sweep(&ideal).unwrap().iter().zip(run_partial_swap_sweep(&pulse).unwrap()) {
            assert!(a.max_thermo_difference(&b) < 1e-5);
        }
    }

    #[test]
    fn report_round_trip_and_determinism() {
        let rows = run_cnot_sweep(&quick_config()).unwrap();
        let mut swaps = run_partial_swap_sweep(&quick_config()).unwrap();
        let mut all = rows.clone();
        all.append(&mut swaps);
        let dir = tempfile::tempdir().unwrap();
        for fmt in [ReportFormat::Csv, ReportFormat::Json] {
            let p = dir.path().join(format!("r.{fmt:?}"));
            emit_report(&all, fmt, &p).unwrap();
            let back = read_report(&p, fmt).unwrap();
            assert_eq!(back.len(), all.len());
            for (a, b) in all.iter().zip(&back) {
                assert!(a.max_thermo_difference(b) < 1e-10);
                assert_eq!(a.phi.is_some(), b.phi.is_some());
                assert_eq!(a.note, b.note);
            }
            assert_eq!(render_report(&all, fmt).unwrap(), std::fs::read_to_string(&p).unwrap());
        }
        let csv = render_report(&[], ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(emit_report(&all, ReportFormat::Csv, &dir.path().join("missing/r.csv")).is_err());
    }

    #[test]
    fn emission_rejects_broken_rows() {
        let mut r = run_cnot_sweep(&quick_config()).unwrap().remove(0);
        r.sigma += 1e-6;
        assert!(matches!(render_report(&[r], ReportFormat::Csv), Err(Error::Identity(_))));
    }

    #[test]
    fn config_parsing() {
        let cfg = ExperimentConfig::from_toml_str("process = \"partial_swap\"\nphis = [1.0]\nmode = \"pulse\"\n").unwrap();
        assert_eq!(cfg.process, ProcessKind::PartialSwap);
        assert_eq!(cfg.mode, Mode::Pulse);
        assert_eq!(cfg.temperatures_hz.len(), 13);
        assert!(ExperimentConfig::from_toml_str("temperatures_hz = [-1.0]").is_err());
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("molecule = \"/no/such/file.toml\"").is_err());
        let alpha = ExperimentConfig {
            alphas: vec![PI / 2.0],
            ..ExperimentConfig::default()
        };
        assert_eq!(alpha.reservoirs().unwrap()[0].beta(), 0.0);
    }

    #[test]
    fn floats_keep_twelve_digits() {
        assert_eq!(fmt_float(3.281234567891234), "3.28123456789");
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
        assert_eq!(parse_float("inf").unwrap(), f64::INFINITY);
    }
}
