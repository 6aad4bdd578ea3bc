//! Two-point-measurement heat statistics.
//!
//! The heat is `Q = E_n − E_m` for reservoir energies measured before (`m`)
//! and after (`n`) the process. Its characteristic function is
//! `Θ(t) = Σ P(Q) e^{−iQt}`. It is computed directly, or estimated with the
//! ancilla interferometer, and inverted back to `P(Q)` on a discrete grid.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::build_interferometer;
use crate::nmrsim::{self, GateTarget, MoleculeSpec, NoiseSpec, PulseElement, PulseProgram};
use crate::qstate::{
    embed, eigh, evolve, expectation, tensor_compose, trace, CMatrix, DensityOperator, Observable,
    QubitRegister,
};
use crate::thermo::{LandauerProcess, ThermalReservoirSpec};
use crate::ANCILLA;

/// Probabilities below this are dropped from a distribution.
pub const ATOM_FLOOR: f64 = 1e-14;
/// Reconstructed bins down to this value are treated as round-off and clipped.
pub const CLIP_FLOOR: f64 = -1e-8;
pub const NORMALIZATION_TOL: f64 = 1e-8;
/// Relative detuning from a bin centre above which the grid counts as leaking.
pub const LEAKAGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    ExactTpm,
    FourierReconstructed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatAtom {
    pub q: f64,
    pub p: f64,
}

/// Discrete heat distribution, atoms sorted by `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatDistribution {
    atoms: Vec<HeatAtom>,
    provenance: Provenance,
    /// Estimated spectral leakage when the grid did not match the gap.
    leakage: Option<f64>,
    unreliable_samples: usize,
}

impl HeatDistribution {
    pub fn new(mut atoms: Vec<HeatAtom>, provenance: Provenance) -> Result<Self> {
        for a in &atoms {
            if !(a.q.is_finite() && a.p.is_finite()) {
                return Err(Error::Distribution(format!("non-finite atom {a:?}")));
            }
            if a.p < -1e-10 {
                return Err(Error::Distribution(format!("negative probability {a:?}")));
            }
        }
        atoms.sort_by(|a, b| a.q.total_cmp(&b.q));
        let scale = atoms.iter().fold(1.0f64, |m, a| m.max(a.q.abs()));
        if let Some(w) = atoms.windows(2).find(|w| w[1].q - w[0].q <= 1e-12 * scale) {
            return Err(Error::Distribution(format!(
                "atoms at q = {} and q = {} are not distinct",
                w[0].q, w[1].q
            )));
        }
        let total: f64 = atoms.iter().map(|a| a.p).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Distribution(format!("probabilities sum to {total}")));
        }
        Ok(Self {
            atoms,
            provenance,
            leakage: None,
            unreliable_samples: 0,
        })
    }

    pub fn atoms(&self) -> &[HeatAtom] {
        &self.atoms
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn leakage(&self) -> Option<f64> {
        self.leakage
    }

    pub fn unreliable_samples(&self) -> usize {
        self.unreliable_samples
    }

    /// True when the reconstruction came from a leaking grid or included
    /// unreliable samples.
    pub fn has_warnings(&self) -> bool {
        self.leakage.is_some() || self.unreliable_samples > 0
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.p * a.q).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms.iter().map(|a| a.p * (a.q - m).powi(2)).sum()
    }

    pub fn p_negative(&self) -> f64 {
        let scale = self.atoms.iter().fold(0.0f64, |m, a| m.max(a.q.abs()));
        self.atoms
            .iter()
            .filter(|a| a.q < -1e-12 * scale)
            .map(|a| a.p)
            .sum()
    }

    /// `Σ P(Q) e^{−iQt}`.
    pub fn characteristic(&self, t: f64) -> Complex64 {
        self.atoms
            .iter()
            .map(|a| Complex64::from_polar(a.p, -a.q * t))
            .sum()
    }

    /// Probability at `q`, matched within a relative tolerance.
    pub fn probability_at(&self, q: f64) -> f64 {
        let tol = 1e-9 * q.abs().max(1.0);
        self.atoms
            .iter()
            .filter(|a| (a.q - q).abs() <= tol)
            .map(|a| a.p)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatMoments {
    pub mean: f64,
    pub variance: f64,
    pub p_negative: f64,
}

pub fn heat_moments(dist: &HeatDistribution) -> HeatMoments {
    HeatMoments {
        mean: dist.mean(),
        variance: dist.variance(),
        p_negative: dist.p_negative(),
    }
}

/// `½ Σ |p_a(q) − p_b(q)|`, matching atoms whose `q` agree to 1e-9 relative.
pub fn total_variation(a: &HeatDistribution, b: &HeatDistribution) -> f64 {
    let mut qs: Vec<f64> = a.atoms.iter().chain(&b.atoms).map(|x| x.q).collect();
    qs.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::new();
    for q in qs {
        match merged.last() {
            Some(&last) if (q - last).abs() <= 1e-9 * q.abs().max(1.0) => {}
            _ => merged.push(q),
        }
    }
    0.5 * merged
        .iter()
        .map(|&q| (a.probability_at(q) - b.probability_at(q)).abs())
        .sum::<f64>()
}

/// Uniform sample times `t_k = k Δt`, `k = 0 … N−1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        if n < 3 {
            return Err(Error::Domain(format!("need at least 3 samples, got {n}")));
        }
        Ok(Self { dt, n })
    }

    /// `n` samples spanning exactly one period `2π/gap`.
    pub fn one_period(gap: f64, n: usize) -> Result<Self> {
        if !(gap.is_finite() && gap > 0.0) {
            return Err(Error::Domain(format!("gap must be positive, got {gap}")));
        }
        Self::new(2.0 * PI / (n as f64 * gap), n)
    }

    /// Eight samples over one period of the gap.
    pub fn default_for(gap: f64) -> Result<Self> {
        Self::one_period(gap, 8)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|k| k as f64 * self.dt).collect()
    }

    /// Heat resolution `2π/(NΔt)`.
    pub fn bin_width(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dt)
    }

    /// Bin indices `−⌊N/2⌋ … ⌈N/2⌉−1`.
    pub fn bins(&self) -> std::ops::Range<i64> {
        let n = self.n as i64;
        -(n / 2)..(n - n / 2)
    }

    /// Offset of `gap` from the nearest bin, in bin units, in `[−½, ½]`.
    pub fn detuning(&self, gap: f64) -> f64 {
        let r = gap / self.bin_width();
        r - r.round()
    }

    /// `1 − |sin(πδ) / (N sin(πδ/N))|` for detuning `δ`.
    pub fn leakage(&self, gap: f64) -> f64 {
        let delta = self.detuning(gap);
        if delta.abs() < LEAKAGE_TOL {
            return 0.0;
        }
        let n = self.n as f64;
        1.0 - ((PI * delta).sin() / (n * (PI * delta / n).sin())).abs()
    }

    pub fn is_leakage_free(&self, gap: f64) -> bool {
        self.detuning(gap).abs() < LEAKAGE_TOL
    }
}

/// Samples of `Θ(t)` on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct CharFnTrace {
    grid: TimeGrid,
    values: Vec<Complex64>,
    /// Time the ancilla spent in superposition for each sample, when known.
    acquisition: Option<Vec<f64>>,
    unreliable: Vec<bool>,
}

impl CharFnTrace {
    /// Noiseless trace: `Θ(0) = 1` and `|Θ| ≤ 1` within 1e-10.
    pub fn new(grid: TimeGrid, values: Vec<Complex64>) -> Result<Self> {
        Self::check_len(&grid, values.len())?;
        if (values[0] - 1.0).norm() > 1e-10 {
            return Err(Error::Validation(format!("Θ(0) = {} is not 1", values[0])));
        }
        Self::check_modulus(&values, 1e-10)?;
        let n = values.len();
        Ok(Self {
            grid,
            values,
            acquisition: None,
            unreliable: vec![false; n],
        })
    }

    /// Trace from a lossy acquisition; `Θ(0)` may be below 1.
    pub fn measured(grid: TimeGrid, values: Vec<Complex64>, acquisition: Vec<f64>) -> Result<Self> {
        Self::check_len(&grid, values.len())?;
        Self::check_len(&grid, acquisition.len())?;
        if let Some(t) = acquisition.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::Validation(format!("acquisition duration {t} is invalid")));
        }
        Self::check_modulus(&values, 1e-10)?;
        let n = values.len();
        Ok(Self {
            grid,
            values,
            acquisition: Some(acquisition),
            unreliable: vec![false; n],
        })
    }

    pub(crate) fn corrected(grid: TimeGrid, values: Vec<Complex64>, unreliable: Vec<bool>) -> Result<Self> {
        Self::check_len(&grid, values.len())?;
        let reliable: Vec<Complex64> = values
            .iter()
            .zip(&unreliable)
            .filter(|(_, u)| !**u)
            .map(|(v, _)| *v)
            .collect();
        Self::check_modulus(&reliable, 1e-8)?;
        Ok(Self {
            grid,
            values,
            acquisition: None,
            unreliable,
        })
    }

    fn check_len(grid: &TimeGrid, n: usize) -> Result<()> {
        if n != grid.len() {
            return Err(Error::Shape(format!("{n} samples for a grid of {}", grid.len())));
        }
        Ok(())
    }

    fn check_modulus(values: &[Complex64], tol: f64) -> Result<()> {
        if let Some(v) = values.iter().find(|v| !(v.norm() <= 1.0 + tol)) {
            return Err(Error::Validation(format!("|Θ| = {} exceeds 1", v.norm())));
        }
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn acquisition(&self) -> Option<&[f64]> {
        self.acquisition.as_deref()
    }

    pub fn unreliable(&self) -> &[bool] {
        &self.unreliable
    }

    pub fn max_deviation(&self, other: &CharFnTrace) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::Shape("traces have different lengths".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// Exact TPM distribution of the heat released into the reservoir.
pub fn tpm_distribution(process: &LandauerProcess) -> Result<HeatDistribution> {
    let h = process.hamiltonian();
    let eig = eigh(&h);
    let rho_r = process.rho_r();
    let rs = process.unitary().register().clone();
    let r_reg = h.register().clone();
    // group degenerate levels so each projector spans one eigenspace
    let scale = eig.values.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let mut levels: Vec<(f64, CMatrix)> = Vec::new();
    for (k, &e) in eig.values.iter().enumerate() {
        let v = eig.vector(k);
        let p = &v * v.adjoint();
        match levels.iter_mut().find(|(le, _)| (le - e).abs() <= 1e-12 * scale) {
            Some((_, proj)) => *proj += p,
            None => levels.push((e, p)),
        }
    }
    let u = process.unitary().matrix();
    let mut atoms: Vec<HeatAtom> = Vec::new();
    for (em, pm) in &levels {
        let weighted = DensityOperator::from_evolved(r_reg.clone(), pm * rho_r.matrix() * pm);
        let start = tensor_compose(&[&weighted, process.rho_s()])?;
        let after = u * start.matrix() * u.adjoint();
        for (en, pn) in &levels {
            let pn_full = embed(&r_reg, pn, &rs)?;
            let p = trace(&(pn_full * &after)).re;
            if p < ATOM_FLOOR {
                continue;
            }
            let q = en - em;
            match atoms.iter_mut().find(|a| (a.q - q).abs() <= 1e-12 * scale) {
                Some(a) => a.p += p,
                None => atoms.push(HeatAtom { q, p }),
            }
        }
    }
    HeatDistribution::new(atoms, Provenance::ExactTpm)
}

/// `Θ(t) = tr[U (ρ_R v_t† ⊗ ρ_S) U† (v_t ⊗ 1)]` with `v_t = exp(−iH_R t)`.
pub fn char_fn_value(process: &LandauerProcess, t: f64) -> Result<Complex64> {
    let h = process.hamiltonian();
    let v = h.propagator(t);
    let rs = process.unitary().register();
    let shifted = embed(h.register(), &(process.rho_r().matrix() * v.matrix().adjoint()), rs)?;
    let rho_s = embed(process.rho_s().register(), process.rho_s().matrix(), rs)?;
    let u = process.unitary().matrix();
    let inner = u * (shifted * rho_s) * u.adjoint();
    Ok(trace(&(inner * embed(h.register(), v.matrix(), rs)?)))
}

pub fn char_fn_direct(process: &LandauerProcess, grid: TimeGrid) -> Result<CharFnTrace> {
    let values = grid
        .times()
        .into_iter()
        .map(|t| char_fn_value(process, t))
        .collect::<Result<Vec<_>>>()?;
    CharFnTrace::new(grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ideal,
    Pulse,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ideal => "ideal",
            Mode::Pulse => "pulse",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ideal" => Ok(Mode::Ideal),
            "pulse" => Ok(Mode::Pulse),
            other => Err(Error::Config(format!("unknown mode `{other}` (ideal|pulse)"))),
        }
    }
}

/// How the interferometer is simulated.
#[derive(Debug, Clone)]
pub struct InterferometerOptions {
    pub mode: Mode,
    /// Required in pulse mode.
    pub molecule: Option<MoleculeSpec>,
    /// Pulse-level realization of the process; required in pulse mode.
    pub process_gate: Option<GateTarget>,
    pub noise: Option<NoiseSpec>,
    /// Pseudopure weight of the prepared input; readouts are divided by it.
    pub epsilon: f64,
}

impl Default for InterferometerOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Ideal,
            molecule: None,
            process_gate: None,
            noise: None,
            epsilon: 1.0,
        }
    }
}

impl InterferometerOptions {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn pulse(molecule: MoleculeSpec, process_gate: GateTarget) -> Self {
        Self {
            mode: Mode::Pulse,
            molecule: Some(molecule),
            process_gate: Some(process_gate),
            ..Self::default()
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    fn active_noise(&self) -> Option<&NoiseSpec> {
        self.noise.as_ref().filter(|n| n.is_enabled())
    }
}

fn ancilla_readout(rho: &DensityOperator, epsilon: f64) -> Result<Complex64> {
    let x = expectation(rho, &Observable::pauli_x(ANCILLA))?;
    let y = expectation(rho, &Observable::pauli_y(ANCILLA))?;
    Ok(Complex64::new(x, -y) / epsilon)
}

/// One interferometer run in ideal-gate mode. Returns `(Θ, t_acq)`.
fn ideal_sample(
    process: &LandauerProcess,
    t: f64,
    input_rs: &DensityOperator,
    opts: &InterferometerOptions,
) -> Result<(Complex64, f64)> {
    let circuit = build_interferometer(process.unitary(), &process.hamiltonian(), t)?;
    let mut rho = circuit.input_state(input_rs)?;
    if opts.epsilon < 1.0 {
        rho = nmrsim::pseudopure(&rho, opts.epsilon)?;
    }
    let noise = opts.active_noise();
    for step in circuit.steps() {
        rho = evolve(&rho, &step.gate)?;
        if let Some(n) = noise {
            // the controlled evolutions take time t each; other gates are instantaneous
            if step.name.starts_with("controlled-v") {
                rho = nmrsim::phase_damping_evolution(&rho, t, n)?;
            }
        }
    }
    Ok((ancilla_readout(&rho, opts.epsilon)?, 2.0 * t))
}

fn compensated(gate: GateTarget, spec: &MoleculeSpec) -> Result<PulseProgram> {
    nmrsim::z_compensation(&nmrsim::compile_pulse_program(gate, spec)?, spec)
}

/// One interferometer run as a pulse program. Returns `(Θ, t_acq)`.
fn pulse_sample(
    process: &LandauerProcess,
    t: f64,
    input_rs: &DensityOperator,
    spec: &MoleculeSpec,
    gate: GateTarget,
    opts: &InterferometerOptions,
) -> Result<(Complex64, f64)> {
    let gap = process.reservoir().gap();
    // the ancilla starts in |0⟩, where R_y(π/2) acts like the Hadamard
    let hadamard = PulseProgram::new(
        spec.register().clone(),
        vec![PulseElement::Rotation {
            qubit: ANCILLA.into(),
            axis: nmrsim::Axis::Y,
            angle: std::f64::consts::FRAC_PI_2,
        }],
        None,
    )?;
    let program = hadamard
        .followed_by(&compensated(GateTarget::ControlledV { t, gap }, spec)?)?
        .followed_by(&compensated(gate, spec)?)?
        .followed_by(&compensated(GateTarget::ControlledVDagger { t, gap }, spec)?)?;
    let anc = DensityOperator::basis(QubitRegister::single(ANCILLA), 0)?;
    let mut rho = tensor_compose(&[&anc, input_rs])?;
    if rho.register() != spec.register() {
        return Err(Error::Config(format!(
            "molecule qubits {:?} do not match the interferometer register {:?}",
            spec.register().labels(),
            rho.register().labels()
        )));
    }
    if opts.epsilon < 1.0 {
        rho = nmrsim::pseudopure(&rho, opts.epsilon)?;
    }
    let out = program.apply(&rho, spec, opts.active_noise())?;
    Ok((ancilla_readout(&out, opts.epsilon)?, program.total_duration()))
}

/// `Θ(t_k) = ⟨σ_x⟩_A − i⟨σ_y⟩_A` from the interferometer, one run per sample.
///
/// With noise enabled the result carries acquisition durations and can be
/// passed to [`nmrsim::decay_correction`].
pub fn char_fn_interferometric(
    process: &LandauerProcess,
    grid: TimeGrid,
    opts: &InterferometerOptions,
) -> Result<CharFnTrace> {
    if !(opts.epsilon > 0.0 && opts.epsilon <= 1.0) {
        return Err(Error::Config(format!("pseudopure weight {} outside (0, 1]", opts.epsilon)));
    }
    let input_rs = process.initial_state();
    let pulse = match opts.mode {
        Mode::Ideal => None,
        Mode::Pulse => {
            let spec = opts
                .molecule
                .as_ref()
                .ok_or_else(|| Error::Config("pulse mode needs a molecule spec".into()))?;
            let gate = opts
                .process_gate
                .ok_or_else(|| Error::Config("pulse mode needs the process as a gate target".into()))?;
            let ideal = gate.ideal(spec)?;
            let embedded = process.unitary().embed_in(spec.register())?;
            let d = ideal.process_distance(&embedded)?;
            if d > 1e-9 {
                return Err(Error::Config(format!(
                    "gate target {gate:?} does not realize the process unitary (distance {d:e})"
                )));
            }
            Some((spec, gate))
        }
    };
    let samples: Vec<(Complex64, f64)> = grid
        .times()
        .into_par_iter()
        .map(|t| match pulse {
            None => ideal_sample(process, t, &input_rs, opts),
            Some((spec, gate)) => pulse_sample(process, t, &input_rs, spec, gate, opts),
        })
        .collect::<Result<_>>()?;
    let (values, acq): (Vec<Complex64>, Vec<f64>) = samples.into_iter().unzip();
    if opts.active_noise().is_some() {
        CharFnTrace::measured(grid, values, acq)
    } else {
        CharFnTrace::new(grid, values)
    }
}

/// Discrete inverse transform `P(Q_b) = (1/N) Σ_k Θ_k e^{+iQ_b t_k}` with
/// `Q_b = b·2π/(NΔt)`.
pub fn invert_to_distribution(
    trace: &CharFnTrace,
    reservoir: &ThermalReservoirSpec,
) -> Result<HeatDistribution> {
    let grid = trace.grid();
    let leakage = (!grid.is_leakage_free(reservoir.gap())).then(|| grid.leakage(reservoir.gap()));
    let unreliable = trace.unreliable().iter().filter(|u| **u).count();
    let flagged = leakage.is_some() || unreliable > 0;
    let n = grid.len() as f64;
    let times = grid.times();
    let mut atoms = Vec::new();
    for b in grid.bins() {
        let q = b as f64 * grid.bin_width();
        let p: Complex64 = trace
            .values()
            .iter()
            .zip(&times)
            .map(|(v, &t)| v * Complex64::from_polar(1.0, q * t))
            .sum::<Complex64>()
            / n;
        if p.im.abs() > 1e-8 && !flagged {
            return Err(Error::Distribution(format!(
                "bin Q = {q} has imaginary weight {:e}; the trace is not a real spectrum",
                p.im
            )));
        }
        let mut w = p.re;
        if w < 0.0 {
            if w < CLIP_FLOOR && !flagged {
                return Err(Error::Distribution(format!(
                    "bin Q = {q} reconstructed with probability {w:e}; bins: {:?}",
                    trace.values()
                )));
            }
            w = 0.0;
        }
        if w >= ATOM_FLOOR {
            atoms.push(HeatAtom { q, p: w });
        }
    }
    let total: f64 = atoms.iter().map(|a| a.p).sum();
    if total <= 0.0 {
        return Err(Error::Distribution("reconstruction has no weight".into()));
    }
    for a in &mut atoms {
        a.p /= total;
    }
    let mut dist = HeatDistribution::new(atoms, Provenance::FourierReconstructed)?;
    dist.leakage = leakage;
    dist.unreliable_samples = unreliable;
    Ok(dist)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format {
        path: path.to_owned(),
        detail: e.to_string(),
    }
}

#[derive(Serialize, Deserialize)]
struct TraceRecord {
    t: f64,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct AtomRecord {
    q: f64,
    p: f64,
}

pub fn write_trace_csv(trace: &CharFnTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for (t, v) in trace.times().into_iter().zip(trace.values()) {
        w.serialize(TraceRecord { t, re: v.re, im: v.im }).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a `t, re, im` file on a uniform grid starting at 0.
pub fn read_trace_csv(path: &Path) -> Result<CharFnTrace> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let rows: Vec<TraceRecord> = r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))?;
    let fmt = |detail: String| Error::Format {
        path: path.to_owned(),
        detail,
    };
    if rows.len() < 3 {
        return Err(fmt(format!("need at least 3 samples, found {}", rows.len())));
    }
    let dt = rows[1].t - rows[0].t;
    for (k, row) in rows.iter().enumerate() {
        if (row.t - k as f64 * dt).abs() > 1e-9 * dt.abs().max(1e-300) * (k as f64 + 1.0) {
            return Err(fmt(format!("sample {k} at t = {} is off the uniform grid", row.t)));
        }
    }
    let grid = TimeGrid::new(dt, rows.len()).map_err(|e| fmt(e.to_string()))?;
    let values = rows.iter().map(|r| Complex64::new(r.re, r.im)).collect();
    CharFnTrace::new(grid, values).map_err(|e| fmt(e.to_string()))
}

pub fn write_distribution_csv(dist: &HeatDistribution, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for a in dist.atoms() {
        w.serialize(AtomRecord { q: a.q, p: a.p }).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_distribution_csv(path: &Path, provenance: Provenance) -> Result<HeatDistribution> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let rows: Vec<AtomRecord> = r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))?;
    HeatDistribution::new(rows.into_iter().map(|a| HeatAtom { q: a.q, p: a.p }).collect(), provenance)
        .map_err(|e| Error::Format {
            path: path.to_owned(),
            detail: e.to_string(),
        })
}

/// Convenience for the standard R/S processes with `ρ_S = 1/2`.
pub fn mixed_system_process(
    reservoir: ThermalReservoirSpec,
    unitary: crate::qstate::UnitaryOperator,
) -> Result<LandauerProcess> {
    LandauerProcess::new(
        reservoir,
        DensityOperator::maximally_mixed(QubitRegister::single(crate::SYSTEM)),
        unitary,
    )
}
