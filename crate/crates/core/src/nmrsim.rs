//! Pulse-level model of a three-spin NMR register.
//!
//! The Hamiltonian is the Ising model in the ancilla rotating frame. RF pulses
//! are instantaneous ideal rotations, free evolutions are diagonal, and
//! unwanted couplings are removed by π-pulse refocusing. Local `z` phases left
//! over by a compiled program are cancelled by virtual `z` corrections.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{self, GateKind, PartialSwapAngle};
use crate::heatstats::CharFnTrace;
use crate::qstate::{
    apply_channel, evolve, CMatrix, DensityOperator, Observable, QuantumChannel, QubitRegister,
    UnitaryOperator, ONE,
};
use crate::{ANCILLA, RESERVOIR, SYSTEM};

/// Envelope below which a decay-corrected sample is flagged instead of amplified.
pub const ENVELOPE_FLOOR: f64 = 1e-3;

/// Largest off-diagonal or non-separable residual accepted by [`z_compensation`].
pub const CORRECTION_TOL: f64 = 1e-7;

/// Chemical-shift offsets, scalar couplings and relaxation times of a molecule.
///
/// Offsets are `(ω_j − ω_A)/2π` in Hz, couplings `J_{jk}` in Hz, relaxation
/// times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeSpec {
    register: QubitRegister,
    offsets_hz: BTreeMap<String, f64>,
    couplings_hz: BTreeMap<(String, String), f64>,
    t1_s: BTreeMap<String, f64>,
    t2star_s: BTreeMap<String, f64>,
}

/// On-disk layout of a molecule file.
///
/// ```toml
/// [offsets_hz]
/// A = 0.0
/// R = -1530.0
/// S = 2210.0
///
/// [couplings_hz]
/// R-S = 47.65
/// A-R = 128.8
///
/// [t1_s]
/// A = 3.0
/// R = 3.0
/// S = 3.0
///
/// [t2star_s]
/// A = 0.15
/// R = 0.15
/// S = 0.15
/// ```
///
/// Coupling keys name two qubits, either joined by `-` or `,`, or as two
/// single-character labels (`RS`). Missing couplings are zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MoleculeFile {
    offsets_hz: BTreeMap<String, f64>,
    #[serde(default)]
    couplings_hz: BTreeMap<String, f64>,
    t1_s: BTreeMap<String, f64>,
    t2star_s: BTreeMap<String, f64>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

fn split_coupling_key(key: &str) -> Result<(String, String)> {
    let parts: Vec<&str> = key.split(['-', ',']).map(str::trim).collect();
    match parts.as_slice() {
        [a, b] if !a.is_empty() && !b.is_empty() => Ok(((*a).into(), (*b).into())),
        [single] => {
            let chars: Vec<char> = single.chars().collect();
            if chars.len() == 2 {
                Ok((chars[0].to_string(), chars[1].to_string()))
            } else {
                Err(Error::Config(format!(
                    "coupling key `{key}` must name two qubits, e.g. `R-S`"
                )))
            }
        }
        _ => Err(Error::Config(format!("coupling key `{key}` must name two qubits"))),
    }
}

impl MoleculeSpec {
    pub fn new(
        offsets_hz: BTreeMap<String, f64>,
        couplings_hz: BTreeMap<(String, String), f64>,
        t1_s: BTreeMap<String, f64>,
        t2star_s: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let register = QubitRegister::new(offsets_hz.keys().cloned())
            .map_err(|e| Error::Config(format!("molecule qubits: {e}")))?;
        for (label, &off) in &offsets_hz {
            if !off.is_finite() {
                return Err(Error::Config(format!("offset of `{label}` is not finite")));
            }
        }
        if let Some(&off) = offsets_hz.get(ANCILLA) {
            if off != 0.0 {
                return Err(Error::Config(format!(
                    "the ancilla defines the rotating frame; its offset must be 0, got {off}"
                )));
            }
        }
        for (name, times) in [("t1_s", &t1_s), ("t2star_s", &t2star_s)] {
            for label in register.labels() {
                match times.get(label) {
                    Some(&t) if t.is_finite() && t > 0.0 => {}
                    Some(&t) => {
                        return Err(Error::Config(format!("{name}.{label} = {t} must be positive")))
                    }
                    None => return Err(Error::Config(format!("{name} is missing qubit `{label}`"))),
                }
            }
            if let Some(extra) = times.keys().find(|k| !register.contains(k)) {
                return Err(Error::Config(format!("{name} names unknown qubit `{extra}`")));
            }
        }
        let mut couplings = BTreeMap::new();
        for ((a, b), &j) in &couplings_hz {
            if a == b {
                return Err(Error::Config(format!("coupling of `{a}` with itself")));
            }
            for l in [a, b] {
                if !register.contains(l) {
                    return Err(Error::Config(format!("coupling names unknown qubit `{l}`")));
                }
            }
            if !j.is_finite() {
                return Err(Error::Config(format!("coupling {a}-{b} is not finite")));
            }
            let key = pair_key(a, b);
            if let Some(&prev) = couplings.get(&key) {
                if prev != j {
                    return Err(Error::Config(format!(
                        "coupling {a}-{b} given twice with different values ({prev}, {j})"
                    )));
                }
            }
            couplings.insert(key, j);
        }
        Ok(Self {
            register,
            offsets_hz,
            couplings_hz: couplings,
            t1_s,
            t2star_s,
        })
    }

    /// Stand-in parameters for the A/R/S register.
    ///
    /// Only `J_RS = 47.65 Hz` is a measured value. `J_AR` is set near the
    /// reservoir gap from the temperature-sweep fit, `T2* = 0.15 s`, and the
    /// offsets, `J_AS` and `T1` are arbitrary placeholders. Override them
    /// with a molecule file for any quantitative pulse-level study.
    pub fn placeholder() -> Self {
        let offsets = [(ANCILLA, 0.0), (RESERVOIR, -1530.0), (SYSTEM, 2210.0)];
        let couplings = [
            ((RESERVOIR, SYSTEM), 47.65),
            ((ANCILLA, RESERVOIR), 128.8),
            ((ANCILLA, SYSTEM), 32.5),
        ];
        let per_qubit = |v: f64| {
            [ANCILLA, RESERVOIR, SYSTEM]
                .iter()
                .map(|l| (l.to_string(), v))
                .collect::<BTreeMap<_, _>>()
        };
        Self::new(
            offsets.iter().map(|(l, v)| (l.to_string(), *v)).collect(),
            couplings.iter().map(|((a, b), j)| (pair_key(a, b), *j)).collect(),
            per_qubit(3.0),
            per_qubit(0.15),
        )
        .expect("placeholder molecule is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: MoleculeFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("molecule file: {e}")))?;
        let mut couplings = BTreeMap::new();
        for (key, j) in file.couplings_hz {
            let (a, b) = split_coupling_key(&key)?;
            if couplings.insert((a.clone(), b.clone()), j).is_some() {
                return Err(Error::Config(format!("coupling {a}-{b} given twice")));
            }
        }
        Self::new(file.offsets_hz, couplings, file.t1_s, file.t2star_s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::Format {
            path: path.to_owned(),
            detail: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        let file = MoleculeFile {
            offsets_hz: self.offsets_hz.clone(),
            couplings_hz: self
                .couplings_hz
                .iter()
                .map(|((a, b), j)| (format!("{a}-{b}"), *j))
                .collect(),
            t1_s: self.t1_s.clone(),
            t2star_s: self.t2star_s.clone(),
        };
        toml::to_string(&file).expect("plain maps of floats serialize")
    }

    pub fn register(&self) -> &QubitRegister {
        &self.register
    }

    pub fn offset_hz(&self, label: &str) -> Result<f64> {
        self.offsets_hz
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.into()))
    }

    /// `J_{ab}` in Hz; zero when the pair is not listed.
    pub fn coupling_hz(&self, a: &str, b: &str) -> Result<f64> {
        for l in [a, b] {
            self.register.position(l)?;
        }
        Ok(self.couplings_hz.get(&pair_key(a, b)).copied().unwrap_or(0.0))
    }

    pub fn t1(&self, label: &str) -> Result<f64> {
        self.t1_s
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.into()))
    }

    pub fn t2star(&self, label: &str) -> Result<f64> {
        self.t2star_s
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.into()))
    }

    /// Copy with `J_{ab}` replaced.
    pub fn with_coupling(&self, a: &str, b: &str, j_hz: f64) -> Result<Self> {
        let mut couplings = self.couplings_hz.clone();
        couplings.insert(pair_key(a, b), j_hz);
        Self::new(self.offsets_hz.clone(), couplings, self.t1_s.clone(), self.t2star_s.clone())
    }

    /// Copy with the offset of `label` replaced.
    pub fn with_offset(&self, label: &str, offset_hz: f64) -> Result<Self> {
        self.register.position(label)?;
        let mut offsets = self.offsets_hz.clone();
        offsets.insert(label.to_owned(), offset_hz);
        Self::new(offsets, self.couplings_hz.clone(), self.t1_s.clone(), self.t2star_s.clone())
    }

    /// Copy with every offset set to zero.
    pub fn without_offsets(&self) -> Self {
        let offsets = self.offsets_hz.keys().map(|l| (l.clone(), 0.0)).collect();
        Self::new(offsets, self.couplings_hz.clone(), self.t1_s.clone(), self.t2star_s.clone())
            .expect("zero offsets are valid")
    }

    fn energies(&self) -> Vec<f64> {
        let labels = self.register.labels();
        let n = labels.len();
        let spin = |b: usize, p: usize| if self.register.bit(b, p) == 0 { 1.0 } else { -1.0 };
        (0..self.register.dim())
            .map(|b| {
                let mut e = 0.0;
                for (p, l) in labels.iter().enumerate() {
                    e += PI * self.offsets_hz[l] * spin(b, p);
                }
                for p in 0..n {
                    for q in p + 1..n {
                        let j = self
                            .couplings_hz
                            .get(&pair_key(&labels[p], &labels[q]))
                            .copied()
                            .unwrap_or(0.0);
                        e += 0.5 * PI * j * spin(b, p) * spin(b, q);
                    }
                }
                e
            })
            .collect()
    }
}

/// `H = Σ ω_j I_z^j + Σ_{j<k} 2π J_{jk} I_z^j I_z^k` in rad/s.
pub fn ising_hamiltonian(spec: &MoleculeSpec) -> Observable {
    Observable::from_diagonal(spec.register().clone(), &spec.energies())
        .expect("real diagonal is Hermitian")
}

/// `exp(−iHt)` for the Ising Hamiltonian.
pub fn free_evolution(spec: &MoleculeSpec, duration: f64) -> Result<UnitaryOperator> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::Domain(format!("free evolution needs duration >= 0, got {duration}")));
    }
    let d = spec.register().dim();
    let mut m = CMatrix::zeros(d, d);
    for (i, e) in spec.energies().into_iter().enumerate() {
        m[(i, i)] = Complex64::from_polar(1.0, -e * duration);
    }
    UnitaryOperator::new(spec.register().clone(), m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PulseElement {
    /// Hard pulse `exp(−iθσ/2)` about `axis`.
    Rotation { qubit: String, axis: Axis, angle: f64 },
    FreeEvolution { duration: f64 },
    /// Field gradient that fully dephases the listed qubits.
    Gradient { qubits: Vec<String> },
    /// Virtual `R_z(θ)`, applied in software by shifting later pulse phases.
    ZCorrection { qubit: String, angle: f64 },
}

impl PulseElement {
    fn rotation(qubit: &str, axis: Axis, angle: f64) -> Self {
        PulseElement::Rotation {
            qubit: qubit.to_owned(),
            axis,
            angle,
        }
    }

    fn flip(qubit: &str) -> Self {
        Self::rotation(qubit, Axis::X, PI)
    }

    fn unitary(&self, spec: &MoleculeSpec) -> Result<UnitaryOperator> {
        match self {
            PulseElement::Rotation { qubit, axis, angle } => {
                let kind = match axis {
                    Axis::X => GateKind::Rx(*angle),
                    Axis::Y => GateKind::Ry(*angle),
                };
                gates::elementary_gate(kind, qubit)?.embed_in(spec.register())
            }
            PulseElement::FreeEvolution { duration } => free_evolution(spec, *duration),
            PulseElement::ZCorrection { qubit, angle } => {
                gates::elementary_gate(GateKind::Rz(*angle), qubit)?.embed_in(spec.register())
            }
            PulseElement::Gradient { .. } => Err(Error::Compilation(
                "a gradient is not unitary; use PulseProgram::apply".into(),
            )),
        }
    }
}

/// Gates the compiler knows how to realize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateTarget {
    /// CNOT with `S` as control and `R` as target.
    Cnot,
    /// Heisenberg evolution between `R` and `S` for `tau` seconds, `φ = 2π J_RS τ`.
    PartialSwap { tau: f64 },
    /// Controlled `exp(−iH_R t)` with `H_R = diag(0, gap)`, ancilla as control.
    ControlledV { t: f64, gap: f64 },
    ControlledVDagger { t: f64, gap: f64 },
}

impl GateTarget {
    /// Ideal gate on the molecule register.
    pub fn ideal(&self, spec: &MoleculeSpec) -> Result<UnitaryOperator> {
        let u = match *self {
            GateTarget::Cnot => gates::cnot(SYSTEM, RESERVOIR)?,
            GateTarget::PartialSwap { tau } => {
                let j = spec.coupling_hz(RESERVOIR, SYSTEM)?;
                gates::partial_swap(PartialSwapAngle::from_duration(tau, j)?, RESERVOIR, SYSTEM)?
            }
            GateTarget::ControlledV { t, gap } => gates::controlled_v(ANCILLA, &reservoir_h(gap)?, t, false)?,
            GateTarget::ControlledVDagger { t, gap } => {
                gates::controlled_v(ANCILLA, &reservoir_h(gap)?, t, true)?
            }
        };
        u.embed_in(spec.register())
    }
}

fn reservoir_h(gap: f64) -> Result<Observable> {
    if !(gap.is_finite() && gap > 0.0) {
        return Err(Error::Domain(format!("reservoir gap must be positive, got {gap}")));
    }
    Observable::from_diagonal(QubitRegister::single(RESERVOIR), &[0.0, gap])
}

/// A pulse sequence on the molecule register, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseProgram {
    register: QubitRegister,
    elements: Vec<PulseElement>,
    target: Option<GateTarget>,
}

impl PulseProgram {
    pub fn new(register: QubitRegister, elements: Vec<PulseElement>, target: Option<GateTarget>) -> Result<Self> {
        for el in &elements {
            match el {
                PulseElement::Rotation { qubit, angle, .. } | PulseElement::ZCorrection { qubit, angle } => {
                    register.position(qubit)?;
                    if !angle.is_finite() {
                        return Err(Error::Compilation(format!("angle on `{qubit}` is not finite")));
                    }
                }
                PulseElement::FreeEvolution { duration } => {
                    if !(duration.is_finite() && *duration >= 0.0) {
                        return Err(Error::Compilation(format!("negative or non-finite duration {duration}")));
                    }
                }
                PulseElement::Gradient { qubits } => {
                    if qubits.is_empty() {
                        return Err(Error::Compilation("gradient on no qubits".into()));
                    }
                    for q in qubits {
                        register.position(q)?;
                    }
                }
            }
        }
        Ok(Self {
            register,
            elements,
            target,
        })
    }

    pub fn register(&self) -> &QubitRegister {
        &self.register
    }

    pub fn elements(&self) -> &[PulseElement] {
        &self.elements
    }

    pub fn target(&self) -> Option<GateTarget> {
        self.target
    }

    /// Sum of free-evolution durations; pulses are instantaneous.
    pub fn total_duration(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| match e {
                PulseElement::FreeEvolution { duration } => *duration,
                _ => 0.0,
            })
            .sum()
    }

    /// Concatenation in time order. The result has no target.
    pub fn followed_by(&self, next: &PulseProgram) -> Result<PulseProgram> {
        if next.register != self.register {
            return Err(Error::Shape("programs live on different registers".into()));
        }
        let mut elements = self.elements.clone();
        elements.extend(next.elements.iter().cloned());
        Ok(Self {
            register: self.register.clone(),
            elements,
            target: None,
        })
    }

    fn check_spec(&self, spec: &MoleculeSpec) -> Result<()> {
        if spec.register() != &self.register {
            return Err(Error::Shape(format!(
                "program on {:?}, molecule on {:?}",
                self.register.labels(),
                spec.register().labels()
            )));
        }
        Ok(())
    }

    /// Net unitary of a gradient-free program.
    pub fn unitary(&self, spec: &MoleculeSpec) -> Result<UnitaryOperator> {
        self.check_spec(spec)?;
        let d = self.register.dim();
        let mut net = CMatrix::identity(d, d);
        for el in &self.elements {
            net = el.unitary(spec)?.matrix() * net;
        }
        UnitaryOperator::new(self.register.clone(), net)
    }

    /// Runs the program on a state. With noise enabled, phase damping acts
    /// for the length of every free evolution.
    pub fn apply(
        &self,
        state: &DensityOperator,
        spec: &MoleculeSpec,
        noise: Option<&NoiseSpec>,
    ) -> Result<DensityOperator> {
        self.check_spec(spec)?;
        let mut rho = state.clone();
        for el in &self.elements {
            rho = match el {
                PulseElement::Gradient { qubits } => {
                    let refs: Vec<&str> = qubits.iter().map(String::as_str).collect();
                    apply_channel(&rho, &gradient_channel(&refs)?)?
                }
                PulseElement::FreeEvolution { duration } => {
                    let rho = evolve(&rho, &free_evolution(spec, *duration)?)?;
                    match noise {
                        Some(n) => phase_damping_evolution(&rho, *duration, n)?,
                        None => rho,
                    }
                }
                other => evolve(&rho, &other.unitary(spec)?)?,
            };
        }
        Ok(rho)
    }
}

/// Free evolution of length `d` with every qubit in `spectators` decoupled
/// from all others and its offset removed (nested π-pulse pairs).
fn decoupled(spectators: &[String], d: f64) -> Vec<PulseElement> {
    match spectators.split_first() {
        None => vec![PulseElement::FreeEvolution { duration: d }],
        Some((l, rest)) => {
            let half = decoupled(rest, d / 2.0);
            let mut out = half.clone();
            out.push(PulseElement::flip(l));
            out.extend(half);
            out.push(PulseElement::flip(l));
            out
        }
    }
}

/// Pulses realizing `exp(−iθ σ_z^j σ_z^k)` from the `J_{jk}` coupling.
///
/// Without offset refocusing the block also carries the `z` rotations from
/// the offsets of `j` and `k`.
fn zz_block(
    spec: &MoleculeSpec,
    j: &str,
    k: &str,
    theta: f64,
    refocus_offsets: bool,
) -> Result<Vec<PulseElement>> {
    let coupling = spec.coupling_hz(j, k)?;
    if coupling == 0.0 {
        return Err(Error::Compilation(format!("coupling J_{j}{k} is zero")));
    }
    if theta == 0.0 {
        return Ok(Vec::new());
    }
    // exp(−i (πJ/2) d σzσz) from the free Hamiltonian
    let d = 2.0 * theta.abs() / (PI * coupling.abs());
    let spectators: Vec<String> = spec
        .register()
        .labels()
        .iter()
        .filter(|l| *l != j && *l != k)
        .cloned()
        .collect();
    let mut core = if refocus_offsets {
        let half = decoupled(&spectators, d / 2.0);
        let mut v = half.clone();
        v.extend([PulseElement::flip(j), PulseElement::flip(k)]);
        v.extend(half);
        v.extend([PulseElement::flip(j), PulseElement::flip(k)]);
        v
    } else {
        decoupled(&spectators, d)
    };
    if theta * coupling < 0.0 {
        core.insert(0, PulseElement::flip(j));
        core.push(PulseElement::flip(j));
    }
    Ok(core)
}

/// Pulse program for `gate`, correct up to a global phase and local `z`
/// rotations (see [`z_compensation`]).
pub fn compile_pulse_program(gate: GateTarget, spec: &MoleculeSpec) -> Result<PulseProgram> {
    use PulseElement as P;
    let (r, s, a) = (RESERVOIR, SYSTEM, ANCILLA);
    let elements = match gate {
        GateTarget::Cnot => {
            let mut v = vec![P::rotation(r, Axis::Y, FRAC_PI_2)];
            v.extend(zz_block(spec, r, s, PI / 4.0, true)?);
            v.push(P::rotation(r, Axis::X, FRAC_PI_2));
            v
        }
        GateTarget::PartialSwap { tau } => {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(Error::Domain(format!("partial-swap duration must be >= 0, got {tau}")));
            }
            let j = spec.coupling_hz(r, s)?;
            let theta = PartialSwapAngle::from_duration(tau, j)?.phi() / 4.0;
            let zz = zz_block(spec, r, s, theta, true)?;
            let both = |axis, angle| [P::rotation(r, axis, angle), P::rotation(s, axis, angle)];
            let mut v = zz.clone();
            // σzσz → σxσx
            v.extend(both(Axis::Y, -FRAC_PI_2));
            v.extend(zz.iter().cloned());
            v.extend(both(Axis::Y, FRAC_PI_2));
            // σzσz → σyσy
            v.extend(both(Axis::X, FRAC_PI_2));
            v.extend(zz);
            v.extend(both(Axis::X, -FRAC_PI_2));
            v
        }
        GateTarget::ControlledV { t, gap } | GateTarget::ControlledVDagger { t, gap } => {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Domain(format!("evolution time must be >= 0, got {t}")));
            }
            reservoir_h(gap)?;
            // |11⟩⟨11| = (1 − σz_A − σz_R + σz_A σz_R)/4
            let theta = gap * t / 4.0;
            let theta = if matches!(gate, GateTarget::ControlledVDagger { .. }) {
                -theta
            } else {
                theta
            };
            zz_block(spec, a, r, theta, false)?
        }
    };
    PulseProgram::new(spec.register().clone(), elements, Some(gate))
}

/// Appends virtual `z` corrections so the program matches its target gate.
pub fn z_compensation(program: &PulseProgram, spec: &MoleculeSpec) -> Result<PulseProgram> {
    let target = program
        .target()
        .ok_or_else(|| Error::Correction("program has no target gate".into()))?;
    z_compensation_against(program, spec, &target.ideal(spec)?)
}

/// [`z_compensation`] against an explicit ideal unitary.
pub fn z_compensation_against(
    program: &PulseProgram,
    spec: &MoleculeSpec,
    ideal: &UnitaryOperator,
) -> Result<PulseProgram> {
    let net = program.unitary(spec)?;
    let ideal = ideal.embed_in(program.register())?;
    // ideal = M · net, so M must be a product of local z rotations
    let m = ideal.matrix() * net.matrix().adjoint();
    let d = m.nrows();
    let mut worst = (0.0, 0, 0);
    for i in 0..d {
        for j in 0..d {
            if i != j && m[(i, j)].norm() > worst.0 {
                worst = (m[(i, j)].norm(), i, j);
            }
        }
    }
    if worst.0 > CORRECTION_TOL {
        return Err(Error::Correction(format!(
            "residual U_ideal·U_net† is not diagonal: |M[{},{}]| = {:e}",
            worst.1, worst.2, worst.0
        )));
    }
    let n = program.register().len();
    let m0 = m[(0, 0)];
    let ratios: Vec<Complex64> = (0..n).map(|p| m[(1 << (n - 1 - p), 1 << (n - 1 - p))] / m0).collect();
    for b in 0..d {
        let predicted = (0..n)
            .filter(|&p| program.register().bit(b, p) == 1)
            .fold(ONE, |acc, p| acc * ratios[p]);
        let dev = (m[(b, b)] / m0 - predicted).norm();
        if dev > CORRECTION_TOL {
            return Err(Error::Correction(format!(
                "residual phase on basis state {b} is not a product of local z rotations (deviation {dev:e})"
            )));
        }
    }
    let mut elements = program.elements().to_vec();
    for (p, label) in program.register().labels().iter().enumerate() {
        let angle = ratios[p].arg();
        if angle.abs() > 1e-13 {
            elements.push(PulseElement::ZCorrection {
                qubit: label.clone(),
                angle,
            });
        }
    }
    PulseProgram::new(program.register().clone(), elements, program.target())
}

/// Complete dephasing of `qubits` in the computational basis.
pub fn gradient_channel(qubits: &[&str]) -> Result<QuantumChannel> {
    let register = QubitRegister::new(qubits.iter().copied())?;
    let d = register.dim();
    let kraus = (0..d)
        .map(|b| {
            let mut p = CMatrix::zeros(d, d);
            p[(b, b)] = ONE;
            p
        })
        .collect();
    QuantumChannel::new(register, kraus)
}

/// `(1 − ε) 1/d + ε ρ`.
pub fn pseudopure(rho: &DensityOperator, epsilon: f64) -> Result<DensityOperator> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Domain(format!("pseudopure weight {epsilon} outside (0, 1]")));
    }
    let d = rho.dim();
    let mixed = CMatrix::identity(d, d) * Complex64::new((1.0 - epsilon) / d as f64, 0.0);
    DensityOperator::new(rho.register().clone(), mixed + rho.matrix() * Complex64::new(epsilon, 0.0))
}

/// Per-qubit transverse relaxation used as a phase-damping model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    t2star_s: BTreeMap<String, f64>,
    enabled: bool,
}

impl NoiseSpec {
    pub fn new(t2star_s: BTreeMap<String, f64>, enabled: bool) -> Result<Self> {
        for (l, &t) in &t2star_s {
            if !(t > 0.0) {
                return Err(Error::Config(format!("T2* of `{l}` must be positive, got {t}")));
            }
        }
        Ok(Self { t2star_s, enabled })
    }

    pub fn disabled() -> Self {
        Self {
            t2star_s: BTreeMap::new(),
            enabled: false,
        }
    }

    pub fn from_molecule(spec: &MoleculeSpec) -> Self {
        Self {
            t2star_s: spec.t2star_s.clone(),
            enabled: true,
        }
    }

    /// Same `T2*` on every listed qubit.
    pub fn uniform(labels: &[&str], t2star: f64) -> Result<Self> {
        Self::new(labels.iter().map(|l| (l.to_string(), t2star)).collect(), true)
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn t2star(&self, label: &str) -> Option<f64> {
        self.t2star_s.get(label).copied()
    }

    /// `e^{−t/T2*}`, or 1 for a noiseless qubit.
    pub fn decay_factor(&self, label: &str, t: f64) -> f64 {
        match (self.enabled, self.t2star(label)) {
            (true, Some(t2)) => (-t / t2).exp(),
            _ => 1.0,
        }
    }

    /// Decay of the ancilla coherence after `t_acq` seconds.
    pub fn envelope(&self, t_acq: f64) -> f64 {
        self.decay_factor(ANCILLA, t_acq)
    }
}

/// Local phase damping for `duration` seconds on every qubit of `state`
/// that has a `T2*`.
pub fn phase_damping_evolution(
    state: &DensityOperator,
    duration: f64,
    noise: &NoiseSpec,
) -> Result<DensityOperator> {
    if !(duration >= 0.0) {
        return Err(Error::Domain(format!("duration must be >= 0, got {duration}")));
    }
    if !noise.is_enabled() || duration == 0.0 {
        return Ok(state.clone());
    }
    let mut rho = state.clone();
    for label in state.register().labels() {
        if noise.t2star(label).is_some() {
            let ch = QuantumChannel::phase_damping(label, noise.decay_factor(label, duration))?;
            rho = apply_channel(&rho, &ch)?;
        }
    }
    Ok(rho)
}

/// Divides each sample by the ancilla envelope `e^{−t_acq/T2*}`.
///
/// Samples whose envelope is below [`ENVELOPE_FLOOR`] are left as measured
/// and flagged unreliable.
pub fn decay_correction(trace: &CharFnTrace, noise: &NoiseSpec) -> Result<CharFnTrace> {
    if !noise.is_enabled() {
        return Ok(trace.clone());
    }
    let acq = trace.acquisition().ok_or_else(|| {
        Error::Validation("decay correction needs per-sample acquisition durations".into())
    })?;
    let mut values = Vec::with_capacity(acq.len());
    let mut unreliable = trace.unreliable().to_vec();
    for (k, (&v, &t)) in trace.values().iter().zip(acq).enumerate() {
        let env = noise.envelope(t);
        if env < ENVELOPE_FLOOR {
            unreliable[k] = true;
            values.push(v);
        } else {
            values.push(v / env);
        }
    }
    CharFnTrace::corrected(trace.grid(), values, unreliable)
}

/// Coherence `|ρ_ij|` for basis states that differ on `label`.
#[cfg(test)]
fn coherences_on(rho: &DensityOperator, label: &str) -> Vec<f64> {
    let p = rho.register().position(label).unwrap();
    let n = rho.register().len();
    let d = rho.dim();
    (0..d)
        .filter(|&i| rho.register().bit(i, p) == 0)
        .map(|i| rho.matrix()[(i, i | (1 << (n - 1 - p)))].norm())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatstats::TimeGrid;
    use crate::qstate::{max_abs, tensor_compose};
    use approx::assert_abs_diff_eq;

    fn spec() -> MoleculeSpec {
        MoleculeSpec::placeholder()
    }

    fn zero_spec() -> MoleculeSpec {
        let mut s = spec().without_offsets();
        for (a, b) in [("A", "R"), ("A", "S"), ("R", "S")] {
            s = s.with_coupling(a, b, 0.0).unwrap();
        }
        s
    }

    #[test]
    fn hamiltonian_zero_and_single_coupling() {
        let h = ising_hamiltonian(&zero_spec());
        assert_eq!(h.matrix(), &CMatrix::zeros(8, 8));

        let s = zero_spec().with_coupling("R", "S", 47.65).unwrap();
        let h = ising_hamiltonian(&s);
        // diagonal repeats over the ancilla; |00⟩,|01⟩ on (R,S)
        let e00 = h.matrix()[(0, 0)].re;
        let e01 = h.matrix()[(1, 1)].re;
        assert_abs_diff_eq!(e00, PI * 47.65 / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e01, -PI * 47.65 / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e00 - e01, PI * 47.65, epsilon = 1e-12);
    }

    #[test]
    fn hamiltonian_matches_kronecker_sum() {
        let s = spec();
        let iz = |l: &str| Observable::pauli_z(l).embed_in(s.register()).unwrap().matrix() * Complex64::new(0.5, 0.0);
        let mut oracle = CMatrix::zeros(8, 8);
        for l in ["A", "R", "S"] {
            oracle += iz(l) * Complex64::new(2.0 * PI * s.offset_hz(l).unwrap(), 0.0);
        }
        for (a, b) in [("A", "R"), ("A", "S"), ("R", "S")] {
            oracle += iz(a) * iz(b) * Complex64::new(2.0 * PI * s.coupling_hz(a, b).unwrap(), 0.0);
        }
        assert!(max_abs(&(ising_hamiltonian(&s).matrix() - oracle)) < 1e-9);
    }

    #[test]
    fn free_evolution_examples() {
        let s = spec();
        assert_eq!(free_evolution(&s, 0.0).unwrap().matrix(), &CMatrix::identity(8, 8));
        assert!(free_evolution(&s, -1.0).is_err());
        let ab = free_evolution(&s, 0.013).unwrap().then(&free_evolution(&s, 0.0021).unwrap()).unwrap();
        assert!(max_abs(&(ab.matrix() - free_evolution(&s, 0.0151).unwrap().matrix())) < 1e-12);

        let j = 47.65;
        let only_rs = zero_spec().with_coupling("R", "S", j).unwrap();
        let u = free_evolution(&only_rs, 1.0 / (2.0 * j)).unwrap();
        let m = Complex64::from_polar(1.0, -PI / 4.0);
        for (i, expect) in [m, m.conj(), m.conj(), m].into_iter().enumerate() {
            assert!((u.matrix()[(i, i)] - expect).norm() < 1e-14);
        }
    }

    fn compensated_distance(gate: GateTarget, s: &MoleculeSpec) -> f64 {
        let prog = z_compensation(&compile_pulse_program(gate, s).unwrap(), s).unwrap();
        prog.unitary(s).unwrap().process_distance(&gate.ideal(s).unwrap()).unwrap()
    }

    #[test]
    fn compiled_gates_match_after_compensation() {
        let s = spec();
        let j = s.coupling_hz("R", "S").unwrap();
        let gap = 805.5;
        let gates = [
            GateTarget::Cnot,
            GateTarget::PartialSwap { tau: 1.0 / (2.0 * j) },
            GateTarget::PartialSwap { tau: 1.0 / (8.0 * j) },
            GateTarget::PartialSwap { tau: 0.0 },
            GateTarget::ControlledV { t: 0.0, gap },
            GateTarget::ControlledV { t: 0.0037, gap },
            GateTarget::ControlledVDagger { t: 0.0037, gap },
        ];
        for g in gates {
            let d = compensated_distance(g, &s);
            assert!(d < 1e-10, "{g:?}: {d:e}");
        }
    }

    #[test]
    fn uncompensated_cnot_differs_only_by_z_phases() {
        let s = spec();
        let prog = compile_pulse_program(GateTarget::Cnot, &s).unwrap();
        let raw = prog.unitary(&s).unwrap().process_distance(&GateTarget::Cnot.ideal(&s).unwrap()).unwrap();
        assert!(raw > 1e-3);
        assert!(compensated_distance(GateTarget::Cnot, &s) < 1e-10);
        // total free time is 1/(2 J_RS)
        assert_abs_diff_eq!(prog.total_duration(), 1.0 / (2.0 * 47.65), epsilon = 1e-15);
    }

    #[test]
    fn negative_coupling_is_handled() {
        let s = spec().with_coupling("R", "S", -47.65).unwrap();
        assert!(compensated_distance(GateTarget::Cnot, &s) < 1e-10);
        assert!(compensated_distance(GateTarget::PartialSwap { tau: 0.004 }, &s) < 1e-10);
    }

    #[test]
    fn zero_coupling_is_a_compilation_error() {
        let s = spec().with_coupling("R", "S", 0.0).unwrap();
        assert!(matches!(compile_pulse_program(GateTarget::Cnot, &s), Err(Error::Compilation(_))));
        let s = spec().with_coupling("A", "R", 0.0).unwrap();
        assert!(matches!(
            compile_pulse_program(GateTarget::ControlledV { t: 0.1, gap: 800.0 }, &s),
            Err(Error::Compilation(_))
        ));
    }

    #[test]
    fn compensation_of_exact_and_stray_programs() {
        let s = spec();
        let exact = PulseProgram::new(
            s.register().clone(),
            vec![PulseElement::rotation("R", Axis::X, PI)],
            None,
        )
        .unwrap();
        let x_r = gates::elementary_gate(GateKind::Rx(PI), "R").unwrap();
        let same = z_compensation_against(&exact, &s, &x_r).unwrap();
        assert_eq!(same, exact);

        let mut stray = exact.elements().to_vec();
        stray.push(PulseElement::ZCorrection { qubit: "S".into(), angle: 0.4 });
        let stray = PulseProgram::new(s.register().clone(), stray, None).unwrap();
        let fixed = z_compensation_against(&stray, &s, &x_r).unwrap();
        match fixed.elements().last().unwrap() {
            PulseElement::ZCorrection { qubit, angle } => {
                assert_eq!(qubit, "S");
                assert_abs_diff_eq!(*angle, -0.4, epsilon = 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
        let d = fixed.unitary(&s).unwrap().process_distance(&x_r.embed_in(s.register()).unwrap()).unwrap();
        assert!(d < 1e-14);

        // a stray x rotation cannot be fixed with z corrections
        assert!(matches!(
            z_compensation_against(&exact, &s, &UnitaryOperator::identity(s.register().clone())),
            Err(Error::Correction(_))
        ));
        // nor can a leftover σzσz phase
        let zz = PulseProgram::new(s.register().clone(), zz_block(&s, "R", "S", 0.3, true).unwrap(), None).unwrap();
        assert!(matches!(
            z_compensation_against(&zz, &s, &UnitaryOperator::identity(s.register().clone())),
            Err(Error::Correction(_))
        ));
    }

    #[test]
    fn stepwise_application_matches_unitary() {
        let s = spec();
        let prog = z_compensation(&compile_pulse_program(GateTarget::PartialSwap { tau: 0.005 }, &s).unwrap(), &s).unwrap();
        let rho = tensor_compose(&[
            &DensityOperator::plus("A"),
            &DensityOperator::from_diagonal(QubitRegister::single("R"), &[0.7, 0.3]).unwrap(),
            &DensityOperator::plus("S"),
        ])
        .unwrap();
        let a = prog.apply(&rho, &s, None).unwrap();
        let b = evolve(&rho, &prog.unitary(&s).unwrap()).unwrap();
        assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-13);
    }

    #[test]
    fn gradient_examples() {
        let g = gradient_channel(&["A"]).unwrap();
        let out = apply_channel(&DensityOperator::plus("A"), &g).unwrap();
        assert!(max_abs(&(out.matrix() - CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0))) == 0.0);
        let diag = DensityOperator::from_diagonal(QubitRegister::new(["A", "R"]).unwrap(), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(apply_channel(&diag, &gradient_channel(&["R"]).unwrap()).unwrap().matrix(), diag.matrix());
        assert!(gradient_channel(&[]).is_err());

        let rho = tensor_compose(&[&DensityOperator::plus("A"), &DensityOperator::plus("R")]).unwrap();
        let once = apply_channel(&rho, &gradient_channel(&["R"]).unwrap()).unwrap();
        let twice = apply_channel(&once, &gradient_channel(&["R"]).unwrap()).unwrap();
        assert_eq!(once.matrix(), twice.matrix());
        assert!(coherences_on(&once, "R").iter().all(|&c| c < 1e-15));
        assert!(coherences_on(&once, "A").iter().all(|&c| (c - 0.25).abs() < 1e-15));
    }

    #[test]
    fn pseudopure_scaling() {
        let rho = DensityOperator::plus("A");
        assert_eq!(pseudopure(&rho, 1.0).unwrap().matrix(), rho.matrix());
        assert!(pseudopure(&rho, 0.0).is_err());
        assert!(pseudopure(&rho, 1.5).is_err());
        let pps = pseudopure(&rho, 1e-5).unwrap();
        let x = crate::qstate::expectation(&pps, &Observable::pauli_x("A")).unwrap();
        assert_abs_diff_eq!(x, 1e-5, epsilon = 1e-18);
        let tiny = pseudopure(&rho, 1e-300).unwrap();
        assert!(max_abs(&(tiny.matrix() - DensityOperator::maximally_mixed(QubitRegister::single("A")).matrix())) < 1e-15);
    }

    #[test]
    fn phase_damping_examples() {
        let noise = NoiseSpec::uniform(&["A"], 0.15).unwrap();
        let rho = DensityOperator::plus("A");
        assert_eq!(phase_damping_evolution(&rho, 0.0, &noise).unwrap().matrix(), rho.matrix());
        let out = phase_damping_evolution(&rho, 0.15, &noise).unwrap();
        assert_abs_diff_eq!(out.matrix()[(0, 1)].re, 0.5 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(out.matrix()[(0, 0)].re, 0.5, epsilon = 1e-15);
        let gone = phase_damping_evolution(&rho, 1e4, &noise).unwrap();
        let grad = apply_channel(&rho, &gradient_channel(&["A"]).unwrap()).unwrap();
        assert!(max_abs(&(gone.matrix() - grad.matrix())) < 1e-15);
        assert!(phase_damping_evolution(&rho, -1.0, &noise).is_err());
        assert_eq!(phase_damping_evolution(&rho, 1.0, &NoiseSpec::disabled()).unwrap().matrix(), rho.matrix());
    }

    #[test]
    fn phase_damping_commutes_with_free_evolution() {
        let s = spec();
        let noise = NoiseSpec::from_molecule(&s);
        let rho = tensor_compose(&[&DensityOperator::plus("A"), &DensityOperator::plus("R"), &DensityOperator::plus("S")]).unwrap();
        let u = free_evolution(&s, 0.02).unwrap();
        let a = phase_damping_evolution(&evolve(&rho, &u).unwrap(), 0.02, &noise).unwrap();
        let b = evolve(&phase_damping_evolution(&rho, 0.02, &noise).unwrap(), &u).unwrap();
        assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-15);
    }

    #[test]
    fn decay_correction_inverts_synthetic_envelope() {
        let noise = NoiseSpec::uniform(&["A"], 0.15).unwrap();
        let grid = TimeGrid::new(0.01, 8).unwrap();
        let clean: Vec<Complex64> = grid.times().iter().map(|&t| Complex64::from_polar(1.0, -40.0 * t)).collect();
        let acq: Vec<f64> = grid.times().iter().map(|&t| 2.0 * t).collect();
        let noisy: Vec<Complex64> = clean.iter().zip(&acq).map(|(v, &t)| v * noise.envelope(t)).collect();
        let trace = CharFnTrace::measured(grid, noisy, acq).unwrap();
        let fixed = decay_correction(&trace, &noise).unwrap();
        for (a, b) in fixed.values().iter().zip(&clean) {
            assert!((a - b).norm() < 1e-10);
        }
        assert!(fixed.unreliable().iter().all(|f| !f));
        let untouched = decay_correction(&trace, &NoiseSpec::disabled()).unwrap();
        assert_eq!(untouched.values(), trace.values());
    }

    #[test]
    fn decay_correction_flags_instead_of_amplifying() {
        let noise = NoiseSpec::uniform(&["A"], 0.001).unwrap();
        let grid = TimeGrid::new(0.01, 4).unwrap();
        let acq: Vec<f64> = grid.times().to_vec();
        let vals: Vec<Complex64> = acq.iter().map(|&t| Complex64::new(noise.envelope(t), 0.0)).collect();
        let fixed = decay_correction(&CharFnTrace::measured(grid, vals.clone(), acq).unwrap(), &noise).unwrap();
        assert_eq!(fixed.unreliable(), &[false, true, true, true]);
        assert_eq!(fixed.values()[3], vals[3]);
        let bare = CharFnTrace::new(grid, vec![ONE; 4]).unwrap();
        assert!(decay_correction(&bare, &noise).is_err());
    }

    #[test]
    fn molecule_file_round_trip_and_validation() {
        let s = spec();
        let text = s.to_toml_string();
        assert_eq!(MoleculeSpec::from_toml_str(&text).unwrap(), s);

        let packed = "[offsets_hz]\nA = 0.0\nR = 10.0\n[couplings_hz]\nAR = 5.0\n[t1_s]\nA = 1.0\nR = 1.0\n[t2star_s]\nA = 0.1\nR = 0.1\n";
        let m = MoleculeSpec::from_toml_str(packed).unwrap();
        assert_eq!(m.coupling_hz("R", "A").unwrap(), 5.0);

        let bad_anc = packed.replace("A = 0.0", "A = 3.0");
        assert!(matches!(MoleculeSpec::from_toml_str(&bad_anc), Err(Error::Config(_))));
        let bad_t2 = packed.replace("A = 0.1", "A = -0.1");
        assert!(MoleculeSpec::from_toml_str(&bad_t2).is_err());
        let asym = packed.replace("AR = 5.0", "AR = 5.0\nRA = 6.0");
        assert!(MoleculeSpec::from_toml_str(&asym).is_err());
        let unknown = packed.replace("AR = 5.0", "AQ = 5.0");
        assert!(MoleculeSpec::from_toml_str(&unknown).is_err());
    }
}
