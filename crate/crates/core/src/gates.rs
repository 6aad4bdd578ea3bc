//! Ideal gate matrices and the ancilla interferometer.
//!
//! Gates whose entries are `0, ±1, ±i` or `½(1 ± i)` are built from exact
//! values rather than from rounded transcendentals, so identities such as
//! `H² = 1` or `U_PS(π) = SWAP` hold bit for bit.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qstate::{
    embed, expectation, tensor_compose, CMatrix, DensityOperator, Observable, QubitRegister,
    UnitaryOperator, I, ONE, ZERO,
};
use crate::{ANCILLA, RESERVOIR, SYSTEM};

/// `(cos a, sin a)` with exact values at multiples of `π/2`.
pub(crate) fn exact_cos_sin(a: f64) -> (f64, f64) {
    let quarter = a / FRAC_PI_2;
    let k = quarter.round();
    if (quarter - k).abs() < 1e-14 * (1.0 + k.abs()) {
        match (k as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        (a.cos(), a.sin())
    }
}

pub(crate) fn exact_phase(a: f64) -> Complex64 {
    let (c, s) = exact_cos_sin(a);
    Complex64::new(c, s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    Rx(f64),
    Ry(f64),
    Rz(f64),
}

impl FromStr for GateKind {
    type Err = Error;

    /// Accepts `h`, `x`, `y`, `z` and `rx(θ)`, `ry(θ)`, `rz(θ)` with θ in radians.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "h" => return Ok(GateKind::H),
            "x" => return Ok(GateKind::X),
            "y" => return Ok(GateKind::Y),
            "z" => return Ok(GateKind::Z),
            _ => {}
        }
        let angle = |prefix: &str| -> Option<f64> {
            s.strip_prefix(prefix)?
                .strip_prefix('(')?
                .strip_suffix(')')?
                .trim()
                .parse()
                .ok()
        };
        if let Some(t) = angle("rx") {
            Ok(GateKind::Rx(t))
        } else if let Some(t) = angle("ry") {
            Ok(GateKind::Ry(t))
        } else if let Some(t) = angle("rz") {
            Ok(GateKind::Rz(t))
        } else {
            Err(Error::Validation(format!("unknown gate kind `{s}`")))
        }
    }
}

/// 2×2 matrix of a single-qubit gate; `R_k(θ) = exp(−iθσ_k/2)`.
pub(crate) fn single_qubit_matrix(kind: GateKind) -> Result<CMatrix> {
    let m = |a: [Complex64; 4]| CMatrix::from_row_slice(2, 2, &a);
    let rot = |theta: f64| -> Result<(Complex64, Complex64)> {
        if !theta.is_finite() {
            return Err(Error::Domain(format!("rotation angle {theta} is not finite")));
        }
        let (c, s) = exact_cos_sin(theta / 2.0);
        Ok((Complex64::new(c, 0.0), Complex64::new(s, 0.0)))
    };
    Ok(match kind {
        GateKind::H => {
            let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
            m([h, h, h, -h])
        }
        GateKind::X => m([ZERO, ONE, ONE, ZERO]),
        GateKind::Y => m([ZERO, -I, I, ZERO]),
        GateKind::Z => m([ONE, ZERO, ZERO, -ONE]),
        GateKind::Rx(t) => {
            let (c, s) = rot(t)?;
            m([c, -I * s, -I * s, c])
        }
        GateKind::Ry(t) => {
            let (c, s) = rot(t)?;
            m([c, -s, s, c])
        }
        GateKind::Rz(t) => {
            let (c, s) = rot(t)?;
            m([c - I * s, ZERO, ZERO, c + I * s])
        }
    })
}

pub fn elementary_gate(kind: GateKind, target: &str) -> Result<UnitaryOperator> {
    UnitaryOperator::new(QubitRegister::single(target), single_qubit_matrix(kind)?)
}

/// Flips `target` when `control` is `|1⟩`.
pub fn cnot(control: &str, target: &str) -> Result<UnitaryOperator> {
    let register = QubitRegister::new([control, target])?;
    let pc = register.position(control)?;
    let pt = register.position(target)?;
    let n = register.len();
    let d = register.dim();
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        let out = if register.bit(i, pc) == 1 {
            i ^ (1 << (n - 1 - pt))
        } else {
            i
        };
        m[(out, i)] = ONE;
    }
    UnitaryOperator::new(register, m)
}

/// Partial-swap angle `φ`. The physical range is `[0, π]`; other values
/// are accepted as extrapolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialSwapAngle {
    phi: f64,
}

impl PartialSwapAngle {
    pub fn new(phi: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::Domain(format!("partial-swap angle {phi} is not finite")));
        }
        Ok(Self { phi })
    }

    /// `φ = 2π J τ` for a Heisenberg coupling `J` (Hz) acting for `τ` seconds.
    pub fn from_duration(tau: f64, coupling_hz: f64) -> Result<Self> {
        Self::new(2.0 * PI * coupling_hz * tau)
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn duration(&self, coupling_hz: f64) -> f64 {
        self.phi / (2.0 * PI * coupling_hz)
    }

    pub fn in_physical_range(&self) -> bool {
        (0.0..=PI).contains(&self.phi)
    }
}

/// `U_PS(φ) = P_triplet + e^{iφ} P_singlet` on two qubits.
pub fn partial_swap(angle: PartialSwapAngle, a: &str, b: &str) -> Result<UnitaryOperator> {
    let register = QubitRegister::new([a, b])?;
    let e = exact_phase(angle.phi());
    let half = Complex64::new(0.5, 0.0);
    // P_t = (1 + SWAP)/2, P_s = (1 − SWAP)/2; only the |01⟩,|10⟩ block mixes
    let even = half * (ONE + e);
    let odd = half * (ONE - e);
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = ONE;
    m[(3, 3)] = ONE;
    m[(1, 1)] = even;
    m[(2, 2)] = even;
    m[(1, 2)] = odd;
    m[(2, 1)] = odd;
    UnitaryOperator::new(register, m)
}

/// `|0⟩⟨0| ⊗ 1 + |1⟩⟨1| ⊗ u`.
pub fn controlled(control: &str, u: &UnitaryOperator) -> Result<UnitaryOperator> {
    if u.register().contains(control) {
        return Err(Error::Circuit(format!(
            "control `{control}` is one of the target qubits"
        )));
    }
    let ctrl = QubitRegister::single(control);
    let register = ctrl.union(u.register())?;
    let p0 = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]);
    let p1 = CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]);
    let m = embed(&ctrl, &p0, &register)?
        + embed(&ctrl, &p1, &register)? * embed(u.register(), u.matrix(), &register)?;
    UnitaryOperator::new(register, m)
}

/// Controlled `v_t = exp(−i H_R t)`, or `v_t†` when `dagger` is set.
pub fn controlled_v(
    control: &str,
    h_r: &Observable,
    t: f64,
    dagger: bool,
) -> Result<UnitaryOperator> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("evolution time must be >= 0, got {t}")));
    }
    if h_r.register().contains(control) {
        return Err(Error::Circuit(format!(
            "control `{control}` coincides with a reservoir qubit"
        )));
    }
    let v = h_r.propagator(t);
    let v = if dagger { v.dagger() } else { v };
    controlled(control, &v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn observable(self, label: &str) -> Observable {
        match self {
            Pauli::X => Observable::pauli_x(label),
            Pauli::Y => Observable::pauli_y(label),
            Pauli::Z => Observable::pauli_z(label),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CircuitStep {
    pub name: String,
    pub gate: UnitaryOperator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Readout {
    pub qubit: String,
    pub pauli: Pauli,
}

/// Ordered gate list on a register plus the Pauli expectations to read.
#[derive(Debug, Clone)]
pub struct CircuitSpec {
    register: QubitRegister,
    steps: Vec<CircuitStep>,
    readout: Vec<Readout>,
}

impl CircuitSpec {
    pub fn new(register: QubitRegister, steps: Vec<CircuitStep>, readout: Vec<Readout>) -> Result<Self> {
        for s in &steps {
            if !s.gate.register().is_subset_of(&register) {
                return Err(Error::UnknownLabel(s.gate.register().complement(&register).join(",")));
            }
        }
        for r in &readout {
            register.position(&r.qubit)?;
        }
        Ok(Self {
            register,
            steps,
            readout,
        })
    }

    pub fn register(&self) -> &QubitRegister {
        &self.register
    }

    pub fn steps(&self) -> &[CircuitStep] {
        &self.steps
    }

    pub fn readout(&self) -> &[Readout] {
        &self.readout
    }

    /// Net unitary of all steps.
    pub fn unitary(&self) -> Result<UnitaryOperator> {
        self.steps
            .iter()
            .try_fold(UnitaryOperator::identity(self.register.clone()), |acc, s| acc.then(&s.gate))
    }

    pub fn run(&self, initial: &DensityOperator) -> Result<DensityOperator> {
        if initial.register() != &self.register {
            return Err(Error::Shape(format!(
                "circuit acts on {:?}, state lives on {:?}",
                self.register.labels(),
                initial.register().labels()
            )));
        }
        self.steps
            .iter()
            .try_fold(initial.clone(), |rho, s| crate::qstate::evolve(&rho, &s.gate))
    }

    /// Readout expectations on the final state, in readout order.
    pub fn measure(&self, initial: &DensityOperator) -> Result<Vec<f64>> {
        let out = self.run(initial)?;
        self.readout
            .iter()
            .map(|r| expectation(&out, &r.pauli.observable(&r.qubit)))
            .collect()
    }

    /// `⟨σ_x⟩ − i⟨σ_y⟩` from a readout plan of the form `[σ_x, σ_y]` on one qubit.
    pub fn characteristic_value(&self, initial: &DensityOperator) -> Result<Complex64> {
        match self.readout.as_slice() {
            [x, y] if x.pauli == Pauli::X && y.pauli == Pauli::Y && x.qubit == y.qubit => {
                let v = self.measure(initial)?;
                Ok(Complex64::new(v[0], -v[1]))
            }
            _ => Err(Error::Circuit("readout is not a (σ_x, σ_y) pair on one qubit".into())),
        }
    }

    /// `|0⟩⟨0|_A ⊗ ρ` on the circuit register.
    pub fn input_state(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        let anc = DensityOperator::basis(QubitRegister::single(ANCILLA), 0)?;
        let state = tensor_compose(&[&anc, rho])?;
        if state.register() != &self.register {
            return Err(Error::Shape(format!(
                "input covers {:?}, circuit needs {:?}",
                state.register().labels(),
                self.register.labels()
            )));
        }
        Ok(state)
    }
}

/// `H_A`, controlled-`v_t`, `U`, controlled-`v_t†`, then read `σ_x, σ_y` on `A`.
///
/// With `v_t = exp(−i H_R t)` the readout `⟨σ_x⟩ − i⟨σ_y⟩` equals
/// `Σ p_m p_{n|m} e^{−i(E_n − E_m)t}`.
pub fn build_interferometer(
    u_process: &UnitaryOperator,
    h_r: &Observable,
    t: f64,
) -> Result<CircuitSpec> {
    if u_process.register().contains(ANCILLA) {
        return Err(Error::Circuit("the process must not act on the ancilla".into()));
    }
    let work = u_process.register().clone();
    let work = if h_r.register().is_subset_of(&work) {
        work
    } else {
        QubitRegister::new(
            work.labels()
                .iter()
                .cloned()
                .chain(h_r.register().complement(&work)),
        )?
    };
    let register = QubitRegister::single(ANCILLA).union(&work)?;
    let steps = vec![
        CircuitStep {
            name: "H".into(),
            gate: elementary_gate(GateKind::H, ANCILLA)?,
        },
        CircuitStep {
            name: "controlled-v".into(),
            gate: controlled_v(ANCILLA, h_r, t, false)?,
        },
        CircuitStep {
            name: "process".into(),
            gate: u_process.clone(),
        },
        CircuitStep {
            name: "controlled-v-dagger".into(),
            gate: controlled_v(ANCILLA, h_r, t, true)?,
        },
    ];
    let readout = vec![
        Readout {
            qubit: ANCILLA.into(),
            pauli: Pauli::X,
        },
        Readout {
            qubit: ANCILLA.into(),
            pauli: Pauli::Y,
        },
    ];
    CircuitSpec::new(register, steps, readout)
}

/// CNOT with the system as control and the reservoir as target.
pub fn cnot_process() -> UnitaryOperator {
    cnot(SYSTEM, RESERVOIR).expect("distinct labels")
}

/// Partial swap between reservoir and system.
pub fn partial_swap_process(phi: f64) -> Result<UnitaryOperator> {
    partial_swap(PartialSwapAngle::new(phi)?, RESERVOIR, SYSTEM)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{max_abs, partial_trace};
    use crate::thermo::ThermalReservoirSpec;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rotation_periodicity_and_hadamard() {
        let rx = elementary_gate(GateKind::Rx(2.0 * PI), "A").unwrap();
        assert_eq!(rx.matrix(), &(CMatrix::identity(2, 2) * c(-1.0, 0.0)));
        let h = elementary_gate(GateKind::H, "A").unwrap();
        let h2 = h.matrix() * h.matrix();
        assert!(max_abs(&(h2 - CMatrix::identity(2, 2))) < 1e-15);
        let plus = crate::qstate::evolve(&DensityOperator::basis(QubitRegister::single("A"), 0).unwrap(), &h).unwrap();
        assert!(max_abs(&(plus.matrix() - DensityOperator::plus("A").matrix())) < 1e-15);
    }

    #[test]
    fn rotation_products_stay_unitary() {
        let seq = [GateKind::Ry(FRAC_PI_2), GateKind::Rx(PI), GateKind::Rz(0.3), GateKind::Ry(-1.1)];
        let mut m = CMatrix::identity(2, 2);
        for k in seq {
            m = single_qubit_matrix(k).unwrap() * m;
        }
        assert!(crate::qstate::unitarity_error(&m) < 1e-15);
        // R_y(π/2) R_x(π) by hand: [[1,-1],[1,1]]/√2 · [[0,-i],[-i,0]]
        let h = FRAC_1_SQRT_2;
        let by_hand = CMatrix::from_row_slice(2, 2, &[c(0., h), c(0., -h), c(0., -h), c(0., -h)]);
        let m2 = single_qubit_matrix(GateKind::Ry(FRAC_PI_2)).unwrap()
            * single_qubit_matrix(GateKind::Rx(PI)).unwrap();
        assert!(max_abs(&(m2 - by_hand)) < 1e-15);
        assert!(elementary_gate(GateKind::Rx(f64::NAN), "A").is_err());
        assert!("rq(1)".parse::<GateKind>().is_err());
        assert_eq!("rz(0.5)".parse::<GateKind>().unwrap(), GateKind::Rz(0.5));
    }

    #[test]
    fn cnot_matches_printed_matrix() {
        // control is the first (more significant) qubit here
        let u = cnot("P", "Q").unwrap();
        let expect = [
            [1., 0., 0., 0.],
            [0., 1., 0., 0.],
            [0., 0., 0., 1.],
            [0., 0., 1., 0.],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(u.matrix()[(i, j)], c(expect[i][j], 0.0));
            }
        }
        assert_eq!(u.matrix() * u.matrix(), CMatrix::identity(4, 4));
        assert!(cnot("P", "P").is_err());
    }

    #[test]
    fn cnot_system_controls_reservoir() {
        // register order (R, S): |r s⟩ → |r⊕s, s⟩
        let u = cnot_process();
        assert_eq!(u.register().labels(), &["R", "S"]);
        assert_eq!(u.matrix()[(3, 1)], ONE); // |01⟩ → |11⟩
        assert_eq!(u.matrix()[(2, 2)], ONE); // |10⟩ → |10⟩
    }

    #[test]
    fn partial_swap_fixed_points() {
        let id = partial_swap_process(0.0).unwrap();
        assert_eq!(id.matrix(), &CMatrix::identity(4, 4));

        let swap = partial_swap_process(PI).unwrap();
        let printed = [
            [1., 0., 0., 0.],
            [0., 0., 1., 0.],
            [0., 1., 0., 0.],
            [0., 0., 0., 1.],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(swap.matrix()[(i, j)], c(printed[i][j], 0.0));
            }
        }

        let root = partial_swap_process(FRAC_PI_2).unwrap();
        assert_eq!(root.matrix()[(1, 1)], c(0.5, 0.5));
        assert_eq!(root.matrix()[(1, 2)], c(0.5, -0.5));
        assert_eq!(root.matrix()[(2, 1)], c(0.5, -0.5));
        assert_eq!(root.matrix()[(2, 2)], c(0.5, 0.5));
        assert_eq!(root.matrix()[(0, 0)], ONE);
        assert_eq!(root.matrix()[(3, 3)], ONE);
    }

    #[test]
    fn swap_exchanges_factors() {
        let r = DensityOperator::from_diagonal(QubitRegister::single("R"), &[0.8, 0.2]).unwrap();
        let s = DensityOperator::plus("S");
        let out = crate::qstate::evolve(&tensor_compose(&[&r, &s]).unwrap(), &partial_swap_process(PI).unwrap()).unwrap();
        let new_s = partial_trace(&out, &["S"]).unwrap();
        let new_r = partial_trace(&out, &["R"]).unwrap();
        assert!(max_abs(&(new_s.matrix() - r.matrix())) < 1e-15);
        assert!(max_abs(&(new_r.matrix() - s.matrix())) < 1e-15);
    }

    #[test]
    fn swap_angle_from_duration() {
        let a = PartialSwapAngle::from_duration(1.0 / (2.0 * 47.65), 47.65).unwrap();
        assert_abs_diff_eq!(a.phi(), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(a.duration(47.65), 1.0 / 95.3, epsilon = 1e-15);
        assert!(!PartialSwapAngle::new(1.5 * PI).unwrap().in_physical_range());
    }

    #[test]
    fn controlled_v_examples() {
        let spec = ThermalReservoirSpec::new(3.0, 0.5).unwrap();
        let h = spec.hamiltonian();
        let id = controlled_v(ANCILLA, &h, 0.0, false).unwrap();
        assert!(max_abs(&(id.matrix() - CMatrix::identity(4, 4))) < 1e-15);
        assert!(controlled_v(RESERVOIR, &h, 1.0, false).is_err());
        assert!(controlled_v(ANCILLA, &h, -1.0, false).is_err());

        // control |0⟩ leaves the reservoir alone
        let u = controlled_v(ANCILLA, &h, 0.7, false).unwrap();
        let rho = tensor_compose(&[&DensityOperator::basis(QubitRegister::single("A"), 0).unwrap(), &spec.state()]).unwrap();
        let out = crate::qstate::evolve(&rho, &u).unwrap();
        assert!(max_abs(&(out.matrix() - rho.matrix())) < 1e-15);

        // t = π/ω with control |+⟩: the excited-level coherence flips sign
        let t = PI / spec.gap();
        let u = controlled_v(ANCILLA, &h, t, false).unwrap();
        let rho = tensor_compose(&[&DensityOperator::plus("A"), &spec.state()]).unwrap();
        let out = crate::qstate::evolve(&rho, &u).unwrap();
        let [p0, p1] = spec.populations();
        // basis (A, R): ⟨0,r|ρ|1,r⟩ = ½ p_r e^{+iE_r t}
        assert!((out.matrix()[(0, 2)] - c(0.5 * p0, 0.0)).norm() < 1e-14);
        assert!((out.matrix()[(1, 3)] - c(-0.5 * p1, 0.0)).norm() < 1e-14);
        let ud = controlled_v(ANCILLA, &h, t, true).unwrap();
        assert!(max_abs(&(ud.matrix() * u.matrix() - CMatrix::identity(4, 4))) < 1e-14);
    }

    fn analytic_cnot_theta(spec: &ThermalReservoirSpec, t: f64) -> Complex64 {
        let [p0, p1] = spec.populations();
        let w = spec.gap();
        c(0.5, 0.0) + 0.5 * (p0 * Complex64::from_polar(1.0, -w * t) + p1 * Complex64::from_polar(1.0, w * t))
    }

    fn interferometer_theta(u: &UnitaryOperator, spec: &ThermalReservoirSpec, t: f64) -> Complex64 {
        let circ = build_interferometer(u, &spec.hamiltonian(), t).unwrap();
        let rs = tensor_compose(&[&spec.state(), &DensityOperator::maximally_mixed(QubitRegister::single("S"))]).unwrap();
        circ.characteristic_value(&circ.input_state(&rs).unwrap()).unwrap()
    }

    #[test]
    fn interferometer_identity_and_origin() {
        let spec = ThermalReservoirSpec::new(2.0, 0.8).unwrap();
        let id = UnitaryOperator::identity(QubitRegister::new(["R", "S"]).unwrap());
        for t in [0.0, 0.3, 1.7] {
            assert!((interferometer_theta(&id, &spec, t) - ONE).norm() < 1e-14);
        }
        assert!((interferometer_theta(&cnot_process(), &spec, 0.0) - ONE).norm() < 1e-14);
    }

    #[test]
    fn interferometer_reproduces_cnot_characteristic_function() {
        let spec = ThermalReservoirSpec::new(5.0, 0.6).unwrap();
        for k in 0..16 {
            let t = k as f64 * 0.11;
            let got = interferometer_theta(&cnot_process(), &spec, t);
            assert!((got - analytic_cnot_theta(&spec, t)).norm() < 1e-13, "t = {t}");
        }
    }

    #[test]
    fn interferometer_rejects_ancilla_process() {
        let spec = ThermalReservoirSpec::new(2.0, 0.8).unwrap();
        let u = cnot("A", "R").unwrap();
        assert!(matches!(
            build_interferometer(&u, &spec.hamiltonian(), 0.1),
            Err(Error::Circuit(_))
        ));
    }
}
