//! Dense complex linear algebra on labeled qubit registers.
//!
//! Every operator carries the [`QubitRegister`] it acts on. Registers keep
//! their labels in canonical (sorted) order, so the three-qubit register is
//! always `A ⊗ R ⊗ S` no matter how it was assembled. The first label is the
//! most significant bit of a computational-basis index.
//!
//! Operators on a sub-register are embedded (identity on the remaining
//! qubits, permuted into canonical order) whenever they meet a state on a
//! larger register.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const UNITARITY_TOL: f64 = 1e-12;
/// Smallest eigenvalue a density operator may have before it is rejected.
pub const NEGATIVITY_TOL: f64 = 1e-10;
/// Largest imaginary residue tolerated in an expectation value.
pub const EXPECTATION_IMAG_TOL: f64 = 1e-10;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Ordered set of qubit labels with a fixed tensor position per label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QubitRegister {
    labels: Vec<String>,
}

impl QubitRegister {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Validation("a register needs at least one qubit".into()));
        }
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Composition(format!("label `{}` appears twice", w[0])));
        }
        Ok(Self { labels })
    }

    pub fn single(label: &str) -> Self {
        Self {
            labels: vec![label.to_string()],
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        1 << self.labels.len()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn is_subset_of(&self, other: &QubitRegister) -> bool {
        self.labels.iter().all(|l| other.contains(l))
    }

    pub fn is_disjoint(&self, other: &QubitRegister) -> bool {
        !self.labels.iter().any(|l| other.contains(l))
    }

    /// Union of two disjoint registers.
    pub fn union(&self, other: &QubitRegister) -> Result<Self> {
        if let Some(l) = self.labels.iter().find(|l| other.contains(l)) {
            return Err(Error::Composition(format!("label `{l}` is shared by both factors")));
        }
        Self::new(self.labels.iter().chain(other.labels.iter()).cloned())
    }

    /// The sub-register holding `labels`, all of which must be present.
    pub fn subregister(&self, labels: &[&str]) -> Result<Self> {
        for l in labels {
            self.position(l)?;
        }
        Self::new(labels.iter().copied())
    }

    /// Labels of `self` not in `other`.
    pub fn complement(&self, other: &QubitRegister) -> Vec<String> {
        self.labels
            .iter()
            .filter(|l| !other.contains(l))
            .cloned()
            .collect()
    }

    /// Value (0 or 1) of the qubit at `pos` in basis index `index`.
    pub fn bit(&self, index: usize, pos: usize) -> usize {
        (index >> (self.len() - 1 - pos)) & 1
    }
}

/// Maps each full-register basis index to (sub-register index, rest index).
fn split_indices(full: &QubitRegister, sub: &QubitRegister) -> Result<Vec<(usize, usize)>> {
    let sub_pos: Vec<usize> = sub
        .labels()
        .iter()
        .map(|l| full.position(l))
        .collect::<Result<_>>()?;
    let rest_pos: Vec<usize> = (0..full.len()).filter(|p| !sub_pos.contains(p)).collect();
    let gather = |index: usize, positions: &[usize]| {
        positions
            .iter()
            .fold(0usize, |acc, &p| (acc << 1) | full.bit(index, p))
    };
    Ok((0..full.dim())
        .map(|i| (gather(i, &sub_pos), gather(i, &rest_pos)))
        .collect())
}

/// Embeds `matrix` (acting on `sub`) into `full`, identity elsewhere.
pub(crate) fn embed(sub: &QubitRegister, matrix: &CMatrix, full: &QubitRegister) -> Result<CMatrix> {
    if matrix.nrows() != sub.dim() || matrix.ncols() != sub.dim() {
        return Err(Error::Shape(format!(
            "matrix is {}x{} but register {:?} has dimension {}",
            matrix.nrows(),
            matrix.ncols(),
            sub.labels(),
            sub.dim()
        )));
    }
    if sub == full {
        return Ok(matrix.clone());
    }
    if !sub.is_subset_of(full) {
        let missing = sub.complement(full);
        return Err(Error::UnknownLabel(missing.join(",")));
    }
    let idx = split_indices(full, sub)?;
    let d = full.dim();
    Ok(CMatrix::from_fn(d, d, |i, j| {
        let (si, ri) = idx[i];
        let (sj, rj) = idx[j];
        if ri == rj {
            matrix[(si, sj)]
        } else {
            ZERO
        }
    }))
}

pub(crate) fn hermiticity_error(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn unitarity_error(m: &CMatrix) -> f64 {
    let p = m.adjoint() * m;
    let id = CMatrix::identity(m.nrows(), m.ncols());
    (p - id).iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub(crate) fn trace(m: &CMatrix) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

fn check_square(register: &QubitRegister, matrix: &CMatrix) -> Result<()> {
    let d = register.dim();
    if matrix.nrows() != d || matrix.ncols() != d {
        return Err(Error::Shape(format!(
            "expected {d}x{d} matrix for register {:?}, got {}x{}",
            register.labels(),
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    Ok(())
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending and
/// eigenvectors as the matching columns.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigh {
    pub fn vector(&self, k: usize) -> CMatrix {
        self.vectors.columns(k, 1).into_owned()
    }

    /// Rebuilds `Σ f(λ_i) v_i v_i†`.
    pub fn map(&self, mut f: impl FnMut(f64) -> Complex64) -> CMatrix {
        let d = self.values.len();
        let mut out = CMatrix::zeros(d, d);
        for (k, &lambda) in self.values.iter().enumerate() {
            let v = self.vector(k);
            out += (&v * v.adjoint()) * f(lambda);
        }
        out
    }
}

pub(crate) fn eigh_matrix(m: &CMatrix) -> Eigh {
    let se = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let d = m.nrows();
    let vectors = CMatrix::from_fn(d, d, |i, j| se.eigenvectors[(i, order[j])]);
    Eigh {
        values: order.iter().map(|&k| se.eigenvalues[k]).collect(),
        vectors,
    }
}

/// Common access to register-tagged matrices.
pub trait RegisterOperator: Sized {
    fn register(&self) -> &QubitRegister;
    fn matrix(&self) -> &CMatrix;
    /// Assembles a value whose validity follows from how it was built.
    #[doc(hidden)]
    fn assemble(register: QubitRegister, matrix: CMatrix) -> Self;
}

macro_rules! register_operator {
    ($ty:ident) => {
        impl RegisterOperator for $ty {
            fn register(&self) -> &QubitRegister {
                &self.register
            }
            fn matrix(&self) -> &CMatrix {
                &self.matrix
            }
            fn assemble(register: QubitRegister, matrix: CMatrix) -> Self {
                Self { register, matrix }
            }
        }

        impl $ty {
            pub fn register(&self) -> &QubitRegister {
                &self.register
            }
            pub fn matrix(&self) -> &CMatrix {
                &self.matrix
            }
            pub fn dim(&self) -> usize {
                self.register.dim()
            }
        }
    };
}

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    register: QubitRegister,
    matrix: CMatrix,
}
register_operator!(DensityOperator);

impl DensityOperator {
    pub fn new(register: QubitRegister, matrix: CMatrix) -> Result<Self> {
        check_square(&register, &matrix)?;
        let herm = hermiticity_error(&matrix);
        if herm > HERMITIAN_TOL {
            return Err(Error::Validation(format!("state is not Hermitian (residual {herm:e})")));
        }
        let tr = trace(&matrix);
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::Validation(format!("state trace is {tr}, expected 1")));
        }
        let min = eigh_matrix(&matrix).values[0];
        if min < -NEGATIVITY_TOL {
            return Err(Error::Validation(format!("state has negative eigenvalue {min:e}")));
        }
        Ok(Self { register, matrix })
    }

    pub fn from_diagonal(register: QubitRegister, populations: &[f64]) -> Result<Self> {
        if populations.len() != register.dim() {
            return Err(Error::Shape(format!(
                "{} populations for a register of dimension {}",
                populations.len(),
                register.dim()
            )));
        }
        let d = register.dim();
        let m = CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::new(populations[i], 0.0)
            } else {
                ZERO
            }
        });
        Self::new(register, m)
    }

    /// `|ψ⟩⟨ψ|` for a normalized amplitude vector.
    pub fn pure(register: QubitRegister, amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() != register.dim() {
            return Err(Error::Shape(format!(
                "{} amplitudes for a register of dimension {}",
                amplitudes.len(),
                register.dim()
            )));
        }
        let v = CMatrix::from_column_slice(amplitudes.len(), 1, amplitudes);
        Self::new(register, &v * v.adjoint())
    }

    pub fn basis(register: QubitRegister, index: usize) -> Result<Self> {
        let d = register.dim();
        if index >= d {
            return Err(Error::Shape(format!("basis index {index} out of range for dimension {d}")));
        }
        let mut pops = vec![0.0; d];
        pops[index] = 1.0;
        Self::from_diagonal(register, &pops)
    }

    pub fn maximally_mixed(register: QubitRegister) -> Self {
        let d = register.dim();
        let matrix = CMatrix::identity(d, d) * Complex64::new(1.0 / d as f64, 0.0);
        Self { register, matrix }
    }

    /// `|+⟩⟨+|` on a single qubit.
    pub fn plus(label: &str) -> Self {
        let matrix = CMatrix::from_element(2, 2, Complex64::new(0.5, 0.0));
        Self {
            register: QubitRegister::single(label),
            matrix,
        }
    }

    /// Spectrum, ascending. Not clipped.
    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh_matrix(&self.matrix).values
    }

    pub fn purity(&self) -> f64 {
        trace(&(&self.matrix * &self.matrix)).re
    }

    /// `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityOperator) -> Result<f64> {
        same_register(self.register(), other.register())?;
        let diff = &self.matrix - &other.matrix;
        Ok(0.5 * eigh_matrix(&diff).values.iter().map(|l| l.abs()).sum::<f64>())
    }

    /// Uhlmann fidelity `(tr √(√ρ σ √ρ))²`.
    pub fn fidelity(&self, other: &DensityOperator) -> Result<f64> {
        same_register(self.register(), other.register())?;
        let sqrt_rho = eigh_matrix(&self.matrix).map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
        let inner = &sqrt_rho * &other.matrix * &sqrt_rho;
        let inner = (&inner + inner.adjoint()) * Complex64::new(0.5, 0.0);
        let root: f64 = eigh_matrix(&inner).values.iter().map(|l| l.max(0.0).sqrt()).sum();
        Ok(root * root)
    }

    /// Hermitian-symmetrized copy; used after operations that preserve
    /// validity analytically.
    pub(crate) fn from_evolved(register: QubitRegister, matrix: CMatrix) -> Self {
        let matrix = (&matrix + matrix.adjoint()) * Complex64::new(0.5, 0.0);
        Self { register, matrix }
    }
}

pub(crate) fn same_register(a: &QubitRegister, b: &QubitRegister) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!(
            "register {:?} does not match {:?}",
            a.labels(),
            b.labels()
        )));
    }
    Ok(())
}

/// Matrix with `U†U = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOperator {
    register: QubitRegister,
    matrix: CMatrix,
}
register_operator!(UnitaryOperator);

impl UnitaryOperator {
    pub fn new(register: QubitRegister, matrix: CMatrix) -> Result<Self> {
        check_square(&register, &matrix)?;
        let err = unitarity_error(&matrix);
        if err > UNITARITY_TOL {
            return Err(Error::Validation(format!("matrix is not unitary (residual {err:e})")));
        }
        Ok(Self { register, matrix })
    }

    pub fn identity(register: QubitRegister) -> Self {
        let d = register.dim();
        Self {
            register,
            matrix: CMatrix::identity(d, d),
        }
    }

    pub fn dagger(&self) -> Self {
        Self {
            register: self.register.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    /// This operator on a larger register.
    pub fn embed_in(&self, register: &QubitRegister) -> Result<Self> {
        Ok(Self {
            register: register.clone(),
            matrix: embed(&self.register, &self.matrix, register)?,
        })
    }

    /// `next · self` on the union of both registers.
    pub fn then(&self, next: &UnitaryOperator) -> Result<Self> {
        let register = if self.register.is_subset_of(&next.register) {
            next.register.clone()
        } else if next.register.is_subset_of(&self.register) {
            self.register.clone()
        } else {
            let extra: Vec<String> = next.register.complement(&self.register);
            QubitRegister::new(self.register.labels().iter().cloned().chain(extra))?
        };
        let a = embed(&self.register, &self.matrix, &register)?;
        let b = embed(&next.register, &next.matrix, &register)?;
        Ok(Self {
            register,
            matrix: b * a,
        })
    }

    /// Drops qubits on which this operator acts as identity up to a global
    /// phase. Fails if the dropped qubits are touched.
    pub fn restrict_to(&self, labels: &[&str]) -> Result<Self> {
        let keep = self.register.subregister(labels)?;
        let idx = split_indices(&self.register, &keep)?;
        let dk = keep.dim();
        let mut block = CMatrix::zeros(dk, dk);
        for (i, &(si, ri)) in idx.iter().enumerate() {
            for (j, &(sj, rj)) in idx.iter().enumerate() {
                if ri == 0 && rj == 0 {
                    block[(si, sj)] = self.matrix[(i, j)];
                }
            }
        }
        let rebuilt = embed(&keep, &block, &self.register)?;
        let residual = max_abs(&(&rebuilt - &self.matrix));
        if residual > 1e-9 {
            return Err(Error::Validation(format!(
                "operator acts non-trivially on {:?} (residual {residual:e})",
                self.register.complement(&keep)
            )));
        }
        UnitaryOperator::new(keep, block)
    }

    /// Global-phase-insensitive distance `1 − |tr(U†V)|/d`.
    pub fn process_distance(&self, other: &UnitaryOperator) -> Result<f64> {
        same_register(&self.register, &other.register)?;
        let overlap = trace(&(self.matrix.adjoint() * &other.matrix)).norm();
        Ok((1.0 - overlap / self.dim() as f64).max(0.0))
    }
}

/// Hermitian operator: a Pauli readout or a Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    register: QubitRegister,
    matrix: CMatrix,
}
register_operator!(Observable);

impl Observable {
    pub fn new(register: QubitRegister, matrix: CMatrix) -> Result<Self> {
        check_square(&register, &matrix)?;
        let herm = hermiticity_error(&matrix);
        if herm > HERMITIAN_TOL {
            return Err(Error::Validation(format!(
                "observable is not Hermitian (residual {herm:e})"
            )));
        }
        Ok(Self { register, matrix })
    }

    pub fn from_diagonal(register: QubitRegister, diagonal: &[f64]) -> Result<Self> {
        if diagonal.len() != register.dim() {
            return Err(Error::Shape(format!(
                "{} diagonal entries for dimension {}",
                diagonal.len(),
                register.dim()
            )));
        }
        let d = register.dim();
        let matrix = CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::new(diagonal[i], 0.0)
            } else {
                ZERO
            }
        });
        Ok(Self { register, matrix })
    }

    pub fn identity(register: QubitRegister) -> Self {
        let d = register.dim();
        Self {
            register,
            matrix: CMatrix::identity(d, d),
        }
    }

    pub fn pauli_x(label: &str) -> Self {
        Self::single(label, [[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn pauli_y(label: &str) -> Self {
        Self::single(label, [[ZERO, -I], [I, ZERO]])
    }

    pub fn pauli_z(label: &str) -> Self {
        Self::single(label, [[ONE, ZERO], [ZERO, -ONE]])
    }

    fn single(label: &str, m: [[Complex64; 2]; 2]) -> Self {
        Self {
            register: QubitRegister::single(label),
            matrix: CMatrix::from_fn(2, 2, |i, j| m[i][j]),
        }
    }

    pub fn embed_in(&self, register: &QubitRegister) -> Result<Self> {
        Ok(Self {
            register: register.clone(),
            matrix: embed(&self.register, &self.matrix, register)?,
        })
    }

    /// `exp(−i·self·t)`.
    pub fn propagator(&self, t: f64) -> UnitaryOperator {
        let matrix = eigh_matrix(&self.matrix).map(|e| Complex64::from_polar(1.0, -e * t));
        UnitaryOperator {
            register: self.register.clone(),
            matrix,
        }
    }
}

/// Completely positive trace-preserving map in Kraus form.
#[derive(Debug, Clone)]
pub struct QuantumChannel {
    register: QubitRegister,
    kraus: Vec<CMatrix>,
}

impl QuantumChannel {
    pub fn new(register: QubitRegister, kraus: Vec<CMatrix>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::Validation("a channel needs at least one Kraus operator".into()));
        }
        for k in &kraus {
            check_square(&register, k)?;
        }
        let d = register.dim();
        let sum = kraus
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        let err = max_abs(&(sum - CMatrix::identity(d, d)));
        if err > UNITARITY_TOL {
            return Err(Error::Validation(format!(
                "Kraus operators are not complete (residual {err:e})"
            )));
        }
        Ok(Self { register, kraus })
    }

    pub fn identity(register: QubitRegister) -> Self {
        let d = register.dim();
        Self {
            register,
            kraus: vec![CMatrix::identity(d, d)],
        }
    }

    pub fn from_unitary(u: &UnitaryOperator) -> Self {
        Self {
            register: u.register().clone(),
            kraus: vec![u.matrix().clone()],
        }
    }

    /// Single-qubit phase damping that multiplies the coherence by `factor`.
    pub fn phase_damping(label: &str, factor: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&factor) {
            return Err(Error::Domain(format!("coherence factor {factor} outside [0, 1]")));
        }
        let k0 = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, Complex64::new(factor, 0.0)]);
        let tail = (1.0 - factor * factor).max(0.0).sqrt();
        let k1 = CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, Complex64::new(tail, 0.0)]);
        Self::new(QubitRegister::single(label), vec![k0, k1])
    }

    pub fn register(&self) -> &QubitRegister {
        &self.register
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }
}

/// Tensor product of factors on disjoint registers, in canonical order.
pub fn tensor_compose<T: RegisterOperator>(factors: &[&T]) -> Result<T> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::Composition("nothing to compose".into()))?;
    let mut register = first.register().clone();
    for f in rest {
        register = register.union(f.register())?;
    }
    let maps: Vec<Vec<(usize, usize)>> = factors
        .iter()
        .map(|f| split_indices(&register, f.register()))
        .collect::<Result<_>>()?;
    let d = register.dim();
    let matrix = CMatrix::from_fn(d, d, |i, j| {
        factors
            .iter()
            .zip(&maps)
            .map(|(f, m)| f.matrix()[(m[i].0, m[j].0)])
            .product()
    });
    Ok(T::assemble(register, matrix))
}

/// Reduced state on the `keep` labels.
pub fn partial_trace(state: &DensityOperator, keep: &[&str]) -> Result<DensityOperator> {
    let kept = state.register().subregister(keep)?;
    if &kept == state.register() {
        return Ok(state.clone());
    }
    let idx = split_indices(state.register(), &kept)?;
    let mut out = CMatrix::zeros(kept.dim(), kept.dim());
    for (i, &(si, ri)) in idx.iter().enumerate() {
        for (j, &(sj, rj)) in idx.iter().enumerate() {
            if ri == rj {
                out[(si, sj)] += state.matrix()[(i, j)];
            }
        }
    }
    Ok(DensityOperator::from_evolved(kept, out))
}

/// `U ρ U†`, embedding `U` into the state's register.
pub fn evolve(state: &DensityOperator, u: &UnitaryOperator) -> Result<DensityOperator> {
    let m = embed(u.register(), u.matrix(), state.register())?;
    let out = &m * state.matrix() * m.adjoint();
    Ok(DensityOperator::from_evolved(state.register().clone(), out))
}

/// `Σ K ρ K†`.
pub fn apply_channel(state: &DensityOperator, channel: &QuantumChannel) -> Result<DensityOperator> {
    let d = state.dim();
    let mut out = CMatrix::zeros(d, d);
    for k in channel.kraus() {
        let m = embed(channel.register(), k, state.register())?;
        out += &m * state.matrix() * m.adjoint();
    }
    Ok(DensityOperator::from_evolved(state.register().clone(), out))
}

/// `tr(ρ O)`.
pub fn expectation(state: &DensityOperator, obs: &Observable) -> Result<f64> {
    let m = embed(obs.register(), obs.matrix(), state.register())?;
    let value = trace(&(state.matrix() * m));
    if value.im.abs() > EXPECTATION_IMAG_TOL {
        return Err(Error::Validation(format!(
            "expectation has imaginary residue {:e}",
            value.im
        )));
    }
    Ok(value.re)
}

pub fn eigh(obs: &Observable) -> Eigh {
    eigh_matrix(obs.matrix())
}
