//! Gibbs states, entropies and the Landauer balance.
//!
//! All entropies are in nats. The reservoir is a two-level system with
//! `H_R = diag(0, ΔE)`; `ΔE` is stored as an angular frequency (`ħ = 1`) and
//! `β` in seconds, so `βΔE` is dimensionless.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Criterion, Error, Result};
use crate::qstate::{
    eigh, eigh_matrix, evolve, partial_trace, same_register, tensor_compose, trace,
    DensityOperator, Observable, QubitRegister, UnitaryOperator,
};
use crate::{ANCILLA, RESERVOIR};

/// Tolerance for the two entropy-production identities and the bound.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Eigenvalues of the second argument of a relative entropy below this are
/// treated as outside its support.
pub const SUPPORT_TOL: f64 = 1e-14;

/// Two-level thermal reservoir: gap `ΔE` (rad/s) and inverse temperature `β` (s).
///
/// `β = ∞` is accepted as the zero-temperature limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalReservoirSpec {
    gap: f64,
    beta: f64,
}

impl ThermalReservoirSpec {
    pub fn new(gap: f64, beta: f64) -> Result<Self> {
        if !(gap.is_finite() && gap > 0.0) {
            return Err(Error::Domain(format!("reservoir gap must be positive, got {gap}")));
        }
        if beta.is_nan() || beta < 0.0 {
            return Err(Error::Domain(format!("inverse temperature must be >= 0, got {beta}")));
        }
        Ok(Self { gap, beta })
    }

    /// Temperature given as `(βħ)^{-1}` in Hz. `f = ∞` means `β = 0`.
    pub fn from_beta_inv_hz(gap: f64, beta_inv_hz: f64) -> Result<Self> {
        if beta_inv_hz.is_nan() || beta_inv_hz <= 0.0 {
            return Err(Error::Domain(format!(
                "(beta hbar)^-1 must be positive, got {beta_inv_hz}"
            )));
        }
        Self::new(gap, 1.0 / beta_inv_hz)
    }

    /// Temperature given by the reservoir preparation angle.
    pub fn from_alpha(gap: f64, alpha: f64) -> Result<Self> {
        Self::new(gap, beta_from_alpha(alpha, gap)?)
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn beta_inv_hz(&self) -> f64 {
        1.0 / self.beta
    }

    /// Dimensionless `βΔE`.
    pub fn x(&self) -> f64 {
        self.beta * self.gap
    }

    /// Ground and excited populations `(p_0, p_1)`.
    pub fn populations(&self) -> [f64; 2] {
        let x = self.x();
        if x.is_infinite() {
            return [1.0, 0.0];
        }
        [1.0 / (1.0 + (-x).exp()), 1.0 / (1.0 + x.exp())]
    }

    pub fn partition_function(&self) -> f64 {
        1.0 + (-self.x()).exp()
    }

    pub fn hamiltonian(&self) -> Observable {
        Observable::from_diagonal(QubitRegister::single(RESERVOIR), &[0.0, self.gap])
            .expect("two diagonal entries for one qubit")
    }

    pub fn state(&self) -> DensityOperator {
        DensityOperator::from_diagonal(QubitRegister::single(RESERVOIR), &self.populations())
            .expect("Boltzmann populations form a valid state")
    }
}

/// `exp(−βH)/Z` built in the eigenbasis of `H`.
///
/// `β = ∞` returns the normalized projector onto the ground space.
pub fn gibbs_state(hamiltonian: &Observable, beta: f64) -> Result<DensityOperator> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::Domain(format!("inverse temperature must be >= 0, got {beta}")));
    }
    let eig = eigh(hamiltonian);
    let e_min = eig.values[0];
    let scale = eig.values.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let weights: Vec<f64> = eig
        .values
        .iter()
        .map(|&e| {
            let shifted = e - e_min;
            if beta.is_infinite() {
                if shifted <= 1e-12 * scale {
                    1.0
                } else {
                    0.0
                }
            } else {
                (-beta * shifted).exp()
            }
        })
        .collect();
    let z: f64 = weights.iter().sum();
    let mut k = 0;
    let matrix = eig.map(|_| {
        let w = weights[k] / z;
        k += 1;
        Complex64::new(w, 0.0)
    });
    DensityOperator::new(hamiltonian.register().clone(), matrix)
}

/// `β = log[cot²(α/2)]/ΔE` for `α ∈ (0, π/2]`.
pub fn beta_from_alpha(alpha: f64, gap: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::Domain(format!("alpha = {alpha} outside (0, pi/2]")));
    }
    if !(gap.is_finite() && gap > 0.0) {
        return Err(Error::Domain(format!("reservoir gap must be positive, got {gap}")));
    }
    if alpha == std::f64::consts::FRAC_PI_2 {
        return Ok(0.0);
    }
    let t = (alpha / 2.0).tan();
    Ok((-2.0 * t.ln() / gap).max(0.0))
}

/// Inverse of [`beta_from_alpha`]: `α = 2 atan(e^{−βΔE/2})`.
pub fn alpha_from_beta(beta: f64, gap: f64) -> Result<f64> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::Domain(format!("inverse temperature must be >= 0, got {beta}")));
    }
    Ok(2.0 * (-beta * gap / 2.0).exp().atan())
}

fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|&l| l.max(0.0))
        .filter(|&l| l > 0.0)
        .map(|l| -l * l.ln())
        .sum()
}

/// `S(ρ) = −tr ρ log ρ` with `0 log 0 = 0`; round-off negatives are clipped.
pub fn von_neumann_entropy(state: &DensityOperator) -> f64 {
    entropy_of_spectrum(&state.eigenvalues())
}

/// `ΔS = S(before) − S(after)`; positive when information was erased.
pub fn entropy_change(before: &DensityOperator, after: &DensityOperator) -> Result<f64> {
    same_register(before.register(), after.register())?;
    Ok(von_neumann_entropy(before) - von_neumann_entropy(after))
}

/// `⟨Q⟩ = tr[H_R(ρ'_R − ρ_R)]`.
pub fn average_heat(
    hamiltonian: &Observable,
    before: &DensityOperator,
    after: &DensityOperator,
) -> Result<f64> {
    same_register(hamiltonian.register(), before.register())?;
    same_register(hamiltonian.register(), after.register())?;
    let diff = after.matrix() - before.matrix();
    let q = trace(&(hamiltonian.matrix() * diff));
    let scale = 1.0 + crate::qstate::max_abs(hamiltonian.matrix());
    if q.im.abs() > 1e-10 * scale {
        return Err(Error::Validation(format!("average heat has imaginary part {:e}", q.im)));
    }
    Ok(q.re)
}

/// Relative entropy, or a tag when the support condition fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelativeEntropy {
    Finite(f64),
    Divergent,
}

impl RelativeEntropy {
    pub fn value(self) -> f64 {
        match self {
            RelativeEntropy::Finite(v) => v,
            RelativeEntropy::Divergent => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, RelativeEntropy::Finite(_))
    }
}

/// `D(x‖y) = −tr[x log y] − S(x)`.
pub fn relative_entropy(x: &DensityOperator, y: &DensityOperator) -> Result<RelativeEntropy> {
    same_register(x.register(), y.register())?;
    let ey = eigh_matrix(y.matrix());
    let mut cross = 0.0;
    for (k, &lambda) in ey.values.iter().enumerate() {
        let v = ey.vector(k);
        let weight = (v.adjoint() * x.matrix() * &v)[(0, 0)].re;
        if lambda <= SUPPORT_TOL {
            if weight > SUPPORT_TOL {
                return Ok(RelativeEntropy::Divergent);
            }
            continue;
        }
        cross -= weight * lambda.ln();
    }
    Ok(RelativeEntropy::Finite(cross - von_neumann_entropy(x)))
}

/// `I(a:b) = S(a) + S(b) − S(ab)` for a bipartition of the joint register.
pub fn mutual_information(joint: &DensityOperator, a: &[&str], b: &[&str]) -> Result<f64> {
    let ra = joint.register().subregister(a)?;
    let rb = joint.register().subregister(b)?;
    let union = ra.union(&rb)?;
    if &union != joint.register() {
        return Err(Error::UnknownLabel(format!(
            "partition {a:?} | {b:?} does not cover {:?}",
            joint.register().labels()
        )));
    }
    let sa = von_neumann_entropy(&partial_trace(joint, a)?);
    let sb = von_neumann_entropy(&partial_trace(joint, b)?);
    Ok(sa + sb - von_neumann_entropy(joint))
}

/// Both sides of the Landauer balance for one process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandauerReport {
    /// `S(ρ_S) − S(ρ'_S)`.
    pub delta_s: f64,
    /// `β⟨Q⟩`.
    pub beta_q: f64,
    /// `β⟨Q⟩ − ΔS`.
    pub sigma: f64,
    /// `I(ρ'_S : ρ'_R)`.
    pub mutual_info: f64,
    /// `D(ρ'_R ‖ ρ_R)`.
    pub rel_entropy: f64,
}

impl LandauerReport {
    /// Checks `Σ = I + D` and `Σ ≥ 0` within `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let decomposition = self.mutual_info + self.rel_entropy;
        if (self.sigma - decomposition).abs() > tol {
            return Err(Error::Identity(format!(
                "sigma = {} but I + D = {} (difference {:e})",
                self.sigma,
                decomposition,
                self.sigma - decomposition
            )));
        }
        if (self.sigma - (self.beta_q - self.delta_s)).abs() > tol {
            return Err(Error::Identity(format!(
                "sigma = {} but beta Q - delta S = {}",
                self.sigma,
                self.beta_q - self.delta_s
            )));
        }
        if self.sigma < -tol {
            return Err(Error::Identity(format!("Landauer bound violated: sigma = {}", self.sigma)));
        }
        Ok(())
    }
}

/// Runs `ρ_S ⊗ ρ_R → U(ρ_S ⊗ ρ_R)U†` and fills a [`LandauerReport`].
///
/// `ρ_R` must be the Gibbs state of `h_r` at the finite inverse temperature
/// `beta`, and `u` must act inside the system-reservoir register.
pub fn landauer_analyze(
    h_r: &Observable,
    beta: f64,
    rho_s: &DensityOperator,
    rho_r: &DensityOperator,
    u: &UnitaryOperator,
) -> Result<LandauerReport> {
    if !rho_s.register().is_disjoint(rho_r.register()) {
        return Err(Error::Protocol {
            criterion: Criterion::SystemAndReservoir,
            detail: "system and reservoir share qubits".into(),
        });
    }
    if h_r.register() != rho_r.register() {
        return Err(Error::Protocol {
            criterion: Criterion::SystemAndReservoir,
            detail: "reservoir Hamiltonian and state live on different qubits".into(),
        });
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Protocol {
            criterion: Criterion::GibbsReservoir,
            detail: format!("entropy production needs a finite beta >= 0, got {beta}"),
        });
    }
    let gibbs = gibbs_state(h_r, beta)?;
    let dist = gibbs.trace_distance(rho_r)?;
    if dist > IDENTITY_TOL {
        return Err(Error::Protocol {
            criterion: Criterion::GibbsReservoir,
            detail: format!("reservoir state is {dist:e} away from its Gibbs state"),
        });
    }
    let joint = tensor_compose(&[rho_s, rho_r])?;
    if !u.register().is_subset_of(joint.register()) {
        return Err(Error::Protocol {
            criterion: Criterion::UnitaryInteraction,
            detail: format!(
                "unitary acts on {:?}, outside the system-reservoir register",
                u.register().labels()
            ),
        });
    }
    let after = evolve(&joint, u)?;
    let s_labels: Vec<&str> = rho_s.register().labels().iter().map(String::as_str).collect();
    let r_labels: Vec<&str> = rho_r.register().labels().iter().map(String::as_str).collect();
    let rho_s_after = partial_trace(&after, &s_labels)?;
    let rho_r_after = partial_trace(&after, &r_labels)?;

    let delta_s = entropy_change(rho_s, &rho_s_after)?;
    let beta_q = beta * average_heat(h_r, rho_r, &rho_r_after)?;
    let mutual_info = mutual_information(&after, &s_labels, &r_labels)?;
    let rel_entropy = match relative_entropy(&rho_r_after, rho_r)? {
        RelativeEntropy::Finite(d) => d,
        RelativeEntropy::Divergent => {
            return Err(Error::Identity(
                "final reservoir state leaves the support of the initial one".into(),
            ))
        }
    };
    let report = LandauerReport {
        delta_s,
        beta_q,
        sigma: beta_q - delta_s,
        mutual_info,
        rel_entropy,
    };
    report.check(IDENTITY_TOL)?;
    Ok(report)
}

/// A validated Landauer process: thermal reservoir `R`, system state and the
/// system-reservoir unitary.
#[derive(Debug, Clone)]
pub struct LandauerProcess {
    reservoir: ThermalReservoirSpec,
    rho_s: DensityOperator,
    unitary: UnitaryOperator,
}

impl LandauerProcess {
    pub fn new(
        reservoir: ThermalReservoirSpec,
        rho_s: DensityOperator,
        unitary: UnitaryOperator,
    ) -> Result<Self> {
        let sys = rho_s.register();
        if sys.contains(RESERVOIR) || sys.contains(ANCILLA) {
            return Err(Error::Protocol {
                criterion: Criterion::SystemAndReservoir,
                detail: format!(
                    "system register {:?} overlaps the reservoir or ancilla labels",
                    sys.labels()
                ),
            });
        }
        let rs = sys.union(&QubitRegister::single(RESERVOIR))?;
        if !unitary.register().is_subset_of(&rs) {
            return Err(Error::Protocol {
                criterion: Criterion::UnitaryInteraction,
                detail: format!(
                    "unitary acts on {:?}, outside {:?}",
                    unitary.register().labels(),
                    rs.labels()
                ),
            });
        }
        let unitary = unitary.embed_in(&rs)?;
        Ok(Self {
            reservoir,
            rho_s,
            unitary,
        })
    }

    /// Builds a process from a joint initial state, which must factorize into
    /// a system part and a Gibbs reservoir.
    pub fn from_joint(
        reservoir: ThermalReservoirSpec,
        joint: &DensityOperator,
        unitary: UnitaryOperator,
    ) -> Result<Self> {
        if !joint.register().contains(RESERVOIR) || joint.register().len() < 2 {
            return Err(Error::Protocol {
                criterion: Criterion::SystemAndReservoir,
                detail: "joint state needs a reservoir and at least one system qubit".into(),
            });
        }
        let sys_labels = joint
            .register()
            .complement(&QubitRegister::single(RESERVOIR));
        let sys_refs: Vec<&str> = sys_labels.iter().map(String::as_str).collect();
        let rho_s = partial_trace(joint, &sys_refs)?;
        let rho_r = partial_trace(joint, &[RESERVOIR])?;
        let product = tensor_compose(&[&rho_s, &rho_r])?;
        let corr = product.trace_distance(joint)?;
        if corr > IDENTITY_TOL {
            return Err(Error::Protocol {
                criterion: Criterion::Uncorrelated,
                detail: format!("initial state is correlated (distance {corr:e} from product)"),
            });
        }
        let gibbs_dist = rho_r.trace_distance(&reservoir.state())?;
        if gibbs_dist > IDENTITY_TOL {
            return Err(Error::Protocol {
                criterion: Criterion::GibbsReservoir,
                detail: format!("reservoir marginal is {gibbs_dist:e} from the Gibbs state"),
            });
        }
        Self::new(reservoir, rho_s, unitary)
    }

    pub fn reservoir(&self) -> &ThermalReservoirSpec {
        &self.reservoir
    }

    pub fn rho_s(&self) -> &DensityOperator {
        &self.rho_s
    }

    pub fn rho_r(&self) -> DensityOperator {
        self.reservoir.state()
    }

    pub fn hamiltonian(&self) -> Observable {
        self.reservoir.hamiltonian()
    }

    /// The unitary, embedded on the full system-reservoir register.
    pub fn unitary(&self) -> &UnitaryOperator {
        &self.unitary
    }

    pub fn system_labels(&self) -> Vec<&str> {
        self.rho_s.register().labels().iter().map(String::as_str).collect()
    }

    pub fn initial_state(&self) -> DensityOperator {
        tensor_compose(&[&self.rho_s, &self.rho_r()]).expect("disjoint by construction")
    }

    pub fn final_state(&self) -> DensityOperator {
        evolve(&self.initial_state(), &self.unitary).expect("unitary lives on the joint register")
    }

    pub fn analyze(&self) -> Result<LandauerReport> {
        landauer_analyze(
            &self.hamiltonian(),
            self.reservoir.beta(),
            &self.rho_s,
            &self.rho_r(),
            &self.unitary,
        )
    }
}
