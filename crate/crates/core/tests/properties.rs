mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use landauer_core::expharness::{gamma_cnot, gamma_swap, invert_gamma, DEFAULT_GAP};
use landauer_core::gates::{self, PartialSwapAngle};
use landauer_core::heatstats::{
    char_fn_direct, char_fn_value, invert_to_distribution, mixed_system_process, tpm_distribution,
    total_variation, TimeGrid,
};
use landauer_core::nmrsim::{
    compile_pulse_program, gradient_channel, phase_damping_evolution, pseudopure, z_compensation,
    GateTarget, MoleculeSpec, NoiseSpec,
};
use landauer_core::qstate::{
    apply_channel, evolve, partial_trace, tensor_compose, CMatrix, DensityOperator, QubitRegister,
    UnitaryOperator,
};
use landauer_core::thermo::{
    average_heat, mutual_information, relative_entropy, von_neumann_entropy, LandauerProcess,
    ThermalReservoirSpec,
};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

fn reservoir(x: f64) -> ThermalReservoirSpec {
    ThermalReservoirSpec::new(DEFAULT_GAP, x / DEFAULT_GAP).unwrap()
}

fn random_process(seed: u64, x: f64) -> LandauerProcess {
    let mut rng = common::rng(seed);
    let u = common::haar_unitary(&mut rng, common::rs());
    let rho_s = common::random_state(&mut rng, common::s());
    LandauerProcess::new(reservoir(x), rho_s, u).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn partial_swaps_compose(a in 0.0..PI, b in 0.0..PI) {
        let ua = gates::partial_swap_process(a).unwrap();
        let ub = gates::partial_swap_process(b).unwrap();
        let uab = gates::partial_swap_process(a + b).unwrap();
        let d = common::max_diff(&(ua.matrix() * ub.matrix()), uab.matrix());
        prop_assert!(d < 1e-14, "deviation {d:e}");
    }

    #[test]
    fn partial_swap_commutes_with_swap(phi in -2.0 * PI..2.0 * PI) {
        let u = gates::partial_swap_process(phi).unwrap();
        let swap = gates::partial_swap_process(PI).unwrap();
        let c = common::max_diff(&(u.matrix() * swap.matrix()), &(swap.matrix() * u.matrix()));
        prop_assert!(c < 1e-14);
        let id = u.matrix() * u.matrix().adjoint();
        let e = common::max_diff(&id, &CMatrix::identity(4, 4));
        prop_assert!(e < 1e-14);
    }

    #[test]
    fn entropy_is_bounded(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let rho = common::random_state(&mut rng, common::rs());
        let s = von_neumann_entropy(&rho);
        prop_assert!(s >= -1e-12 && s <= 4f64.ln() + 1e-12);
    }

    #[test]
    fn relative_entropy_is_nonnegative(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let a = common::random_state(&mut rng, common::rs());
        let b = common::random_state(&mut rng, common::rs());
        let d = relative_entropy(&a, &b).unwrap();
        prop_assert!(d.is_finite());
        prop_assert!(d.value() >= -1e-12);
        prop_assert!(relative_entropy(&a, &a).unwrap().value().abs() < 1e-10);
    }

    #[test]
    fn mutual_information_is_nonnegative(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let joint = common::random_state(&mut rng, common::rs());
        let i = mutual_information(&joint, &["R"], &["S"]).unwrap();
        prop_assert!(i >= -1e-12);
        let product = tensor_compose(&[
            &partial_trace(&joint, &["R"]).unwrap(),
            &partial_trace(&joint, &["S"]).unwrap(),
        ]).unwrap();
        prop_assert!(mutual_information(&product, &["R"], &["S"]).unwrap().abs() < 1e-10);
    }

    #[test]
    fn landauer_balance_holds(seed in any::<u64>(), x in 0.0..6.0f64) {
        let r = random_process(seed, x).analyze().unwrap();
        prop_assert!((r.sigma - (r.mutual_info + r.rel_entropy)).abs() < 1e-10);
        prop_assert!((r.sigma - (r.beta_q - r.delta_s)).abs() < 1e-10);
        prop_assert!(r.sigma >= -1e-10);
    }

    #[test]
    fn average_heat_matches_distribution_mean(seed in any::<u64>(), x in 0.0..6.0f64) {
        let p = random_process(seed, x);
        let before = p.rho_r();
        let after = partial_trace(&p.final_state(), &["R"]).unwrap();
        let q = average_heat(&p.hamiltonian(), &before, &after).unwrap();
        let dist = tpm_distribution(&p).unwrap();
        prop_assert!((dist.mean() - q).abs() < 1e-10 * (1.0 + q.abs()));
    }

    #[test]
    fn characteristic_function_is_hermitian(seed in any::<u64>(), t in 0.0..0.05f64) {
        let p = random_process(seed, 2.0);
        let a = char_fn_value(&p, t).unwrap();
        let b = char_fn_value(&p, -t).unwrap();
        prop_assert!((a - b.conj()).norm() < 1e-12);
        prop_assert!((char_fn_value(&p, 0.0).unwrap() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn inversion_recovers_tpm(seed in any::<u64>(), x in 0.0..6.0f64) {
        let p = random_process(seed, x);
        let grid = TimeGrid::default_for(DEFAULT_GAP).unwrap();
        let dist = invert_to_distribution(&char_fn_direct(&p, grid).unwrap(), p.reservoir()).unwrap();
        prop_assert!(total_variation(&dist, &tpm_distribution(&p).unwrap()) < 1e-8);
    }

    #[test]
    fn phase_damping_shrinks_coherences(seed in any::<u64>(), t in 0.0..1.0f64) {
        let mut rng = common::rng(seed);
        let rho = common::random_state(&mut rng, common::rs());
        let noise = NoiseSpec::uniform(&["R", "S"], 0.2).unwrap();
        let out = phase_damping_evolution(&rho, t, &noise).unwrap();
        for i in 0..4 {
            prop_assert!((out.matrix()[(i, i)] - rho.matrix()[(i, i)]).norm() < 1e-15);
            for j in 0..4 {
                prop_assert!(out.matrix()[(i, j)].norm() <= rho.matrix()[(i, j)].norm() + 1e-15);
            }
        }
    }

    #[test]
    fn gradient_removes_coherences(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let rho = common::random_state(&mut rng, common::rs());
        let out = apply_channel(&rho, &gradient_channel(&["R", "S"]).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    prop_assert!(out.matrix()[(i, j)].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn pseudopure_deviation_evolves_linearly(seed in any::<u64>(), eps in 1e-3..1.0f64) {
        let mut rng = common::rng(seed);
        let rho = common::random_state(&mut rng, common::rs());
        let u = common::haar_unitary(&mut rng, common::rs());
        let lhs = evolve(&pseudopure(&rho, eps).unwrap(), &u).unwrap();
        let rhs = pseudopure(&evolve(&rho, &u).unwrap(), eps).unwrap();
        prop_assert!(common::max_diff(lhs.matrix(), rhs.matrix()) < 1e-14);
    }

    #[test]
    fn gamma_closed_forms_invert(x in 0.05..8.0f64) {
        let g = gamma_cnot(x);
        prop_assert!((invert_gamma(g).unwrap() - x).abs() < 1e-9 * x.max(1.0));
        prop_assert!((gamma_swap(x, PI) - g).abs() < 1e-12 * g.max(1.0));
    }

    #[test]
    fn cnot_heat_can_be_negative(x in 0.0..8.0f64) {
        let p = mixed_system_process(reservoir(x), gates::cnot_process()).unwrap();
        let dist = tpm_distribution(&p).unwrap();
        prop_assert!(dist.p_negative() > 0.0);
        let r = p.analyze().unwrap();
        prop_assert!(r.beta_q >= r.delta_s - 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn compiled_partial_swap_matches_ideal(phi in 0.05..PI) {
        let spec = MoleculeSpec::placeholder();
        let j = spec.coupling_hz("R", "S").unwrap();
        let tau = PartialSwapAngle::new(phi).unwrap().duration(j);
        let gate = GateTarget::PartialSwap { tau };
        let program = z_compensation(&compile_pulse_program(gate, &spec).unwrap(), &spec).unwrap();
        let ideal = gate.ideal(&spec).unwrap();
        let d = program.unitary(&spec).unwrap().process_distance(&ideal).unwrap();
        prop_assert!(d < 1e-6, "distance {d:e}");
    }

    #[test]
    fn compiled_cnot_acts_like_cnot_on_random_states(seed in any::<u64>()) {
        let spec = MoleculeSpec::placeholder();
        let program = z_compensation(&compile_pulse_program(GateTarget::Cnot, &spec).unwrap(), &spec).unwrap();
        let real: UnitaryOperator = program.unitary(&spec).unwrap();
        let ideal = GateTarget::Cnot.ideal(&spec).unwrap();
        let register: QubitRegister = spec.register().clone();
        let mut rng = common::rng(seed);
        for _ in 0..20 {
            let rho: DensityOperator = common::random_state(&mut rng, register.clone());
            let a = evolve(&rho, &real).unwrap();
            let b = evolve(&rho, &ideal).unwrap();
            prop_assert!(a.fidelity(&b).unwrap() > 1.0 - 1e-8);
        }
    }
}

#[test]
fn swap_transfers_arbitrary_system_states() {
    let mut rng = common::rng(7);
    let r = reservoir(1.3);
    for _ in 0..20 {
        let rho_s = common::random_state(&mut rng, common::s());
        let p = LandauerProcess::new(r, rho_s.clone(), gates::partial_swap_process(PI).unwrap()).unwrap();
        let out_s = partial_trace(&p.final_state(), &["S"]).unwrap();
        let out_r = partial_trace(&p.final_state(), &["R"]).unwrap();
        let rho_r_as_s = DensityOperator::new(common::s(), r.state().matrix().clone()).unwrap();
        let rho_s_as_r =
            DensityOperator::new(QubitRegister::single("R"), rho_s.matrix().clone()).unwrap();
        assert!(out_s.trace_distance(&rho_r_as_s).unwrap() < 1e-12);
        assert!(out_r.trace_distance(&rho_s_as_r).unwrap() < 1e-12);
    }
}
