#![allow(dead_code)]

use landauer_core::qstate::{CMatrix, DensityOperator, QubitRegister, UnitaryOperator};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ginibre(rng: &mut impl Rng, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn haar_unitary(rng: &mut impl Rng, register: QubitRegister) -> UnitaryOperator {
    let d = register.dim();
    let (q, r) = ginibre(rng, d).qr().unpack();
    let mut u = q;
    for j in 0..d {
        let phase = r[(j, j)] / r[(j, j)].norm();
        for i in 0..d {
            u[(i, j)] *= phase;
        }
    }
    UnitaryOperator::new(register, u).expect("QR factor is unitary")
}

/// Random mixed state `G G† / tr(G G†)`.
pub fn random_state(rng: &mut impl Rng, register: QubitRegister) -> DensityOperator {
    let g = ginibre(rng, register.dim());
    let m = &g * g.adjoint();
    let tr: Complex64 = m.trace();
    let mut m = m / tr;
    // exact Hermitian symmetry
    let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    m.copy_from(&h);
    DensityOperator::new(register, m).expect("Ginibre state is valid")
}

pub fn rs() -> QubitRegister {
    QubitRegister::new(["R", "S"]).unwrap()
}

pub fn s() -> QubitRegister {
    QubitRegister::single("S")
}

/// Largest entry modulus of `a − b`.
pub fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
