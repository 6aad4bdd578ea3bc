//! Simulation of Landauer erasure on a three-spin NMR register.
//!
//! A system qubit `S` interacts unitarily with a thermal reservoir qubit `R`;
//! an ancilla `A` reads out the characteristic function of the heat dumped
//! into `R` by interferometry. The crate builds the states, runs the
//! processes either as ideal gates or as compiled pulse programs, recovers the
//! heat distribution and checks `β⟨Q⟩ ≥ ΔS` together with the decomposition of
//! the entropy production into mutual information and relative entropy.
//!
//! Units: `ħ = k_B = 1`. Energies are angular frequencies in rad/s, inverse
//! temperatures are in seconds, entropies in nats.

pub mod error;
pub mod expharness;
pub mod gates;
pub mod heatstats;
pub mod nmrsim;
pub mod qstate;
pub mod thermo;

pub use error::{Criterion, Error, Result};

/// Label of the interferometer ancilla.
pub const ANCILLA: &str = "A";
/// Label of the reservoir qubit.
pub const RESERVOIR: &str = "R";
/// Label of the system (memory) qubit.
pub const SYSTEM: &str = "S";
