//! Liquid-state NMR quantum computing simulator.
//!
//! Coupled spin-1/2 systems are modelled as dense density matrices. Circuits
//! are lowered to pulse sequences, evolved under the internal Hamiltonian,
//! and read out through simulated spectra.

pub mod algorithms;
pub mod error;
pub mod evolution;
pub mod gates;
pub mod linalg;
pub mod prep;
pub mod pulse;
pub mod readout;
pub mod spin_system;
pub mod state;

pub use error::{Error, Result};
pub use evolution::{simulate, SimOptions, SimResult};
pub use gates::{Circuit, Convention, Gate};
pub use linalg::{CMatrix, C64};
pub use pulse::{PulseEvent, PulseSequence};
pub use readout::{Fid, Spectrum};
pub use spin_system::{HamiltonianModel, SpinSystem};
pub use state::{DensityMatrix, ProductOperatorExpansion, Representation};
