//! Shared fixtures for the benchmarks.

use nmrqc_core::{Circuit, Gate, SpinSystem};

/// Fully coupled chain-like molecule with distinct offsets.
pub fn molecule(n: usize) -> SpinSystem {
    let offsets = (0..n).map(|s| -450.0 + 900.0 * s as f64 / n.max(2) as f64).collect();
    let mut sys = SpinSystem::new(offsets).expect("valid offsets");
    for i in 0..n {
        for j in i + 1..n {
            sys = sys.with_coupling(i, j, 30.0 + 7.0 * (i + 2 * j) as f64).expect("valid coupling");
        }
    }
    sys
}

/// Hadamards followed by a CNOT ladder.
pub fn ghz(n: usize) -> Circuit {
    let mut gates = vec![Gate::Hadamard(0)];
    gates.extend((1..n).map(|t| Gate::cnot(t - 1, t)));
    Circuit::from_gates(n, gates).expect("valid circuit")
}
