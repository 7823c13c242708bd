use crate::error::{Error, Result};
use crate::gates::{Circuit, Gate};
use crate::spin_system::SpinSystem;

fn swap(circuit: &mut Circuit, a: usize, b: usize) -> Result<()> {
    circuit.push(Gate::cnot(a, b))?;
    circuit.push(Gate::cnot(b, a))?;
    circuit.push(Gate::cnot(a, b))
}

/// Path from `from` to `to`, or `Disconnected`.
fn path(sys: &SpinSystem, from: usize, to: usize) -> Result<Vec<usize>> {
    sys.check_spin(from)?;
    sys.check_spin(to)?;
    sys.shortest_path(from, to).ok_or(Error::Disconnected(from, to))
}

/// Wraps a two-spin gate between coupled spins in SWAP chains that carry the
/// first spin's state next to the second along a shortest path.
fn route_two_spin(a: usize, b: usize, sys: &SpinSystem, core: impl FnOnce(usize) -> Gate) -> Result<Circuit> {
    let p = path(sys, a, b)?;
    let mut circuit = Circuit::new(sys.n())?;
    let hops = p.len() - 2;
    for w in p[..=hops].windows(2) {
        swap(&mut circuit, w[0], w[1])?;
    }
    circuit.push(core(p[hops]))?;
    for w in p[..=hops].windows(2).rev() {
        swap(&mut circuit, w[0], w[1])?;
    }
    Ok(circuit)
}

/// CNOT between possibly uncoupled spins using SWAPs (three CNOTs each) along
/// the shortest coupling path; spectators are restored.
pub fn route_cnot(control: usize, target: usize, sys: &SpinSystem) -> Result<Circuit> {
    if control == target {
        return Err(Error::InvalidGate("control equals target".into()));
    }
    route_two_spin(control, target, sys, |c| Gate::cnot(c, target))
}

/// Rewrites every two-spin gate on an uncoupled pair into coupled operations.
pub fn route_circuit(circuit: &Circuit, sys: &SpinSystem) -> Result<Circuit> {
    if circuit.n() != sys.n() {
        return Err(Error::WrongSpinCount { expected: sys.n(), found: circuit.n() });
    }
    let mut out = Circuit::new(sys.n())?;
    for g in circuit.gates() {
        match *g {
            Gate::Cnot { control, target } if sys.coupling_hz(control, target) == 0.0 => {
                out.extend(&route_cnot(control, target, sys)?)?;
            }
            Gate::Inept { control, target } if sys.coupling_hz(control, target) == 0.0 => {
                out.push(Gate::rz(control, -90.0))?;
                out.push(Gate::rz(target, 90.0))?;
                out.extend(&route_cnot(control, target, sys)?)?;
            }
            Gate::ControlledPhase { a, b, angle_deg } if sys.coupling_hz(a, b) == 0.0 => {
                out.extend(&route_two_spin(a, b, sys, |c| Gate::ControlledPhase { a: c, b, angle_deg })?)?;
            }
            _ => out.push(g.clone())?,
        }
    }
    Ok(out)
}
