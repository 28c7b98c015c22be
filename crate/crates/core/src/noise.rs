//! Stochastic Pauli errors and readout flips, one pure-state trajectory per shot.

use rand::Rng;

use crate::error::{OtocError, Result};
use crate::statevector::{Bitstring, Circuit, Pauli, StateVector};

const NON_IDENTITY: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];
const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Error probability after each single-qubit gate.
    pub p1: f64,
    /// Error probability after each two-qubit gate.
    pub p2: f64,
    /// Independent flip probability per measured bit.
    pub p_readout: f64,
}

impl Default for NoiseModel {
    /// Gate fidelities 99.5% / 98.5% and ~1% readout error.
    fn default() -> Self {
        NoiseModel { p1: 0.005, p2: 0.015, p_readout: 0.01 }
    }
}

impl NoiseModel {
    pub fn new(p1: f64, p2: f64, p_readout: f64) -> Result<Self> {
        let nm = NoiseModel { p1, p2, p_readout };
        nm.validate()?;
        Ok(nm)
    }

    pub fn noiseless() -> Self {
        NoiseModel { p1: 0.0, p2: 0.0, p_readout: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p1", self.p1), ("p2", self.p2), ("p_readout", self.p_readout)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(OtocError::arg(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }

    pub fn has_gate_errors(&self) -> bool {
        self.p1 > 0.0 || self.p2 > 0.0
    }
}

/// A Pauli error drawn after one gate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorEvent {
    pub gate_index: usize,
    /// `(qubit, letter)` per target; two-qubit errors may contain one identity.
    pub paulis: Vec<(usize, Pauli)>,
}

/// Runs `circuit`, inserting a uniformly drawn non-identity Pauli on the gate's
/// targets with probability `p1`/`p2` after every gate. Returns the inserted errors.
///
/// Exactly one uniform draw is consumed per gate, plus one more per error, so
/// streams stay aligned whatever the probabilities.
pub fn apply_noisy_circuit<R: Rng + ?Sized>(
    state: &mut StateVector,
    circuit: &Circuit,
    nm: &NoiseModel,
    rng: &mut R,
) -> Result<Vec<ErrorEvent>> {
    if circuit.n_qubits() != state.n_qubits() {
        return Err(OtocError::arg(format!(
            "circuit is for {} qubits but the state has {}",
            circuit.n_qubits(),
            state.n_qubits()
        )));
    }
    let mut events = Vec::new();
    for (gate_index, op) in circuit.ops().iter().enumerate() {
        state.apply_gate(op)?;
        let targets = op.targets();
        let p = if targets.len() == 1 { nm.p1 } else { nm.p2 };
        if rng.gen::<f64>() >= p {
            continue;
        }
        let paulis = match *targets {
            [q] => vec![(q, NON_IDENTITY[rng.gen_range(0..3)])],
            [a, b] => {
                let k = rng.gen_range(1..16);
                vec![(a, ALL[k % 4]), (b, ALL[k / 4])]
            }
            _ => unreachable!("gates act on one or two qubits"),
        };
        for &(q, l) in &paulis {
            state.apply_pauli(q, l)?;
        }
        events.push(ErrorEvent { gate_index, paulis });
    }
    Ok(events)
}

/// Flips each bit independently with probability `p_readout`.
pub fn apply_readout_noise<R: Rng + ?Sized>(bits: Bitstring, p_readout: f64, rng: &mut R) -> Bitstring {
    let mut out = bits;
    for q in 0..bits.len() {
        if rng.gen::<f64>() < p_readout {
            out.flip(q);
        }
    }
    out
}
