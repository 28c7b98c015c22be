//! Variational preparation of thermofield-double states.
//!
//! An ansatz is a list of gates whose angles are either free parameters or
//! fixed constants. Parameters live in units of π and become radians only
//! when a circuit is built.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{OtocError, Result};
use crate::nelder_mead::{self, NelderMeadOptions};
use crate::rng;
use crate::spinchain::{exact_tfd_state, SpectralDecomposition, Temperature};
use crate::statevector::{Circuit, GateKind, GateOp, StateVector};
use rand::Rng;

const REFERENCE_TABLE: &str = include_str!("../data/tfd_reference.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TfdLayout {
    /// Two parameters; exact at `θ = (0.5, 0.5)`.
    InfiniteT,
    /// Four parameters.
    FiniteT,
    /// [`TfdLayout::FiniteT`] with the θ₂ rotation on both qubits of each pair,
    /// the wiring the published finite-temperature angles belong to.
    FiniteTMirrored,
    /// Two parameters for the ground-state pair.
    ZeroT,
    /// Built from a user descriptor.
    Custom,
}

impl TfdLayout {
    pub fn for_temperature(temp: Temperature) -> Self {
        match temp {
            Temperature::Zero => TfdLayout::ZeroT,
            Temperature::Finite(_) => TfdLayout::FiniteT,
            Temperature::Infinite => TfdLayout::InfiniteT,
        }
    }

    /// Layout matching [`reference_parameters`] at `temp`.
    pub fn for_reference(temp: Temperature) -> Self {
        match temp {
            Temperature::Finite(_) => TfdLayout::FiniteTMirrored,
            other => TfdLayout::for_temperature(other),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TfdLayout::InfiniteT => "infinite_t",
            TfdLayout::FiniteT => "finite_t",
            TfdLayout::FiniteTMirrored => "finite_t_mirrored",
            TfdLayout::ZeroT => "zero_t",
            TfdLayout::Custom => "custom",
        }
    }
}

impl FromStr for TfdLayout {
    type Err = OtocError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "infinite_t" => Ok(TfdLayout::InfiniteT),
            "finite_t" => Ok(TfdLayout::FiniteT),
            "finite_t_mirrored" => Ok(TfdLayout::FiniteTMirrored),
            "zero_t" => Ok(TfdLayout::ZeroT),
            other => Err(OtocError::arg(format!("unknown TFD layout {other:?}"))),
        }
    }
}

/// Where a gate takes its angle from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AngleSource {
    /// `sign · θ[index]`.
    Slot { index: usize, sign: f64 },
    /// Constant, in units of π.
    Fixed(f64),
}

impl AngleSource {
    pub fn slot(index: usize) -> Self {
        AngleSource::Slot { index, sign: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnsatzGate {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub angle: AngleSource,
}

impl AnsatzGate {
    pub fn new(kind: GateKind, targets: &[usize], angle: AngleSource) -> Self {
        AnsatzGate { kind, targets: targets.to_vec(), angle }
    }
}

/// Text form `KIND q.. ANGLE` with ANGLE one of `t3`, `-t3` (slot 3, 1-based)
/// or a number in units of π. Pauli gates omit the angle.
impl FromStr for AnsatzGate {
    type Err = OtocError;

    fn from_str(s: &str) -> Result<Self> {
        let mut words = s.split_whitespace();
        let kind: GateKind = words.next().ok_or_else(|| OtocError::arg("empty gate descriptor"))?.parse()?;
        let rest: Vec<&str> = words.collect();
        let n_targets = kind.arity();
        let expected = n_targets + usize::from(kind.is_rotation());
        if rest.len() != expected {
            return Err(OtocError::arg(format!("gate descriptor {s:?} needs {expected} fields after the kind")));
        }
        let targets = rest[..n_targets]
            .iter()
            .map(|w| w.parse::<usize>().map_err(|_| OtocError::arg(format!("bad qubit index {w:?} in {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let angle = match rest.get(n_targets) {
            None => AngleSource::Fixed(0.0),
            Some(w) => parse_angle(w).ok_or_else(|| OtocError::arg(format!("bad angle {w:?} in {s:?}")))?,
        };
        Ok(AnsatzGate { kind, targets, angle })
    }
}

fn parse_angle(w: &str) -> Option<AngleSource> {
    let (sign, body) = match w.strip_prefix('-') {
        Some(b) => (-1.0, b),
        None => (1.0, w.strip_prefix('+').unwrap_or(w)),
    };
    if let Some(idx) = body.strip_prefix('t') {
        let k: usize = idx.parse().ok()?;
        return (k >= 1).then(|| AngleSource::Slot { index: k - 1, sign });
    }
    w.parse::<f64>().ok().filter(|x| x.is_finite()).map(AngleSource::Fixed)
}

impl fmt::Display for AnsatzGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        for q in &self.targets {
            write!(f, " {q}")?;
        }
        if self.kind.is_rotation() {
            match self.angle {
                AngleSource::Slot { index, sign } if sign < 0.0 => write!(f, " -t{}", index + 1)?,
                AngleSource::Slot { index, .. } => write!(f, " t{}", index + 1)?,
                AngleSource::Fixed(x) => write!(f, " {x}")?,
            }
        }
        Ok(())
    }
}

/// Gate list plus parameter count for a two-copy register of `2N` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct TfdAnsatz {
    n_sites: usize,
    layout: TfdLayout,
    n_params: usize,
    gates: Vec<AnsatzGate>,
}

impl TfdAnsatz {
    /// The built-in topology for `layout`. Copy A is qubits `0..N`, copy B `N..2N`.
    pub fn new(n_sites: usize, layout: TfdLayout) -> Result<Self> {
        if n_sites == 0 {
            return Err(OtocError::arg("TFD ansatz needs at least one site"));
        }
        let n = n_sites;
        let pairs = || (0..n).map(move |i| [i, n + i]);
        let bonds = || (0..2).flat_map(move |c| (0..n.saturating_sub(1)).map(move |i| [c * n + i, c * n + i + 1]));
        let mut gates = Vec::new();
        let n_params = match layout {
            TfdLayout::InfiniteT | TfdLayout::FiniteT | TfdLayout::FiniteTMirrored => {
                for [a, b] in pairs() {
                    gates.push(AnsatzGate::new(GateKind::XX, &[a, b], AngleSource::slot(0)));
                    gates.push(AnsatzGate::new(GateKind::RZ, &[a], AngleSource::slot(1)));
                    if layout == TfdLayout::FiniteTMirrored {
                        gates.push(AnsatzGate::new(GateKind::RZ, &[b], AngleSource::slot(1)));
                    }
                }
                if layout != TfdLayout::InfiniteT {
                    for bond in bonds() {
                        gates.push(AnsatzGate::new(GateKind::XX, &bond, AngleSource::slot(2)));
                    }
                    for pair in pairs() {
                        gates.push(AnsatzGate::new(GateKind::ZZ, &pair, AngleSource::slot(3)));
                    }
                    4
                } else {
                    2
                }
            }
            TfdLayout::ZeroT => {
                for pair in pairs() {
                    gates.push(AnsatzGate::new(GateKind::XX, &pair, AngleSource::Fixed(1.0)));
                }
                for bond in bonds() {
                    gates.push(AnsatzGate::new(GateKind::XX, &bond, AngleSource::slot(0)));
                }
                for q in 0..2 * n {
                    gates.push(AnsatzGate::new(GateKind::RZ, &[q], AngleSource::slot(1)));
                }
                2
            }
            TfdLayout::Custom => {
                return Err(OtocError::arg("a custom ansatz needs a gate list; use TfdAnsatz::custom"))
            }
        };
        Ok(TfdAnsatz { n_sites, layout, n_params, gates })
    }

    pub fn for_temperature(n_sites: usize, temp: Temperature) -> Result<Self> {
        TfdAnsatz::new(n_sites, TfdLayout::for_temperature(temp))
    }

    pub fn for_reference(n_sites: usize, temp: Temperature) -> Result<Self> {
        TfdAnsatz::new(n_sites, TfdLayout::for_reference(temp))
    }

    /// Arbitrary topology; the parameter count is the highest slot referenced.
    pub fn custom(n_sites: usize, gates: Vec<AnsatzGate>) -> Result<Self> {
        if n_sites == 0 {
            return Err(OtocError::arg("TFD ansatz needs at least one site"));
        }
        let n_qubits = 2 * n_sites;
        let mut n_params = 0;
        for g in &gates {
            let op = GateOp::new(g.kind, &g.targets, 0.0)?;
            if let Some(&q) = op.targets().iter().find(|&&q| q >= n_qubits) {
                return Err(OtocError::arg(format!("ansatz gate {g} targets qubit {q} outside 0..{n_qubits}")));
            }
            match g.angle {
                AngleSource::Slot { index, sign } => {
                    if !sign.is_finite() {
                        return Err(OtocError::arg("slot sign must be finite"));
                    }
                    n_params = n_params.max(index + 1);
                }
                AngleSource::Fixed(x) if !x.is_finite() => {
                    return Err(OtocError::arg("fixed ansatz angles must be finite"));
                }
                AngleSource::Fixed(_) => {}
            }
        }
        Ok(TfdAnsatz { n_sites, layout: TfdLayout::Custom, n_params, gates })
    }

    /// Parses one gate per non-empty line; `#` starts a comment.
    pub fn from_descriptor(n_sites: usize, text: &str) -> Result<Self> {
        let gates = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<AnsatzGate>>>()?;
        TfdAnsatz::custom(n_sites, gates)
    }

    pub fn descriptor(&self) -> String {
        self.gates.iter().map(|g| format!("{g}\n")).collect()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.n_sites
    }

    pub fn layout(&self) -> TfdLayout {
        self.layout
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn gates(&self) -> &[AnsatzGate] {
        &self.gates
    }
}

/// Ansatz angles in units of π.
#[derive(Clone, Debug, PartialEq)]
pub struct TfdParameters {
    pub thetas: Vec<f64>,
    pub temperature: Temperature,
}

impl TfdParameters {
    pub fn new(thetas: Vec<f64>, temperature: Temperature) -> Result<Self> {
        if let Some(x) = thetas.iter().find(|x| !x.is_finite()) {
            return Err(OtocError::arg(format!("TFD parameters must be finite, got {x}")));
        }
        Ok(TfdParameters { thetas, temperature })
    }
}

/// Published angles for one of the tabulated temperatures.
pub fn reference_parameters(temp: Temperature) -> Result<TfdParameters> {
    let table = reference_table();
    table
        .into_iter()
        .find(|(t, _)| t.approx_eq(&temp))
        .map(|(_, thetas)| TfdParameters { thetas, temperature: temp })
        .ok_or_else(|| OtocError::NotFound(format!("no reference TFD parameters for T = {temp}")))
}

/// Every column of the shipped table, in order.
pub fn reference_table() -> Vec<(Temperature, Vec<f64>)> {
    let rows: Vec<Vec<&str>> = REFERENCE_TABLE
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split(',').map(str::trim).collect())
        .collect();
    let header = &rows[0];
    (1..header.len())
        .map(|col| {
            let temp: Temperature = header[col].parse().expect("reference table temperature");
            let thetas = rows[1..]
                .iter()
                .filter_map(|r| r.get(col).filter(|c| !c.is_empty()))
                .map(|c| c.parse::<f64>().expect("reference table angle"))
                .collect();
            (temp, thetas)
        })
        .collect()
}

pub fn build_tfd_circuit(ansatz: &TfdAnsatz, params: &TfdParameters) -> Result<Circuit> {
    if params.thetas.len() != ansatz.n_params {
        return Err(OtocError::arg(format!(
            "{} ansatz takes {} parameters, got {}",
            ansatz.layout.name(),
            ansatz.n_params,
            params.thetas.len()
        )));
    }
    let mut circuit = Circuit::new(ansatz.n_qubits());
    for g in &ansatz.gates {
        let units_of_pi = match g.angle {
            AngleSource::Slot { index, sign } => sign * params.thetas[index],
            AngleSource::Fixed(x) => x,
        };
        circuit.push(GateOp::new(g.kind, &g.targets, units_of_pi * std::f64::consts::PI)?)?;
    }
    Ok(circuit)
}

/// Runs the ansatz on `|0…0⟩`.
pub fn prepare_tfd(ansatz: &TfdAnsatz, params: &TfdParameters) -> Result<StateVector> {
    let circuit = build_tfd_circuit(ansatz, params)?;
    let mut psi = StateVector::new_zero_state(ansatz.n_qubits())?;
    psi.apply_circuit(&circuit)?;
    Ok(psi)
}

/// `|⟨exact|prepared⟩|²`.
pub fn tfd_fidelity(prepared: &StateVector, exact: &StateVector) -> Result<f64> {
    for (name, s) in [("prepared", prepared), ("exact", exact)] {
        if (s.norm_sqr() - 1.0).abs() > 1e-9 {
            return Err(OtocError::arg(format!("{name} state is not normalized (norm² = {})", s.norm_sqr())));
        }
    }
    Ok(exact.fidelity(prepared)?.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub seed: u64,
    pub simplex: NelderMeadOptions,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { restarts: 20, seed: 0, simplex: NelderMeadOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestartOutcome {
    pub start: Vec<f64>,
    pub thetas: Vec<f64>,
    pub fidelity: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationResult {
    pub params: TfdParameters,
    pub fidelity: f64,
    /// Which restart produced `params`.
    pub best_restart: usize,
    pub restarts: Vec<RestartOutcome>,
    /// Best fidelity seen after each restart; non-decreasing.
    pub history: Vec<f64>,
}

/// Multi-start simplex search maximizing `|⟨TFD|ψ(θ)⟩|²`.
pub fn optimize_tfd(
    ansatz: &TfdAnsatz,
    temp: Temperature,
    sd: &SpectralDecomposition,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    if sd.n_sites() != ansatz.n_sites {
        return Err(OtocError::arg(format!(
            "ansatz has {} sites but the spectrum belongs to {}",
            ansatz.n_sites,
            sd.n_sites()
        )));
    }
    if cfg.restarts == 0 {
        return Err(OtocError::arg("optimizer needs at least one restart"));
    }
    let exact = exact_tfd_state(sd, temp)?;
    let objective = |thetas: &[f64]| -> f64 {
        let params = TfdParameters { thetas: thetas.to_vec(), temperature: temp };
        match prepare_tfd(ansatz, &params).and_then(|psi| exact.fidelity(&psi)) {
            Ok(f) => 1.0 - f,
            Err(_) => f64::INFINITY,
        }
    };

    let outcomes: Vec<RestartOutcome> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::substream(cfg.seed, &[r as u64]);
            // uniform on (-1, 1]
            let start: Vec<f64> = (0..ansatz.n_params).map(|_| 1.0 - 2.0 * rng.gen::<f64>()).collect();
            let m = nelder_mead::minimize(objective, &start, &cfg.simplex);
            RestartOutcome { start, thetas: m.x, fidelity: 1.0 - m.value, evals: m.evals, converged: m.converged }
        })
        .collect();

    let mut best = 0;
    let mut history = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        if o.fidelity > outcomes[best].fidelity {
            best = i;
        }
        history.push(outcomes[best].fidelity);
    }
    let fidelity = outcomes[best].fidelity.clamp(0.0, 1.0);
    Ok(OptimizationResult {
        params: TfdParameters { thetas: outcomes[best].thetas.clone(), temperature: temp },
        fidelity,
        best_restart: best,
        restarts: outcomes,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinchain::{build_hamiltonian, diagonalize, TfimParams};
    use crate::statevector::PauliString;
    use num_complex::Complex64;

    fn sd3() -> SpectralDecomposition {
        diagonalize(&build_hamiltonian(&TfimParams::unit(3)).unwrap()).unwrap()
    }

    #[test]
    fn reference_values() {
        assert_eq!(reference_parameters(Temperature::Infinite).unwrap().thetas, vec![0.5, 0.5]);
        assert_eq!(reference_parameters(Temperature::Finite(2.0)).unwrap().thetas, vec![0.643, 0.248, -0.070, 1.254]);
        assert_eq!(reference_parameters(Temperature::Zero).unwrap().thetas, vec![0.146, 0.258]);
        assert!(matches!(reference_parameters(Temperature::Finite(0.7)), Err(OtocError::NotFound(_))));
        assert_eq!(reference_table().len(), 7);
    }

    #[test]
    fn infinite_t_reference_is_exact() {
        for n in 1..=4 {
            let sd = diagonalize(&build_hamiltonian(&TfimParams::unit(n)).unwrap()).unwrap();
            let ansatz = TfdAnsatz::new(n, TfdLayout::InfiniteT).unwrap();
            let psi = prepare_tfd(&ansatz, &reference_parameters(Temperature::Infinite).unwrap()).unwrap();
            let exact = exact_tfd_state(&sd, Temperature::Infinite).unwrap();
            assert!((tfd_fidelity(&psi, &exact).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_angles_are_identity() {
        for layout in [TfdLayout::InfiniteT, TfdLayout::FiniteT] {
            let ansatz = TfdAnsatz::new(3, layout).unwrap();
            let p = TfdParameters::new(vec![0.0; ansatz.n_params()], Temperature::Infinite).unwrap();
            let psi = prepare_tfd(&ansatz, &p).unwrap();
            assert_eq!(psi, StateVector::new_zero_state(6).unwrap());
        }
    }

    #[test]
    fn finite_t_gate_count() {
        let ansatz = TfdAnsatz::new(3, TfdLayout::FiniteT).unwrap();
        let c =
            build_tfd_circuit(&ansatz, &TfdParameters::new(vec![0.1; 4], Temperature::Finite(1.0)).unwrap()).unwrap();
        assert_eq!(c.len(), 13);
        let kinds = |k| c.ops().iter().filter(|o| o.kind == k).count();
        assert_eq!((kinds(GateKind::XX), kinds(GateKind::RZ), kinds(GateKind::ZZ)), (7, 3, 3));
    }

    #[test]
    fn mirrored_rotation_equals_doubled_single_rotation() {
        // after the pair XX the state lives on |00⟩, |11⟩ of each pair, where Z_A = Z_B
        let mirrored = TfdAnsatz::new(3, TfdLayout::FiniteTMirrored).unwrap();
        let single = TfdAnsatz::new(3, TfdLayout::FiniteT).unwrap();
        let t = Temperature::Finite(1.0);
        let a = prepare_tfd(&mirrored, &TfdParameters::new(vec![0.7, 0.31, -0.2, 0.4], t).unwrap()).unwrap();
        let b = prepare_tfd(&single, &TfdParameters::new(vec![0.7, 0.62, -0.2, 0.4], t).unwrap()).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < 1e-13);
        }
        assert_eq!(mirrored.gates().len(), 16);
    }

    #[test]
    fn parameter_count_mismatch() {
        let ansatz = TfdAnsatz::new(3, TfdLayout::FiniteT).unwrap();
        let p = TfdParameters::new(vec![0.5, 0.5], Temperature::Finite(1.0)).unwrap();
        assert!(build_tfd_circuit(&ansatz, &p).is_err());
        assert!(TfdParameters::new(vec![f64::NAN], Temperature::Zero).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let a = StateVector::new_zero_state(2).unwrap();
        assert_eq!(tfd_fidelity(&a, &a).unwrap(), 1.0);
        let mut b = a.clone();
        b.apply_gate(&GateOp::x(1)).unwrap();
        assert_eq!(tfd_fidelity(&a, &b).unwrap(), 0.0);
        let mut c = a.clone();
        c.scale(Complex64::from_polar(1.0, 0.83));
        assert!((tfd_fidelity(&a, &c).unwrap() - 1.0).abs() < 1e-15);
        let unnormalized = StateVector::from_amplitudes(vec![Complex64::new(2.0, 0.0); 4]).unwrap();
        assert!(tfd_fidelity(&unnormalized, &a).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        for layout in [TfdLayout::InfiniteT, TfdLayout::FiniteT, TfdLayout::FiniteTMirrored, TfdLayout::ZeroT] {
            let ansatz = TfdAnsatz::new(3, layout).unwrap();
            let again = TfdAnsatz::from_descriptor(3, &ansatz.descriptor()).unwrap();
            assert_eq!(again.gates(), ansatz.gates());
            assert_eq!(again.n_params(), ansatz.n_params());
        }
        let custom = TfdAnsatz::from_descriptor(2, "XX 0 2 t1\nRZ 2 -t2 # conjugate\nX 1\n").unwrap();
        assert_eq!(custom.n_params(), 2);
        assert_eq!(custom.gates()[1].angle, AngleSource::Slot { index: 1, sign: -1.0 });
        assert!(TfdAnsatz::from_descriptor(2, "XX 0 4 t1").is_err());
        assert!(TfdAnsatz::from_descriptor(2, "XX 0 t1").is_err());
        assert!(TfdAnsatz::from_descriptor(2, "RZ 0 t0").is_err());
    }

    #[test]
    fn infinite_t_optimizer_reaches_exact_state() {
        let sd = sd3();
        let ansatz = TfdAnsatz::new(3, TfdLayout::InfiniteT).unwrap();
        let cfg = OptimizerConfig { restarts: 4, seed: 7, ..Default::default() };
        let r = optimize_tfd(&ansatz, Temperature::Infinite, &sd, &cfg).unwrap();
        assert!(r.fidelity >= 1.0 - 1e-9, "{}", r.fidelity);
        assert!(r.history.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn optimizer_is_deterministic() {
        let sd = sd3();
        let ansatz = TfdAnsatz::new(3, TfdLayout::FiniteT).unwrap();
        let cfg = OptimizerConfig { restarts: 3, seed: 11, ..Default::default() };
        let a = optimize_tfd(&ansatz, Temperature::Finite(2.0), &sd, &cfg).unwrap();
        let b = optimize_tfd(&ansatz, Temperature::Finite(2.0), &sd, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prepared_states_have_even_parity() {
        let parity = PauliString::parity(6);
        for (temp, thetas) in reference_table() {
            let ansatz = TfdAnsatz::for_reference(3, temp).unwrap();
            let psi = prepare_tfd(&ansatz, &TfdParameters::new(thetas, temp).unwrap()).unwrap();
            assert!((psi.expectation_pauli(&parity).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
