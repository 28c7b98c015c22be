//! The two-copy OTOC measurement: perturb the TFD with `W` on copy A, evolve
//! with `H_A - H_B`, read out `V_A ⊗ V_Bᵀ`, and postselect on global parity.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{OtocError, Result};
use crate::noise::{apply_noisy_circuit, apply_readout_noise, NoiseModel};
use crate::rng::{derive_seed, substream};
use crate::spinchain::{
    build_hamiltonian, diagonalize, exact_otoc, exact_tfd_state, exact_two_copy_evolve, SpectralDecomposition,
    Temperature, TfimParams,
};
use crate::statevector::{
    BasisSampler, Bitstring, Circuit, GateCounts, GateKind, GateOp, Pauli, PauliString, StateVector,
};
use crate::tfd::{
    build_tfd_circuit, optimize_tfd, reference_parameters, OptimizerConfig, TfdAnsatz, TfdLayout, TfdParameters,
};

/// Times within this distance are treated as equal when looking up series points.
pub const TIME_TOL: f64 = 1e-9;
pub const T_EARLY: f64 = 0.4;
pub const T_LATE: f64 = 0.8;

/// Path component reserved for the optimizer's seed, away from time indices.
pub const OPTIMIZER_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct TrotterSchedule {
    steps: Vec<f64>,
}

impl Default for TrotterSchedule {
    /// Steps `{0.2, 0.2, 0.4}`, reaching `t = 0.4` and `t = 0.8`.
    fn default() -> Self {
        TrotterSchedule { steps: vec![0.2, 0.2, 0.4] }
    }
}

impl TrotterSchedule {
    pub fn new(steps: Vec<f64>) -> Result<Self> {
        if let Some(dt) = steps.iter().find(|dt| !(dt.is_finite() && **dt > 0.0)) {
            return Err(OtocError::arg(format!("Trotter steps must be positive and finite, got {dt}")));
        }
        Ok(TrotterSchedule { steps })
    }

    /// `n_steps` equal steps of `dt`.
    pub fn uniform(dt: f64, n_steps: usize) -> Result<Self> {
        TrotterSchedule::new(vec![dt; n_steps])
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `[0, t_1, t_2, …]`, one entry per series point.
    pub fn times(&self) -> Vec<f64> {
        let mut acc = 0.0;
        std::iter::once(0.0)
            .chain(self.steps.iter().map(|dt| {
                acc += dt;
                acc
            }))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrotterBlock {
    ABonds,
    AFields,
    BBonds,
    BFields,
}

impl TrotterBlock {
    fn name(self) -> &'static str {
        match self {
            TrotterBlock::ABonds => "a_bonds",
            TrotterBlock::AFields => "a_fields",
            TrotterBlock::BBonds => "b_bonds",
            TrotterBlock::BFields => "b_fields",
        }
    }
}

/// Order of the four exponentials within one first-order step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrotterOrder([TrotterBlock; 4]);

impl Default for TrotterOrder {
    fn default() -> Self {
        TrotterOrder([TrotterBlock::ABonds, TrotterBlock::AFields, TrotterBlock::BBonds, TrotterBlock::BFields])
    }
}

impl TrotterOrder {
    pub fn new(blocks: [TrotterBlock; 4]) -> Result<Self> {
        for (i, b) in blocks.iter().enumerate() {
            if blocks[..i].contains(b) {
                return Err(OtocError::arg(format!("Trotter order repeats {}", b.name())));
            }
        }
        Ok(TrotterOrder(blocks))
    }

    pub fn blocks(&self) -> [TrotterBlock; 4] {
        self.0
    }
}

impl fmt::Display for TrotterOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|b| b.name()).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for TrotterOrder {
    type Err = OtocError;

    fn from_str(s: &str) -> Result<Self> {
        let all = [TrotterBlock::ABonds, TrotterBlock::AFields, TrotterBlock::BBonds, TrotterBlock::BFields];
        let parsed = s
            .split(',')
            .map(|w| {
                let w = w.trim();
                all.into_iter()
                    .find(|b| b.name() == w)
                    .ok_or_else(|| OtocError::arg(format!("unknown Trotter block {w:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let blocks: [TrotterBlock; 4] =
            parsed.try_into().map_err(|_| OtocError::arg("Trotter order must list all four blocks"))?;
        TrotterOrder::new(blocks)
    }
}

/// One first-order step of `exp(-i(H_A - H_B)dt)` in the default block order.
pub fn build_trotter_step(p: &TfimParams, dt: f64) -> Result<Circuit> {
    build_trotter_step_ordered(p, dt, TrotterOrder::default())
}

pub fn build_trotter_step_ordered(p: &TfimParams, dt: f64, order: TrotterOrder) -> Result<Circuit> {
    p.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(OtocError::arg(format!("Trotter step must be positive, got {dt}")));
    }
    let n = p.n_sites;
    let mut c = Circuit::new(2 * n);
    for block in order.0 {
        // copy B carries -H, hence the sign flip
        let (offset, sign) = match block {
            TrotterBlock::ABonds | TrotterBlock::AFields => (0, 1.0),
            TrotterBlock::BBonds | TrotterBlock::BFields => (n, -1.0),
        };
        match block {
            TrotterBlock::ABonds | TrotterBlock::BBonds => {
                for i in 0..n.saturating_sub(1) {
                    c.push(GateOp::xx(offset + i, offset + i + 1, sign * 2.0 * p.coupling * dt))?;
                }
            }
            TrotterBlock::AFields | TrotterBlock::BFields => {
                for i in 0..n {
                    c.push(GateOp::rz(offset + i, sign * 2.0 * p.field * dt))?;
                }
            }
        }
    }
    Ok(c)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Preparation {
    /// The exact TFD state vector, no circuit.
    ExactTfd,
    /// A given ansatz and angles.
    Variational { ansatz: TfdAnsatz, params: TfdParameters },
    /// Published angles for the experiment temperature.
    Reference,
    /// Angles found by [`optimize_tfd`]; the optimizer seed is derived from the experiment seed.
    Optimized(OptimizerConfig),
}

impl Preparation {
    pub fn name(&self) -> &'static str {
        match self {
            Preparation::ExactTfd => "exact",
            Preparation::Variational { .. } => "variational",
            Preparation::Reference => "reference",
            Preparation::Optimized(_) => "optimized",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evolution {
    Trotter,
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OtocExperiment {
    pub tfim: TfimParams,
    pub temp: Temperature,
    pub prep: Preparation,
    /// 1-based site of `W` on copy A.
    pub w_site: usize,
    pub w_pauli: Pauli,
    /// 1-based site of `V`.
    pub v_site: usize,
    pub v_pauli: Pauli,
    pub schedule: TrotterSchedule,
    pub order: TrotterOrder,
    pub evolution: Evolution,
    /// `None` for expectation values only.
    pub shots: Option<usize>,
    pub noise: Option<NoiseModel>,
    pub seed: u64,
    /// Pad the preparation so every temperature runs the same number of gates.
    pub pad_depth: bool,
}

impl OtocExperiment {
    /// Exact TFD, `W = σˣ₁`, `V = σᶻ₁`, default schedule, Trotter evolution, no shots.
    pub fn new(tfim: TfimParams, temp: Temperature) -> Self {
        OtocExperiment {
            tfim,
            temp,
            prep: Preparation::ExactTfd,
            w_site: 1,
            w_pauli: Pauli::X,
            v_site: 1,
            v_pauli: Pauli::Z,
            schedule: TrotterSchedule::default(),
            order: TrotterOrder::default(),
            evolution: Evolution::Trotter,
            shots: None,
            noise: None,
            seed: 0,
            pad_depth: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tfim.validate()?;
        let n = self.tfim.n_sites;
        for (name, site) in [("w_site", self.w_site), ("v_site", self.v_site)] {
            if !(1..=n).contains(&site) {
                return Err(OtocError::Config(format!("{name} = {site} is outside 1..={n}")));
            }
        }
        if self.w_pauli == Pauli::I || self.v_pauli == Pauli::I {
            return Err(OtocError::Config("W and V must be non-identity Paulis".into()));
        }
        if self.shots == Some(0) {
            return Err(OtocError::Config("shots must be at least 1".into()));
        }
        if self.shots.is_some() && self.v_pauli != Pauli::Z {
            return Err(OtocError::Config("sampling reads V in the computational basis; V must be Z".into()));
        }
        if let Some(nm) = &self.noise {
            nm.validate().map_err(|e| OtocError::Config(e.to_string()))?;
            if self.evolution == Evolution::Exact {
                return Err(OtocError::Config(
                    "noise requires Trotter evolution (exact evolution has no gates)".into(),
                ));
            }
        }
        if let Preparation::Variational { ansatz, params } = &self.prep {
            if ansatz.n_sites() != n || params.thetas.len() != ansatz.n_params() {
                return Err(OtocError::Config("variational ansatz does not match the model or its parameters".into()));
            }
        }
        Ok(())
    }

    fn w_string(&self) -> PauliString {
        PauliString::single(self.tfim.n_sites, self.w_site - 1, self.w_pauli).expect("validated site")
    }

    fn v_string(&self) -> PauliString {
        PauliString::single(self.tfim.n_sites, self.v_site - 1, self.v_pauli).expect("validated site")
    }

    /// `V_A ⊗ V_Bᵀ` on `2N` qubits together with the sign from `Yᵀ = -Y`.
    fn mirrored_correlator(&self) -> (PauliString, f64) {
        let n = self.tfim.n_sites;
        let q = self.v_site - 1;
        let p = PauliString::identity(2 * n)
            .with(q, self.v_pauli)
            .and_then(|p| p.with(n + q, self.v_pauli))
            .expect("validated site");
        let sign = if self.v_pauli == Pauli::Y { -1.0 } else { 1.0 };
        (p, sign)
    }

    /// Global parity after `W`: `-1` if `W` anticommutes with `∏σᶻ`.
    pub fn expected_parity(&self) -> i32 {
        match self.w_pauli {
            Pauli::X | Pauli::Y => -1,
            Pauli::I | Pauli::Z => 1,
        }
    }
}

/// How the initial state was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct PrepSummary {
    pub mode: &'static str,
    pub layout: Option<TfdLayout>,
    /// Angles in units of π.
    pub params: Option<Vec<f64>>,
    /// `|⟨TFD|ψ_prep⟩|²` for the noiseless preparation.
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OtocPoint {
    pub t: f64,
    /// Trotter steps applied (0 at `t = 0`).
    pub step: usize,
    pub o_exact: f64,
    /// Noiseless expectation with the chosen preparation and evolution.
    pub o_state: f64,
    pub o_sampled: Option<f64>,
    pub o_postselected: Option<f64>,
    pub kept_fraction: Option<f64>,
    pub std_error: Option<f64>,
    /// Noiseless `⟨∏σᶻ⟩` over all `2N` qubits.
    pub parity: f64,
    /// Gates executed up to this point (preparation, padding, `W`, Trotter steps).
    pub gate_counts: GateCounts,
    /// Shots were taken but none survived postselection.
    pub starved: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OtocSeries {
    pub temperature: Temperature,
    pub prep: PrepSummary,
    pub points: Vec<OtocPoint>,
}

impl OtocSeries {
    pub fn point_at(&self, t: f64) -> Option<&OtocPoint> {
        self.points.iter().find(|p| (p.t - t).abs() <= TIME_TOL)
    }

    pub fn starved_times(&self) -> Vec<f64> {
        self.points.iter().filter(|p| p.starved).map(|p| p.t).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesField {
    Exact,
    State,
    Sampled,
    Postselected,
}

impl SeriesField {
    pub const ALL: [SeriesField; 4] =
        [SeriesField::Exact, SeriesField::State, SeriesField::Sampled, SeriesField::Postselected];

    pub fn of(self, p: &OtocPoint) -> Option<f64> {
        match self {
            SeriesField::Exact => Some(p.o_exact),
            SeriesField::State => Some(p.o_state),
            SeriesField::Sampled => p.o_sampled,
            SeriesField::Postselected => p.o_postselected,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRate {
    /// `(O(t_late) - O(t_early)) / (t_late - t_early)`, in units of `J`.
    pub lambda: f64,
    pub t_early: f64,
    pub t_late: f64,
}

/// Finite-difference slope between `t = 0.4` and `t = 0.8`.
pub fn decay_rate(series: &OtocSeries, field: SeriesField) -> Result<DecayRate> {
    let value = |t: f64| -> Result<f64> {
        series.point_at(t).and_then(|p| field.of(p)).ok_or(OtocError::MissingTimePoint { t })
    };
    let (early, late) = (value(T_EARLY)?, value(T_LATE)?);
    Ok(DecayRate { lambda: (late - early) / (T_LATE - T_EARLY), t_early: T_EARLY, t_late: T_LATE })
}

/// Keeps shots with odd Hamming weight, i.e. global parity `-1`.
pub fn postselect(shots: &[Bitstring]) -> (Vec<Bitstring>, f64) {
    postselect_parity(shots, -1)
}

pub fn postselect_parity(shots: &[Bitstring], parity: i32) -> (Vec<Bitstring>, f64) {
    let kept: Vec<Bitstring> = shots.iter().copied().filter(|b| b.parity() == parity).collect();
    let fraction = if shots.is_empty() { 0.0 } else { kept.len() as f64 / shots.len() as f64 };
    (kept, fraction)
}

/// Appends identity-acting gates until the circuit has `target` gate counts.
///
/// Even deficits use pairs `G(π/2) G(-π/2)`; an odd deficit of three or more
/// starts with `G(π/2) G(π/2) G(-π)`, and a deficit of one is `G(0)`. Single-qubit
/// padding is `RZ`, two-qubit padding `XX`, on wires the circuit already uses.
pub fn pad_to_depth(circuit: &Circuit, target: GateCounts) -> Result<Circuit> {
    let have = circuit.gate_counts();
    if target.one_qubit < have.one_qubit || target.two_qubit < have.two_qubit {
        return Err(OtocError::arg(format!(
            "padding target ({}, {}) is below the circuit's ({}, {})",
            target.one_qubit, target.two_qubit, have.one_qubit, have.two_qubit
        )));
    }
    let n = circuit.n_qubits();
    let ops = circuit.ops();
    let wire = ops.iter().find(|o| o.targets().len() == 1).or_else(|| ops.first()).map_or(0, |o| o.targets()[0]);
    let pair = ops.iter().find(|o| o.targets().len() == 2).map(|o| (o.targets()[0], o.targets()[1]));
    let mut out = circuit.clone();

    let d2 = target.two_qubit - have.two_qubit;
    if d2 > 0 {
        let (a, b) = match pair {
            Some(p) => p,
            None if n >= 2 => (wire, if wire == 0 { 1 } else { 0 }),
            None => return Err(OtocError::arg("two-qubit padding needs at least two qubits")),
        };
        for angle in padding_angles(d2) {
            out.push(GateOp::xx(a, b, angle))?;
        }
    }
    for angle in padding_angles(target.one_qubit - have.one_qubit) {
        out.push(GateOp::rz(wire, angle))?;
    }
    Ok(out)
}

fn padding_angles(count: usize) -> Vec<f64> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let mut v = Vec::with_capacity(count);
    match count {
        0 => {}
        1 => v.push(0.0),
        _ => {
            if count % 2 == 1 {
                v.extend([FRAC_PI_2, FRAC_PI_2, -PI]);
            }
            while v.len() < count {
                v.extend([FRAC_PI_2, -FRAC_PI_2]);
            }
        }
    }
    v
}

/// The largest preparation among the built-in layouts at `n_sites`.
pub fn padding_target(n_sites: usize) -> Result<GateCounts> {
    let mut target = GateCounts::default();
    for layout in [TfdLayout::InfiniteT, TfdLayout::FiniteT, TfdLayout::FiniteTMirrored, TfdLayout::ZeroT] {
        let ansatz = TfdAnsatz::new(n_sites, layout)?;
        let params = TfdParameters::new(vec![0.0; ansatz.n_params()], Temperature::Infinite)?;
        let c = build_tfd_circuit(&ansatz, &params)?.gate_counts();
        target.one_qubit = target.one_qubit.max(c.one_qubit);
        target.two_qubit = target.two_qubit.max(c.two_qubit);
    }
    Ok(target)
}

/// Initial state plus the (possibly empty) preparation circuit acting on it.
#[derive(Clone, Debug)]
pub struct ResolvedPrep {
    pub initial: StateVector,
    pub circuit: Circuit,
    pub summary: PrepSummary,
}

pub fn resolve_preparation(exp: &OtocExperiment, sd: &SpectralDecomposition) -> Result<ResolvedPrep> {
    let n = exp.tfim.n_sites;
    let exact = exact_tfd_state(sd, exp.temp)?;
    let (ansatz, params) = match &exp.prep {
        Preparation::ExactTfd => {
            return Ok(ResolvedPrep {
                initial: exact,
                circuit: Circuit::new(2 * n),
                summary: PrepSummary { mode: exp.prep.name(), layout: None, params: None, fidelity: 1.0 },
            });
        }
        Preparation::Variational { ansatz, params } => (ansatz.clone(), params.clone()),
        Preparation::Reference => (TfdAnsatz::for_reference(n, exp.temp)?, reference_parameters(exp.temp)?),
        Preparation::Optimized(cfg) => {
            let ansatz = TfdAnsatz::for_temperature(n, exp.temp)?;
            let cfg = OptimizerConfig { seed: derive_seed(exp.seed, &[OPTIMIZER_STREAM]), ..*cfg };
            let r = optimize_tfd(&ansatz, exp.temp, sd, &cfg)?;
            (ansatz, r.params)
        }
    };
    let circuit = build_tfd_circuit(&ansatz, &params)?;
    let initial = StateVector::new_zero_state(2 * n)?;
    let mut prepared = initial.clone();
    prepared.apply_circuit(&circuit)?;
    let fidelity = exact.fidelity(&prepared)?;
    Ok(ResolvedPrep {
        initial,
        circuit,
        summary: PrepSummary {
            mode: exp.prep.name(),
            layout: Some(ansatz.layout()),
            params: Some(params.thetas),
            fidelity,
        },
    })
}

pub fn run_experiment(exp: &OtocExperiment) -> Result<OtocSeries> {
    exp.validate()?;
    let sd = diagonalize(&build_hamiltonian(&exp.tfim)?)?;
    let prep = resolve_preparation(exp, &sd)?;
    let target = if exp.pad_depth { Some(padding_target(exp.tfim.n_sites)?) } else { None };
    run_resolved(exp, &sd, prep, target)
}

fn run_resolved(
    exp: &OtocExperiment,
    sd: &SpectralDecomposition,
    prep: ResolvedPrep,
    pad: Option<GateCounts>,
) -> Result<OtocSeries> {
    let n = exp.tfim.n_sites;
    let mut front = match pad {
        Some(target) => {
            let have = prep.circuit.gate_counts();
            let target = GateCounts {
                one_qubit: target.one_qubit.max(have.one_qubit),
                two_qubit: target.two_qubit.max(have.two_qubit),
            };
            pad_to_depth(&prep.circuit, target)?
        }
        None => prep.circuit.clone(),
    };
    let w_kind = match exp.w_pauli {
        Pauli::X => Some(GateKind::PauliX),
        Pauli::Z => Some(GateKind::PauliZ),
        _ => None,
    };
    let w_qubit = exp.w_site - 1;
    let w_string = exp.w_string();
    let v_string = exp.v_string();
    let (correlator, corr_sign) = exp.mirrored_correlator();
    let parity_op = PauliString::parity(2 * n);

    // noiseless reference trajectory
    let mut state = prep.initial.clone();
    state.apply_circuit(&front)?;
    match w_kind {
        Some(kind) => {
            let op = GateOp::new(kind, &[w_qubit], 0.0)?;
            front.push(op)?;
            state.apply_gate(&op)?;
        }
        // Y has no gate of its own; as a circuit it is Z then X up to a phase
        None => {
            front.push(GateOp::z(w_qubit))?;
            front.push(GateOp::x(w_qubit))?;
            state.apply_pauli(w_qubit, exp.w_pauli)?;
        }
    }
    let after_w = state.clone();

    let times = exp.schedule.times();
    let mut points = Vec::with_capacity(times.len());
    let mut full = front.clone();
    for (k, &t) in times.iter().enumerate() {
        if k > 0 && exp.evolution == Evolution::Trotter {
            let step = build_trotter_step_ordered(&exp.tfim, exp.schedule.steps()[k - 1], exp.order)?;
            state.apply_circuit(&step)?;
            full.extend(&step)?;
        }
        let current = match exp.evolution {
            Evolution::Trotter => state.clone(),
            Evolution::Exact => exact_two_copy_evolve(&after_w, sd, t)?,
        };
        let o_state = corr_sign * current.expectation_pauli(&correlator)?;
        let parity = current.expectation_pauli(&parity_op)?;
        let o_exact = exact_otoc(sd, exp.temp, t, &w_string, &v_string)?;

        let mut point = OtocPoint {
            t,
            step: k,
            o_exact,
            o_state,
            o_sampled: None,
            o_postselected: None,
            kept_fraction: None,
            std_error: None,
            parity,
            gate_counts: full.gate_counts(),
            starved: false,
        };
        if let Some(shots) = exp.shots {
            let bits = draw_shots(exp, &prep.initial, &full, &current, k as u64, shots)?;
            fill_statistics(&mut point, &bits, exp.v_site - 1, n, exp.expected_parity());
        }
        points.push(point);
    }
    Ok(OtocSeries { temperature: exp.temp, prep: prep.summary, points })
}

/// Computational-basis shots for time index `k`. With gate noise each shot is
/// its own trajectory through the whole circuit; otherwise all shots come from
/// the noiseless state.
fn draw_shots(
    exp: &OtocExperiment,
    initial: &StateVector,
    circuit: &Circuit,
    noiseless: &StateVector,
    k: u64,
    shots: usize,
) -> Result<Vec<Bitstring>> {
    let nm = exp.noise.unwrap_or_else(NoiseModel::noiseless);
    if nm.has_gate_errors() {
        return (0..shots)
            .into_par_iter()
            .map(|s| {
                let mut rng = substream(exp.seed, &[k, s as u64]);
                let mut psi = initial.clone();
                apply_noisy_circuit(&mut psi, circuit, &nm, &mut rng)?;
                let b = BasisSampler::new(&psi).draw(&mut rng);
                Ok(apply_readout_noise(b, nm.p_readout, &mut rng))
            })
            .collect();
    }
    let mut rng = substream(exp.seed, &[k]);
    let sampler = BasisSampler::new(noiseless);
    Ok((0..shots)
        .map(|_| {
            let b = sampler.draw(&mut rng);
            apply_readout_noise(b, nm.p_readout, &mut rng)
        })
        .collect())
}

fn fill_statistics(point: &mut OtocPoint, bits: &[Bitstring], v_qubit: usize, n: usize, parity: i32) {
    let value = |b: &Bitstring| f64::from(b.z(v_qubit) * b.z(n + v_qubit));
    let total: f64 = bits.iter().map(value).sum();
    point.o_sampled = Some(total / bits.len() as f64);

    let (kept, fraction) = postselect_parity(bits, parity);
    point.kept_fraction = Some(fraction);
    if kept.is_empty() {
        point.starved = true;
        return;
    }
    let m = kept.len() as f64;
    let mean = kept.iter().map(value).sum::<f64>() / m;
    point.o_postselected = Some(mean);
    if kept.len() >= 2 {
        let var = kept.iter().map(|b| (value(b) - mean).powi(2)).sum::<f64>() / (m - 1.0);
        point.std_error = Some((var / m).sqrt());
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepEntry {
    pub temperature: Temperature,
    pub series: OtocSeries,
    pub lambda_exact: f64,
    pub lambda_state: f64,
    pub lambda_sampled: Option<f64>,
    pub lambda_postselected: Option<f64>,
}

/// Runs `base` at every temperature, in input order. Temperature `i` uses the
/// seed `derive_seed(base.seed, [i])`. With `pad_depth`, every preparation is
/// padded to the largest one in the batch.
pub fn run_temperatures(base: &OtocExperiment, temps: &[Temperature]) -> Result<Vec<OtocSeries>> {
    if temps.is_empty() {
        return Ok(Vec::new());
    }
    base.validate()?;
    let sd = diagonalize(&build_hamiltonian(&base.tfim)?)?;
    let jobs: Vec<OtocExperiment> = temps
        .iter()
        .enumerate()
        .map(|(i, &temp)| OtocExperiment { temp, seed: derive_seed(base.seed, &[i as u64]), ..base.clone() })
        .collect();
    let preps = jobs.par_iter().map(|e| resolve_preparation(e, &sd)).collect::<Result<Vec<_>>>()?;
    let pad = if base.pad_depth {
        let mut target = padding_target(base.tfim.n_sites)?;
        for p in &preps {
            let c = p.circuit.gate_counts();
            target.one_qubit = target.one_qubit.max(c.one_qubit);
            target.two_qubit = target.two_qubit.max(c.two_qubit);
        }
        Some(target)
    } else {
        None
    };
    jobs.into_par_iter().zip(preps).map(|(exp, prep)| run_resolved(&exp, &sd, prep, pad)).collect()
}

/// [`run_temperatures`] plus the decay rate of every series variant.
pub fn temperature_sweep(base: &OtocExperiment, temps: &[Temperature]) -> Result<Vec<SweepEntry>> {
    run_temperatures(base, temps)?
        .into_iter()
        .map(|series| {
            let optional = |f| decay_rate(&series, f).ok().map(|d| d.lambda);
            Ok(SweepEntry {
                temperature: series.temperature,
                lambda_exact: decay_rate(&series, SeriesField::Exact)?.lambda,
                lambda_state: decay_rate(&series, SeriesField::State)?.lambda,
                lambda_sampled: optional(SeriesField::Sampled),
                lambda_postselected: optional(SeriesField::Postselected),
                series,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit3() -> TfimParams {
        TfimParams::unit(3)
    }

    #[test]
    fn default_schedule_times() {
        let t = TrotterSchedule::default().times();
        assert_eq!(t.len(), 4);
        assert!((t[2] - 0.4).abs() < 1e-15 && (t[3] - 0.8).abs() < 1e-15);
        assert!(TrotterSchedule::new(vec![0.1, 0.0]).is_err());
        assert!(TrotterSchedule::new(vec![-0.1]).is_err());
    }

    #[test]
    fn trotter_step_gate_count_and_angles() {
        let c = build_trotter_step(&unit3(), 0.2).unwrap();
        assert_eq!(c.len(), 10);
        assert_eq!(c.gate_counts(), GateCounts { one_qubit: 6, two_qubit: 4 });
        let ops = c.ops();
        assert_eq!((ops[0].kind, ops[0].targets(), ops[0].angle), (GateKind::XX, &[0, 1][..], 0.4));
        assert_eq!((ops[2].kind, ops[2].angle), (GateKind::RZ, 0.4));
        assert_eq!((ops[5].kind, ops[5].targets(), ops[5].angle), (GateKind::XX, &[3, 4][..], -0.4));
        assert_eq!((ops[9].kind, ops[9].targets(), ops[9].angle), (GateKind::RZ, &[5][..], -0.4));
        assert!(build_trotter_step(&unit3(), 0.0).is_err());
    }

    #[test]
    fn trotter_order_parsing() {
        let o: TrotterOrder = "b_fields,a_bonds,a_fields,b_bonds".parse().unwrap();
        assert_eq!(o.to_string(), "b_fields,a_bonds,a_fields,b_bonds");
        assert!("a_bonds,a_bonds,b_bonds,b_fields".parse::<TrotterOrder>().is_err());
        assert!("a_bonds".parse::<TrotterOrder>().is_err());
        assert_eq!(TrotterOrder::default().to_string().parse::<TrotterOrder>().unwrap(), TrotterOrder::default());
    }

    #[test]
    fn postselection_examples() {
        let shots: Vec<Bitstring> = ["100000", "110000", "111000"].iter().map(|s| s.parse().unwrap()).collect();
        let (kept, frac) = postselect(&shots);
        assert_eq!(kept.len(), 2);
        assert!((frac - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(postselect(&[]).1, 0.0);
    }

    fn series_from(values: &[(f64, f64)]) -> OtocSeries {
        OtocSeries {
            temperature: Temperature::Infinite,
            prep: PrepSummary { mode: "exact", layout: None, params: None, fidelity: 1.0 },
            points: values
                .iter()
                .enumerate()
                .map(|(k, &(t, o))| OtocPoint {
                    t,
                    step: k,
                    o_exact: o,
                    o_state: o,
                    o_sampled: None,
                    o_postselected: None,
                    kept_fraction: None,
                    std_error: None,
                    parity: -1.0,
                    gate_counts: GateCounts::default(),
                    starved: false,
                })
                .collect(),
        }
    }

    #[test]
    fn decay_rate_examples() {
        let constant = series_from(&[(0.0, 0.3), (0.4, 0.3), (0.8, 0.3)]);
        assert_eq!(decay_rate(&constant, SeriesField::State).unwrap().lambda, 0.0);
        let s = series_from(&[(0.4, -0.9), (0.8, -0.5)]);
        assert!((decay_rate(&s, SeriesField::Exact).unwrap().lambda - 1.0).abs() < 1e-12);
        let missing = series_from(&[(0.4, -0.9)]);
        assert!(matches!(decay_rate(&missing, SeriesField::State), Err(OtocError::MissingTimePoint { .. })));
        assert!(decay_rate(&s, SeriesField::Sampled).is_err());
    }

    #[test]
    fn padding_angles_cancel() {
        for d in 0..9 {
            let a = padding_angles(d);
            assert_eq!(a.len(), d);
            assert!(a.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn padding_is_identity_and_hits_target() {
        let c = Circuit::from_ops(4, vec![GateOp::xx(0, 2, 0.3), GateOp::rz(1, 0.5)]).unwrap();
        assert_eq!(pad_to_depth(&c, c.gate_counts()).unwrap(), c);
        let target = GateCounts { one_qubit: 6, two_qubit: 5 };
        let padded = pad_to_depth(&c, target).unwrap();
        assert_eq!(padded.gate_counts(), target);
        let mut a = StateVector::new_zero_state(4).unwrap();
        a.apply_gate(&GateOp::rx(3, 0.9)).unwrap();
        let mut b = a.clone();
        a.apply_circuit(&c).unwrap();
        b.apply_circuit(&padded).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!(pad_to_depth(&c, GateCounts { one_qubit: 0, two_qubit: 1 }).is_err());
    }

    #[test]
    fn experiment_validation() {
        let mut e = OtocExperiment::new(unit3(), Temperature::Infinite);
        e.noise = Some(NoiseModel::default());
        e.evolution = Evolution::Exact;
        assert!(matches!(run_experiment(&e), Err(OtocError::Config(_))));
        let mut e = OtocExperiment::new(unit3(), Temperature::Infinite);
        e.w_site = 4;
        assert!(run_experiment(&e).is_err());
        let mut e = OtocExperiment::new(unit3(), Temperature::Infinite);
        e.shots = Some(0);
        assert!(run_experiment(&e).is_err());
    }

    #[test]
    fn infinite_temperature_t0_is_minus_one() {
        let e = OtocExperiment::new(unit3(), Temperature::Infinite);
        let s = run_experiment(&e).unwrap();
        assert_eq!(s.points[0].t, 0.0);
        assert!((s.points[0].o_state + 1.0).abs() < 1e-10);
        assert_eq!(s.points.len(), 4);
    }

    #[test]
    fn empty_sweep() {
        let e = OtocExperiment::new(unit3(), Temperature::Infinite);
        assert!(temperature_sweep(&e, &[]).unwrap().is_empty());
    }
}
