//! Dense state-vector simulator.
//!
//! Basis index `b` stores qubit `k` in bit `k` of `b` (qubit 0 is the least
//! significant bit). For the two-copy layout, qubits `0..N` are copy A sites
//! `1..=N` and qubits `N..2N` are copy B sites `1..=N`.
//!
//! Gate conventions: `XX(θ) = exp(-i θ/2 σˣ⊗σˣ)`, `ZZ(θ) = exp(-i θ/2 σᶻ⊗σᶻ)`,
//! `RZ(θ) = exp(-i θ/2 σᶻ)`, `RX(θ) = exp(-i θ/2 σˣ)`. Global phases are kept.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{OtocError, Result};
use crate::rng;

/// Largest register the simulator will allocate (2^26 amplitudes, 1 GiB).
pub const MAX_QUBITS: usize = 26;

/// Amplitude count above which kernels split work across threads.
const PAR_THRESHOLD: usize = 1 << 16;

const IMAG_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    RZ,
    RX,
    XX,
    ZZ,
    PauliX,
    PauliZ,
}

impl GateKind {
    pub const ALL: [GateKind; 6] =
        [GateKind::RZ, GateKind::RX, GateKind::XX, GateKind::ZZ, GateKind::PauliX, GateKind::PauliZ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::XX | GateKind::ZZ => 2,
            _ => 1,
        }
    }

    pub fn is_rotation(self) -> bool {
        !matches!(self, GateKind::PauliX | GateKind::PauliZ)
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::RZ => "RZ",
            GateKind::RX => "RX",
            GateKind::XX => "XX",
            GateKind::ZZ => "ZZ",
            GateKind::PauliX => "X",
            GateKind::PauliZ => "Z",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = OtocError;

    fn from_str(s: &str) -> Result<Self> {
        GateKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| OtocError::arg(format!("unknown gate {s:?}")))
    }
}

/// One gate of a circuit. `angle` is in radians and ignored for Pauli gates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    targets: [usize; 2],
    pub angle: f64,
}

impl GateOp {
    /// Builds a gate, checking that the target count matches the kind.
    pub fn new(kind: GateKind, targets: &[usize], angle: f64) -> Result<Self> {
        if targets.len() != kind.arity() {
            return Err(OtocError::arg(format!("{kind:?} takes {} target(s), got {}", kind.arity(), targets.len())));
        }
        if kind.arity() == 2 && targets[0] == targets[1] {
            return Err(OtocError::arg(format!("{kind:?} targets must be distinct, got ({0}, {0})", targets[0])));
        }
        if !angle.is_finite() {
            return Err(OtocError::arg(format!("gate angle must be finite, got {angle}")));
        }
        let second = if kind.arity() == 2 { targets[1] } else { targets[0] };
        Ok(GateOp { kind, targets: [targets[0], second], angle: if kind.is_rotation() { angle } else { 0.0 } })
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        GateOp { kind: GateKind::RZ, targets: [q, q], angle: theta }
    }

    pub fn rx(q: usize, theta: f64) -> Self {
        GateOp { kind: GateKind::RX, targets: [q, q], angle: theta }
    }

    /// Panics if `a == b`; use [`GateOp::new`] for unchecked input.
    pub fn xx(a: usize, b: usize, theta: f64) -> Self {
        assert_ne!(a, b, "XX targets must be distinct");
        GateOp { kind: GateKind::XX, targets: [a, b], angle: theta }
    }

    /// Panics if `a == b`; use [`GateOp::new`] for unchecked input.
    pub fn zz(a: usize, b: usize, theta: f64) -> Self {
        assert_ne!(a, b, "ZZ targets must be distinct");
        GateOp { kind: GateKind::ZZ, targets: [a, b], angle: theta }
    }

    pub fn x(q: usize) -> Self {
        GateOp { kind: GateKind::PauliX, targets: [q, q], angle: 0.0 }
    }

    pub fn z(q: usize) -> Self {
        GateOp { kind: GateKind::PauliZ, targets: [q, q], angle: 0.0 }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets[..self.kind.arity()]
    }

    /// The gate undoing this one.
    pub fn inverse(&self) -> Self {
        GateOp { angle: -self.angle, ..*self }
    }

    fn check(&self, n_qubits: usize) -> Result<()> {
        for &q in self.targets() {
            if q >= n_qubits {
                return Err(OtocError::arg(format!(
                    "{:?} targets qubit {q} but the register has {n_qubits} qubits",
                    self.kind
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GateCounts {
    pub one_qubit: usize,
    pub two_qubit: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit { n_qubits, ops: Vec::new() }
    }

    pub fn from_ops(n_qubits: usize, ops: Vec<GateOp>) -> Result<Self> {
        let mut c = Circuit::new(n_qubits);
        for op in ops {
            c.push(op)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, op: GateOp) -> Result<()> {
        op.check(self.n_qubits)?;
        self.ops.push(op);
        Ok(())
    }

    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(OtocError::arg(format!(
                "cannot append a {}-qubit circuit to a {}-qubit circuit",
                other.n_qubits, self.n_qubits
            )));
        }
        self.ops.extend_from_slice(&other.ops);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn gate_counts(&self) -> GateCounts {
        let mut counts = GateCounts::default();
        for op in &self.ops {
            if op.kind.arity() == 1 {
                counts.one_qubit += 1;
            } else {
                counts.two_qubit += 1;
            }
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Pauli> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of single-qubit Paulis; letter `k` acts on qubit `k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Self {
        PauliString { letters: vec![Pauli::I; n_qubits] }
    }

    pub fn single(n_qubits: usize, qubit: usize, p: Pauli) -> Result<Self> {
        PauliString::identity(n_qubits).with(qubit, p)
    }

    /// `∏ σᶻ` over every qubit.
    pub fn parity(n_qubits: usize) -> Self {
        PauliString { letters: vec![Pauli::Z; n_qubits] }
    }

    pub fn with(mut self, qubit: usize, p: Pauli) -> Result<Self> {
        let n = self.letters.len();
        let slot = self
            .letters
            .get_mut(qubit)
            .ok_or_else(|| OtocError::arg(format!("qubit {qubit} out of range for {n}-qubit Pauli string")))?;
        *slot = p;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&p| p == Pauli::I)
    }

    /// Bits flipped by the string (X and Y positions).
    pub fn x_mask(&self) -> usize {
        self.mask(|p| matches!(p, Pauli::X | Pauli::Y))
    }

    /// Bits picking up a sign (Y and Z positions).
    pub fn z_mask(&self) -> usize {
        self.mask(|p| matches!(p, Pauli::Y | Pauli::Z))
    }

    pub fn y_count(&self) -> usize {
        self.letters.iter().filter(|&&p| p == Pauli::Y).count()
    }

    fn mask(&self, pred: impl Fn(Pauli) -> bool) -> usize {
        self.letters.iter().enumerate().filter(|(_, &p)| pred(p)).fold(0, |m, (k, _)| m | (1 << k))
    }

    /// `i^{#Y}`, the constant phase in `P = i^{#Y} X^{x_mask} Z^{z_mask}`.
    fn y_phase(&self) -> Complex64 {
        match self.y_count() % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl FromStr for PauliString {
    type Err = OtocError;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| OtocError::arg(format!("bad Pauli letter {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(PauliString { letters })
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

/// One computational-basis measurement record.
///
/// Printed with qubit 0 first, so `"100000"` has only qubit 0 in `|1⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Bitstring {
    bits: u64,
    len: u8,
}

impl Bitstring {
    pub fn new(bits: u64, len: usize) -> Self {
        debug_assert!(len <= 64);
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        Bitstring { bits: bits & mask, len: len as u8 }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, q: usize) -> bool {
        (self.bits >> q) & 1 == 1
    }

    /// Spin value of qubit `q`: `|0⟩ ↦ +1`, `|1⟩ ↦ −1`.
    pub fn z(&self, q: usize) -> i32 {
        if self.bit(q) {
            -1
        } else {
            1
        }
    }

    pub fn ones(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Product of all spin values.
    pub fn parity(&self) -> i32 {
        if self.ones().is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    pub fn flip(&mut self, q: usize) {
        self.bits ^= 1 << q;
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.len() {
            f.write_str(if self.bit(q) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Bitstring {
    type Err = OtocError;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() > 64 {
            return Err(OtocError::arg("bitstring longer than 64 bits"));
        }
        let mut bits = 0u64;
        for (q, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => bits |= 1 << q,
                _ => return Err(OtocError::arg(format!("bad bit {c:?} in {s:?}"))),
            }
        }
        Ok(Bitstring::new(bits, s.len()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn new_zero_state(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(OtocError::arg("a state needs at least one qubit"));
        }
        if n_qubits > MAX_QUBITS {
            return Err(OtocError::Capacity { what: "n_qubits", requested: n_qubits, limit: MAX_QUBITS });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    /// Wraps raw amplitudes; the length must be a power of two. No normalization.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(OtocError::arg(format!("amplitude count {len} is not 2^n with n ≥ 1")));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(OtocError::Capacity { what: "n_qubits", requested: n_qubits, limit: MAX_QUBITS });
        }
        Ok(StateVector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            let inv = 1.0 / n;
            self.amps.iter_mut().for_each(|a| *a *= inv);
        }
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.amps.iter_mut().for_each(|a| *a *= factor);
    }

    pub fn apply_gate(&mut self, op: &GateOp) -> Result<()> {
        op.check(self.n_qubits)?;
        let half = op.angle / 2.0;
        let (c, s) = (half.cos(), half.sin());
        match op.kind {
            GateKind::RZ => {
                let m = 1usize << op.targets[0];
                let p0 = Complex64::new(c, -s);
                let p1 = Complex64::new(c, s);
                diagonal(&mut self.amps, |i| if i & m == 0 { p0 } else { p1 });
            }
            GateKind::ZZ => {
                let (ma, mb) = (1usize << op.targets[0], 1usize << op.targets[1]);
                let same = Complex64::new(c, -s);
                let diff = Complex64::new(c, s);
                diagonal(&mut self.amps, |i| if (i & ma == 0) == (i & mb == 0) { same } else { diff });
            }
            GateKind::PauliZ => {
                let m = 1usize << op.targets[0];
                let one = Complex64::new(1.0, 0.0);
                diagonal(&mut self.amps, |i| if i & m == 0 { one } else { -one });
            }
            GateKind::RX => {
                let q = op.targets[0];
                paired(&mut self.amps, q, 1 << q, |a, b| {
                    let (x, y) = (*a, *b);
                    *a = x * c + Complex64::new(0.0, -s) * y;
                    *b = y * c + Complex64::new(0.0, -s) * x;
                });
            }
            GateKind::XX => {
                let (a, b) = (op.targets[0], op.targets[1]);
                let low = a.min(b);
                let flip = (1usize << a) | (1usize << b);
                xx_kernel(&mut self.amps, low, a.max(b), flip, c, s);
            }
            GateKind::PauliX => {
                let q = op.targets[0];
                paired(&mut self.amps, q, 1 << q, std::mem::swap);
            }
        }
        Ok(())
    }

    pub fn apply_circuit(&mut self, circuit: &Circuit) -> Result<()> {
        if circuit.n_qubits() != self.n_qubits {
            return Err(OtocError::arg(format!(
                "circuit is on {} qubits but the state has {}",
                circuit.n_qubits(),
                self.n_qubits
            )));
        }
        for op in circuit.ops() {
            self.apply_gate(op)?;
        }
        Ok(())
    }

    /// Applies a single-qubit Pauli (including Y) as an operator, not a gate.
    pub fn apply_pauli(&mut self, qubit: usize, p: Pauli) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(OtocError::arg(format!("qubit {qubit} out of range")));
        }
        match p {
            Pauli::I => {}
            Pauli::X => self.apply_gate(&GateOp::x(qubit))?,
            Pauli::Z => self.apply_gate(&GateOp::z(qubit))?,
            Pauli::Y => {
                // Y = i X Z
                self.apply_gate(&GateOp::z(qubit))?;
                self.apply_gate(&GateOp::x(qubit))?;
                self.scale(Complex64::new(0.0, 1.0));
            }
        }
        Ok(())
    }

    pub fn apply_pauli_string(&mut self, p: &PauliString) -> Result<()> {
        if p.len() != self.n_qubits {
            return Err(OtocError::arg(format!(
                "Pauli string has length {} but the state has {} qubits",
                p.len(),
                self.n_qubits
            )));
        }
        for (q, &letter) in p.letters().iter().enumerate() {
            self.apply_pauli(q, letter)?;
        }
        Ok(())
    }

    /// `⟨ψ|P|ψ⟩`, checked to be real.
    pub fn expectation_pauli(&self, p: &PauliString) -> Result<f64> {
        if p.len() != self.n_qubits {
            return Err(OtocError::arg(format!(
                "Pauli string has length {} but the state has {} qubits",
                p.len(),
                self.n_qubits
            )));
        }
        let xm = p.x_mask();
        let zm = p.z_mask();
        let amps = &self.amps;
        let term = |b: usize| {
            let v = amps[b ^ xm].conj() * amps[b];
            if (b & zm).count_ones().is_multiple_of(2) {
                v
            } else {
                -v
            }
        };
        let sum: Complex64 = if amps.len() >= PAR_THRESHOLD {
            // fixed chunking keeps the reduction order independent of thread count
            amps.par_chunks(4096)
                .enumerate()
                .map(|(k, chunk)| (0..chunk.len()).map(|j| term(k * 4096 + j)).sum::<Complex64>())
                .collect::<Vec<_>>()
                .into_iter()
                .sum()
        } else {
            (0..amps.len()).map(term).sum()
        };
        let value = p.y_phase() * sum;
        if value.im.abs() > IMAG_TOL {
            return Err(OtocError::ImaginaryResidual { what: "Pauli expectation", residual: value.im.abs() });
        }
        Ok(value.re)
    }

    /// `⟨self|other⟩`.
    pub fn inner_product(&self, other: &StateVector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(OtocError::arg(format!(
                "inner product of {}-qubit and {}-qubit states",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `|⟨self|other⟩|²`; insensitive to global phase.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner_product(other)?.norm_sqr())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `shots` independent computational-basis draws, reproducible from `seed`.
    pub fn sample_bitstrings(&self, shots: usize, seed: u64) -> Result<Vec<Bitstring>> {
        let mut rng = rng::substream(seed, &[]);
        self.sample_with(shots, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, shots: usize, rng: &mut R) -> Result<Vec<Bitstring>> {
        if shots == 0 {
            return Err(OtocError::arg("shots must be at least 1"));
        }
        let sampler = BasisSampler::new(self);
        Ok((0..shots).map(|_| sampler.draw(rng)).collect())
    }
}

/// Cumulative distribution over basis states, reusable across many draws.
pub struct BasisSampler {
    cumulative: Vec<f64>,
    n_qubits: usize,
}

impl BasisSampler {
    pub fn new(state: &StateVector) -> Self {
        let mut acc = 0.0;
        let cumulative = state
            .amps
            .iter()
            .map(|a| {
                acc += a.norm_sqr();
                acc
            })
            .collect();
        BasisSampler { cumulative, n_qubits: state.n_qubits }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Bitstring {
        let total = *self.cumulative.last().expect("non-empty state");
        let u = rng.gen::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
        Bitstring::new(idx as u64, self.n_qubits)
    }
}

fn diagonal(amps: &mut [Complex64], phase: impl Fn(usize) -> Complex64 + Sync) {
    if amps.len() >= PAR_THRESHOLD {
        amps.par_iter_mut().enumerate().for_each(|(i, a)| *a *= phase(i));
    } else {
        amps.iter_mut().enumerate().for_each(|(i, a)| *a *= phase(i));
    }
}

/// Runs `f(ψ[i], ψ[i | mask])` for every `i` with the `mask` bit clear.
///
/// `hi` is the highest bit involved; blocks of `2^(hi+1)` amplitudes are
/// independent and may be processed in parallel.
fn paired(amps: &mut [Complex64], hi: usize, mask: usize, f: impl Fn(&mut Complex64, &mut Complex64) + Sync) {
    if mask == 0 {
        return;
    }
    let block = 1usize << (hi + 1);
    let run = |chunk: &mut [Complex64]| {
        let half = mask;
        for base in (0..chunk.len()).step_by(2 * half) {
            let (lo, up) = chunk[base..base + 2 * half].split_at_mut(half);
            for (x, y) in lo.iter_mut().zip(up.iter_mut()) {
                f(x, y);
            }
        }
    };
    if amps.len() >= PAR_THRESHOLD && amps.len() / block >= 2 {
        amps.par_chunks_mut(block).for_each(run);
    } else {
        amps.chunks_mut(block).for_each(run);
    }
}

fn xx_kernel(amps: &mut [Complex64], low: usize, hi: usize, flip: usize, c: f64, s: f64) {
    let block = 1usize << (hi + 1);
    let lowmask = 1usize << low;
    let mis = Complex64::new(0.0, -s);
    let run = |chunk: &mut [Complex64]| {
        for i in 0..chunk.len() {
            if i & lowmask != 0 {
                continue;
            }
            let j = i ^ flip;
            let (x, y) = (chunk[i], chunk[j]);
            chunk[i] = x * c + mis * y;
            chunk[j] = y * c + mis * x;
        }
    };
    if amps.len() >= PAR_THRESHOLD && amps.len() / block >= 2 {
        amps.par_chunks_mut(block).for_each(run);
    } else {
        amps.chunks_mut(block).for_each(run);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_amps(state: &StateVector, expected: &[Complex64], tol: f64) {
        assert_eq!(state.dim(), expected.len());
        for (k, (a, e)) in state.amplitudes().iter().zip(expected).enumerate() {
            assert!((a - e).norm() <= tol, "amplitude {k}: {a} vs {e}");
        }
    }

    fn bell_03() -> StateVector {
        let mut amps = vec![c(0.0, 0.0); 64];
        amps[0] = c(FRAC_1_SQRT_2, 0.0);
        amps[0b1001] = c(FRAC_1_SQRT_2, 0.0);
        StateVector::from_amplitudes(amps).unwrap()
    }

    #[test]
    fn zero_state_layout() {
        let s = StateVector::new_zero_state(1).unwrap();
        assert_eq!(s.amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0)]);
        let s = StateVector::new_zero_state(2).unwrap();
        assert_eq!(s.amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn zero_state_capacity_guard() {
        match StateVector::new_zero_state(27) {
            Err(OtocError::Capacity { requested: 27, limit: 26, .. }) => {}
            other => panic!("expected capacity error, got {other:?}"),
        }
        assert!(StateVector::new_zero_state(0).is_err());
    }

    #[test]
    fn xx_pi_on_zero_gives_minus_i_11() {
        let mut s = StateVector::new_zero_state(2).unwrap();
        s.apply_gate(&GateOp::xx(0, 1, PI)).unwrap();
        assert_amps(&s, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0)], 1e-15);
    }

    #[test]
    fn xx_half_pi_on_zero() {
        let mut s = StateVector::new_zero_state(2).unwrap();
        s.apply_gate(&GateOp::xx(0, 1, PI / 2.0)).unwrap();
        let h = FRAC_1_SQRT_2;
        assert_amps(&s, &[c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -h)], 1e-15);
    }

    #[test]
    fn zero_angle_is_identity() {
        let amps: Vec<Complex64> = (0..8).map(|k| c(k as f64 * 0.1 + 0.05, 0.3 - k as f64 * 0.02)).collect();
        let reference = StateVector::from_amplitudes(amps).unwrap();
        for op in [GateOp::rz(1, 0.0), GateOp::rx(2, 0.0), GateOp::xx(0, 2, 0.0), GateOp::zz(1, 0, 0.0)] {
            let mut s = reference.clone();
            s.apply_gate(&op).unwrap();
            assert_amps(&s, reference.amplitudes(), 0.0);
        }
    }

    #[test]
    fn circuit_bell_pair_on_0_3() {
        let circuit = Circuit::from_ops(6, vec![GateOp::xx(0, 3, PI / 2.0), GateOp::rz(0, PI / 2.0)]).unwrap();
        let mut s = StateVector::new_zero_state(6).unwrap();
        s.apply_circuit(&circuit).unwrap();
        assert!((s.fidelity(&bell_03()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_circuit_leaves_state() {
        let mut s = bell_03();
        s.apply_circuit(&Circuit::new(6)).unwrap();
        assert_eq!(s, bell_03());
    }

    #[test]
    fn out_of_range_targets_rejected() {
        let mut s = StateVector::new_zero_state(6).unwrap();
        assert!(s.apply_gate(&GateOp::rz(6, 0.1)).is_err());
        assert!(Circuit::from_ops(6, vec![GateOp::xx(0, 6, 0.1)]).is_err());
        assert!(GateOp::new(GateKind::XX, &[2, 2], 0.1).is_err());
        assert!(GateOp::new(GateKind::RZ, &[1, 2], 0.1).is_err());
        let mut wrong = StateVector::new_zero_state(5).unwrap();
        assert!(wrong.apply_circuit(&Circuit::new(6)).is_err());
    }

    #[test]
    fn pauli_expectations() {
        let zero = StateVector::new_zero_state(1).unwrap();
        assert_eq!(zero.expectation_pauli(&"Z".parse().unwrap()).unwrap(), 1.0);
        assert_eq!(zero.expectation_pauli(&"X".parse().unwrap()).unwrap(), 0.0);
        let h = FRAC_1_SQRT_2;
        let bell = StateVector::from_amplitudes(vec![c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)]).unwrap();
        assert!((bell.expectation_pauli(&"ZZ".parse().unwrap()).unwrap() - 1.0).abs() < 1e-15);
        assert!((bell.expectation_pauli(&"XX".parse().unwrap()).unwrap() - 1.0).abs() < 1e-15);
        assert!((bell.expectation_pauli(&"YY".parse().unwrap()).unwrap() + 1.0).abs() < 1e-15);
        assert!(bell.expectation_pauli(&"Z".parse().unwrap()).is_err());
    }

    #[test]
    fn y_expectation_on_plus_i_state() {
        let h = FRAC_1_SQRT_2;
        let s = StateVector::from_amplitudes(vec![c(h, 0.0), c(0.0, h)]).unwrap();
        assert!((s.expectation_pauli(&"Y".parse().unwrap()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inner_products() {
        let zero = StateVector::new_zero_state(1).unwrap();
        let one = StateVector::from_amplitudes(vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let plus = StateVector::from_amplitudes(vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]).unwrap();
        assert_eq!(zero.inner_product(&zero).unwrap(), c(1.0, 0.0));
        assert_eq!(zero.inner_product(&one).unwrap(), c(0.0, 0.0));
        assert!((zero.inner_product(&plus).unwrap() - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!(zero.inner_product(&bell_03()).is_err());
    }

    #[test]
    fn sampling_zero_state() {
        let s = StateVector::new_zero_state(1).unwrap();
        let shots = s.sample_bitstrings(100, 3).unwrap();
        assert_eq!(shots.len(), 100);
        assert!(shots.iter().all(|b| b.to_string() == "0"));
        assert!(s.sample_bitstrings(0, 3).is_err());
    }

    #[test]
    fn sampling_bell_statistics_and_determinism() {
        let h = FRAC_1_SQRT_2;
        let bell = StateVector::from_amplitudes(vec![c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)]).unwrap();
        let n = 100_000;
        let shots = bell.sample_bitstrings(n, 11).unwrap();
        let zeros = shots.iter().filter(|b| b.bits() == 0).count() as f64 / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((zeros - 0.5).abs() < 5.0 * sigma, "fraction {zeros}");
        assert!(shots.iter().all(|b| b.bits() == 0 || b.bits() == 3));
        assert_eq!(shots, bell.sample_bitstrings(n, 11).unwrap());
    }

    #[test]
    fn bitstring_text_form() {
        let b: Bitstring = "100000".parse().unwrap();
        assert_eq!(b.bits(), 1);
        assert_eq!(b.to_string(), "100000");
        assert_eq!(b.parity(), -1);
        assert_eq!(b.z(0), -1);
        assert_eq!(b.z(1), 1);
        assert_eq!("110000".parse::<Bitstring>().unwrap().parity(), 1);
    }

    #[test]
    fn y_operator_matches_definition() {
        // Y|0⟩ = i|1⟩
        let mut s = StateVector::new_zero_state(1).unwrap();
        s.apply_pauli(0, Pauli::Y).unwrap();
        assert_amps(&s, &[c(0.0, 0.0), c(0.0, 1.0)], 1e-15);
    }

    #[test]
    fn gate_counts() {
        let circuit =
            Circuit::from_ops(4, vec![GateOp::xx(0, 1, 0.1), GateOp::rz(2, 0.3), GateOp::x(3), GateOp::zz(2, 3, 0.2)])
                .unwrap();
        assert_eq!(circuit.gate_counts(), GateCounts { one_qubit: 2, two_qubit: 2 });
    }
}
