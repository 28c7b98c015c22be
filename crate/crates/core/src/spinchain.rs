//! Exact-diagonalization oracle for the open transverse-field Ising chain
//!
//! `H = J Σ_{i<N} σˣ_i σˣ_{i+1} + g Σ_i σᶻ_i`
//!
//! Everything here works from the dense spectral decomposition of `H`, which
//! is real symmetric in the computational basis. Because the eigenvectors are
//! real, `|n*⟩ = |n⟩` and `H* = H`, and the two-copy evolution
//! `exp(-i(H_A - H_B*)t)` is `exp(-iHt) ⊗ exp(+iHt)`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{OtocError, Result};
use crate::statevector::{GateKind, GateOp, Pauli, PauliString, StateVector};

/// Largest chain handled by the dense oracle (a 2^13 × 2^13 matrix).
pub const MAX_SITES: usize = 13;

/// Largest register [`gate_matrix`] will expand.
pub const MAX_GATE_MATRIX_QUBITS: usize = 6;

const SYMMETRY_TOL: f64 = 1e-12;
const IMAG_TOL: f64 = 1e-9;
const DEGENERACY_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TfimParams {
    pub n_sites: usize,
    /// `J`, nearest-neighbour σˣσˣ coupling.
    pub coupling: f64,
    /// `g`, transverse field along σᶻ.
    pub field: f64,
}

impl TfimParams {
    pub fn new(n_sites: usize, coupling: f64, field: f64) -> Result<Self> {
        let p = TfimParams { n_sites, coupling, field };
        p.validate()?;
        Ok(p)
    }

    /// `J = g = 1`, the energy unit used throughout.
    pub fn unit(n_sites: usize) -> Self {
        TfimParams { n_sites, coupling: 1.0, field: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 {
            return Err(OtocError::arg("the chain needs at least one site"));
        }
        if self.n_sites > MAX_SITES {
            return Err(OtocError::Capacity { what: "n_sites", requested: self.n_sites, limit: MAX_SITES });
        }
        if !self.coupling.is_finite() || !self.field.is_finite() {
            return Err(OtocError::arg("J and g must be finite"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }
}

/// Dimensionless temperature `k_B T / J`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Temperature {
    /// Ground-state limit.
    Zero,
    /// Strictly positive, finite.
    Finite(f64),
    /// `β = 0`.
    Infinite,
}

impl Temperature {
    /// The seven temperatures of the reference data set.
    pub const GRID: [Temperature; 7] = [
        Temperature::Zero,
        Temperature::Finite(0.5),
        Temperature::Finite(1.0),
        Temperature::Finite(2.0),
        Temperature::Finite(3.5),
        Temperature::Finite(6.0),
        Temperature::Infinite,
    ];

    pub fn from_value(t: f64) -> Result<Self> {
        if t.is_nan() || t < 0.0 {
            Err(OtocError::arg(format!("temperature must be ≥ 0 or inf, got {t}")))
        } else if t == 0.0 {
            Ok(Temperature::Zero)
        } else if t.is_infinite() {
            Ok(Temperature::Infinite)
        } else {
            Ok(Temperature::Finite(t))
        }
    }

    /// `T` as a float (`0.0` or `inf` for the limits).
    pub fn value(&self) -> f64 {
        match *self {
            Temperature::Zero => 0.0,
            Temperature::Finite(t) => t,
            Temperature::Infinite => f64::INFINITY,
        }
    }

    /// `β = 1/T`; infinite for [`Temperature::Zero`].
    pub fn beta(&self) -> f64 {
        match *self {
            Temperature::Zero => f64::INFINITY,
            Temperature::Finite(t) => 1.0 / t,
            Temperature::Infinite => 0.0,
        }
    }

    pub fn approx_eq(&self, other: &Temperature) -> bool {
        match (self, other) {
            (Temperature::Finite(a), Temperature::Finite(b)) => (a - b).abs() <= 1e-12 * a.max(*b),
            (a, b) => std::mem::discriminant(a) == std::mem::discriminant(b),
        }
    }

    pub fn total_cmp(&self, other: &Temperature) -> Ordering {
        self.value().total_cmp(&other.value())
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temperature::Zero => f.write_str("0"),
            Temperature::Finite(t) => write!(f, "{t}"),
            Temperature::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Temperature {
    type Err = OtocError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" | "∞" => Ok(Temperature::Infinite),
            "zero" => Ok(Temperature::Zero),
            other => other
                .parse::<f64>()
                .map_err(|_| OtocError::arg(format!("cannot parse temperature {s:?}")))
                .and_then(Temperature::from_value),
        }
    }
}

/// Dense complex square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    dim: usize,
    entries: Vec<Complex64>,
}

impl DenseOperator {
    pub fn zeros(dim: usize) -> Self {
        DenseOperator { dim, entries: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = DenseOperator::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(OtocError::arg(format!("{} entries for a {dim}×{dim} matrix", entries.len())));
        }
        Ok(DenseOperator { dim, entries })
    }

    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        DenseOperator::from_rows(dim, entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = DenseOperator::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.entries[i * values.len() + i] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Matrix of a Pauli string with qubit 0 as the least significant bit.
    pub fn pauli(p: &PauliString) -> Self {
        let dim = 1usize << p.len();
        let (xm, zm) = (p.x_mask(), p.z_mask());
        let phase = match p.y_count() % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        let mut m = DenseOperator::zeros(dim);
        for b in 0..dim {
            let sign = if (b & zm).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            m.entries[(b ^ xm) * dim + b] = phase * sign;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.entries[row * self.dim + col] = v;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn matmul(&self, other: &DenseOperator) -> DenseOperator {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let d = self.dim;
        let mut out = DenseOperator::zeros(d);
        for i in 0..d {
            let row = &self.entries[i * d..(i + 1) * d];
            let dst = &mut out.entries[i * d..(i + 1) * d];
            for (k, &a) in row.iter().enumerate() {
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let src = &other.entries[k * d..(k + 1) * d];
                for (o, &b) in dst.iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> DenseOperator {
        let d = self.dim;
        let mut out = DenseOperator::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.entries[j * d + i] = self.entries[i * d + j].conj();
            }
        }
        out
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim;
        (0..d).map(|i| self.entries[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.entries[i * self.dim + i]).sum()
    }

    pub fn max_abs_diff(&self, other: &DenseOperator) -> f64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `max |M - M†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[i * d + j] - self.entries[j * d + i].conj()).norm());
            }
        }
        worst
    }

    fn max_imag(&self) -> f64 {
        self.entries.iter().map(|a| a.im.abs()).fold(0.0, f64::max)
    }
}

/// Builds the TFIM Hamiltonian on `n_sites` qubits (qubit `i` is site `i+1`).
pub fn build_hamiltonian(p: &TfimParams) -> Result<DenseOperator> {
    p.validate()?;
    let n = p.n_sites;
    let dim = p.dim();
    let mut h = DenseOperator::zeros(dim);
    for b in 0..dim {
        let magnetization: f64 = (0..n).map(|i| if b >> i & 1 == 0 { 1.0 } else { -1.0 }).sum();
        h.entries[b * dim + b] += Complex64::new(p.field * magnetization, 0.0);
        for i in 0..n.saturating_sub(1) {
            let partner = b ^ (0b11 << i);
            h.entries[partner * dim + b] += Complex64::new(p.coupling, 0.0);
        }
    }
    Ok(h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    /// Row-major `dim × dim`; column `n` is `|n⟩`.
    eigenvectors: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of sites `N` with `2^N = dim`.
    pub fn n_sites(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `⟨basis|n⟩`.
    pub fn component(&self, basis: usize, n: usize) -> f64 {
        self.eigenvectors[basis * self.dim() + n]
    }

    pub fn eigenvector(&self, n: usize) -> Vec<f64> {
        (0..self.dim()).map(|b| self.component(b, n)).collect()
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn gap(&self) -> f64 {
        if self.dim() < 2 {
            f64::INFINITY
        } else {
            self.eigenvalues[1] - self.eigenvalues[0]
        }
    }

    /// `e^{-β(E_n - E_0)/2}` for every level, the unnormalized TFD amplitudes.
    pub fn thermal_amplitudes(&self, temp: Temperature) -> Result<Vec<f64>> {
        let e0 = self.ground_energy();
        match temp {
            Temperature::Infinite => Ok(vec![1.0; self.dim()]),
            Temperature::Zero => {
                let gap = self.gap();
                if gap <= DEGENERACY_TOL {
                    return Err(OtocError::DegenerateGround { gap });
                }
                let mut w = vec![0.0; self.dim()];
                w[0] = 1.0;
                Ok(w)
            }
            Temperature::Finite(t) => {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(OtocError::arg(format!("finite temperature must be positive, got {t}")));
                }
                Ok(self.eigenvalues.iter().map(|e| (-(e - e0) / (2.0 * t)).exp()).collect())
            }
        }
    }

    /// `Z = Tr e^{-βH}` for a finite, positive temperature.
    pub fn partition_function(&self, temp: Temperature) -> Result<f64> {
        match temp {
            Temperature::Finite(t) => Ok(self.eigenvalues.iter().map(|e| (-e / t).exp()).sum()),
            Temperature::Infinite => Ok(self.dim() as f64),
            Temperature::Zero => Err(OtocError::arg("partition function diverges at zero temperature")),
        }
    }

    /// `Σ_n f(E_n) |n⟩⟨n|`.
    pub fn function_of(&self, f: impl Fn(f64) -> Complex64) -> DenseOperator {
        let d = self.dim();
        let fe: Vec<Complex64> = self.eigenvalues.iter().map(|&e| f(e)).collect();
        let mut out = DenseOperator::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for (n, &w) in fe.iter().enumerate() {
                    acc += w * (self.component(i, n) * self.component(j, n));
                }
                out.entries[i * d + j] = acc;
            }
        }
        out
    }

    /// `exp(-iHt)`.
    pub fn propagator(&self, t: f64) -> DenseOperator {
        self.function_of(|e| Complex64::from_polar(1.0, -e * t))
    }

    /// `S† M S`, the matrix of `M` in the eigenbasis.
    pub fn to_eigenbasis(&self, m: &DenseOperator) -> DenseOperator {
        let d = self.dim();
        let mut tmp = DenseOperator::zeros(d);
        // tmp = M S
        for i in 0..d {
            for n in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += m.entries[i * d + k] * self.component(k, n);
                }
                tmp.entries[i * d + n] = acc;
            }
        }
        let mut out = DenseOperator::zeros(d);
        for n in 0..d {
            for mm in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += self.component(k, n) * tmp.entries[k * d + mm];
                }
                out.entries[n * d + mm] = acc;
            }
        }
        out
    }
}

/// Diagonalizes a real symmetric matrix with cyclic Jacobi rotations.
pub fn diagonalize(h: &DenseOperator) -> Result<SpectralDecomposition> {
    let d = h.dim();
    if d == 0 {
        return Err(OtocError::arg("cannot diagonalize an empty matrix"));
    }
    let deviation = h.hermiticity_defect().max(h.max_imag());
    if deviation > SYMMETRY_TOL {
        return Err(OtocError::NotSymmetric { deviation });
    }
    let mut a: Vec<f64> = h.entries.iter().map(|z| z.re).collect();
    // symmetrize exactly so rotations see a symmetric matrix
    for i in 0..d {
        for j in i + 1..d {
            let m = 0.5 * (a[i * d + j] + a[j * d + i]);
            a[i * d + j] = m;
            a[j * d + i] = m;
        }
    }
    let original = a.clone();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }

    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                s += a[i * d + j] * a[i * d + j];
            }
        }
        (2.0 * s).sqrt()
    };

    let target = f64::EPSILON * frob.max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_norm(&a) <= target {
            converged = true;
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_norm(&a) > target * 1e3 {
        return Err(OtocError::Convergence { sweeps: MAX_SWEEPS, residual: off_norm(&a) });
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[i * d + i].total_cmp(&a[j * d + j]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * d + i]).collect();
    let mut eigenvectors = vec![0.0; d * d];
    for (n, &col) in order.iter().enumerate() {
        // fix the sign: largest-magnitude component positive
        let mut pivot = 0;
        for k in 0..d {
            if v[k * d + col].abs() > v[pivot * d + col].abs() + 1e-12 {
                pivot = k;
            }
        }
        let sign = if v[pivot * d + col] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..d {
            eigenvectors[k * d + n] = sign * v[k * d + col];
        }
    }

    let sd = SpectralDecomposition { eigenvalues, eigenvectors };
    let residual = max_relative_residual(&original, &sd);
    if residual > 1e-9 {
        return Err(OtocError::Convergence { sweeps: MAX_SWEEPS, residual });
    }
    Ok(sd)
}

/// `max_n ‖H v_n − E_n v_n‖₂ / max(1, |E_n|)`.
fn max_relative_residual(h: &[f64], sd: &SpectralDecomposition) -> f64 {
    let d = sd.dim();
    let mut worst = 0.0f64;
    for n in 0..d {
        let e = sd.eigenvalues[n];
        let mut r2 = 0.0;
        for i in 0..d {
            let hv: f64 = (0..d).map(|k| h[i * d + k] * sd.component(k, n)).sum();
            let r = hv - e * sd.component(i, n);
            r2 += r * r;
        }
        worst = worst.max(r2.sqrt() / e.abs().max(1.0));
    }
    worst
}

/// Residual check exposed for tests and diagnostics.
pub fn spectral_residual(h: &DenseOperator, sd: &SpectralDecomposition) -> f64 {
    let re: Vec<f64> = h.entries().iter().map(|z| z.re).collect();
    max_relative_residual(&re, sd)
}

/// `Σ_n w_n |n⟩_A |n⟩_B / √(Σ w_n²)` on `2N` qubits.
pub fn exact_tfd_state(sd: &SpectralDecomposition, temp: Temperature) -> Result<StateVector> {
    let n = sd.n_sites();
    let d = sd.dim();
    let w = sd.thermal_amplitudes(temp)?;
    let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut amps = vec![Complex64::new(0.0, 0.0); d * d];
    for b in 0..d {
        for a in 0..d {
            let mut acc = 0.0;
            for (level, &wl) in w.iter().enumerate() {
                if wl != 0.0 {
                    acc += wl * sd.component(a, level) * sd.component(b, level);
                }
            }
            amps[a | (b << n)] = Complex64::new(acc / norm, 0.0);
        }
    }
    StateVector::from_amplitudes(amps)
}

/// Thermal OTOC `Tr(ρ^{1/2} W† V†(t) W ρ^{1/2} V(t))` straight from the spectrum.
///
/// `w` and `v` act on a single copy (`N` qubits).
pub fn exact_otoc(
    sd: &SpectralDecomposition,
    temp: Temperature,
    t: f64,
    w: &PauliString,
    v: &PauliString,
) -> Result<f64> {
    let n = sd.n_sites();
    if w.len() != n || v.len() != n {
        return Err(OtocError::arg(format!("W and V must act on {n} sites, got lengths {} and {}", w.len(), v.len())));
    }
    let d = sd.dim();
    let weights = sd.thermal_amplitudes(temp)?;
    let z: f64 = weights.iter().map(|x| x * x).sum();

    let w_eig = sd.to_eigenbasis(&DenseOperator::pauli(w));
    let mut v_t = sd.to_eigenbasis(&DenseOperator::pauli(v));
    let e = sd.eigenvalues();
    for row in 0..d {
        for col in 0..d {
            let phase = Complex64::from_polar(1.0, (e[row] - e[col]) * t);
            let idx = row * d + col;
            v_t.entries[idx] *= phase;
        }
    }
    let a = w_eig.adjoint().matmul(&v_t.adjoint()).matmul(&w_eig);
    let mut acc = Complex64::new(0.0, 0.0);
    for row in 0..d {
        if weights[row] == 0.0 {
            continue;
        }
        for col in 0..d {
            if weights[col] == 0.0 {
                continue;
            }
            acc += weights[row] * a.get(row, col) * weights[col] * v_t.get(col, row);
        }
    }
    let value = acc / z;
    if value.im.abs() > IMAG_TOL {
        return Err(OtocError::ImaginaryResidual { what: "thermal OTOC", residual: value.im.abs() });
    }
    Ok(value.re)
}

/// Applies `exp(-iHt)` to copy A and `exp(+iHt)` to copy B.
pub fn exact_two_copy_evolve(state: &StateVector, sd: &SpectralDecomposition, t: f64) -> Result<StateVector> {
    let n = sd.n_sites();
    if state.n_qubits() != 2 * n {
        return Err(OtocError::arg(format!(
            "two-copy evolution of a {}-site chain needs {} qubits, state has {}",
            n,
            2 * n,
            state.n_qubits()
        )));
    }
    let d = sd.dim();
    let e = sd.eigenvalues();
    let psi = state.amplitudes();
    // rotate both copies into the eigenbasis, attach phases, rotate back
    let mut m = vec![Complex64::new(0.0, 0.0); d * d]; // m[b*d + a]
    let mut tmp = vec![Complex64::new(0.0, 0.0); d * d];
    // A side: tmp[b][k] = Σ_a S[a][k] ψ[b][a]
    for b in 0..d {
        for k in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..d {
                acc += sd.component(a, k) * psi[a | (b << n)];
            }
            tmp[b * d + k] = acc;
        }
    }
    // B side: m[l][k] = Σ_b S[b][l] tmp[b][k], then phase
    for l in 0..d {
        for k in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..d {
                acc += sd.component(b, l) * tmp[b * d + k];
            }
            m[l * d + k] = acc * Complex64::from_polar(1.0, -(e[k] - e[l]) * t);
        }
    }
    // back: tmp[b][k] = Σ_l S[b][l] m[l][k]
    for b in 0..d {
        for k in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..d {
                acc += sd.component(b, l) * m[l * d + k];
            }
            tmp[b * d + k] = acc;
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    for b in 0..d {
        for a in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..d {
                acc += sd.component(a, k) * tmp[b * d + k];
            }
            out[a | (b << n)] = acc;
        }
    }
    StateVector::from_amplitudes(out)
}

/// Full `2^n × 2^n` unitary of one gate, built by Kronecker placement.
pub fn gate_matrix(op: &GateOp, n_qubits: usize) -> Result<DenseOperator> {
    if n_qubits > MAX_GATE_MATRIX_QUBITS {
        return Err(OtocError::Capacity {
            what: "gate matrix qubits",
            requested: n_qubits,
            limit: MAX_GATE_MATRIX_QUBITS,
        });
    }
    if op.targets().iter().any(|&q| q >= n_qubits) {
        return Err(OtocError::arg(format!("gate {op:?} does not fit in {n_qubits} qubits")));
    }
    let letter = match op.kind {
        GateKind::RZ | GateKind::ZZ | GateKind::PauliZ => Pauli::Z,
        GateKind::RX | GateKind::XX | GateKind::PauliX => Pauli::X,
    };
    let mut p = PauliString::identity(n_qubits);
    for &q in op.targets() {
        p = p.with(q, letter)?;
    }
    let pm = kron_pauli(&p);
    if !op.kind.is_rotation() {
        return Ok(pm);
    }
    let (c, s) = ((op.angle / 2.0).cos(), (op.angle / 2.0).sin());
    let dim = 1 << n_qubits;
    let mut u = DenseOperator::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            let id = if i == j { c } else { 0.0 };
            u.set(i, j, Complex64::new(id, 0.0) + Complex64::new(0.0, -s) * pm.get(i, j));
        }
    }
    Ok(u)
}

/// Pauli string matrix by explicit Kronecker products, qubit 0 rightmost.
fn kron_pauli(p: &PauliString) -> DenseOperator {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let single = |l: Pauli| -> [Complex64; 4] {
        match l {
            Pauli::I => [one, zero, zero, one],
            Pauli::X => [zero, one, one, zero],
            Pauli::Y => [zero, -i, i, zero],
            Pauli::Z => [one, zero, zero, -one],
        }
    };
    let mut acc = DenseOperator { dim: 1, entries: vec![one] };
    for &l in p.letters().iter().rev() {
        let s = single(l);
        let d = acc.dim;
        let nd = 2 * d;
        let mut next = DenseOperator::zeros(nd);
        for r in 0..d {
            for c in 0..d {
                let a = acc.entries[r * d + c];
                for sr in 0..2 {
                    for sc in 0..2 {
                        next.entries[(r * 2 + sr) * nd + (c * 2 + sc)] = a * s[sr * 2 + sc];
                    }
                }
            }
        }
        acc = next;
    }
    acc
}

/// `Tr_B |ψ⟩⟨ψ|` for a two-copy state, as a `2^N × 2^N` matrix.
pub fn reduced_state_a(state: &StateVector, n_sites: usize) -> Result<DenseOperator> {
    if state.n_qubits() != 2 * n_sites {
        return Err(OtocError::arg("reduced state needs a 2N-qubit state"));
    }
    let d = 1usize << n_sites;
    let psi = state.amplitudes();
    let mut rho = DenseOperator::zeros(d);
    for a in 0..d {
        for a2 in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..d {
                acc += psi[a | (b << n_sites)] * psi[a2 | (b << n_sites)].conj();
            }
            rho.set(a, a2, acc);
        }
    }
    Ok(rho)
}
