//! Dense statevector simulation.
//!
//! Amplitudes are indexed little-endian: qubit 0 is the least significant bit
//! of the basis-state index, and bitstring I/O prints qubit n-1 leftmost. All
//! public operations take `&self` and return fresh states; nothing mutates a
//! caller's statevector in place.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;
use std::collections::BTreeMap;
use std::fmt;

use crate::linalg::CMatrix;
use crate::pauli::{PauliString, PauliSum};

pub const NORM_TOL: f64 = 1e-10;
pub const UNITARY_TOL: f64 = 1e-12;

/// Deterministic RNG used everywhere randomness is needed.
pub type SimRng = ChaCha12Rng;

/// Root generator for a run; child generators are split off by stream so that
/// independent tasks stay reproducible regardless of evaluation order.
pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Deterministic child generator `k` of a root seed.
pub fn child_rng(seed: u64, k: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("register size mismatch: state has {0} qubits, operand needs {1}")]
    DimensionMismatch(usize, usize),
    #[error("gate {label:?} is not unitary: max |U†U - I| = {deviation:.3e}")]
    NonUnitary { label: String, deviation: f64 },
    #[error("qubit index {0} out of range for {1} qubits")]
    QubitOutOfRange(usize, usize),
    #[error("duplicate target qubit {0}")]
    DuplicateTarget(usize),
    #[error("state is not normalized: |ψ|² = {0}")]
    NotNormalized(f64),
    #[error("forced outcome has probability {0:.3e}: impossible measurement branch")]
    ImpossibleBranch(f64),
    #[error("observable is not hermitian")]
    NotHermitian(#[from] crate::pauli::PauliError),
    #[error("expectation has imaginary residue {0:.3e}")]
    ImaginaryResidue(f64),
    #[error("shots must be >= 1")]
    NoShots,
}

/// Dense unit-norm statevector on `n` qubits.
#[derive(Debug, Clone)]
pub struct Statevector {
    n: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// |0...0⟩ on `n` qubits.
    pub fn zero(n: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Statevector { n, amps }
    }

    /// Computational basis state |index⟩.
    pub fn basis(n: usize, index: u64) -> Self {
        assert!((index as usize) < (1 << n));
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[index as usize] = Complex64::new(1.0, 0.0);
        Statevector { n, amps }
    }

    /// From raw amplitudes; must be unit norm within [`NORM_TOL`].
    pub fn from_amplitudes(n: usize, amps: Vec<Complex64>) -> Result<Self, SimError> {
        if amps.len() != 1 << n {
            return Err(SimError::DimensionMismatch(n, amps.len().trailing_zeros() as usize));
        }
        let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > NORM_TOL {
            return Err(SimError::NotNormalized(norm2));
        }
        Ok(Statevector { n, amps })
    }

    /// From unnormalized amplitudes, rescaled to unit norm.
    pub fn from_unnormalized(n: usize, mut amps: Vec<Complex64>) -> Result<Self, SimError> {
        if amps.len() != 1 << n {
            return Err(SimError::DimensionMismatch(n, amps.len().trailing_zeros() as usize));
        }
        let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if norm2 < 1e-24 {
            return Err(SimError::ImpossibleBranch(norm2));
        }
        let s = 1.0 / norm2.sqrt();
        for a in &mut amps {
            *a *= s;
        }
        Ok(Statevector { n, amps })
    }

    /// Equiprobable superposition of all basis states.
    pub fn equiprobable(n: usize) -> Self {
        let dim = 1usize << n;
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Statevector { n, amps: vec![a; dim] }
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, index: u64) -> Complex64 {
        self.amps[index as usize]
    }

    pub fn probability(&self, index: u64) -> f64 {
        self.amps[index as usize].norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Statevector) -> Complex64 {
        assert_eq!(self.n, other.n);
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// |⟨self|other⟩|².
    pub fn fidelity(&self, other: &Statevector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Tensor product `self ⊗ other`; `other`'s qubits become the low indices.
    pub fn tensor(&self, low: &Statevector) -> Statevector {
        let n = self.n + low.n;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        for (hi, &a) in self.amps.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            for (lo, &b) in low.amps.iter().enumerate() {
                amps[(hi << low.n) | lo] = a * b;
            }
        }
        Statevector { n, amps }
    }

    /// Apply a Pauli string (unitary), returning the new state.
    pub fn apply_pauli(&self, p: &PauliString) -> Result<Statevector, SimError> {
        if p.n_qubits() != self.n {
            return Err(SimError::DimensionMismatch(self.n, p.n_qubits()));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (i, &a) in self.amps.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let (j, ph) = p.apply_to_basis(i as u64);
            out[j as usize] = ph * a;
        }
        Ok(Statevector { n: self.n, amps: out })
    }

    /// Apply a weighted Pauli sum (generally non-unitary); result is not
    /// normalized. Used for oracle checks and moment evaluation.
    pub fn apply_sum_unnormalized(&self, op: &PauliSum) -> Result<Vec<Complex64>, SimError> {
        if op.n_qubits() != self.n {
            return Err(SimError::DimensionMismatch(self.n, op.n_qubits()));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (p, w) in op.iter() {
            for (i, &a) in self.amps.iter().enumerate() {
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let (j, ph) = p.apply_to_basis(i as u64);
                out[j as usize] += w * ph * a;
            }
        }
        Ok(out)
    }

    /// Dense column vector copy.
    pub fn to_cvector(&self) -> crate::linalg::CVector {
        crate::linalg::CVector::from_column_slice(&self.amps)
    }
}

impl fmt::Display for Statevector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() > 1e-20 {
                writeln!(f, "|{}⟩: {:+.6} {:+.6}i", format_bitstring(i as u64, self.n), a.re, a.im)?;
            }
        }
        Ok(())
    }
}

/// Bitstring with qubit n-1 leftmost.
pub fn format_bitstring(index: u64, n: usize) -> String {
    (0..n).rev().map(|j| if (index >> j) & 1 == 1 { '1' } else { '0' }).collect()
}

/// Parse a bitstring written qubit n-1 leftmost.
pub fn parse_bitstring(s: &str) -> u64 {
    s.chars().fold(0u64, |acc, c| (acc << 1) | (c == '1') as u64)
}

/// A dense gate on one or two target qubits.
///
/// `targets[0]` is the least significant bit of the gate's local index, so a
/// two-qubit matrix acts on |b₁b₀⟩ with b₀ the state of `targets[0]`.
#[derive(Debug, Clone)]
pub struct Gate {
    pub label: String,
    pub targets: Vec<usize>,
    matrix: Vec<Complex64>, // row-major, dim 2^k
}

impl Gate {
    /// Validates unitarity (within [`UNITARY_TOL`]) and target distinctness.
    pub fn new(label: &str, targets: Vec<usize>, matrix: Vec<Complex64>) -> Result<Self, SimError> {
        let k = targets.len();
        let dim = 1usize << k;
        assert!(matrix.len() == dim * dim, "matrix must be 2^k x 2^k");
        for (i, t) in targets.iter().enumerate() {
            if targets[..i].contains(t) {
                return Err(SimError::DuplicateTarget(*t));
            }
        }
        // max |U†U - I|
        let mut dev: f64 = 0.0;
        for r in 0..dim {
            for c in 0..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..dim {
                    acc += matrix[m * dim + r].conj() * matrix[m * dim + c];
                }
                let target = if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
                dev = dev.max((acc - target).norm());
            }
        }
        if dev > UNITARY_TOL {
            return Err(SimError::NonUnitary { label: label.to_string(), deviation: dev });
        }
        Ok(Gate { label: label.to_string(), targets, matrix })
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        1 << self.targets.len()
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Standard gate constructors (Pauli, Hadamard, phase, rotations, two-qubit).
pub mod gates {
    use super::*;

    pub fn x(t: usize) -> Gate {
        Gate::new("x", vec![t], vec![c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]).unwrap()
    }

    pub fn y(t: usize) -> Gate {
        Gate::new("y", vec![t], vec![c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]).unwrap()
    }

    pub fn z(t: usize) -> Gate {
        Gate::new("z", vec![t], vec![c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]).unwrap()
    }

    pub fn h(t: usize) -> Gate {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Gate::new("h", vec![t], vec![c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)]).unwrap()
    }

    pub fn s(t: usize) -> Gate {
        phase(t, std::f64::consts::FRAC_PI_2)
    }

    pub fn s_dagger(t: usize) -> Gate {
        phase(t, -std::f64::consts::FRAC_PI_2)
    }

    /// Phase gate P(φ) = diag(1, e^{iφ}).
    pub fn phase(t: usize, phi: f64) -> Gate {
        Gate::new("p", vec![t], vec![c(1., 0.), c(0., 0.), c(0., 0.), Complex64::from_polar(1.0, phi)]).unwrap()
    }

    pub fn rx(t: usize, theta: f64) -> Gate {
        let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        Gate::new("rx", vec![t], vec![c(co, 0.), c(0., -si), c(0., -si), c(co, 0.)]).unwrap()
    }

    pub fn ry(t: usize, theta: f64) -> Gate {
        let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        Gate::new("ry", vec![t], vec![c(co, 0.), c(-si, 0.), c(si, 0.), c(co, 0.)]).unwrap()
    }

    pub fn rz(t: usize, theta: f64) -> Gate {
        let e = Complex64::from_polar(1.0, theta / 2.0);
        Gate::new("rz", vec![t], vec![e.conj(), c(0., 0.), c(0., 0.), e]).unwrap()
    }

    /// CNOT; `control` and `target` are register qubit indices.
    pub fn cnot(control: usize, target: usize) -> Gate {
        // Local basis |b1 b0⟩ with b0 = targets[0] = control.
        let mut m = vec![c(0., 0.); 16];
        for b0 in 0..2usize {
            for b1 in 0..2usize {
                let col = (b1 << 1) | b0;
                let row = ((b1 ^ b0) << 1) | b0;
                m[row * 4 + col] = c(1., 0.);
            }
        }
        Gate::new("cnot", vec![control, target], m).unwrap()
    }

    pub fn cz(a: usize, b: usize) -> Gate {
        let mut m = vec![c(0., 0.); 16];
        for k in 0..4 {
            m[k * 4 + k] = if k == 3 { c(-1., 0.) } else { c(1., 0.) };
        }
        Gate::new("cz", vec![a, b], m).unwrap()
    }

    pub fn swap(a: usize, b: usize) -> Gate {
        let mut m = vec![c(0., 0.); 16];
        for b0 in 0..2usize {
            for b1 in 0..2usize {
                let col = (b1 << 1) | b0;
                let row = (b0 << 1) | b1;
                m[row * 4 + col] = c(1., 0.);
            }
        }
        Gate::new("swap", vec![a, b], m).unwrap()
    }

    /// Controlled phase: diag(1,1,1,e^{iφ}).
    pub fn cphase(a: usize, b: usize, phi: f64) -> Gate {
        let mut m = vec![c(0., 0.); 16];
        for k in 0..4 {
            m[k * 4 + k] = if k == 3 { Complex64::from_polar(1.0, phi) } else { c(1., 0.) };
        }
        Gate::new("cp", vec![a, b], m).unwrap()
    }

    /// e^{-i (θ/2) (X⊗X + Y⊗Y)}: mixes |01⟩ and |10⟩.
    pub fn rxx_plus_yy(a: usize, b: usize, theta: f64) -> Gate {
        let (co, si) = (theta.cos(), theta.sin());
        let mut m = vec![c(0., 0.); 16];
        m[0] = c(1., 0.);
        m[15] = c(1., 0.);
        m[1 * 4 + 1] = c(co, 0.);
        m[1 * 4 + 2] = c(0., -si);
        m[2 * 4 + 1] = c(0., -si);
        m[2 * 4 + 2] = c(co, 0.);
        Gate::new("rxx+yy", vec![a, b], m).unwrap()
    }

    /// R_zz(θ) = e^{-i (θ/2) Z⊗Z}.
    pub fn rzz(a: usize, b: usize, theta: f64) -> Gate {
        let e = Complex64::from_polar(1.0, -theta / 2.0);
        let m = vec![
            e, c(0., 0.), c(0., 0.), c(0., 0.),
            c(0., 0.), e.conj(), c(0., 0.), c(0., 0.),
            c(0., 0.), c(0., 0.), e.conj(), c(0., 0.),
            c(0., 0.), c(0., 0.), c(0., 0.), e,
        ];
        Gate::new("rzz", vec![a, b], m).unwrap()
    }
}

/// Ordered gate sequence on a fixed register, applied left to right.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    /// Scalar phase e^{iφ} applied once per circuit application. Irrelevant on
    /// its own, but physical once the circuit is applied under control.
    pub global_phase: f64,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit { n_qubits, gates: Vec::new(), global_phase: 0.0 }
    }

    pub fn push(&mut self, gate: Gate) -> &mut Self {
        for &t in &gate.targets {
            assert!(t < self.n_qubits, "gate target {} out of range", t);
        }
        self.gates.push(gate);
        self
    }

    pub fn extend(&mut self, other: &Circuit) {
        assert_eq!(self.n_qubits, other.n_qubits);
        self.gates.extend(other.gates.iter().cloned());
        self.global_phase += other.global_phase;
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Dense unitary of the whole circuit (test/oracle scale only).
    pub fn to_matrix(&self) -> CMatrix {
        let dim = 1usize << self.n_qubits;
        let mut m = CMatrix::zeros(dim, dim);
        for col in 0..dim {
            let basis = Statevector::basis(self.n_qubits, col as u64);
            let out = apply_circuit(&basis, self).expect("self-consistent circuit");
            for row in 0..dim {
                m[(row, col)] = out.amps[row];
            }
        }
        m
    }
}

/// In-place gate kernel with a control condition: the gate acts only on basis
/// states whose index satisfies `index & ctrl_mask == ctrl_value`.
fn apply_gate_in_place(amps: &mut [Complex64], n: usize, gate: &Gate, ctrl_mask: u64, ctrl_value: u64) {
    let k = gate.targets.len();
    let dim = 1usize << k;
    let mut target_mask = 0u64;
    for &t in &gate.targets {
        assert!(t < n);
        target_mask |= 1 << t;
    }
    debug_assert_eq!(target_mask & ctrl_mask, 0, "controls overlap targets");
    let size = amps.len() as u64;
    let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
    let m = &gate.matrix;
    for base in 0..size {
        if base & target_mask != 0 || (base & ctrl_mask) != ctrl_value {
            continue;
        }
        for col in 0..dim {
            let mut idx = base;
            for (j, &t) in gate.targets.iter().enumerate() {
                if (col >> j) & 1 == 1 {
                    idx |= 1 << t;
                }
            }
            scratch[col] = amps[idx as usize];
        }
        for row in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for col in 0..dim {
                acc += m[row * dim + col] * scratch[col];
            }
            let mut idx = base;
            for (j, &t) in gate.targets.iter().enumerate() {
                if (row >> j) & 1 == 1 {
                    idx |= 1 << t;
                }
            }
            amps[idx as usize] = acc;
        }
    }
}

/// Returns U_m … U_1 |ψ⟩. Norm is preserved by construction; a debug assert
/// guards against accidental non-unitarity.
pub fn apply_circuit(state: &Statevector, circuit: &Circuit) -> Result<Statevector, SimError> {
    if circuit.n_qubits != state.n {
        return Err(SimError::DimensionMismatch(state.n, circuit.n_qubits));
    }
    let mut out = state.clone();
    for gate in &circuit.gates {
        for &t in &gate.targets {
            if t >= out.n {
                return Err(SimError::QubitOutOfRange(t, out.n));
            }
        }
        apply_gate_in_place(&mut out.amps, out.n, gate, 0, 0);
    }
    if circuit.global_phase != 0.0 {
        let ph = Complex64::from_polar(1.0, circuit.global_phase);
        for a in &mut out.amps {
            *a *= ph;
        }
    }
    debug_assert!((out.norm() - 1.0).abs() < NORM_TOL);
    Ok(out)
}

/// Apply `circuit` to the sub-register `[0, circuit.n_qubits)` of a larger
/// state, restricted to the subspace where `index & ctrl_mask == ctrl_value`.
/// The control bits must live outside the circuit's register.
pub fn apply_circuit_controlled(
    state: &Statevector,
    circuit: &Circuit,
    ctrl_mask: u64,
    ctrl_value: u64,
) -> Result<Statevector, SimError> {
    let mut out = state.clone();
    apply_circuit_controlled_in_place(&mut out, circuit, ctrl_mask, ctrl_value)?;
    Ok(out)
}

pub(crate) fn apply_circuit_controlled_in_place(
    state: &mut Statevector,
    circuit: &Circuit,
    ctrl_mask: u64,
    ctrl_value: u64,
) -> Result<(), SimError> {
    if circuit.n_qubits > state.n {
        return Err(SimError::DimensionMismatch(state.n, circuit.n_qubits));
    }
    for gate in &circuit.gates {
        apply_gate_in_place(&mut state.amps, state.n, gate, ctrl_mask, ctrl_value);
    }
    if circuit.global_phase != 0.0 {
        let ph = Complex64::from_polar(1.0, circuit.global_phase);
        for (i, a) in state.amps.iter_mut().enumerate() {
            if (i as u64) & ctrl_mask == ctrl_value {
                *a *= ph;
            }
        }
    }
    Ok(())
}

/// Apply a dense unitary on an arbitrary target set, optionally controlled.
/// Used for the exact inverse-QFT on small ancilla registers and for the
/// dense-propagator (oracle) path.
pub fn apply_dense(
    state: &mut Statevector,
    targets: &[usize],
    matrix: &CMatrix,
    ctrl_mask: u64,
    ctrl_value: u64,
) {
    let k = targets.len();
    let dim = 1usize << k;
    assert_eq!(matrix.nrows(), dim);
    let mut target_mask = 0u64;
    for &t in targets {
        target_mask |= 1 << t;
    }
    let size = state.amps.len() as u64;
    let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
    for base in 0..size {
        if base & target_mask != 0 || (base & ctrl_mask) != ctrl_value {
            continue;
        }
        for col in 0..dim {
            let mut idx = base;
            for (j, &t) in targets.iter().enumerate() {
                if (col >> j) & 1 == 1 {
                    idx |= 1 << t;
                }
            }
            scratch[col] = state.amps[idx as usize];
        }
        for row in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for col in 0..dim {
                acc += matrix[(row, col)] * scratch[col];
            }
            let mut idx = base;
            for (j, &t) in targets.iter().enumerate() {
                if (row >> j) & 1 == 1 {
                    idx |= 1 << t;
                }
            }
            state.amps[idx as usize] = acc;
        }
    }
}

/// ⟨ψ|A|ψ⟩ for a Hermitian Pauli sum. The imaginary residue is checked
/// against 1e-10 and discarded.
pub fn expectation(state: &Statevector, observable: &PauliSum) -> Result<f64, SimError> {
    observable.require_hermitian(1e-10)?;
    let v = expectation_complex(state, observable)?;
    if v.im.abs() > 1e-10 {
        return Err(SimError::ImaginaryResidue(v.im));
    }
    Ok(v.re)
}

/// ⟨ψ|A|ψ⟩ without the hermiticity requirement.
pub fn expectation_complex(state: &Statevector, observable: &PauliSum) -> Result<Complex64, SimError> {
    if observable.n_qubits() != state.n {
        return Err(SimError::DimensionMismatch(state.n, observable.n_qubits()));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (p, w) in observable.iter() {
        let (x, _) = p.masks();
        let mut term = Complex64::new(0.0, 0.0);
        for j in 0..state.amps.len() as u64 {
            let src = j ^ x;
            let a = state.amps[src as usize];
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let (_, ph) = p.apply_to_basis(src);
            term += state.amps[j as usize].conj() * ph * a;
        }
        acc += w * term;
    }
    Ok(acc)
}

/// Measurement record: counts per bitstring (qubit n-1 leftmost).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementCounts {
    pub shots: u64,
    pub counts: BTreeMap<String, u64>,
}

impl MeasurementCounts {
    pub fn frequency(&self, bits: &str) -> f64 {
        *self.counts.get(bits).unwrap_or(&0) as f64 / self.shots as f64
    }
}

/// Draw `shots` i.i.d. full-register measurements from the Born distribution.
pub fn sample_measurements(state: &Statevector, shots: u64, rng_seed: u64) -> Result<MeasurementCounts, SimError> {
    if shots == 0 {
        return Err(SimError::NoShots);
    }
    let mut rng = rng_from_seed(rng_seed);
    let cdf = cumulative_probabilities(&state.amps);
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for _ in 0..shots {
        let idx = sample_index(&cdf, &mut rng);
        *counts.entry(format_bitstring(idx as u64, state.n)).or_insert(0) += 1;
    }
    Ok(MeasurementCounts { shots, counts })
}

fn cumulative_probabilities(amps: &[Complex64]) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(amps.len());
    let mut acc = 0.0;
    for a in amps {
        acc += a.norm_sqr();
        cdf.push(acc);
    }
    cdf
}

fn sample_index(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let total = *cdf.last().unwrap();
    let u: f64 = rng.gen::<f64>() * total;
    cdf.partition_point(|&p| p <= u).min(cdf.len() - 1)
}

/// Measure the listed qubits, collapsing the state.
///
/// Returns the outcome as a bitstring over the measured qubits (highest index
/// leftmost) and the renormalized post-measurement state.
pub fn partial_collapse(
    state: &Statevector,
    qubits: &[usize],
    rng_seed: u64,
) -> Result<(String, Statevector), SimError> {
    assert!(!qubits.is_empty(), "qubit set must be nonempty");
    let mut sorted: Vec<usize> = qubits.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &q in &sorted {
        if q >= state.n {
            return Err(SimError::QubitOutOfRange(q, state.n));
        }
    }
    let mut rng = rng_from_seed(rng_seed);
    // Marginal over the measured set.
    let mut probs: BTreeMap<u64, f64> = BTreeMap::new();
    for (i, a) in state.amps.iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let key = project_bits(i as u64, &sorted);
        *probs.entry(key).or_insert(0.0) += p;
    }
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut chosen = *probs.keys().last().unwrap();
    for (&key, &p) in &probs {
        acc += p;
        if u < acc {
            chosen = key;
            break;
        }
    }
    let collapsed = collapse_onto(state, &sorted, chosen)?;
    let bits: String = (0..sorted.len()).rev().map(|j| if (chosen >> j) & 1 == 1 { '1' } else { '0' }).collect();
    Ok((bits, collapsed))
}

/// Project onto the branch where the (sorted, deduplicated) `qubits` read
/// `outcome` (bit j of `outcome` ↔ `qubits[j]`), renormalizing.
pub fn collapse_onto(state: &Statevector, qubits: &[usize], outcome: u64) -> Result<Statevector, SimError> {
    let mut amps = state.amps.clone();
    let mut norm2 = 0.0;
    for (i, a) in amps.iter_mut().enumerate() {
        if project_bits(i as u64, qubits) == outcome {
            norm2 += a.norm_sqr();
        } else {
            *a = Complex64::new(0.0, 0.0);
        }
    }
    if norm2 < 1e-24 {
        return Err(SimError::ImpossibleBranch(norm2));
    }
    let s = 1.0 / norm2.sqrt();
    for a in &mut amps {
        *a *= s;
    }
    Ok(Statevector { n: state.n, amps })
}

fn project_bits(index: u64, qubits: &[usize]) -> u64 {
    qubits
        .iter()
        .enumerate()
        .fold(0u64, |acc, (j, &q)| acc | (((index >> q) & 1) << j))
}

/// Which part of ⟨ψ|U|ψ⟩ a Hadamard test estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HadamardPart {
    Real,
    Imaginary,
}

/// Exact Hadamard-test value: p₀ - p₁ computed from the full statevector.
///
/// The imaginary branch uses the ancilla phase -π/2, fixed by the regression
/// requirement that `Real + i·Imaginary` equal ⟨ψ|U|ψ⟩ computed directly.
pub fn hadamard_test(state: &Statevector, unitary: &Circuit, part: HadamardPart) -> Result<f64, SimError> {
    let (p0, p1) = hadamard_test_branch_probs(state, unitary, part)?;
    Ok(p0 - p1)
}

/// Shot-sampled Hadamard test: draws `shots` ancilla outcomes from the exact
/// branch probabilities and returns the empirical p₀ - p₁.
pub fn hadamard_test_sampled(
    state: &Statevector,
    unitary: &Circuit,
    part: HadamardPart,
    shots: u64,
    rng: &mut SimRng,
) -> Result<f64, SimError> {
    if shots == 0 {
        return Err(SimError::NoShots);
    }
    let (p0, _) = hadamard_test_branch_probs(state, unitary, part)?;
    let mut n0 = 0u64;
    for _ in 0..shots {
        if rng.gen::<f64>() < p0 {
            n0 += 1;
        }
    }
    Ok(2.0 * n0 as f64 / shots as f64 - 1.0)
}

fn hadamard_test_branch_probs(
    state: &Statevector,
    unitary: &Circuit,
    part: HadamardPart,
) -> Result<(f64, f64), SimError> {
    if unitary.n_qubits != state.n {
        return Err(SimError::DimensionMismatch(state.n, unitary.n_qubits));
    }
    let n = state.n;
    let anc = n; // ancilla prepended as the highest qubit
    let mut full = Statevector::zero(1).tensor(state);
    apply_gate_in_place(&mut full.amps, n + 1, &gates::h(anc), 0, 0);
    apply_circuit_controlled_in_place(&mut full, unitary, 1 << anc, 1 << anc)?;
    if part == HadamardPart::Imaginary {
        let g = gates::phase(anc, -std::f64::consts::FRAC_PI_2);
        apply_gate_in_place(&mut full.amps, n + 1, &g, 0, 0);
    }
    apply_gate_in_place(&mut full.amps, n + 1, &gates::h(anc), 0, 0);
    let mut p0 = 0.0;
    let mut p1 = 0.0;
    for (i, a) in full.amps.iter().enumerate() {
        if (i >> anc) & 1 == 0 {
            p0 += a.norm_sqr();
        } else {
            p1 += a.norm_sqr();
        }
    }
    Ok((p0, p1))
}

/// ⟨ψ|U|ψ⟩ by direct application, the ground truth for the Hadamard test.
pub fn circuit_expectation(state: &Statevector, unitary: &Circuit) -> Result<Complex64, SimError> {
    let evolved = apply_circuit(state, unitary)?;
    Ok(state.inner(&evolved))
}

/// Mutable amplitude access for crate-internal kernels (QPE, LCU). Callers are
/// responsible for keeping the state normalized.
pub(crate) fn amps_mut(state: &mut Statevector) -> &mut [Complex64] {
    &mut state.amps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frob_dist, kron, CMatrix};
    use crate::pauli::{PauliOp, PauliString};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_state(rng: &mut SimRng, n: usize) -> Statevector {
        let amps: Vec<Complex64> = (0..1usize << n)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        Statevector::from_unnormalized(n, amps).unwrap()
    }

    fn single_qubit_dense(gate: &Gate, n: usize) -> CMatrix {
        // kron embedding: qubit 0 is the rightmost factor.
        let t = gate.targets[0];
        let g = CMatrix::from_row_slice(2, 2, gate.matrix());
        let low = CMatrix::identity(1 << t, 1 << t);
        let high = CMatrix::identity(1 << (n - t - 1), 1 << (n - t - 1));
        kron(&high, &kron(&g, &low))
    }

    #[test]
    fn hadamard_on_zero_gives_plus() {
        let mut circ = Circuit::new(1);
        circ.push(gates::h(0));
        let out = apply_circuit(&Statevector::zero(1), &circ).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out.amplitude(0) - Complex64::new(s, 0.0)).norm() < 1e-15);
        assert!((out.amplitude(1) - Complex64::new(s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn x_equals_hzh_on_random_states() {
        let mut rng = rng_from_seed(42);
        for _ in 0..5 {
            let psi = random_state(&mut rng, 4);
            let mut hzh = Circuit::new(4);
            hzh.push(gates::h(2)).push(gates::z(2)).push(gates::h(2));
            let mut x = Circuit::new(4);
            x.push(gates::x(2));
            let a = apply_circuit(&psi, &hzh).unwrap();
            let b = apply_circuit(&psi, &x).unwrap();
            let max_diff = a
                .amplitudes()
                .iter()
                .zip(b.amplitudes())
                .map(|(u, v)| (u - v).norm())
                .fold(0.0, f64::max);
            assert!(max_diff < 1e-12);
        }
    }

    #[test]
    fn y_equals_shzh_sdg_on_random_states() {
        let mut rng = rng_from_seed(43);
        let psi = random_state(&mut rng, 3);
        let mut conj = Circuit::new(3);
        conj.push(gates::s_dagger(1))
            .push(gates::h(1))
            .push(gates::z(1))
            .push(gates::h(1))
            .push(gates::s(1));
        let mut y = Circuit::new(3);
        y.push(gates::y(1));
        let a = apply_circuit(&psi, &conj).unwrap();
        let b = apply_circuit(&psi, &y).unwrap();
        let max_diff = a
            .amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(u, v)| (u - v).norm())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-12);
    }

    #[test]
    fn cnot_little_endian_convention() {
        // |10⟩ = qubit 1 set, qubit 0 (the control) clear: nothing happens.
        let psi = Statevector::basis(2, parse_bitstring("10"));
        let mut circ = Circuit::new(2);
        circ.push(gates::cnot(0, 1));
        let out = apply_circuit(&psi, &circ).unwrap();
        assert!(out.probability(parse_bitstring("10")) > 1.0 - 1e-12);
        // |01⟩: control set, target flips -> |11⟩.
        let psi = Statevector::basis(2, parse_bitstring("01"));
        let out = apply_circuit(&psi, &circ).unwrap();
        assert!(out.probability(parse_bitstring("11")) > 1.0 - 1e-12);
    }

    #[test]
    fn single_qubit_gates_match_kron_embedding() {
        let mut rng = rng_from_seed(5);
        for t in 0..4 {
            for gate in [gates::h(t), gates::s(t), gates::ry(t, 0.7), gates::phase(t, 1.1)] {
                let psi = random_state(&mut rng, 4);
                let mut circ = Circuit::new(4);
                circ.push(gate.clone());
                let fast = apply_circuit(&psi, &circ).unwrap();
                let dense = single_qubit_dense(&gate, 4) * psi.to_cvector();
                let diff: f64 = fast
                    .amplitudes()
                    .iter()
                    .zip(dense.iter())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-13, "gate {} target {}", gate.label, t);
            }
        }
    }

    #[test]
    fn two_qubit_gate_matches_explicit_matrix() {
        // cnot(0,1) on 2 qubits: |q1 q0⟩ ordering, control = qubit 0.
        let mut circ = Circuit::new(2);
        circ.push(gates::cnot(0, 1));
        let m = circ.to_matrix();
        // Table 2.3 CNOT with uppermost (least significant) qubit as control:
        // |00⟩->|00⟩, |01⟩->|11⟩, |10⟩->|10⟩, |11⟩->|01⟩ (indices 0,1,2,3).
        let c = Complex64::new;
        let expected = CMatrix::from_row_slice(2 << 1, 2 << 1, &[
            c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.),
            c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.),
            c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.),
            c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.),
        ]);
        assert!(frob_dist(&m, &expected) < 1e-14);
    }

    #[test]
    fn rxx_plus_yy_matches_pauli_exponential() {
        // e^{-i θ/2 (XX+YY)} from the dense Pauli sum.
        let theta = 0.83;
        let mut op = crate::pauli::PauliSum::zero(2);
        op.add(PauliString::from_ops(&[PauliOp::X, PauliOp::X]), Complex64::new(1.0, 0.0));
        op.add(PauliString::from_ops(&[PauliOp::Y, PauliOp::Y]), Complex64::new(1.0, 0.0));
        let expected = crate::linalg::hermitian_exp(&op.matrix(), -theta / 2.0);
        let mut circ = Circuit::new(2);
        circ.push(gates::rxx_plus_yy(0, 1, theta));
        assert!(frob_dist(&circ.to_matrix(), &expected) < 1e-12);
    }

    #[test]
    fn rzz_matches_pauli_exponential() {
        let theta = -1.21;
        let mut op = crate::pauli::PauliSum::zero(2);
        op.add(PauliString::from_ops(&[PauliOp::Z, PauliOp::Z]), Complex64::new(1.0, 0.0));
        let expected = crate::linalg::hermitian_exp(&op.matrix(), -theta / 2.0);
        let mut circ = Circuit::new(2);
        circ.push(gates::rzz(0, 1, theta));
        assert!(frob_dist(&circ.to_matrix(), &expected) < 1e-12);
    }

    #[test]
    fn non_unitary_gate_rejected() {
        let bad = Gate::new("bad", vec![0], vec![
            Complex64::new(1.0, 0.0), Complex64::new(0.4, 0.0),
            Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0),
        ]);
        assert!(matches!(bad, Err(SimError::NonUnitary { .. })));
    }

    #[test]
    fn expectation_plus_z_is_zero() {
        let mut circ = Circuit::new(1);
        circ.push(gates::h(0));
        let plus = apply_circuit(&Statevector::zero(1), &circ).unwrap();
        let mut z = crate::pauli::PauliSum::zero(1);
        z.add(PauliString::from_ops(&[PauliOp::Z]), Complex64::new(1.0, 0.0));
        assert_abs_diff_eq!(expectation(&plus, &z).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn expectation_z_is_p0_minus_p1() {
        let mut rng = rng_from_seed(9);
        for _ in 0..10 {
            let psi = random_state(&mut rng, 1);
            let mut z = crate::pauli::PauliSum::zero(1);
            z.add(PauliString::from_ops(&[PauliOp::Z]), Complex64::new(1.0, 0.0));
            let expected = psi.probability(0) - psi.probability(1);
            assert_abs_diff_eq!(expectation(&psi, &z).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn expectation_matches_dense_matrix() {
        let mut rng = rng_from_seed(10);
        let psi = random_state(&mut rng, 4);
        let mut h = crate::pauli::PauliSum::zero(4);
        for _ in 0..6 {
            let ops: Vec<PauliOp> = (0..4)
                .map(|_| match rng.gen_range(0..4) {
                    0 => PauliOp::I,
                    1 => PauliOp::X,
                    2 => PauliOp::Y,
                    _ => PauliOp::Z,
                })
                .collect();
            h.add(PauliString::from_ops(&ops), Complex64::new(rng.gen::<f64>() - 0.5, 0.0));
        }
        let v = psi.to_cvector();
        let dense = (v.adjoint() * h.matrix() * &v)[(0, 0)];
        assert_abs_diff_eq!(expectation(&psi, &h).unwrap(), dense.re, epsilon = 1e-11);
    }

    #[test]
    fn sampling_zero_state_is_deterministic() {
        let counts = sample_measurements(&Statevector::zero(3), 500, 77).unwrap();
        assert_eq!(counts.counts.len(), 1);
        assert_eq!(counts.counts["000"], 500);
    }

    #[test]
    fn sampling_plus_state_binomial_bound() {
        let mut circ = Circuit::new(1);
        circ.push(gates::h(0));
        let plus = apply_circuit(&Statevector::zero(1), &circ).unwrap();
        let shots = 10_000u64;
        let counts = sample_measurements(&plus, shots, 123).unwrap();
        let f = counts.frequency("0");
        // 3 sigma of a fair binomial: 3 * 0.5 / sqrt(shots).
        assert!((f - 0.5).abs() < 3.0 * 0.5 / (shots as f64).sqrt());
    }

    #[test]
    fn sampling_equiprobable_particle_number_histogram() {
        let n = 8;
        let psi = Statevector::equiprobable(n);
        let shots = 40_000u64;
        let counts = sample_measurements(&psi, shots, 321).unwrap();
        let mut by_number = vec![0u64; n + 1];
        for (bits, c) in &counts.counts {
            let ones = bits.chars().filter(|&ch| ch == '1').count();
            by_number[ones] += c;
        }
        for p in 0..=n {
            let expected = binomial(n as u64, p as u64) as f64 / (1u64 << n) as f64;
            let freq = by_number[p] as f64 / shots as f64;
            let sigma = (expected * (1.0 - expected) / shots as f64).sqrt();
            assert!(
                (freq - expected).abs() < 4.0 * sigma + 1e-9,
                "particle number {p}: freq {freq}, expected {expected}"
            );
        }
    }

    fn binomial(n: u64, k: u64) -> u64 {
        if k > n {
            return 0;
        }
        let k = k.min(n - k);
        let mut acc = 1u64;
        for i in 0..k {
            acc = acc * (n - i) / (i + 1);
        }
        acc
    }

    #[test]
    fn sampling_is_seed_reproducible() {
        let psi = Statevector::equiprobable(4);
        let a = sample_measurements(&psi, 1000, 5).unwrap();
        let b = sample_measurements(&psi, 1000, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bell_state_collapse_is_perfectly_correlated() {
        let mut circ = Circuit::new(2);
        circ.push(gates::h(0)).push(gates::cnot(0, 1));
        let bell = apply_circuit(&Statevector::zero(2), &circ).unwrap();
        for seed in 0..20 {
            let (bits, rest) = partial_collapse(&bell, &[0], seed).unwrap();
            let b = if bits == "1" { 1u64 } else { 0u64 };
            let expect = Statevector::basis(2, b * 3); // |bb⟩
            assert!(rest.fidelity(&expect) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn product_state_collapse_leaves_other_factor() {
        let mut rng = rng_from_seed(6);
        let a = random_state(&mut rng, 2);
        let b = random_state(&mut rng, 2);
        let prod = a.tensor(&b); // a on qubits 2,3; b on 0,1
        // Measuring both low qubits collapses b onto a basis state |m⟩, so the
        // residual must be exactly a ⊗ |m⟩.
        let (bits, rest) = partial_collapse(&prod, &[0, 1], 9).unwrap();
        let m = parse_bitstring(&bits);
        let expect = a.tensor(&Statevector::basis(2, m));
        assert!(rest.fidelity(&expect) > 1.0 - 1e-12);
    }

    #[test]
    fn collapse_preserves_norm_on_random_states() {
        let mut rng = rng_from_seed(14);
        for k in 0..10 {
            let psi = random_state(&mut rng, 5);
            let (_, rest) = partial_collapse(&psi, &[1, 3], 100 + k).unwrap();
            assert!((rest.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn impossible_branch_is_an_error() {
        let psi = Statevector::zero(2);
        let err = collapse_onto(&psi, &[0], 1);
        assert!(matches!(err, Err(SimError::ImpossibleBranch(_))));
    }

    #[test]
    fn hadamard_test_identity() {
        let mut rng = rng_from_seed(20);
        let psi = random_state(&mut rng, 3);
        let id = Circuit::new(3);
        assert_abs_diff_eq!(hadamard_test(&psi, &id, HadamardPart::Real).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hadamard_test(&psi, &id, HadamardPart::Imaginary).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hadamard_test_z_on_plus_is_zero() {
        let mut prep = Circuit::new(1);
        prep.push(gates::h(0));
        let plus = apply_circuit(&Statevector::zero(1), &prep).unwrap();
        let mut z = Circuit::new(1);
        z.push(gates::z(0));
        assert_abs_diff_eq!(hadamard_test(&plus, &z, HadamardPart::Real).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hadamard_test_sign_regression_vs_inner_product() {
        // Re + i·Im from the two test branches must equal ⟨ψ|U|ψ⟩ directly.
        let mut rng = rng_from_seed(21);
        for _ in 0..5 {
            let psi = random_state(&mut rng, 3);
            let mut u = Circuit::new(3);
            u.push(gates::ry(0, rng.gen::<f64>()))
                .push(gates::cnot(0, 2))
                .push(gates::phase(1, rng.gen::<f64>()))
                .push(gates::rx(2, rng.gen::<f64>()));
            u.global_phase = rng.gen::<f64>();
            let re = hadamard_test(&psi, &u, HadamardPart::Real).unwrap();
            let im = hadamard_test(&psi, &u, HadamardPart::Imaginary).unwrap();
            let direct = circuit_expectation(&psi, &u).unwrap();
            assert!((Complex64::new(re, im) - direct).norm() < 1e-10);
        }
    }

    #[test]
    fn controlled_circuit_application_matches_dense() {
        // Controlled-U (control = qubit 2 of 3) against the dense block matrix.
        let mut rng = rng_from_seed(22);
        let mut u = Circuit::new(2);
        u.push(gates::ry(0, 0.3)).push(gates::cnot(0, 1)).push(gates::phase(1, 0.9));
        u.global_phase = 0.37;
        let psi = random_state(&mut rng, 3);
        let got = apply_circuit_controlled(&psi, &u, 1 << 2, 1 << 2).unwrap();
        let dim = 4;
        let ublock = u.to_matrix() * Complex64::from_polar(1.0, 0.0);
        let mut dense = CMatrix::identity(8, 8);
        for r in 0..dim {
            for cc in 0..dim {
                dense[(r + 4, cc + 4)] = ublock[(r, cc)];
            }
        }
        let expected = dense * psi.to_cvector();
        let diff: f64 = got
            .amplitudes()
            .iter()
            .zip(expected.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn norm_preserved_through_long_random_circuit() {
        let mut rng = rng_from_seed(30);
        let n = 5;
        let mut circ = Circuit::new(n);
        for _ in 0..200 {
            match rng.gen_range(0..5) {
                0 => circ.push(gates::h(rng.gen_range(0..n))),
                1 => circ.push(gates::ry(rng.gen_range(0..n), rng.gen::<f64>() * 6.28)),
                2 => circ.push(gates::phase(rng.gen_range(0..n), rng.gen::<f64>() * 6.28)),
                3 => {
                    let a = rng.gen_range(0..n);
                    let b = (a + 1 + rng.gen_range(0..n - 1)) % n;
                    circ.push(gates::cnot(a, b))
                }
                _ => {
                    let a = rng.gen_range(0..n);
                    let b = (a + 1 + rng.gen_range(0..n - 1)) % n;
                    circ.push(gates::rxx_plus_yy(a, b, rng.gen::<f64>()))
                }
            };
        }
        let out = apply_circuit(&Statevector::zero(n), &circ).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-10);
    }
}
