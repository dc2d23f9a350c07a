//! Symmetry operators with integer-linked spectra and the QPE-family
//! projection methods: full QPE, the iterative QPE filter, and the Rodeo
//! algorithm.
//!
//! Every symmetry operator S carries (λ₀, c, m_Ω) such that all eigenvalues
//! satisfy (λ - λ₀)/c ∈ {0, …, m_Ω}. That integer lattice is what lets an
//! ancilla readout act as a pointer to a symmetry sector.

use num_complex::Complex64;

use crate::linalg::{hermitian_eig, CMatrix};
use crate::models::ModelError;
use crate::pauli::{PauliOp, PauliString, PauliSum};
use crate::sim::{
    self, apply_circuit_controlled_in_place, apply_dense, gates, Circuit, SimError, Statevector,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SymmetryError {
    #[error("eigenvalue {0} is not on the integer lattice (λ₀ = {1}, c = {2}, m_Ω = {3})")]
    OffLattice(f64, f64, f64, u64),
    #[error("state has no overlap with the target sector (norm² = {0:.3e})")]
    EmptySector(f64),
    #[error("all {0} sampled attempts were rejected")]
    AllAttemptsRejected(u64),
    #[error("{0} ancilla qubits cannot index {1} lattice points")]
    AncillaTooSmall(usize, u64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which conserved quantity an operator represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryKind {
    Number,
    Parity,
    Sz,
    S2,
    Custom,
}

/// Hermitian operator whose spectrum lies on λ₀ + c·{0, …, m_Ω}.
#[derive(Debug, Clone)]
pub struct SymmetryOperator {
    pub kind: SymmetryKind,
    pub op: PauliSum,
    pub lambda0: f64,
    pub c: f64,
    pub m_omega: u64,
}

/// Particle-number operator N = ½ Σ (I - Z_j).
pub fn number_operator(n: usize) -> PauliSum {
    let mut op = PauliSum::zero(n);
    for j in 0..n {
        op.add(PauliString::identity(n), Complex64::new(0.5, 0.0));
        op.add(PauliString::single(n, j, PauliOp::Z), Complex64::new(-0.5, 0.0));
    }
    op
}

/// Parity operator ⊗_j Z_j.
pub fn parity_operator(n: usize) -> PauliSum {
    let mut all_z = PauliString::identity(n);
    for j in 0..n {
        all_z.set_op(j, PauliOp::Z);
    }
    PauliSum::from_terms(n, [(all_z, Complex64::new(1.0, 0.0))])
}

/// Azimuthal spin operator S_z = ½ Σ Z_j (|0⟩ = spin up).
pub fn sz_operator(n: usize) -> PauliSum {
    let mut op = PauliSum::zero(n);
    for j in 0..n {
        op.add(PauliString::single(n, j, PauliOp::Z), Complex64::new(0.5, 0.0));
    }
    op
}

/// Total-spin operator S² = (3n/4) I + ½ Σ_{i<j} (X_iX_j + Y_iY_j + Z_iZ_j).
pub fn s2_operator(n: usize) -> PauliSum {
    let mut op = PauliSum::zero(n);
    op.add(PauliString::identity(n), Complex64::new(3.0 * n as f64 / 4.0, 0.0));
    let w = Complex64::new(0.5, 0.0);
    for i in 0..n {
        for j in 0..i {
            for sym in [PauliOp::X, PauliOp::Y, PauliOp::Z] {
                let mut p = PauliString::single(n, i, sym);
                p.set_op(j, sym);
                op.add(p, w);
            }
        }
    }
    op
}

/// Build the standard symmetry operators with their lattice constants.
pub fn symmetry_operator(kind: SymmetryKind, n: usize) -> SymmetryOperator {
    assert!(n >= 1);
    match kind {
        SymmetryKind::Number => SymmetryOperator {
            kind,
            op: number_operator(n),
            lambda0: 0.0,
            c: 1.0,
            m_omega: n as u64,
        },
        SymmetryKind::Parity => SymmetryOperator {
            kind,
            op: parity_operator(n),
            lambda0: -1.0,
            c: 2.0,
            m_omega: 1,
        },
        SymmetryKind::Sz => SymmetryOperator {
            kind,
            op: sz_operator(n),
            lambda0: -(n as f64) / 2.0,
            c: 1.0,
            m_omega: n as u64,
        },
        SymmetryKind::S2 => {
            // Eigenvalues s(s+1) with s = n/2, n/2-1, …, down to 0 or 1/2.
            let s_max = n as f64 / 2.0;
            let lambda0 = if n % 2 == 0 { 0.0 } else { 0.75 };
            let m_omega = (s_max * (s_max + 1.0) - lambda0).round() as u64;
            SymmetryOperator { kind, op: s2_operator(n), lambda0, c: 1.0, m_omega }
        }
        SymmetryKind::Custom => panic!("use SymmetryOperator{{..}} directly for custom operators"),
    }
}

impl SymmetryOperator {
    pub fn n_qubits(&self) -> usize {
        self.op.n_qubits()
    }

    /// Smallest ancilla register that can index the full lattice.
    pub fn n_ancilla(&self) -> usize {
        let points = self.m_omega + 1;
        (64 - (points - 1).leading_zeros()) as usize
    }

    /// Integer lattice index of an eigenvalue, or an error if off-lattice.
    pub fn lattice_index(&self, lambda: f64) -> Result<u64, SymmetryError> {
        let m = (lambda - self.lambda0) / self.c;
        let rounded = m.round();
        if (m - rounded).abs() > 1e-9 || rounded < -0.5 || rounded > self.m_omega as f64 + 0.5 {
            return Err(SymmetryError::OffLattice(lambda, self.lambda0, self.c, self.m_omega));
        }
        Ok(rounded as u64)
    }

    /// Eigenvalue λ(b) on a computational basis state, for operators diagonal
    /// in that basis (Number, Parity, Sz).
    pub fn diagonal_eigenvalue(&self, basis: u64) -> Option<f64> {
        let n = self.n_qubits();
        let ones = (basis & ((1u64 << n) - 1)).count_ones() as f64;
        match self.kind {
            SymmetryKind::Number => Some(ones),
            SymmetryKind::Parity => Some(if ones as u64 % 2 == 0 { 1.0 } else { -1.0 }),
            SymmetryKind::Sz => Some((n as f64 - 2.0 * ones) / 2.0),
            SymmetryKind::S2 => None,
            SymmetryKind::Custom => {
                if self.op.is_diagonal() {
                    // Evaluate the diagonal Pauli sum entrywise.
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (p, w) in self.op.iter() {
                        let (_, ph) = p.apply_to_basis(basis);
                        acc += w * ph;
                    }
                    Some(acc.re)
                } else {
                    None
                }
            }
        }
    }

    /// How e^{iγS} gets applied: per-amplitude phases for diagonal operators,
    /// otherwise through the dense eigendecomposition (oracle path).
    pub fn action(&self) -> SymmetryAction {
        let n = self.n_qubits();
        if self.diagonal_eigenvalue(0).is_some() {
            let evs: Vec<f64> = (0..1u64 << n)
                .map(|b| self.diagonal_eigenvalue(b).unwrap())
                .collect();
            SymmetryAction::Diagonal(evs)
        } else {
            let (vals, vecs) = hermitian_eig(&self.op.matrix());
            SymmetryAction::Eigen { vals, vecs }
        }
    }
}

/// Concrete machinery for applying functions of a symmetry operator.
pub enum SymmetryAction {
    /// Operator is diagonal in the computational basis; entry b holds λ(b).
    Diagonal(Vec<f64>),
    /// Dense eigendecomposition S = V Λ V†.
    Eigen { vals: Vec<f64>, vecs: CMatrix },
}

impl SymmetryAction {
    /// e^{iγS} |ψ⟩ applied to a raw amplitude vector.
    pub fn evolve(&self, amps: &[Complex64], gamma: f64) -> Vec<Complex64> {
        match self {
            SymmetryAction::Diagonal(evs) => amps
                .iter()
                .zip(evs)
                .map(|(a, &l)| a * Complex64::from_polar(1.0, gamma * l))
                .collect(),
            SymmetryAction::Eigen { vals, vecs } => {
                let v = crate::linalg::CVector::from_column_slice(amps);
                let mut coeffs = vecs.adjoint() * v;
                for (c, &l) in coeffs.iter_mut().zip(vals) {
                    *c *= Complex64::from_polar(1.0, gamma * l);
                }
                let out = vecs * coeffs;
                out.iter().copied().collect()
            }
        }
    }

    /// Eigenvalues per basis state when diagonal.
    pub fn diagonal_values(&self) -> Option<&[f64]> {
        match self {
            SymmetryAction::Diagonal(evs) => Some(evs),
            _ => None,
        }
    }
}

/// Exact circuit for e^{iγS} where one exists at gate level:
/// - Number: product of phase gates P_k(γ) (no Trotter error),
/// - Sz: e^{iγn/2} ∏ P_k(-γ),
/// - Parity: available at γ = mπ/2, where e^{iγ⊗Z} reduces to Z gates and a
///   global phase,
/// - S²: R_zz gates for the ZZ part plus a Trotterized XX+YY part with
///   `trotter_steps` slices.
pub fn symmetry_evolution(
    symmetry: &SymmetryOperator,
    gamma: f64,
    trotter_steps: usize,
) -> Result<Circuit, SymmetryError> {
    let n = symmetry.n_qubits();
    let mut circ = Circuit::new(n);
    match symmetry.kind {
        SymmetryKind::Number => {
            for k in 0..n {
                circ.push(gates::phase(k, gamma));
            }
        }
        SymmetryKind::Sz => {
            circ.global_phase = gamma * n as f64 / 2.0;
            for k in 0..n {
                circ.push(gates::phase(k, -gamma));
            }
        }
        SymmetryKind::Parity => {
            // e^{iγ⊗Z} = cos γ I + i sin γ ⊗Z; a Pauli circuit exists only on
            // the quarter lattice, which is all the projection methods use.
            let quarter = gamma / std::f64::consts::FRAC_PI_2;
            let m = quarter.round();
            if (quarter - m).abs() > 1e-9 {
                return Err(SymmetryError::OffLattice(gamma, 0.0, std::f64::consts::FRAC_PI_2, 3));
            }
            let m = m.rem_euclid(4.0) as u64;
            match m {
                0 => {}
                2 => circ.global_phase = std::f64::consts::PI,
                odd => {
                    circ.global_phase = if odd == 1 {
                        std::f64::consts::FRAC_PI_2
                    } else {
                        -std::f64::consts::FRAC_PI_2
                    };
                    for k in 0..n {
                        circ.push(gates::z(k));
                    }
                }
            }
        }
        SymmetryKind::S2 | SymmetryKind::Custom => {
            // e^{iγ(3n/4)} · ∏ e^{iγ/2 Z_iZ_j} · Trotter(e^{iγ/2 Σ XX+YY}).
            circ.global_phase = gamma * 3.0 * n as f64 / 4.0;
            for i in 0..n {
                for j in 0..i {
                    circ.push(gates::rzz(i, j, -gamma));
                }
            }
            let nt = trotter_steps.max(1);
            // Per slice: e^{i γ/(2 n_t) Σ (XX+YY)}, symmetrized (forward pairs
            // at half angle, then backward) so the slice error is third order.
            let theta = -gamma / (2.0 * nt as f64);
            let pairs: Vec<(usize, usize)> =
                (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
            for _ in 0..nt {
                for &(i, j) in &pairs {
                    circ.push(gates::rxx_plus_yy(i, j, theta));
                }
                for &(i, j) in pairs.iter().rev() {
                    circ.push(gates::rxx_plus_yy(i, j, theta));
                }
            }
        }
    }
    Ok(circ)
}

/// Exact dense matrix of e^{iγS} (oracle path).
pub fn symmetry_evolution_matrix(symmetry: &SymmetryOperator, gamma: f64) -> CMatrix {
    crate::linalg::hermitian_exp(&symmetry.op.matrix(), gamma)
}

/// Result of a projective method.
#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub state: Statevector,
    pub accepted: bool,
    /// Ancilla readout(s) of the accepting run, as a bitstring.
    pub ancilla_readout: String,
    /// Probability of the accepting branch; equals ⟨P⟩ in exact mode.
    pub success_probability: f64,
}

/// Exact spectral projector P = Σ_{k=0}^{M} α_k e^{iφ_k S} with
/// α_k = e^{-iφ_k λ'} / (M+1) and φ_k = 2πk / (c(M+1)), M = m_Ω.
pub struct ExactProjector {
    pub symmetry: SymmetryOperator,
    pub lambda_target: f64,
    action: SymmetryAction,
}

impl ExactProjector {
    pub fn new(symmetry: SymmetryOperator, lambda_target: f64) -> Result<Self, SymmetryError> {
        symmetry.lattice_index(lambda_target)?;
        let action = symmetry.action();
        Ok(ExactProjector { symmetry, lambda_target, action })
    }

    /// The LCU expansion (α_k, φ_k), k = 0..=M.
    pub fn coefficients(&self) -> Vec<(Complex64, f64)> {
        let m = self.symmetry.m_omega;
        let c = self.symmetry.c;
        (0..=m)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / (c * (m + 1) as f64);
                let alpha = Complex64::from_polar(1.0 / (m + 1) as f64, -phi * self.lambda_target);
                (alpha, phi)
            })
            .collect()
    }

    /// P |ψ⟩, unnormalized, evaluated through the evolution expansion.
    pub fn apply_unnormalized(&self, state: &Statevector) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); state.dim()];
        for (alpha, phi) in self.coefficients() {
            let evolved = self.action.evolve(state.amplitudes(), phi);
            for (o, e) in out.iter_mut().zip(evolved) {
                *o += alpha * e;
            }
        }
        out
    }

    /// ⟨ψ|P|ψ⟩ = ‖P|ψ⟩‖² for a projector.
    pub fn overlap(&self, state: &Statevector) -> f64 {
        self.apply_unnormalized(state).iter().map(|a| a.norm_sqr()).sum()
    }

    /// Normalized projection, or an error when the sector weight vanishes.
    pub fn project(&self, state: &Statevector) -> Result<(Statevector, f64), SymmetryError> {
        let raw = self.apply_unnormalized(state);
        let weight: f64 = raw.iter().map(|a| a.norm_sqr()).sum();
        if weight < 1e-24 {
            return Err(SymmetryError::EmptySector(weight));
        }
        let projected = Statevector::from_unnormalized(state.n_qubits(), raw)?;
        Ok((projected, weight))
    }

    /// Dense matrix of the projector (test scale).
    pub fn matrix(&self) -> CMatrix {
        let n = self.symmetry.n_qubits();
        let dim = 1usize << n;
        let mut m = CMatrix::zeros(dim, dim);
        for col in 0..dim {
            let basis = Statevector::basis(n, col as u64);
            let raw = self.apply_unnormalized(&basis);
            for row in 0..dim {
                m[(row, col)] = raw[row];
            }
        }
        m
    }
}

/// Unitary whose controlled powers drive phase estimation.
pub enum Propagator {
    /// Gate-level circuit on the system register.
    Circuit(Circuit),
    /// Dense unitary (oracle path).
    Dense(CMatrix),
    /// Diagonal unitary with eigenphase θ_b per basis state: U|b⟩ = e^{2πiθ_b}|b⟩.
    DiagonalPhases(Vec<f64>),
}

impl Propagator {
    /// U_S = e^{2πi(S - λ₀)/(c·2^{n_a})} from a symmetry operator (Eq. form
    /// that makes the ancilla read the lattice index directly).
    pub fn for_symmetry(symmetry: &SymmetryOperator, n_ancilla: usize) -> Propagator {
        let scale = 1.0 / (symmetry.c * (1u64 << n_ancilla) as f64);
        match symmetry.action() {
            SymmetryAction::Diagonal(evs) => Propagator::DiagonalPhases(
                evs.iter().map(|&l| (l - symmetry.lambda0) * scale).collect(),
            ),
            SymmetryAction::Eigen { vals, vecs } => {
                let phases = crate::linalg::CVector::from_iterator(
                    vals.len(),
                    vals.iter().map(|&l| {
                        Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (l - symmetry.lambda0) * scale)
                    }),
                );
                let m = &vecs * CMatrix::from_diagonal(&phases) * vecs.adjoint();
                Propagator::Dense(m)
            }
        }
    }

    /// Dense matrix of U (for eigenphase oracles in tests).
    pub fn to_matrix(&self, n: usize) -> CMatrix {
        match self {
            Propagator::Circuit(c) => c.to_matrix(),
            Propagator::Dense(m) => m.clone(),
            Propagator::DiagonalPhases(thetas) => {
                let dim = 1usize << n;
                let mut m = CMatrix::zeros(dim, dim);
                for b in 0..dim {
                    m[(b, b)] = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * thetas[b]);
                }
                m
            }
        }
    }

    /// Apply U^(2^k) controlled on `ctrl` (a qubit outside the system register)
    /// to the extended state.
    fn apply_controlled_power(
        &self,
        state: &mut Statevector,
        n_sys: usize,
        ctrl: usize,
        k: u32,
        cache: &mut PropagatorCache,
    ) -> Result<(), SymmetryError> {
        let mask = 1u64 << ctrl;
        match self {
            Propagator::Circuit(circ) => {
                for _ in 0..(1u64 << k) {
                    apply_circuit_controlled_in_place(state, circ, mask, mask)?;
                }
            }
            Propagator::Dense(u) => {
                let m = cache.power(u, k);
                let targets: Vec<usize> = (0..n_sys).collect();
                apply_dense(state, &targets, &m, mask, mask);
            }
            Propagator::DiagonalPhases(thetas) => {
                let reps = (1u64 << k) as f64;
                let dim_sys = 1usize << n_sys;
                let amps_len = state.dim();
                let amps = state_amps_mut(state);
                for i in 0..amps_len {
                    if (i as u64) & mask == mask {
                        let b = i & (dim_sys - 1);
                        amps[i] *= Complex64::from_polar(
                            1.0,
                            2.0 * std::f64::consts::PI * thetas[b] * reps,
                        );
                    }
                }
            }
        }
        Ok(())
    }
}

// Statevector amplitudes are private to `sim`; rebuild in place through a
// small crate-internal accessor.
fn state_amps_mut(state: &mut Statevector) -> &mut [Complex64] {
    sim::amps_mut(state)
}

/// Cache of repeated-squaring powers for dense propagators.
#[derive(Default)]
struct PropagatorCache {
    powers: Vec<CMatrix>,
}

impl PropagatorCache {
    fn power(&mut self, base: &CMatrix, k: u32) -> CMatrix {
        if self.powers.is_empty() {
            self.powers.push(base.clone());
        }
        while self.powers.len() <= k as usize {
            let last = self.powers.last().unwrap();
            let next = last * last;
            self.powers.push(next);
        }
        self.powers[k as usize].clone()
    }
}

/// How a projection method is executed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunMode {
    /// Track all branches analytically.
    Exact,
    /// Simulate measurement draws with a seed.
    Sample { shots: u64, seed: u64 },
}

/// Output of a QPE run.
#[derive(Debug, Clone)]
pub struct QpeOutput {
    /// Probability (exact) or frequency (sampled) per ancilla value.
    pub histogram: Vec<f64>,
    /// Collapsed outcome for sampled runs (first draw).
    pub outcome: Option<ProjectionOutcome>,
}

/// Run textbook phase estimation with `n_a` ancilla qubits.
///
/// The ancilla register occupies qubits n..n+n_a of the extended state, the
/// inverse QFT is applied exactly (dense on the ancilla register), and the
/// histogram is the exact ancilla distribution in `Exact` mode.
pub fn qpe_run(
    state: &Statevector,
    unitary: &Propagator,
    n_a: usize,
    mode: RunMode,
) -> Result<QpeOutput, SymmetryError> {
    assert!(n_a >= 1, "need at least one ancilla");
    let n = state.n_qubits();
    let dim_a = 1usize << n_a;
    // Extended register: ancilla in the high bits, all in |+⟩.
    let mut full = Statevector::equiprobable(n_a).tensor(state);
    let mut cache = PropagatorCache::default();
    for k in 0..n_a {
        unitary.apply_controlled_power(&mut full, n, n + k, k as u32, &mut cache)?;
    }
    // Exact inverse QFT on the ancilla register.
    let mut iqft = CMatrix::zeros(dim_a, dim_a);
    let norm = 1.0 / (dim_a as f64).sqrt();
    for a in 0..dim_a {
        for m in 0..dim_a {
            iqft[(a, m)] = Complex64::from_polar(
                norm,
                -2.0 * std::f64::consts::PI * (a * m) as f64 / dim_a as f64,
            );
        }
    }
    let targets: Vec<usize> = (n..n + n_a).collect();
    apply_dense(&mut full, &targets, &iqft, 0, 0);

    // Exact marginal over ancilla values.
    let mut histogram = vec![0.0; dim_a];
    let dim_s = 1usize << n;
    for (i, amp) in full.amplitudes().iter().enumerate() {
        histogram[i >> n] += amp.norm_sqr();
    }
    match mode {
        RunMode::Exact => Ok(QpeOutput { histogram, outcome: None }),
        RunMode::Sample { shots, seed } => {
            if shots == 0 {
                return Err(SymmetryError::Sim(SimError::NoShots));
            }
            let mut rng = sim::rng_from_seed(seed);
            let mut freq = vec![0.0; dim_a];
            let mut first: Option<usize> = None;
            for _ in 0..shots {
                let a = sample_discrete(&histogram, &mut rng);
                freq[a] += 1.0 / shots as f64;
                first.get_or_insert(a);
            }
            let a = first.unwrap();
            // Collapse the system register on the first drawn ancilla value.
            let mut sys = vec![Complex64::new(0.0, 0.0); dim_s];
            for b in 0..dim_s {
                sys[b] = full.amplitude(((a as u64) << n) | b as u64);
            }
            let p = histogram[a];
            let state = Statevector::from_unnormalized(n, sys)
                .map_err(|_| SymmetryError::EmptySector(p))?;
            Ok(QpeOutput {
                histogram: freq,
                outcome: Some(ProjectionOutcome {
                    state,
                    accepted: true,
                    ancilla_readout: sim::format_bitstring(a as u64, n_a),
                    success_probability: p,
                }),
            })
        }
    }
}

fn sample_discrete(probs: &[f64], rng: &mut sim::SimRng) -> usize {
    use rand::Rng;
    let total: f64 = probs.iter().sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// QPE-based symmetry restoration: run QPE on U_S and post-select the ancilla
/// on the lattice index of λ'.
pub fn qpe_project(
    state: &Statevector,
    symmetry: &SymmetryOperator,
    lambda_target: f64,
    mode: RunMode,
) -> Result<ProjectionOutcome, SymmetryError> {
    let m_target = symmetry.lattice_index(lambda_target)?;
    let n_a = symmetry.n_ancilla();
    if (1u64 << n_a) <= symmetry.m_omega {
        return Err(SymmetryError::AncillaTooSmall(n_a, symmetry.m_omega + 1));
    }
    let unitary = Propagator::for_symmetry(symmetry, n_a);
    let n = state.n_qubits();
    match mode {
        RunMode::Exact => {
            let out = qpe_run(state, &unitary, n_a, RunMode::Exact)?;
            let p = out.histogram[m_target as usize];
            if p < 1e-24 {
                return Err(SymmetryError::EmptySector(p));
            }
            // Rebuild the collapsed system state by a second pass.
            let full = qpe_full_state(state, &unitary, n_a)?;
            let mut sys = vec![Complex64::new(0.0, 0.0); 1 << n];
            for b in 0..1usize << n {
                sys[b] = full.amplitude((m_target << n) | b as u64);
            }
            Ok(ProjectionOutcome {
                state: Statevector::from_unnormalized(n, sys)?,
                accepted: true,
                ancilla_readout: sim::format_bitstring(m_target, n_a),
                success_probability: p,
            })
        }
        RunMode::Sample { shots, seed } => {
            let out = qpe_run(state, &unitary, n_a, RunMode::Sample { shots, seed })?;
            let outcome = out.outcome.unwrap();
            let accepted = outcome.ancilla_readout == sim::format_bitstring(m_target, n_a);
            Ok(ProjectionOutcome { accepted, ..outcome })
        }
    }
}

fn qpe_full_state(
    state: &Statevector,
    unitary: &Propagator,
    n_a: usize,
) -> Result<Statevector, SymmetryError> {
    let n = state.n_qubits();
    let dim_a = 1usize << n_a;
    let mut full = Statevector::equiprobable(n_a).tensor(state);
    let mut cache = PropagatorCache::default();
    for k in 0..n_a {
        unitary.apply_controlled_power(&mut full, n, n + k, k as u32, &mut cache)?;
    }
    let mut iqft = CMatrix::zeros(dim_a, dim_a);
    let norm = 1.0 / (dim_a as f64).sqrt();
    for a in 0..dim_a {
        for m in 0..dim_a {
            iqft[(a, m)] = Complex64::from_polar(
                norm,
                -2.0 * std::f64::consts::PI * (a * m) as f64 / dim_a as f64,
            );
        }
    }
    let targets: Vec<usize> = (n..n + n_a).collect();
    apply_dense(&mut full, &targets, &iqft, 0, 0);
    Ok(full)
}

/// Number of iterative-QPE rounds needed to isolate lattice index m' among
/// {0, …, m_Ω}: ⌊log₂ max(m', m_Ω - m')⌋ + 1.
pub fn iqpe_round_count(m_target: u64, m_omega: u64) -> u32 {
    let reach = m_target.max(m_omega - m_target);
    if reach == 0 {
        0
    } else {
        reach.ilog2() + 1
    }
}

/// Iterative QPE projection: n_IQPE rounds of the one-ancilla filter
/// ½(I + e^{-iφ_k λ'/c} e^{iφ_k S/c}), φ_k = π/2^k, keeping ancilla-0 outcomes.
///
/// Exact mode tracks the accepted branch analytically; sampled mode draws each
/// round and restarts from a fresh input copy on a 1 outcome.
pub fn iqpe_project(
    state: &Statevector,
    symmetry: &SymmetryOperator,
    lambda_target: f64,
    mode: RunMode,
) -> Result<(ProjectionOutcome, u32), SymmetryError> {
    let m_target = symmetry.lattice_index(lambda_target)?;
    let rounds = iqpe_round_count(m_target, symmetry.m_omega);
    let action = symmetry.action();
    let round_probabilities = |amps: &mut Vec<Complex64>| -> Vec<f64> {
        let mut probs = Vec::with_capacity(rounds as usize);
        for k in 0..rounds {
            let phi = std::f64::consts::PI / (1u64 << k) as f64;
            let evolved = action.evolve(amps, phi / symmetry.c);
            let phase = Complex64::from_polar(1.0, -phi * lambda_target / symmetry.c);
            let before: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            for (a, e) in amps.iter_mut().zip(evolved) {
                *a = 0.5 * (*a + phase * e);
            }
            let after: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            probs.push(if before > 0.0 { after / before } else { 0.0 });
        }
        probs
    };
    match mode {
        RunMode::Exact => {
            let mut amps = state.amplitudes().to_vec();
            let probs = round_probabilities(&mut amps);
            let total: f64 = probs.iter().product();
            if total < 1e-24 {
                return Err(SymmetryError::EmptySector(total));
            }
            let projected = Statevector::from_unnormalized(state.n_qubits(), amps)?;
            Ok((
                ProjectionOutcome {
                    state: projected,
                    accepted: true,
                    ancilla_readout: "0".repeat(rounds as usize),
                    success_probability: total,
                },
                rounds,
            ))
        }
        RunMode::Sample { shots: _, seed } => {
            use rand::Rng;
            let mut rng = sim::rng_from_seed(seed);
            let max_attempts = 100_000u64;
            for _attempt in 0..max_attempts {
                let mut amps = state.amplitudes().to_vec();
                let mut rejected = false;
                let mut readout = String::new();
                for k in 0..rounds {
                    let phi = std::f64::consts::PI / (1u64 << k) as f64;
                    let evolved = action.evolve(&amps, phi / symmetry.c);
                    let phase = Complex64::from_polar(1.0, -phi * lambda_target / symmetry.c);
                    let before: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                    // Ancilla-0 branch: ½(I + e^{iϕ}V); ancilla-1: ½(I - e^{iϕ}V).
                    let zero_branch: Vec<Complex64> = amps
                        .iter()
                        .zip(&evolved)
                        .map(|(a, e)| 0.5 * (a + phase * e))
                        .collect();
                    let p0: f64 =
                        zero_branch.iter().map(|a| a.norm_sqr()).sum::<f64>() / before;
                    if rng.gen::<f64>() < p0 {
                        readout.push('0');
                        amps = zero_branch;
                    } else {
                        readout.push('1');
                        rejected = true;
                        break;
                    }
                }
                if !rejected {
                    let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                    let projected = Statevector::from_unnormalized(state.n_qubits(), amps)?;
                    return Ok((
                        ProjectionOutcome {
                            state: projected,
                            accepted: true,
                            ancilla_readout: readout,
                            success_probability: total,
                        },
                        rounds,
                    ));
                }
            }
            Err(SymmetryError::AllAttemptsRejected(max_attempts))
        }
    }
}

/// Rodeo time-sampling prescriptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RodeoMode {
    /// τ_k = τ/2^{k-1} with τ = π·2^{n_R-2}/|E_up - E_low|.
    FixedTimes { e_low: f64, e_up: f64 },
    /// τ_k ~ Normal(0, σ²).
    Gaussian { sigma: f64 },
}

/// Rodeo configuration: round count, time prescription, target energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RodeoConfig {
    pub n_r: usize,
    pub mode: RodeoMode,
    pub target_e: f64,
}

impl RodeoConfig {
    pub fn validate(&self) -> Result<(), SymmetryError> {
        if self.n_r < 1 {
            return Err(SymmetryError::Sim(SimError::NoShots));
        }
        if let RodeoMode::Gaussian { sigma } = self.mode {
            if sigma <= 0.0 {
                return Err(SymmetryError::EmptySector(sigma));
            }
        }
        Ok(())
    }

    /// Draw or derive the round times.
    pub fn times(&self, rng: &mut sim::SimRng) -> Vec<f64> {
        match self.mode {
            RodeoMode::FixedTimes { e_low, e_up } => {
                let tau = std::f64::consts::PI * (1u64 << (self.n_r.max(2) - 2)) as f64
                    / (e_up - e_low).abs();
                (1..=self.n_r).map(|k| tau / (1u64 << (k - 1)) as f64).collect()
            }
            RodeoMode::Gaussian { sigma } => {
                use rand::Rng;
                (0..self.n_r)
                    .map(|_| {
                        // Box-Muller from two uniforms keeps the dependency small.
                        let u1: f64 = rng.gen::<f64>().max(1e-300);
                        let u2: f64 = rng.gen();
                        sigma
                            * (-2.0 * u1.ln()).sqrt()
                            * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect()
            }
        }
    }
}

/// Probability of reading 0 on every round, from the spectral decomposition:
/// p = Σ_j w_j ∏_k cos²((E_j - E) τ_k / 2).
pub fn rodeo_probability(spectrum: &[(f64, f64)], times: &[f64], target_e: f64) -> f64 {
    spectrum
        .iter()
        .map(|&(e, w)| {
            w * times
                .iter()
                .map(|&t| ((e - target_e) * t / 2.0).cos().powi(2))
                .product::<f64>()
        })
        .sum()
}

/// Marginalized Gaussian-mode probability:
/// p(E) = Σ_j w_j [(1 + e^{-(E_j-E)²σ²/2})/2]^{n_R}.
pub fn rodeo_probability_gaussian(spectrum: &[(f64, f64)], sigma: f64, n_r: usize, target_e: f64) -> f64 {
    spectrum
        .iter()
        .map(|&(e, w)| {
            let d = e - target_e;
            w * ((1.0 + (-d * d * sigma * sigma / 2.0).exp()) / 2.0).powi(n_r as i32)
        })
        .sum()
}

/// One Rodeo projection attempt (or analytic branch tracking in exact mode)
/// using a Hermitian generator: rounds of ½(I + e^{iEτ_k} e^{-iGτ_k}).
pub fn rodeo_project(
    state: &Statevector,
    generator: &PauliSum,
    config: &RodeoConfig,
    mode: RunMode,
) -> Result<ProjectionOutcome, SymmetryError> {
    config.validate()?;
    generator.require_hermitian(1e-10).map_err(SimError::from)?;
    let (vals, vecs) = hermitian_eig(&generator.matrix());
    let action = SymmetryAction::Eigen { vals, vecs };
    let seed = match mode {
        RunMode::Exact => 0,
        RunMode::Sample { seed, .. } => seed,
    };
    let mut rng = sim::rng_from_seed(seed);
    let times = config.times(&mut rng);
    match mode {
        RunMode::Exact => {
            let mut amps = state.amplitudes().to_vec();
            for &tau in &times {
                let evolved = action.evolve(&amps, -tau);
                let phase = Complex64::from_polar(1.0, config.target_e * tau);
                for (a, e) in amps.iter_mut().zip(evolved) {
                    *a = 0.5 * (*a + phase * e);
                }
            }
            let p: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            if p < 1e-24 {
                return Err(SymmetryError::EmptySector(p));
            }
            Ok(ProjectionOutcome {
                state: Statevector::from_unnormalized(state.n_qubits(), amps)?,
                accepted: true,
                ancilla_readout: "0".repeat(config.n_r),
                success_probability: p,
            })
        }
        RunMode::Sample { .. } => {
            use rand::Rng;
            let max_attempts = 100_000u64;
            for _ in 0..max_attempts {
                let mut amps = state.amplitudes().to_vec();
                let mut readout = String::new();
                let mut rejected = false;
                for &tau in &times {
                    let evolved = action.evolve(&amps, -tau);
                    let phase = Complex64::from_polar(1.0, config.target_e * tau);
                    let before: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                    let zero: Vec<Complex64> = amps
                        .iter()
                        .zip(&evolved)
                        .map(|(a, e)| 0.5 * (a + phase * e))
                        .collect();
                    let p0 = zero.iter().map(|a| a.norm_sqr()).sum::<f64>() / before;
                    if rng.gen::<f64>() < p0 {
                        readout.push('0');
                        amps = zero;
                    } else {
                        readout.push('1');
                        rejected = true;
                        break;
                    }
                }
                if !rejected {
                    let p: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                    return Ok(ProjectionOutcome {
                        state: Statevector::from_unnormalized(state.n_qubits(), amps)?,
                        accepted: true,
                        ancilla_readout: readout,
                        success_probability: p,
                    });
                }
            }
            Err(SymmetryError::AllAttemptsRejected(max_attempts))
        }
    }
}

/// Rodeo scan over an energy grid: mean and standard deviation of the
/// all-zeros probability across `n_draws` time draws.
pub fn rodeo_scan(
    spectrum: &[(f64, f64)],
    config: &RodeoConfig,
    e_grid: &[f64],
    n_draws: usize,
    seed: u64,
) -> Vec<(f64, f64, f64)> {
    let mut rng = sim::rng_from_seed(seed);
    let draws: Vec<Vec<f64>> = (0..n_draws.max(1)).map(|_| config.times(&mut rng)).collect();
    e_grid
        .iter()
        .map(|&e| {
            let ps: Vec<f64> = draws
                .iter()
                .map(|times| rodeo_probability(spectrum, times, e))
                .collect();
            let mean = ps.iter().sum::<f64>() / ps.len() as f64;
            let var = ps.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / ps.len() as f64;
            (e, mean, var.sqrt())
        })
        .collect()
}
