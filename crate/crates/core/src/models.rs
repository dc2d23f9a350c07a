//! Model Hamiltonians (pairing, Fermi-Hubbard), Trotterized propagators, and
//! the dense exact-diagonalization oracle.
//!
//! The pairing model uses the seniority-zero pair encoding: one qubit per
//! doubly-degenerate level, occupied level ↔ |1⟩. The Hubbard chain maps
//! spin-up modes to qubits `0..M` and spin-down modes to `M..2M`.

use num_complex::Complex64;

use crate::linalg::{hermitian_eig, CMatrix};
use crate::pauli::{PauliError, PauliOp, PauliString, PauliSum};
use crate::sim::{gates, Circuit, SimError, Statevector};

/// Largest register the dense oracle will diagonalize.
pub const MAX_DENSE_QUBITS: usize = 14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("register of {0} qubits is too large for dense diagonalization (max {MAX_DENSE_QUBITS})")]
    RegisterTooLarge(usize),
    #[error("group {group} contains non-commuting terms (|[a,b]| = {deviation:.3e})")]
    NonCommutingGroup { group: usize, deviation: f64 },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Pairing Hamiltonian parameters in the seniority-zero scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingModel {
    /// Number of doubly-degenerate levels = number of qubits.
    pub n_levels: usize,
    /// Level energies ε_p (before the ε_p → ε_p + g/2 replacement).
    pub epsilons: Vec<f64>,
    /// Coupling strength g.
    pub g: f64,
    /// Target pair number A_p.
    pub a_pairs: usize,
}

impl PairingModel {
    /// Equidistant levels ε_p = p·Δe for p = 1..n, the thesis default.
    pub fn equidistant(n_levels: usize, delta_e: f64, g: f64, a_pairs: usize) -> Self {
        PairingModel {
            n_levels,
            epsilons: (1..=n_levels).map(|p| p as f64 * delta_e).collect(),
            g,
            a_pairs,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_levels == 0 {
            return Err(ModelError::Invalid("n_levels must be >= 1".into()));
        }
        if self.epsilons.len() != self.n_levels {
            return Err(ModelError::Invalid(format!(
                "need {} level energies, got {}",
                self.n_levels,
                self.epsilons.len()
            )));
        }
        if self.a_pairs > self.n_levels {
            return Err(ModelError::Invalid("a_pairs cannot exceed n_levels".into()));
        }
        Ok(())
    }

    /// Shifted level energies ε̃_p = ε_p + g/2.
    pub fn shifted_epsilons(&self) -> Vec<f64> {
        self.epsilons.iter().map(|&e| e + self.g / 2.0).collect()
    }

    /// Hartree-Fock reference energy: fill the A_p lowest shifted levels.
    pub fn hf_energy(&self) -> f64 {
        let mut eps = self.shifted_epsilons();
        eps.sort_by(f64::total_cmp);
        2.0 * eps[..self.a_pairs].iter().sum::<f64>()
    }

    /// Dimension of the seniority-zero block with `a_pairs` pairs.
    pub fn sector_dimension(&self) -> u64 {
        binomial(self.n_levels as u64, self.a_pairs as u64)
    }
}

/// 1-D Fermi-Hubbard chain parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HubbardModel {
    pub m_sites: usize,
    /// On-site interaction U.
    pub u: f64,
    /// Hopping amplitude J.
    pub j: f64,
    pub n_particles: usize,
}

impl HubbardModel {
    pub fn n_qubits(&self) -> usize {
        2 * self.m_sites
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.m_sites == 0 {
            return Err(ModelError::Invalid("m_sites must be >= 1".into()));
        }
        if self.n_particles > 2 * self.m_sites {
            return Err(ModelError::Invalid("n_particles cannot exceed 2*m_sites".into()));
        }
        Ok(())
    }
}

/// Trotter-Suzuki plan: product-formula order, step count, total time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrotterPlan {
    pub order: u8,
    pub steps: usize,
    pub time: f64,
}

impl TrotterPlan {
    pub fn first_order(steps: usize, time: f64) -> Self {
        TrotterPlan { order: 1, steps, time }
    }

    pub fn second_order(steps: usize, time: f64) -> Self {
        TrotterPlan { order: 2, steps, time }
    }
}

/// Pairing Hamiltonian (Eq. with the ε_p → ε_p + g/2 replacement applied):
/// H = Σ_p ε̃_p (I - Z_p) - (g/2) Σ_{p>q} (X_p X_q + Y_p Y_q).
pub fn build_pairing(model: &PairingModel) -> PauliSum {
    model.validate().expect("valid pairing model");
    let n = model.n_levels;
    let mut h = PauliSum::zero(n);
    for (p, &eps) in model.shifted_epsilons().iter().enumerate() {
        h.add(PauliString::identity(n), Complex64::new(eps, 0.0));
        h.add(PauliString::single(n, p, PauliOp::Z), Complex64::new(-eps, 0.0));
    }
    let w = Complex64::new(-model.g / 2.0, 0.0);
    for p in 0..n {
        for q in 0..p {
            let mut xx = PauliString::single(n, p, PauliOp::X);
            xx.set_op(q, PauliOp::X);
            let mut yy = PauliString::single(n, p, PauliOp::Y);
            yy.set_op(q, PauliOp::Y);
            h.add(xx, w);
            h.add(yy, w);
        }
    }
    h
}

/// Hubbard Hamiltonian in qubit form:
/// H_J = (J/2) Σ_{α same-spin adjacent} (X_{α+1}X_α + Y_{α+1}Y_α),
/// H_U = (U/4) Σ_α (I - Z_α)(I - Z_{α+M}).
pub fn build_hubbard(model: &HubbardModel) -> PauliSum {
    model.validate().expect("valid hubbard model");
    let m = model.m_sites;
    let n = 2 * m;
    let mut h = PauliSum::zero(n);
    let wj = Complex64::new(model.j / 2.0, 0.0);
    for alpha in 0..n - 1 {
        if alpha == m - 1 {
            continue; // boundary between the spin blocks
        }
        let mut xx = PauliString::single(n, alpha + 1, PauliOp::X);
        xx.set_op(alpha, PauliOp::X);
        let mut yy = PauliString::single(n, alpha + 1, PauliOp::Y);
        yy.set_op(alpha, PauliOp::Y);
        h.add(xx, wj);
        h.add(yy, wj);
    }
    let wu = Complex64::new(model.u / 4.0, 0.0);
    for alpha in 0..m {
        // (I - Z_a)(I - Z_{a+M}) = I - Z_a - Z_{a+M} + Z_a Z_{a+M}
        h.add(PauliString::identity(n), wu);
        h.add(PauliString::single(n, alpha, PauliOp::Z), -wu);
        h.add(PauliString::single(n, alpha + m, PauliOp::Z), -wu);
        let mut zz = PauliString::single(n, alpha, PauliOp::Z);
        zz.set_op(alpha + m, PauliOp::Z);
        h.add(zz, wu);
    }
    h
}

/// Split a Hamiltonian into internally-commuting groups: all diagonal terms
/// first, then non-diagonal terms packed greedily onto disjoint qubit support.
pub fn commuting_groups(h: &PauliSum) -> Vec<PauliSum> {
    let n = h.n_qubits();
    let mut diagonal = PauliSum::zero(n);
    let mut rest: Vec<(PauliString, Complex64)> = Vec::new();
    for (p, w) in h.iter() {
        if p.is_diagonal() {
            diagonal.add(p, w);
        } else {
            rest.push((p, w));
        }
    }
    let mut groups = Vec::new();
    if !diagonal.is_zero() || rest.is_empty() {
        // Keep an (possibly empty) diagonal group so the register size
        // survives even for a zero Hamiltonian.
        groups.push(diagonal);
    }
    // Greedy packing: a term joins the first group with no overlapping support.
    let mut packs: Vec<(u64, PauliSum)> = Vec::new();
    for (p, w) in rest {
        let (x, z) = p.masks();
        let support = x | z;
        match packs.iter_mut().find(|(mask, _)| mask & support == 0) {
            Some((mask, sum)) => {
                *mask |= support;
                sum.add(p, w);
            }
            None => {
                let mut sum = PauliSum::zero(n);
                sum.add(p, w);
                packs.push((support, sum));
            }
        }
    }
    groups.extend(packs.into_iter().map(|(_, s)| s));
    groups
}

/// Exact circuit for e^{-i t G} where G's terms mutually commute.
///
/// Single-Z terms lower to phase rotations, ZZ to R_zz, matched XX/YY pairs to
/// the fused XX+YY block, and anything else to the CNOT-ladder construction.
fn group_evolution_circuit(group: &PauliSum, t: f64, circ: &mut Circuit) -> Result<(), ModelError> {
    let n = group.n_qubits();
    let mut terms: Vec<(PauliString, f64)> = Vec::new();
    for (p, w) in group.iter() {
        if w.im.abs() > 1e-12 {
            return Err(ModelError::Pauli(PauliError::NotHermitian(format!("{p}"), w.im)));
        }
        terms.push((p, w.re));
    }
    // Fuse matching XX / YY pairs on the same two-qubit support.
    let mut used = vec![false; terms.len()];
    for i in 0..terms.len() {
        if used[i] {
            continue;
        }
        let (pi, wi) = (terms[i].0.clone(), terms[i].1);
        let support: Vec<usize> = (0..n).filter(|&q| pi.op(q) != PauliOp::I).collect();
        if support.len() == 2 && support.iter().all(|&q| pi.op(q) == PauliOp::X) {
            let mut yy = PauliString::single(n, support[0], PauliOp::Y);
            yy.set_op(support[1], PauliOp::Y);
            let partner = (0..terms.len())
                .find(|&j| !used[j] && terms[j].0 == yy && (terms[j].1 - wi).abs() < 1e-14);
            if let Some(j) = partner {
                // e^{-i t w (XX + YY)} is the fused block with θ = 2tw.
                used[i] = true;
                used[j] = true;
                circ.push(gates::rxx_plus_yy(support[0], support[1], 2.0 * t * wi));
            }
        }
    }
    for (k, (p, w)) in terms.iter().enumerate() {
        if used[k] {
            continue;
        }
        exp_pauli_term(p, w * t, circ);
    }
    Ok(())
}

/// Append the exact circuit for e^{-i θ P} (θ = weight · time).
fn exp_pauli_term(p: &PauliString, theta: f64, circ: &mut Circuit) {
    let n = p.n_qubits();
    let support: Vec<usize> = (0..n).filter(|&q| p.op(q) != PauliOp::I).collect();
    match support.len() {
        0 => {
            circ.global_phase -= theta;
            return;
        }
        1 => {
            let q = support[0];
            match p.op(q) {
                PauliOp::Z => {
                    circ.push(gates::rz(q, 2.0 * theta));
                    return;
                }
                PauliOp::X => {
                    circ.push(gates::rx(q, 2.0 * theta));
                    return;
                }
                PauliOp::Y => {
                    circ.push(gates::ry(q, 2.0 * theta));
                    return;
                }
                PauliOp::I => unreachable!(),
            }
        }
        2 => {
            if support.iter().all(|&q| p.op(q) == PauliOp::Z) {
                circ.push(gates::rzz(support[0], support[1], 2.0 * theta));
                return;
            }
        }
        _ => {}
    }
    // General CNOT-ladder: rotate each qubit into the Z basis, accumulate the
    // parity on the last support qubit, rz there, then undo.
    for &q in &support {
        match p.op(q) {
            PauliOp::X => {
                circ.push(gates::h(q));
            }
            PauliOp::Y => {
                circ.push(gates::s_dagger(q));
                circ.push(gates::h(q));
            }
            _ => {}
        }
    }
    let last = *support.last().unwrap();
    for w in support.windows(2) {
        circ.push(gates::cnot(w[0], w[1]));
    }
    circ.push(gates::rz(last, 2.0 * theta));
    for w in support.windows(2).rev() {
        circ.push(gates::cnot(w[0], w[1]));
    }
    for &q in &support {
        match p.op(q) {
            PauliOp::X => {
                circ.push(gates::h(q));
            }
            PauliOp::Y => {
                circ.push(gates::h(q));
                circ.push(gates::s(q));
            }
            _ => {}
        }
    }
}

/// Trotter-Suzuki circuit for e^{-iHt} with H = Σ groups.
///
/// First order: (∏_g e^{-i h_g t/r})^r, error O(m²t²/r). Second order:
/// forward-backward sweeps of half steps, error O(m³t³/r²). Group-internal
/// commutation is validated symbolically for registers up to 6 qubits.
pub fn trotter_circuit(groups: &[PauliSum], plan: &TrotterPlan) -> Result<Circuit, ModelError> {
    assert!(plan.steps >= 1, "need at least one Trotter step");
    let n = groups.first().map(|g| g.n_qubits()).unwrap_or(0);
    if n <= 6 {
        for (gi, g) in groups.iter().enumerate() {
            let terms: Vec<_> = g.iter().collect();
            for i in 0..terms.len() {
                for j in 0..i {
                    let comm = terms[i].0.product(&terms[j].0).unwrap();
                    let rev = terms[j].0.product(&terms[i].0).unwrap();
                    if comm != rev {
                        return Err(ModelError::NonCommutingGroup {
                            group: gi,
                            deviation: 2.0 * (terms[i].1 * terms[j].1).norm(),
                        });
                    }
                }
            }
        }
    }
    let mut circ = Circuit::new(n);
    let r = plan.steps;
    match plan.order {
        1 => {
            let dt = plan.time / r as f64;
            for _ in 0..r {
                for g in groups {
                    group_evolution_circuit(g, dt, &mut circ)?;
                }
            }
        }
        2 => {
            let half = plan.time / (2.0 * r as f64);
            for _ in 0..r {
                for g in groups {
                    group_evolution_circuit(g, half, &mut circ)?;
                }
                for g in groups.iter().rev() {
                    group_evolution_circuit(g, half, &mut circ)?;
                }
            }
        }
        o => return Err(ModelError::Invalid(format!("unsupported Trotter order {o}"))),
    }
    Ok(circ)
}

/// Dense Hermitian eigendecomposition of a Pauli-sum operator: the
/// verification oracle. Eigenvalues ascending, eigenvectors as columns.
pub fn exact_diagonalize(h: &PauliSum, n: usize) -> Result<(Vec<f64>, CMatrix), ModelError> {
    if n > MAX_DENSE_QUBITS {
        return Err(ModelError::RegisterTooLarge(n));
    }
    assert_eq!(h.n_qubits(), n);
    h.require_hermitian(1e-10)?;
    Ok(hermitian_eig(&h.matrix()))
}

/// Spectral decomposition of a state against a Hamiltonian: (E_k, |c_k|²),
/// keeping weights above `weight_floor`.
pub fn eigen_overlaps(
    state: &Statevector,
    h: &PauliSum,
    weight_floor: f64,
) -> Result<Vec<(f64, f64)>, ModelError> {
    let (vals, vecs) = exact_diagonalize(h, state.n_qubits())?;
    let v = state.to_cvector();
    let coeffs = vecs.adjoint() * v;
    Ok(vals
        .iter()
        .zip(coeffs.iter())
        .map(|(&e, c)| (e, c.norm_sqr()))
        .filter(|&(_, w)| w > weight_floor)
        .collect())
}

/// Scaling for the QPE propagator U = e^{-2πiτ(H-E)}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PropagatorScale {
    /// Spectrum unknown: E = -|H|, τ = -1/(2|H|), |H| = Σ_k |c_k|.
    OneNorm,
    /// Spectrum known: E = E_min, τ = -1/(𝓔_max - E_min) with
    /// 𝓔_max = E_max · 2^{n_a}/(2^{n_a}-1), maximizing ancilla resolution.
    KnownSpectrum { e_min: f64, e_max: f64, n_ancilla: usize },
}

impl PropagatorScale {
    /// Resolve to concrete (τ, E).
    pub fn resolve(&self, h: &PauliSum) -> (f64, f64) {
        match *self {
            PropagatorScale::OneNorm => {
                let norm = h.coeff_one_norm().max(1e-300);
                (-1.0 / (2.0 * norm), -norm)
            }
            PropagatorScale::KnownSpectrum { e_min, e_max, n_ancilla } => {
                let blowup = (1u64 << n_ancilla) as f64 / ((1u64 << n_ancilla) as f64 - 1.0);
                let e_top = e_max * blowup;
                (-1.0 / (e_top - e_min), e_min)
            }
        }
    }
}

/// Trotterized circuit for the QPE propagator e^{-2πiτ(H-E)}.
pub fn propagator_unitary(
    h: &PauliSum,
    tau: f64,
    e_shift: f64,
    steps: usize,
) -> Result<Circuit, ModelError> {
    let groups = commuting_groups(h);
    let plan = TrotterPlan::first_order(steps.max(1), 2.0 * std::f64::consts::PI * tau);
    let mut circ = trotter_circuit(&groups, &plan)?;
    circ.global_phase += 2.0 * std::f64::consts::PI * tau * e_shift;
    Ok(circ)
}

/// Dense matrix of e^{-2πiτ(H-E)} via eigendecomposition (oracle path).
pub fn propagator_matrix(h: &PauliSum, tau: f64, e_shift: f64) -> Result<CMatrix, ModelError> {
    if h.n_qubits() > MAX_DENSE_QUBITS {
        return Err(ModelError::RegisterTooLarge(h.n_qubits()));
    }
    let m = crate::linalg::hermitian_exp(&h.matrix(), -2.0 * std::f64::consts::PI * tau);
    Ok(m * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * tau * e_shift))
}

/// Hamiltonian moments ⟨H^k⟩ for k = 0..=k_max by repeated application,
/// accumulated with compensated summation.
pub fn hamiltonian_moments(state: &Statevector, h: &PauliSum, k_max: usize) -> Result<Vec<f64>, ModelError> {
    h.require_hermitian(1e-10)?;
    let mut moments = Vec::with_capacity(k_max + 1);
    moments.push(1.0);
    let psi0 = state.amplitudes().to_vec();
    let mut current = psi0.clone();
    for _ in 1..=k_max {
        let mut next = vec![Complex64::new(0.0, 0.0); current.len()];
        for (p, w) in h.iter() {
            for (i, &a) in current.iter().enumerate() {
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let (j, ph) = p.apply_to_basis(i as u64);
                next[j as usize] += w * ph * a;
            }
        }
        current = next;
        let mut acc = KahanSum::new();
        for (a, b) in psi0.iter().zip(&current) {
            acc.add((a.conj() * b).re);
        }
        moments.push(acc.value());
    }
    Ok(moments)
}

/// Compensated (Kahan) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Binomial coefficient C(n, k).
pub fn binomial(n: u64, k: u64) -> u64 {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frob_dist, hermitian_exp};
    use crate::sim::apply_circuit;
    use approx::assert_abs_diff_eq;

    fn number_operator(n: usize) -> PauliSum {
        let mut op = PauliSum::zero(n);
        for j in 0..n {
            op.add(PauliString::identity(n), Complex64::new(0.5, 0.0));
            op.add(PauliString::single(n, j, PauliOp::Z), Complex64::new(-0.5, 0.0));
        }
        op
    }

    #[test]
    fn pairing_zero_coupling_sector_ground_energy() {
        // g = 0: H is diagonal; the A_p-pair ground energy fills the lowest levels.
        let model = PairingModel::equidistant(4, 1.0, 0.0, 2);
        let h = build_pairing(&model);
        let (vals, vecs) = exact_diagonalize(&h, 4).unwrap();
        let nop = number_operator(4);
        let mut best = f64::INFINITY;
        for k in 0..vals.len() {
            let col = vecs.column(k).clone_owned();
            let amps: Vec<Complex64> = col.iter().copied().collect();
            let state = Statevector::from_amplitudes(4, amps).unwrap();
            let pairs = crate::sim::expectation(&state, &nop).unwrap();
            if (pairs - 2.0).abs() < 1e-8 {
                best = best.min(vals[k]);
            }
        }
        assert_abs_diff_eq!(best, 2.0 * (1.0 + 2.0), epsilon = 1e-9);
    }

    #[test]
    fn pairing_is_hermitian_and_conserves_pair_number() {
        let model = PairingModel::equidistant(5, 1.0, 0.7, 2);
        let h = build_pairing(&model);
        h.require_hermitian(1e-12).unwrap();
        let comm = h.commutator(&number_operator(5)).unwrap();
        assert!(comm.coeff_one_norm() < 1e-12);
    }

    #[test]
    fn pairing_seniority_zero_dimension() {
        let model = PairingModel::equidistant(8, 1.0, 1.0, 4);
        assert_eq!(model.sector_dimension(), 70);
        assert_eq!(binomial(8, 4), 70);
    }

    #[test]
    fn hubbard_conserves_particle_number_and_sz() {
        let model = HubbardModel { m_sites: 3, u: 1.3, j: 0.8, n_particles: 3 };
        let h = build_hubbard(&model);
        h.require_hermitian(1e-12).unwrap();
        let n = model.n_qubits();
        let ntot = number_operator(n);
        assert!(h.commutator(&ntot).unwrap().coeff_one_norm() < 1e-12);
        // S_z = (N_up - N_down)/2 over sites.
        let mut sz = PauliSum::zero(n);
        for i in 0..model.m_sites {
            sz.add(PauliString::single(n, i, PauliOp::Z), Complex64::new(-0.25, 0.0));
            sz.add(PauliString::single(n, i + model.m_sites, PauliOp::Z), Complex64::new(0.25, 0.0));
        }
        assert!(h.commutator(&sz).unwrap().coeff_one_norm() < 1e-12);
    }

    #[test]
    fn hubbard_single_particle_is_tight_binding() {
        // U = 0, one spin-up particle on M = 3 sites: eigenvalues within the
        // sector are the open-chain tight-binding band ±2J cos(kπ/(M+1)).
        let m = 3;
        let model = HubbardModel { m_sites: m, u: 0.0, j: 1.0, n_particles: 1 };
        let h = build_hubbard(&model);
        let n = model.n_qubits();
        // H commutes with N, so it is block diagonal over particle number;
        // extract the one-particle block directly.
        let hm = h.matrix();
        let basis: Vec<usize> = (0..1usize << n).filter(|b| b.count_ones() == 1).collect();
        let mut block = CMatrix::zeros(basis.len(), basis.len());
        for (r, &br) in basis.iter().enumerate() {
            for (c, &bc) in basis.iter().enumerate() {
                block[(r, c)] = hm[(br, bc)];
            }
        }
        let (mut sector, _) = crate::linalg::hermitian_eig(&block);
        sector.sort_by(f64::total_cmp);
        let mut band: Vec<f64> = (1..=m)
            .flat_map(|k| {
                let e = 2.0 * (k as f64 * std::f64::consts::PI / (m as f64 + 1.0)).cos();
                [e, e] // spin-up and spin-down copies
            })
            .collect();
        band.sort_by(f64::total_cmp);
        assert_eq!(sector.len(), band.len());
        for (a, b) in sector.iter().zip(&band) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn hubbard_zero_hopping_counts_double_occupancy() {
        let model = HubbardModel { m_sites: 2, u: 1.5, j: 0.0, n_particles: 2 };
        let h = build_hubbard(&model);
        assert!(h.is_diagonal());
        let (vals, _) = exact_diagonalize(&h, 4).unwrap();
        let mut expected: Vec<f64> = (0..16u64)
            .map(|b| {
                let double = (0..2).filter(|&i| (b >> i) & 1 == 1 && (b >> (i + 2)) & 1 == 1).count();
                1.5 * double as f64
            })
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip(&expected) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_group_trotter_is_exact_for_any_r() {
        // A fully commuting Hamiltonian evolves exactly at one step.
        let model = PairingModel::equidistant(3, 1.0, 0.0, 1);
        let h = build_pairing(&model);
        let groups = commuting_groups(&h);
        assert_eq!(groups.len(), 1);
        for r in [1usize, 3] {
            let circ = trotter_circuit(&groups, &TrotterPlan::first_order(r, 0.9)).unwrap();
            let exact = hermitian_exp(&h.matrix(), -0.9);
            assert!(frob_dist(&circ.to_matrix(), &exact) < 1e-11, "r = {r}");
        }
    }

    #[test]
    fn trotter_error_scaling_first_and_second_order() {
        let model = PairingModel::equidistant(4, 1.0, 1.0, 2);
        let h = build_pairing(&model);
        let groups = commuting_groups(&h);
        let t = 0.5;
        let exact = hermitian_exp(&h.matrix(), -t);
        let mut errs1 = Vec::new();
        let mut errs2 = Vec::new();
        for &r in &[1usize, 2, 4, 8, 16] {
            let c1 = trotter_circuit(&groups, &TrotterPlan::first_order(r, t)).unwrap();
            let c2 = trotter_circuit(&groups, &TrotterPlan::second_order(r, t)).unwrap();
            errs1.push(frob_dist(&c1.to_matrix(), &exact));
            errs2.push(frob_dist(&c2.to_matrix(), &exact));
        }
        let slope = |errs: &[f64]| {
            // least-squares slope of ln(err) vs ln(r)
            let xs: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0, 16.0].iter().map(|r| r.ln()).collect();
            let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
            let xm = xs.iter().sum::<f64>() / xs.len() as f64;
            let ym = ys.iter().sum::<f64>() / ys.len() as f64;
            let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
            let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
            num / den
        };
        let s1 = slope(&errs1);
        let s2 = slope(&errs2);
        assert!((s1 + 1.0).abs() < 0.3, "first-order slope {s1}");
        assert!((s2 + 2.0).abs() < 0.4, "second-order slope {s2}");
        // Second order is strictly more accurate at every r tested.
        for (e1, e2) in errs1.iter().zip(&errs2) {
            assert!(e2 < e1);
        }
    }

    #[test]
    fn trotter_survival_probability_tracks_exact_evolution() {
        // |0011⟩ under Δt = 0.1 stepping of the 4-level pairing model.
        let model = PairingModel::equidistant(4, 1.0, 1.0, 2);
        let h = build_pairing(&model);
        let groups = commuting_groups(&h);
        let dt = 0.1;
        let step = trotter_circuit(&groups, &TrotterPlan::first_order(1, dt)).unwrap();
        let initial = Statevector::basis(4, 0b0011);
        let (vals, vecs) = exact_diagonalize(&h, 4).unwrap();
        let coeffs = vecs.adjoint() * initial.to_cvector();
        let mut state = initial.clone();
        let mut max_dev: f64 = 0.0;
        for k in 1..=30 {
            state = apply_circuit(&state, &step).unwrap();
            let t = dt * k as f64;
            let p_trot = state.probability(0b0011);
            let amp: Complex64 = vals
                .iter()
                .zip(coeffs.iter())
                .map(|(&e, c)| c.norm_sqr() * Complex64::from_polar(1.0, -e * t))
                .sum();
            let p_exact = amp.norm_sqr();
            max_dev = max_dev.max((p_trot - p_exact).abs());
        }
        assert!(max_dev < 0.02, "max deviation {max_dev}");
    }

    #[test]
    fn non_commuting_group_rejected() {
        let mut g = PauliSum::zero(2);
        g.add(PauliString::single(2, 0, PauliOp::X), Complex64::new(1.0, 0.0));
        g.add(PauliString::single(2, 0, PauliOp::Z), Complex64::new(1.0, 0.0));
        let err = trotter_circuit(&[g], &TrotterPlan::first_order(1, 1.0));
        assert!(matches!(err, Err(ModelError::NonCommutingGroup { .. })));
    }

    #[test]
    fn exact_diagonalize_single_z() {
        let mut h = PauliSum::zero(1);
        h.add(PauliString::single(1, 0, PauliOp::Z), Complex64::new(1.0, 0.0));
        let (vals, vecs) = exact_diagonalize(&h, 1).unwrap();
        assert_abs_diff_eq!(vals[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-12);
        // Residual check ||Hv - λv||.
        let hm = h.matrix();
        for k in 0..2 {
            let v = vecs.column(k).clone_owned();
            assert!((&hm * &v - v.scale(vals[k])).norm() < 1e-9);
        }
    }

    #[test]
    fn register_too_large_rejected() {
        let h = PauliSum::zero(15);
        assert!(matches!(exact_diagonalize(&h, 15), Err(ModelError::RegisterTooLarge(15))));
    }

    #[test]
    fn propagator_zero_hamiltonian_is_global_phase() {
        let h = PauliSum::zero(2);
        let circ = propagator_unitary(&h, 0.25, 1.5, 1).unwrap();
        let m = circ.to_matrix();
        let expected = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 0.25 * 1.5);
        assert!(frob_dist(&m, &(CMatrix::identity(4, 4) * expected)) < 1e-12);
    }

    #[test]
    fn propagator_known_spectrum_phases_land_on_grid() {
        // With E = E_min and 𝓔_max blowup, eigenphases θ_j = -τ(E_j - E) lie in
        // [0, 1) and the extremes hit 0 and (2^na - 1)/2^na.
        let model = PairingModel::equidistant(4, 1.0, 1.0, 2);
        let h = build_pairing(&model);
        let (vals, _) = exact_diagonalize(&h, 4).unwrap();
        let n_a = 5;
        let scale = PropagatorScale::KnownSpectrum {
            e_min: vals[0],
            e_max: *vals.last().unwrap(),
            n_ancilla: n_a,
        };
        let (tau, e) = scale.resolve(&h);
        for &ej in &vals {
            let theta = -tau * (ej - e);
            assert!((0.0..1.0).contains(&theta), "θ = {theta}");
        }
        let theta_max = -tau * (vals.last().unwrap() - e);
        let grid_top = ((1u64 << n_a) - 1) as f64 / (1u64 << n_a) as f64;
        assert_abs_diff_eq!(theta_max, grid_top, epsilon = 1e-12);
    }

    #[test]
    fn propagator_trotter_matches_dense_for_many_steps() {
        let model = PairingModel::equidistant(3, 1.0, 0.6, 1);
        let h = build_pairing(&model);
        let (tau, e) = PropagatorScale::OneNorm.resolve(&h);
        let dense = propagator_matrix(&h, tau, e).unwrap();
        let dists: Vec<f64> = [1usize, 4, 16, 64]
            .iter()
            .map(|&steps| {
                let circ = propagator_unitary(&h, tau, e, steps).unwrap();
                frob_dist(&circ.to_matrix(), &dense)
            })
            .collect();
        for w in dists.windows(2) {
            assert!(w[1] < w[0], "distances not decreasing: {dists:?}");
        }
        // First-order convergence: 64x more steps gains ~64x accuracy.
        assert!(dists[3] < dists[0] / 30.0, "distances {dists:?}");
        assert!(dists[3] < 5e-3);
    }

    #[test]
    fn moments_match_spectral_sums() {
        let model = PairingModel::equidistant(4, 1.0, 0.8, 2);
        let h = build_pairing(&model);
        let state = Statevector::basis(4, 0b0011);
        let moments = hamiltonian_moments(&state, &h, 12).unwrap();
        let overlaps = eigen_overlaps(&state, &h, 0.0).unwrap();
        for k in 0..=12 {
            let spectral: f64 = overlaps.iter().map(|(e, w)| w * e.powi(k as i32)).sum();
            let rel = (moments[k] - spectral).abs() / spectral.abs().max(1.0);
            assert!(rel < 1e-10, "k = {k}: {} vs {}", moments[k], spectral);
        }
    }

    #[test]
    fn hf_energy_fills_lowest_shifted_levels() {
        let model = PairingModel::equidistant(8, 1.0, 1.0, 4);
        // ε̃_p = p + 0.5, so E_HF = 2(1.5 + 2.5 + 3.5 + 4.5) = 24.
        assert_abs_diff_eq!(model.hf_energy(), 24.0, epsilon = 1e-12);
    }
}
