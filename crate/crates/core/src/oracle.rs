//! Oracle-based symmetry restoration: amplitude amplification, the
//! Grover-Hoyer exact rotation, oracle+Hadamard projection, implicit
//! (projection-free) expectation values, and the LCU realization with its
//! success-probability accounting.
//!
//! A general oracle applies phase e^{iφ} on the "Good" sector and e^{iμ} on
//! its complement: O(φ, μ) = e^{iφ} P + e^{iμ} (I - P). The Grover oracle is
//! O(π, 0).

use num_complex::Complex64;

use crate::linalg::{unitary_from_first_column, CMatrix, CVector};
use crate::pauli::PauliSum;
use crate::sim::{self, apply_circuit, Circuit, SimError, Statevector};
use crate::symmetry::{ExactProjector, ProjectionOutcome, RunMode, SymmetryError, SymmetryOperator};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("good component is absent (p_G = {0:.3e}): amplification impossible")]
    EmptyGood(f64),
    #[error("state is already projected or the sector is empty (g = {0})")]
    Degenerate(f64),
    #[error("rotation angle {lambda} exceeds the feasible bound 2θ = {max}")]
    InfeasibleRotation { lambda: f64, max: f64 },
    #[error("operator does not commute with the projector (|[A,P]| = {0:.3e})")]
    NonCommuting(f64),
    #[error("sector weight {0:.3e} below threshold: empty sector")]
    EmptySector(f64),
    #[error("the amplitude (square-root) state preparation needs nonnegative real coefficients")]
    SqrtAmpComplex,
    #[error("plan has {terms} terms but only {slots} ancilla basis states")]
    AncillaOverflow { terms: usize, slots: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
}

/// What defines the Good subspace.
pub enum OracleSector {
    /// Membership flag per computational basis state.
    Basis(Vec<bool>),
    /// Symmetry eigenspace at a lattice eigenvalue.
    Symmetry(Box<ExactProjector>),
}

impl OracleSector {
    pub fn from_predicate(n: usize, pred: impl Fn(u64) -> bool) -> Self {
        OracleSector::Basis((0..1u64 << n).map(pred).collect())
    }

    pub fn for_symmetry(symmetry: SymmetryOperator, lambda: f64) -> Result<Self, OracleError> {
        Ok(OracleSector::Symmetry(Box::new(ExactProjector::new(symmetry, lambda)?)))
    }

    /// P |ψ⟩, unnormalized.
    pub fn project(&self, state: &Statevector) -> Vec<Complex64> {
        match self {
            OracleSector::Basis(good) => state
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(b, &a)| if good[b] { a } else { Complex64::new(0.0, 0.0) })
                .collect(),
            OracleSector::Symmetry(proj) => proj.apply_unnormalized(state),
        }
    }

    /// ⟨P⟩ = ‖P|ψ⟩‖².
    pub fn good_weight(&self, state: &Statevector) -> f64 {
        self.project(state).iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Diagonal-in-the-sector-basis unitary O(φ, μ) = e^{iφ}P + e^{iμ}(I - P).
pub struct Oracle {
    pub phi: f64,
    pub mu: f64,
    pub sector: OracleSector,
}

impl Oracle {
    pub fn new(sector: OracleSector, phi: f64, mu: f64) -> Self {
        Oracle { phi, mu, sector }
    }

    /// Standard Grover oracle O(π, 0).
    pub fn grover(sector: OracleSector) -> Self {
        Oracle::new(sector, std::f64::consts::PI, 0.0)
    }

    /// O|ψ⟩ = e^{iμ}|ψ⟩ + (e^{iφ} - e^{iμ}) P|ψ⟩.
    pub fn apply(&self, state: &Statevector) -> Statevector {
        let e_phi = Complex64::from_polar(1.0, self.phi);
        let e_mu = Complex64::from_polar(1.0, self.mu);
        let proj = self.sector.project(state);
        let amps: Vec<Complex64> = state
            .amplitudes()
            .iter()
            .zip(proj)
            .map(|(&a, p)| e_mu * a + (e_phi - e_mu) * p)
            .collect();
        Statevector::from_unnormalized(state.n_qubits(), amps).expect("oracle is unitary")
    }

    /// Dense matrix (test scale).
    pub fn matrix(&self, n: usize) -> CMatrix {
        let dim = 1usize << n;
        let mut m = CMatrix::zeros(dim, dim);
        for col in 0..dim {
            let out = self.apply(&Statevector::basis(n, col as u64));
            for row in 0..dim {
                m[(row, col)] = out.amplitude(row as u64);
            }
        }
        m
    }
}

/// Amplitude amplification: apply 𝓐 = R_ψ O m times, where R_ψ is the
/// reflection about the initial state. Returns the final state plus the trace
/// p_G(0..=m), which follows sin²((2k+1)θ) with sin²θ = p_G(0).
pub fn amplitude_amplify(
    prep: &Circuit,
    oracle: &Oracle,
    m: usize,
) -> Result<(Statevector, Vec<f64>), OracleError> {
    let initial = apply_circuit(&Statevector::zero(prep.n_qubits), prep)?;
    amplitude_amplify_state(&initial, oracle, m)
}

/// Same as [`amplitude_amplify`] but starting from a prepared state.
pub fn amplitude_amplify_state(
    initial: &Statevector,
    oracle: &Oracle,
    m: usize,
) -> Result<(Statevector, Vec<f64>), OracleError> {
    let p0 = oracle.sector.good_weight(initial);
    if p0 < 1e-24 {
        return Err(OracleError::EmptyGood(p0));
    }
    let mut trace = Vec::with_capacity(m + 1);
    trace.push(p0);
    let mut state = initial.clone();
    for _ in 0..m {
        let oracled = oracle.apply(&state);
        // R_ψ = 2|ψ₀⟩⟨ψ₀| - I about the initial state.
        let overlap = initial.inner(&oracled);
        let amps: Vec<Complex64> = initial
            .amplitudes()
            .iter()
            .zip(oracled.amplitudes())
            .map(|(&i, &o)| 2.0 * overlap * i - o)
            .collect();
        state = Statevector::from_unnormalized(state.n_qubits(), amps)?;
        trace.push(oracle.sector.good_weight(&state));
    }
    Ok((state, trace))
}

/// Parameters of the generalized Grover operator that realizes an arbitrary
/// rotation R(λ) in the {|ψ_B⟩, |ψ_G⟩} plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoyerParams {
    pub lambda: f64,
    /// Reflection phase ϕ of the generalized U_ψ.
    pub phi_grover: f64,
    /// Oracle phase φ.
    pub varphi_oracle: f64,
    pub u: f64,
    pub v: f64,
}

/// Solve the matching conditions for an arbitrary rotation of angle λ given a
/// good-state weight g = sin²θ:
///   cos ϕ = 1 - sin²λ / (2g(1-g)),    tan(φ/2) = tan(ϕ/2)(1-2g),
///   u = (π-φ)/2,    v = Arg(-(1/cos λ)[(1-e^{iϕ})g + e^{iϕ}]).
pub fn hoyer_params(g: f64, lambda: f64) -> Result<HoyerParams, OracleError> {
    assert!(g > 0.0 && g < 1.0, "g must lie strictly inside (0,1)");
    let mut lambda = lambda;
    let cos_phi = 1.0 - lambda.sin().powi(2) / (2.0 * g * (1.0 - g));
    if cos_phi < -1.0 - 1e-12 {
        let max = 2.0 * g.sqrt().asin();
        return Err(OracleError::InfeasibleRotation { lambda, max });
    }
    // Guard the v formula against cos λ = 0.
    if lambda.cos().abs() < 1e-12 {
        lambda += 1e-9;
    }
    let phi = cos_phi.clamp(-1.0, 1.0).acos();
    let varphi = 2.0 * ((phi / 2.0).tan() * (1.0 - 2.0 * g)).atan();
    let u = (std::f64::consts::PI - varphi) / 2.0;
    let e_phi = Complex64::from_polar(1.0, phi);
    let inner = -((Complex64::new(1.0, 0.0) - e_phi) * g + e_phi) / lambda.cos();
    let v = inner.arg();
    Ok(HoyerParams { lambda, phi_grover: phi, varphi_oracle: varphi, u, v })
}

/// Generalized Grover operator G(ϕ, φ) = U_ψ O_φ in the {|ψ_B⟩, |ψ_G⟩} basis.
pub fn grover_matrix_2d(g: f64, phi: f64, varphi: f64) -> [[Complex64; 2]; 2] {
    let e_phi = Complex64::from_polar(1.0, phi);
    let e_var = Complex64::from_polar(1.0, varphi);
    let one = Complex64::new(1.0, 0.0);
    let root = (g * (1.0 - g)).sqrt();
    [
        [-((one - e_phi) * g + e_phi), (one - e_phi) * root * e_var],
        [(one - e_phi) * root, ((one - e_phi) * g - one) * e_var],
    ]
}

/// R(λ) = e^{-iv} diag(1, e^{-iu}) G(ϕ, φ) diag(1, e^{iu}).
pub fn hoyer_rotation_2d(g: f64, params: &HoyerParams) -> [[Complex64; 2]; 2] {
    let gm = grover_matrix_2d(g, params.phi_grover, params.varphi_oracle);
    let e_v = Complex64::from_polar(1.0, -params.v);
    let e_u = Complex64::from_polar(1.0, params.u);
    [
        [e_v * gm[0][0], e_v * gm[0][1] * e_u],
        [e_v * gm[1][0] / e_u, e_v * gm[1][1]],
    ]
}

/// Route taken by the complete searching algorithm.
#[derive(Debug, Clone, PartialEq)]
pub enum GroverHoyerRoute {
    /// k = ½(π/2θ - 1) was a whole number: k plain Grover steps.
    Integer { k: usize },
    /// m rotations of angle λ = w/m via the generalized operator.
    Rotations { m: usize, params: HoyerParams },
}

/// Exactly project a state onto the Good subspace: plain amplitude
/// amplification when ½(π/2θ - 1) is an integer, otherwise m generalized
/// rotations of angle λ = (π/2 - θ)/m.
pub fn grover_hoyer_project(
    state: &Statevector,
    sector: &OracleSector,
) -> Result<(Statevector, GroverHoyerRoute), OracleError> {
    let g = sector.good_weight(state);
    if g < 1e-24 || g > 1.0 - 1e-14 {
        return Err(OracleError::Degenerate(g));
    }
    let theta = g.sqrt().min(1.0).asin();
    // Normalized Good/Bad basis extracted from the state itself, so the
    // initial coordinates are real: (√b, √g).
    let proj = sector.project(state);
    let b = 1.0 - g;
    let psi_g: Vec<Complex64> = proj.iter().map(|a| a / g.sqrt()).collect();
    let psi_b: Vec<Complex64> = state
        .amplitudes()
        .iter()
        .zip(&proj)
        .map(|(&a, p)| (a - p) / b.sqrt())
        .collect();
    let mut coords = [Complex64::new(b.sqrt(), 0.0), Complex64::new(g.sqrt(), 0.0)];
    let apply2 = |m: &[[Complex64; 2]; 2], c: &mut [Complex64; 2]| {
        let out = [
            m[0][0] * c[0] + m[0][1] * c[1],
            m[1][0] * c[0] + m[1][1] * c[1],
        ];
        *c = out;
    };
    let k_exact = 0.5 * (std::f64::consts::PI / (2.0 * theta) - 1.0);
    let route = if (k_exact - k_exact.round()).abs() < 1e-12 {
        let k = k_exact.round() as usize;
        let g_std = grover_matrix_2d(g, std::f64::consts::PI, std::f64::consts::PI);
        for _ in 0..k {
            apply2(&g_std, &mut coords);
        }
        GroverHoyerRoute::Integer { k }
    } else {
        let w = std::f64::consts::FRAC_PI_2 - theta;
        let m = (w / (2.0 * theta)).ceil().max(1.0) as usize;
        let lambda = w / m as f64;
        let params = hoyer_params(g, lambda)?;
        let rot = hoyer_rotation_2d(g, &params);
        for _ in 0..m {
            apply2(&rot, &mut coords);
        }
        GroverHoyerRoute::Rotations { m, params }
    };
    let amps: Vec<Complex64> = psi_b
        .iter()
        .zip(&psi_g)
        .map(|(bb, gg)| coords[0] * bb + coords[1] * gg)
        .collect();
    Ok((Statevector::from_unnormalized(state.n_qubits(), amps)?, route))
}

/// Oracle + Hadamard-test projection with the Grover oracle O(π, 0): reading
/// the ancilla in |1⟩ leaves P|Ψ⟩, in |0⟩ the complement, with P(1) = ⟨P⟩.
pub fn oracle_hadamard_project(
    state: &Statevector,
    sector: &OracleSector,
    mode: RunMode,
) -> Result<ProjectionOutcome, OracleError> {
    let proj = sector.project(state);
    let p1: f64 = proj.iter().map(|a| a.norm_sqr()).sum();
    match mode {
        RunMode::Exact => {
            if p1 < 1e-24 {
                return Err(OracleError::EmptySector(p1));
            }
            Ok(ProjectionOutcome {
                state: Statevector::from_unnormalized(state.n_qubits(), proj)?,
                accepted: true,
                ancilla_readout: "1".into(),
                success_probability: p1,
            })
        }
        RunMode::Sample { shots: _, seed } => {
            use rand::Rng;
            let mut rng = sim::rng_from_seed(seed);
            let accepted = rng.gen::<f64>() < p1;
            let amps = if accepted {
                proj
            } else {
                state
                    .amplitudes()
                    .iter()
                    .zip(&proj)
                    .map(|(&a, p)| a - p)
                    .collect()
            };
            let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            if norm2 < 1e-24 {
                return Err(OracleError::EmptySector(norm2));
            }
            Ok(ProjectionOutcome {
                state: Statevector::from_unnormalized(state.n_qubits(), amps)?,
                accepted,
                ancilla_readout: if accepted { "1".into() } else { "0".into() },
                success_probability: if accepted { p1 } else { 1.0 - p1 },
            })
        }
    }
}

/// Which decomposition drives an implicit expectation value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImplicitRoute {
    /// ⟨A P⟩/⟨P⟩ from the projector expansion coefficients α_k.
    Projector,
    /// The same value recovered from oracle expectations via
    /// (⟨A O⟩ - e^{iμ}⟨A⟩)/(⟨O⟩ - e^{iμ}).
    Oracle { phi: f64, mu: f64 },
}

/// Expectation value over the projected state without projecting:
/// ⟨A P_S⟩/⟨P_S⟩ assembled from the 2(M+1) expectations ⟨A e^{iφ_k S}⟩ and
/// ⟨e^{iφ_k S}⟩.
///
/// Requires [A, P_S] = 0, which is checked densely for registers up to 8
/// qubits.
pub fn implicit_expectation(
    state: &Statevector,
    observable: &PauliSum,
    symmetry: &SymmetryOperator,
    lambda_target: f64,
    route: ImplicitRoute,
) -> Result<f64, OracleError> {
    let projector = ExactProjector::new(symmetry.clone(), lambda_target)?;
    if state.n_qubits() <= 8 {
        let a = observable.matrix();
        let p = projector.matrix();
        let comm = (&a * &p - &p * &a).norm();
        if comm > 1e-8 {
            return Err(OracleError::NonCommuting(comm));
        }
    }
    let action = symmetry.action();
    let coeffs = projector.coefficients();
    // Per-k expectations ⟨e^{iφ_k S}⟩ and ⟨A e^{iφ_k S}⟩.
    let mut plain = Vec::with_capacity(coeffs.len());
    let mut with_a = Vec::with_capacity(coeffs.len());
    for &(_, phi) in &coeffs {
        let evolved = action.evolve(state.amplitudes(), phi);
        let ev_state = Statevector::from_amplitudes(state.n_qubits(), evolved.clone())
            .unwrap_or_else(|_| {
                Statevector::from_unnormalized(state.n_qubits(), evolved.clone()).unwrap()
            });
        let inner_plain: Complex64 = state
            .amplitudes()
            .iter()
            .zip(ev_state.amplitudes())
            .map(|(a, b)| a.conj() * b)
            .sum();
        let applied = ev_state.apply_sum_unnormalized(observable)?;
        let inner_a: Complex64 = state
            .amplitudes()
            .iter()
            .zip(&applied)
            .map(|(a, b)| a.conj() * b)
            .sum();
        plain.push(inner_plain);
        with_a.push(inner_a);
    }
    let value = match route {
        ImplicitRoute::Projector => {
            let p_exp: Complex64 = coeffs.iter().zip(&plain).map(|(&(a, _), &e)| a * e).sum();
            let ap_exp: Complex64 = coeffs.iter().zip(&with_a).map(|(&(a, _), &e)| a * e).sum();
            if p_exp.norm() < 1e-12 {
                return Err(OracleError::EmptySector(p_exp.norm()));
            }
            ap_exp / p_exp
        }
        ImplicitRoute::Oracle { phi, mu } => {
            let e_phi = Complex64::from_polar(1.0, phi);
            let e_mu = Complex64::from_polar(1.0, mu);
            // β_k = e^{iμ} δ_{0k} + (e^{iφ} - e^{iμ}) α_k.
            let o_exp: Complex64 = coeffs
                .iter()
                .enumerate()
                .zip(&plain)
                .map(|((k, &(a, _)), &e)| {
                    let beta = if k == 0 { e_mu } else { Complex64::new(0.0, 0.0) }
                        + (e_phi - e_mu) * a;
                    beta * e
                })
                .sum();
            let ao_exp: Complex64 = coeffs
                .iter()
                .enumerate()
                .zip(&with_a)
                .map(|((k, &(a, _)), &e)| {
                    let beta = if k == 0 { e_mu } else { Complex64::new(0.0, 0.0) }
                        + (e_phi - e_mu) * a;
                    beta * e
                })
                .sum();
            let a_exp: Complex64 = sim::expectation_complex(state, observable)?;
            let denom = o_exp - e_mu;
            if denom.norm() < 1e-12 {
                return Err(OracleError::EmptySector(denom.norm()));
            }
            (ao_exp - e_mu * a_exp) / denom
        }
    };
    Ok(value.re)
}

/// Ancilla state-preparation flavor for the LCU register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BChoice {
    /// B|0⟩ ∝ Σ √α_k |k⟩ (needs nonnegative real α_k), E = B†.
    SqrtAmp,
    /// B|0⟩ ∝ Σ α_k |k⟩.
    Amp,
}

/// Ancilla un-preparation operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EChoice {
    BDagger,
    HadamardAll,
    /// L† where L|0⟩ spreads uniformly over the first m basis states; accepts
    /// more events than Hadamard whenever 2^{n_LCU} > m.
    LDagger,
}

/// Concrete LCU realization of A = Σ_k α_k V_k with V_k = e^{iφ_k S} (times an
/// absorbed unit phase when the √-amplitude preparation is used).
pub struct LcuPlan {
    symmetry: SymmetryOperator,
    /// (coefficient, evolution angle, absorbed phase) per term.
    terms: Vec<(Complex64, f64, Complex64)>,
    pub b_choice: BChoice,
    pub e_choice: EChoice,
    pub n_lcu: usize,
}

impl LcuPlan {
    /// Plan for the spectral projector P_S at eigenvalue λ'.
    pub fn projector(
        symmetry: SymmetryOperator,
        lambda_target: f64,
        b_choice: BChoice,
        e_choice: EChoice,
    ) -> Result<Self, OracleError> {
        let proj = ExactProjector::new(symmetry.clone(), lambda_target)?;
        let coeffs = proj.coefficients();
        Self::from_coefficients(symmetry, coeffs, b_choice, e_choice)
    }

    /// Plan for the general oracle O_S(φ, μ) via the β_k expansion.
    pub fn oracle(
        symmetry: SymmetryOperator,
        lambda_target: f64,
        phi: f64,
        mu: f64,
        b_choice: BChoice,
        e_choice: EChoice,
    ) -> Result<Self, OracleError> {
        let proj = ExactProjector::new(symmetry.clone(), lambda_target)?;
        let e_phi = Complex64::from_polar(1.0, phi);
        let e_mu = Complex64::from_polar(1.0, mu);
        let coeffs: Vec<(Complex64, f64)> = proj
            .coefficients()
            .into_iter()
            .enumerate()
            .map(|(k, (alpha, angle))| {
                let beta = if k == 0 { e_mu } else { Complex64::new(0.0, 0.0) }
                    + (e_phi - e_mu) * alpha;
                (beta, angle)
            })
            .collect();
        Self::from_coefficients(symmetry, coeffs, b_choice, e_choice)
    }

    /// Build from explicit (coefficient, angle) pairs. For the √-amplitude
    /// preparation, coefficient phases are absorbed into the unitaries.
    pub fn from_coefficients(
        symmetry: SymmetryOperator,
        coeffs: Vec<(Complex64, f64)>,
        b_choice: BChoice,
        e_choice: EChoice,
    ) -> Result<Self, OracleError> {
        let m = coeffs.len();
        let n_lcu = (usize::BITS - (m - 1).leading_zeros()) as usize;
        let n_lcu = n_lcu.max(1);
        if m > (1 << n_lcu) {
            return Err(OracleError::AncillaOverflow { terms: m, slots: 1 << n_lcu });
        }
        let terms: Vec<(Complex64, f64, Complex64)> = match b_choice {
            BChoice::SqrtAmp => coeffs
                .into_iter()
                .map(|(c, angle)| {
                    let phase = if c.norm() < 1e-300 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        c / c.norm()
                    };
                    (Complex64::new(c.norm(), 0.0), angle, phase)
                })
                .collect(),
            BChoice::Amp => coeffs
                .into_iter()
                .map(|(c, angle)| (c, angle, Complex64::new(1.0, 0.0)))
                .collect(),
        };
        Ok(LcuPlan { symmetry, terms, b_choice, e_choice, n_lcu })
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// 𝓝_B = √(Σ α_k) for the √-amplitude preparation.
    pub fn norm_b(&self) -> Result<f64, OracleError> {
        let mut acc = 0.0;
        for &(c, _, _) in &self.terms {
            if c.im.abs() > 1e-12 || c.re < -1e-12 {
                return Err(OracleError::SqrtAmpComplex);
            }
            acc += c.re;
        }
        Ok(acc.sqrt())
    }

    /// 𝓝_H = √(Σ |α_k|²).
    pub fn norm_h(&self) -> f64 {
        self.terms.iter().map(|&(c, _, _)| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// A|ψ⟩ (unnormalized), the operator this plan realizes.
    pub fn apply_operator(&self, state: &Statevector) -> Vec<Complex64> {
        let action = self.symmetry.action();
        let mut out = vec![Complex64::new(0.0, 0.0); state.dim()];
        for &(c, angle, phase) in &self.terms {
            let evolved = action.evolve(state.amplitudes(), angle);
            for (o, e) in out.iter_mut().zip(evolved) {
                *o += c * phase * e;
            }
        }
        out
    }

    /// Ancilla preparation unitary B.
    fn b_matrix(&self) -> Result<CMatrix, OracleError> {
        let dim = 1usize << self.n_lcu;
        let mut col = CVector::zeros(dim);
        match self.b_choice {
            BChoice::SqrtAmp => {
                let nb = self.norm_b()?;
                for (k, &(c, _, _)) in self.terms.iter().enumerate() {
                    col[k] = Complex64::new(c.re.max(0.0).sqrt() / nb, 0.0);
                }
            }
            BChoice::Amp => {
                let nh = self.norm_h();
                for (k, &(c, _, _)) in self.terms.iter().enumerate() {
                    col[k] = c / nh;
                }
            }
        }
        Ok(unitary_from_first_column(&col))
    }

    /// Ancilla un-preparation unitary E.
    fn e_matrix(&self, b: &CMatrix) -> CMatrix {
        let dim = 1usize << self.n_lcu;
        match self.e_choice {
            EChoice::BDagger => b.adjoint(),
            EChoice::HadamardAll => {
                let mut h = CMatrix::zeros(dim, dim);
                let norm = 1.0 / (dim as f64).sqrt();
                for r in 0..dim {
                    for c in 0..dim {
                        let sign = if (r & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                        h[(r, c)] = Complex64::new(sign * norm, 0.0);
                    }
                }
                h
            }
            EChoice::LDagger => {
                let m = self.terms.len();
                let mut col = CVector::zeros(dim);
                for k in 0..m {
                    col[k] = Complex64::new(1.0 / (m as f64).sqrt(), 0.0);
                }
                unitary_from_first_column(&col).adjoint()
            }
        }
    }

    /// Closed-form success probability of measuring the all-zero ancilla:
    ///   p_S^B = ‖A|Ψ⟩‖²/𝓝_B⁴,  p_S^H = ‖A|Ψ⟩‖²/(2^{n}𝓝_H²),
    ///   p_S^L = ‖A|Ψ⟩‖²/(m 𝓝_H²).
    pub fn success_probability(&self, state: &Statevector) -> Result<f64, OracleError> {
        let a_norm2: f64 = self.apply_operator(state).iter().map(|a| a.norm_sqr()).sum();
        Ok(match (self.b_choice, self.e_choice) {
            (BChoice::SqrtAmp, EChoice::BDagger) => {
                let nb = self.norm_b()?;
                a_norm2 / nb.powi(4)
            }
            (BChoice::Amp, EChoice::HadamardAll) => {
                a_norm2 / ((1usize << self.n_lcu) as f64 * self.norm_h().powi(2))
            }
            (BChoice::Amp, EChoice::LDagger) => {
                a_norm2 / (self.terms.len() as f64 * self.norm_h().powi(2))
            }
            // Remaining combinations fall back to the simulated value.
            _ => self.simulate(state)?.1,
        })
    }

    /// Run the full LCU circuit; returns the post-selected (all-zero ancilla)
    /// system state and the exact success probability.
    fn simulate(&self, state: &Statevector) -> Result<(Vec<Complex64>, f64), OracleError> {
        let n = state.n_qubits();
        let dim_s = 1usize << n;
        let b = self.b_matrix()?;
        let e = self.e_matrix(&b);
        // Ancilla occupies the high bits: blocks of 2^n amplitudes per value.
        let mut full = Statevector::zero(self.n_lcu).tensor(state);
        let targets: Vec<usize> = (n..n + self.n_lcu).collect();
        crate::sim::apply_dense(&mut full, &targets, &b, 0, 0);
        // Controlled-V_k on the ancilla value k.
        let action = self.symmetry.action();
        let amps = full.amplitudes().to_vec();
        let mut new_amps = amps.clone();
        for (k, &(_, angle, phase)) in self.terms.iter().enumerate() {
            let block: Vec<Complex64> = amps[k * dim_s..(k + 1) * dim_s].to_vec();
            let evolved = action.evolve(&block, angle);
            for (i, v) in evolved.into_iter().enumerate() {
                new_amps[k * dim_s + i] = phase * v;
            }
        }
        let mut full = Statevector::from_amplitudes(n + self.n_lcu, new_amps)?;
        crate::sim::apply_dense(&mut full, &targets, &e, 0, 0);
        let zero_block: Vec<Complex64> = full.amplitudes()[..dim_s].to_vec();
        let p: f64 = zero_block.iter().map(|a| a.norm_sqr()).sum();
        Ok((zero_block, p))
    }
}

/// Apply an LCU plan: conditioned on the all-zero ancilla readout the system
/// collapses to A|Ψ⟩ (normalized).
pub fn lcu_apply(
    state: &Statevector,
    plan: &LcuPlan,
    mode: RunMode,
) -> Result<ProjectionOutcome, OracleError> {
    let (zero_block, p) = plan.simulate(state)?;
    match mode {
        RunMode::Exact => {
            if p < 1e-24 {
                return Err(OracleError::EmptySector(p));
            }
            Ok(ProjectionOutcome {
                state: Statevector::from_unnormalized(state.n_qubits(), zero_block)?,
                accepted: true,
                ancilla_readout: "0".repeat(plan.n_lcu),
                success_probability: p,
            })
        }
        RunMode::Sample { shots: _, seed } => {
            use rand::Rng;
            let mut rng = sim::rng_from_seed(seed);
            let accepted = rng.gen::<f64>() < p;
            if !accepted {
                return Ok(ProjectionOutcome {
                    state: state.clone(),
                    accepted: false,
                    ancilla_readout: "rejected".into(),
                    success_probability: p,
                });
            }
            Ok(ProjectionOutcome {
                state: Statevector::from_unnormalized(state.n_qubits(), zero_block)?,
                accepted: true,
                ancilla_readout: "0".repeat(plan.n_lcu),
                success_probability: p,
            })
        }
    }
}

/// Success probability of an LCU plan on a state (closed form).
pub fn lcu_success_prob(plan: &LcuPlan, state: &Statevector) -> Result<f64, OracleError> {
    plan.success_probability(state)
}

/// Symmetry-preserving expectation value through the oracle without any
/// explicit projection: with (φ, μ) = (0, π/2),
///   Re⟨V O_S⟩ = ⟨Ψ_G|V|Ψ_G⟩   and   Re⟨V O_S⟩ / Re⟨O_S⟩ = ⟨V P_S⟩/⟨P_S⟩.
pub fn oracle_vap_expectation(
    state: &Statevector,
    observable: &PauliSum,
    symmetry: &SymmetryOperator,
    lambda_target: f64,
) -> Result<f64, OracleError> {
    let sector = OracleSector::for_symmetry(symmetry.clone(), lambda_target)?;
    let oracle = Oracle::new(sector, 0.0, std::f64::consts::FRAC_PI_2);
    let numerator = oracle_observable_expectation(state, observable, &oracle)?;
    let identity = PauliSum::identity(state.n_qubits());
    let denominator = oracle_observable_expectation(state, &identity, &oracle)?;
    if denominator.re.abs() < 1e-12 {
        return Err(OracleError::EmptySector(denominator.re.abs()));
    }
    Ok(numerator.re / denominator.re)
}

/// ⟨Ψ| V O |Ψ⟩ for an observable V and oracle O.
pub fn oracle_observable_expectation(
    state: &Statevector,
    observable: &PauliSum,
    oracle: &Oracle,
) -> Result<Complex64, OracleError> {
    let oracled = oracle.apply(state);
    let applied = oracled.apply_sum_unnormalized(observable)?;
    Ok(state
        .amplitudes()
        .iter()
        .zip(&applied)
        .map(|(a, b)| a.conj() * b)
        .sum())
}
