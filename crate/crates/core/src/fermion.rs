//! Fermion-to-qubit mappings: Jordan-Wigner, parity, and Bravyi-Kitaev.
//!
//! Products of creation/annihilation operators are encoded per-operator and
//! multiplied in the order given, so inputs need not be normal-ordered. All
//! three mappings produce operators satisfying the canonical anticommutation
//! relations, which the tests check as operator identities.

use num_complex::Complex64;

use crate::pauli::{PauliError, PauliOp, PauliString, PauliSum};

/// Fermion-to-qubit encoding scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    JordanWigner,
    Parity,
    BravyiKitaev,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Scheme> {
        match s.to_ascii_lowercase().as_str() {
            "jw" | "jordan-wigner" | "jordanwigner" => Some(Scheme::JordanWigner),
            "parity" => Some(Scheme::Parity),
            "bk" | "bravyi-kitaev" | "bravyikitaev" => Some(Scheme::BravyiKitaev),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FermionError {
    #[error("mode index {0} out of range for {1} modes")]
    ModeOutOfRange(usize, usize),
    #[error(transparent)]
    Pauli(#[from] PauliError),
}

/// Product of creation/annihilation operators with a complex coefficient.
///
/// `ops` is an ordered list of `(mode, dagger)`; the encoded operator is the
/// product left-to-right, times `coeff`.
#[derive(Debug, Clone, PartialEq)]
pub struct FermionTerm {
    pub ops: Vec<(usize, bool)>,
    pub coeff: Complex64,
}

impl FermionTerm {
    pub fn new(ops: Vec<(usize, bool)>, coeff: Complex64) -> Self {
        FermionTerm { ops, coeff }
    }

    /// `coeff · c†_α c_β`.
    pub fn hopping(alpha: usize, beta: usize, coeff: f64) -> Self {
        FermionTerm::new(vec![(alpha, true), (beta, false)], Complex64::new(coeff, 0.0))
    }

    /// `coeff · n_α n_β = coeff · c†_α c_α c†_β c_β`.
    pub fn density_density(alpha: usize, beta: usize, coeff: f64) -> Self {
        FermionTerm::new(
            vec![(alpha, true), (alpha, false), (beta, true), (beta, false)],
            Complex64::new(coeff, 0.0),
        )
    }

    pub fn max_mode(&self) -> Option<usize> {
        self.ops.iter().map(|&(m, _)| m).max()
    }
}

/// Encode a single creation (`dagger = true`) or annihilation operator.
pub fn encode_ladder(mode: usize, dagger: bool, scheme: Scheme, n: usize) -> Result<PauliSum, FermionError> {
    if mode >= n {
        return Err(FermionError::ModeOutOfRange(mode, n));
    }
    // The two Pauli strings of (X ∓ iY)/2, dressed per scheme.
    let half = Complex64::new(0.5, 0.0);
    let im_half = Complex64::new(0.0, if dagger { -0.5 } else { 0.5 });
    let mut sum = PauliSum::zero(n);
    match scheme {
        Scheme::JordanWigner => {
            let mut xs = PauliString::single(n, mode, PauliOp::X);
            let mut ys = PauliString::single(n, mode, PauliOp::Y);
            for k in 0..mode {
                xs.set_op(k, PauliOp::Z);
                ys.set_op(k, PauliOp::Z);
            }
            sum.add(xs, half);
            sum.add(ys, im_half);
        }
        Scheme::Parity => {
            let mut xs = PauliString::single(n, mode, PauliOp::X);
            let mut ys = PauliString::single(n, mode, PauliOp::Y);
            if mode > 0 {
                xs.set_op(mode - 1, PauliOp::Z);
            }
            for k in mode + 1..n {
                xs.set_op(k, PauliOp::X);
                ys.set_op(k, PauliOp::X);
            }
            sum.add(xs, half);
            sum.add(ys, im_half);
        }
        Scheme::BravyiKitaev => {
            let sets = bk_sets(n);
            let mut xs = PauliString::single(n, mode, PauliOp::X);
            let mut ys = PauliString::single(n, mode, PauliOp::Y);
            for &u in &sets.update[mode] {
                xs.set_op(u, PauliOp::X);
                ys.set_op(u, PauliOp::X);
            }
            for &p in &sets.parity[mode] {
                xs.set_op(p, PauliOp::Z);
            }
            for &r in &sets.rho[mode] {
                ys.set_op(r, PauliOp::Z);
            }
            sum.add(xs, half);
            sum.add(ys, im_half);
        }
    }
    Ok(sum)
}

/// Encode a fermionic term as a qubit operator on `n` qubits.
pub fn encode_operator(term: &FermionTerm, scheme: Scheme, n: usize) -> Result<PauliSum, FermionError> {
    if let Some(max) = term.max_mode() {
        if max >= n {
            return Err(FermionError::ModeOutOfRange(max, n));
        }
    }
    let mut acc = PauliSum::identity(n).scale(term.coeff);
    for &(mode, dagger) in &term.ops {
        let op = encode_ladder(mode, dagger, scheme, n)?;
        acc = acc.product(&op)?;
    }
    Ok(acc)
}

/// Encode a sum of fermionic terms.
pub fn encode_hamiltonian(terms: &[FermionTerm], scheme: Scheme, n: usize) -> Result<PauliSum, FermionError> {
    let mut acc = PauliSum::zero(n);
    for t in terms {
        acc.add_sum(&encode_operator(t, scheme, n)?);
    }
    Ok(acc)
}

/// The Bravyi-Kitaev index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BkSets {
    pub n: usize,
    /// U(i): qubits storing partial sums that include orbital i, all > i.
    pub update: Vec<Vec<usize>>,
    /// P(i): qubits determining the parity of orbitals < i.
    pub parity: Vec<Vec<usize>>,
    /// F(i): qubits fixing whether qubit i and orbital i agree; empty for even i.
    pub flip: Vec<Vec<usize>>,
    /// R(i) = P(i) \ F(i).
    pub remainder: Vec<Vec<usize>>,
    /// ρ(i) = P(i) for even i, R(i) for odd i.
    pub rho: Vec<Vec<usize>>,
}

/// GF(2) lower-triangular matrix as rows of bitmasks.
#[derive(Debug, Clone)]
struct BitMatrix {
    n: usize,
    rows: Vec<u64>,
}

impl BitMatrix {
    fn identity(n: usize) -> Self {
        BitMatrix { n, rows: (0..n).map(|i| 1u64 << i).collect() }
    }

    fn get(&self, i: usize, j: usize) -> bool {
        (self.rows[i] >> j) & 1 == 1
    }

    /// Top-left block.
    fn truncate(&self, n: usize) -> BitMatrix {
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        BitMatrix { n, rows: self.rows[..n].iter().map(|r| r & mask).collect() }
    }

    /// Product over GF(2).
    fn mul(&self, other: &BitMatrix) -> BitMatrix {
        let mut rows = vec![0u64; self.n];
        for i in 0..self.n {
            let mut acc = 0u64;
            for j in 0..self.n {
                if self.get(i, j) {
                    acc ^= other.rows[j];
                }
            }
            rows[i] = acc;
        }
        BitMatrix { n: self.n, rows }
    }

    /// Inverse over GF(2) by Gauss-Jordan; panics if singular (β never is).
    fn inverse(&self) -> BitMatrix {
        let n = self.n;
        let mut a = self.rows.clone();
        let mut inv = BitMatrix::identity(n).rows;
        for col in 0..n {
            let pivot = (col..n).find(|&r| (a[r] >> col) & 1 == 1).expect("singular GF(2) matrix");
            a.swap(col, pivot);
            inv.swap(col, pivot);
            for r in 0..n {
                if r != col && (a[r] >> col) & 1 == 1 {
                    a[r] ^= a[col];
                    inv[r] ^= inv[col];
                }
            }
        }
        BitMatrix { n, rows: inv }
    }
}

/// Bravyi-Kitaev transformation matrix β_n: the top-left n×n block of the
/// recursively-doubled β_{2^{x+1}}, whose doubling step copies the block on
/// the diagonal and fills the bottom row of the lower-left quadrant with ones.
fn beta_matrix(n: usize) -> BitMatrix {
    let mut size = 1usize;
    let mut rows = vec![1u64];
    while size < n {
        let mut next = vec![0u64; 2 * size];
        for i in 0..size {
            next[i] = rows[i];
            next[size + i] = rows[i] << size;
        }
        // Bottom row of the lower-left quadrant: all ones across the low block.
        next[2 * size - 1] |= (1u64 << size) - 1;
        rows = next;
        size *= 2;
    }
    BitMatrix { n: size, rows }.truncate(n)
}

/// Parity-encoding transformation matrix Π_n (lower-triangular all ones).
fn pi_matrix(n: usize) -> BitMatrix {
    BitMatrix {
        n,
        rows: (0..n).map(|i| if i == 63 { u64::MAX } else { (1u64 << (i + 1)) - 1 }).collect(),
    }
}

/// Compute the Bravyi-Kitaev update/parity/flip/remainder sets from β_n,
/// β_n⁻¹, and π_n β_n⁻¹, all over GF(2).
pub fn bk_sets(n: usize) -> BkSets {
    assert!(n >= 1 && n <= 64);
    let beta = beta_matrix(n);
    let beta_inv = beta.inverse();
    // π_n = Π_n - I: strictly-below-diagonal ones.
    let mut pi = pi_matrix(n);
    for i in 0..n {
        pi.rows[i] &= !(1u64 << i);
    }
    let pbi = pi.mul(&beta_inv);

    let mut update = vec![Vec::new(); n];
    let mut parity = vec![Vec::new(); n];
    let mut flip = vec![Vec::new(); n];
    for j in 0..n {
        for i in j + 1..n {
            if beta.get(i, j) {
                update[j].push(i);
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            if pbi.get(i, j) {
                parity[i].push(j);
            }
            if beta_inv.get(i, j) {
                flip[i].push(j);
            }
        }
    }
    let remainder: Vec<Vec<usize>> = parity
        .iter()
        .zip(&flip)
        .map(|(p, f)| p.iter().copied().filter(|q| !f.contains(q)).collect())
        .collect();
    let rho: Vec<Vec<usize>> = (0..n)
        .map(|i| if i % 2 == 0 { parity[i].clone() } else { remainder[i].clone() })
        .collect();
    BkSets { n, update, parity, flip, remainder, rho }
}

/// Map an occupation bitstring to the parity-encoded bitstring: q_j = Σ_{k≤j} b_k mod 2.
pub fn parity_encode_bits(bits: u64, n: usize) -> u64 {
    let mut out = 0u64;
    let mut acc = 0u64;
    for j in 0..n {
        acc ^= (bits >> j) & 1;
        out |= acc << j;
    }
    out
}

/// Inverse of [`parity_encode_bits`]: b_j = q_j ⊕ q_{j-1}.
pub fn parity_decode_bits(qbits: u64, n: usize) -> u64 {
    let mut out = 0u64;
    let mut prev = 0u64;
    for j in 0..n {
        let q = (qbits >> j) & 1;
        out |= (q ^ prev) << j;
        prev = q;
    }
    out
}

/// Map an occupation bitstring to the Bravyi-Kitaev-encoded bitstring via β_n.
pub fn bk_encode_bits(bits: u64, n: usize) -> u64 {
    let beta = beta_matrix(n);
    let mut out = 0u64;
    for i in 0..n {
        out |= (((beta.rows[i] & bits).count_ones() as u64) & 1) << i;
    }
    out
}
