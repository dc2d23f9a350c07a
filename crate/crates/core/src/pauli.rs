//! Pauli-string algebra: phased tensor products of {I, X, Y, Z} and weighted
//! sums of them.
//!
//! A [`PauliString`] is stored in the symplectic form `(x_mask, z_mask)` with a
//! fourth-root-of-unity phase: qubit `j` carries `I`, `X`, `Y`, `Z` according
//! to the bit pair `(x_j, z_j)` = (0,0), (1,0), (1,1), (0,1). Products and
//! actions on basis states are then bit operations plus phase bookkeeping.
//!
//! A [`PauliSum`] keys terms by the bare symbol array (phase folded into the
//! complex weight), combines duplicates on insert, and prunes weights below
//! 1e-14 so equality testing is deterministic.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::linalg::CMatrix;

/// Weights with modulus below this are dropped from a [`PauliSum`].
pub const PRUNE_THRESHOLD: f64 = 1e-14;

/// Single-qubit Pauli symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliOp {
    I,
    X,
    Y,
    Z,
}

impl PauliOp {
    pub fn as_char(self) -> char {
        match self {
            PauliOp::I => 'I',
            PauliOp::X => 'X',
            PauliOp::Y => 'Y',
            PauliOp::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(PauliOp::I),
            'X' => Some(PauliOp::X),
            'Y' => Some(PauliOp::Y),
            'Z' => Some(PauliOp::Z),
            _ => None,
        }
    }

    /// Dense 2×2 matrix.
    pub fn matrix(self) -> CMatrix {
        let c = Complex64::new;
        match self {
            PauliOp::I => CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(1., 0.)]),
            PauliOp::X => CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
            PauliOp::Y => CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
            PauliOp::Z => CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
        }
    }
}

/// Power of `i` in `{0,1,2,3}`, the phase group of the Pauli strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn value(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }

    fn mul(self, other: Phase) -> Phase {
        Phase((self.0 + other.0) % 4)
    }

    fn times_i_pow(self, k: u32) -> Phase {
        Phase(((self.0 as u32 + k) % 4) as u8)
    }
}

/// A phased Pauli string on `n` qubits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
    phase: Phase,
}

impl PauliString {
    /// Identity string on `n` qubits.
    pub fn identity(n: usize) -> Self {
        assert!(n <= 64, "at most 64 qubits");
        PauliString { n, x: 0, z: 0, phase: Phase::ONE }
    }

    /// Build from per-qubit symbols, `ops[j]` acting on qubit `j`.
    pub fn from_ops(ops: &[PauliOp]) -> Self {
        let mut s = PauliString::identity(ops.len());
        for (j, &op) in ops.iter().enumerate() {
            s.set_op(j, op);
        }
        s
    }

    /// Single non-identity symbol `op` on qubit `j` of an `n`-qubit register.
    pub fn single(n: usize, j: usize, op: PauliOp) -> Self {
        let mut s = PauliString::identity(n);
        s.set_op(j, op);
        s
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn phase(&self) -> Complex64 {
        self.phase.value()
    }

    pub fn set_op(&mut self, j: usize, op: PauliOp) {
        assert!(j < self.n);
        let bit = 1u64 << j;
        self.x &= !bit;
        self.z &= !bit;
        match op {
            PauliOp::I => {}
            PauliOp::X => self.x |= bit,
            PauliOp::Y => {
                self.x |= bit;
                self.z |= bit;
            }
            PauliOp::Z => self.z |= bit,
        }
    }

    pub fn op(&self, j: usize) -> PauliOp {
        let xb = (self.x >> j) & 1;
        let zb = (self.z >> j) & 1;
        match (xb, zb) {
            (0, 0) => PauliOp::I,
            (1, 0) => PauliOp::X,
            (1, 1) => PauliOp::Y,
            (0, 1) => PauliOp::Z,
            _ => unreachable!(),
        }
    }

    pub fn ops(&self) -> Vec<PauliOp> {
        (0..self.n).map(|j| self.op(j)).collect()
    }

    /// Symplectic masks `(x, z)` without the phase.
    pub fn masks(&self) -> (u64, u64) {
        (self.x, self.z)
    }

    /// Number of non-identity symbols.
    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    pub fn is_identity_ops(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// True when the string contains only I and Z symbols.
    pub fn is_diagonal(&self) -> bool {
        self.x == 0
    }

    /// Action on a computational basis state: `P |i> = phase * |i ^ x_mask>`.
    ///
    /// Returns `(flipped_index, phase)`.
    pub fn apply_to_basis(&self, index: u64) -> (u64, Complex64) {
        let y_count = (self.x & self.z).count_ones();
        let sign_flips = (index & self.z).count_ones();
        let ph = self.phase.times_i_pow(y_count).times_i_pow(2 * sign_flips);
        (index ^ self.x, ph.value())
    }

    /// Group product `self * other` with the correct phase.
    pub fn product(&self, other: &PauliString) -> Result<PauliString, PauliError> {
        if self.n != other.n {
            return Err(PauliError::LengthMismatch(self.n, other.n));
        }
        // With W(x,z) = i^{|x & z|} X^x Z^z (so Y = iXZ literally):
        //   W(x1,z1) W(x2,z2) = (-1)^{|z1 & x2|} i^{|x1&z1| + |x2&z2| - |x3&z3|} W(x3,z3).
        let x3 = self.x ^ other.x;
        let z3 = self.z ^ other.z;
        let y1 = (self.x & self.z).count_ones();
        let y2 = (other.x & other.z).count_ones();
        let y3 = (x3 & z3).count_ones();
        let anti = 2 * (self.z & other.x).count_ones();
        let ipow = (y1 + y2 + anti + (4 - y3 % 4)) % 4;
        Ok(PauliString {
            n: self.n,
            x: x3,
            z: z3,
            phase: self.phase.mul(other.phase).times_i_pow(ipow),
        })
    }

    /// Hermitian conjugate (same symbols, conjugated phase).
    pub fn dagger(&self) -> PauliString {
        let phase = match self.phase.0 {
            1 => Phase::MINUS_I,
            3 => Phase::I,
            p => Phase(p),
        };
        PauliString { phase, ..self.clone() }
    }

    /// Dense matrix on the full register (test/oracle scale only).
    pub fn matrix(&self) -> CMatrix {
        let dim = 1usize << self.n;
        let mut m = CMatrix::zeros(dim, dim);
        for i in 0..dim as u64 {
            let (j, ph) = self.apply_to_basis(i);
            m[(j as usize, i as usize)] = ph;
        }
        m
    }

    fn ops_string(&self) -> String {
        // Qubit n-1 leftmost.
        (0..self.n).rev().map(|j| self.op(j).as_char()).collect()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase.0 {
            0 => "",
            1 => "i*",
            2 => "-",
            _ => "-i*",
        };
        write!(f, "{}{}", prefix, self.ops_string())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PauliError {
    #[error("pauli string lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("operator is not hermitian: term {0} has weight with imaginary part {1:.3e}")]
    NotHermitian(String, f64),
    #[error("cannot parse pauli sum line: {0:?}")]
    Parse(String),
}

/// Weighted sum of Pauli strings, the workhorse operator representation.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    n: usize,
    // Keyed by (x, z) masks; weight absorbs any string phase. BTreeMap keeps
    // iteration deterministic.
    terms: BTreeMap<(u64, u64), Complex64>,
}

impl PauliSum {
    pub fn zero(n: usize) -> Self {
        assert!(n <= 64);
        PauliSum { n, terms: BTreeMap::new() }
    }

    pub fn identity(n: usize) -> Self {
        let mut s = PauliSum::zero(n);
        s.add(PauliString::identity(n), Complex64::new(1.0, 0.0));
        s
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (PauliString, Complex64)>) -> Self {
        let mut s = PauliSum::zero(n);
        for (p, w) in terms {
            s.add(p, w);
        }
        s
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Accumulate `weight * string`, folding the string phase into the weight
    /// and pruning nearly-zero results.
    pub fn add(&mut self, string: PauliString, weight: Complex64) {
        assert_eq!(string.n, self.n, "register size mismatch");
        let key = (string.x, string.z);
        let w = weight * string.phase.value();
        let entry = self.terms.entry(key).or_insert(Complex64::new(0.0, 0.0));
        *entry += w;
        if entry.norm() < PRUNE_THRESHOLD {
            self.terms.remove(&key);
        }
    }

    /// Iterate `(string, weight)` in deterministic order; string phases are +1.
    pub fn iter(&self) -> impl Iterator<Item = (PauliString, Complex64)> + '_ {
        self.terms.iter().map(move |(&(x, z), &w)| {
            (PauliString { n: self.n, x, z, phase: Phase::ONE }, w)
        })
    }

    pub fn weight_of(&self, string: &PauliString) -> Complex64 {
        self.terms
            .get(&(string.x, string.z))
            .map(|&w| w * string.phase.value())
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn scale(&self, factor: Complex64) -> PauliSum {
        let mut out = PauliSum::zero(self.n);
        for (&k, &w) in &self.terms {
            let nw = w * factor;
            if nw.norm() >= PRUNE_THRESHOLD {
                out.terms.insert(k, nw);
            }
        }
        out
    }

    pub fn add_sum(&mut self, other: &PauliSum) {
        assert_eq!(self.n, other.n);
        for (p, w) in other.iter() {
            self.add(p, w);
        }
    }

    pub fn sub_sum(&mut self, other: &PauliSum) {
        self.add_sum(&other.scale(Complex64::new(-1.0, 0.0)));
    }

    /// Operator product, expanding term by term.
    pub fn product(&self, other: &PauliSum) -> Result<PauliSum, PauliError> {
        if self.n != other.n {
            return Err(PauliError::LengthMismatch(self.n, other.n));
        }
        let mut out = PauliSum::zero(self.n);
        for (pa, wa) in self.iter() {
            for (pb, wb) in other.iter() {
                let p = pa.product(&pb)?;
                out.add(p, wa * wb);
            }
        }
        Ok(out)
    }

    /// Hermitian conjugate.
    pub fn dagger(&self) -> PauliSum {
        let mut out = PauliSum::zero(self.n);
        for (p, w) in self.iter() {
            out.add(p, w.conj());
        }
        out
    }

    /// Largest |Im weight| over terms; zero for a Hermitian operator.
    pub fn max_imag_weight(&self) -> f64 {
        self.terms.values().map(|w| w.im.abs()).fold(0.0, f64::max)
    }

    /// Errors unless all weights are real within `tol`.
    pub fn require_hermitian(&self, tol: f64) -> Result<(), PauliError> {
        for (p, w) in self.iter() {
            if w.im.abs() > tol {
                return Err(PauliError::NotHermitian(p.ops_string(), w.im));
            }
        }
        Ok(())
    }

    /// Σ_k |c_k| over all terms, the one-norm used for propagator scaling.
    pub fn coeff_one_norm(&self) -> f64 {
        self.terms.values().map(|w| w.norm()).sum()
    }

    /// True when every term is a product of I and Z only.
    pub fn is_diagonal(&self) -> bool {
        self.terms.keys().all(|&(x, _)| x == 0)
    }

    /// Dense matrix on the full register (test/oracle scale only).
    pub fn matrix(&self) -> CMatrix {
        let dim = 1usize << self.n;
        let mut m = CMatrix::zeros(dim, dim);
        for (p, w) in self.iter() {
            for i in 0..dim as u64 {
                let (j, ph) = p.apply_to_basis(i);
                m[(j as usize, i as usize)] += w * ph;
            }
        }
        m
    }

    /// Commutator `[self, other]`.
    pub fn commutator(&self, other: &PauliSum) -> Result<PauliSum, PauliError> {
        let mut ab = self.product(other)?;
        let ba = other.product(self)?;
        ab.sub_sum(&ba);
        Ok(ab)
    }
}

impl fmt::Display for PauliSum {
    // One term per line: `weight_re weight_im PAULI-STRING`, qubit n-1 leftmost.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, w) in self.iter() {
            writeln!(f, "{:+.16e} {:+.16e} {}", w.re, w.im, p.ops_string())?;
        }
        Ok(())
    }
}

impl FromStr for PauliSum {
    type Err = PauliError;

    fn from_str(s: &str) -> Result<Self, PauliError> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty()).peekable();
        let first = lines.peek().ok_or_else(|| PauliError::Parse("empty input".into()))?;
        let n = first
            .split_whitespace()
            .nth(2)
            .map(|ops| ops.len())
            .ok_or_else(|| PauliError::Parse((*first).into()))?;
        let mut sum = PauliSum::zero(n);
        for line in lines {
            let mut parts = line.split_whitespace();
            let (re, im, ops) = match (parts.next(), parts.next(), parts.next()) {
                (Some(re), Some(im), Some(ops)) => (re, im, ops),
                _ => return Err(PauliError::Parse(line.into())),
            };
            let re: f64 = re.parse().map_err(|_| PauliError::Parse(line.into()))?;
            let im: f64 = im.parse().map_err(|_| PauliError::Parse(line.into()))?;
            if ops.len() != n {
                return Err(PauliError::Parse(line.into()));
            }
            // Text order is qubit n-1 leftmost.
            let mut string = PauliString::identity(n);
            for (pos, ch) in ops.chars().enumerate() {
                let op = PauliOp::from_char(ch).ok_or_else(|| PauliError::Parse(line.into()))?;
                string.set_op(n - 1 - pos, op);
            }
            sum.add(string, Complex64::new(re, im));
        }
        Ok(sum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob_dist;
    use rand::{Rng, SeedableRng};

    fn random_string(rng: &mut impl Rng, n: usize) -> PauliString {
        let ops: Vec<PauliOp> = (0..n)
            .map(|_| match rng.gen_range(0..4) {
                0 => PauliOp::I,
                1 => PauliOp::X,
                2 => PauliOp::Y,
                _ => PauliOp::Z,
            })
            .collect();
        PauliString::from_ops(&ops)
    }

    #[test]
    fn single_qubit_products_match_dense() {
        // All 16 ordered pairs of single-qubit Paulis against 2x2 matrices.
        for a in [PauliOp::I, PauliOp::X, PauliOp::Y, PauliOp::Z] {
            for b in [PauliOp::I, PauliOp::X, PauliOp::Y, PauliOp::Z] {
                let pa = PauliString::from_ops(&[a]);
                let pb = PauliString::from_ops(&[b]);
                let prod = pa.product(&pb).unwrap();
                let dense = pa.matrix() * pb.matrix();
                assert!(
                    frob_dist(&prod.matrix(), &dense) < 1e-14,
                    "{a:?} * {b:?} wrong"
                );
            }
        }
    }

    #[test]
    fn x_times_y_is_i_z() {
        let x = PauliString::from_ops(&[PauliOp::X]);
        let y = PauliString::from_ops(&[PauliOp::Y]);
        let p = x.product(&y).unwrap();
        assert_eq!(p.op(0), PauliOp::Z);
        assert!((p.phase() - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn squares_are_identity() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = random_string(&mut rng, 5);
            let sq = p.product(&p).unwrap();
            assert!(sq.is_identity_ops());
            assert!((sq.phase() - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn product_is_associative() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(13);
        for _ in 0..50 {
            let a = random_string(&mut rng, 6);
            let b = random_string(&mut rng, 6);
            let c = random_string(&mut rng, 6);
            let ab_c = a.product(&b).unwrap().product(&c).unwrap();
            let a_bc = a.product(&b.product(&c).unwrap()).unwrap();
            assert_eq!(ab_c, a_bc);
        }
    }

    #[test]
    fn multi_qubit_product_matches_dense() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10 {
            let a = random_string(&mut rng, 3);
            let b = random_string(&mut rng, 3);
            let prod = a.product(&b).unwrap();
            assert!(frob_dist(&prod.matrix(), &(a.matrix() * b.matrix())) < 1e-13);
        }
    }

    #[test]
    fn basis_action_matches_dense() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(19);
        for _ in 0..10 {
            let p = random_string(&mut rng, 4);
            let m = p.matrix();
            for i in 0..16u64 {
                let (j, ph) = p.apply_to_basis(i);
                assert!((m[(j as usize, i as usize)] - ph).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn sum_combines_and_prunes() {
        let n = 3;
        let mut s = PauliSum::zero(n);
        let zx = PauliString::from_ops(&[PauliOp::Z, PauliOp::X, PauliOp::I]);
        s.add(zx.clone(), Complex64::new(0.5, 0.0));
        s.add(zx.clone(), Complex64::new(0.5, 0.0));
        assert_eq!(s.n_terms(), 1);
        assert!((s.weight_of(&zx) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        s.add(zx.clone(), Complex64::new(-1.0, 0.0));
        assert!(s.is_zero());
    }

    #[test]
    fn phase_is_folded_into_weight() {
        // i * (-i X) = X, so adding a phased string stores a real weight on X.
        let mut s = PauliSum::zero(1);
        let x = PauliString::from_ops(&[PauliOp::X]);
        let minus_i_x = x.product(&PauliString::identity(1)).unwrap();
        let ix = PauliString { phase: Phase::MINUS_I, ..minus_i_x };
        s.add(ix, Complex64::new(0.0, 1.0));
        assert!((s.weight_of(&x) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn sum_product_matches_dense() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        let mut a = PauliSum::zero(3);
        let mut b = PauliSum::zero(3);
        for _ in 0..4 {
            a.add(random_string(&mut rng, 3), Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            b.add(random_string(&mut rng, 3), Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        }
        let prod = a.product(&b).unwrap();
        assert!(frob_dist(&prod.matrix(), &(a.matrix() * b.matrix())) < 1e-12);
    }

    #[test]
    fn hermiticity_check() {
        let mut s = PauliSum::zero(2);
        s.add(PauliString::from_ops(&[PauliOp::Z, PauliOp::I]), Complex64::new(1.0, 0.0));
        assert!(s.require_hermitian(1e-10).is_ok());
        s.add(PauliString::from_ops(&[PauliOp::X, PauliOp::Y]), Complex64::new(0.0, 0.3));
        assert!(s.require_hermitian(1e-10).is_err());
    }

    #[test]
    fn display_roundtrip() {
        let mut s = PauliSum::zero(3);
        s.add(PauliString::from_ops(&[PauliOp::X, PauliOp::I, PauliOp::Z]), Complex64::new(0.25, -1.5));
        s.add(PauliString::from_ops(&[PauliOp::Y, PauliOp::Y, PauliOp::I]), Complex64::new(-2.0, 0.0));
        let text = s.to_string();
        // Qubit 2 printed leftmost.
        assert!(text.contains("ZIX"));
        let back: PauliSum = text.parse().unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn length_mismatch_rejected() {
        let a = PauliString::identity(2);
        let b = PauliString::identity(3);
        assert!(matches!(a.product(&b), Err(PauliError::LengthMismatch(2, 3))));
    }
}
