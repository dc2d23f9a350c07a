//! Statevector quantum-circuit simulation for small fermionic models, with the
//! full symmetry-breaking / symmetry-restoration toolchain on top: fermion-to-qubit
//! encodings, constrained VQE over a BCS ansatz, seven projection methods
//! (QPE-family and oracle-family), classical-shadow estimation of projected
//! observables, and generating-function spectral post-processing (Fourier,
//! t-expansion, Krylov, quantum Krylov).
//!
//! Everything is desk-scale (≤ 12 qubits) and checkable against the dense
//! exact-diagonalization oracle in [`models::exact_diagonalize`].

pub mod linalg;
pub mod fermion;
pub mod models;
pub mod pauli;
pub mod symmetry;
pub mod sim;

pub use pauli::{PauliOp, PauliString, PauliSum};
pub use sim::{Circuit, Gate, MeasurementCounts, Statevector};
