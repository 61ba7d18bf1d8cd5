//! Open-pit profile optimization as a diagonal Hamiltonian ground-state search.
//!
//! Blocks of a 2D pit become qubits, the profit and smoothness functions become
//! a penalty cost that is diagonal in the computational basis, and a
//! parent-child structured circuit of `Ry` / controlled-`Ry` gates is optimized
//! on a real-amplitude statevector. Larger pits can be split into fragments
//! that are solved self-consistently against the mean fields of their
//! neighbours. Exhaustive enumeration provides the exact reference, and the
//! sampling module models finite shots, readout noise, and its mitigation.
//!
//! Bit order is fixed across the crate: bit `i` of a basis index is `z_i`,
//! and `z_i = 1` means block `i` is excavated.

pub mod ansatz;
pub mod cli;
pub mod decomposition;
mod error;
pub mod hamiltonian;
pub mod instances;
pub mod lattice;
pub mod oracle;
pub mod sampling;
pub mod simulator;
pub mod vqe;

pub use ansatz::{build_circuit, prepare, ControlPolarity, Gate, ParamCircuit};
pub use error::{Error, Result};
pub use hamiltonian::{penalty_heuristic, DiagonalCost};
pub use lattice::{BitString, Block, PitLattice};
pub use oracle::OracleResult;
pub use simulator::{InitKind, StateVector};
pub use vqe::{OptimizerKind, VqeConfig, VqeResult};
