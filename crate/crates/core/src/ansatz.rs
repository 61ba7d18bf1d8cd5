//! Parent-child structured circuit: one `Ry` per block followed by one
//! controlled `Ry` per retained (child, parent) pair, with the child as
//! control and the parent as target.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::lattice::PitLattice;
use crate::simulator::{InitKind, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Ry { qubit: usize, param: usize },
    ControlledRy { control: usize, target: usize, param: usize },
}

/// Which control value activates the controlled rotations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ControlPolarity {
    #[default]
    OnOne,
    OnZero,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCircuit {
    n: usize,
    gates: Vec<Gate>,
    param_count: usize,
    polarity: ControlPolarity,
}

impl ParamCircuit {
    /// Circuit over `n` qubits with the given `(control, target)` pairs, in
    /// the order supplied.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut gates: Vec<Gate> = (0..n).map(|q| Gate::Ry { qubit: q, param: q }).collect();
        for (k, &(c, t)) in pairs.iter().enumerate() {
            if c >= n || t >= n || c == t {
                return Err(Error::invalid(format!("bad controlled pair ({c}, {t}) on {n} qubits")));
            }
            gates.push(Gate::ControlledRy {
                control: c,
                target: t,
                param: n + k,
            });
        }
        Ok(ParamCircuit {
            n,
            gates,
            param_count: n + pairs.len(),
            polarity: ControlPolarity::OnOne,
        })
    }

    pub fn with_polarity(mut self, polarity: ControlPolarity) -> Self {
        self.polarity = polarity;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn polarity(&self) -> ControlPolarity {
        self.polarity
    }

    pub fn single_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Ry { .. })).count()
    }

    pub fn controlled_count(&self) -> usize {
        self.gates.len() - self.single_count()
    }

    /// Parameter ids of the gates whose target is `qubit`, single rotation first.
    pub fn params_on(&self, qubit: usize) -> Vec<usize> {
        self.gates
            .iter()
            .filter_map(|g| match *g {
                Gate::Ry { qubit: q, param } if q == qubit => Some(param),
                Gate::ControlledRy { target, param, .. } if target == qubit => Some(param),
                _ => None,
            })
            .collect()
    }

    /// Binds `params` and applies the circuit to `init`.
    pub fn prepare(&self, params: &[f64], init: InitKind) -> Result<StateVector> {
        if params.len() != self.param_count {
            return Err(Error::arg(format!(
                "expected {} parameters, got {}",
                self.param_count,
                params.len()
            )));
        }
        let mut state = StateVector::new(self.n, init)?;
        let active = self.polarity == ControlPolarity::OnOne;
        for g in &self.gates {
            match *g {
                Gate::Ry { qubit, param } => state.apply_ry(qubit, params[param])?,
                Gate::ControlledRy {
                    control,
                    target,
                    param,
                } => state.apply_controlled_ry(control, target, params[param], active)?,
            }
        }
        Ok(state)
    }
}

impl fmt::Display for ParamCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.gates {
            match g {
                Gate::Ry { qubit, param } => writeln!(f, "ry q{qubit} p{param}")?,
                Gate::ControlledRy {
                    control,
                    target,
                    param,
                } => writeln!(f, "cry q{control} q{target} p{param}")?,
            }
        }
        Ok(())
    }
}

/// Builds the circuit for a whole lattice. With `pair_filter`, only the listed
/// `(child, parent)` pairs receive a controlled rotation.
pub fn build_circuit(
    lattice: &PitLattice,
    pair_filter: Option<&BTreeSet<(usize, usize)>>,
) -> Result<ParamCircuit> {
    if let Some(filter) = pair_filter {
        let all: BTreeSet<(usize, usize)> = lattice.pairs().collect();
        if let Some(bad) = filter.iter().find(|p| !all.contains(p)) {
            return Err(Error::invalid(format!(
                "({}, {}) is not a child-parent pair of the lattice",
                bad.0, bad.1
            )));
        }
    }
    let pairs: Vec<(usize, usize)> = lattice
        .pairs()
        .filter(|p| pair_filter.is_none_or(|f| f.contains(p)))
        .collect();
    ParamCircuit::from_pairs(lattice.len(), &pairs)
}

pub fn prepare(circuit: &ParamCircuit, params: &[f64], init: InitKind) -> Result<StateVector> {
    circuit.prepare(params, init)
}
