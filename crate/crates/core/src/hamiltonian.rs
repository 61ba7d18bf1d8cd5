//! The penalty cost `C(z) = -P(z) + gamma * S(z)`, diagonal in the
//! computational basis.

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::lattice::{BitString, PitLattice};

/// Largest lattice that `dense_diagonal` will materialize by default.
pub const DEFAULT_DENSE_CAP: usize = 20;

#[derive(Debug, Clone, Copy)]
pub struct DiagonalCost<'a> {
    lattice: &'a PitLattice,
    gamma: Rational64,
}

impl<'a> DiagonalCost<'a> {
    pub fn new(lattice: &'a PitLattice, gamma: Rational64) -> Result<Self> {
        if gamma < Rational64::zero() {
            return Err(Error::arg(format!("penalty weight must be >= 0, got {gamma}")));
        }
        Ok(DiagonalCost { lattice, gamma })
    }

    pub fn lattice(&self) -> &'a PitLattice {
        self.lattice
    }

    pub fn gamma(&self) -> Rational64 {
        self.gamma
    }

    pub fn gamma_f64(&self) -> f64 {
        self.gamma.to_f64().unwrap_or(f64::NAN)
    }

    pub fn n(&self) -> usize {
        self.lattice.len()
    }

    pub fn cost(&self, z: &BitString) -> Result<Rational64> {
        let p = self.lattice.profit(z)?;
        let s = self.lattice.smoothness(z)?;
        Ok(self.combine(p, s))
    }

    pub fn cost_of_index(&self, index: usize) -> Rational64 {
        self.combine(
            self.lattice.profit_of_index(index),
            self.lattice.smoothness_of_index(index),
        )
    }

    fn combine(&self, profit: i64, smoothness: u64) -> Rational64 {
        Rational64::from_integer(-profit) + self.gamma * Rational64::from_integer(smoothness as i64)
    }

    /// Exact cost of every basis index.
    pub fn dense_diagonal(&self) -> Result<Vec<Rational64>> {
        self.dense_diagonal_capped(DEFAULT_DENSE_CAP)
    }

    pub fn dense_diagonal_capped(&self, cap: usize) -> Result<Vec<Rational64>> {
        let n = self.n();
        if n > cap {
            return Err(Error::Resource(format!(
                "{n} blocks exceeds the dense diagonal cap of {cap}"
            )));
        }
        Ok((0..1usize << n).map(|z| self.cost_of_index(z)).collect())
    }

    /// Floating-point diagonal used for expectation values.
    pub fn table(&self) -> Result<Vec<f64>> {
        let n = self.n();
        if n > DEFAULT_DENSE_CAP {
            return Err(Error::Resource(format!(
                "{n} blocks exceeds the dense diagonal cap of {DEFAULT_DENSE_CAP}"
            )));
        }
        let g = self.gamma_f64();
        Ok((0..1usize << n)
            .map(|z| {
                -(self.lattice.profit_of_index(z) as f64)
                    + g * self.lattice.smoothness_of_index(z) as f64
            })
            .collect())
    }
}

/// Initial penalty weight `max_i (w_i - sum_{j in P_i} w_j) / 3`.
pub fn penalty_heuristic(lattice: &PitLattice) -> Result<Rational64> {
    (0..lattice.len())
        .map(|i| {
            let parents: i64 = lattice
                .parents(i)
                .iter()
                .map(|&j| lattice.blocks()[j].profit)
                .sum();
            Rational64::new(lattice.blocks()[i].profit - parents, 3)
        })
        .max()
        .ok_or_else(|| Error::arg("penalty heuristic needs a non-empty lattice"))
}
