//! Exhaustive classical reference and distribution metrics.

use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::hamiltonian::DiagonalCost;
use crate::lattice::PitLattice;

pub const DEFAULT_ORACLE_CAP: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best profit over feasible profiles.
    pub p_opt_value: i64,
    /// Basis indices of the feasible profiles reaching `p_opt_value`.
    pub optimal_set: Vec<usize>,
    /// `min_z C(z)`.
    pub ground_cost: Rational64,
    pub ground_set: Vec<usize>,
    pub n: usize,
}

impl OracleResult {
    pub fn is_optimal(&self, index: usize) -> bool {
        self.optimal_set.binary_search(&index).is_ok()
    }
}

pub fn enumerate(lattice: &PitLattice, gamma: Rational64) -> Result<OracleResult> {
    enumerate_capped(lattice, gamma, DEFAULT_ORACLE_CAP)
}

pub fn enumerate_capped(lattice: &PitLattice, gamma: Rational64, cap: usize) -> Result<OracleResult> {
    let n = lattice.len();
    if n > cap {
        return Err(Error::Resource(format!("{n} blocks exceeds the oracle cap of {cap}")));
    }
    let h = DiagonalCost::new(lattice, gamma)?;
    let mut best = 0i64;
    let mut optimal = vec![0usize];
    let mut ground = h.cost_of_index(0);
    let mut ground_set = vec![0usize];
    for z in 1..(1usize << n) {
        let p = lattice.profit_of_index(z);
        let s = lattice.smoothness_of_index(z);
        if s == 0 {
            if p > best {
                best = p;
                optimal.clear();
                optimal.push(z);
            } else if p == best {
                optimal.push(z);
            }
        }
        let c = Rational64::from_integer(-p) + gamma * Rational64::from_integer(s as i64);
        if c < ground {
            ground = c;
            ground_set.clear();
            ground_set.push(z);
        } else if c == ground {
            ground_set.push(z);
        }
    }
    Ok(OracleResult {
        p_opt_value: best,
        optimal_set: optimal,
        ground_cost: ground,
        ground_set,
        n,
    })
}

fn check_dist(dist: &[f64], n: usize) -> Result<()> {
    if dist.len() != 1usize << n {
        return Err(Error::arg(format!(
            "distribution has {} outcomes, expected 2^{n}",
            dist.len()
        )));
    }
    Ok(())
}

/// Probability mass on optimal feasible profiles.
pub fn p_opt(dist: &[f64], oracle: &OracleResult) -> Result<f64> {
    check_dist(dist, oracle.n)?;
    Ok(oracle.optimal_set.iter().map(|&z| dist[z]).sum())
}

/// Probability mass on profiles that violate smoothness.
pub fn violation_probability(dist: &[f64], lattice: &PitLattice) -> Result<f64> {
    check_dist(dist, lattice.len())?;
    Ok(dist
        .iter()
        .enumerate()
        .filter(|(z, _)| lattice.smoothness_of_index(*z) > 0)
        .map(|(_, p)| p)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    #[test]
    fn mini4_oracle() {
        let o = enumerate(&instances::mini4(), Rational64::from_integer(4)).unwrap();
        assert_eq!(o.p_opt_value, 5);
        assert_eq!(o.optimal_set, vec![0b1111]);
        assert_eq!(o.ground_cost, Rational64::from_integer(-5));
        assert_eq!(o.ground_set, o.optimal_set);
    }

    #[test]
    fn trivial_instances() {
        let neg = PitLattice::parse("rows 2\n0:-1 1:-3\n0:-2\n").unwrap();
        let o = enumerate(&neg, Rational64::from_integer(1)).unwrap();
        assert_eq!((o.p_opt_value, o.optimal_set.clone()), (0, vec![0]));
        let one = PitLattice::parse("rows 1\n0:7\n").unwrap();
        assert_eq!(enumerate(&one, Rational64::from_integer(0)).unwrap().p_opt_value, 7);
    }

    #[test]
    fn cap() {
        assert!(matches!(
            enumerate_capped(&instances::step9(), Rational64::from_integer(1), 4),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn mini4_metrics() {
        let l = instances::mini4();
        let o = enumerate(&l, Rational64::from_integer(4)).unwrap();
        let mut point = vec![0.0; 16];
        point[15] = 1.0;
        assert_eq!(p_opt(&point, &o).unwrap(), 1.0);
        assert_eq!(violation_probability(&point, &l).unwrap(), 0.0);
        let uniform = vec![1.0 / 16.0; 16];
        assert!((p_opt(&uniform, &o).unwrap() - 1.0 / 16.0).abs() < 1e-15);
        let violating = (0..16).filter(|&z| l.smoothness_of_index(z) > 0).count();
        // deep block dug without all three parents: 7 of the 8 strings with z_3 = 1
        assert_eq!(violating, 7);
        assert!((violation_probability(&uniform, &l).unwrap() - 7.0 / 16.0).abs() < 1e-15);
        let mut zero = vec![0.0; 16];
        zero[0] = 1.0;
        assert_eq!(p_opt(&zero, &o).unwrap(), 0.0);
        let mut bad = vec![0.0; 16];
        bad[0b1000] = 1.0;
        assert_eq!(violation_probability(&bad, &l).unwrap(), 1.0);
        assert!(p_opt(&[1.0, 0.0], &o).is_err());
        assert!(violation_probability(&[1.0, 0.0], &l).is_err());
    }

    #[test]
    fn zero_gamma_ground_digs_positive_blocks() {
        for (_, l) in instances::all() {
            let o = enumerate(&l, Rational64::from_integer(0)).unwrap();
            let positive = l
                .blocks()
                .iter()
                .filter(|b| b.profit > 0)
                .fold(0usize, |acc, b| acc | (1 << b.id));
            assert!(o.ground_set.contains(&positive));
        }
    }

    #[test]
    fn mass_partitions_into_three_classes() {
        let l = instances::step9();
        let o = enumerate(&l, Rational64::new(10, 3)).unwrap();
        let dim = 1 << l.len();
        let dist: Vec<f64> = (0..dim).map(|z| (z % 7 + 1) as f64).collect();
        let total: f64 = dist.iter().sum();
        let dist: Vec<f64> = dist.iter().map(|x| x / total).collect();
        let feasible_sub: f64 = (0..dim)
            .filter(|&z| l.smoothness_of_index(z) == 0 && !o.is_optimal(z))
            .map(|z| dist[z])
            .sum();
        let sum = p_opt(&dist, &o).unwrap() + violation_probability(&dist, &l).unwrap() + feasible_sub;
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
