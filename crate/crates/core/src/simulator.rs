//! Real-amplitude statevector engine.
//!
//! Only `Ry` and controlled-`Ry` are supported, both of which are real
//! rotations, so amplitudes are stored as `f64`. Qubit `i` is bit `i` of the
//! basis index.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_QUBIT_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitKind {
    /// `|0...0>`, nothing excavated.
    AllZero,
    /// `|1...1>`, everything excavated.
    AllOne,
    /// `|+...+>`.
    Superposition,
}

impl InitKind {
    pub const ALL: [InitKind; 3] = [InitKind::AllZero, InitKind::AllOne, InitKind::Superposition];

    pub fn name(self) -> &'static str {
        match self {
            InitKind::AllZero => "zero",
            InitKind::AllOne => "one",
            InitKind::Superposition => "plus",
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(InitKind::AllZero),
            "one" => Ok(InitKind::AllOne),
            "plus" => Ok(InitKind::Superposition),
            _ => Err(Error::arg(format!("unknown initial state {s:?} (zero|one|plus)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<f64>,
}

impl StateVector {
    pub fn new(n: usize, kind: InitKind) -> Result<Self> {
        Self::with_cap(n, kind, DEFAULT_QUBIT_CAP)
    }

    pub fn with_cap(n: usize, kind: InitKind, cap: usize) -> Result<Self> {
        if n == 0 || n > cap {
            return Err(Error::Resource(format!(
                "qubit count {n} outside supported range 1..={cap}"
            )));
        }
        let dim = 1usize << n;
        let amps = match kind {
            InitKind::AllZero => {
                let mut a = vec![0.0; dim];
                a[0] = 1.0;
                a
            }
            InitKind::AllOne => {
                let mut a = vec![0.0; dim];
                a[dim - 1] = 1.0;
                a
            }
            InitKind::Superposition => vec![(dim as f64).sqrt().recip(); dim],
        };
        Ok(StateVector { n, amps })
    }

    /// Wraps raw amplitudes; the caller is responsible for normalization.
    pub fn from_amplitudes(amps: Vec<f64>) -> Result<Self> {
        let dim = amps.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::arg(format!("amplitude vector length {dim} is not 2^n, n >= 1")));
        }
        Ok(StateVector {
            n: dim.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a * a).sum()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n {
            return Err(Error::arg(format!("qubit {q} out of range for {} qubits", self.n)));
        }
        Ok(())
    }

    /// `Ry(theta) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]` on `qubit`.
    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        let (s, c) = (theta * 0.5).sin_cos();
        let stride = 1usize << qubit;
        for chunk in self.amps.chunks_exact_mut(stride << 1) {
            let (lo, hi) = chunk.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a0, *a1);
                *a0 = c * x - s * y;
                *a1 = s * x + c * y;
            }
        }
        Ok(())
    }

    /// `Ry(theta)` on `target` where `control` is `|1>`.
    pub fn apply_cry(&mut self, control: usize, target: usize, theta: f64) -> Result<()> {
        self.apply_controlled_ry(control, target, theta, true)
    }

    /// Controlled `Ry` that fires when `control` reads `active`.
    pub fn apply_controlled_ry(
        &mut self,
        control: usize,
        target: usize,
        theta: f64,
        active: bool,
    ) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::arg(format!("control and target are both qubit {control}")));
        }
        let (s, c) = (theta * 0.5).sin_cos();
        let cmask = 1usize << control;
        let want = if active { cmask } else { 0 };
        let tmask = 1usize << target;
        for i in 0..self.amps.len() {
            if i & tmask != 0 || i & cmask != want {
                continue;
            }
            let j = i | tmask;
            let (x, y) = (self.amps[i], self.amps[j]);
            self.amps[i] = c * x - s * y;
            self.amps[j] = s * x + c * y;
        }
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a * a).collect()
    }

    /// `sum_z p(z) d(z)` for a diagonal operator given by its entries.
    pub fn expect_diagonal(&self, diagonal: &[f64]) -> Result<f64> {
        if diagonal.len() != self.amps.len() {
            return Err(Error::arg(format!(
                "diagonal has {} entries, state has {}",
                diagonal.len(),
                self.amps.len()
            )));
        }
        Ok(self
            .amps
            .iter()
            .zip(diagonal)
            .map(|(a, d)| a * a * d)
            .sum())
    }

    /// `<Z_q> = p(z_q = 0) - p(z_q = 1)`.
    pub fn expect_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i & mask == 0 { a * a } else { -a * a })
            .sum())
    }

    /// Probability that `qubit` reads 1.
    pub fn excitation(&self, qubit: usize) -> Result<f64> {
        Ok(((1.0 - self.expect_z(qubit)?) * 0.5).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::DiagonalCost;
    use crate::instances;
    use num_rational::Rational64;
    use num_traits::ToPrimitive;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn init_states() {
        let z = StateVector::new(2, InitKind::AllZero).unwrap();
        assert_eq!(z.amplitudes(), &[1.0, 0.0, 0.0, 0.0]);
        let o = StateVector::new(2, InitKind::AllOne).unwrap();
        assert_eq!(o.amplitudes(), &[0.0, 0.0, 0.0, 1.0]);
        let p = StateVector::new(2, InitKind::Superposition).unwrap();
        assert_eq!(p.amplitudes(), &[0.5; 4]);
        assert!(matches!(StateVector::new(0, InitKind::AllZero), Err(Error::Resource(_))));
        assert!(matches!(StateVector::new(21, InitKind::AllZero), Err(Error::Resource(_))));
    }

    #[test]
    fn ry_basics() {
        let mut s = StateVector::new(1, InitKind::Superposition).unwrap();
        let before = s.clone();
        s.apply_ry(0, 0.0).unwrap();
        assert_eq!(s, before);

        let mut s = StateVector::new(1, InitKind::AllZero).unwrap();
        s.apply_ry(0, PI).unwrap();
        assert!(close(s.amplitudes(), &[0.0, 1.0], 1e-15));

        let mut s = StateVector::new(1, InitKind::AllZero).unwrap();
        s.apply_ry(0, FRAC_PI_2).unwrap();
        assert!(close(s.amplitudes(), &[FRAC_1_SQRT_2, FRAC_1_SQRT_2], 1e-15));
        assert!(s.apply_ry(1, 0.3).is_err());
    }

    #[test]
    fn cry_basics() {
        let mut s = StateVector::new(2, InitKind::AllZero).unwrap();
        s.apply_cry(0, 1, 1.234).unwrap();
        assert_eq!(s.amplitudes(), &[1.0, 0.0, 0.0, 0.0]);

        let mut s = StateVector::new(2, InitKind::AllOne).unwrap();
        s.apply_cry(0, 1, PI).unwrap();
        // Ry(pi)|1> = -|0>, so |11> -> -|q0=1, q1=0>
        assert!(close(s.amplitudes(), &[0.0, -1.0, 0.0, 0.0], 1e-15));

        assert!(s.apply_cry(1, 1, 0.1).is_err());
        assert!(s.apply_cry(0, 2, 0.1).is_err());
    }

    #[test]
    fn cry_matches_matrix_product() {
        // (|q0=1,q1=0> + |q0=1,q1=1>)/sqrt2, indices 1 and 3
        let mut s = StateVector::from_amplitudes(vec![0.0, FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2]).unwrap();
        let theta = FRAC_PI_2;
        s.apply_cry(0, 1, theta).unwrap();
        let (c, sn) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        // explicit 4x4 matrix in index order (q1 q0): 00, 01, 10, 11
        let m = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, 0.0, -sn],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, sn, 0.0, c],
        ];
        let v = [0.0, FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2];
        let expect: Vec<f64> = m
            .iter()
            .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        assert!(close(s.amplitudes(), &expect, 1e-15));
    }

    #[test]
    fn probabilities_and_expectations() {
        let z = StateVector::new(4, InitKind::AllZero).unwrap();
        let p = z.probabilities();
        assert_eq!(p[0], 1.0);
        assert!(p[1..].iter().all(|&x| x == 0.0));
        let plus = StateVector::new(2, InitKind::Superposition).unwrap();
        assert!(close(&plus.probabilities(), &[0.25; 4], 1e-15));

        let l = instances::mini4();
        let h = DiagonalCost::new(&l, Rational64::from_integer(4)).unwrap();
        let t = h.table().unwrap();
        assert_eq!(z.expect_diagonal(&t).unwrap(), 0.0);
        let o = StateVector::new(4, InitKind::AllOne).unwrap();
        assert_eq!(o.expect_diagonal(&t).unwrap(), -5.0);
        let p = StateVector::new(4, InitKind::Superposition).unwrap();
        let brute: f64 = (0..16)
            .map(|i| h.cost_of_index(i).to_f64().unwrap())
            .sum::<f64>()
            / 16.0;
        assert!((p.expect_diagonal(&t).unwrap() - brute).abs() < 1e-12);
        assert!(p.expect_diagonal(&t[..8]).is_err());
    }

    #[test]
    fn z_expectations() {
        let z = StateVector::new(1, InitKind::AllZero).unwrap();
        assert_eq!(z.expect_z(0).unwrap(), 1.0);
        let o = StateVector::new(1, InitKind::AllOne).unwrap();
        assert_eq!(o.expect_z(0).unwrap(), -1.0);
        let mut h = StateVector::new(1, InitKind::AllZero).unwrap();
        h.apply_ry(0, FRAC_PI_2).unwrap();
        assert!(h.expect_z(0).unwrap().abs() < 1e-15);
        assert!(h.expect_z(1).is_err());
    }

    fn random_state(n: usize, rng: &mut ChaCha8Rng, gates: usize) -> StateVector {
        let mut s = StateVector::new(n, InitKind::Superposition).unwrap();
        for _ in 0..gates {
            let q = rng.gen_range(0..n);
            if rng.gen_bool(0.5) || n == 1 {
                s.apply_ry(q, rng.gen_range(-PI..PI)).unwrap();
            } else {
                let mut t = rng.gen_range(0..n);
                while t == q {
                    t = rng.gen_range(0..n);
                }
                s.apply_cry(q, t, rng.gen_range(-PI..PI)).unwrap();
            }
        }
        s
    }

    #[test]
    fn gates_are_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s0 = random_state(5, &mut rng, 30);
            let mut s = s0.clone();
            let th = rng.gen_range(-PI..PI);
            s.apply_ry(2, th).unwrap();
            s.apply_ry(2, -th).unwrap();
            assert!(close(s.amplitudes(), s0.amplitudes(), 1e-12));
            s.apply_cry(4, 1, th).unwrap();
            s.apply_cry(4, 1, -th).unwrap();
            assert!(close(s.amplitudes(), s0.amplitudes(), 1e-12));
        }
    }

    #[test]
    fn disjoint_gates_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s0 = random_state(4, &mut rng, 20);
        let mut a = s0.clone();
        a.apply_ry(0, 0.7).unwrap();
        a.apply_cry(1, 2, -1.1).unwrap();
        let mut b = s0;
        b.apply_cry(1, 2, -1.1).unwrap();
        b.apply_ry(0, 0.7).unwrap();
        assert!(close(a.amplitudes(), b.amplitudes(), 1e-15));
    }

    #[test]
    fn marginals_match_expect_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_state(6, &mut rng, 40);
        let p = s.probabilities();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for q in 0..6 {
            let p0: f64 = p.iter().enumerate().filter(|(i, _)| i & (1 << q) == 0).map(|(_, x)| x).sum();
            assert!((s.expect_z(q).unwrap() - (p0 - (1.0 - p0))).abs() < 1e-12);
        }
    }

    #[test]
    fn expectation_matches_dense_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (_, l) in instances::all().into_iter().filter(|(_, l)| l.len() <= 8) {
            let h = DiagonalCost::new(&l, Rational64::new(7, 2)).unwrap();
            let dense = h.dense_diagonal().unwrap();
            let s = random_state(l.len(), &mut rng, 50);
            let quad: f64 = s
                .probabilities()
                .iter()
                .zip(&dense)
                .map(|(p, c)| p * c.to_f64().unwrap())
                .sum();
            assert!((s.expect_diagonal(&h.table().unwrap()).unwrap() - quad).abs() < 1e-12);
        }
    }
}
