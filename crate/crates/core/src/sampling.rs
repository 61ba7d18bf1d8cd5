//! Finite-shot measurement, synthetic readout noise and its mitigation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::index_label;
use crate::simulator::StateVector;

/// Largest register for which the dense confusion matrix is built.
pub const FULL_MATRIX_CAP: usize = 6;

/// Default flip probabilities: `P(read 0 | 1)` and `P(read 1 | 0)`.
pub const DEFAULT_P10: f64 = 0.03;
pub const DEFAULT_P01: f64 = 0.015;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    pub n: usize,
    pub shots: u64,
    pub histogram: BTreeMap<usize, u64>,
}

impl Counts {
    pub fn distribution(&self) -> Vec<f64> {
        let mut d = vec![0.0; 1 << self.n];
        for (&z, &c) in &self.histogram {
            d[z] = c as f64 / self.shots as f64;
        }
        d
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bitstring,count\n");
        for (&z, &c) in &self.histogram {
            out.push_str(&format!("{},{c}\n", index_label(z, self.n)));
        }
        out
    }
}

pub fn distribution_csv(dist: &[f64], n: usize) -> String {
    let mut out = String::from("bitstring,probability\n");
    for (z, p) in dist.iter().enumerate() {
        out.push_str(&format!("{},{p}\n", index_label(z, n)));
    }
    out
}

/// `shots` i.i.d. draws from `probabilities(state)`.
pub fn sample(state: &StateVector, shots: u64, seed: u64) -> Result<Counts> {
    sample_distribution(&state.probabilities(), state.n(), shots, seed)
}

pub fn sample_distribution(dist: &[f64], n: usize, shots: u64, seed: u64) -> Result<Counts> {
    if shots == 0 {
        return Err(Error::arg("shots must be positive"));
    }
    check_len(dist, n)?;
    let mut cdf = Vec::with_capacity(dist.len());
    let mut acc = 0.0;
    for &p in dist {
        if !(p >= 0.0) {
            return Err(Error::arg(format!("negative or NaN probability {p}")));
        }
        acc += p;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::arg("distribution has no mass"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut histogram = BTreeMap::new();
    for _ in 0..shots {
        let u = rng.gen::<f64>() * acc;
        let mut z = cdf.partition_point(|&c| c <= u).min(dist.len() - 1);
        // skip zero-probability outcomes that share a cdf value
        while dist[z] == 0.0 && z + 1 < dist.len() {
            z += 1;
        }
        *histogram.entry(z).or_insert(0) += 1;
    }
    Ok(Counts { n, shots, histogram })
}

fn check_len(dist: &[f64], n: usize) -> Result<()> {
    if dist.len() != 1usize << n {
        return Err(Error::arg(format!(
            "distribution has {} outcomes, expected 2^{n}",
            dist.len()
        )));
    }
    Ok(())
}

/// Per-qubit confusion matrices `m[observed][true]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    matrices: Vec<[[f64; 2]; 2]>,
}

impl ReadoutModel {
    pub fn from_matrices(matrices: Vec<[[f64; 2]; 2]>) -> Result<Self> {
        for (q, m) in matrices.iter().enumerate() {
            for col in 0..2 {
                let (a, b) = (m[0][col], m[1][col]);
                if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                    return Err(Error::invalid(format!("qubit {q}: confusion entry outside [0, 1]")));
                }
                if (a + b - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("qubit {q}: column {col} does not sum to 1")));
                }
            }
        }
        Ok(ReadoutModel { matrices })
    }

    /// Flip probabilities per qubit as `(p10, p01)`.
    pub fn from_flips(flips: &[(f64, f64)]) -> Result<Self> {
        Self::from_matrices(
            flips
                .iter()
                .map(|&(p10, p01)| [[1.0 - p01, p10], [p01, 1.0 - p10]])
                .collect(),
        )
    }

    pub fn identity(n: usize) -> Self {
        Self::from_flips(&vec![(0.0, 0.0); n]).expect("identity is stochastic")
    }

    pub fn uniform(n: usize, p10: f64, p01: f64) -> Result<Self> {
        Self::from_flips(&vec![(p10, p01); n])
    }

    pub fn default_for(n: usize) -> Self {
        Self::uniform(n, DEFAULT_P10, DEFAULT_P01).expect("default flips are valid")
    }

    /// Parses lines `q<i> p10 p01`; every qubit of `n` must appear once.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let mut flips: Vec<Option<(f64, f64)>> = vec![None; n];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: i + 1, msg };
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(perr(format!("expected `q<i> p10 p01`, got {line:?}")));
            }
            let q: usize = toks[0]
                .strip_prefix('q')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| perr(format!("invalid qubit label {:?}", toks[0])))?;
            let p = |t: &str| t.parse::<f64>().map_err(|_| perr(format!("invalid probability {t:?}")));
            let (p10, p01) = (p(toks[1])?, p(toks[2])?);
            let slot = flips
                .get_mut(q)
                .ok_or_else(|| perr(format!("qubit {q} out of range for {n} qubits")))?;
            if slot.is_some() {
                return Err(perr(format!("qubit {q} listed twice")));
            }
            *slot = Some((p10, p01));
        }
        let flips = flips
            .into_iter()
            .enumerate()
            .map(|(q, f)| f.ok_or_else(|| Error::invalid(format!("noise model misses qubit {q}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_flips(&flips)
    }

    pub fn to_text(&self) -> String {
        self.matrices
            .iter()
            .enumerate()
            .map(|(q, m)| format!("q{q} {} {}\n", m[0][1], m[1][0]))
            .collect()
    }

    pub fn n(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[[[f64; 2]; 2]] {
        &self.matrices
    }

    /// Dense `2^n x 2^n` channel, row = observed, column = true.
    pub fn full_matrix(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.n();
        if n > FULL_MATRIX_CAP {
            return Err(Error::Resource(format!("dense confusion matrix capped at {FULL_MATRIX_CAP} qubits")));
        }
        let dim = 1 << n;
        Ok((0..dim)
            .map(|obs| {
                (0..dim)
                    .map(|tru| {
                        self.matrices
                            .iter()
                            .enumerate()
                            .map(|(q, m)| m[(obs >> q) & 1][(tru >> q) & 1])
                            .product()
                    })
                    .collect()
            })
            .collect())
    }

    fn check(&self, dist: &[f64]) -> Result<()> {
        check_len(dist, self.n())
    }

    fn apply_with(&self, dist: &[f64], per_qubit: impl Fn(&[[f64; 2]; 2]) -> [[f64; 2]; 2]) -> Vec<f64> {
        let mut v = dist.to_vec();
        for (q, m) in self.matrices.iter().enumerate() {
            let m = per_qubit(m);
            let bit = 1usize << q;
            for z in 0..v.len() {
                if z & bit == 0 {
                    let (a, b) = (v[z], v[z | bit]);
                    v[z] = m[0][0] * a + m[0][1] * b;
                    v[z | bit] = m[1][0] * a + m[1][1] * b;
                }
            }
        }
        v
    }

    fn apply(&self, dist: &[f64]) -> Vec<f64> {
        self.apply_with(dist, |m| *m)
    }

    fn apply_transpose(&self, dist: &[f64]) -> Vec<f64> {
        self.apply_with(dist, |m| [[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    fn inverses(&self) -> Result<Vec<[[f64; 2]; 2]>> {
        self.matrices
            .iter()
            .enumerate()
            .map(|(q, m)| {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det.abs() < 1e-12 {
                    return Err(Error::Numeric(format!("confusion matrix of qubit {q} is singular")));
                }
                Ok([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
            })
            .collect()
    }

    /// Squared spectral norm of the full channel.
    fn lipschitz(&self) -> f64 {
        self.matrices
            .iter()
            .map(|m| {
                let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
                // eigenvalues of M^T M
                let p = a * a + c * c;
                let r = b * b + d * d;
                let s = a * b + c * d;
                let tr = p + r;
                let disc = ((p - r) * (p - r) + 4.0 * s * s).sqrt();
                (tr + disc) / 2.0
            })
            .product()
    }
}

/// Exact action of the confusion channel on a distribution.
pub fn corrupt_distribution(dist: &[f64], model: &ReadoutModel) -> Result<Vec<f64>> {
    model.check(dist)?;
    Ok(model.apply(dist))
}

/// Independent per-shot bit flips drawn from the model.
pub fn corrupt_counts(counts: &Counts, model: &ReadoutModel, seed: u64) -> Result<Counts> {
    if counts.n != model.n() {
        return Err(Error::arg(format!(
            "noise model has {} qubits, counts have {}",
            model.n(),
            counts.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut histogram = BTreeMap::new();
    for (&z, &c) in &counts.histogram {
        for _ in 0..c {
            let mut obs = z;
            for (q, m) in model.matrices.iter().enumerate() {
                let t = (z >> q) & 1;
                // probability of reading the other value
                if rng.gen::<f64>() < m[1 - t][t] {
                    obs ^= 1 << q;
                }
            }
            *histogram.entry(obs).or_insert(0) += 1;
        }
    }
    Ok(Counts {
        n: counts.n,
        shots: counts.shots,
        histogram,
    })
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Least-squares inversion of the channel constrained to the simplex.
pub fn mitigate(noisy: &[f64], model: &ReadoutModel) -> Result<Vec<f64>> {
    model.check(noisy)?;
    let inv = model.inverses()?;
    let inverted = ReadoutModel { matrices: inv }.apply(noisy);
    let total: f64 = noisy.iter().sum();
    if inverted.iter().all(|&x| x >= -1e-15) {
        let clipped: Vec<f64> = inverted.iter().map(|x| x.max(0.0)).collect();
        let s: f64 = clipped.iter().sum();
        if s > 0.0 && (total - 1.0).abs() < 1e-9 {
            return Ok(clipped.iter().map(|x| x / s).collect());
        }
    }
    // accelerated projected gradient on ||A x - p||^2 / 2
    let step = 1.0 / model.lipschitz();
    let mut x = project_simplex(&inverted);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..20_000 {
        let r: Vec<f64> = model.apply(&y).iter().zip(noisy).map(|(a, b)| a - b).collect();
        let g = model.apply_transpose(&r);
        let next = project_simplex(&y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect::<Vec<_>>());
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        let change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        y = next.iter().zip(&x).map(|(n, o)| n + momentum * (n - o)).collect();
        x = next;
        t = t_next;
        if change < 1e-14 {
            break;
        }
    }
    Ok(x)
}

/// `-ln sum sqrt(p q)`; infinite when the supports are disjoint.
pub fn bhattacharyya(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::arg(format!("distributions of size {} and {}", p.len(), q.len())));
    }
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a.max(0.0) * b.max(0.0)).sqrt()).sum();
    if bc <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((-bc.ln()).max(0.0))
}
