//! Variational minimization of `<psi(theta)| H |psi(theta)>`.

pub mod optim;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ansatz::ParamCircuit;
use crate::error::{Error, Result};
use crate::hamiltonian::DiagonalCost;
use crate::oracle::{self, OracleResult};
use crate::simulator::InitKind;
use optim::{Bounds, Evaluator, GradientDescent, Halt, QuasiNewton, Spsa, StepStatus, Stepper};

pub use optim::{spsa_step, SpsaSchedule, SpsaSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Spsa,
    GradientDescent,
    QuasiNewtonBounded,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [
        OptimizerKind::QuasiNewtonBounded,
        OptimizerKind::GradientDescent,
        OptimizerKind::Spsa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Spsa => "spsa",
            OptimizerKind::GradientDescent => "gd",
            OptimizerKind::QuasiNewtonBounded => "qnb",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spsa" => Ok(OptimizerKind::Spsa),
            "gd" => Ok(OptimizerKind::GradientDescent),
            "qnb" => Ok(OptimizerKind::QuasiNewtonBounded),
            _ => Err(Error::arg(format!("unknown optimizer {s:?} (spsa|gd|qnb)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqeConfig {
    pub init: InitKind,
    pub optimizer: OptimizerKind,
    pub max_evaluations: usize,
    pub seed: u64,
    /// Initial parameters are drawn uniformly from `(lo, hi)`.
    pub init_param_range: (f64, f64),
    /// Convergence when accepted costs vary by less than this over `window` iterates.
    pub tolerance: f64,
    pub window: usize,
    pub fd_step: f64,
    pub spsa: SpsaSettings,
    /// Uniform box applied to every parameter; `None` leaves them free.
    pub bounds: Option<(f64, f64)>,
}

impl Default for VqeConfig {
    fn default() -> Self {
        VqeConfig {
            init: InitKind::AllZero,
            optimizer: OptimizerKind::QuasiNewtonBounded,
            max_evaluations: 5000,
            seed: 1,
            init_param_range: (-PI / 10.0, PI / 10.0),
            tolerance: 1e-6,
            window: 10,
            fd_step: 1e-5,
            spsa: SpsaSettings::default(),
            bounds: None,
        }
    }
}

impl VqeConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.init_param_range;
        if !(lo < hi) {
            return Err(Error::arg(format!("empty initial parameter range ({lo}, {hi})")));
        }
        if self.max_evaluations == 0 {
            return Err(Error::arg("max_evaluations must be positive"));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::arg("finite-difference step must be positive"));
        }
        if self.window == 0 {
            return Err(Error::arg("convergence window must be positive"));
        }
        if let Some((a, b)) = self.bounds {
            if !(a < b) {
                return Err(Error::arg(format!("empty parameter bounds ({a}, {b})")));
            }
        }
        Ok(())
    }
}

/// Parameters accepted by the optimizer at a given evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub evaluation: usize,
    pub cost: f64,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqeResult {
    pub best_params: Vec<f64>,
    /// Every cost evaluation, in order.
    pub history: Vec<(usize, f64)>,
    pub final_cost: f64,
    pub final_distribution: Vec<f64>,
    pub evaluations_used: usize,
    pub snapshots: Vec<Snapshot>,
    pub converged: bool,
}

impl VqeResult {
    /// Costs of the accepted iterates, starting with the initial point.
    pub fn iterate_costs(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.cost).collect()
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("evaluation,cost\n");
        for (i, c) in &self.history {
            out.push_str(&format!("{i},{c}\n"));
        }
        out
    }
}

pub fn evaluate(circuit: &ParamCircuit, params: &[f64], h: &DiagonalCost, init: InitKind) -> Result<f64> {
    check_sizes(circuit, h)?;
    let table = h.table()?;
    circuit.prepare(params, init)?.expect_diagonal(&table)
}

pub fn gradient_fd(
    circuit: &ParamCircuit,
    params: &[f64],
    h: &DiagonalCost,
    init: InitKind,
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    check_sizes(circuit, h)?;
    if params.len() != circuit.param_count() {
        return Err(Error::arg(format!(
            "expected {} parameters, got {}",
            circuit.param_count(),
            params.len()
        )));
    }
    let table = h.table()?;
    optim::central_difference(
        |p| circuit.prepare(p, init)?.expect_diagonal(&table),
        params,
        step,
    )
}

fn check_sizes(circuit: &ParamCircuit, h: &DiagonalCost) -> Result<()> {
    if circuit.n() != h.n() {
        return Err(Error::arg(format!(
            "circuit has {} qubits, Hamiltonian has {} blocks",
            circuit.n(),
            h.n()
        )));
    }
    Ok(())
}

/// RNG stream 0 draws initial parameters; stream `1 + k` drives optimizer `k`.
pub(crate) fn param_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn optimizer_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + index);
    rng
}

pub(crate) fn draw_params(rng: &mut ChaCha8Rng, count: usize, range: (f64, f64)) -> Vec<f64> {
    (0..count).map(|_| rng.gen_range(range.0..range.1)).collect()
}

pub(crate) fn make_stepper(
    kind: OptimizerKind,
    fd_step: f64,
    spsa: SpsaSettings,
    expected_iterations: usize,
    bounds: Option<Bounds>,
    rng: ChaCha8Rng,
) -> Box<dyn Stepper> {
    match kind {
        OptimizerKind::QuasiNewtonBounded => Box::new(QuasiNewton::new(fd_step, bounds)),
        OptimizerKind::GradientDescent => Box::new(GradientDescent::new(fd_step, bounds)),
        OptimizerKind::Spsa => Box::new(Spsa::new(spsa, expected_iterations, bounds, rng)),
    }
}

/// True once the last `window` accepted costs span less than `tol`.
pub(crate) fn window_converged(costs: &[f64], window: usize, tol: f64) -> bool {
    if costs.len() < window {
        return false;
    }
    let tail = &costs[costs.len() - window..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    hi - lo < tol
}

pub fn run(circuit: &ParamCircuit, h: &DiagonalCost, config: &VqeConfig) -> Result<VqeResult> {
    config.validate()?;
    check_sizes(circuit, h)?;
    let table = h.table()?;
    let init = config.init;
    let mut f = |p: &[f64]| {
        circuit
            .prepare(p, init)
            .and_then(|s| s.expect_diagonal(&table))
            .unwrap_or(f64::NAN)
    };
    let mut ev = Evaluator::new(&mut f, config.max_evaluations);

    let bounds: Option<Bounds> = config.bounds.map(|b| vec![b; circuit.param_count()]);
    let mut x = draw_params(&mut param_rng(config.seed), circuit.param_count(), config.init_param_range);
    if let Some((lo, hi)) = config.bounds {
        x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    }
    let mut fx = ev.eval(&x).map_err(Error::from)?;
    let mut snapshots = vec![Snapshot {
        evaluation: 0,
        cost: fx,
        params: x.clone(),
    }];
    let mut costs = vec![fx];

    let expected_iterations = (config.max_evaluations / 3).max(1);
    let mut stepper = make_stepper(
        config.optimizer,
        config.fd_step,
        config.spsa,
        expected_iterations,
        bounds,
        optimizer_rng(config.seed, 0),
    );
    let mut converged = false;
    loop {
        match stepper.step(&mut ev, &mut x, &mut fx) {
            Ok(StepStatus::Moved { evaluation }) => {
                snapshots.push(Snapshot {
                    evaluation,
                    cost: fx,
                    params: x.clone(),
                });
                costs.push(fx);
                if window_converged(&costs, config.window, config.tolerance) {
                    converged = true;
                    break;
                }
            }
            Ok(StepStatus::Stalled) => {
                converged = true;
                break;
            }
            Err(Halt::Budget) => break,
            Err(e) => return Err(e.into()),
        }
    }
    let evaluations_used = ev.used();
    let history = ev.into_history();
    let best = snapshots
        .iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("initial snapshot present");
    let best_params = best.params.clone();
    let final_cost = best.cost;
    let final_distribution = circuit.prepare(&best_params, init)?.probabilities();
    Ok(VqeResult {
        best_params,
        history,
        final_cost,
        final_distribution,
        evaluations_used,
        snapshots,
        converged,
    })
}

/// Outcome of [`run_with_restarts`].
#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub result: VqeResult,
    pub seeds: Vec<u64>,
    pub p_opt: f64,
}

pub fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed.wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Reruns with fresh seeds while `p_opt < 0.5`, up to `max_restarts` extra runs.
pub fn run_with_restarts(
    circuit: &ParamCircuit,
    h: &DiagonalCost,
    config: &VqeConfig,
    oracle: &OracleResult,
    max_restarts: usize,
) -> Result<RestartOutcome> {
    let mut seeds = Vec::new();
    let mut best: Option<(VqeResult, f64)> = None;
    for attempt in 0..=max_restarts {
        let seed = restart_seed(config.seed, attempt);
        seeds.push(seed);
        let cfg = VqeConfig {
            seed,
            ..config.clone()
        };
        let r = run(circuit, h, &cfg)?;
        let p = oracle::p_opt(&r.final_distribution, oracle)?;
        let done = p >= 0.5;
        if best.as_ref().is_none_or(|(_, bp)| p > *bp) || done {
            best = Some((r, p));
        }
        if done {
            break;
        }
    }
    let (result, p_opt) = best.expect("at least one attempt");
    Ok(RestartOutcome { result, seeds, p_opt })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub optimizer: OptimizerKind,
    pub evaluations_to_converge: usize,
    pub final_cost: f64,
    pub converged: bool,
    pub history: Vec<(usize, f64)>,
}

pub fn compare_optimizers(
    circuit: &ParamCircuit,
    h: &DiagonalCost,
    configs: &[VqeConfig],
) -> Result<Vec<ComparisonRow>> {
    configs
        .iter()
        .map(|cfg| {
            let r = run(circuit, h, cfg)?;
            Ok(ComparisonRow {
                optimizer: cfg.optimizer,
                evaluations_to_converge: r.evaluations_used,
                final_cost: r.final_cost,
                converged: r.converged,
                history: r.history,
            })
        })
        .collect()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("optimizer,evaluations_to_converge,final_cost\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.optimizer, r.evaluations_to_converge, r.final_cost));
    }
    out
}

/// Per-site excavation probabilities `(1 - <Z_i>) / 2` at each checkpoint,
/// using the latest accepted parameters at or before that evaluation.
pub fn profile_evolution(
    circuit: &ParamCircuit,
    init: InitKind,
    result: &VqeResult,
    checkpoints: &[usize],
) -> Result<Vec<Vec<f64>>> {
    checkpoints
        .iter()
        .map(|&cp| {
            if cp >= result.evaluations_used {
                return Err(Error::arg(format!(
                    "checkpoint {cp} beyond the {} recorded evaluations",
                    result.evaluations_used
                )));
            }
            let snap = result
                .snapshots
                .iter()
                .rev()
                .find(|s| s.evaluation <= cp)
                .ok_or_else(|| Error::arg(format!("no parameter snapshot at or before {cp}")))?;
            let state = circuit.prepare(&snap.params, init)?;
            (0..circuit.n()).map(|q| state.excitation(q)).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::build_circuit;
    use crate::instances;
    use crate::lattice::PitLattice;
    use num_rational::Rational64;
    use num_traits::ToPrimitive;
    use std::f64::consts::FRAC_PI_2;

    fn mini4_setup() -> (PitLattice, ParamCircuit) {
        let l = instances::mini4();
        let c = build_circuit(&l, None).unwrap();
        (l, c)
    }

    #[test]
    fn evaluate_examples() {
        let (l, c) = mini4_setup();
        let h = DiagonalCost::new(&l, Rational64::from_integer(4)).unwrap();
        assert_eq!(evaluate(&c, &[0.0; 7], &h, InitKind::AllZero).unwrap(), 0.0);
        let mut p = [0.0; 7];
        p[..4].fill(PI);
        assert!((evaluate(&c, &p, &h, InitKind::AllZero).unwrap() + 5.0).abs() < 1e-12);
        let brute: f64 = (0..16).map(|z| h.cost_of_index(z).to_f64().unwrap()).sum::<f64>() / 16.0;
        assert!((evaluate(&c, &[0.0; 7], &h, InitKind::Superposition).unwrap() - brute).abs() < 1e-12);
        assert!(evaluate(&c, &[0.0; 3], &h, InitKind::AllZero).is_err());
    }

    #[test]
    fn gradient_examples() {
        let (l, c) = mini4_setup();
        let h = DiagonalCost::new(&l, Rational64::from_integer(4)).unwrap();
        let mut p = [0.0; 7];
        p[..4].fill(PI);
        let g = gradient_fd(&c, &p, &h, InitKind::AllZero, 1e-4).unwrap();
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6);

        let one = PitLattice::parse("rows 1\n0:3\n").unwrap();
        let c1 = build_circuit(&one, None).unwrap();
        let h0 = DiagonalCost::new(&one, Rational64::from_integer(0)).unwrap();
        let g = gradient_fd(&c1, &[FRAC_PI_2], &h0, InitKind::AllZero, 1e-4).unwrap();
        // E = -3 sin^2(t/2), dE/dt = -3/2 sin t
        assert!((g[0] + 1.5).abs() < 1e-7);

        let h0 = DiagonalCost::new(&l, Rational64::from_integer(0)).unwrap();
        let g = gradient_fd(&c, &[0.0; 7], &h0, InitKind::AllZero, 1e-4).unwrap();
        assert!(g[4..].iter().all(|v| v.abs() < 1e-12));
        assert!(gradient_fd(&c, &[0.0; 7], &h0, InitKind::AllZero, 0.0).is_err());
    }

    #[test]
    fn run_converges_on_mini4() {
        let (l, c) = mini4_setup();
        let h = DiagonalCost::new(&l, Rational64::from_integer(4)).unwrap();
        let o = oracle::enumerate(&l, h.gamma()).unwrap();
        let cfg = VqeConfig::default();
        // zero init at this penalty often stalls on the shallow profit; restarts recover it
        let out = run_with_restarts(&c, &h, &cfg, &o, MINI4_RESTARTS).unwrap();
        let r = out.result;
        assert_eq!(out.seeds[0], cfg.seed);
        assert!((r.final_cost + 5.0).abs() < 1e-6, "{}", r.final_cost);
        assert!(oracle::p_opt(&r.final_distribution, &o).unwrap() >= 0.99);
        assert!((r.final_distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ground = o.ground_cost.to_f64().unwrap();
        assert!(r.history.iter().all(|(_, c)| *c >= ground - 1e-9));
        let acc = r.iterate_costs();
        assert!(acc.windows(2).all(|w| w[1] <= w[0]));
        let again = run_with_restarts(&c, &h, &cfg, &o, MINI4_RESTARTS).unwrap();
        assert_eq!(r, again.result);
        assert_eq!(out.seeds, again.seeds);
    }

    const MINI4_RESTARTS: usize = 10;

    #[test]
    fn single_block_every_optimizer() {
        let one = PitLattice::parse("rows 1\n0:3\n").unwrap();
        let c = build_circuit(&one, None).unwrap();
        let h = DiagonalCost::new(&one, Rational64::from_integer(1)).unwrap();
        for opt in OptimizerKind::ALL {
            let cfg = VqeConfig {
                optimizer: opt,
                ..VqeConfig::default()
            };
            let r = run(&c, &h, &cfg).unwrap();
            assert!((r.final_cost + 3.0).abs() < 1e-4, "{opt}: {}", r.final_cost);
        }
    }

    #[test]
    fn budget_of_one_echoes_initial_point() {
        let (l, c) = mini4_setup();
        let h = DiagonalCost::new(&l, Rational64::from_integer(4)).unwrap();
        let cfg = VqeConfig {
            max_evaluations: 1,
            ..VqeConfig::default()
        };
        let r = run(&c, &h, &cfg).unwrap();
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.evaluations_used, 1);
        let x0 = draw_params(&mut param_rng(cfg.seed), 7, cfg.init_param_range);
        assert_eq!(r.best_params, x0);
        assert_eq!(r.final_cost, r.history[0].1);
    }

    #[test]
    fn config_validation() {
        let (l, c) = mini4_setup();
        let h = DiagonalCost::new(&l, Rational64::from_integer(4)).unwrap();
        let bad = VqeConfig {
            init_param_range: (1.0, 1.0),
            ..VqeConfig::default()
        };
        assert!(run(&c, &h, &bad).is_err());
        let bad = VqeConfig {
            max_evaluations: 0,
            ..VqeConfig::default()
        };
        assert!(run(&c, &h, &bad).is_err());
    }

    #[test]
    fn spsa_first_step_is_reproducible() {
        let one = PitLattice::parse("rows 1\n0:3\n").unwrap();
        let c = build_circuit(&one, None).unwrap();
        let h = DiagonalCost::new(&one, Rational64::from_integer(1)).unwrap();
        let table = h.table().unwrap();
        let gains = SpsaSchedule {
            a: 0.2,
            c: 0.1,
            big_a: 10.0,
            alpha: 0.602,
            gamma: 0.101,
        };
        let f = |p: &[f64]| c.prepare(p, InitKind::AllZero)?.expect_diagonal(&table);
        let step = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            spsa_step(&[0.25], f, 0, &gains, &mut rng).unwrap().0
        };
        let a = step(42);
        assert_eq!(a, step(42));
        // recorded from this implementation's seeded run
        assert_eq!(a[0].to_bits(), SPSA_SEED42_STEP0.to_bits(), "{:?}", a[0]);
    }

    const SPSA_SEED42_STEP0: f64 = 0.26749385160184236;

    #[test]
    fn profile_evolution_bounds() {
        let (l, c) = mini4_setup();
        let h = DiagonalCost::new(&l, Rational64::from_integer(4)).unwrap();
        let o = oracle::enumerate(&l, h.gamma()).unwrap();
        let r = run_with_restarts(&c, &h, &VqeConfig::default(), &o, MINI4_RESTARTS)
            .unwrap()
            .result;
        let last = r.evaluations_used - 1;
        let prof = profile_evolution(&c, InitKind::AllZero, &r, &[0, last]).unwrap();
        assert!(prof[0].iter().all(|&p| p < 0.05));
        assert!(prof[1].iter().all(|&p| (p - 1.0).abs() < 1e-3), "{:?}", prof[1]);
        assert!(prof.iter().flatten().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(profile_evolution(&c, InitKind::AllZero, &r, &[r.evaluations_used]).is_err());
    }

    #[test]
    fn comparison_report_shape() {
        let (l, c) = mini4_setup();
        let h = DiagonalCost::new(&l, Rational64::from_integer(4)).unwrap();
        let configs: Vec<VqeConfig> = OptimizerKind::ALL
            .iter()
            .map(|&o| VqeConfig {
                optimizer: o,
                init: InitKind::AllOne,
                max_evaluations: 100_000,
                ..VqeConfig::default()
            })
            .collect();
        let rows = compare_optimizers(&c, &h, &configs).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert!((r.final_cost + 5.0).abs() < 1e-4, "{}: {}", r.optimizer, r.final_cost);
        }
        let csv = comparison_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("optimizer,evaluations_to_converge,final_cost\n"));
    }
}
