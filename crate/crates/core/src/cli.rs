//! Command-line experiment runner.
//!
//! Exit codes: 0 on success, 1 for user errors (bad flags, unreadable or
//! invalid inputs), 2 for numeric failures.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_rational::Rational64;

use crate::ansatz::build_circuit;
use crate::decomposition::{partition_horizontal, scf_run, Partition, ScfConfig};
use crate::error::{Error, Result};
use crate::hamiltonian::{penalty_heuristic, DiagonalCost};
use crate::instances;
use crate::lattice::{index_label, PitLattice};
use crate::oracle;
use crate::sampling::{self, ReadoutModel};
use crate::simulator::InitKind;
use crate::vqe::{self, OptimizerKind, VqeConfig};

#[derive(Debug, Parser)]
#[command(name = "openpit", version, about = "Variational open-pit profile optimization")]
struct Cli {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Debug, Subcommand)]
enum Mode {
    /// Run VQE on the whole pit.
    Solve(RunArgs),
    /// Run the fragment self-consistent solver.
    Decompose(RunArgs),
    /// Enumerate every profile.
    Oracle(RunArgs),
    /// Run all three optimizers from the same start.
    CompareOptimizers(RunArgs),
    /// Solve, then measure with finite shots and optional readout noise.
    Sample(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Pit file, or `builtin:<name>` for a bundled instance.
    #[arg(long)]
    instance: String,
    /// Penalty weight as a rational, or `auto` for the heuristic.
    #[arg(long, default_value = "auto")]
    gamma: String,
    /// zero | one | plus. Defaults to plus for decompose, zero otherwise.
    #[arg(long)]
    init: Option<InitKind>,
    #[arg(long, default_value = "qnb")]
    optimizer: OptimizerKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 8192)]
    shots: u64,
    /// Partition file (one fragment of block ids per line) or `horizontal`.
    #[arg(long, default_value = "horizontal")]
    partition: String,
    /// Noise file (`q<i> p10 p01` per line), `default`, or `none`.
    #[arg(long, default_value = "none")]
    noise: String,
    #[arg(long)]
    mitigate: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "max-evals", default_value_t = 5000)]
    max_evals: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
}

/// Parses `argv` (program name first), runs the mode and returns the exit code.
pub fn main_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match dispatch(&cli.mode) {
        Ok(summary) => {
            let _ = write!(stdout, "{summary}");
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "openpit: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => 2,
        _ => 1,
    }
}

fn dispatch(mode: &Mode) -> Result<String> {
    match mode {
        Mode::Solve(a) => solve(a),
        Mode::Decompose(a) => decompose(a),
        Mode::Oracle(a) => run_oracle(a),
        Mode::CompareOptimizers(a) => compare(a),
        Mode::Sample(a) => sample(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a pit file, falling back to a bundled instance of the same stem.
fn load_instance(spec: &str) -> Result<PitLattice> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return instances::by_name(name).ok_or_else(|| Error::arg(format!("no bundled instance {name:?}")));
    }
    let path = Path::new(spec);
    if !path.exists() {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let bare = path.parent().is_none_or(|p| p.as_os_str().is_empty());
        if let (true, Some(l)) = (bare, instances::by_name(stem)) {
            return Ok(l);
        }
    }
    PitLattice::parse(&read(path)?)
}

fn resolve_gamma(spec: &str, lattice: &PitLattice) -> Result<Rational64> {
    if spec == "auto" {
        return penalty_heuristic(lattice);
    }
    let g: Rational64 = spec
        .parse()
        .map_err(|_| Error::arg(format!("invalid --gamma {spec:?} (expected a rational such as 53/3, or auto)")))?;
    if g < Rational64::from_integer(0) {
        return Err(Error::arg("--gamma must be non-negative"));
    }
    Ok(g)
}

fn load_partition(spec: &str, lattice: &PitLattice) -> Result<Partition> {
    if spec == "horizontal" {
        return Ok(partition_horizontal(lattice));
    }
    Partition::parse(lattice, &read(Path::new(spec))?)
}

fn load_noise(spec: &str, n: usize) -> Result<Option<ReadoutModel>> {
    match spec {
        "none" => Ok(None),
        "default" => Ok(Some(ReadoutModel::default_for(n))),
        path => ReadoutModel::parse(&read(Path::new(path))?, n).map(Some),
    }
}

struct Outputs {
    dir: Option<PathBuf>,
}

impl Outputs {
    fn new(dir: &Option<PathBuf>) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d).map_err(|source| Error::Io {
                path: d.display().to_string(),
                source,
            })?;
        }
        Ok(Outputs { dir: dir.clone() })
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(d) = &self.dir {
            let p = d.join(name);
            fs::write(&p, contents).map_err(|source| Error::Io {
                path: p.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }
}

fn meta(mode: &str, a: &RunArgs, gamma: Option<Rational64>, init: InitKind) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "mode={mode}");
    let _ = writeln!(m, "instance={}", a.instance);
    let _ = writeln!(m, "gamma_spec={}", a.gamma);
    if let Some(g) = gamma {
        let _ = writeln!(m, "gamma={g}");
    }
    let _ = writeln!(m, "init={init}");
    let _ = writeln!(m, "optimizer={}", a.optimizer);
    let _ = writeln!(m, "seed={}", a.seed);
    let _ = writeln!(m, "shots={}", a.shots);
    let _ = writeln!(m, "partition={}", a.partition);
    let _ = writeln!(m, "noise={}", a.noise);
    let _ = writeln!(m, "mitigate={}", a.mitigate);
    let _ = writeln!(m, "max_evals={}", a.max_evals);
    let _ = writeln!(m, "restarts={}", a.restarts);
    let _ = writeln!(m, "version={}", env!("CARGO_PKG_VERSION"));
    m
}

fn vqe_config(a: &RunArgs, init: InitKind) -> VqeConfig {
    VqeConfig {
        init,
        optimizer: a.optimizer,
        max_evaluations: a.max_evals,
        seed: a.seed,
        ..VqeConfig::default()
    }
}

fn excavation_csv(probs: &[f64]) -> String {
    let mut out = String::from("block,excavation\n");
    for (i, p) in probs.iter().enumerate() {
        let _ = writeln!(out, "{i},{p}");
    }
    out
}

/// Solves the full pit with restarts; shared by `solve` and `sample`.
struct Solved {
    lattice: PitLattice,
    gamma: Rational64,
    init: InitKind,
    oracle: oracle::OracleResult,
    outcome: vqe::RestartOutcome,
    circuit: crate::ansatz::ParamCircuit,
}

fn solve_core(a: &RunArgs) -> Result<Solved> {
    let lattice = load_instance(&a.instance)?;
    let gamma = resolve_gamma(&a.gamma, &lattice)?;
    let init = a.init.unwrap_or(InitKind::AllZero);
    let h = DiagonalCost::new(&lattice, gamma)?;
    let circuit = build_circuit(&lattice, None)?;
    let oracle = oracle::enumerate(&lattice, gamma)?;
    let outcome = vqe::run_with_restarts(&circuit, &h, &vqe_config(a, init), &oracle, a.restarts)?;
    Ok(Solved {
        lattice,
        gamma,
        init,
        oracle,
        outcome,
        circuit,
    })
}

fn solve(a: &RunArgs) -> Result<String> {
    let s = solve_core(a)?;
    let out = Outputs::new(&a.out)?;
    let r = &s.outcome.result;
    let n = s.lattice.len();
    let state = s.circuit.prepare(&r.best_params, s.init)?;
    let excavation = (0..n).map(|q| state.excitation(q)).collect::<Result<Vec<_>>>()?;
    out.write("run.meta", &meta("solve", a, Some(s.gamma), s.init))?;
    out.write("trace.csv", &r.trace_csv())?;
    out.write("distribution.csv", &sampling::distribution_csv(&r.final_distribution, n))?;
    out.write("profile.csv", &excavation_csv(&excavation))?;
    let p_v = oracle::violation_probability(&r.final_distribution, &s.lattice)?;
    Ok(format!(
        "P_opt={} p_opt={:.3}\nfinal_cost={:.6} p_v={:.3} evaluations={} runs={}\n",
        s.oracle.p_opt_value,
        s.outcome.p_opt,
        r.final_cost,
        p_v,
        r.evaluations_used,
        s.outcome.seeds.len()
    ))
}

fn decompose(a: &RunArgs) -> Result<String> {
    let lattice = load_instance(&a.instance)?;
    let gamma = resolve_gamma(&a.gamma, &lattice)?;
    let init = a.init.unwrap_or(InitKind::Superposition);
    let partition = load_partition(&a.partition, &lattice)?;
    let cfg = ScfConfig {
        init,
        optimizer: a.optimizer,
        seed: a.seed,
        ..ScfConfig::default()
    };
    let r = scf_run(&lattice, &partition, gamma, &cfg)?;
    let oracle = oracle::enumerate(&lattice, gamma)?;
    let p_opt = oracle::p_opt(&r.final_distribution, &oracle)?;
    let out = Outputs::new(&a.out)?;
    out.write("run.meta", &meta("decompose", a, Some(gamma), init))?;
    out.write("partition.txt", &partition.to_text())?;
    out.write("trace.csv", &r.trace_csv())?;
    let mut energy = String::from("sweep,negative_cost_sum,total_energy\n");
    for (k, (s, e)) in r.negative_cost_sums().iter().zip(&r.energies).enumerate() {
        let _ = writeln!(energy, "{k},{s},{e}");
    }
    out.write("energy.csv", &energy)?;
    out.write("distribution.csv", &sampling::distribution_csv(&r.final_distribution, lattice.len()))?;
    let last = r.negative_cost_sums().last().copied().unwrap_or(f64::NAN);
    Ok(format!(
        "P_opt={} p_opt={:.3}\nnegative_cost_sum={:.6} sweeps={} converged={}\n",
        oracle.p_opt_value, p_opt, last, r.sweeps, r.converged
    ))
}

fn run_oracle(a: &RunArgs) -> Result<String> {
    let lattice = load_instance(&a.instance)?;
    let gamma = resolve_gamma(&a.gamma, &lattice)?;
    let o = oracle::enumerate(&lattice, gamma)?;
    let out = Outputs::new(&a.out)?;
    out.write("run.meta", &meta("oracle", a, Some(gamma), a.init.unwrap_or(InitKind::AllZero)))?;
    let mut csv = String::from("bitstring,profit\n");
    for &z in &o.optimal_set {
        let _ = writeln!(csv, "{},{}", index_label(z, lattice.len()), o.p_opt_value);
    }
    out.write("optimal.csv", &csv)?;
    Ok(format!(
        "P_opt={} optimal_count={}\nground_cost={} ground_count={}\n",
        o.p_opt_value,
        o.optimal_set.len(),
        o.ground_cost,
        o.ground_set.len()
    ))
}

fn compare(a: &RunArgs) -> Result<String> {
    let lattice = load_instance(&a.instance)?;
    let gamma = resolve_gamma(&a.gamma, &lattice)?;
    let init = a.init.unwrap_or(InitKind::AllZero);
    let h = DiagonalCost::new(&lattice, gamma)?;
    let circuit = build_circuit(&lattice, None)?;
    let configs: Vec<VqeConfig> = OptimizerKind::ALL
        .iter()
        .map(|&optimizer| VqeConfig {
            optimizer,
            ..vqe_config(a, init)
        })
        .collect();
    let rows = vqe::compare_optimizers(&circuit, &h, &configs)?;
    let out = Outputs::new(&a.out)?;
    out.write("run.meta", &meta("compare-optimizers", a, Some(gamma), init))?;
    out.write("comparison.csv", &vqe::comparison_csv(&rows))?;
    let mut summary = String::new();
    for r in &rows {
        let mut trace = String::from("evaluation,cost\n");
        for (i, c) in &r.history {
            let _ = writeln!(trace, "{i},{c}");
        }
        out.write(&format!("trace_{}.csv", r.optimizer), &trace)?;
        let _ = writeln!(
            summary,
            "{} evaluations={} final_cost={:.6} converged={}",
            r.optimizer, r.evaluations_to_converge, r.final_cost, r.converged
        );
    }
    Ok(summary)
}

fn sample(a: &RunArgs) -> Result<String> {
    let s = solve_core(a)?;
    let n = s.lattice.len();
    let noise = load_noise(&a.noise, n)?;
    let state = s.circuit.prepare(&s.outcome.result.best_params, s.init)?;
    let exact = state.probabilities();
    let clean = sampling::sample(&state, a.shots, a.seed)?;
    let raw_counts = match &noise {
        Some(m) => sampling::corrupt_counts(&clean, m, a.seed.wrapping_add(1))?,
        None => clean,
    };
    let raw = raw_counts.distribution();
    let out = Outputs::new(&a.out)?;
    out.write("run.meta", &meta("sample", a, Some(s.gamma), s.init))?;
    out.write("distribution.csv", &sampling::distribution_csv(&exact, n))?;
    out.write("counts.csv", &raw_counts.to_csv())?;
    let mut summary = format!(
        "P_opt={} p_opt_raw={:.4} p_v_raw={:.4} d_raw={:.4}\n",
        s.oracle.p_opt_value,
        oracle::p_opt(&raw, &s.oracle)?,
        oracle::violation_probability(&raw, &s.lattice)?,
        sampling::bhattacharyya(&raw, &exact)?
    );
    if a.mitigate {
        let model = noise.unwrap_or_else(|| ReadoutModel::identity(n));
        let mitigated = sampling::mitigate(&raw, &model)?;
        out.write("mitigated.csv", &sampling::distribution_csv(&mitigated, n))?;
        let _ = writeln!(
            summary,
            "p_opt_mitigated={:.4} p_v_mitigated={:.4} d_mitigated={:.4}",
            oracle::p_opt(&mitigated, &s.oracle)?,
            oracle::violation_probability(&mitigated, &s.lattice)?,
            sampling::bhattacharyya(&mitigated, &exact)?
        );
    }
    Ok(summary)
}
