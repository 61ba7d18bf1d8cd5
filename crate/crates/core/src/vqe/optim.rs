//! Classical optimizers driven one accepted iterate at a time.
//!
//! Every optimizer talks to the objective through an [`Evaluator`], which
//! counts evaluations, enforces the budget and records the cost history.
//! Keeping the step granularity explicit lets the fragment solver interleave
//! single iterations of several optimizers.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Halt {
    Budget,
    NonFinite { evaluation: usize, params: Vec<f64> },
}

pub struct Evaluator<'f> {
    f: &'f mut dyn FnMut(&[f64]) -> f64,
    used: usize,
    limit: usize,
    history: Vec<(usize, f64)>,
}

impl<'f> Evaluator<'f> {
    pub fn new(f: &'f mut dyn FnMut(&[f64]) -> f64, limit: usize) -> Self {
        Evaluator {
            f,
            used: 0,
            limit,
            history: Vec::new(),
        }
    }

    pub fn eval(&mut self, x: &[f64]) -> std::result::Result<f64, Halt> {
        if self.used >= self.limit {
            return Err(Halt::Budget);
        }
        let v = (self.f)(x);
        if !v.is_finite() {
            return Err(Halt::NonFinite {
                evaluation: self.used,
                params: x.to_vec(),
            });
        }
        self.history.push((self.used, v));
        self.used += 1;
        Ok(v)
    }

    pub fn used(&self) -> usize {
        self.used
    }

    /// Index of the most recent evaluation.
    pub fn last_index(&self) -> usize {
        self.used.saturating_sub(1)
    }

    pub fn into_history(self) -> Vec<(usize, f64)> {
        self.history
    }

    pub fn history(&self) -> &[(usize, f64)] {
        &self.history
    }
}

impl From<Halt> for Error {
    fn from(h: Halt) -> Self {
        match h {
            Halt::Budget => Error::Numeric("evaluation budget exhausted".into()),
            Halt::NonFinite { evaluation, params } => Error::Numeric(format!(
                "non-finite cost at evaluation {evaluation}, params {params:?}"
            )),
        }
    }
}

/// Central differences `(f(x + h e_k) - f(x - h e_k)) / 2h`.
pub fn central_difference<E>(
    mut f: impl FnMut(&[f64]) -> std::result::Result<f64, E>,
    x: &[f64],
    step: f64,
) -> std::result::Result<Vec<f64>, E> {
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + step;
        let up = f(&probe)?;
        probe[k] = x[k] - step;
        let down = f(&probe)?;
        probe[k] = x[k];
        g.push((up - down) / (2.0 * step));
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepStatus {
    /// A new iterate was accepted; `evaluation` is the index at which its cost was computed.
    Moved { evaluation: usize },
    /// No progress is possible from the current iterate.
    Stalled,
}

pub trait Stepper {
    /// Advances `(x, fx)` by one accepted iterate.
    fn step(
        &mut self,
        ev: &mut Evaluator<'_>,
        x: &mut Vec<f64>,
        fx: &mut f64,
    ) -> std::result::Result<StepStatus, Halt>;

    /// Forgets cached derivative information, e.g. after the objective changed.
    fn invalidate(&mut self);
}

pub type Bounds = Vec<(f64, f64)>;

fn project(x: &mut [f64], bounds: Option<&Bounds>) {
    if let Some(b) = bounds {
        for (v, &(lo, hi)) in x.iter_mut().zip(b) {
            *v = v.clamp(lo, hi);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const MAX_MOVE: f64 = 1.0;
const FIRST_MOVE: f64 = 0.25;

/// Marks coordinates pinned at a bound with the gradient pushing outward.
fn active_set(x: &[f64], g: &[f64], bounds: Option<&Bounds>) -> Vec<bool> {
    match bounds {
        None => vec![false; x.len()],
        Some(b) => x
            .iter()
            .zip(g)
            .zip(b)
            .map(|((&v, &gi), &(lo, hi))| (v <= lo && gi > 0.0) || (v >= hi && gi < 0.0))
            .collect(),
    }
}

/// Backtracking search along the projected path `P(x + t d)`.
fn projected_search(
    ev: &mut Evaluator<'_>,
    x: &[f64],
    fx: f64,
    g: &[f64],
    d: &[f64],
    t0: f64,
    bounds: Option<&Bounds>,
) -> std::result::Result<Option<(Vec<f64>, f64, usize)>, Halt> {
    let mut t = t0;
    for _ in 0..MAX_BACKTRACKS {
        let mut xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        project(&mut xt, bounds);
        let moved: Vec<f64> = xt.iter().zip(x).map(|(a, b)| a - b).collect();
        if norm_inf(&moved) == 0.0 {
            return Ok(None);
        }
        let ft = ev.eval(&xt)?;
        if ft <= fx + ARMIJO * dot(g, &moved) {
            return Ok(Some((xt, ft, ev.last_index())));
        }
        t *= 0.5;
    }
    Ok(None)
}

/// Limited-memory BFGS with box bounds handled by projection and an active set.
pub struct QuasiNewton {
    fd_step: f64,
    bounds: Option<Bounds>,
    memory: VecDeque<(Vec<f64>, Vec<f64>)>,
    capacity: usize,
    grad: Option<Vec<f64>>,
}

impl QuasiNewton {
    pub fn new(fd_step: f64, bounds: Option<Bounds>) -> Self {
        QuasiNewton {
            fd_step,
            bounds,
            memory: VecDeque::new(),
            capacity: 10,
            grad: None,
        }
    }

    fn direction(&self, g: &[f64], active: &[bool]) -> Vec<f64> {
        let mut q: Vec<f64> = g
            .iter()
            .zip(active)
            .map(|(&v, &a)| if a { 0.0 } else { v })
            .collect();
        let mut alphas = Vec::with_capacity(self.memory.len());
        for (s, y) in self.memory.iter().rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push((a, rho));
        }
        if let Some((s, y)) = self.memory.back() {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y), (a, rho)) in self.memory.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter()
            .zip(active)
            .map(|(&v, &a)| if a { 0.0 } else { -v })
            .collect()
    }
}

impl Stepper for QuasiNewton {
    fn step(
        &mut self,
        ev: &mut Evaluator<'_>,
        x: &mut Vec<f64>,
        fx: &mut f64,
    ) -> std::result::Result<StepStatus, Halt> {
        let g = match self.grad.take() {
            Some(g) => g,
            None => central_difference(|p| ev.eval(p), x, self.fd_step)?,
        };
        let bounds = self.bounds.as_ref();
        let active = active_set(x, &g, bounds);
        let free_g: Vec<f64> = g
            .iter()
            .zip(&active)
            .map(|(&v, &a)| if a { 0.0 } else { v })
            .collect();
        let gnorm = norm_inf(&free_g);
        if gnorm < 1e-12 {
            self.grad = Some(g);
            return Ok(StepStatus::Stalled);
        }
        let mut d = self.direction(&g, &active);
        let mut t0 = 1.0;
        if self.memory.is_empty() || dot(&free_g, &d) >= 0.0 {
            self.memory.clear();
            d = free_g.iter().map(|v| -v).collect();
            t0 = FIRST_MOVE / gnorm;
        } else {
            let dn = norm_inf(&d);
            if dn > MAX_MOVE {
                t0 = MAX_MOVE / dn;
            }
        }
        match projected_search(ev, x, *fx, &g, &d, t0, bounds)? {
            Some((xt, ft, idx)) => {
                let gt = central_difference(|p| ev.eval(p), &xt, self.fd_step)?;
                let s: Vec<f64> = xt.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    if self.memory.len() == self.capacity {
                        self.memory.pop_front();
                    }
                    self.memory.push_back((s, y));
                }
                *x = xt;
                *fx = ft;
                self.grad = Some(gt);
                Ok(StepStatus::Moved { evaluation: idx })
            }
            None => {
                let had_memory = !self.memory.is_empty();
                self.memory.clear();
                self.grad = Some(g);
                if had_memory {
                    // retry from steepest descent on the next call
                    self.step(ev, x, fx)
                } else {
                    Ok(StepStatus::Stalled)
                }
            }
        }
    }

    fn invalidate(&mut self) {
        self.grad = None;
    }
}

/// Steepest descent with an adaptive step and Armijo backtracking.
pub struct GradientDescent {
    fd_step: f64,
    bounds: Option<Bounds>,
    grad: Option<Vec<f64>>,
    last_step: Option<f64>,
}

impl GradientDescent {
    pub fn new(fd_step: f64, bounds: Option<Bounds>) -> Self {
        GradientDescent {
            fd_step,
            bounds,
            grad: None,
            last_step: None,
        }
    }
}

impl Stepper for GradientDescent {
    fn step(
        &mut self,
        ev: &mut Evaluator<'_>,
        x: &mut Vec<f64>,
        fx: &mut f64,
    ) -> std::result::Result<StepStatus, Halt> {
        let g = match self.grad.take() {
            Some(g) => g,
            None => central_difference(|p| ev.eval(p), x, self.fd_step)?,
        };
        let bounds = self.bounds.as_ref();
        let active = active_set(x, &g, bounds);
        let d: Vec<f64> = g
            .iter()
            .zip(&active)
            .map(|(&v, &a)| if a { 0.0 } else { -v })
            .collect();
        let gnorm = norm_inf(&d);
        if gnorm < 1e-12 {
            self.grad = Some(g);
            return Ok(StepStatus::Stalled);
        }
        let t0 = match self.last_step {
            Some(t) => (2.0 * t).min(MAX_MOVE / gnorm),
            None => FIRST_MOVE / gnorm,
        };
        match projected_search(ev, x, *fx, &g, &d, t0, bounds)? {
            Some((xt, ft, idx)) => {
                let moved = norm_inf(&xt.iter().zip(x.iter()).map(|(a, b)| a - b).collect::<Vec<_>>());
                self.last_step = Some(moved / gnorm);
                self.grad = Some(central_difference(|p| ev.eval(p), &xt, self.fd_step)?);
                *x = xt;
                *fx = ft;
                Ok(StepStatus::Moved { evaluation: idx })
            }
            None => {
                self.grad = Some(g);
                Ok(StepStatus::Stalled)
            }
        }
    }

    fn invalidate(&mut self) {
        self.grad = None;
    }
}

/// SPSA gain sequences `a_k = a / (A + k + 1)^alpha`, `c_k = c / (k + 1)^gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsaSchedule {
    pub a: f64,
    pub c: f64,
    pub big_a: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl SpsaSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a > 0.0 && self.c > 0.0 && self.big_a >= 0.0 && self.alpha > 0.0 && self.gamma >= 0.0;
        if !ok || ![self.a, self.c, self.big_a, self.alpha, self.gamma].iter().all(|v| v.is_finite()) {
            return Err(Error::arg(format!("invalid SPSA gains {self:?}")));
        }
        Ok(())
    }

    pub fn a_k(&self, k: usize) -> f64 {
        self.a / (self.big_a + k as f64 + 1.0).powf(self.alpha)
    }

    pub fn c_k(&self, k: usize) -> f64 {
        self.c / (k as f64 + 1.0).powf(self.gamma)
    }
}

fn rademacher(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// One SPSA update. Returns the new parameters and the two perturbed costs.
pub fn spsa_step<E>(
    params: &[f64],
    mut f: impl FnMut(&[f64]) -> std::result::Result<f64, E>,
    k: usize,
    gains: &SpsaSchedule,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<(Vec<f64>, f64, f64), E> {
    let ck = gains.c_k(k);
    let ak = gains.a_k(k);
    let delta = rademacher(rng, params.len());
    let plus: Vec<f64> = params.iter().zip(&delta).map(|(x, d)| x + ck * d).collect();
    let minus: Vec<f64> = params.iter().zip(&delta).map(|(x, d)| x - ck * d).collect();
    let ep = f(&plus)?;
    let em = f(&minus)?;
    let diff = (ep - em) / (2.0 * ck);
    let next = params
        .iter()
        .zip(&delta)
        .map(|(x, d)| x - ak * diff / d)
        .collect();
    Ok((next, ep, em))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsaSettings {
    /// Fixed `a`; `None` calibrates it so the first step moves about `target_step`.
    pub a: Option<f64>,
    pub c: f64,
    /// Stability constant; `None` uses 1% of the expected iteration count.
    pub big_a: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub target_step: f64,
    pub calibration_samples: usize,
}

impl Default for SpsaSettings {
    fn default() -> Self {
        SpsaSettings {
            a: None,
            c: 0.1,
            big_a: None,
            alpha: 0.602,
            gamma: 0.101,
            target_step: 0.1,
            calibration_samples: 5,
        }
    }
}

pub struct Spsa {
    settings: SpsaSettings,
    expected_iterations: usize,
    schedule: Option<SpsaSchedule>,
    bounds: Option<Bounds>,
    rng: ChaCha8Rng,
    k: usize,
}

impl Spsa {
    pub fn new(settings: SpsaSettings, expected_iterations: usize, bounds: Option<Bounds>, rng: ChaCha8Rng) -> Self {
        Spsa {
            settings,
            expected_iterations,
            schedule: None,
            bounds,
            rng,
            k: 0,
        }
    }

    pub fn schedule(&self) -> Option<SpsaSchedule> {
        self.schedule
    }

    fn calibrate(&mut self, ev: &mut Evaluator<'_>, x: &[f64]) -> std::result::Result<SpsaSchedule, Halt> {
        let s = self.settings;
        let big_a = s.big_a.unwrap_or(0.01 * self.expected_iterations as f64);
        let a = match s.a {
            Some(a) => a,
            None => {
                let mut mag = 0.0;
                let samples = s.calibration_samples.max(1);
                for _ in 0..samples {
                    let delta = rademacher(&mut self.rng, x.len());
                    let plus: Vec<f64> = x.iter().zip(&delta).map(|(v, d)| v + s.c * d).collect();
                    let minus: Vec<f64> = x.iter().zip(&delta).map(|(v, d)| v - s.c * d).collect();
                    mag += (ev.eval(&plus)? - ev.eval(&minus)?).abs() / (2.0 * s.c);
                }
                mag /= samples as f64;
                let scale = (big_a + 1.0).powf(s.alpha);
                if mag > 1e-12 {
                    s.target_step * scale / mag
                } else {
                    s.target_step * scale
                }
            }
        };
        Ok(SpsaSchedule {
            a,
            c: s.c,
            big_a,
            alpha: s.alpha,
            gamma: s.gamma,
        })
    }
}

impl Stepper for Spsa {
    fn step(
        &mut self,
        ev: &mut Evaluator<'_>,
        x: &mut Vec<f64>,
        fx: &mut f64,
    ) -> std::result::Result<StepStatus, Halt> {
        let schedule = match self.schedule {
            Some(s) => s,
            None => {
                let s = self.calibrate(ev, x)?;
                self.schedule = Some(s);
                s
            }
        };
        let (mut next, _, _) = spsa_step(x, |p| ev.eval(p), self.k, &schedule, &mut self.rng)?;
        project(&mut next, self.bounds.as_ref());
        let fnext = ev.eval(&next)?;
        self.k += 1;
        *x = next;
        *fx = fnext;
        Ok(StepStatus::Moved {
            evaluation: ev.last_index(),
        })
    }

    fn invalidate(&mut self) {}
}
