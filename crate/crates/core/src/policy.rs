//! Controllers, closed-loop rollouts and empirical reach-avoid probabilities.

use rand::Rng;
use rayon::prelude::*;

use crate::adp::ValueStack;
use crate::bellman::{BellmanScratch, GradientMode, ValueFunction};
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::kernel::GaussianMixtureKernel;
use crate::problem::ReachAvoidProblem;
use crate::rng::{hash_point, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerKind {
    Adp,
    Lqg,
    Grid,
    Constant,
    User,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Adp => "adp",
            ControllerKind::Lqg => "lqg",
            ControllerKind::Grid => "grid",
            ControllerKind::Constant => "constant",
            ControllerKind::User => "user",
        }
    }
}

/// A time-varying state feedback `(k, x) -> u` with `u` in the control box.
pub trait Controller: Send + Sync {
    fn act(&self, k: usize, x: &[f64]) -> Vec<f64>;
    fn kind(&self) -> ControllerKind;
}

/// Always returns the same control.
#[derive(Clone, Debug)]
pub struct ConstantController {
    u: Vec<f64>,
}

impl ConstantController {
    pub fn new(u: Vec<f64>, control: &Rect) -> Result<Self> {
        if u.len() != control.dim() {
            return Err(Error::dim(control.dim(), u.len()));
        }
        let mut u = u;
        control.project(&mut u);
        Ok(ConstantController { u })
    }
}

impl Controller for ConstantController {
    fn act(&self, _k: usize, _x: &[f64]) -> Vec<f64> {
        self.u.clone()
    }

    fn kind(&self) -> ControllerKind {
        ControllerKind::Constant
    }
}

/// Wraps a closure; outputs are projected onto the control box.
pub struct FnController<F> {
    f: F,
    control: Rect,
}

impl<F: Fn(usize, &[f64]) -> Vec<f64> + Send + Sync> FnController<F> {
    pub fn new(control: Rect, f: F) -> Self {
        FnController { f, control }
    }
}

impl<F: Fn(usize, &[f64]) -> Vec<f64> + Send + Sync> Controller for FnController<F> {
    fn act(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let mut u = (self.f)(k, x);
        u.resize(self.control.dim(), 0.0);
        self.control.project(&mut u);
        u
    }

    fn kind(&self) -> ControllerKind {
        ControllerKind::User
    }
}

/// Settings of the control optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct ActOptions {
    /// Uniform random starts in addition to the box center.
    pub starts: usize,
    pub max_iterations: usize,
    /// Stop when `|P(u + grad) - u|_inf` falls below this.
    pub tolerance: f64,
    /// Replace the ascent by exhaustive search over this many points per
    /// control dimension.
    pub grid_resolution: Option<usize>,
    pub gradient: GradientMode,
}

impl Default for ActOptions {
    fn default() -> Self {
        ActOptions {
            starts: 10,
            max_iterations: 200,
            tolerance: 1e-7,
            grid_resolution: None,
            gradient: GradientMode::FiniteDifferenceFallback,
        }
    }
}

/// Maximizer of `u -> T_u[next](x)` over the control box.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub u: Vec<f64>,
    pub value: f64,
}

/// Multistart projected gradient ascent of `u -> T_u[next](x)` on `control`.
///
/// Each start takes steps `P(u + t g)`, `t` proposed by the Barzilai-Borwein
/// rule and halved until the Armijo condition holds; the best end point over
/// all starts wins, earlier starts winning ties.
pub fn maximize_backup<R: Rng + ?Sized>(
    next: &ValueFunction,
    q: &GaussianMixtureKernel,
    control: &Rect,
    x: &[f64],
    opts: &ActOptions,
    rng: &mut R,
) -> Result<Action> {
    let m = control.dim();
    let mut scratch = BellmanScratch::default();
    if let Some(res) = opts.grid_resolution {
        return grid_search(next, q, control, x, res.max(1), &mut scratch);
    }
    let mut starts = Vec::with_capacity(opts.starts + 1);
    starts.push(control.center());
    for _ in 0..opts.starts {
        starts.push(control.sample_uniform(rng));
    }
    let scale = control.half_widths().iter().fold(0.0_f64, |a, &h| a.max(h));
    let mut best: Option<Action> = None;
    let mut g = vec![0.0; m];
    let mut g_trial = vec![0.0; m];
    let mut trial = vec![0.0; m];
    for mut u in starts {
        let mut f = next.apply_with_gradient(q, x, &u, opts.gradient, &mut g, &mut scratch)?;
        let mut t = initial_step(&g, scale);
        for _ in 0..opts.max_iterations {
            // projected-gradient stationarity measure
            let mut station = 0.0_f64;
            for l in 0..m {
                let moved = (u[l] + g[l]).clamp(control.lower()[l], control.upper()[l]);
                station = station.max((moved - u[l]).abs());
            }
            if station < opts.tolerance {
                break;
            }
            let mut accepted = false;
            for _ in 0..40 {
                for l in 0..m {
                    trial[l] = (u[l] + t * g[l]).clamp(control.lower()[l], control.upper()[l]);
                }
                let ascent: f64 = (0..m).map(|l| g[l] * (trial[l] - u[l])).sum();
                if ascent <= 0.0 {
                    break;
                }
                let ft = next.apply_with_gradient(q, x, &trial, opts.gradient, &mut g_trial, &mut scratch)?;
                if ft >= f + 1e-4 * ascent {
                    // Barzilai-Borwein step from the secant pair
                    let mut ss = 0.0;
                    let mut sy = 0.0;
                    for l in 0..m {
                        let s = trial[l] - u[l];
                        ss += s * s;
                        sy += s * (g[l] - g_trial[l]);
                    }
                    t = if sy > 0.0 { ss / sy } else { 2.0 * t };
                    u.copy_from_slice(&trial);
                    g.copy_from_slice(&g_trial);
                    f = ft;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if best.as_ref().is_none_or(|b| f > b.value) {
            best = Some(Action { u, value: f });
        }
    }
    Ok(best.expect("at least the center start"))
}

fn initial_step(g: &[f64], scale: f64) -> f64 {
    let gmax = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if gmax > 0.0 && scale > 0.0 {
        scale / gmax
    } else {
        1.0
    }
}

fn grid_search(
    next: &ValueFunction,
    q: &GaussianMixtureKernel,
    control: &Rect,
    x: &[f64],
    res: usize,
    scratch: &mut BellmanScratch,
) -> Result<Action> {
    let m = control.dim();
    let total = res.checked_pow(m as u32).ok_or_else(|| {
        Error::Input(format!("control grid of {res}^{m} points is too large"))
    })?;
    let mut u = vec![0.0; m];
    let mut best: Option<Action> = None;
    for idx in 0..total {
        let mut rest = idx;
        for (l, ul) in u.iter_mut().enumerate() {
            let i = rest % res;
            rest /= res;
            let (lo, hi) = (control.lower()[l], control.upper()[l]);
            *ul = if res == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (res - 1) as f64
            };
        }
        let f = next.apply_in(q, x, &u, scratch)?;
        if best.as_ref().is_none_or(|b| f > b.value) {
            best = Some(Action { u: u.clone(), value: f });
        }
    }
    Ok(best.expect("grid has at least one point"))
}

/// The policy `argmax_u T_u[Ṽ_{k+1}](x)` read from a value stack.
pub struct AdpController<'a> {
    stack: &'a ValueStack,
    options: ActOptions,
    seed: u64,
}

impl<'a> AdpController<'a> {
    pub fn new(stack: &'a ValueStack, options: ActOptions, seed: u64) -> Self {
        AdpController { stack, options, seed }
    }

    /// Control and predicted value at stage `k`; the box center for states
    /// in `K` or outside `K'`, where the episode has already ended.
    pub fn act_with_value(&self, k: usize, x: &[f64]) -> Result<Action> {
        let p = self.stack.problem();
        if x.len() != p.state_dim() {
            return Err(Error::dim(p.state_dim(), x.len()));
        }
        if k >= p.horizon() {
            return Err(Error::Input(format!("no decision at stage {k} of {}", p.horizon())));
        }
        if p.target().contains_point(x) || !p.safe().contains_point(x) {
            return Ok(Action {
                u: p.control_box().center(),
                value: self.stack.evaluate_value(k, x)?,
            });
        }
        let mut rng = stream(self.seed, &[k as u64, hash_point(x)]);
        maximize_backup(
            self.stack.value(k + 1)?,
            p.kernel(),
            p.control_box(),
            x,
            &self.options,
            &mut rng,
        )
    }
}

impl Controller for AdpController<'_> {
    fn act(&self, k: usize, x: &[f64]) -> Vec<f64> {
        match self.act_with_value(k, x) {
            Ok(a) => a.u,
            Err(_) => self.stack.problem().control_box().center(),
        }
    }

    fn kind(&self) -> ControllerKind {
        ControllerKind::Adp
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    UnsafeExit,
    Timeout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    /// `x_0, ..., x_tau` (all `T + 1` states on timeout).
    pub trajectory: Vec<Vec<f64>>,
    pub outcome: Outcome,
    /// Step at which the target was reached or the safe set left.
    pub hitting_time: Option<usize>,
}

fn classify(problem: &ReachAvoidProblem, x: &[f64]) -> Option<Outcome> {
    if problem.target().contains_point(x) {
        Some(Outcome::Success)
    } else if !problem.safe().contains_point(x) {
        Some(Outcome::UnsafeExit)
    } else {
        None
    }
}

/// Closed-loop simulation for at most `T` steps, stopping on the first
/// entry into `K` or exit from `K'`.
pub fn rollout<R: Rng + ?Sized>(
    problem: &ReachAvoidProblem,
    ctrl: &dyn Controller,
    x0: &[f64],
    rng: &mut R,
) -> Result<RolloutResult> {
    if x0.len() != problem.state_dim() {
        return Err(Error::dim(problem.state_dim(), x0.len()));
    }
    let mut trajectory = vec![x0.to_vec()];
    if let Some(outcome) = classify(problem, x0) {
        return Ok(RolloutResult {
            trajectory,
            outcome,
            hitting_time: Some(0),
        });
    }
    let q = problem.kernel();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    for t in 0..problem.horizon() {
        let mut u = ctrl.act(t, &x);
        if u.len() != problem.control_dim() {
            return Err(Error::dim(problem.control_dim(), u.len()));
        }
        problem.control_box().project(&mut u);
        q.sample_into(&x, &u, rng, &mut next);
        x.copy_from_slice(&next);
        trajectory.push(x.clone());
        if let Some(outcome) = classify(problem, &x) {
            return Ok(RolloutResult {
                trajectory,
                outcome,
                hitting_time: Some(t + 1),
            });
        }
    }
    Ok(RolloutResult {
        trajectory,
        outcome: Outcome::Timeout,
        hitting_time: None,
    })
}

/// Success frequency over independent rollouts with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub probability: f64,
    pub std_error: f64,
    pub runs: usize,
}

/// Run `r` draws its noise from stream `(seed, r)`, so controllers compared
/// under one seed face the same noise.
pub fn empirical_probability(
    problem: &ReachAvoidProblem,
    ctrl: &dyn Controller,
    x0: &[f64],
    runs: usize,
    seed: u64,
) -> Result<Estimate> {
    if runs == 0 {
        return Err(Error::Input("need at least one rollout".into()));
    }
    if x0.len() != problem.state_dim() {
        return Err(Error::dim(problem.state_dim(), x0.len()));
    }
    if let Some(outcome) = classify(problem, x0) {
        let p = if outcome == Outcome::Success { 1.0 } else { 0.0 };
        return Ok(Estimate {
            probability: p,
            std_error: 0.0,
            runs,
        });
    }
    let successes: usize = (0..runs)
        .into_par_iter()
        .map(|r| -> Result<usize> {
            let res = rollout(problem, ctrl, x0, &mut stream(seed, &[r as u64]))?;
            Ok(usize::from(res.outcome == Outcome::Success))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let p = successes as f64 / runs as f64;
    Ok(Estimate {
        probability: p,
        std_error: (p * (1.0 - p) / runs as f64).sqrt(),
        runs,
    })
}
