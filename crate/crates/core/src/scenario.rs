//! Scenario sampling for the stage LPs.
//!
//! Enforcing the stage constraint only at `N` i.i.d. pairs `(x, u)` gives a
//! solution that violates it on a set of probability at most `epsilon`, with
//! confidence `1 - beta`, whenever
//!
//! ```text
//! sum_{i=0}^{M-1} C(N, i) epsilon^i (1 - epsilon)^(N - i) <= beta
//! ```
//!
//! where `M` is the number of decision variables.

use rand::Rng;

use crate::error::{Error, Result};
use crate::problem::ReachAvoidProblem;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioParams {
    epsilon: f64,
    beta: f64,
    decision_dim: usize,
}

impl ScenarioParams {
    pub fn new(epsilon: f64, beta: f64, decision_dim: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Input(format!("violation level {epsilon} not in (0,1)")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Input(format!("confidence parameter {beta} not in (0,1)")));
        }
        if decision_dim == 0 {
            return Err(Error::Input("decision dimension must be >= 1".into()));
        }
        Ok(ScenarioParams {
            epsilon,
            beta,
            decision_dim,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn decision_dim(&self) -> usize {
        self.decision_dim
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Natural log of `P[Bin(n, epsilon) <= m - 1]`.
///
/// Terms follow the recurrence `t_{i+1} = t_i (n - i) / (i + 1) * epsilon / (1 - epsilon)`
/// in log space, which stays finite for `n` in the tens of thousands.
pub fn log_binomial_tail(n: u64, epsilon: f64, m: usize) -> f64 {
    let m = m as u64;
    if n < m {
        return 0.0;
    }
    let log_ratio = epsilon.ln() - (-epsilon).ln_1p();
    let mut log_term = n as f64 * (-epsilon).ln_1p();
    let mut acc = f64::NEG_INFINITY;
    for i in 0..m {
        acc = log_add_exp(acc, log_term);
        log_term += ((n - i) as f64).ln() - ((i + 1) as f64).ln() + log_ratio;
    }
    acc.min(0.0)
}

pub fn binomial_tail(n: u64, epsilon: f64, m: usize) -> f64 {
    log_binomial_tail(n, epsilon, m).exp()
}

/// Smallest `N` whose binomial tail is at most `beta`.
///
/// The tail is nonincreasing in `N`, so the search doubles `N` until the
/// condition holds and then bisects.
pub fn sample_bound(p: &ScenarioParams) -> u64 {
    let log_beta = p.beta.ln();
    let ok = |n: u64| log_binomial_tail(n, p.epsilon, p.decision_dim) <= log_beta;
    let mut hi = (p.decision_dim as u64).max(1);
    while !ok(hi) {
        hi = hi.checked_mul(2).expect("sample bound overflow");
    }
    let mut lo = hi / 2;
    // invariant: !ok(lo) (or lo == 0), ok(hi)
    if lo > 0 && ok(lo) {
        lo = 0;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Smallest violation level certified by `n` samples at confidence `1 - beta`
/// for `m` decision variables, or `None` when `n < m`.
pub fn implied_violation(n: u64, beta: f64, m: usize) -> Option<f64> {
    if n < m as u64 || !(beta > 0.0 && beta < 1.0) {
        return None;
    }
    let log_beta = beta.ln();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if log_binomial_tail(n, mid, m) <= log_beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Constraint sample set: pairs `(x^s, u^s)` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSet {
    state_dim: usize,
    control_dim: usize,
    states: Vec<f64>,
    controls: Vec<f64>,
    seed: u64,
}

impl ScenarioSet {
    pub fn from_pairs(
        state_dim: usize,
        control_dim: usize,
        pairs: &[(Vec<f64>, Vec<f64>)],
        seed: u64,
    ) -> Result<Self> {
        let mut states = Vec::with_capacity(pairs.len() * state_dim);
        let mut controls = Vec::with_capacity(pairs.len() * control_dim);
        for (x, u) in pairs {
            if x.len() != state_dim {
                return Err(Error::dim(state_dim, x.len()));
            }
            if u.len() != control_dim {
                return Err(Error::dim(control_dim, u.len()));
            }
            states.extend_from_slice(x);
            controls.extend_from_slice(u);
        }
        Ok(ScenarioSet {
            state_dim,
            control_dim,
            states,
            controls,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self, s: usize) -> &[f64] {
        &self.states[s * self.state_dim..(s + 1) * self.state_dim]
    }

    pub fn control(&self, s: usize) -> &[f64] {
        &self.controls[s * self.control_dim..(s + 1) * self.control_dim]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        self.states
            .chunks_exact(self.state_dim)
            .zip(self.controls.chunks_exact(self.control_dim))
    }
}

/// `n` i.i.d. pairs, `x` uniform on `K' ∖ K` and `u` uniform on the control box.
pub fn draw_scenarios<R: Rng + ?Sized>(
    problem: &ReachAvoidProblem,
    n: usize,
    rng: &mut R,
    seed: u64,
) -> Result<ScenarioSet> {
    if n == 0 {
        return Err(Error::Input("scenario count must be >= 1".into()));
    }
    let nx = problem.state_dim();
    let nu = problem.control_dim();
    let mut states = vec![0.0; n * nx];
    let mut controls = vec![0.0; n * nu];
    for (x, u) in states.chunks_exact_mut(nx).zip(controls.chunks_exact_mut(nu)) {
        problem.xbar().sample_into(rng, x)?;
        problem.control_box().sample_into(rng, u);
    }
    Ok(ScenarioSet {
        state_dim: nx,
        control_dim: nu,
        states,
        controls,
        seed,
    })
}
