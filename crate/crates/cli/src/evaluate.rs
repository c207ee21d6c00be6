//! Closed-loop evaluation of a value stack against a baseline controller.

use reach_adp::adp::ValueStack;
use reach_adp::error::{Error, Result};
use reach_adp::oracle::{grid_dp, lqg_controller, GridController, GridValue, LqgController};
use reach_adp::policy::{empirical_probability, AdpController, Controller, Estimate};
use reach_adp::problem::ReachAvoidProblem;
use reach_adp::rng::{derive_seed, stream};

use crate::config::{Baseline, EvaluationSpec};
use crate::output::{num, CsvTable};

const TAG_INITIAL: u64 = 11;
const TAG_ROLLOUTS: u64 = 12;
const TAG_ACT: u64 = 13;

/// `count` initial conditions drawn uniformly from `K' ∖ K`.
pub fn initial_conditions(problem: &ReachAvoidProblem, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream(seed, &[TAG_INITIAL]);
    (0..count).map(|_| problem.xbar().sample_uniform(&mut rng)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub x0: Vec<f64>,
    /// `Ṽ_0(x0)`.
    pub predicted: f64,
    pub adp: Estimate,
    pub baseline: Option<Estimate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub baseline: Baseline,
    pub rows: Vec<EvalRow>,
}

impl Evaluation {
    /// Mean of `|Ṽ_0(x0) - V_ADP(x0)|`.
    pub fn mean_predicted_gap(&self) -> f64 {
        mean(self.rows.iter().map(|r| (r.predicted - r.adp.probability).abs()))
    }

    /// Mean of `|V_ADP(x0) - V_baseline(x0)|`, when a baseline ran.
    pub fn mean_baseline_gap(&self) -> Option<f64> {
        if self.baseline == Baseline::None {
            return None;
        }
        Some(mean(self.rows.iter().map(|r| {
            (r.adp.probability - r.baseline.expect("baseline ran").probability).abs()
        })))
    }

    pub fn mean_adp(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.adp.probability))
    }

    /// One row per initial condition and a final `mean` row.
    pub fn table(&self, dim: usize) -> CsvTable {
        let base = match self.baseline {
            Baseline::Lqg => "lqg",
            Baseline::Grid => "grid",
            Baseline::None => "none",
        };
        let mut header = vec!["row".to_string()];
        header.extend((1..=dim).map(|l| format!("x0_{l}")));
        header.extend(
            [
                "value_estimate",
                "v_adp",
                "v_adp_std_error",
                &format!("v_{base}"),
                &format!("v_{base}_std_error"),
                "abs_value_estimate_minus_v_adp",
                &format!("abs_v_adp_minus_v_{base}"),
            ]
            .map(String::from),
        );
        let mut t = CsvTable::new(header);
        for (i, r) in self.rows.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(r.x0.iter().map(|&v| num(v)));
            rec.push(num(r.predicted));
            rec.push(num(r.adp.probability));
            rec.push(num(r.adp.std_error));
            match r.baseline {
                Some(b) => {
                    rec.push(num(b.probability));
                    rec.push(num(b.std_error));
                }
                None => rec.extend([String::new(), String::new()]),
            }
            rec.push(num((r.predicted - r.adp.probability).abs()));
            rec.push(r.baseline.map_or(String::new(), |b| num((r.adp.probability - b.probability).abs())));
            t.push(rec);
        }
        let mut summary = vec!["mean".to_string()];
        summary.extend((0..dim).map(|_| String::new()));
        summary.push(num(mean(self.rows.iter().map(|r| r.predicted))));
        summary.push(num(self.mean_adp()));
        summary.push(String::new());
        match self.baseline {
            Baseline::None => summary.push(String::new()),
            _ => summary.push(num(mean(self.rows.iter().map(|r| r.baseline.unwrap().probability)))),
        }
        summary.push(String::new());
        summary.push(num(self.mean_predicted_gap()));
        summary.push(self.mean_baseline_gap().map_or(String::new(), num));
        t.push(summary);
        t
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

enum BaselineController {
    Lqg(Box<LqgController>),
    Grid(Box<GridValue>),
}

fn default_grid_resolution(dim: usize) -> usize {
    match dim {
        1 => 400,
        2 => 100,
        _ => 30,
    }
}

/// Rolls out the ADP policy, and the baseline if requested, from every
/// initial condition. Both controllers see the same noise at each initial
/// condition.
pub fn evaluate(stack: &ValueStack, spec: &EvaluationSpec) -> Result<Evaluation> {
    let problem = stack.problem();
    let states = match &spec.initial_states {
        Some(xs) => xs.clone(),
        None => initial_conditions(problem, spec.initial_conditions, spec.seed)?,
    };
    if spec.rollouts == 0 {
        return Err(Error::Input("evaluation needs at least one rollout".into()));
    }
    let adp = AdpController::new(stack, spec.act_options(), derive_seed(spec.seed, &[TAG_ACT]));
    let baseline = match spec.baseline {
        Baseline::Lqg => Some(BaselineController::Lqg(Box::new(lqg_controller(problem)?))),
        Baseline::Grid => {
            let n = problem.state_dim();
            let res = spec.grid_resolution.unwrap_or_else(|| default_grid_resolution(n));
            let cres = spec.grid_control_resolution.unwrap_or(21);
            Some(BaselineController::Grid(Box::new(grid_dp(
                problem,
                &vec![res; n],
                &vec![cres; problem.control_dim()],
            )?)))
        }
        Baseline::None => None,
    };
    let grid_ctrl = match &baseline {
        Some(BaselineController::Grid(g)) => Some(GridController::new(g)),
        _ => None,
    };
    let base_ctrl: Option<&dyn Controller> = match &baseline {
        Some(BaselineController::Lqg(l)) => Some(l.as_ref()),
        Some(BaselineController::Grid(_)) => grid_ctrl.as_ref().map(|g| g as &dyn Controller),
        None => None,
    };
    let mut rows = Vec::with_capacity(states.len());
    for (i, x0) in states.into_iter().enumerate() {
        let seed = derive_seed(spec.seed, &[TAG_ROLLOUTS, i as u64]);
        let predicted = stack.evaluate_value(0, &x0)?;
        let adp_est = empirical_probability(problem, &adp, &x0, spec.rollouts, seed)?;
        let base_est = match base_ctrl {
            Some(c) => Some(empirical_probability(problem, c, &x0, spec.rollouts, seed)?),
            None => None,
        };
        rows.push(EvalRow {
            x0,
            predicted,
            adp: adp_est,
            baseline: base_est,
        });
    }
    Ok(Evaluation {
        baseline: spec.baseline,
        rows,
    })
}
