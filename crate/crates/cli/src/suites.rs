//! Shipped experiment suites: origin regulation without (example1) and with
//! (example2) obstacles, at several scales.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use reach_adp::adp::{synthesize, ValueStack};
use reach_adp::error::{Error, Result};
use reach_adp::geometry::Rect;
use reach_adp::problem::ReachAvoidProblem;
use reach_adp::rng::{derive_seed, stream};
use reach_adp::scenario::{sample_bound, ScenarioParams};
use serde::Serialize;

use crate::config::{
    Baseline, BoxSpec, ComponentSpec, EvaluationSpec, ExperimentConfig, KernelSpec, PerStage,
    ProblemSpec, SynthesisSpec, CONFIG_VERSION,
};
use crate::evaluate::{evaluate, Evaluation};
use crate::output::{num, write_json, CsvTable};

pub const EPSILON: f64 = 0.05;
pub const BETA: f64 = 0.01;
pub const NOISE_VARIANCE: f64 = 0.01;

/// `2 (M - 1) / epsilon`, the sample counts listed with the reference results.
pub fn linear_sample_count(m: usize, epsilon: f64) -> usize {
    (2.0 * (m as f64 - 1.0) / epsilon).round().max(1.0) as usize
}

pub fn exact_sample_count(m: usize, epsilon: f64, beta: f64) -> usize {
    sample_bound(&ScenarioParams::new(epsilon, beta, m).expect("valid parameters")) as usize
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect()
}

fn regulation_problem(n: usize, horizon: usize, obstacles: Vec<BoxSpec>) -> ProblemSpec {
    ProblemSpec {
        state_dim: n,
        control_dim: n,
        state_box: BoxSpec::cube(n, -1.0, 1.0),
        control_box: BoxSpec::cube(n, -0.1, 0.1),
        target: vec![BoxSpec::cube(n, -0.1, 0.1)],
        safe: vec![BoxSpec::cube(n, -1.0, 1.0)],
        obstacles,
        horizon,
        kernel: KernelSpec {
            a: identity(n),
            b: identity(n),
            offset: vec![0.0; n],
            components: vec![ComponentSpec {
                weight: 1.0,
                offset: vec![0.0; n],
                variance: vec![NOISE_VARIANCE; n],
            }],
        },
    }
}

fn synthesis_spec(m: usize, samples: usize, seed: u64) -> SynthesisSpec {
    SynthesisSpec {
        basis: PerStage::All(m),
        epsilon: PerStage::All(EPSILON),
        beta: PerStage::All(BETA),
        samples: Some(PerStage::All(samples)),
        variance_box: None,
        seed,
    }
}

/// `x+ = x + u + w` on `[-1,1]^n`, `K = U = [-0.1,0.1]^n`, `T = 5`.
pub fn example1_config(n: usize, m: usize, samples: usize, seed: u64, evaluation: Option<EvaluationSpec>) -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION,
        problem: regulation_problem(n, 5, vec![]),
        synthesis: synthesis_spec(m, samples, seed),
        evaluation,
    }
}

/// Obstacles of the second suite: three boxes in the first two coordinates,
/// spanning `[-0.6, 0.6]` in the remaining ones.
pub fn example2_obstacles(n: usize) -> Result<Vec<BoxSpec>> {
    if n < 2 {
        return Err(Error::Input("the obstacle suite needs at least 2 state dimensions".into()));
    }
    let planar = [
        ([0.3, -0.3], [0.5, 0.3]),
        ([-0.6, 0.1], [-0.3, 0.5]),
        ([-0.25, -0.65], [0.25, -0.35]),
    ];
    Ok(planar
        .iter()
        .map(|(lo, hi)| {
            let mut lower = vec![-0.6; n];
            let mut upper = vec![0.6; n];
            lower[..2].copy_from_slice(lo);
            upper[..2].copy_from_slice(hi);
            BoxSpec::new(lower, upper)
        })
        .collect())
}

/// Whether the segment from `x` to the origin meets `r`.
pub fn segment_to_origin_hits(x: &[f64], r: &Rect) -> bool {
    // points x (1 - t), t in [0, 1]
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    for l in 0..x.len() {
        let (lo, hi) = (r.lower()[l], r.upper()[l]);
        if x[l] == 0.0 {
            if lo > 0.0 || hi < 0.0 {
                return false;
            }
            continue;
        }
        let a = 1.0 - lo / x[l];
        let b = 1.0 - hi / x[l];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Uniform draws from `K' ∖ K` whose straight path to the origin crosses an obstacle.
pub fn blocked_initial_states(
    problem: &ReachAvoidProblem,
    obstacles: &[BoxSpec],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let rects = obstacles
        .iter()
        .map(|b| Rect::new(b.lower.clone(), b.upper.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = stream(seed, &[21]);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count {
        tries += 1;
        if tries > 1_000_000 {
            return Err(Error::Domain("no initial state with a blocked path found".into()));
        }
        let x = problem.xbar().sample_uniform(&mut rng)?;
        if rects.iter().any(|r| segment_to_origin_hits(&x, r)) {
            out.push(x);
        }
    }
    Ok(out)
}

/// The obstacle variant with horizon 7. Initial states are fixed in the
/// evaluation block when one is given.
pub fn example2_config(n: usize, m: usize, samples: usize, seed: u64, evaluation: Option<EvaluationSpec>) -> Result<ExperimentConfig> {
    let obstacles = example2_obstacles(n)?;
    let mut cfg = ExperimentConfig {
        version: CONFIG_VERSION,
        problem: regulation_problem(n, 7, obstacles.clone()),
        synthesis: synthesis_spec(m, samples, seed),
        evaluation: None,
    };
    if let Some(mut ev) = evaluation {
        if ev.initial_states.is_none() {
            let problem = cfg.build_problem()?;
            ev.initial_states = Some(blocked_initial_states(&problem, &obstacles, ev.initial_conditions, ev.seed)?);
        }
        cfg.evaluation = Some(ev);
    }
    Ok(cfg)
}

pub fn evaluation_spec(initial_conditions: usize, rollouts: usize, seed: u64) -> EvaluationSpec {
    EvaluationSpec {
        initial_conditions,
        rollouts,
        baseline: Baseline::Lqg,
        seed,
        initial_states: None,
        grid_resolution: None,
        grid_control_resolution: None,
        act_starts: None,
    }
}

/// A synthesized and evaluated configuration.
pub struct Experiment {
    pub stack: ValueStack,
    pub evaluation: Evaluation,
    pub assemble_secs: f64,
    pub solve_secs: f64,
    pub total_secs: f64,
}

/// Synthesizes, then evaluates with the config's evaluation block.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let started = Instant::now();
    let problem = cfg.build_problem()?;
    let stack = synthesize(&problem, &cfg.synthesis_params()?)?;
    let spec = cfg
        .evaluation
        .as_ref()
        .ok_or_else(|| Error::Input("config has no evaluation block".into()))?;
    let evaluation = evaluate(&stack, spec)?;
    let assemble_secs = stack.reports().iter().filter_map(|r| r.assemble_secs).sum();
    let solve_secs = stack.reports().iter().filter_map(|r| r.solve_secs).sum();
    Ok(Experiment {
        stack,
        evaluation,
        assemble_secs,
        solve_secs,
        total_secs: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Example1,
    Example2,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" => Ok(Suite::Example1),
            "example2" => Ok(Suite::Example2),
            _ => Err(Error::Input(format!("unknown suite `{s}` (expected example1 or example2)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Smoke,
    Desk,
    Full,
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Scale::Smoke),
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            _ => Err(Error::Input(format!("unknown scale `{s}` (expected smoke, desk or full)"))),
        }
    }
}

/// Sizes of one benchmark run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plan {
    /// State dimensions of the parameter table, each with its basis count.
    pub table: Vec<(usize, usize)>,
    pub sweep_dim: usize,
    pub basis_sweep: Vec<usize>,
    /// Basis count and scenario counts of the sample sweep (first suite only).
    pub sample_sweep: Option<(usize, Vec<usize>)>,
    pub initial_conditions: usize,
    pub rollouts: usize,
}

impl Plan {
    pub fn new(suite: Suite, scale: Scale) -> Plan {
        let ex1 = suite == Suite::Example1;
        match scale {
            Scale::Smoke => Plan {
                table: vec![if ex1 { (1, 10) } else { (2, 20) }],
                sweep_dim: if ex1 { 1 } else { 2 },
                basis_sweep: if ex1 { vec![6, 10] } else { vec![10, 20] },
                sample_sweep: ex1.then(|| (10, vec![200, 400])),
                initial_conditions: 4,
                rollouts: 16,
            },
            Scale::Desk => Plan {
                table: vec![(2, 100)],
                sweep_dim: 2,
                basis_sweep: vec![50, 100, 200],
                sample_sweep: ex1.then(|| (100, vec![400, 4000, 40000])),
                initial_conditions: 100,
                rollouts: 100,
            },
            Scale::Full => Plan {
                table: vec![(2, 100), (3, 500), (4, 1000)],
                sweep_dim: 3,
                basis_sweep: vec![50, 100, 200, 500, 1000],
                sample_sweep: ex1.then(|| (500, vec![400, 4000, 40000])),
                initial_conditions: 100,
                rollouts: 100,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.table.is_empty() || self.basis_sweep.is_empty() {
            return Err(Error::Input("benchmark sweeps must not be empty".into()));
        }
        if let Some((_, s)) = &self.sample_sweep {
            if s.is_empty() {
                return Err(Error::Input("benchmark sweeps must not be empty".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ManifestRun {
    pub file: String,
    pub state_dim: usize,
    pub basis: usize,
    pub samples: usize,
    pub synthesis_seed: u64,
    pub evaluation_seed: u64,
    pub status: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub suite: Suite,
    pub scale: Scale,
    pub seed: u64,
    pub plan: Plan,
    pub files: Vec<String>,
    pub runs: Vec<ManifestRun>,
    pub total_seconds: f64,
}

fn build_config(suite: Suite, n: usize, m: usize, samples: usize, seed: u64, ev: EvaluationSpec) -> Result<ExperimentConfig> {
    match suite {
        Suite::Example1 => Ok(example1_config(n, m, samples, seed, Some(ev))),
        Suite::Example2 => example2_config(n, m, samples, seed, Some(ev)),
    }
}

/// Outcome of one benchmark configuration; `None` metrics when the stage
/// LPs were unbounded.
struct RunResult {
    experiment: Option<Experiment>,
    status: String,
    seconds: f64,
}

fn run_one(cfg: &ExperimentConfig) -> Result<RunResult> {
    let started = Instant::now();
    match run_experiment(cfg) {
        Ok(e) => Ok(RunResult {
            experiment: Some(e),
            status: "ok".into(),
            seconds: started.elapsed().as_secs_f64(),
        }),
        Err(Error::Unbounded { stage, .. }) => Ok(RunResult {
            experiment: None,
            status: format!("unbounded-at-stage-{}", stage.map_or("?".into(), |s| s.to_string())),
            seconds: started.elapsed().as_secs_f64(),
        }),
        Err(e) => Err(e),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), num)
}

/// Runs a suite and writes its CSV files into `out_dir`.
pub fn run_benchmark(suite: Suite, scale: Scale, plan: &Plan, out_dir: &Path, seed: u64) -> Result<Manifest> {
    plan.validate()?;
    let started = Instant::now();
    let prefix = match suite {
        Suite::Example1 => "example1",
        Suite::Example2 => "example2",
    };
    let baseline_col = "mean_abs_VADP_minus_VLQG";
    let mut runs = Vec::new();
    let mut files = Vec::new();
    let eval_seed = |n: usize| derive_seed(seed, &[2, n as u64]);
    let synth_seed = |table: u64, n: usize, i: usize| derive_seed(seed, &[1, table, n as u64, i as u64]);

    let mut params = CsvTable::with_columns(&[
        "dim_XU",
        "M_k",
        "N_k",
        "N_k_exact_bound",
        "epsilon_k",
        "one_minus_beta_k",
        "mean_abs_V0_minus_VADP",
        baseline_col,
        "constr_time_sec",
        "lp_time_sec",
        "status",
    ]);
    let params_file = format!("{prefix}_parameters.csv");
    for (i, &(n, m)) in plan.table.iter().enumerate() {
        let samples = linear_sample_count(m, EPSILON);
        let ev = evaluation_spec(plan.initial_conditions, plan.rollouts, eval_seed(n));
        let s = synth_seed(0, n, i);
        let r = run_one(&build_config(suite, n, m, samples, s, ev)?)?;
        let e = r.experiment.as_ref();
        params.push(vec![
            (2 * n).to_string(),
            m.to_string(),
            samples.to_string(),
            exact_sample_count(m, EPSILON, BETA).to_string(),
            num(EPSILON),
            num(1.0 - BETA),
            opt(e.map(|e| e.evaluation.mean_predicted_gap())),
            opt(e.and_then(|e| e.evaluation.mean_baseline_gap())),
            opt(e.map(|e| e.assemble_secs)),
            opt(e.map(|e| e.solve_secs)),
            r.status.clone(),
        ]);
        runs.push(manifest_run(&params_file, n, m, samples, s, eval_seed(n), &r));
    }
    params.write(&out_dir.join(&params_file))?;
    files.push(params_file);

    let mut sweep = CsvTable::with_columns(&[
        "dim_XU",
        "M_k",
        "N_k",
        baseline_col,
        "mean_abs_V0_minus_VADP",
        "constr_time_sec",
        "lp_time_sec",
        "status",
    ]);
    let sweep_file = format!("{prefix}_basis_sweep.csv");
    let n = plan.sweep_dim;
    for (i, &m) in plan.basis_sweep.iter().enumerate() {
        let samples = linear_sample_count(m, EPSILON);
        let ev = evaluation_spec(plan.initial_conditions, plan.rollouts, eval_seed(n));
        let s = synth_seed(1, n, i);
        let r = run_one(&build_config(suite, n, m, samples, s, ev)?)?;
        let e = r.experiment.as_ref();
        sweep.push(vec![
            (2 * n).to_string(),
            m.to_string(),
            samples.to_string(),
            opt(e.and_then(|e| e.evaluation.mean_baseline_gap())),
            opt(e.map(|e| e.evaluation.mean_predicted_gap())),
            opt(e.map(|e| e.assemble_secs)),
            opt(e.map(|e| e.solve_secs)),
            r.status.clone(),
        ]);
        runs.push(manifest_run(&sweep_file, n, m, samples, s, eval_seed(n), &r));
    }
    sweep.write(&out_dir.join(&sweep_file))?;
    files.push(sweep_file);

    if let Some((m, counts)) = &plan.sample_sweep {
        let mut table = CsvTable::with_columns(&[
            "dim_XU",
            "Samples",
            "M_k",
            baseline_col,
            "mean_abs_V0_minus_VADP",
            "empirical_violation",
            "constr_time_sec",
            "lp_time_sec",
            "status",
        ]);
        let file = format!("{prefix}_sample_sweep.csv");
        for (i, &samples) in counts.iter().enumerate() {
            let ev = evaluation_spec(plan.initial_conditions, plan.rollouts, eval_seed(n));
            let s = synth_seed(2, n, i);
            let r = run_one(&build_config(suite, n, *m, samples, s, ev)?)?;
            let e = r.experiment.as_ref();
            let violation = match e {
                Some(e) => Some(worst_violation(&e.stack, 10_000, derive_seed(seed, &[3, i as u64]))?),
                None => None,
            };
            table.push(vec![
                (2 * n).to_string(),
                samples.to_string(),
                m.to_string(),
                opt(e.and_then(|e| e.evaluation.mean_baseline_gap())),
                opt(e.map(|e| e.evaluation.mean_predicted_gap())),
                opt(violation),
                opt(e.map(|e| e.assemble_secs)),
                opt(e.map(|e| e.solve_secs)),
                r.status.clone(),
            ]);
            runs.push(manifest_run(&file, n, *m, samples, s, eval_seed(n), &r));
        }
        table.write(&out_dir.join(&file))?;
        files.push(file);
    }

    let manifest = Manifest {
        suite,
        scale,
        seed,
        plan: plan.clone(),
        files,
        runs,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(manifest)
}

/// Writes the manifest of a finished run.
pub fn write_manifest(manifest: &Manifest, out_dir: &Path) -> Result<()> {
    write_json(&out_dir.join("manifest.json"), manifest)
}

fn manifest_run(file: &str, n: usize, m: usize, samples: usize, s: u64, e: u64, r: &RunResult) -> ManifestRun {
    ManifestRun {
        file: file.to_string(),
        state_dim: n,
        basis: m,
        samples,
        synthesis_seed: s,
        evaluation_seed: e,
        status: r.status.clone(),
        seconds: r.seconds,
    }
}

/// Largest per-stage fraction of fresh pairs violating the stage constraint.
pub fn worst_violation(stack: &ValueStack, count: usize, seed: u64) -> Result<f64> {
    let mut worst = 0.0_f64;
    for k in 0..stack.horizon() {
        worst = worst.max(stack.empirical_violation(k, count, seed)?);
    }
    Ok(worst)
}
