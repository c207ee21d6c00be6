//! Experiment configuration files.
//!
//! ```json
//! {
//!   "version": 1,
//!   "problem": {
//!     "state_dim": 2,
//!     "control_dim": 2,
//!     "state_box": { "lower": [-1, -1], "upper": [1, 1] },
//!     "control_box": { "lower": [-0.1, -0.1], "upper": [0.1, 0.1] },
//!     "target": [{ "lower": [-0.1, -0.1], "upper": [0.1, 0.1] }],
//!     "safe": [{ "lower": [-1, -1], "upper": [1, 1] }],
//!     "obstacles": [],
//!     "horizon": 5,
//!     "kernel": {
//!       "a": [[1, 0], [0, 1]],
//!       "b": [[1, 0], [0, 1]],
//!       "offset": [0, 0],
//!       "components": [{ "weight": 1, "offset": [0, 0], "variance": [0.01, 0.01] }]
//!     }
//!   },
//!   "synthesis": { "basis": 100, "epsilon": 0.05, "beta": 0.01, "samples": 3960, "seed": 1 },
//!   "evaluation": { "initial_conditions": 100, "rollouts": 100, "baseline": "lqg", "seed": 2 }
//! }
//! ```
//!
//! `basis`, `epsilon`, `beta` and `samples` take one value for all stages or
//! a list with one entry per stage. `samples` is optional and defaults to the
//! scenario bound. Obstacles are removed from the safe set.

use std::path::Path;

use reach_adp::adp::SynthesisParams;
use reach_adp::error::{Error, Result};
use reach_adp::geometry::{Rect, RectUnion};
use reach_adp::kernel::{AffineMeanMap, GaussianMixtureKernel};
use reach_adp::policy::ActOptions;
use reach_adp::problem::ReachAvoidProblem;
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        BoxSpec { lower, upper }
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        BoxSpec::new(vec![lo; n], vec![hi; n])
    }

    fn rect(&self, what: &str, dim: usize) -> Result<Rect> {
        if self.lower.len() != dim || self.upper.len() != dim {
            return Err(Error::Input(format!(
                "{what} has bounds of length {}/{}, expected {dim}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        Rect::new(self.lower.clone(), self.upper.clone())
            .map_err(|e| Error::Input(format!("{what}: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub offset: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Mixture of Gaussians with means `A x + B u + offset + component offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    pub components: Vec<ComponentSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub state_dim: usize,
    pub control_dim: usize,
    pub state_box: BoxSpec,
    pub control_box: BoxSpec,
    pub target: Vec<BoxSpec>,
    pub safe: Vec<BoxSpec>,
    #[serde(default)]
    pub obstacles: Vec<BoxSpec>,
    pub horizon: usize,
    pub kernel: KernelSpec,
}

/// One value for every stage, or one per stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerStage<T> {
    All(T),
    Each(Vec<T>),
}

impl<T: Clone> PerStage<T> {
    fn expand(&self, what: &str, horizon: usize) -> Result<Vec<T>> {
        match self {
            PerStage::All(v) => Ok(vec![v.clone(); horizon]),
            PerStage::Each(v) if v.len() == horizon => Ok(v.clone()),
            PerStage::Each(v) => Err(Error::Input(format!(
                "{what} lists {} stages, horizon is {horizon}",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    pub basis: PerStage<usize>,
    pub epsilon: PerStage<f64>,
    pub beta: PerStage<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<PerStage<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_box: Option<BoxSpec>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Lqg,
    Grid,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    /// Number of initial conditions drawn uniformly from `K' ∖ K`.
    pub initial_conditions: usize,
    pub rollouts: usize,
    pub baseline: Baseline,
    pub seed: u64,
    /// Fixed initial conditions; replaces the random draw when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<Vec<f64>>>,
    /// State cells per dimension for the grid baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_resolution: Option<usize>,
    /// Control points per dimension for the grid baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_control_resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act_starts: Option<usize>,
}

impl EvaluationSpec {
    pub fn act_options(&self) -> ActOptions {
        let mut o = ActOptions::default();
        if let Some(s) = self.act_starts {
            o.starts = s;
        }
        o
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub problem: ProblemSpec,
    pub synthesis: SynthesisSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Input(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        // fail early on anything the later stages would reject
        cfg.build_problem()?;
        cfg.synthesis_params()?;
        if let Some(ev) = &cfg.evaluation {
            cfg.check_evaluation(ev)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn build_problem(&self) -> Result<ReachAvoidProblem> {
        let p = &self.problem;
        let (n, m) = (p.state_dim, p.control_dim);
        if n == 0 || m == 0 {
            return Err(Error::Input("state and control dimensions must be >= 1".into()));
        }
        let state = p.state_box.rect("state box", n)?;
        let control = p.control_box.rect("control box", m)?;
        let target = union_of(&p.target, "target", n)?;
        let mut safe = union_of(&p.safe, "safe set", n)?;
        if !p.obstacles.is_empty() {
            let obstacles = union_of(&p.obstacles, "obstacle", n)?;
            if target.intersection_volume(&obstacles) > 0.0 {
                return Err(Error::Input("an obstacle overlaps the target set".into()));
            }
            safe = safe.subtract(&obstacles)?;
        }
        let kernel = self.build_kernel()?;
        ReachAvoidProblem::new(state, control, target, safe, p.horizon, kernel)
    }

    fn build_kernel(&self) -> Result<GaussianMixtureKernel> {
        let p = &self.problem;
        let k = &p.kernel;
        let (n, m) = (p.state_dim, p.control_dim);
        let a = matrix(&k.a, n, n, "kernel A")?;
        let b = matrix(&k.b, n, m, "kernel B")?;
        if k.offset.len() != n {
            return Err(Error::Input(format!("kernel offset has length {}, expected {n}", k.offset.len())));
        }
        if k.components.is_empty() {
            return Err(Error::Input("kernel needs at least one component".into()));
        }
        let base = AffineMeanMap::new(n, m, a, b, k.offset.clone())?;
        let parts = k
            .components
            .iter()
            .map(|c| (c.weight, c.offset.clone(), c.variance.clone()))
            .collect();
        GaussianMixtureKernel::affine(&base, parts)
    }

    pub fn synthesis_params(&self) -> Result<SynthesisParams> {
        let t = self.problem.horizon;
        let s = &self.synthesis;
        let mut params = SynthesisParams::new(
            s.basis.expand("basis", t)?,
            s.epsilon.expand("epsilon", t)?,
            s.beta.expand("beta", t)?,
            s.seed,
        )?;
        if let Some(n) = &s.samples {
            params = params.with_sample_counts(n.expand("samples", t)?)?;
        }
        if let Some(v) = &s.variance_box {
            params = params.with_variance_box(v.lower.clone(), v.upper.clone())?;
        }
        Ok(params)
    }

    fn check_evaluation(&self, ev: &EvaluationSpec) -> Result<()> {
        if ev.rollouts == 0 {
            return Err(Error::Input("evaluation needs at least one rollout".into()));
        }
        match &ev.initial_states {
            Some(xs) => {
                if xs.is_empty() {
                    return Err(Error::Input("initial_states is empty".into()));
                }
                if let Some(x) = xs.iter().find(|x| x.len() != self.problem.state_dim) {
                    return Err(Error::Input(format!(
                        "initial state {x:?} does not have dimension {}",
                        self.problem.state_dim
                    )));
                }
            }
            None if ev.initial_conditions == 0 => {
                return Err(Error::Input("initial_conditions must be >= 1".into()))
            }
            None => {}
        }
        if ev.baseline == Baseline::Grid && self.problem.state_dim > 3 {
            return Err(Error::Input("the grid baseline supports at most 3 state dimensions".into()));
        }
        Ok(())
    }
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize, what: &str) -> Result<Vec<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Input(format!("{what} must be {r}x{c}")));
    }
    Ok(rows.iter().flatten().copied().collect())
}

/// Union of possibly overlapping boxes as a disjoint rectangle union.
fn union_of(boxes: &[BoxSpec], what: &str, dim: usize) -> Result<RectUnion> {
    if boxes.is_empty() {
        return Err(Error::Input(format!("{what} needs at least one box")));
    }
    let mut acc = RectUnion::empty(dim);
    for b in boxes {
        let piece = RectUnion::single(b.rect(what, dim)?).subtract(&acc)?;
        let mut rects = acc.rects().to_vec();
        rects.extend(piece.rects().iter().cloned());
        acc = RectUnion::new(dim, rects)?;
    }
    Ok(acc)
}
