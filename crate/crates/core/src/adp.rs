//! Backward synthesis of approximate value functions.
//!
//! For `k = T-1, ..., 0` a fresh GRBF basis is sampled on `X̄`, the stage LP
//! is assembled against `Ṽ_{k+1}` (starting from `1_K`) and solved; the
//! weights define `Ṽ_k`.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::basis::{Grbf, GrbfStage};
use crate::bellman::{BellmanScratch, ValueFunction};
use crate::error::{Error, Result};
use crate::geometry::{Rect, RectUnion};
use crate::lp::{self, LpStatus};
use crate::problem::ReachAvoidProblem;
use crate::rng::{derive_seed, stream};
use crate::scenario::{draw_scenarios, implied_violation, sample_bound, ScenarioParams, ScenarioSet};

const TAG_BASIS: u64 = 1;
const TAG_SCENARIOS: u64 = 2;
const TAG_VIOLATION: u64 = 3;

/// Design parameters of the synthesis, one entry per stage `k = 0..T`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisParams {
    basis_counts: Vec<usize>,
    epsilons: Vec<f64>,
    betas: Vec<f64>,
    sample_counts: Option<Vec<usize>>,
    variance_box: Option<Rect>,
    seed: u64,
}

impl SynthesisParams {
    pub fn new(basis_counts: Vec<usize>, epsilons: Vec<f64>, betas: Vec<f64>, seed: u64) -> Result<Self> {
        let t = basis_counts.len();
        if t == 0 {
            return Err(Error::Input("synthesis needs at least one stage".into()));
        }
        if epsilons.len() != t || betas.len() != t {
            return Err(Error::Input(format!(
                "per-stage lists differ in length: {} basis counts, {} violation levels, {} confidence parameters",
                t,
                epsilons.len(),
                betas.len()
            )));
        }
        for k in 0..t {
            ScenarioParams::new(epsilons[k], betas[k], basis_counts[k])?;
        }
        Ok(SynthesisParams {
            basis_counts,
            epsilons,
            betas,
            sample_counts: None,
            variance_box: None,
            seed,
        })
    }

    /// The same `M`, `epsilon` and `beta` at every one of `horizon` stages.
    pub fn uniform(horizon: usize, m: usize, epsilon: f64, beta: f64, seed: u64) -> Result<Self> {
        SynthesisParams::new(vec![m; horizon], vec![epsilon; horizon], vec![beta; horizon], seed)
    }

    /// Uses the given scenario counts instead of the sample bound.
    pub fn with_sample_counts(mut self, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != self.basis_counts.len() {
            return Err(Error::Input(format!(
                "{} sample counts for {} stages",
                counts.len(),
                self.basis_counts.len()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::Input("sample counts must be >= 1".into()));
        }
        self.sample_counts = Some(counts);
        Ok(self)
    }

    /// Box the basis variances are drawn from, uniformly.
    pub fn with_variance_box(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Input("variance intervals must be positive".into()));
        }
        self.variance_box = Some(Rect::new(lower, upper)?);
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.basis_counts.len()
    }

    pub fn basis_count(&self, k: usize) -> usize {
        self.basis_counts[k]
    }

    pub fn epsilon(&self, k: usize) -> f64 {
        self.epsilons[k]
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.betas[k]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Scenario count for stage `k`: the override if present, else the sample bound.
    pub fn sample_count(&self, k: usize) -> usize {
        match &self.sample_counts {
            Some(c) => c[k],
            None => {
                let p = ScenarioParams::new(self.epsilons[k], self.betas[k], self.basis_counts[k])
                    .expect("validated at construction");
                sample_bound(&p) as usize
            }
        }
    }

    /// The declared variance box, or `[0.02 r_l^2, 0.095 r_l^2]` per
    /// dimension with `r_l` the half-width of `X̄`'s bounding box.
    pub fn variance_box(&self, xbar: &RectUnion) -> Result<Rect> {
        if let Some(b) = &self.variance_box {
            if b.dim() != xbar.dim() {
                return Err(Error::dim(xbar.dim(), b.dim()));
            }
            return Ok(b.clone());
        }
        let bound = xbar
            .bounding_rect()
            .ok_or_else(|| Error::Domain("empty approximation domain".into()))?;
        let r2: Vec<f64> = bound.half_widths().iter().map(|r| r * r).collect();
        Rect::new(
            r2.iter().map(|v| 0.02 * v).collect(),
            r2.iter().map(|v| 0.095 * v).collect(),
        )
    }

    fn check(&self, problem: &ReachAvoidProblem) -> Result<()> {
        if self.horizon() != problem.horizon() {
            return Err(Error::Input(format!(
                "parameters cover {} stages, problem horizon is {}",
                self.horizon(),
                problem.horizon()
            )));
        }
        self.variance_box(problem.xbar()).map(|_| ())
    }
}

/// `c_i = int_X̄ phi_i`, the objective under the unnormalized uniform measure on `X̄`.
pub fn objective_coefficients(stage: &GrbfStage, xbar: &RectUnion) -> Result<Vec<f64>> {
    stage.elements().iter().map(|g| g.box_integral(xbar)).collect()
}

/// `M` unit GRBFs with centers uniform on `X̄` and variances uniform on `variances`.
pub fn sample_basis<R: Rng + ?Sized>(
    k: usize,
    m: usize,
    xbar: &RectUnion,
    variances: &Rect,
    rng: &mut R,
) -> Result<GrbfStage> {
    let n = xbar.dim();
    let mut elements = Vec::with_capacity(m);
    for _ in 0..m {
        let mut c = vec![0.0; n];
        xbar.sample_into(rng, &mut c)?;
        let mut v = vec![0.0; n];
        variances.sample_into(rng, &mut v);
        elements.push(Grbf::unit(c, v)?);
    }
    GrbfStage::new(k, elements)
}

/// What happened at one stage of the synthesis.
#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub basis_count: usize,
    pub samples: usize,
    pub epsilon: f64,
    pub beta: f64,
    /// Violation level certified by `samples` at confidence `1 - beta`.
    pub certified_violation: Option<f64>,
    pub status: LpStatus,
    pub iterations: usize,
    pub objective: f64,
    pub feasibility: f64,
    pub gap: f64,
    pub seed: u64,
    /// Wall-clock seconds; absent for stacks read from disk.
    pub assemble_secs: Option<f64>,
    pub solve_secs: Option<f64>,
}

/// The approximations `Ṽ_0, ..., Ṽ_{T-1}` with `Ṽ_T = 1_K`.
#[derive(Clone, Debug)]
pub struct ValueStack {
    problem: ReachAvoidProblem,
    /// Indexed by stage; entry `T` is the terminal indicator.
    values: Vec<ValueFunction>,
    reports: Vec<StageReport>,
}

/// The constraint samples that [`synthesize`] uses at stage `k`.
pub fn stage_scenarios(problem: &ReachAvoidProblem, params: &SynthesisParams, k: usize) -> Result<ScenarioSet> {
    params.check(problem)?;
    if k >= params.horizon() {
        return Err(Error::Input(format!("stage {k} outside 0..{}", params.horizon())));
    }
    let seed = derive_seed(params.seed, &[k as u64]);
    draw_scenarios(problem, params.sample_count(k), &mut stream(seed, &[TAG_SCENARIOS]), seed)
}

pub fn synthesize(problem: &ReachAvoidProblem, params: &SynthesisParams) -> Result<ValueStack> {
    params.check(problem)?;
    let t = problem.horizon();
    let xbar = problem.xbar();
    let variances = params.variance_box(xbar)?;
    let mut values: Vec<Option<ValueFunction>> = vec![None; t + 1];
    values[t] = Some(problem.terminal_value());
    let mut reports = Vec::with_capacity(t);
    for k in (0..t).rev() {
        let seed = derive_seed(params.seed, &[k as u64]);
        let m = params.basis_count(k);
        let n = params.sample_count(k);
        let started = Instant::now();
        let mut stage = sample_basis(k, m, xbar, &variances, &mut stream(seed, &[TAG_BASIS]))?;
        let obj = objective_coefficients(&stage, xbar)?;
        let scenarios = draw_scenarios(problem, n, &mut stream(seed, &[TAG_SCENARIOS]), seed)?;
        let prev = values[k + 1].as_ref().expect("filled by the previous stage");
        let instance = lp::assemble(&stage, &scenarios, prev, problem.kernel(), &obj)?;
        let assembled = Instant::now();
        let sol = lp::solve(&instance)?;
        let solve_secs = assembled.elapsed().as_secs_f64();
        match sol.status {
            LpStatus::Unbounded => {
                return Err(Error::Unbounded {
                    stage: Some(k),
                    advice: format!(
                        "{n} scenarios do not pin down {m} weights; increase N or reduce M"
                    ),
                })
            }
            LpStatus::Infeasible => {
                return Err(Error::Numerical(format!("stage {k} LP reported infeasible")))
            }
            _ => {}
        }
        let cert = sol.certificate.expect("optimal solutions carry certificates");
        stage.set_weights(sol.w.clone())?;
        values[k] = Some(ValueFunction::from_stage(
            problem.target().clone(),
            problem.safe().clone(),
            stage,
        )?);
        reports.push(StageReport {
            stage: k,
            basis_count: m,
            samples: n,
            epsilon: params.epsilon(k),
            beta: params.beta(k),
            certified_violation: implied_violation(n as u64, params.beta(k), m),
            status: sol.status,
            iterations: sol.iterations,
            objective: sol.objective,
            feasibility: cert.feasibility,
            gap: cert.gap,
            seed,
            assemble_secs: Some((assembled - started).as_secs_f64()),
            solve_secs: Some(solve_secs),
        });
    }
    reports.reverse();
    Ok(ValueStack {
        problem: problem.clone(),
        values: values.into_iter().map(|v| v.expect("every stage filled")).collect(),
        reports,
    })
}

impl ValueStack {
    pub fn problem(&self) -> &ReachAvoidProblem {
        &self.problem
    }

    pub fn horizon(&self) -> usize {
        self.problem.horizon()
    }

    /// `Ṽ_k` for `k` in `0..=T`.
    pub fn value(&self, k: usize) -> Result<&ValueFunction> {
        self.values.get(k).ok_or_else(|| {
            Error::Input(format!("stage {k} outside 0..={}", self.horizon()))
        })
    }

    pub fn stage(&self, k: usize) -> Result<&GrbfStage> {
        self.value(k)?
            .stage()
            .ok_or_else(|| Error::Input(format!("stage {k} is the terminal indicator")))
    }

    /// Reports ordered by stage index.
    pub fn reports(&self) -> &[StageReport] {
        &self.reports
    }

    /// `Ṽ_k(x)`: `1` on `K`, `0` outside `K'`, the weighted basis sum on `X̄`.
    pub fn evaluate_value(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.value(k)?.eval(x)
    }

    /// Fraction of `count` fresh uniform pairs in `X̄ x U` with
    /// `Ṽ_k(x) < T_u[Ṽ_{k+1}](x)`.
    pub fn empirical_violation(&self, k: usize, count: usize, seed: u64) -> Result<f64> {
        if k >= self.horizon() {
            return Err(Error::Input(format!("stage {k} has no constraint")));
        }
        let scenarios = draw_scenarios(
            &self.problem,
            count,
            &mut stream(seed, &[TAG_VIOLATION, k as u64]),
            seed,
        )?;
        let here = self.value(k)?;
        let next = self.value(k + 1)?;
        let q = self.problem.kernel();
        let violated: usize = (0..count)
            .into_par_iter()
            .map_init(BellmanScratch::default, |scratch, s| -> Result<usize> {
                let x = scenarios.state(s);
                let lhs = here.eval(x)?;
                let rhs = next.apply_in(q, x, scenarios.control(s), scratch)?;
                Ok(usize::from(lhs < rhs))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok(violated as f64 / count as f64)
    }
}

const MAGIC: &str = "reach-adp value stack";
const VERSION: u32 = 1;

impl ValueStack {
    /// Text serialization. Numbers use the shortest representation that
    /// parses back to the same bits; timings are left out so that equal
    /// stacks always serialize identically.
    ///
    /// ```text
    /// reach-adp value stack
    /// version 1
    /// problem <sha-256 of the problem description>
    /// horizon <T>
    /// dim <n>
    /// stage <k> basis <M> samples <N> epsilon <e> beta <b> seed <s> status <status> iterations <i> objective <o> feasibility <f> gap <g>
    /// <c_1> .. <c_n> | <s_1> .. <s_n> | <scale> | <w>      (M lines)
    /// ...
    /// end
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let n = self.problem.state_dim();
        let _ = writeln!(out, "{MAGIC}\nversion {VERSION}\nproblem {}", self.problem.hash());
        let _ = writeln!(out, "horizon {}\ndim {n}", self.horizon());
        for r in &self.reports {
            let _ = writeln!(
                out,
                "stage {} basis {} samples {} epsilon {:?} beta {:?} seed {} status {} iterations {} objective {:?} feasibility {:?} gap {:?}",
                r.stage, r.basis_count, r.samples, r.epsilon, r.beta, r.seed, r.status,
                r.iterations, r.objective, r.feasibility, r.gap
            );
            let stage = self.values[r.stage].stage().expect("solved stage");
            let w = stage.weights().expect("solved stage");
            for (g, wi) in stage.elements().iter().zip(w) {
                let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
                let _ = writeln!(
                    out,
                    "{} | {} | {:?} | {:?}",
                    join(g.center()),
                    join(g.variance()),
                    g.scale(),
                    wi
                );
            }
        }
        out.push_str("end\n");
        out
    }

    /// Reads a stack written by [`to_text`](Self::to_text) for `problem`;
    /// refuses files produced for a different problem.
    pub fn from_text(text: &str, problem: &ReachAvoidProblem) -> Result<ValueStack> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            })
        };
        let (ln, magic) = next("header")?;
        if magic != MAGIC {
            return Err(perr(ln, "not a value stack file"));
        }
        let (ln, v) = next("version")?;
        let version: u32 = field(ln, v, "version")?;
        if version != VERSION {
            return Err(perr(ln, format!("unsupported version {version}")));
        }
        let (ln, h) = next("problem hash")?;
        let hash = h
            .strip_prefix("problem ")
            .ok_or_else(|| perr(ln, "expected `problem <hash>`"))?;
        if hash != problem.hash() {
            return Err(Error::Input(format!(
                "value stack was synthesized for problem {hash}, not {}",
                problem.hash()
            )));
        }
        let (ln, h) = next("horizon")?;
        let t: usize = field(ln, h, "horizon")?;
        let (ln, d) = next("dim")?;
        let n: usize = field(ln, d, "dim")?;
        if t != problem.horizon() || n != problem.state_dim() {
            return Err(perr(ln, "horizon or dimension disagrees with the problem"));
        }
        let mut values: Vec<Option<ValueFunction>> = vec![None; t + 1];
        values[t] = Some(problem.terminal_value());
        let mut reports = Vec::with_capacity(t);
        for _ in 0..t {
            let (ln, head) = next("stage header")?;
            let kv = keyed(ln, head)?;
            let get = |key: &str| -> Result<&str> {
                kv.iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| perr(ln, format!("missing `{key}`")))
            };
            let num = |key: &str| -> Result<f64> {
                get(key)?.parse().map_err(|_| perr(ln, format!("bad `{key}`")))
            };
            let int = |key: &str| -> Result<u64> {
                get(key)?.parse().map_err(|_| perr(ln, format!("bad `{key}`")))
            };
            let k = int("stage")? as usize;
            if k >= t || values[k].is_some() {
                return Err(perr(ln, format!("unexpected stage {k}")));
            }
            let m = int("basis")? as usize;
            let status = match get("status")? {
                "optimal" => LpStatus::Optimal,
                "degenerate-tie-broken" => LpStatus::DegenerateTieBroken,
                s => return Err(perr(ln, format!("stage status `{s}` is not a solved status"))),
            };
            let report = StageReport {
                stage: k,
                basis_count: m,
                samples: int("samples")? as usize,
                epsilon: num("epsilon")?,
                beta: num("beta")?,
                certified_violation: None,
                status,
                iterations: int("iterations")? as usize,
                objective: num("objective")?,
                feasibility: num("feasibility")?,
                gap: num("gap")?,
                seed: int("seed")?,
                assemble_secs: None,
                solve_secs: None,
            };
            let mut elements = Vec::with_capacity(m);
            let mut weights = Vec::with_capacity(m);
            for _ in 0..m {
                let (ln, row) = next("basis element")?;
                let parts: Vec<&str> = row.split(" | ").collect();
                if parts.len() != 4 {
                    return Err(perr(ln, "basis element needs `centers | variances | scale | weight`"));
                }
                let floats = |s: &str| -> Result<Vec<f64>> {
                    s.split(' ')
                        .map(|t| t.parse().map_err(|_| perr(ln, format!("bad number `{t}`"))))
                        .collect()
                };
                let c = floats(parts[0])?;
                let v = floats(parts[1])?;
                if c.len() != n || v.len() != n {
                    return Err(perr(ln, format!("expected {n} centers and variances")));
                }
                let scale: f64 = parts[2].parse().map_err(|_| perr(ln, "bad scale"))?;
                let w: f64 = parts[3].parse().map_err(|_| perr(ln, "bad weight"))?;
                elements.push(Grbf::new(c, v, scale).map_err(|e| perr(ln, e.to_string()))?);
                weights.push(w);
            }
            let stage = GrbfStage::new(k, elements)?.with_weights(weights)?;
            values[k] = Some(ValueFunction::from_stage(
                problem.target().clone(),
                problem.safe().clone(),
                stage,
            )?);
            let certified = implied_violation(report.samples as u64, report.beta, m);
            reports.push(StageReport {
                certified_violation: certified,
                ..report
            });
        }
        let (ln, end) = next("end")?;
        if end != "end" {
            return Err(perr(ln, "expected `end`"));
        }
        reports.sort_by_key(|r| r.stage);
        Ok(ValueStack {
            problem: problem.clone(),
            values: values.into_iter().map(|v| v.expect("all stages read")).collect(),
            reports,
        })
    }
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(ln: usize, line: &str, key: &str) -> Result<T> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .and_then(|r| r.parse().ok())
        .ok_or_else(|| perr(ln, format!("expected `{key} <value>`")))
}

fn keyed(ln: usize, line: &str) -> Result<Vec<(&str, &str)>> {
    let toks: Vec<&str> = line.split(' ').collect();
    if !toks.len().is_multiple_of(2) {
        return Err(perr(ln, "stage header must be key/value pairs"));
    }
    Ok(toks.chunks(2).map(|p| (p[0], p[1])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::fixtures::regulation;

    #[test]
    fn objective_of_a_narrow_element_on_a_split_interval() {
        let xbar = RectUnion::new(
            1,
            vec![
                Rect::new(vec![-1.0], vec![-0.1]).unwrap(),
                Rect::new(vec![0.1], vec![1.0]).unwrap(),
            ],
        )
        .unwrap();
        let stage = GrbfStage::new(0, vec![Grbf::unit(vec![0.0], vec![0.01]).unwrap()]).unwrap();
        let c = objective_coefficients(&stage, &xbar).unwrap();
        // 1 - P(|Z| <= 1)
        assert!((c[0] - 0.3173105078629141).abs() < 1e-12, "{}", c[0]);
    }

    #[test]
    fn default_variance_box_scales_with_domain() {
        let p = regulation(2, 0.01, 2);
        let params = SynthesisParams::uniform(2, 5, 0.2, 0.1, 0).unwrap();
        let b = params.variance_box(p.xbar()).unwrap();
        assert_eq!(b.lower(), &[0.02, 0.02]);
        assert_eq!(b.upper(), &[0.095, 0.095]);
    }

    #[test]
    fn params_validate_lengths_and_horizon() {
        assert!(SynthesisParams::new(vec![5, 5], vec![0.1], vec![0.1, 0.1], 0).is_err());
        assert!(SynthesisParams::uniform(2, 5, 1.5, 0.1, 0).is_err());
        let params = SynthesisParams::uniform(2, 5, 0.2, 0.1, 0).unwrap();
        assert!(params.clone().with_sample_counts(vec![10]).is_err());
        assert!(synthesize(&regulation(1, 0.01, 3), &params).is_err());
    }

    #[test]
    fn small_synthesis_round_trips() {
        let p = regulation(1, 0.01, 2);
        let params = SynthesisParams::uniform(2, 6, 0.2, 0.1, 9).unwrap();
        let stack = synthesize(&p, &params).unwrap();
        assert_eq!(stack.reports().len(), 2);
        assert_eq!(stack.evaluate_value(0, &[0.0]).unwrap(), 1.0);
        assert_eq!(stack.evaluate_value(1, &[2.0]).unwrap(), 0.0);
        let text = stack.to_text();
        let back = ValueStack::from_text(&text, &p).unwrap();
        assert_eq!(back.to_text(), text);
        for x in [-0.9, -0.3, 0.5] {
            assert_eq!(
                back.evaluate_value(0, &[x]).unwrap().to_bits(),
                stack.evaluate_value(0, &[x]).unwrap().to_bits()
            );
        }
        let other = regulation(1, 0.02, 2);
        assert!(matches!(ValueStack::from_text(&text, &other), Err(Error::Input(_))));
    }
}
