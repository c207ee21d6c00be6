//! The command implementations behind the `reach-adp` binary.

use std::path::{Path, PathBuf};

use reach_adp::adp::{synthesize, ValueStack};
use reach_adp::error::{Error, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::evaluate::evaluate;
use crate::output::{write_file, write_json};
use crate::suites::{exact_sample_count, run_benchmark, write_manifest, Plan, Scale, Suite};

pub const STACK_FILE: &str = "value_stack.txt";
pub const REPORT_FILE: &str = "synthesis_report.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const EVALUATION_FILE: &str = "evaluation.csv";
pub const EVALUATION_SUMMARY_FILE: &str = "evaluation_summary.json";

/// Process exit status for an error: 2 for invalid input, 3 for numerical
/// failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() || matches!(e, Error::Unsupported(_)) {
        2
    } else if e.is_numerical() {
        3
    } else {
        1
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageSummary {
    pub stage: usize,
    pub basis: usize,
    pub samples: usize,
    pub exact_sample_bound: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub certified_violation: Option<f64>,
    pub status: String,
    pub iterations: usize,
    pub objective: f64,
    pub feasibility: f64,
    pub gap: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthesisReport {
    pub problem_hash: String,
    pub horizon: usize,
    pub seed: u64,
    pub stages: Vec<StageSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTimings {
    pub stage: usize,
    pub assemble_secs: Option<f64>,
    pub solve_secs: Option<f64>,
}

pub fn synthesis_report(stack: &ValueStack, seed: u64) -> SynthesisReport {
    SynthesisReport {
        problem_hash: stack.problem().hash(),
        horizon: stack.horizon(),
        seed,
        stages: stack
            .reports()
            .iter()
            .map(|r| StageSummary {
                stage: r.stage,
                basis: r.basis_count,
                samples: r.samples,
                exact_sample_bound: exact_sample_count(r.basis_count, r.epsilon, r.beta),
                epsilon: r.epsilon,
                beta: r.beta,
                certified_violation: r.certified_violation,
                status: r.status.to_string(),
                iterations: r.iterations,
                objective: r.objective,
                feasibility: r.feasibility,
                gap: r.gap,
                seed: r.seed,
            })
            .collect(),
    }
}

fn load_config(path: &Path, seed: Option<u64>, evaluation_seed: bool) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        if evaluation_seed {
            if let Some(ev) = cfg.evaluation.as_mut() {
                ev.seed = s;
            }
        } else {
            cfg.synthesis.seed = s;
        }
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::from)
}

/// Writes the value stack, a deterministic report and the stage timings.
/// Nothing is written unless synthesis succeeds.
pub fn cmd_synthesize(config: &Path, seed: Option<u64>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg = load_config(config, seed, false)?;
    let problem = cfg.build_problem()?;
    let params = cfg.synthesis_params()?;
    let stack = synthesize(&problem, &params)?;
    ensure_dir(out_dir)?;
    let stack_path = out_dir.join(STACK_FILE);
    write_file(&stack_path, &stack.to_text())?;
    let report_path = out_dir.join(REPORT_FILE);
    write_json(&report_path, &synthesis_report(&stack, params.seed()))?;
    let timings: Vec<StageTimings> = stack
        .reports()
        .iter()
        .map(|r| StageTimings {
            stage: r.stage,
            assemble_secs: r.assemble_secs,
            solve_secs: r.solve_secs,
        })
        .collect();
    let timings_path = out_dir.join(TIMINGS_FILE);
    write_json(&timings_path, &timings)?;
    Ok(vec![stack_path, report_path, timings_path])
}

#[derive(Clone, Debug, Serialize)]
pub struct EvaluationSummary {
    pub problem_hash: String,
    pub initial_conditions: usize,
    pub rollouts: usize,
    pub baseline: String,
    pub seed: u64,
    pub mean_value_estimate: f64,
    pub mean_v_adp: f64,
    pub mean_abs_value_estimate_minus_v_adp: f64,
    pub mean_abs_v_adp_minus_baseline: Option<f64>,
}

/// Reads a stack, checks it against the config's problem and writes the
/// per-initial-condition CSV and a JSON summary.
pub fn cmd_evaluate(config: &Path, stack_path: &Path, seed: Option<u64>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg = load_config(config, seed, true)?;
    let problem = cfg.build_problem()?;
    let spec = cfg
        .evaluation
        .clone()
        .ok_or_else(|| Error::Input("config has no evaluation block".into()))?;
    let text = std::fs::read_to_string(stack_path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", stack_path.display())))?;
    let stack = ValueStack::from_text(&text, &problem)?;
    let ev = evaluate(&stack, &spec)?;
    ensure_dir(out_dir)?;
    let csv_path = out_dir.join(EVALUATION_FILE);
    ev.table(problem.state_dim()).write(&csv_path)?;
    let summary = EvaluationSummary {
        problem_hash: problem.hash(),
        initial_conditions: ev.rows.len(),
        rollouts: spec.rollouts,
        baseline: serde_json::to_value(spec.baseline)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        seed: spec.seed,
        mean_value_estimate: ev.rows.iter().map(|r| r.predicted).sum::<f64>() / ev.rows.len() as f64,
        mean_v_adp: ev.mean_adp(),
        mean_abs_value_estimate_minus_v_adp: ev.mean_predicted_gap(),
        mean_abs_v_adp_minus_baseline: ev.mean_baseline_gap(),
    };
    let summary_path = out_dir.join(EVALUATION_SUMMARY_FILE);
    write_json(&summary_path, &summary)?;
    Ok(vec![csv_path, summary_path])
}

pub fn cmd_benchmark(suite: Suite, scale: Scale, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let plan = Plan::new(suite, scale);
    plan.validate()?;
    ensure_dir(out_dir)?;
    let manifest = run_benchmark(suite, scale, &plan, out_dir, seed)?;
    write_manifest(&manifest, out_dir)?;
    let mut out: Vec<PathBuf> = manifest.files.iter().map(|f| out_dir.join(f)).collect();
    out.push(out_dir.join("manifest.json"));
    Ok(out)
}

/// Human-readable summary of a stack file's header and stage lines. The
/// file is not checked against any problem.
pub fn cmd_inspect(stack_path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(stack_path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", stack_path.display())))?;
    inspect_text(&text)
}

pub fn inspect_text(text: &str) -> Result<String> {
    let mut lines = text.lines();
    if lines.next() != Some("reach-adp value stack") {
        return Err(Error::Parse {
            line: 1,
            message: "not a value stack file".into(),
        });
    }
    let mut out = String::new();
    let mut elements = 0usize;
    for line in lines {
        if let Some(rest) = line.strip_prefix("stage ") {
            if elements > 0 {
                out.push_str(&format!("    {elements} basis elements\n"));
                elements = 0;
            }
            let mut words = rest.split_whitespace();
            let k = words.next().unwrap_or("?");
            out.push_str(&format!("stage {k}\n"));
            let rest: Vec<&str> = words.collect();
            for pair in rest.chunks(2) {
                if let [key, value] = pair {
                    out.push_str(&format!("    {key:<12} {value}\n"));
                }
            }
        } else if line.contains(" | ") {
            elements += 1;
        } else if line == "end" {
            break;
        } else if let Some((key, value)) = line.split_once(' ') {
            out.push_str(&format!("{key:<12} {value}\n"));
        }
    }
    if elements > 0 {
        out.push_str(&format!("    {elements} basis elements\n"));
    }
    Ok(out)
}
