//! The stage LP `min c'w s.t. Phi w >= b` with free `w`.

mod lu;
mod simplex;
pub mod text;

use rayon::prelude::*;

use crate::basis::GrbfStage;
use crate::bellman::{BellmanScratch, ValueFunction};
use crate::error::{Error, Result};
use crate::kernel::GaussianMixtureKernel;
use crate::scenario::ScenarioSet;

/// Allowed violation of `Phi w >= b` on an optimal return.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Relative tolerance on the duality gap and complementary slackness.
pub const GAP_TOL: f64 = 1e-6;
/// Smallest entry accepted as a simplex pivot.
pub const PIVOT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LpInstance {
    c: Vec<f64>,
    /// `N x M`, row-major.
    phi: Vec<f64>,
    b: Vec<f64>,
}

impl LpInstance {
    /// `phi` holds the `N` constraint rows back to back.
    pub fn new(c: Vec<f64>, phi: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let m = c.len();
        if m == 0 {
            return Err(Error::Input("LP needs at least one variable".into()));
        }
        if b.is_empty() {
            return Err(Error::Input("LP has an empty constraint set".into()));
        }
        if phi.len() != b.len() * m {
            return Err(Error::dim(b.len() * m, phi.len()));
        }
        if !c.iter().chain(&phi).chain(&b).all(|v| v.is_finite()) {
            return Err(Error::Input("LP data must be finite".into()));
        }
        Ok(LpInstance { c, phi, b })
    }

    pub fn from_rows(c: Vec<f64>, rows: &[Vec<f64>], b: Vec<f64>) -> Result<Self> {
        let m = c.len();
        let mut phi = Vec::with_capacity(rows.len() * m);
        for r in rows {
            if r.len() != m {
                return Err(Error::dim(m, r.len()));
            }
            phi.extend_from_slice(r);
        }
        if rows.len() != b.len() {
            return Err(Error::dim(rows.len(), b.len()));
        }
        LpInstance::new(c, phi, b)
    }

    /// `M`.
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    /// `N`.
    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn row(&self, s: usize) -> &[f64] {
        let m = self.c.len();
        &self.phi[s * m..(s + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.phi.chunks_exact(self.c.len())
    }

    /// Fewer rows than variables; such instances are usually unbounded.
    pub fn is_underdetermined(&self) -> bool {
        self.num_rows() < self.num_vars()
    }

    /// The same instance with the objective multiplied by `factor`.
    pub fn with_scaled_objective(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Input(format!("objective scale {factor} must be positive")));
        }
        let c = self.c.iter().map(|v| v * factor).collect();
        LpInstance::new(c, self.phi.clone(), self.b.clone())
    }

    /// `min_s (Phi w - b)_s`.
    pub fn feasibility_residual(&self, w: &[f64]) -> f64 {
        self.rows()
            .zip(&self.b)
            .map(|(r, b)| dot(r, w) - b)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        dot(&self.c, w)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    /// Optimal, but the dual basis is degenerate so the primal optimum may
    /// not be unique; the reported one is fixed by the pivot rule.
    DegenerateTieBroken,
    Unbounded,
    Infeasible,
}

impl LpStatus {
    pub fn is_optimal(self) -> bool {
        matches!(self, LpStatus::Optimal | LpStatus::DegenerateTieBroken)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LpStatus::Optimal => "optimal",
            LpStatus::DegenerateTieBroken => "degenerate-tie-broken",
            LpStatus::Unbounded => "unbounded",
            LpStatus::Infeasible => "infeasible",
        }
    }
}

impl std::fmt::Display for LpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Optimality evidence recomputed from the returned primal and dual points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Certificate {
    /// `min_s (Phi w - b)_s`.
    pub feasibility: f64,
    /// `|c'w - b'lambda|`.
    pub gap: f64,
    /// `lambda'(Phi w - b)`.
    pub slackness: f64,
    /// `max_i |Phi' lambda - c|_i`.
    pub dual_residual: f64,
}

impl Certificate {
    pub fn holds(&self, objective: f64) -> bool {
        let rel = GAP_TOL * (1.0 + objective.abs());
        self.feasibility >= -FEASIBILITY_TOL
            && self.gap <= rel
            && self.slackness.abs() <= rel
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal weights; empty unless optimal.
    pub w: Vec<f64>,
    /// `c'w`, `-inf` when unbounded and `+inf` when infeasible.
    pub objective: f64,
    /// Dual multipliers, one per row.
    pub lambda: Vec<f64>,
    /// For unbounded instances, a direction with `Phi d >= 0` and `c'd < 0`.
    pub ray: Option<Vec<f64>>,
    pub iterations: usize,
    pub certificate: Option<Certificate>,
}

impl LpSolution {
    fn solved(lp: &LpInstance, status: LpStatus, w: Vec<f64>, lambda: Vec<f64>, iterations: usize) -> Self {
        let objective = lp.objective(&w);
        let mut dual_obj = 0.0;
        let mut slackness = 0.0;
        let mut dual_res = lp.c.iter().map(|c| -c).collect::<Vec<_>>();
        for ((row, b), l) in lp.rows().zip(&lp.b).zip(&lambda) {
            if *l != 0.0 {
                dual_obj += b * l;
                slackness += l * (dot(row, &w) - b);
                for (r, p) in dual_res.iter_mut().zip(row) {
                    *r += l * p;
                }
            }
        }
        let certificate = Certificate {
            feasibility: lp.feasibility_residual(&w),
            gap: (objective - dual_obj).abs(),
            slackness,
            dual_residual: dual_res.iter().fold(0.0_f64, |a, v| a.max(v.abs())),
        };
        LpSolution {
            status,
            w,
            objective,
            lambda,
            ray: None,
            iterations,
            certificate: Some(certificate),
        }
    }

    fn unbounded(lp: &LpInstance, ray: Vec<f64>, iterations: usize) -> Self {
        LpSolution {
            status: LpStatus::Unbounded,
            w: Vec::new(),
            objective: f64::NEG_INFINITY,
            lambda: vec![0.0; lp.num_rows()],
            ray: Some(ray),
            iterations,
            certificate: None,
        }
    }

    fn infeasible(lp: &LpInstance, iterations: usize) -> Self {
        LpSolution {
            status: LpStatus::Infeasible,
            w: Vec::new(),
            objective: f64::INFINITY,
            lambda: vec![0.0; lp.num_rows()],
            ray: None,
            iterations,
            certificate: None,
        }
    }
}

/// Builds the stage LP: `Phi[s][i] = phi_i(x^s)`, `b[s] = T_{u^s}[prev](x^s)`, `c = obj`.
pub fn assemble(
    stage: &GrbfStage,
    scenarios: &ScenarioSet,
    prev: &ValueFunction,
    q: &GaussianMixtureKernel,
    obj: &[f64],
) -> Result<LpInstance> {
    if scenarios.is_empty() {
        return Err(Error::Input("LP has an empty constraint set (N = 0)".into()));
    }
    if stage.weights().is_some() {
        return Err(Error::State(format!("stage {} is already solved", stage.stage())));
    }
    if obj.len() != stage.len() {
        return Err(Error::dim(stage.len(), obj.len()));
    }
    let n = scenarios.len();
    let b: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(BellmanScratch::default, |scratch, s| {
            prev.apply_in(q, scenarios.state(s), scenarios.control(s), scratch)
        })
        .collect::<Result<_>>()?;
    let m = stage.len();
    let mut phi = vec![0.0; n * m];
    phi.par_chunks_mut(m).enumerate().for_each(|(s, row)| {
        let x = scenarios.state(s);
        for (v, g) in row.iter_mut().zip(stage.elements()) {
            *v = g.eval(x);
        }
    });
    LpInstance::new(obj.to_vec(), phi, b)
}

/// Solves the instance. Unboundedness and infeasibility are reported in the
/// status; an `Err` means the factorization broke down.
pub fn solve(lp: &LpInstance) -> Result<LpSolution> {
    simplex::solve(lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable() {
        let lp = LpInstance::from_rows(vec![1.0], &[vec![0.5], vec![0.25]], vec![1.0, 0.4]).unwrap();
        let sol = solve(&lp).unwrap();
        assert!(sol.status.is_optimal());
        assert!((sol.w[0] - 2.0).abs() < 1e-12);
        assert!((sol.objective - 2.0).abs() < 1e-12);
        assert!(sol.certificate.unwrap().holds(sol.objective));
    }

    #[test]
    fn unbounded_with_ray() {
        let lp = LpInstance::from_rows(vec![2.0, 1.0], &[vec![1.0, 2.0]], vec![0.0]).unwrap();
        assert!(lp.is_underdetermined());
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
        let d = sol.ray.unwrap();
        assert!(dot(lp.row(0), &d) >= -1e-12);
        assert!(dot(lp.c(), &d) < 0.0);
    }

    #[test]
    fn infeasible_rows() {
        let lp = LpInstance::from_rows(vec![1.0], &[vec![0.0], vec![1.0]], vec![1.0, 0.0]).unwrap();
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn empty_and_ragged_rejected() {
        assert!(LpInstance::new(vec![1.0], vec![], vec![]).is_err());
        assert!(LpInstance::from_rows(vec![1.0, 1.0], &[vec![1.0]], vec![0.0]).is_err());
        assert!(LpInstance::new(vec![f64::NAN], vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn degenerate_optimum_is_flagged() {
        // the objective is parallel to the single binding row
        let lp = LpInstance::from_rows(
            vec![1.0, 1.0],
            &[vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::DegenerateTieBroken);
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }
}
