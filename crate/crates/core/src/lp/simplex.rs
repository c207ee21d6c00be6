//! Revised primal simplex on the dual of the stage LP.
//!
//! The primal `min c'w s.t. Phi w >= b` with free `w` has dual
//! `max b'lambda s.t. Phi' lambda = c, lambda >= 0`, an equality-form LP with
//! `M` rows and `N` columns. The simplex multipliers of an optimal dual basis
//! are the primal weights.

use super::lu::DenseLu;
use super::{LpInstance, LpSolution, LpStatus, FEASIBILITY_TOL, PIVOT_TOL};
use crate::error::{Error, Result};

const REFACTOR_EVERY: usize = 100;
const DRIFT_TOL: f64 = 1e-7;
const PRICING_TOL: f64 = 1e-9;
/// Relative size a pivot needs to swap out a zero-level artificial.
const ART_PIVOT_TOL: f64 = 1e-7;
/// Pivots below this fraction of the entering column are rejected.
const REL_PIVOT_TOL: f64 = 1e-7;
const LOST_FEASIBILITY: f64 = 1e-6;

struct Eta {
    row: usize,
    col: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

enum PhaseEnd {
    Optimal,
    DualUnbounded,
}

struct Simplex<'a> {
    lp: &'a LpInstance,
    m: usize,
    n: usize,
    art_sign: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    xb: Vec<f64>,
    lu: DenseLu,
    etas: Vec<Eta>,
    work: Vec<f64>,
    iterations: usize,
    bland_after: usize,
    max_iterations: usize,
    c_scale: f64,
    b_scale: f64,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LpInstance) -> Result<Self> {
        let m = lp.num_vars();
        let n = lp.num_rows();
        let art_sign: Vec<f64> = lp
            .c()
            .iter()
            .map(|&c| if c < 0.0 { -1.0 } else { 1.0 })
            .collect();
        let mut ident = vec![0.0; m * m];
        for i in 0..m {
            ident[i * m + i] = art_sign[i];
        }
        let lu = DenseLu::factor(m, ident)
            .map_err(|_| Error::Numerical("artificial basis is singular".into()))?;
        let basis: Vec<usize> = (n..n + m).collect();
        let mut is_basic = vec![false; n + m];
        for &j in &basis {
            is_basic[j] = true;
        }
        let xb = lp.c().iter().map(|c| c.abs()).collect();
        let c_scale = lp.c().iter().fold(0.0_f64, |a, c| a.max(c.abs())).max(f64::MIN_POSITIVE);
        let b_scale = lp.b().iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        let total = n + m;
        Ok(Simplex {
            lp,
            m,
            n,
            art_sign,
            basis,
            is_basic,
            xb,
            lu,
            etas: Vec::new(),
            work: Vec::with_capacity(m),
            iterations: 0,
            bland_after: 5 * total,
            max_iterations: 25 * total + 1000,
            c_scale,
            b_scale,
        })
    }

    fn column_into(&self, j: usize, out: &mut [f64]) {
        if j < self.n {
            out.copy_from_slice(self.lp.row(j));
        } else {
            out.fill(0.0);
            let i = j - self.n;
            out[i] = self.art_sign[i];
        }
    }

    fn cost(&self, j: usize, phase: Phase) -> f64 {
        match (phase, j < self.n) {
            (Phase::One, true) => 0.0,
            (Phase::One, false) => -1.0,
            (Phase::Two, true) => self.lp.b()[j],
            (Phase::Two, false) => 0.0,
        }
    }

    fn ftran(&mut self, v: &mut [f64]) {
        self.lu.solve(v, &mut self.work);
        for eta in &self.etas {
            let zr = v[eta.row] / eta.col[eta.row];
            if zr != 0.0 {
                for (i, a) in eta.col.iter().enumerate() {
                    v[i] -= a * zr;
                }
            }
            v[eta.row] = zr;
        }
    }

    fn btran(&mut self, v: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let r = eta.row;
            let mut s = v[r];
            for (i, a) in eta.col.iter().enumerate() {
                if i != r {
                    s -= a * v[i];
                }
            }
            v[r] = s / eta.col[r];
        }
        self.lu.solve_transpose(v, &mut self.work);
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (p, &j) in self.basis.iter().enumerate() {
            self.column_into(j, &mut col);
            for i in 0..m {
                bmat[i * m + p] = col[i];
            }
        }
        self.lu = DenseLu::factor(m, bmat).map_err(|s| {
            Error::Numerical(format!(
                "basis matrix became singular at position {} after {} iterations",
                s.column, self.iterations
            ))
        })?;
        self.etas.clear();
        let mut x = self.lp.c().to_vec();
        self.lu.solve(&mut x, &mut self.work);
        self.xb = x;
        Ok(())
    }

    /// `max_i |B alpha - a|_i` relative to the column size.
    fn drift(&self, alpha: &[f64], a: &[f64]) -> f64 {
        let mut r = a.to_vec();
        for (p, &j) in self.basis.iter().enumerate() {
            let ap = alpha[p];
            if ap == 0.0 {
                continue;
            }
            if j < self.n {
                for (ri, phi) in r.iter_mut().zip(self.lp.row(j)) {
                    *ri -= ap * phi;
                }
            } else {
                let i = j - self.n;
                r[i] -= ap * self.art_sign[i];
            }
        }
        let amax = a.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
        r.iter().fold(0.0_f64, |s, v| s.max(v.abs())) / amax
    }

    fn multipliers(&mut self, phase: Phase) -> Vec<f64> {
        let mut y: Vec<f64> = self.basis.iter().map(|&j| self.cost(j, phase)).collect();
        self.btran(&mut y);
        y
    }

    fn price(&self, y: &[f64], phase: Phase, bland: bool) -> Option<usize> {
        let tol = match phase {
            Phase::One => PRICING_TOL,
            Phase::Two => PRICING_TOL * (1.0 + self.b_scale),
        };
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n {
            if self.is_basic[j] {
                continue;
            }
            let dot: f64 = self.lp.row(j).iter().zip(y).map(|(a, b)| a * b).sum();
            let d = self.cost(j, phase) - dot;
            if d > tol {
                if bland {
                    return Some(j);
                }
                if best.is_none_or(|(_, bd)| d > bd) {
                    best = Some((j, d));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// Leaving basis position for entering direction `alpha`, or `None`
    /// when the direction is unblocked.
    fn ratio_test(&self, alpha: &[f64], bland: bool) -> Option<usize> {
        let is_art = |p: usize| self.basis[p] >= self.n;
        let amax = alpha.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        // a basic artificial that would move off zero blocks immediately
        let mut blocked_art: Option<usize> = None;
        for p in 0..self.m {
            if is_art(p)
                && alpha[p].abs() > ART_PIVOT_TOL * amax
                && self.xb[p].abs() <= FEASIBILITY_TOL * self.c_scale
                && blocked_art.is_none_or(|b| self.basis[p] < self.basis[b])
            {
                blocked_art = Some(p);
            }
        }
        if blocked_art.is_some() {
            return blocked_art;
        }
        let piv = PIVOT_TOL.max(REL_PIVOT_TOL * amax);
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for p in 0..self.m {
                if alpha[p] > piv {
                    let t = self.xb[p].max(0.0) / alpha[p];
                    let better = match best {
                        None => true,
                        Some((bp, bt)) => t < bt || (t == bt && self.basis[p] < self.basis[bp]),
                    };
                    if better {
                        best = Some((p, t));
                    }
                }
            }
            return best.map(|(p, _)| p);
        }
        let delta = 1e-9 * self.c_scale;
        let mut theta_max = f64::INFINITY;
        for p in 0..self.m {
            if alpha[p] > piv {
                theta_max = theta_max.min((self.xb[p] + delta) / alpha[p]);
            }
        }
        if theta_max == f64::INFINITY {
            return None;
        }
        let mut best: Option<usize> = None;
        for p in 0..self.m {
            if alpha[p] > piv && self.xb[p] / alpha[p] <= theta_max {
                let better = match best {
                    None => true,
                    Some(bp) => {
                        alpha[p] > alpha[bp]
                            || (alpha[p] == alpha[bp] && self.basis[p] < self.basis[bp])
                    }
                };
                if better {
                    best = Some(p);
                }
            }
        }
        best
    }

    /// Replaces basis position `r` by column `q`. A zero-level artificial
    /// leaves with a step of exactly zero.
    fn pivot(&mut self, q: usize, r: usize, alpha: Vec<f64>, zero_step: bool) -> Result<()> {
        let theta = if zero_step {
            0.0
        } else {
            (self.xb[r] / alpha[r]).max(0.0)
        };
        for (x, a) in self.xb.iter_mut().zip(&alpha) {
            *x -= theta * a;
        }
        self.xb[r] = theta;
        self.is_basic[self.basis[r]] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
        self.etas.push(Eta { row: r, col: alpha });
        self.iterations += 1;
        if self.etas.len() >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Entering column image `B^{-1} a_q`, refactoring once on drift.
    fn entering_direction(&mut self, q: usize) -> Result<Vec<f64>> {
        let mut a = vec![0.0; self.m];
        self.column_into(q, &mut a);
        let mut alpha = a.clone();
        self.ftran(&mut alpha);
        if !self.etas.is_empty() && self.drift(&alpha, &a) > DRIFT_TOL {
            self.refactor()?;
            alpha.copy_from_slice(&a);
            self.ftran(&mut alpha);
        }
        Ok(alpha)
    }

    fn run_phase(&mut self, phase: Phase) -> Result<(PhaseEnd, Vec<f64>)> {
        let mut fresh = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::Numerical(format!(
                    "simplex did not terminate within {} iterations",
                    self.max_iterations
                )));
            }
            let bland = self.iterations >= self.bland_after;
            let y = self.multipliers(phase);
            let q = match self.price(&y, phase, bland) {
                Some(q) => q,
                None => {
                    if !fresh && !self.etas.is_empty() {
                        // confirm optimality on a clean factorization
                        self.refactor()?;
                        fresh = true;
                        continue;
                    }
                    return Ok((PhaseEnd::Optimal, y));
                }
            };
            fresh = false;
            let alpha = self.entering_direction(q)?;
            match self.ratio_test(&alpha, bland) {
                Some(r) => {
                    let zero_step = phase == Phase::Two && self.basis[r] >= self.n;
                    self.pivot(q, r, alpha, zero_step)?
                }
                None => return Ok((PhaseEnd::DualUnbounded, y)),
            }
        }
    }

    /// Pivots zero-level artificials out of the basis where an original
    /// column can replace them; the rest mark redundant equality rows.
    fn drive_out_artificials(&mut self) -> Result<()> {
        for p in 0..self.m {
            if self.basis[p] < self.n {
                continue;
            }
            let mut rho = vec![0.0; self.m];
            rho[p] = 1.0;
            self.btran(&mut rho);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.is_basic[j] {
                    continue;
                }
                let v: f64 = self.lp.row(j).iter().zip(&rho).map(|(a, b)| a * b).sum();
                if v.abs() > 1e-9 && best.is_none_or(|(_, bv)| v.abs() > bv) {
                    best = Some((j, v.abs()));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.entering_direction(q)?;
                let amax = alpha.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                if alpha[p].abs() > ART_PIVOT_TOL * amax {
                    self.pivot(q, p, alpha, true)?;
                }
            }
        }
        Ok(())
    }

    /// Fails when rounding has pushed the basic solution visibly negative,
    /// which happens only for numerically rank-deficient constraint matrices.
    fn check_feasible(&self) -> Result<()> {
        let worst = self.xb.iter().fold(0.0_f64, |a, &x| a.min(x));
        if worst < -LOST_FEASIBILITY * self.c_scale {
            return Err(Error::Numerical(format!(
                "basic solution lost feasibility ({worst:e}); the constraint rows are numerically rank-deficient"
            )));
        }
        Ok(())
    }

    fn artificial_mass(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .filter(|(j, _)| **j >= self.n)
            .map(|(_, x)| x.abs())
            .sum()
    }
}

pub(crate) fn solve(lp: &LpInstance) -> Result<LpSolution> {
    let mut sx = Simplex::new(lp)?;
    let (_, y1) = sx.run_phase(Phase::One)?;
    sx.check_feasible()?;
    if sx.artificial_mass() > FEASIBILITY_TOL * sx.c_scale {
        // Phase-I multipliers satisfy Phi y >= 0 and c'y < 0.
        let norm = y1.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let ray: Vec<f64> = y1.iter().map(|v| v / norm).collect();
        return Ok(LpSolution::unbounded(lp, ray, sx.iterations));
    }
    sx.drive_out_artificials()?;
    let (end, w) = sx.run_phase(Phase::Two)?;
    sx.check_feasible()?;
    if let PhaseEnd::DualUnbounded = end {
        return Ok(LpSolution::infeasible(lp, sx.iterations));
    }
    let mut lambda = vec![0.0; sx.n];
    let mut degenerate = false;
    let level = FEASIBILITY_TOL * sx.c_scale;
    for (&j, &x) in sx.basis.iter().zip(&sx.xb) {
        if j < sx.n {
            lambda[j] = x.max(0.0);
            if x <= level {
                degenerate = true;
            }
        } else {
            degenerate = true;
        }
    }
    let status = if degenerate {
        LpStatus::DegenerateTieBroken
    } else {
        LpStatus::Optimal
    };
    Ok(LpSolution::solved(lp, status, w, lambda, sx.iterations))
}
