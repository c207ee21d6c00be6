//! Reference solutions: exact dynamic programming on a state grid, and the
//! projected LQG feedback used as a heuristic baseline.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::std_normal_interval;
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::kernel::GaussianMixtureKernel;
use crate::policy::{Controller, ControllerKind};
use crate::problem::ReachAvoidProblem;

/// Gaussian mass further than this many standard deviations is dropped.
const WINDOW_SDS: f64 = 9.0;

/// Piecewise-constant value functions on a regular grid of cells over the
/// state box, `V_0, ..., V_T`.
#[derive(Clone, Debug)]
pub struct GridValue {
    problem: ReachAvoidProblem,
    res: Vec<usize>,
    control_res: Vec<usize>,
    widths: Vec<f64>,
    /// `values[k][cell]`, cells in row-major order with the last dimension fastest.
    values: Vec<Vec<f64>>,
}

impl GridValue {
    pub fn resolution(&self) -> &[usize] {
        &self.res
    }

    pub fn control_resolution(&self) -> &[usize] {
        &self.control_res
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn num_cells(&self) -> usize {
        self.res.iter().product()
    }

    /// Cell values of `V_k`.
    pub fn stage(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        let n = self.res.len();
        let mut x = vec![0.0; n];
        let mut rest = cell;
        for l in (0..n).rev() {
            let i = rest % self.res[l];
            rest /= self.res[l];
            x[l] = self.problem.state_box().lower()[l] + (i as f64 + 0.5) * self.widths[l];
        }
        x
    }

    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let b = self.problem.state_box();
        if x.len() != self.res.len() || !b.contains_point(x) {
            return None;
        }
        let mut cell = 0;
        for l in 0..self.res.len() {
            let i = ((x[l] - b.lower()[l]) / self.widths[l]).floor() as usize;
            cell = cell * self.res[l] + i.min(self.res[l] - 1);
        }
        Some(cell)
    }

    /// `V_k(x)`: `1` on `K`, `0` outside `K'`, the cell value otherwise.
    pub fn eval(&self, k: usize, x: &[f64]) -> Result<f64> {
        if x.len() != self.res.len() {
            return Err(Error::dim(self.res.len(), x.len()));
        }
        if k > self.horizon() {
            return Err(Error::Input(format!("stage {k} outside 0..={}", self.horizon())));
        }
        if self.problem.target().contains_point(x) {
            return Ok(1.0);
        }
        if !self.problem.safe().contains_point(x) || k == self.horizon() {
            return Ok(0.0);
        }
        Ok(self.cell_of(x).map_or(0.0, |c| self.values[k][c]))
    }

    /// `int V_{k+1}(y) Q(dy | x, u)` with the piecewise-constant `V_{k+1}`.
    pub fn backup(&self, k: usize, x: &[f64], u: &[f64]) -> f64 {
        let mut probs = Vec::new();
        expected_cell_value(
            self.problem.kernel(),
            self.problem.state_box(),
            &self.res,
            &self.widths,
            &self.values[k + 1],
            x,
            u,
            &mut probs,
        )
    }

    fn control_points(&self) -> Vec<Vec<f64>> {
        control_grid(self.problem.control_box(), &self.control_res)
    }
}

fn control_grid(control: &Rect, res: &[usize]) -> Vec<Vec<f64>> {
    let m = res.len();
    let total: usize = res.iter().product();
    (0..total)
        .map(|idx| {
            let mut u = vec![0.0; m];
            let mut rest = idx;
            for l in (0..m).rev() {
                let i = rest % res[l];
                rest /= res[l];
                let (lo, hi) = (control.lower()[l], control.upper()[l]);
                u[l] = if res[l] == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * i as f64 / (res[l] - 1) as f64
                };
            }
            u
        })
        .collect()
}

/// Per-dimension window of cells carrying non-negligible mass and their
/// probabilities, for one Gaussian component.
struct Window {
    start: usize,
    probs: Vec<f64>,
}

fn window(lo: f64, width: f64, res: usize, mean: f64, sd: f64) -> Window {
    if sd == 0.0 {
        let i = ((mean - lo) / width).floor();
        if i < 0.0 || i >= res as f64 {
            return Window { start: 0, probs: Vec::new() };
        }
        return Window { start: i as usize, probs: vec![1.0] };
    }
    let a = ((mean - WINDOW_SDS * sd - lo) / width).floor().max(0.0);
    let b = ((mean + WINDOW_SDS * sd - lo) / width).ceil().min(res as f64);
    if a >= b {
        return Window { start: 0, probs: Vec::new() };
    }
    let (a, b) = (a as usize, b as usize);
    let probs = (a..b)
        .map(|i| {
            let left = lo + i as f64 * width;
            std_normal_interval((left - mean) / sd, (left + width - mean) / sd)
        })
        .collect();
    Window { start: a, probs }
}

#[allow(clippy::too_many_arguments)]
fn expected_cell_value(
    q: &GaussianMixtureKernel,
    state: &Rect,
    res: &[usize],
    widths: &[f64],
    next: &[f64],
    x: &[f64],
    u: &[f64],
    mean: &mut Vec<f64>,
) -> f64 {
    let n = res.len();
    mean.resize(n, 0.0);
    let mut total = 0.0;
    for (j, comp) in q.components().iter().enumerate() {
        if comp.weight == 0.0 {
            continue;
        }
        q.mean_into(j, x, u, mean);
        let sd = q.std_dev(j);
        let wins: Vec<Window> = (0..n)
            .map(|l| window(state.lower()[l], widths[l], res[l], mean[l], sd[l]))
            .collect();
        if wins.iter().any(|w| w.probs.is_empty()) {
            continue;
        }
        total += comp.weight * contract(next, res, &wins, 0, 0);
    }
    total
}

/// `sum over the window of next[cell] * prod_l p_l`, recursing over dimensions.
fn contract(next: &[f64], res: &[usize], wins: &[Window], l: usize, base: usize) -> f64 {
    let w = &wins[l];
    if l + 1 == res.len() {
        let row = &next[base * res[l] + w.start..base * res[l] + w.start + w.probs.len()];
        return row.iter().zip(&w.probs).map(|(v, p)| v * p).sum();
    }
    w.probs
        .iter()
        .enumerate()
        .map(|(o, p)| p * contract(next, res, wins, l + 1, base * res[l] + w.start + o))
        .sum()
}

/// Exact DP on a grid over the state box: the value is piecewise constant
/// on cells, transition masses per cell are Gaussian CDF differences, mass
/// leaving the box counts as failure, and the supremum over controls is
/// taken on a regular control grid.
pub fn grid_dp(problem: &ReachAvoidProblem, state_res: &[usize], control_res: &[usize]) -> Result<GridValue> {
    let n = problem.state_dim();
    if n > 3 {
        return Err(Error::Unsupported(format!(
            "grid dynamic programming is limited to 3 state dimensions, got {n}"
        )));
    }
    if state_res.len() != n {
        return Err(Error::dim(n, state_res.len()));
    }
    if control_res.len() != problem.control_dim() {
        return Err(Error::dim(problem.control_dim(), control_res.len()));
    }
    if state_res.contains(&0) || control_res.contains(&0) {
        return Err(Error::Input("grid resolutions must be >= 1".into()));
    }
    let b = problem.state_box();
    let widths: Vec<f64> = (0..n)
        .map(|l| (b.upper()[l] - b.lower()[l]) / state_res[l] as f64)
        .collect();
    let mut grid = GridValue {
        problem: problem.clone(),
        res: state_res.to_vec(),
        control_res: control_res.to_vec(),
        widths,
        values: Vec::new(),
    };
    let cells = grid.num_cells();
    let t = problem.horizon();
    let centers: Vec<Vec<f64>> = (0..cells).map(|c| grid.cell_center(c)).collect();
    let region: Vec<Option<f64>> = centers
        .iter()
        .map(|x| {
            if problem.target().contains_point(x) {
                Some(1.0)
            } else if !problem.safe().contains_point(x) {
                Some(0.0)
            } else {
                None
            }
        })
        .collect();
    let terminal: Vec<f64> = region.iter().map(|r| if *r == Some(1.0) { 1.0 } else { 0.0 }).collect();
    let mut values = vec![Vec::new(); t + 1];
    values[t] = terminal;
    let controls = grid.control_points();
    for k in (0..t).rev() {
        let next = &values[k + 1];
        let layer: Vec<f64> = (0..cells)
            .into_par_iter()
            .map_init(Vec::new, |buf, c| {
                if let Some(v) = region[c] {
                    return v;
                }
                controls
                    .iter()
                    .map(|u| {
                        expected_cell_value(
                            problem.kernel(),
                            b,
                            &grid.res,
                            &grid.widths,
                            next,
                            &centers[c],
                            u,
                            buf,
                        )
                    })
                    .fold(0.0_f64, f64::max)
                    .clamp(0.0, 1.0)
            })
            .collect();
        values[k] = layer;
    }
    grid.values = values;
    Ok(grid)
}

/// Greedy policy on a grid value: maximizes the piecewise-constant backup
/// over the control grid, evaluated at the actual state.
pub struct GridController<'a> {
    grid: &'a GridValue,
    controls: Vec<Vec<f64>>,
}

impl<'a> GridController<'a> {
    pub fn new(grid: &'a GridValue) -> Self {
        GridController {
            controls: grid.control_points(),
            grid,
        }
    }
}

impl Controller for GridController<'_> {
    fn act(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let p = &self.grid.problem;
        if k >= self.grid.horizon() || p.target().contains_point(x) || !p.safe().contains_point(x) {
            return p.control_box().center();
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, u) in self.controls.iter().enumerate() {
            let v = self.grid.backup(k, x, u);
            if v > best.0 {
                best = (v, i);
            }
        }
        self.controls[best.1].clone()
    }

    fn kind(&self) -> ControllerKind {
        ControllerKind::Grid
    }
}

/// Finite-horizon LQR gains for `x+ = A x + B u + w` with weights built
/// from the target and control boxes, applied as `u = P_U(-K_k (x - x_K))`.
#[derive(Clone, Debug)]
pub struct LqgController {
    gains: Vec<DMatrix<f64>>,
    /// Cost-to-go matrices `P_0, ..., P_T`.
    cost_to_go: Vec<DMatrix<f64>>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    reference: Vec<f64>,
    control: Rect,
    centered: bool,
}

/// `Q = diag(1/r_l^2)` from the half-widths of `K`'s bounding box and
/// `R = diag(1/rho_l^2)` from those of `U`: the shape matrices of the
/// largest ellipsoids inscribed in the boxes.
pub fn lqg_controller(problem: &ReachAvoidProblem) -> Result<LqgController> {
    let q = problem.kernel();
    let base = q.components()[0]
        .mean
        .as_affine()
        .ok_or_else(|| Error::Unsupported("LQG baseline needs an affine kernel mean".into()))?;
    for c in q.components() {
        match c.mean.as_affine() {
            Some(m) if m.a() == base.a() && m.b() == base.b() => {}
            _ => {
                return Err(Error::Unsupported(
                    "LQG baseline needs one (A, B) pair shared by all mixture components".into(),
                ))
            }
        }
    }
    let target = problem
        .target()
        .bounding_rect()
        .ok_or_else(|| Error::Domain("empty target set".into()))?;
    let n = problem.state_dim();
    let m = problem.control_dim();
    let a = DMatrix::from_row_slice(n, n, base.a());
    let b = DMatrix::from_row_slice(n, m, base.b());
    let qm = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        target.half_widths().iter().map(|r| 1.0 / (r * r)),
    ));
    let rm = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        m,
        problem.control_box().half_widths().iter().map(|r| 1.0 / (r * r)),
    ));
    let ctrl_center = problem.control_box().center();
    let centered = target.center().iter().chain(&ctrl_center).all(|c| c.abs() < 1e-12);
    LqgController::riccati(a, b, qm, rm, problem.horizon(), target.center(), problem.control_box().clone(), centered)
}

impl LqgController {
    #[allow(clippy::too_many_arguments)]
    fn riccati(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        horizon: usize,
        reference: Vec<f64>,
        control: Rect,
        centered: bool,
    ) -> Result<Self> {
        let mut p = q.clone();
        let mut cost_to_go = vec![p.clone()];
        let mut gains = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let bt_p = b.transpose() * &p;
            let s = &r + &bt_p * &b;
            let s_inv = s
                .try_inverse()
                .ok_or_else(|| Error::Numerical("Riccati recursion hit a singular matrix".into()))?;
            let k = s_inv * &bt_p * &a;
            let next = &q + a.transpose() * &p * &a - a.transpose() * &p * &b * &k;
            p = (&next + next.transpose()) * 0.5;
            gains.push(k);
            cost_to_go.push(p.clone());
        }
        gains.reverse();
        cost_to_go.reverse();
        Ok(LqgController {
            gains,
            cost_to_go,
            a,
            b,
            q,
            r,
            reference,
            control,
            centered,
        })
    }

    /// Gain `K_k` as a row-major `m x n` array.
    pub fn gain(&self, k: usize) -> Vec<f64> {
        let g = &self.gains[k];
        (0..g.nrows())
            .flat_map(|i| (0..g.ncols()).map(move |j| g[(i, j)]))
            .collect()
    }

    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// False when `K` or `U` is not centered at the origin, in which case
    /// the feedback regulates to the center of `K`.
    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Largest entry of `P_k - (Q + A'PA - A'PB (R + B'PB)^{-1} B'PA)` over all stages.
    pub fn riccati_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for k in 0..self.horizon() {
            let p = &self.cost_to_go[k + 1];
            let s = &self.r + self.b.transpose() * p * &self.b;
            let s_inv = s.try_inverse().expect("invertible during construction");
            let rhs = &self.q + self.a.transpose() * p * &self.a
                - self.a.transpose() * p * &self.b * s_inv * self.b.transpose() * p * &self.a;
            worst = worst.max((&self.cost_to_go[k] - rhs).amax());
        }
        worst
    }

    /// Unprojected feedback `-K_k (x - x_K)`.
    pub fn raw_input(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let d = nalgebra::DVector::from_iterator(x.len(), x.iter().zip(&self.reference).map(|(a, b)| a - b));
        let u = -(&self.gains[k] * d);
        u.iter().copied().collect()
    }
}

impl Controller for LqgController {
    fn act(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let k = k.min(self.horizon().saturating_sub(1));
        let mut u = self.raw_input(k, x);
        self.control.project(&mut u);
        u
    }

    fn kind(&self) -> ControllerKind {
        ControllerKind::Lqg
    }
}
