//! Analytic Bellman backups `T_u[V](x) = int V(y) Q(dy | x, u)`.
//!
//! A value function is `1` on the target set `K`, a weighted GRBF sum on
//! `X̄ = K' ∖ K`, and `0` elsewhere. With a Gaussian-mixture kernel each term
//! of the backup is the integral of a product of GRBFs over a rectangle union,
//! which separates into one-dimensional CDF differences:
//!
//! ```text
//! T_u[V](x) = sum_j alpha_j ( sum_i w_i int_X̄ phi_i N_j + int_K N_j )
//! ```

use std::f64::consts::PI;

use crate::basis::{erfc, GrbfStage, SeparableUnion, FRAC_1_SQRT_2PI};
use crate::error::{Error, Result};
use crate::geometry::RectUnion;
use crate::kernel::GaussianMixtureKernel;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// How to differentiate with respect to the control.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GradientMode {
    /// Analytic gradient; requires affine component means.
    #[default]
    Analytic,
    /// Analytic when available, otherwise central finite differences.
    FiniteDifferenceFallback,
}

/// Three-region value function: `1` on `K`, `sum_i w_i phi_i` on `X̄`, `0` outside `K'`.
#[derive(Clone, Debug)]
pub struct ValueFunction {
    target: RectUnion,
    safe: RectUnion,
    stage: Option<GrbfStage>,
    target_table: SeparableUnion,
    xbar_table: SeparableUnion,
    flat: Option<FlatStage>,
}

/// Structure-of-arrays copy of a weighted stage for the hot loop.
#[derive(Clone, Debug)]
struct FlatStage {
    centers: Vec<f64>,
    variances: Vec<f64>,
    weights: Vec<f64>,
}

/// Reusable buffers so that repeated backups do not allocate.
#[derive(Clone, Debug, Default)]
pub struct BellmanScratch {
    mean: Vec<f64>,
    cum: Vec<f64>,
    dcum: Vec<f64>,
    grad_m: Vec<f64>,
    term_grad: Vec<f64>,
    probe: Vec<f64>,
}

impl ValueFunction {
    /// The terminal value `1_K`.
    pub fn terminal(target: RectUnion, safe: RectUnion) -> Result<Self> {
        ValueFunction::build(target, safe, None)
    }

    /// A stage approximation on `X̄`; the stage may still lack weights, in
    /// which case evaluation and backups report a state error.
    pub fn from_stage(target: RectUnion, safe: RectUnion, stage: GrbfStage) -> Result<Self> {
        if stage.dim() != target.dim() {
            return Err(Error::dim(target.dim(), stage.dim()));
        }
        ValueFunction::build(target, safe, Some(stage))
    }

    fn build(target: RectUnion, safe: RectUnion, stage: Option<GrbfStage>) -> Result<Self> {
        if safe.dim() != target.dim() {
            return Err(Error::dim(target.dim(), safe.dim()));
        }
        let xbar = safe.subtract(&target)?;
        let flat = stage.as_ref().and_then(|st| {
            st.weights().map(|w| FlatStage {
                centers: st.elements().iter().flat_map(|g| g.center().to_vec()).collect(),
                variances: st.elements().iter().flat_map(|g| g.variance().to_vec()).collect(),
                weights: w.to_vec(),
            })
        });
        Ok(ValueFunction {
            target_table: SeparableUnion::new(&target),
            xbar_table: SeparableUnion::new(&xbar),
            target,
            safe,
            stage,
            flat,
        })
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn is_terminal(&self) -> bool {
        self.stage.is_none()
    }

    pub fn stage(&self) -> Option<&GrbfStage> {
        self.stage.as_ref()
    }

    pub fn target(&self) -> &RectUnion {
        &self.target
    }

    pub fn safe(&self) -> &RectUnion {
        &self.safe
    }

    fn flat(&self) -> Result<Option<&FlatStage>> {
        match (&self.stage, &self.flat) {
            (None, _) => Ok(None),
            (Some(_), Some(f)) => Ok(Some(f)),
            (Some(st), None) => Err(Error::State(format!(
                "stage {} has no weights; solve its LP first",
                st.stage()
            ))),
        }
    }

    /// Pointwise value under the three-region rule; the target wins on shared faces.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::dim(self.dim(), x.len()));
        }
        if self.target.contains_point(x) {
            return Ok(1.0);
        }
        if !self.safe.contains_point(x) {
            return Ok(0.0);
        }
        match self.flat()? {
            None => Ok(0.0),
            Some(f) => Ok(eval_flat(f, x)),
        }
    }

    /// `T_u[V](x)`.
    pub fn apply(&self, q: &GaussianMixtureKernel, x: &[f64], u: &[f64]) -> Result<f64> {
        let mut scratch = BellmanScratch::default();
        self.apply_in(q, x, u, &mut scratch)
    }

    pub fn apply_in(
        &self,
        q: &GaussianMixtureKernel,
        x: &[f64],
        u: &[f64],
        scratch: &mut BellmanScratch,
    ) -> Result<f64> {
        self.check(q, x, u)?;
        let flat = self.flat()?;
        Ok(self.backup(q, x, u, flat, scratch, None))
    }

    /// Gradient of `u -> T_u[V](x)`.
    pub fn gradient_u(
        &self,
        q: &GaussianMixtureKernel,
        x: &[f64],
        u: &[f64],
        mode: GradientMode,
    ) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; q.control_dim()];
        let mut scratch = BellmanScratch::default();
        self.apply_with_gradient(q, x, u, mode, &mut grad, &mut scratch)?;
        Ok(grad)
    }

    /// Value and control gradient in one pass.
    pub fn apply_with_gradient(
        &self,
        q: &GaussianMixtureKernel,
        x: &[f64],
        u: &[f64],
        mode: GradientMode,
        grad: &mut [f64],
        scratch: &mut BellmanScratch,
    ) -> Result<f64> {
        self.check(q, x, u)?;
        if grad.len() != q.control_dim() {
            return Err(Error::dim(q.control_dim(), grad.len()));
        }
        let flat = self.flat()?;
        if q.is_affine() {
            return Ok(self.backup(q, x, u, flat, scratch, Some(grad)));
        }
        if mode != GradientMode::FiniteDifferenceFallback {
            return Err(Error::Unsupported(
                "analytic control gradients need affine kernel means; enable the finite-difference fallback"
                    .into(),
            ));
        }
        let value = self.backup(q, x, u, flat, scratch, None);
        let mut probe = std::mem::take(&mut scratch.probe);
        probe.clear();
        probe.extend_from_slice(u);
        for k in 0..u.len() {
            let h = 1e-6 * (1.0 + u[k].abs());
            probe[k] = u[k] + h;
            let up = self.backup(q, x, &probe, flat, scratch, None);
            probe[k] = u[k] - h;
            let down = self.backup(q, x, &probe, flat, scratch, None);
            probe[k] = u[k];
            grad[k] = (up - down) / (2.0 * h);
        }
        scratch.probe = probe;
        Ok(value)
    }

    fn check(&self, q: &GaussianMixtureKernel, x: &[f64], u: &[f64]) -> Result<()> {
        if q.state_dim() != self.dim() {
            return Err(Error::dim(self.dim(), q.state_dim()));
        }
        if x.len() != q.state_dim() {
            return Err(Error::dim(q.state_dim(), x.len()));
        }
        if u.len() != q.control_dim() {
            return Err(Error::dim(q.control_dim(), u.len()));
        }
        Ok(())
    }

    fn backup(
        &self,
        q: &GaussianMixtureKernel,
        x: &[f64],
        u: &[f64],
        flat: Option<&FlatStage>,
        s: &mut BellmanScratch,
        mut grad_u: Option<&mut [f64]>,
    ) -> f64 {
        let n = self.dim();
        let want_grad = grad_u.is_some();
        s.mean.resize(n, 0.0);
        let ends = self.target_table.total_ends().max(self.xbar_table.total_ends());
        s.cum.resize(ends, 0.0);
        s.dcum.resize(ends, 0.0);
        s.grad_m.resize(n, 0.0);
        s.term_grad.resize(n, 0.0);
        if let Some(g) = grad_u.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }

        let mut total = 0.0;
        for (j, comp) in q.components().iter().enumerate() {
            if comp.weight == 0.0 {
                continue;
            }
            q.mean_into(j, x, u, &mut s.mean);
            let sd = q.std_dev(j);
            s.grad_m.iter_mut().for_each(|v| *v = 0.0);

            // mass of the target set
            let mut value = 0.0;
            if !self.target.is_empty() {
                for l in 0..n {
                    let off = self.target_table.offset(l);
                    for (k, &e) in self.target_table.ends(l).iter().enumerate() {
                        let z = (e - s.mean[l]) / sd[l];
                        s.cum[off + k] = 0.5 * erfc(-z * FRAC_1_SQRT_2);
                        if want_grad {
                            s.dcum[off + k] = -FRAC_1_SQRT_2PI * (-0.5 * z * z).exp() / sd[l];
                        }
                    }
                }
                value += if want_grad {
                    self.target_table
                        .combine_with_grad(&s.cum, &s.dcum, &mut s.grad_m)
                } else {
                    self.target_table.combine(&s.cum)
                };
            }

            if let Some(f) = flat {
                let var = &comp.variance;
                for (i, &w) in f.weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let c = &f.centers[i * n..(i + 1) * n];
                    let sv = &f.variances[i * n..(i + 1) * n];
                    // log of the product scale; skip elements whose overlap underflows
                    let mut log_scale = 0.0;
                    for l in 0..n {
                        let d = c[l] - s.mean[l];
                        log_scale -= d * d / (2.0 * (sv[l] + var[l]));
                    }
                    if log_scale < -700.0 {
                        continue;
                    }
                    for l in 0..n {
                        let big = sv[l] + var[l];
                        let g = (-(c[l] - s.mean[l]).powi(2) / (2.0 * big)).exp()
                            / (2.0 * PI * big).sqrt();
                        let mu = (c[l] * var[l] + s.mean[l] * sv[l]) / big;
                        let sdp = (sv[l] * var[l] / big).sqrt();
                        let off = self.xbar_table.offset(l);
                        let dg = (c[l] - s.mean[l]) / big;
                        for (k, &e) in self.xbar_table.ends(l).iter().enumerate() {
                            let z = (e - mu) / sdp;
                            let cdf = 0.5 * erfc(-z * FRAC_1_SQRT_2);
                            s.cum[off + k] = g * cdf;
                            if want_grad {
                                let pdf = FRAC_1_SQRT_2PI * (-0.5 * z * z).exp();
                                s.dcum[off + k] = g * (dg * cdf - pdf * sv[l] / (big * sdp));
                            }
                        }
                    }
                    if want_grad {
                        s.term_grad.iter_mut().for_each(|v| *v = 0.0);
                        let integral =
                            self.xbar_table
                                .combine_with_grad(&s.cum, &s.dcum, &mut s.term_grad);
                        value += w * integral;
                        for l in 0..n {
                            s.grad_m[l] += w * s.term_grad[l];
                        }
                    } else {
                        value += w * self.xbar_table.combine(&s.cum);
                    }
                }
            }

            total += comp.weight * value;
            if let Some(g) = grad_u.as_deref_mut() {
                let affine = comp
                    .mean
                    .as_affine()
                    .expect("gradient path is only taken for affine kernels");
                let m = g.len();
                let b = affine.b();
                for l in 0..n {
                    let gm = comp.weight * s.grad_m[l];
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk += gm * b[l * m + k];
                    }
                }
            }
        }
        total
    }
}

#[inline]
fn eval_flat(f: &FlatStage, x: &[f64]) -> f64 {
    let n = x.len();
    let mut v = 0.0;
    for (i, &w) in f.weights.iter().enumerate() {
        let c = &f.centers[i * n..(i + 1) * n];
        let s = &f.variances[i * n..(i + 1) * n];
        let mut expo = 0.0;
        let mut norm = 1.0;
        for l in 0..n {
            let d = x[l] - c[l];
            expo -= d * d / (2.0 * s[l]);
            norm *= 2.0 * PI * s[l];
        }
        v += w * expo.exp() / norm.sqrt();
    }
    v
}
