//! Gaussian-mixture transition kernels with diagonal covariances.
//!
//! `Q(dy | x, u) = sum_j alpha_j N(m_j(x, u), diag(sigma2_j))`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::std_normal_interval;
use crate::error::{Error, Result};
use crate::geometry::{Rect, RectUnion};

/// Mean of a mixture component as a function of state and control.
pub trait MeanMap: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn eval_into(&self, x: &[f64], u: &[f64], out: &mut [f64]);

    /// The affine form, when the map has one. Analytic control gradients
    /// are only available for affine maps.
    fn as_affine(&self) -> Option<&AffineMeanMap> {
        None
    }

    /// Stable textual identity, used for hashing problem descriptions.
    fn describe(&self) -> String;
}

/// `m(x, u) = A x + B u + offset`, with row-major `A` (n x n) and `B` (n x m).
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMeanMap {
    n: usize,
    m: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    offset: Vec<f64>,
}

impl AffineMeanMap {
    pub fn new(n: usize, m: usize, a: Vec<f64>, b: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Input("state and control dimensions must be >= 1".into()));
        }
        if a.len() != n * n {
            return Err(Error::dim(n * n, a.len()));
        }
        if b.len() != n * m {
            return Err(Error::dim(n * m, b.len()));
        }
        if offset.len() != n {
            return Err(Error::dim(n, offset.len()));
        }
        if a.iter().chain(&b).chain(&offset).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite affine map coefficient".into()));
        }
        Ok(AffineMeanMap { n, m, a, b, offset })
    }

    /// `x + u + offset`: the integrator dynamics of the regulation benchmarks.
    pub fn integrator(n: usize, offset: Vec<f64>) -> Result<Self> {
        let mut eye = vec![0.0; n * n];
        for i in 0..n {
            eye[i * n + i] = 1.0;
        }
        AffineMeanMap::new(n, n, eye.clone(), eye, offset)
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Same dynamics matrices with a different offset.
    pub fn with_offset(&self, offset: Vec<f64>) -> Result<Self> {
        AffineMeanMap::new(self.n, self.m, self.a.clone(), self.b.clone(), offset)
    }
}

impl MeanMap for AffineMeanMap {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn control_dim(&self) -> usize {
        self.m
    }

    #[inline]
    fn eval_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let mut v = self.offset[i];
            let ar = &self.a[i * self.n..(i + 1) * self.n];
            for (aij, xj) in ar.iter().zip(x) {
                v += aij * xj;
            }
            let br = &self.b[i * self.m..(i + 1) * self.m];
            for (bij, uj) in br.iter().zip(u) {
                v += bij * uj;
            }
            out[i] = v;
        }
    }

    fn as_affine(&self) -> Option<&AffineMeanMap> {
        Some(self)
    }

    fn describe(&self) -> String {
        format!(
            "affine n={} m={} a={:?} b={:?} offset={:?}",
            self.n, self.m, self.a, self.b, self.offset
        )
    }
}

/// A user-supplied nonlinear mean map.
pub struct FnMeanMap<F> {
    n: usize,
    m: usize,
    name: String,
    f: F,
}

impl<F> FnMeanMap<F>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(n: usize, m: usize, name: impl Into<String>, f: F) -> Self {
        FnMeanMap {
            n,
            m,
            name: name.into(),
            f,
        }
    }
}

impl<F> fmt::Debug for FnMeanMap<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnMeanMap")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("name", &self.name)
            .finish()
    }
}

impl<F> MeanMap for FnMeanMap<F>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn state_dim(&self) -> usize {
        self.n
    }

    fn control_dim(&self) -> usize {
        self.m
    }

    fn eval_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.f)(x, u, out)
    }

    fn describe(&self) -> String {
        format!("fn n={} m={} name={}", self.n, self.m, self.name)
    }
}

#[derive(Clone, Debug)]
pub struct Component {
    pub weight: f64,
    pub mean: Arc<dyn MeanMap>,
    pub variance: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GaussianMixtureKernel {
    n: usize,
    m: usize,
    components: Vec<Component>,
    cumulative: Vec<f64>,
    std_dev: Vec<Vec<f64>>,
}

impl GaussianMixtureKernel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::Input("kernel needs at least one component".into()));
        };
        let n = first.mean.state_dim();
        let m = first.mean.control_dim();
        let mut total = 0.0;
        for (j, c) in components.iter().enumerate() {
            if c.mean.state_dim() != n {
                return Err(Error::dim(n, c.mean.state_dim()));
            }
            if c.mean.control_dim() != m {
                return Err(Error::dim(m, c.mean.control_dim()));
            }
            if c.variance.len() != n {
                return Err(Error::dim(n, c.variance.len()));
            }
            if c.variance.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(Error::Input(format!("component {j} has a non-positive variance")));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::Input(format!("component {j} has a negative weight")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let mut cumulative = Vec::with_capacity(components.len());
        let mut acc = 0.0;
        for c in &components {
            acc += c.weight;
            cumulative.push(acc);
        }
        let std_dev = components
            .iter()
            .map(|c| c.variance.iter().map(|s| s.sqrt()).collect())
            .collect();
        Ok(GaussianMixtureKernel {
            n,
            m,
            components,
            cumulative,
            std_dev,
        })
    }

    /// Mixture sharing one affine map, with per-component
    /// `(weight, extra offset, variance)`; component means are
    /// `A x + B u + offset + extra offset`.
    pub fn affine(base: &AffineMeanMap, parts: Vec<(f64, Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let mut components = Vec::with_capacity(parts.len());
        for (weight, shift, variance) in parts {
            if shift.len() != base.n {
                return Err(Error::dim(base.n, shift.len()));
            }
            let offset = base.offset.iter().zip(&shift).map(|(a, b)| a + b).collect();
            components.push(Component {
                weight,
                mean: Arc::new(base.with_offset(offset)?),
                variance,
            });
        }
        GaussianMixtureKernel::new(components)
    }

    /// Single Gaussian component `N(A x + B u + offset, diag(variance))`.
    pub fn single_affine(map: AffineMeanMap, variance: Vec<f64>) -> Result<Self> {
        GaussianMixtureKernel::new(vec![Component {
            weight: 1.0,
            mean: Arc::new(map),
            variance,
        }])
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn is_affine(&self) -> bool {
        self.components.iter().all(|c| c.mean.as_affine().is_some())
    }

    #[inline]
    pub(crate) fn mean_into(&self, j: usize, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.components[j].mean.eval_into(x, u, out);
    }

    pub(crate) fn std_dev(&self, j: usize) -> &[f64] {
        &self.std_dev[j]
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::dim(self.n, x.len()));
        }
        if u.len() != self.m {
            return Err(Error::dim(self.m, u.len()));
        }
        Ok(())
    }

    /// Index of the component selected by a uniform draw `t` in `[0, 1)`;
    /// a draw exactly on a boundary goes to the lower index.
    pub fn select_component(&self, t: f64) -> usize {
        self.cumulative
            .iter()
            .zip(&self.components)
            .position(|(&c, comp)| comp.weight > 0.0 && t <= c)
            .unwrap_or_else(|| {
                self.components
                    .iter()
                    .rposition(|c| c.weight > 0.0)
                    .expect("weights sum to one")
            })
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, x: &[f64], u: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.check_dims(x, u)?;
        let mut out = vec![0.0; self.n];
        self.sample_into(x, u, rng, &mut out);
        Ok(out)
    }

    /// Draws one uniform for the component, then one standard normal per
    /// dimension. The number of draws per step never depends on the inputs.
    pub fn sample_into<R: Rng + ?Sized>(&self, x: &[f64], u: &[f64], rng: &mut R, out: &mut [f64]) {
        let t: f64 = rng.random();
        let j = self.select_component(t);
        self.mean_into(j, x, u, out);
        for (v, sd) in out.iter_mut().zip(&self.std_dev[j]) {
            let z: f64 = rng.sample(StandardNormal);
            *v += sd * z;
        }
    }

    /// `Q(rect | x, u)`.
    pub fn box_probability(&self, x: &[f64], u: &[f64], rect: &Rect) -> Result<f64> {
        self.check_dims(x, u)?;
        if rect.dim() != self.n {
            return Err(Error::dim(self.n, rect.dim()));
        }
        let mut mean = vec![0.0; self.n];
        let mut p = 0.0;
        for (j, c) in self.components.iter().enumerate() {
            self.mean_into(j, x, u, &mut mean);
            p += c.weight * gaussian_rect_mass(&mean, &self.std_dev[j], rect);
        }
        Ok(p.clamp(0.0, 1.0))
    }

    /// `Q(union | x, u)` for an interior-disjoint union.
    pub fn union_probability(&self, x: &[f64], u: &[f64], bu: &RectUnion) -> Result<f64> {
        let mut p = 0.0;
        for r in bu.rects() {
            p += self.box_probability(x, u, r)?;
        }
        Ok(p.clamp(0.0, 1.0))
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        for c in &self.components {
            s.push_str(&format!(
                "component weight={:?} variance={:?} mean=[{}];",
                c.weight,
                c.variance,
                c.mean.describe()
            ));
        }
        s
    }
}

/// Mass of `N(mean, diag(sd^2))` on a rectangle.
pub(crate) fn gaussian_rect_mass(mean: &[f64], sd: &[f64], rect: &Rect) -> f64 {
    let mut p = 1.0;
    for l in 0..mean.len() {
        p *= std_normal_interval(
            (rect.lower()[l] - mean[l]) / sd[l],
            (rect.upper()[l] - mean[l]) / sd[l],
        );
        if p == 0.0 {
            break;
        }
    }
    p
}
