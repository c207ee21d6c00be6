//! Gaussian radial basis functions (GRBFs).
//!
//! A GRBF is a scaled diagonal-covariance Gaussian density
//!
//! ```text
//! g(x) = scale * prod_l (2 pi s_l)^(-1/2) exp(-(x_l - c_l)^2 / (2 s_l))
//! ```
//!
//! The family is closed under pointwise products, and integrals over unions of
//! rectangles factor into one-dimensional error-function differences. Those two
//! facts make every Bellman backup over a Gaussian-mixture kernel analytic.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::geometry::RectUnion;

/// `1 / sqrt(2 pi)`.
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// The error function `(2 / sqrt(pi)) * int_0^x exp(-t^2) dt`.
///
/// Backed by the `libm` port of the FreeBSD implementation, whose rational
/// approximations are accurate to about one ulp over the whole real line.
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Complementary error function `1 - erf(x)`, accurate in the upper tail.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `Phi(hi) - Phi(lo)` for standardized bounds, evaluated on the side of the
/// origin that avoids cancellation.
#[inline]
pub fn std_normal_interval(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo >= 0.0 {
        0.5 * (erfc(lo / SQRT_2) - erfc(hi / SQRT_2))
    } else if hi <= 0.0 {
        0.5 * (erfc(-hi / SQRT_2) - erfc(-lo / SQRT_2))
    } else {
        0.5 * (erf(hi / SQRT_2) - erf(lo / SQRT_2))
    }
}

/// A scaled Gaussian radial basis function with diagonal covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct Grbf {
    center: Vec<f64>,
    variance: Vec<f64>,
    scale: f64,
}

impl Grbf {
    pub fn new(center: Vec<f64>, variance: Vec<f64>, scale: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Input("basis function needs dimension >= 1".into()));
        }
        if center.len() != variance.len() {
            return Err(Error::dim(center.len(), variance.len()));
        }
        if variance.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Input("basis variances must be positive and finite".into()));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Input("basis scale must be positive and finite".into()));
        }
        Ok(Grbf {
            center,
            variance,
            scale,
        })
    }

    /// A unit-scale element, the form used for stage bases.
    pub fn unit(center: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        Grbf::new(center, variance, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Peak value `scale * prod_l (2 pi s_l)^(-1/2)`.
    pub fn peak(&self) -> f64 {
        self.scale
            * self
                .variance
                .iter()
                .map(|s| 1.0 / (2.0 * PI * s).sqrt())
                .product::<f64>()
    }

    /// Pointwise value; assumes `x.len() == self.dim()`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut expo = 0.0;
        let mut norm = 1.0;
        for ((&xl, &cl), &sl) in x.iter().zip(&self.center).zip(&self.variance) {
            let d = xl - cl;
            expo -= d * d / (2.0 * sl);
            norm *= 2.0 * PI * sl;
        }
        self.scale * expo.exp() / norm.sqrt()
    }

    pub fn try_eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::dim(self.dim(), x.len()));
        }
        Ok(self.eval(x))
    }

    /// The GRBF equal to `self(x) * other(x)` at every `x`.
    ///
    /// Per dimension the product has center `(c1 s2 + c2 s1) / (s1 + s2)`,
    /// variance `s1 s2 / (s1 + s2)`, and contributes the factor
    /// `(2 pi (s1 + s2))^(-1/2) exp(-(c1 - c2)^2 / (2 (s1 + s2)))` to the scale.
    pub fn product(&self, other: &Grbf) -> Result<Grbf> {
        if other.dim() != self.dim() {
            return Err(Error::dim(self.dim(), other.dim()));
        }
        let n = self.dim();
        let mut center = Vec::with_capacity(n);
        let mut variance = Vec::with_capacity(n);
        let mut log_scale = 0.0;
        let mut norm = 1.0;
        for l in 0..n {
            let (c1, s1) = (self.center[l], self.variance[l]);
            let (c2, s2) = (other.center[l], other.variance[l]);
            let s = s1 + s2;
            center.push((c1 * s2 + c2 * s1) / s);
            variance.push(s1 * s2 / s);
            let d = c1 - c2;
            log_scale -= d * d / (2.0 * s);
            norm *= 2.0 * PI * s;
        }
        let scale = self.scale * other.scale * log_scale.exp() / norm.sqrt();
        Ok(Grbf {
            center,
            variance,
            scale,
        })
    }

    /// Integral of the function over a union of rectangles:
    /// `scale * sum_boxes prod_l (Phi((b_l - c_l)/sqrt(s_l)) - Phi((a_l - c_l)/sqrt(s_l)))`.
    pub fn box_integral(&self, bu: &RectUnion) -> Result<f64> {
        if bu.dim() != self.dim() {
            return Err(Error::dim(self.dim(), bu.dim()));
        }
        let sd: Vec<f64> = self.variance.iter().map(|s| s.sqrt()).collect();
        let mut total = 0.0;
        for r in bu.rects() {
            let mut mass = 1.0;
            for l in 0..self.dim() {
                let c = self.center[l];
                mass *= std_normal_interval((r.lower()[l] - c) / sd[l], (r.upper()[l] - c) / sd[l]);
                if mass == 0.0 {
                    break;
                }
            }
            total += mass;
        }
        Ok(self.scale * total)
    }
}

/// The basis of one approximation stage and, once the stage LP is solved,
/// its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GrbfStage {
    stage: usize,
    elements: Vec<Grbf>,
    weights: Option<Vec<f64>>,
}

impl GrbfStage {
    pub fn new(stage: usize, elements: Vec<Grbf>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::Input("a stage basis needs at least one element".into()));
        };
        let n = first.dim();
        if let Some(bad) = elements.iter().find(|g| g.dim() != n) {
            return Err(Error::dim(n, bad.dim()));
        }
        Ok(GrbfStage {
            stage,
            elements,
            weights: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.set_weights(weights)?;
        Ok(self)
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.elements.len() {
            return Err(Error::dim(self.elements.len(), weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("non-finite stage weight".into()));
        }
        self.weights = Some(weights);
        Ok(())
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Grbf] {
        &self.elements
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Values of every element at `x`, one row of the stage LP.
    pub fn feature_row(&self, x: &[f64]) -> Vec<f64> {
        self.elements.iter().map(|g| g.eval(x)).collect()
    }

    /// `sum_i w_i phi_i(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let w = self
            .weights
            .as_ref()
            .ok_or_else(|| Error::State(format!("stage {} has no weights", self.stage)))?;
        if x.len() != self.dim() {
            return Err(Error::dim(self.dim(), x.len()));
        }
        Ok(self
            .elements
            .iter()
            .zip(w)
            .map(|(g, wi)| wi * g.eval(x))
            .sum())
    }
}

/// Per-dimension endpoint table of a rectangle union, so that separable
/// integrals over the union need one CDF evaluation per distinct coordinate.
#[derive(Clone, Debug)]
pub(crate) struct SeparableUnion {
    dim: usize,
    ends: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    /// For every rectangle and dimension, flat indices (into the concatenated
    /// endpoint list) of its lower and upper coordinate.
    spans: Vec<(usize, usize)>,
}

impl SeparableUnion {
    pub(crate) fn new(bu: &RectUnion) -> Self {
        let dim = bu.dim();
        let mut ends: Vec<Vec<f64>> = vec![Vec::new(); dim];
        for r in bu.rects() {
            for l in 0..dim {
                ends[l].push(r.lower()[l]);
                ends[l].push(r.upper()[l]);
            }
        }
        for e in &mut ends {
            e.sort_by(f64::total_cmp);
            e.dedup();
        }
        let mut offsets = Vec::with_capacity(dim);
        let mut acc = 0;
        for e in &ends {
            offsets.push(acc);
            acc += e.len();
        }
        let mut spans = Vec::with_capacity(bu.rects().len() * dim);
        for r in bu.rects() {
            for l in 0..dim {
                let lo = ends[l].partition_point(|&v| v < r.lower()[l]);
                let hi = ends[l].partition_point(|&v| v < r.upper()[l]);
                spans.push((offsets[l] + lo, offsets[l] + hi));
            }
        }
        SeparableUnion {
            dim,
            ends,
            offsets,
            spans,
        }
    }

    pub(crate) fn total_ends(&self) -> usize {
        self.ends.iter().map(Vec::len).sum()
    }

    pub(crate) fn ends(&self, l: usize) -> &[f64] {
        &self.ends[l]
    }

    pub(crate) fn offset(&self, l: usize) -> usize {
        self.offsets[l]
    }

    #[cfg(test)]
    pub(crate) fn n_rects(&self) -> usize {
        self.spans.len().checked_div(self.dim).unwrap_or(0)
    }

    /// `sum_boxes prod_l (cum[hi] - cum[lo])` for per-endpoint cumulative values.
    #[inline]
    pub(crate) fn combine(&self, cum: &[f64]) -> f64 {
        let mut total = 0.0;
        for span in self.spans.chunks_exact(self.dim) {
            let mut p = 1.0;
            for &(lo, hi) in span {
                p *= cum[hi] - cum[lo];
            }
            total += p;
        }
        total
    }

    /// Like [`combine`](Self::combine) and additionally accumulates the
    /// derivative of the result with respect to a per-dimension shift, given
    /// the per-endpoint derivatives `dcum`.
    #[inline]
    pub(crate) fn combine_with_grad(&self, cum: &[f64], dcum: &[f64], grad: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for span in self.spans.chunks_exact(self.dim) {
            let mut p = 1.0;
            for &(lo, hi) in span {
                p *= cum[hi] - cum[lo];
            }
            total += p;
            for (l, &(lo, hi)) in span.iter().enumerate() {
                let mut rest = 1.0;
                for (k, &(lo2, hi2)) in span.iter().enumerate() {
                    if k != l {
                        rest *= cum[hi2] - cum[lo2];
                    }
                }
                grad[l] += rest * (dcum[hi] - dcum[lo]);
            }
        }
        total
    }
}
