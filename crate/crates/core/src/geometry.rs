//! Axis-aligned hyper-rectangles and finite unions of interior-disjoint ones.
//!
//! Rectangles are closed: a point on a face is inside. Unions are used for
//! the target set, the safe set, their difference, and obstacle sets.

use rand::Rng;

use crate::error::{Error, Result};

/// A closed axis-aligned hyper-rectangle `[lower_0, upper_0] x ... x [lower_{n-1}, upper_{n-1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Rect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Input("rectangle must have dimension >= 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::dim(lower.len(), upper.len()));
        }
        for (l, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::Input(format!("non-finite bound in dimension {l}")));
            }
            if a > b {
                return Err(Error::Input(format!(
                    "lower bound {a} exceeds upper bound {b} in dimension {l}"
                )));
            }
        }
        Ok(Rect { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Rect::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (b - a))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .product()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(a, b)| a >= b)
    }

    /// Closed membership; assumes `x.len() == self.dim()`.
    #[inline]
    pub fn contains_point(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&a, &b))| a <= v && v <= b)
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(Error::dim(self.dim(), x.len()));
        }
        Ok(self.contains_point(x))
    }

    /// Open membership (strict inequalities in every dimension).
    pub fn interior_contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&a, &b))| a < v && v < b)
    }

    /// Intersection, or `None` when it has no interior.
    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for l in 0..self.dim() {
            let a = self.lower[l].max(other.lower[l]);
            let b = self.upper[l].min(other.upper[l]);
            if a >= b {
                return None;
            }
            lower.push(a);
            upper.push(b);
        }
        Some(Rect { lower, upper })
    }

    /// Clamp a point onto the rectangle in place.
    pub fn project(&self, x: &mut [f64]) {
        for (v, (&a, &b)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(a, b);
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.sample_into(rng, &mut x);
        x
    }

    pub(crate) fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (v, (&a, &b)) in out.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            let t: f64 = rng.random();
            *v = a + (b - a) * t;
        }
    }

    /// Pieces of `self` outside `cut`, built by per-dimension slab splitting.
    /// Pieces are pairwise interior-disjoint; zero-width pieces are dropped.
    fn minus(&self, cut: &Rect) -> Vec<Rect> {
        if self.intersection(cut).is_none() {
            return if self.is_degenerate() {
                Vec::new()
            } else {
                vec![self.clone()]
            };
        }
        let mut pieces = Vec::new();
        let mut core = self.clone();
        for l in 0..self.dim() {
            if core.lower[l] < cut.lower[l] {
                let mut below = core.clone();
                below.upper[l] = cut.lower[l];
                pieces.push(below);
                core.lower[l] = cut.lower[l];
            }
            if core.upper[l] > cut.upper[l] {
                let mut above = core.clone();
                above.lower[l] = cut.upper[l];
                pieces.push(above);
                core.upper[l] = cut.upper[l];
            }
        }
        pieces.retain(|p| !p.is_degenerate());
        pieces
    }
}

/// A finite union of closed rectangles with pairwise disjoint interiors.
#[derive(Clone, Debug, PartialEq)]
pub struct RectUnion {
    dim: usize,
    rects: Vec<Rect>,
}

impl RectUnion {
    /// Builds a union, rejecting mixed dimensions and overlapping interiors.
    pub fn new(dim: usize, rects: Vec<Rect>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("union dimension must be >= 1".into()));
        }
        for r in &rects {
            if r.dim() != dim {
                return Err(Error::dim(dim, r.dim()));
            }
        }
        for i in 0..rects.len() {
            for j in (i + 1)..rects.len() {
                if rects[i].intersection(&rects[j]).is_some() {
                    return Err(Error::Input(format!(
                        "rectangles {i} and {j} have overlapping interiors"
                    )));
                }
            }
        }
        Ok(RectUnion { dim, rects })
    }

    pub fn empty(dim: usize) -> Self {
        RectUnion {
            dim,
            rects: Vec::new(),
        }
    }

    pub fn single(rect: Rect) -> Self {
        RectUnion {
            dim: rect.dim(),
            rects: vec![rect],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    #[inline]
    pub fn contains_point(&self, x: &[f64]) -> bool {
        self.rects.iter().any(|r| r.contains_point(x))
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.dim {
            return Err(Error::dim(self.dim, x.len()));
        }
        Ok(self.contains_point(x))
    }

    pub fn interior_contains(&self, x: &[f64]) -> bool {
        self.rects.iter().any(|r| r.interior_contains(x))
    }

    pub fn volume(&self) -> f64 {
        self.rects.iter().map(Rect::volume).sum()
    }

    /// Volume of `self ∩ other`.
    pub fn intersection_volume(&self, other: &RectUnion) -> f64 {
        let mut v = 0.0;
        for a in &self.rects {
            for b in &other.rects {
                if let Some(c) = a.intersection(b) {
                    v += c.volume();
                }
            }
        }
        v
    }

    /// `self ∖ inner` as a disjoint union of non-degenerate rectangles.
    pub fn subtract(&self, inner: &RectUnion) -> Result<RectUnion> {
        if inner.dim != self.dim {
            return Err(Error::dim(self.dim, inner.dim));
        }
        let mut pieces: Vec<Rect> = self
            .rects
            .iter()
            .filter(|r| !r.is_degenerate())
            .cloned()
            .collect();
        for cut in inner.rects.iter().filter(|r| !r.is_degenerate()) {
            pieces = pieces.iter().flat_map(|p| p.minus(cut)).collect();
        }
        Ok(RectUnion {
            dim: self.dim,
            rects: pieces,
        })
    }

    /// True when every point of `other` lies in `self`, up to a relative
    /// volume tolerance of 1e-12.
    pub fn covers(&self, other: &RectUnion) -> Result<bool> {
        let rest = other.subtract(self)?;
        Ok(rest.volume() <= 1e-12 * other.volume().max(f64::MIN_POSITIVE))
    }

    /// Smallest rectangle containing every member, or `None` for an empty union.
    pub fn bounding_rect(&self) -> Option<Rect> {
        let first = self.rects.first()?;
        let mut lower = first.lower.clone();
        let mut upper = first.upper.clone();
        for r in &self.rects[1..] {
            for l in 0..self.dim {
                lower[l] = lower[l].min(r.lower[l]);
                upper[l] = upper[l].max(r.upper[l]);
            }
        }
        Some(Rect { lower, upper })
    }

    /// Uniform draw: a member is picked with probability proportional to its
    /// volume, then coordinates are uniform inside it.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.dim];
        self.sample_into(rng, &mut x)?;
        Ok(x)
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::dim(self.dim, out.len()));
        }
        let total = self.volume();
        if !(total > 0.0) {
            return Err(Error::Domain("cannot sample from a zero-volume set".into()));
        }
        let pick: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for r in &self.rects {
            let v = r.volume();
            if v <= 0.0 {
                continue;
            }
            acc += v;
            chosen = Some(r);
            if pick < acc {
                break;
            }
        }
        chosen.expect("positive volume implies a member").sample_into(rng, out);
        Ok(())
    }
}
