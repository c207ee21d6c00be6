//! Independent checks of the GRBF closed forms: pointwise products,
//! tensor Gauss-Legendre quadrature and a high-precision erf table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reach_adp::basis::{erf, Grbf};
use reach_adp::geometry::{Rect, RectUnion};

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite rule over `[a, b]` with `panels` equal panels.
pub fn composite(a: f64, b: f64, panels: usize, rule: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    let mut pts = Vec::with_capacity(panels * rule.len());
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for &(x, w) in rule {
            pts.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
    }
    pts
}

/// Brute-force tensor quadrature of `g` over each rectangle of the union.
pub fn quadrature(g: &Grbf, u: &RectUnion, rule: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for r in u.rects() {
        let axes: Vec<Vec<(f64, f64)>> = (0..r.dim())
            .map(|l| composite(r.lower()[l], r.upper()[l], 60, rule))
            .collect();
        if r.dim() == 1 {
            total += axes[0].iter().map(|&(x, w)| w * g.eval(&[x])).sum::<f64>();
        } else {
            for &(x, wx) in &axes[0] {
                for &(y, wy) in &axes[1] {
                    total += wx * wy * g.eval(&[x, y]);
                }
            }
        }
    }
    total
}

pub fn random_grbf(rng: &mut ChaCha8Rng, n: usize) -> Grbf {
    Grbf::new(
        (0..n).map(|_| rng.random_range(-1.5..1.5)).collect(),
        (0..n).map(|_| rng.random_range(0.01..0.3)).collect(),
        rng.random_range(0.2..3.0),
    )
    .unwrap()
}

/// A union of up to three disjoint rectangles: slabs of a random box cut along the first axis.
pub fn random_union(rng: &mut ChaCha8Rng, n: usize) -> RectUnion {
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.5)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.3..2.0)).collect();
    let pieces = rng.random_range(1..=3);
    let mut cuts: Vec<f64> = (0..pieces - 1)
        .map(|_| rng.random_range(lower[0]..upper[0]))
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut edges = vec![lower[0]];
    edges.extend(cuts);
    edges.push(upper[0]);
    let mut rects = Vec::new();
    // keep every other slab so the pieces are separated
    for (i, w) in edges.windows(2).enumerate() {
        if i % 2 == 0 && w[1] > w[0] {
            let mut lo = lower.clone();
            let mut hi = upper.clone();
            lo[0] = w[0];
            hi[0] = w[1];
            rects.push(Rect::new(lo, hi).unwrap());
        }
    }
    RectUnion::new(n, rects).unwrap()
}

/// Largest relative error of `(a*b)(x)` against `a(x) b(x)` over
/// `count` random pairs, five points each.
pub fn product_identity_error(count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..count {
        let n = rng.random_range(1..=4);
        let (a, b) = (random_grbf(&mut rng, n), random_grbf(&mut rng, n));
        let p = a.product(&b).unwrap();
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let direct = a.eval(&x) * b.eval(&x);
            worst = worst.max((p.eval(&x) - direct).abs() / direct.abs().max(1e-300));
        }
    }
    worst
}

/// Largest of `|exact - quad| / max(|quad|, 1)` over `count` random
/// (GRBF, union) pairs in one and two dimensions.
pub fn box_integral_error(count: usize, seed: u64) -> f64 {
    let rule = gauss_legendre(8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for i in 0..count {
        let n = 1 + i % 2;
        let g = random_grbf(&mut rng, n);
        let u = random_union(&mut rng, n);
        let exact = g.box_integral(&u).unwrap();
        let quad = quadrature(&g, &u, &rule);
        worst = worst.max((exact - quad).abs() / quad.abs().max(1.0));
    }
    worst
}

/// Largest absolute erf error over the `x,erf` table and the number of rows.
pub fn erf_error(table: &str) -> (f64, usize) {
    let mut worst = 0.0_f64;
    let mut count = 0;
    for line in table.lines().skip(1) {
        let (x, v) = line.split_once(',').unwrap();
        let x: f64 = x.parse().unwrap();
        let v: f64 = v.parse().unwrap();
        worst = worst.max((erf(x) - v).abs());
        count += 1;
    }
    (worst, count)
}
