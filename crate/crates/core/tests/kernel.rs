use rand::Rng;
use reach_adp::geometry::Rect;
use reach_adp::kernel::{AffineMeanMap, GaussianMixtureKernel};
use reach_adp::rng::stream;

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

#[test]
fn samples_follow_the_mixture_marginals() {
    let base = AffineMeanMap::new(1, 1, vec![0.8], vec![1.0], vec![0.0]).unwrap();
    let q = GaussianMixtureKernel::affine(&base, vec![(0.3, vec![-0.5], vec![0.04]), (0.7, vec![0.4], vec![0.09])]).unwrap();
    let (x, u) = ([0.5], [0.1]);
    let mut rng = stream(12, &[]);
    let mut ys: Vec<f64> = (0..20_000).map(|_| q.sample_next(&x, &u, &mut rng).unwrap()[0]).collect();
    ys.sort_by(f64::total_cmp);
    let mean = 0.8 * 0.5 + 0.1;
    let cdf = |y: f64| 0.3 * normal_cdf((y - mean + 0.5) / 0.2) + 0.7 * normal_cdf((y - mean - 0.4) / 0.3);
    let n = ys.len() as f64;
    let d = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = cdf(y);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // Kolmogorov-Smirnov critical value at the 0.1% level
    assert!(d < 1.95 / n.sqrt(), "KS distance {d}");
}

#[test]
fn box_probability_matches_sampling() {
    let base = AffineMeanMap::integrator(2, vec![0.0, 0.1]).unwrap();
    let q = GaussianMixtureKernel::single_affine(base, vec![0.02, 0.05]).unwrap();
    let mut rng = stream(3, &[]);
    for _ in 0..20 {
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-0.5..0.5)).collect();
        let u: Vec<f64> = (0..2).map(|_| rng.random_range(-0.1..0.1)).collect();
        let lo: Vec<f64> = (0..2).map(|_| rng.random_range(-0.6..0.2)).collect();
        let r = Rect::new(lo.clone(), lo.iter().map(|v| v + rng.random_range(0.1..0.6)).collect()).unwrap();
        let p = q.box_probability(&x, &u, &r).unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|_| r.contains_point(&q.sample_next(&x, &u, &mut rng).unwrap())).count();
        let f = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-9);
        assert!((f - p).abs() <= 3.0 * se + 1e-6, "{f} vs {p}");
    }
}
