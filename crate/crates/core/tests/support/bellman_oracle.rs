//! Monte-Carlo reference for the Bellman backup of a GRBF value function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use reach_adp::basis::{Grbf, GrbfStage};
use reach_adp::bellman::ValueFunction;
use reach_adp::geometry::{Rect, RectUnion};
use reach_adp::kernel::{AffineMeanMap, GaussianMixtureKernel};

pub struct Instance {
    pub value: ValueFunction,
    pub kernel: GaussianMixtureKernel,
    /// (weight, A, B, offset, sd) per component, kept independently of the kernel.
    parts: Vec<(f64, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)>,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, size: usize) -> Instance {
    let m = rng.random_range(1..=2);
    let safe_box = Rect::cube(n, -1.0, 1.0).unwrap();
    let mut safe = RectUnion::single(safe_box);
    if n == 2 && rng.random_bool(0.5) {
        let obstacle = Rect::new(vec![0.3, -0.8], vec![0.6, -0.2]).unwrap();
        safe = safe.subtract(&RectUnion::single(obstacle)).unwrap();
    }
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-0.4..0.4)).collect();
    let h = rng.random_range(0.05..0.3);
    let target = RectUnion::single(
        Rect::new(c.iter().map(|v| v - h).collect(), c.iter().map(|v| v + h).collect()).unwrap(),
    );
    let safe = safe.subtract(&target).unwrap();
    let safe = {
        let mut rects = safe.rects().to_vec();
        rects.extend(target.rects().iter().cloned());
        RectUnion::new(n, rects).unwrap()
    };
    let xbar = safe.subtract(&target).unwrap();
    let elements = (0..size)
        .map(|_| {
            Grbf::unit(
                xbar.sample_uniform(rng).unwrap(),
                (0..n).map(|_| rng.random_range(0.02..0.1)).collect(),
            )
            .unwrap()
        })
        .collect();
    let weights = (0..size).map(|_| rng.random_range(-0.05..0.2)).collect();
    let stage = GrbfStage::new(0, elements).unwrap().with_weights(weights).unwrap();
    let value = ValueFunction::from_stage(target, safe, stage).unwrap();

    let a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let base = AffineMeanMap::new(n, m, a.clone(), b.clone(), vec![0.0; n]).unwrap();
    let j = rng.random_range(1..=3);
    let raw: Vec<f64> = (0..j).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..j - 1].iter().sum();
    weights[j - 1] = 1.0 - head;
    let mut spec = Vec::new();
    let mut parts = Vec::new();
    for w in weights {
        let shift: Vec<f64> = (0..n).map(|_| rng.random_range(-0.2..0.2)).collect();
        let var: Vec<f64> = (0..n).map(|_| rng.random_range(0.002..0.05)).collect();
        parts.push((w, a.clone(), b.clone(), shift.clone(), var.iter().map(|v| v.sqrt()).collect()));
        spec.push((w, shift, var));
    }
    let kernel = GaussianMixtureKernel::affine(&base, spec).unwrap();
    Instance {
        value,
        kernel,
        parts,
        x: (0..n).map(|_| rng.random_range(-0.8..0.8)).collect(),
        u: (0..m).map(|_| rng.random_range(-0.3..0.3)).collect(),
    }
}

/// Mean and standard error of `V(y)` for `y` drawn from the mixture by
/// direct simulation.
pub fn monte_carlo(inst: &Instance, samples: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = inst.x.len();
    let m = inst.u.len();
    let mut y = vec![0.0; n];
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let t: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = inst.parts.len() - 1;
        for (i, p) in inst.parts.iter().enumerate() {
            acc += p.0;
            if t < acc {
                pick = i;
                break;
            }
        }
        let (_, a, b, off, sd) = &inst.parts[pick];
        for i in 0..n {
            let mut mean = off[i];
            for k in 0..n {
                mean += a[i * n + k] * inst.x[k];
            }
            for k in 0..m {
                mean += b[i * m + k] * inst.u[k];
            }
            let z: f64 = rng.sample(StandardNormal);
            y[i] = mean + sd[i] * z;
        }
        let v = inst.value.eval(&y).unwrap();
        s1 += v;
        s2 += v * v;
    }
    let mean = s1 / samples as f64;
    let var = (s2 / samples as f64 - mean * mean).max(0.0);
    (mean, (var / samples as f64).sqrt())
}

/// Compares the analytic backup with a `samples`-draw Monte-Carlo mean on
/// `count` random 2D instances with five basis elements. Returns a line per
/// instance outside three standard errors.
pub fn monte_carlo_misses(count: usize, samples: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut misses = Vec::new();
    for i in 0..count {
        let inst = random_instance(&mut rng, 2, 5);
        let analytic = inst.value.apply(&inst.kernel, &inst.x, &inst.u).unwrap();
        let (mc, se) = monte_carlo(&inst, samples, &mut rng);
        if (analytic - mc).abs() > 3.0 * se + 1e-12 {
            misses.push(format!("instance {i}: analytic {analytic}, Monte Carlo {mc} +- {se}"));
        }
    }
    misses
}
