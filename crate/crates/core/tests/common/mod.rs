#![allow(dead_code)]

use reach_adp::geometry::{Rect, RectUnion};
use reach_adp::kernel::{AffineMeanMap, GaussianMixtureKernel};
use reach_adp::problem::ReachAvoidProblem;

/// `x+ = x + u + w`, `w ~ N(0, var I)`, on `[-1,1]^n` with `K = U = [-0.1,0.1]^n`.
pub fn regulation(n: usize, var: f64, horizon: usize) -> ReachAvoidProblem {
    let kernel = GaussianMixtureKernel::single_affine(
        AffineMeanMap::integrator(n, vec![0.0; n]).unwrap(),
        vec![var; n],
    )
    .unwrap();
    ReachAvoidProblem::new(
        Rect::cube(n, -1.0, 1.0).unwrap(),
        Rect::cube(n, -0.1, 0.1).unwrap(),
        RectUnion::single(Rect::cube(n, -0.1, 0.1).unwrap()),
        RectUnion::single(Rect::cube(n, -1.0, 1.0).unwrap()),
        horizon,
        kernel,
    )
    .unwrap()
}
