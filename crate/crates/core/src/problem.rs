use sha2::{Digest, Sha256};

use crate::bellman::ValueFunction;
use crate::error::{Error, Result};
use crate::geometry::{Rect, RectUnion};
use crate::kernel::GaussianMixtureKernel;

/// A finite-horizon reach-avoid problem: reach `target` within `horizon`
/// steps while staying in `safe`, under a Gaussian-mixture kernel.
#[derive(Clone, Debug)]
pub struct ReachAvoidProblem {
    state: Rect,
    control: Rect,
    target: RectUnion,
    safe: RectUnion,
    horizon: usize,
    kernel: GaussianMixtureKernel,
    xbar: RectUnion,
}

impl ReachAvoidProblem {
    /// Validates `K ⊆ K' ⊆ X`, a positive-volume `K' ∖ K`, and consistent dimensions.
    pub fn new(
        state: Rect,
        control: Rect,
        target: RectUnion,
        safe: RectUnion,
        horizon: usize,
        kernel: GaussianMixtureKernel,
    ) -> Result<Self> {
        let n = state.dim();
        for (name, d) in [
            ("target set", target.dim()),
            ("safe set", safe.dim()),
            ("kernel state", kernel.state_dim()),
        ] {
            if d != n {
                return Err(Error::Input(format!(
                    "{name} has dimension {d}, state space has {n}"
                )));
            }
        }
        if kernel.control_dim() != control.dim() {
            return Err(Error::Input(format!(
                "kernel control dimension {} differs from control box dimension {}",
                kernel.control_dim(),
                control.dim()
            )));
        }
        if horizon == 0 {
            return Err(Error::Input("horizon must be >= 1".into()));
        }
        if !safe.covers(&target)? {
            return Err(Error::Input("target set is not contained in the safe set".into()));
        }
        if !RectUnion::single(state.clone()).covers(&safe)? {
            return Err(Error::Input("safe set is not contained in the state box".into()));
        }
        let xbar = safe.subtract(&target)?;
        if !(xbar.volume() > 0.0) {
            return Err(Error::Domain("safe set minus target set has zero volume".into()));
        }
        Ok(ReachAvoidProblem {
            state,
            control,
            target,
            safe,
            horizon,
            kernel,
            xbar,
        })
    }

    pub fn state_box(&self) -> &Rect {
        &self.state
    }

    pub fn control_box(&self) -> &Rect {
        &self.control
    }

    pub fn target(&self) -> &RectUnion {
        &self.target
    }

    pub fn safe(&self) -> &RectUnion {
        &self.safe
    }

    /// `K' ∖ K` as a disjoint rectangle union.
    pub fn xbar(&self) -> &RectUnion {
        &self.xbar
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn kernel(&self) -> &GaussianMixtureKernel {
        &self.kernel
    }

    pub fn state_dim(&self) -> usize {
        self.state.dim()
    }

    pub fn control_dim(&self) -> usize {
        self.control.dim()
    }

    pub fn terminal_value(&self) -> ValueFunction {
        ValueFunction::terminal(self.target.clone(), self.safe.clone())
            .expect("dimensions validated at construction")
    }

    /// Returns a copy with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Input("horizon must be >= 1".into()));
        }
        let mut p = self.clone();
        p.horizon = horizon;
        Ok(p)
    }

    /// Canonical text form; two problems with the same description are the same problem.
    pub fn describe(&self) -> String {
        fn rects(u: &RectUnion) -> String {
            u.rects()
                .iter()
                .map(|r| format!("{:?}..{:?}", r.lower(), r.upper()))
                .collect::<Vec<_>>()
                .join(",")
        }
        format!(
            "state {:?}..{:?}\ncontrol {:?}..{:?}\ntarget {}\nsafe {}\nhorizon {}\nkernel {}\n",
            self.state.lower(),
            self.state.upper(),
            self.control.lower(),
            self.control.upper(),
            rects(&self.target),
            rects(&self.safe),
            self.horizon,
            self.kernel.describe()
        )
    }

    /// SHA-256 of [`describe`](Self::describe), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.describe().as_bytes()))
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::kernel::AffineMeanMap;

    /// `x+ = x + u + w` on `[-1,1]^n`, `U = [-0.1,0.1]^n`, `K = [-0.1,0.1]^n`.
    pub(crate) fn regulation(n: usize, var: f64, horizon: usize) -> ReachAvoidProblem {
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
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::AffineMeanMap;

    #[test]
    fn rejects_target_outside_safe_set() {
        let kernel = GaussianMixtureKernel::single_affine(
            AffineMeanMap::integrator(1, vec![0.0]).unwrap(),
            vec![0.01],
        )
        .unwrap();
        let r = ReachAvoidProblem::new(
            Rect::cube(1, -2.0, 2.0).unwrap(),
            Rect::cube(1, -0.1, 0.1).unwrap(),
            RectUnion::single(Rect::cube(1, 0.5, 1.5).unwrap()),
            RectUnion::single(Rect::cube(1, -1.0, 1.0).unwrap()),
            3,
            kernel,
        );
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = fixtures::regulation(2, 0.01, 5);
        let b = fixtures::regulation(2, 0.01, 5);
        let c = fixtures::regulation(2, 0.02, 5);
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_ne!(a.hash(), a.with_horizon(4).unwrap().hash());
        assert!((a.xbar().volume() - 3.96).abs() < 1e-12);
    }
}
