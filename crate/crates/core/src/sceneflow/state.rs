use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraRig, Plane, RigidMotion};
use crate::segmentation::Superpixelization;

/// Plane and object label of one superpixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub plane: Plane,
    pub object: usize,
}

/// Piecewise-rigid scene: one assignment per superpixel and one rigid motion
/// (frame m to m+1, reference camera) per object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFlowState {
    pub assignments: Vec<Assignment>,
    pub motions: Vec<RigidMotion>,
}

impl SceneFlowState {
    pub fn new(assignments: Vec<Assignment>, motions: Vec<RigidMotion>) -> Self {
        Self { assignments, motions }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    #[inline]
    pub fn plane(&self, i: usize) -> &Plane {
        &self.assignments[i].plane
    }

    #[inline]
    pub fn motion_of(&self, i: usize) -> &RigidMotion {
        &self.motions[self.assignments[i].object]
    }

    /// Checks object references, motion validity and positive depth of every
    /// plane over its superpixel.
    pub fn validate(&self, seg: &Superpixelization, rig: &CameraRig) -> Result<()> {
        if self.assignments.len() != seg.len() {
            return Err(Error::dims(format!("{} assignments for {} superpixels", self.assignments.len(), seg.len())));
        }
        for m in &self.motions {
            m.validate()?;
        }
        let w = seg.width();
        for (i, a) in self.assignments.iter().enumerate() {
            if a.object >= self.motions.len() {
                return Err(Error::InvalidMotion(format!("superpixel {i} references missing object {}", a.object)));
            }
            if !a.plane.is_finite() {
                return Err(Error::InvalidPlane(format!("superpixel {i} has a non-finite plane")));
            }
            for &p in seg.region(i) {
                if !(a.plane.inverse_depth(rig, (p % w) as f64, (p / w) as f64) > 0.0) {
                    return Err(Error::InvalidPlane(format!("superpixel {i} has non-positive depth at pixel {p}")));
                }
            }
        }
        Ok(())
    }
}

/// Energy weights, truncation thresholds and solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    /// Brightness constancy across the window.
    pub theta1: f64,
    /// Sparse feature reprojection.
    pub theta2: f64,
    /// Derivative-domain blur fidelity.
    pub theta3: f64,
    /// Boundary disparity agreement.
    pub theta4: f64,
    /// Normal orientation agreement.
    pub theta5: f64,
    /// Object-label change penalty.
    pub theta6: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub lambda: f64,
    /// Brightness cost per channel of a sample hidden behind another
    /// superpixel; only charged when the problem carries a visibility map.
    pub occlusion: f64,
    /// Shutter duty cycle.
    pub tau: f64,
    /// Primal-dual step sizes; `None` picks the stability bound.
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub outer_iters: usize,
    pub pd_iters: usize,
    pub cg_iters: usize,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            theta1: 3.0,
            theta2: 1.5,
            theta3: 600.0,
            theta4: 0.6,
            theta5: 0.3,
            theta6: 0.3,
            alpha1: 3.0,
            alpha2: 3.0,
            alpha3: 0.5,
            lambda: 0.1,
            occlusion: 0.1,
            tau: 0.8,
            gamma: None,
            eta: None,
            outer_iters: 5,
            pd_iters: 50,
            cg_iters: 5,
        }
    }
}

impl EnergyParams {
    /// All six term weights set to zero.
    pub fn zero_weights() -> Self {
        Self { theta1: 0.0, theta2: 0.0, theta3: 0.0, theta4: 0.0, theta5: 0.0, theta6: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.theta1, self.theta2, self.theta3, self.theta4, self.theta5, self.theta6];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("term weights must be finite and non-negative".into()));
        }
        if [self.alpha1, self.alpha2, self.alpha3, self.lambda].iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Config("alpha1..alpha3 and lambda must be positive".into()));
        }
        if !(self.occlusion.is_finite() && self.occlusion >= 0.0) {
            return Err(Error::Config("occlusion must be finite and non-negative".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        for (name, s) in [("gamma", self.gamma), ("eta", self.eta)] {
            if let Some(v) = s {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Config(format!("{name} must be positive")));
                }
            }
        }
        if self.outer_iters == 0 || self.pd_iters == 0 || self.cg_iters == 0 {
            return Err(Error::Config("iteration counts must be at least 1".into()));
        }
        Ok(())
    }
}
