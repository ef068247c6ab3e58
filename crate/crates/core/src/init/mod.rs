//! Initialization: stereo disparity, sparse correspondences, plane fits and
//! rigid-motion hypotheses.

mod features;
mod planes;
mod ransac;
mod sgm;

pub use features::{harris_corners, match_features, Correspondences, FeatureParams, Match};
pub use planes::fit_planes;
pub use ransac::{ransac_motion_hypotheses, RansacParams};
pub use sgm::compute_disparity;
