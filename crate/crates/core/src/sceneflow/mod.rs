//! Piecewise-rigid scene flow: the energy over per-superpixel planes and
//! per-object motions, and its minimization.

mod energy;
mod icm;
mod optimize;
mod project;
mod state;

pub use energy::{
    label_geometry, normal_alignment, pair_terms, smooth_depth, smooth_motion_boundary, smooth_orientation, smoothness_breakdown,
    total_energy, EnergyBreakdown, ImageGeometry, LabelGeometry, PairTerms, SceneFlowProblem, UnaryTerms,
};
pub use icm::{exhaustive_minimum, icm, labeling_energy, unary_argmin, LabelEnergy};
pub use optimize::{optimize_scene_flow, optimize_with, ProposalEnergy, SceneFlowOptions, SceneFlowOutcome};
pub use project::{dense_labels, disparity, fill_holes, forward_flow, kernel_field, project_labels, zbuffer, Visibility};
pub use state::{Assignment, EnergyParams, SceneFlowState};
