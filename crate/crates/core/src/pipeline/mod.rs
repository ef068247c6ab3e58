//! Outer alternation between the scene-flow step and the latent-image step,
//! and the evaluation metrics.

mod metrics;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use metrics::{
    disparity_outlier_rate, flow_outlier_rate, psnr, psnr_checked, ssim, Evaluation, ImageQuality, MetricsReport,
    RuntimeBreakdown, PSNR_CAP,
};

use crate::deblur::{primal_dual_deblur_warm, tv_value, DeblurOutput, DualState};
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, Plane, WarpDirection};
use crate::init::{
    compute_disparity, fit_planes, match_features, ransac_motion_hypotheses, Correspondences, FeatureParams,
    RansacParams,
};
use crate::raster::{DisparityMap, FlowField, Frame, ImageId, SixPack, View};
use crate::sceneflow::{
    disparity, forward_flow, optimize_with, Assignment, EnergyBreakdown, EnergyParams, SceneFlowOptions,
    SceneFlowProblem, SceneFlowState, Visibility,
};
use crate::segmentation::{segment, Superpixelization};

/// Temporal extent of the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameMode {
    /// Frames m and m+1 only; backward flow is the reflected forward flow.
    TwoFrame,
    /// Frames m-1, m and m+1.
    ThreeFrame,
}

impl FrameMode {
    /// Images the mode needs.
    pub fn required(self) -> Vec<ImageId> {
        match self {
            FrameMode::ThreeFrame => ImageId::ALL.to_vec(),
            FrameMode::TwoFrame => ImageId::ALL.into_iter().filter(|id| id.frame != Frame::Prev).collect(),
        }
    }
}

/// Everything `joint_estimate` needs besides the images and the rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub energy: EnergyParams,
    pub mode: FrameMode,
    /// Target number of superpixels.
    pub superpixels: usize,
    pub compactness: f64,
    pub disparity_weight: f64,
    pub max_disparity: usize,
    /// Number of rigid-motion hypotheses (the identity is added on top).
    pub hypotheses: usize,
    pub features: FeatureParams,
    pub ransac: RansacParams,
    pub sceneflow: SceneFlowOptions,
    /// Stop once the combined energy decreases by less than this fraction.
    pub early_exit: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            energy: EnergyParams::default(),
            mode: FrameMode::ThreeFrame,
            superpixels: 200,
            compactness: 10.0,
            disparity_weight: 1.0,
            max_disparity: 48,
            hypotheses: 3,
            features: FeatureParams::default(),
            ransac: RansacParams::default(),
            sceneflow: SceneFlowOptions::default(),
            early_exit: 1e-4,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.energy.validate()?;
        if self.superpixels == 0 {
            return Err(Error::Config("superpixels must be positive".into()));
        }
        if !(self.compactness > 0.0 && self.disparity_weight >= 0.0) {
            return Err(Error::Config("compactness must be positive and disparity_weight non-negative".into()));
        }
        if !(self.early_exit >= 0.0) {
            return Err(Error::Config("early_exit must be non-negative".into()));
        }
        Ok(())
    }
}

/// Energies after one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Scene-flow terms at the end of the iteration (full weights).
    pub terms: EnergyBreakdown,
    /// Total variation of the latents.
    pub tv: f64,
    /// Scene-flow energy plus latent TV.
    pub combined: f64,
    pub sceneflow_before: f64,
    pub sceneflow_after: f64,
    pub deblur_before: f64,
    pub deblur_after: f64,
    pub labels_changed: usize,
}

/// Initialization products, kept for inspection and output.
#[derive(Debug, Clone)]
pub struct Initialization {
    pub disparity: DisparityMap,
    pub segmentation: Superpixelization,
    pub planes: Vec<Plane>,
    pub matches: Correspondences,
    pub state: SceneFlowState,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub state: SceneFlowState,
    pub latents: SixPack,
    pub segmentation: Superpixelization,
    pub matches: Correspondences,
    pub trace: Vec<IterationRecord>,
    /// Non-fatal problems (a failed step returns the last consistent iterate).
    pub warnings: Vec<String>,
    pub runtime: RuntimeBreakdown,
}

impl PipelineOutput {
    pub fn flow(&self, rig: &CameraRig, view: View) -> Result<FlowField> {
        forward_flow(&self.state, &self.segmentation, rig, view)
    }

    pub fn disparity(&self, rig: &CameraRig, frame: Frame) -> Result<DisparityMap> {
        disparity(&self.state, &self.segmentation, rig, frame)
    }
}

/// The images of `blurs` that `mode` uses; errors when one is missing.
pub fn select_window(blurs: &SixPack, mode: FrameMode) -> Result<SixPack> {
    let mut out = SixPack::new();
    for id in mode.required() {
        let img = blurs
            .get(id)
            .ok_or_else(|| Error::Data(format!("{mode:?} mode needs image {} which is missing", id.name())))?;
        out.insert(id, img.clone());
        out.set_mask(id, blurs.mask(id).map(|m| m.to_vec()));
    }
    out.validate()?;
    Ok(out)
}

/// Disparity, superpixels, plane fits, matches, motion hypotheses and the
/// starting labeling (per superpixel, the hypothesis with the lowest
/// brightness + feature cost under its fitted plane).
pub fn initialize(blurs: &SixPack, rig: &CameraRig, config: &PipelineConfig) -> Result<Initialization> {
    let reference = blurs.reference()?;
    let right = blurs.get(ImageId::new(View::Right, Frame::Cur)).ok_or_else(|| Error::Data("right image at m is missing".into()))?;
    let disp = compute_disparity(reference, right, config.max_disparity.min(reference.width() - 1))?;
    let seg = segment(reference, &disp, config.superpixels, config.compactness, config.disparity_weight)?;
    let planes = fit_planes(&disp, &seg, rig)?;
    let mut matches = Correspondences::default();
    for d in WarpDirection::ALL {
        if let Some(target) = blurs.get(d.target()) {
            matches.extend(match_features(reference, target, d, &config.features));
        }
    }
    let temporal = Correspondences {
        matches: matches.matches.iter().filter(|m| m.direction != WarpDirection::Stereo).copied().collect(),
    };
    let motions = ransac_motion_hypotheses(&temporal, &disp, rig, config.hypotheses, &config.ransac, config.seed);
    if motions.is_empty() {
        return Err(Error::Initialization("no motion hypotheses".into()));
    }
    log::info!("init: {} superpixels, {} matches, {} motion hypotheses", seg.len(), matches.len(), motions.len());
    let params = EnergyParams { theta3: 0.0, ..config.energy };
    let problem = SceneFlowProblem::new(&seg, rig, &params, blurs, blurs, &matches)?;
    let mut assignments = Vec::with_capacity(seg.len());
    for (i, plane) in planes.iter().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for (k, m) in motions.iter().enumerate() {
            let e = problem.unary(i, plane, m).map(|u| u.total()).unwrap_or(f64::INFINITY);
            if e < best.0 {
                best = (e, k);
            }
        }
        assignments.push(Assignment { plane: *plane, object: best.1 });
    }
    let state = SceneFlowState::new(assignments, motions);
    state.validate(&seg, rig)?;
    Ok(Initialization { disparity: disp, segmentation: seg, planes, matches, state })
}

/// Alternates scene-flow and latent-image steps, starting from `init` and
/// latents equal to the blurred images. `on_iteration` sees every iterate.
/// The first scene-flow step ignores the blur term, since the latents are
/// still the blurred inputs; from then on each step decreases the combined
/// energy, which is traced per iteration.
pub fn run_alternation(
    blurs: &SixPack,
    rig: &CameraRig,
    config: &PipelineConfig,
    init: Initialization,
    mut on_iteration: impl FnMut(&IterationRecord, &SceneFlowState, &SixPack),
) -> Result<PipelineOutput> {
    let params = config.energy;
    let Initialization { segmentation: seg, planes, matches, mut state, .. } = init;
    let mut latents = blurs.clone();
    let mut duals: Option<DualState> = None;
    let ids = blurs.ids();
    let mut visibility = Visibility::from_state(&state, &seg, rig, &ids)?;
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut warnings = Vec::new();
    let mut runtime = RuntimeBreakdown::default();
    for iteration in 1..=params.outer_iters {
        let step_params = if iteration == 1 { EnergyParams { theta3: 0.0, ..params } } else { params };
        let t = Instant::now();
        let sf = SceneFlowProblem::new(&seg, rig, &step_params, &latents, blurs, &matches)
            .and_then(|p| p.with_visibility(&visibility))
            .and_then(|p| optimize_with(&p, &state, &config.sceneflow, Some(&planes)));
        runtime.sceneflow += t.elapsed().as_secs_f64();
        let outcome = match sf {
            Ok(o) => o,
            Err(e) => {
                warnings.push(format!("iteration {iteration}: scene-flow step failed: {e}"));
                break;
            }
        };
        state = outcome.state;

        let t = Instant::now();
        let full = SceneFlowProblem::new(&seg, rig, &params, &latents, blurs, &matches)?.with_visibility(&visibility)?;
        let db = full.deblur_problem(&state).and_then(|dp| primal_dual_deblur_warm(blurs, &dp, Some(&latents), duals.as_ref(), &params));
        runtime.deblur += t.elapsed().as_secs_f64();
        let out = match db {
            Ok(o) => o,
            Err(e) => {
                warnings.push(format!("iteration {iteration}: deblur step failed: {e}"));
                break;
            }
        };
        if !out.final_energy.is_finite() {
            return Err(Error::Divergence { iteration, what: "latent-image energy is not finite".into() });
        }
        latents = out.latents;
        duals = Some(out.duals);

        // Visibility follows the new state only if that lowers the energy.
        let mut terms = SceneFlowProblem::new(&seg, rig, &params, &latents, blurs, &matches)?
            .with_visibility(&visibility)?
            .breakdown(&state)?;
        let refreshed = Visibility::from_state(&state, &seg, rig, &ids)?;
        if refreshed != visibility {
            let alt = SceneFlowProblem::new(&seg, rig, &params, &latents, blurs, &matches)?
                .with_visibility(&refreshed)?
                .breakdown(&state)?;
            if alt.total() < terms.total() {
                terms = alt;
                visibility = refreshed;
            }
        }
        let tv: f64 = latents.iter().map(|(_, img)| tv_value(img)).sum();
        let record = IterationRecord {
            iteration,
            terms,
            tv,
            combined: terms.total() + tv,
            sceneflow_before: outcome.energy_before,
            sceneflow_after: outcome.energy_after,
            deblur_before: out.initial_energy,
            deblur_after: out.final_energy,
            labels_changed: outcome.labels_changed,
        };
        if !record.combined.is_finite() {
            return Err(Error::Divergence { iteration, what: "combined energy is not finite".into() });
        }
        log::info!(
            "iteration {iteration}: combined {:.6} (data {:.6}, smoothness {:.6}, tv {:.6})",
            record.combined,
            terms.data(),
            terms.smoothness(),
            tv
        );
        on_iteration(&record, &state, &latents);
        let stop = trace.last().is_some_and(|prev: &IterationRecord| {
            (prev.combined - record.combined) < config.early_exit * prev.combined.abs()
        });
        trace.push(record);
        if stop {
            log::info!("relative energy decrease below {}; stopping", config.early_exit);
            break;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(PipelineOutput { state, latents, segmentation: seg, matches, trace, warnings, runtime })
}

/// Joint scene flow and deblurring of a stereo window.
pub fn joint_estimate(blurs: &SixPack, rig: &CameraRig, config: &PipelineConfig) -> Result<PipelineOutput> {
    joint_estimate_with(blurs, rig, config, |_, _, _| {})
}

/// [`joint_estimate`] with a per-iteration observer.
pub fn joint_estimate_with(
    blurs: &SixPack,
    rig: &CameraRig,
    config: &PipelineConfig,
    on_iteration: impl FnMut(&IterationRecord, &SceneFlowState, &SixPack),
) -> Result<PipelineOutput> {
    config.validate()?;
    rig.validate()?;
    let start = Instant::now();
    let window = select_window(blurs, config.mode)?;
    let init = initialize(&window, rig, config)?;
    let init_time = start.elapsed().as_secs_f64();
    let mut out = run_alternation(&window, rig, config, init, on_iteration)?;
    out.runtime.init = init_time;
    out.runtime.total = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Scene flow without deblurring: initialization followed by one scene-flow
/// step on the blurred images (no blur term).
pub fn estimate_scene_flow(
    blurs: &SixPack,
    rig: &CameraRig,
    config: &PipelineConfig,
) -> Result<(Superpixelization, SceneFlowState)> {
    config.validate()?;
    rig.validate()?;
    let window = select_window(blurs, config.mode)?;
    let init = initialize(&window, rig, config)?;
    let params = EnergyParams { theta3: 0.0, ..config.energy };
    let visibility = Visibility::from_state(&init.state, &init.segmentation, rig, &window.ids())?;
    let problem = SceneFlowProblem::new(&init.segmentation, rig, &params, &window, &window, &init.matches)?
        .with_visibility(&visibility)?;
    let outcome = optimize_with(&problem, &init.state, &config.sceneflow, Some(&init.planes))?;
    Ok((init.segmentation, outcome.state))
}

/// Latent images for a fixed labeling, starting from the blurred images.
pub fn deblur_with_state(
    blurs: &SixPack,
    rig: &CameraRig,
    config: &PipelineConfig,
    seg: &Superpixelization,
    state: &SceneFlowState,
) -> Result<DeblurOutput> {
    config.validate()?;
    rig.validate()?;
    let window = select_window(blurs, config.mode)?;
    state.validate(seg, rig)?;
    let reference = window.reference()?;
    if (seg.width(), seg.height()) != (reference.width(), reference.height()) {
        return Err(Error::Data(format!(
            "state is {}x{} but the images are {}x{}",
            seg.width(),
            seg.height(),
            reference.width(),
            reference.height()
        )));
    }
    let visibility = Visibility::from_state(state, seg, rig, &window.ids())?;
    let matches = Correspondences::default();
    let problem = SceneFlowProblem::new(seg, rig, &config.energy, &window, &window, &matches)?.with_visibility(&visibility)?;
    let out = primal_dual_deblur_warm(&window, &problem.deblur_problem(state)?, Some(&window), None, &config.energy)?;
    if !out.final_energy.is_finite() {
        return Err(Error::Divergence { iteration: 1, what: "latent-image energy is not finite".into() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_scene, SceneSpec};

    #[test]
    fn missing_images_are_data_errors() {
        let r = render_scene(&SceneSpec::compact(0)).unwrap();
        let mut four = r.sharp.clone();
        four.remove(ImageId::new(View::Left, Frame::Prev));
        four.remove(ImageId::new(View::Right, Frame::Prev));
        assert!(select_window(&four, FrameMode::TwoFrame).is_ok());
        assert!(matches!(select_window(&four, FrameMode::ThreeFrame), Err(Error::Data(_))));
        four.remove(ImageId::new(View::Right, Frame::Next));
        assert!(matches!(select_window(&four, FrameMode::TwoFrame), Err(Error::Data(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = PipelineConfig { superpixels: 77, mode: FrameMode::TwoFrame, ..Default::default() };
        let s = toml::to_string(&c).unwrap();
        let back: PipelineConfig = toml::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(toml::from_str::<PipelineConfig>("bogus = 1").is_err());
    }
}
