//! Synthetic piecewise-planar stereo windows with exact ground truth.
//!
//! A scene is a list of textured planar patches, each outlined by a polygon
//! in the reference image and moving with one object motion. Every image is
//! rendered by mapping its pixels back onto each patch through the exact
//! plane-induced homography; the nearest surface wins. Ground-truth flows and
//! disparities are evaluated from the same homographies.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::blurkernel::{apply_blur, BlurKernelField};
use crate::error::{Error, Result};
use crate::deblur::WarpMap;
use crate::geometry::{homography_from_plane_motion, image_homography, CameraRig, Plane, RigidMotion, WarpDirection};
use crate::raster::{DisparityMap, FlowField, Frame, Image, ImageId, SixPack, View};
use crate::sceneflow::{label_geometry, Assignment, SceneFlowState};
use crate::segmentation::Superpixelization;

/// How blurred observations are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurModel {
    /// Bidirectional per-pixel kernels from the ground-truth flows.
    Kernel,
    /// Mean of three sharp renders spread over the exposure.
    Average,
}

/// Rigid motion as axis-angle rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl MotionSpec {
    pub fn to_motion(&self) -> RigidMotion {
        let [a, b, c] = self.rotation;
        let [x, y, z] = self.translation;
        RigidMotion::from_axis_angle(Vector3::new(a, b, c), Vector3::new(x, y, z))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    /// Plane `nᵀX = 1` in the reference camera.
    pub normal: [f64; 3],
    pub object: usize,
    /// Outline in reference pixel coordinates; empty means unbounded.
    #[serde(default)]
    pub polygon: Vec<[f64; 2]>,
    pub texture_seed: u64,
}

impl PatchSpec {
    pub fn plane(&self) -> Plane {
        Plane::new(Vector3::from(self.normal))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub rig: CameraRig,
    /// Patches in back-to-front order; the first is usually an unbounded
    /// background.
    pub patches: Vec<PatchSpec>,
    pub motions: Vec<MotionSpec>,
    pub noise: f64,
    pub blur_model: BlurModel,
    pub tau: f64,
    pub seed: u64,
}

/// Desk-scale rig: 128x256 images, 200 px focal length, 0.5 m baseline.
pub fn desk_rig() -> CameraRig {
    CameraRig { fx: 200.0, fy: 200.0, cx: 127.5, cy: 63.5, baseline: 0.5 }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        if self.width < 2 || self.height < 2 || self.channels == 0 {
            return Err(Error::Config("scene needs at least 2x2 pixels and one channel".into()));
        }
        if self.patches.is_empty() {
            return Err(Error::Config("scene has no patches".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        for (k, p) in self.patches.iter().enumerate() {
            if p.object >= self.motions.len() {
                return Err(Error::Config(format!("patch {k} references missing object {}", p.object)));
            }
            if !p.plane().is_finite() {
                return Err(Error::InvalidPlane(format!("patch {k} has a non-finite plane")));
            }
        }
        for m in &self.motions {
            m.to_motion().validate()?;
        }
        Ok(())
    }

    fn base(seed: u64, patches: Vec<PatchSpec>, motions: Vec<MotionSpec>) -> Self {
        Self {
            width: 256,
            height: 128,
            channels: 3,
            rig: desk_rig(),
            patches,
            motions,
            noise: 0.005,
            blur_model: BlurModel::Kernel,
            tau: 0.8,
            seed,
        }
    }

    /// Static camera and scene: a slanted background and one box in front.
    pub fn static_scene(seed: u64) -> Self {
        let mut s = Self::two_object(seed);
        for m in &mut s.motions {
            *m = MotionSpec { rotation: [0.0; 3], translation: [0.0; 3] };
        }
        s
    }

    /// Background moving with the camera plus one independently moving
    /// foreground patch; flows stay below 8 px.
    pub fn two_object(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7e);
        let bg_depth = rng.random_range(9.0..12.0);
        let bg = [rng.random_range(-0.004..0.004), rng.random_range(-0.004..0.004), 1.0 / bg_depth];
        let fg_depth = rng.random_range(4.5..6.5);
        let fg = [rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), 1.0 / fg_depth];
        let (cx, cy) = (rng.random_range(100.0..156.0), rng.random_range(52.0..76.0));
        let (hw, hh) = (rng.random_range(35.0..50.0), rng.random_range(25.0..35.0));
        let skew = rng.random_range(-8.0..8.0);
        let polygon = vec![[cx - hw + skew, cy - hh], [cx + hw + skew, cy - hh], [cx + hw - skew, cy + hh], [cx - hw - skew, cy + hh]];
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        // Horizontal translations are drawn as image-space flow of 5 to 6.5 px
        // at the patch depth, so the blur extent stays well inside 8 px.
        let fx = desk_rig().fx;
        let ego = MotionSpec {
            rotation: [0.0, rng.random_range(-0.004..0.004), 0.0],
            translation: [sign * rng.random_range(5.0..6.5) * bg_depth / fx, rng.random_range(-0.03..0.03), rng.random_range(-0.1..0.1)],
        };
        let obj = MotionSpec {
            rotation: [0.0, 0.0, rng.random_range(-0.02..0.02)],
            translation: [-sign * rng.random_range(5.0..6.5) * fg_depth / fx, rng.random_range(-0.04..0.04), rng.random_range(-0.05..0.05)],
        };
        Self::base(
            seed,
            vec![
                PatchSpec { normal: bg, object: 0, polygon: Vec::new(), texture_seed: seed.wrapping_mul(31).wrapping_add(1) },
                PatchSpec { normal: fg, object: 1, polygon, texture_seed: seed.wrapping_mul(31).wrapping_add(2) },
            ],
            vec![ego, obj],
        )
    }

    /// 64x48 two-object scene whose foreground is exactly the union of two
    /// 16 px tiles, so [`RenderedScene::patch_segmentation`] with 16 px tiles
    /// yields 12 superpixels. Small enough for exhaustive labeling oracles.
    pub fn compact(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0_4ac7);
        let bg = [rng.random_range(-0.004..0.004), rng.random_range(-0.004..0.004), 1.0 / rng.random_range(9.0..12.0)];
        let fg = [rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), 1.0 / rng.random_range(4.5..6.0)];
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let ego = MotionSpec {
            rotation: [0.0, rng.random_range(-0.004..0.004), 0.0],
            translation: [sign * rng.random_range(0.2..0.35), rng.random_range(-0.05..0.05), rng.random_range(-0.1..0.1)],
        };
        let obj = MotionSpec {
            rotation: [0.0, 0.0, rng.random_range(-0.02..0.02)],
            translation: [-sign * rng.random_range(0.1..0.2), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)],
        };
        Self {
            width: 64,
            height: 48,
            channels: 1,
            rig: CameraRig { fx: 100.0, fy: 100.0, cx: 31.5, cy: 23.5, baseline: 0.5 },
            patches: vec![
                PatchSpec { normal: bg, object: 0, polygon: Vec::new(), texture_seed: seed.wrapping_mul(31).wrapping_add(1) },
                PatchSpec {
                    normal: fg,
                    object: 1,
                    polygon: vec![[15.5, 15.5], [47.5, 15.5], [47.5, 31.5], [15.5, 31.5]],
                    texture_seed: seed.wrapping_mul(31).wrapping_add(2),
                },
            ],
            motions: vec![ego, obj],
            noise: 0.005,
            blur_model: BlurModel::Kernel,
            tau: 0.8,
            seed,
        }
    }

    /// Two-object scene whose motions are pure image-plane translations
    /// (`R = I`, `t_z = 0`), so backward flow is exactly the reflection of
    /// forward flow in every image.
    pub fn reflection_symmetric(seed: u64) -> Self {
        let mut s = Self::two_object(seed);
        for m in &mut s.motions {
            m.rotation = [0.0; 3];
            m.translation[2] = 0.0;
        }
        for p in &mut s.patches {
            p.normal[0] = 0.0;
            p.normal[1] = 0.0;
        }
        s
    }
}

/// Band-limited texture: a base level plus eight random sinusoids per channel.
#[derive(Debug, Clone)]
struct Texture {
    waves: Vec<Vec<(f64, f64, f64, f64)>>,
    base: Vec<f64>,
}

impl Texture {
    fn new(seed: u64, channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut waves = Vec::new();
        let mut base = Vec::new();
        for _ in 0..channels {
            base.push(rng.random_range(0.35..0.65));
            waves.push(
                (0..8)
                    .map(|_| {
                        let f = rng.random_range(0.03..0.22);
                        let a = rng.random_range(0.0..std::f64::consts::TAU);
                        (f * a.cos(), f * a.sin(), rng.random_range(0.0..std::f64::consts::TAU), 0.3 / 8.0)
                    })
                    .collect(),
            );
        }
        Self { waves, base }
    }

    fn value(&self, x: f64, y: f64, c: usize) -> f64 {
        let s: f64 = self.waves[c].iter().map(|(fx, fy, ph, a)| a * (std::f64::consts::TAU * (fx * x + fy * y) + ph).sin()).sum();
        self.base[c] + s
    }
}

/// Even-odd point-in-polygon test; empty polygons contain everything.
fn contains(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    if poly.is_empty() {
        return true;
    }
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Sharp images, exact flows, disparities and the generating state.
#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub spec: SceneSpec,
    pub sharp: SixPack,
    /// Per image: visible patch at each pixel.
    pub visible: [Vec<Option<usize>>; 6],
    /// Per image: flow to the next / previous frame in that image's camera.
    pub flow_fwd: [FlowField; 6],
    pub flow_bwd: [FlowField; 6],
    /// Left-view disparities at frames m and m+1.
    pub disparity_cur: DisparityMap,
    pub disparity_next: DisparityMap,
    /// One assignment per patch.
    pub state: SceneFlowState,
}

impl RenderedScene {
    /// Forward flow of the current frame of `view` (the evaluated flow).
    pub fn gt_flow(&self, view: View) -> &FlowField {
        &self.flow_fwd[ImageId::new(view, Frame::Cur).index()]
    }

    /// Patch id of every reference pixel.
    pub fn patch_labels(&self) -> Vec<u32> {
        self.visible[ImageId::REFERENCE.index()].iter().map(|v| v.map_or(0, |p| p as u32)).collect()
    }

    /// Segmentation into `tile`-sized squares that never straddle a patch
    /// boundary, so every superpixel has an exact ground-truth plane.
    pub fn patch_segmentation(&self, tile: usize) -> Result<Superpixelization> {
        let (w, h) = (self.spec.width, self.spec.height);
        let patches = self.patch_labels();
        let tiles_x = w.div_ceil(tile);
        let tiles = tiles_x * h.div_ceil(tile);
        let labels: Vec<u32> =
            (0..w * h).map(|p| patches[p] * tiles as u32 + ((p / w / tile) * tiles_x + (p % w) / tile) as u32).collect();
        Superpixelization::from_labels(w, h, &labels)
    }

    /// Ground-truth state for an arbitrary segmentation: each superpixel takes
    /// the plane and object of the patch covering most of its pixels.
    pub fn state_for(&self, seg: &Superpixelization) -> SceneFlowState {
        let patches = self.patch_labels();
        let n = self.state.assignments.len();
        let assignments = (0..seg.len())
            .map(|i| {
                let mut counts = vec![0usize; n];
                for &p in seg.region(i) {
                    counts[patches[p] as usize] += 1;
                }
                let best = (0..n).max_by_key(|&k| (counts[k], std::cmp::Reverse(k))).unwrap_or(0);
                self.state.assignments[best]
            })
            .collect();
        SceneFlowState::new(assignments, self.state.motions.clone())
    }

    /// Ground-truth kernel field of every image.
    pub fn gt_kernel_fields(&self) -> Result<Vec<(ImageId, BlurKernelField)>> {
        ImageId::ALL
            .into_iter()
            .map(|id| {
                let (f, b) = (&self.flow_fwd[id.index()], &self.flow_bwd[id.index()]);
                let field = BlurKernelField::from_flow_fn(self.spec.width, self.spec.height, self.spec.tau, |x, y| {
                    (f.is_valid(x, y) && b.is_valid(x, y)).then(|| (f.get(x, y), b.get(x, y)))
                })?;
                Ok((id, field))
            })
            .collect()
    }

    /// Ground-truth warps of the reference into the other five images.
    /// Reference pixels whose surface is hidden in the target are `None`.
    pub fn gt_warps(&self) -> Result<Vec<WarpMap>> {
        let (w, h) = (self.spec.width, self.spec.height);
        let reference = &self.visible[ImageId::REFERENCE.index()];
        let mut out = Vec::new();
        for direction in WarpDirection::ALL {
            let target = direction.target();
            let homographies = self
                .state
                .assignments
                .iter()
                .map(|a| image_homography(&self.spec.rig, &a.plane, &self.state.motions[a.object], target))
                .collect::<Result<Vec<_>>>()?;
            let seen = &self.visible[target.index()];
            let targets = (0..w * h)
                .map(|p| {
                    let k = reference[p]?;
                    let at = homographies[k].apply((p % w) as f64, (p / w) as f64).ok()?;
                    let (tx, ty) = (at[0].round(), at[1].round());
                    if tx < 0.0 || ty < 0.0 || tx >= w as f64 || ty >= h as f64 {
                        return None;
                    }
                    (seen[ty as usize * w + tx as usize] == Some(k)).then_some(at)
                })
                .collect();
            out.push(WarpMap { direction, width: w, height: h, targets });
        }
        Ok(out)
    }

    /// Blurred window for the scene's blur model, with the scene's noise.
    pub fn blurred(&self) -> Result<SixPack> {
        let clean = match self.spec.blur_model {
            BlurModel::Kernel => synthesize_blur_kernel_model(&self.sharp, &self.flow_fwd, &self.flow_bwd, self.spec.tau)?,
            BlurModel::Average => render_average_model(&self.spec)?,
        };
        Ok(add_noise(&clean, self.spec.noise, self.spec.seed))
    }
}

/// Camera change from the reference camera to `view` at continuous time `t`
/// (in frames) for points moving with `motion`. Integer times use the exact
/// motion and its inverse.
fn camera_at(motion: &RigidMotion, view: View, t: f64, rig: &CameraRig) -> RigidMotion {
    let temporal = if t == 0.0 {
        RigidMotion::identity()
    } else if t == 1.0 {
        *motion
    } else if t == -1.0 {
        motion.inverse()
    } else {
        motion.interpolate(t)
    };
    match view {
        View::Left => temporal,
        View::Right => temporal.then(&RigidMotion::translation(rig.baseline_vector())),
    }
}

struct Renderer {
    spec: SceneSpec,
    textures: Vec<Texture>,
    planes: Vec<Plane>,
    motions: Vec<RigidMotion>,
}

impl Renderer {
    fn new(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec: spec.clone(),
            textures: spec.patches.iter().map(|p| Texture::new(p.texture_seed, spec.channels)).collect(),
            planes: spec.patches.iter().map(|p| p.plane()).collect(),
            motions: spec.motions.iter().map(|m| m.to_motion()).collect(),
        })
    }

    /// Image of `view` at time `t` and the visible patch per pixel.
    fn render(&self, view: View, t: f64) -> Result<(Image, Vec<Option<usize>>)> {
        let s = &self.spec;
        let mut maps = Vec::new();
        for (k, p) in s.patches.iter().enumerate() {
            let cam = camera_at(&self.motions[p.object], view, t, &s.rig);
            let h = homography_from_plane_motion(&s.rig, &cam, &self.planes[k])?;
            let plane_t = self.planes[k].transformed(&cam)?;
            maps.push((h.inverse()?, plane_t));
        }
        let mut img = Image::new(s.width, s.height, s.channels);
        let mut visible = vec![None; s.width * s.height];
        for y in 0..s.height {
            for x in 0..s.width {
                let mut best: Option<(usize, f64, [f64; 2])> = None;
                for (k, (inv, plane_t)) in maps.iter().enumerate() {
                    let depth = plane_t.inverse_depth(&s.rig, x as f64, y as f64);
                    if depth <= 0.0 {
                        continue;
                    }
                    let Ok(r) = inv.apply(x as f64, y as f64) else { continue };
                    if !contains(&s.patches[k].polygon, r) {
                        continue;
                    }
                    if best.is_none_or(|(_, d, _)| depth > d) {
                        best = Some((k, depth, r));
                    }
                }
                if let Some((k, _, r)) = best {
                    for c in 0..s.channels {
                        img.set(x, y, c, self.textures[k].value(r[0], r[1], c).clamp(0.0, 1.0));
                    }
                    visible[y * s.width + x] = Some(k);
                }
            }
        }
        Ok((img, visible))
    }
}

/// Renders all six sharp images and the exact ground truth.
pub fn render_scene(spec: &SceneSpec) -> Result<RenderedScene> {
    let r = Renderer::new(spec)?;
    let (w, h) = (spec.width, spec.height);
    let mut sharp = SixPack::new();
    let mut visible: [Vec<Option<usize>>; 6] = Default::default();
    let mut flow_fwd: [FlowField; 6] = std::array::from_fn(|_| FlowField::zeros(w, h));
    let mut flow_bwd: [FlowField; 6] = std::array::from_fn(|_| FlowField::zeros(w, h));
    let mut disparity_cur = DisparityMap::invalid(w, h);
    let mut disparity_next = DisparityMap::invalid(w, h);
    for id in ImageId::ALL {
        let (img, vis) = r.render(id.view, id.frame.offset() as f64)?;
        let geoms = spec
            .patches
            .iter()
            .enumerate()
            .map(|(k, p)| Ok(label_geometry(&spec.rig, &r.planes[k], &r.motions[p.object], &[id], true)?.images[id.index()].unwrap()))
            .collect::<Result<Vec<_>>>()?;
        for y in 0..h {
            for x in 0..w {
                let Some(k) = vis[y * w + x] else {
                    flow_fwd[id.index()].set_valid(x, y, false);
                    flow_bwd[id.index()].set_valid(x, y, false);
                    continue;
                };
                let (f, b) = geoms[k].flows(x as f64, y as f64)?;
                flow_fwd[id.index()].set(x, y, f);
                flow_bwd[id.index()].set(x, y, b);
                if id.view == View::Left && id.frame != Frame::Prev {
                    let d = spec.rig.fx * spec.rig.baseline * geoms[k].plane.inverse_depth(&spec.rig, x as f64, y as f64);
                    let target = if id.frame == Frame::Cur { &mut disparity_cur } else { &mut disparity_next };
                    target.set(x, y, Some(d));
                }
            }
        }
        sharp.insert(id, img);
        visible[id.index()] = vis;
    }
    let state = SceneFlowState::new(
        spec.patches.iter().enumerate().map(|(k, p)| Assignment { plane: r.planes[k], object: p.object }).collect(),
        r.motions.clone(),
    );
    Ok(RenderedScene { spec: spec.clone(), sharp, visible, flow_fwd, flow_bwd, disparity_cur, disparity_next, state })
}

/// Blurs every image with kernels built from its ground-truth bidirectional
/// flows (noise-free).
pub fn synthesize_blur_kernel_model(sharp: &SixPack, flow_fwd: &[FlowField; 6], flow_bwd: &[FlowField; 6], tau: f64) -> Result<SixPack> {
    let mut out = SixPack::new();
    for (id, img) in sharp.iter() {
        let (f, b) = (&flow_fwd[id.index()], &flow_bwd[id.index()]);
        let field = BlurKernelField::from_flow_fn(img.width(), img.height(), tau, |x, y| {
            (f.is_valid(x, y) && b.is_valid(x, y)).then(|| (f.get(x, y), b.get(x, y)))
        })?;
        out.insert(id, apply_blur(&field, img)?);
    }
    Ok(out)
}

/// Arithmetic mean of exactly three registered frames.
pub fn synthesize_blur_average_model(frames: &[Image]) -> Result<Image> {
    if frames.len() != 3 {
        return Err(Error::Data(format!("average blur needs 3 frames, got {}", frames.len())));
    }
    frames[0].check_same_shape(&frames[1], "frame 2")?;
    frames[0].check_same_shape(&frames[2], "frame 3")?;
    let data = (0..frames[0].data().len())
        .map(|k| (frames[0].data()[k] + frames[1].data()[k] + frames[2].data()[k]) / 3.0)
        .collect();
    Image::from_vec(frames[0].width(), frames[0].height(), frames[0].channels(), data)
}

/// Average-model blur of every image: three sharp renders at the centers of
/// the thirds of the exposure `[f - τ/2, f + τ/2]`, i.e. `f - τ/3, f, f + τ/3`.
pub fn render_average_model(spec: &SceneSpec) -> Result<SixPack> {
    let r = Renderer::new(spec)?;
    let third = spec.tau / 3.0;
    let mut out = SixPack::new();
    for id in ImageId::ALL {
        let f = id.frame.offset() as f64;
        let frames = [f - third, f, f + third].map(|t| r.render(id.view, t).map(|(img, _)| img));
        let frames = frames.into_iter().collect::<Result<Vec<_>>>()?;
        out.insert(id, synthesize_blur_average_model(&frames)?);
    }
    Ok(out)
}

/// Adds seeded Gaussian noise and clamps to `[0, 1]`.
pub fn add_noise(pack: &SixPack, sigma: f64, seed: u64) -> SixPack {
    pack.map(|id, img| {
        let mut out = img.clone();
        if sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(id.index() as u64 + 1));
            let normal = Normal::new(0.0, sigma).expect("positive sigma");
            for v in out.data_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        out.clamp01();
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::flow_from_homography;
    use crate::sceneflow::label_geometry;

    fn small(spec: &mut SceneSpec) {
        spec.channels = 1;
    }

    #[test]
    fn static_scene_has_zero_flow_and_average_blur_is_identity() {
        let mut spec = SceneSpec::static_scene(1);
        small(&mut spec);
        let r = render_scene(&spec).unwrap();
        for f in r.flow_fwd.iter().chain(&r.flow_bwd) {
            assert!(f.vectors().iter().all(|u| u[0] == 0.0 && u[1] == 0.0));
        }
        let lc = r.sharp.get(ImageId::REFERENCE).unwrap();
        assert_eq!(r.sharp.get(ImageId::new(View::Left, Frame::Next)).unwrap(), lc);
        spec.blur_model = BlurModel::Average;
        spec.noise = 0.0;
        let avg = render_average_model(&spec).unwrap();
        for (a, b) in avg.get(ImageId::REFERENCE).unwrap().data().iter().zip(lc.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn translating_fronto_plane_has_constant_flow() {
        let spec = SceneSpec {
            width: 64,
            height: 32,
            channels: 1,
            rig: CameraRig { fx: 100.0, fy: 100.0, cx: 0.0, cy: 0.0, baseline: 0.5 },
            patches: vec![PatchSpec { normal: [0.0, 0.0, 0.1], object: 0, polygon: vec![], texture_seed: 3 }],
            motions: vec![MotionSpec { rotation: [0.0; 3], translation: [0.1, 0.0, 0.0] }],
            noise: 0.0,
            blur_model: BlurModel::Kernel,
            tau: 0.8,
            seed: 0,
        };
        let r = render_scene(&spec).unwrap();
        for u in r.gt_flow(View::Left).vectors() {
            assert!((u[0] + 1.0).abs() < 1e-12 && u[1].abs() < 1e-12);
        }
        assert!(r.disparity_cur.raw_values().iter().all(|d| (d - 5.0).abs() < 1e-12));
    }

    #[test]
    fn gt_flows_follow_the_patch_homographies() {
        let spec = SceneSpec::two_object(4);
        let r = render_scene(&spec).unwrap();
        for id in ImageId::ALL {
            let geoms: Vec<_> = r
                .state
                .assignments
                .iter()
                .map(|a| label_geometry(&spec.rig, &a.plane, &r.state.motions[a.object], &[id], true).unwrap().images[id.index()].unwrap())
                .collect();
            for (p, vis) in r.visible[id.index()].iter().enumerate() {
                let k = vis.unwrap();
                let (x, y) = ((p % 256) as f64, (p / 256) as f64);
                let u = flow_from_homography(&geoms[k].forward, [x, y]).unwrap();
                let g = r.flow_fwd[id.index()].vectors()[p];
                assert!((u[0] - g[0]).abs() < 1e-10 && (u[1] - g[1]).abs() < 1e-10);
            }
        }
        // Piecewise structure: the reference sees both patches.
        let labels = r.patch_labels();
        assert!(labels.contains(&0) && labels.contains(&1));
    }

    #[test]
    fn two_object_flows_stay_below_eight_pixels() {
        for seed in 0..5 {
            let r = render_scene(&SceneSpec::two_object(seed)).unwrap();
            for f in r.flow_fwd.iter().chain(&r.flow_bwd) {
                let max = f.vectors().iter().map(|u| u[0].hypot(u[1])).fold(0.0, f64::max);
                assert!(max <= 8.0, "seed {seed}: {max}");
            }
        }
    }

    #[test]
    fn reflection_symmetric_scene_mirrors_flows_exactly() {
        let r = render_scene(&SceneSpec::reflection_symmetric(2)).unwrap();
        for k in 0..6 {
            for (f, b) in r.flow_fwd[k].vectors().iter().zip(r.flow_bwd[k].vectors()) {
                assert_eq!(*f, [-b[0], -b[1]]);
            }
        }
    }

    #[test]
    fn blur_psnr_drops_as_flow_grows() {
        let sharp = {
            let t = Texture::new(9, 1);
            Image::from_fn(64, 64, 1, |x, y, c| t.value(x as f64, y as f64, c))
        };
        let pack = SixPack::new().with(ImageId::REFERENCE, sharp.clone());
        let mut last = f64::INFINITY;
        for mag in [2.0, 4.0, 8.0] {
            let f = std::array::from_fn(|_| FlowField::constant(64, 64, [mag, 0.0]));
            let b = std::array::from_fn(|_| FlowField::constant(64, 64, [-mag, 0.0]));
            let out = synthesize_blur_kernel_model(&pack, &f, &b, 1.0).unwrap();
            let blurred = out.get(ImageId::REFERENCE).unwrap();
            let mse = blurred.data().iter().zip(sharp.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 4096.0;
            let psnr = 10.0 * (1.0 / mse).log10();
            assert!(psnr < last);
            last = psnr;
        }
    }

    #[test]
    fn vertical_edge_becomes_a_ramp() {
        let sharp = Image::from_fn(32, 8, 1, |x, _, _| if x < 16 { 0.0 } else { 1.0 });
        let pack = SixPack::new().with(ImageId::REFERENCE, sharp);
        let f = std::array::from_fn(|_| FlowField::constant(32, 8, [4.0, 0.0]));
        let b = std::array::from_fn(|_| FlowField::constant(32, 8, [-4.0, 0.0]));
        let out = synthesize_blur_kernel_model(&pack, &f, &b, 1.0).unwrap();
        let img = out.get(ImageId::REFERENCE).unwrap();
        // Box of width 4 centered on the pixel: 1D convolution oracle.
        let kernel = |d: f64| -> f64 {
            // Exact bilinear-splat weight of offset d for a uniform segment on [-2, 2].
            let tri = |s: f64| (1.0 - (s - d).abs()).max(0.0);
            let n = 40_000;
            (0..n).map(|k| tri(-2.0 + 4.0 * (k as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64
        };
        for x in 0..32 {
            let oracle: f64 = (-3..=3).map(|d| kernel(d as f64) * if (x as i32 + d).clamp(0, 31) < 16 { 0.0 } else { 1.0 }).sum();
            assert!((img.get(x, 4, 0) - oracle).abs() < 1e-6, "x={x}");
        }
        let ramp: Vec<usize> = (0..32).filter(|&x| img.get(x, 4, 0) > 1e-9 && img.get(x, 4, 0) < 1.0 - 1e-9).collect();
        assert_eq!(ramp.len(), 4);
    }

    #[test]
    fn average_model_examples() {
        let f = |v: f64| Image::filled(2, 2, 1, v);
        let out = synthesize_blur_average_model(&[f(0.0), f(0.3), f(0.6)]).unwrap();
        assert!((out.get(0, 0, 0) - 0.3).abs() < 1e-15);
        let same = synthesize_blur_average_model(&[f(0.2), f(0.2), f(0.2)]).unwrap();
        assert!(same.data().iter().all(|v| (v - 0.2).abs() < 1e-15));
        assert!(synthesize_blur_average_model(&[f(0.0), f(0.3)]).is_err());
    }

    #[test]
    fn patch_segmentation_tiles_respect_patches() {
        let r = render_scene(&SceneSpec::two_object(3)).unwrap();
        let seg = r.patch_segmentation(16).unwrap();
        let patches = r.patch_labels();
        for i in 0..seg.len() {
            let p0 = patches[seg.region(i)[0]];
            assert!(seg.region(i).iter().all(|&p| patches[p] == p0));
        }
        assert_eq!(r.state_for(&seg).len(), seg.len());
        let compact = render_scene(&SceneSpec::compact(5)).unwrap();
        assert_eq!(compact.patch_segmentation(16).unwrap().len(), 12);
    }
}
