//! Data and smoothness terms of the scene-flow energy.
//!
//! Every data term is a sum of per-superpixel contributions that depend only
//! on that superpixel's plane and object motion, and every smoothness term is
//! a sum over adjacent pairs. The energy therefore decomposes exactly into
//! unaries and pairwise terms, which the discrete optimizer relies on.

use serde::Serialize;

use crate::blurkernel::build_pixel_kernel;
use crate::deblur::{BlurObservation, Coupling, CouplingRow, DeblurProblem};
use crate::error::{Error, Result};
use crate::geometry::{
    homography_from_plane_motion, image_homography, motion_in_view, reference_to_image, CameraRig, Homography, Plane,
    RigidMotion, WarpDirection,
};
use crate::init::{Correspondences, Match};
use crate::raster::{Frame, Image, ImageId, SixPack};
use crate::segmentation::Superpixelization;

use super::project::{dense_labels, Visibility};
use super::state::{Assignment, EnergyParams, SceneFlowState};

/// Per-term energy values (already weighted).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub brightness: f64,
    pub features: f64,
    pub blur: f64,
    pub depth: f64,
    pub orientation: f64,
    pub motion_boundary: f64,
}

impl EnergyBreakdown {
    pub fn data(&self) -> f64 {
        self.brightness + self.features + self.blur
    }

    pub fn smoothness(&self) -> f64 {
        self.depth + self.orientation + self.motion_boundary
    }

    pub fn total(&self) -> f64 {
        self.data() + self.smoothness()
    }
}

/// Data-term contributions of one superpixel.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UnaryTerms {
    pub brightness: f64,
    pub features: f64,
    pub blur: f64,
}

impl UnaryTerms {
    pub fn total(&self) -> f64 {
        self.brightness + self.features + self.blur
    }
}

/// Smoothness contributions of one adjacent pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairTerms {
    pub depth: f64,
    pub orientation: f64,
    pub motion_boundary: f64,
}

impl PairTerms {
    pub fn total(&self) -> f64 {
        self.depth + self.orientation + self.motion_boundary
    }
}

/// Warps and kernel-generating flows of one superpixel label in one image.
#[derive(Debug, Clone, Copy)]
pub struct ImageGeometry {
    /// Reference pixels to this image.
    pub to_image: Homography,
    /// This image back to the reference.
    pub from_image: Homography,
    /// Flow to the next frame in this image's camera.
    pub forward: Homography,
    /// Flow to the previous frame; `None` means the reflected forward flow.
    pub backward: Option<Homography>,
    /// The plane in this image's camera.
    pub plane: Plane,
}

impl ImageGeometry {
    /// Forward and backward flow at pixel `(x, y)` of this image.
    pub fn flows(&self, x: f64, y: f64) -> Result<([f64; 2], [f64; 2])> {
        let f = self.forward.flow(x, y)?;
        let b = match &self.backward {
            Some(h) => h.flow(x, y)?,
            None => [-f[0], -f[1]],
        };
        Ok((f, b))
    }
}

/// All per-image geometry of a `(plane, motion)` label.
#[derive(Debug, Clone)]
pub struct LabelGeometry {
    pub images: [Option<ImageGeometry>; 6],
}

/// Geometry of `(plane, motion)` in every image of `ids`. In two-frame mode
/// (`three_frame = false`) backward flows are reflections of forward flows.
pub fn label_geometry(
    rig: &CameraRig,
    plane: &Plane,
    motion: &RigidMotion,
    ids: &[ImageId],
    three_frame: bool,
) -> Result<LabelGeometry> {
    let mut images: [Option<ImageGeometry>; 6] = [None; 6];
    for &id in ids {
        let to_image = image_homography(rig, plane, motion, id)?;
        let from_image = to_image.inverse()?;
        let image_plane = plane.transformed(&reference_to_image(motion, id, rig))?;
        let m = motion_in_view(motion, id.view, rig);
        let forward = homography_from_plane_motion(rig, &m, &image_plane)?;
        let backward = if three_frame { Some(homography_from_plane_motion(rig, &m.inverse(), &image_plane)?) } else { None };
        images[id.index()] = Some(ImageGeometry { to_image, from_image, forward, backward, plane: image_plane });
    }
    Ok(LabelGeometry { images })
}

#[inline]
fn truncated(v: f64, alpha: f64) -> f64 {
    v.abs().min(alpha)
}

/// `|nᵢᵀnⱼ| / (‖nᵢ‖‖nⱼ‖)`.
pub fn normal_alignment(a: &Plane, b: &Plane) -> Result<f64> {
    let (na, nb) = (a.n.norm(), b.n.norm());
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::InvalidPlane("zero-norm plane in orientation term".into()));
    }
    Ok((a.n.dot(&b.n).abs() / (na * nb)).min(1.0))
}

/// Smoothness terms of the adjacent pair `(i, j)` under assignments `a`, `b`.
pub fn pair_terms(
    seg: &Superpixelization,
    rig: &CameraRig,
    params: &EnergyParams,
    i: usize,
    a: &Assignment,
    j: usize,
    b: &Assignment,
) -> Result<PairTerms> {
    let boundary = seg.boundary_pixels(i, j);
    if boundary.is_empty() {
        return Ok(PairTerms::default());
    }
    let w = seg.width();
    let s = rig.fx * rig.baseline;
    let mut depth = 0.0;
    let mut sq = 0.0;
    for &p in boundary {
        let ray = rig.ray((p % w) as f64, (p / w) as f64);
        let gap = s * (a.plane.n - b.plane.n).dot(&ray);
        depth += truncated(gap, params.alpha2);
        sq += gap * gap;
    }
    let mut out = PairTerms { depth: params.theta4 * depth, ..Default::default() };
    let needs_alignment = params.theta5 > 0.0 || (a.object != b.object && params.theta6 > 0.0);
    if needs_alignment {
        let align = normal_alignment(&a.plane, &b.plane)?;
        out.orientation = params.theta5 * truncated(1.0 - align, params.alpha3);
        if a.object != b.object {
            out.motion_boundary = params.theta6 * (-(params.lambda / boundary.len() as f64) * sq).exp() * align;
        }
    }
    Ok(out)
}

/// The fixed inputs of the scene-flow energy.
pub struct SceneFlowProblem<'a> {
    pub seg: &'a Superpixelization,
    pub rig: &'a CameraRig,
    pub params: EnergyParams,
    pub latents: &'a SixPack,
    pub blurs: &'a SixPack,
    matches: Vec<Vec<Match>>,
    match_count: usize,
    ids: Vec<ImageId>,
    three_frame: bool,
    visibility: Option<&'a Visibility>,
}

impl<'a> SceneFlowProblem<'a> {
    pub fn new(
        seg: &'a Superpixelization,
        rig: &'a CameraRig,
        params: &EnergyParams,
        latents: &'a SixPack,
        blurs: &'a SixPack,
        matches: &Correspondences,
    ) -> Result<Self> {
        params.validate()?;
        blurs.validate()?;
        let r = blurs.reference()?;
        if r.width() != seg.width() || r.height() != seg.height() {
            return Err(Error::dims("segmentation and images differ in size"));
        }
        let ids = blurs.ids();
        for &id in &ids {
            let l = latents.get(id).ok_or_else(|| Error::Data(format!("no latent image for {}", id.name())))?;
            r.check_same_shape(l, id.name())?;
        }
        let three_frame = ids.iter().any(|id| id.frame == Frame::Prev);
        let mut grouped = vec![Vec::new(); seg.len()];
        let mut match_count = 0;
        for m in &matches.matches {
            if !ids.contains(&m.direction.target()) {
                continue;
            }
            let (x, y) = (m.x_ref[0].round(), m.x_ref[1].round());
            if x < 0.0 || y < 0.0 || x >= seg.width() as f64 || y >= seg.height() as f64 {
                continue;
            }
            grouped[seg.label(x as usize, y as usize)].push(*m);
            match_count += 1;
        }
        Ok(Self { seg, rig, params: *params, latents, blurs, matches: grouped, match_count, ids, three_frame, visibility: None })
    }

    /// Restricts the blur term to the pixels each superpixel owns in
    /// `visibility`. Without it a superpixel claims every pixel that maps back
    /// into it, occluded or not.
    pub fn with_visibility(mut self, visibility: &'a Visibility) -> Result<Self> {
        if visibility.width() != self.seg.width()
            || visibility.height() != self.seg.height()
            || visibility.superpixels() != self.seg.len()
        {
            return Err(Error::dims("visibility does not match the segmentation"));
        }
        if let Some(id) = self.ids.iter().find(|&&id| !visibility.has_image(id)) {
            return Err(Error::Data(format!("visibility lacks {}", id.name())));
        }
        self.visibility = Some(visibility);
        Ok(self)
    }

    pub fn visibility(&self) -> Option<&Visibility> {
        self.visibility
    }

    /// Whether reference superpixel `i` owns the target pixel nearest `at`.
    /// Always true without a visibility map or when `at` leaves the image.
    fn visible_at(&self, i: usize, target: ImageId, at: [f64; 2]) -> bool {
        let Some(v) = self.visibility else { return true };
        let (w, h) = (self.seg.width(), self.seg.height());
        let (x, y) = (at[0].round(), at[1].round());
        if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
            return true;
        }
        v.owner(target, y as usize * w + x as usize) == Some(i)
    }

    /// Images taking part in the energy, in canonical order.
    pub fn images(&self) -> &[ImageId] {
        &self.ids
    }

    pub fn is_three_frame(&self) -> bool {
        self.three_frame
    }

    /// Warp directions whose target image is present.
    pub fn directions(&self) -> impl Iterator<Item = WarpDirection> + '_ {
        WarpDirection::ALL.into_iter().filter(|d| self.ids.contains(&d.target()))
    }

    pub fn matches_of(&self, i: usize) -> &[Match] {
        &self.matches[i]
    }

    pub fn match_count(&self) -> usize {
        self.match_count
    }

    pub fn geometry(&self, plane: &Plane, motion: &RigidMotion) -> Result<LabelGeometry> {
        label_geometry(self.rig, plane, motion, &self.ids, self.three_frame)
    }

    fn latent(&self, id: ImageId) -> &Image {
        self.latents.get(id).expect("checked in new")
    }

    /// Brightness-coupling rows of superpixel `i` (reference-sourced).
    pub fn coupling_rows(&self, i: usize, geom: &LabelGeometry, out: &mut Vec<CouplingRow>) {
        let (w, h) = (self.seg.width(), self.seg.height());
        for d in self.directions() {
            let Some(g) = &geom.images[d.target().index()] else { continue };
            for &p in self.seg.region(i) {
                if !self.blurs.usable(ImageId::REFERENCE, p) {
                    continue;
                }
                let Ok(at) = g.to_image.apply((p % w) as f64, (p / w) as f64) else { continue };
                if self.visible_at(i, d.target(), at) {
                    out.extend(CouplingRow::new(p, d.target(), at, w, h));
                }
            }
        }
    }

    /// Unweighted brightness residual `Σ |L_ref(x) - L_*(H* x)|₁` of superpixel
    /// `i`. With a visibility map, samples owned by another superpixel cost
    /// `occlusion` per channel instead.
    pub fn brightness_raw(&self, i: usize, geom: &LabelGeometry) -> f64 {
        let (w, h) = (self.seg.width(), self.seg.height());
        let reference = self.latent(ImageId::REFERENCE);
        let mut s = 0.0;
        for d in self.directions() {
            let Some(g) = &geom.images[d.target().index()] else { continue };
            let target = self.latent(d.target());
            for &p in self.seg.region(i) {
                if !self.blurs.usable(ImageId::REFERENCE, p) {
                    continue;
                }
                let Ok(at) = g.to_image.apply((p % w) as f64, (p / w) as f64) else { continue };
                let Some(row) = CouplingRow::new(p, d.target(), at, w, h) else { continue };
                if !self.visible_at(i, d.target(), at) {
                    s += self.params.occlusion * reference.channels() as f64;
                } else {
                    s += row.l1(reference, target);
                }
            }
        }
        s
    }

    /// Truncated reprojection errors of the matches of superpixel `i`.
    pub fn features_raw(&self, i: usize, geom: &LabelGeometry) -> f64 {
        self.matches[i]
            .iter()
            .map(|m| {
                let g = geom.images[m.direction.target().index()].as_ref().expect("direction present");
                match g.to_image.apply(m.x_ref[0], m.x_ref[1]) {
                    Ok(p) => truncated((p[0] - m.x_target[0]).hypot(p[1] - m.x_target[1]), self.params.alpha1),
                    Err(_) => self.params.alpha1,
                }
            })
            .sum()
    }

    /// Blur rows of superpixel `i` in image `id`: the pixels of `id` the
    /// superpixel owns (or, without visibility, that map back into it), each
    /// with its state-induced kernel, and the horizontal/vertical neighbor
    /// pairs inside that set.
    pub fn blur_observation(&self, i: usize, geom: &LabelGeometry, id: ImageId) -> Result<BlurObservation> {
        let (w, h) = (self.seg.width(), self.seg.height());
        let mut obs = BlurObservation::new(w, h);
        let Some(g) = &geom.images[id.index()] else { return Ok(obs) };
        let pixels = self.blur_pixels(i, g, id)?;
        let Some((bx0, by0, bx1, by1)) = pixels.iter().fold(None, |acc: Option<(usize, usize, usize, usize)>, &p| {
            let (x, y) = (p % w, p / w);
            Some(acc.map_or((x, y, x, y), |(a, b, c, d)| (a.min(x), b.min(y), c.max(x), d.max(y))))
        }) else {
            return Ok(obs);
        };
        let bw = bx1 - bx0 + 1;
        let mut rows = vec![u32::MAX; bw * (by1 - by0 + 1)];
        for &p in &pixels {
            let (x, y) = (p % w, p / w);
            let (f, b) = g.flows(x as f64, y as f64)?;
            let k = build_pixel_kernel(f, b, self.params.tau)?;
            rows[(y - by0) * bw + (x - bx0)] = obs.push_row(p, &k.taps) as u32;
        }
        for y in by0..=by1 {
            for x in bx0..=bx1 {
                let a = rows[(y - by0) * bw + (x - bx0)];
                if a == u32::MAX {
                    continue;
                }
                if x < bx1 {
                    let b = rows[(y - by0) * bw + (x + 1 - bx0)];
                    if b != u32::MAX {
                        obs.push_pair(a as usize, b as usize);
                    }
                }
                if y < by1 {
                    let b = rows[(y + 1 - by0) * bw + (x - bx0)];
                    if b != u32::MAX {
                        obs.push_pair(a as usize, b as usize);
                    }
                }
            }
        }
        Ok(obs)
    }

    /// Usable pixels of image `id` assigned to superpixel `i`, in raster order.
    fn blur_pixels(&self, i: usize, g: &ImageGeometry, id: ImageId) -> Result<Vec<usize>> {
        let (w, h) = (self.seg.width(), self.seg.height());
        if let Some(v) = self.visibility {
            return Ok(v.pixels(id, i).iter().map(|&p| p as usize).filter(|&p| self.blurs.usable(id, p)).collect());
        }
        if id == ImageId::REFERENCE {
            return Ok(self.seg.region(i).iter().copied().filter(|&p| self.blurs.usable(id, p)).collect());
        }
        let (x0, y0, x1, y1) = self.seg.bbox(i);
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (cx, cy) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
            let p = g.to_image.apply(cx as f64, cy as f64)?;
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if hi[0] < -1.0 || hi[1] < -1.0 || lo[0] > w as f64 || lo[1] > h as f64 {
            return Ok(Vec::new());
        }
        let clampx = |v: f64| v.clamp(0.0, (w - 1) as f64) as usize;
        let clampy = |v: f64| v.clamp(0.0, (h - 1) as f64) as usize;
        let (bx0, by0, bx1, by1) =
            (clampx(lo[0].floor() - 1.0), clampy(lo[1].floor() - 1.0), clampx(hi[0].ceil() + 1.0), clampy(hi[1].ceil() + 1.0));
        let mut out = Vec::new();
        for y in by0..=by1 {
            for x in bx0..=bx1 {
                let p = y * w + x;
                if !self.blurs.usable(id, p) {
                    continue;
                }
                if let Ok(r) = g.from_image.apply(x as f64, y as f64) {
                    let (rx, ry) = (r[0].round(), r[1].round());
                    if rx >= 0.0 && ry >= 0.0 && rx < w as f64 && ry < h as f64 && self.seg.label(rx as usize, ry as usize) == i {
                        out.push(p);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Unweighted derivative-domain blur residual of superpixel `i` summed
    /// over all images.
    pub fn blur_raw(&self, i: usize, geom: &LabelGeometry) -> Result<f64> {
        let mut s = 0.0;
        for &id in &self.ids {
            let obs = self.blur_observation(i, geom, id)?;
            s += obs.energy(self.latent(id), self.blurs.get(id).expect("present"));
        }
        Ok(s)
    }

    /// Data terms of superpixel `i` labeled `(plane, motion)`, skipping the blur
    /// term when `with_blur` is false.
    pub fn unary_parts(&self, i: usize, geom: &LabelGeometry, with_blur: bool) -> Result<UnaryTerms> {
        let p = &self.params;
        Ok(UnaryTerms {
            brightness: if p.theta1 > 0.0 { p.theta1 * self.brightness_raw(i, geom) } else { 0.0 },
            features: if p.theta2 > 0.0 { p.theta2 * self.features_raw(i, geom) } else { 0.0 },
            blur: if with_blur && p.theta3 > 0.0 { p.theta3 * self.blur_raw(i, geom)? } else { 0.0 },
        })
    }

    pub fn unary(&self, i: usize, plane: &Plane, motion: &RigidMotion) -> Result<UnaryTerms> {
        self.unary_parts(i, &self.geometry(plane, motion)?, true)
    }

    pub fn pair(&self, i: usize, a: &Assignment, j: usize, b: &Assignment) -> Result<PairTerms> {
        pair_terms(self.seg, self.rig, &self.params, i, a, j, b)
    }

    fn check_state(&self, state: &SceneFlowState) -> Result<()> {
        state.validate(self.seg, self.rig)
    }

    /// All six terms for `state`. The blur term is the dense per-image one
    /// of [`Self::blur_observations`].
    pub fn breakdown(&self, state: &SceneFlowState) -> Result<EnergyBreakdown> {
        self.check_state(state)?;
        let mut e = EnergyBreakdown::default();
        for i in 0..self.seg.len() {
            let u = self.unary_parts(i, &self.geometry(state.plane(i), state.motion_of(i))?, false)?;
            e.brightness += u.brightness;
            e.features += u.features;
        }
        if self.params.theta3 > 0.0 {
            let obs = self.blur_observations(state)?;
            for &id in &self.ids {
                let o = obs[id.index()].as_ref().expect("present image");
                e.blur += self.params.theta3 * o.energy(self.latent(id), self.blurs.get(id).expect("present"));
            }
        }
        let s = smoothness_breakdown(state, self.seg, self.rig, &self.params)?;
        e.depth = s.depth;
        e.orientation = s.orientation;
        e.motion_boundary = s.motion_boundary;
        Ok(e)
    }

    /// Dense blur model of every present image: each usable pixel takes the
    /// kernel of the superpixel owning it (from the visibility map, else from
    /// the z-buffered projection of `state`), and every horizontal/vertical
    /// neighbor pair of such pixels enters the derivative residual.
    pub fn blur_observations(&self, state: &SceneFlowState) -> Result<[Option<BlurObservation>; 6]> {
        let (w, h) = (self.seg.width(), self.seg.height());
        let geoms =
            (0..self.seg.len()).map(|i| self.geometry(state.plane(i), state.motion_of(i))).collect::<Result<Vec<_>>>()?;
        let mut out: [Option<BlurObservation>; 6] = Default::default();
        for &id in &self.ids {
            let owners: Vec<Option<usize>> = match self.visibility {
                Some(v) => (0..w * h).map(|p| v.owner(id, p)).collect(),
                None => dense_labels(state, self.seg, self.rig, id)?,
            };
            let mut obs = BlurObservation::new(w, h);
            let mut rows = vec![u32::MAX; w * h];
            for p in 0..w * h {
                let Some(i) = owners[p] else { continue };
                if !self.blurs.usable(id, p) {
                    continue;
                }
                let Some(g) = &geoms[i].images[id.index()] else { continue };
                let (f, b) = g.flows((p % w) as f64, (p / w) as f64)?;
                let k = build_pixel_kernel(f, b, self.params.tau)?;
                rows[p] = obs.push_row(p, &k.taps) as u32;
            }
            for p in 0..w * h {
                if rows[p] == u32::MAX {
                    continue;
                }
                if p % w + 1 < w && rows[p + 1] != u32::MAX {
                    obs.push_pair(rows[p] as usize, rows[p + 1] as usize);
                }
                if p + w < w * h && rows[p + w] != u32::MAX {
                    obs.push_pair(rows[p] as usize, rows[p + w] as usize);
                }
            }
            out[id.index()] = Some(obs);
        }
        Ok(out)
    }

    pub fn total_energy(&self, state: &SceneFlowState) -> Result<f64> {
        self.breakdown(state).map(|e| e.total())
    }

    pub fn data_brightness(&self, state: &SceneFlowState) -> Result<f64> {
        self.breakdown(state).map(|e| e.brightness)
    }

    pub fn data_features(&self, state: &SceneFlowState) -> Result<f64> {
        self.breakdown(state).map(|e| e.features)
    }

    pub fn data_blur(&self, state: &SceneFlowState) -> Result<f64> {
        self.breakdown(state).map(|e| e.blur)
    }

    /// Operators of the latent-image step for `state`. Its objective at the
    /// current latents equals brightness + blur of [`Self::breakdown`] plus TV,
    /// less the occlusion charges, which do not depend on the latents.
    pub fn deblur_problem(&self, state: &SceneFlowState) -> Result<DeblurProblem> {
        self.check_state(state)?;
        let observations = self.blur_observations(state)?;
        let mut coupling = Coupling::default();
        for i in 0..self.seg.len() {
            let geom = self.geometry(state.plane(i), state.motion_of(i))?;
            self.coupling_rows(i, &geom, &mut coupling.rows);
        }
        Ok(DeblurProblem { observations, coupling })
    }
}

/// Smoothness terms of `state` summed over all adjacent pairs.
pub fn smoothness_breakdown(
    state: &SceneFlowState,
    seg: &Superpixelization,
    rig: &CameraRig,
    params: &EnergyParams,
) -> Result<PairTerms> {
    if state.len() != seg.len() {
        return Err(Error::dims("state and segmentation differ in superpixel count"));
    }
    let mut out = PairTerms::default();
    for (i, j) in seg.edges() {
        let t = pair_terms(seg, rig, params, i, &state.assignments[i], j, &state.assignments[j])?;
        out.depth += t.depth;
        out.orientation += t.orientation;
        out.motion_boundary += t.motion_boundary;
    }
    Ok(out)
}

pub fn smooth_depth(state: &SceneFlowState, seg: &Superpixelization, rig: &CameraRig, params: &EnergyParams) -> Result<f64> {
    let p = EnergyParams { theta5: 0.0, theta6: 0.0, ..*params };
    smoothness_breakdown(state, seg, rig, &p).map(|t| t.depth)
}

pub fn smooth_orientation(state: &SceneFlowState, seg: &Superpixelization, rig: &CameraRig, params: &EnergyParams) -> Result<f64> {
    let p = EnergyParams { theta4: 0.0, theta6: 0.0, ..*params };
    smoothness_breakdown(state, seg, rig, &p).map(|t| t.orientation)
}

pub fn smooth_motion_boundary(
    state: &SceneFlowState,
    seg: &Superpixelization,
    rig: &CameraRig,
    params: &EnergyParams,
) -> Result<f64> {
    let p = EnergyParams { theta4: 0.0, theta5: 0.0, ..*params };
    smoothness_breakdown(state, seg, rig, &p).map(|t| t.motion_boundary)
}

/// Scene-flow energy of `state`: the three data terms plus the three
/// smoothness terms.
pub fn total_energy(
    state: &SceneFlowState,
    latents: &SixPack,
    blurs: &SixPack,
    matches: &Correspondences,
    seg: &Superpixelization,
    rig: &CameraRig,
    params: &EnergyParams,
) -> Result<f64> {
    SceneFlowProblem::new(seg, rig, params, latents, blurs, matches)?.total_energy(state)
}
