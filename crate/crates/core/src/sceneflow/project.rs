//! Dense rasters induced by a scene-flow state in any image of the window.

use crate::blurkernel::BlurKernelField;
use crate::error::Result;
use crate::geometry::{CameraRig, Plane, RigidMotion};
use crate::raster::{DisparityMap, FlowField, Frame, ImageId, View};
use crate::segmentation::Superpixelization;

use super::energy::{label_geometry, ImageGeometry};
use super::state::SceneFlowState;

/// Geometry of every superpixel in image `id`.
fn geometries(state: &SceneFlowState, rig: &CameraRig, id: ImageId, three_frame: bool) -> Result<Vec<ImageGeometry>> {
    state
        .assignments
        .iter()
        .map(|a| {
            let g = label_geometry(rig, &a.plane, &state.motions[a.object], &[id], three_frame)?;
            Ok(g.images[id.index()].expect("requested image"))
        })
        .collect()
}

/// Visible region at each pixel of image `id`, from forward-mapping the
/// reference regions with nearest-surface (largest inverse depth) wins.
/// `region_of(x, y)` gives the region of a reference pixel.
pub fn zbuffer(
    width: usize,
    height: usize,
    rig: &CameraRig,
    id: ImageId,
    regions: &[(Plane, RigidMotion, (usize, usize, usize, usize))],
    region_of: impl Fn(usize, usize) -> usize,
) -> Result<Vec<Option<usize>>> {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; width * height];
    for (i, (plane, motion, (x0, y0, x1, y1))) in regions.iter().enumerate() {
        let g = label_geometry(rig, plane, motion, &[id], false)?;
        let g = g.images[id.index()].expect("requested image");
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (cx, cy) in [(*x0, *y0), (*x1, *y0), (*x0, *y1), (*x1, *y1)] {
            let p = g.to_image.apply(cx as f64, cy as f64)?;
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if hi[0] < -1.0 || hi[1] < -1.0 || lo[0] > width as f64 || lo[1] > height as f64 {
            continue;
        }
        let bx0 = (lo[0].floor() - 1.0).clamp(0.0, (width - 1) as f64) as usize;
        let by0 = (lo[1].floor() - 1.0).clamp(0.0, (height - 1) as f64) as usize;
        let bx1 = (hi[0].ceil() + 1.0).clamp(0.0, (width - 1) as f64) as usize;
        let by1 = (hi[1].ceil() + 1.0).clamp(0.0, (height - 1) as f64) as usize;
        for y in by0..=by1 {
            for x in bx0..=bx1 {
                let Ok(r) = g.from_image.apply(x as f64, y as f64) else { continue };
                let (rx, ry) = (r[0].round(), r[1].round());
                if rx < 0.0 || ry < 0.0 || rx >= width as f64 || ry >= height as f64 {
                    continue;
                }
                if region_of(rx as usize, ry as usize) != i {
                    continue;
                }
                let depth = g.plane.inverse_depth(rig, x as f64, y as f64);
                if depth <= 0.0 {
                    continue;
                }
                let slot = &mut best[y * width + x];
                if slot.is_none_or(|(_, d)| depth > d) {
                    *slot = Some((i, depth));
                }
            }
        }
    }
    Ok(best.into_iter().map(|b| b.map(|(i, _)| i)).collect())
}

/// Visible superpixel at every pixel of image `id` (`None` where nothing
/// projects). The reference image returns the segmentation itself.
pub fn project_labels(state: &SceneFlowState, seg: &Superpixelization, rig: &CameraRig, id: ImageId) -> Result<Vec<Option<usize>>> {
    if id == ImageId::REFERENCE {
        return Ok(seg.labels().iter().map(|&l| Some(l as usize)).collect());
    }
    let regions: Vec<_> = (0..seg.len()).map(|i| (*state.plane(i), *state.motion_of(i), seg.bbox(i))).collect();
    zbuffer(seg.width(), seg.height(), rig, id, &regions, |x, y| seg.label(x, y))
}

/// Fills pixels no surface projects to (disocclusions, borders entering the
/// view) with the farther of the nearest labeled pixels left and right in the
/// same row, falling back to the nearest labeled pixel in the column.
/// `inverse_depth(label, x, y)` evaluates a label's surface at a pixel.
pub fn fill_holes(labels: &mut [Option<usize>], width: usize, height: usize, inverse_depth: impl Fn(usize, usize, usize) -> f64) {
    let src = labels.to_vec();
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            if row[x].is_some() {
                continue;
            }
            let left = row[..x].iter().rev().find_map(|l| *l);
            let right = row[x + 1..].iter().find_map(|l| *l);
            labels[y * width + x] = match (left, right) {
                (Some(a), Some(b)) => Some(if inverse_depth(b, x, y) < inverse_depth(a, x, y) { b } else { a }),
                (a, b) => a.or(b),
            };
        }
    }
    let src = labels.to_vec();
    for x in 0..width {
        for y in 0..height {
            if src[y * width + x].is_some() {
                continue;
            }
            let up = (0..y).rev().find_map(|v| src[v * width + x].map(|l| (y - v, l)));
            let down = (y + 1..height).find_map(|v| src[v * width + x].map(|l| (v - y, l)));
            labels[y * width + x] = match (up, down) {
                (Some(a), Some(b)) => Some(if b.0 < a.0 { b.1 } else { a.1 }),
                (a, b) => a.or(b).map(|(_, l)| l),
            };
        }
    }
}

/// [`project_labels`] with holes filled by [`fill_holes`]: every pixel gets
/// a superpixel as long as any superpixel is visible at all.
pub fn dense_labels(state: &SceneFlowState, seg: &Superpixelization, rig: &CameraRig, id: ImageId) -> Result<Vec<Option<usize>>> {
    let mut labels = project_labels(state, seg, rig, id)?;
    if id != ImageId::REFERENCE {
        let geoms = geometries(state, rig, id, false)?;
        fill_holes(&mut labels, seg.width(), seg.height(), |i, x, y| geoms[i].plane.inverse_depth(rig, x as f64, y as f64));
    }
    Ok(labels)
}

/// Which superpixel owns each pixel of each image: the z-buffered projection
/// of a state, hole-filled. The blur and brightness terms use it to restrict
/// each superpixel to the pixels it is visible at.
#[derive(Debug, Clone, PartialEq)]
pub struct Visibility {
    width: usize,
    height: usize,
    superpixels: usize,
    owners: [Vec<u32>; 6],
    members: [Vec<Vec<u32>>; 6],
}

impl Visibility {
    pub const NONE: u32 = u32::MAX;

    pub fn from_state(state: &SceneFlowState, seg: &Superpixelization, rig: &CameraRig, ids: &[ImageId]) -> Result<Self> {
        let mut owners: [Vec<u32>; 6] = Default::default();
        for &id in ids {
            let labels = dense_labels(state, seg, rig, id)?;
            owners[id.index()] = labels.into_iter().map(|l| l.map_or(Self::NONE, |i| i as u32)).collect();
        }
        Ok(Self::from_owners(seg.width(), seg.height(), seg.len(), owners))
    }

    /// From explicit owner rasters (`NONE` for unowned, empty for absent images).
    pub fn from_owners(width: usize, height: usize, superpixels: usize, owners: [Vec<u32>; 6]) -> Self {
        let members = std::array::from_fn(|m| {
            let mut lists = vec![Vec::new(); if owners[m].is_empty() { 0 } else { superpixels }];
            for (p, &o) in owners[m].iter().enumerate() {
                if o != Self::NONE && (o as usize) < superpixels {
                    lists[o as usize].push(p as u32);
                }
            }
            lists
        });
        Self { width, height, superpixels, owners, members }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn superpixels(&self) -> usize {
        self.superpixels
    }

    pub fn has_image(&self, id: ImageId) -> bool {
        !self.owners[id.index()].is_empty()
    }

    pub fn owner(&self, id: ImageId, p: usize) -> Option<usize> {
        self.owners[id.index()].get(p).and_then(|&o| (o != Self::NONE).then_some(o as usize))
    }

    /// Pixels of image `id` owned by superpixel `i`, in raster order.
    pub fn pixels(&self, id: ImageId, i: usize) -> &[u32] {
        self.members[id.index()].get(i).map_or(&[], |v| v.as_slice())
    }
}

/// Forward flow (frame m to m+1) at every pixel of the current-frame image of
/// `view`; pixels no surface projects to take the background neighbor's
/// surface.
pub fn forward_flow(state: &SceneFlowState, seg: &Superpixelization, rig: &CameraRig, view: View) -> Result<FlowField> {
    let id = ImageId::new(view, Frame::Cur);
    let labels = dense_labels(state, seg, rig, id)?;
    let geoms = geometries(state, rig, id, false)?;
    let (w, h) = (seg.width(), seg.height());
    let mut flow = FlowField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            match labels[y * w + x] {
                Some(i) => flow.set(x, y, geoms[i].forward.flow(x as f64, y as f64)?),
                None => flow.set_valid(x, y, false),
            }
        }
    }
    Ok(flow)
}

/// Disparity at every pixel of the left image at `frame`, hole-filled like
/// [`forward_flow`].
pub fn disparity(state: &SceneFlowState, seg: &Superpixelization, rig: &CameraRig, frame: Frame) -> Result<DisparityMap> {
    let id = ImageId::new(View::Left, frame);
    let labels = dense_labels(state, seg, rig, id)?;
    let geoms = geometries(state, rig, id, false)?;
    let (w, h) = (seg.width(), seg.height());
    let mut d = DisparityMap::invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            if let Some(i) = labels[y * w + x] {
                let v = rig.fx * rig.baseline * geoms[i].plane.inverse_depth(rig, x as f64, y as f64);
                d.set(x, y, (v > 0.0).then_some(v));
            }
        }
    }
    Ok(d)
}

/// Dense kernel field of image `id` from the visible superpixel's flows;
/// pixels without a visible surface get the identity kernel.
pub fn kernel_field(
    state: &SceneFlowState,
    seg: &Superpixelization,
    rig: &CameraRig,
    id: ImageId,
    tau: f64,
    three_frame: bool,
) -> Result<BlurKernelField> {
    let labels = project_labels(state, seg, rig, id)?;
    let geoms = geometries(state, rig, id, three_frame)?;
    let w = seg.width();
    let mut err = None;
    let field = BlurKernelField::from_flow_fn(w, seg.height(), tau, |x, y| {
        let i = labels[y * w + x]?;
        match geoms[i].flows(x as f64, y as f64) {
            Ok(f) => Some(f),
            Err(e) => {
                err.get_or_insert(e);
                None
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(field),
    }
}
