//! Dataset bundles (inputs plus optional ground truth) and estimate
//! directories (what `estimate`, `deblur` and `run` write).
//!
//! Layout of a bundle:
//!
//! ```text
//! manifest.json          files, roles, checksums
//! camera.toml            CameraRig
//! scene.toml             SceneSpec (synthetic bundles)
//! blur/<image>.png       16-bit blurred inputs, <image> as in ImageId::name
//! sharp/<image>.png      16-bit sharp ground truth
//! gt/flow_<view>.png     KITTI flow of the current frame, view = left | right
//! gt/disparity_<f>.png   KITTI left-view disparity, f = m | m1
//! ```
//!
//! Estimate directories hold `latent/<image>.fras`, `flow_<view>.png`,
//! `disparity_<f>.png` and `state.json`, plus whatever the command adds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::io::manifest::{Manifest, ManifestWriter, Role};
use crate::io::raster::{decode_disparity, decode_flow, decode_image, encode_disparity, encode_flow, encode_image};
use crate::pipeline::{Evaluation, MetricsReport, PipelineOutput};
use crate::raster::{DisparityMap, FlowField, Frame, ImageId, SixPack, View};
use crate::sceneflow::{disparity, forward_flow, SceneFlowState};
use crate::segmentation::Superpixelization;
use crate::synth::{RenderedScene, SceneSpec};

const VIEWS: [(View, &str); 2] = [(View::Left, "left"), (View::Right, "right")];
const FRAMES: [(Frame, &str); 2] = [(Frame::Cur, "m"), (Frame::Next, "m1")];

fn toml_text<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Data(e.to_string()))
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> Result<T> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    toml::from_str(text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn write_pack(w: &mut ManifestWriter, pack: &SixPack, dir: &str, ext: &str, role: Role) -> Result<()> {
    for (id, img) in pack.iter() {
        let path = format!("{dir}/{}.{ext}", id.name());
        w.add(&path, role, Some(id.name()), &encode_image(Path::new(&path), img)?)?;
    }
    Ok(())
}

fn read_pack(m: &Manifest, role: Role) -> Result<SixPack> {
    let mut pack = SixPack::new();
    for id in ImageId::ALL {
        if let Some((path, bytes)) = m.find(role, Some(id.name())) {
            pack.insert(id, decode_image(path, bytes)?);
        }
    }
    if !pack.is_empty() {
        pack.validate().map_err(|e| Error::Data(format!("{role:?} images: {e}")))?;
    }
    Ok(pack)
}

fn write_geometry(
    w: &mut ManifestWriter,
    prefix: &str,
    flow: &[Option<FlowField>; 2],
    disparity: &[Option<DisparityMap>; 2],
) -> Result<()> {
    for (k, (_, name)) in VIEWS.iter().enumerate() {
        if let Some(f) = &flow[k] {
            let path = format!("{prefix}flow_{name}.png");
            w.add(&path, Role::Flow, Some(name), &encode_flow(Path::new(&path), f)?)?;
        }
    }
    for (k, (_, name)) in FRAMES.iter().enumerate() {
        if let Some(d) = &disparity[k] {
            let path = format!("{prefix}disparity_{name}.png");
            w.add(&path, Role::Disparity, Some(name), &encode_disparity(Path::new(&path), d)?)?;
        }
    }
    Ok(())
}

type Geometry = ([Option<FlowField>; 2], [Option<DisparityMap>; 2]);

fn read_geometry(m: &Manifest) -> Result<Geometry> {
    let mut flow = [None, None];
    for (k, (_, name)) in VIEWS.iter().enumerate() {
        if let Some((path, bytes)) = m.find(Role::Flow, Some(name)) {
            flow[k] = Some(decode_flow(path, bytes)?);
        }
    }
    let mut disparity = [None, None];
    for (k, (_, name)) in FRAMES.iter().enumerate() {
        if let Some((path, bytes)) = m.find(Role::Disparity, Some(name)) {
            disparity[k] = Some(decode_disparity(path, bytes)?);
        }
    }
    Ok((flow, disparity))
}

/// Blurred inputs with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub rig: CameraRig,
    pub blurs: SixPack,
    /// Empty when no sharp ground truth is available.
    pub sharp: SixPack,
    /// Forward flow of the current frame, `[left, right]`.
    pub flow: [Option<FlowField>; 2],
    /// Left-view disparity, `[m, m+1]`.
    pub disparity: [Option<DisparityMap>; 2],
    pub scene: Option<SceneSpec>,
}

impl DatasetBundle {
    /// Bundle of a rendered scene; with `two_frame` the `m-1` images are left out.
    pub fn from_rendered(scene: &RenderedScene, blurs: SixPack, two_frame: bool) -> Self {
        let mut blurs = blurs;
        let mut sharp = scene.sharp.clone();
        if two_frame {
            for view in [View::Left, View::Right] {
                blurs.remove(ImageId::new(view, Frame::Prev));
                sharp.remove(ImageId::new(view, Frame::Prev));
            }
        }
        Self {
            rig: scene.spec.rig,
            blurs,
            sharp,
            flow: [Some(scene.gt_flow(View::Left).clone()), Some(scene.gt_flow(View::Right).clone())],
            disparity: [Some(scene.disparity_cur.clone()), Some(scene.disparity_next.clone())],
            scene: Some(scene.spec.clone()),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut w = ManifestWriter::new(dir)?;
        w.add("camera.toml", Role::Camera, None, toml_text(&self.rig)?.as_bytes())?;
        if let Some(scene) = &self.scene {
            w.add("scene.toml", Role::Scene, None, toml_text(scene)?.as_bytes())?;
        }
        write_pack(&mut w, &self.blurs, "blur", "png", Role::Blur)?;
        write_pack(&mut w, &self.sharp, "sharp", "png", Role::Sharp)?;
        write_geometry(&mut w, "gt/", &self.flow, &self.disparity)?;
        w.finish()
    }

    /// Loads and checks a bundle; the camera and at least the reference
    /// blurred image are required.
    pub fn load(dir: &Path) -> Result<Self> {
        let m = Manifest::load(dir)?;
        let (path, bytes) = m.require(Role::Camera, None)?;
        let rig: CameraRig = parse_toml(path, bytes)?;
        rig.validate().map_err(|e| Error::Data(format!("camera: {e}")))?;
        let scene = m.find(Role::Scene, None).map(|(p, b)| parse_toml(p, b)).transpose()?;
        let blurs = read_pack(&m, Role::Blur)?;
        if blurs.get(ImageId::REFERENCE).is_none() {
            return Err(Error::Data(format!("bundle {} has no blurred {} image", dir.display(), ImageId::REFERENCE.name())));
        }
        let sharp = read_pack(&m, Role::Sharp)?;
        let (flow, disparity) = read_geometry(&m)?;
        Ok(Self { rig, blurs, sharp, flow, disparity, scene })
    }

    /// Metrics of `est` against this bundle's ground truth. Pairs with a
    /// missing side are skipped.
    pub fn evaluate(&self, est: &Estimates) -> Result<MetricsReport> {
        fn pair<'a, T>(a: &'a Option<T>, b: &'a Option<T>) -> Option<(&'a T, &'a T)> {
            a.as_ref().zip(b.as_ref())
        }
        let images = (!est.latents.is_empty() && !self.sharp.is_empty()).then_some((&est.latents, &self.blurs, &self.sharp));
        MetricsReport::compute(&Evaluation {
            flow_left: pair(&est.flow[0], &self.flow[0]),
            flow_right: pair(&est.flow[1], &self.flow[1]),
            disparity_m: pair(&est.disparity[0], &self.disparity[0]),
            disparity_m1: pair(&est.disparity[1], &self.disparity[1]),
            images,
        })
    }
}

/// Serialized labeling: the superpixel raster and the scene-flow state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub state: SceneFlowState,
}

impl StateFile {
    pub fn new(seg: &Superpixelization, state: &SceneFlowState) -> Self {
        Self { width: seg.width(), height: seg.height(), labels: seg.labels().to_vec(), state: state.clone() }
    }

    /// Rebuilds the segmentation and checks the state against it.
    pub fn resolve(&self, rig: &CameraRig) -> Result<(Superpixelization, SceneFlowState)> {
        let seg = Superpixelization::from_labels(self.width, self.height, &self.labels)?;
        if seg.labels() != self.labels.as_slice() {
            return Err(Error::Data("state labels are not connected, row-major numbered superpixels".into()));
        }
        self.state.validate(&seg, rig).map_err(|e| Error::Data(format!("state: {e}")))?;
        Ok((seg, self.state.clone()))
    }
}

/// Estimated quantities; any part may be absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Estimates {
    pub latents: SixPack,
    pub flow: [Option<FlowField>; 2],
    pub disparity: [Option<DisparityMap>; 2],
    pub state: Option<StateFile>,
}

impl Estimates {
    /// Flows, disparities and state induced by a labeling.
    pub fn from_state(seg: &Superpixelization, state: &SceneFlowState, rig: &CameraRig) -> Result<Self> {
        Ok(Self {
            latents: SixPack::new(),
            flow: [Some(forward_flow(state, seg, rig, View::Left)?), Some(forward_flow(state, seg, rig, View::Right)?)],
            disparity: [Some(disparity(state, seg, rig, Frame::Cur)?), Some(disparity(state, seg, rig, Frame::Next)?)],
            state: Some(StateFile::new(seg, state)),
        })
    }

    pub fn from_output(out: &PipelineOutput, rig: &CameraRig) -> Result<Self> {
        let mut est = Self::from_state(&out.segmentation, &out.state, rig)?;
        est.latents = out.latents.clone();
        Ok(est)
    }

    /// Adds the estimate files to `w`.
    pub fn write(&self, w: &mut ManifestWriter) -> Result<()> {
        write_pack(w, &self.latents, "latent", "fras", Role::Latent)?;
        write_geometry(w, "", &self.flow, &self.disparity)?;
        if let Some(s) = &self.state {
            let mut text = serde_json::to_string(s).map_err(|e| Error::Data(e.to_string()))?;
            text.push('\n');
            w.add("state.json", Role::State, None, text.as_bytes())?;
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut w = ManifestWriter::new(dir)?;
        self.write(&mut w)?;
        w.finish()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = Manifest::load(dir)?;
        let latents = read_pack(&m, Role::Latent)?;
        let (flow, disparity) = read_geometry(&m)?;
        let state = m
            .find(Role::State, None)
            .map(|(p, b)| serde_json::from_slice(b).map_err(|e| Error::Data(format!("{}: {e}", p.display()))))
            .transpose()?;
        Ok(Self { latents, flow, disparity, state })
    }
}

/// Reads a standalone `state.json`.
pub fn read_state(path: &Path) -> Result<StateFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::render_scene;

    fn bundle() -> (RenderedScene, DatasetBundle) {
        let mut spec = SceneSpec::compact(3);
        spec.noise = 0.0;
        let r = render_scene(&spec).unwrap();
        let blurs = r.blurred().unwrap();
        let b = DatasetBundle::from_rendered(&r, blurs, false);
        (r, b)
    }

    #[test]
    fn bundle_round_trip_and_determinism() {
        let (_, b) = bundle();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        b.save(d1.path()).unwrap();
        b.save(d2.path()).unwrap();
        let m1 = std::fs::read(d1.path().join("manifest.json")).unwrap();
        assert_eq!(m1, std::fs::read(d2.path().join("manifest.json")).unwrap());

        let back = DatasetBundle::load(d1.path()).unwrap();
        assert_eq!(back.rig, b.rig);
        assert_eq!(back.scene, b.scene);
        assert_eq!(back.blurs.ids(), b.blurs.ids());
        for (id, img) in b.blurs.iter() {
            let err = img.data().iter().zip(back.blurs.get(id).unwrap().data()).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            assert!(err <= 0.5 / 65535.0 + 1e-12);
        }
        assert_eq!(back.flow[0].as_ref().unwrap().valid_mask(), b.flow[0].as_ref().unwrap().valid_mask());
        // Ground truth against its own decoded copy scores perfectly.
        let est = Estimates { latents: back.sharp.clone(), flow: back.flow.clone(), disparity: back.disparity.clone(), state: None };
        let report = back.evaluate(&est).unwrap();
        assert_eq!(report.flow_outliers_left, Some(0.0));
        assert_eq!(report.disparity_outliers_m1, Some(0.0));
        assert!(report.images.iter().all(|q| q.identical));
    }

    #[test]
    fn two_frame_bundles_drop_previous_frame() {
        let (r, _) = bundle();
        let b = DatasetBundle::from_rendered(&r, r.blurred().unwrap(), true);
        assert_eq!(b.blurs.len(), 4);
        assert!(b.blurs.get(ImageId::new(View::Left, Frame::Prev)).is_none());
    }

    #[test]
    fn missing_reference_is_a_data_error() {
        let (_, mut b) = bundle();
        b.blurs.remove(ImageId::REFERENCE);
        let d = tempfile::tempdir().unwrap();
        b.save(d.path()).unwrap();
        assert!(matches!(DatasetBundle::load(d.path()), Err(Error::Data(_))));
    }

    #[test]
    fn estimates_round_trip() {
        let (r, _) = bundle();
        let seg = r.patch_segmentation(16).unwrap();
        let state = r.state_for(&seg);
        let mut est = Estimates::from_state(&seg, &state, &r.spec.rig).unwrap();
        est.latents = r.sharp.clone();
        let d = tempfile::tempdir().unwrap();
        est.save(d.path()).unwrap();
        let back = Estimates::load(d.path()).unwrap();
        for (id, img) in est.latents.iter() {
            let err = img.data().iter().zip(back.latents.get(id).unwrap().data()).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-7);
        }
        assert_eq!(back.state, est.state);
        let (seg2, state2) = back.state.unwrap().resolve(&r.spec.rig).unwrap();
        assert_eq!(seg2, seg);
        assert_eq!(state2, state);
    }
}
