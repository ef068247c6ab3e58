//! Scene flow only: piecewise-rigid estimation on the blurred inputs,
//! scored against ground truth.

use sfdeblur::pipeline::{disparity_outlier_rate, estimate_scene_flow, flow_outlier_rate, PipelineConfig};
use sfdeblur::raster::{Frame, View};
use sfdeblur::sceneflow::{disparity, forward_flow};
use sfdeblur::synth::{render_scene, SceneSpec};

fn main() -> sfdeblur::Result<()> {
    let scene = render_scene(&SceneSpec::compact(0))?;
    let rig = scene.spec.rig;
    let (seg, state) = estimate_scene_flow(&scene.blurred()?, &rig, &PipelineConfig::default())?;
    for view in [View::Left, View::Right] {
        let flow = forward_flow(&state, &seg, &rig, view)?;
        println!("{view:?} flow outliers: {:.2}%", flow_outlier_rate(&flow, scene.gt_flow(view))?);
    }
    for (frame, gt) in [(Frame::Cur, &scene.disparity_cur), (Frame::Next, &scene.disparity_next)] {
        let d = disparity(&state, &seg, &rig, frame)?;
        println!("{frame:?} disparity outliers: {:.2}%", disparity_outlier_rate(&d, gt)?);
    }
    Ok(())
}
