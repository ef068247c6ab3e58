//! Initialization: SGM disparity, superpixels, plane fits, feature matches
//! and rigid motion hypotheses.

use sfdeblur::pipeline::{disparity_outlier_rate, initialize, PipelineConfig};
use sfdeblur::synth::{render_scene, SceneSpec};

fn main() -> sfdeblur::Result<()> {
    let scene = render_scene(&SceneSpec::two_object(2))?;
    let blurs = scene.blurred()?;
    let init = initialize(&blurs, &scene.spec.rig, &PipelineConfig::default())?;
    println!("SGM disparity outliers: {:.2}%", disparity_outlier_rate(&init.disparity, &scene.disparity_cur)?);
    println!("superpixels: {}, adjacent pairs: {}", init.segmentation.len(), init.segmentation.edge_count());
    println!("feature matches: {}", init.matches.len());
    for (k, m) in init.state.motions.iter().enumerate() {
        let t = m.translation;
        println!("motion hypothesis {k}: t = ({:+.3}, {:+.3}, {:+.3})", t.x, t.y, t.z);
    }
    Ok(())
}
