//! Renders a synthetic two-object scene, writes it as a dataset bundle and
//! reads it back.
//!
//! ```text
//! cargo run --release --example synthesize_bundle [OUT_DIR]
//! ```

use sfdeblur::io::{DatasetBundle, Estimates};
use sfdeblur::pipeline::psnr;
use sfdeblur::synth::{render_scene, SceneSpec};

fn main() -> sfdeblur::Result<()> {
    let spec = SceneSpec::two_object(1);
    let scene = render_scene(&spec)?;
    let blurs = scene.blurred()?;

    let scratch = tempfile::tempdir()?;
    let dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| scratch.path().to_path_buf());
    DatasetBundle::from_rendered(&scene, blurs, false).save(&dir)?;
    println!("bundle written to {}", dir.display());

    let bundle = DatasetBundle::load(&dir)?;
    for (id, blur) in bundle.blurs.iter() {
        let sharp = bundle.sharp.get(id).expect("synthetic bundles carry ground truth");
        println!("{id:?}: {}x{}, blurred PSNR {:.2} dB", blur.width(), blur.height(), psnr(blur, sharp)?);
    }

    // Scoring the blurred inputs as if they were restorations gives the baseline.
    let baseline = Estimates { latents: bundle.blurs.clone(), ..Default::default() };
    print!("{}", bundle.evaluate(&baseline)?.to_key_values());
    Ok(())
}
