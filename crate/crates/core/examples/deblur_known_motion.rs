//! Primal-dual deblurring with ground-truth blur kernels and warps.

use sfdeblur::deblur::{primal_dual_deblur, DeblurProblem};
use sfdeblur::pipeline::psnr;
use sfdeblur::sceneflow::EnergyParams;
use sfdeblur::synth::{render_scene, SceneSpec};

fn main() -> sfdeblur::Result<()> {
    let scene = render_scene(&SceneSpec::two_object(1))?;
    let blurs = scene.blurred()?;
    let problem = DeblurProblem::from_fields(&scene.gt_kernel_fields()?, &scene.gt_warps()?, &blurs)?;
    let params = EnergyParams { pd_iters: 50, ..EnergyParams::default() };
    let out = primal_dual_deblur(&blurs, &problem, None, &params)?;
    println!("energy {:.4} -> {:.4}", out.initial_energy, out.final_energy);
    for (id, latent) in out.latents.iter() {
        let sharp = scene.sharp.get(id).expect("rendered scenes are complete");
        println!("{id:?}: {:.2} dB -> {:.2} dB", psnr(blurs.get(id).expect("same ids"), sharp)?, psnr(latent, sharp)?);
    }
    Ok(())
}
