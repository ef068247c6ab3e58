//! Per-pixel blur kernels from forward and backward flow, the blur operator
//! and its adjoint.

use sfdeblur::blurkernel::{apply_blur, apply_blur_adjoint, build_kernel_field, build_pixel_kernel};
use sfdeblur::raster::{FlowField, Image};

fn main() -> sfdeblur::Result<()> {
    let tau = 0.8;
    println!("kernel for u_fwd = (6, 2), u_bwd = (-3, -1):");
    for t in build_pixel_kernel([6.0, 2.0], [-3.0, -1.0], tau)?.taps {
        println!("  ({:+}, {:+}) {:.4}", t.dx, t.dy, t.w);
    }

    let (w, h) = (48, 32);
    // A rotating flow field: kernels vary across the image.
    let fwd = FlowField::from_parts(
        w,
        h,
        (0..w * h).map(|p| [-((p / w) as f64 - 16.0) * 0.3, ((p % w) as f64 - 24.0) * 0.3]).collect(),
        vec![true; w * h],
    )?;
    let field = build_kernel_field(&fwd, &fwd.reflected(), tau)?;

    let x = Image::from_fn(w, h, 1, |x, y, _| if (x / 6 + y / 6) % 2 == 0 { 1.0 } else { 0.0 });
    let y = Image::from_fn(w, h, 1, |x, y, _| ((x * 7 + y * 3) % 11) as f64 / 11.0);
    let kx = apply_blur(&field, &x)?;
    let kty = apply_blur_adjoint(&field, &y)?;
    let dot = |a: &Image, b: &Image| a.data().iter().zip(b.data()).map(|(p, q)| p * q).sum::<f64>();
    println!("<Kx, y> = {:.12}", dot(&kx, &y));
    println!("<x, K'y> = {:.12}", dot(&x, &kty));
    Ok(())
}
