//! Plane-induced homographies and disparities for the six images of a
//! stereo triplet.

use nalgebra::Vector3;
use sfdeblur::geometry::{disparity_from_plane, flow_from_homography, image_homography, CameraRig, Plane, RigidMotion};
use sfdeblur::raster::ImageId;

fn main() -> sfdeblur::Result<()> {
    let rig = CameraRig { fx: 200.0, fy: 200.0, cx: 64.0, cy: 48.0, baseline: 0.4 };
    // Fronto-parallel plane at depth 5 (n = normal / distance).
    let plane = Plane::new(Vector3::new(0.0, 0.0, 0.2));
    let motion = RigidMotion::from_axis_angle(Vector3::new(0.0, 0.01, 0.0), Vector3::new(0.1, 0.0, -0.05));
    let x = [80.0, 40.0];
    println!("disparity at {x:?}: {:.4} px", disparity_from_plane(&rig, &plane, x)?);
    for id in ImageId::ALL {
        let h = image_homography(&rig, &plane, &motion, id)?;
        let u = flow_from_homography(&h, x)?;
        println!("{id:?}: displacement ({:+.4}, {:+.4})", u[0], u[1]);
    }
    Ok(())
}
