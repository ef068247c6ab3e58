//! Robust per-superpixel plane fits to a disparity map.

use std::collections::VecDeque;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraRig, Plane};
use crate::raster::DisparityMap;
use crate::segmentation::Superpixelization;

const IRLS_ITERATIONS: usize = 3;
/// Huber width in disparity pixels.
const HUBER_WIDTH: f64 = 1.0;
/// Smallest disparity a fitted plane may produce inside its superpixel.
const MIN_DISPARITY: f64 = 0.1;
/// After the first solve, residuals beyond this many pixels get zero weight.
const GROSS_OUTLIER: f64 = 3.0;

fn huber_weight(r: f64) -> f64 {
    if r.abs() <= HUBER_WIDTH {
        1.0
    } else {
        HUBER_WIDTH / r.abs()
    }
}

/// Weighted least squares of `d = fx·b·(n·K⁻¹x̃)` over `(x, y, d, weight)`.
fn solve(rig: &CameraRig, pts: &[(f64, f64, f64)], weights: &[f64]) -> Option<Vector3<f64>> {
    let s = rig.fx * rig.baseline;
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (&(x, y, d), &w) in pts.iter().zip(weights) {
        let a = rig.ray(x, y) * s;
        ata += a * a.transpose() * w;
        atb += a * (d * w);
    }
    // Reject rank-deficient layouts (e.g. all pixels on one row).
    let eig = ata.symmetric_eigenvalues();
    if eig.min() <= 1e-9 * eig.max().max(1e-300) {
        return None;
    }
    ata.cholesky().map(|c| c.solve(&atb))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fits one plane per superpixel. IRLS weights start from Huber weights of
/// the residual to the region's median disparity; three reweighted solves
/// follow, the later two ignoring gross outliers (Huber influence is bounded
/// but not zero, which leaves a visible bias under salt-and-pepper noise).
/// Superpixels with fewer than 3 valid pixels (or degenerate layouts) take
/// the plane of the nearest fitted superpixel in the adjacency graph.
pub fn fit_planes(disparity: &DisparityMap, seg: &Superpixelization, rig: &CameraRig) -> Result<Vec<Plane>> {
    if disparity.width() != seg.width() || disparity.height() != seg.height() {
        return Err(Error::dims("disparity and segmentation differ in size"));
    }
    if disparity.valid_count() == 0 {
        return Err(Error::Initialization("no valid disparity to fit planes".into()));
    }
    let w = seg.width();
    let mut planes: Vec<Option<Plane>> = vec![None; seg.len()];
    for (i, slot) in planes.iter_mut().enumerate() {
        let pts: Vec<(f64, f64, f64)> = seg
            .region(i)
            .iter()
            .filter_map(|&p| disparity.value(p % w, p / w).map(|d| ((p % w) as f64, (p / w) as f64, d)))
            .collect();
        if pts.len() < 3 {
            continue;
        }
        let med = median(pts.iter().map(|p| p.2).collect());
        let mut weights: Vec<f64> = pts.iter().map(|p| huber_weight(p.2 - med)).collect();
        let mut n = None;
        for it in 0..IRLS_ITERATIONS {
            let Some(sol) = solve(rig, &pts, &weights) else { break };
            n = Some(sol);
            if it + 1 < IRLS_ITERATIONS {
                let s = rig.fx * rig.baseline;
                for (wt, &(x, y, d)) in weights.iter_mut().zip(&pts) {
                    let r = d - s * sol.dot(&rig.ray(x, y));
                    *wt = if r.abs() > GROSS_OUTLIER { 0.0 } else { huber_weight(r) };
                }
            }
        }
        let fallback = Plane::from_disparity(rig, med.max(MIN_DISPARITY));
        let plane = n.map(Plane::new).unwrap_or(fallback);
        // Keep every pixel of the region in front of the camera.
        *slot = Some(if in_front(&plane, seg, i, rig) { plane } else { fallback });
    }
    let any_fit = planes.iter().find_map(|p| *p);
    let global = any_fit.ok_or_else(|| Error::Initialization("no superpixel has 3 valid disparities".into()))?;
    // Multi-source BFS from fitted superpixels; ties go to the smaller source id.
    let mut source: Vec<Option<usize>> = planes.iter().enumerate().map(|(i, p)| p.map(|_| i)).collect();
    let mut queue: VecDeque<usize> = (0..seg.len()).filter(|&i| source[i].is_some()).collect();
    while let Some(i) = queue.pop_front() {
        for &j in seg.neighbors(i) {
            if source[j].is_none() {
                source[j] = source[i];
                queue.push_back(j);
            }
        }
    }
    Ok((0..seg.len())
        .map(|i| {
            let plane = source[i].and_then(|s| planes[s]).unwrap_or(global);
            if planes[i].is_some() || in_front(&plane, seg, i, rig) {
                return plane;
            }
            // An inherited slope can cross zero over this region.
            let c = seg.centroid(i);
            let d = rig.fx * rig.baseline * plane.inverse_depth(rig, c[0], c[1]);
            Plane::from_disparity(rig, if d.is_finite() { d.max(MIN_DISPARITY) } else { MIN_DISPARITY })
        })
        .collect())
}

/// Whether `plane` gives at least `MIN_DISPARITY` over all of region `i`.
fn in_front(plane: &Plane, seg: &Superpixelization, i: usize, rig: &CameraRig) -> bool {
    let w = seg.width();
    plane.is_finite()
        && seg
            .region(i)
            .iter()
            .all(|&p| rig.fx * rig.baseline * plane.inverse_depth(rig, (p % w) as f64, (p / w) as f64) >= MIN_DISPARITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::disparity_from_plane;
    use crate::raster::Image;
    use crate::segmentation::segment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiles(w: usize, h: usize, t: usize) -> Superpixelization {
        let labels: Vec<u32> = (0..w * h).map(|p| ((p / w / t) * w.div_ceil(t) + (p % w) / t) as u32).collect();
        Superpixelization::from_labels(w, h, &labels).unwrap()
    }

    #[test]
    fn constant_disparity_gives_fronto_parallel_planes() {
        let rig = CameraRig::new(100.0, 100.0, 32.0, 32.0, 0.5).unwrap();
        let disp = DisparityMap::constant(64, 64, 5.0);
        let seg = tiles(64, 64, 16);
        for p in fit_planes(&disp, &seg, &rig).unwrap() {
            assert!((p.n - Vector3::new(0.0, 0.0, 0.1)).norm() <= 1e-6);
        }
    }

    #[test]
    fn linear_ramp_is_reproduced() {
        let rig = CameraRig::new(120.0, 110.0, 30.0, 20.0, 0.4).unwrap();
        let truth = Plane::new(Vector3::new(0.003, -0.002, 0.12));
        let vals: Vec<f64> = (0..64 * 48).map(|p| disparity_from_plane(&rig, &truth, [(p % 64) as f64, (p / 64) as f64]).unwrap()).collect();
        let disp = DisparityMap::from_parts(64, 48, vals.clone(), vec![true; 64 * 48]).unwrap();
        let seg = tiles(64, 48, 12);
        let planes = fit_planes(&disp, &seg, &rig).unwrap();
        for i in 0..seg.len() {
            for &p in seg.region(i) {
                let d = disparity_from_plane(&rig, &planes[i], [(p % 64) as f64, (p / 64) as f64]).unwrap();
                assert!((d - vals[p]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn salt_and_pepper_outliers_are_rejected() {
        let rig = CameraRig::new(100.0, 100.0, 32.0, 32.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let vals: Vec<f64> = (0..64 * 64)
            .map(|_| if rng.random::<f64>() < 0.2 { if rng.random::<bool>() { 0.0 } else { 63.0 } } else { 5.0 })
            .collect();
        let disp = DisparityMap::from_parts(64, 64, vals, vec![true; 64 * 64]).unwrap();
        let seg = tiles(64, 64, 64);
        let planes = fit_planes(&disp, &seg, &rig).unwrap();
        assert!((planes[0].n - Vector3::new(0.0, 0.0, 0.1)).norm() <= 1e-3, "{:?}", planes[0].n);
    }

    #[test]
    fn sparse_superpixels_inherit_neighbors() {
        let rig = CameraRig::new(100.0, 100.0, 16.0, 8.0, 0.5).unwrap();
        let mut disp = DisparityMap::constant(32, 16, 4.0);
        for y in 0..16 {
            for x in 16..32 {
                disp.set(x, y, None);
            }
        }
        let seg = tiles(32, 16, 16);
        let planes = fit_planes(&disp, &seg, &rig).unwrap();
        assert_eq!(planes[0], planes[1]);
        assert!(fit_planes(&DisparityMap::invalid(32, 16), &seg, &rig).is_err());
    }

    #[test]
    fn inherited_planes_stay_in_front() {
        // A steep ramp on the left tile would go negative across the empty right tile.
        let rig = CameraRig::new(100.0, 100.0, 16.0, 8.0, 0.5).unwrap();
        let mut disp = DisparityMap::invalid(48, 16);
        for y in 0..16 {
            for x in 0..16 {
                disp.set(x, y, Some(8.0 - 0.45 * x as f64));
            }
        }
        let seg = tiles(48, 16, 16);
        let planes = fit_planes(&disp, &seg, &rig).unwrap();
        for (i, plane) in planes.iter().enumerate() {
            for &p in seg.region(i) {
                assert!(plane.inverse_depth(&rig, (p % 48) as f64, (p / 48) as f64) > 0.0, "superpixel {i}");
            }
        }
    }

    #[test]
    fn round_trip_through_segmentation() {
        let rig = CameraRig::new(200.0, 200.0, 63.5, 31.5, 0.5).unwrap();
        let truth = Plane::new(Vector3::new(0.001, 0.002, 0.09));
        let vals: Vec<f64> = (0..128 * 64).map(|p| disparity_from_plane(&rig, &truth, [(p % 128) as f64, (p / 128) as f64]).unwrap()).collect();
        let disp = DisparityMap::from_parts(128, 64, vals, vec![true; 128 * 64]).unwrap();
        let img = Image::from_fn(128, 64, 1, |x, y, _| ((x * 7 + y * 3) % 11) as f64 / 11.0);
        let seg = segment(&img, &disp, 20, 10.0, 1.0).unwrap();
        for p in fit_planes(&disp, &seg, &rig).unwrap() {
            assert!((p.n - truth.n).norm() < 1e-6);
        }
    }
}
