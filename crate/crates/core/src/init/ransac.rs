//! Sequential RANSAC extraction of rigid-motion hypotheses from 3D-2D
//! correspondences (reference points back-projected with the disparity map).

use nalgebra::{Matrix6, Vector3, Vector6};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{reference_to_image, CameraRig, RigidMotion};
use crate::init::features::Correspondences;
use crate::raster::DisparityMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub iterations: usize,
    /// Reprojection inlier threshold in pixels.
    pub threshold: f64,
    /// Minimum support of a non-identity hypothesis.
    pub min_inliers: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { iterations: 500, threshold: 2.0, min_inliers: 10 }
    }
}

struct Sample {
    point: Vector3<f64>,
    target: [f64; 2],
    id: crate::raster::ImageId,
}

fn project_residual(rig: &CameraRig, m: &RigidMotion, s: &Sample) -> Option<[f64; 2]> {
    let q = reference_to_image(m, s.id, rig).apply(&s.point);
    rig.project(&q).map(|p| [p[0] - s.target[0], p[1] - s.target[1]])
}

fn reprojection_error(rig: &CameraRig, m: &RigidMotion, s: &Sample) -> f64 {
    project_residual(rig, m, s).map_or(f64::INFINITY, |r| r[0].hypot(r[1]))
}

/// Gauss-Newton (Levenberg damped) fit of the motion minimizing reprojection
/// error over `samples`, starting at `init`.
fn fit_motion(rig: &CameraRig, samples: &[&Sample], init: RigidMotion, iterations: usize) -> Option<RigidMotion> {
    let mut m = init;
    let cost = |m: &RigidMotion| -> f64 {
        samples.iter().map(|s| project_residual(rig, m, s).map_or(1e12, |r| r[0] * r[0] + r[1] * r[1])).sum()
    };
    let mut current = cost(&m);
    let mut damping = 1e-6;
    for _ in 0..iterations {
        let mut jtj = Matrix6::<f64>::zeros();
        let mut jtr = Vector6::<f64>::zeros();
        for s in samples {
            let r = project_residual(rig, &m, s)?;
            // Central differences of the residual under R' = Exp(w) R, t' = t + dt.
            let mut j = nalgebra::Matrix2x6::<f64>::zeros();
            for k in 0..6 {
                let mut col = [0.0; 2];
                for sign in [1.0, -1.0] {
                    let mut delta = [0.0; 6];
                    delta[k] = sign * FD_STEP;
                    let r2 = project_residual(rig, &m.perturbed(&delta), s)?;
                    col[0] += sign * r2[0];
                    col[1] += sign * r2[1];
                }
                j[(0, k)] = col[0] / (2.0 * FD_STEP);
                j[(1, k)] = col[1] / (2.0 * FD_STEP);
            }
            let rv = nalgebra::Vector2::new(r[0], r[1]);
            jtj += j.transpose() * j;
            jtr += j.transpose() * rv;
        }
        let mut improved = false;
        for _ in 0..8 {
            let mut a = jtj;
            for k in 0..6 {
                a[(k, k)] += damping * (1.0 + jtj[(k, k)]);
            }
            let Some(delta) = a.lu().solve(&(-jtr)) else {
                damping *= 10.0;
                continue;
            };
            let cand = m.perturbed(delta.as_slice());
            let c = cost(&cand);
            if c < current {
                m = cand;
                current = c;
                damping = (damping * 0.3).max(1e-9);
                improved = true;
                break;
            }
            damping *= 10.0;
        }
        if !improved || current < 1e-18 {
            break;
        }
    }
    current.is_finite().then(|| orthonormalized(m))
}

const FD_STEP: f64 = 1e-6;

fn orthonormalized(m: RigidMotion) -> RigidMotion {
    let svd = m.rotation.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        r = -r;
    }
    RigidMotion { rotation: r, translation: m.translation }
}

/// Up to `count` motions extracted greedily (largest consensus first); the
/// identity motion is always appended.
pub fn ransac_motion_hypotheses(
    matches: &Correspondences,
    disparity: &DisparityMap,
    rig: &CameraRig,
    count: usize,
    params: &RansacParams,
    seed: u64,
) -> Vec<RigidMotion> {
    let mut samples: Vec<Sample> = Vec::new();
    for m in &matches.matches {
        let (x, y) = (m.x_ref[0].round(), m.x_ref[1].round());
        if x < 0.0 || y < 0.0 || x >= disparity.width() as f64 || y >= disparity.height() as f64 {
            continue;
        }
        let Some(d) = disparity.value(x as usize, y as usize) else { continue };
        let Some(point) = rig.backproject(m.x_ref[0], m.x_ref[1], d) else { continue };
        samples.push(Sample { point, target: m.x_target, id: m.direction.target() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hypotheses = Vec::new();
    let mut remaining: Vec<usize> = (0..samples.len()).collect();
    while hypotheses.len() < count && remaining.len() >= 3.max(params.min_inliers) {
        let mut best: Option<(usize, RigidMotion)> = None;
        for _ in 0..params.iterations {
            let pick = sample(&mut rng, remaining.len(), 3);
            let subset: Vec<&Sample> = pick.iter().map(|k| &samples[remaining[k]]).collect();
            let Some(model) = fit_motion(rig, &subset, RigidMotion::identity(), 15) else { continue };
            let support = remaining.iter().filter(|&&k| reprojection_error(rig, &model, &samples[k]) < params.threshold).count();
            if best.as_ref().is_none_or(|(b, _)| support > *b) {
                best = Some((support, model));
            }
        }
        let Some((_, model)) = best else { break };
        let inliers: Vec<&Sample> =
            remaining.iter().map(|&k| &samples[k]).filter(|s| reprojection_error(rig, &model, s) < params.threshold).collect();
        let refined = fit_motion(rig, &inliers, model, 20).unwrap_or(model);
        let keep: Vec<usize> =
            remaining.iter().copied().filter(|&k| reprojection_error(rig, &refined, &samples[k]) < params.threshold).collect();
        if keep.len() < params.min_inliers {
            break;
        }
        hypotheses.push(refined);
        remaining.retain(|k| !keep.contains(k));
    }
    hypotheses.push(RigidMotion::identity());
    hypotheses
}
