//! Scene-flow step: discrete proposal labeling by ICM, then continuous
//! Gauss-Newton refinement of planes and object motions.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{image_homography, CameraRig, Homography, Plane, RigidMotion};
use crate::init::Correspondences;
use crate::raster::{Image, ImageId, SixPack};
use crate::segmentation::Superpixelization;

use super::energy::{pair_terms, LabelGeometry, SceneFlowProblem};
use super::icm::{icm, LabelEnergy};
use super::state::{Assignment, EnergyParams, SceneFlowState};

/// Settings of the scene-flow step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneFlowOptions {
    pub icm_sweeps: usize,
    pub plane_steps: usize,
    pub motion_steps: usize,
    /// Number of fronto-parallel plane proposals per superpixel.
    pub fronto_planes: usize,
}

impl Default for SceneFlowOptions {
    fn default() -> Self {
        Self { icm_sweeps: 10, plane_steps: 3, motion_steps: 3, fronto_planes: 5 }
    }
}

/// Result of one scene-flow step.
#[derive(Debug, Clone)]
pub struct SceneFlowOutcome {
    pub state: SceneFlowState,
    pub energy_before: f64,
    pub energy_after: f64,
    pub icm_sweeps: usize,
    pub labels_changed: usize,
}

/// Proposal labeling energy: label `l` of node `i` is `proposals[i][l]`.
/// Unaries use the per-superpixel blur proxy; results are cached.
pub struct ProposalEnergy<'p, 'a> {
    problem: &'p SceneFlowProblem<'a>,
    motions: Vec<RigidMotion>,
    pub(crate) proposals: Vec<Vec<Assignment>>,
    cheap: Vec<Vec<Option<f64>>>,
    full: Vec<Vec<Option<f64>>>,
}

impl<'p, 'a> ProposalEnergy<'p, 'a> {
    pub fn new(problem: &'p SceneFlowProblem<'a>, motions: Vec<RigidMotion>, proposals: Vec<Vec<Assignment>>) -> Self {
        let cheap = proposals.iter().map(|p| vec![None; p.len()]).collect();
        let full = proposals.iter().map(|p| vec![None; p.len()]).collect();
        Self { problem, motions, proposals, cheap, full }
    }

    pub fn proposals(&self) -> &[Vec<Assignment>] {
        &self.proposals
    }

    fn geometry(&self, i: usize, l: usize) -> Option<LabelGeometry> {
        let a = &self.proposals[i][l];
        if !plane_valid(self.problem, i, &a.plane) {
            return None;
        }
        self.problem.geometry(&a.plane, &self.motions[a.object]).ok()
    }
}

fn plane_valid(problem: &SceneFlowProblem<'_>, i: usize, plane: &Plane) -> bool {
    let w = problem.seg.width();
    plane.is_finite() && problem.seg.region(i).iter().all(|&p| plane.inverse_depth(problem.rig, (p % w) as f64, (p / w) as f64) > 0.0)
}

impl LabelEnergy for ProposalEnergy<'_, '_> {
    fn node_count(&self) -> usize {
        self.proposals.len()
    }

    fn label_count(&self, node: usize) -> usize {
        self.proposals[node].len()
    }

    fn neighbors(&self, node: usize) -> &[usize] {
        self.problem.seg.neighbors(node)
    }

    fn unary_lower_bound(&mut self, i: usize, l: usize) -> f64 {
        if let Some(v) = self.cheap[i][l] {
            return v;
        }
        let v = match self.geometry(i, l) {
            Some(g) => self.problem.unary_parts(i, &g, false).map_or(f64::INFINITY, |u| u.total()),
            None => f64::INFINITY,
        };
        self.cheap[i][l] = Some(v);
        v
    }

    fn unary(&mut self, i: usize, l: usize) -> f64 {
        if let Some(v) = self.full[i][l] {
            return v;
        }
        let lb = self.unary_lower_bound(i, l);
        let v = if !lb.is_finite() || self.problem.params.theta3 == 0.0 {
            lb
        } else {
            match self.geometry(i, l).map(|g| self.problem.blur_raw(i, &g)) {
                Some(Ok(b)) => lb + self.problem.params.theta3 * b,
                _ => f64::INFINITY,
            }
        };
        self.full[i][l] = Some(v);
        v
    }

    fn pairwise(&mut self, i: usize, li: usize, j: usize, lj: usize) -> f64 {
        let p = self.problem;
        pair_terms(p.seg, p.rig, &p.params, i, &self.proposals[i][li], j, &self.proposals[j][lj]).map_or(f64::INFINITY, |t| t.total())
    }
}

fn push_unique(planes: &mut Vec<Plane>, p: Plane) {
    if !planes.iter().any(|q| (q.n - p.n).norm() <= 1e-12 * (1.0 + p.n.norm())) {
        planes.push(p);
    }
}

/// Plane proposals per superpixel: current plane, initial fit, neighbors'
/// planes and fronto-parallel sweeps; crossed with every object. The current
/// assignment is always label 0.
pub(crate) fn build_proposals(
    state: &SceneFlowState,
    seg: &Superpixelization,
    rig: &CameraRig,
    init_planes: Option<&[Plane]>,
    fronto: usize,
) -> Vec<Vec<Assignment>> {
    let mut disp: Vec<f64> = (0..seg.len())
        .map(|i| {
            let c = seg.centroid(i);
            rig.fx * rig.baseline * state.plane(i).inverse_depth(rig, c[0], c[1])
        })
        .filter(|d| d.is_finite() && *d > 0.0)
        .collect();
    disp.sort_by(|a, b| a.total_cmp(b));
    let sweep: Vec<Plane> = if disp.is_empty() {
        Vec::new()
    } else {
        (0..fronto)
            .map(|k| {
                let q = (k as f64 + 0.5) / fronto as f64;
                let d = disp[((q * disp.len() as f64) as usize).min(disp.len() - 1)];
                Plane::from_disparity(rig, d)
            })
            .collect()
    };
    (0..seg.len())
        .map(|i| {
            let current = state.assignments[i];
            let mut planes = vec![current.plane];
            if let Some(init) = init_planes {
                push_unique(&mut planes, init[i]);
            }
            for &j in seg.neighbors(i) {
                push_unique(&mut planes, state.assignments[j].plane);
            }
            for p in &sweep {
                push_unique(&mut planes, *p);
            }
            let mut out = vec![current];
            for p in &planes {
                for k in 0..state.motions.len() {
                    let a = Assignment { plane: *p, object: k };
                    if a != current {
                        out.push(a);
                    }
                }
            }
            out
        })
        .collect()
}

/// Accumulates the Gauss-Newton system of the brightness and feature terms of
/// superpixel `i`. `homs[v]` holds the reference-to-image homographies of
/// variant `v`: `v = 0` is the linearization point, `2k + 1` / `2k + 2` are
/// the `±steps[k]` perturbations of parameter `k`.
fn accumulate_data(
    problem: &SceneFlowProblem<'_>,
    i: usize,
    homs: &[[Option<Homography>; 6]],
    steps: &[f64],
    jtj: &mut DMatrix<f64>,
    jtr: &mut DVector<f64>,
) {
    let np = steps.len();
    let p = &problem.params;
    let (w, h) = (problem.seg.width(), problem.seg.height());
    let positions = |id: ImageId, x: f64, y: f64| -> Option<(Vec<f64>, [f64; 2])> {
        let c = homs[0][id.index()]?.apply(x, y).ok()?;
        let mut jac = vec![0.0; 2 * np];
        for k in 0..np {
            let a = homs[2 * k + 1][id.index()]?.apply(x, y).ok()?;
            let b = homs[2 * k + 2][id.index()]?.apply(x, y).ok()?;
            jac[k] = (a[0] - b[0]) / (2.0 * steps[k]);
            jac[np + k] = (a[1] - b[1]) / (2.0 * steps[k]);
        }
        Some((jac, c))
    };
    let mut row = vec![0.0; np];
    if p.theta1 > 0.0 {
        let reference = problem.latents.get(ImageId::REFERENCE).expect("present");
        let nc = reference.channels();
        let (mut v, mut vx0, mut vx1, mut vy0, mut vy1) = (vec![0.0; nc], vec![0.0; nc], vec![0.0; nc], vec![0.0; nc], vec![0.0; nc]);
        for d in problem.directions() {
            let id = d.target();
            let target: &Image = problem.latents.get(id).expect("present");
            for &px in problem.seg.region(i) {
                if !problem.blurs.usable(ImageId::REFERENCE, px) {
                    continue;
                }
                let (x, y) = ((px % w) as f64, (px / w) as f64);
                let Some((jac, c)) = positions(id, x, y) else { continue };
                if target.sample_bilinear(c[0], c[1], &mut v).is_none() {
                    continue;
                }
                let cx = |t: f64| t.clamp(0.0, (w - 1) as f64);
                let cy = |t: f64| t.clamp(0.0, (h - 1) as f64);
                target.sample_bilinear(cx(c[0] - 0.5), c[1], &mut vx0);
                target.sample_bilinear(cx(c[0] + 0.5), c[1], &mut vx1);
                target.sample_bilinear(c[0], cy(c[1] - 0.5), &mut vy0);
                target.sample_bilinear(c[0], cy(c[1] + 0.5), &mut vy1);
                let dx = cx(c[0] + 0.5) - cx(c[0] - 0.5);
                let dy = cy(c[1] + 0.5) - cy(c[1] - 0.5);
                let refpx = reference.pixel(px);
                for ch in 0..nc {
                    let r = refpx[ch] - v[ch];
                    let gx = if dx > 0.0 { (vx1[ch] - vx0[ch]) / dx } else { 0.0 };
                    let gy = if dy > 0.0 { (vy1[ch] - vy0[ch]) / dy } else { 0.0 };
                    for k in 0..np {
                        row[k] = -(gx * jac[k] + gy * jac[np + k]);
                    }
                    let wt = p.theta1 / r.abs().max(0.01);
                    add_row(jtj, jtr, &row, r, wt);
                }
            }
        }
    }
    if p.theta2 > 0.0 {
        for m in problem.matches_of(i) {
            let Some((jac, c)) = positions(m.direction.target(), m.x_ref[0], m.x_ref[1]) else { continue };
            let e = [c[0] - m.x_target[0], c[1] - m.x_target[1]];
            let norm = e[0].hypot(e[1]);
            if norm >= p.alpha1 {
                continue;
            }
            let wt = p.theta2 / norm.max(0.1);
            for axis in 0..2 {
                row.copy_from_slice(&jac[axis * np..(axis + 1) * np]);
                add_row(jtj, jtr, &row, e[axis], wt);
            }
        }
    }
}

#[inline]
fn add_row(jtj: &mut DMatrix<f64>, jtr: &mut DVector<f64>, row: &[f64], r: f64, wt: f64) {
    let n = row.len();
    for a in 0..n {
        jtr[a] += wt * row[a] * r;
        for b in 0..n {
            jtj[(a, b)] += wt * row[a] * row[b];
        }
    }
}

fn homographies(problem: &SceneFlowProblem<'_>, plane: &Plane, motion: &RigidMotion) -> [Option<Homography>; 6] {
    let mut out = [None; 6];
    for &id in problem.images() {
        out[id.index()] = image_homography(problem.rig, plane, motion, id).ok();
    }
    out
}

fn damped_solve(jtj: &DMatrix<f64>, jtr: &DVector<f64>, mu: f64) -> Option<DVector<f64>> {
    let mut a = jtj.clone();
    for k in 0..a.nrows() {
        a[(k, k)] += mu * (jtj[(k, k)] + 1e-12);
    }
    a.lu().solve(&(-jtr)).filter(|d| d.iter().all(|v| v.is_finite()))
}

/// Local energy of superpixel `i` with assignment `a` given its neighbors.
fn local_energy(problem: &SceneFlowProblem<'_>, state: &SceneFlowState, i: usize, a: &Assignment) -> f64 {
    if !plane_valid(problem, i, &a.plane) {
        return f64::INFINITY;
    }
    let Ok(u) = problem.unary(i, &a.plane, &state.motions[a.object]) else { return f64::INFINITY };
    let mut e = u.total();
    for &j in problem.seg.neighbors(i) {
        match problem.pair(i, a, j, &state.assignments[j]) {
            Ok(t) => e += t.total(),
            Err(_) => return f64::INFINITY,
        }
    }
    e
}

fn refine_plane(problem: &SceneFlowProblem<'_>, state: &mut SceneFlowState, i: usize, steps: usize) {
    let p = problem.params;
    let s = problem.rig.fx * problem.rig.baseline;
    let w = problem.seg.width();
    let mut current = state.assignments[i];
    let mut energy = local_energy(problem, state, i, &current);
    if !energy.is_finite() {
        return;
    }
    let mut mu = 1e-3;
    for _ in 0..steps {
        let motion = state.motions[current.object];
        let n = current.plane.n;
        let h = 1e-6 * n.norm().max(1e-6);
        let mut homs = vec![homographies(problem, &current.plane, &motion)];
        for k in 0..3 {
            for sign in [1.0, -1.0] {
                let mut m = n;
                m[k] += sign * h;
                homs.push(homographies(problem, &Plane::new(m), &motion));
            }
        }
        let mut jtj = DMatrix::zeros(3, 3);
        let mut jtr = DVector::zeros(3);
        accumulate_data(problem, i, &homs, &[h; 3], &mut jtj, &mut jtr);
        if p.theta4 > 0.0 {
            for &j in problem.seg.neighbors(i) {
                let nj = state.assignments[j].plane.n;
                for &px in problem.seg.boundary_pixels(i, j) {
                    let ray = problem.rig.ray((px % w) as f64, (px / w) as f64) * s;
                    let r = (n - nj).dot(&ray);
                    if r.abs() < p.alpha2 {
                        add_row(&mut jtj, &mut jtr, ray.as_slice(), r, p.theta4 / r.abs().max(0.1));
                    }
                }
            }
        }
        let mut improved = false;
        for _ in 0..5 {
            let Some(delta) = damped_solve(&jtj, &jtr, mu) else {
                mu *= 10.0;
                continue;
            };
            let cand = Assignment { plane: Plane::new(n + Vector3::new(delta[0], delta[1], delta[2])), object: current.object };
            let e = local_energy(problem, state, i, &cand);
            if e < energy {
                current = cand;
                energy = e;
                mu = (mu * 0.3).max(1e-9);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    state.assignments[i] = current;
}

fn object_energy(problem: &SceneFlowProblem<'_>, state: &SceneFlowState, members: &[usize], motion: &RigidMotion) -> f64 {
    let mut e = 0.0;
    for &i in members {
        match problem.unary(i, state.plane(i), motion) {
            Ok(u) => e += u.total(),
            Err(_) => return f64::INFINITY,
        }
    }
    e
}

fn refine_motion(problem: &SceneFlowProblem<'_>, state: &mut SceneFlowState, k: usize, steps: usize) {
    let members: Vec<usize> = (0..state.len()).filter(|&i| state.assignments[i].object == k).collect();
    if members.is_empty() {
        return;
    }
    let mut motion = state.motions[k];
    let mut energy = object_energy(problem, state, &members, &motion);
    if !energy.is_finite() {
        return;
    }
    const H: f64 = 1e-6;
    let mut mu = 1e-3;
    for _ in 0..steps {
        let mut variants = vec![motion];
        for a in 0..6 {
            for sign in [1.0, -1.0] {
                let mut d = [0.0; 6];
                d[a] = sign * H;
                variants.push(motion.perturbed(&d));
            }
        }
        let mut jtj = DMatrix::zeros(6, 6);
        let mut jtr = DVector::zeros(6);
        for &i in &members {
            let homs: Vec<_> = variants.iter().map(|m| homographies(problem, state.plane(i), m)).collect();
            accumulate_data(problem, i, &homs, &[H; 6], &mut jtj, &mut jtr);
        }
        let mut improved = false;
        for _ in 0..5 {
            let Some(delta) = damped_solve(&jtj, &jtr, mu) else {
                mu *= 10.0;
                continue;
            };
            let cand = motion.perturbed(delta.as_slice());
            if cand.validate().is_err() {
                mu *= 10.0;
                continue;
            }
            let e = object_energy(problem, state, &members, &cand);
            if e < energy {
                motion = cand;
                energy = e;
                mu = (mu * 0.3).max(1e-9);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    state.motions[k] = motion;
}

/// One scene-flow step on a prepared problem. `init_planes` (per superpixel)
/// are added to the plane proposals. The returned state never has a higher
/// energy than `state0`.
pub fn optimize_with(
    problem: &SceneFlowProblem<'_>,
    state0: &SceneFlowState,
    options: &SceneFlowOptions,
    init_planes: Option<&[Plane]>,
) -> Result<SceneFlowOutcome> {
    let energy_before = problem.total_energy(state0)?;
    let proposals = build_proposals(state0, problem.seg, problem.rig, init_planes, options.fronto_planes);
    let mut pe = ProposalEnergy::new(problem, state0.motions.clone(), proposals);
    let mut labels = vec![0; state0.len()];
    let sweeps = icm(&mut pe, &mut labels, options.icm_sweeps);
    let mut state = SceneFlowState::new(
        labels.iter().enumerate().map(|(i, &l)| pe.proposals[i][l]).collect(),
        state0.motions.clone(),
    );
    let labels_changed = labels.iter().filter(|&&l| l != 0).count();
    for i in 0..state.len() {
        refine_plane(problem, &mut state, i, options.plane_steps);
    }
    for k in 0..state.motions.len() {
        refine_motion(problem, &mut state, k, options.motion_steps);
    }
    let energy_after = problem.total_energy(&state).unwrap_or(f64::INFINITY);
    if energy_after <= energy_before {
        Ok(SceneFlowOutcome { state, energy_before, energy_after, icm_sweeps: sweeps, labels_changed })
    } else {
        log::warn!("scene-flow step raised the energy ({energy_before} -> {energy_after}); keeping the input state");
        Ok(SceneFlowOutcome { state: state0.clone(), energy_before, energy_after: energy_before, icm_sweeps: sweeps, labels_changed: 0 })
    }
}

/// Minimizes the scene-flow energy over planes, object labels and motions,
/// starting from `state0`.
pub fn optimize_scene_flow(
    state0: &SceneFlowState,
    latents: &SixPack,
    blurs: &SixPack,
    matches: &Correspondences,
    seg: &Superpixelization,
    rig: &CameraRig,
    params: &EnergyParams,
) -> Result<SceneFlowState> {
    let problem = SceneFlowProblem::new(seg, rig, params, latents, blurs, matches)?;
    optimize_with(&problem, state0, &SceneFlowOptions::default(), None).map(|o| o.state)
}
