//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Set `ACCEPTANCE=1,5,7` to run a
//! subset. Oracles here are written independently of the library code.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sfdeblur::blurkernel::{apply_blur, apply_blur_adjoint, build_kernel_field, BlurKernelField};
use sfdeblur::deblur::{primal_dual_deblur, DeblurProblem};
use sfdeblur::geometry::{disparity_from_plane, flow_from_homography, homography_from_plane_motion, image_homography, CameraRig, Plane, RigidMotion};
use sfdeblur::init::{fit_planes, Correspondences};
use sfdeblur::io::DatasetBundle;
use sfdeblur::pipeline::{
    disparity_outlier_rate, flow_outlier_rate, joint_estimate, joint_estimate_with, psnr, select_window, ssim, Evaluation,
    FrameMode, MetricsReport, PipelineConfig, PSNR_CAP,
};
use sfdeblur::raster::{DisparityMap, FlowField, Frame, Image, ImageId, SixPack, View};
use sfdeblur::sceneflow::{
    exhaustive_minimum, icm, kernel_field, labeling_energy, Assignment, EnergyParams, ProposalEnergy, SceneFlowProblem,
    Visibility,
};
use sfdeblur::segmentation::Superpixelization;
use sfdeblur::synth::{render_scene, synthesize_blur_kernel_model, BlurModel, RenderedScene, SceneSpec};

/// The two-object suite of criteria 5, 6 and 9.
const SUITE: [u64; 3] = [1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn noiseless(spec: SceneSpec) -> (RenderedScene, SixPack) {
    let spec = SceneSpec { noise: 0.0, ..spec };
    let r = render_scene(&spec).unwrap();
    let b = r.blurred().unwrap();
    (r, b)
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

// ---------------------------------------------------------------- criterion 1

/// Dense line-integral oracle: midpoint samples of both half-segments,
/// each splatted bilinearly, mass proportional to segment length.
fn dense_kernel(u_fwd: [f64; 2], u_bwd: [f64; 2], tau: f64, samples: usize) -> BTreeMap<(i32, i32), f64> {
    let h = tau / 2.0;
    let lens = [h * u_fwd[0].hypot(u_fwd[1]), h * u_bwd[0].hypot(u_bwd[1])];
    let total = lens[0] + lens[1];
    let mut out = BTreeMap::new();
    if total == 0.0 {
        out.insert((0, 0), 1.0);
        return out;
    }
    for (u, l) in [(u_fwd, lens[0]), (u_bwd, lens[1])] {
        if l == 0.0 {
            continue;
        }
        let mass = l / total / samples as f64;
        for k in 0..samples {
            let s = (k as f64 + 0.5) / samples as f64 * h;
            let (px, py) = (s * u[0], s * u[1]);
            let (x0, y0) = (px.floor(), py.floor());
            let (fx, fy) = (px - x0, py - y0);
            let (ix, iy) = (x0 as i32, y0 as i32);
            for (dx, dy, w) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
                *out.entry((ix + dx, iy + dy)).or_insert(0.0) += mass * w;
            }
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (w, h, tau) = (16, 16, 0.8);
    let (mut worst_adj, mut worst_sum, mut worst_l1) = (0.0f64, 0.0f64, 0.0f64);
    for instance in 0..100 {
        let rand_flow = |rng: &mut ChaCha8Rng| {
            let v = (0..w * h).map(|_| [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)]).collect();
            FlowField::from_parts(w, h, v, vec![true; w * h]).unwrap()
        };
        let (fwd, bwd) = (rand_flow(&mut rng), rand_flow(&mut rng));
        let field = build_kernel_field(&fwd, &bwd, tau).unwrap();
        let x = Image::from_fn(w, h, 3, |_, _, _| rng.random::<f64>());
        let y = Image::from_fn(w, h, 3, |_, _, _| rng.random::<f64>() - 0.5);
        let ax = apply_blur(&field, &x).unwrap();
        let aty = apply_blur_adjoint(&field, &y).unwrap();
        let lhs: f64 = ax.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
        worst_adj = worst_adj.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
        for yy in 0..h {
            for xx in 0..w {
                let taps = field.kernel(xx, yy);
                worst_sum = worst_sum.max((taps.iter().map(|t| t.w).sum::<f64>() - 1.0).abs());
            }
        }
        // The oracle is expensive; every tenth instance is checked densely.
        if instance % 10 == 0 {
            worst_l1 = worst_l1.max(field_vs_oracle(&field, &fwd, &bwd, tau));
        }
    }
    outcome(
        worst_adj <= 1e-8 && worst_sum <= 1e-6 && worst_l1 <= 1e-3,
        format!("max adjoint rel err {worst_adj:.2e} (<= 1e-8), max |sum-1| {worst_sum:.2e} (<= 1e-6), max L1 vs oracle {worst_l1:.2e} (<= 1e-3)"),
    )
}

fn field_vs_oracle(field: &BlurKernelField, fwd: &FlowField, bwd: &FlowField, tau: f64) -> f64 {
    let mut worst = 0.0f64;
    for y in 0..field.height() {
        for x in 0..field.width() {
            let oracle = dense_kernel(fwd.get(x, y), bwd.get(x, y), tau, 10_000);
            let mut got: BTreeMap<(i32, i32), f64> = BTreeMap::new();
            for t in field.kernel(x, y) {
                *got.entry((t.dx, t.dy)).or_insert(0.0) += t.w;
            }
            let keys: std::collections::BTreeSet<(i32, i32)> = oracle.keys().chain(got.keys()).copied().collect();
            let l1: f64 = keys.iter().map(|k| (oracle.get(k).unwrap_or(&0.0) - got.get(k).unwrap_or(&0.0)).abs()).sum();
            worst = worst.max(l1);
        }
    }
    worst
}

// ---------------------------------------------------------------- criterion 2

fn rotation(w: Vector3<f64>) -> Matrix3<f64> {
    // Rodrigues, written out.
    let theta = w.norm();
    if theta == 0.0 {
        return Matrix3::identity();
    }
    let k = w / theta;
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * theta.sin() + kx * kx * (1.0 - theta.cos())
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let rig = CameraRig { fx: 210.0, fy: 190.0, cx: 127.5, cy: 63.5, baseline: 0.5 };
    let k = Matrix3::new(rig.fx, 0.0, rig.cx, 0.0, rig.fy, rig.cy, 0.0, 0.0, 1.0);
    let k_inv = k.try_inverse().unwrap();
    let mut worst_flow = 0.0f64;
    for _ in 0..200 {
        let n = Vector3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), rng.random_range(0.08..0.3));
        let w = Vector3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
        let t = Vector3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.1..0.1), rng.random_range(-0.2..0.2));
        let plane = Plane::new(n);
        let motion = RigidMotion::from_axis_angle(w, t);
        let r = rotation(w);
        // Oracle transforms of the reference camera into each image.
        let b = Vector3::new(rig.baseline, 0.0, 0.0);
        let rt = r.transpose();
        let cases: [(ImageId, Matrix3<f64>, Vector3<f64>); 5] = [
            (ImageId::new(View::Left, Frame::Next), r, t),
            (ImageId::new(View::Left, Frame::Prev), rt, -(rt * t)),
            (ImageId::new(View::Right, Frame::Cur), Matrix3::identity(), b),
            (ImageId::new(View::Right, Frame::Next), r, t + b),
            (ImageId::new(View::Right, Frame::Prev), rt, -(rt * t) + b),
        ];
        for (id, rm, tv) in cases {
            let h_oracle = k * (rm - tv * n.transpose()) * k_inv;
            let h = image_homography(&rig, &plane, &motion, id).unwrap();
            for _ in 0..20 {
                let x = [rng.random_range(0.0..256.0), rng.random_range(0.0..128.0)];
                let p = h_oracle * Vector3::new(x[0], x[1], 1.0);
                let oracle = [p.x / p.z - x[0], p.y / p.z - x[1]];
                let got = flow_from_homography(&h, x).unwrap();
                worst_flow = worst_flow.max((got[0] - oracle[0]).abs().max((got[1] - oracle[1]).abs()));
            }
        }
        let h = homography_from_plane_motion(&rig, &motion, &plane).unwrap();
        let x = [rng.random_range(0.0..256.0), rng.random_range(0.0..128.0)];
        let p = (k * (r - t * n.transpose()) * k_inv) * Vector3::new(x[0], x[1], 1.0);
        let got = flow_from_homography(&h, x).unwrap();
        worst_flow = worst_flow.max((got[0] - (p.x / p.z - x[0])).abs().max((got[1] - (p.y / p.z - x[1])).abs()));
    }

    // Noiseless planar disparity over 16x16 tiles.
    let (w, h) = (96, 64);
    let labels: Vec<u32> = (0..w * h).map(|p| (((p / w) / 16) * (w / 16) + (p % w) / 16) as u32).collect();
    let seg = Superpixelization::from_labels(w, h, &labels).unwrap();
    let planes: Vec<Plane> = (0..seg.len())
        .map(|_| Plane::new(Vector3::new(rng.random_range(-0.004..0.004), rng.random_range(-0.004..0.004), rng.random_range(0.1..0.25))))
        .collect();
    let mut values = vec![0.0; w * h];
    for (p, v) in values.iter_mut().enumerate() {
        let x = [(p % w) as f64, (p / w) as f64];
        // Oracle disparity fx·b·nᵀK⁻¹x̃.
        let ray = k_inv * Vector3::new(x[0], x[1], 1.0);
        *v = rig.fx * rig.baseline * planes[seg.labels()[p] as usize].n.dot(&ray);
    }
    let disp = DisparityMap::from_parts(w, h, values.clone(), vec![true; w * h]).unwrap();
    let fitted = fit_planes(&disp, &seg, &rig).unwrap();
    let mut worst_disp = 0.0f64;
    for (p, v) in values.iter().enumerate() {
        let x = [(p % w) as f64, (p / w) as f64];
        let d = disparity_from_plane(&rig, &fitted[seg.labels()[p] as usize], x).unwrap();
        worst_disp = worst_disp.max((d - v).abs());
    }
    outcome(
        worst_flow <= 1e-10 && worst_disp <= 1e-6,
        format!("max flow err {worst_flow:.2e} (<= 1e-10), max disparity round-trip err {worst_disp:.2e} (<= 1e-6)"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let params = EnergyParams::default();
    let no_matches = Correspondences::default();
    let (mut held, mut total) = (0usize, 0usize);
    let mut worst_margin = f64::INFINITY;
    for seed in 0..20u64 {
        let (r, blurs) = noiseless(SceneSpec::compact(seed));
        let seg = r.patch_segmentation(16).unwrap();
        let gt = r.state_for(&seg);
        let problem = SceneFlowProblem::new(&seg, &r.spec.rig, &params, &r.sharp, &blurs, &no_matches).unwrap();
        let e_gt = problem.total_energy(&gt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let objects = gt.motions.len();
        for _ in 0..100 {
            let mut s = gt.clone();
            // Distinct superpixels, so that two flips cannot cancel.
            let changes = rng.random_range(1..=3);
            for i in rand::seq::index::sample(&mut rng, seg.len(), changes) {
                if rng.random_bool(0.5) {
                    let f = if rng.random_bool(0.5) { 0.9 } else { 1.1 };
                    s.assignments[i].plane = s.assignments[i].plane.scaled(f);
                } else {
                    s.assignments[i].object = (s.assignments[i].object + rng.random_range(1..objects)) % objects;
                }
            }
            // An invalid perturbed state (e.g. behind the camera) counts as worse.
            let e = problem.total_energy(&s).unwrap_or(f64::INFINITY);
            total += 1;
            if e_gt < e {
                held += 1;
            }
            worst_margin = worst_margin.min(e - e_gt);
        }
    }
    let rate = held as f64 / total as f64;
    outcome(rate >= 0.99, format!("GT lower in {held}/{total} comparisons ({:.2}%, >= 99%), smallest margin {worst_margin:.3e}", 100.0 * rate))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    let params = EnergyParams::default();
    let no_matches = Correspondences::default();
    let mut worst = 0.0f64;
    let mut nodes = 0;
    for seed in 0..10u64 {
        let (r, blurs) = noiseless(SceneSpec::compact(seed));
        let seg = r.patch_segmentation(16).unwrap();
        nodes = seg.len();
        let gt = r.state_for(&seg);
        let problem = SceneFlowProblem::new(&seg, &r.spec.rig, &params, &r.sharp, &blurs, &no_matches).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let proposals: Vec<Vec<Assignment>> = gt
            .assignments
            .iter()
            .map(|a| {
                let planes = [a.plane.scaled(rng.random_range(0.8..1.2)), a.plane];
                (0..4).map(|l| Assignment { plane: planes[l / 2], object: l % 2 }).collect()
            })
            .collect();
        let mut energy = ProposalEnergy::new(&problem, gt.motions.clone(), proposals);
        let (_, best) = exhaustive_minimum(&mut energy);
        let mut labels = vec![0; seg.len()];
        icm(&mut energy, &mut labels, 20);
        let e = labeling_energy(&mut energy, &labels);
        worst = worst.max((e - best) / best.abs());
    }
    outcome(worst <= 0.01, format!("{nodes} superpixels, 4 labels each, worst ICM excess over exhaustive {:.4}% (<= 1%)", 100.0 * worst))
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let params = EnergyParams { pd_iters: 50, ..EnergyParams::default() };
    let mut gains = Vec::new();
    let mut monotone = true;
    for seed in SUITE {
        let r = render_scene(&SceneSpec::two_object(seed)).unwrap();
        let blurs = r.blurred().unwrap();
        let problem = DeblurProblem::from_fields(&r.gt_kernel_fields().unwrap(), &r.gt_warps().unwrap(), &blurs).unwrap();
        let out = primal_dual_deblur(&blurs, &problem, None, &params).unwrap();
        monotone &= out.final_energy <= out.initial_energy;
        gains.push(mean_gain(&out.latents, &blurs, &r.sharp));
    }
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    outcome(
        mean >= 4.0 && monotone,
        format!("per-instance gains {} dB, mean {mean:.2} dB (>= 4), energy non-increasing on every instance: {monotone}", fmt_list(&gains)),
    )
}

fn mean_gain(latents: &SixPack, blurs: &SixPack, sharp: &SixPack) -> f64 {
    let gains: Vec<f64> =
        latents.iter().map(|(id, l)| psnr(l, sharp.get(id).unwrap()).unwrap() - psnr(blurs.get(id).unwrap(), sharp.get(id).unwrap()).unwrap()).collect();
    gains.iter().sum::<f64>() / gains.len() as f64
}

fn mean_psnr(latents: &SixPack, sharp: &SixPack) -> f64 {
    let v: Vec<f64> = latents.iter().map(|(id, l)| psnr(l, sharp.get(id).unwrap()).unwrap()).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/")
}

// ---------------------------------------------------------------- criterion 6

fn evaluate(out: &sfdeblur::pipeline::PipelineOutput, r: &RenderedScene, blurs: &SixPack) -> MetricsReport {
    let rig = r.spec.rig;
    let fl = out.flow(&rig, View::Left).unwrap();
    let fr = out.flow(&rig, View::Right).unwrap();
    let d0 = out.disparity(&rig, Frame::Cur).unwrap();
    let d1 = out.disparity(&rig, Frame::Next).unwrap();
    MetricsReport::compute(&Evaluation {
        flow_left: Some((&fl, r.gt_flow(View::Left))),
        flow_right: Some((&fr, r.gt_flow(View::Right))),
        disparity_m: Some((&d0, &r.disparity_cur)),
        disparity_m1: Some((&d1, &r.disparity_next)),
        images: Some((&out.latents, blurs, &r.sharp)),
    })
    .unwrap()
}

fn criterion_6() -> Outcome {
    let config = PipelineConfig::default();
    let (mut flow_worst, mut disp_worst) = (0.0f64, 0.0f64);
    let mut gains = Vec::new();
    let mut monotone = true;
    let (mut first, mut third) = (Vec::new(), Vec::new());
    for seed in SUITE {
        let r = render_scene(&SceneSpec::two_object(seed)).unwrap();
        let blurs = r.blurred().unwrap();
        let mut per_iter = Vec::new();
        let out = joint_estimate_with(&blurs, &r.spec.rig, &config, |_, _, latents| per_iter.push(mean_psnr(latents, &r.sharp))).unwrap();
        let m = evaluate(&out, &r, &blurs);
        flow_worst = flow_worst.max(m.flow_outliers_left.unwrap()).max(m.flow_outliers_right.unwrap());
        disp_worst = disp_worst.max(m.disparity_outliers_m.unwrap()).max(m.disparity_outliers_m1.unwrap());
        gains.push(m.mean_psnr_gain.unwrap());
        for pair in out.trace.windows(2) {
            monotone &= pair[1].combined <= pair[0].combined + 1e-6 * pair[0].combined.abs();
        }
        first.push(per_iter[0]);
        // Runs that stop early keep their last iterate.
        third.push(*per_iter.get(2).unwrap_or(per_iter.last().unwrap()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gain = mean(&gains);
    let (p1, p3) = (mean(&first), mean(&third));
    outcome(
        flow_worst <= 5.0 && disp_worst <= 5.0 && gain >= 3.0 && monotone && p3 >= p1 - 0.05,
        format!(
            "worst flow outliers {flow_worst:.2}% (<= 5), worst disparity outliers {disp_worst:.2}% (<= 5), gains {} dB mean {gain:.2} (>= 3), \
             combined energy monotone: {monotone}, suite PSNR iter1 {p1:.2} -> iter3 {p3:.2} dB (per instance {} -> {})",
            fmt_list(&gains),
            fmt_list(&first),
            fmt_list(&third)
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let mut checks = Vec::new();
    let params = EnergyParams { pd_iters: 10, ..EnergyParams::default() };
    let no_matches = Correspondences::default();
    for seed in [1u64, 2] {
        let r = render_scene(&SceneSpec::reflection_symmetric(seed)).unwrap();
        let rig = r.spec.rig;
        let tau = r.spec.tau;
        // Synthesis: true backward flows vs reflected forward flows.
        let reflected: [FlowField; 6] = std::array::from_fn(|k| r.flow_fwd[k].reflected());
        let a = synthesize_blur_kernel_model(&r.sharp, &r.flow_fwd, &r.flow_bwd, tau).unwrap();
        let b = synthesize_blur_kernel_model(&r.sharp, &r.flow_fwd, &reflected, tau).unwrap();
        checks.push(a == b);

        let seg = r.patch_segmentation(8).unwrap();
        let gt = r.state_for(&seg);
        for id in FrameMode::TwoFrame.required() {
            let two = kernel_field(&gt, &seg, &rig, id, tau, false).unwrap();
            let three = kernel_field(&gt, &seg, &rig, id, tau, true).unwrap();
            checks.push(two == three);
        }

        // Full operator and solver: the three-frame problem restricted to the
        // four shared images against the two-frame problem.
        let six = r.blurred().unwrap();
        let four = select_window(&six, FrameMode::TwoFrame).unwrap();
        let dp = |pack: &SixPack| -> DeblurProblem {
            let vis = Visibility::from_state(&gt, &seg, &rig, &pack.ids()).unwrap();
            SceneFlowProblem::new(&seg, &rig, &params, pack, pack, &no_matches)
                .unwrap()
                .with_visibility(&vis)
                .unwrap()
                .deblur_problem(&gt)
                .unwrap()
        };
        let two = dp(&four);
        let mut three = dp(&six);
        for id in ImageId::ALL.into_iter().filter(|id| id.frame == Frame::Prev) {
            three.observations[id.index()] = None;
        }
        three.coupling.rows.retain(|row| row.target.frame != Frame::Prev);
        checks.push(two == three);
        let l2 = primal_dual_deblur(&four, &two, None, &params).unwrap().latents;
        let l3 = primal_dual_deblur(&four, &three, None, &params).unwrap().latents;
        checks.push(l2 == l3);
    }
    let ok = checks.iter().filter(|&&c| c).count();
    outcome(ok == checks.len(), format!("{ok}/{} bit-exact comparisons (blur synthesis, kernel fields, deblur operators, latents)", checks.len()))
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    // Unit vectors of the AND rule: error must exceed 3 px and 5% of |gt|.
    let cases: [([f64; 2], [f64; 2], bool); 7] = [
        ([10.0, 0.0], [14.0, 0.0], true),    // 4 px > 3 and > 0.5
        ([100.0, 0.0], [104.0, 0.0], false), // 4 px < 5% of 100
        ([100.0, 0.0], [105.0, 0.0], false), // exactly 5%
        ([100.0, 0.0], [105.5, 0.0], true),
        ([1.0, 0.0], [4.0, 0.0], false), // exactly 3 px
        ([0.0, 0.0], [0.0, 3.5], true),
        ([0.0, 60.0], [0.0, 63.5], true), // 3.5 > 3 and > 3
    ];
    for (k, (gt, est, outlier)) in cases.iter().enumerate() {
        let g = FlowField::constant(3, 2, *gt);
        let e = FlowField::constant(3, 2, *est);
        let want = if *outlier { 100.0 } else { 0.0 };
        check(&format!("flow case {k}"), flow_outlier_rate(&e, &g).unwrap() == want);
        if gt[1] == 0.0 && est[1] == 0.0 {
            let gd = DisparityMap::constant(3, 2, gt[0]);
            let ed = DisparityMap::constant(3, 2, est[0]);
            check(&format!("disparity case {k}"), disparity_outlier_rate(&ed, &gd).unwrap() == want);
        }
    }
    // Mixed field: 1 outlier of 4 valid pixels; the invalid GT pixel is ignored.
    let gt = FlowField::from_parts(5, 1, vec![[10.0, 0.0]; 5], vec![true, true, true, true, false]).unwrap();
    let est = FlowField::from_parts(5, 1, vec![[10.0, 0.0], [20.0, 0.0], [12.0, 0.0], [10.0, 2.9], [99.0, 0.0]], vec![true; 5]).unwrap();
    check("mixed flow", flow_outlier_rate(&est, &gt).unwrap() == 25.0);

    // PSNR and SSIM against scalar oracles on random single-channel images.
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (w, h) = (rng.random_range(8..24), rng.random_range(8..24));
        let a = Image::from_fn(w, h, 1, |_, _, _| rng.random::<f64>());
        let b = Image::from_fn(w, h, 1, |x, y, _| (a.get(x, y, 0) + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0));
        worst = worst.max((psnr(&a, &b).unwrap() - psnr_oracle(a.data(), b.data())).abs());
        worst = worst.max((ssim(&a, &b).unwrap() - ssim_oracle(a.data(), b.data(), w, h)).abs());
    }
    check("psnr/ssim oracles", worst <= 1e-9);
    let z = Image::filled(4, 4, 1, 0.0);
    check("psnr 20 dB", (psnr(&z, &Image::filled(4, 4, 1, 0.1)).unwrap() - 20.0).abs() <= 1e-9);
    check("psnr cap", psnr(&z, &z).unwrap() == PSNR_CAP);
    check("ssim identity", (ssim(&z, &z).unwrap() - 1.0).abs() <= 1e-12);
    let detail = if failures.is_empty() {
        format!("AND-rule vectors exact, PSNR/SSIM max deviation from oracles {worst:.2e} (<= 1e-9)")
    } else {
        format!("failed: {}", failures.join(", "))
    };
    outcome(failures.is_empty(), detail)
}

fn psnr_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    -10.0 * mse.log10()
}

/// Mean SSIM over all 8x8 windows with two-pass moments.
fn ssim_oracle(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let (c1, c2) = (1e-4, 9e-4);
    let mut vals = Vec::new();
    for y0 in 0..=h - 8 {
        for x0 in 0..=w - 8 {
            let idx: Vec<usize> = (y0..y0 + 8).flat_map(|y| (x0..x0 + 8).map(move |x| y * w + x)).collect();
            let n = idx.len() as f64;
            let ma = idx.iter().map(|&i| a[i]).sum::<f64>() / n;
            let mb = idx.iter().map(|&i| b[i]).sum::<f64>() / n;
            let va = idx.iter().map(|&i| (a[i] - ma).powi(2)).sum::<f64>() / n;
            let vb = idx.iter().map(|&i| (b[i] - mb).powi(2)).sum::<f64>() / n;
            let cov = idx.iter().map(|&i| (a[i] - ma) * (b[i] - mb)).sum::<f64>() / n;
            vals.push((2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)));
        }
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9() -> Outcome {
    let config = PipelineConfig::default();
    let mut gains = Vec::new();
    for seed in SUITE {
        let spec = SceneSpec { blur_model: BlurModel::Average, ..SceneSpec::two_object(seed) };
        let r = render_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        DatasetBundle::from_rendered(&r, r.blurred().unwrap(), false).save(dir.path()).unwrap();
        let bundle = DatasetBundle::load(dir.path()).unwrap();
        let out = joint_estimate(&bundle.blurs, &bundle.rig, &config).unwrap();
        gains.push(mean_gain(&out.latents, &bundle.blurs, &bundle.sharp));
    }
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    outcome(mean >= 1.0, format!("average-model bundle gains {} dB, mean {mean:.2} dB (>= 1)", fmt_list(&gains)))
}

// --------------------------------------------------------------- criterion 10

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_10() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_sfdeblur");
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    let status = Command::new(exe).args(["synth", "--preset", "two-object", "--seed", "3", "--out"]).arg(&bundle).status().unwrap();
    if !status.success() {
        return outcome(false, "synth failed");
    }
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let status = Command::new(exe)
            .args(["run", "--seed", "7", "--set", "energy.outer_iters=2", "--bundle"])
            .arg(&bundle)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        if !status.success() {
            return outcome(false, format!("run {k} exited with {status}"));
        }
        outputs.push(files(&out));
    }
    let same = outputs[0] == outputs[1];
    let has_metrics = outputs[0].contains_key(Path::new("metrics.txt")) && outputs[0].contains_key(Path::new("metrics.json"));
    outcome(same && has_metrics, format!("{} files per run, byte-identical: {same}, metrics present: {has_metrics}", outputs[0].len()))
}

// ------------------------------------------------------------------- driver

type Criterion = (usize, &'static str, fn() -> Outcome, f64);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "operator correctness", criterion_1, 10.0),
        (2, "geometry exactness", criterion_2, 1.0),
        (3, "energy ground-truth optimality", criterion_3, 120.0),
        (4, "ICM vs exhaustive", criterion_4, 60.0),
        (5, "deblur efficacy", criterion_5, 120.0),
        (6, "joint pipeline", criterion_6, 600.0),
        (7, "mode equivalence", criterion_7, f64::INFINITY),
        (8, "metric conformance", criterion_8, f64::INFINITY),
        (9, "averaging blur model", criterion_9, f64::INFINITY),
        (10, "determinism", criterion_10, f64::INFINITY),
    ];
    let selected: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (n, name, run, limit) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && within(elapsed, limit), o.detail),
            Err(e) => (false, format!("panicked: {}", e.downcast_ref::<String>().cloned().unwrap_or_else(|| format!("{:?}", e.downcast_ref::<&str>())))),
        };
        let budget = if limit.is_finite() { format!(", limit {limit} s") } else { String::new() };
        println!("criterion {n:>2} {}: {name}: {detail} [{:.1} s{budget}]", if pass { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
        if !pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
