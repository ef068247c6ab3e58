//! Latent-image step: total-variation regularized, derivative-domain
//! non-blind deconvolution with brightness coupling across the window,
//! solved by a first-order primal-dual scheme.
//!
//! The objective for fixed kernels and warps is
//! `Σ_m TV(L_m) + θ₁ ‖C L‖₁ + θ₃ Σ_m ‖F_m L_m - g_m‖²`, where `F_m` maps a
//! latent image to the derivatives of its blurred version and `g_m` holds the
//! observed derivatives. All terms separate over color channels.

mod operators;

pub use operators::{BlurObservation, Coupling, CouplingRow, WarpMap};

use serde::Serialize;

use crate::blurkernel::BlurKernelField;
use crate::error::{Error, Result};
use crate::raster::{Image, ImageId, SixPack};
use crate::sceneflow::EnergyParams;

/// Anisotropic total variation with forward differences (replicate border),
/// summed over channels.
pub fn tv_value(image: &Image) -> f64 {
    let (w, h, c) = (image.width(), image.height(), image.channels());
    let d = image.data();
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) * c;
            for ch in 0..c {
                if x + 1 < w {
                    s += (d[i + c + ch] - d[i + ch]).abs();
                }
                if y + 1 < h {
                    s += (d[i + w * c + ch] - d[i + ch]).abs();
                }
            }
        }
    }
    s
}

fn tv_plane(v: &[f64], w: usize, h: usize) -> f64 {
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                s += (v[i + 1] - v[i]).abs();
            }
            if y + 1 < h {
                s += (v[i + w] - v[i]).abs();
            }
        }
    }
    s
}

/// Fixed operators of one latent-image step: per-image blur observations and
/// the brightness coupling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeblurProblem {
    pub observations: [Option<BlurObservation>; 6],
    pub coupling: Coupling,
}

impl DeblurProblem {
    /// Dense per-image kernel fields and reference-sourced warp maps. Images
    /// without a field carry no blur fidelity.
    pub fn from_fields(fields: &[(ImageId, BlurKernelField)], warps: &[WarpMap], blurs: &SixPack) -> Result<Self> {
        let mut observations: [Option<BlurObservation>; 6] = Default::default();
        for (id, field) in fields {
            let img = blurs.get(*id).ok_or_else(|| Error::Data(format!("no blurred image for {}", id.name())))?;
            if field.width() != img.width() || field.height() != img.height() {
                return Err(Error::dims(format!("kernel field of {} differs from its image", id.name())));
            }
            observations[id.index()] = Some(BlurObservation::from_field(field, blurs.mask(*id)));
        }
        let coupling = Coupling::from_warps(warps, blurs.mask(ImageId::REFERENCE))?;
        Ok(Self { observations, coupling })
    }
}

/// Per-term values of the latent-image objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PdEnergy {
    pub tv: f64,
    pub coupling: f64,
    pub fidelity: f64,
}

impl PdEnergy {
    pub fn total(&self) -> f64 {
        self.tv + self.coupling + self.fidelity
    }
}

fn images_of(pack: &SixPack) -> [Option<&Image>; 6] {
    std::array::from_fn(|k| pack.get(ImageId::ALL[k]))
}

/// Objective value at `latents` (already weighted by θ₁ and θ₃).
pub fn pd_energy_terms(latents: &SixPack, blurs: &SixPack, problem: &DeblurProblem, params: &EnergyParams) -> Result<PdEnergy> {
    let mut e = PdEnergy::default();
    for (id, img) in latents.iter() {
        e.tv += tv_value(img);
        if let Some(obs) = &problem.observations[id.index()] {
            let b = blurs.get(id).ok_or_else(|| Error::Data(format!("no blurred image for {}", id.name())))?;
            e.fidelity += params.theta3 * obs.energy(img, b);
        }
    }
    if params.theta1 > 0.0 {
        e.coupling = params.theta1 * problem.coupling.value(&images_of(latents))?;
    }
    Ok(e)
}

pub fn pd_energy(latents: &SixPack, blurs: &SixPack, problem: &DeblurProblem, params: &EnergyParams) -> Result<f64> {
    pd_energy_terms(latents, blurs, problem, params).map(|e| e.total())
}

/// Conjugate-residual solve of the symmetric positive definite system
/// `apply(x) = b`, warm-started at `x`. Returns the residual norm after each
/// iteration (non-increasing by construction of the method).
pub fn conjugate_residual(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    max_iters: usize,
    rel_tol: f64,
) -> Vec<f64> {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(p, q)| p * q).sum::<f64>();
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let bnorm = dot(b, b).sqrt().max(1e-300);
    let mut norms = vec![dot(&r, &r).sqrt()];
    if norms[0] <= rel_tol * bnorm {
        return norms;
    }
    let mut ar = vec![0.0; n];
    apply(&r, &mut ar);
    let mut p = r.clone();
    let mut ap = ar.clone();
    let mut rar = dot(&r, &ar);
    for _ in 0..max_iters {
        let apap = dot(&ap, &ap);
        if apap <= 0.0 || rar <= 0.0 {
            break;
        }
        let alpha = rar / apap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rn = dot(&r, &r).sqrt();
        norms.push(rn);
        if rn <= rel_tol * bnorm {
            break;
        }
        apply(&r, &mut ar);
        let rar_new = dot(&r, &ar);
        let beta = rar_new / rar;
        rar = rar_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
            ap[k] = ar[k] + beta * ap[k];
        }
    }
    norms
}

/// One line of the solver trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdRecord {
    pub iteration: usize,
    pub channel: usize,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct DeblurOutput {
    pub latents: SixPack,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub trace: Vec<PdRecord>,
    /// Duals paired with the returned latents, for warm-starting a later call.
    pub duals: DualState,
}

/// Dual variables of the TV and coupling terms. `px`/`py` are per-image
/// channel-interleaved rasters; `q[target]` holds the coupling dual of the row
/// from each reference pixel into `target`, so it survives changes of the
/// coupling rows between calls.
#[derive(Debug, Clone, Default)]
pub struct DualState {
    pub px: [Vec<f64>; 6],
    pub py: [Vec<f64>; 6],
    pub q: [Vec<f64>; 6],
}

impl DualState {
    fn plane(store: &[Vec<f64>; 6], m: usize, ch: usize, nc: usize, n: usize) -> Vec<f64> {
        let v = &store[m];
        if v.len() == n * nc {
            v.iter().skip(ch).step_by(nc).copied().collect()
        } else {
            vec![0.0; n]
        }
    }

    fn store(store: &mut [Vec<f64>; 6], m: usize, ch: usize, nc: usize, plane: &[f64]) {
        if store[m].len() != plane.len() * nc {
            store[m] = vec![0.0; plane.len() * nc];
        }
        for (k, v) in plane.iter().enumerate() {
            store[m][k * nc + ch] = *v;
        }
    }
}

/// Primal and dual step sizes: explicit values or `0.99 / ‖K‖` with
/// `‖K‖² ≤ 8 + θ₁² ‖C‖²`.
pub fn step_sizes(problem: &DeblurProblem, pixels: usize, params: &EnergyParams) -> (f64, f64) {
    let bound = 8.0 + params.theta1 * params.theta1 * problem.coupling.norm_sq_bound(pixels);
    let auto = 0.99 / bound.sqrt();
    (params.gamma.unwrap_or(auto), params.eta.unwrap_or(auto))
}

struct ChannelSolver<'a> {
    problem: &'a DeblurProblem,
    params: &'a EnergyParams,
    present: Vec<usize>,
    w: usize,
    h: usize,
    targets: [Vec<f64>; 6],
}

impl ChannelSolver<'_> {
    fn energy(&self, planes: &[Vec<f64>; 6], rows: &mut Vec<f64>) -> f64 {
        let mut e = 0.0;
        for &m in &self.present {
            e += tv_plane(&planes[m], self.w, self.h);
            if let Some(obs) = &self.problem.observations[m] {
                if self.params.theta3 > 0.0 {
                    let mut f = vec![0.0; obs.pair_count()];
                    obs.forward(&planes[m], rows, &mut f);
                    e += self.params.theta3 * f.iter().zip(&self.targets[m]).map(|(a, g)| (a - g) * (a - g)).sum::<f64>();
                }
            }
        }
        if self.params.theta1 > 0.0 && !self.problem.coupling.is_empty() {
            let mut c = vec![0.0; self.problem.coupling.len()];
            self.problem.coupling.forward(planes, &mut c);
            e += self.params.theta1 * c.iter().map(|v| v.abs()).sum::<f64>();
        }
        e
    }
}

/// Runs `pd_iters` primal-dual iterations starting from `init` (or the blurred
/// images). Every iterate is clamped to `[0, 1]` and scored; the best scored
/// iterate of each channel is returned, so the objective never exceeds its
/// value at the starting point.
pub fn primal_dual_deblur(
    blurs: &SixPack,
    problem: &DeblurProblem,
    init: Option<&SixPack>,
    params: &EnergyParams,
) -> Result<DeblurOutput> {
    primal_dual_deblur_warm(blurs, problem, init, None, params)
}

/// [`primal_dual_deblur`] with the duals warm-started from an earlier call.
pub fn primal_dual_deblur_warm(
    blurs: &SixPack,
    problem: &DeblurProblem,
    init: Option<&SixPack>,
    duals: Option<&DualState>,
    params: &EnergyParams,
) -> Result<DeblurOutput> {
    params.validate()?;
    blurs.validate()?;
    let r = blurs.reference()?;
    let (w, h, nc) = (r.width(), r.height(), r.channels());
    let n = w * h;
    let present: Vec<usize> = blurs.ids().iter().map(|id| id.index()).collect();
    for (k, obs) in problem.observations.iter().enumerate() {
        if obs.is_some() && !present.contains(&k) {
            return Err(Error::Data(format!("observation for missing image {}", ImageId::ALL[k].name())));
        }
    }
    if params.theta1 > 0.0 && problem.coupling.rows.iter().any(|row| !present.contains(&row.target.index())) {
        return Err(Error::Data("coupling references a missing image".into()));
    }
    let start = init.unwrap_or(blurs);
    for (id, _) in blurs.iter() {
        let img = start.get(id).ok_or_else(|| Error::Data(format!("initial latents lack {}", id.name())))?;
        r.check_same_shape(img, id.name())?;
    }
    let (gamma, eta) = step_sizes(problem, n, params);
    let (t1, t3) = (params.theta1, params.theta3);
    let mut latents = SixPack::new();
    for (id, _) in blurs.iter() {
        latents.insert(id, start.get(id).unwrap().clone());
        latents.set_mask(id, blurs.mask(id).map(|m| m.to_vec()));
    }
    let mut trace = Vec::new();
    let mut initial_energy = 0.0;
    let mut final_energy = 0.0;
    let mut rows = Vec::new();
    let empty = DualState::default();
    let seed = duals.unwrap_or(&empty);
    let mut out_duals = DualState::default();

    for ch in 0..nc {
        let plane_of = |img: &Image| -> Vec<f64> { img.data().iter().skip(ch).step_by(nc).copied().collect() };
        let mut targets: [Vec<f64>; 6] = Default::default();
        let mut lat: [Vec<f64>; 6] = Default::default();
        for &m in &present {
            let id = ImageId::ALL[m];
            if let Some(obs) = &problem.observations[m] {
                targets[m] = obs.targets(&plane_of(blurs.get(id).unwrap()));
            }
            lat[m] = plane_of(latents.get(id).unwrap());
        }
        let solver = ChannelSolver { problem, params, present: present.clone(), w, h, targets };
        let mut best = lat.clone();
        let mut best_e = solver.energy(&lat, &mut rows);
        initial_energy += best_e;
        trace.push(PdRecord { iteration: 0, channel: ch, energy: best_e });

        let mut bar = lat.clone();
        let mut px: [Vec<f64>; 6] = Default::default();
        let mut py: [Vec<f64>; 6] = Default::default();
        let mut qfull: [Vec<f64>; 6] = Default::default();
        for &m in &present {
            px[m] = DualState::plane(&seed.px, m, ch, nc, n);
            py[m] = DualState::plane(&seed.py, m, ch, nc, n);
            qfull[m] = DualState::plane(&seed.q, m, ch, nc, n);
        }
        let mut cbuf = vec![0.0; problem.coupling.len()];
        let mut q: Vec<f64> =
            problem.coupling.rows.iter().map(|row| qfull[row.target.index()][row.reference as usize]).collect();
        let mut best_duals = (px.clone(), py.clone(), q.clone());
        for it in 1..=params.pd_iters {
            // Dual ascent with projection onto the unit box.
            for &m in &present {
                let v = &bar[m];
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        if x + 1 < w {
                            px[m][i] = (px[m][i] + gamma * (v[i + 1] - v[i])).clamp(-1.0, 1.0);
                        }
                        if y + 1 < h {
                            py[m][i] = (py[m][i] + gamma * (v[i + w] - v[i])).clamp(-1.0, 1.0);
                        }
                    }
                }
            }
            if t1 > 0.0 && !q.is_empty() {
                problem.coupling.forward(&bar, &mut cbuf);
                for (qv, c) in q.iter_mut().zip(&cbuf) {
                    *qv = (*qv + gamma * t1 * c).clamp(-1.0, 1.0);
                }
            }
            debug_assert!(q.iter().all(|v| v.abs() <= 1.0));
            // Kᵀ(p, q) per image.
            let mut kt: [Vec<f64>; 6] = Default::default();
            for &m in &present {
                let mut o = vec![0.0; n];
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        if x + 1 < w {
                            o[i] -= px[m][i];
                            o[i + 1] += px[m][i];
                        }
                        if y + 1 < h {
                            o[i] -= py[m][i];
                            o[i + w] += py[m][i];
                        }
                    }
                }
                kt[m] = o;
            }
            if t1 > 0.0 && !q.is_empty() {
                let scaled: Vec<f64> = q.iter().map(|v| t1 * v).collect();
                problem.coupling.adjoint_add(&scaled, &mut kt);
            }
            // Primal proximal step: (2θ₃FᵀF + I/η) L = 2θ₃Fᵀg + v/η.
            let mut next: [Vec<f64>; 6] = Default::default();
            for &m in &present {
                let v: Vec<f64> = lat[m].iter().zip(&kt[m]).map(|(l, k)| l - eta * k).collect();
                let x = match &problem.observations[m] {
                    Some(obs) if t3 > 0.0 && obs.pair_count() > 0 => {
                        let mut ftg = vec![0.0; n];
                        obs.adjoint(&solver.targets[m], &mut rows, &mut ftg);
                        let b: Vec<f64> = ftg.iter().zip(&v).map(|(f, v)| 2.0 * t3 * f + v / eta).collect();
                        let mut x = lat[m].clone();
                        let mut fbuf = vec![0.0; obs.pair_count()];
                        let mut rbuf = Vec::new();
                        let mut tmp = vec![0.0; n];
                        conjugate_residual(
                            |z, out| {
                                obs.forward(z, &mut rbuf, &mut fbuf);
                                obs.adjoint(&fbuf, &mut rbuf, &mut tmp);
                                for k in 0..n {
                                    out[k] = 2.0 * t3 * tmp[k] + z[k] / eta;
                                }
                            },
                            &b,
                            &mut x,
                            params.cg_iters,
                            1e-6,
                        );
                        x
                    }
                    _ => v,
                };
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { iteration: it, what: format!("latent {} channel {ch}", ImageId::ALL[m].name()) });
                }
                next[m] = x;
            }
            for &m in &present {
                for k in 0..n {
                    bar[m][k] = 2.0 * next[m][k] - lat[m][k];
                }
            }
            lat = next;
            let mut clamped = lat.clone();
            for &m in &present {
                clamped[m].iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            }
            let e = solver.energy(&clamped, &mut rows);
            if !e.is_finite() {
                return Err(Error::Divergence { iteration: it, what: format!("objective channel {ch}") });
            }
            trace.push(PdRecord { iteration: it, channel: ch, energy: e });
            if e < best_e {
                best_e = e;
                best = clamped;
                best_duals = (px.clone(), py.clone(), q.clone());
            }
        }
        final_energy += best_e;
        let (bpx, bpy, bq) = best_duals;
        for (row, v) in problem.coupling.rows.iter().zip(&bq) {
            qfull[row.target.index()][row.reference as usize] = *v;
        }
        for &m in &present {
            DualState::store(&mut out_duals.px, m, ch, nc, &bpx[m]);
            DualState::store(&mut out_duals.py, m, ch, nc, &bpy[m]);
            DualState::store(&mut out_duals.q, m, ch, nc, &qfull[m]);
        }
        for &m in &present {
            let img = latents.get_mut(ImageId::ALL[m]).unwrap();
            for (k, v) in best[m].iter().enumerate() {
                img.data_mut()[k * nc + ch] = *v;
            }
        }
    }
    Ok(DeblurOutput { latents, initial_energy, final_energy, trace, duals: out_duals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blurkernel::{apply_blur, build_pixel_kernel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn psnr(a: &Image, b: &Image) -> f64 {
        let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data().len() as f64;
        10.0 * (1.0 / mse).log10()
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_value(&Image::filled(5, 4, 3, 0.3)), 0.0);
        let step = Image::from_fn(10, 6, 2, |x, _, _| if x < 4 { 0.2 } else { 0.7 });
        assert!((tv_value(&step) - 0.5 * 6.0 * 2.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = Image::from_fn(8, 8, 1, |_, _, _| rng.random());
        let mut oracle = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                let v = img.get(x, y, 0);
                let right = img.get((x + 1).min(7), y, 0);
                let down = img.get(x, (y + 1).min(7), 0);
                oracle += (right - v).abs() + (down - v).abs();
            }
        }
        assert!((tv_value(&img) - oracle).abs() < 1e-12);
    }

    #[test]
    fn conjugate_residual_norms_decrease() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 30;
        let m: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        // A = MᵀM + 0.1 I.
        let apply = |x: &[f64], out: &mut [f64]| {
            let mx: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i * n + j] * x[j]).sum()).collect();
            for j in 0..n {
                out[j] = (0..n).map(|i| m[i * n + j] * mx[i]).sum::<f64>() + 0.1 * x[j];
            }
        };
        let b: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let mut x = vec![0.0; n];
        let norms = conjugate_residual(apply, &b, &mut x, 200, 1e-10);
        assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(*norms.last().unwrap() <= 1e-8);
    }

    fn single_image_problem(field: &BlurKernelField, blurred: &Image) -> (SixPack, DeblurProblem) {
        let pack = SixPack::new().with(ImageId::REFERENCE, blurred.clone());
        let problem = DeblurProblem::from_fields(&[(ImageId::REFERENCE, field.clone())], &[], &pack).unwrap();
        (pack, problem)
    }

    #[test]
    fn box_blurred_step_edge_is_sharpened() {
        let sharp = Image::from_fn(64, 64, 1, |x, _, _| if x < 32 { 0.2 } else { 0.8 });
        let k = build_pixel_kernel([6.0, 0.0], [-6.0, 0.0], 1.0).unwrap();
        let field = BlurKernelField::from_kernels(64, 64, 1.0, &vec![k; 64 * 64]).unwrap();
        let blurred = apply_blur(&field, &sharp).unwrap();
        let (pack, problem) = single_image_problem(&field, &blurred);
        let params = EnergyParams { theta1: 0.0, theta3: 100.0, pd_iters: 50, ..EnergyParams::default() };
        let out = primal_dual_deblur(&pack, &problem, None, &params).unwrap();
        let latent = out.latents.get(ImageId::REFERENCE).unwrap();
        let gain = psnr(latent, &sharp) - psnr(&blurred, &sharp);
        assert!(gain >= 3.0, "gain {gain}");
        assert!(out.final_energy <= out.initial_energy);
        assert!(latent.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn stronger_fidelity_keeps_more_variation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Image::from_fn(24, 24, 1, |_, _, _| rng.random_range(0.2..0.8));
        let field = BlurKernelField::identity(24, 24, 0.8);
        let (pack, problem) = single_image_problem(&field, &img);
        let tvs: Vec<f64> = [100.0, 10.0, 1.0]
            .iter()
            .map(|&t3| {
                let params = EnergyParams { theta1: 0.0, theta3: t3, ..EnergyParams::default() };
                tv_value(primal_dual_deblur(&pack, &problem, None, &params).unwrap().latents.get(ImageId::REFERENCE).unwrap())
            })
            .collect();
        assert!(tvs[0] > tvs[1] && tvs[1] > tvs[2], "{tvs:?}");
    }

    #[test]
    fn missing_coupling_target_is_a_data_error() {
        let img = Image::filled(4, 4, 1, 0.5);
        let pack = SixPack::new().with(ImageId::REFERENCE, img);
        let warp = WarpMap {
            direction: crate::geometry::WarpDirection::Stereo,
            width: 4,
            height: 4,
            targets: vec![Some([1.0, 1.0]); 16],
        };
        let problem = DeblurProblem::from_fields(&[], &[warp], &pack).unwrap();
        assert!(matches!(primal_dual_deblur(&pack, &problem, None, &EnergyParams::default()), Err(Error::Data(_))));
    }
}
