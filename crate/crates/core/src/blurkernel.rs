//! Pixel-wise bidirectional motion-blur kernels and the blur operator `A`.
//!
//! A pixel with forward flow `u₊` and backward flow `u₋` is exposed along the
//! two segments `[0, (τ/2)u₊]` and `[0, (τ/2)u₋]`. Light is spread uniformly in
//! time, so each half receives mass proportional to its length. The segment
//! density is splatted bilinearly onto integer offsets; the splat integral is
//! evaluated exactly (piecewise quadratic between grid crossings) instead of
//! by point sampling.

use crate::error::{Error, Result};
use crate::raster::{FlowField, Image};

/// One kernel entry: weight `w` read from offset `(dx, dy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub dx: i32,
    pub dy: i32,
    pub w: f64,
}

/// Sparse kernel of a single pixel. Taps are distinct and sorted by `(dy, dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelKernel {
    pub taps: Vec<Tap>,
}

impl PixelKernel {
    pub fn identity() -> Self {
        Self { taps: vec![Tap { dx: 0, dy: 0, w: 1.0 }] }
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().map(|t| t.w).sum()
    }

    /// Weight at an offset (zero when absent).
    pub fn weight(&self, dx: i32, dy: i32) -> f64 {
        self.taps.iter().find(|t| t.dx == dx && t.dy == dy).map_or(0.0, |t| t.w)
    }

    pub fn center_of_mass(&self) -> [f64; 2] {
        let s = self.sum();
        let (mx, my) = self.taps.iter().fold((0.0, 0.0), |(a, b), t| (a + t.w * t.dx as f64, b + t.w * t.dy as f64));
        [mx / s, my / s]
    }

    /// Square grayscale raster of the kernel centered at its origin tap,
    /// scaled so the largest weight is 1.
    pub fn visualize(&self, radius: usize) -> Image {
        let side = 2 * radius + 1;
        let peak = self.taps.iter().map(|t| t.w).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut img = Image::new(side, side, 1);
        for t in &self.taps {
            let x = t.dx + radius as i32;
            let y = t.dy + radius as i32;
            if (0..side as i32).contains(&x) && (0..side as i32).contains(&y) {
                img.set(x as usize, y as usize, 0, t.w / peak);
            }
        }
        img
    }
}

/// Accumulates `mass` spread uniformly along the segment from the origin to
/// `end`, splatted bilinearly onto integer offsets.
fn splat_segment(end: [f64; 2], mass: f64, acc: &mut Vec<Tap>) {
    let mut cuts = vec![0.0, 1.0];
    for e in &end {
        if e.abs() > 0.0 {
            let (lo, hi) = if *e > 0.0 { (0.0, *e) } else { (*e, 0.0) };
            let mut g = lo.ceil();
            while g <= hi.floor() {
                let s = g / e;
                if s > 0.0 && s < 1.0 {
                    cuts.push(s);
                }
                g += 1.0;
            }
        }
    }
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    for win in cuts.windows(2) {
        let (s0, s1) = (win[0], win[1]);
        let len = s1 - s0;
        if len <= 0.0 {
            continue;
        }
        let sm = 0.5 * (s0 + s1);
        let ix = (sm * end[0]).floor();
        let iy = (sm * end[1]).floor();
        // Weight of each of the four corners at parameter s.
        let corner = |s: f64| {
            let fx = s * end[0] - ix;
            let fy = s * end[1] - iy;
            [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy]
        };
        let (a, m, b) = (corner(s0), corner(sm), corner(s1));
        let offs = [(0, 0), (1, 0), (0, 1), (1, 1)];
        for c in 0..4 {
            let w = mass * len / 6.0 * (a[c] + 4.0 * m[c] + b[c]);
            if w > 0.0 {
                add_tap(acc, ix as i32 + offs[c].0, iy as i32 + offs[c].1, w);
            }
        }
    }
}

fn add_tap(acc: &mut Vec<Tap>, dx: i32, dy: i32, w: f64) {
    match acc.iter_mut().find(|t| t.dx == dx && t.dy == dy) {
        Some(t) => t.w += w,
        None => acc.push(Tap { dx, dy, w }),
    }
}

/// Bidirectional kernel of a pixel with forward flow `u_fwd`, backward flow
/// `u_bwd` and shutter duty cycle `tau`.
pub fn build_pixel_kernel(u_fwd: [f64; 2], u_bwd: [f64; 2], tau: f64) -> Result<PixelKernel> {
    if !u_fwd.iter().chain(u_bwd.iter()).all(|v| v.is_finite()) {
        return Err(Error::InvalidFlow(format!("non-finite flow {u_fwd:?} / {u_bwd:?}")));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("duty cycle must lie in (0, 1], got {tau}")));
    }
    let h = 0.5 * tau;
    let ends = [[h * u_fwd[0], h * u_fwd[1]], [h * u_bwd[0], h * u_bwd[1]]];
    let lens = ends.map(|e| e[0].hypot(e[1]));
    let total = lens[0] + lens[1];
    if total < 1e-12 {
        return Ok(PixelKernel::identity());
    }
    let mut taps = Vec::with_capacity(16);
    for (e, l) in ends.iter().zip(lens) {
        if l > 0.0 {
            splat_segment(*e, l / total, &mut taps);
        }
    }
    taps.sort_by_key(|t| (t.dy, t.dx));
    Ok(PixelKernel { taps })
}

/// Per-pixel kernels stored contiguously (row-major pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernelField {
    width: usize,
    height: usize,
    tau: f64,
    starts: Vec<usize>,
    taps: Vec<Tap>,
}

impl BlurKernelField {
    /// Field whose every kernel is the origin tap (`A = I`).
    pub fn identity(width: usize, height: usize, tau: f64) -> Self {
        Self {
            width,
            height,
            tau,
            starts: (0..=width * height).collect(),
            taps: vec![Tap { dx: 0, dy: 0, w: 1.0 }; width * height],
        }
    }

    /// Builds a field from per-pixel `(u_fwd, u_bwd)` pairs; `None` yields the identity kernel.
    pub fn from_flow_fn(
        width: usize,
        height: usize,
        tau: f64,
        mut flows: impl FnMut(usize, usize) -> Option<([f64; 2], [f64; 2])>,
    ) -> Result<Self> {
        let mut starts = Vec::with_capacity(width * height + 1);
        let mut taps = Vec::with_capacity(width * height * 4);
        starts.push(0);
        for y in 0..height {
            for x in 0..width {
                match flows(x, y) {
                    Some((f, b)) => taps.extend(build_pixel_kernel(f, b, tau)?.taps),
                    None => taps.push(Tap { dx: 0, dy: 0, w: 1.0 }),
                }
                starts.push(taps.len());
            }
        }
        Ok(Self { width, height, tau, starts, taps })
    }

    /// Builds a field from explicit per-pixel kernels.
    pub fn from_kernels(width: usize, height: usize, tau: f64, kernels: &[PixelKernel]) -> Result<Self> {
        if kernels.len() != width * height {
            return Err(Error::dims(format!("{} kernels for {}x{} field", kernels.len(), width, height)));
        }
        let mut starts = vec![0];
        let mut taps = Vec::new();
        for k in kernels {
            taps.extend_from_slice(&k.taps);
            starts.push(taps.len());
        }
        Ok(Self { width, height, tau, starts, taps })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    pub fn kernel_at(&self, index: usize) -> &[Tap] {
        &self.taps[self.starts[index]..self.starts[index + 1]]
    }

    #[inline]
    pub fn kernel(&self, x: usize, y: usize) -> &[Tap] {
        self.kernel_at(y * self.width + x)
    }

    pub fn pixel_kernel(&self, x: usize, y: usize) -> PixelKernel {
        PixelKernel { taps: self.kernel(x, y).to_vec() }
    }

    pub fn tap_count(&self) -> usize {
        self.taps.len()
    }

    pub fn is_identity(&self) -> bool {
        self.taps.len() == self.width * self.height && self.taps.iter().all(|t| t.dx == 0 && t.dy == 0)
    }

    /// Clamped source pixel index of tap `t` at pixel `(x, y)`.
    #[inline]
    pub fn source(&self, x: usize, y: usize, t: &Tap) -> usize {
        let sx = (x as i64 + t.dx as i64).clamp(0, self.width as i64 - 1) as usize;
        let sy = (y as i64 + t.dy as i64).clamp(0, self.height as i64 - 1) as usize;
        sy * self.width + sx
    }

    /// Blur value of one pixel of a single-channel plane.
    #[inline]
    pub fn apply_at(&self, x: usize, y: usize, src: &[f64]) -> f64 {
        self.kernel(x, y).iter().map(|t| t.w * src[self.source(x, y, t)]).sum()
    }

    /// `dst = A src` on a single-channel plane.
    pub fn apply_plane(&self, src: &[f64], dst: &mut [f64]) {
        for y in 0..self.height {
            for x in 0..self.width {
                dst[y * self.width + x] = self.apply_at(x, y, src);
            }
        }
    }

    /// `dst = Aᵀ src` on a single-channel plane.
    pub fn adjoint_plane(&self, src: &[f64], dst: &mut [f64]) {
        dst.iter_mut().for_each(|v| *v = 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = src[y * self.width + x];
                for t in self.kernel(x, y) {
                    dst[self.source(x, y, t)] += t.w * v;
                }
            }
        }
    }

    fn check(&self, img: &Image) -> Result<()> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::dims(format!(
                "kernel field {}x{} vs image {}x{}",
                self.width,
                self.height,
                img.width(),
                img.height()
            )));
        }
        Ok(())
    }
}

/// Kernel field from dense forward/backward flows. Pixels where either flow
/// is invalid keep the identity kernel.
pub fn build_kernel_field(flow_fwd: &FlowField, flow_bwd: &FlowField, tau: f64) -> Result<BlurKernelField> {
    if flow_fwd.width() != flow_bwd.width() || flow_fwd.height() != flow_bwd.height() {
        return Err(Error::dims("forward and backward flows differ in size"));
    }
    BlurKernelField::from_flow_fn(flow_fwd.width(), flow_fwd.height(), tau, |x, y| {
        (flow_fwd.is_valid(x, y) && flow_bwd.is_valid(x, y)).then(|| (flow_fwd.get(x, y), flow_bwd.get(x, y)))
    })
}

fn per_channel(img: &Image, mut op: impl FnMut(&[f64], &mut [f64])) -> Image {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let n = w * h;
    let mut out = Image::new(w, h, c);
    let mut src = vec![0.0; n];
    let mut dst = vec![0.0; n];
    for ch in 0..c {
        for i in 0..n {
            src[i] = img.data()[i * c + ch];
        }
        op(&src, &mut dst);
        for i in 0..n {
            out.data_mut()[i * c + ch] = dst[i];
        }
    }
    out
}

/// `B = A L` with replicate padding.
pub fn apply_blur(field: &BlurKernelField, latent: &Image) -> Result<Image> {
    field.check(latent)?;
    Ok(per_channel(latent, |s, d| field.apply_plane(s, d)))
}

/// `Aᵀ y`, the exact adjoint of [`apply_blur`] including the padding.
pub fn apply_blur_adjoint(field: &BlurKernelField, image: &Image) -> Result<Image> {
    field.check(image)?;
    Ok(per_channel(image, |s, d| field.adjoint_plane(s, d)))
}
