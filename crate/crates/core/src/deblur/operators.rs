//! Linear operators of the latent-image problem: the derivative-domain blur
//! observation `F` and the brightness coupling `C`.

use crate::blurkernel::{BlurKernelField, Tap};
use crate::error::{Error, Result};
use crate::geometry::WarpDirection;
use crate::raster::{bilinear_taps, Image, ImageId};

/// Blurred-pixel rows of one image and the derivative pairs compared against
/// the observation. Row `r` predicts pixel `pixel(r)` of the blurred image as
/// a weighted sum of latent pixels; pair `[a, b]` contributes the residual
/// `(row_b - row_a) - (B[pixel b] - B[pixel a])`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlurObservation {
    width: usize,
    height: usize,
    pixels: Vec<u32>,
    starts: Vec<u32>,
    sources: Vec<u32>,
    weights: Vec<f64>,
    pairs: Vec<[u32; 2]>,
}

impl BlurObservation {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, starts: vec![0], ..Default::default() }
    }

    /// Every pixel observed through `field`, with horizontal and vertical
    /// forward-difference pairs (pairs touching a masked pixel are dropped).
    pub fn from_field(field: &BlurKernelField, mask: Option<&[bool]>) -> Self {
        let (w, h) = (field.width(), field.height());
        let mut obs = Self::new(w, h);
        for p in 0..w * h {
            obs.push_row(p, field.kernel_at(p));
        }
        let ok = |p: usize| mask.is_none_or(|m| m[p]);
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if !ok(p) {
                    continue;
                }
                if x + 1 < w && ok(p + 1) {
                    obs.push_pair(p, p + 1);
                }
                if y + 1 < h && ok(p + w) {
                    obs.push_pair(p, p + w);
                }
            }
        }
        obs
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn row_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[[u32; 2]] {
        &self.pairs
    }

    pub fn pixel(&self, row: usize) -> usize {
        self.pixels[row] as usize
    }

    /// Appends a row for `pixel` with kernel `taps`; reads outside the image
    /// are replicated from the border. Returns the row index.
    pub fn push_row(&mut self, pixel: usize, taps: &[Tap]) -> usize {
        let (x, y) = ((pixel % self.width) as i64, (pixel / self.width) as i64);
        for t in taps {
            let sx = (x + t.dx as i64).clamp(0, self.width as i64 - 1);
            let sy = (y + t.dy as i64).clamp(0, self.height as i64 - 1);
            self.sources.push((sy * self.width as i64 + sx) as u32);
            self.weights.push(t.w);
        }
        self.pixels.push(pixel as u32);
        self.starts.push(self.sources.len() as u32);
        self.pixels.len() - 1
    }

    pub fn push_pair(&mut self, row_a: usize, row_b: usize) {
        self.pairs.push([row_a as u32, row_b as u32]);
    }

    /// Appends all rows and pairs of `other`.
    pub fn append(&mut self, other: &BlurObservation) {
        let base = self.pixels.len() as u32;
        let tap_base = self.sources.len() as u32;
        self.pixels.extend_from_slice(&other.pixels);
        self.starts.extend(other.starts[1..].iter().map(|s| s + tap_base));
        self.sources.extend_from_slice(&other.sources);
        self.weights.extend_from_slice(&other.weights);
        self.pairs.extend(other.pairs.iter().map(|[a, b]| [a + base, b + base]));
    }

    #[inline]
    fn row(&self, r: usize) -> std::ops::Range<usize> {
        self.starts[r] as usize..self.starts[r + 1] as usize
    }

    /// Blurred value of every row for one channel plane.
    pub fn apply_rows(&self, latent: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.pixels.len()).map(|r| {
            self.row(r).map(|k| self.weights[k] * latent[self.sources[k] as usize]).sum::<f64>()
        }));
    }

    /// `F L`: predicted derivative of every pair.
    pub fn forward(&self, latent: &[f64], rows: &mut Vec<f64>, out: &mut [f64]) {
        self.apply_rows(latent, rows);
        for (o, [a, b]) in out.iter_mut().zip(&self.pairs) {
            *o = rows[*b as usize] - rows[*a as usize];
        }
    }

    /// `Fᵀ r` accumulated into `out` (which is zeroed first).
    pub fn adjoint(&self, residual: &[f64], rows: &mut Vec<f64>, out: &mut [f64]) {
        rows.clear();
        rows.resize(self.pixels.len(), 0.0);
        for (v, [a, b]) in residual.iter().zip(&self.pairs) {
            rows[*b as usize] += v;
            rows[*a as usize] -= v;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, &v) in rows.iter().enumerate() {
            if v != 0.0 {
                for k in self.row(r) {
                    out[self.sources[k] as usize] += self.weights[k] * v;
                }
            }
        }
    }

    /// Observed derivatives `B[b] - B[a]` for one channel plane.
    pub fn targets(&self, blur: &[f64]) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|[a, b]| blur[self.pixels[*b as usize] as usize] - blur[self.pixels[*a as usize] as usize])
            .collect()
    }

    /// `Σ_pairs Σ_c r²` for interleaved images (unweighted).
    pub fn energy(&self, latent: &Image, blur: &Image) -> f64 {
        let c = latent.channels();
        let mut pred = vec![0.0; self.pixels.len() * c];
        for r in 0..self.pixels.len() {
            for k in self.row(r) {
                let px = latent.pixel(self.sources[k] as usize);
                for ch in 0..c {
                    pred[r * c + ch] += self.weights[k] * px[ch];
                }
            }
        }
        let mut e = 0.0;
        for [a, b] in &self.pairs {
            let (a, b) = (*a as usize, *b as usize);
            let ba = blur.pixel(self.pixels[a] as usize);
            let bb = blur.pixel(self.pixels[b] as usize);
            for ch in 0..c {
                let r = (pred[b * c + ch] - pred[a * c + ch]) - (bb[ch] - ba[ch]);
                e += r * r;
            }
        }
        e
    }
}

/// Target positions of the reference pixels under one warp direction
/// (`None` where the warp leaves the image or is undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct WarpMap {
    pub direction: WarpDirection,
    pub width: usize,
    pub height: usize,
    pub targets: Vec<Option<[f64; 2]>>,
}

/// One brightness-constancy residual `L_ref[reference] - Σ w L_target[taps]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingRow {
    pub reference: u32,
    pub target: ImageId,
    pub taps: [(u32, f64); 4],
}

impl CouplingRow {
    /// Bilinear coupling of reference pixel `reference` to point `at` of
    /// `target`; `None` when the point falls outside the image.
    pub fn new(reference: usize, target: ImageId, at: [f64; 2], width: usize, height: usize) -> Option<Self> {
        let t = bilinear_taps(at[0], at[1], width, height)?;
        Some(Self { reference: reference as u32, target, taps: t.map(|(i, w)| (i as u32, w)) })
    }

    /// `Σ_c |residual|` over interleaved images.
    #[inline]
    pub fn l1(&self, reference: &Image, target: &Image) -> f64 {
        let c = reference.channels();
        let r = reference.pixel(self.reference as usize);
        let mut s = 0.0;
        for ch in 0..c {
            let mut v = r[ch];
            for (i, w) in self.taps {
                v -= w * target.pixel(i as usize)[ch];
            }
            s += v.abs();
        }
        s
    }
}

/// The brightness-coupling operator `C`, sourced at the reference image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Coupling {
    pub rows: Vec<CouplingRow>,
}

impl Coupling {
    /// Rows for every usable reference pixel and in-image warp target.
    pub fn from_warps(warps: &[WarpMap], mask: Option<&[bool]>) -> Result<Self> {
        let mut rows = Vec::new();
        for wm in warps {
            if wm.targets.len() != wm.width * wm.height {
                return Err(Error::dims(format!("warp map {} has {} targets", wm.direction.name(), wm.targets.len())));
            }
            for (p, t) in wm.targets.iter().enumerate() {
                if mask.is_some_and(|m| !m[p]) {
                    continue;
                }
                if let Some(at) = t {
                    rows.extend(CouplingRow::new(p, wm.direction.target(), *at, wm.width, wm.height));
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `‖C L‖₁` over all channels.
    pub fn value(&self, images: &[Option<&Image>; 6]) -> Result<f64> {
        let reference = images[ImageId::REFERENCE.index()].ok_or_else(|| Error::Data("coupling needs the reference image".into()))?;
        let mut s = 0.0;
        for row in &self.rows {
            let target = images[row.target.index()]
                .ok_or_else(|| Error::Data(format!("coupling target {} is missing", row.target.name())))?;
            s += row.l1(reference, target);
        }
        Ok(s)
    }

    /// `C L` for one channel, given per-image planes.
    pub fn forward(&self, planes: &[Vec<f64>; 6], out: &mut [f64]) {
        let reference = &planes[ImageId::REFERENCE.index()];
        for (o, row) in out.iter_mut().zip(&self.rows) {
            let target = &planes[row.target.index()];
            *o = reference[row.reference as usize] - row.taps.iter().map(|(i, w)| w * target[*i as usize]).sum::<f64>();
        }
    }

    /// Accumulates `Cᵀ q` into per-image planes.
    pub fn adjoint_add(&self, q: &[f64], planes: &mut [Vec<f64>; 6]) {
        let r = ImageId::REFERENCE.index();
        for (v, row) in q.iter().zip(&self.rows) {
            planes[r][row.reference as usize] += v;
            let target = &mut planes[row.target.index()];
            for (i, w) in row.taps {
                target[i as usize] -= w * v;
            }
        }
    }

    /// Upper bound on `‖C‖²` from `‖C‖₁ ‖C‖∞` (each row has absolute sum 2).
    pub fn norm_sq_bound(&self, pixels: usize) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let mut cols = vec![0.0; pixels * 6];
        for row in &self.rows {
            cols[ImageId::REFERENCE.index() * pixels + row.reference as usize] += 1.0;
            for (i, w) in row.taps {
                cols[row.target.index() * pixels + i as usize] += w.abs();
            }
        }
        2.0 * cols.into_iter().fold(0.0, f64::max)
    }
}
