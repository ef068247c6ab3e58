//! Dense rasters: multi-channel images, flow fields, disparity maps and the
//! six-image stereo window the estimator works on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major, channel-interleaved image with real intensities (nominally in `[0, 1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels > 0, "an image needs at least one channel");
        Self { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || data.len() != width * height * channels {
            return Err(Error::dims(format!(
                "{}x{}x{} image needs {} samples, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Builds an image by evaluating `f(x, y, c)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.data[(y * width + x) * channels + c] = f(x, y, c);
                }
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn check_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dims(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Rec. 601 luma for three-channel images, the channel mean otherwise.
    pub fn luminance(&self) -> Image {
        let mut out = Image::new(self.width, self.height, 1);
        for i in 0..self.pixel_count() {
            let p = self.pixel(i);
            out.data[i] = if self.channels == 3 {
                0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
            } else {
                p.iter().sum::<f64>() / self.channels as f64
            };
        }
        out
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bilinear sample of all channels at `(x, y)`; `None` outside `[0, w-1] x [0, h-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) -> Option<()> {
        let taps = bilinear_taps(x, y, self.width, self.height)?;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (idx, w) in taps {
            let p = self.pixel(idx);
            for (o, v) in out.iter_mut().zip(p) {
                *o += w * v;
            }
        }
        Some(())
    }
}

/// Pixel indices and weights of a bilinear sample; `None` when `(x, y)` lies
/// outside the pixel-center rectangle. Weights sum to one.
#[inline]
pub fn bilinear_taps(x: f64, y: f64, width: usize, height: usize) -> Option<[(usize, f64); 4]> {
    if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64) {
        return None;
    }
    let x0 = (x.floor() as usize).min(width - 1);
    let y0 = (y.floor() as usize).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    Some([
        (y0 * width + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * width + x1, fx * (1.0 - fy)),
        (y1 * width + x0, (1.0 - fx) * fy),
        (y1 * width + x1, fx * fy),
    ])
}

/// Dense 2-vector field in pixels with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<[f64; 2]>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![[0.0; 2]; width * height], valid: vec![true; width * height] }
    }

    pub fn constant(width: usize, height: usize, u: [f64; 2]) -> Self {
        Self { width, height, data: vec![u; width * height], valid: vec![true; width * height] }
    }

    pub fn from_parts(width: usize, height: usize, data: Vec<[f64; 2]>, valid: Vec<bool>) -> Result<Self> {
        if data.len() != width * height || valid.len() != width * height {
            return Err(Error::dims(format!("flow field {width}x{height} with {} vectors", data.len())));
        }
        Ok(Self { width, height, data, valid })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, u: [f64; 2]) {
        self.data[y * self.width + x] = u;
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn set_valid(&mut self, x: usize, y: usize, valid: bool) {
        self.valid[y * self.width + x] = valid;
    }

    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn vectors_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.data
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    /// Negated field (the two-frame reflection of a forward flow).
    pub fn reflected(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|u| [-u[0], -u[1]]).collect(),
            valid: self.valid.clone(),
        }
    }
}

/// Dense scalar disparity (pixels) with a validity mask. Invalid pixels must
/// never contribute to an energy; read through [`DisparityMap::value`].
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DisparityMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height], valid: vec![false; width * height] }
    }

    pub fn constant(width: usize, height: usize, d: f64) -> Self {
        Self { width, height, values: vec![d; width * height], valid: vec![true; width * height] }
    }

    pub fn from_parts(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::dims(format!("disparity map {width}x{height} with {} values", values.len())));
        }
        Ok(Self { width, height, values, valid })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Disparity at a pixel, `None` when masked invalid.
    #[inline]
    pub fn value(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.values[i])
    }

    pub fn set(&mut self, x: usize, y: usize, d: Option<f64>) {
        let i = y * self.width + x;
        match d {
            Some(d) => {
                self.values[i] = d;
                self.valid[i] = true;
            }
            None => {
                self.values[i] = 0.0;
                self.valid[i] = false;
            }
        }
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Copy with every invalid pixel replaced by the nearest valid value
    /// (row scan, then column scan). Returns `None` when nothing is valid.
    pub fn imputed(&self) -> Option<Vec<f64>> {
        if self.valid_count() == 0 {
            return None;
        }
        let (w, h) = (self.width, self.height);
        let mut out: Vec<Option<f64>> = (0..w * h).map(|i| self.valid[i].then(|| self.values[i])).collect();
        for y in 0..h {
            fill_line(&mut out, (0..w).map(|x| y * w + x).collect());
        }
        for x in 0..w {
            fill_line(&mut out, (0..h).map(|y| y * w + x).collect());
        }
        out.into_iter().collect()
    }
}

fn fill_line(values: &mut [Option<f64>], idx: Vec<usize>) {
    let known: Vec<usize> = (0..idx.len()).filter(|&k| values[idx[k]].is_some()).collect();
    if known.is_empty() {
        return;
    }
    let mut next = 0;
    for k in 0..idx.len() {
        if values[idx[k]].is_some() {
            continue;
        }
        while next + 1 < known.len() && known[next + 1] < k {
            next += 1;
        }
        let left = known[next];
        let best = if next + 1 < known.len() && (known[next + 1] as isize - k as isize).abs() < (k as isize - left as isize).abs() {
            known[next + 1]
        } else {
            left
        };
        values[idx[k]] = values[idx[best]];
    }
}

/// Camera of a stereo rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Left,
    Right,
}

/// Frame of the three-frame processing window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Prev,
    Cur,
    Next,
}

impl Frame {
    /// Signed frame offset relative to the reference frame.
    pub fn offset(self) -> i32 {
        match self {
            Frame::Prev => -1,
            Frame::Cur => 0,
            Frame::Next => 1,
        }
    }
}

/// One of the six images of a window. Index order is
/// left prev, left cur, left next, right prev, right cur, right next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImageId {
    pub view: View,
    pub frame: Frame,
}

impl ImageId {
    pub const REFERENCE: ImageId = ImageId { view: View::Left, frame: Frame::Cur };

    pub const ALL: [ImageId; 6] = [
        ImageId { view: View::Left, frame: Frame::Prev },
        ImageId { view: View::Left, frame: Frame::Cur },
        ImageId { view: View::Left, frame: Frame::Next },
        ImageId { view: View::Right, frame: Frame::Prev },
        ImageId { view: View::Right, frame: Frame::Cur },
        ImageId { view: View::Right, frame: Frame::Next },
    ];

    pub const fn new(view: View, frame: Frame) -> Self {
        Self { view, frame }
    }

    pub fn index(self) -> usize {
        let v = match self.view {
            View::Left => 0,
            View::Right => 3,
        };
        v + (self.frame.offset() + 1) as usize
    }

    pub fn name(self) -> &'static str {
        match (self.view, self.frame) {
            (View::Left, Frame::Prev) => "left_prev",
            (View::Left, Frame::Cur) => "left_cur",
            (View::Left, Frame::Next) => "left_next",
            (View::Right, Frame::Prev) => "right_prev",
            (View::Right, Frame::Cur) => "right_cur",
            (View::Right, Frame::Next) => "right_next",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.name() == name)
    }
}

/// The images of one processing window, `{left, right} x {m-1, m, m+1}`.
/// Two-frame windows leave the `Prev` slots empty. Optional per-image masks
/// mark pixels that must not be used as observations (`None` = all usable).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SixPack {
    images: [Option<Image>; 6],
    masks: [Option<Vec<bool>>; 6],
}

impl SixPack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, id: ImageId, image: Image) -> Self {
        self.images[id.index()] = Some(image);
        self
    }

    pub fn insert(&mut self, id: ImageId, image: Image) {
        self.images[id.index()] = Some(image);
    }

    pub fn remove(&mut self, id: ImageId) -> Option<Image> {
        self.masks[id.index()] = None;
        self.images[id.index()].take()
    }

    pub fn get(&self, id: ImageId) -> Option<&Image> {
        self.images[id.index()].as_ref()
    }

    pub fn get_mut(&mut self, id: ImageId) -> Option<&mut Image> {
        self.images[id.index()].as_mut()
    }

    pub fn contains(&self, id: ImageId) -> bool {
        self.images[id.index()].is_some()
    }

    pub fn set_mask(&mut self, id: ImageId, mask: Option<Vec<bool>>) {
        self.masks[id.index()] = mask;
    }

    pub fn mask(&self, id: ImageId) -> Option<&[bool]> {
        self.masks[id.index()].as_deref()
    }

    /// Whether pixel `index` of image `id` may be used as an observation.
    #[inline]
    pub fn usable(&self, id: ImageId, index: usize) -> bool {
        self.masks[id.index()].as_ref().is_none_or(|m| m[index])
    }

    /// Present images in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (ImageId, &Image)> {
        ImageId::ALL.into_iter().filter_map(|id| self.get(id).map(|img| (id, img)))
    }

    pub fn ids(&self) -> Vec<ImageId> {
        self.iter().map(|(id, _)| id).collect()
    }

    pub fn len(&self) -> usize {
        self.images.iter().filter(|i| i.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn reference(&self) -> Result<&Image> {
        self.get(ImageId::REFERENCE)
            .ok_or_else(|| Error::Data("window has no reference (left, current) image".into()))
    }

    /// True when every present image and mask shares the reference dimensions.
    pub fn validate(&self) -> Result<()> {
        let r = self.reference()?;
        for (id, img) in self.iter() {
            r.check_same_shape(img, id.name())?;
            if let Some(m) = self.mask(id) {
                if m.len() != img.pixel_count() {
                    return Err(Error::dims(format!("mask of {} has {} entries", id.name(), m.len())));
                }
            }
        }
        Ok(())
    }

    /// Applies `f` to every present image, keeping masks.
    pub fn map(&self, mut f: impl FnMut(ImageId, &Image) -> Image) -> SixPack {
        let mut out = SixPack::new();
        for (id, img) in self.iter() {
            out.insert(id, f(id, img));
            out.set_mask(id, self.masks[id.index()].clone());
        }
        out
    }
}
