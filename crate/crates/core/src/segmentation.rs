//! Disparity-aware SLIC superpixels, their adjacency graph and the shared
//! boundary pixel sets used by the smoothness terms.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::raster::{DisparityMap, Image};

/// Color intensities are rescaled to a Lab-like 0..100 range before distances.
const COLOR_SCALE: f64 = 100.0;
/// One pixel of disparity weighs as much as this many scaled color units.
const DISPARITY_SCALE: f64 = 10.0;
const SLIC_ITERATIONS: usize = 10;

/// A partition of the image into 4-connected regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Superpixelization {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    regions: Vec<Vec<usize>>,
    adjacency: Vec<Vec<usize>>,
    boundaries: BTreeMap<(usize, usize), Vec<usize>>,
}

impl Superpixelization {
    /// Builds the structure from any label raster. Disconnected parts of a
    /// label become separate superpixels; ids are renumbered in row-major
    /// order of first appearance.
    pub fn from_labels(width: usize, height: usize, labels: &[u32]) -> Result<Self> {
        if labels.len() != width * height || labels.is_empty() {
            return Err(Error::dims(format!("{} labels for {}x{} raster", labels.len(), width, height)));
        }
        let comp = connected_components(width, height, labels);
        Ok(Self::from_components(width, height, comp))
    }

    fn from_components(width: usize, height: usize, labels: Vec<u32>) -> Self {
        let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut regions = vec![Vec::new(); count];
        for (p, &l) in labels.iter().enumerate() {
            regions[l as usize].push(p);
        }
        let mut sets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for y in 0..height {
            for x in 0..width {
                let p = y * width + x;
                let a = labels[p] as usize;
                let mut push = |q: usize| {
                    let b = labels[q] as usize;
                    if a != b {
                        let v = sets.entry((a.min(b), a.max(b))).or_default();
                        if v.last() != Some(&p) {
                            v.push(p);
                        }
                    }
                };
                if x > 0 {
                    push(p - 1);
                }
                if x + 1 < width {
                    push(p + 1);
                }
                if y > 0 {
                    push(p - width);
                }
                if y + 1 < height {
                    push(p + width);
                }
            }
        }
        // Each pixel was pushed in row-major order, so lists are already sorted.
        let mut adjacency = vec![Vec::new(); count];
        for &(i, j) in sets.keys() {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        Self { width, height, labels, regions, adjacency, boundaries: sets }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x] as usize
    }

    #[inline]
    pub fn label_at(&self, index: usize) -> usize {
        self.labels[index] as usize
    }

    /// Pixel indices (row-major) of superpixel `i`.
    pub fn region(&self, i: usize) -> &[usize] {
        &self.regions[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Adjacent pairs `(i, j)` with `i < j` in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundaries.keys().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.boundaries.len()
    }

    /// Pixels shared by the boundary of `i` and `j`, row-major. Empty when
    /// the pair is not adjacent or `i == j`.
    pub fn boundary_pixels(&self, i: usize, j: usize) -> &[usize] {
        if i == j {
            return &[];
        }
        self.boundaries.get(&(i.min(j), i.max(j))).map_or(&[], |v| v.as_slice())
    }

    /// Bounding box `(x0, y0, x1, y1)` inclusive.
    pub fn bbox(&self, i: usize) -> (usize, usize, usize, usize) {
        let mut b = (usize::MAX, usize::MAX, 0, 0);
        for &p in &self.regions[i] {
            let (x, y) = (p % self.width, p / self.width);
            b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
        }
        b
    }

    pub fn centroid(&self, i: usize) -> [f64; 2] {
        let r = &self.regions[i];
        let (sx, sy) = r.iter().fold((0.0, 0.0), |(a, b), &p| (a + (p % self.width) as f64, b + (p / self.width) as f64));
        [sx / r.len() as f64, sy / r.len() as f64]
    }

    /// 16-bit grayscale raster of the labels (for debugging output).
    pub fn label_image(&self) -> Image {
        Image::from_fn(self.width, self.height, 1, |x, y, _| self.label(x, y) as f64 / 65535.0)
    }
}

/// Splits every label into 4-connected components; ids in order of first appearance.
fn connected_components(width: usize, height: usize, labels: &[u32]) -> Vec<u32> {
    let mut out = vec![u32::MAX; labels.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if out[start] != u32::MAX {
            continue;
        }
        out[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if out[q] == u32::MAX && labels[q] == labels[start] {
                    out[q] = next;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        next += 1;
    }
    out
}

/// SLIC clustering in `(x, y, color, disparity)` followed by connectivity
/// enforcement: components smaller than a quarter of the nominal superpixel
/// area are absorbed by an adjacent component.
pub fn segment(
    image: &Image,
    disparity: &DisparityMap,
    target_count: usize,
    compactness: f64,
    disparity_weight: f64,
) -> Result<Superpixelization> {
    let (w, h, nc) = (image.width(), image.height(), image.channels());
    if disparity.width() != w || disparity.height() != h {
        return Err(Error::dims("image and disparity differ in size"));
    }
    if target_count == 0 {
        return Err(Error::Config("superpixel target count must be positive".into()));
    }
    let n = w * h;
    if n == 0 {
        return Err(Error::dims("empty image"));
    }
    let k = target_count.min(n);
    let disp = disparity.imputed().unwrap_or_else(|| vec![0.0; n]);
    let dw = disparity_weight * DISPARITY_SCALE;

    let nx = ((k as f64 * w as f64 / h as f64).sqrt().round() as usize).clamp(1, k.min(w));
    let ny = ((k as f64 / nx as f64).round() as usize).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let step = (sx * sy).sqrt();

    // Cluster feature: x, y, scaled color..., weighted disparity.
    let dim = 3 + nc;
    let feature = |p: usize, out: &mut [f64]| {
        out[0] = (p % w) as f64;
        out[1] = (p / w) as f64;
        for c in 0..nc {
            out[2 + c] = image.data()[p * nc + c] * COLOR_SCALE;
        }
        out[2 + nc] = disp[p] * dw;
    };
    let mut centers = Vec::with_capacity(nx * ny * dim);
    let mut f = vec![0.0; dim];
    for j in 0..ny {
        for i in 0..nx {
            let cx = (((i as f64 + 0.5) * sx) as usize).min(w - 1);
            let cy = (((j as f64 + 0.5) * sy) as usize).min(h - 1);
            feature(cy * w + cx, &mut f);
            centers.extend_from_slice(&f);
        }
    }
    let kc = nx * ny;
    let spatial = (compactness / step).powi(2);
    let mut labels = vec![0u32; n];
    let mut best = vec![f64::INFINITY; n];
    let radius = (2.0 * step).ceil() as i64;
    for _ in 0..SLIC_ITERATIONS {
        best.iter_mut().for_each(|v| *v = f64::INFINITY);
        for c in 0..kc {
            let ctr = &centers[c * dim..(c + 1) * dim];
            let (cx, cy) = (ctr[0].round() as i64, ctr[1].round() as i64);
            let x0 = (cx - radius).max(0) as usize;
            let x1 = (cx + radius).min(w as i64 - 1) as usize;
            let y0 = (cy - radius).max(0) as usize;
            let y1 = (cy + radius).min(h as i64 - 1) as usize;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    feature(p, &mut f);
                    let ds = (f[0] - ctr[0]).powi(2) + (f[1] - ctr[1]).powi(2);
                    let dc: f64 = (2..dim).map(|d| (f[d] - ctr[d]).powi(2)).sum();
                    let dist = dc + ds * spatial;
                    if dist < best[p] {
                        best[p] = dist;
                        labels[p] = c as u32;
                    }
                }
            }
        }
        let mut sums = vec![0.0; kc * dim];
        let mut counts = vec![0usize; kc];
        for p in 0..n {
            let c = labels[p] as usize;
            feature(p, &mut f);
            for d in 0..dim {
                sums[c * dim + d] += f[d];
            }
            counts[c] += 1;
        }
        for c in 0..kc {
            if counts[c] > 0 {
                for d in 0..dim {
                    centers[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                }
            }
        }
    }

    let min_size = ((step * step) / 4.0).max(1.0) as usize;
    let merged = absorb_small_components(w, h, &labels, min_size);
    Superpixelization::from_labels(w, h, &merged)
}

/// Relabels 4-connected components, then merges components below `min_size`
/// into the previously visited adjacent component (row-major scan).
fn absorb_small_components(w: usize, h: usize, labels: &[u32], min_size: usize) -> Vec<u32> {
    let comp = connected_components(w, h, labels);
    let count = comp.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut size = vec![0usize; count];
    for &c in &comp {
        size[c as usize] += 1;
    }
    if count <= 1 {
        return comp;
    }
    // Union-find of absorbed components.
    let mut parent: Vec<usize> = (0..count).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    let mut first_pixel = vec![usize::MAX; count];
    for (p, &c) in comp.iter().enumerate() {
        if first_pixel[c as usize] == usize::MAX {
            first_pixel[c as usize] = p;
        }
    }
    for c in 0..count {
        if size[c] >= min_size {
            continue;
        }
        // Adjacent component touching the component's first pixel from the left or above,
        // otherwise any adjacent component found by scanning the region.
        let p = first_pixel[c];
        let mut target = None;
        if p % w > 0 {
            target = Some(comp[p - 1] as usize);
        } else if p >= w {
            target = Some(comp[p - w] as usize);
        }
        if target.is_none() {
            'scan: for (q, &cq) in comp.iter().enumerate() {
                if cq as usize != c {
                    continue;
                }
                let (x, y) = (q % w, q / w);
                for r in [
                    (x + 1 < w).then(|| q + 1),
                    (y + 1 < h).then(|| q + w),
                    (x > 0).then(|| q - 1),
                    (y > 0).then(|| q - w),
                ]
                .into_iter()
                .flatten()
                {
                    if comp[r] as usize != c {
                        target = Some(comp[r] as usize);
                        break 'scan;
                    }
                }
            }
        }
        if let Some(t) = target {
            let (rc, rt) = (find(&mut parent, c), find(&mut parent, t));
            if rc != rt {
                parent[rc] = rt;
                let s = size[rc];
                size[rt] += s;
            }
        }
    }
    comp.iter().map(|&c| find(&mut parent, c as usize) as u32).collect()
}
