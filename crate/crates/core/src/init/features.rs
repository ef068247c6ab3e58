//! Harris corners matched by normalized cross-correlation of 8x8 patches with
//! a mutual-nearest-neighbor filter and parabolic subpixel refinement.

use serde::{Deserialize, Serialize};

use crate::geometry::WarpDirection;
use crate::raster::Image;

/// Patch of side `2 * PATCH_HALF` (offsets `-PATCH_HALF..PATCH_HALF`).
const PATCH_HALF: i64 = 4;
const HARRIS_K: f64 = 0.04;
const NMS_RADIUS: i64 = 2;

/// One sparse correspondence from the reference image to a target image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub x_ref: [f64; 2],
    pub x_target: [f64; 2],
    pub direction: WarpDirection,
    pub score: f64,
}

/// Matches from the reference image to any of the other five images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Correspondences {
    pub matches: Vec<Match>,
}

impl Correspondences {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn extend(&mut self, other: Correspondences) {
        self.matches.extend(other.matches);
    }

    pub fn in_direction(&self, direction: WarpDirection) -> impl Iterator<Item = &Match> {
        self.matches.iter().filter(move |m| m.direction == direction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub max_corners: usize,
    /// Largest accepted displacement per axis, in pixels.
    pub search_radius: f64,
    /// Minimum NCC score of an accepted match.
    pub min_score: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { max_corners: 1500, search_radius: 32.0, min_score: 0.8 }
    }
}

/// Harris corner positions (integer pixels) sorted by decreasing response.
pub fn harris_corners(img: &Image, max_corners: usize) -> Vec<(usize, usize)> {
    let lum = img.luminance();
    let (w, h) = (lum.width(), lum.height());
    let margin = (PATCH_HALF + 2) as usize;
    if w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }
    let at = |x: usize, y: usize| lum.get(x, y, 0);
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            let gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            let p = y * w + x;
            ixx[p] = gx * gx;
            iyy[p] = gy * gy;
            ixy[p] = gx * gy;
        }
    }
    let mut resp = vec![f64::NEG_INFINITY; w * h];
    for y in margin..h - margin {
        for x in margin..w - margin {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for dy in -2i64..=2 {
                for dx in -2i64..=2 {
                    let q = (y as i64 + dy) as usize * w + (x as i64 + dx) as usize;
                    a += ixx[q];
                    b += iyy[q];
                    c += ixy[q];
                }
            }
            resp[y * w + x] = a * b - c * c - HARRIS_K * (a + b) * (a + b);
        }
    }
    let peak = resp.iter().copied().fold(0.0, f64::max);
    let threshold = (peak * 1e-3).max(1e-10);
    let mut corners = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            let r = resp[y * w + x];
            if r <= threshold {
                continue;
            }
            let mut is_max = true;
            'nms: for dy in -NMS_RADIUS..=NMS_RADIUS {
                for dx in -NMS_RADIUS..=NMS_RADIUS {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let q = (y as i64 + dy) as usize * w + (x as i64 + dx) as usize;
                    // Ties are broken toward the earlier pixel in row-major order.
                    if resp[q] > r || (resp[q] == r && q < y * w + x) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                corners.push((r, x, y));
            }
        }
    }
    corners.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
    corners.truncate(max_corners);
    corners.into_iter().map(|(_, x, y)| (x, y)).collect()
}

/// Zero-mean, unit-norm patch around `(x, y)`; `None` near the border or for flat patches.
fn descriptor(lum: &Image, x: i64, y: i64) -> Option<Vec<f64>> {
    let (w, h) = (lum.width() as i64, lum.height() as i64);
    if x - PATCH_HALF < 0 || y - PATCH_HALF < 0 || x + PATCH_HALF > w || y + PATCH_HALF > h {
        return None;
    }
    let mut v = Vec::with_capacity((4 * PATCH_HALF * PATCH_HALF) as usize);
    for dy in -PATCH_HALF..PATCH_HALF {
        for dx in -PATCH_HALF..PATCH_HALF {
            v.push(lum.get((x + dx) as usize, (y + dy) as usize, 0));
        }
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|a| *a -= mean);
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm < 1e-9 {
        return None;
    }
    v.iter_mut().for_each(|a| *a /= norm);
    Some(v)
}

fn ncc(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Corner matches from `reference` to `target`, labeled with `direction`.
pub fn match_features(
    reference: &Image,
    target: &Image,
    direction: WarpDirection,
    params: &FeatureParams,
) -> Correspondences {
    let mut out = Correspondences::default();
    if !reference.same_shape(target) {
        return out;
    }
    let lr = reference.luminance();
    let lt = target.luminance();
    let describe = |lum: &Image, pts: Vec<(usize, usize)>| -> Vec<((i64, i64), Vec<f64>)> {
        pts.into_iter()
            .filter_map(|(x, y)| descriptor(lum, x as i64, y as i64).map(|d| ((x as i64, y as i64), d)))
            .collect()
    };
    let cr = describe(&lr, harris_corners(reference, params.max_corners));
    let ct = describe(&lt, harris_corners(target, params.max_corners));
    if cr.is_empty() || ct.is_empty() {
        return out;
    }
    let r = params.search_radius;
    let within = |a: (i64, i64), b: (i64, i64)| ((b.0 - a.0) as f64).abs() <= r && ((b.1 - a.1) as f64).abs() <= r;
    let best_of = |from: &[((i64, i64), Vec<f64>)], to: &[((i64, i64), Vec<f64>)], k: usize| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (j, (p, d)) in to.iter().enumerate() {
            if !within(from[k].0, *p) {
                continue;
            }
            let s = ncc(&from[k].1, d);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        best
    };
    for i in 0..cr.len() {
        let Some((j, s)) = best_of(&cr, &ct, i) else { continue };
        if s < params.min_score {
            continue;
        }
        if best_of(&ct, &cr, j).map(|(back, _)| back) != Some(i) {
            continue;
        }
        let (px, py) = cr[i].0;
        let Some((x_target, score)) = refine(&lt, &cr[i].1, ct[j].0) else { continue };
        if score < params.min_score {
            continue;
        }
        out.matches.push(Match { x_ref: [px as f64, py as f64], x_target, direction, score });
    }
    out
}

/// Dense NCC search in a 5x5 neighborhood, then a parabola fit per axis.
fn refine(target: &Image, desc: &[f64], start: (i64, i64)) -> Option<([f64; 2], f64)> {
    let score_at = |x: i64, y: i64| descriptor(target, x, y).map(|d| ncc(desc, &d));
    let mut best: Option<((i64, i64), f64)> = None;
    for dy in -2..=2 {
        for dx in -2..=2 {
            let (x, y) = (start.0 + dx, start.1 + dy);
            if let Some(s) = score_at(x, y) {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some(((x, y), s));
                }
            }
        }
    }
    let ((x, y), s) = best?;
    if s >= 1.0 - 1e-12 {
        // Exact patch match: the sample grid already hits the peak.
        return Some(([x as f64, y as f64], s));
    }
    let offset = |m: Option<f64>, p: Option<f64>| match (m, p) {
        (Some(a), Some(c)) => {
            let denom = a - 2.0 * s + c;
            if denom < 0.0 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    let ox = offset(score_at(x - 1, y), score_at(x + 1, y));
    let oy = offset(score_at(x, y - 1), score_at(x, y + 1));
    Some(([x as f64 + ox, y as f64 + oy], s))
}
