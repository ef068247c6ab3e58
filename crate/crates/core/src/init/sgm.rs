//! Semi-global matching over census costs.

use crate::error::{Error, Result};
use crate::raster::{DisparityMap, Image};

/// Census window radius (5x5 window, 24 comparison bits).
const CENSUS_RADIUS: i64 = 2;
/// Smoothness penalties. The customary values 8 and 32 refer to a 64-level
/// cost scale; they are rescaled to the 0..24 Hamming range.
const P1: u32 = 3;
const P2: u32 = 12;
/// A minimum must beat every non-neighboring disparity by this fraction.
const UNIQUENESS: f64 = 0.05;
/// Maximum left-right disagreement in pixels.
const LR_TOLERANCE: f64 = 1.0;

fn census(img: &Image) -> Vec<u32> {
    let lum = img.luminance();
    let (w, h) = (lum.width() as i64, lum.height() as i64);
    let at = |x: i64, y: i64| lum.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize, 0);
    let mut out = vec![0u32; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let c = at(x, y);
            let mut bits = 0u32;
            for dy in -CENSUS_RADIUS..=CENSUS_RADIUS {
                for dx in -CENSUS_RADIUS..=CENSUS_RADIUS {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    bits = (bits << 1) | u32::from(at(x + dx, y + dy) < c);
                }
            }
            out[(y * w + x) as usize] = bits;
        }
    }
    out
}

/// Dense disparity of the left image by 8-path SGM with left-right and
/// uniqueness checks. Rejected pixels are marked invalid.
pub fn compute_disparity(left: &Image, right: &Image, max_disparity: usize) -> Result<DisparityMap> {
    left.check_same_shape(right, "stereo pair")?;
    let (w, h) = (left.width(), left.height());
    if max_disparity >= w {
        return Err(Error::Config(format!("max disparity {max_disparity} must be below the width {w}")));
    }
    let nd = max_disparity + 1;
    let cl = census(left);
    let cr = census(right);
    // Matching cost: Hamming distance. Disparities whose match leaves the
    // image get the mean in-view cost, so borders carry no preference that
    // the path aggregation would spread across the image.
    let mut cost = vec![0u32; w * h * nd];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let in_view = nd.min(x + 1);
            let mut sum = 0;
            for d in 0..in_view {
                let c = (cl[p] ^ cr[p - d]).count_ones();
                cost[p * nd + d] = c;
                sum += c;
            }
            let neutral = (sum + in_view as u32 / 2) / in_view as u32;
            for d in in_view..nd {
                cost[p * nd + d] = neutral;
            }
        }
    }

    let mut total = vec![0u32; w * h * nd];
    let dirs: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)];
    let mut path = vec![0u32; w * h * nd];
    for &(dx, dy) in &dirs {
        // Visit pixels so that the predecessor (x - dx, y - dy) is processed first.
        let ys: Vec<usize> = if dy >= 0 { (0..h).collect() } else { (0..h).rev().collect() };
        let xs: Vec<usize> = if dx >= 0 { (0..w).collect() } else { (0..w).rev().collect() };
        for &y in &ys {
            for &x in &xs {
                let p = y * w + x;
                let (px, py) = (x as i64 - dx, y as i64 - dy);
                let base = p * nd;
                if px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
                    path[base..base + nd].copy_from_slice(&cost[base..base + nd]);
                    continue;
                }
                let q = (py as usize * w + px as usize) * nd;
                let prev_min = *path[q..q + nd].iter().min().unwrap();
                for d in 0..nd {
                    let mut best = path[q + d];
                    if d > 0 {
                        best = best.min(path[q + d - 1] + P1);
                    }
                    if d + 1 < nd {
                        best = best.min(path[q + d + 1] + P1);
                    }
                    best = best.min(prev_min + P2);
                    path[base + d] = cost[base + d] + best - prev_min;
                }
            }
        }
        for (t, v) in total.iter_mut().zip(&path) {
            *t += v;
        }
    }

    let mut disp_l = vec![f64::NAN; w * h];
    let mut best_l = vec![0usize; w * h];
    for p in 0..w * h {
        let s = &total[p * nd..(p + 1) * nd];
        let (d, &c) = s.iter().enumerate().min_by_key(|(d, c)| (**c, *d)).unwrap();
        best_l[p] = d;
        let unique = s
            .iter()
            .enumerate()
            .filter(|(k, _)| k.abs_diff(d) > 1)
            .all(|(_, &o)| o as f64 > c as f64 * (1.0 + UNIQUENESS));
        if !unique {
            continue;
        }
        let mut sub = d as f64;
        if d > 0 && d + 1 < nd {
            let (a, b, e) = (s[d - 1] as f64, c as f64, s[d + 1] as f64);
            let denom = a - 2.0 * b + e;
            if denom > 0.0 {
                sub += ((a - e) / (2.0 * denom)).clamp(-0.5, 0.5);
            }
        }
        disp_l[p] = sub;
    }

    // Right-view disparities from the same volume: D_R(q) = argmin_d S(q + d, d).
    let mut disp_r = vec![usize::MAX; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut best = (u32::MAX, usize::MAX);
            for d in 0..nd {
                if x + d >= w {
                    break;
                }
                let c = total[(y * w + x + d) * nd + d];
                if c < best.0 {
                    best = (c, d);
                }
            }
            disp_r[y * w + x] = best.1;
        }
    }

    let mut values = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let d = disp_l[p];
            if !d.is_finite() {
                continue;
            }
            let xr = x as i64 - best_l[p] as i64;
            if xr < 0 {
                continue;
            }
            let dr = disp_r[y * w + xr as usize];
            if dr != usize::MAX && (dr as f64 - best_l[p] as f64).abs() <= LR_TOLERANCE && d < w as f64 {
                values[p] = d.max(0.0);
                valid[p] = true;
            }
        }
    }
    DisparityMap::from_parts(w, h, values, valid)
}
