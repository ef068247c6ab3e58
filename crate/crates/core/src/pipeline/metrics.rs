//! Evaluation metrics: KITTI-style outlier rates, PSNR and SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DisparityMap, FlowField, Image, ImageId, SixPack};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

fn is_outlier(err: f64, gt_mag: f64) -> bool {
    err > 3.0 && err > 0.05 * gt_mag
}

/// Percentage of valid ground-truth pixels whose endpoint error exceeds both
/// 3 px and 5% of the ground-truth magnitude. Pixels without an estimate
/// count as outliers.
pub fn flow_outlier_rate(est: &FlowField, gt: &FlowField) -> Result<f64> {
    if est.width() != gt.width() || est.height() != gt.height() {
        return Err(Error::dims("flow fields differ in size"));
    }
    let mut total = 0usize;
    let mut bad = 0usize;
    for (k, g) in gt.vectors().iter().enumerate() {
        if !gt.valid_mask()[k] {
            continue;
        }
        total += 1;
        if !est.valid_mask()[k] {
            bad += 1;
            continue;
        }
        let e = est.vectors()[k];
        if is_outlier((e[0] - g[0]).hypot(e[1] - g[1]), g[0].hypot(g[1])) {
            bad += 1;
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric("ground-truth flow has no valid pixels".into()));
    }
    Ok(100.0 * bad as f64 / total as f64)
}

/// Disparity counterpart of [`flow_outlier_rate`].
pub fn disparity_outlier_rate(est: &DisparityMap, gt: &DisparityMap) -> Result<f64> {
    if est.width() != gt.width() || est.height() != gt.height() {
        return Err(Error::dims("disparity maps differ in size"));
    }
    let mut total = 0usize;
    let mut bad = 0usize;
    for k in 0..gt.raw_values().len() {
        if !gt.valid_mask()[k] {
            continue;
        }
        total += 1;
        let g = gt.raw_values()[k];
        if !est.valid_mask()[k] || is_outlier((est.raw_values()[k] - g).abs(), g.abs()) {
            bad += 1;
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric("ground-truth disparity has no valid pixels".into()));
    }
    Ok(100.0 * bad as f64 / total as f64)
}

/// PSNR in dB for a peak of 1 over all channels, with its identical flag.
pub fn psnr_checked(a: &Image, b: &Image) -> Result<(f64, bool)> {
    a.check_same_shape(b, "psnr operand")?;
    if a.data().is_empty() {
        return Err(Error::UndefinedMetric("psnr of empty images".into()));
    }
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data().len() as f64;
    if mse == 0.0 {
        return Ok((PSNR_CAP, true));
    }
    Ok(((10.0 * (1.0 / mse).log10()).min(PSNR_CAP), false))
}

/// `10 log10(1 / MSE)`; identical images give [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    psnr_checked(a, b).map(|(v, _)| v)
}

const SSIM_WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Mean SSIM of the luminance channels over all 8x8 windows (stride 1),
/// uniform weights, `C₁ = 0.01²`, `C₂ = 0.03²`.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b, "ssim operand")?;
    let (la, lb) = (a.luminance(), b.luminance());
    let (w, h) = (a.width(), a.height());
    let win = SSIM_WINDOW.min(w).min(h);
    if win == 0 {
        return Err(Error::UndefinedMetric("ssim of empty images".into()));
    }
    let n = (win * win) as f64;
    let (da, db) = (la.data(), lb.data());
    let mut sum = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - win {
        for x0 in 0..=w - win {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + win {
                for x in x0..x0 + win {
                    let (u, v) = (da[y * w + x], db[y * w + x]);
                    sa += u;
                    sb += v;
                    saa += u * u;
                    sbb += v * v;
                    sab += u * v;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = (saa / n - ma * ma).max(0.0);
            let vb = (sbb / n - mb * mb).max(0.0);
            let cov = sab / n - ma * mb;
            sum += (2.0 * ma * mb + C1) * (2.0 * cov + C2) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Quality of one restored image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageQuality {
    pub image: String,
    pub psnr: f64,
    pub identical: bool,
    pub ssim: f64,
    /// PSNR of the blurred input against the same ground truth.
    pub psnr_input: f64,
}

/// Wall-clock time spent in each stage, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeBreakdown {
    pub init: f64,
    pub sceneflow: f64,
    pub deblur: f64,
    pub total: f64,
}

/// Outlier rates in percent and per-image restoration quality. Fields are
/// `None` when the matching ground truth is unavailable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub disparity_outliers_m: Option<f64>,
    pub disparity_outliers_m1: Option<f64>,
    pub flow_outliers_left: Option<f64>,
    pub flow_outliers_right: Option<f64>,
    pub images: Vec<ImageQuality>,
    pub mean_psnr: Option<f64>,
    pub mean_psnr_gain: Option<f64>,
    pub mean_ssim: Option<f64>,
    /// Not serialized with the report so that reports stay byte-identical
    /// across runs.
    #[serde(skip)]
    pub runtime: RuntimeBreakdown,
}

/// Estimates and ground truth entering [`MetricsReport::compute`].
#[derive(Debug, Default, Clone, Copy)]
pub struct Evaluation<'a> {
    pub flow_left: Option<(&'a FlowField, &'a FlowField)>,
    pub flow_right: Option<(&'a FlowField, &'a FlowField)>,
    pub disparity_m: Option<(&'a DisparityMap, &'a DisparityMap)>,
    pub disparity_m1: Option<(&'a DisparityMap, &'a DisparityMap)>,
    /// Restored latents, blurred inputs, sharp ground truth.
    pub images: Option<(&'a SixPack, &'a SixPack, &'a SixPack)>,
}

impl MetricsReport {
    pub fn compute(eval: &Evaluation<'_>) -> Result<Self> {
        let flow = |p: Option<(&FlowField, &FlowField)>| p.map(|(e, g)| flow_outlier_rate(e, g)).transpose();
        let disp = |p: Option<(&DisparityMap, &DisparityMap)>| p.map(|(e, g)| disparity_outlier_rate(e, g)).transpose();
        let mut report = MetricsReport {
            flow_outliers_left: flow(eval.flow_left)?,
            flow_outliers_right: flow(eval.flow_right)?,
            disparity_outliers_m: disp(eval.disparity_m)?,
            disparity_outliers_m1: disp(eval.disparity_m1)?,
            ..Default::default()
        };
        if let Some((latents, blurs, sharp)) = eval.images {
            for id in ImageId::ALL {
                let (Some(l), Some(b), Some(s)) = (latents.get(id), blurs.get(id), sharp.get(id)) else { continue };
                let (p, identical) = psnr_checked(l, s)?;
                report.images.push(ImageQuality {
                    image: id.name().to_string(),
                    psnr: p,
                    identical,
                    ssim: ssim(l, s)?,
                    psnr_input: psnr(b, s)?,
                });
            }
            if !report.images.is_empty() {
                let k = report.images.len() as f64;
                let mean = |f: fn(&ImageQuality) -> f64| report.images.iter().map(f).sum::<f64>() / k;
                report.mean_psnr = Some(mean(|q| q.psnr));
                report.mean_psnr_gain = Some(mean(|q| q.psnr - q.psnr_input));
                report.mean_ssim = Some(mean(|q| q.ssim));
            }
        }
        Ok(report)
    }

    /// Line-delimited `key=value` records.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.push_str(&format!("{k}={v}\n"));
            }
        };
        put("disparity_outliers_m", self.disparity_outliers_m);
        put("disparity_outliers_m1", self.disparity_outliers_m1);
        put("flow_outliers_left", self.flow_outliers_left);
        put("flow_outliers_right", self.flow_outliers_right);
        put("mean_psnr", self.mean_psnr);
        put("mean_psnr_gain", self.mean_psnr_gain);
        put("mean_ssim", self.mean_ssim);
        for q in &self.images {
            out.push_str(&format!("psnr.{}={}\n", q.image, q.psnr));
            out.push_str(&format!("identical.{}={}\n", q.image, q.identical));
            out.push_str(&format!("ssim.{}={}\n", q.image, q.ssim));
            out.push_str(&format!("psnr_input.{}={}\n", q.image, q.psnr_input));
        }
        out
    }
}
