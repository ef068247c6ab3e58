//! Image, flow and disparity codecs: the FRAS float raster, 8/16-bit PNG and
//! the KITTI 16-bit flow and disparity encodings.

use std::fs;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::raster::{DisparityMap, FlowField, Image};

const MAGIC: &[u8; 4] = b"FRAS";
const HEADER: usize = 16;
const KITTI_OFFSET: f64 = 32768.0;
const KITTI_FLOW_SCALE: f64 = 64.0;
const KITTI_DISPARITY_SCALE: f64 = 256.0;

/// Bit depth of written PNGs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PngDepth {
    Eight,
    Sixteen,
}

fn is_fras(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("fras"))
}

/// Encodes `(width, height, channels, values)` as a FRAS byte stream.
pub fn encode_fras(width: usize, height: usize, channels: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != width * height * channels {
        return Err(Error::dims(format!("{} values for {width}x{height}x{channels}", values.len())));
    }
    let dim = |v: usize| u32::try_from(v).map_err(|_| Error::dims(format!("dimension {v} exceeds u32")));
    let mut out = Vec::with_capacity(HEADER + 4 * values.len());
    out.extend_from_slice(MAGIC);
    for v in [width, height, channels] {
        out.extend_from_slice(&dim(v)?.to_le_bytes());
    }
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes a FRAS byte stream into `(width, height, channels, values)`.
pub fn decode_fras(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f64>)> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Data("not a FRAS raster (bad magic or short header)".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize;
    let (w, h, c) = (word(0), word(1), word(2));
    let count = w.checked_mul(h).and_then(|n| n.checked_mul(c)).ok_or_else(|| Error::Data("FRAS header overflows".into()))?;
    let payload = &bytes[HEADER..];
    if payload.len() != 4 * count {
        return Err(Error::Data(format!("FRAS payload has {} bytes, header promises {}", payload.len(), 4 * count)));
    }
    let values = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64).collect();
    Ok((w, h, c, values))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(fs::File::create(path)?);
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

fn png_bytes(img: DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

fn load_png(bytes: &[u8]) -> Result<DynamicImage> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Png)?)
}

/// Encodes a 1- or 3-channel image as PNG, clamping to `[0, 1]` and rounding.
pub fn encode_png(image: &Image, depth: PngDepth) -> Result<Vec<u8>> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let q8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let q16 = |v: f64| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
    let d = image.data();
    let img = match (image.channels(), depth) {
        (1, PngDepth::Eight) => DynamicImage::ImageLuma8(ImageBuffer::from_raw(w, h, d.iter().map(|&v| q8(v)).collect()).expect("size")),
        (1, PngDepth::Sixteen) => {
            DynamicImage::ImageLuma16(ImageBuffer::from_raw(w, h, d.iter().map(|&v| q16(v)).collect()).expect("size"))
        }
        (3, PngDepth::Eight) => DynamicImage::ImageRgb8(ImageBuffer::from_raw(w, h, d.iter().map(|&v| q8(v)).collect()).expect("size")),
        (3, PngDepth::Sixteen) => {
            DynamicImage::ImageRgb16(ImageBuffer::from_raw(w, h, d.iter().map(|&v| q16(v)).collect()).expect("size"))
        }
        (c, _) => return Err(Error::Data(format!("PNG output needs 1 or 3 channels, image has {c}"))),
    };
    png_bytes(img)
}

/// Decodes a PNG with linear scaling to `[0, 1]`. Gray gives 1 channel and
/// color 3; an alpha channel is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let img = load_png(bytes)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let color = img.color();
    let sixteen = color.bytes_per_pixel() / color.channel_count().max(1) >= 2;
    let (channels, data): (usize, Vec<f64>) = match (color.has_color(), sixteen) {
        (false, false) => (1, img.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        (false, true) => (1, img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        (true, false) => (3, img.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        (true, true) => (3, img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
    };
    Image::from_vec(w, h, channels, data)
}

/// Image bytes: FRAS when `path` ends in `.fras`, 16-bit PNG otherwise.
pub fn encode_image(path: &Path, image: &Image) -> Result<Vec<u8>> {
    if is_fras(path) {
        encode_fras(image.width(), image.height(), image.channels(), image.data())
    } else {
        encode_png(image, PngDepth::Sixteen)
    }
}

pub fn decode_image(path: &Path, bytes: &[u8]) -> Result<Image> {
    if is_fras(path) {
        let (w, h, c, v) = decode_fras(bytes)?;
        Image::from_vec(w, h, c, v)
    } else {
        decode_png(bytes)
    }
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode_image(path, &fs::read(path)?)
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    write_bytes(path, &encode_image(path, image)?)
}

fn kitti_flow_code(u: f64) -> u16 {
    (u * KITTI_FLOW_SCALE + KITTI_OFFSET).round().clamp(0.0, 65535.0) as u16
}

/// KITTI flow PNG: `u = (R - 2^15) / 64`, `v = (G - 2^15) / 64`, valid where
/// `B != 0`. Invalid pixels are written as zeros.
pub fn encode_flow_png(flow: &FlowField) -> Result<Vec<u8>> {
    let (w, h) = (flow.width(), flow.height());
    let mut buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            if flow.is_valid(x, y) {
                let u = flow.get(x, y);
                buf.put_pixel(x as u32, y as u32, Rgb([kitti_flow_code(u[0]), kitti_flow_code(u[1]), 1]));
            }
        }
    }
    png_bytes(DynamicImage::ImageRgb16(buf))
}

pub fn decode_flow_png(bytes: &[u8]) -> Result<FlowField> {
    let img = load_png(bytes)?;
    if img.color().channel_count() != 3 {
        return Err(Error::Data(format!("flow PNG needs 3 channels, found {}", img.color().channel_count())));
    }
    let buf = img.to_rgb16();
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let mut data = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for p in buf.pixels() {
        let ok = p[2] != 0;
        valid.push(ok);
        data.push(if ok {
            [(p[0] as f64 - KITTI_OFFSET) / KITTI_FLOW_SCALE, (p[1] as f64 - KITTI_OFFSET) / KITTI_FLOW_SCALE]
        } else {
            [0.0, 0.0]
        });
    }
    FlowField::from_parts(w, h, data, valid)
}

/// Flow as a 2-channel FRAS raster; invalid pixels are NaN.
pub fn encode_flow_fras(flow: &FlowField) -> Result<Vec<u8>> {
    let values: Vec<f64> = flow
        .vectors()
        .iter()
        .zip(flow.valid_mask())
        .flat_map(|(u, &ok)| if ok { *u } else { [f64::NAN; 2] })
        .collect();
    encode_fras(flow.width(), flow.height(), 2, &values)
}

pub fn decode_flow_fras(bytes: &[u8]) -> Result<FlowField> {
    let (w, h, c, v) = decode_fras(bytes)?;
    if c != 2 {
        return Err(Error::Data(format!("flow raster needs 2 channels, found {c}")));
    }
    let ok = |p: &[f64]| p[0].is_finite() && p[1].is_finite();
    let valid = v.chunks_exact(2).map(ok).collect();
    let data = v.chunks_exact(2).map(|p| if ok(p) { [p[0], p[1]] } else { [0.0; 2] }).collect();
    FlowField::from_parts(w, h, data, valid)
}

pub fn encode_flow(path: &Path, flow: &FlowField) -> Result<Vec<u8>> {
    if is_fras(path) {
        encode_flow_fras(flow)
    } else {
        encode_flow_png(flow)
    }
}

pub fn decode_flow(path: &Path, bytes: &[u8]) -> Result<FlowField> {
    if is_fras(path) {
        decode_flow_fras(bytes)
    } else {
        decode_flow_png(bytes)
    }
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    decode_flow(path, &fs::read(path)?)
}

pub fn write_flow(path: &Path, flow: &FlowField) -> Result<()> {
    write_bytes(path, &encode_flow(path, flow)?)
}

/// KITTI disparity PNG: 16-bit gray, `d = value / 256`, 0 marks invalid.
/// Valid disparities below 1/256 are stored as 1/256 so they stay valid.
pub fn encode_disparity_png(disparity: &DisparityMap) -> Result<Vec<u8>> {
    let (w, h) = (disparity.width(), disparity.height());
    let mut buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let code = disparity.value(x, y).map_or(0, |d| (d * KITTI_DISPARITY_SCALE).round().clamp(1.0, 65535.0) as u16);
            buf.put_pixel(x as u32, y as u32, Luma([code]));
        }
    }
    png_bytes(DynamicImage::ImageLuma16(buf))
}

pub fn decode_disparity_png(bytes: &[u8]) -> Result<DisparityMap> {
    let img = load_png(bytes)?;
    if img.color().channel_count() != 1 {
        return Err(Error::Data(format!("disparity PNG needs 1 channel, found {}", img.color().channel_count())));
    }
    let buf = img.to_luma16();
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let codes: Vec<u16> = buf.into_raw();
    let valid = codes.iter().map(|&c| c != 0).collect();
    let values = codes.iter().map(|&c| c as f64 / KITTI_DISPARITY_SCALE).collect();
    DisparityMap::from_parts(w, h, values, valid)
}

/// Disparity as a 1-channel FRAS raster; invalid pixels are NaN.
pub fn encode_disparity_fras(disparity: &DisparityMap) -> Result<Vec<u8>> {
    let (w, h) = (disparity.width(), disparity.height());
    let values: Vec<f64> = (0..w * h).map(|p| disparity.value(p % w, p / w).unwrap_or(f64::NAN)).collect();
    encode_fras(w, h, 1, &values)
}

pub fn decode_disparity_fras(bytes: &[u8]) -> Result<DisparityMap> {
    let (w, h, c, v) = decode_fras(bytes)?;
    if c != 1 {
        return Err(Error::Data(format!("disparity raster needs 1 channel, found {c}")));
    }
    let valid = v.iter().map(|d| d.is_finite()).collect();
    let values = v.iter().map(|d| if d.is_finite() { *d } else { 0.0 }).collect();
    DisparityMap::from_parts(w, h, values, valid)
}

pub fn encode_disparity(path: &Path, disparity: &DisparityMap) -> Result<Vec<u8>> {
    if is_fras(path) {
        encode_disparity_fras(disparity)
    } else {
        encode_disparity_png(disparity)
    }
}

pub fn decode_disparity(path: &Path, bytes: &[u8]) -> Result<DisparityMap> {
    if is_fras(path) {
        decode_disparity_fras(bytes)
    } else {
        decode_disparity_png(bytes)
    }
}

pub fn read_disparity(path: &Path) -> Result<DisparityMap> {
    decode_disparity(path, &fs::read(path)?)
}

pub fn write_disparity(path: &Path, disparity: &DisparityMap) -> Result<()> {
    write_bytes(path, &encode_disparity(path, disparity)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fras_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.fras");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vals: Vec<f64> = (0..5 * 3 * 2).map(|_| (rng.random::<f32>() * 7.0 - 3.0) as f64).collect();
        let img = Image::from_vec(5, 3, 2, vals).unwrap();
        write_image(&path, &img).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back, img);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"FRAS");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 16 + 4 * 30);
    }

    #[test]
    fn fras_rejects_corruption() {
        let good = encode_fras(2, 2, 1, &[0.0; 4]).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_fras(&bad_magic), Err(Error::Data(_))));
        assert!(matches!(decode_fras(&good[..good.len() - 1]), Err(Error::Data(_))));
        assert!(matches!(decode_fras(&good[..10]), Err(Error::Data(_))));
    }

    #[test]
    fn png_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p8 = dir.path().join("a.png");
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(2, 1, vec![255, 0]).unwrap();
        DynamicImage::ImageLuma8(buf).save(&p8).unwrap();
        let img = read_image(&p8).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0]);

        let p16 = dir.path().join("b.png");
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(1, 1, vec![32768]).unwrap();
        DynamicImage::ImageLuma16(buf).save(&p16).unwrap();
        assert_eq!(read_image(&p16).unwrap().data(), &[32768.0 / 65535.0]);
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let img = Image::from_fn(7, 4, 3, |x, y, c| ((x * 3 + y * 5 + c) % 11) as f64 / 10.0);
        for (depth, step) in [(PngDepth::Eight, 255.0), (PngDepth::Sixteen, 65535.0)] {
            let back = decode_png(&encode_png(&img, depth).unwrap()).unwrap();
            assert_eq!(back.channels(), 3);
            let err = back.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 0.5 / step + 1e-12, "{err}");
        }
    }

    #[test]
    fn kitti_flow_examples() {
        assert_eq!(kitti_flow_code(0.0), 32768);
        assert_eq!(kitti_flow_code(1.0), 32832);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_raw(2, 1, vec![32768, 32768, 1, 32832, 0, 0]).unwrap();
        DynamicImage::ImageRgb16(buf).save(&path).unwrap();
        let f = read_flow(&path).unwrap();
        assert_eq!(f.get(0, 0), [0.0, 0.0]);
        assert!(f.is_valid(0, 0));
        assert!(!f.is_valid(1, 0));
    }

    #[test]
    fn flow_png_rejects_gray() {
        let bytes = encode_png(&Image::filled(2, 2, 1, 0.5), PngDepth::Sixteen).unwrap();
        assert!(matches!(decode_flow_png(&bytes), Err(Error::Data(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn kitti_flow_round_trip_error_bounded(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (9, 6);
            let data: Vec<[f64; 2]> = (0..w * h).map(|_| [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)]).collect();
            let valid: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.8)).collect();
            let flow = FlowField::from_parts(w, h, data, valid).unwrap();
            let back = decode_flow_png(&encode_flow_png(&flow).unwrap()).unwrap();
            prop_assert_eq!(back.valid_mask(), flow.valid_mask());
            for (k, (a, b)) in back.vectors().iter().zip(flow.vectors()).enumerate() {
                if flow.valid_mask()[k] {
                    prop_assert!((a[0] - b[0]).abs() <= 1.0 / 128.0 && (a[1] - b[1]).abs() <= 1.0 / 128.0);
                }
            }
            let fb = decode_flow_fras(&encode_flow_fras(&flow).unwrap()).unwrap();
            prop_assert_eq!(fb.valid_mask(), flow.valid_mask());
        }
    }

    #[test]
    fn disparity_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let values = vec![0.0, 1.5, 47.25, 3.0];
        let d = DisparityMap::from_parts(2, 2, values, vec![true, true, true, false]).unwrap();
        for name in ["d.png", "d.fras"] {
            let path = dir.path().join(name);
            write_disparity(&path, &d).unwrap();
            let back = read_disparity(&path).unwrap();
            assert_eq!(back.value(1, 1), None);
            assert!((back.value(1, 0).unwrap() - 1.5).abs() <= 1.0 / 512.0);
            assert!((back.value(0, 1).unwrap() - 47.25).abs() <= 1.0 / 512.0);
            // A valid zero disparity stays valid.
            assert!(back.value(0, 0).is_some_and(|v| v <= 1.0 / 256.0));
        }
    }
}
