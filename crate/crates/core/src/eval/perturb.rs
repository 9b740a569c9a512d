//! Image perturbations used for robustness sweeps, plus the crop helpers
//! that prepare pixels for an image encoder.
//!
//! Pixels are RGB `f32` in `[0, 1]`; 8-bit formats are converted at the edges.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::imageops::{self, FilterType};
use image::{DynamicImage, ImageFormat, Rgb, Rgb32FImage, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PixelBuffer = Rgb32FImage;

/// Encoder input side length.
pub const DEFAULT_CROP: u32 = 224;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    GaussianNoise,
    GaussianBlur,
    Jpeg,
}

/// `param` is sigma in normalized pixel units for noise, sigma in pixels for
/// blur, and the quality for JPEG. `seed` only affects noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub param: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PerturbationKind::GaussianNoise | PerturbationKind::GaussianBlur => check_sigma(self.param),
            PerturbationKind::Jpeg => jpeg_quality(self.param).map(|_| ()),
        }
    }
}

pub fn perturb(image: &PixelBuffer, spec: &PerturbationSpec) -> Result<PixelBuffer> {
    match spec.kind {
        PerturbationKind::GaussianNoise => perturb_gaussian_noise(image, spec.param, spec.seed),
        PerturbationKind::GaussianBlur => perturb_gaussian_blur(image, spec.param),
        PerturbationKind::Jpeg => perturb_jpeg(image, jpeg_quality(spec.param)?),
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSigma(sigma))
    }
}

fn jpeg_quality(param: f64) -> Result<u8> {
    if param.fract() != 0.0 || !(1.0..=100.0).contains(&param) {
        return Err(Error::InvalidQuality(param as i64));
    }
    Ok(param as u8)
}

fn check_nonempty(image: &PixelBuffer) -> Result<()> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::InvalidInput("image is empty".into()));
    }
    Ok(())
}

pub fn to_rgb8(image: &PixelBuffer) -> RgbImage {
    DynamicImage::ImageRgb32F(image.clone()).to_rgb8()
}

pub fn from_rgb8(image: &RgbImage) -> PixelBuffer {
    DynamicImage::ImageRgb8(image.clone()).to_rgb32f()
}

/// Adds i.i.d. Gaussian noise to every channel, then clamps to `[0, 1]`.
pub fn perturb_gaussian_noise(image: &PixelBuffer, sigma: f64, seed: u64) -> Result<PixelBuffer> {
    check_sigma(sigma)?;
    check_nonempty(image)?;
    let normal = Normal::new(0.0, sigma).map_err(|_| Error::InvalidSigma(sigma))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = image.clone();
    for v in out.iter_mut() {
        let noisy = f64::from(*v) + normal.sample(&mut rng);
        *v = noisy.clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Separable Gaussian blur, radius `ceil(3 sigma)`, clamp-to-edge borders.
pub fn perturb_gaussian_blur(image: &PixelBuffer, sigma: f64) -> Result<PixelBuffer> {
    check_sigma(sigma)?;
    check_nonempty(image)?;
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (image.width() as i64, image.height() as i64);
    let src: Vec<f64> = image.iter().map(|&v| f64::from(v)).collect();
    let idx = |x: i64, y: i64, c: usize| ((y * w + x) * 3) as usize + c;

    let mut horizontal = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                horizontal[idx(x, y, c)] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * src[idx((x + k as i64 - radius).clamp(0, w - 1), y, c)])
                    .sum();
            }
        }
    }
    let mut out = PixelBuffer::new(image.width(), image.height());
    for y in 0..h {
        for x in 0..w {
            let mut px = [0f32; 3];
            for (c, p) in px.iter_mut().enumerate() {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * horizontal[idx(x, (y + k as i64 - radius).clamp(0, h - 1), c)])
                    .sum();
                *p = v.clamp(0.0, 1.0) as f32;
            }
            out.put_pixel(x as u32, y as u32, Rgb(px));
        }
    }
    Ok(out)
}

/// Baseline JPEG bytes at the given quality.
pub fn encode_jpeg(image: &PixelBuffer, quality: u8) -> Result<Vec<u8>> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidQuality(i64::from(quality)));
    }
    check_nonempty(image)?;
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode_image(&to_rgb8(image))
        .map_err(|e| Error::EncodeError(e.to_string()))?;
    Ok(buf)
}

/// JPEG round trip: encode at `quality`, decode back to pixels.
pub fn perturb_jpeg(image: &PixelBuffer, quality: u8) -> Result<PixelBuffer> {
    let bytes = encode_jpeg(image, quality)?;
    let decoded = image::load(Cursor::new(bytes), ImageFormat::Jpeg)
        .map_err(|e| Error::EncodeError(format!("decoding re-encoded JPEG: {e}")))?;
    Ok(decoded.to_rgb32f())
}

/// Scales the shorter side up to `size` (bilinear) when it is smaller, then
/// takes the central `size x size` window. Sides still shorter than `size`
/// after that cannot occur.
pub fn center_crop(image: &PixelBuffer, size: u32) -> PixelBuffer {
    let (w, h) = image.dimensions();
    let short = w.min(h);
    let resized;
    let src = if short < size && short > 0 {
        let scale = f64::from(size) / f64::from(short);
        let (nw, nh) = if w <= h {
            (size, ((f64::from(h) * scale).round() as u32).max(size))
        } else {
            (((f64::from(w) * scale).round() as u32).max(size), size)
        };
        resized = imageops::resize(image, nw, nh, FilterType::Triangle);
        &resized
    } else {
        image
    };
    let (w, h) = src.dimensions();
    let side_w = size.min(w);
    let side_h = size.min(h);
    imageops::crop_imm(src, (w - side_w) / 2, (h - side_h) / 2, side_w, side_h).to_image()
}

/// Crops a normalized `(x0, y0, x1, y1)` box out of `image` and pads the
/// shorter side with black so the result is square, content centered.
pub fn crop_object(image: &PixelBuffer, bbox: [f64; 4]) -> Result<PixelBuffer> {
    check_nonempty(image)?;
    let [x0, y0, x1, y1] = bbox;
    if !(0.0..=1.0).contains(&x0) || !(0.0..=1.0).contains(&y1) || !(x0 < x1 && y0 < y1) || x1 > 1.0 || y0 < 0.0 {
        return Err(Error::InvalidInput(format!("invalid box {bbox:?}")));
    }
    let (w, h) = (f64::from(image.width()), f64::from(image.height()));
    let px0 = ((x0 * w).floor() as u32).min(image.width() - 1);
    let py0 = ((y0 * h).floor() as u32).min(image.height() - 1);
    let px1 = ((x1 * w).ceil() as u32).clamp(px0 + 1, image.width());
    let py1 = ((y1 * h).ceil() as u32).clamp(py0 + 1, image.height());
    let crop = imageops::crop_imm(image, px0, py0, px1 - px0, py1 - py0).to_image();
    let side = crop.width().max(crop.height());
    let mut square = PixelBuffer::new(side, side);
    imageops::replace(
        &mut square,
        &crop,
        i64::from((side - crop.width()) / 2),
        i64::from((side - crop.height()) / 2),
    );
    Ok(square)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(w: u32, h: u32, v: f32) -> PixelBuffer {
        PixelBuffer::from_pixel(w, h, Rgb([v, v, v]))
    }

    fn gradient(w: u32, h: u32) -> PixelBuffer {
        PixelBuffer::from_fn(w, h, |x, y| {
            let fx = x as f32 / (w - 1) as f32;
            let fy = y as f32 / (h - 1) as f32;
            Rgb([fx, fy, 0.5 * (fx + fy)])
        })
    }

    #[test]
    fn noise_statistics_and_determinism() {
        let img = constant(400, 300, 0.5);
        let out = perturb_gaussian_noise(&img, 0.005, 7).unwrap();
        let diffs: Vec<f64> = out.iter().zip(img.iter()).map(|(a, b)| f64::from(a - b)).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.005).abs() < 0.0005, "std {std}");
        assert_eq!(out, perturb_gaussian_noise(&img, 0.005, 7).unwrap());
        assert_ne!(out, perturb_gaussian_noise(&img, 0.005, 8).unwrap());
        assert!(matches!(perturb_gaussian_noise(&img, 0.0, 1), Err(Error::InvalidSigma(_))));
        assert!(matches!(perturb_gaussian_noise(&img, -0.1, 1), Err(Error::InvalidSigma(_))));
    }

    #[test]
    fn noise_is_clamped() {
        let img = constant(50, 50, 1.0);
        let out = perturb_gaussian_noise(&img, 0.5, 1).unwrap();
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn kernel_shape() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(gaussian_kernel(2.0).len(), 13);
        assert_eq!(gaussian_kernel(0.4).len(), 5);
    }

    #[test]
    fn blur_keeps_constant_images() {
        let img = constant(37, 23, 0.3);
        for sigma in [1.0, 2.0, 3.0] {
            let out = perturb_gaussian_blur(&img, sigma).unwrap();
            assert_eq!(out.dimensions(), img.dimensions());
            assert!(out.iter().all(|v| (v - 0.3).abs() <= 1.0 / 255.0));
        }
        assert!(perturb_gaussian_blur(&img, 0.0).is_err());
    }

    #[test]
    fn blur_impulse_response_is_kernel_product() {
        let mut img = constant(21, 21, 0.0);
        img.put_pixel(10, 10, Rgb([1.0, 1.0, 1.0]));
        let out = perturb_gaussian_blur(&img, 1.0).unwrap();
        // direct evaluation of the 2-D kernel center: (1 / sum_{|i|<=3} e^{-i^2/2})^2
        let s: f64 = (-3i32..=3).map(|i| (-(i * i) as f64 / 2.0).exp()).sum();
        let center = 1.0 / (s * s);
        assert!((f64::from(out.get_pixel(10, 10)[0]) - center).abs() <= 1.0 / 255.0);
        let off = (-0.5f64).exp() / (s * s);
        assert!((f64::from(out.get_pixel(11, 10)[1]) - off).abs() < 1e-6);
        let total: f64 = out.iter().step_by(3).map(|&v| f64::from(v)).sum();
        assert!((total - 1.0).abs() < 0.005);
    }

    #[test]
    fn jpeg_quality_controls_size_and_error() {
        let img = gradient(96, 64);
        let q100 = perturb_jpeg(&img, 100).unwrap();
        assert_eq!(q100.dimensions(), img.dimensions());
        let a = to_rgb8(&img);
        let b = to_rgb8(&q100);
        let worst = a.iter().zip(b.iter()).map(|(x, y)| x.abs_diff(*y)).max().unwrap();
        assert!(worst <= 2, "max error {worst}");
        assert!(matches!(perturb_jpeg(&img, 0), Err(Error::InvalidQuality(0))));
        let spec = PerturbationSpec { kind: PerturbationKind::Jpeg, param: 101.0, seed: 0 };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn center_crop_policies() {
        let big = gradient(448, 448);
        let c = center_crop(&big, 224);
        assert_eq!(c.dimensions(), (224, 224));
        assert_eq!(c.get_pixel(0, 0), big.get_pixel(112, 112));

        let exact = gradient(224, 224);
        assert_eq!(center_crop(&exact, 224), exact);

        let wide = gradient(300, 200);
        let c = center_crop(&wide, 224);
        assert_eq!(c.dimensions(), (224, 224));

        let tall = gradient(50, 500);
        assert_eq!(center_crop(&tall, 224).dimensions(), (224, 224));
    }

    #[test]
    fn object_crop_is_square() {
        let img = gradient(200, 100);
        let crop = crop_object(&img, [0.0, 0.0, 0.5, 0.5]).unwrap();
        assert_eq!(crop.dimensions(), (100, 100));
        // 100 x 50 content centered vertically: rows 25..75
        assert_eq!(crop.get_pixel(0, 0), &Rgb([0.0, 0.0, 0.0]));
        assert_eq!(crop.get_pixel(0, 25), img.get_pixel(0, 0));
        assert!(crop_object(&img, [0.5, 0.0, 0.5, 1.0]).is_err());
        assert!(crop_object(&img, [0.0, 0.0, 1.2, 1.0]).is_err());
    }
}
