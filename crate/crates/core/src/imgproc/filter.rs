use super::{BinaryMask, FloatImage, GrayImage, RgbImage};
use crate::error::{Error, Result};

/// ITU-R BT.601 luma.
pub fn to_gray(rgb: &RgbImage) -> GrayImage {
    let (r, g, b) = (rgb.channel(0), rgb.channel(1), rgb.channel(2));
    let pixels = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| 0.299 * r + 0.587 * g + 0.114 * b)
        .collect();
    GrayImage::from_clamped(FloatImage::new(rgb.width(), rgb.height(), pixels).expect("same size"))
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Result<Vec<f32>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let sigma = sigma as f64;
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| (v / total) as f32).collect())
}

fn convolve_rows(img: &FloatImage, taps: &[f32]) -> FloatImage {
    let r = (taps.len() / 2) as isize;
    FloatImage::from_fn(img.width(), img.height(), |x, y| {
        taps.iter()
            .enumerate()
            .map(|(i, &k)| k * img.get_reflect(x as isize + i as isize - r, y as isize))
            .sum()
    })
}

fn convolve_cols(img: &FloatImage, taps: &[f32]) -> FloatImage {
    let r = (taps.len() / 2) as isize;
    FloatImage::from_fn(img.width(), img.height(), |x, y| {
        taps.iter()
            .enumerate()
            .map(|(i, &k)| k * img.get_reflect(x as isize, y as isize + i as isize - r))
            .sum()
    })
}

/// Separable Gaussian blur with reflective borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f32) -> Result<GrayImage> {
    let taps = gaussian_kernel(sigma)?;
    let out = convolve_cols(&convolve_rows(img, &taps), &taps);
    Ok(GrayImage::from_clamped(out))
}

fn correlate3(img: &FloatImage, k: [[f32; 3]; 3]) -> FloatImage {
    FloatImage::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        for (dy, row) in k.iter().enumerate() {
            for (dx, &kv) in row.iter().enumerate() {
                if kv != 0.0 {
                    acc += kv * img.get_reflect(x as isize + dx as isize - 1, y as isize + dy as isize - 1);
                }
            }
        }
        acc
    })
}

const SOBEL_X: [[f32; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f32; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
const PREWITT_X: [[f32; 3]; 3] = [[-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0]];
const PREWITT_Y: [[f32; 3]; 3] = [[-1.0, -1.0, -1.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]];

/// Horizontal and vertical Sobel responses; `gy` grows downward.
pub fn sobel_gradients(img: &FloatImage) -> (FloatImage, FloatImage) {
    (correlate3(img, SOBEL_X), correlate3(img, SOBEL_Y))
}

pub fn prewitt_gradients(img: &FloatImage) -> (FloatImage, FloatImage) {
    (correlate3(img, PREWITT_X), correlate3(img, PREWITT_Y))
}

fn magnitude_mask(gx: &FloatImage, gy: &FloatImage, threshold: f32) -> BinaryMask {
    BinaryMask::from_fn(gx.width(), gx.height(), |x, y| gx.get(x, y).hypot(gy.get(x, y)) > threshold)
}

pub fn sobel_edges(img: &FloatImage, threshold: f32) -> BinaryMask {
    let (gx, gy) = sobel_gradients(img);
    magnitude_mask(&gx, &gy, threshold)
}

pub fn prewitt_edges(img: &FloatImage, threshold: f32) -> BinaryMask {
    let (gx, gy) = prewitt_gradients(img);
    magnitude_mask(&gx, &gy, threshold)
}

/// Affine map of `[min, max]` onto `[0, 1]`; a constant image maps to zeros.
pub fn minmax_normalize(img: &FloatImage) -> GrayImage {
    let (lo, hi) = img
        .pixels()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let pixels = if !(span > 0.0) || !span.is_finite() {
        vec![0.0; img.pixels().len()]
    } else {
        img.pixels().iter().map(|&v| (v - lo) / span).collect()
    };
    GrayImage::from_clamped(FloatImage::new(img.width(), img.height(), pixels).expect("same size"))
}

/// 1 where the value is strictly greater than `tau`.
pub fn step(img: &FloatImage, tau: f32) -> BinaryMask {
    BinaryMask::from_fn(img.width(), img.height(), |x, y| img.get(x, y) > tau)
}
