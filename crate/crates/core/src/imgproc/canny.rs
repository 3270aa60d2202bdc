use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{filter, BinaryMask, FloatImage, GrayImage};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub sigma: f32,
    pub low: f32,
    pub high: f32,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 0.1,
            high: 0.2,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::invalid(format!("canny sigma must be positive, got {}", self.sigma)));
        }
        if !(0.0 < self.low && self.low < self.high) {
            return Err(Error::invalid(format!(
                "canny thresholds need 0 < low < high, got low={} high={}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Largest Sobel magnitude a `[0, 1]` image can produce.
const SOBEL_MAX: f32 = 4.0 * std::f32::consts::SQRT_2;

/// Blurred Sobel gradient: `(magnitude in [0, 1], gx, gy)`.
pub fn canny_gradient(img: &GrayImage, sigma: f32) -> Result<(FloatImage, FloatImage, FloatImage)> {
    let blurred = filter::gaussian_blur(img, sigma)?;
    let (gx, gy) = filter::sobel_gradients(&blurred);
    let mag = FloatImage::from_fn(img.width(), img.height(), |x, y| {
        (gx.get(x, y).hypot(gy.get(x, y)) / SOBEL_MAX).min(1.0)
    });
    Ok((mag, gx, gy))
}

/// Thins ridges of `mag` to one pixel along the quantized gradient direction.
///
/// A pixel survives if it is strictly greater than its neighbour on the
/// negative side and at least as large as the one on the positive side.
pub fn non_maximum_suppression(mag: &FloatImage, gx: &FloatImage, gy: &FloatImage) -> FloatImage {
    let (w, h) = (mag.width() as isize, mag.height() as isize);
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            mag.get(x as usize, y as usize)
        }
    };
    FloatImage::from_fn(mag.width(), mag.height(), |x, y| {
        let m = mag.get(x, y);
        if m <= 0.0 {
            return 0.0;
        }
        let mut angle = gy.get(x, y).atan2(gx.get(x, y)).to_degrees();
        if angle < 0.0 {
            angle += 180.0;
        }
        // (dx, dy) of the positive-side neighbour; y grows downward
        let (dx, dy) = if !(22.5..157.5).contains(&angle) {
            (1, 0)
        } else if angle < 67.5 {
            (1, 1)
        } else if angle < 112.5 {
            (0, 1)
        } else {
            (-1, 1)
        };
        let (x, y) = (x as isize, y as isize);
        let pos = at(x + dx, y + dy);
        let neg = at(x - dx, y - dy);
        if m > neg && m >= pos {
            m
        } else {
            0.0
        }
    })
}

/// Double threshold plus 8-connected hysteresis: pixels above `high` are
/// strong; pixels above `low` survive only when transitively connected to a
/// strong pixel.
pub fn hysteresis(mag: &FloatImage, low: f32, high: f32) -> BinaryMask {
    let (w, h) = (mag.width(), mag.height());
    let mut out = BinaryMask::zeros(w, h);
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if mag.get(x, y) > high {
                out.set(x, y, true);
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if !out.get(nx, ny) && mag.get(nx, ny) > low {
                    out.set(nx, ny, true);
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    out
}

/// Canny edge detector: Gaussian blur, Sobel gradient, non-maximum
/// suppression over four direction bins, then hysteresis. Thresholds are on
/// the `[0, 1]` magnitude scale of [`canny_gradient`].
pub fn canny(img: &GrayImage, params: CannyParams) -> Result<BinaryMask> {
    params.validate()?;
    let (mag, gx, gy) = canny_gradient(img, params.sigma)?;
    let thin = non_maximum_suppression(&mag, &gx, &gy);
    Ok(hysteresis(&thin, params.low, params.high))
}
