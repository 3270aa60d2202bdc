use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SamplePair;
use crate::error::{Error, Result};
use crate::imgproc::{BinaryMask, RgbImage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Rasters smaller than this are zero-padded symmetrically up to it.
    pub pad_to: usize,
    /// Crop side range as a multiple of `output_size`.
    pub crop_scale: (f64, f64),
    pub output_size: usize,
    /// Rotation range in degrees.
    pub rotation_deg: (f64, f64),
    /// Per-image multiplicative gain range.
    pub illumination: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            pad_to: 1024,
            crop_scale: (0.7, 1.3),
            output_size: 512,
            rotation_deg: (-15.0, 15.0),
            illumination: (0.8, 1.2),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.output_size == 0 {
            return Err(Error::invalid("augmentation output size must be positive"));
        }
        if !ordered(self.crop_scale) || self.crop_scale.0 <= 0.0 {
            return Err(Error::invalid(format!("bad crop scale range {:?}", self.crop_scale)));
        }
        if !ordered(self.rotation_deg) {
            return Err(Error::invalid(format!("bad rotation range {:?}", self.rotation_deg)));
        }
        if !ordered(self.illumination) || self.illumination.0 < 0.0 {
            return Err(Error::invalid(format!("bad illumination range {:?}", self.illumination)));
        }
        Ok(())
    }

    /// Inclusive crop side range in pixels.
    pub fn side_range(&self) -> (usize, usize) {
        let s = self.output_size as f64;
        let lo = ((self.crop_scale.0 * s).round() as usize).max(1);
        let hi = ((self.crop_scale.1 * s).round() as usize).max(lo);
        (lo, hi)
    }

    fn padded(&self, w: usize, h: usize) -> (usize, usize) {
        (w.max(self.pad_to), h.max(self.pad_to))
    }
}

/// One concrete draw of the augmentation chain. The geometric part is shared
/// by both images and the label; the gains are drawn per image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    /// Crop origin in padded coordinates.
    pub crop_x: usize,
    pub crop_y: usize,
    pub side: usize,
    pub angle_deg: f64,
    pub gain_before: f64,
    pub gain_after: f64,
}

impl AugmentParams {
    pub fn sample(width: usize, height: usize, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let (pw, ph) = cfg.padded(width, height);
        let (lo, hi) = cfg.side_range();
        let side = rng.gen_range(lo..=hi).min(pw).min(ph);
        let uniform = |rng: &mut _, (a, b): (f64, f64)| if a == b { a } else { Rng::gen_range(rng, a..=b) };
        Ok(Self {
            crop_x: rng.gen_range(0..=pw - side),
            crop_y: rng.gen_range(0..=ph - side),
            side,
            angle_deg: uniform(rng, cfg.rotation_deg),
            gain_before: uniform(rng, cfg.illumination),
            gain_after: uniform(rng, cfg.illumination),
        })
    }

    /// Parameters that leave a raster of exactly `output_size` unchanged
    /// when no padding is needed.
    pub fn identity(cfg: &AugmentConfig) -> Self {
        Self {
            crop_x: 0,
            crop_y: 0,
            side: cfg.output_size,
            angle_deg: 0.0,
            gain_before: 1.0,
            gain_after: 1.0,
        }
    }
}

pub fn augment(sample: &SamplePair, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<SamplePair> {
    let params = AugmentParams::sample(sample.width(), sample.height(), cfg, rng)?;
    augment_with(sample, &params, cfg)
}

/// Maps padded-and-cropped output coordinates back to the source raster.
struct Geometry {
    left: f64,
    top: f64,
    crop_x: f64,
    crop_y: f64,
    side: usize,
    scale: f64,
    cos: f64,
    sin: f64,
    centre: f64,
    rotate: bool,
}

impl Geometry {
    /// Position in the resized crop that output pixel `(x, y)` rotates from.
    fn unrotate(&self, x: f64, y: f64) -> (f64, f64) {
        if !self.rotate {
            return (x, y);
        }
        let (dx, dy) = (x - self.centre, y - self.centre);
        (
            self.cos * dx + self.sin * dy + self.centre,
            -self.sin * dx + self.cos * dy + self.centre,
        )
    }

    /// Continuous source coordinate for a crop-grid coordinate, clamped to
    /// the crop window like a plain resize of the cropped raster.
    fn crop_to_source(&self, u: f64) -> f64 {
        ((u + 0.5) * self.scale - 0.5).clamp(0.0, (self.side - 1) as f64)
    }
}

/// Reads the padded raster: zero outside the original extent.
fn padded_value(img: &RgbImage, c: usize, geo: &Geometry, px: isize, py: isize) -> f32 {
    let x = px - geo.left as isize;
    let y = py - geo.top as isize;
    if x < 0 || y < 0 || x >= img.width() as isize || y >= img.height() as isize {
        0.0
    } else {
        img.get(c, x as usize, y as usize)
    }
}

fn sample_crop_bilinear(img: &RgbImage, c: usize, geo: &Geometry, u: f64, v: f64) -> f64 {
    let sx = geo.crop_to_source(u);
    let sy = geo.crop_to_source(v);
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let last = (geo.side - 1) as f64;
    let (x1, y1) = ((x0 + 1.0).min(last), (y0 + 1.0).min(last));
    let at = |x: f64, y: f64| {
        padded_value(img, c, geo, (geo.crop_x + x) as isize, (geo.crop_y + y) as isize) as f64
    };
    (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x1, y0)) + fy * ((1.0 - fx) * at(x0, y1) + fx * at(x1, y1))
}

fn augment_image(img: &RgbImage, geo: &Geometry, out: usize, gain: f64) -> RgbImage {
    let limit = (out - 1) as f64;
    RgbImage::from_fn(out, out, |x, y| {
        let (u, v) = geo.unrotate(x as f64, y as f64);
        let mut px = [0.0f32; 3];
        if geo.rotate {
            // bilinear over the rotated grid with zero fill outside it
            let (u0, v0) = (u.floor(), v.floor());
            let (fu, fv) = (u - u0, v - v0);
            for (c, slot) in px.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (du, wu) in [(0.0, 1.0 - fu), (1.0, fu)] {
                    for (dv, wv) in [(0.0, 1.0 - fv), (1.0, fv)] {
                        let (uu, vv) = (u0 + du, v0 + dv);
                        if wu * wv == 0.0 || uu < 0.0 || vv < 0.0 || uu > limit || vv > limit {
                            continue;
                        }
                        acc += wu * wv * sample_crop_bilinear(img, c, geo, uu, vv);
                    }
                }
                *slot = (acc * gain) as f32;
            }
        } else {
            for (c, slot) in px.iter_mut().enumerate() {
                *slot = (sample_crop_bilinear(img, c, geo, u, v) * gain) as f32;
            }
        }
        px
    })
}

fn augment_label(label: &BinaryMask, geo: &Geometry, out: usize) -> BinaryMask {
    let limit = (out - 1) as f64;
    BinaryMask::from_fn(out, out, |x, y| {
        let (u, v) = geo.unrotate(x as f64, y as f64);
        let (u, v) = ((u + 0.5).floor(), (v + 0.5).floor());
        if u < 0.0 || v < 0.0 || u > limit || v > limit {
            return false;
        }
        let sx = (((u + 0.5) * geo.scale).floor() as usize).min(geo.side - 1);
        let sy = (((v + 0.5) * geo.scale).floor() as usize).min(geo.side - 1);
        let px = (geo.crop_x as isize + sx as isize) - geo.left as isize;
        let py = (geo.crop_y as isize + sy as isize) - geo.top as isize;
        px >= 0
            && py >= 0
            && (px as usize) < label.width()
            && (py as usize) < label.height()
            && label.get(px as usize, py as usize)
    })
}

/// Pad, crop, resize, rotate and scale illumination with fixed parameters.
/// Images are resampled bilinearly, the label with nearest neighbour.
pub fn augment_with(sample: &SamplePair, params: &AugmentParams, cfg: &AugmentConfig) -> Result<SamplePair> {
    cfg.validate()?;
    let (w, h) = (sample.width(), sample.height());
    let (pw, ph) = cfg.padded(w, h);
    if params.side == 0 || params.crop_x + params.side > pw || params.crop_y + params.side > ph {
        return Err(Error::invalid(format!(
            "crop {}px at ({}, {}) exceeds the {pw}x{ph} padded raster",
            params.side, params.crop_x, params.crop_y
        )));
    }
    let out = cfg.output_size;
    let theta = params.angle_deg.to_radians();
    let geo = Geometry {
        left: ((pw - w) / 2) as f64,
        top: ((ph - h) / 2) as f64,
        crop_x: params.crop_x as f64,
        crop_y: params.crop_y as f64,
        side: params.side,
        scale: params.side as f64 / out as f64,
        cos: theta.cos(),
        sin: theta.sin(),
        centre: (out as f64 - 1.0) / 2.0,
        rotate: params.angle_deg != 0.0,
    };
    SamplePair::new(
        augment_image(&sample.image_before, &geo, out, params.gain_before),
        augment_image(&sample.image_after, &geo, out, params.gain_after),
        augment_label(&sample.label, &geo, out),
        sample.origin.clone(),
    )
}
