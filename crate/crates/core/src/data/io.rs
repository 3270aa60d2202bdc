use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::imgproc::{BinaryMask, GrayImage, RgbImage};

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Loads any 8/16-bit PNG as RGB in `[0, 1]`; gray is replicated and alpha dropped.
pub fn load_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(RgbImage::from_fn(w, h, |x, y| {
        let p = img.get_pixel(x as u32, y as u32).0;
        [p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0]
    }))
}

/// Loads a label raster; any non-zero luma is foreground.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(BinaryMask::from_fn(w, h, |x, y| img.get_pixel(x as u32, y as u32).0[0] > 0))
}

pub fn save_rgb_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = ImageBuffer::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let p = img.pixel(x as usize, y as usize);
        Rgb([to_u8(p[0]), to_u8(p[1]), to_u8(p[2])])
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

pub fn save_gray_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = ImageBuffer::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        Luma([to_u8(img.get(x as usize, y as usize))])
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Writes foreground as 255 and background as 0.
pub fn save_mask_png(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = ImageBuffer::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) { 255u8 } else { 0 }])
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_lossless_for_8_bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(5, 3, |x, y| [x as f32 * 51.0 / 255.0, y as f32 / 255.0, 1.0]);
        let p = dir.path().join("a.png");
        save_rgb_png(&img, &p).unwrap();
        assert_eq!(load_png(&p).unwrap(), img);

        let m = BinaryMask::from_fn(4, 4, |x, y| x == y);
        let q = dir.path().join("m.png");
        save_mask_png(&m, &q).unwrap();
        assert_eq!(load_mask_png(&q).unwrap(), m);
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_png("/nonexistent/x.png").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.png"));
    }
}
