use serde::{Deserialize, Serialize};

use super::{Origin, SamplePair};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileSpec {
    pub window: usize,
    pub stride: usize,
    pub test_every_k: usize,
}

impl Default for TileSpec {
    fn default() -> Self {
        Self {
            window: 512,
            stride: 512,
            test_every_k: 5,
        }
    }
}

impl TileSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 || self.test_every_k == 0 {
            return Err(Error::invalid("window, stride and test_every_k must be positive"));
        }
        Ok(())
    }
}

fn tiles_along(len: usize, spec: &TileSpec) -> usize {
    if len < spec.window {
        0
    } else {
        (len - spec.window) / spec.stride + 1
    }
}

/// Top-left corners of every full window, row-major. Partial windows at the
/// right and bottom borders are dropped.
pub fn tile_grid(width: usize, height: usize, spec: &TileSpec) -> Result<Vec<(usize, usize)>> {
    spec.validate()?;
    let (nx, ny) = (tiles_along(width, spec), tiles_along(height, spec));
    Ok((0..ny)
        .flat_map(|ty| (0..nx).map(move |tx| (tx * spec.stride, ty * spec.stride)))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileCounts {
    pub tiles: usize,
    pub train: usize,
    pub test: usize,
}

/// Tile and split counts from raster dimensions alone.
pub fn tile_counts(width: usize, height: usize, spec: &TileSpec) -> Result<TileCounts> {
    let tiles = tile_grid(width, height, spec)?.len();
    let test = tiles / spec.test_every_k;
    Ok(TileCounts {
        tiles,
        train: tiles - test,
        test,
    })
}

pub fn tile_pair(
    img_a: &crate::imgproc::RgbImage,
    img_b: &crate::imgproc::RgbImage,
    label: &crate::imgproc::BinaryMask,
    spec: &TileSpec,
) -> Result<Vec<SamplePair>> {
    // validates that the three rasters agree
    let whole = SamplePair::new(img_a.clone(), img_b.clone(), label.clone(), Origin::Tile { x: 0, y: 0 })?;
    let grid = tile_grid(whole.width(), whole.height(), spec)?;
    if grid.is_empty() {
        log::warn!(
            "raster {}x{} is smaller than the {} px window; no tiles produced",
            whole.width(),
            whole.height(),
            spec.window
        );
    }
    let w = spec.window;
    grid.into_iter()
        .map(|(x, y)| {
            SamplePair::new(
                img_a.crop(x, y, w, w)?,
                img_b.crop(x, y, w, w)?,
                label.crop(x, y, w, w)?,
                Origin::Tile { x, y },
            )
        })
        .collect()
}

/// Items at 1-based positions divisible by `k` go to the test split.
pub fn split_every_k<T>(items: Vec<T>, k: usize) -> Result<(Vec<T>, Vec<T>)> {
    if k == 0 {
        return Err(Error::invalid("split period must be positive"));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, item) in items.into_iter().enumerate() {
        if (i + 1) % k == 0 {
            test.push(item);
        } else {
            train.push(item);
        }
    }
    Ok((train, test))
}

/// Non-overlapping quadrants in TL, TR, BL, BR order.
pub fn crop_quarters(sample: &SamplePair) -> Result<[SamplePair; 4]> {
    let (w, h) = (sample.width(), sample.height());
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::Data(format!("cannot quarter a {w}x{h} sample")));
    }
    let (qw, qh) = (w / 2, h / 2);
    let quad = |index: usize| -> Result<SamplePair> {
        let (x, y) = ((index % 2) * qw, (index / 2) * qh);
        SamplePair::new(
            sample.image_before.crop(x, y, qw, qh)?,
            sample.image_after.crop(x, y, qw, qh)?,
            sample.label.crop(x, y, qw, qh)?,
            Origin::Quadrant {
                parent: Box::new(sample.origin.clone()),
                index,
            },
        )
    };
    Ok([quad(0)?, quad(1)?, quad(2)?, quad(3)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgproc::{BinaryMask, RgbImage};

    #[test]
    fn count_examples() {
        let spec = TileSpec::default();
        assert_eq!(tile_counts(512, 512, &spec).unwrap().tiles, 1);
        assert_eq!(tile_counts(511, 511, &spec).unwrap().tiles, 0);
        let whu = tile_counts(32507, 15354, &spec).unwrap();
        assert_eq!((whu.tiles, whu.train, whu.test), (1827, 1462, 365));
    }

    #[test]
    fn split_examples() {
        let (train, test) = split_every_k((1..=4).collect(), 5).unwrap();
        assert_eq!((train.len(), test.len()), (4, 0));
        let (_, test) = split_every_k((1..=10).collect::<Vec<_>>(), 5).unwrap();
        assert_eq!(test, vec![5, 10]);
    }

    #[test]
    fn small_raster_gives_no_tiles() {
        let a = RgbImage::zeros(7, 7);
        let m = BinaryMask::zeros(7, 7);
        let spec = TileSpec {
            window: 8,
            stride: 8,
            test_every_k: 5,
        };
        assert!(tile_pair(&a, &a, &m, &spec).unwrap().is_empty());
    }

    #[test]
    fn quarters_reassemble() {
        let a = RgbImage::from_fn(6, 4, |x, y| [x as f32 / 6.0, y as f32 / 4.0, 0.5]);
        let m = BinaryMask::from_fn(6, 4, |x, y| (x + y) % 3 == 0);
        let s = SamplePair::new(a.clone(), a.clone(), m.clone(), Origin::File("x".into())).unwrap();
        let q = crop_quarters(&s).unwrap();
        for y in 0..4 {
            for x in 0..6 {
                let part = &q[(y / 2) * 2 + x / 3];
                assert_eq!(part.image_before.pixel(x % 3, y % 2), a.pixel(x, y));
                assert_eq!(part.label.get(x % 3, y % 2), m.get(x, y));
            }
        }
    }
}
