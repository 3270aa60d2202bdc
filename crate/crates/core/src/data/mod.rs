//! Dataset machinery: tiling and splitting of large scenes, quadrant crops,
//! the pad/crop/resize/rotate/illuminate augmentation chain, PNG I/O, the
//! on-disk dataset layout and a synthetic change-pair generator.

mod augment;
mod io;
mod layout;
mod synth;
mod tiling;

pub use augment::{augment, augment_with, AugmentConfig, AugmentParams};
pub use io::{load_mask_png, load_png, save_gray_png, save_mask_png, save_rgb_png};
pub use layout::{read_dataset, write_dataset, DatasetEntry, Manifest, Split};
pub use synth::{synth_dataset, synth_sample, Rect};
pub use tiling::{crop_quarters, split_every_k, tile_counts, tile_grid, tile_pair, TileCounts, TileSpec};

use crate::error::{Error, Result};
use crate::imgproc::{BinaryMask, RgbImage};

/// Where a sample came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    /// Top-left pixel of a tile in the source scene.
    Tile { x: usize, y: usize },
    /// Quadrant `0..4` (TL, TR, BL, BR) of a parent sample.
    Quadrant { parent: Box<Origin>, index: usize },
    Synthetic { seed: u64, index: u64 },
    File(String),
}

/// A co-registered before/after pair and its change label.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub image_before: RgbImage,
    pub image_after: RgbImage,
    pub label: BinaryMask,
    pub origin: Origin,
}

impl SamplePair {
    pub fn new(image_before: RgbImage, image_after: RgbImage, label: BinaryMask, origin: Origin) -> Result<Self> {
        let dims = (image_before.width(), image_before.height());
        if dims != (image_after.width(), image_after.height()) || dims != (label.width(), label.height()) {
            return Err(Error::Data(format!(
                "sample rasters disagree: before {}x{}, after {}x{}, label {}x{}",
                image_before.width(),
                image_before.height(),
                image_after.width(),
                image_after.height(),
                label.width(),
                label.height()
            )));
        }
        Ok(Self {
            image_before,
            image_after,
            label,
            origin,
        })
    }

    pub fn width(&self) -> usize {
        self.label.width()
    }

    pub fn height(&self) -> usize {
        self.label.height()
    }
}
