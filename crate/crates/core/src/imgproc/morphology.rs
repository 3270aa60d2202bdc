//! Binary and grayscale morphology over a flat structuring element.
//!
//! Pixels outside the raster count as background (0) for every operation,
//! so grayscale results agree exactly with binary ones on `{0, 1}` input.

use super::BinaryMask;
use crate::error::{Error, Result};

/// Flat odd-sided kernel whose centre is always set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    side: usize,
    grid: Vec<bool>,
}

impl StructuringElement {
    pub fn new(side: usize, grid: Vec<bool>) -> Result<Self> {
        if side == 0 || side.is_multiple_of(2) {
            return Err(Error::invalid(format!("structuring element side must be odd, got {side}")));
        }
        if grid.len() != side * side {
            return Err(Error::invalid("structuring element grid has the wrong size"));
        }
        if !grid[side * side / 2] {
            return Err(Error::invalid("structuring element centre must be set"));
        }
        Ok(Self { side, grid })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, vec![true; side * side])
    }

    pub fn cross(side: usize) -> Result<Self> {
        let c = side / 2;
        Self::new(side, (0..side * side).map(|i| i / side == c || i % side == c).collect())
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> usize {
        self.side / 2
    }

    pub fn is_set(&self, dx: isize, dy: isize) -> bool {
        let r = self.radius() as isize;
        if dx.abs() > r || dy.abs() > r {
            return false;
        }
        self.grid[((dy + r) as usize) * self.side + (dx + r) as usize]
    }

    /// `(dx, dy)` offsets of the footprint relative to the anchor.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let r = self.radius() as isize;
        (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| self.is_set(dx, dy))
            .collect()
    }
}

fn window_reduce(
    plane: &[f32],
    width: usize,
    height: usize,
    k: &StructuringElement,
    init: f32,
    f: impl Fn(f32, f32) -> f32,
) -> Vec<f32> {
    let offsets = k.offsets();
    let mut out = Vec::with_capacity(plane.len());
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut acc = init;
            for &(dx, dy) in &offsets {
                let (sx, sy) = (x + dx, y + dy);
                let v = if sx < 0 || sy < 0 || sx >= width as isize || sy >= height as isize {
                    0.0
                } else {
                    plane[sy as usize * width + sx as usize]
                };
                acc = f(acc, v);
            }
            out.push(acc);
        }
    }
    out
}

/// Windowed maximum over the footprint.
pub fn grey_dilate(plane: &[f32], width: usize, height: usize, k: &StructuringElement) -> Vec<f32> {
    window_reduce(plane, width, height, k, f32::NEG_INFINITY, f32::max)
}

/// Windowed minimum over the footprint.
pub fn grey_erode(plane: &[f32], width: usize, height: usize, k: &StructuringElement) -> Vec<f32> {
    window_reduce(plane, width, height, k, f32::INFINITY, f32::min)
}

/// 1 where the translated footprint meets the foreground.
pub fn dilate(mask: &BinaryMask, k: &StructuringElement) -> BinaryMask {
    let offsets = k.offsets();
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        offsets.iter().any(|&(dx, dy)| {
            let (sx, sy) = (x as isize + dx, y as isize + dy);
            sx >= 0 && sy >= 0 && sx < w && sy < h && mask.get(sx as usize, sy as usize)
        })
    })
}

/// 1 where the whole translated footprint lies inside the foreground.
pub fn erode(mask: &BinaryMask, k: &StructuringElement) -> BinaryMask {
    let offsets = k.offsets();
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        offsets.iter().all(|&(dx, dy)| {
            let (sx, sy) = (x as isize + dx, y as isize + dy);
            sx >= 0 && sy >= 0 && sx < w && sy < h && mask.get(sx as usize, sy as usize)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_validation() {
        assert!(StructuringElement::square(2).is_err());
        assert!(StructuringElement::new(3, vec![true, true, true, true, false, true, true, true, true]).is_err());
        assert_eq!(StructuringElement::cross(3).unwrap().offsets().len(), 5);
    }

    #[test]
    fn dilate_examples() {
        let k = StructuringElement::square(3).unwrap();
        assert!(dilate(&BinaryMask::zeros(5, 5), &k).is_empty());
        let dot = BinaryMask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        let out = dilate(&dot, &k);
        let block = BinaryMask::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y));
        assert_eq!(out, block);
    }

    #[test]
    fn erode_examples() {
        let k = StructuringElement::square(3).unwrap();
        let full = BinaryMask::from_fn(5, 4, |_, _| true);
        let want = BinaryMask::from_fn(5, 4, |x, y| (1..4).contains(&x) && (1..3).contains(&y));
        assert_eq!(erode(&full, &k), want);
        let dot = BinaryMask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        assert!(erode(&dot, &k).is_empty());
    }

    #[test]
    fn grey_agrees_with_binary_on_binary_input() {
        let k = StructuringElement::cross(3).unwrap();
        let m = BinaryMask::from_fn(7, 6, |x, y| (x * 7 + y * 3) % 5 < 2);
        let f = m.to_float();
        let d = grey_dilate(f.pixels(), 7, 6, &k);
        let e = grey_erode(f.pixels(), 7, 6, &k);
        assert_eq!(d, dilate(&m, &k).to_float().into_pixels());
        assert_eq!(e, erode(&m, &k).to_float().into_pixels());
    }
}
