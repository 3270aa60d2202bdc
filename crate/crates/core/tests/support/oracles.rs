//! Brute-force reference implementations, written from the set and count
//! definitions rather than from the library code.

#![allow(dead_code)]

use std::collections::HashSet;

use idan_core::imgproc::{BinaryMask, StructuringElement};
use idan_core::training::ConfusionCounts;
use rand::Rng;

pub type Point = (isize, isize);

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density))
}

/// Random odd-sided kernel with its centre set; not necessarily symmetric.
pub fn random_kernel(rng: &mut impl Rng, side: usize) -> StructuringElement {
    let mut grid: Vec<bool> = (0..side * side).map(|_| rng.gen_bool(0.5)).collect();
    grid[side * side / 2] = true;
    StructuringElement::new(side, grid).expect("valid kernel")
}

pub fn foreground(mask: &BinaryMask) -> HashSet<Point> {
    let mut s = HashSet::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                s.insert((x as isize, y as isize));
            }
        }
    }
    s
}

/// The kernel translated so its anchor sits at `(x, y)`.
pub fn translated(k: &StructuringElement, x: isize, y: isize) -> HashSet<Point> {
    let r = k.radius() as isize;
    let mut s = HashSet::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if k.is_set(dx, dy) {
                s.insert((x + dx, y + dy));
            }
        }
    }
    s
}

/// `{z | K_z ∩ R ≠ ∅}` over the raster domain.
pub fn brute_dilate(mask: &BinaryMask, k: &StructuringElement) -> BinaryMask {
    let r = foreground(mask);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        !translated(k, x as isize, y as isize).is_disjoint(&r)
    })
}

/// `{z | K_z ⊆ R}` over the raster domain.
pub fn brute_erode(mask: &BinaryMask, k: &StructuringElement) -> BinaryMask {
    let r = foreground(mask);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        translated(k, x as isize, y as isize).is_subset(&r)
    })
}

/// Symmetric difference, then dilation, then erosion, all by set definitions.
pub fn brute_difference(a: &BinaryMask, b: &BinaryMask, k: &StructuringElement) -> BinaryMask {
    let fa = foreground(a);
    let fb = foreground(b);
    let xor = BinaryMask::from_fn(a.width(), a.height(), |x, y| {
        let p = (x as isize, y as isize);
        fa.contains(&p) != fb.contains(&p)
    });
    brute_erode(&brute_dilate(&xor, k), k)
}

pub fn brute_confusion(pred: &BinaryMask, label: &BinaryMask) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            let (p, l) = (pred.get(x, y), label.get(x, y));
            if p && l {
                c.tp += 1;
            } else if !p && !l {
                c.tn += 1;
            } else if p {
                c.fp += 1;
            } else {
                c.fn_ += 1;
            }
        }
    }
    c
}

/// Accuracy, precision, recall and F1 straight from their count formulas;
/// `None` where a denominator vanishes.
pub fn reference_metrics(c: &ConfusionCounts) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
    let (tp, tn, fp, fne) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let div = |n: f64, d: f64| if d == 0.0 { None } else { Some(n / d) };
    (
        div(tp + tn, tp + tn + fp + fne),
        div(tp, tp + fp),
        div(tp, tp + fne),
        div(2.0 * tp, 2.0 * tp + fp + fne),
    )
}
