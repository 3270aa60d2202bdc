//! Prior maps fed to the network: the feature difference map (deep features
//! of both images, differenced and closed) and the edge difference map (edge
//! masks of both images, differenced and closed).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{
    self, dilate, erode, grey_dilate, grey_erode, BinaryMask, CannyParams, RgbImage,
    StructuringElement,
};
use crate::kernels;
use crate::optim::Init;
use crate::tensor::{read_idtn, Tensor};

/// Spatial reduction between an image and its feature map.
pub const FEATURE_DOWNSAMPLE: usize = 8;

/// Feature-difference map: `(c_p, H/8, W/8)`, non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct FdMap(Tensor<f32>);

impl FdMap {
    pub fn new(t: Tensor<f32>) -> Result<Self> {
        if t.rank() != 3 {
            return Err(Error::invalid(format!("FD-map must be (C, h, w), got {:?}", t.shape())));
        }
        if t.data().iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("FD-map values must be finite and non-negative"));
        }
        Ok(Self(t))
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.0
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[0]
    }
}

/// Edge-difference map: binary, full image resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdMap(pub BinaryMask);

impl EdMap {
    pub fn mask(&self) -> &BinaryMask {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EdgeOperator {
    Canny(CannyParams),
    /// Threshold on the raw `hypot(gx, gy)` Sobel response.
    Sobel { threshold: f32 },
    /// Threshold on the raw `hypot(gx, gy)` Prewitt response.
    Prewitt { threshold: f32 },
}

impl Default for EdgeOperator {
    fn default() -> Self {
        EdgeOperator::Canny(CannyParams::default())
    }
}

impl EdgeOperator {
    pub const DEFAULT_SOBEL_THRESHOLD: f32 = 1.0;
    pub const DEFAULT_PREWITT_THRESHOLD: f32 = 0.75;

    pub fn detect(&self, img: &RgbImage) -> Result<BinaryMask> {
        let gray = imgproc::to_gray(img);
        match *self {
            EdgeOperator::Canny(p) => imgproc::canny(&gray, p),
            EdgeOperator::Sobel { threshold } => Ok(imgproc::sobel_edges(&gray, threshold)),
            EdgeOperator::Prewitt { threshold } => Ok(imgproc::prewitt_edges(&gray, threshold)),
        }
    }
}

/// Produces `(c_p, H/8, W/8)` features for an RGB image.
pub trait FeatureExtractor {
    fn channels(&self) -> usize;

    fn extract(&self, img: &RgbImage) -> Result<Tensor<f32>>;
}

/// Frozen three-stage CNN with seeded Kaiming-uniform weights, standing in
/// for a pretrained backbone: `(conv3x3, relu, maxpool2)` with channels
/// `3 -> c/4 -> c/2 -> c`.
#[derive(Clone, Debug)]
pub struct RandomCnnExtractor {
    seed: u64,
    channels: usize,
    stages: Vec<(Tensor<f32>, Tensor<f32>)>,
}

pub fn random_cnn_extractor(seed: u64, channels: usize) -> Result<RandomCnnExtractor> {
    if channels == 0 || !channels.is_multiple_of(4) {
        return Err(Error::invalid(format!(
            "extractor channel count must be a positive multiple of 4, got {channels}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = [3, channels / 4, channels / 2, channels];
    let stages = widths
        .windows(2)
        .map(|p| {
            let w = Init::KaimingUniform.sample(&[p[1], p[0], 3, 3], &mut rng);
            (w, Tensor::zeros(vec![p[1]]))
        })
        .collect();
    Ok(RandomCnnExtractor {
        seed,
        channels,
        stages,
    })
}

impl RandomCnnExtractor {
    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn check_divisible(w: usize, h: usize) -> Result<()> {
    if !w.is_multiple_of(FEATURE_DOWNSAMPLE) || !h.is_multiple_of(FEATURE_DOWNSAMPLE) {
        return Err(Error::invalid(format!(
            "image size {w}x{h} must be divisible by {FEATURE_DOWNSAMPLE}"
        )));
    }
    Ok(())
}

impl FeatureExtractor for RandomCnnExtractor {
    fn channels(&self) -> usize {
        self.channels
    }

    fn extract(&self, img: &RgbImage) -> Result<Tensor<f32>> {
        check_divisible(img.width(), img.height())?;
        let mut x = img.to_tensor().unsqueeze0();
        for (w, b) in &self.stages {
            x = kernels::conv2d(&x, w, Some(b), 1, 1)?.map(|v| v.max(0.0));
            x = kernels::max_pool2d(&x)?.0;
        }
        let (_, c, h, w) = x.dims4()?;
        x.reshape(vec![c, h, w])
    }
}

/// `|a - b|`, then dilation, then erosion, independently on every trailing
/// `(H, W)` plane. Leading axes are treated as channels.
pub fn difference_op(a: &Tensor<f32>, b: &Tensor<f32>, k: &StructuringElement) -> Result<Tensor<f32>> {
    if a.shape() != b.shape() {
        return Err(Error::shape("difference_op", a.shape(), b.shape()));
    }
    if a.rank() < 2 {
        return Err(Error::invalid("difference_op needs at least (H, W)"));
    }
    let (h, w) = (a.shape()[a.rank() - 2], a.shape()[a.rank() - 1]);
    let mut out = Vec::with_capacity(a.numel());
    for (pa, pb) in a.data().chunks(h * w).zip(b.data().chunks(h * w)) {
        let diff: Vec<f32> = pa.iter().zip(pb).map(|(x, y)| (x - y).abs()).collect();
        let closed = grey_erode(&grey_dilate(&diff, w, h, k), w, h, k);
        out.extend(closed);
    }
    Tensor::new(a.shape().to_vec(), out)
}

/// Binary form of [`difference_op`]: exclusive-or, then dilation, then erosion.
pub fn difference_op_mask(a: &BinaryMask, b: &BinaryMask, k: &StructuringElement) -> Result<BinaryMask> {
    Ok(erode(&dilate(&a.xor(b)?, k), k))
}

fn check_pair(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::shape(
            "image pair",
            &[a.height(), a.width()],
            &[b.height(), b.width()],
        ));
    }
    Ok(())
}

pub fn build_fd_map(
    img_a: &RgbImage,
    img_b: &RgbImage,
    extractor: &dyn FeatureExtractor,
    k: &StructuringElement,
) -> Result<FdMap> {
    check_pair(img_a, img_b)?;
    check_divisible(img_a.width(), img_a.height())?;
    let fa = extractor.extract(img_a)?;
    let fb = extractor.extract(img_b)?;
    fd_map_from_features(&fa, &fb, k)
}

/// FD-map from two precomputed `(c_p, h, w)` feature tensors.
pub fn fd_map_from_features(fa: &Tensor<f32>, fb: &Tensor<f32>, k: &StructuringElement) -> Result<FdMap> {
    if fa.rank() != 3 {
        return Err(Error::invalid(format!("features must be (C, h, w), got {:?}", fa.shape())));
    }
    FdMap::new(difference_op(fa, fb, k)?)
}

pub fn build_ed_map(
    img_a: &RgbImage,
    img_b: &RgbImage,
    op: &EdgeOperator,
    k: &StructuringElement,
) -> Result<EdMap> {
    check_pair(img_a, img_b)?;
    let ea = op.detect(img_a)?;
    let eb = op.detect(img_b)?;
    Ok(EdMap(difference_op_mask(&ea, &eb, k)?))
}

/// Reads externally computed features; a leading batch axis of one is dropped.
pub fn load_feature_file(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let t = read_idtn(path)?;
    match *t.shape() {
        [_, _, _] => Ok(t),
        [1, c, h, w] => t.reshape(vec![c, h, w]),
        _ => Err(Error::invalid(format!(
            "feature file must hold rank 3 or batch-1 rank 4, got {:?}",
            t.shape()
        ))),
    }
}
