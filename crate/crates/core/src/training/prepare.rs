use crate::data::SamplePair;
use crate::diffmap::{build_ed_map, build_fd_map, EdgeOperator, FeatureExtractor};
use crate::error::Result;
use crate::imgproc::{BinaryMask, StructuringElement};
use crate::tensor::Tensor;

/// Everything needed to build the FD and ED priors of a pair.
pub struct PriorBuilder {
    pub extractor: Box<dyn FeatureExtractor + Send + Sync>,
    pub edge: EdgeOperator,
    pub kernel: StructuringElement,
}

impl PriorBuilder {
    /// `(c_p, H/8, W/8)` FD-map and `(1, H, W)` ED-map tensors.
    pub fn build(&self, sample: &SamplePair) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let fd = build_fd_map(&sample.image_before, &sample.image_after, self.extractor.as_ref(), &self.kernel)?;
        let ed = build_ed_map(&sample.image_before, &sample.image_after, &self.edge, &self.kernel)?;
        Ok((fd.into_tensor(), ed.mask().to_tensor()))
    }
}

/// A sample converted to tensors once, with its priors cached.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    pub img_a: Tensor<f32>,
    pub img_b: Tensor<f32>,
    pub label: Tensor<f32>,
    pub label_mask: BinaryMask,
    pub fd: Option<Tensor<f32>>,
    pub ed: Option<Tensor<f32>>,
}

/// Converts samples; priors are built only when `priors` is given.
pub fn prepare(samples: &[SamplePair], priors: Option<&PriorBuilder>) -> Result<Vec<PreparedSample>> {
    samples
        .iter()
        .map(|s| {
            let (fd, ed) = match priors {
                Some(p) => {
                    let (fd, ed) = p.build(s)?;
                    (Some(fd), Some(ed))
                }
                None => (None, None),
            };
            Ok(PreparedSample {
                img_a: s.image_before.to_tensor(),
                img_b: s.image_after.to_tensor(),
                label: s.label.to_tensor(),
                label_mask: s.label.clone(),
                fd,
                ed,
            })
        })
        .collect()
}
