//! Run configuration: a TOML file with one section per pipeline stage.
//! Every key is optional; unknown keys are rejected.

use std::path::Path;

use idan_core::data::{AugmentConfig, TileSpec};
use idan_core::diffmap::{random_cnn_extractor, EdgeOperator};
use idan_core::imgproc::{CannyParams, StructuringElement};
use idan_core::model::{ModelConfig, UNetConfig};
use idan_core::training::{PriorBuilder, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub augment: AugmentSection,
    pub tile: TileSpec,
    pub diffmap: DiffmapSection,
    pub data: DataSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub in_channels: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub head_channels: usize,
    pub fda: bool,
    pub ec: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let u = UNetConfig::desk();
        Self {
            in_channels: u.in_channels,
            base_channels: u.base_channels,
            depth: u.depth,
            head_channels: u.head_channels,
            fda: true,
            ec: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    /// Augmented copies added per training sample; 0 disables augmentation.
    pub copies: usize,
    pub pad_to: usize,
    pub crop_scale: (f64, f64),
    pub output_size: usize,
    pub rotation_deg: (f64, f64),
    pub illumination: (f64, f64),
}

impl Default for AugmentSection {
    fn default() -> Self {
        let a = AugmentConfig::default();
        Self {
            copies: 0,
            pad_to: a.pad_to,
            crop_scale: a.crop_scale,
            output_size: a.output_size,
            rotation_deg: a.rotation_deg,
            illumination: a.illumination,
        }
    }
}

impl AugmentSection {
    pub fn params(&self) -> AugmentConfig {
        AugmentConfig {
            pad_to: self.pad_to,
            crop_scale: self.crop_scale,
            output_size: self.output_size,
            rotation_deg: self.rotation_deg,
            illumination: self.illumination,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Canny,
    Sobel,
    Prewitt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffmapSection {
    pub edge: EdgeKind,
    pub canny_sigma: f32,
    pub canny_low: f32,
    pub canny_high: f32,
    pub sobel_threshold: f32,
    pub prewitt_threshold: f32,
    /// `random:<seed>:<channels>`, or `file:...` for the diffmap command.
    pub extractor: String,
    /// Side of the square structuring element.
    pub kernel: usize,
}

impl Default for DiffmapSection {
    fn default() -> Self {
        let c = CannyParams::default();
        Self {
            edge: EdgeKind::Canny,
            canny_sigma: c.sigma,
            canny_low: c.low,
            canny_high: c.high,
            sobel_threshold: EdgeOperator::DEFAULT_SOBEL_THRESHOLD,
            prewitt_threshold: EdgeOperator::DEFAULT_PREWITT_THRESHOLD,
            extractor: "random:7:16".into(),
            kernel: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Image side used by the synth command.
    pub size: usize,
    pub count: usize,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            size: 64,
            count: 250,
            seed: 42,
        }
    }
}

/// A parsed `--extractor` value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExtractorSpec {
    Random { seed: u64, channels: usize },
    /// Either one file holding both feature stacks as `(2, C, h, w)`, or two files.
    Files(Vec<String>),
}

impl std::str::FromStr for ExtractorSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Usage(format!("bad extractor '{s}': expected random:<seed>:<c_p> or file:<path>[,<path>]"));
        if let Some(rest) = s.strip_prefix("random:") {
            let (seed, channels) = rest.split_once(':').ok_or_else(bad)?;
            return Ok(ExtractorSpec::Random {
                seed: seed.parse().map_err(|_| bad())?,
                channels: channels.parse().map_err(|_| bad())?,
            });
        }
        if let Some(rest) = s.strip_prefix("file:") {
            let files: Vec<String> = rest.split(',').map(str::to_string).collect();
            if files.is_empty() || files.len() > 2 || files.iter().any(String::is_empty) {
                return Err(bad());
            }
            return Ok(ExtractorSpec::Files(files));
        }
        Err(bad())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: idan_core::Error| CliError::Config(e.to_string());
        self.model_config()?.validate().map_err(cfg)?;
        self.train.validate().map_err(cfg)?;
        self.augment.params().validate().map_err(cfg)?;
        self.tile.validate().map_err(cfg)?;
        self.edge_operator()?;
        self.kernel()?;
        self.extractor()?;
        Ok(())
    }

    pub fn unet(&self) -> UNetConfig {
        UNetConfig {
            in_channels: self.model.in_channels,
            base_channels: self.model.base_channels,
            depth: self.model.depth,
            head_channels: self.model.head_channels,
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let fd_channels = match self.extractor()? {
            ExtractorSpec::Random { channels, .. } => channels,
            // feature files are only usable by the diffmap command
            ExtractorSpec::Files(_) if self.model.fda || self.model.ec => {
                return Err(CliError::Config("training needs a random:<seed>:<c_p> extractor".into()))
            }
            ExtractorSpec::Files(_) => 0,
        };
        Ok(ModelConfig {
            unet: self.unet(),
            fda: self.model.fda,
            ec: self.model.ec,
            fd_channels: if self.model.fda || self.model.ec { fd_channels } else { 0 },
        })
    }

    pub fn extractor(&self) -> Result<ExtractorSpec, CliError> {
        self.diffmap.extractor.parse().map_err(|e: CliError| CliError::Config(e.to_string()))
    }

    pub fn edge_operator(&self) -> Result<EdgeOperator, CliError> {
        let d = &self.diffmap;
        let op = match d.edge {
            EdgeKind::Canny => {
                let p = CannyParams {
                    sigma: d.canny_sigma,
                    low: d.canny_low,
                    high: d.canny_high,
                };
                p.validate().map_err(|e| CliError::Config(e.to_string()))?;
                EdgeOperator::Canny(p)
            }
            EdgeKind::Sobel => EdgeOperator::Sobel {
                threshold: d.sobel_threshold,
            },
            EdgeKind::Prewitt => EdgeOperator::Prewitt {
                threshold: d.prewitt_threshold,
            },
        };
        Ok(op)
    }

    pub fn kernel(&self) -> Result<StructuringElement, CliError> {
        StructuringElement::square(self.diffmap.kernel).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Prior builder for training and evaluation, or `None` for a plain model.
    pub fn prior_builder(&self) -> Result<Option<PriorBuilder>, CliError> {
        if !self.model_config()?.uses_priors() {
            return Ok(None);
        }
        let ExtractorSpec::Random { seed, channels } = self.extractor()? else {
            return Err(CliError::Config("training needs a random:<seed>:<c_p> extractor".into()));
        };
        Ok(Some(PriorBuilder {
            extractor: Box::new(random_cnn_extractor(seed, channels).map_err(|e| CliError::Config(e.to_string()))?),
            edge: self.edge_operator()?,
            kernel: self.kernel()?,
        }))
    }
}
