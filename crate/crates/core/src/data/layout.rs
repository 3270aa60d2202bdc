//! On-disk layout: `<root>/{A,B,label}/<id>.png` plus an `index.txt`
//! manifest of `id split` lines.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::{load_mask_png, load_png, save_mask_png, save_rgb_png, Origin, SamplePair};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "index.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<(String, Split)>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(id), Some(split), None) => entries.push((id.to_string(), split.parse()?)),
                _ => return Err(Error::Data(format!("manifest line {}: expected 'id split'", n + 1))),
            }
        }
        Ok(Self { entries })
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|(_, s)| *s == split).count()
    }

    /// Each entry becomes four quadrant entries `<id>_q{0..3}` in the same split.
    pub fn expand_quarters(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .flat_map(|(id, split)| (0..4).map(move |q| (format!("{id}_q{q}"), *split)))
                .collect(),
        }
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (id, split) in &self.entries {
            writeln!(f, "{id} {split}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    pub id: String,
    pub split: Split,
    pub sample: SamplePair,
}

pub fn write_dataset(root: impl AsRef<Path>, entries: &[DatasetEntry]) -> Result<()> {
    let root = root.as_ref();
    for sub in ["A", "B", "label"] {
        let dir = root.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut manifest = Manifest::default();
    for e in entries {
        let file = format!("{}.png", e.id);
        save_rgb_png(&e.sample.image_before, root.join("A").join(&file))?;
        save_rgb_png(&e.sample.image_after, root.join("B").join(&file))?;
        save_mask_png(&e.sample.label, root.join("label").join(&file))?;
        manifest.entries.push((e.id.clone(), e.split));
    }
    let path = root.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_string()).map_err(|e| Error::io(&path, e))
}

/// Reads every entry of the manifest, optionally restricted to one split.
pub fn read_dataset(root: impl AsRef<Path>, only: Option<Split>) -> Result<Vec<DatasetEntry>> {
    let root = root.as_ref();
    let path = root.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = Manifest::parse(&text)?;
    manifest
        .entries
        .into_iter()
        .filter(|(_, s)| only.is_none_or(|o| o == *s))
        .map(|(id, split)| {
            let file = format!("{id}.png");
            let sample = SamplePair::new(
                load_png(root.join("A").join(&file))?,
                load_png(root.join("B").join(&file))?,
                load_mask_png(root.join("label").join(&file))?,
                Origin::File(id.clone()),
            )
            .map_err(|e| Error::Data(format!("{id}: {e}")))?;
            Ok(DatasetEntry { id, split, sample })
        })
        .collect()
}
