use serde::{Deserialize, Serialize};

use super::ArchError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
}

impl DatasetSpec {
    pub fn new(name: impl Into<String>, channels: usize, height: usize, width: usize, classes: usize) -> Self {
        DatasetSpec {
            name: name.into(),
            channels,
            height,
            width,
            classes,
        }
    }

    pub fn cifar100() -> Self {
        Self::new("cifar100", 3, 32, 32, 100)
    }

    pub fn tiny_imagenet() -> Self {
        Self::new("tiny", 3, 64, 64, 200)
    }

    pub fn imagenet() -> Self {
        Self::new("imagenet", 3, 224, 224, 1000)
    }

    /// Resolves a preset by name; accepts the short aliases used on the command line.
    pub fn preset(name: &str) -> Result<Self, ArchError> {
        match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "c100" | "cifar100" => Ok(Self::cifar100()),
            "tiny" | "tinyimagenet" => Ok(Self::tiny_imagenet()),
            "imagenet" => Ok(Self::imagenet()),
            _ => Err(ArchError::UnknownDataset(name.to_string())),
        }
    }

    pub fn preset_names() -> [&'static str; 3] {
        ["cifar100", "tiny", "imagenet"]
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }
}
