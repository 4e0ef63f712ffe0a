//! The three CIFAR-style networks: ResNet-32, VGG-16 and ResNet-18.
//!
//! All three keep full resolution through the first stage (stride-1 stem, no max-pool) and use
//! average pooling wherever a max-pool would normally sit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ArchError, ConvSpec, DatasetSpec, FcSpec, LayerSpec, NetworkArch, PoolSpec, SkipConnection, SkipKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    ResNet32,
    Vgg16,
    ResNet18,
}

pub const PRESET_MODELS: [ModelKind; 3] = [ModelKind::ResNet32, ModelKind::Vgg16, ModelKind::ResNet18];

impl ModelKind {
    pub fn id(&self) -> &'static str {
        match self {
            ModelKind::ResNet32 => "resnet32",
            ModelKind::Vgg16 => "vgg16",
            ModelKind::ResNet18 => "resnet18",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = ArchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "resnet32" => Ok(ModelKind::ResNet32),
            "vgg16" => Ok(ModelKind::Vgg16),
            "resnet18" => Ok(ModelKind::ResNet18),
            _ => Err(ArchError::UnknownModel(s.to_string())),
        }
    }
}

/// Shipped `.arch` document for a preset (CIFAR-100 resolution).
pub fn preset_document(model: ModelKind) -> &'static str {
    match model {
        ModelKind::ResNet32 => include_str!("../../../../configs/archs/resnet32.arch"),
        ModelKind::Vgg16 => include_str!("../../../../configs/archs/vgg16.arch"),
        ModelKind::ResNet18 => include_str!("../../../../configs/archs/resnet18.arch"),
    }
}

pub fn build_preset(model: &str, dataset: &DatasetSpec) -> Result<NetworkArch, ArchError> {
    let kind: ModelKind = model.parse()?;
    // Only named datasets are presets; a hand-rolled spec is rejected here.
    let known = DatasetSpec::preset(&dataset.name)?;
    if known != *dataset {
        return Err(ArchError::UnknownDataset(dataset.name.clone()));
    }
    build(kind, dataset.clone())
}

pub(crate) fn build(kind: ModelKind, dataset: DatasetSpec) -> Result<NetworkArch, ArchError> {
    let (layers, skips) = match kind {
        ModelKind::ResNet32 => resnet32(dataset.classes),
        ModelKind::Vgg16 => vgg16(dataset.classes),
        ModelKind::ResNet18 => resnet18(dataset.classes),
    };
    NetworkArch::new(kind.id(), dataset, layers, skips)
}

fn conv3(out: usize, stride: usize) -> LayerSpec {
    LayerSpec::Conv(ConvSpec::new(out, 3, stride, 1))
}

/// Basic residual blocks: conv-relu-conv(+shortcut)-relu.
fn resnet_stages(
    layers: &mut Vec<LayerSpec>,
    skips: &mut Vec<SkipConnection>,
    widths: &[usize],
    blocks_per_stage: usize,
    mut channels: usize,
    projection: bool,
) {
    for (stage, &width) in widths.iter().enumerate() {
        for block in 0..blocks_per_stage {
            let stride = if block == 0 && stage > 0 { 2 } else { 1 };
            let from = layers.len() - 1;
            layers.push(conv3(width, stride));
            layers.push(LayerSpec::Relu);
            layers.push(conv3(width, 1));
            let to = layers.len() - 1;
            layers.push(LayerSpec::Relu);
            let kind = if stride == 1 && channels == width {
                SkipKind::Identity
            } else if projection {
                SkipKind::Project(ConvSpec::new(width, 1, stride, 0))
            } else {
                SkipKind::Pad { stride }
            };
            skips.push(SkipConnection { from, to, kind });
            channels = width;
        }
    }
}

fn resnet32(classes: usize) -> (Vec<LayerSpec>, Vec<SkipConnection>) {
    let mut layers = vec![conv3(16, 1), LayerSpec::Relu];
    let mut skips = Vec::new();
    resnet_stages(&mut layers, &mut skips, &[16, 32, 64], 5, 16, false);
    layers.push(LayerSpec::AvgPool(PoolSpec::Global));
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Fc(FcSpec::new(classes)));
    (layers, skips)
}

fn resnet18(classes: usize) -> (Vec<LayerSpec>, Vec<SkipConnection>) {
    let mut layers = vec![conv3(64, 1), LayerSpec::Relu];
    let mut skips = Vec::new();
    resnet_stages(&mut layers, &mut skips, &[64, 128, 256, 512], 2, 64, true);
    layers.push(LayerSpec::AvgPool(PoolSpec::Global));
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Fc(FcSpec::new(classes)));
    (layers, skips)
}

fn vgg16(classes: usize) -> (Vec<LayerSpec>, Vec<SkipConnection>) {
    let mut layers = Vec::new();
    for (width, reps) in [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)] {
        for _ in 0..reps {
            layers.push(LayerSpec::Conv(ConvSpec::new(width, 3, 1, 1).with_bias(true)));
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::AvgPool(PoolSpec::Window { window: 2, stride: 2 }));
    }
    layers.push(LayerSpec::Flatten);
    for _ in 0..2 {
        layers.push(LayerSpec::Fc(FcSpec::new(4096)));
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::Fc(FcSpec::new(classes)));
    (layers, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(kind: ModelKind, ds: DatasetSpec) -> (u64, u64, u64) {
        let c = build(kind, ds).unwrap().count_layers().unwrap();
        (c.params, c.flops, c.relus)
    }

    #[test]
    fn exact_counts_cifar100() {
        assert_eq!(
            counts(ModelKind::ResNet32, DatasetSpec::cifar100()),
            (467_732, 68_868_352, 303_104)
        );
        assert_eq!(
            counts(ModelKind::Vgg16, DatasetSpec::cifar100()),
            (34_006_948, 332_480_512, 284_672)
        );
        assert_eq!(
            counts(ModelKind::ResNet18, DatasetSpec::cifar100()),
            (11_210_532, 555_468_800, 557_056)
        );
    }

    #[test]
    fn exact_counts_tiny() {
        let t = DatasetSpec::tiny_imagenet();
        assert_eq!(counts(ModelKind::ResNet32, t.clone()).1, 275_460_608);
        assert_eq!(counts(ModelKind::ResNet32, t.clone()).2, 1_212_416);
        assert_eq!(
            counts(ModelKind::Vgg16, t.clone()),
            (40_708_104, 1_278_771_200, 1_114_112)
        );
        assert_eq!(counts(ModelKind::ResNet18, t).1, 2_221_772_800);
    }

    #[test]
    fn layer_census() {
        let k = build(ModelKind::ResNet32, DatasetSpec::cifar100())
            .unwrap()
            .kind_counts();
        assert_eq!((k.conv, k.relu, k.avgpool, k.fc, k.skip_conv), (31, 31, 1, 1, 0));
        let k = build(ModelKind::Vgg16, DatasetSpec::cifar100()).unwrap().kind_counts();
        assert_eq!((k.conv, k.relu, k.avgpool, k.fc, k.skip_conv), (13, 15, 5, 3, 0));
        let k = build(ModelKind::ResNet18, DatasetSpec::cifar100())
            .unwrap()
            .kind_counts();
        assert_eq!((k.conv, k.relu, k.avgpool, k.fc, k.skip_conv), (17, 17, 1, 1, 3));
    }

    #[test]
    fn unknown_names() {
        let ds = DatasetSpec::cifar100();
        assert!(matches!(build_preset("alexnet", &ds), Err(ArchError::UnknownModel(_))));
        let odd = DatasetSpec::new("mnist", 1, 28, 28, 10);
        assert!(matches!(build_preset("vgg16", &odd), Err(ArchError::UnknownDataset(_))));
    }
}
