//! Network architectures and the parameter / FLOP / ReLU counts derived from them.
//!
//! FLOPs follow the multiply-accumulate convention: one MAC of a convolution or
//! fully-connected layer counts as one FLOP. Bias additions, pooling and residual
//! additions are free.

mod blocks;
mod dataset;
mod format;
pub mod plain;
mod presets;
mod weights;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blocks::{ActivationId, Footprint, LinearBlock, Segmentation};
pub use dataset::DatasetSpec;
pub use format::{parse_arch, serialize_arch};
pub use presets::{build_preset, preset_document, ModelKind, PRESET_MODELS};
pub use weights::{LayerWeights, Weights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("unknown model `{0}` (expected one of: resnet32, vgg16, resnet18)")]
    UnknownModel(String),
    #[error("unknown dataset `{0}` (expected one of: cifar100, tiny, imagenet)")]
    UnknownDataset(String),
    #[error("shape mismatch at {location}: {detail}")]
    ShapeMismatch { location: String, detail: String },
    #[error("invalid layer {index}: {detail}")]
    InvalidLayer { index: usize, detail: String },
    #[error("resolution {height}x{width} is incompatible with `{arch}`: {detail}")]
    IncompatibleResolution {
        arch: String,
        height: usize,
        width: usize,
        detail: String,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported skip connection {from}->{to}: {detail}")]
    UnsupportedSkip { from: usize, to: usize, detail: String },
}

impl ArchError {
    fn shape(location: impl Into<String>, detail: impl Into<String>) -> Self {
        ArchError::ShapeMismatch {
            location: location.into(),
            detail: detail.into(),
        }
    }
}

/// Tensor shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Spatial { c, h, w } => write!(f, "{c}x{h}x{w}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    /// Zero until resolved by shape inference.
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
}

impl ConvSpec {
    pub fn new(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels: 0,
            out_channels,
            kernel,
            stride,
            padding,
            bias: false,
        }
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn params(&self) -> u64 {
        let k = (self.kernel * self.kernel * self.in_channels * self.out_channels) as u64;
        k + if self.bias { self.out_channels as u64 } else { 0 }
    }

    fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < self.kernel || pw < self.kernel {
            return None;
        }
        Some((
            (ph - self.kernel) / self.stride + 1,
            (pw - self.kernel) / self.stride + 1,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcSpec {
    /// Zero until resolved by shape inference.
    pub in_features: usize,
    pub out_features: usize,
    pub bias: bool,
}

impl FcSpec {
    pub fn new(out_features: usize) -> Self {
        FcSpec {
            in_features: 0,
            out_features,
            bias: true,
        }
    }

    pub fn params(&self) -> u64 {
        (self.in_features * self.out_features) as u64 + if self.bias { self.out_features as u64 } else { 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolSpec {
    Window {
        window: usize,
        stride: usize,
    },
    /// Pools the whole spatial extent down to 1x1.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv(ConvSpec),
    Fc(FcSpec),
    Relu,
    AvgPool(PoolSpec),
    Flatten,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv(_) => "conv",
            LayerSpec::Fc(_) => "fc",
            LayerSpec::Relu => "relu",
            LayerSpec::AvgPool(_) => "avgpool",
            LayerSpec::Flatten => "flatten",
        }
    }

    pub fn is_relu(&self) -> bool {
        matches!(self, LayerSpec::Relu)
    }

    pub fn params(&self) -> u64 {
        match self {
            LayerSpec::Conv(c) => c.params(),
            LayerSpec::Fc(f) => f.params(),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipKind {
    /// Plain identity: shapes must already agree.
    Identity,
    /// Spatial subsampling by `stride` plus zero-filled extra channels.
    Pad { stride: usize },
    /// Projection through a (typically 1x1) convolution.
    Project(ConvSpec),
}

/// Adds the (shortcut-transformed) output of layer `from` to the output of layer `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipConnection {
    pub from: usize,
    pub to: usize,
    pub kind: SkipKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkArch {
    pub name: String,
    pub input: DatasetSpec,
    pub layers: Vec<LayerSpec>,
    pub skips: Vec<SkipConnection>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounts {
    pub params: u64,
    pub flops: u64,
    pub relus: u64,
}

/// Layer census in the `(#Conv, #ReLU, #AvgPool, #FC)` order, with skip projections separate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub conv: usize,
    pub relu: usize,
    pub avgpool: usize,
    pub fc: usize,
    pub skip_conv: usize,
}

impl NetworkArch {
    /// Builds an architecture, resolving input widths and shape-checking it end to end.
    pub fn new(
        name: impl Into<String>,
        input: DatasetSpec,
        layers: Vec<LayerSpec>,
        skips: Vec<SkipConnection>,
    ) -> Result<Self, ArchError> {
        let mut arch = NetworkArch {
            name: name.into(),
            input,
            layers,
            skips,
        };
        arch.resolve()?;
        Ok(arch)
    }

    pub fn input_shape(&self) -> Shape {
        Shape::Spatial {
            c: self.input.channels,
            h: self.input.height,
            w: self.input.width,
        }
    }

    /// Output shape of every layer (after any skip merged into it).
    pub fn layer_shapes(&self) -> Result<Vec<Shape>, ArchError> {
        let mut copy = self.clone();
        copy.resolve_inner()
    }

    pub fn output_shape(&self) -> Result<Shape, ArchError> {
        Ok(self
            .layer_shapes()?
            .last()
            .copied()
            .unwrap_or_else(|| self.input_shape()))
    }

    /// Shape of the tensor feeding layer `index`.
    pub fn input_shape_of(&self, shapes: &[Shape], index: usize) -> Shape {
        if index == 0 {
            self.input_shape()
        } else {
            shapes[index - 1]
        }
    }

    pub fn skips_into(&self, to: usize) -> impl Iterator<Item = &SkipConnection> {
        self.skips.iter().filter(move |s| s.to == to)
    }

    pub fn kind_counts(&self) -> KindCounts {
        let mut k = KindCounts::default();
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv(_) => k.conv += 1,
                LayerSpec::Fc(_) => k.fc += 1,
                LayerSpec::Relu => k.relu += 1,
                LayerSpec::AvgPool(_) => k.avgpool += 1,
                LayerSpec::Flatten => {}
            }
        }
        k.skip_conv = self
            .skips
            .iter()
            .filter(|s| matches!(s.kind, SkipKind::Project(_)))
            .count();
        k
    }

    /// Number of weighted (Conv/FC) layers including skip projections.
    pub fn linear_layers(&self) -> usize {
        let k = self.kind_counts();
        k.conv + k.fc + k.skip_conv
    }

    pub fn count_layers(&self) -> Result<LayerCounts, ArchError> {
        let shapes = self.layer_shapes()?;
        let mut counts = LayerCounts::default();
        for (i, layer) in self.layers.iter().enumerate() {
            let out = shapes[i];
            let input = self.input_shape_of(&shapes, i);
            match layer {
                LayerSpec::Conv(c) => {
                    counts.params += c.params();
                    counts.flops += conv_macs(c, out);
                }
                LayerSpec::Fc(f) => {
                    counts.params += f.params();
                    counts.flops += (f.in_features * f.out_features) as u64;
                }
                LayerSpec::Relu => counts.relus += input.len() as u64,
                LayerSpec::AvgPool(_) | LayerSpec::Flatten => {}
            }
        }
        for skip in &self.skips {
            if let SkipKind::Project(c) = skip.kind {
                counts.params += c.params();
                counts.flops += conv_macs(&c, shapes[skip.to]);
            }
        }
        Ok(counts)
    }

    /// Re-infers the same layer list at a new input resolution and class count.
    pub fn scale_to_input(&self, dataset: &DatasetSpec) -> Result<NetworkArch, ArchError> {
        let mut layers = self.layers.clone();
        for layer in layers.iter_mut() {
            match layer {
                LayerSpec::Conv(c) => c.in_channels = 0,
                LayerSpec::Fc(f) => f.in_features = 0,
                _ => {}
            }
        }
        if let Some(LayerSpec::Fc(f)) = layers.iter_mut().rev().find(|l| matches!(l, LayerSpec::Fc(_))) {
            f.out_features = dataset.classes;
        }
        let mut skips = self.skips.clone();
        for s in skips.iter_mut() {
            if let SkipKind::Project(c) = &mut s.kind {
                c.in_channels = 0;
            }
        }
        let scaled = NetworkArch {
            name: self.name.clone(),
            input: dataset.clone(),
            layers,
            skips,
        };
        let mut resolved = scaled;
        match resolved.resolve() {
            Ok(()) => Ok(resolved),
            Err(ArchError::ShapeMismatch { location, detail }) => Err(ArchError::IncompatibleResolution {
                arch: self.name.clone(),
                height: dataset.height,
                width: dataset.width,
                detail: format!("{location}: {detail}"),
            }),
            Err(e) => Err(e),
        }
    }

    pub fn segmentation(&self) -> Result<Segmentation, ArchError> {
        Segmentation::new(self)
    }

    fn resolve(&mut self) -> Result<(), ArchError> {
        self.resolve_inner().map(|_| ())
    }

    fn resolve_inner(&mut self) -> Result<Vec<Shape>, ArchError> {
        let d = &self.input;
        if d.channels == 0 || d.height == 0 || d.width == 0 || d.classes == 0 {
            return Err(ArchError::shape(
                "input",
                format!("dataset `{}` has a zero dimension", d.name),
            ));
        }
        if self.layers.is_empty() {
            return Err(ArchError::shape("network", "no layers"));
        }
        for s in &self.skips {
            if s.from >= s.to || s.to >= self.layers.len() {
                return Err(ArchError::shape(
                    format!("skip {}->{}", s.from, s.to),
                    "skip must point forward to an existing layer",
                ));
            }
        }
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.layers.len());
        let mut current = self.input_shape();
        for i in 0..self.layers.len() {
            let layer = &mut self.layers[i];
            let out = infer_layer(i, layer, current)?;
            for s in self.skips.iter_mut().filter(|s| s.to == i) {
                infer_shortcut(s, shapes[s.from], out)?;
            }
            shapes.push(out);
            current = out;
        }
        if current.len() != self.input.classes {
            return Err(ArchError::shape(
                "output",
                format!(
                    "network produces {} values but `{}` has {} classes",
                    current.len(),
                    self.input.name,
                    self.input.classes
                ),
            ));
        }
        Ok(shapes)
    }
}

fn conv_macs(c: &ConvSpec, out: Shape) -> u64 {
    let (oh, ow) = match out {
        Shape::Spatial { h, w, .. } => (h, w),
        Shape::Flat(_) => (1, 1),
    };
    (oh * ow * c.out_channels * c.kernel * c.kernel * c.in_channels) as u64
}

fn infer_layer(index: usize, layer: &mut LayerSpec, input: Shape) -> Result<Shape, ArchError> {
    let bad = |detail: String| ArchError::InvalidLayer { index, detail };
    match layer {
        LayerSpec::Conv(c) => {
            let Shape::Spatial { c: ic, h, w } = input else {
                return Err(ArchError::shape(
                    format!("layer {index} (conv)"),
                    format!("expects a spatial input, got {input}"),
                ));
            };
            check_conv(c).map_err(bad)?;
            if c.in_channels == 0 {
                c.in_channels = ic;
            } else if c.in_channels != ic {
                return Err(ArchError::shape(
                    format!("layer {index} (conv)"),
                    format!("declared in={} but input has {ic} channels", c.in_channels),
                ));
            }
            let (oh, ow) = c.output_dims(h, w).ok_or_else(|| {
                ArchError::shape(
                    format!("layer {index} (conv)"),
                    format!("kernel {} larger than padded input {h}x{w}", c.kernel),
                )
            })?;
            Ok(Shape::Spatial {
                c: c.out_channels,
                h: oh,
                w: ow,
            })
        }
        LayerSpec::Fc(f) => {
            if f.out_features == 0 {
                return Err(bad("fc out must be positive".into()));
            }
            let n = input.len();
            if f.in_features == 0 {
                f.in_features = n;
            } else if f.in_features != n {
                return Err(ArchError::shape(
                    format!("layer {index} (fc)"),
                    format!("declared in={} but input has {n} values", f.in_features),
                ));
            }
            Ok(Shape::Flat(f.out_features))
        }
        LayerSpec::Relu => Ok(input),
        LayerSpec::Flatten => Ok(Shape::Flat(input.len())),
        LayerSpec::AvgPool(p) => {
            let Shape::Spatial { c, h, w } = input else {
                return Err(ArchError::shape(
                    format!("layer {index} (avgpool)"),
                    format!("expects a spatial input, got {input}"),
                ));
            };
            match *p {
                PoolSpec::Global => Ok(Shape::Spatial { c, h: 1, w: 1 }),
                PoolSpec::Window { window, stride } => {
                    if window == 0 || stride == 0 {
                        return Err(bad("avgpool window and stride must be positive".into()));
                    }
                    if h < window || w < window || (h - window) % stride != 0 || (w - window) % stride != 0 {
                        return Err(ArchError::shape(
                            format!("layer {index} (avgpool)"),
                            format!("window {window}/stride {stride} does not tile {h}x{w}"),
                        ));
                    }
                    Ok(Shape::Spatial {
                        c,
                        h: (h - window) / stride + 1,
                        w: (w - window) / stride + 1,
                    })
                }
            }
        }
    }
}

fn check_conv(c: &ConvSpec) -> Result<(), String> {
    if c.out_channels == 0 {
        return Err("conv out must be positive".into());
    }
    if c.kernel == 0 {
        return Err("conv kernel must be positive".into());
    }
    if c.stride == 0 {
        return Err("conv stride must be at least 1".into());
    }
    Ok(())
}

fn infer_shortcut(skip: &mut SkipConnection, src: Shape, target: Shape) -> Result<(), ArchError> {
    let loc = format!("skip {}->{}", skip.from, skip.to);
    let shortcut = match &mut skip.kind {
        SkipKind::Identity => src,
        SkipKind::Pad { stride } => {
            let (Shape::Spatial { c, h, w }, Shape::Spatial { c: tc, .. }) = (src, target) else {
                return Err(ArchError::shape(loc, "pad shortcut needs spatial tensors"));
            };
            if *stride == 0 {
                return Err(ArchError::shape(loc, "pad stride must be at least 1"));
            }
            if c > tc {
                return Err(ArchError::shape(
                    loc,
                    format!("pad shortcut cannot shrink {c} channels to {tc}"),
                ));
            }
            Shape::Spatial {
                c: tc,
                h: h.div_ceil(*stride),
                w: w.div_ceil(*stride),
            }
        }
        SkipKind::Project(conv) => {
            let Shape::Spatial { c: ic, h, w } = src else {
                return Err(ArchError::shape(loc, "projection needs a spatial source"));
            };
            check_conv(conv).map_err(|d| ArchError::shape(loc.clone(), d))?;
            if conv.in_channels == 0 {
                conv.in_channels = ic;
            } else if conv.in_channels != ic {
                return Err(ArchError::shape(loc, "projection in channels disagree with source"));
            }
            let (oh, ow) = conv
                .output_dims(h, w)
                .ok_or_else(|| ArchError::shape(loc.clone(), "projection kernel too large"))?;
            Shape::Spatial {
                c: conv.out_channels,
                h: oh,
                w: ow,
            }
        }
    };
    if shortcut != target {
        return Err(ArchError::shape(
            loc,
            format!("shortcut produces {shortcut}, merge target is {target}"),
        ));
    }
    Ok(())
}
