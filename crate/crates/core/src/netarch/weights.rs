use rand::Rng;
use serde::{Deserialize, Serialize};

use super::plain::Scalar;
use super::{ArchError, LayerSpec, NetworkArch, SkipKind};

/// Row-major weights: conv `[out][in][kh][kw]`, fc `[out][in]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerWeights<T> {
    pub weight: Vec<T>,
    /// Empty when the layer has no bias.
    pub bias: Vec<T>,
}

/// Integer weights for every weighted layer and skip projection, indexed like the arch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Weights<T = i64> {
    pub layers: Vec<Option<LayerWeights<T>>>,
    pub skips: Vec<Option<LayerWeights<T>>>,
}

fn dims(layer: &LayerSpec) -> Option<(usize, usize)> {
    match layer {
        LayerSpec::Conv(c) => Some((
            c.kernel * c.kernel * c.in_channels * c.out_channels,
            if c.bias { c.out_channels } else { 0 },
        )),
        LayerSpec::Fc(f) => Some((f.in_features * f.out_features, if f.bias { f.out_features } else { 0 })),
        _ => None,
    }
}

fn skip_dims(kind: &SkipKind) -> Option<(usize, usize)> {
    match kind {
        SkipKind::Project(c) => dims(&LayerSpec::Conv(*c)),
        _ => None,
    }
}

impl Weights<i64> {
    fn build(arch: &NetworkArch, mut fill: impl FnMut() -> i64) -> Self {
        let mut make = |d: Option<(usize, usize)>| {
            d.map(|(nw, nb)| LayerWeights {
                weight: (0..nw).map(|_| fill()).collect(),
                bias: (0..nb).map(|_| fill()).collect(),
            })
        };
        let layers = arch.layers.iter().map(|l| make(dims(l))).collect();
        let skips = arch.skips.iter().map(|s| make(skip_dims(&s.kind))).collect();
        Weights { layers, skips }
    }

    pub fn zeros(arch: &NetworkArch) -> Self {
        Self::build(arch, || 0)
    }

    /// Uniform integers in `[-bound, bound]`.
    pub fn random(arch: &NetworkArch, bound: i64, rng: &mut impl Rng) -> Self {
        Self::build(arch, || rng.random_range(-bound..=bound))
    }

    pub fn max_abs(&self) -> u64 {
        self.layers
            .iter()
            .chain(self.skips.iter())
            .flatten()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .map(|v| v.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    pub fn convert<T: Scalar>(&self) -> Weights<T> {
        let conv = |l: &Option<LayerWeights<i64>>| {
            l.as_ref().map(|l| LayerWeights {
                weight: l.weight.iter().map(|&v| T::from_i64(v)).collect(),
                bias: l.bias.iter().map(|&v| T::from_i64(v)).collect(),
            })
        };
        Weights {
            layers: self.layers.iter().map(conv).collect(),
            skips: self.skips.iter().map(conv).collect(),
        }
    }
}

impl<T> Weights<T> {
    pub fn check(&self, arch: &NetworkArch) -> Result<(), ArchError> {
        let mismatch = |what: String| ArchError::ShapeMismatch {
            location: "weights".into(),
            detail: what,
        };
        if self.layers.len() != arch.layers.len() || self.skips.len() != arch.skips.len() {
            return Err(mismatch("weight list does not match the layer list".into()));
        }
        let expect = arch
            .layers
            .iter()
            .map(dims)
            .zip(self.layers.iter())
            .chain(arch.skips.iter().map(|s| skip_dims(&s.kind)).zip(self.skips.iter()));
        for (i, (d, w)) in expect.enumerate() {
            match (d, w) {
                (None, None) => {}
                (Some((nw, nb)), Some(w)) if w.weight.len() == nw && w.bias.len() == nb => {}
                _ => return Err(mismatch(format!("entry {i} has the wrong size"))),
            }
        }
        Ok(())
    }
}
