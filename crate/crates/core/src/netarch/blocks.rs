//! Splits a network at its ReLUs into linear blocks.
//!
//! Activation 0 is the network input; activation `k` (k >= 1) is the output of the k-th ReLU.
//! Block `k` reads activation `k` (plus any activations reached through skips) and feeds
//! ReLU `k`, except for the last block whose output is the logits.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{ArchError, LayerSpec, NetworkArch, Shape};

pub type ActivationId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearBlock {
    pub index: usize,
    /// Layer indices evaluated by this block (possibly empty when two ReLUs are adjacent).
    pub layers: Range<usize>,
    pub input: ActivationId,
    /// Earlier activations read through skip connections, sorted, excluding `input`.
    pub skip_inputs: Vec<ActivationId>,
    pub output_shape: Shape,
    /// Layer index of the ReLU consuming this block's output; `None` for the final block.
    pub relu_layer: Option<usize>,
}

impl LinearBlock {
    pub fn output_len(&self) -> usize {
        self.output_shape.len()
    }

    /// All activations this block depends on, primary input first.
    pub fn inputs(&self) -> impl Iterator<Item = ActivationId> + '_ {
        std::iter::once(self.input).chain(self.skip_inputs.iter().copied())
    }
}

/// Element counts that drive mask and garbled-circuit sizing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    /// Elements over all activations, including the network input.
    pub activation_elems: u64,
    /// Elements over all block outputs, including the logits.
    pub block_output_elems: u64,
    pub relus: u64,
    pub input_elems: u64,
    pub output_elems: u64,
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub activation_shapes: Vec<Shape>,
    /// ReLU layer that produced each activation (`None` for the input).
    pub activation_layer: Vec<Option<usize>>,
    pub blocks: Vec<LinearBlock>,
    /// Layer output shapes, cached from shape inference.
    pub layer_shapes: Vec<Shape>,
}

impl Segmentation {
    pub fn new(arch: &NetworkArch) -> Result<Self, ArchError> {
        let layer_shapes = arch.layer_shapes()?;
        let mut activation_shapes = vec![arch.input_shape()];
        let mut activation_layer = vec![None];
        // Which activation a ReLU layer produced, by layer index.
        let mut relu_to_act = vec![None; arch.layers.len()];
        let mut blocks = Vec::new();
        let mut start = 0;

        let close = |end: usize,
                     relu_layer: Option<usize>,
                     blocks: &mut Vec<LinearBlock>,
                     relu_to_act: &[Option<usize>],
                     input: usize,
                     start: usize|
         -> Result<(), ArchError> {
            let mut skip_inputs = Vec::new();
            for s in arch.skips.iter().filter(|s| (start..end).contains(&s.to)) {
                if (start..end).contains(&s.from) {
                    continue;
                }
                match relu_to_act[s.from] {
                    Some(a) if a != input => skip_inputs.push(a),
                    Some(_) => {}
                    None => {
                        return Err(ArchError::UnsupportedSkip {
                            from: s.from,
                            to: s.to,
                            detail: "skip source must be a ReLU output or lie in the same linear block".into(),
                        })
                    }
                }
            }
            skip_inputs.sort_unstable();
            skip_inputs.dedup();
            let output_shape = if end == start {
                if input == 0 {
                    arch.input_shape()
                } else {
                    layer_shapes[start - 1]
                }
            } else {
                layer_shapes[end - 1]
            };
            blocks.push(LinearBlock {
                index: blocks.len(),
                layers: start..end,
                input,
                skip_inputs,
                output_shape,
                relu_layer,
            });
            Ok(())
        };

        for (i, layer) in arch.layers.iter().enumerate() {
            if let LayerSpec::Relu = layer {
                if arch.skips.iter().any(|s| s.to == i) {
                    return Err(ArchError::UnsupportedSkip {
                        from: arch.skips.iter().find(|s| s.to == i).map(|s| s.from).unwrap_or(0),
                        to: i,
                        detail: "a shortcut cannot merge into a ReLU layer".into(),
                    });
                }
                let input = activation_shapes.len() - 1;
                close(i, Some(i), &mut blocks, &relu_to_act, input, start)?;
                relu_to_act[i] = Some(activation_shapes.len());
                activation_shapes.push(layer_shapes[i]);
                activation_layer.push(Some(i));
                start = i + 1;
            }
        }
        let input = activation_shapes.len() - 1;
        close(arch.layers.len(), None, &mut blocks, &relu_to_act, input, start)?;

        Ok(Segmentation {
            activation_shapes,
            activation_layer,
            blocks,
            layer_shapes,
        })
    }

    pub fn footprint(&self) -> Footprint {
        let relus = self
            .blocks
            .iter()
            .filter(|b| b.relu_layer.is_some())
            .map(|b| b.output_len() as u64)
            .sum();
        Footprint {
            activation_elems: self.activation_shapes.iter().map(|s| s.len() as u64).sum(),
            block_output_elems: self.blocks.iter().map(|b| b.output_len() as u64).sum(),
            relus,
            input_elems: self.activation_shapes[0].len() as u64,
            output_elems: self.blocks.last().map(|b| b.output_len() as u64).unwrap_or(0),
            blocks: self.blocks.len(),
        }
    }
}

impl NetworkArch {
    pub fn footprint(&self) -> Result<Footprint, ArchError> {
        Ok(self.segmentation()?.footprint())
    }
}
