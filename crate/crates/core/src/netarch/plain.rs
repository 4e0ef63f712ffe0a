//! Exact integer evaluation of linear blocks, generic over the scalar ring.
//!
//! Average pooling is evaluated as a sum pool: the window divisor is not invertible-friendly in
//! the exact integer setting, and it is a uniform rescale that a real deployment folds into the
//! next layer's weights.

use std::fmt::Debug;
use std::ops::{Add, Neg, Sub};

use super::{
    ActivationId, ArchError, LayerSpec, LayerWeights, LinearBlock, NetworkArch, PoolSpec, Segmentation, Shape,
    SkipKind, Weights,
};

pub trait Scalar:
    Copy + Debug + PartialEq + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Neg<Output = Self>
{
    type Acc: Copy;

    fn zero() -> Self;
    fn from_i64(v: i64) -> Self;
    fn acc_zero() -> Self::Acc;
    fn mac(acc: Self::Acc, a: Self, b: Self) -> Self::Acc;
    fn acc_add(acc: Self::Acc, a: Self) -> Self::Acc;
    fn reduce(acc: Self::Acc) -> Self;
}

impl Scalar for i128 {
    type Acc = i128;

    fn zero() -> Self {
        0
    }
    fn from_i64(v: i64) -> Self {
        v as i128
    }
    fn acc_zero() -> i128 {
        0
    }
    fn mac(acc: i128, a: i128, b: i128) -> i128 {
        acc + a * b
    }
    fn acc_add(acc: i128, a: i128) -> i128 {
        acc + a
    }
    fn reduce(acc: i128) -> i128 {
        acc
    }
}

/// Evaluates one block. `activation` resolves the tensors the block reads;
/// `with_bias` selects the affine map (true) or its linear part (false).
pub fn eval_block<'a, T: Scalar + 'a>(
    arch: &NetworkArch,
    seg: &Segmentation,
    block: &LinearBlock,
    weights: &Weights<T>,
    activation: impl Fn(ActivationId) -> &'a [T],
    with_bias: bool,
) -> Vec<T> {
    let shapes = &seg.layer_shapes;
    let mut outputs: Vec<(usize, Vec<T>)> = Vec::new();
    let mut current: Vec<T> = activation(block.input).to_vec();
    for i in block.layers.clone() {
        let in_shape = arch.input_shape_of(shapes, i);
        let mut out = eval_layer(
            &arch.layers[i],
            weights.layers[i].as_ref(),
            &current,
            in_shape,
            shapes[i],
            with_bias,
        );
        for (k, skip) in arch.skips.iter().enumerate().filter(|(_, s)| s.to == i) {
            let src: &[T] = if block.layers.contains(&skip.from) {
                &outputs
                    .iter()
                    .find(|(l, _)| *l == skip.from)
                    .expect("internal skip source")
                    .1
            } else {
                let act = seg
                    .activation_layer
                    .iter()
                    .position(|l| *l == Some(skip.from))
                    .expect("segmentation validated skip sources");
                activation(act)
            };
            let src_shape = shapes[skip.from];
            let shortcut = eval_shortcut(
                &skip.kind,
                weights.skips[k].as_ref(),
                src,
                src_shape,
                shapes[i],
                with_bias,
            );
            for (o, s) in out.iter_mut().zip(shortcut) {
                *o = *o + s;
            }
        }
        if arch.skips.iter().any(|s| s.from == i) {
            outputs.push((i, out.clone()));
        }
        current = out;
    }
    current
}

fn eval_shortcut<T: Scalar>(
    kind: &SkipKind,
    w: Option<&LayerWeights<T>>,
    src: &[T],
    src_shape: Shape,
    out_shape: Shape,
    with_bias: bool,
) -> Vec<T> {
    match kind {
        SkipKind::Identity => src.to_vec(),
        SkipKind::Pad { stride } => {
            let (Shape::Spatial { c, h, w: wd }, Shape::Spatial { c: oc, h: oh, w: ow }) = (src_shape, out_shape)
            else {
                unreachable!("shape inference checked pad shortcuts")
            };
            let mut out = vec![T::zero(); oc * oh * ow];
            for ch in 0..c {
                for y in 0..oh {
                    for x in 0..ow {
                        out[(ch * oh + y) * ow + x] = src[(ch * h + y * stride) * wd + x * stride];
                    }
                }
            }
            out
        }
        SkipKind::Project(conv) => eval_layer(&LayerSpec::Conv(*conv), w, src, src_shape, out_shape, with_bias),
    }
}

pub fn eval_layer<T: Scalar>(
    layer: &LayerSpec,
    w: Option<&LayerWeights<T>>,
    input: &[T],
    in_shape: Shape,
    out_shape: Shape,
    with_bias: bool,
) -> Vec<T> {
    match layer {
        LayerSpec::Conv(c) => {
            let w = w.expect("conv weights");
            let (Shape::Spatial { c: ic, h, w: wd }, Shape::Spatial { h: oh, w: ow, .. }) = (in_shape, out_shape)
            else {
                unreachable!("shape inference checked conv inputs")
            };
            let k = c.kernel;
            let pad = c.padding as isize;
            let mut out = Vec::with_capacity(c.out_channels * oh * ow);
            for o in 0..c.out_channels {
                let bias = if with_bias && c.bias { Some(w.bias[o]) } else { None };
                let wo = &w.weight[o * ic * k * k..(o + 1) * ic * k * k];
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = T::acc_zero();
                        for i in 0..ic {
                            for ky in 0..k {
                                let iy = (y * c.stride + ky) as isize - pad;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let row = (i * h + iy as usize) * wd;
                                let wrow = (i * k + ky) * k;
                                for kx in 0..k {
                                    let ix = (x * c.stride + kx) as isize - pad;
                                    if ix < 0 || ix >= wd as isize {
                                        continue;
                                    }
                                    acc = T::mac(acc, wo[wrow + kx], input[row + ix as usize]);
                                }
                            }
                        }
                        if let Some(b) = bias {
                            acc = T::acc_add(acc, b);
                        }
                        out.push(T::reduce(acc));
                    }
                }
            }
            out
        }
        LayerSpec::Fc(f) => {
            let w = w.expect("fc weights");
            (0..f.out_features)
                .map(|o| {
                    let row = &w.weight[o * f.in_features..(o + 1) * f.in_features];
                    let mut acc = row
                        .iter()
                        .zip(input)
                        .fold(T::acc_zero(), |acc, (&a, &b)| T::mac(acc, a, b));
                    if with_bias && f.bias {
                        acc = T::acc_add(acc, w.bias[o]);
                    }
                    T::reduce(acc)
                })
                .collect()
        }
        LayerSpec::AvgPool(p) => {
            let (Shape::Spatial { c, h, w: wd }, Shape::Spatial { h: oh, w: ow, .. }) = (in_shape, out_shape) else {
                unreachable!("shape inference checked pool inputs")
            };
            let (window_h, window_w, stride) = match *p {
                PoolSpec::Global => (h, wd, 1),
                PoolSpec::Window { window, stride } => (window, window, stride),
            };
            let mut out = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = T::acc_zero();
                        for dy in 0..window_h {
                            let row = (ch * h + y * stride + dy) * wd;
                            for dx in 0..window_w {
                                acc = T::acc_add(acc, input[row + x * stride + dx]);
                            }
                        }
                        out.push(T::reduce(acc));
                    }
                }
            }
            out
        }
        LayerSpec::Flatten => input.to_vec(),
        LayerSpec::Relu => unreachable!("ReLU layers delimit blocks"),
    }
}

/// Plaintext integer inference; returns the logits and every activation (input first).
pub fn forward(
    arch: &NetworkArch,
    weights: &Weights<i64>,
    input: &[i64],
) -> Result<(Vec<i128>, Vec<Vec<i128>>), ArchError> {
    let seg = arch.segmentation()?;
    weights.check(arch)?;
    if input.len() != arch.input_shape().len() {
        return Err(ArchError::ShapeMismatch {
            location: "input".into(),
            detail: format!("expected {} values, got {}", arch.input_shape().len(), input.len()),
        });
    }
    let w: Weights<i128> = weights.convert();
    let mut acts: Vec<Vec<i128>> = vec![input.iter().map(|&v| v as i128).collect()];
    let mut logits = Vec::new();
    for block in &seg.blocks {
        let out = eval_block(arch, &seg, block, &w, |a| acts[a].as_slice(), true);
        if block.relu_layer.is_some() {
            acts.push(out.into_iter().map(|v| v.max(0)).collect());
        } else {
            logits = out;
        }
    }
    Ok((logits, acts))
}

/// Pre-activation outputs of every block, for intermediate share checks.
pub fn block_outputs(arch: &NetworkArch, weights: &Weights<i64>, input: &[i64]) -> Result<Vec<Vec<i128>>, ArchError> {
    let seg = arch.segmentation()?;
    let (_, acts) = forward(arch, weights, input)?;
    let w: Weights<i128> = weights.convert();
    Ok(seg
        .blocks
        .iter()
        .map(|b| eval_block(arch, &seg, b, &w, |a| acts[a].as_slice(), true))
        .collect())
}
