//! Worst-case magnitude propagation, used to refuse weights that could wrap the field.

use std::ops::{Add, Neg, Sub};

use super::field::PrimeField;
use super::ProtocolError;
use crate::netarch::plain::{eval_block, Scalar};
use crate::netarch::{NetworkArch, Segmentation, Weights};

/// Saturating upper bound on an absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Bound(u128);

impl Add for Bound {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Bound(self.0.saturating_add(rhs.0))
    }
}

// |a - b| <= |a| + |b|
impl Sub for Bound {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn sub(self, rhs: Self) -> Self {
        self + rhs
    }
}

impl Neg for Bound {
    type Output = Self;
    fn neg(self) -> Self {
        self
    }
}

impl Scalar for Bound {
    type Acc = u128;

    fn zero() -> Self {
        Bound(0)
    }
    fn from_i64(v: i64) -> Self {
        Bound(v.unsigned_abs() as u128)
    }
    fn acc_zero() -> u128 {
        0
    }
    fn mac(acc: u128, a: Self, b: Self) -> u128 {
        acc.saturating_add(a.0.saturating_mul(b.0))
    }
    fn acc_add(acc: u128, a: Self) -> u128 {
        acc.saturating_add(a.0)
    }
    fn reduce(acc: u128) -> Self {
        Bound(acc)
    }
}

/// Largest value any block output (pre-activation or logit) can reach for inputs bounded by
/// `input_bound`. Fails with `FieldOverflowRisk` when it exceeds the field's safe magnitude.
pub fn check_field_bounds<F: PrimeField>(
    arch: &NetworkArch,
    seg: &Segmentation,
    weights: &Weights<i64>,
    input_bound: u64,
) -> Result<u128, ProtocolError> {
    let w: Weights<Bound> = weights.convert();
    let mut acts = vec![vec![Bound(input_bound as u128); seg.activation_shapes[0].len()]];
    let mut worst = 0u128;
    for block in &seg.blocks {
        let out = eval_block(arch, seg, block, &w, |a| acts[a].as_slice(), true);
        worst = out.iter().map(|b| b.0).fold(worst, u128::max);
        if block.relu_layer.is_some() {
            acts.push(out);
        }
    }
    let limit = F::safe_magnitude();
    if worst > limit as u128 {
        return Err(ProtocolError::FieldOverflowRisk { bound: worst, limit });
    }
    Ok(worst)
}
