use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::netarch::plain::Scalar;

/// Element of the prime field `Z_P`, stored reduced in `[0, P)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Fp<const P: u64>(u64);

/// Default modulus, the Mersenne prime 2^61 - 1.
pub const MODULUS_61: u64 = (1 << 61) - 1;
pub type F61 = Fp<MODULUS_61>;

pub trait PrimeField: Scalar + Eq + std::hash::Hash + fmt::Display + Mul<Output = Self> {
    const MODULUS: u64;

    fn from_u64(v: u64) -> Self;
    fn value(self) -> u64;
    fn random(rng: &mut impl Rng) -> Self;

    /// Signed reading: `[0, P/2]` non-negative, `(P/2, P)` negative.
    fn signed(self) -> i128 {
        let v = self.value();
        if v <= Self::MODULUS / 2 {
            v as i128
        } else {
            v as i128 - Self::MODULUS as i128
        }
    }

    fn from_i128(v: i128) -> Self {
        Self::from_u64(v.rem_euclid(Self::MODULUS as i128) as u64)
    }

    /// Largest magnitude treated as a valid signed value by the ReLU gadget.
    fn safe_magnitude() -> u64 {
        (Self::MODULUS - 1) / 4
    }
}

impl<const P: u64> Fp<P> {
    const CHECK: () = assert!(P > 2 && P < (1 << 63), "modulus must be in (2, 2^63)");
    pub const ZERO: Self = Fp(0);

    pub const fn new(v: u64) -> Self {
        #[allow(clippy::let_unit_value)]
        let _ = Self::CHECK;
        Fp(v % P)
    }
}

impl<const P: u64> PrimeField for Fp<P> {
    const MODULUS: u64 = P;

    fn from_u64(v: u64) -> Self {
        Fp(v % P)
    }

    fn value(self) -> u64 {
        self.0
    }

    fn random(rng: &mut impl Rng) -> Self {
        Fp(rng.random_range(0..P))
    }
}

impl<const P: u64> fmt::Debug for Fp<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const P: u64> fmt::Display for Fp<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const P: u64> Add for Fp<P> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let s = self.0 + rhs.0;
        Fp(if s >= P { s - P } else { s })
    }
}

impl<const P: u64> AddAssign for Fp<P> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const P: u64> Sub for Fp<P> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Fp(if self.0 >= rhs.0 {
            self.0 - rhs.0
        } else {
            self.0 + P - rhs.0
        })
    }
}

impl<const P: u64> SubAssign for Fp<P> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const P: u64> Neg for Fp<P> {
    type Output = Self;
    fn neg(self) -> Self {
        if self.0 == 0 {
            self
        } else {
            Fp(P - self.0)
        }
    }
}

impl<const P: u64> Mul for Fp<P> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Fp(((self.0 as u128 * rhs.0 as u128) % P as u128) as u64)
    }
}

const REDUCE_AT: u128 = 1 << 127;

impl<const P: u64> Scalar for Fp<P> {
    /// Unreduced sum of products; folded back below 2^127 before it can overflow.
    type Acc = u128;

    fn zero() -> Self {
        Fp(0)
    }

    fn from_i64(v: i64) -> Self {
        Self::from_i128(v as i128)
    }

    fn acc_zero() -> u128 {
        0
    }

    #[inline]
    fn mac(acc: u128, a: Self, b: Self) -> u128 {
        // For P < 2^63 a product is below 2^126, so acc < 2^127 plus one product fits.
        let acc = acc + a.0 as u128 * b.0 as u128;
        if acc >= REDUCE_AT {
            acc % P as u128
        } else {
            acc
        }
    }

    fn acc_add(acc: u128, a: Self) -> u128 {
        let acc = acc + a.0 as u128;
        if acc >= REDUCE_AT {
            acc % P as u128
        } else {
            acc
        }
    }

    fn reduce(acc: u128) -> Self {
        Fp((acc % P as u128) as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type F97 = Fp<97>;

    #[test]
    fn arithmetic_mod_97() {
        let a = F97::new(30);
        let b = F97::new(72);
        assert_eq!((a + b).value(), 5);
        assert_eq!((F97::new(5) - a).value(), 72);
        assert_eq!((-F97::new(3)).value(), 94);
        assert_eq!((F97::new(50) * F97::new(2)).value(), 3);
        assert_eq!(F97::new(94).signed(), -3);
        assert_eq!(F97::from_i128(-3).value(), 94);
    }

    #[test]
    fn lazy_accumulation_matches_eager() {
        let big = F61::from_u64(MODULUS_61 - 1);
        let mut acc = F61::acc_zero();
        let mut eager = F61::ZERO;
        for _ in 0..1000 {
            acc = F61::mac(acc, big, big);
            eager += big * big;
        }
        assert_eq!(F61::reduce(acc), eager);
        assert_eq!(eager.value(), 1000);
    }
}
