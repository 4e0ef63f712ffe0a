//! Homomorphic-encryption stand-in.
//!
//! Ciphertexts carry their plaintext, but only the holder of the matching [`SecretKey`] can
//! read it. The evaluator side can apply linear maps and add plaintexts, nothing else.

use super::field::F61;
use super::ProtocolError;

#[derive(Debug)]
pub struct SecretKey {
    id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicKey {
    id: u64,
}

#[derive(Debug, Clone)]
pub struct Ciphertext {
    key: u64,
    values: Vec<F61>,
}

impl Ciphertext {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn keygen(id: u64) -> (SecretKey, PublicKey) {
    (SecretKey { id }, PublicKey { id })
}

impl SecretKey {
    pub fn public(&self) -> PublicKey {
        PublicKey { id: self.id }
    }

    pub fn encrypt(&self, values: Vec<F61>) -> Ciphertext {
        Ciphertext { key: self.id, values }
    }

    pub fn decrypt(&self, ct: Ciphertext) -> Result<Vec<F61>, ProtocolError> {
        if ct.key != self.id {
            return Err(ProtocolError::Discipline("ciphertext under a different key".into()));
        }
        Ok(ct.values)
    }
}

impl PublicKey {
    /// Applies a linear map to a set of ciphertexts (the map sees the values, the caller
    /// never does), then adds a plaintext vector.
    pub fn eval_linear(
        &self,
        inputs: &[&Ciphertext],
        map: impl FnOnce(&[&[F61]]) -> Vec<F61>,
        add_plain: &[F61],
    ) -> Result<Ciphertext, ProtocolError> {
        if inputs.iter().any(|c| c.key != self.id) {
            return Err(ProtocolError::Discipline("ciphertext under a different key".into()));
        }
        let slices: Vec<&[F61]> = inputs.iter().map(|c| c.values.as_slice()).collect();
        let mut out = map(&slices);
        if out.len() != add_plain.len() {
            return Err(ProtocolError::LengthMismatch(out.len(), add_plain.len()));
        }
        for (o, &p) in out.iter_mut().zip(add_plain) {
            *o += p;
        }
        Ok(Ciphertext {
            key: self.id,
            values: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::field::PrimeField;

    #[test]
    fn linear_eval_under_encryption() {
        let (sk, pk) = keygen(7);
        let ct = sk.encrypt(vec![F61::from_u64(2), F61::from_u64(3)]);
        let out = pk
            .eval_linear(&[&ct], |x| vec![x[0][0] + x[0][1]], &[F61::from_u64(10)])
            .unwrap();
        assert_eq!(sk.decrypt(out).unwrap(), vec![F61::from_u64(15)]);
    }

    #[test]
    fn wrong_key_is_rejected() {
        let (sk, _) = keygen(1);
        let (_, other) = keygen(2);
        let ct = sk.encrypt(vec![F61::ZERO]);
        assert!(other.eval_linear(&[&ct], |x| x[0].to_vec(), &[F61::ZERO]).is_err());
    }
}
