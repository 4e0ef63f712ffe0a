//! Garbled-circuit and oblivious-transfer stand-ins.
//!
//! Wire labels wrap the values they encode and cannot be read outside this module. Only the
//! evaluation entry point combines them, and only the garbler secret (or, when the evaluator
//! must learn the result, the decode table shipped with the circuit) turns output labels back
//! into field elements.

use super::field::{PrimeField, F61};
use super::share::Party;
use super::ProtocolError;

/// Which circuit input a label set encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRole {
    /// The server's online share of the block output.
    ServerShare,
    /// The client's share of the block output followed by the next activation mask.
    ClientInputs,
}

#[derive(Debug)]
pub struct GarblerSecret {
    key: u64,
    block: usize,
    relus: usize,
}

/// One block's garbled ReLU circuit. Only its size is real.
#[derive(Debug, Clone)]
pub struct GcBlob {
    key: u64,
    pub block: usize,
    pub relus: usize,
    pub bytes: u64,
    pub garbler: Party,
    /// Set when the evaluator is meant to decode the output itself.
    pub decode_table: bool,
}

#[derive(Debug, Clone)]
pub struct Labels {
    key: u64,
    block: usize,
    role: LabelRole,
    values: Vec<F61>,
}

impl Labels {
    pub fn role(&self) -> LabelRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct OutputLabels {
    key: u64,
    block: usize,
    values: Vec<F61>,
}

/// An OT receiver's choice bits for one label set.
#[derive(Debug, Clone)]
pub struct OtChoice {
    block: usize,
    role: LabelRole,
    values: Vec<F61>,
}

pub fn ot_choose(block: usize, role: LabelRole, values: Vec<F61>) -> OtChoice {
    OtChoice { block, role, values }
}

impl GarblerSecret {
    pub fn new(key: u64, block: usize, relus: usize) -> Self {
        GarblerSecret { key, block, relus }
    }

    pub fn garble(&self, garbler: Party, bytes: u64, decode_table: bool) -> GcBlob {
        GcBlob {
            key: self.key,
            block: self.block,
            relus: self.relus,
            bytes,
            garbler,
            decode_table,
        }
    }

    /// Labels for the garbler's own inputs.
    pub fn encode(&self, role: LabelRole, values: Vec<F61>) -> Labels {
        Labels {
            key: self.key,
            block: self.block,
            role,
            values,
        }
    }

    /// OT sender side: the receiver ends up with exactly the labels for its choice.
    pub fn ot_respond(&self, choice: OtChoice) -> Result<Labels, ProtocolError> {
        if choice.block != self.block {
            return Err(ProtocolError::Discipline(format!(
                "OT choice for block {} answered by the garbler of block {}",
                choice.block, self.block
            )));
        }
        Ok(self.encode(choice.role, choice.values))
    }

    pub fn decode(&self, out: OutputLabels) -> Result<Vec<F61>, ProtocolError> {
        if out.key != self.key || out.block != self.block {
            return Err(ProtocolError::Discipline(
                "output labels from a different circuit".into(),
            ));
        }
        Ok(out.values)
    }
}

impl GcBlob {
    /// Evaluates the masked ReLU `ReLU(s + c) - r_next` on the two label sets.
    pub fn evaluate(&self, server: &Labels, client: &Labels) -> Result<OutputLabels, ProtocolError> {
        for l in [server, client] {
            if l.key != self.key || l.block != self.block {
                return Err(ProtocolError::Discipline(format!(
                    "labels do not belong to the circuit of block {}",
                    self.block
                )));
            }
        }
        if server.role != LabelRole::ServerShare || client.role != LabelRole::ClientInputs {
            return Err(ProtocolError::Discipline(
                "label sets supplied in the wrong slots".into(),
            ));
        }
        let n = self.relus;
        if server.values.len() != n || client.values.len() != 2 * n {
            return Err(ProtocolError::LengthMismatch(server.values.len(), n));
        }
        let (share, r_next) = client.values.split_at(n);
        let values = relu_gadget(&server.values, share, r_next)?;
        Ok(OutputLabels {
            key: self.key,
            block: self.block,
            values,
        })
    }

    /// Decoding through the table shipped with the circuit.
    pub fn decode(&self, out: OutputLabels) -> Result<Vec<F61>, ProtocolError> {
        if !self.decode_table {
            return Err(ProtocolError::Discipline("circuit carries no decode table".into()));
        }
        if out.key != self.key || out.block != self.block {
            return Err(ProtocolError::Discipline(
                "output labels from a different circuit".into(),
            ));
        }
        Ok(out.values)
    }
}

/// `ReLU(signed(s + c)) - r_next`, elementwise. Values outside the safe magnitude are rejected
/// rather than wrapped.
pub fn relu_gadget<F: PrimeField>(server: &[F], client: &[F], r_next: &[F]) -> Result<Vec<F>, ProtocolError> {
    if server.len() != client.len() {
        return Err(ProtocolError::LengthMismatch(server.len(), client.len()));
    }
    if r_next.len() != server.len() {
        return Err(ProtocolError::LengthMismatch(server.len(), r_next.len()));
    }
    let bound = F::safe_magnitude() as i128;
    server
        .iter()
        .zip(client)
        .zip(r_next)
        .enumerate()
        .map(|(i, ((&s, &c), &r))| {
            let v = (s + c).signed();
            if v.abs() > bound {
                return Err(ProtocolError::MagnitudeOverflow { index: i });
            }
            Ok(F::from_i128(v.max(0)) - r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::field::Fp;
    use super::*;

    type F97 = Fp<97>;

    #[test]
    fn gadget_sign_cases() {
        let out = relu_gadget(&[F97::new(94)], &[F97::ZERO], &[F97::new(5)]).unwrap();
        assert_eq!(out, vec![F97::new(92)]);
        let out = relu_gadget(&[F97::new(4)], &[F97::new(3)], &[F97::new(2)]).unwrap();
        assert_eq!(out, vec![F97::new(5)]);
    }

    #[test]
    fn gadget_rejects_large_values() {
        // safe magnitude for 97 is 24
        assert!(relu_gadget(&[F97::new(25)], &[F97::ZERO], &[F97::ZERO]).is_err());
        assert!(relu_gadget(&[F97::new(24)], &[F97::ZERO], &[F97::ZERO]).is_ok());
    }

    #[test]
    fn labels_bind_to_their_circuit() {
        let a = GarblerSecret::new(1, 0, 1);
        let b = GarblerSecret::new(2, 0, 1);
        let blob = a.garble(Party::Server, 100, false);
        let s = b.encode(LabelRole::ServerShare, vec![F61::from_u64(1)]);
        let c = a.encode(LabelRole::ClientInputs, vec![F61::ZERO, F61::ZERO]);
        assert!(blob.evaluate(&s, &c).is_err());
        let s = a.encode(LabelRole::ServerShare, vec![F61::from_u64(3)]);
        let out = blob.evaluate(&s, &c).unwrap();
        assert!(blob.decode(out.clone()).is_err());
        assert_eq!(a.decode(out).unwrap(), vec![F61::from_u64(3)]);
    }
}
