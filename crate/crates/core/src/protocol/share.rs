use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::{PrimeField, F61};
use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    Client,
    Server,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Client => Party::Server,
            Party::Server => Party::Client,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Client => "client",
            Party::Server => "server",
        })
    }
}

/// One party's additive share of a tensor. `layer_index` names the linear block it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share<F = F61> {
    pub party: Party,
    pub values: Vec<F>,
    pub layer_index: usize,
}

/// Splits `x` into a uniformly random client share `r` and the server share `x - r`.
pub fn share<F: PrimeField>(x: &[F], layer_index: usize, rng: &mut impl Rng) -> (Share<F>, Share<F>) {
    let r: Vec<F> = x.iter().map(|_| F::random(rng)).collect();
    share_with(x, r, layer_index)
}

/// Deterministic split with a caller-chosen first share.
pub fn share_with<F: PrimeField>(x: &[F], r: Vec<F>, layer_index: usize) -> (Share<F>, Share<F>) {
    let rest = x.iter().zip(&r).map(|(&x, &r)| x - r).collect();
    (
        Share {
            party: Party::Client,
            values: r,
            layer_index,
        },
        Share {
            party: Party::Server,
            values: rest,
            layer_index,
        },
    )
}

pub fn reconstruct<F: PrimeField>(a: &Share<F>, b: &Share<F>) -> Result<Vec<F>, ProtocolError> {
    if a.party == b.party {
        return Err(ProtocolError::PartyMismatch(a.party));
    }
    if a.layer_index != b.layer_index {
        return Err(ProtocolError::LayerMismatch(a.layer_index, b.layer_index));
    }
    if a.values.len() != b.values.len() {
        return Err(ProtocolError::LengthMismatch(a.values.len(), b.values.len()));
    }
    Ok(a.values.iter().zip(&b.values).map(|(&x, &y)| x + y).collect())
}

fn mat_vec<F: PrimeField>(w: &[F], rows: usize, x: &[F]) -> Result<Vec<F>, ProtocolError> {
    if rows == 0 || w.len() != rows * x.len() {
        return Err(ProtocolError::ShapeMismatch(format!(
            "{} weights do not form {rows} rows over {} inputs",
            w.len(),
            x.len()
        )));
    }
    Ok(w.chunks(x.len())
        .map(|row| F::reduce(row.iter().zip(x).fold(F::acc_zero(), |acc, (&a, &b)| F::mac(acc, a, b))))
        .collect())
}

/// Server share of a dense layer `W` (row-major, `rows` outputs): `W (y - r) - s`.
pub fn linear_layer_server_share<F: PrimeField>(
    w: &[F],
    rows: usize,
    masked_input: &[F],
    s: &[F],
    layer_index: usize,
) -> Result<Share<F>, ProtocolError> {
    let mut v = mat_vec(w, rows, masked_input)?;
    if s.len() != rows {
        return Err(ProtocolError::LengthMismatch(s.len(), rows));
    }
    for (v, &s) in v.iter_mut().zip(s) {
        *v = *v - s;
    }
    Ok(Share {
        party: Party::Server,
        values: v,
        layer_index,
    })
}

/// The matching client share `W r + s`, which the offline phase delivers under encryption.
pub fn linear_layer_client_share<F: PrimeField>(
    w: &[F],
    rows: usize,
    r: &[F],
    s: &[F],
    layer_index: usize,
) -> Result<Share<F>, ProtocolError> {
    let mut v = mat_vec(w, rows, r)?;
    if s.len() != rows {
        return Err(ProtocolError::LengthMismatch(s.len(), rows));
    }
    for (v, &s) in v.iter_mut().zip(s) {
        *v = *v + s;
    }
    Ok(Share {
        party: Party::Client,
        values: v,
        layer_index,
    })
}

#[cfg(test)]
mod tests {
    use super::super::field::Fp;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type F97 = Fp<97>;

    #[test]
    fn worked_example_mod_97() {
        let (c, s) = share_with(&[F97::new(5)], vec![F97::new(30)], 0);
        assert_eq!(s.values, vec![F97::new(72)]);
        assert_eq!(reconstruct(&c, &s).unwrap(), vec![F97::new(5)]);
    }

    #[test]
    fn zero_vector_shares_are_negatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (c, s) = share(&[F61::ZERO; 4], 0, &mut rng);
        for (a, b) in c.values.iter().zip(&s.values) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn one_by_one_linear_layer() {
        let w = [F97::new(2)];
        let server = linear_layer_server_share(&w, 1, &[F97::new(2)], &[F97::new(4)], 0).unwrap();
        let client = linear_layer_client_share(&w, 1, &[F97::new(1)], &[F97::new(4)], 0).unwrap();
        assert_eq!(server.values, vec![F97::ZERO]);
        assert_eq!(client.values, vec![F97::new(6)]);
        assert_eq!(reconstruct(&client, &server).unwrap(), vec![F97::new(6)]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let w = [F97::new(1), F97::ZERO, F97::ZERO, F97::new(1)];
        let y = [F97::new(9), F97::new(11)];
        let s = linear_layer_server_share(&w, 2, &y, &[F97::ZERO; 2], 0).unwrap();
        assert_eq!(s.values, y.to_vec());
        assert!(linear_layer_server_share(&w, 3, &y, &[F97::ZERO; 3], 0).is_err());
    }

    #[test]
    fn errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (c, s) = share(&[F61::from_u64(1); 3], 0, &mut rng);
        assert!(matches!(reconstruct(&c, &c), Err(ProtocolError::PartyMismatch(_))));
        let short = Share {
            values: vec![F61::ZERO],
            ..s.clone()
        };
        assert!(matches!(
            reconstruct(&c, &short),
            Err(ProtocolError::LengthMismatch(3, 1))
        ));
        let other = Share { layer_index: 1, ..s };
        assert!(matches!(
            reconstruct(&c, &other),
            Err(ProtocolError::LayerMismatch(0, 1))
        ));
    }
}
