use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bounds::check_field_bounds;
use super::field::{PrimeField, F61};
use super::run::run_inference;
use super::share::reconstruct;
use super::transcript::ByteTotals;
use super::{ProtocolConfig, ProtocolError};
use crate::costmodel::Protocol;
use crate::exec::{map_indexed, Mode};
use crate::netarch::plain::{block_outputs, forward};
use crate::netarch::{NetworkArch, Weights};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub ok: bool,
    /// First block whose shares disagreed with the plaintext trace.
    pub first_bad_block: Option<usize>,
    pub bytes: ByteTotals,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub trials: usize,
    pub failures: usize,
    pub outcomes: Vec<TrialOutcome>,
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add((trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Input for one trial, uniform in `[-input_bound, input_bound]`.
pub fn trial_input(arch: &NetworkArch, seed: u64, input_bound: u64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let b = input_bound as i64;
    (0..arch.input_shape().len())
        .map(|_| rng.random_range(-b..=b))
        .collect()
}

/// Runs `n_trials` private inferences on random inputs and compares each against plaintext
/// integer inference, including every intermediate block output.
pub fn verify_against_plaintext(
    protocol: Protocol,
    arch: &NetworkArch,
    weights: &Weights<i64>,
    n_trials: usize,
    seed: u64,
    cfg: &ProtocolConfig,
    mode: Mode,
) -> Result<VerifyReport, ProtocolError> {
    if n_trials == 0 {
        return Ok(VerifyReport::default());
    }
    let seg = arch.segmentation()?;
    weights.check(arch)?;
    check_field_bounds::<F61>(arch, &seg, weights, cfg.input_bound)?;
    let cfg = ProtocolConfig {
        debug_checks: true,
        ..*cfg
    };
    let outcomes = map_indexed(mode, n_trials, |t| -> Result<TrialOutcome, ProtocolError> {
        let s = trial_seed(seed, t);
        let input = trial_input(arch, s, cfg.input_bound);
        let res = run_inference(protocol, arch, weights, &input, s, &cfg)?;
        let (logits, _) = forward(arch, weights, &input)?;
        let expected = block_outputs(arch, weights, &input)?;
        let mut first_bad_block = None;
        for (b, (c, sv)) in res.block_shares.iter().enumerate() {
            let got: Vec<i128> = reconstruct(c, sv)?.into_iter().map(|v| v.signed()).collect();
            if got != expected[b] {
                first_bad_block = Some(b);
                break;
            }
        }
        let ok = first_bad_block.is_none() && res.signed_logits() == logits;
        Ok(TrialOutcome {
            seed: s,
            ok,
            first_bad_block,
            bytes: res.transcript.totals(),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(VerifyReport {
        trials: n_trials,
        failures: outcomes.iter().filter(|o| !o.ok).count(),
        outcomes,
    })
}
