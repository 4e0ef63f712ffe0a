//! Functional two-party executors for the Server-Garbler and Client-Garbler protocols.
//!
//! Values are exact: integer weights and inputs are embedded in a prime field, every linear
//! block is evaluated on additive shares, and the ReLU step is a functional stand-in for the
//! garbled circuit. Message sizes come from the costmodel [`ByteModel`], so transcripts and
//! cost predictions agree byte for byte.

pub mod bounds;
pub mod field;
pub mod gc;
pub mod he;
pub mod party;
pub mod run;
pub mod schedule;
pub mod share;
pub mod transcript;
pub mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::ByteModel;
use crate::netarch::ArchError;

pub use crate::costmodel::Protocol;
pub use bounds::check_field_bounds;
pub use field::{Fp, PrimeField, F61, MODULUS_61};
pub use gc::relu_gadget;
pub use run::{
    offline_phase, online_phase, run_inference, ClientState, InferenceResult, Offline, PrecomputeBundle, ServerState,
};
pub use share::{linear_layer_client_share, linear_layer_server_share, reconstruct, share, Party, Share};
pub use transcript::{ByteTotals, PayloadKind, Phase, Transcript, TranscriptEvent};
pub use verify::{verify_against_plaintext, TrialOutcome, VerifyReport};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("both shares belong to the {0}")]
    PartyMismatch(Party),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("shares belong to different layers: {0} vs {1}")]
    LayerMismatch(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("values may reach {bound}, above the safe field magnitude {limit}")]
    FieldOverflowRisk { bound: u128, limit: u64 },
    #[error("ReLU input {index} exceeds the safe field magnitude")]
    MagnitudeOverflow { index: usize },
    #[error("precompute bundle already consumed")]
    BundleConsumed,
    #[error("precompute bundle does not match: {0}")]
    BundleMismatch(String),
    #[error("dataflow violation: {0}")]
    Discipline(String),
    #[error("channel error: {0}")]
    Channel(String),
    #[error("both parties are waiting for a message")]
    Deadlock,
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheduling {
    /// Both parties on the calling thread, alternating deterministically.
    #[default]
    Interleaved,
    /// One thread per party; the channel is the only shared state.
    Threaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Largest absolute client input value the overflow check assumes.
    pub input_bound: u64,
    /// Keep both shares of every block output so they can be checked against a plaintext trace.
    pub debug_checks: bool,
    pub scheduling: Scheduling,
    pub bytes: ByteModel,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            input_bound: 8,
            debug_checks: false,
            scheduling: Scheduling::Interleaved,
            bytes: ByteModel::default(),
        }
    }
}
