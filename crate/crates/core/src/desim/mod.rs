//! Discrete-event simulation of a single client and server: Poisson arrivals, a FIFO queue,
//! storage-bounded precomputation and online serving on one serial resource.

mod arrivals;
mod engine;
pub mod export;
mod ledger;
mod metrics;
mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::{
    apply_optimization, phase_costs, CostError, CostInputs, CostMode, CostModel, OptimizationKnobs, PhaseCosts,
    Protocol, DEFAULT_BANDWIDTH,
};
use crate::protocol::Party;

pub use arrivals::generate_arrivals;
pub use engine::{run, run_traced, EventKind, TraceEvent};
pub use ledger::StorageLedger;
pub use metrics::{decompose_latency, run_many, AggregateMetrics, LatencyDecomposition, RequestRecord, RunMetrics};
pub use sweep::{sweep, SweepRow};

pub const DEFAULT_HORIZON: f64 = 86_400.0;
pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_SERVER_CAPACITY: u64 = 10_000_000_000_000;
pub const GB: u64 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum DesimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("one precompute needs {bundle_bytes} bytes on the {party}, capacity is {capacity}")]
    ConfigInfeasible {
        party: Party,
        bundle_bytes: u64,
        capacity: u64,
    },
    #[error("no request completed within the horizon")]
    NoCompletedRequests,
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("i/o: {0}")]
    Io(String),
}

/// What happens to an in-progress offline phase when a request could be served from a
/// committed bundle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfflinePolicy {
    /// Suspend it, serve the request, then resume where it left off.
    #[default]
    Preemptive,
    /// Let it finish first.
    NonPreemptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub model: String,
    pub dataset: String,
    /// Requests per second.
    pub arrival_rate: f64,
    /// Seconds.
    pub horizon: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub client_capacity: u64,
    pub server_capacity: u64,
    /// Bytes per second.
    pub bandwidth: f64,
    pub cost_mode: CostMode,
    pub knobs: OptimizationKnobs,
    pub policy: OfflinePolicy,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            protocol: Protocol::ClientGarbler,
            model: "resnet32".into(),
            dataset: "cifar100".into(),
            arrival_rate: 0.001,
            horizon: DEFAULT_HORIZON,
            n_runs: DEFAULT_RUNS,
            seed: 0,
            client_capacity: 8 * GB,
            server_capacity: DEFAULT_SERVER_CAPACITY,
            bandwidth: DEFAULT_BANDWIDTH,
            cost_mode: CostMode::TableDirect,
            knobs: OptimizationKnobs::identity(),
            policy: OfflinePolicy::Preemptive,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DesimError> {
        let bad = |m: String| Err(DesimError::InvalidConfig(m));
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return bad(format!("arrival rate must be >= 0, got {}", self.arrival_rate));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be > 0, got {}", self.horizon));
        }
        if self.client_capacity == 0 || self.server_capacity == 0 {
            return bad("capacities must be > 0".into());
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad(format!("bandwidth must be > 0, got {}", self.bandwidth));
        }
        if self.n_runs == 0 {
            return bad("n_runs must be >= 1".into());
        }
        self.knobs.validate()?;
        Ok(())
    }

    /// Phase costs of this configuration under `cm`, for the given network inputs.
    pub fn costs(&self, inputs: &CostInputs, cm: &CostModel) -> Result<PhaseCosts, DesimError> {
        let cm = cm.with_mode(self.cost_mode);
        let (inputs, cm) = apply_optimization(inputs, &cm, &self.knobs)?;
        Ok(phase_costs(self.protocol, &inputs, &cm, self.bandwidth)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SimConfig::default().validate().unwrap();
        let bad = SimConfig {
            arrival_rate: -1.0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            horizon: 0.0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
