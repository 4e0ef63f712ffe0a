use serde::{Deserialize, Serialize};

use super::metrics::{run_many, AggregateMetrics};
use super::{DesimError, SimConfig};
use crate::costmodel::{max_sustainable_rate, PhaseCosts, Protocol};
use crate::exec::{map_indexed, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub protocol: Protocol,
    pub client_capacity: u64,
    pub rate: f64,
    pub metrics: Option<AggregateMetrics>,
    pub infeasible: bool,
    pub saturated: bool,
    /// Why `metrics` is missing.
    pub failure: Option<String>,
}

/// Evaluates every (protocol, capacity, rate) cell. Rows come back in that nesting order;
/// cells that cannot run are flagged instead of dropped.
pub fn sweep(
    base: &SimConfig,
    rates: &[f64],
    capacities: &[u64],
    protocols: &[Protocol],
    costs: impl Fn(Protocol) -> Result<PhaseCosts, DesimError> + Sync,
    mode: Mode,
) -> Result<Vec<SweepRow>, DesimError> {
    if rates.is_empty() || capacities.is_empty() || protocols.is_empty() {
        return Err(DesimError::InvalidConfig("sweep lists must be non-empty".into()));
    }
    let costs: Vec<Result<PhaseCosts, String>> =
        protocols.iter().map(|&p| costs(p).map_err(|e| e.to_string())).collect();
    let cells: Vec<(usize, u64, f64)> = (0..protocols.len())
        .flat_map(|p| {
            capacities
                .iter()
                .flat_map(move |&c| rates.iter().map(move |&r| (p, c, r)))
        })
        .collect();
    Ok(map_indexed(mode, cells.len(), |i| {
        let (p, capacity, rate) = cells[i];
        let protocol = protocols[p];
        let mut row = SweepRow {
            protocol,
            client_capacity: capacity,
            rate,
            metrics: None,
            infeasible: false,
            saturated: false,
            failure: None,
        };
        let cost = match &costs[p] {
            Ok(c) => c,
            Err(e) => {
                row.failure = Some(e.clone());
                return row;
            }
        };
        row.saturated = rate > max_sustainable_rate(cost);
        let cfg = SimConfig {
            protocol,
            client_capacity: capacity,
            arrival_rate: rate,
            ..base.clone()
        };
        match run_many(&cfg, cost, mode) {
            Ok(m) => row.metrics = Some(m),
            Err(e) => {
                row.infeasible = matches!(e, DesimError::ConfigInfeasible { .. });
                row.failure = Some(e.to_string());
            }
        }
        row
    }))
}
