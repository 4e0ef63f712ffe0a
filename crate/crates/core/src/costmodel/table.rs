//! Measured per-phase costs, read from a tab-separated table.
//!
//! Columns: `protocol model dataset offline_s online_s offline_comm_bytes online_comm_bytes
//! client_storage_bytes server_storage_bytes bandwidth_bytes_per_s`. A `-` marks a value that
//! was not measured; the cost model derives it instead.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CostError, Protocol};
use crate::netarch::{DatasetSpec, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCosts {
    pub protocol: Protocol,
    pub model: String,
    pub dataset: String,
    pub offline_latency: f64,
    pub online_latency: f64,
    pub offline_comm: Option<f64>,
    pub online_comm: Option<f64>,
    pub client_storage: Option<f64>,
    pub server_storage: Option<f64>,
    pub measured_bandwidth: f64,
}

impl MeasuredCosts {
    pub fn matches(&self, protocol: Protocol, model: &str, dataset: &str) -> bool {
        self.protocol == protocol && self.model == model && self.dataset == dataset
    }
}

pub const TABLE_HEADER: [&str; 10] = [
    "protocol",
    "model",
    "dataset",
    "offline_s",
    "online_s",
    "offline_comm_bytes",
    "online_comm_bytes",
    "client_storage_bytes",
    "server_storage_bytes",
    "bandwidth_bytes_per_s",
];

/// Canonical identifiers so `c100` and `cifar100` name the same row.
pub fn canonical_model(name: &str) -> String {
    name.parse::<ModelKind>()
        .map(|m| m.id().to_string())
        .unwrap_or_else(|_| name.to_string())
}

pub fn canonical_dataset(name: &str) -> String {
    DatasetSpec::preset(name)
        .map(|d| d.name)
        .unwrap_or_else(|_| name.to_string())
}

pub fn parse_table(text: &str) -> Result<Vec<MeasuredCosts>, CostError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CostError::Table {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.iter().collect::<Vec<_>>() != TABLE_HEADER {
        return Err(CostError::Table {
            line: 1,
            message: format!("expected header `{}`", TABLE_HEADER.join("\\t")),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CostError::Table {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |message: String| CostError::Table { line, message };
        let num = |i: usize| -> Result<Option<f64>, CostError> {
            match &record[i] {
                "-" => Ok(None),
                s => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| bad(format!("column `{}`: `{s}` is not a number", TABLE_HEADER[i]))),
            }
        };
        let req = |i: usize| -> Result<f64, CostError> {
            num(i)?.ok_or_else(|| bad(format!("column `{}` is required", TABLE_HEADER[i])))
        };
        let row = MeasuredCosts {
            protocol: record[0]
                .parse()
                .map_err(|_| bad(format!("unknown protocol `{}`", &record[0])))?,
            model: canonical_model(&record[1]),
            dataset: canonical_dataset(&record[2]),
            offline_latency: req(3)?,
            online_latency: req(4)?,
            offline_comm: num(5)?,
            online_comm: num(6)?,
            client_storage: num(7)?,
            server_storage: num(8)?,
            measured_bandwidth: req(9)?,
        };
        if row.offline_latency <= 0.0 || row.online_latency <= 0.0 || row.measured_bandwidth <= 0.0 {
            return Err(bad("latencies and bandwidth must be positive".into()));
        }
        if [
            row.offline_comm,
            row.online_comm,
            row.client_storage,
            row.server_storage,
        ]
        .iter()
        .flatten()
        .any(|v| *v < 0.0)
        {
            return Err(bad("byte counts must be non-negative".into()));
        }
        if rows
            .iter()
            .any(|r: &MeasuredCosts| r.matches(row.protocol, &row.model, &row.dataset))
        {
            return Err(bad(format!(
                "duplicate row for ({}, {}, {})",
                row.protocol, row.model, row.dataset
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn load_table(path: &Path) -> Result<Vec<MeasuredCosts>, CostError> {
    let text = std::fs::read_to_string(path).map_err(|e| CostError::Io(format!("{}: {e}", path.display())))?;
    parse_table(&text)
}

/// The measurements shipped with the repository.
pub fn shipped_table() -> Vec<MeasuredCosts> {
    parse_table(SHIPPED).expect("shipped measured_costs.tsv parses")
}

pub const SHIPPED: &str = include_str!("../../../../configs/measured_costs.tsv");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_has_twelve_rows() {
        let rows = shipped_table();
        assert_eq!(rows.len(), 12);
        let r = rows
            .iter()
            .find(|r| r.matches(Protocol::ClientGarbler, "resnet18", "tiny"))
            .unwrap();
        assert_eq!((r.offline_latency, r.online_latency), (1549.1, 86.9));
    }

    #[test]
    fn rejects_bad_header_and_values() {
        assert!(matches!(parse_table("a\tb\n"), Err(CostError::Table { line: 1, .. })));
        let text = format!(
            "{}\nsg\tresnet32\tc100\tfast\t1\t-\t-\t-\t-\t1e8\n",
            TABLE_HEADER.join("\t")
        );
        assert!(matches!(parse_table(&text), Err(CostError::Table { line: 2, .. })));
    }
}
