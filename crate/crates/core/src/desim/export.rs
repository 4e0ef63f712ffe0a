//! CSV, JSON and JSON-lines output. Column sets are versioned by [`SCHEMA_VERSION`].

use std::io::Write;

use serde::Serialize;

use super::engine::TraceEvent;
use super::metrics::AggregateMetrics;
use super::sweep::SweepRow;
use super::{DesimError, SimConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub const RUNS_HEADER: &[&str] = &[
    "schema_version",
    "protocol",
    "model",
    "dataset",
    "rate",
    "client_capacity_bytes",
    "server_capacity_bytes",
    "bandwidth_bytes_per_s",
    "seed",
    "run",
    "arrivals",
    "completed",
    "censored",
    "mean_latency_s",
    "median_latency_s",
    "p95_latency_s",
    "queue_wait_s",
    "precompute_wait_s",
    "online_s",
    "bundles_produced",
    "bundles_consumed",
    "client_high_water_bytes",
    "server_high_water_bytes",
];

pub const AGGREGATE_HEADER: &[&str] = &[
    "schema_version",
    "protocol",
    "model",
    "dataset",
    "rate",
    "client_capacity_bytes",
    "server_capacity_bytes",
    "bandwidth_bytes_per_s",
    "horizon_s",
    "n_runs",
    "seed",
    "mean_latency_s",
    "ci95_half_width_s",
    "warm_mean_latency_s",
    "median_latency_s",
    "p95_latency_s",
    "queue_wait_s",
    "precompute_wait_s",
    "online_s",
    "mean_completed",
    "mean_censored",
    "offline_latency_s",
    "online_latency_s",
    "max_sustainable_rate",
    "saturated",
];

pub const SWEEP_HEADER: &[&str] = &[
    "schema_version",
    "protocol",
    "model",
    "dataset",
    "client_capacity_bytes",
    "rate",
    "statistic",
    "value",
    "ci95_half_width",
    "saturated",
    "infeasible",
    "failure",
];

fn io(e: impl std::fmt::Display) -> DesimError {
    DesimError::Io(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_runs_csv(out: impl Write, cfg: &SimConfig, agg: &AggregateMetrics) -> Result<(), DesimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUNS_HEADER).map_err(io)?;
    for (i, r) in agg.runs.iter().enumerate() {
        let d = r.decomposition;
        w.write_record([
            SCHEMA_VERSION.to_string(),
            cfg.protocol.short().to_string(),
            cfg.model.clone(),
            cfg.dataset.clone(),
            cfg.arrival_rate.to_string(),
            cfg.client_capacity.to_string(),
            cfg.server_capacity.to_string(),
            cfg.bandwidth.to_string(),
            cfg.seed.wrapping_add(i as u64).to_string(),
            i.to_string(),
            r.arrivals.to_string(),
            r.served_within_horizon.to_string(),
            r.censored.to_string(),
            opt(r.mean_latency),
            opt(r.median_latency),
            opt(r.p95_latency),
            opt(d.map(|d| d.queue_wait)),
            opt(d.map(|d| d.precompute_wait)),
            opt(d.map(|d| d.online)),
            r.bundles_produced.to_string(),
            r.bundles_consumed.to_string(),
            r.client_high_water.to_string(),
            r.server_high_water.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

fn aggregate_record(cfg: &SimConfig, a: &AggregateMetrics) -> Vec<String> {
    let d = a.decomposition;
    vec![
        SCHEMA_VERSION.to_string(),
        cfg.protocol.short().to_string(),
        cfg.model.clone(),
        cfg.dataset.clone(),
        cfg.arrival_rate.to_string(),
        cfg.client_capacity.to_string(),
        cfg.server_capacity.to_string(),
        cfg.bandwidth.to_string(),
        cfg.horizon.to_string(),
        a.n_runs.to_string(),
        cfg.seed.to_string(),
        opt(a.mean_latency),
        opt(a.ci95_half_width),
        opt(a.warm_mean_latency),
        opt(a.median_latency),
        opt(a.p95_latency),
        opt(d.map(|d| d.queue_wait)),
        opt(d.map(|d| d.precompute_wait)),
        opt(d.map(|d| d.online)),
        a.mean_completed.to_string(),
        a.mean_censored.to_string(),
        a.offline_latency.to_string(),
        a.online_latency.to_string(),
        a.max_sustainable_rate.to_string(),
        a.saturated.to_string(),
    ]
}

pub fn write_aggregate_csv<'a>(
    out: impl Write,
    rows: impl IntoIterator<Item = (&'a SimConfig, &'a AggregateMetrics)>,
) -> Result<(), DesimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER).map_err(io)?;
    for (cfg, a) in rows {
        w.write_record(aggregate_record(cfg, a)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Long format: one line per (protocol, capacity, rate, statistic).
pub fn write_sweep_csv(out: impl Write, base: &SimConfig, rows: &[SweepRow]) -> Result<(), DesimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(io)?;
    for row in rows {
        let key = |stat: &str, value: Option<f64>, ci: Option<f64>| {
            vec![
                SCHEMA_VERSION.to_string(),
                row.protocol.short().to_string(),
                base.model.clone(),
                base.dataset.clone(),
                row.client_capacity.to_string(),
                row.rate.to_string(),
                stat.to_string(),
                opt(value),
                opt(ci),
                row.saturated.to_string(),
                row.infeasible.to_string(),
                row.failure.clone().unwrap_or_default(),
            ]
        };
        let Some(m) = &row.metrics else {
            w.write_record(key("mean_latency", None, None)).map_err(io)?;
            continue;
        };
        let d = m.decomposition;
        let stats = [
            ("mean_latency", m.mean_latency, m.ci95_half_width),
            ("warm_mean_latency", m.warm_mean_latency, None),
            ("median_latency", m.median_latency, None),
            ("p95_latency", m.p95_latency, None),
            ("queue_wait", d.map(|d| d.queue_wait), None),
            ("precompute_wait", d.map(|d| d.precompute_wait), None),
            ("online", d.map(|d| d.online), None),
            ("completed", Some(m.mean_completed), None),
            ("censored", Some(m.mean_censored), None),
        ];
        for (s, v, ci) in stats {
            w.write_record(key(s, v, ci)).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    schema_version: u32,
    config: &'a SimConfig,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct Summary<'a> {
    metrics: &'a AggregateMetrics,
}

/// Aggregate as JSON; per-request records are left out.
pub fn aggregate_json(cfg: &SimConfig, agg: &AggregateMetrics) -> Result<String, DesimError> {
    let trimmed = AggregateMetrics {
        runs: Vec::new(),
        ..agg.clone()
    };
    serde_json::to_string_pretty(&JsonDoc {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        body: Summary { metrics: &trimmed },
    })
    .map_err(io)
}

#[derive(Serialize)]
struct SweepBody<'a> {
    rows: &'a [SweepRow],
}

pub fn sweep_json(base: &SimConfig, rows: &[SweepRow]) -> Result<String, DesimError> {
    let trimmed: Vec<SweepRow> = rows
        .iter()
        .map(|r| SweepRow {
            metrics: r.metrics.as_ref().map(|m| AggregateMetrics {
                runs: Vec::new(),
                ..m.clone()
            }),
            ..r.clone()
        })
        .collect();
    serde_json::to_string_pretty(&JsonDoc {
        schema_version: SCHEMA_VERSION,
        config: base,
        body: SweepBody { rows: &trimmed },
    })
    .map_err(io)
}

pub fn write_trace_jsonl(mut out: impl Write, trace: &[TraceEvent]) -> Result<(), DesimError> {
    for e in trace {
        serde_json::to_writer(&mut out, e).map_err(io)?;
        out.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}
