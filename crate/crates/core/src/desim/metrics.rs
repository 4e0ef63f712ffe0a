use serde::{Deserialize, Serialize};

use super::engine::run;
use super::{DesimError, SimConfig};
use crate::costmodel::{max_sustainable_rate, PhaseCosts};
use crate::exec::{map_indexed, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: u64,
    pub arrival_time: f64,
    /// When the request reached the head of the queue with no other online phase ahead.
    pub queue_exit_time: f64,
    pub precompute_wait: f64,
    pub online_start: f64,
    pub online_done: f64,
    pub latency: f64,
}

impl RequestRecord {
    pub fn queue_wait(&self) -> f64 {
        self.queue_exit_time - self.arrival_time
    }

    pub fn online(&self) -> f64 {
        self.online_done - self.online_start
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyDecomposition {
    pub queue_wait: f64,
    pub precompute_wait: f64,
    pub online: f64,
}

impl LatencyDecomposition {
    pub fn total(&self) -> f64 {
        self.queue_wait + self.precompute_wait + self.online
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Requests completed within the horizon, in completion order.
    pub records: Vec<RequestRecord>,
    pub arrivals: u64,
    /// Arrived but not finished by the horizon; excluded from the latency statistics.
    pub censored: u64,
    pub mean_latency: Option<f64>,
    /// Mean over completed requests other than the first one (which may hit a cold start).
    pub warm_mean_latency: Option<f64>,
    pub median_latency: Option<f64>,
    pub p95_latency: Option<f64>,
    pub decomposition: Option<LatencyDecomposition>,
    pub bundles_produced: u64,
    pub bundles_consumed: u64,
    pub client_high_water: u64,
    pub server_high_water: u64,
    pub served_within_horizon: u64,
    /// Seconds the serial resource spent on offline phases.
    pub offline_busy: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

impl RunMetrics {
    pub fn new(
        records: Vec<RequestRecord>,
        arrivals: u64,
        bundles_produced: u64,
        bundles_consumed: u64,
        client_high_water: u64,
        server_high_water: u64,
        offline_busy: f64,
    ) -> Self {
        let mut lat: Vec<f64> = records.iter().map(|r| r.latency).collect();
        lat.sort_by(f64::total_cmp);
        let median = if lat.is_empty() {
            None
        } else if lat.len() % 2 == 1 {
            Some(lat[lat.len() / 2])
        } else {
            Some((lat[lat.len() / 2 - 1] + lat[lat.len() / 2]) / 2.0)
        };
        RunMetrics {
            mean_latency: mean(records.iter().map(|r| r.latency)),
            warm_mean_latency: mean(records.iter().skip(1).map(|r| r.latency)),
            median_latency: median,
            p95_latency: quantile(&lat, 0.95),
            decomposition: decompose_latency_inner(&records),
            censored: arrivals - records.len() as u64,
            served_within_horizon: records.len() as u64,
            arrivals,
            records,
            bundles_produced,
            bundles_consumed,
            client_high_water,
            server_high_water,
            offline_busy,
        }
    }
}

fn decompose_latency_inner(records: &[RequestRecord]) -> Option<LatencyDecomposition> {
    Some(LatencyDecomposition {
        queue_wait: mean(records.iter().map(|r| r.queue_wait()))?,
        precompute_wait: mean(records.iter().map(|r| r.precompute_wait))?,
        online: mean(records.iter().map(|r| r.online()))?,
    })
}

/// Mean queueing, precompute-wait and online time over completed requests.
pub fn decompose_latency(metrics: &RunMetrics) -> Result<LatencyDecomposition, DesimError> {
    decompose_latency_inner(&metrics.records).ok_or(DesimError::NoCompletedRequests)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub n_runs: usize,
    /// Runs that completed at least one request; the latency statistics average over these.
    pub runs_with_completions: usize,
    pub mean_latency: Option<f64>,
    /// Half-width of the normal-approximation 95% interval of `mean_latency`.
    pub ci95_half_width: Option<f64>,
    pub warm_mean_latency: Option<f64>,
    pub median_latency: Option<f64>,
    pub p95_latency: Option<f64>,
    pub decomposition: Option<LatencyDecomposition>,
    pub mean_completed: f64,
    pub mean_censored: f64,
    pub mean_bundles_produced: f64,
    pub client_high_water: u64,
    pub server_high_water: u64,
    pub offline_latency: f64,
    pub online_latency: f64,
    pub max_sustainable_rate: f64,
    /// Arrival rate above `max_sustainable_rate`.
    pub saturated: bool,
    pub runs: Vec<RunMetrics>,
}

impl AggregateMetrics {
    pub fn from_runs(cfg: &SimConfig, cost: &PhaseCosts, runs: Vec<RunMetrics>) -> Self {
        let means: Vec<f64> = runs.iter().filter_map(|r| r.mean_latency).collect();
        let n = means.len();
        let mean_latency = mean(means.iter().copied());
        let ci95_half_width = mean_latency.map(|m| {
            if n < 2 {
                0.0
            } else {
                let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
                1.96 * (var / n as f64).sqrt()
            }
        });
        let decomposition = {
            let ds: Vec<LatencyDecomposition> = runs.iter().filter_map(|r| r.decomposition).collect();
            mean(ds.iter().map(|d| d.queue_wait)).map(|q| LatencyDecomposition {
                queue_wait: q,
                precompute_wait: mean(ds.iter().map(|d| d.precompute_wait)).unwrap_or(0.0),
                online: mean(ds.iter().map(|d| d.online)).unwrap_or(0.0),
            })
        };
        let nr = runs.len() as f64;
        let msr = max_sustainable_rate(cost);
        AggregateMetrics {
            n_runs: runs.len(),
            runs_with_completions: n,
            mean_latency,
            ci95_half_width,
            warm_mean_latency: mean(runs.iter().filter_map(|r| r.warm_mean_latency)),
            median_latency: mean(runs.iter().filter_map(|r| r.median_latency)),
            p95_latency: mean(runs.iter().filter_map(|r| r.p95_latency)),
            decomposition,
            mean_completed: runs.iter().map(|r| r.served_within_horizon as f64).sum::<f64>() / nr,
            mean_censored: runs.iter().map(|r| r.censored as f64).sum::<f64>() / nr,
            mean_bundles_produced: runs.iter().map(|r| r.bundles_produced as f64).sum::<f64>() / nr,
            client_high_water: runs.iter().map(|r| r.client_high_water).max().unwrap_or(0),
            server_high_water: runs.iter().map(|r| r.server_high_water).max().unwrap_or(0),
            offline_latency: cost.offline_latency,
            online_latency: cost.online_latency,
            max_sustainable_rate: msr,
            saturated: cfg.arrival_rate > msr,
            runs,
        }
    }
}

/// `cfg.n_runs` runs with seeds `cfg.seed + i`.
pub fn run_many(cfg: &SimConfig, cost: &PhaseCosts, mode: Mode) -> Result<AggregateMetrics, DesimError> {
    cfg.validate()?;
    let runs = map_indexed(mode, cfg.n_runs, |i| {
        let c = SimConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        run(&c, cost)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(AggregateMetrics::from_runs(cfg, cost, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(arrival: f64, exit: f64, start: f64, done: f64) -> RequestRecord {
        RequestRecord {
            id: 0,
            arrival_time: arrival,
            queue_exit_time: exit,
            precompute_wait: start - exit,
            online_start: start,
            online_done: done,
            latency: done - arrival,
        }
    }

    #[test]
    fn statistics_by_hand() {
        let m = RunMetrics::new(
            vec![
                rec(0.0, 0.0, 5.0, 6.0),
                rec(1.0, 6.0, 6.0, 7.0),
                rec(10.0, 10.0, 10.0, 11.0),
            ],
            4,
            3,
            3,
            0,
            0,
            0.0,
        );
        assert_eq!(m.mean_latency, Some(13.0 / 3.0));
        assert_eq!(m.median_latency, Some(6.0));
        assert_eq!(m.p95_latency, Some(6.0));
        assert_eq!(m.warm_mean_latency, Some(3.5));
        assert_eq!(m.censored, 1);
        let d = decompose_latency(&m).unwrap();
        assert!((d.total() - 13.0 / 3.0).abs() < 1e-12);
        assert!((d.queue_wait - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_run_has_no_decomposition() {
        let m = RunMetrics::new(Vec::new(), 0, 0, 0, 0, 0, 0.0);
        assert!(matches!(decompose_latency(&m), Err(DesimError::NoCompletedRequests)));
        assert_eq!(m.mean_latency, None);
    }
}
