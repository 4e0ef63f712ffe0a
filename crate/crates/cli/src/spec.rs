//! Flat `key=value` experiment specs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pisim::costmodel::{CostMode, OptimizationKnobs, Protocol};
use pisim::desim::{OfflinePolicy, SimConfig, GB};

pub const KEYS: &[&str] = &[
    "name",
    "model",
    "dataset",
    "arch",
    "protocol",
    "protocols",
    "rate",
    "rates",
    "client_capacity_gb",
    "capacities_gb",
    "server_capacity_gb",
    "horizon",
    "n_runs",
    "seed",
    "bandwidth",
    "cost_mode",
    "knobs",
    "policy",
    "out_dir",
    "formats",
    "profile",
];

/// Horizon and run count of the reduced-scale profile.
pub const CI_HORIZON: f64 = 4.0 * 3600.0;
pub const CI_RUNS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub sim: SimConfig,
    pub arch: Option<PathBuf>,
    pub protocols: Vec<Protocol>,
    pub rates: Vec<f64>,
    pub capacities: Vec<u64>,
    pub out_dir: PathBuf,
    pub formats: Formats,
    /// Raw `knobs` value, resolved against the preset table later.
    pub knobs: Option<String>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let sim = SimConfig::default();
        ExperimentSpec {
            name: "experiment".into(),
            protocols: vec![sim.protocol],
            rates: vec![sim.arrival_rate],
            capacities: vec![sim.client_capacity],
            sim,
            arch: None,
            out_dir: PathBuf::from("results"),
            formats: Formats { csv: true, json: true },
            knobs: None,
        }
    }
}

fn list<T>(value: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("list is empty");
    }
    Ok(items)
}

fn number(s: &str) -> Result<f64> {
    let v: f64 = s.parse().with_context(|| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        bail!("`{s}` is not finite");
    }
    Ok(v)
}

fn gigabytes(s: &str) -> Result<u64> {
    let v = number(s)?;
    if v <= 0.0 {
        bail!("capacity must be positive, got `{s}`");
    }
    Ok((v * GB as f64).round() as u64)
}

fn protocol(s: &str) -> Result<Protocol> {
    s.parse().map_err(anyhow::Error::msg)
}

pub fn parse_policy(s: &str) -> Result<OfflinePolicy> {
    match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
        "preemptive" => Ok(OfflinePolicy::Preemptive),
        "nonpreemptive" => Ok(OfflinePolicy::NonPreemptive),
        _ => bail!("unknown policy `{s}` (expected preemptive or non-preemptive)"),
    }
}

impl ExperimentSpec {
    /// Applies one assignment. Singular keys also reset their list counterpart and vice versa,
    /// so the last assignment always wins.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let s = &mut self.sim;
        match key.trim() {
            "name" => self.name = v.to_string(),
            "model" => s.model = v.to_string(),
            "dataset" => s.dataset = v.to_string(),
            "arch" => self.arch = Some(PathBuf::from(v)),
            "protocol" => {
                s.protocol = protocol(v)?;
                self.protocols = vec![s.protocol];
            }
            "protocols" => {
                self.protocols = list(v, protocol)?;
                s.protocol = self.protocols[0];
            }
            "rate" => {
                s.arrival_rate = number(v)?;
                self.rates = vec![s.arrival_rate];
            }
            "rates" => {
                self.rates = list(v, number)?;
                s.arrival_rate = self.rates[0];
            }
            "client_capacity_gb" => {
                s.client_capacity = gigabytes(v)?;
                self.capacities = vec![s.client_capacity];
            }
            "capacities_gb" => {
                self.capacities = list(v, gigabytes)?;
                s.client_capacity = self.capacities[0];
            }
            "server_capacity_gb" => s.server_capacity = gigabytes(v)?,
            "horizon" => s.horizon = number(v)?,
            "n_runs" => s.n_runs = v.parse().with_context(|| format!("`{v}` is not a run count"))?,
            "seed" => s.seed = v.parse().with_context(|| format!("`{v}` is not a seed"))?,
            "bandwidth" => s.bandwidth = number(v)?,
            "cost_mode" => s.cost_mode = v.parse::<CostMode>().map_err(anyhow::Error::msg)?,
            "knobs" => self.knobs = (!v.is_empty() && v != "none").then(|| v.to_string()),
            "policy" => s.policy = parse_policy(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "formats" => {
                let fs = list(v, |f| match f {
                    "csv" | "json" => Ok(f.to_string()),
                    _ => bail!("unknown format `{f}` (expected csv or json)"),
                })?;
                self.formats = Formats {
                    csv: fs.iter().any(|f| f == "csv"),
                    json: fs.iter().any(|f| f == "json"),
                };
            }
            "profile" => match v {
                "ci" => {
                    s.horizon = CI_HORIZON;
                    s.n_runs = CI_RUNS;
                }
                "full" => {
                    s.horizon = pisim::desim::DEFAULT_HORIZON;
                    s.n_runs = pisim::desim::DEFAULT_RUNS;
                }
                _ => bail!("unknown profile `{v}` (expected ci or full)"),
            },
            other => bail!("unknown key `{other}` (valid keys: {})", KEYS.join(", ")),
        }
        Ok(())
    }

    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .with_context(|| format!("expected key=value, got `{assignment}`"))?;
        self.set(k, v).with_context(|| format!("in `{assignment}`"))
    }

    /// Applies every non-comment line of a spec document. `arch` paths are taken relative to
    /// `base`.
    pub fn apply_document(&mut self, text: &str, base: Option<&Path>) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.apply(line).with_context(|| format!("line {}", i + 1))?;
            if let (Some(base), Some(arch)) = (base, &self.arch) {
                if line.starts_with("arch") && arch.is_relative() {
                    self.arch = Some(base.join(arch));
                }
            }
        }
        Ok(())
    }

    pub fn knobs(&self, presets: &[pisim::costmodel::KnobPreset]) -> Result<OptimizationKnobs> {
        resolve_knobs(self.knobs.as_deref(), presets)
    }
}

/// A preset name or `relu=..,flop=..,gc=..,he=..` assignments.
pub fn resolve_knobs(text: Option<&str>, presets: &[pisim::costmodel::KnobPreset]) -> Result<OptimizationKnobs> {
    let Some(t) = text else {
        return Ok(OptimizationKnobs::identity());
    };
    if t.contains('=') {
        return Ok(OptimizationKnobs::parse_assignments(t)?);
    }
    match pisim::costmodel::find_preset(presets, t) {
        Some(p) => Ok(p.knobs.clone()),
        None => bail!(
            "unknown knob preset `{t}` (valid: {})",
            presets
                .iter()
                .map(|p| p.knobs.label.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}
