use std::fmt;

use serde::{Deserialize, Serialize};

use super::PhaseCosts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Regime {
    Low,
    Moderate,
    High,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Low => "low",
            Regime::Moderate => "moderate",
            Regime::High => "high",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Regime::Low),
            "moderate" => Ok(Regime::Moderate),
            "high" => Ok(Regime::High),
            _ => Err(format!("unknown regime `{s}`")),
        }
    }
}

/// Reduction factors (baseline / optimized) needed to reach each regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub moderate_gc: f64,
    pub moderate_he: f64,
    pub high_gc: f64,
    pub high_he: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            moderate_gc: 4.0,
            moderate_he: 2.0,
            high_gc: 8.0,
            high_he: 4.0,
        }
    }
}

fn reduction(baseline: f64, current: f64) -> f64 {
    if current <= 0.0 {
        f64::INFINITY
    } else {
        baseline / current
    }
}

/// GC cost is garbled-circuit bytes; HE cost is the FLOP-proportional HE time.
pub fn reductions(costs: &PhaseCosts, baseline: &PhaseCosts) -> (f64, f64) {
    (
        reduction(baseline.gc_bytes as f64, costs.gc_bytes as f64),
        reduction(baseline.breakdown.he_linear, costs.breakdown.he_linear),
    )
}

/// Highest arrival-rate regime the optimized costs can serve, relative to an unoptimized
/// baseline. Without room for at least one precompute (`storage_ok == false`) the answer is Low.
pub fn classify_regime(costs: &PhaseCosts, baseline: &PhaseCosts, storage_ok: bool, t: &RegimeThresholds) -> Regime {
    if !storage_ok {
        return Regime::Low;
    }
    let (gc, he) = reductions(costs, baseline);
    if gc >= t.high_gc && he >= t.high_he {
        Regime::High
    } else if gc >= t.moderate_gc && he >= t.moderate_he {
        Regime::Moderate
    } else {
        Regime::Low
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::{
        apply_optimization, find_preset, phase_costs, shipped_presets, CostInputs, CostMode, CostModel, Protocol,
        DEFAULT_BANDWIDTH,
    };

    fn classify(name: &str) -> Regime {
        let cm = CostModel::shipped(CostMode::TableDirect).unwrap();
        let inp = CostInputs::preset("resnet18", "tiny").unwrap();
        let base = phase_costs(Protocol::ClientGarbler, &inp, &cm, DEFAULT_BANDWIDTH).unwrap();
        let presets = shipped_presets();
        let knobs = &find_preset(&presets, name).unwrap().knobs;
        let (i, m) = apply_optimization(&inp, &cm, knobs).unwrap();
        let c = phase_costs(Protocol::ClientGarbler, &i, &m, DEFAULT_BANDWIDTH).unwrap();
        classify_regime(&c, &base, true, &RegimeThresholds::default())
    }

    #[test]
    fn listed_presets() {
        assert_eq!(classify("DELPHI"), Regime::Low);
        assert_eq!(classify("DeepReDuce"), Regime::Moderate);
        assert_eq!(classify("DeepReDuce+Circa"), Regime::High);
    }

    #[test]
    fn no_room_is_low() {
        let c = PhaseCosts::fixed(Protocol::ServerGarbler, 1.0, 1.0, 0, 0);
        assert_eq!(
            classify_regime(&c, &c, false, &RegimeThresholds::default()),
            Regime::Low
        );
    }
}
