use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CostError;

/// Multiplicative what-if factors applied to counts and rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationKnobs {
    /// Zero models a network without ReLUs.
    pub relu_factor: f64,
    pub flop_factor: f64,
    pub gc_per_relu_factor: f64,
    pub he_per_flop_factor: f64,
    pub label: String,
}

impl Default for OptimizationKnobs {
    fn default() -> Self {
        Self::identity()
    }
}

impl OptimizationKnobs {
    pub fn identity() -> Self {
        OptimizationKnobs {
            relu_factor: 1.0,
            flop_factor: 1.0,
            gc_per_relu_factor: 1.0,
            he_per_flop_factor: 1.0,
            label: "baseline".into(),
        }
    }

    pub fn new(relu: f64, gc: f64, flop: f64, he: f64, label: impl Into<String>) -> Result<Self, CostError> {
        let k = OptimizationKnobs {
            relu_factor: relu,
            flop_factor: flop,
            gc_per_relu_factor: gc,
            he_per_flop_factor: he,
            label: label.into(),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(self.relu_factor.is_finite() && self.relu_factor >= 0.0)
            || !ok(self.flop_factor)
            || !ok(self.gc_per_relu_factor)
            || !ok(self.he_per_flop_factor)
        {
            return Err(CostError::InvalidKnobs(format!(
                "factors must be positive and finite (relu may be 0), got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.relu_factor == 1.0
            && self.flop_factor == 1.0
            && self.gc_per_relu_factor == 1.0
            && self.he_per_flop_factor == 1.0
    }

    /// Component-wise product.
    pub fn compose(&self, other: &OptimizationKnobs) -> OptimizationKnobs {
        let label = match (self.is_identity(), other.is_identity()) {
            (true, _) => other.label.clone(),
            (_, true) => self.label.clone(),
            _ => format!("{}+{}", self.label, other.label),
        };
        OptimizationKnobs {
            relu_factor: self.relu_factor * other.relu_factor,
            flop_factor: self.flop_factor * other.flop_factor,
            gc_per_relu_factor: self.gc_per_relu_factor * other.gc_per_relu_factor,
            he_per_flop_factor: self.he_per_flop_factor * other.he_per_flop_factor,
            label,
        }
    }

    /// Parses `relu=0.2,flop=0.5,gc=1,he=1`. Unmentioned factors stay at 1.
    pub fn parse_assignments(text: &str) -> Result<Self, CostError> {
        let mut k = OptimizationKnobs::identity();
        k.label = "custom".into();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| CostError::InvalidKnobs(format!("expected key=value, got `{part}`")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| CostError::InvalidKnobs(format!("`{value}` is not a number")))?;
            match key.trim() {
                "relu" | "relu_factor" => k.relu_factor = v,
                "flop" | "flops" | "flop_factor" => k.flop_factor = v,
                "gc" | "gc_per_relu" | "gc_per_relu_factor" => k.gc_per_relu_factor = v,
                "he" | "he_per_flop" | "he_per_flop_factor" => k.he_per_flop_factor = v,
                "label" => {}
                other => {
                    return Err(CostError::InvalidKnobs(format!(
                        "unknown knob `{other}` (expected relu, flop, gc, he)"
                    )))
                }
            }
        }
        k.validate()?;
        Ok(k)
    }
}

/// Maps the arrow notation to a factor: each arrow halves or doubles, `Const` is 1 and `-`
/// (the quantity is absent from the method) is 0 for ReLU counts and 1 elsewhere.
pub fn arrow_factor(symbol: &str, absent: f64) -> Option<f64> {
    match symbol {
        "Const" | "const" | "=" => Some(1.0),
        "-" => Some(absent),
        s if !s.is_empty() && s.chars().all(|c| c == 'v') => Some(0.5f64.powi(s.len() as i32)),
        s if !s.is_empty() && s.chars().all(|c| c == '^') => Some(2f64.powi(s.len() as i32)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnobPreset {
    pub knobs: OptimizationKnobs,
    /// Regime the method is listed under, kept for cross-checking the classifier.
    pub listed_regime: String,
    pub arrows: [String; 4],
}

/// Reads `name regime relu gc_per_relu flops he_per_flop [relu_factor_override]`.
///
/// Arrow columns use `v`/`^` repeated, `Const` or `-`. The optional last column replaces the
/// arrow-derived ReLU factor when a method reports an exact reduction.
pub fn parse_presets(text: &str) -> Result<Vec<KnobPreset>, CostError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with("name\t") {
            continue;
        }
        let bad = |m: String| CostError::Table {
            line: i + 1,
            message: m,
        };
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 6 && cols.len() != 7 {
            return Err(bad(format!(
                "expected 6 or 7 tab-separated columns, got {}",
                cols.len()
            )));
        }
        let f = |s: &str, absent: f64| arrow_factor(s, absent).ok_or_else(|| bad(format!("bad arrow `{s}`")));
        let mut relu = f(cols[2], 0.0)?;
        if let Some(o) = cols.get(6) {
            relu = o.parse().map_err(|_| bad(format!("bad override `{o}`")))?;
        }
        let knobs = OptimizationKnobs::new(relu, f(cols[3], 1.0)?, f(cols[4], 1.0)?, f(cols[5], 1.0)?, cols[0])
            .map_err(|e| bad(e.to_string()))?;
        out.push(KnobPreset {
            knobs,
            listed_regime: cols[1].to_string(),
            arrows: [cols[2], cols[3], cols[4], cols[5]].map(String::from),
        });
    }
    Ok(out)
}

pub const SHIPPED_PRESETS: &str = include_str!("../../../../configs/optimizations.tsv");

pub fn shipped_presets() -> Vec<KnobPreset> {
    parse_presets(SHIPPED_PRESETS).expect("shipped optimizations.tsv parses")
}

pub fn load_presets(path: &Path) -> Result<Vec<KnobPreset>, CostError> {
    let text = std::fs::read_to_string(path).map_err(|e| CostError::Io(format!("{}: {e}", path.display())))?;
    parse_presets(&text)
}

pub fn find_preset<'a>(presets: &'a [KnobPreset], name: &str) -> Option<&'a KnobPreset> {
    let norm = |s: &str| s.to_ascii_lowercase().replace([' ', '-', '_'], "");
    presets.iter().find(|p| norm(&p.knobs.label) == norm(name))
}
