//! Per-phase latency, communication and storage for both protocol variants.
//!
//! Two evaluation modes share one calibration:
//! * `TableDirect` replays measured latencies for calibrated (protocol, model, dataset) triples
//!   and rescales them component-wise for other bandwidths or knobs.
//! * `ComponentScaled` evaluates fitted per-FLOP / per-weight / per-ReLU rates for any network.

pub mod fit;
mod knobs;
mod regime;
mod table;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netarch::{self, ArchError, DatasetSpec, Footprint, LayerCounts, NetworkArch, PRESET_MODELS};

pub use knobs::{
    arrow_factor, find_preset, load_presets, parse_presets, shipped_presets, KnobPreset, OptimizationKnobs,
    SHIPPED_PRESETS,
};
pub use regime::{classify_regime, reductions, Regime, RegimeThresholds};
pub use table::{
    canonical_dataset, canonical_model, load_table, parse_table, shipped_table, MeasuredCosts,
    SHIPPED as SHIPPED_TABLE, TABLE_HEADER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("insufficient calibration rows: {0}")]
    InsufficientRows(String),
    #[error("calibration rows are inconsistent: {0}")]
    InconsistentRows(String),
    #[error("no measured row for ({protocol}, {model}, {dataset}); use component-scaled mode")]
    UncalibratedTriple {
        protocol: Protocol,
        model: String,
        dataset: String,
    },
    #[error("table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("invalid knobs: {0}")]
    InvalidKnobs(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Protocol {
    ServerGarbler,
    ClientGarbler,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::ServerGarbler, Protocol::ClientGarbler];

    pub fn short(&self) -> &'static str {
        match self {
            Protocol::ServerGarbler => "sg",
            Protocol::ClientGarbler => "cg",
        }
    }

    fn index(self) -> usize {
        match self {
            Protocol::ServerGarbler => 0,
            Protocol::ClientGarbler => 1,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sg" | "servergarbler" | "server" => Ok(Protocol::ServerGarbler),
            "cg" | "clientgarbler" | "client" => Ok(Protocol::ClientGarbler),
            _ => Err(format!("unknown protocol `{s}` (expected sg or cg)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostMode {
    TableDirect,
    ComponentScaled,
}

impl FromStr for CostMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "table" | "tabledirect" => Ok(CostMode::TableDirect),
            "scaled" | "componentscaled" => Ok(CostMode::ComponentScaled),
            _ => Err(format!("unknown cost mode `{s}` (expected table or scaled)")),
        }
    }
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostMode::TableDirect => "table",
            CostMode::ComponentScaled => "scaled",
        })
    }
}

pub const DEFAULT_BANDWIDTH: f64 = 100e6;
pub const DEFAULT_GARBLER_STATE_BYTES_PER_RELU: u64 = 64;

/// Sizes of the objects moved and stored by the protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteModel {
    /// One field element (mask, share, masked activation).
    pub elem_bytes: u64,
    pub label_bytes_per_bit: u64,
    /// Bit width of a ReLU input share.
    pub relu_input_bits: u64,
    pub he_ciphertext_bytes_per_elem: u64,
    pub he_key_bytes: u64,
    /// Base-OT traffic in each direction.
    pub base_ot_bytes: u64,
    /// Garbled circuit plus the evaluator's offline input labels, per ReLU.
    pub gc_bytes_per_relu: u64,
    /// Label seeds and decoding state the garbler keeps, per ReLU.
    pub garbler_state_bytes_per_relu: u64,
}

impl Default for ByteModel {
    fn default() -> Self {
        ByteModel {
            elem_bytes: 8,
            label_bytes_per_bit: 16,
            relu_input_bits: 41,
            he_ciphertext_bytes_per_elem: 48,
            he_key_bytes: 2_000_000,
            base_ot_bytes: 8192,
            gc_bytes_per_relu: 17_500,
            garbler_state_bytes_per_relu: DEFAULT_GARBLER_STATE_BYTES_PER_RELU,
        }
    }
}

/// Byte totals for one inference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteBreakdown {
    pub offline_c2s: u64,
    pub offline_s2c: u64,
    pub online_c2s: u64,
    pub online_s2c: u64,
    pub client_storage: u64,
    pub server_storage: u64,
    pub gc_bytes: u64,
}

impl ByteBreakdown {
    pub fn offline_total(&self) -> u64 {
        self.offline_c2s + self.offline_s2c
    }

    pub fn online_total(&self) -> u64 {
        self.online_c2s + self.online_s2c
    }
}

impl ByteModel {
    /// Labels for one ReLU input share.
    pub fn label_bytes_per_relu(&self) -> u64 {
        self.relu_input_bits * self.label_bytes_per_bit
    }

    /// Garbled tables alone, without the two offline input-label sets.
    pub fn gc_circuit_bytes_per_relu(&self) -> u64 {
        self.gc_bytes_per_relu.saturating_sub(2 * self.label_bytes_per_relu())
    }

    pub fn client_mask_bytes(&self, fp: &Footprint) -> u64 {
        (fp.activation_elems + fp.block_output_elems) * self.elem_bytes
    }

    pub fn server_mask_bytes(&self, fp: &Footprint) -> u64 {
        fp.block_output_elems * self.elem_bytes
    }

    pub fn breakdown(&self, protocol: Protocol, fp: &Footprint) -> ByteBreakdown {
        let l = self.label_bytes_per_relu();
        let r = fp.relus;
        let e = self.elem_bytes;
        let ct = self.he_ciphertext_bytes_per_elem;
        let he_c2s = self.he_key_bytes + fp.activation_elems * ct + self.base_ot_bytes;
        let he_s2c = fp.block_output_elems * ct + self.base_ot_bytes;
        let gc = r * self.gc_bytes_per_relu;
        let state = r * self.garbler_state_bytes_per_relu;
        let client_masks = self.client_mask_bytes(fp);
        let server_masks = self.server_mask_bytes(fp);
        match protocol {
            Protocol::ServerGarbler => ByteBreakdown {
                // Client obtains labels for its two offline inputs by OT extension.
                offline_c2s: he_c2s + r * 2 * l,
                offline_s2c: he_s2c + r * self.gc_circuit_bytes_per_relu() + r * 4 * l,
                online_c2s: fp.input_elems * e + r * l,
                online_s2c: r * l + fp.output_elems * e,
                client_storage: client_masks + gc,
                server_storage: server_masks + state,
                gc_bytes: gc,
            },
            Protocol::ClientGarbler => ByteBreakdown {
                // Garbler sends its own input labels directly.
                offline_c2s: he_c2s + r * self.gc_circuit_bytes_per_relu() + r * 2 * l,
                offline_s2c: he_s2c,
                online_c2s: fp.input_elems * e + r * 2 * l,
                online_s2c: r * l + fp.output_elems * e,
                client_storage: client_masks + state,
                server_storage: server_masks + gc,
                gc_bytes: gc,
            },
        }
    }
}

/// Fitted compute rates (seconds).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// Fixed offline cost per inference (HE key material and parameter setup).
    pub offline_fixed: f64,
    pub he_seconds_per_flop: f64,
    pub he_seconds_per_weight: f64,
    pub he_seconds_per_layer: f64,
    pub gc_garble_seconds_per_relu: f64,
    pub online_fixed: f64,
    pub gc_eval_seconds_per_relu: f64,
    /// Online OT extension, Client-Garbler only.
    pub ot_online_seconds_per_relu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub latency: f64,
    pub storage: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            latency: 0.10,
            storage: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResidual {
    pub protocol: Protocol,
    pub model: String,
    pub dataset: String,
    pub offline: f64,
    pub online: f64,
    pub storage: Option<f64>,
}

/// Network-dependent inputs to the cost formulas, with any optimization knobs applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    pub model: String,
    pub dataset: String,
    /// Unoptimized counts.
    pub counts: LayerCounts,
    pub footprint: Footprint,
    pub linear_layers: u64,
    pub knobs: OptimizationKnobs,
}

impl CostInputs {
    pub fn from_arch(arch: &NetworkArch) -> Result<Self, ArchError> {
        Ok(CostInputs {
            model: canonical_model(&arch.name),
            dataset: canonical_dataset(&arch.input.name),
            counts: arch.count_layers()?,
            footprint: arch.footprint()?,
            linear_layers: arch.linear_layers() as u64,
            knobs: OptimizationKnobs::identity(),
        })
    }

    pub fn preset(model: &str, dataset: &str) -> Result<Self, ArchError> {
        let ds = DatasetSpec::preset(dataset)?;
        Self::from_arch(&netarch::build_preset(model, &ds)?)
    }

    /// Counts after knobs: ReLUs scale with `relu_factor`, FLOPs and weights with `flop_factor`.
    pub fn effective_counts(&self) -> LayerCounts {
        let k = &self.knobs;
        LayerCounts {
            relus: (self.counts.relus as f64 * k.relu_factor).round() as u64,
            flops: (self.counts.flops as f64 * k.flop_factor).round() as u64,
            params: (self.counts.params as f64 * k.flop_factor).round() as u64,
        }
    }

    pub fn effective_footprint(&self) -> Footprint {
        Footprint {
            relus: self.effective_counts().relus,
            ..self.footprint
        }
    }
}

/// Time components of one inference (seconds).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub he_setup: f64,
    pub he_linear: f64,
    pub gc_garble: f64,
    pub offline_comm: f64,
    pub online_fixed: f64,
    pub gc_eval: f64,
    pub ot_online: f64,
    pub online_comm: f64,
}

impl Breakdown {
    pub fn offline_compute(&self) -> f64 {
        self.he_setup + self.he_linear + self.gc_garble
    }

    /// HE share of offline compute time.
    pub fn he_fraction(&self) -> f64 {
        let c = self.offline_compute();
        if c > 0.0 {
            (self.he_setup + self.he_linear) / c
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostSource {
    Measured,
    /// Measured row rescaled for bandwidth or knobs.
    Rescaled,
    Modeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCosts {
    pub protocol: Protocol,
    pub offline_latency: f64,
    pub online_latency: f64,
    pub offline_comm_c2s: u64,
    pub offline_comm_s2c: u64,
    pub online_comm_c2s: u64,
    pub online_comm_s2c: u64,
    pub client_storage_delta: u64,
    pub server_storage_delta: u64,
    pub gc_bytes: u64,
    pub relus: u64,
    pub breakdown: Breakdown,
    pub source: CostSource,
}

impl PhaseCosts {
    pub fn offline_comm(&self) -> u64 {
        self.offline_comm_c2s + self.offline_comm_s2c
    }

    pub fn online_comm(&self) -> u64 {
        self.online_comm_c2s + self.online_comm_s2c
    }

    /// Storage a bundle occupies on the garbled-circuit holder.
    pub fn storage_of(&self, party_is_client: bool) -> u64 {
        if party_is_client {
            self.client_storage_delta
        } else {
            self.server_storage_delta
        }
    }

    /// Synthetic costs with no storage, for tests and what-if runs.
    pub fn fixed(protocol: Protocol, offline: f64, online: f64, client_storage: u64, server_storage: u64) -> Self {
        PhaseCosts {
            protocol,
            offline_latency: offline,
            online_latency: online,
            offline_comm_c2s: 0,
            offline_comm_s2c: 0,
            online_comm_c2s: 0,
            online_comm_s2c: 0,
            client_storage_delta: client_storage,
            server_storage_delta: server_storage,
            gc_bytes: 0,
            relus: 0,
            breakdown: Breakdown {
                he_linear: offline,
                online_fixed: online,
                ..Breakdown::default()
            },
            source: CostSource::Modeled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub mode: CostMode,
    pub bytes: ByteModel,
    pub rates: Rates,
    pub rows: Vec<MeasuredCosts>,
    /// Protocols with at least one calibration row.
    pub coverage: [bool; 2],
    /// Knobs folded into `rates` and `bytes` by [`apply_optimization`].
    pub applied: OptimizationKnobs,
    pub residuals: Vec<RowResidual>,
    pub tolerances: Tolerances,
}

fn relative_ls_through_origin(points: &[(f64, f64)]) -> Option<f64> {
    // minimises sum ((a*x - y) / y)^2
    let num: f64 = points.iter().map(|(a, y)| a / y).sum();
    let den: f64 = points.iter().map(|(a, y)| (a / y) * (a / y)).sum();
    (den > 0.0).then(|| num / den)
}

fn offline_features(c: &LayerCounts, layers: u64) -> [f64; 5] {
    [c.flops as f64, c.params as f64, layers as f64, 1.0, c.relus as f64]
}

fn online_features(protocol: Protocol, relus: u64) -> [f64; 3] {
    let r = relus as f64;
    let cg = if protocol == Protocol::ClientGarbler { r } else { 0.0 };
    [r, cg, 1.0]
}

/// Fits rates and byte sizes to measured rows. `inputs` supplies counts per (model, dataset).
pub fn calibrate(
    rows: &[MeasuredCosts],
    inputs: &BTreeMap<(String, String), CostInputs>,
    mode: CostMode,
    tolerances: Tolerances,
) -> Result<CostModel, CostError> {
    if rows.is_empty() {
        return Err(CostError::InsufficientRows("no rows".into()));
    }
    let lookup = |r: &MeasuredCosts| {
        inputs
            .get(&(r.model.clone(), r.dataset.clone()))
            .ok_or_else(|| CostError::InsufficientRows(format!("no architecture for ({}, {})", r.model, r.dataset)))
    };

    let mut bytes = ByteModel::default();
    // Storage: the garbled-circuit holder fixes the per-ReLU GC size, the other party the
    // garbler state.
    let mut gc_points = Vec::new();
    let mut state_points = Vec::new();
    for r in rows {
        let inp = lookup(r)?;
        let fp = &inp.footprint;
        let relus = fp.relus as f64;
        let (holder, other, holder_masks, other_masks) = match r.protocol {
            Protocol::ServerGarbler => (
                r.client_storage,
                r.server_storage,
                bytes.client_mask_bytes(fp),
                bytes.server_mask_bytes(fp),
            ),
            Protocol::ClientGarbler => (
                r.server_storage,
                r.client_storage,
                bytes.server_mask_bytes(fp),
                bytes.client_mask_bytes(fp),
            ),
        };
        if relus > 0.0 {
            if let Some(s) = holder {
                gc_points.push((relus, s - holder_masks as f64));
            }
            if let Some(s) = other {
                state_points.push((relus, s - other_masks as f64));
            }
        }
    }
    let g = relative_ls_through_origin(&gc_points)
        .ok_or_else(|| CostError::InsufficientRows("no storage measurement to size garbled circuits".into()))?;
    if g <= 0.0 {
        return Err(CostError::InconsistentRows(format!(
            "fitted garbled-circuit size {g:.1} B/ReLU is not positive"
        )));
    }
    bytes.gc_bytes_per_relu = g.round() as u64;
    if let Some(s) = relative_ls_through_origin(&state_points) {
        bytes.garbler_state_bytes_per_relu = s.max(0.0).round() as u64;
    }

    // Latency: subtract communication time, then fit compute rates shared by both protocols.
    let mut off_rows = Vec::new();
    let mut off_targets = Vec::new();
    let mut off_scale = Vec::new();
    let mut on_rows = Vec::new();
    let mut on_targets = Vec::new();
    let mut on_scale = Vec::new();
    for r in rows {
        let inp = lookup(r)?;
        let b = bytes.breakdown(r.protocol, &inp.footprint);
        let off_comm = r.offline_comm.unwrap_or(b.offline_total() as f64);
        let on_comm = r.online_comm.unwrap_or(b.online_total() as f64);
        off_rows.push(offline_features(&inp.counts, inp.linear_layers).to_vec());
        off_targets.push(r.offline_latency - off_comm / r.measured_bandwidth);
        off_scale.push(r.offline_latency);
        on_rows.push(online_features(r.protocol, inp.footprint.relus).to_vec());
        on_targets.push(r.online_latency - on_comm / r.measured_bandwidth);
        on_scale.push(r.online_latency);
    }
    let off = fit::fit_minimax(&off_rows, &off_targets, &off_scale, 400);
    let on = fit::fit_minimax(&on_rows, &on_targets, &on_scale, 400);
    let rates = Rates {
        he_seconds_per_flop: off.coeffs[0],
        he_seconds_per_weight: off.coeffs[1],
        he_seconds_per_layer: off.coeffs[2],
        offline_fixed: off.coeffs[3],
        gc_garble_seconds_per_relu: off.coeffs[4],
        gc_eval_seconds_per_relu: on.coeffs[0],
        ot_online_seconds_per_relu: on.coeffs[1],
        online_fixed: on.coeffs[2],
    };

    let mut coverage = [false; 2];
    for r in rows {
        coverage[r.protocol.index()] = true;
    }

    let mut residuals = Vec::new();
    let mut worst = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let inp = lookup(r)?;
        let b = bytes.breakdown(r.protocol, &inp.footprint);
        let storage = [
            r.client_storage.map(|m| (m, b.client_storage as f64)),
            r.server_storage.map(|m| (m, b.server_storage as f64)),
        ]
        .into_iter()
        .flatten()
        .map(|(m, p)| if m > 0.0 { (p - m).abs() / m } else { p })
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        let res = RowResidual {
            protocol: r.protocol,
            model: r.model.clone(),
            dataset: r.dataset.clone(),
            offline: off.residuals[i],
            online: on.residuals[i],
            storage,
        };
        if res.offline > tolerances.latency || res.online > tolerances.latency {
            worst.push(format!(
                "({}, {}, {}) latency residual offline {:.1}% online {:.1}%",
                r.protocol,
                r.model,
                r.dataset,
                res.offline * 100.0,
                res.online * 100.0
            ));
        }
        if res.storage.is_some_and(|s| s > tolerances.storage) {
            worst.push(format!(
                "({}, {}, {}) storage residual {:.1}%",
                r.protocol,
                r.model,
                r.dataset,
                res.storage.unwrap_or(0.0) * 100.0
            ));
        }
        residuals.push(res);
    }
    if !worst.is_empty() {
        return Err(CostError::InconsistentRows(worst.join("; ")));
    }

    Ok(CostModel {
        mode,
        bytes,
        rates,
        rows: rows.to_vec(),
        coverage,
        applied: OptimizationKnobs::identity(),
        residuals,
        tolerances,
    })
}

/// Cost inputs for every preset network on the datasets that appear in `rows`.
pub fn preset_inputs(rows: &[MeasuredCosts]) -> Result<BTreeMap<(String, String), CostInputs>, CostError> {
    let mut map = BTreeMap::new();
    for r in rows {
        let key = (r.model.clone(), r.dataset.clone());
        if map.contains_key(&key) {
            continue;
        }
        if PRESET_MODELS.iter().any(|m| m.id() == r.model) {
            map.insert(key, CostInputs::preset(&r.model, &r.dataset)?);
        }
    }
    Ok(map)
}

impl CostModel {
    /// Calibrated against the shipped measurements.
    pub fn shipped(mode: CostMode) -> Result<Self, CostError> {
        let rows = shipped_table();
        let inputs = preset_inputs(&rows)?;
        calibrate(&rows, &inputs, mode, Tolerances::default())
    }

    pub fn with_mode(&self, mode: CostMode) -> Self {
        CostModel { mode, ..self.clone() }
    }

    pub fn covers(&self, protocol: Protocol) -> bool {
        self.coverage[protocol.index()]
    }

    pub fn row(&self, protocol: Protocol, model: &str, dataset: &str) -> Option<&MeasuredCosts> {
        self.rows.iter().find(|r| r.matches(protocol, model, dataset))
    }

    /// Rates and byte sizes before any knobs were applied.
    fn base(&self) -> (Rates, ByteModel) {
        let k = &self.applied;
        let mut r = self.rates;
        r.he_seconds_per_flop /= k.he_per_flop_factor;
        r.he_seconds_per_weight /= k.he_per_flop_factor;
        r.he_seconds_per_layer /= k.he_per_flop_factor;
        r.gc_garble_seconds_per_relu /= k.gc_per_relu_factor;
        r.gc_eval_seconds_per_relu /= k.gc_per_relu_factor;
        r.ot_online_seconds_per_relu /= k.gc_per_relu_factor;
        let mut b = self.bytes;
        b.gc_bytes_per_relu = (b.gc_bytes_per_relu as f64 / k.gc_per_relu_factor).round() as u64;
        (r, b)
    }
}

fn components(protocol: Protocol, rates: &Rates, c: &LayerCounts, layers: u64) -> Breakdown {
    let relus = c.relus as f64;
    Breakdown {
        he_setup: rates.offline_fixed,
        he_linear: rates.he_seconds_per_flop * c.flops as f64
            + rates.he_seconds_per_weight * c.params as f64
            + rates.he_seconds_per_layer * layers as f64,
        gc_garble: rates.gc_garble_seconds_per_relu * relus,
        offline_comm: 0.0,
        online_fixed: rates.online_fixed,
        gc_eval: rates.gc_eval_seconds_per_relu * relus,
        ot_online: if protocol == Protocol::ClientGarbler {
            rates.ot_online_seconds_per_relu * relus
        } else {
            0.0
        },
        online_comm: 0.0,
    }
}

fn scale_to(parts: &mut [&mut f64], total: f64) {
    let sum: f64 = parts.iter().map(|p| **p).sum();
    if sum > 0.0 {
        for p in parts.iter_mut() {
            **p *= total / sum;
        }
    } else if let Some(first) = parts.first_mut() {
        **first = total;
    }
}

/// Total bytes of garbled circuits for one inference.
pub fn gc_storage(inputs: &CostInputs, cm: &CostModel) -> u64 {
    inputs.effective_counts().relus * cm.bytes.gc_bytes_per_relu
}

pub fn phase_costs(
    protocol: Protocol,
    inputs: &CostInputs,
    cm: &CostModel,
    bandwidth: f64,
) -> Result<PhaseCosts, CostError> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(CostError::InvalidKnobs(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if !cm.covers(protocol) {
        return Err(CostError::InsufficientRows(format!(
            "no calibration rows for protocol {protocol}"
        )));
    }
    let eff_counts = inputs.effective_counts();
    let eff_fp = inputs.effective_footprint();
    let bytes = cm.bytes.breakdown(protocol, &eff_fp);
    let mut out = PhaseCosts {
        protocol,
        offline_latency: 0.0,
        online_latency: 0.0,
        offline_comm_c2s: bytes.offline_c2s,
        offline_comm_s2c: bytes.offline_s2c,
        online_comm_c2s: bytes.online_c2s,
        online_comm_s2c: bytes.online_s2c,
        client_storage_delta: bytes.client_storage,
        server_storage_delta: bytes.server_storage,
        gc_bytes: bytes.gc_bytes,
        relus: eff_counts.relus,
        breakdown: Breakdown::default(),
        source: CostSource::Modeled,
    };

    let mut b = match cm.mode {
        CostMode::ComponentScaled => components(protocol, &cm.rates, &eff_counts, inputs.linear_layers),
        CostMode::TableDirect => {
            let row =
                cm.row(protocol, &inputs.model, &inputs.dataset)
                    .ok_or_else(|| CostError::UncalibratedTriple {
                        protocol,
                        model: inputs.model.clone(),
                        dataset: inputs.dataset.clone(),
                    })?;
            let (base_rates, base_bytes) = cm.base();
            let base_b = base_bytes.breakdown(protocol, &inputs.footprint);
            let off_comm = row.offline_comm.unwrap_or(base_b.offline_total() as f64);
            let on_comm = row.online_comm.unwrap_or(base_b.online_total() as f64);
            let mut c = components(protocol, &base_rates, &inputs.counts, inputs.linear_layers);
            let off_compute = (row.offline_latency - off_comm / row.measured_bandwidth).max(0.0);
            let on_compute = (row.online_latency - on_comm / row.measured_bandwidth).max(0.0);
            scale_to(&mut [&mut c.he_linear, &mut c.he_setup, &mut c.gc_garble], off_compute);
            scale_to(&mut [&mut c.online_fixed, &mut c.gc_eval, &mut c.ot_online], on_compute);
            let k = &inputs.knobs;
            let he = k.flop_factor * cm.applied.he_per_flop_factor;
            let gc = k.relu_factor * cm.applied.gc_per_relu_factor;
            c.he_linear *= he;
            c.gc_garble *= gc;
            c.gc_eval *= gc;
            c.ot_online *= gc;

            let untouched = inputs.knobs.is_identity() && cm.applied.is_identity();
            if untouched {
                if let Some(s) = row.client_storage {
                    out.client_storage_delta = s.round() as u64;
                }
                if let Some(s) = row.server_storage {
                    out.server_storage_delta = s.round() as u64;
                }
                if let Some(v) = row.offline_comm {
                    split_total(&mut out.offline_comm_c2s, &mut out.offline_comm_s2c, v);
                }
                if let Some(v) = row.online_comm {
                    split_total(&mut out.online_comm_c2s, &mut out.online_comm_s2c, v);
                }
            }
            if untouched && (bandwidth - row.measured_bandwidth).abs() <= 1e-9 * row.measured_bandwidth {
                c.offline_comm = off_comm / bandwidth;
                c.online_comm = on_comm / bandwidth;
                out.breakdown = c;
                out.offline_latency = row.offline_latency;
                out.online_latency = row.online_latency;
                out.source = CostSource::Measured;
                return Ok(out);
            }
            out.source = CostSource::Rescaled;
            c
        }
    };
    b.offline_comm = out.offline_comm() as f64 / bandwidth;
    b.online_comm = out.online_comm() as f64 / bandwidth;
    out.offline_latency = b.offline_compute() + b.offline_comm;
    out.online_latency = b.online_fixed + b.gc_eval + b.ot_online + b.online_comm;
    out.breakdown = b;
    assert!(
        out.offline_latency >= 0.0 && out.online_latency >= 0.0,
        "negative phase cost {out:?}"
    );
    Ok(out)
}

/// Re-splits a measured total proportionally to the modeled direction split.
fn split_total(c2s: &mut u64, s2c: &mut u64, total: f64) {
    let sum = (*c2s + *s2c) as f64;
    let share = if sum > 0.0 { *c2s as f64 / sum } else { 0.5 };
    *c2s = (total * share).round() as u64;
    *s2c = (total.round() as u64).saturating_sub(*c2s);
}

/// Scales counts and rates; the returned pair carries the knobs for later cost queries.
pub fn apply_optimization(
    inputs: &CostInputs,
    cm: &CostModel,
    knobs: &OptimizationKnobs,
) -> Result<(CostInputs, CostModel), CostError> {
    knobs.validate()?;
    let mut i = inputs.clone();
    i.knobs = inputs.knobs.compose(&OptimizationKnobs {
        gc_per_relu_factor: 1.0,
        he_per_flop_factor: 1.0,
        ..knobs.clone()
    });
    let mut m = cm.clone();
    let he = knobs.he_per_flop_factor;
    let gc = knobs.gc_per_relu_factor;
    m.rates.he_seconds_per_flop *= he;
    m.rates.he_seconds_per_weight *= he;
    m.rates.he_seconds_per_layer *= he;
    m.rates.gc_garble_seconds_per_relu *= gc;
    m.rates.gc_eval_seconds_per_relu *= gc;
    m.rates.ot_online_seconds_per_relu *= gc;
    m.bytes.gc_bytes_per_relu = (m.bytes.gc_bytes_per_relu as f64 * gc).round() as u64;
    m.applied = cm.applied.compose(&OptimizationKnobs {
        relu_factor: 1.0,
        flop_factor: 1.0,
        ..knobs.clone()
    });
    Ok((i, m))
}

/// Arrival rate above which the serial offline+online pipeline cannot keep up.
pub fn max_sustainable_rate(costs: &PhaseCosts) -> f64 {
    let t = costs.offline_latency + costs.online_latency;
    assert!(t > 0.0, "phase latencies must not both be zero");
    1.0 / t
}
