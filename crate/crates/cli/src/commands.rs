use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pisim::costmodel::{
    apply_optimization, calibrate, classify_regime, max_sustainable_rate, parse_presets, parse_table, phase_costs,
    preset_inputs, shipped_presets, shipped_table, CostError, CostInputs, CostMode, CostModel, KnobPreset, PhaseCosts,
    RegimeThresholds, Tolerances,
};
use pisim::desim::export::{
    aggregate_json, sweep_json, write_aggregate_csv, write_runs_csv, write_sweep_csv, write_trace_jsonl,
};
use pisim::desim::{run_many, run_traced, sweep, AggregateMetrics, DesimError, SimConfig, GB};
use pisim::exec::{with_jobs, Mode};
use pisim::netarch::{build_preset, parse_arch, ArchError, DatasetSpec, NetworkArch, Weights};
use pisim::protocol::{verify_against_plaintext, ProtocolConfig, ProtocolError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::spec::ExperimentSpec;
use crate::{
    ArchCommand, Cli, Command, CostArgs, Exit, ReportFormat, SimulateArgs, SpecArgs, SweepArgs, VerifyArgs,
    EXIT_FAILURE, EXIT_INFEASIBLE, EXIT_USAGE,
};

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    Exit(EXIT_USAGE, format!("{e:#}")).into()
}

/// Maps the first recognised error in the chain to an exit status.
pub fn exit_status(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(Exit(code, _)) = cause.downcast_ref::<Exit>() {
            return *code;
        }
        if cause.downcast_ref::<ArchError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(c) = cause.downcast_ref::<CostError>() {
            return cost_status(c);
        }
        if let Some(d) = cause.downcast_ref::<DesimError>() {
            return match d {
                DesimError::ConfigInfeasible { .. } => EXIT_INFEASIBLE,
                DesimError::InvalidConfig(_) => EXIT_USAGE,
                DesimError::Cost(c) => cost_status(c),
                _ => EXIT_FAILURE,
            };
        }
        if let Some(p) = cause.downcast_ref::<ProtocolError>() {
            return match p {
                ProtocolError::FieldOverflowRisk { .. } | ProtocolError::Arch(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            };
        }
    }
    EXIT_FAILURE
}

fn cost_status(c: &CostError) -> u8 {
    match c {
        CostError::Io(_) => EXIT_FAILURE,
        _ => EXIT_USAGE,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = Config::new(cli.config_dir);
    let jobs = cli.jobs;
    match cli.command {
        Command::Cost(a) => cost(&cfg, a),
        Command::Simulate(a) => with_jobs(jobs, || simulate(&cfg, a)),
        Command::Sweep(a) => with_jobs(jobs, || run_sweep(&cfg, a)),
        Command::Verify(a) => with_jobs(jobs, || verify(&cfg, a)),
        Command::Arch {
            command: ArchCommand::Check { files },
        } => arch_check(&cfg, &files),
    }
}

struct Config {
    dir: PathBuf,
}

impl Config {
    fn new(dir: Option<PathBuf>) -> Self {
        let dir = dir.unwrap_or_else(|| {
            let built = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
            if built.is_dir() {
                built
            } else {
                PathBuf::from("configs")
            }
        });
        Config { dir }
    }

    fn read_optional(&self, file: &str) -> Result<Option<String>> {
        let p = self.dir.join(file);
        if !p.exists() {
            return Ok(None);
        }
        fs::read_to_string(&p)
            .map(Some)
            .with_context(|| format!("reading {}", p.display()))
    }

    fn cost_model(&self, mode: CostMode) -> Result<CostModel> {
        let rows = match self.read_optional("measured_costs.tsv")? {
            Some(text) => parse_table(&text).context("measured_costs.tsv")?,
            None => shipped_table(),
        };
        let inputs = preset_inputs(&rows)?;
        calibrate(&rows, &inputs, mode, Tolerances::default()).context("calibrating cost model")
    }

    fn presets(&self) -> Result<Vec<KnobPreset>> {
        Ok(match self.read_optional("optimizations.tsv")? {
            Some(text) => parse_presets(&text).context("optimizations.tsv")?,
            None => shipped_presets(),
        })
    }

    /// An existing path as given, else `<dir>/<sub>/<name>` with `ext` appended if missing.
    fn resolve(&self, name: &Path, sub: &str, ext: &str) -> PathBuf {
        if name.exists() {
            return name.to_path_buf();
        }
        let mut p = self.dir.join(sub).join(name);
        if p.extension().is_none() {
            p.set_extension(ext);
        }
        p
    }
}

fn load_arch(cfg: &Config, path: &Path) -> Result<NetworkArch> {
    let p = cfg.resolve(path, "archs", "arch");
    let text = fs::read_to_string(&p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
    parse_arch(&text).with_context(|| p.display().to_string())
}

fn network(cfg: &Config, model: &str, dataset: &str, arch: Option<&Path>) -> Result<NetworkArch> {
    match arch {
        Some(p) => load_arch(cfg, p),
        None => Ok(build_preset(model, &DatasetSpec::preset(dataset)?)?),
    }
}

fn gb(bytes: u64) -> String {
    format!("{:.2} GB", bytes as f64 / GB as f64)
}

fn human_bytes(bytes: u64) -> String {
    let b = bytes as f64;
    if b >= 1e9 {
        format!("{:.2} GB", b / 1e9)
    } else if b >= 1e6 {
        format!("{:.2} MB", b / 1e6)
    } else if b >= 1e3 {
        format!("{:.2} KB", b / 1e3)
    } else {
        format!("{bytes} B")
    }
}

fn cost(cfg: &Config, a: CostArgs) -> Result<()> {
    let mode: CostMode = a.cost_mode.parse().map_err(usage)?;
    let cm = cfg.cost_model(mode)?;
    let presets = cfg.presets()?;
    let knobs = crate::spec::resolve_knobs(a.knobs.as_deref(), &presets).map_err(usage)?;
    let arch = network(cfg, &a.network.model, &a.network.dataset, a.network.arch.as_deref())?;
    let inputs = CostInputs::from_arch(&arch)?;
    let (opt_inputs, opt_cm) = apply_optimization(&inputs, &cm, &knobs)?;
    let capacity = (a.client_capacity_gb * GB as f64).round() as u64;
    let mut reports = Vec::new();
    for p in a.protocol.protocols() {
        let base = phase_costs(p, &inputs, &cm, a.bandwidth)?;
        let c = phase_costs(p, &opt_inputs, &opt_cm, a.bandwidth)?;
        let regime = classify_regime(
            &c,
            &base,
            c.client_storage_delta <= capacity,
            &RegimeThresholds::default(),
        );
        reports.push((c, regime));
    }
    let out = std::io::stdout();
    let mut out = out.lock();
    match a.format {
        ReportFormat::Json => {
            let docs: Vec<serde_json::Value> = reports
                .iter()
                .map(|(c, r)| {
                    serde_json::json!({
                        "model": inputs.model,
                        "dataset": inputs.dataset,
                        "knobs": knobs,
                        "costs": c,
                        "max_sustainable_rate": max_sustainable_rate(c),
                        "regime": r.to_string(),
                    })
                })
                .collect();
            writeln!(out, "{}", serde_json::to_string_pretty(&docs)?)?;
        }
        ReportFormat::Text => {
            for (i, (c, r)) in reports.iter().enumerate() {
                if i > 0 {
                    writeln!(out)?;
                }
                write_cost_report(&mut out, &inputs, &knobs.label, c, &r.to_string())?;
            }
        }
    }
    Ok(())
}

fn write_cost_report(
    out: &mut impl Write,
    inputs: &CostInputs,
    knobs: &str,
    c: &PhaseCosts,
    regime: &str,
) -> Result<()> {
    let b = &c.breakdown;
    writeln!(out, "protocol           {}", c.protocol)?;
    writeln!(
        out,
        "network            {}/{} ({} ReLUs, {:.1}M FLOPs, {:.2}M params)",
        inputs.model,
        inputs.dataset,
        c.relus,
        inputs.effective_counts().flops as f64 / 1e6,
        inputs.effective_counts().params as f64 / 1e6
    )?;
    writeln!(out, "knobs              {knobs}")?;
    writeln!(out, "source             {:?}", c.source)?;
    writeln!(
        out,
        "offline latency    {:.1} s (HE {:.1} s, garbling {:.1} s, comm {:.1} s)",
        c.offline_latency,
        b.he_setup + b.he_linear,
        b.gc_garble,
        b.offline_comm
    )?;
    writeln!(
        out,
        "online latency     {:.1} s (evaluation {:.1} s, OT {:.1} s, comm {:.1} s)",
        c.online_latency,
        b.online_fixed + b.gc_eval,
        b.ot_online,
        b.online_comm
    )?;
    writeln!(
        out,
        "offline comm       {} (client->server {}, server->client {})",
        human_bytes(c.offline_comm()),
        human_bytes(c.offline_comm_c2s),
        human_bytes(c.offline_comm_s2c)
    )?;
    writeln!(
        out,
        "online comm        {} (client->server {}, server->client {})",
        human_bytes(c.online_comm()),
        human_bytes(c.online_comm_c2s),
        human_bytes(c.online_comm_s2c)
    )?;
    writeln!(out, "garbled circuits   {}", human_bytes(c.gc_bytes))?;
    writeln!(out, "client storage     {}", human_bytes(c.client_storage_delta))?;
    writeln!(out, "server storage     {}", human_bytes(c.server_storage_delta))?;
    writeln!(out, "max rate           {:.3e} req/s", max_sustainable_rate(c))?;
    writeln!(out, "regime             {regime}")?;
    Ok(())
}

/// File, then typed flags, then `--set` assignments.
fn build_spec(cfg: &Config, a: &SpecArgs, extra: &[(&str, Option<String>)]) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    if let Some(s) = &a.spec {
        let path = match s.strip_prefix('@') {
            Some(name) => cfg.resolve(Path::new(name), "experiments", "exp"),
            None => PathBuf::from(s),
        };
        let text = fs::read_to_string(&path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        if let Some(stem) = path.file_stem() {
            spec.name = stem.to_string_lossy().into_owned();
        }
        spec.apply_document(&text, path.parent())
            .with_context(|| path.display().to_string())
            .map_err(usage)?;
    }
    let flags: Vec<(&str, Option<String>)> = vec![
        ("name", a.name.clone()),
        ("model", a.model.clone()),
        ("dataset", a.dataset.clone()),
        ("arch", a.arch.clone()),
        ("horizon", a.horizon.map(|v| v.to_string())),
        ("n_runs", a.runs.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("bandwidth", a.bandwidth.map(|v| v.to_string())),
        ("server_capacity_gb", a.server_capacity_gb.map(|v| v.to_string())),
        ("cost_mode", a.cost_mode.clone()),
        ("knobs", a.knobs.clone()),
        ("policy", a.policy.clone()),
        ("out_dir", a.out.clone()),
        ("formats", a.format.clone()),
        ("profile", a.ci_profile.then(|| "ci".to_string())),
    ];
    for (k, v) in flags.iter().chain(extra) {
        if let Some(v) = v {
            spec.set(k, v)
                .with_context(|| format!("--{}", k.replace('_', "-")))
                .map_err(usage)?;
        }
    }
    for s in &a.set {
        spec.apply(s).with_context(|| "--set").map_err(usage)?;
    }
    spec.sim.knobs = spec.knobs(&cfg.presets()?).map_err(usage)?;
    spec.sim.validate().map_err(usage)?;
    Ok(spec)
}

fn spec_inputs(cfg: &Config, spec: &ExperimentSpec) -> Result<CostInputs> {
    let arch = network(cfg, &spec.sim.model, &spec.sim.dataset, spec.arch.as_deref())?;
    Ok(CostInputs::from_arch(&arch)?)
}

fn create_out(spec: &ExperimentSpec) -> Result<&Path> {
    fs::create_dir_all(&spec.out_dir).with_context(|| format!("creating {}", spec.out_dir.display()))?;
    Ok(&spec.out_dir)
}

fn summary(sim: &SimConfig, m: &AggregateMetrics) -> String {
    let head = format!(
        "{} {}/{} rate={} client={}",
        sim.protocol,
        sim.model,
        sim.dataset,
        sim.arrival_rate,
        gb(sim.client_capacity)
    );
    match (m.mean_latency, m.decomposition) {
        (Some(mean), Some(d)) => format!(
            "{head}: mean latency {mean:.2} s +/- {:.2} (queue {:.2} s, precompute wait {:.2} s, online {:.2} s), completed {:.1}, censored {:.1}{}",
            m.ci95_half_width.unwrap_or(0.0),
            d.queue_wait,
            d.precompute_wait,
            d.online,
            m.mean_completed,
            m.mean_censored,
            if m.saturated { ", saturated" } else { "" }
        ),
        _ => format!("{head}: no request completed within the horizon"),
    }
}

fn infeasible_report(path: &Path, sim: &SimConfig, e: &DesimError) -> Result<()> {
    let DesimError::ConfigInfeasible {
        party,
        bundle_bytes,
        capacity,
    } = e
    else {
        unreachable!()
    };
    let doc = serde_json::json!({
        "schema_version": pisim::desim::export::SCHEMA_VERSION,
        "config": sim,
        "infeasible": true,
        "party": party.to_string(),
        "bundle_bytes": bundle_bytes,
        "capacity_bytes": capacity,
    });
    fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

fn simulate(cfg: &Config, a: SimulateArgs) -> Result<()> {
    let extra = [
        ("protocol", a.protocol.clone()),
        ("rate", a.rate.map(|v| v.to_string())),
        ("client_capacity_gb", a.client_capacity_gb.map(|v| v.to_string())),
    ];
    let spec = build_spec(cfg, &a.spec, &extra)?;
    let cm = cfg.cost_model(spec.sim.cost_mode)?;
    let cost = spec.sim.costs(&spec_inputs(cfg, &spec)?, &cm)?;
    let sim = &spec.sim;
    let agg = match run_many(sim, &cost, Mode::Parallel) {
        Ok(m) => m,
        Err(e @ DesimError::ConfigInfeasible { .. }) => {
            if !a.spec.allow_infeasible {
                return Err(e.into());
            }
            let out = create_out(&spec)?;
            let path = out.join(format!("{}_infeasible.json", spec.name));
            infeasible_report(&path, sim, &e)?;
            println!("{} {}/{}: infeasible, {e}", sim.protocol, sim.model, sim.dataset);
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    let out = create_out(&spec)?;
    if spec.formats.csv {
        write_aggregate_csv(
            fs::File::create(out.join(format!("{}_aggregate.csv", spec.name)))?,
            [(sim, &agg)],
        )?;
        write_runs_csv(
            fs::File::create(out.join(format!("{}_runs.csv", spec.name)))?,
            sim,
            &agg,
        )?;
    }
    if spec.formats.json {
        fs::write(
            out.join(format!("{}.json", spec.name)),
            aggregate_json(sim, &agg)? + "\n",
        )?;
    }
    if let Some(path) = &a.trace {
        let (_, trace) = run_traced(sim, &cost)?;
        write_trace_jsonl(std::io::BufWriter::new(fs::File::create(path)?), &trace)?;
    }
    println!("{}", summary(sim, &agg));
    Ok(())
}

fn run_sweep(cfg: &Config, a: SweepArgs) -> Result<()> {
    let extra = [
        ("protocols", a.protocols.clone()),
        ("rates", a.rates.clone()),
        ("capacities_gb", a.capacities_gb.clone()),
    ];
    let spec = build_spec(cfg, &a.spec, &extra)?;
    let cm = cfg.cost_model(spec.sim.cost_mode)?;
    let inputs = spec_inputs(cfg, &spec)?;
    let base = &spec.sim;
    let rows = sweep(
        base,
        &spec.rates,
        &spec.capacities,
        &spec.protocols,
        |p| {
            SimConfig {
                protocol: p,
                ..base.clone()
            }
            .costs(&inputs, &cm)
        },
        Mode::Parallel,
    )?;
    let out = create_out(&spec)?;
    if spec.formats.csv {
        write_sweep_csv(
            fs::File::create(out.join(format!("{}_sweep.csv", spec.name)))?,
            base,
            &rows,
        )?;
    }
    if spec.formats.json {
        fs::write(
            out.join(format!("{}_sweep.json", spec.name)),
            sweep_json(base, &rows)? + "\n",
        )?;
    }
    println!("protocol  capacity      rate  mean_latency_s  ci95_s  saturated  note");
    for r in &rows {
        let (mean, ci) = r
            .metrics
            .as_ref()
            .map(|m| (m.mean_latency, m.ci95_half_width))
            .unwrap_or((None, None));
        let f = |v: Option<f64>, w: usize, p: usize| v.map_or(format!("{:>w$}", "-"), |v| format!("{v:>w$.p$}"));
        println!(
            "{:<8}  {:>8}  {:>8}  {}  {}  {:>9}  {}",
            r.protocol.to_string(),
            gb(r.client_capacity),
            r.rate,
            f(mean, 14, 2),
            f(ci, 6, 2),
            r.saturated,
            r.failure.as_deref().unwrap_or("")
        );
    }
    let infeasible = rows.iter().filter(|r| r.infeasible).count();
    if infeasible > 0 && !a.spec.allow_infeasible {
        return Err(Exit(
            EXIT_INFEASIBLE,
            format!("{infeasible} cell(s) cannot store a single precompute; rerun with --allow-infeasible to accept"),
        )
        .into());
    }
    Ok(())
}

fn verify(cfg: &Config, a: VerifyArgs) -> Result<()> {
    let arch = network(cfg, &a.network.model, &a.network.dataset, a.network.arch.as_deref())?;
    let relus = arch.count_layers()?.relus;
    if relus > a.max_relus && !a.force {
        return Err(Exit(
            EXIT_USAGE,
            format!(
                "`{}` has {relus} ReLUs, above the verification guard of {}; pass --force to run anyway",
                arch.name, a.max_relus
            ),
        )
        .into());
    }
    if a.trials == 0 {
        eprintln!("warning: 0 trials requested, nothing verified");
        println!("pass: 0 trials");
        return Ok(());
    }
    let weights = Weights::random(&arch, a.weight_bound, &mut ChaCha8Rng::seed_from_u64(a.seed));
    let pcfg = ProtocolConfig {
        input_bound: a.input_bound,
        ..ProtocolConfig::default()
    };
    let fp = arch.footprint()?;
    let mut failures = 0;
    for p in a.protocol.protocols() {
        let report = verify_against_plaintext(p, &arch, &weights, a.trials, a.seed, &pcfg, Mode::Parallel)?;
        failures += report.failures;
        println!(
            "{p} {}: {} trials, {} failures",
            arch.name, report.trials, report.failures
        );
        for o in report.outcomes.iter().filter(|o| !o.ok).take(5) {
            println!("  trial seed {} diverged at block {:?}", o.seed, o.first_bad_block);
        }
        let got = &report.outcomes[0].bytes;
        let want = pcfg.bytes.breakdown(p, &fp);
        println!("  bytes            transcript      predicted   delta");
        for (label, g, w) in [
            ("offline c->s", got.offline_c2s, want.offline_c2s),
            ("offline s->c", got.offline_s2c, want.offline_s2c),
            ("online c->s", got.online_c2s, want.online_c2s),
            ("online s->c", got.online_s2c, want.online_s2c),
            ("client storage", got.client_storage, want.client_storage),
            ("server storage", got.server_storage, want.server_storage),
        ] {
            println!("  {label:<15} {g:>11} {w:>14} {:>7}", g as i128 - w as i128);
        }
    }
    if failures > 0 {
        return Err(Exit(
            EXIT_FAILURE,
            format!("{failures} trial(s) disagreed with plaintext inference"),
        )
        .into());
    }
    println!("pass");
    Ok(())
}

fn arch_check(cfg: &Config, files: &[PathBuf]) -> Result<()> {
    for f in files {
        let arch = load_arch(cfg, f).map_err(usage)?;
        let c = arch.count_layers().map_err(usage)?;
        let fp = arch.footprint().map_err(usage)?;
        let d = &arch.input;
        println!(
            "{}: {} input {}x{}x{} -> {} classes, {} layers, {} skips, {} params, {} FLOPs, {} ReLUs, {} linear blocks",
            f.display(),
            arch.name,
            d.channels,
            d.height,
            d.width,
            d.classes,
            arch.layers.len(),
            arch.skips.len(),
            c.params,
            c.flops,
            c.relus,
            fp.blocks
        );
    }
    Ok(())
}
