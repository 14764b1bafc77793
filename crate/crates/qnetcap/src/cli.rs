//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 physics-domain error, 4 unknown end-user id.

use crate::capacity_core::{fiber_transmissivity, BoundKind};
use crate::freespace_optics::{
    build_channel, intersatellite_capacity, line_of_sight_limit, BeamSetup, Trajectory,
    TurbulenceWarning,
};
use crate::modular_topology::{
    edge_connectivity, global_community_capacity, random_ideal, theorem1_thresholds, IdealInstance,
    IdealModularSpec, ModularError, ModularNetwork,
};
use crate::network_graph::{
    capacities_from_channels, flooding_capacity, single_path_capacity, ChannelSpec, CutMode, Network,
    NetworkError,
};
use crate::scenario_planner::{sweep, write_csv, ScenarioConfig};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const THREADS_ENV: &str = "QNETCAP_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Physics(String),
    #[error("{0}")]
    MissingId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Physics(_) => 3,
            CliError::MissingId(_) => 4,
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::UnknownNode(_) => CliError::MissingId(e.to_string()),
            NetworkError::Channel { .. } | NetworkError::InvalidCapacity { .. } => CliError::Physics(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ModularError> for CliError {
    fn from(e: ModularError) -> Self {
        match e {
            ModularError::Network(n) => n.into(),
            e => CliError::Config(e.to_string()),
        }
    }
}

fn physics(e: impl std::fmt::Display) -> CliError {
    CliError::Physics(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "qnetcap", version, about = "Capacity bounds for hybrid quantum networks")]
pub struct Cli {
    /// Print extra diagnostics on stderr
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Point-to-point channel capacity
    Channel(ChannelArgs),
    /// End-to-end capacity between two nodes of a network file
    Network(NetworkArgs),
    /// Modular-network threshold report and generators
    #[command(subcommand)]
    Modular(ModularCommand),
    /// Distance-constraint sweep as CSV
    Sweep(SweepArgs),
    /// Built-in beam setups and scenarios
    #[command(subcommand)]
    Presets(PresetsCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LinkKind {
    Fiber,
    Ground,
    Downlink,
    Uplink,
    Intersat,
}

#[derive(Debug, Args)]
pub struct ChannelArgs {
    /// Channel JSON (same schema as a network edge channel)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Beam setup preset
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, value_enum)]
    pub kind: Option<LinkKind>,
    /// Link length (m or km suffix)
    #[arg(long, value_parser = parse_length, allow_negative_numbers = true)]
    pub z: Option<f64>,
    /// Ground link altitude
    #[arg(long, value_parser = parse_length, allow_negative_numbers = true)]
    pub h: Option<f64>,
    /// Satellite altitude for up/downlinks
    #[arg(long, value_parser = parse_length, allow_negative_numbers = true)]
    pub h_sat: Option<f64>,
    /// Zenith angle (rad)
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    #[arg(long, value_parser = parse_length, allow_negative_numbers = true)]
    pub h1: Option<f64>,
    #[arg(long, value_parser = parse_length, allow_negative_numbers = true)]
    pub h2: Option<f64>,
    /// clear-night, cloudy-day or clear-day
    #[arg(long)]
    pub condition: Option<String>,
    /// Fiber loss rate (dB/km)
    #[arg(long)]
    pub loss_rate: Option<f64>,
    /// Dotted-key override, e.g. trajectory.z=800
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Evaluate the thermal average by direct quadrature
    #[arg(long)]
    pub quadrature: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Single,
    Multi,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    pub network: PathBuf,
    #[arg(long)]
    pub alpha: String,
    #[arg(long)]
    pub beta: String,
    #[arg(long, value_enum, default_value = "multi")]
    pub mode: ModeArg,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum ModularCommand {
    /// Theorem 1 threshold check and capacities
    Report(ModularReportArgs),
    /// Random ideal modular instance satisfying the thresholds
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct ModularReportArgs {
    /// Network JSON with community/backbone labels, or a generated instance
    pub network: PathBuf,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    /// Backbone regularity
    #[arg(long)]
    pub k_b: Option<usize>,
    /// Community connectivities in community order (measured when omitted)
    #[arg(long, value_delimiter = ',')]
    pub k_c: Vec<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Built-in scenario (fig1, fig1-ground, fig3a, fig3b, fig4)
    #[arg(long, conflicts_with = "config")]
    pub figure: Option<String>,
    /// Scenario JSON
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Worker threads (capped by QNETCAP_THREADS)
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Print the resolved scenario JSON instead of sweeping
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum PresetsCommand {
    List,
    Show { name: String },
}

/// Accepts `500`, `500m`, `1.5km`, `6000 km`.
pub fn parse_length(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let (num, scale) = if let Some(x) = t.strip_suffix("km") {
        (x, 1e3)
    } else if let Some(x) = t.strip_suffix('m') {
        (x, 1.0)
    } else {
        (t, 1.0)
    };
    let v: f64 = num.trim().parse().map_err(|_| format!("`{s}` is not a length (use m or km)"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("length `{s}` must be finite and >= 0"));
    }
    Ok(v * scale)
}

/// Applies `a.b.0.c=value`; the value is read as JSON, falling back to a string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| json!({}))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| CliError::Config(format!("override `{key}`: `{part}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::Config(format!("override `{key}`: index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::Config(format!("override `{key}`: `{part}` is not inside an object"))),
        };
    }
    Err(CliError::Config(format!("override `{spec}` has an empty key")))
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn from_value<T: serde::de::DeserializeOwned>(v: Value, what: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

fn check_preset(name: &str) -> Result<()> {
    if BeamSetup::preset(name).is_some() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "unknown setup preset `{name}` (table1-setup1, table1-setup2, table2)"
        )))
    }
}

fn kind_label(k: BoundKind) -> &'static str {
    match k {
        BoundKind::ExactAchievable => "exact",
        BoundKind::TightUpperBound => "upper bound",
    }
}

fn channel_value(a: &ChannelArgs) -> Result<Value> {
    let mut v = match &a.config {
        Some(p) => read_json(p)?,
        None => json!({}),
    };
    let obj = v
        .as_object_mut()
        .ok_or_else(|| CliError::Config("channel config must be a JSON object".into()))?;
    let need = |x: Option<f64>, flag: &str| x.ok_or_else(|| CliError::Config(format!("--kind needs --{flag}")));
    let positive = |x: f64, flag: &str| {
        if x > 0.0 {
            Ok(x)
        } else {
            Err(CliError::Config(format!("--{flag} must be > 0")))
        }
    };
    if let Some(kind) = a.kind {
        if kind == LinkKind::Fiber {
            obj.insert("type".into(), json!("fiber"));
            obj.insert("length_km".into(), json!(positive(need(a.z, "z")?, "z")? / 1e3));
        } else {
            obj.insert("type".into(), json!("free-space"));
            let t = match kind {
                LinkKind::Ground => json!({"kind": "ground", "h": a.h.unwrap_or(30.0), "z": positive(need(a.z, "z")?, "z")?}),
                LinkKind::Downlink | LinkKind::Uplink => json!({
                    "kind": if kind == LinkKind::Downlink { "downlink" } else { "uplink" },
                    "h_sat": positive(need(a.h_sat, "h-sat")?, "h-sat")?,
                    "theta": a.theta.unwrap_or(0.0),
                }),
                _ => json!({
                    "kind": "intersatellite",
                    "h1": need(a.h1, "h1")?,
                    "h2": need(a.h2, "h2")?,
                    "z": positive(need(a.z, "z")?, "z")?,
                }),
            };
            obj.insert("trajectory".into(), t);
        }
    } else if a.z.is_some() || a.h_sat.is_some() || a.h1.is_some() {
        return Err(CliError::Config("geometry flags need --kind".into()));
    }
    if let Some(p) = &a.preset {
        check_preset(p)?;
        obj.insert("setup".into(), json!(p));
    }
    if let Some(c) = &a.condition {
        obj.insert("condition".into(), json!(c));
    }
    if let Some(g) = a.loss_rate {
        obj.insert("loss_rate".into(), json!(g));
    }
    for o in &a.overrides {
        apply_override(&mut v, o)?;
    }
    Ok(v)
}

fn cmd_channel(a: &ChannelArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let spec: ChannelSpec = from_value(channel_value(a)?, "channel config")?;
    let report = match &spec {
        ChannelSpec::Fiber { length_km, loss_rate } => {
            let eta = fiber_transmissivity(*length_km, *loss_rate).map_err(physics)?;
            let cap = crate::capacity_core::plob(eta).map_err(physics)?;
            json!({"channel": spec, "eta": eta, "capacity": cap.value, "kind": kind_label(cap.kind)})
        }
        ChannelSpec::FreeSpace { setup, atmosphere, trajectory, condition } => {
            if let crate::network_graph::SetupRef::Preset(p) = setup {
                check_preset(p)?;
            }
            let setup = setup.resolve().map_err(physics)?;
            setup.validate().map_err(physics)?;
            trajectory.validate().map_err(physics)?;
            let atmo = atmosphere.clone().unwrap_or_default();
            let model = build_channel(&setup, &atmo, trajectory, *condition).map_err(physics)?;
            let cap = match trajectory {
                Trajectory::Intersatellite { z, .. } => intersatellite_capacity(&setup, *z),
                _ if a.quadrature => model.capacity_quadrature(),
                _ => model.capacity(),
            }
            .map_err(physics)?;
            let mut warnings: Vec<String> =
                model.diagnostics.warnings.iter().map(|w| warning_text(*w).to_string()).collect();
            if let Trajectory::Intersatellite { h1, h2, z } = *trajectory {
                let los = line_of_sight_limit(h1, h2);
                if z > los {
                    warnings.push(format!(
                        "infeasible: separation {:.1} km exceeds the line-of-sight limit {:.1} km",
                        z / 1e3,
                        los / 1e3
                    ));
                }
            }
            for w in &warnings {
                writeln!(err, "warning: {w}")?;
            }
            json!({
                "channel": spec,
                "eta": model.fading.eta,
                "fading": model.fading,
                "diagnostics": model.diagnostics,
                "capacity": cap.value,
                "kind": kind_label(cap.kind),
                "warnings": warnings,
            })
        }
    };
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("json value"))?;
    } else {
        writeln!(out, "eta       {}", report["eta"])?;
        if let Some(f) = report.get("fading") {
            for key in ["weibull_shape", "weibull_scale", "sigma", "n_bar"] {
                writeln!(out, "{key:<9} {}", f[key])?;
            }
        }
        writeln!(out, "capacity  {} bits/use ({})", report["capacity"], report["kind"].as_str().unwrap_or(""))?;
    }
    Ok(())
}

fn warning_text(w: TurbulenceWarning) -> &'static str {
    match w {
        TurbulenceWarning::StrongScintillation => "Rytov variance above 1; weak-turbulence model outside its range",
        TurbulenceWarning::YuraCondition => "Yura parameter phi > 0.1; short-term spot approximation is rough",
    }
}

fn load_network(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let net = Network::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(capacities_from_channels(&net)?)
}

fn edge_label(net: &Network, e: usize) -> String {
    let ed = &net.edges()[e];
    format!("{} -- {}", net.id(ed.u), net.id(ed.v))
}

fn cmd_network(a: &NetworkArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_network(&a.network)?;
    let alpha = net.node_index(&a.alpha)?;
    let beta = net.node_index(&a.beta)?;
    let caps = net.capacities()?;
    let report = match a.mode {
        ModeArg::Multi => {
            let r = flooding_capacity(&net, alpha, beta)?;
            let cut: Vec<Value> = r
                .min_cut
                .cut_set
                .iter()
                .map(|&e| json!({"edge": edge_label(&net, e), "capacity": caps[e]}))
                .collect();
            json!({"mode": "multi", "value": r.value, "kind": kind_label(r.kind), "cut": cut})
        }
        ModeArg::Single => {
            let r = single_path_capacity(&net, alpha, beta)?;
            let route: Vec<&str> = r.route.iter().map(|&x| net.id(x)).collect();
            let witness = crate::network_graph::brute_force_min_cut(&net, alpha, beta, CutMode::Single).ok();
            let mut v = json!({"mode": "single", "value": r.value, "kind": kind_label(r.kind), "route": route});
            if let Some(c) = witness {
                v["cut"] = c
                    .cut_set
                    .iter()
                    .map(|&e| json!({"edge": edge_label(&net, e), "capacity": caps[e]}))
                    .collect();
            }
            v
        }
    };
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("json value"))?;
    } else {
        writeln!(out, "capacity {} bits/use ({})", report["value"], report["kind"].as_str().unwrap_or(""))?;
        if let Some(route) = report.get("route") {
            writeln!(out, "route    {route}")?;
        }
        if let Some(cut) = report.get("cut").and_then(|c| c.as_array()) {
            writeln!(out, "cut")?;
            for c in cut {
                writeln!(out, "  {}  {}", c["edge"].as_str().unwrap_or(""), c["capacity"])?;
            }
        }
    }
    Ok(())
}

fn cmd_modular_report(a: &ModularReportArgs, out: &mut dyn Write) -> Result<()> {
    let v = read_json(&a.network)?;
    let (m, spec, alpha, beta) = if v.get("network").is_some() {
        let inst: IdealInstance = from_value(v, "instance")?;
        (inst.network, Some(inst.spec), Some(inst.alpha), Some(inst.beta))
    } else {
        let net = Network::from_json(&v.to_string()).map_err(|e| CliError::Config(e.to_string()))?;
        (ModularNetwork::from_network(capacities_from_channels(&net)?)?, None, None, None)
    };
    let pick = |id: &Option<String>, fallback: Option<usize>, flag: &str| -> Result<usize> {
        match (id, fallback) {
            (Some(id), _) => Ok(m.base.node_index(id)?),
            (None, Some(x)) => Ok(x),
            _ => Err(CliError::Config(format!("--{flag} is required for a plain network file"))),
        }
    };
    let alpha = pick(&a.alpha, alpha, "alpha")?;
    let beta = pick(&a.beta, beta, "beta")?;
    let mut spec = spec.unwrap_or_else(|| IdealModularSpec { k_b: 4, k_c: Vec::new() });
    if let Some(k) = a.k_b {
        spec.k_b = k;
    }
    if !a.k_c.is_empty() {
        spec.k_c = a.k_c.clone();
    } else if spec.k_c.is_empty() {
        spec.k_c = (0..m.communities.len())
            .map(|c| edge_connectivity(&m.community_network(c).0))
            .collect();
    }
    let report = theorem1_thresholds(&m, &spec, alpha, beta)?;
    let flooding = flooding_capacity(&m.base, alpha, beta)?.value;
    let global = global_community_capacity(&m, alpha, beta)?;
    if a.json {
        let v = json!({"thresholds": report, "flooding": flooding, "global_community": global});
        writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json value"))?;
        return Ok(());
    }
    writeln!(out, "C_cb (global-community) {}", report.c_cb)?;
    for (name, c) in &report.c_min_community {
        writeln!(out, "C_min community {name:<8} {c}")?;
    }
    writeln!(out, "C_min backbone          {}", report.c_min_backbone)?;
    writeln!(out, "H*_min                  {} (formula {})", report.h_min_star, report.h_min_formula_star)?;
    if report.satisfied && (flooding - global).abs() <= 1e-9 * global.max(1.0) {
        writeln!(out, "thresholds satisfied; flooding = global-community = {global}")?;
    } else if report.satisfied {
        writeln!(out, "thresholds satisfied; flooding = {flooding}, global-community = {global}")?;
    } else {
        writeln!(out, "thresholds not satisfied; flooding = {flooding}, global-community = {global}")?;
    }
    Ok(())
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let inst = random_ideal(&mut ChaCha8Rng::seed_from_u64(a.seed));
    let text = serde_json::to_string_pretty(&inst).expect("instance serializes");
    match &a.out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => writeln!(out, "{text}")?,
    }
    Ok(())
}

/// Thread count: the flag, capped by QNETCAP_THREADS when set.
pub fn thread_limit(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>> {
    let cap = match env {
        None | Some("") => None,
        Some(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => return Err(CliError::Config(format!("{THREADS_ENV}=`{s}` is not a positive integer"))),
        },
    };
    if flag == Some(0) {
        return Err(CliError::Config("--threads must be > 0".into()));
    }
    Ok(match (flag, cap) {
        (Some(f), Some(c)) => Some(f.min(c)),
        (f, c) => f.or(c),
    })
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let mut v = match (&a.figure, &a.config) {
        (Some(f), None) => {
            let cfg = ScenarioConfig::preset(f).ok_or_else(|| {
                CliError::Config(format!("unknown figure `{f}` ({})", ScenarioConfig::PRESETS.join(", ")))
            })?;
            serde_json::to_value(cfg).expect("config serializes")
        }
        (None, Some(p)) => read_json(p)?,
        _ => return Err(CliError::Config("sweep needs --figure or --config".into())),
    };
    for o in &a.overrides {
        apply_override(&mut v, o)?;
    }
    let cfg: ScenarioConfig = from_value(v, "scenario config")?;
    if let crate::network_graph::SetupRef::Preset(p) = &cfg.setup {
        check_preset(p)?;
    }
    if a.dump_config {
        writeln!(out, "{}", serde_json::to_string_pretty(&cfg).expect("config serializes"))?;
        return Ok(());
    }
    let env = std::env::var(THREADS_ENV).ok();
    let threads = thread_limit(a.threads, env.as_deref())?;
    let rows = sweep(&cfg, threads).map_err(physics)?;
    match &a.out {
        Some(p) => write_csv(&rows, std::fs::File::create(p)?)?,
        None => write_csv(&rows, &mut *out)?,
    }
    Ok(())
}

fn cmd_presets(c: &PresetsCommand, out: &mut dyn Write) -> Result<()> {
    match c {
        PresetsCommand::List => {
            for n in ["table1-setup1", "table1-setup2", "table2"] {
                writeln!(out, "setup     {n}")?;
            }
            for n in ScenarioConfig::PRESETS {
                writeln!(out, "scenario  {n}")?;
            }
        }
        PresetsCommand::Show { name } => {
            let v = if let Some(s) = BeamSetup::preset(name) {
                serde_json::to_value(s)
            } else if let Some(s) = ScenarioConfig::preset(name) {
                serde_json::to_value(s)
            } else {
                return Err(CliError::Config(format!("unknown preset `{name}`")));
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&v.expect("preset serializes")).expect("json value"))?;
        }
    }
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    if cli.verbose > 0 {
        writeln!(err, "{:?}", cli.command)?;
    }
    match &cli.command {
        Command::Channel(a) => cmd_channel(a, out, err),
        Command::Network(a) => cmd_network(a, out),
        Command::Modular(ModularCommand::Report(a)) => cmd_modular_report(a, out),
        Command::Modular(ModularCommand::Generate(a)) => cmd_generate(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Presets(c) => cmd_presets(c, out),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("qnetcap").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn lengths() {
        assert_eq!(parse_length("500").unwrap(), 500.0);
        assert_eq!(parse_length("500m").unwrap(), 500.0);
        assert_eq!(parse_length("6000km").unwrap(), 6e6);
        assert_eq!(parse_length(" 1.5 km").unwrap(), 1500.0);
        assert!(parse_length("-1").is_err());
        assert!(parse_length("3 miles").is_err());
    }

    #[test]
    fn overrides() {
        let mut v = json!({"a": {"b": 1}, "xs": [1, 2]});
        apply_override(&mut v, "a.b=2.5").unwrap();
        apply_override(&mut v, "xs.1=\"q\"").unwrap();
        apply_override(&mut v, "name=fig").unwrap();
        assert_eq!(v, json!({"a": {"b": 2.5}, "xs": [1, "q"], "name": "fig"}));
        assert!(apply_override(&mut v, "xs.9=1").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn thread_caps() {
        assert_eq!(thread_limit(None, None).unwrap(), None);
        assert_eq!(thread_limit(Some(8), Some("2")).unwrap(), Some(2));
        assert_eq!(thread_limit(None, Some("3")).unwrap(), Some(3));
        assert!(thread_limit(None, Some("zero")).is_err());
        assert!(thread_limit(Some(0), None).is_err());
    }

    #[test]
    fn channel_matches_library() {
        let (code, out, _) = call(&["channel", "--preset", "table2", "--kind", "ground", "--z", "500", "--json"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        let traj = Trajectory::Ground { h: 30.0, z: 500.0 };
        let lib = build_channel(
            &BeamSetup::table2(),
            &Default::default(),
            &traj,
            crate::freespace_optics::Condition::ClearNight,
        )
        .unwrap()
        .capacity()
        .unwrap();
        assert_eq!(v["capacity"].as_f64().unwrap(), lib.value);
    }

    #[test]
    fn negative_length_is_config_error() {
        let (code, _, err) = call(&["channel", "--preset", "table2", "--kind", "ground", "--z", "-1"]);
        assert_eq!(code, 2, "{err}");
    }

    #[test]
    fn presets_echo() {
        let (code, out, _) = call(&["presets", "show", "table1-setup1"]);
        assert_eq!(code, 0);
        let s: BeamSetup = serde_json::from_str(&out).unwrap();
        assert_eq!(s, BeamSetup::table1_setup1());
        assert_eq!(call(&["presets", "show", "nope"]).0, 2);
    }
}
