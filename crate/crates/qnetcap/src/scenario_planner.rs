//! Distance constraints that keep the global-community capacity optimal,
//! analytic bounds for the intersatellite case and CSV parameter sweeps.

use crate::capacity_core::{fiber_transmissivity, plob, CapacityError};
use crate::freespace_optics::{
    build_channel, intersatellite_capacity, line_of_sight_limit, AtmosphereModel, BeamSetup, Condition,
    OpticsError, Trajectory, GROUND_WINDOW,
};
use crate::network_graph::SetupRef;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BISECTION_MAX_ITERS: usize = 200;
/// Bisection stops once the bracket is narrower than this fraction of its upper end
/// (always finer than the 1 m absolute requirement on the brackets used here).
pub const BISECTION_REL_TOL: f64 = 1e-10;
pub const BISECTION_ABS_TOL: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("{name} = {value} is out of range ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("thread pool: {0}")]
    Threads(String),
}

impl From<CapacityError> for ScenarioError {
    fn from(e: CapacityError) -> Self {
        ScenarioError::Optics(e.into())
    }
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::Domain {
            name,
            value,
            expected: "> 0",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Solved,
    /// capacity target still met at the weak-turbulence window edge
    WindowLimited,
    /// target unreachable even at the shortest distance
    NoSolution,
    /// target still met at the far end of the search bracket
    BracketExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// H*_min = k_b
    WorstCase,
    /// H*_min = k_b |P_{b|c}|
    BestCase,
    Community,
}

impl Regime {
    fn label(self) -> &'static str {
        match self {
            Regime::WorstCase => "worst-case",
            Regime::BestCase => "best-case",
            Regime::Community => "community",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResult {
    /// d_max or z_max (m)
    pub value_m: f64,
    pub status: Status,
    /// divisor applied to the target (k or H*_min)
    pub divisor: f64,
    /// divisor times the single-link capacity at `value_m`
    pub capacity_at_value: f64,
    pub beyond_line_of_sight: bool,
    pub lower_m: Option<f64>,
    pub upper_m: Option<f64>,
}

/// d = -(1/gamma) log10(1 - 2^(-C/k)), in meters.
pub fn max_fiber_length(c_cb: f64, k: f64, loss_rate: f64) -> Result<f64> {
    positive("C", c_cb)?;
    positive("k", k)?;
    positive("loss rate", loss_rate)?;
    let km = -(-(-c_cb / k * std::f64::consts::LN_2).exp_m1()).log10() / loss_rate;
    Ok(km * 1e3)
}

/// k * PLOB of a fiber of `length_m`.
pub fn fiber_capacity(length_m: f64, k: f64, loss_rate: f64) -> Result<f64> {
    Ok(k * plob(fiber_transmissivity(length_m / 1e3, loss_rate)?)?.finite()?)
}

/// Root of ln(g(z)) on [lo, hi] for a decreasing g; returns the bracket end
/// where the target still holds.
fn bisect_log(mut g: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<(f64, Status)> {
    let f = |v: f64| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
    if f(g(lo)?) < 0.0 {
        return Ok((lo, Status::NoSolution));
    }
    if f(g(hi)?) >= 0.0 {
        return Ok((hi, Status::BracketExceeded));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..BISECTION_MAX_ITERS {
        if b - a <= (BISECTION_REL_TOL * b).min(BISECTION_ABS_TOL) {
            break;
        }
        let m = 0.5 * (a + b);
        if f(g(m)?) >= 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((0.5 * (a + b), Status::Solved))
}

/// Bisection bracket upper end for intersatellite links.
pub fn intersatellite_bracket(h_max: f64) -> f64 {
    (10.0 * line_of_sight_limit(h_max, h_max)).max(1e8)
}

/// z_b^max: root of H B_F(eta_eff eta_d(z), eps_p z) = C.
pub fn max_intersatellite_separation(c_cb: f64, h_star: f64, setup: &BeamSetup, h_max: f64) -> Result<ConstraintResult> {
    positive("C", c_cb)?;
    positive("H*_min", h_star)?;
    let cap = |z: f64| -> Result<f64> { Ok(h_star * intersatellite_capacity(setup, z)?.finite()?) };
    let (z, status) = bisect_log(|z| Ok(cap(z)? / c_cb), 1.0, intersatellite_bracket(h_max))?;
    Ok(ConstraintResult {
        value_m: z,
        status,
        divisor: h_star,
        capacity_at_value: cap(z)?,
        beyond_line_of_sight: z > line_of_sight_limit(h_max, h_max),
        lower_m: None,
        upper_m: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersatBounds {
    /// no pointing error
    pub upper: Option<f64>,
    /// slow detector, spot w_d^2 + b sigma_p^2
    pub lower: Option<f64>,
}

/// Analytic brackets for z_b^max. `broadening` scales sigma_p^2 in the
/// slow-detector spot (1 for the plain bound).
pub fn intersat_bounds(c_cb: f64, h_star: f64, setup: &BeamSetup, clock_ratio: f64, broadening: f64) -> Result<IntersatBounds> {
    positive("C", c_cb)?;
    positive("H*_min", h_star)?;
    positive("clock ratio", clock_ratio)?;
    let log_term = |rate: f64| {
        let arg = setup.eta_eff - 1.0 + (-rate * std::f64::consts::LN_2).exp();
        (arg > 0.0).then(|| (setup.eta_eff / arg).ln())
    };
    let (a2, w02, zr) = (setup.aperture.powi(2), setup.w0.powi(2), setup.rayleigh_range());
    let upper = log_term(c_cb / h_star).and_then(|l| {
        let r = 2.0 * a2 / (w02 * l) - 1.0;
        (r >= 0.0).then(|| zr * r.sqrt())
    });
    let lower = log_term(clock_ratio * c_cb / h_star).and_then(|l| {
        let r = (2.0 * a2 / l - w02) / (w02 / zr.powi(2) + broadening * setup.eps_p.powi(2));
        (r >= 0.0).then(|| r.sqrt())
    });
    Ok(IntersatBounds { upper, lower })
}

/// z_c^max for a ground free-space community inside the weak-turbulence window.
pub fn max_freespace_length(
    c_cb: f64,
    k_c: f64,
    setup: &BeamSetup,
    atmo: &AtmosphereModel,
    condition: Condition,
    h: f64,
) -> Result<ConstraintResult> {
    positive("C", c_cb)?;
    positive("k_c", k_c)?;
    let cap = |z: f64| -> Result<f64> {
        let ch = build_channel(setup, atmo, &Trajectory::Ground { h, z }, condition)?;
        Ok(k_c * ch.capacity()?.finite()?)
    };
    let (z, status) = bisect_log(|z| Ok(cap(z)? / c_cb), 1.0, GROUND_WINDOW)?;
    let status = match status {
        Status::BracketExceeded => Status::WindowLimited,
        s => s,
    };
    Ok(ConstraintResult {
        value_m: z,
        status,
        divisor: k_c,
        capacity_at_value: cap(z)?,
        beyond_line_of_sight: false,
        lower_m: None,
        upper_m: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackboneKind {
    Satellite { h_max: f64 },
    Fiber,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CommunityKind {
    Fiber,
    FreeSpace { h: f64 },
}

/// Link model for one intercommunity connection, used to size |P_{b|c}| in the
/// best-case regime as ceil(C / rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IntercommunityLink {
    Downlink { h_sat: f64, theta: f64 },
    Ground { h: f64, z: f64 },
    Fixed { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    Fiber,
    Ground,
    Downlink,
    Uplink,
    Intersatellite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub kind: CurveKind,
    /// distances (m), or satellite altitudes for up/downlinks
    pub x_m: Vec<f64>,
    #[serde(default)]
    pub theta: f64,
    /// ground altitude, or the fixed satellite altitude for intersatellite links
    #[serde(default)]
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub setup: SetupRef,
    #[serde(default)]
    pub atmosphere: AtmosphereModel,
    pub condition: Condition,
    #[serde(default = "default_loss_rate")]
    pub loss_rate: f64,
    pub backbone: BackboneKind,
    pub community: CommunityKind,
    #[serde(default)]
    pub intercommunity: Option<IntercommunityLink>,
    #[serde(default)]
    pub k_b: Vec<usize>,
    #[serde(default)]
    pub k_c: Vec<usize>,
    #[serde(default = "one")]
    pub clock_ratio: f64,
    #[serde(default = "one")]
    pub broadening: f64,
    #[serde(default)]
    pub c_grid: Vec<f64>,
    #[serde(default)]
    pub curves: Vec<CurveSpec>,
}

fn default_loss_rate() -> f64 {
    0.02
}

fn one() -> f64 {
    1.0
}

/// `n` log-spaced values from `a` to `b`.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| 10f64.powf(a.log10() + (b.log10() - a.log10()) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

fn lin_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl ScenarioConfig {
    /// Fiber communities on a satellite backbone, Setup #1, clear day.
    pub fn fig3a() -> Self {
        ScenarioConfig {
            name: "fig3a".into(),
            setup: SetupRef::Preset("table1-setup1".into()),
            atmosphere: AtmosphereModel::default(),
            condition: Condition::ClearDay,
            loss_rate: 0.02,
            backbone: BackboneKind::Satellite { h_max: 1.5e6 },
            community: CommunityKind::Fiber,
            intercommunity: Some(IntercommunityLink::Downlink { h_sat: 1.5e6, theta: 1.0 }),
            k_b: vec![4, 6, 8],
            k_c: vec![4, 6, 8],
            clock_ratio: 1.0,
            broadening: 1.0,
            c_grid: log_grid(1e-3, 1.0, 31),
            curves: Vec::new(),
        }
    }

    /// Same architecture with Setup #2 at clear night.
    pub fn fig3b() -> Self {
        ScenarioConfig {
            name: "fig3b".into(),
            setup: SetupRef::Preset("table1-setup2".into()),
            condition: Condition::ClearNight,
            ..Self::fig3a()
        }
    }

    /// Free-space communities on a fiber backbone, Table II, clear day.
    pub fn fig4() -> Self {
        ScenarioConfig {
            name: "fig4".into(),
            setup: SetupRef::Preset("table2".into()),
            atmosphere: AtmosphereModel::default(),
            condition: Condition::ClearDay,
            loss_rate: 0.02,
            backbone: BackboneKind::Fiber,
            community: CommunityKind::FreeSpace { h: 30.0 },
            intercommunity: Some(IntercommunityLink::Ground { h: 30.0, z: 1000.0 }),
            k_b: vec![4, 6, 8],
            k_c: vec![4, 6, 8],
            clock_ratio: 1.0,
            broadening: 1.0,
            c_grid: log_grid(0.1, 10.0, 21),
            curves: Vec::new(),
        }
    }

    /// Point-to-point capacity and transmissivity against distance.
    pub fn fig1() -> Self {
        ScenarioConfig {
            name: "fig1".into(),
            setup: SetupRef::Preset("table1-setup1".into()),
            atmosphere: AtmosphereModel::default(),
            condition: Condition::ClearNight,
            loss_rate: 0.02,
            backbone: BackboneKind::Fiber,
            community: CommunityKind::Fiber,
            intercommunity: None,
            k_b: Vec::new(),
            k_c: Vec::new(),
            clock_ratio: 1.0,
            broadening: 1.0,
            c_grid: Vec::new(),
            curves: vec![
                CurveSpec { kind: CurveKind::Fiber, x_m: lin_grid(1e3, 2e5, 40), theta: 0.0, h: 0.0 },
                CurveSpec { kind: CurveKind::Downlink, x_m: lin_grid(2e5, 2e6, 19), theta: 0.0, h: 0.0 },
                CurveSpec { kind: CurveKind::Downlink, x_m: lin_grid(2e5, 2e6, 19), theta: 1.0, h: 0.0 },
                CurveSpec { kind: CurveKind::Uplink, x_m: lin_grid(2e5, 2e6, 19), theta: 0.0, h: 0.0 },
                CurveSpec { kind: CurveKind::Uplink, x_m: lin_grid(2e5, 2e6, 19), theta: 1.0, h: 0.0 },
                CurveSpec { kind: CurveKind::Intersatellite, x_m: lin_grid(1e5, 5.4e6, 54), theta: 0.0, h: 1.5e6 },
            ],
        }
    }

    /// Ground-link curves with the Table II setup.
    pub fn fig1_ground() -> Self {
        ScenarioConfig {
            name: "fig1-ground".into(),
            setup: SetupRef::Preset("table2".into()),
            condition: Condition::ClearDay,
            curves: vec![CurveSpec { kind: CurveKind::Ground, x_m: lin_grid(10.0, GROUND_WINDOW, 40), theta: 0.0, h: 30.0 }],
            ..Self::fig1()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "fig1" => Some(Self::fig1()),
            "fig1-ground" => Some(Self::fig1_ground()),
            "fig3a" => Some(Self::fig3a()),
            "fig3b" => Some(Self::fig3b()),
            "fig4" => Some(Self::fig4()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 5] = ["fig1", "fig1-ground", "fig3a", "fig3b", "fig4"];
}

/// One CSV row; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub quantity: String,
    pub regime: String,
    pub divisor: Option<f64>,
    pub c_target: Option<f64>,
    pub x_m: Option<f64>,
    pub y: Option<f64>,
    pub lower_m: Option<f64>,
    pub upper_m: Option<f64>,
    pub status: String,
}

pub const SWEEP_COLUMNS: [&str; 10] = [
    "scenario", "quantity", "regime", "divisor", "c_target", "x_m", "y", "lower_m", "upper_m", "status",
];

#[derive(Debug, Clone, Copy)]
enum Task {
    Backbone { c: f64, k_b: usize, regime: Regime },
    Community { c: f64, k_c: usize },
    Curve { curve: usize, point: usize },
}

fn status_label(s: Status, los: bool) -> String {
    let base = match s {
        Status::Solved => "solved",
        Status::WindowLimited => "window-limited",
        Status::NoSolution => "no-solution",
        Status::BracketExceeded => "bracket-exceeded",
    };
    if los {
        format!("{base};beyond-line-of-sight")
    } else {
        base.to_string()
    }
}

fn error_row(cfg: &ScenarioConfig, quantity: &str, regime: &str, c: Option<f64>, e: impl std::fmt::Display) -> SweepRow {
    SweepRow {
        scenario: cfg.name.clone(),
        quantity: quantity.into(),
        regime: regime.into(),
        divisor: None,
        c_target: c,
        x_m: None,
        y: None,
        lower_m: None,
        upper_m: None,
        status: format!("error: {e}"),
    }
}

/// Best-case attachment count ceil(C / per-link rate).
pub fn best_case_attachments(cfg: &ScenarioConfig, setup: &BeamSetup, c: f64) -> Result<usize> {
    let rate = match cfg.intercommunity {
        None => return Ok(1),
        Some(IntercommunityLink::Fixed { rate }) => rate,
        Some(IntercommunityLink::Downlink { h_sat, theta }) => build_channel(
            setup,
            &cfg.atmosphere,
            &Trajectory::Downlink { h_sat, theta },
            cfg.condition,
        )?
        .capacity()?
        .finite()?,
        Some(IntercommunityLink::Ground { h, z }) => {
            build_channel(setup, &cfg.atmosphere, &Trajectory::Ground { h, z }, cfg.condition)?
                .capacity()?
                .finite()?
        }
    };
    positive("intercommunity rate", rate)?;
    Ok(((c / rate).ceil() as usize).max(1))
}

fn run_task(cfg: &ScenarioConfig, setup: &BeamSetup, task: Task) -> SweepRow {
    match task {
        Task::Backbone { c, k_b, regime } => {
            let quantity = match cfg.backbone {
                BackboneKind::Satellite { .. } => "z_b_max",
                BackboneKind::Fiber => "d_b_max",
            };
            backbone_row(cfg, setup, c, k_b, regime)
                .unwrap_or_else(|e| error_row(cfg, quantity, regime.label(), Some(c), e))
        }
        Task::Community { c, k_c } => {
            let quantity = match cfg.community {
                CommunityKind::Fiber => "d_c_max",
                CommunityKind::FreeSpace { .. } => "z_c_max",
            };
            community_row(cfg, setup, c, k_c)
                .unwrap_or_else(|e| error_row(cfg, quantity, "community", Some(c), e))
        }
        Task::Curve { curve, point } => {
            let spec = &cfg.curves[curve];
            curve_row(cfg, setup, spec, point).unwrap_or_else(|e| {
                let mut r = error_row(cfg, &curve_name(spec), "point-to-point", None, e);
                r.x_m = Some(spec.x_m[point]);
                r
            })
        }
    }
}

fn backbone_row(cfg: &ScenarioConfig, setup: &BeamSetup, c: f64, k_b: usize, regime: Regime) -> Result<SweepRow> {
    let h = match regime {
        Regime::BestCase => (k_b * best_case_attachments(cfg, setup, c)?) as f64,
        _ => k_b as f64,
    };
    let (quantity, r) = match cfg.backbone {
        BackboneKind::Satellite { h_max } => {
            let mut r = max_intersatellite_separation(c, h, setup, h_max)?;
            let b = intersat_bounds(c, h, setup, cfg.clock_ratio, cfg.broadening)?;
            r.lower_m = b.lower;
            r.upper_m = b.upper;
            ("z_b_max", r)
        }
        BackboneKind::Fiber => {
            let d = max_fiber_length(c, h, cfg.loss_rate)?;
            let r = ConstraintResult {
                value_m: d,
                status: Status::Solved,
                divisor: h,
                capacity_at_value: fiber_capacity(d, h, cfg.loss_rate)?,
                beyond_line_of_sight: false,
                lower_m: None,
                upper_m: None,
            };
            ("d_b_max", r)
        }
    };
    Ok(constraint_row(cfg, quantity, regime, c, &r))
}

fn community_row(cfg: &ScenarioConfig, setup: &BeamSetup, c: f64, k_c: usize) -> Result<SweepRow> {
    let (quantity, r) = match cfg.community {
        CommunityKind::Fiber => {
            let d = max_fiber_length(c, k_c as f64, cfg.loss_rate)?;
            let r = ConstraintResult {
                value_m: d,
                status: Status::Solved,
                divisor: k_c as f64,
                capacity_at_value: fiber_capacity(d, k_c as f64, cfg.loss_rate)?,
                beyond_line_of_sight: false,
                lower_m: None,
                upper_m: None,
            };
            ("d_c_max", r)
        }
        CommunityKind::FreeSpace { h } => (
            "z_c_max",
            max_freespace_length(c, k_c as f64, setup, &cfg.atmosphere, cfg.condition, h)?,
        ),
    };
    Ok(constraint_row(cfg, quantity, Regime::Community, c, &r))
}

fn constraint_row(cfg: &ScenarioConfig, quantity: &str, regime: Regime, c: f64, r: &ConstraintResult) -> SweepRow {
    SweepRow {
        scenario: cfg.name.clone(),
        quantity: quantity.into(),
        regime: regime.label().into(),
        divisor: Some(r.divisor),
        c_target: Some(c),
        x_m: Some(r.value_m),
        y: Some(r.capacity_at_value),
        lower_m: r.lower_m,
        upper_m: r.upper_m,
        status: status_label(r.status, r.beyond_line_of_sight),
    }
}

fn curve_name(spec: &CurveSpec) -> String {
    let kind = match spec.kind {
        CurveKind::Fiber => "fiber",
        CurveKind::Ground => "ground",
        CurveKind::Downlink => "downlink",
        CurveKind::Uplink => "uplink",
        CurveKind::Intersatellite => "intersatellite",
    };
    match spec.kind {
        CurveKind::Downlink | CurveKind::Uplink => format!("{kind}(theta={})", spec.theta),
        _ => kind.to_string(),
    }
}

/// Two-value row: capacity in `y`, fading-averaged transmissivity in `lower_m`
/// and unfaded transmissivity in `upper_m`.
fn curve_row(cfg: &ScenarioConfig, setup: &BeamSetup, spec: &CurveSpec, point: usize) -> Result<SweepRow> {
    let x = spec.x_m[point];
    let (cap, mean, peak) = match spec.kind {
        CurveKind::Fiber => {
            let eta = fiber_transmissivity(x / 1e3, cfg.loss_rate)?;
            (plob(eta)?.finite()?, eta, eta)
        }
        CurveKind::Intersatellite => {
            let cap = intersatellite_capacity(setup, x)?.finite()?;
            let traj = Trajectory::Intersatellite { h1: spec.h, h2: spec.h, z: x };
            let ch = build_channel(setup, &cfg.atmosphere, &traj, cfg.condition)?;
            let d = ch.fading.density()?;
            (cap, d.mean_transmissivity()?, ch.fading.eta)
        }
        _ => {
            let traj = match spec.kind {
                CurveKind::Ground => Trajectory::Ground { h: spec.h, z: x },
                CurveKind::Downlink => Trajectory::Downlink { h_sat: x, theta: spec.theta },
                _ => Trajectory::Uplink { h_sat: x, theta: spec.theta },
            };
            let ch = build_channel(setup, &cfg.atmosphere, &traj, cfg.condition)?;
            let d = ch.fading.density()?;
            (ch.capacity()?.finite()?, d.mean_transmissivity()?, ch.fading.eta)
        }
    };
    Ok(SweepRow {
        scenario: cfg.name.clone(),
        quantity: curve_name(spec),
        regime: "point-to-point".into(),
        divisor: None,
        c_target: None,
        x_m: Some(x),
        y: Some(cap),
        lower_m: Some(mean),
        upper_m: Some(peak),
        status: "solved".into(),
    })
}

/// Evaluates every grid point; rows come back in grid order whatever the
/// thread count. Per-row failures are carried in the status column.
pub fn sweep(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<Vec<SweepRow>> {
    let setup = cfg.setup.resolve()?;
    setup.validate()?;
    let mut tasks = Vec::new();
    for &c in &cfg.c_grid {
        for &k_b in &cfg.k_b {
            tasks.push(Task::Backbone { c, k_b, regime: Regime::WorstCase });
            tasks.push(Task::Backbone { c, k_b, regime: Regime::BestCase });
        }
        for &k_c in &cfg.k_c {
            tasks.push(Task::Community { c, k_c });
        }
    }
    for (curve, spec) in cfg.curves.iter().enumerate() {
        for point in 0..spec.x_m.len() {
            tasks.push(Task::Curve { curve, point });
        }
    }
    let run = || tasks.par_iter().map(|t| run_task(cfg, &setup, *t)).collect::<Vec<_>>();
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ScenarioError::Threads(e.to_string()))?
            .install(run)),
        None => Ok(run()),
    }
}

/// Writes rows as CSV with a header line (also for an empty sweep).
pub fn write_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn fiber_examples() {
        assert_relative_eq!(max_fiber_length(1.0, 1.0, 0.02).unwrap(), 15051.499783199059, max_relative = 1e-12);
        assert_relative_eq!(max_fiber_length(1.0, 4.0, 0.02).unwrap(), 39916.00175997381, max_relative = 1e-12);
        assert_relative_eq!(max_fiber_length(2.0, 4.0, 0.02).unwrap(), 26664.534158492686, max_relative = 1e-12);
        assert!(max_fiber_length(0.0, 4.0, 0.02).is_err());
    }

    #[test]
    fn setup1_intersatellite_scale() {
        let s = BeamSetup::table1_setup1();
        let r = max_intersatellite_separation(1.0, 4.0, &s, 1.5e6).unwrap();
        assert_eq!(r.status, Status::Solved);
        assert!(r.value_m > 5e5 && r.value_m < 2e6, "{}", r.value_m);
        assert_relative_eq!(r.capacity_at_value, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn unreachable_targets() {
        let s = BeamSetup::table1_setup1();
        // PLOB(eta_eff) = 0.737 per link, so 4 links cannot carry 10 bits
        let r = max_intersatellite_separation(10.0, 4.0, &s, 1.5e6).unwrap();
        assert_eq!(r.status, Status::NoSolution);
        let b = intersat_bounds(10.0, 4.0, &s, 1.0, 1.0).unwrap();
        assert_eq!(b.upper, None);
        assert_eq!(b.lower, None);
        let r = max_freespace_length(1e3, 4.0, &BeamSetup::table2(), &AtmosphereModel::default(), Condition::ClearDay, 30.0)
            .unwrap();
        assert_eq!(r.status, Status::NoSolution);
    }

    #[test]
    fn lower_bound_recovers_upper_without_pointing() {
        let mut s = BeamSetup::table1_setup1();
        s.eps_p = 0.0;
        let b = intersat_bounds(0.1, 4.0, &s, 1.0, 1.0).unwrap();
        assert_relative_eq!(b.lower.unwrap(), b.upper.unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn freespace_window_limited() {
        let r = max_freespace_length(2.0, 4.0, &BeamSetup::table2(), &AtmosphereModel::default(), Condition::ClearDay, 30.0)
            .unwrap();
        assert_eq!(r.status, Status::WindowLimited);
        assert_eq!(r.value_m, GROUND_WINDOW);
    }

    #[test]
    fn freespace_round_trip() {
        let (s, atmo) = (BeamSetup::table2(), AtmosphereModel::default());
        let r = max_freespace_length(3.2, 4.0, &s, &atmo, Condition::ClearDay, 30.0).unwrap();
        assert_eq!(r.status, Status::Solved);
        assert_relative_eq!(r.capacity_at_value, 3.2, max_relative = 1e-6);
    }

    #[test]
    fn empty_grid_gives_header_only() {
        let mut cfg = ScenarioConfig::fig3a();
        cfg.c_grid.clear();
        let rows = sweep(&cfg, Some(1)).unwrap();
        assert!(rows.is_empty());
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), SWEEP_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn sweep_is_thread_count_independent() {
        let mut cfg = ScenarioConfig::fig4();
        cfg.c_grid = log_grid(0.5, 5.0, 4);
        let a = sweep(&cfg, Some(1)).unwrap();
        let b = sweep(&cfg, Some(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4 * (3 * 2 + 3));
    }

    #[test]
    fn row_errors_do_not_abort() {
        let mut cfg = ScenarioConfig::fig1();
        cfg.curves = vec![CurveSpec { kind: CurveKind::Downlink, x_m: vec![5e5], theta: 1.3, h: 0.0 }];
        let rows = sweep(&cfg, Some(1)).unwrap();
        assert!(rows[0].status.starts_with("error"));
    }

    #[test]
    fn config_round_trip() {
        for name in ScenarioConfig::PRESETS {
            let cfg = ScenarioConfig::preset(name).unwrap();
            let text = serde_json::to_string(&cfg).unwrap();
            let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn best_case_dominates_worst_case() {
        let cfg = ScenarioConfig::fig3a();
        let s = BeamSetup::table1_setup1();
        for c in [0.01, 0.1, 1.0] {
            let n = best_case_attachments(&cfg, &s, c).unwrap();
            let w = max_intersatellite_separation(c, 4.0, &s, 1.5e6).unwrap();
            let b = max_intersatellite_separation(c, 4.0 * n as f64, &s, 1.5e6).unwrap();
            assert!(b.value_m >= w.value_m);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fiber_round_trip(c in 1e-3f64..10.0, k in 1usize..12, gamma in 0.01f64..0.5) {
            let d = max_fiber_length(c, k as f64, gamma).unwrap();
            let back = fiber_capacity(d, k as f64, gamma).unwrap();
            prop_assert!((back - c).abs() <= 1e-9 * c);
        }

        #[test]
        fn intersatellite_decreasing_in_target(c in 1e-3f64..0.5, f in 1.1f64..3.0) {
            let s = BeamSetup::table1_setup1();
            let a = max_intersatellite_separation(c, 4.0, &s, 1.5e6).unwrap().value_m;
            let b = max_intersatellite_separation(c * f, 4.0, &s, 1.5e6).unwrap().value_m;
            prop_assert!(b < a);
        }
    }
}
