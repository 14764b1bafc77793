//! Free-space channel physics: diffraction, extinction, turbulence, beam
//! wandering, background noise and slant-path geometry.

use crate::capacity_core::{
    self, check, fading_capacity, integrate, plob, thermal_fading_capacity, BoundKind, CapacityBound,
    CapacityError, FadingDensity,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const EARTH_RADIUS: f64 = 6.371e6;
/// Weak-turbulence window for horizontal ground links (m).
pub const GROUND_WINDOW: f64 = 1066.0;
const FAR_FIELD_FACTOR: f64 = 10.0;
const YURA_WARN: f64 = 0.1;
const MAX_ZENITH: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error("zenith angle {0} rad exceeds the 1 rad validity window")]
    ZenithOutOfRange(f64),
    #[error("degenerate Weibull parameters: ln(2 eta_st f0) = {0} must be positive")]
    DegenerateWeibull(f64),
}

pub type Result<T> = std::result::Result<T, OpticsError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSetup {
    /// m
    pub wavelength: f64,
    /// initial spot size w0 (m)
    pub w0: f64,
    /// phase-front curvature R0 (m); `None` is collimated
    #[serde(default)]
    pub curvature: Option<f64>,
    /// receiver aperture radius a_R (m)
    pub aperture: f64,
    pub eta_eff: f64,
    pub n_ex: f64,
    /// pointing error (rad), sigma_p = eps_p * z
    pub eps_p: f64,
    /// detector time window (s)
    pub dt: f64,
    /// field of view (sr)
    pub fov: f64,
    /// frequency filter (nm)
    pub filter_nm: f64,
}

impl BeamSetup {
    pub fn table1_setup1() -> Self {
        BeamSetup {
            wavelength: 800e-9,
            w0: 0.4,
            curvature: None,
            aperture: 1.0,
            eta_eff: 0.4,
            n_ex: 0.0,
            eps_p: 1e-6,
            dt: 10e-9,
            fov: 1e-10,
            filter_nm: 1e-4,
        }
    }

    pub fn table1_setup2() -> Self {
        BeamSetup {
            w0: 0.2,
            aperture: 0.4,
            filter_nm: 1.0,
            ..Self::table1_setup1()
        }
    }

    pub fn table2() -> Self {
        BeamSetup {
            wavelength: 800e-9,
            w0: 0.05,
            curvature: None,
            aperture: 0.05,
            eta_eff: 0.5,
            n_ex: 0.05,
            eps_p: 1e-6,
            dt: 10e-9,
            fov: 1e-10,
            filter_nm: 1.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "table1-setup1" => Some(Self::table1_setup1()),
            "table1-setup2" => Some(Self::table1_setup2()),
            "table2" => Some(Self::table2()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check("wavelength", self.wavelength, self.wavelength > 0.0, "> 0")?;
        check("w0", self.w0, self.w0 > 0.0, "> 0")?;
        check("aperture", self.aperture, self.aperture > 0.0, "> 0")?;
        check("eta_eff", self.eta_eff, self.eta_eff > 0.0 && self.eta_eff <= 1.0, "(0, 1]")?;
        check("n_ex", self.n_ex, self.n_ex >= 0.0, ">= 0")?;
        check("eps_p", self.eps_p, self.eps_p >= 0.0, ">= 0")?;
        check("dt", self.dt, self.dt >= 0.0, ">= 0")?;
        check("fov", self.fov, self.fov >= 0.0, ">= 0")?;
        check("filter_nm", self.filter_nm, self.filter_nm >= 0.0, ">= 0")?;
        if let Some(r) = self.curvature {
            check("curvature", r, r != 0.0, "nonzero")?;
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn rayleigh_range(&self) -> f64 {
        PI * self.w0 * self.w0 / self.wavelength
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    ClearNight,
    CloudyDay,
    ClearDay,
}

impl std::str::FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "clear-night" => Ok(Condition::ClearNight),
            "cloudy-day" => Ok(Condition::CloudyDay),
            "clear-day" => Ok(Condition::ClearDay),
            _ => Err(format!("unknown condition `{s}` (clear-night, cloudy-day, clear-day)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Cn2Profile {
    /// Hufnagel-Valley: 0.00594 (v/27)^2 (1e-5 h)^10 e^(-h/1000) + 2.7e-16 e^(-h/1500) + A e^(-h/100)
    HufnagelValley { a: f64, v: f64 },
    Constant { cn2: f64 },
}

impl Cn2Profile {
    pub fn hv57() -> Self {
        Cn2Profile::HufnagelValley { a: 1.7e-14, v: 21.0 }
    }

    pub fn at(&self, h: f64) -> f64 {
        match *self {
            Cn2Profile::HufnagelValley { a, v } => {
                let h = h.max(0.0);
                0.00594 * (v / 27.0).powi(2) * (1e-5 * h).powi(10) * (-h / 1000.0).exp()
                    + 2.7e-16 * (-h / 1500.0).exp()
                    + a * (-h / 100.0).exp()
            }
            Cn2Profile::Constant { cn2 } => cn2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtmosphereModel {
    /// sea-level extinction (1/m)
    pub alpha0: f64,
    /// extinction scale height (m)
    pub h_tilde: f64,
    pub cn2: Cn2Profile,
    /// sky spectral irradiance, photons m^-2 s^-1 nm^-1 sr^-1
    pub h_clear_night: f64,
    pub h_cloudy_day: f64,
    pub kappa_day: f64,
    pub kappa_night: f64,
    pub h_sun: f64,
}

impl Default for AtmosphereModel {
    fn default() -> Self {
        AtmosphereModel {
            alpha0: 5e-6,
            h_tilde: 6600.0,
            cn2: Cn2Profile::hv57(),
            h_clear_night: 1.9e13,
            h_cloudy_day: 1.9e18,
            kappa_day: 0.3,
            kappa_night: 7.36e-7,
            h_sun: 4.61e18,
        }
    }
}

impl AtmosphereModel {
    pub fn alpha(&self, h: f64) -> f64 {
        self.alpha0 * (-h / self.h_tilde).exp()
    }

    /// Irradiance seen by a receiver on the ground (ground and downlink paths).
    pub fn sky_irradiance(&self, condition: Condition) -> f64 {
        match condition {
            Condition::ClearNight => self.h_clear_night,
            Condition::CloudyDay => self.h_cloudy_day,
            Condition::ClearDay => self.kappa_day * self.h_sun,
        }
    }

    /// Irradiance seen by a satellite receiver looking down (uplink).
    pub fn albedo_irradiance(&self, condition: Condition) -> f64 {
        match condition {
            Condition::ClearNight => self.kappa_night * self.h_sun,
            Condition::CloudyDay | Condition::ClearDay => self.kappa_day * self.h_sun,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Trajectory {
    Ground { h: f64, z: f64 },
    Uplink { h_sat: f64, theta: f64 },
    Downlink { h_sat: f64, theta: f64 },
    Intersatellite { h1: f64, h2: f64, z: f64 },
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Trajectory::Ground { h, z } => {
                check("h", h, h >= 0.0, ">= 0")?;
                check("z", z, z >= 0.0 && z.is_finite(), ">= 0")?;
            }
            Trajectory::Uplink { h_sat, theta } | Trajectory::Downlink { h_sat, theta } => {
                check("h_sat", h_sat, h_sat > 0.0, "> 0")?;
                if !(theta.abs() <= MAX_ZENITH) {
                    return Err(OpticsError::ZenithOutOfRange(theta));
                }
            }
            Trajectory::Intersatellite { h1, h2, z } => {
                check("h1", h1, h1 >= 0.0, ">= 0")?;
                check("h2", h2, h2 >= 0.0, ">= 0")?;
                check("z", z, z >= 0.0 && z.is_finite(), ">= 0")?;
            }
        }
        Ok(())
    }

    /// Propagation length z (m).
    pub fn length(&self) -> f64 {
        match *self {
            Trajectory::Ground { z, .. } | Trajectory::Intersatellite { z, .. } => z,
            Trajectory::Uplink { h_sat, theta } | Trajectory::Downlink { h_sat, theta } => {
                slant_distance(h_sat, theta)
            }
        }
    }

    /// Altitude of the beam after propagating `zeta` meters from the transmitter.
    pub fn altitude_at(&self, zeta: f64) -> f64 {
        match *self {
            Trajectory::Ground { h, .. } => h,
            Trajectory::Uplink { theta, .. } => slant_altitude(zeta, theta),
            Trajectory::Downlink { theta, .. } => slant_altitude((self.length() - zeta).max(0.0), theta),
            Trajectory::Intersatellite { h1, h2, z } => {
                if z == 0.0 {
                    h1
                } else {
                    h1 + (h2 - h1) * zeta / z
                }
            }
        }
    }

    /// Distance from the transmitter at which the beam crosses altitude `h`, if it does.
    fn distance_at_altitude(&self, h: f64) -> Option<f64> {
        let z = self.length();
        let d = match *self {
            Trajectory::Uplink { theta, .. } => slant_distance(h, theta),
            Trajectory::Downlink { theta, .. } => z - slant_distance(h, theta),
            _ => return None,
        };
        (d > 0.0 && d < z).then_some(d)
    }

    fn is_space(&self) -> bool {
        matches!(self, Trajectory::Intersatellite { .. })
    }
}

/// Altitude after a slant distance z from the ground at zenith angle theta.
pub fn slant_altitude(z: f64, theta: f64) -> f64 {
    let r = EARTH_RADIUS;
    let num = z * z + 2.0 * z * r * theta.cos();
    num / ((r * r + num).sqrt() + r)
}

/// Slant distance from the ground to altitude h at zenith angle theta.
pub fn slant_distance(h: f64, theta: f64) -> f64 {
    let r = EARTH_RADIUS;
    let c = r * theta.cos();
    let num = h * h + 2.0 * h * r;
    num / ((num + c * c).sqrt() + c)
}

/// Longest chord between two altitudes that stays above the Earth's surface.
pub fn line_of_sight_limit(h1: f64, h2: f64) -> f64 {
    let r = EARTH_RADIUS;
    h1 * (h1 + 2.0 * r) / (h1 + r) + h2 * (h2 + 2.0 * r) / (h2 + r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diffraction {
    pub w_d: f64,
    pub eta_d: f64,
    pub eta_d_far: f64,
    pub far_field: bool,
}

pub fn diffraction(setup: &BeamSetup, z: f64) -> Result<Diffraction> {
    check("z", z, z >= 0.0, ">= 0")?;
    let zr = setup.rayleigh_range();
    let focus = match setup.curvature {
        Some(r0) => (1.0 - z / r0).powi(2),
        None => 1.0,
    };
    let w2 = setup.w0 * setup.w0 * (focus + (z / zr).powi(2));
    let far = 2.0 * setup.aperture.powi(2) / w2;
    Ok(Diffraction {
        w_d: w2.sqrt(),
        eta_d: -(-far).exp_m1(),
        eta_d_far: far,
        far_field: z > FAR_FIELD_FACTOR * zr,
    })
}

pub fn extinction(atmo: &AtmosphereModel, traj: &Trajectory) -> Result<f64> {
    traj.validate()?;
    let z = traj.length();
    match *traj {
        Trajectory::Intersatellite { .. } => Ok(1.0),
        Trajectory::Ground { h, z } => Ok((-atmo.alpha(h) * z).exp()),
        _ => {
            let pts = breakpoints(traj, &[0.5, 1.0, 3.0, 10.0].map(|m| m * atmo.h_tilde));
            let od = integrate("extinction", |s| atmo.alpha(traj.altitude_at(s)), 0.0, z, &pts)?;
            Ok((-od).exp())
        }
    }
}

fn breakpoints(traj: &Trajectory, altitudes: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = altitudes
        .iter()
        .filter_map(|h| traj.distance_at_altitude(*h))
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TurbulenceWarning {
    /// Rytov variance above 1
    StrongScintillation,
    /// Yura parameter not small; the (1 - phi) factors are clamped at phi = 1
    YuraCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turbulence {
    pub rho0: f64,
    pub phi: f64,
    pub w_st: f64,
    pub eta_st: f64,
    pub eta_st_far: f64,
    pub sigma_t2: f64,
    /// only defined for horizontal ground paths
    pub sigma_ry2: Option<f64>,
    pub warnings: Vec<TurbulenceWarning>,
}

/// Spherical-wave coherence length along the trajectory.
pub fn coherence_length(setup: &BeamSetup, atmo: &AtmosphereModel, traj: &Trajectory) -> Result<f64> {
    let k = setup.wavenumber();
    let z = traj.length();
    if z == 0.0 {
        return Ok(f64::INFINITY);
    }
    let weighted = match *traj {
        Trajectory::Intersatellite { .. } => 0.0,
        Trajectory::Ground { h, .. } => {
            // horizontal path: 0.548 k^2 Cn2 z
            return Ok((0.548 * k * k * atmo.cn2.at(h) * z).powf(-0.6));
        }
        _ => {
            let pts = breakpoints(traj, &[30.0, 100.0, 300.0, 1000.0, 3000.0, 10_000.0, 20_000.0]);
            integrate(
                "coherence length",
                |s| (1.0 - s / z).max(0.0).powf(5.0 / 3.0) * atmo.cn2.at(traj.altitude_at(s)),
                0.0,
                z,
                &pts,
            )?
        }
    };
    let inner = 1.46 * k * k * weighted;
    Ok(if inner > 0.0 { inner.powf(-0.6) } else { f64::INFINITY })
}

pub fn turbulence(setup: &BeamSetup, atmo: &AtmosphereModel, traj: &Trajectory) -> Result<Turbulence> {
    setup.validate()?;
    traj.validate()?;
    let z = traj.length();
    let diff = diffraction(setup, z)?;
    let rho0 = coherence_length(setup, atmo, traj)?;
    let mut warnings = Vec::new();
    let (w_st2, sigma_t2, phi) = if rho0.is_infinite() {
        (diff.w_d.powi(2), 0.0, f64::INFINITY)
    } else {
        let phi = 0.33 * (rho0 / setup.w0).powf(1.0 / 3.0);
        if phi > YURA_WARN {
            warnings.push(TurbulenceWarning::YuraCondition);
        }
        let q = (setup.wavelength * z / (PI * rho0)).powi(2);
        let keep = (1.0 - phi.min(1.0)).powi(2);
        (diff.w_d.powi(2) + 2.0 * q * keep, 2.0 * q * (1.0 - keep), phi)
    };
    let sigma_ry2 = match *traj {
        Trajectory::Ground { h, z } => {
            let v = 1.23 * setup.wavenumber().powf(7.0 / 6.0) * z.powf(11.0 / 6.0) * atmo.cn2.at(h);
            if v > 1.0 {
                warnings.push(TurbulenceWarning::StrongScintillation);
            }
            Some(v)
        }
        _ => None,
    };
    let far = 2.0 * setup.aperture.powi(2) / w_st2;
    Ok(Turbulence {
        rho0,
        phi,
        w_st: w_st2.sqrt(),
        eta_st: -(-far).exp_m1(),
        eta_st_far: far,
        sigma_t2,
        sigma_ry2,
        warnings,
    })
}

/// Reconcilable wandering variance per trajectory kind.
pub fn wandering_variance(setup: &BeamSetup, traj: &Trajectory, turb: Option<&Turbulence>) -> f64 {
    let z = traj.length();
    let sigma_p2 = (setup.eps_p * z).powi(2);
    let sigma_t2 = turb.map_or(0.0, |t| t.sigma_t2);
    match traj {
        Trajectory::Ground { .. } => sigma_t2 + sigma_p2,
        Trajectory::Uplink { .. } => sigma_t2,
        Trajectory::Downlink { .. } | Trajectory::Intersatellite { .. } => sigma_p2,
    }
}

/// e^(-y) I_n(y) for n in {0, 1}.
fn scaled_bessel_i(n: u32, y: f64) -> f64 {
    if y < 600.0 {
        puruspe::In(n, y) * (-y).exp()
    } else {
        let mu = 4.0 * (n * n) as f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..12 {
            let kf = k as f64;
            term *= -(mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * y);
            sum += term;
        }
        sum / (2.0 * PI * y).sqrt()
    }
}

/// 1 - e^(-y) I_0(y), accurate for small y.
fn one_minus_scaled_i0(y: f64) -> f64 {
    if y < 1.0 {
        // I0(y) - 1 by its power series
        let q = y * y / 4.0;
        let mut term = 1.0;
        let mut s = 0.0;
        for k in 1..30 {
            term *= q / (k * k) as f64;
            s += term;
            if term < 1e-18 * s {
                break;
            }
        }
        -(-y).exp_m1() - (-y).exp() * s
    } else {
        1.0 - scaled_bessel_i(0, y)
    }
}

pub fn f0(x: f64) -> f64 {
    1.0 / one_minus_scaled_i0(2.0 * x)
}

pub fn f1(x: f64) -> f64 {
    scaled_bessel_i(1, 2.0 * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub weibull_shape: f64,
    pub weibull_scale: f64,
}

pub fn weibull_params(eta_st: f64, eta_st_far: f64, aperture: f64) -> Result<WeibullParams> {
    check("eta_st", eta_st, eta_st > 0.0 && eta_st <= 1.0, "(0, 1]")?;
    check("eta_st_far", eta_st_far, eta_st_far > 0.0, "> 0")?;
    let x = eta_st_far;
    let (a0, a1) = (f0(x), f1(x));
    let l = (2.0 * eta_st * a0).ln();
    if !(l > 0.0) {
        return Err(OpticsError::DegenerateWeibull(l));
    }
    let shape = 4.0 * x * a0 * a1 / l;
    Ok(WeibullParams {
        weibull_shape: shape,
        weibull_scale: aperture / l.powf(1.0 / shape),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    /// background photons per mode
    pub n_b: f64,
    /// total noise eta_eff n_b + n_ex
    pub n_bar: f64,
}

pub fn background_photons(
    setup: &BeamSetup,
    atmo: &AtmosphereModel,
    traj: &Trajectory,
    condition: Condition,
) -> Background {
    let gamma_r = setup.dt * setup.filter_nm * setup.fov * setup.aperture.powi(2);
    let irradiance = match traj {
        Trajectory::Ground { .. } | Trajectory::Downlink { .. } => atmo.sky_irradiance(condition),
        Trajectory::Uplink { .. } => atmo.albedo_irradiance(condition),
        Trajectory::Intersatellite { .. } => 0.0,
    };
    let n_b = irradiance * gamma_r;
    Background {
        n_b,
        n_bar: setup.eta_eff * n_b + setup.n_ex,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub z: f64,
    pub w_d: f64,
    pub eta_d: f64,
    pub eta_atm: f64,
    pub eta_st: f64,
    pub w_st: f64,
    pub rho0: Option<f64>,
    pub phi: Option<f64>,
    pub sigma_t2: f64,
    pub sigma_p2: f64,
    pub sigma_ry2: Option<f64>,
    pub n_b: f64,
    pub line_of_sight_exceeded: bool,
    pub warnings: Vec<TurbulenceWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingSpec {
    pub eta: f64,
    pub weibull_shape: f64,
    pub weibull_scale: f64,
    pub sigma: f64,
    pub n_bar: f64,
}

impl FadingSpec {
    pub fn density(&self) -> Result<FadingDensity> {
        Ok(FadingDensity::new(self.eta, self.weibull_shape, self.weibull_scale, self.sigma)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub fading: FadingSpec,
    pub trajectory: Trajectory,
    pub diagnostics: Diagnostics,
}

impl ChannelModel {
    /// Thermal-lossy fading bound when n > 0, pure-loss fading capacity otherwise.
    pub fn capacity(&self) -> Result<CapacityBound> {
        let d = self.fading.density()?;
        if self.fading.n_bar > 0.0 {
            Ok(thermal_fading_capacity(&d, self.fading.n_bar)?)
        } else {
            Ok(fading_capacity(&d)?)
        }
    }

    /// Same bound using the direct thermal average instead of the closed form.
    pub fn capacity_quadrature(&self) -> Result<CapacityBound> {
        let d = self.fading.density()?;
        Ok(capacity_core::thermal_fading_quadrature(&d, self.fading.n_bar)?)
    }
}

pub fn build_channel(
    setup: &BeamSetup,
    atmo: &AtmosphereModel,
    traj: &Trajectory,
    condition: Condition,
) -> Result<ChannelModel> {
    setup.validate()?;
    traj.validate()?;
    let z = traj.length();
    let diff = diffraction(setup, z)?;
    let eta_atm = extinction(atmo, traj)?;
    let turb = if traj.is_space() {
        None
    } else {
        Some(turbulence(setup, atmo, traj)?)
    };
    let (w_st, eta_st, eta_st_far) = match &turb {
        Some(t) => (t.w_st, t.eta_st, t.eta_st_far),
        None => (diff.w_d, diff.eta_d, diff.eta_d_far),
    };
    let sigma2 = wandering_variance(setup, traj, turb.as_ref());
    let wb = weibull_params(eta_st, eta_st_far, setup.aperture)?;
    let bg = background_photons(setup, atmo, traj, condition);
    let los = match *traj {
        Trajectory::Intersatellite { h1, h2, z } => z > line_of_sight_limit(h1, h2),
        _ => false,
    };
    Ok(ChannelModel {
        fading: FadingSpec {
            eta: setup.eta_eff * eta_atm * eta_st,
            weibull_shape: wb.weibull_shape,
            weibull_scale: wb.weibull_scale,
            sigma: sigma2.sqrt(),
            n_bar: bg.n_bar,
        },
        trajectory: *traj,
        diagnostics: Diagnostics {
            z,
            w_d: diff.w_d,
            eta_d: diff.eta_d,
            eta_atm,
            eta_st,
            w_st,
            rho0: turb.as_ref().map(|t| t.rho0),
            phi: turb.as_ref().map(|t| t.phi),
            sigma_t2: turb.as_ref().map_or(0.0, |t| t.sigma_t2),
            sigma_p2: (setup.eps_p * z).powi(2),
            sigma_ry2: turb.as_ref().and_then(|t| t.sigma_ry2),
            n_b: bg.n_b,
            line_of_sight_exceeded: los,
            warnings: turb.map(|t| t.warnings).unwrap_or_default(),
        },
    })
}

/// Pure-loss capacity of a diffraction-limited link between satellites, with
/// pointing-error wandering sigma = eps_p z.
pub fn intersatellite_capacity(setup: &BeamSetup, z: f64) -> Result<CapacityBound> {
    setup.validate()?;
    let diff = diffraction(setup, z)?;
    let eta = setup.eta_eff * diff.eta_d;
    let sigma = setup.eps_p * z;
    if sigma == 0.0 {
        return Ok(plob(eta)?);
    }
    let wb = weibull_params(diff.eta_d, diff.eta_d_far, setup.aperture)?;
    let d = FadingDensity::new(eta, wb.weibull_shape, wb.weibull_scale, sigma)?;
    let b = fading_capacity(&d)?;
    Ok(CapacityBound {
        kind: BoundKind::ExactAchievable,
        ..b
    })
}
