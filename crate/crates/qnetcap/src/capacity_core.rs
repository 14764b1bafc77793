//! Point-to-point capacity bounds for lossy and thermal-lossy channels, with
//! and without Weibull-type fading.

use gkquad::single::Integrator;
use gkquad::{RuntimeError, Tolerance};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use thiserror::Error;

const QUAD_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("capacity is infinite (lossless channel) and cannot be used as a finite value")]
    Infinite,
    #[error("quadrature failed for {what}: {reason} (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        what: &'static str,
        reason: String,
        estimate: f64,
        error: f64,
    },
}

pub type Result<T> = std::result::Result<T, CapacityError>;

pub(crate) fn check(name: &'static str, value: f64, ok: bool, expected: &'static str) -> Result<()> {
    if ok && !value.is_nan() {
        Ok(())
    } else {
        Err(CapacityError::Domain {
            name,
            value,
            expected,
        })
    }
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]` (either end may be infinite).
pub(crate) fn integrate<F: FnMut(f64) -> f64>(
    what: &'static str,
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut integrator = Integrator::new(f)
        .tolerance(Tolerance::Relative(QUAD_REL_TOL))
        .max_iters(2000);
    if !breakpoints.is_empty() {
        integrator = integrator.points(breakpoints);
    }
    let res = integrator.run(a..b);
    match res.estimate_delta() {
        Ok((v, _)) => Ok(v),
        Err(e) => {
            // the unchecked accessors only skip gkquad's error check
            let (v, d) = unsafe { (res.estimate_unchecked(), res.delta_unchecked()) };
            let acceptable = matches!(e, RuntimeError::RoundoffError | RuntimeError::Divergent)
                && v.is_finite()
                && d <= 1e-7 * v.abs().max(f64::MIN_POSITIVE);
            if acceptable || (v == 0.0 && d == 0.0) {
                Ok(v)
            } else {
                Err(CapacityError::Quadrature {
                    what,
                    reason: format!("{e:?}"),
                    estimate: v,
                    error: d,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    ExactAchievable,
    TightUpperBound,
}

impl BoundKind {
    pub fn combine(self, other: BoundKind) -> BoundKind {
        if self == BoundKind::TightUpperBound || other == BoundKind::TightUpperBound {
            BoundKind::TightUpperBound
        } else {
            BoundKind::ExactAchievable
        }
    }
}

/// Capacity in bits per channel use. `value` is `+inf` only for a lossless channel;
/// use [`CapacityBound::finite`] before arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityBound {
    pub value: f64,
    pub kind: BoundKind,
}

impl CapacityBound {
    fn exact(value: f64) -> Self {
        CapacityBound {
            value,
            kind: BoundKind::ExactAchievable,
        }
    }

    fn upper(value: f64) -> Self {
        CapacityBound {
            value,
            kind: BoundKind::TightUpperBound,
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }

    pub fn finite(&self) -> Result<f64> {
        if self.is_infinite() {
            Err(CapacityError::Infinite)
        } else {
            Ok(self.value)
        }
    }

    pub fn try_add(self, other: CapacityBound) -> Result<CapacityBound> {
        Ok(CapacityBound {
            value: self.finite()? + other.finite()?,
            kind: self.kind.combine(other.kind),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Transmissivity(f64);

impl Transmissivity {
    pub fn new(value: f64) -> Result<Self> {
        check("transmissivity", value, (0.0..=1.0).contains(&value), "[0, 1]")?;
        Ok(Transmissivity(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Transmissivity {
    type Error = CapacityError;
    fn try_from(v: f64) -> Result<Self> {
        Transmissivity::new(v)
    }
}

impl From<Transmissivity> for f64 {
    fn from(t: Transmissivity) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalOccupation {
    pub n_bar: f64,
}

impl ThermalOccupation {
    pub fn new(n_bar: f64) -> Result<Self> {
        check("n_bar", n_bar, n_bar >= 0.0 && n_bar.is_finite(), ">= 0")?;
        Ok(ThermalOccupation { n_bar })
    }

    /// Environment photon number n/(1-tau); `None` for tau = 1.
    pub fn n_bar_e(&self, tau: f64) -> Option<f64> {
        (tau < 1.0).then(|| self.n_bar / (1.0 - tau))
    }
}

/// h(x) = (x+1)log2(x+1) - x log2(x)
pub fn entropy_h(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ((x + 1.0) * (x + 1.0).ln() - x * x.ln()) / LN_2
}

pub fn plob(eta: f64) -> Result<CapacityBound> {
    check("eta", eta, (0.0..=1.0).contains(&eta), "[0, 1]")?;
    if eta == 1.0 {
        return Ok(CapacityBound::exact(f64::INFINITY));
    }
    Ok(CapacityBound::exact(-(-eta).ln_1p() / LN_2))
}

pub fn thermal_loss_bound(tau: f64, n_bar: f64) -> Result<CapacityBound> {
    check("tau", tau, (0.0..=1.0).contains(&tau), "[0, 1]")?;
    let occ = ThermalOccupation::new(n_bar)?;
    if n_bar == 0.0 {
        return plob(tau);
    }
    if tau <= n_bar {
        return Ok(CapacityBound::upper(0.0));
    }
    let Some(ne) = occ.n_bar_e(tau) else {
        return Ok(CapacityBound::upper(f64::INFINITY));
    };
    let v = -(ne * tau.ln() + (-tau).ln_1p()) / LN_2 - entropy_h(ne);
    Ok(CapacityBound::upper(v.max(0.0)))
}

pub fn fiber_transmissivity(length_km: f64, loss_rate: f64) -> Result<f64> {
    check("length_km", length_km, length_km >= 0.0, ">= 0")?;
    check("fiber_loss_rate", loss_rate, loss_rate > 0.0, "> 0")?;
    Ok(10f64.powf(-loss_rate * length_km))
}

/// Density of the instantaneous transmissivity under beam wandering with
/// Weibull-shaped loss:
/// F(t) = r0^2/(g s^2 t) ln(eta/t)^(2/g-1) exp(-(r0^2/2s^2) ln(eta/t)^(2/g)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingDensity {
    pub eta_max: f64,
    pub weibull_shape: f64,
    pub weibull_scale: f64,
    pub sigma: f64,
}

impl FadingDensity {
    pub fn new(eta_max: f64, weibull_shape: f64, weibull_scale: f64, sigma: f64) -> Result<Self> {
        check("eta_max", eta_max, (0.0..=1.0).contains(&eta_max), "[0, 1]")?;
        check("weibull_shape", weibull_shape, weibull_shape > 0.0, "> 0")?;
        check("weibull_scale", weibull_scale, weibull_scale > 0.0, "> 0")?;
        check("sigma", sigma, sigma >= 0.0, ">= 0")?;
        Ok(FadingDensity {
            eta_max,
            weibull_shape,
            weibull_scale,
            sigma,
        })
    }

    /// r0^2 / (2 sigma^2)
    fn kernel_rate(&self) -> f64 {
        self.weibull_scale.powi(2) / (2.0 * self.sigma.powi(2))
    }

    pub fn pdf(&self, tau: f64) -> f64 {
        if tau <= 0.0 || tau >= self.eta_max || self.sigma == 0.0 {
            return 0.0;
        }
        self.log_pdf_weight((self.eta_max / tau).ln()) / tau
    }

    /// tau F(tau) at tau = eta e^(-x), the density of x = ln(eta/tau).
    fn log_pdf_weight(&self, x: f64) -> f64 {
        let g = self.weibull_shape;
        let c = self.kernel_rate();
        2.0 * c / g * x.powf(2.0 / g - 1.0) * (-c * x.powf(2.0 / g)).exp()
    }

    /// Probability that the instantaneous transmissivity exceeds `t`.
    pub fn mass_above(&self, t: f64) -> f64 {
        if t >= self.eta_max {
            return 0.0;
        }
        if t <= 0.0 || self.sigma == 0.0 {
            return 1.0;
        }
        let x = (self.eta_max / t).ln();
        -(-self.kernel_rate() * x.powf(2.0 / self.weibull_shape)).exp_m1()
    }

    /// Integral of the density over (0, eta], evaluated from the density
    /// formula in v = c x^(2/g) with x = ln(eta/tau) so the endpoint
    /// behaviour and the long tail both map onto a smooth, bounded range.
    pub fn normalization(&self) -> Result<f64> {
        if self.sigma == 0.0 {
            return Ok(1.0);
        }
        let c = self.kernel_rate();
        let q = self.weibull_shape / 2.0;
        integrate(
            "density normalization",
            |v: f64| {
                if v == 0.0 {
                    return 1.0;
                }
                let x = (v / c).powf(q);
                // dx/dv = q x / v
                self.log_pdf_weight(x) * q * x / v
            },
            0.0,
            60.0,
            &[0.1, 1.0, 5.0, 20.0],
        )
    }

    /// Correction factor Delta with B_F = -Delta log2(1-eta), computed in x = ln(eta/tau).
    pub fn delta(&self) -> Result<f64> {
        let eta = self.eta_max;
        if eta == 0.0 || self.sigma == 0.0 {
            return Ok(1.0);
        }
        let c = self.kernel_rate();
        let p = 2.0 / self.weibull_shape;
        let integral = if p < 1.0 {
            // v = c x^p removes the cusp of x^p at the origin
            let q = 1.0 / p;
            let v_max = 750.0f64.min(c * 750f64.powf(p));
            let pts: Vec<f64> = [0.01, 0.1, 1.0, 5.0, 20.0].into_iter().filter(|v| *v < v_max).collect();
            integrate(
                "fading correction",
                |v: f64| {
                    let x = (v / c).powf(q);
                    (-v).exp() * q / c * (v / c).powf(q - 1.0) / (x.exp_m1() + 1.0 - eta)
                },
                0.0,
                v_max,
                &pts,
            )?
        } else {
            // the kernel is negligible beyond c x^p = 750; 1/(e^x - eta) beyond x = 750
            let scale = c.powf(-1.0 / p);
            let upper = (750.0 / c).powf(1.0 / p).min(750.0);
            let mut pts: Vec<f64> = [0.01, 0.1, 0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|m| m * scale)
                .chain([1.0, 10.0])
                .filter(|x| *x < upper)
                .collect();
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            integrate(
                "fading correction",
                |x: f64| (-c * x.powf(p)).exp() / (x.exp_m1() + 1.0 - eta),
                0.0,
                upper,
                &pts,
            )?
        };
        Ok(1.0 + eta / (-eta).ln_1p() * integral)
    }
}

impl FadingDensity {
    /// Fading-averaged transmissivity, the integral of tau F(tau).
    pub fn mean_transmissivity(&self) -> Result<f64> {
        if self.sigma == 0.0 || self.eta_max == 0.0 {
            return Ok(self.eta_max);
        }
        let c = self.kernel_rate();
        let q = self.weibull_shape / 2.0;
        let v_max = 750.0;
        let pts: Vec<f64> = vec![0.01, 0.1, 1.0, 5.0, 20.0];
        let m = integrate(
            "mean transmissivity",
            |v: f64| (-v - (v / c).powf(q)).exp(),
            0.0,
            v_max,
            &pts,
        )?;
        Ok(self.eta_max * m)
    }
}

/// Pure-loss fading capacity B_F(eta) = -Delta log2(1-eta).
pub fn fading_capacity(d: &FadingDensity) -> Result<CapacityBound> {
    let base = plob(d.eta_max)?;
    if base.is_infinite() || d.eta_max == 0.0 {
        return Ok(base);
    }
    let delta = d.delta()?;
    Ok(CapacityBound::exact((delta * base.value).max(0.0)))
}

fn same_shape(d: &FadingDensity, eta: f64) -> FadingDensity {
    FadingDensity { eta_max: eta, ..*d }
}

/// Thermal-lossy fading bound evaluated in closed form, B_F(eta) - T(eta, n) with
/// T = [1 - exp(-(r0^2/2s^2) ln(eta/n)^(2/g))][n log2 n/(1-n) + h(n)] - B_F(n),
/// where B_F(n) uses the same shape, scale and sigma with maximum transmissivity n.
pub fn thermal_fading_capacity(d: &FadingDensity, n_bar: f64) -> Result<CapacityBound> {
    ThermalOccupation::new(n_bar)?;
    if n_bar == 0.0 {
        return fading_capacity(d);
    }
    if n_bar >= d.eta_max {
        return Ok(CapacityBound::upper(0.0));
    }
    let b = fading_capacity(d)?.finite()?;
    let b_n = fading_capacity(&same_shape(d, n_bar))?.finite()?;
    let bracket = n_bar * n_bar.log2() / (1.0 - n_bar) + entropy_h(n_bar);
    let t = d.mass_above(n_bar) * bracket - b_n;
    Ok(CapacityBound::upper((b - t).max(0.0)))
}

/// Thermal-lossy fading bound as the direct average of the thermal-loss bound
/// over the density on [n, eta].
pub fn thermal_fading_quadrature(d: &FadingDensity, n_bar: f64) -> Result<CapacityBound> {
    ThermalOccupation::new(n_bar)?;
    if n_bar >= d.eta_max {
        return Ok(CapacityBound::upper(0.0));
    }
    let kind = if n_bar > 0.0 {
        BoundKind::TightUpperBound
    } else {
        BoundKind::ExactAchievable
    };
    let eta = d.eta_max;
    if d.sigma == 0.0 {
        let v = thermal_loss_bound(eta, n_bar)?;
        return Ok(CapacityBound { kind, ..v });
    }
    if eta == 1.0 {
        return Err(CapacityError::Infinite);
    }
    let c = d.kernel_rate();
    let p = 2.0 / d.weibull_shape;
    let x_max = if n_bar > 0.0 { (eta / n_bar).ln() } else { f64::INFINITY };
    let bound = |x: f64| thermal_loss_bound(eta * (-x).exp(), n_bar).map(|b| b.value).unwrap_or(0.0);
    // In v = c x^p the density becomes exp(-v) dv on [0, c x_max^p].
    let v_max = (c * x_max.powf(p)).min(750.0);
    let pts: Vec<f64> = [0.01, 0.1, 1.0, 5.0, 20.0].into_iter().filter(|v| *v < v_max).collect();
    let v = integrate(
        "thermal fading average",
        |v: f64| (-v).exp() * bound((v / c).powf(1.0 / p)),
        0.0,
        v_max,
        &pts,
    )?;
    Ok(CapacityBound {
        value: v.max(0.0),
        kind,
    })
}
