//! Dimensionless characterization of the testbed: flow regime, diffusion and
//! gravity relevance, and the parameter values at which each regime would
//! change.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{effective_velocity, max_velocity, TestbedConfig};
use crate::scalar::{lit, Real};

/// Gravitational acceleration (m/s²).
pub const GRAVITY: f64 = 9.81;
/// Reynolds number at the laminar/turbulent transition in a circular duct.
pub const CRITICAL_REYNOLDS: f64 = 2100.0;
/// Dispersion factor at which diffusion becomes comparable to advection.
pub const CRITICAL_DISPERSION: f64 = 1.0;
/// Ratio between tube radius and the length scale of velocity variation.
const CHARACTERISTIC_LENGTH_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowRegime {
    Laminar,
    Turbulent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportRegime {
    FlowDominated,
    DiffusionDominated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GravityReport<T> {
    /// Weight of one particle (N).
    pub force: T,
    /// Sedimentation drift velocity (m/s).
    pub drift: T,
    /// Time until the drift covers the critical displacement (s).
    pub onset_time: T,
    /// Particle mass whose drift covers the critical displacement within the
    /// critical time (kg).
    pub critical_mass: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RegimeReport<T> {
    pub reynolds: T,
    pub flow_regime: FlowRegime,
    pub dispersion_factor: T,
    pub transport_regime: TransportRegime,
    pub diffusion_coeff: T,
    pub gravity_force: T,
    pub gravity_drift: T,
    pub gravity_onset_time: T,
    pub gravity_critical_mass: T,
}

/// Parameter values that push the testbed to a regime boundary, each obtained
/// by varying one quantity with the others held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RegimeThresholds<T> {
    /// Background flow rate with Re = 2100 (m³/s).
    pub turbulent_background_flow: T,
    /// Tube radius with Re = 2100 at fixed mean velocity (m).
    pub turbulent_tube_radius: T,
    /// Mean velocity with α_D = 1 (m/s).
    pub diffusive_effective_velocity: T,
    /// Background flow rate producing that mean velocity (m³/s).
    pub diffusive_background_flow: T,
    /// Tube radius with α_D = 1 at fixed mean velocity (m).
    pub diffusive_tube_radius: T,
    /// Distance with α_D = 1 (m).
    pub diffusive_distance: T,
    /// Diffusion coefficient with α_D = 1 (m²/s).
    pub diffusive_diffusion_coeff: T,
}

/// Reynolds number a·u0/ν.
pub fn reynolds<T: Real>(cfg: &TestbedConfig<T>) -> T {
    cfg.tube_radius * max_velocity(cfg) / cfg.kinematic_viscosity
}

/// Stokes friction 6πηR_p. Note that the configured `friction` field, not
/// this value, is what the other formulas use.
pub fn stokes_friction<T: Real>(cfg: &TestbedConfig<T>) -> T {
    lit::<T>(6.0) * T::PI() * cfg.dynamic_viscosity * cfg.particle_radius
}

/// Stokes–Einstein diffusion coefficient k_B·T/ζ.
pub fn diffusion_coefficient<T: Real>(cfg: &TestbedConfig<T>) -> Result<T> {
    if cfg.friction == T::zero() {
        return Err(Error::arg("friction coefficient is zero"));
    }
    Ok(cfg.thermal_energy / cfg.friction)
}

/// Dispersion factor d·D/(a_c²·u_eff) with a_c = a/10.
pub fn dispersion_factor<T: Real>(cfg: &TestbedConfig<T>, distance: T) -> Result<T> {
    if !(distance > T::zero()) {
        return Err(Error::arg(format!("distance must be positive, got {distance}")));
    }
    let ac = cfg.tube_radius / lit(CHARACTERISTIC_LENGTH_RATIO);
    Ok(distance * diffusion_coefficient(cfg)? / (ac * ac * effective_velocity(cfg)))
}

pub fn gravity_report<T: Real>(
    cfg: &TestbedConfig<T>,
    critical_displacement: T,
    critical_time: T,
) -> GravityReport<T> {
    let g = lit::<T>(GRAVITY);
    let force = cfg.particle_mass * g;
    let drift = force / cfg.friction;
    GravityReport {
        force,
        drift,
        onset_time: critical_displacement / drift,
        critical_mass: critical_displacement / critical_time * cfg.friction / g,
    }
}

/// All relations are monomials in the varied quantity, so each threshold is a
/// closed-form rescaling of the current value.
pub fn regime_thresholds<T: Real>(
    cfg: &TestbedConfig<T>,
    distance: T,
) -> Result<RegimeThresholds<T>> {
    let re_ratio = lit::<T>(CRITICAL_REYNOLDS) / reynolds(cfg);
    // α_D ∝ d·D / (a²·u)
    let ad_ratio = lit::<T>(CRITICAL_DISPERSION) / dispersion_factor(cfg, distance)?;
    let u_eff = effective_velocity(cfg);
    let diffusive_effective_velocity = u_eff / ad_ratio;
    Ok(RegimeThresholds {
        // Re = 2Qb/(π a ν)
        turbulent_background_flow: cfg.background_flow * re_ratio,
        // Re = 2a·u_eff/ν
        turbulent_tube_radius: cfg.tube_radius * re_ratio,
        diffusive_effective_velocity,
        diffusive_background_flow: diffusive_effective_velocity
            * T::PI()
            * cfg.tube_radius
            * cfg.tube_radius,
        diffusive_tube_radius: cfg.tube_radius / ad_ratio.sqrt(),
        diffusive_distance: distance * ad_ratio,
        diffusive_diffusion_coeff: diffusion_coefficient(cfg)? * ad_ratio,
    })
}

/// Full regime report at distance `distance`, with gravity judged against a
/// displacement of a/10 and a critical time of one minute.
pub fn characterize<T: Real>(cfg: &TestbedConfig<T>, distance: T) -> Result<RegimeReport<T>> {
    let reynolds = reynolds(cfg);
    let dispersion_factor = dispersion_factor(cfg, distance)?;
    let gravity = gravity_report(
        cfg,
        cfg.tube_radius / lit(CHARACTERISTIC_LENGTH_RATIO),
        lit(60.0),
    );
    Ok(RegimeReport {
        reynolds,
        flow_regime: if reynolds < lit(CRITICAL_REYNOLDS) {
            FlowRegime::Laminar
        } else {
            FlowRegime::Turbulent
        },
        dispersion_factor,
        transport_regime: if dispersion_factor < lit(CRITICAL_DISPERSION) {
            TransportRegime::FlowDominated
        } else {
            TransportRegime::DiffusionDominated
        },
        diffusion_coeff: diffusion_coefficient(cfg)?,
        gravity_force: gravity.force,
        gravity_drift: gravity.drift,
        gravity_onset_time: gravity.onset_time,
        gravity_critical_mass: gravity.critical_mass,
    })
}
