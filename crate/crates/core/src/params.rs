//! Testbed configuration and the hydrodynamic quantities derived from it.
//!
//! Every field is stored in SI base units. The [`units`] helpers convert the
//! laboratory units the testbed is usually described in (mL/min, µL, mm, cm)
//! exactly once, at construction time.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Unit conversions into SI base units.
pub mod units {
    use crate::scalar::{lit, Real};

    pub fn ml_per_min<T: Real>(x: T) -> T {
        x * lit(1e-6 / 60.0)
    }

    pub fn to_ml_per_min<T: Real>(q: T) -> T {
        q / lit(1e-6 / 60.0)
    }

    pub fn microliter<T: Real>(x: T) -> T {
        x * lit(1e-9)
    }

    pub fn mm<T: Real>(x: T) -> T {
        x * lit(1e-3)
    }

    pub fn cm<T: Real>(x: T) -> T {
        x * lit(1e-2)
    }

    pub fn nm<T: Real>(x: T) -> T {
        x * lit(1e-9)
    }
}

/// Physical and signaling parameters of the testbed.
///
/// JSON field names follow the conventional symbols (`a`, `Qb`, `Vi`, ...);
/// any field left out of a config file takes its testbed default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default, deny_unknown_fields)]
pub struct TestbedConfig<T> {
    /// Tube radius (m).
    #[serde(rename = "a")]
    pub tube_radius: T,
    /// Background flow rate (m³/s).
    #[serde(rename = "Qb")]
    pub background_flow: T,
    /// Injection flow rate (m³/s).
    #[serde(rename = "Qp")]
    pub injection_flow: T,
    /// Injected volume per pulse (m³).
    #[serde(rename = "Vi")]
    pub injection_volume: T,
    /// Bulk susceptibility of the particle suspension.
    #[serde(rename = "chi_ref")]
    pub chi_ref: T,
    /// Kinematic viscosity of the carrier (m²/s).
    #[serde(rename = "nu")]
    pub kinematic_viscosity: T,
    /// Dynamic viscosity of the carrier (Pa·s).
    #[serde(rename = "eta")]
    pub dynamic_viscosity: T,
    /// Hydrodynamic particle radius (m).
    #[serde(rename = "Rp")]
    pub particle_radius: T,
    /// Particle mass (kg).
    #[serde(rename = "m_p")]
    pub particle_mass: T,
    /// Thermal energy k_B·T of the medium (J).
    #[serde(rename = "kT")]
    pub thermal_energy: T,
    /// Friction coefficient (kg/s). Stored explicitly; see
    /// [`crate::physics::stokes_friction`] for the Stokes-law value.
    #[serde(rename = "zeta")]
    pub friction: T,
    /// Symbol duration (s).
    #[serde(rename = "T")]
    pub symbol_duration: T,
    /// Sampling interval (s).
    #[serde(rename = "dt")]
    pub sample_interval: T,
    /// Transmitter–receiver distance (m).
    #[serde(rename = "d")]
    pub distance: T,
}

impl<T: Real> Default for TestbedConfig<T> {
    fn default() -> Self {
        Self {
            tube_radius: units::mm(lit(0.75)),
            background_flow: units::ml_per_min(lit(5.0)),
            injection_flow: units::ml_per_min(lit(5.26)),
            injection_volume: units::microliter(lit(17.3)),
            chi_ref: lit(3e-3),
            kinematic_viscosity: lit(1e-6),
            dynamic_viscosity: lit(1e-3),
            particle_radius: units::nm(lit(24.5)),
            particle_mass: lit(2.5e-19),
            thermal_energy: lit(4.11e-21),
            friction: lit(5.18e-10),
            symbol_duration: lit(1.0),
            sample_interval: lit(0.1),
            distance: units::cm(lit(10.0)),
        }
    }
}

impl<T: Real> TestbedConfig<T> {
    /// Default configuration at the given distance (m).
    pub fn at_distance(distance: T) -> Self {
        Self {
            distance,
            ..Self::default()
        }
    }

    pub fn with_distance(mut self, distance: T) -> Self {
        self.distance = distance;
        self
    }

    pub fn with_background_flow_ml_per_min(mut self, q: T) -> Self {
        self.background_flow = units::ml_per_min(q);
        self
    }

    pub fn with_injection_flow_ml_per_min(mut self, q: T) -> Self {
        self.injection_flow = units::ml_per_min(q);
        self
    }

    pub fn with_injection_volume_ul(mut self, v: T) -> Self {
        self.injection_volume = units::microliter(v);
        self
    }

    pub fn with_tube_radius_mm(mut self, a: T) -> Self {
        self.tube_radius = units::mm(a);
        self
    }

    pub fn with_symbol_duration(mut self, t: T) -> Self {
        self.symbol_duration = t;
        self
    }

    /// Checks positivity of every physical field and the integer oversampling
    /// factor.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("a", self.tube_radius),
            ("Qb", self.background_flow),
            ("Qp", self.injection_flow),
            ("Vi", self.injection_volume),
            ("chi_ref", self.chi_ref),
            ("nu", self.kinematic_viscosity),
            ("eta", self.dynamic_viscosity),
            ("Rp", self.particle_radius),
            ("m_p", self.particle_mass),
            ("kT", self.thermal_energy),
            ("zeta", self.friction),
            ("T", self.symbol_duration),
            ("dt", self.sample_interval),
            ("d", self.distance),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        self.checked_oversampling().map(|_| ())
    }

    fn checked_oversampling(&self) -> Result<usize> {
        let ratio = self.symbol_duration / self.sample_interval;
        let rounded = ratio.round();
        if rounded < T::one() || (ratio - rounded).abs() > lit::<T>(1e-6) * rounded {
            return Err(Error::config(format!(
                "T/dt must be a positive integer, got {ratio}"
            )));
        }
        rounded
            .to_usize()
            .ok_or_else(|| Error::config("oversampling factor out of range"))
    }

    /// Oversampling factor I = T/dt.
    ///
    /// Panics if `T/dt` is not a positive integer; call [`validate`](Self::validate)
    /// on untrusted configurations first.
    pub fn oversampling(&self) -> usize {
        self.checked_oversampling().expect("invalid oversampling factor")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(s).map_err(|e| Error::config(format!("config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Area-averaged flow velocity Qb/(π a²).
pub fn effective_velocity<T: Real>(cfg: &TestbedConfig<T>) -> T {
    cfg.background_flow / (T::PI() * cfg.tube_radius * cfg.tube_radius)
}

/// Centerline velocity of the parabolic profile, twice the mean.
pub fn max_velocity<T: Real>(cfg: &TestbedConfig<T>) -> T {
    lit::<T>(2.0) * effective_velocity(cfg)
}

/// Distance-dependent amplitude scale c_d = χ_ref·Vi/(π a² d).
pub fn scale_factor<T: Real>(cfg: &TestbedConfig<T>, distance: T) -> Result<T> {
    if !(distance > T::zero()) {
        return Err(Error::arg(format!("distance must be positive, got {distance}")));
    }
    Ok(cfg.chi_ref * cfg.injection_volume
        / (T::PI() * cfg.tube_radius * cfg.tube_radius * distance))
}

/// Time the injection pump needs to deliver one dose, Vi/Qp.
pub fn injection_duration<T: Real>(cfg: &TestbedConfig<T>) -> Result<T> {
    if cfg.injection_flow == T::zero() {
        return Err(Error::arg("injection flow rate is zero"));
    }
    Ok(cfg.injection_volume / cfg.injection_flow)
}

/// Depth reached by the injected stream from the top of the tube,
/// 2a·Qp/(Qp+Qb).
pub fn injection_depth<T: Real>(cfg: &TestbedConfig<T>) -> Result<T> {
    let total = cfg.injection_flow + cfg.background_flow;
    if total == T::zero() {
        return Err(Error::arg("total flow rate is zero"));
    }
    Ok(lit::<T>(2.0) * cfg.tube_radius * cfg.injection_flow / total)
}

/// Per-distance settings of the two reference experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceProfile {
    /// Transmitter–receiver distance (m).
    pub distance: f64,
    /// CIR memory length in symbols.
    pub memory: usize,
    /// Training length for the model-based estimator.
    pub training_model: usize,
    /// Training length for the sample-based estimator.
    pub training_samples: usize,
    /// Pulse spacing of the isolated-pulse experiment (s).
    pub pulse_period: f64,
    /// Reference (α, β, γ) of the measured CIR, used as synthetic ground truth.
    pub reference_fit: [f64; 3],
}

/// Reference settings for d = 5, 10, 20 and 40 cm.
pub const DISTANCE_PROFILES: [DistanceProfile; 4] = [
    DistanceProfile {
        distance: 0.05,
        memory: 10,
        training_model: 10,
        training_samples: 50,
        pulse_period: 20.0,
        reference_fit: [3.41, 3.28, 0.69],
    },
    DistanceProfile {
        distance: 0.10,
        memory: 15,
        training_model: 15,
        training_samples: 75,
        pulse_period: 40.0,
        reference_fit: [3.59, 3.65, 0.81],
    },
    DistanceProfile {
        distance: 0.20,
        memory: 20,
        training_model: 20,
        training_samples: 100,
        pulse_period: 60.0,
        reference_fit: [3.70, 3.83, 0.80],
    },
    DistanceProfile {
        distance: 0.40,
        memory: 20,
        training_model: 20,
        training_samples: 100,
        pulse_period: 60.0,
        reference_fit: [3.13, 3.47, 0.81],
    },
];

/// Profile of the reference distance closest to `distance` (m).
pub fn profile_for(distance: f64) -> DistanceProfile {
    *DISTANCE_PROFILES
        .iter()
        .min_by(|a, b| {
            (a.distance - distance)
                .abs()
                .total_cmp(&(b.distance - distance).abs())
        })
        .expect("non-empty profile table")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn effective_velocity_matches_testbed() {
        let cfg = TestbedConfig::<f64>::default();
        let u = effective_velocity(&cfg);
        assert!((u * 1e3 - 47.2).abs() < 0.1, "{u}");
        let doubled = TestbedConfig {
            background_flow: 2.0 * cfg.background_flow,
            ..cfg
        };
        assert_relative_eq!(effective_velocity(&doubled), 2.0 * u, max_relative = 1e-15);
        let wide = TestbedConfig {
            tube_radius: 2.0 * cfg.tube_radius,
            ..cfg
        };
        assert_relative_eq!(effective_velocity(&wide), u / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn max_velocity_is_twice_mean() {
        let cfg = TestbedConfig::<f64>::default();
        let u0 = max_velocity(&cfg);
        assert!((u0 * 1e3 - 94.3).abs() < 0.2);
        assert_eq!(u0 / effective_velocity(&cfg), 2.0);
        let still = TestbedConfig {
            background_flow: 0.0,
            ..cfg
        };
        assert_eq!(max_velocity(&still), 0.0);
    }

    #[test]
    fn scale_factor_values() {
        let cfg = TestbedConfig::<f64>::default();
        let c = scale_factor(&cfg, 0.1).unwrap();
        assert!((c - 2.94e-4).abs() < 1e-6, "{c}");
        assert_relative_eq!(scale_factor(&cfg, 0.2).unwrap(), c / 2.0, max_relative = 1e-15);
        let empty = TestbedConfig {
            injection_volume: 0.0,
            ..cfg
        };
        assert_eq!(scale_factor(&empty, 0.1).unwrap(), 0.0);
        assert!(scale_factor(&cfg, 0.0).is_err());
        assert!(scale_factor(&cfg, -1.0).is_err());
    }

    #[test]
    fn injection_duration_values() {
        let cfg = TestbedConfig::<f64>::default();
        let t = injection_duration(&cfg).unwrap();
        assert!((t - 0.197).abs() < 1e-3, "{t}");
        let half = TestbedConfig {
            injection_volume: cfg.injection_volume / 2.0,
            ..cfg
        };
        assert_relative_eq!(injection_duration(&half).unwrap(), t / 2.0, max_relative = 1e-15);
        let fast = TestbedConfig {
            injection_flow: 2.0 * cfg.injection_flow,
            ..cfg
        };
        assert_relative_eq!(injection_duration(&fast).unwrap(), t / 2.0, max_relative = 1e-15);
        let stopped = TestbedConfig {
            injection_flow: 0.0,
            ..cfg
        };
        assert!(injection_duration(&stopped).is_err());
    }

    #[test]
    fn injection_depth_values() {
        let cfg = TestbedConfig::<f64>::default();
        let depth = injection_depth(&cfg).unwrap();
        assert!((depth * 1e3 - 0.77).abs() < 0.01, "{depth}");
        let balanced = TestbedConfig {
            injection_flow: cfg.background_flow,
            ..cfg
        };
        assert_relative_eq!(
            injection_depth(&balanced).unwrap(),
            cfg.tube_radius,
            max_relative = 1e-15
        );
        let trickle = TestbedConfig {
            injection_flow: 0.0,
            ..cfg
        };
        assert_eq!(injection_depth(&trickle).unwrap(), 0.0);
        let none = TestbedConfig {
            injection_flow: 0.0,
            background_flow: 0.0,
            ..cfg
        };
        assert!(injection_depth(&none).is_err());
    }

    #[test]
    fn default_matches_table_values() {
        let cfg = TestbedConfig::<f64>::default();
        assert_relative_eq!(cfg.tube_radius, 0.75e-3, max_relative = 1e-12);
        assert_relative_eq!(units::to_ml_per_min(cfg.background_flow), 5.0, max_relative = 1e-12);
        assert_relative_eq!(units::to_ml_per_min(cfg.injection_flow), 5.26, max_relative = 1e-12);
        assert_relative_eq!(cfg.injection_volume, 17.3e-9, max_relative = 1e-12);
        assert_eq!(cfg.chi_ref, 3e-3);
        assert_eq!(cfg.symbol_duration, 1.0);
        assert_eq!(cfg.sample_interval, 0.1);
        assert_relative_eq!(cfg.particle_radius, 24.5e-9, max_relative = 1e-12);
        assert_eq!(cfg.particle_mass, 2.5e-19);
        assert_eq!(cfg.oversampling(), 10);
        cfg.validate().unwrap();
        TestbedConfig::<f32>::default().validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let cfg = TestbedConfig::<f64> {
            sample_interval: 0.3,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = TestbedConfig::<f64> {
            tube_radius: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TestbedConfig::<f64> {
            distance: f64::NAN,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_partial_config_falls_back_to_defaults() {
        let cfg = TestbedConfig::<f64>::from_json_str(r#"{"d": 0.4, "Qb": 1e-7}"#).unwrap();
        assert_eq!(cfg.distance, 0.4);
        assert_eq!(cfg.background_flow, 1e-7);
        assert_eq!(cfg.tube_radius, TestbedConfig::<f64>::default().tube_radius);
        assert!(TestbedConfig::<f64>::from_json_str(r#"{"bogus": 1}"#).is_err());
        assert!(TestbedConfig::<f64>::from_json_str(r#"{"dt": 0.0}"#).is_err());
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"Qb\""));
        assert_eq!(TestbedConfig::<f64>::from_json_str(&text).unwrap(), cfg);
    }

    #[test]
    fn profiles_pick_nearest_distance() {
        assert_eq!(profile_for(0.05).memory, 10);
        assert_eq!(profile_for(0.11).memory, 15);
        assert_eq!(profile_for(0.4).training_samples, 100);
        let periods: Vec<f64> = DISTANCE_PROFILES.iter().map(|p| p.pulse_period).collect();
        assert_eq!(periods, [20.0, 40.0, 60.0, 60.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn velocity_and_scale_homogeneity(k in 0.1f64..10.0) {
                let cfg = TestbedConfig::<f64>::default();
                let u = effective_velocity(&cfg);
                let c = scale_factor(&cfg, cfg.distance).unwrap();
                let q = TestbedConfig { background_flow: k * cfg.background_flow, ..cfg };
                prop_assert!((effective_velocity(&q) - k * u).abs() <= 1e-12 * k * u);
                prop_assert!((max_velocity(&q) - 2.0 * k * u).abs() <= 1e-12 * k * u);
                let r = TestbedConfig { tube_radius: k * cfg.tube_radius, ..cfg };
                prop_assert!((effective_velocity(&r) - u / (k * k)).abs() <= 1e-12 * u / (k * k));
                prop_assert!((scale_factor(&r, cfg.distance).unwrap() - c / (k * k)).abs() <= 1e-12 * c / (k * k));
                let v = TestbedConfig { injection_volume: k * cfg.injection_volume, chi_ref: k * cfg.chi_ref, ..cfg };
                prop_assert!((scale_factor(&v, cfg.distance).unwrap() - k * k * c).abs() <= 1e-12 * k * k * c);
                prop_assert!((scale_factor(&cfg, k * cfg.distance).unwrap() - c / k).abs() <= 1e-12 * c / k);
            }

            #[test]
            fn injection_depth_within_tube(qp in 0.0f64..1e-5, qb in 0.0f64..1e-5) {
                prop_assume!(qp + qb > 0.0);
                let cfg = TestbedConfig::<f64> { injection_flow: qp, background_flow: qb, ..Default::default() };
                let depth = injection_depth(&cfg).unwrap();
                prop_assert!(depth >= 0.0 && depth <= 2.0 * cfg.tube_radius * (1.0 + 1e-15));
            }
        }
    }
}
