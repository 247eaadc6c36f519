//! Channel impulse response of the flow-driven link.
//!
//! Particles released at z = −d with a Beta-distributed normalized squared
//! radius s = ρ²/a² are carried by the parabolic profile u0·(1 − s). A
//! transparent receiver averages concentration over a window of length l_z
//! centred at z = 0. The closed forms below cover a finite window and its
//! l_z → 0 limit; [`CirModel::numeric_oracle`] integrates the underlying
//! model directly for cross-validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{max_velocity, scale_factor, TestbedConfig};
use crate::quadrature::{integrate, integrate_2d, GridSchedule};
use crate::scalar::{lit, Real};
use crate::special;

/// Exponent of the power map that smooths the s = 0 endpoint of the oracle
/// integrand.
const ENDPOINT_GRADING: f64 = 4.0;
/// Gaussian tails beyond this many widths are dropped by the smoothed oracle.
const GAUSS_SUPPORT: f64 = 9.0;
const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// B(α, β) for α, β > 0.
pub fn beta_norm<T: Real>(alpha: T, beta: T) -> Result<T> {
    if !(alpha > T::zero() && beta > T::zero()) {
        return Err(Error::arg(format!("Beta parameters must be positive, got ({alpha}, {beta})")));
    }
    Ok(special::beta(alpha, beta))
}

/// Beta(α, β) distribution of s = ρ²/a² right after injection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BetaInit<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> BetaInit<T> {
    /// Requires α ≥ 1 and β ≥ 1, the range where the density is unimodal.
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        if !(alpha >= T::one() && beta >= T::one() && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::arg(format!(
                "Beta initial distribution needs alpha, beta >= 1, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Particles spread uniformly over the cross-section.
    pub fn uniform() -> Self {
        Self {
            alpha: T::one(),
            beta: T::one(),
        }
    }

    /// Particle density proportional to the flow profile.
    pub fn flow_profile() -> Self {
        Self {
            alpha: T::one(),
            beta: lit(2.0),
        }
    }

    pub fn norm(&self) -> T {
        special::beta(self.alpha, self.beta)
    }

    /// f_s(s); zero outside [0, 1].
    pub fn density(&self, s: T) -> T {
        if !(s >= T::zero() && s <= T::one()) {
            return T::zero();
        }
        s.powf(self.alpha - T::one()) * (T::one() - s).powf(self.beta - T::one()) / self.norm()
    }

    /// Radial density f_ρ(ρ) on [0, a] (per metre).
    pub fn radial_density(&self, rho: T, tube_radius: T) -> T {
        if !(rho >= T::zero() && rho <= tube_radius) {
            return T::zero();
        }
        let r = rho / tube_radius;
        lit::<T>(2.0) / (tube_radius * self.norm())
            * r.powf(lit::<T>(2.0) * self.alpha - T::one())
            * (T::one() - r * r).powf(self.beta - T::one())
    }

    /// F_s(s) = I_s(α, β), with `s` clamped to [0, 1].
    pub fn cdf(&self, s: T) -> T {
        special::inc_beta(self.alpha, self.beta, s)
    }

    /// 1 − F_s(1 − x) = I_x(β, α), evaluated without cancellation for small x.
    pub fn tail(&self, x: T) -> T {
        special::inc_beta(self.beta, self.alpha, x)
    }
}

/// Which integral the numerical oracle evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMode<T> {
    /// One-dimensional integral over the receiver window after sifting out
    /// the delta in s.
    Sifted,
    /// Two-dimensional (s, z) integral with the axial delta replaced by a
    /// Gaussian of the given standard deviation (m).
    Smoothed { width: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions<T> {
    pub mode: OracleMode<T>,
    pub grid: GridSchedule<T>,
}

impl<T: Real> OracleOptions<T> {
    pub fn sifted() -> Self {
        Self {
            mode: OracleMode::Sifted,
            grid: GridSchedule::default(),
        }
    }

    pub fn smoothed(width: T) -> Self {
        Self {
            mode: OracleMode::Smoothed { width },
            grid: GridSchedule {
                initial_panels: 16,
                max_panels: 512,
                rel_tol: lit(1e-7),
                abs_tol: T::min_positive_value(),
            },
        }
    }
}

/// Analytic CIR for one transmitter–receiver distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CirModel<T> {
    pub cfg: TestbedConfig<T>,
    /// Transmitter–receiver distance (m).
    pub distance: T,
    pub init: BetaInit<T>,
    /// Receiver window length l_z (m); zero selects the limit form.
    pub window: T,
}

impl<T: Real> CirModel<T> {
    pub fn new(cfg: TestbedConfig<T>, distance: T, init: BetaInit<T>, window: T) -> Result<Self> {
        cfg.validate()?;
        if !(distance > T::zero() && distance.is_finite()) {
            return Err(Error::arg(format!("distance must be positive, got {distance}")));
        }
        if !(window >= T::zero() && window.is_finite()) {
            return Err(Error::arg(format!("window length must be >= 0, got {window}")));
        }
        if window > T::zero() && !(distance - window / lit(2.0) > T::zero()) {
            return Err(Error::arg("receiver window reaches the transmitter (d - lz/2 <= 0)"));
        }
        BetaInit::new(init.alpha, init.beta)?;
        Ok(Self {
            cfg,
            distance,
            init,
            window,
        })
    }

    /// Limit-form model (l_z = 0) at the configured distance.
    pub fn limit(cfg: TestbedConfig<T>, init: BetaInit<T>) -> Result<Self> {
        Self::new(cfg, cfg.distance, init, T::zero())
    }

    pub fn with_window(self, window: T) -> Result<Self> {
        Self::new(self.cfg, self.distance, self.init, window)
    }

    pub fn with_distance(self, distance: T) -> Result<Self> {
        Self::new(self.cfg, distance, self.init, self.window)
    }

    pub fn with_init(self, init: BetaInit<T>) -> Result<Self> {
        Self::new(self.cfg, self.distance, init, self.window)
    }

    /// Centerline velocity u0.
    pub fn u0(&self) -> T {
        max_velocity(&self.cfg)
    }

    /// Amplitude scale c_d at this distance.
    pub fn scale(&self) -> T {
        scale_factor(&self.cfg, self.distance).expect("distance validated at construction")
    }

    /// Arrival time of the centreline particles, t0 = d/u0.
    pub fn t_start(&self) -> T {
        self.distance / self.u0()
    }

    /// Earliest time with a nonzero windowed response, (d − l_z/2)/u0.
    pub fn onset(&self) -> T {
        (self.distance - self.window / lit(2.0)) / self.u0()
    }

    /// Peak time t0·(1 + (α−1)/β); equals t0 when α = 1 (jump at arrival).
    pub fn t_peak(&self) -> T {
        self.t_start() * (T::one() + (self.init.alpha - T::one()) / self.init.beta)
    }

    /// Peak height of the limit form, using 0⁰ = 1 at α = 1.
    pub fn h_peak(&self) -> T {
        let a = self.init.alpha;
        let b = self.init.beta;
        let am1 = a - T::one();
        let n = a + b - T::one();
        self.scale() / self.init.norm() * am1.powf(am1) * b.powf(b) / n.powf(n)
    }

    /// Limit-form CIR (l_z → 0).
    pub fn cir_limit(&self, t: T) -> T {
        let t0 = self.t_start();
        if !(t >= t0) {
            return T::zero();
        }
        let x = (self.distance / (self.u0() * t)).min(T::one());
        self.scale() / self.init.norm()
            * (T::one() - x).powf(self.init.alpha - T::one())
            * x.powf(self.init.beta)
    }

    /// Finite-window CIR. Requires `window > 0`.
    pub fn cir_windowed(&self, t: T) -> T {
        debug_assert!(self.window > T::zero());
        if !(t > T::zero()) {
            return T::zero();
        }
        let half = self.window / lit(2.0);
        let ut = self.u0() * t;
        // F_s(1 − x_near) − F_s(1 − x_far) written through the upper tail so
        // the late-time response keeps its relative accuracy.
        let near = self.init.tail((self.distance - half) / ut);
        let far = self.init.tail((self.distance + half) / ut);
        (self.scale() * self.distance / self.window * (far - near)).max(T::zero())
    }

    /// Windowed form when `window > 0`, limit form otherwise.
    pub fn eval(&self, t: T) -> T {
        if self.window > T::zero() {
            self.cir_windowed(t)
        } else {
            self.cir_limit(t)
        }
    }

    /// h(t_first + i·dt) for i in 0..n.
    pub fn sample(&self, t_first: T, dt: T, n: usize) -> Vec<T> {
        (0..n)
            .map(|i| self.eval(t_first + dt * lit(i as f64)))
            .collect()
    }

    /// Numerical evaluation of the receiver integral, independent of the
    /// incomplete beta function. Requires `window > 0`.
    pub fn numeric_oracle(&self, t: T, opts: &OracleOptions<T>) -> Result<T> {
        if !(self.window > T::zero()) {
            return Err(Error::arg("numeric oracle needs a positive window length"));
        }
        if !(t > T::zero()) {
            return Ok(T::zero());
        }
        match opts.mode {
            OracleMode::Sifted => self.oracle_sifted(t, &opts.grid),
            OracleMode::Smoothed { width } => self.oracle_smoothed(t, width, &opts.grid),
        }
    }

    // h(t) = c_d·d/(l_z·u0·t) ∫ rect(z/l_z) f_s(1 − (z+d)/(u0 t)) dz
    fn oracle_sifted(&self, t: T, grid: &GridSchedule<T>) -> Result<T> {
        let half = self.window / lit(2.0);
        let ut = self.u0() * t;
        let lower = -half;
        // s reaches 0 at z = u0·t − d; beyond that no particle has arrived.
        let upper = half.min(ut - self.distance);
        if !(upper > lower) {
            return Ok(T::zero());
        }
        let span = upper - lower;
        let q = lit::<T>(ENDPOINT_GRADING);
        // z = upper − span·y^q removes the s^(α−1) endpoint kink.
        let f = |y: T| {
            let z = upper - span * y.powf(q);
            let jac = span * q * y.powf(q - T::one());
            self.init.density(T::one() - (z + self.distance) / ut) * jac
        };
        let integral = integrate(&f, T::zero(), T::one(), grid)?;
        Ok(self.scale() * self.distance / (self.window * ut) * integral)
    }

    fn oracle_smoothed(&self, t: T, width: T, grid: &GridSchedule<T>) -> Result<T> {
        if !(width > T::zero()) {
            return Err(Error::arg("smoothing width must be positive"));
        }
        let half = self.window / lit(2.0);
        let ut = self.u0() * t;
        let reach = half + width * lit(GAUSS_SUPPORT);
        // Only s with centre z_c(s) = u0(1−s)t − d near the window contribute.
        let s_lo = (T::one() - (self.distance + reach) / ut).max(T::zero());
        let s_hi = (T::one() - (self.distance - reach) / ut).min(T::one());
        if !(s_hi > s_lo) {
            return Ok(T::zero());
        }
        let norm = T::one() / (width * (lit::<T>(2.0) * T::PI()).sqrt());
        let f = |s: T, z: T| {
            let centre = ut * (T::one() - s) - self.distance;
            let u = (z - centre) / width;
            self.init.density(s) * norm * (-u * u / lit(2.0)).exp()
        };
        let integral = integrate_2d(&f, (s_lo, s_hi), (-half, half), grid)?;
        Ok(self.scale() * self.distance / self.window * integral)
    }
}

/// Locates the CIR maximum on [onset, t_end] by a coarse grid of `grid`
/// points followed by golden-section refinement to `tol`.
pub fn locate_peak<T: Real>(model: &CirModel<T>, t_end: T, grid: usize, tol: T) -> (T, T) {
    let start = model.onset();
    let grid = grid.max(3);
    let step = (t_end - start) / lit((grid - 1) as f64);
    let mut best = 0;
    let mut best_h = model.eval(start);
    for i in 1..grid {
        let h = model.eval(start + step * lit(i as f64));
        if h > best_h {
            best = i;
            best_h = h;
        }
    }
    let mut lo = start + step * lit(best.saturating_sub(1) as f64);
    let mut hi = start + step * lit((best + 1).min(grid - 1) as f64);
    let g = lit::<T>(GOLDEN);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = model.eval(x1);
    let mut f2 = model.eval(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = model.eval(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = model.eval(x1);
        }
    }
    let t = (lo + hi) / lit(2.0);
    let candidates = [(start, model.eval(start)), (t, model.eval(t))];
    if candidates[0].1 > candidates[1].1 {
        candidates[0]
    } else {
        candidates[1]
    }
}
