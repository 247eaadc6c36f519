//! Channel estimation from the training prefix of a synchronized record.
//!
//! Two estimators share one output type: a parametric fit of the analytic
//! CIR (α, β and a gain γ) and a direct least-squares solve for the N·I
//! sampled taps.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cir::{BetaInit, CirModel};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, lstsq_ridge, Matrix};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::params::TestbedConfig;
use crate::scalar::{count, lit, Real};
use crate::signal::{pam_synthesize_len, RegularSignal, SymbolSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMethod {
    Model,
    Samples,
}

/// Fitted parameters of the analytic CIR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FittedParams<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
}

/// Sampled CIR estimate ĥ of length N·I.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChannelEstimate<T> {
    pub taps: Vec<T>,
    pub method: EstimationMethod,
    /// Memory N in symbols.
    pub memory: usize,
    /// Samples per symbol I.
    pub oversampling: usize,
    pub dt: T,
    /// Present for `method = model`.
    pub fitted: Option<FittedParams<T>>,
    /// Training sum of squared errors.
    pub residual: T,
}

impl<T: Real> ChannelEstimate<T> {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 || self.oversampling == 0 {
            return Err(Error::arg("memory and oversampling must be >= 1"));
        }
        if self.taps.len() != self.memory * self.oversampling {
            return Err(Error::arg(format!(
                "estimate has {} taps, expected N·I = {}",
                self.taps.len(),
                self.memory * self.oversampling
            )));
        }
        if !(self.dt > T::zero()) {
            return Err(Error::arg("estimate sampling interval must be positive"));
        }
        if self.method == EstimationMethod::Model && self.fitted.is_none() {
            return Err(Error::arg("model estimate lacks fitted parameters"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::numeric(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let est: Self = serde_json::from_str(s).map_err(|e| Error::arg(e.to_string()))?;
        est.validate()?;
        Ok(est)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// h[i] = γ·h_lim(i·dt + t0) for i in 0..n, the tap layout of a model estimate.
pub fn model_taps<T: Real>(
    cfg: &TestbedConfig<T>,
    distance: T,
    init: BetaInit<T>,
    gamma: T,
    dt: T,
    n: usize,
) -> Result<Vec<T>> {
    let model = CirModel::new(*cfg, distance, init, T::zero())?;
    let t0 = model.t_start();
    Ok((0..n)
        .map(|i| gamma * model.cir_limit(count::<T>(i) * dt + t0))
        .collect())
}

/// Convolution map of the training symbols: entry (r, c) is 1 iff
/// c = r − k·I for some k with a[k] = 1.
pub fn build_design<T: Real>(bits: &[u8], memory: usize, oversampling: usize, rows: usize) -> Matrix<T> {
    let cols = memory * oversampling;
    let mut a = Matrix::zeros(rows, cols);
    for (k, _) in bits.iter().enumerate().filter(|(_, &b)| b == 1) {
        let shift = k * oversampling;
        for c in 0..cols {
            let r = shift + c;
            if r >= rows {
                break;
            }
            a.set(r, c, T::one());
        }
    }
    a
}

fn training_window<'a, T: Real>(
    rt: &'a RegularSignal<T>,
    at: &'a SymbolSequence,
    oversampling: usize,
) -> Result<(&'a [u8], &'a [T])> {
    let bits = at.training();
    if bits.is_empty() {
        return Err(Error::arg("training sequence is empty"));
    }
    if oversampling == 0 {
        return Err(Error::arg("oversampling must be >= 1"));
    }
    let rows = (bits.len() * oversampling).min(rt.len());
    if rows == 0 {
        return Err(Error::arg("training record is empty"));
    }
    Ok((bits, &rt.values[..rows]))
}

fn sse<T: Real>(r: &[T], s: &[T]) -> T {
    r.iter().zip(s).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

/// Sample-based estimate: least squares over all N·I taps. `ridge = 0`
/// yields the minimum-norm solution when the design is rank deficient.
pub fn fit_samples<T: Real>(
    rt: &RegularSignal<T>,
    at: &SymbolSequence,
    memory: usize,
    oversampling: usize,
    ridge: T,
) -> Result<ChannelEstimate<T>> {
    if memory == 0 {
        return Err(Error::arg("memory must be >= 1"));
    }
    if !(ridge >= T::zero()) {
        return Err(Error::arg(format!("ridge must be >= 0, got {ridge}")));
    }
    let (bits, r) = training_window(rt, at, oversampling)?;
    let a = build_design(bits, memory, oversampling, r.len());
    let sol = if ridge > T::zero() {
        lstsq_ridge(&a, r, ridge)?
    } else {
        lstsq(&a, r)?
    };
    let residual = sse(r, &a.mul_vec(&sol.x));
    Ok(ChannelEstimate {
        taps: sol.x,
        method: EstimationMethod::Samples,
        memory,
        oversampling,
        dt: rt.dt,
        fitted: None,
        residual,
    })
}

/// Multi-start settings of the model fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFitOptions<T> {
    /// Start points, crossed over α and β.
    pub start_grid: Vec<T>,
    pub lower: T,
    pub upper: T,
    pub step: T,
    pub xtol: T,
    pub max_evals: usize,
}

impl<T: Real> Default for ModelFitOptions<T> {
    fn default() -> Self {
        Self {
            start_grid: [1.0, 2.0, 3.0, 4.0, 6.0].iter().map(|&v| lit(v)).collect(),
            lower: T::one(),
            upper: lit(10.0),
            step: lit(0.5),
            xtol: lit(1e-8),
            max_evals: 5000,
        }
    }
}

/// Training objective of the model fit with γ profiled out.
#[derive(Debug, Clone)]
pub struct ModelObjective<'a, T> {
    cfg: TestbedConfig<T>,
    distance: T,
    bits: &'a [u8],
    r: &'a [T],
    rr: T,
    memory: usize,
    oversampling: usize,
    dt: T,
}

impl<'a, T: Real> ModelObjective<'a, T> {
    pub fn new(
        rt: &'a RegularSignal<T>,
        at: &'a SymbolSequence,
        cfg: &TestbedConfig<T>,
        distance: T,
        memory: usize,
        oversampling: usize,
    ) -> Result<Self> {
        if memory == 0 {
            return Err(Error::arg("memory must be >= 1"));
        }
        let (bits, r) = training_window(rt, at, oversampling)?;
        if bits.iter().all(|&b| b == 0) {
            return Err(Error::NoSignalEnergy);
        }
        CirModel::new(*cfg, distance, BetaInit::flow_profile(), T::zero())?;
        Ok(Self {
            cfg: *cfg,
            distance,
            bits,
            r,
            rr: r.iter().map(|&v| v * v).sum(),
            memory,
            oversampling,
            dt: rt.dt,
        })
    }

    /// Unit-gain model taps for (α, β).
    pub fn taps(&self, alpha: T, beta: T) -> Result<Vec<T>> {
        model_taps(
            &self.cfg,
            self.distance,
            BetaInit::new(alpha, beta)?,
            T::one(),
            self.dt,
            self.memory * self.oversampling,
        )
    }

    /// (min over γ ≥ 0 of ‖r − γ·s(α, β)‖², optimal γ).
    pub fn eval(&self, alpha: T, beta: T) -> Result<(T, T)> {
        let h = self.taps(alpha, beta)?;
        let s = pam_synthesize_len(self.bits, &h, self.oversampling, self.r.len());
        let ss: T = s.iter().map(|&v| v * v).sum();
        if !(ss > T::zero()) {
            return Ok((self.rr, T::zero()));
        }
        let rs: T = self.r.iter().zip(&s).map(|(&a, &b)| a * b).sum();
        let gamma = (rs / ss).max(T::zero());
        // direct evaluation keeps the value ≥ 0 and exact at γ = 0
        let value = sse(self.r, &s.iter().map(|&v| gamma * v).collect::<Vec<_>>());
        Ok((value, gamma))
    }
}

/// Model-based estimate: bounded multi-start simplex search over (α, β)
/// with γ eliminated in closed form.
pub fn fit_model<T: Real>(
    rt: &RegularSignal<T>,
    at: &SymbolSequence,
    cfg: &TestbedConfig<T>,
    distance: T,
    memory: usize,
    oversampling: usize,
    opts: &ModelFitOptions<T>,
) -> Result<ChannelEstimate<T>> {
    let objective = ModelObjective::new(rt, at, cfg, distance, memory, oversampling)?;
    if opts.start_grid.is_empty() {
        return Err(Error::arg("model fit needs at least one start point"));
    }
    let nm = NelderMeadOptions {
        step: vec![opts.step; 2],
        lower: vec![opts.lower; 2],
        upper: vec![opts.upper; 2],
        xtol: opts.xtol,
        max_evals: opts.max_evals,
    };
    let starts: Vec<[T; 2]> = opts
        .start_grid
        .iter()
        .flat_map(|&a| opts.start_grid.iter().map(move |&b| [a, b]))
        .collect();
    let f = |x: &[T]| {
        objective
            .eval(x[0], x[1])
            .map(|(v, _)| v)
            .unwrap_or(T::infinity())
    };
    let results: Vec<_> = starts
        .par_iter()
        .map(|x0| nelder_mead(f, x0, &nm))
        .collect();
    let best = results
        .iter()
        .filter(|m| m.converged && m.value.is_finite())
        .min_by(|p, q| {
            p.value
                .partial_cmp(&q.value)
                .unwrap()
                .then(p.x[0].partial_cmp(&q.x[0]).unwrap())
                .then(p.x[1].partial_cmp(&q.x[1]).unwrap())
        })
        .ok_or_else(|| {
            Error::numeric(format!(
                "model fit did not converge to xtol {} within {} evaluations from any start",
                opts.xtol, opts.max_evals
            ))
        })?;
    let (alpha, beta) = (best.x[0], best.x[1]);
    let (residual, gamma) = objective.eval(alpha, beta)?;
    let taps = model_taps(
        cfg,
        distance,
        BetaInit::new(alpha, beta)?,
        gamma,
        rt.dt,
        memory * oversampling,
    )?;
    Ok(ChannelEstimate {
        taps,
        method: EstimationMethod::Model,
        memory,
        oversampling,
        dt: rt.dt,
        fitted: Some(FittedParams { alpha, beta, gamma }),
        residual,
    })
}
