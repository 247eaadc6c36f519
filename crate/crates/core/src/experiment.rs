//! End-to-end runs of the isolated-pulse and data-transmission experiments
//! on synthetic channels, and their on-disk reports.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cir::{BetaInit, CirModel};
use crate::detection::{default_increase_params, increase_detect, viterbi_detect, DetectionResult};
use crate::error::{Error, Result};
use crate::estimation::{fit_model, fit_samples, ChannelEstimate, EstimationMethod, FittedParams, ModelFitOptions};
use crate::params::{profile_for, scale_factor, TestbedConfig, DISTANCE_PROFILES};
use crate::signal::{
    pam_synthesize_len, resample_linear, rmse, simulate_rx, synchronize, write_regular_csv,
    RegularSignal, RxOptions, SymbolSequence,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const PULSE_COUNT: usize = 15;
pub const DATA_SYMBOLS: usize = 400;
pub const SCORED_SYMBOLS: usize = 300;
/// Quiet samples recorded before the first injection.
pub const LEAD_SAMPLES: usize = 50;
/// A pulse period is too short when the CIR one period after arrival still
/// exceeds this fraction of its peak.
pub const OVERLAP_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PulseTrain,
    DataTransmission,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorChoice {
    Viterbi,
    Increase,
    Both,
}

impl DetectorChoice {
    fn viterbi(self) -> bool {
        matches!(self, Self::Viterbi | Self::Both)
    }

    fn increase(self) -> bool {
        matches!(self, Self::Increase | Self::Both)
    }
}

/// Complete, serializable description of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Transmitter–receiver distances (m).
    pub distances: Vec<f64>,
    /// Symbol or pulse period (s); `None` selects 1 s for data transmission
    /// and the per-distance pulse period otherwise.
    pub symbol_duration: Option<f64>,
    /// Symbols (data transmission) or pulses (pulse train); `None` selects 400 or 15.
    pub symbols: Option<usize>,
    /// Symbols at the end of the sequence that are scored.
    pub scored: usize,
    pub seed: u64,
    /// Noise standard deviation in units of c_d.
    pub noise_sigma: f64,
    /// Sampling-instant jitter (s).
    pub jitter_sigma: f64,
    pub estimator: EstimationMethod,
    pub detector: DetectorChoice,
    /// K_t per distance; `None` selects the reference schedule of the estimator.
    pub training: Option<Vec<usize>>,
    /// N per distance; `None` selects the reference memory lengths.
    pub memory: Option<Vec<usize>>,
    /// Ground-truth (α, β, γ) per distance; `None` selects the reference fits.
    pub truth: Option<Vec<[f64; 3]>>,
    /// Ridge weight of the sample estimator.
    pub ridge: f64,
    /// Testbed parameters; the distance field is overridden per run.
    pub testbed: TestbedConfig<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::DataTransmission,
            distances: DISTANCE_PROFILES.iter().map(|p| p.distance).collect(),
            symbol_duration: None,
            symbols: None,
            scored: SCORED_SYMBOLS,
            seed: 1,
            noise_sigma: 0.0,
            jitter_sigma: 0.0,
            estimator: EstimationMethod::Samples,
            detector: DetectorChoice::Both,
            training: None,
            memory: None,
            truth: None,
            ridge: 0.0,
            testbed: TestbedConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn pulse_train() -> Self {
        Self {
            kind: ExperimentKind::PulseTrain,
            ..Self::default()
        }
    }

    pub fn data_transmission() -> Self {
        Self::default()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s).map_err(|e| Error::config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.testbed.validate()?;
        if self.distances.is_empty() {
            return Err(Error::config("no distances given"));
        }
        if let Some(d) = self.distances.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::config(format!("distance must be positive, got {d}")));
        }
        let per_distance = |name: &str, len: Option<usize>| match len {
            Some(n) if n != self.distances.len() => Err(Error::config(format!(
                "{name} has {n} entries for {} distances",
                self.distances.len()
            ))),
            _ => Ok(()),
        };
        per_distance("training", self.training.as_ref().map(Vec::len))?;
        per_distance("memory", self.memory.as_ref().map(Vec::len))?;
        per_distance("truth", self.truth.as_ref().map(Vec::len))?;
        if self.symbols == Some(0) {
            return Err(Error::config("symbol count must be >= 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.jitter_sigma >= 0.0 && self.ridge >= 0.0) {
            return Err(Error::config("noise, jitter and ridge must be >= 0"));
        }
        if let Some(t) = self.symbol_duration {
            self.testbed.with_symbol_duration(t).validate()?;
        }
        Ok(())
    }

    fn symbol_count(&self) -> usize {
        self.symbols.unwrap_or(match self.kind {
            ExperimentKind::PulseTrain => PULSE_COUNT,
            ExperimentKind::DataTransmission => DATA_SYMBOLS,
        })
    }

    fn truth_at(&self, idx: usize) -> [f64; 3] {
        match &self.truth {
            Some(t) => t[idx],
            None => profile_for(self.distances[idx]).reference_fit,
        }
    }

    fn memory_at(&self, idx: usize) -> usize {
        match &self.memory {
            Some(m) => m[idx],
            None => profile_for(self.distances[idx]).memory,
        }
    }

    fn training_at(&self, idx: usize) -> usize {
        match &self.training {
            Some(t) => t[idx],
            None => {
                let p = profile_for(self.distances[idx]);
                match self.estimator {
                    EstimationMethod::Model => p.training_model,
                    EstimationMethod::Samples => p.training_samples,
                }
            }
        }
    }

    /// Noise and jitter stream of distance `idx`, derived from the master seed.
    fn rx_seed(&self, idx: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(idx as u64 + 1)
    }
}

fn params_of(p: [f64; 3]) -> FittedParams<f64> {
    FittedParams {
        alpha: p[0],
        beta: p[1],
        gamma: p[2],
    }
}

/// Per-distance outcome of the isolated-pulse experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTrainResult {
    pub distance: f64,
    pub period: f64,
    pub pulses: usize,
    pub truth: FittedParams<f64>,
    pub fitted: FittedParams<f64>,
    /// Training SSE of the fit to the averaged pulse.
    pub residual: f64,
    /// Largest deviation of any segmented pulse from the average, in units of c_d.
    pub segment_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorOutcome {
    /// Decisions for all symbols, training symbols copied from the truth.
    pub decisions: String,
    /// Errors over the scored window.
    pub errors: usize,
}

/// Per-distance outcome of the data-transmission experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTransmissionResult {
    pub distance: f64,
    pub memory: usize,
    pub training: usize,
    pub estimator: EstimationMethod,
    pub truth: FittedParams<f64>,
    pub fitted: Option<FittedParams<f64>>,
    /// Sample index of the synchronized origin in the resampled record.
    pub sync_index: usize,
    /// Reconstruction error over all symbols, normalized by c_d.
    pub rmse: f64,
    pub viterbi: Option<DetectorOutcome>,
    pub increase: Option<DetectorOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    /// Configuration echo.
    pub spec: ExperimentSpec,
    pub pulse_train: Vec<PulseTrainResult>,
    pub data_transmission: Vec<DataTransmissionResult>,
}

impl Report {
    pub fn empty(spec: ExperimentSpec) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            spec,
            pulse_train: Vec::new(),
            data_transmission: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::numeric(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(s).map_err(|e| Error::arg(e.to_string()))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::arg(format!(
                "unsupported report schema {} (expected {REPORT_SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }

    /// Reads `report.json` from an output directory.
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join("report.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }
}

/// Traces and estimates kept alongside a report for [`emit_report`].
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    /// (file stem, trace) pairs written under `signals/`.
    pub signals: Vec<(String, RegularSignal<f64>)>,
    /// (file stem, estimate) pairs written under `estimates/`.
    pub estimates: Vec<(String, ChannelEstimate<f64>)>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub artifacts: Artifacts,
}

/// File-name label of a distance, e.g. `d050mm`.
pub fn distance_label(distance: f64) -> String {
    format!("d{:03}mm", (distance * 1000.0).round() as i64)
}

fn pulse_run(
    spec: &ExperimentSpec,
    idx: usize,
) -> Result<(PulseTrainResult, RegularSignal<f64>, RegularSignal<f64>, ChannelEstimate<f64>)> {
    let distance = spec.distances[idx];
    let period = spec
        .symbol_duration
        .unwrap_or_else(|| profile_for(distance).pulse_period);
    let cfg = spec.testbed.with_distance(distance).with_symbol_duration(period);
    cfg.validate()?;
    let per = cfg.oversampling();
    let dt = cfg.sample_interval;
    let truth = spec.truth_at(idx);
    let model = CirModel::new(cfg, distance, BetaInit::new(truth[0], truth[1])?, 0.0)?;
    let tail = model.cir_limit(model.t_start() + period);
    if tail > OVERLAP_FRACTION * model.h_peak() {
        return Err(Error::config(format!(
            "pulse period {period} s too short at d = {distance} m: the CIR is still at {:.3} of its peak",
            tail / model.h_peak()
        )));
    }

    let pulses = spec.symbol_count();
    let opts = RxOptions {
        noise_sigma: spec.noise_sigma,
        jitter_sigma: spec.jitter_sigma,
        gain: truth[2],
        lead_samples: LEAD_SAMPLES,
        tail_samples: per,
        align_arrival: true,
        support_samples: Some(per),
        seed: spec.rx_seed(idx),
        ..RxOptions::default()
    };
    let rx = simulate_rx(&model, &vec![1; pulses], &opts)?;
    let reg = resample_linear(&rx, dt)?;

    // segments start at the scheduled arrivals, which lie on the sample grid
    let c_d = model.scale();
    let mut segments = Vec::with_capacity(pulses);
    for k in 0..pulses {
        let arrival = (LEAD_SAMPLES + k * per) as f64 * dt;
        let first = ((arrival - reg.start) / dt).round();
        if first < 0.0 || first as usize + per > reg.len() {
            return Err(Error::numeric(format!("pulse {k} falls outside the record")));
        }
        let first = first as usize;
        segments.push(&reg.values[first..first + per]);
    }
    let mean: Vec<f64> = (0..per)
        .map(|i| segments.iter().map(|s| s[i]).sum::<f64>() / pulses as f64)
        .collect();
    let spread = segments
        .iter()
        .flat_map(|s| s.iter().zip(&mean).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
        / c_d;
    let avg = RegularSignal::new(dt, mean)?;
    let single = SymbolSequence::new(vec![1], 1)?;
    let est = fit_model(&avg, &single, &cfg, distance, 1, per, &ModelFitOptions::default())?;
    let fitted = est.fitted.expect("model fit carries parameters");
    Ok((
        PulseTrainResult {
            distance,
            period,
            pulses,
            truth: params_of(truth),
            fitted,
            residual: est.residual,
            segment_spread: spread,
        },
        reg,
        avg,
        est,
    ))
}

/// Isolated-pulse experiment: per distance, simulates well-separated pulses,
/// averages the segmented pulses and fits the analytic CIR.
pub fn run_pulse_train(spec: &ExperimentSpec) -> Result<Outcome> {
    if spec.kind != ExperimentKind::PulseTrain {
        return Err(Error::config("spec kind is not pulse_train"));
    }
    spec.validate()?;
    let runs = (0..spec.distances.len())
        .into_par_iter()
        .map(|idx| pulse_run(spec, idx))
        .collect::<Result<Vec<_>>>()?;
    let mut report = Report::empty(spec.clone());
    let mut artifacts = Artifacts::default();
    for (result, reg, avg, est) in runs {
        let label = distance_label(result.distance);
        artifacts.signals.push((format!("pulse_{label}"), reg));
        artifacts.signals.push((format!("pulse_{label}_mean"), avg));
        artifacts.estimates.push((format!("pulse_{label}"), est));
        report.pulse_train.push(result);
    }
    Ok(Outcome { report, artifacts })
}

fn outcome(decided: &[u8], truth: &[u8], skip: usize) -> Result<DetectorOutcome> {
    let errors = crate::detection::count_errors(decided, truth, skip)?;
    Ok(DetectorOutcome {
        decisions: decided.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect(),
        errors,
    })
}

fn data_run(
    spec: &ExperimentSpec,
    idx: usize,
    bits: &SymbolSequence,
) -> Result<(DataTransmissionResult, RegularSignal<f64>, ChannelEstimate<f64>)> {
    let distance = spec.distances[idx];
    let period = spec.symbol_duration.unwrap_or(1.0);
    let cfg = spec.testbed.with_distance(distance).with_symbol_duration(period);
    cfg.validate()?;
    let per = cfg.oversampling();
    let dt = cfg.sample_interval;
    let memory = spec.memory_at(idx);
    let training = spec.training_at(idx);
    let truth = spec.truth_at(idx);
    let k = bits.len();
    if training >= k {
        return Err(Error::config(format!(
            "training length {training} leaves no information symbols out of {k}"
        )));
    }
    let at = bits.with_training(training)?;
    let model = CirModel::new(cfg, distance, BetaInit::new(truth[0], truth[1])?, 0.0)?;

    let opts = RxOptions {
        noise_sigma: spec.noise_sigma,
        jitter_sigma: spec.jitter_sigma,
        gain: truth[2],
        lead_samples: LEAD_SAMPLES,
        tail_samples: memory * per,
        align_arrival: true,
        support_samples: Some(memory * per),
        seed: spec.rx_seed(idx),
        ..RxOptions::default()
    };
    let rx = simulate_rx(&model, at.bits(), &opts)?;
    let reg = resample_linear(&rx, dt)?;
    let sync_index = synchronize(&reg)?;
    let r = reg.aligned(sync_index);

    let est = match spec.estimator {
        EstimationMethod::Samples => fit_samples(&r, &at, memory, per, spec.ridge)?,
        EstimationMethod::Model => {
            fit_model(&r, &at, &cfg, distance, memory, per, &ModelFitOptions::default())?
        }
    };

    let total = k * per;
    if r.len() < total {
        return Err(Error::numeric(format!(
            "synchronized record has {} samples, {total} required",
            r.len()
        )));
    }
    let c_d = scale_factor(&cfg, distance)?;
    let recon = pam_synthesize_len(at.bits(), &est.taps, per, total);
    let rmse = rmse(&r.values[..total], &recon, k, c_d)?;

    let skip = k.saturating_sub(spec.scored);
    let viterbi = if spec.detector.viterbi() {
        let det: DetectionResult<f64> = viterbi_detect(&r, &est, &at, k - training, memory, per)?;
        let mut decided = at.training().to_vec();
        decided.extend_from_slice(&det.bits);
        Some(outcome(&decided, at.bits(), skip)?)
    } else {
        None
    };
    let increase = if spec.detector.increase() {
        let p = default_increase_params(&cfg, distance)?;
        let det = increase_detect(&r, &p, k, per)?;
        Some(outcome(&det.bits, at.bits(), skip)?)
    } else {
        None
    };

    Ok((
        DataTransmissionResult {
            distance,
            memory,
            training,
            estimator: spec.estimator,
            truth: params_of(truth),
            fitted: est.fitted,
            sync_index,
            rmse,
            viterbi,
            increase,
        },
        r,
        est,
    ))
}

/// Data-transmission experiment: one anchored random OOK sequence sent at
/// every distance, then synchronization, estimation, detection and scoring.
pub fn run_data_transmission(spec: &ExperimentSpec) -> Result<Outcome> {
    if spec.kind != ExperimentKind::DataTransmission {
        return Err(Error::config("spec kind is not data_transmission"));
    }
    spec.validate()?;
    let bits = SymbolSequence::random_anchored(spec.symbol_count(), 0, spec.seed)?;
    let runs = (0..spec.distances.len())
        .into_par_iter()
        .map(|idx| data_run(spec, idx, &bits))
        .collect::<Result<Vec<_>>>()?;
    let mut report = Report::empty(spec.clone());
    let mut artifacts = Artifacts::default();
    for (result, r, est) in runs {
        let label = distance_label(result.distance);
        artifacts.signals.push((format!("data_{label}"), r));
        artifacts.estimates.push((format!("data_{label}"), est));
        report.data_transmission.push(result);
    }
    Ok(Outcome { report, artifacts })
}

pub fn run(spec: &ExperimentSpec) -> Result<Outcome> {
    match spec.kind {
        ExperimentKind::PulseTrain => run_pulse_train(spec),
        ExperimentKind::DataTransmission => run_data_transmission(spec),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `signals/*.csv` and `estimates/*.json` under `dir`.
pub fn emit_report(report: &Report, artifacts: &Artifacts, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let signals = dir.join("signals");
    let estimates = dir.join("estimates");
    create_dir(&signals)?;
    create_dir(&estimates)?;
    for (stem, sig) in &artifacts.signals {
        write_regular_csv(signals.join(format!("{stem}.csv")), sig)?;
    }
    for (stem, est) in &artifacts.estimates {
        est.write(estimates.join(format!("{stem}.json")))?;
    }
    let path = dir.join("report.json");
    std::fs::write(&path, report.to_json()? + "\n").map_err(|e| Error::io(&path, e))
}
