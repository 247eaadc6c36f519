//! OOK symbol sequences, PAM synthesis, a synthetic receiver, and the
//! preprocessing chain applied to recorded susceptibility traces.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cir::CirModel;
use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// Consecutive above-threshold samples required to declare signal onset.
pub const SYNC_RUN: usize = 10;
/// Onset threshold as a fraction of the maximal observed value.
pub const SYNC_FRACTION: f64 = 0.01;

/// Binary OOK symbols; the first `training` of them are known to the receiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSequence {
    bits: Vec<u8>,
    training: usize,
}

impl SymbolSequence {
    pub fn new(bits: Vec<u8>, training: usize) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::arg(format!("symbols must be 0 or 1, got {b}")));
        }
        if training > bits.len() {
            return Err(Error::arg(format!(
                "training length {training} exceeds sequence length {}",
                bits.len()
            )));
        }
        Ok(Self { bits, training })
    }

    /// `len` symbols with the first fixed to 1 as synchronization anchor and
    /// the rest uniform from a ChaCha8 stream seeded with `seed`.
    pub fn random_anchored(len: usize, training: usize, seed: u64) -> Result<Self> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits = (0..len)
            .map(|k| if k == 0 { 1 } else { rng.random_range(0..=1u8) })
            .collect();
        Self::new(bits, training)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Training prefix length K_t.
    pub fn training_len(&self) -> usize {
        self.training
    }

    /// Information symbol count K_i.
    pub fn info_len(&self) -> usize {
        self.bits.len() - self.training
    }

    pub fn training(&self) -> &[u8] {
        &self.bits[..self.training]
    }

    pub fn info(&self) -> &[u8] {
        &self.bits[self.training..]
    }

    pub fn with_training(&self, training: usize) -> Result<Self> {
        Self::new(self.bits.clone(), training)
    }

    /// Parses `0`/`1` characters, ignoring whitespace and commas. Lines
    /// starting with `#` are comments; `# training=<n>` sets K_t.
    pub fn parse(text: &str) -> Result<Self> {
        let mut bits = Vec::new();
        let mut training = 0;
        for line in text.lines() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("training=") {
                    training = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::arg(format!("bad training length {v:?}")))?;
                }
                continue;
            }
            for c in line.chars() {
                match c {
                    '0' => bits.push(0),
                    '1' => bits.push(1),
                    c if c.is_whitespace() || c == ',' => {}
                    c => return Err(Error::arg(format!("unexpected symbol character {c:?}"))),
                }
            }
        }
        Self::new(bits, training)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# training={}\n", self.training);
        for chunk in self.bits.chunks(50) {
            for b in chunk {
                out.push(if *b == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Irregularly sampled trace as delivered by the instrument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SampledSignal<T> {
    timestamps: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> SampledSignal<T> {
    pub fn new(timestamps: Vec<T>, values: Vec<T>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::arg(format!(
                "{} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::arg(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { timestamps, values })
    }

    pub fn timestamps(&self) -> &[T] {
        &self.timestamps
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Uniformly sampled trace χ[i] = χ(start + i·dt).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RegularSignal<T> {
    pub dt: T,
    /// Time of `values[0]` (s).
    pub start: T,
    pub values: Vec<T>,
    /// Index into the source trace at which this signal begins; set by
    /// [`RegularSignal::aligned`].
    pub origin: usize,
}

impl<T: Real> RegularSignal<T> {
    pub fn new(dt: T, values: Vec<T>) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::arg(format!("sampling interval must be positive, got {dt}")));
        }
        Ok(Self {
            dt,
            start: T::zero(),
            values,
            origin: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> T {
        self.start + count::<T>(i) * self.dt
    }

    /// r[i] = χ[i + i_start].
    pub fn aligned(&self, i_start: usize) -> Self {
        let i_start = i_start.min(self.values.len());
        Self {
            dt: self.dt,
            start: self.time(i_start),
            values: self.values[i_start..].to_vec(),
            origin: self.origin + i_start,
        }
    }

    /// First `n` samples (fewer if the signal is shorter).
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            values: self.values[..n.min(self.values.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * k).collect(),
            ..self.clone()
        }
    }

    pub fn to_sampled(&self) -> SampledSignal<T> {
        SampledSignal {
            timestamps: (0..self.len()).map(|i| self.time(i)).collect(),
            values: self.values.clone(),
        }
    }
}

/// s[i] = Σ_k a[k]·h[i − kI], covering the last symbol plus the full CIR
/// tail: length (K − 1)·I + len(h) for K ≥ 1.
pub fn pam_synthesize<T: Real>(bits: &[u8], h: &[T], oversampling: usize) -> Vec<T> {
    assert!(oversampling >= 1, "oversampling factor must be >= 1");
    if bits.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let len = (bits.len() - 1) * oversampling + h.len();
    pam_synthesize_len(bits, h, oversampling, len)
}

/// [`pam_synthesize`] truncated or zero-extended to exactly `len` samples.
pub fn pam_synthesize_len<T: Real>(
    bits: &[u8],
    h: &[T],
    oversampling: usize,
    len: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); len];
    for (k, _) in bits.iter().enumerate().filter(|(_, &b)| b == 1) {
        let offset = k * oversampling;
        if offset >= len {
            break;
        }
        for (o, &tap) in out[offset..].iter_mut().zip(h) {
            *o = *o + tap;
        }
    }
    out
}

/// PAM signal packaged as a regular trace starting at t = 0.
pub fn pam_signal<T: Real>(
    bits: &[u8],
    h: &[T],
    oversampling: usize,
    dt: T,
) -> Result<RegularSignal<T>> {
    RegularSignal::new(dt, pam_synthesize(bits, h, oversampling))
}

/// Impairments and framing of the synthetic receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RxOptions<T> {
    /// Additive white Gaussian noise, standard deviation in units of c_d.
    pub noise_sigma: T,
    /// Standard deviation of the sampling-instant jitter (s).
    pub jitter_sigma: T,
    /// Jitter is clipped to ±`jitter_clip`·`jitter_sigma`.
    pub jitter_clip: T,
    /// Multiplicative gain applied to the CIR.
    pub gain: T,
    /// Quiet samples recorded before the first injection.
    pub lead_samples: usize,
    /// Samples recorded after the last symbol interval starts.
    pub tail_samples: usize,
    /// Shift injections earlier by t0 so that arrivals fall on sample instants.
    pub align_arrival: bool,
    /// Truncate each pulse this many samples after its arrival; `None` keeps
    /// the full tail.
    pub support_samples: Option<usize>,
    pub seed: u64,
}

impl<T: Real> Default for RxOptions<T> {
    fn default() -> Self {
        Self {
            noise_sigma: T::zero(),
            jitter_sigma: T::zero(),
            jitter_clip: lit(3.0),
            gain: T::one(),
            lead_samples: 50,
            tail_samples: 200,
            align_arrival: false,
            support_samples: None,
            seed: 0,
        }
    }
}

/// Samples the continuous-time PAM signal of `model` at nominal instants
/// n·dt perturbed by clipped Gaussian jitter, and adds white Gaussian noise
/// of standard deviation `noise_sigma`·c_d. Injections start after
/// `lead_samples` quiet samples; the random stream is ChaCha8 seeded with
/// `opts.seed`, drawing jitter then noise per sample.
pub fn simulate_rx<T: Real>(
    model: &CirModel<T>,
    bits: &[u8],
    opts: &RxOptions<T>,
) -> Result<SampledSignal<T>> {
    let dt = model.cfg.sample_interval;
    let period = model.cfg.symbol_duration;
    let oversampling = model.cfg.oversampling();
    let lead = count::<T>(opts.lead_samples) * dt;
    let total = opts.lead_samples + bits.len().saturating_sub(1) * oversampling + opts.tail_samples;

    let to_f64 = |v: T| v.to_f64().unwrap_or(f64::NAN);
    let noise_std = to_f64(opts.noise_sigma * model.scale());
    let jitter_std = to_f64(opts.jitter_sigma);
    if !(noise_std >= 0.0 && jitter_std >= 0.0) {
        return Err(Error::arg("noise and jitter deviations must be >= 0"));
    }
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::arg(e.to_string()))?;
    let jitter = Normal::new(0.0, jitter_std).map_err(|e| Error::arg(e.to_string()))?;
    let clip = to_f64(opts.jitter_clip) * jitter_std;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let t0 = model.t_start();
    let shift = if opts.align_arrival { t0 } else { T::zero() };
    // half-sample guard keeps the last retained tap independent of rounding
    let cutoff = opts
        .support_samples
        .map(|n| t0 + (count::<T>(n) - lit(0.5)) * dt);
    let ones: Vec<T> = bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == 1)
        .map(|(k, _)| lead + count::<T>(k) * period - shift)
        .collect();
    let pulse = |tau: T| match cutoff {
        Some(c) if tau >= c => T::zero(),
        _ => model.eval(tau),
    };

    let mut timestamps = Vec::with_capacity(total);
    let mut values = Vec::with_capacity(total);
    for n in 0..total {
        let j = jitter.sample(&mut rng).clamp(-clip, clip);
        let e = noise.sample(&mut rng);
        let t = count::<T>(n) * dt + lit(j);
        let clean: T = ones.iter().map(|&tk| pulse(t - tk)).sum();
        timestamps.push(t);
        values.push(opts.gain * clean + lit(e));
    }
    if let Some(i) = timestamps.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::arg(format!(
            "jitter breaks sample ordering at index {}; reduce jitter_sigma or jitter_clip",
            i + 1
        )));
    }
    SampledSignal::new(timestamps, values)
}

/// Linear interpolation onto the lattice k·dt, restricted to
/// [first timestamp, last timestamp].
pub fn resample_linear<T: Real>(x: &SampledSignal<T>, dt: T) -> Result<RegularSignal<T>> {
    if x.len() < 2 {
        return Err(Error::arg(format!(
            "resampling needs at least 2 samples, got {}",
            x.len()
        )));
    }
    if !(dt > T::zero()) {
        return Err(Error::arg(format!("sampling interval must be positive, got {dt}")));
    }
    let ts = &x.timestamps;
    let vs = &x.values;
    let first = ts[0];
    let last = ts[ts.len() - 1];
    // absorb representation error of timestamps that sit on the lattice
    let slack = lit::<T>(1e-9);
    let k0 = (first / dt - slack).ceil();
    let k1 = (last / dt + slack).floor();
    if k1 < k0 {
        return Err(Error::arg("signal spans no grid point"));
    }
    let n = (k1 - k0)
        .to_usize()
        .ok_or_else(|| Error::numeric("grid size overflow"))?
        + 1;
    let mut values = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = (k0 + count(k)) * dt;
        while j + 2 < ts.len() && ts[j + 1] <= t {
            j += 1;
        }
        let (t0, t1) = (ts[j], ts[j + 1]);
        let w = (t - t0) / (t1 - t0);
        // samples within the slack of a source instant are copied verbatim
        values.push(if w <= slack {
            vs[j]
        } else if w >= T::one() - slack {
            vs[j + 1]
        } else {
            vs[j] + w * (vs[j + 1] - vs[j])
        });
    }
    Ok(RegularSignal {
        dt,
        start: k0 * dt,
        values,
        origin: 0,
    })
}

/// Index of the first run of `run` consecutive samples strictly above
/// `fraction`·max(values).
pub fn synchronize_with<T: Real>(x: &RegularSignal<T>, run: usize, fraction: T) -> Result<usize> {
    let max = x
        .values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |m, v| m.max(v));
    let threshold = fraction * max;
    let run = run.max(1);
    let mut streak = 0;
    for (i, &v) in x.values.iter().enumerate() {
        if v > threshold {
            streak += 1;
            if streak == run {
                return Ok(i + 1 - run);
            }
        } else {
            streak = 0;
        }
    }
    Err(Error::SyncNotFound {
        run,
        threshold: threshold.to_f64().unwrap_or(f64::NAN),
    })
}

/// Signal onset: first run of 10 samples above 1 % of the maximum.
pub fn synchronize<T: Real>(x: &RegularSignal<T>) -> Result<usize> {
    synchronize_with(x, SYNC_RUN, lit(SYNC_FRACTION))
}

/// √(Σ (r − s)² / K / c_d²), the per-symbol normalized error of a model fit.
pub fn rmse<T: Real>(r: &[T], s: &[T], symbols: usize, scale: T) -> Result<T> {
    if r.len() != s.len() {
        return Err(Error::arg(format!(
            "signal lengths differ: {} vs {}",
            r.len(),
            s.len()
        )));
    }
    if symbols == 0 || !(scale > T::zero()) {
        return Err(Error::arg("symbol count and scale must be positive"));
    }
    let sse: T = r.iter().zip(s).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok((sse / count(symbols) / (scale * scale)).sqrt())
}

/// Writes `t_s,chi` rows; regular signals carry a leading `# dt=` comment.
pub fn write_csv<T: Real>(path: impl AsRef<Path>, x: &SampledSignal<T>, dt: Option<T>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    if let Some(dt) = dt {
        let _ = writeln!(out, "# dt={dt}");
    }
    out.push_str("t_s,chi\n");
    for (t, v) in x.timestamps.iter().zip(&x.values) {
        let _ = writeln!(out, "{t},{v}");
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_regular_csv<T: Real>(path: impl AsRef<Path>, x: &RegularSignal<T>) -> Result<()> {
    write_csv(path, &x.to_sampled(), Some(x.dt))
}

/// Reads a `t_s,chi` CSV; returns the samples and the `# dt=` value if any.
pub fn read_csv<T: Real>(path: impl AsRef<Path>) -> Result<(SampledSignal<T>, Option<T>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dt = None;
    for line in BufReader::new(&file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let Some(comment) = line.trim().strip_prefix('#') else {
            break;
        };
        if let Some(v) = comment.trim().strip_prefix("dt=") {
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::format(path, format!("bad dt comment {v:?}")))?;
            dt = Some(lit(v));
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "t_s" || &headers[1] != "chi" {
        return Err(Error::format(path, "expected header `t_s,chi`"));
    }
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (row, rec) in reader.deserialize::<(f64, f64)>().enumerate() {
        let (t, v) = rec.map_err(|e| Error::format(path, format!("row {}: {e}", row + 1)))?;
        ts.push(lit(t));
        vs.push(lit(v));
    }
    let sig = SampledSignal::new(ts, vs).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((sig, dt))
}

/// Reads a CSV as a regular trace, using its `# dt=` header or, failing
/// that, the spacing of the first two timestamps.
pub fn read_regular_csv<T: Real>(path: impl AsRef<Path>) -> Result<RegularSignal<T>> {
    let path = path.as_ref();
    let (sig, dt) = read_csv::<T>(path)?;
    let ts = sig.timestamps();
    let dt = match dt {
        Some(dt) => dt,
        None if ts.len() >= 2 => ts[1] - ts[0],
        None => return Err(Error::format(path, "cannot infer dt from fewer than 2 samples")),
    };
    let start = ts.first().copied().unwrap_or_else(T::zero);
    let mut reg = RegularSignal::new(dt, sig.values)?;
    reg.start = start;
    Ok(reg)
}
