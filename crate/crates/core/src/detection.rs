//! Symbol decisions: maximum-likelihood sequence estimation over the PAM
//! trellis, the threshold-on-increase detector, and error counting.

use serde::{Deserialize, Serialize};

use crate::cir::{BetaInit, CirModel};
use crate::error::{Error, Result};
use crate::estimation::ChannelEstimate;
use crate::params::TestbedConfig;
use crate::scalar::{lit, Real};
use crate::signal::{pam_synthesize_len, RegularSignal, SymbolSequence};

/// Largest supported trellis memory; 2^(N−1) states are kept in memory.
pub const MAX_MEMORY: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DetectionResult<T> {
    /// Decided information symbols, length K_i.
    pub bits: Vec<u8>,
    /// ‖r − s([a_t a_i], ĥ)‖² over the scored record, when a channel is known.
    pub objective: Option<T>,
    /// Per-symbol squared error (Viterbi) or observed increase (threshold).
    pub metrics: Vec<T>,
    /// Hamming distance to the truth, filled by [`DetectionResult::score`].
    pub errors: Option<usize>,
}

impl<T: Real> DetectionResult<T> {
    pub fn score(&mut self, truth: &[u8], skip: usize) -> Result<usize> {
        let n = count_errors(&self.bits, truth, skip)?;
        self.errors = Some(n);
        Ok(n)
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sse<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Exact minimizer of ‖r − s([a_t a_i], h)‖² over a_i ∈ {0,1}^{K_i}, with r
/// cut at (K_t + K_i)·I samples and h cut at N·I taps.
///
/// The trellis state holds the previous N − 1 symbols, newest in bit 0.
/// Survivor ties keep the predecessor whose oldest symbol is 0 and the final
/// tie keeps the lowest state, so equal-cost sequences resolve toward 0.
pub fn viterbi<T: Real>(
    r: &[T],
    h: &[T],
    training: &[u8],
    info_len: usize,
    memory: usize,
    oversampling: usize,
) -> Result<DetectionResult<T>> {
    let (n, i) = (memory, oversampling);
    if n == 0 || i == 0 {
        return Err(Error::arg("memory and oversampling must be >= 1"));
    }
    if n > MAX_MEMORY {
        return Err(Error::arg(format!("memory {n} exceeds the trellis limit {MAX_MEMORY}")));
    }
    if info_len == 0 {
        return Err(Error::arg("nothing to detect: K_i = 0"));
    }
    if h.len() < n * i {
        return Err(Error::arg(format!(
            "N·I = {} exceeds the CIR estimate length {}",
            n * i,
            h.len()
        )));
    }
    if training.iter().any(|&b| b > 1) {
        return Err(Error::arg("training symbols must be 0 or 1"));
    }
    let kt = training.len();
    let total = (kt + info_len) * i;
    if r.len() < total {
        return Err(Error::arg(format!(
            "record has {} samples, (K_t + K_i)·I = {total} required",
            r.len()
        )));
    }
    let r = &r[..total];
    let h = &h[..n * i];
    let blocks: Vec<&[T]> = h.chunks(i).collect();
    let g: Vec<Vec<T>> = blocks
        .iter()
        .map(|a| blocks.iter().map(|b| dot(a, b)).collect())
        .collect();

    let bits = if n == 1 {
        // memoryless: each interval is decided on its own
        (0..info_len)
            .map(|t| {
                let rk = &r[(kt + t) * i..(kt + t + 1) * i];
                let gain = g[0][0] - lit::<T>(2.0) * dot(rk, blocks[0]);
                u8::from(gain < T::zero())
            })
            .collect()
    } else {
        trellis(r, &blocks, &g, training, info_len, i)
    };

    let mut all = training.to_vec();
    all.extend_from_slice(&bits);
    let s = pam_synthesize_len(&all, h, i, total);
    let metrics: Vec<T> = (kt..kt + info_len)
        .map(|k| sse(&r[k * i..(k + 1) * i], &s[k * i..(k + 1) * i]))
        .collect();
    Ok(DetectionResult {
        bits,
        objective: Some(sse(r, &s)),
        metrics,
        errors: None,
    })
}

fn trellis<T: Real>(
    r: &[T],
    blocks: &[&[T]],
    g: &[Vec<T>],
    training: &[u8],
    info_len: usize,
    i: usize,
) -> Vec<u8> {
    let m = blocks.len() - 1;
    let states = 1usize << m;
    let mask = states - 1;
    let two = lit::<T>(2.0);

    // ‖c‖² and ⟨c, h_0⟩ for the ISI vector c = Σ_j a[k−j]·h_j of each state
    let mut cc = vec![T::zero(); states];
    let mut ch = vec![T::zero(); states];
    for s in 1..states {
        let top = usize::BITS as usize - 1 - s.leading_zeros() as usize;
        let rest = s & !(1 << top);
        let j = top + 1;
        let mut cross = T::zero();
        let mut bits = rest;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            cross = cross + g[j][b + 1];
            bits &= bits - 1;
        }
        cc[s] = cc[rest] + g[j][j] + two * cross;
        ch[s] = ch[rest] + g[j][0];
    }

    let kt = training.len();
    let start = (1..=m)
        .filter(|&j| j <= kt && training[kt - j] == 1)
        .fold(0usize, |s, j| s | 1 << (j - 1));
    let mut pm = vec![T::infinity(); states];
    pm[start] = T::zero();
    let mut next = vec![T::zero(); states];
    let mut rc = vec![T::zero(); states];
    let mut p = vec![T::zero(); blocks.len()];
    let words = states.div_ceil(64);
    let mut decisions = vec![0u64; words * info_len];

    for t in 0..info_len {
        let k = kt + t;
        let rk = &r[k * i..(k + 1) * i];
        for (pj, hj) in p.iter_mut().zip(blocks) {
            *pj = dot(rk, hj);
        }
        let rr = dot(rk, rk);
        let on = g[0][0] - two * p[0];
        for s in 1..states {
            rc[s] = rc[s & (s - 1)] + p[s.trailing_zeros() as usize + 1];
        }
        let row = &mut decisions[t * words..(t + 1) * words];
        for ns in 0..states {
            let b = ns & 1;
            let p0 = ns >> 1;
            let p1 = p0 | 1 << (m - 1);
            let branch = |s: usize| {
                let base = rr - two * rc[s] + cc[s];
                if b == 1 {
                    base + on + two * ch[s]
                } else {
                    base
                }
            };
            let c0 = pm[p0] + branch(p0);
            let c1 = pm[p1] + branch(p1);
            if c1 < c0 {
                next[ns] = c1;
                row[ns / 64] |= 1 << (ns % 64);
            } else {
                next[ns] = c0;
            }
        }
        std::mem::swap(&mut pm, &mut next);
    }

    let mut s = (0..states)
        .fold(0, |best, st| if pm[st] < pm[best] { st } else { best });
    let mut bits = vec![0u8; info_len];
    for t in (0..info_len).rev() {
        bits[t] = (s & 1) as u8;
        let x = (decisions[t * words + s / 64] >> (s % 64)) & 1;
        s = ((s >> 1) | (x as usize) << (m - 1)) & mask;
    }
    bits
}

/// Sequence detection of the K_i symbols following the training prefix of
/// `at`, against the first N·I taps of `h_hat`.
pub fn viterbi_detect<T: Real>(
    r: &RegularSignal<T>,
    h_hat: &ChannelEstimate<T>,
    at: &SymbolSequence,
    info_len: usize,
    memory: usize,
    oversampling: usize,
) -> Result<DetectionResult<T>> {
    viterbi(&r.values, &h_hat.taps, at.training(), info_len, memory, oversampling)
}

/// Threshold and sampling offset of the increase detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct IncreaseParams<T> {
    /// Decision threshold ξ (susceptibility units).
    pub xi: T,
    /// Offset I_off of the second sample within the symbol interval.
    pub offset: usize,
}

impl<T: Real> IncreaseParams<T> {
    pub fn new(xi: T, offset: usize, oversampling: usize) -> Result<Self> {
        if !(xi > T::zero() && xi.is_finite()) {
            return Err(Error::arg(format!("threshold must be positive, got {xi}")));
        }
        if offset >= oversampling {
            return Err(Error::arg(format!(
                "offset {offset} must be below the oversampling factor {oversampling}"
            )));
        }
        Ok(Self { xi, offset })
    }
}

/// ξ = h_peak/20 and I_off = min(I − 1, i_peak) with
/// i_peak = round((t_peak − t0)/dt), halves rounded up.
pub fn increase_params<T: Real>(model: &CirModel<T>, oversampling: usize, dt: T) -> Result<IncreaseParams<T>> {
    if oversampling == 0 || !(dt > T::zero()) {
        return Err(Error::arg("oversampling and sampling interval must be positive"));
    }
    let i_peak = ((model.t_peak() - model.t_start()) / dt + lit(0.5))
        .floor()
        .to_usize()
        .ok_or_else(|| Error::numeric("peak offset out of range"))?;
    IncreaseParams::new(model.h_peak() / lit(20.0), i_peak.min(oversampling - 1), oversampling)
}

/// [`increase_params`] under the default assumption α = β = 3.
pub fn default_increase_params<T: Real>(
    cfg: &TestbedConfig<T>,
    distance: T,
) -> Result<IncreaseParams<T>> {
    let init = BetaInit::new(lit(3.0), lit(3.0))?;
    let model = CirModel::new(*cfg, distance, init, T::zero())?;
    increase_params(&model, cfg.oversampling(), cfg.sample_interval)
}

/// â[k] = 1 iff r[kI + I_off] − r[kI] > ξ, for k in 0..K.
pub fn increase_detect<T: Real>(
    r: &RegularSignal<T>,
    p: &IncreaseParams<T>,
    symbols: usize,
    oversampling: usize,
) -> Result<DetectionResult<T>> {
    if oversampling == 0 || p.offset >= oversampling {
        return Err(Error::arg("offset must lie inside the symbol interval"));
    }
    if symbols == 0 {
        return Ok(DetectionResult {
            bits: Vec::new(),
            objective: None,
            metrics: Vec::new(),
            errors: None,
        });
    }
    let needed = (symbols - 1) * oversampling + p.offset + 1;
    if r.len() < needed {
        return Err(Error::arg(format!(
            "record has {} samples, {needed} required for {symbols} symbols",
            r.len()
        )));
    }
    let metrics: Vec<T> = (0..symbols)
        .map(|k| {
            let i1 = k * oversampling;
            r.values[i1 + p.offset] - r.values[i1]
        })
        .collect();
    Ok(DetectionResult {
        bits: metrics.iter().map(|&d| u8::from(d > p.xi)).collect(),
        objective: None,
        metrics,
        errors: None,
    })
}

/// Hamming distance over indices ≥ `skip`.
pub fn count_errors(decided: &[u8], truth: &[u8], skip: usize) -> Result<usize> {
    if decided.len() != truth.len() {
        return Err(Error::arg(format!(
            "sequence lengths differ: {} vs {}",
            decided.len(),
            truth.len()
        )));
    }
    Ok(decided
        .iter()
        .zip(truth)
        .skip(skip)
        .filter(|(a, b)| a != b)
        .count())
}
