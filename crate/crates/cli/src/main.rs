//! `flowmc` command-line front end.
//!
//! Every subcommand flag can also be given in a JSON config file under a key
//! named after the subcommand (`{"fit": {"method": "model"}}`); testbed
//! parameters live under `"testbed"`. Flags win over the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use flowmc::detection::{increase_detect, increase_params, viterbi_detect, count_errors};
use flowmc::estimation::{fit_model, fit_samples, ChannelEstimate, EstimationMethod, ModelFitOptions};
use flowmc::experiment::{self, DetectorChoice, ExperimentKind, ExperimentSpec, Report};
use flowmc::params::{profile_for, scale_factor, units};
use flowmc::physics::{characterize, regime_thresholds, RegimeReport, RegimeThresholds};
use flowmc::signal::{
    pam_synthesize_len, read_csv, resample_linear, rmse, simulate_rx, synchronize, write_csv,
    RegularSignal, RxOptions, SymbolSequence,
};
use flowmc::{BetaInit, CirModel, Error, TestbedConfig};

/// Environment variable naming the output root.
const OUT_ENV: &str = "FLOWMC_OUT";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 configuration, 3 numerical failure, 4 synchronization not found.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Numeric(_) | Error::NoSignalEnergy) => 3,
            CliError::Core(Error::SyncNotFound { .. }) => 4,
            _ => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "flowmc", version, about = "Flow-driven magnetic nanoparticle link toolkit")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root directory.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Flow, diffusion and gravity regime of the testbed.
    Characterize(CharacterizeArgs),
    /// Evaluate the analytic CIR on a time grid.
    Cir(CirArgs),
    /// Simulate a received OOK record.
    Synth(SynthArgs),
    /// Estimate the channel from a training prefix.
    Fit(FitArgs),
    /// Detect the information symbols of a record.
    Detect(DetectArgs),
    /// Run the pulse-train or data-transmission experiment.
    Experiment(ExperimentArgs),
    /// Score an estimate and optional decisions against a record.
    Eval(EvalArgs),
}

/// Testbed overrides shared by the subcommands; they map onto the `testbed`
/// config section.
#[derive(Debug, Clone, Default, Args)]
struct TestbedArgs {
    /// Transmitter–receiver distance (m).
    #[arg(long)]
    distance: Option<f64>,
    /// Background flow rate (mL/min).
    #[arg(long)]
    background_flow: Option<f64>,
    /// Symbol duration T (s).
    #[arg(long)]
    symbol_duration: Option<f64>,
    /// Resampling interval dt (s).
    #[arg(long)]
    sample_interval: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Table,
    Json,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CharacterizeArgs {
    #[command(flatten)]
    #[serde(skip)]
    testbed: TestbedArgs,
    /// Stdout format; both forms are written when an output root is set.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CirArgs {
    #[command(flatten)]
    #[serde(skip)]
    testbed: TestbedArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Receiver window length (m); 0 selects the limit form.
    #[arg(long)]
    window: Option<f64>,
    /// Grid end (s); defaults to 10·t0.
    #[arg(long)]
    t_end: Option<f64>,
    /// Grid step (s); defaults to the sample interval.
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthArgs {
    #[command(flatten)]
    #[serde(skip)]
    testbed: TestbedArgs,
    /// Ground-truth α; defaults to the reference fit of the nearest distance.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Number of OOK symbols, the first fixed to 1.
    #[arg(long)]
    symbols: Option<usize>,
    /// Training prefix length recorded in the symbol file.
    #[arg(long)]
    training: Option<usize>,
    /// CIR memory in symbols; the synthetic pulse is cut after N·I samples.
    #[arg(long)]
    memory: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Noise standard deviation in units of c_d.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Sampling-instant jitter (s).
    #[arg(long)]
    jitter_sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Method {
    Model,
    Samples,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitArgs {
    #[command(flatten)]
    #[serde(skip)]
    testbed: TestbedArgs,
    /// Received record (`t_s,chi` CSV).
    #[arg(long)]
    signal: Option<PathBuf>,
    /// Symbol file with a `# training=` header.
    #[arg(long)]
    symbols: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Memory N in symbols; defaults to the reference value of the distance.
    #[arg(long)]
    memory: Option<usize>,
    /// Overrides the training length of the symbol file.
    #[arg(long)]
    training: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    /// Treat the record as already resampled and synchronized.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    no_sync: Option<bool>,
    /// Estimate file; defaults to `<out>/estimates/estimate.json`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Detector {
    Viterbi,
    Increase,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DetectArgs {
    #[command(flatten)]
    #[serde(skip)]
    testbed: TestbedArgs,
    #[arg(long)]
    signal: Option<PathBuf>,
    /// Symbol file: training prefix, and the truth used for scoring.
    #[arg(long)]
    symbols: Option<PathBuf>,
    /// Channel estimate (required for viterbi).
    #[arg(long)]
    estimate: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Detector>,
    #[arg(long)]
    training: Option<usize>,
    /// Symbols at the end of the sequence that are scored.
    #[arg(long)]
    scored: Option<usize>,
    /// α assumed by the increase detector.
    #[arg(long)]
    assumed_alpha: Option<f64>,
    /// β assumed by the increase detector.
    #[arg(long)]
    assumed_beta: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    no_sync: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    PulseTrain,
    DataTransmission,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetectorArg {
    Viterbi,
    Increase,
    Both,
}

/// Field names match the experiment spec, so the `experiment` config section
/// may hold a complete spec.
#[derive(Debug, Clone, Default, Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Comma-separated distances (m).
    #[arg(long, value_delimiter = ',')]
    distances: Option<Vec<f64>>,
    #[arg(long)]
    symbol_duration: Option<f64>,
    #[arg(long)]
    symbols: Option<usize>,
    #[arg(long)]
    scored: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    jitter_sigma: Option<f64>,
    #[arg(long, value_enum)]
    estimator: Option<Method>,
    #[arg(long, value_enum)]
    detector: Option<DetectorArg>,
    #[arg(long)]
    ridge: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalArgs {
    #[command(flatten)]
    #[serde(skip)]
    testbed: TestbedArgs,
    #[arg(long)]
    signal: Option<PathBuf>,
    #[arg(long)]
    symbols: Option<PathBuf>,
    #[arg(long)]
    estimate: Option<PathBuf>,
    /// Decided symbols in the symbol-file format.
    #[arg(long)]
    decisions: Option<PathBuf>,
    #[arg(long)]
    scored: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    no_sync: Option<bool>,
}

struct Context {
    config: Map<String, Value>,
    out: Option<PathBuf>,
}

impl Context {
    fn load(cli: &Cli) -> CliResult<Self> {
        let config = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
                match serde_json::from_str(&text) {
                    Ok(Value::Object(map)) => map,
                    Ok(_) => return Err(CliError::Config(format!("{}: expected a JSON object", path.display()))),
                    Err(e) => return Err(CliError::Config(format!("{}: {e}", path.display()))),
                }
            }
            None => Map::new(),
        };
        let out = match (&cli.out, config.get("out")) {
            (Some(p), _) => Some(p.clone()),
            (None, Some(Value::String(s))) => Some(PathBuf::from(s)),
            (None, Some(_)) => return Err(CliError::Config("\"out\" must be a string".into())),
            (None, None) => None,
        };
        Ok(Self { config, out })
    }

    fn section(&self, key: &str) -> CliResult<Map<String, Value>> {
        match self.config.get(key) {
            None => Ok(Map::new()),
            Some(Value::Object(m)) => Ok(m.clone()),
            Some(_) => Err(CliError::Config(format!("\"{key}\" must be a JSON object"))),
        }
    }

    /// Flags that were given replace the corresponding config values.
    fn resolve<A: Serialize + DeserializeOwned>(&self, key: &str, flags: &A) -> CliResult<A> {
        let mut base = self.section(key)?;
        overlay(&mut base, flags)?;
        serde_json::from_value(Value::Object(base))
            .map_err(|e| CliError::Config(format!("\"{key}\": {e}")))
    }

    fn testbed(&self, flags: &TestbedArgs) -> CliResult<TestbedConfig<f64>> {
        let mut base = self.section("testbed")?;
        let mut set = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                base.insert(k.into(), json!(v));
            }
        };
        set("d", flags.distance);
        set("Qb", flags.background_flow.map(units::ml_per_min));
        set("T", flags.symbol_duration);
        set("dt", flags.sample_interval);
        let cfg: TestbedConfig<f64> = serde_json::from_value(Value::Object(base))
            .map_err(|e| CliError::Config(format!("\"testbed\": {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn overlay<A: Serialize>(base: &mut Map<String, Value>, flags: &A) -> CliResult<()> {
    let value = serde_json::to_value(flags).map_err(|e| CliError::Config(e.to_string()))?;
    if let Value::Object(m) = value {
        for (k, v) in m {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    Ok(())
}

fn required<T: Clone>(v: &Option<T>, name: &str) -> CliResult<T> {
    v.clone()
        .ok_or_else(|| CliError::Config(format!("missing required option --{}", name.replace('_', "-"))))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

fn to_json<S: Serialize>(v: &S) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Config(e.to_string()))
}

/// Resampled record, synchronized unless `no_sync`.
fn load_record(path: &Path, cfg: &TestbedConfig<f64>, no_sync: bool) -> CliResult<RegularSignal<f64>> {
    let (sampled, _) = read_csv::<f64>(path)?;
    let reg = resample_linear(&sampled, cfg.sample_interval)?;
    if no_sync {
        return Ok(reg);
    }
    let i_start = synchronize(&reg)?;
    Ok(reg.aligned(i_start))
}

fn load_symbols(path: &Path, training: Option<usize>) -> CliResult<SymbolSequence> {
    let seq = SymbolSequence::read(path)?;
    Ok(match training {
        Some(t) => seq.with_training(t)?,
        None => seq,
    })
}

#[derive(Serialize)]
struct Characterization {
    distance: f64,
    report: RegimeReport<f64>,
    thresholds: RegimeThresholds<f64>,
}

fn characterization_table(c: &Characterization) -> String {
    let r = &c.report;
    let t = &c.thresholds;
    let rows = [
        ("distance", format!("{:.4}", c.distance), "m"),
        ("reynolds", format!("{:.2}", r.reynolds), ""),
        ("flow_regime", format!("{:?}", r.flow_regime), ""),
        ("dispersion_factor", format!("{:.5}", r.dispersion_factor), ""),
        ("transport_regime", format!("{:?}", r.transport_regime), ""),
        ("diffusion_coeff", format!("{:.4e}", r.diffusion_coeff), "m^2/s"),
        ("gravity_force", format!("{:.4e}", r.gravity_force), "N"),
        ("gravity_drift", format!("{:.4e}", r.gravity_drift), "m/s"),
        ("gravity_onset_time", format!("{:.3}", r.gravity_onset_time / 3600.0), "h"),
        ("gravity_critical_mass", format!("{:.4e}", r.gravity_critical_mass), "kg"),
        (
            "turbulent_background_flow",
            format!("{:.2}", units::to_ml_per_min(t.turbulent_background_flow)),
            "mL/min",
        ),
        ("turbulent_tube_radius", format!("{:.3}", t.turbulent_tube_radius * 1e3), "mm"),
        (
            "diffusive_effective_velocity",
            format!("{:.4}", t.diffusive_effective_velocity * 1e3),
            "mm/s",
        ),
        (
            "diffusive_background_flow",
            format!("{:.4}", units::to_ml_per_min(t.diffusive_background_flow)),
            "mL/min",
        ),
        ("diffusive_tube_radius", format!("{:.4}", t.diffusive_tube_radius * 1e3), "mm"),
        ("diffusive_distance", format!("{:.2}", t.diffusive_distance), "m"),
        ("diffusive_diffusion_coeff", format!("{:.4e}", t.diffusive_diffusion_coeff), "m^2/s"),
    ];
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (name, value, unit) in rows {
        let _ = writeln!(out, "{name:<w0$}  {value:>w1$}  {unit}");
    }
    out
}

fn cmd_characterize(ctx: &Context, flags: &CharacterizeArgs) -> CliResult<()> {
    let args = ctx.resolve("characterize", flags)?;
    let cfg = ctx.testbed(&flags.testbed)?;
    let c = Characterization {
        distance: cfg.distance,
        report: characterize(&cfg, cfg.distance)?,
        thresholds: regime_thresholds(&cfg, cfg.distance)?,
    };
    let json = to_json(&c)?;
    let table = characterization_table(&c);
    if let Some(dir) = &ctx.out {
        write_file(&dir.join("characterize.json"), &(json.clone() + "\n"))?;
        write_file(&dir.join("characterize.txt"), &table)?;
    }
    match args.format.unwrap_or(Format::Table) {
        Format::Table => emit(&table),
        Format::Json => emit(&(json + "\n")),
    }
    Ok(())
}

fn cmd_cir(ctx: &Context, flags: &CirArgs) -> CliResult<()> {
    let args = ctx.resolve("cir", flags)?;
    let cfg = ctx.testbed(&flags.testbed)?;
    let init = BetaInit::new(args.alpha.unwrap_or(3.0), args.beta.unwrap_or(3.0))?;
    let model = CirModel::new(cfg, cfg.distance, init, args.window.unwrap_or(0.0))?;
    let step = args.step.unwrap_or(cfg.sample_interval);
    let t_end = args.t_end.unwrap_or(10.0 * model.t_start());
    if !(step > 0.0 && t_end > 0.0) {
        return Err(CliError::Config("t_end and step must be positive".into()));
    }
    let n = (t_end / step).floor() as usize + 1;
    let header = json!({
        "t0": model.t_start(),
        "t_peak": model.t_peak(),
        "h_peak": model.h_peak(),
        "c_d": model.scale(),
        "alpha": init.alpha,
        "beta": init.beta,
        "window": model.window,
        "distance": model.distance,
    });
    let mut csv = format!("# {header}\nt_s,h\n");
    for i in 0..n {
        let t = i as f64 * step;
        let _ = writeln!(csv, "{t},{}", model.eval(t));
    }
    match &ctx.out {
        Some(dir) => {
            write_file(&dir.join("cir.csv"), &csv)?;
            write_file(&dir.join("cir.json"), &(to_json(&header)? + "\n"))?;
            emit(&(to_json(&header)? + "\n"));
        }
        None => emit(&csv),
    }
    Ok(())
}

fn cmd_synth(ctx: &Context, flags: &SynthArgs) -> CliResult<()> {
    let args = ctx.resolve("synth", flags)?;
    let cfg = ctx.testbed(&flags.testbed)?;
    let profile = profile_for(cfg.distance);
    let [a0, b0, g0] = profile.reference_fit;
    let init = BetaInit::new(args.alpha.unwrap_or(a0), args.beta.unwrap_or(b0))?;
    let gamma = args.gamma.unwrap_or(g0);
    let symbols = args.symbols.unwrap_or(experiment::DATA_SYMBOLS);
    let training = args.training.unwrap_or(profile.training_samples).min(symbols);
    let memory = args.memory.unwrap_or(profile.memory);
    let per = cfg.oversampling();
    let seed = args.seed.unwrap_or(1);
    let seq = SymbolSequence::random_anchored(symbols, training, seed)?;
    let model = CirModel::new(cfg, cfg.distance, init, 0.0)?;
    let opts = RxOptions {
        noise_sigma: args.noise_sigma.unwrap_or(0.0),
        jitter_sigma: args.jitter_sigma.unwrap_or(0.0),
        gain: gamma,
        lead_samples: experiment::LEAD_SAMPLES,
        tail_samples: memory * per,
        align_arrival: true,
        support_samples: Some(memory * per),
        seed: seed.wrapping_add(1),
        ..RxOptions::default()
    };
    let rx = simulate_rx(&model, seq.bits(), &opts)?;
    let dir = ctx.out_dir("flowmc-out");
    create_dir(&dir.join("signals"))?;
    let signal = dir.join("signals").join("rx.csv");
    write_csv(&signal, &rx, None)?;
    let symbols_path = dir.join("symbols.txt");
    seq.write(&symbols_path)?;
    emit(&(
        to_json(&json!({
            "signal": signal,
            "symbols": symbols_path,
            "samples": rx.len(),
            "c_d": model.scale(),
            "truth": {"alpha": init.alpha, "beta": init.beta, "gamma": gamma},
        }))? + "\n"),
    );
    Ok(())
}

fn cmd_fit(ctx: &Context, flags: &FitArgs) -> CliResult<()> {
    let args = ctx.resolve("fit", flags)?;
    let cfg = ctx.testbed(&flags.testbed)?;
    let r = load_record(&required(&args.signal, "signal")?, &cfg, args.no_sync.unwrap_or(false))?;
    let at = load_symbols(&required(&args.symbols, "symbols")?, args.training)?;
    let memory = args.memory.unwrap_or(profile_for(cfg.distance).memory);
    let per = cfg.oversampling();
    let est = match args.method.unwrap_or(Method::Samples) {
        Method::Samples => fit_samples(&r, &at, memory, per, args.ridge.unwrap_or(0.0))?,
        Method::Model => fit_model(&r, &at, &cfg, cfg.distance, memory, per, &ModelFitOptions::default())?,
    };
    let path = match (&args.output, &ctx.out) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(dir)) => Some(dir.join("estimates").join("estimate.json")),
        (None, None) => None,
    };
    if let Some(path) = path {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        est.write(&path)?;
    }
    emit(&(est.to_json()? + "\n"));
    Ok(())
}

#[derive(Serialize)]
struct DetectOutput {
    method: Detector,
    training: usize,
    decisions: String,
    errors: Option<usize>,
    scored: usize,
    objective: Option<f64>,
}

fn cmd_detect(ctx: &Context, flags: &DetectArgs) -> CliResult<()> {
    let args = ctx.resolve("detect", flags)?;
    let cfg = ctx.testbed(&flags.testbed)?;
    let r = load_record(&required(&args.signal, "signal")?, &cfg, args.no_sync.unwrap_or(false))?;
    let at = load_symbols(&required(&args.symbols, "symbols")?, args.training)?;
    let per = cfg.oversampling();
    let method = args.method.unwrap_or(Detector::Viterbi);
    let (decided, objective) = match method {
        Detector::Viterbi => {
            let est = ChannelEstimate::read(required(&args.estimate, "estimate")?)?;
            if est.oversampling != per {
                return Err(CliError::Config(format!(
                    "estimate uses I = {}, testbed gives I = {per}",
                    est.oversampling
                )));
            }
            let det = viterbi_detect(&r, &est, &at, at.info_len(), est.memory, per)?;
            let mut all = at.training().to_vec();
            all.extend_from_slice(&det.bits);
            (all, det.objective)
        }
        Detector::Increase => {
            let init = BetaInit::new(args.assumed_alpha.unwrap_or(3.0), args.assumed_beta.unwrap_or(3.0))?;
            let model = CirModel::new(cfg, cfg.distance, init, 0.0)?;
            let p = increase_params(&model, per, cfg.sample_interval)?;
            (increase_detect(&r, &p, at.len(), per)?.bits, None)
        }
    };
    let scored = args.scored.unwrap_or(experiment::SCORED_SYMBOLS).min(at.len());
    let errors = count_errors(&decided, at.bits(), at.len() - scored)?;
    let out = DetectOutput {
        method,
        training: at.training_len(),
        decisions: decided.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect(),
        errors: Some(errors),
        scored,
        objective,
    };
    let json = to_json(&out)?;
    if let Some(dir) = &ctx.out {
        write_file(&dir.join("detect.json"), &(json.clone() + "\n"))?;
    }
    emit(&(json + "
"));
    Ok(())
}

fn experiment_spec(ctx: &Context, flags: &ExperimentArgs) -> CliResult<ExperimentSpec> {
    let mut base = ctx.section("experiment")?;
    if !base.contains_key("testbed") {
        if let Some(tb) = ctx.config.get("testbed") {
            base.insert("testbed".into(), tb.clone());
        }
    }
    let mut set = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            base.insert(k.into(), v);
        }
    };
    set(
        "kind",
        flags.kind.map(|k| {
            json!(match k {
                KindArg::PulseTrain => ExperimentKind::PulseTrain,
                KindArg::DataTransmission => ExperimentKind::DataTransmission,
            })
        }),
    );
    set("distances", flags.distances.as_ref().map(|d| json!(d)));
    set("symbol_duration", flags.symbol_duration.map(|v| json!(v)));
    set("symbols", flags.symbols.map(|v| json!(v)));
    set("scored", flags.scored.map(|v| json!(v)));
    set("seed", flags.seed.map(|v| json!(v)));
    set("noise_sigma", flags.noise_sigma.map(|v| json!(v)));
    set("jitter_sigma", flags.jitter_sigma.map(|v| json!(v)));
    set("ridge", flags.ridge.map(|v| json!(v)));
    set(
        "estimator",
        flags.estimator.map(|m| {
            json!(match m {
                Method::Model => EstimationMethod::Model,
                Method::Samples => EstimationMethod::Samples,
            })
        }),
    );
    set(
        "detector",
        flags.detector.map(|d| {
            json!(match d {
                DetectorArg::Viterbi => DetectorChoice::Viterbi,
                DetectorArg::Increase => DetectorChoice::Increase,
                DetectorArg::Both => DetectorChoice::Both,
            })
        }),
    );
    let spec: ExperimentSpec = serde_json::from_value(Value::Object(base))
        .map_err(|e| CliError::Config(format!("\"experiment\": {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn experiment_summary(report: &Report) -> String {
    let mut out = String::new();
    if !report.pulse_train.is_empty() {
        let _ = writeln!(out, "{:>8}  {:>7}  {:>8}  {:>8}  {:>8}", "d [cm]", "T [s]", "alpha", "beta", "gamma");
        for r in &report.pulse_train {
            let _ = writeln!(
                out,
                "{:>8.1}  {:>7.1}  {:>8.4}  {:>8.4}  {:>8.4}",
                r.distance * 100.0,
                r.period,
                r.fitted.alpha,
                r.fitted.beta,
                r.fitted.gamma
            );
        }
    }
    if !report.data_transmission.is_empty() {
        let _ = writeln!(out, "{:>8}  {:>4}  {:>4}  {:>10}  {:>8}  {:>9}", "d [cm]", "N", "Kt", "rmse", "viterbi", "increase");
        let fmt = |o: &Option<experiment::DetectorOutcome>| {
            o.as_ref().map_or("-".to_string(), |o| o.errors.to_string())
        };
        for r in &report.data_transmission {
            let _ = writeln!(
                out,
                "{:>8.1}  {:>4}  {:>4}  {:>10.3e}  {:>8}  {:>9}",
                r.distance * 100.0,
                r.memory,
                r.training,
                r.rmse,
                fmt(&r.viterbi),
                fmt(&r.increase)
            );
        }
    }
    out
}

fn cmd_experiment(ctx: &Context, flags: &ExperimentArgs) -> CliResult<()> {
    let spec = experiment_spec(ctx, flags)?;
    let outcome = experiment::run(&spec)?;
    let dir = ctx.out_dir("flowmc-out");
    experiment::emit_report(&outcome.report, &outcome.artifacts, &dir)?;
    emit(&format!(
        "{}report: {}\n",
        experiment_summary(&outcome.report),
        dir.join("report.json").display()
    ));
    Ok(())
}

fn cmd_eval(ctx: &Context, flags: &EvalArgs) -> CliResult<()> {
    let args = ctx.resolve("eval", flags)?;
    let cfg = ctx.testbed(&flags.testbed)?;
    let r = load_record(&required(&args.signal, "signal")?, &cfg, args.no_sync.unwrap_or(false))?;
    let at = load_symbols(&required(&args.symbols, "symbols")?, None)?;
    let est = ChannelEstimate::read(required(&args.estimate, "estimate")?)?;
    let per = est.oversampling;
    let total = at.len() * per;
    if r.len() < total {
        return Err(CliError::Core(Error::InvalidArgument(format!(
            "record has {} samples, {total} required",
            r.len()
        ))));
    }
    let s = pam_synthesize_len(at.bits(), &est.taps, per, total);
    let c_d = scale_factor(&cfg, cfg.distance)?;
    let value = rmse(&r.values[..total], &s, at.len(), c_d)?;
    let scored = args.scored.unwrap_or(experiment::SCORED_SYMBOLS).min(at.len());
    let errors = match &args.decisions {
        Some(p) => {
            let d = SymbolSequence::read(p)?;
            Some(count_errors(d.bits(), at.bits(), at.len() - scored)?)
        }
        None => None,
    };
    let json = to_json(&json!({
        "symbols": at.len(),
        "rmse": value,
        "scored": scored,
        "errors": errors,
    }))?;
    if let Some(dir) = &ctx.out {
        write_file(&dir.join("eval.json"), &(json.clone() + "\n"))?;
    }
    emit(&(json + "
"));
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    let ctx = Context::load(cli)?;
    match &cli.command {
        Command::Characterize(a) => cmd_characterize(&ctx, a),
        Command::Cir(a) => cmd_cir(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Fit(a) => cmd_fit(&ctx, a),
        Command::Detect(a) => cmd_detect(&ctx, a),
        Command::Experiment(a) => cmd_experiment(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flowmc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
