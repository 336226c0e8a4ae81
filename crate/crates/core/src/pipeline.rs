//! Run configuration and the batch commands behind the command-line tool.
//!
//! Every command reads one JSON configuration, writes its outputs under
//! `output_dir` and records a manifest (`<command>.manifest.json`) holding
//! the configuration hash, the seed and a digest of every file written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, robustness_study, EvaluationOptions, EvaluationReport, McsOptions};
use crate::io::{create_file, load_return_panel, load_signal_panel, open_file, write_return_panel_csv, write_signal_panel_csv};
use crate::market_data::{
    compute_returns, ingest_bars, resample_bars, BarSchema, BarSeries, Horizon, ReturnOptions, ReturnPanel, TradingCalendar,
};
use crate::reservoir::ReservoirSpec;
use crate::signals::{build_signal_panel, SignalConfig, SignalPanel};
use crate::synthetic::{simulate_panel, SyntheticConfig};
use crate::training::{run_baseline, run_benchmark, run_esn, ForecastSet, HorizonConfig, TrainingOptions, BASELINE, BENCHMARK, ESN};
use crate::tuning::{tune, SearchSpace};

pub const RETURNS_FILE: &str = "returns.csv";
pub const SIGNALS_FILE: &str = "signals.csv";
pub const SIGNAL_DIAGNOSTICS_FILE: &str = "signal_diagnostics.json";
pub const FORECAST_DIR: &str = "forecasts";
pub const REPORT_DIR: &str = "report";
pub const TUNING_DIR: &str = "tuning";
pub const ENV_PREFIX: &str = "ESNCAST_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Baseline,
    Benchmark,
    Esn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Baseline, ModelKind::Benchmark, ModelKind::Esn];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Baseline => BASELINE,
            ModelKind::Benchmark => BENCHMARK,
            ModelKind::Esn => ESN,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(ModelKind::Baseline),
            "benchmark" => Ok(ModelKind::Benchmark),
            "esn" => Ok(ModelKind::Esn),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// Intraday bar files to ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarSource {
    /// A bar file or a directory of `.csv` bar files.
    pub path: PathBuf,
    #[serde(default)]
    pub schema: BarSchema,
    #[serde(default)]
    pub returns: ReturnOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Bars(BarSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub alpha: f64,
    pub draws: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { alpha: 0.05, draws: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    /// Leading trading days used as the tuning sample; evaluation starts after.
    pub presample_days: usize,
    pub space: SearchSpace,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            presample_days: 20,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    /// ESN re-draws per horizon in `report`; 0 disables the study.
    pub models: usize,
    pub horizons: Vec<Horizon>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            models: 0,
            horizons: vec![Horizon::Min10],
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn all_horizons() -> Vec<Horizon> {
    Horizon::ALL.to_vec()
}

fn all_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

/// Top-level run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    pub data: DataSource,
    #[serde(default)]
    pub signals: SignalConfig,
    #[serde(default)]
    pub training: TrainingOptions,
    #[serde(default = "all_horizons")]
    pub horizons: Vec<Horizon>,
    #[serde(default = "all_models")]
    pub models: Vec<ModelKind>,
    /// Per-horizon window settings; missing horizons use the defaults.
    #[serde(default)]
    pub horizon_configs: BTreeMap<Horizon, HorizonConfig>,
    /// Per-horizon reservoir specs; missing horizons use the published
    /// values with the global seed.
    #[serde(default)]
    pub reservoir: BTreeMap<Horizon, ReservoirSpec>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub robustness: RobustnessConfig,
    #[serde(default)]
    pub jobs: Option<usize>,
}

/// Command-line overrides, applied after the file and the environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub horizons: Option<Vec<Horizon>>,
    pub models: Option<Vec<ModelKind>>,
    pub jobs: Option<usize>,
}

/// Replaces top-level keys from `ESNCAST_<KEY>` variables. Values parse as
/// JSON when they can and are taken as strings otherwise.
pub fn apply_env(mut config: Value, vars: impl IntoIterator<Item = (String, String)>) -> Result<Value> {
    let obj = config
        .as_object_mut()
        .ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (k, v) in vars {
        let key = k[ENV_PREFIX.len()..].to_ascii_lowercase();
        if key.is_empty() {
            continue;
        }
        let value = serde_json::from_str(&v).unwrap_or(Value::String(v));
        obj.insert(key, value);
    }
    Ok(config)
}

fn parse_list<T: std::str::FromStr<Err = Error>>(v: &Value, what: &str) -> Result<Option<Vec<T>>> {
    match v {
        Value::String(s) => s.split(',').filter(|x| !x.trim().is_empty()).map(str::parse).collect::<Result<_>>().map(Some),
        Value::Array(_) => Ok(None),
        _ => Err(Error::Config(format!("{what} must be a list"))),
    }
}

impl RunConfig {
    pub fn from_value(mut value: Value) -> Result<Self> {
        // comma-separated lists are accepted wherever a list is expected
        if let Some(obj) = value.as_object_mut() {
            if let Some(v) = obj.get("horizons") {
                if let Some(list) = parse_list::<Horizon>(v, "horizons")? {
                    obj.insert("horizons".into(), serde_json::to_value(list)?);
                }
            }
            if let Some(v) = obj.get("models") {
                if let Some(list) = parse_list::<ModelKind>(v, "models")? {
                    obj.insert("models".into(), serde_json::to_value(list)?);
                }
            }
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    /// Reads `path`, applies environment overrides then `overrides`.
    pub fn load(path: &Path, env: impl IntoIterator<Item = (String, String)>, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{} is not valid JSON: {e}", path.display())))?;
        let mut cfg = RunConfig::from_value(apply_env(value, env)?)?;
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(h) = &o.horizons {
            self.horizons = h.clone();
        }
        if let Some(m) = &o.models {
            self.models = m.clone();
        }
        if let Some(j) = o.jobs {
            self.jobs = Some(j);
        }
    }

    /// Fills in defaults for every selected horizon so the configuration is
    /// explicit in manifests.
    pub fn resolved(&self) -> RunConfig {
        let mut out = self.clone();
        for &h in &self.horizons {
            out.horizon_configs.entry(h).or_insert_with(|| HorizonConfig::for_horizon(h));
            out.reservoir.entry(h).or_insert_with(|| ReservoirSpec {
                seed: self.seed,
                ..ReservoirSpec::for_horizon(h)
            });
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::Config("no horizons selected".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.signals.validate()?;
        self.training.validate()?;
        for (h, c) in &self.horizon_configs {
            if c.horizon != *h {
                return Err(Error::Config(format!("horizon_configs entry {h} describes {}", c.horizon)));
            }
            c.validate()?;
        }
        for s in self.reservoir.values() {
            s.validate()?;
        }
        if !(self.evaluation.alpha > 0.0 && self.evaluation.alpha < 1.0) || self.evaluation.draws == 0 {
            return Err(Error::Config("evaluation needs 0 < alpha < 1 and draws >= 1".into()));
        }
        Ok(())
    }

    pub fn horizon_config(&self, h: Horizon) -> HorizonConfig {
        self.horizon_configs.get(&h).cloned().unwrap_or_else(|| HorizonConfig::for_horizon(h))
    }

    pub fn reservoir_spec(&self, h: Horizon) -> ReservoirSpec {
        self.reservoir.get(&h).cloned().unwrap_or_else(|| ReservoirSpec {
            seed: self.seed,
            ..ReservoirSpec::for_horizon(h)
        })
    }

    pub fn evaluation_options(&self) -> EvaluationOptions {
        EvaluationOptions {
            mcs: McsOptions {
                alpha: self.evaluation.alpha,
                draws: self.evaluation.draws,
                seed: self.seed,
            },
        }
    }

    /// SHA-256 of the canonical JSON of the resolved configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.resolved()).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub config: RunConfig,
    pub outputs: Vec<OutputDigest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn read(dir: &Path, command: &str) -> Result<Self> {
        let path = dir.join(Manifest::file_name(command));
        Ok(serde_json::from_reader(open_file(&path)?)?)
    }
}

fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_manifest(cfg: &RunConfig, command: &str, outputs: &[PathBuf], notes: Vec<String>) -> Result<Manifest> {
    let dir = &cfg.output_dir;
    let mut digests = Vec::with_capacity(outputs.len());
    for p in outputs {
        let rel = p.strip_prefix(dir).unwrap_or(p);
        digests.push(OutputDigest {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: digest_file(p)?,
        });
    }
    let m = Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        config: cfg.resolved(),
        outputs: digests,
        notes,
    };
    let path = dir.join(Manifest::file_name(command));
    let mut w = create_file(&path)?;
    serde_json::to_writer_pretty(&mut w, &m)?;
    std::io::Write::write_all(&mut w, b"\n").map_err(|e| Error::io(&path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(&path, e))?;
    Ok(m)
}

fn write_returns(path: &Path, panel: &ReturnPanel) -> Result<()> {
    let mut w = create_file(path)?;
    write_return_panel_csv(&mut w, panel)?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
}

pub fn forecast_path(dir: &Path, model: ModelKind, h: Horizon) -> PathBuf {
    dir.join(FORECAST_DIR).join(format!("{}_{}.csv", model.name(), h.label()))
}

/// Loads the return panel written by `simulate` or `ingest`.
pub fn load_returns(cfg: &RunConfig) -> Result<ReturnPanel> {
    let path = cfg.output_dir.join(RETURNS_FILE);
    if !path.exists() {
        return Err(Error::MissingInput {
            path,
            reason: "run `simulate` or `ingest` first".into(),
        });
    }
    load_return_panel(&path)
}

/// Loads `signals.csv` when present, otherwise builds signals from the returns.
pub fn load_or_build_signals(cfg: &RunConfig, returns: &ReturnPanel) -> Result<(SignalPanel, Option<String>)> {
    let path = cfg.output_dir.join(SIGNALS_FILE);
    if path.exists() {
        Ok((load_signal_panel(&path)?, None))
    } else {
        let (s, _) = build_signal_panel(returns, &cfg.signals)?;
        Ok((s, Some(format!("{SIGNALS_FILE} not found; signals built from {RETURNS_FILE}"))))
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Manifest> {
    let DataSource::Synthetic(syn) = &cfg.data else {
        return Err(Error::Config("simulate needs a synthetic data source".into()));
    };
    let spec = syn.to_spec(cfg.seed).map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })?;
    let panel = simulate_panel(&spec)?;
    let out = cfg.output_dir.join(RETURNS_FILE);
    write_returns(&out, &panel)?;
    info!("simulated {} stocks x {} rows", panel.n_stocks(), panel.n_times());
    write_manifest(cfg, "simulate", &[out], vec![])
}

fn bar_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::MissingInput {
                path: path.to_path_buf(),
                reason: "directory holds no .csv bar files".into(),
            });
        }
        Ok(files)
    } else if path.exists() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(Error::MissingInput {
            path: path.to_path_buf(),
            reason: "bar file not found".into(),
        })
    }
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<Manifest> {
    let DataSource::Bars(src) = &cfg.data else {
        return Err(Error::Config("ingest needs a bars data source".into()));
    };
    let parts = bar_files(&src.path)?
        .iter()
        .map(|p| ingest_bars(p, &src.schema))
        .collect::<Result<Vec<_>>>()?;
    let bars = BarSeries::concat(parts);
    let rejected = bars.rejected.len();
    let bars = resample_bars(&bars, 10)?;
    let panel = compute_returns(&bars, &TradingCalendar::new(vec![]), &src.returns)?;
    let out = cfg.output_dir.join(RETURNS_FILE);
    write_returns(&out, &panel)?;
    let notes = if rejected > 0 {
        vec![format!("{rejected} bar rows rejected")]
    } else {
        vec![]
    };
    write_manifest(cfg, "ingest", &[out], notes)
}

pub fn cmd_signals(cfg: &RunConfig) -> Result<Manifest> {
    let returns = load_returns(cfg)?;
    let (signals, diag) = build_signal_panel(&returns, &cfg.signals)?;
    let out = cfg.output_dir.join(SIGNALS_FILE);
    let mut w = create_file(&out)?;
    write_signal_panel_csv(&mut w, &signals)?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(&out, e))?;
    let diag_path = cfg.output_dir.join(SIGNAL_DIAGNOSTICS_FILE);
    fs::write(&diag_path, serde_json::to_vec_pretty(&diag)?).map_err(|e| Error::io(&diag_path, e))?;
    write_manifest(cfg, "signals", &[out, diag_path], vec![])
}

/// Runs one model at one horizon.
pub fn run_model(
    cfg: &RunConfig,
    model: ModelKind,
    h: Horizon,
    signals: &SignalPanel,
    returns: &ReturnPanel,
) -> Result<ForecastSet> {
    let hc = cfg.horizon_config(h);
    match model {
        ModelKind::Baseline => run_baseline(signals, returns, &hc, &cfg.training),
        ModelKind::Benchmark => run_benchmark(signals, returns, &hc, &cfg.training),
        ModelKind::Esn => run_esn(signals, returns, &hc, &cfg.training, &cfg.reservoir_spec(h)),
    }
}

pub fn cmd_backtest(cfg: &RunConfig) -> Result<Manifest> {
    let returns = load_returns(cfg)?;
    let (signals, note) = load_or_build_signals(cfg, &returns)?;
    let mut outputs = Vec::new();
    let mut notes: Vec<String> = note.into_iter().collect();
    for &h in &cfg.horizons {
        for &m in &cfg.models {
            let set = run_model(cfg, m, h, &signals, &returns)?;
            if set.is_empty() {
                return Err(Error::InsufficientHistory(format!(
                    "{} produced no {h} forecasts ({} skips)",
                    m.name(),
                    set.skipped.len()
                )));
            }
            if let Some(v) = set.audit.iter().find(|a| a.max_target_end > a.row) {
                return Err(Error::Invariant(format!("{} {h} trained on a target ending after {}", m.name(), v.time)));
            }
            if !set.skipped.is_empty() {
                notes.push(format!("{} {h}: {} skipped forecast times", m.name(), set.skipped.len()));
            }
            let path = forecast_path(&cfg.output_dir, m, h);
            let mut w = create_file(&path)?;
            set.write_csv(&mut w)?;
            std::io::Write::flush(&mut w).map_err(|e| Error::io(&path, e))?;
            info!("{} {h}: {} forecasts", m.name(), set.len());
            outputs.push(path);
        }
    }
    write_manifest(cfg, "backtest", &outputs, notes)
}

pub fn load_forecasts(cfg: &RunConfig) -> Result<Vec<ForecastSet>> {
    let mut sets = Vec::new();
    for &h in &cfg.horizons {
        for &m in &cfg.models {
            let path = forecast_path(&cfg.output_dir, m, h);
            let set = ForecastSet::read_csv(open_file(&path)?)?;
            if set.model != m.name() || set.horizon.is_some_and(|x| x != h) {
                return Err(Error::Data(format!("{} holds {} forecasts, expected {} at {h}", path.display(), set.model, m.name())));
            }
            sets.push(set);
        }
    }
    Ok(sets)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<(Manifest, EvaluationReport)> {
    let returns = load_returns(cfg)?;
    let sets = load_forecasts(cfg)?;
    let report = evaluate(&sets, &returns, &cfg.evaluation_options())?;
    let outputs = report.write_dir(&cfg.output_dir.join(REPORT_DIR))?;
    Ok((write_manifest(cfg, "evaluate", &outputs, vec![])?, report))
}

pub fn cmd_tune(cfg: &RunConfig) -> Result<Manifest> {
    let returns = load_returns(cfg)?;
    let days = cfg.tuning.presample_days;
    if days == 0 || days >= returns.n_days() {
        return Err(Error::Config(format!(
            "tuning.presample_days must lie in 1..{} for this panel, got {days}",
            returns.n_days()
        )));
    }
    let pre = returns.slice_days(0, days - 1);
    let evaluation_start = returns.dates().get(days).copied();
    let (signals, _) = build_signal_panel(&pre, &cfg.signals)?;
    let mut outputs = Vec::new();
    let dir = cfg.output_dir.join(TUNING_DIR);
    for &h in &cfg.horizons {
        let space = SearchSpace {
            seed: cfg.tuning.space.seed ^ cfg.seed,
            ..cfg.tuning.space.clone()
        };
        let r = tune(&space, &cfg.reservoir_spec(h), h, &signals, &pre, &cfg.horizon_config(h), &cfg.training, evaluation_start)?;
        let log = dir.join(format!("trials_{}.csv", h.label()));
        let mut w = create_file(&log)?;
        r.write_trial_log(&mut w)?;
        std::io::Write::flush(&mut w).map_err(|e| Error::io(&log, e))?;
        let frag = dir.join(format!("spec_{}.json", h.label()));
        fs::write(&frag, serde_json::to_vec_pretty(&r.fragment())?).map_err(|e| Error::io(&frag, e))?;
        outputs.extend([log, frag]);
    }
    write_manifest(cfg, "tune", &outputs, vec![])
}

/// Merges spec fragments written by `tune` into a configuration value.
pub fn merge_fragment(config: &mut Value, fragment: &Value) -> Result<()> {
    let specs = fragment
        .get("reservoir")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::Config("fragment has no reservoir object".into()))?;
    let root = config.as_object_mut().ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
    let target = root.entry("reservoir").or_insert_with(|| Value::Object(Default::default()));
    let target = target.as_object_mut().ok_or_else(|| Error::Config("reservoir must be an object".into()))?;
    for (k, v) in specs {
        target.insert(k.clone(), v.clone());
    }
    Ok(())
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    x.map(|v| format!("{v:.digits$}")).unwrap_or_else(|| "n/a".into())
}

/// Plain-text tables from an evaluation report.
pub fn render_summary(report: &EvaluationReport) -> String {
    let mut s = String::new();
    s.push_str("MSFE (relative to baseline)\n");
    for hr in &report.horizons {
        for m in &hr.models {
            s.push_str(&format!(
                "{:>6}  {:<10} {:.6e} {}\n",
                hr.horizon.label(),
                m.model,
                m.msfe,
                m.relative_reduction.as_deref().unwrap_or("")
            ));
        }
    }
    s.push_str("\nPooled R2 (zero benchmark / cross-sectional mean benchmark)\n");
    for hr in &report.horizons {
        for m in &hr.models {
            s.push_str(&format!(
                "{:>6}  {:<10} {} / {}\n",
                hr.horizon.label(),
                m.model,
                fmt_opt(m.r2.zero_benchmark, 6),
                fmt_opt(m.r2.mean_benchmark, 6)
            ));
        }
    }
    if report.horizons.iter().any(|h| !h.dm.is_empty()) {
        s.push_str("\nDiebold-Mariano (positive: first model has larger loss)\n");
        for hr in &report.horizons {
            for p in &hr.dm {
                let stat = match p.outcome.statistic() {
                    Some(v) => format!("{v:.4}"),
                    None => "equal by construction".into(),
                };
                s.push_str(&format!(
                    "{:>6}  {} vs {}: {} (p = {})\n",
                    hr.horizon.label(),
                    p.model_a,
                    p.model_b,
                    stat,
                    fmt_opt(p.outcome.p_value(), 4)
                ));
            }
        }
    }
    if report.horizons.iter().any(|h| h.mcs.is_some()) {
        s.push_str("\nModel confidence set (inclusion, cumulative p-value)\n");
        for hr in &report.horizons {
            if let Some(r) = &hr.mcs {
                for (k, name) in r.models.iter().enumerate() {
                    s.push_str(&format!(
                        "{:>6}  {:<10} {} {:.4}\n",
                        hr.horizon.label(),
                        name,
                        if r.included[k] { "in " } else { "out" },
                        r.p_values[k]
                    ));
                }
            }
        }
        if let Some(r) = report.horizons.iter().find_map(|h| h.mcs.as_ref()) {
            s.push_str(&format!("bootstrap: {} draws, {}\n", r.draws, r.block_rule));
        }
    }
    s
}

pub fn cmd_report(cfg: &RunConfig) -> Result<Manifest> {
    let dir = cfg.output_dir.join(REPORT_DIR);
    let path = dir.join("report.json");
    let report: EvaluationReport = serde_json::from_reader(open_file(&path)?)?;
    let summary = dir.join("summary.txt");
    fs::write(&summary, render_summary(&report)).map_err(|e| Error::io(&summary, e))?;
    let mut outputs = vec![summary];
    if cfg.robustness.models > 0 {
        let returns = load_returns(cfg)?;
        let (signals, _) = load_or_build_signals(cfg, &returns)?;
        for &h in &cfg.robustness.horizons {
            let r = robustness_study(
                &cfg.reservoir_spec(h),
                cfg.robustness.models,
                &signals,
                &returns,
                &cfg.horizon_config(h),
                &cfg.training,
            )?;
            let p = dir.join(format!("robustness_{}.csv", h.label()));
            let mut w = csv::Writer::from_writer(create_file(&p)?);
            w.write_record(["timestamp", "q05", "q25", "median", "q75", "q95"])?;
            for (k, t) in r.times.iter().enumerate() {
                let b = &r.bands;
                w.write_record([
                    t.to_string(),
                    b.q05[k].to_string(),
                    b.q25[k].to_string(),
                    b.median[k].to_string(),
                    b.q75[k].to_string(),
                    b.q95[k].to_string(),
                ])?;
            }
            w.flush().map_err(|e| Error::io(&p, e))?;
            outputs.push(p);
        }
    }
    write_manifest(cfg, "report", &outputs, vec![])
}
