use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dm::{diebold_mariano, DmOutcome};
use super::mcs::{model_confidence_set, McsOptions, McsResult};
use super::metrics::{AlignedForecasts, R2};
use crate::error::{Error, Result};
use crate::market_data::{GridTime, Horizon, ReturnPanel, PREDICTION_SLOTS};
use crate::training::{ForecastSet, BASELINE};

/// Grid steps over which consecutive forecasts overlap: the horizon length,
/// or a full session for end-of-day forecasts.
pub fn overlap_steps(h: Horizon) -> usize {
    h.steps().unwrap_or(PREDICTION_SLOTS)
}

/// Percentage change against the baseline, e.g. `[-0.8775%]`.
pub fn format_relative_reduction(relative: f64) -> String {
    let pct = 100.0 * relative;
    // avoid "-0.0000"
    let pct = if pct.abs() < 5e-5 { 0.0 } else { pct };
    format!("[{pct:.4}%]")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct EvaluationOptions {
    pub mcs: McsOptions,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    /// Terminal cuMSFE.
    pub msfe: f64,
    /// `msfe / msfe_baseline - 1`, when a baseline is present.
    pub relative_to_baseline: Option<f64>,
    pub relative_reduction: Option<String>,
    pub r2: R2,
    pub n_events: usize,
    pub n_forecasts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmPair {
    pub model_a: String,
    pub model_b: String,
    pub outcome: DmOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: Horizon,
    pub zero_forecast_msfe: f64,
    pub models: Vec<ModelMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dm: Vec<DmPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcs: Option<McsResult>,
    pub times: Vec<GridTime>,
    /// cuMSFE path per model, in `models` order.
    pub cumsfe: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub options: EvaluationOptions,
    pub horizons: Vec<HorizonReport>,
}

/// Evaluates forecast sets grouped by horizon; every horizon must carry the
/// same models.
pub fn evaluate(sets: &[ForecastSet], returns: &ReturnPanel, opts: &EvaluationOptions) -> Result<EvaluationReport> {
    let mut by_h: BTreeMap<Horizon, BTreeMap<&str, &ForecastSet>> = BTreeMap::new();
    for s in sets {
        let h = s.horizon.ok_or_else(|| Error::Data(format!("forecast set {} has no horizon", s.model)))?;
        if by_h.entry(h).or_default().insert(s.model.as_str(), s).is_some() {
            return Err(Error::Data(format!("duplicate forecast set for {} at {h}", s.model)));
        }
    }
    if by_h.is_empty() {
        return Err(Error::Data("no forecast sets to evaluate".into()));
    }
    let models: Vec<&str> = by_h.values().next().expect("non-empty").keys().copied().collect();
    for (h, m) in &by_h {
        if m.keys().copied().collect::<Vec<_>>() != models {
            return Err(Error::Data(format!(
                "model/horizon mismatch: {h} has {:?}, expected {models:?}",
                m.keys().collect::<Vec<_>>()
            )));
        }
    }
    let horizons = by_h
        .into_iter()
        .map(|(h, m)| horizon_report(h, &m.into_values().collect::<Vec<_>>(), returns, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport { options: *opts, horizons })
}

fn horizon_report(h: Horizon, sets: &[&ForecastSet], returns: &ReturnPanel, opts: &EvaluationOptions) -> Result<HorizonReport> {
    let aligned = AlignedForecasts::align(sets, returns)?;
    let losses: Vec<Vec<f64>> = (0..aligned.n_models()).map(|m| aligned.losses(m)).collect();
    let series: Vec<_> = (0..aligned.n_models()).map(|m| aligned.msfe(m)).collect();
    let zero = aligned.zero_forecast_losses();
    let zero_forecast_msfe = zero.iter().sum::<f64>() / zero.len() as f64;
    let base = aligned.models.iter().position(|m| m == BASELINE).map(|b| series[b].total());
    let models = aligned
        .models
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let msfe = series[m].total();
            let rel = base.map(|b| msfe / b - 1.0);
            ModelMetrics {
                model: name.clone(),
                msfe,
                relative_to_baseline: rel,
                relative_reduction: rel.map(format_relative_reduction),
                r2: aligned.r2(m),
                n_events: aligned.times.len(),
                n_forecasts: aligned.n_forecasts(),
            }
        })
        .collect();
    let mut dm = Vec::new();
    for a in 0..aligned.n_models() {
        for b in a + 1..aligned.n_models() {
            dm.push(DmPair {
                model_a: aligned.models[a].clone(),
                model_b: aligned.models[b].clone(),
                outcome: diebold_mariano(&losses[a], &losses[b], overlap_steps(h))?,
            });
        }
    }
    let mcs = if aligned.n_models() > 1 {
        Some(model_confidence_set(&aligned.models, &losses, &opts.mcs)?)
    } else {
        None
    };
    Ok(HorizonReport {
        horizon: h,
        zero_forecast_msfe,
        models,
        dm,
        mcs,
        times: aligned.times.clone(),
        cumsfe: series.into_iter().map(|s| s.cumsfe).collect(),
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl EvaluationReport {
    pub fn horizon(&self, h: Horizon) -> Option<&HorizonReport> {
        self.horizons.iter().find(|r| r.horizon == h)
    }

    /// Writes `report.json`, the flat tables and per-horizon plot data.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: String, body: Vec<u8>| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            written.push(p);
            Ok(())
        };
        put("report.json".into(), serde_json::to_vec_pretty(self)?)?;

        let table = |header: &[&str], rows: Vec<Vec<String>>| -> Result<Vec<u8>> {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header)?;
            for r in rows {
                w.write_record(&r)?;
            }
            w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
        };

        let mut msfe = Vec::new();
        let mut r2 = Vec::new();
        let mut dm = Vec::new();
        let mut mcs = Vec::new();
        for hr in &self.horizons {
            let h = hr.horizon.label().to_string();
            for m in &hr.models {
                msfe.push(vec![
                    h.clone(),
                    m.model.clone(),
                    m.msfe.to_string(),
                    m.relative_reduction.clone().unwrap_or_default(),
                    hr.zero_forecast_msfe.to_string(),
                    m.n_events.to_string(),
                ]);
                r2.push(vec![h.clone(), m.model.clone(), opt(m.r2.zero_benchmark), opt(m.r2.mean_benchmark)]);
            }
            for p in &hr.dm {
                let kind = match p.outcome {
                    DmOutcome::Statistic { .. } => "statistic",
                    DmOutcome::Dominance { .. } => "dominance",
                    DmOutcome::Equal => "equal by construction",
                };
                dm.push(vec![
                    h.clone(),
                    p.model_a.clone(),
                    p.model_b.clone(),
                    opt(p.outcome.statistic()),
                    opt(p.outcome.p_value()),
                    kind.into(),
                ]);
            }
            if let Some(r) = &hr.mcs {
                for (k, name) in r.models.iter().enumerate() {
                    mcs.push(vec![
                        h.clone(),
                        name.clone(),
                        (r.included[k] as u8).to_string(),
                        format!("{:.4}", r.p_values[k]),
                    ]);
                }
            }
            let mut header = vec!["timestamp".to_string()];
            header.extend(hr.models.iter().map(|m| format!("cumsfe_{}", m.model)));
            let base = hr.models.iter().position(|m| m.model == BASELINE);
            if base.is_some() {
                header.extend(hr.models.iter().map(|m| format!("relative_{}", m.model)));
            }
            let rows = (0..hr.times.len())
                .map(|k| {
                    let mut row = vec![hr.times[k].to_string()];
                    row.extend(hr.cumsfe.iter().map(|c| c[k].to_string()));
                    if let Some(b) = base {
                        row.extend(hr.cumsfe.iter().map(|c| (c[k] / hr.cumsfe[b][k] - 1.0).to_string()));
                    }
                    row
                })
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            put(format!("plot_{h}.csv"), table(&header, rows)?)?;
        }
        put(
            "msfe.csv".into(),
            table(&["horizon", "model", "msfe", "relative_reduction", "zero_forecast_msfe", "events"], msfe)?,
        )?;
        put("r2.csv".into(), table(&["horizon", "model", "r2_zero", "r2_mean"], r2)?)?;
        if !dm.is_empty() {
            put("dm.csv".into(), table(&["horizon", "model_a", "model_b", "statistic", "p_value", "outcome"], dm)?)?;
        }
        if !mcs.is_empty() {
            put("mcs.csv".into(), table(&["horizon", "model", "included", "p_value"], mcs)?)?;
        }
        Ok(written)
    }
}
