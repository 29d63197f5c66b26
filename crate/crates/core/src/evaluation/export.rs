use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{ForecastSet, SeriesValues};
use super::report::MetricReport;
use crate::{Error, Result};

/// One exported forecast point; `t` is the 0-based series index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub item_id: String,
    pub t: usize,
    pub forecast: f64,
}

/// One row of a metric export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub metric: String,
    pub value: f64,
    pub model: String,
    pub ensemble: bool,
    pub ci: Option<f64>,
}

pub fn forecast_rows(set: &ForecastSet) -> Vec<ForecastRow> {
    set.items
        .iter()
        .flat_map(|s| {
            s.values.iter().enumerate().map(move |(i, &v)| ForecastRow {
                item_id: s.item_id.clone(),
                t: s.offset + i,
                forecast: v,
            })
        })
        .collect()
}

/// JSON lines, one row per forecast point, grouped by series.
pub fn forecasts_to_jsonl(set: &ForecastSet) -> Result<String> {
    let mut out = String::new();
    for row in forecast_rows(set) {
        out.push_str(&serde_json::to_string(&row)?);
        out.push('\n');
    }
    Ok(out)
}

/// Reads a forecast export back; each item's rows must be consecutive in `t`.
pub fn forecasts_from_jsonl(text: &str, model_id: &str, dataset_id: &str) -> Result<ForecastSet> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: ForecastRow = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("forecast line {}: {e}", n + 1)))?;
        let entry = by_id.entry(row.item_id.clone()).or_insert_with(|| {
            order.push(row.item_id.clone());
            Vec::new()
        });
        entry.push((row.t, row.forecast));
    }
    let items = order
        .into_iter()
        .map(|id| {
            let mut points = by_id.remove(&id).unwrap_or_default();
            points.sort_by_key(|p| p.0);
            let offset = points[0].0;
            if points.iter().enumerate().any(|(i, p)| p.0 != offset + i) {
                return Err(Error::Data(format!(
                    "forecasts for {id} are not consecutive in t"
                )));
            }
            Ok(SeriesValues {
                item_id: id,
                offset,
                values: points.into_iter().map(|p| p.1).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForecastSet {
        model_id: model_id.to_string(),
        dataset_id: dataset_id.to_string(),
        items,
    })
}

pub fn metric_rows(report: &MetricReport) -> Vec<MetricRow> {
    let metric = report.metric.to_string();
    let mut rows: Vec<MetricRow> = report
        .models
        .iter()
        .map(|m| MetricRow {
            dataset: report.dataset.clone(),
            metric: metric.clone(),
            value: m.value,
            model: m.model.clone(),
            ensemble: false,
            ci: None,
        })
        .collect();
    if report.models.len() > 1 {
        rows.push(MetricRow {
            dataset: report.dataset.clone(),
            metric: metric.clone(),
            value: report.mean,
            model: "mean".into(),
            ensemble: false,
            ci: Some(report.ci),
        });
    }
    if let Some(v) = report.ensemble {
        rows.push(MetricRow {
            dataset: report.dataset.clone(),
            metric,
            value: v,
            model: "median-ensemble".into(),
            ensemble: true,
            ci: None,
        });
    }
    rows
}

pub fn report_to_jsonl(report: &MetricReport) -> Result<String> {
    let mut out = String::new();
    for row in metric_rows(report) {
        out.push_str(&serde_json::to_string(&row)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let name = path
        .file_name()
        .ok_or_else(|| Error::Data(format!("{} is not a file path", path.display())))?;
    let tmp = match dir {
        Some(d) => d.join(format!(".{}.tmp", name.to_string_lossy())),
        None => Path::new(&format!(".{}.tmp", name.to_string_lossy())).to_path_buf(),
    };
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
