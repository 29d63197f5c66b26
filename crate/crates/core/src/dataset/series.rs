use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Frequency;
use crate::{Error, Result};

/// One univariate series `z_1..z_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub item_id: String,
    pub start: NaiveDateTime,
    pub freq: Frequency,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(item_id: impl Into<String>, freq: Frequency, values: Vec<f64>) -> Self {
        Self {
            item_id: item_id.into(),
            start: NaiveDate::from_ymd_opt(2000, 1, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid epoch"),
            freq,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sidecar metadata of a dataset file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetMeta {
    pub freq: Frequency,
    pub prediction_length: usize,
}

#[derive(Serialize, Deserialize)]
struct RawMeta {
    freq: String,
    prediction_length: usize,
}

impl DatasetMeta {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: RawMeta = serde_json::from_str(&text).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        if raw.prediction_length == 0 {
            return Err(Error::Data(format!(
                "{}: prediction_length must be at least 1",
                path.display()
            )));
        }
        Ok(Self {
            freq: raw.freq.parse()?,
            prediction_length: raw.prediction_length,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let raw = RawMeta {
            freq: self.freq.token().to_string(),
            prediction_length: self.prediction_length,
        };
        let text = serde_json::to_string_pretty(&raw)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// A collection of series sharing one frequency and prediction length.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub series: Vec<TimeSeries>,
}

impl Dataset {
    /// Loads a JSON-lines file together with its metadata sidecar.
    ///
    /// The sidecar is `<stem>.meta.json` next to the data file, falling back
    /// to `metadata.json` in the same directory.
    pub fn load(path: &Path) -> Result<Self> {
        let meta_path = sidecar_path(path)?;
        let meta = DatasetMeta::load(&meta_path)?;
        let series = load_dataset(path, &meta)?;
        Ok(Self { meta, series })
    }

    /// Writes the series as JSON lines plus a `<stem>.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_dataset(path, &self.series)?;
        self.meta.save(&meta_path_for(path))
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

pub fn meta_path_for(data: &Path) -> PathBuf {
    let stem = data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    data.with_file_name(format!("{stem}.meta.json"))
}

fn sidecar_path(data: &Path) -> Result<PathBuf> {
    let own = meta_path_for(data);
    if own.exists() {
        return Ok(own);
    }
    let shared = data.with_file_name("metadata.json");
    if shared.exists() {
        return Ok(shared);
    }
    Err(Error::Data(format!(
        "no metadata for {} (looked for {} and {})",
        data.display(),
        own.display(),
        shared.display()
    )))
}

fn parse_start(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    // pandas monthly periods, e.g. "1750-01"
    NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

fn parse_target(values: &[Value]) -> std::result::Result<Vec<f64>, String> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = match v {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => s.trim().parse::<f64>().ok(),
                _ => None,
            };
            match x {
                Some(x) if x.is_finite() => Ok(x),
                _ => Err(format!("target[{i}] = {v} is not a finite number")),
            }
        })
        .collect()
}

/// Parses newline-delimited records `{start, target, item_id?}`.
pub fn load_dataset(path: &Path, meta: &DatasetMeta) -> Result<Vec<TimeSeries>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, path, meta.freq)
}

pub(crate) fn parse_records(text: &str, path: &Path, freq: Frequency) -> Result<Vec<TimeSeries>> {
    let record_err = |line: usize, reason: String| Error::Record {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: Value = serde_json::from_str(raw).map_err(|e| record_err(line, e.to_string()))?;
        let start = rec
            .get("start")
            .and_then(Value::as_str)
            .ok_or_else(|| record_err(line, "missing string field `start`".into()))?;
        let start = parse_start(start)
            .ok_or_else(|| record_err(line, format!("unparseable start {start:?}")))?;
        let target = rec
            .get("target")
            .and_then(Value::as_array)
            .ok_or_else(|| record_err(line, "missing array field `target`".into()))?;
        let values = parse_target(target).map_err(|r| record_err(line, r))?;
        if values.is_empty() {
            return Err(record_err(line, "empty target".into()));
        }
        let base = match rec.get("item_id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            Some(Value::Null) | None => out.len().to_string(),
            Some(other) => return Err(record_err(line, format!("bad item_id {other}"))),
        };
        let mut id = base.clone();
        let mut k = 1;
        while !seen.insert(id.clone()) {
            id = format!("{base}_{k}");
            k += 1;
        }
        out.push(TimeSeries {
            item_id: id,
            start,
            freq,
            values,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct OutRecord<'a> {
    item_id: &'a str,
    start: String,
    target: &'a [f64],
}

pub fn write_dataset(path: &Path, series: &[TimeSeries]) -> Result<()> {
    let mut buf = Vec::new();
    for s in series {
        let rec = OutRecord {
            item_id: &s.item_id,
            start: s.start.format("%Y-%m-%d %H:%M:%S").to_string(),
            target: &s.values,
        };
        serde_json::to_writer(&mut buf, &rec)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Splits off the last `horizon` points of every series.
///
/// The train split holds the truncated series; the test split keeps the
/// originals, whose tails are the evaluation targets. Series not longer than
/// `horizon` appear in neither.
pub fn split_train_test(
    series: &[TimeSeries],
    horizon: usize,
) -> Result<(Vec<TimeSeries>, Vec<TimeSeries>)> {
    if horizon == 0 {
        return Err(Error::config("horizon", "must be at least 1"));
    }
    let mut train = Vec::with_capacity(series.len());
    let mut test = Vec::with_capacity(series.len());
    for s in series {
        if s.len() <= horizon {
            log::warn!(
                "series {} has {} points, not more than horizon {horizon}; dropped",
                s.item_id,
                s.len()
            );
            continue;
        }
        let mut t = s.clone();
        t.values.truncate(s.len() - horizon);
        train.push(t);
        test.push(s.clone());
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<TimeSeries>> {
        parse_records(text, Path::new("mem.json"), Frequency::Hourly)
    }

    #[test]
    fn parses_minimal_record() {
        let s = parse(r#"{"start":"2015-01-01 00:00:00","target":[1,2,3]}"#).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].values, vec![1.0, 2.0, 3.0]);
        assert_eq!(s[0].item_id, "0");
        assert_eq!(s[0].freq, Frequency::Hourly);
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("\n\n").unwrap().is_empty());
    }

    #[test]
    fn nan_target_reports_line() {
        let text = "{\"start\":\"2015-01-01\",\"target\":[1]}\n{\"start\":\"2015-01-01\",\"target\":[1,\"NaN\"]}\n";
        match parse(text) {
            Err(Error::Record { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = "{\"start\":\"2015-01-01\",\"target\":[1]}\n\n{oops\n";
        match parse(text) {
            Err(Error::Record { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_disambiguated() {
        let text = r#"{"start":"2015-01-01","target":[1],"item_id":"a"}
{"start":"2015-01-01","target":[2],"item_id":"a"}
{"start":"2015-01-01","target":[3]}"#;
        let s = parse(text).unwrap();
        let ids: Vec<_> = s.iter().map(|s| s.item_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "a_1", "2"]);
    }

    #[test]
    fn unknown_frequency_in_meta() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metadata.json");
        fs::write(&p, r#"{"freq":"7min","prediction_length":3}"#).unwrap();
        assert!(DatasetMeta::load(&p).is_err());
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("toy.jsonl");
        let ds = Dataset {
            meta: DatasetMeta {
                freq: Frequency::Monthly,
                prediction_length: 18,
            },
            series: vec![
                TimeSeries::new("x", Frequency::Monthly, vec![1.5, 2.25, 1e-3]),
                TimeSeries::new("y", Frequency::Monthly, vec![0.1]),
            ],
        };
        ds.save(&p).unwrap();
        let back = Dataset::load(&p).unwrap();
        assert_eq!(back.meta, ds.meta);
        assert_eq!(back.series, ds.series);
    }

    #[test]
    fn split_examples() {
        let s24 = TimeSeries::new("a", Frequency::Monthly, (0..24).map(f64::from).collect());
        let s18 = TimeSeries::new("b", Frequency::Monthly, (0..18).map(f64::from).collect());
        let s30 = TimeSeries::new("c", Frequency::Monthly, (0..30).map(f64::from).collect());
        let (train, test) = split_train_test(&[s24.clone(), s18, s30], 18).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(test.len(), 2);
        assert_eq!(train[0].len(), 6);
        assert_eq!(&test[0].values[6..], &s24.values[6..]);
        assert_eq!(train[0].item_id, "a");
        assert_eq!(train[1].item_id, "c");
        assert!(split_train_test(&[s24], 0).is_err());
    }
}
