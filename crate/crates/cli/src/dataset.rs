//! Reading and writing ensemble datasets.
//!
//! CSV input is long format: a forecast file with columns
//! `case_id,member,dim_1..dim_d` (one row per member) and an optional
//! observation file with columns `case_id,dim_1..dim_d`. JSONL input has one
//! case per line: `{"id": ..., "ensemble": [[...], ...], "obs": [...]}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use clap::ValueEnum;
use kernelscore::{Ensemble, ForecastCase};
use serde::{Deserialize, Serialize};

use crate::error::{with_path, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub id: String,
    pub ensemble: Ensemble,
    pub observation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDataset {
    pub cases: Vec<Case>,
    pub dim: usize,
}

impl EnsembleDataset {
    /// Cases paired with observations; fails if any observation is missing.
    pub fn forecast_cases(&self) -> CliResult<Vec<ForecastCase>> {
        self.cases
            .iter()
            .map(|c| {
                let y = c
                    .observation
                    .clone()
                    .ok_or_else(|| CliError::data(format!("case '{}' has no observation", c.id)))?;
                Ok(ForecastCase::new(c.ensemble.clone(), y)?)
            })
            .collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.cases.iter().map(|c| c.id.as_str()).collect()
    }
}

/// Formats a float with 17 significant digits, enough to round-trip exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_dataset(forecasts: &Path, observations: Option<&Path>, format: Format) -> CliResult<EnsembleDataset> {
    match format {
        Format::Csv => read_csv(forecasts, observations),
        Format::Jsonl => {
            if observations.is_some() {
                return Err(CliError::Usage("JSONL input carries observations inline; drop --obs".into()));
            }
            read_jsonl(forecasts)
        }
    }
}

fn dim_columns(headers: &csv::StringRecord, fixed: &[&str], path: &Path) -> CliResult<usize> {
    for (i, name) in fixed.iter().enumerate() {
        if headers.get(i) != Some(name) {
            return Err(CliError::data(format!(
                "{}: line 1: column {} must be '{name}', found '{}'",
                path.display(),
                i + 1,
                headers.get(i).unwrap_or("")
            )));
        }
    }
    let d = headers.len() - fixed.len();
    if d == 0 {
        return Err(CliError::data(format!("{}: line 1: no dim_ columns", path.display())));
    }
    for j in 0..d {
        let expected = format!("dim_{}", j + 1);
        if headers.get(fixed.len() + j) != Some(expected.as_str()) {
            return Err(CliError::data(format!(
                "{}: line 1: expected column '{expected}', found '{}'",
                path.display(),
                headers.get(fixed.len() + j).unwrap_or("")
            )));
        }
    }
    Ok(d)
}

fn parse_values(record: &csv::StringRecord, from: usize, path: &Path) -> CliResult<Vec<f64>> {
    let line = record.position().map_or(0, |p| p.line());
    record
        .iter()
        .skip(from)
        .map(|field| {
            field.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                CliError::data(format!("{}: line {line}: '{field}' is not a finite number", path.display()))
            })
        })
        .collect()
}

fn read_csv(forecasts: &Path, observations: Option<&Path>) -> CliResult<EnsembleDataset> {
    let mut reader = with_path(csv::Reader::from_path(forecasts), forecasts)?;
    let headers = with_path(reader.headers(), forecasts)?.clone();
    let dim = dim_columns(&headers, &["case_id", "member"], forecasts)?;

    let mut order: Vec<String> = Vec::new();
    let mut members: HashMap<String, Vec<f64>> = HashMap::new();
    for record in reader.records() {
        let record = with_path(record, forecasts)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 2 {
            return Err(CliError::data(format!(
                "{}: line {line}: expected {} fields, found {}",
                forecasts.display(),
                dim + 2,
                record.len()
            )));
        }
        let id = record[0].to_string();
        let values = parse_values(&record, 2, forecasts)?;
        members
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .extend(values);
    }
    if order.is_empty() {
        return Err(CliError::data(format!("{}: no forecast rows", forecasts.display())));
    }

    let mut obs: HashMap<String, Vec<f64>> = HashMap::new();
    if let Some(path) = observations {
        let mut reader = with_path(csv::Reader::from_path(path), path)?;
        let headers = with_path(reader.headers(), path)?.clone();
        let obs_dim = dim_columns(&headers, &["case_id"], path)?;
        if obs_dim != dim {
            return Err(CliError::data(format!(
                "{}: observations have {obs_dim} dimensions but forecasts have {dim}",
                path.display()
            )));
        }
        for record in reader.records() {
            let record = with_path(record, path)?;
            let line = record.position().map_or(0, |p| p.line());
            let id = record[0].to_string();
            if !members.contains_key(&id) {
                return Err(CliError::data(format!(
                    "{}: line {line}: observation for unknown case_id '{id}'",
                    path.display()
                )));
            }
            if obs.insert(id.clone(), parse_values(&record, 1, path)?).is_some() {
                return Err(CliError::data(format!("{}: line {line}: duplicate case_id '{id}'", path.display())));
            }
        }
    }

    let cases = order
        .into_iter()
        .map(|id| {
            let data = members.remove(&id).unwrap_or_default();
            let ensemble = Ensemble::from_flat(data, dim).map_err(|e| CliError::data(format!("case '{id}': {e}")))?;
            let observation = obs.remove(&id);
            Ok(Case { id, ensemble, observation })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(EnsembleDataset { cases, dim })
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonCase {
    id: String,
    ensemble: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    obs: Option<Vec<f64>>,
}

fn read_jsonl(path: &Path) -> CliResult<EnsembleDataset> {
    let file = with_path(File::open(path), path)?;
    let mut cases = Vec::new();
    let mut dim = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = with_path(line, path)?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let parsed: JsonCase = serde_json::from_str(&line)
            .map_err(|e| CliError::data(format!("{}: line {lineno}: {e}", path.display())))?;
        let ensemble = Ensemble::from_rows(&parsed.ensemble)
            .map_err(|e| CliError::data(format!("{}: line {lineno}: {e}", path.display())))?;
        let d = *dim.get_or_insert(ensemble.dim());
        if ensemble.dim() != d || parsed.obs.as_ref().is_some_and(|o| o.len() != d) {
            return Err(CliError::data(format!(
                "{}: line {lineno}: inconsistent dimension (expected {d})",
                path.display()
            )));
        }
        cases.push(Case { id: parsed.id, ensemble, observation: parsed.obs });
    }
    let dim = dim.ok_or_else(|| CliError::data(format!("{}: no cases", path.display())))?;
    Ok(EnsembleDataset { cases, dim })
}

/// Writes a forecast file in long CSV format.
pub fn write_forecasts_csv<'a>(
    path: &Path,
    dim: usize,
    cases: impl IntoIterator<Item = (&'a str, &'a Ensemble)>,
) -> CliResult<()> {
    let mut w = with_path(csv::Writer::from_path(path), path)?;
    let mut header = vec!["case_id".to_string(), "member".to_string()];
    header.extend((1..=dim).map(|j| format!("dim_{j}")));
    with_path(w.write_record(&header), path)?;
    for (id, ens) in cases {
        for (m, row) in ens.iter().enumerate() {
            let mut rec = vec![id.to_string(), (m + 1).to_string()];
            rec.extend(row.iter().map(|v| fmt_f64(*v)));
            with_path(w.write_record(&rec), path)?;
        }
    }
    with_path(w.flush(), path)
}

/// Writes a dataset in the given format; CSV observations go to `obs_path`.
pub fn write_dataset(data: &EnsembleDataset, path: &Path, obs_path: Option<&Path>, format: Format) -> CliResult<()> {
    match format {
        Format::Csv => {
            write_forecasts_csv(path, data.dim, data.cases.iter().map(|c| (c.id.as_str(), &c.ensemble)))?;
            if let Some(op) = obs_path {
                let mut w = with_path(csv::Writer::from_path(op), op)?;
                let mut header = vec!["case_id".to_string()];
                header.extend((1..=data.dim).map(|j| format!("dim_{j}")));
                with_path(w.write_record(&header), op)?;
                for c in &data.cases {
                    if let Some(y) = &c.observation {
                        let mut rec = vec![c.id.clone()];
                        rec.extend(y.iter().map(|v| fmt_f64(*v)));
                        with_path(w.write_record(&rec), op)?;
                    }
                }
                with_path(w.flush(), op)?;
            }
            Ok(())
        }
        Format::Jsonl => {
            let mut f = with_path(File::create(path), path)?;
            for c in &data.cases {
                let jc = JsonCase {
                    id: c.id.clone(),
                    ensemble: c.ensemble.iter().map(|r| r.to_vec()).collect(),
                    obs: c.observation.clone(),
                };
                let line = serde_json::to_string(&jc).map_err(|e| CliError::data(e.to_string()))?;
                with_path(writeln!(f, "{line}"), path)?;
            }
            Ok(())
        }
    }
}
