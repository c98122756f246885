//! The characterization dataset as CSV: flag columns in flag-space order,
//! then metric columns.

use std::path::Path;

use flagtune_core::executor::TrialRecord;
use flagtune_core::flagspace::{Configuration, FlagSpace, FlagValue};

use crate::error::{CliError, Result};

/// Text form of a flag value; reals keep 17 significant digits.
pub fn format_value(v: &FlagValue) -> String {
    match v {
        FlagValue::Real(r) => format!("{r:.16e}"),
        other => other.to_string(),
    }
}

fn parse_value(space: &FlagSpace, name: &str, text: &str) -> Result<FlagValue> {
    let spec = space.spec(name).ok_or_else(|| CliError::Data(format!("unknown flag column `{name}`")))?;
    let raw = match text {
        "true" => FlagValue::Bool(true),
        "false" => FlagValue::Bool(false),
        t => t
            .parse::<i64>()
            .map(FlagValue::Int)
            .or_else(|_| t.parse::<f64>().map(FlagValue::Real))
            .unwrap_or_else(|_| FlagValue::Text(t.to_string())),
    };
    spec.domain.coerce(&raw).map_err(|e| CliError::Data(format!("column `{name}`: {e}")))
}

/// Writes the successful trials of `records`.
pub fn write_dataset<'a>(
    path: &Path,
    space: &FlagSpace,
    metrics: &[String],
    records: impl IntoIterator<Item = &'a TrialRecord>,
) -> Result<usize> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let names = space.names();
    w.write_record(names.iter().chain(metrics)).map_err(|e| csv_err(path, e))?;
    let mut rows = 0;
    for rec in records.into_iter().filter(|r| r.is_ok()) {
        let mut row: Vec<String> = Vec::with_capacity(names.len() + metrics.len());
        for n in &names {
            let v = rec.config.get(n).ok_or_else(|| CliError::Data(format!("trial lacks flag `{n}`")))?;
            row.push(format_value(v));
        }
        row.extend(metrics.iter().map(|m| rec.metric(m).map(|v| format!("{v:.16e}")).unwrap_or_default()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
        rows += 1;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(rows)
}

/// Configurations and metric values read back from a dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub configs: Vec<Configuration>,
    pub values: Vec<f64>,
}

impl Dataset {
    /// Unit-cube encodings under `space`.
    pub fn encoded(&self, space: &FlagSpace) -> Result<Vec<Vec<f64>>> {
        Ok(self.configs.iter().map(|c| space.encode(c)).collect::<flagtune_core::Result<_>>()?)
    }
}

/// Reads the dataset at `path`, keeping the flag columns of `space` and the
/// `metric` column. Rows with an empty metric cell are skipped.
pub fn read_dataset(path: &Path, space: &FlagSpace, metric: &str) -> Result<Dataset> {
    if !path.exists() {
        return Err(CliError::Dependency(format!(
            "dataset {} not found; run `datagen` first",
            path.display()
        )));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let metric_col = col(metric)
        .ok_or_else(|| CliError::Data(format!("{}: missing column `{metric}`", path.display())))?;
    let names = space.names();
    let flag_cols = names
        .iter()
        .map(|n| col(n).ok_or_else(|| CliError::Data(format!("{}: missing column `{n}`", path.display()))))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Dataset { configs: Vec::new(), values: Vec::new() };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let cell = rec.get(metric_col).unwrap_or("");
        if cell.is_empty() {
            continue;
        }
        let y: f64 = cell
            .parse()
            .map_err(|_| CliError::Data(format!("{} row {}: bad `{metric}` value `{cell}`", path.display(), line + 2)))?;
        if !y.is_finite() {
            return Err(CliError::Data(format!("{} row {}: non-finite `{metric}`", path.display(), line + 2)));
        }
        let mut cfg = Configuration::new();
        for (n, &c) in names.iter().zip(&flag_cols) {
            cfg.set(n.clone(), parse_value(space, n, rec.get(c).unwrap_or(""))?);
        }
        out.configs.push(cfg);
        out.values.push(y);
    }
    if out.values.is_empty() {
        return Err(CliError::Data(format!("{}: no usable rows", path.display())));
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Data(format!("{}: {other:?}", path.display())),
    }
}
