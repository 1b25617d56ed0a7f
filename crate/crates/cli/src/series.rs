//! Ingestion of `time,value` CSV series.

use std::path::Path;

use chrono::NaiveDate;

use crate::error::{CliError, CliResult};

/// Relative tolerance on the spacing of numeric time stamps.
const SPACING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stamp {
    Real(f64),
    Date(NaiveDate),
}

impl Stamp {
    fn parse(raw: &str) -> Option<Stamp> {
        if let Ok(t) = raw.parse::<f64>() {
            return t.is_finite().then_some(Stamp::Real(t));
        }
        NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok().map(Stamp::Date)
    }
}

/// A uniformly spaced series. Time stamps are kept verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub times: Vec<String>,
    pub values: Vec<f64>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reads a CSV with `time` and `value` columns.
///
/// Times are either all reals or all ISO dates and must increase strictly.
/// Real times must also be evenly spaced; a skipped step is a gap. Date
/// stamps follow a trading calendar, so only order is checked. Empty or
/// non-numeric values are rejected, never imputed.
pub fn read_series(path: &Path) -> CliResult<Series> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CliError::Data(format!("{}: missing '{name}' column", path.display())))
    };
    let (ti, vi) = (column("time")?, column("value")?);

    let mut times = Vec::new();
    let mut stamps = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let t = rec.get(ti).unwrap_or("");
        let v = rec.get(vi).unwrap_or("");
        let stamp = Stamp::parse(t).ok_or_else(|| CliError::Data(format!("line {line}: bad time '{t}'")))?;
        let value = v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| CliError::Data(format!("line {line}: missing or non-numeric value '{v}'")))?;
        if let Some(prev) = stamps.last() {
            let increasing = match (prev, &stamp) {
                (Stamp::Real(a), Stamp::Real(b)) => b > a,
                (Stamp::Date(a), Stamp::Date(b)) => b > a,
                _ => return Err(CliError::Data(format!("line {line}: mixed date and numeric time stamps"))),
            };
            if !increasing {
                return Err(CliError::Data(format!("line {line}: time '{t}' does not increase")));
            }
        }
        times.push(t.to_string());
        stamps.push(stamp);
        values.push(value);
    }
    if values.is_empty() {
        return Err(CliError::Data(format!("{}: no observations", path.display())));
    }
    check_spacing(&stamps)?;
    Ok(Series { times, values })
}

fn check_spacing(stamps: &[Stamp]) -> CliResult<()> {
    let reals: Vec<f64> = stamps
        .iter()
        .filter_map(|s| match s {
            Stamp::Real(t) => Some(*t),
            Stamp::Date(_) => None,
        })
        .collect();
    if reals.len() < 3 {
        return Ok(());
    }
    let step = reals[1] - reals[0];
    for (i, w) in reals.windows(2).enumerate() {
        if ((w[1] - w[0]) - step).abs() > SPACING_TOL * step.abs() {
            return Err(CliError::Data(format!(
                "line {}: spacing {} differs from {step}; gaps are not imputed",
                i + 3,
                w[1] - w[0]
            )));
        }
    }
    Ok(())
}
