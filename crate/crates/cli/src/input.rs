//! Reading `t,y` samples from CSV.

use std::io::Read;

use varform_core::{DesignGrid, Sample};

use crate::error::CliError;

/// Parses a CSV with header `t,y`; the design must be strictly increasing in `[0, 1]`.
///
/// Row numbers in messages count data rows from 1.
pub fn read_sample<R: Read>(reader: R) -> Result<Sample<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CliError::usage(format!("cannot read header: {e}")))?;
    if header.len() != 2 || &header[0] != "t" || &header[1] != "y" {
        return Err(CliError::usage(format!(
            "expected header 't,y', got '{}'",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| CliError::usage(format!("row {row}: {e}")))?;
        let field = |i: usize, name: &str| -> Result<f64, CliError> {
            let v: f64 = record[i].parse().map_err(|_| {
                CliError::usage(format!(
                    "row {row}: {name} = '{}' is not a number",
                    &record[i]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::usage(format!("row {row}: {name} is not finite")));
            }
            Ok(v)
        };
        let (ti, yi) = (field(0, "t")?, field(1, "y")?);
        if !(0.0..=1.0).contains(&ti) {
            return Err(CliError::usage(format!(
                "row {row}: t = {ti} lies outside [0, 1]"
            )));
        }
        if let Some(&prev) = t.last() {
            if ti <= prev {
                return Err(CliError::usage(format!(
                    "row {row}: t = {ti} is not greater than the previous value {prev}"
                )));
            }
        }
        t.push(ti);
        y.push(yi);
    }
    if t.is_empty() {
        return Err(CliError::usage("input has no data rows"));
    }
    let grid = DesignGrid::from_points(t).map_err(CliError::usage)?;
    Sample::new(grid, y).map_err(CliError::usage)
}

/// Writes a sample as `t,y` CSV with round-trip precision.
#[cfg(test)]
fn write_sample(sample: &Sample<f64>) -> String {
    let mut out = String::from("t,y\n");
    for (t, y) in sample.grid().points().iter().zip(sample.responses()) {
        out.push_str(&format!("{t:?},{y:?}\n"));
    }
    out
}
