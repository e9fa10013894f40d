//! Output formats. JSON is the canonical form and round-trips exactly; CSV
//! keeps 12 significant digits per number.

use std::io::{Read, Write};

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Formats `v` to 12 significant digits, ties to even, in its shortest form.
pub fn sig12(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}")
        .parse()
        .expect("formatted float reparses");
    rounded.to_string()
}

/// One CSV record of a dataset.
pub trait CsvRow: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// A report with a canonical JSON form and a flat CSV projection.
pub trait Dataset: Serialize + DeserializeOwned {
    type Row: CsvRow;
    fn rows(&self) -> Vec<Self::Row>;
}

pub fn write_csv<R: CsvRow, W: Write>(rows: &[R], out: W) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(R::HEADER)?;
    for row in rows {
        writer.write_record(row.fields())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<R: CsvRow, In: Read>(input: In) -> Result<Vec<R>, CliError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(R::HEADER.iter().copied()) {
        return Err(CliError::Parse(format!("unexpected CSV header {header:?}")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| CliError::Parse(e.to_string())))
        .collect()
}

pub fn emit<D: Dataset, W: Write>(data: &D, format: Format, mut out: W) -> Result<(), CliError> {
    match format {
        Format::Csv => write_csv(&data.rows(), out),
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, data)?;
            writeln!(out)?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(0.5), "0.5");
        assert_eq!(sig12(4.0), "4");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(2.0 / 3.0), "0.666666666667");
        assert_eq!(sig12(123456789.0123456), "123456789.012");
        assert_eq!(sig12(-1.5e-20), "-0.000000000000000000015");
    }

    #[test]
    fn exact_ties_go_to_even() {
        assert_eq!(sig12(100_000_000_000.5), "100000000000");
        assert_eq!(sig12(100_000_000_001.5), "100000000002");
    }

    #[test]
    fn shortest_form_reparses_within_tolerance() {
        for &v in &[std::f64::consts::PI, 1e-300, 6.02214076e23, -0.1, 0.0] {
            let back: f64 = sig12(v).parse().unwrap();
            assert!((back - v).abs() <= 5e-12 * v.abs(), "{v} -> {back}");
        }
    }
}
