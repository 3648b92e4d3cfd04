//! CSV tables of reals and the 10-significant-digit output format.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{MtarError, Result};
use crate::model::MultivariateSeries;

/// Rounds to 10 significant digits; non-finite values pass through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.9e}").parse().unwrap_or(x)
}

/// Text form of [`round_sig`]: the shortest representation that parses back
/// to the rounded value.
pub fn format_number(x: f64) -> String {
    let r = round_sig(x);
    let a = r.abs();
    if r == 0.0 {
        "0".into()
    } else if a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) => {
            if n.is_f64() {
                if let Some(f) = n.as_f64() {
                    if let Some(m) = serde_json::Number::from_f64(round_sig(f)) {
                        *n = m;
                    }
                }
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_json),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 10 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)
        .map_err(|e| MtarError::numerical(format!("serialization failed: {e}")))?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v)
        .map_err(|e| MtarError::numerical(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MtarError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| MtarError::Parse(format!("{}: {e}", path.display())))
}

/// A header row plus numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn parse(text: &str, source: &str) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| MtarError::Parse(format!("{source}: header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if columns.iter().all(|c| c.is_empty()) {
            return Err(MtarError::Parse(format!("{source}: missing header row")));
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row_no = i + 1;
            let record =
                record.map_err(|e| MtarError::Parse(format!("{source}: row {row_no}: {e}")))?;
            if record.len() != columns.len() {
                return Err(MtarError::Parse(format!(
                    "{source}: row {row_no}: expected {} fields, found {}",
                    columns.len(),
                    record.len()
                )));
            }
            let mut row = Vec::with_capacity(columns.len());
            for (cell, name) in record.iter().zip(&columns) {
                if cell.is_empty() {
                    return Err(MtarError::Parse(format!(
                        "{source}: row {row_no}, column {name}: missing value"
                    )));
                }
                let v: f64 = cell.parse().map_err(|_| {
                    MtarError::Parse(format!(
                        "{source}: row {row_no}, column {name}: '{cell}' is not a number"
                    ))
                })?;
                if !v.is_finite() {
                    return Err(MtarError::Parse(format!(
                        "{source}: row {row_no}, column {name}: non-finite value"
                    )));
                }
                row.push(v);
            }
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn read(path: &Path) -> Result<Table> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MtarError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| MtarError::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_number(*v)))
                .map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| MtarError::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    /// Numbered columns `prefix1, prefix2, …` present in the header; they
    /// must run from 1 without gaps.
    fn numbered(&self, prefix: &str, source: &str) -> Result<Vec<usize>> {
        let mut found: Vec<(usize, usize)> = Vec::new();
        for (i, c) in self.columns.iter().enumerate() {
            if let Some(rest) = c.strip_prefix(prefix) {
                if let Ok(n) = rest.parse::<usize>() {
                    found.push((n, i));
                }
            }
        }
        found.sort();
        for (want, (n, _)) in (1..).zip(&found) {
            if *n != want {
                return Err(MtarError::Parse(format!(
                    "{source}: columns {prefix}1..{prefix}n must be consecutive"
                )));
            }
        }
        Ok(found.into_iter().map(|(_, i)| i).collect())
    }

    fn check_known(&self, source: &str, allow_y: bool) -> Result<()> {
        for c in &self.columns {
            let numbered = |p: &str| {
                c.strip_prefix(p)
                    .is_some_and(|r| r.parse::<usize>().is_ok_and(|n| n >= 1))
            };
            if !(c == "z" || numbered("x") || (allow_y && numbered("y"))) {
                return Err(MtarError::Parse(format!(
                    "{source}: unexpected column '{c}'"
                )));
            }
        }
        Ok(())
    }

    fn matrix(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), cols.len(), |t, i| self.rows[t][cols[i]])
    }
}

/// Reads `y1..yk[, x1..xr], z` into a series.
pub fn parse_data_table(table: &Table, source: &str) -> Result<MultivariateSeries> {
    table.check_known(source, true)?;
    let ys = table.numbered("y", source)?;
    if ys.is_empty() {
        return Err(MtarError::Parse(format!(
            "{source}: no output columns y1..yk"
        )));
    }
    let xs = table.numbered("x", source)?;
    let z = table
        .column("z")
        .ok_or_else(|| MtarError::Parse(format!("{source}: missing column z")))?;
    if table.rows.is_empty() {
        return Err(MtarError::Parse(format!("{source}: no data rows")));
    }
    MultivariateSeries::new(
        table.matrix(&ys),
        table.matrix(&xs),
        table.rows.iter().map(|r| r[z]).collect(),
    )
}

pub fn parse_data_csv(path: &Path) -> Result<MultivariateSeries> {
    parse_data_table(&Table::read(path)?, &path.display().to_string())
}

/// Future exogenous values: `x1..xr`, optional `z`, optional true `y1..yk`.
#[derive(Debug, Clone)]
pub struct FuturePaths {
    pub x: DMatrix<f64>,
    pub z: Option<Vec<f64>>,
    pub y: Option<DMatrix<f64>>,
}

pub fn parse_future_csv(path: &Path) -> Result<FuturePaths> {
    let source = path.display().to_string();
    let table = Table::read(path)?;
    table.check_known(&source, true)?;
    let ys = table.numbered("y", &source)?;
    let xs = table.numbered("x", &source)?;
    Ok(FuturePaths {
        x: table.matrix(&xs),
        z: table
            .column("z")
            .map(|z| table.rows.iter().map(|r| r[z]).collect()),
        y: (!ys.is_empty()).then(|| table.matrix(&ys)),
    })
}

/// The data layout read by [`parse_data_csv`].
pub fn series_table(series: &MultivariateSeries) -> Table {
    let mut columns: Vec<String> = (1..=series.k()).map(|i| format!("y{i}")).collect();
    columns.extend((1..=series.r()).map(|i| format!("x{i}")));
    columns.push("z".into());
    let rows = (0..series.len())
        .map(|t| {
            let mut row: Vec<f64> = series.y().row(t).iter().copied().collect();
            row.extend(series.x().row(t).iter());
            row.push(series.z()[t]);
            row
        })
        .collect();
    Table { columns, rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_ten_digits() {
        assert_eq!(round_sig(1.234_567_890_123), 1.234_567_890);
        assert_eq!(format_number(0.1 + 0.2), "0.3");
        assert_eq!(format_number(-2.5e-12), "-2.5e-12");
        assert_eq!(round_sig(f64::NAN).is_nan(), true);
    }

    #[test]
    fn data_shapes() {
        let rows: String = (0..100)
            .map(|i| format!("{i},{},{}\n", i * 2, i % 3))
            .collect();
        let s = parse_data_table(
            &Table::parse(&format!("y1,y2,z\n{rows}"), "t").unwrap(),
            "t",
        )
        .unwrap();
        assert_eq!((s.k(), s.r(), s.len()), (2, 0, 100));
        let s =
            parse_data_table(&Table::parse("y1,x1,z\n1,2,3\n4,5,6\n", "t").unwrap(), "t").unwrap();
        assert_eq!((s.k(), s.r(), s.len()), (1, 1, 2));
    }

    #[test]
    fn errors_name_the_location() {
        let mut text = String::from("y1,z\n");
        for i in 1..=20 {
            if i == 17 {
                text.push_str("1.0,\n");
            } else {
                text.push_str("1.0,2.0\n");
            }
        }
        let err = Table::parse(&text, "d").unwrap_err().to_string();
        assert!(err.contains("row 17"), "{err}");
        let err = Table::parse("y1,z\n1,2\n3\n", "d").unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        let err = Table::parse("y1,z\n1,abc\n", "d").unwrap_err().to_string();
        assert!(err.contains("column z"), "{err}");
        let t = Table::parse("y1,y2\n1,2\n", "d").unwrap();
        assert!(parse_data_table(&t, "d")
            .unwrap_err()
            .to_string()
            .contains("missing column z"));
        let t = Table::parse("y1,w,z\n1,2,3\n", "d").unwrap();
        assert!(parse_data_table(&t, "d").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = Table {
            columns: vec!["y1".into(), "z".into()],
            rows: vec![vec![1.0 / 3.0, -2e-7], vec![5.0, 1e12]],
        };
        let back = Table::parse(&t.to_csv().unwrap(), "rt").unwrap();
        assert_eq!(back.to_csv().unwrap(), t.to_csv().unwrap());
        assert_eq!(back.rows[0][0], round_sig(1.0 / 3.0));
    }
}
