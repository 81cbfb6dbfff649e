//! Delimited-text ingestion into a date-indexed collection of series.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Series sharing one master date index.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: Vec<TimeSeries>,
    pub sources: Vec<PathBuf>,
}

impl Dataset {
    pub fn get(&self, name: &str) -> Result<&TimeSeries> {
        self.series.iter().find(|s| s.name() == name).ok_or_else(|| {
            let known: Vec<&str> = self.series.iter().map(TimeSeries::name).collect();
            Error::Config(format!("series '{name}' not in dataset (have: {})", known.join(", ")))
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        self.series.first().map(TimeSeries::dates).unwrap_or(&[])
    }
}

fn parse_value(field: &str, row: usize, column: &str) -> Result<f64> {
    let field = field.trim();
    if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    field.parse::<f64>().map_err(|_| Error::ParseError {
        row,
        msg: format!("column '{column}': cannot parse '{field}' as a number"),
    })
}

/// Read a comma-delimited file with a header row. Row numbers in errors are
/// 1-based file lines, so the header is row 1.
pub fn ingest(path: &Path, date_column: &str, date_format: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::ParseError { row: 1, msg: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    let date_idx = headers
        .iter()
        .position(|h| h == date_column)
        .ok_or_else(|| Error::Config(format!("date column '{date_column}' not in header")))?;
    let value_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != date_idx).collect();
    if value_cols.is_empty() {
        return Err(Error::Config("file has no value columns".into()));
    }

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    let mut seen: HashMap<NaiveDate, usize> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::ParseError { row, msg: e.to_string() })?;
        if record.len() != headers.len() {
            return Err(Error::ParseError {
                row,
                msg: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let raw_date = &record[date_idx];
        let date = NaiveDate::parse_from_str(raw_date, date_format).map_err(|e| Error::ParseError {
            row,
            msg: format!("bad date '{raw_date}': {e}"),
        })?;
        if seen.insert(date, row).is_some() {
            return Err(Error::DuplicateDate {
                row,
                date: date.to_string(),
            });
        }
        let values = value_cols
            .iter()
            .map(|&c| parse_value(&record[c], row, &headers[c]))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((date, values));
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData { needed: 1, have: 0 });
    }
    rows.sort_by_key(|(d, _)| *d);
    let dates: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
    let series = value_cols
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let values = rows.iter().map(|(_, v)| v[k]).collect();
            TimeSeries::new(headers[c].clone(), dates.clone(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        series,
        sources: vec![path.to_path_buf()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_columns_and_missing() {
        let f = write(
            "date,smp,load\n2024-01-03,3.0,30\n2024-01-01,1.0,10\n2024-01-02,,20\n2024-01-04,4.0,40\n2024-01-05,5.0,50\n",
        );
        let ds = ingest(f.path(), "date", "%Y-%m-%d").unwrap();
        assert_eq!(ds.series.len(), 2);
        let smp = ds.get("smp").unwrap();
        assert_eq!(smp.len(), 5);
        assert_eq!(smp.missing_count(), 1);
        assert_eq!(smp.values()[0], 1.0);
        assert!(smp.values()[1].is_nan());
        assert_eq!(ds.get("load").unwrap().values()[2], 30.0);
        assert!(ds.get("price").is_err());
    }

    #[test]
    fn duplicate_date_row() {
        let f = write("date,smp\n2024-01-01,1\n2024-01-02,2\n2024-01-01,3\n");
        assert_eq!(
            ingest(f.path(), "date", "%Y-%m-%d").unwrap_err(),
            Error::DuplicateDate {
                row: 4,
                date: "2024-01-01".into()
            }
        );
    }

    #[test]
    fn bad_date_and_ragged_rows() {
        let f = write("date,smp\n2024-01-01,1\n01/02/2024,2\n");
        assert!(matches!(ingest(f.path(), "date", "%Y-%m-%d"), Err(Error::ParseError { row: 3, .. })));
        let f = write("date,smp,load\n2024-01-01,1,2\n2024-01-02,2\n");
        assert!(matches!(ingest(f.path(), "date", "%Y-%m-%d"), Err(Error::ParseError { row: 3, .. })));
        let f = write("date,smp\n2024-01-01,abc\n");
        assert!(matches!(ingest(f.path(), "date", "%Y-%m-%d"), Err(Error::ParseError { row: 2, .. })));
    }
}
