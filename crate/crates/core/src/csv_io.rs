//! CSV ingestion and output.
//!
//! Dialect: comma separated, UTF-8, decimal point, at most one header row.
//! The first row is a header iff one of its cells does not parse as a number.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ranks::DataMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Option<Vec<String>>,
    pub data: DataMatrix,
}

pub fn read_matrix(path: &Path) -> Result<CsvTable> {
    let malformed = |message: String| Error::MalformedCsv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?);

    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => header = Some(record.iter().map(str::to_string).collect()),
            Err(_) => {
                let bad = record.iter().find(|c| c.parse::<f64>().is_err()).unwrap_or("");
                return Err(malformed(format!("non-numeric cell `{bad}` on line {}", line + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(malformed("no data rows".into()));
    }
    let data = DataMatrix::from_rows(&rows).map_err(|e| malformed(e.to_string()))?;
    Ok(CsvTable { header, data })
}

/// Writes `data` with header `x1,…,xd`; values use shortest round-trip formatting.
pub fn write_matrix(data: &DataMatrix, out: &mut impl Write) -> Result<()> {
    let header: Vec<String> = (1..=data.d()).map(|j| format!("x{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in data.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn header_is_detected() {
        let f = write("a,b\n1,2\n3,4.5\n");
        let t = read_matrix(f.path()).unwrap();
        assert_eq!(t.header, Some(vec!["a".into(), "b".into()]));
        assert_eq!(t.data.column(1), vec![2.0, 4.5]);

        let f = write("1, 2\n3,4\n");
        let t = read_matrix(f.path()).unwrap();
        assert_eq!(t.header, None);
        assert_eq!(t.data.n(), 2);
    }

    #[test]
    fn malformed_inputs() {
        for bad in ["a,b\n1,2\nx,4\n", "1,2\n3\n", "", "a,b\n", "1,2\nNaN,3\n"] {
            let f = write(bad);
            assert!(
                matches!(read_matrix(f.path()), Err(Error::MalformedCsv { .. })),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn written_values_round_trip() {
        let data = DataMatrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2e-300, 7.0]]).unwrap();
        let mut buf = Vec::new();
        write_matrix(&data, &mut buf).unwrap();
        let f = write(std::str::from_utf8(&buf).unwrap());
        assert_eq!(read_matrix(f.path()).unwrap().data, data);
    }
}
