//! CSV ingestion: one point per row, comma-separated, optional header.
//!
//! The first row is a header iff none of its cells parses as a number. Row
//! numbers in errors are 1-based file rows, header included.

use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: Vec<Vec<f64>>,
    pub header: Option<Vec<String>>,
}

pub fn read_points(path: &Path) -> Result<Table, CliError> {
    let file =
        std::fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    parse(file)
}

pub fn parse<R: std::io::Read>(reader: R) -> Result<Table, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut header = None;
    let mut width = None;
    for (i, record) in rdr.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| CliError::Usage(format!("row {row_no}: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|c| c.parse::<f64>().ok()).collect();
        if i == 0 && parsed.iter().all(Option::is_none) {
            header = Some(record.iter().map(str::to_string).collect());
            width = Some(record.len());
            continue;
        }
        let mut row = Vec::with_capacity(parsed.len());
        for (col, (cell, value)) in record.iter().zip(parsed).enumerate() {
            match value {
                Some(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(CliError::Usage(format!(
                        "row {row_no}, column {}: not a finite number: {cell:?}",
                        col + 1
                    )))
                }
            }
        }
        match width {
            Some(w) if w != row.len() => {
                return Err(CliError::Usage(format!(
                    "row {row_no}: expected {w} columns, found {}",
                    row.len()
                )))
            }
            _ => width = Some(row.len()),
        }
        rows.push(row);
    }
    Ok(Table { rows, header })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detection() {
        let t = parse("x,y\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(t.header, Some(vec!["x".into(), "y".into()]));
        assert_eq!(t.rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let t = parse("1,2\n3,4\n".as_bytes()).unwrap();
        assert!(t.header.is_none());
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn bad_cell_names_row() {
        let e = parse("1\n2\n3\nfour\n5\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("row 4"), "{e}");
        let e = parse("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");
        assert!(parse("1\nNaN\n".as_bytes()).is_err());
    }
}
