//! CSV ingestion for arbitrary numeric tables.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};

/// Reads a headed, all-numeric CSV. Feature columns keep their file order
/// with the target removed. Empty, unparsable and non-finite cells are
/// rejected with their line number and column name.
pub fn ingest_csv(path: &Path, target: &str, task: Task) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    // A header whose every field parses as a number is really a data row.
    if header.iter().all(|h| h.is_empty()) || header.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(Error::MissingHeader);
    }
    let t = header.iter().position(|h| h == target).ok_or_else(|| Error::MissingTarget(target.to_string()))?;
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(Error::invalid(format!("duplicate column name '{h}'")));
        }
    }
    let p = header.len() - 1;
    if p == 0 {
        return Err(Error::EmptyData("the csv has no feature columns".into()));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |pos| pos.line() as usize);
        if record.len() != header.len() {
            return Err(Error::invalid(format!("line {line}: expected {} fields, got {}", header.len(), record.len())));
        }
        for (j, cell) in record.iter().enumerate() {
            let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::NonNumericCell {
                line,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            if j == t {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyData("the csv has a header but no rows".into()));
    }
    let names = header.iter().enumerate().filter(|(j, _)| *j != t).map(|(_, h)| h.clone()).collect();
    let features = Array2::from_shape_vec((n, p), x).expect("n * p cells were pushed");
    Dataset::new(features, Array1::from(y), names, task)
}

/// Writes `data` as a headed CSV with the target last.
pub fn write_csv(path: &Path, data: &Dataset, target: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    header.push(target);
    w.write_record(&header)?;
    let mut buf = Vec::with_capacity(data.p() + 1);
    for i in 0..data.n() {
        buf.clear();
        buf.extend(data.row(i).iter().map(|v| format!("{v:?}")));
        buf.push(format!("{:?}", data.y(i)));
        w.write_record(&buf)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows_round_trip() {
        let f = file("a,y,b\n1,10,2\n3,20,4\n5.5,30,-6\n");
        let d = ingest_csv(f.path(), "y", Task::Regression).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.feature_names(), ["a", "b"]);
        assert_eq!(d.row(2), [5.5, -6.0]);
        assert_eq!(d.target().to_vec(), vec![10.0, 20.0, 30.0]);

        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(out.path(), &d, "y").unwrap();
        assert_eq!(ingest_csv(out.path(), "y", Task::Regression).unwrap(), d);
    }

    #[test]
    fn nan_cell_names_line_and_column() {
        let f = file("a,b,y\n1,2,3\n4,NaN,6\n");
        match ingest_csv(f.path(), "y", Task::Regression) {
            Err(Error::NonNumericCell { line, column, .. }) => assert_eq!((line, column.as_str()), (3, "b")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_and_target_errors() {
        let f = file("1,2,3\n4,5,6\n");
        assert!(matches!(ingest_csv(f.path(), "y", Task::Regression), Err(Error::MissingHeader)));
        let f = file("");
        assert!(matches!(ingest_csv(f.path(), "y", Task::Regression), Err(Error::MissingHeader)));
        let f = file("a,b\n1,2\n");
        assert!(matches!(ingest_csv(f.path(), "y", Task::Regression), Err(Error::MissingTarget(_))));
        let f = file("a,y\n1,x\n");
        assert!(matches!(ingest_csv(f.path(), "y", Task::Regression), Err(Error::NonNumericCell { .. })));
    }
}
