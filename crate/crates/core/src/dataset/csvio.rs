use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::Array2;

use super::{ClassId, Dataset, DatasetError, VariableSchema, MAX_CLASS_ID};

/// Result of [`load_csv`]: the dataset plus the number of rows that were
/// discarded because a variable cell was unparseable or non-finite.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

/// Parses a label cell: an integer `0..=20` or `IDV(k)`.
pub fn parse_label(cell: &str) -> Option<i64> {
    let t = cell.trim();
    if let Ok(v) = t.parse::<i64>() {
        return Some(v);
    }
    // tolerate "4.0" style integers written by numeric tools
    if let Ok(v) = t.parse::<f64>() {
        if v.fract() == 0.0 && v.is_finite() {
            return Some(v as i64);
        }
        return None;
    }
    let upper = t.to_ascii_uppercase();
    let inner = upper.strip_prefix("IDV")?.trim();
    let inner = inner.strip_prefix('(')?.strip_suffix(')')?;
    inner.trim().parse::<i64>().ok()
}

fn open_maybe_gzip(path: &Path) -> Result<Box<dyn Read>, DatasetError> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let head = std::io::Cursor::new(magic[..n].to_vec());
    let chained = head.chain(file);
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(chained)))
    } else {
        Ok(Box::new(BufReader::new(chained)))
    }
}

/// Loads a comma-separated file whose header names every schema variable and
/// the label column. Columns are reordered to schema order; extra columns are
/// ignored. Gzip input is detected by its magic bytes.
pub fn load_csv(path: &Path, schema: &VariableSchema, label_column: &str) -> Result<LoadedDataset, DatasetError> {
    let reader = open_maybe_gzip(path)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let lookup: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();

    let cols = schema
        .variables
        .iter()
        .map(|v| lookup.get(v.id.as_str()).copied().ok_or_else(|| DatasetError::MissingColumn(v.id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let label_col = *lookup.get(label_column).ok_or_else(|| DatasetError::MissingColumn(label_column.to_string()))?;

    let width = cols.len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut dropped = 0usize;
    let mut row_buf = vec![0.0; width];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let label_cell = record.get(label_col).unwrap_or("");
        let label = match parse_label(label_cell) {
            Some(v) if (0..=MAX_CLASS_ID as i64).contains(&v) => ClassId(v as u8),
            _ => return Err(DatasetError::LabelOutOfRange { row, value: label_cell.trim().to_string() }),
        };
        let mut ok = true;
        for (slot, &c) in row_buf.iter_mut().zip(&cols) {
            match record.get(c).map(|s| s.trim().parse::<f64>()) {
                Some(Ok(v)) if v.is_finite() => *slot = v,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            dropped += 1;
            continue;
        }
        data.extend_from_slice(&row_buf);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} rows with unparseable or non-finite cells", path.display());
    }
    let values =
        Array2::from_shape_vec((labels.len(), width), data).map_err(|e| DatasetError::ShapeMismatch(e.to_string()))?;
    let dataset = Dataset::new(schema.variables.clone(), values, labels)?;
    Ok(LoadedDataset { dataset, dropped_rows: dropped })
}

/// Writes `ds` as CSV with a header of variable ids followed by the label
/// column. Values are written in shortest round-trip form, so loading the
/// file back reproduces them bit for bit.
pub fn write_csv(ds: &Dataset, path: &Path, label_column: &str) -> Result<(), DatasetError> {
    let file = BufWriter::new(File::create(path)?);
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = ds.variable_ids();
    header.push(label_column.to_string());
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..ds.n_samples() {
        rec.clear();
        rec.extend(ds.row(i).iter().map(|v| format!("{v:?}")));
        rec.push(ds.labels()[i].0.to_string());
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| DatasetError::Io(e.into_error()))?.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tep_header() -> String {
        let mut cols = VariableSchema::tep52().ids().iter().map(|s| s.to_string()).collect::<Vec<_>>();
        cols.push("fault".into());
        cols.join(",")
    }

    fn tep_row(base: f64, label: &str) -> String {
        let mut cells: Vec<String> = (0..52).map(|j| format!("{}", base + j as f64)).collect();
        cells.push(label.into());
        cells.join(",")
    }

    #[test]
    fn loads_three_tep_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let text =
            format!("{}\n{}\n{}\n{}\n", tep_header(), tep_row(0.0, "0"), tep_row(1.0, "4"), tep_row(2.0, "IDV(4)"));
        std::fs::write(&p, text).unwrap();
        let loaded = load_csv(&p, &VariableSchema::tep52(), "fault").unwrap();
        assert_eq!(loaded.dataset.n_samples(), 3);
        assert_eq!(loaded.dataset.labels(), &[ClassId(0), ClassId(4), ClassId(4)]);
        assert_eq!(loaded.dropped_rows, 0);
        assert_eq!(loaded.dataset.row(2)[51], 53.0);
    }

    #[test]
    fn missing_column_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let header = tep_header().replace("XMEAS.17,", "");
        let row: Vec<String> = (0..52).map(|j| j.to_string()).collect();
        std::fs::write(&p, format!("{header}\n{}\n", row.join(","))).unwrap();
        let err = load_csv(&p, &VariableSchema::tep52(), "fault").unwrap_err();
        assert!(matches!(err, DatasetError::MissingColumn(c) if c == "XMEAS.17"));
    }

    #[test]
    fn nan_row_dropped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let bad = tep_row(1.0, "1").replacen("1,", "NaN,", 1);
        std::fs::write(&p, format!("{}\n{}\n{}\n", tep_header(), tep_row(0.0, "0"), bad)).unwrap();
        let loaded = load_csv(&p, &VariableSchema::tep52(), "fault").unwrap();
        assert_eq!(loaded.dataset.n_samples(), 1);
        assert_eq!(loaded.dropped_rows, 1);
    }

    #[test]
    fn empty_and_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let schema = VariableSchema::generic("g", &["a"]).unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(&p, "a,y\nnan,0\n").unwrap();
        assert!(matches!(load_csv(&p, &schema, "y"), Err(DatasetError::EmptyDataset)));
        std::fs::write(&p, "a,y\n1,0\n2,21\n").unwrap();
        assert!(matches!(
            load_csv(&p, &schema, "y"),
            Err(DatasetError::LabelOutOfRange { row: 1, value }) if value == "21"
        ));
    }

    #[test]
    fn gzip_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&p).unwrap(), flate2::Compression::fast());
        enc.write_all(b"b,a,y\n2,1,IDV(3)\n").unwrap();
        enc.finish().unwrap();
        let schema = VariableSchema::generic("g", &["a", "b"]).unwrap();
        let loaded = load_csv(&p, &schema, "y").unwrap();
        assert_eq!(loaded.dataset.row(0).to_vec(), vec![1.0, 2.0]);
        assert_eq!(loaded.dataset.labels(), &[ClassId(3)]);
    }

    #[test]
    fn label_forms() {
        assert_eq!(parse_label(" 7 "), Some(7));
        assert_eq!(parse_label("idv( 12 )"), Some(12));
        assert_eq!(parse_label("3.0"), Some(3));
        assert_eq!(parse_label("3.5"), None);
        assert_eq!(parse_label("fault"), None);
    }
}
