//! Label and score CSV files.
//!
//! Layout: UTF-8, LF line endings, header `id,<name>,<name>,...`, one row per
//! sample. Reals are written in shortest round-trip form so a save/load cycle
//! reproduces every value exactly.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use tailkit_core::data::{LabelMatrix, ScoreKind, ScoreMatrix};
use tailkit_core::math::Matrix;

use crate::error::{Error, Result};

/// Parsed CSV body: header names after `id`, ids, and raw cells per row with
/// their 1-based line numbers.
pub(crate) struct RawTable {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<(u64, Vec<String>)>,
}

fn check_width(path: &Path, table: &RawTable) -> Result<()> {
    for (line, cells) in &table.rows {
        if cells.len() != table.columns.len() {
            return Err(Error::parse(
                path,
                *line,
                format!(
                    "ragged row: expected {} values, found {}",
                    table.columns.len(),
                    cells.len()
                ),
            ));
        }
    }
    Ok(())
}

pub(crate) fn read_table(path: &Path) -> Result<RawTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(path, &text)
}

pub(crate) fn parse_table(path: &Path, text: &str) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if header.get(0).map(str::trim) != Some("id") {
        return Err(Error::parse(path, 1, "header mismatch: first column must be `id`"));
    }
    let columns: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for c in &columns {
        if c.is_empty() || !seen.insert(c.as_str()) {
            return Err(Error::parse(
                path,
                1,
                format!("header mismatch: bad or repeated column `{c}`"),
            ));
        }
    }

    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen_ids = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[0].trim().to_string();
        if !seen_ids.insert(id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id `{id}`")));
        }
        ids.push(id);
        rows.push((line, record.iter().skip(1).map(|s| s.trim().to_string()).collect()));
    }
    Ok(RawTable { columns, ids, rows })
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelMatrix> {
    let path = path.as_ref();
    let table = read_table(path)?;
    check_width(path, &table)?;
    let mut values = Vec::with_capacity(table.rows.len() * table.columns.len());
    for (line, cells) in &table.rows {
        for cell in cells {
            match cell.as_str() {
                "0" => values.push(0),
                "1" => values.push(1),
                other => return Err(Error::parse(path, *line, format!("non-binary label `{other}`"))),
            }
        }
    }
    Ok(LabelMatrix::new(table.ids, table.columns, values)?)
}

pub fn load_scores(path: impl AsRef<Path>, kind: ScoreKind) -> Result<ScoreMatrix> {
    let path = path.as_ref();
    let table = read_table(path)?;
    check_width(path, &table)?;
    let mut values = Vec::with_capacity(table.rows.len() * table.columns.len());
    for (line, cells) in &table.rows {
        for cell in cells {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(path, *line, format!("not a number: `{cell}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, *line, format!("non-finite value `{cell}`")));
            }
            if kind == ScoreKind::Probabilities && !(0.0..=1.0).contains(&v) {
                return Err(Error::parse(path, *line, format!("probability out of range: {v}")));
            }
            values.push(v);
        }
    }
    let m = Matrix::from_vec(table.ids.len(), table.columns.len(), values)?;
    Ok(ScoreMatrix::new(table.ids, table.columns, m, kind)?)
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e.to_string()))
}

/// Writes a header-first CSV with string cells.
pub(crate) fn write_rows(
    path: &Path,
    header: &[String],
    ids: &[String],
    rows: impl Fn(usize) -> Vec<String>,
) -> Result<()> {
    let mut w = writer();
    let mut head = vec!["id".to_string()];
    head.extend(header.iter().cloned());
    w.write_record(&head).map_err(csv_err(path))?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(rows(i));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    finish(path, w)
}

pub fn save_labels(path: impl AsRef<Path>, labels: &LabelMatrix) -> Result<()> {
    write_rows(path.as_ref(), labels.class_names(), labels.ids(), |i| {
        labels.row(i).iter().map(|v| v.to_string()).collect()
    })
}

pub fn save_scores(path: impl AsRef<Path>, scores: &ScoreMatrix) -> Result<()> {
    write_rows(path.as_ref(), scores.class_names(), scores.ids(), |i| {
        scores.values().row(i).iter().map(|v| format!("{v}")).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn labels_parse() {
        let dir = tempfile::tempdir().unwrap();
        let y = load_labels(write(&dir, "y.csv", "id,a,b\nx1,1,0\n")).unwrap();
        assert_eq!((y.n_samples(), y.n_classes()), (1, 2));
        assert_eq!(y.row(0), &[1, 0]);
    }

    #[test]
    fn label_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_labels(write(&dir, "y.csv", "id,a,b\nx0,0,0\nx1,2,0\n")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":3:") && msg.contains("non-binary label"), "{msg}");
        let err = load_labels(write(&dir, "d.csv", "id,a\nx1,1\nx1,0\n")).unwrap_err();
        assert!(err.to_string().contains("duplicate id"), "{err}");
        let err = load_labels(write(&dir, "r.csv", "id,a,b\nx1,1\n")).unwrap_err();
        assert!(err.to_string().contains("ragged row"), "{err}");
        let err = load_labels(write(&dir, "h.csv", "name,a\nx1,1\n")).unwrap_err();
        assert!(err.to_string().contains("header mismatch"), "{err}");
    }

    #[test]
    fn scores_parse_by_kind() {
        let dir = tempfile::tempdir().unwrap();
        let p = load_scores(write(&dir, "p.csv", "id,a\nx1,0.7\n"), ScoreKind::Probabilities).unwrap();
        assert_eq!(p.values().get(0, 0), 0.7);
        let err = load_scores(write(&dir, "q.csv", "id,a\nx1,1.2\n"), ScoreKind::Probabilities).unwrap_err();
        assert!(err.to_string().contains("probability out of range"), "{err}");
        let z = load_scores(write(&dir, "z.csv", "id,a\nx1,-3.5\n"), ScoreKind::Logits).unwrap();
        assert_eq!(z.values().get(0, 0), -3.5);
        let err = load_scores(write(&dir, "n.csv", "id,a\nx1,NaN\n"), ScoreKind::Logits).unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_labels("/nonexistent/labels.csv").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
