use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::OutputFormat;
use crate::error::Result;

/// Writes `rows` to `dir/stem.{csv,json}` and returns the path. CSV gets a
/// header row; JSON is an array of objects with the same field names.
pub fn write_table<T: Serialize>(
    dir: &Path,
    stem: &str,
    rows: &[T],
    format: OutputFormat,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let file = BufWriter::new(File::create(&path)?);
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(file);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let mut file = file;
            serde_json::to_writer_pretty(&mut file, rows)?;
            writeln!(file)?;
            file.flush()?;
        }
    }
    Ok(path)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        mu: f64,
        label: &'static str,
        value: Option<f64>,
    }

    #[test]
    fn csv_has_header_and_empty_missing_values() {
        let dir = tempfile::tempdir().unwrap();
        let rows = [
            Row { mu: 0.0, label: "a", value: Some(1.5) },
            Row { mu: 0.1, label: "b", value: None },
        ];
        let path = write_table(dir.path(), "t", &rows, OutputFormat::Csv).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "mu,label,value\n0.0,a,1.5\n0.1,b,\n");
    }

    #[test]
    fn json_mirrors_fields() {
        let dir = tempfile::tempdir().unwrap();
        let rows = [Row { mu: 0.5, label: "x", value: None }];
        let path = write_table(dir.path(), "t", &rows, OutputFormat::Json).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(v[0]["mu"], 0.5);
        assert!(v[0]["value"].is_null());
    }
}
