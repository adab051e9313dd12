//! Report files: JSON records, CSV plot data and a manifest, each read back
//! and checked against its declared schema before the run succeeds.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Json,
    Csv,
}

/// What a file must contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Schema {
    /// JSON object with these top-level keys.
    JsonObject { required: Vec<String> },
    /// CSV with this exact header; columns flagged numeric parse as `f64`.
    Csv { header: Vec<String>, numeric: Vec<bool> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub kind: FileKind,
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub files: Vec<FileEntry>,
    pub pass: bool,
}

/// One experiment directory; writes are serialized through a lock.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Mutex<Vec<FileEntry>>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Internal(format!("{}: {e}", path.display()))
}

/// Scalar CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn numeric(&self) -> bool {
        !matches!(self, Cell::Text(_))
    }
}

impl OutputDir {
    pub fn create(root: &Path) -> HarnessResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self { root: root.to_path_buf(), files: Mutex::new(Vec::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn register(&self, entry: FileEntry) {
        let mut files = self.files.lock().expect("output lock");
        files.retain(|f| f.name != entry.name);
        files.push(entry);
    }

    /// Pretty JSON of a serializable object; its top-level keys become the schema.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> HarnessResult<()> {
        let v = serde_json::to_value(value).map_err(|e| HarnessError::Internal(e.to_string()))?;
        let required = match &v {
            serde_json::Value::Object(map) => map.keys().cloned().collect(),
            _ => return Err(HarnessError::Internal(format!("{name}: report is not a JSON object"))),
        };
        let path = self.root.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Internal(e.to_string()))?;
        let _guard = self.files.lock().expect("output lock");
        std::fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        drop(_guard);
        self.register(FileEntry { name: name.into(), kind: FileKind::Json, schema: Schema::JsonObject { required } });
        Ok(())
    }

    /// CSV with a header row; every row must match the header length.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> HarnessResult<()> {
        let path = self.root.join(name);
        if let Some(bad) = rows.iter().find(|r| r.len() != header.len()) {
            return Err(HarnessError::Internal(format!("{name}: row of {} cells under a header of {}", bad.len(), header.len())));
        }
        let numeric: Vec<bool> = (0..header.len()).map(|j| rows.iter().all(|r| r[j].numeric())).collect();
        let _guard = self.files.lock().expect("output lock");
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        w.write_record(header).map_err(|e| io_err(&path, e))?;
        for r in rows {
            w.write_record(r.iter().map(Cell::render)).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        drop(_guard);
        self.register(FileEntry {
            name: name.into(),
            kind: FileKind::Csv,
            schema: Schema::Csv { header: header.iter().map(|s| s.to_string()).collect(), numeric },
        });
        Ok(())
    }

    pub fn entries(&self) -> Vec<FileEntry> {
        self.files.lock().expect("output lock").clone()
    }

    /// Writes the manifest and validates every registered file.
    pub fn finish<C: Serialize>(&self, command: &str, seed: u64, threads: usize, config: &C, pass: bool) -> HarnessResult<Manifest> {
        let manifest = Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            threads,
            config: serde_json::to_value(config).map_err(|e| HarnessError::Internal(e.to_string()))?,
            files: self.entries(),
            pass,
        };
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::Internal(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        validate_dir(&self.root)?;
        Ok(manifest)
    }
}

/// Checks the manifest of a finished directory and every file it lists.
pub fn validate_dir(root: &Path) -> HarnessResult<Manifest> {
    let path = root.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| io_err(&path, format!("manifest schema: {e}")))?;
    for f in &manifest.files {
        validate_file(&root.join(&f.name), &f.schema)?;
    }
    Ok(manifest)
}

pub fn validate_file(path: &Path, schema: &Schema) -> HarnessResult<()> {
    match schema {
        Schema::JsonObject { required } => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
            let map = v.as_object().ok_or_else(|| io_err(path, "not a JSON object"))?;
            if let Some(k) = required.iter().find(|k| !map.contains_key(*k)) {
                return Err(io_err(path, format!("missing key `{k}`")));
            }
        }
        Schema::Csv { header, numeric } => {
            let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
            let got: Vec<String> = r.headers().map_err(|e| io_err(path, e))?.iter().map(String::from).collect();
            if &got != header {
                return Err(io_err(path, format!("header {got:?}, expected {header:?}")));
            }
            for (i, rec) in r.records().enumerate() {
                let rec = rec.map_err(|e| io_err(path, e))?;
                if rec.len() != header.len() {
                    return Err(io_err(path, format!("row {} has {} fields", i + 1, rec.len())));
                }
                for (j, field) in rec.iter().enumerate() {
                    if numeric[j] && field.parse::<f64>().is_err() {
                        return Err(io_err(path, format!("row {}, column `{}`: `{field}` is not a number", i + 1, header[j])));
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Rec {
        a: f64,
        b: Vec<u8>,
    }

    #[test]
    fn round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path()).unwrap();
        out.write_json("r.json", &Rec { a: 1.5, b: vec![1, 2] }).unwrap();
        out.write_csv("t.csv", &["x", "label"], &[vec![Cell::Num(0.25), Cell::Text("a, \"b\"".into())]]).unwrap();
        let m = out.finish("test", 7, 1, &serde_json::json!({"k": 1}), true).unwrap();
        assert_eq!(m.files.len(), 2);
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert!(text.contains("\"a, \"\"b\"\"\""), "{text}");
        std::fs::write(dir.path().join("r.json"), "{\"a\": 1}").unwrap();
        assert!(validate_dir(dir.path()).is_err());
        std::fs::write(dir.path().join("r.json"), "{\"a\": 1, \"b\": []}").unwrap();
        std::fs::write(dir.path().join("t.csv"), "x,label\nnope,a\n").unwrap();
        assert!(validate_dir(dir.path()).is_err());
    }

    #[test]
    fn ragged_rows_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path()).unwrap();
        assert!(out.write_csv("t.csv", &["x", "y"], &[vec![Cell::Num(1.0)]]).is_err());
    }
}
