//! Result files: per-run CSV tables, pivoted plot data and a JSON manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub kind: String,
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<FileEntry>,
    pub notes: Vec<String>,
}

/// Collects everything written for one run; [`OutputDir::finish`] writes the
/// manifest listing it.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
    notes: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> Result<PathBuf, CliError> {
        let p = self.root.join(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(p)
    }

    pub fn write_rows<T: Serialize>(&mut self, name: &str, kind: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name)?)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.register(name, kind, Some(rows.len()));
        Ok(())
    }

    pub fn write_table(&mut self, name: &str, kind: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name)?)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.register(name, kind, Some(rows.len()));
        Ok(())
    }

    /// Records a file written by other means.
    pub fn register(&mut self, name: &str, kind: &str, rows: Option<usize>) {
        self.files.push(FileEntry {
            path: name.to_string(),
            kind: kind.to_string(),
            rows,
        });
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Writes a pivoted plot table; methods without any value are left out
    /// and noted in the manifest.
    pub fn write_plot(&mut self, name: &str, table: &PlotTable) -> Result<(), CliError> {
        let (header, rows, omitted) = table.pivot();
        for m in omitted {
            self.note(format!("{name}: column {m} omitted (no values)"));
        }
        if rows.is_empty() {
            self.note(format!("{name}: no rows, not written"));
            return Ok(());
        }
        self.write_table(name, "plotdata", &header, &rows)
    }

    pub fn finish(self, experiment: &str, config_hash: &str, seed: u64) -> Result<Manifest, CliError> {
        let manifest = Manifest {
            experiment: experiment.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            files: self.files,
            notes: self.notes,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        std::fs::write(self.root.join("manifest.json"), json + "\n")?;
        Ok(manifest)
    }
}

/// Long-format points `(x, method, value)` to be pivoted into one column per
/// method. Repeated `(x, method)` points (e.g. several seeds) are averaged.
#[derive(Debug, Clone, Default)]
pub struct PlotTable {
    pub x_name: String,
    pub methods: Vec<String>,
    points: Vec<(String, String, f64)>,
}

impl PlotTable {
    pub fn new(x_name: &str, methods: &[String]) -> Self {
        Self {
            x_name: x_name.to_string(),
            methods: methods.to_vec(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, x: impl ToString, method: &str, value: f64) {
        self.points.push((x.to_string(), method.to_string(), value));
    }

    /// Header, rows (x in first-seen order) and the omitted method names.
    pub fn pivot(&self) -> (Vec<String>, Vec<Vec<String>>, Vec<String>) {
        let mut xs: Vec<&str> = Vec::new();
        let mut cells: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
        for (x, m, v) in &self.points {
            if !xs.contains(&x.as_str()) {
                xs.push(x);
            }
            let e = cells.entry((x.as_str(), m.as_str())).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
        let (kept, omitted): (Vec<&String>, Vec<&String>) = self
            .methods
            .iter()
            .partition(|m| self.points.iter().any(|(_, pm, _)| pm == *m));
        let mut header = vec![self.x_name.clone()];
        header.extend(kept.iter().map(|m| m.to_string()));
        let rows = xs
            .iter()
            .map(|x| {
                let mut row = vec![x.to_string()];
                for m in &kept {
                    row.push(match cells.get(&(*x, m.as_str())) {
                        Some((s, n)) => format!("{}", s / *n as f64),
                        None => String::new(),
                    });
                }
                row
            })
            .collect();
        (header, rows, omitted.into_iter().cloned().collect())
    }
}
