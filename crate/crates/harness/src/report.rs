//! CSV tables, run manifests and small summary statistics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fcp_core::{Field, Grid};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::dataset::{encode_dataset, VERSION as FCPD_VERSION};
use crate::error::{io_err, Result};
use crate::model::{encode_model, Model, VERSION as FCPM_VERSION};

/// A named table written as `<name>.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    /// Index of column `name`.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Cell at `row`, column `name`.
    pub fn get(&self, row: usize, name: &str) -> Option<&str> {
        self.rows.get(row)?.get(self.column(name)?).map(String::as_str)
    }

    /// UTF-8 CSV with a header row and LF line endings.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| csv::Error::from(e.into_error()).into())
    }
}

/// Shortest round-trip decimal rendering; `inf` for infinities.
pub fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divisor `n − 1`).
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// `sample_std / mean`.
pub fn coefficient_of_variation(xs: &[f64]) -> f64 {
    sample_std(xs) / mean(xs)
}

/// Ranks starting at 1, ties receiving their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; zero when either input is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, my) = (mean(&rx), mean(&ry));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// One file recorded in a manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Writes a run's files into its directory and records them for the manifest.
pub struct RunWriter {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileRecord {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
        Ok(path)
    }

    pub fn table(&mut self, table: &Table) -> Result<PathBuf> {
        self.put(&format!("{}.csv", table.name), &table.to_csv()?)
    }

    pub fn dataset(&mut self, name: &str, grid: &Grid, samples: &[(Field, Field)]) -> Result<PathBuf> {
        self.put(&format!("data/{name}.fcpd"), &encode_dataset(grid, samples)?)
    }

    pub fn model(&mut self, name: &str, model: &Model) -> Result<PathBuf> {
        self.put(&format!("{name}.fcpm"), &encode_model(model))
    }

    /// Writes `config.toml` and the manifest `manifest_name`. The manifest
    /// lists every file with its SHA-256 and the hash of the config that
    /// produced it.
    pub fn finish(mut self, cfg: &ExperimentConfig, manifest_name: &str) -> Result<Vec<FileRecord>> {
        self.put("config.toml", cfg.render().as_bytes())?;
        let hash = cfg.hash();
        let mut m = String::new();
        let _ = writeln!(m, "experiment = \"{}\"", cfg.experiment);
        let _ = writeln!(m, "seed = \"{}\"", cfg.seed);
        let _ = writeln!(m, "config_hash = \"{hash}\"");
        let _ = writeln!(m, "\n[versions]");
        let _ = writeln!(m, "fcp-core = \"{}\"", fcp_core::VERSION);
        let _ = writeln!(m, "fcp-harness = \"{}\"", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "fcpd = {FCPD_VERSION}\nfcpm = {FCPM_VERSION}");
        for f in &self.files {
            let _ = writeln!(m, "\n[[files]]");
            let _ = writeln!(m, "name = \"{}\"", f.name);
            let _ = writeln!(m, "sha256 = \"{}\"", f.sha256);
            let _ = writeln!(m, "bytes = {}", f.bytes);
            let _ = writeln!(m, "config_hash = \"{hash}\"");
        }
        self.put(manifest_name, m.as_bytes())?;
        Ok(self.files)
    }
}
