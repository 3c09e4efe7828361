//! CSV tables and JSON metadata.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rcflow_core::analysis::export_db;
use serde::Serialize;

use crate::spec::ExperimentSpec;

pub const SCHEMA_VERSION: u32 = 1;

pub const TRIAL_COLUMNS: &[&str] = &[
    "estimator",
    "trial",
    "seed",
    "init_seed",
    "snr_db",
    "alpha",
    "n_p",
    "n_inner",
    "nmse_db",
    "nmse_is_neg_inf",
    "residual",
];

pub const SUMMARY_COLUMNS: &[&str] =
    &["estimator", "snr_db", "alpha", "n_p", "trials", "mean_nmse_db", "nmse_is_neg_inf", "mean_n_inner"];

pub const TIMING_COLUMNS: &[&str] = &["estimator", "trial", "snr_db", "alpha", "wall_ns"];

pub const SWEEP_COLUMNS: &[&str] = &[
    "axis",
    "snr_db",
    "alpha",
    "lambda",
    "beta",
    "n_outer",
    "n_inner",
    "trials",
    "mean_nmse_db",
    "nmse_is_neg_inf",
    "sweet_spot_outer",
];

pub const SPECTRAL_COLUMNS: &[&str] = &[
    "outer",
    "inner",
    "t",
    "w",
    "rho_d",
    "rho_d_method",
    "rho_p",
    "rho_p_method",
    "rho_t",
    "rho_t_method",
    "rho_t_converged",
    "rho_p_times_rho_d",
];

/// Shortest representation that parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// A dB value and its `-inf` flag as two cells.
pub fn db_cells(db: f64) -> [String; 2] {
    let (v, neg_inf) = export_db(db);
    [num(v), neg_inf.to_string()]
}

pub struct Table {
    pub name: String,
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &'static [&'static str]) -> Self {
        Self { name: name.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(&self.name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(path)
    }
}

#[derive(Serialize)]
struct FileSchema<'a> {
    name: &'a str,
    columns: &'a [&'a str],
    rows: usize,
}

#[derive(Serialize)]
struct Metadata<'a> {
    schema_version: u32,
    version: String,
    command: &'a str,
    spec: &'a ExperimentSpec,
    files: Vec<FileSchema<'a>>,
}

pub fn version_string() -> String {
    match option_env!("RCFLOW_GIT_DESCRIBE") {
        Some(v) => v.to_string(),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

/// Writes each table plus `<stem>_meta.json` describing them.
pub fn write_outputs(spec: &ExperimentSpec, command: &str, stem: &str, tables: &[Table]) -> anyhow::Result<()> {
    ensure_dir(&spec.out_dir)?;
    for t in tables {
        t.write(&spec.out_dir)?;
    }
    write_metadata(spec, command, stem, tables.iter().map(|t| (t.name.as_str(), t.columns, t.rows.len())))
}

pub fn write_metadata<'a>(
    spec: &ExperimentSpec,
    command: &str,
    stem: &str,
    files: impl IntoIterator<Item = (&'a str, &'a [&'a str], usize)>,
) -> anyhow::Result<()> {
    let meta = Metadata {
        schema_version: SCHEMA_VERSION,
        version: version_string(),
        command,
        spec,
        files: files.into_iter().map(|(name, columns, rows)| FileSchema { name, columns, rows }).collect(),
    };
    let path = spec.out_dir.join(format!("{stem}_meta.json"));
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -12.345678901234567, 1e-300, 3.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(db_cells(f64::NEG_INFINITY)[1], "true");
        assert_eq!(db_cells(-3.5), ["-3.5".to_string(), "false".to_string()]);
    }

    #[test]
    fn tables_write_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("x.csv", TIMING_COLUMNS);
        t.push(vec!["a,b".into(), "1".into(), "2".into(), "3".into(), "4".into()]);
        let path = t.write(dir.path()).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(text, "estimator,trial,snr_db,alpha,wall_ns\n\"a,b\",1,2,3,4\n");
    }
}
