//! CSV writers and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bidomain_core::operator::EigenBasis;
use bidomain_core::spectral::Path as SpectralPath;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::HarnessConfig;
use crate::error::HarnessError;

/// Output directory plus the files written into it, in write order.
pub struct RunDir {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Shortest round-trip decimal form; identical bits print identically.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Wide path format: `t, u_0..u_m, w_0..w_m`.
pub fn path_csv(path: &SpectralPath) -> String {
    let m = path.level();
    let mut header = vec!["t".to_string()];
    header.extend((0..=m).map(|i| format!("u{i}")));
    header.extend((0..=m).map(|i| format!("w{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = path.times().into_iter().zip(&path.states).map(|(t, z)| {
        let mut row = vec![num(t)];
        row.extend(z.u.iter().map(|&v| num(v)));
        row.extend(z.w.iter().map(|&v| num(v)));
        row
    });
    csv(&header, rows)
}

/// Header row of eigenvalues, then one row per heart node with the nodal
/// coefficients of every mode.
pub fn eigenbasis_csv(basis: &EigenBasis) -> String {
    let header: Vec<String> = basis.lambdas.iter().map(|&l| num(l)).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = basis.psi.row_iter().map(|r| r.iter().map(|&v| num(v)).collect());
    csv(&header, rows)
}

/// Coordinate format `row, col, value` for the nonzero entries.
pub fn triplet_csv(a: &DMatrix<f64>) -> String {
    let rows = bidomain_core::domain::triplets(a)
        .into_iter()
        .map(|(i, j, v)| vec![i.to_string(), j.to_string(), num(v)]);
    csv(&["row", "col", "value"], rows)
}

/// Hex SHA-256 of the resolved configuration in canonical JSON form, with
/// the output directory left out so relocated runs hash alike.
pub fn config_hash(config: &HarnessConfig) -> String {
    let mut config = config.clone();
    config.output = Default::default();
    let canonical = serde_json::to_string(&config).expect("configuration serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Serialize)]
struct Versions {
    harness: &'static str,
    core: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    status: &'a str,
    exit_code: i32,
    config_hash: String,
    config: &'a HarnessConfig,
    versions: Versions,
    started_unix: u64,
    wall_time_s: f64,
    files: &'a [String],
    summary: &'a Value,
}

#[allow(clippy::too_many_arguments)]
pub fn write_manifest(
    run: &RunDir,
    subcommand: &str,
    config: &HarnessConfig,
    exit_code: i32,
    started_unix: u64,
    wall_time_s: f64,
    summary: &Value,
) -> Result<(), HarnessError> {
    let manifest = Manifest {
        subcommand,
        status: if exit_code == 0 { "ok" } else { "failed" },
        exit_code,
        config_hash: config_hash(config),
        config,
        versions: Versions {
            harness: env!("CARGO_PKG_VERSION"),
            core: bidomain_core::VERSION,
        },
        started_unix,
        wall_time_s,
        files: &run.files,
        summary,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = run.dir.join("manifest.json");
    fs::write(&path, text + "\n").map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}
