//! CSV emission with resume support, and JSON sidecars.
//!
//! Scan CSVs use the fixed column set `model,N,tau,g_max,family,fidelity,
//! seed,p0..pk`. Rows are written in deterministic scan order and flushed
//! one by one, so an interrupted run leaves a valid prefix; on resume the
//! existing rows are loaded and matching grid points are not recomputed,
//! which reproduces the uninterrupted file byte for byte.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bangopt::experiments::ScanRecord;
use serde::Serialize;

use crate::config::{CliError, CliResult, RunConfig};

/// Key identifying one grid point within a scan output.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PointKey {
    pub n: usize,
    pub tau: u64,
    pub g_max: u64,
    /// First protocol parameter, for pure-grid scans where it is part of
    /// the grid coordinates (saturated/constant scans); zero otherwise.
    pub p0: u64,
}

impl PointKey {
    pub fn new(n: usize, tau: f64, g_max: f64, p0: Option<f64>) -> Self {
        Self {
            n,
            tau: tau.to_bits(),
            g_max: g_max.to_bits(),
            p0: p0.unwrap_or(0.0).to_bits(),
        }
    }

    fn of_record(record: &ScanRecord<f64>, keyed_on_p0: bool) -> Self {
        let p0 = if keyed_on_p0 {
            record.best_x.first().copied()
        } else {
            None
        };
        Self::new(record.n, record.tau, record.g_max, p0)
    }
}

/// Incremental, resumable writer for scan records.
pub struct ScanWriter {
    writer: BufWriter<File>,
    params: usize,
    cache: HashMap<PointKey, ScanRecord<f64>>,
}

impl ScanWriter {
    /// Opens the output, loading any completed rows from a previous run of
    /// the same scan. `params` is the protocol parameter count (p0..pk).
    pub fn create(
        path: &Path,
        params: usize,
        keyed_on_p0: bool,
    ) -> CliResult<Self> {
        let cache = match load_records(path, params) {
            Ok(records) => records
                .into_iter()
                .map(|r| (PointKey::of_record(&r, keyed_on_p0), r))
                .collect(),
            Err(_) => HashMap::new(),
        };
        let file = File::create(path)?;
        let mut writer = BufWriter::new(file);
        let mut header = String::from("model,N,tau,g_max,family,fidelity,seed");
        for k in 0..params {
            header.push_str(&format!(",p{k}"));
        }
        writeln!(writer, "{header}")?;
        writer.flush()?;
        Ok(Self {
            writer,
            params,
            cache,
        })
    }

    /// Cached record from a previous interrupted run, if any.
    pub fn completed(&self, key: &PointKey) -> Option<&ScanRecord<f64>> {
        self.cache.get(key)
    }

    /// Appends one record and flushes it to disk.
    pub fn write(&mut self, record: &ScanRecord<f64>) -> CliResult<()> {
        if record.best_x.len() != self.params {
            return Err(CliError::Io(format!(
                "record has {} parameters, writer expects {}",
                record.best_x.len(),
                self.params
            )));
        }
        let mut row = format!(
            "{},{},{},{},{},{},{}",
            record.model, record.n, record.tau, record.g_max, record.family, record.fidelity,
            record.seed
        );
        for p in &record.best_x {
            row.push_str(&format!(",{p}"));
        }
        writeln!(self.writer, "{row}")?;
        self.writer.flush()?;
        Ok(())
    }

}

/// Parses a scan CSV back into records; tolerates a torn final line.
pub fn load_records(path: &Path, expected_params: usize) -> CliResult<Vec<ScanRecord<f64>>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(_) => return Ok(Vec::new()),
    };
    let mut lines = text.lines();
    let header = match lines.next() {
        Some(h) => h,
        None => return Ok(Vec::new()),
    };
    if !header.starts_with("model,N,tau,g_max,family,fidelity,seed") {
        return Err(CliError::Io(format!(
            "{}: not a scan records CSV",
            path.display()
        )));
    }
    let mut records = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 + expected_params {
            continue; // torn or foreign row
        }
        let parsed = (|| -> Option<ScanRecord<f64>> {
            Some(ScanRecord {
                model: fields[0].to_string(),
                n: fields[1].parse().ok()?,
                tau: fields[2].parse().ok()?,
                g_max: fields[3].parse().ok()?,
                family: fields[4].to_string(),
                fidelity: fields[5].parse().ok()?,
                seed: fields[6].parse().ok()?,
                best_x: fields[7..]
                    .iter()
                    .map(|f| f.parse().ok())
                    .collect::<Option<Vec<f64>>>()?,
            })
        })();
        if let Some(r) = parsed {
            records.push(r);
        }
    }
    Ok(records)
}

/// Sidecar written next to every output file.
#[derive(Serialize)]
pub struct Sidecar<'a, T: Serialize> {
    pub command: &'a str,
    pub effective_config: &'a RunConfig,
    pub seed: u64,
    /// Conventions that the reference text leaves open, pinned here so
    /// results are interpretable.
    pub conventions: Conventions,
    pub versions: Versions,
    pub summary: T,
    /// Wall-clock seconds; excluded from reproducibility comparisons.
    pub wall_time_seconds: f64,
}

#[derive(Serialize)]
pub struct Conventions {
    pub crab_base_frequency: &'static str,
    pub crab_envelope: &'static str,
    pub crab_coefficient_box: f64,
    pub bound_enforcement: &'static str,
    pub fidelity_report_floor: f64,
    pub optimizer_bang: &'static str,
    pub optimizer_crab: &'static str,
    pub default_budget_bang: usize,
    pub default_budget_crab: usize,
    pub default_restarts_bang: u32,
    pub default_restarts_crab: u32,
    pub xatol: f64,
    pub fatol: f64,
    pub dense_eigendecomposition_max_dim: usize,
    pub gap_definition: &'static str,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            crab_base_frequency: "omega0 = 1/tau (principal harmonics of the window)",
            crab_envelope: "b(t) = (4/tau^2) t (t - tau), |b| peaks at 1",
            crab_coefficient_box: bangopt::protocols::CRAB_COEFF_MAX,
            bound_enforcement: "pointwise clamp of g(t) to [-g_max, g_max]",
            fidelity_report_floor: 1.0 - bangopt::evolution::FIDELITY_CLAMP_MARGIN,
            optimizer_bang: "Powell, random interior restarts",
            optimizer_crab: "adaptive Nelder-Mead, frequency redraw per restart",
            default_budget_bang: bangopt::optimize::DEFAULT_BUDGET_BANG,
            default_budget_crab: bangopt::optimize::DEFAULT_BUDGET_CRAB,
            default_restarts_bang: bangopt::optimize::DEFAULT_RESTARTS_BANG,
            default_restarts_crab: bangopt::optimize::DEFAULT_RESTARTS_CRAB,
            xatol: 1e-10,
            fatol: 1e-12,
            dense_eigendecomposition_max_dim: bangopt::quantum::DENSE_EIG_DIM_MAX,
            gap_definition: "lowest two levels of the full spectrum",
        }
    }
}

#[derive(Serialize)]
pub struct Versions {
    pub bangopt: &'static str,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            bangopt: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Writes `<output>.meta.json`.
pub fn write_sidecar<T: Serialize>(
    output: &str,
    command: &str,
    config: &RunConfig,
    seed: u64,
    summary: T,
    wall_time_seconds: f64,
) -> CliResult<PathBuf> {
    let sidecar = Sidecar {
        command,
        effective_config: config,
        seed,
        conventions: Conventions::default(),
        versions: Versions::default(),
        summary,
        wall_time_seconds,
    };
    let path = PathBuf::from(format!("{output}.meta.json"));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| CliError::Io(format!("sidecar serialization: {e}")))?;
    std::fs::write(&path, json)?;
    Ok(path)
}

pub fn csv_path(output: &str) -> PathBuf {
    PathBuf::from(format!("{output}.csv"))
}

pub fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}
