//! On-disk formats.
//!
//! Every writer puts a metadata sidecar next to its output: `name.csv` gets
//! `name.meta.toml`, holding the resolved run config (enough to repeat the
//! run), the code version and a configuration hash. Nothing time-dependent is
//! recorded, so identical runs produce identical bytes.
//!
//! Text files are CSV with a one-line header. Floats are written with 17
//! significant digits and read back bit-exactly.
//!
//! | file          | header                                         |
//! |---------------|------------------------------------------------|
//! | series        | `j,P`                                          |
//! | distribution  | `p,q,d` (row-major)                            |
//! | scan          | `M,horizon,j1,P1,j2,P2,P1_N,P2_lnN`            |
//!
//! Absent peaks leave their scan cells empty.
//!
//! # Binary distribution layout
//!
//! ```text
//! offset  size  content
//! 0       4     magic b"DQWD"
//! 4       4     M, u32 little-endian
//! 8       8     step j, u64 little-endian
//! 16      8*M*M d[p, q] as f64 little-endian, row-major (p outer, q inner)
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{emit_config, parse_config};
use crate::error::{Error, Result};
use crate::experiments::{config_hash, ExperimentPlan, Horizon, ScanReport, ScanRow};
use crate::observables::{DistributionSnapshot, SeriesMeta, TimeSeries};
use crate::peaks::{Peak, PeakParams, PeakRecord};

pub const BINARY_MAGIC: [u8; 4] = *b"DQWD";
const BINARY_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridFormat {
    #[default]
    Csv,
    Binary,
}

impl GridFormat {
    pub fn extension(self) -> &'static str {
        match self {
            GridFormat::Csv => "csv",
            GridFormat::Binary => "bin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Contents of a `.meta.toml` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    /// `series`, `distribution` or `scan`.
    pub artifact: String,
    pub version: String,
    pub config_hash: String,
    pub grid_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub realizations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realization: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitMeta>,
    /// Resolved run config, in the format read by [`parse_config`].
    pub config: toml::Table,
}

impl Sidecar {
    fn new(artifact: &str, plan: &ExperimentPlan<f64>, grid_sizes: Vec<usize>) -> Self {
        let config = toml::from_str(&emit_config(plan)).expect("emitted config is valid TOML");
        Self {
            artifact: artifact.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash(&plan.template, &plan.noise),
            grid_sizes,
            step: None,
            realizations: plan.noise.realizations,
            realization: None,
            excluded: Vec::new(),
            fit: None,
            config,
        }
    }

    /// Plan that reproduces the artifact.
    pub fn plan(&self) -> Result<ExperimentPlan<f64>> {
        let text = toml::to_string(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        let mut plan = parse_config(&text)?;
        if !self.grid_sizes.is_empty() {
            plan.grid_sizes = self.grid_sizes.clone();
        }
        Ok(plan)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).expect("sidecar always serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string().trim_end()))
    }
}

/// `dir/name.csv` -> `dir/name.meta.toml`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.toml")
}

/// `plan` narrowed to one grid size and a fixed horizon.
fn plan_for(plan: &ExperimentPlan<f64>, size: usize, steps: usize) -> Result<ExperimentPlan<f64>> {
    let mut p = plan.clone();
    p.template = plan.template.with_size(size)?;
    p.grid_sizes = vec![size];
    p.horizon = Horizon::Fixed(steps);
    Ok(p)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Data rows of a CSV file after checking its header.
fn csv_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut lines = open(path)?.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim_end() == header => {}
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        _ => return Err(Error::format(path, format!("expected header `{header}`"))),
    }
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|c| c.trim().to_owned()).collect();
        if cells.len() != width {
            return Err(Error::format(
                path,
                format!("line {}: expected {width} columns, found {}", i + 1, cells.len()),
            ));
        }
        rows.push((i + 1, cells));
    }
    Ok(rows)
}

fn cell<T: std::str::FromStr>(path: &Path, line: usize, text: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::format(path, format!("line {line}: cannot parse `{text}`")))
}

fn opt_cell<T: std::str::FromStr>(path: &Path, line: usize, text: &str) -> Result<Option<T>> {
    if text.is_empty() {
        Ok(None)
    } else {
        cell(path, line, text).map(Some)
    }
}

/// Writes `j,P` rows and the sidecar.
pub fn write_series(series: &TimeSeries<f64>, path: impl AsRef<Path>, plan: &ExperimentPlan<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let mut body = String::with_capacity(32 * (series.len() + 1));
    body.push_str("j,P\n");
    for (j, p) in series.entries() {
        body.push_str(&format!("{j},{}\n", fmt_f64(p)));
    }
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))?;

    let mut meta = Sidecar::new("series", &plan_for(plan, series.size, series.horizon())?, vec![series.size]);
    meta.realizations = series.meta.realizations;
    meta.realization = series.meta.realization;
    meta.write(&sidecar_path(path))
}

/// Reads a series; grid size and provenance come from the sidecar when one
/// exists, otherwise the size is left at 0.
pub fn read_series(path: impl AsRef<Path>) -> Result<TimeSeries<f64>> {
    let path = path.as_ref();
    let rows = csv_rows(path, "j,P")?;
    let mut probabilities = Vec::with_capacity(rows.len());
    for (line, cells) in rows {
        let j: usize = cell(path, line, &cells[0])?;
        if j != probabilities.len() {
            return Err(Error::format(path, format!("line {line}: expected step {}, found {j}", probabilities.len())));
        }
        probabilities.push(cell(path, line, &cells[1])?);
    }
    let mut series = TimeSeries::new(0, probabilities);
    let meta_path = sidecar_path(path);
    if meta_path.exists() {
        let sidecar = Sidecar::read(&meta_path)?;
        let plan = sidecar.plan()?;
        series.size = plan.template.size();
        series.meta = SeriesMeta {
            noise_kind: plan.noise.kind,
            noise_ratio: plan.noise.ratio,
            master_seed: plan.noise.master_seed,
            realizations: sidecar.realizations,
            realization: sidecar.realization,
            config_hash: sidecar.config_hash,
        };
    }
    Ok(series)
}

/// Writes a distribution in the requested format plus its sidecar.
pub fn write_distribution(
    snapshot: &DistributionSnapshot<f64>,
    path: impl AsRef<Path>,
    format: GridFormat,
    plan: &ExperimentPlan<f64>,
) -> Result<()> {
    let path = path.as_ref();
    let m = snapshot.size;
    let mut out = create(path)?;
    let written = match format {
        GridFormat::Csv => {
            let mut body = String::with_capacity(32 * (m * m + 1));
            body.push_str("p,q,d\n");
            for p in 0..m {
                for q in 0..m {
                    body.push_str(&format!("{p},{q},{}\n", fmt_f64(snapshot.get(p, q))));
                }
            }
            out.write_all(body.as_bytes())
        }
        GridFormat::Binary => {
            let side = u32::try_from(m).map_err(|_| Error::InvalidInput(format!("grid size {m} exceeds u32")))?;
            let mut bytes = Vec::with_capacity(BINARY_HEADER_LEN + 8 * m * m);
            bytes.extend_from_slice(&BINARY_MAGIC);
            bytes.extend_from_slice(&side.to_le_bytes());
            bytes.extend_from_slice(&(snapshot.step as u64).to_le_bytes());
            for v in &snapshot.values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&bytes)
        }
    };
    written.and_then(|_| out.flush()).map_err(|e| Error::io(path, e))?;

    let steps = match plan.horizon {
        Horizon::Fixed(h) => h.max(snapshot.step),
        Horizon::Auto => plan.horizon_for(m).max(snapshot.step),
    };
    let mut meta = Sidecar::new("distribution", &plan_for(plan, m, steps)?, vec![m]);
    meta.step = Some(snapshot.step);
    meta.write(&sidecar_path(path))
}

/// Reads either distribution format, telling them apart by the magic bytes.
/// The step of a CSV grid comes from its sidecar (0 without one).
pub fn read_distribution(path: impl AsRef<Path>) -> Result<DistributionSnapshot<f64>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&BINARY_MAGIC) {
        return decode_binary(path, &bytes);
    }

    let rows = csv_rows(path, "p,q,d")?;
    let m = (rows.len() as f64).sqrt().round() as usize;
    if m * m != rows.len() || m == 0 {
        return Err(Error::format(path, format!("{} rows do not form a square grid", rows.len())));
    }
    let mut values = Vec::with_capacity(rows.len());
    for (k, (line, cells)) in rows.into_iter().enumerate() {
        let p: usize = cell(path, line, &cells[0])?;
        let q: usize = cell(path, line, &cells[1])?;
        if (p, q) != (k / m, k % m) {
            return Err(Error::format(path, format!("line {line}: rows must be row-major")));
        }
        values.push(cell(path, line, &cells[2])?);
    }
    let meta_path = sidecar_path(path);
    let step = if meta_path.exists() {
        Sidecar::read(&meta_path)?.step.unwrap_or(0)
    } else {
        0
    };
    DistributionSnapshot::new(m, step, values)
}

fn decode_binary(path: &Path, bytes: &[u8]) -> Result<DistributionSnapshot<f64>> {
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    let m = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let step = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[BINARY_HEADER_LEN..];
    if body.len() != 8 * m * m {
        return Err(Error::format(
            path,
            format!("expected {} data bytes for M = {m}, found {}", 8 * m * m, body.len()),
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DistributionSnapshot::new(m, step, values)
}

const SCAN_HEADER: &str = "M,horizon,j1,P1,j2,P2,P1_N,P2_lnN";

/// Writes one row per grid size plus a sidecar carrying the fit.
pub fn write_scan(report: &ScanReport<f64>, path: impl AsRef<Path>, plan: &ExperimentPlan<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut body = format!("{SCAN_HEADER}\n");
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for row in &report.rows {
        let (j1, p1) = split_peak(row.peaks.first);
        let (j2, p2) = split_peak(row.peaks.second);
        body.push_str(&format!(
            "{},{},{j1},{},{j2},{},{},{}\n",
            row.size,
            row.horizon,
            opt(p1),
            opt(p2),
            opt(row.first_collapse),
            opt(row.second_collapse),
        ));
    }
    let mut out = create(path)?;
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))?;

    let mut meta = Sidecar::new("scan", plan, report.rows.iter().map(|r| r.size).collect());
    meta.excluded = report.excluded.clone();
    meta.fit = report.fit.as_ref().map(|f| FitMeta {
        slope: f.slope,
        intercept: f.intercept,
        r_squared: f.r_squared,
    });
    meta.write(&sidecar_path(path))
}

fn split_peak(peak: Option<Peak<f64>>) -> (String, Option<f64>) {
    match peak {
        Some(p) => (p.step.to_string(), Some(p.probability)),
        None => (String::new(), None),
    }
}

/// Reads scan rows; detection parameters come from the sidecar if present.
pub fn read_scan(path: impl AsRef<Path>) -> Result<Vec<ScanRow<f64>>> {
    let path = path.as_ref();
    let meta_path = sidecar_path(path);
    let params = if meta_path.exists() {
        Sidecar::read(&meta_path)?.plan()?.peak_params
    } else {
        PeakParams::default()
    };
    let peak = |line, j: &str, p: &str| -> Result<Option<Peak<f64>>> {
        match (opt_cell::<usize>(path, line, j)?, opt_cell::<f64>(path, line, p)?) {
            (Some(step), Some(probability)) => Ok(Some(Peak { step, probability })),
            (None, None) => Ok(None),
            _ => Err(Error::format(path, format!("line {line}: peak step and height must both be present"))),
        }
    };
    csv_rows(path, SCAN_HEADER)?
        .into_iter()
        .map(|(line, c)| {
            Ok(ScanRow {
                size: cell(path, line, &c[0])?,
                horizon: cell(path, line, &c[1])?,
                peaks: PeakRecord {
                    first: peak(line, &c[2], &c[3])?,
                    second: peak(line, &c[4], &c[5])?,
                    params,
                },
                first_collapse: opt_cell(path, line, &c[6])?,
                second_collapse: opt_cell(path, line, &c[7])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_ensemble_with_snapshots, scaling_scan};
    use crate::lattice::LatticeConfig;
    use crate::oracle::NoiseSpec;
    use approx::assert_relative_eq;

    fn plan(m: usize) -> ExperimentPlan<f64> {
        ExperimentPlan::new(LatticeConfig::new(m).unwrap())
    }

    #[test]
    fn series_rows_and_bit_exact_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let values = vec![0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300];
        let mut series = TimeSeries::new(6, values.clone());
        series.meta.realization = Some(0);
        write_series(&series, &path, &plan(6)).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next(), Some("j,P"));
        let back = read_series(&path).unwrap();
        assert_eq!(back.size, 6);
        for (a, b) in back.probabilities.iter().zip(&values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.meta.realization, Some(0));
    }

    #[test]
    fn sidecar_reproduces_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let mut p = plan(12);
        p.noise = NoiseSpec::spatial(0.25, 99, 3);
        let (series, _) = run_ensemble_with_snapshots(&p.template, &p.noise, 30, &[]).unwrap();
        write_series(&series, &path, &p).unwrap();

        let meta = Sidecar::read(&sidecar_path(&path)).unwrap();
        assert_eq!(meta.artifact, "series");
        assert_eq!(meta.version, env!("CARGO_PKG_VERSION"));
        let again = meta.plan().unwrap();
        assert_eq!(again.horizon, Horizon::Fixed(30));
        let (rerun, _) = run_ensemble_with_snapshots(&again.template, &again.noise, 30, &[]).unwrap();
        assert_eq!(rerun.probabilities, series.probabilities);
        assert!(!std::fs::read_to_string(sidecar_path(&path)).unwrap().contains("time"));
    }

    #[test]
    fn distribution_formats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = plan(2);
        let snap = DistributionSnapshot::new(2, 5, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let csv = dir.path().join("d.csv");
        let bin = dir.path().join("d.bin");
        write_distribution(&snap, &csv, GridFormat::Csv, &p).unwrap();
        write_distribution(&snap, &bin, GridFormat::Binary, &p).unwrap();

        assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 5);
        let bytes = std::fs::read(&bin).unwrap();
        assert_eq!(bytes.len(), 16 + 4 * 8);
        assert_eq!(&bytes[..4], b"DQWD");
        assert_eq!(bytes[4..8], 2u32.to_le_bytes());
        assert_eq!(bytes[8..16], 5u64.to_le_bytes());
        assert_eq!(bytes[16..24], 0.1f64.to_le_bytes());

        let a = read_distribution(&csv).unwrap();
        let b = read_distribution(&bin).unwrap();
        assert_eq!(a, snap);
        assert_eq!(a, b);
    }

    #[test]
    fn emitted_distribution_is_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let p = plan(16);
        let (_, snaps) = run_ensemble_with_snapshots(&p.template, &p.noise, 40, &[40]).unwrap();
        let path = dir.path().join("d.csv");
        write_distribution(&snaps[0], &path, GridFormat::Csv, &p).unwrap();
        let total: f64 = read_distribution(&path).unwrap().values.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
        assert_eq!(read_distribution(&path).unwrap().step, 40);
    }

    #[test]
    fn scan_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = plan(20);
        p.grid_sizes = vec![20, 30];
        p.horizon = Horizon::Fixed(150);
        let report = scaling_scan(&p).unwrap();
        let path = dir.path().join("scan.csv");
        write_scan(&report, &path, &p).unwrap();
        let rows = read_scan(&path).unwrap();
        assert_eq!(rows.len(), 2);
        for (a, b) in rows.iter().zip(&report.rows) {
            assert_eq!(a.size, b.size);
            assert_eq!(a.horizon, b.horizon);
            assert_eq!(a.peaks, b.peaks);
            assert_eq!(a.first_collapse, b.first_collapse);
            assert_eq!(a.second_collapse, b.second_collapse);
        }
        assert_eq!(Sidecar::read(&sidecar_path(&path)).unwrap().grid_sizes, vec![20, 30]);
    }

    #[test]
    fn malformed_files_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "j,P\n0,0.5\n2,0.1\n").unwrap();
        let msg = read_series(&path).unwrap_err().to_string();
        assert!(msg.contains("bad.csv") && msg.contains("line 3"), "{msg}");

        std::fs::write(&path, "x,y\n").unwrap();
        assert!(read_series(&path).is_err());

        let missing = dir.path().join("missing.csv");
        assert!(matches!(read_series(&missing), Err(Error::Io { .. })));

        std::fs::write(&path, b"DQWD\x02\x00\x00\x00").unwrap();
        assert!(read_distribution(&path).is_err());
    }
}
