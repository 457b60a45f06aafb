//! On-disk formats: snapshots, spectra, diagnostics table, checkpoint and
//! manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use kdv_compact::diagnostics::DiagnosticsRecord;
use kdv_compact::domain::CompactGrid;
use kdv_compact::spectral::ChebCoefficients;
use serde::{Deserialize, Serialize};

use crate::config::RawConfig;

pub const FORMAT_VERSION: u32 = 1;

pub const DIAGNOSTICS_HEADER: &str =
    "step,t,mass,l2sq,energy,modified_energy,rel_drift_tracked,coeff_floor,newton_iters";

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One diagnostics CSV line (without newline).
pub fn diagnostics_row(step: usize, rec: &DiagnosticsRecord, drift: f64) -> String {
    format!(
        "{step},{},{},{},{},{},{},{},{}",
        num(rec.t),
        opt(rec.mass),
        opt(rec.l2sq),
        opt(rec.energy),
        num(rec.modified_energy),
        num(drift),
        num(rec.coeff_floor),
        rec.newton_iters
    )
}

/// Appends lines to the diagnostics table, creating it with its header.
pub struct DiagnosticsWriter {
    file: fs::File,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(file, "{DIAGNOSTICS_HEADER}")?;
        Ok(Self { file })
    }

    /// Reopens an existing table keeping only rows with `step <= last_step`.
    pub fn reopen_truncated(path: &Path, last_step: usize) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut kept = String::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line != DIAGNOSTICS_HEADER {
                    bail!("{} has an unexpected header", path.display());
                }
                kept.push_str(line);
                kept.push('\n');
                continue;
            }
            let step: usize = line
                .split(',')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| anyhow!("{}: malformed row {}", path.display(), i + 1))?;
            if step <= last_step {
                kept.push_str(line);
                kept.push('\n');
            }
        }
        fs::write(path, &kept)?;
        let file = fs::OpenOptions::new().append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn push(&mut self, line: &str) -> Result<()> {
        writeln!(self.file, "{line}")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.file.flush()?;
        Ok(())
    }
}

/// Snapshot CSV: `# t=<t>`, header `l,x,v_tilde,u`; `x` blank at the ends.
pub fn write_snapshot(path: &Path, t: f64, grid: &CompactGrid, vt: &[f64], u: &[f64]) -> Result<()> {
    let mut s = String::with_capacity(64 * grid.len());
    writeln!(s, "# t={}", num(t))?;
    writeln!(s, "l,x,v_tilde,u")?;
    for i in 0..grid.len() {
        let x = grid.x()[i];
        let xs = if x.is_finite() { num(x) } else { String::new() };
        writeln!(s, "{},{},{},{}", num(grid.l()[i]), xs, num(vt[i]), num(u[i]))?;
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// Periodic snapshot CSV: `# t=<t>`, header `x,u`.
pub fn write_periodic_snapshot(path: &Path, t: f64, x: &[f64], u: &[f64]) -> Result<()> {
    let mut s = String::with_capacity(48 * x.len());
    writeln!(s, "# t={}", num(t))?;
    writeln!(s, "x,u")?;
    for (xi, ui) in x.iter().zip(u) {
        writeln!(s, "{},{}", num(*xi), num(*ui))?;
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// Coefficient spectrum CSV: `n,abs_coeff`.
pub fn write_spectrum(path: &Path, coeffs: &ChebCoefficients) -> Result<()> {
    let mut s = String::from("n,abs_coeff\n");
    for (n, v) in coeffs.as_slice().iter().enumerate() {
        writeln!(s, "{n},{}", num(v.abs()))?;
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// Contents of a compact-grid snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub l: Vec<f64>,
    pub x: Vec<f64>,
    pub v_tilde: Vec<f64>,
    pub u: Vec<f64>,
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let t = lines
        .next()
        .and_then(|l| l.strip_prefix("# t="))
        .ok_or_else(|| anyhow!("{}: missing `# t=` line", path.display()))?
        .trim()
        .parse::<f64>()
        .context("bad time in snapshot header")?;
    if lines.next().map(str::trim) != Some("l,x,v_tilde,u") {
        bail!("{}: expected columns l,x,v_tilde,u", path.display());
    }
    let mut snap = Snapshot {
        t,
        l: Vec::new(),
        x: Vec::new(),
        v_tilde: Vec::new(),
        u: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            bail!("{}: row {} has {} columns", path.display(), i + 3, cols.len());
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("row {}: bad number `{s}`", i + 3))
        };
        snap.l.push(parse(cols[0])?);
        snap.x.push(if cols[1].trim().is_empty() {
            f64::NAN
        } else {
            parse(cols[1])?
        });
        snap.v_tilde.push(parse(cols[2])?);
        snap.u.push(parse(cols[3])?);
    }
    if snap.l.len() < 5 {
        bail!("{}: too few rows", path.display());
    }
    Ok(snap)
}

fn bits(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn from_bits(s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| anyhow!("corrupt checkpoint value `{s}`"))
}

/// Bit-exact restart point of a compact-grid run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RawConfig,
    pub n: usize,
    pub step: usize,
    pub t: String,
    pub drift_initial: String,
    pub drift_max: String,
    pub v_tilde: Vec<String>,
}

/// Decoded checkpoint values.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartPoint {
    pub step: usize,
    pub t: f64,
    pub drift_initial: f64,
    pub drift_max: f64,
    pub v_tilde: Vec<f64>,
}

impl Checkpoint {
    pub fn new(config: RawConfig, step: usize, t: f64, vt: &[f64], drift_initial: f64, drift_max: f64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config,
            n: vt.len() - 1,
            step,
            t: bits(t),
            drift_initial: bits(drift_initial),
            drift_max: bits(drift_max),
            v_tilde: vt.iter().map(|&v| bits(v)).collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string(self)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
        let cp: Checkpoint = serde_json::from_str(&text).with_context(|| format!("corrupt checkpoint {}", path.display()))?;
        if cp.format_version != FORMAT_VERSION {
            bail!(
                "checkpoint format version {} does not match this build ({FORMAT_VERSION})",
                cp.format_version
            );
        }
        if cp.v_tilde.len() != cp.n + 1 {
            bail!(
                "checkpoint shape mismatch: N = {} but {} values",
                cp.n,
                cp.v_tilde.len()
            );
        }
        Ok(cp)
    }

    pub fn decode(&self) -> Result<RestartPoint> {
        Ok(RestartPoint {
            step: self.step,
            t: from_bits(&self.t)?,
            drift_initial: from_bits(&self.drift_initial)?,
            drift_max: from_bits(&self.drift_max)?,
            v_tilde: self.v_tilde.iter().map(|s| from_bits(s)).collect::<Result<_>>()?,
        })
    }
}

/// Final diagnostics as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalDiagnostics {
    pub t: f64,
    pub mass: Option<f64>,
    pub l2sq: Option<f64>,
    pub energy: Option<f64>,
    pub modified_energy: f64,
    pub coeff_floor: f64,
}

impl From<&DiagnosticsRecord> for FinalDiagnostics {
    fn from(r: &DiagnosticsRecord) -> Self {
        Self {
            t: r.t,
            mass: r.mass,
            l2sq: r.l2sq,
            energy: r.energy,
            modified_energy: r.modified_energy,
            coeff_floor: r.coeff_floor,
        }
    }
}

/// Run record; every key is always present (`null` when not applicable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub code_version: String,
    pub config: RawConfig,
    pub status: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub steps_completed: usize,
    pub lambda: Option<f64>,
    pub tracked_functional: Option<String>,
    pub max_rel_drift_tracked: Option<f64>,
    pub final_diagnostics: Option<FinalDiagnostics>,
    pub failure: Option<String>,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}
