//! Run configuration: TOML sections with defaults, validation and
//! `--key=value` overrides.
//!
//! ```toml
//! [run]
//! solver = "compact_cheb"    # or "fourier_ref"
//! p = 2
//! eps = 1.0                  # default 1
//! T = 0.01
//! Nt = 1000
//! lambda = "auto"            # or a number
//! snapshot_every = 20        # default Nt/50
//! checkpoint_every = 20      # default snapshot_every
//! output = "step_p2"         # directory under the output root
//! stop_after = 500           # optional: stop early and leave a checkpoint
//!
//! [data]
//! family = "mollified_step(4)"
//! file = "profile.txt"       # only for family = "tabulated"
//!
//! [compact]
//! N = 600
//! c = 2.0
//!
//! [fourier]
//! M = 4096
//! L = 10.0
//!
//! [newton]
//! tol_update = 1e-12
//! tol_update_abs = 1e-14
//! tol_residual = 1e-10
//! max_iter = 30
//! ```

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use kdv_compact::data::{DataFamily, TabulatedData};
use kdv_compact::irk4::NewtonSettings;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub run: RunSection,
    pub data: DataSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compact: Option<CompactSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourier: Option<FourierSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton: Option<NewtonSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<String>,
    pub p: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    #[serde(rename = "Nt")]
    pub nt: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_after: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSetting {
    Policy(String),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompactSection {
    #[serde(rename = "N")]
    pub n: Option<i64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSection {
    #[serde(rename = "M")]
    pub m: Option<i64>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_update: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_update_abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<i64>,
}

const SCHEMA: &[(&str, &[&str])] = &[
    (
        "run",
        &[
            "solver",
            "p",
            "eps",
            "T",
            "Nt",
            "lambda",
            "snapshot_every",
            "checkpoint_every",
            "output",
            "stop_after",
        ],
    ),
    ("data", &["family", "file"]),
    ("compact", &["N", "c"]),
    ("fourier", &["M", "L"]),
    ("newton", &["tol_update", "tol_update_abs", "tol_residual", "max_iter"]),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solver {
    CompactCheb { n: usize, c: f64 },
    FourierRef { m: usize, l: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy {
    Auto,
    Explicit(f64),
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: Solver,
    pub p: u32,
    pub eps: f64,
    pub t_final: f64,
    pub nt: usize,
    pub family: DataFamily,
    pub lambda: LambdaPolicy,
    pub snapshot_every: usize,
    pub checkpoint_every: usize,
    pub output: Option<String>,
    pub stop_after: Option<usize>,
    pub newton: NewtonSettings,
    /// The resolved settings in file form, for echoing and checkpoints.
    pub resolved: RawConfig,
}

/// Parses configuration text, applies `--key=value` overrides and validates.
///
/// `base_dir` resolves relative data file paths.
pub fn parse_config(text: &str, overrides: &[String], base_dir: Option<&Path>) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().context("malformed configuration")?;
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    let merged = toml::to_string(&table).context("re-serializing configuration")?;
    let raw: RawConfig = toml::from_str(&merged).map_err(|e| describe(&merged, &e))?;
    validate(raw, base_dir)
}

/// Prefixes a deserialization error with the key on the offending line.
fn describe(text: &str, err: &toml::de::Error) -> anyhow::Error {
    let key = err.span().and_then(|span| {
        let start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
        let line = &text[start..];
        let line = &line[..line.find('\n').unwrap_or(line.len())];
        line.split_once('=').map(|(k, _)| k.trim().to_string())
    });
    match key {
        Some(k) if !k.starts_with('[') => anyhow!("`{k}`: {}", err.message()),
        _ => anyhow!("{}", err.message()),
    }
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text, overrides, path.parent())
}

/// Applies one `--section.key=value` or `--key=value` override.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let body = item.strip_prefix("--").unwrap_or(item);
    let (key, value) = body
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{item}` is not of the form --key=value"))?;
    let (section, field) = match key.split_once('.') {
        Some((s, f)) => {
            let known = SCHEMA
                .iter()
                .any(|(name, fields)| *name == s && fields.contains(&f));
            if !known {
                bail!("unknown configuration key `{key}`");
            }
            (s.to_string(), f.to_string())
        }
        None => {
            let owners: Vec<&str> = SCHEMA
                .iter()
                .filter(|(_, fields)| fields.contains(&key))
                .map(|(name, _)| *name)
                .collect();
            match owners.as_slice() {
                [one] => (one.to_string(), key.to_string()),
                [] => bail!("unknown configuration key `{key}`"),
                _ => bail!("ambiguous key `{key}`; write it as section.key"),
            }
        }
    };
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let entry = table
        .entry(section.clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(field, parsed);
        }
        _ => bail!("`{section}` is not a section"),
    }
    Ok(())
}

fn required<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("missing required key `{key}`"))
}

fn positive_int(v: i64, key: &str) -> Result<usize> {
    if v <= 0 {
        bail!("`{key}` must be a positive integer, got {v}");
    }
    Ok(v as usize)
}

fn positive_real(v: f64, key: &str) -> Result<f64> {
    if !(v.is_finite() && v > 0.0) {
        bail!("`{key}` must be positive, got {v}");
    }
    Ok(v)
}

fn validate(mut raw: RawConfig, base_dir: Option<&Path>) -> Result<RunConfig> {
    let run = &mut raw.run;
    let solver_name = run.solver.clone().unwrap_or_else(|| "compact_cheb".into());
    let p = required(run.p, "run.p")?;
    if !(2..=64).contains(&p) {
        bail!("`p` must be an integer >= 2, got {p}");
    }
    let eps = positive_real(run.eps.unwrap_or(1.0), "eps")?;
    let t_final = positive_real(required(run.t_final, "run.T")?, "T")?;
    let nt = positive_int(required(run.nt, "run.Nt")?, "Nt")?;
    let snapshot_every = positive_int(
        run.snapshot_every.unwrap_or((nt / 50).max(1) as i64),
        "snapshot_every",
    )?;
    let checkpoint_every = positive_int(
        run.checkpoint_every.unwrap_or(snapshot_every as i64),
        "checkpoint_every",
    )?;
    let stop_after = run
        .stop_after
        .map(|s| positive_int(s, "stop_after"))
        .transpose()?;
    let lambda = match &run.lambda {
        None => LambdaPolicy::Auto,
        Some(LambdaSetting::Policy(s)) if s == "auto" => LambdaPolicy::Auto,
        Some(LambdaSetting::Policy(s)) => bail!("`lambda` must be \"auto\" or a number, got \"{s}\""),
        Some(LambdaSetting::Value(v)) => {
            if !(v.is_finite() && *v >= 0.0) {
                bail!("`lambda` must be >= 0, got {v}");
            }
            LambdaPolicy::Explicit(*v)
        }
    };
    run.solver = Some(solver_name.clone());
    run.eps = Some(eps);
    run.snapshot_every = Some(snapshot_every as i64);
    run.checkpoint_every = Some(checkpoint_every as i64);
    if run.lambda.is_none() {
        run.lambda = Some(LambdaSetting::Policy("auto".into()));
    }

    let solver = match solver_name.as_str() {
        "compact_cheb" => {
            let s = raw
                .compact
                .as_ref()
                .ok_or_else(|| anyhow!("solver compact_cheb needs a [compact] section"))?;
            let n = positive_int(required(s.n, "compact.N")?, "N")?;
            if n < 4 {
                bail!("`N` must be at least 4, got {n}");
            }
            let c = positive_real(required(s.c, "compact.c")?, "c")?;
            Solver::CompactCheb { n, c }
        }
        "fourier_ref" => {
            let s = raw
                .fourier
                .as_ref()
                .ok_or_else(|| anyhow!("solver fourier_ref needs a [fourier] section"))?;
            let m = positive_int(required(s.m, "fourier.M")?, "M")?;
            if m < 8 || !m.is_power_of_two() {
                bail!("`M` must be a power of two >= 8, got {m}");
            }
            let l = positive_real(required(s.l, "fourier.L")?, "L")?;
            Solver::FourierRef { m, l }
        }
        other => bail!("`solver` must be compact_cheb or fourier_ref, got \"{other}\""),
    };

    let family_text = raw
        .data
        .family
        .clone()
        .ok_or_else(|| anyhow!("missing required key `data.family`"))?;
    let family = if family_text.trim() == "tabulated" {
        let file = raw
            .data
            .file
            .clone()
            .ok_or_else(|| anyhow!("family tabulated needs `data.file`"))?;
        let path = resolve_path(base_dir, &file);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading tabulated data {}", path.display()))?;
        DataFamily::Tabulated(TabulatedData::parse(&text).map_err(|e| anyhow!("`data.file`: {e}"))?)
    } else {
        family_text
            .parse::<DataFamily>()
            .map_err(|e| anyhow!("`family`: {e}"))?
    };
    family.validate().map_err(|e| anyhow!("`family`: {e}"))?;

    let defaults = NewtonSettings::default();
    let newton = match &raw.newton {
        None => defaults,
        Some(s) => NewtonSettings {
            tol_update: s.tol_update.unwrap_or(defaults.tol_update),
            tol_update_abs: s.tol_update_abs.unwrap_or(defaults.tol_update_abs),
            tol_residual: s.tol_residual.unwrap_or(defaults.tol_residual),
            max_iter: match s.max_iter {
                Some(v) => positive_int(v, "max_iter")?,
                None => defaults.max_iter,
            },
        },
    };
    newton.validate().map_err(|e| anyhow!("[newton]: {e}"))?;

    Ok(RunConfig {
        solver,
        p: p as u32,
        eps,
        t_final,
        nt,
        family,
        lambda,
        snapshot_every,
        checkpoint_every,
        output: raw.run.output.clone(),
        stop_after,
        newton,
        resolved: raw,
    })
}

fn resolve_path(base: Option<&Path>, file: &str) -> PathBuf {
    let p = Path::new(file);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

impl RunConfig {
    pub fn step_size(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// Resolved configuration as TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.resolved).expect("config serializes")
    }

    /// The part of the configuration that determines the trajectory;
    /// output placement and early stopping are excluded.
    pub fn trajectory_key(&self) -> RawConfig {
        let mut raw = self.resolved.clone();
        raw.run.output = None;
        raw.run.stop_after = None;
        raw
    }
}
