//! Run orchestration: compact and Fourier solvers, output files, checkpoints
//! and resumption.

use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use kdv_compact::data::DataFamily;
use kdv_compact::diagnostics::{choose_lambda, coefficients, conserved_quantities, DiagnosticsRecord, DriftTracker};
use kdv_compact::fourier::{evolve_periodic, FourierGrid, Nonlinearity};
use kdv_compact::irk4::{Integrator, StepObserver, StepStats};
use kdv_compact::problem::{background_coeffs, decompose, reconstruct, Discretization, FieldState, ProblemSpec};

use crate::config::{load_config, LambdaPolicy, RunConfig, Solver};
use crate::output::{
    diagnostics_row, unix_now, write_periodic_snapshot, write_snapshot, write_spectrum, Checkpoint,
    DiagnosticsWriter, FinalDiagnostics, Manifest, FORMAT_VERSION,
};

/// Environment variable naming the directory that holds run directories.
pub const OUTPUT_ROOT_VAR: &str = "KDV_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

/// What a finished (or stopped) run leaves behind in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    /// Nodal `u` on the solver's grid at the last completed step.
    pub final_u: Vec<f64>,
    /// Compact runs only.
    pub final_state: Option<FieldState>,
    pub spec: Option<ProblemSpec>,
    /// Diagnostics rows produced by this invocation.
    pub records: Vec<DiagnosticsRecord>,
}

/// Runs `config`, writing all outputs into `dir`.
pub fn run(config: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_FILE), config.to_toml())?;
    let started = unix_now();
    match config.solver {
        Solver::CompactCheb { .. } => {
            let setup = CompactSetup::new(config)?;
            let r0 = conserved_quantities(&setup.initial, &setup.disc, &setup.spec)?;
            let start = Start {
                step: 0,
                state: setup.initial.clone(),
                tracker: DriftTracker::new(r0.tracked()),
                writer: DiagnosticsWriter::create(&dir.join(DIAGNOSTICS_FILE))?,
            };
            drive(config, &setup, dir, start, started)
        }
        Solver::FourierRef { m, l } => run_fourier(config, dir, m, l, started),
    }
}

/// Continues the run stored in `dir` from its checkpoint.
pub fn resume(dir: &Path, overrides: &[String]) -> Result<RunOutcome> {
    let config_path = dir.join(CONFIG_FILE);
    if !config_path.exists() {
        bail!("{} is not a run directory (no {CONFIG_FILE})", dir.display());
    }
    let config = load_config(&config_path, overrides)?;
    let cp_path = dir.join(CHECKPOINT_FILE);
    if !cp_path.exists() {
        bail!("no checkpoint in {}", dir.display());
    }
    let cp = Checkpoint::read(&cp_path)?;
    let Solver::CompactCheb { n, .. } = config.solver else {
        bail!("only compact_cheb runs can be resumed");
    };
    if cp.n != n {
        bail!("checkpoint shape mismatch: checkpoint has N = {}, config has N = {n}", cp.n);
    }
    if cp.config != config.trajectory_key() {
        bail!("checkpoint was written for a different configuration; refusing to resume");
    }
    let point = cp.decode()?;
    let setup = CompactSetup::new(&config)?;
    let start = Start {
        step: point.step,
        state: FieldState {
            t: point.t,
            vt: point.v_tilde,
        },
        tracker: DriftTracker::restore(point.drift_initial, point.drift_max),
        writer: DiagnosticsWriter::reopen_truncated(&dir.join(DIAGNOSTICS_FILE), point.step)?,
    };
    let mut config = config;
    if config.stop_after.is_some_and(|s| s <= point.step) {
        config.stop_after = None;
    }
    drive(&config, &setup, dir, start, unix_now())
}

/// Discretization, equation and initial state of a compact run.
pub struct CompactSetup {
    pub disc: Discretization,
    pub spec: ProblemSpec,
    pub initial: FieldState,
}

impl CompactSetup {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let Solver::CompactCheb { n, c } = config.solver else {
            bail!("not a compact_cheb configuration");
        };
        let disc = Discretization::with_grid(n, c)?;
        let bd = config.family.boundary_data(&disc.grid)?;
        let background = background_coeffs(bd.u_left, bd.u_right, bd.slope_left_l)?;
        let lambda = match config.lambda {
            LambdaPolicy::Auto => choose_lambda(bd.u_left, bd.u_right, config.p)?,
            LambdaPolicy::Explicit(v) => v,
        };
        let spec = ProblemSpec::new(config.p, config.eps, background, lambda)?;
        spec.check_evolvable()?;
        let u0 = config.family.nodal_values(&disc.grid)?;
        let initial = decompose(&u0, &disc.grid, &background)?;
        Ok(Self { disc, spec, initial })
    }
}

struct Start {
    step: usize,
    state: FieldState,
    tracker: DriftTracker,
    writer: DiagnosticsWriter,
}

struct Recorder<'a> {
    config: &'a RunConfig,
    setup: &'a CompactSetup,
    dir: &'a Path,
    tracker: DriftTracker,
    writer: DiagnosticsWriter,
    records: Vec<DiagnosticsRecord>,
    last: Option<DiagnosticsRecord>,
    error: Option<anyhow::Error>,
}

impl Recorder<'_> {
    fn record(&mut self, step: usize, state: &FieldState, stats: &StepStats) -> Result<()> {
        let cfg = self.config;
        if step.is_multiple_of(cfg.snapshot_every) || step == cfg.nt {
            let mut rec = conserved_quantities(state, &self.setup.disc, &self.setup.spec)?;
            rec.newton_iters = stats.iterations;
            let drift = self.tracker.update(rec.tracked());
            self.writer.push(&diagnostics_row(step, &rec, drift))?;
            let grid = &self.setup.disc.grid;
            let u = reconstruct(state, grid, &self.setup.spec.background);
            write_snapshot(&snapshot_path(self.dir, step), state.t, grid, &state.vt, &u)?;
            write_spectrum(&spectrum_path(self.dir, step), &coefficients(state, grid)?)?;
            self.records.push(rec);
            self.last = Some(rec);
        }
        let stopping = cfg.stop_after == Some(step);
        if step > 0 && (step.is_multiple_of(cfg.checkpoint_every) || step == cfg.nt || stopping) {
            self.writer.flush()?;
            Checkpoint::new(
                cfg.trajectory_key(),
                step,
                state.t,
                &state.vt,
                self.tracker.initial(),
                self.tracker.max_drift(),
            )
            .write(&self.dir.join(CHECKPOINT_FILE))?;
        }
        Ok(())
    }
}

impl StepObserver for Recorder<'_> {
    fn on_step(&mut self, step: usize, state: &FieldState, stats: &StepStats) -> ControlFlow<()> {
        if let Err(e) = self.record(step, state, stats) {
            self.error = Some(e);
            return ControlFlow::Break(());
        }
        if self.config.stop_after == Some(step) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join("snapshots").join(format!("step_{step:07}.csv"))
}

pub fn spectrum_path(dir: &Path, step: usize) -> PathBuf {
    dir.join("spectra").join(format!("step_{step:07}.csv"))
}

fn drive(config: &RunConfig, setup: &CompactSetup, dir: &Path, start: Start, started: f64) -> Result<RunOutcome> {
    fs::create_dir_all(dir.join("snapshots"))?;
    fs::create_dir_all(dir.join("spectra"))?;
    let spec = setup.spec;
    let (u_left, u_right) = spec.background.limits();
    let tracked = if u_left != 0.0 || u_right != 0.0 {
        "modified_energy"
    } else {
        "energy"
    };
    let mut recorder = Recorder {
        config,
        setup,
        dir,
        tracker: start.tracker,
        writer: start.writer,
        records: Vec::new(),
        last: None,
        error: None,
    };
    let first = start.step;
    if first == 0 {
        let _ = recorder.on_step(0, &start.state, &StepStats::default());
    }
    let result = match recorder.error.take() {
        Some(e) => Err(e),
        None => Integrator::new(&setup.disc, &spec, config.step_size(), config.newton)
            .map_err(anyhow::Error::from)
            .and_then(|integ| {
                integ
                    .run(start.state.clone(), 0.0, first, config.nt, &mut recorder)
                    .map_err(anyhow::Error::from)
            }),
    };
    let result = match (result, recorder.error.take()) {
        (_, Some(e)) => Err(e),
        (r, None) => r,
    };
    recorder.writer.flush()?;

    let mut manifest = Manifest {
        format_version: FORMAT_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.resolved.clone(),
        status: String::new(),
        started_unix: started,
        finished_unix: 0.0,
        steps_completed: first,
        lambda: Some(spec.lambda),
        tracked_functional: Some(tracked.to_string()),
        max_rel_drift_tracked: Some(recorder.tracker.max_drift()),
        final_diagnostics: recorder.last.as_ref().map(FinalDiagnostics::from),
        failure: None,
    };
    match result {
        Ok((state, steps)) => {
            manifest.status = if steps < config.nt { "stopped" } else { "completed" }.into();
            manifest.steps_completed = steps;
            manifest.finished_unix = unix_now();
            manifest.write(&dir.join(MANIFEST_FILE))?;
            Ok(RunOutcome {
                dir: dir.to_path_buf(),
                manifest,
                final_u: reconstruct(&state, &setup.disc.grid, &spec.background),
                final_state: Some(state),
                spec: Some(spec),
                records: recorder.records,
            })
        }
        Err(e) => {
            manifest.status = "failed".into();
            manifest.failure = Some(format!("{e:#}"));
            manifest.finished_unix = unix_now();
            manifest.write(&dir.join(MANIFEST_FILE))?;
            Err(e)
        }
    }
}

fn run_fourier(config: &RunConfig, dir: &Path, m: usize, l: f64, started: f64) -> Result<RunOutcome> {
    let fgrid = FourierGrid::new(m, l)?;
    if matches!(config.family, DataFamily::Tabulated(_)) {
        bail!("fourier_ref needs a closed-form data family");
    }
    let u0: Vec<f64> = fgrid
        .nodes()
        .iter()
        .map(|&x| config.family.evaluate(x))
        .collect::<std::result::Result<_, _>>()?;
    fs::create_dir_all(dir.join("snapshots"))?;
    write_periodic_snapshot(&dir.join("snapshots").join("step_0000000.csv"), 0.0, fgrid.nodes(), &u0)?;
    let result = evolve_periodic(
        &u0,
        &fgrid,
        config.p,
        config.eps,
        config.t_final,
        config.nt,
        Nonlinearity::Enabled,
    );
    let mut manifest = Manifest {
        format_version: FORMAT_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.resolved.clone(),
        status: String::new(),
        started_unix: started,
        finished_unix: 0.0,
        steps_completed: 0,
        lambda: None,
        tracked_functional: None,
        max_rel_drift_tracked: None,
        final_diagnostics: None,
        failure: None,
    };
    match result {
        Ok(u) => {
            write_periodic_snapshot(
                &dir.join("snapshots").join(format!("step_{:07}.csv", config.nt)),
                config.t_final,
                fgrid.nodes(),
                &u,
            )?;
            manifest.status = "completed".into();
            manifest.steps_completed = config.nt;
            manifest.finished_unix = unix_now();
            manifest.write(&dir.join(MANIFEST_FILE))?;
            Ok(RunOutcome {
                dir: dir.to_path_buf(),
                manifest,
                final_u: u,
                final_state: None,
                spec: None,
                records: Vec::new(),
            })
        }
        Err(e) => {
            manifest.status = "failed".into();
            manifest.failure = Some(e.to_string());
            manifest.finished_unix = unix_now();
            manifest.write(&dir.join(MANIFEST_FILE))?;
            Err(anyhow!(e))
        }
    }
}

/// Shipped configurations of the published experiments.
pub const REPRODUCTIONS: &[(&str, &str)] = &[
    ("step_p2", include_str!("../configs/step_p2.cfg")),
    ("step_p4", include_str!("../configs/step_p4.cfg")),
    ("step2_fourier", include_str!("../configs/step2_fourier.cfg")),
    ("lorentz_p2", include_str!("../configs/lorentz_p2.cfg")),
    ("root_p2", include_str!("../configs/root_p2.cfg")),
    ("lorentz_p4", include_str!("../configs/lorentz_p4.cfg")),
    ("root_p4", include_str!("../configs/root_p4.cfg")),
];

pub fn reproduction_config(id: &str, overrides: &[String]) -> Result<RunConfig> {
    let (_, text) = REPRODUCTIONS
        .iter()
        .find(|(name, _)| *name == id)
        .ok_or_else(|| {
            let known: Vec<&str> = REPRODUCTIONS.iter().map(|(n, _)| *n).collect();
            anyhow!("unknown reproduction `{id}`; known: {}", known.join(", "))
        })?;
    crate::config::parse_config(text, overrides, None)
}

/// Runs a shipped configuration under `root`.
pub fn reproduce(id: &str, overrides: &[String], root: &Path) -> Result<RunOutcome> {
    let config = reproduction_config(id, overrides)?;
    let name = config.output.clone().unwrap_or_else(|| id.to_string());
    run(&config, &root.join(name))
}
