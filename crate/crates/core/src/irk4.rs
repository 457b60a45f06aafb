//! Two-stage Gauss (Hammer–Hollingsworth) time stepping of the reduced
//! equation for `ṽ`.
//!
//! The stage equations are split into the stiff dispersive part, which is
//! kept implicit through the operator
//!
//! ```text
//! ℒ = 1 + h·a₁₁·ε²·(1/(1+l))·∂xxx·(1+l)
//! ```
//!
//! and the rest, which is iterated. Each sweep solves `ℒ K₁ = F₁(K₂)` and then
//! `ℒ K₂ = F₂(K₁)` with a single LU factorisation of the interior block of `ℒ`;
//! the endpoint entries of both stages stay at zero.

use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::domain::scaled_block;
use crate::error::{invalid, Error, Result};
use crate::problem::{Discretization, FieldState, ProblemSpec};
use crate::spectral::DenseOperator;

/// Butcher tableau of the 2-stage Gauss method (order 4).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ButcherTableau {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
}

impl ButcherTableau {
    pub fn gauss2() -> Self {
        let r = 3f64.sqrt() / 6.0;
        Self {
            a: [[0.25, 0.25 - r], [0.25 + r, 0.25]],
            b: [0.5, 0.5],
            c: [0.5 - r, 0.5 + r],
        }
    }
}

impl Default for ButcherTableau {
    fn default() -> Self {
        Self::gauss2()
    }
}

/// Stopping rules of the simplified Newton sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Stop when `‖ΔK‖∞ ≤ tol_update·‖K‖∞`.
    pub tol_update: f64,
    /// ... or when `‖ΔK‖∞ ≤ tol_update_abs`.
    pub tol_update_abs: f64,
    /// Bound on the stage residual, measured in state units as `|h|·‖ΔK‖∞`
    /// of the last sweep.
    pub tol_residual: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol_update: 1e-12,
            tol_update_abs: 1e-14,
            tol_residual: 1e-10,
            max_iter: 30,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_update > 0.0) {
            return Err(invalid("tol_update", "must be positive"));
        }
        if !(self.tol_update_abs >= 0.0) {
            return Err(invalid("tol_update_abs", "must be non-negative"));
        }
        if !(self.tol_residual > 0.0) {
            return Err(invalid("tol_residual", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// The implicit operator `ℒ` for one step size, with its reduced factorisation.
pub struct StageOperator {
    h: f64,
    full: DenseOperator,
    /// `ε²·(1/(1+l))·∂xxx·(1+l)` on the interior block.
    dispersive: DMatrix<f64>,
    /// `ε²·(1/(1+l))·∂xxx V` on the interior nodes.
    background_term: Vec<f64>,
    lu: LU<f64, Dyn, Dyn>,
}

impl std::fmt::Debug for StageOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StageOperator")
            .field("h", &self.h)
            .field("dim", &self.full.dim())
            .finish()
    }
}

impl StageOperator {
    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// `ℒ` on all nodes. The row at `l = -1`, where `1/(1+l)` is undefined,
    /// is the identity row; it never enters the reduced system.
    pub fn full(&self) -> &DenseOperator {
        &self.full
    }

    /// Interior block of `ℒ` (rows and columns `1..N-1`).
    pub fn reduced(&self) -> DMatrix<f64> {
        let n = self.full.dim() - 1;
        self.full.matrix().view((1, 1), (n - 1, n - 1)).into_owned()
    }

    pub fn factorization(&self) -> &LU<f64, Dyn, Dyn> {
        &self.lu
    }

    /// Solves the reduced system `ℒ_int x = b` for interior vectors.
    pub fn solve_reduced(&self, b: &[f64]) -> Vec<f64> {
        let mut v = DVector::from_column_slice(b);
        self.lu.solve_mut(&mut v);
        v.data.into()
    }

    fn apply_dispersive(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let xv = nalgebra::DVectorView::from_slice(x, n);
        let mut ov = nalgebra::DVectorViewMut::from_slice(out, n);
        ov.gemv(1.0, &self.dispersive, &xv, 0.0);
    }
}

/// Assembles `ℒ` for step size `h` and factors its interior block.
///
/// Negative `h` is accepted so that a step can be retraced backwards.
pub fn build_stage_operator(disc: &Discretization, spec: &ProblemSpec, h: f64) -> Result<StageOperator> {
    if !(h.is_finite() && h != 0.0) {
        return Err(invalid("h", format!("step size must be finite and nonzero, got {h}")));
    }
    let grid = &disc.grid;
    let n = grid.degree();
    let size = grid.len();
    let a11 = ButcherTableau::gauss2().a[0][0];
    let eps2 = spec.eps * spec.eps;

    let one_plus = grid.one_plus_l();
    let inv_one_plus: Vec<f64> = one_plus
        .iter()
        .map(|&p| if p > 0.0 { eps2 / p } else { 0.0 })
        .collect();
    let third = disc.ops.third.matrix();

    let mut full = DMatrix::<f64>::zeros(size, size);
    for j in 0..size {
        for i in 0..n {
            full[(i, j)] = h * a11 * inv_one_plus[i] * third[(i, j)] * one_plus[j];
        }
    }
    for i in 0..size {
        full[(i, i)] += 1.0;
    }

    let dispersive = scaled_block(third, &inv_one_plus, one_plus, grid.interior());
    let bg = spec.background.nodal(grid);
    let third_bg = disc.ops.third.apply(bg.values());
    let background_term = grid
        .interior()
        .map(|i| inv_one_plus[i] * third_bg[i])
        .collect();

    let reduced = full.view((1, 1), (n - 1, n - 1)).into_owned();
    let lu = reduced.lu();
    let singular = || Error::SingularOperator {
        n,
        c: grid.map_constant(),
        h,
        eps: spec.eps,
    };
    if !lu.is_invertible() {
        return Err(singular());
    }
    let u = lu.u();
    let diag_max = u.diagonal().amax();
    let diag_min = u.diagonal().iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if !(diag_min > diag_max * 1e3 * f64::EPSILON) {
        return Err(singular());
    }
    Ok(StageOperator {
        h,
        full: DenseOperator::from_matrix(full),
        dispersive,
        background_term,
        lu,
    })
}

/// Converged stage values.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSolution {
    /// Stage derivatives at all nodes; endpoint entries are zero.
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub iterations: usize,
    /// `|h|·‖ΔK‖∞` of the final sweep.
    pub residual: f64,
}

/// Per-step statistics handed to observers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Everything needed to advance one step; built once per run.
pub struct Integrator<'a> {
    disc: &'a Discretization,
    spec: ProblemSpec,
    op: StageOperator,
    settings: NewtonSettings,
    tableau: ButcherTableau,
    background: Vec<f64>,
    power: i32,
}

impl<'a> Integrator<'a> {
    pub fn new(disc: &'a Discretization, spec: &ProblemSpec, h: f64, settings: NewtonSettings) -> Result<Self> {
        spec.check_evolvable()?;
        settings.validate()?;
        let op = build_stage_operator(disc, spec, h)?;
        Self::with_operator(disc, spec, op, settings)
    }

    pub fn with_operator(
        disc: &'a Discretization,
        spec: &ProblemSpec,
        op: StageOperator,
        settings: NewtonSettings,
    ) -> Result<Self> {
        spec.check_evolvable()?;
        settings.validate()?;
        if op.full.dim() != disc.grid.len() {
            return Err(Error::LengthMismatch {
                expected: disc.grid.len(),
                found: op.full.dim(),
            });
        }
        let background = spec.background.nodal(&disc.grid).values().to_vec();
        Ok(Self {
            disc,
            spec: *spec,
            op,
            settings,
            tableau: ButcherTableau::gauss2(),
            background,
            power: spec.p as i32 - 1,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.op.h
    }

    pub fn operator(&self) -> &StageOperator {
        &self.op
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    /// Nonlinear part `(1/(1+l))·u^{p−1}·∂x u` on the interior, for the
    /// interior stage argument `y`.
    fn nonlinear(&self, y: &[f64], u: &mut [f64], ux: &mut [f64], out: &mut [f64]) {
        let grid = &self.disc.grid;
        let one_plus = grid.one_plus_l();
        let n = grid.degree();
        u[0] = self.background[0];
        u[n] = self.background[n];
        for i in 1..n {
            u[i] = one_plus[i] * y[i - 1] + self.background[i];
        }
        self.disc.ops.first.apply_into(u, ux);
        for i in 1..n {
            out[i - 1] = u[i].powi(self.power) * ux[i] / one_plus[i];
        }
    }

    /// Solves the stage system for the current state by simplified Newton
    /// sweeps started from `K₁ = K₂ = 0`.
    pub fn newton_stages(&self, state: &FieldState) -> Result<StageSolution> {
        let grid = &self.disc.grid;
        if state.vt.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: state.vt.len(),
            });
        }
        let n = grid.degree();
        let m = n - 1;
        let h = self.op.h;
        let a = self.tableau.a;
        let v = &state.vt[1..n];

        let mut base = vec![0.0; m];
        self.op.apply_dispersive(v, &mut base);
        for (b, g) in base.iter_mut().zip(&self.op.background_term) {
            *b = -*b - g;
        }

        let mut k1 = vec![0.0; m];
        let mut k2 = vec![0.0; m];
        let mut y = vec![0.0; m];
        let mut coupling = vec![0.0; m];
        let mut nl = vec![0.0; m];
        let mut rhs = DVector::<f64>::zeros(m);
        let mut u = vec![0.0; n + 1];
        let mut ux = vec![0.0; n + 1];

        let mut last_update = f64::INFINITY;
        for iter in 1..=self.settings.max_iter {
            let mut update: f64 = 0.0;
            for stage in 0..2 {
                let (own, other) = if stage == 0 {
                    (&mut k1, &k2)
                } else {
                    (&mut k2, &k1)
                };
                let (a_own, a_other) = if stage == 0 {
                    (a[0][0], a[0][1])
                } else {
                    (a[1][1], a[1][0])
                };
                for i in 0..m {
                    y[i] = v[i] + h * (a_own * own[i] + a_other * other[i]);
                }
                self.nonlinear(&y, &mut u, &mut ux, &mut nl);
                self.op.apply_dispersive(other, &mut coupling);
                for i in 0..m {
                    rhs[i] = base[i] - h * a_other * coupling[i] - nl[i];
                }
                self.op.lu.solve_mut(&mut rhs);
                for i in 0..m {
                    let new = rhs[i];
                    if !new.is_finite() {
                        return Err(Error::NonFinite {
                            what: "stage value",
                            index: i + 1,
                        });
                    }
                    update = update.max((new - own[i]).abs());
                    own[i] = new;
                }
            }
            let scale = k1
                .iter()
                .chain(&k2)
                .fold(0.0f64, |mx, k| mx.max(k.abs()));
            let residual = h.abs() * update;
            let converged = update <= self.settings.tol_update * scale
                || update <= self.settings.tol_update_abs;
            // no further contraction: rounding floor reached
            let stalled = update >= last_update && residual <= self.settings.tol_residual;
            if converged || stalled || iter == self.settings.max_iter {
                if residual > self.settings.tol_residual {
                    return Err(Error::NonConvergence {
                        iterations: iter,
                        residual,
                    });
                }
                return Ok(StageSolution {
                    k1: pad(&k1),
                    k2: pad(&k2),
                    iterations: iter,
                    residual,
                });
            }
            last_update = update;
        }
        unreachable!("loop returns on the final iteration")
    }

    /// One step `ṽ ← ṽ + h(b₁K₁ + b₂K₂)`.
    pub fn step(&self, state: &FieldState) -> Result<(FieldState, StepStats)> {
        let stages = self.newton_stages(state)?;
        let h = self.op.h;
        let b = self.tableau.b;
        let mut vt = state.vt.clone();
        let n = vt.len() - 1;
        for i in 1..n {
            vt[i] += h * (b[0] * stages.k1[i] + b[1] * stages.k2[i]);
        }
        vt[0] = 0.0;
        vt[n] = 0.0;
        Ok((
            FieldState { t: state.t + h, vt },
            StepStats {
                iterations: stages.iterations,
                residual: stages.residual,
            },
        ))
    }

    /// Advances `state` through steps `first..last` (absolute step indices).
    ///
    /// Times are set to `t0 + k·h` rather than accumulated, so a run resumed
    /// from step `first` reproduces the uninterrupted times exactly. The
    /// observer sees every completed step and may stop the loop early.
    pub fn run<O: StepObserver + ?Sized>(
        &self,
        state: FieldState,
        t0: f64,
        first: usize,
        last: usize,
        observer: &mut O,
    ) -> Result<(FieldState, usize)> {
        let mut state = state;
        for k in first..last {
            let (mut next, stats) = self.step(&state).map_err(|e| Error::StepFailed {
                step: k + 1,
                source: Box::new(e),
            })?;
            next.t = t0 + (k + 1) as f64 * self.op.h;
            state = next;
            if observer.on_step(k + 1, &state, &stats).is_break() {
                return Ok((state, k + 1));
            }
        }
        Ok((state, last))
    }
}

fn pad(interior: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(interior.len() + 2);
    out.push(0.0);
    out.extend_from_slice(interior);
    out.push(0.0);
    out
}

/// Hook invoked with `(step index, state, stage statistics)`; step 0 is the
/// initial state.
pub trait StepObserver {
    fn on_step(&mut self, step: usize, state: &FieldState, stats: &StepStats) -> ControlFlow<()>;
}

impl<F> StepObserver for F
where
    F: FnMut(usize, &FieldState, &StepStats) -> ControlFlow<()>,
{
    fn on_step(&mut self, step: usize, state: &FieldState, stats: &StepStats) -> ControlFlow<()> {
        self(step, state, stats)
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl StepObserver for NoObserver {
    fn on_step(&mut self, _: usize, _: &FieldState, _: &StepStats) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

/// Per-step record kept by [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Result of a fixed-step run.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub final_state: FieldState,
    pub records: Vec<StepRecord>,
}

/// Integrates from `initial` to time `t_final` with `steps` equal steps.
pub fn evolve<O: StepObserver + ?Sized>(
    initial: &FieldState,
    disc: &Discretization,
    spec: &ProblemSpec,
    settings: &NewtonSettings,
    t_final: f64,
    steps: usize,
    hooks: &mut O,
) -> Result<Evolution> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(invalid("T", format!("final time must be positive, got {t_final}")));
    }
    if steps == 0 {
        return Err(invalid("Nt", "need at least one time step"));
    }
    let h = t_final / steps as f64;
    let integrator = Integrator::new(disc, spec, h, *settings)?;
    let mut records = Vec::with_capacity(steps);
    let _ = hooks.on_step(0, initial, &StepStats::default());
    let mut observer = |k: usize, s: &FieldState, st: &StepStats| {
        records.push(StepRecord {
            step: k,
            t: s.t,
            iterations: st.iterations,
            residual: st.residual,
        });
        hooks.on_step(k, s, st)
    };
    let (final_state, _) = integrator.run(initial.clone(), initial.t, 0, steps, &mut observer)?;
    Ok(Evolution {
        final_state,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{decompose, Background};

    fn spec(p: u32) -> ProblemSpec {
        ProblemSpec::new(p, 1.0, Background::ZERO, 0.0).unwrap()
    }

    fn soliton_state(disc: &Discretization, p: u32) -> FieldState {
        let fam = crate::data::DataFamily::Soliton { speed: 1.0, p, x0: 0.0 };
        let u = fam.nodal_values(&disc.grid).unwrap();
        decompose(&u, &disc.grid, &Background::ZERO).unwrap()
    }

    #[test]
    fn tableau_consistency() {
        let t = ButcherTableau::gauss2();
        for i in 0..2 {
            assert!((t.a[i][0] + t.a[i][1] - t.c[i]).abs() < 1e-15);
        }
        assert_eq!(t.b[0] + t.b[1], 1.0);
        // order conditions up to 4 for the quadrature part
        for q in 1..=4 {
            let s: f64 = (0..2).map(|i| t.b[i] * t.c[i].powi(q - 1)).sum();
            assert!((s - 1.0 / q as f64).abs() < 1e-15, "q = {q}");
        }
    }

    #[test]
    fn operator_limits() {
        let disc = Discretization::with_grid(32, 2.0).unwrap();
        let s = spec(2);
        let tiny = build_stage_operator(&disc, &s, 1e-300).unwrap();
        let b: Vec<f64> = (0..31).map(|i| (i as f64).sin()).collect();
        let x = tiny.solve_reduced(&b);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() <= 1e-15);
        }

        let op1 = build_stage_operator(&disc, &s, 1e-3).unwrap();
        let op2 = build_stage_operator(&disc, &s, 2e-3).unwrap();
        let id = DMatrix::<f64>::identity(33, 33);
        let d1 = op1.full().matrix() - &id;
        let d2 = op2.full().matrix() - &id;
        let scale = d1.amax();
        assert!((d2 - d1 * 2.0).amax() <= 1e-14 * scale);

        assert!(build_stage_operator(&disc, &s, 0.0).is_err());
        assert!(build_stage_operator(&disc, &s, f64::NAN).is_err());
    }

    #[test]
    fn factorization_reproduces_reduced_block() {
        let disc = Discretization::with_grid(64, 2.0).unwrap();
        let op = build_stage_operator(&disc, &spec(2), 1e-4).unwrap();
        let (p, l, u) = op.factorization().clone().unpack();
        let mut lu = &l * &u;
        p.inv_permute_rows(&mut lu);
        let reduced = op.reduced();
        let rel = (&lu - &reduced).amax() / reduced.amax();
        assert!(rel <= 1e-10, "{rel:e}");
    }

    #[test]
    fn zero_and_constant_states_are_fixed_points() {
        let disc = Discretization::with_grid(40, 2.0).unwrap();
        let integ = Integrator::new(&disc, &spec(2), 1e-3, NewtonSettings::default()).unwrap();
        let zero = FieldState::zero(&disc.grid);
        let st = integ.newton_stages(&zero).unwrap();
        assert_eq!(st.iterations, 1);
        assert!(st.k1.iter().chain(&st.k2).all(|&k| k == 0.0));
        let (next, _) = integ.step(&zero).unwrap();
        assert!(next.vt.iter().all(|&v| v == 0.0));

        let k = 0.6;
        let cspec = ProblemSpec::new(3, 1.0, Background { a: k, b: 0.0, c: k }, 0.0).unwrap();
        let integ = Integrator::new(&disc, &cspec, 1e-3, NewtonSettings::default()).unwrap();
        let st = integ.newton_stages(&zero).unwrap();
        let kmax = st.k1.iter().chain(&st.k2).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(kmax < 1e-8, "{kmax:e}");
    }

    #[test]
    fn stage_endpoints_vanish() {
        let disc = Discretization::with_grid(64, 2.0).unwrap();
        let integ = Integrator::new(&disc, &spec(2), 1e-3, NewtonSettings::default()).unwrap();
        let st = integ.newton_stages(&soliton_state(&disc, 2)).unwrap();
        assert_eq!((st.k1[0], st.k1[64], st.k2[0], st.k2[64]), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_supercritical_exponent() {
        let disc = Discretization::with_grid(16, 1.0).unwrap();
        assert!(Integrator::new(&disc, &spec(5), 1e-3, NewtonSettings::default()).is_err());
        let bad = NewtonSettings { max_iter: 0, ..Default::default() };
        assert!(Integrator::new(&disc, &spec(2), 1e-3, bad).is_err());
    }

    #[test]
    fn matches_plain_fixed_point_at_tiny_step() {
        // Full (unsplit) fixed-point iteration K = f(ṽ + hAK) is a contraction
        // for small enough h; its stages must agree with the split iteration.
        let disc = Discretization::with_grid(24, 2.0).unwrap();
        let s = spec(2);
        let h = 1e-7;
        let state = soliton_state(&disc, 2);
        let integ = Integrator::new(&disc, &s, h, NewtonSettings::default()).unwrap();
        let st = integ.newton_stages(&state).unwrap();

        let a = ButcherTableau::gauss2().a;
        let mut k1 = vec![0.0; 25];
        let mut k2 = vec![0.0; 25];
        for _ in 0..200 {
            let y1: Vec<f64> = (0..25).map(|i| state.vt[i] + h * (a[0][0] * k1[i] + a[0][1] * k2[i])).collect();
            let y2: Vec<f64> = (0..25).map(|i| state.vt[i] + h * (a[1][0] * k1[i] + a[1][1] * k2[i])).collect();
            k1 = crate::problem::rhs(&FieldState { t: 0.0, vt: y1 }, &disc, &s).unwrap();
            k2 = crate::problem::rhs(&FieldState { t: 0.0, vt: y2 }, &disc, &s).unwrap();
        }
        let scale = k1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..25 {
            assert!((k1[i] - st.k1[i]).abs() <= 1e-9 * scale, "k1[{i}]");
            assert!((k2[i] - st.k2[i]).abs() <= 1e-9 * scale, "k2[{i}]");
        }
    }
}
