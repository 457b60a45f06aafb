//! Conserved quantities, resolution estimate, break-up prediction of the
//! dispersionless limit and soliton identification.

use crate::data::{soliton_profile, soliton_speed, Branch, DataFamily, TabulatedProfile};
use crate::domain::{line_integral, line_integral_extrapolated, CompactGrid};
use crate::error::{invalid, Error, Result};
use crate::problem::{reconstruct, Discretization, FieldState, ProblemSpec};
use crate::spectral::{ChebCoefficients, ChebTransform};

/// One row of the diagnostics table.
///
/// Quantities that diverge for the current boundary limits are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: Option<f64>,
    pub l2sq: Option<f64>,
    pub energy: Option<f64>,
    pub modified_energy: f64,
    pub coeff_floor: f64,
    pub newton_iters: usize,
}

impl DiagnosticsRecord {
    /// The functional whose drift is monitored: `Ẽ` when a boundary limit is
    /// nonzero, `E` otherwise.
    pub fn tracked(&self) -> f64 {
        self.energy.unwrap_or(self.modified_energy)
    }
}

/// Running maximum of `|F(t) − F(0)| / |F(0)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftTracker {
    initial: f64,
    max_drift: f64,
}

impl DriftTracker {
    pub fn new(initial: f64) -> Self {
        Self {
            initial,
            max_drift: 0.0,
        }
    }

    /// Tracker continuing from a saved state.
    pub fn restore(initial: f64, max_drift: f64) -> Self {
        Self { initial, max_drift }
    }

    /// Records a new value and returns its relative drift.
    pub fn update(&mut self, value: f64) -> f64 {
        let d = relative_drift(self.initial, value);
        if d > self.max_drift || d.is_nan() {
            self.max_drift = d;
        }
        d
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn max_drift(&self) -> f64 {
        self.max_drift
    }
}

/// `|value − initial| / |initial|`, or the absolute change when `initial` is 0.
pub fn relative_drift(initial: f64, value: f64) -> f64 {
    let diff = (value - initial).abs();
    if initial == 0.0 {
        diff
    } else {
        diff / initial.abs()
    }
}

/// `λ` for which `u^{p+1} − λu²` vanishes at both ends.
pub fn choose_lambda(u_left: f64, u_right: f64, p: u32) -> Result<f64> {
    if !(u_left.is_finite() && u_right.is_finite()) {
        return Err(invalid("limits", "boundary limits must be finite"));
    }
    let power = p as i32 - 1;
    match (u_left == 0.0, u_right == 0.0) {
        (true, true) => Ok(0.0),
        (false, true) => Ok(u_left.powi(power)),
        (true, false) => Ok(u_right.powi(power)),
        (false, false) => {
            let (a, b) = (u_left.powi(power), u_right.powi(power));
            if (a - b).abs() <= 1e-12 * a.abs().max(b.abs()) {
                Ok(a)
            } else {
                Err(Error::IncompatibleLimits { u_left, u_right, p })
            }
        }
    }
}

fn lambda_bounds_limit(limit: f64, lambda: f64, p: u32) -> bool {
    if limit == 0.0 {
        return true;
    }
    let lead = limit.abs().powi(p as i32 + 1);
    (limit.powi(p as i32 + 1) - lambda * limit * limit).abs() <= 1e-12 * lead.max(1.0)
}

/// Mass, `L²` norm, energy and modified energy of the current state.
///
/// `newton_iters` is left at 0 for the caller to fill in.
pub fn conserved_quantities(
    state: &FieldState,
    disc: &Discretization,
    spec: &ProblemSpec,
) -> Result<DiagnosticsRecord> {
    let grid = &disc.grid;
    let (u_left, u_right) = spec.background.limits();
    let p = spec.p;
    if !(lambda_bounds_limit(u_left, spec.lambda, p) && lambda_bounds_limit(u_right, spec.lambda, p)) {
        return Err(Error::IncompatibleLimits { u_left, u_right, p });
    }
    let u = reconstruct(state, grid, &spec.background);
    let ux = disc.ops.first.apply(&u);
    let pf = p as f64;
    let norm = pf * (pf + 1.0);
    let eps2 = spec.eps * spec.eps;
    let n = grid.degree();

    let decaying = u_left == 0.0 && u_right == 0.0;
    let modified: Vec<f64> = (0..=n)
        .map(|i| {
            if i == 0 || i == n {
                0.0
            } else {
                (u[i].powi(p as i32 + 1) - spec.lambda * u[i] * u[i]) / norm - 0.5 * eps2 * ux[i] * ux[i]
            }
        })
        .collect();
    let modified_energy = line_integral(grid, &modified)?;
    let energy = if decaying {
        if spec.lambda == 0.0 {
            Some(modified_energy)
        } else {
            let plain: Vec<f64> = (0..=n)
                .map(|i| u[i].powi(p as i32 + 1) / norm - 0.5 * eps2 * ux[i] * ux[i])
                .collect();
            Some(line_integral(grid, &plain)?)
        }
    } else {
        None
    };
    let l2sq = if decaying {
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        Some(line_integral_extrapolated(grid, &sq)?)
    } else {
        None
    };
    // u must decay faster than 1/|x| for the mass to exist; that excludes any
    // nonzero background
    let mass = if spec.background.is_zero() {
        Some(line_integral_extrapolated(grid, &u)?)
    } else {
        None
    };
    Ok(DiagnosticsRecord {
        t: state.t,
        mass,
        l2sq,
        energy,
        modified_energy,
        coeff_floor: coefficient_floor(state, grid)?,
        newton_iters: 0,
    })
}

/// Chebyshev coefficients of `ṽ`.
pub fn coefficients(state: &FieldState, grid: &CompactGrid) -> Result<ChebCoefficients> {
    ChebTransform::new(grid.degree())?.to_coefficients(&state.vt)
}

/// `max |v_n|` over the trailing indices `n ≥ 0.95 N`.
pub fn coefficient_floor(state: &FieldState, grid: &CompactGrid) -> Result<f64> {
    Ok(floor_of(&coefficients(state, grid)?))
}

/// As [`coefficient_floor`] for precomputed coefficients.
pub fn floor_of(coeffs: &ChebCoefficients) -> f64 {
    let n = coeffs.len() - 1;
    let start = (0.95 * n as f64).ceil() as usize;
    coeffs.0[start..].iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// First gradient catastrophe of `u_t + a(u) u_x = 0` with `a(u) = u^{p−1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakupPoint {
    pub x_c: f64,
    pub t_c: f64,
    pub u_c: f64,
}

/// Initial data with a value and two derivatives at any finite `x`.
pub trait Profile {
    fn jet(&self, x: f64) -> (f64, f64, f64);
    fn decreasing_branches(&self) -> Vec<Branch>;
}

struct Closed<'a>(&'a DataFamily);

impl Profile for Closed<'_> {
    fn jet(&self, x: f64) -> (f64, f64, f64) {
        self.0.jet(x).expect("closed-form family")
    }

    fn decreasing_branches(&self) -> Vec<Branch> {
        self.0.decreasing_branches()
    }
}

impl Profile for TabulatedProfile {
    fn jet(&self, x: f64) -> (f64, f64, f64) {
        TabulatedProfile::jet(self, x)
    }

    fn decreasing_branches(&self) -> Vec<Branch> {
        TabulatedProfile::decreasing_branches(self)
    }
}

const BREAKUP_SCAN: usize = 4096;

/// Break-up point for closed-form data. Tabulated data need a grid; use
/// [`breakup_point_of`] with their interpolant.
pub fn breakup_point(family: &DataFamily, p: u32) -> Result<BreakupPoint> {
    family.validate()?;
    if let DataFamily::Tabulated(_) = family {
        return Err(invalid(
            "family",
            "tabulated data: build the interpolant on a grid and call breakup_point_of",
        ));
    }
    breakup_point_of(&Closed(family), p)
}

/// Break-up point of any profile: the earliest characteristic crossing over
/// all decreasing branches.
pub fn breakup_point_of<P: Profile + ?Sized>(profile: &P, p: u32) -> Result<BreakupPoint> {
    if p < 2 {
        return Err(invalid("p", "break-up needs p >= 2"));
    }
    let branches = profile.decreasing_branches();
    if branches.is_empty() {
        return Err(Error::NoBreakup);
    }
    let mut best: Option<BreakupPoint> = None;
    for b in &branches {
        if let Some(cand) = breakup_on_branch(profile, b, p) {
            if best.is_none_or(|bp| cand.t_c < bp.t_c) {
                best = Some(cand);
            }
        }
    }
    best.ok_or(Error::NoRoot)
}

fn speed(p: u32, u: f64) -> (f64, f64, f64) {
    let pf = p as f64;
    let a = u.powi(p as i32 - 1);
    let a1 = (pf - 1.0) * u.powi(p as i32 - 2);
    let a2 = if p == 2 {
        0.0
    } else {
        (pf - 1.0) * (pf - 2.0) * u.powi(p as i32 - 3)
    };
    (a, a1, a2)
}

/// `ξ` with `u₀(ξ) = u` on a decreasing branch.
fn invert_on_branch<P: Profile + ?Sized>(profile: &P, b: &Branch, u: f64) -> f64 {
    let mut lo = b.x_lo;
    let mut hi = if b.x_hi.is_finite() {
        b.x_hi
    } else {
        let mut step = 1.0;
        let mut x = b.x_lo + step;
        while profile.jet(x).0 > u && step < 1e12 {
            step *= 2.0;
            x = b.x_lo + step;
        }
        x
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if profile.jet(mid).0 > u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn breakup_on_branch<P: Profile + ?Sized>(profile: &P, b: &Branch, p: u32) -> Option<BreakupPoint> {
    // With Φ = u₀⁻¹, Φ′ = 1/u₀′ and Φ″ = −u₀″/u₀′³, the condition
    // Φ″a′ − Φ′a″ = 0 is, after multiplying by −u₀′³,  u₀″a′ + u₀′²a″ = 0.
    let condition = |u: f64| {
        let xi = invert_on_branch(profile, b, u);
        let (_, d1, d2) = profile.jet(xi);
        let (_, a1, a2) = speed(p, u);
        d2 * a1 + d1 * d1 * a2
    };
    let crossing_time = |u: f64| {
        let xi = invert_on_branch(profile, b, u);
        let (_, d1, _) = profile.jet(xi);
        let (_, a1, _) = speed(p, u);
        (-1.0 / (d1 * a1), xi)
    };
    let span = b.u_top - b.u_bottom;
    let us: Vec<f64> = (1..BREAKUP_SCAN)
        .map(|k| b.u_bottom + span * k as f64 / BREAKUP_SCAN as f64)
        .collect();
    let gs: Vec<f64> = us.iter().map(|&u| condition(u)).collect();
    let mut best: Option<BreakupPoint> = None;
    for k in 0..us.len() - 1 {
        if !(gs[k].is_finite() && gs[k + 1].is_finite()) || gs[k].signum() == gs[k + 1].signum() {
            continue;
        }
        let (mut lo, mut hi, mut glo) = (us[k], us[k + 1], gs[k]);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let gm = condition(mid);
            if gm.signum() == glo.signum() {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        let u_c = 0.5 * (lo + hi);
        let (t_c, xi) = crossing_time(u_c);
        if !(t_c.is_finite() && t_c > 0.0) {
            continue;
        }
        if best.is_none_or(|bp| t_c < bp.t_c) {
            best = Some(BreakupPoint {
                x_c: speed(p, u_c).0 * t_c + xi,
                t_c,
                u_c,
            });
        }
    }
    best
}

/// One identified soliton-like peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonPeak {
    pub position: f64,
    pub amplitude: f64,
    pub speed: f64,
    /// Max-norm deviation from `Q_speed((x − position)/ε)` near the peak.
    pub misfit: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolitonFit {
    pub peaks: Vec<SolitonPeak>,
}

const FIT_WINDOW: f64 = 10.0;
const FIT_SAMPLES: usize = 401;

/// Fits a soliton to each strict interior maximum above `min_amplitude`.
///
/// Speeds come from the amplitude law alone; the comparison window has width
/// `10·ε/√speed` around the refined peak.
pub fn fit_solitons(
    state: &FieldState,
    grid: &CompactGrid,
    spec: &ProblemSpec,
    min_amplitude: f64,
) -> Result<SolitonFit> {
    let u = reconstruct(state, grid, &spec.background);
    fit_solitons_nodal(&u, grid, spec.p, spec.eps, min_amplitude)
}

/// As [`fit_solitons`], from nodal values of `u`.
pub fn fit_solitons_nodal(
    u: &[f64],
    grid: &CompactGrid,
    p: u32,
    eps: f64,
    min_amplitude: f64,
) -> Result<SolitonFit> {
    if !(min_amplitude.is_finite() && min_amplitude > 0.0) {
        return Err(invalid("min_amplitude", "must be positive"));
    }
    if p < 2 {
        return Err(invalid("p", "soliton fit needs p >= 2"));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid("eps", "must be positive"));
    }
    let coeffs = ChebTransform::new(grid.degree())?.to_coefficients(u)?;
    let slope = coeffs.derivative();
    let l = grid.l();
    let n = grid.degree();
    let mut peaks = Vec::new();
    for i in 2..n - 1 {
        if !(u[i] > u[i - 1] && u[i] > u[i + 1] && u[i] > min_amplitude) {
            continue;
        }
        let l_peak = refine_peak(&slope, l[i + 1], l[i - 1]).unwrap_or(l[i]);
        let amplitude = coeffs.evaluate(l_peak).max(u[i]);
        let position = grid.x_of_l(l_peak);
        let c_fit = soliton_speed(amplitude, p);
        let half = 0.5 * FIT_WINDOW * eps / c_fit.sqrt();
        let mut misfit: f64 = 0.0;
        for k in 0..FIT_SAMPLES {
            let x = position - half + 2.0 * half * k as f64 / (FIT_SAMPLES - 1) as f64;
            let model = soliton_profile(c_fit, p, (x - position) / eps);
            misfit = misfit.max((coeffs.evaluate(grid.l_of_x(x)) - model).abs());
        }
        peaks.push(SolitonPeak {
            position,
            amplitude,
            speed: c_fit,
            misfit,
        });
    }
    Ok(SolitonFit { peaks })
}

/// Root of the derivative series in `[lo, hi]` by bisection, if bracketed.
fn refine_peak(slope: &ChebCoefficients, lo: f64, hi: f64) -> Option<f64> {
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (slope.evaluate(a), slope.evaluate(b));
    if fa.signum() == fb.signum() {
        return None;
    }
    let mut sa = fa.signum();
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = slope.evaluate(m);
        if fm.signum() == sa {
            a = m;
            sa = fm.signum();
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}
