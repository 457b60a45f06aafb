//! Problem definition and the semi-discrete right-hand side.
//!
//! The unknown is split as `u = (1 + l)·ṽ + V(l)`, where the quadratic
//! background `V` carries the boundary limits of `u` and its `l`-slope at
//! `l = -1`. The remaining unknown `ṽ` vanishes at both ends and is evolved by
//!
//! ```text
//! ṽ_t = −(1/(1+l)) · [ ε²·∂xxx u + u^{p−1}·∂x u ]
//! ```
//!
//! on the interior nodes only.

use crate::domain::{CompactGrid, XDerivative};
use crate::error::{check_finite_from, invalid, Error, Result};

/// Coefficients of `V = A(1+l)/2 + B(1+l)²/4 + C(1−l)/2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Background {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Background {
    pub const ZERO: Background = Background {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };

    pub fn value(&self, l: f64) -> f64 {
        let p = 1.0 + l;
        self.a * p / 2.0 + self.b * p * p / 4.0 + self.c * (1.0 - l) / 2.0
    }

    /// `dV/dl`.
    pub fn slope(&self, l: f64) -> f64 {
        self.a / 2.0 + self.b * (1.0 + l) / 2.0 - self.c / 2.0
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.b == 0.0 && self.c == 0.0
    }

    /// Limits of `u` at `x → −∞` and `x → +∞`.
    pub fn limits(&self) -> (f64, f64) {
        (self.c, self.a + self.b)
    }

    pub fn nodal(&self, grid: &CompactGrid) -> BackgroundV {
        // (1 + l) from the grid keeps V(−1) = C exact
        let values = grid
            .one_plus_l()
            .iter()
            .map(|&p| self.a * p / 2.0 + self.b * p * p / 4.0 + self.c * (2.0 - p) / 2.0)
            .collect();
        BackgroundV { values }
    }
}

/// Chooses `(A, B, C)` so that `u − V` vanishes at both ends and has zero
/// `l`-slope at `l = -1`.
pub fn background_coeffs(u_left: f64, u_right: f64, slope_left_l: f64) -> Result<Background> {
    for (name, v) in [
        ("u_left", u_left),
        ("u_right", u_right),
        ("slope_left_l", slope_left_l),
    ] {
        if !v.is_finite() {
            return Err(invalid(name, format!("boundary data must be finite, got {v}")));
        }
    }
    let c = u_left;
    let a = c + 2.0 * slope_left_l;
    let b = u_right - a;
    Ok(Background { a, b, c })
}

/// Nodal values of the background polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundV {
    values: Vec<f64>,
}

impl BackgroundV {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Equation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    /// Nonlinearity exponent; the nonlinear term is `u^{p−1} u_x`.
    pub p: u32,
    /// Dispersion parameter; `ε = 1` is the unscaled equation.
    pub eps: f64,
    pub background: Background,
    /// Constant of the modified energy.
    pub lambda: f64,
}

impl ProblemSpec {
    pub fn new(p: u32, eps: f64, background: Background, lambda: f64) -> Result<Self> {
        if p < 2 {
            return Err(invalid("p", format!("nonlinearity exponent must be >= 2, got {p}")));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(invalid("eps", format!("dispersion must be positive, got {eps}")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid("lambda", format!("must be finite and >= 0, got {lambda}")));
        }
        Ok(Self {
            p,
            eps,
            background,
            lambda,
        })
    }

    /// Time evolution is restricted to the sub-critical exponents.
    pub fn check_evolvable(&self) -> Result<()> {
        if !(2..=4).contains(&self.p) {
            return Err(invalid(
                "p",
                format!("evolution supports p in 2..=4, got {}", self.p),
            ));
        }
        Ok(())
    }
}

/// Time plus the reduced unknown `ṽ` at all `N + 1` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub vt: Vec<f64>,
}

impl FieldState {
    pub fn zero(grid: &CompactGrid) -> Self {
        Self {
            t: 0.0,
            vt: vec![0.0; grid.len()],
        }
    }
}

/// Grid plus its derivative operators; built once per run.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: CompactGrid,
    pub ops: XDerivative,
}

impl Discretization {
    pub fn new(grid: CompactGrid) -> Self {
        let ops = XDerivative::new(&grid);
        Self { grid, ops }
    }

    pub fn with_grid(degree: usize, c: f64) -> Result<Self> {
        Ok(Self::new(CompactGrid::new(degree, c)?))
    }
}

const ENDPOINT_TOLERANCE: f64 = 1e-10;

/// Splits nodal values of `u` into the reduced unknown `ṽ = (u − V)/(1 + l)`.
pub fn decompose(u_values: &[f64], grid: &CompactGrid, background: &Background) -> Result<FieldState> {
    if u_values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            found: u_values.len(),
        });
    }
    let n = grid.degree();
    let v = background.nodal(grid);
    let scale = u_values.iter().fold(1.0f64, |m, u| m.max(u.abs()));
    for (idx, l) in [(0usize, 1.0f64), (n, -1.0)] {
        let mismatch = (u_values[idx] - v.values[idx]).abs();
        if !(mismatch <= ENDPOINT_TOLERANCE * scale) {
            return Err(Error::InconsistentBackground {
                endpoint: l,
                mismatch,
            });
        }
    }
    let one_plus = grid.one_plus_l();
    let mut vt = vec![0.0; grid.len()];
    for i in grid.interior() {
        vt[i] = (u_values[i] - v.values[i]) / one_plus[i];
    }
    check_finite_from("decomposed data", &vt, 0)?;
    Ok(FieldState { t: 0.0, vt })
}

/// `u = (1 + l)·ṽ + V` at all nodes.
pub fn reconstruct(state: &FieldState, grid: &CompactGrid, background: &Background) -> Vec<f64> {
    let v = background.nodal(grid);
    reconstruct_with(&state.vt, grid.one_plus_l(), v.values())
}

pub(crate) fn reconstruct_with(vt: &[f64], one_plus_l: &[f64], background: &[f64]) -> Vec<f64> {
    vt.iter()
        .zip(one_plus_l)
        .zip(background)
        .map(|((v, p), b)| p * v + b)
        .collect()
}

/// `ṽ_t` at every node (endpoint entries are zero).
pub fn rhs(state: &FieldState, disc: &Discretization, spec: &ProblemSpec) -> Result<Vec<f64>> {
    let grid = &disc.grid;
    if state.vt.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            found: state.vt.len(),
        });
    }
    let u = reconstruct(state, grid, &spec.background);
    let u_xxx = disc.ops.third.apply(&u);
    let u_x = disc.ops.first.apply(&u);
    let eps2 = spec.eps * spec.eps;
    let power = spec.p as i32 - 1;
    let one_plus = grid.one_plus_l();
    let mut out = vec![0.0; grid.len()];
    for i in grid.interior() {
        out[i] = -(eps2 * u_xxx[i] + u[i].powi(power) * u_x[i]) / one_plus[i];
    }
    check_finite_from("right-hand side", &out, 0)?;
    Ok(out)
}
