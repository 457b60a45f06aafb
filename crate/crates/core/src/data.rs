//! Initial-data families with closed-form boundary behaviour.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::domain::CompactGrid;
use crate::error::{check_finite, invalid, Error, Result};
use crate::spectral::{ChebCoefficients, ChebTransform};

/// Built-in initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum DataFamily {
    /// `1` for `x < 0`, `exp(−x^{2n})` for `x ≥ 0`.
    MollifiedStep { n: u32 },
    /// Plateau on `(x0, 0)` smoothed out on both sides.
    FiniteStep { n: u32, x0: f64 },
    /// `(1 + x²)^{−a}`.
    AlgebraicDecay { a: f64 },
    /// Solitary wave `Q_c(x − x0)` of the exponent-`p` equation.
    Soliton { speed: f64, p: u32, x0: f64 },
    /// Nodal values read from a file.
    Tabulated(TabulatedData),
}

/// Limits of `u₀` at `x → ∓∞` and its `l`-derivative at `l = -1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryData {
    pub u_left: f64,
    pub u_right: f64,
    pub slope_left_l: f64,
}

/// Regularity of the data on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    /// `C^k` but not `C^{k+1}` at some point.
    Finite(u32),
    Analytic,
    /// Tabulated samples carry no regularity information.
    Unknown,
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoothness::Finite(k) => write!(f, "C^{k}"),
            Smoothness::Analytic => f.write_str("analytic"),
            Smoothness::Unknown => f.write_str("unknown"),
        }
    }
}

/// `sech²(z)` without overflow for large `|z|`.
fn sech2(z: f64) -> f64 {
    let e = (-2.0 * z.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// Soliton `Q_c(z)` of the exponent-`p` equation.
pub fn soliton_profile(speed: f64, p: u32, z: f64) -> f64 {
    let q = 1.0 / (p as f64 - 1.0);
    let k = (p * (p + 1)) as f64 * speed / 2.0;
    let beta = speed.sqrt() * (p as f64 - 1.0) / 2.0;
    (k * sech2(beta * z)).powf(q)
}

/// Peak height `Q_c(0) = (p(p+1)c/2)^{1/(p−1)}`.
pub fn soliton_amplitude(speed: f64, p: u32) -> f64 {
    ((p * (p + 1)) as f64 * speed / 2.0).powf(1.0 / (p as f64 - 1.0))
}

/// Inverse of [`soliton_amplitude`].
pub fn soliton_speed(amplitude: f64, p: u32) -> f64 {
    2.0 * amplitude.powi(p as i32 - 1) / (p * (p + 1)) as f64
}

impl DataFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            DataFamily::MollifiedStep { n } | DataFamily::FiniteStep { n, .. } if *n == 0 => {
                Err(invalid("n", "step exponent must be a positive integer"))
            }
            DataFamily::FiniteStep { x0, .. } if !(x0.is_finite() && *x0 < 0.0) => {
                Err(invalid("x0", format!("finite step needs x0 < 0, got {x0}")))
            }
            DataFamily::AlgebraicDecay { a } if !(a.is_finite() && *a >= 0.5) => Err(
                Error::NoFiniteLimits {
                    family: format!("algebraic_decay({a}): the l-slope at -1 requires a >= 1/2"),
                },
            ),
            DataFamily::Soliton { speed, p, x0 } => {
                if !(speed.is_finite() && *speed > 0.0) {
                    Err(invalid("c_speed", format!("soliton speed must be positive, got {speed}")))
                } else if *p < 2 {
                    Err(invalid("p", "soliton needs p >= 2"))
                } else if !x0.is_finite() {
                    Err(invalid("x0", "soliton position must be finite"))
                } else {
                    Ok(())
                }
            }
            DataFamily::Tabulated(t) => t.validate(),
            _ => Ok(()),
        }
    }

    /// Closed-form value at a finite `x`.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        self.jet(x).map(|j| j.0)
    }

    /// `(u₀, u₀′, u₀″)` at a finite `x`.
    pub fn jet(&self, x: f64) -> Result<(f64, f64, f64)> {
        Ok(match *self {
            DataFamily::MollifiedStep { n } => {
                if x < 0.0 {
                    (1.0, 0.0, 0.0)
                } else {
                    step_tail(n, x)
                }
            }
            DataFamily::FiniteStep { n, x0 } => {
                if x >= 0.0 {
                    step_tail(n, x)
                } else if x > x0 {
                    (1.0, 0.0, 0.0)
                } else {
                    let (f, d1, d2) = step_tail(n, x0 - x);
                    (f, -d1, d2)
                }
            }
            DataFamily::AlgebraicDecay { a } => {
                let s = 1.0 + x * x;
                let f = s.powf(-a);
                let d1 = -2.0 * a * x * f / s;
                let d2 = -2.0 * a * f / s + 4.0 * a * (a + 1.0) * x * x * f / (s * s);
                (f, d1, d2)
            }
            DataFamily::Soliton { speed, p, x0 } => {
                let z = x - x0;
                let f = soliton_profile(speed, p, z);
                let q = 1.0 / (p as f64 - 1.0);
                let beta = speed.sqrt() * (p as f64 - 1.0) / 2.0;
                let th = (beta * z).tanh();
                let s2 = sech2(beta * z);
                let d1 = -2.0 * q * beta * th * f;
                let d2 = -2.0 * q * beta * beta * f * (s2 - 2.0 * q * th * th);
                (f, d1, d2)
            }
            DataFamily::Tabulated(_) => {
                return Err(invalid(
                    "family",
                    "tabulated data are defined only at grid nodes",
                ))
            }
        })
    }

    /// Closed-form boundary limits and left `l`-slope on the given grid.
    pub fn boundary_data(&self, grid: &CompactGrid) -> Result<BoundaryData> {
        self.validate()?;
        Ok(match *self {
            DataFamily::MollifiedStep { .. } => BoundaryData {
                u_left: 1.0,
                u_right: 0.0,
                slope_left_l: 0.0,
            },
            DataFamily::FiniteStep { .. } | DataFamily::Soliton { .. } => BoundaryData {
                u_left: 0.0,
                u_right: 0.0,
                slope_left_l: 0.0,
            },
            DataFamily::AlgebraicDecay { a } => {
                // u ≈ |x|^{−2a} ≈ (π(1+l)/(2c))^{2a} near l = −1
                let slope = if a == 0.5 {
                    PI / (2.0 * grid.map_constant())
                } else {
                    0.0
                };
                BoundaryData {
                    u_left: 0.0,
                    u_right: 0.0,
                    slope_left_l: slope,
                }
            }
            DataFamily::Tabulated(ref t) => t.boundary,
        })
    }

    /// Nodal values on the grid, endpoint entries from the boundary limits.
    pub fn nodal_values(&self, grid: &CompactGrid) -> Result<Vec<f64>> {
        let bd = self.boundary_data(grid)?;
        if let DataFamily::Tabulated(t) = self {
            if t.values.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    found: t.values.len(),
                });
            }
            return Ok(t.values.clone());
        }
        let n = grid.degree();
        let mut out = Vec::with_capacity(grid.len());
        for (i, &x) in grid.x().iter().enumerate() {
            out.push(if i == 0 {
                bd.u_right
            } else if i == n {
                bd.u_left
            } else {
                self.evaluate(x)?
            });
        }
        Ok(out)
    }

    pub fn smoothness_class(&self) -> Smoothness {
        match self {
            DataFamily::MollifiedStep { n } | DataFamily::FiniteStep { n, .. } => {
                Smoothness::Finite(2 * n - 1)
            }
            DataFamily::AlgebraicDecay { .. } | DataFamily::Soliton { .. } => Smoothness::Analytic,
            DataFamily::Tabulated(_) => Smoothness::Unknown,
        }
    }

    /// Maximal intervals on which the closed-form data decrease strictly.
    pub fn decreasing_branches(&self) -> Vec<Branch> {
        match *self {
            DataFamily::MollifiedStep { .. }
            | DataFamily::FiniteStep { .. }
            | DataFamily::AlgebraicDecay { .. } => vec![Branch {
                x_lo: 0.0,
                x_hi: f64::INFINITY,
                u_top: 1.0,
                u_bottom: 0.0,
            }],
            DataFamily::Soliton { speed, p, x0 } => vec![Branch {
                x_lo: x0,
                x_hi: f64::INFINITY,
                u_top: soliton_amplitude(speed, p),
                u_bottom: 0.0,
            }],
            DataFamily::Tabulated(_) => Vec::new(),
        }
    }
}

fn step_tail(n: u32, x: f64) -> (f64, f64, f64) {
    let m = 2 * n as i32;
    let f = (-x.powi(m)).exp();
    let d1 = -(m as f64) * x.powi(m - 1) * f;
    let d2 = f * ((m * m) as f64 * x.powi(2 * m - 2) - (m * (m - 1)) as f64 * x.powi(m - 2));
    (f, d1, d2)
}

impl fmt::Display for DataFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataFamily::MollifiedStep { n } => write!(f, "mollified_step({n})"),
            DataFamily::FiniteStep { n, x0 } => write!(f, "finite_step({n},{x0})"),
            DataFamily::AlgebraicDecay { a } => write!(f, "algebraic_decay({a})"),
            DataFamily::Soliton { speed, p, x0 } => write!(f, "soliton({speed},{p},{x0})"),
            DataFamily::Tabulated(t) => write!(f, "tabulated({} values)", t.values.len()),
        }
    }
}

/// Parses the compact form `name(arg, ...)` used on the command line, e.g.
/// `mollified_step(4)`, `finite_step(4,-15.70796)`, `algebraic_decay(0.5)`,
/// `soliton(1,2,0)`.
impl FromStr for DataFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
            Some(_) => return Err(invalid("family", format!("unbalanced parentheses in `{s}`"))),
            None => (s, ""),
        };
        let args: Vec<f64> = args
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(|a| {
                a.parse::<f64>()
                    .map_err(|_| invalid("family", format!("bad argument `{a}` in `{s}`")))
            })
            .collect::<Result<_>>()?;
        let arity = |k: usize| {
            if args.len() == k {
                Ok(())
            } else {
                Err(invalid("family", format!("`{name}` takes {k} argument(s)")))
            }
        };
        let as_int = |v: f64, what: &'static str| {
            if v.fract() == 0.0 && v >= 0.0 {
                Ok(v as u32)
            } else {
                Err(invalid(what, format!("expected a non-negative integer, got {v}")))
            }
        };
        let family = match name {
            "mollified_step" => {
                arity(1)?;
                DataFamily::MollifiedStep { n: as_int(args[0], "n")? }
            }
            "finite_step" => {
                arity(2)?;
                DataFamily::FiniteStep {
                    n: as_int(args[0], "n")?,
                    x0: args[1],
                }
            }
            "algebraic_decay" => {
                arity(1)?;
                DataFamily::AlgebraicDecay { a: args[0] }
            }
            "soliton" => {
                arity(3)?;
                DataFamily::Soliton {
                    speed: args[0],
                    p: as_int(args[1], "p")?,
                    x0: args[2],
                }
            }
            other => return Err(invalid("family", format!("unknown family `{other}`"))),
        };
        family.validate()?;
        Ok(family)
    }
}

/// A decreasing branch `[x_lo, x_hi)` of the data, with `u` running from
/// `u_top` down to `u_bottom` (the limit when `x_hi` is infinite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub x_lo: f64,
    pub x_hi: f64,
    pub u_top: f64,
    pub u_bottom: f64,
}

/// Data sampled at the collocation nodes, with boundary information declared
/// explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedData {
    pub boundary: BoundaryData,
    /// Values in node-index order (`l = 1` first).
    pub values: Vec<f64>,
}

impl TabulatedData {
    fn validate(&self) -> Result<()> {
        let b = self.boundary;
        if !(b.u_left.is_finite() && b.u_right.is_finite() && b.slope_left_l.is_finite()) {
            return Err(Error::NoFiniteLimits {
                family: "tabulated".into(),
            });
        }
        if self.values.len() < 5 {
            return Err(Error::Tabulated(format!(
                "need at least 5 nodal values, got {}",
                self.values.len()
            )));
        }
        check_finite("tabulated values", &self.values)
    }

    /// Parses the plain-text format: `u_left=`, `u_right=` and
    /// `slope_left_l=` header lines followed by one value per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut u_left = None;
        let mut u_right = None;
        let mut slope = None;
        let mut values = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, val)) = line.split_once('=') {
                if !values.is_empty() {
                    return Err(Error::Tabulated(format!(
                        "line {}: header after data",
                        lineno + 1
                    )));
                }
                let v: f64 = val.trim().parse().map_err(|_| {
                    Error::Tabulated(format!("line {}: bad number `{}`", lineno + 1, val.trim()))
                })?;
                let slot = match key.trim() {
                    "u_left" => &mut u_left,
                    "u_right" => &mut u_right,
                    "slope_left_l" => &mut slope,
                    other => {
                        return Err(Error::Tabulated(format!(
                            "line {}: unknown header `{other}`",
                            lineno + 1
                        )))
                    }
                };
                *slot = Some(v);
            } else {
                values.push(line.parse::<f64>().map_err(|_| {
                    Error::Tabulated(format!("line {}: bad value `{line}`", lineno + 1))
                })?);
            }
        }
        let missing = |name: &str| Error::Tabulated(format!("missing header `{name}`"));
        let data = TabulatedData {
            boundary: BoundaryData {
                u_left: u_left.ok_or_else(|| missing("u_left"))?,
                u_right: u_right.ok_or_else(|| missing("u_right"))?,
                slope_left_l: slope.ok_or_else(|| missing("slope_left_l"))?,
            },
            values,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "u_left={:e}\nu_right={:e}\nslope_left_l={:e}\n",
            self.boundary.u_left, self.boundary.u_right, self.boundary.slope_left_l
        );
        for v in &self.values {
            s.push_str(&format!("{v:e}\n"));
        }
        s
    }

    /// Spectral interpolant of the samples, usable between the nodes.
    pub fn interpolant(&self, grid: &CompactGrid) -> Result<TabulatedProfile> {
        if self.values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: self.values.len(),
            });
        }
        let tr = ChebTransform::new(grid.degree())?;
        let coeffs = tr.to_coefficients(&self.values)?;
        let d1 = coeffs.derivative();
        let d2 = d1.derivative();
        Ok(TabulatedProfile {
            c: grid.map_constant(),
            coeffs,
            d1,
            d2,
            nodes_x: grid.x().to_vec(),
            values: self.values.clone(),
        })
    }
}

/// Chebyshev interpolant of tabulated data, evaluated in `x`.
#[derive(Debug, Clone)]
pub struct TabulatedProfile {
    c: f64,
    coeffs: ChebCoefficients,
    d1: ChebCoefficients,
    d2: ChebCoefficients,
    nodes_x: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedProfile {
    pub fn jet(&self, x: f64) -> (f64, f64, f64) {
        let l = 2.0 / PI * (x / self.c).atan();
        let (s, co) = (0.5 * PI * l).sin_cos();
        let jac = 2.0 / (PI * self.c) * co * co;
        let djac = -2.0 / self.c * co * s;
        let f = self.coeffs.evaluate(l);
        let fl = self.d1.evaluate(l);
        let fll = self.d2.evaluate(l);
        (f, jac * fl, jac * (djac * fl + jac * fll))
    }

    /// Decreasing runs of the nodal samples, read in increasing `x`.
    pub fn decreasing_branches(&self) -> Vec<Branch> {
        let n = self.values.len() - 1;
        // increasing x ⇔ decreasing node index; interior nodes only
        let idx: Vec<usize> = (1..n).rev().collect();
        let mut branches = Vec::new();
        let mut start = None;
        for w in 0..idx.len() - 1 {
            let (a, b) = (idx[w], idx[w + 1]);
            let falling = self.values[b] < self.values[a];
            match (falling, start) {
                (true, None) => start = Some(w),
                (false, Some(s)) => {
                    branches.push(self.branch(idx[s], a));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            branches.push(self.branch(idx[s], idx[idx.len() - 1]));
        }
        branches
    }

    fn branch(&self, from: usize, to: usize) -> Branch {
        Branch {
            x_lo: self.nodes_x[from],
            x_hi: self.nodes_x[to],
            u_top: self.values[from],
            u_bottom: self.values[to],
        }
    }
}
