//! The compactified real line: `x = c·tan(πl/2)` for `l ∈ [-1, 1]`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{check_finite_from, invalid, Error, Result};
use crate::spectral::{clenshaw_curtis_weights, diff_matrix, ChebNodes, DenseOperator};

/// Collocation grid together with its image on the real line.
///
/// The endpoint nodes map to `x = ±∞`; `x[0]` and `x[N]` hold the infinite
/// sentinels and must never be fed to closed-form data. Closed-form limits
/// are used there instead.
#[derive(Debug, Clone)]
pub struct CompactGrid {
    cheb: ChebNodes,
    c: f64,
    x: Vec<f64>,
    jac: Vec<f64>,
    dxdl: Vec<f64>,
    one_plus_l: Vec<f64>,
    weights: Vec<f64>,
}

impl CompactGrid {
    pub fn new(degree: usize, c: f64) -> Result<Self> {
        if degree < 4 {
            return Err(invalid("N", format!("compactified grid needs N >= 4, got {degree}")));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid("c", format!("map constant must be positive, got {c}")));
        }
        let cheb = ChebNodes::new(degree)?;
        let nf = degree as f64;
        let size = degree + 1;

        let mut x = Vec::with_capacity(size);
        let mut jac = Vec::with_capacity(size);
        let mut dxdl = Vec::with_capacity(size);
        let mut one_plus_l = Vec::with_capacity(size);
        for n in 0..size {
            let half_theta = n as f64 * PI / (2.0 * nf);
            // 1 − l and 1 + l without cancellation
            let one_minus = 2.0 * half_theta.sin().powi(2);
            let one_plus = 2.0 * half_theta.cos().powi(2);
            let l = cheb.points()[n];
            // cos(πl/2), evaluated from the nearer endpoint
            let cos_half = if l >= 0.0 {
                (0.5 * PI * one_minus).sin()
            } else {
                (0.5 * PI * one_plus).sin()
            };
            let sin_half = (0.5 * PI * l).sin();
            one_plus_l.push(if n == degree { 0.0 } else { one_plus });
            if n == 0 {
                x.push(f64::INFINITY);
                jac.push(0.0);
                dxdl.push(f64::INFINITY);
            } else if n == degree {
                x.push(f64::NEG_INFINITY);
                jac.push(0.0);
                dxdl.push(f64::INFINITY);
            } else {
                x.push(c * sin_half / cos_half);
                jac.push(2.0 / (PI * c) * cos_half * cos_half);
                dxdl.push(0.5 * PI * c / (cos_half * cos_half));
            }
        }
        let weights = clenshaw_curtis_weights(&cheb);
        Ok(Self {
            cheb,
            c,
            x,
            jac,
            dxdl,
            one_plus_l,
            weights,
        })
    }

    pub fn degree(&self) -> usize {
        self.cheb.degree()
    }

    pub fn len(&self) -> usize {
        self.cheb.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn map_constant(&self) -> f64 {
        self.c
    }

    pub fn cheb(&self) -> &ChebNodes {
        &self.cheb
    }

    pub fn l(&self) -> &[f64] {
        self.cheb.points()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// `(2/(πc))·cos²(πl/2)`, zero at both endpoints.
    pub fn jac(&self) -> &[f64] {
        &self.jac
    }

    /// `dx/dl`; infinite at the endpoints.
    pub fn dxdl(&self) -> &[f64] {
        &self.dxdl
    }

    /// `1 + l_n`, computed without cancellation; exactly 0 at `n = N`.
    pub fn one_plus_l(&self) -> &[f64] {
        &self.one_plus_l
    }

    pub fn quadrature_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        1..self.degree()
    }

    /// Inverse map `l = (2/π)·atan(x/c)`.
    pub fn l_of_x(&self, x: f64) -> f64 {
        2.0 / PI * (x / self.c).atan()
    }

    /// Forward map for an arbitrary `l ∈ (-1, 1)`.
    pub fn x_of_l(&self, l: f64) -> f64 {
        self.c * (0.5 * PI * l).tan()
    }
}

pub fn make_grid(degree: usize, c: f64) -> Result<CompactGrid> {
    CompactGrid::new(degree, c)
}

/// Collocation approximations of `∂_x` and `∂_xxx` on a compact grid.
#[derive(Debug, Clone)]
pub struct XDerivative {
    pub first: DenseOperator,
    pub third: DenseOperator,
}

impl XDerivative {
    pub fn new(grid: &CompactGrid) -> Self {
        let d = diff_matrix(grid.cheb());
        let jac = grid.jac();
        let size = grid.len();
        let mut first = d.into_matrix();
        for i in 0..size {
            first.row_mut(i).scale_mut(jac[i]);
        }
        let first = DenseOperator::from_matrix(first);
        let third = first.compose(&first).compose(&first);
        Self { first, third }
    }

    pub fn dim(&self) -> usize {
        self.first.dim()
    }
}

pub fn x_derivative_ops(grid: &CompactGrid) -> XDerivative {
    XDerivative::new(grid)
}

/// `diag(left) · A · diag(right)` restricted to the index range on both sides.
pub(crate) fn scaled_block(
    a: &DMatrix<f64>,
    left: &[f64],
    right: &[f64],
    range: std::ops::Range<usize>,
) -> DMatrix<f64> {
    let offset = range.start;
    let m = range.len();
    DMatrix::from_fn(m, m, |i, j| {
        left[i + offset] * a[(i + offset, j + offset)] * right[j + offset]
    })
}

/// Limits of `integrand · dx/dl` at the two ends of the grid.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EndpointLimits {
    /// At `l = -1` (`x → −∞`).
    pub left: f64,
    /// At `l = +1` (`x → +∞`).
    pub right: f64,
}

/// `∫_ℝ f dx` by Clenshaw–Curtis quadrature in `l`.
///
/// Endpoint contributions are taken as zero, which is the limit whenever the
/// integrand decays faster than `1/x²`.
pub fn line_integral(grid: &CompactGrid, integrand: &[f64]) -> Result<f64> {
    line_integral_with_limits(grid, integrand, EndpointLimits::default())
}

/// As [`line_integral`], with explicit endpoint limits of `f · dx/dl`.
pub fn line_integral_with_limits(
    grid: &CompactGrid,
    integrand: &[f64],
    limits: EndpointLimits,
) -> Result<f64> {
    if integrand.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            found: integrand.len(),
        });
    }
    let n = grid.degree();
    check_finite_from("line integrand", &integrand[1..n], 1)?;
    let w = grid.quadrature_weights();
    let interior: f64 = grid
        .interior()
        .map(|i| w[i] * integrand[i] * grid.dxdl()[i])
        .sum();
    Ok(interior + w[0] * limits.right + w[n] * limits.left)
}

/// As [`line_integral`], with the endpoint limits of `f · dx/dl` obtained by
/// extrapolating the interior interpolant of `f · dx/dl` to `l = ±1`.
///
/// Suited to integrands decaying exactly like `1/x²`, whose endpoint
/// products tend to nonzero finite values.
pub fn line_integral_extrapolated(grid: &CompactGrid, integrand: &[f64]) -> Result<f64> {
    if integrand.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            found: integrand.len(),
        });
    }
    let n = grid.degree();
    check_finite_from("line integrand", &integrand[1..n], 1)?;
    let product: Vec<f64> = grid
        .interior()
        .map(|i| integrand[i] * grid.dxdl()[i])
        .collect();
    let limits = EndpointLimits {
        left: extrapolate_interior(n, &product, -1.0),
        right: extrapolate_interior(n, &product, 1.0),
    };
    line_integral_with_limits(grid, integrand, limits)
}

/// Evaluates the polynomial through the interior nodes `cos(jπ/N)`,
/// `j = 1..N-1` (the zeros of `U_{N-1}`), at an arbitrary point.
fn extrapolate_interior(degree: usize, values: &[f64], at: f64) -> f64 {
    let nf = degree as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &v) in values.iter().enumerate() {
        let j = k + 1;
        let theta = j as f64 * PI / nf;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let w = sign * theta.sin().powi(2);
        let t = w / (at - theta.cos());
        num += t * v;
        den += t;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    #[test]
    fn grid_values() {
        let g = make_grid(6, 2.0).unwrap();
        // l_3 = 0, l_2 = 1/2
        assert_eq!(g.x()[3], 0.0);
        assert!((g.l()[2] - 0.5).abs() < 1e-15);
        assert!((g.x()[2] - 2.0).abs() < 1e-14);
        assert!((g.jac()[3] - 1.0 / PI).abs() < 1e-15);
        assert_eq!(g.x()[0], f64::INFINITY);
        assert_eq!(g.x()[6], f64::NEG_INFINITY);
        assert_eq!(g.jac()[0], 0.0);
        assert_eq!(g.jac()[6], 0.0);
        assert!(g.x()[1..6].windows(2).all(|w| w[0] > w[1]));
        assert!(g.jac()[1..6].iter().all(|&j| j > 0.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(make_grid(40, 0.0), Err(Error::InvalidParameter { name: "c", .. })));
        assert!(matches!(make_grid(40, -1.0), Err(Error::InvalidParameter { name: "c", .. })));
        assert!(matches!(make_grid(3, 1.0), Err(Error::InvalidParameter { name: "N", .. })));
    }

    #[test]
    fn derivative_examples() {
        let g = make_grid(400, 2.0).unwrap();
        let ops = x_derivative_ops(&g);
        let mid = 200;
        assert_eq!(g.x()[mid], 0.0);

        let mut u: Vec<f64> = g.x().iter().map(|&x| sech(x)).collect();
        u[0] = 0.0;
        u[400] = 0.0;
        assert!(ops.first.apply(&u)[mid].abs() < 1e-10);

        // tanh → sech²; limits ±1
        let mut t: Vec<f64> = g.x().iter().map(|&x| x.tanh()).collect();
        t[0] = 1.0;
        t[400] = -1.0;
        let dt = ops.first.apply(&t);
        let err = g
            .interior()
            .map(|i| (dt[i] - sech(g.x()[i]).powi(2)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "tanh derivative error {err:e}");

        // 1/(1+x²) at x = 1 via interpolation of the derivative
        let mut r: Vec<f64> = g.x().iter().map(|&x| 1.0 / (1.0 + x * x)).collect();
        r[0] = 0.0;
        r[400] = 0.0;
        let dr = ops.first.apply(&r);
        let l1 = g.l_of_x(1.0);
        let got = crate::spectral::barycentric_interpolate(g.cheb(), &dr, l1);
        assert!((got + 0.5).abs() < 1e-8, "got {got}");
    }

    #[test]
    fn constants_have_zero_derivative() {
        let g = make_grid(300, 1.5).unwrap();
        let ops = x_derivative_ops(&g);
        let d = ops.first.apply(&vec![3.7; 301]);
        assert!(d.iter().all(|v| v.abs() <= 1e-10));
        let expected = ops.first.compose(&ops.first).compose(&ops.first);
        assert_eq!(expected, ops.third);
    }

    #[test]
    fn quadrature_examples() {
        let g = make_grid(400, 1.0).unwrap();
        let f: Vec<f64> = g.x().iter().map(|&x| 1.0 / (1.0 + x * x)).collect();
        // f·dx/dl tends to π/2 at both ends
        let lim = EndpointLimits { left: PI / 2.0, right: PI / 2.0 };
        let val = line_integral_with_limits(&g, &f, lim).unwrap();
        assert!((val - PI).abs() < 1e-8, "{val}");
        let val = line_integral_extrapolated(&g, &f).unwrap();
        assert!((val - PI).abs() < 1e-8, "{val}");
        let g3 = make_grid(400, 2.0).unwrap();
        let f3: Vec<f64> = g3.x().iter().map(|&x| 1.0 / (1.0 + x * x)).collect();
        let val = line_integral_extrapolated(&g3, &f3).unwrap();
        assert!((val - PI).abs() < 1e-8, "{val}");

        let g2 = make_grid(400, 2.0).unwrap();
        let s: Vec<f64> = g2.x().iter().map(|&x| sech(x).powi(2)).collect();
        let val = line_integral(&g2, &s).unwrap();
        assert!((val - 2.0).abs() < 1e-8, "{val}");
    }

    #[test]
    fn quadrature_flags_non_finite() {
        let g = make_grid(16, 1.0).unwrap();
        let mut f = vec![0.0; 17];
        f[5] = f64::NAN;
        assert_eq!(
            line_integral(&g, &f),
            Err(Error::NonFinite { what: "line integrand", index: 5 })
        );
    }
}
