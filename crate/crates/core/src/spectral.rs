//! Chebyshev collocation primitives on `[-1, 1]`.
//!
//! Everything here works on the extrema grid `l_n = cos(nπ/N)`, `n = 0..=N`,
//! which runs from `+1` down to `-1`. Nodal values are always stored in that
//! index order.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVectorView, DVectorViewMut};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};

/// Chebyshev–Gauss–Lobatto nodes of degree `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebNodes {
    degree: usize,
    points: Vec<f64>,
}

impl ChebNodes {
    /// Builds the `N + 1` nodes `cos(nπ/N)`.
    ///
    /// The values are computed as `sin(π(N − 2n)/(2N))`, which is the same
    /// set but exactly antisymmetric and exactly zero at the centre.
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(invalid("N", "need at least two collocation points (N >= 1)"));
        }
        let nf = degree as f64;
        let points = (0..=degree)
            .map(|n| {
                let k = degree as f64 - 2.0 * n as f64;
                (PI * k / (2.0 * nf)).sin()
            })
            .collect();
        Ok(Self { degree, points })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// Convenience wrapper matching the free-function form used elsewhere.
pub fn chebyshev_nodes(degree: usize) -> Result<ChebNodes> {
    ChebNodes::new(degree)
}

/// Dense square operator acting on nodal vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator(DMatrix<f64>);

impl DenseOperator {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        assert!(matrix.is_square(), "dense operators are square");
        Self(matrix)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    /// `y = A x`. Panics on dimension mismatch.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        let xv = DVectorView::from_slice(x, n);
        let mut yv = DVectorViewMut::from_slice(y, n);
        yv.gemv(1.0, &self.0, &xv, 0.0);
    }

    /// Matrix product `self · rhs`.
    pub fn compose(&self, rhs: &DenseOperator) -> DenseOperator {
        DenseOperator(&self.0 * &rhs.0)
    }
}

/// First-derivative collocation matrix on the Chebyshev extrema grid.
///
/// Off-diagonal entries use the closed form `(c_i/c_j)(−1)^{i+j}/(l_i − l_j)`
/// with node differences evaluated through a product of sines; the diagonal
/// is the negated off-diagonal row sum, so `D · 1 = 0` holds to rounding.
pub fn diff_matrix(nodes: &ChebNodes) -> DenseOperator {
    let n = nodes.degree();
    let nf = n as f64;
    let size = n + 1;
    let weight = |i: usize| if i == 0 || i == n { 2.0 } else { 1.0 };

    let mut d = DMatrix::<f64>::zeros(size, size);
    for i in 0..size {
        let mut row_sum = 0.0;
        for j in 0..size {
            if i == j {
                continue;
            }
            // l_i − l_j = cos(iπ/N) − cos(jπ/N) = 2 sin((i+j)π/2N) sin((j−i)π/2N)
            let diff = 2.0
                * ((i + j) as f64 * PI / (2.0 * nf)).sin()
                * ((j as f64 - i as f64) * PI / (2.0 * nf)).sin();
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            let entry = weight(i) / weight(j) * sign / diff;
            d[(i, j)] = entry;
            row_sum += entry;
        }
        d[(i, i)] = -row_sum;
    }
    DenseOperator(d)
}

/// Coefficients `v_n` of the interpolant `Σ v_n T_n(l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebCoefficients(pub Vec<f64>);

impl ChebCoefficients {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Clenshaw evaluation of the series at `l`.
    pub fn evaluate(&self, l: f64) -> f64 {
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &a in self.0.iter().skip(1).rev() {
            let b0 = 2.0 * l * b1 - b2 + a;
            b2 = b1;
            b1 = b0;
        }
        let a0 = self.0.first().copied().unwrap_or(0.0);
        l * b1 - b2 + a0
    }

    /// Coefficients of the derivative series.
    pub fn derivative(&self) -> ChebCoefficients {
        let len = self.0.len();
        if len <= 1 {
            return ChebCoefficients(vec![0.0; len.max(1)]);
        }
        let mut out = vec![0.0; len];
        // b_{k-1} = b_{k+1} + 2k a_k, running down from the top
        for k in (1..len).rev() {
            let upper = if k + 1 < len { out[k + 1] } else { 0.0 };
            out[k - 1] = upper + 2.0 * k as f64 * self.0[k];
        }
        out[0] *= 0.5;
        ChebCoefficients(out)
    }
}

/// Type-I discrete cosine transform between nodal values and Chebyshev
/// coefficients, computed through an FFT of the even extension.
#[derive(Clone)]
pub struct ChebTransform {
    degree: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ChebTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChebTransform").field("degree", &self.degree).finish()
    }
}

impl ChebTransform {
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(invalid("N", "transform needs N >= 1"));
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * degree);
        Ok(Self { degree, fft })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Returns `Y_k = f_0 + (−1)^k f_N + 2 Σ_{j=1}^{N−1} f_j cos(πjk/N)`.
    fn dct1(&self, f: &[f64]) -> Vec<f64> {
        let n = self.degree;
        let mut buf: Vec<Complex<f64>> = Vec::with_capacity(2 * n);
        buf.extend(f.iter().map(|&v| Complex::new(v, 0.0)));
        buf.extend(f[1..n].iter().rev().map(|&v| Complex::new(v, 0.0)));
        self.fft.process(&mut buf);
        buf[..=n].iter().map(|z| z.re).collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.degree + 1 {
            return Err(Error::LengthMismatch {
                expected: self.degree + 1,
                found: len,
            });
        }
        Ok(())
    }

    pub fn to_coefficients(&self, values: &[f64]) -> Result<ChebCoefficients> {
        self.check_len(values.len())?;
        let n = self.degree;
        let nf = n as f64;
        let mut y = self.dct1(values);
        for (k, v) in y.iter_mut().enumerate() {
            let gamma = if k == 0 || k == n { 2.0 } else { 1.0 };
            *v /= nf * gamma;
        }
        Ok(ChebCoefficients(y))
    }

    pub fn from_coefficients(&self, coeffs: &ChebCoefficients) -> Result<Vec<f64>> {
        self.check_len(coeffs.len())?;
        let n = self.degree;
        let scaled: Vec<f64> = coeffs
            .0
            .iter()
            .enumerate()
            .map(|(k, &v)| if k == 0 || k == n { 2.0 * v } else { v })
            .collect();
        Ok(self.dct1(&scaled).into_iter().map(|v| 0.5 * v).collect())
    }
}

/// Clenshaw–Curtis weights for the extrema grid.
///
/// Obtained by pushing the moments `∫ T_k dl` through the transpose of the
/// coefficient transform, so the rule integrates the interpolant exactly.
pub fn clenshaw_curtis_weights(nodes: &ChebNodes) -> Vec<f64> {
    let n = nodes.degree();
    let nf = n as f64;
    let moments: Vec<f64> = (0..=n)
        .map(|k| {
            if k % 2 == 0 {
                2.0 / (1.0 - (k * k) as f64)
            } else {
                0.0
            }
        })
        .collect();
    let transform = ChebTransform::new(n).expect("nodes guarantee N >= 1");
    transform
        .dct1(&moments)
        .into_iter()
        .enumerate()
        .map(|(j, y)| {
            let rho = if j == 0 || j == n { 1.0 } else { 2.0 };
            rho * y / (2.0 * nf)
        })
        .collect()
}

/// Barycentric interpolation of nodal values on the extrema grid.
pub fn barycentric_interpolate(nodes: &ChebNodes, values: &[f64], l: f64) -> f64 {
    let n = nodes.degree();
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, (&lj, &fj)) in nodes.points().iter().zip(values).enumerate() {
        let diff = l - lj;
        if diff == 0.0 {
            return fj;
        }
        let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
        if j == 0 || j == n {
            w *= 0.5;
        }
        let t = w / diff;
        num += t * fj;
        den += t;
    }
    num / den
}
