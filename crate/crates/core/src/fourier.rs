//! Periodic Fourier pseudospectral reference solver with ETDRK4 time
//! stepping (Cox–Matthews scheme, contour-integral coefficients).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::domain::CompactGrid;
use crate::error::{invalid, Error, Result};
use crate::spectral::barycentric_interpolate;

type C64 = Complex<f64>;

/// `M` equispaced nodes on `L·[−π, π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierGrid {
    modes: usize,
    half_period: f64,
    nodes: Vec<f64>,
    /// Wavenumbers in FFT order: `0, 1, …, M/2−1, −M/2, …, −1`, divided by `L`.
    wavenumbers: Vec<f64>,
}

impl FourierGrid {
    pub fn new(modes: usize, half_period: f64) -> Result<Self> {
        if modes < 8 || !modes.is_power_of_two() {
            return Err(invalid("M", format!("need a power of two >= 8, got {modes}")));
        }
        if !(half_period.is_finite() && half_period > 0.0) {
            return Err(invalid("L", format!("half-period must be positive, got {half_period}")));
        }
        let mf = modes as f64;
        let nodes = (0..modes)
            .map(|j| half_period * (-PI + 2.0 * PI * j as f64 / mf))
            .collect();
        let wavenumbers = (0..modes)
            .map(|j| {
                let k = if j < modes / 2 {
                    j as f64
                } else {
                    j as f64 - mf
                };
                k / half_period
            })
            .collect();
        Ok(Self {
            modes,
            half_period,
            nodes,
            wavenumbers,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn half_period(&self) -> f64 {
        self.half_period
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }
}

/// Whether the nonlinear term is included; `Disabled` leaves the linear
/// dispersive flow, used to check the integrator against exact phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Enabled,
    Disabled,
}

const CONTOUR_POINTS: usize = 64;

/// Per-mode ETDRK4 weights for the symbol `iε²k³` and a fixed step.
#[derive(Debug, Clone)]
pub struct EtdCoefficients {
    pub e: Vec<C64>,
    pub e_half: Vec<C64>,
    pub q: Vec<C64>,
    pub f1: Vec<C64>,
    pub f2: Vec<C64>,
    pub f3: Vec<C64>,
}

impl EtdCoefficients {
    pub fn new(grid: &FourierGrid, eps: f64, h: f64) -> Self {
        let m = grid.modes();
        let mut out = Self {
            e: Vec::with_capacity(m),
            e_half: Vec::with_capacity(m),
            q: Vec::with_capacity(m),
            f1: Vec::with_capacity(m),
            f2: Vec::with_capacity(m),
            f3: Vec::with_capacity(m),
        };
        // the symbol is imaginary, so the full circle is needed (no
        // conjugate symmetry to exploit)
        let roots: Vec<C64> = (0..CONTOUR_POINTS)
            .map(|j| C64::from_polar(1.0, PI * (j as f64 + 0.5) / (CONTOUR_POINTS as f64 / 2.0)))
            .collect();
        let cm = CONTOUR_POINTS as f64;
        for &k in grid.wavenumbers() {
            let hl = C64::new(0.0, eps * eps * k * k * k * h);
            out.e.push(hl.exp());
            out.e_half.push((hl / 2.0).exp());
            let (mut q, mut f1, mut f2, mut f3) = (C64::default(), C64::default(), C64::default(), C64::default());
            for r in &roots {
                let z = hl + r;
                let ez = z.exp();
                let z3 = z * z * z;
                q += ((z / 2.0).exp() - 1.0) / z;
                f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                f2 += (2.0 + z + ez * (z - 2.0)) / z3;
                f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
            }
            out.q.push(q * h / cm);
            out.f1.push(f1 * h / cm);
            out.f2.push(f2 * h / cm);
            out.f3.push(f3 * h / cm);
        }
        out
    }
}

struct Transforms {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
}

impl Transforms {
    fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            scratch: vec![C64::default(); len],
        }
    }
}

/// `−(1/p)·∂x(u^p) = −u^{p−1}u_x` in Fourier space with 2/3-rule dealiasing.
struct NonlinearTerm {
    p: i32,
    /// `−ik/p` on retained modes, zero on the top third and at Nyquist.
    factor: Vec<C64>,
    buf: Vec<C64>,
}

impl NonlinearTerm {
    fn new(grid: &FourierGrid, p: u32) -> Self {
        let m = grid.modes();
        let cutoff = m as f64 / 3.0;
        let factor = grid
            .wavenumbers()
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let index = (k * grid.half_period()).abs();
                if j == m / 2 || index >= cutoff {
                    C64::default()
                } else {
                    C64::new(0.0, -k / p as f64)
                }
            })
            .collect();
        Self {
            p: p as i32,
            factor,
            buf: vec![C64::default(); m],
        }
    }

    fn eval(&mut self, v: &[C64], fft: &mut Transforms, out: &mut [C64]) {
        let m = v.len() as f64;
        self.buf.copy_from_slice(v);
        fft.inverse.process_with_scratch(&mut self.buf, &mut fft.scratch);
        for z in self.buf.iter_mut() {
            *z = C64::new((z.re / m).powi(self.p), 0.0);
        }
        fft.forward.process_with_scratch(&mut self.buf, &mut fft.scratch);
        for ((o, b), f) in out.iter_mut().zip(&self.buf).zip(&self.factor) {
            *o = b * f;
        }
    }
}

/// Advances periodic nodal data `u0` to time `T` with `Nt` ETDRK4 steps.
pub fn evolve_periodic(
    u0: &[f64],
    grid: &FourierGrid,
    p: u32,
    eps: f64,
    t_final: f64,
    steps: usize,
    nonlinearity: Nonlinearity,
) -> Result<Vec<f64>> {
    let m = grid.modes();
    if u0.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: u0.len(),
        });
    }
    if p < 2 {
        return Err(invalid("p", format!("nonlinearity exponent must be >= 2, got {p}")));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid("eps", format!("dispersion must be positive, got {eps}")));
    }
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(invalid("T", format!("final time must be positive, got {t_final}")));
    }
    if steps == 0 {
        return Err(invalid("Nt", "need at least one time step"));
    }
    crate::error::check_finite("initial data", u0)?;
    let h = t_final / steps as f64;
    let etd = EtdCoefficients::new(grid, eps, h);
    let mut fft = Transforms::new(m);
    let mut nl = NonlinearTerm::new(grid, p);

    let mut v: Vec<C64> = u0.iter().map(|&x| C64::new(x, 0.0)).collect();
    fft.forward.process_with_scratch(&mut v, &mut fft.scratch);

    let zero = vec![C64::default(); m];
    let mut nv = zero.clone();
    let mut na = zero.clone();
    let mut nb = zero.clone();
    let mut nc = zero.clone();
    let mut a = zero.clone();
    let mut b = zero.clone();
    let mut c = zero;
    let active = nonlinearity == Nonlinearity::Enabled;
    let mut eval = |x: &[C64], out: &mut [C64]| {
        if active {
            nl.eval(x, &mut fft, out);
        }
    };

    for step in 1..=steps {
        eval(&v, &mut nv);
        for j in 0..m {
            a[j] = etd.e_half[j] * v[j] + etd.q[j] * nv[j];
        }
        eval(&a, &mut na);
        for j in 0..m {
            b[j] = etd.e_half[j] * v[j] + etd.q[j] * na[j];
        }
        eval(&b, &mut nb);
        for j in 0..m {
            c[j] = etd.e_half[j] * a[j] + etd.q[j] * (2.0 * nb[j] - nv[j]);
        }
        eval(&c, &mut nc);
        for j in 0..m {
            v[j] = etd.e[j] * v[j]
                + nv[j] * etd.f1[j]
                + 2.0 * (na[j] + nb[j]) * etd.f2[j]
                + nc[j] * etd.f3[j];
        }
        if let Some(j) = v.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::StepFailed {
                step,
                source: Box::new(Error::NonFinite {
                    what: "Fourier coefficient",
                    index: j,
                }),
            });
        }
    }

    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(m).process(&mut v);
    Ok(v.iter().map(|z| z.re / m as f64).collect())
}

/// Fraction of `Σ|û_k|²` carried by the top third of the wavenumbers.
pub fn upper_third_energy_fraction(values: &[f64]) -> f64 {
    let m = values.len();
    let mut v: Vec<C64> = values.iter().map(|&x| C64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut v);
    let cutoff = m as f64 / 3.0;
    let mut top = 0.0;
    let mut total = 0.0;
    for (j, z) in v.iter().enumerate() {
        let k = if j < m / 2 { j as f64 } else { (m - j) as f64 };
        let e = z.norm_sqr();
        total += e;
        if k >= cutoff {
            top += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        top / total
    }
}

/// Max-norm difference between the Chebyshev solution (nodal `u` on the
/// compact grid) and Fourier nodal values, over Fourier nodes in `window`.
pub fn compare_solutions(
    cheb_u: &[f64],
    grid: &CompactGrid,
    fourier_values: &[f64],
    fgrid: &FourierGrid,
    window: (f64, f64),
) -> Result<f64> {
    if cheb_u.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            found: cheb_u.len(),
        });
    }
    if fourier_values.len() != fgrid.modes() {
        return Err(Error::LengthMismatch {
            expected: fgrid.modes(),
            found: fourier_values.len(),
        });
    }
    let (lo, hi) = window;
    let mut any = false;
    let mut diff: f64 = 0.0;
    for (&x, &f) in fgrid.nodes().iter().zip(fourier_values) {
        if x < lo || x > hi {
            continue;
        }
        any = true;
        let u = barycentric_interpolate(grid.cheb(), cheb_u, grid.l_of_x(x));
        diff = diff.max((u - f).abs());
    }
    if !any {
        return Err(Error::EmptyWindow { lo, hi });
    }
    Ok(diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::soliton_profile;

    #[test]
    fn grid_layout() {
        let g = FourierGrid::new(16, 10.0).unwrap();
        assert_eq!(g.nodes()[0], -10.0 * PI);
        assert!(g.nodes()[15] < 10.0 * PI);
        assert_eq!(g.wavenumbers()[8], -0.8);
        assert!(FourierGrid::new(12, 1.0).is_err());
        assert!(FourierGrid::new(4, 1.0).is_err());
        assert!(FourierGrid::new(16, 0.0).is_err());
    }

    #[test]
    fn coefficients_are_finite_at_k_zero() {
        let g = FourierGrid::new(64, 1.0).unwrap();
        let etd = EtdCoefficients::new(&g, 1.0, 1e-3);
        for v in [&etd.q, &etd.f1, &etd.f2, &etd.f3] {
            assert!(v.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        }
        // z → 0 limits: q = h/2 and f1 = f2 = f3 = h/6
        let h = 1e-3;
        assert!((etd.q[0] - C64::new(h / 2.0, 0.0)).norm() < 1e-15);
        assert!((etd.f1[0] - C64::new(h / 6.0, 0.0)).norm() < 1e-15);
        assert!((etd.f2[0] - C64::new(h / 6.0, 0.0)).norm() < 1e-15);
        assert!((etd.f3[0] - C64::new(h / 6.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn linear_flow_is_exact() {
        let g = FourierGrid::new(64, 1.0).unwrap();
        let (eps, t) = (0.7, 0.37);
        for k in [1.0, 5.0, 20.0] {
            let u0: Vec<f64> = g.nodes().iter().map(|&x| (k * x).cos()).collect();
            let u = evolve_periodic(&u0, &g, 2, eps, t, 13, Nonlinearity::Disabled).unwrap();
            let w = eps * eps * k * k * k;
            for (x, v) in g.nodes().iter().zip(&u) {
                assert!((v - (k * x + w * t).cos()).abs() <= 1e-12, "k = {k}");
            }
        }
    }

    #[test]
    fn soliton_translates() {
        let g = FourierGrid::new(1 << 12, 10.0).unwrap();
        let u0: Vec<f64> = g.nodes().iter().map(|&x| soliton_profile(1.0, 2, x)).collect();
        let u = evolve_periodic(&u0, &g, 2, 1.0, 1.0, 1000, Nonlinearity::Enabled).unwrap();
        let err = g
            .nodes()
            .iter()
            .zip(&u)
            .map(|(&x, v)| (v - soliton_profile(1.0, 2, x - 1.0)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6, "{err:e}");
    }

    #[test]
    fn aborts_on_blow_up() {
        let g = FourierGrid::new(32, 1.0).unwrap();
        let u0 = vec![1e200; 32];
        let err = evolve_periodic(&u0, &g, 4, 1.0, 1.0, 10, Nonlinearity::Enabled).unwrap_err();
        assert!(matches!(err, Error::StepFailed { step: 1, .. }), "{err:?}");
    }

    #[test]
    fn comparison_of_zero_states() {
        let grid = CompactGrid::new(32, 2.0).unwrap();
        let fg = FourierGrid::new(64, 2.0).unwrap();
        let d = compare_solutions(&[0.0; 33], &grid, &[0.0; 64], &fg, (-5.0, 5.0)).unwrap();
        assert_eq!(d, 0.0);
        assert!(matches!(
            compare_solutions(&[0.0; 33], &grid, &[0.0; 64], &fg, (100.0, 200.0)),
            Err(Error::EmptyWindow { .. })
        ));
    }
}
