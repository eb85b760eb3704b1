//! Periodic grid and field types for the unit torus in real dimension `2m`.
//!
//! Coordinates are ordered `(x_1, y_1, ..., x_m, y_m)` with `z_j = x_j + i y_j`,
//! row-major storage, `n_axis` points per axis and spacing `1/n_axis`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::fft::Spectrum;

/// Discretization of the flat torus `C^m / (Z^m + i Z^m)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeriodicGrid {
    m: usize,
    n_axis: usize,
}

impl PeriodicGrid {
    /// `m` is the complex dimension (1 or 2), `n_axis` a power of two >= 8.
    pub fn new(m: usize, n_axis: usize) -> Result<Self> {
        if !(1..=2).contains(&m) {
            return Err(Error::InvalidParameter(format!(
                "complex dimension must be 1 or 2, got {m}"
            )));
        }
        if n_axis < 8 || !n_axis.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "n_axis must be a power of two >= 8, got {n_axis}"
            )));
        }
        Ok(Self { m, n_axis })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_axis(&self) -> usize {
        self.n_axis
    }

    /// Number of real axes, `2m`.
    pub fn axes(&self) -> usize {
        2 * self.m
    }

    /// Grid spacing per axis.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n_axis as f64
    }

    /// Total point count `n_axis^(2m)`.
    pub fn len(&self) -> usize {
        self.n_axis.pow(self.axes() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one grid cell; the quadrature weight of `integrate`.
    pub fn cell_volume(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.n_axis; self.axes()]
    }

    /// Coordinates of a flat index, ordered `(x_1, y_1, ..)`.
    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes()];
        let mut rem = flat;
        for a in (0..self.axes()).rev() {
            out[a] = (rem % self.n_axis) as f64 * self.spacing();
            rem /= self.n_axis;
        }
        out
    }
}

/// Real scalar field over the grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "value count must match grid");
        Self { grid, values }
    }

    /// Build from a pointwise function of the coordinates.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: PeriodicGrid, f: F) -> Self {
        let mut values = vec![0.0; grid.len()];
        for (i, v) in values.iter_mut().enumerate() {
            *v = f(&grid.coords(i));
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        exec::max_indexed(self.values.len(), |i| self.values[i].abs())
    }

    /// Lebesgue mean over the torus.
    pub fn mean(&self) -> f64 {
        exec::sum_indexed(self.values.len(), |i| self.values[i]) * self.grid.cell_volume()
    }

    /// `self + a * other`, consuming nothing.
    pub fn add_scaled(&self, a: f64, other: &ScalarField) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let mut out = self.clone();
        exec::for_chunks_mut(&mut out.values, exec::CHUNK, |ci, chunk| {
            let base = ci * exec::CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v += a * other.values[base + j];
            }
        });
        out
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        let mut out = self.clone();
        exec::for_chunks_mut(&mut out.values, exec::CHUNK, |_, chunk| {
            for v in chunk.iter_mut() {
                *v *= a;
            }
        });
        out
    }

    pub fn shifted(&self, c: f64) -> ScalarField {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v += c;
        }
        out
    }
}

/// Complex scalar field over the grid.
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: PeriodicGrid,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::ZERO; grid.len()],
        }
    }

    pub fn from_values(grid: PeriodicGrid, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), grid.len(), "value count must match grid");
        Self { grid, values }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn max_norm(&self) -> f64 {
        exec::max_indexed(self.values.len(), |i| self.values[i].norm())
    }

    pub fn real_part(&self) -> ScalarField {
        ScalarField::from_values(self.grid, self.values.iter().map(|v| v.re).collect())
    }

    pub fn max_imag_abs(&self) -> f64 {
        exec::max_indexed(self.values.len(), |i| self.values[i].im.abs())
    }
}

fn check_same_grid(a: PeriodicGrid, b: PeriodicGrid, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!(
            "{what}: {:?} vs {:?}",
            a, b
        )));
    }
    Ok(())
}

/// Spectral derivative of order `order` along real axis `axis`.
///
/// Exact for the trigonometric interpolant of any field with Fourier support
/// below the Nyquist mode; the derivative of a constant is exactly zero.
pub fn derivative(f: &ScalarField, axis: usize, order: u32) -> Result<ComplexField> {
    if !f.is_finite() {
        return Err(Error::NonFinite("derivative input"));
    }
    check_derivative_args(f.grid(), axis, order)?;
    Ok(Spectrum::forward(f).axis_derivative(axis, order).inverse())
}

/// Same as [`derivative`] for complex input.
pub fn derivative_complex(f: &ComplexField, axis: usize, order: u32) -> Result<ComplexField> {
    if !f.is_finite() {
        return Err(Error::NonFinite("derivative input"));
    }
    check_derivative_args(f.grid(), axis, order)?;
    Ok(Spectrum::forward_complex(f)
        .axis_derivative(axis, order)
        .inverse())
}

fn check_derivative_args(grid: PeriodicGrid, axis: usize, order: u32) -> Result<()> {
    if axis >= grid.axes() {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} out of range for {} real axes",
            grid.axes()
        )));
    }
    if order == 0 || order > 4 {
        return Err(Error::InvalidParameter(format!(
            "derivative order must be in 1..=4, got {order}"
        )));
    }
    Ok(())
}

/// Pointwise product with Fourier content above the 2/3-rule cutoff zeroed.
pub fn dealiased_product(f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    check_same_grid(f.grid(), g.grid(), "dealiased_product")?;
    let mut prod = ScalarField::zeros(f.grid());
    exec::for_chunks_mut(prod.values_mut(), exec::CHUNK, |ci, chunk| {
        let base = ci * exec::CHUNK;
        for (j, v) in chunk.iter_mut().enumerate() {
            *v = f.values()[base + j] * g.values()[base + j];
        }
    });
    Ok(dealias_field(&prod))
}

/// Apply the 2/3-rule filter to a real field.
pub fn dealias_field(f: &ScalarField) -> ScalarField {
    let mut spec = Spectrum::forward(f);
    spec.dealias();
    spec.inverse_real()
}

/// Apply the 2/3-rule filter to a complex field.
pub fn dealias_complex(f: &ComplexField) -> ComplexField {
    let mut spec = Spectrum::forward_complex(f);
    spec.dealias();
    spec.inverse()
}

/// Quadrature of `f * weight` over the torus: the rectangle rule on the
/// periodic grid, spectrally accurate for smooth fields. Deterministic
/// summation order regardless of thread count.
pub fn integrate(f: &ScalarField, weight: &ScalarField) -> f64 {
    debug_assert_eq!(f.grid(), weight.grid());
    let fv = f.values();
    let wv = weight.values();
    exec::sum_indexed(fv.len(), |i| fv[i] * wv[i]) * f.grid().cell_volume()
}

/// Quadrature of a single field against the flat volume form.
pub fn integrate_plain(f: &ScalarField) -> f64 {
    let fv = f.values();
    exec::sum_indexed(fv.len(), |i| fv[i]) * f.grid().cell_volume()
}

/// Weighted dot products used by the eigensolvers: `sum f g w h^(2m)`.
pub fn weighted_dot(f: &[f64], g: &[f64], w: &[f64], cell: f64) -> f64 {
    exec::sum_indexed(f.len(), |i| f[i] * g[i] * w[i]) * cell
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_validation() {
        assert!(PeriodicGrid::new(1, 8).is_ok());
        assert!(PeriodicGrid::new(3, 8).is_err());
        assert!(PeriodicGrid::new(1, 12).is_err());
        assert!(PeriodicGrid::new(1, 4).is_err());
    }

    #[test]
    fn derivative_of_sine_is_exact() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let f = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).sin());
        let df = derivative(&f, 0, 1).unwrap();
        for (i, v) in df.values().iter().enumerate() {
            let x = grid.coords(i)[0];
            let expect = 2.0 * PI * (2.0 * PI * x).cos();
            assert!((v.re - expect).abs() < 1e-10, "node {i}");
            assert!(v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let grid = PeriodicGrid::new(1, 16).unwrap();
        let f = ScalarField::constant(grid, 3.7);
        for axis in 0..2 {
            for order in 1..=4 {
                let df = derivative(&f, axis, order).unwrap();
                assert!(df.max_norm() < 1e-14);
            }
        }
    }

    // Oracle: symbolic second derivative of sin(2 pi x).
    #[test]
    fn second_derivative_matches_symbolic_oracle() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let f = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).sin());
        let d2 = derivative(&f, 0, 2).unwrap();
        for (i, v) in d2.values().iter().enumerate() {
            let x = grid.coords(i)[0];
            let expect = -4.0 * PI * PI * (2.0 * PI * x).sin();
            assert!((v.re - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn derivative_rejects_bad_input() {
        let grid = PeriodicGrid::new(1, 16).unwrap();
        let mut f = ScalarField::zeros(grid);
        f.values_mut()[3] = f64::NAN;
        assert!(matches!(
            derivative(&f, 0, 1),
            Err(Error::NonFinite(_))
        ));
        let g = ScalarField::zeros(grid);
        assert!(derivative(&g, 5, 1).is_err());
        assert!(derivative(&g, 0, 5).is_err());
    }

    // Oracle: trig identity sin^2(t) = (1 - cos(2t))/2, mode 2 resolved at n >= 8.
    #[test]
    fn dealiased_square_of_sine() {
        let grid = PeriodicGrid::new(1, 8).unwrap();
        let f = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).sin());
        let p = dealiased_product(&f, &f).unwrap();
        for (i, v) in p.values().iter().enumerate() {
            let x = grid.coords(i)[0];
            let expect = 0.5 * (1.0 - (4.0 * PI * x).cos());
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn dealiased_product_with_one_is_filter() {
        let grid = PeriodicGrid::new(1, 16).unwrap();
        let one = ScalarField::constant(grid, 1.0);
        let g = ScalarField::from_fn(grid, |x| (2.0 * PI * 7.0 * x[0]).cos() + (2.0 * PI * x[1]).sin());
        let p = dealiased_product(&one, &g).unwrap();
        let filtered = dealias_field(&g);
        for (a, b) in p.values().iter().zip(filtered.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dealiased_product_rejects_grid_mismatch() {
        let a = ScalarField::zeros(PeriodicGrid::new(1, 8).unwrap());
        let b = ScalarField::zeros(PeriodicGrid::new(1, 16).unwrap());
        assert!(matches!(
            dealiased_product(&a, &b),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn integrate_unit_volume_and_symmetry() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let one = ScalarField::constant(grid, 1.0);
        assert!((integrate(&one, &one) - 1.0).abs() < 1e-14);
        let s = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).sin());
        assert!(integrate(&s, &one).abs() < 1e-14);
    }

    // Oracle: closed-form integral of sin^2 over the unit torus is 1/2.
    #[test]
    fn integrate_sine_squared() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let one = ScalarField::constant(grid, 1.0);
        let s2 = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).sin().powi(2));
        assert!((integrate(&s2, &one) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn integral_of_derivative_vanishes() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let one = ScalarField::constant(grid, 1.0);
        let f = ScalarField::from_fn(grid, |x| {
            (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos() + 0.2 * (6.0 * PI * x[0]).cos()
        });
        for axis in 0..2 {
            let df = derivative(&f, axis, 1).unwrap().real_part();
            assert!(integrate(&df, &one).abs() < 1e-12);
        }
    }
}
