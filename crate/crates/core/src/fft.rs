//! Multi-axis FFT engine and spectral calculus on the periodic grid.
//!
//! Fields live on a uniform grid over `[0,1)^(2m)` in row-major layout; the
//! spectrum uses the usual signed-mode convention (index `i` maps to mode
//! `i` for `i <= n/2` and `i - n` otherwise). Forward transforms are raw,
//! the inverse carries the `1/N` normalization.
//!
//! Complex-coordinate derivatives follow `d/dz = (d/dx - i d/dy)/2`, so the
//! symbol of `d/dz_j d/dzbar_j` on mode `k` is `-pi^2 (kx_j^2 + ky_j^2)` and
//! the metric Laplacian of the flat torus is a quarter of the Euclidean one.
//! Nyquist content is dropped by every derivative; fields are expected to be
//! band-limited well below it (the 2/3-rule keeps them there).

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::exec;
use crate::grid::{ComplexField, PeriodicGrid, ScalarField};

struct AxisPlans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<AxisPlans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<AxisPlans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::<f64>::new();
            Arc::new(AxisPlans {
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// Signed mode number for spectrum index `i` on an `n`-point axis.
#[inline]
pub fn mode(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Transform one axis of the row-major array, in place.
///
/// For the contiguous (last) axis the lines are transformed directly; for
/// strided axes each block is transposed into a scratch buffer so that the
/// line transforms stay contiguous and safely parallel.
fn transform_axis(data: &mut [Complex64], dims: &[usize], axis: usize, forward: bool) {
    let n = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let block = n * stride;
    let plans = plans(n);
    let plan = if forward { &plans.fwd } else { &plans.inv };
    let scratch_len = plan.get_inplace_scratch_len();

    if stride == 1 {
        exec::for_chunks_mut(data, n, |_, line| {
            let mut scratch = vec![Complex64::ZERO; scratch_len];
            plan.process_with_scratch(line, &mut scratch);
        });
        return;
    }

    // One block = `stride` interleaved lines of length `n`.
    exec::for_chunks_mut(data, block, |_, chunk| {
        let mut buf = vec![Complex64::ZERO; chunk.len()];
        // Gather lines into contiguous rows and transform them.
        exec::for_chunks_mut(&mut buf, n, |line, row| {
            for (t, v) in row.iter_mut().enumerate() {
                *v = chunk[t * stride + line];
            }
            let mut scratch = vec![Complex64::ZERO; scratch_len];
            plan.process_with_scratch(row, &mut scratch);
        });
        // Scatter back, parallel over the `t` slabs which are contiguous.
        let buf = &buf;
        exec::for_chunks_mut(chunk, stride, |t, slab| {
            for (line, v) in slab.iter_mut().enumerate() {
                *v = buf[line * n + t];
            }
        });
    });
}

fn transform_all(data: &mut [Complex64], grid: &PeriodicGrid, forward: bool) {
    let dims = grid.dims();
    for axis in 0..grid.axes() {
        transform_axis(data, &dims, axis, forward);
    }
    if !forward {
        let scale = 1.0 / grid.len() as f64;
        exec::for_chunks_mut(data, exec::CHUNK, |_, c| {
            for v in c.iter_mut() {
                *v *= scale;
            }
        });
    }
}

/// Fourier coefficients of a field, same row-major layout as the grid.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: PeriodicGrid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn forward(f: &ScalarField) -> Spectrum {
        let grid = f.grid();
        let mut coeffs: Vec<Complex64> =
            f.values().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        transform_all(&mut coeffs, &grid, true);
        Spectrum { grid, coeffs }
    }

    pub fn forward_complex(f: &ComplexField) -> Spectrum {
        let grid = f.grid();
        let mut coeffs = f.values().to_vec();
        transform_all(&mut coeffs, &grid, true);
        Spectrum { grid, coeffs }
    }

    pub fn inverse(&self) -> ComplexField {
        let mut data = self.coeffs.clone();
        transform_all(&mut data, &self.grid, false);
        ComplexField::from_values(self.grid, data)
    }

    /// Inverse transform keeping only the real part. Valid whenever the
    /// spectrum is conjugate-symmetric up to roundoff.
    pub fn inverse_real(&self) -> ScalarField {
        let mut data = self.coeffs.clone();
        transform_all(&mut data, &self.grid, false);
        ScalarField::from_values(self.grid, data.iter().map(|v| v.re).collect())
    }

    /// Multiply every coefficient by `f(modes)` where `modes` holds the
    /// signed mode numbers of all `2m` axes. The index walk is incremental,
    /// no divisions in the inner loop.
    pub fn apply_mode_fn<F>(&mut self, f: F)
    where
        F: Fn(&[i64]) -> Complex64 + Sync,
    {
        let n = self.grid.n_axis();
        let axes = self.grid.axes();
        let coeffs = &mut self.coeffs;
        // Points per chunk must divide evenly into the index walk; use rows
        // of the last axis as the work unit.
        exec::for_chunks_mut(coeffs, n, |row, chunk| {
            let mut idx = [0usize; 4];
            let mut rem = row;
            for a in (0..axes.saturating_sub(1)).rev() {
                idx[a] = rem % n;
                rem /= n;
            }
            let mut modes = [0i64; 4];
            for a in 0..axes - 1 {
                modes[a] = mode(idx[a], n);
            }
            for (i, v) in chunk.iter_mut().enumerate() {
                modes[axes - 1] = mode(i, n);
                *v *= f(&modes[..axes]);
            }
        });
    }

    /// Spectral derivative along one real axis. The Nyquist column is zeroed.
    pub fn axis_derivative(&self, axis: usize, order: u32) -> Spectrum {
        let n = self.grid.n_axis();
        let table = derivative_table(n, order);
        let mut out = self.clone();
        out.apply_mode_fn(|modes| table[table_index(modes[axis], n)]);
        out
    }

    /// `d/dz_j` in complex coordinate `z_j = x_{2j} + i x_{2j+1}`.
    pub fn dz(&self, j: usize) -> Spectrum {
        let n = self.grid.n_axis();
        let (ax, ay) = (2 * j, 2 * j + 1);
        let mut out = self.clone();
        out.apply_mode_fn(|modes| dz_symbol(modes[ax], modes[ay], n));
        out
    }

    /// `d/dzbar_j`.
    pub fn dzbar(&self, j: usize) -> Spectrum {
        let n = self.grid.n_axis();
        let (ax, ay) = (2 * j, 2 * j + 1);
        let mut out = self.clone();
        out.apply_mode_fn(|modes| dzbar_symbol(modes[ax], modes[ay], n));
        out
    }

    /// `d/dz_j d/dzbar_k`, one pass.
    pub fn dz_dzbar(&self, j: usize, k: usize) -> Spectrum {
        let n = self.grid.n_axis();
        let (jx, jy) = (2 * j, 2 * j + 1);
        let (kx, ky) = (2 * k, 2 * k + 1);
        let mut out = self.clone();
        out.apply_mode_fn(|modes| {
            dz_symbol(modes[jx], modes[jy], n) * dzbar_symbol(modes[kx], modes[ky], n)
        });
        out
    }

    /// Zero all modes above the 2/3-rule cutoff `|k| <= n/3` (per axis).
    pub fn dealias(&mut self) {
        let n = self.grid.n_axis() as i64;
        self.apply_mode_fn(|modes| {
            if modes.iter().any(|&k| 3 * k.abs() > n) {
                Complex64::ZERO
            } else {
                Complex64::new(1.0, 0.0)
            }
        });
    }

    /// Coefficient of a given signed multi-mode.
    pub fn coeff_at(&self, modes: &[i64]) -> Complex64 {
        let n = self.grid.n_axis();
        let mut flat = 0usize;
        for &k in modes {
            let i = if k >= 0 { k as usize } else { (k + n as i64) as usize };
            flat = flat * n + i;
        }
        self.coeffs[flat]
    }
}

#[inline]
fn table_index(k: i64, n: usize) -> usize {
    if k >= 0 {
        k as usize
    } else {
        (k + n as i64) as usize
    }
}

/// `(2 pi i k)^order` with the Nyquist entry dropped.
fn derivative_table(n: usize, order: u32) -> Vec<Complex64> {
    (0..n)
        .map(|i| {
            let k = mode(i, n);
            if k.unsigned_abs() as usize == n / 2 && order > 0 {
                return Complex64::ZERO;
            }
            Complex64::new(0.0, 2.0 * std::f64::consts::PI * k as f64).powu(order)
        })
        .collect()
}

#[inline]
fn nyquist(k: i64, n: usize) -> bool {
    k.unsigned_abs() as usize == n / 2
}

/// Symbol of `d/dz` on mode `(kx, ky)`: `pi * (ky + i kx)`.
#[inline]
fn dz_symbol(kx: i64, ky: i64, n: usize) -> Complex64 {
    if nyquist(kx, n) || nyquist(ky, n) {
        return Complex64::ZERO;
    }
    std::f64::consts::PI * Complex64::new(ky as f64, kx as f64)
}

/// Symbol of `d/dzbar` on mode `(kx, ky)`: `pi * (-ky + i kx)`.
#[inline]
fn dzbar_symbol(kx: i64, ky: i64, n: usize) -> Complex64 {
    if nyquist(kx, n) || nyquist(ky, n) {
        return Complex64::ZERO;
    }
    std::f64::consts::PI * Complex64::new(-ky as f64, kx as f64)
}

/// Fourier diagonal of the flat metric Laplacian `-Delta`: `pi^2 |k|^2`.
pub fn laplacian_diagonal(grid: &PeriodicGrid) -> Vec<f64> {
    let n = grid.n_axis();
    let axes = grid.axes();
    let mut diag = vec![0.0; grid.len()];
    exec::for_chunks_mut(&mut diag, n, |row, chunk| {
        let mut idx = [0usize; 4];
        let mut rem = row;
        for a in (0..axes.saturating_sub(1)).rev() {
            idx[a] = rem % n;
            rem /= n;
        }
        let mut k2_head = 0.0;
        for a in 0..axes - 1 {
            let k = mode(idx[a], n) as f64;
            k2_head += k * k;
        }
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        for (i, v) in chunk.iter_mut().enumerate() {
            let k = mode(i, n) as f64;
            *v = pi2 * (k2_head + k * k);
        }
    });
    diag
}

/// Fourier diagonal of the flat biharmonic `Delta^2` (with `Delta` the metric
/// Laplacian, a quarter of the Euclidean one): `pi^4 |k|^4` on mode `k`.
pub fn biharmonic_diagonal(grid: &PeriodicGrid) -> Vec<f64> {
    let n = grid.n_axis();
    let axes = grid.axes();
    let mut diag = vec![0.0; grid.len()];
    exec::for_chunks_mut(&mut diag, n, |row, chunk| {
        let mut idx = [0usize; 4];
        let mut rem = row;
        for a in (0..axes.saturating_sub(1)).rev() {
            idx[a] = rem % n;
            rem /= n;
        }
        let mut k2_head = 0.0;
        for a in 0..axes - 1 {
            let k = mode(idx[a], n) as f64;
            k2_head += k * k;
        }
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        for (i, v) in chunk.iter_mut().enumerate() {
            let k = mode(i, n) as f64;
            let k2 = k2_head + k * k;
            *v = pi2 * pi2 * k2 * k2;
        }
    });
    diag
}
