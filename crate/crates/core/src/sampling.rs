//! Seeded band-limited field generators for randomized suites.
//!
//! Fields are sums over modes with per-axis wavenumber at most `max_mode`,
//! Hermitian-symmetric coefficients (real fields), and deterministic output
//! for a fixed RNG stream. Amplitude control goes through the complex
//! Hessian: `scale_to_margin` rescales a potential so that the smallest
//! eigenvalue of `I + hess(phi)` over the grid hits a prescribed target,
//! which is exact because eigenvalues are affine in the scale.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fft::Spectrum;
use crate::grid::{PeriodicGrid, ScalarField};
use crate::herm::HermitianField;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random real field with per-axis modes `|k| <= max_mode`, zero mean,
/// normalized to unit sup norm before scaling by `amplitude`.
pub fn random_bandlimited(
    grid: PeriodicGrid,
    max_mode: i64,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> ScalarField {
    let axes = grid.axes();
    let mut modes: Vec<Vec<i64>> = Vec::new();
    let mut stack = vec![0i64; axes];
    enumerate_modes(&mut modes, &mut stack, 0, max_mode);

    let mut f = ScalarField::zeros(grid);
    for k in &modes {
        if k.iter().all(|&v| v == 0) {
            continue;
        }
        let a: f64 = rng.gen_range(-1.0..1.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        // Mild decay keeps the spectrum tame without hiding the nonlinearity.
        let weight = 1.0 / (1.0 + k.iter().map(|&v| (v * v) as f64).sum::<f64>());
        add_mode(&mut f, k, a * weight, b * weight);
    }
    let sup = f.max_abs().max(1e-300);
    f.scaled(amplitude / sup)
}

fn enumerate_modes(out: &mut Vec<Vec<i64>>, stack: &mut Vec<i64>, axis: usize, max_mode: i64) {
    if axis == stack.len() {
        out.push(stack.clone());
        return;
    }
    for k in -max_mode..=max_mode {
        stack[axis] = k;
        enumerate_modes(out, stack, axis + 1, max_mode);
    }
}

/// Add `a cos(2 pi k.x) + b sin(2 pi k.x)` in place.
pub fn add_mode(f: &mut ScalarField, k: &[i64], a: f64, b: f64) {
    let grid = f.grid();
    for (i, v) in f.values_mut().iter_mut().enumerate() {
        let x = grid.coords(i);
        let phase: f64 = 2.0
            * std::f64::consts::PI
            * k.iter().zip(&x).map(|(&ki, xi)| ki as f64 * xi).sum::<f64>();
        *v += a * phase.cos() + b * phase.sin();
    }
}

/// Rescale `phi` so the positivity margin of `I + hess(phi)` equals `target`.
/// Returns the rescaled field; `target` must lie in (0, 1).
pub fn scale_to_margin(phi: &ScalarField, target: f64) -> ScalarField {
    assert!(target > 0.0 && target < 1.0);
    let hess = HermitianField::complex_hessian(&Spectrum::forward(phi));
    let min_eig = hess.min_eigenvalue();
    if min_eig >= 0.0 {
        // Hessian never dips below zero; any scale keeps the margin at 1.
        return phi.clone();
    }
    let alpha = (1.0 - target) / (-min_eig);
    phi.scaled(alpha)
}

/// Random potential with a prescribed positivity margin.
pub fn random_potential(
    grid: PeriodicGrid,
    max_mode: i64,
    margin: f64,
    rng: &mut ChaCha8Rng,
) -> ScalarField {
    let raw = random_bandlimited(grid, max_mode, 1.0, rng);
    scale_to_margin(&raw, margin)
}

/// Random twist potential: scaled so that `chi = c omega + hess(psi)` has
/// smallest eigenvalue `margin * c` over the grid.
pub fn random_chi_potential(
    grid: PeriodicGrid,
    max_mode: i64,
    c: f64,
    margin: f64,
    rng: &mut ChaCha8Rng,
) -> ScalarField {
    let raw = random_bandlimited(grid, max_mode, 1.0, rng);
    let hess = HermitianField::complex_hessian(&Spectrum::forward(&raw));
    let min_eig = hess.min_eigenvalue();
    if min_eig >= 0.0 {
        return raw;
    }
    let alpha = c * (1.0 - margin) / (-min_eig);
    raw.scaled(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let grid = PeriodicGrid::new(1, 16).unwrap();
        let a = random_bandlimited(grid, 3, 0.4, &mut rng_from_seed(7));
        let b = random_bandlimited(grid, 3, 0.4, &mut rng_from_seed(7));
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn margin_rescaling_is_exact() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let phi = random_potential(grid, 3, 0.55, &mut rng_from_seed(11));
        let hess = HermitianField::complex_hessian(&Spectrum::forward(&phi));
        let margin = 1.0 + hess.min_eigenvalue();
        assert!((margin - 0.55).abs() < 1e-10, "margin {margin}");
    }

    #[test]
    fn band_limit_respected() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let f = random_bandlimited(grid, 2, 1.0, &mut rng_from_seed(3));
        let spec = Spectrum::forward(&f);
        // Any coefficient with a per-axis mode above 2 must vanish.
        let n = grid.n_axis() as i64;
        for kx in -n / 2 + 1..n / 2 {
            for ky in -n / 2 + 1..n / 2 {
                if kx.abs() > 2 || ky.abs() > 2 {
                    let c = spec.coeff_at(&[kx, ky]);
                    assert!(c.norm() < 1e-10 * grid.len() as f64);
                }
            }
        }
    }
}
