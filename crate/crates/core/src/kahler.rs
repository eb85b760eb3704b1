//! Perturbed Kähler metrics on the flat torus and their curvature.
//!
//! A potential `phi` defines `g = I + hess(phi)`; the state caches the
//! inverse, determinant, Ricci tensor `Ric = -hess(log det g)` and scalar
//! curvature `R = tr(g^{-1} Ric)`. The twist form is `chi = c*omega + hess(psi)`,
//! positive definite by construction check, and the twisted scalar curvature
//! interpolates `R^s = s R - (1-s) tr_g chi`.
//!
//! Volume convention: the discrete volume element is `det(g) h^(2m)` and the
//! flat torus has unit volume, so all class integrals are normalized.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::fft::Spectrum;
use crate::grid::{dealias_field, integrate, PeriodicGrid, ScalarField};
use crate::herm::{self, HermitianField};

/// Background data for one twisted problem: twist parameter `s` and the
/// twist form `chi` given through a scale `c > 0` and a potential `psi`.
#[derive(Clone, Debug)]
pub struct TwistedSetup {
    grid: PeriodicGrid,
    s: f64,
    chi_scale: f64,
    psi: ScalarField,
    chi: HermitianField,
    /// Cohomological average of `tr_omega chi`; equals `m * c` up to roundoff.
    chi_bar: f64,
    /// Positivity floor for metric eigenvalues.
    pub eps_pos: f64,
}

impl TwistedSetup {
    pub fn new(grid: PeriodicGrid, s: f64, chi_scale: f64, psi: ScalarField) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "twist parameter s must lie in (0, 1], got {s}"
            )));
        }
        if chi_scale <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "chi scale must be positive, got {chi_scale}"
            )));
        }
        if psi.grid() != grid {
            return Err(Error::GridMismatch("psi grid differs from setup grid".into()));
        }
        if !psi.is_finite() {
            return Err(Error::NonFinite("chi potential"));
        }
        let hess_psi = HermitianField::complex_hessian(&Spectrum::forward(&psi));
        let chi = HermitianField::scaled_identity(grid, chi_scale).linear_comb(1.0, &hess_psi, 1.0);
        let chi_min = chi.min_eigenvalue();
        if chi_min <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "twist form is not positive definite (min eigenvalue {chi_min:.3e})"
            )));
        }
        // Average of tr_omega chi against the flat background; the hess(psi)
        // part integrates to zero, so this is m*c computed numerically.
        let id_inv = HermitianField::scaled_identity(grid, 1.0);
        let tr = herm::trace_field(&id_inv, &chi);
        let chi_bar = integrate(&tr, &ScalarField::constant(grid, 1.0));
        Ok(Self {
            grid,
            s,
            chi_scale,
            psi,
            chi,
            chi_bar,
            eps_pos: 1e-8,
        })
    }

    /// Flat background with `chi = c * omega`.
    pub fn flat_twist(grid: PeriodicGrid, s: f64, chi_scale: f64) -> Result<Self> {
        Self::new(grid, s, chi_scale, ScalarField::zeros(grid))
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn chi_scale(&self) -> f64 {
        self.chi_scale
    }

    pub fn psi(&self) -> &ScalarField {
        &self.psi
    }

    pub fn chi(&self) -> &HermitianField {
        &self.chi
    }

    pub fn chi_bar(&self) -> f64 {
        self.chi_bar
    }

    /// Cohomological average `Rbar^s = s * Rbar - (1-s) * chibar`; the scalar
    /// curvature average vanishes on the torus.
    pub fn twisted_average(&self) -> f64 {
        -(1.0 - self.s) * self.chi_bar
    }

    pub fn with_eps_pos(mut self, eps: f64) -> Self {
        self.eps_pos = eps;
        self
    }
}

/// Metric state derived from a potential: tensors of `omega_phi`.
#[derive(Clone, Debug)]
pub struct MetricState {
    phi: ScalarField,
    g: HermitianField,
    g_inv: HermitianField,
    det_g: ScalarField,
    ricci: HermitianField,
    scalar_curv: ScalarField,
    positivity_margin: f64,
}

impl MetricState {
    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn g(&self) -> &HermitianField {
        &self.g
    }

    pub fn g_inv(&self) -> &HermitianField {
        &self.g_inv
    }

    pub fn det_g(&self) -> &ScalarField {
        &self.det_g
    }

    pub fn ricci(&self) -> &HermitianField {
        &self.ricci
    }

    pub fn scalar_curv(&self) -> &ScalarField {
        &self.scalar_curv
    }

    pub fn positivity_margin(&self) -> f64 {
        self.positivity_margin
    }

    /// Weighted inner product `<<f, g>> = int f g det_g dV` (Mabuchi metric).
    pub fn weighted_inner(&self, f: &ScalarField, g: &ScalarField) -> f64 {
        let fv = f.values();
        let gv = g.values();
        let wv = self.det_g.values();
        exec::sum_indexed(fv.len(), |i| fv[i] * gv[i] * wv[i]) * f.grid().cell_volume()
    }

    /// Weighted mean `int f det_g dV / int det_g dV`.
    pub fn weighted_mean(&self, f: &ScalarField) -> f64 {
        let one = ScalarField::constant(f.grid(), 1.0);
        integrate(f, &self.det_g) / integrate(&one, &self.det_g)
    }
}

/// Build the metric state of `omega + i ddbar phi`.
///
/// Fails with [`Error::Positivity`] when the smallest eigenvalue of `g` over
/// the grid drops to the floor `setup.eps_pos`; degenerate metrics are
/// rejected rather than regularized.
pub fn build_metric(setup: &TwistedSetup, phi: &ScalarField) -> Result<MetricState> {
    if phi.grid() != setup.grid() {
        return Err(Error::GridMismatch("phi grid differs from setup grid".into()));
    }
    if !phi.is_finite() {
        return Err(Error::NonFinite("potential"));
    }
    let grid = setup.grid();
    let m = grid.m();
    // Center the potential first: the Hessian kills constants exactly, and
    // removing the mean up front keeps gauge invariance at roundoff level.
    let centered = phi.shifted(-phi.mean());
    let hess = HermitianField::complex_hessian(&Spectrum::forward(&centered));
    let g = HermitianField::scaled_identity(grid, 1.0).linear_comb(1.0, &hess, 1.0);

    let margin = g.min_eigenvalue();
    if margin <= setup.eps_pos {
        return Err(Error::Positivity {
            margin,
            floor: setup.eps_pos,
            t: None,
        });
    }

    let len = grid.len();
    let mut det_g = ScalarField::zeros(grid);
    let mut log_det = ScalarField::zeros(grid);
    let mut g_inv = HermitianField::zeros(grid);
    {
        let det_v = det_g.values_mut();
        exec::for_chunks_mut(det_v, exec::CHUNK, |ci, chunk| {
            let base = ci * exec::CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = herm::det(&g.at(base + j), m);
            }
        });
        let det_v = det_g.values();
        exec::for_chunks_mut(log_det.values_mut(), exec::CHUNK, |ci, chunk| {
            let base = ci * exec::CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = det_v[base + j].ln();
            }
        });
        for i in 0..len {
            let inv = herm::inverse(&g.at(i), m);
            g_inv.set(i, &inv);
        }
    }

    // Ricci from the spectrally differentiated log-determinant; the 2/3-rule
    // filter keeps the re-differentiated field band-limited.
    let log_det = dealias_field(&log_det);
    let ricci_hess = HermitianField::complex_hessian(&Spectrum::forward(&log_det));
    let ricci = HermitianField::zeros(grid).linear_comb(0.0, &ricci_hess, -1.0);

    let scalar_curv = dealias_field(&herm::trace_field(&g_inv, &ricci));

    Ok(MetricState {
        phi: phi.clone(),
        g,
        g_inv,
        det_g,
        ricci,
        scalar_curv,
        positivity_margin: margin,
    })
}

/// Twisted scalar curvature `R^s(omega_phi) = s R_phi - (1-s) tr_phi chi`.
pub fn twisted_scalar(setup: &TwistedSetup, ms: &MetricState) -> ScalarField {
    let tr = trace_chi(setup, ms);
    let s = setup.s();
    let mut out = ScalarField::zeros(setup.grid());
    let rv = ms.scalar_curv.values();
    let tv = tr.values();
    exec::for_chunks_mut(out.values_mut(), exec::CHUNK, |ci, chunk| {
        let base = ci * exec::CHUNK;
        for (j, v) in chunk.iter_mut().enumerate() {
            let i = base + j;
            *v = s * rv[i] - (1.0 - s) * tv[i];
        }
    });
    out
}

/// `tr_phi chi = g_phi^{j kbar} chi_{j kbar}`, dealiased.
pub fn trace_chi(setup: &TwistedSetup, ms: &MetricState) -> ScalarField {
    dealias_field(&herm::trace_field(&ms.g_inv, &setup.chi))
}

/// Pointwise inner product of two Hermitian (1,1)-forms in the metric with
/// inverse `g_inv`: `<alpha, beta> = g^{j qbar} g^{p kbar} alpha_{j kbar} beta_{p qbar}`.
pub fn inner_11(
    g_inv: &HermitianField,
    alpha: &HermitianField,
    beta: &HermitianField,
) -> ScalarField {
    let grid = g_inv.grid();
    let m = grid.m();
    let mut out = ScalarField::zeros(grid);
    exec::for_chunks_mut(out.values_mut(), exec::CHUNK, |ci, chunk| {
        let base = ci * exec::CHUNK;
        for (j, v) in chunk.iter_mut().enumerate() {
            let i = base + j;
            let inv_raised = herm::raised(&g_inv.at(i));
            *v = herm::inner_11_node(&inv_raised, &alpha.at(i), &beta.at(i), m);
        }
    });
    out
}

/// Complex gradient components `V^alpha = g^{alpha betabar} f_betabar` of a
/// real function, one complex vector of values per holomorphic index.
pub fn gradient_10(ms: &MetricState, f_spec: &Spectrum) -> Vec<Vec<Complex64>> {
    let grid = ms.phi.grid();
    let m = grid.m();
    let len = grid.len();
    let f_bar: Vec<Vec<Complex64>> = (0..m)
        .map(|b| f_spec.dzbar(b).inverse().values().to_vec())
        .collect();
    let g_inv = &ms.g_inv;
    let mut out = vec![vec![Complex64::ZERO; len]; m];
    for (a, out_a) in out.iter_mut().enumerate() {
        exec::for_chunks_mut(out_a, exec::CHUNK, |ci, chunk| {
            let base = ci * exec::CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                let i = base + j;
                let raised = herm::raised(&g_inv.at(i));
                let mut acc = Complex64::ZERO;
                for (b, fb) in f_bar.iter().enumerate() {
                    acc += raised[a][b] * fb[i];
                }
                *v = acc;
            }
        });
    }
    out
}
