//! Energy functionals on the space of Kähler potentials and their
//! variational identities.
//!
//! The twisted Calabi energy is the L2 deviation of the twisted scalar
//! curvature from its cohomological average, with no 1/2 prefactor:
//! `C^s(phi) = int (R^s - Rbar^s)^2 det_g dV`. With that convention the
//! first variation is `-2 << delta, L^s(R^s) >>` and the Hessian at a
//! critical point is `2 int < L^s d1, L^s d2 >`.
//!
//! The twisted K-energy is defined only through its differential
//! `D M^s(delta) = -int delta (R^s - Rbar^s) det_g dV`; values come from
//! composite Simpson quadrature along a path of potentials, and path
//! independence of the result is a test, not an assumption.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::ScalarField;
use crate::kahler::{self, MetricState, TwistedSetup};
use crate::operators::{self, OperatorContext};

/// Polynomial in the path parameter, `c[0] + c[1] t + c[2] t^2 + ...`.
#[derive(Clone, Debug)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| i as f64 * c)
                .collect(),
        )
    }
}

/// Analytic curve of potentials `phi(t) = sum_i c_i(t) psi_i` with polynomial
/// coefficients; derivatives in `t` of any order are exact.
#[derive(Clone, Debug)]
pub struct SmoothCurve {
    basis: Vec<ScalarField>,
    coeffs: Vec<Poly>,
}

impl SmoothCurve {
    pub fn new(basis: Vec<ScalarField>, coeffs: Vec<Poly>) -> Result<Self> {
        if basis.is_empty() || basis.len() != coeffs.len() {
            return Err(Error::InvalidParameter(
                "curve needs matching basis fields and coefficient polynomials".into(),
            ));
        }
        let grid = basis[0].grid();
        if basis.iter().any(|b| b.grid() != grid) {
            return Err(Error::GridMismatch(
                "curve basis fields on differing grids".into(),
            ));
        }
        Ok(Self { basis, coeffs })
    }

    /// Straight segment `t -> t * target`.
    pub fn linear(target: ScalarField) -> Self {
        Self {
            basis: vec![target],
            coeffs: vec![Poly(vec![0.0, 1.0])],
        }
    }

    /// Straight segment between two potentials.
    pub fn segment(from: ScalarField, to: ScalarField) -> Self {
        Self {
            basis: vec![from, to],
            coeffs: vec![Poly(vec![1.0, -1.0]), Poly(vec![0.0, 1.0])],
        }
    }

    fn combine(&self, weights: &[f64]) -> ScalarField {
        let mut out = ScalarField::zeros(self.basis[0].grid());
        for (b, &w) in self.basis.iter().zip(weights) {
            if w != 0.0 {
                out = out.add_scaled(w, b);
            }
        }
        out
    }

    pub fn at(&self, t: f64) -> ScalarField {
        let w: Vec<f64> = self.coeffs.iter().map(|c| c.eval(t)).collect();
        self.combine(&w)
    }

    pub fn velocity(&self, t: f64) -> ScalarField {
        let w: Vec<f64> = self.coeffs.iter().map(|c| c.derivative().eval(t)).collect();
        self.combine(&w)
    }

    pub fn acceleration(&self, t: f64) -> ScalarField {
        let w: Vec<f64> = self
            .coeffs
            .iter()
            .map(|c| c.derivative().derivative().eval(t))
            .collect();
        self.combine(&w)
    }

    /// Restriction to `[0, t]`, reparametrized to unit length: `u -> phi(t u)`.
    pub fn restricted(&self, t: f64) -> SmoothCurve {
        SmoothCurve {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|p| compose_scale(p, t)).collect(),
        }
    }
}

/// Substitute `p(t * u)` as a polynomial in `u`.
fn compose_scale(p: &Poly, t: f64) -> Poly {
    Poly(
        p.0.iter()
            .enumerate()
            .map(|(i, &c)| c * t.powi(i as i32))
            .collect(),
    )
}

/// Sampled curve of potentials on a strictly increasing parameter grid with
/// `t_0 = 0`, `t_last = 1`. Velocities default to second-order differences.
#[derive(Clone, Debug)]
pub struct PotentialPath {
    taus: Vec<f64>,
    samples: Vec<ScalarField>,
    velocities: Vec<ScalarField>,
}

impl PotentialPath {
    pub fn from_samples(taus: Vec<f64>, samples: Vec<ScalarField>) -> Result<Self> {
        if taus.len() != samples.len() || taus.len() < 3 {
            return Err(Error::InvalidParameter(
                "path needs at least three samples with matching parameters".into(),
            ));
        }
        if taus[0].abs() > 1e-12 || (taus[taus.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(
                "path parameter must run from 0 to 1".into(),
            ));
        }
        if taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "path parameter must be strictly increasing".into(),
            ));
        }
        let velocities = fd_velocities(&taus, &samples);
        Ok(Self {
            taus,
            samples,
            velocities,
        })
    }

    /// Sample an analytic curve uniformly, with exact velocities.
    pub fn from_curve(curve: &SmoothCurve, n_samples: usize) -> Result<Self> {
        if n_samples < 3 {
            return Err(Error::InvalidParameter("need at least three samples".into()));
        }
        let taus: Vec<f64> = (0..n_samples)
            .map(|i| i as f64 / (n_samples - 1) as f64)
            .collect();
        let samples: Vec<ScalarField> = taus.iter().map(|&t| curve.at(t)).collect();
        let velocities: Vec<ScalarField> = taus.iter().map(|&t| curve.velocity(t)).collect();
        Ok(Self {
            taus,
            samples,
            velocities,
        })
    }

    pub fn replace_samples(&self, samples: Vec<ScalarField>) -> Result<Self> {
        Self::from_samples(self.taus.clone(), samples)
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn samples(&self) -> &[ScalarField] {
        &self.samples
    }

    pub fn velocities(&self) -> &[ScalarField] {
        &self.velocities
    }
}

/// Second-order finite differences on a possibly nonuniform parameter grid.
fn fd_velocities(taus: &[f64], samples: &[ScalarField]) -> Vec<ScalarField> {
    let n = taus.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = if i == 0 {
            one_sided(
                taus[0], taus[1], taus[2], &samples[0], &samples[1], &samples[2],
            )
        } else if i == n - 1 {
            one_sided(
                taus[n - 1],
                taus[n - 2],
                taus[n - 3],
                &samples[n - 1],
                &samples[n - 2],
                &samples[n - 3],
            )
        } else {
            centered(
                taus[i - 1],
                taus[i],
                taus[i + 1],
                &samples[i - 1],
                &samples[i],
                &samples[i + 1],
            )
        };
        out.push(v);
    }
    out
}

fn centered(
    t0: f64,
    t1: f64,
    t2: f64,
    f0: &ScalarField,
    f1: &ScalarField,
    f2: &ScalarField,
) -> ScalarField {
    let (h1, h2) = (t1 - t0, t2 - t1);
    let c0 = -h2 / (h1 * (h1 + h2));
    let c1 = (h2 - h1) / (h1 * h2);
    let c2 = h1 / (h2 * (h1 + h2));
    f0.scaled(c0).add_scaled(c1, f1).add_scaled(c2, f2)
}

/// Derivative at `t0` from values at `t0 < t1 < t2` (or mirrored).
fn one_sided(
    t0: f64,
    t1: f64,
    t2: f64,
    f0: &ScalarField,
    f1: &ScalarField,
    f2: &ScalarField,
) -> ScalarField {
    let (h1, h2) = (t1 - t0, t2 - t0);
    let c1 = h2 * h2 / (h1 * h2 * (h2 - h1));
    let c2 = -h1 * h1 / (h1 * h2 * (h2 - h1));
    let c0 = -(c1 + c2);
    f0.scaled(c0).add_scaled(c1, f1).add_scaled(c2, f2)
}

/// Energy values at one potential.
#[derive(Clone, Copy, Debug)]
pub struct EnergyReport {
    /// Twisted Calabi energy (always >= 0).
    pub calabi: f64,
    /// Twisted K-energy `M^s = s M + (1-s) J_chi`.
    pub kenergy_twisted: f64,
    /// Mabuchi K-energy part.
    pub kenergy_mabuchi: f64,
    /// J-functional part.
    pub j_chi: f64,
    /// Simpson refinement difference for the twisted K-energy.
    pub quadrature_error_estimate: f64,
}

/// Twisted Calabi energy of a metric state.
pub fn calabi_energy_of(setup: &TwistedSetup, ms: &MetricState) -> f64 {
    let rs = kahler::twisted_scalar(setup, ms);
    let rbar = setup.twisted_average();
    let wv = ms.det_g().values();
    let rv = rs.values();
    exec::sum_indexed(rv.len(), |i| {
        let d = rv[i] - rbar;
        d * d * wv[i]
    }) * setup.grid().cell_volume()
}

/// Twisted Calabi energy of a potential.
pub fn calabi_energy(setup: &TwistedSetup, phi: &ScalarField) -> Result<f64> {
    let ms = kahler::build_metric(setup, phi)?;
    Ok(calabi_energy_of(setup, &ms))
}

/// Differentials of the Mabuchi and J functionals at `phi`, contracted with
/// the velocity `v`: `dM = -int v R det_g dV`, `dJ = int v (tr chi - chibar) det_g dV`.
fn differentials(setup: &TwistedSetup, phi: &ScalarField, v: &ScalarField) -> Result<(f64, f64)> {
    let ms = kahler::build_metric(setup, phi)?;
    let tr = kahler::trace_chi(setup, &ms);
    let wv = ms.det_g().values();
    let rv = ms.scalar_curv().values();
    let tv = tr.values();
    let vv = v.values();
    let chibar = setup.chi_bar();
    let cell = setup.grid().cell_volume();
    let dm = -exec::sum_indexed(vv.len(), |i| vv[i] * rv[i] * wv[i]) * cell;
    let dj = exec::sum_indexed(vv.len(), |i| vv[i] * (tv[i] - chibar) * wv[i]) * cell;
    Ok((dm, dj))
}

/// Integrate the K-energy differentials along a smooth curve with composite
/// Simpson on `n_quad` panels plus one refinement for the error estimate.
/// Returns `(M, J, M_err, J_err)` as increments along the curve.
pub fn kenergy_increment(
    setup: &TwistedSetup,
    curve: &SmoothCurve,
    n_quad: usize,
) -> Result<(f64, f64, f64, f64)> {
    if n_quad == 0 {
        return Err(Error::InvalidParameter("n_quad must be positive".into()));
    }
    // The fine grid with 4*n_quad subintervals contains the coarse nodes.
    let n_fine = 4 * n_quad;
    let nodes: Vec<f64> = (0..=n_fine).map(|i| i as f64 / n_fine as f64).collect();
    let vals = exec::map_collect(nodes.len(), |i| {
        let t = nodes[i];
        differentials(setup, &curve.at(t), &curve.velocity(t))
    });
    let mut dm = Vec::with_capacity(vals.len());
    let mut dj = Vec::with_capacity(vals.len());
    for v in vals {
        let (m, j) = v?;
        dm.push(m);
        dj.push(j);
    }
    let m_fine = simpson(&dm, 1.0 / n_fine as f64);
    let j_fine = simpson(&dj, 1.0 / n_fine as f64);
    let dm_coarse: Vec<f64> = dm.iter().copied().step_by(2).collect();
    let dj_coarse: Vec<f64> = dj.iter().copied().step_by(2).collect();
    let m_coarse = simpson(&dm_coarse, 2.0 / n_fine as f64);
    let j_coarse = simpson(&dj_coarse, 2.0 / n_fine as f64);
    Ok((
        m_fine,
        j_fine,
        (m_fine - m_coarse).abs(),
        (j_fine - j_coarse).abs(),
    ))
}

fn simpson(vals: &[f64], h: f64) -> f64 {
    assert!(vals.len() % 2 == 1 && vals.len() >= 3);
    let mut acc = vals[0] + vals[vals.len() - 1];
    for (i, v) in vals.iter().enumerate().skip(1).take(vals.len() - 2) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// Twisted K-energy of a potential by integration along the straight segment
/// `t -> t phi`; positivity is re-checked at every quadrature node.
pub fn twisted_kenergy(
    setup: &TwistedSetup,
    phi: &ScalarField,
    n_quad: usize,
) -> Result<EnergyReport> {
    let curve = SmoothCurve::linear(phi.clone());
    twisted_kenergy_along(setup, &curve, n_quad)
}

/// Twisted K-energy through an arbitrary smooth path starting at 0.
pub fn twisted_kenergy_along(
    setup: &TwistedSetup,
    curve: &SmoothCurve,
    n_quad: usize,
) -> Result<EnergyReport> {
    let (m, j, m_err, j_err) = kenergy_increment(setup, curve, n_quad)?;
    let s = setup.s();
    let calabi = calabi_energy(setup, &curve.at(1.0))?;
    Ok(EnergyReport {
        calabi,
        kenergy_twisted: s * m + (1.0 - s) * j,
        kenergy_mabuchi: m,
        j_chi: j,
        quadrature_error_estimate: s * m_err + (1.0 - s) * j_err,
    })
}

/// Mabuchi energy and length of a sampled curve: `E = int ||phi'||^2_phi dtau`,
/// `l = int ||phi'||_phi dtau`, trapezoid in the parameter.
pub fn curve_energy_length(setup: &TwistedSetup, path: &PotentialPath) -> Result<(f64, f64)> {
    let speeds = exec::map_collect(path.len(), |i| {
        kahler::build_metric(setup, &path.samples[i])
            .map(|ms| ms.weighted_inner(&path.velocities[i], &path.velocities[i]))
    });
    let mut sq = Vec::with_capacity(path.len());
    for s in speeds {
        sq.push(s?.max(0.0));
    }
    let mut energy = 0.0;
    let mut length = 0.0;
    for i in 1..path.len() {
        let h = path.taus[i] - path.taus[i - 1];
        energy += 0.5 * h * (sq[i - 1] + sq[i]);
        length += 0.5 * h * (sq[i - 1].sqrt() + sq[i].sqrt());
    }
    Ok((energy, length))
}

/// First variation of the twisted Calabi energy in direction `delta`:
/// `-2 Re << delta, L^s(R^s) >>`, the factor 2 matching the prefactor-free
/// energy. The second component is the imaginary-residue diagnostic.
pub fn first_variation_formula(
    setup: &TwistedSetup,
    ms: MetricState,
    delta: &ScalarField,
) -> (f64, f64) {
    let ctx = OperatorContext::new(setup, ms);
    let rs = ctx.twisted_scalar().clone();
    let l_rs = operators::lichnerowicz_twisted(&ctx, &rs);
    let wv = ctx.metric().det_g().values();
    let dv = delta.values();
    let cell = setup.grid().cell_volume();
    let re = exec::sum_indexed(dv.len(), |i| dv[i] * l_rs.values()[i].re * wv[i]) * cell;
    let im = exec::sum_indexed(dv.len(), |i| dv[i] * l_rs.values()[i].im * wv[i]) * cell;
    (-2.0 * re, -2.0 * im)
}

/// Hessian of the twisted Calabi energy at a critical point:
/// `2 int Re < L^s d1, L^s d2 > det_g dV` with the Hermitian scalar product.
pub fn hessian_formula(
    setup: &TwistedSetup,
    ms: MetricState,
    d1: &ScalarField,
    d2: &ScalarField,
) -> f64 {
    let ctx = OperatorContext::new(setup, ms);
    let l1 = operators::lichnerowicz_twisted(&ctx, d1);
    let l2 = operators::lichnerowicz_twisted(&ctx, d2);
    let wv = ctx.metric().det_g().values();
    let cell = setup.grid().cell_volume();
    2.0 * exec::sum_indexed(l1.values().len(), |i| {
        (l1.values()[i] * l2.values()[i].conj()).re * wv[i]
    }) * cell
}

/// Pointwise `|d f|^2_phi = g^{j kbar} f_j f_kbar`, real and nonnegative.
pub fn grad_norm_sq(ctx: &OperatorContext, f: &ScalarField) -> ScalarField {
    let grid = ctx.setup().grid();
    let m = grid.m();
    let spec = crate::fft::Spectrum::forward(f);
    let grad = kahler::gradient_10(ctx.metric(), &spec);
    let f_bar: Vec<Vec<num_complex::Complex64>> = (0..m)
        .map(|b| spec.dzbar(b).inverse().values().to_vec())
        .collect();
    let mut out = ScalarField::zeros(grid);
    exec::for_chunks_mut(out.values_mut(), exec::CHUNK, |ci, chunk| {
        let base = ci * exec::CHUNK;
        for (j, v) in chunk.iter_mut().enumerate() {
            let i = base + j;
            let mut acc = 0.0;
            for a in 0..m {
                acc += (grad[a][i] * f_bar[a][i]).re;
            }
            *v = acc;
        }
    });
    out
}

/// Both sides of the second-variation identity plus their relative residual.
#[derive(Clone, Copy, Debug)]
pub struct SecondVariationReport {
    /// Richardson-extrapolated centered second difference of the K-energy.
    pub fd_value: f64,
    /// `int (-phi'' + |d phi'|^2)(R^s - Rbar^s) det_g + << phi', L^s phi' >>`.
    pub formula_value: f64,
    /// Geodesic-defect part of the formula (vanishes on geodesics).
    pub defect_term: f64,
    pub residual: f64,
}

/// Second-variation identity along an arbitrary smooth path at `t0`:
/// the finite-difference second derivative of the twisted K-energy against
/// `int (-phi'' + |d phi'|^2_phi)(R^s - Rbar^s) det_g + << phi', L^s phi' >>`.
/// The defect term carries the deviation from the geodesic equation.
pub fn second_variation_check(
    setup: &TwistedSetup,
    curve: &SmoothCurve,
    t0: f64,
    fd_step: f64,
    n_quad: usize,
) -> Result<SecondVariationReport> {
    if fd_step <= 0.0 {
        return Err(Error::Stencil("fd step must be positive".into()));
    }
    if t0 - fd_step < 0.0 || t0 + fd_step > 1.0 {
        return Err(Error::Stencil(format!(
            "stencil [{:.3}, {:.3}] leaves the parameter range",
            t0 - fd_step,
            t0 + fd_step
        )));
    }

    // Formula side at t0.
    let ms = kahler::build_metric(setup, &curve.at(t0))?;
    let ctx = OperatorContext::new(setup, ms);
    let v = curve.velocity(t0);
    let a = curve.acceleration(t0);
    let rbar = setup.twisted_average();
    let rs = ctx.twisted_scalar();
    let grad_sq = grad_norm_sq(&ctx, &v);
    let wv = ctx.metric().det_g().values();
    let cell = setup.grid().cell_volume();
    let defect = exec::sum_indexed(wv.len(), |i| {
        (-a.values()[i] + grad_sq.values()[i]) * (rs.values()[i] - rbar) * wv[i]
    }) * cell;
    let form = operators::quadratic_form(&ctx, &v, &v);
    let formula = defect + form;

    // FD side: centered second difference with one Richardson step.
    let kenergy_at = |t: f64| -> Result<f64> {
        let (m, j, _, _) = kenergy_increment(setup, &curve.restricted(t), n_quad)?;
        Ok(setup.s() * m + (1.0 - setup.s()) * j)
    };
    let fd = |h: f64| -> Result<f64> {
        let p = kenergy_at(t0 + h)?;
        let c = kenergy_at(t0)?;
        let m = kenergy_at(t0 - h)?;
        Ok((p - 2.0 * c + m) / (h * h))
    };
    let d_h = fd(fd_step)?;
    let d_h2 = fd(fd_step / 2.0)?;
    let fd_val = (4.0 * d_h2 - d_h) / 3.0;

    let scale = fd_val.abs().max(formula.abs()).max(1e-12);
    Ok(SecondVariationReport {
        fd_value: fd_val,
        formula_value: formula,
        defect_term: defect,
        residual: (fd_val - formula).abs() / scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{integrate, PeriodicGrid};
    use std::f64::consts::PI;

    fn grid1() -> PeriodicGrid {
        PeriodicGrid::new(1, 64).unwrap()
    }

    #[test]
    fn calabi_zero_at_flat_twist() {
        let grid = grid1();
        let setup = TwistedSetup::flat_twist(grid, 0.5, 2.0).unwrap();
        let c = calabi_energy(&setup, &ScalarField::zeros(grid)).unwrap();
        assert!(c.abs() < 1e-20);
        let phi = ScalarField::from_fn(grid, |x| 0.01 * (2.0 * PI * x[0]).cos());
        assert!(calabi_energy(&setup, &phi).unwrap() > 0.0);
    }

    // Oracle: for s = 1, m = 1 the energy is int R^2 g dx with the symbolic
    // R of g = 1 - a pi^2 cos(2 pi x), integrated by dense trapezoid.
    #[test]
    fn calabi_matches_symbolic_quadrature() {
        let grid = grid1();
        let setup = TwistedSetup::flat_twist(grid, 1.0, 1.0).unwrap();
        let a = 0.02;
        let phi = ScalarField::from_fn(grid, |x| a * (2.0 * PI * x[0]).cos());
        let val = calabi_energy(&setup, &phi).unwrap();

        let n_dense = 1 << 14;
        let mut acc = 0.0;
        for i in 0..n_dense {
            let x = i as f64 / n_dense as f64;
            let g = 1.0 - a * PI * PI * (2.0 * PI * x).cos();
            let gp = 2.0 * a * PI.powi(3) * (2.0 * PI * x).sin();
            let gpp = 4.0 * a * PI.powi(4) * (2.0 * PI * x).cos();
            let r = -(0.25 / g) * (gpp * g - gp * gp) / (g * g);
            acc += r * r * g;
        }
        let oracle = acc / n_dense as f64;
        assert!(
            (val - oracle).abs() < 1e-6 * oracle.max(1e-12),
            "calabi {val:.9e} vs oracle {oracle:.9e}"
        );
    }

    #[test]
    fn kenergy_zero_at_origin_and_constants() {
        let grid = grid1();
        let psi = ScalarField::from_fn(grid, |x| 0.004 * (2.0 * PI * x[1]).cos());
        let setup = TwistedSetup::new(grid, 0.4, 1.0, psi).unwrap();
        let rep = twisted_kenergy(&setup, &ScalarField::zeros(grid), 8).unwrap();
        assert!(rep.kenergy_twisted.abs() < 1e-14);
        assert!(rep.kenergy_mabuchi.abs() < 1e-14);
        assert!(rep.j_chi.abs() < 1e-14);

        let rep_c = twisted_kenergy(&setup, &ScalarField::constant(grid, 0.3), 8).unwrap();
        assert!(rep_c.kenergy_twisted.abs() < 1e-10);
        assert!(rep_c.kenergy_mabuchi.abs() < 1e-10);
        assert!(rep_c.j_chi.abs() < 1e-10);
    }

    // Closedness of the variational 1-form: linear path vs a bent path
    // through phi/2 + bump must agree.
    #[test]
    fn kenergy_path_independence() {
        let grid = grid1();
        let setup = TwistedSetup::flat_twist(grid, 0.5, 1.0).unwrap();
        let phi = ScalarField::from_fn(grid, |x| {
            0.02 * (2.0 * PI * x[0]).cos() + 0.01 * (2.0 * PI * x[1]).sin()
        });
        let bump = ScalarField::from_fn(grid, |x| 0.008 * (2.0 * PI * (x[0] + x[1])).cos());
        let direct = twisted_kenergy(&setup, &phi, 16).unwrap().kenergy_twisted;

        let mid = phi.scaled(0.5).add_scaled(1.0, &bump);
        let leg1 = SmoothCurve::linear(mid.clone());
        let leg2 = SmoothCurve::segment(mid, phi.clone());
        let (m1, j1, _, _) = kenergy_increment(&setup, &leg1, 16).unwrap();
        let (m2, j2, _, _) = kenergy_increment(&setup, &leg2, 16).unwrap();
        let bent = setup.s() * (m1 + m2) + (1.0 - setup.s()) * (j1 + j2);
        assert!(
            (direct - bent).abs() < 1e-8,
            "direct {direct:.12e} vs bent {bent:.12e}"
        );
    }

    #[test]
    fn functionals_gauge_invariance() {
        let grid = grid1();
        let setup = TwistedSetup::flat_twist(grid, 0.5, 1.0).unwrap();
        let phi = ScalarField::from_fn(grid, |x| 0.02 * (2.0 * PI * x[0]).cos());
        let base = twisted_kenergy(&setup, &phi, 16).unwrap();
        let shifted = twisted_kenergy(&setup, &phi.shifted(0.25), 16).unwrap();
        assert!((base.kenergy_twisted - shifted.kenergy_twisted).abs() < 1e-10);
        assert!((base.j_chi - shifted.j_chi).abs() < 1e-10);
        assert!((base.calabi - shifted.calabi).abs() < 1e-10);
    }

    #[test]
    fn constant_path_has_zero_energy_and_length() {
        let grid = grid1();
        let setup = TwistedSetup::flat_twist(grid, 0.5, 1.0).unwrap();
        let phi0 = ScalarField::from_fn(grid, |x| 0.01 * (2.0 * PI * x[0]).cos());
        let path = PotentialPath::from_samples(
            vec![0.0, 0.5, 1.0],
            vec![phi0.clone(), phi0.clone(), phi0],
        )
        .unwrap();
        let (e, l) = curve_energy_length(&setup, &path).unwrap();
        assert!(e.abs() < 1e-24);
        assert!(l.abs() < 1e-12);
    }

    // Oracle: leading-order expansion E = int psi^2 dV + O(a^3) for the
    // linear family tau -> tau psi; the deviation must scale cubically.
    #[test]
    fn linear_path_energy_expansion() {
        let grid = grid1();
        let setup = TwistedSetup::flat_twist(grid, 0.5, 1.0).unwrap();
        // Same-axis interacting modes keep the cubic correction nonzero.
        let shape = |x: &[f64]| (2.0 * PI * x[0]).cos() + 0.7 * (4.0 * PI * x[0]).cos();
        let one = ScalarField::constant(grid, 1.0);

        let dev = |a: f64| -> f64 {
            let psi = ScalarField::from_fn(grid, |x| a * shape(x));
            let curve = SmoothCurve::linear(psi.clone());
            let path = PotentialPath::from_curve(&curve, 17).unwrap();
            let (e, _) = curve_energy_length(&setup, &path).unwrap();
            let psi_sq = ScalarField::from_fn(grid, |x| (a * shape(x)).powi(2));
            (e - integrate(&psi_sq, &one)).abs()
        };
        let d1 = dev(2e-3);
        let d2 = dev(1e-3);
        assert!(d1 < 1e-6, "deviation {d1:.3e} too large for a=2e-3");
        let ratio = d1 / d2.max(1e-300);
        assert!((6.0..11.0).contains(&ratio), "scaling ratio {ratio:.2}");
    }

    #[test]
    fn reparametrization_preserves_length_not_energy() {
        let grid = grid1();
        let setup = TwistedSetup::flat_twist(grid, 0.5, 1.0).unwrap();
        let psi = ScalarField::from_fn(grid, |x| 5e-3 * (2.0 * PI * x[0]).cos());
        let linear = SmoothCurve::linear(psi.clone());
        let quad = SmoothCurve::new(vec![psi], vec![Poly(vec![0.0, 0.0, 1.0])]).unwrap();
        let p_lin = PotentialPath::from_curve(&linear, 33).unwrap();
        let p_quad = PotentialPath::from_curve(&quad, 33).unwrap();
        let (e1, l1) = curve_energy_length(&setup, &p_lin).unwrap();
        let (e2, l2) = curve_energy_length(&setup, &p_quad).unwrap();
        assert!((l1 - l2).abs() < 1e-3 * l1, "lengths {l1:.6e} vs {l2:.6e}");
        // Energy of the tau^2 parametrization is 4/3 of the linear one.
        assert!((e2 / e1 - 4.0 / 3.0).abs() < 1e-2, "energy ratio {}", e2 / e1);
    }

    #[test]
    fn second_variation_trivial_and_stencil_errors() {
        let grid = grid1();
        let setup = TwistedSetup::flat_twist(grid, 0.5, 1.0).unwrap();
        let psi = ScalarField::from_fn(grid, |x| 0.01 * (2.0 * PI * x[0]).cos());
        // Coefficient (t - 1/2)^2 has vanishing velocity at t0 = 1/2.
        let curve =
            SmoothCurve::new(vec![psi.clone()], vec![Poly(vec![0.25, -1.0, 1.0])]).unwrap();
        let rep = second_variation_check(&setup, &curve, 0.5, 1e-2, 8).unwrap();
        // Velocity vanishes at t0, so both sides are tiny: the quadratic form
        // drops out and only the acceleration couples to R^s - Rbar^s.
        assert!(rep.fd_value.abs() < 1e-4, "fd {:.3e}", rep.fd_value);
        assert!(rep.formula_value.abs() < 1e-4, "formula {:.3e}", rep.formula_value);
        assert!((rep.fd_value - rep.formula_value).abs() < 1e-6);

        let lin = SmoothCurve::linear(psi);
        assert!(matches!(
            second_variation_check(&setup, &lin, 0.0, 1e-2, 8),
            Err(Error::Stencil(_))
        ));
    }

    #[test]
    fn second_variation_identity_on_smooth_path() {
        let grid = grid1();
        let setup = TwistedSetup::flat_twist(grid, 0.5, 1.0).unwrap();
        let psi1 = ScalarField::from_fn(grid, |x| 8e-3 * (2.0 * PI * x[0]).cos());
        let psi2 = ScalarField::from_fn(grid, |x| 5e-3 * (2.0 * PI * (x[0] + x[1])).sin());
        let curve = SmoothCurve::new(
            vec![psi1, psi2],
            vec![Poly(vec![0.0, 1.0]), Poly(vec![0.0, 0.3, 0.9])],
        )
        .unwrap();
        let rep = second_variation_check(&setup, &curve, 0.5, 1e-2, 16).unwrap();
        assert!(rep.residual <= 1e-4, "second-variation residual {:.3e}", rep.residual);
    }
}
