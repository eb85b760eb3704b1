//! The twisted Lichnerowicz operator and its relatives as field-to-field maps.
//!
//! Primary route: `L^s f = s Lap^2 f + <Ric^s, i ddbar f> + <dR^s, df>` with
//! every quantity taken at the current metric. The alternative route
//! `L^s f = s D*D f - (1-s) i dbar*(grad^{1,0} f  _| chi)` is implemented
//! independently (the contraction term through its divergence form, the
//! classical operator through its index formula) and serves as a cross-check;
//! the two must agree pointwise to spectral accuracy.
//!
//! Output of `L^s` on a real function is complex at a general metric; only at
//! a twisted cscK state is the operator real. Quadratic-form identities are
//! therefore stated for real parts, with the imaginary residue available as
//! a diagnostic.

use num_complex::Complex64;

use crate::exec;
use crate::fft::Spectrum;
use crate::grid::{dealias_complex, dealias_field, ComplexField, ScalarField};
use crate::herm::{self, HermitianField};
use crate::kahler::{self, MetricState, TwistedSetup};

/// Cached per-metric data for operator applications.
pub struct OperatorContext<'a> {
    setup: &'a TwistedSetup,
    ms: MetricState,
    tr_chi: ScalarField,
    r_s: ScalarField,
    /// `d/dz_j` of the twisted scalar curvature.
    dr_s: Vec<ComplexField>,
    /// `d/dz_j` of the plain scalar curvature (classical operator).
    dr: Vec<ComplexField>,
    ric_s: HermitianField,
}

impl<'a> OperatorContext<'a> {
    pub fn new(setup: &'a TwistedSetup, ms: MetricState) -> Self {
        let tr_chi = kahler::trace_chi(setup, &ms);
        let r_s = kahler::twisted_scalar(setup, &ms);
        let rs_spec = Spectrum::forward(&r_s);
        let r_spec = Spectrum::forward(ms.scalar_curv());
        let m = setup.grid().m();
        let dr_s = (0..m).map(|j| rs_spec.dz(j).inverse()).collect();
        let dr = (0..m).map(|j| r_spec.dz(j).inverse()).collect();
        let ric_s = ms
            .ricci()
            .linear_comb(setup.s(), setup.chi(), -(1.0 - setup.s()));
        Self {
            setup,
            ms,
            tr_chi,
            r_s,
            dr_s,
            dr,
            ric_s,
        }
    }

    pub fn setup(&self) -> &TwistedSetup {
        self.setup
    }

    pub fn metric(&self) -> &MetricState {
        &self.ms
    }

    pub fn trace_chi(&self) -> &ScalarField {
        &self.tr_chi
    }

    pub fn twisted_scalar(&self) -> &ScalarField {
        &self.r_s
    }

    pub fn ric_s(&self) -> &HermitianField {
        &self.ric_s
    }
}

fn complex_binary<F>(a: &[Complex64], b: &[Complex64], f: F) -> Vec<Complex64>
where
    F: Fn(Complex64, Complex64) -> Complex64 + Sync,
{
    let mut out = vec![Complex64::ZERO; a.len()];
    exec::for_chunks_mut(&mut out, exec::CHUNK, |ci, chunk| {
        let base = ci * exec::CHUNK;
        for (j, v) in chunk.iter_mut().enumerate() {
            *v = f(a[base + j], b[base + j]);
        }
    });
    out
}

/// Metric Laplacian `Lap f = g^{j kbar} f_{j kbar}`, real output.
pub fn laplacian(ctx: &OperatorContext, f: &ScalarField) -> ScalarField {
    let hess = HermitianField::complex_hessian(&Spectrum::forward(f));
    dealias_field(&herm::trace_field(ctx.ms.g_inv(), &hess))
}

/// `<du, df> = g^{j kbar} u_j f_kbar` for real `u`, `f`; complex in general.
fn pairing_grad(ctx: &OperatorContext, du: &[ComplexField], f_spec: &Spectrum) -> ComplexField {
    let grid = ctx.setup.grid();
    let m = grid.m();
    let f_bar: Vec<ComplexField> = (0..m).map(|k| f_spec.dzbar(k).inverse()).collect();
    let mut out = ComplexField::zeros(grid);
    let g_inv = ctx.ms.g_inv();
    exec::for_chunks_mut(out.values_mut(), exec::CHUNK, |ci, chunk| {
        let base = ci * exec::CHUNK;
        for (jj, v) in chunk.iter_mut().enumerate() {
            let i = base + jj;
            let raised = herm::raised(&g_inv.at(i));
            let mut acc = Complex64::ZERO;
            for (j, du_j) in du.iter().enumerate() {
                for (k, fb_k) in f_bar.iter().enumerate() {
                    acc += raised[j][k] * du_j.values()[i] * fb_k.values()[i];
                }
            }
            *v = acc;
        }
    });
    dealias_complex(&out)
}

fn add_fields(parts: &[(f64, &[Complex64])], len: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::ZERO; len];
    exec::for_chunks_mut(&mut out, exec::CHUNK, |ci, chunk| {
        let base = ci * exec::CHUNK;
        for (j, v) in chunk.iter_mut().enumerate() {
            let mut acc = Complex64::ZERO;
            for (w, p) in parts {
                acc += *w * p[base + j];
            }
            *v = acc;
        }
    });
    out
}

/// Classical Lichnerowicz operator by its index formula:
/// `L f = Lap^2 f + Ric^{a bbar} f_{a bbar} + g^{a bbar} R_a f_bbar`.
pub fn lichnerowicz_classical(ctx: &OperatorContext, f: &ScalarField) -> ComplexField {
    let grid = ctx.setup.grid();
    let f_spec = Spectrum::forward(f);
    let lap = laplacian(ctx, f);
    let bilap = laplacian(ctx, &lap);
    let hess_f = HermitianField::complex_hessian(&f_spec);
    let ric_term = dealias_field(&kahler::inner_11(ctx.ms.g_inv(), ctx.ms.ricci(), &hess_f));
    let grad_term = pairing_grad(ctx, &ctx.dr, &f_spec);

    let vals = add_fields(
        &[
            (1.0, &bilap.values().iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>()),
            (1.0, &ric_term.values().iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>()),
            (1.0, grad_term.values()),
        ],
        grid.len(),
    );
    ComplexField::from_values(grid, vals)
}

/// Twisted Lichnerowicz operator, primary route:
/// `L^s f = s Lap^2 f + <Ric^s, i ddbar f> + <dR^s, df>`.
pub fn lichnerowicz_twisted(ctx: &OperatorContext, f: &ScalarField) -> ComplexField {
    let grid = ctx.setup.grid();
    let s = ctx.setup.s();
    let f_spec = Spectrum::forward(f);
    let lap = laplacian(ctx, f);
    let bilap = laplacian(ctx, &lap);
    let hess_f = HermitianField::complex_hessian(&f_spec);
    let ric_term = dealias_field(&kahler::inner_11(ctx.ms.g_inv(), &ctx.ric_s, &hess_f));
    let grad_term = pairing_grad(ctx, &ctx.dr_s, &f_spec);

    let mut out = ComplexField::zeros(grid);
    let bl = bilap.values();
    let rt = ric_term.values();
    let gt = grad_term.values();
    exec::for_chunks_mut(out.values_mut(), exec::CHUNK, |ci, chunk| {
        let base = ci * exec::CHUNK;
        for (j, v) in chunk.iter_mut().enumerate() {
            let i = base + j;
            *v = Complex64::new(s * bl[i] + rt[i], 0.0) + gt[i];
        }
    });
    out
}

/// Divergence form of the twist contraction:
/// `i dbar*(grad^{1,0} f _| chi) = g^{a bbar} d_a ( g^{c ebar} f_ebar chi_{c bbar} )`.
/// All quantities of the current metric; independent of the inner-product route.
pub fn twist_term_contraction(ctx: &OperatorContext, f: &ScalarField) -> ComplexField {
    let grid = ctx.setup.grid();
    let m = grid.m();
    let len = grid.len();
    let f_spec = Spectrum::forward(f);
    let grad = kahler::gradient_10(&ctx.ms, &f_spec);
    let chi = ctx.setup.chi();

    // T_bbar = sum_c grad^c chi_{c bbar}, one complex field per bbar index.
    let mut t_fields: Vec<ComplexField> = Vec::with_capacity(m);
    for b in 0..m {
        let mut t = ComplexField::zeros(grid);
        exec::for_chunks_mut(t.values_mut(), exec::CHUNK, |ci, chunk| {
            let base = ci * exec::CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                let i = base + j;
                let chi_i = chi.at(i);
                let mut acc = Complex64::ZERO;
                for (c, grad_c) in grad.iter().enumerate() {
                    acc += grad_c[i] * chi_i[c][b];
                }
                *v = acc;
            }
        });
        t_fields.push(dealias_complex(&t));
    }

    // d_a T_bbar, then contract with g^{a bbar}.
    let mut dt: Vec<Vec<ComplexField>> = Vec::with_capacity(m);
    for t in &t_fields {
        let spec = Spectrum::forward_complex(t);
        dt.push((0..m).map(|a| spec.dz(a).inverse()).collect());
    }
    let g_inv = ctx.ms.g_inv();
    let mut out = ComplexField::zeros(grid);
    exec::for_chunks_mut(out.values_mut(), exec::CHUNK, |ci, chunk| {
        let base = ci * exec::CHUNK;
        for (j, v) in chunk.iter_mut().enumerate() {
            let i = base + j;
            let raised = herm::raised(&g_inv.at(i));
            let mut acc = Complex64::ZERO;
            for a in 0..m {
                for b in 0..m {
                    acc += raised[a][b] * dt[b][a].values()[i];
                }
            }
            *v = acc;
        }
    });
    let _ = len;
    dealias_complex(&out)
}

/// Cross-check route for the twisted operator:
/// `s * (classical) - (1-s) * (divergence contraction)`.
pub fn lichnerowicz_twisted_alt(ctx: &OperatorContext, f: &ScalarField) -> ComplexField {
    let s = ctx.setup.s();
    let classical = lichnerowicz_classical(ctx, f);
    let twist = twist_term_contraction(ctx, f);
    let vals = complex_binary(classical.values(), twist.values(), |c, t| {
        s * c - (1.0 - s) * t
    });
    ComplexField::from_values(ctx.setup.grid(), vals)
}

/// `Re int f L^s(g) det_g dV`; symmetric in `(f, g)` to quadrature accuracy.
pub fn quadratic_form(ctx: &OperatorContext, f: &ScalarField, g: &ScalarField) -> f64 {
    let lg = lichnerowicz_twisted(ctx, g);
    let fv = f.values();
    let lv = lg.values();
    let wv = ctx.ms.det_g().values();
    exec::sum_indexed(fv.len(), |i| fv[i] * lv[i].re * wv[i]) * f.grid().cell_volume()
}

/// Imaginary residue of the pairing `int f L^s(g) det_g dV`; a diagnostic,
/// vanishing in the continuum.
pub fn quadratic_form_imag(ctx: &OperatorContext, f: &ScalarField, g: &ScalarField) -> f64 {
    let lg = lichnerowicz_twisted(ctx, g);
    let fv = f.values();
    let lv = lg.values();
    let wv = ctx.ms.det_g().values();
    exec::sum_indexed(fv.len(), |i| fv[i] * lv[i].im * wv[i]) * f.grid().cell_volume()
}

/// Tensor `D f = dbar grad^{1,0} f`, components `(D f)^a_bbar = d_bbar V^a`.
pub fn dbar_grad(ctx: &OperatorContext, f: &ScalarField) -> Vec<Vec<Complex64>> {
    let grid = ctx.setup.grid();
    let m = grid.m();
    let f_spec = Spectrum::forward(f);
    let grad = kahler::gradient_10(&ctx.ms, &f_spec);
    let mut out = Vec::with_capacity(m * m);
    for grad_a in &grad {
        let field = dealias_complex(&ComplexField::from_values(grid, grad_a.clone()));
        let spec = Spectrum::forward_complex(&field);
        for b in 0..m {
            out.push(spec.dzbar(b).inverse().values().to_vec());
        }
    }
    // Layout: out[a * m + b] = (D f)^a_bbar.
    out
}

/// Decomposition of the quadratic form:
/// `s ||D f||^2 + (1-s) ||grad^{1,0} f||^2_chi`, both integrals against
/// `det_g dV`. Independent oracle route for `quadratic_form(f, f)`.
pub fn quadratic_form_decomposed(ctx: &OperatorContext, f: &ScalarField) -> f64 {
    let s = ctx.setup.s();
    dirichlet_dbar_grad(ctx, f, f) * s + chi_gradient_energy(ctx, f, f) * (1.0 - s)
}

/// `Re <<D f, D g>>`: pointwise `g_{a cbar} g^{d bbar} (Df)^a_bbar conj((Dg)^c_dbar)`
/// integrated against the volume form.
pub fn dirichlet_dbar_grad(ctx: &OperatorContext, f: &ScalarField, g: &ScalarField) -> f64 {
    let grid = ctx.setup.grid();
    let m = grid.m();
    let df = dbar_grad(ctx, f);
    let dg = if std::ptr::eq(f, g) {
        None
    } else {
        Some(dbar_grad(ctx, g))
    };
    let dg_ref = dg.as_ref().unwrap_or(&df);
    let gmat = ctx.ms.g();
    let ginv = ctx.ms.g_inv();
    let wv = ctx.ms.det_g().values();
    let total = exec::sum_indexed(grid.len(), |i| {
        let low = gmat.at(i);
        let raised = herm::raised(&ginv.at(i));
        let mut acc = 0.0;
        for a in 0..m {
            for c in 0..m {
                for d in 0..m {
                    for b in 0..m {
                        let term = low[a][c]
                            * raised[d][b]
                            * df[a * m + b][i]
                            * dg_ref[c * m + d][i].conj();
                        acc += term.re;
                    }
                }
            }
        }
        acc * wv[i]
    });
    total * grid.cell_volume()
}

/// `Re <<grad f, grad g>>_chi = Re int chi_{a bbar} V_f^a conj(V_g^b) det_g dV`.
pub fn chi_gradient_energy(ctx: &OperatorContext, f: &ScalarField, g: &ScalarField) -> f64 {
    let grid = ctx.setup.grid();
    let m = grid.m();
    let vf = kahler::gradient_10(&ctx.ms, &Spectrum::forward(f));
    let vg = if std::ptr::eq(f, g) {
        None
    } else {
        Some(kahler::gradient_10(&ctx.ms, &Spectrum::forward(g)))
    };
    let vg_ref = vg.as_ref().unwrap_or(&vf);
    let chi = ctx.setup.chi();
    let wv = ctx.ms.det_g().values();
    let total = exec::sum_indexed(grid.len(), |i| {
        let chi_i = chi.at(i);
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                acc += (chi_i[a][b] * vf[a][i] * vg_ref[b][i].conj()).re;
            }
        }
        acc * wv[i]
    });
    total * grid.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use std::f64::consts::PI;

    fn flat_ctx(s: f64) -> (TwistedSetup, PeriodicGrid) {
        let grid = PeriodicGrid::new(1, 64).unwrap();
        (TwistedSetup::flat_twist(grid, s, 1.0).unwrap(), grid)
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let (setup, grid) = flat_ctx(0.5);
        let ms = kahler::build_metric(&setup, &ScalarField::zeros(grid)).unwrap();
        let ctx = OperatorContext::new(&setup, ms);
        let f = ScalarField::constant(grid, 2.5);
        assert!(laplacian(&ctx, &f).max_abs() < 1e-13);
    }

    // Oracle: Fourier multiplier of the flat metric Laplacian is -pi^2 |k|^2.
    #[test]
    fn flat_laplacian_multiplier() {
        let (setup, grid) = flat_ctx(0.5);
        let ms = kahler::build_metric(&setup, &ScalarField::zeros(grid)).unwrap();
        let ctx = OperatorContext::new(&setup, ms);
        let f = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).cos());
        let lap = laplacian(&ctx, &f);
        for (i, v) in lap.values().iter().enumerate() {
            let x = grid.coords(i)[0];
            assert!((v + PI * PI * (2.0 * PI * x).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn flat_classical_lichnerowicz_is_bilaplacian() {
        let (setup, grid) = flat_ctx(1.0);
        let ms = kahler::build_metric(&setup, &ScalarField::zeros(grid)).unwrap();
        let ctx = OperatorContext::new(&setup, ms);
        let f = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).cos());
        let lf = lichnerowicz_classical(&ctx, &f);
        for (i, v) in lf.values().iter().enumerate() {
            let x = grid.coords(i)[0];
            let expect = PI.powi(4) * (2.0 * PI * x).cos();
            assert!((v.re - expect).abs() < 1e-8);
            assert!(v.im.abs() < 1e-10);
        }
        let c = ScalarField::constant(grid, 1.3);
        assert!(lichnerowicz_classical(&ctx, &c).max_norm() < 1e-12);
    }

    // Oracle: flat chi=omega eigenfunction cos(2 pi x) with eigenvalue
    // s pi^4 + (1-s) pi^2.
    #[test]
    fn flat_twisted_lichnerowicz_eigenvalue() {
        for s in [0.1, 0.5, 0.9] {
            let (setup, grid) = flat_ctx(s);
            let ms = kahler::build_metric(&setup, &ScalarField::zeros(grid)).unwrap();
            let ctx = OperatorContext::new(&setup, ms);
            let f = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).cos());
            let lf = lichnerowicz_twisted(&ctx, &f);
            let lam = s * PI.powi(4) + (1.0 - s) * PI * PI;
            for (i, v) in lf.values().iter().enumerate() {
                let x = grid.coords(i)[0];
                assert!((v.re - lam * (2.0 * PI * x).cos()).abs() < 1e-8);
                assert!(v.im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn twisted_kernel_contains_constants() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let psi = ScalarField::from_fn(grid, |x| 0.01 * (2.0 * PI * x[1]).cos());
        let setup = TwistedSetup::new(grid, 0.5, 1.0, psi).unwrap();
        let phi = ScalarField::from_fn(grid, |x| 0.02 * (2.0 * PI * x[0]).sin());
        let ms = kahler::build_metric(&setup, &phi).unwrap();
        let ctx = OperatorContext::new(&setup, ms);
        let c = ScalarField::constant(grid, -0.7);
        assert!(lichnerowicz_twisted(&ctx, &c).max_norm() < 1e-10);
    }

    #[test]
    fn real_at_twisted_csck_state() {
        let (setup, grid) = flat_ctx(0.5);
        let ms = kahler::build_metric(&setup, &ScalarField::zeros(grid)).unwrap();
        let ctx = OperatorContext::new(&setup, ms);
        let f = ScalarField::from_fn(grid, |x| {
            (2.0 * PI * x[0]).cos() + 0.4 * (4.0 * PI * x[1]).sin()
        });
        let lf = lichnerowicz_twisted(&ctx, &f);
        assert!(lf.max_imag_abs() < 1e-10 * f.max_abs());
    }

    // Oracle: at the flat metric with chi = c omega the twist contraction
    // reduces to c * Laplacian.
    #[test]
    fn twist_contraction_flat_reduction() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let c = 1.7;
        let setup = TwistedSetup::flat_twist(grid, 0.5, c).unwrap();
        let ms = kahler::build_metric(&setup, &ScalarField::zeros(grid)).unwrap();
        let ctx = OperatorContext::new(&setup, ms);
        let f = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).sin());
        let lhs = twist_term_contraction(&ctx, &f);
        let lap = laplacian(&ctx, &f);
        for (a, b) in lhs.values().iter().zip(lap.values()) {
            assert!((a.re - c * b).abs() < 1e-9);
            assert!(a.im.abs() < 1e-10);
        }
        let k = ScalarField::constant(grid, 3.0);
        assert!(twist_term_contraction(&ctx, &k).max_norm() < 1e-12);
    }

    // Lemma-style tensor identity: the divergence form equals
    // <i ddbar f, chi> + <d tr chi, d f> at an arbitrary valid metric.
    #[test]
    fn tensor_identity_general_metric() {
        let grid = PeriodicGrid::new(1, 64).unwrap();
        let psi = ScalarField::from_fn(grid, |x| {
            0.003 * (2.0 * PI * x[0]).cos() + 0.002 * (2.0 * PI * (x[0] + x[1])).sin()
        });
        let setup = TwistedSetup::new(grid, 0.5, 1.0, psi).unwrap();
        let phi = ScalarField::from_fn(grid, |x| {
            0.004 * (2.0 * PI * x[1]).cos() + 0.003 * (4.0 * PI * x[0]).sin()
        });
        let ms = kahler::build_metric(&setup, &phi).unwrap();
        let ctx = OperatorContext::new(&setup, ms);
        let f = ScalarField::from_fn(grid, |x| {
            (2.0 * PI * x[0]).sin() + 0.6 * (2.0 * PI * (x[0] - x[1])).cos()
        });

        let lhs = twist_term_contraction(&ctx, &f);

        let f_spec = Spectrum::forward(&f);
        let hess_f = HermitianField::complex_hessian(&f_spec);
        let ip = dealias_field(&kahler::inner_11(ctx.metric().g_inv(), &hess_f, setup.chi()));
        let tr_spec = Spectrum::forward(ctx.trace_chi());
        let dtr: Vec<ComplexField> = (0..grid.m()).map(|j| tr_spec.dz(j).inverse()).collect();
        let grad_pair = pairing_grad(&ctx, &dtr, &f_spec);

        let mut max_err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..grid.len() {
            let rhs = Complex64::new(ip.values()[i], 0.0) + grad_pair.values()[i];
            max_err = max_err.max((lhs.values()[i] - rhs).norm());
            scale = scale.max(lhs.values()[i].norm());
        }
        assert!(
            max_err < 1e-8 * scale.max(1.0),
            "identity residual {max_err:.3e} at scale {scale:.3e}"
        );
    }

    // Affinity in s: L^s = s L^1 + (1-s) L^0 with L^0 from the divergence route.
    #[test]
    fn affine_in_s() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let psi = ScalarField::from_fn(grid, |x| 0.006 * (2.0 * PI * x[0]).cos());
        let phi = ScalarField::from_fn(grid, |x| 0.01 * (2.0 * PI * x[1]).sin());
        let f = ScalarField::from_fn(grid, |x| (2.0 * PI * (x[0] + x[1])).cos());

        let s = 0.37;
        let setup_s = TwistedSetup::new(grid, s, 1.0, psi.clone()).unwrap();
        let setup_1 = TwistedSetup::new(grid, 1.0, 1.0, psi.clone()).unwrap();
        let ms_s = kahler::build_metric(&setup_s, &phi).unwrap();
        let ms_1 = kahler::build_metric(&setup_1, &phi).unwrap();
        let ctx_s = OperatorContext::new(&setup_s, ms_s);
        let ctx_1 = OperatorContext::new(&setup_1, ms_1);

        let full = lichnerowicz_twisted(&ctx_s, &f);
        let l1 = lichnerowicz_classical(&ctx_1, &f);
        let l0 = twist_term_contraction(&ctx_1, &f); // metric-only object, chi fixed
        let mut max_err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..grid.len() {
            let combo = s * l1.values()[i] - (1.0 - s) * l0.values()[i];
            max_err = max_err.max((full.values()[i] - combo).norm());
            scale = scale.max(full.values()[i].norm());
        }
        assert!(max_err < 1e-8 * scale, "affinity residual {max_err:.3e}");
    }

    // Lemma-style decomposition: Re << L^s f, f >> equals
    // s ||D f||^2 + (1-s) ||grad f||^2_chi.
    #[test]
    fn quadratic_form_decomposition() {
        let grid = PeriodicGrid::new(1, 64).unwrap();
        let psi = ScalarField::from_fn(grid, |x| 0.007 * (4.0 * PI * x[1]).cos());
        let setup = TwistedSetup::new(grid, 0.3, 1.2, psi).unwrap();
        let phi = ScalarField::from_fn(grid, |x| {
            0.01 * (2.0 * PI * x[0]).cos() + 0.008 * (2.0 * PI * (x[0] + x[1])).sin()
        });
        let ms = kahler::build_metric(&setup, &phi).unwrap();
        let ctx = OperatorContext::new(&setup, ms);
        let f = ScalarField::from_fn(grid, |x| {
            (2.0 * PI * x[0]).sin() + 0.3 * (4.0 * PI * x[1]).cos()
        });
        let form = quadratic_form(&ctx, &f, &f);
        let decomp = quadratic_form_decomposed(&ctx, &f);
        assert!(
            (form - decomp).abs() < 1e-8 * form.abs(),
            "form {form:.12e} vs decomposition {decomp:.12e}"
        );
        assert!(form > 0.0);
    }

    #[test]
    fn quadratic_form_symmetry_and_positivity() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let setup = TwistedSetup::flat_twist(grid, 0.5, 1.0).unwrap();
        let phi = ScalarField::from_fn(grid, |x| 0.015 * (2.0 * PI * x[0]).cos());
        let ms = kahler::build_metric(&setup, &phi).unwrap();
        let ctx = OperatorContext::new(&setup, ms);
        let f = ScalarField::from_fn(grid, |x| (2.0 * PI * x[1]).sin());
        let g = ScalarField::from_fn(grid, |x| (2.0 * PI * (x[0] + x[1])).cos());
        let fg = quadratic_form(&ctx, &f, &g);
        let gf = quadratic_form(&ctx, &g, &f);
        let scale = f.max_abs() * g.max_abs();
        assert!((fg - gf).abs() < 1e-8 * scale.max(1.0));
        assert!(quadratic_form(&ctx, &f, &f) > 0.0);
        let c = ScalarField::constant(grid, 0.4);
        assert!(quadratic_form(&ctx, &c, &c).abs() < 1e-12);
    }

    #[test]
    fn classical_quadratic_form_matches_dbar_grad_norm() {
        let grid = PeriodicGrid::new(1, 64).unwrap();
        let setup = TwistedSetup::flat_twist(grid, 1.0, 1.0).unwrap();
        let phi = ScalarField::from_fn(grid, |x| 0.012 * (2.0 * PI * (x[0] + x[1])).cos());
        let ms = kahler::build_metric(&setup, &phi).unwrap();
        let ctx = OperatorContext::new(&setup, ms);
        let f = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).sin() + (4.0 * PI * x[1]).cos());

        let lf = lichnerowicz_classical(&ctx, &f);
        let wv = ctx.metric().det_g().values();
        let lhs = exec::sum_indexed(grid.len(), |i| f.values()[i] * lf.values()[i].re * wv[i])
            * grid.cell_volume();
        let rhs = dirichlet_dbar_grad(&ctx, &f, &f);
        assert!(
            (lhs - rhs).abs() < 1e-8 * rhs.abs(),
            "lhs {lhs:.12e} rhs {rhs:.12e}"
        );
    }
}
