//! Time integration of the twisted Calabi flow `d phi / dt = R^s - Rbar^s`.
//!
//! The stiff constant-coefficient part is split off as in
//! `d/dt phi + s Lap0^2 phi = F(phi)`, `F(phi) = s Lap0^2 phi + R^s - Rbar^s`,
//! with `Lap0` the flat-metric Laplacian, and integrated by exponential time
//! differencing: the semigroup `exp(-dt s Lap0^2)` is exact in Fourier space,
//! the remainder `F` is handled by the two-stage ETD-RK2 corrector (IMEX
//! Euler is kept as a first-order reference scheme). Steps adapt on the
//! relative solution change; the zero-mean gauge is re-projected after every
//! step with the discarded drift accumulated separately.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::fft::{biharmonic_diagonal, Spectrum};
use crate::functionals::{self, PotentialPath};
use crate::grid::{integrate, ScalarField};
use crate::kahler::{self, MetricState, TwistedSetup};
use crate::operators::{self, OperatorContext};

/// Time stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Two-stage exponential integrator, second order (default).
    EtdRk2,
    /// Implicit Euler on the linear part, explicit on `F`; first order.
    ImexEuler,
}

/// Integrator parameters.
#[derive(Clone, Copy, Debug)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Target for the relative solution change per step,
    /// `max|phi+ - phi| / max(1, max|phi|)`.
    pub rel_step_tol: f64,
    pub t_final: f64,
    pub eps_pos: f64,
    pub max_steps: usize,
}

impl IntegratorConfig {
    /// Defaults for a given twist parameter; `dt_init ~ 1e-4 s^2` follows the
    /// parabolic scaling of the short-time problem.
    pub fn with_defaults(s: f64, t_final: f64) -> Self {
        Self {
            scheme: Scheme::EtdRk2,
            dt_init: 1e-4 * s * s,
            dt_min: 1e-12,
            dt_max: 1e-2,
            rel_step_tol: 1e-6,
            t_final,
            eps_pos: 1e-8,
            max_steps: 2_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::InvalidParameter(format!(
                "need dt_min <= dt_init <= dt_max, got {:.3e} / {:.3e} / {:.3e}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if self.t_final <= 0.0 || self.rel_step_tol <= 0.0 {
            return Err(Error::InvalidParameter(
                "t_final and rel_step_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-step diagnostics of an accepted state.
#[derive(Clone, Copy, Debug)]
pub struct StepDiagnostics {
    pub calabi: f64,
    /// Twisted K-energy, accumulated along the flow via `dM^s/dt = -C^s`.
    pub kenergy: f64,
    /// `max |R^s - Rbar^s|`.
    pub max_dev: f64,
    pub positivity_margin: f64,
    pub vol_residual: f64,
    pub chern_residual: f64,
    pub chi_class_residual: f64,
    /// Accumulated mean of the ungauged flow, removed by projection.
    pub mean_drift: f64,
}

/// Flow state at one accepted time.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub phi: ScalarField,
    pub dt: f64,
    pub diagnostics: StepDiagnostics,
    ms: MetricState,
}

impl FlowState {
    /// Initial state: gauge-projects the potential and fills diagnostics.
    /// The K-energy baseline is computed by path quadrature once.
    pub fn initial(
        setup: &TwistedSetup,
        phi0: &ScalarField,
        cfg: &IntegratorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let phi = phi0.shifted(-phi0.mean());
        let ms = build_checked(setup, &phi, cfg.eps_pos, 0.0)?;
        let kenergy = functionals::twisted_kenergy(setup, &phi, 16)?.kenergy_twisted;
        let diagnostics = diagnostics_of(setup, &ms, kenergy, 0.0);
        Ok(Self {
            t: 0.0,
            phi,
            dt: cfg.dt_init,
            diagnostics,
            ms,
        })
    }

    pub fn metric(&self) -> &MetricState {
        &self.ms
    }
}

fn build_checked(
    setup: &TwistedSetup,
    phi: &ScalarField,
    eps_pos: f64,
    t: f64,
) -> Result<MetricState> {
    let scoped = setup.clone().with_eps_pos(eps_pos);
    kahler::build_metric(&scoped, phi).map_err(|e| match e {
        Error::Positivity { margin, floor, .. } => Error::Positivity {
            margin,
            floor,
            t: Some(t),
        },
        other => other,
    })
}

fn diagnostics_of(
    setup: &TwistedSetup,
    ms: &MetricState,
    kenergy: f64,
    mean_drift: f64,
) -> StepDiagnostics {
    let rs = kahler::twisted_scalar(setup, ms);
    let rbar = setup.twisted_average();
    let grid = setup.grid();
    let one = ScalarField::constant(grid, 1.0);
    let dev = rs.values();
    let wv = ms.det_g().values();
    let cell = grid.cell_volume();
    let calabi = exec::sum_indexed(dev.len(), |i| {
        let d = dev[i] - rbar;
        d * d * wv[i]
    }) * cell;
    let max_dev = exec::max_indexed(dev.len(), |i| (dev[i] - rbar).abs());
    let vol_residual = (integrate(&one, ms.det_g()) - 1.0).abs();
    let chern_residual = integrate(ms.scalar_curv(), ms.det_g()).abs();
    let chi_class_residual =
        (integrate(&kahler::trace_chi(setup, ms), ms.det_g()) - setup.chi_bar()).abs();
    StepDiagnostics {
        calabi,
        kenergy,
        max_dev,
        positivity_margin: ms.positivity_margin(),
        vol_residual,
        chern_residual,
        chi_class_residual,
        mean_drift,
    }
}

/// Linear/nonlinear splitting at one metric state: the Fourier diagonal of
/// `s Lap0^2` and the remainder `F = s Lap0^2 phi + R^s - Rbar^s`, so that
/// `d phi/dt = -(diagonal) phi + F` holds by construction.
pub fn rhs_split(setup: &TwistedSetup, ms: &MetricState) -> (Vec<f64>, ScalarField) {
    let grid = setup.grid();
    let s = setup.s();
    let mut lam = biharmonic_diagonal(&grid);
    for v in lam.iter_mut() {
        *v *= s;
    }
    let mut spec = Spectrum::forward(ms.phi());
    {
        let coeffs = spec.coeffs_mut();
        exec::for_chunks_mut(coeffs, exec::CHUNK, |ci, chunk| {
            let base = ci * exec::CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v *= lam[base + j];
            }
        });
    }
    let stiff = spec.inverse_real();
    let rs = kahler::twisted_scalar(setup, ms);
    let rbar = setup.twisted_average();
    let mut f = ScalarField::zeros(grid);
    exec::for_chunks_mut(f.values_mut(), exec::CHUNK, |ci, chunk| {
        let base = ci * exec::CHUNK;
        for (j, v) in chunk.iter_mut().enumerate() {
            let i = base + j;
            *v = stiff.values()[i] + rs.values()[i] - rbar;
        }
    });
    (lam, f)
}

/// `phi1(z) = (e^z - 1)/z`, series below 1e-4 to avoid cancellation.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        (z.exp() - 1.0) / z
    }
}

/// `phi2(z) = (e^z - 1 - z)/z^2`, series below 1e-4.
fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    } else {
        (z.exp() - 1.0 - z) / (z * z)
    }
}

/// Reusable stepper: caches the split diagonal and the exponential tables
/// for the current step size.
pub struct Stepper<'a> {
    setup: &'a TwistedSetup,
    cfg: IntegratorConfig,
    lam: Vec<f64>,
    cached_dt: f64,
    exp_tab: Vec<f64>,
    p1_tab: Vec<f64>,
    p2_tab: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(setup: &'a TwistedSetup, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = setup.grid();
        let mut lam = biharmonic_diagonal(&grid);
        for v in lam.iter_mut() {
            *v *= setup.s();
        }
        Ok(Self {
            setup,
            cfg,
            lam,
            cached_dt: f64::NAN,
            exp_tab: Vec::new(),
            p1_tab: Vec::new(),
            p2_tab: Vec::new(),
        })
    }

    fn refresh_tables(&mut self, dt: f64) {
        if dt == self.cached_dt {
            return;
        }
        let n = self.lam.len();
        self.exp_tab = vec![0.0; n];
        self.p1_tab = vec![0.0; n];
        self.p2_tab = vec![0.0; n];
        let lam = &self.lam;
        exec::for_chunks_mut(&mut self.exp_tab, exec::CHUNK, |ci, chunk| {
            let base = ci * exec::CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = (-dt * lam[base + j]).exp();
            }
        });
        exec::for_chunks_mut(&mut self.p1_tab, exec::CHUNK, |ci, chunk| {
            let base = ci * exec::CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = dt * phi1(-dt * lam[base + j]);
            }
        });
        exec::for_chunks_mut(&mut self.p2_tab, exec::CHUNK, |ci, chunk| {
            let base = ci * exec::CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = dt * phi2(-dt * lam[base + j]);
            }
        });
        self.cached_dt = dt;
    }

    /// `F(phi)` at a prebuilt metric state, as Fourier coefficients.
    fn f_hat(&self, ms: &MetricState) -> Vec<Complex64> {
        let rs = kahler::twisted_scalar(self.setup, ms);
        let rbar = self.setup.twisted_average();
        let grid = self.setup.grid();
        let phi_hat = Spectrum::forward(ms.phi());
        let mut dev = ScalarField::zeros(grid);
        exec::for_chunks_mut(dev.values_mut(), exec::CHUNK, |ci, chunk| {
            let base = ci * exec::CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = rs.values()[base + j] - rbar;
            }
        });
        let dev_hat = Spectrum::forward(&dev);
        let lam = &self.lam;
        let mut out = dev_hat.coeffs().to_vec();
        let phi_c = phi_hat.coeffs();
        exec::for_chunks_mut(&mut out, exec::CHUNK, |ci, chunk| {
            let base = ci * exec::CHUNK;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v += lam[base + j] * phi_c[base + j];
            }
        });
        out
    }

    fn hat_to_field(&self, hat: &[Complex64]) -> ScalarField {
        let grid = self.setup.grid();
        let mut spec = Spectrum::forward(&ScalarField::zeros(grid));
        spec.coeffs_mut().copy_from_slice(hat);
        spec.inverse_real()
    }

    /// Candidate potential after one raw step of size `dt`; no acceptance
    /// logic. Returns the gauge-projected field and the discarded mean.
    fn raw_step(&mut self, state: &FlowState, dt: f64) -> Result<(ScalarField, f64)> {
        self.refresh_tables(dt);
        let phi_hat = Spectrum::forward(&state.phi);
        let f_n = self.f_hat(&state.ms);

        let new_hat = match self.cfg.scheme {
            Scheme::EtdRk2 => {
                let mut a_hat = phi_hat.coeffs().to_vec();
                {
                    let (e, p1) = (&self.exp_tab, &self.p1_tab);
                    exec::for_chunks_mut(&mut a_hat, exec::CHUNK, |ci, chunk| {
                        let base = ci * exec::CHUNK;
                        for (j, v) in chunk.iter_mut().enumerate() {
                            let i = base + j;
                            *v = *v * e[i] + p1[i] * f_n[i];
                        }
                    });
                }
                let a_field = self.hat_to_field(&a_hat);
                let a_field = a_field.shifted(-a_field.mean());
                let ms_a = build_checked(self.setup, &a_field, self.cfg.eps_pos, state.t)?;
                let f_a = self.f_hat(&ms_a);
                let mut out = a_hat;
                let p2 = &self.p2_tab;
                exec::for_chunks_mut(&mut out, exec::CHUNK, |ci, chunk| {
                    let base = ci * exec::CHUNK;
                    for (j, v) in chunk.iter_mut().enumerate() {
                        let i = base + j;
                        *v += p2[i] * (f_a[i] - f_n[i]);
                    }
                });
                out
            }
            Scheme::ImexEuler => {
                let mut out = phi_hat.coeffs().to_vec();
                let lam = &self.lam;
                exec::for_chunks_mut(&mut out, exec::CHUNK, |ci, chunk| {
                    let base = ci * exec::CHUNK;
                    for (j, v) in chunk.iter_mut().enumerate() {
                        let i = base + j;
                        *v = (*v + dt * f_n[i]) / (1.0 + dt * lam[i]);
                    }
                });
                out
            }
        };

        let raw = self.hat_to_field(&new_hat);
        let mean = raw.mean();
        Ok((raw.shifted(-mean), mean))
    }

    /// One accepted step: halves `dt` when the solution change exceeds the
    /// tolerance or positivity is lost, grows it gently after easy steps.
    /// Positivity failure at the floor step reports [`Error::Positivity`],
    /// tolerance failure there reports [`Error::StepFloor`].
    pub fn step(&mut self, state: &FlowState) -> Result<FlowState> {
        let mut dt = state.dt.min(self.cfg.dt_max).max(self.cfg.dt_min);
        loop {
            match self.raw_step(state, dt) {
                Err(Error::Positivity { margin, floor, t }) => {
                    if dt / 2.0 < self.cfg.dt_min {
                        return Err(Error::Positivity { margin, floor, t });
                    }
                    dt /= 2.0;
                }
                Err(other) => return Err(other),
                Ok((phi_new, mean)) => {
                    let diff = exec::max_indexed(phi_new.values().len(), |i| {
                        (phi_new.values()[i] - state.phi.values()[i]).abs()
                    });
                    let rel = diff / state.phi.max_abs().max(1.0);
                    if rel > self.cfg.rel_step_tol {
                        if dt / 2.0 < self.cfg.dt_min {
                            return Err(Error::StepFloor {
                                dt: dt / 2.0,
                                dt_min: self.cfg.dt_min,
                                t: state.t,
                            });
                        }
                        dt /= 2.0;
                        continue;
                    }
                    let ms_new =
                        match build_checked(self.setup, &phi_new, self.cfg.eps_pos, state.t + dt) {
                            Ok(ms) => ms,
                            Err(Error::Positivity { margin, floor, t }) => {
                                if dt / 2.0 < self.cfg.dt_min {
                                    return Err(Error::Positivity { margin, floor, t });
                                }
                                dt /= 2.0;
                                continue;
                            }
                            Err(other) => return Err(other),
                        };
                    // Trapezoid of dM^s/dt = -C^s across the step.
                    let calabi_new = functionals::calabi_energy_of(self.setup, &ms_new);
                    let kenergy = state.diagnostics.kenergy
                        - 0.5 * dt * (state.diagnostics.calabi + calabi_new);
                    let drift = state.diagnostics.mean_drift + mean;
                    let diagnostics = diagnostics_of(self.setup, &ms_new, kenergy, drift);
                    let mut dt_next = dt;
                    if rel < 0.5 * self.cfg.rel_step_tol {
                        dt_next = (dt * 1.5).min(self.cfg.dt_max);
                    }
                    return Ok(FlowState {
                        t: state.t + dt,
                        phi: phi_new,
                        dt: dt_next,
                        diagnostics,
                        ms: ms_new,
                    });
                }
            }
        }
    }
}

/// One accepted flow step (convenience wrapper around [`Stepper`]).
pub fn step(setup: &TwistedSetup, state: &FlowState, cfg: &IntegratorConfig) -> Result<FlowState> {
    Stepper::new(setup, *cfg)?.step(state)
}

/// Record of one accepted step, streamed to the sink.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord {
    pub index: usize,
    pub t: f64,
    pub dt: f64,
    pub diagnostics: StepDiagnostics,
}

/// Receives ordered per-step records of a trajectory.
pub trait DiagnosticSink {
    fn record(&mut self, rec: &StepRecord);
}

/// Sink that drops everything.
pub struct NullSink;

impl DiagnosticSink for NullSink {
    fn record(&mut self, _rec: &StepRecord) {}
}

/// Sink that keeps the records in memory.
#[derive(Default)]
pub struct CollectSink(pub Vec<StepRecord>);

impl DiagnosticSink for CollectSink {
    fn record(&mut self, rec: &StepRecord) {
        self.0.push(*rec);
    }
}

/// Outcome of a completed trajectory.
#[derive(Debug)]
pub struct FlowTrace {
    pub records: Vec<StepRecord>,
    pub terminal: FlowState,
    pub n_accepted: usize,
}

/// Integrate from `phi0` to `cfg.t_final`, streaming diagnostics. An
/// accepted step must not increase the twisted Calabi energy beyond the
/// roundoff allowance `1e-10 max(1, C^s)`; a violation aborts with the
/// offending energies in the error.
pub fn run(
    setup: &TwistedSetup,
    phi0: &ScalarField,
    cfg: &IntegratorConfig,
    sink: &mut dyn DiagnosticSink,
) -> Result<FlowTrace> {
    let mut stepper = Stepper::new(setup, *cfg)?;
    let mut state = FlowState::initial(setup, phi0, cfg)?;
    let mut records = Vec::new();
    let rec0 = StepRecord {
        index: 0,
        t: 0.0,
        dt: state.dt,
        diagnostics: state.diagnostics,
    };
    sink.record(&rec0);
    records.push(rec0);

    let mut n_accepted = 0usize;
    while state.t < cfg.t_final - 1e-15 {
        if n_accepted >= cfg.max_steps {
            return Err(Error::NoConvergence {
                what: "flow run (max_steps)",
                iterations: n_accepted,
                best: state.t,
                residual: cfg.t_final - state.t,
            });
        }
        // Land exactly on the horizon.
        let mut bounded = state.clone();
        bounded.dt = bounded.dt.min(cfg.t_final - state.t).max(cfg.dt_min);
        let next = stepper.step(&bounded)?;
        let tol = 1e-10 * state.diagnostics.calabi.max(1.0);
        if next.diagnostics.calabi > state.diagnostics.calabi + tol {
            return Err(Error::Monotonicity {
                t: next.t,
                before: state.diagnostics.calabi,
                after: next.diagnostics.calabi,
            });
        }
        n_accepted += 1;
        let rec = StepRecord {
            index: n_accepted,
            t: next.t,
            dt: next.t - state.t,
            diagnostics: next.diagnostics,
        };
        sink.record(&rec);
        records.push(rec);
        state = next;
    }

    Ok(FlowTrace {
        records,
        terminal: state,
        n_accepted,
    })
}

/// Evolve a trajectory so that it lands exactly on each target time,
/// returning the potentials at those times.
fn evolve_to_times(
    setup: &TwistedSetup,
    phi0: &ScalarField,
    cfg: &IntegratorConfig,
    times: &[f64],
) -> Result<Vec<ScalarField>> {
    let mut stepper = Stepper::new(setup, *cfg)?;
    let mut state = FlowState::initial(setup, phi0, cfg)?;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < state.t - 1e-15 {
            return Err(Error::InvalidParameter(
                "probe times must be nondecreasing".into(),
            ));
        }
        let mut guard = 0usize;
        while state.t < target - 1e-15 {
            let mut bounded = state.clone();
            bounded.dt = bounded.dt.min(target - state.t).max(cfg.dt_min);
            state = stepper.step(&bounded)?;
            guard += 1;
            if guard > cfg.max_steps {
                return Err(Error::NoConvergence {
                    what: "curve deformation (max_steps)",
                    iterations: guard,
                    best: state.t,
                    residual: target - state.t,
                });
            }
        }
        out.push(state.phi.clone());
    }
    Ok(out)
}

/// One probe of the deforming curve.
#[derive(Clone, Copy, Debug)]
pub struct CurveProbe {
    pub t: f64,
    pub energy: f64,
    pub length: f64,
    pub dedt_fd: f64,
    pub dedt_formula: f64,
    pub residual: f64,
}

/// Deform a sampled curve under the flow and compare the energy decay rate
/// with `-2 int_0^1 << phi_tau, L^s phi_tau >> dtau` at the probe times.
/// The finite difference in `t` uses the half-step `probe_halfstep`, landed
/// exactly by step clamping; independent trajectories run concurrently.
pub fn curve_deformation(
    setup: &TwistedSetup,
    path: &PotentialPath,
    cfg: &IntegratorConfig,
    probe_times: &[f64],
    probe_halfstep: f64,
) -> Result<Vec<CurveProbe>> {
    if probe_times.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one probe time".into(),
        ));
    }
    let h = probe_halfstep;
    if h <= 0.0 || probe_times[0] - h < 0.0 {
        return Err(Error::Stencil(
            "probe half-step must be positive and fit before the first probe".into(),
        ));
    }
    // Common time grid for all trajectories.
    let mut times = Vec::new();
    for &tp in probe_times {
        times.push(tp - h);
        times.push(tp);
        times.push(tp + h);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let evolved = exec::map_collect(path.len(), |i| {
        evolve_to_times(setup, &path.samples()[i], cfg, &times)
    });
    let mut snapshots: Vec<Vec<ScalarField>> = Vec::with_capacity(path.len());
    for e in evolved {
        snapshots.push(e?);
    }

    let path_at = |time_idx: usize| -> Result<PotentialPath> {
        let samples: Vec<ScalarField> = snapshots.iter().map(|s| s[time_idx].clone()).collect();
        path.replace_samples(samples)
    };

    let mut probes = Vec::with_capacity(probe_times.len());
    for (pi, &tp) in probe_times.iter().enumerate() {
        let (idx_m, idx_0, idx_p) = (3 * pi, 3 * pi + 1, 3 * pi + 2);
        let p_minus = path_at(idx_m)?;
        let p_mid = path_at(idx_0)?;
        let p_plus = path_at(idx_p)?;
        let (e_minus, _) = functionals::curve_energy_length(setup, &p_minus)?;
        let (energy, length) = functionals::curve_energy_length(setup, &p_mid)?;
        let (e_plus, _) = functionals::curve_energy_length(setup, &p_plus)?;
        let dedt_fd = (e_plus - e_minus) / (2.0 * h);

        // -2 int << v, L^s v >> dtau by trapezoid over the samples.
        let forms = exec::map_collect(p_mid.len(), |i| {
            kahler::build_metric(setup, &p_mid.samples()[i]).map(|ms| {
                let ctx = OperatorContext::new(setup, ms);
                operators::quadratic_form(&ctx, &p_mid.velocities()[i], &p_mid.velocities()[i])
            })
        });
        let mut q = Vec::with_capacity(p_mid.len());
        for f in forms {
            q.push(f?);
        }
        let mut rate = 0.0;
        for i in 1..p_mid.len() {
            let dtau = p_mid.taus()[i] - p_mid.taus()[i - 1];
            rate += 0.5 * dtau * (q[i - 1] + q[i]);
        }
        let dedt_formula = -2.0 * rate;
        let scale = dedt_fd.abs().max(dedt_formula.abs()).max(1e-14);
        probes.push(CurveProbe {
            t: tp,
            energy,
            length,
            dedt_fd,
            dedt_formula,
            residual: (dedt_fd - dedt_formula).abs() / scale,
        });
    }
    Ok(probes)
}
