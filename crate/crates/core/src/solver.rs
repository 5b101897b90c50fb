//! Nested primal-dual iteration with convex extrapolation and Bregman
//! re-anchoring.
//!
//! Outer step `i` (with `α_i` from the schedule):
//!
//! ```text
//! for j in 1..=J:
//!     û  = P₊[u_i − μ(Tᵀ(Tu_i − v^δ) + α_i Dᵀ(w − w₀))]
//!     w  = clamp₁(w + ν Dû)
//! u_{i+1} = u_i + λ(û − u_i)
//! u₀ = u_{i+1},  w₀ = sign(Du₀)
//! ```
//!
//! The dual field `w` is carried from one outer step to the next; `w₀` is
//! recomputed from the anchor after every outer step.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::forward::LinearOperator;
use crate::linalg;
use crate::operators::{
    divergence_adjoint_into, gradient_into, tv_of_slice, tv_subgradient, DualField, Grid, ImageVector,
};
use crate::proximal::{clamp_unit, project_nonneg};
use crate::regularization::{alpha_schedule, bregman_distance, mdp_band_check, IndexFunction, MdpBand, MdpConfig};

/// How `α_i` evolves over outer steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSchedule {
    /// `α_i = 1/i`.
    Harmonic,
    /// The same `α` at every step.
    Constant(f64),
}

impl AlphaSchedule {
    pub fn alpha(&self, i: usize) -> Result<f64> {
        match *self {
            AlphaSchedule::Harmonic => alpha_schedule(i),
            AlphaSchedule::Constant(a) => {
                if i == 0 {
                    return Err(Error::input("alpha schedule is indexed from 1"));
                }
                Ok(a)
            }
        }
    }
}

/// When the Bregman anchor `u₀` moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorUpdate {
    /// `u₀ ← u_{i+1}` after every outer step.
    EveryOuter,
    /// Keep the initial anchor; the iteration then targets the minimizer of a
    /// single `F_α`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stopping {
    /// Stop on first entry of the discrepancy into `[τ̲δ, τ̄δ]` (or below it).
    Mdp(MdpConfig),
    /// Stop once `‖u − u†‖/‖u†‖ ≤ epsilon`; needs `u†`.
    RelError {
        epsilon: f64,
    },
    MaxIters,
}

/// Starting image.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// The constant `c·1` with `c = Σ max(Tᵀv^δ, 0) / ‖T1‖²`, the least-squares
    /// constant fitted through the clipped backprojection.
    ConstantBackprojection,
    Image(ImageVector),
}

/// Static parameters of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Primal step length `μ`.
    pub mu: f64,
    /// Extrapolation factor `λ ∈ (1, 2)`.
    pub lambda: f64,
    /// Dual step `ν`.
    pub nu: f64,
    /// Inner iterations `J`.
    pub inner_iters: usize,
    pub max_outer: usize,
    pub alpha_schedule: AlphaSchedule,
    pub anchor: AnchorUpdate,
    pub stopping: Stopping,
    pub init: InitialGuess,
    /// The `‖T‖` estimate the step length is checked against.
    pub op_norm: f64,
    /// Permits `μ ≥ 2/‖T‖²`, for step-length instability studies.
    pub allow_unstable_step: bool,
    /// Continuous parameter `α` used by the parameter-condition monitor.
    pub monitor_alpha: Option<f64>,
}

pub const DEFAULT_LAMBDA: f64 = 1.5;
pub const DEFAULT_INNER_ITERS: usize = 10;
pub const DEFAULT_MAX_OUTER: usize = 500;

impl SolverConfig {
    /// Defaults for a problem with `‖T‖ = op_norm` and absolute noise `δ`:
    /// `μ = 1/‖T‖²`, `λ = 1.5`, `J = 10`, harmonic `α_i`, Bregman re-anchoring,
    /// discrepancy stopping with `τ̲ = 1.1`, `τ̄ = 1.5` and `ν = √ᾱ` with
    /// `ᾱ = δ²/Ψ(δ)`. For `δ = 0`, `ν = 1/(8μα₁)`, the largest step that keeps the
    /// inner dual iteration stable.
    pub fn for_problem(op_norm: f64, delta_abs: f64, psi: &IndexFunction) -> Result<Self> {
        if !(op_norm > 0.0) || !op_norm.is_finite() {
            return Err(Error::param("operator norm must be positive"));
        }
        let mu = 1.0 / (op_norm * op_norm);
        let (nu, monitor_alpha) = if delta_abs > 0.0 {
            let a = crate::regularization::alpha_upper_bound(delta_abs, psi)?;
            (libm::sqrt(a), Some(a))
        } else {
            (1.0 / (8.0 * mu), None)
        };
        Ok(SolverConfig {
            mu,
            lambda: DEFAULT_LAMBDA,
            nu,
            inner_iters: DEFAULT_INNER_ITERS,
            max_outer: DEFAULT_MAX_OUTER,
            alpha_schedule: AlphaSchedule::Harmonic,
            anchor: AnchorUpdate::EveryOuter,
            stopping: Stopping::Mdp(MdpConfig::with_delta(delta_abs)?),
            init: InitialGuess::ConstantBackprojection,
            op_norm,
            allow_unstable_step: false,
            monitor_alpha,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.op_norm > 0.0) || !self.op_norm.is_finite() {
            return Err(Error::param("operator norm must be positive"));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::param("step length mu must be positive"));
        }
        let cap = 2.0 / (self.op_norm * self.op_norm);
        if !self.allow_unstable_step && self.mu >= cap {
            return Err(Error::param(format!(
                "step length mu = {} must be below 2/|T|^2 = {cap}",
                self.mu
            )));
        }
        if !(self.lambda > 1.0 && self.lambda < 2.0) {
            return Err(Error::param(format!("lambda must lie in (1, 2), got {}", self.lambda)));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::param("dual step nu must be positive"));
        }
        if self.inner_iters == 0 || self.max_outer == 0 {
            return Err(Error::param("iteration counts must be positive"));
        }
        if let AlphaSchedule::Constant(a) = self.alpha_schedule {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::param("constant alpha must be positive"));
            }
        }
        match self.stopping {
            Stopping::Mdp(m) => m.validate()?,
            Stopping::RelError { epsilon } if !(epsilon > 0.0) => {
                return Err(Error::param("relative-error threshold must be positive"))
            }
            _ => {}
        }
        Ok(())
    }
}

/// One row of the run trace, recorded after outer step `iter`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub alpha: f64,
    /// `‖Tu_{i+1} − v^δ‖`
    pub discrepancy: f64,
    /// `‖u_{i+1} − u†‖/‖u†‖` when `u†` is known.
    pub rel_error: Option<f64>,
    pub tv: f64,
    /// `D_J(u_{i+1}, u†)` with the sign subgradient at `u†`.
    pub bregman: Option<f64>,
    pub fp_residual: f64,
    /// `F_{α_i}` at the projection of `u_{i+1}` onto `u ≥ 0`, anchored where the step was.
    pub objective: f64,
    pub ms_elapsed: f64,
}

/// Why the outer loop stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    MdpHit,
    RelErrorHit,
    MaxIters,
    Diverged { iteration: usize, reason: String },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::MdpHit => "mdp_hit",
            Termination::RelErrorHit => "rel_error_hit",
            Termination::MaxIters => "max_iters",
            Termination::Diverged { .. } => "diverged",
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, Termination::Diverged { .. })
    }
}

/// Violation counts of the parameter conditions, with `α` the continuous
/// proxy from [`SolverConfig::monitor_alpha`]:
/// `1/λ < 1 − (α_i − α)`, `0 < 1 + λ²(α_i − α) < 1` and
/// `λ(α_i − α) − (1 − λ) < 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParameterMonitor {
    pub checked: usize,
    pub relaxation: usize,
    pub contraction: usize,
    pub extrapolation: usize,
}

impl ParameterMonitor {
    fn observe(&mut self, lambda: f64, alpha_i: f64, alpha: f64) {
        let gap = alpha_i - alpha;
        self.checked += 1;
        if !(1.0 / lambda < 1.0 - gap) {
            self.relaxation += 1;
        }
        let factor = 1.0 + lambda * lambda * gap;
        if !(factor > 0.0 && factor < 1.0) {
            self.contraction += 1;
        }
        if !(lambda * gap - (1.0 - lambda) < 0.0) {
            self.extrapolation += 1;
        }
    }

    pub fn total_violations(&self) -> usize {
        self.relaxation + self.contraction + self.extrapolation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
    /// Relative error of the starting image, when `u†` is known.
    pub initial_rel_error: Option<f64>,
    pub initial_discrepancy: f64,
    pub monitor: ParameterMonitor,
}

impl RunTrace {
    pub fn min_rel_error(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.rel_error)
            .fold(None, |m, e| Some(m.map_or(e, |m: f64| m.min(e))))
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Millisecond clock for the trace; [`NoClock`] keeps traces reproducible.
pub trait Clock {
    fn elapsed_ms(&self) -> f64;
}

/// Reports zero elapsed time.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_ms(&self) -> f64 {
        0.0
    }
}

/// Iterate and anchor after some number of outer steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Completed outer steps.
    pub iter: usize,
    /// Current (extrapolated) primal iterate `u_i`.
    pub u: ImageVector,
    /// Dual field carried into the next inner loop.
    pub w: DualField,
    /// Bregman anchor `u₀` and its subgradient `w₀`.
    pub anchor: ImageVector,
    pub w0: DualField,
}

/// Scratch buffers for the inner loop.
struct InnerWork {
    base: Vec<f64>,
    div: Vec<f64>,
    du: DualField,
}

impl InnerWork {
    fn new(grid: Grid) -> Self {
        InnerWork {
            base: vec![0.0; grid.len()],
            div: vec![0.0; grid.len()],
            du: DualField::zeros(grid),
        }
    }
}

/// `J` inner sweeps at fixed `u_i`. `grad` is `Tᵀ(Tu_i − v^δ)`.
/// Writes the last primal iterate into `u_hat` and updates `w` in place.
#[allow(clippy::too_many_arguments)]
fn inner_sweeps(
    grid: Grid,
    u_i: &[f64],
    grad: &[f64],
    w: &mut DualField,
    w0: &DualField,
    alpha_i: f64,
    mu: f64,
    nu: f64,
    inner_iters: usize,
    u_hat: &mut [f64],
    work: &mut InnerWork,
) {
    let tv_step = mu * alpha_i;
    // base = u_i − μ grad + μα_i Dᵀw₀, fixed across the sweeps
    divergence_adjoint_into(w0, &mut work.div);
    for k in 0..grid.len() {
        work.base[k] = u_i[k] - mu * grad[k] + tv_step * work.div[k];
    }
    for _ in 0..inner_iters {
        divergence_adjoint_into(w, &mut work.div);
        for ((h, b), d) in u_hat.iter_mut().zip(&work.base).zip(&work.div) {
            *h = b - tv_step * d;
        }
        project_nonneg(u_hat);
        gradient_into(grid, u_hat, &mut work.du);
        linalg::axpy(nu, &work.du.dx, &mut w.dx);
        linalg::axpy(nu, &work.du.dy, &mut w.dy);
        clamp_unit(&mut w.dx);
        clamp_unit(&mut w.dy);
    }
}

/// Runs the inner primal-dual loop of one outer step from `u_i`, starting
/// the dual at `w_init`, and returns `(û_i^J, w^{J+1})`.
#[allow(clippy::too_many_arguments)]
pub fn inner_dual_loop<T: LinearOperator + ?Sized>(
    u_i: &ImageVector,
    w_init: &DualField,
    w0: &DualField,
    op: &T,
    v_delta: &[f64],
    alpha_i: f64,
    mu: f64,
    nu: f64,
    inner_iters: usize,
) -> Result<(ImageVector, DualField)> {
    if !(alpha_i > 0.0 && mu > 0.0 && nu > 0.0) || inner_iters == 0 {
        return Err(Error::param("inner loop parameters must be positive"));
    }
    let grid = u_i.grid();
    check_len(op.in_dim(), u_i.len())?;
    check_len(op.out_dim(), v_delta.len())?;
    if w_init.grid() != grid || w0.grid() != grid {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: w_init.grid().len(),
        });
    }
    let grad = data_gradient(op, u_i.data(), v_delta).1;
    let mut w = w_init.clone();
    let mut u_hat = vec![0.0; grid.len()];
    let mut work = InnerWork::new(grid);
    inner_sweeps(
        grid,
        u_i.data(),
        &grad,
        &mut w,
        w0,
        alpha_i,
        mu,
        nu,
        inner_iters,
        &mut u_hat,
        &mut work,
    );
    if !linalg::all_finite(&u_hat) || !w.iter().all(|x| x.is_finite()) {
        return Err(Error::Divergence {
            iteration: 0,
            reason: "non-finite inner iterate".into(),
        });
    }
    Ok((ImageVector::new(grid, u_hat)?, w))
}

/// Returns `(Tu − v, Tᵀ(Tu − v))`.
fn data_gradient<T: LinearOperator + ?Sized>(op: &T, u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut r = vec![0.0; op.out_dim()];
    op.apply_into(u, &mut r);
    for (ri, vi) in r.iter_mut().zip(v) {
        *ri -= vi;
    }
    let mut g = vec![0.0; op.in_dim()];
    op.apply_adjoint_into(&r, &mut g);
    (r, g)
}

/// Distance of `(u, w)` from one application of the coupled prox system
///
/// `u = P₊[u − μ((1/α)Tᵀ(Tu − v^δ) + Dᵀ(w − w₀))]`, `w = clamp₁(w + νDu)`,
///
/// as the sum of the two Euclidean norms. Zero exactly at solutions.
/// The solver's own step corresponds to `mu = μ_solver·α_i`.
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_residual<T: LinearOperator + ?Sized>(
    u: &ImageVector,
    w: &DualField,
    op: &T,
    v_delta: &[f64],
    alpha: f64,
    mu: f64,
    nu: f64,
    w0: &DualField,
) -> Result<f64> {
    if !(alpha > 0.0 && mu > 0.0 && nu > 0.0) {
        return Err(Error::param("residual parameters must be positive"));
    }
    check_len(op.in_dim(), u.len())?;
    check_len(op.out_dim(), v_delta.len())?;
    if w.grid() != u.grid() || w0.grid() != u.grid() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: w.grid().len(),
        });
    }
    let grad = data_gradient(op, u.data(), v_delta).1;
    Ok(residual_with_gradient(u.grid(), u.data(), &grad, w, w0, alpha, mu, nu))
}

#[allow(clippy::too_many_arguments)]
fn residual_with_gradient(
    grid: Grid,
    u: &[f64],
    grad: &[f64],
    w: &DualField,
    w0: &DualField,
    alpha: f64,
    mu: f64,
    nu: f64,
) -> f64 {
    let n = grid.len();
    let mut dw = DualField::zeros(grid);
    for k in 0..n {
        dw.dx[k] = w.dx[k] - w0.dx[k];
        dw.dy[k] = w.dy[k] - w0.dy[k];
    }
    let mut div = vec![0.0; n];
    divergence_adjoint_into(&dw, &mut div);
    let mut primal = vec![0.0; n];
    for k in 0..n {
        primal[k] = u[k] - mu * (grad[k] / alpha + div[k]);
    }
    project_nonneg(&mut primal);
    let r_primal = linalg::dist2(u, &primal);

    let mut du = DualField::zeros(grid);
    gradient_into(grid, u, &mut du);
    let mut dual = w.clone();
    linalg::axpy(nu, &du.dx, &mut dual.dx);
    linalg::axpy(nu, &du.dy, &mut dual.dy);
    clamp_unit(&mut dual.dx);
    clamp_unit(&mut dual.dy);
    let r_dual = libm::sqrt(
        w.dx.iter()
            .zip(&dual.dx)
            .chain(w.dy.iter().zip(&dual.dy))
            .map(|(a, b)| (a - b) * (a - b))
            .sum(),
    );
    r_primal + r_dual
}

/// Relative error above this multiple of its starting value counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Smallest reference used by the divergence test, so a start that is
/// already almost exact does not flag ordinary progress. Relative to `1` for
/// the relative error and to `‖v^δ‖` for the discrepancy.
pub const DIVERGENCE_FLOOR: f64 = 0.01;

/// Drives the outer iteration for one problem.
pub struct Solver<'a, T: LinearOperator + ?Sized, C: Clock = NoClock> {
    op: &'a T,
    v_delta: &'a [f64],
    cfg: SolverConfig,
    u_dagger: Option<&'a ImageVector>,
    q_dagger: Option<DualField>,
    dagger_norm: f64,
    clock: C,
    state: SolverState,
    /// `Tᵀ(Tu_i − v^δ)` for the current iterate.
    grad: Vec<f64>,
    initial_rel_error: Option<f64>,
    initial_discrepancy: f64,
    records: Vec<TraceRecord>,
    monitor: ParameterMonitor,
    work: InnerWork,
    u_hat: Vec<f64>,
}

impl<'a, T: LinearOperator + ?Sized> Solver<'a, T, NoClock> {
    pub fn new(
        op: &'a T,
        grid: Grid,
        v_delta: &'a [f64],
        cfg: SolverConfig,
        u_dagger: Option<&'a ImageVector>,
    ) -> Result<Self> {
        Self::with_clock(op, grid, v_delta, cfg, u_dagger, NoClock)
    }
}

impl<'a, T: LinearOperator + ?Sized, C: Clock> Solver<'a, T, C> {
    pub fn with_clock(
        op: &'a T,
        grid: Grid,
        v_delta: &'a [f64],
        cfg: SolverConfig,
        u_dagger: Option<&'a ImageVector>,
        clock: C,
    ) -> Result<Self> {
        cfg.validate()?;
        check_len(op.in_dim(), grid.len())?;
        check_len(op.out_dim(), v_delta.len())?;
        if let Some(ud) = u_dagger {
            if ud.grid() != grid {
                return Err(Error::DimensionMismatch {
                    expected: grid.len(),
                    found: ud.len(),
                });
            }
        }
        if matches!(cfg.stopping, Stopping::RelError { .. }) && u_dagger.is_none() {
            return Err(Error::param("relative-error stopping needs the true solution"));
        }
        let u0 = match &cfg.init {
            InitialGuess::Image(img) => {
                if img.grid() != grid {
                    return Err(Error::DimensionMismatch {
                        expected: grid.len(),
                        found: img.len(),
                    });
                }
                img.clone()
            }
            InitialGuess::ConstantBackprojection => ImageVector::constant(grid, backprojection_constant(op, v_delta)),
        };
        let w0 = tv_subgradient(&u0);
        let (residual, grad) = data_gradient(op, u0.data(), v_delta);
        let dagger_norm = u_dagger.map_or(0.0, |u| u.norm());
        let initial_rel_error = u_dagger.map(|ud| rel_error(u0.data(), ud.data(), dagger_norm));
        let q_dagger = u_dagger.map(tv_subgradient);
        Ok(Solver {
            op,
            v_delta,
            u_dagger,
            q_dagger,
            dagger_norm,
            clock,
            state: SolverState {
                iter: 0,
                u: u0.clone(),
                w: w0.clone(),
                anchor: u0,
                w0,
            },
            grad,
            initial_rel_error,
            initial_discrepancy: linalg::norm2(&residual),
            records: Vec::new(),
            monitor: ParameterMonitor::default(),
            work: InnerWork::new(grid),
            u_hat: vec![0.0; grid.len()],
            cfg,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// One outer step: inner loop, extrapolation, diagnostics, re-anchoring.
    /// Returns the `û_i^J` of the step alongside its trace record.
    pub fn outer_iteration(&mut self) -> Result<(ImageVector, TraceRecord)> {
        let i = self.state.iter + 1;
        let alpha_i = self.cfg.alpha_schedule.alpha(i)?;
        let grid = self.state.u.grid();
        let (mu, nu, lambda) = (self.cfg.mu, self.cfg.nu, self.cfg.lambda);

        inner_sweeps(
            grid,
            self.state.u.data(),
            &self.grad,
            &mut self.state.w,
            &self.state.w0,
            alpha_i,
            mu,
            nu,
            self.cfg.inner_iters,
            &mut self.u_hat,
            &mut self.work,
        );

        // u_{i+1} = u_i + λ(û − u_i). Off-support pixels oscillate as
        // (1−λ)^k u and would otherwise decay into subnormals.
        for (u, &h) in self.state.u.data_mut().iter_mut().zip(&self.u_hat) {
            *u += lambda * (h - *u);
            if u.is_subnormal() {
                *u = 0.0;
            }
        }
        if !linalg::all_finite(self.state.u.data()) || !self.state.w.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence {
                iteration: i,
                reason: "non-finite iterate".into(),
            });
        }
        self.state.iter = i;
        if let Some(a) = self.cfg.monitor_alpha {
            self.monitor.observe(lambda, alpha_i, a);
        }

        let u_next = self.state.u.data();
        let (residual, grad) = data_gradient(self.op, u_next, self.v_delta);
        let discrepancy = linalg::norm2(&residual);
        let fp_residual = residual_with_gradient(
            grid,
            u_next,
            &grad,
            &self.state.w,
            &self.state.w0,
            alpha_i,
            mu * alpha_i,
            nu,
        );
        let objective = self.objective_at_projection(u_next, &residual, alpha_i)?;
        let rel = self.u_dagger.map(|ud| rel_error(u_next, ud.data(), self.dagger_norm));
        let bregman = match (self.u_dagger, &self.q_dagger) {
            (Some(ud), Some(q)) => Some(bregman_distance(&self.state.u, ud, q)?),
            _ => None,
        };
        let record = TraceRecord {
            iter: i,
            alpha: alpha_i,
            discrepancy,
            rel_error: rel,
            tv: tv_of_slice(grid, u_next),
            bregman,
            fp_residual,
            objective,
            ms_elapsed: self.clock.elapsed_ms(),
        };
        self.grad = grad;

        if self.cfg.anchor == AnchorUpdate::EveryOuter {
            self.state.anchor = self.state.u.clone();
            self.state.w0 = tv_subgradient(&self.state.anchor);
        }
        self.records.push(record.clone());
        Ok((ImageVector::new(grid, self.u_hat.clone())?, record))
    }

    fn objective_at_projection(&self, u: &[f64], residual: &[f64], alpha: f64) -> Result<f64> {
        let grid = self.state.u.grid();
        let mut proj = u.to_vec();
        project_nonneg(&mut proj);
        let misfit = if proj == u {
            linalg::norm2(residual)
        } else {
            let mut tp = vec![0.0; self.op.out_dim()];
            self.op.apply_into(&proj, &mut tp);
            linalg::dist2(&tp, self.v_delta)
        };
        let proj = ImageVector::new(grid, proj)?;
        let d = bregman_distance(&proj, &self.state.anchor, &self.state.w0)?;
        Ok(0.5 * misfit * misfit + alpha * d)
    }

    fn check_stop(&self, rec: &TraceRecord) -> Option<Termination> {
        if let (Some(e), Some(e0)) = (rec.rel_error, self.initial_rel_error) {
            if e > DIVERGENCE_FACTOR * e0.max(DIVERGENCE_FLOOR) {
                return Some(Termination::Diverged {
                    iteration: rec.iter,
                    reason: format!("relative error {e} exceeds {DIVERGENCE_FACTOR}x its initial value {e0}"),
                });
            }
        } else if self.u_dagger.is_none()
            && rec.discrepancy
                > DIVERGENCE_FACTOR
                    * self
                        .initial_discrepancy
                        .max(DIVERGENCE_FLOOR * linalg::norm2(self.v_delta))
        {
            return Some(Termination::Diverged {
                iteration: rec.iter,
                reason: format!(
                    "discrepancy {} exceeds {DIVERGENCE_FACTOR}x its initial value",
                    rec.discrepancy
                ),
            });
        }
        match self.cfg.stopping {
            Stopping::Mdp(m) if mdp_band_check(rec.discrepancy, &m) != MdpBand::Above => {
                return Some(Termination::MdpHit)
            }
            Stopping::RelError { epsilon } if rec.rel_error.is_some_and(|e| e <= epsilon) => {
                return Some(Termination::RelErrorHit)
            }
            _ => {}
        }
        if rec.iter >= self.cfg.max_outer {
            return Some(Termination::MaxIters);
        }
        None
    }

    /// Iterates until a stopping rule fires. Divergence is reported through
    /// [`Termination::Diverged`], not as an error, so the trace survives.
    pub fn run(mut self) -> Result<SolveOutcome> {
        let termination = loop {
            match self.outer_iteration() {
                Ok((_, rec)) => {
                    if let Some(t) = self.check_stop(&rec) {
                        break t;
                    }
                }
                Err(Error::Divergence { iteration, reason }) => break Termination::Diverged { iteration, reason },
                Err(e) => return Err(e),
            }
        };
        let mut u = self.state.u;
        project_nonneg(u.data_mut());
        let final_rel_error = self.u_dagger.map(|ud| rel_error(u.data(), ud.data(), self.dagger_norm));
        Ok(SolveOutcome {
            u,
            final_rel_error,
            trace: RunTrace {
                records: self.records,
                termination,
                initial_rel_error: self.initial_rel_error,
                initial_discrepancy: self.initial_discrepancy,
                monitor: self.monitor,
            },
        })
    }
}

/// Output of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    /// Final iterate projected onto `u ≥ 0`.
    pub u: ImageVector,
    /// Relative error of [`SolveOutcome::u`] when `u†` is known.
    pub final_rel_error: Option<f64>,
    pub trace: RunTrace,
}

/// Runs the full iteration on `v^δ` with the given configuration.
pub fn solve<T: LinearOperator + ?Sized>(
    op: &T,
    grid: Grid,
    v_delta: &[f64],
    cfg: SolverConfig,
    u_dagger: Option<&ImageVector>,
) -> Result<SolveOutcome> {
    Solver::new(op, grid, v_delta, cfg, u_dagger)?.run()
}

fn rel_error(u: &[f64], truth: &[f64], truth_norm: f64) -> f64 {
    let d = linalg::dist2(u, truth);
    if truth_norm > 0.0 {
        d / truth_norm
    } else {
        d
    }
}

fn backprojection_constant<T: LinearOperator + ?Sized>(op: &T, v: &[f64]) -> f64 {
    let mut bp = vec![0.0; op.in_dim()];
    op.apply_adjoint_into(v, &mut bp);
    let mass: f64 = bp.iter().map(|&x| x.max(0.0)).sum();
    let ones = vec![1.0; op.in_dim()];
    let mut t1 = vec![0.0; op.out_dim()];
    op.apply_into(&ones, &mut t1);
    let denom = linalg::dot(&t1, &t1);
    if denom > 0.0 {
        mass / denom
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::DenseOperator;
    use crate::operators::{divergence_adjoint, gradient};

    fn identity_cfg(n_norm: f64) -> SolverConfig {
        let mut cfg = SolverConfig::for_problem(n_norm, 0.0, &IndexFunction::sqrt()).unwrap();
        cfg.stopping = Stopping::MaxIters;
        cfg
    }

    #[test]
    fn identity_fixed_point() {
        let grid = Grid::new(3, 2).unwrap();
        let u = ImageVector::new(grid, vec![0.1, 0.5, 0.0, 2.0, 1.0, 0.3]).unwrap();
        let id = DenseOperator::identity(6).unwrap();
        let z = DualField::zeros(grid);
        let (uh, w) = inner_dual_loop(&u, &z, &z, &id, u.data(), 0.7, 1.0, 0.1, 5).unwrap();
        // the primal step does not move on the first sweep; the dual then grows,
        // so compare the first sweep only
        let (uh1, _) = inner_dual_loop(&u, &z, &z, &id, u.data(), 0.7, 1.0, 0.1, 1).unwrap();
        assert_eq!(uh1, u);
        assert!(uh.is_nonnegative());
        assert!(w.max_abs() <= 1.0);
    }

    #[test]
    fn one_inner_step_by_hand() {
        // T = [[2, 1], [0, 1]], one row of two pixels
        let grid = Grid::new(2, 1).unwrap();
        let op = DenseOperator::new(2, 2, vec![2.0, 1.0, 0.0, 1.0]).unwrap();
        let u = ImageVector::new(grid, vec![0.4, 0.9]).unwrap();
        let v = [1.0, 0.2];
        let w_init = DualField::new(grid, vec![0.3, 0.0], vec![0.0, 0.0]).unwrap();
        let w0 = DualField::new(grid, vec![-0.5, 0.0], vec![0.0, 0.0]).unwrap();
        let (alpha, mu, nu) = (0.5, 0.1, 0.8);
        let (uh, w) = inner_dual_loop(&u, &w_init, &w0, &op, &v, alpha, mu, nu, 1).unwrap();

        // residual Tu − v = (0.8 + 0.9 − 1.0, 0.9 − 0.2) = (0.7, 0.7)
        // Tᵀr = (1.4, 0.7 + 0.7) = (1.4, 1.4)
        // w − w0 = (0.8, 0) in dx; Dᵀ gives (−0.8, 0.8)
        // u − μ(Tᵀr + αDᵀ(w − w0)) = (0.4 − 0.1(1.4 − 0.4), 0.9 − 0.1(1.4 + 0.4)) = (0.3, 0.72)
        assert!((uh.data()[0] - 0.3).abs() < 1e-14);
        assert!((uh.data()[1] - 0.72).abs() < 1e-14);
        // dual: 0.3 + 0.8·(0.72 − 0.3) = 0.636
        assert!((w.dx[0] - 0.636).abs() < 1e-14);
        assert_eq!(w.dx[1], 0.0);
    }

    #[test]
    fn inner_dual_stays_in_box() {
        let grid = Grid::new(4, 4).unwrap();
        let id = DenseOperator::identity(16).unwrap();
        let u = ImageVector::new(grid, (0..16).map(|i| ((i * 7) % 5) as f64).collect()).unwrap();
        let z = DualField::zeros(grid);
        let (uh, w) = inner_dual_loop(&u, &z, &z, &id, &[0.0; 16], 1.0, 0.5, 3.0, 20).unwrap();
        assert!(w.max_abs() <= 1.0);
        assert!(uh.is_nonnegative());
    }

    #[test]
    fn extrapolation_identity_and_lambda_limit() {
        let grid = Grid::new(4, 4).unwrap();
        let id = DenseOperator::identity(16).unwrap();
        let truth: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.2 }).collect();
        for &lambda in &[1.0 + 1e-9, 1.3, 1.9] {
            let mut cfg = identity_cfg(1.0);
            cfg.lambda = lambda;
            cfg.mu = 0.5;
            let mut s = Solver::new(&id, grid, &truth, cfg, None).unwrap();
            for _ in 0..3 {
                let before = s.state().u.clone();
                let (uh, _) = s.outer_iteration().unwrap();
                let after = &s.state().u;
                for k in 0..16 {
                    let step = after.data()[k] - before.data()[k];
                    let expect = lambda * (uh.data()[k] - before.data()[k]);
                    assert!((step - expect).abs() <= 1e-15 * (1.0 + expect.abs()));
                    if lambda < 1.0 + 1e-6 {
                        assert!((after.data()[k] - uh.data()[k]).abs() <= 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let base = SolverConfig::for_problem(2.0, 0.1, &IndexFunction::sqrt()).unwrap();
        assert!(base.validate().is_ok());
        assert!((base.mu - 0.25).abs() < 1e-15);
        let mut c = base.clone();
        c.mu = 0.5; // = 2/‖T‖²
        assert!(c.validate().is_err());
        c.allow_unstable_step = true;
        assert!(c.validate().is_ok());
        let mut c = base.clone();
        c.lambda = 2.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.lambda = 1.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.inner_iters = 0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.stopping = Stopping::RelError { epsilon: 0.1 };
        let grid = Grid::new(2, 1).unwrap();
        let op = DenseOperator::identity(2).unwrap();
        assert!(Solver::new(&op, grid, &[0.0, 0.0], c, None).is_err());
    }

    #[test]
    fn residual_positive_for_negative_u() {
        let grid = Grid::new(2, 1).unwrap();
        let op = DenseOperator::identity(2).unwrap();
        let u = ImageVector::new(grid, vec![-0.5, 1.0]).unwrap();
        let z = DualField::zeros(grid);
        let r = fixed_point_residual(&u, &z, &op, &[-0.5, 1.0], 1.0, 0.5, 0.5, &z).unwrap();
        assert!(r > 0.0);
        let ok = ImageVector::new(grid, vec![0.5, 0.5]).unwrap();
        let r = fixed_point_residual(&ok, &z, &op, &[0.5, 0.5], 1.0, 0.5, 0.5, &z).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn backprojection_constant_is_least_squares() {
        let op = DenseOperator::identity(4).unwrap();
        let c = backprojection_constant(&op, &[1.0, 2.0, 3.0, 6.0]);
        assert!((c - 3.0).abs() < 1e-15);
    }

    #[test]
    fn divergence_helpers_agree() {
        let grid = Grid::new(3, 3).unwrap();
        let u = ImageVector::new(grid, (0..9).map(|i| (i * i) as f64).collect()).unwrap();
        let g = gradient(&u);
        let mut out = vec![0.0; 9];
        divergence_adjoint_into(&g, &mut out);
        assert_eq!(out, divergence_adjoint(&g).into_data());
    }
}
