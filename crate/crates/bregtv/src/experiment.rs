//! Phantom → sinogram → noise → reconstruction, with artifacts on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bregtv_core::forward::{add_noise, operator_norm, NoisyMeasurement, NORM_MAX_ITER, NORM_TOL};
use bregtv_core::solver::{AlphaSchedule, Clock, SolveOutcome, Solver, SolverConfig, Stopping};
use bregtv_core::{ImageVector, IndexFunction, MdpConfig, RadonOperator, Sinogram};

use crate::config::{AlphaKind, ExperimentConfig, StoppingKind, Timing};
use crate::error::{Error, Result};
use crate::formats::{self, PgmEncoding};
use crate::phantom::make_phantom;

struct WallClock(Instant);

impl Clock for WallClock {
    fn elapsed_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

/// Everything produced by one reconstruction, before anything is written.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub phantom: ImageVector,
    pub measurement: NoisyMeasurement,
    pub sinogram: Sinogram,
    pub op_norm: f64,
    pub solver: SolverConfig,
    pub outcome: SolveOutcome,
    pub wall_ms: f64,
}

impl ExperimentRun {
    pub fn final_rel_error(&self) -> f64 {
        self.outcome.final_rel_error.unwrap_or(f64::NAN)
    }

    pub fn diverged(&self) -> bool {
        self.outcome.trace.termination.is_divergence()
    }
}

/// Solver settings implied by an experiment config for an operator of norm `op_norm`.
pub fn solver_config(cfg: &ExperimentConfig, op_norm: f64, delta_abs: f64) -> Result<SolverConfig> {
    let psi = IndexFunction::new(cfg.psi_c, cfg.psi_p)?;
    let mut s = SolverConfig::for_problem(op_norm, delta_abs, &psi)?;
    s.mu = cfg.mu_scale / (op_norm * op_norm);
    s.allow_unstable_step = cfg.allow_unstable_step;
    s.lambda = cfg.lambda;
    if let Some(nu) = cfg.nu {
        s.nu = nu;
    }
    s.inner_iters = cfg.inner_iters;
    s.max_outer = cfg.max_outer;
    s.alpha_schedule = match cfg.alpha_schedule {
        AlphaKind::Harmonic => AlphaSchedule::Harmonic,
        AlphaKind::Constant => AlphaSchedule::Constant(cfg.alpha),
    };
    s.stopping = match cfg.stopping {
        StoppingKind::Mdp => Stopping::Mdp(MdpConfig::new(cfg.tau_lo, cfg.tau_hi, delta_abs)?),
        StoppingKind::RelError => Stopping::RelError { epsilon: cfg.epsilon },
        StoppingKind::MaxIters => Stopping::MaxIters,
    };
    s.validate()?;
    Ok(s)
}

/// Runs the reconstruction described by `cfg` without touching the disk.
pub fn simulate(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    let start = Instant::now();
    let phantom = make_phantom(cfg.phantom, cfg.size, cfg.size)?;
    let op = RadonOperator::new(cfg.size, cfg.size, cfg.n_angles(), cfg.n_detectors())?;
    let clean = bregtv_core::LinearOperator::apply(&op, phantom.data())?;
    let measurement = add_noise(&clean, cfg.delta_rel, cfg.seed)?;
    let sinogram = op.to_sinogram(measurement.v_delta.clone())?;
    let norm = operator_norm(&op, NORM_TOL, NORM_MAX_ITER)?;
    let solver = solver_config(cfg, norm.value, measurement.delta_abs)?;

    let outcome = match cfg.timing {
        Timing::Off => Solver::new(
            &op,
            phantom.grid(),
            &measurement.v_delta,
            solver.clone(),
            Some(&phantom),
        )?
        .run()?,
        Timing::Wall => Solver::with_clock(
            &op,
            phantom.grid(),
            &measurement.v_delta,
            solver.clone(),
            Some(&phantom),
            WallClock(Instant::now()),
        )?
        .run()?,
    };
    Ok(ExperimentRun {
        phantom,
        measurement,
        sinogram,
        op_norm: norm.value,
        solver,
        outcome,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Where the artifacts of a run went, plus the headline numbers.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub output_dir: PathBuf,
    pub run: ExperimentRun,
    pub summary: String,
}

impl ExperimentReport {
    pub fn diverged(&self) -> bool {
        self.run.diverged()
    }
}

pub fn summary_text(cfg: &ExperimentConfig, run: &ExperimentRun) -> String {
    let t = &run.outcome.trace;
    let mut s = String::new();
    let f = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
    let _ = writeln!(s, "termination = {}", t.termination.label());
    if let bregtv_core::Termination::Diverged { iteration, reason } = &t.termination {
        let _ = writeln!(s, "divergence = iteration {iteration}: {reason}");
    }
    let _ = writeln!(s, "iterations = {}", t.records.len());
    let _ = writeln!(s, "final_rel_error = {}", f(run.outcome.final_rel_error));
    let _ = writeln!(s, "min_rel_error = {}", f(t.min_rel_error()));
    let _ = writeln!(s, "initial_rel_error = {}", f(t.initial_rel_error));
    let _ = writeln!(s, "final_discrepancy = {}", f(t.last().map(|r| r.discrepancy)));
    let _ = writeln!(s, "initial_discrepancy = {}", t.initial_discrepancy);
    let _ = writeln!(s, "delta_rel = {}", run.measurement.delta_rel);
    let _ = writeln!(s, "delta_abs = {}", run.measurement.delta_abs);
    let _ = writeln!(s, "phantom = {} {}x{}", cfg.phantom, cfg.size, cfg.size);
    let _ = writeln!(
        s,
        "operator = {}x{} ({} angles x {} detectors)",
        run.sinogram.data.len(),
        run.phantom.len(),
        run.sinogram.n_angles,
        run.sinogram.n_detectors
    );
    let _ = writeln!(s, "op_norm = {}", run.op_norm);
    let _ = writeln!(s, "mu = {}", run.solver.mu);
    let _ = writeln!(s, "nu = {}", run.solver.nu);
    let _ = writeln!(s, "lambda = {}", run.solver.lambda);
    let _ = writeln!(s, "inner_iters = {}", run.solver.inner_iters);
    let _ = writeln!(s, "max_outer = {}", run.solver.max_outer);
    let m = &t.monitor;
    let _ = writeln!(
        s,
        "parameter_monitor = checked {} relaxation {} contraction {} extrapolation {}",
        m.checked, m.relaxation, m.contraction, m.extrapolation
    );
    let _ = writeln!(s, "wall_ms = {:.1}", run.wall_ms);
    let _ = writeln!(s, "within_budget = {}", run.wall_ms <= cfg.budget_s * 1e3);
    s
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Simulates and writes `phantom.pgm`, `sinogram.csv`, `recon.pgm`,
/// `recon.csv`, `trace.csv` and `summary.txt` into the output directory.
/// Divergence is not an error here; callers check [`ExperimentReport::diverged`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let run = simulate(cfg)?;
    let dir = cfg.resolved_output_dir();
    ensure_dir(&dir)?;
    formats::write_pgm(&dir.join("phantom.pgm"), &run.phantom, PgmEncoding::Binary)?;
    formats::write_sinogram(&dir.join("sinogram.csv"), &run.sinogram)?;
    formats::write_pgm(&dir.join("recon.pgm"), &run.outcome.u, PgmEncoding::Binary)?;
    formats::write_image_csv(&dir.join("recon.csv"), &run.outcome.u)?;
    formats::write_trace(&dir.join("trace.csv"), &run.outcome.trace)?;
    let summary = summary_text(cfg, &run);
    let path = dir.join("summary.txt");
    fs::write(&path, &summary).map_err(|e| Error::io(&path, e))?;
    Ok(ExperimentReport {
        output_dir: dir,
        run,
        summary,
    })
}
