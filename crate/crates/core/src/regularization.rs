//! Index functions, Bregman distances, the penalized objective and
//! discrepancy-principle diagnostics.
//!
//! The bound checks in this module report slack values; they are
//! asymptotic statements with unknown constants and are never enforced by
//! the solver.

use alloc::format;

use crate::error::{check_len, Error, Result};
use crate::forward::LinearOperator;
use crate::linalg;
use crate::operators::{divergence_adjoint_on, tv_value, DualField, ImageVector};

/// `Ψ(t) = c·t^p` with `c > 0` and `p ∈ (0, 1]`: concave, increasing, `Ψ(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexFunction {
    c: f64,
    p: f64,
}

impl IndexFunction {
    pub fn new(c: f64, p: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::param(format!("index function scale must be positive, got {c}")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::param(format!(
                "index function exponent must be in (0, 1], got {p}"
            )));
        }
        Ok(IndexFunction { c, p })
    }

    /// `Ψ(t) = √t`.
    pub fn sqrt() -> Self {
        IndexFunction { c: 1.0, p: 0.5 }
    }

    pub fn scale(&self) -> f64 {
        self.c
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    /// `Ψ(t)` for `t ≥ 0`.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.c * libm::pow(t, self.p)
    }
}

impl Default for IndexFunction {
    fn default() -> Self {
        Self::sqrt()
    }
}

/// Discrepancy band radii `1 < τ̲ ≤ τ̄` and the absolute noise level `δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpConfig {
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub delta_abs: f64,
}

impl MdpConfig {
    pub const DEFAULT_TAU_LO: f64 = 1.1;
    pub const DEFAULT_TAU_HI: f64 = 1.5;

    pub fn new(tau_lo: f64, tau_hi: f64, delta_abs: f64) -> Result<Self> {
        let cfg = MdpConfig {
            tau_lo,
            tau_hi,
            delta_abs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_delta(delta_abs: f64) -> Result<Self> {
        Self::new(Self::DEFAULT_TAU_LO, Self::DEFAULT_TAU_HI, delta_abs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_lo > 1.0 && self.tau_lo <= self.tau_hi && self.tau_hi.is_finite()) {
            return Err(Error::param(format!(
                "discrepancy radii must satisfy 1 < tau_lo <= tau_hi < inf, got {} / {}",
                self.tau_lo, self.tau_hi
            )));
        }
        if !(self.delta_abs >= 0.0) || !self.delta_abs.is_finite() {
            return Err(Error::param("noise level must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Position of a discrepancy relative to `[τ̲δ, τ̄δ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdpBand {
    Below,
    Inside,
    Above,
}

/// Classifies a discrepancy; the band end points count as inside.
pub fn mdp_band_check(discrepancy: f64, cfg: &MdpConfig) -> MdpBand {
    if discrepancy < cfg.tau_lo * cfg.delta_abs {
        MdpBand::Below
    } else if discrepancy > cfg.tau_hi * cfg.delta_abs {
        MdpBand::Above
    } else {
        MdpBand::Inside
    }
}

/// `D_J(u, u_ref) = J(u) − J(u_ref) − ⟨Dᵀq_ref, u − u_ref⟩` with `J = TV`.
///
/// `q_ref` should lie in `∂‖Du_ref‖₁`; only its range is checked, so a field
/// that disagrees with the signs of `Du_ref` can give negative values.
pub fn bregman_distance(u: &ImageVector, u_ref: &ImageVector, q_ref: &DualField) -> Result<f64> {
    if u.grid() != u_ref.grid() {
        return Err(Error::DimensionMismatch {
            expected: u_ref.len(),
            found: u.len(),
        });
    }
    if q_ref.iter().any(|q| !(q.abs() <= 1.0)) {
        return Err(Error::input("subgradient field entries must lie in [-1, 1]"));
    }
    let dq = divergence_adjoint_on(u_ref.grid(), q_ref)?;
    let diff = linalg::sub(u.data(), u_ref.data());
    Ok(tv_value(u) - tv_value(u_ref) - linalg::dot(dq.data(), &diff))
}

/// `F_α(u, v^δ) = ½‖Tu − v^δ‖² + α D_J(u, u₀) + h(u)` where `w0 ∈ ∂‖Du₀‖₁`.
///
/// Returns `+∞` when `u` has a negative entry.
pub fn objective_f<T: LinearOperator + ?Sized>(
    u: &ImageVector,
    v_delta: &[f64],
    op: &T,
    alpha: f64,
    u0: &ImageVector,
    w0: &DualField,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::param("alpha must be positive"));
    }
    check_len(op.in_dim(), u.len())?;
    check_len(op.out_dim(), v_delta.len())?;
    if !u.is_nonnegative() {
        return Ok(f64::INFINITY);
    }
    let tu = op.apply(u.data())?;
    let misfit = linalg::dist2(&tu, v_delta);
    Ok(0.5 * misfit * misfit + alpha * bregman_distance(u, u0, w0)?)
}

/// `α_i = 1/i`.
pub fn alpha_schedule(i: usize) -> Result<f64> {
    if i == 0 {
        return Err(Error::input("alpha schedule is indexed from 1"));
    }
    Ok(1.0 / i as f64)
}

/// Slack report from a bound diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub holds: bool,
    /// `RHS − LHS`.
    pub slack: f64,
}

/// Checks `δ²(τ̲ − 1)/(2α) ≤ Ψ(δ)`, equivalently `δ²/(2α) ≤ Ψ(δ)/(τ̲ − 1)`.
pub fn alpha_lower_bound_check(alpha: f64, delta_abs: f64, psi: &IndexFunction, tau_lo: f64) -> Result<BoundCheck> {
    if !(alpha > 0.0) {
        return Err(Error::param("alpha must be positive"));
    }
    if !(tau_lo > 1.0) {
        return Err(Error::param("tau_lo must exceed 1"));
    }
    let lhs = delta_abs * delta_abs * (tau_lo - 1.0) / (2.0 * alpha);
    let slack = psi.eval(delta_abs) - lhs;
    Ok(BoundCheck {
        holds: slack >= 0.0,
        slack,
    })
}

/// `ᾱ = Φ(δ) = δ²/Ψ(δ)`.
pub fn alpha_upper_bound(delta_abs: f64, psi: &IndexFunction) -> Result<f64> {
    if !(delta_abs > 0.0) || !delta_abs.is_finite() {
        return Err(Error::input("alpha upper bound needs a positive noise level"));
    }
    Ok(delta_abs * delta_abs / psi.eval(delta_abs))
}

/// Which error measure the source-condition residual uses on its left side.
#[derive(Debug, Clone, Copy)]
pub enum VscForm<'a> {
    /// `σ‖u − u†‖`
    Norm,
    /// `σ D_J(u, u†)` with the given subgradient of `J` at `u†`.
    Bregman(&'a DualField),
}

/// `J(u) − J(u†) + Ψ(‖Tu − Tu†‖) − σ·E(u, u†)`; nonnegative when the
/// variational source condition holds at `u`.
pub fn vsc_residual<T: LinearOperator + ?Sized>(
    u: &ImageVector,
    u_dagger: &ImageVector,
    op: &T,
    psi: &IndexFunction,
    sigma: f64,
    form: VscForm<'_>,
) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::param("sigma must lie in (0, 1]"));
    }
    check_len(op.in_dim(), u.len())?;
    check_len(u.len(), u_dagger.len())?;
    let diff = linalg::sub(u.data(), u_dagger.data());
    let t_diff = op.apply(&diff)?;
    let lhs = match form {
        VscForm::Norm => sigma * linalg::norm2(&diff),
        VscForm::Bregman(q) => sigma * bregman_distance(u, u_dagger, q)?,
    };
    Ok(tv_value(u) - tv_value(u_dagger) + psi.eval(linalg::norm2(&t_diff)) - lhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::DenseOperator;
    use crate::operators::{gradient, tv_subgradient, Grid};
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn index_function_validation() {
        assert!(IndexFunction::new(1.0, 0.0).is_err());
        assert!(IndexFunction::new(1.0, 1.5).is_err());
        assert!(IndexFunction::new(0.0, 0.5).is_err());
        let psi = IndexFunction::new(2.0, 1.0).unwrap();
        assert_eq!(psi.eval(0.0), 0.0);
        assert_eq!(psi.eval(3.0), 6.0);
    }

    #[test]
    fn band_classification() {
        let cfg = MdpConfig::new(1.1, 1.5, 1.0).unwrap();
        assert_eq!(mdp_band_check(1.3, &cfg), MdpBand::Inside);
        assert_eq!(mdp_band_check(0.5, &cfg), MdpBand::Below);
        assert_eq!(mdp_band_check(2.0, &cfg), MdpBand::Above);
        assert_eq!(mdp_band_check(1.1, &cfg), MdpBand::Inside);
        assert_eq!(mdp_band_check(1.5, &cfg), MdpBand::Inside);
        assert!(MdpConfig::new(1.0, 1.5, 1.0).is_err());
        assert!(MdpConfig::new(1.6, 1.5, 1.0).is_err());
    }

    #[test]
    fn schedule() {
        assert_eq!(alpha_schedule(1).unwrap(), 1.0);
        assert_eq!(alpha_schedule(4).unwrap(), 0.25);
        assert!(alpha_schedule(0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let i = rng.random_range(1..1_000_000);
            assert!(alpha_schedule(i + 1).unwrap() < alpha_schedule(i).unwrap());
        }
    }

    #[test]
    fn lower_bound_examples() {
        let psi = IndexFunction::sqrt();
        let c = alpha_lower_bound_check(0.3, 0.0, &psi, 1.1).unwrap();
        assert!(c.holds && c.slack == 0.0);

        let c = alpha_lower_bound_check(1e-4, 1e-4, &psi, 1.1).unwrap();
        // δ²(τ̲−1)/(2α) = 1e-8·0.1/2e-4 = 5e-6 against Ψ(δ) = 1e-2
        assert!(c.holds);
        assert!((c.slack - (1e-2 - 5e-6)).abs() < 1e-15);

        let c = alpha_lower_bound_check(1e-12, 1e-4, &psi, 1.1).unwrap();
        assert!(!c.holds && c.slack < 0.0);
    }

    #[test]
    fn upper_bound_examples() {
        let lin = IndexFunction::new(1.0, 1.0).unwrap();
        assert!((alpha_upper_bound(0.01, &lin).unwrap() - 0.01).abs() < 1e-15);
        let sq = IndexFunction::sqrt();
        assert!((alpha_upper_bound(0.01, &sq).unwrap() - 1e-3).abs() < 1e-15);
        assert!(alpha_upper_bound(0.0, &sq).is_err());
    }

    #[test]
    fn upper_bound_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let psi = IndexFunction::new(rng.random_range(0.1..5.0), rng.random_range(0.05..=1.0)).unwrap();
            let a = rng.random_range(1e-6..10.0);
            let b = a * rng.random_range(1.001..3.0);
            assert!(alpha_upper_bound(b, &psi).unwrap() > alpha_upper_bound(a, &psi).unwrap());
        }
    }

    #[test]
    fn bregman_cases() {
        let grid = Grid::new(2, 1).unwrap();
        let u = ImageVector::new(grid, vec![0.0, 3.0]).unwrap();
        let c = ImageVector::constant(grid, 1.0);
        assert_eq!(bregman_distance(&u, &u, &tv_subgradient(&u)).unwrap(), 0.0);
        assert_eq!(bregman_distance(&u, &c, &tv_subgradient(&c)).unwrap(), tv_value(&u));

        // asymmetry witness
        let a = ImageVector::new(grid, vec![0.0, 1.0]).unwrap();
        let b = ImageVector::new(grid, vec![1.0, 1.0]).unwrap();
        let d_ab = bregman_distance(&a, &b, &tv_subgradient(&b)).unwrap();
        let d_ba = bregman_distance(&b, &a, &tv_subgradient(&a)).unwrap();
        // D(a,b) = 1 − 0 − 0 = 1; D(b,a) = 0 − 1 − ⟨Dᵀq, b − a⟩ = −1 − (1·(0 − 1)) = 0
        assert_eq!(d_ab, 1.0);
        assert_eq!(d_ba, 0.0);

        let bad = DualField::new(grid, vec![1.5, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(bregman_distance(&u, &c, &bad).is_err());
    }

    #[test]
    fn bregman_nonnegative_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = Grid::new(5, 4).unwrap();
        for _ in 0..500 {
            let u = ImageVector::new(grid, (0..20).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap();
            let mut r: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..2.0)).collect();
            r[3] = r[2];
            let r = ImageVector::new(grid, r).unwrap();
            // any selection from the subdifferential, random inside [-1,1] where Dr = 0
            let mut q = tv_subgradient(&r);
            let g = gradient(&r);
            for (qi, gi) in q.dx.iter_mut().zip(&g.dx) {
                if *gi == 0.0 {
                    *qi = rng.random_range(-1.0..=1.0);
                }
            }
            assert!(bregman_distance(&u, &r, &q).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn objective_cases() {
        let grid = Grid::new(2, 1).unwrap();
        let id = DenseOperator::identity(2).unwrap();
        let neg = ImageVector::new(grid, vec![-0.1, 1.0]).unwrap();
        let c = ImageVector::constant(grid, 0.7);
        let w0 = tv_subgradient(&c);
        assert_eq!(
            objective_f(&neg, &[0.0, 0.0], &id, 1.0, &c, &w0).unwrap(),
            f64::INFINITY
        );
        assert_eq!(objective_f(&c, &[0.7, 0.7], &id, 1.0, &c, &w0).unwrap(), 0.0);
        assert!(objective_f(&c, &[0.7, 0.7], &id, 0.0, &c, &w0).is_err());
    }

    #[test]
    fn objective_matches_resummation() {
        use crate::oracle::objective_by_resummation;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = Grid::new(3, 2).unwrap();
        for _ in 0..50 {
            let t: Vec<f64> = (0..4 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let op = DenseOperator::new(4, 6, t.clone()).unwrap();
            let u = ImageVector::new(grid, (0..6).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
            let u0 = ImageVector::new(grid, (0..6).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let alpha = rng.random_range(0.01..2.0);
            let f = objective_f(&u, &v, &op, alpha, &u0, &tv_subgradient(&u0)).unwrap();
            let g = objective_by_resummation(4, &t, &v, alpha, &u0, u.data());
            assert!((f - g).abs() <= 1e-12 * f.abs().max(1.0), "{f} vs {g}");
        }
    }

    #[test]
    fn vsc_at_truth_is_zero() {
        let grid = Grid::new(3, 3).unwrap();
        let op = DenseOperator::identity(9).unwrap();
        let u = ImageVector::new(grid, (0..9).map(|i| i as f64 * 0.1).collect()).unwrap();
        let psi = IndexFunction::sqrt();
        assert_eq!(vsc_residual(&u, &u, &op, &psi, 1.0, VscForm::Norm).unwrap(), 0.0);
        let q = tv_subgradient(&u);
        assert_eq!(vsc_residual(&u, &u, &op, &psi, 0.5, VscForm::Bregman(&q)).unwrap(), 0.0);
        assert!(vsc_residual(&u, &u, &op, &psi, 0.0, VscForm::Norm).is_err());
    }
}
