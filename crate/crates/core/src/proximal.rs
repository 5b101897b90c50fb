//! Proximal maps used by the primal-dual iteration.
//!
//! Both functions involved are indicators, so both proxes are projections:
//! onto the nonnegative orthant (primal constraint `h`) and onto the ℓ∞ unit
//! ball (the conjugate of `g = ‖·‖₁`).

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{DualField, Grid, ImageVector};

/// Projection onto `{u ≥ 0}`. Equals `prox_{μh}` for every `μ > 0`.
pub fn prox_indicator_nonneg(v: &ImageVector) -> ImageVector {
    let mut out = v.clone();
    project_nonneg(out.data_mut());
    out
}

pub fn project_nonneg(v: &mut [f64]) {
    for x in v {
        // NaN is left in place
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// `prox_{νg*}` for `g = ‖·‖₁`: entrywise clamp to `[-1, 1]`.
///
/// `nu` does not change the result; it is validated for signature parity
/// with the dual step.
pub fn prox_dual_linf(w: &DualField, nu: f64) -> Result<DualField> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::param("dual step nu must be positive and finite"));
    }
    let mut out = w.clone();
    clamp_unit(&mut out.dx);
    clamp_unit(&mut out.dy);
    Ok(out)
}

pub fn clamp_unit(v: &mut [f64]) {
    for x in v {
        *x = x.clamp(-1.0, 1.0);
    }
}

/// A closed convex function with a computable prox, on flat vectors.
pub trait ProxFunction {
    /// Function value; `f64::INFINITY` outside the domain.
    fn value(&self, x: &[f64]) -> f64;
    fn prox(&self, v: &[f64]) -> Vec<f64>;
}

/// Indicator of the nonnegative orthant.
#[derive(Debug, Clone, Copy, Default)]
pub struct NonnegIndicator;

impl ProxFunction for NonnegIndicator {
    fn value(&self, x: &[f64]) -> f64 {
        if x.iter().all(|&t| t >= 0.0) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        project_nonneg(&mut out);
        out
    }
}

/// `ν·ι_{‖·‖∞ ≤ 1}`, which is the same indicator for every `ν > 0`.
#[derive(Debug, Clone, Copy)]
pub struct LinfBallIndicator {
    pub nu: f64,
}

impl ProxFunction for LinfBallIndicator {
    fn value(&self, x: &[f64]) -> f64 {
        if x.iter().all(|t| t.abs() <= 1.0) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        clamp_unit(&mut out);
        out
    }
}

/// Outcome of [`prox_update_inequality_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxUpdateCheck {
    pub holds: bool,
    /// `RHS − LHS`; `+∞` when `g(y) = +∞`.
    pub slack: f64,
    /// `y` lies outside the domain of `g`, so the bound holds vacuously.
    pub trivial: bool,
}

/// Checks, for `x⁺ = prox_g(x⁻ + Δ)`,
///
/// `‖x⁺−y‖² ≤ ‖x⁻−y‖² − ‖x⁺−x⁻‖² + 2⟨x⁺−y, Δ⟩ + 2g(y) − 2g(x⁺)`
///
/// with `tol` as the admissible negative slack.
pub fn prox_update_inequality_check<G: ProxFunction + ?Sized>(
    g: &G,
    x_minus: &[f64],
    delta: &[f64],
    y: &[f64],
    tol: f64,
) -> Result<ProxUpdateCheck> {
    if x_minus.len() != delta.len() || x_minus.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x_minus.len(),
            found: if delta.len() != x_minus.len() {
                delta.len()
            } else {
                y.len()
            },
        });
    }
    let g_y = g.value(y);
    if g_y == f64::INFINITY {
        return Ok(ProxUpdateCheck {
            holds: true,
            slack: f64::INFINITY,
            trivial: true,
        });
    }
    let shifted: Vec<f64> = x_minus.iter().zip(delta).map(|(a, d)| a + d).collect();
    let x_plus = g.prox(&shifted);
    let g_plus = g.value(&x_plus);

    let lhs = sq_dist(&x_plus, y);
    let xp_minus_y = linalg::sub(&x_plus, y);
    let rhs = sq_dist(x_minus, y) - sq_dist(&x_plus, x_minus) + 2.0 * linalg::dot(&xp_minus_y, delta) + 2.0 * g_y
        - 2.0 * g_plus;
    let slack = rhs - lhs;
    Ok(ProxUpdateCheck {
        holds: slack >= -tol,
        slack,
        trivial: false,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Flat view of a dual field, `dx` then `dy`.
pub fn flatten_field(w: &DualField) -> Vec<f64> {
    w.iter().copied().collect()
}

pub fn unflatten_field(grid: Grid, flat: &[f64]) -> Result<DualField> {
    let n = grid.len();
    if flat.len() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            found: flat.len(),
        });
    }
    DualField::new(grid, flat[..n].to_vec(), flat[n..].to_vec())
}
