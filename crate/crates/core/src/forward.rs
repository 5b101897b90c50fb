//! Linear forward operators `T`, spectral-norm estimation and noise injection.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::linalg;

/// A matrix-free linear map `T : ℝᴺ → ℝᴹ` together with its transpose.
///
/// Implementations must be exact transposes of each other and must sum in
/// a fixed order, so results do not depend on scheduling.
pub trait LinearOperator {
    /// `N`, the number of unknowns.
    fn in_dim(&self) -> usize;
    /// `M`, the number of measurements.
    fn out_dim(&self) -> usize;

    /// `y ← Tx`. Slices must have lengths `N` and `M`.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);
    /// `x ← Tᵀy`.
    fn apply_adjoint_into(&self, y: &[f64], x: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.in_dim(), x.len())?;
        let mut y = vec![0.0; self.out_dim()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.out_dim(), y.len())?;
        let mut x = vec![0.0; self.in_dim()];
        self.apply_adjoint_into(y, &mut x);
        Ok(x)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_into(x, y)
    }
    fn apply_adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        (**self).apply_adjoint_into(y, x)
    }
}

/// Row-major dense `M × N` matrix operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseOperator {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::input("dense operator must be non-empty"));
        }
        check_len(rows * cols, entries.len())?;
        if !linalg::all_finite(&entries) {
            return Err(Error::input("dense operator has non-finite entries"));
        }
        Ok(DenseOperator { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::input("ragged dense matrix"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            e[i * n + i] = 1.0;
        }
        Self::new(n, n, e)
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut e = vec![0.0; n * n];
        for (i, &x) in d.iter().enumerate() {
            e[i * n + i] = x;
        }
        Self::new(n, n, e)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

impl LinearOperator for DenseOperator {
    fn in_dim(&self) -> usize {
        self.cols
    }

    fn out_dim(&self) -> usize {
        self.rows
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(self.entries.chunks_exact(self.cols)) {
            *yi = linalg::dot(row, x);
        }
    }

    fn apply_adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        x.fill(0.0);
        for (yi, row) in y.iter().zip(self.entries.chunks_exact(self.cols)) {
            linalg::axpy(*yi, row, x);
        }
    }
}

/// Stacked line-integral projections, `n_angles` rows of `n_detectors` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_angles: usize,
    pub n_detectors: usize,
    pub data: Vec<f64>,
}

impl Sinogram {
    pub fn new(n_angles: usize, n_detectors: usize, data: Vec<f64>) -> Result<Self> {
        if n_angles == 0 || n_detectors == 0 {
            return Err(Error::input("sinogram dimensions must be positive"));
        }
        check_len(n_angles * n_detectors, data.len())?;
        Ok(Sinogram {
            n_angles,
            n_detectors,
            data,
        })
    }

    pub fn row(&self, angle: usize) -> &[f64] {
        &self.data[angle * self.n_detectors..(angle + 1) * self.n_detectors]
    }
}

/// Pixel-driven parallel-beam Radon transform.
///
/// Angles are `θ_a = π·a / n_angles`, `a = 0..n_angles`. For every angle each
/// pixel centre is projected onto the detector axis and its value is split
/// between the two nearest bins by linear interpolation. Bins span the grid
/// diagonal, so every pixel lands on the detector. The adjoint uses the same
/// weights, which makes it the exact transpose.
#[derive(Debug, Clone)]
pub struct RadonOperator {
    width: usize,
    height: usize,
    n_angles: usize,
    n_detectors: usize,
    /// Left bin per (angle, pixel); may be `-1` or `n_detectors - 1`.
    lower: Vec<i32>,
    /// Weight of the right bin per (angle, pixel).
    frac: Vec<f64>,
}

impl RadonOperator {
    pub fn new(width: usize, height: usize, n_angles: usize, n_detectors: usize) -> Result<Self> {
        if n_angles == 0 {
            return Err(Error::input("radon operator needs at least one angle"));
        }
        if width == 0 || height == 0 || n_detectors == 0 {
            return Err(Error::input("radon dimensions must be positive"));
        }
        let n = width * height;
        let spacing = libm::hypot(width as f64, height as f64) / n_detectors as f64;
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        let centre_bin = (n_detectors as f64 - 1.0) / 2.0;

        let mut lower = Vec::with_capacity(n_angles * n);
        let mut frac = Vec::with_capacity(n_angles * n);
        for a in 0..n_angles {
            let theta = PI * a as f64 / n_angles as f64;
            let (s, c) = (libm::sin(theta), libm::cos(theta));
            for r in 0..height {
                let y = cy - r as f64;
                for col in 0..width {
                    let x = col as f64 - cx;
                    let pos = (x * c + y * s) / spacing + centre_bin;
                    let lo = libm::floor(pos);
                    lower.push(lo as i32);
                    frac.push(pos - lo);
                }
            }
        }
        Ok(RadonOperator {
            width,
            height,
            n_angles,
            n_detectors,
            lower,
            frac,
        })
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn to_sinogram(&self, data: Vec<f64>) -> Result<Sinogram> {
        Sinogram::new(self.n_angles, self.n_detectors, data)
    }
}

impl LinearOperator for RadonOperator {
    fn in_dim(&self) -> usize {
        self.width * self.height
    }

    fn out_dim(&self) -> usize {
        self.n_angles * self.n_detectors
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.in_dim();
        let nd = self.n_detectors as i32;
        y.fill(0.0);
        for a in 0..self.n_angles {
            let row = &mut y[a * self.n_detectors..(a + 1) * self.n_detectors];
            let lower = &self.lower[a * n..(a + 1) * n];
            let frac = &self.frac[a * n..(a + 1) * n];
            for k in 0..n {
                let (lo, f, v) = (lower[k], frac[k], x[k]);
                if lo >= 0 && lo < nd {
                    row[lo as usize] += (1.0 - f) * v;
                }
                if lo + 1 >= 0 && lo + 1 < nd {
                    row[(lo + 1) as usize] += f * v;
                }
            }
        }
    }

    fn apply_adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        let n = self.in_dim();
        let nd = self.n_detectors as i32;
        x.fill(0.0);
        for a in 0..self.n_angles {
            let row = &y[a * self.n_detectors..(a + 1) * self.n_detectors];
            let lower = &self.lower[a * n..(a + 1) * n];
            let frac = &self.frac[a * n..(a + 1) * n];
            for k in 0..n {
                let (lo, f) = (lower[k], frac[k]);
                let mut acc = 0.0;
                if lo >= 0 && lo < nd {
                    acc += (1.0 - f) * row[lo as usize];
                }
                if lo + 1 >= 0 && lo + 1 < nd {
                    acc += f * row[(lo + 1) as usize];
                }
                x[k] += acc;
            }
        }
    }
}

/// Result of [`operator_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    /// Estimate of the largest singular value `‖T‖`.
    pub value: f64,
    pub iterations: usize,
    /// `false` when `max_iter` ran out before the relative change fell below `tol`.
    pub converged: bool,
}

pub const NORM_TOL: f64 = 1e-8;
pub const NORM_MAX_ITER: usize = 5000;
const NORM_SEED: u64 = 0x5eed_f00d;

/// Power iteration on `TᵀT` from a fixed pseudo-random start.
///
/// With `x` the unit iterate the returned value is `√‖TᵀTx‖`, which is at
/// least the square root of the Rayleigh quotient `⟨x, TᵀTx⟩` and at most `‖T‖`.
pub fn operator_norm<T: LinearOperator + ?Sized>(op: &T, tol: f64, max_iter: usize) -> Result<NormEstimate> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::param("operator_norm needs tol > 0 and max_iter > 0"));
    }
    let n = op.in_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(NORM_SEED);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nx = linalg::norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    let mut tx = vec![0.0; op.out_dim()];
    let mut y = vec![0.0; n];
    let mut prev = 0.0;
    for it in 1..=max_iter {
        op.apply_into(&x, &mut tx);
        op.apply_adjoint_into(&tx, &mut y);
        let ny = linalg::norm2(&y);
        if ny == 0.0 {
            // x lies in the null space of T
            return Ok(NormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            });
        }
        if it > 1 && (ny - prev).abs() <= tol * ny {
            return Ok(NormEstimate {
                value: libm::sqrt(ny),
                iterations: it,
                converged: true,
            });
        }
        prev = ny;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
    }
    Ok(NormEstimate {
        value: libm::sqrt(prev),
        iterations: max_iter,
        converged: false,
    })
}

/// Noisy data `v^δ = v + δξ` with the exact noise norm recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyMeasurement {
    pub v_delta: Vec<f64>,
    pub v_clean: Vec<f64>,
    /// `‖v^δ − v‖`, the absolute level handed to the discrepancy principle.
    pub delta_abs: f64,
    /// `delta_abs / ‖v‖`.
    pub delta_rel: f64,
}

/// Adds i.i.d. Gaussian noise rescaled so that `‖v^δ − v‖ = delta_rel·‖v‖`
/// holds exactly (up to rounding). Deterministic in `seed`.
pub fn add_noise(v_clean: &[f64], delta_rel: f64, seed: u64) -> Result<NoisyMeasurement> {
    if !(delta_rel >= 0.0) || !delta_rel.is_finite() {
        return Err(Error::param(format!("delta_rel must be >= 0, got {delta_rel}")));
    }
    let clean_norm = linalg::norm2(v_clean);
    let delta_abs = delta_rel * clean_norm;
    let mut v_delta = v_clean.to_vec();
    if delta_abs > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi: Vec<f64> = (0..v_clean.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let scale = delta_abs / linalg::norm2(&xi);
        linalg::axpy(scale, &xi, &mut v_delta);
    }
    Ok(NoisyMeasurement {
        v_delta,
        v_clean: v_clean.to_vec(),
        delta_abs,
        delta_rel,
    })
}
