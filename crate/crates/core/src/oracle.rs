//! Brute-force validators for the test suites.
//!
//! Nothing here calls into the modules it checks: matrices are assembled
//! from explicit stencils, objectives are re-summed from scratch and minima
//! come from lattice enumeration. Every oracle refuses inputs beyond a small
//! size cap so it stays exact and fast.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::operators::ImageVector;

pub const GRADIENT_MATRIX_CAP: usize = 64;
pub const LATTICE_DIM_CAP: usize = 3;
pub const EIGEN_DIM_CAP: usize = 64;
/// Upper bound on lattice points visited by [`exhaustive_minimizer_f`].
pub const LATTICE_POINT_CAP: usize = 50_000_000;

/// Row-major dense matrix used only by the oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.entries[r * self.cols + c] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * x[c]).sum())
            .collect()
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c) * y[r]).sum())
            .collect()
    }
}

/// Explicit `2N × N` forward-difference matrix: rows `0..N` hold the
/// x-differences, rows `N..2N` the y-differences.
pub fn dense_gradient_matrix(width: usize, height: usize) -> Result<DenseMatrix> {
    let n = width * height;
    if n > GRADIENT_MATRIX_CAP {
        return Err(Error::SizeCapExceeded {
            size: n,
            cap: GRADIENT_MATRIX_CAP,
        });
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    let mut m = DenseMatrix::zeros(2 * n, n);
    for r in 0..height {
        for c in 0..width {
            let p = r * width + c;
            if c + 1 < width {
                m.set(p, p, -1.0);
                m.set(p, p + 1, 1.0);
            }
            if r + 1 < height {
                m.set(n + p, p, -1.0);
                m.set(n + p, p + width, 1.0);
            }
        }
    }
    Ok(m)
}

/// Axis-aligned search box `[lo, hi]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeBox {
    pub lo: f64,
    pub hi: f64,
}

impl LatticeBox {
    pub const fn new(lo: f64, hi: f64) -> Self {
        LatticeBox { lo, hi }
    }
}

/// Lattice minimizer of `g(x) + ½‖x − v‖²` over `box^d`, `d ≤ 3`.
///
/// The search is coarse-to-fine: an exhaustive pass over the whole box on a
/// coarse lattice, then repeated exhaustive passes on 5× finer lattices
/// restricted to a ±4-cell window around the previous winner, ending at
/// `spacing`. The objective is 1-strongly convex, so the window always
/// contains the true minimizer once the coarse winner is within a cell of it.
/// `g` may return `+∞` outside its domain.
pub fn lattice_prox_search<G>(g: G, v: &[f64], bounds: LatticeBox, spacing: f64) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> f64,
{
    let d = v.len();
    if d > LATTICE_DIM_CAP {
        return Err(Error::SizeCapExceeded {
            size: d,
            cap: LATTICE_DIM_CAP,
        });
    }
    if !(spacing > 0.0) || !(bounds.hi > bounds.lo) {
        return Err(Error::InvalidParameter(
            "lattice spacing and box must be positive".into(),
        ));
    }
    if d == 0 {
        return Ok(Vec::new());
    }
    let objective = |x: &[f64]| {
        let gx = g(x);
        if gx == f64::INFINITY {
            return f64::INFINITY;
        }
        gx + 0.5 * x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };

    // levels: spacing·5^k, the coarsest having at most ~64 cells across the box
    let width = bounds.hi - bounds.lo;
    let mut levels = vec![spacing];
    while width / levels[levels.len() - 1] > 64.0 {
        let next = levels[levels.len() - 1] * 5.0;
        levels.push(next);
    }
    levels.reverse();

    let mut centre: Option<Vec<f64>> = None;
    for (li, &h) in levels.iter().enumerate() {
        // lattice anchored at bounds.lo with step h
        let steps_total = libm::floor(width / h + 1e-9) as i64;
        let (lo_idx, hi_idx): (Vec<i64>, Vec<i64>) = match &centre {
            None => (vec![0; d], vec![steps_total; d]),
            Some(c) => {
                let r = (4.0 * levels[li - 1] / h) as i64;
                c.iter()
                    .map(|&ci| {
                        let k = libm::round((ci - bounds.lo) / h) as i64;
                        ((k - r).max(0), (k + r).min(steps_total))
                    })
                    .unzip()
            }
        };
        let mut best = f64::INFINITY;
        let mut best_x = vec![0.0; d];
        let mut idx = lo_idx.clone();
        let mut x = vec![0.0; d];
        loop {
            for i in 0..d {
                x[i] = bounds.lo + idx[i] as f64 * h;
            }
            let f = objective(&x);
            if f < best {
                best = f;
                best_x.copy_from_slice(&x);
            }
            // odometer increment
            let mut i = 0;
            loop {
                if i == d {
                    break;
                }
                if idx[i] < hi_idx[i] {
                    idx[i] += 1;
                    break;
                }
                idx[i] = lo_idx[i];
                i += 1;
            }
            if i == d {
                break;
            }
        }
        if best == f64::INFINITY {
            return Err(Error::InvalidInput("objective infinite on the whole lattice".into()));
        }
        centre = Some(best_x);
    }
    Ok(centre.unwrap_or_default())
}

/// Lattice minimum returned by [`exhaustive_minimizer_f`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeMinimum {
    pub point: Vec<f64>,
    pub value: f64,
}

/// Evaluates `½‖Tu − v‖² + α D_J(u, u₀)` with a fresh TV / sign computation;
/// `+∞` for any negative entry.
pub fn objective_by_resummation(
    t_rows: usize,
    t_entries: &[f64],
    v_delta: &[f64],
    alpha: f64,
    u0: &ImageVector,
    u: &[f64],
) -> f64 {
    if u.iter().any(|&x| x < 0.0) {
        return f64::INFINITY;
    }
    let n = u.len();
    let mut data = 0.0;
    for r in 0..t_rows {
        let mut tu = 0.0;
        for c in 0..n {
            tu += t_entries[r * n + c] * u[c];
        }
        data += (tu - v_delta[r]) * (tu - v_delta[r]);
    }
    let pairs = difference_pairs(u0.width(), u0.height());
    let a = u0.data();
    let mut bregman = 0.0;
    for &(p, q) in &pairs {
        let du = u[q] - u[p];
        let da = a[q] - a[p];
        let s = if da > 0.0 {
            1.0
        } else if da < 0.0 {
            -1.0
        } else {
            0.0
        };
        // |Du| − |Du₀| − s·(Du − Du₀)
        bregman += du.abs() - da.abs() - s * (du - da);
    }
    0.5 * data + alpha * bregman
}

fn difference_pairs(width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for r in 0..height {
        for c in 0..width {
            let p = r * width + c;
            if c + 1 < width {
                pairs.push((p, p + 1));
            }
            if r + 1 < height {
                pairs.push((p, p + width));
            }
        }
    }
    pairs
}

/// Exhaustive lattice minimizer of `F_α(·, v^δ)` for images with `N ≤ 3`
/// pixels. `t_entries` is the row-major `M × N` forward matrix and `u0` the
/// Bregman anchor (its grid gives the image shape).
pub fn exhaustive_minimizer_f(
    t_rows: usize,
    t_entries: &[f64],
    v_delta: &[f64],
    alpha: f64,
    u0: &ImageVector,
    bounds: LatticeBox,
    spacing: f64,
) -> Result<LatticeMinimum> {
    let n = u0.len();
    if n > LATTICE_DIM_CAP {
        return Err(Error::SizeCapExceeded {
            size: n,
            cap: LATTICE_DIM_CAP,
        });
    }
    if t_entries.len() != t_rows * n || v_delta.len() != t_rows {
        return Err(Error::DimensionMismatch {
            expected: t_rows * n,
            found: t_entries.len(),
        });
    }
    if !(spacing > 0.0) || !(bounds.hi > bounds.lo) {
        return Err(Error::InvalidParameter(
            "lattice spacing and box must be positive".into(),
        ));
    }
    let steps = libm::floor((bounds.hi - bounds.lo) / spacing + 1e-9) as usize + 1;
    let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(steps));
    match total {
        Some(t) if t <= LATTICE_POINT_CAP => {}
        _ => {
            return Err(Error::SizeCapExceeded {
                size: total.unwrap_or(usize::MAX),
                cap: LATTICE_POINT_CAP,
            })
        }
    }

    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut best = LatticeMinimum {
        point: vec![0.0; n],
        value: f64::INFINITY,
    };
    loop {
        for i in 0..n {
            x[i] = bounds.lo + idx[i] as f64 * spacing;
        }
        let f = objective_by_resummation(t_rows, t_entries, v_delta, alpha, u0, &x);
        if f < best.value {
            best.value = f;
            best.point.copy_from_slice(&x);
        }
        let mut i = 0;
        while i < n {
            idx[i] += 1;
            if idx[i] < steps {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
    }
    Ok(best)
}

/// All eigenvalues of a symmetric `n × n` matrix by cyclic Jacobi rotations,
/// sorted descending.
pub fn jacobi_eigenvalues(n: usize, symmetric: &[f64]) -> Result<Vec<f64>> {
    if n > EIGEN_DIM_CAP {
        return Err(Error::SizeCapExceeded {
            size: n,
            cap: EIGEN_DIM_CAP,
        });
    }
    if symmetric.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: symmetric.len(),
        });
    }
    let mut a = symmetric.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap_or(core::cmp::Ordering::Equal));
    Ok(eig)
}

/// Largest singular value of a row-major `rows × cols` matrix via Jacobi on `TᵀT`.
pub fn dense_spectral_norm(rows: usize, cols: usize, entries: &[f64]) -> Result<f64> {
    if entries.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            found: entries.len(),
        });
    }
    let mut gram = vec![0.0; cols * cols];
    for i in 0..cols {
        for j in 0..cols {
            gram[i * cols + j] = (0..rows).map(|r| entries[r * cols + i] * entries[r * cols + j]).sum();
        }
    }
    let eig = jacobi_eigenvalues(cols, &gram)?;
    Ok(libm::sqrt(eig[0].max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{divergence_adjoint, gradient, DualField, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradient_matrix_1x2() {
        let m = dense_gradient_matrix(2, 1).unwrap();
        assert_eq!((m.rows, m.cols), (4, 2));
        assert_eq!(m.entries, vec![-1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn gradient_matrix_matches_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = dense_gradient_matrix(3, 3).unwrap();
        let grid = Grid::new(3, 3).unwrap();
        for _ in 0..20 {
            let u: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
            let img = ImageVector::new(grid, u.clone()).unwrap();
            let g = gradient(&img);
            let mu = m.matvec(&u);
            assert_eq!(&mu[..9], &g.dx[..]);
            assert_eq!(&mu[9..], &g.dy[..]);

            let w: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
            let field = DualField::new(grid, w[..9].to_vec(), w[9..].to_vec()).unwrap();
            let a = divergence_adjoint(&field);
            for (x, y) in a.data().iter().zip(m.transpose_matvec(&w)) {
                assert!((x - y).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn caps_refuse() {
        assert!(matches!(
            dense_gradient_matrix(9, 9),
            Err(Error::SizeCapExceeded { .. })
        ));
        assert!(lattice_prox_search(|_| 0.0, &[0.0; 4], LatticeBox::new(-1.0, 1.0), 0.1).is_err());
        let u0 = ImageVector::zeros(Grid::new(4, 1).unwrap());
        assert!(exhaustive_minimizer_f(4, &[0.0; 16], &[0.0; 4], 1.0, &u0, LatticeBox::new(0.0, 1.0), 0.1).is_err());
    }

    #[test]
    fn lattice_prox_simple_cases() {
        let h = 1e-3;
        let b = LatticeBox::new(-5.0, 5.0);
        let p = lattice_prox_search(|_| 0.0, &[0.1234, -2.5], b, h).unwrap();
        assert!((p[0] - 0.1234).abs() <= h && (p[1] + 2.5).abs() <= h);

        let nonneg = |x: &[f64]| {
            if x.iter().all(|&t| t >= 0.0) {
                0.0
            } else {
                f64::INFINITY
            }
        };
        let p = lattice_prox_search(nonneg, &[-1.0, 2.0], b, h).unwrap();
        assert!(p[0].abs() <= h && (p[1] - 2.0).abs() <= h);

        let ball = |x: &[f64]| {
            if x.iter().all(|t| t.abs() <= 1.0) {
                0.0
            } else {
                f64::INFINITY
            }
        };
        let p = lattice_prox_search(ball, &[2.0, -0.5], b, h).unwrap();
        assert!((p[0] - 1.0).abs() <= h && (p[1] + 0.5).abs() <= h);
    }

    #[test]
    fn jacobi_known_spectrum() {
        let eig = jacobi_eigenvalues(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!((eig[0] - 3.0).abs() < 1e-12 && (eig[1] - 1.0).abs() < 1e-12);
        let s = dense_spectral_norm(2, 2, &[3.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((s - 3.0).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_identity_small_alpha() {
        let grid = Grid::new(2, 1).unwrap();
        let u0 = ImageVector::constant(grid, 0.5);
        let v = [0.3, 1.2];
        let m =
            exhaustive_minimizer_f(2, &[1.0, 0.0, 0.0, 1.0], &v, 1e-6, &u0, LatticeBox::new(0.0, 2.0), 1e-3).unwrap();
        assert!((m.point[0] - 0.3).abs() <= 1e-3 && (m.point[1] - 1.2).abs() <= 1e-3);
    }

    #[test]
    fn exhaustive_large_alpha_flattens() {
        let grid = Grid::new(3, 1).unwrap();
        let u0 = ImageVector::constant(grid, 0.0);
        let id = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let m = exhaustive_minimizer_f(3, &id, &[0.2, 0.9, 0.4], 10.0, &u0, LatticeBox::new(0.0, 1.0), 0.01).unwrap();
        // heavy TV weight: the minimizer is constant at the data mean
        let mean = 0.5;
        for x in &m.point {
            assert!((x - mean).abs() <= 0.011, "{:?}", m.point);
        }
    }
}
