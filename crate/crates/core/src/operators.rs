//! Discrete gradient / divergence pair and the anisotropic TV functional.
//!
//! Images are stored row-major: pixel `(row, col)` lives at
//! `row * width + col`. The x-channel differences along a row, the
//! y-channel differences down a column. Both use forward differences with a
//! replicate (Neumann) boundary, so the last column of `dx` and the last row
//! of `dy` are always zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Width and height of a 2-D pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input("grid dimensions must be positive"));
        }
        Ok(Grid { width, height })
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }
}

/// The primal variable: a flattened 2-D image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageVector {
    grid: Grid,
    data: Vec<f64>,
}

impl ImageVector {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        check_len(grid.len(), data.len())?;
        Ok(ImageVector { grid, data })
    }

    pub fn from_dims(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Grid::new(width, height)?, data)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ImageVector {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `true` when every entry is `≥ 0`, i.e. the image lies in the constraint set.
    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
    }

    pub fn norm(&self) -> f64 {
        linalg::norm2(&self.data)
    }
}

/// A two-channel field on the image grid, shaped like `Du`.
///
/// Dual iterates produced by the ℓ∞ projection have every entry in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    grid: Grid,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl DualField {
    pub fn new(grid: Grid, dx: Vec<f64>, dy: Vec<f64>) -> Result<Self> {
        check_len(grid.len(), dx.len())?;
        check_len(grid.len(), dy.len())?;
        Ok(DualField { grid, dx, dy })
    }

    pub fn zeros(grid: Grid) -> Self {
        DualField {
            grid,
            dx: vec![0.0; grid.len()],
            dy: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.dx.iter().chain(self.dy.iter())
    }

    pub fn dot(&self, other: &DualField) -> f64 {
        linalg::dot(&self.dx, &other.dx) + linalg::dot(&self.dy, &other.dy)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    /// Largest absolute entry over both channels.
    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check_grid(&self, grid: Grid) -> Result<()> {
        if self.grid != grid {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: self.grid.len(),
            });
        }
        Ok(())
    }
}

/// Forward differences `Du` with a replicate boundary.
pub fn gradient(u: &ImageVector) -> DualField {
    let mut out = DualField::zeros(u.grid());
    gradient_into(u.grid(), u.data(), &mut out);
    out
}

/// Allocation-free form of [`gradient`]; `out` must live on the same grid.
pub fn gradient_into(grid: Grid, u: &[f64], out: &mut DualField) {
    let (w, h) = (grid.width, grid.height);
    debug_assert_eq!(u.len(), grid.len());
    for r in 0..h {
        for c in 0..w {
            let k = r * w + c;
            out.dx[k] = if c + 1 < w { u[k + 1] - u[k] } else { 0.0 };
            out.dy[k] = if r + 1 < h { u[k + w] - u[k] } else { 0.0 };
        }
    }
}

/// `Dᵀw`, the exact transpose of [`gradient`] (a negative divergence).
pub fn divergence_adjoint(w: &DualField) -> ImageVector {
    let grid = w.grid();
    let mut out = vec![0.0; grid.len()];
    divergence_adjoint_into(w, &mut out);
    ImageVector { grid, data: out }
}

/// Allocation-free form of [`divergence_adjoint`].
pub fn divergence_adjoint_into(w: &DualField, out: &mut [f64]) {
    let Grid { width, height } = w.grid();
    debug_assert_eq!(out.len(), width * height);
    for r in 0..height {
        for c in 0..width {
            let k = r * width + c;
            let mut acc = 0.0;
            if c + 1 < width {
                acc -= w.dx[k];
            }
            if c > 0 {
                acc += w.dx[k - 1];
            }
            if r + 1 < height {
                acc -= w.dy[k];
            }
            if r > 0 {
                acc += w.dy[k - width];
            }
            out[k] = acc;
        }
    }
}

/// Checked form of [`divergence_adjoint`] for fields that must match an image grid.
pub fn divergence_adjoint_on(grid: Grid, w: &DualField) -> Result<ImageVector> {
    w.check_grid(grid)?;
    Ok(divergence_adjoint(w))
}

/// Anisotropic total variation `‖Du‖₁`.
pub fn tv_value(u: &ImageVector) -> f64 {
    tv_of_slice(u.grid(), u.data())
}

pub(crate) fn tv_of_slice(grid: Grid, u: &[f64]) -> f64 {
    let (w, h) = (grid.width, grid.height);
    let mut acc = 0.0;
    for r in 0..h {
        for c in 0..w {
            let k = r * w + c;
            if c + 1 < w {
                acc += (u[k + 1] - u[k]).abs();
            }
            if r + 1 < h {
                acc += (u[k + w] - u[k]).abs();
            }
        }
    }
    acc
}

/// Selection from `∂‖Du‖₁`: the sign of each difference, `0` where the
/// difference vanishes.
pub fn tv_subgradient(u: &ImageVector) -> DualField {
    let mut g = gradient(u);
    for x in g.dx.iter_mut().chain(g.dy.iter_mut()) {
        *x = sign(*x);
    }
    g
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Arithmetic mean of the pixel values.
pub fn mean_value(u: &ImageVector) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::input("mean of an empty image"));
    }
    Ok(u.data().iter().sum::<f64>() / u.len() as f64)
}

/// Splits `u = ũ + MV[u]·1` and returns `(ũ, MV[u])`.
pub fn mean_decomposition(u: &ImageVector) -> Result<(ImageVector, f64)> {
    let mv = mean_value(u)?;
    let data = u.data().iter().map(|x| x - mv).collect();
    Ok((ImageVector { grid: u.grid(), data }, mv))
}

/// `‖u‖₁ + TV(u)`.
pub fn bv_norm(u: &ImageVector) -> f64 {
    linalg::norm1(u.data()) + tv_value(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageVector {
        let data = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        ImageVector::from_dims(w, h, data).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, grid: Grid) -> DualField {
        let dx = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dy = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        DualField::new(grid, dx, dy).unwrap()
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let u = ImageVector::constant(Grid::new(4, 4).unwrap(), 5.0);
        let g = gradient(&u);
        assert!(g.iter().all(|&x| x == 0.0));
        assert_eq!(tv_value(&u), 0.0);
        assert!(tv_subgradient(&u).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_jump() {
        // one row, two columns
        let u = ImageVector::from_dims(2, 1, vec![0.0, 3.0]).unwrap();
        let g = gradient(&u);
        assert_eq!(g.dx, vec![3.0, 0.0]);
        assert_eq!(g.dy, vec![0.0, 0.0]);
        assert_eq!(tv_value(&u), 3.0);
        assert_eq!(tv_subgradient(&u).dx, vec![1.0, 0.0]);
        assert_eq!(bv_norm(&u), 6.0);
    }

    #[test]
    fn zero_field_adjoint_is_zero() {
        let grid = Grid::new(5, 3).unwrap();
        let d = divergence_adjoint(&DualField::zeros(grid));
        assert!(d.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn adjoint_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let u = random_image(&mut rng, 8, 8);
            let w = random_field(&mut rng, u.grid());
            let lhs = gradient(&u).dot(&w);
            let rhs = linalg::dot(u.data(), divergence_adjoint(&w).data());
            // brute-force double sum as the reference
            let mut brute = 0.0;
            for r in 0..8 {
                for c in 0..8 {
                    let k = r * 8 + c;
                    if c < 7 {
                        brute += (u.data()[k + 1] - u.data()[k]) * w.dx[k];
                    }
                    if r < 7 {
                        brute += (u.data()[k + 8] - u.data()[k]) * w.dy[k];
                    }
                }
            }
            let scale = brute.abs().max(1.0);
            assert!((lhs - brute).abs() / scale <= 1e-12);
            assert!((rhs - brute).abs() / scale <= 1e-12);
        }
    }

    #[test]
    fn adjoint_matches_dense_transpose_3x3() {
        let grid = Grid::new(3, 3).unwrap();
        let m = oracle::dense_gradient_matrix(3, 3).unwrap();
        for channel in 0..2 {
            for k in 0..9 {
                let mut w = DualField::zeros(grid);
                if channel == 0 {
                    w.dx[k] = 1.0;
                } else {
                    w.dy[k] = 1.0;
                }
                let col = divergence_adjoint(&w);
                let row = channel * 9 + k;
                for p in 0..9 {
                    assert_eq!(col.data()[p], m.get(row, p), "row {row} pixel {p}");
                }
            }
        }
    }

    #[test]
    fn tv_matches_dense_l1() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = oracle::dense_gradient_matrix(3, 3).unwrap();
        for _ in 0..20 {
            let u = random_image(&mut rng, 3, 3);
            let du = m.matvec(u.data());
            let l1: f64 = du.iter().map(|x| x.abs()).sum();
            assert!((tv_value(&u) - l1).abs() <= 1e-12);
        }
    }

    #[test]
    fn subgradient_entries_are_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let w = rng.random_range(1..6);
            let h = rng.random_range(1..6);
            let mut u = random_image(&mut rng, w, h);
            // force some exact ties
            if u.len() > 1 {
                u.data_mut()[1] = u.data()[0];
            }
            let s = tv_subgradient(&u);
            assert!(s.iter().all(|&x| x == -1.0 || x == 0.0 || x == 1.0));
        }
    }

    #[test]
    fn mean_values() {
        let z = ImageVector::zeros(Grid::new(3, 2).unwrap());
        assert_eq!(mean_value(&z).unwrap(), 0.0);
        let u = ImageVector::from_dims(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(mean_value(&u).unwrap(), 2.5);
    }

    #[test]
    fn mean_decomposition_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let u = random_image(&mut rng, 7, 5);
            let (tilde, mv) = mean_decomposition(&u).unwrap();
            assert!(mean_value(&tilde).unwrap().abs() <= 1e-12);
            for (a, b) in u.data().iter().zip(tilde.data()) {
                assert!((a - (b + mv)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_bv_norm() {
        assert_eq!(bv_norm(&ImageVector::zeros(Grid::new(4, 4).unwrap())), 0.0);
    }

    #[test]
    fn bad_dimensions_rejected() {
        assert!(ImageVector::from_dims(2, 2, vec![0.0; 3]).is_err());
        assert!(Grid::new(0, 3).is_err());
        let grid = Grid::new(2, 2).unwrap();
        let other = DualField::zeros(Grid::new(4, 1).unwrap());
        assert!(divergence_adjoint_on(grid, &other).is_err());
    }
}
