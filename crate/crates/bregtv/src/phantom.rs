//! Piecewise-constant test images with values in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use bregtv_core::{Grid, ImageVector};

use crate::error::{Error, Result};

pub const SUPPORTED_SIZES: [usize; 4] = [16, 32, 64, 128];
/// Number of arms of the `star` phantom.
pub const STAR_ARMS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    /// Binary star with [`STAR_ARMS`] arms around a filled hub.
    Star,
    /// A 0.5 disk holding an off-centre disk of 1.
    Disk,
    /// Two disjoint rectangles of 1 on a 0 background.
    Blocks,
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star" => Ok(PhantomKind::Star),
            "disk" => Ok(PhantomKind::Disk),
            "blocks" => Ok(PhantomKind::Blocks),
            other => Err(Error::Usage(format!(
                "unknown phantom kind `{other}` (star, disk, blocks)"
            ))),
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhantomKind::Star => "star",
            PhantomKind::Disk => "disk",
            PhantomKind::Blocks => "blocks",
        })
    }
}

pub fn make_phantom(kind: PhantomKind, width: usize, height: usize) -> Result<ImageVector> {
    if width != height || !SUPPORTED_SIZES.contains(&width) {
        return Err(Error::Usage(format!(
            "phantoms are square with side in {SUPPORTED_SIZES:?}, got {width}x{height}"
        )));
    }
    let s = width as f64;
    let c = (s - 1.0) / 2.0;
    let grid = Grid::new(width, height)?;
    let mut data = vec![0.0; grid.len()];
    for r in 0..height {
        for col in 0..width {
            let (x, y) = (col as f64 - c, c - r as f64);
            let rad = x.hypot(y);
            let value = match kind {
                PhantomKind::Star => {
                    let phi = y.atan2(x);
                    let on_arm = (STAR_ARMS * phi).cos() >= 0.0;
                    if rad <= 0.06 * s || (rad <= 0.42 * s && on_arm) {
                        1.0
                    } else {
                        0.0
                    }
                }
                PhantomKind::Disk => {
                    let inner = (x - 0.1 * s).hypot(y - 0.05 * s);
                    if inner <= 0.15 * s {
                        1.0
                    } else if rad <= 0.4 * s {
                        0.5
                    } else {
                        0.0
                    }
                }
                PhantomKind::Blocks => {
                    let (fr, fc) = (r as f64 / s, col as f64 / s);
                    let a = (0.125..0.375).contains(&fr) && (0.125..0.625).contains(&fc);
                    let b = (0.5..0.875).contains(&fr) && (0.375..0.875).contains(&fc);
                    if a || b {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            data[grid.index(r, col)] = value;
        }
    }
    Ok(ImageVector::new(grid, data)?)
}
