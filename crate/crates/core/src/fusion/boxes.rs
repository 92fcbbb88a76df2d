use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::Shape;

/// Beta(0.5, 0.5), the usual CutMix mixing prior.
pub const DEFAULT_CUTMIX_BETA: (f64, f64) = (0.5, 0.5);

/// Axis-aligned box, `upper` exclusive, already clipped to the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxMask {
    pub shape: Shape,
    pub lower: [usize; 3],
    pub upper: [usize; 3],
    /// Side lengths before clipping.
    pub sides: [usize; 3],
    pub lambda: f64,
    pub center: [usize; 3],
}

impl BoxMask {
    /// Box with explicit bounds, `upper` exclusive.
    pub fn from_bounds(shape: Shape, lower: [usize; 3], upper: [usize; 3]) -> Result<Self> {
        let dims = shape.dims();
        if (0..3).any(|a| lower[a] > upper[a] || upper[a] > dims[a]) {
            return Err(Error::InvalidParams(format!(
                "box {lower:?}..{upper:?} does not fit grid {shape}"
            )));
        }
        let sides = [0, 1, 2].map(|a| upper[a] - lower[a]);
        let covered = sides.iter().product::<usize>() as f64 / shape.len() as f64;
        Ok(BoxMask {
            shape,
            lower,
            upper,
            sides,
            lambda: 1.0 - covered,
            center: [0, 1, 2].map(|a| lower[a] + sides[a] / 2),
        })
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.upper[a] <= self.lower[a])
    }

    pub fn voxel_count(&self) -> usize {
        (0..3)
            .map(|a| self.upper[a].saturating_sub(self.lower[a]))
            .product()
    }

    /// Box volume before clipping, as a fraction of the grid.
    pub fn unclipped_fraction(&self) -> f64 {
        self.sides.iter().map(|&s| s as f64).product::<f64>() / self.shape.len() as f64
    }

    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| c[a] >= self.lower[a] && c[a] < self.upper[a])
    }

    pub fn to_mask(&self) -> BinaryMask {
        let mut m = BinaryMask::empty(self.shape);
        if self.is_empty() {
            return m;
        }
        let s = self.shape;
        let data = m.data_mut();
        for d in self.lower[0]..self.upper[0] {
            for w in self.lower[1]..self.upper[1] {
                let a = s.index(d, w, self.lower[2]);
                let b = s.index(d, w, self.upper[2] - 1) + 1;
                data[a..b].fill(true);
            }
        }
        m
    }
}

/// Box for a given mixing ratio `lambda` and center voxel.
///
/// Each side is `round(dim * (1 - lambda)^(1/3))`, so the unclipped box
/// covers a `1 - lambda` fraction of the grid.
pub fn box_from_draw(shape: Shape, lambda: f64, center: [usize; 3]) -> BoxMask {
    let lambda = lambda.clamp(0.0, 1.0);
    let side_frac = (1.0 - lambda).cbrt();
    let dims = shape.dims();
    let mut sides = [0usize; 3];
    let mut lower = [0usize; 3];
    let mut upper = [0usize; 3];
    for a in 0..3 {
        sides[a] = (dims[a] as f64 * side_frac).round() as usize;
        let lo = center[a] as i64 - (sides[a] / 2) as i64;
        let hi = lo + sides[a] as i64;
        lower[a] = lo.clamp(0, dims[a] as i64) as usize;
        upper[a] = hi.clamp(0, dims[a] as i64) as usize;
    }
    BoxMask {
        shape,
        lower,
        upper,
        sides,
        lambda,
        center,
    }
}

/// Samples a CutMix box with the default Beta(0.5, 0.5) ratio.
pub fn sample_cutmix_box<R: Rng + ?Sized>(shape: Shape, rng: &mut R) -> BoxMask {
    let (a, b) = DEFAULT_CUTMIX_BETA;
    sample_cutmix_box_with(shape, a, b, rng).expect("default beta parameters are valid")
}

/// `lambda ~ Beta(alpha, beta)`, center uniform over the voxels.
pub fn sample_cutmix_box_with<R: Rng + ?Sized>(
    shape: Shape,
    alpha: f64,
    beta: f64,
    rng: &mut R,
) -> Result<BoxMask> {
    let dist = Beta::new(alpha, beta)
        .map_err(|e| Error::InvalidParams(format!("Beta({alpha}, {beta}): {e}")))?;
    let lambda = dist.sample(rng);
    let center = [
        rng.random_range(0..shape.d),
        rng.random_range(0..shape.w),
        rng.random_range(0..shape.h),
    ];
    Ok(box_from_draw(shape, lambda, center))
}
