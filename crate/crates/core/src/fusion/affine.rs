use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{Shape, Volume};

/// Sampled positions this close outside the grid still count as inside.
const EDGE_TOL: f64 = 1e-6;

/// Voxel-space transform: rotate, then scale, then shift, about a center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub scale: [f64; 3],
    /// Voxels along (d, w, h).
    pub shift: [f64; 3],
    /// Degrees about the d, w and h axes.
    pub rotation: [f64; 3],
}

impl Default for AffineParams {
    fn default() -> Self {
        AffineParams::identity()
    }
}

impl AffineParams {
    pub const fn identity() -> Self {
        AffineParams {
            scale: [1.0; 3],
            shift: [0.0; 3],
            rotation: [0.0; 3],
        }
    }

    pub const fn shift_only(shift: [f64; 3]) -> Self {
        AffineParams {
            scale: [1.0; 3],
            shift,
            rotation: [0.0; 3],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == AffineParams::identity()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .scale
            .iter()
            .chain(&self.shift)
            .chain(&self.rotation)
            .all(|v| v.is_finite());
        if !finite || self.scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidParams(format!("invalid affine parameters {self:?}")));
        }
        Ok(())
    }
}

/// Uniform sampling ranges for [`AffineParams`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineRanges {
    /// Scale factors are drawn from `[1 - scale, 1 + scale]`.
    pub scale: f64,
    /// Shifts are drawn from `[-shift, shift]` voxels.
    pub shift: f64,
    /// Angles are drawn from `[-rotation, rotation]` degrees.
    pub rotation: f64,
}

impl Default for AffineRanges {
    fn default() -> Self {
        AffineRanges {
            scale: 0.1,
            shift: 5.0,
            rotation: 15.0,
        }
    }
}

impl AffineRanges {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.scale, self.shift, self.rotation]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.scale < 1.0;
        if !ok {
            return Err(Error::InvalidParams(format!("invalid affine ranges {self:?}")));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AffineParams {
        let mut draw = |half: f64| {
            if half == 0.0 {
                0.0
            } else {
                rng.random_range(-half..=half)
            }
        };
        let mut p = AffineParams::identity();
        for a in 0..3 {
            p.rotation[a] = draw(self.rotation);
        }
        for a in 0..3 {
            p.scale[a] = 1.0 + draw(self.scale);
        }
        for a in 0..3 {
            p.shift[a] = draw(self.shift);
        }
        p
    }
}

type Mat3 = [[f64; 3]; 3];

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn transpose(m: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}

/// Rotation by `deg` in the plane of axes `p` and `q`.
fn plane_rotation(p: usize, q: usize, deg: f64) -> Mat3 {
    let mut m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    if deg == 0.0 {
        return m;
    }
    let (s, c) = deg.to_radians().sin_cos();
    m[p][p] = c;
    m[p][q] = -s;
    m[q][p] = s;
    m[q][q] = c;
    m
}

/// Precomputed forward and inverse maps for one [`AffineParams`].
#[derive(Clone, Copy, Debug)]
pub struct AffineMap {
    forward: Mat3,
    inverse: Mat3,
    center: [f64; 3],
    shift: [f64; 3],
    /// `inverse * shift`, subtracted after the inverse linear part.
    inv_shift: [f64; 3],
}

impl AffineMap {
    pub fn new(p: &AffineParams, center: [f64; 3]) -> Result<Self> {
        p.validate()?;
        // The d-axis rotation is applied first.
        let rd = plane_rotation(1, 2, p.rotation[0]);
        let rw = plane_rotation(2, 0, p.rotation[1]);
        let rh = plane_rotation(0, 1, p.rotation[2]);
        let r = matmul(&rh, &matmul(&rw, &rd));
        let mut forward = r;
        for (i, row) in forward.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v *= p.scale[i];
            }
        }
        let mut inverse = transpose(&r);
        for row in inverse.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v /= p.scale[j];
            }
        }
        let inv_shift = apply(&inverse, p.shift);
        Ok(AffineMap {
            forward,
            inverse,
            center,
            shift: p.shift,
            inv_shift,
        })
    }

    /// Where `x` lands under the transform.
    pub fn forward(&self, x: [f64; 3]) -> [f64; 3] {
        let rel = [0, 1, 2].map(|a| x[a] - self.center[a]);
        let m = apply(&self.forward, rel);
        [0, 1, 2].map(|a| m[a] + self.center[a] + self.shift[a])
    }

    /// The pre-image of `y`.
    ///
    /// Written as `y + (A^-1 - I)(y - c) - A^-1 t` so that the identity and
    /// pure integer shifts are computed without rounding.
    pub fn source_of(&self, y: [f64; 3]) -> [f64; 3] {
        let rel = [0, 1, 2].map(|a| y[a] - self.center[a]);
        let mut out = [0.0; 3];
        for a in 0..3 {
            let mut delta = -rel[a];
            for k in 0..3 {
                delta += self.inverse[a][k] * rel[k];
            }
            out[a] = y[a] + delta - self.inv_shift[a];
        }
        out
    }
}

fn apply(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| (0..3).map(|k| m[i][k] * v[k]).sum())
}

fn trilinear(data: &[f32], shape: Shape, x: [f64; 3]) -> Option<f32> {
    trilinear_with(shape, x, |i| data[i] as f64).map(|v| v as f32)
}

/// Trilinear interpolation of `at(index)`; `None` outside the grid.
fn trilinear_with(shape: Shape, x: [f64; 3], at: impl Fn(usize) -> f64) -> Option<f64> {
    let dims = shape.dims();
    let mut i0 = [0usize; 3];
    let mut i1 = [0usize; 3];
    let mut f = [0f64; 3];
    for a in 0..3 {
        let max = (dims[a] - 1) as f64;
        if x[a] < -EDGE_TOL || x[a] > max + EDGE_TOL {
            return None;
        }
        let v = x[a].clamp(0.0, max);
        let lo = v.floor();
        i0[a] = lo as usize;
        i1[a] = (i0[a] + 1).min(dims[a] - 1);
        f[a] = v - lo;
    }
    let at = |d: usize, w: usize, h: usize| at(shape.index(d, w, h));
    let mut acc = 0.0;
    for (cd, wd) in [(i0[0], 1.0 - f[0]), (i1[0], f[0])] {
        if wd == 0.0 {
            continue;
        }
        for (cw, ww) in [(i0[1], 1.0 - f[1]), (i1[1], f[1])] {
            if ww == 0.0 {
                continue;
            }
            for (ch, wh) in [(i0[2], 1.0 - f[2]), (i1[2], f[2])] {
                if wh == 0.0 {
                    continue;
                }
                acc += wd * ww * wh * at(cd, cw, ch);
            }
        }
    }
    Some(acc)
}

/// Transforms every channel about the grid center with trilinear sampling.
pub fn apply_affine(volume: &Volume, p: &AffineParams, fill: f32) -> Result<Volume> {
    apply_affine_about(volume, p, volume.shape().center(), fill)
}

/// [`apply_affine`] about an arbitrary center in voxel coordinates.
pub fn apply_affine_about(
    volume: &Volume,
    p: &AffineParams,
    center: [f64; 3],
    fill: f32,
) -> Result<Volume> {
    if p.is_identity() {
        return Ok(volume.clone());
    }
    let map = AffineMap::new(p, center)?;
    let shape = volume.shape();
    let mut out = volume.clone();
    for c in 0..volume.channels() {
        let src = volume.channel(c);
        crate::par::for_each_chunk_mut(out.channel_mut(c), shape.slice_len(), |off, chunk| {
            for (k, v) in chunk.iter_mut().enumerate() {
                let y = shape.coords(off + k).map(|u| u as f64);
                *v = trilinear(src, shape, map.source_of(y)).unwrap_or(fill);
            }
        });
    }
    Ok(out)
}

/// Mask counterpart of [`apply_affine`]: the indicator is interpolated
/// linearly and thresholded at one half, which keeps thin rims attached
/// where nearest-neighbour sampling would shed single voxels.
pub fn apply_affine_mask(mask: &BinaryMask, p: &AffineParams) -> Result<BinaryMask> {
    apply_affine_mask_about(mask, p, mask.shape().center())
}

pub fn apply_affine_mask_about(
    mask: &BinaryMask,
    p: &AffineParams,
    center: [f64; 3],
) -> Result<BinaryMask> {
    if p.is_identity() {
        return Ok(mask.clone());
    }
    let map = AffineMap::new(p, center)?;
    let shape = mask.shape();
    let src = mask.data();
    let mut out = BinaryMask::empty(shape);
    crate::par::for_each_chunk_mut(out.data_mut(), shape.slice_len(), |off, chunk| {
        for (k, v) in chunk.iter_mut().enumerate() {
            let y = shape.coords(off + k).map(|u| u as f64);
            *v = trilinear_with(shape, map.source_of(y), |i| src[i] as u8 as f64).is_some_and(|f| f >= 0.5);
        }
    });
    Ok(out)
}

/// Row range `[lo, hi)` of destination indices along one axis that have a
/// source under an integer shift.
fn shifted_range(dim: usize, off: i64) -> (usize, usize) {
    let lo = off.clamp(0, dim as i64) as usize;
    let hi = (dim as i64 + off).clamp(0, dim as i64) as usize;
    (lo, hi.max(lo))
}

fn translate_slice<T: Copy>(src: &[T], dst: &mut [T], shape: Shape, off: [i64; 3]) {
    let (d0, d1) = shifted_range(shape.d, off[0]);
    let (w0, w1) = shifted_range(shape.w, off[1]);
    let (h0, h1) = shifted_range(shape.h, off[2]);
    if h0 >= h1 {
        return;
    }
    for d in d0..d1 {
        let sd = (d as i64 - off[0]) as usize;
        for w in w0..w1 {
            let sw = (w as i64 - off[1]) as usize;
            let sh = (h0 as i64 - off[2]) as usize;
            let a = shape.index(d, w, h0);
            let s = shape.index(sd, sw, sh);
            dst[a..a + (h1 - h0)].copy_from_slice(&src[s..s + (h1 - h0)]);
        }
    }
}

/// Exact integer shift: `out[v] = volume[v - offset]`, `fill` where that
/// falls outside the grid.
pub fn translate_volume(volume: &Volume, offset: [i64; 3], fill: f32) -> Volume {
    let shape = volume.shape();
    let mut out = volume.clone();
    for c in 0..volume.channels() {
        let dst = out.channel_mut(c);
        dst.fill(fill);
        translate_slice(volume.channel(c), dst, shape, offset);
    }
    out
}

pub fn translate_mask(mask: &BinaryMask, offset: [i64; 3]) -> BinaryMask {
    let shape = mask.shape();
    let mut out = BinaryMask::empty(shape);
    translate_slice(mask.data(), out.data_mut(), shape, offset);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::mask_count;

    fn ramp(shape: Shape) -> Volume {
        let data = (0..shape.len()).map(|i| (i % 97) as f32 * 1.5).collect();
        Volume::new(shape, [1.0; 3], [0.0; 3], 1, data).unwrap()
    }

    fn sphere(shape: Shape, center: [f64; 3], r: f64) -> BinaryMask {
        let coords = (0..shape.len()).map(|i| shape.coords(i)).filter(|c| {
            (0..3)
                .map(|a| (c[a] as f64 - center[a]).powi(2))
                .sum::<f64>()
                <= r * r
        });
        BinaryMask::from_coords(shape, coords)
    }

    #[test]
    fn identity_is_exact() {
        let v = ramp(Shape::new(6, 7, 8));
        assert_eq!(apply_affine(&v, &AffineParams::identity(), -1.0).unwrap(), v);
        // Going through the map rather than the shortcut is exact too.
        let map = AffineMap::new(&AffineParams::identity(), [2.5, 3.0, 3.5]).unwrap();
        for y in [[0.0, 0.0, 0.0], [5.0, 6.0, 7.0], [1.0, 4.0, 2.0]] {
            assert_eq!(map.source_of(y), y);
        }
    }

    #[test]
    fn integer_shift_relocates_exactly() {
        let s = Shape::new(12, 4, 5);
        let v = ramp(s);
        let p = AffineParams::shift_only([5.0, 0.0, 0.0]);
        let out = apply_affine(&v, &p, -7.0).unwrap();
        for i in 0..s.len() {
            let [d, w, h] = s.coords(i);
            let expected = if d < 5 { -7.0 } else { v.data()[s.index(d - 5, w, h)] };
            assert_eq!(out.data()[i], expected);
        }
        assert_eq!(out, translate_volume(&v, [5, 0, 0], -7.0));
    }

    #[test]
    fn double_rotation_round_trip_on_sphere() {
        let s = Shape::new(33, 33, 33);
        let c = s.center();
        let r = 10.0;
        let data = (0..s.len())
            .map(|i| {
                let x = s.coords(i);
                let dist = (0..3).map(|a| (x[a] as f64 - c[a]).powi(2)).sum::<f64>().sqrt();
                // Smooth radial profile, dynamic range 1000.
                (1000.0 * (1.0 - (dist / (r + 4.0)).min(1.0)).powi(2)) as f32
            })
            .collect();
        let v = Volume::new(s, [1.0; 3], [0.0; 3], 1, data).unwrap();
        let mut fwd = AffineParams::identity();
        fwd.rotation = [15.0, 0.0, 0.0];
        let mut back = AffineParams::identity();
        back.rotation = [-15.0, 0.0, 0.0];
        let twice = apply_affine(&apply_affine(&v, &fwd, 0.0).unwrap(), &back, 0.0).unwrap();
        let inside = sphere(s, c, r);
        let n = inside.count() as f64;
        let err: f64 = inside
            .indices()
            .map(|i| (twice.data()[i] - v.data()[i]).abs() as f64)
            .sum::<f64>()
            / n;
        assert!(err <= 0.02 * 1000.0, "mean abs error {err}");
    }

    #[test]
    fn mask_identity_and_shift() {
        let s = Shape::new(20, 20, 20);
        let m = sphere(s, [10.0, 10.0, 10.0], 4.0);
        assert_eq!(apply_affine_mask(&m, &AffineParams::identity()).unwrap(), m);
        let shifted = apply_affine_mask(&m, &AffineParams::shift_only([3.0, -2.0, 1.0])).unwrap();
        assert_eq!(mask_count(&shifted), mask_count(&m));
        assert_eq!(shifted, translate_mask(&m, [3, -2, 1]));
    }

    #[test]
    fn upscaled_sphere_grows_by_the_cube() {
        let s = Shape::new(48, 48, 48);
        let c = s.center();
        let m = sphere(s, c, 12.0);
        let mut p = AffineParams::identity();
        p.scale = [1.1; 3];
        let big = apply_affine_mask(&m, &p).unwrap();
        let ratio = big.count() as f64 / m.count() as f64;
        assert!((1.25..=1.41).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn forward_and_source_are_inverse() {
        let p = AffineParams {
            scale: [0.93, 1.07, 1.02],
            shift: [1.5, -3.25, 4.0],
            rotation: [12.0, -7.0, 3.0],
        };
        let map = AffineMap::new(&p, [10.0, 11.0, 12.0]).unwrap();
        let x = [3.0, 17.0, 8.0];
        let back = map.source_of(map.forward(x));
        for a in 0..3 {
            assert!((back[a] - x[a]).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = AffineParams::identity();
        p.scale[1] = 0.0;
        assert!(p.validate().is_err());
        let v = ramp(Shape::new(2, 2, 2));
        assert!(apply_affine(&v, &p, 0.0).is_err());
    }

    #[test]
    fn translate_out_of_grid_is_fill() {
        let s = Shape::new(3, 3, 3);
        let v = ramp(s);
        let out = translate_volume(&v, [5, 0, 0], 9.0);
        assert!(out.data().iter().all(|&x| x == 9.0));
        assert!(translate_mask(&BinaryMask::full(s), [0, 0, -3]).is_clear());
    }
}
