//! Masked fusion of grids and the geometric primitives the strategies share.
//!
//! `fuse(background, source, m)` keeps `source` where `m` is set and
//! `background` elsewhere. It is exact: no value is ever blended.

mod affine;
mod boxes;

pub use affine::{
    apply_affine, apply_affine_about, apply_affine_mask, apply_affine_mask_about, translate_mask,
    translate_volume, AffineMap, AffineParams, AffineRanges,
};
pub use boxes::{
    box_from_draw, sample_cutmix_box, sample_cutmix_box_with, BoxMask, DEFAULT_CUTMIX_BETA,
};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{LabelMap, Shape, Volume};

const CHUNK: usize = 1 << 15;

/// Grids that can be composited under a binary mask.
pub trait Fusable: Clone {
    fn grid_shape(&self) -> Shape;

    /// Overwrites `self` with `source` wherever `mask` is set.
    fn fuse_in_place(&mut self, source: &Self, mask: &BinaryMask) -> Result<()>;

    /// Same as [`Fusable::fuse_in_place`] with the materialized box.
    fn fuse_box_in_place(&mut self, source: &Self, bbox: &BoxMask) -> Result<()> {
        self.fuse_in_place(source, &bbox.to_mask())
    }
}

pub fn fuse<T: Fusable>(background: &T, source: &T, mask: &BinaryMask) -> Result<T> {
    let mut out = background.clone();
    out.fuse_in_place(source, mask)?;
    Ok(out)
}

fn check(what: &'static str, expected: Shape, found: Shape) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

fn fuse_slice<T: Copy + Send + Sync>(dst: &mut [T], src: &[T], mask: &[bool]) {
    crate::par::for_each_chunk_mut(dst, CHUNK, |off, chunk| {
        let src = &src[off..off + chunk.len()];
        let mask = &mask[off..off + chunk.len()];
        for ((d, s), &m) in chunk.iter_mut().zip(src).zip(mask) {
            if m {
                *d = *s;
            }
        }
    });
}

fn copy_box<T: Copy>(dst: &mut [T], src: &[T], shape: Shape, bbox: &BoxMask) {
    let (lo, hi) = (bbox.lower, bbox.upper);
    if bbox.is_empty() {
        return;
    }
    for d in lo[0]..hi[0] {
        for w in lo[1]..hi[1] {
            let a = shape.index(d, w, lo[2]);
            let b = shape.index(d, w, hi[2] - 1) + 1;
            dst[a..b].copy_from_slice(&src[a..b]);
        }
    }
}

impl Fusable for Volume {
    fn grid_shape(&self) -> Shape {
        self.shape()
    }

    fn fuse_in_place(&mut self, source: &Self, mask: &BinaryMask) -> Result<()> {
        check("fuse source", self.shape(), source.shape())?;
        check("fuse mask", self.shape(), mask.shape())?;
        if self.channels() != source.channels() {
            return Err(Error::InvalidParams(format!(
                "fuse channel count {} vs {}",
                self.channels(),
                source.channels()
            )));
        }
        for c in 0..self.channels() {
            fuse_slice(self.channel_mut(c), source.channel(c), mask.data());
        }
        Ok(())
    }

    fn fuse_box_in_place(&mut self, source: &Self, bbox: &BoxMask) -> Result<()> {
        check("fuse source", self.shape(), source.shape())?;
        check("fuse box", self.shape(), bbox.shape)?;
        if self.channels() != source.channels() {
            return Err(Error::InvalidParams(format!(
                "fuse channel count {} vs {}",
                self.channels(),
                source.channels()
            )));
        }
        let shape = self.shape();
        for c in 0..self.channels() {
            copy_box(self.channel_mut(c), source.channel(c), shape, bbox);
        }
        Ok(())
    }
}

impl Fusable for LabelMap {
    fn grid_shape(&self) -> Shape {
        self.shape()
    }

    fn fuse_in_place(&mut self, source: &Self, mask: &BinaryMask) -> Result<()> {
        check("fuse source", self.shape(), source.shape())?;
        check("fuse mask", self.shape(), mask.shape())?;
        if self.schema() != source.schema() {
            return Err(Error::DatasetInconsistency(
                "fused label maps use different schemas".into(),
            ));
        }
        fuse_slice(self.data_mut(), source.data(), mask.data());
        Ok(())
    }

    fn fuse_box_in_place(&mut self, source: &Self, bbox: &BoxMask) -> Result<()> {
        check("fuse source", self.shape(), source.shape())?;
        check("fuse box", self.shape(), bbox.shape)?;
        if self.schema() != source.schema() {
            return Err(Error::DatasetInconsistency(
                "fused label maps use different schemas".into(),
            ));
        }
        let shape = self.shape();
        copy_box(self.data_mut(), source.data(), shape, bbox);
        Ok(())
    }
}

impl Fusable for BinaryMask {
    fn grid_shape(&self) -> Shape {
        self.shape()
    }

    fn fuse_in_place(&mut self, source: &Self, mask: &BinaryMask) -> Result<()> {
        check("fuse source", self.shape(), source.shape())?;
        check("fuse mask", self.shape(), mask.shape())?;
        fuse_slice(self.data_mut(), source.data(), mask.data());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(shape: Shape, data: Vec<f32>) -> Volume {
        Volume::new(shape, [1.0; 3], [0.0; 3], 1, data).unwrap()
    }

    #[test]
    fn two_by_two_example() {
        let s = Shape::new(1, 2, 2);
        let b = vol(s, vec![1.0, 2.0, 3.0, 4.0]);
        let src = vol(s, vec![10.0, 20.0, 30.0, 40.0]);
        let m = BinaryMask::from_vec(s, vec![true, false, false, true]).unwrap();
        assert_eq!(fuse(&b, &src, &m).unwrap().data(), &[10.0, 2.0, 3.0, 40.0]);
        assert_eq!(fuse(&b, &src, &BinaryMask::empty(s)).unwrap(), b);
        assert_eq!(fuse(&b, &src, &BinaryMask::full(s)).unwrap(), src);
    }

    #[test]
    fn multichannel_uses_one_mask() {
        let s = Shape::new(1, 1, 2);
        let b = Volume::new(s, [1.0; 3], [0.0; 3], 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let src = Volume::new(s, [1.0; 3], [0.0; 3], 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let m = BinaryMask::from_vec(s, vec![false, true]).unwrap();
        assert_eq!(fuse(&b, &src, &m).unwrap().data(), &[1.0, 6.0, 3.0, 8.0]);
    }

    #[test]
    fn shape_and_channel_mismatch_rejected() {
        let b = vol(Shape::new(1, 1, 2), vec![0.0; 2]);
        let src = vol(Shape::new(1, 2, 1), vec![0.0; 2]);
        let m = BinaryMask::empty(Shape::new(1, 1, 2));
        assert!(matches!(fuse(&b, &src, &m), Err(Error::ShapeMismatch { .. })));
        let two = Volume::new(Shape::new(1, 1, 2), [1.0; 3], [0.0; 3], 2, vec![0.0; 4]).unwrap();
        assert!(fuse(&b, &two, &m).is_err());
    }

    #[test]
    fn box_fuse_matches_mask_fuse() {
        let s = Shape::new(4, 5, 6);
        let b = vol(s, (0..s.len()).map(|i| i as f32).collect());
        let src = vol(s, (0..s.len()).map(|i| -(i as f32)).collect());
        let bbox = box_from_draw(s, 0.7, [1, 3, 2]);
        let mut direct = b.clone();
        direct.fuse_box_in_place(&src, &bbox).unwrap();
        assert_eq!(direct, fuse(&b, &src, &bbox.to_mask()).unwrap());
    }
}
