use crate::error::{Error, Result};
use crate::model::Shape;

/// One boolean per voxel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    shape: Shape,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(shape: Shape) -> Self {
        BinaryMask {
            shape,
            data: vec![false; shape.len()],
        }
    }

    pub fn full(shape: Shape) -> Self {
        BinaryMask {
            shape,
            data: vec![true; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<bool>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidVolume(format!(
                "mask length {} != {} voxels",
                data.len(),
                shape.len()
            )));
        }
        Ok(BinaryMask { shape, data })
    }

    pub(crate) fn from_fn_slice<T: Sync>(
        shape: Shape,
        values: &[T],
        pred: impl Fn(&T) -> bool + Sync + Send,
    ) -> Self {
        let mut data = vec![false; values.len()];
        crate::par::zip_mut_for_each(&mut data, values, |m, v| *m = pred(v));
        BinaryMask { shape, data }
    }

    /// Mask set at the given voxel coordinates.
    pub fn from_coords(shape: Shape, coords: impl IntoIterator<Item = [usize; 3]>) -> Self {
        let mut m = BinaryMask::empty(shape);
        for [d, w, h] in coords {
            m.data[shape.index(d, w, h)] = true;
        }
        m
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.data[index]
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.data[index] = value;
    }

    pub fn count(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }

    pub fn is_clear(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn complement(&self) -> Self {
        BinaryMask {
            shape: self.shape,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    pub fn union_with(&mut self, other: &BinaryMask) -> Result<()> {
        self.check_shape(other, "mask union")?;
        crate::par::zip_mut_for_each(&mut self.data, &other.data, |a, &b| *a |= b);
        Ok(())
    }

    pub fn subtract(&mut self, other: &BinaryMask) -> Result<()> {
        self.check_shape(other, "mask difference")?;
        crate::par::zip_mut_for_each(&mut self.data, &other.data, |a, &b| *a &= !b);
        Ok(())
    }

    /// Grows the mask by `steps` voxels along the six face directions.
    pub fn dilate(&self, steps: usize) -> Self {
        let mut cur = self.clone();
        let s = self.shape;
        for _ in 0..steps {
            let prev = cur.data.clone();
            for (i, m) in cur.data.iter_mut().enumerate() {
                if *m {
                    continue;
                }
                let [d, w, h] = s.coords(i);
                *m = (d > 0 && prev[i - s.slice_len()])
                    || (d + 1 < s.d && prev[i + s.slice_len()])
                    || (w > 0 && prev[i - s.h])
                    || (w + 1 < s.w && prev[i + s.h])
                    || (h > 0 && prev[i - 1])
                    || (h + 1 < s.h && prev[i + 1]);
            }
        }
        cur
    }

    pub(crate) fn check_shape(&self, other: &BinaryMask, what: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                what,
                expected: self.shape,
                found: other.shape,
            });
        }
        Ok(())
    }
}

pub fn mask_count(mask: &BinaryMask) -> u64 {
    mask.count()
}

/// Mean `(d, w, h)` coordinate of the set voxels.
pub fn mask_centroid(mask: &BinaryMask) -> Result<[f64; 3]> {
    let mut n = 0u64;
    let mut sum = [0f64; 3];
    for i in mask.indices() {
        let c = mask.shape.coords(i);
        n += 1;
        for a in 0..3 {
            sum[a] += c[a] as f64;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum.map(|s| s / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_examples() {
        let s = Shape::new(4, 4, 4);
        let m = BinaryMask::from_coords(s, [[1, 2, 3]]);
        assert_eq!(mask_centroid(&m).unwrap(), [1.0, 2.0, 3.0]);
        assert_eq!(mask_count(&m), 1);
        let m = BinaryMask::from_coords(s, [[0, 0, 0], [2, 0, 0]]);
        assert_eq!(mask_centroid(&m).unwrap(), [1.0, 0.0, 0.0]);
        assert!(matches!(mask_centroid(&BinaryMask::empty(s)), Err(Error::EmptyMask)));
    }

    #[test]
    fn centroid_of_digital_ellipsoid_is_near_center() {
        let s = Shape::new(30, 40, 50);
        let center = [14.3, 20.6, 24.9];
        let radii = [6.5, 9.0, 11.5];
        let coords = (0..s.len()).map(|i| s.coords(i)).filter(|c| {
            (0..3)
                .map(|a| ((c[a] as f64 - center[a]) / radii[a]).powi(2))
                .sum::<f64>()
                <= 1.0
        });
        let m = BinaryMask::from_coords(s, coords);
        let c = mask_centroid(&m).unwrap();
        for a in 0..3 {
            assert!((c[a] - center[a]).abs() < 0.5, "axis {a}: {} vs {}", c[a], center[a]);
        }
    }

    #[test]
    fn dilation_grows_by_face_neighbours() {
        let s = Shape::new(5, 5, 5);
        let m = BinaryMask::from_coords(s, [[2, 2, 2]]);
        assert_eq!(m.dilate(1).count(), 7);
        assert_eq!(m.dilate(2).count(), 25);
        assert_eq!(m.dilate(0), m);
    }

    #[test]
    fn set_operations() {
        let s = Shape::new(1, 2, 2);
        let mut a = BinaryMask::from_coords(s, [[0, 0, 0], [0, 0, 1]]);
        let b = BinaryMask::from_coords(s, [[0, 0, 1], [0, 1, 1]]);
        let mut u = a.clone();
        u.union_with(&b).unwrap();
        assert_eq!(u.count(), 3);
        a.subtract(&b).unwrap();
        assert_eq!(a.indices().collect::<Vec<_>>(), vec![0]);
        assert_eq!(a.complement().count(), 3);
        assert!(a.union_with(&BinaryMask::empty(Shape::new(1, 1, 1))).is_err());
    }
}
