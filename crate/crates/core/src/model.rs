//! Immutable data model: volumes, label maps, cases and dataset catalogs.
//!
//! Spatial grids are indexed `(d, w, h)` and stored densely with `h` varying
//! fastest, which matches the on-disk voxel order of a NIfTI file whose
//! `(i, j, k)` axes map to `(h, w, d)`.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Spatial extent of a voxel grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub d: usize,
    pub w: usize,
    pub h: usize,
}

impl Shape {
    pub const fn new(d: usize, w: usize, h: usize) -> Self {
        Shape { d, w, h }
    }

    pub fn from_dims(dims: [usize; 3]) -> Self {
        Shape::new(dims[0], dims[1], dims[2])
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.d, self.w, self.h]
    }

    /// Number of voxels.
    pub fn len(&self) -> usize {
        self.d * self.w * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Voxels in one `d` slice.
    pub fn slice_len(&self) -> usize {
        self.w * self.h
    }

    #[inline]
    pub fn index(&self, d: usize, w: usize, h: usize) -> usize {
        (d * self.w + w) * self.h + h
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let h = index % self.h;
        let rest = index / self.h;
        [rest / self.w, rest % self.w, h]
    }

    /// Flat index of signed coordinates, or `None` outside the grid.
    #[inline]
    pub fn checked_index(&self, c: [i64; 3]) -> Option<usize> {
        if c[0] < 0 || c[1] < 0 || c[2] < 0 {
            return None;
        }
        let (d, w, h) = (c[0] as usize, c[1] as usize, c[2] as usize);
        if d >= self.d || w >= self.w || h >= self.h {
            return None;
        }
        Some(self.index(d, w, h))
    }

    /// Geometric center in voxel coordinates.
    pub fn center(&self) -> [f64; 3] {
        [
            (self.d as f64 - 1.0) / 2.0,
            (self.w as f64 - 1.0) / 2.0,
            (self.h as f64 - 1.0) / 2.0,
        ]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.d, self.w, self.h)
    }
}

/// Element type an intensity volume had on disk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageDtype {
    U8,
    I16,
    U16,
    I32,
    #[default]
    F32,
    F64,
}

impl StorageDtype {
    /// Whether `value` is exactly representable in this type.
    pub fn holds(&self, value: f32) -> bool {
        let integral = value.fract() == 0.0;
        match self {
            StorageDtype::U8 => integral && (0.0..=255.0).contains(&value),
            StorageDtype::I16 => integral && (-32768.0..=32767.0).contains(&value),
            StorageDtype::U16 => integral && (0.0..=65535.0).contains(&value),
            StorageDtype::I32 => integral && value.abs() <= 16_777_216.0,
            StorageDtype::F32 | StorageDtype::F64 => value.is_finite(),
        }
    }
}

/// Multi-channel scalar volume with physical geometry.
///
/// Channel-major storage: channel `c` occupies
/// `data[c * shape.len() .. (c + 1) * shape.len()]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    shape: Shape,
    spacing: [f64; 3],
    origin: [f64; 3],
    channels: usize,
    data: Vec<f32>,
    dtype: StorageDtype,
    /// Scanner affine rows (x, y, z) as read from file, kept for writing back.
    sform: Option<[[f64; 4]; 3]>,
}

impl Volume {
    pub fn new(
        shape: Shape,
        spacing: [f64; 3],
        origin: [f64; 3],
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidVolume(format!("shape {shape} has a zero extent")));
        }
        if channels == 0 {
            return Err(Error::InvalidVolume("channel count must be at least 1".into()));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidVolume(format!(
                "spacing {spacing:?} must be positive"
            )));
        }
        if data.len() != channels * shape.len() {
            return Err(Error::InvalidVolume(format!(
                "data length {} != {} channels x {} voxels",
                data.len(),
                channels,
                shape.len()
            )));
        }
        Ok(Volume {
            shape,
            spacing,
            origin,
            channels,
            data,
            dtype: StorageDtype::F32,
            sform: None,
        })
    }

    /// Single-channel volume filled with `value`.
    pub fn filled(shape: Shape, spacing: [f64; 3], value: f32) -> Result<Self> {
        Volume::new(shape, spacing, [0.0; 3], 1, vec![value; shape.len()])
    }

    pub fn with_dtype(mut self, dtype: StorageDtype) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn with_sform(mut self, sform: Option<[[f64; 4]; 3]>) -> Self {
        self.sform = sform;
        self
    }

    /// A volume with this geometry and new data of the same length.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::InvalidVolume(format!(
                "replacement data length {} != {}",
                data.len(),
                self.data.len()
            )));
        }
        Ok(Volume {
            data,
            ..self.geometry_clone()
        })
    }

    fn geometry_clone(&self) -> Self {
        Volume {
            shape: self.shape,
            spacing: self.spacing,
            origin: self.origin,
            channels: self.channels,
            data: Vec::new(),
            dtype: self.dtype,
            sform: self.sform,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dtype(&self) -> StorageDtype {
        self.dtype
    }

    pub fn sform(&self) -> Option<[[f64; 4]; 3]> {
        self.sform
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.shape.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub(crate) fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.shape.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Volume of one voxel in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn split_channels(&self) -> Vec<Volume> {
        (0..self.channels)
            .map(|c| Volume {
                channels: 1,
                data: self.channel(c).to_vec(),
                ..self.geometry_clone()
            })
            .collect()
    }

    /// Stacks single-channel volumes that share a grid.
    pub fn stack_channels(parts: Vec<Volume>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InvalidVolume("no channels to stack".into()))?;
        let mut out = first;
        for part in iter {
            if part.shape != out.shape {
                return Err(Error::ShapeMismatch {
                    what: "channel stack",
                    expected: out.shape,
                    found: part.shape,
                });
            }
            if !spacing_close(part.spacing, out.spacing, 1e-3) {
                return Err(Error::DatasetInconsistency(format!(
                    "channel spacing {:?} differs from {:?}",
                    part.spacing, out.spacing
                )));
            }
            out.channels += part.channels;
            out.data.extend_from_slice(&part.data);
        }
        Ok(out)
    }
}

pub(crate) fn spacing_close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub value: u16,
    pub name: String,
}

/// Ordered organ label table. Background is always 0 and not listed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LabelEntry>", into = "Vec<LabelEntry>")]
pub struct LabelSchema {
    entries: Vec<LabelEntry>,
}

impl LabelSchema {
    pub fn new(entries: Vec<LabelEntry>) -> Result<Self> {
        let mut values = std::collections::BTreeSet::new();
        let mut names = std::collections::BTreeSet::new();
        for e in &entries {
            if e.value == 0 {
                return Err(Error::InvalidParams(format!(
                    "organ {:?} uses reserved background label 0",
                    e.name
                )));
            }
            if !values.insert(e.value) {
                return Err(Error::InvalidParams(format!("duplicate label value {}", e.value)));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::InvalidParams(format!("duplicate organ name {:?}", e.name)));
            }
        }
        Ok(LabelSchema { entries })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (u16, S)>) -> Result<Self> {
        LabelSchema::new(
            pairs
                .into_iter()
                .map(|(value, name)| LabelEntry {
                    value,
                    name: name.into(),
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    /// Label values in schema order.
    pub fn labels(&self) -> impl Iterator<Item = u16> + '_ {
        self.entries.iter().map(|e| e.value)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, value: u16) -> bool {
        self.entries.iter().any(|e| e.value == value)
    }

    pub fn name(&self, value: u16) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.value == value)
            .map(|e| e.name.as_str())
    }

    pub fn max_label(&self) -> u16 {
        self.labels().max().unwrap_or(0)
    }

    /// Lookup table from label value to "is in schema", background included.
    pub(crate) fn membership(&self) -> Vec<bool> {
        let mut table = vec![false; self.max_label() as usize + 1];
        table[0] = true;
        for v in self.labels() {
            table[v as usize] = true;
        }
        table
    }

    pub(crate) fn check_label(&self, label: u16) -> Result<()> {
        if label == 0 || self.contains(label) {
            Ok(())
        } else {
            Err(Error::SchemaViolation {
                values: vec![label as i64],
                context: "queried label".into(),
            })
        }
    }
}

impl TryFrom<Vec<LabelEntry>> for LabelSchema {
    type Error = Error;
    fn try_from(entries: Vec<LabelEntry>) -> Result<Self> {
        LabelSchema::new(entries)
    }
}

impl From<LabelSchema> for Vec<LabelEntry> {
    fn from(schema: LabelSchema) -> Self {
        schema.entries
    }
}

/// Integer organ annotation on a dense grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    shape: Shape,
    data: Vec<u16>,
    schema: Arc<LabelSchema>,
}

impl LabelMap {
    pub fn new(shape: Shape, data: Vec<u16>, schema: Arc<LabelSchema>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidVolume(format!(
                "label data length {} != {} voxels",
                data.len(),
                shape.len()
            )));
        }
        let member = schema.membership();
        let mut offending = std::collections::BTreeSet::new();
        for &v in &data {
            if !member.get(v as usize).copied().unwrap_or(false) {
                offending.insert(v as i64);
            }
        }
        if !offending.is_empty() {
            return Err(Error::SchemaViolation {
                values: offending.into_iter().collect(),
                context: String::new(),
            });
        }
        Ok(LabelMap {
            shape,
            data,
            schema,
        })
    }

    /// All-background label map.
    pub fn empty(shape: Shape, schema: Arc<LabelSchema>) -> Self {
        LabelMap {
            shape,
            data: vec![0; shape.len()],
            schema,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn schema(&self) -> &Arc<LabelSchema> {
        &self.schema
    }

    pub fn max_label(&self) -> u16 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Writes `label` wherever `mask` is set. `label` must be in the schema.
    pub fn paint(&mut self, mask: &BinaryMask, label: u16) -> Result<()> {
        self.schema.check_label(label)?;
        if mask.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                what: "label paint",
                expected: self.shape,
                found: mask.shape(),
            });
        }
        crate::par::zip_mut_for_each(&mut self.data, mask.data(), |dst, &m| {
            if m {
                *dst = label;
            }
        });
        Ok(())
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u16] {
        &mut self.data
    }

    /// Mask of all organ voxels (any nonzero label).
    pub fn foreground(&self) -> BinaryMask {
        BinaryMask::from_fn_slice(self.shape, &self.data, |&v| v != 0)
    }
}

/// Paired image and annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub id: String,
    pub volume: Volume,
    pub labels: LabelMap,
}

impl Case {
    pub fn new(id: impl Into<String>, volume: Volume, labels: LabelMap) -> Result<Self> {
        let id = id.into();
        if volume.shape() != labels.shape() {
            return Err(Error::ShapeMismatch {
                what: "case volume vs labels",
                expected: volume.shape(),
                found: labels.shape(),
            }
            .in_case(&id));
        }
        Ok(Case { id, volume, labels })
    }

    pub fn shape(&self) -> Shape {
        self.volume.shape()
    }

    pub fn schema(&self) -> &Arc<LabelSchema> {
        self.labels.schema()
    }
}

/// Size and position of one organ in one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrganStats {
    pub case_id: String,
    pub label: u16,
    pub voxel_count: u64,
    /// mm³
    pub physical_volume: f64,
    /// Mean voxel coordinate `(d, w, h)`; `None` when the organ is absent.
    pub centroid: Option<[f64; 3]>,
}

impl OrganStats {
    pub fn present(&self) -> bool {
        self.voxel_count > 0
    }
}

/// Binary mask of one label (0 selects background).
pub fn extract_organ_mask(labels: &LabelMap, label: u16) -> Result<BinaryMask> {
    labels.schema().check_label(label)?;
    Ok(BinaryMask::from_fn_slice(labels.shape(), labels.data(), |&v| {
        v == label
    }))
}

pub fn compute_organ_stats(case: &Case, label: u16) -> Result<OrganStats> {
    if label == 0 || !case.schema().contains(label) {
        return Err(Error::SchemaViolation {
            values: vec![label as i64],
            context: format!("organ statistics for case {}", case.id),
        });
    }
    let shape = case.shape();
    let mut count = 0u64;
    let mut sum = [0f64; 3];
    for (i, &v) in case.labels.data().iter().enumerate() {
        if v == label {
            let c = shape.coords(i);
            count += 1;
            for a in 0..3 {
                sum[a] += c[a] as f64;
            }
        }
    }
    Ok(stats_from_sums(case, label, count, sum))
}

/// Statistics for every schema organ of a case in one pass over the grid.
pub fn compute_case_stats(case: &Case) -> Vec<OrganStats> {
    let shape = case.shape();
    let mut per_label = vec![(0u64, [0f64; 3]); case.schema().max_label() as usize + 1];
    for (i, &v) in case.labels.data().iter().enumerate() {
        if v != 0 {
            let c = shape.coords(i);
            let slot = &mut per_label[v as usize];
            slot.0 += 1;
            for a in 0..3 {
                slot.1[a] += c[a] as f64;
            }
        }
    }
    case.schema()
        .labels()
        .map(|label| {
            let (count, sum) = per_label[label as usize];
            stats_from_sums(case, label, count, sum)
        })
        .collect()
}

fn stats_from_sums(case: &Case, label: u16, count: u64, sum: [f64; 3]) -> OrganStats {
    let centroid = (count > 0).then(|| sum.map(|s| s / count as f64));
    OrganStats {
        case_id: case.id.clone(),
        label,
        voxel_count: count,
        physical_volume: count as f64 * case.volume.voxel_volume(),
        centroid,
    }
}

/// Catalog entry for one case of an indexed dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseDescriptor {
    pub id: String,
    pub images: Vec<PathBuf>,
    pub label: PathBuf,
    pub shape: Shape,
    pub spacing: [f64; 3],
    pub channels: usize,
}

/// Dataset catalog with per-(case, organ) statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub schema: LabelSchema,
    /// Sorted by case id.
    pub cases: Vec<CaseDescriptor>,
    /// `cases.len() * schema.len()` entries, case-major, schema order within a case.
    pub stats: Vec<OrganStats>,
}

impl DatasetIndex {
    /// Builds an index over in-memory cases; file paths are left empty.
    pub fn from_cases<'a>(root: impl Into<PathBuf>, cases: impl IntoIterator<Item = &'a Case>) -> Result<Self> {
        let mut cases: Vec<&Case> = cases.into_iter().collect();
        if cases.is_empty() {
            return Err(Error::EmptyDataset);
        }
        cases.sort_by(|a, b| a.id.cmp(&b.id));
        let schema = cases[0].schema().clone();
        let descriptors = cases
            .iter()
            .map(|c| CaseDescriptor {
                id: c.id.clone(),
                images: Vec::new(),
                label: PathBuf::new(),
                shape: c.shape(),
                spacing: c.volume.spacing(),
                channels: c.volume.channels(),
            })
            .collect();
        let per_case = crate::par::map_slice(&cases, |c| compute_case_stats(c));
        DatasetIndex::assemble(root.into(), (*schema).clone(), descriptors, per_case)
    }

    pub(crate) fn assemble(
        root: PathBuf,
        schema: LabelSchema,
        cases: Vec<CaseDescriptor>,
        per_case_stats: Vec<Vec<OrganStats>>,
    ) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &cases {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::DatasetInconsistency(format!("duplicate case id {:?}", c.id)));
            }
        }
        let stats: Vec<OrganStats> = per_case_stats.into_iter().flatten().collect();
        debug_assert_eq!(stats.len(), cases.len() * schema.len());
        Ok(DatasetIndex {
            root,
            schema,
            cases,
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn case(&self, id: &str) -> Option<&CaseDescriptor> {
        self.cases.iter().find(|c| c.id == id)
    }

    pub fn stats_for(&self, case_id: &str, label: u16) -> Option<&OrganStats> {
        let ci = self.cases.iter().position(|c| c.id == case_id)?;
        let oi = self.schema.labels().position(|l| l == label)?;
        self.stats.get(ci * self.schema.len() + oi)
    }

    /// All per-case statistics for one organ, in case order.
    pub fn organ_stats(&self, label: u16) -> impl Iterator<Item = &OrganStats> {
        self.stats.iter().filter(move |s| s.label == label)
    }
}
