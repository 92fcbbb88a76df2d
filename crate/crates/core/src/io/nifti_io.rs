use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{ArrayView3, Order};
use nifti::writer::WriterOptions;
use nifti::{IntoNdArray, NiftiHeader, NiftiObject, NiftiType, ReaderOptions};

use crate::error::{Error, Result};
use crate::model::{spacing_close, Case, LabelMap, LabelSchema, Shape, StorageDtype, Volume};

/// Spacing agreement required between the files of one case, in mm.
pub const SPACING_TOLERANCE: f64 = 1e-3;

fn nifti_err(path: &Path) -> impl FnOnce(nifti::NiftiError) -> Error + '_ {
    move |source| Error::Nifti {
        path: path.to_path_buf(),
        source,
    }
}

struct Raw {
    shape: Shape,
    spacing: [f64; 3],
    origin: [f64; 3],
    sform: Option<[[f64; 4]; 3]>,
    dtype: StorageDtype,
    data: Vec<f32>,
}

fn storage_dtype(hdr: &NiftiHeader) -> StorageDtype {
    let scaled = hdr.scl_slope != 0.0 && (hdr.scl_slope != 1.0 || hdr.scl_inter != 0.0);
    if scaled {
        return StorageDtype::F32;
    }
    match hdr.data_type() {
        Ok(NiftiType::Uint8) => StorageDtype::U8,
        Ok(NiftiType::Int16) => StorageDtype::I16,
        Ok(NiftiType::Uint16) => StorageDtype::U16,
        Ok(NiftiType::Int32) => StorageDtype::I32,
        Ok(NiftiType::Float64) => StorageDtype::F64,
        _ => StorageDtype::F32,
    }
}

fn diagonal_sform(spacing: [f64; 3], origin: [f64; 3]) -> [[f64; 4]; 3] {
    // Rows are scanner x, y, z; columns are file i, j, k = h, w, d.
    [
        [spacing[2], 0.0, 0.0, origin[2]],
        [0.0, spacing[1], 0.0, origin[1]],
        [0.0, 0.0, spacing[0], origin[0]],
    ]
}

fn read_raw(path: &Path) -> Result<Raw> {
    let obj = ReaderOptions::new()
        .read_file(path)
        .map_err(nifti_err(path))?;
    let hdr = obj.header().clone();
    let rank = hdr.dim[0] as usize;
    if !(1..=7).contains(&rank) || hdr.dim[4..=rank.max(3)].iter().any(|&n| n > 1) {
        return Err(Error::InvalidVolume(format!(
            "{}: expected a 3-D image, header dims are {:?}",
            path.display(),
            &hdr.dim[..=rank.min(7)]
        )));
    }
    let dim = |k: usize| if k <= rank { hdr.dim[k] as usize } else { 1 };
    let shape = Shape::new(dim(3), dim(2), dim(1));
    let spacing = [
        hdr.pixdim[3].abs() as f64,
        hdr.pixdim[2].abs() as f64,
        hdr.pixdim[1].abs() as f64,
    ]
    .map(|s| if s > 0.0 { s } else { 1.0 });
    let (origin, sform) = if hdr.sform_code > 0 {
        let rows = [hdr.srow_x, hdr.srow_y, hdr.srow_z].map(|r| r.map(|v| v as f64));
        let origin = [rows[2][3], rows[1][3], rows[0][3]];
        let plain = rows == diagonal_sform(spacing, origin);
        (origin, (!plain).then_some(rows))
    } else {
        let q = [hdr.quatern_z, hdr.quatern_y, hdr.quatern_x].map(|v| v as f64);
        (q, None)
    };
    let dtype = storage_dtype(&hdr);
    let array = obj
        .into_volume()
        .into_ndarray::<f32>()
        .map_err(nifti_err(path))?;
    let array = array
        .to_shape(((shape.h, shape.w, shape.d), Order::ColumnMajor))
        .map_err(|e| Error::InvalidVolume(format!("{}: {e}", path.display())))?;
    let data: Vec<f32> = array.reversed_axes().iter().copied().collect();
    Ok(Raw {
        shape,
        spacing,
        origin,
        sform,
        dtype,
        data,
    })
}

/// Reads a single-channel volume.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let raw = read_raw(path.as_ref())?;
    Ok(Volume::new(raw.shape, raw.spacing, raw.origin, 1, raw.data)?
        .with_dtype(raw.dtype)
        .with_sform(raw.sform))
}

/// Reads an integer label grid and checks it against `schema`.
pub fn read_labels(path: impl AsRef<Path>, schema: Arc<LabelSchema>) -> Result<(LabelMap, [f64; 3])> {
    let path = path.as_ref();
    let raw = read_raw(path)?;
    let mut bad = std::collections::BTreeSet::new();
    let mut data = Vec::with_capacity(raw.data.len());
    for &v in &raw.data {
        if v.fract() != 0.0 || !(0.0..=u16::MAX as f32).contains(&v) {
            bad.insert(v as i64);
            data.push(0);
        } else {
            data.push(v as u16);
        }
    }
    if !bad.is_empty() {
        return Err(Error::SchemaViolation {
            values: bad.into_iter().collect(),
            context: path.display().to_string(),
        });
    }
    let labels = LabelMap::new(raw.shape, data, schema).map_err(|e| match e {
        Error::SchemaViolation { values, .. } => Error::SchemaViolation {
            values,
            context: path.display().to_string(),
        },
        other => other,
    })?;
    Ok((labels, raw.spacing))
}

/// Reads one case: one image file per channel plus a label file.
pub fn read_case(
    id: &str,
    image_paths: &[PathBuf],
    label_path: &Path,
    schema: Arc<LabelSchema>,
) -> Result<Case> {
    let inner = || -> Result<Case> {
        if image_paths.is_empty() {
            return Err(Error::DatasetInconsistency("case lists no image files".into()));
        }
        let channels = image_paths
            .iter()
            .map(read_volume)
            .collect::<Result<Vec<_>>>()?;
        let first = &channels[0];
        for (p, v) in image_paths.iter().zip(&channels).skip(1) {
            if v.shape() != first.shape() || !spacing_close(v.spacing(), first.spacing(), SPACING_TOLERANCE) {
                return Err(Error::DatasetInconsistency(format!(
                    "{} has grid {} / spacing {:?}, first channel has {} / {:?}",
                    p.display(),
                    v.shape(),
                    v.spacing(),
                    first.shape(),
                    first.spacing()
                )));
            }
        }
        let (labels, label_spacing) = read_labels(label_path, schema)?;
        if labels.shape() != first.shape()
            || !spacing_close(label_spacing, first.spacing(), SPACING_TOLERANCE)
        {
            return Err(Error::DatasetInconsistency(format!(
                "label {} has grid {} / spacing {:?}, image has {} / {:?}",
                label_path.display(),
                labels.shape(),
                label_spacing,
                first.shape(),
                first.spacing()
            )));
        }
        let volume = Volume::stack_channels(channels)?;
        Case::new(id, volume, labels)
    };
    inner().map_err(|e| e.in_case(id))
}

fn header_for(spacing: [f64; 3], origin: [f64; 3], sform: Option<[[f64; 4]; 3]>) -> NiftiHeader {
    let rows = sform.unwrap_or_else(|| diagonal_sform(spacing, origin));
    let mut hdr = NiftiHeader {
        qform_code: 0,
        sform_code: 1,
        // Millimetres, seconds.
        xyzt_units: 2 | 8,
        ..NiftiHeader::default()
    };
    hdr.pixdim[0] = 1.0;
    hdr.pixdim[1] = spacing[2] as f32;
    hdr.pixdim[2] = spacing[1] as f32;
    hdr.pixdim[3] = spacing[0] as f32;
    hdr.srow_x = rows[0].map(|v| v as f32);
    hdr.srow_y = rows[1].map(|v| v as f32);
    hdr.srow_z = rows[2].map(|v| v as f32);
    hdr
}

fn prepare_dir(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Writes `data` (in `(d, w, h)` order) as element type `$ty`.
macro_rules! write_as {
    ($ty:ty, $path:expr, $shape:expr, $data:expr, $hdr:expr) => {{
        let (path, shape): (&Path, Shape) = ($path, $shape);
        prepare_dir(path)?;
        let buf: Vec<$ty> = $data.iter().map(|&v| v as $ty).collect();
        let view = ArrayView3::from_shape((shape.d, shape.w, shape.h), &buf[..])
            .expect("grid length matches shape")
            .reversed_axes();
        WriterOptions::new(path)
            .reference_header($hdr)
            .write_nifti(&view)
            .map_err(nifti_err(path))
    }};
}

fn write_channel(path: &Path, volume: &Volume, c: usize) -> Result<()> {
    let hdr = header_for(volume.spacing(), volume.origin(), volume.sform());
    let data = volume.channel(c);
    let dtype = if data.iter().all(|&v| volume.dtype().holds(v)) {
        volume.dtype()
    } else {
        StorageDtype::F32
    };
    let shape = volume.shape();
    match dtype {
        StorageDtype::U8 => write_as!(u8, path, shape, data, &hdr),
        StorageDtype::I16 => write_as!(i16, path, shape, data, &hdr),
        StorageDtype::U16 => write_as!(u16, path, shape, data, &hdr),
        StorageDtype::I32 => write_as!(i32, path, shape, data, &hdr),
        StorageDtype::F32 => write_as!(f32, path, shape, data, &hdr),
        StorageDtype::F64 => write_as!(f64, path, shape, data, &hdr),
    }
}

/// Writes a single-channel volume.
pub fn write_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    if volume.channels() != 1 {
        return Err(Error::InvalidParams(format!(
            "write_volume takes one channel, volume has {}",
            volume.channels()
        )));
    }
    write_channel(path.as_ref(), volume, 0)
}

/// Writes labels as u8 when every value fits, u16 otherwise.
pub fn write_labels(
    labels: &LabelMap,
    geometry: &Volume,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let hdr = header_for(geometry.spacing(), geometry.origin(), geometry.sform());
    let data = labels.data();
    if labels.schema().max_label() <= u8::MAX as u16 {
        write_as!(u8, path, labels.shape(), data, &hdr)
    } else {
        write_as!(u16, path, labels.shape(), data, &hdr)
    }
}

/// Writes one file per channel plus the label file.
pub fn write_case(case: &Case, image_paths: &[PathBuf], label_path: &Path) -> Result<()> {
    if image_paths.len() != case.volume.channels() {
        return Err(Error::InvalidParams(format!(
            "case {} has {} channels but {} image paths were given",
            case.id,
            case.volume.channels(),
            image_paths.len()
        )));
    }
    for (c, p) in image_paths.iter().enumerate() {
        write_channel(p, &case.volume, c)?;
    }
    write_labels(&case.labels, &case.volume, label_path)
}

/// Conventional file names under a dataset root: `images/<id>_000c.nii.gz`
/// and `labels/<id>.nii.gz`.
pub fn case_paths(root: &Path, id: &str, channels: usize) -> (Vec<PathBuf>, PathBuf) {
    let images = (0..channels)
        .map(|c| root.join("images").join(format!("{id}_{c:04}.nii.gz")))
        .collect();
    (images, root.join("labels").join(format!("{id}.nii.gz")))
}
