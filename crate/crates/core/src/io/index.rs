use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::dataset::CaseSource;
use crate::error::{Error, Result};
use crate::model::{compute_case_stats, Case, CaseDescriptor, DatasetIndex, LabelSchema};

use super::manifest::{manifest_path, resolve, DatasetManifest};
use super::nifti_io::read_case;

/// Direction cosines agree across cases to this tolerance.
const ORIENTATION_TOLERANCE: f64 = 1e-3;

fn orientation(case: &Case) -> [[f64; 3]; 3] {
    let Some(rows) = case.volume.sform() else {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    };
    let mut out = [[0.0; 3]; 3];
    for col in 0..3 {
        let norm = (0..3).map(|r| rows[r][col].powi(2)).sum::<f64>().sqrt();
        for r in 0..3 {
            out[r][col] = if norm > 0.0 { rows[r][col] / norm } else { 0.0 };
        }
    }
    out
}

/// Reads every case listed in a manifest and computes per-organ statistics.
///
/// Cases are ordered by id. Any unreadable case aborts with its id.
pub fn index_dataset(path: impl AsRef<Path>) -> Result<DatasetIndex> {
    let path = manifest_path(path);
    let manifest = DatasetManifest::load(&path)?;
    if manifest.cases.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let schema = Arc::new(manifest.labels.clone());
    let mut entries = manifest.cases.clone();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let resolved: Vec<(String, Vec<PathBuf>, PathBuf)> = entries
        .iter()
        .map(|c| {
            let images = c.images.iter().map(|p| resolve(&root, p)).collect();
            (c.id.clone(), images, resolve(&root, &c.label))
        })
        .collect();
    for (id, images, label) in &resolved {
        for p in images.iter().chain(std::iter::once(label)) {
            if !p.is_file() {
                return Err(Error::DatasetInconsistency(format!("missing file {}", p.display())).in_case(id));
            }
        }
    }
    let loaded = crate::par::map_slice(&resolved, |(id, images, label)| {
        let case = read_case(id, images, label, schema.clone())?;
        let desc = CaseDescriptor {
            id: id.clone(),
            images: images.clone(),
            label: label.clone(),
            shape: case.shape(),
            spacing: case.volume.spacing(),
            channels: case.volume.channels(),
        };
        Ok((desc, orientation(&case), compute_case_stats(&case)))
    });
    let mut descriptors = Vec::with_capacity(loaded.len());
    let mut stats = Vec::with_capacity(loaded.len());
    let mut reference: Option<(String, [[f64; 3]; 3])> = None;
    for item in loaded {
        let (desc, orient, s): (CaseDescriptor, _, _) = item?;
        if desc.channels != manifest.channels {
            return Err(Error::DatasetInconsistency(format!(
                "{} channels, manifest declares {}",
                desc.channels, manifest.channels
            ))
            .in_case(&desc.id));
        }
        match &reference {
            None => reference = Some((desc.id.clone(), orient)),
            Some((first, o)) => {
                let differs = (0..3).any(|r| (0..3).any(|c| (o[r][c] - orient[r][c]).abs() > ORIENTATION_TOLERANCE));
                if differs {
                    return Err(Error::DatasetInconsistency(format!(
                        "orientation differs from case {first}"
                    ))
                    .in_case(&desc.id));
                }
            }
        }
        descriptors.push(desc);
        stats.push(s);
    }
    DatasetIndex::assemble(root, manifest.labels, descriptors, stats)
}

/// Loads the case files of an index on demand.
pub fn load_case(index: &DatasetIndex, schema: Arc<LabelSchema>, id: &str) -> Result<Case> {
    let desc = index
        .case(id)
        .ok_or_else(|| Error::UnknownCase(id.to_string()))?;
    read_case(id, &desc.images, &desc.label, schema)
}

/// [`CaseSource`] backed by the files of a [`DatasetIndex`], with an
/// optional in-memory cache.
pub struct FileDataset {
    index: DatasetIndex,
    schema: Arc<LabelSchema>,
    cache: Option<Mutex<HashMap<String, Arc<Case>>>>,
}

impl FileDataset {
    pub fn new(index: DatasetIndex, cache: bool) -> Self {
        let schema = Arc::new(index.schema.clone());
        FileDataset {
            index,
            schema,
            cache: cache.then(|| Mutex::new(HashMap::new())),
        }
    }

    pub fn index(&self) -> &DatasetIndex {
        &self.index
    }
}

impl CaseSource for FileDataset {
    fn load(&self, id: &str) -> Result<Arc<Case>> {
        let Some(cache) = &self.cache else {
            return Ok(Arc::new(load_case(&self.index, self.schema.clone(), id)?));
        };
        if let Some(c) = cache.lock().expect("case cache poisoned").get(id) {
            return Ok(c.clone());
        }
        let case = Arc::new(load_case(&self.index, self.schema.clone(), id)?);
        cache
            .lock()
            .expect("case cache poisoned")
            .entry(id.to_string())
            .or_insert_with(|| case.clone());
        Ok(case)
    }
}
