//! Synthetic multi-organ phantoms: noisy ellipsoids on a 3x3 lattice.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Case, LabelMap, LabelSchema, Shape, Volume};
use crate::rng::{derive_seed, rng_from_seed};

use super::manifest::{DatasetManifest, ManifestCase, MANIFEST_FILE};
use super::nifti_io::{case_paths, write_case};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomOrgan {
    pub label: u16,
    pub name: String,
    /// Ellipsoid center as a fraction of each grid dimension.
    pub center: [f64; 3],
    /// Semi-axes as a fraction of each grid dimension.
    pub radii: [f64; 3],
    pub mean: f32,
    pub sigma: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub shape: Shape,
    pub spacing: [f64; 3],
    pub organs: Vec<PhantomOrgan>,
    pub background_mean: f32,
    pub background_sigma: f32,
    /// Per-organ center jitter, uniform in `[-j, j]` voxels on every axis.
    pub position_jitter: i64,
    /// Per-case shift of all organs along d, uniform in `[-s, s]` voxels.
    pub field_shift: i64,
    /// Per-organ size factor, uniform in `[1 - f, 1 + f]`.
    pub size_jitter: f64,
    pub channels: usize,
    pub seed: u64,
}

/// (name, lattice cell along w and h, semi-axes in voxels on the
/// 96x144x144 grid, mean intensity)
const ORGANS: [(&str, [usize; 2], [f64; 3], f32); 9] = [
    ("lkdy", [0, 0], [7.5, 6.5, 5.5], 150.0),
    ("rkdy", [0, 2], [7.5, 6.5, 5.5], 250.0),
    ("livr", [1, 0], [9.5, 10.5, 10.5], 350.0),
    ("spln", [1, 2], [7.5, 8.5, 7.5], 450.0),
    ("llng", [2, 0], [9.5, 9.5, 10.5], 550.0),
    ("rlng", [2, 2], [9.5, 10.5, 9.5], 650.0),
    ("pcrs", [0, 1], [5.5, 9.5, 5.5], 750.0),
    ("gbdr", [2, 1], [4.5, 5.5, 4.5], 850.0),
    ("arta", [1, 1], [9.5, 4.5, 4.5], 950.0),
];

const REFERENCE_DIMS: [f64; 3] = [96.0, 144.0, 144.0];

fn lattice_organs() -> Vec<PhantomOrgan> {
    ORGANS
        .iter()
        .enumerate()
        .map(|(i, &(name, cell, radii, mean))| PhantomOrgan {
            label: i as u16 + 1,
            name: name.to_string(),
            center: [0.5, (2 * cell[0] + 1) as f64 / 6.0, (2 * cell[1] + 1) as f64 / 6.0],
            radii: [0, 1, 2].map(|a| radii[a] / REFERENCE_DIMS[a]),
            mean,
            sigma: 10.0,
        })
        .collect()
}

impl PhantomSpec {
    /// Nine organs on a 96x144x144 grid.
    pub fn standard(seed: u64) -> Self {
        PhantomSpec {
            shape: Shape::new(96, 144, 144),
            spacing: [1.0; 3],
            organs: lattice_organs(),
            background_mean: 0.0,
            background_sigma: 10.0,
            position_jitter: 12,
            field_shift: 24,
            size_jitter: 0.1,
            channels: 1,
            seed,
        }
    }

    /// The same layout on a 20x36x36 grid, for quick runs.
    pub fn small(seed: u64) -> Self {
        PhantomSpec {
            shape: Shape::new(20, 36, 36),
            position_jitter: 2,
            field_shift: 3,
            ..PhantomSpec::standard(seed)
        }
    }

    pub fn schema(&self) -> Result<LabelSchema> {
        LabelSchema::from_pairs(self.organs.iter().map(|o| (o.label, o.name.clone())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.is_empty() || self.channels == 0 || self.organs.is_empty() {
            return Err(Error::Phantom("shape, channels and organ list must be nonempty".into()));
        }
        if self.spacing.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Phantom(format!("spacing {:?} must be positive", self.spacing)));
        }
        if self.position_jitter < 0 || self.field_shift < 0 || !(0.0..1.0).contains(&self.size_jitter) {
            return Err(Error::Phantom("jitter parameters must be nonnegative".into()));
        }
        for o in &self.organs {
            if o.radii.iter().any(|r| !(*r > 0.0)) || !(o.sigma >= 0.0) {
                return Err(Error::Phantom(format!("organ {} has invalid radii or sigma", o.name)));
            }
        }
        self.schema().map_err(|e| Error::Phantom(e.to_string()))?;
        Ok(())
    }
}

pub fn phantom_case_id(i: usize) -> String {
    format!("case-{i:03}")
}

/// Radius snapped to `k + 0.5` so axis caps are more than one voxel wide.
fn snap_radius(r: f64) -> f64 {
    (r - 0.5).round().max(1.0) + 0.5
}

/// Case `i` of the phantom family described by `spec`.
pub fn generate_phantom_case(spec: &PhantomSpec, i: usize) -> Result<Case> {
    spec.validate()?;
    let id = phantom_case_id(i);
    let shape = spec.shape;
    let dims = shape.dims();
    let mut rng = rng_from_seed(derive_seed(spec.seed, i as u64));
    let schema = Arc::new(spec.schema()?);
    let jitter = |rng: &mut rand_chacha::ChaCha8Rng, j: i64| if j == 0 { 0 } else { rng.random_range(-j..=j) };
    let field = jitter(&mut rng, spec.field_shift);
    let mut labels = vec![0u16; shape.len()];
    for o in &spec.organs {
        let size = if spec.size_jitter > 0.0 {
            rng.random_range(1.0 - spec.size_jitter..=1.0 + spec.size_jitter)
        } else {
            1.0
        };
        let mut center = [0i64; 3];
        let mut radii = [0f64; 3];
        for a in 0..3 {
            center[a] = (o.center[a] * dims[a] as f64).round() as i64 + jitter(&mut rng, spec.position_jitter);
            radii[a] = snap_radius(o.radii[a] * dims[a] as f64 * size);
        }
        center[0] += field;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let ext = radii[a].floor() as i64;
            if center[a] - ext < 0 || center[a] + ext >= dims[a] as i64 {
                return Err(Error::Phantom(format!(
                    "case {id}: organ {} leaves the grid along axis {a}",
                    o.name
                )));
            }
            lo[a] = (center[a] - ext) as usize;
            hi[a] = (center[a] + ext) as usize;
        }
        for d in lo[0]..=hi[0] {
            for w in lo[1]..=hi[1] {
                for h in lo[2]..=hi[2] {
                    let q = [d, w, h];
                    let r2: f64 = (0..3)
                        .map(|a| ((q[a] as i64 - center[a]) as f64 / radii[a]).powi(2))
                        .sum();
                    if r2 > 1.0 {
                        continue;
                    }
                    let idx = shape.index(d, w, h);
                    if labels[idx] != 0 {
                        return Err(Error::Phantom(format!(
                            "case {id}: organ {} overlaps label {}",
                            o.name, labels[idx]
                        )));
                    }
                    labels[idx] = o.label;
                }
            }
        }
    }
    let mut stats = vec![(spec.background_mean, spec.background_sigma); spec.organs.iter().map(|o| o.label).max().unwrap_or(0) as usize + 1];
    for o in &spec.organs {
        stats[o.label as usize] = (o.mean, o.sigma);
    }
    let mut data = Vec::with_capacity(spec.channels * shape.len());
    for c in 0..spec.channels {
        // Later channels are dimmer, like the low-energy image of a dual-energy pair.
        let gain = 1.0 - 0.2 * c as f32;
        for &l in &labels {
            let (mean, sigma) = stats[l as usize];
            let z: f32 = StandardNormal.sample(&mut rng);
            data.push(mean * gain + sigma * z);
        }
    }
    let volume = Volume::new(shape, spec.spacing, [0.0; 3], spec.channels, data)?;
    Case::new(id, volume, LabelMap::new(shape, labels, schema)?)
}

pub fn generate_phantom_cases(spec: &PhantomSpec, n_cases: usize) -> Result<Vec<Case>> {
    if n_cases == 0 {
        return Err(Error::Phantom("n_cases must be at least 1".into()));
    }
    spec.validate()?;
    crate::par::map_range(n_cases, |i| generate_phantom_case(spec, i))
        .into_iter()
        .collect()
}

/// Writes `n_cases` phantoms and their manifest under `out_dir`.
pub fn generate_phantom_dataset(
    spec: &PhantomSpec,
    n_cases: usize,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    if n_cases == 0 {
        return Err(Error::Phantom("n_cases must be at least 1".into()));
    }
    spec.validate()?;
    let written = crate::par::map_range(n_cases, |i| -> Result<ManifestCase> {
        let case = generate_phantom_case(spec, i)?;
        let (images, label) = case_paths(out_dir, &case.id, spec.channels);
        write_case(&case, &images, &label)?;
        let rel = |p: &Path| p.strip_prefix(out_dir).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
        Ok(ManifestCase {
            id: case.id.clone(),
            images: images.iter().map(|p| rel(p)).collect(),
            label: rel(&label),
        })
    });
    let mut manifest = DatasetManifest::new(spec.schema()?, spec.channels);
    manifest.cases = written.into_iter().collect::<Result<_>>()?;
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
