//! NIfTI files, dataset manifests, indexing and phantom generation.

mod index;
mod manifest;
mod nifti_io;
mod phantom;

pub use index::{index_dataset, load_case, FileDataset};
pub use manifest::{manifest_path, resolve, DatasetManifest, ManifestCase, FORMAT_VERSION, MANIFEST_FILE};
pub use nifti_io::{
    case_paths, read_case, read_labels, read_volume, write_case, write_labels, write_volume,
    SPACING_TOLERANCE,
};
pub use phantom::{
    generate_phantom_case, generate_phantom_cases, generate_phantom_dataset, phantom_case_id,
    PhantomOrgan, PhantomSpec,
};
