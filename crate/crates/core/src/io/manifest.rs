use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LabelSchema;

/// File name of the dataset manifest at a dataset root.
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestCase {
    pub id: String,
    /// One file per channel, relative to the manifest's directory unless absolute.
    pub images: Vec<PathBuf>,
    pub label: PathBuf,
}

/// Catalog of a dataset: label table plus the files of every case.
///
/// ```toml
/// format_version = 1
/// channels = 1
///
/// [[labels]]
/// value = 1
/// name = "liver"
///
/// [[cases]]
/// id = "case-000"
/// images = ["images/case-000_0000.nii.gz"]
/// label = "labels/case-000.nii.gz"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub channels: usize,
    pub labels: LabelSchema,
    pub cases: Vec<ManifestCase>,
}

impl DatasetManifest {
    pub fn new(schema: LabelSchema, channels: usize) -> Self {
        DatasetManifest {
            format_version: FORMAT_VERSION,
            channels,
            labels: schema,
            cases: Vec::new(),
        }
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        let fail = |message: String| Error::Manifest {
            path: path.to_path_buf(),
            message,
        };
        if self.format_version == 0 || self.format_version > FORMAT_VERSION {
            return Err(fail(format!(
                "format_version {} is not supported (latest is {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.channels == 0 {
            return Err(fail("channels must be at least 1".into()));
        }
        let mut ids = BTreeSet::new();
        for c in &self.cases {
            if !ids.insert(c.id.as_str()) {
                return Err(fail(format!("duplicate case id {:?}", c.id)));
            }
            if c.images.len() != self.channels {
                return Err(fail(format!(
                    "case {:?} lists {} images, manifest declares {} channels",
                    c.id,
                    c.images.len(),
                    self.channels
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        manifest.validate(path)?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.validate(path)?;
        let text = toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// `path` as given if absolute, else joined onto `root`.
pub fn resolve(root: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        root.join(path)
    }
}

/// Accepts either a manifest file or a directory containing one.
pub fn manifest_path(path: impl AsRef<Path>) -> PathBuf {
    let path = path.as_ref();
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DatasetManifest {
        let mut m = DatasetManifest::new(LabelSchema::from_pairs([(1, "liver"), (2, "spleen")]).unwrap(), 1);
        m.cases.push(ManifestCase {
            id: "a".into(),
            images: vec!["images/a_0000.nii.gz".into()],
            label: "labels/a.nii.gz".into(),
        });
        m
    }

    #[test]
    fn toml_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        sample().save(&p).unwrap();
        assert_eq!(DatasetManifest::load(&p).unwrap(), sample());
        assert_eq!(manifest_path(dir.path()), p);
    }

    #[test]
    fn rejects_bad_manifests() {
        let p = Path::new("m.toml");
        let mut m = sample();
        m.channels = 2;
        assert!(m.validate(p).is_err());
        let mut m = sample();
        m.cases.push(m.cases[0].clone());
        assert!(m.validate(p).is_err());
        let mut m = sample();
        m.format_version = 99;
        assert!(m.validate(p).is_err());
    }

    #[test]
    fn unknown_keys_are_ignored() {
        let text = "format_version = 1\nchannels = 1\nfuture = true\nlabels = [{ value = 3, name = \"x\" }]\ncases = []\n";
        let m: DatasetManifest = toml::from_str(text).unwrap();
        assert_eq!(m.labels.len(), 1);
    }
}
