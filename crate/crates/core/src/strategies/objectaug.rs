use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{apply_affine_about, apply_affine_mask_about, AffineParams, AffineRanges, Fusable};
use crate::inpaint::{erase_organs, InpaintParams, Inpainter};
use crate::mask::{mask_centroid, BinaryMask};
use crate::model::{extract_organ_mask, Case, LabelMap};
use crate::rng::rng_from_seed;

use super::{AugProvenance, ParamSnapshot, StrategyKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectAugParams {
    pub ranges: AffineRanges,
    pub inpaint: InpaintParams,
    /// Growth in voxels of the uncovered hole before it is filled. The
    /// grown ring never reaches into pasted organs.
    pub hole_dilation: usize,
}

impl Default for ObjectAugParams {
    fn default() -> Self {
        ObjectAugParams {
            ranges: AffineRanges::default(),
            inpaint: InpaintParams::default(),
            hole_dilation: 1,
        }
    }
}

impl ObjectAugParams {
    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        self.inpaint.validate()
    }
}

/// The transform applied to one organ, about its own centroid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrganTransform {
    pub label: u16,
    pub params: AffineParams,
    pub center: [f64; 3],
}

/// Moves every organ by its own random transform over an organ-free background.
pub fn objectaug(
    background: &Case,
    inpainter: &dyn Inpainter,
    params: &ObjectAugParams,
    seed: u64,
) -> Result<(Case, AugProvenance)> {
    params.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut organs = Vec::new();
    for label in background.schema().labels() {
        let m = extract_organ_mask(&background.labels, label)?;
        if m.is_clear() {
            continue;
        }
        organs.push(OrganTransform {
            label,
            params: params.ranges.sample(&mut rng),
            center: mask_centroid(&m)?,
        });
    }
    let case = objectaug_with_transforms(background, inpainter, &organs, params.hole_dilation)?;
    let prov = AugProvenance {
        strategy: StrategyKind::ObjectAug,
        background: background.id.clone(),
        sources: Vec::new(),
        seed,
        params: ParamSnapshot::ObjectAug {
            organs,
            inpaint: params.inpaint,
            hole_dilation: params.hole_dilation,
        },
    };
    Ok((case, prov))
}

/// ObjectAug with explicit per-organ transforms.
pub fn objectaug_with_transforms(
    background: &Case,
    inpainter: &dyn Inpainter,
    organs: &[OrganTransform],
    hole_dilation: usize,
) -> Result<Case> {
    let shape = background.shape();
    let mut image = erase_organs(background, inpainter)?;
    let mut labels = LabelMap::empty(shape, background.schema().clone());
    let mut covered = BinaryMask::empty(shape);
    for t in organs {
        if !background.schema().contains(t.label) {
            return Err(Error::SchemaViolation {
                values: vec![t.label as i64],
                context: "objectaug transform".into(),
            });
        }
        let m = extract_organ_mask(&background.labels, t.label)?;
        let moved = apply_affine_about(&background.volume, &t.params, t.center, 0.0)?;
        let moved_mask = apply_affine_mask_about(&m, &t.params, t.center)?;
        image.fuse_in_place(&moved, &moved_mask)?;
        labels.paint(&moved_mask, t.label)?;
        covered.union_with(&moved_mask)?;
    }
    let mut hole = background.labels.foreground();
    hole.subtract(&covered)?;
    if hole_dilation > 0 && !hole.is_clear() {
        hole = hole.dilate(hole_dilation);
        hole.subtract(&covered)?;
    }
    let image = inpainter.inpaint(&image, &hole)?;
    Case::new(background.id.clone(), image, labels)
}
