use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{sample_cutmix_box_with, BoxMask, Fusable, DEFAULT_CUTMIX_BETA};
use crate::model::Case;
use crate::rng::rng_from_seed;

use super::{check_compatible, AugProvenance, ParamSnapshot, StrategyKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutMixParams {
    /// Beta distribution of the mixing ratio.
    pub alpha: f64,
    pub beta: f64,
}

impl Default for CutMixParams {
    fn default() -> Self {
        let (alpha, beta) = DEFAULT_CUTMIX_BETA;
        CutMixParams { alpha, beta }
    }
}

impl CutMixParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "CutMix Beta parameters must be positive, got ({}, {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Pastes one random box of `source` into `background`.
pub fn cutmix(
    background: &Case,
    source: &Case,
    params: &CutMixParams,
    seed: u64,
) -> Result<(Case, AugProvenance)> {
    check_compatible(background, source)?;
    let mut rng = rng_from_seed(seed);
    let bbox = sample_cutmix_box_with(background.shape(), params.alpha, params.beta, &mut rng)?;
    let case = cutmix_with_box(background, source, &bbox)?;
    let prov = AugProvenance {
        strategy: StrategyKind::CutMix,
        background: background.id.clone(),
        sources: vec![source.id.clone()],
        seed,
        params: ParamSnapshot::CutMix {
            lambda: bbox.lambda,
            center: bbox.center,
            lower: bbox.lower,
            upper: bbox.upper,
        },
    };
    Ok((case, prov))
}

/// Image and labels both take `source` inside the box, `background` outside.
pub fn cutmix_with_box(background: &Case, source: &Case, bbox: &BoxMask) -> Result<Case> {
    check_compatible(background, source)?;
    let mut out = background.clone();
    out.volume.fuse_box_in_place(&source.volume, bbox)?;
    out.labels.fuse_box_in_place(&source.labels, bbox)?;
    Ok(out)
}
