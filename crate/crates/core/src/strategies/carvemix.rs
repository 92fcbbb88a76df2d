use crate::error::Result;
use crate::fusion::Fusable;
use crate::model::{extract_organ_mask, Case};

use super::{check_compatible, AugProvenance, ParamSnapshot, StrategyKind};

/// Carves every organ of `source` into `background` at the same voxels.
///
/// The returned provenance has seed 0; the operands fully determine the output.
pub fn carvemix(background: &Case, source: &Case) -> Result<(Case, AugProvenance)> {
    check_compatible(background, source)?;
    let mut out = background.clone();
    for label in source.schema().labels() {
        let m = extract_organ_mask(&source.labels, label)?;
        out.volume.fuse_in_place(&source.volume, &m)?;
        out.labels.paint(&m, label)?;
    }
    let prov = AugProvenance {
        strategy: StrategyKind::CarveMix,
        background: background.id.clone(),
        sources: vec![source.id.clone()],
        seed: 0,
        params: ParamSnapshot::CarveMix,
    };
    Ok((out, prov))
}
