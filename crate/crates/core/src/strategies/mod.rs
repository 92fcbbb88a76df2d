//! The four augmentation strategies and the in-process dispatch over them.
//!
//! Every strategy pastes organs in schema order, so later organs overwrite
//! earlier ones on the label grid, and wherever a label was painted from a
//! case the image voxel came from that same case.

mod anatomix;
mod carvemix;
mod cutmix;
mod objectaug;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use anatomix::{anatomix_apply, anatomix_plan, AnatoPlan, Transplant, MAX_SPACING_MISMATCH};
pub use carvemix::carvemix;
pub use cutmix::{cutmix, cutmix_with_box, CutMixParams};
pub use objectaug::{objectaug, objectaug_with_transforms, ObjectAugParams, OrganTransform};

use crate::dataset::CaseSource;
use crate::error::{Error, Result};
use crate::fusion::BoxMask;
use crate::inpaint::{DiffusionInpainter, InpaintParams};
use crate::model::{spacing_close, Case};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    CutMix,
    ObjectAug,
    CarveMix,
    AnatoMix,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::CutMix,
        StrategyKind::ObjectAug,
        StrategyKind::CarveMix,
        StrategyKind::AnatoMix,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::CutMix => "cutmix",
            StrategyKind::ObjectAug => "objectaug",
            StrategyKind::CarveMix => "carvemix",
            StrategyKind::AnatoMix => "anatomix",
        }
    }

    /// Whether the strategy mixes the background with a second case.
    pub fn needs_source(&self) -> bool {
        matches!(self, StrategyKind::CutMix | StrategyKind::CarveMix)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidParams(format!(
                    "unknown strategy {s:?}; expected one of cutmix, objectaug, carvemix, anatomix"
                ))
            })
    }
}

/// A strategy together with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum AugSpec {
    CutMix(CutMixParams),
    ObjectAug(ObjectAugParams),
    CarveMix,
    AnatoMix,
}

impl AugSpec {
    /// Default parameters for `kind`.
    pub fn new(kind: StrategyKind) -> Self {
        match kind {
            StrategyKind::CutMix => AugSpec::CutMix(CutMixParams::default()),
            StrategyKind::ObjectAug => AugSpec::ObjectAug(ObjectAugParams::default()),
            StrategyKind::CarveMix => AugSpec::CarveMix,
            StrategyKind::AnatoMix => AugSpec::AnatoMix,
        }
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            AugSpec::CutMix(_) => StrategyKind::CutMix,
            AugSpec::ObjectAug(_) => StrategyKind::ObjectAug,
            AugSpec::CarveMix => StrategyKind::CarveMix,
            AugSpec::AnatoMix => StrategyKind::AnatoMix,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AugSpec::CutMix(p) => p.validate(),
            AugSpec::ObjectAug(p) => p.validate(),
            AugSpec::CarveMix | AugSpec::AnatoMix => Ok(()),
        }
    }
}

/// Everything a strategy drew or derived, enough to regenerate its output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamSnapshot {
    CutMix {
        lambda: f64,
        center: [usize; 3],
        lower: [usize; 3],
        upper: [usize; 3],
    },
    ObjectAug {
        organs: Vec<OrganTransform>,
        inpaint: InpaintParams,
        hole_dilation: usize,
    },
    CarveMix,
    AnatoMix {
        transplants: Vec<Transplant>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugProvenance {
    pub strategy: StrategyKind,
    pub background: String,
    pub sources: Vec<String>,
    pub seed: u64,
    pub params: ParamSnapshot,
}

/// Dataset-level inputs some strategies need beyond the cases themselves.
#[derive(Clone, Copy, Default)]
pub struct AugContext<'a> {
    pub plan: Option<&'a AnatoPlan>,
    pub cases: Option<&'a dyn CaseSource>,
}

/// Pairwise operands must agree on grid, spacing, channels and schema.
pub(crate) fn check_compatible(background: &Case, source: &Case) -> Result<()> {
    check_grid(background, source)?;
    if !spacing_close(background.volume.spacing(), source.volume.spacing(), crate::io::SPACING_TOLERANCE) {
        return Err(Error::DatasetInconsistency(format!(
            "spacing {:?} of {} differs from {:?} of {}",
            source.volume.spacing(),
            source.id,
            background.volume.spacing(),
            background.id
        )));
    }
    Ok(())
}

/// Grid, channel and schema agreement, without the spacing check.
pub(crate) fn check_grid(background: &Case, source: &Case) -> Result<()> {
    if background.shape() != source.shape() {
        return Err(Error::ShapeMismatch {
            what: "source case",
            expected: background.shape(),
            found: source.shape(),
        });
    }
    if background.volume.channels() != source.volume.channels() {
        return Err(Error::DatasetInconsistency(format!(
            "{} has {} channels, {} has {}",
            source.id,
            source.volume.channels(),
            background.id,
            background.volume.channels()
        )));
    }
    if background.schema() != source.schema() {
        return Err(Error::DatasetInconsistency(format!(
            "{} and {} use different label schemas",
            source.id, background.id
        )));
    }
    Ok(())
}

/// Runs one strategy on in-memory cases.
///
/// `source` must be given exactly when the strategy is pairwise. AnatoMix
/// reads its plan and donor cases from `ctx`.
pub fn augment(
    spec: &AugSpec,
    background: &Case,
    source: Option<&Case>,
    ctx: &AugContext<'_>,
    seed: u64,
) -> Result<(Case, AugProvenance)> {
    spec.validate()?;
    let kind = spec.kind();
    match (kind.needs_source(), source.is_some()) {
        (true, false) => {
            return Err(Error::InvalidParams(format!("{kind} needs a source case")));
        }
        (false, true) => {
            return Err(Error::InvalidParams(format!("{kind} takes no source case")));
        }
        _ => {}
    }
    match spec {
        AugSpec::CutMix(p) => cutmix(background, source.expect("checked"), p, seed),
        AugSpec::ObjectAug(p) => {
            let inpainter = DiffusionInpainter::new(p.inpaint)?;
            objectaug(background, &inpainter, p, seed)
        }
        AugSpec::CarveMix => {
            let (case, mut prov) = carvemix(background, source.expect("checked"))?;
            prov.seed = seed;
            Ok((case, prov))
        }
        AugSpec::AnatoMix => {
            let plan = ctx
                .plan
                .ok_or_else(|| Error::InvalidParams("anatomix needs a plan".into()))?;
            let cases = ctx
                .cases
                .ok_or_else(|| Error::InvalidParams("anatomix needs access to donor cases".into()))?;
            let (case, mut prov) = anatomix_apply(background, plan, cases)?;
            prov.seed = seed;
            Ok((case, prov))
        }
    }
}

/// Regenerates an output from its provenance record alone.
pub fn replay(prov: &AugProvenance, cases: &dyn CaseSource) -> Result<Case> {
    let background = cases.load(&prov.background)?;
    let source = |i: usize| -> Result<std::sync::Arc<Case>> {
        let id = prov
            .sources
            .get(i)
            .ok_or_else(|| Error::InvalidParams(format!("provenance lists no source {i}")))?;
        cases.load(id)
    };
    let case = match &prov.params {
        ParamSnapshot::CutMix { lower, upper, .. } => {
            let bbox = BoxMask::from_bounds(background.shape(), *lower, *upper)?;
            cutmix_with_box(&background, &*source(0)?, &bbox)?
        }
        ParamSnapshot::ObjectAug {
            organs,
            inpaint,
            hole_dilation,
        } => {
            let inpainter = DiffusionInpainter::new(*inpaint)?;
            objectaug_with_transforms(&background, &inpainter, organs, *hole_dilation)?
        }
        ParamSnapshot::CarveMix => carvemix(&background, &*source(0)?)?.0,
        ParamSnapshot::AnatoMix { transplants } => {
            anatomix::apply_transplants(&background, transplants, cases)?
        }
    };
    Ok(case)
}
