use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::CaseSource;
use crate::error::{Error, Result};
use crate::fusion::{translate_mask, translate_volume, Fusable};
use crate::model::{extract_organ_mask, Case, DatasetIndex};

use super::{AugProvenance, ParamSnapshot, StrategyKind};

/// Largest relative spacing difference allowed between any two cases.
pub const MAX_SPACING_MISMATCH: f64 = 0.05;

/// One organ of a recipient replaced by the same organ of a donor case.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transplant {
    pub label: u16,
    pub donor: String,
    /// Integer voxel shift applied to the donor, `(d, w, h)`.
    pub offset: [i64; 3],
}

/// Size-matched donor and alignment offset for every present organ of every case.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnatoPlan {
    /// Recipient case id to its transplants, in schema order.
    pub recipients: BTreeMap<String, Vec<Transplant>>,
    pub warnings: Vec<String>,
}

impl AnatoPlan {
    pub fn transplants(&self, recipient: &str) -> Option<&[Transplant]> {
        self.recipients.get(recipient).map(Vec::as_slice)
    }
}

struct Candidate<'a> {
    id: &'a str,
    volume: f64,
    centroid: [f64; 3],
}

/// Donor index for `candidates[p]`, which must be sorted by (volume, id).
///
/// The closest volume sits next to `p` on one side or the other, so only
/// the runs of equally distant entries adjacent to `p` need comparing.
fn nearest_donor(candidates: &[Candidate<'_>], p: usize) -> usize {
    let v = candidates[p].volume;
    let diff = |i: usize| (candidates[i].volume - v).abs();
    let mut best: Option<(f64, usize)> = None;
    let mut consider = |i: usize| {
        let better = match best {
            None => true,
            Some((d, j)) => diff(i) < d || (diff(i) == d && candidates[i].id < candidates[j].id),
        };
        if better {
            best = Some((diff(i), i));
        }
    };
    if p > 0 {
        let dl = diff(p - 1);
        let mut i = p - 1;
        loop {
            consider(i);
            if i == 0 || diff(i - 1) != dl {
                break;
            }
            i -= 1;
        }
    }
    if p + 1 < candidates.len() {
        let dr = diff(p + 1);
        let mut i = p + 1;
        while i < candidates.len() && diff(i) == dr {
            consider(i);
            i += 1;
        }
    }
    best.expect("at least two candidates").1
}

/// Matches each present organ to the closest-sized same organ in another case.
///
/// Offsets align the donor centroid onto the recipient's, rounded per axis.
/// An organ present in fewer than two cases is mapped onto itself with a
/// zero offset and a warning.
pub fn anatomix_plan(index: &DatasetIndex) -> Result<AnatoPlan> {
    if index.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let first = &index.cases[0];
    for c in &index.cases[1..] {
        for a in 0..3 {
            let rel = (c.spacing[a] - first.spacing[a]).abs() / first.spacing[a];
            if rel > MAX_SPACING_MISMATCH {
                return Err(Error::Planning(format!(
                    "spacing {:?} of {} differs from {:?} of {} by more than {}%",
                    c.spacing,
                    c.id,
                    first.spacing,
                    first.id,
                    MAX_SPACING_MISMATCH * 100.0
                )));
            }
        }
    }
    let mut plan = AnatoPlan::default();
    for c in &index.cases {
        plan.recipients.insert(c.id.clone(), Vec::new());
    }
    for label in index.schema.labels() {
        let mut candidates: Vec<Candidate<'_>> = index
            .organ_stats(label)
            .filter_map(|s| {
                s.centroid.map(|centroid| Candidate {
                    id: s.case_id.as_str(),
                    volume: s.physical_volume,
                    centroid,
                })
            })
            .collect();
        candidates.sort_by(|a, b| a.volume.total_cmp(&b.volume).then_with(|| a.id.cmp(b.id)));
        if candidates.len() < 2 {
            let name = index.schema.name(label).unwrap_or("?");
            plan.warnings.push(format!(
                "organ {label} ({name}) is present in {} case(s); it is kept in place",
                candidates.len()
            ));
            log::warn!("{}", plan.warnings.last().expect("just pushed"));
        }
        for p in 0..candidates.len() {
            let (donor, offset) = if candidates.len() < 2 {
                (candidates[p].id, [0; 3])
            } else {
                let q = nearest_donor(&candidates, p);
                let off = [0, 1, 2].map(|a| (candidates[p].centroid[a] - candidates[q].centroid[a]).round() as i64);
                (candidates[q].id, off)
            };
            plan.recipients
                .get_mut(candidates[p].id)
                .expect("recipient registered")
                .push(Transplant {
                    label,
                    donor: donor.to_string(),
                    offset,
                });
        }
    }
    let order: BTreeMap<u16, usize> = index.schema.labels().enumerate().map(|(i, l)| (l, i)).collect();
    for list in plan.recipients.values_mut() {
        list.sort_by_key(|t| order[&t.label]);
    }
    Ok(plan)
}

/// Transplants the planned donor organs into `background`.
pub fn anatomix_apply(
    background: &Case,
    plan: &AnatoPlan,
    cases: &dyn CaseSource,
) -> Result<(Case, AugProvenance)> {
    let transplants = plan.transplants(&background.id).ok_or_else(|| {
        Error::Planning(format!("plan does not cover case {}", background.id))
    })?;
    let case = apply_transplants(background, transplants, cases)?;
    let mut sources: Vec<String> = transplants
        .iter()
        .map(|t| t.donor.clone())
        .filter(|d| *d != background.id)
        .collect();
    sources.sort();
    sources.dedup();
    let prov = AugProvenance {
        strategy: StrategyKind::AnatoMix,
        background: background.id.clone(),
        sources,
        seed: 0,
        params: ParamSnapshot::AnatoMix {
            transplants: transplants.to_vec(),
        },
    };
    Ok((case, prov))
}

pub(crate) fn apply_transplants(
    background: &Case,
    transplants: &[Transplant],
    cases: &dyn CaseSource,
) -> Result<Case> {
    let mut out = background.clone();
    for t in transplants {
        if t.donor == background.id && t.offset == [0; 3] {
            continue;
        }
        let donor = cases.load(&t.donor)?;
        super::check_grid(background, &donor)?;
        let m = translate_mask(&extract_organ_mask(&donor.labels, t.label)?, t.offset);
        let moved = translate_volume(&donor.volume, t.offset, 0.0);
        out.volume.fuse_in_place(&moved, &m)?;
        out.labels.paint(&m, t.label)?;
    }
    Ok(out)
}
