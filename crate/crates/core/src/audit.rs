//! Anatomy-plausibility audit of augmented cases.
//!
//! Four verdicts per case: whether every organ appears the expected number
//! of times, whether every organ piece sits where that organ sits in the
//! reference cases, whether any organ was cut into a fragment, and whether
//! any image voxel holds a value that no input case had at the voxel the
//! strategy could have copied it from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::components::{label_components, Connectivity};
use crate::dataset::CaseSource;
use crate::error::{Error, Result};
use crate::fusion::AffineMap;
use crate::model::{extract_organ_mask, Case, DatasetIndex, Shape};
use crate::pipeline::RunManifest;
use crate::strategies::{AugProvenance, ParamSnapshot, StrategyKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    pub connectivity: Connectivity,
    /// Allowed deviation from the reference mean position, in standard deviations.
    pub location_k: f64,
    /// Below this many reference cases the deviation bound is a fraction of the grid.
    pub min_reference_cases: usize,
    pub fallback_fraction: f64,
    /// A component smaller than this fraction of the smallest reference
    /// instance of its organ is a fragment.
    pub fragment_fraction: f64,
    /// Expected component count per organ; organs not listed expect 1.
    pub expected_components: BTreeMap<u16, usize>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            connectivity: Connectivity::Six,
            location_k: 3.0,
            min_reference_cases: 5,
            fallback_fraction: 0.2,
            fragment_fraction: 0.5,
            expected_components: BTreeMap::new(),
        }
    }
}

impl AuditConfig {
    pub fn expected(&self, label: u16) -> usize {
        self.expected_components.get(&label).copied().unwrap_or(1)
    }
}

/// Where and how large one organ is across the reference cases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrganReference {
    pub label: u16,
    pub cases: usize,
    /// Mean centroid relative to the mean of all organ centroids of its case.
    pub mean_offset: [f64; 3],
    pub std_offset: [f64; 3],
    /// mm³
    pub min_volume: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub case_count: usize,
    pub organs: BTreeMap<u16, OrganReference>,
}

fn frame_origin(centroids: impl Iterator<Item = [f64; 3]>) -> Option<[f64; 3]> {
    let mut n = 0usize;
    let mut sum = [0.0; 3];
    for c in centroids {
        n += 1;
        for a in 0..3 {
            sum[a] += c[a];
        }
    }
    (n > 0).then(|| sum.map(|s| s / n as f64))
}

impl ReferenceStats {
    pub fn from_index(index: &DatasetIndex) -> Result<Self> {
        if index.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut offsets: BTreeMap<u16, Vec<[f64; 3]>> = BTreeMap::new();
        let mut volumes: BTreeMap<u16, f64> = BTreeMap::new();
        for case in &index.cases {
            let stats: Vec<_> = index
                .schema
                .labels()
                .filter_map(|l| index.stats_for(&case.id, l))
                .filter(|s| s.present())
                .collect();
            let Some(origin) = frame_origin(stats.iter().filter_map(|s| s.centroid)) else {
                continue;
            };
            for s in stats {
                let c = s.centroid.expect("present organ has a centroid");
                offsets
                    .entry(s.label)
                    .or_default()
                    .push([0, 1, 2].map(|a| c[a] - origin[a]));
                let v = volumes.entry(s.label).or_insert(f64::INFINITY);
                *v = v.min(s.physical_volume);
            }
        }
        let organs = offsets
            .into_iter()
            .map(|(label, offs)| {
                let n = offs.len() as f64;
                let mean = [0, 1, 2].map(|a| offs.iter().map(|o| o[a]).sum::<f64>() / n);
                let std = [0, 1, 2].map(|a| {
                    if offs.len() < 2 {
                        return 0.0;
                    }
                    let ss: f64 = offs.iter().map(|o| (o[a] - mean[a]).powi(2)).sum();
                    (ss / (n - 1.0)).sqrt()
                });
                let r = OrganReference {
                    label,
                    cases: offs.len(),
                    mean_offset: mean,
                    std_offset: std,
                    min_volume: volumes[&label],
                };
                (label, r)
            })
            .collect();
        Ok(ReferenceStats {
            case_count: index.len(),
            organs,
        })
    }

    /// Largest allowed deviation per axis for `label` on a grid of `shape`.
    fn tolerance(&self, label: u16, shape: Shape, config: &AuditConfig) -> Option<[f64; 3]> {
        let r = self.organs.get(&label)?;
        if r.cases < config.min_reference_cases {
            let dims = shape.dims();
            return Some([0, 1, 2].map(|a| config.fallback_fraction * dims[a] as f64));
        }
        // Half a voxel of slack keeps rounding from failing organs that
        // never move in the reference set.
        Some(r.std_offset.map(|s| (config.location_k * s).max(0.5)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrganAudit {
    pub label: u16,
    pub components: usize,
    pub expected: usize,
    /// Components below the fragment size threshold.
    pub fragments: usize,
    /// Components outside the location bound.
    pub misplaced: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub output_id: String,
    pub strategy: Option<StrategyKind>,
    /// Set when no provenance was available, so the voxel check was skipped.
    pub partial: bool,
    pub organs: Vec<OrganAudit>,
    pub organ_count_correct: bool,
    pub organ_locations_correct: bool,
    pub broken_organs: bool,
    pub broken: Vec<u16>,
    pub misplaced: Vec<u16>,
    pub artificial_voxels: Option<bool>,
    pub artificial_voxel_count: Option<u64>,
    pub reference_cases: usize,
}

impl AuditReport {
    /// Any verdict that the reference cases themselves would not produce.
    pub fn has_violation(&self) -> bool {
        !self.organ_count_correct
            || !self.organ_locations_correct
            || self.broken_organs
            || self.artificial_voxels == Some(true)
    }
}

/// Audits one case. `cases` must resolve the ids named in `provenance`.
pub fn audit_case(
    case: &Case,
    provenance: Option<&AugProvenance>,
    reference: &ReferenceStats,
    cases: Option<&dyn CaseSource>,
    config: &AuditConfig,
) -> Result<AuditReport> {
    let shape = case.shape();
    let voxel_volume = case.volume.voxel_volume();
    let mut per_label = Vec::new();
    for label in case.schema().labels() {
        let m = extract_organ_mask(&case.labels, label)?;
        let comps = label_components(&m, config.connectivity).components;
        let total: u64 = comps.iter().map(|c| c.voxel_count).sum();
        let centroid = (total > 0).then(|| {
            [0, 1, 2].map(|a| comps.iter().map(|c| c.centroid[a] * c.voxel_count as f64).sum::<f64>() / total as f64)
        });
        per_label.push((label, comps, centroid));
    }
    let origin = frame_origin(per_label.iter().filter_map(|(_, _, c)| *c));
    let mut organs = Vec::new();
    for (label, comps, _) in &per_label {
        let r = reference.organs.get(label);
        let fragments = match r {
            Some(r) => comps
                .iter()
                .filter(|c| (c.voxel_count as f64 * voxel_volume) < config.fragment_fraction * r.min_volume)
                .count(),
            None => 0,
        };
        let misplaced = match (r, reference.tolerance(*label, shape, config), origin) {
            (Some(r), Some(tol), Some(origin)) => comps
                .iter()
                .filter(|c| (0..3).any(|a| (c.centroid[a] - origin[a] - r.mean_offset[a]).abs() > tol[a]))
                .count(),
            // An organ the reference never shows is out of place wherever it is.
            (None, _, _) => comps.len(),
            _ => 0,
        };
        organs.push(OrganAudit {
            label: *label,
            components: comps.len(),
            expected: config.expected(*label),
            fragments,
            misplaced,
        });
    }
    let (artificial, partial) = match (provenance, cases) {
        (Some(p), Some(src)) => (Some(count_artificial(case, p, src)?), false),
        _ => (None, true),
    };
    Ok(AuditReport {
        output_id: case.id.clone(),
        strategy: provenance.map(|p| p.strategy),
        partial,
        organ_count_correct: organs.iter().all(|o| o.components == o.expected),
        organ_locations_correct: organs.iter().all(|o| o.misplaced == 0),
        broken_organs: organs.iter().any(|o| o.fragments > 0),
        broken: organs.iter().filter(|o| o.fragments > 0).map(|o| o.label).collect(),
        misplaced: organs.iter().filter(|o| o.misplaced > 0).map(|o| o.label).collect(),
        artificial_voxels: artificial.map(|n| n > 0),
        artificial_voxel_count: artificial,
        organs,
        reference_cases: reference.case_count,
    })
}

/// Where an output voxel may have been copied from.
enum Origin {
    Same(usize),
    Shifted(usize, [i64; 3]),
    Mapped(AffineMap),
}

/// Voxels whose values match no candidate input voxel in every channel.
///
/// Copying strategies only ever move values between cases at fixed
/// positions, so each output voxel must equal one of a handful of input
/// voxels exactly; interpolated or inpainted values do not.
pub fn count_artificial(case: &Case, prov: &AugProvenance, cases: &dyn CaseSource) -> Result<u64> {
    let background = cases.load(&prov.background)?;
    let mut inputs = vec![background];
    let mut origins = vec![Origin::Same(0)];
    match &prov.params {
        ParamSnapshot::CutMix { .. } | ParamSnapshot::CarveMix => {
            for s in &prov.sources {
                inputs.push(cases.load(s)?);
                origins.push(Origin::Same(inputs.len() - 1));
            }
        }
        ParamSnapshot::AnatoMix { transplants } => {
            for t in transplants {
                inputs.push(cases.load(&t.donor)?);
                origins.push(Origin::Shifted(inputs.len() - 1, t.offset));
            }
        }
        ParamSnapshot::ObjectAug { organs, .. } => {
            for o in organs {
                origins.push(Origin::Mapped(AffineMap::new(&o.params, o.center)?));
            }
        }
    }
    let shape = case.shape();
    for c in &inputs {
        if c.shape() != shape || c.volume.channels() != case.volume.channels() {
            return Err(Error::ShapeMismatch {
                what: "audit provenance case",
                expected: shape,
                found: c.shape(),
            });
        }
    }
    let channels = case.volume.channels();
    let n = shape.len();
    let matches = |v: usize, input: usize, at: usize| {
        (0..channels).all(|ch| case.volume.channel(ch)[v] == inputs[input].volume.channel(ch)[at])
    };
    let mut count = 0u64;
    for v in 0..n {
        let c = shape.coords(v);
        let found = origins.iter().any(|o| match o {
            Origin::Same(i) => matches(v, *i, v),
            Origin::Shifted(i, off) => {
                let from = [0, 1, 2].map(|a| c[a] as i64 - off[a]);
                shape.checked_index(from).is_some_and(|at| matches(v, *i, at))
            }
            Origin::Mapped(map) => {
                let x = map.source_of(c.map(|x| x as f64));
                let from = x.map(|x| x.round() as i64);
                shape.checked_index(from).is_some_and(|at| matches(v, 0, at))
            }
        });
        if !found {
            count += 1;
        }
    }
    Ok(count)
}

/// Audits every successful output of a run.
pub fn audit_outputs(
    outputs: &[Case],
    manifest: &RunManifest,
    reference: &ReferenceStats,
    cases: &dyn CaseSource,
    config: &AuditConfig,
) -> Result<Vec<AuditReport>> {
    let provs: BTreeMap<&str, AugProvenance> = manifest
        .records
        .iter()
        .filter_map(|r| r.provenance().map(|p| (r.output_id.as_str(), p)))
        .collect();
    crate::par::map_slice(outputs, |c| {
        audit_case(c, provs.get(c.id.as_str()), reference, Some(cases), config)
    })
    .into_iter()
    .collect()
}

/// Strategy-level verdicts in the form of a plausibility comparison table.
///
/// A strategy keeps organ count and locations only if every output does,
/// and breaks organs or adds artificial voxels if any output does.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyVerdict {
    pub strategy: StrategyKind,
    pub outputs: usize,
    pub correct_organ_count: bool,
    pub correct_organ_locations: bool,
    pub broken_organs: bool,
    pub artificial_voxels: bool,
}

impl StrategyVerdict {
    pub fn from_reports(strategy: StrategyKind, reports: &[AuditReport]) -> Self {
        StrategyVerdict {
            strategy,
            outputs: reports.len(),
            correct_organ_count: reports.iter().all(|r| r.organ_count_correct),
            correct_organ_locations: reports.iter().all(|r| r.organ_locations_correct),
            broken_organs: reports.iter().any(|r| r.broken_organs),
            artificial_voxels: reports.iter().any(|r| r.artificial_voxels == Some(true)),
        }
    }

    /// `[count, locations, broken, artificial]` as "Yes"/"No".
    pub fn row(&self) -> [&'static str; 4] {
        let yn = |b: bool| if b { "Yes" } else { "No" };
        [
            yn(self.correct_organ_count),
            yn(self.correct_organ_locations),
            yn(self.broken_organs),
            yn(self.artificial_voxels),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::InMemoryDataset;
    use crate::fusion::{translate_mask, translate_volume, BoxMask, Fusable};
    use crate::io::{generate_phantom_cases, PhantomSpec};
    use crate::strategies::{cutmix_with_box, AugSpec, AugContext, augment};

    fn phantoms(n: usize) -> (InMemoryDataset, ReferenceStats) {
        let ds = InMemoryDataset::new(generate_phantom_cases(&PhantomSpec::small(3), n).unwrap()).unwrap();
        let r = ReferenceStats::from_index(&ds.index().unwrap()).unwrap();
        (ds, r)
    }

    #[test]
    fn originals_pass_every_check() {
        let (ds, r) = phantoms(8);
        for c in ds.cases() {
            let rep = audit_case(c, None, &r, None, &AuditConfig::default()).unwrap();
            assert!(rep.partial);
            assert!(!rep.has_violation(), "{rep:?}");
        }
    }

    #[test]
    fn carvemix_copies_are_not_artificial_but_blended_values_are() {
        let (ds, r) = phantoms(6);
        let bg = ds.load("case-000").unwrap();
        let src = ds.load("case-001").unwrap();
        let ctx = AugContext::default();
        let (mut out, prov) = augment(&AugSpec::new(StrategyKind::CarveMix), &bg, Some(&src), &ctx, 0).unwrap();
        let rep = audit_case(&out, Some(&prov), &r, Some(&ds), &AuditConfig::default()).unwrap();
        assert_eq!(rep.artificial_voxel_count, Some(0));
        let v = out.volume.data()[7] + 0.25;
        let mut data = out.volume.data().to_vec();
        data[7] = v;
        out.volume = out.volume.with_data(data).unwrap();
        assert_eq!(count_artificial(&out, &prov, &ds).unwrap(), 1);
    }

    fn blank_like(c: &Case) -> Case {
        let vol = c.volume.with_data(vec![0.0; c.volume.data().len()]).unwrap();
        let labels = crate::model::LabelMap::empty(c.shape(), c.schema().clone());
        Case::new("blank", vol, labels).unwrap()
    }

    fn organ_extent(c: &Case, label: u16, axis: usize) -> (usize, usize) {
        let m = extract_organ_mask(&c.labels, label).unwrap();
        let s = m.shape();
        let vals: Vec<usize> = m.indices().map(|i| s.coords(i)[axis]).collect();
        (*vals.iter().min().unwrap(), *vals.iter().max().unwrap())
    }

    #[test]
    fn bisected_organ_is_broken() {
        let (ds, r) = phantoms(6);
        let bg = ds.load("case-000").unwrap();
        let blank = blank_like(&bg);
        let (lo, _) = organ_extent(&bg, 3, 2);
        let s = bg.shape();
        // Keeps a one-voxel slab of organ 3.
        let bbox = BoxMask::from_bounds(s, [0, 0, lo + 1], [s.d, s.w, s.h]).unwrap();
        let out = cutmix_with_box(&bg, &blank, &bbox).unwrap();
        let rep = audit_case(&out, None, &r, None, &AuditConfig::default()).unwrap();
        assert!(rep.broken_organs, "{rep:?}");
        assert!(rep.broken.contains(&3));
    }

    #[test]
    fn duplicated_organ_is_miscounted_but_whole() {
        let (ds, r) = phantoms(6);
        let bg = ds.load("case-000").unwrap();
        let mut moved = bg.as_ref().clone();
        // Organ 1 of a copy shifted far along d, pasted back over the original.
        let m = extract_organ_mask(&bg.labels, 1).unwrap();
        let (d0, d1) = organ_extent(&bg, 1, 0);
        let shift = if d0 > bg.shape().d - 1 - d1 { -((d1 - d0 + 2) as i64) } else { (d1 - d0 + 2) as i64 };
        let mm = translate_mask(&m, [shift, 0, 0]);
        let mv = translate_volume(&bg.volume, [shift, 0, 0], 0.0);
        moved.volume.fuse_in_place(&mv, &mm).unwrap();
        moved.labels.paint(&mm, 1).unwrap();
        let rep = audit_case(&moved, None, &r, None, &AuditConfig::default()).unwrap();
        assert!(!rep.organ_count_correct, "{rep:?}");
        assert!(!rep.broken_organs, "{rep:?}");
        assert_eq!(rep.organs[0].components, 2);
    }

    #[test]
    fn verdict_rows() {
        let rep = |count, broken| AuditReport {
            output_id: "x".into(),
            strategy: None,
            partial: false,
            organs: vec![],
            organ_count_correct: count,
            organ_locations_correct: true,
            broken_organs: broken,
            broken: vec![],
            misplaced: vec![],
            artificial_voxels: Some(false),
            artificial_voxel_count: Some(0),
            reference_cases: 1,
        };
        let v = StrategyVerdict::from_reports(StrategyKind::CutMix, &[rep(true, false), rep(false, true)]);
        assert_eq!(v.row(), ["No", "Yes", "Yes", "No"]);
    }
}
