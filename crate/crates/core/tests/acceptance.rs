//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use organmix::audit::{audit_case, AuditConfig, AuditReport, ReferenceStats, StrategyVerdict};
use organmix::dataset::{CaseSource, InMemoryDataset};
use organmix::fusion::{fuse, sample_cutmix_box, translate_mask, AffineParams, AffineRanges, BoxMask, Fusable};
use organmix::inpaint::DiffusionInpainter;
use organmix::io::{generate_phantom_cases, generate_phantom_dataset, PhantomSpec, MANIFEST_FILE};
use organmix::mask::{mask_centroid, BinaryMask};
use organmix::metrics::{mask_dice_counts, Aggregation, DiceCounts, DiceTable};
use organmix::model::{extract_organ_mask, Case, DatasetIndex, LabelMap, LabelSchema, Shape, Volume};
use organmix::pipeline::{measure_latency, run, run_in_memory, PipelineConfig, RunManifest, RUN_MANIFEST_FILE};
use organmix::rng::rng_from_seed;
use organmix::strategies::{
    anatomix_plan, augment, carvemix, cutmix_with_box, objectaug_with_transforms, AugContext, AugProvenance,
    AugSpec, ObjectAugParams, OrganTransform, ParamSnapshot, StrategyKind,
};
use rand::Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn schema3() -> Arc<LabelSchema> {
    Arc::new(LabelSchema::from_pairs([(1, "a"), (2, "b"), (3, "c")]).unwrap())
}

// ---------------------------------------------------------------- fusion

fn fusion_oracle() -> Check {
    let start = Instant::now();
    let mut rng = rng_from_seed(1);
    let schema = schema3();
    for trial in 0..1000 {
        let s = Shape::new(rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=6));
        let ch = rng.random_range(1..=3);
        let n = s.len();
        let vol = |rng: &mut rand_chacha::ChaCha8Rng| {
            let data: Vec<f32> = (0..n * ch).map(|_| rng.random_range(-1000.0..1000.0)).collect();
            Volume::new(s, [1.0; 3], [0.0; 3], ch, data).unwrap()
        };
        let (bg, src) = (vol(&mut rng), vol(&mut rng));
        let lab = |rng: &mut rand_chacha::ChaCha8Rng| {
            LabelMap::new(s, (0..n).map(|_| rng.random_range(0..=3)).collect(), schema.clone()).unwrap()
        };
        let (lbg, lsrc) = (lab(&mut rng), lab(&mut rng));
        let m = BinaryMask::from_vec(s, (0..n).map(|_| rng.random_bool(0.4)).collect()).unwrap();

        let mut want = Vec::with_capacity(n * ch);
        for c in 0..ch {
            for d in 0..s.d {
                for w in 0..s.w {
                    for h in 0..s.h {
                        let i = (d * s.w + w) * s.h + h;
                        let v = if m.get(i) { src.data()[c * n + i] } else { bg.data()[c * n + i] };
                        want.push(v);
                    }
                }
            }
        }
        let got = fuse(&bg, &src, &m).map_err(e)?;
        ensure(got.data() == want.as_slice(), || format!("volume mismatch in trial {trial}"))?;
        let want_l: Vec<u16> = (0..n)
            .map(|i| if m.get(i) { lsrc.data()[i] } else { lbg.data()[i] })
            .collect();
        let got_l = fuse(&lbg, &lsrc, &m).map_err(e)?;
        ensure(got_l.data() == want_l.as_slice(), || format!("label mismatch in trial {trial}"))?;

        let lo = [0, 1, 2].map(|a| rng.random_range(0..=s.dims()[a]));
        let hi = [0, 1, 2].map(|a| rng.random_range(lo[a]..=s.dims()[a]));
        let bbox = BoxMask::from_bounds(s, lo, hi).map_err(e)?;
        let mut boxed = bg.clone();
        boxed.fuse_box_in_place(&src, &bbox).map_err(e)?;
        ensure(boxed == fuse(&bg, &src, &bbox.to_mask()).map_err(e)?, || {
            format!("box fusion mismatch in trial {trial}")
        })?;
    }
    within(start.elapsed(), 10.0)?;
    Ok("1000 grids, volume/label/box fusion exact".into())
}

fn cutmix_box_fraction() -> Check {
    let start = Instant::now();
    let s = Shape::new(64, 64, 64);
    let mut rng = rng_from_seed(2024);
    let n = 10_000;
    let mean = (0..n).map(|_| sample_cutmix_box(s, &mut rng).unclipped_fraction()).sum::<f64>() / n as f64;
    ensure((0.48..=0.52).contains(&mean), || format!("mean fraction {mean:.4}"))?;
    within(start.elapsed(), 30.0)?;
    Ok(format!("mean pre-clip fraction {mean:.4}"))
}

// ---------------------------------------------------------------- table

fn bbox_of(mask: &BinaryMask) -> Option<([usize; 3], [usize; 3])> {
    let s = mask.shape();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for i in mask.indices() {
        any = true;
        let c = s.coords(i);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a] + 1);
        }
    }
    any.then_some((lo, hi))
}

fn disjoint(a: &([usize; 3], [usize; 3]), b: &([usize; 3], [usize; 3]), axis: usize) -> bool {
    a.1[axis] <= b.0[axis] || b.1[axis] <= a.0[axis]
}

fn mean_d(case: &Case) -> f64 {
    let fg = case.labels.foreground();
    mask_centroid(&fg).map(|c| c[0]).unwrap_or(0.0)
}

/// The case whose organs sit furthest along d from those of `bg`.
fn furthest<'a>(bg: &Case, cases: &'a [Arc<Case>]) -> &'a Arc<Case> {
    let d = mean_d(bg);
    cases
        .iter()
        .filter(|c| c.id != bg.id)
        .max_by(|a, b| (mean_d(a) - d).abs().total_cmp(&(mean_d(b) - d).abs()))
        .expect("at least two cases")
}

fn boxed(bg: &Case, src: &Case, bbox: BoxMask) -> Result<(Case, AugProvenance), String> {
    let case = cutmix_with_box(bg, src, &bbox).map_err(e)?;
    let prov = AugProvenance {
        strategy: StrategyKind::CutMix,
        background: bg.id.clone(),
        sources: vec![src.id.clone()],
        seed: 0,
        params: ParamSnapshot::CutMix {
            lambda: bbox.lambda,
            center: bbox.center,
            lower: bbox.lower,
            upper: bbox.upper,
        },
    };
    Ok((case, prov))
}

/// CutMix outputs for one background: sampled boxes, a box that carries a
/// whole source organ next to its background twin, and a box that cuts a
/// background organ down to a single slab.
fn cutmix_outputs(
    bg: &Case,
    src: &Case,
    seed: u64,
) -> Result<Vec<(Case, AugProvenance)>, String> {
    let mut out = Vec::new();
    let spec = AugSpec::new(StrategyKind::CutMix);
    let (c, p) = augment(&spec, bg, Some(src), &AugContext::default(), seed).map_err(e)?;
    out.push((c, p));
    let s = bg.shape();
    for label in bg.schema().labels() {
        let bm = bbox_of(&extract_organ_mask(&bg.labels, label).map_err(e)?);
        let sm = bbox_of(&extract_organ_mask(&src.labels, label).map_err(e)?);
        let (Some(bm), Some(sm)) = (bm, sm) else { continue };
        if !disjoint(&bm, &sm, 0) {
            continue;
        }
        // Duplicate: the source organ's bounding box, one voxel wider.
        let lo = [0, 1, 2].map(|a| sm.0[a].saturating_sub(1));
        let hi = [0, 1, 2].map(|a| (sm.1[a] + 1).min(s.dims()[a]));
        let dup = BoxMask::from_bounds(s, lo, hi).map_err(e)?;
        if !(0..3).any(|a| dup.upper[a] <= bm.0[a] || bm.1[a] <= dup.lower[a]) {
            continue;
        }
        out.push(boxed(bg, src, dup)?);
        // Cut: everything of the background organ except its lowest h slab.
        let cut = BoxMask::from_bounds(s, [bm.0[0], bm.0[1], bm.0[2] + 1], bm.1).map_err(e)?;
        out.push(boxed(bg, src, cut)?);
        break;
    }
    Ok(out)
}

fn table_matrix() -> Check {
    let start = Instant::now();
    let spec = PhantomSpec::standard(2024);
    let cases = generate_phantom_cases(&spec, 20).map_err(e)?;
    let ds = InMemoryDataset::new(cases).map_err(e)?;
    let index = ds.index().map_err(e)?;
    let reference = ReferenceStats::from_index(&index).map_err(e)?;
    let config = AuditConfig::default();
    let all: Vec<Arc<Case>> = ds.cases().cloned().collect();
    let plan = anatomix_plan(&index).map_err(e)?;
    let ctx = AugContext {
        plan: Some(&plan),
        cases: Some(&ds),
    };
    let audit = |c: &Case, p: Option<&AugProvenance>| -> Result<AuditReport, String> {
        audit_case(c, p, &reference, Some(&ds as &dyn CaseSource), &config).map_err(e)
    };

    let mut verdicts = BTreeMap::new();
    for kind in StrategyKind::ALL {
        let mut reports = Vec::new();
        for (i, bg) in all.iter().enumerate() {
            let seed = 1000 + i as u64;
            let outputs: Vec<(Case, AugProvenance)> = match kind {
                StrategyKind::CutMix => cutmix_outputs(bg, furthest(bg, &all), seed)?,
                StrategyKind::CarveMix => {
                    let near = &all[(i + 1) % all.len()];
                    let far = furthest(bg, &all);
                    let mut v = Vec::new();
                    for src in [near, far] {
                        let (c, p) = augment(&AugSpec::CarveMix, bg, Some(src), &ctx, seed).map_err(e)?;
                        v.push((c, p));
                    }
                    v
                }
                StrategyKind::ObjectAug | StrategyKind::AnatoMix => {
                    let (c, p) = augment(&AugSpec::new(kind), bg, None, &ctx, seed).map_err(e)?;
                    vec![(c, p)]
                }
            };
            for (c, p) in &outputs {
                let r = audit(c, Some(p))?;
                reports.push(r);
            }
        }
        verdicts.insert(kind, StrategyVerdict::from_reports(kind, &reports));
    }
    let expected: BTreeMap<StrategyKind, [&str; 4]> = [
        (StrategyKind::CutMix, ["No", "No", "Yes", "No"]),
        (StrategyKind::ObjectAug, ["Yes", "Yes", "No", "Yes"]),
        (StrategyKind::CarveMix, ["No", "No", "No", "No"]),
        (StrategyKind::AnatoMix, ["Yes", "Yes", "No", "No"]),
    ]
    .into();
    let mut lines = Vec::new();
    let mut ok = true;
    for (k, v) in &verdicts {
        let row = v.row();
        ok &= row == expected[k];
        lines.push(format!("{k}={} ({} outputs)", row.join("/"), v.outputs));
    }
    let summary = lines.join(", ");
    ensure(ok, || format!("matrix differs: {summary}"))?;
    within(start.elapsed(), 300.0)?;
    Ok(summary)
}

// ---------------------------------------------------------------- identities

fn identities() -> Check {
    let cases = generate_phantom_cases(&PhantomSpec::small(77), 2).map_err(e)?;
    let (bg, src) = (&cases[0], &cases[1]);
    let s = bg.shape();

    let empty = BoxMask::from_bounds(s, [3, 4, 5], [3, 9, 9]).map_err(e)?;
    ensure(cutmix_with_box(bg, src, &empty).map_err(e)? == *bg, || "empty-box cutmix".into())?;

    let blank = Case::new("blank", src.volume.clone(), LabelMap::empty(s, src.schema().clone())).map_err(e)?;
    ensure(carvemix(bg, &blank).map_err(e)?.0 == *bg, || "empty-source carvemix".into())?;

    let inpainter = DiffusionInpainter::default();
    let transforms: Vec<OrganTransform> = bg
        .schema()
        .labels()
        .map(|l| OrganTransform {
            label: l,
            params: AffineParams::identity(),
            center: mask_centroid(&extract_organ_mask(&bg.labels, l).unwrap()).unwrap(),
        })
        .collect();
    let moved = objectaug_with_transforms(bg, &inpainter, &transforms, 1).map_err(e)?;
    ensure(moved == *bg, || "identity objectaug".into())?;
    let zero = AugSpec::ObjectAug(ObjectAugParams {
        ranges: AffineRanges {
            scale: 0.0,
            shift: 0.0,
            rotation: 0.0,
        },
        ..Default::default()
    });
    let (z, _) = augment(&zero, bg, None, &AugContext::default(), 5).map_err(e)?;
    ensure(z == *bg, || "zero-range objectaug".into())?;

    let single = InMemoryDataset::new([bg.clone()]).map_err(e)?;
    let runs = run_in_memory(&single, &AugSpec::AnatoMix, 1, 3, 1).map_err(e)?;
    let out = &runs.outputs[0];
    ensure(out.volume == bg.volume && out.labels == bg.labels, || "single-case anatomix".into())?;
    Ok("cutmix, carvemix, objectaug (explicit and zero-range), anatomix all bit-exact".into())
}

// ---------------------------------------------------------------- planner

/// Cases on a 1x3x8 grid; organ `l` fills `counts[l-1]` voxels of row `l-1`.
fn line_case(id: &str, counts: [usize; 3], schema: &Arc<LabelSchema>) -> Case {
    let s = Shape::new(1, 3, 8);
    let mut labels = vec![0u16; s.len()];
    for (row, &n) in counts.iter().enumerate() {
        for h in 0..n {
            labels[s.index(0, row, h)] = row as u16 + 1;
        }
    }
    let vol = Volume::filled(s, [1.0; 3], 0.0).unwrap();
    Case::new(id, vol, LabelMap::new(s, labels, schema.clone()).unwrap()).unwrap()
}

fn exhaustive_donor(index: &DatasetIndex, recipient: &str, label: u16) -> String {
    let me = index.stats_for(recipient, label).unwrap();
    let mut best: Option<(f64, &str)> = None;
    for c in &index.cases {
        let s = index.stats_for(&c.id, label).unwrap();
        if c.id == recipient || !s.present() {
            continue;
        }
        let key = ((s.physical_volume - me.physical_volume).abs(), c.id.as_str());
        if best.is_none_or(|b| key.0 < b.0 || (key.0 == b.0 && key.1 < b.1)) {
            best = Some(key);
        }
    }
    best.map(|b| b.1.to_string()).unwrap_or_else(|| recipient.to_string())
}

fn planner() -> Check {
    let schema = schema3();
    let mut rng = rng_from_seed(55);
    let mut checked = 0usize;
    for trial in 0..300 {
        let n = rng.random_range(1..=10);
        let cases: Vec<Case> = (0..n)
            .map(|i| line_case(&format!("c{i:02}"), [0; 3].map(|_| rng.random_range(0..=8)), &schema))
            .collect();
        let index = DatasetIndex::from_cases("", cases.iter()).map_err(e)?;
        let plan = anatomix_plan(&index).map_err(e)?;
        for c in &index.cases {
            let got = plan.transplants(&c.id).unwrap();
            let present: Vec<u16> = schema
                .labels()
                .filter(|&l| index.stats_for(&c.id, l).unwrap().present())
                .collect();
            ensure(got.iter().map(|t| t.label).collect::<Vec<_>>() == present, || {
                format!("trial {trial}: organs of {} differ", c.id)
            })?;
            for t in got {
                let want = exhaustive_donor(&index, &c.id, t.label);
                ensure(t.donor == want, || {
                    format!("trial {trial}: {} organ {} got {} want {want}", c.id, t.label, t.donor)
                })?;
                checked += 1;
            }
        }
    }

    let ds = InMemoryDataset::new(generate_phantom_cases(&PhantomSpec::small(8), 10).map_err(e)?).map_err(e)?;
    let index = ds.index().map_err(e)?;
    let plan = anatomix_plan(&index).map_err(e)?;
    let mut worst = 0f64;
    for (recipient, ts) in &plan.recipients {
        let r = ds.load(recipient).map_err(e)?;
        for t in ts {
            let donor = ds.load(&t.donor).map_err(e)?;
            let moved = translate_mask(&extract_organ_mask(&donor.labels, t.label).map_err(e)?, t.offset);
            let a = mask_centroid(&moved).map_err(e)?;
            let b = mask_centroid(&extract_organ_mask(&r.labels, t.label).map_err(e)?).map_err(e)?;
            let dist = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(dist);
        }
    }
    ensure(worst <= 1.0, || format!("centroid distance {worst:.3} voxels"))?;
    Ok(format!("{checked} matches equal the exhaustive argmin; worst centroid distance {worst:.3} voxels"))
}

// ---------------------------------------------------------------- pipeline

fn files_under(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for sub in ["images", "labels"] {
        let dir = root.join(sub);
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            out.insert(format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), std::fs::read(&p).unwrap());
        }
    }
    out.insert(MANIFEST_FILE.into(), std::fs::read(root.join(MANIFEST_FILE)).unwrap());
    out
}

fn pipeline_protocol() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(e)?;
    let data = tmp.path().join("data");
    let manifest = generate_phantom_dataset(&PhantomSpec::small(20), 20, &data).map_err(e)?;
    let originals: Vec<&str> = manifest.cases.iter().map(|c| c.id.as_str()).collect();
    let config = |spec: AugSpec, multiplier, workers, out: &str| PipelineConfig {
        input: data.clone(),
        output: tmp.path().join(out),
        spec,
        multiplier,
        seed: 7,
        workers,
    };
    let mut counts = Vec::new();
    for m in [10, 25, 50] {
        let summary = run(&config(AugSpec::new(StrategyKind::CutMix), m, 4, &format!("x{m}"))).map_err(e)?;
        let n = summary.manifest.ok_count();
        ensure(n == 20 * m, || format!("x{m} gave {n} outputs"))?;
        ensure(summary.manifest.records.iter().all(|r| !originals.contains(&r.output_id.as_str())), || {
            format!("x{m}: output id collides with an original")
        })?;
        counts.push(n.to_string());
    }
    for kind in StrategyKind::ALL {
        let a = run(&config(AugSpec::new(kind), 10, 1, &format!("{kind}-w1"))).map_err(e)?;
        let b = run(&config(AugSpec::new(kind), 10, 4, &format!("{kind}-w4"))).map_err(e)?;
        ensure(a.checksum == b.checksum, || format!("{kind}: manifest checksum differs across workers"))?;
        let fa = files_under(&tmp.path().join(format!("{kind}-w1")));
        let fb = files_under(&tmp.path().join(format!("{kind}-w4")));
        ensure(fa.len() == 2 * 200 + 1 && fa == fb, || format!("{kind}: output files differ across workers"))?;
        let on_disk = RunManifest::load(tmp.path().join(format!("{kind}-w4")).join(RUN_MANIFEST_FILE)).map_err(e)?;
        ensure(on_disk.checksum() == b.checksum, || format!("{kind}: run manifest on disk differs"))?;
    }
    within(start.elapsed(), 600.0)?;
    Ok(format!(
        "outputs {}, no id collisions, all four strategies byte-identical for 1 and 4 workers",
        counts.join("/")
    ))
}

// ---------------------------------------------------------------- timing

fn latency_order() -> Check {
    let cases = generate_phantom_cases(&PhantomSpec::standard(9), 6).map_err(e)?;
    let ds = InMemoryDataset::new(cases).map_err(e)?;
    let mut med = BTreeMap::new();
    for kind in StrategyKind::ALL {
        let m = measure_latency(&ds, &AugSpec::new(kind), 2, 4).map_err(e)?;
        med.insert(kind, m.median_millis().ok_or("no timings")?);
    }
    let (c, o, v, a) = (
        med[&StrategyKind::CutMix],
        med[&StrategyKind::ObjectAug],
        med[&StrategyKind::CarveMix],
        med[&StrategyKind::AnatoMix],
    );
    let detail = format!("median ms: cutmix {c:.1}, carvemix {v:.1}, anatomix {a:.1}, objectaug {o:.1}");
    ensure(c < v && v <= a && a < o, || format!("order violated; {detail}"))?;
    ensure(5.0 * c <= v.min(a).min(o), || format!("cutmix less than 5x faster; {detail}"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- metrics

fn metrics() -> Check {
    let s = Shape::new(1, 1, 8);
    let span = |a: usize, b: usize| BinaryMask::from_coords(s, (a..b).map(|h| [0, 0, h]));
    let d = |a: &BinaryMask, b: &BinaryMask| mask_dice_counts(a, b).unwrap().dice();
    ensure(d(&span(0, 4), &span(0, 4)) == Some(1.0), || "identical".into())?;
    ensure(d(&span(0, 4), &span(4, 8)) == Some(0.0), || "disjoint".into())?;
    ensure(d(&span(0, 4), &span(2, 6)) == Some(0.5), || "half".into())?;

    // Organ A: 1000-voxel masks overlapping in 900; organ B: 10-voxel masks overlapping in 1.
    let fixture = [
        ("s1", 1u16, 900u64, 1000u64, 1000u64),
        ("s1", 2, 1, 10, 10),
        ("s2", 1, 950, 1000, 980),
        ("s2", 2, 3, 12, 10),
    ];
    let mut t = DiceTable::new();
    for (smp, l, i, p, r) in fixture {
        t.push(smp, l, DiceCounts {
            intersection: i,
            prediction: p,
            reference: r,
        });
    }
    let (mut si, mut ss) = (0f64, 0f64);
    let mut per = Vec::new();
    for (_, _, i, p, r) in fixture {
        si += i as f64;
        ss += (p + r) as f64;
        per.push(2.0 * i as f64 / (p + r) as f64);
    }
    let micro_oracle = 2.0 * si / ss;
    let macro_oracle = per.iter().sum::<f64>() / per.len() as f64;
    let micro = t.aggregate(Aggregation::Micro).map_err(e)?.value;
    let macro_ = t.aggregate(Aggregation::Macro).map_err(e)?.value;
    ensure((micro - micro_oracle).abs() <= 1e-12, || format!("micro {micro} vs {micro_oracle}"))?;
    ensure((macro_ - macro_oracle).abs() <= 1e-12, || format!("macro {macro_} vs {macro_oracle}"))?;
    ensure(macro_ < micro, || "macro should sit below micro on this fixture".into())?;
    Ok(format!("fixtures 1/0/0.5 exact; micro {micro:.6}, macro {macro_:.6} match pooled oracle"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("fusion equals brute-force loop", fusion_oracle),
        ("cutmix box volume fraction", cutmix_box_fraction),
        ("plausibility matrix on phantom suite", table_matrix),
        ("strategy identities", identities),
        ("anatomix planner optimality", planner),
        ("pipeline multipliers and determinism", pipeline_protocol),
        ("latency ordering", latency_order),
        ("dice fixtures and aggregation", metrics),
    ];
    let filter = std::env::args().nth(1).filter(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{}] {name}: {detail} ({secs:.1}s)", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why} ({secs:.1}s)", n + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
