use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use organmix::audit::{audit_outputs, AuditConfig, AuditReport, ReferenceStats, StrategyVerdict};
use organmix::dataset::{CaseSource, InMemoryDataset};
use organmix::io::{
    generate_phantom_dataset, index_dataset, manifest_path, read_case, read_labels, resolve, DatasetManifest,
    FileDataset, PhantomSpec,
};
use organmix::metrics::{Aggregation, DiceTable};
use organmix::model::Case;
use organmix::pipeline::{measure_latency, median, run, PipelineConfig, RunManifest, RUN_MANIFEST_FILE};
use organmix::strategies::{AugSpec, StrategyKind};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::{default_workers, file_table, finish, overlay, print_config, usage};
use crate::{AugmentArgs, AuditArgs, BenchArgs, EvaluateArgs, IndexArgs, PhantomArgs, Preset};

fn layer(file: Option<&Path>, command: &str, flags: &impl Serialize) -> Result<Map<String, Value>> {
    let mut m = file_table(file, command)?;
    overlay(&mut m, flags)?;
    Ok(m)
}

fn require(m: &Map<String, Value>, command: &str, keys: &[&str]) -> Result<()> {
    for k in keys {
        if !m.contains_key(*k) {
            return Err(usage(format!("{command}: --{k} is required")));
        }
    }
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads every case of a manifest's dataset, by id order.
fn manifest_cases(path: &Path) -> Result<(PathBuf, DatasetManifest)> {
    let path = manifest_path(path);
    let manifest = DatasetManifest::load(&path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((root, manifest))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexConfig {
    dataset: PathBuf,
    #[serde(default)]
    output: Option<PathBuf>,
}

pub fn index(file: Option<&Path>, args: &IndexArgs) -> Result<ExitCode> {
    let m = layer(file, "index", args)?;
    require(&m, "index", &["dataset"])?;
    let cfg: IndexConfig = finish("index", m)?;
    print_config("index", &cfg)?;

    let index = index_dataset(&cfg.dataset)?;
    let mut shapes: Vec<String> = index.cases.iter().map(|c| c.shape.to_string()).collect();
    shapes.dedup();
    println!("cases: {}", index.cases.len());
    println!("grid: {}", shapes.join(", "));
    println!("{:<6} {:<16} {:>8} {:>14}", "label", "organ", "present", "mean mm3");
    for entry in index.schema.entries() {
        let present: Vec<f64> = index
            .stats
            .iter()
            .filter(|s| s.label == entry.value && s.present())
            .map(|s| s.physical_volume)
            .collect();
        let mean = present.iter().sum::<f64>() / present.len().max(1) as f64;
        println!(
            "{:<6} {:<16} {:>8} {:>14.1}",
            entry.value,
            entry.name,
            format!("{}/{}", present.len(), index.cases.len()),
            mean
        );
    }
    if let Some(out) = &cfg.output {
        let text = serde_json::to_string_pretty(&index)?;
        std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhantomConfig {
    output: PathBuf,
    #[serde(default = "twenty")]
    cases: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "standard")]
    preset: Preset,
}

fn twenty() -> usize {
    20
}

fn standard() -> Preset {
    Preset::Standard
}

pub fn phantom(file: Option<&Path>, args: &PhantomArgs) -> Result<ExitCode> {
    let m = layer(file, "phantom", args)?;
    require(&m, "phantom", &["output"])?;
    let cfg: PhantomConfig = finish("phantom", m)?;
    print_config("phantom", &cfg)?;

    let spec = match cfg.preset {
        Preset::Standard => PhantomSpec::standard(cfg.seed),
        Preset::Small => PhantomSpec::small(cfg.seed),
    };
    log::info!("generating {} cases on a {} grid", cfg.cases, spec.shape);
    let manifest = generate_phantom_dataset(&spec, cfg.cases, &cfg.output)?;
    println!("wrote {} cases to {}", manifest.cases.len(), cfg.output.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AugmentConfig {
    input: PathBuf,
    output: PathBuf,
    spec: AugSpec,
    #[serde(default = "ten")]
    multiplier: usize,
    #[serde(default)]
    seed: u64,
    workers: usize,
}

fn ten() -> usize {
    10
}

pub fn augment(file: Option<&Path>, args: &AugmentArgs) -> Result<ExitCode> {
    let mut m = layer(file, "augment", args)?;
    if let Some(kind) = args.strategy {
        // Keep parameters from the file only when they belong to this strategy.
        let same = m
            .get("spec")
            .and_then(|s| s.get("strategy"))
            .and_then(Value::as_str)
            .is_some_and(|s| s.eq_ignore_ascii_case(kind.as_str()));
        if !same {
            m.insert("spec".into(), serde_json::to_value(AugSpec::new(kind))?);
        }
    }
    require(&m, "augment", &["input", "output"])?;
    if !m.contains_key("spec") {
        return Err(usage("augment: --strategy is required"));
    }
    default_workers(&mut m)?;
    let cfg: AugmentConfig = finish("augment", m)?;
    print_config("augment", &cfg)?;
    if cfg.multiplier == 0 || cfg.workers == 0 {
        return Err(usage("augment: --multiplier and --workers must be at least 1"));
    }
    cfg.spec.validate()?;

    log::info!(
        "{} x{} from {} into {}",
        cfg.spec.kind(),
        cfg.multiplier,
        cfg.input.display(),
        cfg.output.display()
    );
    let summary = run(&PipelineConfig {
        input: cfg.input,
        output: cfg.output,
        spec: cfg.spec,
        multiplier: cfg.multiplier,
        seed: cfg.seed,
        workers: cfg.workers,
    })?;
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    println!("outputs written: {}", summary.manifest.ok_count());
    println!("failures: {}", summary.manifest.failures().count());
    match summary.median_millis() {
        Some(ms) => println!("median ms per output: {ms:.1}"),
        None => println!("median ms per output: -"),
    }
    println!("checksum: {}", summary.checksum);
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuditCommandConfig {
    run: PathBuf,
    reference: PathBuf,
    #[serde(default)]
    strict: bool,
    report: PathBuf,
    workers: usize,
    #[serde(default)]
    checks: AuditConfig,
}

pub fn audit(file: Option<&Path>, args: &AuditArgs) -> Result<ExitCode> {
    let mut m = layer(file, "audit", args)?;
    require(&m, "audit", &["run", "reference"])?;
    if !m.contains_key("report") {
        let run: PathBuf = serde_json::from_value(m["run"].clone())?;
        m.insert("report".into(), serde_json::to_value(run.join("audit.jsonl"))?);
    }
    default_workers(&mut m)?;
    let cfg: AuditCommandConfig = finish("audit", m)?;
    print_config("audit", &cfg)?;

    let reference_index = index_dataset(&cfg.reference)?;
    let reference = ReferenceStats::from_index(&reference_index)?;
    let schema = Arc::new(reference_index.schema.clone());
    let originals = FileDataset::new(reference_index, true);
    let (root, outputs) = manifest_cases(&cfg.run)?;
    if outputs.labels != *schema {
        bail!("{} and {} use different label schemas", cfg.run.display(), cfg.reference.display());
    }
    let run_manifest = cfg.run.join(RUN_MANIFEST_FILE);
    let runs = if run_manifest.is_file() {
        RunManifest::load(&run_manifest)?
    } else {
        log::warn!("no {RUN_MANIFEST_FILE} in {}; artificial voxels are not checked", cfg.run.display());
        RunManifest::new(Vec::new())
    };

    let total = outputs.cases.len();
    let mut reports: Vec<AuditReport> = Vec::with_capacity(total);
    organmix::par::with_workers(cfg.workers, || -> Result<()> {
        // Bounded batches keep memory flat for large runs.
        for batch in outputs.cases.chunks(4 * cfg.workers) {
            let cases = batch
                .iter()
                .map(|c| {
                    let images: Vec<PathBuf> = c.images.iter().map(|p| resolve(&root, p)).collect();
                    read_case(&c.id, &images, &resolve(&root, &c.label), schema.clone())
                })
                .collect::<organmix::Result<Vec<Case>>>()?;
            reports.extend(audit_outputs(&cases, &runs, &reference, &originals, &cfg.checks)?);
            log::info!("audited {}/{total}", reports.len());
        }
        Ok(())
    })??;
    write_jsonl(&cfg.report, &reports)?;

    let mut groups: BTreeMap<Option<StrategyKind>, Vec<AuditReport>> = BTreeMap::new();
    for r in &reports {
        groups.entry(r.strategy).or_default().push(r.clone());
    }
    println!(
        "{:<10} {:>7}  {:<11} {:<15} {:<13} {:<17}",
        "strategy", "outputs", "organ count", "organ locations", "broken organs", "artificial voxels"
    );
    for (kind, group) in &groups {
        let row = match kind {
            Some(k) => StrategyVerdict::from_reports(*k, group).row(),
            None => {
                let yn = |b: bool| if b { "Yes" } else { "No" };
                [
                    yn(group.iter().all(|r| r.organ_count_correct)),
                    yn(group.iter().all(|r| r.organ_locations_correct)),
                    yn(group.iter().any(|r| r.broken_organs)),
                    "-",
                ]
            }
        };
        let name = kind.map_or("-", |k| k.as_str());
        println!(
            "{:<10} {:>7}  {:<11} {:<15} {:<13} {:<17}",
            name,
            group.len(),
            row[0],
            row[1],
            row[2],
            row[3]
        );
    }
    let violations = reports.iter().filter(|r| r.has_violation()).count();
    println!("cases with violations: {violations}/{}", reports.len());
    if cfg.strict && violations > 0 {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateConfig {
    prediction: PathBuf,
    reference: PathBuf,
    report: PathBuf,
}

pub fn evaluate(file: Option<&Path>, args: &EvaluateArgs) -> Result<ExitCode> {
    let mut m = layer(file, "evaluate", args)?;
    require(&m, "evaluate", &["prediction", "reference"])?;
    if !m.contains_key("report") {
        let pred: PathBuf = serde_json::from_value(m["prediction"].clone())?;
        m.insert("report".into(), serde_json::to_value(pred.join("dice.jsonl"))?);
    }
    let cfg: EvaluateConfig = finish("evaluate", m)?;
    print_config("evaluate", &cfg)?;

    let (pred_root, pred) = manifest_cases(&cfg.prediction)?;
    let (ref_root, reference) = manifest_cases(&cfg.reference)?;
    if pred.labels != reference.labels {
        bail!("prediction and reference use different label schemas");
    }
    let schema = Arc::new(reference.labels.clone());
    let refs: BTreeMap<&str, &Path> = reference.cases.iter().map(|c| (c.id.as_str(), c.label.as_path())).collect();
    let mut cases: Vec<_> = pred.cases.iter().collect();
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    let mut table = DiceTable::new();
    for c in cases {
        let Some(r) = refs.get(c.id.as_str()) else {
            bail!("case {} has no reference", c.id);
        };
        let (p, _) = read_labels(resolve(&pred_root, &c.label), schema.clone())?;
        let (g, _) = read_labels(resolve(&ref_root, r), schema.clone())?;
        table.add_sample(&c.id, &p, &g).with_context(|| format!("case {}", c.id))?;
    }
    write_jsonl(&cfg.report, &table.entries)?;

    let micro = table.aggregate(Aggregation::Micro)?;
    let macro_ = table.aggregate(Aggregation::Macro)?;
    println!("samples: {}", pred.cases.len());
    println!("micro dice: {:.4}", micro.value);
    println!("macro dice: {:.4}", macro_.value);
    println!("{:<6} {:<16} {:>7} {:>7}", "label", "organ", "micro", "macro");
    for (label, mi) in &micro.per_organ {
        println!(
            "{:<6} {:<16} {:>7.4} {:>7.4}",
            label,
            schema.name(*label).unwrap_or("?"),
            mi,
            macro_.per_organ[label]
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchConfig {
    input: PathBuf,
    #[serde(default = "all_strategies")]
    strategies: Vec<StrategyKind>,
    #[serde(default = "one")]
    multiplier: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    cases: Option<usize>,
}

fn all_strategies() -> Vec<StrategyKind> {
    StrategyKind::ALL.to_vec()
}

fn one() -> usize {
    1
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn bench(file: Option<&Path>, args: &BenchArgs) -> Result<ExitCode> {
    let m = layer(file, "bench", args)?;
    require(&m, "bench", &["input"])?;
    let cfg: BenchConfig = finish("bench", m)?;
    print_config("bench", &cfg)?;
    if cfg.strategies.is_empty() {
        return Err(usage("bench: no strategies given"));
    }

    let index = index_dataset(&cfg.input)?;
    let take = cfg.cases.unwrap_or(index.cases.len());
    if take == 0 {
        return Err(usage("bench: --cases must be at least 1"));
    }
    let ids: Vec<String> = index.cases.iter().take(take).map(|c| c.id.clone()).collect();
    let files = FileDataset::new(index, false);
    let dataset = InMemoryDataset::new(
        ids.iter()
            .map(|id| files.load(id).map(|c| (*c).clone()))
            .collect::<organmix::Result<Vec<Case>>>()?,
    )?;

    println!(
        "{:<10} {:>5} {:>10} {:>10} {:>10}",
        "strategy", "jobs", "mean ms", "median ms", "p95 ms"
    );
    for kind in &cfg.strategies {
        log::info!("timing {kind}");
        let manifest = measure_latency(&dataset, &AugSpec::new(*kind), cfg.multiplier, cfg.seed)?;
        let mut t: Vec<f64> = manifest.records.iter().map(|r| r.millis).collect();
        let med = median(&mut t).unwrap_or(f64::NAN);
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        println!(
            "{:<10} {:>5} {:>10.1} {:>10.1} {:>10.1}",
            kind.as_str(),
            t.len(),
            mean,
            med,
            percentile(&t, 95.0)
        );
    }
    Ok(ExitCode::SUCCESS)
}
