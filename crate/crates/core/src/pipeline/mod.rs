//! Dataset-scale augmentation runs.
//!
//! A run expands `N` original cases into `N * multiplier` outputs. Every job
//! is fixed up front (background, source, seed) from the master seed alone,
//! so the outputs do not depend on how many workers execute them.

mod records;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use records::{median, JobStatus, RunManifest, RunRecord, RUN_MANIFEST_FILE};

use crate::dataset::{CaseSource, InMemoryDataset};
use crate::error::{Error, Result};
use crate::io::{case_paths, index_dataset, write_case, DatasetManifest, FileDataset, ManifestCase, MANIFEST_FILE, SPACING_TOLERANCE};
use crate::model::{spacing_close, Case, DatasetIndex};
use crate::rng::{derive_seed, rng_stream};
use crate::strategies::{anatomix_plan, augment, AnatoPlan, AugContext, AugSpec, StrategyKind};

/// File name of the AnatoMix donor plan written next to the run manifest.
pub const ANATOMIX_PLAN_FILE: &str = "anatomix_plan.json";

/// One planned output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugJob {
    pub output_id: String,
    pub background: String,
    pub source: Option<String>,
    pub seed: u64,
}

fn output_id(kind: StrategyKind, n: usize, originals: &BTreeSet<&str>) -> String {
    let base = format!("aug-{kind}-{n:05}");
    let mut id = base.clone();
    let mut k = 1;
    while originals.contains(id.as_str()) {
        id = format!("{base}-{k}");
        k += 1;
    }
    id
}

/// Fixes background, source and seed for all `len * multiplier` outputs.
///
/// Backgrounds cycle through the cases in id order. Pairwise strategies draw
/// the source uniformly among the other cases with the same grid.
pub fn plan_jobs(index: &DatasetIndex, kind: StrategyKind, multiplier: usize, seed: u64) -> Result<Vec<AugJob>> {
    if index.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if multiplier == 0 {
        return Err(Error::InvalidParams("multiplier must be at least 1".into()));
    }
    let originals: BTreeSet<&str> = index.cases.iter().map(|c| c.id.as_str()).collect();
    let partners: Vec<Vec<&str>> = index
        .cases
        .iter()
        .map(|bg| {
            index
                .cases
                .iter()
                .filter(|c| {
                    c.id != bg.id
                        && c.shape == bg.shape
                        && c.channels == bg.channels
                        && spacing_close(c.spacing, bg.spacing, SPACING_TOLERANCE)
                })
                .map(|c| c.id.as_str())
                .collect()
        })
        .collect();
    let n = index.len() * multiplier;
    let mut jobs = Vec::with_capacity(n);
    for i in 0..n {
        let b = i % index.len();
        let background = &index.cases[b].id;
        let job_seed = derive_seed(seed, i as u64);
        let source = if kind.needs_source() {
            let pool = &partners[b];
            if pool.is_empty() {
                return Err(Error::Planning(format!(
                    "{kind} needs a second case with the grid of {background}, and there is none"
                )));
            }
            let pick = rng_stream(job_seed, 1).random_range(0..pool.len());
            Some(pool[pick].to_string())
        } else {
            None
        };
        jobs.push(AugJob {
            output_id: output_id(kind, i, &originals),
            background: background.clone(),
            source,
            seed: job_seed,
        });
    }
    Ok(jobs)
}

/// Executes planned jobs against a case source.
pub struct Executor<'a> {
    spec: &'a AugSpec,
    cases: &'a dyn CaseSource,
    plan: Option<&'a AnatoPlan>,
}

impl<'a> Executor<'a> {
    pub fn new(spec: &'a AugSpec, cases: &'a dyn CaseSource, plan: Option<&'a AnatoPlan>) -> Result<Self> {
        spec.validate()?;
        if spec.kind() == StrategyKind::AnatoMix && plan.is_none() {
            return Err(Error::InvalidParams("anatomix runs need a donor plan".into()));
        }
        Ok(Executor { spec, cases, plan })
    }

    /// Runs one job. The output case carries the job's output id.
    pub fn execute(&self, job: &AugJob) -> Result<(Case, RunRecord)> {
        let kind = self.spec.kind();
        let wrap = |e: Error| Error::Augmentation {
            output_id: job.output_id.clone(),
            strategy: kind.to_string(),
            background: job.background.clone(),
            source: Box::new(e),
        };
        let background = self.cases.load(&job.background).map_err(wrap)?;
        let source = match &job.source {
            Some(id) => Some(self.cases.load(id).map_err(wrap)?),
            None => None,
        };
        let ctx = AugContext {
            plan: self.plan,
            cases: Some(self.cases),
        };
        let start = Instant::now();
        let (mut case, prov) =
            augment(self.spec, &background, source.as_deref(), &ctx, job.seed).map_err(wrap)?;
        let millis = start.elapsed().as_secs_f64() * 1e3;
        case.id = job.output_id.clone();
        let record = RunRecord {
            output_id: job.output_id.clone(),
            strategy: kind,
            background: prov.background,
            sources: prov.sources,
            seed: prov.seed,
            millis,
            status: JobStatus::Ok,
            error: None,
            params: Some(prov.params),
        };
        Ok((case, record))
    }
}

fn failed_record(job: &AugJob, kind: StrategyKind, err: &Error) -> RunRecord {
    RunRecord {
        output_id: job.output_id.clone(),
        strategy: kind,
        background: job.background.clone(),
        sources: job.source.iter().cloned().collect(),
        seed: job.seed,
        millis: 0.0,
        status: JobStatus::Failed,
        error: Some(err.to_string()),
        params: None,
    }
}

fn plan_for(spec: &AugSpec, index: &DatasetIndex) -> Result<Option<AnatoPlan>> {
    if spec.kind() == StrategyKind::AnatoMix {
        Ok(Some(anatomix_plan(index)?))
    } else {
        Ok(None)
    }
}

/// Runs `f` over every job on `workers` threads, stopping new jobs after the
/// first failure. Results come back in job order; skipped jobs are `None`.
fn run_jobs<R, F>(jobs: &[AugJob], workers: usize, f: F) -> Result<Vec<Option<Result<R>>>>
where
    R: Send,
    F: Fn(&AugJob) -> Result<R> + Sync + Send,
{
    let abort = AtomicBool::new(false);
    crate::par::with_workers(workers, || {
        crate::par::map_slice(jobs, |job| {
            if abort.load(Ordering::Relaxed) {
                return None;
            }
            let r = f(job);
            if r.is_err() {
                abort.store(true, Ordering::Relaxed);
            }
            Some(r)
        })
    })
}

/// Outputs of a run held in memory.
#[derive(Clone, Debug)]
pub struct InMemoryRun {
    /// Sorted by output id.
    pub outputs: Vec<Case>,
    pub manifest: RunManifest,
    pub plan: Option<AnatoPlan>,
}

/// Runs the pipeline without touching the filesystem.
pub fn run_in_memory(
    dataset: &InMemoryDataset,
    spec: &AugSpec,
    multiplier: usize,
    seed: u64,
    workers: usize,
) -> Result<InMemoryRun> {
    spec.validate()?;
    let index = dataset.index()?;
    let plan = plan_for(spec, &index)?;
    let jobs = plan_jobs(&index, spec.kind(), multiplier, seed)?;
    let exec = Executor::new(spec, dataset, plan.as_ref())?;
    let results = run_jobs(&jobs, workers, |job| exec.execute(job))?;
    let mut outputs = Vec::with_capacity(jobs.len());
    let mut records = Vec::with_capacity(jobs.len());
    for r in results.into_iter().flatten() {
        let (case, record) = r?;
        outputs.push(case);
        records.push(record);
    }
    outputs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(InMemoryRun {
        outputs,
        manifest: RunManifest::new(records),
        plan,
    })
}

/// Runs every job one after another on the calling thread and keeps only
/// the records, so each timing covers the strategy call alone with no
/// contention from other jobs and no growing pile of outputs.
pub fn measure_latency(
    dataset: &InMemoryDataset,
    spec: &AugSpec,
    multiplier: usize,
    seed: u64,
) -> Result<RunManifest> {
    spec.validate()?;
    let index = dataset.index()?;
    let plan = plan_for(spec, &index)?;
    let jobs = plan_jobs(&index, spec.kind(), multiplier, seed)?;
    let exec = Executor::new(spec, dataset, plan.as_ref())?;
    let mut records = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let (case, record) = exec.execute(job)?;
        drop(case);
        records.push(record);
    }
    Ok(RunManifest::new(records))
}

/// Settings of a run over a dataset on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Dataset manifest, or the directory holding it.
    pub input: PathBuf,
    pub output: PathBuf,
    pub spec: AugSpec,
    pub multiplier: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output: PathBuf,
    pub manifest: RunManifest,
    pub checksum: String,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn median_millis(&self) -> Option<f64> {
        self.manifest.median_millis()
    }
}

fn write_output(root: &Path, case: &Case) -> Result<ManifestCase> {
    let channels = case.volume.channels();
    let (images, label) = case_paths(root, &case.id, channels);
    write_case(case, &images, &label)?;
    let (images, label) = case_paths(Path::new(""), &case.id, channels);
    Ok(ManifestCase {
        id: case.id.clone(),
        images,
        label,
    })
}

/// Runs the pipeline over a dataset on disk and writes every output.
///
/// The output directory receives `images/`, `labels/`, a dataset manifest
/// of the successful outputs and the run manifest. On a failed job no new
/// jobs start; finished outputs stay on disk, the failure is recorded in the
/// run manifest, and its error is returned.
pub fn run(config: &PipelineConfig) -> Result<RunSummary> {
    config.spec.validate()?;
    let out = &config.output;
    if out.join(RUN_MANIFEST_FILE).exists() {
        return Err(Error::InvalidParams(format!(
            "{} already holds a run; choose an empty output directory",
            out.display()
        )));
    }
    let index = index_dataset(&config.input)?;
    let kind = config.spec.kind();
    let plan = plan_for(&config.spec, &index)?;
    let jobs = plan_jobs(&index, kind, config.multiplier, config.seed)?;
    for dir in [out.join("images"), out.join("labels")] {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let warnings = plan.as_ref().map(|p| p.warnings.clone()).unwrap_or_default();
    if let Some(p) = &plan {
        let path = out.join(ANATOMIX_PLAN_FILE);
        let text = serde_json::to_string_pretty(p).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    let schema = index.schema.clone();
    let channels = index.cases[0].channels;
    let dataset = FileDataset::new(index, true);
    let exec = Executor::new(&config.spec, &dataset, plan.as_ref())?;
    let results = run_jobs(&jobs, config.workers, |job| {
        let (case, record) = exec.execute(job)?;
        let entry = write_output(out, &case).map_err(|e| Error::Augmentation {
            output_id: job.output_id.clone(),
            strategy: kind.to_string(),
            background: job.background.clone(),
            source: Box::new(e),
        })?;
        Ok((entry, record))
    })?;

    let mut records = Vec::with_capacity(jobs.len());
    let mut dataset_manifest = DatasetManifest::new(schema, channels);
    let mut first_error = None;
    for (job, r) in jobs.iter().zip(results) {
        match r {
            None => {}
            Some(Ok((entry, record))) => {
                dataset_manifest.cases.push(entry);
                records.push(record);
            }
            Some(Err(e)) => {
                records.push(failed_record(job, kind, &e));
                first_error.get_or_insert(e);
            }
        }
    }
    let manifest = RunManifest::new(records);
    manifest.save(out.join(RUN_MANIFEST_FILE))?;
    if !dataset_manifest.cases.is_empty() {
        dataset_manifest.save(out.join(MANIFEST_FILE))?;
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(RunSummary {
        output: out.clone(),
        checksum: manifest.checksum(),
        manifest,
        warnings,
    })
}
