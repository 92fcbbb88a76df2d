use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::strategies::{AugProvenance, ParamSnapshot, StrategyKind};

/// File name of the per-output record log inside a run's output directory.
pub const RUN_MANIFEST_FILE: &str = "run_manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Ok,
    Failed,
}

/// One line of the run manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub output_id: String,
    pub strategy: StrategyKind,
    pub background: String,
    pub sources: Vec<String>,
    pub seed: u64,
    /// Wall-clock time of the strategy call alone.
    pub millis: f64,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamSnapshot>,
}

impl RunRecord {
    pub fn provenance(&self) -> Option<AugProvenance> {
        Some(AugProvenance {
            strategy: self.strategy,
            background: self.background.clone(),
            sources: self.sources.clone(),
            seed: self.seed,
            params: self.params.clone()?,
        })
    }
}

/// All records of a run, sorted by output id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    pub records: Vec<RunRecord>,
}

impl RunManifest {
    pub fn new(mut records: Vec<RunRecord>) -> Self {
        records.sort_by(|a, b| a.output_id.cmp(&b.output_id));
        RunManifest { records }
    }

    pub fn ok_count(&self) -> usize {
        self.records.iter().filter(|r| r.status == JobStatus::Ok).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| r.status == JobStatus::Failed)
    }

    pub fn median_millis(&self) -> Option<f64> {
        let mut t: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.status == JobStatus::Ok)
            .map(|r| r.millis)
            .collect();
        median(&mut t)
    }

    /// SHA-256 over the records with timings zeroed, hex encoded.
    ///
    /// Timings differ between runs; everything else is a function of the
    /// inputs and the master seed.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for r in &self.records {
            let mut r = r.clone();
            r.millis = 0.0;
            let line = serde_json::to_string(&r).expect("records serialize");
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| Error::Serde(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: RunRecord = serde_json::from_str(&line).map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", n + 1),
            })?;
            records.push(r);
        }
        Ok(RunManifest::new(records))
    }
}

/// Median of `values`; sorts in place.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}
