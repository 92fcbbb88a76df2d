//! Access to the original cases of a dataset, in memory or on disk.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Case, DatasetIndex};

/// Read-only lookup of original cases by id.
pub trait CaseSource: Send + Sync {
    fn load(&self, id: &str) -> Result<Arc<Case>>;
}

/// Cases held in memory, keyed by id.
#[derive(Clone, Debug, Default)]
pub struct InMemoryDataset {
    cases: BTreeMap<String, Arc<Case>>,
}

impl InMemoryDataset {
    pub fn new(cases: impl IntoIterator<Item = Case>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for c in cases {
            let id = c.id.clone();
            if map.insert(id.clone(), Arc::new(c)).is_some() {
                return Err(Error::DatasetInconsistency(format!("duplicate case id {id:?}")));
            }
        }
        if map.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(InMemoryDataset { cases: map })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn cases(&self) -> impl Iterator<Item = &Arc<Case>> {
        self.cases.values()
    }

    pub fn index(&self) -> Result<DatasetIndex> {
        DatasetIndex::from_cases("", self.cases.values().map(|c| c.as_ref()))
    }
}

impl CaseSource for InMemoryDataset {
    fn load(&self, id: &str) -> Result<Arc<Case>> {
        self.cases
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownCase(id.to_string()))
    }
}
