//! Dice overlap per organ and its micro/macro aggregation over samples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::LabelMap;

/// Overlap counts of one (sample, organ) pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiceCounts {
    pub intersection: u64,
    pub prediction: u64,
    pub reference: u64,
}

impl DiceCounts {
    /// `2|A∩B| / (|A|+|B|)`, undefined when both sets are empty.
    pub fn dice(&self) -> Option<f64> {
        let denom = self.prediction + self.reference;
        (denom > 0).then(|| 2.0 * self.intersection as f64 / denom as f64)
    }
}

pub fn mask_dice_counts(prediction: &BinaryMask, reference: &BinaryMask) -> Result<DiceCounts> {
    prediction.check_shape(reference, "dice reference")?;
    let mut c = DiceCounts::default();
    for (&p, &r) in prediction.data().iter().zip(reference.data()) {
        c.prediction += p as u64;
        c.reference += r as u64;
        c.intersection += (p && r) as u64;
    }
    Ok(c)
}

pub fn dice_counts(prediction: &LabelMap, reference: &LabelMap, label: u16) -> Result<DiceCounts> {
    if prediction.shape() != reference.shape() {
        return Err(Error::ShapeMismatch {
            what: "dice reference",
            expected: prediction.shape(),
            found: reference.shape(),
        });
    }
    let mut c = DiceCounts::default();
    for (&p, &r) in prediction.data().iter().zip(reference.data()) {
        let (p, r) = (p == label, r == label);
        c.prediction += p as u64;
        c.reference += r as u64;
        c.intersection += (p && r) as u64;
    }
    Ok(c)
}

/// Dice of one label; `None` when the label is absent from both maps.
pub fn dice(prediction: &LabelMap, reference: &LabelMap, label: u16) -> Result<Option<f64>> {
    Ok(dice_counts(prediction, reference, label)?.dice())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiceEntry {
    pub sample: String,
    pub label: u16,
    pub counts: DiceCounts,
    /// `None` marks an undefined entry, excluded from aggregation.
    pub dice: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Dice of the intersection and size sums pooled over all pairs.
    Micro,
    /// Unweighted mean of the per-pair dice values.
    Macro,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiceSummary {
    pub mode: Aggregation,
    pub value: f64,
    /// The same aggregation restricted to each organ.
    pub per_organ: BTreeMap<u16, f64>,
    pub defined_entries: usize,
}

/// Per (sample, organ) dice values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiceTable {
    pub entries: Vec<DiceEntry>,
}

impl DiceTable {
    pub fn new() -> Self {
        DiceTable::default()
    }

    pub fn push(&mut self, sample: impl Into<String>, label: u16, counts: DiceCounts) {
        self.entries.push(DiceEntry {
            sample: sample.into(),
            label,
            counts,
            dice: counts.dice(),
        });
    }

    /// Adds one entry per schema organ of `reference`.
    pub fn add_sample(&mut self, sample: &str, prediction: &LabelMap, reference: &LabelMap) -> Result<()> {
        if prediction.schema() != reference.schema() {
            return Err(Error::DatasetInconsistency(format!(
                "prediction and reference of {sample} use different label schemas"
            )));
        }
        for label in reference.schema().labels() {
            let c = dice_counts(prediction, reference, label)?;
            self.push(sample, label, c);
        }
        Ok(())
    }

    fn defined(&self) -> impl Iterator<Item = &DiceEntry> {
        self.entries.iter().filter(|e| e.dice.is_some())
    }

    pub fn aggregate(&self, mode: Aggregation) -> Result<DiceSummary> {
        let defined: Vec<&DiceEntry> = self.defined().collect();
        if defined.is_empty() {
            return Err(Error::EmptyTable);
        }
        let reduce = |entries: &[&DiceEntry]| -> f64 {
            match mode {
                Aggregation::Micro => {
                    let (mut i, mut s) = (0u64, 0u64);
                    for e in entries {
                        i += e.counts.intersection;
                        s += e.counts.prediction + e.counts.reference;
                    }
                    2.0 * i as f64 / s as f64
                }
                Aggregation::Macro => {
                    entries.iter().map(|e| e.dice.expect("defined")).sum::<f64>() / entries.len() as f64
                }
            }
        };
        let mut by_organ: BTreeMap<u16, Vec<&DiceEntry>> = BTreeMap::new();
        for e in &defined {
            by_organ.entry(e.label).or_default().push(e);
        }
        Ok(DiceSummary {
            mode,
            value: reduce(&defined),
            per_organ: by_organ.iter().map(|(&l, v)| (l, reduce(v))).collect(),
            defined_entries: defined.len(),
        })
    }
}
