//! Connected-component labelling of 3-D binary masks.

use serde::{Deserialize, Serialize};

use crate::mask::BinaryMask;
use crate::model::Shape;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Face neighbours only.
    #[default]
    Six,
    /// Face, edge and corner neighbours.
    TwentySix,
}

impl Connectivity {
    fn offsets(&self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dd in -1..=1i64 {
            for dw in -1..=1i64 {
                for dh in -1..=1i64 {
                    let manhattan = dd.abs() + dw.abs() + dh.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dd, dw, dh]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub voxel_count: u64,
    pub centroid: [f64; 3],
}

/// Component id per voxel (0 = not in mask) plus per-component summaries.
#[derive(Clone, Debug)]
pub struct Components {
    pub ids: Vec<u32>,
    pub components: Vec<Component>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Labels components in scan order with an explicit-stack flood fill.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> Components {
    let shape: Shape = mask.shape();
    let offsets = connectivity.offsets();
    let mut ids = vec![0u32; shape.len()];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..shape.len() {
        if !mask.get(seed) || ids[seed] != 0 {
            continue;
        }
        let id = components.len() as u32 + 1;
        ids[seed] = id;
        stack.push(seed);
        let mut count = 0u64;
        let mut sum = [0f64; 3];
        while let Some(i) = stack.pop() {
            let c = shape.coords(i);
            count += 1;
            for a in 0..3 {
                sum[a] += c[a] as f64;
            }
            for off in &offsets {
                let n = [
                    c[0] as i64 + off[0],
                    c[1] as i64 + off[1],
                    c[2] as i64 + off[2],
                ];
                if let Some(j) = shape.checked_index(n) {
                    if mask.get(j) && ids[j] == 0 {
                        ids[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        components.push(Component {
            voxel_count: count,
            centroid: sum.map(|s| s / count as f64),
        });
    }
    Components { ids, components }
}

pub fn count_components(mask: &BinaryMask, connectivity: Connectivity) -> usize {
    label_components(mask, connectivity).len()
}
