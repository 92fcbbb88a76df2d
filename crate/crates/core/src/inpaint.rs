//! Hole filling for the organ-free background used by ObjectAug.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{Case, Volume};

/// Fills the voxels of a hole from their surroundings.
///
/// Implementations must leave every voxel outside the hole untouched.
pub trait Inpainter: Send + Sync {
    fn inpaint(&self, volume: &Volume, hole: &BinaryMask) -> Result<Volume>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InpaintParams {
    pub max_iterations: usize,
    /// Stop once no voxel moves by this much in one sweep.
    pub epsilon: f64,
}

impl Default for InpaintParams {
    fn default() -> Self {
        InpaintParams {
            max_iterations: 500,
            epsilon: 0.1,
        }
    }
}

impl InpaintParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParams(format!("invalid inpaint parameters {self:?}")));
        }
        Ok(())
    }
}

/// Jacobi diffusion over 6-neighbourhoods, seeded with the boundary mean.
#[derive(Clone, Copy, Debug, Default)]
pub struct DiffusionInpainter {
    pub params: InpaintParams,
}

impl DiffusionInpainter {
    pub fn new(params: InpaintParams) -> Result<Self> {
        params.validate()?;
        Ok(DiffusionInpainter { params })
    }
}

impl Inpainter for DiffusionInpainter {
    fn inpaint(&self, volume: &Volume, hole: &BinaryMask) -> Result<Volume> {
        inpaint(volume, hole, &self.params)
    }
}

const NONE: u32 = u32::MAX;

/// Neighbour structure of the hole, shared by all channels.
struct Stencil {
    voxels: Vec<usize>,
    /// Positions in `voxels` of hole neighbours, `NONE`-padded.
    hole_nbrs: Vec<[u32; 6]>,
    /// Grid indices of fixed (non-hole) neighbours, `usize::MAX`-padded.
    fixed_nbrs: Vec<[usize; 6]>,
    degree: Vec<u8>,
    boundary: Vec<usize>,
}

fn build_stencil(hole: &BinaryMask) -> Stencil {
    let s = hole.shape();
    let voxels: Vec<usize> = hole.indices().collect();
    let mut pos = vec![NONE; s.len()];
    for (k, &i) in voxels.iter().enumerate() {
        pos[i] = k as u32;
    }
    let mut hole_nbrs = Vec::with_capacity(voxels.len());
    let mut fixed_nbrs = Vec::with_capacity(voxels.len());
    let mut degree = Vec::with_capacity(voxels.len());
    let mut on_boundary = vec![false; s.len()];
    for &i in &voxels {
        let [d, w, h] = s.coords(i);
        let mut hn = [NONE; 6];
        let mut fx = [usize::MAX; 6];
        let (mut nh, mut nf) = (0, 0);
        let candidates = [
            (d > 0).then(|| i - s.slice_len()),
            (d + 1 < s.d).then(|| i + s.slice_len()),
            (w > 0).then(|| i - s.h),
            (w + 1 < s.w).then(|| i + s.h),
            (h > 0).then(|| i - 1),
            (h + 1 < s.h).then(|| i + 1),
        ];
        for j in candidates.into_iter().flatten() {
            if pos[j] != NONE {
                hn[nh] = pos[j];
                nh += 1;
            } else {
                fx[nf] = j;
                nf += 1;
                on_boundary[j] = true;
            }
        }
        hole_nbrs.push(hn);
        fixed_nbrs.push(fx);
        degree.push((nh + nf) as u8);
    }
    let boundary = on_boundary
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect();
    Stencil {
        voxels,
        hole_nbrs,
        fixed_nbrs,
        degree,
        boundary,
    }
}

/// Replaces the hole voxels of every channel by a harmonic fill.
///
/// Voxels outside `hole` are returned bit-for-bit. Updates are Jacobi
/// sweeps, so the result does not depend on how work is split.
pub fn inpaint(volume: &Volume, hole: &BinaryMask, params: &InpaintParams) -> Result<Volume> {
    params.validate()?;
    if hole.shape() != volume.shape() {
        return Err(Error::ShapeMismatch {
            what: "inpaint hole",
            expected: volume.shape(),
            found: hole.shape(),
        });
    }
    let stencil = build_stencil(hole);
    if stencil.voxels.is_empty() {
        return Ok(volume.clone());
    }
    if stencil.boundary.is_empty() {
        return Err(Error::Unfillable);
    }
    let mut out = volume.clone();
    for c in 0..volume.channels() {
        let filled = fill_channel(volume.channel(c), &stencil, params);
        let dst = out.channel_mut(c);
        for (&i, v) in stencil.voxels.iter().zip(filled) {
            dst[i] = v as f32;
        }
    }
    Ok(out)
}

fn fill_channel(src: &[f32], st: &Stencil, params: &InpaintParams) -> Vec<f64> {
    let seed = st.boundary.iter().map(|&i| src[i] as f64).sum::<f64>() / st.boundary.len() as f64;
    let fixed_sum: Vec<f64> = st
        .fixed_nbrs
        .iter()
        .map(|f| {
            f.iter()
                .take_while(|&&j| j != usize::MAX)
                .map(|&j| src[j] as f64)
                .sum()
        })
        .collect();
    let mut cur = vec![seed; st.voxels.len()];
    let mut next = cur.clone();
    const CHUNK: usize = 4096;
    for _ in 0..params.max_iterations {
        let prev = &cur;
        crate::par::for_each_chunk_mut(&mut next, CHUNK, |off, chunk| {
            for (k, v) in chunk.iter_mut().enumerate() {
                let p = off + k;
                let mut sum = fixed_sum[p];
                for &q in st.hole_nbrs[p].iter().take_while(|&&q| q != NONE) {
                    sum += prev[q as usize];
                }
                *v = sum / st.degree[p] as f64;
            }
        });
        let delta = max_abs_diff(&cur, &next);
        std::mem::swap(&mut cur, &mut next);
        if delta < params.epsilon {
            break;
        }
    }
    cur
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// The case image with every labelled voxel inpainted away.
pub fn erase_organs(case: &Case, inpainter: &dyn Inpainter) -> Result<Volume> {
    inpainter.inpaint(&case.volume, &case.labels.foreground())
}
