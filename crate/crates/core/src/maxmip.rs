//! Maximum mipmap pyramid: each coarser texel stores the maximum of its 2x2
//! children, so any level-m sample is a conservative upper bound on the
//! terrain anywhere inside that texel. This is what lets the shadow trace
//! prune whole intervals while keeping per-subproblem optimality.

use crate::error::{Error, Result};
use crate::heightfield::{HeightField, ScaleMeta, TexCoord};

#[derive(Debug, Clone)]
pub struct MaxMipPyramid {
    /// levels[0] is the full-resolution grid (n x n); levels[m] has
    /// (n >> m)^2 texels; the last level is a single texel.
    levels: Vec<Vec<f64>>,
    n: usize,
    pub meta: ScaleMeta,
}

impl MaxMipPyramid {
    /// Base resolution.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of levels, including the base level.
    pub fn num_levels(&self) -> u32 {
        self.levels.len() as u32
    }

    /// Texel edge length of level m in texture units: 2^m / n.
    pub fn delta_m(&self, m: u32) -> f64 {
        (1u64 << m) as f64 / self.n as f64
    }

    pub fn level(&self, m: u32) -> &[f64] {
        &self.levels[m as usize]
    }

    pub fn level_size(&self, m: u32) -> usize {
        self.n >> m
    }

    /// Point-sampled (nearest texel) max at level m, edge-clamped.
    pub fn sample_max(&self, t: TexCoord, m: u32) -> Result<f64> {
        if m >= self.num_levels() {
            return Err(Error::MipLevelOutOfRange {
                level: m,
                levels: self.num_levels(),
            });
        }
        let size = self.level_size(m);
        let ix = ((t.u * size as f64).floor() as i64).clamp(0, size as i64 - 1) as usize;
        let iy = ((t.v * size as f64).floor() as i64).clamp(0, size as i64 - 1) as usize;
        Ok(self.levels[m as usize][iy * size + ix])
    }

    /// Level-m texel by integer coordinates; None outside the level grid.
    pub fn texel_at(&self, m: u32, ix: i64, iy: i64) -> Option<f64> {
        if m >= self.num_levels() {
            return None;
        }
        let size = self.level_size(m) as i64;
        if ix < 0 || iy < 0 || ix >= size || iy >= size {
            return None;
        }
        Some(self.levels[m as usize][(iy * size + ix) as usize])
    }

    pub fn global_max(&self) -> f64 {
        *self.levels.last().unwrap().first().unwrap()
    }
}

/// Build the pyramid; each texel is touched O(1) times (total work O(n^2)).
pub fn build_max_mipmap(hf: &HeightField) -> MaxMipPyramid {
    let n = hf.n();
    let mut levels = vec![hf.values().to_vec()];
    let mut size = n;
    while size > 1 {
        let prev = levels.last().unwrap();
        let half = size / 2;
        let mut next = vec![0.0f64; half * half];
        build_level(prev, size, &mut next, half);
        levels.push(next);
        size = half;
    }
    MaxMipPyramid { levels, n, meta: hf.meta }
}

fn build_level(prev: &[f64], size: usize, next: &mut [f64], half: usize) {
    let row = |j: usize, out: &mut [f64]| {
        for i in 0..half {
            let a = prev[(2 * j) * size + 2 * i];
            let b = prev[(2 * j) * size + 2 * i + 1];
            let c = prev[(2 * j + 1) * size + 2 * i];
            let d = prev[(2 * j + 1) * size + 2 * i + 1];
            out[i] = a.max(b).max(c).max(d);
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        next.par_chunks_mut(half)
            .enumerate()
            .for_each(|(j, out)| row(j, out));
    }
    #[cfg(not(feature = "parallel"))]
    for (j, out) in next.chunks_mut(half).enumerate() {
        row(j, out);
    }
}
