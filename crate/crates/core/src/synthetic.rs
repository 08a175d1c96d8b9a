//! Synthetic terrain generators used by tests, benches and examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::heightfield::{HeightField, ScaleMeta};

/// Moon-like scales with the geometric texel size at the face center
/// (2 R / n meters per texel), so meta slopes agree with object space.
pub fn moon_meta(n: usize, face_id: u8) -> ScaleMeta {
    let body_radius = 1_737_400.0;
    ScaleMeta {
        horizontal_scale: 2.0 * body_radius / n as f64,
        vertical_scale: 20_000.0,
        face_id,
        body_radius,
    }
}

/// Step ridge: a low plain with a straight raised plateau for u >= edge.
pub fn step_ridge(n: usize, meta: ScaleMeta) -> HeightField {
    let edge = (0.55 * n as f64) as usize;
    let mut values = vec![0.05; n * n];
    for iy in 0..n {
        for ix in edge..n {
            values[iy * n + ix] = 0.55;
        }
    }
    HeightField::from_values(n, values, meta).unwrap()
}

/// Crater bowl: raised rim ring around a depressed floor on a plain.
pub fn crater_bowl(n: usize, meta: ScaleMeta) -> HeightField {
    let mut values = vec![0.0; n * n];
    let rim_r = 0.12; // texture units
    let rim_w = 0.035;
    for iy in 0..n {
        for ix in 0..n {
            let u = (ix as f64 + 0.5) / n as f64 - 0.5;
            let v = (iy as f64 + 0.5) / n as f64 - 0.5;
            let r = (u * u + v * v).sqrt();
            let plain = 0.3;
            let rim = 0.45 * (-((r - rim_r) / rim_w).powi(2)).exp();
            let bowl = if r < rim_r {
                -0.22 * (0.5 + 0.5 * (std::f64::consts::PI * r / rim_r).cos())
            } else {
                0.0
            };
            values[iy * n + ix] = (plain + rim + bowl).clamp(0.0, 1.0);
        }
    }
    HeightField::from_values(n, values, meta).unwrap()
}

/// Multi-octave value noise, normalized to [0, 1].
pub fn fractal(n: usize, seed: u64, meta: ScaleMeta) -> HeightField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0f64; n * n];
    let mut cell = n / 4;
    let mut amp = 1.0;
    while cell >= 1 {
        let grid = n / cell + 2;
        let lattice: Vec<f64> = (0..grid * grid).map(|_| rng.gen()).collect();
        for y in 0..n {
            for x in 0..n {
                let gx = x as f64 / cell as f64;
                let gy = y as f64 / cell as f64;
                let (i, j) = (gx as usize, gy as usize);
                let (fx, fy) = (gx - i as f64, gy - j as f64);
                let s = |a: usize, b: usize| lattice[(j + b) * grid + i + a];
                values[y * n + x] += amp
                    * (s(0, 0) * (1.0 - fx) * (1.0 - fy)
                        + s(1, 0) * fx * (1.0 - fy)
                        + s(0, 1) * (1.0 - fx) * fy
                        + s(1, 1) * fx * fy);
            }
        }
        amp *= 0.5;
        cell /= 2;
    }
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    for v in &mut values {
        *v = (*v - min) / (max - min);
    }
    HeightField::from_values(n, values, meta).unwrap()
}

/// 1-D terrain (columns vary, rows constant): a smoothed random profile
/// replicated down every row.
pub fn ridge_profile(n: usize, seed: u64, meta: ScaleMeta) -> HeightField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut profile: Vec<f64> = vec![0.0; n];
    let mut h = 0.3f64;
    for p in profile.iter_mut() {
        h = (h + rng.gen::<f64>() * 0.12 - 0.06).clamp(0.02, 0.9);
        *p = h;
    }
    // light smoothing pass
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let a = profile[i.saturating_sub(1)];
            let b = profile[i];
            let c = profile[(i + 1).min(n - 1)];
            0.25 * a + 0.5 * b + 0.25 * c
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for iy in 0..n {
        values[iy * n..(iy + 1) * n].copy_from_slice(&smoothed);
    }
    HeightField::from_values(n, values, meta).unwrap()
}
