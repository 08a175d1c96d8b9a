//! Reference implementations used for validation and benchmarking:
//! distributed ray tracing against the bilinear terrain, uniform ray
//! stepping with the shared disc-occlusion mapping, and dense brute-force
//! cost minimization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::heightfield::{obj_to_tex, Filter, HeightField, ObjPoint};
use crate::math::{vec3, Vec3};
use crate::shadow::{compute_t, occlusion_fraction, OcclusionInput, ShadowRay};

/// Deterministic stratified sampler over the light disc's solid angle.
#[derive(Debug, Clone)]
pub struct LightDiscSampler {
    /// Unit direction toward the disc center (face-local).
    pub l_hat: Vec3,
    pub angular_radius: f64,
    pub samples: usize,
    pub seed: u64,
}

impl LightDiscSampler {
    pub fn new(l_hat: Vec3, angular_radius: f64, samples: usize, seed: u64) -> Self {
        LightDiscSampler { l_hat, angular_radius, samples, seed }
    }

    /// Stratified concentric-map sample directions within the disc.
    pub fn directions(&self) -> Vec<Vec3> {
        let (e1, e2) = orthonormal_basis(self.l_hat);
        let tan_r = self.angular_radius.tan();
        let grid = (self.samples as f64).sqrt().ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut dirs = Vec::with_capacity(self.samples);
        'outer: for j in 0..grid {
            for i in 0..grid {
                if dirs.len() == self.samples {
                    break 'outer;
                }
                let sx = (i as f64 + rng.gen::<f64>()) / grid as f64;
                let sy = (j as f64 + rng.gen::<f64>()) / grid as f64;
                let (dx, dy) = concentric_disc(sx, sy);
                dirs.push((self.l_hat + (e1 * dx + e2 * dy) * tan_r).normalized());
            }
        }
        dirs
    }
}

fn orthonormal_basis(n: Vec3) -> (Vec3, Vec3) {
    let a = if n.x.abs() < 0.9 { vec3(1.0, 0.0, 0.0) } else { vec3(0.0, 1.0, 0.0) };
    let e1 = n.cross(a).normalized();
    let e2 = n.cross(e1);
    (e1, e2)
}

/// Shirley-Chiu concentric map from the unit square to the unit disc.
fn concentric_disc(sx: f64, sy: f64) -> (f64, f64) {
    let ox = 2.0 * sx - 1.0;
    let oy = 2.0 * sy - 1.0;
    if ox == 0.0 && oy == 0.0 {
        return (0.0, 0.0);
    }
    let (r, theta) = if ox.abs() > oy.abs() {
        (ox, std::f64::consts::FRAC_PI_4 * (oy / ox))
    } else {
        (oy, std::f64::consts::FRAC_PI_2 - std::f64::consts::FRAC_PI_4 * (ox / oy))
    };
    (r * theta.cos(), r * theta.sin())
}

/// March a ray against the bilinear terrain at `step_texels` horizontal
/// resolution. Returns true if the ray dips below the surface before
/// exiting the terrain volume or the face.
pub fn march_hits_terrain(
    p: ObjPoint,
    dir: Vec3,
    hf: &HeightField,
    step_texels: f64,
    bias_texels: f64,
) -> bool {
    let meta = hf.meta;
    let height_scale = meta.body_radius / meta.vertical_scale;
    let max_h = hf.max_value();
    let step_tex = step_texels / hf.n() as f64;
    let mut x = p;
    // step clear of the origin texel, matching the DP trace's bias
    if bias_texels > 0.0 {
        match compute_t(x, dir, bias_texels / hf.n() as f64) {
            Ok(t) => x = x + dir * t,
            Err(_) => return false, // vertical ray: escapes or is handled by caller
        }
    }
    let mut prev_h = (x.norm() - 1.0) * height_scale;
    for _ in 0..(8 * hf.n()) {
        let Ok(t) = compute_t(x, dir, step_tex) else { return false };
        x = x + dir * t;
        let Ok(uv) = obj_to_tex(x) else { return false };
        if !uv.in_unit_square() {
            return false;
        }
        let tip_h = (x.norm() - 1.0) * height_scale;
        if tip_h < hf.sample_height(uv, Filter::Bilinear) {
            return true;
        }
        if tip_h > max_h && tip_h >= prev_h {
            return false; // above everything and rising
        }
        prev_h = tip_h;
    }
    false
}

/// Distributed ray tracing reference: occluded fraction of the light disc,
/// one marched ray per disc sample.
pub fn distributed_reference(
    p: ObjPoint,
    sampler: &LightDiscSampler,
    hf: &HeightField,
    bias_texels: f64,
) -> f64 {
    let dirs = sampler.directions();
    let hits = dirs
        .iter()
        .filter(|&&d| march_hits_terrain(p, d, hf, 0.5, bias_texels))
        .count();
    hits as f64 / dirs.len() as f64
}

/// Uniform-stepping baseline: fixed step count and step size, tracking the
/// minimum slope and mapping it through the same disc occlusion as the DP
/// method. `dt_tex` is the per-step horizontal advance as a fraction of the
/// full texture; `t_unit_tex` sets the slope units shared with the DP trace
/// (its level-m0 texel size). Returns (s, steps_taken).
#[allow(clippy::too_many_arguments)]
pub fn uniform_step_shadow(
    p: ObjPoint,
    l_hat: Vec3,
    hf: &HeightField,
    steps: u32,
    dt_tex: f64,
    t_unit_tex: f64,
    r_l: f64,
    n_dot_nl: f64,
    bias_texels: f64,
) -> Result<(f64, u32)> {
    let meta = hf.meta;
    let height_scale = meta.body_radius / meta.vertical_scale;
    let mut x = p;
    let mut dist_tex = 0.0f64;
    if bias_texels > 0.0 {
        match compute_t(x, l_hat, bias_texels / hf.n() as f64) {
            Ok(t) => {
                x = x + l_hat * t;
                dist_tex += bias_texels / hf.n() as f64;
            }
            Err(_) => return Ok((0.0, 0)),
        }
    }
    let mut j_min = f64::INFINITY;
    let mut taken = 0;
    for _ in 0..steps {
        let Ok(t) = compute_t(x, l_hat, dt_tex) else { break };
        x = x + l_hat * t;
        dist_tex += dt_tex;
        taken += 1;
        let Ok(uv) = obj_to_tex(x) else { break };
        if !uv.in_unit_square() {
            break;
        }
        let delta = (x.norm() - 1.0) * height_scale - hf.sample_height(uv, Filter::Bilinear);
        let j = delta / (dist_tex / t_unit_tex);
        j_min = j_min.min(j);
    }
    let occ = occlusion_fraction(OcclusionInput { j_star: j_min.min(1.0), r_l, n_dot_nl })?;
    Ok((occ.s, taken))
}

/// Exhaustive minimization of `delta h(t) = H(t) - h(texel under tip)` on a
/// uniform grid of `resolution + 1` ray parameters over the first interval
/// [0, T]. Ground truth for the DP optimality tests.
pub fn brute_force_min(ray: &ShadowRay, hf: &HeightField, resolution: usize) -> (f64, f64) {
    let height_scale = hf.meta.body_radius / hf.meta.vertical_scale;
    let mut best = f64::INFINITY;
    let mut best_t = -1.0;
    for j in 0..=resolution {
        let t = j as f64 / resolution as f64;
        let tip = ray.tip(0, t);
        let Ok(uv) = obj_to_tex(tip) else { continue };
        if !uv.in_unit_square() {
            continue;
        }
        let delta = (tip.norm() - 1.0) * height_scale - hf.sample_height(uv, Filter::Point);
        if delta < best {
            best = delta;
            best_t = t;
        }
    }
    (best, best_t)
}
