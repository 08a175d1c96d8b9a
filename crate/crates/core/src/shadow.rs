//! Dynamic-programming soft-shadow trace over the maximum mipmap.
//!
//! A single shadow ray is shot from the surface point toward the light-disc
//! center. Per mip level the trace samples up to three pyramid texels under
//! the half-texel footprint of the ray, keeps the minimum of
//! `delta = tip_height - max_h`, and refines the search window around the
//! argmin while stepping one level finer. The resulting optimal cost
//! `J* = delta*/t*` drives an analytic disc-occlusion fraction.

use crate::error::{Error, Result};
use crate::heightfield::{obj_to_tex, ObjPoint};
use crate::math::{vec3, Vec3};
use crate::maxmip::MaxMipPyramid;

/// Squared-cross-product threshold below which the ray is treated as having
/// no horizontal footprint (body-radius units).
const DEGENERATE_EPS: f64 = 1e-18;

/// Per-interval step counts; the start mip level of interval i is
/// `schedule[i] - 1`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceConfig {
    pub schedule: Vec<u32>,
    /// Start offset of the shadow ray, in base texels of horizontal
    /// footprint, to step clear of the origin's own texel.
    pub bias_texels: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig { schedule: vec![5, 5, 5], bias_texels: 1.0 }
    }
}

impl TraceConfig {
    pub fn validate(&self, pyramid_levels: u32) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::InvalidScene("empty trace schedule".into()));
        }
        for &np in &self.schedule {
            if np < 1 || np >= pyramid_levels {
                return Err(Error::MipLevelOutOfRange {
                    level: np,
                    levels: pyramid_levels,
                });
            }
        }
        Ok(())
    }

    /// Upper bound on pyramid samples: 3 per level, per interval.
    pub fn sample_budget(&self) -> u32 {
        self.schedule.iter().map(|&np| 3 * np).sum()
    }
}

/// Ray length T that advances the projected tip by `delta_m` texture units
/// along the ray's gnomonic footprint direction, via the two-line
/// intersection T = ((c x b) . (a x b)) / |a x b|^2 with a = L, b = R_end,
/// c = -R. The footprint direction is the image of the ray under the
/// projection, d/dt (R + t L)/(R + t L).z at t = 0, which equals
/// L_xy R.z - R_xy L.z up to positive scale; both lines are then coplanar
/// and the intersection is exact. The factor of 2 on the offset converts
/// texture units to the face plane spanning [-1, 1].
pub fn compute_t(start: ObjPoint, l_hat: Vec3, delta_m: f64) -> Result<f64> {
    if start.z <= 0.0 {
        return Err(Error::BehindFacePlane { z: start.z });
    }
    let r = start;
    let horiz = vec3(
        l_hat.x * r.z - r.x * l_hat.z,
        l_hat.y * r.z - r.y * l_hat.z,
        0.0,
    );
    if horiz.norm_sq() < DEGENERATE_EPS {
        return Err(Error::NoHorizontalFootprint);
    }
    let b = r / r.z + horiz.normalized() * (2.0 * delta_m);
    let a = l_hat;
    let c = -r;
    let axb = a.cross(b);
    let denom = axb.norm_sq();
    if denom < DEGENERATE_EPS {
        return Err(Error::NoHorizontalFootprint);
    }
    let t = c.cross(b).dot(axb) / denom;
    if t <= 0.0 {
        return Err(Error::NoHorizontalFootprint);
    }
    Ok(t)
}

/// Shadow ray with its per-texel length precomputed.
#[derive(Debug, Clone, Copy)]
pub struct ShadowRay {
    /// Biased start point R = p + bias * L (face-local object space).
    pub origin: ObjPoint,
    pub l_hat: Vec3,
    /// Object-space length covering one level-m0 mipmap texel.
    pub t_len: f64,
    /// Object-space bias applied ahead of `origin`'s source point.
    pub bias: f64,
    /// Texture-space size of one level-m0 texel.
    pub delta_m0: f64,
}

impl ShadowRay {
    pub fn new(
        p: ObjPoint,
        l_hat: Vec3,
        pyr: &MaxMipPyramid,
        cfg: &TraceConfig,
    ) -> Result<ShadowRay> {
        let m0 = cfg.schedule[0] - 1;
        let delta_m0 = pyr.delta_m(m0);
        let bias = if cfg.bias_texels > 0.0 {
            compute_t(p, l_hat, cfg.bias_texels / pyr.n() as f64)?
        } else {
            0.0
        };
        let origin = p + l_hat * bias;
        let t_len = compute_t(origin, l_hat, delta_m0)?;
        Ok(ShadowRay { origin, l_hat, t_len, bias, delta_m0 })
    }

    /// Tip position at interval-local parameter `t` of interval `interval`.
    pub fn tip(&self, interval: u32, t: f64) -> ObjPoint {
        self.origin + self.l_hat * ((interval as f64 + t) * self.t_len)
    }
}

/// Up to three level-m texel coordinates overlapped by a segment of length
/// `delta_m(m) / 2` starting at `start` in texture units. Superset of the
/// canonical DDA visit set on the same segment.
pub fn dda_candidates(start: (f64, f64), dir: (f64, f64), m: u32, n: usize) -> Vec<(i64, i64)> {
    dda_entries(start, dir, m, n)
        .into_iter()
        .map(|(cell, _)| cell)
        .collect()
}

/// Footprint texels paired with the segment fraction in [0, 1] at which the
/// segment enters each of them (the start texel is entered at 0).
pub fn dda_entries(
    start: (f64, f64),
    dir: (f64, f64),
    m: u32,
    n: usize,
) -> Vec<((i64, i64), f64)> {
    let cell = (1u64 << m) as f64 / n as f64;
    let half = 0.5 * cell;
    let end = (start.0 + dir.0 * half, start.1 + dir.1 * half);
    let c0 = ((start.0 / cell).floor() as i64, (start.1 / cell).floor() as i64);
    let c1 = ((end.0 / cell).floor() as i64, (end.1 / cell).floor() as i64);
    if c0 == c1 {
        return vec![(c0, 0.0)];
    }
    // Crossed-boundary fraction per axis; max(c0, c1) * cell is the boundary
    // between the two cells for either direction of travel.
    let cross_x = || {
        ((c0.0.max(c1.0) as f64 * cell - start.0) / (end.0 - start.0)).clamp(0.0, 1.0)
    };
    let cross_y = || {
        ((c0.1.max(c1.1) as f64 * cell - start.1) / (end.1 - start.1)).clamp(0.0, 1.0)
    };
    let dx = c0.0 != c1.0;
    let dy = c0.1 != c1.1;
    if dx && dy {
        // Crossing both an x and a y boundary: the middle cell depends on
        // which boundary the segment reaches first.
        let sx = cross_x();
        let sy = cross_y();
        if sx <= sy {
            vec![(c0, 0.0), ((c1.0, c0.1), sx), (c1, sy)]
        } else {
            vec![(c0, 0.0), ((c0.0, c1.1), sy), (c1, sx)]
        }
    } else {
        let s = if dx { cross_x() } else { cross_y() };
        vec![(c0, 0.0), (c1, s)]
    }
}

/// Evolving state of the trace, carried across intervals.
#[derive(Debug, Clone)]
pub struct ShadowTraceState {
    pub k: u32,
    pub m: u32,
    /// Interval-local ray parameter of the most recent refinement window.
    pub t: f64,
    /// Best delta max h of the last completed level of the last interval.
    pub delta_maxh_star: f64,
    /// Interval-local argmin of `delta_maxh_star`.
    pub t_star: f64,
    /// Optimal cost so far across intervals; initialized to 1.
    pub j_star: f64,
    /// Global argmin parameter, in units of T measured from the unbiased
    /// surface point.
    pub t_star_global: f64,
    /// Pyramid samples taken so far.
    pub samples: u32,
    /// Next interval to trace.
    pub interval: u32,
    /// Trace left the face texture; best cost so far was kept.
    pub hit_face_edge: bool,
}

impl ShadowTraceState {
    pub fn new() -> Self {
        ShadowTraceState {
            k: 0,
            m: 0,
            t: 1.0,
            delta_maxh_star: 1.0,
            t_star: -1.0,
            j_star: 1.0,
            t_star_global: -1.0,
            samples: 0,
            interval: 0,
            hit_face_edge: false,
        }
    }
}

impl Default for ShadowTraceState {
    fn default() -> Self {
        Self::new()
    }
}

/// One interval of the trace: N' levels, up to three pyramid samples each,
/// refinement window `t* + 2^-k` between levels. Updates `state` in place
/// and advances `state.interval`.
pub fn trace_shadow_interval(
    ray: &ShadowRay,
    pyr: &MaxMipPyramid,
    cfg: &TraceConfig,
    state: &mut ShadowTraceState,
) -> Result<()> {
    let interval = state.interval;
    let n_prime = cfg.schedule[interval as usize];
    let m0 = n_prime - 1;
    let height_scale = pyr.meta.body_radius / pyr.meta.vertical_scale;

    let mut t_k = 1.0f64;
    let mut final_delta = 1.0f64;
    let mut final_t = -1.0f64;

    'levels: for k in 0..n_prime {
        let m = m0 - k;
        let step = 0.5f64.powi(k as i32 + 1);
        let mut delta_star = 1.0f64;
        let mut t_star = -1.0f64;
        let mut t_i = t_k;
        for i in 0..3 {
            if i > 0 {
                t_i -= step;
            }
            let tip = ray.tip(interval, t_i);
            let uv = match obj_to_tex(tip) {
                Ok(uv) if uv.in_unit_square() => uv,
                _ => {
                    state.hit_face_edge = true;
                    break 'levels;
                }
            };
            state.samples += 1;
            // Forward half-texel footprint along the projected ray: every
            // overlapped texel is evaluated at the parameter where the ray
            // enters it, so a texel's max is never attributed to a point
            // behind it and the refinement window always keeps the argmin.
            let hx = ray.l_hat.x * tip.z - tip.x * ray.l_hat.z;
            let hy = ray.l_hat.y * tip.z - tip.y * ray.l_hat.z;
            let hn = (hx * hx + hy * hy).sqrt();
            let dir = if hn > 0.0 { (hx / hn, hy / hn) } else { (0.0, 0.0) };
            for (cell, frac) in dda_entries((uv.u, uv.v), dir, m, pyr.n()) {
                let Some(max_h) = pyr.texel_at(m, cell.0, cell.1) else {
                    continue;
                };
                let t_c = t_i + step * frac;
                let tip_c = if frac == 0.0 { tip } else { ray.tip(interval, t_c) };
                let tip_h = (tip_c.norm() - 1.0) * height_scale;
                let delta = tip_h - max_h;
                if delta < delta_star {
                    delta_star = delta;
                    t_star = t_c;
                }
            }
        }
        state.k = k;
        state.m = m;
        final_delta = delta_star;
        final_t = t_star;
        if t_star > -1.0 {
            t_k = t_star + step;
        }
        state.t = t_k;
    }

    state.delta_maxh_star = final_delta;
    state.t_star = final_t;
    if final_delta < 1.0 && final_t > -1.0 {
        let t_global = ray.bias / ray.t_len + interval as f64 + final_t;
        let j = if t_global > 0.0 {
            final_delta / t_global
        } else if final_delta <= 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        if j < state.j_star {
            state.j_star = j;
            state.t_star_global = t_global;
        }
    }
    state.interval += 1;
    Ok(())
}

/// Result of a full shadow trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceResult {
    /// Optimal cost; 1 when nothing was found below the no-shadow threshold.
    pub j_star: f64,
    /// Argmin parameter in units of T from the surface point, or -1.
    pub t_star: f64,
    /// Best `delta max h` of the winning interval's final level.
    pub delta_maxh_star: f64,
    pub samples: u32,
    pub hit_face_edge: bool,
}

/// Run one interval per schedule entry over consecutive ray segments
/// (interval i starts at object distance i * T past the biased origin) and
/// return the global minimum cost.
pub fn trace_shadow(
    ray: &ShadowRay,
    pyr: &MaxMipPyramid,
    cfg: &TraceConfig,
) -> Result<TraceResult> {
    cfg.validate(pyr.num_levels())?;
    let mut state = ShadowTraceState::new();
    let mut best_delta = 1.0;
    let mut best_j = 1.0;
    for _ in 0..cfg.schedule.len() {
        trace_shadow_interval(ray, pyr, cfg, &mut state)?;
        if state.j_star < best_j {
            best_j = state.j_star;
            best_delta = state.delta_maxh_star;
        }
        if state.hit_face_edge {
            break;
        }
    }
    Ok(TraceResult {
        j_star: state.j_star,
        t_star: state.t_star_global,
        delta_maxh_star: best_delta,
        samples: state.samples,
        hit_face_edge: state.hit_face_edge,
    })
}

// ---------------------------------------------------------------------------
// Disc occlusion
// ---------------------------------------------------------------------------

/// Inputs to the analytic disc-occlusion fraction. `r_l` must be expressed
/// in the same delta-h-per-t slope units as `j_star`; see `light_radius_slope`.
#[derive(Debug, Clone, Copy)]
pub struct OcclusionInput {
    pub j_star: f64,
    pub r_l: f64,
    /// N-hat dot N-hat-L: cosine between the surface normal and its
    /// component perpendicular to the shadow ray, in [0, 1].
    pub n_dot_nl: f64,
}

/// Shadow fraction with both branch values surfaced for debugging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occlusion {
    pub s: f64,
    pub d: f64,
    pub segment_branch: f64,
    pub linear_branch: f64,
}

/// Convert a light's angular radius into slope units compatible with a cost
/// whose `t` is measured in horizontal texture spans of `t_unit_tex`
/// (fraction of the full texture).
pub fn light_radius_slope(
    angular_radius: f64,
    meta: &crate::heightfield::ScaleMeta,
    n: usize,
    t_unit_tex: f64,
) -> f64 {
    angular_radius.tan() * t_unit_tex * n as f64 * meta.horizontal_scale / meta.vertical_scale
}

/// Occluded fraction of the light disc as a circular segment:
/// d = 2 (r_L - J* (N.N_L)) / r_L clamped to [-1, 1], then
/// s = max{ (pi - acos d + d sqrt(1 - d^2)) / pi, 1 - J* }.
/// J* >= 1 is unshadowed; J* <= 0 means the ray grazes or enters the
/// terrain and is fully in umbra.
pub fn occlusion_fraction(inp: OcclusionInput) -> Result<Occlusion> {
    if inp.r_l <= 0.0 {
        return Err(Error::NonPositiveLightRadius(inp.r_l));
    }
    let j = inp.j_star;
    if j >= 1.0 {
        return Ok(Occlusion { s: 0.0, d: -1.0, segment_branch: 0.0, linear_branch: 0.0 });
    }
    if j <= 0.0 {
        return Ok(Occlusion { s: 1.0, d: 1.0, segment_branch: 1.0, linear_branch: 1.0 });
    }
    let d = (2.0 * (inp.r_l - j * inp.n_dot_nl) / inp.r_l).clamp(-1.0, 1.0);
    let segment = (std::f64::consts::PI - d.acos() + d * (1.0 - d * d).max(0.0).sqrt())
        / std::f64::consts::PI;
    let linear = 1.0 - j;
    let s = segment.max(linear).clamp(0.0, 1.0);
    Ok(Occlusion { s, d, segment_branch: segment, linear_branch: linear })
}

// ---------------------------------------------------------------------------
// Per-pixel shadow term
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ShadowSample {
    pub s: f64,
    pub j_star: f64,
    pub t_star: f64,
    pub samples: u32,
    pub hit_face_edge: bool,
    pub occlusion: Occlusion,
}

/// Trace then occlude: the per-pixel S(delta h / t). `p`, `n_hat` and
/// `l_hat` are face-local; `angular_radius` is the light's apparent angular
/// radius in radians.
pub fn shadow_term(
    p: ObjPoint,
    n_hat: Vec3,
    l_hat: Vec3,
    pyr: &MaxMipPyramid,
    cfg: &TraceConfig,
    angular_radius: f64,
) -> Result<ShadowSample> {
    let no_shadow = |pyr: &MaxMipPyramid, p: ObjPoint| -> Result<ShadowSample> {
        // Degenerate (radially projecting) ray: escapes immediately unless
        // the start point sits below the terrain maximum of its own texel.
        // Half a texel-slope of slack absorbs view-ray refinement tolerance.
        let uv = obj_to_tex(p)?;
        let h_p = (p.norm() - 1.0) * pyr.meta.body_radius / pyr.meta.vertical_scale;
        let slack = 0.5 * pyr.meta.horizontal_scale / pyr.meta.vertical_scale;
        let below = h_p + slack < pyr.sample_max(uv, 0)?;
        let s = if below { 1.0 } else { 0.0 };
        Ok(ShadowSample {
            s,
            j_star: if below { 0.0 } else { 1.0 },
            t_star: -1.0,
            samples: 0,
            hit_face_edge: false,
            occlusion: Occlusion {
                s,
                d: if below { 1.0 } else { -1.0 },
                segment_branch: s,
                linear_branch: s,
            },
        })
    };

    let ray = match ShadowRay::new(p, l_hat, pyr, cfg) {
        Ok(ray) => ray,
        Err(Error::NoHorizontalFootprint) => return no_shadow(pyr, p),
        Err(e) => return Err(e),
    };
    let trace = trace_shadow(&ray, pyr, cfg)?;
    // The trace measures t in units of the interval length T (one level-m0
    // texel); the occlusion mapping compares J* against r_L in slope per
    // full texture span, so rescale the cost accordingly.
    let j_star = trace.j_star / ray.delta_m0;
    let r_l = light_radius_slope(angular_radius, &pyr.meta, pyr.n(), 1.0);
    let n_dot_l = n_hat.dot(l_hat);
    let n_dot_nl = (1.0 - n_dot_l * n_dot_l).max(0.0).sqrt();
    let occlusion = occlusion_fraction(OcclusionInput { j_star, r_l, n_dot_nl })?;
    Ok(ShadowSample {
        s: occlusion.s,
        j_star,
        t_star: trace.t_star,
        samples: trace.samples,
        hit_face_edge: trace.hit_face_edge,
        occlusion,
    })
}
