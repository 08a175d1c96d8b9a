//! Hybrid view-ray casting: a cubesphere mesh pre-displaced onto the
//! sampled terrain bootstraps ray starting points, after which a short
//! bidirectional march against the bilinear height field refines the hit.
//! A plain bounding-sphere march (no pre-displacement) is kept for step
//! comparisons and as a silhouette fallback.

use crate::heightfield::{
    face_of_direction, obj_to_tex, Filter, HeightField, ObjPoint, TexCoord, FACE_FRAMES,
};
use crate::math::{vec3, Vec3};

/// Per-face vertex grid of the cubesphere, face-local coordinates.
#[derive(Debug, Clone)]
pub struct FaceMesh {
    pub subdiv: usize,
    /// (subdiv + 1)^2 vertices, row-major, v increasing with row index.
    pub vertices: Vec<Vec3>,
}

impl FaceMesh {
    pub fn vertex(&self, i: usize, j: usize) -> Vec3 {
        self.vertices[j * (self.subdiv + 1) + i]
    }
}

#[derive(Debug, Clone)]
pub struct CubesphereMesh {
    pub faces: Vec<FaceMesh>,
    pub radius: f64,
}

/// Build the undisplaced cubesphere: 6 faces, subdiv^2 quads each, every
/// vertex normalized onto the sphere of the given radius.
pub fn build_cubesphere(subdiv: usize, radius: f64) -> CubesphereMesh {
    assert!(subdiv >= 1);
    let mut faces = Vec::with_capacity(6);
    for _ in 0..6 {
        let mut vertices = Vec::with_capacity((subdiv + 1) * (subdiv + 1));
        for j in 0..=subdiv {
            for i in 0..=subdiv {
                let u = i as f64 / subdiv as f64;
                let v = j as f64 / subdiv as f64;
                let dir = vec3(2.0 * u - 1.0, 2.0 * v - 1.0, 1.0).normalized();
                vertices.push(dir * radius);
            }
        }
        faces.push(FaceMesh { subdiv, vertices });
    }
    CubesphereMesh { faces, radius }
}

/// Move one face's vertices radially inward onto the sampled terrain
/// surface (bilinear filtering), i.e. to radius 1 + h * vs / R.
pub fn displace_face(mesh: &mut FaceMesh, hf: &HeightField) {
    let subdiv = mesh.subdiv;
    for j in 0..=subdiv {
        for i in 0..=subdiv {
            let u = i as f64 / subdiv as f64;
            let v = j as f64 / subdiv as f64;
            let h = hf.sample_height(TexCoord::new(u, v), Filter::Bilinear);
            let idx = j * (subdiv + 1) + i;
            let dir = mesh.vertices[idx].normalized();
            mesh.vertices[idx] = dir * hf.radial(h);
        }
    }
}

/// Terrain body assembled for view-ray casting: one height field and one
/// displaced mesh face per cube face, all sharing the body radius.
pub struct TerrainBody {
    pub heights: Vec<HeightField>,
    pub meshes: Vec<FaceMesh>,
    /// Bounding-sphere radius (units of body radius).
    pub r_out: f64,
    /// Radius below which every ray is guaranteed to be inside terrain.
    pub r_floor: f64,
}

impl TerrainBody {
    pub fn new(heights: Vec<HeightField>, subdiv_cap: usize) -> Self {
        assert_eq!(heights.len(), 6);
        let mut r_out = 1.0f64;
        let mut r_floor = f64::INFINITY;
        for hf in &heights {
            r_out = r_out.max(hf.radial(hf.max_value()));
            let min_h = hf.values().iter().cloned().fold(f64::INFINITY, f64::min);
            r_floor = r_floor.min(hf.radial(min_h));
        }
        let meshes = heights
            .iter()
            .map(|hf| {
                let subdiv = hf.n().min(subdiv_cap).max(1);
                let mut face = build_cubesphere_face(subdiv, r_out);
                displace_face(&mut face, hf);
                face
            })
            .collect();
        TerrainBody { heights, meshes, r_out, r_floor }
    }

    fn height_scale(&self, face: usize) -> f64 {
        self.heights[face].meta.body_radius / self.heights[face].meta.vertical_scale
    }
}

fn build_cubesphere_face(subdiv: usize, radius: f64) -> FaceMesh {
    build_cubesphere(subdiv, radius).faces.into_iter().next().map(|mut f| {
        // all faces are identical in face-local coordinates
        f.subdiv = subdiv;
        f
    }).unwrap()
}

/// View-ray surface intersection.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceHit {
    /// Face-local intersection point.
    pub p: ObjPoint,
    /// Face-local unit surface normal from height-field central differences.
    pub n_hat: Vec3,
    pub uv: TexCoord,
    pub face_id: usize,
    /// Refinement (marching + bisection) evaluations spent on this ray.
    pub steps: u32,
    /// Ray parameter of the hit (world units = body radii).
    pub t: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct StepPolicy {
    /// Vertical tolerance in base-texel units (fraction of the horizontal
    /// texel size, measured vertically).
    pub tolerance_texels: f64,
    /// March step in base texels of ground distance.
    pub step_texels: f64,
    /// Cap on the oblique step amplification 1 / (N.V).
    pub oblique_max: f64,
    /// Refinement budget for the pre-displaced path.
    pub max_refine_steps: u32,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            tolerance_texels: 0.25,
            step_texels: 0.5,
            oblique_max: 8.0,
            max_refine_steps: 64,
        }
    }
}

struct Eval {
    face: usize,
    uv: TexCoord,
    /// tip height minus terrain height, in h units
    f: f64,
}

fn eval_world(body: &TerrainBody, x: Vec3) -> Eval {
    let face = face_of_direction(x) as usize;
    let local = FACE_FRAMES[face].world_to_face(x);
    let uv = obj_to_tex(local).expect("face_of_direction guarantees z > 0");
    let hf = &body.heights[face];
    let tip_h = (x.norm() - 1.0) * body.height_scale(face);
    let h = hf.sample_height(uv, Filter::Bilinear);
    Eval { face, uv, f: tip_h - h }
}

fn make_hit(body: &TerrainBody, origin: Vec3, dir: Vec3, t: f64, steps: u32) -> SurfaceHit {
    let x = origin + dir * t;
    let face = face_of_direction(x) as usize;
    let frame = &FACE_FRAMES[face];
    let local = frame.world_to_face(x);
    let uv = obj_to_tex(local).unwrap();
    SurfaceHit {
        p: local,
        n_hat: surface_normal(&body.heights[face], uv),
        uv,
        face_id: face,
        steps,
        t,
    }
}

/// Outward surface normal from central differences of the bilinear height
/// field at one-texel spacing.
pub fn surface_normal(hf: &HeightField, uv: TexCoord) -> Vec3 {
    let d = 1.0 / hf.n() as f64;
    let at = |u: f64, v: f64| {
        let t = TexCoord::new(u.clamp(0.0, 1.0), v.clamp(0.0, 1.0));
        hf.surface_point(t, hf.sample_height(t, Filter::Bilinear))
    };
    let tu = at(uv.u + d, uv.v) - at(uv.u - d, uv.v);
    let tv = at(uv.u, uv.v + d) - at(uv.u, uv.v - d);
    let mut n = tu.cross(tv).normalized();
    let radial = tex_dir(uv);
    if n.dot(radial) < 0.0 {
        n = -n;
    }
    n
}

fn tex_dir(uv: TexCoord) -> Vec3 {
    vec3(2.0 * uv.u - 1.0, 2.0 * uv.v - 1.0, 1.0).normalized()
}

/// t-interval where the ray is inside the sphere of the given radius.
fn sphere_interval(origin: Vec3, dir: Vec3, radius: f64) -> Option<(f64, f64)> {
    let b = origin.dot(dir);
    let c = origin.norm_sq() - radius * radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

// ---------------------------------------------------------------------------
// Mesh bootstrap: frustum clip + 2D grid walk + triangle tests
// ---------------------------------------------------------------------------

fn ray_triangle(o: Vec3, d: Vec3, v0: Vec3, v1: Vec3, v2: Vec3) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = d.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - v0;
    let u = s.dot(p) * inv;
    if !(-1e-9..=1.0 + 1e-9).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = d.dot(q) * inv;
    if v < -1e-9 || u + v > 1.0 + 1e-9 {
        return None;
    }
    let t = e2.dot(q) * inv;
    if t > 1e-12 {
        Some(t)
    } else {
        None
    }
}

/// Clip the local-frame ray to the face frustum (z > 0, |x| <= z, |y| <= z)
/// and the outer sphere; returns the t-interval or None.
fn clip_to_face(o: Vec3, d: Vec3, r_out: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = sphere_interval(o, d, r_out)?;
    lo = lo.max(0.0);
    // each linear constraint a + t*b >= 0
    let constraints = [
        (o.z, d.z),
        (o.z - o.x, d.z - d.x),
        (o.z + o.x, d.z + d.x),
        (o.z - o.y, d.z - d.y),
        (o.z + o.y, d.z + d.y),
    ];
    for (a, b) in constraints {
        if b.abs() < 1e-15 {
            if a < 0.0 {
                return None;
            }
        } else {
            let t = -a / b;
            if b > 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
        }
    }
    if hi - lo > 1e-12 {
        Some((lo, hi))
    } else {
        None
    }
}

/// Nearest mesh intersection on one face via a front-to-back grid walk of
/// the projected ray segment (the gnomonic projection of a ray is a
/// straight, monotone line in uv).
fn mesh_intersect_face(mesh: &FaceMesh, o: Vec3, d: Vec3, ta: f64, tb: f64) -> Option<f64> {
    let n = mesh.subdiv;
    let pa = o + d * (ta + 1e-12);
    let pb = o + d * (tb - 1e-12);
    let uva = obj_to_tex(pa).ok()?;
    let uvb = obj_to_tex(pb).ok()?;
    let ga = (uva.u * n as f64, uva.v * n as f64);
    let gb = (uvb.u * n as f64, uvb.v * n as f64);

    let test_cell = |i: i64, j: i64| -> Option<f64> {
        if i < 0 || j < 0 || i >= n as i64 || j >= n as i64 {
            return None;
        }
        let (i, j) = (i as usize, j as usize);
        let v00 = mesh.vertex(i, j);
        let v10 = mesh.vertex(i + 1, j);
        let v01 = mesh.vertex(i, j + 1);
        let v11 = mesh.vertex(i + 1, j + 1);
        let t1 = ray_triangle(o, d, v00, v10, v11);
        let t2 = ray_triangle(o, d, v00, v11, v01);
        match (t1, t2) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        }
    };

    // Amanatides-Woo walk from ga to gb.
    let dx = gb.0 - ga.0;
    let dy = gb.1 - ga.1;
    let clampi = |v: f64| (v.floor() as i64).clamp(-1, n as i64);
    let mut ci = clampi(ga.0);
    let mut cj = clampi(ga.1);
    let ei = clampi(gb.0);
    let ej = clampi(gb.1);
    let step_i: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_j: i64 = if dy > 0.0 { 1 } else { -1 };
    let mut t_max_i = if dx.abs() < 1e-15 {
        f64::INFINITY
    } else {
        let next = if dx > 0.0 { ci as f64 + 1.0 } else { ci as f64 };
        (next - ga.0) / dx
    };
    let mut t_max_j = if dy.abs() < 1e-15 {
        f64::INFINITY
    } else {
        let next = if dy > 0.0 { cj as f64 + 1.0 } else { cj as f64 };
        (next - ga.1) / dy
    };
    let t_delta_i = if dx.abs() < 1e-15 { f64::INFINITY } else { 1.0 / dx.abs() };
    let t_delta_j = if dy.abs() < 1e-15 { f64::INFINITY } else { 1.0 / dy.abs() };

    let mut best: Option<f64> = None;
    for _ in 0..(4 * n + 8) {
        if let Some(t) = test_cell(ci, cj) {
            if t >= ta - 1e-9 && t <= tb + 1e-9 {
                best = Some(best.map_or(t, |b: f64| b.min(t)));
                // front-to-back: the first cell with a hit terminates,
                // but also test the next cell to be robust at edges
                let (ni, nj) = if t_max_i < t_max_j {
                    (ci + step_i, cj)
                } else {
                    (ci, cj + step_j)
                };
                if let Some(t2) = test_cell(ni, nj) {
                    if t2 >= ta - 1e-9 && t2 <= tb + 1e-9 {
                        best = Some(best.unwrap().min(t2));
                    }
                }
                return best;
            }
        }
        if ci == ei && cj == ej {
            break;
        }
        if t_max_i < t_max_j {
            t_max_i += t_delta_i;
            ci += step_i;
        } else {
            t_max_j += t_delta_j;
            cj += step_j;
        }
    }
    best
}

fn mesh_intersect(body: &TerrainBody, origin: Vec3, dir: Vec3) -> Option<f64> {
    let mut best: Option<f64> = None;
    for face in 0..6 {
        let frame = &FACE_FRAMES[face];
        let o = frame.world_to_face(origin);
        let d = frame.world_to_face(dir);
        if let Some((ta, tb)) = clip_to_face(o, d, body.r_out) {
            if let Some(t) = mesh_intersect_face(&body.meshes[face], o, d, ta, tb) {
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Marching + bisection
// ---------------------------------------------------------------------------

fn policy_tol_h(body: &TerrainBody, face: usize, policy: &StepPolicy) -> f64 {
    let m = &body.heights[face].meta;
    policy.tolerance_texels * m.horizontal_scale / m.vertical_scale
}

fn base_step_obj(body: &TerrainBody, face: usize, policy: &StepPolicy) -> f64 {
    let m = &body.heights[face].meta;
    policy.step_texels * m.horizontal_scale / m.body_radius
}

fn oblique_factor(body: &TerrainBody, x: Vec3, dir: Vec3, policy: &StepPolicy) -> f64 {
    // N.V with the terrain normal at the current footprint
    let e = eval_world(body, x);
    let frame = &FACE_FRAMES[e.face];
    let n_world = frame.face_to_world(surface_normal(&body.heights[e.face], e.uv));
    let ndv = n_world.dot(dir).abs().max(1e-6);
    (1.0 / ndv).clamp(1.0, policy.oblique_max)
}

/// Bisect a bracketing segment [t_lo (above), t_hi (below)] down to the
/// vertical tolerance. Returns (t, evaluations).
fn bisect(
    body: &TerrainBody,
    origin: Vec3,
    dir: Vec3,
    mut t_lo: f64,
    mut t_hi: f64,
    tol_h: f64,
) -> (f64, u32) {
    let mut steps = 0;
    let mut t_mid = 0.5 * (t_lo + t_hi);
    for _ in 0..64 {
        t_mid = 0.5 * (t_lo + t_hi);
        let e = eval_world(body, origin + dir * t_mid);
        steps += 1;
        if e.f.abs() < tol_h {
            return (t_mid, steps);
        }
        if e.f > 0.0 {
            t_lo = t_mid;
        } else {
            t_hi = t_mid;
        }
    }
    (t_mid, steps)
}

/// March [t_start, t_end] at the given object-space step looking for the
/// first sign change of tip-height - terrain-height; bisect on the bracket.
/// Returns (hit parameter, evaluations).
fn march_segment(
    body: &TerrainBody,
    origin: Vec3,
    dir: Vec3,
    t_start: f64,
    t_end: f64,
    step: f64,
    policy: &StepPolicy,
    max_steps: u32,
) -> (Option<f64>, u32) {
    let mut steps = 0u32;
    let mut t_prev = t_start;
    let e0 = eval_world(body, origin + dir * t_start);
    steps += 1;
    if e0.f <= 0.0 {
        // already at/below the surface
        return (Some(t_start), steps);
    }
    let tol_h = policy_tol_h(body, e0.face, policy);
    let mut t = t_start;
    while t < t_end && steps < max_steps {
        t = (t + step).min(t_end);
        let e = eval_world(body, origin + dir * t);
        steps += 1;
        if e.f < 0.0 {
            let (th, s) = bisect(body, origin, dir, t_prev, t, tol_h);
            return (Some(th), steps + s);
        }
        t_prev = t;
    }
    (None, steps)
}

/// Hybrid intersection: displaced-mesh bootstrap, then a short
/// bidirectional refinement march. Falls back to the bounding-sphere march
/// when the mesh is missed but the ray provably enters the terrain.
/// Returns the hit (if any) and the refinement evaluations spent.
pub fn view_intersect(
    body: &TerrainBody,
    origin: Vec3,
    dir: Vec3,
    policy: &StepPolicy,
) -> (Option<SurfaceHit>, u32) {
    let dir = dir.normalized();
    let Some(t_mesh) = mesh_intersect(body, origin, dir) else {
        // silhouette fallback: the terrain contains the sphere r_floor
        if let Some((ta, tb)) = sphere_interval(origin, dir, body.r_floor) {
            if tb > 0.0 {
                let _ = ta;
                return view_intersect_unbootstrapped(body, origin, dir, policy);
            }
        }
        return (None, 0);
    };

    let e = eval_world(body, origin + dir * t_mesh);
    let mut steps = 1u32;
    let tol_h = policy_tol_h(body, e.face, policy);
    let factor = oblique_factor(body, origin + dir * t_mesh, dir, policy);
    steps += 1;
    let step = base_step_obj(body, e.face, policy) * factor;

    let t_hit = if e.f.abs() < tol_h {
        Some(t_mesh)
    } else if e.f > 0.0 {
        // above the surface: march forward
        let budget = policy.max_refine_steps.saturating_sub(steps);
        let (t, s) = march_segment(
            body,
            origin,
            dir,
            t_mesh,
            t_mesh + step * policy.max_refine_steps as f64,
            step,
            policy,
            budget,
        );
        steps += s;
        t
    } else {
        // below the surface: walk back to bracket, then bisect
        let mut found = None;
        for i in 1..=policy.max_refine_steps {
            let t_lo = t_mesh - step * i as f64;
            let eb = eval_world(body, origin + dir * t_lo);
            steps += 1;
            if eb.f > 0.0 {
                found = Some(t_lo);
                break;
            }
            if steps >= policy.max_refine_steps {
                break;
            }
        }
        match found {
            Some(lo) => {
                let (t, s) = bisect(body, origin, dir, lo, t_mesh, tol_h);
                steps += s;
                Some(t)
            }
            None => Some(t_mesh), // budget exhausted: accept the bootstrap
        }
    };

    match t_hit {
        Some(t) if t > 0.0 => (Some(make_hit(body, origin, dir, t, steps)), steps),
        _ => (None, steps),
    }
}

/// Reference path without pre-displacement: march the full chord of the
/// bounding sphere from its entry point at the same tolerance.
pub fn view_intersect_unbootstrapped(
    body: &TerrainBody,
    origin: Vec3,
    dir: Vec3,
    policy: &StepPolicy,
) -> (Option<SurfaceHit>, u32) {
    let dir = dir.normalized();
    let Some((ta, tb)) = sphere_interval(origin, dir, body.r_out) else {
        return (None, 0);
    };
    if tb <= 0.0 {
        return (None, 0);
    }
    let t_start = ta.max(0.0) + 1e-12;
    // No surface estimate exists yet, so no oblique step amplification:
    // march the whole chord at the base (half-texel) step.
    let face = face_of_direction(origin + dir * t_start) as usize;
    let step = base_step_obj(body, face, policy);
    let budget = ((tb - t_start) / step).ceil() as u32 + 256;
    let (t, steps) = march_segment(body, origin, dir, t_start, tb, step, policy, budget);
    match t {
        Some(t) => (Some(make_hit(body, origin, dir, t, steps)), steps),
        None => (None, steps),
    }
}
