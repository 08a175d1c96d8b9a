//! Scene description, the CPU renderer, and image I/O (PFM float output,
//! PNG preview, comparison statistics).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::heightfield::{load_heightfield, HeightField, ScaleMeta, FACE_FRAMES};
use crate::math::{vec3, Vec3};
use crate::maxmip::{build_max_mipmap, MaxMipPyramid};
use crate::oracles::{distributed_reference, uniform_step_shadow, LightDiscSampler};
use crate::shadow::{light_radius_slope, shadow_term, TraceConfig};
use crate::viewray::{view_intersect, view_intersect_unbootstrapped, StepPolicy, TerrainBody};

// ---------------------------------------------------------------------------
// Scene schema (JSON via serde)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Dynamic-programming trace over the maximum mipmap.
    Dp,
    /// Fixed-count uniform ray stepping.
    Uniform,
    /// Distributed ray tracing over the light disc.
    Reference,
}

impl Default for Method {
    fn default() -> Self {
        Method::Dp
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dp" => Ok(Method::Dp),
            "uniform" => Ok(Method::Uniform),
            "reference" => Ok(Method::Reference),
            other => Err(format!("unknown method '{other}' (dp|uniform|reference)")),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FaceDesc {
    pub face_id: u8,
    /// Height-field path, relative to the scene file.
    pub height: PathBuf,
    pub horizontal_scale: f64,
    pub vertical_scale: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BodyDesc {
    pub radius_m: f64,
    pub faces: Vec<FaceDesc>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LightDesc {
    /// World-space direction toward the light (normalized on load).
    pub direction: [f64; 3],
    pub angular_radius_rad: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CameraDesc {
    pub position_m: [f64; 3],
    pub look_at_m: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    pub fov_y_rad: f64,
    pub width: usize,
    pub height: usize,
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct UniformParams {
    pub steps: u32,
    /// Per-step horizontal advance as a fraction of the face texture.
    pub dt: f64,
}

impl Default for UniformParams {
    fn default() -> Self {
        UniformParams { steps: 100, dt: 0.0006 }
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ReferenceParams {
    pub samples: usize,
    pub seed: u64,
}

impl Default for ReferenceParams {
    fn default() -> Self {
        ReferenceParams { samples: 64, seed: 0 }
    }
}

fn default_subdiv_cap() -> usize {
    4096
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Scene {
    pub body: BodyDesc,
    pub light: LightDesc,
    pub camera: CameraDesc,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub uniform: UniformParams,
    #[serde(default)]
    pub reference: ReferenceParams,
    #[serde(default = "default_subdiv_cap")]
    pub mesh_subdiv_cap: usize,
    /// Skip the displaced-mesh bootstrap for view rays (comparison mode).
    #[serde(default)]
    pub no_predisplacement: bool,
}

/// Scene with its assets resolved: per-face height fields, max mipmaps and
/// the displaced mesh.
pub struct LoadedScene {
    pub scene: Scene,
    pub body: TerrainBody,
    pub pyramids: Vec<MaxMipPyramid>,
}

/// Build the renderable scene from already-loaded height fields. `heights`
/// must hold exactly 6 fields, indexed by face id.
pub fn assemble(scene: Scene, heights: Vec<HeightField>) -> Result<LoadedScene> {
    if heights.len() != 6 {
        return Err(Error::InvalidScene(format!(
            "expected 6 face height fields, got {}",
            heights.len()
        )));
    }
    let l = Vec3::from(scene.light.direction);
    if l.norm() < 1e-12 {
        return Err(Error::InvalidScene("light direction is zero".into()));
    }
    if scene.light.angular_radius_rad <= 0.0 {
        return Err(Error::NonPositiveLightRadius(scene.light.angular_radius_rad));
    }
    if scene.camera.width == 0 || scene.camera.height == 0 {
        return Err(Error::InvalidScene("zero camera resolution".into()));
    }
    let pyramids = heights.iter().map(build_max_mipmap).collect::<Vec<_>>();
    for pyr in &pyramids {
        scene.trace.validate(pyr.num_levels())?;
    }
    let body = TerrainBody::new(heights, scene.mesh_subdiv_cap);
    Ok(LoadedScene { scene, body, pyramids })
}

/// Parse a scene JSON file and load its height fields. Faces absent from
/// the description get flat (h = 0) placeholder fields.
pub fn load_scene(path: &Path) -> Result<LoadedScene> {
    let text = fs::read_to_string(path)?;
    let scene: Scene = serde_json::from_str(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut heights: Vec<Option<HeightField>> = vec![None; 6];
    for face in &scene.body.faces {
        if face.face_id > 5 {
            return Err(Error::InvalidScene(format!("face_id {} out of range", face.face_id)));
        }
        let meta = ScaleMeta {
            horizontal_scale: face.horizontal_scale,
            vertical_scale: face.vertical_scale,
            face_id: face.face_id,
            body_radius: scene.body.radius_m,
        };
        let hf = load_heightfield(&dir.join(&face.height), meta)?;
        heights[face.face_id as usize] = Some(hf);
    }
    let template = heights
        .iter()
        .flatten()
        .next()
        .ok_or_else(|| Error::InvalidScene("scene declares no faces".into()))?
        .meta;
    let heights = heights
        .into_iter()
        .enumerate()
        .map(|(f, hf)| match hf {
            Some(hf) => Ok(hf),
            None => HeightField::constant(
                64,
                0.0,
                ScaleMeta { face_id: f as u8, ..template },
            ),
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(scene, heights)
}

// ---------------------------------------------------------------------------
// Float image + PFM / PNG I/O
// ---------------------------------------------------------------------------

/// Grayscale float image, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ImageF {
    pub fn new(width: usize, height: usize) -> Self {
        ImageF { width, height, data: vec![0.0; width * height] }
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f32 {
        self.data.iter().cloned().fold(f32::NEG_INFINITY, f32::max)
    }
}

/// Write a grayscale PFM (little-endian, scale -1.0, rows bottom-to-top).
pub fn save_pfm(path: &Path, img: &ImageF) -> Result<()> {
    let mut out = Vec::with_capacity(32 + img.data.len() * 4);
    out.extend_from_slice(format!("Pf\n{} {}\n-1.0\n", img.width, img.height).as_bytes());
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            out.extend_from_slice(&img.at(x, y).to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_pfm(path: &Path) -> Result<ImageF> {
    let data = fs::read(path)?;
    let bad = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: "truncated header".into(),
            });
        }
        Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
    };
    if token()? != "Pf" {
        return Err(bad("not a grayscale PFM"));
    }
    let width: usize = token()?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token()?.parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = token()?.parse().map_err(|_| bad("bad scale"))?;
    if scale >= 0.0 {
        return Err(bad("big-endian PFM not supported"));
    }
    let raster = pos + 1;
    if data.len() < raster + width * height * 4 {
        return Err(bad("truncated raster"));
    }
    let mut img = ImageF::new(width, height);
    for y in 0..height {
        let src_row = height - 1 - y;
        for x in 0..width {
            let o = raster + (src_row * width + x) * 4;
            img.data[y * width + x] =
                f32::from_le_bytes([data[o], data[o + 1], data[o + 2], data[o + 3]]);
        }
    }
    Ok(img)
}

fn srgb_encode(v: f32) -> u8 {
    let v = v.clamp(0.0, 1.0);
    let e = if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    };
    (e * 255.0).round() as u8
}

/// Write the image as an 8-bit sRGB-encoded grayscale PNG.
pub fn save_png(path: &Path, img: &ImageF) -> Result<()> {
    let mut buf = image::GrayImage::new(img.width as u32, img.height as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        *px = image::Luma([srgb_encode(img.at(x as usize, y as usize))]);
    }
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// False-color debug PNG: gray = J* (clamped to [0,1]), red = umbra
/// (s >= 1), blue = background.
pub fn save_debug_png(path: &Path, shadow: &ImageF, j_star: &ImageF, hit: &ImageF) -> Result<()> {
    let mut buf = image::RgbImage::new(shadow.width as u32, shadow.height as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let (x, y) = (x as usize, y as usize);
        *px = if hit.at(x, y) == 0.0 {
            image::Rgb([16, 16, 64])
        } else if shadow.at(x, y) >= 1.0 {
            image::Rgb([180, 24, 24])
        } else {
            let g = srgb_encode(j_star.at(x, y).clamp(0.0, 1.0));
            image::Rgb([g, g, g])
        };
    }
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Comparison statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DiffStats {
    pub mean: f64,
    /// Mean absolute difference.
    pub mad: f64,
    pub sigma: f64,
    /// Fraction of pixels within 3 sigma of the mean difference.
    pub within_3_sigma: f64,
    pub max_abs: f64,
    pub pixels: usize,
}

/// Pixelwise statistics of `a - b`. `dark_offset` (e.g. a sensor black
/// level, as a fraction of full scale) is subtracted from `a` first; both
/// images are normalized by their own maximum when `normalize` is set.
pub fn compare_images(
    a: &ImageF,
    b: &ImageF,
    dark_offset: f64,
    normalize: bool,
) -> Result<DiffStats> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch {
            a_w: a.width,
            a_h: a.height,
            b_w: b.width,
            b_h: b.height,
        });
    }
    let scale = |img: &ImageF| {
        if normalize {
            let m = img.max() as f64;
            if m > 0.0 { 1.0 / m } else { 1.0 }
        } else {
            1.0
        }
    };
    let (sa, sb) = (scale(a), scale(b));
    let diffs: Vec<f64> = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| ((x as f64 * sa - dark_offset).max(0.0)) - y as f64 * sb)
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let mad = diffs.iter().map(|d| d.abs()).sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    let sigma = var.sqrt();
    let within = if sigma > 0.0 {
        diffs.iter().filter(|d| (*d - mean).abs() <= 3.0 * sigma).count() as f64 / n
    } else {
        1.0
    };
    let max_abs = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(DiffStats {
        mean,
        mad,
        sigma,
        within_3_sigma: within,
        max_abs,
        pixels: diffs.len(),
    })
}

// ---------------------------------------------------------------------------
// Renderer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct RenderStats {
    pub width: usize,
    pub height: usize,
    pub method: String,
    pub hit_pixels: usize,
    pub mean_view_steps: f64,
    pub max_view_steps: u32,
    pub mean_shadow_samples: f64,
    pub max_shadow_samples: u32,
    pub wall_ms: f64,
}

pub struct RenderResult {
    /// Lambert irradiance max(N.L, 0) * (1 - s); background = 0.
    pub image: ImageF,
    /// Shadow fraction s per pixel (0 where no surface was hit).
    pub shadow: ImageF,
    /// Optimal cost J* per pixel (1 where unshadowed or no hit).
    pub j_star: ImageF,
    /// View-ray refinement evaluations per pixel.
    pub view_steps: ImageF,
    /// Shadow sampler work per pixel (pyramid samples / steps / rays).
    pub shadow_samples: ImageF,
    /// 1 where a surface was hit, 0 for background.
    pub hit: ImageF,
    pub stats: RenderStats,
}

struct RowOut {
    irr: Vec<f32>,
    shadow: Vec<f32>,
    j_star: Vec<f32>,
    view_steps: Vec<f32>,
    shadow_samples: Vec<f32>,
    hit: Vec<f32>,
}

fn vec3_from(a: [f64; 3]) -> Vec3 {
    vec3(a[0], a[1], a[2])
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Vec3 {
        vec3_from(a)
    }
}

fn shadow_for_hit(
    ls: &LoadedScene,
    hit: &crate::viewray::SurfaceHit,
    l_world: Vec3,
) -> Result<(f64, f64, u32)> {
    let scene = &ls.scene;
    let face = hit.face_id;
    let frame = &FACE_FRAMES[face];
    let l_local = frame.world_to_face(l_world);
    let pyr = &ls.pyramids[face];
    let hf = &ls.body.heights[face];
    match scene.method {
        Method::Dp => {
            let s = shadow_term(
                hit.p,
                hit.n_hat,
                l_local,
                pyr,
                &scene.trace,
                scene.light.angular_radius_rad,
            )?;
            Ok((s.s, s.j_star, s.samples))
        }
        Method::Uniform => {
            // slope units: delta-h per full texture span, shared with the
            // DP method's occlusion mapping
            let t_unit = 1.0;
            let r_l = light_radius_slope(
                scene.light.angular_radius_rad,
                &pyr.meta,
                pyr.n(),
                t_unit,
            );
            let n_dot_l = hit.n_hat.dot(l_local);
            let n_dot_nl = (1.0 - n_dot_l * n_dot_l).max(0.0).sqrt();
            let (s, taken) = uniform_step_shadow(
                hit.p,
                l_local,
                hf,
                scene.uniform.steps,
                scene.uniform.dt,
                t_unit,
                r_l,
                n_dot_nl,
                scene.trace.bias_texels,
            )?;
            Ok((s, 1.0 - s, taken))
        }
        Method::Reference => {
            let sampler = LightDiscSampler::new(
                l_local,
                scene.light.angular_radius_rad,
                scene.reference.samples,
                scene.reference.seed,
            );
            let s = distributed_reference(hit.p, &sampler, hf, scene.trace.bias_texels);
            Ok((s, 1.0 - s, scene.reference.samples as u32))
        }
    }
}

fn render_row(ls: &LoadedScene, policy: &StepPolicy, y: usize) -> Result<RowOut> {
    let scene = &ls.scene;
    let cam = &scene.camera;
    let (w, h) = (cam.width, cam.height);
    let rb = scene.body.radius_m;
    let eye = vec3_from(cam.position_m) / rb;
    let forward = ((vec3_from(cam.look_at_m) / rb) - eye).normalized();
    let mut right = forward.cross(vec3_from(cam.up)).normalized();
    if right.norm_sq() < 0.5 {
        right = forward.cross(vec3(0.0, 0.0, 1.0)).normalized();
    }
    let up = right.cross(forward);
    let tan_half = (cam.fov_y_rad * 0.5).tan();
    let aspect = w as f64 / h as f64;
    let l_world = vec3_from(scene.light.direction).normalized();

    let mut out = RowOut {
        irr: vec![0.0; w],
        shadow: vec![0.0; w],
        j_star: vec![1.0; w],
        view_steps: vec![0.0; w],
        shadow_samples: vec![0.0; w],
        hit: vec![0.0; w],
    };
    for x in 0..w {
        let px = (2.0 * (x as f64 + 0.5) / w as f64 - 1.0) * tan_half * aspect;
        let py = (1.0 - 2.0 * (y as f64 + 0.5) / h as f64) * tan_half;
        let dir = (forward + right * px + up * py).normalized();
        let (hit, steps) = if scene.no_predisplacement {
            view_intersect_unbootstrapped(&ls.body, eye, dir, policy)
        } else {
            view_intersect(&ls.body, eye, dir, policy)
        };
        out.view_steps[x] = steps as f32;
        let Some(hit) = hit else { continue };
        out.hit[x] = 1.0;
        let frame = &FACE_FRAMES[hit.face_id];
        let n_dot_l = hit.n_hat.dot(frame.world_to_face(l_world)).max(0.0);
        let (s, j, samples) = if n_dot_l > 0.0 {
            shadow_for_hit(ls, &hit, l_world)?
        } else {
            (1.0, 0.0, 0)
        };
        out.shadow[x] = s as f32;
        out.j_star[x] = j as f32;
        out.shadow_samples[x] = samples as f32;
        out.irr[x] = (n_dot_l * (1.0 - s)) as f32;
    }
    Ok(out)
}

/// Render the scene. Rows are data-parallel with the `parallel` feature and
/// sequential otherwise; per-pixel results are identical either way.
pub fn render_scene(ls: &LoadedScene, policy: &StepPolicy) -> Result<RenderResult> {
    let start = Instant::now();
    let (w, h) = (ls.scene.camera.width, ls.scene.camera.height);

    #[cfg(feature = "parallel")]
    let rows: Result<Vec<RowOut>> = {
        use rayon::prelude::*;
        (0..h).into_par_iter().map(|y| render_row(ls, policy, y)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<RowOut>> = (0..h).map(|y| render_row(ls, policy, y)).collect();
    let rows = rows?;

    let mut result = RenderResult {
        image: ImageF::new(w, h),
        shadow: ImageF::new(w, h),
        j_star: ImageF::new(w, h),
        view_steps: ImageF::new(w, h),
        shadow_samples: ImageF::new(w, h),
        hit: ImageF::new(w, h),
        stats: RenderStats {
            width: w,
            height: h,
            method: format!("{:?}", ls.scene.method).to_lowercase(),
            hit_pixels: 0,
            mean_view_steps: 0.0,
            max_view_steps: 0,
            mean_shadow_samples: 0.0,
            max_shadow_samples: 0,
            wall_ms: 0.0,
        },
    };
    let mut hits = 0usize;
    let mut step_sum = 0.0f64;
    let mut samp_sum = 0.0f64;
    for (y, row) in rows.into_iter().enumerate() {
        let o = y * w;
        result.image.data[o..o + w].copy_from_slice(&row.irr);
        result.shadow.data[o..o + w].copy_from_slice(&row.shadow);
        result.j_star.data[o..o + w].copy_from_slice(&row.j_star);
        result.view_steps.data[o..o + w].copy_from_slice(&row.view_steps);
        result.shadow_samples.data[o..o + w].copy_from_slice(&row.shadow_samples);
        result.hit.data[o..o + w].copy_from_slice(&row.hit);
        for x in 0..w {
            step_sum += row.view_steps[x] as f64;
            result.stats.max_view_steps = result.stats.max_view_steps.max(row.view_steps[x] as u32);
            if row.hit[x] > 0.0 {
                hits += 1;
                samp_sum += row.shadow_samples[x] as f64;
                result.stats.max_shadow_samples =
                    result.stats.max_shadow_samples.max(row.shadow_samples[x] as u32);
            }
        }
    }
    result.stats.hit_pixels = hits;
    result.stats.mean_view_steps = step_sum / (w * h) as f64;
    result.stats.mean_shadow_samples = if hits > 0 { samp_sum / hits as f64 } else { 0.0 };
    result.stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}
