//! Height-field storage, ingestion, tile stitching and the gnomonic
//! (cubesphere face) transforms between object space and texture space.
//!
//! Object space is face-local: a right-handed frame per cube face with the
//! face plane at z = 1 and coordinates in units of body radius. Texture
//! space is [0,1]^2 on the face, v increasing bottom-to-top.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{vec3, Vec3};

/// Face-local object-space point, units of body radius, face plane at z = 1.
pub type ObjPoint = Vec3;

/// Texture-space coordinate on one cube face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexCoord {
    pub u: f64,
    pub v: f64,
    /// Mip level this coordinate is meant to address, if any.
    pub level: Option<u32>,
}

impl TexCoord {
    pub fn new(u: f64, v: f64) -> Self {
        TexCoord { u, v, level: None }
    }

    pub fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.u) && (0.0..=1.0).contains(&self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Filter {
    Point,
    Bilinear,
}

/// Physical scales attached to a height field.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScaleMeta {
    /// Meters of ground distance per texel.
    pub horizontal_scale: f64,
    /// Meters per unit of normalized height h.
    pub vertical_scale: f64,
    /// Cube face index 0-5.
    pub face_id: u8,
    /// Body radius in meters.
    pub body_radius: f64,
}

/// Normalized elevation grid, h in [0,1] increasing bottom-to-top.
///
/// Storage is row-major with row 0 at v = 0 (bottom). Immutable after
/// load/stitch; shared read access from render workers is safe.
#[derive(Debug, Clone)]
pub struct HeightField {
    n: usize,
    values: Vec<f64>,
    pub meta: ScaleMeta,
}

fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

impl HeightField {
    pub fn from_values(n: usize, values: Vec<f64>, meta: ScaleMeta) -> Result<Self> {
        if !is_power_of_two(n) {
            return Err(Error::NonPowerOfTwo(n));
        }
        assert_eq!(values.len(), n * n, "value count must be n*n");
        for (i, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::SampleOutOfRange {
                    x: i % n,
                    y: i / n,
                    value: v,
                });
            }
        }
        Ok(HeightField { n, values, meta })
    }

    pub fn constant(n: usize, h: f64, meta: ScaleMeta) -> Result<Self> {
        Self::from_values(n, vec![h; n * n], meta)
    }

    /// Max dimension in texels (fields are square, so this is the width).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Texel value at (ix, iy), iy = 0 at the bottom.
    pub fn texel(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.n + ix]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Radial distance (units of body radius) of the surface at height h.
    pub fn radial(&self, h: f64) -> f64 {
        1.0 + h * self.meta.vertical_scale / self.meta.body_radius
    }

    /// Inverse of `radial`: normalized height for a radial distance.
    pub fn height_of_radial(&self, r: f64) -> f64 {
        (r - 1.0) * self.meta.body_radius / self.meta.vertical_scale
    }

    /// Face-local surface point at texture coordinate `t` and height `h`.
    pub fn surface_point(&self, t: TexCoord, h: f64) -> ObjPoint {
        tex_to_obj(t, self.radial(h))
    }

    /// Point or bilinear sample, edge-clamped.
    pub fn sample_height(&self, t: TexCoord, filter: Filter) -> f64 {
        match filter {
            Filter::Point => {
                let (ix, iy) = self.texel_of(t);
                self.texel(ix, iy)
            }
            Filter::Bilinear => {
                let n = self.n as f64;
                // Texel centers sit at (i + 0.5) / n.
                let fu = (t.u * n - 0.5).clamp(0.0, self.n as f64 - 1.0);
                let fv = (t.v * n - 0.5).clamp(0.0, self.n as f64 - 1.0);
                let i0 = fu.floor() as usize;
                let j0 = fv.floor() as usize;
                let i1 = (i0 + 1).min(self.n - 1);
                let j1 = (j0 + 1).min(self.n - 1);
                let du = fu - i0 as f64;
                let dv = fv - j0 as f64;
                let a = self.texel(i0, j0) * (1.0 - du) + self.texel(i1, j0) * du;
                let b = self.texel(i0, j1) * (1.0 - du) + self.texel(i1, j1) * du;
                a * (1.0 - dv) + b * dv
            }
        }
    }

    /// Containing texel of a texture coordinate, edge-clamped.
    pub fn texel_of(&self, t: TexCoord) -> (usize, usize) {
        let ix = ((t.u * self.n as f64).floor() as i64).clamp(0, self.n as i64 - 1) as usize;
        let iy = ((t.v * self.n as f64).floor() as i64).clamp(0, self.n as i64 - 1) as usize;
        (ix, iy)
    }
}

/// Gnomonic projection of a face-local point onto the face texture:
/// (u, v) = (x/z, y/z) / 2 + 1/2. Requires z > 0.
pub fn obj_to_tex(p: ObjPoint) -> Result<TexCoord> {
    if p.z <= 0.0 {
        return Err(Error::BehindFacePlane { z: p.z });
    }
    Ok(TexCoord::new(
        0.5 * p.x / p.z + 0.5,
        0.5 * p.y / p.z + 0.5,
    ))
}

/// Inverse projection: texture coordinate back to object space at the given
/// radial distance (units of body radius).
pub fn tex_to_obj(t: TexCoord, radial: f64) -> ObjPoint {
    let dir = vec3(2.0 * t.u - 1.0, 2.0 * t.v - 1.0, 1.0).normalized();
    dir * radial
}

// ---------------------------------------------------------------------------
// Cube face frames
// ---------------------------------------------------------------------------

/// Right-handed frame of one cube face: `forward` is the face normal (the
/// face plane sits at forward distance 1), `right` maps to +u, `up` to +v.
#[derive(Debug, Clone, Copy)]
pub struct FaceFrame {
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
}

pub const FACE_FRAMES: [FaceFrame; 6] = [
    // 0: +Z
    FaceFrame { right: vec3(1.0, 0.0, 0.0), up: vec3(0.0, 1.0, 0.0), forward: vec3(0.0, 0.0, 1.0) },
    // 1: -Z
    FaceFrame { right: vec3(-1.0, 0.0, 0.0), up: vec3(0.0, 1.0, 0.0), forward: vec3(0.0, 0.0, -1.0) },
    // 2: +X
    FaceFrame { right: vec3(0.0, 0.0, -1.0), up: vec3(0.0, 1.0, 0.0), forward: vec3(1.0, 0.0, 0.0) },
    // 3: -X
    FaceFrame { right: vec3(0.0, 0.0, 1.0), up: vec3(0.0, 1.0, 0.0), forward: vec3(-1.0, 0.0, 0.0) },
    // 4: +Y
    FaceFrame { right: vec3(1.0, 0.0, 0.0), up: vec3(0.0, 0.0, -1.0), forward: vec3(0.0, 1.0, 0.0) },
    // 5: -Y
    FaceFrame { right: vec3(1.0, 0.0, 0.0), up: vec3(0.0, 0.0, 1.0), forward: vec3(0.0, -1.0, 0.0) },
];

impl FaceFrame {
    pub fn world_to_face(&self, w: Vec3) -> Vec3 {
        vec3(w.dot(self.right), w.dot(self.up), w.dot(self.forward))
    }

    pub fn face_to_world(&self, f: Vec3) -> Vec3 {
        self.right * f.x + self.up * f.y + self.forward * f.z
    }
}

/// Face whose frustum contains the given world direction.
pub fn face_of_direction(d: Vec3) -> u8 {
    let ax = d.x.abs();
    let ay = d.y.abs();
    let az = d.z.abs();
    if az >= ax && az >= ay {
        if d.z >= 0.0 { 0 } else { 1 }
    } else if ax >= ay {
        if d.x >= 0.0 { 2 } else { 3 }
    } else if d.y >= 0.0 {
        4
    } else {
        5
    }
}

// ---------------------------------------------------------------------------
// File I/O: 16-bit binary PGM (P5) and raw float32 LE with text sidecar
// ---------------------------------------------------------------------------

const PGM_MAXVAL: u32 = 65535;

/// Load from 16-bit binary PGM (P5, maxval 65535, big-endian samples).
/// Values are normalized by the maxval; PGM row order is top-to-bottom and
/// gets flipped so row 0 is the bottom.
pub fn load_pgm(path: &Path, meta: ScaleMeta) -> Result<HeightField> {
    let data = fs::read(path)?;
    let bad = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0usize;
    let mut next_token = |data: &[u8]| -> Option<(usize, usize)> {
        let mut i = pos;
        loop {
            while i < data.len() && data[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < data.len() && data[i] == b'#' {
                while i < data.len() && data[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            break;
        }
        let start = i;
        while i < data.len() && !data[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            None
        } else {
            pos = i;
            Some((start, i))
        }
    };
    let tok = next_token(&data).ok_or_else(|| bad("empty file"))?;
    if &data[tok.0..tok.1] != b"P5" {
        return Err(bad("not a P5 PGM"));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let (s, e) = next_token(&data).ok_or_else(|| bad("truncated header"))?;
        *d = std::str::from_utf8(&data[s..e])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("non-numeric header field"))?;
    }
    let (width, height, maxval) = (dims[0], dims[1], dims[2]);
    if maxval != PGM_MAXVAL as usize {
        return Err(bad(&format!("maxval must be {PGM_MAXVAL}, got {maxval}")));
    }
    if width != height {
        return Err(Error::NonSquare { width, height });
    }
    if !is_power_of_two(width) {
        return Err(Error::NonPowerOfTwo(width));
    }
    // Exactly one whitespace byte separates header and raster.
    let raster = pos + 1;
    let need = width * height * 2;
    if data.len() < raster + need {
        return Err(bad("truncated raster"));
    }
    let mut values = vec![0.0f64; width * height];
    for iy in 0..height {
        let src_row = height - 1 - iy; // flip: file is top-to-bottom
        for ix in 0..width {
            let o = raster + (src_row * width + ix) * 2;
            let s = u16::from_be_bytes([data[o], data[o + 1]]);
            values[iy * width + ix] = s as f64 / PGM_MAXVAL as f64;
        }
    }
    HeightField::from_values(width, values, meta)
}

/// Write a grid of [0,1] values as 16-bit binary PGM. Used for mipdump.
pub fn save_pgm(path: &Path, n: usize, values: &[f64]) -> Result<()> {
    assert_eq!(values.len(), n * n);
    let mut out = fs::File::create(path)?;
    write!(out, "P5\n{n} {n}\n{PGM_MAXVAL}\n")?;
    let mut raster = Vec::with_capacity(n * n * 2);
    for iy in 0..n {
        let src_row = n - 1 - iy;
        for ix in 0..n {
            let q = (values[src_row * n + ix] * PGM_MAXVAL as f64).round() as u16;
            raster.extend_from_slice(&q.to_be_bytes());
        }
    }
    out.write_all(&raster)?;
    Ok(())
}

/// Load raw float32 LE samples with a `<path>.meta` sidecar holding dims and
/// scales as `key = value` lines.
pub fn load_raw(path: &Path) -> Result<HeightField> {
    let sidecar = sidecar_path(path);
    let text = fs::read_to_string(&sidecar)?;
    let bad = |reason: &str| Error::MalformedHeader {
        path: sidecar.clone(),
        reason: reason.to_string(),
    };
    let mut width = None;
    let mut height = None;
    let mut meta = ScaleMeta {
        horizontal_scale: 0.0,
        vertical_scale: 0.0,
        face_id: 0,
        body_radius: 0.0,
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(&format!("bad line: {line}")))?;
        let (k, v) = (k.trim(), v.trim());
        let parse = || -> Result<f64> { v.parse().map_err(|_| bad(&format!("bad value for {k}"))) };
        match k {
            "width" => width = Some(parse()? as usize),
            "height" => height = Some(parse()? as usize),
            "horizontal_scale" => meta.horizontal_scale = parse()?,
            "vertical_scale" => meta.vertical_scale = parse()?,
            "face_id" => meta.face_id = parse()? as u8,
            "body_radius" => meta.body_radius = parse()?,
            _ => return Err(bad(&format!("unknown key: {k}"))),
        }
    }
    let width = width.ok_or_else(|| bad("missing width"))?;
    let height = height.ok_or_else(|| bad("missing height"))?;
    if width != height {
        return Err(Error::NonSquare { width, height });
    }
    if !is_power_of_two(width) {
        return Err(Error::NonPowerOfTwo(width));
    }
    let mut file = fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() != width * height * 4 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("expected {} bytes, got {}", width * height * 4, bytes.len()),
        });
    }
    let mut values = vec![0.0f64; width * height];
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        if !(-1e-9..=1.0 + 1e-9).contains(&v) || !v.is_finite() {
            return Err(Error::SampleOutOfRange {
                x: i % width,
                y: i / width,
                value: v,
            });
        }
        values[i] = v.clamp(0.0, 1.0);
    }
    HeightField::from_values(width, values, meta)
}

/// Write raw float32 LE samples plus the text sidecar read by `load_raw`.
pub fn save_raw(path: &Path, hf: &HeightField) -> Result<()> {
    let mut bytes = Vec::with_capacity(hf.values.len() * 4);
    for &v in &hf.values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    let m = &hf.meta;
    fs::write(
        sidecar_path(path),
        format!(
            "width = {}\nheight = {}\nhorizontal_scale = {}\nvertical_scale = {}\nface_id = {}\nbody_radius = {}\n",
            hf.n, hf.n, m.horizontal_scale, m.vertical_scale, m.face_id, m.body_radius
        ),
    )?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta");
    std::path::PathBuf::from(s)
}

/// Load either format, picking by extension (`.pgm` vs anything else = raw).
pub fn load_heightfield(path: &Path, meta: ScaleMeta) -> Result<HeightField> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => load_pgm(path, meta),
        _ => load_raw(path),
    }
}

// ---------------------------------------------------------------------------
// Tile stitching
// ---------------------------------------------------------------------------

/// Texel rectangle in the global tile grid.
#[derive(Debug, Clone, Copy)]
pub struct TexelRect {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
}

/// Mapping from stitched-field texture coordinates back to the global face
/// texture: `global_uv = offset + local_uv * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexTransform {
    pub scale: f64,
    pub offset_u: f64,
    pub offset_v: f64,
}

/// Stitch tiles (each with its grid offset in tile units) into one seamless
/// field covering `roi`. Every output texel is copied verbatim from exactly
/// one source tile.
pub fn stitch_tiles(
    tiles: &[(HeightField, (i64, i64))],
    roi: TexelRect,
    global_n: usize,
) -> Result<(HeightField, TexTransform)> {
    let first = &tiles
        .first()
        .ok_or(Error::CoverageGap { x: roi.x0, y: roi.y0 })?
        .0;
    let tile_n = first.n;
    for (t, _) in tiles {
        if t.n != tile_n {
            return Err(Error::MixedResolutions { a: tile_n, b: t.n });
        }
        if t.meta.face_id != first.meta.face_id {
            return Err(Error::MixedFaces {
                a: first.meta.face_id,
                b: t.meta.face_id,
            });
        }
    }
    if roi.width != roi.height {
        return Err(Error::NonSquare {
            width: roi.width,
            height: roi.height,
        });
    }
    let n = roi.width;
    let mut values = vec![f64::NAN; n * n];
    for (tile, (gx, gy)) in tiles {
        let ox = gx * tile_n as i64; // tile origin in global texels
        let oy = gy * tile_n as i64;
        for ty in 0..tile_n {
            let gy_tex = oy + ty as i64;
            if gy_tex < roi.y0 || gy_tex >= roi.y0 + n as i64 {
                continue;
            }
            for tx in 0..tile_n {
                let gx_tex = ox + tx as i64;
                if gx_tex < roi.x0 || gx_tex >= roi.x0 + n as i64 {
                    continue;
                }
                let out_ix = (gx_tex - roi.x0) as usize;
                let out_iy = (gy_tex - roi.y0) as usize;
                values[out_iy * n + out_ix] = tile.texel(tx, ty);
            }
        }
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::CoverageGap {
            x: roi.x0 + (i % n) as i64,
            y: roi.y0 + (i / n) as i64,
        });
    }
    let field = HeightField::from_values(n, values, first.meta)?;
    let transform = TexTransform {
        scale: n as f64 / global_n as f64,
        offset_u: roi.x0 as f64 / global_n as f64,
        offset_v: roi.y0 as f64 / global_n as f64,
    };
    Ok((field, transform))
}
