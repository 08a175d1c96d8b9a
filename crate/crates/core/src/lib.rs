//! Soft terrain shadows on curved (cubesphere) height fields.
//!
//! The core pipeline: load a normalized height field per cube face
//! ([`heightfield`]), build a maximum mipmap over it ([`maxmip`]), cast view
//! rays against a pre-displaced cubesphere mesh ([`viewray`]), then run a
//! dynamic-programming trace over the pyramid to get the optimal
//! height-over-distance cost and map it to an analytic disc-occlusion
//! fraction ([`shadow`]). [`render`] ties it together into a CPU renderer;
//! [`oracles`] holds the slow reference implementations used for validation
//! and benchmarking.

pub mod error;
pub mod heightfield;
pub mod math;
pub mod maxmip;
pub mod oracles;
pub mod render;
pub mod shadow;
pub mod synthetic;
pub mod viewray;

pub use error::{Error, Result};

/// Pin the data-parallel worker count. Returns false when the sequential
/// build is in use (or the pool was already initialized).
pub fn set_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}
pub use heightfield::{HeightField, ScaleMeta, TexCoord};
pub use maxmip::{build_max_mipmap, MaxMipPyramid};
pub use render::{load_scene, render_scene, LoadedScene, Scene};
pub use shadow::{shadow_term, trace_shadow, ShadowRay, TraceConfig};
pub use viewray::{view_intersect, StepPolicy, TerrainBody};
