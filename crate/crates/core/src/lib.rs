//! Dynamic street-scene Gaussian splatting.
//!
//! Two render pipelines share the same projection and blending math:
//!
//! * conventional — transform every dynamic Gaussian into the world frame,
//!   project everything, frustum-cull, blend;
//! * streamlined — temporal-visibility filter, instance-specific projection
//!   (object poses folded into per-instance cameras), adaptive LOD, blend,
//!   point-life update.
//!
//! Supporting modules cover neural color fields, NeuralODE object tracks,
//! BEV-semantic initialization, synthetic scene generation, image metrics,
//! and the scalability benchmark.

pub mod benchmark;
pub mod error;
pub mod field;
pub mod geometry;
pub mod image;
pub mod init;
pub mod io;
pub mod lod;
pub mod metrics;
pub mod mlp;
pub mod motion;
pub mod projection;
pub mod raster;
pub mod scene;
pub mod scenegen;
pub mod visibility;

pub use error::{Result, SplatError};
pub use geometry::{compose_se3, normalize_time, Pose, Se3};
pub use image::Image;
pub use raster::{render_view, training_sweep, FieldSet, PipelineMode, RenderConfig, RenderOutput};
pub use scene::{Camera, Gaussian3D, GaussianColor, SceneModel};
pub use scenegen::{generate_scene, load_scene, save_scene, SceneSpec};
