//! File formats: PLY point clouds, PGM masks/labels, PPM images and raw
//! float depth maps.

pub mod pgm;
pub mod ply;
pub mod ppm;
