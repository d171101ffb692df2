//! Perspective projection of 3D Gaussians (EWA-style), instance-specific
//! cameras, and frustum culling.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use std::collections::BTreeMap;

use crate::geometry::{compose_se3, Pose};
use crate::scene::Camera;

#[derive(Debug, Clone, Copy)]
pub struct ProjectionConfig {
    /// Camera-frame z below this is treated as behind the camera.
    pub near_plane: f64,
    /// Added to both diagonal entries of the 2D covariance (px^2).
    pub lowpass: f64,
    /// x/z and y/z are clamped to this multiple of the half-FOV tangent
    /// before the Jacobian is evaluated.
    pub tan_clamp: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            near_plane: 0.01,
            lowpass: 0.3,
            tan_clamp: 1.3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectedGaussian {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    /// Camera-frame z.
    pub depth: f64,
    /// Index into the flattened input list.
    pub source_index: usize,
    pub in_frustum: bool,
}

/// Projects one Gaussian: mean via the pinhole model, covariance via the
/// 2x3 perspective Jacobian J applied to the camera-frame covariance.
pub fn project_gaussian(
    position: &Vector3<f64>,
    cov3d: &Matrix3<f64>,
    camera: &Camera,
    cfg: &ProjectionConfig,
    source_index: usize,
) -> ProjectedGaussian {
    let p_cam = camera.extrinsics.apply(position);
    let in_frustum = p_cam.z > cfg.near_plane;
    let z = p_cam.z.max(cfg.near_plane);

    let mean2d = Vector2::new(
        camera.fx * p_cam.x / z + camera.cx,
        camera.fy * p_cam.y / z + camera.cy,
    );

    // Clamp tangents near the frustum edge so J stays bounded.
    let lim_x = cfg.tan_clamp * (camera.width as f64 * 0.5) / camera.fx;
    let lim_y = cfg.tan_clamp * (camera.height as f64 * 0.5) / camera.fy;
    let tx = (p_cam.x / z).clamp(-lim_x, lim_x);
    let ty = (p_cam.y / z).clamp(-lim_y, lim_y);

    let j = Matrix2x3::new(
        camera.fx / z,
        0.0,
        -camera.fx * tx / z,
        0.0,
        camera.fy / z,
        -camera.fy * ty / z,
    );
    let w = &camera.extrinsics.rotation;
    let cov_cam = w * cov3d * w.transpose();
    let mut cov2d = j * cov_cam * j.transpose();
    cov2d[(0, 0)] += cfg.lowpass;
    cov2d[(1, 1)] += cfg.lowpass;
    // Keep it exactly symmetric.
    let off = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(0, 1)] = off;
    cov2d[(1, 0)] = off;

    ProjectedGaussian {
        mean2d,
        cov2d,
        depth: p_cam.z,
        source_index,
        in_frustum,
    }
}

/// Mean-only projection for cheap frustum pre-culling: returns the pixel
/// position, camera-frame depth, and the near-plane flag. Matches the mean
/// and flag produced by [`project_gaussian`] exactly.
pub fn project_mean(
    position: &Vector3<f64>,
    camera: &Camera,
    cfg: &ProjectionConfig,
) -> (Vector2<f64>, f64, bool) {
    let p_cam = camera.extrinsics.apply(position);
    let in_frustum = p_cam.z > cfg.near_plane;
    let z = p_cam.z.max(cfg.near_plane);
    (
        Vector2::new(
            camera.fx * p_cam.x / z + camera.cx,
            camera.fy * p_cam.y / z + camera.cy,
        ),
        p_cam.z,
        in_frustum,
    )
}

/// Pixel-bounds part of the frustum test.
pub fn in_image_margin(mean2d: &Vector2<f64>, width: u32, height: u32, margin: f64) -> bool {
    mean2d.x >= -margin
        && mean2d.x <= width as f64 + margin
        && mean2d.y >= -margin
        && mean2d.y <= height as f64 + margin
}

/// Builds one camera per object whose extrinsics pre-compose the object's
/// local-to-global pose: W_i = W * W_i2g. Intrinsics are shared with `base`.
pub fn build_instance_cameras(
    base: &Camera,
    object_poses: &BTreeMap<u32, Pose>,
) -> BTreeMap<u32, Camera> {
    object_poses
        .iter()
        .map(|(id, pose)| {
            let mut cam = base.clone();
            cam.extrinsics = compose_se3(&base.extrinsics, &pose.to_se3());
            (*id, cam)
        })
        .collect()
}

/// Visible mask M_t: in front of the near plane and inside the image bounds
/// expanded by `margin` pixels.
pub fn frustum_cull(
    projected: &[ProjectedGaussian],
    width: u32,
    height: u32,
    margin: f64,
) -> Vec<bool> {
    projected
        .iter()
        .map(|p| p.in_frustum && in_image_margin(&p.mean2d, width, height, margin))
        .collect()
}
