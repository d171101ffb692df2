//! Scene-level domain types: Gaussians, cameras and the scene model.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Result, SplatError};
use crate::geometry::Se3;
use crate::motion::ObjectTrack;

/// Fresh-point temporal visibility: visible at all times.
pub const FRESH_VISIBILITY: (f64, f64) = (-1.0, 1.0);
/// Fresh-point life: the empty interval (start above end) that collapses on
/// the first observation.
pub const FRESH_LIFE: (f64, f64) = (1.0, -1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GaussianColor {
    /// Constant RGB in [0,1]^3.
    Rgb([f64; 3]),
    /// Color is queried from a neural field at render time.
    FieldQuery,
}

/// One splat. Positions are world-frame for static Gaussians and
/// object-local for dynamic ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian3D {
    pub position: Vector3<f64>,
    pub log_scale: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub opacity: f64,
    pub color: GaussianColor,
    /// Temporal visibility interval (v_s, v_e).
    pub visibility: (f64, f64),
    /// Point life (l_s, l_e); running min/max of observed times.
    pub life: (f64, f64),
    /// Present iff the Gaussian belongs to a dynamic object.
    pub instance_id: Option<u32>,
}

impl Gaussian3D {
    pub fn new(
        position: Vector3<f64>,
        log_scale: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        opacity: f64,
        color: GaussianColor,
        instance_id: Option<u32>,
    ) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) || !log_scale.iter().all(|v| v.is_finite()) {
            return Err(SplatError::NonFinite("gaussian"));
        }
        if !(opacity > 0.0 && opacity < 1.0) {
            return Err(SplatError::InvalidArgument(format!(
                "opacity must be in (0,1), got {opacity}"
            )));
        }
        let g = Gaussian3D {
            position,
            log_scale,
            rotation: UnitQuaternion::new_normalize(*rotation.quaternion()),
            opacity,
            color,
            visibility: FRESH_VISIBILITY,
            life: FRESH_LIFE,
            instance_id,
        };
        debug_assert!((g.rotation.norm() - 1.0).abs() < 1e-6);
        Ok(g)
    }

    pub fn covariance(&self) -> Result<Matrix3<f64>> {
        crate::geometry::build_covariance(&self.log_scale, &self.rotation)
    }
}

/// Pinhole camera with world-to-camera extrinsics. Camera frame is
/// x-right, y-down, z-forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub extrinsics: Se3,
    /// Normalized scene time in [-1, 1].
    pub time: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        self.extrinsics.validate()?;
        if self.width < 1 || self.height < 1 {
            return Err(SplatError::InvalidArgument("camera size must be >= 1".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(SplatError::InvalidArgument("focal lengths must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.time) {
            return Err(SplatError::InvalidArgument(format!(
                "camera time {} outside [-1,1]",
                self.time
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> Vector3<f64> {
        self.extrinsics.inverse().translation
    }
}

/// Full dynamic scene: static splats, per-object local splats, tracks and the
/// camera schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneModel {
    pub static_gaussians: Vec<Gaussian3D>,
    pub dynamic_gaussians: BTreeMap<u32, Vec<Gaussian3D>>,
    pub tracks: BTreeMap<u32, ObjectTrack>,
    pub cameras: Vec<Camera>,
    pub frame_count: usize,
    /// Lazily built packed copy of every visibility interval in flat order,
    /// so the per-frame temporal filter does not have to walk the full
    /// Gaussian structs. Cleared whenever intervals change.
    #[serde(skip)]
    pub(crate) visibility_cache: Option<Vec<(f64, f64)>>,
}

impl SceneModel {
    /// Rebuilds the packed visibility-interval cache if it was cleared.
    pub fn ensure_visibility_cache(&mut self) {
        if self.visibility_cache.is_some() {
            return;
        }
        let mut v = Vec::with_capacity(
            self.static_gaussians.len()
                + self.dynamic_gaussians.values().map(Vec::len).sum::<usize>(),
        );
        v.extend(self.static_gaussians.iter().map(|g| g.visibility));
        for list in self.dynamic_gaussians.values() {
            v.extend(list.iter().map(|g| g.visibility));
        }
        self.visibility_cache = Some(v);
    }

    /// Drops the packed visibility cache; call after changing any interval.
    pub fn clear_visibility_cache(&mut self) {
        self.visibility_cache = None;
    }

    pub fn validate(&self) -> Result<()> {
        for id in self.dynamic_gaussians.keys() {
            if !self.tracks.contains_key(id) {
                return Err(SplatError::UnknownInstance(*id));
            }
        }
        for cam in &self.cameras {
            cam.validate()?;
        }
        Ok(())
    }

    pub fn total_gaussians(&self) -> usize {
        self.static_gaussians.len() + self.dynamic_gaussians.values().map(Vec::len).sum::<usize>()
    }

    /// Flat ordering used by every per-Gaussian mask: statics first, then
    /// dynamic groups by ascending instance id.
    pub fn flat_index_ranges(&self) -> (usize, BTreeMap<u32, std::ops::Range<usize>>) {
        let mut next = self.static_gaussians.len();
        let mut ranges = BTreeMap::new();
        for (id, list) in &self.dynamic_gaussians {
            ranges.insert(*id, next..next + list.len());
            next += list.len();
        }
        (self.static_gaussians.len(), ranges)
    }

    pub fn gaussian_at(&self, flat: usize) -> &Gaussian3D {
        let ns = self.static_gaussians.len();
        if flat < ns {
            return &self.static_gaussians[flat];
        }
        let mut offset = ns;
        for list in self.dynamic_gaussians.values() {
            if flat < offset + list.len() {
                return &list[flat - offset];
            }
            offset += list.len();
        }
        panic!("flat index {flat} out of range");
    }

    pub fn gaussian_at_mut(&mut self, flat: usize) -> &mut Gaussian3D {
        let ns = self.static_gaussians.len();
        if flat < ns {
            return &mut self.static_gaussians[flat];
        }
        let mut offset = ns;
        for list in self.dynamic_gaussians.values_mut() {
            if flat < offset + list.len() {
                return &mut list[flat - offset];
            }
            offset += list.len();
        }
        panic!("flat index {flat} out of range");
    }

    /// Applies `f` to every Gaussian in flat order.
    pub fn for_each_gaussian_mut(&mut self, mut f: impl FnMut(&mut Gaussian3D)) {
        for g in &mut self.static_gaussians {
            f(g);
        }
        for list in self.dynamic_gaussians.values_mut() {
            for g in list {
                f(g);
            }
        }
    }

    pub fn flat_gaussians(&self) -> Vec<&Gaussian3D> {
        let mut out = Vec::with_capacity(self.total_gaussians());
        out.extend(self.static_gaussians.iter());
        for list in self.dynamic_gaussians.values() {
            out.extend(list.iter());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_gaussian_intervals() {
        let g = Gaussian3D::new(
            Vector3::zeros(),
            Vector3::zeros(),
            UnitQuaternion::identity(),
            0.5,
            GaussianColor::Rgb([1.0, 0.0, 0.0]),
            None,
        )
        .unwrap();
        assert_eq!(g.visibility, (-1.0, 1.0));
        assert_eq!(g.life, (1.0, -1.0));
    }

    #[test]
    fn opacity_bounds_enforced() {
        for bad in [0.0, 1.0, -0.1, 1.5] {
            assert!(Gaussian3D::new(
                Vector3::zeros(),
                Vector3::zeros(),
                UnitQuaternion::identity(),
                bad,
                GaussianColor::Rgb([0.0; 3]),
                None,
            )
            .is_err());
        }
    }

    #[test]
    fn quaternion_renormalized_on_construction() {
        let q = UnitQuaternion::from_euler_angles(0.4, -0.2, 1.1);
        let g = Gaussian3D::new(
            Vector3::zeros(),
            Vector3::zeros(),
            q,
            0.5,
            GaussianColor::FieldQuery,
            Some(3),
        )
        .unwrap();
        assert!((g.rotation.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scene_rejects_untracked_instance() {
        let g = Gaussian3D::new(
            Vector3::zeros(),
            Vector3::zeros(),
            UnitQuaternion::identity(),
            0.5,
            GaussianColor::Rgb([0.5; 3]),
            Some(7),
        )
        .unwrap();
        let mut dynamic = BTreeMap::new();
        dynamic.insert(7u32, vec![g]);
        let scene = SceneModel {
            static_gaussians: vec![],
            dynamic_gaussians: dynamic,
            tracks: BTreeMap::new(),
            cameras: vec![],
            frame_count: 0,
            visibility_cache: None,
        };
        assert!(matches!(scene.validate(), Err(SplatError::UnknownInstance(7))));
    }
}
