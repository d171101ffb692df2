//! Scene initialization: voxel-grid downsampling of LiDAR clouds and
//! BEV-semantic augmentation that re-initializes vertical point columns over
//! grid cells occupied by tall-structure classes.

use nalgebra::Vector3;
use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Result, SplatError};
use crate::io::pgm::GrayImage;
use crate::scene::Camera;

/// Reserved label for points that project outside every semantic image.
pub const UNKNOWN_LABEL: u16 = u16::MAX;

#[derive(Debug, Clone)]
pub struct SemanticPointCloud {
    pub points: Vec<Vector3<f64>>,
    pub labels: Vec<u16>,
    pub label_names: BTreeMap<u16, String>,
}

impl SemanticPointCloud {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.labels.len() {
            return Err(SplatError::LengthMismatch {
                expected: self.points.len(),
                got: self.labels.len(),
            });
        }
        Ok(())
    }
}

/// One representative point per occupied voxel: the centroid of the voxel's
/// points. Voxel index is floor(coordinate / grid) per axis.
pub fn voxel_downsample(points: &[Vector3<f64>], grid: f64) -> Result<Vec<Vector3<f64>>> {
    if grid <= 0.0 {
        return Err(SplatError::InvalidArgument("grid must be > 0".into()));
    }
    let mut cells: HashMap<(i64, i64, i64), (Vector3<f64>, usize)> = HashMap::new();
    let mut order: Vec<(i64, i64, i64)> = Vec::new();
    for p in points {
        let key = (
            (p.x / grid).floor() as i64,
            (p.y / grid).floor() as i64,
            (p.z / grid).floor() as i64,
        );
        match cells.get_mut(&key) {
            Some((sum, n)) => {
                *sum += p;
                *n += 1;
            }
            None => {
                cells.insert(key, (*p, 1));
                order.push(key);
            }
        }
    }
    Ok(order
        .iter()
        .map(|k| {
            let (sum, n) = &cells[k];
            sum / *n as f64
        })
        .collect())
}

/// Labels each point from a semantic image: points projecting inside get the
/// label at their rounded pixel; points outside (or behind the camera) get
/// [`UNKNOWN_LABEL`].
pub fn label_points(
    points: &[Vector3<f64>],
    semantic_image: &GrayImage,
    camera: &Camera,
) -> Result<SemanticPointCloud> {
    camera.validate()?;
    let labels = points
        .iter()
        .map(|p| {
            let pc = camera.extrinsics.apply(p);
            if pc.z <= 0.01 {
                return UNKNOWN_LABEL;
            }
            let u = (camera.fx * pc.x / pc.z + camera.cx).round();
            let v = (camera.fy * pc.y / pc.z + camera.cy).round();
            if u < 0.0 || v < 0.0 || u >= semantic_image.width as f64 || v >= semantic_image.height as f64
            {
                return UNKNOWN_LABEL;
            }
            semantic_image.get(u as usize, v as usize)
        })
        .collect();
    Ok(SemanticPointCloud {
        points: points.to_vec(),
        labels,
        label_names: BTreeMap::new(),
    })
}

fn in_any_frustum(p: &Vector3<f64>, cameras: &[Camera]) -> bool {
    cameras.iter().any(|cam| {
        let pc = cam.extrinsics.apply(p);
        if pc.z <= 0.01 {
            return false;
        }
        let u = cam.fx * pc.x / pc.z + cam.cx;
        let v = cam.fy * pc.y / pc.z + cam.cy;
        u >= 0.0 && v >= 0.0 && u <= cam.width as f64 && v <= cam.height as f64
    })
}

/// BEV-semantic augmentation: mark BEV cells occupied by target-labeled
/// points, emit a vertical column of points {dz, 2dz, ..., <= h} at each
/// occupied cell center, and keep only the column points inside at least one
/// camera frustum.
pub fn bev_augment(
    cloud: &SemanticPointCloud,
    target_labels: &HashSet<u16>,
    bev_grid: f64,
    dz: f64,
    h: f64,
    cameras: &[Camera],
) -> Result<Vec<Vector3<f64>>> {
    cloud.validate()?;
    if dz <= 0.0 {
        return Err(SplatError::InvalidArgument("dz must be > 0".into()));
    }
    if h < dz {
        return Err(SplatError::InvalidArgument("h must be >= dz".into()));
    }
    if bev_grid <= 0.0 {
        return Err(SplatError::InvalidArgument("bev_grid must be > 0".into()));
    }
    let mut occupied: Vec<(i64, i64)> = Vec::new();
    let mut seen: HashSet<(i64, i64)> = HashSet::new();
    for (p, l) in cloud.points.iter().zip(&cloud.labels) {
        if !target_labels.contains(l) {
            continue;
        }
        let key = ((p.x / bev_grid).floor() as i64, (p.y / bev_grid).floor() as i64);
        if seen.insert(key) {
            occupied.push(key);
        }
    }
    let levels = (h / dz).floor() as usize;
    let mut out = Vec::new();
    for (ix, iy) in occupied {
        let cx = (ix as f64 + 0.5) * bev_grid;
        let cy = (iy as f64 + 0.5) * bev_grid;
        for k in 1..=levels {
            let p = Vector3::new(cx, cy, k as f64 * dz);
            if in_any_frustum(&p, cameras) {
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Concatenation, originals first.
pub fn merge(original: &[Vector3<f64>], augmented: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(original.len() + augmented.len());
    out.extend_from_slice(original);
    out.extend_from_slice(augmented);
    out
}
