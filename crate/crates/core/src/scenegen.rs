//! Deterministic synthetic street-scene generation plus scene file I/O
//! (JSON manifest + packed little-endian binary Gaussian records).
//!
//! The street is an arc of fixed radius so that a forward-facing camera with
//! a narrow field of view only ever sees a bounded stretch of road ahead of
//! it, regardless of how long the street grows. Segments are fixed-length
//! stretches of arc; growing the scene appends segments (and frames) without
//! changing what any single viewpoint can see.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, SplatError};
use crate::geometry::{normalize_time, Pose, Se3};
use crate::motion::ObjectTrack;
use crate::projection::{frustum_cull, project_gaussian, ProjectionConfig};
use crate::scene::{Camera, Gaussian3D, GaussianColor, SceneModel, FRESH_LIFE, FRESH_VISIBILITY};

pub const FORMAT_VERSION: u32 = 1;
/// Radius of the circular street centerline, meters.
pub const STREET_RADIUS: f64 = 120.0;
/// Arc length of one street segment, meters.
pub const SEGMENT_LENGTH: f64 = 80.0;
/// Static scenery extends this far past the end of the street so the last
/// cameras still look at a fully populated field of view. Sized just past
/// the sightline reach of the default camera with the default cull margin.
pub const RUNWAY_LENGTH: f64 = 52.0;
pub const CAMERA_HEIGHT: f64 = 1.6;
/// Bytes per packed Gaussian record: 18 f32 fields + one i32 instance id.
pub const RECORD_STRIDE: usize = 76;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum Trajectory {
    ConstantVelocity {
        start: [f64; 3],
        /// Meters per unit of normalized time.
        velocity: [f64; 3],
    },
    Circular {
        center: [f64; 3],
        radius: f64,
        /// Radians per unit of normalized time.
        angular_velocity: f64,
        phase: f64,
    },
}

impl Trajectory {
    pub fn position(&self, t: f64) -> Vector3<f64> {
        match self {
            Trajectory::ConstantVelocity { start, velocity } => {
                Vector3::from(*start) + Vector3::from(*velocity) * t
            }
            Trajectory::Circular {
                center,
                radius,
                angular_velocity,
                phase,
            } => {
                let a = angular_velocity * t + phase;
                Vector3::from(*center) + Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)
            }
        }
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        match self {
            Trajectory::ConstantVelocity { velocity, .. } => Vector3::from(*velocity),
            Trajectory::Circular {
                radius,
                angular_velocity,
                phase,
                ..
            } => {
                let a = angular_velocity * t + phase;
                Vector3::new(
                    -radius * angular_velocity * a.sin(),
                    radius * angular_velocity * a.cos(),
                    0.0,
                )
            }
        }
    }

    /// Pose at normalized time `t`: translation on the trajectory, yaw
    /// aligned with the direction of travel.
    pub fn pose(&self, t: f64) -> Pose {
        let v = self.velocity(t);
        let yaw = if v.x.abs() + v.y.abs() > 1e-12 {
            v.y.atan2(v.x)
        } else {
            0.0
        };
        Pose {
            rotation: Vector3::new(yaw, 0.0, 0.0),
            translation: self.position(t),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ObjectSpec {
    pub class: String,
    pub spawn_frame: usize,
    pub despawn_frame: usize,
    pub trajectory: Trajectory,
    pub gaussian_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub frame_count: usize,
    /// Static Gaussians per meter of street.
    pub static_density: f64,
    pub street_length: f64,
    pub building_height: f64,
    pub objects: Vec<ObjectSpec>,
    pub image_width: u32,
    pub image_height: u32,
    pub focal: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 7,
            frame_count: 6,
            static_density: 40.0,
            street_length: SEGMENT_LENGTH,
            building_height: 4.0,
            objects: Vec::new(),
            image_width: 96,
            image_height: 64,
            focal: 480.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frame_count < 1 {
            return Err(SplatError::InvalidArgument("frame_count must be >= 1".into()));
        }
        if !(self.static_density > 0.0) || !(self.street_length > 0.0) {
            return Err(SplatError::InvalidArgument(
                "static_density and street_length must be positive".into(),
            ));
        }
        if self.street_length + RUNWAY_LENGTH > STREET_RADIUS * std::f64::consts::TAU {
            return Err(SplatError::InvalidArgument(
                "street_length exceeds the circular street circumference".into(),
            ));
        }
        if !(self.building_height > 0.0) {
            return Err(SplatError::InvalidArgument("building_height must be positive".into()));
        }
        if self.image_width < 1 || self.image_height < 1 || !(self.focal > 0.0) {
            return Err(SplatError::InvalidArgument("bad camera intrinsics".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.spawn_frame >= o.despawn_frame || o.despawn_frame > self.frame_count {
                return Err(SplatError::InvalidArgument(format!(
                    "object {i}: need spawn < despawn <= frame_count"
                )));
            }
            if o.gaussian_count == 0 {
                return Err(SplatError::InvalidArgument(format!(
                    "object {i}: gaussian_count must be positive"
                )));
            }
            if let Trajectory::Circular { radius, .. } = o.trajectory {
                if !(radius > 0.0) {
                    return Err(SplatError::InvalidArgument(format!(
                        "object {i}: circular radius must be positive"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn segment_count(&self) -> usize {
        (self.street_length / SEGMENT_LENGTH).ceil() as usize
    }
}

/// Analytic truth recorded at generation time for tests and benchmarks.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Flat-ordered per-Gaussian colors, kept even if the scene's colors are
    /// later replaced by field queries.
    pub colors: Vec<[f64; 3]>,
    /// Per object: (normalized time, pose) at every frame it exists.
    pub object_poses: BTreeMap<u32, Vec<(f64, Pose)>>,
    /// Per frame: flat indices that pass the frustum check (analytic oracle).
    pub visible_sets: Vec<Vec<usize>>,
    /// Street segment index per static Gaussian.
    pub static_segment: Vec<usize>,
}

fn snap(v: f64) -> f64 {
    v as f32 as f64
}

fn snap3(v: Vector3<f64>) -> Vector3<f64> {
    Vector3::new(snap(v.x), snap(v.y), snap(v.z))
}

/// Procedural color from the (f32-snapped) position: an FNV-style hash of the
/// coordinate bits mapped into [0.1, 0.9] per channel.
fn hash_color(p: &Vector3<f64>) -> [f64; 3] {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in [p.x as f32, p.y as f32, p.z as f32] {
        h ^= v.to_bits() as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let ch = |shift: u32| ((h >> shift) & 0xff) as f64 / 255.0 * 0.8 + 0.1;
    [snap(ch(16)), snap(ch(32)), snap(ch(48))]
}

/// Arc centerline point at arc length `s`.
fn centerline(s: f64) -> (Vector3<f64>, f64) {
    let theta = s / STREET_RADIUS;
    (
        Vector3::new(STREET_RADIUS * theta.cos(), STREET_RADIUS * theta.sin(), 0.0),
        theta,
    )
}

/// World-to-camera extrinsics for a camera on the centerline at arc length
/// `s`, at driving height, looking along the tangent (direction of travel).
pub fn street_camera_extrinsics(s: f64) -> Se3 {
    let (mut c, theta) = centerline(s);
    c.z = CAMERA_HEIGHT;
    let forward = Vector3::new(-theta.sin(), theta.cos(), 0.0);
    let right = Vector3::new(theta.cos(), theta.sin(), 0.0);
    let down = Vector3::new(0.0, 0.0, -1.0);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    Se3 {
        rotation,
        translation: -(rotation * c),
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<(SceneModel, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.frame_count;

    // Cameras march along the arc at fixed speed, one frame per step.
    let mut cameras = Vec::with_capacity(n);
    for i in 0..n {
        let s = spec.street_length * (i as f64 + 0.5) / n as f64;
        cameras.push(Camera {
            fx: spec.focal,
            fy: spec.focal,
            cx: spec.image_width as f64 / 2.0,
            cy: spec.image_height as f64 / 2.0,
            width: spec.image_width,
            height: spec.image_height,
            extrinsics: street_camera_extrinsics(s),
            time: normalize_time(i, n)?,
        });
    }

    // Static layout: ground strip plus an outer building wall along the arc,
    // extended by a runway past the street end. Sightlines from the
    // centerline never dip much below the centerline radius, so keeping
    // everything at or outside it makes every Gaussian observable from some
    // camera behind it.
    let populated = spec.street_length + RUNWAY_LENGTH;
    let static_count = (spec.static_density * populated).round() as usize;
    let log_sigma = snap((0.02f64).ln());
    let mut placed: Vec<(f64, Gaussian3D)> = Vec::with_capacity(static_count);
    for _ in 0..static_count {
        let s = rng.gen_range(0.0..populated);
        let surface = rng.gen_range(0.0..1.0f64);
        let (lateral, z) = if surface < 0.5 {
            (rng.gen_range(0.0..3.0), 0.0)
        } else {
            (4.0, rng.gen_range(0.0..spec.building_height))
        };
        let (c, theta) = centerline(s);
        let radial = Vector3::new(theta.cos(), theta.sin(), 0.0);
        let position = snap3(c + radial * lateral + Vector3::new(0.0, 0.0, z));
        placed.push((
            s,
            Gaussian3D {
                position,
                log_scale: Vector3::repeat(log_sigma),
                rotation: UnitQuaternion::identity(),
                opacity: snap(0.85),
                color: GaussianColor::Rgb(hash_color(&position)),
                visibility: FRESH_VISIBILITY,
                life: FRESH_LIFE,
                instance_id: None,
            },
        ));
    }
    // Order along the street so each frame's presented set is a contiguous
    // run of the static array.
    placed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let static_segment: Vec<usize> = placed
        .iter()
        .map(|(s, _)| (s / SEGMENT_LENGTH).floor() as usize)
        .collect();
    let static_gaussians: Vec<Gaussian3D> = placed.into_iter().map(|(_, g)| g).collect();

    // Dynamic objects: a small box of Gaussians in the object-local frame and
    // an analytic pose track sampled at each frame the object exists.
    let mut dynamic_gaussians: BTreeMap<u32, Vec<Gaussian3D>> = BTreeMap::new();
    let mut tracks: BTreeMap<u32, ObjectTrack> = BTreeMap::new();
    let mut object_poses: BTreeMap<u32, Vec<(f64, Pose)>> = BTreeMap::new();
    let mut class_indices: BTreeMap<String, usize> = BTreeMap::new();
    let mut classes: Vec<String> = spec.objects.iter().map(|o| o.class.clone()).collect();
    classes.sort();
    classes.dedup();
    for (i, c) in classes.iter().enumerate() {
        class_indices.insert(c.clone(), i);
    }
    for (oi, obj) in spec.objects.iter().enumerate() {
        let id = oi as u32;
        let mut gs = Vec::with_capacity(obj.gaussian_count);
        for _ in 0..obj.gaussian_count {
            let position = snap3(Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..1.5),
            ));
            gs.push(Gaussian3D {
                position,
                log_scale: Vector3::repeat(snap((0.08f64).ln())),
                rotation: UnitQuaternion::identity(),
                opacity: snap(0.8),
                color: GaussianColor::Rgb(hash_color(&position)),
                visibility: FRESH_VISIBILITY,
                life: FRESH_LIFE,
                instance_id: Some(id),
            });
        }
        dynamic_gaussians.insert(id, gs);

        let mut track = ObjectTrack::new(id, obj.class.clone(), class_indices[&obj.class]);
        let last = obj.despawn_frame.min(n).saturating_sub(1).max(obj.spawn_frame);
        let mut poses = Vec::new();
        for f in obj.spawn_frame..=last {
            let t = normalize_time(f, n)?;
            let pose = obj.trajectory.pose(t);
            track.pose_samples.push((t, pose.clone()));
            track.coarse_positions.push((t, pose.translation));
            poses.push((t, pose));
        }
        object_poses.insert(id, poses);
        tracks.insert(id, track);
    }

    let scene = SceneModel {
        static_gaussians,
        dynamic_gaussians,
        tracks,
        cameras,
        frame_count: n,
        visibility_cache: None,
    };
    scene.validate()?;

    let colors: Vec<[f64; 3]> = scene
        .flat_gaussians()
        .iter()
        .map(|g| match g.color {
            GaussianColor::Rgb(c) => c,
            GaussianColor::FieldQuery => [0.0; 3],
        })
        .collect();
    let visible_sets = true_visible_sets(&scene)?;
    Ok((
        scene,
        GroundTruth {
            colors,
            object_poses,
            visible_sets,
            static_segment,
        },
    ))
}

/// Frustum oracle: which flat indices project strictly inside each frame's
/// image (no cull margin), objects placed analytically.
pub fn true_visible_sets(scene: &SceneModel) -> Result<Vec<Vec<usize>>> {
    let cfg = ProjectionConfig::default();
    let margin = 0.0;
    let (_, dyn_ranges) = scene.flat_index_ranges();
    let mut sets = Vec::with_capacity(scene.cameras.len());
    for cam in &scene.cameras {
        let mut flats = Vec::new();
        let mut projected = Vec::new();
        for (flat, g) in scene.static_gaussians.iter().enumerate() {
            projected.push(project_gaussian(&g.position, &g.covariance()?, cam, &cfg, flats.len()));
            flats.push(flat);
        }
        for (id, list) in &scene.dynamic_gaussians {
            let Some(pose) = scene.tracks[id].pose_at(cam.time) else { continue };
            let se3 = pose.to_se3();
            let range = dyn_ranges[id].clone();
            for (k, g) in list.iter().enumerate() {
                let world = se3.apply(&g.position);
                let cov = se3.rotation * g.covariance()? * se3.rotation.transpose();
                projected.push(project_gaussian(&world, &cov, cam, &cfg, flats.len()));
                flats.push(range.start + k);
            }
        }
        let cull = frustum_cull(&projected, cam.width, cam.height, margin);
        sets.push(
            flats
                .iter()
                .zip(&cull)
                .filter_map(|(&f, &c)| c.then_some(f))
                .collect(),
        );
    }
    Ok(sets)
}

/// Swaps every constant color for a field-query marker (used when rendering
/// through fitted neural color fields).
pub fn replace_colors_with_field_query(scene: &mut SceneModel) {
    scene.for_each_gaussian_mut(|g| g.color = GaussianColor::FieldQuery);
}

// ---------------------------------------------------------------------------
// Scene file I/O: `<base>.scene.json` manifest + `<base>.scene.bin` records.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TrackManifest {
    instance_id: u32,
    class: String,
    class_index: usize,
    coarse: Vec<(f64, [f64; 3])>,
    poses: Vec<(f64, [f64; 3], [f64; 3])>,
}

#[derive(Serialize, Deserialize)]
struct SceneManifest {
    version: u32,
    frame_count: usize,
    static_count: usize,
    dynamic_counts: BTreeMap<u32, usize>,
    cameras: Vec<Camera>,
    tracks: Vec<TrackManifest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec: Option<SceneSpec>,
}

pub fn scene_paths(base: &Path) -> (PathBuf, PathBuf) {
    let stem = base.as_os_str().to_string_lossy();
    (
        PathBuf::from(format!("{stem}.scene.json")),
        PathBuf::from(format!("{stem}.scene.bin")),
    )
}

pub fn save_scene(scene: &SceneModel, spec: Option<&SceneSpec>, base: &Path) -> Result<()> {
    let (json_path, bin_path) = scene_paths(base);
    let manifest = SceneManifest {
        version: FORMAT_VERSION,
        frame_count: scene.frame_count,
        static_count: scene.static_gaussians.len(),
        dynamic_counts: scene
            .dynamic_gaussians
            .iter()
            .map(|(id, v)| (*id, v.len()))
            .collect(),
        cameras: scene.cameras.clone(),
        tracks: scene
            .tracks
            .values()
            .map(|t| TrackManifest {
                instance_id: t.instance_id,
                class: t.class_label.clone(),
                class_index: t.class_index,
                coarse: t.coarse_positions.iter().map(|(t, p)| (*t, [p.x, p.y, p.z])).collect(),
                poses: t
                    .pose_samples
                    .iter()
                    .map(|(t, p)| {
                        (
                            *t,
                            [p.translation.x, p.translation.y, p.translation.z],
                            [p.rotation.x, p.rotation.y, p.rotation.z],
                        )
                    })
                    .collect(),
            })
            .collect(),
        spec: spec.cloned(),
    };
    let f = BufWriter::new(std::fs::File::create(&json_path)?);
    serde_json::to_writer_pretty(f, &manifest)?;

    let mut w = BufWriter::new(std::fs::File::create(&bin_path)?);
    for g in scene.flat_gaussians() {
        for v in [g.position, g.log_scale] {
            for k in 0..3 {
                w.write_f32::<LittleEndian>(v[k] as f32)?;
            }
        }
        let q = g.rotation.quaternion();
        for v in [q.w, q.i, q.j, q.k] {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        w.write_f32::<LittleEndian>(g.opacity as f32)?;
        let rgb = match g.color {
            GaussianColor::Rgb(c) => c,
            GaussianColor::FieldQuery => [-1.0, 0.0, 0.0],
        };
        for v in rgb {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        for v in [g.visibility.0, g.visibility.1, g.life.0, g.life.1] {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        w.write_i32::<LittleEndian>(g.instance_id.map_or(-1, |id| id as i32))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_scene(base: &Path) -> Result<(SceneModel, Option<SceneSpec>)> {
    let (json_path, bin_path) = scene_paths(base);
    let f = BufReader::new(std::fs::File::open(&json_path)?);
    let manifest: SceneManifest = serde_json::from_reader(f)?;
    if manifest.version != FORMAT_VERSION {
        return Err(SplatError::Version(manifest.version));
    }
    let total: usize =
        manifest.static_count + manifest.dynamic_counts.values().sum::<usize>();
    let mut r = BufReader::new(std::fs::File::open(&bin_path)?);
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != total * RECORD_STRIDE {
        return Err(SplatError::Malformed(format!(
            "scene binary is {} bytes, expected {}",
            raw.len(),
            total * RECORD_STRIDE
        )));
    }
    let mut cursor = std::io::Cursor::new(raw);
    let mut read_record = |expect_instance: Option<u32>| -> Result<Gaussian3D> {
        let mut f3 = || -> Result<Vector3<f64>> {
            Ok(Vector3::new(
                cursor.read_f32::<LittleEndian>()? as f64,
                cursor.read_f32::<LittleEndian>()? as f64,
                cursor.read_f32::<LittleEndian>()? as f64,
            ))
        };
        let position = f3()?;
        let log_scale = f3()?;
        let w = cursor.read_f32::<LittleEndian>()? as f64;
        let i = cursor.read_f32::<LittleEndian>()? as f64;
        let j = cursor.read_f32::<LittleEndian>()? as f64;
        let k = cursor.read_f32::<LittleEndian>()? as f64;
        let norm = (w * w + i * i + j * j + k * k).sqrt();
        if !((norm - 1.0).abs() < 1e-3) {
            return Err(SplatError::Malformed("non-unit quaternion in record".into()));
        }
        // Keep the stored components verbatim so save→load→save is
        // byte-stable; the norm is within f32 rounding of 1.
        let rotation =
            UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(w, i, j, k));
        let opacity = cursor.read_f32::<LittleEndian>()? as f64;
        let r0 = cursor.read_f32::<LittleEndian>()? as f64;
        let r1 = cursor.read_f32::<LittleEndian>()? as f64;
        let r2 = cursor.read_f32::<LittleEndian>()? as f64;
        let color = if r0 < 0.0 {
            GaussianColor::FieldQuery
        } else {
            GaussianColor::Rgb([r0, r1, r2])
        };
        let visibility = (
            cursor.read_f32::<LittleEndian>()? as f64,
            cursor.read_f32::<LittleEndian>()? as f64,
        );
        let life = (
            cursor.read_f32::<LittleEndian>()? as f64,
            cursor.read_f32::<LittleEndian>()? as f64,
        );
        let id = cursor.read_i32::<LittleEndian>()?;
        let instance_id = if id < 0 { None } else { Some(id as u32) };
        if instance_id != expect_instance {
            return Err(SplatError::Malformed(format!(
                "record instance id {instance_id:?} does not match manifest group {expect_instance:?}"
            )));
        }
        Ok(Gaussian3D {
            position,
            log_scale,
            rotation,
            opacity,
            color,
            visibility,
            life,
            instance_id,
        })
    };

    let mut static_gaussians = Vec::with_capacity(manifest.static_count);
    for _ in 0..manifest.static_count {
        static_gaussians.push(read_record(None)?);
    }
    let mut dynamic_gaussians = BTreeMap::new();
    for (&id, &count) in &manifest.dynamic_counts {
        let mut gs = Vec::with_capacity(count);
        for _ in 0..count {
            gs.push(read_record(Some(id))?);
        }
        dynamic_gaussians.insert(id, gs);
    }

    let mut tracks = BTreeMap::new();
    for tm in manifest.tracks {
        let mut track = ObjectTrack::new(tm.instance_id, tm.class, tm.class_index);
        track.coarse_positions = tm.coarse.iter().map(|(t, p)| (*t, Vector3::from(*p))).collect();
        track.pose_samples = tm
            .poses
            .iter()
            .map(|(t, xyz, rpy)| {
                (
                    *t,
                    Pose {
                        rotation: Vector3::from(*rpy),
                        translation: Vector3::from(*xyz),
                    },
                )
            })
            .collect();
        tracks.insert(tm.instance_id, track);
    }

    let scene = SceneModel {
        static_gaussians,
        dynamic_gaussians,
        tracks,
        cameras: manifest.cameras,
        frame_count: manifest.frame_count,
        visibility_cache: None,
    };
    scene.validate()?;
    Ok((scene, manifest.spec))
}

/// Exports flat-ordered Gaussian positions as PLY for downstream point tools.
pub fn export_positions_ply(
    scene: &SceneModel,
    path: &Path,
    format: crate::io::ply::PlyFormat,
) -> Result<()> {
    let points: Vec<Vector3<f64>> = scene.flat_gaussians().iter().map(|g| g.position).collect();
    crate::io::ply::write_ply(&points, None, path, format)
}
