//! Scalability benchmark: renders every view of progressively longer street
//! scenes in both pipeline modes and records per-viewpoint wall time with a
//! stage breakdown. The headline property is that conventional cost grows
//! with scene length while streamlined cost stays nearly flat.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::error::{Result, SplatError};
use crate::lod::LodConfig;
use crate::metrics::psnr;
use crate::raster::{render_view, training_sweep, PipelineMode, RenderConfig};
use crate::scenegen::{generate_scene, ObjectSpec, SceneSpec, Trajectory, SEGMENT_LENGTH, STREET_RADIUS};

pub const CSV_HEADER: &str = "mode,scale,gaussians,per_view_ms,filter_ms,project_ms,lod_ms,blend_ms";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRecord {
    pub mode: String,
    /// Scene scale in street segments.
    pub scale: usize,
    pub gaussians: usize,
    /// Median wall time per rendered viewpoint.
    pub per_view_ms: f64,
    pub filter_ms: f64,
    pub project_ms: f64,
    pub lod_ms: f64,
    pub blend_ms: f64,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Builds the spec for `scale` street segments from a single-segment base:
/// street length and frame count scale together, and each segment gets one
/// moving object (sized like the base's first object) that drives along the
/// street just ahead of the camera during that segment's frame window.
pub fn bench_spec(base: &SceneSpec, scale: usize) -> SceneSpec {
    let frames_per_segment = base.frame_count;
    let n = frames_per_segment * scale;
    let length = base.street_length * scale as f64;
    let object_count_per_segment = base.objects.len();
    let mut objects = Vec::new();
    if object_count_per_segment > 0 && n > 1 {
        // A circular trajectory that keeps pace with the camera, 22 m of arc
        // ahead of it: theta_cam(t) is linear in normalized time.
        let omega = length * (n as f64 - 1.0) / (2.0 * n as f64 * STREET_RADIUS);
        let phase = omega + length / (2.0 * n as f64 * STREET_RADIUS) + 22.0 / STREET_RADIUS;
        for seg in 0..scale {
            for obj in &base.objects {
                objects.push(ObjectSpec {
                    class: obj.class.clone(),
                    spawn_frame: seg * frames_per_segment,
                    despawn_frame: (seg + 1) * frames_per_segment,
                    trajectory: Trajectory::Circular {
                        center: [0.0, 0.0, 0.0],
                        radius: STREET_RADIUS + 2.0,
                        angular_velocity: omega,
                        phase,
                    },
                    gaussian_count: obj.gaussian_count,
                });
            }
        }
    }
    SceneSpec {
        seed: base.seed,
        frame_count: n,
        static_density: base.static_density,
        street_length: length,
        building_height: base.building_height,
        objects,
        image_width: base.image_width,
        image_height: base.image_height,
        focal: base.focal,
    }
}

/// Number of timed passes per mode; the fastest pass is reported so a burst
/// of unrelated machine load cannot masquerade as a scaling effect.
const TIMED_PASSES: usize = 5;

/// Times every view of the scene in `mode` and reduces to medians, keeping
/// the fastest of several passes.
fn time_mode(
    scene: &mut crate::scene::SceneModel,
    mode: PipelineMode,
    cfg: &RenderConfig,
    scale: usize,
) -> Result<BenchRecord> {
    let frames = scene.cameras.len();
    let mut best: Option<BenchRecord> = None;
    for _ in 0..TIMED_PASSES {
        let mut per_view = Vec::with_capacity(frames);
        let mut filter = Vec::with_capacity(frames);
        let mut project = Vec::with_capacity(frames);
        let mut lod = Vec::with_capacity(frames);
        let mut blend = Vec::with_capacity(frames);
        for frame in 0..frames {
            let start = Instant::now();
            let out = render_view(scene, frame, mode, cfg, None)?;
            per_view.push(start.elapsed().as_secs_f64() * 1e3);
            filter.push(out.stats.timings.filter_ms);
            project.push(out.stats.timings.project_ms);
            lod.push(out.stats.timings.lod_ms);
            blend.push(out.stats.timings.blend_ms);
        }
        let record = BenchRecord {
            mode: mode.to_string(),
            scale,
            gaussians: scene.total_gaussians(),
            per_view_ms: median(&mut per_view),
            filter_ms: median(&mut filter),
            project_ms: median(&mut project),
            lod_ms: median(&mut lod),
            blend_ms: median(&mut blend),
        };
        if best.as_ref().map_or(true, |b| record.per_view_ms < b.per_view_ms) {
            best = Some(record);
        }
    }
    let record = best.expect("at least one timed pass");
    if record.per_view_ms <= 0.0 {
        eprintln!(
            "warning: per-view time at scale {scale} ({}) is below clock resolution",
            record.mode
        );
    }
    Ok(record)
}

/// Runs the scaling benchmark. For each scale the streamlined pipeline is
/// warmed up with one full training sweep plus a visibility commit before
/// timing, and a sanity gate checks the two modes render matching images
/// (LOD off) at PSNR >= 45 dB.
pub fn run_scaling_benchmark(
    base_spec: &SceneSpec,
    scales: &[usize],
    modes: &[PipelineMode],
    cfg: &RenderConfig,
) -> Result<Vec<BenchRecord>> {
    if scales.is_empty() {
        return Err(SplatError::InvalidArgument("scales must be nonempty".into()));
    }
    let mut records = Vec::new();
    for &scale in scales {
        if scale == 0 {
            return Err(SplatError::InvalidArgument("scale 0 is not a scene".into()));
        }
        let spec = bench_spec(base_spec, scale);
        let (mut scene, _) = generate_scene(&spec)?;
        training_sweep(&mut scene, cfg)?;

        // Sanity gate with LOD off: both modes must agree per view.
        let gate_cfg = RenderConfig {
            lod: LodConfig { r: 0.0, ..cfg.lod.clone() },
            update_life: false,
            ..cfg.clone()
        };
        for frame in 0..scene.cameras.len() {
            let conv = render_view(&mut scene, frame, PipelineMode::Conventional, &gate_cfg, None)?;
            let stream = render_view(&mut scene, frame, PipelineMode::Streamlined, &gate_cfg, None)?;
            let p = psnr(&conv.image, &stream.image)?;
            if p < 45.0 {
                return Err(SplatError::InvalidArgument(format!(
                    "mode agreement gate failed at scale {scale} frame {frame}: PSNR {p:.2} dB"
                )));
            }
        }

        for &mode in modes {
            records.push(time_mode(&mut scene, mode, cfg, scale)?);
        }
    }
    Ok(records)
}

pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            r.mode, r.scale, r.gaussians, r.per_view_ms, r.filter_ms, r.project_ms, r.lod_ms, r.blend_ms
        ));
    }
    s
}

pub fn write_csv(records: &[BenchRecord], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(records_to_csv(records).as_bytes())?;
    Ok(())
}

/// Gnuplot-friendly whitespace table: scale then per-view ms per mode.
pub fn records_to_dat(records: &[BenchRecord]) -> String {
    let mut scales: Vec<usize> = records.iter().map(|r| r.scale).collect();
    scales.sort_unstable();
    scales.dedup();
    let mut modes: Vec<&str> = records.iter().map(|r| r.mode.as_str()).collect();
    modes.sort_unstable();
    modes.dedup();
    let mut s = String::from("# scale");
    for m in &modes {
        s.push_str(&format!(" {m}_ms"));
    }
    s.push('\n');
    for sc in scales {
        s.push_str(&format!("{sc}"));
        for m in &modes {
            let v = records
                .iter()
                .find(|r| r.scale == sc && r.mode == *m)
                .map_or(f64::NAN, |r| r.per_view_ms);
            s.push_str(&format!(" {v:.4}"));
        }
        s.push('\n');
    }
    s
}

/// The default single-segment base used by the CLI and the scalability tests.
pub fn default_bench_base() -> SceneSpec {
    SceneSpec {
        seed: 11,
        frame_count: 6,
        static_density: 240.0,
        street_length: SEGMENT_LENGTH,
        building_height: 4.5,
        objects: vec![ObjectSpec {
            class: "car".into(),
            spawn_frame: 0,
            despawn_frame: 6,
            trajectory: Trajectory::ConstantVelocity {
                start: [STREET_RADIUS, 0.0, 0.0],
                velocity: [0.0, 1.0, 0.0],
            },
            gaussian_count: 120,
        }],
        image_width: 96,
        image_height: 64,
        focal: 480.0,
    }
}
