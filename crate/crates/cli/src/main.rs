use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde::Serialize;
use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use splatstream_core::benchmark::{
    default_bench_base, bench_spec, run_scaling_benchmark, records_to_dat, write_csv,
};
use splatstream_core::init::{bev_augment, label_points, merge, voxel_downsample, UNKNOWN_LABEL};
use splatstream_core::io::pgm::read_pgm;
use splatstream_core::io::ply::{read_ply, write_ply, PlyFormat};
use splatstream_core::io::ppm::{read_image, write_depth_raw, write_png, write_ppm};
use splatstream_core::lod::LodConfig;
use splatstream_core::metrics::{psnr, ssim};
use splatstream_core::motion::{coarse_track, fit_ode_shared, track_to_json, ObjectTrack, OdeFitConfig};
use splatstream_core::raster::{
    render_view, reset_scene_visibility, training_sweep, PipelineMode, RenderConfig,
};
use splatstream_core::{generate_scene, load_scene, save_scene, Result, SplatError};

#[derive(Parser)]
#[command(name = "splatstream", version, about = "Dynamic street-scene Gaussian splatting")]
struct Cli {
    /// Worker threads (falls back to SPLATSTREAM_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Conventional,
    Streamlined,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<PipelineMode> {
        match self {
            ModeArg::Conventional => vec![PipelineMode::Conventional],
            ModeArg::Streamlined => vec![PipelineMode::Streamlined],
            ModeArg::Both => vec![PipelineMode::Conventional, PipelineMode::Streamlined],
        }
    }
}

#[derive(clap::Args, Clone)]
struct LodArgs {
    /// LOD 2D-scale threshold in pixels; 0 disables LOD.
    #[arg(long = "lod-r", default_value_t = 4.0)]
    lod_r: f64,
    /// Maximum drop probability for small distant splats.
    #[arg(long = "lod-pmax", default_value_t = 0.5)]
    lod_pmax: f64,
    /// Reference depth in meters.
    #[arg(long = "lod-depth", default_value_t = 50.0)]
    lod_depth: f64,
    /// Per-axis jitter scale in meters (applied to all three axes).
    #[arg(long = "lod-offset", default_value_t = 0.0)]
    lod_offset: f64,
}

impl LodArgs {
    fn to_config(&self, seed: u64) -> LodConfig {
        LodConfig {
            r: self.lod_r,
            p_max: self.lod_pmax,
            reference_depth: self.lod_depth,
            offset_scale: Vector3::repeat(self.lod_offset),
            rng_seed: seed,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic street scene and write it to disk.
    GenScene {
        #[arg(long, default_value_t = 11)]
        seed: u64,
        /// Scene scale in street segments.
        #[arg(long, default_value_t = 1)]
        scale: usize,
        /// Static Gaussians per meter of street.
        #[arg(long, default_value_t = 240.0)]
        density: f64,
        /// Moving objects per segment.
        #[arg(long, default_value_t = 1)]
        objects: usize,
        /// Also export positions as PLY.
        #[arg(long)]
        ply: bool,
        #[arg(long = "out-dir", default_value = ".")]
        out_dir: PathBuf,
    },
    /// Render frames from a scene file.
    Render {
        /// Scene base path (without .scene.json/.scene.bin).
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value = "streamlined")]
        mode: ModeArg,
        /// Frame range "a..b" (half-open); defaults to all frames.
        #[arg(long)]
        frames: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        lod: LodArgs,
        /// Also write PNG next to each PPM.
        #[arg(long)]
        png: bool,
        /// Also write raw depth maps.
        #[arg(long)]
        depth: bool,
        #[arg(long = "out-dir", default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run the scalability benchmark and write CSV + gnuplot data.
    Bench {
        /// Comma-separated scales in street segments.
        #[arg(long, default_value = "1,2,4,8")]
        scales: String,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        /// Static Gaussians per meter of street.
        #[arg(long, default_value_t = 240.0)]
        density: f64,
        #[command(flatten)]
        lod: LodArgs,
        #[arg(long = "out-dir", default_value = ".")]
        out_dir: PathBuf,
    },
    /// Fit object trajectories from lidar frames and per-object 2D masks.
    FitTrack {
        /// Scene base path providing the camera trajectory.
        #[arg(long)]
        scene: PathBuf,
        /// Directory of per-frame lidar point clouds: frame_<idx>.ply.
        #[arg(long = "lidar-dir")]
        lidar_dir: PathBuf,
        /// Directory of binary masks: obj<id>_frame<idx>.pgm.
        #[arg(long = "masks-dir")]
        masks_dir: PathBuf,
        #[arg(long, default_value_t = 400)]
        iterations: usize,
        #[arg(long, default_value_t = 0.01)]
        learning_rate: f64,
        #[arg(long, default_value_t = 3)]
        seed: u64,
        /// Output poses JSON.
        #[arg(long, default_value = "poses.json")]
        out: PathBuf,
    },
    /// BEV-semantic augmentation of a lidar point cloud.
    Augment {
        /// Input point cloud (PLY).
        #[arg(long)]
        cloud: PathBuf,
        /// Scene base path providing cameras.
        #[arg(long)]
        scene: PathBuf,
        /// Semantic image (16-bit PGM) taken from the first camera.
        #[arg(long)]
        semantic: PathBuf,
        /// Comma-separated target label ids to densify.
        #[arg(long, default_value = "1")]
        target_labels: String,
        /// BEV grid size in meters.
        #[arg(long, default_value_t = 0.5)]
        bev_grid: f64,
        /// Vertical spacing of generated column points, meters.
        #[arg(long, default_value_t = 0.5)]
        dz: f64,
        /// Column height in meters.
        #[arg(long, default_value_t = 4.0)]
        height: f64,
        /// Optional voxel-downsample grid applied to the input first.
        #[arg(long)]
        voxel: Option<f64>,
        /// Output PLY of the merged cloud.
        #[arg(long, default_value = "augmented.ply")]
        out: PathBuf,
    },
    /// PSNR/SSIM between two images (PPM or PNG).
    Metrics {
        a: PathBuf,
        b: PathBuf,
    },
}

#[derive(Serialize)]
struct FrameStats {
    frame: usize,
    mode: String,
    projected: usize,
    frustum_passed: usize,
    lod_culled: usize,
    blended: usize,
    filter_ms: f64,
    project_ms: f64,
    lod_ms: f64,
    blend_ms: f64,
}

fn parse_range(spec: &Option<String>, max: usize) -> Result<std::ops::Range<usize>> {
    match spec {
        None => Ok(0..max),
        Some(s) => {
            let (a, b) = s
                .split_once("..")
                .ok_or_else(|| SplatError::InvalidArgument(format!("bad frame range {s:?}")))?;
            let start: usize = a
                .parse()
                .map_err(|_| SplatError::InvalidArgument(format!("bad frame range {s:?}")))?;
            let end: usize = b
                .parse()
                .map_err(|_| SplatError::InvalidArgument(format!("bad frame range {s:?}")))?;
            if start >= end || end > max {
                return Err(SplatError::InvalidArgument(format!(
                    "frame range {s} outside 0..{max}"
                )));
            }
            Ok(start..end)
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| SplatError::InvalidArgument(format!("bad {what} entry {tok:?}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let workers = cli
        .workers
        .or_else(|| {
            std::env::var("SPLATSTREAM_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    if workers > 0 {
        // Ignore failure: the global pool can only be installed once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }

    match cli.cmd {
        Cmd::GenScene {
            seed,
            scale,
            density,
            objects,
            ply,
            out_dir,
        } => {
            let mut base = default_bench_base();
            base.seed = seed;
            base.static_density = density;
            base.objects.truncate(objects.min(base.objects.len()));
            while base.objects.len() < objects {
                let mut o = base.objects[0].clone();
                o.gaussian_count += 10 * base.objects.len();
                base.objects.push(o);
            }
            let spec = bench_spec(&base, scale);
            let (scene, _) = generate_scene(&spec)?;
            std::fs::create_dir_all(&out_dir)?;
            let base_path = out_dir.join("scene");
            save_scene(&scene, Some(&spec), &base_path)?;
            if ply {
                splatstream_core::scenegen::export_positions_ply(
                    &scene,
                    &out_dir.join("scene.ply"),
                    PlyFormat::BinaryLittleEndian,
                )?;
            }
            println!(
                "wrote {} ({} static + {} dynamic Gaussians, {} frames)",
                base_path.display(),
                scene.static_gaussians.len(),
                scene.total_gaussians() - scene.static_gaussians.len(),
                scene.frame_count
            );
        }
        Cmd::Render {
            scene,
            mode,
            frames,
            seed,
            lod,
            png,
            depth,
            out_dir,
        } => {
            let (mut model, _) = load_scene(&scene)?;
            let cfg = RenderConfig {
                lod: lod.to_config(seed),
                emit_depth: depth,
                ..RenderConfig::default()
            };
            let range = parse_range(&frames, model.cameras.len())?;
            std::fs::create_dir_all(&out_dir)?;
            let modes = mode.modes();
            if modes.contains(&PipelineMode::Streamlined) {
                reset_scene_visibility(&mut model);
                training_sweep(&mut model, &cfg)?;
            }
            let mut stats = Vec::new();
            let mut max_diff = 0.0f64;
            for frame in range.clone() {
                let mut images = Vec::new();
                for &m in &modes {
                    let out = render_view(&mut model, frame, m, &cfg, None)?;
                    let name = format!("{m}_frame{frame:04}");
                    write_ppm(&out.image, &out_dir.join(format!("{name}.ppm")))?;
                    if png {
                        write_png(&out.image, &out_dir.join(format!("{name}.png")))?;
                    }
                    if let Some(d) = &out.depth_map {
                        write_depth_raw(
                            d,
                            out.image.width,
                            out.image.height,
                            &out_dir.join(format!("{name}.depth")),
                        )?;
                    }
                    stats.push(FrameStats {
                        frame,
                        mode: m.to_string(),
                        projected: out.stats.projected,
                        frustum_passed: out.stats.frustum_passed,
                        lod_culled: out.stats.lod_culled,
                        blended: out.stats.blended,
                        filter_ms: out.stats.timings.filter_ms,
                        project_ms: out.stats.timings.project_ms,
                        lod_ms: out.stats.timings.lod_ms,
                        blend_ms: out.stats.timings.blend_ms,
                    });
                    images.push(out.image);
                }
                if images.len() == 2 {
                    max_diff = max_diff.max(images[0].max_abs_diff(&images[1])?);
                }
            }
            let f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("stats.json"))?);
            serde_json::to_writer_pretty(f, &stats)?;
            println!("rendered frames {}..{} to {}", range.start, range.end, out_dir.display());
            if modes.len() == 2 {
                println!("max per-pixel diff between modes: {max_diff:.3e}");
            }
        }
        Cmd::Bench {
            scales,
            seed,
            density,
            lod,
            out_dir,
        } => {
            let scales: Vec<usize> = parse_list(&scales, "scale")?;
            let mut base = default_bench_base();
            base.seed = seed;
            base.static_density = density;
            let cfg = RenderConfig {
                lod: lod.to_config(seed),
                ..RenderConfig::default()
            };
            let records = run_scaling_benchmark(
                &base,
                &scales,
                &[PipelineMode::Conventional, PipelineMode::Streamlined],
                &cfg,
            )?;
            std::fs::create_dir_all(&out_dir)?;
            write_csv(&records, &out_dir.join("bench.csv"))?;
            std::fs::write(out_dir.join("bench.dat"), records_to_dat(&records))?;
            for r in &records {
                println!(
                    "{:>12} scale {:>2}: {:>8} Gaussians, {:.3} ms/view",
                    r.mode, r.scale, r.gaussians, r.per_view_ms
                );
            }
        }
        Cmd::FitTrack {
            scene,
            lidar_dir,
            masks_dir,
            iterations,
            learning_rate,
            seed,
            out,
        } => {
            let (model, _) = load_scene(&scene)?;
            let cameras = model.cameras.clone();
            let mut lidar_frames = Vec::with_capacity(cameras.len());
            for i in 0..cameras.len() {
                let path = lidar_dir.join(format!("frame_{i:04}.ply"));
                let (points, _) = read_ply(&path)?;
                lidar_frames.push(points);
            }
            let masks = read_mask_dir(&masks_dir, cameras.len())?;
            let coarse = coarse_track(&lidar_frames, &masks, &cameras)?;
            let mut tracks: Vec<ObjectTrack> = coarse
                .into_iter()
                .map(|(id, positions)| {
                    let mut t = ObjectTrack::new(id, "object", 0);
                    t.coarse_positions = positions;
                    t
                })
                .collect();
            let fit_cfg = OdeFitConfig {
                learning_rate,
                iterations,
                seed,
            };
            let losses = fit_ode_shared(&mut tracks, &fit_cfg)?;
            if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
                println!("fit {} tracks: loss {first:.4} -> {last:.4}", tracks.len());
            }
            let times: Vec<f64> = cameras.iter().map(|c| c.time).collect();
            let json: Vec<_> = tracks.iter().map(|t| track_to_json(t, &times)).collect();
            let f = std::io::BufWriter::new(std::fs::File::create(&out)?);
            serde_json::to_writer_pretty(f, &json)?;
            println!("wrote {}", out.display());
        }
        Cmd::Augment {
            cloud,
            scene,
            semantic,
            target_labels,
            bev_grid,
            dz,
            height,
            voxel,
            out,
        } => {
            let (model, _) = load_scene(&scene)?;
            let (mut points, _) = read_ply(&cloud)?;
            if let Some(grid) = voxel {
                points = voxel_downsample(&points, grid)?;
            }
            let sem = read_pgm(&semantic)?;
            let labeled = label_points(&points, &sem, &model.cameras[0])?;
            let targets: HashSet<u16> = parse_list::<u16>(&target_labels, "label")?
                .into_iter()
                .collect();
            let augmented = bev_augment(&labeled, &targets, bev_grid, dz, height, &model.cameras)?;
            let merged = merge(&points, &augmented);
            let unknown = labeled.labels.iter().filter(|&&l| l == UNKNOWN_LABEL).count();
            write_ply(&merged, None, &out, PlyFormat::BinaryLittleEndian)?;
            println!(
                "{} input points ({unknown} unlabeled), {} augmented, {} total -> {}",
                points.len(),
                augmented.len(),
                merged.len(),
                out.display()
            );
        }
        Cmd::Metrics { a, b } => {
            let ia = read_image(&a)?;
            let ib = read_image(&b)?;
            let p = psnr(&ia, &ib)?;
            let s = ssim(&ia, &ib)?;
            if p.is_infinite() {
                println!("PSNR: inf");
            } else {
                println!("PSNR: {p:.4} dB");
            }
            println!("SSIM: {s:.6}");
        }
    }
    Ok(())
}

/// Collects masks named `obj<id>_frame<idx>.pgm` into per-object frame lists.
fn read_mask_dir(
    dir: &Path,
    frame_count: usize,
) -> Result<BTreeMap<u32, Vec<Option<splatstream_core::io::pgm::GrayImage>>>> {
    let mut masks: BTreeMap<u32, Vec<Option<_>>> = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(rest) = name.strip_prefix("obj").and_then(|r| r.strip_suffix(".pgm")) else {
            continue;
        };
        let Some((id_str, idx_str)) = rest.split_once("_frame") else { continue };
        let (Ok(id), Ok(idx)) = (id_str.parse::<u32>(), idx_str.parse::<usize>()) else {
            continue;
        };
        if idx >= frame_count {
            return Err(SplatError::IndexOutOfRange {
                index: idx,
                len: frame_count,
            });
        }
        let img = read_pgm(&path)?;
        masks
            .entry(id)
            .or_insert_with(|| vec![None; frame_count])[idx] = Some(img);
    }
    if masks.is_empty() {
        return Err(SplatError::InvalidArgument(format!(
            "no obj<id>_frame<idx>.pgm masks found in {}",
            dir.display()
        )));
    }
    Ok(masks)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
