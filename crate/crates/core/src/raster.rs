//! Tile-based front-to-back alpha blending and the `render_view`
//! orchestrator running either the conventional or the streamlined pipeline.

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::time::Instant;

use crate::error::{Result, SplatError};
use crate::field::{field_forward, FieldInput, FieldParams};
use crate::geometry::Pose;
use crate::image::Image;
use crate::lod::{apply_lod, render_rng, LodConfig};
use crate::projection::{
    build_instance_cameras, frustum_cull, in_image_margin, project_gaussian, project_mean,
    ProjectedGaussian, ProjectionConfig,
};
use crate::scene::{Camera, GaussianColor, SceneModel};
use crate::visibility;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    /// Transform dynamic Gaussians to world, project everything, cull, blend.
    Conventional,
    /// Temporal filter, instance-specific projection, cull, adaptive LOD,
    /// blend, point-life update.
    Streamlined,
}

impl std::fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipelineMode::Conventional => write!(f, "conventional"),
            PipelineMode::Streamlined => write!(f, "streamlined"),
        }
    }
}

/// Optional neural color fields consulted for `GaussianColor::FieldQuery`.
#[derive(Debug, Clone)]
pub struct FieldSet {
    pub static_field: FieldParams,
    pub dynamic_field: FieldParams,
}

#[derive(Debug, Clone)]
pub struct RenderConfig {
    pub tile_size: usize,
    pub background: [f64; 3],
    pub projection: ProjectionConfig,
    /// Frustum-cull margin in pixels. `None` keeps means within 1.3x the
    /// image half-extent, as in reference splatting rasterizers.
    pub cull_margin: Option<f64>,
    pub lod: LodConfig,
    pub alpha_clamp: f64,
    /// Blending stops once per-pixel transmittance drops below this.
    pub termination: f64,
    /// Transmittance-weighted alpha above this marks a Gaussian as having
    /// contributed to the image.
    pub contrib_threshold: f64,
    /// Streamlined mode updates point life from the frustum mask.
    pub update_life: bool,
    pub emit_depth: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            tile_size: 16,
            background: [0.0; 3],
            projection: ProjectionConfig::default(),
            cull_margin: None,
            lod: LodConfig::default(),
            alpha_clamp: 0.99,
            termination: 1e-4,
            contrib_threshold: 1e-4,
            update_life: true,
            emit_depth: false,
        }
    }
}

impl RenderConfig {
    /// Effective cull margin in pixels for an image of the given size.
    pub fn margin_for(&self, width: u32, height: u32) -> f64 {
        self.cull_margin.unwrap_or(0.15 * f64::from(width.max(height)))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub filter_ms: f64,
    pub project_ms: f64,
    pub lod_ms: f64,
    pub blend_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RenderStats {
    pub projected: usize,
    pub frustum_passed: usize,
    pub lod_culled: usize,
    pub blended: usize,
    pub skipped_singular: usize,
    pub timings: StageTimings,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: Image,
    pub depth_map: Option<Vec<f64>>,
    /// Per flat-index: passed the frustum cull this view.
    pub frustum_mask: Vec<bool>,
    /// Per flat-index: transmittance-weighted contribution exceeded the
    /// threshold at some pixel.
    pub contributed_mask: Vec<bool>,
    /// Flat indices presented to projection this view.
    pub presented: Vec<usize>,
    pub stats: RenderStats,
}

struct BlendEntry {
    mean2d: Vector2<f64>,
    cov2d: Matrix2<f64>,
    depth: f64,
    opacity: f64,
    color: [f64; 3],
    flat_source: usize,
}

struct BlendResult {
    image: Image,
    depth: Option<Vec<f64>>,
    contributed: Vec<usize>,
    blended: usize,
    skipped_singular: usize,
}

/// Sorts entries front-to-back (ties by source index), bins them into tiles
/// by conservative 3-sigma bounds and composites per pixel. Tiles render
/// independently; output is deterministic regardless of worker count.
fn blend(entries: &[BlendEntry], width: usize, height: usize, cfg: &RenderConfig) -> BlendResult {
    // Depths are positive after near-plane culling, so their bit patterns
    // sort in the same order as the values; pack (depth, flat_source, index)
    // into one integer key for a cheap, fully deterministic sort.
    let mut order: Vec<u128> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            ((e.depth.to_bits() as u128) << 64) | ((e.flat_source as u128) << 32) | i as u128
        })
        .collect();
    order.sort_unstable();
    let order: Vec<u32> = order.into_iter().map(|k| k as u32).collect();

    struct Prepared {
        inv: Matrix2<f64>,
        radius: f64,
    }
    let mut skipped_singular = 0usize;
    let prepared: Vec<Option<Prepared>> = entries
        .iter()
        .map(|e| {
            let det = e.cov2d[(0, 0)] * e.cov2d[(1, 1)] - e.cov2d[(0, 1)] * e.cov2d[(1, 0)];
            if det < 1e-12 {
                return None;
            }
            let inv = Matrix2::new(
                e.cov2d[(1, 1)] / det,
                -e.cov2d[(0, 1)] / det,
                -e.cov2d[(1, 0)] / det,
                e.cov2d[(0, 0)] / det,
            );
            let mean = 0.5 * (e.cov2d[(0, 0)] + e.cov2d[(1, 1)]);
            let disc = (mean * mean - det).max(0.0).sqrt();
            Some(Prepared {
                inv,
                radius: 3.0 * (mean + disc).sqrt(),
            })
        })
        .collect();
    skipped_singular += prepared.iter().filter(|p| p.is_none()).count();

    let tile = cfg.tile_size.max(1);
    let tiles_x = width.div_ceil(tile);
    let tiles_y = height.div_ceil(tile);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for &idx in &order {
        let e = &entries[idx as usize];
        let Some(p) = &prepared[idx as usize] else { continue };
        let x0 = ((e.mean2d.x - p.radius) / tile as f64).floor().max(0.0) as usize;
        let y0 = ((e.mean2d.y - p.radius) / tile as f64).floor().max(0.0) as usize;
        let x1 = (((e.mean2d.x + p.radius) / tile as f64).floor() as isize)
            .min(tiles_x as isize - 1);
        let y1 = (((e.mean2d.y + p.radius) / tile as f64).floor() as isize)
            .min(tiles_y as isize - 1);
        if x1 < 0 || y1 < 0 || x0 >= tiles_x || y0 >= tiles_y {
            continue;
        }
        for ty in y0..=y1 as usize {
            for tx in x0..=x1 as usize {
                bins[ty * tiles_x + tx].push(idx);
            }
        }
    }

    struct TileOut {
        tx: usize,
        ty: usize,
        pixels: Vec<[f64; 3]>,
        depth: Vec<f64>,
        contributed: Vec<u32>,
        blended: Vec<u32>,
    }

    let tile_outputs: Vec<TileOut> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|ti| {
            let (tx, ty) = (ti % tiles_x, ti / tiles_x);
            let w = tile.min(width - tx * tile);
            let h = tile.min(height - ty * tile);
            // Entries are visited in depth order and only over the pixels in
            // their 3-sigma box, with per-pixel transmittance carried in
            // `trans`; this is pixel-for-pixel identical to a front-to-back
            // loop per pixel but skips the (pixel, entry) pairs that can
            // never interact.
            let mut acc = vec![[0.0f64; 3]; w * h];
            let mut trans = vec![1.0f64; w * h];
            let mut dacc = vec![0.0f64; if cfg.emit_depth { w * h } else { 0 }];
            let mut contributed: Vec<u32> = Vec::new();
            let mut blended: Vec<u32> = Vec::new();
            let (gx0, gy0) = (tx * tile, ty * tile);
            for &idx in &bins[ti] {
                let e = &entries[idx as usize];
                let p = prepared[idx as usize].as_ref().unwrap();
                // Pixel-center range with |center - mean| <= radius, clipped
                // to this tile. The clip keeps a splat's reach independent of
                // which tile a pixel happens to be in.
                let px0 = ((e.mean2d.x - p.radius - 0.5).ceil().max(gx0 as f64)) as usize;
                let py0 = ((e.mean2d.y - p.radius - 0.5).ceil().max(gy0 as f64)) as usize;
                let px1 = (e.mean2d.x + p.radius - 0.5).floor().min((gx0 + w - 1) as f64);
                let py1 = (e.mean2d.y + p.radius - 0.5).floor().min((gy0 + h - 1) as f64);
                if px1 < px0 as f64 || py1 < py0 as f64 {
                    continue;
                }
                let (px1, py1) = (px1 as usize, py1 as usize);
                let mut touched = false;
                let mut did_contribute = false;
                for gy in py0..=py1 {
                    for gx in px0..=px1 {
                        let o = (gy - gy0) * w + (gx - gx0);
                        let transmittance = trans[o];
                        if transmittance < cfg.termination {
                            continue;
                        }
                        let dx = gx as f64 + 0.5 - e.mean2d.x;
                        let dy = gy as f64 + 0.5 - e.mean2d.y;
                        let power = -0.5
                            * (p.inv[(0, 0)] * dx * dx
                                + (p.inv[(0, 1)] + p.inv[(1, 0)]) * dx * dy
                                + p.inv[(1, 1)] * dy * dy);
                        if power < -12.0 {
                            continue;
                        }
                        let alpha = (e.opacity * power.exp()).min(cfg.alpha_clamp);
                        if alpha < 1.0 / 255.0 {
                            continue;
                        }
                        let weight = alpha * transmittance;
                        acc[o][0] += e.color[0] * weight;
                        acc[o][1] += e.color[1] * weight;
                        acc[o][2] += e.color[2] * weight;
                        if cfg.emit_depth {
                            dacc[o] += e.depth * weight;
                        }
                        touched = true;
                        if weight > cfg.contrib_threshold {
                            did_contribute = true;
                        }
                        trans[o] = transmittance * (1.0 - alpha);
                    }
                }
                if touched {
                    blended.push(idx);
                }
                if did_contribute {
                    contributed.push(idx);
                }
            }
            let mut pixels = vec![[0.0f64; 3]; w * h];
            for o in 0..w * h {
                pixels[o] = [
                    acc[o][0] + cfg.background[0] * trans[o],
                    acc[o][1] + cfg.background[1] * trans[o],
                    acc[o][2] + cfg.background[2] * trans[o],
                ];
            }
            let depth = dacc;
            TileOut {
                tx,
                ty,
                pixels,
                depth,
                contributed,
                blended,
            }
        })
        .collect();

    let mut image = Image::new(width, height);
    let mut depth_map = if cfg.emit_depth { Some(vec![0.0; width * height]) } else { None };
    let mut contributed: Vec<usize> = Vec::new();
    let mut blended_flags = vec![false; entries.len()];
    for t in &tile_outputs {
        let w = tile.min(width - t.tx * tile);
        let h = tile.min(height - t.ty * tile);
        for py in 0..h {
            for px in 0..w {
                let src = py * w + px;
                let x = t.tx * tile + px;
                let y = t.ty * tile + py;
                image.pixel_mut(x, y).copy_from_slice(&t.pixels[src]);
                if let Some(d) = &mut depth_map {
                    d[y * width + x] = t.depth[src];
                }
            }
        }
        contributed.extend(t.contributed.iter().map(|&i| entries[i as usize].flat_source));
        for &i in &t.blended {
            blended_flags[i as usize] = true;
        }
    }
    contributed.sort_unstable();
    contributed.dedup();
    BlendResult {
        image,
        depth: depth_map,
        contributed,
        blended: blended_flags.iter().filter(|&&b| b).count(),
        skipped_singular,
    }
}

/// An item queued for projection: the position/covariance to project, the
/// camera to use, and where the Gaussian lives in the flat ordering.
struct WorkItem {
    position: Vector3<f64>,
    instance: Option<u32>,
    flat: usize,
}

fn object_poses_at(scene: &SceneModel, t: f64) -> BTreeMap<u32, Pose> {
    scene
        .tracks
        .iter()
        .filter_map(|(id, track)| track.pose_at(t).map(|p| (*id, p)))
        .collect()
}

fn resolve_color(
    scene: &SceneModel,
    fields: Option<&FieldSet>,
    camera: &Camera,
    frame: usize,
    flat: usize,
    position: &Vector3<f64>,
    depth: f64,
) -> Result<[f64; 3]> {
    let g = scene.gaussian_at(flat);
    match g.color {
        GaussianColor::Rgb(c) => Ok(c),
        GaussianColor::FieldQuery => {
            let fields = fields.ok_or_else(|| {
                SplatError::InvalidArgument(
                    "scene contains field-colored Gaussians but no fields were supplied".into(),
                )
            })?;
            let dir_raw = position - camera.center();
            let norm = dir_raw.norm();
            let direction = if norm > 1e-12 { dir_raw / norm } else { Vector3::z() };
            let input = FieldInput {
                position: *position,
                depth,
                direction,
                time_index: frame.min(fields.static_field.time_table.nrows() - 1),
                class_index: g
                    .instance_id
                    .and_then(|id| scene.tracks.get(&id))
                    .map(|t| t.class_index),
            };
            if g.instance_id.is_some() {
                field_forward(&fields.dynamic_field, &input)
            } else {
                field_forward(&fields.static_field, &input)
            }
        }
    }
}

/// Renders the camera at `frame` in the requested pipeline mode.
pub fn render_view(
    scene: &mut SceneModel,
    frame: usize,
    mode: PipelineMode,
    cfg: &RenderConfig,
    fields: Option<&FieldSet>,
) -> Result<RenderOutput> {
    scene.validate()?;
    if frame >= scene.cameras.len() {
        return Err(SplatError::IndexOutOfRange {
            index: frame,
            len: scene.cameras.len(),
        });
    }
    let camera = scene.cameras[frame].clone();
    let t = camera.time;
    let total = scene.total_gaussians();
    let (static_count, dyn_ranges) = scene.flat_index_ranges();
    let mut stats = RenderStats::default();

    // ---- filter and projection stages -------------------------------------
    // Conventional runs them as two passes over every Gaussian. Streamlined
    // fuses them: one pass over the packed visibility cache that presents,
    // mean-projects, and culls in place, computing the full EWA covariance
    // only for frustum survivors. The cull decision depends only on the
    // projected mean, so the surviving set is identical in both modes.
    //
    // After this block `items` holds the presented set for conventional and
    // only the frustum survivors for streamlined; `candidates[i].source_index`
    // points into `items` either way.
    let filter_start = Instant::now();
    let poses = object_poses_at(scene, t);
    let instance_cams = match mode {
        PipelineMode::Streamlined => build_instance_cameras(&camera, &poses),
        PipelineMode::Conventional => BTreeMap::new(),
    };
    let margin = cfg.margin_for(camera.width, camera.height);
    let mut items: Vec<WorkItem> = Vec::new();
    let mut presented: Vec<usize> = Vec::new();
    let mut candidates: Vec<ProjectedGaussian> = Vec::new();
    match mode {
        PipelineMode::Conventional => {
            // Baseline presents everything (dynamics via world transforms).
            for (flat, g) in scene.static_gaussians.iter().enumerate() {
                items.push(WorkItem {
                    position: g.position,
                    instance: None,
                    flat,
                });
            }
            for (id, list) in &scene.dynamic_gaussians {
                let Some(pose) = poses.get(id) else { continue };
                let se3 = pose.to_se3();
                let range = dyn_ranges[id].clone();
                for (k, g) in list.iter().enumerate() {
                    items.push(WorkItem {
                        position: se3.apply(&g.position),
                        instance: Some(*id),
                        flat: range.start + k,
                    });
                }
            }
            presented = items.iter().map(|it| it.flat).collect();
            stats.timings.filter_ms = filter_start.elapsed().as_secs_f64() * 1e3;

            // Full EWA projection of everything, then cull.
            let project_start = Instant::now();
            let mut projected: Vec<ProjectedGaussian> = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let g = scene.gaussian_at(item.flat);
                let mut cov3d = g.covariance()?;
                if let Some(id) = item.instance {
                    let r = poses[&id].to_se3().rotation;
                    cov3d = r * cov3d * r.transpose();
                }
                projected.push(project_gaussian(&item.position, &cov3d, &camera, &cfg.projection, i));
            }
            stats.projected = projected.len();
            let cull = frustum_cull(&projected, camera.width, camera.height, margin);
            candidates = projected
                .into_iter()
                .zip(cull)
                .filter_map(|(p, c)| c.then_some(p))
                .collect();
            stats.timings.project_ms = project_start.elapsed().as_secs_f64() * 1e3;
        }
        PipelineMode::Streamlined => {
            scene.ensure_visibility_cache();
            stats.timings.filter_ms = filter_start.elapsed().as_secs_f64() * 1e3;

            // The fused pass is reported under project_ms.
            let project_start = Instant::now();
            let intervals = scene
                .visibility_cache
                .as_deref()
                .expect("visibility cache was just built");
            let admit = |position: nalgebra::Vector3<f64>,
                             instance: Option<u32>,
                             flat: usize,
                             cam: &Camera,
                             items: &mut Vec<WorkItem>,
                             candidates: &mut Vec<ProjectedGaussian>|
             -> Result<()> {
                let (mean2d, _, in_frustum) = project_mean(&position, cam, &cfg.projection);
                if in_frustum && in_image_margin(&mean2d, camera.width, camera.height, margin) {
                    let cov3d = scene.gaussian_at(flat).covariance()?;
                    candidates.push(project_gaussian(&position, &cov3d, cam, &cfg.projection, items.len()));
                    items.push(WorkItem {
                        position,
                        instance,
                        flat,
                    });
                }
                Ok(())
            };
            for (flat, iv) in intervals[..static_count].iter().enumerate() {
                if iv.0 <= t && t <= iv.1 {
                    presented.push(flat);
                    admit(
                        scene.static_gaussians[flat].position,
                        None,
                        flat,
                        &camera,
                        &mut items,
                        &mut candidates,
                    )?;
                }
            }
            for (id, list) in &scene.dynamic_gaussians {
                let Some(cam) = instance_cams.get(id) else { continue };
                let range = dyn_ranges[id].clone();
                for (k, iv) in intervals[range.clone()].iter().enumerate() {
                    if iv.0 <= t && t <= iv.1 {
                        presented.push(range.start + k);
                        admit(
                            list[k].position,
                            Some(*id),
                            range.start + k,
                            cam,
                            &mut items,
                            &mut candidates,
                        )?;
                    }
                }
            }
            stats.projected = presented.len();
            stats.timings.project_ms = project_start.elapsed().as_secs_f64() * 1e3;
        }
    }
    stats.frustum_passed = candidates.len();

    let mut frustum_mask = vec![false; total];
    for p in &candidates {
        frustum_mask[items[p.source_index].flat] = true;
    }

    // ---- adaptive LOD stage (streamlined only) ----------------------------
    let lod_start = Instant::now();
    let mut keep = vec![true; candidates.len()];
    let mut lod_offsets: Vec<Option<Vector3<f64>>> = vec![None; candidates.len()];
    if mode == PipelineMode::Streamlined && cfg.lod.r > 0.0 {
        let mut rng = render_rng(cfg.lod.rng_seed, frame as u64);
        let lod = apply_lod(&candidates, &cfg.lod, &mut rng)?;
        stats.lod_culled = lod.culled_count;
        keep = lod.keep;
        for (k, off) in lod.offsets.iter().enumerate() {
            if keep[k] && off.norm_squared() > 0.0 {
                lod_offsets[k] = Some(*off);
            }
        }
    }
    stats.timings.lod_ms = lod_start.elapsed().as_secs_f64() * 1e3;

    // ---- color query + blend stage ----------------------------------------
    let blend_start = Instant::now();
    let mut entries: Vec<BlendEntry> = Vec::with_capacity(candidates.len());
    for (k, cand) in candidates.iter().enumerate() {
        if !keep[k] {
            continue;
        }
        let i = cand.source_index;
        let item = &items[i];
        let g = scene.gaussian_at(item.flat);
        let mut proj = *cand;
        let mut position = item.position;
        if let Some(off) = lod_offsets[k] {
            // Jitter in 3D and re-project so depth and color stay consistent.
            position += off;
            let cam = match (mode, item.instance) {
                (PipelineMode::Streamlined, Some(id)) => &instance_cams[&id],
                _ => &camera,
            };
            let cov3d = g.covariance()?;
            proj = project_gaussian(&position, &cov3d, cam, &cfg.projection, i);
            if !proj.in_frustum {
                continue;
            }
        }
        let cam_for_color = match (mode, item.instance) {
            (PipelineMode::Streamlined, Some(id)) => &instance_cams[&id],
            _ => &camera,
        };
        let color = resolve_color(scene, fields, cam_for_color, frame, item.flat, &position, proj.depth)?;
        entries.push(BlendEntry {
            mean2d: proj.mean2d,
            cov2d: proj.cov2d,
            depth: proj.depth,
            opacity: g.opacity,
            color,
            flat_source: item.flat,
        });
    }
    let blended = blend(&entries, camera.width as usize, camera.height as usize, cfg);
    stats.blended = blended.blended;
    stats.skipped_singular = blended.skipped_singular;
    stats.timings.blend_ms = blend_start.elapsed().as_secs_f64() * 1e3;

    let mut contributed_mask = vec![false; total];
    for &flat in &blended.contributed {
        contributed_mask[flat] = true;
    }

    if mode == PipelineMode::Streamlined && cfg.update_life {
        // Masked-out entries are life no-ops, so only survivors are routed.
        let passed: Vec<usize> = items.iter().map(|it| it.flat).collect();
        let mask = vec![true; passed.len()];
        update_scene_life(scene, &passed, &mask, t, static_count, &dyn_ranges)?;
    }

    Ok(RenderOutput {
        image: blended.image,
        depth_map: blended.depth,
        frustum_mask,
        contributed_mask,
        presented,
        stats,
    })
}

/// Routes flat-index life updates to the owning Gaussian groups.
fn update_scene_life(
    scene: &mut SceneModel,
    presented: &[usize],
    mask: &[bool],
    t: f64,
    static_count: usize,
    dyn_ranges: &BTreeMap<u32, std::ops::Range<usize>>,
) -> Result<()> {
    let mut static_idx = Vec::new();
    let mut static_mask = Vec::new();
    let mut per_object: BTreeMap<u32, (Vec<usize>, Vec<bool>)> = BTreeMap::new();
    for (&flat, &m) in presented.iter().zip(mask) {
        if flat < static_count {
            static_idx.push(flat);
            static_mask.push(m);
        } else {
            for (id, range) in dyn_ranges {
                if range.contains(&flat) {
                    let e = per_object.entry(*id).or_default();
                    e.0.push(flat - range.start);
                    e.1.push(m);
                    break;
                }
            }
        }
    }
    visibility::update_point_life(&mut scene.static_gaussians, &static_idx, &static_mask, t)?;
    for (id, (idx, m)) in per_object {
        let list = scene.dynamic_gaussians.get_mut(&id).unwrap();
        visibility::update_point_life(list, &idx, &m, t)?;
    }
    Ok(())
}

/// Commits point life to temporal visibility across the whole scene.
pub fn commit_scene_visibility(scene: &mut SceneModel) {
    visibility::commit_visibility(&mut scene.static_gaussians);
    for list in scene.dynamic_gaussians.values_mut() {
        visibility::commit_visibility(list);
    }
    scene.clear_visibility_cache();
}

/// Resets temporal visibility across the whole scene.
pub fn reset_scene_visibility(scene: &mut SceneModel) {
    visibility::reset_visibility(&mut scene.static_gaussians);
    for list in scene.dynamic_gaussians.values_mut() {
        visibility::reset_visibility(list);
    }
    scene.clear_visibility_cache();
}

/// One full pass over all training timesteps updating point life from the
/// frustum mask (no blending), followed by a visibility commit. This is the
/// warm-up that gives the streamlined pipeline its temporal intervals.
pub fn training_sweep(scene: &mut SceneModel, cfg: &RenderConfig) -> Result<()> {
    let (static_count, dyn_ranges) = scene.flat_index_ranges();
    for frame in 0..scene.cameras.len() {
        let camera = scene.cameras[frame].clone();
        let t = camera.time;
        let poses = object_poses_at(scene, t);
        let instance_cams = build_instance_cameras(&camera, &poses);
        // Life updates only need the projected mean, so skip the covariance.
        let margin = cfg.margin_for(camera.width, camera.height);
        let mut presented = Vec::new();
        let mut mask = Vec::new();
        for (flat, g) in scene.static_gaussians.iter().enumerate() {
            if g.visibility.0 <= t && t <= g.visibility.1 {
                let (mean2d, _, in_frustum) = project_mean(&g.position, &camera, &cfg.projection);
                mask.push(
                    in_frustum && in_image_margin(&mean2d, camera.width, camera.height, margin),
                );
                presented.push(flat);
            }
        }
        for (id, list) in &scene.dynamic_gaussians {
            let Some(cam) = instance_cams.get(id) else { continue };
            let range = dyn_ranges[id].clone();
            for (k, g) in list.iter().enumerate() {
                if g.visibility.0 <= t && t <= g.visibility.1 {
                    let (mean2d, _, in_frustum) = project_mean(&g.position, cam, &cfg.projection);
                    mask.push(
                        in_frustum
                            && in_image_margin(&mean2d, camera.width, camera.height, margin),
                    );
                    presented.push(range.start + k);
                }
            }
        }
        update_scene_life(scene, &presented, &mask, t, static_count, &dyn_ranges)?;
    }
    commit_scene_visibility(scene);
    Ok(())
}
