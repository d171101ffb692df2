//! 2D-box scene decomposition: coarse object tracks from masked LiDAR
//! projection, and a NeuralODE that refines them into continuous poses.
//!
//! The ODE state is the 6-vector [position, Euler rotation] offset from the
//! initial state; gradients flow through the unrolled RK4 integrator
//! (discretize-then-optimize).

use nalgebra::{DVector, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Result, SplatError};
use crate::geometry::Pose;
use crate::io::pgm::GrayImage;
use crate::mlp::{Mlp, MlpCache, MlpGrads, OutputActivation};
use crate::scene::Camera;

pub const ODE_EMBED_DIM: usize = 16;
pub const ODE_STATE_DIM: usize = 6;
const ODE_HIDDEN: usize = 64;
/// RK4 steps per unit of normalized time.
const STEPS_PER_UNIT: f64 = 4.0;

/// Dynamics network f(z, t, c) -> dz/dt. Inputs are scaled before the MLP
/// and outputs scaled after it so the weights stay O(1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdeRhs {
    pub net: Mlp,
    pub input_scale: f64,
    pub output_scale: f64,
}

impl OdeRhs {
    pub fn new(embed_dim: usize, rng: &mut impl Rng) -> Self {
        let mut net = Mlp::new(
            &[ODE_STATE_DIM + 1 + embed_dim, ODE_HIDDEN, ODE_HIDDEN, ODE_STATE_DIM],
            OutputActivation::Linear,
            rng,
        );
        // Zero the output layer: dynamics start at exactly zero, so an
        // untrained model reproduces the initial state.
        if let Some(last) = net.layers.last_mut() {
            last.weight.fill(0.0);
            last.bias.fill(0.0);
        }
        OdeRhs {
            net,
            input_scale: 0.1,
            output_scale: 10.0,
        }
    }

    fn assemble(&self, z: &Vector6<f64>, t: f64, c: &DVector<f64>) -> DVector<f64> {
        let mut x = Vec::with_capacity(self.net.input_dim());
        for i in 0..ODE_STATE_DIM {
            x.push(z[i] * self.input_scale);
        }
        x.push(t);
        x.extend(c.iter());
        DVector::from_vec(x)
    }

    pub fn eval(&self, z: &Vector6<f64>, t: f64, c: &DVector<f64>) -> Vector6<f64> {
        let y = self.net.forward(&self.assemble(z, t, c));
        Vector6::from_fn(|i, _| y[i] * self.output_scale)
    }

    fn eval_cached(&self, z: &Vector6<f64>, t: f64, c: &DVector<f64>) -> (Vector6<f64>, MlpCache) {
        let cache = self.net.forward_cached(&self.assemble(z, t, c));
        let out = cache.output();
        (Vector6::from_fn(|i, _| out[i] * self.output_scale), cache)
    }

    /// Accumulates parameter gradients for one evaluation and returns the
    /// adjoints w.r.t. the state and the embedding.
    fn vjp(
        &self,
        cache: &MlpCache,
        adjoint: &Vector6<f64>,
        grads: &mut MlpGrads,
        grad_c: &mut DVector<f64>,
    ) -> Vector6<f64> {
        let grad_out = DVector::from_fn(ODE_STATE_DIM, |i, _| adjoint[i] * self.output_scale);
        let gx = self.net.backward(cache, &grad_out, grads);
        for i in 0..grad_c.len() {
            grad_c[i] += gx[ODE_STATE_DIM + 1 + i];
        }
        Vector6::from_fn(|i, _| gx[i] * self.input_scale)
    }
}

/// One object: coarse per-frame positions plus the fitted dynamics model and
/// instance embedding producing continuous poses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectTrack {
    pub instance_id: u32,
    pub class_label: String,
    pub class_index: usize,
    /// (t, mean 3D position) sorted by t.
    pub coarse_positions: Vec<(f64, Vector3<f64>)>,
    pub embedding: DVector<f64>,
    pub ode: Option<OdeRhs>,
    /// Reference pose schedule; used directly when no ODE is fitted.
    pub pose_samples: Vec<(f64, Pose)>,
}

impl ObjectTrack {
    pub fn new(instance_id: u32, class_label: impl Into<String>, class_index: usize) -> Self {
        ObjectTrack {
            instance_id,
            class_label: class_label.into(),
            class_index,
            coarse_positions: Vec::new(),
            embedding: DVector::zeros(ODE_EMBED_DIM),
            ode: None,
            pose_samples: Vec::new(),
        }
    }

    /// z(t0) = [XYZ_t0, 0]: first coarse position, rotation initialized to zero.
    pub fn initial_state(&self) -> Option<Vector6<f64>> {
        self.coarse_positions.first().map(|(_, p)| {
            Vector6::new(p.x, p.y, p.z, 0.0, 0.0, 0.0)
        })
    }

    /// Times the object exists; outside it the object is absent from the scene.
    pub fn time_window(&self) -> Option<(f64, f64)> {
        if !self.pose_samples.is_empty() {
            return Some((
                self.pose_samples.first().unwrap().0,
                self.pose_samples.last().unwrap().0,
            ));
        }
        if !self.coarse_positions.is_empty() {
            return Some((
                self.coarse_positions.first().unwrap().0,
                self.coarse_positions.last().unwrap().0,
            ));
        }
        None
    }

    /// Pose at time t, or None when the object is absent. Uses the fitted
    /// ODE when available, otherwise interpolates the pose schedule.
    pub fn pose_at(&self, t: f64) -> Option<Pose> {
        let (lo, hi) = self.time_window()?;
        if t < lo - 1e-12 || t > hi + 1e-12 {
            return None;
        }
        if self.ode.is_some() {
            return query_pose(self, t).ok();
        }
        let samples = &self.pose_samples;
        if samples.is_empty() {
            return None;
        }
        let idx = samples.partition_point(|(st, _)| *st <= t);
        if idx == 0 {
            return Some(samples[0].1);
        }
        if idx >= samples.len() {
            return Some(samples[samples.len() - 1].1);
        }
        let (t0, a) = samples[idx - 1];
        let (t1, b) = samples[idx];
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Some(Pose::new(
            a.rotation.lerp(&b.rotation, w),
            a.translation.lerp(&b.translation, w),
        ))
    }
}

/// Classical fixed-step 4th-order Runge-Kutta.
pub fn integrate_rk4(
    rhs: impl Fn(&Vector6<f64>, f64) -> Vector6<f64>,
    z0: &Vector6<f64>,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<Vector6<f64>> {
    if steps < 1 {
        return Err(SplatError::InvalidArgument("steps must be >= 1".into()));
    }
    let h = (t1 - t0) / steps as f64;
    let mut z = *z0;
    let mut t = t0;
    for _ in 0..steps {
        let k1 = rhs(&z, t);
        let k2 = rhs(&(z + k1 * (h / 2.0)), t + h / 2.0);
        let k3 = rhs(&(z + k2 * (h / 2.0)), t + h / 2.0);
        let k4 = rhs(&(z + k3 * h), t + h);
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
        if !z.iter().all(|v| v.is_finite()) {
            return Err(SplatError::NonFinite("rk4 state"));
        }
    }
    Ok(z)
}

fn query_steps(t0: f64, t: f64) -> usize {
    ((STEPS_PER_UNIT * (t - t0).abs()).ceil() as usize).max(4)
}

/// Pose at time t from the fitted ODE: integrate the offset state from t0,
/// add the initial state, split into translation and Euler rotation.
pub fn query_pose(track: &ObjectTrack, t: f64) -> Result<Pose> {
    let rhs = track
        .ode
        .as_ref()
        .ok_or_else(|| SplatError::InvalidArgument("track has no fitted ODE".into()))?;
    let z0 = track
        .initial_state()
        .ok_or_else(|| SplatError::InvalidArgument("track has no coarse positions".into()))?;
    let t0 = track.coarse_positions[0].0;
    let c = &track.embedding;
    let y = integrate_rk4(
        |y, tt| rhs.eval(y, tt, c),
        &Vector6::zeros(),
        t0,
        t,
        query_steps(t0, t),
    )?;
    let z = z0 + y;
    Ok(Pose::new(
        Vector3::new(z[3], z[4], z[5]),
        Vector3::new(z[0], z[1], z[2]),
    ))
}

/// Per-frame mean 3D position of the LiDAR points falling inside each
/// object's 2D mask. Frames with fewer than 5 in-mask points yield no entry;
/// objects that never accumulate a frame are dropped with a warning.
pub fn coarse_track(
    lidar_frames: &[Vec<Vector3<f64>>],
    masks: &BTreeMap<u32, Vec<Option<GrayImage>>>,
    cameras: &[Camera],
) -> Result<BTreeMap<u32, Vec<(f64, Vector3<f64>)>>> {
    if lidar_frames.len() != cameras.len() {
        return Err(SplatError::LengthMismatch {
            expected: cameras.len(),
            got: lidar_frames.len(),
        });
    }
    let mut out = BTreeMap::new();
    for (&id, frames) in masks {
        if frames.len() != cameras.len() {
            return Err(SplatError::LengthMismatch {
                expected: cameras.len(),
                got: frames.len(),
            });
        }
        let mut track = Vec::new();
        for (frame_idx, mask) in frames.iter().enumerate() {
            let Some(mask) = mask else { continue };
            let cam = &cameras[frame_idx];
            let mut sum = Vector3::zeros();
            let mut count = 0usize;
            for p in &lidar_frames[frame_idx] {
                let pc = cam.extrinsics.apply(p);
                if pc.z <= 0.01 {
                    continue;
                }
                let u = (cam.fx * pc.x / pc.z + cam.cx).round();
                let v = (cam.fy * pc.y / pc.z + cam.cy).round();
                if u < 0.0 || v < 0.0 || u >= mask.width as f64 || v >= mask.height as f64 {
                    continue;
                }
                if mask.get(u as usize, v as usize) != 0 {
                    sum += p;
                    count += 1;
                }
            }
            if count >= 5 {
                track.push((cam.time, sum / count as f64));
            }
        }
        if track.is_empty() {
            eprintln!("warning: object {id} has no frames with enough in-mask points; dropped");
            continue;
        }
        out.insert(id, track);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct OdeFitConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for OdeFitConfig {
    fn default() -> Self {
        OdeFitConfig {
            learning_rate: 0.01,
            iterations: 2000,
            seed: 0,
        }
    }
}

struct Step {
    h: f64,
    caches: [MlpCache; 4],
    ks: [Vector6<f64>; 4],
}

/// Forward chain through all target times, recording everything needed for
/// the reverse sweep. `marks[j]` is the number of steps taken when target j
/// is reached.
fn forward_chain(
    rhs: &OdeRhs,
    c: &DVector<f64>,
    times: &[f64],
) -> Result<(Vec<Vector6<f64>>, Vec<Step>, Vec<usize>)> {
    let mut y = Vector6::zeros();
    let mut states = vec![y];
    let mut steps = Vec::new();
    let mut marks = vec![0usize];
    for seg in times.windows(2) {
        let (ta, tb) = (seg[0], seg[1]);
        let n = ((STEPS_PER_UNIT * (tb - ta)).ceil() as usize).max(1);
        let h = (tb - ta) / n as f64;
        let mut t = ta;
        for _ in 0..n {
            let (k1, c1) = rhs.eval_cached(&y, t, c);
            let (k2, c2) = rhs.eval_cached(&(y + k1 * (h / 2.0)), t + h / 2.0, c);
            let (k3, c3) = rhs.eval_cached(&(y + k2 * (h / 2.0)), t + h / 2.0, c);
            let (k4, c4) = rhs.eval_cached(&(y + k3 * h), t + h, c);
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if !y.iter().all(|v| v.is_finite()) {
                return Err(SplatError::NonFinite("ode chain state"));
            }
            steps.push(Step {
                h,
                caches: [c1, c2, c3, c4],
                ks: [k1, k2, k3, k4],
            });
            t += h;
        }
        states.push(y);
        marks.push(steps.len());
    }
    Ok((states, steps, marks))
}

/// Reverse sweep: pushes target adjoints backward through every recorded RK4
/// step, accumulating network and embedding gradients.
fn backward_chain(
    rhs: &OdeRhs,
    steps: &[Step],
    marks: &[usize],
    target_adjoints: &[Vector6<f64>],
    grads: &mut MlpGrads,
    grad_c: &mut DVector<f64>,
) {
    let mut adj = Vector6::zeros();
    let mut tj = target_adjoints.len();
    let mut count = steps.len();
    while tj > 0 && marks[tj - 1] == count {
        adj += target_adjoints[tj - 1];
        tj -= 1;
    }
    for step in steps.iter().rev() {
        let h = step.h;
        // Direct contributions of each k to the step output.
        let mut gk = [
            adj * (h / 6.0),
            adj * (h / 3.0),
            adj * (h / 3.0),
            adj * (h / 6.0),
        ];
        let mut a = adj;
        // k4 = f(y + h k3), k3 = f(y + h/2 k2), k2 = f(y + h/2 k1), k1 = f(y).
        let gz4 = rhs.vjp(&step.caches[3], &gk[3], grads, grad_c);
        a += gz4;
        gk[2] += gz4 * h;
        let gz3 = rhs.vjp(&step.caches[2], &gk[2], grads, grad_c);
        a += gz3;
        gk[1] += gz3 * (h / 2.0);
        let gz2 = rhs.vjp(&step.caches[1], &gk[1], grads, grad_c);
        a += gz2;
        gk[0] += gz2 * (h / 2.0);
        let gz1 = rhs.vjp(&step.caches[0], &gk[0], grads, grad_c);
        a += gz1;
        adj = a;
        count -= 1;
        while tj > 0 && marks[tj - 1] == count {
            adj += target_adjoints[tj - 1];
            tj -= 1;
        }
        let _ = &step.ks; // ks kept for debugging/inspection
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + EPS);
        }
    }
}

/// Fits one shared dynamics network plus one embedding per track to the
/// coarse positions. The loss is the mean squared positional error of the
/// integrated trajectory at the coarse timestamps. Returns the loss trace;
/// the fitted network is cloned into every track.
pub fn fit_ode_shared(tracks: &mut [ObjectTrack], cfg: &OdeFitConfig) -> Result<Vec<f64>> {
    if tracks.is_empty() {
        return Err(SplatError::InvalidArgument("no tracks to fit".into()));
    }
    for tr in tracks.iter() {
        if tr.coarse_positions.len() < 3 {
            return Err(SplatError::InvalidArgument(format!(
                "track {} has fewer than 3 coarse positions",
                tr.instance_id
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rhs = OdeRhs::new(ODE_EMBED_DIM, &mut rng);
    let mut embeddings: Vec<DVector<f64>> = tracks
        .iter()
        .map(|_| DVector::from_fn(ODE_EMBED_DIM, |_, _| rng.gen_range(-0.5..0.5)))
        .collect();

    let net_n = rhs.net.param_count();
    let total_n = net_n + tracks.len() * ODE_EMBED_DIM;
    let mut adam = Adam::new(total_n);
    let total_targets: usize = tracks.iter().map(|t| t.coarse_positions.len()).sum();
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut initial_loss = None;

    for iter in 0..cfg.iterations {
        let mut loss = 0.0;
        let mut net_grads = MlpGrads::zeros_like(&rhs.net);
        let mut emb_grads: Vec<DVector<f64>> =
            embeddings.iter().map(|e| DVector::zeros(e.len())).collect();

        for (ti, track) in tracks.iter().enumerate() {
            let z0 = track.initial_state().unwrap();
            let times: Vec<f64> = track.coarse_positions.iter().map(|(t, _)| *t).collect();
            let (states, steps, marks) = forward_chain(&rhs, &embeddings[ti], &times)?;
            let mut adjoints = Vec::with_capacity(times.len());
            for (j, (_, target)) in track.coarse_positions.iter().enumerate() {
                let pos = Vector3::new(
                    z0[0] + states[j][0],
                    z0[1] + states[j][1],
                    z0[2] + states[j][2],
                );
                let r = pos - target;
                loss += r.norm_squared();
                let scale = 2.0 / total_targets as f64;
                adjoints.push(Vector6::new(
                    scale * r.x,
                    scale * r.y,
                    scale * r.z,
                    0.0,
                    0.0,
                    0.0,
                ));
            }
            backward_chain(
                &rhs,
                &steps,
                &marks,
                &adjoints,
                &mut net_grads,
                &mut emb_grads[ti],
            );
        }
        loss /= total_targets as f64;
        if !loss.is_finite() {
            return Err(SplatError::Diverged(format!(
                "ode loss non-finite at iteration {iter}"
            )));
        }
        let init = *initial_loss.get_or_insert(loss.max(1e-12));
        if loss > 10.0 * init && iter > 10 {
            return Err(SplatError::Diverged(format!(
                "ode loss {loss:.3e} exceeded 10x initial {init:.3e} at iteration {iter}"
            )));
        }
        trace.push(loss);

        let mut params = rhs.net.flatten();
        for e in &embeddings {
            params.extend(e.iter());
        }
        let mut grads = net_grads
            .layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect::<Vec<f64>>();
        for g in &emb_grads {
            grads.extend(g.iter());
        }
        adam.step(&mut params, &grads, cfg.learning_rate);
        rhs.net.load_flat(&params[..net_n])?;
        for (k, e) in embeddings.iter_mut().enumerate() {
            let off = net_n + k * ODE_EMBED_DIM;
            for (i, v) in e.iter_mut().enumerate() {
                *v = params[off + i];
            }
        }
    }

    for (ti, track) in tracks.iter_mut().enumerate() {
        track.ode = Some(rhs.clone());
        track.embedding = embeddings[ti].clone();
    }
    Ok(trace)
}

/// Single-track convenience wrapper around [`fit_ode_shared`].
pub fn fit_ode(track: &mut ObjectTrack, cfg: &OdeFitConfig) -> Result<Vec<f64>> {
    fit_ode_shared(std::slice::from_mut(track), cfg)
}

// ---------------------------------------------------------------------------
// JSON track interchange.

#[derive(Debug, Serialize, Deserialize)]
pub struct TrackFrameJson {
    pub t: f64,
    pub xyz: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrackPoseJson {
    pub t: f64,
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrackJson {
    pub instance_id: u32,
    pub class: String,
    pub frames: Vec<TrackFrameJson>,
    pub poses: Vec<TrackPoseJson>,
}

/// Serializes coarse frames plus poses sampled at `pose_times`.
pub fn track_to_json(track: &ObjectTrack, pose_times: &[f64]) -> TrackJson {
    TrackJson {
        instance_id: track.instance_id,
        class: track.class_label.clone(),
        frames: track
            .coarse_positions
            .iter()
            .map(|(t, p)| TrackFrameJson {
                t: *t,
                xyz: [p.x, p.y, p.z],
            })
            .collect(),
        poses: pose_times
            .iter()
            .filter_map(|&t| {
                track.pose_at(t).map(|pose| TrackPoseJson {
                    t,
                    xyz: [
                        pose.translation.x,
                        pose.translation.y,
                        pose.translation.z,
                    ],
                    rpy: [pose.rotation.x, pose.rotation.y, pose.rotation.z],
                })
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Se3;

    #[test]
    fn rk4_constant_rhs_keeps_state() {
        let z0 = Vector6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let z = integrate_rk4(|_, _| Vector6::zeros(), &z0, 0.0, 1.0, 10).unwrap();
        assert_eq!(z, z0);
    }

    #[test]
    fn rk4_exponential_accuracy() {
        // z' = z with z0 = 1 embedded in the first component.
        let mut z0 = Vector6::zeros();
        z0[0] = 1.0;
        let z = integrate_rk4(|z, _| *z, &z0, 0.0, 1.0, 100).unwrap();
        assert!((z[0] - std::f64::consts::E).abs() < 1e-7);
    }

    #[test]
    fn rk4_order_four_convergence() {
        let mut z0 = Vector6::zeros();
        z0[0] = 1.0;
        let err = |steps: usize| {
            let z = integrate_rk4(|z, _| *z, &z0, 0.0, 1.0, steps).unwrap();
            (z[0] - std::f64::consts::E).abs()
        };
        let ratio = err(20) / err(40);
        assert!(
            (12.0..=20.0).contains(&ratio),
            "convergence ratio {ratio} outside [12, 20]"
        );
    }

    fn constant_velocity_track(v: Vector3<f64>, n: usize) -> ObjectTrack {
        let mut track = ObjectTrack::new(0, "car", 0);
        for i in 0..n {
            let t = -0.5 + i as f64 / (n - 1) as f64;
            track
                .coarse_positions
                .push((t, Vector3::new(1.0, 2.0, 0.0) + v * (t + 0.5)));
        }
        track
    }

    #[test]
    fn fit_recovers_constant_velocity() {
        let v = Vector3::new(8.0, -3.0, 0.0);
        let mut track = constant_velocity_track(v, 11);
        let cfg = OdeFitConfig {
            learning_rate: 0.01,
            iterations: 1500,
            seed: 3,
        };
        let trace = fit_ode(&mut track, &cfg).unwrap();
        assert!(trace.last().unwrap() < &trace[0]);
        let mut sq = 0.0;
        for (t, target) in &track.coarse_positions {
            let pose = query_pose(&track, *t).unwrap();
            sq += (pose.translation - target).norm_squared();
        }
        let rmse = (sq / track.coarse_positions.len() as f64).sqrt();
        assert!(rmse < 0.05, "rmse {rmse}");
    }

    #[test]
    fn query_pose_initial_condition() {
        let mut track = constant_velocity_track(Vector3::new(2.0, 0.0, 0.0), 5);
        let cfg = OdeFitConfig {
            learning_rate: 0.01,
            iterations: 50,
            seed: 1,
        };
        fit_ode(&mut track, &cfg).unwrap();
        let (t0, p0) = track.coarse_positions[0];
        let pose = query_pose(&track, t0).unwrap();
        assert!((pose.translation - p0).norm() < 1e-9);
        assert!(pose.rotation.norm() < 1e-9);
    }

    #[test]
    fn query_pose_continuous_in_time() {
        let mut track = constant_velocity_track(Vector3::new(5.0, 1.0, 0.0), 9);
        let cfg = OdeFitConfig {
            learning_rate: 0.01,
            iterations: 300,
            seed: 2,
        };
        fit_ode(&mut track, &cfg).unwrap();
        let dt = 1e-3;
        let mut prev = query_pose(&track, -0.5).unwrap();
        let mut t = -0.5 + dt;
        while t <= 0.5 {
            let cur = query_pose(&track, t).unwrap();
            let jump = (cur.translation - prev.translation).norm();
            assert!(jump < 0.5, "discontinuity {jump} at t {t}");
            prev = cur;
            t += dt;
        }
    }

    #[test]
    fn ode_gradients_match_finite_differences_on_tiny_net() {
        // A minimal rhs (no hidden layer) so the full FD sweep is cheap.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rhs = OdeRhs::new(2, &mut rng);
        rhs.net = Mlp::new(&[ODE_STATE_DIM + 1 + 2, ODE_STATE_DIM], OutputActivation::Linear, &mut rng);
        let c = DVector::from_vec(vec![0.3, -0.2]);
        let times = [0.0, 0.25, 0.5];
        let targets = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.3, -0.1, 0.05),
            Vector3::new(0.6, -0.2, 0.1),
        ];

        let loss_of = |rhs: &OdeRhs, c: &DVector<f64>| -> f64 {
            let (states, _, _) = forward_chain(rhs, c, &times).unwrap();
            let mut l = 0.0;
            for (s, tgt) in states.iter().zip(&targets) {
                let pos = Vector3::new(s[0], s[1], s[2]);
                l += (pos - tgt).norm_squared();
            }
            l / times.len() as f64
        };

        let (states, steps, marks) = forward_chain(&rhs, &c, &times).unwrap();
        let mut adjoints = Vec::new();
        for (s, tgt) in states.iter().zip(&targets) {
            let scale = 2.0 / times.len() as f64;
            adjoints.push(Vector6::new(
                scale * (s[0] - tgt.x),
                scale * (s[1] - tgt.y),
                scale * (s[2] - tgt.z),
                0.0,
                0.0,
                0.0,
            ));
        }
        let mut grads = MlpGrads::zeros_like(&rhs.net);
        let mut grad_c = DVector::zeros(2);
        backward_chain(&rhs, &steps, &marks, &adjoints, &mut grads, &mut grad_c);

        let flat = rhs.net.flatten();
        let analytic: Vec<f64> = grads
            .layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect();
        let h = 1e-6;
        for k in 0..flat.len() {
            let mut plus = flat.clone();
            plus[k] += h;
            let mut rp = rhs.clone();
            rp.net.load_flat(&plus).unwrap();
            let mut minus = flat.clone();
            minus[k] -= h;
            let mut rm = rhs.clone();
            rm.net.load_flat(&minus).unwrap();
            let fd = (loss_of(&rp, &c) - loss_of(&rm, &c)) / (2.0 * h);
            let denom = fd.abs().max(analytic[k].abs()).max(1e-8);
            assert!(
                (fd - analytic[k]).abs() / denom < 1e-3,
                "param {k}: fd {fd} vs analytic {}",
                analytic[k]
            );
        }
        // Embedding gradient too.
        for k in 0..2 {
            let mut cp = c.clone();
            cp[k] += h;
            let mut cm = c.clone();
            cm[k] -= h;
            let fd = (loss_of(&rhs, &cp) - loss_of(&rhs, &cm)) / (2.0 * h);
            let denom = fd.abs().max(grad_c[k].abs()).max(1e-8);
            assert!((fd - grad_c[k]).abs() / denom < 1e-3);
        }
    }

    #[test]
    fn coarse_track_recovers_object_center() {
        // Points symmetric about (10, 0, 0), camera at origin looking +z...
        // place the object in front of the camera instead: center (0, 0, 10).
        let center = Vector3::new(0.0, 0.0, 10.0);
        let mut points = Vec::new();
        for dx in [-0.5, 0.5] {
            for dy in [-0.5, 0.5] {
                for dz in [-0.5, 0.5] {
                    points.push(center + Vector3::new(dx, dy, dz));
                }
            }
        }
        let cam = Camera {
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            width: 100,
            height: 100,
            extrinsics: Se3::identity(),
            time: 0.0,
        };
        let mut mask = GrayImage::new(100, 100);
        for y in 30..70 {
            for x in 30..70 {
                mask.set(x, y, 1);
            }
        }
        let mut masks = BTreeMap::new();
        masks.insert(1u32, vec![Some(mask)]);
        let tracks = coarse_track(&[points], &masks, &[cam]).unwrap();
        let (t, pos) = tracks[&1][0];
        assert_eq!(t, 0.0);
        assert!((pos - center).norm() < 1e-6);
    }

    #[test]
    fn coarse_track_skips_empty_frames_and_objects() {
        let cam = Camera {
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            width: 100,
            height: 100,
            extrinsics: Se3::identity(),
            time: 0.0,
        };
        let empty_mask = GrayImage::new(100, 100);
        let mut masks = BTreeMap::new();
        masks.insert(2u32, vec![Some(empty_mask)]);
        let points = vec![Vector3::new(0.0, 0.0, 5.0); 20];
        let tracks = coarse_track(&[points], &masks, &[cam]).unwrap();
        assert!(tracks.is_empty());
    }
}
