//! Adaptive level of detail: depth-dependent Bernoulli culling of
//! small-footprint splats, with noise-jittered survivors.

use nalgebra::{Matrix2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SplatError};
use crate::projection::ProjectedGaussian;

#[derive(Debug, Clone, Copy)]
pub struct LodConfig {
    /// 2D scale threshold in pixels; r = 0 disables the LOD path entirely.
    pub r: f64,
    /// Maximum drop probability.
    pub p_max: f64,
    /// Reference depth in meters.
    pub reference_depth: f64,
    /// Per-axis position jitter scale (meters).
    pub offset_scale: Vector3<f64>,
    pub rng_seed: u64,
}

impl Default for LodConfig {
    fn default() -> Self {
        LodConfig {
            r: 4.0,
            p_max: 0.5,
            reference_depth: 50.0,
            offset_scale: Vector3::new(0.05, 0.05, 0.05),
            rng_seed: 0,
        }
    }
}

impl LodConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r < 0.0 {
            return Err(SplatError::InvalidArgument("lod r must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.p_max) {
            return Err(SplatError::InvalidArgument("p_max must be in [0,1]".into()));
        }
        if self.reference_depth <= 0.0 {
            return Err(SplatError::InvalidArgument("reference depth must be > 0".into()));
        }
        Ok(())
    }
}

/// 2D scale of a projected splat: the 3-sigma radius along its major axis.
pub fn scale2d(cov2d: &Matrix2<f64>) -> Result<f64> {
    let a = cov2d[(0, 0)];
    let d = cov2d[(1, 1)];
    let b = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    let mean = 0.5 * (a + d);
    let det = a * d - b * b;
    let disc = (mean * mean - det).max(0.0).sqrt();
    let l_max = mean + disc;
    let l_min = mean - disc;
    if l_min < -1e-9 || !l_max.is_finite() {
        return Err(SplatError::InvalidArgument(format!(
            "cov2d not PSD (eigenvalues {l_min}, {l_max})"
        )));
    }
    Ok(3.0 * l_max.max(0.0).sqrt())
}

/// p = p_max + (p_max - 1e-2) * min(0, (d - D)/D), clamped to [0, 1].
pub fn drop_probability(depth: f64, cfg: &LodConfig) -> f64 {
    let p = cfg.p_max
        + (cfg.p_max - 1e-2) * (0.0f64).min((depth - cfg.reference_depth) / cfg.reference_depth);
    p.clamp(0.0, 1.0)
}

/// Outcome of the LOD pass, aligned with the input list.
#[derive(Debug, Clone)]
pub struct LodResult {
    /// False means the entry was probabilistically culled.
    pub keep: Vec<bool>,
    /// 3D position jitter for kept small entries; zero for large entries.
    pub offsets: Vec<Vector3<f64>>,
    pub small_count: usize,
    pub culled_count: usize,
}

/// Splits entries by `scale2d` against the threshold, keeps each small entry
/// with probability 1 - p(depth), and draws a depth-scaled jitter for the
/// survivors. Large entries pass untouched. Entries are visited in input
/// order from one RNG stream, so a fixed seed is bit-reproducible.
pub fn apply_lod(
    projected: &[ProjectedGaussian],
    cfg: &LodConfig,
    rng: &mut impl Rng,
) -> Result<LodResult> {
    cfg.validate()?;
    let n = projected.len();
    let mut result = LodResult {
        keep: vec![true; n],
        offsets: vec![Vector3::zeros(); n],
        small_count: 0,
        culled_count: 0,
    };
    if cfg.r == 0.0 {
        return Ok(result);
    }
    let d_max = projected
        .iter()
        .map(|p| p.depth)
        .fold(0.0f64, f64::max)
        .max(1e-12);
    for (i, p) in projected.iter().enumerate() {
        if scale2d(&p.cov2d)? > cfg.r {
            continue;
        }
        result.small_count += 1;
        let drop_p = drop_probability(p.depth, cfg);
        if rng.gen::<f64>() < drop_p {
            result.keep[i] = false;
            result.culled_count += 1;
            continue;
        }
        let dn = (p.depth / d_max).clamp(0.0, 1.0);
        let n0: f64 = rng.sample(StandardNormal);
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        result.offsets[i] = Vector3::new(
            cfg.offset_scale.x * dn * n0,
            cfg.offset_scale.y * dn * n1,
            cfg.offset_scale.z * dn * n2,
        );
    }
    Ok(result)
}

/// Seed derivation for per-render RNG streams: (config seed, timestep index).
pub fn render_rng(seed: u64, timestep: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ timestep.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}
