//! Temporal separation: visibility-interval pre-filtering, point-life updates
//! from render masks, and the commit/reset cycle.

use crate::error::{Result, SplatError};
use crate::scene::{Gaussian3D, FRESH_LIFE, FRESH_VISIBILITY};

/// Margin added on both sides when committing point life to visibility.
pub const COMMIT_MARGIN: f64 = 0.1;

/// Indices of Gaussians whose visibility interval contains `t`.
pub fn filter_visible(gaussians: &[Gaussian3D], t: f64) -> Vec<usize> {
    gaussians
        .iter()
        .enumerate()
        .filter(|(_, g)| g.visibility.0 <= t && t <= g.visibility.1)
        .map(|(i, _)| i)
        .collect()
}

/// For each presented Gaussian with a true mask bit, extends its life
/// interval to include `t`. `presented` are the indices produced by
/// [`filter_visible`]; `mask` is aligned with it.
pub fn update_point_life(
    gaussians: &mut [Gaussian3D],
    presented: &[usize],
    mask: &[bool],
    t: f64,
) -> Result<()> {
    if presented.len() != mask.len() {
        return Err(SplatError::LengthMismatch {
            expected: presented.len(),
            got: mask.len(),
        });
    }
    for (&idx, &m) in presented.iter().zip(mask) {
        if m {
            let g = &mut gaussians[idx];
            g.life.0 = g.life.0.min(t);
            g.life.1 = g.life.1.max(t);
        }
    }
    Ok(())
}

/// Commits point life to temporal visibility with ±0.1 margins, clamped to
/// [-1, 1]. Never-observed Gaussians (life still the fresh empty interval)
/// stay fully visible. Life resets afterward.
pub fn commit_visibility(gaussians: &mut [Gaussian3D]) {
    for g in gaussians {
        if g.life.0 > g.life.1 {
            g.visibility = FRESH_VISIBILITY;
        } else {
            g.visibility = (
                (g.life.0 - COMMIT_MARGIN).max(-1.0),
                (g.life.1 + COMMIT_MARGIN).min(1.0),
            );
        }
        g.life = FRESH_LIFE;
    }
}

/// Periodic reset: every Gaussian becomes visible at all times.
pub fn reset_visibility(gaussians: &mut [Gaussian3D]) {
    for g in gaussians {
        g.visibility = FRESH_VISIBILITY;
    }
}

/// Counts commit cycles and resets visibility every `reset_period` commits.
#[derive(Debug, Clone)]
pub struct VisibilitySchedule {
    pub reset_period: usize,
    commits: usize,
}

impl VisibilitySchedule {
    pub fn new(reset_period: usize) -> Self {
        VisibilitySchedule {
            reset_period,
            commits: 0,
        }
    }

    /// Commit, then reset if the period elapsed. Returns true on reset.
    pub fn commit(&mut self, gaussians: &mut [Gaussian3D]) -> bool {
        commit_visibility(gaussians);
        self.commits += 1;
        if self.reset_period > 0 && self.commits % self.reset_period == 0 {
            reset_visibility(gaussians);
            true
        } else {
            false
        }
    }
}

impl Default for VisibilitySchedule {
    fn default() -> Self {
        VisibilitySchedule::new(30)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::GaussianColor;
    use nalgebra::{UnitQuaternion, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian() -> Gaussian3D {
        Gaussian3D::new(
            Vector3::zeros(),
            Vector3::zeros(),
            UnitQuaternion::identity(),
            0.5,
            GaussianColor::Rgb([0.5; 3]),
            None,
        )
        .unwrap()
    }

    fn with_visibility(v: (f64, f64)) -> Gaussian3D {
        let mut g = gaussian();
        g.visibility = v;
        g
    }

    #[test]
    fn fresh_gaussian_always_passes_filter() {
        let gs = vec![gaussian()];
        for t in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(filter_visible(&gs, t), vec![0]);
        }
    }

    #[test]
    fn interval_membership() {
        let gs = vec![with_visibility((0.2, 0.4))];
        assert!(filter_visible(&gs, 0.1).is_empty());
        assert_eq!(filter_visible(&gs, 0.3), vec![0]);
        assert_eq!(filter_visible(&gs, 0.2), vec![0]);
        assert_eq!(filter_visible(&gs, 0.4), vec![0]);
    }

    #[test]
    fn filter_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gs: Vec<Gaussian3D> = (0..100_000)
            .map(|_| {
                let a = rng.gen_range(-1.0..1.0f64);
                let b = rng.gen_range(-1.0..1.0f64);
                with_visibility((a.min(b), a.max(b)))
            })
            .collect();
        let t = rng.gen_range(-1.0..1.0);
        let fast = filter_visible(&gs, t);
        let mut slow = Vec::new();
        for (i, g) in gs.iter().enumerate() {
            if g.visibility.0 <= t && t <= g.visibility.1 {
                slow.push(i);
            }
        }
        assert_eq!(fast, slow);
    }

    #[test]
    fn first_observation_collapses_empty_interval() {
        let mut gs = vec![gaussian()];
        update_point_life(&mut gs, &[0], &[true], 0.3).unwrap();
        assert_eq!(gs[0].life, (0.3, 0.3));
    }

    #[test]
    fn life_updates_extend_interval() {
        let mut gs = vec![gaussian()];
        gs[0].life = (0.1, 0.2);
        update_point_life(&mut gs, &[0], &[true], 0.5).unwrap();
        assert_eq!(gs[0].life, (0.1, 0.5));
        update_point_life(&mut gs, &[0], &[false], 0.9).unwrap();
        assert_eq!(gs[0].life, (0.1, 0.5));
    }

    #[test]
    fn mask_length_mismatch_rejected() {
        let mut gs = vec![gaussian()];
        assert!(update_point_life(&mut gs, &[0], &[true, false], 0.0).is_err());
    }

    #[test]
    fn commit_applies_margins_and_clamps() {
        let mut gs = vec![gaussian(), gaussian(), gaussian()];
        gs[0].life = (0.0, 0.5);
        gs[1].life = (-0.95, 1.0);
        // gs[2] never observed.
        commit_visibility(&mut gs);
        assert_eq!(gs[0].visibility, (-0.1, 0.6));
        assert_eq!(gs[1].visibility, (-1.0, 1.0));
        assert_eq!(gs[2].visibility, (-1.0, 1.0));
        for g in &gs {
            assert_eq!(g.life, FRESH_LIFE);
        }
    }

    #[test]
    fn reset_is_idempotent_and_total() {
        let mut gs = vec![with_visibility((0.2, 0.3)), with_visibility((-0.5, -0.4))];
        reset_visibility(&mut gs);
        let snapshot = gs.clone();
        reset_visibility(&mut gs);
        assert_eq!(gs, snapshot);
        for t in [-1.0, 0.0, 1.0] {
            assert_eq!(filter_visible(&gs, t).len(), gs.len());
        }
    }

    #[test]
    fn life_monotone_under_random_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut gs: Vec<Gaussian3D> = (0..50).map(|_| gaussian()).collect();
        let all: Vec<usize> = (0..gs.len()).collect();
        let mut prev: Vec<(f64, f64)> = gs.iter().map(|g| g.life).collect();
        for _ in 0..200 {
            let t = rng.gen_range(-1.0..1.0);
            let mask: Vec<bool> = (0..gs.len()).map(|_| rng.gen_bool(0.3)).collect();
            update_point_life(&mut gs, &all, &mask, t).unwrap();
            for (g, p) in gs.iter().zip(&prev) {
                assert!(g.life.0 <= p.0);
                assert!(g.life.1 >= p.1);
            }
            prev = gs.iter().map(|g| g.life).collect();
        }
    }

    #[test]
    fn committed_interval_contains_observations_with_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut gs: Vec<Gaussian3D> = (0..20).map(|_| gaussian()).collect();
        let all: Vec<usize> = (0..gs.len()).collect();
        let mut observed: Vec<Vec<f64>> = vec![Vec::new(); gs.len()];
        for _ in 0..50 {
            let t = rng.gen_range(-0.9..0.9);
            let mask: Vec<bool> = (0..gs.len()).map(|_| rng.gen_bool(0.5)).collect();
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    observed[i].push(t);
                }
            }
            update_point_life(&mut gs, &all, &mask, t).unwrap();
        }
        commit_visibility(&mut gs);
        for (g, obs) in gs.iter().zip(&observed) {
            for &t in obs {
                let lo = (t - COMMIT_MARGIN).max(-1.0);
                let hi = (t + COMMIT_MARGIN).min(1.0);
                assert!(g.visibility.0 <= lo && hi <= g.visibility.1);
            }
        }
    }

    #[test]
    fn schedule_resets_on_period() {
        let mut gs = vec![gaussian()];
        let mut sched = VisibilitySchedule::new(2);
        gs[0].life = (0.0, 0.1);
        assert!(!sched.commit(&mut gs));
        assert_eq!(gs[0].visibility, (-0.1, 0.2));
        gs[0].life = (0.0, 0.1);
        assert!(sched.commit(&mut gs));
        assert_eq!(gs[0].visibility, FRESH_VISIBILITY);
    }
}
