//! Planner uncertainty from candidate-trajectory disagreement.
//!
//! Intra-frame spread is the waypoint-wise population variance across the
//! candidates of one frame; inter-frame drift is the waypoint-wise mean squared
//! displacement between consecutive mean trajectories. Both are divided by a
//! fixed scale, clamped to `[0, 1]`, and blended with weights `alpha`/`beta`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::Trajectory;
use crate::geometry::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error("malformed candidate set: {0}")]
    MalformedCandidateSet(String),
    #[error("invalid uncertainty config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub frame_index: u64,
    candidates: Vec<Trajectory>,
}

impl CandidateSet {
    pub fn new(frame_index: u64, candidates: Vec<Trajectory>) -> Result<Self, UncertaintyError> {
        let first = candidates
            .first()
            .ok_or_else(|| UncertaintyError::MalformedCandidateSet("at least one candidate required".into()))?;
        let len = first.len();
        if let Some(i) = candidates.iter().position(|c| c.len() != len) {
            return Err(UncertaintyError::MalformedCandidateSet(format!(
                "candidate {i} has {} waypoints, expected {len}",
                candidates[i].len()
            )));
        }
        Ok(Self {
            frame_index,
            candidates,
        })
    }

    pub fn candidates(&self) -> &[Trajectory] {
        &self.candidates
    }

    pub fn waypoint_count(&self) -> usize {
        self.candidates[0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub alpha: f64,
    pub beta: f64,
    pub theta_u: f64,
    pub intra_scale: f64,
    pub inter_scale: f64,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            theta_u: 0.5,
            intra_scale: 4.0,
            inter_scale: 4.0,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<(), UncertaintyError> {
        let bad = |m: &str| Err(UncertaintyError::InvalidConfig(m.to_string()));
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad("alpha and beta must be non-negative");
        }
        if self.alpha + self.beta <= 0.0 {
            return bad("alpha + beta must be positive");
        }
        if !(0.0..=1.0).contains(&self.theta_u) {
            return bad("theta_u must lie in [0, 1]");
        }
        if !(self.intra_scale > 0.0 && self.inter_scale > 0.0) {
            return bad("variance scales must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub frame: u64,
    pub u: f64,
    pub intra_raw: f64,
    pub inter_raw: f64,
    pub triggered: bool,
}

pub fn intra_frame_variance(set: &CandidateSet) -> f64 {
    let k = set.candidates.len() as f64;
    let n = set.waypoint_count();
    let mut total = 0.0;
    for i in 0..n {
        let pts = set.candidates.iter().map(|c| c.waypoints()[i]);
        let mean = pts.clone().fold(Vec2::ZERO, |a, p| a + p) * (1.0 / k);
        let var: f64 = pts
            .map(|p| {
                let d = p - mean;
                d.x * d.x + d.y * d.y
            })
            .sum::<f64>()
            / k;
        total += var;
    }
    total / n as f64
}

pub fn mean_trajectory(set: &CandidateSet) -> Trajectory {
    let k = set.candidates.len() as f64;
    let waypoints = (0..set.waypoint_count())
        .map(|i| set.candidates.iter().fold(Vec2::ZERO, |a, c| a + c.waypoints()[i]) * (1.0 / k))
        .collect();
    // averages of valid trajectories stay finite and their steps stay bounded
    // by the largest candidate step
    Trajectory::with_max_step(waypoints, f64::INFINITY).expect("mean of valid candidates")
}

pub fn inter_frame_variance(prev_mean: &Trajectory, curr_mean: &Trajectory) -> Result<f64, UncertaintyError> {
    if prev_mean.len() != curr_mean.len() {
        return Err(UncertaintyError::MalformedCandidateSet(format!(
            "mean trajectories differ in length ({} vs {})",
            prev_mean.len(),
            curr_mean.len()
        )));
    }
    let sum: f64 = prev_mean
        .waypoints()
        .iter()
        .zip(curr_mean.waypoints())
        .map(|(a, b)| (*b - *a).norm_sq())
        .sum();
    Ok(sum / prev_mean.len() as f64)
}

/// Blends already-normalized intra/inter terms.
pub fn blend(intra_norm: f64, inter_norm: f64, cfg: &UncertaintyConfig) -> f64 {
    (cfg.alpha * intra_norm + cfg.beta * inter_norm) / (cfg.alpha + cfg.beta)
}

pub fn score(
    set: &CandidateSet,
    prev_mean: Option<&Trajectory>,
    cfg: &UncertaintyConfig,
) -> Result<UncertaintyScore, UncertaintyError> {
    let intra_raw = intra_frame_variance(set);
    let inter_raw = match prev_mean {
        Some(prev) => inter_frame_variance(prev, &mean_trajectory(set))?,
        None => 0.0,
    };
    let intra_n = (intra_raw / cfg.intra_scale).clamp(0.0, 1.0);
    let inter_n = (inter_raw / cfg.inter_scale).clamp(0.0, 1.0);
    let u = blend(intra_n, inter_n, cfg).clamp(0.0, 1.0);
    Ok(UncertaintyScore {
        frame: set.frame_index,
        u,
        intra_raw,
        inter_raw,
        triggered: u > cfg.theta_u,
    })
}

pub fn first_trigger(scores: &[UncertaintyScore]) -> Option<u64> {
    scores.iter().find(|s| s.triggered).map(|s| s.frame)
}

/// Per-episode scorer that carries the previous frame's mean trajectory.
#[derive(Debug, Clone, Default)]
pub struct UncertaintyTracker {
    prev_mean: Option<Trajectory>,
}

impl UncertaintyTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(
        &mut self,
        set: &CandidateSet,
        cfg: &UncertaintyConfig,
    ) -> Result<UncertaintyScore, UncertaintyError> {
        let prev = self.prev_mean.as_ref().filter(|p| p.len() == set.waypoint_count());
        let s = score(set, prev, cfg)?;
        self.prev_mean = Some(mean_trajectory(set));
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(dx: f64, dy: f64, n: usize) -> Trajectory {
        Trajectory::new((0..n).map(|i| Vec2::new(dx, dy + i as f64)).collect()).unwrap()
    }

    fn set(cands: Vec<Trajectory>) -> CandidateSet {
        CandidateSet::new(0, cands).unwrap()
    }

    #[test]
    fn identical_candidates_have_zero_spread() {
        let s = set(vec![straight(0.0, 0.0, 5); 4]);
        assert_eq!(intra_frame_variance(&s), 0.0);
        assert_eq!(intra_frame_variance(&set(vec![straight(1.0, 2.0, 3)])), 0.0);
    }

    #[test]
    fn lateral_offset_of_two_meters_gives_unit_variance() {
        let s = set(vec![straight(-1.0, 0.0, 6), straight(1.0, 0.0, 6)]);
        assert!((intra_frame_variance(&s) - 1.0).abs() < 1e-12);
        let m = mean_trajectory(&s);
        assert!(m.waypoints().iter().all(|p| p.x.abs() < 1e-12));
    }

    #[test]
    fn mean_of_points() {
        let s = set(vec![
            Trajectory::from_points(&[(0.0, 0.0)]).unwrap(),
            Trajectory::from_points(&[(0.0, 2.0)]).unwrap(),
            Trajectory::from_points(&[(0.0, 4.0)]).unwrap(),
        ]);
        assert_eq!(mean_trajectory(&s).waypoints(), &[Vec2::new(0.0, 2.0)]);
        let single = set(vec![straight(0.3, 0.1, 4)]);
        assert_eq!(mean_trajectory(&single), straight(0.3, 0.1, 4));
    }

    #[test]
    fn inter_frame_examples() {
        let a = straight(0.0, 0.0, 5);
        assert_eq!(inter_frame_variance(&a, &a).unwrap(), 0.0);
        assert!((inter_frame_variance(&a, &straight(0.0, 1.0, 5)).unwrap() - 1.0).abs() < 1e-12);
        assert!((inter_frame_variance(&a, &straight(3.0, 4.0, 5)).unwrap() - 25.0).abs() < 1e-12);
        assert!(inter_frame_variance(&a, &straight(0.0, 0.0, 4)).is_err());
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(CandidateSet::new(0, vec![straight(0.0, 0.0, 3), straight(0.0, 0.0, 4)]).is_err());
        assert!(CandidateSet::new(0, vec![]).is_err());
    }

    #[test]
    fn score_examples() {
        let cfg = UncertaintyConfig::default();
        let s = score(&set(vec![straight(0.0, 0.0, 5); 3]), None, &cfg).unwrap();
        assert_eq!(s.u, 0.0);
        assert!(!s.triggered);

        assert!((blend(1.0, 0.0, &cfg) - 0.5).abs() < 1e-12);

        let cfg0 = UncertaintyConfig {
            alpha: 0.0,
            ..cfg.clone()
        };
        let spread = set(vec![straight(-3.0, 0.0, 5), straight(3.0, 0.0, 5)]);
        let prev = straight(0.0, -1.0, 5);
        let s = score(&spread, Some(&prev), &cfg0).unwrap();
        assert!((s.u - (1.0f64 / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn first_trigger_is_strict() {
        let cfg = UncertaintyConfig::default();
        let mk = |frame: u64, u: f64| UncertaintyScore {
            frame,
            u,
            intra_raw: 0.0,
            inter_raw: 0.0,
            triggered: u > cfg.theta_u,
        };
        assert_eq!(first_trigger(&[mk(0, 0.0), mk(1, 0.0)]), None);
        assert_eq!(first_trigger(&[mk(3, 0.2), mk(4, 0.6), mk(5, 0.9)]), Some(4));
        assert_eq!(first_trigger(&[mk(0, 0.5)]), None);
    }

    #[test]
    fn config_validation() {
        assert!(UncertaintyConfig::default().validate().is_ok());
        let c = UncertaintyConfig {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
