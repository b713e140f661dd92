use serde::{Deserialize, Serialize};

use crate::abstraction::PlanLabel;
use crate::geometry::Vec2;
use crate::vehicle::VehicleState;

/// Goal-directed maneuver template instantiated from a plan label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub label: PlanLabel,
    /// Goal in the ego frame at instantiation (lateral right, longitudinal ahead).
    pub goal_offset: Vec2,
    pub target_speed: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrimitiveCatalog {
    pub forward_distance: f64,
    pub slow_distance: f64,
    pub slow_speed_factor: f64,
    pub stop_min_distance: f64,
    /// Stop goal distance per m/s of current speed.
    pub stop_distance_per_mps: f64,
    pub lane_change_distance: f64,
    pub lane_width: f64,
    pub turn_lateral: f64,
    pub turn_forward: f64,
    pub turn_speed: f64,
    /// Floor for "keep speed" targets so a primitive issued at rest still moves.
    pub min_speed: f64,
    /// How long a stop is held before control returns to autonomy.
    pub stop_hold_s: f64,
    /// Upper bound on any moving maneuver.
    pub maneuver_timeout_s: f64,
}

impl Default for PrimitiveCatalog {
    fn default() -> Self {
        Self {
            forward_distance: 20.0,
            slow_distance: 10.0,
            slow_speed_factor: 0.5,
            stop_min_distance: 3.0,
            stop_distance_per_mps: 2.0,
            lane_change_distance: 15.0,
            lane_width: 3.5,
            turn_lateral: 8.0,
            turn_forward: 8.0,
            turn_speed: 5.0,
            min_speed: 3.0,
            stop_hold_s: 4.0,
            maneuver_timeout_s: 6.0,
        }
    }
}

impl PrimitiveCatalog {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("forward_distance", self.forward_distance),
            ("slow_distance", self.slow_distance),
            ("stop_min_distance", self.stop_min_distance),
            ("lane_change_distance", self.lane_change_distance),
            ("lane_width", self.lane_width),
            ("turn_forward", self.turn_forward),
            ("stop_hold_s", self.stop_hold_s),
            ("maneuver_timeout_s", self.maneuver_timeout_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("primitive catalog: {name} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.slow_speed_factor) {
            return Err("primitive catalog: slow_speed_factor must lie in [0, 1]".into());
        }
        Ok(())
    }
}

pub fn primitive_goal(label: PlanLabel, ego: &VehicleState, cfg: &PrimitiveCatalog) -> PrimitiveSpec {
    let keep = ego.speed.max(cfg.min_speed);
    let (goal_offset, target_speed, duration_s) = match label {
        PlanLabel::DriveForward => (Vec2::new(0.0, cfg.forward_distance), keep, cfg.maneuver_timeout_s),
        PlanLabel::SlowDown => (
            Vec2::new(0.0, cfg.slow_distance),
            ego.speed * cfg.slow_speed_factor,
            cfg.maneuver_timeout_s,
        ),
        PlanLabel::Stop => (
            Vec2::new(0.0, (cfg.stop_distance_per_mps * ego.speed).max(cfg.stop_min_distance)),
            0.0,
            cfg.stop_hold_s,
        ),
        PlanLabel::LaneChangeLeft => (
            Vec2::new(-cfg.lane_width, cfg.lane_change_distance),
            keep,
            cfg.maneuver_timeout_s,
        ),
        PlanLabel::LaneChangeRight => (
            Vec2::new(cfg.lane_width, cfg.lane_change_distance),
            keep,
            cfg.maneuver_timeout_s,
        ),
        PlanLabel::TurnLeft => (
            Vec2::new(-cfg.turn_lateral, cfg.turn_forward),
            cfg.turn_speed,
            cfg.maneuver_timeout_s,
        ),
        PlanLabel::TurnRight => (
            Vec2::new(cfg.turn_lateral, cfg.turn_forward),
            cfg.turn_speed,
            cfg.maneuver_timeout_s,
        ),
    };
    PrimitiveSpec {
        label,
        goal_offset,
        target_speed,
        duration_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ego(speed: f64) -> VehicleState {
        VehicleState::new(Vec2::ZERO, std::f64::consts::FRAC_PI_2, speed)
    }

    #[test]
    fn catalog_examples() {
        let cfg = PrimitiveCatalog::default();
        let stop = primitive_goal(PlanLabel::Stop, &ego(0.0), &cfg);
        assert_eq!(stop.goal_offset, Vec2::new(0.0, 3.0));
        assert_eq!(stop.target_speed, 0.0);
        let stop_fast = primitive_goal(PlanLabel::Stop, &ego(8.0), &cfg);
        assert_eq!(stop_fast.goal_offset.y, 16.0);
        let lcl = primitive_goal(PlanLabel::LaneChangeLeft, &ego(8.0), &cfg);
        assert_eq!(lcl.goal_offset, Vec2::new(-3.5, 15.0));
        assert_eq!(lcl.target_speed, 8.0);
        let fwd = primitive_goal(PlanLabel::DriveForward, &ego(8.0), &cfg);
        assert_eq!(fwd.goal_offset.y, 20.0);
        let slow = primitive_goal(PlanLabel::SlowDown, &ego(8.0), &cfg);
        assert_eq!(slow.target_speed, 4.0);
        let tr = primitive_goal(PlanLabel::TurnRight, &ego(8.0), &cfg);
        assert_eq!(tr.goal_offset, Vec2::new(8.0, 8.0));
        assert_eq!(tr.target_speed, 5.0);
    }

    #[test]
    fn durations_positive_and_stop_is_stationary() {
        let cfg = PrimitiveCatalog::default();
        for l in PlanLabel::ALL {
            let s = primitive_goal(l, &ego(6.0), &cfg);
            assert!(s.duration_s > 0.0);
            if l == PlanLabel::Stop {
                assert_eq!(s.target_speed, 0.0);
            }
        }
    }
}
