//! Lateral and longitudinal PID tracking of a reference path.

use serde::{Deserialize, Serialize};

use crate::geometry::{point_at_station, project_onto_polyline, Vec2};
use crate::vehicle::{ControlCommand, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Absolute bound on the integral term's accumulator.
    pub integral_clamp: f64,
}

impl PidGains {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.kp >= 0.0 && self.ki >= 0.0 && self.kd >= 0.0) {
            return Err("PID gains must be non-negative".into());
        }
        if !(self.integral_clamp > 0.0) {
            return Err("integral clamp must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub lateral: PidGains,
    pub longitudinal: PidGains,
    /// Distance ahead of the closest reference point used for the lateral error.
    pub lookahead: f64,
    /// Above this speed the lateral output is scaled by `schedule_speed / v`,
    /// keeping the loop damped at highway speeds.
    pub schedule_speed: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lateral: PidGains {
                kp: 0.8,
                ki: 0.0,
                kd: 0.2,
                integral_clamp: 1.0,
            },
            longitudinal: PidGains {
                kp: 0.5,
                ki: 0.05,
                kd: 0.0,
                integral_clamp: 2.0,
            },
            lookahead: 5.0,
            schedule_speed: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pid {
    gains: PidGains,
    integral: f64,
    prev_error: Option<f64>,
}

impl Pid {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            integral: 0.0,
            prev_error: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
    }

    pub fn update(&mut self, error: f64, dt: f64) -> f64 {
        let clamp = self.gains.integral_clamp;
        self.integral = (self.integral + error * dt).clamp(-clamp, clamp);
        let derivative = match self.prev_error {
            Some(prev) => (error - prev) / dt,
            None => 0.0,
        };
        self.prev_error = Some(error);
        self.gains.kp * error + self.gains.ki * self.integral + self.gains.kd * derivative
    }
}

/// Signed lateral offset (positive right, ego frame) of the lookahead point.
pub fn cross_track_error(reference: &[Vec2], ego: &VehicleState, lookahead: f64) -> f64 {
    let proj = project_onto_polyline(reference, ego.position);
    let target = point_at_station(reference, proj.station + lookahead);
    ego.pose().to_ego(target).x
}

/// Stateful path tracker: lateral PID on the lookahead cross-track error,
/// longitudinal PID on the speed error.
#[derive(Debug, Clone)]
pub struct PathTracker {
    lateral: Pid,
    longitudinal: Pid,
    lookahead: f64,
    schedule_speed: f64,
}

impl PathTracker {
    pub fn new(cfg: &TrackerConfig) -> Self {
        Self {
            lateral: Pid::new(cfg.lateral),
            longitudinal: Pid::new(cfg.longitudinal),
            lookahead: cfg.lookahead,
            schedule_speed: cfg.schedule_speed,
        }
    }

    pub fn control(&mut self, reference: &[Vec2], target_speed: f64, ego: &VehicleState, dt: f64) -> ControlCommand {
        assert!(dt > 0.0, "dt must be positive");
        assert!(!reference.is_empty(), "reference must be non-empty");
        let lateral_error = cross_track_error(reference, ego, self.lookahead);
        let schedule = if ego.speed > self.schedule_speed {
            self.schedule_speed / ego.speed
        } else {
            1.0
        };
        let steering = self.lateral.update(lateral_error, dt) * schedule;
        let accel = self.longitudinal.update(target_speed - ego.speed, dt);
        ControlCommand {
            steering,
            throttle: accel.max(0.0),
            brake: (-accel).max(0.0),
        }
        .clamped()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{step_vehicle, VehicleParams};
    use std::f64::consts::FRAC_PI_2;

    fn straight_north() -> Vec<Vec2> {
        vec![Vec2::new(0.0, -10.0), Vec2::new(0.0, 500.0)]
    }

    #[test]
    fn zero_error_gives_zero_command() {
        let mut t = PathTracker::new(&TrackerConfig::default());
        let ego = VehicleState::new(Vec2::new(0.0, 0.0), FRAC_PI_2, 8.0);
        let cmd = t.control(&straight_north(), 8.0, &ego, 0.05);
        assert!(cmd.steering.abs() < 1e-12);
        assert_eq!(cmd.throttle, 0.0);
        assert_eq!(cmd.brake, 0.0);
    }

    #[test]
    fn left_of_path_steers_right() {
        let mut t = PathTracker::new(&TrackerConfig::default());
        let ego = VehicleState::new(Vec2::new(-1.0, 0.0), FRAC_PI_2, 8.0);
        assert!(t.control(&straight_north(), 8.0, &ego, 0.05).steering > 0.0);
    }

    #[test]
    fn overspeed_brakes() {
        let mut t = PathTracker::new(&TrackerConfig::default());
        let ego = VehicleState::new(Vec2::ZERO, FRAC_PI_2, 13.0);
        let cmd = t.control(&straight_north(), 8.0, &ego, 0.05);
        assert!(cmd.brake > 0.0);
        assert_eq!(cmd.throttle, 0.0);
    }

    #[test]
    fn integral_is_clamped() {
        let mut pid = Pid::new(PidGains {
            kp: 0.0,
            ki: 1.0,
            kd: 0.0,
            integral_clamp: 0.5,
        });
        let mut out = 0.0;
        for _ in 0..100 {
            out = pid.update(10.0, 0.1);
        }
        assert!((out - 0.5).abs() < 1e-12);
    }

    #[test]
    fn converges_from_lateral_offset() {
        let cfg = TrackerConfig::default();
        let params = VehicleParams::default();
        let mut t = PathTracker::new(&cfg);
        let mut ego = VehicleState::new(Vec2::new(2.0, 0.0), FRAC_PI_2, 8.0);
        let dt = 0.05;
        let mut converged_at = None;
        for k in 0..160 {
            let cmd = t.control(&straight_north(), 8.0, &ego, dt);
            ego = step_vehicle(&ego, &cmd, &params, dt);
            if ego.position.x.abs() < 0.2 && converged_at.is_none() {
                converged_at = Some(k);
            }
        }
        assert!(converged_at.is_some());
        assert!(ego.position.x.abs() < 0.2, "final offset {}", ego.position.x);
    }

    #[test]
    fn converges_across_speeds() {
        let params = VehicleParams::default();
        for speed in [3.0, 5.0, 12.0, 20.0] {
            let mut t = PathTracker::new(&TrackerConfig::default());
            let mut ego = VehicleState::new(Vec2::new(2.0, 0.0), FRAC_PI_2, speed);
            for _ in 0..160 {
                let mut cmd = t.control(&straight_north(), speed, &ego, 0.05);
                cmd.throttle = 0.0;
                cmd.brake = 0.0;
                ego = step_vehicle(&ego, &cmd, &params, 0.05);
            }
            assert!(ego.position.x.abs() < 0.2, "speed {speed}: offset {}", ego.position.x);
        }
    }

    #[test]
    fn reaches_target_speed_from_rest() {
        let cfg = TrackerConfig::default();
        let params = VehicleParams::default();
        let mut t = PathTracker::new(&cfg);
        let mut ego = VehicleState::new(Vec2::ZERO, FRAC_PI_2, 0.0);
        for _ in 0..120 {
            let cmd = t.control(&straight_north(), 8.0, &ego, 0.05);
            ego = step_vehicle(&ego, &cmd, &params, 0.05);
        }
        assert!((ego.speed - 8.0).abs() <= 0.3, "speed {}", ego.speed);
    }
}
