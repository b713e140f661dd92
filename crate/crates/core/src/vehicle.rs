//! Kinematic bicycle model and the command interface shared by every driver
//! of the ego vehicle (autonomy, primitives, live human input).

use serde::{Deserialize, Serialize};

use crate::geometry::{Obb, Pose, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec2,
    /// Radians, counter-clockwise from world `+x`.
    pub heading: f64,
    pub speed: f64,
    #[serde(default = "default_wheelbase")]
    pub wheelbase: f64,
    /// (half length, half width)
    #[serde(default = "default_half_extents")]
    pub half_extents: Vec2,
}

fn default_wheelbase() -> f64 {
    2.7
}

fn default_half_extents() -> Vec2 {
    Vec2::new(2.3, 0.95)
}

impl VehicleState {
    pub fn new(position: Vec2, heading: f64, speed: f64) -> Self {
        Self {
            position,
            heading,
            speed,
            wheelbase: default_wheelbase(),
            half_extents: default_half_extents(),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.heading)
    }

    pub fn footprint(&self) -> Obb {
        Obb::new(self.position, self.heading, self.half_extents)
    }

    pub fn is_valid(&self) -> bool {
        self.position.is_finite()
            && self.heading.is_finite()
            && self.speed.is_finite()
            && self.speed >= 0.0
            && self.wheelbase > 0.0
            && self.half_extents.x > 0.0
            && self.half_extents.y > 0.0
    }
}

/// Normalized actuator command. Steering is positive to the right.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub steering: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl ControlCommand {
    pub fn clamped(self) -> Self {
        Self {
            steering: self.steering.clamp(-1.0, 1.0),
            throttle: self.throttle.clamp(0.0, 1.0),
            brake: self.brake.clamp(0.0, 1.0),
        }
    }

    pub fn full_brake() -> Self {
        Self {
            steering: 0.0,
            throttle: 0.0,
            brake: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Road-wheel angle at full steering deflection, radians.
    pub max_steer: f64,
    /// Acceleration at full throttle, m/s^2.
    pub max_accel: f64,
    /// Deceleration at full brake, m/s^2.
    pub max_decel: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            max_steer: 0.6,
            max_accel: 3.0,
            max_decel: 8.0,
        }
    }
}

impl VehicleParams {
    pub fn acceleration(&self, cmd: &ControlCommand) -> f64 {
        cmd.throttle * self.max_accel - cmd.brake * self.max_decel
    }

    /// Time for a full brake to stop from `speed`.
    pub fn stop_time(&self, speed: f64) -> f64 {
        speed / self.max_decel
    }
}

/// One forward-Euler step of the kinematic bicycle model.
pub fn step_vehicle(state: &VehicleState, cmd: &ControlCommand, params: &VehicleParams, dt: f64) -> VehicleState {
    let cmd = cmd.clamped();
    // positive steering turns clockwise, i.e. decreases heading
    let delta = -cmd.steering * params.max_steer;
    let v = state.speed;
    let mut next = *state;
    next.position = state.position + Vec2::from_heading(state.heading) * (v * dt);
    next.heading = state.heading + v / state.wheelbase * delta.tan() * dt;
    next.speed = (v + params.acceleration(&cmd) * dt).max(0.0);
    next
}
