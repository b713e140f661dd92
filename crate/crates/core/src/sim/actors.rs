//! Scripted traffic participants. Actor motion is a pure function of the
//! tick, so any world state can be rebuilt without replaying history.

use serde::{Deserialize, Serialize};

use crate::geometry::{Obb, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Vehicle,
    Pedestrian,
    ConeOrSign,
    OpenDoor,
    EmergencyVehicle,
    Barrier,
}

impl ActorKind {
    pub const ALL: [ActorKind; 6] = [
        ActorKind::Vehicle,
        ActorKind::Pedestrian,
        ActorKind::ConeOrSign,
        ActorKind::OpenDoor,
        ActorKind::EmergencyVehicle,
        ActorKind::Barrier,
    ];

    pub fn describe(self) -> &'static str {
        match self {
            ActorKind::Vehicle => "vehicle",
            ActorKind::Pedestrian => "pedestrian",
            ActorKind::ConeOrSign => "traffic cone or sign",
            ActorKind::OpenDoor => "open car door",
            ActorKind::EmergencyVehicle => "emergency vehicle",
            ActorKind::Barrier => "barrier",
        }
    }

    pub fn from_description(text: &str) -> Option<ActorKind> {
        ActorKind::ALL.into_iter().find(|k| k.describe() == text)
    }
}

/// One timed pose of a waypoint-scripted actor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub tick: u64,
    pub position: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Behavior {
    Static,
    /// Moves at a fixed world velocity from its initial position.
    ConstantVelocity {
        velocity: Vec2,
    },
    /// Piecewise-linear motion through keyframes; holds the first pose
    /// before the first keyframe and the last pose after the last one.
    Waypoints {
        keyframes: Vec<Keyframe>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub id: String,
    pub kind: ActorKind,
    pub position: Vec2,
    #[serde(default)]
    pub heading_deg: f64,
    /// (half length, half width)
    pub half_extents: Vec2,
    #[serde(default = "static_behavior")]
    pub behavior: Behavior,
    #[serde(default)]
    pub spawn_tick: Option<u64>,
    #[serde(default)]
    pub despawn_tick: Option<u64>,
}

fn static_behavior() -> Behavior {
    Behavior::Static
}

/// Actor pose and velocity at one tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActorState {
    pub id: String,
    pub kind: ActorKind,
    pub position: Vec2,
    pub heading: f64,
    pub velocity: Vec2,
    pub half_extents: Vec2,
}

impl ActorState {
    pub fn footprint(&self) -> Obb {
        Obb::new(self.position, self.heading, self.half_extents)
    }
}

impl ActorSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("actor id must not be empty".into());
        }
        if !(self.half_extents.x > 0.0 && self.half_extents.y > 0.0) {
            return Err(format!("actor {}: half extents must be positive", self.id));
        }
        if !self.position.is_finite() || !self.heading_deg.is_finite() {
            return Err(format!("actor {}: non-finite pose", self.id));
        }
        if let Behavior::Waypoints { keyframes } = &self.behavior {
            if keyframes.is_empty() {
                return Err(format!("actor {}: waypoint behavior needs keyframes", self.id));
            }
            if keyframes.windows(2).any(|w| w[1].tick <= w[0].tick) {
                return Err(format!("actor {}: keyframe ticks must increase", self.id));
            }
        }
        if let (Some(a), Some(b)) = (self.spawn_tick, self.despawn_tick) {
            if b <= a {
                return Err(format!("actor {}: despawn_tick must follow spawn_tick", self.id));
            }
        }
        Ok(())
    }

    pub fn is_present(&self, tick: u64) -> bool {
        self.spawn_tick.is_none_or(|s| tick >= s) && self.despawn_tick.is_none_or(|d| tick < d)
    }

    /// State at `tick`, or `None` when the actor is not present.
    pub fn state_at(&self, tick: u64, dt: f64) -> Option<ActorState> {
        if !self.is_present(tick) {
            return None;
        }
        let fixed_heading = self.heading_deg.to_radians();
        let (position, velocity) = match &self.behavior {
            Behavior::Static => (self.position, Vec2::ZERO),
            Behavior::ConstantVelocity { velocity } => (self.position + *velocity * (tick as f64 * dt), *velocity),
            Behavior::Waypoints { keyframes } => keyframe_state(keyframes, tick, dt),
        };
        let heading = if velocity.norm() > 1e-6 {
            velocity.y.atan2(velocity.x)
        } else {
            fixed_heading
        };
        Some(ActorState {
            id: self.id.clone(),
            kind: self.kind,
            position,
            heading,
            velocity,
            half_extents: self.half_extents,
        })
    }
}

fn keyframe_state(keyframes: &[Keyframe], tick: u64, dt: f64) -> (Vec2, Vec2) {
    let first = keyframes[0];
    let last = keyframes[keyframes.len() - 1];
    if tick <= first.tick {
        return (first.position, Vec2::ZERO);
    }
    if tick >= last.tick {
        return (last.position, Vec2::ZERO);
    }
    let seg = keyframes
        .windows(2)
        .find(|w| tick < w[1].tick)
        .expect("tick lies inside the keyframe span");
    let (a, b) = (seg[0], seg[1]);
    let span = (b.tick - a.tick) as f64;
    let t = (tick - a.tick) as f64 / span;
    let velocity = (b.position - a.position) * (1.0 / (span * dt));
    (a.position.lerp(b.position, t), velocity)
}
