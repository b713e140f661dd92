//! Closed-loop simulation: collision checks, scene snapshots, route
//! progress, the scripted autonomy stack and the episode runner.

pub mod actors;
pub mod autonomy;
pub mod episode;

use serde::{Deserialize, Serialize};

use crate::arbitration::{SceneObject, SceneSnapshot};
use crate::geometry::Vec2;
use crate::road::Road;
use crate::vehicle::VehicleState;

use actors::ActorState;

pub use autonomy::{AutonomyConfig, AutonomyOutput, AutonomyPolicy};
pub use episode::{
    correctness_oracle, parse_event_log, run_episode, DecisionRecord, EndReason, Episode, EpisodeEvent, EpisodeOptions,
    EpisodeResult, HumanControls, HumanEvent, HumanProposal, Mode, ReplaySpec, SimConfig,
};

/// Id reported when the ego leaves the drivable surface.
pub const ROAD_BOUNDARY_ID: &str = "road_boundary";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub actor_id: String,
    pub penetration: f64,
}

/// First actor (in scenario order) whose footprint strictly overlaps the ego.
pub fn detect_collision(ego: &VehicleState, actors: &[ActorState]) -> Option<Collision> {
    let fp = ego.footprint();
    actors.iter().find_map(|a| {
        fp.penetration(&a.footprint()).map(|penetration| Collision {
            actor_id: a.id.clone(),
            penetration,
        })
    })
}

/// Actor collision, else a road-boundary collision when the ego's center
/// has left every lane.
pub fn check_world(ego: &VehicleState, actors: &[ActorState], road: &Road) -> Option<Collision> {
    detect_collision(ego, actors).or_else(|| {
        (!road.on_road(ego.position)).then(|| Collision {
            actor_id: ROAD_BOUNDARY_ID.to_string(),
            penetration: 0.0,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    pub range_ahead: f64,
    pub range_behind: f64,
    pub blackout_visibility: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            range_ahead: 60.0,
            range_behind: 20.0,
            blackout_visibility: 0.1,
        }
    }
}

/// Ego-frame object description of `actor`. Extents are re-expressed
/// along the ego axes: `x` is the half length ahead, `y` the half width.
pub fn observe(actor: &ActorState, ego: &VehicleState, road: &Road, ego_lane: usize) -> SceneObject {
    let pose = ego.pose();
    let fp = actor.footprint();
    SceneObject {
        kind: actor.kind,
        position: pose.to_ego(actor.position),
        velocity: pose.vector_to_ego(actor.velocity),
        lane_offset: road.lane_offset(ego_lane, actor.position),
        half_extents: Vec2::new(fp.radius_on(pose.forward()), fp.radius_on(pose.right())),
    }
}

/// Structured stand-in for a camera frame.
pub fn snapshot_scene(
    road: &Road,
    ego: &VehicleState,
    actors: &[ActorState],
    timestamp: f64,
    blackout: bool,
    cfg: &PerceptionConfig,
) -> SceneSnapshot {
    let (ego_lane, _) = road.nearest_lane(ego.position);
    let objects = if blackout {
        Vec::new()
    } else {
        actors
            .iter()
            .map(|a| observe(a, ego, road, ego_lane))
            .filter(|o| {
                o.position.y + o.half_extents.x >= -cfg.range_behind
                    && o.position.y - o.half_extents.x <= cfg.range_ahead
            })
            .collect()
    };
    SceneSnapshot {
        timestamp,
        objects,
        ego_lane,
        lane_count: road.lanes.len(),
        lane_width: road.lane_width(ego_lane),
        lane_markings: road.markings.clone(),
        visibility: if blackout { cfg.blackout_visibility } else { 1.0 },
    }
}

/// Ordered gates; each counts once the ego comes within `radius` of it,
/// and only after every earlier gate.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteTracker {
    gates: Vec<Vec2>,
    radius: f64,
    passed: usize,
}

impl RouteTracker {
    pub fn new(gates: Vec<Vec2>, radius: f64) -> Self {
        assert!(!gates.is_empty(), "route needs gates");
        Self {
            gates,
            radius,
            passed: 0,
        }
    }

    pub fn update(&mut self, position: Vec2) -> f64 {
        while self.passed < self.gates.len() && self.gates[self.passed].distance(position) <= self.radius {
            self.passed += 1;
        }
        self.completion()
    }

    pub fn completion(&self) -> f64 {
        self.passed as f64 / self.gates.len() as f64
    }

    pub fn passed(&self) -> usize {
        self.passed
    }

    pub fn is_complete(&self) -> bool {
        self.passed == self.gates.len()
    }

    pub fn next_gate(&self) -> Option<Vec2> {
        self.gates.get(self.passed).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::{Lane, LaneDirection, LaneMarking};
    use crate::sim::actors::ActorKind;
    use std::f64::consts::FRAC_PI_2;

    fn road() -> Road {
        let lane = |x: f64| Lane {
            centerline: vec![Vec2::new(x, -50.0), Vec2::new(x, 300.0)],
            width: 3.5,
            direction: LaneDirection::Forward,
        };
        Road {
            lanes: vec![lane(-1.75), lane(1.75)],
            markings: vec![
                LaneMarking::SolidWhite,
                LaneMarking::DashedWhite,
                LaneMarking::SolidWhite,
            ],
        }
    }

    fn actor(id: &str, x: f64, y: f64) -> ActorState {
        ActorState {
            id: id.into(),
            kind: ActorKind::Vehicle,
            position: Vec2::new(x, y),
            heading: FRAC_PI_2,
            velocity: Vec2::ZERO,
            half_extents: Vec2::new(2.3, 0.95),
        }
    }

    fn ego() -> VehicleState {
        VehicleState::new(Vec2::new(1.75, 0.0), FRAC_PI_2, 8.0)
    }

    #[test]
    fn collision_cases() {
        assert!(detect_collision(&ego(), &[actor("far", 1.75, 10.0)]).is_none());
        let c = detect_collision(&ego(), &[actor("far", 1.75, 30.0), actor("same", 1.75, 0.0)]).unwrap();
        assert_eq!(c.actor_id, "same");
        assert!((c.penetration - 1.9).abs() < 1e-9);
        // bumpers exactly touching
        assert!(detect_collision(&ego(), &[actor("touch", 1.75, 4.6)]).is_none());
    }

    #[test]
    fn leaving_the_road_is_a_collision() {
        let mut e = ego();
        e.position.x = 4.0;
        assert_eq!(check_world(&e, &[], &road()).unwrap().actor_id, ROAD_BOUNDARY_ID);
        assert!(check_world(&ego(), &[], &road()).is_none());
    }

    #[test]
    fn snapshot_range_and_blackout() {
        let cfg = PerceptionConfig::default();
        let actors = vec![
            actor("near", -1.75, 20.0),
            actor("far", 1.75, 100.0),
            actor("behind", 1.75, -30.0),
        ];
        let s = snapshot_scene(&road(), &ego(), &actors, 1.0, false, &cfg);
        assert_eq!(s.objects.len(), 1);
        assert_eq!(s.visibility, 1.0);
        assert_eq!(s.ego_lane, 1);
        let o = &s.objects[0];
        assert!((o.position.x + 3.5).abs() < 1e-9 && (o.position.y - 20.0).abs() < 1e-9);
        assert_eq!(o.lane_offset, Some(-1));
        assert!((o.half_extents.x - 2.3).abs() < 1e-9);
        let b = snapshot_scene(&road(), &ego(), &actors, 1.0, true, &cfg);
        assert!(b.objects.is_empty());
        assert_eq!(b.visibility, 0.1);
        let empty = snapshot_scene(&road(), &ego(), &[], 0.0, false, &cfg);
        assert!(empty.objects.is_empty() && empty.visibility == 1.0);
    }

    #[test]
    fn gates_pass_in_order() {
        let mut r = RouteTracker::new(vec![Vec2::new(0.0, 10.0), Vec2::new(0.0, 20.0)], 6.0);
        assert_eq!(r.update(Vec2::new(0.0, 20.0)), 0.0);
        assert_eq!(r.update(Vec2::new(0.0, 12.0)), 0.5);
        assert_eq!(r.update(Vec2::new(0.0, 18.0)), 1.0);
        assert!(r.is_complete());
    }
}
