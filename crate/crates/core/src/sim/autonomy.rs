//! Scripted autonomous stack: pure-pursuit lane following, IDM speed
//! control against perceived traffic, and a candidate set for the
//! uncertainty module.
//!
//! The stack never overtakes on its own. It returns to the route lane
//! once that lane is clear, it perceives only object classes it was
//! built for, and it reacts only to objects already inside its corridor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::abstraction::{classify_plan, summarize_plan, AbstractionConfig, PlanLabel, Trajectory};
use crate::geometry::{point_at_station, Obb, Vec2};
use crate::road::Road;
use crate::uncertainty::CandidateSet;
use crate::vehicle::{step_vehicle, ControlCommand, VehicleParams, VehicleState};

use super::actors::{ActorKind, ActorState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutonomyConfig {
    /// Candidate trajectories per tick, nominal included.
    pub candidates: usize,
    pub horizon_waypoints: usize,
    pub waypoint_spacing_s: f64,
    /// Lateral random-walk step of the perturbed candidates, meters.
    pub sigma_nominal: f64,
    pub sigma_scatter: f64,
    pub lookahead_min: f64,
    pub lookahead_time: f64,
    pub idm_max_accel: f64,
    pub idm_comfort_decel: f64,
    pub idm_headway_s: f64,
    pub idm_min_gap: f64,
    /// Lateral clearance added on both sides of the ego corridor.
    pub corridor_margin: f64,
    pub perception_range: f64,
    /// Route-lane window that must be free before merging back, meters
    /// behind and ahead of the ego.
    pub merge_clear_behind: f64,
    pub merge_clear_ahead: f64,
    /// Deceleration while frozen, m/s^2.
    pub freeze_decel: f64,
}

impl Default for AutonomyConfig {
    fn default() -> Self {
        Self {
            candidates: 6,
            horizon_waypoints: 10,
            waypoint_spacing_s: 0.2,
            sigma_nominal: 0.05,
            sigma_scatter: 1.0,
            lookahead_min: 6.0,
            lookahead_time: 0.8,
            idm_max_accel: 2.0,
            idm_comfort_decel: 3.0,
            idm_headway_s: 1.2,
            idm_min_gap: 4.0,
            corridor_margin: 0.3,
            perception_range: 60.0,
            merge_clear_behind: 10.0,
            merge_clear_ahead: 30.0,
            freeze_decel: 4.0,
        }
    }
}

impl AutonomyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.candidates < 2 {
            return Err("autonomy: at least 2 candidates are needed for a spread".into());
        }
        if self.horizon_waypoints == 0 || !(self.waypoint_spacing_s > 0.0) {
            return Err("autonomy: horizon must be non-empty".into());
        }
        if !(self.sigma_nominal >= 0.0 && self.sigma_scatter >= 0.0) {
            return Err("autonomy: sigmas must be non-negative".into());
        }
        if !(self.idm_max_accel > 0.0 && self.idm_comfort_decel > 0.0 && self.lookahead_min > 0.0) {
            return Err("autonomy: IDM accelerations and lookahead must be positive".into());
        }
        Ok(())
    }
}

/// Everything the stack sees at one tick.
#[derive(Debug, Clone, Copy)]
pub struct AutonomyInput<'a> {
    pub road: &'a Road,
    pub route_lane: usize,
    pub cruise_speed: f64,
    pub ego: &'a VehicleState,
    /// Ground-truth actors; perception filtering happens inside.
    pub actors: &'a [ActorState],
    pub blackout: bool,
    pub frozen: bool,
    pub scatter: bool,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutonomyOutput {
    pub command: ControlCommand,
    /// Ego-frame nominal plan.
    pub nominal: Trajectory,
    pub candidates: CandidateSet,
    pub plan: PlanLabel,
    pub target_lane: usize,
}

/// Classes the perception stack was trained on.
pub fn is_recognized(kind: ActorKind) -> bool {
    !matches!(kind, ActorKind::OpenDoor | ActorKind::ConeOrSign)
}

#[derive(Debug, Clone)]
pub struct AutonomyPolicy {
    cfg: AutonomyConfig,
    vehicle: VehicleParams,
    abstraction: AbstractionConfig,
    dt: f64,
    seed: u64,
}

struct Lead {
    gap: f64,
    speed: f64,
}

impl AutonomyPolicy {
    pub fn new(
        cfg: AutonomyConfig,
        vehicle: VehicleParams,
        abstraction: AbstractionConfig,
        dt: f64,
        seed: u64,
    ) -> Self {
        Self {
            cfg,
            vehicle,
            abstraction,
            dt,
            seed,
        }
    }

    pub fn config(&self) -> &AutonomyConfig {
        &self.cfg
    }

    /// Route lane when it is free around the ego, else the current lane.
    pub fn target_lane(&self, road: &Road, route_lane: usize, ego: &VehicleState, actors: &[ActorState]) -> usize {
        let (current, _) = road.nearest_lane(ego.position);
        if current == route_lane {
            return route_lane;
        }
        let s_ego = road.project(route_lane, ego.position).station;
        let half_width = road.lane_width(route_lane) / 2.0;
        let occupied = actors.iter().any(|a| {
            let p = road.project(route_lane, a.position);
            let fp = a.footprint();
            let lateral_extent = fp.radius_on(p.tangent.right_perp());
            let along_extent = fp.radius_on(p.tangent);
            p.lateral.abs() < half_width + lateral_extent
                && p.station + along_extent >= s_ego - self.cfg.merge_clear_behind
                && p.station - along_extent <= s_ego + self.cfg.merge_clear_ahead
        });
        if occupied {
            current
        } else {
            route_lane
        }
    }

    fn lead(&self, ego: &VehicleState, actors: &[ActorState]) -> Option<Lead> {
        let pose = ego.pose();
        let range = self.cfg.perception_range + ego.half_extents.x;
        let corridor = Obb::new(
            pose.to_world(Vec2::new(0.0, range / 2.0)),
            ego.heading,
            Vec2::new(range / 2.0, ego.half_extents.y + self.cfg.corridor_margin),
        );
        actors
            .iter()
            .filter(|a| corridor.penetration(&a.footprint()).is_some())
            .map(|a| Lead {
                gap: pose.to_ego(a.position).y - a.footprint().radius_on(pose.forward()) - ego.half_extents.x,
                speed: a.velocity.dot(pose.forward()),
            })
            .min_by(|a, b| a.gap.total_cmp(&b.gap))
    }

    fn idm(&self, v: f64, v0: f64, lead: Option<&Lead>) -> f64 {
        let c = &self.cfg;
        let free = 1.0 - (v / v0.max(0.1)).powi(4);
        let a = match lead {
            None => c.idm_max_accel * free,
            Some(l) if l.gap <= 0.1 => -self.vehicle.max_decel,
            Some(l) => {
                let dv = v - l.speed;
                let s_star = c.idm_min_gap
                    + (v * c.idm_headway_s + v * dv / (2.0 * (c.idm_max_accel * c.idm_comfort_decel).sqrt())).max(0.0);
                c.idm_max_accel * (free - (s_star / l.gap).powi(2))
            }
        };
        a.clamp(-self.vehicle.max_decel, self.vehicle.max_accel)
    }

    fn pursuit_steering(&self, road: &Road, lane: usize, ego: &VehicleState) -> f64 {
        let ld = (self.cfg.lookahead_time * ego.speed).max(self.cfg.lookahead_min);
        let line = &road.lanes[lane].centerline;
        let s = road.project(lane, ego.position).station;
        let target = ego.pose().to_ego(point_at_station(line, s + ld));
        let dist_sq = target.norm_sq().max(1e-6);
        let curvature = 2.0 * target.x / dist_sq;
        (ego.wheelbase * curvature).atan() / self.vehicle.max_steer
    }

    fn command(
        &self,
        input: &AutonomyInput<'_>,
        ego: &VehicleState,
        perceived: &[ActorState],
        lane: usize,
    ) -> ControlCommand {
        if input.frozen {
            return ControlCommand {
                steering: 0.0,
                throttle: 0.0,
                brake: self.cfg.freeze_decel / self.vehicle.max_decel,
            }
            .clamped();
        }
        let steering = self.pursuit_steering(input.road, lane, ego);
        let accel = self.idm(ego.speed, input.cruise_speed, self.lead(ego, perceived).as_ref());
        ControlCommand {
            steering,
            throttle: (accel / self.vehicle.max_accel).max(0.0),
            brake: (-accel / self.vehicle.max_decel).max(0.0),
        }
        .clamped()
    }

    fn perceived(&self, input: &AutonomyInput<'_>) -> Vec<ActorState> {
        if input.blackout {
            return Vec::new();
        }
        input.actors.iter().filter(|a| is_recognized(a.kind)).cloned().collect()
    }

    fn rollout(&self, input: &AutonomyInput<'_>, perceived: &[ActorState], lane: usize) -> Vec<Vec2> {
        let n = self.cfg.horizon_waypoints;
        if input.frozen {
            return vec![Vec2::ZERO; n];
        }
        let steps_per_wp = (self.cfg.waypoint_spacing_s / self.dt).round().max(1.0) as usize;
        let pose = input.ego.pose();
        let mut ego = *input.ego;
        let mut predicted: Vec<ActorState> = perceived.to_vec();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..steps_per_wp {
                let cmd = self.command(input, &ego, &predicted, lane);
                ego = step_vehicle(&ego, &cmd, &self.vehicle, self.dt);
                for a in &mut predicted {
                    a.position = a.position + a.velocity * self.dt;
                }
            }
            out.push(pose.to_ego(ego.position));
        }
        out
    }

    fn candidates(&self, nominal: &[Vec2], scatter: bool, tick: u64) -> Vec<Trajectory> {
        let sigma = if scatter {
            self.cfg.sigma_scatter
        } else {
            self.cfg.sigma_nominal
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(tick);
        let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
        let mut out = vec![Trajectory::with_max_step(nominal.to_vec(), f64::INFINITY).expect("finite rollout")];
        for _ in 1..self.cfg.candidates {
            let mut offset = 0.0;
            let pts = nominal
                .iter()
                .map(|p| {
                    let step: f64 = if sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                    offset += step.clamp(-3.0 * sigma, 3.0 * sigma);
                    Vec2::new(p.x + offset, p.y)
                })
                .collect();
            out.push(Trajectory::with_max_step(pts, f64::INFINITY).expect("finite rollout"));
        }
        out
    }

    pub fn plan(&self, input: &AutonomyInput<'_>) -> AutonomyOutput {
        let lane = self.target_lane(input.road, input.route_lane, input.ego, input.actors);
        let perceived = self.perceived(input);
        let command = self.command(input, input.ego, &perceived, lane);
        let nominal_pts = self.rollout(input, &perceived, lane);
        let nominal = Trajectory::with_max_step(nominal_pts.clone(), f64::INFINITY).expect("finite rollout");
        let plan = classify_plan(&summarize_plan(&nominal), &self.abstraction);
        let candidates = CandidateSet::new(input.tick, self.candidates(&nominal_pts, input.scatter, input.tick))
            .expect("equal-length candidates");
        AutonomyOutput {
            command,
            nominal,
            candidates,
            plan,
            target_lane: lane,
        }
    }
}
