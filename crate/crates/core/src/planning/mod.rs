//! Grounding of plan labels into executable paths: motion primitives, A*
//! over a lane-restricted occupancy grid, and PID tracking.

pub mod astar;
pub mod grid;
pub mod pid;
pub mod primitives;
pub mod smoothing;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::PlanLabel;
use crate::geometry::{polyline_length, Obb, Vec2};
use crate::road::Road;
use crate::vehicle::VehicleState;

pub use astar::{astar_plan, path_cost};
pub use grid::{Cell, OccupancyGrid};
pub use pid::{PathTracker, Pid, PidGains, TrackerConfig};
pub use primitives::{primitive_goal, PrimitiveCatalog, PrimitiveSpec};
pub use smoothing::smooth_to_trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanningError {
    #[error("cell {0:?} is outside the grid")]
    OutOfBounds(Cell),
    #[error("start cell {0:?} is occupied")]
    StartOccupied(Cell),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundingConfig {
    pub resolution: f64,
    /// Free space around the start/goal bounding box, meters.
    pub margin: f64,
    /// Lateral slack around the lane centerlines a maneuver may use.
    pub lane_tolerance: f64,
    /// Added to the ego half width when inflating obstacles.
    pub obstacle_margin: f64,
    pub max_cells: usize,
    /// Straight continuation appended after the goal so tracking stays defined.
    pub extension: f64,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self {
            resolution: 0.5,
            margin: 5.0,
            lane_tolerance: 0.75,
            obstacle_margin: 0.3,
            max_cells: 100,
            extension: 30.0,
        }
    }
}

/// Inputs a primitive is grounded against.
pub struct GroundingContext<'a> {
    pub road: &'a Road,
    pub ego_lane: usize,
    pub obstacles: &'a [Obb],
}

/// World-frame reference path for one primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedPrimitive {
    pub spec: PrimitiveSpec,
    pub reference: Vec<Vec2>,
    /// Arc length along `reference` at which the goal is reached.
    pub goal_station: f64,
    /// True when A* found no path and the direct segment to the goal is used.
    pub direct_fallback: bool,
}

fn build_grid(start: Vec2, goal: Vec2, cfg: &GroundingConfig) -> OccupancyGrid {
    let min = Vec2::new(start.x.min(goal.x) - cfg.margin, start.y.min(goal.y) - cfg.margin);
    let max = Vec2::new(start.x.max(goal.x) + cfg.margin, start.y.max(goal.y) + cfg.margin);
    let span = (max.x - min.x).max(max.y - min.y);
    let resolution = cfg.resolution.max(span / cfg.max_cells as f64);
    // align so the start position is a cell center
    let c0 = ((start.x - min.x) / resolution).floor();
    let r0 = ((start.y - min.y) / resolution).floor();
    let origin = Vec2::new(start.x - (c0 + 0.5) * resolution, start.y - (r0 + 0.5) * resolution);
    let width = (((max.x - origin.x) / resolution).ceil() as usize).clamp(1, cfg.max_cells);
    let height = (((max.y - origin.y) / resolution).ceil() as usize).clamp(1, cfg.max_cells);
    OccupancyGrid::new(width, height, resolution, origin)
}

/// Lane-restricted occupancy for `spec`, starting at `ego`, heading for `goal`.
pub fn maneuver_grid(
    spec: &PrimitiveSpec,
    ego: &VehicleState,
    goal: Vec2,
    ctx: &GroundingContext<'_>,
    cfg: &GroundingConfig,
) -> OccupancyGrid {
    let mut grid = build_grid(ego.position, goal, cfg);
    let road = ctx.road;
    let ego_lat = road.project(ctx.ego_lane, ego.position).lateral;
    let goal_lat = road.project(ctx.ego_lane, goal).lateral;
    let lo = ego_lat.min(goal_lat).min(0.0) - cfg.lane_tolerance;
    let hi = ego_lat.max(goal_lat).max(0.0) + cfg.lane_tolerance;
    let restrict_band = !spec.label.is_turn();

    let inflation = ego.half_extents.y + cfg.obstacle_margin;
    let inflated: Vec<Obb> = ctx.obstacles.iter().map(|o| o.inflated(inflation)).collect();

    for cell in grid.cells().collect::<Vec<_>>() {
        let p = grid.cell_center(cell);
        let mut blocked = !road.on_road(p);
        if !blocked && restrict_band {
            let lat = road.project(ctx.ego_lane, p).lateral;
            blocked = lat < lo || lat > hi;
        }
        if !blocked {
            blocked = inflated.iter().any(|o| o.contains(p));
        }
        grid.set_occupied(cell, blocked);
    }
    grid
}

/// Instantiates `spec` as a world-frame path: A* when the goal is reachable
/// inside the maneuver's lanes, else the direct segment toward the goal.
pub fn ground_primitive(
    spec: &PrimitiveSpec,
    ego: &VehicleState,
    ctx: &GroundingContext<'_>,
    cfg: &GroundingConfig,
) -> GroundedPrimitive {
    let pose = ego.pose();
    let raw_goal = pose.to_world(spec.goal_offset);
    let road = ctx.road;

    let target_lane = if spec.label.is_turn() {
        None
    } else {
        road.shifted(ctx.ego_lane, spec.label.lane_offset())
    };
    let (goal, exit_dir) = match target_lane {
        Some(lane) => {
            let proj = road.project(lane, raw_goal);
            (proj.point, proj.tangent)
        }
        None => (raw_goal, (raw_goal - ego.position).normalized()),
    };

    let mut grid = maneuver_grid(spec, ego, goal, ctx, cfg);
    let start_cell = grid.world_to_cell(ego.position);
    let goal_cell = grid.world_to_cell(goal);

    let searched = match (start_cell, goal_cell) {
        (Some(s), Some(g)) => {
            let covered = ctx.obstacles.iter().any(|o| {
                o.inflated(ego.half_extents.y + cfg.obstacle_margin)
                    .contains(grid.cell_center(s))
            });
            if !covered {
                grid.set_occupied(s, false);
            }
            astar_plan(&grid, s, g).ok().flatten()
        }
        _ => None,
    };

    let (mut reference, direct_fallback) = match searched {
        Some(path) => {
            let length = path_cost(&path) * grid.resolution;
            let samples = (length / 1.0).ceil() as usize + 1;
            let traj = smooth_to_trajectory(&path, &grid, samples);
            let mut pts = traj.into_waypoints();
            pts[0] = ego.position;
            if let Some(last) = pts.last_mut() {
                *last = goal;
            }
            (pts, false)
        }
        None => (vec![ego.position, goal], true),
    };
    if reference.len() == 1 {
        reference.push(goal + exit_dir * 0.5);
    }
    let goal_station = polyline_length(&reference);
    let dir = if exit_dir.norm() > 0.0 {
        exit_dir
    } else {
        pose.forward()
    };
    reference.push(goal + dir * cfg.extension);

    GroundedPrimitive {
        spec: *spec,
        reference,
        goal_station,
        direct_fallback,
    }
}

/// Convenience: catalog lookup plus grounding.
pub fn plan_maneuver(
    label: PlanLabel,
    ego: &VehicleState,
    ctx: &GroundingContext<'_>,
    catalog: &PrimitiveCatalog,
    cfg: &GroundingConfig,
) -> GroundedPrimitive {
    let spec = primitive_goal(label, ego, catalog);
    ground_primitive(&spec, ego, ctx, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project_onto_polyline;
    use crate::road::{Lane, LaneDirection, LaneMarking};
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

    fn ego() -> VehicleState {
        VehicleState::new(Vec2::new(1.75, 0.0), FRAC_PI_2, 8.0)
    }

    #[test]
    fn forward_on_clear_lane_stays_centered() {
        let r = road();
        let ctx = GroundingContext {
            road: &r,
            ego_lane: 1,
            obstacles: &[],
        };
        let g = plan_maneuver(
            PlanLabel::DriveForward,
            &ego(),
            &ctx,
            &PrimitiveCatalog::default(),
            &GroundingConfig::default(),
        );
        assert!(!g.direct_fallback);
        assert!((g.goal_station - 20.0).abs() < 0.6);
        for p in &g.reference {
            assert!((p.x - 1.75).abs() < 0.76, "{p:?}");
        }
    }

    #[test]
    fn lane_change_avoids_obstacle_and_ends_in_target_lane() {
        let r = road();
        let obstacles = [Obb::new(Vec2::new(1.75, 14.0), FRAC_PI_2, Vec2::new(2.0, 1.0))];
        let ctx = GroundingContext {
            road: &r,
            ego_lane: 1,
            obstacles: &obstacles,
        };
        let g = plan_maneuver(
            PlanLabel::LaneChangeLeft,
            &ego(),
            &ctx,
            &PrimitiveCatalog::default(),
            &GroundingConfig::default(),
        );
        assert!(!g.direct_fallback);
        let goal = g.reference[g.reference.len() - 2];
        assert!((goal.x + 1.75).abs() < 1e-9);
        let inflated = obstacles[0].inflated(0.95 + 0.3);
        assert!(g.reference.iter().all(|p| !inflated.contains(*p)));
    }

    #[test]
    fn blocked_lane_forces_direct_fallback() {
        let r = road();
        let obstacles = [Obb::new(Vec2::new(1.75, 12.0), FRAC_PI_2, Vec2::new(1.0, 1.5))];
        let ctx = GroundingContext {
            road: &r,
            ego_lane: 1,
            obstacles: &obstacles,
        };
        let g = plan_maneuver(
            PlanLabel::DriveForward,
            &ego(),
            &ctx,
            &PrimitiveCatalog::default(),
            &GroundingConfig::default(),
        );
        assert!(g.direct_fallback);
    }

    #[test]
    fn off_road_turn_falls_back() {
        let r = road();
        let ctx = GroundingContext {
            road: &r,
            ego_lane: 1,
            obstacles: &[],
        };
        let g = plan_maneuver(
            PlanLabel::TurnRight,
            &ego(),
            &ctx,
            &PrimitiveCatalog::default(),
            &GroundingConfig::default(),
        );
        assert!(g.direct_fallback);
        let proj = project_onto_polyline(&g.reference, Vec2::new(9.75, 8.0));
        assert!(proj.lateral.abs() < 1e-9);
    }
}
