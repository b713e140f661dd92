//! Lane geometry of the ego's road.

use serde::{Deserialize, Serialize};

use crate::geometry::{project_onto_polyline, Projection, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneMarking {
    DashedWhite,
    SolidWhite,
    SolidYellow,
    DoubleYellow,
}

impl LaneMarking {
    pub const ALL: [LaneMarking; 4] = [
        LaneMarking::DashedWhite,
        LaneMarking::SolidWhite,
        LaneMarking::SolidYellow,
        LaneMarking::DoubleYellow,
    ];

    pub fn describe(self) -> &'static str {
        match self {
            LaneMarking::DashedWhite => "dashed white",
            LaneMarking::SolidWhite => "solid white",
            LaneMarking::SolidYellow => "solid yellow",
            LaneMarking::DoubleYellow => "double yellow",
        }
    }

    pub fn from_description(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.describe() == s.trim())
    }

    pub fn id(self) -> &'static str {
        match self {
            LaneMarking::DashedWhite => "dashed_white",
            LaneMarking::SolidWhite => "solid_white",
            LaneMarking::SolidYellow => "solid_yellow",
            LaneMarking::DoubleYellow => "double_yellow",
        }
    }

    pub fn is_solid(self) -> bool {
        !matches!(self, LaneMarking::DashedWhite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LaneDirection {
    #[default]
    Forward,
    Oncoming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    /// Centerline in the ego's direction of travel, regardless of `direction`.
    pub centerline: Vec<Vec2>,
    pub width: f64,
    #[serde(default)]
    pub direction: LaneDirection,
}

/// Parallel lanes ordered left to right, with `lanes.len() + 1` boundary markings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Road {
    pub lanes: Vec<Lane>,
    pub markings: Vec<LaneMarking>,
}

impl Road {
    pub fn validate(&self) -> Result<(), String> {
        if self.lanes.is_empty() {
            return Err("road has no lanes".into());
        }
        if self.markings.len() != self.lanes.len() + 1 {
            return Err(format!(
                "road has {} lanes but {} markings (expected lanes + 1)",
                self.lanes.len(),
                self.markings.len()
            ));
        }
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.centerline.len() < 2 {
                return Err(format!("lane {i} centerline needs at least 2 points"));
            }
            if !(lane.width > 0.0) {
                return Err(format!("lane {i} width must be positive"));
            }
            if lane.centerline.iter().any(|p| !p.is_finite()) {
                return Err(format!("lane {i} has non-finite points"));
            }
        }
        Ok(())
    }

    pub fn project(&self, lane: usize, p: Vec2) -> Projection {
        project_onto_polyline(&self.lanes[lane].centerline, p)
    }

    /// Lane whose centerline is closest to `p`.
    pub fn nearest_lane(&self, p: Vec2) -> (usize, Projection) {
        self.lanes
            .iter()
            .enumerate()
            .map(|(i, l)| (i, project_onto_polyline(&l.centerline, p)))
            .min_by(|a, b| a.1.lateral.abs().total_cmp(&b.1.lateral.abs()))
            .expect("road has lanes")
    }

    pub fn on_road(&self, p: Vec2) -> bool {
        self.lanes
            .iter()
            .any(|l| project_onto_polyline(&l.centerline, p).lateral.abs() <= l.width / 2.0)
    }

    /// Marking on the left boundary of `lane`.
    pub fn left_marking(&self, lane: usize) -> LaneMarking {
        self.markings[lane]
    }

    pub fn right_marking(&self, lane: usize) -> LaneMarking {
        self.markings[lane + 1]
    }

    pub fn lane_width(&self, lane: usize) -> f64 {
        self.lanes[lane].width
    }

    /// Lane index reached by shifting `offset` lanes, if it exists.
    pub fn shifted(&self, lane: usize, offset: i32) -> Option<usize> {
        let idx = lane as i64 + offset as i64;
        (0..self.lanes.len() as i64).contains(&idx).then_some(idx as usize)
    }

    /// Signed lane offset of a world point relative to `ego_lane`.
    pub fn lane_offset(&self, ego_lane: usize, p: Vec2) -> Option<i32> {
        if !self.on_road(p) {
            return None;
        }
        let (idx, _) = self.nearest_lane(p);
        Some(idx as i32 - ego_lane as i32)
    }
}
