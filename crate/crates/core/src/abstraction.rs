//! Plan and state abstraction: continuous trajectories and control signals
//! mapped onto the symbolic vocabulary the arbiters reason over.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::geometry::Vec2;

/// Miles per hour in one meter per second.
pub const MPS_TO_MPH: f64 = 2.23694;

/// Default bound on the distance between consecutive waypoints.
pub const DEFAULT_MAX_STEP: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbstractionError {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid control state: {0}")]
    InvalidControlState(String),
    #[error("unknown plan label `{0}`")]
    UnknownPlan(String),
    #[error("invalid abstraction config: {0}")]
    InvalidConfig(String),
}

/// Ordered ego-frame waypoints (lateral right, longitudinal ahead).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Trajectory {
    waypoints: Vec<Vec2>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Vec2>) -> Result<Self, AbstractionError> {
        Self::with_max_step(waypoints, DEFAULT_MAX_STEP)
    }

    pub fn with_max_step(waypoints: Vec<Vec2>, max_step: f64) -> Result<Self, AbstractionError> {
        if waypoints.is_empty() {
            return Err(AbstractionError::InvalidTrajectory("no waypoints".into()));
        }
        if let Some(i) = waypoints.iter().position(|p| !p.is_finite()) {
            return Err(AbstractionError::InvalidTrajectory(format!(
                "waypoint {i} is not finite"
            )));
        }
        if let Some(i) = waypoints.windows(2).position(|w| w[0].distance(w[1]) > max_step) {
            return Err(AbstractionError::InvalidTrajectory(format!(
                "step {i}->{} exceeds {max_step} m",
                i + 1
            )));
        }
        Ok(Self { waypoints })
    }

    pub fn from_points(points: &[(f64, f64)]) -> Result<Self, AbstractionError> {
        Self::new(points.iter().map(|&(x, y)| Vec2::new(x, y)).collect())
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn into_waypoints(self) -> Vec<Vec2> {
        self.waypoints
    }
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let waypoints = Vec::<Vec2>::deserialize(d)?;
        Trajectory::new(waypoints).map_err(serde::de::Error::custom)
    }
}

/// Net displacement and path length of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub delta_x: f64,
    pub delta_y: f64,
    pub path_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanLabel {
    Stop,
    TurnLeft,
    TurnRight,
    DriveForward,
    SlowDown,
    LaneChangeLeft,
    LaneChangeRight,
}

impl PlanLabel {
    pub const ALL: [PlanLabel; 7] = [
        PlanLabel::Stop,
        PlanLabel::TurnLeft,
        PlanLabel::TurnRight,
        PlanLabel::DriveForward,
        PlanLabel::SlowDown,
        PlanLabel::LaneChangeLeft,
        PlanLabel::LaneChangeRight,
    ];

    /// Prompt-ready phrase.
    pub fn describe(self) -> &'static str {
        match self {
            PlanLabel::Stop => "stop",
            PlanLabel::TurnLeft => "turn left",
            PlanLabel::TurnRight => "turn right",
            PlanLabel::DriveForward => "drive forward",
            PlanLabel::SlowDown => "slow down",
            PlanLabel::LaneChangeLeft => "change lane to the left",
            PlanLabel::LaneChangeRight => "change lane to the right",
        }
    }

    /// Inverse of [`PlanLabel::describe`]; case and surrounding whitespace are ignored.
    pub fn from_description(text: &str) -> Option<PlanLabel> {
        let t = text.trim().trim_end_matches('.').to_ascii_lowercase();
        PlanLabel::ALL.into_iter().find(|l| l.describe() == t)
    }

    pub fn id(self) -> &'static str {
        match self {
            PlanLabel::Stop => "stop",
            PlanLabel::TurnLeft => "turn_left",
            PlanLabel::TurnRight => "turn_right",
            PlanLabel::DriveForward => "drive_forward",
            PlanLabel::SlowDown => "slow_down",
            PlanLabel::LaneChangeLeft => "lane_change_left",
            PlanLabel::LaneChangeRight => "lane_change_right",
        }
    }

    pub fn is_lane_change(self) -> bool {
        matches!(self, PlanLabel::LaneChangeLeft | PlanLabel::LaneChangeRight)
    }

    pub fn is_turn(self) -> bool {
        matches!(self, PlanLabel::TurnLeft | PlanLabel::TurnRight)
    }

    /// Lane offset the maneuver ends in (negative = left).
    pub fn lane_offset(self) -> i32 {
        match self {
            PlanLabel::TurnLeft | PlanLabel::LaneChangeLeft => -1,
            PlanLabel::TurnRight | PlanLabel::LaneChangeRight => 1,
            _ => 0,
        }
    }

    pub fn mirrored(self) -> PlanLabel {
        match self {
            PlanLabel::TurnLeft => PlanLabel::TurnRight,
            PlanLabel::TurnRight => PlanLabel::TurnLeft,
            PlanLabel::LaneChangeLeft => PlanLabel::LaneChangeRight,
            PlanLabel::LaneChangeRight => PlanLabel::LaneChangeLeft,
            other => other,
        }
    }
}

impl fmt::Display for PlanLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.describe())
    }
}

impl FromStr for PlanLabel {
    type Err = AbstractionError;

    /// Accepts either the snake-case id or the descriptive phrase.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        PlanLabel::ALL
            .into_iter()
            .find(|l| l.id() == t)
            .or_else(|| PlanLabel::from_description(&t))
            .ok_or_else(|| AbstractionError::UnknownPlan(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbstractionConfig {
    pub theta_stop: f64,
    pub theta_turn: f64,
    pub theta_fwd: f64,
    pub epsilon_theta: f64,
    pub throttle_bins: Vec<f64>,
    pub ordinal_labels: Vec<String>,
}

impl Default for AbstractionConfig {
    fn default() -> Self {
        Self {
            theta_stop: 1.5,
            theta_turn: 2.0,
            theta_fwd: 2.0,
            epsilon_theta: 0.05,
            throttle_bins: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            ordinal_labels: ["not applied", "light", "moderate", "strong", "maximum"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl AbstractionConfig {
    pub fn validate(&self) -> Result<(), AbstractionError> {
        let bins = &self.throttle_bins;
        if bins.len() != 5 || self.ordinal_labels.len() != 5 {
            return Err(AbstractionError::InvalidConfig(
                "throttle_bins and ordinal_labels must each have 5 entries".into(),
            ));
        }
        if bins[0] != 0.0 || bins[4] != 1.0 || bins.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AbstractionError::InvalidConfig(
                "throttle_bins must increase strictly from 0.0 to 1.0".into(),
            ));
        }
        for (name, v) in [
            ("theta_stop", self.theta_stop),
            ("theta_turn", self.theta_turn),
            ("theta_fwd", self.theta_fwd),
            ("epsilon_theta", self.epsilon_theta),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(AbstractionError::InvalidConfig(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attention {
    Attentive,
    Distracted,
    GazeLeft,
    GazeRight,
}

impl Attention {
    pub fn describe(self) -> &'static str {
        match self {
            Attention::Attentive => "attentive, eyes on the road",
            Attention::Distracted => "distracted, looking away from the road",
            Attention::GazeLeft => "glancing to the left",
            Attention::GazeRight => "glancing to the right",
        }
    }
}

/// Low-level control signals of either the human or the ego stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlState {
    pub throttle: f64,
    pub brake: f64,
    /// Normalized steering, positive to the right.
    pub steering: f64,
    pub speed_mps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_attention: Option<Attention>,
}

impl ControlState {
    pub fn validate(&self) -> Result<(), AbstractionError> {
        let in_range = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo && v <= hi;
        if !in_range(self.throttle, 0.0, 1.0) {
            return Err(AbstractionError::InvalidControlState("throttle outside [0,1]".into()));
        }
        if !in_range(self.brake, 0.0, 1.0) {
            return Err(AbstractionError::InvalidControlState("brake outside [0,1]".into()));
        }
        if !in_range(self.steering, -1.0, 1.0) {
            return Err(AbstractionError::InvalidControlState("steering outside [-1,1]".into()));
        }
        if !in_range(self.speed_mps, 0.0, f64::MAX) {
            return Err(AbstractionError::InvalidControlState("speed must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringLabel {
    ToTheLeft,
    Neutral,
    ToTheRight,
}

impl SteeringLabel {
    pub fn describe(self) -> &'static str {
        match self {
            SteeringLabel::ToTheLeft => "to the left",
            SteeringLabel::Neutral => "neutral",
            SteeringLabel::ToTheRight => "to the right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDescriptor {
    pub throttle_label: String,
    pub brake_label: String,
    pub steering_label: SteeringLabel,
    pub speed_mph: f64,
    pub attention_text: String,
}

pub fn summarize_plan(traj: &Trajectory) -> PlanSummary {
    let w = traj.waypoints();
    let first = w[0];
    let last = w[w.len() - 1];
    PlanSummary {
        delta_x: last.x - first.x,
        delta_y: last.y - first.y,
        path_length: w.windows(2).map(|p| p[0].distance(p[1])).sum(),
    }
}

/// Threshold classification; earlier rules take precedence over later ones.
pub fn classify_plan(summary: &PlanSummary, cfg: &AbstractionConfig) -> PlanLabel {
    if summary.path_length < cfg.theta_stop {
        PlanLabel::Stop
    } else if summary.delta_x.abs() > cfg.theta_turn {
        if summary.delta_x > 0.0 {
            PlanLabel::TurnRight
        } else {
            PlanLabel::TurnLeft
        }
    } else if summary.delta_y > cfg.theta_fwd {
        PlanLabel::DriveForward
    } else {
        // also covers backward motion
        PlanLabel::SlowDown
    }
}

pub fn abstract_plan(traj: &Trajectory, cfg: &AbstractionConfig) -> PlanLabel {
    classify_plan(&summarize_plan(traj), cfg)
}

/// Index of the nearest bin; exact ties go to the lower bin.
pub fn bin_index(value: f64, bins: &[f64]) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, b) in bins.iter().enumerate() {
        let d = (value - b).abs();
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    best
}

pub fn steering_label(steering: f64, epsilon: f64) -> SteeringLabel {
    if steering > epsilon {
        SteeringLabel::ToTheRight
    } else if steering < -epsilon {
        SteeringLabel::ToTheLeft
    } else {
        SteeringLabel::Neutral
    }
}

pub fn abstract_state(state: &ControlState, cfg: &AbstractionConfig) -> StateDescriptor {
    let label = |v: f64| cfg.ordinal_labels[bin_index(v, &cfg.throttle_bins)].clone();
    StateDescriptor {
        throttle_label: label(state.throttle),
        brake_label: label(state.brake),
        steering_label: steering_label(state.steering, cfg.epsilon_theta),
        speed_mph: state.speed_mps * MPS_TO_MPH,
        attention_text: state
            .human_attention
            .map(|a| a.describe().to_string())
            .unwrap_or_else(|| "no attention data".to_string()),
    }
}
