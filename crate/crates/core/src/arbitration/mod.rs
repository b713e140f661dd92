//! Arbitration between the human plan and the autonomy plan.
//!
//! Four arbiters share one request/decision contract: the naive baseline
//! (always the human), a rule-table decision tree, a reasoning-service client
//! (HTTP or the offline stub), and an oracle that knows the ground truth.

pub mod prompt;
pub mod rules;
pub mod stub;
pub mod vlm;
pub mod worker;

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{PlanLabel, StateDescriptor};
use crate::geometry::Vec2;
use crate::road::LaneMarking;
use crate::sim::actors::ActorKind;
use crate::uncertainty::UncertaintyScore;

pub use prompt::{build_prompt, parse_response, render_decision};
pub use rules::{RuleParseError, RuleTable};
pub use stub::StubBackend;
pub use vlm::{VlmBackend, VlmClient, VlmClientConfig};
pub use worker::ArbitrationWorker;

/// Spacing between the context snapshots, seconds.
pub const CONTEXT_SPACING_S: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArbitrationError {
    #[error("reasoning service unavailable: {0}")]
    VlmUnavailable(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("arbitration timed out after {0} ms")]
    Timeout(u64),
}

/// An object as perceived from the ego vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub kind: ActorKind,
    /// Ego frame: lateral right, longitudinal ahead.
    pub position: Vec2,
    /// Ground velocity expressed on the ego axes.
    pub velocity: Vec2,
    /// Lanes to the right of the ego lane (negative: left); `None` off-road.
    pub lane_offset: Option<i32>,
    /// (half length, half width)
    pub half_extents: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    /// Seconds since episode start.
    pub timestamp: f64,
    pub objects: Vec<SceneObject>,
    /// Index from the left, 0-based.
    pub ego_lane: usize,
    pub lane_count: usize,
    pub lane_width: f64,
    /// Boundary markings, left to right (`lane_count + 1` entries).
    pub lane_markings: Vec<LaneMarking>,
    pub visibility: f64,
}

impl SceneSnapshot {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err("visibility outside [0,1]".into());
        }
        if self.lane_markings.len() != self.lane_count + 1 {
            return Err("lane markings must have lane_count + 1 entries".into());
        }
        if self
            .objects
            .iter()
            .any(|o| !o.position.is_finite() || !o.velocity.is_finite())
        {
            return Err("object with non-finite position or velocity".into());
        }
        Ok(())
    }

    /// Marking crossed when leaving the ego lane by `offset` lanes (±1).
    pub fn marking_crossed(&self, offset: i32) -> Option<LaneMarking> {
        match offset {
            o if o < 0 => self.lane_markings.get(self.ego_lane).copied(),
            o if o > 0 => self.lane_markings.get(self.ego_lane + 1).copied(),
            _ => None,
        }
    }
}

/// Three snapshots, oldest first, 0.5 s apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SceneSnapshot>", into = "Vec<SceneSnapshot>")]
pub struct SceneContext {
    snapshots: [SceneSnapshot; 3],
}

impl SceneContext {
    pub fn new(snapshots: [SceneSnapshot; 3]) -> Result<Self, String> {
        for s in &snapshots {
            s.validate()?;
        }
        for w in snapshots.windows(2) {
            let gap = w[1].timestamp - w[0].timestamp;
            if (gap - CONTEXT_SPACING_S).abs() > 0.05 + 1e-9 {
                return Err(format!("snapshots must be {CONTEXT_SPACING_S} s apart (got {gap:.3})"));
            }
        }
        Ok(Self { snapshots })
    }

    pub fn snapshots(&self) -> &[SceneSnapshot; 3] {
        &self.snapshots
    }

    pub fn latest(&self) -> &SceneSnapshot {
        &self.snapshots[2]
    }
}

impl TryFrom<Vec<SceneSnapshot>> for SceneContext {
    type Error = String;

    fn try_from(v: Vec<SceneSnapshot>) -> Result<Self, String> {
        let arr: [SceneSnapshot; 3] = v
            .try_into()
            .map_err(|v: Vec<SceneSnapshot>| format!("expected 3 snapshots, got {}", v.len()))?;
        SceneContext::new(arr)
    }
}

impl From<SceneContext> for Vec<SceneSnapshot> {
    fn from(c: SceneContext) -> Self {
        c.snapshots.into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeamingMode {
    /// The human intervened on their own.
    ProactiveTeaming,
    /// The system asked for input because autonomy was uncertain.
    SupervisoryPrompted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationRequest {
    pub frame: u64,
    pub context: SceneContext,
    pub ego_descriptor: StateDescriptor,
    pub human_descriptor: StateDescriptor,
    pub human_plan: PlanLabel,
    pub autonomy_plan: PlanLabel,
    pub autonomy_uncertainty: UncertaintyScore,
    pub mode: TeamingMode,
}

impl ArbitrationRequest {
    pub fn validate(&self) -> Result<(), ArbitrationError> {
        if self.mode == TeamingMode::SupervisoryPrompted && !self.autonomy_uncertainty.triggered {
            return Err(ArbitrationError::InvalidRequest(
                "supervisory requests require a triggered uncertainty score".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Human,
    Autonomy,
    Alternative,
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Choice::Human => "human",
            Choice::Autonomy => "autonomy",
            Choice::Alternative => "alternative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationDecision {
    pub choice: Choice,
    pub grounded_plan: PlanLabel,
    /// Second stage of a staged alternative ("now X, then Y").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follow_up: Option<PlanLabel>,
    pub rationale: String,
    pub latency_ms: f64,
}

impl ArbitrationDecision {
    pub fn human(req: &ArbitrationRequest, rationale: impl Into<String>) -> Self {
        Self {
            choice: Choice::Human,
            grounded_plan: req.human_plan,
            follow_up: None,
            rationale: rationale.into(),
            latency_ms: 0.0,
        }
    }

    pub fn autonomy(req: &ArbitrationRequest, rationale: impl Into<String>) -> Self {
        Self {
            choice: Choice::Autonomy,
            grounded_plan: req.autonomy_plan,
            follow_up: None,
            rationale: rationale.into(),
            latency_ms: 0.0,
        }
    }

    /// Checks the choice/grounded-plan contract against `req`.
    pub fn is_grounded_in(&self, req: &ArbitrationRequest) -> bool {
        match self.choice {
            Choice::Human => self.grounded_plan == req.human_plan,
            Choice::Autonomy => self.grounded_plan == req.autonomy_plan,
            Choice::Alternative => {
                self.grounded_plan.is_lane_change()
                    || (self.grounded_plan != req.human_plan && self.grounded_plan != req.autonomy_plan)
            }
        }
    }
}

/// Which arbiter a run uses.
#[derive(Debug, Clone)]
pub enum Arbiter {
    Naive,
    DecisionTree(RuleTable),
    Vlm(VlmClient),
    /// Picks the human plan exactly when it is known to be correct.
    Oracle,
}

impl Arbiter {
    pub fn name(&self) -> &'static str {
        match self {
            Arbiter::Naive => "naive",
            Arbiter::DecisionTree(_) => "decision-tree",
            Arbiter::Vlm(c) => match c.backend() {
                VlmBackend::Stub(_) => "stub-vlm",
                VlmBackend::Http => "vlm",
            },
            Arbiter::Oracle => "oracle",
        }
    }

    pub fn decision_tree_default() -> Self {
        Arbiter::DecisionTree(RuleTable::shipped_default())
    }

    pub fn stub_vlm() -> Self {
        Arbiter::Vlm(VlmClient::stub())
    }

    /// Whether a decision involves blocking I/O and must leave the tick thread.
    pub fn is_remote(&self) -> bool {
        matches!(self, Arbiter::Vlm(c) if matches!(c.backend(), VlmBackend::Http))
    }

    /// Decides on `req`. `truth` is the human plan's correctness, used only
    /// by the oracle; without it the oracle defers to autonomy.
    pub fn arbitrate(
        &self,
        req: &ArbitrationRequest,
        truth: Option<bool>,
    ) -> Result<ArbitrationDecision, ArbitrationError> {
        req.validate()?;
        let started = Instant::now();
        let mut decision = match self {
            Arbiter::Naive => ArbitrationDecision::human(req, "naive baseline: always follow the human"),
            Arbiter::DecisionTree(table) => table.decide(req),
            Arbiter::Vlm(client) => {
                let prompt = build_prompt(req);
                let raw = match client.complete(req.frame, &prompt, req) {
                    Ok(raw) => raw,
                    Err(e) => {
                        client.audit(req.frame, &prompt, None, None, started);
                        return Err(e);
                    }
                };
                let parsed = parse_response(&raw, req);
                client.audit(
                    req.frame,
                    &prompt,
                    Some(&raw),
                    parsed.as_ref().ok().map(|d| d.choice),
                    started,
                );
                parsed?
            }
            Arbiter::Oracle => {
                if truth == Some(true) {
                    ArbitrationDecision::human(req, "oracle: the human plan is correct")
                } else {
                    ArbitrationDecision::autonomy(req, "oracle: the human plan is not known to be correct")
                }
            }
        };
        decision.latency_ms = started.elapsed().as_secs_f64() * 1000.0;
        Ok(decision)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::abstraction::{abstract_state, AbstractionConfig, Attention, ControlState};

    pub fn snapshot(t: f64, objects: Vec<SceneObject>) -> SceneSnapshot {
        SceneSnapshot {
            timestamp: t,
            objects,
            ego_lane: 1,
            lane_count: 2,
            lane_width: 3.5,
            lane_markings: vec![
                LaneMarking::SolidWhite,
                LaneMarking::DashedWhite,
                LaneMarking::SolidWhite,
            ],
            visibility: 1.0,
        }
    }

    pub fn object(kind: ActorKind, x: f64, y: f64, vx: f64, vy: f64, lane_offset: Option<i32>) -> SceneObject {
        SceneObject {
            kind,
            position: Vec2::new(x, y),
            velocity: Vec2::new(vx, vy),
            lane_offset,
            half_extents: Vec2::new(2.3, 0.95),
        }
    }

    pub fn request(human_plan: PlanLabel, autonomy_plan: PlanLabel, objects: Vec<SceneObject>) -> ArbitrationRequest {
        let cfg = AbstractionConfig::default();
        let ego = ControlState {
            throttle: 0.25,
            brake: 0.0,
            steering: 0.0,
            speed_mps: 8.0,
            human_attention: None,
        };
        let human = ControlState {
            human_attention: Some(Attention::Attentive),
            ..ego
        };
        ArbitrationRequest {
            frame: 60,
            context: SceneContext::new([
                snapshot(2.0, objects.clone()),
                snapshot(2.5, objects.clone()),
                snapshot(3.0, objects),
            ])
            .unwrap(),
            ego_descriptor: abstract_state(&ego, &cfg),
            human_descriptor: abstract_state(&human, &cfg),
            human_plan,
            autonomy_plan,
            autonomy_uncertainty: UncertaintyScore {
                frame: 60,
                u: 0.7,
                intra_raw: 3.0,
                inter_raw: 1.0,
                triggered: true,
            },
            mode: TeamingMode::SupervisoryPrompted,
        }
    }
}
