//! JSON messages exchanged with teleoperation clients over the websocket.
//!
//! Every server frame is an object with `type`, `seq` and `schema_version`
//! next to its payload fields. `seq` starts at 1 and grows by one per frame
//! on each connection. See `docs/gateway-protocol.md` for examples.

use serde::{Deserialize, Serialize};

use sharedrive::arbitration::Choice;
use sharedrive::geometry::Vec2;
use sharedrive::road::Road;
use sharedrive::sim::actors::{ActorKind, ActorState};
use sharedrive::sim::episode::EndReason;
use sharedrive::{HumanControls, Mode, PlanLabel};

pub const PROTOCOL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Controller,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoView {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub half_extents: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorView {
    pub id: String,
    pub kind: ActorKind,
    pub position: Vec2,
    pub heading: f64,
    pub velocity: Vec2,
    pub half_extents: Vec2,
}

impl From<&ActorState> for ActorView {
    fn from(a: &ActorState) -> Self {
        Self {
            id: a.id.clone(),
            kind: a.kind,
            position: a.position,
            heading: a.heading,
            velocity: a.velocity,
            half_extents: a.half_extents,
        }
    }
}

/// Command applied to the ego during the last tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandView {
    pub steering: f64,
    pub throttle: f64,
    pub brake: f64,
    /// `autonomy`, `human` or `primitive:<plan>`.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub tick: u64,
    pub time_s: f64,
    pub ego: EgoView,
    pub command: CommandView,
    /// Controls the human currently holds, if engaged.
    pub human: Option<HumanControls>,
    /// Client `seq` of the last human message applied.
    pub human_input_seq: Option<u64>,
    pub actors: Vec<ActorView>,
    pub route_completion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        role: Role,
        connection_id: u64,
        scenario: String,
        mode: Mode,
        arbiter: String,
        tick_hz: f64,
        snapshot_hz: f64,
        theta_u: f64,
        road: Road,
        gates: Vec<Vec2>,
    },
    WorldSnapshot(WorldSnapshot),
    UncertaintyUpdate {
        tick: u64,
        u: f64,
        intra_raw: f64,
        inter_raw: f64,
        triggered: bool,
    },
    ArbitrationRequestShown {
        correlation_id: String,
        tick: u64,
        human_plan: PlanLabel,
        /// The human plan as shown to the arbiter.
        human_intent: String,
        autonomy_plan: PlanLabel,
        uncertainty: f64,
    },
    ArbitrationDecision {
        correlation_id: String,
        tick: u64,
        choice: Choice,
        grounded_plan: PlanLabel,
        follow_up: Option<PlanLabel>,
        rationale: String,
        fallback: bool,
        executed: Option<PlanLabel>,
        latency_ms: f64,
    },
    EpisodeEnd {
        ticks: u64,
        reason: EndReason,
        collided: bool,
        collision_with: Option<String>,
        route_completion: f64,
        interventions: usize,
        first_trigger: Option<u64>,
    },
    Error {
        message: String,
    },
}

impl ServerMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ServerMessage::Hello { .. } => "hello",
            ServerMessage::WorldSnapshot(_) => "world_snapshot",
            ServerMessage::UncertaintyUpdate { .. } => "uncertainty_update",
            ServerMessage::ArbitrationRequestShown { .. } => "arbitration_request_shown",
            ServerMessage::ArbitrationDecision { .. } => "arbitration_decision",
            ServerMessage::EpisodeEnd { .. } => "episode_end",
            ServerMessage::Error { .. } => "error",
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    seq: u64,
    schema_version: u32,
    #[serde(flatten)]
    message: &'a ServerMessage,
}

/// Serializes `message` as one frame with the given sequence number.
pub fn encode(seq: u64, message: &ServerMessage) -> String {
    serde_json::to_string(&Envelope {
        seq,
        schema_version: PROTOCOL_SCHEMA_VERSION,
        message,
    })
    .expect("server messages serialize")
}

/// A server frame as read by a client.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Frame {
    pub seq: u64,
    pub schema_version: u32,
    #[serde(flatten)]
    pub message: ServerMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    HumanInput {
        #[serde(default)]
        seq: Option<u64>,
        #[serde(default)]
        schema_version: Option<u32>,
        steering: f64,
        throttle: f64,
        brake: f64,
    },
    Intervention {
        #[serde(default)]
        seq: Option<u64>,
        #[serde(default)]
        schema_version: Option<u32>,
        #[serde(default)]
        plan: Option<PlanLabel>,
        #[serde(default)]
        controls: Option<HumanControls>,
    },
}

impl ClientMessage {
    pub fn seq(&self) -> Option<u64> {
        match *self {
            ClientMessage::HumanInput { seq, .. } | ClientMessage::Intervention { seq, .. } => seq,
        }
    }

    /// Parses and checks one client frame.
    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
        let version = match msg {
            ClientMessage::HumanInput { schema_version, .. } | ClientMessage::Intervention { schema_version, .. } => {
                schema_version
            }
        };
        if let Some(v) = version.filter(|&v| v != PROTOCOL_SCHEMA_VERSION) {
            return Err(format!(
                "schema_version {v} is not supported (expected {PROTOCOL_SCHEMA_VERSION})"
            ));
        }
        match msg {
            ClientMessage::HumanInput {
                steering,
                throttle,
                brake,
                ..
            } => HumanControls {
                steering,
                throttle,
                brake,
            }
            .validate()?,
            ClientMessage::Intervention { plan, controls, .. } => {
                if let Some(c) = controls {
                    c.validate()?;
                }
                if plan.is_none() && controls.is_none() {
                    return Err("intervention needs a plan or controls".into());
                }
            }
        }
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_carry_seq_and_version() {
        let text = encode(7, &ServerMessage::Error { message: "x".into() });
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["type"], "error");
        assert_eq!(v["seq"], 7);
        assert_eq!(v["schema_version"], PROTOCOL_SCHEMA_VERSION);
        let back: Frame = serde_json::from_str(&text).unwrap();
        assert_eq!(back.message, ServerMessage::Error { message: "x".into() });
    }

    #[test]
    fn client_messages_parse_and_validate() {
        let m = ClientMessage::parse(r#"{"type":"human_input","steering":-0.2,"throttle":0.1,"brake":0}"#).unwrap();
        assert!(matches!(m, ClientMessage::HumanInput { steering, .. } if steering == -0.2));
        let m = ClientMessage::parse(r#"{"type":"intervention","seq":4,"plan":"lane_change_left"}"#).unwrap();
        assert_eq!(m.seq(), Some(4));
        assert!(
            ClientMessage::parse(r#"{"type":"intervention","controls":{"steering":0,"throttle":0,"brake":1}}"#).is_ok()
        );
        for bad in [
            "{not json",
            r#"{"type":"teleport"}"#,
            r#"{"type":"human_input","steering":3,"throttle":0,"brake":0}"#,
            r#"{"type":"human_input","steering":0,"throttle":0,"brake":0,"extra":1}"#,
            r#"{"type":"human_input","schema_version":2,"steering":0,"throttle":0,"brake":0}"#,
            r#"{"type":"intervention"}"#,
        ] {
            assert!(ClientMessage::parse(bad).is_err(), "{bad}");
        }
    }
}
