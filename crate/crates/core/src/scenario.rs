//! Scenario files: road, route, scripted actors, the annotated decision
//! point, the human script and failure injections.
//!
//! Scenarios are TOML documents carrying `schema_version = 1`. The shipped
//! corpus is compiled into the library (see [`corpus`]).

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{Attention, PlanLabel};
use crate::geometry::{point_at_station, project_onto_polyline, Vec2};
use crate::road::Road;
use crate::sim::actors::{ActorSpec, ActorState};
use crate::vehicle::VehicleState;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported scenario schema_version {0} (expected {SCENARIO_SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("invalid scenario `{name}`: {reason}")]
    Invalid { name: String, reason: String },
    #[error("unknown scenario `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    /// Autonomy candidates scatter laterally (planner disagreement).
    CandidateScatter,
    /// Autonomy halts: its nominal plan degenerates to standing still.
    PolicyFreeze,
    /// Perception drops every object and visibility collapses.
    PerceptionBlackout,
}

/// Failure active on ticks `start_tick..end_tick`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub kind: InjectionKind,
    pub start_tick: u64,
    pub end_tick: u64,
}

impl Injection {
    pub fn contains(&self, tick: u64) -> bool {
        (self.start_tick..self.end_tick).contains(&tick)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoStart {
    pub position: Vec2,
    pub heading_deg: f64,
    pub speed: f64,
}

/// Route gates, either listed or spaced along the route lane by station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GateSpec {
    Listed(Vec<Vec2>),
    Spaced { from: f64, to: f64, spacing: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    /// Lane the route follows; autonomy returns to it when it is clear.
    pub lane: usize,
    #[serde(default = "default_cruise")]
    pub cruise_speed: f64,
    #[serde(default = "default_radius")]
    pub completion_radius: f64,
    pub gates: GateSpec,
}

fn default_cruise() -> f64 {
    8.0
}

fn default_radius() -> f64 {
    6.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedPlan {
    pub plan: PlanLabel,
    pub correct: bool,
}

/// The moment the human is expected to weigh in, with every plan the
/// scenario author considered and whether it is correct there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionPoint {
    pub tick: u64,
    #[serde(default = "default_attention")]
    pub attention: Attention,
    pub plans: Vec<AnnotatedPlan>,
}

fn default_attention() -> Attention {
    Attention::Attentive
}

/// Raw controls a scripted human applies alongside a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedControl {
    #[serde(default)]
    pub throttle: f64,
    #[serde(default)]
    pub brake: f64,
    #[serde(default)]
    pub steering: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub tick: u64,
    pub plan: PlanLabel,
    pub correct: bool,
    #[serde(default)]
    pub control: Option<ScriptedControl>,
    #[serde(default)]
    pub attention: Option<Attention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub tick_budget: u64,
    pub road: Road,
    pub route: RouteSpec,
    pub ego: EgoStart,
    #[serde(default)]
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub decision: Option<DecisionPoint>,
    #[serde(default)]
    pub human_script: Vec<ScriptEntry>,
    #[serde(default)]
    pub injections: Vec<Injection>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = toml::from_str(text)?;
        if v.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(ScenarioError::UnsupportedVersion(v.schema_version));
        }
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    fn invalid(&self, reason: impl Into<String>) -> ScenarioError {
        ScenarioError::Invalid {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.is_empty() {
            return Err(self.invalid("name must not be empty"));
        }
        if self.tick_budget == 0 {
            return Err(self.invalid("tick_budget must be positive"));
        }
        self.road.validate().map_err(|e| self.invalid(e))?;
        if self.route.lane >= self.road.lanes.len() {
            return Err(self.invalid(format!("route lane {} does not exist", self.route.lane)));
        }
        if !(self.route.cruise_speed > 0.0) || !(self.route.completion_radius > 0.0) {
            return Err(self.invalid("route cruise_speed and completion_radius must be positive"));
        }
        if let GateSpec::Spaced { from, to, spacing } = self.route.gates {
            if !(spacing > 0.0) || !(to >= from) {
                return Err(self.invalid("spaced gates need spacing > 0 and to >= from"));
            }
        }
        let gates = self.gates();
        if gates.is_empty() {
            return Err(self.invalid("route has no gates"));
        }
        let lane_line = &self.road.lanes[self.route.lane].centerline;
        let mut last_station = f64::NEG_INFINITY;
        for (i, g) in gates.iter().enumerate() {
            if !self.road.on_road(*g) {
                return Err(self.invalid(format!("gate {i} lies off the road")));
            }
            let station = project_onto_polyline(lane_line, *g).station;
            if station <= last_station {
                return Err(self.invalid(format!("gate {i} is not ahead of gate {}", i.saturating_sub(1))));
            }
            last_station = station;
        }
        let ego = self.ego_state();
        if !ego.is_valid() {
            return Err(self.invalid("ego start state is invalid"));
        }
        if !self.road.on_road(ego.position) {
            return Err(self.invalid("ego starts off the road"));
        }
        let mut ids = HashSet::new();
        for a in &self.actors {
            a.validate().map_err(|e| self.invalid(e))?;
            if !ids.insert(a.id.as_str()) {
                return Err(self.invalid(format!("duplicate actor id `{}`", a.id)));
            }
        }
        for inj in &self.injections {
            if inj.end_tick <= inj.start_tick {
                return Err(self.invalid("injection end_tick must follow start_tick"));
            }
        }
        if let Some(d) = &self.decision {
            if d.tick >= self.tick_budget {
                return Err(self.invalid("decision tick lies beyond the tick budget"));
            }
            let mut seen = HashSet::new();
            for p in &d.plans {
                if !seen.insert(p.plan) {
                    return Err(self.invalid(format!("plan `{}` annotated twice", p.plan.id())));
                }
            }
        }
        if self.human_script.windows(2).any(|w| w[1].tick <= w[0].tick) {
            return Err(self.invalid("human_script ticks must increase"));
        }
        Ok(())
    }

    pub fn gates(&self) -> Vec<Vec2> {
        match &self.route.gates {
            GateSpec::Listed(points) => points.clone(),
            GateSpec::Spaced { from, to, spacing } => {
                let line = &self.road.lanes[self.route.lane].centerline;
                let n = ((to - from) / spacing + 1e-9).floor() as usize + 1;
                (0..n)
                    .map(|i| point_at_station(line, from + spacing * i as f64))
                    .collect()
            }
        }
    }

    pub fn ego_state(&self) -> VehicleState {
        VehicleState::new(self.ego.position, self.ego.heading_deg.to_radians(), self.ego.speed)
    }

    pub fn injection_window(&self, kind: InjectionKind) -> Option<Injection> {
        self.injections.iter().copied().find(|i| i.kind == kind)
    }

    pub fn has_injection(&self, kind: InjectionKind) -> bool {
        self.injections.iter().any(|i| i.kind == kind)
    }

    pub fn is_failure_injection(&self) -> bool {
        !self.injections.is_empty()
    }

    /// Actors present at `tick`.
    pub fn actors_at(&self, tick: u64, dt: f64) -> Vec<ActorState> {
        self.actors.iter().filter_map(|a| a.state_at(tick, dt)).collect()
    }

    /// Script entry governing `tick`: the latest entry at or before it,
    /// else the first one.
    pub fn script_entry_for(&self, tick: u64) -> Option<&ScriptEntry> {
        self.human_script
            .iter()
            .rev()
            .find(|e| e.tick <= tick)
            .or_else(|| self.human_script.first())
    }
}

const CORPUS: &[(&str, &str)] = &[
    ("empty_straight", include_str!("../scenarios/empty_straight.toml")),
    ("following_traffic", include_str!("../scenarios/following_traffic.toml")),
    ("blocked_lane", include_str!("../scenarios/blocked_lane.toml")),
    ("door_solid_yellow", include_str!("../scenarios/door_solid_yellow.toml")),
    ("door_oncoming", include_str!("../scenarios/door_oncoming.toml")),
    ("emergency_vehicle", include_str!("../scenarios/emergency_vehicle.toml")),
    ("highway_closure", include_str!("../scenarios/highway_closure.toml")),
    ("glare_blackout", include_str!("../scenarios/glare_blackout.toml")),
    ("cone_construction", include_str!("../scenarios/cone_construction.toml")),
    (
        "freeze_parked_truck",
        include_str!("../scenarios/freeze_parked_truck.toml"),
    ),
    (
        "pedestrian_crossing",
        include_str!("../scenarios/pedestrian_crossing.toml"),
    ),
    ("distracted_abrupt", include_str!("../scenarios/distracted_abrupt.toml")),
    (
        "adjacent_vehicle_jerk",
        include_str!("../scenarios/adjacent_vehicle_jerk.toml"),
    ),
];

pub fn corpus_names() -> Vec<&'static str> {
    CORPUS.iter().map(|(n, _)| *n).collect()
}

pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let (_, text) = CORPUS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
    Scenario::from_toml_str(text)
}

/// Every shipped scenario, in corpus order.
pub fn corpus() -> Vec<Scenario> {
    CORPUS
        .iter()
        .map(|(n, text)| Scenario::from_toml_str(text).unwrap_or_else(|e| panic!("shipped scenario {n}: {e}")))
        .collect()
}

/// Every `*.toml` scenario in `dir`, sorted by file name. An empty
/// directory yields an empty list.
pub fn load_dir(dir: &Path) -> Result<Vec<Scenario>, ScenarioError> {
    let io = |source| ScenarioError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().is_some_and(|e| e == "toml") {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| Scenario::load(p)).collect()
}

/// Resolves a path to a file, or a bare name to a shipped scenario.
pub fn resolve(spec: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(spec);
    if path.exists() || spec.ends_with(".toml") {
        Scenario::load(path)
    } else {
        builtin(spec)
    }
}
