//! Steppable episodes for both teaming modes, plus the correctness oracle.
//!
//! Tick order: actors at `t`, autonomy and uncertainty, arbitration (which
//! pauses the world), control from the active primitive or from autonomy,
//! vehicle step, collision and route checks at `t + 1`, log. Human events
//! for tick `t` are applied before anything else and logged first.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::abstraction::{abstract_plan, abstract_state, AbstractionConfig, ControlState, PlanLabel, Trajectory};
use crate::arbitration::{
    Arbiter, ArbitrationDecision, ArbitrationRequest, Choice, SceneContext, SceneSnapshot, TeamingMode,
};
use crate::geometry::{project_onto_polyline, Obb};
use crate::mock_human::control_for;
use crate::planning::{
    plan_maneuver, GroundedPrimitive, GroundingConfig, GroundingContext, PathTracker, PrimitiveCatalog, TrackerConfig,
};
use crate::scenario::{Injection, InjectionKind, Scenario};
use crate::uncertainty::{UncertaintyConfig, UncertaintyScore, UncertaintyTracker};
use crate::vehicle::{step_vehicle, ControlCommand, VehicleParams, VehicleState};

use super::actors::ActorState;
use super::autonomy::{AutonomyConfig, AutonomyInput, AutonomyPolicy};
use super::{check_world, snapshot_scene, Collision, PerceptionConfig, RouteTracker};

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorParams {
    pub tick_s: f64,
    /// Untriggered ticks needed before supervisory mode asks again.
    pub rearm_ticks: u64,
    /// Ticks between the three context snapshots (0.5 s at 20 Hz).
    pub context_stride: u64,
    /// Comfortable deceleration of the stop primitive's speed profile.
    pub stop_decel: f64,
    pub correctness_horizon_s: f64,
    pub completion_bar: f64,
}

impl Default for SimulatorParams {
    fn default() -> Self {
        Self {
            tick_s: 0.05,
            rearm_ticks: 40,
            context_stride: 10,
            stop_decel: 3.0,
            correctness_horizon_s: 15.0,
            completion_bar: 0.95,
        }
    }
}

/// Everything a run needs besides the scenario and the arbiter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub simulator: SimulatorParams,
    pub vehicle: VehicleParams,
    pub abstraction: AbstractionConfig,
    pub uncertainty: UncertaintyConfig,
    pub autonomy: AutonomyConfig,
    pub perception: PerceptionConfig,
    pub primitives: PrimitiveCatalog,
    pub tracker: TrackerConfig,
    pub grounding: GroundingConfig,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        let s = &self.simulator;
        if !(s.tick_s > 0.0) {
            return Err("simulator.tick_s must be positive".into());
        }
        if s.context_stride == 0 || !(s.correctness_horizon_s > 0.0) || !(s.stop_decel > 0.0) {
            return Err("simulator: context_stride, correctness_horizon_s and stop_decel must be positive".into());
        }
        if !(0.0..=1.0).contains(&s.completion_bar) {
            return Err("simulator.completion_bar must lie in [0, 1]".into());
        }
        self.abstraction.validate().map_err(|e| e.to_string())?;
        self.uncertainty.validate().map_err(|e| e.to_string())?;
        self.autonomy.validate()?;
        self.primitives.validate()?;
        self.tracker.lateral.validate()?;
        self.tracker.longitudinal.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Pure autonomy, no arbitration.
    Autonomy,
    Proactive,
    Supervisory,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Autonomy => "autonomy",
            Mode::Proactive => "proactive",
            Mode::Supervisory => "supervisory",
        }
    }

    fn teaming(self) -> TeamingMode {
        match self {
            Mode::Supervisory => TeamingMode::SupervisoryPrompted,
            _ => TeamingMode::ProactiveTeaming,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "autonomy" => Ok(Mode::Autonomy),
            "proactive" => Ok(Mode::Proactive),
            "supervisory" => Ok(Mode::Supervisory),
            other => Err(format!("unknown mode `{other}` (autonomy, proactive, supervisory)")),
        }
    }
}

/// A human plan plus the raw controls that express it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanProposal {
    pub plan: PlanLabel,
    pub control: ControlState,
    /// Annotation of the plan, when known.
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeOptions {
    pub mode: Option<Mode>,
    pub seed: u64,
    /// Replaces the scenario script: used at the decision tick in
    /// proactive mode and at every trigger in supervisory mode.
    pub proposal: Option<HumanProposal>,
    /// Executes this plan's primitive at this tick regardless of mode.
    pub forced: Option<(u64, PlanLabel)>,
    /// Stops the run at this tick (exclusive) when earlier than the budget.
    pub horizon_end: Option<u64>,
    /// Keeps the JSONL event log in the result.
    pub record_log: bool,
    /// Human input comes only from `HumanEvent`s; the scenario script and
    /// `proposal` are ignored.
    pub live: bool,
    /// Human events by tick, applied in order. Must be sorted by tick.
    pub events: Vec<(u64, HumanEvent)>,
}

impl EpisodeOptions {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode: Some(mode),
            seed,
            record_log: true,
            ..Default::default()
        }
    }

    fn mode(&self) -> Mode {
        self.mode.unwrap_or(Mode::Autonomy)
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("mode `{0}` needs an arbiter")]
    MissingArbiter(&'static str),
    #[error("scenario `{0}` has no annotated decision point")]
    MissingDecisionPoint(String),
    #[error("cannot write event log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub tick: u64,
    /// Pairs the request shown to observers with this decision.
    pub correlation_id: String,
    pub mode: Mode,
    pub human_plan: PlanLabel,
    pub human_correct: Option<bool>,
    pub autonomy_plan: PlanLabel,
    pub uncertainty: f64,
    pub decision: ArbitrationDecision,
    /// True when arbitration failed and the safe stop was executed instead.
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Plan whose primitive was started, `None` when autonomy kept control.
    pub executed: Option<PlanLabel>,
    pub direct_fallback: bool,
    /// The request as shown to the arbiter; not serialized.
    #[serde(skip)]
    pub request: Option<Box<ArbitrationRequest>>,
}

impl DecisionRecord {
    pub fn selected_human(&self) -> bool {
        !self.fallback && self.decision.choice == Choice::Human
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Collision,
    RouteComplete,
    TickBudget,
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario: String,
    pub mode: Mode,
    pub arbiter: String,
    pub seed: u64,
    pub collided: bool,
    pub collision: Option<Collision>,
    pub route_completion: f64,
    pub ticks: u64,
    pub interventions: usize,
    pub decisions: Vec<DecisionRecord>,
    pub handovers: Vec<u64>,
    pub first_trigger: Option<u64>,
    pub end_reason: EndReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_log_path: Option<PathBuf>,
    #[serde(skip)]
    pub scores: Vec<UncertaintyScore>,
    #[serde(skip)]
    pub event_log: Vec<String>,
}

impl EpisodeResult {
    pub fn write_event_log(&mut self, path: &Path) -> Result<(), EpisodeError> {
        let mut text = self.event_log.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|source| EpisodeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.event_log_path = Some(path.to_path_buf());
        Ok(())
    }

    pub fn event_log_text(&self) -> String {
        let mut text = self.event_log.join("\n");
        text.push('\n');
        text
    }
}

/// Mixes the scenario seed with the run seed.
pub fn run_seed(scenario: &Scenario, seed: u64) -> u64 {
    scenario.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed
}

fn r4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

struct ActivePrimitive {
    grounded: GroundedPrimitive,
    tracker: PathTracker,
    start_tick: u64,
    start_speed: f64,
    still_ticks: u64,
    follow_up: Option<PlanLabel>,
}

enum PrimitiveStep {
    Command(ControlCommand),
    Done,
}

impl ActivePrimitive {
    fn step(&mut self, ego: &VehicleState, tick: u64, cfg: &SimConfig) -> PrimitiveStep {
        let dt = cfg.simulator.tick_s;
        let spec = &self.grounded.spec;
        let elapsed = (tick - self.start_tick) as f64 * dt;
        let station = project_onto_polyline(&self.grounded.reference, ego.position).station;
        let remaining = self.grounded.goal_station - station;
        let target_speed = if spec.label == PlanLabel::Stop {
            if ego.speed < 0.05 {
                self.still_ticks += 1;
            } else {
                self.still_ticks = 0;
            }
            if self.still_ticks as f64 * dt >= spec.duration_s || elapsed > spec.duration_s + 20.0 {
                return PrimitiveStep::Done;
            }
            let profile = (2.0 * cfg.simulator.stop_decel * (remaining - 0.5).max(0.0)).sqrt();
            profile.min(self.start_speed)
        } else {
            if remaining <= 0.0 || elapsed >= spec.duration_s {
                return PrimitiveStep::Done;
            }
            spec.target_speed
        };
        PrimitiveStep::Command(self.tracker.control(&self.grounded.reference, target_speed, ego, dt))
    }
}

/// Raw human controls as sent by a teleoperation client.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanControls {
    /// Normalized steering, positive to the right.
    pub steering: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl HumanControls {
    /// Below this magnitude an input counts as released.
    pub const DEADBAND: f64 = 0.05;

    pub fn validate(&self) -> Result<(), String> {
        let ok = |v: f64, lo: f64, hi: f64| v.is_finite() && (lo..=hi).contains(&v);
        if !ok(self.steering, -1.0, 1.0) || !ok(self.throttle, 0.0, 1.0) || !ok(self.brake, 0.0, 1.0) {
            return Err("steering must lie in [-1, 1], throttle and brake in [0, 1]".into());
        }
        Ok(())
    }

    pub fn engaged(&self) -> bool {
        self.steering.abs() > Self::DEADBAND || self.throttle > Self::DEADBAND || self.brake > Self::DEADBAND
    }

    fn command(&self) -> ControlCommand {
        ControlCommand {
            steering: self.steering,
            throttle: self.throttle,
            brake: self.brake,
        }
    }
}

/// Human input applied at a tick boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HumanEvent {
    /// Held controls; released controls disengage.
    HumanInput {
        controls: HumanControls,
    },
    /// Human-initiated arbitration. Without a plan, the plan is read off
    /// the given controls, else the held ones.
    Intervention {
        #[serde(default)]
        plan: Option<PlanLabel>,
        #[serde(default)]
        controls: Option<HumanControls>,
    },
    Disengage,
}

/// Notifications raised while stepping.
#[derive(Debug, Clone)]
pub enum EpisodeEvent {
    /// Raised before the arbiter is consulted.
    RequestShown {
        correlation_id: String,
        request: Box<ArbitrationRequest>,
    },
    Decision(Box<DecisionRecord>),
    Handover {
        tick: u64,
        completed: PlanLabel,
    },
}

/// One episode advanced a tick at a time. Batch runs and live sessions go
/// through the same `step`, so a live log replays headlessly.
pub struct Episode<'a> {
    scenario: &'a Scenario,
    cfg: &'a SimConfig,
    arbiter: Option<&'a Arbiter>,
    opts: &'a EpisodeOptions,
    mode: Mode,
    policy: AutonomyPolicy,
    history: Vec<VehicleState>,
    log: Vec<String>,
    freeze: Option<Injection>,
    end_tick: u64,
    ego: VehicleState,
    route: RouteTracker,
    u_tracker: UncertaintyTracker,
    scores: Vec<UncertaintyScore>,
    decisions: Vec<DecisionRecord>,
    handovers: Vec<u64>,
    active: Option<ActivePrimitive>,
    freeze_cleared: bool,
    armed: bool,
    quiet_ticks: u64,
    last_cmd: ControlCommand,
    last_source: String,
    held: Option<HumanControls>,
    collision: Option<Collision>,
    end_reason: Option<EndReason>,
    tick: u64,
}

impl<'a> Episode<'a> {
    /// Validates inputs and writes the log header. `arbiter` may be `None`
    /// only in autonomy mode.
    pub fn new(
        scenario: &'a Scenario,
        cfg: &'a SimConfig,
        arbiter: Option<&'a Arbiter>,
        opts: &'a EpisodeOptions,
    ) -> Result<Self, EpisodeError> {
        cfg.validate().map_err(EpisodeError::Config)?;
        let mode = opts.mode();
        if mode != Mode::Autonomy && arbiter.is_none() {
            return Err(EpisodeError::MissingArbiter(mode.name()));
        }
        let policy = AutonomyPolicy::new(
            cfg.autonomy.clone(),
            cfg.vehicle.clone(),
            cfg.abstraction.clone(),
            cfg.simulator.tick_s,
            run_seed(scenario, opts.seed),
        );
        let ego = scenario.ego_state();
        let mut route = RouteTracker::new(scenario.gates(), scenario.route.completion_radius);
        route.update(ego.position);
        let mut history = Vec::with_capacity(scenario.tick_budget as usize + 1);
        history.push(ego);
        let mut ep = Self {
            scenario,
            cfg,
            arbiter,
            opts,
            mode,
            policy,
            history,
            log: Vec::new(),
            freeze: scenario.injection_window(InjectionKind::PolicyFreeze),
            end_tick: opts
                .horizon_end
                .map_or(scenario.tick_budget, |h| h.min(scenario.tick_budget)),
            ego,
            route,
            u_tracker: UncertaintyTracker::new(),
            scores: Vec::new(),
            decisions: Vec::new(),
            handovers: Vec::new(),
            active: None,
            freeze_cleared: false,
            armed: true,
            quiet_ticks: 0,
            last_cmd: ControlCommand::default(),
            last_source: "autonomy".into(),
            held: None,
            collision: None,
            end_reason: None,
            tick: 0,
        };
        let mut header = json!({
            "type": "header",
            "schema_version": LOG_SCHEMA_VERSION,
            "scenario": scenario.name,
            "mode": mode.name(),
            "arbiter": ep.arbiter_name(),
            "seed": opts.seed,
        });
        if opts.live {
            header["live"] = json!(true);
        }
        ep.emit(header);
        Ok(ep)
    }

    fn arbiter_name(&self) -> &'static str {
        self.arbiter.map(Arbiter::name).unwrap_or("none")
    }

    fn emit(&mut self, v: serde_json::Value) {
        if self.opts.record_log {
            self.log.push(v.to_string());
        }
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn tick_s(&self) -> f64 {
        self.cfg.simulator.tick_s
    }

    pub fn ego(&self) -> &VehicleState {
        &self.ego
    }

    /// Actors at the current tick.
    pub fn actors(&self) -> Vec<ActorState> {
        self.scenario.actors_at(self.tick, self.cfg.simulator.tick_s)
    }

    /// Command applied during the last step and who produced it.
    pub fn last_command(&self) -> (ControlCommand, &str) {
        (self.last_cmd, &self.last_source)
    }

    pub fn last_score(&self) -> Option<&UncertaintyScore> {
        self.scores.last()
    }

    pub fn route_completion(&self) -> f64 {
        self.route.completion()
    }

    pub fn human_controls(&self) -> Option<HumanControls> {
        self.held
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn log_lines(&self) -> &[String] {
        &self.log
    }

    pub fn is_finished(&self) -> bool {
        self.end_reason.is_some() || self.tick >= self.end_tick
    }

    fn blackout(&self, tick: u64) -> bool {
        self.scenario
            .injections
            .iter()
            .any(|i| i.kind == InjectionKind::PerceptionBlackout && i.contains(tick))
    }

    fn snapshot(&self, tick: u64) -> SceneSnapshot {
        let dt = self.cfg.simulator.tick_s;
        let actors = self.scenario.actors_at(tick, dt);
        snapshot_scene(
            &self.scenario.road,
            &self.history[tick as usize],
            &actors,
            tick as f64 * dt,
            self.blackout(tick),
            &self.cfg.perception,
        )
    }

    /// Snapshots at `t - 2k`, `t - k`, `t`; ticks before 0 reuse tick 0.
    fn context(&self, tick: u64) -> SceneContext {
        let dt = self.cfg.simulator.tick_s;
        let k = self.cfg.simulator.context_stride;
        let snaps = [2 * k, k, 0].map(|back| {
            let mut s = self.snapshot(tick.saturating_sub(back));
            s.timestamp = (tick as f64 - back as f64) * dt;
            s
        });
        SceneContext::new(snaps).expect("context snapshots are evenly spaced")
    }

    fn ground(&self, plan: PlanLabel, ego: &VehicleState, tick: u64) -> GroundedPrimitive {
        let obstacles: Vec<Obb> = if self.blackout(tick) {
            Vec::new()
        } else {
            self.scenario
                .actors_at(tick, self.cfg.simulator.tick_s)
                .iter()
                .map(ActorState::footprint)
                .collect()
        };
        let (ego_lane, _) = self.scenario.road.nearest_lane(ego.position);
        let ctx = GroundingContext {
            road: &self.scenario.road,
            ego_lane,
            obstacles: &obstacles,
        };
        plan_maneuver(plan, ego, &ctx, &self.cfg.primitives, &self.cfg.grounding)
    }

    fn start(&self, plan: PlanLabel, follow_up: Option<PlanLabel>, ego: &VehicleState, tick: u64) -> ActivePrimitive {
        ActivePrimitive {
            grounded: self.ground(plan, ego, tick),
            tracker: PathTracker::new(&self.cfg.tracker),
            start_tick: tick,
            start_speed: ego.speed,
            still_ticks: 0,
            follow_up,
        }
    }

    /// Plan label of holding `controls` over the autonomy planning horizon.
    pub fn infer_plan(&self, controls: HumanControls) -> PlanLabel {
        let cfg = self.cfg;
        let dt = cfg.simulator.tick_s;
        let steps = (cfg.autonomy.waypoint_spacing_s / dt).round().max(1.0) as usize;
        let pose = self.ego.pose();
        let cmd = controls.command();
        let mut ego = self.ego;
        let pts = (0..cfg.autonomy.horizon_waypoints)
            .map(|_| {
                for _ in 0..steps {
                    ego = step_vehicle(&ego, &cmd, &cfg.vehicle, dt);
                }
                pose.to_ego(ego.position)
            })
            .collect();
        let traj = Trajectory::with_max_step(pts, f64::INFINITY).expect("finite rollout");
        abstract_plan(&traj, &cfg.abstraction)
    }

    fn live_proposal(&self, plan: Option<PlanLabel>, controls: Option<HumanControls>) -> Option<HumanProposal> {
        let controls = controls.or(self.held);
        let plan = plan.or_else(|| controls.map(|c| self.infer_plan(c)))?;
        let c = controls.unwrap_or_default();
        Some(HumanProposal {
            plan,
            control: ControlState {
                throttle: c.throttle,
                brake: c.brake,
                steering: c.steering,
                speed_mps: self.ego.speed,
                human_attention: None,
            },
            correct: None,
        })
    }

    /// Scripted or injected proposal available at `tick`, if any.
    fn proposal(&self, tick: u64, trigger: bool) -> Option<HumanProposal> {
        let mode = self.mode;
        let ego = &self.ego;
        if self.opts.live {
            return (mode == Mode::Supervisory && trigger)
                .then(|| self.live_proposal(None, None))
                .flatten();
        }
        let decision_tick = self.scenario.decision.as_ref().map(|d| d.tick);
        let attention = self.scenario.decision.as_ref().map(|d| d.attention);
        if let Some(p) = self.opts.proposal {
            let due = match mode {
                Mode::Proactive => Some(tick) == decision_tick,
                Mode::Supervisory => trigger,
                Mode::Autonomy => false,
            };
            let mut p = p;
            p.control.speed_mps = ego.speed;
            return due.then_some(p);
        }
        let entry = match mode {
            Mode::Proactive => self.scenario.human_script.iter().find(|e| e.tick == tick),
            Mode::Supervisory if trigger => self.scenario.script_entry_for(tick),
            _ => None,
        }?;
        let attention = entry.attention.or(attention);
        let mut control = control_for(entry.plan, ego.speed, attention);
        if let Some(c) = entry.control {
            control.throttle = c.throttle;
            control.brake = c.brake;
            control.steering = c.steering;
        }
        Some(HumanProposal {
            plan: entry.plan,
            control,
            correct: Some(entry.correct),
        })
    }

    fn log_human_event(&mut self, ev: &HumanEvent) {
        let mut v = serde_json::to_value(ev).expect("human events serialize");
        v["tick"] = json!(self.tick);
        self.emit(v);
    }

    fn arbitrate(
        &mut self,
        human: HumanProposal,
        teaming: TeamingMode,
        autonomy_plan: PlanLabel,
        score: UncertaintyScore,
        sink: &mut dyn FnMut(EpisodeEvent),
    ) {
        let Some(arbiter) = self.arbiter else { return };
        let cfg = self.cfg;
        let tick = self.tick;
        let ego = self.ego;
        let correlation_id = format!("arb-{}", self.decisions.len() + 1);
        let ego_control = ControlState {
            throttle: self.last_cmd.throttle,
            brake: self.last_cmd.brake,
            steering: self.last_cmd.steering,
            speed_mps: ego.speed,
            human_attention: None,
        };
        let request = ArbitrationRequest {
            frame: tick,
            context: self.context(tick),
            ego_descriptor: abstract_state(&ego_control, &cfg.abstraction),
            human_descriptor: abstract_state(&human.control, &cfg.abstraction),
            human_plan: human.plan,
            autonomy_plan,
            autonomy_uncertainty: score,
            mode: teaming,
        };
        self.emit(json!({
            "type": "request_shown",
            "tick": tick,
            "correlation_id": correlation_id,
            "human_plan": human.plan,
            "autonomy_plan": autonomy_plan,
        }));
        sink(EpisodeEvent::RequestShown {
            correlation_id: correlation_id.clone(),
            request: Box::new(request.clone()),
        });
        let (decision, fallback, error) = match arbiter.arbitrate(&request, human.correct) {
            Ok(d) => (d, false, None),
            Err(e) => {
                log::warn!("arbitration failed at tick {tick}: {e}; executing safe stop");
                let d = ArbitrationDecision {
                    choice: Choice::Alternative,
                    grounded_plan: PlanLabel::Stop,
                    follow_up: None,
                    rationale: format!("safe-stop fallback: {e}"),
                    latency_ms: 0.0,
                };
                (d, true, Some(e.to_string()))
            }
        };
        let executed = match decision.choice {
            Choice::Autonomy if !fallback => None,
            _ => Some(decision.grounded_plan),
        };
        self.active = executed.map(|plan| self.start(plan, decision.follow_up, &ego, tick));
        // the human re-engages after every decision
        self.held = None;
        let record = DecisionRecord {
            tick,
            correlation_id,
            mode: self.mode,
            human_plan: human.plan,
            human_correct: human.correct,
            autonomy_plan,
            uncertainty: score.u,
            decision,
            fallback,
            error,
            executed,
            direct_fallback: self.active.as_ref().is_some_and(|a| a.grounded.direct_fallback),
            request: Some(Box::new(request)),
        };
        self.emit(json!({
            "type": "decision",
            "tick": tick,
            "correlation_id": record.correlation_id,
            "human_plan": record.human_plan,
            "human_correct": record.human_correct,
            "autonomy_plan": record.autonomy_plan,
            "u": r4(record.uncertainty),
            "choice": record.decision.choice,
            "grounded_plan": record.decision.grounded_plan,
            "follow_up": record.decision.follow_up,
            "rationale": record.decision.rationale,
            "fallback": record.fallback,
            "executed": record.executed,
            "direct_fallback": record.direct_fallback,
        }));
        sink(EpisodeEvent::Decision(Box::new(record.clone())));
        self.decisions.push(record);
    }

    /// Applies `inputs`, then advances one tick. Does nothing once finished.
    pub fn step(&mut self, inputs: &[HumanEvent], sink: &mut dyn FnMut(EpisodeEvent)) {
        if self.is_finished() {
            return;
        }
        let sc = self.scenario;
        let cfg = self.cfg;
        let dt = cfg.simulator.tick_s;
        let tick = self.tick;

        let mut intervention = None;
        for ev in inputs {
            self.log_human_event(ev);
            match *ev {
                HumanEvent::HumanInput { controls } => self.held = controls.engaged().then_some(controls),
                HumanEvent::Disengage => self.held = None,
                HumanEvent::Intervention { plan, controls } => {
                    if let Some(c) = controls {
                        self.held = c.engaged().then_some(c);
                    }
                    intervention = Some((plan, controls));
                }
            }
        }

        let actors = sc.actors_at(tick, dt);
        let in_window = |kind: InjectionKind| sc.injections.iter().any(|i| i.kind == kind && i.contains(tick));
        let frozen = self.freeze.is_some_and(|f| f.contains(tick)) && !self.freeze_cleared;
        let ego = self.ego;
        let input = AutonomyInput {
            road: &sc.road,
            route_lane: sc.route.lane,
            cruise_speed: sc.route.cruise_speed,
            ego: &ego,
            actors: &actors,
            blackout: in_window(InjectionKind::PerceptionBlackout),
            frozen,
            scatter: in_window(InjectionKind::CandidateScatter),
            tick,
        };
        let auto = self.policy.plan(&input);
        let score = self
            .u_tracker
            .update(&auto.candidates, &cfg.uncertainty)
            .expect("autonomy candidates have equal length");
        self.scores.push(score);

        if let Some((at, plan)) = self.opts.forced {
            if at == tick {
                self.active = Some(self.start(plan, None, &ego, tick));
            }
        }

        let supervisory_due = self.mode == Mode::Supervisory && self.active.is_none() && self.armed && score.triggered;
        let proposal = match self.mode {
            Mode::Proactive => self.proposal(tick, false),
            Mode::Supervisory if supervisory_due => self.proposal(tick, true),
            _ => None,
        };
        if supervisory_due {
            self.armed = false;
        }
        if score.triggered {
            self.quiet_ticks = 0;
        } else {
            self.quiet_ticks += 1;
            if self.quiet_ticks >= cfg.simulator.rearm_ticks {
                self.armed = true;
            }
        }

        if let Some(human) = proposal {
            self.arbitrate(human, self.mode.teaming(), auto.plan, score, sink);
        } else if let Some((plan, controls)) = intervention {
            if self.mode != Mode::Autonomy {
                if let Some(human) = self.live_proposal(plan, controls) {
                    self.arbitrate(human, TeamingMode::ProactiveTeaming, auto.plan, score, sink);
                }
            }
        }

        let mut source = "autonomy".to_string();
        let mut command = auto.command;
        while let Some(p) = self.active.as_mut() {
            match p.step(&self.ego, tick, cfg) {
                PrimitiveStep::Command(c) => {
                    command = c;
                    source = format!("primitive:{}", p.grounded.spec.label.id());
                    break;
                }
                PrimitiveStep::Done => {
                    let done = p.grounded.spec.label;
                    let next = p.follow_up;
                    if self.freeze.is_some_and(|f| tick >= f.start_tick) {
                        self.freeze_cleared = true;
                    }
                    self.active = next.map(|plan| self.start(plan, None, &self.ego, tick));
                    if self.active.is_none() {
                        self.handovers.push(tick);
                        self.emit(json!({"type": "handover", "tick": tick, "completed": done}));
                        sink(EpisodeEvent::Handover { tick, completed: done });
                    }
                }
            }
        }
        if source == "autonomy" {
            if let Some(h) = self.held {
                command = h.command();
                source = "human".into();
            } else if frozen && self.freeze_cleared {
                // a freeze cleared this tick releases the brake immediately
                let mut input = input;
                input.frozen = false;
                command = self.policy.plan(&input).command;
            }
        }

        self.ego = step_vehicle(&self.ego, &command, &cfg.vehicle, dt);
        self.last_cmd = command.clamped();
        self.last_source = source;
        self.tick += 1;
        self.history.push(self.ego);
        let actors_next = sc.actors_at(self.tick, dt);
        self.collision = check_world(&self.ego, &actors_next, &sc.road);
        let completion = self.route.update(self.ego.position);
        let (ego, cmd) = (self.ego, self.last_cmd);
        self.emit(json!({
            "type": "tick",
            "tick": self.tick,
            "x": r4(ego.position.x),
            "y": r4(ego.position.y),
            "heading": r4(ego.heading),
            "speed": r4(ego.speed),
            "steering": r4(cmd.steering),
            "throttle": r4(cmd.throttle),
            "brake": r4(cmd.brake),
            "source": self.last_source,
            "autonomy_plan": auto.plan,
            "u": r4(score.u),
            "triggered": score.triggered,
            "completion": r4(completion),
        }));
        if self.collision.is_some() {
            self.end_reason = Some(EndReason::Collision);
        } else if self.route.is_complete() {
            self.end_reason = Some(EndReason::RouteComplete);
        }
    }

    /// Closes the log and summarizes the run.
    pub fn finish(mut self) -> EpisodeResult {
        let end_reason = self.end_reason.unwrap_or(if self.end_tick < self.scenario.tick_budget {
            EndReason::Horizon
        } else {
            EndReason::TickBudget
        });
        let first_trigger = crate::uncertainty::first_trigger(&self.scores);
        self.emit(json!({
            "type": "end",
            "ticks": self.tick,
            "reason": end_reason,
            "collided": self.collision.is_some(),
            "collision_with": self.collision.as_ref().map(|c| c.actor_id.clone()),
            "route_completion": r4(self.route.completion()),
            "interventions": self.decisions.len(),
            "first_trigger": first_trigger,
        }));
        EpisodeResult {
            scenario: self.scenario.name.clone(),
            mode: self.mode,
            arbiter: self.arbiter_name().to_string(),
            seed: self.opts.seed,
            collided: self.collision.is_some(),
            collision: self.collision,
            route_completion: self.route.completion(),
            ticks: self.tick,
            interventions: self.decisions.len(),
            decisions: self.decisions,
            handovers: self.handovers,
            first_trigger,
            end_reason,
            event_log_path: None,
            scores: self.scores,
            event_log: self.log,
        }
    }
}

/// Runs one episode, applying `opts.events` at their ticks. `arbiter` may
/// be `None` only in autonomy mode.
pub fn run_episode(
    scenario: &Scenario,
    cfg: &SimConfig,
    arbiter: Option<&Arbiter>,
    opts: &EpisodeOptions,
) -> Result<EpisodeResult, EpisodeError> {
    let mut ep = Episode::new(scenario, cfg, arbiter, opts)?;
    let mut pending = opts.events.iter().peekable();
    let mut batch = Vec::new();
    while !ep.is_finished() {
        batch.clear();
        while let Some((_, ev)) = pending.next_if(|(t, _)| *t <= ep.tick()) {
            batch.push(*ev);
        }
        ep.step(&batch, &mut |_| {});
    }
    Ok(ep.finish())
}

/// What a recorded log needs to be run again.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySpec {
    pub scenario: String,
    pub mode: Mode,
    pub arbiter: String,
    pub seed: u64,
    pub live: bool,
    pub events: Vec<(u64, HumanEvent)>,
}

impl ReplaySpec {
    pub fn options(&self) -> EpisodeOptions {
        EpisodeOptions {
            live: self.live,
            events: self.events.clone(),
            ..EpisodeOptions::new(self.mode, self.seed)
        }
    }
}

#[derive(Deserialize)]
struct Header {
    schema_version: u32,
    scenario: String,
    mode: Mode,
    arbiter: String,
    seed: u64,
    #[serde(default)]
    live: bool,
}

/// Reads the header and human events of a JSONL event log.
pub fn parse_event_log(text: &str) -> Result<ReplaySpec, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or("empty event log")?;
    let header: Header = serde_json::from_str(first).map_err(|e| format!("line 1: bad header: {e}"))?;
    if header.schema_version != LOG_SCHEMA_VERSION {
        return Err(format!("log schema_version {} is not supported", header.schema_version));
    }
    let mut events = Vec::new();
    for (i, line) in lines {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        if !matches!(v["type"].as_str(), Some("human_input" | "intervention" | "disengage")) {
            continue;
        }
        let tick = v["tick"]
            .as_u64()
            .ok_or_else(|| format!("line {}: missing tick", i + 1))?;
        let mut body = v;
        body.as_object_mut().expect("object").remove("tick");
        let ev: HumanEvent = serde_json::from_value(body).map_err(|e| format!("line {}: {e}", i + 1))?;
        events.push((tick, ev));
    }
    Ok(ReplaySpec {
        scenario: header.scenario,
        mode: header.mode,
        arbiter: header.arbiter,
        seed: header.seed,
        live: header.live,
        events,
    })
}

/// Autonomy until the decision tick, then `plan`'s primitive, then autonomy
/// again for the correctness horizon.
pub fn oracle_rollout(scenario: &Scenario, plan: PlanLabel, cfg: &SimConfig) -> Result<EpisodeResult, EpisodeError> {
    let decision = scenario
        .decision
        .as_ref()
        .ok_or_else(|| EpisodeError::MissingDecisionPoint(scenario.name.clone()))?;
    let horizon = (cfg.simulator.correctness_horizon_s / cfg.simulator.tick_s).round() as u64;
    let opts = EpisodeOptions {
        mode: Some(Mode::Autonomy),
        seed: 0,
        forced: Some((decision.tick, plan)),
        horizon_end: Some(decision.tick + horizon),
        ..Default::default()
    };
    run_episode(scenario, cfg, None, &opts)
}

/// True iff executing `plan` at the decision point avoids collision and
/// reaches the completion bar within the horizon.
pub fn correctness_oracle(scenario: &Scenario, plan: PlanLabel, cfg: &SimConfig) -> Result<bool, EpisodeError> {
    let r = oracle_rollout(scenario, plan, cfg)?;
    Ok(!r.collided && r.route_completion >= cfg.simulator.completion_bar - 1e-9)
}
