//! Offline stand-in for the reasoning service.
//!
//! The stub reads only the prompt text: it parses the latest scene
//! narration, the ego speed and both plans, screens each plan against a
//! fixed rule set (visibility, emergency vehicles, crossing conflicts,
//! blocked corridors, lane availability), and answers in the reply grammar.

use std::sync::LazyLock;

use regex::Regex;

use crate::abstraction::{PlanLabel, MPS_TO_MPH};
use crate::road::LaneMarking;
use crate::sim::actors::ActorKind;

use super::ArbitrationError;

const EGO_HALF_LENGTH: f64 = 2.3;
const EGO_HALF_WIDTH: f64 = 0.95;
const LOW_VISIBILITY: f64 = 0.5;
/// Range over which an object in a corridor counts as blocking it, meters.
const BLOCK_RANGE: f64 = 40.0;
const CONFLICT_HORIZON_S: f64 = 6.0;

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^\[t=([+-]?\d+\.\d) s\] visibility ([\d.]+); ego lane (\d+) of (\d+) \(numbered from the left\), lane width ([\d.]+) m; lane markings left to right: (.+)$",
    )
    .expect("valid regex")
});
static OBJECT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^\s+- ([a-z ]+): lateral ([+-][\d.]+) m, ahead ([+-][\d.]+) m, (?:lane offset (-?\d+)|off road), velocity lateral ([+-][\d.]+) m/s forward ([+-][\d.]+) m/s, size ([\d.]+) x ([\d.]+) m$",
    )
    .expect("valid regex")
});
static EGO_SPEED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^Ego-vehicle state: .*Speed: ([\d.]+) mph$").expect("valid regex"));
static AUTONOMY_PLAN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^Autonomous stack plan: (.+)$").expect("valid regex"));
static HUMAN_PLAN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)which indicates the plan: (.+)$").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StubBackend {
    #[default]
    Rules,
    /// Every call fails as if the service were down.
    AlwaysUnavailable,
}

#[derive(Debug, Clone, PartialEq)]
struct Object {
    kind: ActorKind,
    x: f64,
    y: f64,
    lane_offset: Option<i32>,
    vx: f64,
    vy: f64,
    length: f64,
    width: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Scene {
    visibility: f64,
    ego_lane: usize,
    lane_count: usize,
    lane_width: f64,
    markings: Vec<LaneMarking>,
    objects: Vec<Object>,
    ego_speed: f64,
    human_plan: PlanLabel,
    autonomy_plan: PlanLabel,
}

fn malformed(what: &str) -> ArbitrationError {
    ArbitrationError::MalformedResponse(format!("stub could not read the prompt: {what}"))
}

fn parse_scene(prompt: &str) -> Result<Scene, ArbitrationError> {
    let lines: Vec<&str> = prompt.lines().collect();
    let start = lines
        .iter()
        .rposition(|l| HEADER.is_match(l))
        .ok_or_else(|| malformed("scene narration"))?;
    let head = HEADER.captures(lines[start]).expect("matched above");
    let num = |s: &str| s.parse::<f64>().map_err(|_| malformed("number"));
    let markings = head[6]
        .split(" | ")
        .map(|m| LaneMarking::from_description(m.trim()).ok_or_else(|| malformed("lane marking")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut objects = Vec::new();
    for line in &lines[start + 1..] {
        let Some(c) = OBJECT.captures(line) else {
            if line.trim_start().starts_with("- ") {
                return Err(malformed("object line"));
            }
            if line.starts_with(char::is_whitespace) {
                continue;
            }
            break;
        };
        objects.push(Object {
            kind: ActorKind::from_description(&c[1]).ok_or_else(|| malformed("object kind"))?,
            x: num(&c[2])?,
            y: num(&c[3])?,
            lane_offset: c
                .get(4)
                .map(|m| m.as_str().parse().map_err(|_| malformed("lane offset")))
                .transpose()?,
            vx: num(&c[5])?,
            vy: num(&c[6])?,
            length: num(&c[7])?,
            width: num(&c[8])?,
        });
    }
    let plan = |re: &Regex, what: &str| -> Result<PlanLabel, ArbitrationError> {
        let c = re.captures(prompt).ok_or_else(|| malformed(what))?;
        c[1].trim().parse().map_err(|_| malformed(what))
    };
    let speed_mph = EGO_SPEED
        .captures(prompt)
        .ok_or_else(|| malformed("ego speed"))
        .and_then(|c| num(&c[1]))?;
    let ego_lane: usize = head[3].parse().map_err(|_| malformed("ego lane"))?;
    Ok(Scene {
        visibility: num(&head[2])?,
        ego_lane: ego_lane.checked_sub(1).ok_or_else(|| malformed("ego lane"))?,
        lane_count: head[4].parse().map_err(|_| malformed("lane count"))?,
        lane_width: num(&head[5])?,
        markings,
        objects,
        ego_speed: speed_mph / MPS_TO_MPH,
        human_plan: plan(&HUMAN_PLAN, "human plan")?,
        autonomy_plan: plan(&AUTONOMY_PLAN, "autonomy plan")?,
    })
}

impl Scene {
    fn in_corridor(&self, o: &Object, center_x: f64) -> bool {
        (o.x - center_x).abs() < o.width / 2.0 + EGO_HALF_WIDTH + 0.3
    }

    /// Nearest object sitting in the corridor centered `center_x` meters
    /// to the right, from alongside the ego up to `BLOCK_RANGE` ahead.
    fn blocker(&self, center_x: f64) -> Option<&Object> {
        self.objects
            .iter()
            .filter(|o| self.in_corridor(o, center_x))
            .filter(|o| o.y + o.length / 2.0 > -EGO_HALF_LENGTH && o.y - o.length / 2.0 < BLOCK_RANGE)
            .filter(|o| o.vy < self.ego_speed * 0.5 || o.vy < 1.0)
            .min_by(|a, b| a.y.total_cmp(&b.y))
    }

    /// First moving object whose constant-velocity path meets the ego while
    /// it drifts toward `target_x` at `speed`. Objects moving mostly along
    /// the road drift sideways by at most one lane.
    fn conflict(&self, target_x: f64, speed: f64) -> Option<&Object> {
        self.objects.iter().filter(|o| o.vx.hypot(o.vy) > 0.3).find(|o| {
            let drift_cap = if o.vy.abs() > o.vx.abs() {
                self.lane_width
            } else {
                f64::INFINITY
            };
            (0..=(CONFLICT_HORIZON_S * 10.0) as usize).any(|k| {
                let t = k as f64 * 0.1;
                let ego_x = target_x * (t / 2.0).min(1.0);
                let ego_y = speed * t;
                let dx = (o.x + (o.vx * t).clamp(-drift_cap, drift_cap) - ego_x).abs();
                let dy = (o.y + o.vy * t - ego_y).abs();
                dx < o.width / 2.0 + EGO_HALF_WIDTH + 0.5 && dy < o.length / 2.0 + EGO_HALF_LENGTH + 1.0
            })
        })
    }

    fn emergency_present(&self) -> bool {
        self.objects.iter().any(|o| o.kind == ActorKind::EmergencyVehicle)
    }

    fn lane_change_blocker(&self, offset: i32) -> Result<(), String> {
        let side = if offset < 0 { "left" } else { "right" };
        let target = self.ego_lane as i64 + offset as i64;
        if target < 0 || target >= self.lane_count as i64 {
            return Err(format!("there is no lane to the {side}; the maneuver leaves the road"));
        }
        let marking = if offset < 0 {
            self.markings[self.ego_lane]
        } else {
            self.markings[self.ego_lane + 1]
        };
        if marking == LaneMarking::DoubleYellow {
            return Err(format!("crossing the {} is not allowed", marking.describe()));
        }
        let x = offset as f64 * self.lane_width;
        if let Some(o) = self.blocker(x) {
            return Err(format!(
                "the {side} lane is occupied by a {} {:.0} m ahead",
                o.kind.describe(),
                o.y
            ));
        }
        if let Some(o) = self.conflict(x, self.ego_speed) {
            return Err(format!(
                "a moving {} would meet us in the {side} lane",
                o.kind.describe()
            ));
        }
        Ok(())
    }

    fn passing_lane(&self) -> Option<PlanLabel> {
        [PlanLabel::LaneChangeLeft, PlanLabel::LaneChangeRight]
            .into_iter()
            .find(|p| self.lane_change_blocker(p.lane_offset()).is_ok())
    }

    /// Ok with an intent sentence, or Err with the reason the plan is unsafe.
    fn assess(&self, plan: PlanLabel) -> Result<String, String> {
        let low_vis = self.visibility < LOW_VISIBILITY;
        let ahead_conflict = self.conflict(0.0, self.ego_speed);
        match plan {
            PlanLabel::Stop => {
                if self.emergency_present() {
                    return Ok("yield to emergency vehicle".into());
                }
                if low_vis {
                    return Ok("stop until the view clears instead of driving blind".into());
                }
                if let Some(o) = ahead_conflict {
                    return Ok(format!("stop and let the {} cross ahead", o.kind.describe()));
                }
                match self.blocker(0.0) {
                    Some(o) => match self.passing_lane() {
                        Some(p) => Err(format!(
                            "the {} ahead can be passed: {} is clear",
                            o.kind.describe(),
                            p.describe()
                        )),
                        None => Ok(format!(
                            "wait behind the {} until it is safe to continue",
                            o.kind.describe()
                        )),
                    },
                    None => Err("nothing ahead requires stopping".into()),
                }
            }
            PlanLabel::SlowDown => {
                if low_vis {
                    return Ok("slow down while visibility is poor".into());
                }
                if let Some(o) = self.blocker(0.0) {
                    return Err(format!("slowing down still runs into the {} ahead", o.kind.describe()));
                }
                match self.conflict(0.0, self.ego_speed * 0.5) {
                    Some(o) => Err(format!("slowing down is not enough to avoid the {}", o.kind.describe())),
                    None => Ok(match ahead_conflict {
                        Some(o) => format!("ease off and yield to the {}", o.kind.describe()),
                        None => "slow down".into(),
                    }),
                }
            }
            PlanLabel::DriveForward => {
                if low_vis {
                    return Err("visibility is too poor to keep driving".into());
                }
                if let Some(o) = self.blocker(0.0) {
                    return Err(format!("the {} blocks the lane {:.0} m ahead", o.kind.describe(), o.y));
                }
                if let Some(o) = ahead_conflict {
                    return Err(format!("the {} is about to cross our path", o.kind.describe()));
                }
                Ok("keep driving in the current lane".into())
            }
            PlanLabel::LaneChangeLeft | PlanLabel::LaneChangeRight => {
                if low_vis {
                    return Err("visibility is too poor for a lane change".into());
                }
                self.lane_change_blocker(plan.lane_offset())?;
                Ok(match self.blocker(0.0) {
                    Some(o) => format!(
                        "{} to pass the {} blocking our lane",
                        plan.describe(),
                        o.kind.describe()
                    ),
                    None => plan.describe().to_string(),
                })
            }
            PlanLabel::TurnLeft | PlanLabel::TurnRight => {
                Err("there is no intersection here; turning would leave the road".into())
            }
        }
    }

    fn decide(&self) -> String {
        let human = self.human_plan;
        let reason = match self.assess(human) {
            Ok(intent) => return reply("HUMAN", &intent),
            Err(reason) => reason,
        };
        if let Ok(intent) = self.assess(self.autonomy_plan) {
            return reply(
                "AUTONOMY",
                &format!("{intent}; the driver's plan is unsafe because {reason}"),
            );
        }
        let candidates = [
            PlanLabel::DriveForward,
            PlanLabel::Stop,
            PlanLabel::SlowDown,
            PlanLabel::LaneChangeLeft,
            PlanLabel::LaneChangeRight,
        ];
        for alt in candidates
            .into_iter()
            .filter(|p| *p != human && *p != self.autonomy_plan)
        {
            if let Ok(intent) = self.assess(alt) {
                return reply(
                    &format!("ALTERNATIVE={}", alt.describe()),
                    &format!("{intent}; the driver's plan is unsafe because {reason}"),
                );
            }
        }
        reply(
            &format!("ALTERNATIVE={}", PlanLabel::Stop.describe()),
            &format!("no safe option found, stopping; {reason}"),
        )
    }
}

fn reply(decision: &str, intent: &str) -> String {
    format!("DECISION: {decision}\nINTENT: {intent}")
}

impl StubBackend {
    pub fn respond(&self, prompt: &str) -> Result<String, ArbitrationError> {
        match self {
            StubBackend::AlwaysUnavailable => Err(ArbitrationError::VlmUnavailable(
                "stub configured as unavailable".into(),
            )),
            StubBackend::Rules => Ok(parse_scene(prompt)?.decide()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arbitration::test_support::{object, request};
    use crate::arbitration::{build_prompt, parse_response, Choice};

    fn answer(human: PlanLabel, autonomy: PlanLabel, objects: Vec<super::super::SceneObject>) -> String {
        StubBackend::Rules
            .respond(&build_prompt(&request(human, autonomy, objects)))
            .unwrap()
    }

    #[test]
    fn emergency_vehicle_and_stop() {
        let ev = object(ActorKind::EmergencyVehicle, 12.0, 25.0, -12.0, 0.0, None);
        assert_eq!(
            answer(PlanLabel::Stop, PlanLabel::DriveForward, vec![ev]),
            "DECISION: HUMAN\nINTENT: yield to emergency vehicle"
        );
    }

    #[test]
    fn parses_its_own_prompt() {
        let req = request(
            PlanLabel::LaneChangeLeft,
            PlanLabel::DriveForward,
            vec![object(ActorKind::Vehicle, 0.0, 20.0, 0.0, 0.0, Some(0))],
        );
        let scene = parse_scene(&build_prompt(&req)).unwrap();
        assert_eq!(scene.ego_lane, 1);
        assert_eq!(scene.lane_count, 2);
        assert_eq!(scene.objects.len(), 1);
        assert!((scene.ego_speed - 8.0).abs() < 0.01);
        assert_eq!(scene.human_plan, PlanLabel::LaneChangeLeft);
    }

    #[test]
    fn lane_change_around_blocker_is_accepted() {
        let out = answer(
            PlanLabel::LaneChangeLeft,
            PlanLabel::DriveForward,
            vec![object(ActorKind::Vehicle, 0.0, 20.0, 0.0, 0.0, Some(0))],
        );
        assert!(out.starts_with("DECISION: HUMAN"), "{out}");
    }

    #[test]
    fn forward_into_blocker_is_rejected_with_alternative() {
        let req = request(
            PlanLabel::DriveForward,
            PlanLabel::DriveForward,
            vec![object(ActorKind::Vehicle, 0.0, 20.0, 0.0, 0.0, Some(0))],
        );
        let raw = StubBackend::Rules.respond(&build_prompt(&req)).unwrap();
        let d = parse_response(&raw, &req).unwrap();
        assert_eq!(
            (d.choice, d.grounded_plan),
            (Choice::Alternative, PlanLabel::LaneChangeLeft)
        );
    }

    #[test]
    fn lane_change_off_road_is_rejected() {
        let out = answer(PlanLabel::LaneChangeRight, PlanLabel::DriveForward, vec![]);
        assert!(out.starts_with("DECISION: AUTONOMY"), "{out}");
    }

    #[test]
    fn oncoming_traffic_blocks_lane_change() {
        let out = answer(
            PlanLabel::LaneChangeLeft,
            PlanLabel::DriveForward,
            vec![object(ActorKind::Vehicle, -3.5, 45.0, 0.0, -10.0, Some(-1))],
        );
        assert!(!out.starts_with("DECISION: HUMAN"), "{out}");
    }

    #[test]
    fn unavailable_mode_errors() {
        assert!(matches!(
            StubBackend::AlwaysUnavailable.respond("x"),
            Err(ArbitrationError::VlmUnavailable(_))
        ));
    }
}
