//! Prompt assembly and response parsing for the reasoning service.
//!
//! Replies must end with two lines:
//!
//! ```text
//! DECISION: HUMAN | AUTONOMY | ALTERNATIVE=<primitive>[ THEN <primitive>]
//! INTENT: <one sentence>
//! ```

use std::fmt::Write;

use crate::abstraction::{PlanLabel, StateDescriptor};

use super::{ArbitrationDecision, ArbitrationError, ArbitrationRequest, Choice, SceneSnapshot, TeamingMode};

fn narrate_snapshot(out: &mut String, snap: &SceneSnapshot, relative_t: f64) {
    let markings: Vec<&str> = snap.lane_markings.iter().map(|m| m.describe()).collect();
    let _ = writeln!(
        out,
        "[t={relative_t:+.1} s] visibility {:.2}; ego lane {} of {} (numbered from the left), lane width {:.2} m; lane markings left to right: {}",
        snap.visibility,
        snap.ego_lane + 1,
        snap.lane_count,
        snap.lane_width,
        markings.join(" | ")
    );
    if snap.objects.is_empty() {
        out.push_str("  (no objects detected)\n");
    }
    for o in &snap.objects {
        let lane = match o.lane_offset {
            Some(k) => format!("lane offset {k}"),
            None => "off road".to_string(),
        };
        let _ = writeln!(
            out,
            "  - {}: lateral {:+.2} m, ahead {:+.2} m, {}, velocity lateral {:+.2} m/s forward {:+.2} m/s, size {:.1} x {:.1} m",
            o.kind.describe(),
            o.position.x,
            o.position.y,
            lane,
            o.velocity.x,
            o.velocity.y,
            2.0 * o.half_extents.x,
            2.0 * o.half_extents.y,
        );
    }
}

fn controls(d: &StateDescriptor) -> String {
    format!(
        "Throttle: {}, Brake: {}, Steering: {}, Speed: {:.1} mph",
        d.throttle_label,
        d.brake_label,
        d.steering_label.describe(),
        d.speed_mph
    )
}

/// Deterministic prompt for `req`.
pub fn build_prompt(req: &ArbitrationRequest) -> String {
    let mut out = String::new();
    out.push_str(
        "You assist a driver and an autonomous driving stack that share control of one vehicle. \
Given the scene, your task is to analyze the situation and decide which plan the vehicle should execute.\n",
    );
    let _ = writeln!(out, "Frame: {}", req.frame);
    out.push_str("Scene narration (oldest first):\n");
    let now = req.context.latest().timestamp;
    for snap in req.context.snapshots() {
        narrate_snapshot(&mut out, snap, snap.timestamp - now);
    }
    let _ = writeln!(out, "Ego-vehicle state: {}", controls(&req.ego_descriptor));
    let _ = writeln!(out, "Autonomous stack plan: {}", req.autonomy_plan.describe());
    let u = &req.autonomy_uncertainty;
    let _ = writeln!(
        out,
        "Autonomy uncertainty: u={:.3} (intra {:.3} m^2, inter {:.3} m^2), {}",
        u.u,
        u.intra_raw,
        u.inter_raw,
        if u.triggered {
            "above threshold"
        } else {
            "below threshold"
        }
    );
    let mode = match req.mode {
        TeamingMode::ProactiveTeaming => "proactive (the driver intervened)",
        TeamingMode::SupervisoryPrompted => "supervisory (the system requested driver input)",
    };
    let _ = writeln!(out, "Teaming mode: {mode}");
    let h = &req.human_descriptor;
    let _ = writeln!(out, "Human state: attention: {}; {}", h.attention_text, controls(h));
    let _ = writeln!(
        out,
        "Human action: the driver applies {} throttle and {} brake, steering {}, which indicates the plan: {}",
        h.throttle_label,
        h.brake_label,
        h.steering_label.describe(),
        req.human_plan.describe()
    );
    let vocabulary: Vec<&str> = PlanLabel::ALL.iter().map(|p| p.describe()).collect();
    let _ = writeln!(
        out,
        "Infer the driver's intent from the scene and their action. Then choose: follow the human plan, keep the autonomous plan, \
or propose an alternative maneuver from this list: {}. An alternative may be staged as `<primitive> THEN <primitive>`.",
        vocabulary.join(", ")
    );
    out.push_str(
        "End your reply with exactly two lines:\nDECISION: HUMAN | AUTONOMY | ALTERNATIVE=<primitive>\nINTENT: <one sentence>\n",
    );
    out
}

fn parse_plan(text: &str) -> Result<PlanLabel, ArbitrationError> {
    text.trim()
        .parse::<PlanLabel>()
        .map_err(|_| ArbitrationError::MalformedResponse(format!("unknown primitive `{}`", text.trim())))
}

/// Parses the trailing DECISION/INTENT lines of a reply.
pub fn parse_response(raw: &str, req: &ArbitrationRequest) -> Result<ArbitrationDecision, ArbitrationError> {
    let lines: Vec<&str> = raw.lines().collect();
    let idx = lines
        .iter()
        .rposition(|l| l.trim_start().to_ascii_uppercase().starts_with("DECISION:"))
        .ok_or_else(|| ArbitrationError::MalformedResponse("no DECISION line".into()))?;
    let value = lines[idx].trim_start()["DECISION:".len()..].trim();
    let upper = value.to_ascii_uppercase();

    let (mut choice, mut plan, mut follow_up) = if upper == "HUMAN" {
        (Choice::Human, req.human_plan, None)
    } else if upper == "AUTONOMY" {
        (Choice::Autonomy, req.autonomy_plan, None)
    } else if upper.starts_with("ALTERNATIVE") {
        let rest = value["ALTERNATIVE".len()..].trim_start();
        let rest = rest
            .strip_prefix('=')
            .ok_or_else(|| ArbitrationError::MalformedResponse("ALTERNATIVE needs `=<primitive>`".into()))?;
        let (first, second) = match rest.to_ascii_uppercase().find(" THEN ") {
            Some(pos) => (&rest[..pos], Some(&rest[pos + " THEN ".len()..])),
            None => (rest, None),
        };
        let follow = second.map(parse_plan).transpose()?;
        (Choice::Alternative, parse_plan(first)?, follow)
    } else {
        return Err(ArbitrationError::MalformedResponse(format!(
            "unknown decision `{value}`"
        )));
    };

    // an "alternative" that repeats one of the two plans is that plan
    if choice == Choice::Alternative && follow_up.is_none() && !plan.is_lane_change() {
        if plan == req.human_plan {
            choice = Choice::Human;
        } else if plan == req.autonomy_plan {
            choice = Choice::Autonomy;
        }
    }
    if choice != Choice::Alternative {
        follow_up = None;
        plan = if choice == Choice::Human {
            req.human_plan
        } else {
            req.autonomy_plan
        };
    }

    let intent = lines[idx + 1..]
        .iter()
        .find_map(|l| {
            let t = l.trim_start();
            t.to_ascii_uppercase()
                .starts_with("INTENT:")
                .then(|| t["INTENT:".len()..].trim().to_string())
        })
        .unwrap_or_default();
    let prose = lines[..idx].join("\n").trim().to_string();
    let rationale = match (intent.is_empty(), prose.is_empty()) {
        (false, true) => intent,
        (false, false) => format!("{intent}\n{prose}"),
        (true, _) => prose,
    };
    Ok(ArbitrationDecision {
        choice,
        grounded_plan: plan,
        follow_up,
        rationale,
        latency_ms: 0.0,
    })
}

/// Renders a decision in the reply grammar.
pub fn render_decision(decision: &ArbitrationDecision) -> String {
    let head = match decision.choice {
        Choice::Human => "HUMAN".to_string(),
        Choice::Autonomy => "AUTONOMY".to_string(),
        Choice::Alternative => match decision.follow_up {
            Some(next) => format!(
                "ALTERNATIVE={} THEN {}",
                decision.grounded_plan.describe(),
                next.describe()
            ),
            None => format!("ALTERNATIVE={}", decision.grounded_plan.describe()),
        },
    };
    let intent = decision.rationale.lines().next().unwrap_or("").trim();
    format!("DECISION: {head}\nINTENT: {intent}")
}
