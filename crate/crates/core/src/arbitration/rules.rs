//! Rule-table arbiter (the decision-tree baseline).
//!
//! ```text
//! # comment
//! IF <predicate> [AND <predicate>]* THEN HUMAN|AUTONOMY
//! DEFAULT THEN HUMAN|AUTONOMY
//! ```
//!
//! Predicates: `marking_crossed`, `marking_crossed=<marking>`,
//! `oncoming<N`, `oncoming>=N`, `attention=<attention>`,
//! `uncertainty=triggered|nominal`, `plan=<plan>|lane_change|turn`.
//! The `DEFAULT` rule is mandatory and must come last.

use std::fmt;

use thiserror::Error;

use crate::abstraction::{Attention, PlanLabel};
use crate::road::LaneMarking;

use super::{ArbitrationDecision, ArbitrationRequest, Choice};

const SHIPPED_RULES: &str = include_str!("../../assets/decision_tree.rules");

#[derive(Debug, Error, Clone, PartialEq)]
#[error("rule parse error on line {line}: {message}")]
pub struct RuleParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanCategory {
    Exact(PlanLabel),
    LaneChange,
    Turn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predicate {
    /// Any solid marking, or a specific one, is crossed by the human plan.
    MarkingCrossed(Option<LaneMarking>),
    OncomingBelow(f64),
    OncomingAtLeast(f64),
    Attention(Attention),
    UncertaintyTriggered(bool),
    Plan(PlanCategory),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub predicates: Vec<Predicate>,
    pub choice: Choice,
    pub line: usize,
    pub text: String,
}

impl Rule {
    pub fn is_default(&self) -> bool {
        self.predicates.is_empty()
    }
}

/// Ordered rules; the last one is the default.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleTable {
    rules: Vec<Rule>,
}

fn err(line: usize, message: impl Into<String>) -> RuleParseError {
    RuleParseError {
        line,
        message: message.into(),
    }
}

fn parse_choice(text: &str, line: usize) -> Result<Choice, RuleParseError> {
    match text.trim() {
        "HUMAN" => Ok(Choice::Human),
        "AUTONOMY" => Ok(Choice::Autonomy),
        other => Err(err(line, format!("expected HUMAN or AUTONOMY, found `{other}`"))),
    }
}

fn parse_attention(text: &str) -> Option<Attention> {
    match text {
        "attentive" => Some(Attention::Attentive),
        "distracted" => Some(Attention::Distracted),
        "gaze_left" => Some(Attention::GazeLeft),
        "gaze_right" => Some(Attention::GazeRight),
        _ => None,
    }
}

fn parse_predicate(text: &str, line: usize) -> Result<Predicate, RuleParseError> {
    let text = text.trim();
    if text == "marking_crossed" {
        return Ok(Predicate::MarkingCrossed(None));
    }
    if let Some(rest) = text.strip_prefix("oncoming>=") {
        let v: f64 = rest
            .trim()
            .parse()
            .map_err(|_| err(line, format!("bad distance `{rest}`")))?;
        return Ok(Predicate::OncomingAtLeast(v));
    }
    if let Some(rest) = text.strip_prefix("oncoming<") {
        let v: f64 = rest
            .trim()
            .parse()
            .map_err(|_| err(line, format!("bad distance `{rest}`")))?;
        return Ok(Predicate::OncomingBelow(v));
    }
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| err(line, format!("unknown predicate `{text}`")))?;
    let value = value.trim();
    match key.trim() {
        "marking_crossed" => {
            let m = LaneMarking::ALL
                .into_iter()
                .find(|m| m.id() == value)
                .ok_or_else(|| err(line, format!("unknown marking `{value}`")))?;
            Ok(Predicate::MarkingCrossed(Some(m)))
        }
        "attention" => parse_attention(value)
            .map(Predicate::Attention)
            .ok_or_else(|| err(line, format!("unknown attention `{value}`"))),
        "uncertainty" => match value {
            "triggered" => Ok(Predicate::UncertaintyTriggered(true)),
            "nominal" => Ok(Predicate::UncertaintyTriggered(false)),
            _ => Err(err(
                line,
                format!("uncertainty must be triggered or nominal, found `{value}`"),
            )),
        },
        "plan" => match value {
            "lane_change" => Ok(Predicate::Plan(PlanCategory::LaneChange)),
            "turn" => Ok(Predicate::Plan(PlanCategory::Turn)),
            other => other
                .parse::<PlanLabel>()
                .map(|p| Predicate::Plan(PlanCategory::Exact(p)))
                .map_err(|_| err(line, format!("unknown plan `{other}`"))),
        },
        other => Err(err(line, format!("unknown predicate `{other}`"))),
    }
}

impl RuleTable {
    pub fn parse(source: &str) -> Result<Self, RuleParseError> {
        let mut rules = Vec::new();
        let mut saw_default = false;
        let mut last_line = 0;
        for (i, raw) in source.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            if saw_default {
                return Err(err(line, "rules after DEFAULT are unreachable"));
            }
            if let Some(rest) = text.strip_prefix("DEFAULT") {
                let choice = rest
                    .trim()
                    .strip_prefix("THEN")
                    .ok_or_else(|| err(line, "expected `DEFAULT THEN <choice>`"))?;
                rules.push(Rule {
                    predicates: Vec::new(),
                    choice: parse_choice(choice, line)?,
                    line,
                    text: text.to_string(),
                });
                saw_default = true;
                continue;
            }
            let body = text
                .strip_prefix("IF ")
                .ok_or_else(|| err(line, "rule must start with IF or DEFAULT"))?;
            let (cond, choice) = body.rsplit_once(" THEN ").ok_or_else(|| err(line, "missing THEN"))?;
            let predicates = cond
                .split(" AND ")
                .map(|p| parse_predicate(p, line))
                .collect::<Result<Vec<_>, _>>()?;
            rules.push(Rule {
                predicates,
                choice: parse_choice(choice, line)?,
                line,
                text: text.to_string(),
            });
        }
        if !saw_default {
            return Err(err(last_line.max(1), "missing mandatory `DEFAULT THEN <choice>` rule"));
        }
        Ok(Self { rules })
    }

    pub fn shipped_default() -> Self {
        Self::parse(SHIPPED_RULES).expect("shipped rule table parses")
    }

    pub fn shipped_source() -> &'static str {
        SHIPPED_RULES
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn default_choice(&self) -> Choice {
        self.rules.last().expect("default rule present").choice
    }

    pub fn decide(&self, req: &ArbitrationRequest) -> ArbitrationDecision {
        let rule = self
            .rules
            .iter()
            .find(|r| r.predicates.iter().all(|p| holds(p, req)))
            .expect("default rule always matches");
        let rationale = format!("rule on line {} matched: {}", rule.line, rule.text);
        match rule.choice {
            Choice::Human => ArbitrationDecision::human(req, rationale),
            _ => ArbitrationDecision::autonomy(req, rationale),
        }
    }
}

impl fmt::Display for RuleTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{}", r.text)?;
        }
        Ok(())
    }
}

/// Distance to the nearest object ahead moving against the ego direction.
pub fn oncoming_distance(req: &ArbitrationRequest) -> Option<f64> {
    req.context
        .latest()
        .objects
        .iter()
        .filter(|o| o.position.y > 0.0 && o.velocity.y < -0.5)
        .map(|o| o.position.y)
        .min_by(f64::total_cmp)
}

fn crossed_marking(req: &ArbitrationRequest) -> Option<LaneMarking> {
    let plan = req.human_plan;
    let side = match plan {
        PlanLabel::LaneChangeLeft | PlanLabel::TurnLeft => -1,
        PlanLabel::LaneChangeRight | PlanLabel::TurnRight => 1,
        _ => return None,
    };
    req.context.latest().marking_crossed(side)
}

fn holds(p: &Predicate, req: &ArbitrationRequest) -> bool {
    match *p {
        Predicate::MarkingCrossed(None) => crossed_marking(req).is_some_and(|m| m.is_solid()),
        Predicate::MarkingCrossed(Some(kind)) => crossed_marking(req) == Some(kind),
        Predicate::OncomingBelow(d) => oncoming_distance(req).is_some_and(|x| x < d),
        Predicate::OncomingAtLeast(d) => oncoming_distance(req).is_none_or(|x| x >= d),
        Predicate::Attention(a) => req.human_descriptor.attention_text == a.describe(),
        Predicate::UncertaintyTriggered(t) => req.autonomy_uncertainty.triggered == t,
        Predicate::Plan(PlanCategory::Exact(label)) => req.human_plan == label,
        Predicate::Plan(PlanCategory::LaneChange) => req.human_plan.is_lane_change(),
        Predicate::Plan(PlanCategory::Turn) => req.human_plan.is_turn(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arbitration::test_support::{object, request};
    use crate::sim::actors::ActorKind;

    #[test]
    fn shipped_table_shape() {
        let t = RuleTable::shipped_default();
        assert!(t.len() >= 6);
        let last = t.rules().last().unwrap();
        assert!(last.is_default());
        assert_eq!(last.choice, Choice::Autonomy);
    }

    #[test]
    fn missing_default_is_an_error() {
        let e = RuleTable::parse("IF plan=stop THEN HUMAN\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.message.contains("DEFAULT"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = RuleTable::parse("# header\n\nIF plan=fly THEN HUMAN\nDEFAULT THEN AUTONOMY\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = RuleTable::parse("DEFAULT THEN HUMAN\nIF plan=stop THEN HUMAN\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn oncoming_bound_matches() {
        let t = RuleTable::parse("IF oncoming<30 THEN AUTONOMY\nDEFAULT THEN HUMAN\n").unwrap();
        let near = request(
            PlanLabel::LaneChangeLeft,
            PlanLabel::DriveForward,
            vec![object(ActorKind::Vehicle, -3.5, 25.0, 0.0, -10.0, Some(-1))],
        );
        assert_eq!(t.decide(&near).choice, Choice::Autonomy);
        let far = request(
            PlanLabel::LaneChangeLeft,
            PlanLabel::DriveForward,
            vec![object(ActorKind::Vehicle, -3.5, 45.0, 0.0, -10.0, Some(-1))],
        );
        assert_eq!(t.decide(&far).choice, Choice::Human);
    }

    #[test]
    fn turn_across_double_yellow_with_oncoming_goes_to_autonomy() {
        let mut req = request(
            PlanLabel::TurnLeft,
            PlanLabel::DriveForward,
            vec![object(ActorKind::Vehicle, -3.5, 25.0, 0.0, -10.0, Some(-1))],
        );
        let mut snaps = req.context.snapshots().clone();
        for s in &mut snaps {
            s.lane_markings[1] = LaneMarking::DoubleYellow;
        }
        req.context = crate::arbitration::SceneContext::new(snaps).unwrap();
        let d = RuleTable::shipped_default().decide(&req);
        assert_eq!(d.choice, Choice::Autonomy);
        assert_eq!(d.grounded_plan, PlanLabel::DriveForward);
    }

    #[test]
    fn comments_and_categories() {
        let src = "# c\nIF plan=lane_change AND uncertainty=triggered THEN HUMAN # trailing\nDEFAULT THEN AUTONOMY";
        let t = RuleTable::parse(src).unwrap();
        assert_eq!(t.len(), 2);
        let req = request(PlanLabel::LaneChangeRight, PlanLabel::DriveForward, vec![]);
        assert_eq!(t.decide(&req).choice, Choice::Human);
    }
}
