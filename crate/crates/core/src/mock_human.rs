//! Reliability-parameterized synthetic driver and annotation checks.
//!
//! Randomness is counter-based: trial `i` draws from its own ChaCha stream,
//! so any trial can be reproduced alone and trials may run in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{Attention, ControlState, PlanLabel};
use crate::scenario::Scenario;
use crate::sim::episode::{correctness_oracle, EpisodeError, HumanProposal, SimConfig};

#[derive(Debug, Error)]
pub enum MockHumanError {
    #[error("scenario `{0}` needs at least one correct and one incorrect annotated plan")]
    MissingAnnotations(String),
    #[error("reliability {0} outside [0, 1]")]
    InvalidReliability(f64),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockHumanConfig {
    pub reliability: f64,
    pub seed: u64,
    /// When set to `N`, exactly `ceil(p * N)` of trials `0..N` are correct.
    #[serde(default)]
    pub exact_trials: Option<u64>,
}

impl MockHumanConfig {
    pub fn new(reliability: f64, seed: u64) -> Self {
        Self {
            reliability,
            seed,
            exact_trials: None,
        }
    }

    pub fn exact(reliability: f64, seed: u64, trials: u64) -> Self {
        Self {
            reliability,
            seed,
            exact_trials: Some(trials),
        }
    }

    pub fn validate(&self) -> Result<(), MockHumanError> {
        if !(0.0..=1.0).contains(&self.reliability) {
            return Err(MockHumanError::InvalidReliability(self.reliability));
        }
        Ok(())
    }
}

/// Raw controls a driver applies to express `plan`.
pub fn control_for(plan: PlanLabel, speed_mps: f64, attention: Option<Attention>) -> ControlState {
    let (throttle, brake, steering) = match plan {
        PlanLabel::Stop => (0.0, 0.8, 0.0),
        PlanLabel::SlowDown => (0.0, 0.3, 0.0),
        PlanLabel::DriveForward => (0.3, 0.0, 0.0),
        PlanLabel::LaneChangeLeft => (0.25, 0.0, -0.2),
        PlanLabel::LaneChangeRight => (0.25, 0.0, 0.2),
        PlanLabel::TurnLeft => (0.25, 0.0, -0.4),
        PlanLabel::TurnRight => (0.25, 0.0, 0.4),
    };
    ControlState {
        throttle,
        brake,
        steering,
        speed_mps,
        human_attention: Some(attention.unwrap_or(Attention::Attentive)),
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Whether trial `i` gets a correct plan.
pub fn trial_is_correct(cfg: &MockHumanConfig, trial: u64) -> bool {
    match cfg.exact_trials {
        Some(n) if n > 0 && trial < n => {
            let k = (cfg.reliability * n as f64 - 1e-9).ceil().max(0.0) as u64;
            // seeded affine permutation of 0..n
            let mut setup = ChaCha8Rng::seed_from_u64(cfg.seed);
            let offset = setup.gen_range(0..n);
            let mut stride = setup.gen_range(1..=n);
            while gcd(stride, n) != 1 {
                stride = stride % n + 1;
            }
            let rank = ((trial as u128 * stride as u128 + offset as u128) % n as u128) as u64;
            rank < k
        }
        _ => trial_rng(cfg.seed, trial).gen::<f64>() < cfg.reliability,
    }
}

/// Correct and incorrect annotated plans of `scenario`.
pub fn annotated_plans(scenario: &Scenario) -> Result<(Vec<PlanLabel>, Vec<PlanLabel>), MockHumanError> {
    let missing = || MockHumanError::MissingAnnotations(scenario.name.clone());
    let d = scenario.decision.as_ref().ok_or_else(missing)?;
    let correct: Vec<_> = d.plans.iter().filter(|p| p.correct).map(|p| p.plan).collect();
    let incorrect: Vec<_> = d.plans.iter().filter(|p| !p.correct).map(|p| p.plan).collect();
    if correct.is_empty() || incorrect.is_empty() {
        return Err(missing());
    }
    Ok((correct, incorrect))
}

/// The plan the mock human proposes in trial `trial`, with matching
/// controls. Speed is filled in by the caller's world state.
pub fn propose(scenario: &Scenario, cfg: &MockHumanConfig, trial: u64) -> Result<HumanProposal, MockHumanError> {
    cfg.validate()?;
    let (correct, incorrect) = annotated_plans(scenario)?;
    let is_correct = trial_is_correct(cfg, trial);
    let pool = if is_correct { &correct } else { &incorrect };
    // stream offset keeps the plan draw independent of the Bernoulli draw
    let mut rng = trial_rng(cfg.seed ^ 0x5EE_D0F9_A1A5, trial);
    let plan = pool[rng.gen_range(0..pool.len())];
    let attention = scenario.decision.as_ref().map(|d| d.attention);
    Ok(HumanProposal {
        plan,
        control: control_for(plan, 0.0, attention),
        correct: Some(is_correct),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contradiction {
    pub plan: PlanLabel,
    pub annotated: bool,
    pub oracle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub scenario: String,
    pub checked: usize,
    pub contradictions: Vec<Contradiction>,
}

impl AnnotationReport {
    pub fn is_clean(&self) -> bool {
        self.contradictions.is_empty()
    }
}

/// Runs the correctness oracle on every annotated plan.
pub fn validate_annotations(scenario: &Scenario, cfg: &SimConfig) -> Result<AnnotationReport, MockHumanError> {
    annotated_plans(scenario)?;
    let plans = &scenario.decision.as_ref().expect("checked above").plans;
    let mut contradictions = Vec::new();
    for p in plans {
        let oracle = correctness_oracle(scenario, p.plan, cfg)?;
        if oracle != p.correct {
            contradictions.push(Contradiction {
                plan: p.plan,
                annotated: p.correct,
                oracle,
            });
        }
    }
    Ok(AnnotationReport {
        scenario: scenario.name.clone(),
        checked: plans.len(),
        contradictions,
    })
}
