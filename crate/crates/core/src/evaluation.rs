//! Batch evaluation: mock-human classification trials over the annotated
//! corpus, and pure-versus-shared driving comparisons.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::abstraction::PlanLabel;
use crate::arbitration::{Arbiter, ArbitrationRequest, Choice};
use crate::metrics::{label_trial, ConfusionCounts, TrialLabel};
use crate::mock_human::{annotated_plans, control_for, propose, MockHumanConfig, MockHumanError};
use crate::scenario::Scenario;
use crate::sim::episode::{run_episode, EpisodeError, EpisodeOptions, EpisodeResult, HumanProposal, Mode, SimConfig};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("no annotated scenarios to evaluate")]
    NoAnnotatedScenarios,
    #[error("trial count must be positive")]
    NoTrials,
    #[error("scenario `{0}` produced no decision at its decision tick")]
    NoDecision(String),
    #[error(transparent)]
    MockHuman(#[from] MockHumanError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

/// What happened in one classification trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub scenario: String,
    pub plan: PlanLabel,
    pub human_correct: bool,
    pub choice: Choice,
    /// Arbitration failed and the safe stop stood in for a decision.
    pub fallback: bool,
    pub label: TrialLabel,
}

/// Annotated scenarios with one cached request per annotated plan.
///
/// The request at the decision tick depends only on the scenario and the
/// proposed plan, so the autonomy pre-roll is simulated once per pair.
/// Trial `i` uses scenario `i mod n`.
pub struct ClassificationBench {
    scenarios: Vec<Scenario>,
    requests: HashMap<(usize, PlanLabel), ArbitrationRequest>,
}

impl ClassificationBench {
    pub fn prepare(corpus: &[Scenario], cfg: &SimConfig) -> Result<Self, EvaluationError> {
        let scenarios: Vec<Scenario> = corpus.iter().filter(|s| annotated_plans(s).is_ok()).cloned().collect();
        if scenarios.is_empty() {
            return Err(EvaluationError::NoAnnotatedScenarios);
        }
        let pairs: Vec<(usize, PlanLabel, bool)> = scenarios
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                let plans = &s.decision.as_ref().expect("annotated").plans;
                plans.iter().map(move |p| (i, p.plan, p.correct))
            })
            .collect();
        let requests = pairs
            .par_iter()
            .map(|&(i, plan, correct)| {
                let s = &scenarios[i];
                let d = s.decision.as_ref().expect("annotated");
                let opts = EpisodeOptions {
                    mode: Some(Mode::Proactive),
                    seed: 0,
                    proposal: Some(HumanProposal {
                        plan,
                        control: control_for(plan, 0.0, Some(d.attention)),
                        correct: Some(correct),
                    }),
                    horizon_end: Some(d.tick + 1),
                    ..Default::default()
                };
                let result = run_episode(s, cfg, Some(&Arbiter::Naive), &opts)?;
                let request = result
                    .decisions
                    .into_iter()
                    .next()
                    .and_then(|r| r.request)
                    .ok_or_else(|| EvaluationError::NoDecision(s.name.clone()))?;
                Ok(((i, plan), *request))
            })
            .collect::<Result<HashMap<_, _>, EvaluationError>>()?;
        Ok(Self { scenarios, requests })
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn request(&self, scenario: usize, plan: PlanLabel) -> Option<&ArbitrationRequest> {
        self.requests.get(&(scenario, plan))
    }

    pub fn trial(
        &self,
        arbiter: &Arbiter,
        human: &MockHumanConfig,
        trial: u64,
    ) -> Result<TrialOutcome, EvaluationError> {
        let idx = (trial % self.scenarios.len() as u64) as usize;
        let scenario = &self.scenarios[idx];
        let proposal = propose(scenario, human, trial)?;
        let correct = proposal.correct.unwrap_or(false);
        let request = &self.requests[&(idx, proposal.plan)];
        let (choice, fallback) = match arbiter.arbitrate(request, Some(correct)) {
            Ok(d) => (d.choice, false),
            Err(e) => {
                log::warn!("trial {trial}: arbitration failed ({e}); counted as a safe-stop alternative");
                (Choice::Alternative, true)
            }
        };
        Ok(TrialOutcome {
            scenario: scenario.name.clone(),
            plan: proposal.plan,
            human_correct: correct,
            choice,
            fallback,
            label: label_trial(correct, choice),
        })
    }

    /// Runs trials `0..trials` with exactly `ceil(p * trials)` correct proposals.
    pub fn run(
        &self,
        arbiter: &Arbiter,
        reliability: f64,
        trials: u64,
        seed: u64,
    ) -> Result<ConfusionCounts, EvaluationError> {
        if trials == 0 {
            return Err(EvaluationError::NoTrials);
        }
        let human = MockHumanConfig::exact(reliability, seed, trials);
        human.validate()?;
        if arbiter.is_remote() {
            // keep request order stable for a live service
            (0..trials)
                .map(|i| self.trial(arbiter, &human, i).map(|o| o.label))
                .collect()
        } else {
            (0..trials)
                .into_par_iter()
                .map(|i| self.trial(arbiter, &human, i).map(|o| o.label))
                .collect::<Result<Vec<_>, _>>()
                .map(|labels| labels.into_iter().collect())
        }
    }
}

/// Episodes of the same scenarios and seeds with and without a human.
#[derive(Debug, Clone)]
pub struct DrivingComparison {
    pub pure: Vec<EpisodeResult>,
    pub shared: Vec<EpisodeResult>,
}

/// Pure autonomy versus shared autonomy with a perfect mock human. The
/// human proposes an annotated-correct plan whenever asked; scenarios
/// without annotations fall back to their script.
pub fn compare_driving(
    scenarios: &[Scenario],
    cfg: &SimConfig,
    arbiter: &Arbiter,
    seeds: &[u64],
    mode: Mode,
) -> Result<DrivingComparison, EvaluationError> {
    let runs: Vec<(&Scenario, u64)> = scenarios
        .iter()
        .flat_map(|s| seeds.iter().map(move |&k| (s, k)))
        .collect();
    let one = |&(s, seed): &(&Scenario, u64)| -> Result<(EpisodeResult, EpisodeResult), EvaluationError> {
        let mut pure_opts = EpisodeOptions::new(Mode::Autonomy, seed);
        pure_opts.record_log = false;
        let pure = run_episode(s, cfg, None, &pure_opts)?;
        let mut opts = EpisodeOptions::new(mode, seed);
        opts.record_log = false;
        if annotated_plans(s).is_ok() {
            opts.proposal = Some(propose(s, &MockHumanConfig::new(1.0, seed), 0)?);
        }
        let shared = run_episode(s, cfg, Some(arbiter), &opts)?;
        Ok((pure, shared))
    };
    let pairs: Vec<_> = if arbiter.is_remote() {
        runs.iter().map(one).collect::<Result<_, _>>()?
    } else {
        runs.par_iter().map(one).collect::<Result<_, _>>()?
    };
    let (pure, shared) = pairs.into_iter().unzip();
    Ok(DrivingComparison { pure, shared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::classification_metrics;
    use crate::scenario;

    #[test]
    fn every_annotated_plan_has_a_request() {
        let corpus = scenario::corpus();
        let bench = ClassificationBench::prepare(&corpus, &SimConfig::default()).unwrap();
        for (i, s) in bench.scenarios().iter().enumerate() {
            for p in &s.decision.as_ref().unwrap().plans {
                let req = bench.request(i, p.plan).unwrap();
                assert_eq!(req.human_plan, p.plan);
                assert_eq!(req.frame, s.decision.as_ref().unwrap().tick);
            }
        }
    }

    #[test]
    fn naive_and_oracle_small_run() {
        let corpus = scenario::corpus();
        let bench = ClassificationBench::prepare(&corpus, &SimConfig::default()).unwrap();
        let naive = bench.run(&Arbiter::Naive, 0.5, 40, 1).unwrap();
        assert_eq!((naive.tp, naive.fp, naive.tn, naive.fn_), (20, 20, 0, 0));
        let oracle = classification_metrics(&bench.run(&Arbiter::Oracle, 0.25, 40, 1).unwrap());
        assert_eq!(oracle.accuracy, Some(100.0));
        assert!(matches!(
            bench.run(&Arbiter::Naive, 0.5, 0, 1),
            Err(EvaluationError::NoTrials)
        ));
    }
}
