use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use sharedrive::arbitration::{Arbiter, VlmClient};
use sharedrive::config::GlobalConfig;
use sharedrive::evaluation::{compare_driving, ClassificationBench};
use sharedrive::metrics::{driving_metrics, emit_report, round2, ClassificationRow, DrivingRow, Report, ReportFormat};
use sharedrive::mock_human::{annotated_plans, validate_annotations, AnnotationReport};
use sharedrive::scenario::{self, Scenario};
use sharedrive::sim::episode::{parse_event_log, run_episode, EpisodeOptions, EpisodeResult, Mode};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ArbiterKind {
    Naive,
    DecisionTree,
    StubVlm,
    Vlm,
    Oracle,
}

impl ArbiterKind {
    pub fn name(self) -> &'static str {
        match self {
            ArbiterKind::Naive => "naive",
            ArbiterKind::DecisionTree => "decision-tree",
            ArbiterKind::StubVlm => "stub-vlm",
            ArbiterKind::Vlm => "vlm",
            ArbiterKind::Oracle => "oracle",
        }
    }

    /// Builds the arbiter; the live VLM needs an endpoint.
    pub fn build(self, cfg: &GlobalConfig) -> Result<Arbiter, CliError> {
        Ok(match self {
            ArbiterKind::Naive => Arbiter::Naive,
            ArbiterKind::DecisionTree => Arbiter::decision_tree_default(),
            ArbiterKind::StubVlm => Arbiter::stub_vlm(),
            ArbiterKind::Vlm => {
                Arbiter::Vlm(VlmClient::http(cfg.vlm.clone()).map_err(|e| CliError::Config(e.to_string()))?)
            }
            ArbiterKind::Oracle => Arbiter::Oracle,
        })
    }
}

impl FromStr for ArbiterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "naive" => Ok(ArbiterKind::Naive),
            "decision-tree" | "dtree" => Ok(ArbiterKind::DecisionTree),
            "stub-vlm" => Ok(ArbiterKind::StubVlm),
            "vlm" => Ok(ArbiterKind::Vlm),
            "oracle" => Ok(ArbiterKind::Oracle),
            other => Err(format!(
                "unknown arbiter `{other}` (naive, decision-tree, stub-vlm, vlm, oracle)"
            )),
        }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<GlobalConfig, CliError> {
    match path {
        Some(p) => GlobalConfig::load(p).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(GlobalConfig::default()),
    }
}

/// The shipped corpus, or every scenario file in `dir`.
pub fn load_corpus(dir: Option<&Path>) -> Result<Vec<Scenario>, CliError> {
    let Some(dir) = dir else {
        return Ok(scenario::corpus());
    };
    let scenarios = scenario::load_dir(dir).map_err(|e| CliError::Load(e.to_string()))?;
    if scenarios.is_empty() {
        return Err(CliError::Load(format!("no scenario files in {}", dir.display())));
    }
    Ok(scenarios)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_reports(out: &Path, stem: &str, report: &Report) -> Result<(), CliError> {
    for format in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
        write_file(
            &out.join(format!("{stem}.{}", format.extension())),
            &emit_report(report, format),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub scenario: String,
    pub mode: Mode,
    pub arbiter: ArbiterKind,
    pub seed: u64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub result: EpisodeResult,
    pub log_path: PathBuf,
    pub result_path: PathBuf,
}

impl RunOutput {
    pub fn summary(&self) -> String {
        let r = &self.result;
        format!(
            "{} [{} / {} / seed {}]: {:?} after {} ticks, completion {:.1}%, collided {}, interventions {}, first trigger {}\nlog: {}",
            r.scenario,
            r.mode.name(),
            r.arbiter,
            r.seed,
            r.end_reason,
            r.ticks,
            100.0 * r.route_completion,
            r.collision.as_ref().map_or("no".to_string(), |c| format!("with {}", c.actor_id)),
            r.interventions,
            r.first_trigger.map_or("none".to_string(), |t| format!("tick {t}")),
            self.log_path.display(),
        )
    }
}

/// One headless episode; writes the event log and the result under `out`.
pub fn cmd_run(cfg: &GlobalConfig, args: &RunArgs, out: &Path) -> Result<RunOutput, CliError> {
    let scenario = scenario::resolve(&args.scenario).map_err(|e| CliError::Load(e.to_string()))?;
    let arbiter = match args.mode {
        Mode::Autonomy => None,
        _ => Some(args.arbiter.build(cfg)?),
    };
    let opts = EpisodeOptions::new(args.mode, args.seed);
    let mut result =
        run_episode(&scenario, &cfg.sim(), arbiter.as_ref(), &opts).map_err(|e| CliError::Config(e.to_string()))?;
    let stem = format!(
        "{}-{}-{}-seed{}",
        scenario.name,
        args.mode.name(),
        result.arbiter,
        args.seed
    );
    let log_path = out.join(format!("{stem}.jsonl"));
    write_file(&log_path, &result.event_log_text())?;
    result.event_log_path = Some(log_path.clone());
    let result_path = out.join(format!("{stem}.result.json"));
    let json = serde_json::to_string_pretty(&result).expect("results serialize");
    write_file(&result_path, &(json + "\n"))?;
    Ok(RunOutput {
        result,
        log_path,
        result_path,
    })
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub reliability: Vec<f64>,
    pub trials: u64,
    pub arbiters: Vec<ArbiterKind>,
    pub seed: u64,
    pub check: bool,
    pub corpus: Option<PathBuf>,
}

#[derive(Debug)]
pub struct BenchOutput {
    pub report: Report,
    /// Mismatches against the closed forms; empty when `--check` passes.
    pub check_failures: Vec<String>,
}

/// Naive arbiter metrics implied by exactly `ceil(p * n)` correct of `n`.
pub fn naive_closed_form(p: f64, n: u64) -> [f64; 4] {
    let k = (p * n as f64 - 1e-9).ceil().max(0.0);
    let n = n as f64;
    [100.0 * k / n, 100.0 * k / n, 100.0, 200.0 * k / (k + n)]
}

/// Mock-human classification trials for every (reliability, arbiter) pair.
pub fn cmd_bench(cfg: &GlobalConfig, args: &BenchArgs, out: &Path) -> Result<BenchOutput, CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    if args.reliability.is_empty() || args.reliability.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(CliError::Usage("reliabilities must lie in [0, 1]".into()));
    }
    if args.arbiters.is_empty() {
        return Err(CliError::Usage("at least one arbiter is needed".into()));
    }
    if args.check && !args.arbiters.contains(&ArbiterKind::Naive) {
        return Err(CliError::Usage(
            "--check compares the naive arbiter; include it in --arbiter".into(),
        ));
    }
    let corpus = load_corpus(args.corpus.as_deref())?;
    let arbiters = args
        .arbiters
        .iter()
        .map(|k| k.build(cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let bench = ClassificationBench::prepare(&corpus, &cfg.sim()).map_err(|e| CliError::Load(e.to_string()))?;
    let mut rows = Vec::new();
    for &p in &args.reliability {
        for arbiter in &arbiters {
            let counts = bench
                .run(arbiter, p, args.trials, args.seed)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            rows.push(ClassificationRow::new(p, arbiter.name(), counts));
        }
    }
    let mut check_failures = Vec::new();
    if args.check {
        for row in rows.iter().filter(|r| r.arbiter == "naive" || r.arbiter == "oracle") {
            let expected = if row.arbiter == "naive" {
                naive_closed_form(row.reliability, args.trials)
            } else {
                [100.0; 4]
            };
            let m = &row.metrics;
            for ((name, got), want) in [
                ("accuracy", m.accuracy),
                ("precision", m.precision),
                ("recall", m.recall),
                ("f1", m.f1),
            ]
            .into_iter()
            .zip(expected)
            {
                let ok = got.is_some_and(|g| (round2(g) - round2(want)).abs() <= 0.01 + 1e-9);
                if !ok {
                    check_failures.push(format!(
                        "{} at p={}: {name} {} != {:.2}",
                        row.arbiter,
                        row.reliability,
                        got.map_or("n/a".into(), |g| format!("{:.2}", round2(g))),
                        round2(want)
                    ));
                }
            }
        }
    }
    let report = Report::Classification { rows };
    write_reports(out, "classification", &report)?;
    Ok(BenchOutput { report, check_failures })
}

#[derive(Debug, Clone)]
pub struct BenchScenariosArgs {
    pub arbiter: ArbiterKind,
    pub mode: Mode,
    pub seed: u64,
    pub seeds: u64,
    pub corpus: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ScenarioBenchOutput {
    /// Every scenario, then the failure-injection subset.
    pub tables: Vec<(String, Report)>,
}

impl ScenarioBenchOutput {
    pub fn markdown(&self) -> String {
        self.tables
            .iter()
            .map(|(title, r)| format!("### {title}\n\n{}", emit_report(r, ReportFormat::Markdown)))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn driving_table(pure: &[EpisodeResult], shared: &[EpisodeResult], shared_name: &str) -> Result<Report, CliError> {
    let row = |system: String, results: &[EpisodeResult]| {
        driving_metrics(results)
            .map(|metrics| DrivingRow {
                system,
                episodes: results.len(),
                metrics,
            })
            .map_err(|e| CliError::Runtime(e.to_string()))
    };
    Ok(Report::Driving {
        rows: vec![
            row("Pure autonomy".into(), pure)?,
            row(shared_name.to_string(), shared)?,
        ],
    })
}

/// Pure versus shared autonomy on every scenario and on the failure subset.
pub fn cmd_bench_scenarios(
    cfg: &GlobalConfig,
    args: &BenchScenariosArgs,
    out: &Path,
) -> Result<ScenarioBenchOutput, CliError> {
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be positive".into()));
    }
    if args.mode == Mode::Autonomy {
        return Err(CliError::Usage(
            "shared autonomy needs the proactive or supervisory mode".into(),
        ));
    }
    let corpus = load_corpus(args.corpus.as_deref())?;
    let arbiter = args.arbiter.build(cfg)?;
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let cmp = compare_driving(&corpus, &cfg.sim(), &arbiter, &seeds, args.mode)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let shared_name = format!("Shared ({}, {})", arbiter.name(), args.mode.name());
    let mut tables = vec![(
        "All scenarios".to_string(),
        driving_table(&cmp.pure, &cmp.shared, &shared_name)?,
    )];
    let failure = |results: &[EpisodeResult]| -> Vec<EpisodeResult> {
        results
            .iter()
            .filter(|r| corpus.iter().any(|s| s.name == r.scenario && s.is_failure_injection()))
            .cloned()
            .collect()
    };
    let (pure_f, shared_f) = (failure(&cmp.pure), failure(&cmp.shared));
    if !pure_f.is_empty() {
        tables.push((
            "Failure-injection subset".to_string(),
            driving_table(&pure_f, &shared_f, &shared_name)?,
        ));
    }
    for (i, (_, report)) in tables.iter().enumerate() {
        write_reports(out, if i == 0 { "driving_all" } else { "driving_failure" }, report)?;
    }
    Ok(ScenarioBenchOutput { tables })
}

/// Correctness-oracle check of every annotated scenario.
pub fn cmd_validate_corpus(cfg: &GlobalConfig, corpus: Option<&Path>) -> Result<Vec<AnnotationReport>, CliError> {
    let scenarios = load_corpus(corpus)?;
    let sim = cfg.sim();
    scenarios
        .iter()
        .filter(|s| annotated_plans(s).is_ok())
        .map(|s| validate_annotations(s, &sim).map_err(|e| CliError::Runtime(e.to_string())))
        .collect()
}

#[derive(Debug)]
pub struct ReplayOutcome {
    pub lines: usize,
    /// First differing line: (1-based number, recorded, replayed).
    pub mismatch: Option<(usize, String, String)>,
}

/// Re-runs a recorded event log and compares it line by line.
pub fn cmd_replay(cfg: &GlobalConfig, log: &Path, scenario: Option<&str>) -> Result<ReplayOutcome, CliError> {
    let text =
        std::fs::read_to_string(log).map_err(|e| CliError::Load(format!("cannot read {}: {e}", log.display())))?;
    let spec = parse_event_log(&text).map_err(|e| CliError::Load(format!("{}: {e}", log.display())))?;
    let scenario = scenario::resolve(scenario.unwrap_or(&spec.scenario)).map_err(|e| CliError::Load(e.to_string()))?;
    let arbiter = match spec.arbiter.as_str() {
        "none" => None,
        name => Some(ArbiterKind::from_str(name).map_err(CliError::Load)?.build(cfg)?),
    };
    let result = run_episode(&scenario, &cfg.sim(), arbiter.as_ref(), &spec.options())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let recorded: Vec<&str> = text.lines().collect();
    let mismatch = (0..recorded.len().max(result.event_log.len())).find_map(|i| {
        let a = recorded.get(i).copied().unwrap_or("<missing>");
        let b = result.event_log.get(i).map(String::as_str).unwrap_or("<missing>");
        (a != b).then(|| (i + 1, a.to_string(), b.to_string()))
    });
    Ok(ReplayOutcome {
        lines: recorded.len(),
        mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_closed_form_rounds_the_correct_count_up() {
        let [acc, prec, rec, f1] = naive_closed_form(0.75, 400);
        assert_eq!((acc, prec, rec), (75.0, 75.0, 100.0));
        assert!((f1 - 600.0 / 7.0).abs() < 1e-12);
        // 0.3 * 7 = 2.1, so three correct plans
        assert!((naive_closed_form(0.3, 7)[0] - 300.0 / 7.0).abs() < 1e-12);
        assert_eq!(naive_closed_form(0.0, 10), [0.0, 0.0, 100.0, 0.0]);
        assert_eq!(naive_closed_form(1.0, 10), [100.0; 4]);
    }

    #[test]
    fn arbiter_names_round_trip() {
        for kind in [
            ArbiterKind::Naive,
            ArbiterKind::DecisionTree,
            ArbiterKind::StubVlm,
            ArbiterKind::Vlm,
            ArbiterKind::Oracle,
        ] {
            assert_eq!(kind.name().parse::<ArbiterKind>().unwrap(), kind);
        }
        assert!("gpt".parse::<ArbiterKind>().is_err());
    }

    #[test]
    fn bench_rejects_bad_arguments() {
        let out = tempfile::tempdir().unwrap();
        let base = BenchArgs {
            reliability: vec![0.5],
            trials: 10,
            arbiters: vec![ArbiterKind::Naive],
            seed: 0,
            check: false,
            corpus: None,
        };
        let cfg = GlobalConfig::default();
        let bad = [
            BenchArgs {
                trials: 0,
                ..base.clone()
            },
            BenchArgs {
                reliability: vec![1.5],
                ..base.clone()
            },
            BenchArgs {
                arbiters: vec![],
                ..base.clone()
            },
            BenchArgs {
                check: true,
                arbiters: vec![ArbiterKind::Oracle],
                ..base.clone()
            },
        ];
        for args in bad {
            assert!(matches!(cmd_bench(&cfg, &args, out.path()), Err(CliError::Usage(_))));
        }
    }
}
