//! Acceptance gates. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Tolerances and time limits are fixed here.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sharedrive::abstraction::{classify_plan, summarize_plan, AbstractionConfig, PlanLabel, PlanSummary, Trajectory};
use sharedrive::arbitration::Arbiter;
use sharedrive::config::GlobalConfig;
use sharedrive::evaluation::{compare_driving, ClassificationBench};
use sharedrive::geometry::Vec2;
use sharedrive::metrics::{classification_metrics, driving_metrics, round2};
use sharedrive::planning::{astar_plan, Cell, OccupancyGrid};
use sharedrive::scenario::{self, InjectionKind};
use sharedrive::sim::episode::{run_episode, EpisodeOptions, Mode, SimConfig};
use sharedrive_cli::commands::{cmd_bench, cmd_run, cmd_validate_corpus, ArbiterKind, BenchArgs, RunArgs};

type Outcome = Result<String, String>;
type Gate = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, started: Instant, result: Outcome) -> Outcome {
    let took = started.elapsed();
    let stamp = |d: String| format!("{d} ({:.2} s, limit {} s)", took.as_secs_f64(), limit.as_secs());
    match result {
        Ok(d) if took <= limit => Ok(stamp(d)),
        Ok(d) => Err(stamp(format!("{d}; too slow"))),
        Err(d) => Err(stamp(d)),
    }
}

fn fmt(m: Option<f64>) -> String {
    m.map_or("n/a".into(), |v| format!("{:.2}", round2(v)))
}

fn naive_exact() -> Outcome {
    let started = Instant::now();
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = BenchArgs {
        reliability: vec![0.75, 0.5, 0.25],
        trials: 400,
        arbiters: vec![ArbiterKind::Naive],
        seed: 0,
        check: true,
        corpus: None,
    };
    let bench = cmd_bench(&GlobalConfig::default(), &args, out.path()).map_err(|e| e.to_string())?;
    let sharedrive::metrics::Report::Classification { rows } = &bench.report else {
        return Err("bench produced a driving report".into());
    };
    let published = [
        (0.75, [75.00, 75.00, 100.00, 85.71]),
        (0.5, [50.00, 50.00, 100.00, 66.67]),
        (0.25, [25.00, 25.00, 100.00, 40.00]),
    ];
    let mut ok = bench.check_failures.is_empty();
    let mut detail = Vec::new();
    for (p, want) in published {
        let row = rows
            .iter()
            .find(|r| r.reliability == p)
            .ok_or(format!("no row for p={p}"))?;
        let m = &row.metrics;
        let got = [m.accuracy, m.precision, m.recall, m.f1];
        ok &= got
            .iter()
            .zip(want)
            .all(|(g, w)| g.is_some_and(|g| (round2(g) - w).abs() <= 0.01));
        detail.push(format!("p={p}: {}", got.map(fmt).join("/")));
    }
    within(Duration::from_secs(10), started, check(ok, detail.join("; ")))
}

fn oracle_perfect() -> Outcome {
    let bench = ClassificationBench::prepare(&scenario::corpus(), &SimConfig::default()).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut detail = Vec::new();
    for p in [0.75, 0.5, 0.25] {
        let c = bench.run(&Arbiter::Oracle, p, 400, 0).map_err(|e| e.to_string())?;
        let m = classification_metrics(&c);
        ok &= [m.accuracy, m.precision, m.recall, m.f1]
            .iter()
            .all(|v| *v == Some(100.0));
        detail.push(format!(
            "p={p}: {}",
            [m.accuracy, m.precision, m.recall, m.f1].map(fmt).join("/")
        ));
    }
    check(ok, detail.join("; "))
}

fn stub_vlm_half_reliability() -> Outcome {
    let started = Instant::now();
    let bench = ClassificationBench::prepare(&scenario::corpus(), &SimConfig::default()).map_err(|e| e.to_string())?;
    let c = bench
        .run(&Arbiter::stub_vlm(), 0.5, 400, 0)
        .map_err(|e| e.to_string())?;
    let m = classification_metrics(&c);
    let ok = m.recall == Some(100.0) && m.accuracy.is_some_and(|a| a >= 85.0);
    within(
        Duration::from_secs(60),
        started,
        check(
            ok,
            format!(
                "recall {} (need 100), accuracy {} (need >= 85)",
                fmt(m.recall),
                fmt(m.accuracy)
            ),
        ),
    )
}

fn driving_directional() -> Outcome {
    let started = Instant::now();
    let failures: Vec<_> = scenario::corpus()
        .into_iter()
        .filter(|s| s.is_failure_injection())
        .collect();
    let seeds: Vec<u64> = (0..5).collect();
    let cmp = compare_driving(
        &failures,
        &SimConfig::default(),
        &Arbiter::stub_vlm(),
        &seeds,
        Mode::Supervisory,
    )
    .map_err(|e| e.to_string())?;
    let pure = driving_metrics(&cmp.pure).map_err(|e| e.to_string())?;
    let shared = driving_metrics(&cmp.shared).map_err(|e| e.to_string())?;
    let ok = failures.len() >= 8
        && shared.collision_rate < pure.collision_rate
        && shared.route_completion_rate > pure.route_completion_rate
        && shared.average_score > pure.average_score;
    let pct = |v: f64| format!("{:.2}", 100.0 * v);
    within(
        Duration::from_secs(300),
        started,
        check(
            ok,
            format!(
                "{} scenarios x {} seeds; collision {} -> {}, completion {} -> {}, score {} -> {}",
                failures.len(),
                seeds.len(),
                pct(pure.collision_rate),
                pct(shared.collision_rate),
                pct(pure.route_completion_rate),
                pct(shared.route_completion_rate),
                pct(pure.average_score),
                pct(shared.average_score)
            ),
        ),
    )
}

fn trigger_efficacy() -> Outcome {
    let cfg = SimConfig::default();
    let seeds = 0..20u64;
    let mut detail = Vec::new();
    let mut ok = true;
    let corpus = scenario::corpus();
    let scatter: Vec<_> = corpus
        .iter()
        .filter(|s| s.has_injection(InjectionKind::CandidateScatter))
        .collect();
    if scatter.is_empty() {
        return Err("no scatter scenarios".into());
    }
    for s in &scatter {
        let window = s.injection_window(InjectionKind::CandidateScatter).expect("filtered");
        let mut hits = 0;
        for seed in seeds.clone() {
            let r =
                run_episode(s, &cfg, None, &EpisodeOptions::new(Mode::Autonomy, seed)).map_err(|e| e.to_string())?;
            hits += r.first_trigger.is_some_and(|t| window.contains(t)) as usize;
        }
        let rate = hits as f64 / seeds.clone().count() as f64;
        ok &= rate >= 0.9;
        if rate < 1.0 {
            detail.push(format!("{} {:.0}%", s.name, 100.0 * rate));
        }
    }
    let mut false_triggers = 0;
    for name in ["empty_straight", "following_traffic"] {
        let s = scenario::builtin(name).map_err(|e| e.to_string())?;
        for seed in seeds.clone() {
            let r =
                run_episode(&s, &cfg, None, &EpisodeOptions::new(Mode::Autonomy, seed)).map_err(|e| e.to_string())?;
            false_triggers += r.scores.iter().filter(|u| u.triggered).count();
        }
    }
    ok &= false_triggers == 0;
    check(
        ok,
        format!(
            "{} scatter scenarios x 20 seeds in window{}; {false_triggers} control-set trigger ticks",
            scatter.len(),
            if detail.is_empty() {
                " 100%".to_string()
            } else {
                format!(" except {}", detail.join(", "))
            }
        ),
    )
}

/// Dijkstra over the same 8-connected move set, counting straight and
/// diagonal steps so costs compare exactly.
fn dijkstra_steps(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Option<(u32, u32)> {
    let (w, h) = (grid.width as i64, grid.height as i64);
    let free = |c: i64, r: i64| c >= 0 && r >= 0 && c < w && r < h && !grid.is_occupied((c as usize, r as usize));
    let cost = |s: (u32, u32)| s.0 as f64 + s.1 as f64 * std::f64::consts::SQRT_2;
    let mut best = vec![None::<(u32, u32)>; grid.width * grid.height];
    let mut heap = BinaryHeap::new();
    best[start.1 * grid.width + start.0] = Some((0, 0));
    heap.push(Reverse((ordered(0.0), (0u32, 0u32), start)));
    while let Some(Reverse((_, steps, cell))) = heap.pop() {
        if best[cell.1 * grid.width + cell.0] != Some(steps) {
            continue;
        }
        if cell == goal {
            return Some(steps);
        }
        for dc in -1i64..=1 {
            for dr in -1i64..=1 {
                if dc == 0 && dr == 0 {
                    continue;
                }
                let (c, r) = (cell.0 as i64 + dc, cell.1 as i64 + dr);
                let diagonal = dc != 0 && dr != 0;
                if !free(c, r) || (diagonal && !(free(c, cell.1 as i64) && free(cell.0 as i64, r))) {
                    continue;
                }
                let next = if diagonal {
                    (steps.0, steps.1 + 1)
                } else {
                    (steps.0 + 1, steps.1)
                };
                let idx = r as usize * grid.width + c as usize;
                if best[idx].is_none_or(|b| cost(next) < cost(b) - 1e-12) {
                    best[idx] = Some(next);
                    heap.push(Reverse((ordered(cost(next)), next, (c as usize, r as usize))));
                }
            }
        }
    }
    None
}

fn ordered(x: f64) -> u64 {
    // non-negative floats order like their bit patterns
    x.to_bits()
}

fn step_counts(path: &[Cell]) -> (u32, u32) {
    path.windows(2).fold((0, 0), |(s, d), w| {
        if w[0].0 != w[1].0 && w[0].1 != w[1].1 {
            (s, d + 1)
        } else {
            (s + 1, d)
        }
    })
}

fn astar_vs_dijkstra() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut reachable, mut mismatches) = (0, Vec::new());
    for i in 0..200 {
        let mut grid = OccupancyGrid::new(15, 15, 1.0, Vec2::ZERO);
        let density = rng.gen_range(0.1..0.45);
        for r in 0..15 {
            for c in 0..15 {
                grid.set_occupied((c, r), rng.gen_bool(density));
            }
        }
        let start = (rng.gen_range(0..15), rng.gen_range(0..15));
        let goal = (rng.gen_range(0..15), rng.gen_range(0..15));
        grid.set_occupied(start, false);
        let astar = astar_plan(&grid, start, goal).map_err(|e| e.to_string())?;
        let reference = if grid.is_occupied(goal) {
            None
        } else {
            dijkstra_steps(&grid, start, goal)
        };
        let got = astar.as_deref().map(step_counts);
        reachable += reference.is_some() as usize;
        if got != reference {
            mismatches.push(format!("grid {i}: A* {got:?} vs Dijkstra {reference:?}"));
        }
    }
    within(
        Duration::from_secs(5),
        started,
        check(
            mismatches.is_empty(),
            format!(
                "200 grids, {reachable} reachable, {} disagreements {}",
                mismatches.len(),
                mismatches.join("; ")
            ),
        ),
    )
}

/// Threshold rule with stop > turn > forward > slow precedence.
fn reference_label(dx: f64, dy: f64, len: f64, cfg: &AbstractionConfig) -> PlanLabel {
    if len < cfg.theta_stop {
        PlanLabel::Stop
    } else if dx > cfg.theta_turn {
        PlanLabel::TurnRight
    } else if dx < -cfg.theta_turn {
        PlanLabel::TurnLeft
    } else if dy > cfg.theta_fwd {
        PlanLabel::DriveForward
    } else {
        PlanLabel::SlowDown
    }
}

fn abstraction_suite() -> Outcome {
    let cfg = AbstractionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // multiples of 1/64 keep every difference exact, so invariances hold bit for bit
    let mut dyadic = |lo: i64, hi: i64| rng.gen_range(lo * 64..=hi * 64) as f64 / 64.0;
    let mut failures = Vec::new();
    for i in 0..10_000 {
        let n = 1 + (dyadic(0, 15).abs() as usize);
        let pts: Vec<Vec2> = (0..n).map(|_| Vec2::new(dyadic(-20, 20), dyadic(-20, 20))).collect();
        let traj = |p: Vec<Vec2>| Trajectory::with_max_step(p, f64::INFINITY).expect("finite");
        let s = summarize_plan(&traj(pts.clone()));
        let label = classify_plan(&s, &cfg);
        let first = pts[0];
        let last = pts[n - 1];
        let len: f64 = pts.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y)).sum();
        if label != reference_label(last.x - first.x, last.y - first.y, len, &cfg) {
            failures.push(format!("#{i} totality/rule"));
        }
        let mirrored = classify_plan(
            &summarize_plan(&traj(pts.iter().map(|p| Vec2::new(-p.x, p.y)).collect())),
            &cfg,
        );
        let expected_mirror = match label {
            PlanLabel::TurnLeft => PlanLabel::TurnRight,
            PlanLabel::TurnRight => PlanLabel::TurnLeft,
            other => other,
        };
        if mirrored != expected_mirror {
            failures.push(format!("#{i} mirror"));
        }
        let (ox, oy) = (dyadic(-1000, 1000), dyadic(-1000, 1000));
        let moved = classify_plan(
            &summarize_plan(&traj(pts.iter().map(|p| Vec2::new(p.x + ox, p.y + oy)).collect())),
            &cfg,
        );
        if moved != label {
            failures.push(format!("#{i} translation"));
        }
        let short = PlanSummary {
            delta_x: s.delta_x * 10.0,
            delta_y: s.delta_y * 10.0,
            path_length: (s.path_length / 40.0).min(cfg.theta_stop * 0.999),
        };
        if classify_plan(&short, &cfg) != PlanLabel::Stop {
            failures.push(format!("#{i} precedence"));
        }
    }
    let hand = summarize_plan(&Trajectory::from_points(&[(0.0, 0.0), (3.0, 4.0)]).map_err(|e| e.to_string())?);
    let hand_ok = (hand.delta_x - 3.0).abs() <= 1e-9
        && (hand.delta_y - 4.0).abs() <= 1e-9
        && (hand.path_length - 5.0).abs() <= 1e-9;
    let bent =
        summarize_plan(&Trajectory::from_points(&[(0.0, 0.0), (3.0, 0.0), (3.0, 4.0)]).map_err(|e| e.to_string())?);
    let bent_ok = (bent.delta_x - 3.0).abs() <= 1e-9
        && (bent.delta_y - 4.0).abs() <= 1e-9
        && (bent.path_length - 7.0).abs() <= 1e-9;
    check(
        failures.is_empty() && hand_ok && bent_ok,
        format!(
            "10000 fuzzed trajectories, {} violations{}; 3-4-5 case {}",
            failures.len(),
            failures.first().map_or(String::new(), |f| format!(" (first {f})")),
            if hand_ok && bent_ok { "exact" } else { "off" }
        ),
    )
}

fn determinism_gate() -> Outcome {
    let cfg = GlobalConfig::default();
    let (a, b) = (
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    );
    let mut runs = 0;
    let mut differing = Vec::new();
    for name in scenario::corpus_names() {
        for mode in [Mode::Autonomy, Mode::Proactive, Mode::Supervisory] {
            let args = RunArgs {
                scenario: name.to_string(),
                mode,
                arbiter: ArbiterKind::StubVlm,
                seed: 7,
            };
            let first = cmd_run(&cfg, &args, a.path()).map_err(|e| e.to_string())?;
            let second = cmd_run(&cfg, &args, b.path()).map_err(|e| e.to_string())?;
            let read = |p: &std::path::Path| std::fs::read(p).map_err(|e| e.to_string());
            if read(&first.log_path)? != read(&second.log_path)? {
                differing.push(format!("{name}/{}", mode.name()));
            }
            runs += 1;
        }
    }
    check(
        differing.is_empty(),
        format!(
            "{runs} scenario/mode pairs run twice, {} differing {}",
            differing.len(),
            differing.join(", ")
        ),
    )
}

fn corpus_validity() -> Outcome {
    let reports = cmd_validate_corpus(&GlobalConfig::default(), None).map_err(|e| e.to_string())?;
    let plans: usize = reports.iter().map(|r| r.checked).sum();
    let bad: Vec<_> = reports
        .iter()
        .filter(|r| !r.is_clean())
        .map(|r| r.scenario.clone())
        .collect();
    check(
        bad.is_empty() && reports.len() == scenario::corpus_names().len(),
        format!(
            "{} scenarios, {plans} annotated plans, contradictions in [{}]",
            reports.len(),
            bad.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let gates: [Gate; 9] = [
        ("naive column exact (N=400, tol 0.01, < 10 s)", naive_exact),
        ("oracle arbiter 100 on all metrics", oracle_perfect),
        (
            "stub VLM at p=0.5: recall 100, accuracy >= 85 (< 60 s)",
            stub_vlm_half_reliability,
        ),
        (
            "shared beats pure autonomy on the failure subset (< 5 min)",
            driving_directional,
        ),
        ("uncertainty trigger efficacy", trigger_efficacy),
        (
            "A* matches Dijkstra on 200 random 15x15 grids (< 5 s)",
            astar_vs_dijkstra,
        ),
        ("abstraction properties and 3-4-5 case", abstraction_suite),
        ("byte-identical logs for repeated runs", determinism_gate),
        ("corpus annotations agree with the correctness oracle", corpus_validity),
    ];
    let mut failed = 0;
    for (name, gate) in gates {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(gate).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.2} s]");
            }
        }
    }
    println!("acceptance: {} of {} gates passed", gates.len() - failed, gates.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
