use proptest::prelude::*;

use sharedrive::abstraction::{
    abstract_plan, abstract_state, bin_index, classify_plan, summarize_plan, AbstractionConfig, ControlState,
    PlanLabel, PlanSummary, Trajectory,
};
use sharedrive::arbitration::Choice;
use sharedrive::geometry::Vec2;
use sharedrive::metrics::{classification_metrics, driving_metrics_from, label_trial, ConfusionCounts};
use sharedrive::planning::{astar_plan, path_cost, Cell, OccupancyGrid};

fn waypoints() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-30.0..30.0f64, -30.0..30.0f64), 1..12)
}

fn traj(points: &[(f64, f64)]) -> Trajectory {
    Trajectory::with_max_step(points.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), f64::INFINITY).unwrap()
}

/// Uniform-cost search, the reference for A*.
fn dijkstra(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Option<f64> {
    let n = grid.width * grid.height;
    let idx = |c: Cell| c.1 * grid.width + c.0;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[idx(start)] = 0.0;
    loop {
        let (best, d) = (0..n)
            .filter(|&i| !done[i] && dist[i].is_finite())
            .map(|i| (i, dist[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        let cell = (best % grid.width, best / grid.width);
        if cell == goal {
            return Some(d);
        }
        done[best] = true;
        for (dc, dr) in [
            (1i64, 0i64),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ] {
            let free = |c: i64, r: i64| {
                c >= 0
                    && r >= 0
                    && (c as usize) < grid.width
                    && (r as usize) < grid.height
                    && !grid.is_occupied((c as usize, r as usize))
            };
            let (c, r) = (cell.0 as i64 + dc, cell.1 as i64 + dr);
            let diagonal = dc != 0 && dr != 0;
            if !free(c, r) || (diagonal && !(free(c, cell.1 as i64) && free(cell.0 as i64, r))) {
                continue;
            }
            let cost = if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
            let j = idx((c as usize, r as usize));
            if d + cost < dist[j] {
                dist[j] = d + cost;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn short_paths_are_stop(dx in -100.0..100.0f64, dy in -100.0..100.0f64, len in 0.0..1.4999f64) {
        let s = PlanSummary { delta_x: dx, delta_y: dy, path_length: len };
        prop_assert_eq!(classify_plan(&s, &AbstractionConfig::default()), PlanLabel::Stop);
    }

    #[test]
    fn mirroring_swaps_turns(points in waypoints()) {
        let cfg = AbstractionConfig::default();
        let mirrored: Vec<_> = points.iter().map(|&(x, y)| (-x, y)).collect();
        let a = abstract_plan(&traj(&points), &cfg);
        let b = abstract_plan(&traj(&mirrored), &cfg);
        prop_assert_eq!(b, a.mirrored());
        prop_assert!(!a.is_lane_change());
    }

    #[test]
    fn translation_keeps_the_label(points in waypoints(), ox in -500.0..500.0f64, oy in -500.0..500.0f64) {
        let cfg = AbstractionConfig::default();
        let moved: Vec<_> = points.iter().map(|&(x, y)| (x + ox, y + oy)).collect();
        let a = summarize_plan(&traj(&points));
        let b = summarize_plan(&traj(&moved));
        // summaries agree up to rounding; labels only differ right at a threshold
        prop_assert!((a.delta_x - b.delta_x).abs() < 1e-9 && (a.delta_y - b.delta_y).abs() < 1e-9);
        let near = |v: f64, t: f64| (v.abs() - t).abs() < 1e-6;
        prop_assume!(!near(a.path_length, cfg.theta_stop) && !near(a.delta_x, cfg.theta_turn) && !near(a.delta_y, cfg.theta_fwd));
        prop_assert_eq!(classify_plan(&a, &cfg), classify_plan(&b, &cfg));
    }

    #[test]
    fn throttle_label_is_monotone(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let cfg = AbstractionConfig::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(bin_index(lo, &cfg.throttle_bins) <= bin_index(hi, &cfg.throttle_bins));
        let state = ControlState { throttle: hi, brake: 0.0, steering: 0.0, speed_mps: 1.0, human_attention: None };
        let d = abstract_state(&state, &cfg);
        prop_assert_eq!(&d.throttle_label, &cfg.ordinal_labels[bin_index(hi, &cfg.throttle_bins)]);
    }

    #[test]
    fn confusion_counts_cover_every_trial(trials in prop::collection::vec((any::<bool>(), 0..3u8), 1..300)) {
        let counts: ConfusionCounts = trials
            .iter()
            .map(|&(correct, c)| label_trial(correct, [Choice::Human, Choice::Autonomy, Choice::Alternative][c as usize]))
            .collect();
        prop_assert_eq!(counts.total(), trials.len() as u64);
        let m = classification_metrics(&counts);
        let acc = m.accuracy.unwrap();
        prop_assert!((0.0..=100.0).contains(&acc));
        if let (Some(p), Some(r), Some(f1)) = (m.precision, m.recall, m.f1) {
            prop_assert!((0.0..=100.0).contains(&p) && (0.0..=100.0).contains(&r));
            if p + r > 0.0 {
                prop_assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn driving_metrics_stay_in_unit_range(eps in prop::collection::vec((any::<bool>(), 0.0..=1.0f64), 1..50)) {
        let m = driving_metrics_from(eps.iter().copied()).unwrap();
        for v in [m.collision_rate, m.route_completion_rate, m.average_score] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.average_score <= m.route_completion_rate + 1e-12);
    }

    #[test]
    fn astar_matches_uniform_cost_search(
        cells in prop::collection::vec(prop::bool::weighted(0.3), 100),
        start in (0..10usize, 0..10usize),
        goal in (0..10usize, 0..10usize),
    ) {
        let mut grid = OccupancyGrid::new(10, 10, 1.0, Vec2::ZERO);
        for (i, &occ) in cells.iter().enumerate() {
            grid.set_occupied((i % 10, i / 10), occ);
        }
        grid.set_occupied(start, false);
        let path = astar_plan(&grid, start, goal).unwrap();
        let reference = if grid.is_occupied(goal) { None } else { dijkstra(&grid, start, goal) };
        prop_assert_eq!(path.is_some(), reference.is_some());
        if let (Some(p), Some(cost)) = (path, reference) {
            prop_assert_eq!(p[0], start);
            prop_assert_eq!(*p.last().unwrap(), goal);
            prop_assert!((path_cost(&p) - cost).abs() < 1e-9);
            prop_assert!(p.iter().all(|&c| !grid.is_occupied(c)));
        }
    }
}
