//! Fixtures shared by the criterion benches in `benches/`.

use sharedrive::geometry::Vec2;
use sharedrive::planning::OccupancyGrid;
use sharedrive::Trajectory;

/// Square grid with staggered wall segments; start and goal corners stay free.
pub fn maze(size: usize) -> OccupancyGrid {
    let mut grid = OccupancyGrid::new(size, size, 1.0, Vec2::ZERO);
    for col in (2..size.saturating_sub(1)).step_by(3) {
        let gap = if (col / 3) % 2 == 0 { size - 2 } else { 1 };
        for row in 0..size {
            if row != gap {
                grid.set_occupied((col, row), true);
            }
        }
    }
    grid
}

/// Gently curving ten-waypoint path, like one autonomy candidate.
pub fn candidate(curvature: f64) -> Trajectory {
    let pts = (0..10)
        .map(|i| {
            let s = i as f64 * 1.6;
            Vec2::new(curvature * s * s, s)
        })
        .collect();
    Trajectory::new(pts).expect("finite waypoints")
}
