use crate::abstraction::{Trajectory, DEFAULT_MAX_STEP};
use crate::geometry::{point_at_station, polyline_length, Vec2};

use super::grid::{Cell, OccupancyGrid};

/// Converts a cell path into `samples` waypoints evenly spaced in arc length
/// (grid frame, meters). The sample count is raised when needed so that no
/// step exceeds the trajectory step bound.
pub fn smooth_to_trajectory(path: &[Cell], grid: &OccupancyGrid, samples: usize) -> Trajectory {
    assert!(!path.is_empty(), "path must contain at least one cell");
    let centers: Vec<Vec2> = path.iter().map(|&c| grid.cell_center(c)).collect();
    if centers.len() == 1 {
        return Trajectory::new(centers).expect("single finite point");
    }
    let length = polyline_length(&centers);
    let min_samples = (length / DEFAULT_MAX_STEP).ceil() as usize + 1;
    let n = samples.max(2).max(min_samples);
    let waypoints = (0..n)
        .map(|i| point_at_station(&centers, length * i as f64 / (n - 1) as f64))
        .collect();
    Trajectory::new(waypoints).expect("resampled path respects the step bound")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_maps_to_center() {
        let g = OccupancyGrid::new(4, 4, 0.5, Vec2::new(1.0, 1.0));
        let t = smooth_to_trajectory(&[(1, 2)], &g, 5);
        assert_eq!(t.waypoints(), &[Vec2::new(1.75, 2.25)]);
    }

    #[test]
    fn straight_path_three_samples() {
        let g = OccupancyGrid::new(10, 10, 1.0, Vec2::ZERO);
        let path: Vec<Cell> = (0..5).map(|r| (0, r)).collect();
        let t = smooth_to_trajectory(&path, &g, 3);
        let w = t.waypoints();
        assert_eq!(w.len(), 3);
        assert!(w[0].distance(Vec2::new(0.5, 0.5)) < 1e-12);
        assert!(w[1].distance(Vec2::new(0.5, 2.5)) < 1e-12);
        assert!(w[2].distance(Vec2::new(0.5, 4.5)) < 1e-12);
    }

    #[test]
    fn l_shape_preserves_length() {
        let g = OccupancyGrid::new(10, 10, 0.5, Vec2::ZERO);
        let mut path: Vec<Cell> = (0..6).map(|r| (0, r)).collect();
        path.extend((1..6).map(|c| (c, 5)));
        let t = smooth_to_trajectory(&path, &g, 40);
        let resampled = polyline_length(t.waypoints());
        let original = 10.0 * 0.5;
        assert!((resampled - original).abs() <= g.resolution / 2.0);
    }
}
