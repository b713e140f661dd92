use serde::{Deserialize, Serialize};

use crate::geometry::{Obb, Vec2};

/// `(column, row)` index into an [`OccupancyGrid`].
pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// World position of the lower-left corner of cell (0, 0).
    pub origin: Vec2,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Vec2) -> Self {
        assert!(width >= 1 && height >= 1, "grid needs at least one cell");
        assert!(resolution > 0.0, "resolution must be positive");
        Self {
            resolution,
            width,
            height,
            origin,
            occupied: vec![false; width * height],
        }
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.0 < self.width && cell.1 < self.height
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupied[cell.1 * self.width + cell.0]
    }

    pub fn set_occupied(&mut self, cell: Cell, value: bool) {
        let idx = cell.1 * self.width + cell.0;
        self.occupied[idx] = value;
    }

    pub fn cell_center(&self, cell: Cell) -> Vec2 {
        self.origin
            + Vec2::new(
                (cell.0 as f64 + 0.5) * self.resolution,
                (cell.1 as f64 + 0.5) * self.resolution,
            )
    }

    pub fn world_to_cell(&self, p: Vec2) -> Option<Cell> {
        let local = p - self.origin;
        let c = (local.x / self.resolution).floor();
        let r = (local.y / self.resolution).floor();
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let cell = (c as usize, r as usize);
        self.in_bounds(cell).then_some(cell)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| (c, r)))
    }

    /// Marks every cell whose center lies inside `obstacle` grown by `margin`.
    pub fn rasterize(&mut self, obstacle: &Obb, margin: f64) {
        let grown = obstacle.inflated(margin);
        for cell in self.cells().collect::<Vec<_>>() {
            if grown.contains(self.cell_center(cell)) {
                self.set_occupied(cell, true);
            }
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|o| **o).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_roundtrip() {
        let g = OccupancyGrid::new(10, 5, 0.5, Vec2::new(-2.0, 1.0));
        let c = (3, 4);
        assert_eq!(g.world_to_cell(g.cell_center(c)), Some(c));
        assert_eq!(g.world_to_cell(Vec2::new(-3.0, 1.0)), None);
        assert_eq!(g.world_to_cell(Vec2::new(3.1, 1.0)), None);
    }

    #[test]
    fn rasterize_marks_inflated_box() {
        let mut g = OccupancyGrid::new(20, 20, 1.0, Vec2::ZERO);
        g.rasterize(&Obb::new(Vec2::new(10.0, 10.0), 0.0, Vec2::new(1.0, 1.0)), 0.0);
        assert_eq!(g.occupied_count(), 4);
        g.rasterize(&Obb::new(Vec2::new(10.0, 10.0), 0.0, Vec2::new(1.0, 1.0)), 1.0);
        assert_eq!(g.occupied_count(), 16);
    }
}
