//! 8-connected A* over an [`OccupancyGrid`].
//!
//! Straight moves cost 1, diagonal moves cost sqrt(2) (in cells). A diagonal
//! move is only allowed when both orthogonal cells it passes are free, so the
//! path never cuts an occupied corner. The Euclidean heuristic is consistent,
//! so the first expansion of the goal is optimal. Frontier ties are broken by
//! insertion order, which keeps results deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::grid::{Cell, OccupancyGrid};
use super::PlanningError;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy)]
struct Frontier {
    f: f64,
    seq: u64,
    idx: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // min-heap on (f, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Neighbors of `cell` reachable in one move, with their step cost in cells.
pub fn neighbors(grid: &OccupancyGrid, cell: Cell) -> impl Iterator<Item = (Cell, f64)> + '_ {
    const MOVES: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    let free = move |c: i64, r: i64| {
        c >= 0 && r >= 0 && grid.in_bounds((c as usize, r as usize)) && !grid.is_occupied((c as usize, r as usize))
    };
    MOVES.iter().filter_map(move |&(dc, dr)| {
        let (c, r) = (cell.0 as i64 + dc, cell.1 as i64 + dr);
        if !free(c, r) {
            return None;
        }
        if dc != 0 && dr != 0 {
            if !free(cell.0 as i64 + dc, cell.1 as i64) || !free(cell.0 as i64, cell.1 as i64 + dr) {
                return None;
            }
            Some(((c as usize, r as usize), SQRT_2))
        } else {
            Some(((c as usize, r as usize), 1.0))
        }
    })
}

fn heuristic(a: Cell, b: Cell) -> f64 {
    let dc = a.0 as f64 - b.0 as f64;
    let dr = a.1 as f64 - b.1 as f64;
    dc.hypot(dr)
}

/// Cost of a cell path in cell units.
pub fn path_cost(path: &[Cell]) -> f64 {
    path.windows(2)
        .map(|w| {
            let diag = w[0].0 != w[1].0 && w[0].1 != w[1].1;
            if diag {
                SQRT_2
            } else {
                1.0
            }
        })
        .sum()
}

/// Minimal-cost path from `start` to `goal`, or `None` when unreachable.
pub fn astar_plan(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Result<Option<Vec<Cell>>, PlanningError> {
    if !grid.in_bounds(start) {
        return Err(PlanningError::OutOfBounds(start));
    }
    if !grid.in_bounds(goal) {
        return Err(PlanningError::OutOfBounds(goal));
    }
    if grid.is_occupied(start) {
        return Err(PlanningError::StartOccupied(start));
    }
    if start == goal {
        return Ok(Some(vec![start]));
    }
    if grid.is_occupied(goal) {
        return Ok(None);
    }

    let n = grid.width * grid.height;
    let index = |c: Cell| c.1 * grid.width + c.0;
    let cell_of = |i: usize| (i % grid.width, i / grid.width);

    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;

    g[index(start)] = 0.0;
    heap.push(Frontier {
        f: heuristic(start, goal),
        seq,
        idx: index(start),
    });

    while let Some(Frontier { idx, .. }) = heap.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        let cell = cell_of(idx);
        if cell == goal {
            let mut path = vec![cell];
            let mut cur = idx;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                path.push(cell_of(cur));
            }
            path.reverse();
            return Ok(Some(path));
        }
        for (next, step) in neighbors(grid, cell) {
            let ni = index(next);
            if closed[ni] {
                continue;
            }
            let tentative = g[idx] + step;
            if tentative < g[ni] {
                g[ni] = tentative;
                parent[ni] = idx;
                seq += 1;
                heap.push(Frontier {
                    f: tentative + heuristic(next, goal),
                    seq,
                    idx: ni,
                });
            }
        }
    }
    Ok(None)
}
