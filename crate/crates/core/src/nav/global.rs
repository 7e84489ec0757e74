//! Wavefront global planner.
//!
//! A Dijkstra potential is grown from the goal over the 8-connected grid and
//! the path is read off by steepest descent from the start. Path costs are
//! kept exactly as `a + b*sqrt(2)` with integer `a`, `b`, so the result is
//! the true optimum with no floating-point ties.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::{CostGrid, LETHAL};

/// `straight + diagonal * sqrt(2)`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SurdCost {
    pub straight: u64,
    pub diagonal: u64,
}

impl SurdCost {
    pub const ZERO: SurdCost = SurdCost { straight: 0, diagonal: 0 };

    pub fn new(straight: u64, diagonal: u64) -> Self {
        Self { straight, diagonal }
    }

    pub fn to_f64(self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }

    fn plus(self, step: Step) -> Self {
        match step {
            Step::Straight(c) => Self { straight: self.straight + c, ..self },
            Step::Diagonal(c) => Self { diagonal: self.diagonal + c, ..self },
        }
    }
}

impl Ord for SurdCost {
    fn cmp(&self, other: &Self) -> Ordering {
        // sign of (a1 - a2) + (b1 - b2) * sqrt(2)
        let da = self.straight as i128 - other.straight as i128;
        let db = self.diagonal as i128 - other.diagonal as i128;
        match (da.signum(), db.signum()) {
            (0, 0) => Ordering::Equal,
            (s, t) if s >= 0 && t >= 0 => Ordering::Greater,
            (s, t) if s <= 0 && t <= 0 => Ordering::Less,
            // opposite signs: compare da^2 with 2 db^2
            (1, _) => (da * da).cmp(&(2 * db * db)),
            _ => (2 * db * db).cmp(&(da * da)),
        }
    }
}

impl PartialOrd for SurdCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Straight(u64),
    Diagonal(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("start is outside the grid or in a lethal cell")]
    StartOccupied,
    #[error("goal is outside the grid or in a lethal cell")]
    GoalOccupied,
    #[error("no path from start to goal")]
    NoPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPath {
    pub cells: Vec<(usize, usize)>,
    pub cost: SurdCost,
}

impl GlobalPath {
    pub fn world_points(&self, grid: &CostGrid) -> Vec<[f64; 2]> {
        self.cells.iter().map(|&(cx, cy)| grid.cell_center(cx, cy)).collect()
    }
}

const NEIGHBORS: [(isize, isize); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

/// Weight of moving from `from` into `to` (which must be adjacent), or
/// `None` if the move is blocked. Diagonal moves may not clip a lethal cell.
fn move_weight(grid: &CostGrid, from: (usize, usize), to: (usize, usize)) -> Option<Step> {
    let c = grid.get(to.0, to.1);
    if c >= LETHAL {
        return None;
    }
    let w = 1 + c as u64;
    if from.0 != to.0 && from.1 != to.1 {
        if grid.get(to.0, from.1) >= LETHAL || grid.get(from.0, to.1) >= LETHAL {
            return None;
        }
        Some(Step::Diagonal(w))
    } else {
        Some(Step::Straight(w))
    }
}

fn neighbor(grid: &CostGrid, c: (usize, usize), d: (isize, isize)) -> Option<(usize, usize)> {
    let (x, y) = (c.0 as isize + d.0, c.1 as isize + d.1);
    if x < 0 || y < 0 || x >= grid.width as isize || y >= grid.height as isize {
        return None;
    }
    Some((x as usize, y as usize))
}

/// Cost-to-goal of every cell (`None` where the goal is unreachable).
pub fn potential(grid: &CostGrid, goal: (usize, usize)) -> Vec<Option<SurdCost>> {
    let mut pot: Vec<Option<SurdCost>> = vec![None; grid.width * grid.height];
    let mut heap = BinaryHeap::new();
    let gi = grid.index(goal.0, goal.1);
    pot[gi] = Some(SurdCost::ZERO);
    heap.push(Reverse((SurdCost::ZERO, gi)));
    while let Some(Reverse((p, i))) = heap.pop() {
        if pot[i] != Some(p) {
            continue;
        }
        let cell = grid.cell_of(i);
        for d in NEIGHBORS {
            let Some(prev) = neighbor(grid, cell, d) else { continue };
            let Some(step) = move_weight(grid, prev, cell) else { continue };
            if grid.get(prev.0, prev.1) >= LETHAL {
                continue;
            }
            let cand = p.plus(step);
            let pi = grid.index(prev.0, prev.1);
            if pot[pi].is_none_or(|old| cand < old) {
                pot[pi] = Some(cand);
                heap.push(Reverse((cand, pi)));
            }
        }
    }
    pot
}

pub fn plan_global_cells(grid: &CostGrid, start: (usize, usize), goal: (usize, usize)) -> Result<GlobalPath, PlanError> {
    if grid.get(start.0, start.1) >= LETHAL {
        return Err(PlanError::StartOccupied);
    }
    if grid.get(goal.0, goal.1) >= LETHAL {
        return Err(PlanError::GoalOccupied);
    }
    let pot = potential(grid, goal);
    let total = pot[grid.index(start.0, start.1)].ok_or(PlanError::NoPath)?;
    let mut cells = vec![start];
    let mut cur = start;
    while cur != goal {
        let here = pot[grid.index(cur.0, cur.1)].expect("on reachable cell");
        let next = NEIGHBORS
            .iter()
            .filter_map(|&d| {
                let n = neighbor(grid, cur, d)?;
                let step = move_weight(grid, cur, n)?;
                let pn = pot[grid.index(n.0, n.1)]?;
                (pn.plus(step) == here).then_some(n)
            })
            .next()
            .expect("descent neighbour exists on an exact potential");
        cells.push(next);
        cur = next;
    }
    Ok(GlobalPath { cells, cost: total })
}

/// Plan between world points.
pub fn plan_global(grid: &CostGrid, start: [f64; 2], goal: [f64; 2]) -> Result<GlobalPath, PlanError> {
    let s = grid.world_to_cell(start[0], start[1]).ok_or(PlanError::StartOccupied)?;
    let g = grid.world_to_cell(goal[0], goal[1]).ok_or(PlanError::GoalOccupied)?;
    plan_global_cells(grid, s, g)
}
