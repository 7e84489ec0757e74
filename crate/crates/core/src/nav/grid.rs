use serde::{Deserialize, Serialize};

pub const FREE: u8 = 0;
pub const LETHAL: u8 = 254;
/// Highest non-lethal cost given to inflated cells.
pub const MAX_INFLATED: u8 = 200;

/// Row-major cost grid; cell (cx, cy) covers
/// `[origin + c*res, origin + (c+1)*res)` on each axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostGrid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: [f64; 2],
    pub cost: Vec<u8>,
}

impl CostGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: [f64; 2]) -> Self {
        Self { width, height, resolution, origin, cost: vec![FREE; width * height] }
    }

    pub fn index(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn cell_of(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn get(&self, cx: usize, cy: usize) -> u8 {
        self.cost[self.index(cx, cy)]
    }

    pub fn set(&mut self, cx: usize, cy: usize, c: u8) {
        let i = self.index(cx, cy);
        self.cost[i] = c;
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin[0]) / self.resolution).floor();
        let fy = ((y - self.origin[1]) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> [f64; 2] {
        [
            self.origin[0] + (cx as f64 + 0.5) * self.resolution,
            self.origin[1] + (cy as f64 + 0.5) * self.resolution,
        ]
    }

    /// Cost at a world point; outside the grid counts as lethal.
    pub fn cost_at(&self, x: f64, y: f64) -> u8 {
        self.world_to_cell(x, y).map(|(cx, cy)| self.get(cx, cy)).unwrap_or(LETHAL)
    }

    pub fn mark_disk(&mut self, center: [f64; 2], radius: f64, c: u8) {
        for cy in 0..self.height {
            for cx in 0..self.width {
                let p = self.cell_center(cx, cy);
                if (p[0] - center[0]).hypot(p[1] - center[1]) <= radius {
                    let i = self.index(cx, cy);
                    self.cost[i] = self.cost[i].max(c);
                }
            }
        }
    }

    pub fn mark_border(&mut self) {
        for cx in 0..self.width {
            self.set(cx, 0, LETHAL);
            self.set(cx, self.height - 1, LETHAL);
        }
        for cy in 0..self.height {
            self.set(0, cy, LETHAL);
            self.set(self.width - 1, cy, LETHAL);
        }
    }

    /// Grow lethal cells: everything within `inscribed` becomes lethal, and
    /// costs fall off linearly out to `inflation`.
    pub fn inflate(&mut self, inscribed: f64, inflation: f64) {
        let lethal: Vec<[f64; 2]> = (0..self.cost.len())
            .filter(|&i| self.cost[i] == LETHAL)
            .map(|i| {
                let (cx, cy) = self.cell_of(i);
                self.cell_center(cx, cy)
            })
            .collect();
        if lethal.is_empty() {
            return;
        }
        let reach = (inflation / self.resolution).ceil() as isize + 1;
        let mut out = self.cost.clone();
        for p in &lethal {
            let Some((ox, oy)) = self.world_to_cell(p[0], p[1]) else { continue };
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (cx, cy) = (ox as isize + dx, oy as isize + dy);
                    if cx < 0 || cy < 0 || cx >= self.width as isize || cy >= self.height as isize {
                        continue;
                    }
                    let (cx, cy) = (cx as usize, cy as usize);
                    let q = self.cell_center(cx, cy);
                    let d = (q[0] - p[0]).hypot(q[1] - p[1]);
                    let c = if d <= inscribed {
                        LETHAL
                    } else if d <= inflation {
                        let frac = 1.0 - (d - inscribed) / (inflation - inscribed);
                        1 + (frac * (MAX_INFLATED - 1) as f64).round() as u8
                    } else {
                        continue;
                    };
                    let i = self.index(cx, cy);
                    out[i] = out[i].max(c);
                }
            }
        }
        self.cost = out;
    }
}
