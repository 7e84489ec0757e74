use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TerrainError {
    #[error("point ({x}, {y}) is outside the terrain")]
    OutOfBounds { x: f64, y: f64 },
}

/// Soil height above the ground plane on a regular grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: [f64; 2],
    pub heights: Vec<f64>,
}

impl Terrain {
    pub fn flat(width: usize, height: usize, resolution: f64, origin: [f64; 2]) -> Self {
        Self { width, height, resolution, origin, heights: vec![0.0; width * height] }
    }

    pub fn cell_area(&self) -> f64 {
        self.resolution * self.resolution
    }

    pub fn index(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> [f64; 2] {
        [
            self.origin[0] + (cx as f64 + 0.5) * self.resolution,
            self.origin[1] + (cy as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin[0]) / self.resolution).floor();
        let fy = ((y - self.origin[1]) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        self.cell_at(x, y).map(|(cx, cy)| self.heights[self.index(cx, cy)])
    }

    pub fn volume(&self) -> f64 {
        self.heights.iter().sum::<f64>() * self.cell_area()
    }

    /// Indices of cells whose centres lie within `radius` of `center`.
    pub fn cells_within(&self, center: [f64; 2], radius: f64) -> Vec<usize> {
        let r = (radius / self.resolution).ceil() as isize + 1;
        let Some((ox, oy)) = self.cell_at(center[0], center[1]).or_else(|| self.nearest_cell(center)) else {
            return vec![];
        };
        let mut out = vec![];
        for dy in -r..=r {
            for dx in -r..=r {
                let (cx, cy) = (ox as isize + dx, oy as isize + dy);
                if cx < 0 || cy < 0 || cx >= self.width as isize || cy >= self.height as isize {
                    continue;
                }
                let c = self.cell_center(cx as usize, cy as usize);
                if (c[0] - center[0]).hypot(c[1] - center[1]) <= radius {
                    out.push(self.index(cx as usize, cy as usize));
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn nearest_cell(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        if self.width == 0 || self.height == 0 {
            return None;
        }
        let clamp = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        Some((
            clamp((p[0] - self.origin[0]) / self.resolution, self.width),
            clamp((p[1] - self.origin[1]) / self.resolution, self.height),
        ))
    }

    pub fn region_volume(&self, center: [f64; 2], radius: f64) -> f64 {
        self.cells_within(center, radius).iter().map(|&i| self.heights[i]).sum::<f64>() * self.cell_area()
    }

    /// Add a paraboloid mound `h * (1 - (d/r)^2)`.
    pub fn add_mound(&mut self, center: [f64; 2], peak: f64, radius: f64) {
        for i in self.cells_within(center, radius) {
            let (cx, cy) = (i % self.width, i / self.width);
            let c = self.cell_center(cx, cy);
            let d = (c[0] - center[0]).hypot(c[1] - center[1]);
            self.heights[i] += peak * (1.0 - (d / radius).powi(2));
        }
    }

    /// Remove up to `scoop` cubic metres from the cells within `radius` of
    /// `tip`, lowering them by a common depth and never below zero. Returns
    /// the volume actually removed.
    pub fn excavate_at(&mut self, tip: [f64; 2], scoop: f64, radius: f64) -> Result<f64, TerrainError> {
        if self.cell_at(tip[0], tip[1]).is_none() {
            return Err(TerrainError::OutOfBounds { x: tip[0], y: tip[1] });
        }
        let cells = self.cells_within(tip, radius);
        let a = self.cell_area();
        let available: f64 = cells.iter().map(|&i| self.heights[i]).sum::<f64>() * a;
        let want = scoop.max(0.0).min(available);
        if want <= 0.0 {
            return Ok(0.0);
        }
        let depth = if want >= available { f64::INFINITY } else { fill_level(&cells.iter().map(|&i| self.heights[i]).collect::<Vec<_>>(), want / a) };
        let mut removed = 0.0;
        for &i in &cells {
            let old = self.heights[i];
            let new = (old - depth).max(0.0);
            self.heights[i] = new;
            removed += (old - new) * a;
        }
        Ok(removed)
    }

    /// Spread `volume` evenly over the cells within `radius` of `center`.
    /// Returns the volume added (zero when no cell is covered).
    pub fn deposit(&mut self, center: [f64; 2], volume: f64, radius: f64) -> f64 {
        let cells = self.cells_within(center, radius);
        if cells.is_empty() || volume <= 0.0 {
            return 0.0;
        }
        let a = self.cell_area();
        let dh = volume / (cells.len() as f64 * a);
        let mut added = 0.0;
        for &i in &cells {
            let old = self.heights[i];
            self.heights[i] = old + dh;
            added += (self.heights[i] - old) * a;
        }
        added
    }
}

/// Depth `d` such that `sum(min(h_i, d)) == target`, for `0 < target < sum(h)`.
fn fill_level(heights: &[f64], target: f64) -> f64 {
    let mut h: Vec<f64> = heights.to_vec();
    h.sort_by(|a, b| a.partial_cmp(b).expect("finite heights"));
    let n = h.len();
    let mut below = 0.0;
    for (k, &hk) in h.iter().enumerate() {
        let remaining = (n - k) as f64;
        // all cells from k on are at least hk tall
        if below + hk * remaining >= target {
            return (target - below) / remaining;
        }
        below += hk;
    }
    h.last().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scoop_from_flat_patch() {
        // 1 m tall, 2x2 cells of 1 m^2 hold 4 m^3 within radius 0.8 of the shared corner
        let mut t = Terrain::flat(4, 4, 1.0, [0.0, 0.0]);
        for (cx, cy) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
            let i = t.index(cx, cy);
            t.heights[i] = 1.0;
        }
        let before = t.volume();
        let got = t.excavate_at([2.0, 2.0], 0.8, 0.8).unwrap();
        assert!((got - 0.8).abs() < 1e-12);
        assert!((t.heights[t.index(1, 1)] - 0.8).abs() < 1e-12);
        assert!((before - t.volume() - got).abs() < 1e-12);
    }

    #[test]
    fn uneven_cells_bottom_out() {
        let mut t = Terrain::flat(3, 1, 1.0, [0.0, 0.0]);
        t.heights = vec![0.1, 1.0, 2.0];
        let got = t.excavate_at([1.5, 0.5], 1.2, 1.1).unwrap();
        // common depth d with 0.1 + 2d = 1.2
        assert!((got - 1.2).abs() < 1e-12);
        assert_eq!(t.heights[0], 0.0);
        assert!((t.heights[1] - 0.45).abs() < 1e-12);
        assert!((t.heights[2] - 1.45).abs() < 1e-12);
    }

    #[test]
    fn empty_and_outside() {
        let mut t = Terrain::flat(4, 4, 1.0, [0.0, 0.0]);
        assert_eq!(t.excavate_at([2.0, 2.0], 0.8, 0.6).unwrap(), 0.0);
        assert!(matches!(t.excavate_at([9.0, 2.0], 0.8, 0.6), Err(TerrainError::OutOfBounds { .. })));
    }

    #[test]
    fn request_larger_than_available() {
        let mut t = Terrain::flat(4, 4, 1.0, [0.0, 0.0]);
        let i = t.index(2, 2);
        t.heights[i] = 0.3;
        assert!((t.excavate_at([2.5, 2.5], 0.8, 0.6).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(t.volume(), 0.0);
    }

    #[test]
    fn deposit_adds_volume() {
        let mut t = Terrain::flat(10, 10, 0.25, [0.0, 0.0]);
        let added = t.deposit([1.25, 1.25], 5.5, 1.0);
        assert!((added - 5.5).abs() < 1e-12);
        assert!((t.volume() - 5.5).abs() < 1e-12);
    }
}
