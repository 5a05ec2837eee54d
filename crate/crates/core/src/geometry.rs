//! Torus/box geometry in d ∈ {1,2,3} and a cell-list index for fixed-radius
//! neighbor queries.
//!
//! All coordinates are `[f64; 3]` with unused trailing components held at 0,
//! canonicalized into `[0, L)` per axis. Grid cells have unit size, except the
//! last cell per axis which absorbs the fractional remainder of `L`, so every
//! cell is at least 1 wide and a radius-1 query never has to look further than
//! the adjacent cell layer.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate vector; components beyond the window dimension are 0.
pub type Coord = [f64; 3];

/// Largest query radius the cell-list supports (the analysis needs B(z, 3/2)).
pub const MAX_QUERY_RADIUS: f64 = 1.5;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Torus,
    Free,
}

/// The finite observation domain: a d-dimensional box of side `side`,
/// either periodic or with free (absorbing-nothing) boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub d: usize,
    pub side: f64,
    pub boundary: Boundary,
}

impl Window {
    pub fn new(d: usize, side: f64, boundary: Boundary) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::contract(format!("dimension {d} not in {{1,2,3}}")));
        }
        if !(side > 0.0) {
            return Err(Error::contract(format!("side {side} must be positive")));
        }
        if boundary == Boundary::Torus && side < 4.0 {
            // side >= 4 keeps radius-3/2 queries unambiguous under wraparound
            return Err(Error::contract(format!(
                "torus side {side} must be at least 4"
            )));
        }
        Ok(Window { d, side, boundary })
    }

    pub fn torus(d: usize, side: f64) -> Result<Self> {
        Window::new(d, side, Boundary::Torus)
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.d as i32)
    }

    /// Number of grid cells per axis. The last cell covers `[n-1, L)`.
    pub fn cells_per_axis(&self) -> i64 {
        (self.side.floor() as i64).max(1)
    }

    /// Wrap a coordinate into `[0, L)` per axis (torus) and zero unused axes.
    pub fn canonicalize(&self, mut x: Coord) -> Coord {
        if self.boundary == Boundary::Torus {
            for xk in x.iter_mut().take(self.d) {
                *xk = xk.rem_euclid(self.side);
                // rem_euclid can return exactly `side` for tiny negative inputs
                if *xk >= self.side {
                    *xk = 0.0;
                }
            }
        }
        for xk in x.iter_mut().take(3).skip(self.d) {
            *xk = 0.0;
        }
        x
    }

    /// Grid cell containing a canonical coordinate.
    pub fn cell_of(&self, x: Coord) -> [i64; 3] {
        let n = self.cells_per_axis();
        let mut c = [0i64; 3];
        for k in 0..self.d {
            c[k] = (x[k].floor() as i64).clamp(0, n - 1);
        }
        c
    }

    /// Extent `[lo, hi)` of a grid cell along each axis.
    pub fn cell_box(&self, cell: [i64; 3]) -> ([f64; 3], [f64; 3]) {
        let n = self.cells_per_axis();
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..self.d {
            lo[k] = cell[k] as f64;
            hi[k] = if cell[k] == n - 1 {
                self.side
            } else {
                (cell[k] + 1) as f64
            };
        }
        (lo, hi)
    }

    pub fn cell_volume(&self, cell: [i64; 3]) -> f64 {
        let (lo, hi) = self.cell_box(cell);
        (0..self.d).map(|k| hi[k] - lo[k]).product()
    }

    /// All grid cells of the window, in lexicographic order.
    pub fn cells(&self) -> Vec<[i64; 3]> {
        let n = self.cells_per_axis();
        let per_axis = |k: usize| if k < self.d { n } else { 1 };
        let mut out = Vec::new();
        for i in 0..per_axis(0) {
            for j in 0..per_axis(1) {
                for k in 0..per_axis(2) {
                    out.push([i, j, k]);
                }
            }
        }
        out
    }

    /// Minimum-image distance on the torus; plain Euclidean for free boundary.
    pub fn distance(&self, x: Coord, y: Coord) -> f64 {
        let mut s = 0.0;
        for k in 0..self.d {
            let mut dk = (x[k] - y[k]).abs();
            if self.boundary == Boundary::Torus && dk > self.side / 2.0 {
                dk = self.side - dk;
            }
            s += dk * dk;
        }
        s.sqrt()
    }
}

/// Minimum-image (torus) or Euclidean (free) distance between two points.
pub fn torus_distance(x: Coord, y: Coord, w: &Window) -> f64 {
    w.distance(x, y)
}

/// Volume of the unit ball in dimension d.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("unit_ball_volume: unsupported dimension {d}"),
    }
}

/// Kissing number for equal balls in dimension d.
pub fn kissing_number(d: usize) -> usize {
    match d {
        1 => 2,
        2 => 6,
        3 => 12,
        _ => panic!("kissing_number: unsupported dimension {d}"),
    }
}

/// Cell-list spatial index over points keyed by an id type.
///
/// Single writer; queries return ids sorted ascending so results are
/// reproducible regardless of hash-map iteration order.
#[derive(Clone, Debug, PartialEq)]
pub struct GridIndex<K: Copy + Ord + Hash> {
    window: Window,
    cells: HashMap<[i64; 3], Vec<(K, Coord)>>,
}

impl<K: Copy + Ord + Hash> GridIndex<K> {
    pub fn new(window: Window) -> Self {
        GridIndex {
            window,
            cells: HashMap::new(),
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Insert a point at a canonical coordinate.
    pub fn insert(&mut self, id: K, x: Coord) {
        let cell = self.window.cell_of(x);
        self.cells.entry(cell).or_default().push((id, x));
    }

    /// Remove a point; returns false if it was not present.
    pub fn remove(&mut self, id: K, x: Coord) -> bool {
        let cell = self.window.cell_of(x);
        if let Some(v) = self.cells.get_mut(&cell) {
            if let Some(pos) = v.iter().position(|(k, _)| *k == id) {
                v.remove(pos);
                if v.is_empty() {
                    self.cells.remove(&cell);
                }
                return true;
            }
        }
        false
    }

    /// Ids and coordinates of all points within closed distance `r` of
    /// `center`, sorted by id. Supports r <= 1.5 only.
    pub fn neighbors_within(&self, center: Coord, r: f64) -> Result<Vec<(K, Coord)>> {
        if r > MAX_QUERY_RADIUS {
            return Err(Error::UnsupportedRadius(r));
        }
        let w = &self.window;
        let n = w.cells_per_axis();
        let c0 = w.cell_of(w.canonicalize(center));
        let reach: i64 = if r <= 1.0 { 1 } else { 2 };

        // Per-axis candidate cells, deduplicated after wraparound.
        let mut axis_cells: [Vec<i64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for k in 0..3 {
            if k >= w.d {
                axis_cells[k].push(0);
                continue;
            }
            for off in -reach..=reach {
                let c = match w.boundary {
                    Boundary::Torus => (c0[k] + off).rem_euclid(n),
                    Boundary::Free => {
                        let c = c0[k] + off;
                        if c < 0 || c >= n {
                            continue;
                        }
                        c
                    }
                };
                if !axis_cells[k].contains(&c) {
                    axis_cells[k].push(c);
                }
            }
        }

        let mut out = Vec::new();
        for &ci in &axis_cells[0] {
            for &cj in &axis_cells[1] {
                for &ck in &axis_cells[2] {
                    if let Some(v) = self.cells.get(&[ci, cj, ck]) {
                        for &(id, x) in v {
                            if w.distance(center, x) <= r {
                                out.push((id, x));
                            }
                        }
                    }
                }
            }
        }
        out.sort_by_key(|e| e.0);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w2() -> Window {
        Window::torus(2, 10.0).unwrap()
    }

    #[test]
    fn distance_identity() {
        let w = Window::torus(1, 10.0).unwrap();
        assert_eq!(torus_distance([0.0; 3], [0.0; 3], &w), 0.0);
    }

    #[test]
    fn distance_wraparound_1d() {
        let w = Window::torus(1, 10.0).unwrap();
        let d = torus_distance([0.5, 0.0, 0.0], [9.5, 0.0, 0.0], &w);
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distance_no_wrap_2d() {
        let d = torus_distance([0.0, 0.0, 0.0], [3.0, 4.0, 0.0], &w2());
        assert!((d - 5.0).abs() < 1e-15);
    }

    #[test]
    fn distance_symmetric() {
        let w = w2();
        for i in 0..100 {
            let x = [(i as f64 * 0.37) % 10.0, (i as f64 * 1.91) % 10.0, 0.0];
            let y = [(i as f64 * 2.13) % 10.0, (i as f64 * 0.61) % 10.0, 0.0];
            assert_eq!(w.distance(x, y), w.distance(y, x));
        }
    }

    #[test]
    fn unit_ball_constants() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn kissing_numbers() {
        assert_eq!(kissing_number(1), 2);
        assert_eq!(kissing_number(2), 6);
        assert_eq!(kissing_number(3), 12);
    }

    #[test]
    fn empty_index_query() {
        let idx: GridIndex<u32> = GridIndex::new(w2());
        assert!(idx.neighbors_within([1.0, 1.0, 0.0], 1.0).unwrap().is_empty());
    }

    #[test]
    fn closed_ball_includes_distance_one() {
        let mut idx: GridIndex<u32> = GridIndex::new(w2());
        idx.insert(7, [3.0, 2.0, 0.0]);
        let hits = idx.neighbors_within([2.0, 2.0, 0.0], 1.0).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, 7);
    }

    #[test]
    fn query_filters_by_distance() {
        let mut idx: GridIndex<u32> = GridIndex::new(w2());
        idx.insert(1, [2.4, 2.0, 0.0]); // 0.4
        idx.insert(2, [2.0, 2.9, 0.0]); // 0.9
        idx.insert(3, [3.1, 2.0, 0.0]); // 1.1
        let hits = idx.neighbors_within([2.0, 2.0, 0.0], 1.0).unwrap();
        let ids: Vec<u32> = hits.iter().map(|h| h.0).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn radius_above_max_rejected() {
        let idx: GridIndex<u32> = GridIndex::new(w2());
        assert!(idx.neighbors_within([0.0; 3], 1.6).is_err());
    }

    #[test]
    fn insert_remove_roundtrip_identical() {
        let mut idx: GridIndex<u32> = GridIndex::new(w2());
        idx.insert(1, [1.5, 1.5, 0.0]);
        idx.insert(2, [8.5, 3.5, 0.0]);
        let before = idx.clone();
        idx.insert(3, [4.4, 4.4, 0.0]);
        assert!(idx.remove(3, [4.4, 4.4, 0.0]));
        assert_eq!(idx, before);
    }

    #[test]
    fn wraparound_query_non_integer_side() {
        // last cell absorbs the fractional remainder, so a radius-1 query
        // near the seam still sees across it
        let w = Window::torus(1, 4.5).unwrap();
        let mut idx: GridIndex<u32> = GridIndex::new(w);
        idx.insert(1, [3.6, 0.0, 0.0]);
        let hits = idx.neighbors_within([0.1, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(hits.len(), 1);
    }

    #[test]
    fn free_boundary_distance_is_euclidean() {
        let w = Window::new(1, 10.0, Boundary::Free).unwrap();
        let d = torus_distance([0.5, 0.0, 0.0], [9.5, 0.0, 0.0], &w);
        assert!((d - 9.0).abs() < 1e-15);
    }
}
