//! Uniform-cell occupancy grid built from single-beam range readings.
//!
//! Every cell carries a signed vote counter. A reading casts one free vote
//! (-1) into each cell its beam crosses before the hit, and an occupied vote
//! (+2) into the hit cell. A cell's committed state flips only once its
//! counter reaches the confidence margin in either direction; counters
//! saturate at `±counter_cap`.
//!
//! Cells are half-open: a point on a cell edge belongs to the cell with the
//! larger coordinate. When a beam passes exactly through a cell corner the
//! traversal also visits the neighbouring cell on the positive-y side of the
//! beam.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{angle_diff, VehicleState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid specification: {0}")]
    InvalidSpec(&'static str),
    #[error("snapshot has {got} counters, expected {expected}")]
    SnapshotSize { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub ix: i64,
    pub iy: i64,
}

impl CellIndex {
    pub fn new(ix: i64, iy: i64) -> Self {
        Self { ix, iy }
    }
}

/// Placement and resolution of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub cell_size_m: f64,
    /// World coordinates of the outer corner of cell (0, 0).
    pub origin_x_m: f64,
    pub origin_y_m: f64,
    pub width_cells: usize,
    pub height_cells: usize,
}

impl GridGeometry {
    pub fn cell_of(&self, x_m: f64, y_m: f64) -> CellIndex {
        CellIndex {
            ix: ((x_m - self.origin_x_m) / self.cell_size_m).floor() as i64,
            iy: ((y_m - self.origin_y_m) / self.cell_size_m).floor() as i64,
        }
    }

    /// World x of the left edge of column `ix`.
    pub fn edge_x(&self, ix: i64) -> f64 {
        self.origin_x_m + ix as f64 * self.cell_size_m
    }

    /// World y of the bottom edge of row `iy`.
    pub fn edge_y(&self, iy: i64) -> f64 {
        self.origin_y_m + iy as f64 * self.cell_size_m
    }

    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        (
            self.edge_x(cell.ix) + 0.5 * self.cell_size_m,
            self.edge_y(cell.iy) + 0.5 * self.cell_size_m,
        )
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        cell.ix >= 0 && cell.iy >= 0 && (cell.ix as usize) < self.width_cells && (cell.iy as usize) < self.height_cells
    }

    fn linear(&self, cell: CellIndex) -> Option<usize> {
        self.contains(cell)
            .then(|| cell.iy as usize * self.width_cells + cell.ix as usize)
    }

    fn unlinear(&self, idx: usize) -> CellIndex {
        CellIndex::new((idx % self.width_cells) as i64, (idx / self.width_cells) as i64)
    }
}

/// Cells visited by the segment `from → to`, in traversal order.
///
/// Indices are unbounded; callers filter against the grid extent. A
/// zero-length segment yields its containing cell.
pub fn ray_cells(from: (f64, f64), to: (f64, f64), geom: &GridGeometry) -> Vec<CellIndex> {
    let start = geom.cell_of(from.0, from.1);
    let end = geom.cell_of(to.0, to.1);
    let dx = to.0 - from.0;
    let dy = to.1 - from.1;
    let step_x = (end.ix - start.ix).signum();
    let step_y = (end.iy - start.iy).signum();

    // Parameter along the segment at which the current cell is left through
    // its x (resp. y) boundary in the direction of travel.
    let exit_x = |ix: i64| {
        let edge = if step_x > 0 { geom.edge_x(ix + 1) } else { geom.edge_x(ix) };
        (edge - from.0) / dx
    };
    let exit_y = |iy: i64| {
        let edge = if step_y > 0 { geom.edge_y(iy + 1) } else { geom.edge_y(iy) };
        (edge - from.1) / dy
    };

    let steps = (end.ix - start.ix).unsigned_abs() + (end.iy - start.iy).unsigned_abs();
    let mut cells = Vec::with_capacity(steps as usize + 1);
    let mut cur = start;
    cells.push(cur);
    while cur != end {
        let need_x = cur.ix != end.ix;
        let need_y = cur.iy != end.iy;
        let advance_x = if need_x && need_y {
            let tx = exit_x(cur.ix);
            let ty = exit_y(cur.iy);
            if tx < ty {
                true
            } else if ty < tx {
                false
            } else {
                // exact corner: take the neighbour on the positive-y side first
                dy < 0.0
            }
        } else {
            need_x
        };
        if advance_x {
            cur.ix += step_x;
        } else {
            cur.iy += step_y;
        }
        cells.push(cur);
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub geometry: GridGeometry,
    /// Counter magnitude at which a cell commits to Free or Occupied.
    pub margin: i32,
    pub counter_cap: i32,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            geometry: GridGeometry {
                cell_size_m: 0.05,
                origin_x_m: -10.0,
                origin_y_m: -10.0,
                width_cells: 400,
                height_cells: 400,
            },
            margin: 3,
            counter_cap: 10,
        }
    }
}

impl GridSpec {
    /// Square map of `extent_m` centred on a start position.
    pub fn centered(x_m: f64, y_m: f64, extent_m: f64, cell_size_m: f64) -> Self {
        let cells = (extent_m / cell_size_m).round() as usize;
        Self {
            geometry: GridGeometry {
                cell_size_m,
                origin_x_m: x_m - 0.5 * extent_m,
                origin_y_m: y_m - 0.5 * extent_m,
                width_cells: cells,
                height_cells: cells,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let g = &self.geometry;
        if !(g.cell_size_m.is_finite() && g.cell_size_m > 0.0) {
            return Err(GridError::InvalidSpec("cell size must be positive"));
        }
        if !(g.origin_x_m.is_finite() && g.origin_y_m.is_finite()) {
            return Err(GridError::InvalidSpec("origin must be finite"));
        }
        if g.width_cells == 0 || g.height_cells == 0 {
            return Err(GridError::InvalidSpec("grid must have at least one cell"));
        }
        if self.margin <= 0 || self.counter_cap < self.margin {
            return Err(GridError::InvalidSpec("need 0 < margin <= counter_cap"));
        }
        Ok(())
    }
}

/// Where a range sensor sits on the car, in the vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorMount {
    pub forward_m: f64,
    pub left_m: f64,
    pub yaw_rad: f64,
}

impl SensorMount {
    pub fn world_ray(&self, pose: &VehicleState) -> ((f64, f64), f64) {
        (
            pose.to_world(self.forward_m, self.left_m),
            pose.theta_rad + self.yaw_rad,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeReading {
    pub mount: SensorMount,
    pub measured_m: f64,
    pub max_range_m: f64,
    pub valid: bool,
}

impl RangeReading {
    pub fn is_usable(&self) -> bool {
        self.valid
            && self.measured_m.is_finite()
            && self.max_range_m.is_finite()
            && self.max_range_m > 0.0
            && self.measured_m >= 0.0
            && self.measured_m <= self.max_range_m
    }

    /// True when the beam hit something before running out of range.
    pub fn is_hit(&self) -> bool {
        self.measured_m < self.max_range_m
    }
}

pub const FREE_VOTE: i32 = -1;
pub const OCCUPIED_VOTE: i32 = 2;

/// Serializable image of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSnapshot {
    pub spec: GridSpec,
    pub counters: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    spec: GridSpec,
    counters: Vec<i32>,
    states: Vec<CellState>,
    occupied: BTreeSet<usize>,
}

impl GridMap {
    pub fn new(spec: GridSpec) -> Result<Self, GridError> {
        spec.validate()?;
        let n = spec.geometry.width_cells * spec.geometry.height_cells;
        Ok(Self {
            spec,
            counters: vec![0; n],
            states: vec![CellState::Unknown; n],
            occupied: BTreeSet::new(),
        })
    }

    pub fn from_snapshot(snapshot: &GridSnapshot) -> Result<Self, GridError> {
        let mut map = Self::new(snapshot.spec)?;
        if snapshot.counters.len() != map.counters.len() {
            return Err(GridError::SnapshotSize {
                got: snapshot.counters.len(),
                expected: map.counters.len(),
            });
        }
        for (i, c) in snapshot.counters.iter().enumerate() {
            map.set_counter(i, *c);
        }
        Ok(map)
    }

    pub fn snapshot(&self) -> GridSnapshot {
        GridSnapshot {
            spec: self.spec,
            counters: self.counters.clone(),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.spec.geometry
    }

    pub fn counters(&self) -> &[i32] {
        &self.counters
    }

    pub fn counter(&self, cell: CellIndex) -> Option<i32> {
        self.geometry().linear(cell).map(|i| self.counters[i])
    }

    pub fn state(&self, cell: CellIndex) -> CellState {
        self.geometry()
            .linear(cell)
            .map_or(CellState::Unknown, |i| self.states[i])
    }

    /// Committed state of the cell containing a world point; Unknown off-map.
    pub fn cell_state(&self, x_m: f64, y_m: f64) -> CellState {
        self.state(self.geometry().cell_of(x_m, y_m))
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.occupied.iter().map(|i| self.spec.geometry.unlinear(*i))
    }

    fn commit(&self, counter: i32) -> CellState {
        if counter >= self.spec.margin {
            CellState::Occupied
        } else if counter <= -self.spec.margin {
            CellState::Free
        } else {
            CellState::Unknown
        }
    }

    fn set_counter(&mut self, idx: usize, value: i32) {
        let cap = self.spec.counter_cap;
        let value = value.clamp(-cap, cap);
        self.counters[idx] = value;
        let state = self.commit(value);
        self.states[idx] = state;
        if state == CellState::Occupied {
            self.occupied.insert(idx);
        } else {
            self.occupied.remove(&idx);
        }
    }

    /// Votes one reading would cast, restricted to cells on the map.
    pub fn reading_votes(&self, pose: &VehicleState, reading: &RangeReading) -> Vec<(CellIndex, i32)> {
        if !reading.is_usable() || !pose.is_finite() {
            return Vec::new();
        }
        let ((sx, sy), heading) = reading.mount.world_ray(pose);
        let (sin_h, cos_h) = heading.sin_cos();
        let geom = self.geometry();
        let mut votes = Vec::new();
        if reading.is_hit() {
            let hit = (sx + reading.measured_m * cos_h, sy + reading.measured_m * sin_h);
            let hit_cell = geom.cell_of(hit.0, hit.1);
            for cell in ray_cells((sx, sy), hit, geom) {
                if cell != hit_cell {
                    votes.push((cell, FREE_VOTE));
                }
            }
            votes.push((hit_cell, OCCUPIED_VOTE));
        } else {
            let end = (sx + reading.max_range_m * cos_h, sy + reading.max_range_m * sin_h);
            votes.extend(ray_cells((sx, sy), end, geom).into_iter().map(|c| (c, FREE_VOTE)));
        }
        votes.retain(|(c, _)| geom.contains(*c));
        votes
    }

    pub fn integrate_reading(&mut self, pose: &VehicleState, reading: &RangeReading) {
        for (cell, vote) in self.reading_votes(pose, reading) {
            if let Some(idx) = self.geometry().linear(cell) {
                let value = self.counters[idx].saturating_add(vote);
                self.set_counter(idx, value);
            }
        }
    }

    /// Distance from the vehicle reference point to the closest Occupied cell
    /// centre whose bearing lies within `±sector_rad / 2` of the heading.
    pub fn nearest_obstacle(&self, pose: &VehicleState, sector_rad: f64) -> Option<f64> {
        let half = 0.5 * sector_rad;
        self.occupied_cells()
            .filter_map(|cell| {
                let (cx, cy) = self.geometry().cell_center(cell);
                let (dx, dy) = (cx - pose.x_m, cy - pose.y_m);
                let bearing = angle_diff(dy.atan2(dx), pose.theta_rad);
                (bearing.abs() <= half).then(|| dx.hypot(dy))
            })
            .min_by(|a, b| a.total_cmp(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn geom(cell: f64) -> GridGeometry {
        GridGeometry {
            cell_size_m: cell,
            origin_x_m: 0.0,
            origin_y_m: 0.0,
            width_cells: 50,
            height_cells: 50,
        }
    }

    fn small_map() -> GridMap {
        GridMap::new(GridSpec {
            geometry: GridGeometry {
                cell_size_m: 0.1,
                origin_x_m: 0.0,
                origin_y_m: 0.0,
                width_cells: 40,
                height_cells: 20,
            },
            margin: 3,
            counter_cap: 10,
        })
        .unwrap()
    }

    fn front(measured: f64, max: f64) -> RangeReading {
        RangeReading {
            mount: SensorMount {
                forward_m: 0.0,
                left_m: 0.0,
                yaw_rad: 0.0,
            },
            measured_m: measured,
            max_range_m: max,
            valid: true,
        }
    }

    #[test]
    fn axis_aligned_from_cell_centre() {
        let g = geom(0.1);
        let cells = ray_cells((0.05, 0.05), (1.05, 0.05), &g);
        let expect: Vec<_> = (0..=10).map(|i| CellIndex::new(i, 0)).collect();
        assert_eq!(cells, expect);
    }

    #[test]
    fn zero_length_is_single_cell() {
        let g = geom(0.1);
        assert_eq!(ray_cells((0.33, 0.47), (0.33, 0.47), &g), vec![CellIndex::new(3, 4)]);
    }

    #[test]
    fn diagonal_corner_tie_goes_positive_y() {
        let g = geom(0.25);
        let cells = ray_cells((0.125, 0.125), (0.625, 0.625), &g);
        assert_eq!(
            cells,
            vec![
                CellIndex::new(0, 0),
                CellIndex::new(0, 1),
                CellIndex::new(1, 1),
                CellIndex::new(1, 2),
                CellIndex::new(2, 2),
            ]
        );
        let down = ray_cells((0.125, 0.625), (0.625, 0.125), &g);
        assert_eq!(
            down,
            vec![
                CellIndex::new(0, 2),
                CellIndex::new(1, 2),
                CellIndex::new(1, 1),
                CellIndex::new(2, 1),
                CellIndex::new(2, 0),
            ]
        );
    }

    #[test]
    fn endpoint_on_edge_belongs_to_larger_cell() {
        let g = geom(0.25);
        let cells = ray_cells((0.1, 0.1), (0.5, 0.1), &g);
        assert_eq!(cells.last(), Some(&CellIndex::new(2, 0)));
        // start on an edge, travelling towards smaller x
        let back = ray_cells((0.5, 0.1), (0.3, 0.1), &g);
        assert_eq!(back, vec![CellIndex::new(2, 0), CellIndex::new(1, 0)]);
    }

    #[test]
    fn hit_reading_example() {
        let mut map = small_map();
        let pose = VehicleState::new(0.0, 0.0, 0.0);
        let votes = map.reading_votes(&pose, &front(1.0, 2.0));
        let free: Vec<_> = votes.iter().filter(|v| v.1 == FREE_VOTE).map(|v| v.0).collect();
        let occ: Vec<_> = votes.iter().filter(|v| v.1 == OCCUPIED_VOTE).map(|v| v.0).collect();
        assert_eq!(free, (0..10).map(|i| CellIndex::new(i, 0)).collect::<Vec<_>>());
        assert_eq!(occ, vec![CellIndex::new(10, 0)]);
        map.integrate_reading(&pose, &front(1.0, 2.0));
        assert_eq!(map.counter(CellIndex::new(10, 0)), Some(2));
        assert_eq!(map.counter(CellIndex::new(3, 0)), Some(-1));
    }

    #[test]
    fn max_range_reading_has_no_hit() {
        let map = small_map();
        let votes = map.reading_votes(&VehicleState::new(0.0, 0.05, 0.0), &front(1.0, 1.0));
        assert!(!votes.is_empty());
        assert!(votes.iter().all(|v| v.1 == FREE_VOTE));
    }

    #[test]
    fn counters_saturate_and_commit() {
        let mut map = small_map();
        let pose = VehicleState::new(0.0, 0.05, 0.0);
        let cell = CellIndex::new(10, 0);
        map.integrate_reading(&pose, &front(1.0, 2.0));
        assert_eq!(map.state(cell), CellState::Unknown);
        map.integrate_reading(&pose, &front(1.0, 2.0));
        assert_eq!(map.state(cell), CellState::Occupied);
        for _ in 0..20 {
            map.integrate_reading(&pose, &front(1.0, 2.0));
        }
        assert_eq!(map.counter(cell), Some(10));
        assert_eq!(map.counter(CellIndex::new(2, 0)), Some(-10));
        assert_eq!(map.state(CellIndex::new(2, 0)), CellState::Free);
    }

    #[test]
    fn invalid_and_offmap_readings_are_noops() {
        let mut map = small_map();
        let before = map.clone();
        let mut r = front(1.0, 2.0);
        r.valid = false;
        map.integrate_reading(&VehicleState::default(), &r);
        map.integrate_reading(&VehicleState::new(-5.0, -5.0, 3.0), &front(1.0, 2.0));
        map.integrate_reading(&VehicleState::default(), &front(3.0, 2.0));
        assert_eq!(map, before);
    }

    #[test]
    fn cell_state_queries() {
        let map = small_map();
        assert_eq!(map.cell_state(1.0, 1.0), CellState::Unknown);
        assert_eq!(map.cell_state(-1.0, 1.0), CellState::Unknown);
        assert_eq!(map.cell_state(100.0, 1.0), CellState::Unknown);
    }

    #[test]
    fn nearest_obstacle_sector() {
        let mut map = small_map();
        let sensor_pose = VehicleState::new(0.0, 1.05, 0.0);
        assert_eq!(map.nearest_obstacle(&sensor_pose, 60f64.to_radians()), None);
        for _ in 0..2 {
            map.integrate_reading(&sensor_pose, &front(1.0, 2.0));
        }
        let d = map.nearest_obstacle(&sensor_pose, 60f64.to_radians()).unwrap();
        let half_diag = 0.5 * 0.1 * 2f64.sqrt();
        assert!((d - 1.0).abs() <= half_diag, "{d}");
        let behind = VehicleState::new(2.0, 1.05, 0.0);
        assert_eq!(map.nearest_obstacle(&behind, 60f64.to_radians()), None);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut map = small_map();
        map.integrate_reading(&VehicleState::new(0.0, 0.5, 0.3), &front(1.2, 2.0));
        let back = GridMap::from_snapshot(&map.snapshot()).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn spec_validation() {
        assert!(GridSpec::default().validate().is_ok());
        let mut s = GridSpec::default();
        s.margin = 0;
        assert!(s.validate().is_err());
        let mut s = GridSpec::default();
        s.geometry.cell_size_m = 0.0;
        assert!(s.validate().is_err());
        let c = GridSpec::centered(1.0, 2.0, 20.0, 0.05);
        assert_eq!(c.geometry.width_cells, 400);
        assert_abs_diff_eq!(c.geometry.origin_x_m, -9.0, epsilon = 1e-12);
    }
}
