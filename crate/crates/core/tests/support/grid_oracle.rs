//! Brute-force reference for beam traversal and vote casting.
//!
//! Instead of stepping from cell to cell it enumerates every cell near the
//! segment and asks whether some point of the segment lies in that cell's
//! half-open box, working exactly in the segment parameter `t ∈ [0, 1]`.
//! Corner crossings that touch the positive-y neighbour only at a single
//! point are added by rule.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use deskcar_core::grid::{CellIndex, GridGeometry, RangeReading};
use deskcar_core::kinematics::VehicleState;

/// Parameter interval with per-end closedness.
#[derive(Clone, Copy, Debug)]
struct Interval {
    lo: f64,
    lo_closed: bool,
    hi: f64,
    hi_closed: bool,
}

impl Interval {
    fn unit() -> Self {
        Interval {
            lo: 0.0,
            lo_closed: true,
            hi: 1.0,
            hi_closed: true,
        }
    }

    fn intersect(self, o: Interval) -> Interval {
        let (lo, lo_closed) = if self.lo > o.lo {
            (self.lo, self.lo_closed)
        } else if o.lo > self.lo {
            (o.lo, o.lo_closed)
        } else {
            (self.lo, self.lo_closed && o.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < o.hi {
            (self.hi, self.hi_closed)
        } else if o.hi < self.hi {
            (o.hi, o.hi_closed)
        } else {
            (self.hi, self.hi_closed && o.hi_closed)
        };
        Interval {
            lo,
            lo_closed,
            hi,
            hi_closed,
        }
    }

    fn is_empty(&self) -> bool {
        !(self.lo < self.hi || (self.lo == self.hi && self.lo_closed && self.hi_closed))
    }
}

/// Parameters at which `p0 + t·d` lies in `[lo, hi)`.
fn axis_interval(p0: f64, d: f64, lo: f64, hi: f64) -> Option<Interval> {
    if d == 0.0 {
        return (lo <= p0 && p0 < hi).then(|| Interval {
            lo: f64::NEG_INFINITY,
            lo_closed: true,
            hi: f64::INFINITY,
            hi_closed: true,
        });
    }
    let t_lo = (lo - p0) / d;
    let t_hi = (hi - p0) / d;
    Some(if d > 0.0 {
        Interval {
            lo: t_lo,
            lo_closed: true,
            hi: t_hi,
            hi_closed: false,
        }
    } else {
        Interval {
            lo: t_hi,
            lo_closed: false,
            hi: t_lo,
            hi_closed: true,
        }
    })
}

fn edge_x(g: &GridGeometry, i: i64) -> f64 {
    g.origin_x_m + i as f64 * g.cell_size_m
}

fn edge_y(g: &GridGeometry, j: i64) -> f64 {
    g.origin_y_m + j as f64 * g.cell_size_m
}

fn floor_cell(g: &GridGeometry, x: f64, y: f64) -> CellIndex {
    CellIndex::new(
        ((x - g.origin_x_m) / g.cell_size_m).floor() as i64,
        ((y - g.origin_y_m) / g.cell_size_m).floor() as i64,
    )
}

/// Every cell the closed segment `from → to` passes through.
pub fn segment_cells(from: (f64, f64), to: (f64, f64), g: &GridGeometry) -> BTreeSet<CellIndex> {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let a = floor_cell(g, from.0, from.1);
    let b = floor_cell(g, to.0, to.1);
    let mut cells = BTreeSet::new();
    for i in a.ix.min(b.ix) - 1..=a.ix.max(b.ix) + 1 {
        for j in a.iy.min(b.iy) - 1..=a.iy.max(b.iy) + 1 {
            let (Some(ix), Some(iy)) = (
                axis_interval(from.0, dx, edge_x(g, i), edge_x(g, i + 1)),
                axis_interval(from.1, dy, edge_y(g, j), edge_y(g, j + 1)),
            ) else {
                continue;
            };
            if !Interval::unit().intersect(ix).intersect(iy).is_empty() {
                cells.insert(CellIndex::new(i, j));
                continue;
            }
            // Diagonal travel through the lower-right corner of (i, j) touches
            // it only at that point; the traversal counts it as crossed.
            let same_sign = (dx > 0.0 && dy > 0.0) || (dx < 0.0 && dy < 0.0);
            if same_sign {
                let tx = (edge_x(g, i + 1) - from.0) / dx;
                let ty = (edge_y(g, j) - from.1) / dy;
                let in_range = if dx > 0.0 { tx > 0.0 && tx <= 1.0 } else { tx >= 0.0 && tx < 1.0 };
                if tx == ty && in_range {
                    cells.insert(CellIndex::new(i, j));
                }
            }
        }
    }
    cells
}

/// Sample the segment densely; every sampled cell must be in the exact set.
pub fn dense_sample_cells(from: (f64, f64), to: (f64, f64), g: &GridGeometry) -> BTreeSet<CellIndex> {
    let len = (to.0 - from.0).hypot(to.1 - from.1);
    let n = ((len / (g.cell_size_m / 100.0)).ceil() as usize).max(1);
    (0..=n)
        .map(|k| {
            let t = k as f64 / n as f64;
            let (x, y) = if k == n {
                to
            } else {
                (from.0 + t * (to.0 - from.0), from.1 + t * (to.1 - from.1))
            };
            floor_cell(g, x, y)
        })
        .collect()
}

/// Votes a reading should cast, computed from scratch.
pub fn reading_votes(
    g: &GridGeometry,
    pose: &VehicleState,
    reading: &RangeReading,
) -> BTreeMap<CellIndex, i32> {
    let mut votes = BTreeMap::new();
    let usable = reading.valid
        && reading.measured_m.is_finite()
        && reading.measured_m >= 0.0
        && reading.max_range_m > 0.0
        && reading.measured_m <= reading.max_range_m;
    if !usable {
        return votes;
    }
    let (s, c) = pose.theta_rad.sin_cos();
    let m = &reading.mount;
    let sx = pose.x_m + m.forward_m * c - m.left_m * s;
    let sy = pose.y_m + m.forward_m * s + m.left_m * c;
    let heading = pose.theta_rad + m.yaw_rad;
    let (hs, hc) = heading.sin_cos();
    let hit = reading.measured_m < reading.max_range_m;
    let range = if hit { reading.measured_m } else { reading.max_range_m };
    let end = (sx + range * hc, sy + range * hs);
    let end_cell = floor_cell(g, end.0, end.1);
    for cell in segment_cells((sx, sy), end, g) {
        let v = if hit && cell == end_cell { 2 } else { -1 };
        votes.insert(cell, v);
    }
    let in_map = |c: &CellIndex| {
        c.ix >= 0 && c.iy >= 0 && (c.ix as usize) < g.width_cells && (c.iy as usize) < g.height_cells
    };
    votes.retain(|c, _| in_map(c));
    votes
}
