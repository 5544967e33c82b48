#[path = "support/grid_oracle.rs"]
mod grid_oracle;

use std::collections::{BTreeMap, BTreeSet};

use deskcar_core::grid::{ray_cells, CellIndex, GridGeometry, GridMap, GridSpec, RangeReading, SensorMount};
use deskcar_core::kinematics::VehicleState;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn geometry() -> GridGeometry {
    GridGeometry {
        cell_size_m: 0.05,
        origin_x_m: -2.0,
        origin_y_m: -2.0,
        width_cells: 80,
        height_cells: 80,
    }
}

fn mounts() -> [SensorMount; 4] {
    use std::f64::consts::{FRAC_PI_2, PI};
    [
        SensorMount { forward_m: 0.32, left_m: 0.0, yaw_rad: 0.0 },
        SensorMount { forward_m: -0.07, left_m: 0.0, yaw_rad: PI },
        SensorMount { forward_m: 0.13, left_m: 0.12, yaw_rad: FRAC_PI_2 },
        SensorMount { forward_m: 0.13, left_m: -0.12, yaw_rad: -FRAC_PI_2 },
    ]
}

fn check_path(from: (f64, f64), to: (f64, f64), g: &GridGeometry) {
    let path = ray_cells(from, to, g);
    let set: BTreeSet<_> = path.iter().copied().collect();
    assert_eq!(set.len(), path.len(), "cell visited twice: {from:?} -> {to:?}");
    for w in path.windows(2) {
        let step = (w[1].ix - w[0].ix).abs() + (w[1].iy - w[0].iy).abs();
        assert_eq!(step, 1, "non 4-connected step {:?} -> {:?}", w[0], w[1]);
    }
    assert_eq!(set, grid_oracle::segment_cells(from, to, g), "{from:?} -> {to:?}");
    let sampled = grid_oracle::dense_sample_cells(from, to, g);
    assert!(sampled.is_subset(&set), "{from:?} -> {to:?}");
}

#[test]
fn random_segments_match_oracle() {
    let g = geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let from = (rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5));
        let to = (rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5));
        check_path(from, to, &g);
    }
}

#[test]
fn lattice_segments_with_exact_corners_match_oracle() {
    // quarter-cell lattice on a dyadic grid: many exact edge and corner hits
    let g = GridGeometry {
        cell_size_m: 0.25,
        origin_x_m: 0.0,
        origin_y_m: 0.0,
        width_cells: 16,
        height_cells: 16,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let coord = |rng: &mut ChaCha8Rng| rng.random_range(0..64) as f64 * 0.0625;
    for _ in 0..5000 {
        let from = (coord(&mut rng), coord(&mut rng));
        let to = (coord(&mut rng), coord(&mut rng));
        check_path(from, to, &g);
    }
}

#[test]
fn thousand_readings_match_oracle_votes() {
    let g = geometry();
    let spec = GridSpec {
        geometry: g,
        margin: 3,
        counter_cap: 10,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut map = GridMap::new(spec).unwrap();
    let mut expected = vec![0i32; g.width_cells * g.height_cells];
    for k in 0..1000 {
        let pose = VehicleState::new(
            rng.random_range(-2.2..2.2),
            rng.random_range(-2.2..2.2),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let max = 1.5;
        let measured = if rng.random_bool(0.2) { max } else { rng.random_range(0.0..max) };
        let reading = RangeReading {
            mount: mounts()[k % 4],
            measured_m: measured,
            max_range_m: max,
            valid: rng.random_bool(0.95),
        };
        let want = grid_oracle::reading_votes(&g, &pose, &reading);
        let got: BTreeMap<CellIndex, i32> = map.reading_votes(&pose, &reading).into_iter().collect();
        assert_eq!(got, want, "reading {k}");
        map.integrate_reading(&pose, &reading);
        for (cell, v) in want {
            let idx = cell.iy as usize * g.width_cells + cell.ix as usize;
            expected[idx] = (expected[idx] + v).clamp(-10, 10);
        }
    }
    assert_eq!(map.counters(), expected.as_slice());
}

fn replay(seed: u64) -> GridMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = GridMap::new(GridSpec::default()).unwrap();
    for k in 0..500 {
        let pose = VehicleState::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let reading = RangeReading {
            mount: mounts()[k % 4],
            measured_m: rng.random_range(0.0..1.5),
            max_range_m: 1.5,
            valid: true,
        };
        map.integrate_reading(&pose, &reading);
    }
    map
}

#[test]
fn map_building_is_bitwise_deterministic() {
    let a = replay(9);
    let b = replay(9);
    assert_eq!(a.snapshot(), b.snapshot());
    assert!(a.occupied_cells().eq(b.occupied_cells()));
}

proptest! {
    #[test]
    fn votes_stay_near_the_beam(
        x in -2.0f64..2.0, y in -2.0f64..2.0, th in -3.14f64..3.14,
        measured in 0.0f64..1.5, which in 0usize..4,
    ) {
        let g = geometry();
        let map = GridMap::new(GridSpec { geometry: g, margin: 3, counter_cap: 10 }).unwrap();
        let pose = VehicleState::new(x, y, th);
        let reading = RangeReading { mount: mounts()[which], measured_m: measured, max_range_m: 1.5, valid: true };
        let ((sx, sy), h) = reading.mount.world_ray(&pose);
        let end = (sx + measured * h.cos(), sy + measured * h.sin());
        let a = g.cell_of(sx, sy);
        let b = g.cell_of(end.0, end.1);
        for (c, _) in map.reading_votes(&pose, &reading) {
            prop_assert!(c.ix >= a.ix.min(b.ix) - 1 && c.ix <= a.ix.max(b.ix) + 1);
            prop_assert!(c.iy >= a.iy.min(b.iy) - 1 && c.iy <= a.iy.max(b.iy) + 1);
        }
    }

    #[test]
    fn counters_respect_cap(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = GridMap::new(GridSpec { geometry: geometry(), margin: 3, counter_cap: 10 }).unwrap();
        let pose = VehicleState::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0));
        for _ in 0..30 {
            let r = RangeReading { mount: mounts()[0], measured_m: 0.8, max_range_m: 1.5, valid: true };
            map.integrate_reading(&pose, &r);
        }
        prop_assert!(map.counters().iter().all(|c| c.abs() <= 10));
    }
}
