//! Estimators against closed-form answers.

use rotdyn::cover::{rho_n, AnnulusPoint};
use rotdyn::invsets::{Grid, GridRegion};
use rotdyn::mapzoo::{self, Alpha1D};
use rotdyn::rotset::{self, EstimatorOptions, ExtendedInterval, RotationSetEstimate, SamplingPlan};

fn opts() -> EstimatorOptions {
    EstimatorOptions::default()
}

#[test]
fn rigid_rotation_has_constant_rho_n() {
    let map = mapzoo::rigid_rotation(1.0 / 3.0);
    for (t, y) in [(0.0, 0.0), (0.7, -3.0), (0.2, 12.5)] {
        let r = rho_n(&map, AnnulusPoint::new(t, y), 300).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-12, "{r}");
    }
}

#[test]
fn twist_rotation_set_is_the_set_of_row_heights() {
    // (x, y) ↦ (x + y, y): every orbit returns and ρ_n(x, y) = y exactly
    let map = mapzoo::twist(2.0);
    let g = Grid::band(-1.0, 1.0, 4, 16).unwrap();
    let k = GridRegion::full(g);
    let est = rotset::rho_k(&map, &k, 1, 50, &SamplingPlan::default(), &opts()).unwrap();
    let rows: Vec<ExtendedInterval> = (0..16)
        .map(|j| ExtendedInterval::point(-1.0 + (j as f64 + 0.5) / 8.0))
        .collect();
    let oracle = RotationSetEstimate::from_intervals(rows, opts().merge_eps);
    assert!(est.estimate.hausdorff(&oracle) < 1e-12, "{:?}", est.estimate.intervals);
    assert!(est.tail.hausdorff(&oracle) < 1e-12);
}

#[test]
fn fibred_rotation_rho_n_follows_the_profile() {
    let alpha = Alpha1D::new("cubic", (-2.0, 2.0), |y: f64| 0.1 * y * y * y).unwrap();
    let map = mapzoo::fibred_rotation(alpha);
    for y in [-1.5, -0.2, 0.0, 0.9] {
        let r = rho_n(&map, AnnulusPoint::new(0.3, y), 97).unwrap();
        assert!((r - 0.1 * y * y * y).abs() < 1e-12, "y = {y}: {r}");
    }
}

#[test]
fn measured_average_of_a_twist_band_is_its_height_range() {
    let map = mapzoo::twist(2.0);
    let g = Grid::band_centered(-0.5, 0.5, 4, 11).unwrap();
    let k = GridRegion::full(g);
    let m = rotset::rho_measured(&map, &k, 10, 200, &SamplingPlan::default(), &opts()).unwrap();
    assert!(
        (m.hull.lo() + 0.5).abs() < 1e-9 && (m.hull.hi() - 0.5).abs() < 1e-9,
        "{:?}",
        m.hull
    );
    assert_eq!(m.survivors, m.seeds);
}

#[test]
fn drift_leaves_no_returning_orbits() {
    let map = mapzoo::vertical_drift(-0.5);
    let g = Grid::band(-1.0, 1.0, 8, 8).unwrap();
    let e = rotset::rho_k(&map, &GridRegion::full(g), 10, 20, &SamplingPlan::default(), &opts()).unwrap_err();
    assert!(matches!(e, rotset::RotError::NoReturningOrbits), "{e:?}");
}
