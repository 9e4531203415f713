//! Unstable and stable sets of the tilted heteroclinic map, and refusal of
//! the heteroclinic experiment when its gates fail.

use rotdyn::branches::{self, BandSpec, BranchError, LambdaSide, TheoremCConfig, TheoremCOutcome};
use rotdyn::invsets::GraphCurve;
use rotdyn::mapzoo::{self, Levels, TiltedHet};

fn tilted() -> rotdyn::cover::LiftedAnnulusMap {
    mapzoo::tilted_heteroclinic(TiltedHet::default()).unwrap()
}

#[test]
fn conservative_sequence_is_nested() {
    let map = tilted();
    for (band, side) in [
        (BandSpec::horizontal(1.0, 0.0, 0).unwrap(), LambdaSide::Unstable),
        (BandSpec::horizontal(0.0, -1.0, 1).unwrap(), LambdaSide::Stable),
    ] {
        let grid = band.grid(64, 64).unwrap();
        let seq = branches::lambda_sequence(&map, &band, grid, 20, side).unwrap();
        for w in seq.regions.windows(2) {
            assert!(w[1].is_subset(&w[0]).unwrap());
        }
        let mut prev = band.region(grid);
        for n in [1, 5, 10, 20] {
            let e = branches::lambda_escape(&map, &band, grid, n, side).unwrap();
            assert!(e.is_subset(&prev).unwrap(), "{side:?} n = {n}");
            prev = e;
        }
    }
}

#[test]
fn unstable_set_crosses_its_band() {
    let map = tilted();
    let band = BandSpec::horizontal(1.0, 0.0, 0).unwrap();
    let grid = band.grid(128, 128).unwrap();
    let lim = branches::lambda_limit(&map, &band, grid, 30, LambdaSide::Unstable).unwrap();
    assert!(lim.meets_lower);
    assert_eq!(lim.escape_outside, 0);
    assert!(!lim.estimate.is_empty());
    let m0 = map.horizontal_bound();
    let (i, j) = grid.coords(lim.estimate.cells()[0]);
    let b = branches::branch_of(
        &lim.estimate,
        &band,
        LambdaSide::Unstable,
        grid.center(i, j),
        branches::default_tiles(m0),
        false,
    )
    .unwrap();
    assert!(b.cells > 0 && b.diameter() >= 0.0);
}

#[test]
fn h2_holds_for_the_tilted_map() {
    let map = tilted();
    let r = branches::h2_check(
        &map,
        &GraphCurve::horizontal(1.0),
        &GraphCurve::horizontal(-1.0),
        50,
        1024,
    );
    assert!(r.holds, "{:?}", r.first_failure);
}

#[test]
fn same_direction_bands_are_refused() {
    // both invariant circles rotate the same way, so no mixed orbit exists
    let levels = Levels::default();
    let omega = mapzoo::linear_omega(levels, 0.3, 0.2);
    let radial = mapzoo::heteroclinic_radial(levels, 0.1, 0.5).unwrap();
    let map = mapzoo::skew_product("same-direction", (levels.y2, levels.y0), omega, radial).unwrap();
    let curves = [1.0, 0.0, -1.0].map(GraphCurve::horizontal);
    let cfg = TheoremCConfig {
        nx: 64,
        ny: 64,
        ..TheoremCConfig::default()
    };
    match branches::theorem_c_experiment(&map, &curves, &cfg) {
        Err(BranchError::Refused(msg)) => assert!(!msg.is_empty()),
        Ok(TheoremCOutcome::Inconclusive(i)) => panic!("expected a refusal, got inconclusive at {}", i.stage),
        other => panic!("expected a refusal, got {other:?}"),
    }
}
