//! Maximal invariant sets between free curves.

use rotdyn::invsets::{connectedness_check, CurveClass, GraphCurve};
use rotdyn::mapzoo::{self, Alpha1D};

/// Rotation by 0.1 with `y ↦ y - sgn(y)(|y| - 0.2)²/2` outside `|y| ≤ 0.2`:
/// the strip `|y| ≤ 0.2` is invariant and attracts its neighbors.
fn contracting() -> rotdyn::cover::LiftedAnnulusMap {
    let omega = Alpha1D::constant(0.1);
    let radial = Alpha1D::new("contract", (-1.0, 1.0), |y: f64| {
        let d = (y.abs() - 0.2).max(0.0);
        y - y.signum() * 0.5 * d * d
    })
    .unwrap();
    mapzoo::skew_product("contracting", (-1.0, 1.0), omega, radial).unwrap()
}

#[test]
fn invariant_set_between_free_curves_is_connected() {
    let map = contracting();
    let r = connectedness_check(
        &map,
        &GraphCurve::horizontal(0.5),
        &GraphCurve::horizontal(-0.5),
        (64, 64),
        100,
    )
    .unwrap();
    assert_eq!(r.attracting.class, CurveClass::FreeAttracting);
    assert_eq!(r.repulsing.class, CurveClass::FreeRepulsing);
    assert!(r.theta_cells > 0);
    assert!(r.connected, "{} components", r.components);
}

#[test]
fn misclassified_curves_are_rejected() {
    let map = contracting();
    // the roles are swapped: y = -0.5 moves up
    assert!(connectedness_check(
        &map,
        &GraphCurve::horizontal(-0.5),
        &GraphCurve::horizontal(0.5),
        (32, 32),
        50,
    )
    .is_err());
}
