//! Invariants of the lift, the estimate algebra and grid regions.

use proptest::prelude::*;
use rotdyn::cover::{displacement, frac, CoverPoint, TOL_LIFT};
use rotdyn::invsets::{Connectivity, Grid, GridRegion};
use rotdyn::mapzoo::MapSpec;
use rotdyn::rotset::{merge_intervals, ExtendedInterval, RotationSetEstimate};

const NAMES: [&str; 12] = [
    "identity",
    "rotation",
    "twist",
    "drift",
    "half",
    "quarter-half",
    "sin-profile",
    "lorentzian",
    "twice-reeb",
    "double-reeb",
    "skew-het",
    "skew-het-tilted",
];

fn interval() -> impl Strategy<Value = ExtendedInterval> {
    (-3.0..3.0f64, 0.0..1.0f64).prop_map(|(lo, w)| ExtendedInterval::new(lo, lo + w))
}

fn estimate() -> impl Strategy<Value = RotationSetEstimate> {
    prop::collection::vec(interval(), 1..6).prop_map(|v| RotationSetEstimate::from_intervals(v, 0.01))
}

/// A point inside the certified band of `map`, clipped to `|y| ≤ 3`.
fn in_band(map: &rotdyn::cover::LiftedAnnulusMap, x: f64, t: f64) -> CoverPoint {
    let (lo, hi) = map.band();
    let (lo, hi) = (lo.max(-3.0), hi.min(3.0));
    CoverPoint::new(x, lo + (hi - lo) * t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn frac_is_in_unit_interval(x in -1e6..1e6f64) {
        let f = frac(x);
        prop_assert!((0.0..1.0).contains(&f));
        prop_assert!(((x - f) - (x - f).round()).abs() < 1e-6);
    }

    #[test]
    fn lifts_commute_with_deck_translations(
        name in prop::sample::select(NAMES.to_vec()),
        x in -2.0..2.0f64,
        t in 0.01..0.99f64,
        k in -5i64..5,
    ) {
        let map = MapSpec::by_name(name).unwrap().build().unwrap();
        let p = in_band(&map, x, t);
        let a = map.forward(p.translate(k));
        let b = map.forward(p).translate(k);
        prop_assert!((a.x - b.x).abs() <= 100.0 * TOL_LIFT, "{name}: {a:?} vs {b:?}");
        prop_assert!((a.y - b.y).abs() <= 100.0 * TOL_LIFT);
        let back = map.inverse(map.forward(p));
        prop_assert!((back.x - p.x).abs() <= 1e-7 && (back.y - p.y).abs() <= 1e-7, "{name}: {back:?} vs {p:?}");
    }

    #[test]
    fn displacement_is_a_cocycle(
        name in prop::sample::select(NAMES.to_vec()),
        x in -1.0..1.0f64,
        t in 0.1..0.9f64,
        a in 0i64..20,
        b in 0i64..20,
    ) {
        let map = MapSpec::by_name(name).unwrap().build().unwrap();
        let p = in_band(&map, x, t);
        let Ok(first) = displacement(&map, p, a) else { return Ok(()) };
        let Ok(second) = displacement(&map, first.end, b) else { return Ok(()) };
        let Ok(whole) = displacement(&map, p, a + b) else { return Ok(()) };
        let err = (whole.displacement - first.displacement - second.displacement).abs();
        prop_assert!(err <= 1e-9 * (1.0 + whole.displacement.abs()), "{name}: {err}");
    }

    #[test]
    fn merged_intervals_are_sorted_and_separated(v in prop::collection::vec(interval(), 0..12), eps in 0.0..0.2f64) {
        let m = merge_intervals(v.clone(), eps);
        for w in m.windows(2) {
            prop_assert!(w[1].lo() - w[0].hi() > eps);
        }
        for iv in &v {
            prop_assert!(m.iter().any(|o| o.lo() <= iv.lo() && iv.hi() <= o.hi()));
        }
    }

    #[test]
    fn hausdorff_is_a_metric(a in estimate(), b in estimate(), c in estimate()) {
        prop_assert_eq!(a.hausdorff(&a), 0.0);
        prop_assert!((a.hausdorff(&b) - b.hausdorff(&a)).abs() < 1e-12);
        prop_assert!(a.hausdorff(&c) <= a.hausdorff(&b) + b.hausdorff(&c) + 1e-12);
    }

    #[test]
    fn union_and_intersection_bracket(a in estimate(), b in estimate(), v in -3.0..4.0f64) {
        let u = a.union(&b);
        let i = a.intersect(&b);
        if a.contains(v) || b.contains(v) {
            prop_assert!(u.contains(v));
        }
        if i.contains(v) {
            prop_assert!(a.contains(v) && b.contains(v));
        }
        prop_assert!(u.gap_measure() >= 0.0);
    }

    #[test]
    fn affine_maps_hull_endpoints(a in estimate(), q in 1i64..4, p in -3i64..3) {
        let h = a.hull().unwrap();
        let t = a.affine(q as f64, p as f64).hull().unwrap();
        prop_assert!((t.lo() - (q as f64 * h.lo() + p as f64)).abs() < 1e-9);
        prop_assert!((t.hi() - (q as f64 * h.hi() + p as f64)).abs() < 1e-9);
    }

    #[test]
    fn region_records_round_trip(bits in prop::collection::vec(any::<bool>(), 96)) {
        let g = Grid::band(-1.0, 1.0, 12, 8).unwrap();
        let mut r = GridRegion::empty(g);
        for (idx, &b) in bits.iter().enumerate() {
            r.set_index(idx, b);
        }
        let back = GridRegion::from_record(&r.to_record()).unwrap();
        prop_assert_eq!(back.cells(), r.cells());
        prop_assert_eq!(r.complement().complement().cells(), r.cells());
        prop_assert_eq!(r.count() + r.complement().count(), g.len());
        prop_assert!(r.is_subset(&r.dilate(1)).unwrap());
        let total: usize = r.components(Connectivity::Four).iter().map(|c| c.cells).sum();
        prop_assert_eq!(total, r.count());
        prop_assert!(r.components(Connectivity::Eight).len() <= r.components(Connectivity::Four).len());
    }
}
