use std::f64::consts::FRAC_PI_4;

use proptest::prelude::*;

use hjgame_core::nash::{best_response, deviation_gap, GridParams, SweepMode};
use hjgame_core::phase::{capital_delta, eigen_modulus, linearization, DirectionMap};
use hjgame_core::solution::{build_conflicting_family, build_cooperative, Costs};
use hjgame_core::{
    classify_regime, classify_sector, direction_map, integrate, CostSpec, Direction, Player, RawCostSpec, Regime,
    Sector, StopConditions,
};

/// Slope pair strictly inside sector `i` (1-based).
fn in_sector(i: u8, u: f64, r: f64) -> [f64; 2] {
    let theta = (f64::from(i - 1) + u) * FRAC_PI_4;
    [r * theta.cos(), r * theta.sin()]
}

/// Regime expected for a one-breakpoint spec with slopes in sectors `(a, b)`.
fn expected_regime(a: u8, b: u8, k0: [f64; 2], k1: [f64; 2]) -> Regime {
    let pos = |s: u8| s == 1 || s == 2;
    let neg = |s: u8| s == 5 || s == 6;
    match (a, b) {
        _ if pos(a) && pos(b) => Regime::CooperativeUnique,
        _ if neg(a) && neg(b) => Regime::CooperativeUnique,
        (4, 3) | (7, 8) => Regime::ConflictingMany,
        (3, 4) | (8, 7) => Regime::ConflictingNone,
        _ if neg(a) && pos(b) && k0[1] / k0[0] != k1[1] / k1[0] => Regime::MixedMany,
        _ => Regime::UnsupportedCombination,
    }
}

fn sector_pair() -> impl Strategy<Value = (u8, u8, [f64; 2], [f64; 2])> {
    (1u8..=8, 1u8..=8, 0.02f64..0.98, 0.02f64..0.98, 0.1f64..10.0, 0.1f64..10.0)
        .prop_map(|(a, b, u0, u1, r0, r1)| (a, b, in_sector(a, u0, r0), in_sector(b, u1, r1)))
}

fn nonzero_pair() -> impl Strategy<Value = [f64; 2]> {
    (-10.0f64..10.0, -10.0f64..10.0).prop_filter("nonzero", |(a, b)| a.hypot(*b) > 1e-3).prop_map(|(a, b)| [a, b])
}

fn any_spec() -> impl Strategy<Value = CostSpec<f64>> {
    (prop::collection::vec(-20.0f64..20.0, 0..5), prop::collection::vec(nonzero_pair(), 6), -5.0f64..5.0, -5.0f64..5.0)
        .prop_filter_map("strictly increasing breakpoints", |(mut b, k, o1, o2)| {
            b.sort_by(f64::total_cmp);
            b.dedup_by(|x, y| (*x - *y).abs() < 1e-6);
            let n = b.len() + 1;
            CostSpec::new(b, k[..n].to_vec(), [o1, o2]).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn sectors_are_recovered((a, _b, k0, _k1) in sector_pair()) {
        prop_assert_eq!(classify_sector(k0), Sector::Open(a));
    }

    #[test]
    fn regime_table((a, b, k0, k1) in sector_pair()) {
        let spec = CostSpec::new(vec![0.0], vec![k0, k1], [0.0, 0.0]).unwrap();
        prop_assert_eq!(classify_regime(&spec).regime, expected_regime(a, b, k0, k1));
    }

    #[test]
    fn regime_is_invariant_under_scaling_translation_and_swap(
        (_a, _b, k0, k1) in sector_pair(), c in 0.01f64..100.0, shift in -50.0f64..50.0,
    ) {
        let base = CostSpec::new(vec![0.0], vec![k0, k1], [0.0, 0.0]).unwrap();
        let r = classify_regime(&base).regime;
        let scaled = CostSpec::new(vec![0.0], vec![[c * k0[0], c * k0[1]], [c * k1[0], c * k1[1]]], [1.0, -2.0]).unwrap();
        prop_assert_eq!(classify_regime(&scaled).regime, r);
        prop_assert_eq!(classify_regime(&base.translated(shift)).regime, r);
        let swapped = CostSpec::new(vec![0.0], vec![[k0[1], k0[0]], [k1[1], k1[0]]], [0.0, 0.0]).unwrap();
        prop_assert_eq!(classify_regime(&swapped).regime, r);
        // x -> -x negates and reverses the slopes
        prop_assert_eq!(classify_regime(&base.reflected()).regime, r);
    }

    #[test]
    fn costs_are_lipschitz(spec in any_spec(), x in -40.0f64..40.0, y in -40.0f64..40.0) {
        for pl in Player::BOTH {
            let l = spec.lipschitz(pl);
            let d = (spec.eval_cost(pl, x) - spec.eval_cost(pl, y)).abs();
            prop_assert!(d <= l * (x - y).abs() * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn config_round_trip_is_bit_exact(spec in any_spec()) {
        let text = spec.to_json();
        let back = RawCostSpec::<f64>::from_json(&text).unwrap();
        prop_assert_eq!(back, spec.to_raw());
    }

    #[test]
    fn delta_bounds(p1 in -1e3f64..1e3, p2 in -1e3f64..1e3) {
        let d = capital_delta([p1, p2]);
        let n = p1 * p1 + p2 * p2;
        prop_assert!(0.5 * n <= d + 1e-12 * n && d <= 2.0 * n + 1e-12 * n);
    }

    #[test]
    fn delta_bounds_f32(p1 in -1e3f32..1e3, p2 in -1e3f32..1e3) {
        let d = capital_delta([p1, p2]);
        let n = p1 * p1 + p2 * p2;
        prop_assert!(0.5 * n <= d + 1e-5 * n && d <= 2.0 * n + 1e-5 * n);
    }

    #[test]
    fn eigen_relations(k in nonzero_pair()) {
        let (h, d) = linearization(k).unwrap();
        let r = eigen_modulus(k);
        prop_assert_eq!(d.lambda_minus, -r);
        prop_assert_eq!(d.lambda_plus, r);
        // trace zero, determinant -r^2
        prop_assert!((h[0][0] + h[1][1]).abs() <= 1e-12 * r);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        prop_assert!((det + r * r).abs() <= 1e-10 * r * r);
        for (lam, v) in [(d.lambda_minus, d.v_minus), (d.lambda_plus, d.v_plus)] {
            let hv = [h[0][0] * v[0] + h[0][1] * v[1], h[1][0] * v[0] + h[1][1] * v[1]];
            let res = (hv[0] - lam * v[0]).hypot(hv[1] - lam * v[1]);
            prop_assert!(res <= 1e-10 * r * v[0].hypot(v[1]));
        }
    }

    #[test]
    fn eigen_relations_f32(k1 in 0.1f32..10.0, k2 in -10.0f32..10.0) {
        let (h, d) = linearization([k1, k2]).unwrap();
        let v = d.v_plus;
        let hv = [h[0][0] * v[0] + h[0][1] * v[1], h[1][0] * v[0] + h[1][1] * v[1]];
        let res = (hv[0] - d.lambda_plus * v[0]).hypot(hv[1] - d.lambda_plus * v[1]);
        prop_assert!(res <= 1e-4 * d.lambda_plus * v[0].hypot(v[1]));
    }

    #[test]
    fn direction_maps_are_increasing(e1 in -4.0f64..4.0, e2 in -4.0f64..4.0) {
        prop_assume!(e1 != e2);
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        for map in DirectionMap::ALL {
            let (a, b) = if map.positive_domain() {
                (10f64.powf(lo), 10f64.powf(hi))
            } else {
                (-10f64.powf(hi), -10f64.powf(lo))
            };
            prop_assert!(direction_map(map, a).unwrap() < direction_map(map, b).unwrap());
        }
    }

    #[test]
    fn direction_maps_reject_wrong_sign(alpha in 1e-6f64..1e6) {
        prop_assert!(direction_map(DirectionMap::GMinus, -alpha).is_err());
        prop_assert!(direction_map(DirectionMap::LowerGPlus, alpha).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn x_increases_along_orbits(k in nonzero_pair(), p1 in -2.0f64..2.0, p2 in -2.0f64..2.0) {
        prop_assume!(p1.hypot(p2) > 1e-2);
        let orbit = integrate([p1, p2], k, Direction::Forward, &StopConditions::default().with_span(5.0)).unwrap();
        for w in orbit.samples.windows(2) {
            prop_assert!(w[1].x > w[0].x);
            prop_assert!(w[1].s > w[0].s);
        }
    }

    #[test]
    fn cooperative_gluing_is_admissible(
        u0 in 0.05f64..1.95, u1 in 0.05f64..1.95, r0 in 0.3f64..3.0, r1 in 0.3f64..3.0, b in -2.0f64..2.0,
    ) {
        // both pairs in A1 u A2, away from the diagonal
        prop_assume!((u0 - 1.0).abs() > 0.05 && (u1 - 1.0).abs() > 0.05);
        let spec = CostSpec::new(vec![b], vec![in_sector(1, u0, r0), in_sector(1, u1, r1)], [0.0, 0.0]).unwrap();
        prop_assert_eq!(classify_regime(&spec).regime, Regime::CooperativeUnique);
        let sol = build_cooperative(&spec).unwrap();
        prop_assert!(sol.admissibility.is_admissible(), "{:?}", sol.admissibility.verdict);
        prop_assert!(sol.jump_points.is_empty());
        // decreasing costs are handled by reflection
        let sol = build_cooperative(&spec.reflected()).unwrap();
        prop_assert!(sol.admissibility.is_admissible());
    }

    #[test]
    fn family_members_are_distinct(r in 0.01f64..0.09, dr in 0.002f64..0.01) {
        let spec = CostSpec::new(vec![0.0], vec![[-2.0, 1.0], [-1.0, 2.0]], [0.0, 0.0]).unwrap();
        let a = build_conflicting_family(&spec, [-r, r]).unwrap();
        let b = build_conflicting_family(&spec, [-(r + dr), r + dr]).unwrap();
        prop_assert!(a.admissibility.is_admissible() && b.admissibility.is_admissible());
        let (pa, pb) = (a.p_at(0.0).unwrap(), b.p_at(0.0).unwrap());
        prop_assert!((pa[0] - pb[0]).abs() > 1e-3);
        prop_assert_eq!(a.p_at(-200.0), Some([-2.0, 1.0]));
        prop_assert_eq!(b.p_at(200.0), Some([-1.0, 2.0]));
    }

    #[test]
    fn jacobi_sweeps_contract(k1 in 0.2f64..2.0, k2 in 0.2f64..2.0, beta in -2.0f64..2.0, dx in 0.02f64..0.1) {
        let costs = Costs::Piecewise(CostSpec::linear([k1, k2]).unwrap().to_raw());
        let grid = GridParams {
            sweep: SweepMode::Jacobi,
            refine: false,
            n_controls: 21,
            max_sweeps: 100_000,
            tol: 1e-12,
            ..GridParams::window(-1.0, 1.0, dx)
        };
        let t = best_response(&costs, |_| beta, Player::One, &grid).unwrap();
        for w in t.changes.windows(2) {
            if w[0] > 1e-13 {
                prop_assert!(w[1] <= (1.0 - 0.9 * t.tau) * w[0] + 1e-15, "{:?} tau {}", w, t.tau);
            }
        }
    }

    #[test]
    fn candidate_never_beats_best_response(k1 in 0.5f64..2.0, k2 in 0.5f64..2.0, y in -1.0f64..1.0) {
        prop_assume!((k1 - k2).abs() > 0.05);
        let spec = CostSpec::linear([k1, k2]).unwrap();
        let sol = build_cooperative(&spec).unwrap();
        let grid = GridParams { control_bound: Some(2.0 * k1.max(k2) + 1.0), ..GridParams::window(-4.0, 4.0, 1e-2) };
        for r in deviation_gap(&sol, y, &grid).unwrap() {
            prop_assert!(r.gap >= -r.tolerance, "{:?}", r);
            prop_assert!(r.gap.abs() <= r.tolerance, "{:?}", r);
        }
    }
}
