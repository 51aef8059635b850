use proptest::prelude::*;

use treerecon::channel::Spectrum;
use treerecon::dynsys::{
    coefficients, escape_threshold, fixed_points, iterate_classify, jacobian_origin, step, Classification, DynState,
    IterationLimits,
};
use treerecon::formulas::{map_coefficients, xz_recursion, MapCoefficients};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn coordinate_forms_agree(
        q in 2usize..=8,
        d in 1usize..=6,
        l1 in -1.0f64..1.0,
        l2 in -1.0f64..1.0,
        x in 0.0f64..0.5,
        z in -0.2f64..0.0,
    ) {
        let spectrum = Spectrum::new(l1, l2);
        let (nx, nz) = xz_recursion(x, z, q, d, &spectrum);
        let next = step(DynState::from_moments(x, z), &map_coefficients(q, d, &spectrum));
        prop_assert!((next.xc - (nx + nz)).abs() < 1e-12);
        prop_assert!((next.zc + nz).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn linear_when_quadratics_vanish(l1 in -1.0f64..1.0, l2 in -1.0f64..1.0, xc in -1.0f64..1.0, zc in -1.0f64..1.0) {
        let c = MapCoefficients {
            quad_xx: 0.0,
            quad_xz: 0.0,
            quad_zz_source: 0.0,
            quad_zz_decay: 0.0,
            ..coefficients(4, 3, l1, l2)
        };
        let s = step(DynState::new(xc, zc), &c);
        prop_assert_eq!(s, DynState::new(c.linear_x * xc, c.linear_z * zc));
        prop_assert_eq!(step(DynState::default(), &coefficients(4, 3, l1, l2)), DynState::default());
    }

    #[test]
    fn origin_multipliers(q in 2usize..=8, d in 1usize..=6, l1 in -1.0f64..1.0, l2 in -1.0f64..1.0) {
        let c = coefficients(q, d, l1, l2);
        let (a, b) = jacobian_origin(&c);
        prop_assert!((a - d as f64 * l1 * l1).abs() < 1e-15);
        prop_assert!((b - d as f64 * l2 * l2).abs() < 1e-15);
        let origin = &fixed_points(&c).points[0];
        prop_assert!(origin.is_origin());
        prop_assert_eq!(origin.multipliers[0], a.max(b));
    }

    #[test]
    fn one_dimensional_slice_has_one_unstable_point(linear in 0.01f64..0.99, quad in 0.01f64..10.0) {
        let c = MapCoefficients {
            linear_x: linear,
            linear_z: 0.0,
            quad_xx: quad,
            quad_xz: 0.0,
            quad_zz_source: 0.0,
            quad_zz_decay: 0.0,
        };
        let report = fixed_points(&c);
        let star = (1.0 - linear) / quad;
        let nontrivial: Vec<_> = report.points.iter().filter(|p| !p.is_origin()).collect();
        prop_assert_eq!(nontrivial.len(), 1);
        prop_assert!((nontrivial[0].state.xc - star).abs() < 1e-9 * star.max(1.0));
        prop_assert!(nontrivial[0].state.zc.abs() < 1e-12);
        prop_assert!((nontrivial[0].multipliers[0] - (2.0 - linear)).abs() < 1e-6);
        prop_assert!(nontrivial[0].is_unstable());
    }
}

#[test]
fn threshold_is_nonincreasing_in_the_start() {
    let limits = IterationLimits::default();
    let mut previous = f64::INFINITY;
    for x_start in [0.2, 0.35, 0.5, 0.65, 0.8] {
        let t = escape_threshold(4, 2, 0.1, x_start, (0.3, std::f64::consts::FRAC_1_SQRT_2), 1e-4, &limits).unwrap();
        assert!(t.lambda1_star <= previous + 1e-4, "x_start {x_start}: {} > {previous}", t.lambda1_star);
        previous = t.lambda1_star;
    }
}

#[test]
fn threshold_matches_the_slice_quadratic() {
    // at Z = 0 the slice point equals x_start when
    // (1 - 2t) = (8/3)·t²·x_start with t = λ1²
    let x_start = 0.5;
    let a: f64 = 8.0 / 3.0 * x_start;
    let t = (-2.0 + (4.0 + 4.0 * a).sqrt()) / (2.0 * a);
    let slice = t.sqrt();
    let found =
        escape_threshold(4, 2, 0.1, x_start, (0.4, std::f64::consts::FRAC_1_SQRT_2), 1e-4, &IterationLimits::default())
            .unwrap();
    assert!((found.lambda1_star - slice).abs() < 1e-3, "{} vs {slice}", found.lambda1_star);
    assert!((found.d_lambda1_star_sq - 0.791).abs() < 3e-3);
}

#[test]
fn no_escape_for_q_below_four() {
    // quad_xx <= 0 for q <= 3: starts well inside the domain fall back
    for q in [2, 3] {
        let c = coefficients(q, 2, 0.7, 0.1);
        assert!(c.quad_xx <= 0.0);
        let t = iterate_classify(DynState::new(0.5, 0.0), &c, &IterationLimits::default()).unwrap();
        assert_ne!(t.classification, Classification::Escape);
    }
}
