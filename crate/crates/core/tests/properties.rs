use htl_core::varexp::eta_convolve;
use htl_core::{
    calderon_reconstruct, luxemburg_norm, seq_norm, tl_norm, CoefficientSet, DyadicCube, ExponentField, Grid,
    HermiteExpansion, SamplingScheme, SchemeParams,
};
use proptest::prelude::*;

fn small_scheme() -> SamplingScheme {
    SamplingScheme::new(SchemeParams {
        degree_cap: 32,
        points_per_axis: 64,
        ..SchemeParams::default_for(1)
    })
    .unwrap()
}

fn grid() -> Grid {
    Grid::new(1, 8.0, 64).unwrap()
}

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 64)
}

fn expansion() -> impl Strategy<Value = HermiteExpansion> {
    prop::collection::vec(-1.0f64..1.0, 33).prop_map(|c| {
        let terms: Vec<(usize, f64)> = c.into_iter().enumerate().collect();
        HermiteExpansion::from_1d(32, &terms).unwrap()
    })
}

fn variable_p() -> impl Strategy<Value = ExponentField> {
    (1.2f64..3.0, -0.3f64..0.3).prop_map(|(a, b)| ExponentField::affine_clamped(a, b, 1.1, 4.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn luxemburg_is_homogeneous(f in samples(), c in 0.01f64..100.0, p in variable_p()) {
        let g = grid();
        let a = luxemburg_norm(&f, &g, &p).unwrap().norm;
        let scaled: Vec<f64> = f.iter().map(|v| -c * v).collect();
        let b = luxemburg_norm(&scaled, &g, &p).unwrap().norm;
        prop_assert!((b - c * a).abs() <= 1e-8 * c * a);
    }

    #[test]
    fn constant_exponent_matches_lebesgue_norm(f in samples(), p in 1.0f64..4.0) {
        let g = grid();
        let lux = luxemburg_norm(&f, &g, &ExponentField::constant(p).unwrap()).unwrap().norm;
        let direct = g.integrate(&f.iter().map(|v| v.abs().powf(p)).collect::<Vec<_>>()).powf(1.0 / p);
        prop_assert!((lux - direct).abs() <= 1e-8 * direct);
    }

    #[test]
    fn calderon_reconstruction_is_linear(f in expansion(), g in expansion(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let s = small_scheme();
        let mut combo = f.scaled(a);
        combo.axpy(b, &g).unwrap();
        let lhs = calderon_reconstruct(&combo, 2, &s).unwrap();
        let mut rhs = calderon_reconstruct(&f, 2, &s).unwrap().scaled(a);
        rhs.axpy(b, &calderon_reconstruct(&g, 2, &s).unwrap()).unwrap();
        let err = lhs.difference(&rhs).unwrap().l2_norm();
        prop_assert!(err <= 1e-12 * (1.0 + combo.l2_norm()));
    }

    #[test]
    fn sequence_norm_is_monotone(
        s in prop::collection::vec(-2.0f64..2.0, 16),
        bump in prop::collection::vec(0.0f64..1.0, 16),
        p in variable_p(),
    ) {
        let alpha = ExponentField::affine_clamped(0.5, 0.1, 0.0, 1.0).unwrap();
        let q = ExponentField::constant(2.0).unwrap();
        let mut small = CoefficientSet::new();
        let mut large = CoefficientSet::new();
        for (i, (v, d)) in s.iter().zip(&bump).enumerate() {
            let cube = DyadicCube::new((i % 3) as u32, vec![i as i64 - 8]).unwrap();
            small.insert(cube.clone(), small.get(&cube) + v);
            large.insert(cube.clone(), large.get(&cube) + v.signum() * (v.abs() + d));
        }
        let g = grid();
        let a = seq_norm(&small, &alpha, &p, &q, &g).unwrap();
        let b = seq_norm(&large, &alpha, &p, &q, &g).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-9));
    }

    #[test]
    fn eta_convolution_preserves_positivity(f in prop::collection::vec(0.0f64..3.0, 64), v in 0u32..4, r in 1.5f64..6.0) {
        let c = eta_convolve(v, r, &f, &grid()).unwrap();
        prop_assert!(c.values.iter().all(|x| *x >= 0.0));
        prop_assert!(c.outside_mass.iter().all(|x| *x >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tl_norm_is_homogeneous(f in expansion(), c in 0.1f64..10.0) {
        let s = small_scheme();
        let alpha = ExponentField::constant(0.5).unwrap();
        let p = ExponentField::affine_clamped(2.0, 0.2, 1.5, 3.0).unwrap();
        let q = ExponentField::constant(2.0).unwrap();
        let a = tl_norm(&f, &alpha, &p, &q, 6, &s).unwrap().total;
        let b = tl_norm(&f.scaled(-c), &alpha, &p, &q, 6, &s).unwrap().total;
        prop_assert!((b - c * a).abs() <= 1e-7 * c * a);
    }

    #[test]
    fn cube_location_is_consistent(x in -7.9f64..7.9, v in 0u32..6) {
        let k = DyadicCube::locate(v, &[x]);
        prop_assert!(DyadicCube::new(v, k).unwrap().contains(&[x]));
    }
}
