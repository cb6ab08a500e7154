use approx::assert_relative_eq;
use htl_core::hermite::{eval_hermite, hermite_fn, PI_M_QUARTER};
use htl_core::{eigenvalue, expand, synthesize, HermiteExpansion, MultiIndex, SamplingScheme, SchemeParams};

fn scheme() -> SamplingScheme {
    SamplingScheme::default_1d().unwrap()
}

fn h(m: usize) -> MultiIndex {
    MultiIndex::new(vec![m]).unwrap()
}

#[test]
fn ground_state_expands_to_unit_vector() {
    let s = scheme();
    let e = expand(|x| eval_hermite(&h(0), x).unwrap(), 1, 256, &s).unwrap();
    assert!((e.coeffs()[0] - 1.0).abs() < 1e-12);
    assert!(e.coeffs()[1..].iter().all(|c| c.abs() <= 1e-10));
}

#[test]
fn combination_of_two_states() {
    let s = scheme();
    let f = |x: &[f64]| 3.0 * eval_hermite(&h(2), x).unwrap() - eval_hermite(&h(5), x).unwrap();
    let e = expand(f, 1, 256, &s).unwrap();
    for (m, c) in e.coeffs().iter().enumerate() {
        let expect = match m {
            2 => 3.0,
            5 => -1.0,
            _ => 0.0,
        };
        assert!((c - expect).abs() <= 1e-10, "m={m} c={c}");
    }
}

#[test]
fn gaussian_leading_coefficient_matches_closed_form() {
    // <e^{-x^2}, h_0> = pi^{-1/4} int e^{-3x^2/2} dx = pi^{-1/4} sqrt(2 pi / 3)
    let e = expand(|x| (-x[0] * x[0]).exp(), 1, 256, &scheme()).unwrap();
    let exact = PI_M_QUARTER * (2.0 * std::f64::consts::PI / 3.0).sqrt();
    assert_relative_eq!(e.coeffs()[0], exact, max_relative = 1e-12);
    assert_relative_eq!(exact, 1.087_030_772_611_188_5, max_relative = 1e-15);
}

#[test]
fn point_values() {
    assert_relative_eq!(eval_hermite(&h(0), &[0.0]).unwrap(), PI_M_QUARTER, max_relative = 1e-15);
    let expect = 2f64.sqrt() * PI_M_QUARTER * (-0.5f64).exp();
    assert_relative_eq!(eval_hermite(&h(1), &[1.0]).unwrap(), expect, max_relative = 1e-14);
    assert_eq!(eigenvalue(&MultiIndex::new(vec![2, 3]).unwrap(), 2), 12.0);
    assert_eq!(eigenvalue(&h(0), 1), 1.0);
}

#[test]
fn third_state_round_trip_on_grid() {
    let s = scheme();
    let e = expand(|x| eval_hermite(&h(3), x).unwrap(), 1, 256, &s).unwrap();
    let vals = s.evaluator().synthesize(&e).unwrap();
    for (i, v) in vals.iter().enumerate() {
        let x = s.grid().point(i)[0];
        assert!((v - hermite_fn(3, x).unwrap()).abs() <= 1e-9, "x={x}");
    }
    let zero = HermiteExpansion::zeros(1, 16).unwrap();
    assert!(synthesize(&zero, &[vec![0.3], vec![-2.0]]).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn parseval_by_grid_quadrature() {
    let s = scheme();
    let mut e = expand(|x| (-(x[0] - 1.0).powi(2)).exp() * (1.0 + x[0]), 1, 256, &s).unwrap();
    e.coeffs_mut()[17] += 0.25;
    let vals = s.evaluator().synthesize(&e).unwrap();
    let quad = s.grid().integrate(&vals.iter().map(|v| v * v).collect::<Vec<_>>());
    assert_relative_eq!(quad, e.l2_norm().powi(2), max_relative = 1e-8);
}

#[test]
fn expand_inverts_synthesis_and_is_idempotent() {
    let s = scheme();
    let e = HermiteExpansion::from_1d(64, &[(0, 0.5), (7, -1.25), (31, 2.0), (64, 0.125)]).unwrap();
    let back = expand(|x| e.value_at(x).unwrap(), 1, 64, &s).unwrap();
    assert!(back.difference(&e).unwrap().coeffs().iter().all(|c| c.abs() <= 1e-10));
    let p1 = expand(|x| 1.0 / (1.0 + x[0] * x[0]), 1, 128, &s).unwrap();
    let p2 = expand(|x| p1.value_at(x).unwrap(), 1, 128, &s).unwrap();
    assert!(p2.difference(&p1).unwrap().coeffs().iter().all(|c| c.abs() <= 1e-10));
}

#[test]
fn recurrence_stays_bounded() {
    for m in (0..=512).step_by(7) {
        for i in 0..=400 {
            let t = -20.0 + 0.1 * i as f64;
            assert!(hermite_fn(m, t).unwrap().abs() <= 1.1, "m={m} t={t}");
        }
    }
}

#[test]
fn json_round_trip_is_exact() {
    let e = expand(|x| (-x[0] * x[0] / 3.0).exp() * x[0].sin(), 1, 40, &scheme()).unwrap();
    assert_eq!(HermiteExpansion::from_json(&e.to_json().unwrap()).unwrap(), e);
}

#[test]
fn two_dimensional_separable_expansion() {
    let s = SamplingScheme::new(SchemeParams {
        degree_cap: 24,
        points_per_axis: 64,
        ..SchemeParams::default_for(2)
    })
    .unwrap();
    let e = expand(|x| (-(x[0] * x[0] + x[1] * x[1])).exp(), 2, 24, &s).unwrap();
    let c1 = PI_M_QUARTER * (2.0 * std::f64::consts::PI / 3.0).sqrt();
    assert_relative_eq!(e.get(&MultiIndex::zero(2).unwrap()), c1 * c1, max_relative = 1e-12);
    assert!(e.get(&MultiIndex::new(vec![1, 0]).unwrap()).abs() < 1e-14);
}
