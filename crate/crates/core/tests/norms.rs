use magdecay::grid::{build_scalar_field, derivative_magnitude, Source};
use magdecay::norms::{
    membership_report, norm_chain_check, space_norm, space_norm_with_stride, NormKind,
};
use magdecay::{Bump, Grid3D, PotentialSpec, ScalarField};
use std::f64::consts::PI;

fn ball_field(n: usize, l: f64) -> ScalarField {
    let g = Grid3D::new(n, l).unwrap();
    let spec = PotentialSpec::scalar(vec![Bump::ball([0.0; 3], 1.0, 1.0)]);
    build_scalar_field(&spec, g, [0, 0, 0]).unwrap()
}

fn gaussian_spec(width: f64) -> PotentialSpec {
    PotentialSpec::scalar(vec![Bump::gaussian([0.1, -0.05, 0.0], 1.0, width)])
}

#[test]
fn ball_indicator_kato_norms() {
    let f = ball_field(64, 2.5);
    let k = space_norm(&f, NormKind::K).unwrap();
    let k2 = space_norm(&f, NormKind::K2).unwrap();
    assert!((k / (2.0 * PI) - 1.0).abs() < 0.01, "K = {k}");
    assert!((k2 / (4.0 * PI) - 1.0).abs() < 0.01, "K2 = {k2}");
}

#[test]
fn logarithmic_weights_dominate() {
    let g = Grid3D::new(32, 8.0).unwrap();
    for f in [
        build_scalar_field(&gaussian_spec(0.4), g, [0, 0, 0]).unwrap(),
        build_scalar_field(&gaussian_spec(1.5), g, [0, 0, 0]).unwrap(),
    ] {
        let k = space_norm(&f, NormKind::K).unwrap();
        let kl = space_norm(&f, NormKind::KLog).unwrap();
        let k2 = space_norm(&f, NormKind::K2).unwrap();
        let k2l = space_norm(&f, NormKind::K2Log).unwrap();
        let k2l2 = space_norm(&f, NormKind::K2Log2).unwrap();
        assert!(kl >= k && k2l2 >= k2l && k2l >= k2, "{k} {kl} {k2} {k2l} {k2l2}");
    }
}

#[test]
fn dilation_scaling() {
    let spec = gaussian_spec(0.8);
    let base = Grid3D::new(32, 8.0).unwrap();
    let f = build_scalar_field(&spec, base, [0, 0, 0]).unwrap();
    let k = space_norm(&f, NormKind::K).unwrap();
    let k2 = space_norm(&f, NormKind::K2).unwrap();
    let l1 = space_norm(&f, NormKind::L1).unwrap();
    for s in [0.5, 2.0, 4.0] {
        let g = Grid3D::new(32, 8.0 * s).unwrap();
        let fs = build_scalar_field(&spec.dilated(s), g, [0, 0, 0]).unwrap();
        let ks = space_norm(&fs, NormKind::K).unwrap();
        let k2s = space_norm(&fs, NormKind::K2).unwrap();
        let l1s = space_norm(&fs, NormKind::L1).unwrap();
        assert!((ks / (s * s * k) - 1.0).abs() < 0.01);
        assert!((k2s / (s * k2) - 1.0).abs() < 0.01);
        assert!((l1s / (s * s * s * l1) - 1.0).abs() < 0.01);
    }
}

#[test]
fn sup_search_is_stable_under_candidate_doubling() {
    let g = Grid3D::new(32, 8.0).unwrap();
    let spec = PotentialSpec::scalar(vec![
        Bump::gaussian([0.7, 0.0, 0.2], 1.0, 0.6),
        Bump::gaussian([-0.9, 0.4, 0.0], 0.6, 0.9),
    ]);
    let f = build_scalar_field(&spec, g, [0, 0, 0]).unwrap();
    for kind in [NormKind::K, NormKind::KLog, NormKind::K2, NormKind::K2Log, NormKind::K2Log2] {
        let a = space_norm_with_stride(&f, kind, 4).unwrap();
        let b = space_norm_with_stride(&f, kind, 2).unwrap();
        assert!((a / b - 1.0).abs() < 0.005, "{kind:?}: {a} vs {b}");
    }
}

#[test]
fn embedding_smoke_test() {
    // gaussian fields lie in every Lorentz space, hence in K and K_LOG
    let g = Grid3D::new(32, 8.0).unwrap();
    for w in [0.5, 1.0, 1.5] {
        let f = build_scalar_field(&gaussian_spec(w), g, [0, 0, 0]).unwrap();
        let l32 = space_norm(&f, NormKind::L32_1).unwrap();
        let l3 = space_norm(&f, NormKind::L3_1).unwrap();
        assert!(l32.is_finite() && l3.is_finite());
        assert!(space_norm(&f, NormKind::K).unwrap().is_finite());
        assert!(space_norm(&f, NormKind::KLog).unwrap().is_finite());
    }
}

#[test]
fn norm_chain_is_monotone() {
    let g = Grid3D::new(32, 10.0).unwrap();
    let corpus = [
        PotentialSpec::vector([vec![Bump::gaussian([0.0; 3], 1.0, 1.0)], vec![], vec![]]),
        PotentialSpec::vector([
            vec![Bump::gaussian([0.3, 0.0, 0.0], 0.5, 0.8)],
            vec![Bump::compact([0.0, 0.0, 0.0], 0.7, 1.8)],
            vec![],
        ]),
        PotentialSpec::vector([vec![], vec![], vec![Bump::gaussian([0.0, 0.5, 0.0], -1.0, 1.3)]]),
    ];
    for a in &corpus {
        let (v1, v2, v3) = norm_chain_check(a, g).unwrap();
        assert!(v1 <= 1.05 * v2 && v2 <= 1.05 * v3, "{v1} {v2} {v3}");
    }
    assert_eq!(norm_chain_check(&PotentialSpec::zero(), g).unwrap(), (0.0, 0.0, 0.0));
}

#[test]
fn gaussian_potentials_are_members() {
    let g = Grid3D::new(32, 10.0).unwrap();
    let a = PotentialSpec::vector([
        vec![Bump::gaussian([0.0; 3], 0.5, 1.0)],
        vec![Bump::gaussian([0.2, 0.0, 0.0], 0.3, 1.2)],
        vec![],
    ]);
    let v = gaussian_spec(1.0);
    let r = membership_report(&a, &v, g).unwrap();
    assert!(r.member_x && r.member_y);
    assert!(r.values.values().all(|v| v.is_finite() && *v > 0.0));
    let zero = membership_report(&PotentialSpec::zero(), &PotentialSpec::zero(), g).unwrap();
    assert!(zero.member_x && zero.member_y);
    assert!(zero.values.values().all(|v| *v == 0.0));
}

#[test]
fn spectral_w21_matches_analytic_hessian() {
    let g = Grid3D::new(32, 10.0).unwrap();
    let spec = gaussian_spec(1.0);
    let f = build_scalar_field(&spec, g, [0, 0, 0]).unwrap();
    let hess = derivative_magnitude(&spec, g, Source::Scalar, 2).unwrap();
    let a = space_norm(&f, NormKind::W21Dot).unwrap();
    let b = space_norm(&hess, NormKind::L1).unwrap();
    assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
}
