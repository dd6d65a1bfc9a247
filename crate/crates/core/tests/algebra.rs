mod common;

use common::{brute_compose, direct_part, random_cloud, random_kernel};
use magdecay::algebra::assembly::{
    assemble_dlambda_t, assemble_t_hat, assemble_t_hat_with, assembly_rho_grid, bil_bound, AssemblyRule,
    KernelPart,
};
use magdecay::algebra::{hat_compose, Atom, PointCloud, RhoGrid, RhoKernel, Space};
use magdecay::ellipsoid::{surface_integral, EllipsoidFrame};
use magdecay::norms::{vector_norms, NormReport};
use magdecay::resolvent::{resolvent_kernel, KernelValue, ResolventKernelKind};
use magdecay::{Bump, Error, Grid3D, PotentialSpec};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_abs(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

#[test]
fn composition_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = RhoGrid::uniform(10, 0.3);
    let (a, b, d) = (random_cloud(&mut rng, 3), random_cloud(&mut rng, 3), random_cloud(&mut rng, 3));
    let t = random_kernel(&mut rng, &grid, &a, &b, 10);
    let s = random_kernel(&mut rng, &grid, &b, &d, 10);
    let fast = t.compose(&s).unwrap();
    let slow = brute_compose(&t, &s);
    assert!(max_diff(&fast.values, &slow) <= 1e-12 * max_abs(&slow));
    assert!(fast.truncation_mass > 0.0);
}

#[test]
fn atoms_compose_by_shifting() {
    let grid = RhoGrid::uniform(8, 0.5);
    let cl = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], vec![2.0, 0.5]).unwrap();
    let k1 = vec![c(1.0), c(2.0), c(3.0), c(4.0)];
    let k2 = vec![c(0.5), c(-1.0), c(0.0), c(1.5)];
    let mut t = RhoKernel::zeros(grid.clone(), cl.clone(), cl.clone());
    t.atoms.push(Atom { rho: 0.5, order: 0, matrix: k1.clone() });
    let mut s = RhoKernel::zeros(grid, cl.clone(), cl.clone());
    s.atoms.push(Atom { rho: 1.0, order: 0, matrix: k2.clone() });
    let out = t.compose(&s).unwrap();
    assert_eq!(out.atoms.len(), 1);
    assert_eq!(out.atoms[0].rho, 1.5);
    let expected = hat_compose(&k1, &cl.weights, &k2, 2, 2);
    assert!(max_diff(&out.atoms[0].matrix, &expected) < 1e-15);
    assert!(out.values.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn atom_shifts_a_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = RhoGrid::uniform(12, 0.25);
    let cl = random_cloud(&mut rng, 2);
    let s = random_kernel(&mut rng, &grid, &cl, &cl, 6);
    let mut shift = RhoKernel::identity(grid, cl.clone());
    shift.atoms[0].rho = 0.75;
    let out = shift.compose(&s).unwrap();
    for k in 0..12 {
        let expect = if k >= 3 { s.slice(k - 3).to_vec() } else { vec![c(0.0); 4] };
        assert!(max_diff(out.slice(k), &expect) < 1e-14, "slice {k}");
    }
}

#[test]
fn norms_are_submultiplicative() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = RhoGrid::uniform(8, 0.2);
    for trial in 0..50 {
        let m = rng.gen_range(2..5);
        let (a, b, d) = (random_cloud(&mut rng, m), random_cloud(&mut rng, m), random_cloud(&mut rng, m));
        let mut t = random_kernel(&mut rng, &grid, &a, &b, 8);
        let mut s = random_kernel(&mut rng, &grid, &b, &d, 8);
        if trial % 2 == 0 {
            let mut mat = vec![c(0.0); m * m];
            mat.iter_mut().for_each(|v| *v = Complex64::new(rng.gen_range(-1.0..1.0), 0.3));
            t.atoms.push(Atom { rho: 0.4, order: 0, matrix: mat.clone() });
            s.atoms.push(Atom { rho: 0.0, order: 0, matrix: mat });
        }
        let ts = t.compose(&s).unwrap();
        let inf = Space::Linf;
        let chains = [(inf, inf), (Space::L1, inf), (Space::K, inf)];
        for (input, mid) in chains {
            let lhs = ts.u_norm(input, inf).unwrap();
            let rhs = t.u_norm(mid, inf).unwrap() * s.u_norm(input, mid).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-6), "trial {trial}, {input:?}: {lhs} > {rhs}");
        }
    }
}

#[test]
fn transform_exchanges_composition_and_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = RhoGrid::uniform(16, 0.1);
    let (a, b, d) = (random_cloud(&mut rng, 3), random_cloud(&mut rng, 2), random_cloud(&mut rng, 3));
    let mut t = random_kernel(&mut rng, &grid, &a, &b, 6);
    let s = random_kernel(&mut rng, &grid, &b, &d, 6);
    t.atoms.push(Atom { rho: 0.2, order: 0, matrix: vec![c(0.7); 6] });
    let ts = t.compose(&s).unwrap();
    for lam in [0.0, 0.9, 3.1] {
        let lhs = ts.hat(lam);
        let rhs = hat_compose(&t.hat(lam), &b.weights, &s.hat(lam), 3, 3);
        assert!(max_diff(&lhs, &rhs) <= 1e-8 * max_abs(&rhs), "lambda {lam}");
    }
}

#[test]
fn transform_of_atoms_and_zero() {
    let grid = RhoGrid::uniform(4, 0.5);
    let cl = PointCloud::single([0.0; 3]);
    let zero = RhoKernel::zeros(grid.clone(), cl.clone(), cl.clone());
    assert_eq!(zero.hat(1.3), vec![c(0.0)]);
    let mut k = zero.clone();
    k.atoms.push(Atom { rho: 0.7, order: 0, matrix: vec![c(2.0)] });
    let h = k.hat(1.3)[0];
    assert!((h - Complex64::new(0.0, 1.3 * 0.7).exp() * 2.0).norm() < 1e-15);
}

#[test]
fn mollified_sphere_measure_gives_the_free_resolvent() {
    // T(rho, y, x) = phi_eps(rho - |x - y|) / (4 pi |x - y|)
    let eps: f64 = 0.01;
    let h = 0.001;
    let grid = RhoGrid::uniform(4000, h);
    let ys = PointCloud::new(vec![[0.0; 3], [0.5, 0.2, -0.3]], vec![1.0, 1.0]).unwrap();
    let xs = PointCloud::new(vec![[1.0, 0.0, 0.0], [0.0, -2.0, 1.0], [1.5, 1.5, 0.5]], vec![1.0; 3]).unwrap();
    let mut k = RhoKernel::zeros(grid.clone(), ys.clone(), xs.clone());
    for (n, rho) in grid.nodes.iter().enumerate() {
        for (i, y) in ys.points.iter().enumerate() {
            for (j, x) in xs.points.iter().enumerate() {
                let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
                let g = (-(rho - d).powi(2) / (2.0 * eps * eps)).exp() / (eps * (2.0 * PI).sqrt());
                k.values[n * 6 + i * 3 + j] = c(g / (4.0 * PI * d));
            }
        }
    }
    for lam in [0.0, 1.0, 2.0] {
        let hat = k.hat(lam);
        for (i, y) in ys.points.iter().enumerate() {
            for (j, x) in xs.points.iter().enumerate() {
                let exact = match resolvent_kernel(ResolventKernelKind::R0, c(lam), *y, *x).unwrap() {
                    KernelValue::Scalar(v) => v,
                    _ => unreachable!(),
                };
                let err = (hat[i * 3 + j] - exact).norm() / exact.norm();
                assert!(err < 1e-3, "lambda {lam}: {err}");
            }
        }
    }
}

#[test]
fn identity_norms_follow_the_cell_size() {
    let h = 0.5;
    let cl = PointCloud::cube([0.0; 3], 1.0, 4);
    let id = RhoKernel::identity(RhoGrid::uniform(4, 0.1), cl);
    let sup = id.u_norm(Space::L1, Space::Linf).unwrap();
    assert!((sup * h * h * h - 1.0).abs() < 1e-12);
    assert!((id.u_norm(Space::Linf, Space::Linf).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn derivative_atoms_have_no_variation_norm() {
    let cl = PointCloud::single([0.0; 3]);
    let mut k = RhoKernel::zeros(RhoGrid::uniform(4, 0.5), cl.clone(), cl);
    k.atoms.push(Atom { rho: 0.5, order: 1, matrix: vec![c(1.0)] });
    assert!(matches!(k.u_norm(Space::Linf, Space::Linf), Err(Error::Precondition(_))));
}

#[test]
fn neumann_series_of_a_shifted_identity() {
    let grid = RhoGrid::uniform(10, 0.5);
    let cl = PointCloud::new(vec![[0.0; 3], [1.0, 1.0, 0.0]], vec![0.5, 2.0]).unwrap();
    let t_val = 0.6;
    let mut t = RhoKernel::identity(grid.clone(), cl.clone()).scale(c(t_val));
    t.atoms[0].rho = 1.0;
    let s = t.invert_neumann().unwrap();
    // sum_{n >= 1} (-t)^n delta(rho - n) diag(1/w), truncated at rho_max = 4.5
    let mut atoms = s.atoms.clone();
    atoms.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    assert_eq!(atoms.len(), 4);
    for (n, a) in atoms.iter().enumerate() {
        let coef = (-t_val).powi(n as i32 + 1);
        assert!((a.rho - (n + 1) as f64).abs() < 1e-12);
        assert!((a.matrix[0] - c(coef / 0.5)).norm() < 1e-12);
        assert!((a.matrix[3] - c(coef / 2.0)).norm() < 1e-12);
        assert_eq!(a.matrix[1], c(0.0));
    }
    assert!(max_abs(&s.values) == 0.0);
}

#[test]
fn neumann_inverse_composes_back_to_the_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = RhoGrid::uniform(12, 0.25);
    let cl = random_cloud(&mut rng, 3);
    let raw = random_kernel(&mut rng, &grid, &cl, &cl, 12);
    let t = raw.scale(c(0.5 / raw.u_norm(Space::Linf, Space::Linf).unwrap()));
    let s = t.invert_neumann().unwrap();
    // (I + T)(I + S) - I = T + S + T S
    let residual = t.add(&s).unwrap().add(&t.compose(&s).unwrap()).unwrap();
    assert!(residual.u_norm(Space::Linf, Space::Linf).unwrap() <= 1e-8);

    let zero = RhoKernel::zeros(grid, cl.clone(), cl);
    let s0 = zero.invert_neumann().unwrap();
    assert!(max_abs(&s0.values) == 0.0);
}

#[test]
fn neumann_rejects_large_kernels() {
    let cl = PointCloud::single([0.0; 3]);
    let t = RhoKernel::identity(RhoGrid::uniform(4, 0.5), cl).scale(c(1.5));
    assert!(matches!(t.invert_neumann(), Err(Error::NotContractive(_))));
}

#[test]
fn serialization_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid = RhoGrid::uniform(5, 0.3);
    let (a, b) = (random_cloud(&mut rng, 2), random_cloud(&mut rng, 3));
    let mut k = random_kernel(&mut rng, &grid, &a, &b, 5);
    k.atoms.push(Atom { rho: 0.6, order: 1, matrix: vec![Complex64::new(0.1, -0.2); 6] });
    k.truncation_mass = 0.25;
    let bytes = k.to_bytes();
    assert_eq!(RhoKernel::read_from(bytes.as_slice()).unwrap(), k);
    assert!(matches!(RhoKernel::read_from(&bytes[..bytes.len() - 3]), Err(Error::Serialization(_))));
}

#[test]
fn wiener_diagnostics_examples() {
    let grid = RhoGrid::uniform(400, 0.01);
    let cl = PointCloud::single([0.0; 3]);
    let zero = RhoKernel::zeros(grid.clone(), cl.clone(), cl.clone());
    let d = zero.wiener_diagnostics().unwrap();
    assert!(d.continuity.iter().chain(&d.tail).all(|(_, v)| *v == 0.0));

    // supported in rho < 1.5
    let mut bump = zero.clone();
    for (k, rho) in grid.nodes.iter().enumerate() {
        if *rho < 1.5 {
            bump.values[k] = c((PI * rho / 1.5).sin().powi(2));
        }
    }
    let d = bump.wiener_diagnostics().unwrap();
    for (r, v) in &d.tail {
        // the last nonzero node is 1.49
        assert_eq!(*v == 0.0, *r > 1.49 + 1e-12, "R = {r}");
    }

    let mut gauss = zero;
    for (k, rho) in grid.nodes.iter().enumerate() {
        gauss.values[k] = c((-(rho - 2.0).powi(2) / 0.1).exp());
    }
    let d = gauss.wiener_diagnostics().unwrap();
    let (m1, m2, m4) = (d.continuity[0].1, d.continuity[1].1, d.continuity[2].1);
    assert!((m2 / m1 - 2.0).abs() < 0.05 && (m4 / m2 - 2.0).abs() < 0.05);
}

fn corpus_field() -> PotentialSpec {
    let g = |c: [f64; 3], a: f64| vec![Bump::gaussian(c, a, 0.8)];
    PotentialSpec {
        scalar: g([0.1, 0.0, -0.1], 1.0),
        vector: [g([0.2, 0.1, 0.0], 1.0), g([-0.1, 0.2, 0.1], 0.7), g([0.0, -0.2, 0.1], -0.5)],
    }
}

const X: [f64; 3] = [0.3, -0.2, 0.1];
const Z: [f64; 3] = [-0.4, 0.5, 0.2];

#[test]
fn zero_fields_assemble_to_zero() {
    let frame = EllipsoidFrame::new(X, Z);
    let grid = assembly_rho_grid(&frame, 4.0, &AssemblyRule::coarse()).unwrap();
    let zero = PotentialSpec::zero();
    for part in [KernelPart::T, KernelPart::T11, KernelPart::TTilde2] {
        let k = assemble_t_hat(part, &zero, &corpus_field(), &frame, &grid).unwrap();
        assert!(max_abs(&k.values) == 0.0 && k.atoms.is_empty());
    }
}

#[test]
fn t4_with_a_ball_matches_surface_quadrature() {
    let v = PotentialSpec::scalar(vec![Bump::ball([0.1, 0.2, 0.0], 1.0, 1.2)]);
    let vs = PotentialSpec::scalar(vec![Bump::gaussian([0.0; 3], 2.0, 1.0)]);
    let frame = EllipsoidFrame::new(X, Z);
    let grid = RhoGrid::custom(vec![1.3, 1.8, 2.2, 2.5], vec![1.0; 4]).unwrap();
    let rule = AssemblyRule { n_phi: 128, nodes: 12, t_panels_per_unit: 8.0, ..AssemblyRule::default() };
    let k = assemble_t_hat_with(KernelPart::T4, &v, &vs, &frame, &grid, &rule).unwrap();
    let vz = vs.scalar_value(Z);
    for (n, &rho) in grid.nodes.iter().enumerate() {
        let direct = surface_integral(&frame, rho, |p| v.scalar_value(p.world) * vz / (p.r1 * p.r2)).unwrap()
            / (128.0 * PI * PI);
        let err = (k.values[n].re - direct).abs() / direct.abs();
        assert!(err < 5e-3, "rho {rho}: {} vs {direct}", k.values[n].re);
    }
    // a ball has no derivatives; parts that need them refuse it
    let mut a = PotentialSpec::zero();
    a.vector[0] = vec![Bump::ball([0.0; 3], 1.0, 1.0)];
    assert!(matches!(
        assemble_t_hat(KernelPart::TTilde, &a, &vs, &frame, &grid),
        Err(Error::UnsupportedDerivative(_))
    ));
}

fn assembled_vs_direct(part: KernelPart, lambdas: &[f64]) {
    let u = corpus_field();
    let frame = EllipsoidFrame::new(X, Z);
    let grid = assembly_rho_grid(&frame, 7.5, &AssemblyRule::default()).unwrap();
    let k = if part.is_dlambda() {
        assemble_dlambda_t(part, &u, &u, &frame, &grid).unwrap()
    } else {
        assemble_t_hat(part, &u, &u, &frame, &grid).unwrap()
    };
    for &lam in lambdas {
        let h = k.hat(lam)[0];
        let d = direct_part(part.name(), lam, &u, &u, X, Z, 4.5);
        assert!((h - d).norm() <= 1e-3 * d.norm(), "{} at {lam}: {h} vs {d}", part.name());
    }
}

#[test]
fn t_parts_transform_back_to_oscillatory_integrals() {
    for part in [KernelPart::T1, KernelPart::T3, KernelPart::T4, KernelPart::TTilde] {
        assembled_vs_direct(part, &[0.0, 1.0, 2.0]);
    }
}

#[test]
fn lambda_derivative_parts_transform_back() {
    for part in [KernelPart::T11, KernelPart::T12, KernelPart::TTilde1, KernelPart::TTilde2] {
        assembled_vs_direct(part, &[1.0]);
    }
}

#[test]
fn lambda_derivative_matches_finite_difference() {
    let u = corpus_field();
    let frame = EllipsoidFrame::new(X, Z);
    let grid = assembly_rho_grid(&frame, 7.5, &AssemblyRule::default()).unwrap();
    let tt = assemble_t_hat(KernelPart::TTilde, &u, &u, &frame, &grid).unwrap();
    let d1 = assemble_dlambda_t(KernelPart::TTilde1, &u, &u, &frame, &grid).unwrap();
    let d2 = assemble_dlambda_t(KernelPart::TTilde2, &u, &u, &frame, &grid).unwrap();
    let t1 = assemble_t_hat(KernelPart::T1, &u, &u, &frame, &grid).unwrap();
    let e1 = assemble_dlambda_t(KernelPart::T11, &u, &u, &frame, &grid).unwrap();
    let e2 = assemble_dlambda_t(KernelPart::T12, &u, &u, &frame, &grid).unwrap();
    let h = 1e-4;
    for lam in [0.5, 1.5] {
        for (base, a, b) in [(&tt, &d1, &d2), (&t1, &e1, &e2)] {
            let fd = (base.hat(lam + h)[0] - base.hat(lam - h)[0]) / (2.0 * h);
            let an = a.hat(lam)[0] + b.hat(lam)[0];
            assert!((fd - an).norm() <= 1e-3 * an.norm(), "lambda {lam}: {fd} vs {an}");
        }
    }
    assert!(matches!(
        assemble_dlambda_t(KernelPart::T1, &u, &u, &frame, &grid),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn total_kernel_is_the_sum_of_its_parts() {
    let u = corpus_field();
    let frame = EllipsoidFrame::new(X, Z);
    let grid = assembly_rho_grid(&frame, 5.0, &AssemblyRule::coarse()).unwrap();
    let rule = AssemblyRule::coarse();
    let parts: Vec<RhoKernel> = [KernelPart::T1, KernelPart::T2, KernelPart::T3, KernelPart::T4]
        .iter()
        .map(|&p| assemble_t_hat_with(p, &u, &u, &frame, &grid, &rule).unwrap())
        .collect();
    let total = assemble_t_hat_with(KernelPart::T, &u, &u, &frame, &grid, &rule).unwrap();
    for lam in [0.0, 1.7] {
        let sum: Complex64 = parts.iter().map(|k| k.hat(lam)[0]).sum();
        let t = total.hat(lam)[0];
        assert!((sum - t).norm() <= 1e-12 * t.norm());
    }
}

fn report(a: &PotentialSpec) -> NormReport {
    let mut r = NormReport::default();
    vector_norms(a, Grid3D::new(32, 12.0).unwrap(), &mut r).unwrap();
    r
}

#[test]
fn bilinear_bound_is_bilinear() {
    let a = PotentialSpec::vector([vec![Bump::gaussian([0.0; 3], 1.0, 1.0)], vec![], vec![]]);
    let base = bil_bound(&report(&a), &report(&a)).unwrap();
    assert!(base.is_finite() && base > 0.0);
    let scaled = bil_bound(&report(&a.scaled(2.0)), &report(&a.scaled(3.0))).unwrap();
    assert!((scaled / base - 6.0).abs() < 1e-9);
    assert_eq!(bil_bound(&report(&PotentialSpec::zero()), &report(&a)).unwrap(), 0.0);
    assert!(matches!(bil_bound(&NormReport::default(), &report(&a)), Err(Error::MissingNorm(_))));
}

#[test]
fn bilinear_aggregate_is_stable_under_cloud_doubling() {
    use magdecay::algebra::assembly::bilinear_aggregate;
    let u = corpus_field();
    let a = PotentialSpec::vector(u.vector.clone());
    let bil = bil_bound(&report(&a), &report(&a)).unwrap();
    let xs = PointCloud::new(vec![[0.1, 0.05, 0.0], [0.6, -0.3, 0.2]], vec![1.0, 1.0]).unwrap();
    let rule = AssemblyRule::coarse();
    let ratio = |m| bilinear_aggregate(&a, &xs, &PointCloud::cube([0.0; 3], 1.5, m), 6.0, &rule).unwrap() / bil;
    let (r4, r8) = (ratio(4), ratio(8));
    assert!(r4.is_finite() && r4 > 0.0);
    assert!((r8 / r4 - 1.0).abs() < 0.2, "{r4} vs {r8}");
}
