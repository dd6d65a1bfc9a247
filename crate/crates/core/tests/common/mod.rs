//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use magdecay::algebra::{PointCloud, RhoGrid, RhoKernel};
use magdecay::potential::Vec3;
use magdecay::quad::gauss_legendre;
use magdecay::resolvent::{resolvent_kernel, KernelValue, ResolventKernelKind};
use magdecay::PotentialSpec;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// `int f(y) dy` for `f` singular at `x` and `z` like `|y - x|^-2`, `|y - z|^-2`.
///
/// A partition of unity `w_x = r_z^6 / (r_x^6 + r_z^6)` splits the integrand;
/// each half is integrated in spherical coordinates about its singular point
/// out to radius `reach`.
pub fn oscillatory_3d(x: Vec3, z: Vec3, reach: f64, f: impl Fn(Vec3) -> Complex64 + Sync) -> Complex64 {
    let radial: Vec<(f64, f64)> = {
        let panels = (reach / 0.2).ceil() as usize;
        let h = reach / panels as f64;
        let gl = gauss_legendre(8);
        (0..panels)
            .flat_map(|p| gl.iter().map(move |(t, w)| (h * (p as f64 + 0.5 + 0.5 * t), 0.5 * h * w)))
            .collect()
    };
    let polar = gauss_legendre(40);
    let n_phi = 48;
    let half = |c: Vec3, other: Vec3| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(ct, wt) in &polar {
            let st = (1.0 - ct * ct).sqrt();
            for j in 0..n_phi {
                let ph = 2.0 * PI * j as f64 / n_phi as f64;
                let dir = [st * ph.cos(), st * ph.sin(), ct];
                for &(s, ws) in &radial {
                    let y = [c[0] + s * dir[0], c[1] + s * dir[1], c[2] + s * dir[2]];
                    let a = dist(y, c).powi(6);
                    let b = dist(y, other).powi(6);
                    let part = b / (a + b);
                    if part == 0.0 {
                        continue;
                    }
                    acc += f(y) * (part * s * s * ws * wt);
                }
            }
        }
        acc * (2.0 * PI / n_phi as f64)
    };
    half(x, z) + half(z, x)
}

fn vector(v: KernelValue) -> [Complex64; 3] {
    match v {
        KernelValue::Vector(c) => c,
        KernelValue::Scalar(_) => unreachable!(),
    }
}

fn scalar(v: KernelValue) -> Complex64 {
    match v {
        KernelValue::Scalar(c) => c,
        KernelValue::Vector(_) => unreachable!(),
    }
}

fn cdot(a: [Complex64; 3], b: Vec3) -> Complex64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Kernel of the named resolvent product at `(x, z)`, built from the point
/// kernels of `R0`, its gradient and its `lambda`-derivative.
pub fn direct_part(name: &str, lambda: f64, u: &PotentialSpec, us: &PotentialSpec, x: Vec3, z: Vec3, reach: f64) -> Complex64 {
    let l = Complex64::new(lambda, 0.0);
    let k = |kind, a: Vec3, b: Vec3| resolvent_kernel(kind, l, a, b).unwrap();
    let a_sharp = us.vector_value(z);
    let v_sharp = us.scalar_value(z);
    use ResolventKernelKind::*;
    oscillatory_3d(x, z, reach, |y| {
        if dist(y, x) < 1e-14 || dist(y, z) < 1e-14 {
            return Complex64::new(0.0, 0.0);
        }
        let a = u.vector_value(y);
        let v = u.scalar_value(y);
        let grad_x = || cdot(vector(k(R0Grad, x, y)), a);
        let grad_y = || cdot(vector(k(R0Grad, y, z)), a_sharp);
        match name {
            "T1" => grad_x() * grad_y(),
            "TTILDE" => grad_x() * scalar(k(R0, y, z)),
            "T3" => scalar(k(R0, x, y)) * v * grad_y(),
            "T4" => scalar(k(R0, x, y)) * v * scalar(k(R0, y, z)) * v_sharp,
            "TTILDE1" => cdot(vector(k(GradDLambdaR0, x, y)), a) * scalar(k(R0, y, z)),
            "TTILDE2" => grad_x() * scalar(k(DLambdaR0, y, z)),
            "T11" => cdot(vector(k(GradDLambdaR0, x, y)), a) * grad_y(),
            "T12" => grad_x() * cdot(vector(k(GradDLambdaR0, y, z)), a_sharp),
            _ => panic!("unknown part {name}"),
        }
    })
}

pub fn random_cloud(rng: &mut impl Rng, m: usize) -> PointCloud {
    let points = (0..m).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let weights = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    PointCloud::new(points, weights).unwrap()
}

/// Dense random kernel whose density vanishes beyond `support` grid points.
pub fn random_kernel(rng: &mut impl Rng, grid: &RhoGrid, out: &PointCloud, inp: &PointCloud, support: usize) -> RhoKernel {
    let mut k = RhoKernel::zeros(grid.clone(), out.clone(), inp.clone());
    let blk = out.len() * inp.len();
    for (idx, v) in k.values.iter_mut().enumerate() {
        if idx / blk < support {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    k
}

/// Composition by the defining sum over `(rho_1, rho_2, y)`, densities only.
pub fn brute_compose(t: &RhoKernel, s: &RhoKernel) -> Vec<Complex64> {
    let n = t.rho.len();
    let h = t.rho.step.unwrap();
    let (p, q, r) = (t.out_cloud.len(), t.in_cloud.len(), s.in_cloud.len());
    let mut out = vec![Complex64::new(0.0, 0.0); n * p * r];
    for k1 in 0..n {
        for k2 in 0..n {
            if k1 + k2 >= n {
                continue;
            }
            for z in 0..p {
                for y in 0..q {
                    for x in 0..r {
                        out[(k1 + k2) * p * r + z * r + x] += h
                            * t.values[k1 * p * q + z * q + y]
                            * t.in_cloud.weights[y]
                            * s.values[k2 * q * r + y * r + x];
                    }
                }
            }
        }
    }
    out
}

/// RK4 integration of `u'' = (l(l+1)/r^2 - v0 - e) u` across the well
/// `r < radius`, started at `u = r^(l+1)`. Returns `(u, u', sign changes)`.
fn shoot_inside(v0: f64, radius: f64, l: usize, e: f64) -> (f64, f64, usize) {
    let steps = 20000;
    let r_start = 1e-6 * radius;
    let h = (radius - r_start) / steps as f64;
    let ll = (l * (l + 1)) as f64;
    let rhs = |r: f64, y: [f64; 2]| [y[1], (ll / (r * r) - v0 - e) * y[0]];
    let mut r = r_start;
    let mut y = [r.powi(l as i32 + 1), (l as f64 + 1.0) * r.powi(l as i32)];
    let mut nodes = 0;
    for _ in 0..steps {
        let k1 = rhs(r, y);
        let k2 = rhs(r + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = rhs(r + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        let next = [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        if next[0].signum() != y[0].signum() {
            nodes += 1;
        }
        y = next;
        r += h;
    }
    let s = y[0].abs().max(y[1].abs());
    (y[0] / s, y[1] / s, nodes)
}

/// Bound states of `-Delta - v0 * 1_{|x| < radius}` with angular momentum `l`,
/// by the node count of the zero-energy solution.
pub fn well_count_l(v0: f64, radius: f64, l: usize) -> usize {
    let (u, du, mut nodes) = shoot_inside(v0, radius, l, 0.0);
    // outside: u = a r^(l+1) + b r^(-l)
    let lf = l as f64;
    let rl1 = radius.powf(lf + 1.0);
    let rml = radius.powf(-lf);
    let det = rl1 * (-lf * rml / radius) - rml * ((lf + 1.0) * rl1 / radius);
    let a = (u * (-lf * rml / radius) - rml * du) / det;
    let b = (rl1 * du - (lf + 1.0) * rl1 / radius * u) / det;
    if a != 0.0 && -b / a > radius.powf(2.0 * lf + 1.0) {
        nodes += 1;
    }
    nodes
}

/// Total bound-state count with multiplicity `2l + 1`.
pub fn well_count(v0: f64, radius: f64) -> usize {
    let mut total = 0;
    for l in 0.. {
        let c = well_count_l(v0, radius, l);
        if c == 0 && (l as f64) * (l as f64 + 1.0) > v0 * radius * radius {
            break;
        }
        total += (2 * l + 1) * c;
    }
    total
}

/// Ground-state energy of the s-wave well by shooting in `kappa` against the
/// exterior log-derivative `-kappa`.
pub fn well_ground_energy(v0: f64, radius: f64) -> Option<f64> {
    if well_count_l(v0, radius, 0) == 0 {
        return None;
    }
    let mismatch = |kappa: f64| {
        let (u, du, nodes) = shoot_inside(v0, radius, 0, -kappa * kappa);
        (du + kappa * u, nodes)
    };
    // the ground state has no interior node
    let (mut lo, mut hi) = (1e-9, v0.sqrt() * (1.0 - 1e-12));
    let f_hi = mismatch(hi).0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let (m, nodes) = mismatch(mid);
        if nodes == 0 && m.signum() == f_hi.signum() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let k = 0.5 * (lo + hi);
    Some(-k * k)
}

/// Smooth test integrand with analytic gradient.
pub struct Integrand {
    pub f: fn(Vec3) -> f64,
    pub grad: fn(Vec3) -> Vec3,
}

fn g0(y: Vec3) -> f64 {
    (-((y[0] - 0.4).powi(2) + (y[1] + 0.3).powi(2) + y[2].powi(2))).exp()
}
fn dg0(y: Vec3) -> Vec3 {
    let v = g0(y);
    [-2.0 * (y[0] - 0.4) * v, -2.0 * (y[1] + 0.3) * v, -2.0 * y[2] * v]
}
fn g1(y: Vec3) -> f64 {
    (-(y[0] * y[0] / 2.0 + y[1] * y[1] + 2.0 * y[2] * y[2])).exp()
}
fn dg1(y: Vec3) -> Vec3 {
    let v = g1(y);
    [-y[0] * v, -2.0 * y[1] * v, -4.0 * y[2] * v]
}
fn g2(y: Vec3) -> f64 {
    (1.0 + y[0] * y[1] + y[2] * y[2]) * (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]) / 1.5).exp()
}
fn dg2(y: Vec3) -> Vec3 {
    let e = (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]) / 1.5).exp();
    let p = 1.0 + y[0] * y[1] + y[2] * y[2];
    [
        (y[1] - p * y[0] / 0.75) * e,
        (y[0] - p * y[1] / 0.75) * e,
        (2.0 * y[2] - p * y[2] / 0.75) * e,
    ]
}
fn g3(y: Vec3) -> f64 {
    y[0].cos() * (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])).exp()
}
fn dg3(y: Vec3) -> Vec3 {
    let e = (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])).exp();
    let c = y[0].cos();
    [(-y[0].sin() - 2.0 * y[0] * c) * e, -2.0 * y[1] * c * e, -2.0 * y[2] * c * e]
}
fn g4(y: Vec3) -> f64 {
    g0([y[0] + 1.0, y[1] - 0.5, y[2] + 0.8]) * 0.5 + g1([y[2], y[0], y[1]])
}
fn dg4(y: Vec3) -> Vec3 {
    let a = dg0([y[0] + 1.0, y[1] - 0.5, y[2] + 0.8]);
    let b = dg1([y[2], y[0], y[1]]);
    [0.5 * a[0] + b[1], 0.5 * a[1] + b[2], 0.5 * a[2] + b[0]]
}

pub fn corpus() -> Vec<Integrand> {
    vec![
        Integrand { f: g0, grad: dg0 },
        Integrand { f: g1, grad: dg1 },
        Integrand { f: g2, grad: dg2 },
        Integrand { f: g3, grad: dg3 },
        Integrand { f: g4, grad: dg4 },
    ]
}
