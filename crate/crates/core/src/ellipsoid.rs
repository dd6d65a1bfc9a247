//! Elliptical coordinates around two foci `x` and `z`.
//!
//! The level sets `Sigma_rho = { y : |x - y| + |y - z| = rho }` are prolate
//! ellipsoids. Points are parametrized by `(rho, theta, phi)`; surface
//! integrals are computed in `t = cos(theta)`, where the Jacobian
//! `J dtheta = (rho^2 - r^2 t^2) dt` is polynomial.
//!
//! The foliation of `R^3` by these surfaces carries a factor `1/8`:
//! `dy = J drho dtheta dphi / 8`.

use crate::error::{Error, Result};
use crate::grid::Grid3D;
use crate::norms::{jlog, llogl_weighted, KatoSearch, KatoWeight, DEFAULT_STRIDE};
use crate::potential::{add, dot, norm, scale, sub, PotentialSpec, Vec3};
use crate::quad::{adaptive, adaptive_c, gauss_legendre_on};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Rotated frame with the foci on the first axis and their midpoint at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipsoidFrame {
    pub x: Vec3,
    pub z: Vec3,
    pub r: f64,
    pub center: Vec3,
    /// Orthonormal frame axes in world coordinates; `axes[0]` points from `x` to `z`.
    pub axes: [Vec3; 3],
}

impl EllipsoidFrame {
    pub fn new(x: Vec3, z: Vec3) -> Self {
        let d = sub(z, x);
        let r = norm(d);
        let e1 = if r > 0.0 { scale(d, 1.0 / r) } else { [1.0, 0.0, 0.0] };
        // complete with the coordinate axis least aligned with e1
        let k = (0..3)
            .min_by(|&a, &b| e1[a].abs().partial_cmp(&e1[b].abs()).unwrap())
            .unwrap();
        let mut u = [0.0; 3];
        u[k] = 1.0;
        let u = sub(u, scale(e1, e1[k]));
        let e2 = scale(u, 1.0 / norm(u));
        let e3 = [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ];
        Self { x, z, r, center: scale(add(x, z), 0.5), axes: [e1, e2, e3] }
    }

    /// Frame direction to world direction.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let mut w = [0.0; 3];
        for (i, a) in self.axes.iter().enumerate() {
            for c in 0..3 {
                w[c] += v[i] * a[c];
            }
        }
        w
    }

    pub fn to_world(&self, y: Vec3) -> Vec3 {
        add(self.center, self.rotate(y))
    }

    pub fn to_frame(&self, w: Vec3) -> Vec3 {
        let d = sub(w, self.center);
        [dot(d, self.axes[0]), dot(d, self.axes[1]), dot(d, self.axes[2])]
    }

    /// Frame of the dilated foci `s x`, `s z`.
    pub fn dilated(&self, s: f64) -> Self {
        Self::new(scale(self.x, s), scale(self.z, s))
    }

    /// Distance from a world point to the `x`-`z` axis.
    pub fn axis_distance(&self, w: Vec3) -> f64 {
        let y = self.to_frame(w);
        y[1].hypot(y[2])
    }
}

/// A point of `Sigma_rho` with the derived quantities used by the kernel estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfacePoint {
    pub rho: f64,
    pub theta: f64,
    pub phi: f64,
    pub cos_theta: f64,
    pub sin_theta: f64,
    /// Frame coordinates.
    pub y: Vec3,
    pub world: Vec3,
    pub r1: f64,
    pub r2: f64,
    /// `(rho^2 - r^2 cos^2 theta) sin theta`.
    pub jac: f64,
    /// `dy/drho` at fixed angles, frame coordinates.
    pub v: Vec3,
    pub v_world: Vec3,
    /// `d^2 y / drho^2` at fixed angles, world coordinates.
    pub acc_world: Vec3,
    /// Distance to the focal axis.
    pub big_r: f64,
    /// `x - y` in world coordinates.
    pub vec_r1: Vec3,
    /// `y - z` in world coordinates.
    pub vec_r2: Vec3,
    r: f64,
}

impl SurfacePoint {
    /// `2 rho / (rho^2 - r^2 cos^2 theta) = 1/(2 r1) + 1/(2 r2)`.
    pub fn dif_factor(&self) -> f64 {
        0.5 / self.r1 + 0.5 / self.r2
    }

    /// Jacobian in the `(t, phi)` parametrization, `J / sin theta`.
    pub fn jac_t(&self) -> f64 {
        self.rho * self.rho - self.r * self.r * self.cos_theta * self.cos_theta
    }

    /// World coordinates as second-order jets along the `rho`-flow.
    pub fn y_jet(&self) -> [Jet2; 3] {
        [0, 1, 2].map(|c| Jet2::new(self.world[c], self.v_world[c], self.acc_world[c]))
    }

    pub fn r1_jet(&self) -> Jet2 {
        Jet2::new(self.r1, 0.5, 0.0)
    }

    pub fn r2_jet(&self) -> Jet2 {
        Jet2::new(self.r2, 0.5, 0.0)
    }

    /// `J / sin theta` as a jet in `rho`.
    pub fn jac_t_jet(&self) -> Jet2 {
        Jet2::new(self.jac_t(), 2.0 * self.rho, 2.0)
    }
}

/// Maps `(rho, theta, phi)` to a point of `Sigma_rho`.
pub fn elliptical_map(frame: &EllipsoidFrame, rho: f64, theta: f64, phi: f64) -> Result<SurfacePoint> {
    if rho <= frame.r {
        return Err(Error::DegenerateEllipsoid { rho, r: frame.r });
    }
    let (sp, cp) = phi.sin_cos();
    Ok(map_unchecked(frame, rho, [theta, theta.cos(), theta.sin()], [phi, cp, sp]))
}

/// `th = [theta, cos, sin]`, `ph = [phi, cos, sin]`.
pub(crate) fn map_unchecked(frame: &EllipsoidFrame, rho: f64, th: [f64; 3], ph: [f64; 3]) -> SurfacePoint {
    let [theta, ct, st] = th;
    let [phi, cp, sp] = ph;
    let r = frame.r;
    let q = (rho * rho - r * r).sqrt();
    let a = 0.5 * rho;
    let b = 0.5 * q;
    let y = [a * ct, b * st * cp, b * st * sp];
    let v = [0.5 * ct, rho * st * cp / (2.0 * q), rho * st * sp / (2.0 * q)];
    let curv = -r * r / (2.0 * q * q * q);
    let acc = [0.0, curv * st * cp, curv * st * sp];
    let world = frame.to_world(y);
    let r1 = 0.5 * (rho + r * ct);
    let r2 = 0.5 * (rho - r * ct);
    SurfacePoint {
        rho,
        theta,
        phi,
        cos_theta: ct,
        sin_theta: st,
        y,
        world,
        r1,
        r2,
        jac: (rho * rho - r * r * ct * ct) * st,
        v,
        v_world: frame.rotate(v),
        acc_world: frame.rotate(acc),
        big_r: b * st,
        vec_r1: sub(frame.x, world),
        vec_r2: sub(world, frame.z),
        r,
    }
}

/// Surface quadrature parameters: adaptive Gauss-Kronrod in `t = cos theta`,
/// periodic trapezoid in `phi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceRule {
    pub n_phi: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: usize,
}

impl Default for SurfaceRule {
    fn default() -> Self {
        Self { n_phi: 64, abs_tol: 1e-14, rel_tol: 1e-10, max_depth: 30 }
    }
}

impl SurfaceRule {
    /// `int_{-1}^{1} int_0^{2 pi} g dphi dt` with no Jacobian applied.
    pub fn integrate_t_phi_c(
        &self,
        frame: &EllipsoidFrame,
        rho: f64,
        g: impl Fn(&SurfacePoint) -> Complex64,
    ) -> Result<Complex64> {
        if rho <= frame.r {
            return Err(Error::DegenerateEllipsoid { rho, r: frame.r });
        }
        let dphi = 2.0 * PI / self.n_phi as f64;
        let phis: Vec<[f64; 3]> = (0..self.n_phi)
            .map(|k| {
                let phi = k as f64 * dphi;
                [phi, phi.cos(), phi.sin()]
            })
            .collect();
        let row = |t: f64| {
            let th = [t.acos(), t, (1.0 - t * t).max(0.0).sqrt()];
            phis.iter()
                .map(|&ph| g(&map_unchecked(frame, rho, th, ph)))
                .sum::<Complex64>()
                * dphi
        };
        Ok(adaptive_c(row, -1.0, 1.0, self.abs_tol, self.rel_tol, self.max_depth))
    }

    pub fn surface_integral_c(
        &self,
        frame: &EllipsoidFrame,
        rho: f64,
        f: impl Fn(&SurfacePoint) -> Complex64,
    ) -> Result<Complex64> {
        self.integrate_t_phi_c(frame, rho, |p| f(p) * p.jac_t())
    }
}

/// `int_{Sigma_rho} f J dtheta dphi`.
pub fn surface_integral(
    frame: &EllipsoidFrame,
    rho: f64,
    f: impl Fn(&SurfacePoint) -> f64,
) -> Result<f64> {
    surface_integral_c(frame, rho, |p| Complex64::new(f(p), 0.0)).map(|v| v.re)
}

pub fn surface_integral_c(
    frame: &EllipsoidFrame,
    rho: f64,
    f: impl Fn(&SurfacePoint) -> Complex64,
) -> Result<Complex64> {
    SurfaceRule::default().surface_integral_c(frame, rho, f)
}

/// Relative width of the excluded band `rho in (r, r (1 + eps))`.
pub const DEGENERATE_BAND: f64 = 1e-8;

/// `int_{rho < rho_max} f`, integrated surface by surface.
///
/// Substituting `rho = sqrt(r^2 + s^2)` removes the square-root behaviour of
/// the semiaxis `b` at the focal segment.
pub fn foliated_integral(
    frame: &EllipsoidFrame,
    f: impl Fn(Vec3) -> f64,
    rho_max: f64,
) -> Result<f64> {
    let r = frame.r;
    let rho_min = (r * (1.0 + DEGENERATE_BAND)).max(1e-12);
    if rho_max <= rho_min {
        return Ok(0.0);
    }
    let s0 = (rho_min * rho_min - r * r).sqrt();
    let s1 = (rho_max * rho_max - r * r).sqrt();
    // the inner rule must stay well below the outer tolerance, otherwise
    // quadrature noise from jumps in f drives the outer bisection to full depth
    let rule = SurfaceRule { rel_tol: 1e-11, max_depth: 40, ..SurfaceRule::default() };
    let mut failure = None;
    let val = adaptive(
        |s| {
            let rho = (r * r + s * s).sqrt();
            match rule.surface_integral_c(frame, rho, |p| Complex64::new(f(p.world), 0.0)) {
                Ok(v) => v.re * s / rho / 8.0,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        s0,
        s1,
        1e-14,
        1e-8,
        30,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(val),
    }
}

/// `d/drho int_{Sigma_rho} f J` through the differentiation formula; `df` is
/// the derivative of `f` along the `rho`-flow at fixed angles.
pub fn d_rho_surface_integral(
    frame: &EllipsoidFrame,
    rho: f64,
    f: impl Fn(&SurfacePoint) -> f64,
    df: impl Fn(&SurfacePoint) -> f64,
) -> Result<f64> {
    surface_integral(frame, rho, |p| df(p) + p.dif_factor() * f(p))
}

/// Value with first and second derivative along a one-parameter flow.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    pub fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    pub fn recip(self) -> Self {
        let g = 1.0 / self.v;
        Self {
            v: g,
            d1: -self.d1 * g * g,
            d2: 2.0 * self.d1 * self.d1 * g * g * g - self.d2 * g * g,
        }
    }

    pub fn powi(self, n: i32) -> Self {
        let nf = n as f64;
        let p1 = self.v.powi(n - 1);
        let p2 = if n >= 2 || self.v != 0.0 { self.v.powi(n - 2) } else { 0.0 };
        Self {
            v: self.v.powi(n),
            d1: nf * p1 * self.d1,
            d2: nf * (nf - 1.0) * p2 * self.d1 * self.d1 + nf * p1 * self.d2,
        }
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Self {
            v: s,
            d1: self.d1 / (2.0 * s),
            d2: self.d2 / (2.0 * s) - self.d1 * self.d1 / (4.0 * s * s * s),
        }
    }

    /// Derivative of order `k` in `0..=2`.
    pub fn deriv(self, k: usize) -> f64 {
        match k {
            0 => self.v,
            1 => self.d1,
            _ => self.d2,
        }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        Jet2::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2::new(-self.v, -self.d1, -self.d2)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, s: f64) -> Jet2 {
        Jet2::new(self.v * s, self.d1 * s, self.d2 * s)
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}

/// Dot product of jet vectors.
pub fn jet_dot(a: &[Jet2; 3], b: &[Jet2; 3]) -> Jet2 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// The cylinder and ellipsoid inequalities checked by [`lemma_harness`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LemmaId {
    L1,
    L2,
    #[serde(rename = "L2LOG")]
    L2Log,
    L3,
    #[serde(rename = "L3LOG")]
    L3Log,
}

impl LemmaId {
    pub const ALL: [LemmaId; 5] = [LemmaId::L1, LemmaId::L2, LemmaId::L2Log, LemmaId::L3, LemmaId::L3Log];

    pub fn name(self) -> &'static str {
        match self {
            LemmaId::L1 => "L1",
            LemmaId::L2 => "L2",
            LemmaId::L2Log => "L2LOG",
            LemmaId::L3 => "L3",
            LemmaId::L3Log => "L3LOG",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaResult {
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when both sides vanish.
    pub ratio: Option<f64>,
}

/// Radius of the cylinder in the logarithmic lemmas.
pub const LEMMA_R0: f64 = 1.0;

/// Both sides of one inequality for `f`, with `|f|^2 = V^2 + |A|^2` and
/// `|grad f|^2 = |grad V|^2 + |grad A|_F^2`.
///
/// * `L1`: `int_{rho <= 2r} |f| / (2 r R)` against `||f||_{K2}`.
/// * `L2`: `int |f| / R` against `||grad f||_1`.
/// * `L2LOG`: `int_{R <= R0} |f| |log R| / R` against
///   `||grad f||_{LlogL} + <log R0> ||grad f||_1`.
/// * `L3`: `int |f| / (r1 R)` against `int |grad f| / R`.
/// * `L3LOG`: the `L3` pair restricted to the cylinder `R <= R0` with a
///   `|log R|` weight, plus `<log R0> int_cyl |grad f| / R` on the right.
///
/// `R` is the distance to the focal axis and `r1 = |y - x|`.
pub fn lemma_harness(id: LemmaId, f: &PotentialSpec, frame: &EllipsoidFrame) -> Result<LemmaResult> {
    lemma_harness_with(id, f, frame, &LemmaRule::default())
}

/// Resolution of the lemma quadratures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaRule {
    /// Gauss panels along each coordinate span.
    pub panels: usize,
    pub n_phi: usize,
    /// Grid size of the sampled `K2` norm.
    pub kato_n: usize,
}

impl Default for LemmaRule {
    fn default() -> Self {
        Self { panels: 12, n_phi: 64, kato_n: 64 }
    }
}

impl LemmaRule {
    /// Twice the panels, angles and grid points per axis.
    pub fn doubled(&self) -> Self {
        Self { panels: 2 * self.panels, n_phi: 2 * self.n_phi, kato_n: 2 * self.kato_n }
    }
}

pub fn lemma_harness_with(id: LemmaId, f: &PotentialSpec, frame: &EllipsoidFrame, rule: &LemmaRule) -> Result<LemmaResult> {
    if rule.panels == 0 || rule.n_phi == 0 || rule.kato_n < 4 {
        return Err(Error::Precondition("lemma rule too coarse".into()));
    }
    if id != LemmaId::L1 && (f.scalar_order_available() < 1 || f.vector_order_available() < 1) {
        return Err(Error::UnsupportedDerivative(format!(
            "{} needs the gradient of an indicator term",
            id.name()
        )));
    }
    if f.is_zero() {
        return Ok(LemmaResult { lhs: 0.0, rhs: 0.0, ratio: None });
    }
    let support = f.support_radius(1e-16);
    let cyl = CylinderDomain::around_support(frame, support, *rule);
    let (lhs, rhs) = match id {
        LemmaId::L1 => {
            if frame.r <= 0.0 {
                return Err(Error::DegenerateEllipsoid { rho: 0.0, r: 0.0 });
            }
            let r = frame.r;
            let b = 3f64.sqrt() * r / 2.0;
            let dom = CylinderDomain {
                y1: vec![-r, -0.5 * r, 0.5 * r, r],
                r_max: Box::new(move |y1: f64| b * (1.0 - (y1 / r).powi(2)).max(0.0).sqrt()),
                rule: *rule,
            };
            let lhs = dom.integrate(frame, |w, _, _| magnitude(f, w) / (2.0 * r));
            (lhs, kato_k2(f, support, rule.kato_n)?)
        }
        LemmaId::L2 => {
            let lhs = cyl.integrate(frame, |w, _, _| magnitude(f, w));
            let rhs = cartesian_integrate(support, rule, |w| grad_magnitude(f, w)).0;
            (lhs, rhs)
        }
        LemmaId::L2Log => {
            let dom = cyl.capped(LEMMA_R0);
            let lhs = dom.integrate(frame, |w, rr, _| magnitude(f, w) * rr.ln().abs());
            let (l1, llogl) = cartesian_integrate(support, rule, |w| grad_magnitude(f, w));
            (lhs, llogl + jlog(LEMMA_R0) * l1)
        }
        LemmaId::L3 => {
            let lhs = spherical_at_x(frame, support, rule, |w| magnitude(f, w));
            let rhs = cyl.integrate(frame, |w, _, _| grad_magnitude(f, w));
            (lhs, rhs)
        }
        LemmaId::L3Log => {
            let dom = cyl.capped(LEMMA_R0);
            let lhs = dom.integrate(frame, |w, rr, y1| {
                let r1 = (y1 + 0.5 * frame.r).hypot(rr);
                magnitude(f, w) * rr.ln().abs() / r1
            });
            let a = dom.integrate(frame, |w, rr, _| grad_magnitude(f, w) * rr.ln().abs());
            let b = dom.integrate(frame, |w, _, _| grad_magnitude(f, w));
            (lhs, a + jlog(LEMMA_R0) * b)
        }
    };
    if !(lhs.is_finite() && rhs.is_finite()) {
        return Err(Error::InvalidField(format!("{} quadrature not finite", id.name())));
    }
    let ratio = if rhs > 0.0 { Some(lhs / rhs) } else { None };
    Ok(LemmaResult { lhs, rhs, ratio })
}

fn magnitude(f: &PotentialSpec, w: Vec3) -> f64 {
    let a = f.vector_value(w);
    f.scalar_value(w).hypot(norm(a))
}

fn grad_magnitude(f: &PotentialSpec, w: Vec3) -> f64 {
    let gv = f.scalar_gradient(w).map(norm).unwrap_or(f64::NAN);
    let ja = f.vector_jacobian(w).map(|j| j.iter().map(|row| dot(*row, *row)).sum::<f64>());
    (gv * gv + ja.unwrap_or(f64::NAN)).sqrt()
}

/// `||f||_{K2}` from cell-averaged samples on a box around the support.
fn kato_k2(f: &PotentialSpec, support: f64, n: usize) -> Result<f64> {
    let grid = Grid3D::new(n, 2.2 * support)?;
    let h = grid.h();
    let vals: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let w = grid.point(idx);
            let v: f64 = f.scalar.iter().map(|b| b.cell_average(w, h)).sum();
            let a = [0, 1, 2].map(|c| f.vector[c].iter().map(|b| b.cell_average(w, h)).sum::<f64>());
            v.hypot(norm(a))
        })
        .collect();
    Ok(KatoSearch::new(grid, &vals, KatoWeight::K2).sup(DEFAULT_STRIDE).0)
}

const NODES: usize = 6;

/// Composite Gauss-Legendre rule through the given breakpoints with panels
/// no longer than `max_len`.
fn composite(breaks: &[f64], max_len: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let m = (len / max_len).ceil().max(1.0) as usize;
        for k in 0..m {
            let a = w[0] + len * k as f64 / m as f64;
            let b = w[0] + len * (k + 1) as f64 / m as f64;
            out.extend(gauss_legendre_on(NODES, a, b));
        }
    }
    out
}

/// Radial rule on `[0, r_max]`: uniform outer panels and dyadic grading at the axis.
fn radial_rule(r_max: f64, panels: usize) -> Vec<(f64, f64)> {
    let mut breaks: Vec<f64> = (0..=panels).map(|k| r_max * 2f64.powi(-(k as i32))).collect();
    breaks.extend((1..4).map(|k| r_max * k as f64 / 4.0));
    breaks.push(0.0);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    composite(&breaks, r_max * 3.0 / panels as f64)
}

/// Region `{ y1 in [y1_lo, y1_hi], R <= r_max(y1) }` in frame cylindrical coordinates.
struct CylinderDomain {
    y1: Vec<f64>,
    r_max: Box<dyn Fn(f64) -> f64 + Sync>,
    rule: LemmaRule,
}

impl CylinderDomain {
    fn around_support(frame: &EllipsoidFrame, support: f64, rule: LemmaRule) -> Self {
        let p = frame.to_frame([0.0; 3]);
        let rm = p[1].hypot(p[2]) + support;
        let (lo, hi) = (p[0] - support, p[0] + support);
        let mut y1 = vec![lo, hi];
        for foc in [-0.5 * frame.r, 0.5 * frame.r] {
            if foc > lo && foc < hi {
                y1.push(foc);
            }
        }
        y1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self { y1, r_max: Box::new(move |_| rm), rule }
    }

    fn capped(self, cap: f64) -> Self {
        let inner = self.r_max;
        Self { y1: self.y1, r_max: Box::new(move |y1| inner(y1).min(cap)), rule: self.rule }
    }

    /// `int g dR dphi dy1`; `g` receives the world point, `R` and `y1`.
    fn integrate(&self, frame: &EllipsoidFrame, g: impl Fn(Vec3, f64, f64) -> f64 + Sync) -> f64 {
        let span = self.y1.last().unwrap() - self.y1[0];
        let (panels, n_phi) = (self.rule.panels, self.rule.n_phi);
        let rule = composite(&self.y1, span / panels as f64);
        let dphi = 2.0 * PI / n_phi as f64;
        rule.par_iter()
            .map(|&(y1, wy)| {
                let rm = (self.r_max)(y1);
                if rm <= 0.0 {
                    return 0.0;
                }
                let mut acc = 0.0;
                for (rr, wr) in radial_rule(rm, panels) {
                    for k in 0..n_phi {
                        let (s, c) = (k as f64 * dphi).sin_cos();
                        let w = frame.to_world([y1, rr * c, rr * s]);
                        acc += wr * g(w, rr, y1);
                    }
                }
                acc * wy * dphi
            })
            .sum()
    }
}

/// `int g dr1 dtheta1 dphi1` in spherical coordinates at `x` with polar axis towards `z`.
fn spherical_at_x(frame: &EllipsoidFrame, support: f64, rule: &LemmaRule, g: impl Fn(Vec3) -> f64 + Sync) -> f64 {
    let reach = norm(frame.x) + support;
    let radial = composite(&[0.0, reach], reach / rule.panels as f64);
    let polar = composite(&[0.0, PI], PI / rule.panels as f64);
    let n_phi = rule.n_phi;
    let dphi = 2.0 * PI / n_phi as f64;
    radial
        .par_iter()
        .map(|&(r1, w1)| {
            let mut acc = 0.0;
            for &(th, wt) in &polar {
                let (st, ct) = th.sin_cos();
                for k in 0..n_phi {
                    let (s, c) = (k as f64 * dphi).sin_cos();
                    let dir = frame.rotate([ct, st * c, st * s]);
                    acc += wt * g(add(frame.x, scale(dir, r1)));
                }
            }
            acc * w1 * dphi
        })
        .sum()
}

/// `(||g||_1, ||g||_{LlogL})` over the cube `[-support, support]^3`.
fn cartesian_integrate(support: f64, lr: &LemmaRule, g: impl Fn(Vec3) -> f64 + Sync) -> (f64, f64) {
    let rule = composite(&[-support, support], 2.0 * support / lr.panels as f64);
    let samples: Vec<(f64, f64)> = rule
        .par_iter()
        .flat_map_iter(|&(a, wa)| {
            let rule = &rule;
            let g = &g;
            rule.iter().flat_map(move |&(b, wb)| {
                rule.iter().map(move |&(c, wc)| (g([a, b, c]), wa * wb * wc))
            })
        })
        .collect();
    let l1 = samples.iter().map(|(v, w)| v * w).sum();
    (l1, llogl_weighted(samples.into_iter()))
}
